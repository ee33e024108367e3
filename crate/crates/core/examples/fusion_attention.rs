//! Fuses two pyramids: conv fusion at levels 1-4, token attention at the
//! bottleneck. Prints how much attention RGIR tokens pay to NDSM tokens.

use candle_core::{DType, Device, Tensor, D};
use gemmnet::hyfex::ArchConfig;
use gemmnet::hyfma::{AttentionFusion, Hyfma};
use gemmnet::nn::ParamStore;

fn main() -> gemmnet::Result<()> {
    let arch = ArchConfig::tiny();
    let widths = arch.widths();
    let dev = Device::Cpu;
    let mut store = ParamStore::new(0, DType::F32, &dev);

    let hyfma = Hyfma::new(&mut store.root().pp("fusion"), &widths, arch.fusion_depth, Some(&arch.transformer()))?;
    let a: Vec<Tensor> = (0..5)
        .map(|i| Tensor::randn(0f32, 1.0, (1, widths[i], 64 >> (i + 1), 64 >> (i + 1)), &dev))
        .collect::<candle_core::Result<_>>()?;
    let b: Vec<Tensor> = a.iter().map(|t| t.affine(0.5, 0.1)).collect::<candle_core::Result<_>>()?;
    for level in 1..=4 {
        let u = hyfma.fuse_scale_conv(level, &a[level - 1], &b[level - 1])?;
        println!("level {level}: {:?}", u.dims());
    }
    let u5 = hyfma.fuse_bottleneck(&a[4], &b[4])?;
    println!("level 5: {:?}", u5.dims());

    let attn = AttentionFusion::new(&mut store.root().pp("probe"), widths[4], &arch.transformer())?;
    let (_, weights) = attn.forward_with_weights(&a[4], &b[4])?;
    // weights: [B, heads, 2N, 2N]; first N tokens are RGIR, last N NDSM
    let w = &weights[0];
    let n = w.dim(D::Minus1)? / 2;
    let cross = w.narrow(2, 0, n)?.narrow(3, n, n)?.sum(D::Minus1)?.mean_all()?;
    println!("mean RGIR->NDSM attention mass: {:.3}", cross.to_scalar::<f32>()?);
    Ok(())
}
