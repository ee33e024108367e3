//! The synth -> train -> eval -> plot workflow through the library entry
//! points behind the CLI, on a very small budget.

use gemmnet::data::Split;
use gemmnet::harness::{cmd_eval, cmd_plot, cmd_synth, cmd_train, EvalOptions, RunConfig, SynthOptions, TrainOptions};
use gemmnet::hyfex::ArchConfig;

fn main() -> gemmnet::Result<()> {
    let root = std::env::temp_dir().join("gemmnet_cli_workflow");
    let _ = std::fs::remove_dir_all(&root);
    let data = root.join("data");
    cmd_synth(&SynthOptions {
        n_train: 2,
        n_val: 1,
        n_test: 1,
        tile_size: 128,
        ..SynthOptions::new(0, &data)
    })?;

    let mut cfg = RunConfig::from_toml(&format!(
        "max_steps = 40\neval_every = 20\noutput_dir = '{}'\n[dataset]\nroot_dir = '{}'\npatch_size = 64\nstride = 64\n",
        root.join("run").display(),
        data.display()
    ))?;
    cfg.model.arch = ArchConfig::tiny();
    let summary = cmd_train(&TrainOptions { config: cfg, resume: None })?;
    println!("trained {} steps", summary.steps);

    let mut opts = EvalOptions::new(summary.run_dir.join("last.ckpt"), root.join("eval"));
    opts.split = Split::Test;
    print!("{}", cmd_eval(&opts)?.table);
    for p in cmd_plot(&summary.run_dir, None)? {
        println!("wrote {}", p.display());
    }
    Ok(())
}
