//! Procedural stand-in for ISPRS-style scenes.
//!
//! Each modality carries partial information: roofs and roads share grey
//! tones but differ in height, low vegetation and trees share colour but
//! differ in height, and cars are small, low and mostly colourful.

use ndarray::{Array2, Array3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{worker_rng, ModalityBundle};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SyntheticClass {
    Impervious,
    Building,
    LowVegetation,
    Tree,
    Car,
    Clutter,
    Water,
    BareSoil,
}

impl SyntheticClass {
    pub fn name(self) -> &'static str {
        match self {
            SyntheticClass::Impervious => "impervious_surfaces",
            SyntheticClass::Building => "building",
            SyntheticClass::LowVegetation => "low_vegetation",
            SyntheticClass::Tree => "tree",
            SyntheticClass::Car => "car",
            SyntheticClass::Clutter => "clutter",
            SyntheticClass::Water => "water",
            SyntheticClass::BareSoil => "bare_soil",
        }
    }

    // (red, green, infrared)
    fn base_colour(self) -> [f32; 3] {
        match self {
            SyntheticClass::Impervious => [0.45, 0.45, 0.42],
            SyntheticClass::Building => [0.50, 0.42, 0.41],
            SyntheticClass::LowVegetation => [0.30, 0.50, 0.72],
            SyntheticClass::Tree => [0.24, 0.40, 0.64],
            SyntheticClass::Car => [0.80, 0.15, 0.15],
            SyntheticClass::Clutter => [0.55, 0.50, 0.33],
            SyntheticClass::Water => [0.10, 0.20, 0.06],
            SyntheticClass::BareSoil => [0.62, 0.52, 0.40],
        }
    }
}

/// Class list used by [`synth_dataset`] for a given class count; the car-like class is always present.
pub fn class_layout(num_classes: usize) -> Vec<SyntheticClass> {
    use SyntheticClass::*;
    match num_classes {
        2 => vec![Impervious, Car],
        3 => vec![Impervious, Building, Car],
        4 => vec![Impervious, Building, Tree, Car],
        n => {
            let all = [
                Impervious,
                Building,
                LowVegetation,
                Tree,
                Car,
                Clutter,
                Water,
                BareSoil,
            ];
            all[..n.min(all.len())].to_vec()
        }
    }
}

/// Index of the rare car-like class in [`class_layout`].
pub fn rare_class(num_classes: usize) -> usize {
    class_layout(num_classes)
        .iter()
        .position(|c| *c == SyntheticClass::Car)
        .expect("layout always contains the car class")
}

const CAR_PALETTE: [[f32; 3]; 5] = [
    [0.85, 0.12, 0.12],
    [0.12, 0.20, 0.80],
    [0.92, 0.92, 0.90],
    [0.08, 0.08, 0.10],
    [0.85, 0.80, 0.15],
];

struct Canvas {
    size: usize,
    class: Array2<u8>,
    height: Array2<f32>,
    colour: Array3<f32>,
}

impl Canvas {
    fn paint(&mut self, i: usize, j: usize, class: u8, height: f32, colour: [f32; 3]) {
        self.class[[i, j]] = class;
        self.height[[i, j]] = height;
        for (c, v) in colour.iter().enumerate() {
            self.colour[[c, i, j]] = *v;
        }
    }
}

struct SceneBuilder<'a> {
    layout: &'a [SyntheticClass],
    rng: ChaCha8Rng,
    scale: f64,
}

impl SceneBuilder<'_> {
    fn id(&self, class: SyntheticClass) -> Option<u8> {
        self.layout.iter().position(|c| *c == class).map(|i| i as u8)
    }

    fn jitter(&mut self, colour: [f32; 3], amount: f32) -> [f32; 3] {
        let d: f32 = self.rng.gen_range(-amount..amount);
        colour.map(|c| c + d + self.rng.gen_range(-amount..amount) * 0.3)
    }

    fn px(&self, base: f64) -> f64 {
        base * self.scale
    }

    fn blobs(&mut self, canvas: &mut Canvas, class: SyntheticClass, count: (usize, usize), radius: (f64, f64), height: f32) {
        let Some(id) = self.id(class) else { return };
        let n = self.rng.gen_range(count.0..=count.1);
        let s = canvas.size as f64;
        for _ in 0..n {
            let (ci, cj) = (self.rng.gen_range(0.0..s), self.rng.gen_range(0.0..s));
            let r = self.rng.gen_range(self.px(radius.0)..self.px(radius.1));
            let (k, phase) = (self.rng.gen_range(2..6) as f64, self.rng.gen_range(0.0..6.28));
            let colour = self.jitter(class.base_colour(), 0.04);
            let bound = (r * 1.3).ceil() as i64;
            for di in -bound..=bound {
                for dj in -bound..=bound {
                    let (i, j) = (ci as i64 + di, cj as i64 + dj);
                    if i < 0 || j < 0 || i >= canvas.size as i64 || j >= canvas.size as i64 {
                        continue;
                    }
                    let theta = (di as f64).atan2(dj as f64);
                    let rr = r * (1.0 + 0.25 * (k * theta + phase).sin());
                    if ((di * di + dj * dj) as f64) <= rr * rr {
                        canvas.paint(i as usize, j as usize, id, height, colour);
                    }
                }
            }
        }
    }

    fn roads(&mut self, canvas: &mut Canvas) -> Array2<bool> {
        let mut road = Array2::from_elem((canvas.size, canvas.size), false);
        let id = self.id(SyntheticClass::Impervious).unwrap_or(0);
        let colour = SyntheticClass::Impervious.base_colour();
        let s = canvas.size;
        for vertical in [false, true] {
            let n = self.rng.gen_range(1..=2);
            for _ in 0..n {
                let width = self.rng.gen_range(self.px(10.0)..self.px(16.0)).max(3.0) as usize;
                let start = self.rng.gen_range(0..s.saturating_sub(width).max(1));
                for a in start..(start + width).min(s) {
                    for b in 0..s {
                        let (i, j) = if vertical { (b, a) } else { (a, b) };
                        canvas.paint(i, j, id, 0.02, colour);
                        road[[i, j]] = true;
                    }
                }
            }
        }
        road
    }

    fn buildings(&mut self, canvas: &mut Canvas, road: &Array2<bool>) {
        let Some(id) = self.id(SyntheticClass::Building) else { return };
        let n = self.rng.gen_range(3..=6);
        let s = canvas.size as f64;
        for _ in 0..n {
            for _attempt in 0..20 {
                let (hw, hh) = (
                    self.rng.gen_range(self.px(12.0)..self.px(30.0)),
                    self.rng.gen_range(self.px(12.0)..self.px(30.0)),
                );
                let (ci, cj) = (self.rng.gen_range(0.0..s), self.rng.gen_range(0.0..s));
                let angle: f64 = self.rng.gen_range(0.0..std::f64::consts::FRAC_PI_2);
                let (sin, cos) = angle.sin_cos();
                let bound = (hw.hypot(hh)).ceil() as i64;
                let mut cells = Vec::new();
                let mut on_road = 0usize;
                for di in -bound..=bound {
                    for dj in -bound..=bound {
                        let (i, j) = (ci as i64 + di, cj as i64 + dj);
                        if i < 0 || j < 0 || i >= canvas.size as i64 || j >= canvas.size as i64 {
                            continue;
                        }
                        let (u, v) = (di as f64 * cos + dj as f64 * sin, -di as f64 * sin + dj as f64 * cos);
                        if u.abs() <= hh && v.abs() <= hw {
                            on_road += road[[i as usize, j as usize]] as usize;
                            cells.push((i as usize, j as usize, u / hh));
                        }
                    }
                }
                if cells.is_empty() || on_road * 10 > cells.len() {
                    continue;
                }
                let roof = self.rng.gen_range(0.45f32..0.9);
                let colour = self.jitter(SyntheticClass::Building.base_colour(), 0.08);
                for (i, j, u) in cells {
                    // gabled roof: slightly higher along the ridge
                    let h = roof + 0.05 * (1.0 - u.abs() as f32);
                    canvas.paint(i, j, id, h, colour);
                }
                break;
            }
        }
    }

    fn trees(&mut self, canvas: &mut Canvas) {
        let Some(id) = self.id(SyntheticClass::Tree) else { return };
        let building = self.id(SyntheticClass::Building);
        let n = self.rng.gen_range(6..=14);
        let s = canvas.size as f64;
        for _ in 0..n {
            let (ci, cj) = (self.rng.gen_range(0.0..s), self.rng.gen_range(0.0..s));
            let r = self.rng.gen_range(self.px(5.0)..self.px(12.0)).max(2.0);
            let top = self.rng.gen_range(0.3f32..0.65);
            let colour = self.jitter(SyntheticClass::Tree.base_colour(), 0.04);
            let bound = r.ceil() as i64;
            for di in -bound..=bound {
                for dj in -bound..=bound {
                    let (i, j) = (ci as i64 + di, cj as i64 + dj);
                    if i < 0 || j < 0 || i >= canvas.size as i64 || j >= canvas.size as i64 {
                        continue;
                    }
                    let d2 = (di * di + dj * dj) as f64 / (r * r);
                    if d2 > 1.0 || Some(canvas.class[[i as usize, j as usize]]) == building {
                        continue;
                    }
                    let h = top * (0.6 + 0.4 * (1.0 - d2 as f32));
                    canvas.paint(i as usize, j as usize, id, h, colour);
                }
            }
        }
    }

    fn clutter(&mut self, canvas: &mut Canvas) {
        let Some(_) = self.id(SyntheticClass::Clutter) else { return };
        let h = self.rng.gen_range(0.1f32..0.25);
        self.blobs(canvas, SyntheticClass::Clutter, (3, 6), (3.0, 7.0), h);
    }

    fn cars(&mut self, canvas: &mut Canvas) {
        let Some(id) = self.id(SyntheticClass::Car) else { return };
        let impervious = self.id(SyntheticClass::Impervious);
        let long = self.px(8.0).round().max(4.0) as usize;
        let short = self.px(4.0).round().max(2.0) as usize;
        let s = canvas.size;
        let target = (0.015 * (s * s) as f64 / (long * short) as f64).round().max(1.0) as usize;
        let mut placed = 0;
        for _attempt in 0..target * 50 {
            if placed == target {
                break;
            }
            let (h, w) = if self.rng.gen_bool(0.5) { (long, short) } else { (short, long) };
            let i0 = self.rng.gen_range(0..s - h);
            let j0 = self.rng.gen_range(0..s - w);
            // cars sit on free impervious ground
            let free = (i0.saturating_sub(1)..(i0 + h + 1).min(s)).all(|i| {
                (j0.saturating_sub(1)..(j0 + w + 1).min(s))
                    .all(|j| Some(canvas.class[[i, j]]) == impervious)
            });
            if !free {
                continue;
            }
            let pick = self.rng.gen_range(0..CAR_PALETTE.len());
            let colour = self.jitter(CAR_PALETTE[pick], 0.03);
            for i in i0..i0 + h {
                for j in j0..j0 + w {
                    canvas.paint(i, j, id, 0.09, colour);
                }
            }
            placed += 1;
        }
    }
}

fn synth_tile(seed: u64, index: usize, tile_size: usize, layout: &[SyntheticClass]) -> Result<ModalityBundle> {
    let mut builder = SceneBuilder {
        layout,
        rng: worker_rng(seed, index as u64),
        scale: tile_size as f64 / 256.0,
    };
    let s = tile_size;
    let base = builder.id(SyntheticClass::Impervious).unwrap_or(0);
    let mut canvas = Canvas {
        size: s,
        class: Array2::from_elem((s, s), base),
        height: Array2::from_elem((s, s), 0.02),
        colour: Array3::from_shape_fn((3, s, s), |(c, _, _)| SyntheticClass::Impervious.base_colour()[c]),
    };

    builder.blobs(&mut canvas, SyntheticClass::LowVegetation, (3, 6), (15.0, 40.0), 0.06);
    builder.blobs(&mut canvas, SyntheticClass::BareSoil, (1, 2), (10.0, 25.0), 0.03);
    builder.blobs(&mut canvas, SyntheticClass::Water, (1, 1), (12.0, 30.0), 0.0);
    let road = builder.roads(&mut canvas);
    builder.buildings(&mut canvas, &road);
    builder.trees(&mut canvas);
    builder.clutter(&mut canvas);
    builder.cars(&mut canvas);

    let colour_noise = Normal::new(0.0f32, 0.04).unwrap();
    let height_noise = Normal::new(0.0f32, 0.01).unwrap();
    let rng = &mut builder.rng;
    let rgir = canvas.colour.mapv(|v| (v + colour_noise.sample(rng)).clamp(0.0, 1.0));
    let ndsm = canvas
        .height
        .mapv(|v| (v + height_noise.sample(rng)).clamp(0.0, 1.0))
        .insert_axis(ndarray::Axis(0));
    let label = canvas.class.mapv(u32::from);
    ModalityBundle::new(rgir, ndsm, label, format!("tile_{index:03}"))
}

/// Deterministic procedurally generated scenes, one per tile index.
pub fn synth_dataset(
    seed: u64,
    n_tiles: usize,
    tile_size: usize,
    num_classes: usize,
) -> Result<Vec<ModalityBundle>> {
    if tile_size < 64 {
        return Err(Error::Validation(format!("tile size {tile_size} is below 64")));
    }
    if !(2..=8).contains(&num_classes) {
        return Err(Error::Validation(format!(
            "synthetic scenes support 2..=8 classes, got {num_classes}"
        )));
    }
    let layout = class_layout(num_classes);
    (0..n_tiles)
        .map(|i| synth_tile(seed, i, tile_size, &layout))
        .collect()
}
