//! Procedural RGB-D scenes whose classes are far easier to tell apart by depth than by color.

use std::f64::consts::TAU;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dataset::{DatasetIndex, IndexEntry, Split};
use super::pnm::Raster;
use crate::error::{Error, Result};

/// Raw 16-bit depth of the nearest and farthest representable surface.
const DEPTH_NEAR: f64 = 2000.0;
const DEPTH_SPAN: f64 = 60000.0;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub samples: usize,
    pub height: usize,
    pub width: usize,
    pub num_classes: usize,
    pub split: Split,
    /// Per-object color jitter (uniform half-width); large values make color ambiguous.
    pub color_jitter: f64,
    /// Fraction of depth pixels dropped to 0 (missing measurements).
    pub depth_holes: f64,
}

impl SynthConfig {
    pub fn new(seed: u64, samples: usize, (height, width): (usize, usize), num_classes: usize) -> Self {
        Self {
            seed,
            samples,
            height,
            width,
            num_classes,
            split: Split::Train,
            color_jitter: 0.3,
            depth_holes: 0.02,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.num_classes < 2 || self.num_classes > 32 {
            return Err(Error::Config(format!("synthetic class count must be in 2..=32, got {}", self.num_classes)));
        }
        if self.height == 0 || self.width == 0 || !self.height.is_multiple_of(8) || !self.width.is_multiple_of(8) {
            return Err(Error::Config(format!(
                "synthetic resolution {}x{} must be positive and divisible by 8",
                self.height, self.width
            )));
        }
        if self.samples == 0 {
            return Err(Error::Config("synthetic dataset needs at least one sample".into()));
        }
        Ok(())
    }
}

/// One generated scene before encoding.
#[derive(Clone, Debug)]
pub struct Scene {
    pub rgb: Raster,
    pub depth: Raster,
    pub labels: Raster,
}

#[derive(Clone, Copy)]
enum Shape {
    Rect,
    Ellipse,
}

struct Object {
    class: usize,
    shape: Shape,
    cy: f64,
    cx: f64,
    ry: f64,
    rx: f64,
    depth: f64,
    tilt: (f64, f64),
    color: [f64; 3],
}

impl Object {
    fn covers(&self, y: f64, x: f64) -> bool {
        let (dy, dx) = ((y - self.cy) / self.ry, (x - self.cx) / self.rx);
        match self.shape {
            Shape::Rect => dy.abs() <= 1.0 && dx.abs() <= 1.0,
            Shape::Ellipse => dy * dy + dx * dx <= 1.0,
        }
    }
}

/// Normalized depth band `[lo, hi)` of a class; class 0 (background) is farthest.
pub fn depth_band(class: usize, num_classes: usize) -> (f64, f64) {
    let width = 1.0 / num_classes as f64;
    let hi = 1.0 - class as f64 * width;
    (hi - width, hi)
}

/// Mean color of a class. The means sit close together on a gray ring.
pub fn class_color(class: usize, num_classes: usize) -> [f64; 3] {
    let phase = TAU * class as f64 / num_classes as f64;
    [0.0, 2.1, 4.2].map(|offset| 0.5 + 0.12 * (phase + offset).cos())
}

/// Renders sample `index` of the dataset described by `config`.
pub fn render_scene(config: &SynthConfig, index: usize) -> Scene {
    let (h, w, k) = (config.height, config.width, config.num_classes);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(index as u64 + 1);

    let mut objects = Vec::new();
    for class in 1..k {
        let copies = 1 + usize::from(rng.gen_bool(0.5));
        for _ in 0..copies {
            let (lo, hi) = depth_band(class, k);
            let margin = 0.2 * (hi - lo);
            let base = class_color(class, k);
            objects.push(Object {
                class,
                shape: if rng.gen_bool(0.5) { Shape::Rect } else { Shape::Ellipse },
                cy: rng.gen_range(0.1..0.9) * h as f64,
                cx: rng.gen_range(0.1..0.9) * w as f64,
                ry: rng.gen_range(0.1..0.25) * h as f64,
                rx: rng.gen_range(0.06..0.16) * w as f64,
                depth: rng.gen_range(lo + margin..hi - margin),
                tilt: (rng.gen_range(-0.3..0.3) * margin / h as f64, rng.gen_range(-0.3..0.3) * margin / w as f64),
                color: base.map(|m| (m + rng.gen_range(-config.color_jitter..=config.color_jitter)).clamp(0.0, 1.0)),
            });
        }
    }
    // Painter's order: far objects first so nearer ones occlude them.
    objects.sort_by(|a, b| b.depth.total_cmp(&a.depth));

    let (bg_lo, bg_hi) = depth_band(0, k);
    let bg_depth = 0.5 * (bg_lo + bg_hi);
    let bg_color = class_color(0, k).map(|m| (m + rng.gen_range(-config.color_jitter..=config.color_jitter)).clamp(0.0, 1.0));
    let bg_slope = rng.gen_range(-0.3..0.3) * (bg_hi - bg_lo) / h as f64;

    let mut rgb = Vec::with_capacity(h * w * 3);
    let mut depth = Vec::with_capacity(h * w);
    let mut labels = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let (fy, fx) = (y as f64 + 0.5, x as f64 + 0.5);
            let hit = objects.iter().rev().find(|o| o.covers(fy, fx));
            let (class, d, color) = match hit {
                Some(o) => (
                    o.class,
                    o.depth + o.tilt.0 * (fy - o.cy) + o.tilt.1 * (fx - o.cx),
                    o.color,
                ),
                None => (0, bg_depth + bg_slope * (fy - h as f64 / 2.0), bg_color),
            };
            for c in color {
                let v = (c + rng.gen_range(-0.06..0.06)).clamp(0.0, 1.0);
                rgb.push((v * 255.0).round() as u16);
            }
            let noisy = (d + rng.gen_range(-0.01..0.01)).clamp(0.0, 1.0);
            let raw = if rng.gen_bool(config.depth_holes) {
                0
            } else {
                (DEPTH_NEAR + noisy * DEPTH_SPAN).round() as u16
            };
            depth.push(raw);
            labels.push(class as u16);
        }
    }
    Scene {
        rgb: Raster::new(w, h, 3, 255, rgb).expect("valid raster"),
        depth: Raster::new(w, h, 1, 65535, depth).expect("valid raster"),
        labels: Raster::new(w, h, 1, 255, labels).expect("valid raster"),
    }
}

/// Writes a synthetic dataset under `root` (`rgb/`, `depth/`, `label/`, `index.txt`).
pub fn synth_dataset(root: &Path, config: &SynthConfig) -> Result<DatasetIndex> {
    config.validate()?;
    for dir in ["rgb", "depth", "label"] {
        let p = root.join(dir);
        std::fs::create_dir_all(&p).map_err(|e| Error::io(format!("creating {}", p.display()), e))?;
    }
    let width = config.samples.to_string().len().max(4);
    let mut entries = Vec::with_capacity(config.samples);
    for i in 0..config.samples {
        let scene = render_scene(config, i);
        let name = format!("{i:0width$}");
        let entry = IndexEntry {
            rgb: root.join("rgb").join(format!("{name}.ppm")),
            depth: root.join("depth").join(format!("{name}.pgm")),
            label: root.join("label").join(format!("{name}.pgm")),
        };
        scene.rgb.write(&entry.rgb)?;
        scene.depth.write(&entry.depth)?;
        scene.labels.write(&entry.label)?;
        entries.push(entry);
    }
    let index = DatasetIndex {
        root: root.to_path_buf(),
        split: config.split,
        num_classes: config.num_classes,
        entries,
    };
    index.write(&root.join("index.txt"))?;
    Ok(index)
}
