//! Dataset files, image decoding and preprocessing, and the synthetic scene generator.

mod dataset;
pub mod image;
pub mod pnm;
mod synth;

pub use dataset::{batch_labels, build_inputs, load_all, load_sample, DatasetIndex, IndexEntry, Sample, Split};
pub use image::{normalize_depth, resize_bilinear, resize_labels, rgb_to_luminance, LUMA_WEIGHTS};
pub use pnm::Raster;
pub use synth::{class_color, depth_band, render_scene, synth_dataset, Scene, SynthConfig};
