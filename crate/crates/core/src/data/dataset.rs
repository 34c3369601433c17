use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::image::{normalize_depth, resize_bilinear, resize_labels, rgb_to_luminance};
use super::pnm::Raster;
use crate::error::{Error, Result};
use crate::labels::{LabelMap, IGNORE_INDEX};
use crate::model::{ModelInputs, PrimaryInput, SecondaryInput, Variant};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split '{other}' (train, val or test)"))),
        }
    }
}

/// Paths of one RGB / depth / label triple.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndexEntry {
    pub rgb: PathBuf,
    pub depth: PathBuf,
    pub label: PathBuf,
}

impl IndexEntry {
    /// Stem of the RGB file, used to name per-sample outputs.
    pub fn name(&self) -> String {
        self.rgb
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    }
}

/// Ordered list of samples.
///
/// On disk: `# split = ...` and `# classes = ...` header lines, then one
/// whitespace-separated `rgb depth label` triple per line, relative to the
/// index file's directory.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetIndex {
    pub root: PathBuf,
    pub split: Split,
    pub num_classes: usize,
    pub entries: Vec<IndexEntry>,
}

impl DatasetIndex {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let bad = |line: usize, msg: String| Error::Data(format!("{}:{line}: {msg}", path.display()));
        let (mut split, mut classes) = (Split::Train, None);
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if let Some(meta) = line.strip_prefix('#') {
                if let Some((k, v)) = meta.split_once('=') {
                    match k.trim() {
                        "split" => split = v.parse().map_err(|e: Error| bad(i + 1, e.to_string()))?,
                        "classes" => {
                            classes = Some(v.trim().parse().map_err(|_| bad(i + 1, format!("bad class count {v:?}")))?)
                        }
                        _ => {}
                    }
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [rgb, depth, label] = fields[..] else {
                return Err(bad(i + 1, format!("expected 3 paths, found {}", fields.len())));
            };
            entries.push(IndexEntry {
                rgb: root.join(rgb),
                depth: root.join(depth),
                label: root.join(label),
            });
        }
        let num_classes = classes.ok_or_else(|| Error::Data(format!("{}: missing '# classes = K' header", path.display())))?;
        if num_classes < 2 {
            return Err(Error::Data(format!("{}: class count must be at least 2", path.display())));
        }
        Ok(Self {
            root,
            split,
            num_classes,
            entries,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let rel = |p: &Path| p.strip_prefix(&self.root).unwrap_or(p).display().to_string();
        let mut text = format!("# split = {}\n# classes = {}\n", self.split, self.num_classes);
        for e in &self.entries {
            text.push_str(&format!("{} {} {}\n", rel(&e.rgb), rel(&e.depth), rel(&e.label)));
        }
        std::fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }
}

/// One decoded sample; all planes share H and W.
#[derive(Clone, Debug)]
pub struct Sample {
    /// `3×H×W` in [0, 1].
    pub rgb: Tensor,
    /// `1×H×W` in [0, 1]; 0 also marks missing measurements.
    pub depth: Tensor,
    /// `1×H×W` in [0, 1].
    pub luminance: Tensor,
    pub labels: LabelMap,
}

impl Sample {
    pub fn height(&self) -> usize {
        self.labels.height()
    }

    pub fn width(&self) -> usize {
        self.labels.width()
    }
}

fn plane(r: &Raster, path: &Path, channels: usize) -> Result<Tensor> {
    if r.channels != channels {
        return Err(Error::Data(format!(
            "{}: expected {channels} channel(s), found {}",
            path.display(),
            r.channels
        )));
    }
    let (h, w) = (r.height, r.width);
    let scale = 1.0 / r.maxval as f32;
    let mut data = vec![0.0f32; channels * h * w];
    for (i, px) in r.samples.chunks_exact(channels).enumerate() {
        for (c, &s) in px.iter().enumerate() {
            data[c * h * w + i] = s as f32 * scale;
        }
    }
    Tensor::from_vec(&[channels, h, w], data)
}

/// Decodes and resizes one index entry to `resolution = (H, W)`.
pub fn load_sample(entry: &IndexEntry, resolution: (usize, usize), num_classes: usize) -> Result<Sample> {
    let (th, tw) = resolution;
    let rgb_raster = Raster::read(&entry.rgb)?;
    let depth_raster = Raster::read(&entry.depth)?;
    let label_raster = Raster::read(&entry.label)?;
    let size = |r: &Raster| (r.height, r.width);
    if size(&rgb_raster) != size(&depth_raster) || size(&rgb_raster) != size(&label_raster) {
        return Err(Error::Data(format!(
            "{}: planes disagree in size (rgb {:?}, depth {:?}, label {:?})",
            entry.rgb.display(),
            size(&rgb_raster),
            size(&depth_raster),
            size(&label_raster)
        )));
    }
    if label_raster.channels != 1 || label_raster.maxval > 255 {
        return Err(Error::Data(format!("{}: labels must be an 8-bit PGM", entry.label.display())));
    }
    if let Some(pos) = label_raster
        .samples
        .iter()
        .position(|&v| v as usize >= num_classes && v != IGNORE_INDEX as u16)
    {
        return Err(Error::Data(format!(
            "{}: label {} at (y={}, x={}) is outside 0..{num_classes} and not {IGNORE_INDEX}",
            entry.label.display(),
            label_raster.samples[pos],
            pos / label_raster.width,
            pos % label_raster.width
        )));
    }
    let rgb = resize_bilinear(&plane(&rgb_raster, &entry.rgb, 3)?, th, tw)?;
    let depth = normalize_depth(&plane(&depth_raster, &entry.depth, 1)?, th, tw)?;
    let labels = LabelMap::new(
        1,
        label_raster.height,
        label_raster.width,
        label_raster.samples.iter().map(|&v| v as u8).collect(),
    )?;
    let labels = resize_labels(&labels, th, tw)?;
    let luminance = rgb_to_luminance(&rgb)?;
    Ok(Sample {
        rgb,
        depth,
        luminance,
        labels,
    })
}

/// Loads every entry of an index.
pub fn load_all(index: &DatasetIndex, resolution: (usize, usize)) -> Result<Vec<Sample>> {
    index
        .entries
        .iter()
        .map(|e| load_sample(e, resolution, index.num_classes))
        .collect()
}

fn stack_batch(samples: &[&Sample], planes: impl Fn(&Sample) -> Vec<&Tensor>) -> Result<Tensor> {
    let first = samples
        .first()
        .ok_or_else(|| Error::argument("build_inputs", "empty batch"))?;
    let (h, w) = (first.height(), first.width());
    let mut data = Vec::new();
    let mut channels = 0;
    for s in samples {
        if (s.height(), s.width()) != (h, w) {
            return Err(Error::argument(
                "build_inputs",
                format!("batch mixes {h}x{w} and {}x{} samples", s.height(), s.width()),
            ));
        }
        let ps = planes(s);
        channels = ps.iter().map(|p| p.shape()[0]).sum();
        for p in ps {
            data.extend_from_slice(p.data());
        }
    }
    Tensor::from_vec(&[samples.len(), channels, h, w], data)
}

/// Arranges a batch into the input slots a variant consumes.
pub fn build_inputs(samples: &[&Sample], variant: Variant) -> Result<ModelInputs> {
    let primary = stack_batch(samples, |s| match variant.primary_input() {
        PrimaryInput::Rgb => vec![&s.rgb],
        PrimaryInput::Depth => vec![&s.depth],
        PrimaryInput::RgbDepth => vec![&s.rgb, &s.depth],
    })?;
    let secondary = variant
        .secondary_input()
        .map(|slot| {
            stack_batch(samples, |s| match slot {
                SecondaryInput::DepthLuminance => vec![&s.depth, &s.luminance],
                SecondaryInput::Depth => vec![&s.depth],
                SecondaryInput::Rgb => vec![&s.rgb],
            })
        })
        .transpose()?;
    Ok(ModelInputs { primary, secondary })
}

/// Stacks the label maps of a batch.
pub fn batch_labels(samples: &[&Sample]) -> Result<LabelMap> {
    LabelMap::stack(&samples.iter().map(|s| &s.labels).collect::<Vec<_>>())
}
