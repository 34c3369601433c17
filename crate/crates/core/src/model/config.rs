use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// The full network and every ablation variant it is compared against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    LdfNet,
    ErfNetRgb,
    ErfNetDepth,
    ErfNetStack,
    LdfNonDense,
    LdfWoShallow,
    Ldf58WoShallow,
    LdfWoY,
    LdfRgbRgb,
}

/// What the RGB-branch input slot carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PrimaryInput {
    Rgb,
    Depth,
    /// RGB with depth stacked as a fourth channel.
    RgbDepth,
}

impl PrimaryInput {
    pub fn channels(self) -> usize {
        match self {
            PrimaryInput::Rgb => 3,
            PrimaryInput::Depth => 1,
            PrimaryInput::RgbDepth => 4,
        }
    }
}

/// What the second-branch input slot carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SecondaryInput {
    /// Depth stacked with luminance.
    DepthLuminance,
    Depth,
    /// A duplicate of the RGB image.
    Rgb,
}

impl SecondaryInput {
    pub fn channels(self) -> usize {
        match self {
            SecondaryInput::DepthLuminance => 2,
            SecondaryInput::Depth => 1,
            SecondaryInput::Rgb => 3,
        }
    }
}

/// Structure of the second encoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BranchKind {
    /// Dense blocks and transition layers.
    Dense,
    /// A copy of the RGB encoder structure.
    Residual,
}

impl Variant {
    pub const ALL: [Variant; 9] = [
        Variant::ErfNetDepth,
        Variant::ErfNetRgb,
        Variant::ErfNetStack,
        Variant::LdfNonDense,
        Variant::LdfWoShallow,
        Variant::Ldf58WoShallow,
        Variant::LdfWoY,
        Variant::LdfRgbRgb,
        Variant::LdfNet,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Variant::LdfNet => "ldfnet",
            Variant::ErfNetRgb => "erfnet-rgb",
            Variant::ErfNetDepth => "erfnet-depth",
            Variant::ErfNetStack => "erfnet-stack",
            Variant::LdfNonDense => "ldf-non-dense",
            Variant::LdfWoShallow => "ldf-wo-shallow",
            Variant::Ldf58WoShallow => "ldf-58-wo-shallow",
            Variant::LdfWoY => "ldf-wo-y",
            Variant::LdfRgbRgb => "ldf-rgb-rgb",
        }
    }

    pub fn primary_input(self) -> PrimaryInput {
        match self {
            Variant::ErfNetDepth => PrimaryInput::Depth,
            Variant::ErfNetStack => PrimaryInput::RgbDepth,
            _ => PrimaryInput::Rgb,
        }
    }

    pub fn secondary_input(self) -> Option<SecondaryInput> {
        match self {
            Variant::ErfNetRgb | Variant::ErfNetDepth | Variant::ErfNetStack => None,
            Variant::LdfWoY => Some(SecondaryInput::Depth),
            Variant::LdfRgbRgb => Some(SecondaryInput::Rgb),
            _ => Some(SecondaryInput::DepthLuminance),
        }
    }

    pub fn branch_kind(self) -> Option<BranchKind> {
        match self {
            Variant::ErfNetRgb | Variant::ErfNetDepth | Variant::ErfNetStack => None,
            Variant::LdfNonDense => Some(BranchKind::Residual),
            _ => Some(BranchKind::Dense),
        }
    }

    pub fn has_shallow_block(self) -> bool {
        matches!(self, Variant::LdfNet | Variant::LdfWoY | Variant::LdfRgbRgb)
    }

    /// Published parameter count in millions, used for the fidelity gate and ordering.
    pub fn reported_params_millions(self) -> f64 {
        match self {
            Variant::ErfNetRgb | Variant::ErfNetDepth | Variant::ErfNetStack => 1.97,
            Variant::LdfNonDense => 2.95,
            Variant::LdfWoShallow => 2.20,
            Variant::Ldf58WoShallow => 2.42,
            Variant::LdfWoY | Variant::LdfRgbRgb | Variant::LdfNet => 2.31,
        }
    }

    /// Published validation mIoU in percent.
    pub fn reported_miou(self) -> f64 {
        match self {
            Variant::ErfNetDepth => 47.48,
            Variant::ErfNetRgb => 65.59,
            Variant::ErfNetStack => 65.06,
            Variant::LdfNonDense => 66.53,
            Variant::LdfWoShallow => 66.54,
            Variant::Ldf58WoShallow => 65.93,
            Variant::LdfWoY => 65.72,
            Variant::LdfRgbRgb => 67.79,
            Variant::LdfNet => 68.48,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace(['_', '/'], "-");
        Variant::ALL
            .into_iter()
            .find(|v| v.tag() == norm || v.tag().replace('-', "") == norm.replace('-', ""))
            .ok_or_else(|| {
                let known: Vec<_> = Variant::ALL.iter().map(|v| v.tag()).collect();
                Error::Config(format!("unknown variant '{s}' (expected one of {})", known.join(", ")))
            })
    }
}

/// Channel widths of the encoder stages and the second-branch transitions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChannelPlan {
    /// After the first downsampler (½ resolution).
    pub stem: usize,
    /// After the second downsampler (¼ resolution).
    pub mid: usize,
    /// After the third downsampler (⅛ resolution).
    pub deep: usize,
    /// Output widths of the two transition layers of the dense branch.
    pub transitions: [usize; 2],
}

impl Default for ChannelPlan {
    fn default() -> Self {
        Self {
            stem: 16,
            mid: 64,
            deep: 128,
            transitions: [64, 128],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub variant: Variant,
    pub num_classes: usize,
    pub growth_rate: usize,
    pub bottleneck_width: usize,
    /// Dense modules in the shallow block; zero removes it.
    pub shallow_modules: usize,
    /// Dense modules in the ¼- and ⅛-resolution dense blocks.
    pub dense_modules: [usize; 2],
    pub channels: ChannelPlan,
    /// Residual blocks at ¼ resolution.
    pub mid_blocks: usize,
    /// Dilation of each residual block at ⅛ resolution.
    pub dilations: Vec<usize>,
    /// Residual blocks in each of the two decoder stages.
    pub decoder_blocks: usize,
    pub dropout: f64,
}

pub const DEFAULT_NUM_CLASSES: usize = 19;
pub const DEFAULT_GROWTH_RATE: usize = 42;
pub const DEFAULT_BOTTLENECK_WIDTH: usize = 48;
pub const DEFAULT_SHALLOW_MODULES: usize = 2;

impl ModelConfig {
    pub fn new(variant: Variant) -> Self {
        let (shallow, dense) = match variant {
            Variant::LdfWoShallow => (0, [3, 4]),
            Variant::Ldf58WoShallow => (0, [5, 8]),
            _ => (DEFAULT_SHALLOW_MODULES, [3, 4]),
        };
        Self {
            variant,
            num_classes: DEFAULT_NUM_CLASSES,
            growth_rate: DEFAULT_GROWTH_RATE,
            bottleneck_width: DEFAULT_BOTTLENECK_WIDTH,
            shallow_modules: shallow,
            dense_modules: dense,
            channels: ChannelPlan::default(),
            mid_blocks: 5,
            dilations: vec![2, 4, 8, 16, 2, 4, 8, 16],
            decoder_blocks: 2,
            dropout: 0.05,
        }
    }

    pub fn with_classes(mut self, num_classes: usize) -> Self {
        self.num_classes = num_classes;
        self
    }

    /// Spatial divisibility every input must satisfy (three halvings).
    pub const RESOLUTION_MULTIPLE: usize = 8;

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Config(format!("num_classes must be at least 2, got {}", self.num_classes)));
        }
        if self.num_classes > 255 {
            return Err(Error::Config("num_classes must fit below the ignore label 255".into()));
        }
        let c = self.channels;
        let stem_in = self.variant.primary_input().channels();
        if c.stem <= stem_in || c.mid <= c.stem || c.deep <= c.mid {
            return Err(Error::Config(format!(
                "channel plan must grow strictly through the downsamplers: {stem_in} -> {} -> {} -> {}",
                c.stem, c.mid, c.deep
            )));
        }
        if self.variant.has_shallow_block() && self.shallow_modules == 0 {
            return Err(Error::Config(format!(
                "fusion point 1: {} needs a shallow block but shallow_modules is 0",
                self.variant
            )));
        }
        if self.variant.branch_kind() == Some(BranchKind::Dense) {
            for (i, &t) in c.transitions.iter().enumerate() {
                if t == 0 {
                    return Err(Error::Config(format!(
                        "fusion point {}: transition {} has no output channels",
                        2 * i + 2,
                        i + 1
                    )));
                }
            }
            for (i, &n) in self.dense_modules.iter().enumerate() {
                if n == 0 {
                    return Err(Error::Config(format!(
                        "fusion point {}: dense block {} has no modules",
                        2 * i + 3,
                        i + 2
                    )));
                }
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.dilations.contains(&0) {
            return Err(Error::Config("dilations must be positive".into()));
        }
        Ok(())
    }
}
