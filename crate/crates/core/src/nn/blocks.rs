//! Composite blocks of the two encoders and the decoder.

use super::forward::Forward;
use super::layers::{BatchNorm2d, Conv2d, ConvBnRelu, ConvTranspose2d, Shape4};
use super::params::ParamRegistry;
use crate::autodiff::{Conv2dParams, ConvTranspose2dParams, Var};
use crate::error::{Error, Result};
use crate::tensor::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BlockKind {
    Downsampler,
    NonBottleneck1d,
    DenseModule,
    DenseBlock,
    Transition,
    FusionAdapter,
    DecoderStage,
}

/// Configuration of one composite block; `param_count` is the closed-form
/// number of trainable scalars it owns.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BlockSpec {
    Downsampler {
        in_ch: usize,
        out_ch: usize,
    },
    NonBottleneck1d {
        channels: usize,
        dilation: usize,
        dropout: f64,
    },
    DenseModule {
        in_ch: usize,
        growth: usize,
        bottleneck: usize,
        dropout: f64,
    },
    DenseBlock {
        in_ch: usize,
        modules: usize,
        growth: usize,
        bottleneck: usize,
        dropout: f64,
    },
    Transition {
        in_ch: usize,
        out_ch: usize,
    },
    FusionAdapter {
        src_ch: usize,
        dst_ch: usize,
    },
    DecoderStage {
        in_ch: usize,
        out_ch: usize,
        nonbt: usize,
        dropout: f64,
    },
}

fn conv_params(cin: usize, cout: usize, kh: usize, kw: usize) -> usize {
    cout * cin * kh * kw + cout
}

impl BlockSpec {
    pub fn kind(&self) -> BlockKind {
        match self {
            BlockSpec::Downsampler { .. } => BlockKind::Downsampler,
            BlockSpec::NonBottleneck1d { .. } => BlockKind::NonBottleneck1d,
            BlockSpec::DenseModule { .. } => BlockKind::DenseModule,
            BlockSpec::DenseBlock { .. } => BlockKind::DenseBlock,
            BlockSpec::Transition { .. } => BlockKind::Transition,
            BlockSpec::FusionAdapter { .. } => BlockKind::FusionAdapter,
            BlockSpec::DecoderStage { .. } => BlockKind::DecoderStage,
        }
    }

    pub fn in_channels(&self) -> usize {
        match *self {
            BlockSpec::Downsampler { in_ch, .. }
            | BlockSpec::DenseModule { in_ch, .. }
            | BlockSpec::DenseBlock { in_ch, .. }
            | BlockSpec::Transition { in_ch, .. }
            | BlockSpec::DecoderStage { in_ch, .. } => in_ch,
            BlockSpec::NonBottleneck1d { channels, .. } => channels,
            BlockSpec::FusionAdapter { src_ch, .. } => src_ch,
        }
    }

    pub fn out_channels(&self) -> usize {
        match *self {
            BlockSpec::Downsampler { out_ch, .. }
            | BlockSpec::Transition { out_ch, .. }
            | BlockSpec::DecoderStage { out_ch, .. } => out_ch,
            BlockSpec::NonBottleneck1d { channels, .. } => channels,
            BlockSpec::DenseModule { in_ch, growth, .. } => in_ch + growth,
            BlockSpec::DenseBlock {
                in_ch, modules, growth, ..
            } => in_ch + modules * growth,
            BlockSpec::FusionAdapter { dst_ch, .. } => dst_ch,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        match *self {
            BlockSpec::Downsampler { in_ch, out_ch } if out_ch <= in_ch => {
                fail(format!("downsampler needs out_ch > in_ch, got {in_ch} -> {out_ch}"))
            }
            BlockSpec::DenseBlock { modules: 0, .. } => fail("dense block needs at least one module".into()),
            BlockSpec::DenseModule { growth: 0, .. } | BlockSpec::DenseBlock { growth: 0, .. } => {
                fail("growth rate must be positive".into())
            }
            BlockSpec::DenseModule { bottleneck: 0, .. } | BlockSpec::DenseBlock { bottleneck: 0, .. } => {
                fail("bottleneck width must be positive".into())
            }
            BlockSpec::NonBottleneck1d { dilation: 0, .. } => fail("dilation must be positive".into()),
            _ if self.in_channels() == 0 || self.out_channels() == 0 => {
                fail(format!("{:?} has an empty channel dimension", self.kind()))
            }
            BlockSpec::NonBottleneck1d { dropout, .. }
            | BlockSpec::DenseModule { dropout, .. }
            | BlockSpec::DenseBlock { dropout, .. }
            | BlockSpec::DecoderStage { dropout, .. }
                if !(0.0..1.0).contains(&dropout) =>
            {
                fail(format!("dropout rate {dropout} outside [0, 1)"))
            }
            _ => Ok(()),
        }
    }

    pub fn param_count(&self) -> usize {
        match *self {
            BlockSpec::Downsampler { in_ch, out_ch } => conv_params(in_ch, out_ch - in_ch, 3, 3) + 2 * out_ch,
            BlockSpec::NonBottleneck1d { channels: c, .. } => 4 * conv_params(c, c, 3, 1) + 4 * c,
            BlockSpec::DenseModule {
                in_ch,
                growth,
                bottleneck,
                ..
            } => conv_params(in_ch, bottleneck, 1, 1) + 2 * bottleneck + conv_params(bottleneck, growth, 3, 3) + 2 * growth,
            BlockSpec::DenseBlock {
                in_ch,
                modules,
                growth,
                bottleneck,
                dropout,
            } => (0..modules)
                .map(|j| {
                    BlockSpec::DenseModule {
                        in_ch: in_ch + j * growth,
                        growth,
                        bottleneck,
                        dropout,
                    }
                    .param_count()
                })
                .sum(),
            BlockSpec::Transition { in_ch, out_ch } => conv_params(in_ch, out_ch, 1, 1) + 2 * out_ch,
            BlockSpec::FusionAdapter { src_ch, dst_ch } => conv_params(src_ch, dst_ch, 1, 1) + 2 * dst_ch,
            BlockSpec::DecoderStage {
                in_ch,
                out_ch,
                nonbt,
                dropout,
            } => {
                conv_params(in_ch, out_ch, 3, 3)
                    + 2 * out_ch
                    + nonbt
                        * BlockSpec::NonBottleneck1d {
                            channels: out_ch,
                            dilation: 1,
                            dropout,
                        }
                        .param_count()
            }
        }
    }
}

fn require_even(op: &str, [_, _, h, w]: Shape4) -> Result<()> {
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::Config(format!("{op}: spatial size {h}x{w} must be even to halve")));
    }
    Ok(())
}

fn require_channels(op: &'static str, expected: usize, [_, c, _, _]: Shape4) -> Result<()> {
    if c != expected {
        return Err(Error::mismatch(op, "input channels", expected, c));
    }
    Ok(())
}

pub(crate) fn shape4<T: Scalar>(ctx: &Forward<'_, T>, x: Var) -> Result<Shape4> {
    match *ctx.tape.shape(x) {
        [n, c, h, w] => Ok([n, c, h, w]),
        ref other => Err(Error::shape("block", format!("expected a 4-D activation, got {other:?}"))),
    }
}

/// Stride-2 3×3 convolution concatenated with a 2×2 max pool of the input, then BN and ReLU.
#[derive(Clone, Debug)]
pub struct DownsamplerBlock {
    pub in_ch: usize,
    pub out_ch: usize,
    pub conv: Conv2d,
    pub bn: BatchNorm2d,
}

impl DownsamplerBlock {
    pub fn new(reg: &mut ParamRegistry, name: &str, in_ch: usize, out_ch: usize) -> Result<Self> {
        BlockSpec::Downsampler { in_ch, out_ch }.validate()?;
        let geometry = Conv2dParams::new((2, 2), (1, 1), (1, 1));
        Ok(Self {
            in_ch,
            out_ch,
            conv: Conv2d::new(reg, &format!("{name}.conv"), (in_ch, out_ch - in_ch), (3, 3), geometry, true),
            bn: BatchNorm2d::new(reg, &format!("{name}.bn"), out_ch),
        })
    }

    pub fn spec(&self) -> BlockSpec {
        BlockSpec::Downsampler {
            in_ch: self.in_ch,
            out_ch: self.out_ch,
        }
    }

    pub fn output_shape(&self, input: Shape4) -> Result<Shape4> {
        require_channels("downsampler", self.in_ch, input)?;
        require_even("downsampler", input)?;
        let [n, _, h, w] = input;
        Ok([n, self.out_ch, h / 2, w / 2])
    }

    pub fn forward<T: Scalar>(&self, ctx: &mut Forward<'_, T>, x: Var) -> Result<Var> {
        self.output_shape(shape4(ctx, x)?)?;
        let conv = self.conv.forward(ctx, x)?;
        let pool = ctx.tape.max_pool2d(x, (2, 2), (2, 2))?;
        let cat = ctx.tape.concat_channels(&[conv, pool])?;
        let y = self.bn.forward(ctx, cat)?;
        ctx.tape.relu(y)
    }

    pub fn macs(&self, input: Shape4) -> u64 {
        self.conv.macs(input)
    }
}

/// Residual block with factorized 3×1 / 1×3 convolutions; the second pair is dilated.
#[derive(Clone, Debug)]
pub struct NonBottleneck1d {
    pub channels: usize,
    pub dilation: usize,
    pub dropout: f64,
    pub conv3x1_1: Conv2d,
    pub conv1x3_1: Conv2d,
    pub bn1: BatchNorm2d,
    pub conv3x1_2: Conv2d,
    pub conv1x3_2: Conv2d,
    pub bn2: BatchNorm2d,
}

impl NonBottleneck1d {
    pub fn new(reg: &mut ParamRegistry, name: &str, channels: usize, dilation: usize, dropout: f64) -> Result<Self> {
        BlockSpec::NonBottleneck1d {
            channels,
            dilation,
            dropout,
        }
        .validate()?;
        let c = (channels, channels);
        let d = dilation;
        let conv = |reg: &mut ParamRegistry, suffix: &str, kernel, geometry| {
            Conv2d::new(reg, &format!("{name}.{suffix}"), c, kernel, geometry, true)
        };
        Ok(Self {
            channels,
            dilation,
            dropout,
            conv3x1_1: conv(reg, "conv3x1_1", (3, 1), Conv2dParams::new((1, 1), (1, 0), (1, 1))),
            conv1x3_1: conv(reg, "conv1x3_1", (1, 3), Conv2dParams::new((1, 1), (0, 1), (1, 1))),
            bn1: BatchNorm2d::new(reg, &format!("{name}.bn1"), channels),
            conv3x1_2: conv(reg, "conv3x1_2", (3, 1), Conv2dParams::new((1, 1), (d, 0), (d, 1))),
            conv1x3_2: conv(reg, "conv1x3_2", (1, 3), Conv2dParams::new((1, 1), (0, d), (1, d))),
            bn2: BatchNorm2d::new(reg, &format!("{name}.bn2"), channels),
        })
    }

    pub fn spec(&self) -> BlockSpec {
        BlockSpec::NonBottleneck1d {
            channels: self.channels,
            dilation: self.dilation,
            dropout: self.dropout,
        }
    }

    pub fn output_shape(&self, input: Shape4) -> Result<Shape4> {
        require_channels("non_bottleneck_1d", self.channels, input)?;
        Ok(input)
    }

    pub fn forward<T: Scalar>(&self, ctx: &mut Forward<'_, T>, x: Var) -> Result<Var> {
        self.output_shape(shape4(ctx, x)?)?;
        let y = self.conv3x1_1.forward(ctx, x)?;
        let y = ctx.tape.relu(y)?;
        let y = self.conv1x3_1.forward(ctx, y)?;
        let y = self.bn1.forward(ctx, y)?;
        let y = ctx.tape.relu(y)?;
        let y = self.conv3x1_2.forward(ctx, y)?;
        let y = ctx.tape.relu(y)?;
        let y = self.conv1x3_2.forward(ctx, y)?;
        let y = self.bn2.forward(ctx, y)?;
        let y = ctx.dropout(y, self.dropout)?;
        let y = ctx.tape.add(y, x)?;
        ctx.tape.relu(y)
    }

    pub fn macs(&self, input: Shape4) -> u64 {
        [&self.conv3x1_1, &self.conv1x3_1, &self.conv3x1_2, &self.conv1x3_2]
            .iter()
            .map(|c| c.macs(input))
            .sum()
    }
}

/// 1×1 bottleneck then 3×3 convolution producing `growth` new channels,
/// concatenated after the module input.
#[derive(Clone, Debug)]
pub struct DenseModule {
    pub in_ch: usize,
    pub growth: usize,
    pub bottleneck: usize,
    pub dropout: f64,
    pub reduce: ConvBnRelu,
    pub expand: ConvBnRelu,
}

impl DenseModule {
    pub fn new(
        reg: &mut ParamRegistry,
        name: &str,
        in_ch: usize,
        growth: usize,
        bottleneck: usize,
        dropout: f64,
    ) -> Result<Self> {
        BlockSpec::DenseModule {
            in_ch,
            growth,
            bottleneck,
            dropout,
        }
        .validate()?;
        Ok(Self {
            in_ch,
            growth,
            bottleneck,
            dropout,
            reduce: ConvBnRelu::new(reg, &format!("{name}.reduce"), (in_ch, bottleneck), (1, 1), Conv2dParams::default()),
            expand: ConvBnRelu::new(
                reg,
                &format!("{name}.expand"),
                (bottleneck, growth),
                (3, 3),
                Conv2dParams::new((1, 1), (1, 1), (1, 1)),
            ),
        })
    }

    pub fn spec(&self) -> BlockSpec {
        BlockSpec::DenseModule {
            in_ch: self.in_ch,
            growth: self.growth,
            bottleneck: self.bottleneck,
            dropout: self.dropout,
        }
    }

    pub fn output_shape(&self, input: Shape4) -> Result<Shape4> {
        require_channels("dense_module", self.in_ch, input)?;
        let [n, c, h, w] = input;
        Ok([n, c + self.growth, h, w])
    }

    pub fn forward<T: Scalar>(&self, ctx: &mut Forward<'_, T>, x: Var) -> Result<Var> {
        self.output_shape(shape4(ctx, x)?)?;
        let y = self.reduce.forward(ctx, x)?;
        let y = self.expand.forward(ctx, y)?;
        let y = ctx.dropout(y, self.dropout)?;
        ctx.tape.concat_channels(&[x, y])
    }

    pub fn macs(&self, input: Shape4) -> u64 {
        let [n, _, h, w] = input;
        self.reduce.macs(input) + self.expand.macs([n, self.bottleneck, h, w])
    }
}

/// Sequence of dense modules, each seeing every earlier feature map.
#[derive(Clone, Debug)]
pub struct DenseBlock {
    pub in_ch: usize,
    pub modules: Vec<DenseModule>,
}

impl DenseBlock {
    pub fn new(
        reg: &mut ParamRegistry,
        name: &str,
        in_ch: usize,
        n_modules: usize,
        growth: usize,
        bottleneck: usize,
        dropout: f64,
    ) -> Result<Self> {
        BlockSpec::DenseBlock {
            in_ch,
            modules: n_modules,
            growth,
            bottleneck,
            dropout,
        }
        .validate()?;
        let modules = (0..n_modules)
            .map(|j| {
                DenseModule::new(
                    reg,
                    &format!("{name}.module{}", j + 1),
                    in_ch + j * growth,
                    growth,
                    bottleneck,
                    dropout,
                )
            })
            .collect::<Result<_>>()?;
        Ok(Self { in_ch, modules })
    }

    pub fn spec(&self) -> BlockSpec {
        let first = &self.modules[0];
        BlockSpec::DenseBlock {
            in_ch: self.in_ch,
            modules: self.modules.len(),
            growth: first.growth,
            bottleneck: first.bottleneck,
            dropout: first.dropout,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.spec().out_channels()
    }

    pub fn output_shape(&self, input: Shape4) -> Result<Shape4> {
        self.modules.iter().try_fold(input, |s, m| m.output_shape(s))
    }

    pub fn forward<T: Scalar>(&self, ctx: &mut Forward<'_, T>, x: Var) -> Result<Var> {
        self.modules.iter().try_fold(x, |y, m| m.forward(ctx, y))
    }

    pub fn macs(&self, input: Shape4) -> u64 {
        let mut shape = input;
        let mut total = 0;
        for m in &self.modules {
            total += m.macs(shape);
            shape = m.output_shape(shape).unwrap_or(shape);
        }
        total
    }
}

/// 1×1 convolution (BN, ReLU) followed by 2×2 average pooling.
#[derive(Clone, Debug)]
pub struct TransitionLayer {
    pub in_ch: usize,
    pub out_ch: usize,
    pub conv: ConvBnRelu,
}

impl TransitionLayer {
    pub fn new(reg: &mut ParamRegistry, name: &str, in_ch: usize, out_ch: usize) -> Result<Self> {
        BlockSpec::Transition { in_ch, out_ch }.validate()?;
        Ok(Self {
            in_ch,
            out_ch,
            conv: ConvBnRelu::new(reg, name, (in_ch, out_ch), (1, 1), Conv2dParams::default()),
        })
    }

    pub fn spec(&self) -> BlockSpec {
        BlockSpec::Transition {
            in_ch: self.in_ch,
            out_ch: self.out_ch,
        }
    }

    pub fn output_shape(&self, input: Shape4) -> Result<Shape4> {
        require_channels("transition", self.in_ch, input)?;
        require_even("transition", input)?;
        let [n, _, h, w] = input;
        Ok([n, self.out_ch, h / 2, w / 2])
    }

    pub fn forward<T: Scalar>(&self, ctx: &mut Forward<'_, T>, x: Var) -> Result<Var> {
        self.output_shape(shape4(ctx, x)?)?;
        let y = self.conv.forward(ctx, x)?;
        ctx.tape.avg_pool2d(y, (2, 2), (2, 2))
    }

    pub fn macs(&self, input: Shape4) -> u64 {
        self.conv.macs(input)
    }
}

/// Learned 1×1 channel adapter (BN, ReLU) whose output is summed into the RGB features.
#[derive(Clone, Debug)]
pub struct FusionAdapter {
    /// 1-based position of the fusion point along the encoder.
    pub index: usize,
    pub src_ch: usize,
    pub dst_ch: usize,
    pub conv: ConvBnRelu,
}

impl FusionAdapter {
    pub fn new(reg: &mut ParamRegistry, name: &str, index: usize, src_ch: usize, dst_ch: usize) -> Result<Self> {
        BlockSpec::FusionAdapter { src_ch, dst_ch }.validate()?;
        Ok(Self {
            index,
            src_ch,
            dst_ch,
            conv: ConvBnRelu::new(reg, name, (src_ch, dst_ch), (1, 1), Conv2dParams::default()),
        })
    }

    pub fn spec(&self) -> BlockSpec {
        BlockSpec::FusionAdapter {
            src_ch: self.src_ch,
            dst_ch: self.dst_ch,
        }
    }

    pub fn output_shape(&self, depth: Shape4, rgb: Shape4) -> Result<Shape4> {
        let op = "fusion_adapter";
        require_channels(op, self.src_ch, depth)?;
        if rgb[1] != self.dst_ch {
            return Err(Error::mismatch(op, format!("fusion point {} RGB channels", self.index), self.dst_ch, rgb[1]));
        }
        for (dim, i) in [("batch", 0), ("height", 2), ("width", 3)] {
            if depth[i] != rgb[i] {
                return Err(Error::mismatch(op, format!("fusion point {} {dim}", self.index), rgb[i], depth[i]));
            }
        }
        Ok(rgb)
    }

    pub fn forward<T: Scalar>(&self, ctx: &mut Forward<'_, T>, depth: Var, rgb: Var) -> Result<Var> {
        self.output_shape(shape4(ctx, depth)?, shape4(ctx, rgb)?)?;
        let adapted = self.conv.forward(ctx, depth)?;
        ctx.tape.add(rgb, adapted)
    }

    pub fn macs(&self, depth: Shape4) -> u64 {
        self.conv.macs(depth)
    }
}

/// Stride-2 transposed convolution (BN, ReLU) followed by residual blocks.
#[derive(Clone, Debug)]
pub struct DecoderStage {
    pub in_ch: usize,
    pub out_ch: usize,
    pub up: ConvTranspose2d,
    pub bn: BatchNorm2d,
    pub blocks: Vec<NonBottleneck1d>,
}

impl DecoderStage {
    pub fn new(
        reg: &mut ParamRegistry,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        nonbt: usize,
        dropout: f64,
    ) -> Result<Self> {
        BlockSpec::DecoderStage {
            in_ch,
            out_ch,
            nonbt,
            dropout,
        }
        .validate()?;
        let geometry = ConvTranspose2dParams::new((2, 2), (1, 1), (1, 1));
        let up = ConvTranspose2d::new(reg, &format!("{name}.up"), (in_ch, out_ch), (3, 3), geometry, true);
        let bn = BatchNorm2d::new(reg, &format!("{name}.bn"), out_ch);
        let blocks = (0..nonbt)
            .map(|j| NonBottleneck1d::new(reg, &format!("{name}.nb{}", j + 1), out_ch, 1, dropout))
            .collect::<Result<_>>()?;
        Ok(Self {
            in_ch,
            out_ch,
            up,
            bn,
            blocks,
        })
    }

    pub fn spec(&self) -> BlockSpec {
        BlockSpec::DecoderStage {
            in_ch: self.in_ch,
            out_ch: self.out_ch,
            nonbt: self.blocks.len(),
            dropout: self.blocks.first().map_or(0.0, |b| b.dropout),
        }
    }

    pub fn output_shape(&self, input: Shape4) -> Result<Shape4> {
        let up = self.up.output_shape(input)?;
        self.blocks.iter().try_fold(up, |s, b| b.output_shape(s))
    }

    pub fn forward<T: Scalar>(&self, ctx: &mut Forward<'_, T>, x: Var) -> Result<Var> {
        self.output_shape(shape4(ctx, x)?)?;
        let y = self.up.forward(ctx, x)?;
        let y = self.bn.forward(ctx, y)?;
        let y = ctx.tape.relu(y)?;
        self.blocks.iter().try_fold(y, |y, b| b.forward(ctx, y))
    }

    pub fn macs(&self, input: Shape4) -> u64 {
        let up = self.up.output_shape(input).unwrap_or(input);
        self.up.macs(input) + self.blocks.iter().map(|b| b.macs(up)).sum::<u64>()
    }
}

/// Any single-input block of the network graph.
#[derive(Clone, Debug)]
#[allow(clippy::large_enum_variant)]
pub enum Block {
    Downsampler(DownsamplerBlock),
    NonBottleneck1d(NonBottleneck1d),
    DenseBlock(DenseBlock),
    Transition(TransitionLayer),
    DecoderStage(DecoderStage),
    /// Final transposed convolution producing class logits.
    Classifier(ConvTranspose2d),
}

impl Block {
    pub fn spec(&self) -> Option<BlockSpec> {
        match self {
            Block::Downsampler(b) => Some(b.spec()),
            Block::NonBottleneck1d(b) => Some(b.spec()),
            Block::DenseBlock(b) => Some(b.spec()),
            Block::Transition(b) => Some(b.spec()),
            Block::DecoderStage(b) => Some(b.spec()),
            Block::Classifier(_) => None,
        }
    }

    pub fn output_shape(&self, input: Shape4) -> Result<Shape4> {
        match self {
            Block::Downsampler(b) => b.output_shape(input),
            Block::NonBottleneck1d(b) => b.output_shape(input),
            Block::DenseBlock(b) => b.output_shape(input),
            Block::Transition(b) => b.output_shape(input),
            Block::DecoderStage(b) => b.output_shape(input),
            Block::Classifier(b) => b.output_shape(input),
        }
    }

    pub fn forward<T: Scalar>(&self, ctx: &mut Forward<'_, T>, x: Var) -> Result<Var> {
        match self {
            Block::Downsampler(b) => b.forward(ctx, x),
            Block::NonBottleneck1d(b) => b.forward(ctx, x),
            Block::DenseBlock(b) => b.forward(ctx, x),
            Block::Transition(b) => b.forward(ctx, x),
            Block::DecoderStage(b) => b.forward(ctx, x),
            Block::Classifier(b) => b.forward(ctx, x),
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Block::Classifier(b) => b.param_count(),
            other => other.spec().map_or(0, |s| s.param_count()),
        }
    }

    pub fn macs(&self, input: Shape4) -> u64 {
        match self {
            Block::Downsampler(b) => b.macs(input),
            Block::NonBottleneck1d(b) => b.macs(input),
            Block::DenseBlock(b) => b.macs(input),
            Block::Transition(b) => b.macs(input),
            Block::DecoderStage(b) => b.macs(input),
            Block::Classifier(b) => b.macs(input),
        }
    }
}
