use super::forward::{BnUpdate, Forward};
use super::params::{EntryKind, Init, ParamId, ParamRegistry};
use crate::autodiff::{BatchNormMode, Conv2dParams, ConvTranspose2dParams, Var};
use crate::error::{Error, Result};
use crate::tensor::Scalar;

/// N×C×H×W extents.
pub type Shape4 = [usize; 4];

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Clone, Debug)]
pub struct Conv2d {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: (usize, usize),
    pub geometry: Conv2dParams,
    weight: ParamId,
    bias: Option<ParamId>,
}

impl Conv2d {
    pub fn new(
        reg: &mut ParamRegistry,
        name: &str,
        (in_ch, out_ch): (usize, usize),
        kernel: (usize, usize),
        geometry: Conv2dParams,
        with_bias: bool,
    ) -> Self {
        let fan_in = in_ch * kernel.0 * kernel.1;
        let weight = reg.register(
            format!("{name}.weight"),
            &[out_ch, in_ch, kernel.0, kernel.1],
            EntryKind::Weight,
            Init::HeUniform { fan_in },
        );
        let bias = with_bias.then(|| reg.register(format!("{name}.bias"), &[out_ch], EntryKind::Bias, Init::Zeros));
        Self {
            in_ch,
            out_ch,
            kernel,
            geometry,
            weight,
            bias,
        }
    }

    pub fn weight(&self) -> ParamId {
        self.weight
    }

    pub fn bias(&self) -> Option<ParamId> {
        self.bias
    }

    pub fn forward<T: Scalar>(&self, ctx: &mut Forward<'_, T>, x: Var) -> Result<Var> {
        let w = ctx.param(self.weight);
        let b = self.bias.map(|b| ctx.param(b));
        ctx.tape.conv2d(x, w, b, self.geometry)
    }

    pub fn output_shape(&self, [n, c, h, w]: Shape4) -> Result<Shape4> {
        if c != self.in_ch {
            return Err(Error::mismatch("conv2d", "input channels", self.in_ch, c));
        }
        let (oh, ow) = self
            .geometry
            .output_hw(h, w, self.kernel.0, self.kernel.1)
            .ok_or_else(|| Error::shape("conv2d", format!("kernel does not fit {h}x{w} input")))?;
        Ok([n, self.out_ch, oh, ow])
    }

    pub fn param_count(&self) -> usize {
        self.out_ch * self.in_ch * self.kernel.0 * self.kernel.1 + if self.bias.is_some() { self.out_ch } else { 0 }
    }

    /// Multiply-accumulates per sample.
    pub fn macs(&self, input: Shape4) -> u64 {
        let [_, _, oh, ow] = self.output_shape(input).unwrap_or([0; 4]);
        (self.out_ch * self.in_ch * self.kernel.0 * self.kernel.1 * oh * ow) as u64
    }
}

#[derive(Clone, Debug)]
pub struct ConvTranspose2d {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: (usize, usize),
    pub geometry: ConvTranspose2dParams,
    weight: ParamId,
    bias: Option<ParamId>,
}

impl ConvTranspose2d {
    pub fn new(
        reg: &mut ParamRegistry,
        name: &str,
        (in_ch, out_ch): (usize, usize),
        kernel: (usize, usize),
        geometry: ConvTranspose2dParams,
        with_bias: bool,
    ) -> Self {
        let fan_in = in_ch * kernel.0 * kernel.1 / (geometry.stride.0 * geometry.stride.1).max(1);
        let weight = reg.register(
            format!("{name}.weight"),
            &[in_ch, out_ch, kernel.0, kernel.1],
            EntryKind::Weight,
            Init::HeUniform { fan_in },
        );
        let bias = with_bias.then(|| reg.register(format!("{name}.bias"), &[out_ch], EntryKind::Bias, Init::Zeros));
        Self {
            in_ch,
            out_ch,
            kernel,
            geometry,
            weight,
            bias,
        }
    }

    pub fn forward<T: Scalar>(&self, ctx: &mut Forward<'_, T>, x: Var) -> Result<Var> {
        let w = ctx.param(self.weight);
        let b = self.bias.map(|b| ctx.param(b));
        ctx.tape.conv_transpose2d(x, w, b, self.geometry)
    }

    pub fn output_shape(&self, [n, c, h, w]: Shape4) -> Result<Shape4> {
        if c != self.in_ch {
            return Err(Error::mismatch("conv_transpose2d", "input channels", self.in_ch, c));
        }
        let (oh, ow) = self
            .geometry
            .output_hw(h, w, self.kernel.0, self.kernel.1)
            .ok_or_else(|| Error::shape("conv_transpose2d", "empty output"))?;
        Ok([n, self.out_ch, oh, ow])
    }

    pub fn param_count(&self) -> usize {
        self.out_ch * self.in_ch * self.kernel.0 * self.kernel.1 + if self.bias.is_some() { self.out_ch } else { 0 }
    }

    pub fn macs(&self, [_, _, h, w]: Shape4) -> u64 {
        (self.out_ch * self.in_ch * self.kernel.0 * self.kernel.1 * h * w) as u64
    }
}

#[derive(Clone, Debug)]
pub struct BatchNorm2d {
    pub channels: usize,
    gamma: ParamId,
    beta: ParamId,
    running_mean: ParamId,
    running_var: ParamId,
}

impl BatchNorm2d {
    pub fn new(reg: &mut ParamRegistry, name: &str, channels: usize) -> Self {
        let shape = [channels];
        Self {
            channels,
            gamma: reg.register(format!("{name}.gamma"), &shape, EntryKind::BnGamma, Init::Ones),
            beta: reg.register(format!("{name}.beta"), &shape, EntryKind::BnBeta, Init::Zeros),
            running_mean: reg.register(format!("{name}.running_mean"), &shape, EntryKind::RunningMean, Init::Zeros),
            running_var: reg.register(format!("{name}.running_var"), &shape, EntryKind::RunningVar, Init::Ones),
        }
    }

    pub fn gamma(&self) -> ParamId {
        self.gamma
    }

    pub fn beta(&self) -> ParamId {
        self.beta
    }

    pub fn forward<T: Scalar>(&self, ctx: &mut Forward<'_, T>, x: Var) -> Result<Var> {
        let gamma = ctx.param(self.gamma);
        let beta = ctx.param(self.beta);
        if ctx.is_train() {
            let (y, stats) = ctx.tape.batch_norm(x, gamma, beta, BatchNormMode::Train, BN_EPSILON)?;
            if let Some(stats) = stats {
                ctx.push_bn_update(BnUpdate {
                    mean: self.running_mean,
                    var: self.running_var,
                    stats,
                });
            }
            Ok(y)
        } else {
            let store = ctx.store();
            let mode = BatchNormMode::Eval {
                mean: store.get(self.running_mean).data(),
                var: store.get(self.running_var).data(),
            };
            Ok(ctx.tape.batch_norm(x, gamma, beta, mode, BN_EPSILON)?.0)
        }
    }

    pub fn param_count(&self) -> usize {
        2 * self.channels
    }
}

/// Convolution followed by batch norm and ReLU.
#[derive(Clone, Debug)]
pub struct ConvBnRelu {
    pub conv: Conv2d,
    pub bn: BatchNorm2d,
}

impl ConvBnRelu {
    pub fn new(
        reg: &mut ParamRegistry,
        name: &str,
        channels: (usize, usize),
        kernel: (usize, usize),
        geometry: Conv2dParams,
    ) -> Self {
        Self {
            conv: Conv2d::new(reg, &format!("{name}.conv"), channels, kernel, geometry, true),
            bn: BatchNorm2d::new(reg, &format!("{name}.bn"), channels.1),
        }
    }

    pub fn forward<T: Scalar>(&self, ctx: &mut Forward<'_, T>, x: Var) -> Result<Var> {
        let y = self.conv.forward(ctx, x)?;
        let y = self.bn.forward(ctx, y)?;
        ctx.tape.relu(y)
    }

    pub fn output_shape(&self, input: Shape4) -> Result<Shape4> {
        self.conv.output_shape(input)
    }

    pub fn param_count(&self) -> usize {
        self.conv.param_count() + self.bn.param_count()
    }

    pub fn macs(&self, input: Shape4) -> u64 {
        self.conv.macs(input)
    }
}
