use std::ops::Range;

use super::config::{BranchKind, ModelConfig, Variant};
use crate::autodiff::{ConvTranspose2dParams, Var};
use crate::error::{Error, Result};
use crate::nn::{
    Block, BlockKind, Conv2d, ConvTranspose2d, DecoderStage, DenseBlock, DownsamplerBlock, Forward, FusionAdapter,
    Group, NonBottleneck1d, ParamRegistry, ParamStore, Shape4, TransitionLayer,
};
use crate::tensor::{Scalar, Tensor};

pub type NodeId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputSlot {
    /// Input of the RGB encoder.
    Primary,
    /// Input of the second (depth) encoder.
    Secondary,
}

#[derive(Clone, Debug)]
#[allow(clippy::large_enum_variant)]
pub enum NodeOp {
    Input(InputSlot),
    Block(Block),
    /// Inputs are `[second-branch feature, RGB feature]`.
    Fusion(FusionAdapter),
}

#[derive(Clone, Debug)]
pub struct GraphNode {
    pub name: String,
    pub op: NodeOp,
    pub inputs: Vec<NodeId>,
    /// Registry entries owned by this node.
    pub params: Range<usize>,
}

impl GraphNode {
    pub fn kind(&self) -> Option<BlockKind> {
        match &self.op {
            NodeOp::Input(_) => None,
            NodeOp::Fusion(_) => Some(BlockKind::FusionAdapter),
            NodeOp::Block(b) => b.spec().map(|s| s.kind()),
        }
    }
}

/// Tensors fed to the model, one per input slot.
#[derive(Clone, Debug)]
pub struct ModelInputs<T: Scalar = f32> {
    pub primary: Tensor<T>,
    pub secondary: Option<Tensor<T>>,
}

/// Immutable, topologically ordered network graph with its parameter registry.
#[derive(Clone, Debug)]
pub struct ModelGraph {
    config: ModelConfig,
    registry: ParamRegistry,
    nodes: Vec<GraphNode>,
    encoder_output: NodeId,
    aux_head: Conv2d,
}

/// Trainable scalar counts, in total and per graph node.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterCount {
    pub total: usize,
    pub per_layer: Vec<(String, usize)>,
}

struct Builder {
    registry: ParamRegistry,
    nodes: Vec<GraphNode>,
}

impl Builder {
    fn push(&mut self, name: String, inputs: Vec<NodeId>, make: impl FnOnce(&mut ParamRegistry, &str) -> Result<NodeOp>) -> Result<NodeId> {
        let start = self.registry.len();
        let op = make(&mut self.registry, &name)?;
        self.nodes.push(GraphNode {
            name,
            op,
            inputs,
            params: start..self.registry.len(),
        });
        Ok(self.nodes.len() - 1)
    }

    fn block(&mut self, name: String, input: NodeId, make: impl FnOnce(&mut ParamRegistry, &str) -> Result<Block>) -> Result<NodeId> {
        self.push(name, vec![input], |r, n| make(r, n).map(NodeOp::Block))
    }
}

/// Feature taps of the second encoder, in fusion order.
type FusionSources = Vec<(usize, NodeId, usize)>;

impl ModelGraph {
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    pub fn registry(&self) -> &ParamRegistry {
        &self.registry
    }

    pub fn nodes(&self) -> &[GraphNode] {
        &self.nodes
    }

    pub fn encoder_output(&self) -> NodeId {
        self.encoder_output
    }

    pub fn fusion_adapters(&self) -> impl Iterator<Item = &FusionAdapter> {
        self.nodes.iter().filter_map(|n| match &n.op {
            NodeOp::Fusion(f) => Some(f),
            _ => None,
        })
    }

    pub fn fusion_count(&self) -> usize {
        self.fusion_adapters().count()
    }

    pub fn init_params<T: Scalar>(&self, seed: u64) -> ParamStore<T> {
        ParamStore::init(&self.registry, seed)
    }

    /// Exact number of trainable scalars (conv weights and biases, BN scale and shift).
    pub fn parameter_count(&self) -> ParameterCount {
        let specs = self.registry.specs();
        let per_layer: Vec<(String, usize)> = self
            .nodes
            .iter()
            .filter(|n| !n.params.is_empty())
            .map(|n| {
                let count = specs[n.params.clone()]
                    .iter()
                    .filter(|s| s.kind.is_trainable())
                    .map(|s| s.numel())
                    .sum();
                (n.name.clone(), count)
            })
            .collect();
        ParameterCount {
            total: self.registry.trainable_count(),
            per_layer,
        }
    }

    /// Expected channel count of each input slot.
    pub fn input_channels(&self) -> (usize, Option<usize>) {
        let v = self.config.variant;
        (v.primary_input().channels(), v.secondary_input().map(|s| s.channels()))
    }

    /// Zeroes the convolutions and BN shifts of every fusion adapter, cutting
    /// the second encoder out of the prediction.
    pub fn zero_fusion_adapters<T: Scalar>(&self, store: &mut ParamStore<T>) {
        for f in self.fusion_adapters() {
            let ids = [Some(f.conv.conv.weight()), f.conv.conv.bias(), Some(f.conv.bn.beta())];
            for id in ids.into_iter().flatten() {
                store.get_mut(id).data_mut().fill(T::zero());
            }
        }
    }

    fn check_inputs<T: Scalar>(&self, inputs: &ModelInputs<T>) -> Result<(Shape4, Option<Shape4>)> {
        const OP: &str = "forward";
        let (pc, sc) = self.input_channels();
        let primary = match *inputs.primary.shape() {
            [n, c, h, w] => [n, c, h, w],
            ref s => return Err(Error::argument(OP, format!("primary input must be N×C×H×W, got {s:?}"))),
        };
        if primary[1] != pc {
            return Err(Error::argument(
                OP,
                format!("{} expects a {pc}-channel primary input, got {}", self.variant(), primary[1]),
            ));
        }
        let m = ModelConfig::RESOLUTION_MULTIPLE;
        if primary[2] % m != 0 || primary[3] % m != 0 {
            return Err(Error::argument(
                OP,
                format!("input resolution {}x{} is not divisible by {m}", primary[2], primary[3]),
            ));
        }
        let secondary = match (sc, &inputs.secondary) {
            (None, None) => None,
            (None, Some(_)) => {
                return Err(Error::argument(OP, format!("{} takes no secondary input", self.variant())))
            }
            (Some(c), None) => {
                return Err(Error::argument(
                    OP,
                    format!("{} needs a {c}-channel secondary input", self.variant()),
                ))
            }
            (Some(c), Some(t)) => {
                let s = match *t.shape() {
                    [n, c2, h, w] => [n, c2, h, w],
                    ref s => return Err(Error::argument(OP, format!("secondary input must be N×C×H×W, got {s:?}"))),
                };
                if s[1] != c {
                    return Err(Error::argument(OP, format!("secondary input needs {c} channels, got {}", s[1])));
                }
                if (s[0], s[2], s[3]) != (primary[0], primary[2], primary[3]) {
                    return Err(Error::argument(OP, format!("input slots disagree: {primary:?} vs {s:?}")));
                }
                Some(s)
            }
        };
        Ok((primary, secondary))
    }

    fn run<T: Scalar>(&self, ctx: &mut Forward<'_, T>, inputs: &ModelInputs<T>, last: NodeId) -> Result<Var> {
        self.check_inputs(inputs)?;
        let mut values: Vec<Option<Var>> = vec![None; last + 1];
        for (id, node) in self.nodes[..=last].iter().enumerate() {
            let var = match &node.op {
                NodeOp::Input(InputSlot::Primary) => ctx.input(inputs.primary.clone()),
                NodeOp::Input(InputSlot::Secondary) => {
                    let t = inputs.secondary.as_ref().expect("checked by check_inputs");
                    ctx.input(t.clone())
                }
                NodeOp::Block(block) => {
                    let x = values[node.inputs[0]].expect("topological order");
                    let in_shape = ctx.tape.shape(x).to_vec();
                    let y = block.forward(ctx, x)?;
                    let out_shape = ctx.tape.shape(y).to_vec();
                    ctx.record(&node.name, &in_shape, &out_shape);
                    y
                }
                NodeOp::Fusion(adapter) => {
                    let d = values[node.inputs[0]].expect("topological order");
                    let rgb = values[node.inputs[1]].expect("topological order");
                    let shape = ctx.tape.shape(rgb).to_vec();
                    let y = adapter.forward(ctx, d, rgb)?;
                    ctx.record(&node.name, &shape, &shape);
                    y
                }
            };
            values[id] = Some(var);
        }
        Ok(values[last].expect("last node evaluated"))
    }

    /// Full-resolution class logits, N×K×H×W.
    pub fn forward<T: Scalar>(&self, ctx: &mut Forward<'_, T>, inputs: &ModelInputs<T>) -> Result<Var> {
        self.run(ctx, inputs, self.nodes.len() - 1)
    }

    /// Encoder features at ⅛ resolution (after the last fusion).
    pub fn forward_encoder<T: Scalar>(&self, ctx: &mut Forward<'_, T>, inputs: &ModelInputs<T>) -> Result<Var> {
        self.run(ctx, inputs, self.encoder_output)
    }

    /// Encoder followed by the auxiliary 1×1 classifier used for encoder-only training.
    pub fn forward_auxiliary<T: Scalar>(&self, ctx: &mut Forward<'_, T>, inputs: &ModelInputs<T>) -> Result<Var> {
        let features = self.forward_encoder(ctx, inputs)?;
        self.aux_head.forward(ctx, features)
    }

    /// Symbolic output shape of every node for a batch of `n` inputs at `h`×`w`.
    pub fn node_shapes(&self, n: usize, h: usize, w: usize) -> Result<Vec<(Shape4, Shape4)>> {
        let m = ModelConfig::RESOLUTION_MULTIPLE;
        if !h.is_multiple_of(m) || !w.is_multiple_of(m) || h == 0 || w == 0 {
            return Err(Error::Config(format!("resolution {h}x{w} is not divisible by {m}")));
        }
        let (pc, sc) = self.input_channels();
        let mut out: Vec<(Shape4, Shape4)> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let shapes = match &node.op {
                NodeOp::Input(InputSlot::Primary) => ([n, pc, h, w], [n, pc, h, w]),
                NodeOp::Input(InputSlot::Secondary) => {
                    let c = sc.ok_or_else(|| Error::Config("secondary input without a second branch".into()))?;
                    ([n, c, h, w], [n, c, h, w])
                }
                NodeOp::Block(b) => {
                    let input = out[node.inputs[0]].1;
                    (input, b.output_shape(input)?)
                }
                NodeOp::Fusion(f) => {
                    let rgb = out[node.inputs[1]].1;
                    (rgb, f.output_shape(out[node.inputs[0]].1, rgb)?)
                }
            };
            out.push(shapes);
        }
        Ok(out)
    }
}

/// Assembles the network graph for a configuration.
pub fn build_model(config: &ModelConfig) -> Result<ModelGraph> {
    config.validate()?;
    let mut b = Builder {
        registry: ParamRegistry::new(),
        nodes: Vec::new(),
    };
    let v = config.variant;
    let ch = config.channels;
    let drop = config.dropout;

    let primary = b.push("input.primary".into(), vec![], |_, _| Ok(NodeOp::Input(InputSlot::Primary)))?;
    let mut sources: FusionSources = Vec::new();
    if let (Some(kind), Some(sec)) = (v.branch_kind(), v.secondary_input()) {
        let input = b.push("input.secondary".into(), vec![], |_, _| Ok(NodeOp::Input(InputSlot::Secondary)))?;
        sources = match kind {
            BranchKind::Dense => build_dense_branch(&mut b, config, input, sec.channels())?,
            BranchKind::Residual => build_residual_branch(&mut b, config, "dy", input, sec.channels())?.1,
        };
    }

    // RGB encoder, fusing second-branch features at matching resolutions.
    let (rgb_out, taps) = build_residual_branch(&mut b, config, "rgb", primary, v.primary_input().channels())?;
    let mut taps = taps.into_iter().map(|(point, node, _)| (point, node)).collect::<Vec<_>>();
    // Each RGB tap is replaced by its fused version; later RGB blocks read the fused node.
    let mut encoder_output = rgb_out;
    for (point, src, src_ch) in sources {
        let (_, rgb_node) = taps.iter().copied().find(|(p, _)| *p == point).expect("fusion point exists");
        let dst_ch = [ch.stem, ch.mid, ch.mid, ch.deep, ch.deep][point - 1];
        let index = b.nodes.iter().filter(|n| matches!(n.op, NodeOp::Fusion(_))).count() + 1;
        let fused = b.push(format!("fusion{index}"), vec![src, rgb_node], |r, name| {
            FusionAdapter::new(r, name, point, src_ch, dst_ch).map(NodeOp::Fusion)
        })?;
        // Rewire consumers of the RGB tap to the fused node.
        for node in b.nodes.iter_mut().take(fused).skip(rgb_node + 1) {
            if node.name.starts_with("rgb.") {
                for i in node.inputs.iter_mut() {
                    if *i == rgb_node {
                        *i = fused;
                    }
                }
            }
        }
        if rgb_node == encoder_output {
            encoder_output = fused;
        }
        for t in taps.iter_mut() {
            if t.1 == rgb_node {
                t.1 = fused;
            }
        }
    }
    // Fusion nodes were appended after the RGB encoder; restore topological order.
    let order = topological_order(&b.nodes)?;
    let (nodes, encoder_output) = reorder(b.nodes, &order, encoder_output);
    b.nodes = nodes;

    let dec1 = b.block("decoder.stage1".into(), encoder_output, |r, n| {
        DecoderStage::new(r, n, ch.deep, ch.mid, config.decoder_blocks, drop).map(Block::DecoderStage)
    })?;
    let dec2 = b.block("decoder.stage2".into(), dec1, |r, n| {
        DecoderStage::new(r, n, ch.mid, ch.stem, config.decoder_blocks, drop).map(Block::DecoderStage)
    })?;
    b.block("decoder.output".into(), dec2, |r, n| {
        let geometry = ConvTranspose2dParams::new((2, 2), (0, 0), (0, 0));
        Ok(Block::Classifier(ConvTranspose2d::new(r, n, (ch.stem, config.num_classes), (2, 2), geometry, true)))
    })?;

    b.registry.set_group(Group::Auxiliary);
    let aux_head = Conv2d::new(
        &mut b.registry,
        "aux.classifier",
        (ch.deep, config.num_classes),
        (1, 1),
        Default::default(),
        true,
    );
    Ok(ModelGraph {
        config: config.clone(),
        registry: b.registry,
        nodes: b.nodes,
        encoder_output,
        aux_head,
    })
}

/// Builds an ERFNet-style encoder: three downsamplers with residual stacks at
/// ¼ and ⅛ resolution. Returns the last node and the five fusion taps
/// `(point, node, channels)`.
fn build_residual_branch(
    b: &mut Builder,
    config: &ModelConfig,
    prefix: &str,
    input: NodeId,
    in_ch: usize,
) -> Result<(NodeId, FusionSources)> {
    let ch = config.channels;
    let drop = config.dropout;
    let down1 = b.block(format!("{prefix}.down1"), input, |r, n| {
        DownsamplerBlock::new(r, n, in_ch, ch.stem).map(Block::Downsampler)
    })?;
    let down2 = b.block(format!("{prefix}.down2"), down1, |r, n| {
        DownsamplerBlock::new(r, n, ch.stem, ch.mid).map(Block::Downsampler)
    })?;
    let mut last = down2;
    for j in 0..config.mid_blocks {
        last = b.block(format!("{prefix}.stage2.nb{}", j + 1), last, |r, n| {
            NonBottleneck1d::new(r, n, ch.mid, 1, drop).map(Block::NonBottleneck1d)
        })?;
    }
    let stage2 = last;
    let down3 = b.block(format!("{prefix}.down3"), stage2, |r, n| {
        DownsamplerBlock::new(r, n, ch.mid, ch.deep).map(Block::Downsampler)
    })?;
    last = down3;
    for (j, &d) in config.dilations.iter().enumerate() {
        last = b.block(format!("{prefix}.stage3.nb{}", j + 1), last, |r, n| {
            NonBottleneck1d::new(r, n, ch.deep, d, drop).map(Block::NonBottleneck1d)
        })?;
    }
    let taps = vec![
        (1, down1, ch.stem),
        (2, down2, ch.mid),
        (3, stage2, ch.mid),
        (4, down3, ch.deep),
        (5, last, ch.deep),
    ];
    Ok((last, taps))
}

fn build_dense_branch(b: &mut Builder, config: &ModelConfig, input: NodeId, in_ch: usize) -> Result<FusionSources> {
    let ch = config.channels;
    let (k, bw, drop) = (config.growth_rate, config.bottleneck_width, config.dropout);
    let mut sources = Vec::new();
    let down1 = b.block("dy.down1".into(), input, |r, n| {
        DownsamplerBlock::new(r, n, in_ch, ch.stem).map(Block::Downsampler)
    })?;
    let (mut last, mut last_ch) = (down1, ch.stem);
    if config.shallow_modules > 0 {
        last = b.block("dy.shallow".into(), down1, |r, n| {
            DenseBlock::new(r, n, ch.stem, config.shallow_modules, k, bw, drop).map(Block::DenseBlock)
        })?;
        last_ch = ch.stem + config.shallow_modules * k;
        sources.push((1, last, last_ch));
    }
    let [t1, t2] = ch.transitions;
    let [n2, n3] = config.dense_modules;
    let tr1 = b.block("dy.transition1".into(), last, |r, n| {
        TransitionLayer::new(r, n, last_ch, t1).map(Block::Transition)
    })?;
    sources.push((2, tr1, t1));
    let dense2 = b.block("dy.dense2".into(), tr1, |r, n| {
        DenseBlock::new(r, n, t1, n2, k, bw, drop).map(Block::DenseBlock)
    })?;
    let d2 = t1 + n2 * k;
    sources.push((3, dense2, d2));
    let tr2 = b.block("dy.transition2".into(), dense2, |r, n| {
        TransitionLayer::new(r, n, d2, t2).map(Block::Transition)
    })?;
    sources.push((4, tr2, t2));
    let dense3 = b.block("dy.dense3".into(), tr2, |r, n| {
        DenseBlock::new(r, n, t2, n3, k, bw, drop).map(Block::DenseBlock)
    })?;
    sources.push((5, dense3, t2 + n3 * k));
    Ok(sources)
}

/// Stable topological order (Kahn's algorithm, lowest index first).
fn topological_order(nodes: &[GraphNode]) -> Result<Vec<NodeId>> {
    let n = nodes.len();
    let mut indegree = vec![0usize; n];
    let mut users: Vec<Vec<NodeId>> = vec![Vec::new(); n];
    for (id, node) in nodes.iter().enumerate() {
        for &i in &node.inputs {
            indegree[id] += 1;
            users[i].push(id);
        }
    }
    let mut ready: std::collections::BTreeSet<NodeId> = (0..n).filter(|&i| indegree[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(id) = ready.pop_first() {
        order.push(id);
        for &u in &users[id] {
            indegree[u] -= 1;
            if indegree[u] == 0 {
                ready.insert(u);
            }
        }
    }
    if order.len() != n {
        return Err(Error::Config("model graph contains a cycle".into()));
    }
    Ok(order)
}

fn reorder(nodes: Vec<GraphNode>, order: &[NodeId], marker: NodeId) -> (Vec<GraphNode>, NodeId) {
    let mut position = vec![0; nodes.len()];
    for (new, &old) in order.iter().enumerate() {
        position[old] = new;
    }
    let mut slots: Vec<Option<GraphNode>> = nodes.into_iter().map(Some).collect();
    let reordered = order
        .iter()
        .map(|&old| {
            let mut node = slots[old].take().expect("each node once");
            node.inputs.iter_mut().for_each(|i| *i = position[*i]);
            node
        })
        .collect();
    (reordered, position[marker])
}
