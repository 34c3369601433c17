//! Shape traces, parameter and MAC accounting, and throughput measurement.

use std::fmt::Write as _;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::model::{ModelGraph, ModelInputs, NodeOp, Variant};
use crate::nn::{Forward, ParamStore, Shape4};
use crate::tensor::Tensor;

/// One executed graph node.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerReport {
    pub name: String,
    pub input: Shape4,
    pub output: Shape4,
    pub params: usize,
    /// Convolution multiply-accumulates for one sample.
    pub macs: u64,
}

impl LayerReport {
    /// Encoder or decoder part the layer belongs to.
    pub fn stage(&self) -> &str {
        let head = self.name.split('.').next().unwrap_or(&self.name);
        if head.starts_with("fusion") {
            "fusion"
        } else {
            head
        }
    }
}

/// Layer-by-layer report for a single-sample input at a given resolution.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnalysisReport {
    pub variant: String,
    pub resolution: (usize, usize),
    pub layers: Vec<LayerReport>,
}

impl AnalysisReport {
    pub fn total_params(&self) -> usize {
        self.layers.iter().map(|l| l.params).sum()
    }

    pub fn total_macs(&self) -> u64 {
        self.layers.iter().map(|l| l.macs).sum()
    }

    /// `(stage, params, macs)` in first-appearance order.
    pub fn stage_totals(&self) -> Vec<(String, usize, u64)> {
        let mut out: Vec<(String, usize, u64)> = Vec::new();
        for l in &self.layers {
            match out.iter_mut().find(|(s, _, _)| s == l.stage()) {
                Some(entry) => {
                    entry.1 += l.params;
                    entry.2 += l.macs;
                }
                None => out.push((l.stage().to_string(), l.params, l.macs)),
            }
        }
        out
    }

    pub fn to_table(&self) -> String {
        let fmt_shape = |s: &Shape4| format!("{}x{}x{}", s[1], s[2], s[3]);
        let width = self.layers.iter().map(|l| l.name.len()).max().unwrap_or(5).max(5);
        let mut s = String::new();
        writeln!(
            s,
            "{:<width$}  {:>14}  {:>14}  {:>10}  {:>14}",
            "layer", "input", "output", "params", "MACs"
        )
        .expect("string write");
        for l in &self.layers {
            writeln!(
                s,
                "{:<width$}  {:>14}  {:>14}  {:>10}  {:>14}",
                l.name,
                fmt_shape(&l.input),
                fmt_shape(&l.output),
                l.params,
                l.macs
            )
            .expect("string write");
        }
        for (stage, params, macs) in self.stage_totals() {
            writeln!(s, "{:<width$}  {:>14}  {:>14}  {params:>10}  {macs:>14}", format!("[{stage}]"), "", "")
                .expect("string write");
        }
        writeln!(
            s,
            "{:<width$}  {:>14}  {:>14}  {:>10}  {:>14}",
            "total",
            "",
            "",
            self.total_params(),
            self.total_macs()
        )
        .expect("string write");
        s
    }

    pub fn to_records(&self) -> String {
        let shape = |s: &Shape4| format!("{}x{}x{}x{}", s[0], s[1], s[2], s[3]);
        let mut s = String::new();
        for l in &self.layers {
            writeln!(
                s,
                "layer={} input={} output={} params={} macs={}",
                l.name,
                shape(&l.input),
                shape(&l.output),
                l.params,
                l.macs
            )
            .expect("string write");
        }
        for (stage, params, macs) in self.stage_totals() {
            writeln!(s, "stage={stage} params={params} macs={macs}").expect("string write");
        }
        writeln!(
            s,
            "variant={} resolution={}x{} total_params={} total_macs={}",
            self.variant,
            self.resolution.0,
            self.resolution.1,
            self.total_params(),
            self.total_macs()
        )
        .expect("string write");
        s
    }
}

/// Symbolic shape propagation with per-layer parameter and MAC counts.
pub fn shape_trace(graph: &ModelGraph, (height, width): (usize, usize)) -> Result<AnalysisReport> {
    let shapes = graph.node_shapes(1, height, width)?;
    let params: std::collections::HashMap<String, usize> = graph.parameter_count().per_layer.into_iter().collect();
    let mut layers = Vec::new();
    for (node, &(input, output)) in graph.nodes().iter().zip(&shapes) {
        let macs = match &node.op {
            NodeOp::Input(_) => continue,
            NodeOp::Block(b) => b.macs(input),
            NodeOp::Fusion(f) => {
                let depth = shapes[node.inputs[0]].1;
                f.macs(depth)
            }
        };
        layers.push(LayerReport {
            name: node.name.clone(),
            input,
            output,
            params: params.get(&node.name).copied().unwrap_or(0),
            macs,
        });
    }
    Ok(AnalysisReport {
        variant: graph.variant().tag().to_string(),
        resolution: (height, width),
        layers,
    })
}

/// Total convolution MACs for one sample.
pub fn flops_estimate(graph: &ModelGraph, resolution: (usize, usize)) -> Result<u64> {
    Ok(shape_trace(graph, resolution)?.total_macs())
}

/// Fixed all-0.5 inputs for a single sample.
pub fn constant_inputs(graph: &ModelGraph, (height, width): (usize, usize)) -> ModelInputs {
    let (pc, sc) = graph.input_channels();
    ModelInputs {
        primary: Tensor::full(&[1, pc, height, width], 0.5),
        secondary: sc.map(|c| Tensor::full(&[1, c, height, width], 0.5)),
    }
}

/// Frames per second over timed iterations.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchStats {
    pub threads: usize,
    pub iterations: usize,
    pub median_fps: f64,
    pub p5_fps: f64,
    pub p95_fps: f64,
}

impl BenchStats {
    pub fn to_record(&self) -> String {
        format!(
            "threads={} iterations={} median_fps={:.3} p5_fps={:.3} p95_fps={:.3}",
            self.threads, self.iterations, self.median_fps, self.p5_fps, self.p95_fps
        )
    }
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Eval-mode single-sample inference throughput on a dedicated pool of `threads` workers.
pub fn benchmark(
    graph: &ModelGraph,
    params: &ParamStore,
    resolution: (usize, usize),
    warmup: usize,
    iterations: usize,
    threads: usize,
) -> Result<BenchStats> {
    if iterations == 0 || threads == 0 {
        return Err(Error::Config("benchmark needs at least one iteration and one thread".into()));
    }
    let inputs = constant_inputs(graph, resolution);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot build a {threads}-thread pool: {e}")))?;
    pool.install(|| {
        let run = || -> Result<f64> {
            let start = Instant::now();
            let mut ctx = Forward::inference(params);
            graph.forward(&mut ctx, &inputs)?;
            Ok(1.0 / start.elapsed().as_secs_f64().max(1e-9))
        };
        for _ in 0..warmup {
            run()?;
        }
        let mut fps = (0..iterations).map(|_| run()).collect::<Result<Vec<_>>>()?;
        fps.sort_by(f64::total_cmp);
        Ok(BenchStats {
            threads,
            iterations,
            median_fps: percentile(&fps, 0.5),
            p5_fps: percentile(&fps, 0.05),
            p95_fps: percentile(&fps, 0.95),
        })
    })
}

/// Relative tolerance of the parameter-count gate.
pub const PARAM_TOLERANCE: f64 = 0.10;
/// Counts of variants with the same published value may differ by this fraction.
pub const SAME_SIZE_TOLERANCE: f64 = 0.01;

/// Outcome of comparing a parameter count with the published figure.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParamGate {
    pub variant: Variant,
    pub count: usize,
    pub reported: f64,
    /// `count / reported − 1`.
    pub deviation: f64,
    /// Whether this variant is gated at all.
    pub gated: bool,
}

impl ParamGate {
    pub fn new(variant: Variant, count: usize) -> Self {
        let reported = variant.reported_params_millions() * 1e6;
        Self {
            variant,
            count,
            reported,
            deviation: count as f64 / reported - 1.0,
            gated: matches!(variant, Variant::LdfNet | Variant::ErfNetRgb),
        }
    }

    pub fn passes(&self) -> bool {
        self.deviation.abs() <= PARAM_TOLERANCE
    }

    pub fn to_record(&self) -> String {
        let status = match (self.gated, self.passes()) {
            (false, _) => "ungated",
            (true, true) => "pass",
            (true, false) => "fail",
        };
        format!(
            "variant={} params={} reported={:.2}M deviation={:+.2}% gate={status}",
            self.variant,
            self.count,
            self.reported / 1e6,
            100.0 * self.deviation
        )
    }
}

/// Checks that counts rank like the published sizes: variants sharing a
/// published value agree within [`SAME_SIZE_TOLERANCE`], and every group is
/// strictly smaller than the next larger one.
pub fn check_reported_ordering(counts: &[(Variant, usize)]) -> std::result::Result<(), String> {
    let mut groups: Vec<(f64, Vec<(Variant, usize)>)> = Vec::new();
    for &(v, n) in counts {
        let key = v.reported_params_millions();
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, members)) => members.push((v, n)),
            None => groups.push((key, vec![(v, n)])),
        }
    }
    groups.sort_by(|a, b| a.0.total_cmp(&b.0));
    for (key, members) in &groups {
        let lo = members.iter().map(|m| m.1).min().unwrap_or(0);
        let hi = members.iter().map(|m| m.1).max().unwrap_or(0);
        if hi as f64 > lo as f64 * (1.0 + SAME_SIZE_TOLERANCE) {
            return Err(format!("variants reported at {key:.2}M differ by more than 1%: {members:?}"));
        }
    }
    for pair in groups.windows(2) {
        let small = pair[0].1.iter().map(|m| m.1).max().unwrap_or(0);
        let large = pair[1].1.iter().map(|m| m.1).min().unwrap_or(0);
        if small >= large {
            return Err(format!(
                "{:.2}M group ({small}) is not below {:.2}M group ({large})",
                pair[0].0, pair[1].0
            ));
        }
    }
    Ok(())
}
