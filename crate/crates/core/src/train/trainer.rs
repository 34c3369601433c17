use std::fmt;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::{Adam, AdamConfig};
use super::augment::augment;
use super::schedule::{compute_class_weights, poly_lr, ClassWeightTable};
use crate::data::{batch_labels, build_inputs, Sample};
use crate::error::{Error, Result};
use crate::labels::{LabelMap, IGNORE_INDEX};
use crate::metrics::{argmax_labels, ConfusionMatrix};
use crate::model::{ModelConfig, ModelGraph};
use crate::nn::{Forward, Mode, ParamStore, BN_MOMENTUM};
use crate::tensor::Tensor;

/// Loss above this multiple of the first loss of a stage aborts training.
pub const DIVERGENCE_FACTOR: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    /// Encoders plus a temporary classifier, against ⅛-resolution labels.
    EncodersOnly,
    /// Encoders and decoder end to end.
    Full,
}

impl Stage {
    pub fn number(self) -> u8 {
        match self {
            Stage::EncodersOnly => 1,
            Stage::Full => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub base_lr: f64,
    pub weight_decay: f64,
    pub poly_power: f64,
    pub stage1_iters: usize,
    pub stage2_iters: usize,
    pub class_weight_c: f64,
    pub augment: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 4,
            base_lr: 5e-4,
            weight_decay: 1e-4,
            poly_power: 0.9,
            stage1_iters: 0,
            stage2_iters: 0,
            class_weight_c: 1.1,
            augment: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(Error::Config(format!("base_lr must be positive, got {}", self.base_lr)));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::Config("weight_decay must be non-negative".into()));
        }
        if self.poly_power <= 0.0 {
            return Err(Error::Config("poly_power must be positive".into()));
        }
        if self.class_weight_c <= 1.0 {
            return Err(Error::Config(format!("class_weight_c must exceed 1, got {}", self.class_weight_c)));
        }
        Ok(())
    }
}

/// One line of the training log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogRecord {
    pub stage: Stage,
    pub iter: usize,
    pub lr: f64,
    pub loss: f64,
    pub wall_ms: u128,
}

impl fmt::Display for LogRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "stage={} iter={} lr={:.6e} loss={:.6} wall_ms={}",
            self.stage.number(),
            self.iter,
            self.lr,
            self.loss,
            self.wall_ms
        )
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ParamStore,
    pub class_weights: ClassWeightTable,
    pub log: Vec<LogRecord>,
}

/// Batches of sample indices: reshuffled every pass over the data.
struct BatchSampler {
    rng: ChaCha8Rng,
    order: Vec<usize>,
    cursor: usize,
}

impl BatchSampler {
    fn new(n: usize, seed: u64) -> Self {
        let mut s = Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            order: (0..n).collect(),
            cursor: n,
        };
        s.reshuffle_if_done();
        s
    }

    fn reshuffle_if_done(&mut self) {
        if self.cursor >= self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
    }

    fn next(&mut self, size: usize) -> Vec<usize> {
        (0..size)
            .map(|_| {
                self.reshuffle_if_done();
                self.cursor += 1;
                self.order[self.cursor - 1]
            })
            .collect()
    }
}

/// Deterministic per-(stage, iteration, slot) stream.
fn stream(seed: u64, stage: Stage, iter: usize, slot: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (u64::from(stage.number()) << 56));
    rng.set_stream(((iter as u64) << 16) | slot as u64);
    rng
}

/// Two-stage trainer: encoders against downsampled labels, then the full network.
pub struct Trainer<'a> {
    pub graph: &'a ModelGraph,
    pub config: TrainConfig,
}

impl<'a> Trainer<'a> {
    pub fn new(graph: &'a ModelGraph, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { graph, config })
    }

    pub fn class_weights(&self, samples: &[Sample]) -> Result<ClassWeightTable> {
        let k = self.graph.config().num_classes;
        let mut hist = vec![0u64; k];
        for s in samples {
            for (h, n) in hist.iter_mut().zip(s.labels.histogram(k)) {
                *h += n;
            }
        }
        compute_class_weights(&hist, self.config.class_weight_c)
    }

    /// Trains from `params`, calling `on_log` after every iteration.
    pub fn train(
        &self,
        mut params: ParamStore,
        samples: &[Sample],
        mut on_log: impl FnMut(&LogRecord),
    ) -> Result<TrainOutcome> {
        if samples.is_empty() {
            return Err(Error::Data("training set is empty".into()));
        }
        let class_weights = self.class_weights(samples)?;
        let weights: Vec<f32> = class_weights.weights.iter().map(|&w| w as f32).collect();
        let mut log = Vec::new();
        for (stage, iters) in [
            (Stage::EncodersOnly, self.config.stage1_iters),
            (Stage::Full, self.config.stage2_iters),
        ] {
            if iters == 0 {
                continue;
            }
            self.run_stage(stage, iters, &mut params, samples, &weights, &mut |r| {
                on_log(r);
                log.push(*r);
            })?;
        }
        Ok(TrainOutcome {
            params,
            class_weights,
            log,
        })
    }

    fn run_stage(
        &self,
        stage: Stage,
        iters: usize,
        params: &mut ParamStore,
        samples: &[Sample],
        weights: &[f32],
        on_log: &mut dyn FnMut(&LogRecord),
    ) -> Result<()> {
        let graph = self.graph;
        let cfg = &self.config;
        let adam_config = AdamConfig {
            weight_decay: cfg.weight_decay,
            ..AdamConfig::default()
        };
        let mut adam = Adam::new(adam_config, graph.registry());
        let mut sampler = BatchSampler::new(samples.len(), cfg.seed ^ u64::from(stage.number()));
        let start = Instant::now();
        let mut initial = None;
        for iter in 0..iters {
            let picks = sampler.next(cfg.batch_size);
            let batch: Vec<Sample> = picks
                .iter()
                .enumerate()
                .map(|(slot, &i)| {
                    if cfg.augment {
                        augment(&samples[i], &mut stream(cfg.seed, stage, iter, slot))
                    } else {
                        Ok(samples[i].clone())
                    }
                })
                .collect::<Result<_>>()?;
            let refs: Vec<&Sample> = batch.iter().collect();
            let inputs = build_inputs(&refs, graph.variant())?;
            let mut labels = batch_labels(&refs)?;
            let dropout_seed = stream(cfg.seed, stage, iter, usize::from(u16::MAX)).get_stream();
            let mut ctx = Forward::new(params, Mode::Train, cfg.seed ^ dropout_seed);
            let logits = match stage {
                Stage::EncodersOnly => {
                    labels = labels.downsample_nearest(ModelConfig::RESOLUTION_MULTIPLE)?;
                    graph.forward_auxiliary(&mut ctx, &inputs)?
                }
                Stage::Full => graph.forward(&mut ctx, &inputs)?,
            };
            let loss_var = ctx.tape.weighted_cross_entropy(logits, &labels, weights, IGNORE_INDEX)?;
            let loss = ctx.tape.value(loss_var).data()[0] as f64;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "stage {} iteration {iter}: loss is {loss}",
                    stage.number()
                )));
            }
            let first = *initial.get_or_insert(loss);
            if loss > DIVERGENCE_FACTOR * first {
                return Err(Error::Divergence(format!(
                    "stage {} iteration {iter}: loss {loss:.6} exceeds {DIVERGENCE_FACTOR}x the initial {first:.6}",
                    stage.number()
                )));
            }
            let (grads, bn_updates) = ctx.backward(loss_var)?;
            let lr = poly_lr(cfg.base_lr, iter, iters, cfg.poly_power);
            adam.step(graph.registry(), params, &grads, lr)?;
            params.apply_bn_updates(&bn_updates, BN_MOMENTUM);
            on_log(&LogRecord {
                stage,
                iter,
                lr,
                loss,
                wall_ms: start.elapsed().as_millis(),
            });
        }
        Ok(())
    }
}

/// Eval-mode logits for a batch.
pub fn predict_logits(graph: &ModelGraph, params: &ParamStore, samples: &[&Sample]) -> Result<Tensor> {
    let inputs = build_inputs(samples, graph.variant())?;
    let mut ctx = Forward::inference(params);
    let out = graph.forward(&mut ctx, &inputs)?;
    Ok(ctx.tape.value(out).clone())
}

/// Argmax label maps for a batch.
pub fn predict(graph: &ModelGraph, params: &ParamStore, samples: &[&Sample]) -> Result<LabelMap> {
    argmax_labels(&predict_logits(graph, params, samples)?)
}

/// Confusion matrix of the model over `samples`, in batches of `batch_size`.
pub fn evaluate(graph: &ModelGraph, params: &ParamStore, samples: &[Sample], batch_size: usize) -> Result<ConfusionMatrix> {
    let mut cm = ConfusionMatrix::new(graph.config().num_classes);
    for chunk in samples.chunks(batch_size.max(1)) {
        let refs: Vec<&Sample> = chunk.iter().collect();
        let pred = predict(graph, params, &refs)?;
        cm.accumulate(&pred, &batch_labels(&refs)?)?;
    }
    Ok(cm)
}
