//! Fixtures shared by the benchmarks.

use ldfnet_core::analyzer::constant_inputs;
use ldfnet_core::nn::ParamStore;
use ldfnet_core::{build_model, ModelConfig, ModelGraph, ModelInputs, Tensor, Variant};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Uniform values in [-1, 1) from a fixed seed.
pub fn random_tensor(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).expect("shape matches data")
}

/// A freshly initialized model with constant single-sample inputs.
pub fn model_fixture(variant: Variant, classes: usize, resolution: (usize, usize)) -> (ModelGraph, ParamStore, ModelInputs) {
    let graph = build_model(&ModelConfig::new(variant).with_classes(classes)).expect("default config builds");
    let params = graph.init_params(0);
    let inputs = constant_inputs(&graph, resolution);
    (graph, params, inputs)
}
