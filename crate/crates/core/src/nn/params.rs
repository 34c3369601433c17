use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Index of an entry in a [`ParamRegistry`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EntryKind {
    Weight,
    Bias,
    BnGamma,
    BnBeta,
    RunningMean,
    RunningVar,
}

impl EntryKind {
    pub fn is_trainable(self) -> bool {
        !matches!(self, EntryKind::RunningMean | EntryKind::RunningVar)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Init {
    /// He-uniform: `U(-b, b)` with `b = sqrt(6 / fan_in)`.
    HeUniform { fan_in: usize },
    Zeros,
    Ones,
}

/// Parameters of the stage-1 auxiliary classifier are kept apart from the network proper.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Group {
    Main,
    Auxiliary,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub kind: EntryKind,
    pub init: Init,
    pub group: Group,
}

impl ParamSpec {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

/// Ordered, named description of every parameter and buffer of a model.
#[derive(Clone, Debug, Default)]
pub struct ParamRegistry {
    specs: Vec<ParamSpec>,
    group: Option<Group>,
}

impl ParamRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub(crate) fn set_group(&mut self, group: Group) {
        self.group = Some(group);
    }

    pub fn register(&mut self, name: impl Into<String>, shape: &[usize], kind: EntryKind, init: Init) -> ParamId {
        let name = name.into();
        assert!(
            self.specs.iter().all(|s| s.name != name),
            "duplicate parameter name {name}"
        );
        self.specs.push(ParamSpec {
            name,
            shape: shape.to_vec(),
            kind,
            init,
            group: self.group.unwrap_or(Group::Main),
        });
        ParamId(self.specs.len() - 1)
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn spec(&self, id: ParamId) -> &ParamSpec {
        &self.specs[id.0]
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.specs.iter().position(|s| s.name == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.specs.len()).map(ParamId)
    }

    /// Number of trainable scalars in the main (non-auxiliary) group.
    pub fn trainable_count(&self) -> usize {
        self.specs
            .iter()
            .filter(|s| s.kind.is_trainable() && s.group == Group::Main)
            .map(ParamSpec::numel)
            .sum()
    }
}

/// 64-bit FNV-1a; stable across platforms and toolchains.
pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Values for every entry of a registry.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore<T: Scalar = f32> {
    values: Vec<Tensor<T>>,
}

impl<T: Scalar> ParamStore<T> {
    /// Initializes each entry from its own RNG stream seeded by `(seed, name)`,
    /// so a parameter's initial value does not depend on what else the model holds.
    pub fn init(registry: &ParamRegistry, seed: u64) -> Self {
        let values = registry
            .specs()
            .iter()
            .map(|spec| match spec.init {
                Init::Zeros => Tensor::zeros(&spec.shape),
                Init::Ones => Tensor::full(&spec.shape, T::one()),
                Init::HeUniform { fan_in } => {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(spec.name.as_bytes()));
                    let bound = (6.0 / fan_in.max(1) as f64).sqrt();
                    let data = (0..spec.numel())
                        .map(|_| T::from_f64(rng.gen_range(-bound..bound)))
                        .collect();
                    Tensor::from_vec(&spec.shape, data).expect("registry shape")
                }
            })
            .collect();
        Self { values }
    }

    pub fn from_values(registry: &ParamRegistry, values: Vec<Tensor<T>>) -> Result<Self> {
        if values.len() != registry.len() {
            return Err(Error::mismatch("param store", "entry count", registry.len(), values.len()));
        }
        for (spec, v) in registry.specs().iter().zip(&values) {
            if spec.shape != v.shape() {
                return Err(Error::shape(
                    "param store",
                    format!("{} expects shape {:?}, got {:?}", spec.name, spec.shape, v.shape()),
                ));
            }
        }
        Ok(Self { values })
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.values[id.0]
    }

    pub fn values(&self) -> &[Tensor<T>] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            values: self.values.iter().map(Tensor::cast).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(Tensor::is_finite)
    }
}
