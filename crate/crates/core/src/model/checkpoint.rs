//! Binary checkpoint format.
//!
//! Layout (little endian): the magic `LDFNETCK`, a `u32` version, the
//! variant tag and model configuration, then one record per registry entry
//! holding its name, dimensions and `f32` values.

use std::io::{Read, Write};
use std::path::Path;

use super::config::{ChannelPlan, ModelConfig, Variant};
use super::graph::{build_model, ModelGraph};
use crate::error::{Error, Result};
use crate::nn::ParamStore;
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"LDFNETCK";
const VERSION: u32 = 1;

/// A model configuration together with its parameter values.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: ParamStore<f32>,
}

impl Checkpoint {
    pub fn new(config: ModelConfig, params: ParamStore<f32>) -> Self {
        Self { config, params }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let graph = build_model(&self.config)?;
        let mut buf = Vec::new();
        self.encode(&graph, &mut buf)?;
        std::fs::write(path, buf).map_err(|e| Error::io(format!("writing checkpoint {}", path.display()), e))
    }

    /// Loads a checkpoint, rebuilding its graph.
    pub fn load(path: &Path) -> Result<(Self, ModelGraph)> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(format!("reading checkpoint {}", path.display()), e))?;
        Self::decode(&mut bytes.as_slice())
    }

    /// Loads a checkpoint that must hold the given variant.
    pub fn load_variant(path: &Path, expected: Variant) -> Result<(Self, ModelGraph)> {
        let loaded = Self::load(path)?;
        if loaded.0.config.variant != expected {
            return Err(Error::Checkpoint(format!(
                "checkpoint holds {} but {} was requested",
                loaded.0.config.variant, expected
            )));
        }
        Ok(loaded)
    }

    pub fn encode(&self, graph: &ModelGraph, out: &mut impl Write) -> Result<()> {
        let c = &self.config;
        let mut w = Writer(out);
        w.bytes(MAGIC)?;
        w.u32(VERSION)?;
        w.str(c.variant.tag())?;
        for v in [c.num_classes, c.growth_rate, c.bottleneck_width, c.shallow_modules] {
            w.u32(v as u32)?;
        }
        for v in c.dense_modules {
            w.u32(v as u32)?;
        }
        let ch = c.channels;
        for v in [ch.stem, ch.mid, ch.deep, ch.transitions[0], ch.transitions[1]] {
            w.u32(v as u32)?;
        }
        w.u32(c.mid_blocks as u32)?;
        w.u32(c.dilations.len() as u32)?;
        for &d in &c.dilations {
            w.u32(d as u32)?;
        }
        w.u32(c.decoder_blocks as u32)?;
        w.bytes(&c.dropout.to_le_bytes())?;

        let specs = graph.registry().specs();
        if specs.len() != self.params.len() {
            return Err(Error::Checkpoint("parameter store does not match the model".into()));
        }
        w.u32(specs.len() as u32)?;
        for (spec, value) in specs.iter().zip(self.params.values()) {
            w.str(&spec.name)?;
            w.u32(value.ndim() as u32)?;
            for &d in value.shape() {
                w.u32(d as u32)?;
            }
            for &x in value.data() {
                w.bytes(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn decode(input: &mut impl Read) -> Result<(Self, ModelGraph)> {
        let mut r = Reader(input);
        let mut magic = [0u8; 8];
        r.fill(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
        }
        let variant: Variant = r
            .string()?
            .parse()
            .map_err(|e: Error| Error::Checkpoint(e.to_string()))?;
        let mut config = ModelConfig::new(variant);
        config.num_classes = r.usize()?;
        config.growth_rate = r.usize()?;
        config.bottleneck_width = r.usize()?;
        config.shallow_modules = r.usize()?;
        config.dense_modules = [r.usize()?, r.usize()?];
        config.channels = ChannelPlan {
            stem: r.usize()?,
            mid: r.usize()?,
            deep: r.usize()?,
            transitions: [r.usize()?, r.usize()?],
        };
        config.mid_blocks = r.usize()?;
        let n = r.usize()?;
        if n > 1024 {
            return Err(Error::Checkpoint(format!("implausible dilation count {n}")));
        }
        config.dilations = (0..n).map(|_| r.usize()).collect::<Result<_>>()?;
        config.decoder_blocks = r.usize()?;
        let mut dropout = [0u8; 8];
        r.fill(&mut dropout)?;
        config.dropout = f64::from_le_bytes(dropout);
        let graph = build_model(&config).map_err(|e| Error::Checkpoint(format!("invalid model configuration: {e}")))?;

        let specs = graph.registry().specs();
        let count = r.usize()?;
        if count != specs.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {count} parameter entries, model expects {}",
                specs.len()
            )));
        }
        let mut values = Vec::with_capacity(count);
        for spec in specs {
            let name = r.string()?;
            if name != spec.name {
                return Err(Error::Checkpoint(format!("expected entry {}, found {name}", spec.name)));
            }
            let ndim = r.usize()?;
            let shape = (0..ndim.min(8)).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
            if shape != spec.shape {
                return Err(Error::Checkpoint(format!(
                    "entry {name} has shape {shape:?}, model expects {:?}",
                    spec.shape
                )));
            }
            let mut raw = vec![0u8; spec.numel() * 4];
            r.fill(&mut raw)?;
            let data = raw
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            values.push(Tensor::from_vec(&shape, data).map_err(|e| Error::Checkpoint(e.to_string()))?);
        }
        let mut rest = [0u8; 1];
        if r.0.read(&mut rest).map_err(|e| Error::io("reading checkpoint", e))? != 0 {
            return Err(Error::Checkpoint("trailing bytes after the last entry".into()));
        }
        let params = ParamStore::from_values(graph.registry(), values)?;
        Ok((Self { config, params }, graph))
    }
}

struct Writer<'a, W: Write>(&'a mut W);

impl<W: Write> Writer<'_, W> {
    fn bytes(&mut self, b: &[u8]) -> Result<()> {
        self.0.write_all(b).map_err(|e| Error::io("writing checkpoint", e))
    }

    fn u32(&mut self, v: u32) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }

    fn str(&mut self, s: &str) -> Result<()> {
        self.u32(s.len() as u32)?;
        self.bytes(s.as_bytes())
    }
}

struct Reader<'a, R: Read>(&'a mut R);

impl<R: Read> Reader<'_, R> {
    fn fill(&mut self, buf: &mut [u8]) -> Result<()> {
        self.0.read_exact(buf).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => Error::Checkpoint("checkpoint is truncated".into()),
            _ => Error::io("reading checkpoint", e),
        })
    }

    fn u32(&mut self) -> Result<u32> {
        let mut b = [0u8; 4];
        self.fill(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }

    fn usize(&mut self) -> Result<usize> {
        self.u32().map(|v| v as usize)
    }

    fn string(&mut self) -> Result<String> {
        let len = self.usize()?;
        if len > 4096 {
            return Err(Error::Checkpoint(format!("implausible string length {len}")));
        }
        let mut b = vec![0u8; len];
        self.fill(&mut b)?;
        String::from_utf8(b).map_err(|_| Error::Checkpoint("entry name is not UTF-8".into()))
    }
}
