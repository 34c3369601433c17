use crate::error::{Error, Result};

/// Label value excluded from the loss and from metrics.
pub const IGNORE_INDEX: u8 = 255;

/// Integer class map of shape N×H×W.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    batch: usize,
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl LabelMap {
    pub fn new(batch: usize, height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if batch * height * width != data.len() {
            return Err(Error::Data(format!(
                "label map {batch}x{height}x{width} needs {} values, got {}",
                batch * height * width,
                data.len()
            )));
        }
        Ok(Self {
            batch,
            height,
            width,
            data,
        })
    }

    /// Stacks single-image maps (each H×W) into one batch.
    pub fn stack(maps: &[&LabelMap]) -> Result<Self> {
        let first = maps.first().ok_or_else(|| Error::Data("no label maps to stack".into()))?;
        let mut data = Vec::with_capacity(maps.len() * first.height * first.width);
        let mut batch = 0;
        for m in maps {
            if (m.height, m.width) != (first.height, first.width) {
                return Err(Error::Data(format!(
                    "label maps differ in size: {}x{} vs {}x{}",
                    first.height, first.width, m.height, m.width
                )));
            }
            data.extend_from_slice(&m.data);
            batch += m.batch;
        }
        Self::new(batch, first.height, first.width, data)
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn get(&self, n: usize, y: usize, x: usize) -> u8 {
        self.data[(n * self.height + y) * self.width + x]
    }

    /// Nearest-neighbour downsampling by an integer factor (takes the top-left pixel of each cell).
    pub fn downsample_nearest(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !self.height.is_multiple_of(factor) || !self.width.is_multiple_of(factor) {
            return Err(Error::Data(format!(
                "cannot downsample {}x{} labels by {factor}",
                self.height, self.width
            )));
        }
        let (h, w) = (self.height / factor, self.width / factor);
        let mut data = Vec::with_capacity(self.batch * h * w);
        for n in 0..self.batch {
            for y in 0..h {
                for x in 0..w {
                    data.push(self.get(n, y * factor, x * factor));
                }
            }
        }
        Self::new(self.batch, h, w, data)
    }

    /// Per-class pixel counts, ignoring [`IGNORE_INDEX`] and values `>= classes`.
    pub fn histogram(&self, classes: usize) -> Vec<u64> {
        let mut counts = vec![0u64; classes];
        for &l in &self.data {
            if let Some(c) = counts.get_mut(usize::from(l)) {
                *c += 1;
            }
        }
        counts
    }
}
