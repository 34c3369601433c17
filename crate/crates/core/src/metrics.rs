//! Confusion matrices and IoU-based segmentation scores.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::labels::{LabelMap, IGNORE_INDEX};
use crate::tensor::{Scalar, Tensor};

/// How classes that appear in neither ground truth nor prediction enter the mean.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum AbsentClasses {
    /// Leave them out of the mean.
    #[default]
    Exclude,
    /// Count them as IoU 0.
    CountAsZero,
}

/// `counts[gt * K + pred]` over non-ignored pixels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    num_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> Self {
        Self {
            num_classes,
            counts: vec![0; num_classes * num_classes],
        }
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn get(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.num_classes + pred]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Adds one count per pixel whose ground truth is not the ignore label.
    pub fn accumulate(&mut self, predictions: &LabelMap, labels: &LabelMap) -> Result<()> {
        let dims = |l: &LabelMap| (l.batch(), l.height(), l.width());
        if dims(predictions) != dims(labels) {
            return Err(Error::argument(
                "confusion_matrix",
                format!("prediction {:?} vs labels {:?}", dims(predictions), dims(labels)),
            ));
        }
        self.accumulate_slices(predictions.data(), labels.data())
    }

    pub fn accumulate_slices(&mut self, predictions: &[u8], labels: &[u8]) -> Result<()> {
        if predictions.len() != labels.len() {
            return Err(Error::argument(
                "confusion_matrix",
                format!("{} predictions for {} labels", predictions.len(), labels.len()),
            ));
        }
        let k = self.num_classes;
        for (i, (&p, &g)) in predictions.iter().zip(labels).enumerate() {
            if g == IGNORE_INDEX {
                continue;
            }
            if p as usize >= k {
                return Err(Error::Data(format!("prediction {p} at pixel {i} is outside 0..{k}")));
            }
            if g as usize >= k {
                return Err(Error::Data(format!("label {g} at pixel {i} is outside 0..{k}")));
            }
            self.counts[g as usize * k + p as usize] += 1;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.num_classes != self.num_classes {
            return Err(Error::argument(
                "confusion_matrix",
                format!("cannot merge {} and {} classes", self.num_classes, other.num_classes),
            ));
        }
        self.counts.iter_mut().zip(&other.counts).for_each(|(a, b)| *a += b);
        Ok(())
    }

    /// Per-class IoU; `None` for classes absent from both ground truth and prediction.
    pub fn class_iou(&self) -> Vec<Option<f64>> {
        let k = self.num_classes;
        (0..k)
            .map(|c| {
                let tp = self.get(c, c);
                let gt: u64 = (0..k).map(|p| self.get(c, p)).sum();
                let pred: u64 = (0..k).map(|g| self.get(g, c)).sum();
                let union = gt + pred - tp;
                (union > 0).then(|| tp as f64 / union as f64)
            })
            .collect()
    }

    pub fn miou(&self, absent: AbsentClasses) -> Result<f64> {
        let ious = self.class_iou();
        let values: Vec<f64> = match absent {
            AbsentClasses::Exclude => ious.iter().flatten().copied().collect(),
            AbsentClasses::CountAsZero => ious.iter().map(|v| v.unwrap_or(0.0)).collect(),
        };
        if ious.iter().all(Option::is_none) {
            return Err(Error::Data("mIoU is undefined: no class occurs in labels or predictions".into()));
        }
        Ok(values.iter().sum::<f64>() / values.len() as f64)
    }

    pub fn pixel_accuracy(&self) -> Result<f64> {
        let total = self.total();
        if total == 0 {
            return Err(Error::Data("pixel accuracy is undefined: no labelled pixels".into()));
        }
        let correct: u64 = (0..self.num_classes).map(|c| self.get(c, c)).sum();
        Ok(correct as f64 / total as f64)
    }

    pub fn report(&self, absent: AbsentClasses) -> Result<MetricsReport> {
        Ok(MetricsReport {
            class_iou: self.class_iou(),
            miou: self.miou(absent)?,
            pixel_accuracy: self.pixel_accuracy()?,
            pixels: self.total(),
        })
    }
}

/// Per-pixel argmax over the class axis of `N×K×H×W` logits.
pub fn argmax_labels<T: Scalar>(logits: &Tensor<T>) -> Result<LabelMap> {
    let (n, k, h, w) = logits.dims4("argmax")?;
    if k > IGNORE_INDEX as usize {
        return Err(Error::argument("argmax", format!("{k} classes do not fit below the ignore label")));
    }
    let plane = h * w;
    let d = logits.data();
    let mut out = Vec::with_capacity(n * plane);
    for b in 0..n {
        let base = b * k * plane;
        for i in 0..plane {
            let mut best = 0;
            for c in 1..k {
                if d[base + c * plane + i] > d[base + best * plane + i] {
                    best = c;
                }
            }
            out.push(best as u8);
        }
    }
    LabelMap::new(n, h, w, out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub class_iou: Vec<Option<f64>>,
    pub miou: f64,
    pub pixel_accuracy: f64,
    pub pixels: u64,
}

impl MetricsReport {
    /// Aligned text table.
    pub fn to_table(&self) -> String {
        let mut s = String::from("class      IoU\n");
        for (c, iou) in self.class_iou.iter().enumerate() {
            match iou {
                Some(v) => writeln!(s, "{c:>5}  {v:>7.4}"),
                None => writeln!(s, "{c:>5}  {:>7}", "n/a"),
            }
            .expect("string write");
        }
        writeln!(s, "mIoU   {:>7.4}", self.miou).expect("string write");
        writeln!(s, "pixacc {:>7.4}", self.pixel_accuracy).expect("string write");
        s
    }

    /// One `key=value` record per line.
    pub fn to_records(&self) -> String {
        let mut s = String::new();
        for (c, iou) in self.class_iou.iter().enumerate() {
            match iou {
                Some(v) => writeln!(s, "iou.{c}={v:.6}"),
                None => writeln!(s, "iou.{c}=nan"),
            }
            .expect("string write");
        }
        writeln!(s, "miou={:.6}", self.miou).expect("string write");
        writeln!(s, "pixel_accuracy={:.6}", self.pixel_accuracy).expect("string write");
        writeln!(s, "pixels={}", self.pixels).expect("string write");
        s
    }
}
