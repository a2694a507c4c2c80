//! Samples, datasets, the n-shot pairing protocol and image preprocessing.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

mod ct;
mod sampling;
mod synth;

pub use ct::{bilinear_resize, preprocess_ct, HuImage, DEFAULT_CT_SIZE, DEFAULT_HU_WINDOW};
pub use sampling::{
    build_pairs, select_n_shot, select_source_group, shuffled_batches, split_by_patient,
    staggered_batches, Batch, PairStream, StaggeredBatches, DEFAULT_SOURCE_GROUP,
};
pub use synth::{synth_domain_shift, Benchmark, DomainTransform, Pattern, ShiftSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "lowercase"))]
pub enum Label {
    Negative = 0,
    Positive = 1,
}

impl Label {
    pub fn as_f64(self) -> f64 {
        f64::from(self as u8)
    }

    pub fn from_bit(bit: u8) -> Option<Self> {
        match bit {
            0 => Some(Label::Negative),
            1 => Some(Label::Positive),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "lowercase"))]
pub enum Domain {
    Source,
    Target,
}

impl Domain {
    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Source => "source",
            Domain::Target => "target",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "lowercase"))]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// One labeled grayscale image.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    /// `[H, W]`, values in `[0, 1]`.
    pub pixels: Tensor,
    pub label: Label,
    pub domain: Domain,
    pub patient: Option<String>,
}

impl Sample {
    /// Patient id when known, otherwise the sample id.
    pub fn group_key(&self) -> &str {
        self.patient.as_deref().unwrap_or(&self.id)
    }
}

/// Ordered collection of samples with unique ids and one image shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<Sample>,
    split: Split,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>, split: Split) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for s in &samples {
            if !seen.insert(s.id.as_str()) {
                return Err(Error::data(format!("duplicate sample id {}", s.id)));
            }
        }
        if let Some(first) = samples.first() {
            let shape = first.pixels.shape();
            if let Some(bad) = samples.iter().find(|s| s.pixels.shape() != shape) {
                return Err(Error::Dimension {
                    op: "dataset",
                    lhs: shape.to_vec(),
                    rhs: bad.pixels.shape().to_vec(),
                });
            }
        }
        Ok(Self { samples, split })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Sample> {
        self.samples
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn count(&self, label: Label) -> usize {
        self.samples.iter().filter(|s| s.label == label).count()
    }

    /// Flattened pixel count of one sample.
    pub fn input_dim(&self) -> Option<usize> {
        self.samples.first().map(|s| s.pixels.numel())
    }

    /// All samples stacked as a `[N, H*W]` matrix with their labels.
    pub fn to_matrix(&self) -> Result<(Tensor, Vec<f64>)> {
        stack(self.samples.iter())
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.samples.iter().map(|s| s.id.as_str())
    }
}

pub(crate) fn stack<'a>(samples: impl Iterator<Item = &'a Sample>) -> Result<(Tensor, Vec<f64>)> {
    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    for s in samples {
        let w = *width.get_or_insert(s.pixels.numel());
        if w != s.pixels.numel() {
            return Err(Error::Dimension {
                op: "stack",
                lhs: alloc::vec![w],
                rhs: alloc::vec![s.pixels.numel()],
            });
        }
        data.extend_from_slice(s.pixels.data());
        labels.push(s.label.as_f64());
    }
    let w = width.ok_or_else(|| Error::data("cannot stack zero samples"))?;
    Ok((Tensor::new(alloc::vec![labels.len(), w], data)?, labels))
}

/// Ids present in both datasets.
pub fn shared_ids(a: &Dataset, b: &Dataset) -> Vec<String> {
    let left: BTreeSet<&str> = a.ids().collect();
    b.ids().filter(|id| left.contains(id)).map(String::from).collect()
}
