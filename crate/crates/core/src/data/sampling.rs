//! n-shot selection, source–target pairing and staggered batching.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::borrow::Borrow;
use core::ops::Range;

use rand::seq::{IndexedRandom, SliceRandom};

use super::{stack, Dataset, Label, Sample, Split};
use crate::error::{Error, Result};
use crate::seed;
use crate::tensor::Tensor;

pub const DEFAULT_SOURCE_GROUP: usize = 600;

/// `n` positive and `n` negative samples drawn without replacement.
///
/// The result lists the positives first, each half in draw order.
pub fn select_n_shot(target_train: &Dataset, n: usize, seed: u64) -> Result<Vec<Sample>> {
    if n == 0 {
        return Err(Error::data("n-shot selection needs n >= 1"));
    }
    let (pos, neg) = (target_train.count(Label::Positive), target_train.count(Label::Negative));
    if pos < n || neg < n {
        return Err(Error::data(format!(
            "{n}-shot selection needs {n} samples per label, have {pos} positive and {neg} negative"
        )));
    }
    let mut rng = seed::rng(seed);
    let mut out = Vec::with_capacity(2 * n);
    for label in [Label::Positive, Label::Negative] {
        let pool: Vec<&Sample> = target_train.samples().iter().filter(|s| s.label == label).collect();
        out.extend(pool.choose_multiple(&mut rng, n).map(|&s| s.clone()));
    }
    Ok(out)
}

/// A random group of `size` source samples, without replacement.
pub fn select_source_group(source: &Dataset, size: usize, seed: u64) -> Result<Vec<Sample>> {
    if size == 0 || size > source.len() {
        return Err(Error::data(format!(
            "source group of {size} requested from {} samples",
            source.len()
        )));
    }
    let mut rng = seed::rng(seed);
    Ok(source
        .samples()
        .choose_multiple(&mut rng, size)
        .cloned()
        .collect())
}

/// Every (source, target) combination of one epoch, in shuffled order.
#[derive(Debug, Clone, PartialEq)]
pub struct PairStream {
    source: Vec<Sample>,
    target: Vec<Sample>,
    pairs: Vec<(u32, u32)>,
    seed: u64,
}

/// Crosses the source group with the target shots: `|pairs| = |group| * |shots|`.
/// Each shot is reused once per source sample.
pub fn build_pairs(source_group: &[Sample], shots: &[Sample], seed: u64) -> Result<PairStream> {
    if source_group.is_empty() || shots.is_empty() {
        return Err(Error::data(format!(
            "cannot pair {} source samples with {} target shots",
            source_group.len(),
            shots.len()
        )));
    }
    let mut pairs: Vec<(u32, u32)> = (0..source_group.len() as u32)
        .flat_map(|s| (0..shots.len() as u32).map(move |t| (s, t)))
        .collect();
    pairs.shuffle(&mut seed::rng(seed));
    Ok(PairStream {
        source: source_group.to_vec(),
        target: shots.to_vec(),
        pairs,
        seed,
    })
}

impl PairStream {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn pair(&self, i: usize) -> (&Sample, &Sample) {
        let (s, t) = self.pairs[i];
        (&self.source[s as usize], &self.target[t as usize])
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&Sample, &Sample)> + '_ {
        (0..self.pairs.len()).map(move |i| self.pair(i))
    }

    /// Sample ids of `range` in staggered order `s1, t1, s2, t2, ...`.
    pub fn staggered_ids(&self, range: Range<usize>) -> Vec<&str> {
        range
            .flat_map(|i| {
                let (s, t) = self.pair(i);
                [s.id.as_str(), t.id.as_str()]
            })
            .collect()
    }
}

/// One optimization step's worth of data. Row `i` of `source` and row `i` of
/// `target` form the `i`-th staggered pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub source: Tensor,
    pub source_labels: Vec<f64>,
    /// Absent for source-only training.
    pub target: Option<Tensor>,
    pub target_labels: Vec<f64>,
    /// Indices into the originating stream (or shuffled sample order).
    pub range: Range<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.source_labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source_labels.is_empty()
    }

    /// Both labels present among the source rows and among the target rows.
    pub fn has_both_labels(&self) -> bool {
        both(&self.source_labels) && both(&self.target_labels)
    }
}

fn both(labels: &[f64]) -> bool {
    labels.contains(&1.0) && labels.contains(&0.0)
}

/// Iterator over the batches of one [`PairStream`], borrowed or owned.
#[derive(Debug, Clone)]
pub struct StaggeredBatches<S> {
    stream: S,
    bounds: Vec<Range<usize>>,
    next: usize,
}

impl<S> StaggeredBatches<S> {
    pub fn bounds(&self) -> &[Range<usize>] {
        &self.bounds
    }
}

impl<S: Borrow<PairStream>> Iterator for StaggeredBatches<S> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        let range = self.bounds.get(self.next)?.clone();
        self.next += 1;
        let s = self.stream.borrow();
        let (source, source_labels) =
            stack(range.clone().map(|i| &s.source[s.pairs[i].0 as usize])).expect("nonempty batch");
        let (target, target_labels) =
            stack(range.clone().map(|i| &s.target[s.pairs[i].1 as usize])).expect("nonempty batch");
        Some(Batch {
            source,
            source_labels,
            target: Some(target),
            target_labels,
            range,
        })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.bounds.len() - self.next;
        (left, Some(left))
    }
}

impl<S: Borrow<PairStream>> ExactSizeIterator for StaggeredBatches<S> {}

/// Cuts a stream into consecutive batches of `batch_size` pairs.
///
/// A batch lacking either label in either domain is extended with the
/// following pairs until it has both. A trailing remainder shorter than
/// `batch_size`, or one that cannot satisfy the label condition, is merged
/// into the previous batch, so every pair is used exactly once.
pub fn staggered_batches<S: Borrow<PairStream>>(
    stream: S,
    batch_size: usize,
) -> Result<StaggeredBatches<S>> {
    let owned = stream;
    let stream: &PairStream = owned.borrow();
    if batch_size < 4 || !batch_size.is_multiple_of(2) {
        return Err(Error::config(format!(
            "batch size must be even and at least 4, got {batch_size}"
        )));
    }
    let label = |i: usize, target: bool| {
        let (s, t) = stream.pairs[i];
        if target {
            stream.target[t as usize].label
        } else {
            stream.source[s as usize].label
        }
    };
    let mut bounds: Vec<Range<usize>> = Vec::new();
    let mut start = 0;
    let mut seen = [[false; 2]; 2];
    for i in 0..stream.len() {
        seen[0][label(i, false) as usize] = true;
        seen[1][label(i, true) as usize] = true;
        let ok = seen.iter().all(|d| d[0] && d[1]);
        if ok && i + 1 - start >= batch_size {
            bounds.push(start..i + 1);
            start = i + 1;
            seen = [[false; 2]; 2];
        }
    }
    if start < stream.len() {
        match bounds.last_mut() {
            Some(last) => last.end = stream.len(),
            None => {
                return Err(Error::data(format!(
                    "stream of {} pairs cannot provide both labels in both domains",
                    stream.len()
                )))
            }
        }
    }
    Ok(StaggeredBatches {
        stream: owned,
        bounds,
        next: 0,
    })
}

/// Source-only batches: a seeded shuffle of `samples`, cut into batches of
/// `batch_size` with a short remainder merged into the previous batch.
pub fn shuffled_batches(samples: &[Sample], batch_size: usize, seed: u64) -> Result<Vec<Batch>> {
    if batch_size == 0 || samples.is_empty() {
        return Err(Error::data("source-only batching needs samples and a positive batch size"));
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut seed::rng(seed));
    let mut cuts: Vec<Range<usize>> = (0..samples.len())
        .step_by(batch_size)
        .map(|s| s..(s + batch_size).min(samples.len()))
        .collect();
    if cuts.len() > 1 && cuts.last().is_some_and(|r| r.len() < batch_size) {
        let tail = cuts.pop().expect("len > 1");
        cuts.last_mut().expect("len > 1").end = tail.end;
    }
    cuts.into_iter()
        .map(|range| {
            let (source, source_labels) = stack(order[range.clone()].iter().map(|&i| &samples[i]))?;
            Ok(Batch {
                source,
                source_labels,
                target: None,
                target_labels: Vec::new(),
                range,
            })
        })
        .collect()
}

/// Splits a pool into train and test so that no patient appears in both.
///
/// Samples are grouped by [`Sample::group_key`]; `test_groups` randomly
/// chosen groups form the test split.
pub fn split_by_patient(pool: &Dataset, test_groups: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    let mut groups: BTreeMap<&str, Vec<&Sample>> = BTreeMap::new();
    for s in pool.samples() {
        groups.entry(s.group_key()).or_default().push(s);
    }
    if test_groups == 0 || test_groups >= groups.len() {
        return Err(Error::data(format!(
            "cannot hold out {test_groups} of {} patient groups",
            groups.len()
        )));
    }
    let mut keys: Vec<&str> = groups.keys().copied().collect();
    keys.shuffle(&mut seed::rng(seed));
    let test_keys: Vec<String> = keys[..test_groups].iter().map(|k| String::from(*k)).collect();
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for s in pool.samples() {
        if test_keys.iter().any(|k| k == s.group_key()) {
            test.push(s.clone());
        } else {
            train.push(s.clone());
        }
    }
    Ok((Dataset::new(train, Split::Train)?, Dataset::new(test, Split::Test)?))
}
