//! Fold-based evaluation and the experiment runners built on it.
//!
//! Fold `i` of a protocol with global seed `s` derives everything from
//! `fold_seed = seed::derive(s, "fold", i)`: the target shots, the source
//! group, the initial weights and the pair order of every epoch. None of
//! these depend on the loss mask, the method or `n`, so variants of one
//! experiment are paired fold by fold.

use alloc::string::String;
use alloc::vec::Vec;

use crate::data::{
    build_pairs, select_n_shot, select_source_group, shuffled_batches, staggered_batches, Benchmark,
    DEFAULT_SOURCE_GROUP,
};
use crate::error::{Error, Result};
use crate::eval::{evaluate, Metrics, DEFAULT_THRESHOLD};
use crate::model::{ModelConfig, SiameseModel};
use crate::seed;
use crate::stats::FoldReport;
use crate::train::{train, EpochRecord, LossMask, TrainConfig};

pub const DEFAULT_FOLDS: usize = 10;
pub const DEFAULT_SHOTS: [usize; 5] = [1, 3, 5, 7, 9];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "kebab-case"))]
pub enum Method {
    /// Siamese cross-domain training on source-target pairs.
    #[default]
    Ours,
    /// Same network trained on source data alone with `L_c`.
    SourceOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolConfig {
    pub n: usize,
    pub k: usize,
    pub source_group: usize,
    pub method: Method,
    pub seed: u64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            n: 5,
            k: DEFAULT_FOLDS,
            source_group: DEFAULT_SOURCE_GROUP,
            method: Method::Ours,
            seed: 0,
        }
    }
}

/// Everything one fold produced.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldOutcome {
    pub fold: usize,
    pub seed: u64,
    pub metrics: Metrics,
    pub history: Vec<EpochRecord>,
    /// Target training samples consumed; empty for source-only.
    pub shot_ids: Vec<String>,
    pub source_group_ids: Vec<String>,
    pub model: SiameseModel,
}

pub fn fold_seed(global: u64, fold: usize) -> u64 {
    seed::derive(global, "fold", fold as u64)
}

/// Trains one fold from a fresh initialization and scores it on the fixed
/// target test set.
pub fn run_fold(
    bench: &Benchmark,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    proto: &ProtocolConfig,
    fold: usize,
) -> Result<FoldOutcome> {
    let fseed = fold_seed(proto.seed, fold);
    let init = ModelConfig {
        seed: seed::derive(fseed, "init", 0),
        ..model_cfg.clone()
    };
    let mut model = SiameseModel::init(init)?;
    let (history, shot_ids, source_group_ids) = match proto.method {
        Method::Ours => {
            let shots = select_n_shot(&bench.target_train, proto.n, seed::derive(fseed, "shots", 0))?;
            let group = select_source_group(
                &bench.source,
                proto.source_group,
                seed::derive(fseed, "source-group", 0),
            )?;
            let history = train(&mut model, train_cfg, |epoch| {
                let stream = build_pairs(&group, &shots, seed::derive(fseed, "pairs", epoch as u64))?;
                staggered_batches(stream, train_cfg.batch_size)
            })?;
            (
                history,
                shots.into_iter().map(|s| s.id).collect(),
                group.into_iter().map(|s| s.id).collect(),
            )
        }
        Method::SourceOnly => {
            let cfg = TrainConfig {
                loss_mask: LossMask::NONE,
                ..train_cfg.clone()
            };
            let source = bench.source.samples();
            let history = train(&mut model, &cfg, |epoch| {
                shuffled_batches(source, cfg.batch_size, seed::derive(fseed, "source-only", epoch as u64))
            })?;
            (history, Vec::new(), bench.source.ids().map(String::from).collect())
        }
    };
    let metrics = evaluate(&model, &bench.target_test, DEFAULT_THRESHOLD)?;
    Ok(FoldOutcome {
        fold,
        seed: fseed,
        metrics,
        history,
        shot_ids,
        source_group_ids,
        model,
    })
}

/// Runs `count` independent jobs. Implementations may run them in parallel
/// but must return results in index order.
pub trait Executor {
    fn run_all<T, F>(&self, count: usize, job: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync;
}

/// Runs jobs one after another on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Serial;

impl Executor for Serial {
    fn run_all<T, F>(&self, count: usize, job: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync,
    {
        (0..count).map(job).collect()
    }
}

/// A finished protocol: the aggregate report plus every fold.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolRun {
    pub report: FoldReport,
    pub folds: Vec<FoldOutcome>,
}

/// `k` folds, each re-sampling shots and source group, aggregated into a
/// [`FoldReport`]. The first failing fold fails the protocol.
pub fn k_fold_protocol<E: Executor>(
    bench: &Benchmark,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    proto: &ProtocolConfig,
    exec: &E,
) -> Result<ProtocolRun> {
    let mut folds = Vec::with_capacity(proto.k);
    for r in run_folds(bench, model_cfg, train_cfg, proto, exec)? {
        folds.push(r?);
    }
    ProtocolRun::from_folds(folds)
}

/// Every fold of a protocol, failures included; a failed fold's error is
/// wrapped in [`Error::Fold`].
pub fn run_folds<E: Executor>(
    bench: &Benchmark,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    proto: &ProtocolConfig,
    exec: &E,
) -> Result<Vec<Result<FoldOutcome>>> {
    if proto.k < 2 {
        return Err(Error::config("k must be at least 2"));
    }
    model_cfg.validate()?;
    train_cfg.validate()?;
    let results = exec.run_all(proto.k, |fold| run_fold(bench, model_cfg, train_cfg, proto, fold));
    Ok(results
        .into_iter()
        .enumerate()
        .map(|(fold, r)| {
            r.map_err(|e| Error::Fold {
                fold,
                source: alloc::boxed::Box::new(e),
            })
        })
        .collect())
}

impl ProtocolRun {
    pub fn from_folds(folds: Vec<FoldOutcome>) -> Result<Self> {
        let report = FoldReport::from_folds(folds.iter().map(|f| f.metrics).collect())?;
        Ok(Self { report, folds })
    }
}

/// Loss-term variants compared by [`ablation_run`], in output order.
pub const ABLATION_MASKS: [LossMask; 3] = [LossMask::FULL, LossMask::CP_ONLY, LossMask::CD_ONLY];

/// Training and protocol settings of each ablation variant. Only the loss
/// mask differs.
pub fn ablation_variants(
    base: &TrainConfig,
    proto: &ProtocolConfig,
) -> Vec<(LossMask, TrainConfig, ProtocolConfig)> {
    ABLATION_MASKS
        .iter()
        .map(|&mask| {
            let cfg = TrainConfig {
                loss_mask: mask,
                ..base.clone()
            };
            let proto = ProtocolConfig {
                method: Method::Ours,
                ..proto.clone()
            };
            (mask, cfg, proto)
        })
        .collect()
}

/// One protocol per loss mask, with identical fold seeds.
pub fn ablation_run<E: Executor>(
    bench: &Benchmark,
    model_cfg: &ModelConfig,
    base: &TrainConfig,
    proto: &ProtocolConfig,
    exec: &E,
) -> Result<Vec<(LossMask, ProtocolRun)>> {
    ablation_variants(base, proto)
        .into_iter()
        .map(|(mask, cfg, proto)| {
            k_fold_protocol(bench, model_cfg, &cfg, &proto, exec).map(|run| (mask, run))
        })
        .collect()
}

/// Protocol settings of each sweep point.
pub fn sweep_variants(proto: &ProtocolConfig, ns: &[usize]) -> Vec<ProtocolConfig> {
    ns.iter()
        .map(|&n| ProtocolConfig {
            n,
            method: Method::Ours,
            ..proto.clone()
        })
        .collect()
}

/// One protocol per shot count.
pub fn n_shot_sweep<E: Executor>(
    bench: &Benchmark,
    model_cfg: &ModelConfig,
    base: &TrainConfig,
    proto: &ProtocolConfig,
    ns: &[usize],
    exec: &E,
) -> Result<Vec<(usize, ProtocolRun)>> {
    if ns.is_empty() {
        return Err(Error::config("n-shot sweep needs at least one n"));
    }
    sweep_variants(proto, ns)
        .into_iter()
        .map(|p| k_fold_protocol(bench, model_cfg, base, &p, exec).map(|run| (p.n, run)))
        .collect()
}
