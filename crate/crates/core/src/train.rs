//! SGD on the overall objective with a decaying learning rate.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::Batch;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::losses::{
    classification_loss, detaching_loss, overall_loss, pairing_loss, BatchSplit, DetachMode,
    DistanceKind, LossBreakdown, DEFAULT_ALPHA,
};
use crate::model::SiameseModel;

/// Which cross-domain terms take part in the objective. `L_c` always does.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(deny_unknown_fields))]
pub struct LossMask {
    pub use_cp: bool,
    pub use_cd: bool,
}

impl LossMask {
    pub const FULL: Self = Self { use_cp: true, use_cd: true };
    pub const CP_ONLY: Self = Self { use_cp: true, use_cd: false };
    pub const CD_ONLY: Self = Self { use_cp: false, use_cd: true };
    pub const NONE: Self = Self { use_cp: false, use_cd: false };

    pub fn any(self) -> bool {
        self.use_cp || self.use_cd
    }

    /// `"c+cp+cd"`, `"c+cp"`, `"c+cd"` or `"c"`.
    pub fn label(self) -> &'static str {
        match (self.use_cp, self.use_cd) {
            (true, true) => "c+cp+cd",
            (true, false) => "c+cp",
            (false, true) => "c+cd",
            (false, false) => "c",
        }
    }
}

impl Default for LossMask {
    fn default() -> Self {
        Self::FULL
    }
}

/// Unit the learning-rate decay is applied per.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "lowercase"))]
pub enum DecayUnit {
    #[default]
    Epoch,
    Step,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(default, deny_unknown_fields))]
pub struct TrainConfig {
    pub lr: f64,
    pub lr_decay: f64,
    pub decay_unit: DecayUnit,
    pub alpha: f64,
    pub momentum: f64,
    pub epochs: usize,
    /// Pairs per step.
    pub batch_size: usize,
    pub loss_mask: LossMask,
    pub distance: DistanceKind,
    pub detach: DetachMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            lr_decay: 0.95,
            decay_unit: DecayUnit::Epoch,
            alpha: DEFAULT_ALPHA,
            momentum: 0.0,
            epochs: 30,
            batch_size: 32,
            loss_mask: LossMask::FULL,
            distance: DistanceKind::Euclidean,
            detach: DetachMode::Unbounded,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::config(msg));
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad("lr must be finite and >= 0");
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad("lr_decay must lie in (0, 1]");
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be finite and >= 0");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size < 4 || !self.batch_size.is_multiple_of(2) {
            return Err(Error::config(format!(
                "batch_size must be even and at least 4, got {}",
                self.batch_size
            )));
        }
        if let DetachMode::Hinge { margin } = self.detach {
            if !(margin > 0.0 && margin.is_finite()) {
                return bad("hinge margin must be positive");
            }
        }
        Ok(())
    }

    /// Learning rate for `epoch` (0-based) and global `step`.
    pub fn lr_at(&self, epoch: usize, step: usize) -> f64 {
        let power = match self.decay_unit {
            DecayUnit::Epoch => epoch,
            DecayUnit::Step => step,
        };
        self.lr * libm::pow(self.lr_decay, power as f64)
    }
}

/// Plain SGD, with optional heavy-ball momentum.
#[derive(Debug, Clone, PartialEq)]
pub struct Sgd {
    momentum: f64,
    velocity: Vec<Vec<f64>>,
}

impl Sgd {
    pub fn new(model: &SiameseModel, momentum: f64) -> Self {
        Self {
            momentum,
            velocity: model.params().iter().map(|p| vec![0.0; p.value.numel()]).collect(),
        }
    }
}

/// One update `theta <- theta - lr * grad L_overall` on `batch`.
///
/// Masked terms are neither computed nor differentiated and are reported as
/// 0. Returns the losses before the update.
pub fn train_step(
    model: &mut SiameseModel,
    opt: &mut Sgd,
    batch: &Batch,
    cfg: &TrainConfig,
    lr: f64,
    step: usize,
) -> Result<LossBreakdown> {
    let mask = cfg.loss_mask;
    let mut g = Graph::new();
    let bound = model.bind(&mut g);
    let xs = g.input(batch.source.clone());
    let fs = bound.embed(&mut g, xs)?;
    let probs = bound.predict(&mut g, fs)?;
    let l_c = classification_loss(&mut g, probs, &batch.source_labels)?;

    let (loss, l_cp, l_cd) = if mask.any() {
        let target = batch
            .target
            .as_ref()
            .ok_or_else(|| Error::contract("cross-domain terms need a target batch"))?;
        let xt = g.input(target.clone());
        let ft = bound.embed(&mut g, xt)?;
        let split = BatchSplit::new(&mut g, fs, &batch.source_labels, ft, &batch.target_labels)?;
        let cp = match mask.use_cp {
            true => pairing_loss(&mut g, &split, cfg.distance)?,
            false => g.scalar(0.0),
        };
        let cd = match mask.use_cd {
            true => detaching_loss(&mut g, &split, cfg.distance, cfg.detach)?,
            false => g.scalar(0.0),
        };
        (overall_loss(&mut g, l_c, cp, cd, cfg.alpha)?, Some(cp), Some(cd))
    } else {
        (l_c, None, None)
    };
    let value = |v| g.value(v).data()[0];
    let breakdown = LossBreakdown {
        l_c: value(l_c),
        l_cp: l_cp.map_or(0.0, value),
        l_cd: l_cd.map_or(0.0, value),
        l_overall: value(loss),
        alpha: cfg.alpha,
    };
    let non_finite = || Error::NonFinite {
        step,
        l_c: breakdown.l_c,
        l_cp: breakdown.l_cp,
        l_cd: breakdown.l_cd,
        l_overall: breakdown.l_overall,
    };
    if !breakdown.is_finite() {
        return Err(non_finite());
    }

    let grads = g.backward(loss)?;
    let vars = bound.vars().to_vec();
    if vars.iter().filter_map(|&v| grads.get_ref(v)).any(|t| !t.all_finite()) {
        return Err(non_finite());
    }
    for ((param, var), vel) in model.params_mut().iter_mut().zip(vars).zip(&mut opt.velocity) {
        let Some(grad) = grads.get_ref(var) else {
            if opt.momentum > 0.0 {
                for (p, v) in param.value.data_mut().iter_mut().zip(vel.iter_mut()) {
                    *v *= opt.momentum;
                    *p -= lr * *v;
                }
            }
            continue;
        };
        if opt.momentum > 0.0 {
            for ((p, v), &d) in param.value.data_mut().iter_mut().zip(vel.iter_mut()).zip(grad.data()) {
                *v = opt.momentum * *v + d;
                *p -= lr * *v;
            }
        } else {
            for (p, &d) in param.value.data_mut().iter_mut().zip(grad.data()) {
                *p -= lr * d;
            }
        }
    }
    Ok(breakdown)
}

/// Mean losses of one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub steps: usize,
    pub mean: LossBreakdown,
}

/// Runs `cfg.epochs` epochs; `batches(epoch)` supplies each epoch's batches.
pub fn train<F, I>(model: &mut SiameseModel, cfg: &TrainConfig, mut batches: F) -> Result<Vec<EpochRecord>>
where
    F: FnMut(usize) -> Result<I>,
    I: IntoIterator<Item = Batch>,
{
    cfg.validate()?;
    let mut opt = Sgd::new(model, cfg.momentum);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        let epoch_lr = cfg.lr_at(epoch, step);
        let mut sum = LossBreakdown::default();
        let mut steps = 0;
        for batch in batches(epoch)? {
            let lr = cfg.lr_at(epoch, step);
            let b = train_step(model, &mut opt, &batch, cfg, lr, step)?;
            sum.l_c += b.l_c;
            sum.l_cp += b.l_cp;
            sum.l_cd += b.l_cd;
            sum.l_overall += b.l_overall;
            step += 1;
            steps += 1;
        }
        if steps == 0 {
            return Err(Error::data(format!("epoch {epoch} supplied no batches")));
        }
        let n = steps as f64;
        history.push(EpochRecord {
            epoch,
            lr: epoch_lr,
            steps,
            mean: LossBreakdown {
                l_c: sum.l_c / n,
                l_cp: sum.l_cp / n,
                l_cd: sum.l_cd / n,
                l_overall: sum.l_overall / n,
                alpha: cfg.alpha,
            },
        });
    }
    Ok(history)
}
