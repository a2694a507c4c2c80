//! Classification, cross-domain pairing and cross-domain detaching losses.
//!
//! All functions record onto a [`Graph`] so the result can be
//! differentiated. The set distance between two groups of embeddings is the
//! mean over all cross pairs of their Euclidean distance:
//!
//! ```text
//! D(A, B) = 1/(|A||B|) * sum_{i,j} ||a_i - b_j||
//! L_cp    = D(fs_pos, ft_pos) + D(fs_neg, ft_neg)
//! L_cd    = D(fs_pos, ft_neg) + D(fs_neg, ft_pos)
//! ```

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` before the log.
pub const PROB_EPS: f64 = 1e-12;

pub const DEFAULT_ALPHA: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "kebab-case"))]
pub enum DistanceKind {
    #[default]
    Euclidean,
    /// Squared distances; only for ablations.
    SquaredEuclidean,
}

/// How the detaching term enters the objective.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "kebab-case"))]
pub enum DetachMode {
    /// `L_cd` as defined, maximized without bound.
    #[default]
    Unbounded,
    /// Each set distance is capped at `margin`: the term becomes
    /// `min(D, m) = m - max(0, m - D)`, so maximizing it is the same as
    /// minimizing the hinge `max(0, m - D)`.
    Hinge { margin: f64 },
}

/// Values of the individual terms of one step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub l_c: f64,
    pub l_cp: f64,
    pub l_cd: f64,
    pub l_overall: f64,
    pub alpha: f64,
}

impl LossBreakdown {
    /// `l_c + alpha * (l_cp - l_cd)` from the parts.
    pub fn recomputed_overall(&self) -> f64 {
        self.l_c + self.alpha * (self.l_cp - self.l_cd)
    }

    pub fn is_finite(&self) -> bool {
        self.l_c.is_finite() && self.l_cp.is_finite() && self.l_cd.is_finite() && self.l_overall.is_finite()
    }
}

/// Source and target embeddings of one batch, grouped by label.
#[derive(Debug, Clone)]
pub struct BatchSplit {
    pub fs_pos: Var,
    pub fs_neg: Var,
    pub ft_pos: Var,
    pub ft_neg: Var,
}

fn check_labels(labels: &[f64]) -> Result<()> {
    match labels.iter().find(|&&y| y != 0.0 && y != 1.0) {
        Some(y) => Err(Error::contract(format!("label {y} is not 0 or 1"))),
        None => Ok(()),
    }
}

fn rows_with(labels: &[f64], y: f64) -> Vec<usize> {
    labels
        .iter()
        .enumerate()
        .filter(|(_, &l)| l == y)
        .map(|(i, _)| i)
        .collect()
}

impl BatchSplit {
    /// Splits source embeddings `fs` and target embeddings `ft` by label.
    /// Every one of the four groups must be nonempty.
    pub fn new(
        g: &mut Graph,
        fs: Var,
        source_labels: &[f64],
        ft: Var,
        target_labels: &[f64],
    ) -> Result<Self> {
        check_labels(source_labels)?;
        check_labels(target_labels)?;
        for (var, labels) in [(fs, source_labels), (ft, target_labels)] {
            if g.value(var).dims2().map(|d| d.0) != Some(labels.len()) {
                return Err(Error::Dimension {
                    op: "BatchSplit",
                    lhs: g.value(var).shape().to_vec(),
                    rhs: vec![labels.len()],
                });
            }
        }
        let mut group = |name: &str, var: Var, labels: &[f64], y: f64| -> Result<Var> {
            let rows = rows_with(labels, y);
            if rows.is_empty() {
                return Err(Error::contract(format!("empty embedding group {name}")));
            }
            g.select_rows(var, &rows)
        };
        Ok(Self {
            fs_pos: group("fs_pos", fs, source_labels, 1.0)?,
            fs_neg: group("fs_neg", fs, source_labels, 0.0)?,
            ft_pos: group("ft_pos", ft, target_labels, 1.0)?,
            ft_neg: group("ft_neg", ft, target_labels, 0.0)?,
        })
    }

    /// Target labels swapped: positive and negative target groups exchange.
    pub fn flipped_target(&self) -> Self {
        Self {
            ft_pos: self.ft_neg,
            ft_neg: self.ft_pos,
            ..self.clone()
        }
    }
}

/// Mean binary cross-entropy of `probs[B,1]` against binary `labels[B]`.
pub fn classification_loss(g: &mut Graph, probs: Var, labels: &[f64]) -> Result<Var> {
    let pt = g.value(probs);
    if labels.is_empty() {
        return Err(Error::contract("classification loss over an empty batch"));
    }
    check_labels(labels)?;
    if pt.numel() != labels.len() {
        return Err(Error::Dimension {
            op: "classification_loss",
            lhs: pt.shape().to_vec(),
            rhs: vec![labels.len()],
        });
    }
    let shape = pt.shape().to_vec();
    let y = g.input(Tensor::new(shape.clone(), labels.to_vec())?);
    let one_minus_y = g.input(Tensor::new(shape, labels.iter().map(|y| 1.0 - y).collect())?);

    let p = g.clamp(probs, PROB_EPS, 1.0 - PROB_EPS);
    let ln_p = g.ln(p, PROB_EPS);
    let neg_p = g.scale(p, -1.0);
    let q = g.add_scalar(neg_p, 1.0);
    let ln_q = g.ln(q, PROB_EPS);
    let pos = g.mul(y, ln_p)?;
    let neg = g.mul(one_minus_y, ln_q)?;
    let ll = g.add(pos, neg)?;
    let mean = g.mean(ll);
    Ok(g.scale(mean, -1.0))
}

/// Average pairwise distance between the rows of `a` and the rows of `b`.
pub fn set_distance(g: &mut Graph, a: Var, b: Var, kind: DistanceKind) -> Result<Var> {
    let d = match kind {
        DistanceKind::Euclidean => g.pairwise_euclidean(a, b)?,
        DistanceKind::SquaredEuclidean => g.pairwise_sq_euclidean(a, b)?,
    };
    Ok(g.mean(d))
}

/// [`set_distance`] on plain tensors.
pub fn set_distance_of(a: &Tensor, b: &Tensor) -> Result<f64> {
    let mut g = Graph::new();
    let (av, bv) = (g.input(a.clone()), g.input(b.clone()));
    let d = set_distance(&mut g, av, bv, DistanceKind::Euclidean)?;
    Ok(g.value(d).data()[0])
}

/// Same-class, cross-domain distance: `D(fs_pos, ft_pos) + D(fs_neg, ft_neg)`.
pub fn pairing_loss(g: &mut Graph, split: &BatchSplit, kind: DistanceKind) -> Result<Var> {
    let pos = set_distance(g, split.fs_pos, split.ft_pos, kind)?;
    let neg = set_distance(g, split.fs_neg, split.ft_neg, kind)?;
    g.add(pos, neg)
}

/// Different-class, cross-domain distance: `D(fs_pos, ft_neg) + D(fs_neg, ft_pos)`.
pub fn detaching_loss(
    g: &mut Graph,
    split: &BatchSplit,
    kind: DistanceKind,
    mode: DetachMode,
) -> Result<Var> {
    let term = |g: &mut Graph, a: Var, b: Var| -> Result<Var> {
        let d = set_distance(g, a, b, kind)?;
        Ok(match mode {
            DetachMode::Unbounded => d,
            DetachMode::Hinge { margin } => {
                let neg = g.scale(d, -1.0);
                let slack = g.add_scalar(neg, margin);
                let hinge = g.relu(slack);
                let neg_hinge = g.scale(hinge, -1.0);
                g.add_scalar(neg_hinge, margin)
            }
        })
    };
    let a = term(g, split.fs_pos, split.ft_neg)?;
    let b = term(g, split.fs_neg, split.ft_pos)?;
    g.add(a, b)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha >= 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(Error::config(format!("alpha must be a finite value >= 0, got {alpha}")))
    }
}

/// `l_c + alpha * (l_cp - l_cd)`.
pub fn overall_loss(g: &mut Graph, l_c: Var, l_cp: Var, l_cd: Var, alpha: f64) -> Result<Var> {
    check_alpha(alpha)?;
    let diff = g.sub(l_cp, l_cd)?;
    let weighted = g.scale(diff, alpha);
    g.add(l_c, weighted)
}

/// [`overall_loss`] on plain numbers.
pub fn overall_value(l_c: f64, l_cp: f64, l_cd: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(l_c + alpha * (l_cp - l_cd))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn t(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(rows).unwrap()
    }

    fn bce(probs: &[f64], labels: &[f64]) -> Result<f64> {
        let mut g = Graph::new();
        let p = g.input(Tensor::new(vec![probs.len(), 1], probs.to_vec())?);
        let l = classification_loss(&mut g, p, labels)?;
        Ok(g.value(l).data()[0])
    }

    #[test]
    fn bce_examples() {
        assert_abs_diff_eq!(bce(&[0.5], &[1.0]).unwrap(), core::f64::consts::LN_2, epsilon = 1e-15);
        assert!(bce(&[1.0 - 1e-12], &[1.0]).unwrap() < 1e-11);
        // -(ln 0.9 + ln 0.8 + ln 0.6) / 3
        let oracle = -(libm::log(0.9) + libm::log(0.8) + libm::log(0.6)) / 3.0;
        let v = bce(&[0.9, 0.2, 0.6], &[1.0, 0.0, 1.0]).unwrap();
        assert_abs_diff_eq!(v, oracle, epsilon = 1e-15);
        assert_abs_diff_eq!(v, 0.2797766, epsilon = 1e-7);
    }

    #[test]
    fn bce_saturated_probabilities_stay_finite() {
        let v = bce(&[0.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!(v.is_finite());
        assert_abs_diff_eq!(v, -libm::log(1e-12), epsilon = 1e-9);
    }

    #[test]
    fn bce_rejects_bad_labels() {
        assert!(matches!(bce(&[0.3], &[0.5]), Err(Error::Contract(_))));
        assert!(matches!(bce(&[0.3], &[]), Err(Error::Contract(_))));
        assert!(matches!(bce(&[0.3, 0.2], &[1.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn set_distance_examples() {
        assert_eq!(set_distance_of(&t(&[&[0.0, 0.0]]), &t(&[&[3.0, 4.0]])).unwrap(), 5.0);
        assert_eq!(set_distance_of(&t(&[&[1.5, -2.0]]), &t(&[&[1.5, -2.0]])).unwrap(), 0.0);
        let v = set_distance_of(&t(&[&[0.0, 0.0], &[1.0, 0.0]]), &t(&[&[0.0, 1.0]])).unwrap();
        // (1 + sqrt 2) / 2
        assert_abs_diff_eq!(v, 1.207107, epsilon = 1e-6);
        assert!(matches!(
            set_distance_of(&t(&[&[0.0, 0.0]]), &t(&[&[0.0, 0.0, 0.0]])),
            Err(Error::Dimension { .. })
        ));
    }

    fn split_of(g: &mut Graph, fs_pos: Tensor, fs_neg: Tensor, ft_pos: Tensor, ft_neg: Tensor) -> BatchSplit {
        BatchSplit {
            fs_pos: g.input(fs_pos),
            fs_neg: g.input(fs_neg),
            ft_pos: g.input(ft_pos),
            ft_neg: g.input(ft_neg),
        }
    }

    #[test]
    fn pairing_and_detaching_examples() {
        let mut g = Graph::new();
        let s = split_of(&mut g, t(&[&[0.0, 0.0]]), t(&[&[0.0, 0.0]]), t(&[&[3.0, 4.0]]), t(&[&[0.0, 1.0]]));
        let cp = pairing_loss(&mut g, &s, DistanceKind::Euclidean).unwrap();
        assert_eq!(g.value(cp).data()[0], 6.0);

        let s = split_of(&mut g, t(&[&[0.0, 0.0]]), t(&[&[0.0, 1.0]]), t(&[&[0.0, 0.0]]), t(&[&[3.0, 4.0]]));
        let cd = detaching_loss(&mut g, &s, DistanceKind::Euclidean, DetachMode::Unbounded).unwrap();
        assert_eq!(g.value(cd).data()[0], 6.0);

        let p = t(&[&[0.7, -0.2]]);
        let s = split_of(&mut g, p.clone(), p.clone(), p.clone(), p);
        let cp = pairing_loss(&mut g, &s, DistanceKind::Euclidean).unwrap();
        let cd = detaching_loss(&mut g, &s, DistanceKind::Euclidean, DetachMode::Unbounded).unwrap();
        assert_eq!(g.value(cp).data()[0], 0.0);
        assert_eq!(g.value(cd).data()[0], 0.0);
    }

    #[test]
    fn hinge_caps_each_distance() {
        let mut g = Graph::new();
        let s = split_of(&mut g, t(&[&[0.0, 0.0]]), t(&[&[0.0, 1.0]]), t(&[&[0.0, 0.0]]), t(&[&[3.0, 4.0]]));
        let cd = detaching_loss(&mut g, &s, DistanceKind::Euclidean, DetachMode::Hinge { margin: 2.0 }).unwrap();
        // min(5, 2) + min(1, 2)
        assert_eq!(g.value(cd).data()[0], 3.0);
    }

    #[test]
    fn squared_distance_variant() {
        let mut g = Graph::new();
        let a = g.input(t(&[&[0.0, 0.0]]));
        let b = g.input(t(&[&[3.0, 4.0]]));
        let d = set_distance(&mut g, a, b, DistanceKind::SquaredEuclidean).unwrap();
        assert_eq!(g.value(d).data()[0], 25.0);
    }

    #[test]
    fn overall_examples() {
        assert_abs_diff_eq!(overall_value(0.7, 0.4, 0.9, 0.25).unwrap(), 0.575, epsilon = 1e-15);
        assert_eq!(overall_value(0.7, 0.4, 0.9, 0.0).unwrap(), 0.7);
        assert!(matches!(overall_value(0.7, 0.4, 0.9, -0.1), Err(Error::Config(_))));
        assert_eq!(DEFAULT_ALPHA, 0.25);

        let mut g = Graph::new();
        let (c, p, d) = (g.scalar(0.7), g.scalar(0.4), g.scalar(0.9));
        let o = overall_loss(&mut g, c, p, d, 0.25).unwrap();
        assert_abs_diff_eq!(g.value(o).data()[0], 0.575, epsilon = 1e-15);
    }

    #[test]
    fn detaching_weight_is_exactly_minus_alpha() {
        for alpha in [0.25, 1.0, 0.1] {
            let mut g = Graph::new();
            let c = g.param(Tensor::scalar(0.3));
            let p = g.param(Tensor::scalar(1.2));
            let d = g.param(Tensor::scalar(2.5));
            let o = overall_loss(&mut g, c, p, d, alpha).unwrap();
            let grads = g.backward(o).unwrap();
            assert_eq!(grads.get(d).data()[0], -alpha);
            assert_eq!(grads.get(p).data()[0], alpha);
            assert_eq!(grads.get(c).data()[0], 1.0);
        }
    }

    #[test]
    fn batch_split_names_the_empty_group() {
        let mut g = Graph::new();
        let fs = g.input(Tensor::full(vec![3, 2], 0.1));
        let ft = g.input(Tensor::full(vec![2, 2], 0.2));
        let err = BatchSplit::new(&mut g, fs, &[1.0, 0.0, 1.0], ft, &[1.0, 1.0]).unwrap_err();
        assert_eq!(err, Error::Contract("empty embedding group ft_neg".into()));
        let err = BatchSplit::new(&mut g, fs, &[1.0, 1.0, 1.0], ft, &[1.0, 0.0]).unwrap_err();
        assert_eq!(err, Error::Contract("empty embedding group fs_neg".into()));
        assert!(BatchSplit::new(&mut g, fs, &[1.0, 0.0, 2.0], ft, &[1.0, 0.0]).is_err());
        let ok = BatchSplit::new(&mut g, fs, &[1.0, 0.0, 1.0], ft, &[0.0, 1.0]).unwrap();
        assert_eq!(g.value(ok.fs_pos).shape(), &[2, 2]);
    }
}
