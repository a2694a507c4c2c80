//! Fold aggregation: mean and Student-t 95% confidence half-width.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::eval::Metrics;

pub fn mean(xs: &[f64]) -> f64 {
    if all_equal(xs) {
        return xs[0];
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (`n - 1` denominator); exactly 0 when all
/// values are identical.
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 || all_equal(xs) {
        return 0.0;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    libm::sqrt(ss / (xs.len() - 1) as f64)
}

fn all_equal(xs: &[f64]) -> bool {
    !xs.is_empty() && xs.iter().all(|x| x.to_bits() == xs[0].to_bits())
}

/// Two-sided 95% critical value of Student's t with `df` degrees of freedom,
/// rounded to three decimals as in printed tables (2.262 for `df = 9`).
pub fn t_critical_975(df: usize) -> f64 {
    assert!(df >= 1, "t distribution needs df >= 1");
    libm::round(t_quantile(0.975, df as f64) * 1000.0) / 1000.0
}

/// `t_{p, df}` for `p > 0.5`, by bisection on the CDF.
pub fn t_quantile(p: f64, df: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 1.0);
    while t_cdf(hi, df) < p {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if t_cdf(mid, df) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// CDF of Student's t.
pub fn t_cdf(t: f64, df: f64) -> f64 {
    let x = df / (df + t * t);
    let tail = 0.5 * inc_beta(0.5 * df, 0.5, x);
    if t >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Regularized incomplete beta `I_x(a, b)` via its continued fraction.
fn inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = libm::lgamma(a + b) - libm::lgamma(a) - libm::lgamma(b)
        + a * libm::log(x)
        + b * libm::log(1.0 - x);
    let front = libm::exp(ln_front);
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..500 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        d = if d.abs() < TINY { TINY } else { d };
        c = 1.0 + aa / c;
        c = if c.abs() < TINY { TINY } else { c };
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        d = if d.abs() < TINY { TINY } else { d };
        c = 1.0 + aa / c;
        c = if c.abs() < TINY { TINY } else { c };
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h
}

/// `t_{0.975, k-1} * s / sqrt(k)`.
pub fn ci95_half_width(xs: &[f64]) -> f64 {
    let s = sample_std(xs);
    if s == 0.0 {
        return 0.0;
    }
    let k = xs.len();
    t_critical_975(k - 1) * s / libm::sqrt(k as f64)
}

/// `"0.8040±0.0356"`.
pub fn format_mean_ci(mean: f64, ci: f64) -> String {
    format!("{mean:.4}±{ci:.4}")
}

/// Per-fold metrics with their mean and 95% confidence half-width.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldReport {
    pub per_fold: Vec<Metrics>,
    pub mean_accuracy: f64,
    pub mean_f1: f64,
    pub ci95_accuracy: f64,
    pub ci95_f1: f64,
}

impl FoldReport {
    pub fn from_folds(per_fold: Vec<Metrics>) -> Result<Self> {
        if per_fold.len() < 2 {
            return Err(Error::contract(format!(
                "a fold report needs at least 2 folds, got {}",
                per_fold.len()
            )));
        }
        let acc: Vec<f64> = per_fold.iter().map(|m| m.accuracy).collect();
        let f1: Vec<f64> = per_fold.iter().map(|m| m.f1).collect();
        Ok(Self {
            mean_accuracy: mean(&acc),
            mean_f1: mean(&f1),
            ci95_accuracy: ci95_half_width(&acc),
            ci95_f1: ci95_half_width(&f1),
            per_fold,
        })
    }

    pub fn k(&self) -> usize {
        self.per_fold.len()
    }

    pub fn accuracy_summary(&self) -> String {
        format_mean_ci(self.mean_accuracy, self.ci95_accuracy)
    }

    pub fn f1_summary(&self) -> String {
        format_mean_ci(self.mean_f1, self.ci95_f1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn t_table_values() {
        let table = [12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228];
        for (df, &t) in (1..).zip(&table) {
            assert_eq!(t_critical_975(df), t, "df {df}");
        }
        assert_eq!(t_critical_975(9), 2.262);
    }

    #[test]
    fn zero_variance_gives_zero_width() {
        let r = FoldReport::from_folds(vec![Metrics { accuracy: 0.5, f1: 0.5 }; 10]).unwrap();
        assert_eq!(r.mean_accuracy, 0.5);
        assert_eq!(r.ci95_accuracy, 0.0);
        assert_eq!(r.ci95_f1, 0.0);
        let r = FoldReport::from_folds(vec![Metrics { accuracy: 0.7, f1: 0.1 }; 10]).unwrap();
        assert_eq!(r.mean_accuracy, 0.7);
        assert_eq!(r.ci95_accuracy, 0.0);
    }

    #[test]
    fn formatting() {
        assert_eq!(format_mean_ci(0.80404, 0.035649), "0.8040±0.0356");
    }

    #[test]
    fn needs_two_folds() {
        assert!(FoldReport::from_folds(vec![Metrics::default()]).is_err());
    }
}
