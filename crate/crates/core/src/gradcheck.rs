//! Central finite-difference check of [`Graph::backward`].

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

/// Worst entry found by [`grad_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter and flat entry index of the worst entry.
    pub param: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

fn eval<F>(f: &F, params: &[Tensor]) -> Result<(Graph, Vec<Var>, Var)>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = params.iter().map(|p| g.param(p.clone())).collect();
    let loss = f(&mut g, &vars)?;
    Ok((g, vars, loss))
}

fn scalar_of(g: &Graph, loss: Var, param: usize, index: usize) -> Result<f64> {
    let v = g
        .value(loss)
        .item()
        .ok_or_else(|| Error::contract("grad_check function must return a scalar"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::GradCheck { param, index })
    }
}

/// Denominator floor of the relative error. A central difference with
/// `eps ~ 1e-5` carries roundoff of order `1e-11 * |f|`, so for entries whose
/// true gradient is (structurally) zero both sides are pure noise; below this
/// floor entries are effectively compared on an absolute scale.
pub const REL_FLOOR: f64 = 1e-6;

/// Compares the analytic gradient of `f` against central differences over
/// every entry of every parameter.
///
/// The relative error of an entry is
/// `|analytic - numeric| / max(REL_FLOOR, |analytic| + |numeric|)`.
pub fn grad_check<F>(f: F, params: &[Tensor], eps: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    if !(eps > 0.0) {
        return Err(Error::config("grad_check eps must be positive"));
    }
    let (g, vars, loss) = eval(&f, params)?;
    scalar_of(&g, loss, 0, 0)?;
    let grads = g.backward(loss)?;

    let mut worst = GradCheckReport {
        max_rel_error: 0.0,
        param: 0,
        index: 0,
        analytic: 0.0,
        numeric: 0.0,
    };
    let mut work: Vec<Tensor> = params.to_vec();
    for (p, var) in vars.iter().enumerate() {
        let analytic = grads.get(*var);
        for i in 0..params[p].numel() {
            let orig = params[p].data()[i];
            work[p].data_mut()[i] = orig + eps;
            let (g_plus, _, l_plus) = eval(&f, &work)?;
            let plus = scalar_of(&g_plus, l_plus, p, i)?;
            work[p].data_mut()[i] = orig - eps;
            let (g_minus, _, l_minus) = eval(&f, &work)?;
            let minus = scalar_of(&g_minus, l_minus, p, i)?;
            work[p].data_mut()[i] = orig;

            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic.data()[i];
            if !a.is_finite() {
                return Err(Error::GradCheck { param: p, index: i });
            }
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(REL_FLOOR);
            if rel > worst.max_rel_error {
                worst = GradCheckReport {
                    max_rel_error: rel,
                    param: p,
                    index: i,
                    analytic: a,
                    numeric,
                };
            }
        }
    }
    Ok(worst)
}
