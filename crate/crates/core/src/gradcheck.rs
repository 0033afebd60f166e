//! Central-difference gradient verification.
//!
//! The relative error of one coordinate is
//! `|analytic - numeric| / max(|analytic| + |numeric|, NOISE_FLOOR)` and checks
//! report the maximum over all coordinates.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::params::{Ctx, ParamStore};
use crate::tensor::Tensor;

/// Denominator floor. Central differences at `eps = 1e-6` through a whole model
/// carry roundoff of a few `1e-9`, so derivatives below this scale are
/// compared in absolute terms.
pub const NOISE_FLOOR: f64 = 1e-4;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = libm::fabs(analytic) + libm::fabs(numeric);
    libm::fabs(analytic - numeric) / scale.max(NOISE_FLOOR)
}

fn scalar_of(g: &Graph, v: Var) -> Result<f64> {
    g.value(v).item()
}

/// Maximum relative error between the tape gradient of scalar `f` at `x` and
/// central differences with step `eps`.
pub fn finite_diff_check<F>(f: F, x: &Tensor, eps: f64) -> Result<f64>
where
    F: Fn(&Graph, Var) -> Result<Var>,
{
    if !(eps > 0.0) {
        return Err(Error::Invalid(alloc::format!(
            "finite-difference step must be positive, got {eps}"
        )));
    }
    let g = Graph::new();
    let xv = g.param(x.clone());
    let y = f(&g, xv)?;
    let analytic = g.backward(y)?.wrt(xv);

    let eval = |t: Tensor| -> Result<f64> {
        let h = Graph::new();
        let v = h.param(t);
        let out = f(&h, v)?;
        scalar_of(&h, out)
    };
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let base = x.data()[i];
        let plus = eval(x.with_value(i, base + eps))?;
        let minus = eval(x.with_value(i, base - eps))?;
        let numeric = (plus - minus) / (2.0 * eps);
        worst = worst.max(relative_error(analytic.data()[i], numeric));
    }
    Ok(worst)
}

/// Result of checking every coordinate of a parameter store.
#[derive(Debug, Clone)]
pub struct StoreCheck {
    pub max_rel_error: f64,
    /// Parameter path and flat index of the worst coordinate.
    pub worst: (String, usize),
    /// Analytic and numeric derivative at the worst coordinate.
    pub worst_values: (f64, f64),
    pub coordinates: usize,
}

/// Checks the gradient of scalar `f` with respect to every scalar in `store`.
pub fn finite_diff_check_store<F>(store: &ParamStore, f: F, eps: f64) -> Result<StoreCheck>
where
    F: Fn(&Ctx) -> Result<Var>,
{
    if !(eps > 0.0) {
        return Err(Error::Invalid(alloc::format!(
            "finite-difference step must be positive, got {eps}"
        )));
    }
    let ctx = Ctx::train(store);
    let y = f(&ctx)?;
    let mut grads = ctx.graph.backward(y)?;
    let analytic: Vec<Tensor> = ctx.param_grads(&mut grads);

    let eval = |s: &ParamStore| -> Result<f64> {
        let c = Ctx::inference(s);
        let out = f(&c)?;
        scalar_of(&c.graph, out)
    };
    let mut work = store.clone();
    let mut report = StoreCheck {
        max_rel_error: 0.0,
        worst: (String::new(), 0),
        worst_values: (0.0, 0.0),
        coordinates: 0,
    };
    for id in store.ids() {
        let original = store.get(id).clone();
        for i in 0..original.len() {
            let base = original.data()[i];
            work.set(id, original.with_value(i, base + eps))?;
            let plus = eval(&work)?;
            work.set(id, original.with_value(i, base - eps))?;
            let minus = eval(&work)?;
            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic[id.index()].data()[i];
            let err = relative_error(a, numeric);
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = (store.name(id).to_string(), i);
                report.worst_values = (a, numeric);
            }
            report.coordinates += 1;
        }
        work.set(id, original)?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_floor() {
        assert!((relative_error(1.0, 1.1) - 0.1 / 2.1).abs() < 1e-15);
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1e-8, 2e-8) - 1e-8 / NOISE_FLOOR).abs() < 1e-18);
        assert!((relative_error(1e-3, 2e-3) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_non_positive_step() {
        let x = Tensor::zeros(&[2]);
        assert!(finite_diff_check(|g, v| g.sum(v), &x, 0.0).is_err());
    }

    #[test]
    fn linear_function_is_exact() {
        let w = Tensor::matrix(3, 2, &[0.5, -1.0, 2.0, 0.25, -0.75, 1.5]).unwrap();
        let x = Tensor::matrix(2, 3, &[0.1, 0.2, 0.3, -0.4, 0.5, -0.6]).unwrap();
        let err = finite_diff_check(
            |g, v| {
                let wv = g.constant(w.clone());
                g.sum(g.matmul(v, wv)?)
            },
            &x,
            1e-6,
        )
        .unwrap();
        assert!(err < 1e-7, "{err}");
    }
}
