//! Rate function `I(f) = inf { ||v||_H^2 / 2 : A v = f }` of the skeleton map.
//!
//! `A` is linear, so the infimum is attained by the least-norm solution
//! `v* = A^T w` with `A A^T w = f`. The normal equations are solved
//! matrix-free by conjugate residuals: each iteration costs one forward and
//! one adjoint skeleton solve, and the residual norm decreases monotonically.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ht_norm, spacetime_inner, sup_t_l2, Control, SpaceTimeField};
use crate::solvers::SkeletonContext;

/// `A v`: the skeleton solution driven by `v`.
pub fn apply_forward(v: &Control, ctx: &SkeletonContext) -> Result<SpaceTimeField> {
    ctx.forward(v)
}

/// `A^T g` for the space-time pairing of [`spacetime_inner`] and the `H` pairing.
pub fn apply_adjoint(g: &SpaceTimeField, ctx: &SkeletonContext) -> Result<Control> {
    ctx.adjoint(g)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RateOptions {
    /// Target residual `sup_t ||A v - f||_2`.
    pub tol: f64,
    pub max_iter: usize,
    /// Tikhonov weights tried when the target is not reached.
    pub lambdas: Vec<f64>,
}

impl Default for RateOptions {
    fn default() -> Self {
        RateOptions {
            tol: 1e-6,
            max_iter: 5000,
            lambdas: vec![1e-8, 1e-6, 1e-4],
        }
    }
}

impl RateOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(Error::InvalidConfig(
                "rate solver needs tol > 0 and max_iter >= 1".into(),
            ));
        }
        if self.lambdas.iter().any(|l| !(*l > 0.0)) {
            return Err(Error::InvalidConfig("Tikhonov weights must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LCurvePoint {
    pub lambda: f64,
    pub residual: f64,
    pub value: f64,
}

/// Regularized solves of `(A A^T + lambda) w = f`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Regularization {
    pub curve: Vec<LCurvePoint>,
    /// Index into `curve` of the L-curve corner.
    pub corner: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateResult {
    /// `ht_norm(v_star)^2 / 2`.
    pub value: f64,
    pub v_star: Control,
    /// `sup_t ||A v_star - f||_2`.
    pub residual: f64,
    pub iterations: usize,
    /// Whether the residual reached the tolerance; `false` is the discrete
    /// counterpart of `I(f) = infinity`.
    pub attainable: bool,
    /// Normal-equation residual norms, one per iteration (non-increasing).
    pub residual_history: Vec<f64>,
    pub regularization: Option<Regularization>,
}

/// Relative change of the objective below which iteration past the residual
/// target stops.
const VALUE_STAGNATION: f64 = 1e-12;

struct Solve {
    v: Control,
    iterations: usize,
    history: Vec<f64>,
    converged: bool,
}

/// Conjugate residuals on `(A A^T + lambda) w = f`, accumulating `v = A^T w`.
fn conjugate_residual(
    f: &SpaceTimeField,
    ctx: &SkeletonContext,
    lambda: f64,
    opts: &RateOptions,
) -> Result<Solve> {
    let g = *ctx.grid();
    let inner = |a: &SpaceTimeField, b: &SpaceTimeField| spacetime_inner(a, b);
    // normal operator: returns (A^T p, A A^T p + lambda p)
    let apply = |p: &SpaceTimeField| -> Result<(Control, SpaceTimeField)> {
        let at = ctx.adjoint(p)?;
        let mut np = ctx.forward(&at)?;
        if lambda > 0.0 {
            np = np.axpy(lambda, p)?;
        }
        Ok((at, np))
    };
    let mut v = Control::zeros(&g);
    let mut r = f.clone();
    let (mut at_p, mut ap) = apply(&r)?;
    let mut p = r.clone();
    let mut rar = inner(&r, &ap)?;
    let mut history = Vec::new();
    let mut value = 0.0;
    let mut iterations = 0;
    let mut converged = sup_t_l2(&r, &g)? <= opts.tol;
    while !converged && iterations < opts.max_iter && rar > 0.0 {
        iterations += 1;
        let alpha = rar / inner(&ap, &ap)?;
        v = v.axpy(alpha, &at_p)?;
        r = r.axpy(-alpha, &ap)?;
        history.push(inner(&r, &r)?.sqrt());
        let new_value = 0.5 * ht_norm(&v, &g)?.powi(2);
        let stagnant = (new_value - value).abs() <= VALUE_STAGNATION * new_value;
        value = new_value;
        if sup_t_l2(&r, &g)? <= opts.tol && stagnant {
            converged = true;
            break;
        }
        let (at_r, ar) = apply(&r)?;
        let rar_new = inner(&r, &ar)?;
        let beta = rar_new / rar;
        rar = rar_new;
        p = r.axpy(beta, &p)?;
        at_p = at_r.axpy(beta, &at_p)?;
        ap = ar.axpy(beta, &ap)?;
    }
    Ok(Solve {
        v,
        iterations,
        history,
        converged,
    })
}

/// Evaluates `I(f)`; never fails for unattainable targets, which are
/// reported through [`RateResult::attainable`] instead.
pub fn rate_value(f: &SpaceTimeField, ctx: &SkeletonContext, opts: &RateOptions) -> Result<RateResult> {
    opts.validate()?;
    let g = *ctx.grid();
    if f.grid() != &g {
        return Err(Error::GridMismatch);
    }
    let solve = conjugate_residual(f, ctx, 0.0, opts)?;
    let residual = sup_t_l2(&ctx.forward(&solve.v)?.axpy(-1.0, f)?, &g)?;
    let attainable = solve.converged && residual <= opts.tol;
    let regularization = if attainable {
        None
    } else {
        Some(tikhonov_sweep(f, ctx, opts)?)
    };
    Ok(RateResult {
        value: 0.5 * ht_norm(&solve.v, &g)?.powi(2),
        v_star: solve.v,
        residual,
        iterations: solve.iterations,
        attainable,
        residual_history: solve.history,
        regularization,
    })
}

fn tikhonov_sweep(f: &SpaceTimeField, ctx: &SkeletonContext, opts: &RateOptions) -> Result<Regularization> {
    let g = *ctx.grid();
    let mut curve = Vec::with_capacity(opts.lambdas.len());
    for &lambda in &opts.lambdas {
        let s = conjugate_residual(f, ctx, lambda, opts)?;
        let residual = sup_t_l2(&ctx.forward(&s.v)?.axpy(-1.0, f)?, &g)?;
        curve.push(LCurvePoint {
            lambda,
            residual,
            value: 0.5 * ht_norm(&s.v, &g)?.powi(2),
        });
    }
    Ok(Regularization {
        corner: l_curve_corner(&curve),
        curve,
    })
}

/// Point closest to the origin once log-residual and log-norm are each
/// rescaled to `[0, 1]`.
fn l_curve_corner(curve: &[LCurvePoint]) -> usize {
    let logs: Vec<(f64, f64)> = curve
        .iter()
        .map(|p| (p.residual.max(f64::MIN_POSITIVE).ln(), p.value.max(f64::MIN_POSITIVE).ln()))
        .collect();
    let span = |sel: fn(&(f64, f64)) -> f64| {
        let lo = logs.iter().map(sel).fold(f64::INFINITY, f64::min);
        let hi = logs.iter().map(sel).fold(f64::NEG_INFINITY, f64::max);
        (lo, (hi - lo).max(f64::MIN_POSITIVE))
    };
    let (r0, rs) = span(|p| p.0);
    let (n0, ns) = span(|p| p.1);
    (0..logs.len())
        .min_by(|&i, &j| {
            let d = |k: usize| ((logs[k].0 - r0) / rs).powi(2) + ((logs[k].1 - n0) / ns).powi(2);
            d(i).total_cmp(&d(j))
        })
        .unwrap_or(0)
}
