//! Scaling schedules, deviation fields and Monte Carlo deviation statistics.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{l2_norm_slice, Control, Grid, SpaceField, SpaceTimeField};
use crate::noise::{girsanov_log_density, girsanov_shift, sample_sheet, NoiseSheet, SeedSpec};
use crate::rate::{rate_value, RateOptions};
use crate::solvers::{
    evolve_spde, solve_deterministic, ImplicitHeat, SigmaSpec, SkeletonContext, SolverConfig,
};
use crate::stats::{linear_fit, mean_and_stderr, wilson_interval, LinearFit, Z95};

/// Deviation scale `a(eps)`; the speed is `h(eps) = a(eps) / sqrt(eps)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ScalingSchedule {
    /// `a = sqrt(eps)`.
    Clt,
    /// `a = eps^theta`.
    Moderate { theta: f64 },
    /// `a = 1`.
    Ldp,
}

impl ScalingSchedule {
    pub fn a(&self, eps: f64) -> f64 {
        match *self {
            ScalingSchedule::Clt => eps.sqrt(),
            ScalingSchedule::Moderate { theta } => eps.powf(theta),
            ScalingSchedule::Ldp => 1.0,
        }
    }

    pub fn h(&self, eps: f64) -> f64 {
        match *self {
            ScalingSchedule::Clt => 1.0,
            _ => self.a(eps) / eps.sqrt(),
        }
    }

    /// Rejects moderate schedules outside `0 < theta < 1/2`.
    pub fn validate(&self) -> Result<()> {
        if let ScalingSchedule::Moderate { theta } = *self {
            if !check_scaling(self) {
                return Err(Error::InvalidConfig(format!(
                    "moderate schedule needs 0 < theta < 1/2, got {theta}"
                )));
            }
        }
        Ok(())
    }
}

/// True iff `a(eps) -> 0` and `h(eps) -> infinity` as `eps -> 0`.
pub fn check_scaling(sched: &ScalingSchedule) -> bool {
    match *sched {
        ScalingSchedule::Moderate { theta } => theta > 0.0 && theta < 0.5,
        ScalingSchedule::Clt | ScalingSchedule::Ldp => false,
    }
}

/// `(u_eps - u_det) / a(eps)` frame by frame.
pub fn deviation_field(
    u_eps: &SpaceTimeField,
    u_det: &SpaceTimeField,
    sched: &ScalingSchedule,
    eps: f64,
) -> Result<SpaceTimeField> {
    if !(eps > 0.0) && !matches!(sched, ScalingSchedule::Ldp) {
        return Err(Error::Domain(format!("deviation scale needs eps > 0, got {eps}")));
    }
    Ok(u_eps.axpy(-1.0, u_det)?.scaled(1.0 / sched.a(eps)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub eps_grid: Vec<f64>,
    pub n_paths: usize,
    /// Threshold `r` on `sup_t ||deviation||_2`.
    pub threshold: f64,
    pub moment_orders: Vec<u32>,
    pub seed: u64,
    /// Path `i` uses stream `path_base + i`.
    #[serde(default)]
    pub path_base: u64,
    /// Reweighted estimate under a shifted sheet when plain MC sees few hits.
    #[serde(default)]
    pub importance: bool,
}

/// Plain MC hit counts below this trigger the importance-sampling estimate.
pub const IMPORTANCE_HITS: usize = 10;

/// Failure fractions above this mark a record invalid.
pub const MAX_FAILURE_FRACTION: f64 = 0.01;

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.eps_grid.is_empty() {
            return bad("eps_grid must not be empty".into());
        }
        if let Some(e) = self.eps_grid.iter().find(|e| !(**e > 0.0 && **e <= 1.0)) {
            return bad(format!("eps_grid entries must lie in (0, 1], got {e}"));
        }
        if self.eps_grid.windows(2).any(|w| !(w[1] < w[0])) {
            return bad("eps_grid must be strictly decreasing".into());
        }
        if self.n_paths == 0 {
            return bad("n_paths must be positive".into());
        }
        if !(self.threshold > 0.0 && self.threshold.is_finite()) {
            return bad(format!("threshold must be positive, got {}", self.threshold));
        }
        if let Some(q) = self.moment_orders.iter().find(|q| **q < 2) {
            return bad(format!("moment orders must be at least 2, got {q}"));
        }
        Ok(())
    }
}

/// Per-path `sup_t ||u||_2` and `sup_t ||u - u0||_2` for each `eps`, in path order.
#[derive(Debug, Clone, PartialEq)]
pub struct McSamples {
    pub eps_grid: Vec<f64>,
    /// `paths[i][e]` is `None` for a path that blew up at `eps_grid[e]`.
    pub paths: Vec<Vec<Option<PathSup>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathSup {
    pub sup_u: f64,
    pub sup_diff: f64,
}

/// Runs every path of `mc` at every `eps`, with common random numbers across
/// `eps` (one sheet per path).
pub fn mc_samples(u0: &SpaceField, g: &Grid, sigma: &SigmaSpec, mc: &McConfig, cfg: &SolverConfig) -> Result<McSamples> {
    mc.validate()?;
    let u_det = solve_deterministic(u0, g, cfg)?;
    let paths = (0..mc.n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let w = sample_sheet(g, SeedSpec::new(mc.seed, mc.path_base + i));
            mc.eps_grid
                .iter()
                .map(|&eps| path_sup(u0, g, eps, sigma, &w, &u_det))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(McSamples {
        eps_grid: mc.eps_grid.clone(),
        paths,
    })
}

fn path_sup(
    u0: &SpaceField,
    g: &Grid,
    eps: f64,
    sigma: &SigmaSpec,
    w: &NoiseSheet,
    u_det: &SpaceTimeField,
) -> Result<Option<PathSup>> {
    let mut sup = PathSup {
        sup_u: 0.0,
        sup_diff: 0.0,
    };
    let mut diff = vec![0.0; g.n_nodes()];
    let forcing = crate::solvers::evolution_forcing(eps, sigma, w);
    let run = evolve_spde(u0.values(), g, Some(forcing), |k, u| {
        for ((d, a), b) in diff.iter_mut().zip(u).zip(u_det.frame(k)) {
            *d = a - b;
        }
        sup.sup_u = sup.sup_u.max(l2_norm_slice(u, g));
        sup.sup_diff = sup.sup_diff.max(l2_norm_slice(&diff, g));
    });
    match run {
        Ok(()) => Ok(Some(sup)),
        Err(e) if e.is_numerical() => Ok(None),
        Err(e) => Err(e),
    }
}

impl McSamples {
    /// Fraction of surviving paths at `eps_grid[e]` whose deviation
    /// `sup_diff / a(eps)` exceeds each threshold.
    pub fn exceedance(&self, e: usize, sched: &ScalingSchedule, thresholds: &[f64]) -> Vec<f64> {
        let a = sched.a(self.eps_grid[e]);
        let devs: Vec<f64> = self.paths.iter().filter_map(|p| p[e]).map(|s| s.sup_diff / a).collect();
        thresholds
            .iter()
            .map(|r| {
                if devs.is_empty() {
                    return 0.0;
                }
                devs.iter().filter(|d| **d > *r).count() as f64 / devs.len() as f64
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImportanceEstimate {
    pub p_hat: f64,
    pub stderr: f64,
    pub n_paths: usize,
    /// `ht_norm` of the tilting control.
    pub control_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpsRecord {
    pub eps: f64,
    pub a: f64,
    pub h: f64,
    pub n_ok: usize,
    pub n_failed: usize,
    pub failure_fraction: f64,
    /// False when more than 1% of paths failed.
    pub valid: bool,
    pub hits: usize,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// `E sup_t ||u||_2^q` by order `q`.
    pub moments: BTreeMap<u32, f64>,
    /// `E sup_t ||u - u0||_2^q` by order `q`.
    pub diff_moments: BTreeMap<u32, f64>,
    /// `-log p_hat / h^2`, defined only for `0 < p_hat < 1`.
    pub neg_log_p_over_h2: Option<f64>,
    pub importance: Option<ImportanceEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviationStats {
    pub schedule: ScalingSchedule,
    pub threshold: f64,
    pub records: Vec<EpsRecord>,
}

impl DeviationStats {
    /// Log-log fit of `E sup_t ||u - u0||^q` against `eps`.
    pub fn diff_moment_slope(&self, q: u32) -> Option<LinearFit> {
        let (xs, ys): (Vec<f64>, Vec<f64>) = self
            .records
            .iter()
            .filter_map(|r| r.diff_moments.get(&q).map(|m| (r.eps.ln(), m.ln())))
            .unzip();
        if ys.iter().any(|y| !y.is_finite()) {
            return None;
        }
        linear_fit(&xs, &ys)
    }

    pub fn to_csv_string(&self) -> String {
        let mut orders: Vec<u32> = self
            .records
            .first()
            .map(|r| r.moments.keys().cloned().collect())
            .unwrap_or_default();
        orders.sort_unstable();
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<String> = [
            "eps", "a", "h", "n_ok", "n_failed", "valid", "hits", "p_hat", "ci_low", "ci_high",
            "neg_log_p_over_h2",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        for q in &orders {
            header.push(format!("moment_{q}"));
            header.push(format!("diff_moment_{q}"));
        }
        header.push("is_p_hat".into());
        header.push("is_stderr".into());
        w.write_record(&header).expect("in-memory csv");
        for r in &self.records {
            let mut row = vec![
                r.eps.to_string(),
                r.a.to_string(),
                r.h.to_string(),
                r.n_ok.to_string(),
                r.n_failed.to_string(),
                r.valid.to_string(),
                r.hits.to_string(),
                r.p_hat.to_string(),
                r.ci_low.to_string(),
                r.ci_high.to_string(),
                r.neg_log_p_over_h2.map(|v| v.to_string()).unwrap_or_default(),
            ];
            for q in &orders {
                row.push(r.moments[q].to_string());
                row.push(r.diff_moments[q].to_string());
            }
            row.push(r.importance.as_ref().map(|i| i.p_hat.to_string()).unwrap_or_default());
            row.push(r.importance.as_ref().map(|i| i.stderr.to_string()).unwrap_or_default());
            w.write_record(&row).expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8")
    }
}

/// Monte Carlo deviation statistics for each `eps` in `mc.eps_grid`.
pub fn mc_run(
    u0: &SpaceField,
    g: &Grid,
    sigma: &SigmaSpec,
    sched: &ScalingSchedule,
    mc: &McConfig,
    cfg: &SolverConfig,
) -> Result<DeviationStats> {
    sched.validate()?;
    let samples = mc_samples(u0, g, sigma, mc, cfg)?;
    let mut records = Vec::with_capacity(mc.eps_grid.len());
    for (e, &eps) in mc.eps_grid.iter().enumerate() {
        let ok: Vec<PathSup> = samples.paths.iter().filter_map(|p| p[e]).collect();
        let n_ok = ok.len();
        let n_failed = mc.n_paths - n_ok;
        let (a, h) = (sched.a(eps), sched.h(eps));
        let hits = ok.iter().filter(|s| s.sup_diff / a > mc.threshold).count();
        let p_hat = if n_ok > 0 { hits as f64 / n_ok as f64 } else { 0.0 };
        let (ci_low, ci_high) = wilson_interval(hits, n_ok, Z95);
        let moment = |f: &dyn Fn(&PathSup) -> f64| -> BTreeMap<u32, f64> {
            mc.moment_orders
                .iter()
                .map(|&q| {
                    let m = ok.iter().map(|s| f(s).powi(q as i32)).sum::<f64>() / n_ok.max(1) as f64;
                    (q, m)
                })
                .collect()
        };
        let importance = if mc.importance && hits < IMPORTANCE_HITS && !sigma.is_zero() {
            Some(importance_estimate(u0, g, sigma, sched, mc, eps, cfg)?)
        } else {
            None
        };
        let failure_fraction = n_failed as f64 / mc.n_paths as f64;
        records.push(EpsRecord {
            eps,
            a,
            h,
            n_ok,
            n_failed,
            failure_fraction,
            valid: failure_fraction <= MAX_FAILURE_FRACTION,
            hits,
            p_hat,
            ci_low,
            ci_high,
            moments: moment(&|s| s.sup_u),
            diff_moments: moment(&|s| s.sup_diff),
            neg_log_p_over_h2: (p_hat > 0.0 && p_hat < 1.0).then(|| -p_hat.ln() / (h * h)),
            importance,
        });
    }
    Ok(DeviationStats {
        schedule: *sched,
        threshold: mc.threshold,
        records,
    })
}

/// Estimates `P(sup_t ||deviation|| > r)` by driving the SPDE with the sheet
/// shifted by `h v`, where `v` is the least-energy control whose linearized
/// response crosses the threshold, and reweighting by the Girsanov density.
fn importance_estimate(
    u0: &SpaceField,
    g: &Grid,
    sigma: &SigmaSpec,
    sched: &ScalingSchedule,
    mc: &McConfig,
    eps: f64,
    cfg: &SolverConfig,
) -> Result<ImportanceEstimate> {
    let u_det = solve_deterministic(u0, g, cfg)?;
    // The controlled dynamics linearize the flux (u^2/2)_x, so the tilt uses c = 1.
    let ctx = SkeletonContext::new(u_det.clone(), sigma).with_transport(1.0);
    let r = mc.threshold;
    let horizon = g.horizon();
    let target = SpaceTimeField::from_fn(g, |t, x| {
        1.1 * r * (t / horizon) * std::f64::consts::SQRT_2 * (std::f64::consts::PI * x).sin()
    })?;
    let tilt = rate_value(&target, &ctx, &RateOptions::default())?.v_star;
    let control_norm = crate::grid::ht_norm(&tilt, g)?;
    let (a, h) = (sched.a(eps), sched.h(eps));
    let weights = (0..mc.n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let w = sample_sheet(g, SeedSpec::new(mc.seed, mc.path_base + i));
            let shifted = girsanov_shift(&w, &tilt, h)?;
            let z = girsanov_log_density(&w, &tilt, h)?.exp();
            match path_sup(u0, g, eps, sigma, &shifted, &u_det)? {
                Some(s) if s.sup_diff / a > r => Ok(z),
                _ => Ok(0.0),
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    let (p_hat, stderr) = mean_and_stderr(&weights);
    Ok(ImportanceEstimate {
        p_hat,
        stderr,
        n_paths: mc.n_paths,
        control_norm,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailReport {
    /// `(M, p_hat(M))`, `M` evenly spaced in `M^2`.
    pub levels: Vec<[f64; 2]>,
    /// Fit of `log p_hat` against `M^2`; `None` when no level has hits.
    pub fit: Option<LinearFit>,
    /// `-slope` of the fit.
    pub decay_rate: Option<f64>,
    pub gaussian_like: bool,
}

/// Number of levels in the tail ladder.
pub const TAIL_LEVELS: usize = 8;
/// Exceedances kept at the top level of the ladder.
pub const TAIL_MIN_HITS: usize = 20;

/// Per-path `sup_{t,x} |Z|` of the stochastic convolution
/// `Z = int int G sigma(u0) dW` along the deterministic limit.
pub fn stochastic_convolution_sups(
    u0: &SpaceField,
    g: &Grid,
    sigma: &SigmaSpec,
    n_paths: usize,
    seed: u64,
    cfg: &SolverConfig,
) -> Result<Vec<f64>> {
    let u_det = solve_deterministic(u0, g, cfg)?;
    let heat = ImplicitHeat::new(g);
    let sig: Vec<f64> = (0..g.nt())
        .flat_map(|k| u_det.frame(k)[1..g.nx()].iter().map(|u| sigma.eval(*u)).collect::<Vec<_>>())
        .collect();
    let n = g.n_interior();
    let inv_dx = 1.0 / g.dx();
    Ok((0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            if sigma.is_zero() {
                return 0.0;
            }
            let w = sample_sheet(g, SeedSpec::new(seed, i));
            let mut z = vec![0.0; n];
            let mut sup: f64 = 0.0;
            for k in 0..g.nt() {
                for ((zi, s), dw) in z.iter_mut().zip(&sig[k * n..(k + 1) * n]).zip(w.row(k)) {
                    *zi += s * dw * inv_dx;
                }
                heat.solve(&mut z);
                sup = z.iter().fold(sup, |m, v| m.max(v.abs()));
            }
            sup
        })
        .collect())
}

/// Gaussian-tail check for the stochastic convolution.
pub fn tail_check(u0: &SpaceField, g: &Grid, sigma: &SigmaSpec, mc: &McConfig, cfg: &SolverConfig) -> Result<TailReport> {
    if mc.n_paths < 4 * TAIL_MIN_HITS {
        return Err(Error::InvalidConfig(format!(
            "tail check needs at least {} paths",
            4 * TAIL_MIN_HITS
        )));
    }
    let sups = stochastic_convolution_sups(u0, g, sigma, mc.n_paths, mc.seed, cfg)?;
    Ok(tail_report(&sups))
}

/// Ladder between the median and the level with [`TAIL_MIN_HITS`] exceedances.
pub fn tail_report(sups: &[f64]) -> TailReport {
    let mut sorted = sups.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len();
    let top = sorted[n - 1];
    if top == 0.0 {
        let levels = (1..=TAIL_LEVELS).map(|i| [i as f64, 0.0]).collect();
        return TailReport {
            levels,
            fit: None,
            decay_rate: None,
            gaussian_like: false,
        };
    }
    let lo = sorted[n / 2];
    let hi = sorted[n - TAIL_MIN_HITS];
    let levels: Vec<[f64; 2]> = (0..TAIL_LEVELS)
        .map(|i| {
            let m2 = lo * lo + (hi * hi - lo * lo) * i as f64 / (TAIL_LEVELS - 1) as f64;
            let m = m2.sqrt();
            let count = n - sorted.partition_point(|v| *v < m);
            [m, count as f64 / n as f64]
        })
        .collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = levels
        .iter()
        .filter(|l| l[1] > 0.0)
        .map(|l| (l[0] * l[0], l[1].ln()))
        .unzip();
    let fit = linear_fit(&xs, &ys);
    let gaussian_like = fit.is_some_and(|f| f.slope < 0.0 && f.r_squared >= 0.9);
    TailReport {
        levels,
        decay_rate: fit.map(|f| -f.slope),
        fit,
        gaussian_like,
    }
}

/// A control with zero boundary columns and unit `ht_norm`, as used for the
/// Girsanov mean-one check.
pub fn unit_sine_control(g: &Grid) -> Control {
    let v = Control::from_fn(g, |_, x| (std::f64::consts::PI * x).sin());
    let norm = crate::grid::ht_norm(&v, g).expect("same grid");
    v.scaled(1.0 / norm)
}
