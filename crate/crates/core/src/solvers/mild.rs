//! Mild (integral) form of the skeleton equation, solved by Picard iteration.
//!
//! With `w = sum_n a_n(t) sin(n pi x)` the heat semigroup is diagonal,
//! `G_t(x, y) = 2 sum_n exp(-n^2 pi^2 t) sin(n pi x) sin(n pi y)`, so the
//! time convolutions against `G` and `d_y G` reduce to scalar exponential
//! integrals per mode. These are evaluated exactly for forcing that is
//! piecewise linear (transport) or piecewise constant (control) in time,
//! which sidesteps the `(t - s)^{-3/4}` singularity of `d_y G` altogether.

use std::f64::consts::PI;

use super::skeleton::check_u_det;
use super::{SigmaSpec, SkeletonContext, SolverConfig};
use crate::error::{Error, Result};
use crate::grid::{l2_norm_slice, Control, Grid, SpaceField, SpaceTimeField};

#[derive(Debug, Clone)]
pub struct FixedPoint {
    pub field: SpaceTimeField,
    /// Successive-difference norms `||w_{m+1} - w_m||` in sup_t L^2.
    pub residuals: Vec<f64>,
    /// Ratios of consecutive residuals; below one for a contraction.
    pub ratios: Vec<f64>,
    pub iterations: usize,
}

/// Sine basis on the grid with per-mode exponential integrator weights.
struct Modal {
    grid: Grid,
    sin: Vec<f64>,
    cos: Vec<f64>,
    decay: Vec<f64>,
    phi0: Vec<f64>,
    phi1: Vec<f64>,
}

impl Modal {
    fn new(g: &Grid) -> Self {
        let modes = g.n_interior();
        let nodes = g.n_nodes();
        let dt = g.dt();
        let mut sin = Vec::with_capacity(modes * nodes);
        let mut cos = Vec::with_capacity(modes * nodes);
        let (mut decay, mut phi0, mut phi1) = (vec![0.0; modes], vec![0.0; modes], vec![0.0; modes]);
        for m in 0..modes {
            let k = (m + 1) as f64 * PI;
            for j in 0..nodes {
                sin.push((k * g.x(j)).sin());
                cos.push((k * g.x(j)).cos());
            }
            let lambda = k * k;
            let x = lambda * dt;
            decay[m] = (-x).exp();
            phi0[m] = -(-x).exp_m1() / lambda;
            // int_0^dt exp(-lambda r) r dr / dt
            let moment = if x < 1e-2 {
                dt * (0.5 - x / 3.0 + x * x / 8.0 - x.powi(3) / 30.0 + x.powi(4) / 144.0)
            } else {
                (1.0 - decay[m] * (1.0 + x)) / (lambda * lambda * dt)
            };
            phi1[m] = phi0[m] - moment;
        }
        Modal {
            grid: *g,
            sin,
            cos,
            decay,
            phi0,
            phi1,
        }
    }

    fn modes(&self) -> usize {
        self.decay.len()
    }

    fn row<'a>(&self, table: &'a [f64], m: usize) -> &'a [f64] {
        let n = self.grid.n_nodes();
        &table[m * n..(m + 1) * n]
    }

    /// `scale_m * 2 int_0^1 basis_m(y) f(y) dy` on interior nodes (trapezoid;
    /// every integrand used here vanishes at the ends).
    fn project(&self, table: &[f64], f: impl Fn(usize) -> f64, scale: impl Fn(usize) -> f64, out: &mut [f64]) {
        let nx = self.grid.nx();
        let fv: Vec<f64> = (1..nx).map(&f).collect();
        for (m, o) in out.iter_mut().enumerate() {
            let b = self.row(table, m);
            let s: f64 = fv.iter().zip(&b[1..nx]).map(|(a, c)| a * c).sum();
            *o = scale(m) * 2.0 * self.grid.dx() * s;
        }
    }

    fn synthesize(&self, coeffs: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let nx = self.grid.nx();
        for (m, a) in coeffs.iter().enumerate() {
            let b = self.row(&self.sin, m);
            for j in 1..nx {
                out[j] += a * b[j];
            }
        }
    }

    /// Integrates `a' = -lambda a + F(t) + b(t)` over the steps `k0..k1`, with
    /// `F` linear between nodes and `b` constant on each step, writing frames
    /// `k0..=k1` of the synthesized field into `data`.
    fn integrate(&self, start: &[f64], transport: &[Vec<f64>], source: &[Vec<f64>], k0: usize, data: &mut [f64]) -> Vec<f64> {
        let n = self.grid.n_nodes();
        let steps = source.len();
        let mut a = start.to_vec();
        self.synthesize(&a, &mut data[k0 * n..(k0 + 1) * n]);
        for s in 0..steps {
            let (f0, f1, b) = (&transport[s], &transport[s + 1], &source[s]);
            for m in 0..self.modes() {
                let (p0, p1) = (self.phi0[m], self.phi1[m]);
                a[m] = self.decay[m] * a[m] + (p0 - p1) * f0[m] + p1 * f1[m] + p0 * b[m];
            }
            let k = k0 + s + 1;
            self.synthesize(&a, &mut data[k * n..(k + 1) * n]);
        }
        a
    }
}

fn sup_gap(a: &[f64], b: &[f64], g: &Grid, frames: std::ops::RangeInclusive<usize>) -> f64 {
    let n = g.n_nodes();
    let mut diff = vec![0.0; n];
    let mut sup: f64 = 0.0;
    for k in frames {
        for j in 0..n {
            diff[j] = a[k * n + j] - b[k * n + j];
        }
        sup = sup.max(l2_norm_slice(&diff, g));
    }
    sup
}

impl SkeletonContext {
    /// Picard iteration of `w -> -c int int d_y G w u0 + int int G sigma(u0) v`
    /// from `w = 0` on windows of `window` steps, each window starting from the
    /// previous window's end state.
    pub fn fixed_point(&self, v: &Control, cfg: &SolverConfig, window: usize) -> Result<FixedPoint> {
        let g = *self.grid();
        if v.grid() != &g {
            return Err(Error::GridMismatch);
        }
        if window == 0 {
            return Err(Error::InvalidConfig("fixed-point window must be at least one step".into()));
        }
        let modal = Modal::new(&g);
        let modes = modal.modes();
        let (nx, n) = (g.nx(), g.n_nodes());
        let c = self.transport();
        let source: Vec<Vec<f64>> = (0..g.nt())
            .map(|k| {
                let mut b = vec![0.0; modes];
                let (s, vk) = (self.sigma_row(k), v.row(k));
                modal.project(&modal.sin, |j| s[j - 1] * vk[j], |_| 1.0, &mut b);
                b
            })
            .collect();
        let mut current = vec![0.0; (g.nt() + 1) * n];
        let mut start = vec![0.0; modes];
        let mut residuals = Vec::new();
        let mut ratios = Vec::new();
        let mut iterations = 0;
        let mut k0 = 0;
        while k0 < g.nt() {
            let k1 = (k0 + window).min(g.nt());
            let mut end = start.clone();
            let mut last = f64::NAN;
            let mut converged = false;
            for it in 0..cfg.fp_max_iter() {
                iterations += 1;
                let transport: Vec<Vec<f64>> = (k0..=k1)
                    .map(|k| {
                        let mut f = vec![0.0; modes];
                        let (w, u) = (&current[k * n..(k + 1) * n], self.u_det().frame(k));
                        modal.project(&modal.cos, |j| w[j] * u[j], |m| -c * (m + 1) as f64 * PI, &mut f);
                        f
                    })
                    .collect();
                let mut next = current.clone();
                end = modal.integrate(&start, &transport, &source[k0..k1], k0, &mut next);
                let res = sup_gap(&next, &current, &g, k0..=k1);
                current = next;
                residuals.push(res);
                if it > 0 && last > 0.0 {
                    ratios.push(res / last);
                }
                last = res;
                if res < cfg.fp_tol() {
                    converged = true;
                    break;
                }
            }
            if !converged {
                return Err(Error::ContractionFailure {
                    iterations,
                    residual: last,
                    ratios,
                });
            }
            start = end;
            k0 = k1;
        }
        for k in 0..=g.nt() {
            current[k * n] = 0.0;
            current[k * n + nx] = 0.0;
        }
        Ok(FixedPoint {
            field: SpaceTimeField::from_raw(g, current),
            residuals,
            ratios,
            iterations,
        })
    }
}

/// Mild-form skeleton solution on the whole horizon in one contraction window.
pub fn solve_skeleton_fixed_point(
    u0: &SpaceField,
    g: &Grid,
    v: &Control,
    sigma: &SigmaSpec,
    u_det: &SpaceTimeField,
    cfg: &SolverConfig,
) -> Result<FixedPoint> {
    solve_skeleton_fixed_point_windowed(u0, g, v, sigma, u_det, cfg, g.nt())
}

/// As [`solve_skeleton_fixed_point`], concatenating windows of `window` steps.
pub fn solve_skeleton_fixed_point_windowed(
    u0: &SpaceField,
    g: &Grid,
    v: &Control,
    sigma: &SigmaSpec,
    u_det: &SpaceTimeField,
    cfg: &SolverConfig,
    window: usize,
) -> Result<FixedPoint> {
    check_u_det(u0, g, u_det)?;
    SkeletonContext::new(u_det.clone(), sigma).fixed_point(v, cfg, window)
}

/// Discrete check of `||J f(t)||_2 <= C int_0^t (t - r)^{-3/4} ||f(r)||_1 dr`
/// for `J f(t, x) = int_0^t int_0^1 d_y G_{t-r}(x, y) f(r, y) dy dr`.
#[derive(Debug, Clone)]
pub struct TransportBound {
    /// `||J f(t_k)||_2 / majorant(t_k)` for `k = 1..=nt`.
    pub ratios: Vec<f64>,
    pub max_ratio: f64,
}

pub fn transport_bound_check(f: &SpaceTimeField) -> TransportBound {
    let g = *f.grid();
    let modal = Modal::new(&g);
    let modes = modal.modes();
    let n = g.n_nodes();
    let transport: Vec<Vec<f64>> = (0..=g.nt())
        .map(|k| {
            let mut c = vec![0.0; modes];
            let fk = f.frame(k);
            modal.project(&modal.cos, |j| fk[j], |m| (m + 1) as f64 * PI, &mut c);
            c
        })
        .collect();
    let zero = vec![vec![0.0; modes]; g.nt()];
    let mut data = vec![0.0; (g.nt() + 1) * n];
    modal.integrate(&vec![0.0; modes], &transport, &zero, 0, &mut data);
    let l1: Vec<f64> = f
        .frames()
        .map(|fr| fr.iter().enumerate().map(|(j, v)| g.weight(j) * v.abs()).sum())
        .collect();
    let mut ratios = Vec::with_capacity(g.nt());
    for k in 1..=g.nt() {
        let t = g.t(k);
        let majorant: f64 = (0..k)
            .map(|i| {
                let cell = 4.0 * ((t - g.t(i)).powf(0.25) - (t - g.t(i + 1)).max(0.0).powf(0.25));
                cell * 0.5 * (l1[i] + l1[i + 1])
            })
            .sum();
        let value = l2_norm_slice(&data[k * n..(k + 1) * n], &g);
        ratios.push(if majorant > 0.0 { value / majorant } else { 0.0 });
    }
    let max_ratio = ratios.iter().cloned().fold(0.0, f64::max);
    TransportBound { ratios, max_ratio }
}
