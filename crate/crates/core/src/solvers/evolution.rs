use super::{add_central_difference, ImplicitHeat, SigmaSpec, SolverConfig, BLOWUP_LIMIT};
use crate::deviations::ScalingSchedule;
use crate::error::{check_len, Error, Result};
use crate::grid::{Control, Grid, SpaceField, SpaceTimeField};
use crate::noise::NoiseSheet;

/// Blow-up and CFL checks shared by all steppers.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Guard {
    dt: f64,
    dx: f64,
}

impl Guard {
    pub(crate) fn new(g: &Grid) -> Self {
        Guard {
            dt: g.dt(),
            dx: g.dx(),
        }
    }

    /// Rejects a step whose transport speed violates `dt * |velocity| <= dx`.
    pub(crate) fn cfl(&self, step: usize, speed: f64) -> Result<()> {
        if self.dt * speed > self.dx {
            return Err(Error::Instability {
                step,
                reason: format!(
                    "CFL violated: dt * max|u| = {:e} exceeds dx = {:e}",
                    self.dt * speed,
                    self.dx
                ),
            });
        }
        Ok(())
    }

    pub(crate) fn frame(&self, step: usize, frame: &[f64]) -> Result<()> {
        let mut sup: f64 = 0.0;
        for v in frame {
            if !v.is_finite() {
                return Err(Error::Instability {
                    step,
                    reason: "non-finite value".into(),
                });
            }
            sup = sup.max(v.abs());
        }
        if sup > BLOWUP_LIMIT {
            return Err(Error::Instability {
                step,
                reason: format!("sup-norm {sup:e} exceeds {BLOWUP_LIMIT:e}"),
            });
        }
        Ok(())
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub(crate) struct Forcing<'a> {
    pub sqrt_eps: f64,
    pub sigma: &'a SigmaSpec,
    pub sheet: &'a NoiseSheet,
}

pub(crate) fn evolution_forcing<'a>(eps: f64, sigma: &'a SigmaSpec, sheet: &'a NoiseSheet) -> Forcing<'a> {
    Forcing {
        sqrt_eps: eps.sqrt(),
        sigma,
        sheet,
    }
}

/// Steps the Burgers equation, handing every frame `0..=nt` to `observe`.
///
/// With `forcing = None` (or a vanishing noise term) the arithmetic is exactly
/// the deterministic scheme.
pub(crate) fn evolve_spde(
    u0: &[f64],
    g: &Grid,
    forcing: Option<Forcing<'_>>,
    mut observe: impl FnMut(usize, &[f64]),
) -> Result<()> {
    check_len(g.n_nodes(), u0.len())?;
    if let Some(f) = &forcing {
        if f.sheet.grid() != g {
            return Err(Error::GridMismatch);
        }
    }
    let forcing = forcing.filter(|f| f.sqrt_eps != 0.0 && !f.sigma.is_zero());
    let heat = ImplicitHeat::new(g);
    let guard = Guard::new(g);
    let (nx, dt, dx) = (g.nx(), g.dt(), g.dx());
    let mut u = u0.to_vec();
    let mut flux = vec![0.0; nx + 1];
    let mut rhs = vec![0.0; nx - 1];
    guard.frame(0, &u)?;
    observe(0, &u);
    for k in 0..g.nt() {
        guard.cfl(k, max_abs(&u))?;
        for (f, v) in flux.iter_mut().zip(&u) {
            *f = 0.5 * v * v;
        }
        rhs.copy_from_slice(&u[1..nx]);
        add_central_difference(&flux, dt / (2.0 * dx), &mut rhs);
        if let Some(f) = &forcing {
            let c = f.sqrt_eps / dx;
            for ((r, dw), uj) in rhs.iter_mut().zip(f.sheet.row(k)).zip(&u[1..nx]) {
                *r += c * f.sigma.eval(*uj) * dw;
            }
        }
        heat.solve(&mut rhs);
        u[1..nx].copy_from_slice(&rhs);
        guard.frame(k + 1, &u)?;
        observe(k + 1, &u);
    }
    Ok(())
}

fn collect(g: &Grid, run: impl FnOnce(&mut dyn FnMut(usize, &[f64])) -> Result<()>) -> Result<SpaceTimeField> {
    let mut data = Vec::with_capacity((g.nt() + 1) * g.n_nodes());
    run(&mut |_, frame: &[f64]| data.extend_from_slice(frame))?;
    Ok(SpaceTimeField::from_raw(*g, data))
}

/// Deterministic limit `u_t = u_xx + (u^2/2)_x`.
pub fn solve_deterministic(u0: &SpaceField, g: &Grid, _cfg: &SolverConfig) -> Result<SpaceTimeField> {
    collect(g, |obs| evolve_spde(u0.values(), g, None, obs))
}

/// One path of `u_t = u_xx + (u^2/2)_x + sqrt(eps) sigma(u) W_tx` driven by `w`.
pub fn solve_spde(
    u0: &SpaceField,
    g: &Grid,
    eps: f64,
    sigma: &SigmaSpec,
    w: &NoiseSheet,
    _cfg: &SolverConfig,
) -> Result<SpaceTimeField> {
    let sqrt_eps = check_eps(eps, false)?.sqrt();
    let forcing = Forcing {
        sqrt_eps,
        sigma,
        sheet: w,
    };
    collect(g, |obs| evolve_spde(u0.values(), g, Some(forcing), obs))
}

fn check_eps(eps: f64, positive: bool) -> Result<f64> {
    if !eps.is_finite() || eps < 0.0 || (positive && eps == 0.0) {
        let need = if positive { "> 0" } else { ">= 0" };
        return Err(Error::Domain(format!("eps must be finite and {need}, got {eps}")));
    }
    Ok(eps)
}

/// Controlled deviation process: computes the deterministic limit first.
#[allow(clippy::too_many_arguments)]
pub fn solve_controlled(
    u0: &SpaceField,
    g: &Grid,
    eps: f64,
    sched: &ScalingSchedule,
    sigma: &SigmaSpec,
    v: &Control,
    w: &NoiseSheet,
    cfg: &SolverConfig,
) -> Result<SpaceTimeField> {
    let u_det = solve_deterministic(u0, g, cfg)?;
    solve_controlled_with(&u_det, eps, sched, sigma, v, w, cfg)
}

/// Steps the deviation `b = (u - u0_det) / a(eps)` of the controlled equation
///
/// `b_t = b_xx + (u0 b + a b^2 / 2)_x + sigma(u0 + a b) (W_tx / h + v)`,
///
/// which is the Burgers equation driven by the shifted sheet `W + h int int v`,
/// rewritten around the deterministic limit `u_det`.
pub fn solve_controlled_with(
    u_det: &SpaceTimeField,
    eps: f64,
    sched: &ScalingSchedule,
    sigma: &SigmaSpec,
    v: &Control,
    w: &NoiseSheet,
    _cfg: &SolverConfig,
) -> Result<SpaceTimeField> {
    let eps = check_eps(eps, true)?;
    let g = *u_det.grid();
    if v.grid() != &g || w.grid() != &g {
        return Err(Error::GridMismatch);
    }
    let a = sched.a(eps);
    let inv_h = eps.sqrt() / a;
    let heat = ImplicitHeat::new(&g);
    let guard = Guard::new(&g);
    let (nx, dt, dx) = (g.nx(), g.dt(), g.dx());
    let mut b = vec![0.0; nx + 1];
    let mut flux = vec![0.0; nx + 1];
    let mut rhs = vec![0.0; nx - 1];
    let mut data = Vec::with_capacity((g.nt() + 1) * g.n_nodes());
    data.extend_from_slice(&b);
    let noisy = !sigma.is_zero();
    for k in 0..g.nt() {
        let ud = u_det.frame(k);
        let speed = ud
            .iter()
            .zip(&b)
            .fold(0.0f64, |m, (p, q)| m.max((p + a * q).abs()));
        guard.cfl(k, speed)?;
        for ((f, p), q) in flux.iter_mut().zip(ud).zip(&b) {
            *f = p * q + 0.5 * a * q * q;
        }
        rhs.copy_from_slice(&b[1..nx]);
        add_central_difference(&flux, dt / (2.0 * dx), &mut rhs);
        if noisy {
            let dw = w.row(k);
            let vk = &v.row(k)[1..nx];
            for i in 0..nx - 1 {
                let s = sigma.eval(ud[i + 1] + a * b[i + 1]);
                rhs[i] += s * (inv_h * dw[i] / dx + dt * vk[i]);
            }
        }
        heat.solve(&mut rhs);
        b[1..nx].copy_from_slice(&rhs);
        guard.frame(k + 1, &b)?;
        data.extend_from_slice(&b);
    }
    Ok(SpaceTimeField::from_raw(g, data))
}

/// Streams an SPDE path to `observe` without storing it.
pub fn solve_spde_observed(
    u0: &SpaceField,
    g: &Grid,
    eps: f64,
    sigma: &SigmaSpec,
    w: &NoiseSheet,
    observe: impl FnMut(usize, &[f64]),
) -> Result<()> {
    let sqrt_eps = check_eps(eps, false)?.sqrt();
    let forcing = Forcing {
        sqrt_eps,
        sigma,
        sheet: w,
    };
    evolve_spde(u0.values(), g, Some(forcing), observe)
}
