//! Numerical checks of the standard Green-kernel integral estimates:
//!
//! * (i)   unit mass `int_0^1 G_t(x,y) dx` (reported, not asserted: the
//!   Dirichlet kernel leaks mass through the boundary);
//! * (ii)  `int_0^t int_0^1 |d_x G_{t-s}|^beta dx ds` finite for `1/2 < beta < 3/2`;
//! * (iii) `int_t^{t'} int G^2_{t'-s} ~ (t'-t)^{1/2}` and `int_0^t int G^2_{t-s}` bounded;
//! * (iv)  `int_0^{t'} int [G_{t-s} - G_{t'-s}]^2 ~ (t'-t)^{1/2}`;
//! * (v)   `int_0^t int [G_s(x,y) - G_s(x,z)]^2 ~ |y - z|`.
//!
//! All space-time integrals run through composite Gauss-Legendre with the
//! time singularity at `s = t` removed by a power substitution.

use serde::Serialize;

use super::{mass, KernelConfig, Part};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::quad::{integrate_singular, peaked_breaks, GaussLegendre};
use crate::stats::power_law_fit;

/// Half-width of the acceptance band around each theoretical exponent.
pub const EXPONENT_BAND: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateRecord {
    pub item: String,
    pub quantity: String,
    pub measured: f64,
    pub expected: f64,
    pub pass: bool,
    /// Informational records never fail a kernel check.
    pub advisory: bool,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub samples: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct EstimateReport {
    pub records: Vec<EstimateRecord>,
}

impl EstimateReport {
    pub fn find(&self, item: &str, quantity: &str) -> Option<&EstimateRecord> {
        self.records
            .iter()
            .find(|r| r.item == item && r.quantity == quantity)
    }

    /// True when every non-advisory record passes.
    pub fn all_pass(&self) -> bool {
        self.records.iter().all(|r| r.pass || r.advisory)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateOptions {
    /// Source point used by items (i)-(v).
    pub y: f64,
    /// Times `t_min..=t_max` (`n_t` points) for the mass checks and the bounded item (iii).
    pub t_min: f64,
    pub t_max: f64,
    pub n_t: usize,
    /// Decade of `t' - t` for items (iii) and (iv).
    pub delta_min: f64,
    /// Decade of `|y - z|` for item (v).
    pub distance_min: f64,
    pub n_fit: usize,
    pub betas: Vec<f64>,
    pub gl_points: usize,
}

impl EstimateOptions {
    pub fn for_grid(g: &Grid) -> Self {
        let t_max = g.horizon().min(1.0);
        EstimateOptions {
            y: 0.5,
            t_min: (0.1f64).min(0.5 * t_max),
            t_max,
            n_t: 10,
            delta_min: 1e-3,
            distance_min: 2e-3,
            n_fit: 6,
            betas: vec![1.0, 1.4],
            gl_points: 16,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.y > 0.0 && self.y < 1.0) {
            return bad(format!("source point y = {} must be interior", self.y));
        }
        if !(self.t_min > 0.0 && self.t_max > self.t_min) || self.n_t < 2 {
            return bad(format!(
                "kernel t-range [{}, {}] with {} points is degenerate",
                self.t_min, self.t_max, self.n_t
            ));
        }
        if self.t_max > 1.0 {
            return bad("kernel estimates are stated for t <= 1".into());
        }
        if !(self.delta_min > 0.0 && 10.0 * self.delta_min < 0.5 * self.t_max) {
            return bad(format!("delta decade from {} does not fit", self.delta_min));
        }
        if !(self.distance_min > 0.0 && self.y + 10.0 * self.distance_min < 1.0) {
            return bad(format!(
                "distance decade from {} does not fit",
                self.distance_min
            ));
        }
        if self.n_fit < 3 || self.gl_points < 4 {
            return bad("need at least 3 fit points and 4 quadrature nodes".into());
        }
        if let Some(b) = self.betas.iter().find(|b| !(**b > 0.5 && **b < 1.5)) {
            return bad(format!("beta = {b} outside (1/2, 3/2)"));
        }
        Ok(())
    }
}

/// Runs every check with options derived from the grid.
pub fn verify_kernel_estimates(g: &Grid, cfg: &KernelConfig) -> Result<EstimateReport> {
    verify_kernel_estimates_with(g, cfg, &EstimateOptions::for_grid(g))
}

pub fn verify_kernel_estimates_with(
    g: &Grid,
    cfg: &KernelConfig,
    opts: &EstimateOptions,
) -> Result<EstimateReport> {
    opts.validate()?;
    let q = Quadrature::new(*cfg, opts.gl_points);
    let mut records = Vec::new();
    records.extend(mass_records(g, cfg, opts)?);
    for &beta in &opts.betas {
        records.push(gradient_power_record(&q, opts, beta));
    }
    records.extend(square_records(&q, opts));
    records.push(time_increment_record(&q, opts));
    records.push(space_increment_record(&q, opts));
    Ok(EstimateReport { records })
}

fn ladder(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64))
        .collect()
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

fn exponent_record(item: &str, quantity: &str, xs: &[f64], ys: &[f64], expected: f64) -> EstimateRecord {
    let measured = power_law_fit(xs, ys).map_or(f64::NAN, |f| f.slope);
    EstimateRecord {
        item: item.into(),
        quantity: quantity.into(),
        measured,
        expected,
        pass: (measured - expected).abs() <= EXPONENT_BAND,
        advisory: false,
        samples: xs.iter().zip(ys).map(|(x, y)| [*x, *y]).collect(),
    }
}

fn mass_records(g: &Grid, cfg: &KernelConfig, opts: &EstimateOptions) -> Result<Vec<EstimateRecord>> {
    let times = linspace(opts.t_min, opts.t_max, opts.n_t);
    let mut worst: f64 = 0.0;
    let mut min_mass = f64::INFINITY;
    let mut samples = Vec::new();
    for &t in &times {
        for jy in 1..g.nx() {
            let y = g.x(jy);
            let quad: f64 = (0..=g.nx())
                .map(|j| g.weight(j) * cfg.eval(Part::Value, t, g.x(j), y))
                .sum();
            worst = worst.max((quad - mass(t, y, cfg)?).abs());
        }
        let m = mass(t, opts.y, cfg)?;
        min_mass = min_mass.min(m);
        samples.push([t, m]);
    }
    let small = mass(1e-4, 0.5, cfg)?;
    Ok(vec![
        EstimateRecord {
            item: "i".into(),
            quantity: "grid_quadrature_vs_mass".into(),
            measured: worst,
            expected: 0.0,
            // trapezoid error is O(dx^2)
            pass: worst <= g.dx() * g.dx(),
            advisory: false,
            samples: Vec::new(),
        },
        EstimateRecord {
            item: "i".into(),
            quantity: "mass_small_t".into(),
            measured: small,
            expected: 1.0,
            pass: small >= 1.0 - 1e-6,
            advisory: false,
            samples: Vec::new(),
        },
        // The unit-mass identity fails for the Dirichlet kernel; flagged only.
        EstimateRecord {
            item: "i".into(),
            quantity: "mass_defect".into(),
            measured: min_mass,
            expected: 1.0,
            pass: (min_mass - 1.0).abs() <= 1e-6,
            advisory: true,
            samples,
        },
    ])
}

struct Quadrature {
    cfg: KernelConfig,
    gl: GaussLegendre,
    fine: GaussLegendre,
}

const TIME_LEVELS: usize = 60;

impl Quadrature {
    fn new(cfg: KernelConfig, n: usize) -> Self {
        Quadrature {
            cfg,
            gl: GaussLegendre::new(n),
            fine: GaussLegendre::new(2 * n),
        }
    }

    fn g(&self, t: f64, x: f64, y: f64) -> f64 {
        self.cfg.eval(Part::Value, t, x, y)
    }

    /// `int_0^1 f(x) dx` for an integrand concentrated near `peaks` on scale `sqrt(tau)`.
    fn space(&self, gl: &GaussLegendre, tau: f64, peaks: &[f64], f: impl FnMut(f64) -> f64) -> f64 {
        gl.integrate_panels(&peaked_breaks(peaks, tau.sqrt()), f)
    }

    /// `int_0^delta int_0^1 G_tau(x,y)^2 dx dtau`.
    fn square_integral(&self, delta: f64, y: f64) -> f64 {
        integrate_singular(&self.gl, delta, 2, TIME_LEVELS, |tau| {
            self.space(&self.gl, tau, &[y], |x| self.g(tau, x, y).powi(2))
        })
    }
}

fn gradient_power_record(q: &Quadrature, opts: &EstimateOptions, beta: f64) -> EstimateRecord {
    // int |d_x G_tau|^beta dx ~ tau^(1/2 - beta); tau = r^m makes the r-integrand bounded.
    let power = (2.0 / (1.5 - beta)).ceil() as u32;
    let run = |gl: &GaussLegendre| {
        integrate_singular(gl, opts.t_max, power, TIME_LEVELS, |tau| {
            q.space(gl, tau, &[opts.y], |x| {
                q.cfg.eval(Part::DerivX, tau, x, opts.y).abs().powf(beta)
            })
        })
    };
    let coarse = run(&q.gl);
    let fine = run(&q.fine);
    let converged = coarse.is_finite() && ((coarse - fine) / fine).abs() <= 1e-2;
    EstimateRecord {
        item: "ii".into(),
        quantity: format!("gradient_power_beta_{beta}"),
        measured: coarse,
        expected: fine,
        pass: converged,
        advisory: false,
        samples: Vec::new(),
    }
}

fn square_records(q: &Quadrature, opts: &EstimateOptions) -> Vec<EstimateRecord> {
    let deltas = ladder(opts.delta_min, 10.0 * opts.delta_min, opts.n_fit);
    let values: Vec<f64> = deltas.iter().map(|&d| q.square_integral(d, opts.y)).collect();
    let local = exponent_record("iii", "short_window_exponent", &deltas, &values, 0.5);

    // Bounded in t: cumulative integral over [t_min, t_max] saturates.
    let times = linspace(opts.t_min, opts.t_max, opts.n_t);
    let totals: Vec<f64> = times.iter().map(|&t| q.square_integral(t, opts.y)).collect();
    let max = totals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let bounded = totals.iter().all(|v| v.is_finite() && *v > 0.0)
        && totals.windows(2).all(|w| w[1] >= w[0] - 1e-12);
    let global = EstimateRecord {
        item: "iii".into(),
        quantity: "full_window_bound".into(),
        measured: max,
        expected: max,
        pass: bounded,
        advisory: false,
        samples: times.iter().zip(&totals).map(|(t, v)| [*t, *v]).collect(),
    };
    vec![local, global]
}

fn time_increment_record(q: &Quadrature, opts: &EstimateOptions) -> EstimateRecord {
    let t = 0.5 * opts.t_max;
    let y = opts.y;
    let deltas = ladder(opts.delta_min, 10.0 * opts.delta_min, opts.n_fit);
    let values: Vec<f64> = deltas
        .iter()
        .map(|&delta| {
            // a = t - s runs over (0, t]; G_{t'-s} = G_{a + delta}.
            let overlap = integrate_singular(&q.gl, t, 2, TIME_LEVELS, |a| {
                q.space(&q.gl, a, &[y], |x| (q.g(a, x, y) - q.g(a + delta, x, y)).powi(2))
            });
            overlap + q.square_integral(delta, y)
        })
        .collect();
    exponent_record("iv", "time_increment_exponent", &deltas, &values, 0.5)
}

fn space_increment_record(q: &Quadrature, opts: &EstimateOptions) -> EstimateRecord {
    let t = opts.t_max;
    let y = opts.y;
    let ds = ladder(opts.distance_min, 10.0 * opts.distance_min, opts.n_fit);
    let values: Vec<f64> = ds
        .iter()
        .map(|&d| {
            let z = y + d;
            integrate_singular(&q.gl, t, 2, TIME_LEVELS, |s| {
                q.space(&q.gl, s, &[y, z], |x| (q.g(s, x, y) - q.g(s, x, z)).powi(2))
            })
        })
        .collect();
    exponent_record("v", "space_increment_exponent", &ds, &values, 1.0)
}
