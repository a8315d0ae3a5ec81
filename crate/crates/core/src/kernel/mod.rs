//! Dirichlet heat kernel on `[0, 1]` for the operator `d/dt - d^2/dx^2`.
//!
//! Two series represent the same kernel:
//!
//! * spectral: `G_t(x,y) = 2 sum_{n>=1} exp(-n^2 pi^2 t) sin(n pi x) sin(n pi y)`,
//!   which converges fast for large `t`;
//! * image: `G_t(x,y) = sum_n [p_t(x - y - 2n) - p_t(x + y - 2n)]` with the
//!   Gaussian `p_t(z) = exp(-z^2 / 4t) / sqrt(4 pi t)`, fast for small `t`.
//!
//! [`KernelMethod::Auto`] picks the image sum below [`AUTO_SWITCH_TIME`] and
//! the spectral sum above it.

mod estimates;

pub use estimates::{
    verify_kernel_estimates, verify_kernel_estimates_with, EstimateOptions, EstimateRecord,
    EstimateReport,
};

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const AUTO_SWITCH_TIME: f64 = 0.05;
pub const MIN_TRUNCATION: usize = 16;

/// Terms whose exponent is below `-NEGLIGIBLE_EXPONENT` are dropped early.
const NEGLIGIBLE_EXPONENT: f64 = 45.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelMethod {
    Spectral,
    Image,
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KernelConfigSpec", into = "KernelConfigSpec")]
pub struct KernelConfig {
    truncation: usize,
    method: KernelMethod,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfigSpec {
    pub truncation: usize,
    pub method: KernelMethod,
}

impl TryFrom<KernelConfigSpec> for KernelConfig {
    type Error = Error;

    fn try_from(s: KernelConfigSpec) -> Result<Self> {
        KernelConfig::new(s.truncation, s.method)
    }
}

impl From<KernelConfig> for KernelConfigSpec {
    fn from(c: KernelConfig) -> Self {
        KernelConfigSpec {
            truncation: c.truncation,
            method: c.method,
        }
    }
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            truncation: 64,
            method: KernelMethod::Auto,
        }
    }
}

/// Which derivative of the kernel to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Part {
    Value,
    DerivX,
    DerivY,
}

impl KernelConfig {
    pub fn new(truncation: usize, method: KernelMethod) -> Result<Self> {
        if truncation < MIN_TRUNCATION {
            return Err(Error::InvalidConfig(format!(
                "kernel truncation must be at least {MIN_TRUNCATION}, got {truncation}"
            )));
        }
        Ok(KernelConfig { truncation, method })
    }

    pub fn truncation(&self) -> usize {
        self.truncation
    }

    pub fn method(&self) -> KernelMethod {
        self.method
    }

    pub fn with_method(&self, method: KernelMethod) -> Self {
        KernelConfig { method, ..*self }
    }

    /// The concrete series used at time `t`.
    pub fn resolve(&self, t: f64) -> KernelMethod {
        match self.method {
            KernelMethod::Auto if t < AUTO_SWITCH_TIME => KernelMethod::Image,
            KernelMethod::Auto => KernelMethod::Spectral,
            m => m,
        }
    }

    /// Upper bound on the absolute error of `G_t` from cutting the series at
    /// `truncation` terms.
    pub fn truncation_bound(&self, t: f64) -> f64 {
        let n = self.truncation as f64;
        match self.resolve(t) {
            KernelMethod::Spectral => {
                let q = (-PI * PI * t * (2.0 * n + 3.0)).exp();
                2.0 * (-(n + 1.0).powi(2) * PI * PI * t).exp() / (1.0 - q)
            }
            _ => {
                // Dropped terms have |z| >= 2|n| - 2; geometric tail of the Gaussian.
                let z = 2.0 * n;
                let q = (-(4.0 * z + 4.0) / (4.0 * t)).exp();
                4.0 * gauss(z, t) / (1.0 - q).max(f64::MIN_POSITIVE)
            }
        }
    }

    pub(crate) fn eval(&self, part: Part, t: f64, x: f64, y: f64) -> f64 {
        match self.resolve(t) {
            KernelMethod::Spectral => spectral(part, self.truncation, t, x, y),
            _ => image(part, self.truncation, t, x, y),
        }
    }
}

fn check_args(t: f64, x: f64, y: f64) -> Result<()> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!(
            "heat kernel requires t > 0 (singular at t = 0), got t = {t}"
        )));
    }
    for (name, v) in [("x", x), ("y", y)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Domain(format!("{name} = {v} lies outside [0, 1]")));
        }
    }
    Ok(())
}

/// `G_t(x, y)`.
pub fn eval_g(t: f64, x: f64, y: f64, cfg: &KernelConfig) -> Result<f64> {
    check_args(t, x, y)?;
    Ok(cfg.eval(Part::Value, t, x, y))
}

/// `d/dy G_t(x, y)`, the term-wise derivative of the selected series.
pub fn eval_dg_dy(t: f64, x: f64, y: f64, cfg: &KernelConfig) -> Result<f64> {
    check_args(t, x, y)?;
    Ok(cfg.eval(Part::DerivY, t, x, y))
}

/// `d/dx G_t(x, y)`.
pub fn eval_dg_dx(t: f64, x: f64, y: f64, cfg: &KernelConfig) -> Result<f64> {
    check_args(t, x, y)?;
    Ok(cfg.eval(Part::DerivX, t, x, y))
}

/// Total mass `int_0^1 G_t(x, y) dx` remaining at time `t` from a unit source at `y`.
///
/// Strictly below one for `t > 0`: the Dirichlet boundary absorbs mass.
pub fn mass(t: f64, y: f64, cfg: &KernelConfig) -> Result<f64> {
    check_args(t, 0.0, y)?;
    if y == 0.0 || y == 1.0 {
        return Ok(0.0);
    }
    let n_max = cfg.truncation as i64;
    Ok(match cfg.resolve(t) {
        KernelMethod::Spectral => {
            // Only odd modes carry mass: int_0^1 sin(n pi x) dx = 2 / (n pi).
            let mut sum = 0.0;
            for n in (1..=n_max).step_by(2) {
                let nf = n as f64;
                let decay = (-nf * nf * PI * PI * t).exp();
                sum += 4.0 / (nf * PI) * decay * (nf * PI * y).sin();
                if decay < 1e-18 {
                    break;
                }
            }
            sum
        }
        _ => {
            let s = (4.0 * t).sqrt();
            // int_0^1 p_t(x - c) dx = (erf((1 - c)/s) + erf(c/s)) / 2
            let seg = |c: f64| 0.5 * (libm::erf((1.0 - c) / s) + libm::erf(c / s));
            let mut sum = 0.0;
            for n in -n_max..=n_max {
                let shift = 2.0 * n as f64;
                sum += seg(y + shift) - seg(-y + shift);
            }
            sum
        }
    })
}

fn gauss(z: f64, t: f64) -> f64 {
    (-z * z / (4.0 * t)).exp() / (4.0 * PI * t).sqrt()
}

fn on_boundary(v: f64) -> bool {
    v == 0.0 || v == 1.0
}

fn spectral(part: Part, truncation: usize, t: f64, x: f64, y: f64) -> f64 {
    match part {
        Part::Value | Part::DerivY if on_boundary(x) => return 0.0,
        Part::Value | Part::DerivX if on_boundary(y) => return 0.0,
        _ => {}
    }
    let mut sum = 0.0;
    for n in 1..=truncation {
        let nf = n as f64;
        let exponent = nf * nf * PI * PI * t;
        let k = nf * PI;
        let term = match part {
            Part::Value => (k * x).sin() * (k * y).sin(),
            Part::DerivY => k * (k * x).sin() * (k * y).cos(),
            Part::DerivX => k * (k * x).cos() * (k * y).sin(),
        };
        sum += (-exponent).exp() * term;
        if exponent - nf.ln() > NEGLIGIBLE_EXPONENT {
            break;
        }
    }
    2.0 * sum
}

fn image(part: Part, truncation: usize, t: f64, x: f64, y: f64) -> f64 {
    match part {
        Part::Value | Part::DerivY if on_boundary(x) => return 0.0,
        Part::Value | Part::DerivX if on_boundary(y) => return 0.0,
        _ => {}
    }
    let terms = |n: i64| {
        let shift = 2.0 * n as f64;
        let a = x - y - shift;
        let b = x + y - shift;
        let (pa, pb) = (gauss(a, t), gauss(b, t));
        let c = 0.5 / t;
        match part {
            Part::Value => pa - pb,
            Part::DerivY => c * (a * pa + b * pb),
            Part::DerivX => c * (-a * pa + b * pb),
        }
    };
    let mut sum = terms(0);
    for n in 1..=truncation as i64 {
        sum += terms(n) + terms(-n);
        let gap = 2.0 * n as f64 - 2.0;
        if gap > 0.0 && gap * gap / (4.0 * t) > NEGLIGIBLE_EXPONENT {
            break;
        }
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spectral_cfg(n: usize) -> KernelConfig {
        KernelConfig::new(n, KernelMethod::Spectral).unwrap()
    }

    fn image_cfg(n: usize) -> KernelConfig {
        KernelConfig::new(n, KernelMethod::Image).unwrap()
    }

    #[test]
    fn truncation_below_minimum_is_rejected() {
        assert!(KernelConfig::new(15, KernelMethod::Auto).is_err());
        assert!(KernelConfig::new(16, KernelMethod::Auto).is_ok());
    }

    #[test]
    fn nonpositive_time_is_a_domain_error() {
        let cfg = KernelConfig::default();
        assert!(matches!(eval_g(0.0, 0.3, 0.4, &cfg), Err(Error::Domain(_))));
        assert!(matches!(eval_g(-1.0, 0.3, 0.4, &cfg), Err(Error::Domain(_))));
        assert!(matches!(eval_dg_dy(0.0, 0.3, 0.4, &cfg), Err(Error::Domain(_))));
        assert!(eval_g(0.1, 1.2, 0.4, &cfg).is_err());
    }

    #[test]
    fn vanishes_on_the_boundary() {
        for cfg in [spectral_cfg(64), image_cfg(64), KernelConfig::default()] {
            for t in [1e-3, 0.05, 0.7] {
                assert_eq!(eval_g(t, 0.3, 0.0, &cfg).unwrap(), 0.0);
                assert_eq!(eval_g(t, 1.0, 0.3, &cfg).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn symmetric_in_space() {
        for cfg in [spectral_cfg(64), image_cfg(64)] {
            let a = eval_g(0.05, 0.2, 0.7, &cfg).unwrap();
            let b = eval_g(0.05, 0.7, 0.2, &cfg).unwrap();
            assert!((a - b).abs() < 1e-14, "{a} vs {b}");
        }
    }

    #[test]
    fn small_time_value_matches_large_image_sum() {
        // Oracle: image sum with 50 terms per side, no early exit.
        let (t, x, y): (f64, f64, f64) = (0.01, 0.5, 0.5);
        let oracle: f64 = (-50..=50)
            .map(|n| {
                let s = 2.0 * n as f64;
                gauss(x - y - s, t) - gauss(x + y - s, t)
            })
            .sum();
        for cfg in [KernelConfig::default(), image_cfg(16), spectral_cfg(64)] {
            let v = eval_g(t, x, y, &cfg).unwrap();
            assert!((v - oracle).abs() < 1e-10, "{v} vs {oracle}");
        }
    }

    #[test]
    fn derivative_vanishes_at_center() {
        for cfg in [spectral_cfg(64), image_cfg(64)] {
            for t in [0.01, 0.2] {
                let d = eval_dg_dy(t, 0.5, 0.5, &cfg).unwrap();
                assert!(d.abs() < 1e-12, "t = {t}: {d}");
            }
        }
    }

    #[test]
    fn derivatives_match_central_differences() {
        let cfg = KernelConfig::default();
        let (t, x, y, h) = (0.05, 0.3, 0.6, 1e-5);
        let fd_y = (eval_g(t, x, y + h, &cfg).unwrap() - eval_g(t, x, y - h, &cfg).unwrap())
            / (2.0 * h);
        let dy = eval_dg_dy(t, x, y, &cfg).unwrap();
        assert!((fd_y - dy).abs() < 1e-6 * (1.0 + dy.abs()), "{fd_y} vs {dy}");
        let fd_x = (eval_g(t, x + h, y, &cfg).unwrap() - eval_g(t, x - h, y, &cfg).unwrap())
            / (2.0 * h);
        let dx = eval_dg_dx(t, x, y, &cfg).unwrap();
        assert!((fd_x - dx).abs() < 1e-6 * (1.0 + dx.abs()), "{fd_x} vs {dx}");
    }

    #[test]
    fn methods_agree_on_derivative() {
        let (t, x, y) = (0.02, 0.25, 0.75);
        let a = eval_dg_dy(t, x, y, &spectral_cfg(64)).unwrap();
        let b = eval_dg_dy(t, x, y, &image_cfg(64)).unwrap();
        assert!((a - b).abs() < 1e-8, "{a} vs {b}");
    }

    #[test]
    fn methods_agree_on_a_lattice() {
        let s = spectral_cfg(100);
        let i = image_cfg(100);
        for a in 0..20 {
            let t = 1e-3 * 1000f64.powf(a as f64 / 19.0);
            for b in 0..20 {
                let x = b as f64 / 19.0;
                for c in 0..20 {
                    let y = c as f64 / 19.0;
                    let gs = eval_g(t, x, y, &s).unwrap();
                    let gi = eval_g(t, x, y, &i).unwrap();
                    let tol = 1e-8_f64.max(s.truncation_bound(t)).max(i.truncation_bound(t));
                    assert!((gs - gi).abs() <= tol, "t={t} x={x} y={y}: {gs} vs {gi}");
                }
            }
        }
    }

    #[test]
    fn positive_on_lattice() {
        let cfg = KernelConfig::default();
        for a in 0..12 {
            let t = 1e-4 * 10f64.powf(a as f64 / 3.0);
            for b in 0..=32 {
                for c in 0..=32 {
                    let v = eval_g(t, b as f64 / 32.0, c as f64 / 32.0, &cfg).unwrap();
                    assert!(v >= -1e-12, "t={t}: {v}");
                }
            }
        }
    }

    #[test]
    fn chapman_kolmogorov() {
        let cfg = KernelConfig::default();
        let (s, t) = (0.02, 0.03);
        let m = 4000;
        let h = 1.0 / m as f64;
        for &(x, y) in &[(0.3, 0.6), (0.5, 0.5), (0.1, 0.85)] {
            let conv: f64 = (1..m)
                .map(|j| {
                    let z = j as f64 * h;
                    cfg.eval(Part::Value, s, x, z) * cfg.eval(Part::Value, t, z, y)
                })
                .sum::<f64>()
                * h;
            let direct = eval_g(s + t, x, y, &cfg).unwrap();
            assert!((conv - direct).abs() < 1e-6, "{conv} vs {direct}");
        }
    }

    #[test]
    fn mass_tends_to_one_and_methods_agree() {
        let img = image_cfg(50);
        let m = mass(1e-4, 0.5, &img).unwrap();
        assert!((1.0 - 1e-6..=1.0 + 1e-12).contains(&m), "{m}");
        for &(t, y) in &[(0.06, 0.3), (0.3, 0.5), (1.0, 0.9)] {
            let a = mass(t, y, &spectral_cfg(64)).unwrap();
            let b = mass(t, y, &img).unwrap();
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
            assert!(a < 1.0);
        }
    }
}
