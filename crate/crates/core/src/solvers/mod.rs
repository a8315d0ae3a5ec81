//! Time steppers for the stochastic Burgers equation, its deterministic
//! limit, the controlled deviation process and the linear skeleton equation.
//!
//! Every stepper is semi-implicit: diffusion is implicit (one tridiagonal
//! solve per step), transport and forcing are explicit, and the flux uses the
//! conservative central difference `(F_{j+1} - F_{j-1}) / 2dx`.

mod evolution;
mod mild;
mod skeleton;
mod tridiag;

pub use evolution::{
    solve_controlled, solve_controlled_with, solve_deterministic, solve_spde, solve_spde_observed,
};
pub use mild::{
    solve_skeleton_fixed_point, solve_skeleton_fixed_point_windowed, transport_bound_check,
    FixedPoint, TransportBound,
};
pub use skeleton::{solve_skeleton, SkeletonContext, VERBATIM_TRANSPORT};

pub(crate) use evolution::{evolution_forcing, evolve_spde, Guard};
pub(crate) use tridiag::{add_central_difference, ImplicitHeat};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fields whose sup-norm exceeds this are treated as blown up.
pub const BLOWUP_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SigmaKind {
    Constant { value: f64 },
    /// `sigma(u) = amplitude * cos(u)`.
    Cosine { amplitude: f64 },
    /// Piecewise-linear through `(u, sigma)` knots, constant beyond the ends.
    Tabulated { points: Vec<[f64; 2]> },
}

/// Bounded, globally Lipschitz noise coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SigmaKind", into = "SigmaKind")]
pub struct SigmaSpec {
    kind: SigmaKind,
    bound: f64,
    lipschitz: f64,
}

impl TryFrom<SigmaKind> for SigmaSpec {
    type Error = Error;

    fn try_from(kind: SigmaKind) -> Result<Self> {
        SigmaSpec::new(kind)
    }
}

impl From<SigmaSpec> for SigmaKind {
    fn from(s: SigmaSpec) -> Self {
        s.kind
    }
}

impl SigmaSpec {
    pub fn new(kind: SigmaKind) -> Result<Self> {
        let (bound, lipschitz) = match &kind {
            SigmaKind::Constant { value } => {
                finite("sigma constant", *value)?;
                (value.abs(), 0.0)
            }
            SigmaKind::Cosine { amplitude } => {
                finite("sigma amplitude", *amplitude)?;
                (amplitude.abs(), amplitude.abs())
            }
            SigmaKind::Tabulated { points } => {
                if points.len() < 2 {
                    return Err(Error::InvalidConfig(
                        "tabulated sigma needs at least two points".into(),
                    ));
                }
                for p in points {
                    finite("tabulated sigma knot", p[0])?;
                    finite("tabulated sigma value", p[1])?;
                }
                if points.windows(2).any(|w| !(w[1][0] > w[0][0])) {
                    return Err(Error::InvalidConfig(
                        "tabulated sigma abscissae must be strictly increasing".into(),
                    ));
                }
                let bound = points.iter().map(|p| p[1].abs()).fold(0.0, f64::max);
                let lip = points
                    .windows(2)
                    .map(|w| ((w[1][1] - w[0][1]) / (w[1][0] - w[0][0])).abs())
                    .fold(0.0, f64::max);
                (bound, lip)
            }
        };
        Ok(SigmaSpec {
            kind,
            bound,
            lipschitz,
        })
    }

    pub fn constant(value: f64) -> Self {
        SigmaSpec::new(SigmaKind::Constant { value }).expect("finite constant")
    }

    pub fn cosine(amplitude: f64) -> Self {
        SigmaSpec::new(SigmaKind::Cosine { amplitude }).expect("finite amplitude")
    }

    pub fn tabulated(points: Vec<[f64; 2]>) -> Result<Self> {
        SigmaSpec::new(SigmaKind::Tabulated { points })
    }

    pub fn kind(&self) -> &SigmaKind {
        &self.kind
    }

    /// `sup |sigma|`.
    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// True when `sigma` vanishes identically.
    pub fn is_zero(&self) -> bool {
        self.bound == 0.0
    }

    pub fn eval(&self, u: f64) -> f64 {
        match &self.kind {
            SigmaKind::Constant { value } => *value,
            SigmaKind::Cosine { amplitude } => amplitude * u.cos(),
            SigmaKind::Tabulated { points } => {
                let first = points[0];
                let last = points[points.len() - 1];
                if !(u > first[0]) {
                    return first[1];
                }
                if u >= last[0] {
                    return last[1];
                }
                let i = points.partition_point(|p| p[0] <= u);
                let (a, b) = (points[i - 1], points[i]);
                a[1] + (b[1] - a[1]) * (u - a[0]) / (b[0] - a[0])
            }
        }
    }
}

fn finite(what: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("{what} must be finite, got {v}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    SemiImplicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FluxForm {
    #[default]
    ConservativeCentral,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SolverConfigSpec", into = "SolverConfigSpec")]
pub struct SolverConfig {
    scheme: Scheme,
    flux_form: FluxForm,
    fp_tol: f64,
    fp_max_iter: usize,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfigSpec {
    pub scheme: Scheme,
    pub flux_form: FluxForm,
    pub fp_tol: f64,
    pub fp_max_iter: usize,
}

impl Default for SolverConfigSpec {
    fn default() -> Self {
        SolverConfig::default().into()
    }
}

impl TryFrom<SolverConfigSpec> for SolverConfig {
    type Error = Error;

    fn try_from(s: SolverConfigSpec) -> Result<Self> {
        SolverConfig::new(s.fp_tol, s.fp_max_iter)
    }
}

impl From<SolverConfig> for SolverConfigSpec {
    fn from(c: SolverConfig) -> Self {
        SolverConfigSpec {
            scheme: c.scheme,
            flux_form: c.flux_form,
            fp_tol: c.fp_tol,
            fp_max_iter: c.fp_max_iter,
        }
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            scheme: Scheme::SemiImplicit,
            flux_form: FluxForm::ConservativeCentral,
            fp_tol: 1e-8,
            fp_max_iter: 100,
        }
    }
}

impl SolverConfig {
    pub fn new(fp_tol: f64, fp_max_iter: usize) -> Result<Self> {
        if !(fp_tol > 0.0 && fp_tol <= 1e-3) {
            return Err(Error::InvalidConfig(format!(
                "fp_tol must lie in (0, 1e-3], got {fp_tol}"
            )));
        }
        if fp_max_iter < 10 {
            return Err(Error::InvalidConfig(format!(
                "fp_max_iter must be at least 10, got {fp_max_iter}"
            )));
        }
        Ok(SolverConfig {
            fp_tol,
            fp_max_iter,
            ..SolverConfig::default()
        })
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn flux_form(&self) -> FluxForm {
        self.flux_form
    }

    pub fn fp_tol(&self) -> f64 {
        self.fp_tol
    }

    pub fn fp_max_iter(&self) -> usize {
        self.fp_max_iter
    }
}
