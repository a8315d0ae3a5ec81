//! Run configuration: a TOML file, then `BURGERS_SECTION__KEY` environment
//! overrides, then command-line flags.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::PathBuf;

use burgers_lab::deviations::{McConfig, ScalingSchedule};
use burgers_lab::kernel::{EstimateOptions, KernelConfig, KernelMethod};
use burgers_lab::rate::RateOptions;
use burgers_lab::solvers::{SigmaSpec, SolverConfig, VERBATIM_TRANSPORT};
use burgers_lab::{Error, Grid, Result, SpaceField};
use serde::{Deserialize, Serialize};

/// Prefix of environment overrides; `BURGERS_GRID__NX=128` sets `grid.nx`.
pub const ENV_PREFIX: &str = "BURGERS_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub grid: Grid,
    pub initial: InitialCondition,
    pub sigma: SigmaSpec,
    pub schedule: ScalingSchedule,
    pub mc: McSection,
    pub simulate: SimulateSection,
    pub solver: SolverConfig,
    pub kernel: KernelSection,
    pub rate: RateSection,
    pub girsanov: GirsanovSection,
    pub output: OutputSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            grid: Grid::new(64, 1024, 1.0).expect("default grid is valid"),
            initial: InitialCondition::Sine {
                mode: 1,
                amplitude: 1.0,
            },
            sigma: SigmaSpec::cosine(1.0),
            schedule: ScalingSchedule::Clt,
            mc: McSection::default(),
            simulate: SimulateSection::default(),
            solver: SolverConfig::default(),
            kernel: KernelSection::default(),
            rate: RateSection::default(),
            girsanov: GirsanovSection::default(),
            output: OutputSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum InitialCondition {
    Zero,
    /// `amplitude * sin(mode pi x)`.
    Sine { mode: u32, amplitude: f64 },
    /// `amplitude * 4 x (1 - x)`.
    Parabola { amplitude: f64 },
}

impl InitialCondition {
    pub fn sample(&self, g: &Grid) -> Result<SpaceField> {
        match *self {
            InitialCondition::Zero => Ok(SpaceField::zeros(g)),
            InitialCondition::Sine { mode, amplitude } => {
                SpaceField::sample(g, |x| amplitude * (mode as f64 * PI * x).sin())
            }
            InitialCondition::Parabola { amplitude } => {
                SpaceField::sample(g, |x| amplitude * 4.0 * x * (1.0 - x))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McSection {
    pub eps_grid: Vec<f64>,
    pub n_paths: usize,
    /// Deviation threshold.
    pub r: f64,
    pub q_list: Vec<u32>,
    /// Master seed shared by every stochastic command.
    pub seed: u64,
    pub importance: bool,
}

impl Default for McSection {
    fn default() -> Self {
        McSection {
            eps_grid: vec![1e-2, 5e-3, 2.5e-3, 1.25e-3],
            n_paths: 200,
            r: 0.1,
            q_list: vec![2],
            seed: 2024,
            importance: false,
        }
    }
}

impl McSection {
    pub fn to_mc_config(&self) -> McConfig {
        McConfig {
            eps_grid: self.eps_grid.clone(),
            n_paths: self.n_paths,
            threshold: self.r,
            moment_orders: self.q_list.clone(),
            seed: self.seed,
            path_base: 0,
            importance: self.importance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub eps: f64,
    /// Stream index of the simulated path.
    pub path: u64,
}

impl Default for SimulateSection {
    fn default() -> Self {
        SimulateSection { eps: 1e-2, path: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelSection {
    pub truncation: usize,
    pub method: KernelMethod,
    pub t_min: f64,
    pub t_max: f64,
    pub n_t: usize,
}

impl Default for KernelSection {
    fn default() -> Self {
        let defaults = KernelConfig::default();
        KernelSection {
            truncation: defaults.truncation(),
            method: defaults.method(),
            t_min: 0.1,
            t_max: 1.0,
            n_t: 10,
        }
    }
}

impl KernelSection {
    pub fn kernel_config(&self) -> Result<KernelConfig> {
        KernelConfig::new(self.truncation, self.method)
    }

    pub fn estimate_options(&self, g: &Grid) -> EstimateOptions {
        EstimateOptions {
            t_min: self.t_min,
            t_max: self.t_max,
            n_t: self.n_t,
            ..EstimateOptions::for_grid(g)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RateSection {
    pub tol: f64,
    pub max_iter: usize,
    pub lambdas: Vec<f64>,
    /// Transport coefficient of the skeleton equation.
    pub transport: f64,
}

impl Default for RateSection {
    fn default() -> Self {
        let o = RateOptions::default();
        RateSection {
            tol: o.tol,
            max_iter: o.max_iter,
            lambdas: o.lambdas,
            transport: VERBATIM_TRANSPORT,
        }
    }
}

impl RateSection {
    pub fn options(&self) -> RateOptions {
        RateOptions {
            tol: self.tol,
            max_iter: self.max_iter,
            lambdas: self.lambdas.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GirsanovSection {
    /// Sheets in the mean-one check.
    pub n_sheets: usize,
    pub h: f64,
    /// Grid of the mean-one check; the route comparison uses `grid`.
    pub sheet_grid: Grid,
    /// Noise level of the route comparison.
    pub eps: f64,
    pub route_tol: f64,
    pub control: GirsanovControl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GirsanovControl {
    Zero,
    /// `sin(pi x)` scaled to unit `ht_norm`.
    UnitSine,
}

impl Default for GirsanovSection {
    fn default() -> Self {
        GirsanovSection {
            n_sheets: 10_000,
            h: 1.0,
            sheet_grid: Grid::new(8, 8, 1.0).expect("default grid is valid"),
            eps: 1e-3,
            route_tol: 5e-2,
            control: GirsanovControl::UnitSine,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    #[default]
    Both,
}

impl Format {
    pub fn csv(self) -> bool {
        matches!(self, Format::Csv | Format::Both)
    }

    pub fn json(self) -> bool {
        matches!(self, Format::Json | Format::Both)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub format: Format,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: PathBuf::from("out"),
            format: Format::Both,
        }
    }
}

impl RunConfig {
    /// Parses a config file; errors carry the TOML line and column.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// File contents (possibly empty) with environment overrides applied.
    pub fn load(text: &str, env: &BTreeMap<String, String>) -> Result<Self> {
        let base = RunConfig::from_toml_str(text)?;
        let overrides: Vec<(&String, &String)> =
            env.iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
        if overrides.is_empty() {
            return Ok(base);
        }
        let mut table = toml::Table::try_from(&base).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        for (name, raw) in overrides {
            apply_override(&mut table, &name[ENV_PREFIX.len()..], raw)
                .map_err(|m| Error::InvalidConfig(format!("{name}: {m}")))?;
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::InvalidConfig(format!("environment override: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.initial.sample(&self.grid)?;
        self.schedule.validate()?;
        self.mc.to_mc_config().validate()?;
        if !(self.simulate.eps >= 0.0 && self.simulate.eps.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "simulate.eps must be finite and >= 0, got {}",
                self.simulate.eps
            )));
        }
        self.kernel.kernel_config()?;
        self.kernel.estimate_options(&self.grid).validate()?;
        self.rate.options().validate()?;
        if !self.rate.transport.is_finite() {
            return Err(Error::InvalidConfig("rate.transport must be finite".into()));
        }
        let gs = &self.girsanov;
        if gs.n_sheets == 0 || !(gs.h.is_finite() && gs.eps > 0.0 && gs.route_tol > 0.0) {
            return Err(Error::InvalidConfig(
                "girsanov needs n_sheets >= 1, finite h, eps > 0 and route_tol > 0".into(),
            ));
        }
        Ok(())
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("run config serializes to TOML")
    }
}

/// Sets `section.key` from `SECTION__KEY`, matching names case-insensitively.
/// Values parse as TOML, falling back to strings.
fn apply_override(table: &mut toml::Table, path: &str, raw: &str) -> std::result::Result<(), String> {
    let (section, key) = path
        .split_once("__")
        .ok_or_else(|| "expected BURGERS_SECTION__KEY".to_string())?;
    let canonical = |t: &toml::Table, name: &str| t.keys().find(|k| k.eq_ignore_ascii_case(name)).cloned();
    let section = canonical(table, section).ok_or_else(|| format!("unknown section `{section}`"))?;
    let target = table
        .get_mut(&section)
        .and_then(|v| v.as_table_mut())
        .ok_or_else(|| format!("`{section}` is not a table"))?;
    let key = canonical(target, key).unwrap_or_else(|| key.to_ascii_lowercase());
    target.insert(key, parse_value(raw));
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(RunConfig::from_toml_str("").unwrap(), RunConfig::default());
    }

    #[test]
    fn dumped_config_parses_back() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::from_toml_str(&cfg.to_toml_string()).unwrap(), cfg);
    }

    #[test]
    fn unknown_key_names_its_line() {
        let err = RunConfig::from_toml_str("[grid]\nnx = 32\nnt = 64\nT = 1.0\nbogus = 1\n").unwrap_err();
        assert!(err.to_string().contains("line 5"), "{err}");
    }

    #[test]
    fn module_invariants_checked_at_parse_time() {
        let err = RunConfig::from_toml_str("[grid]\nnx = 2\nnt = 64\nT = 1.0\n").unwrap_err();
        assert!(err.to_string().contains("line"), "{err}");
        assert!(RunConfig::from_toml_str("[mc]\nn_paths = 0\n").is_err());
        assert!(RunConfig::from_toml_str("[schedule]\nkind = \"moderate\"\ntheta = 0.7\n").is_err());
        assert!(RunConfig::from_toml_str("[kernel]\nt_min = 0.5\nt_max = 0.5\n").is_err());
    }

    #[test]
    fn environment_overrides_file() {
        let text = "[grid]\nnx = 32\nnt = 64\nT = 1.0\n[mc]\nseed = 5\n";
        let cfg = RunConfig::load(
            text,
            &env(&[("BURGERS_GRID__NX", "16"), ("BURGERS_GRID__T", "0.5"), ("BURGERS_MC__SEED", "9"), ("PATH", "x")]),
        )
        .unwrap();
        assert_eq!((cfg.grid.nx(), cfg.grid.nt(), cfg.grid.horizon()), (16, 64, 0.5));
        assert_eq!(cfg.mc.seed, 9);
        let cfg = RunConfig::load(
            "",
            &env(&[("BURGERS_OUTPUT__FORMAT", "csv"), ("BURGERS_SIMULATE__EPS", "0.5"), ("BURGERS_GRID__NX", "16")]),
        )
        .unwrap();
        assert_eq!(cfg.grid.nx(), 16);
        assert_eq!(cfg.output.format, Format::Csv);
        assert_eq!(cfg.simulate.eps, 0.5);
    }

    #[test]
    fn bad_environment_override_is_a_config_error() {
        assert!(RunConfig::load("", &env(&[("BURGERS_NOPE__X", "1")])).is_err());
        assert!(RunConfig::load("", &env(&[("BURGERS_GRID__NX", "1")])).is_err());
        assert!(RunConfig::load("", &env(&[("BURGERS_MC", "1")])).is_err());
    }
}
