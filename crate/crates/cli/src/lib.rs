//! Command-line front end: every command is a pure function of the config
//! file, the environment overrides and the flags.

pub mod config;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use burgers_lab::deviations::{deviation_field, mc_run, unit_sine_control};
use burgers_lab::kernel::verify_kernel_estimates_with;
use burgers_lab::noise::{girsanov_log_density, girsanov_shift, sample_sheet, SeedSpec};
use burgers_lab::rate::rate_value;
use burgers_lab::solvers::{solve_controlled_with, solve_deterministic, solve_spde, SkeletonContext};
use burgers_lab::stats::mean_and_stderr;
use burgers_lab::{l2_norm, sup_t_l2, Control, Error, SpaceTimeField};
use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

pub use config::{Format, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_ACCEPTANCE: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "burgers-lab", version, about = "Stochastic Burgers deviation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration; defaults apply to missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding `mc.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to the available cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory, overriding `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Omit the wall-clock timestamp from `meta.json`.
    #[arg(long, global = true)]
    no_timestamp: bool,
    /// Print the effective configuration and exit.
    #[arg(long, global = true)]
    dump_config: bool,
    /// Also write the driving noise sheet (`simulate` only).
    #[arg(long, global = true)]
    dump_sheet: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Deterministic limit from the initial condition.
    Deterministic,
    /// One SPDE path and its deviation field.
    Simulate,
    /// Monte Carlo deviation statistics over `mc.eps_grid`.
    Mc,
    /// Green kernel estimate checks.
    KernelCheck,
    /// Rate function of a target deviation profile.
    Rate {
        /// Target field CSV in the layout written by the other commands.
        #[arg(long)]
        target: PathBuf,
    },
    /// Mean-one check of the change-of-measure density and controlled-path route agreement.
    GirsanovCheck,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Deterministic => "deterministic",
            Command::Simulate => "simulate",
            Command::Mc => "mc",
            Command::KernelCheck => "kernel-check",
            Command::Rate { .. } => "rate",
            Command::GirsanovCheck => "girsanov-check",
        }
    }
}

enum Failure {
    Lab(Error),
    Acceptance(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lab(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Lab(Error::Io(e))
    }
}

type Outcome = std::result::Result<(), Failure>;

/// Runs the CLI on `args` (including the program name) with the given
/// environment and returns the process exit code.
pub fn run<I, T>(args: I, env: &BTreeMap<String, String>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let cfg = match effective_config(&cli, env) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    if cli.dump_config {
        print!("{}", cfg.to_toml_string());
        return EXIT_OK;
    }
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
    {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    match pool.install(|| execute(&cli, &cfg)) {
        Ok(()) => EXIT_OK,
        Err(Failure::Acceptance(msg)) => {
            eprintln!("check failed: {msg}");
            EXIT_ACCEPTANCE
        }
        Err(Failure::Lab(e)) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                EXIT_NUMERICAL
            } else {
                EXIT_CONFIG
            }
        }
    }
}

fn effective_config(cli: &Cli, env: &BTreeMap<String, String>) -> burgers_lab::Result<RunConfig> {
    let text = match &cli.config {
        Some(path) => fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?,
        None => String::new(),
    };
    let mut cfg = RunConfig::load(&text, env).map_err(|e| match &cli.config {
        Some(path) => match e {
            Error::InvalidConfig(m) => Error::InvalidConfig(format!("{}: {m}", path.display())),
            other => other,
        },
        None => e,
    })?;
    if let Some(seed) = cli.seed {
        cfg.mc.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    if let Some(format) = cli.format {
        cfg.output.format = format;
    }
    if cli.threads == Some(0) {
        return Err(Error::InvalidConfig("--threads must be at least 1".into()));
    }
    Ok(cfg)
}

struct Writer<'a> {
    dir: &'a Path,
    format: Format,
}

impl Writer<'_> {
    fn text(&self, name: &str, contents: &str) -> std::io::Result<()> {
        fs::write(self.dir.join(name), contents)
    }

    fn json<S: Serialize>(&self, name: &str, value: &S) -> std::io::Result<()> {
        let mut s = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
        s.push('\n');
        self.text(name, &s)
    }

    fn field(&self, stem: &str, u: &SpaceTimeField) -> std::io::Result<()> {
        if self.format.csv() {
            self.text(&format!("{stem}.csv"), &u.to_csv_string())?;
        }
        if self.format.json() {
            self.text(&format!("{stem}.json"), &u.to_json_string())?;
        }
        Ok(())
    }
}

fn execute(cli: &Cli, cfg: &RunConfig) -> Outcome {
    let dir = cfg.output.dir.as_path();
    fs::create_dir_all(dir)?;
    let out = Writer {
        dir,
        format: cfg.output.format,
    };
    out.text("config.toml", &cfg.to_toml_string())?;
    let mut meta = json!({
        "command": cli.command.name(),
        "version": env!("CARGO_PKG_VERSION"),
        "seed": cfg.mc.seed,
    });
    if !cli.no_timestamp {
        let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        meta["timestamp"] = json!(secs);
    }
    out.json("meta.json", &meta)?;
    match &cli.command {
        Command::Deterministic => cmd_deterministic(cfg, &out),
        Command::Simulate => cmd_simulate(cfg, &out, cli.dump_sheet),
        Command::Mc => cmd_mc(cfg, &out),
        Command::KernelCheck => cmd_kernel_check(cfg, &out),
        Command::Rate { target } => cmd_rate(cfg, &out, target),
        Command::GirsanovCheck => cmd_girsanov_check(cfg, &out),
    }
}

/// `t,l2_norm` rows, one per frame.
fn norm_table(fields: &[(&str, &SpaceTimeField)]) -> burgers_lab::Result<String> {
    let g = *fields[0].1.grid();
    let mut s = String::from("t");
    for (name, _) in fields {
        s.push_str(&format!(",{name}_l2"));
    }
    s.push('\n');
    for k in 0..=g.nt() {
        s.push_str(&g.t(k).to_string());
        for (_, u) in fields {
            s.push_str(&format!(",{}", l2_norm(&u.frame_field(k), &g)?));
        }
        s.push('\n');
    }
    Ok(s)
}

fn cmd_deterministic(cfg: &RunConfig, out: &Writer) -> Outcome {
    let g = cfg.grid;
    let u = solve_deterministic(&cfg.initial.sample(&g)?, &g, &cfg.solver)?;
    out.field("u_det", &u)?;
    out.text("summary.csv", &norm_table(&[("u", &u)])?)?;
    Ok(())
}

fn cmd_simulate(cfg: &RunConfig, out: &Writer, dump_sheet: bool) -> Outcome {
    let g = cfg.grid;
    let u0 = cfg.initial.sample(&g)?;
    let eps = cfg.simulate.eps;
    let sheet = sample_sheet(&g, SeedSpec::new(cfg.mc.seed, cfg.simulate.path));
    let u_det = solve_deterministic(&u0, &g, &cfg.solver)?;
    let u = solve_spde(&u0, &g, eps, &cfg.sigma, &sheet, &cfg.solver)?;
    let dev = deviation_field(&u, &u_det, &cfg.schedule, eps)?;
    out.field("u_eps", &u)?;
    out.field("deviation", &dev)?;
    out.text("summary.csv", &norm_table(&[("u", &u), ("deviation", &dev)])?)?;
    if dump_sheet {
        let mut buf = Vec::new();
        sheet.write_csv(&mut buf)?;
        fs::write(out.dir.join("sheet.csv"), buf)?;
    }
    Ok(())
}

fn cmd_mc(cfg: &RunConfig, out: &Writer) -> Outcome {
    let g = cfg.grid;
    let stats = mc_run(
        &cfg.initial.sample(&g)?,
        &g,
        &cfg.sigma,
        &cfg.schedule,
        &cfg.mc.to_mc_config(),
        &cfg.solver,
    )?;
    if out.format.csv() {
        out.text("stats.csv", &stats.to_csv_string())?;
    }
    if out.format.json() {
        out.json("stats.json", &stats)?;
    }
    Ok(())
}

fn cmd_kernel_check(cfg: &RunConfig, out: &Writer) -> Outcome {
    let g = cfg.grid;
    let report = verify_kernel_estimates_with(
        &g,
        &cfg.kernel.kernel_config()?,
        &cfg.kernel.estimate_options(&g),
    )?;
    if out.format.csv() {
        let mut s = String::from("item,quantity,measured,expected,pass,advisory\n");
        for r in &report.records {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.item, r.quantity, r.measured, r.expected, r.pass, r.advisory
            ));
        }
        out.text("kernel_report.csv", &s)?;
    }
    if out.format.json() {
        out.json("kernel_report.json", &report)?;
    }
    let failed: Vec<String> = report
        .records
        .iter()
        .filter(|r| !r.pass && !r.advisory)
        .map(|r| format!("{}:{}", r.item, r.quantity))
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Acceptance(format!("kernel estimates out of band: {}", failed.join(", "))))
    }
}

fn cmd_rate(cfg: &RunConfig, out: &Writer, target: &Path) -> Outcome {
    let text = fs::read(target)
        .map_err(|e| Error::InvalidConfig(format!("{}: {e}", target.display())))?;
    let f = SpaceTimeField::read_csv(text.as_slice())?;
    let g = *f.grid();
    let ctx = SkeletonContext::from_initial(&cfg.initial.sample(&g)?, &g, &cfg.sigma, &cfg.solver)?
        .with_transport(cfg.rate.transport);
    let r = rate_value(&f, &ctx, &cfg.rate.options())?;
    let v_star_path = "v_star.csv";
    out.text(v_star_path, &r.v_star.to_csv_string())?;
    out.json(
        "rate.json",
        &json!({
            "value": r.value,
            "residual": r.residual,
            "iterations": r.iterations,
            "attainable": r.attainable,
            "v_star_csv_path": v_star_path,
            "regularization": r.regularization,
        }),
    )?;
    Ok(())
}

fn cmd_girsanov_check(cfg: &RunConfig, out: &Writer) -> Outcome {
    let gs = &cfg.girsanov;
    let control = |g: &burgers_lab::Grid| match gs.control {
        config::GirsanovControl::Zero => Control::zeros(g),
        config::GirsanovControl::UnitSine => unit_sine_control(g),
    };
    let sg = gs.sheet_grid;
    let v = control(&sg);
    let densities = (0..gs.n_sheets as u64)
        .map(|i| girsanov_log_density(&sample_sheet(&sg, SeedSpec::new(cfg.mc.seed, i)), &v, gs.h).map(f64::exp))
        .collect::<burgers_lab::Result<Vec<f64>>>()?;
    let (mean, stderr) = mean_and_stderr(&densities);
    let mean_pass = (mean - 1.0).abs() <= 3.0 * stderr || mean == 1.0;

    let g = cfg.grid;
    let u0 = cfg.initial.sample(&g)?;
    let u_det = solve_deterministic(&u0, &g, &cfg.solver)?;
    let v = control(&g);
    let eps = gs.eps;
    let sheet = sample_sheet(&g, SeedSpec::new(cfg.mc.seed, 0));
    let controlled = solve_controlled_with(&u_det, eps, &cfg.schedule, &cfg.sigma, &v, &sheet, &cfg.solver)?;
    let shifted = girsanov_shift(&sheet, &v, cfg.schedule.h(eps))?;
    let route = deviation_field(
        &solve_spde(&u0, &g, eps, &cfg.sigma, &shifted, &cfg.solver)?,
        &u_det,
        &cfg.schedule,
        eps,
    )?;
    let gap = sup_t_l2(&controlled.axpy(-1.0, &route)?, &g)?;
    let route_pass = gap <= gs.route_tol;

    out.json(
        "girsanov.json",
        &json!({
            "mean_one": {"n_sheets": gs.n_sheets, "h": gs.h, "mean": mean, "stderr": stderr, "pass": mean_pass},
            "route": {"eps": eps, "sup_t_l2_gap": gap, "tolerance": gs.route_tol, "pass": route_pass},
        }),
    )?;
    match (mean_pass, route_pass) {
        (true, true) => Ok(()),
        (false, _) => Err(Failure::Acceptance(format!(
            "density mean {mean} is more than 3 standard errors ({stderr}) from 1"
        ))),
        (_, false) => Err(Failure::Acceptance(format!(
            "controlled-path routes differ by {gap} > {}",
            gs.route_tol
        ))),
    }
}
