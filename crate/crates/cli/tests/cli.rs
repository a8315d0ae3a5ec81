use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use burgers_lab::deviations::unit_sine_control;
use burgers_lab::solvers::{SigmaSpec, SkeletonContext, SolverConfig};
use burgers_lab::{ht_norm, Grid, SpaceField, SpaceTimeField};
use burgers_lab_cli::RunConfig;
use serde_json::Value;

const SMALL: &str = "[grid]\nnx = 16\nnt = 128\nT = 0.5\n\n[mc]\nn_paths = 40\neps_grid = [0.02, 0.01, 0.005]\n";

struct Lab {
    dir: tempfile::TempDir,
}

impl Lab {
    fn new() -> Self {
        Lab {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn config(&self, name: &str, extra: &str) -> PathBuf {
        let p = self.path(name);
        fs::write(&p, format!("{SMALL}{extra}")).unwrap();
        p
    }

    fn run(&self, args: &[&str], config: &Path, out: &str) -> Output {
        Command::new(env!("CARGO_BIN_EXE_burgers-lab"))
            .args(args)
            .arg("--config")
            .arg(config)
            .arg("--out")
            .arg(self.path(out))
            .arg("--no-timestamp")
            .output()
            .unwrap()
    }

    fn read(&self, out: &str, file: &str) -> String {
        fs::read_to_string(self.path(out).join(file)).unwrap()
    }

    fn json(&self, out: &str, file: &str) -> Value {
        serde_json::from_str(&self.read(out, file)).unwrap()
    }
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn zero_initial_data_gives_zero_field() {
    let lab = Lab::new();
    let cfg = lab.config("c.toml", "\n[initial]\nkind = \"zero\"\n");
    assert_eq!(code(&lab.run(&["deterministic"], &cfg, "o")), 0);
    let u = SpaceTimeField::read_csv(lab.read("o", "u_det.csv").as_bytes()).unwrap();
    assert!(u.data().iter().all(|v| *v == 0.0));
    let json = SpaceTimeField::from_json_str(&lab.read("o", "u_det.json")).unwrap();
    assert_eq!(json, u);
}

#[test]
fn deterministic_summary_energy_is_monotone() {
    let lab = Lab::new();
    let cfg = lab.config("c.toml", "");
    assert_eq!(code(&lab.run(&["deterministic"], &cfg, "o")), 0);
    let summary = lab.read("o", "summary.csv");
    let norms: Vec<f64> = summary
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(norms.len(), 129);
    assert!(norms.windows(2).all(|w| w[1] <= w[0] + 1e-12));
}

#[test]
fn malformed_config_exits_2_with_line_number() {
    let lab = Lab::new();
    let cfg = lab.path("bad.toml");
    fs::write(&cfg, "[grid]\nnx = 16\nnt = 128\nT = 0.5\n[mc]\nn_paths = \"many\"\n").unwrap();
    let out = lab.run(&["deterministic"], &cfg, "o");
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 6"), "{:?}", out);
}

#[test]
fn zero_sigma_simulation_reproduces_deterministic_output() {
    let lab = Lab::new();
    let cfg = lab.config("c.toml", "\n[sigma]\nkind = \"constant\"\nvalue = 0.0\n");
    assert_eq!(code(&lab.run(&["deterministic"], &cfg, "d")), 0);
    assert_eq!(code(&lab.run(&["simulate"], &cfg, "s")), 0);
    assert_eq!(lab.read("d", "u_det.csv"), lab.read("s", "u_eps.csv"));
}

#[test]
fn simulation_with_same_seed_is_identical() {
    let lab = Lab::new();
    let cfg = lab.config("c.toml", "");
    assert_eq!(code(&lab.run(&["simulate", "--dump-sheet"], &cfg, "a")), 0);
    assert_eq!(code(&lab.run(&["simulate", "--dump-sheet"], &cfg, "b")), 0);
    for f in ["u_eps.csv", "u_eps.json", "deviation.csv", "sheet.csv", "summary.csv", "meta.json"] {
        assert_eq!(lab.read("a", f), lab.read("b", f), "{f}");
    }
    assert_eq!(lab.read("a", "sheet.csv").lines().count(), 129);
}

#[test]
fn zero_noise_level_under_ldp_gives_zero_deviation() {
    let lab = Lab::new();
    let cfg = lab.config("c.toml", "\n[schedule]\nkind = \"ldp\"\n\n[simulate]\neps = 0.0\n");
    assert_eq!(code(&lab.run(&["simulate"], &cfg, "o")), 0);
    let dev = SpaceTimeField::read_csv(lab.read("o", "deviation.csv").as_bytes()).unwrap();
    assert!(dev.data().iter().all(|v| *v == 0.0));
}

#[test]
fn mc_summary_has_one_row_per_eps() {
    let lab = Lab::new();
    let cfg = lab.config("c.toml", "");
    assert_eq!(code(&lab.run(&["mc"], &cfg, "o")), 0);
    assert_eq!(lab.read("o", "stats.csv").lines().count(), 1 + 3);
    assert_eq!(lab.json("o", "stats.json")["records"].as_array().unwrap().len(), 3);
}

#[test]
fn mc_without_paths_is_a_config_error() {
    let lab = Lab::new();
    let cfg = lab.path("c.toml");
    fs::write(&cfg, "[mc]\nn_paths = 0\n").unwrap();
    assert_eq!(code(&lab.run(&["mc"], &cfg, "o")), 2);
}

#[test]
fn kernel_check_default_passes_and_truncations_agree() {
    let lab = Lab::new();
    let c64 = lab.config("a.toml", "");
    let c16 = lab.config("b.toml", "\n[kernel]\ntruncation = 16\n");
    assert_eq!(code(&lab.run(&["kernel-check"], &c64, "a")), 0);
    assert_eq!(code(&lab.run(&["kernel-check"], &c16, "b")), 0);
    let records = |out| lab.json(out, "kernel_report.json").as_array().unwrap().clone();
    let (a, b) = (records("a"), records("b"));
    for (ra, rb) in a.iter().zip(&b) {
        if ["iii", "iv", "v"].contains(&ra["item"].as_str().unwrap()) {
            let (x, y) = (ra["measured"].as_f64().unwrap(), rb["measured"].as_f64().unwrap());
            assert!((x - y).abs() <= 1e-6 * x.abs().max(1.0), "{ra} vs {rb}");
        }
    }
}

#[test]
fn kernel_check_degenerate_time_range_exits_2() {
    let lab = Lab::new();
    let cfg = lab.config("c.toml", "\n[kernel]\nt_min = 0.3\nt_max = 0.3\n");
    assert_eq!(code(&lab.run(&["kernel-check"], &cfg, "o")), 2);
}

fn write_target(lab: &Lab, f: &SpaceTimeField) -> PathBuf {
    let p = lab.path("target.csv");
    fs::write(&p, f.to_csv_string()).unwrap();
    p
}

#[test]
fn rate_of_zero_target_is_zero() {
    let lab = Lab::new();
    let cfg = lab.config("c.toml", "");
    let g = Grid::new(16, 128, 0.5).unwrap();
    let target = write_target(&lab, &SpaceTimeField::zeros(&g));
    assert_eq!(code(&lab.run(&["rate", "--target", target.to_str().unwrap()], &cfg, "o")), 0);
    let r = lab.json("o", "rate.json");
    assert_eq!(r["value"].as_f64(), Some(0.0));
    assert_eq!(r["attainable"].as_bool(), Some(true));
    assert_eq!(r["v_star_csv_path"].as_str(), Some("v_star.csv"));
}

#[test]
fn rate_round_trip_is_bounded_by_control_energy() {
    let lab = Lab::new();
    let cfg = lab.config("c.toml", "");
    let g = Grid::new(16, 128, 0.5).unwrap();
    let u0 = SpaceField::sample(&g, |x| (std::f64::consts::PI * x).sin()).unwrap();
    let ctx = SkeletonContext::from_initial(&u0, &g, &SigmaSpec::cosine(1.0), &SolverConfig::default()).unwrap();
    let v0 = unit_sine_control(&g).scaled(0.7);
    let target = write_target(&lab, &ctx.forward(&v0).unwrap());
    assert_eq!(code(&lab.run(&["rate", "--target", target.to_str().unwrap()], &cfg, "o")), 0);
    let r = lab.json("o", "rate.json");
    let bound = 0.5 * ht_norm(&v0, &g).unwrap().powi(2);
    assert!(r["value"].as_f64().unwrap() <= bound + 1e-6, "{r}");
    assert!(r["residual"].as_f64().unwrap() <= 1e-6, "{r}");
    assert!(lab.path("o").join("v_star.csv").exists());
}

#[test]
fn rough_rate_target_is_flagged_not_fatal() {
    let lab = Lab::new();
    let cfg = lab.config("c.toml", "\n[rate]\nmax_iter = 40\n");
    let g = Grid::new(16, 128, 0.5).unwrap();
    let rough = SpaceTimeField::from_fn(&g, |t, x| {
        if t == 0.0 {
            0.0
        } else {
            ((t * 977.0 + x * 313.0).sin() * 1e4).fract() * x * (1.0 - x)
        }
    })
    .unwrap();
    let target = write_target(&lab, &rough);
    assert_eq!(code(&lab.run(&["rate", "--target", target.to_str().unwrap()], &cfg, "o")), 0);
    let r = lab.json("o", "rate.json");
    assert_eq!(r["attainable"].as_bool(), Some(false));
    assert_eq!(r["regularization"]["curve"].as_array().unwrap().len(), 3);
}

#[test]
fn girsanov_zero_control_has_mean_exactly_one() {
    let lab = Lab::new();
    let cfg = lab.config("c.toml", "\n[girsanov]\nn_sheets = 500\ncontrol = \"zero\"\n");
    assert_eq!(code(&lab.run(&["girsanov-check"], &cfg, "o")), 0);
    let r = lab.json("o", "girsanov.json");
    assert_eq!(r["mean_one"]["mean"].as_f64(), Some(1.0));
    assert_eq!(r["route"]["pass"].as_bool(), Some(true));
}

#[test]
fn girsanov_unit_control_passes() {
    let lab = Lab::new();
    let cfg = lab.config("c.toml", "\n[girsanov]\nn_sheets = 4000\n");
    assert_eq!(code(&lab.run(&["girsanov-check"], &cfg, "o")), 0);
    let r = lab.json("o", "girsanov.json");
    assert_eq!(r["mean_one"]["pass"].as_bool(), Some(true));
}

#[test]
fn flags_beat_environment_which_beats_file() {
    let lab = Lab::new();
    let cfg = lab.config("c.toml", "");
    let dump = |env: &[(&str, &str)], flags: &[&str]| {
        let out = Command::new(env!("CARGO_BIN_EXE_burgers-lab"))
            .args(["mc", "--dump-config", "--config"])
            .arg(&cfg)
            .args(flags)
            .envs(env.iter().cloned())
            .output()
            .unwrap();
        assert_eq!(code(&out), 0);
        RunConfig::from_toml_str(&String::from_utf8(out.stdout).unwrap()).unwrap()
    };
    assert_eq!(dump(&[], &[]).mc.seed, 2024);
    assert_eq!(dump(&[("BURGERS_MC__SEED", "5")], &[]).mc.seed, 5);
    assert_eq!(dump(&[("BURGERS_MC__SEED", "5")], &["--seed", "9"]).mc.seed, 9);
    let c = dump(&[("BURGERS_GRID__NT", "256")], &["--format", "csv"]);
    assert_eq!((c.grid.nx(), c.grid.nt()), (16, 256));
    assert_eq!(c.output.format, burgers_lab_cli::Format::Csv);
}

#[test]
fn format_flag_selects_outputs() {
    let lab = Lab::new();
    let cfg = lab.config("c.toml", "");
    let out = Command::new(env!("CARGO_BIN_EXE_burgers-lab"))
        .args(["deterministic", "--format", "json", "--no-timestamp", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(lab.path("o"))
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert!(lab.path("o").join("u_det.json").exists());
    assert!(!lab.path("o").join("u_det.csv").exists());
}

#[test]
fn timestamp_only_when_requested() {
    let lab = Lab::new();
    let cfg = lab.config("c.toml", "");
    assert_eq!(code(&lab.run(&["deterministic"], &cfg, "o")), 0);
    assert!(lab.json("o", "meta.json").get("timestamp").is_none());
    let out = Command::new(env!("CARGO_BIN_EXE_burgers-lab"))
        .args(["deterministic", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(lab.path("t"))
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert!(lab.json("t", "meta.json")["timestamp"].as_u64().is_some());
}

#[test]
fn usage_errors_exit_2() {
    let lab = Lab::new();
    let cfg = lab.config("c.toml", "");
    assert_eq!(code(&lab.run(&["nonsense"], &cfg, "o")), 2);
    assert_eq!(code(&lab.run(&["mc", "--threads", "0"], &cfg, "o")), 2);
    assert_eq!(code(&lab.run(&["rate"], &cfg, "o")), 2);
    let missing = lab.path("missing.toml");
    assert_eq!(code(&lab.run(&["mc"], &missing, "o")), 2);
}

#[test]
fn instability_exits_3() {
    let lab = Lab::new();
    let cfg = lab.config("c.toml", "\n[initial]\nkind = \"sine\"\nmode = 1\namplitude = 1e4\n");
    assert_eq!(code(&lab.run(&["deterministic"], &cfg, "o")), 3);
}
