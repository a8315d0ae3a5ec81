use std::f64::consts::PI;

use burgers_lab::deviations::{
    deviation_field, mc_run, mc_samples, unit_sine_control, McConfig, ScalingSchedule,
};
use burgers_lab::noise::{sample_sheet, SeedSpec};
use burgers_lab::rate::{rate_value, RateOptions};
use burgers_lab::solvers::{solve_deterministic, solve_spde, SigmaSpec, SkeletonContext, SolverConfig};
use burgers_lab::{ht_norm, sup_t_l2, Grid, SpaceField, SpaceTimeField};
use proptest::prelude::*;

fn sine(g: &Grid) -> SpaceField {
    SpaceField::sample(g, |x| (PI * x).sin()).unwrap()
}

#[test]
fn simulated_deviation_survives_csv_and_json() {
    let g = Grid::new(24, 200, 0.6).unwrap();
    let cfg = SolverConfig::default();
    let u0 = sine(&g);
    let det = solve_deterministic(&u0, &g, &cfg).unwrap();
    let w = sample_sheet(&g, SeedSpec::new(3, 1));
    let u = solve_spde(&u0, &g, 1e-2, &SigmaSpec::cosine(1.0), &w, &cfg).unwrap();
    let dev = deviation_field(&u, &det, &ScalingSchedule::Moderate { theta: 0.25 }, 1e-2).unwrap();
    assert_eq!(SpaceTimeField::read_csv(dev.to_csv_string().as_bytes()).unwrap(), dev);
    assert_eq!(SpaceTimeField::from_json_str(&dev.to_json_string()).unwrap(), dev);
    assert!(dev.frame(0).iter().all(|v| *v == 0.0));
}

#[test]
fn optimal_control_reproduces_its_target() {
    let g = Grid::new(24, 192, 0.5).unwrap();
    let ctx = SkeletonContext::from_initial(&sine(&g), &g, &SigmaSpec::cosine(1.0), &SolverConfig::default())
        .unwrap();
    let v0 = unit_sine_control(&g);
    let f = ctx.forward(&v0).unwrap();
    let r = rate_value(&f, &ctx, &RateOptions::default()).unwrap();
    assert!(r.attainable);
    assert!(r.value <= 0.5 + 1e-6, "{}", r.value);
    let back = ctx.forward(&r.v_star).unwrap();
    assert!(sup_t_l2(&back.axpy(-1.0, &f).unwrap(), &g).unwrap() <= 1e-6);
    assert!((0.5 * ht_norm(&r.v_star, &g).unwrap().powi(2) - r.value).abs() < 1e-12);
}

#[test]
fn mc_statistics_match_raw_samples() {
    let g = Grid::new(16, 128, 0.5).unwrap();
    let mc = McConfig {
        eps_grid: vec![2e-2, 1e-2],
        n_paths: 60,
        threshold: 0.08,
        moment_orders: vec![2, 4],
        seed: 12,
        path_base: 0,
        importance: false,
    };
    let cfg = SolverConfig::default();
    let sigma = SigmaSpec::cosine(1.0);
    let sched = ScalingSchedule::Clt;
    let stats = mc_run(&sine(&g), &g, &sigma, &sched, &mc, &cfg).unwrap();
    let samples = mc_samples(&sine(&g), &g, &sigma, &mc, &cfg).unwrap();
    assert_eq!(stats.to_csv_string().lines().count(), 3);
    for (e, rec) in stats.records.iter().enumerate() {
        let p = samples.exceedance(e, &sched, &[mc.threshold])[0];
        assert_eq!(rec.p_hat, p);
        assert!(rec.ci_low <= p && p <= rec.ci_high);
        let m2: f64 = samples.paths.iter().map(|p| p[e].unwrap().sup_diff.powi(2)).sum::<f64>() / 60.0;
        assert!((rec.diff_moments[&2] - m2).abs() <= 1e-12 * m2);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn speed_and_scale_are_consistent(eps in 1e-6..1.0f64, theta in 0.01..0.49f64) {
        for sched in [ScalingSchedule::Clt, ScalingSchedule::Moderate { theta }, ScalingSchedule::Ldp] {
            let (a, h) = (sched.a(eps), sched.h(eps));
            prop_assert!((h * eps.sqrt() - a).abs() <= 1e-12 * a.max(1.0));
        }
    }

    #[test]
    fn sheets_are_pure_functions_of_the_seed(seed in any::<u64>(), path in 0u64..1000) {
        let g = Grid::new(6, 5, 1.0).unwrap();
        let a = sample_sheet(&g, SeedSpec::new(seed, path));
        let b = sample_sheet(&g, SeedSpec::new(seed, path));
        prop_assert_eq!(a.increments(), b.increments());
        let c = sample_sheet(&g, SeedSpec::new(seed, path + 1));
        prop_assert_ne!(a.increments(), c.increments());
    }
}
