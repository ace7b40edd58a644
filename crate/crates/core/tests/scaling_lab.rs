use std::collections::BTreeMap;

use frepel_core::energy::{CouplingConstant, MollifierWidth};
use frepel_core::fbm::{HurstParameter, PathBundle, TimeGrid};
use frepel_core::gibbs::{EstimatorResult, SamplerConfig};
use frepel_core::lab::*;
use frepel_core::{Error, RngStream};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};

fn h(x: f64) -> HurstParameter {
    HurstParameter::new(x).unwrap()
}

fn result(value: f64, std_error: f64) -> EstimatorResult {
    EstimatorResult {
        value,
        std_error,
        ess: 1e4,
        n_samples: 10_000,
        reliable: true,
        diagnostics: BTreeMap::new(),
        warnings: vec![],
    }
}

fn template(seed: u64) -> SamplerConfig {
    SamplerConfig::new(RngStream::new(seed, 0), MollifierWidth::new(1.0).unwrap(), CouplingConstant::new(0.0).unwrap())
}

fn plan(hv: f64, d: usize, g: f64, ladder: Vec<f64>, seed: u64) -> ExperimentPlan {
    ExperimentPlan {
        hurst: h(hv),
        dimension: d,
        g: CouplingConstant::new(g).unwrap(),
        epsilon_policy: EpsilonPolicy::default(),
        ladder,
        steps_policy: StepsPolicy::FixedCount { n_steps: 16 },
        sampler: template(seed),
        min_fit_horizon: DEFAULT_MIN_FIT_HORIZON,
    }
}

#[test]
fn exact_power_laws_are_recovered() {
    let ns = [2.0, 4.0, 8.0, 16.0, 32.0];
    let exact: Vec<EstimatorResult> = ns.iter().map(|n: &f64| result(3.0 * n.powf(1.2), 0.0)).collect();
    let pts: Vec<(f64, &EstimatorResult)> = ns.iter().copied().zip(&exact).collect();
    let fit = fit_exponent(&pts).unwrap();
    assert!((fit.nu - 0.6).abs() < 1e-12);
    assert!((fit.intercept - 3f64.ln()).abs() < 1e-12);

    let flat: Vec<EstimatorResult> = ns.iter().map(|_| result(7.0, 0.0)).collect();
    let pts: Vec<(f64, &EstimatorResult)> = ns.iter().copied().zip(&flat).collect();
    assert!(fit_exponent(&pts).unwrap().nu.abs() < 1e-12);
}

#[test]
fn noisy_fits_cover_the_true_slope() {
    let ns = [8.0, 16.0, 32.0, 64.0, 128.0];
    let mut rng = ChaCha20Rng::seed_from_u64(11);
    let mut covered = 0;
    for _ in 0..100 {
        let data: Vec<EstimatorResult> = ns
            .iter()
            .enumerate()
            .map(|(i, n): (usize, &f64)| {
                let rel = 0.02 * (1.0 + i as f64);
                let noise = Normal::new(0.0, rel).unwrap().sample(&mut rng);
                let v = 2.0 * n.powf(1.5) * f64::exp(noise);
                result(v, rel * v)
            })
            .collect();
        let pts: Vec<(f64, &EstimatorResult)> = ns.iter().copied().zip(&data).collect();
        let fit = fit_exponent(&pts).unwrap();
        if (fit.slope - 1.5).abs() <= 2.0 * fit.slope_std_error {
            covered += 1;
        }
    }
    // Nominal coverage is 95%.
    assert!(covered >= 88, "covered {covered}/100");
}

#[test]
fn fit_rejects_bad_input() {
    let a = result(1.0, 0.1);
    let z = result(0.0, 0.1);
    assert!(matches!(fit_exponent(&[(1.0, &a), (2.0, &a), (4.0, &a)]), Err(Error::InvalidPlan(_))));
    assert!(fit_exponent(&[(1.0, &a), (2.0, &a), (4.0, &z), (8.0, &a)]).is_err());
}

#[test]
fn short_ladders_fail_validation() {
    let p = plan(0.5, 1, 0.0, vec![1.0, 2.0, 4.0], 1);
    assert!(matches!(run_r2_sweep(&p), Err(Error::InvalidPlan(_))));
    let p = plan(0.5, 1, 0.0, vec![1.0, 4.0, 2.0, 8.0], 1);
    assert!(run_r2_sweep(&p).is_err());
}

#[test]
fn free_sweeps_recover_hurst() {
    for hv in [0.3, 0.5, 0.7] {
        for d in [1, 2, 3] {
            let p = plan(hv, d, 0.0, vec![1.0, 2.0, 4.0, 8.0, 16.0], 100 + d as u64);
            let sweep = run_r2_sweep(&p).unwrap();
            assert!(!sweep.partial);
            let fit = fit_sweep(&sweep, 0.0).unwrap();
            assert!(
                (fit.nu - hv).abs() < 2.0 * fit.nu_std_error,
                "H={hv} d={d}: nu={} ± {}",
                fit.nu,
                fit.nu_std_error
            );
        }
    }
}

#[test]
fn sweeps_are_reproducible() {
    let p = plan(0.5, 2, 0.3, vec![1.0, 2.0, 4.0, 8.0], 5);
    assert_eq!(run_r2_sweep(&p).unwrap(), run_r2_sweep(&p).unwrap());
}

#[test]
fn invariance_trivial_cases() {
    let grid = TimeGrid::new(16, 1.0).unwrap();
    let mut cfg = template(3);
    cfg.g = CouplingConstant::new(0.5).unwrap();
    cfg.epsilon = MollifierWidth::grid_matched(1.0, h(0.5), &grid).unwrap();
    let r = test_scale_invariance(h(0.5), 2, grid, 1.0, &cfg, true).unwrap();
    assert_eq!(r.lhs, r.rhs);
    assert_eq!(r.z_score, 0.0);

    cfg.g = CouplingConstant::new(0.0).unwrap();
    let r = test_scale_invariance(h(0.5), 2, grid, 2.0, &cfg, false).unwrap();
    assert_eq!((r.lhs.value, r.rhs.value, r.z_score), (1.0, 1.0, 0.0));
}

// With the same noise on both sides the discretized model is exactly
// self-similar, so the two estimates agree to rounding.
#[test]
fn invariance_is_exact_on_the_grid_with_common_noise() {
    let grid = TimeGrid::new(16, 1.0).unwrap();
    let mut cfg = template(9);
    cfg.g = CouplingConstant::new(0.5).unwrap();
    cfg.epsilon = MollifierWidth::grid_matched(1.0, h(0.4), &grid).unwrap();
    cfg.n_replicas = 4_000;
    let r = test_scale_invariance(h(0.4), 2, grid, 3.0, &cfg, true).unwrap();
    assert!((r.lhs.value - r.rhs.value).abs() < 1e-10 * r.lhs.value);
    assert!((r.g_rhs - 0.5 * 3f64.powf(0.8 - 2.0)).abs() < 1e-15);
    assert_eq!(r.n_steps, 16);
    assert!((r.dt_rhs - 3.0 * r.dt_lhs).abs() < 1e-15);
}

#[test]
fn invariance_with_independent_arms() {
    let grid = TimeGrid::new(32, 1.0).unwrap();
    let mut cfg = template(21);
    cfg.g = CouplingConstant::new(0.5).unwrap();
    cfg.epsilon = MollifierWidth::grid_matched(1.0, h(0.5), &grid).unwrap();
    let r = test_scale_invariance(h(0.5), 2, grid, 2.0, &cfg, false).unwrap();
    assert!(r.z_score < 3.0, "z = {}", r.z_score);
}

#[test]
fn end_density_moments() {
    for (hv, d, horizon) in [(0.5, 1, 1.0), (0.7, 2, 2.0), (0.3, 3, 4.0)] {
        let r = verify_end_density(h(hv), d, horizon, 20_000, RngStream::new(50, d as u64)).unwrap();
        assert!(r.max_abs_z() < 4.0, "H={hv}: {r:?}");
    }
    let r = verify_end_density(h(0.7), 2, 2.0, 10, RngStream::new(1, 1)).unwrap();
    assert!((r.expected_variance - 2.6390158215457884).abs() < 1e-12);
}

#[test]
fn epsilon_scan_behaviour() {
    let grid = TimeGrid::new(16, 1.0).unwrap();
    let ladder = [1.0, 0.5, 0.25, 0.125];
    let free = epsilon_stability_scan(h(0.4), 2, grid, &ladder, &template(4)).unwrap();
    assert!(free.points.iter().all(|p| p.partition.value == 1.0));
    assert!(free.r2_differences.iter().all(|&d| d == 0.0));

    let mut cfg = template(4);
    cfg.g = CouplingConstant::new(0.5).unwrap();
    let scan = epsilon_stability_scan(h(0.4), 2, grid, &ladder, &cfg).unwrap();
    assert_eq!(scan.r2_differences.len(), 3);
    assert!(scan.points.iter().all(|p| p.partition.value > 0.0 && p.partition.value <= 1.0));
    assert!(epsilon_stability_scan(h(0.4), 2, grid, &[0.1, 0.2], &cfg).is_err());
}

#[test]
fn local_time_is_continuous_in_epsilon() {
    let grid = TimeGrid::new(4, 1.0).unwrap();
    let path = PathBundle::from_positions(h(0.5), grid, 1, vec![0.0, 0.3, -0.2, 0.5, 0.1]).unwrap();
    let ladder: Vec<f64> = (0..200).map(|k| 1.0 - k as f64 * 0.004).collect();
    let profile = local_time_profile(&path, &ladder, false).unwrap();
    assert!(profile.iter().all(|l| l.is_finite() && *l > 0.0));
    assert!(profile.windows(2).all(|w| (w[1] - w[0]).abs() < 0.02));
}

#[test]
fn slab_experiment_reports() {
    let grid = TimeGrid::new(16, 1.0).unwrap();
    let mut cfg = template(33);
    cfg.g = CouplingConstant::new(0.5).unwrap();
    cfg.epsilon = MollifierWidth::grid_matched(1.0, h(0.5), &grid).unwrap();
    let report = slab_reduction_experiment(h(0.5), 3, grid, &[1e6, 2.0, 1.0, 1e-4], &cfg).unwrap();
    assert!((report.predicted_y - 0.5).abs() < 1e-12);
    let top = &report.rungs[0];
    assert!((top.ratio.unwrap() - 1.0).abs() < 3.0 * top.ratio_std_error.unwrap());
    assert!(report.rungs[3].estimate.is_none());
    assert!(report.warnings.iter().any(|w| w.contains("no survivors")));
    assert_eq!(report.smallest_surviving().unwrap().0.width, 1.0);
    assert!(slab_reduction_experiment(h(0.5), 1, grid, &[2.0, 1.0], &cfg).is_err());
    assert!(slab_reduction_experiment(h(0.5), 2, grid, &[1.0, 2.0], &cfg).is_err());
}
