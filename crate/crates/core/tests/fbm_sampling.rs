use frepel_core::fbm::*;
use frepel_core::stats::Moments;
use frepel_core::RngStream;

fn h(x: f64) -> HurstParameter {
    HurstParameter::new(x).unwrap()
}

/// Increment covariance from second differences of the fBm covariance.
fn brute_force_lag(hv: HurstParameter, dt: f64, k: usize) -> f64 {
    let c = |a: usize, b: usize| fbm_covariance(hv, a as f64 * dt, b as f64 * dt).unwrap();
    // Cov(B(t_{k+1}) - B(t_k), B(t_1) - B(t_0))
    c(k + 1, 1) - c(k, 1) - c(k + 1, 0) + c(k, 0)
}

#[test]
fn autocovariance_matches_second_differences() {
    for hv in [0.05, 0.2, 0.3, 0.5, 0.7, 0.85, 0.95] {
        for (n, horizon) in [(8, 1.0), (16, 3.5), (24, 24.0)] {
            let grid = TimeGrid::new(n, horizon).unwrap();
            let acov = fgn_autocovariance(h(hv), &grid);
            for k in 0..n {
                let bf = brute_force_lag(h(hv), grid.dt(), k);
                let tol = 1e-12 * acov.values[0].abs().max(1.0);
                assert!(
                    (acov.values[k] - bf).abs() <= tol,
                    "H={hv} n={n} k={k}: {} vs {bf}",
                    acov.values[k]
                );
            }
        }
    }
}

fn endpoint_variance(method: PathMethod, hv: f64, d: usize, grid: TimeGrid, reps: usize, seed: u64) -> Moments {
    let s = FbmSampler::new(h(hv), grid, d, method, GeneratorOptions::default()).unwrap();
    let mut rng = RngStream::new(seed, 0).rng();
    let mut m = Moments::default();
    for _ in 0..reps {
        let p = s.sample(&mut rng);
        p.endpoint().iter().for_each(|&x| m.push(x));
    }
    m
}

#[test]
fn endpoint_variance_h07_d3() {
    let grid = TimeGrid::new(64, 64.0).unwrap();
    let expected = 64f64.powf(1.4);
    for method in [PathMethod::Cholesky, PathMethod::Circulant] {
        let m = endpoint_variance(method, 0.7, 3, grid, 10_000, 21);
        let z = (m.variance() - expected) / m.variance_se();
        assert!(z.abs() < 3.0, "{method:?}: var {} vs {expected}, z={z}", m.variance());
    }
}

#[test]
fn brownian_increments_are_white() {
    let grid = TimeGrid::new(32, 32.0).unwrap();
    for method in [PathMethod::Cholesky, PathMethod::Circulant] {
        let s = FbmSampler::new(h(0.5), grid, 1, method, GeneratorOptions::default()).unwrap();
        let mut rng = RngStream::new(4, 1).rng();
        let mut lag0 = Moments::default();
        let mut lag1 = Moments::default();
        for _ in 0..4_000 {
            let p = s.sample(&mut rng);
            for k in 0..31 {
                let a = p.point(k + 1)[0] - p.point(k)[0];
                let b = p.point(k + 2)[0] - p.point(k + 1)[0];
                lag1.push(a * b);
                lag0.push(a * a);
            }
        }
        assert!((lag1.mean() / lag1.mean_se()).abs() < 4.0, "{method:?} lag-1 {}", lag1.mean());
        assert!(((lag0.mean() - 1.0) / lag0.mean_se()).abs() < 4.0, "{method:?} lag-0 {}", lag0.mean());
    }
}

#[test]
fn coordinates_are_uncorrelated() {
    let grid = TimeGrid::new(16, 2.0).unwrap();
    let s = FbmSampler::new(h(0.3), grid, 3, PathMethod::Auto, GeneratorOptions::default()).unwrap();
    let mut rng = RngStream::new(8, 0).rng();
    let mut cross = [Moments::default(), Moments::default(), Moments::default()];
    for _ in 0..10_000 {
        let e = s.sample(&mut rng).endpoint().to_vec();
        cross[0].push(e[0] * e[1]);
        cross[1].push(e[0] * e[2]);
        cross[2].push(e[1] * e[2]);
    }
    for m in &cross {
        assert!((m.mean() / m.mean_se()).abs() < 4.0);
    }
}

#[test]
fn cholesky_and_circulant_moments_agree() {
    let grid = TimeGrid::new(24, 3.0).unwrap();
    for hv in [0.25, 0.75] {
        let a = FbmSampler::new(h(hv), grid, 1, PathMethod::Cholesky, GeneratorOptions::default()).unwrap();
        let b = FbmSampler::new(h(hv), grid, 1, PathMethod::Circulant, GeneratorOptions::default()).unwrap();
        let mut ra = RngStream::new(9, 0).rng();
        let mut rb = RngStream::new(9, 1).rng();
        let mut ma = vec![Moments::default(); 24];
        let mut mb = vec![Moments::default(); 24];
        for _ in 0..8_000 {
            let pa = a.sample(&mut ra);
            let pb = b.sample(&mut rb);
            for k in 0..24 {
                ma[k].push(pa.point(k + 1)[0]);
                mb[k].push(pb.point(k + 1)[0]);
            }
        }
        for k in 0..24 {
            let zm = (ma[k].mean() - mb[k].mean()) / (ma[k].mean_se().hypot(mb[k].mean_se()));
            let zv = (ma[k].variance() - mb[k].variance()) / (ma[k].variance_se().hypot(mb[k].variance_se()));
            assert!(zm.abs() < 4.0 && zv.abs() < 4.0, "H={hv} k={k}: zm={zm} zv={zv}");
        }
    }
}

#[test]
fn rescaled_process_has_same_law() {
    // t = 1 is grid point 4 of (n = 8, N = 2).
    let grid = TimeGrid::new(8, 2.0).unwrap();
    for (hv, a) in [(0.5, 4.0), (0.3, 2.0)] {
        let r = rescale_in_law_check(h(hv), grid, 1, a, 6_000, RngStream::new(12, 0)).unwrap();
        assert_eq!(r.times[3], 1.0);
        let k = 3;
        assert!(((r.var_direct[k] - 1.0) / r.var_direct_se[k]).abs() < 3.0, "direct {}", r.var_direct[k]);
        assert!(((r.var_rescaled[k] - 1.0) / r.var_rescaled_se[k]).abs() < 3.0, "rescaled {}", r.var_rescaled[k]);
        assert!(r.max_abs_mean_z() < 4.0 && r.max_abs_var_z() < 4.0);
    }
}

#[test]
fn rescale_with_identity_and_shared_seed_is_exact() {
    let grid = TimeGrid::new(8, 2.0).unwrap();
    let s = RngStream::new(77, 4);
    let r = rescale_in_law_check_with_streams(h(0.5), grid, 2, 1.0, 500, s, s).unwrap();
    assert_eq!(r.max_abs_mean_z(), 0.0);
    assert_eq!(r.max_abs_var_z(), 0.0);
}

#[test]
fn large_grids_use_circulant() {
    let grid = TimeGrid::new(4096, 1.0).unwrap();
    let s = FbmSampler::new(h(0.8), grid, 2, PathMethod::Auto, GeneratorOptions::default()).unwrap();
    let p = s.sample(&mut RngStream::new(1, 1).rng());
    assert_eq!(p.n_points(), 4097);
    assert!(p.positions().iter().all(|x| x.is_finite()));
}
