use frepel_core::fbm::HurstParameter;
use frepel_core::flory::*;
use proptest::prelude::*;

fn h(x: f64) -> HurstParameter {
    HurstParameter::new(x).unwrap()
}

fn hurst_grid() -> impl Iterator<Item = f64> {
    (1..=19).map(|k| k as f64 * 0.05)
}

#[test]
fn recursion_identities_over_grid() {
    for hv in hurst_grid() {
        for d in 1..=19u32 {
            let df = d as f64;
            if hv * df >= 2.0 {
                continue;
            }
            let nu = flory_index(h(hv), d).unwrap().nu;
            let inv = recursion_invariant(nu, hv, df).unwrap();
            assert!((inv - 1.0 / (2.0 * hv + 2.0)).abs() < 1e-12, "H={hv} d={d}");
            let ext = recursion_extrapolate((2.0 * hv + 2.0) / 3.0, hv, df).unwrap();
            assert!((ext - (2.0 * hv + 2.0) / (df + 2.0)).abs() < 1e-12, "H={hv} d={d}");
            let labels = classify_regime(h(hv), d);
            if labels.contains(&RegimeLabel::EdwardsWellDefined) {
                assert!(hv * df < 2.0);
            }
        }
    }
}

#[test]
fn kosmas_freed_on_flory_values() {
    for d in 1..=4u32 {
        let df = d as f64;
        assert!(kosmas_freed_residual(1.0, 3.0 / (df + 2.0), df).unwrap().abs() < 1e-12);
    }
    let r = kosmas_freed_residual(1.0, 0.7, 2.0).unwrap();
    assert!((r - (2.0 - 1.0 / 0.7 - 2.0 / 3.0)).abs() < 1e-15);
}

#[test]
fn interpolation_constraints_for_both_formulas() {
    for d in [3.0, 4.0, 5.0, 6.0] {
        let (a, b) = interpolation_constraints_check(|hv| flory_exponent(hv, d), d);
        assert!(a.abs() < 1e-12 && b.abs() < 1e-12);
        let (a, b) = interpolation_constraints_check(|hv| ballistic_recursion_exponent(hv, d), d);
        assert!(a.abs() < 1e-12 && b.abs() < 1e-12, "d={d}: {a} {b}");
    }
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let step = (b - a) / n as f64;
    let inner: f64 = (1..n).map(|i| f(a + i as f64 * step) * if i % 2 == 1 { 4.0 } else { 2.0 }).sum();
    (f(a) + f(b) + inner) * step / 3.0
}

#[test]
fn end_density_integrates_to_one() {
    for (hv, horizon) in [(0.5, 1.0f64), (0.7, 2.0), (0.2, 5.0)] {
        let sd = horizon.powf(hv);
        let lim = 12.0 * sd;
        let one_d = simpson(|x| gaussian_end_density(x.abs(), horizon, h(hv), 1).unwrap(), -lim, lim, 2000);
        assert!((one_d - 1.0).abs() < 1e-6, "d=1 H={hv}: {one_d}");
        let two_d = simpson(
            |x| simpson(|y| gaussian_end_density(x.hypot(y), horizon, h(hv), 2).unwrap(), -lim, lim, 400),
            -lim,
            lim,
            400,
        );
        assert!((two_d - 1.0).abs() < 1e-6, "d=2 H={hv}: {two_d}");
    }
}

#[test]
fn brownian_density_matches_heat_kernel() {
    for d in 1..=4u32 {
        for horizon in [0.5, 1.0, 2.0, 7.5] {
            for r in [0.0, 0.3, 1.0, 2.5] {
                let got = gaussian_end_density(r, horizon, h(0.5), d).unwrap();
                let want = (2.0 * std::f64::consts::PI * horizon).powf(-(d as f64) / 2.0) * (-r * r / (2.0 * horizon)).exp();
                assert!((got - want).abs() <= 1e-15 * want.max(1.0));
            }
        }
    }
    let v = gaussian_end_density(1.0, 2.0, h(0.5), 1).unwrap();
    assert!((v - (4.0 * std::f64::consts::PI).powf(-0.5) * (-0.25f64).exp()).abs() < 1e-15);
}

proptest! {
    #[test]
    fn fixed_point_holds_for_any_nu1(nu1 in 1e-3f64..2.0, hv in 0.05f64..0.95) {
        prop_assert!(critical_regime_fixed_point_check(nu1, hv).unwrap().abs() < 1e-12);
    }

    #[test]
    fn linear_in_hurst(a in 0.01f64..0.99, b in 0.01f64..0.99, t in 0.0f64..1.0, d in 1u32..20) {
        let c = t * a + (1.0 - t) * b;
        let mix = t * flory_index(h(a), d).unwrap().nu + (1.0 - t) * flory_index(h(b), d).unwrap().nu;
        prop_assert!((flory_index(h(c), d).unwrap().nu - mix).abs() < 1e-12);
    }

    #[test]
    fn decreasing_in_dimension(hv in 0.01f64..0.99, d in 1u32..40) {
        prop_assert!(flory_index(h(hv), d + 1).unwrap().nu < flory_index(h(hv), d).unwrap().nu);
    }

    #[test]
    fn physicality_flags_are_consistent(hv in 0.01f64..0.99, d in 1u32..20) {
        let p = flory_index(h(hv), d).unwrap();
        prop_assert_eq!(p.nu_clipped, p.nu.min(1.0));
        if p.physical {
            prop_assert!(p.nu <= 1.0 && hv * d as f64 <= 2.0);
        }
        prop_assert_eq!(p.regimes.contains(&RegimeLabel::FloryUnphysicalNu), p.nu > 1.0);
    }
}
