//! Closed-form Flory-index layer for self-repelling fBm.
//!
//! Everything here is a pure function of `(H, d)`. Dimensions are integers in
//! the typed API, but the raw formulas accept real `d` so the regime map can
//! treat dimension as a continuous axis.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fbm::HurstParameter;

/// Relative tolerance for regime boundary equalities such as `H = 1/d`.
pub const BOUNDARY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegimeLabel {
    /// `H < 1/d`: the model exists without renormalization.
    EdwardsWellDefined,
    /// `H = 1/d`: exists at small coupling via fixed-width normalization.
    EdwardsCritical,
    /// `1/d < H` and `H d < 2`: self-intersections exist, existence not covered.
    DoublePointsPresent,
    /// `H d >= 2`: the path has no double points.
    NoDoublePoints,
    /// `d >= d_c = 2/H`: the Flory formula is outside its range of validity.
    AboveCriticalDimension,
    /// The Flory exponent exceeds one.
    FloryUnphysicalNu,
}

impl RegimeLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::EdwardsWellDefined => "edwards-well-defined",
            Self::EdwardsCritical => "edwards-critical",
            Self::DoublePointsPresent => "double-points-present",
            Self::NoDoublePoints => "no-double-points",
            Self::AboveCriticalDimension => "above-critical-dimension",
            Self::FloryUnphysicalNu => "flory-unphysical-nu",
        }
    }
}

/// `(2H + 2) / (d + 2)`.
#[inline]
pub fn flory_exponent(h: f64, d: f64) -> f64 {
    (2.0 * h + 2.0) / (d + 2.0)
}

/// One-dimensional exponent capped at ballistic growth: `(2H+2)/3` for `H <= 1/2`, else 1.
pub fn flory_exponent_1d_piecewise(h: f64) -> f64 {
    if h <= 0.5 {
        (2.0 * h + 2.0) / 3.0
    } else {
        1.0
    }
}

/// Alternative exponent obtained from the recursion when the 1-d exponent is 1.
#[inline]
pub fn ballistic_recursion_exponent(h: f64, d: f64) -> f64 {
    (2.0 - h) / (d + 1.0 - d * h)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FloryPrediction {
    pub hurst: HurstParameter,
    pub dimension: u32,
    /// Raw formula value, never clipped.
    pub nu: f64,
    pub nu_clipped: f64,
    pub physical: bool,
    pub regimes: BTreeSet<RegimeLabel>,
    /// Piecewise value, reported for `d = 1` only.
    pub nu_1d_piecewise: Option<f64>,
    pub critical_dimension: f64,
}

pub fn flory_index(h: HurstParameter, d: u32) -> Result<FloryPrediction> {
    if d == 0 {
        return Err(Error::Domain("dimension must be at least 1".into()));
    }
    let hv = h.value();
    let df = d as f64;
    let nu = flory_exponent(hv, df);
    Ok(FloryPrediction {
        hurst: h,
        dimension: d,
        nu,
        nu_clipped: nu.min(1.0),
        physical: nu <= 1.0 && hv * df < 2.0,
        regimes: classify_regime_real(hv, df),
        nu_1d_piecewise: (d == 1).then(|| flory_exponent_1d_piecewise(hv)),
        critical_dimension: critical_dimension(h),
    })
}

/// `d_c = 2 / H`.
#[inline]
pub fn critical_dimension(h: HurstParameter) -> f64 {
    2.0 / h.value()
}

fn approx_eq(a: f64, b: f64) -> bool {
    (a - b).abs() <= BOUNDARY_TOL * a.abs().max(b.abs()).max(1.0)
}

pub fn classify_regime(h: HurstParameter, d: u32) -> BTreeSet<RegimeLabel> {
    classify_regime_real(h.value(), d as f64)
}

/// Labels overlap; every applicable one is returned.
pub fn classify_regime_real(h: f64, d: f64) -> BTreeSet<RegimeLabel> {
    use RegimeLabel::*;
    let mut labels = BTreeSet::new();
    let hd = h * d;
    let critical = approx_eq(hd, 1.0);
    if critical {
        labels.insert(EdwardsCritical);
    } else if hd < 1.0 {
        labels.insert(EdwardsWellDefined);
    }
    if hd >= 2.0 || approx_eq(hd, 2.0) {
        labels.insert(NoDoublePoints);
        labels.insert(AboveCriticalDimension);
    } else if hd > 1.0 && !critical {
        labels.insert(DoublePointsPresent);
    }
    if flory_exponent(h, d) > 1.0 {
        labels.insert(FloryUnphysicalNu);
    }
    labels
}

/// End-point density `(2 pi N^{2H})^{-d/2} exp(-R^2 / 2 N^{2H})` at distance `r`.
pub fn gaussian_end_density(r: f64, horizon: f64, h: HurstParameter, d: u32) -> Result<f64> {
    if !(horizon > 0.0) {
        return Err(Error::Domain(format!("horizon must be positive, got {horizon}")));
    }
    if !(r >= 0.0) {
        return Err(Error::Domain(format!("distance must be non-negative, got {r}")));
    }
    let var = horizon.powf(2.0 * h.value());
    Ok((2.0 * PI * var).powf(-(d as f64) / 2.0) * (-r * r / (2.0 * var)).exp())
}

/// `nu_H(d) = (2 - H) nu_1 / ((d - 1) nu_1 + 2 - d H)`.
pub fn recursion_extrapolate(nu1: f64, h: f64, d: f64) -> Result<f64> {
    let den = (d - 1.0) * nu1 + 2.0 - d * h;
    if den == 0.0 {
        return Err(Error::Domain(format!("recursion denominator vanishes at nu1={nu1}, H={h}, d={d}")));
    }
    Ok((2.0 - h) * nu1 / den)
}

/// The dimension-independent combination `(nu - H) / (nu (2 - H d))`.
pub fn recursion_invariant(nu: f64, h: f64, d: f64) -> Result<f64> {
    let den = nu * (2.0 - h * d);
    if den == 0.0 {
        return Err(Error::Domain(format!("recursion invariant undefined at nu={nu}, H d={}", h * d)));
    }
    Ok((nu - h) / den)
}

/// `(2 - 1/nu_d) - (4 - d)/3 (2 - 1/nu_1)`, the Brownian dimension recursion residual.
pub fn kosmas_freed_residual(nu1: f64, nud: f64, d: f64) -> Result<f64> {
    if nu1 == 0.0 || nud == 0.0 {
        return Err(Error::Domain("exponents must be non-zero".into()));
    }
    Ok((2.0 - 1.0 / nud) - (4.0 - d) / 3.0 * (2.0 - 1.0 / nu1))
}

/// `recursion_extrapolate(nu1, H, 2/H) - H`, zero for every `nu1 > 0`.
pub fn critical_regime_fixed_point_check(nu1: f64, h: f64) -> Result<f64> {
    if !(nu1 > 0.0) {
        return Err(Error::Domain(format!("nu1 must be positive, got {nu1}")));
    }
    Ok(recursion_extrapolate(nu1, h, 2.0 / h)? - h)
}

/// Residuals of `F(1/2) = 3/(d+2)` and `F(2/d) = 2/d` for a candidate exponent function.
pub fn interpolation_constraints_check<F: Fn(f64) -> f64>(f: F, d: f64) -> (f64, f64) {
    (f(0.5) - 3.0 / (d + 2.0), f(2.0 / d) - 2.0 / d)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecursionDiagnostics {
    pub invariant_value: f64,
    /// `1 / (2H + 2)`.
    pub expected: f64,
    /// Extrapolated from the `d = 1` Flory value.
    pub extrapolated_nu: f64,
    /// From `1 + y/2 = nu(d-1) / nu(d)`; undefined for `d = 1`.
    pub slab_exponent_y: Option<f64>,
    /// Power of the coupling in `<R^2> ~ N^{2H} (N^{2 - H d} g)^x`.
    pub coupling_exponent_x: f64,
}

pub fn recursion_diagnostics(h: HurstParameter, d: u32) -> Result<RecursionDiagnostics> {
    let hv = h.value();
    let df = d as f64;
    if approx_eq(hv * df, 2.0) {
        return Err(Error::Domain("recursion diagnostics are undefined at H d = 2".into()));
    }
    let nu = flory_exponent(hv, df);
    Ok(RecursionDiagnostics {
        invariant_value: recursion_invariant(nu, hv, df)?,
        expected: 1.0 / (2.0 * hv + 2.0),
        extrapolated_nu: recursion_extrapolate(flory_exponent(hv, 1.0), hv, df)?,
        slab_exponent_y: (d >= 2).then(|| predicted_slab_exponent(hv, df)),
        coupling_exponent_x: (2.0 * nu - 2.0 * hv) / (2.0 - hv * df),
    })
}

/// `y = 2 (nu(d-1) / nu(d) - 1)` under the Flory ansatz.
pub fn predicted_slab_exponent(h: f64, d: f64) -> f64 {
    2.0 * (flory_exponent(h, d - 1.0) / flory_exponent(h, d) - 1.0)
}
