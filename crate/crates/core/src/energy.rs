//! Mollified self-intersection local time and the Edwards energy.
//!
//! `L_eps = dt^2 * sum_{i,j} delta_eps(x_i - x_j)` over ordered pairs of grid
//! points, with the Gaussian mollifier `delta_eps(x) = (2 pi eps)^{-d/2}
//! exp(-|x|^2 / 2 eps)`. The double sum is symmetric, so it is evaluated as
//! twice the strict upper triangle (row-major) plus the optional diagonal.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fbm::{HurstParameter, PathBundle, TimeGrid};
use crate::stats::CompensatedSum;

/// Above this many grid points pair sums use compensated accumulation.
pub const COMPENSATED_THRESHOLD: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct MollifierWidth(f64);

impl MollifierWidth {
    pub fn new(epsilon: f64) -> Result<Self> {
        if epsilon > 0.0 && epsilon.is_finite() {
            Ok(Self(epsilon))
        } else {
            Err(Error::Domain(format!("mollifier width must be positive and finite, got {epsilon}")))
        }
    }

    /// `c * dt^{2H}`: matches the mollifier to the typical squared displacement
    /// between neighbouring grid points.
    pub fn grid_matched(c: f64, h: HurstParameter, grid: &TimeGrid) -> Result<Self> {
        Self::new(c * grid.dt().powf(2.0 * h.value()))
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for MollifierWidth {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<MollifierWidth> for f64 {
    fn from(e: MollifierWidth) -> f64 {
        e.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct CouplingConstant(f64);

impl CouplingConstant {
    pub fn new(g: f64) -> Result<Self> {
        if g >= 0.0 && g.is_finite() {
            Ok(Self(g))
        } else {
            Err(Error::Domain(format!("coupling must be non-negative and finite, got {g}")))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for CouplingConstant {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<CouplingConstant> for f64 {
    fn from(g: CouplingConstant) -> f64 {
        g.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub local_time: f64,
    /// `coupling * local_time`; zero until a coupling is applied.
    pub energy: f64,
    pub coupling: f64,
    pub epsilon: MollifierWidth,
    pub diagonal_included: bool,
}

impl EnergyReport {
    pub fn with_coupling(self, g: CouplingConstant) -> Self {
        Self { energy: energy(g, self.local_time), coupling: g.value(), ..self }
    }
}

/// Precomputed constants of `delta_eps` in dimension `d`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Kernel {
    norm: f64,
    inv_two_eps: f64,
}

impl Kernel {
    pub(crate) fn new(epsilon: MollifierWidth, d: usize) -> Self {
        let eps = epsilon.value();
        Self {
            norm: (2.0 * std::f64::consts::PI * eps).powf(-(d as f64) / 2.0),
            inv_two_eps: 1.0 / (2.0 * eps),
        }
    }

    #[inline]
    pub(crate) fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let r2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        self.norm * (-r2 * self.inv_two_eps).exp()
    }

    #[inline]
    pub(crate) fn at_origin(&self) -> f64 {
        self.norm
    }
}

pub fn mollified_delta(x: &[f64], epsilon: MollifierWidth) -> f64 {
    let zero = vec![0.0; x.len()];
    Kernel::new(epsilon, x.len()).eval(x, &zero)
}

/// Local time of raw row-major positions (`n_points x d`) on a grid of spacing `dt`.
pub fn local_time_of_positions(
    positions: &[f64],
    d: usize,
    dt: f64,
    epsilon: MollifierWidth,
    diagonal_included: bool,
) -> f64 {
    let n_points = positions.len() / d;
    let kernel = Kernel::new(epsilon, d);
    let point = |k: usize| &positions[k * d..(k + 1) * d];

    let off_diagonal = if n_points > COMPENSATED_THRESHOLD {
        let mut acc = CompensatedSum::default();
        for i in 0..n_points {
            let xi = point(i);
            for j in i + 1..n_points {
                acc.add(kernel.eval(xi, point(j)));
            }
        }
        acc.value()
    } else {
        let mut acc = 0.0;
        for i in 0..n_points {
            let xi = point(i);
            for j in i + 1..n_points {
                acc += kernel.eval(xi, point(j));
            }
        }
        acc
    };
    let mut total = 2.0 * off_diagonal;
    if diagonal_included {
        total += n_points as f64 * kernel.at_origin();
    }
    dt * dt * total
}

pub fn local_time(path: &PathBundle, epsilon: MollifierWidth, diagonal_included: bool) -> EnergyReport {
    let l = local_time_of_positions(path.positions(), path.dimension, path.grid.dt(), epsilon, diagonal_included);
    EnergyReport { local_time: l, energy: 0.0, coupling: 0.0, epsilon, diagonal_included }
}

/// Change in local time when point `k` moves to `new_point`, summing only pairs involving `k`.
///
/// The diagonal pair `(k, k)` is unaffected by the move, so the result does
/// not depend on `diagonal_included`; the flag is accepted for symmetry with
/// `local_time`.
pub fn local_time_delta(
    path: &PathBundle,
    epsilon: MollifierWidth,
    k: usize,
    new_point: &[f64],
    _diagonal_included: bool,
) -> Result<f64> {
    let n = path.n_points();
    if k >= n {
        return Err(Error::IndexOutOfRange { index: k, len: n });
    }
    if new_point.len() != path.dimension {
        return Err(Error::Domain(format!(
            "new point has dimension {}, path has {}",
            new_point.len(),
            path.dimension
        )));
    }
    let kernel = Kernel::new(epsilon, path.dimension);
    let old = path.point(k);
    let mut acc = 0.0;
    for j in (0..n).filter(|&j| j != k) {
        let xj = path.point(j);
        acc += kernel.eval(new_point, xj) - kernel.eval(old, xj);
    }
    let dt = path.grid.dt();
    Ok(2.0 * dt * dt * acc)
}

#[inline]
pub fn energy(g: CouplingConstant, local_time: f64) -> f64 {
    g.value() * local_time
}
