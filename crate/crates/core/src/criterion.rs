//! Gaussian-mixture boundary in the `(p0, q0)` plane and the two witnesses
//! built on it.
//!
//! The maximal `q0` reachable by mixtures of Gaussian states at fixed `p0`
//! is given parametrically by `(p0(V), q0(V))`, `V in (0, 1]`. A point with
//! `q0` strictly above that curve is quantum non-Gaussian. A lower bound on
//! the single-photon weight, `4 q0 - 3 p0 - 1`, certifies a negative Wigner
//! function at the origin once it exceeds one half.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest `V` used by the inversion; below it the threshold is bounded
/// from above by `q0(V_MIN)`.
pub const V_MIN: f64 = 1e-9;

/// Number of grid samples checked for monotonicity at construction.
pub const GRID_SAMPLES: usize = 10_000;

/// Inversion tolerance on `p0`.
pub const P0_TOLERANCE: f64 = 1e-12;

/// Wigner-negativity threshold on `4 q0 - 3 p0 - 1`.
pub const WIGNER_THRESHOLD: f64 = 0.5;

fn check_v(v: f64) -> Result<()> {
    if v > 0.0 && v <= 1.0 {
        Ok(())
    } else {
        Err(Error::domain("V", v, "(0, 1]"))
    }
}

/// `ln p0(V)`.
fn ln_p0(v: f64) -> f64 {
    std::f64::consts::LN_2 + 0.5 * v.ln()
        - (v + 1.0).ln()
        - (1.0 - v) * (3.0 + v) / (2.0 * v * (3.0 * v + 1.0))
}

/// `ln q0(V)`.
fn ln_q0(v: f64) -> f64 {
    4f64.ln() + 0.5 * v.ln()
        - 0.5 * ((v + 3.0) * (3.0 * v + 1.0)).ln()
        - (1.0 - v * v) / (2.0 * v * (3.0 * v + 1.0))
}

/// Point `(p0(V), q0(V))` on the Gaussian boundary.
pub fn boundary_point(v: f64) -> Result<(f64, f64)> {
    check_v(v)?;
    Ok((ln_p0(v).exp(), ln_q0(v).exp()))
}

/// The boundary curve with a cached, monotonicity-checked sample grid.
#[derive(Debug, Clone)]
pub struct GaussianBoundary {
    tolerance: f64,
    /// `(V, ln p0(V), q0(V))`, log-spaced in `V` over `[V_MIN, 1]`.
    grid: Vec<(f64, f64, f64)>,
}

impl GaussianBoundary {
    pub fn new(tolerance: f64) -> Result<Self> {
        if !(tolerance > 0.0) {
            return Err(Error::domain("tolerance", tolerance, "> 0"));
        }
        let lo = V_MIN.ln();
        let step = -lo / (GRID_SAMPLES - 1) as f64;
        let grid: Vec<_> = (0..GRID_SAMPLES)
            .map(|i| {
                let v = if i == GRID_SAMPLES - 1 {
                    1.0
                } else {
                    (lo + step * i as f64).exp()
                };
                (v, ln_p0(v), ln_q0(v).exp())
            })
            .collect();
        if let Some(w) = grid.windows(2).find(|w| !(w[1].1 > w[0].1)) {
            return Err(Error::InvalidDistribution(format!(
                "boundary p0(V) not increasing between V = {} and V = {}",
                w[0].0, w[1].0
            )));
        }
        let last = grid[GRID_SAMPLES - 1];
        debug_assert!(last.1 == 0.0 && last.2 == 1.0);
        Ok(Self { tolerance, grid })
    }

    /// Shared instance with the default tolerance.
    pub fn standard() -> &'static GaussianBoundary {
        static BOUNDARY: OnceLock<GaussianBoundary> = OnceLock::new();
        BOUNDARY
            .get_or_init(|| GaussianBoundary::new(P0_TOLERANCE).expect("boundary grid is monotone"))
    }

    pub fn grid(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.grid.iter().map(|&(v, lp, q)| (v, lp.exp(), q))
    }

    /// The parameter `V` with `p0(V) = p0`, or `None` below the guard band.
    pub fn invert(&self, p0: f64) -> Option<f64> {
        let p0 = p0.clamp(0.0, 1.0);
        if p0 >= 1.0 {
            return Some(1.0);
        }
        if p0 == 0.0 {
            return None;
        }
        let target = p0.ln();
        if target < self.grid[0].1 {
            return None;
        }
        let idx = self.grid.partition_point(|g| g.1 < target);
        let mut lo = self.grid[idx.saturating_sub(1)].0;
        let mut hi = self.grid[idx.min(GRID_SAMPLES - 1)].0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if ln_p0(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
            // relative, so tiny p0 still pins V; implies |dp0| <= tolerance
            if ln_p0(hi).exp() - ln_p0(lo).exp() <= self.tolerance * p0 {
                break;
            }
        }
        Some(0.5 * (lo + hi))
    }

    /// Maximal `q0` over Gaussian mixtures with vacuum probability `p0`.
    pub fn q0_threshold(&self, p0: f64) -> f64 {
        match self.invert(p0) {
            Some(v) => ln_q0(v).exp(),
            // guard band: q0(V_MIN) bounds the true threshold from above
            None if p0 > 0.0 => ln_q0(V_MIN).exp(),
            None => 0.0,
        }
    }

    /// Slope `d q0 / d p0` of the boundary at `p0`.
    pub fn slope(&self, p0: f64) -> f64 {
        match self.invert(p0) {
            Some(v) => {
                let h = 1e-6 * v;
                let (a, b) = ((v - h).max(V_MIN), (v + h).min(1.0));
                let dq = ln_q0(b).exp() - ln_q0(a).exp();
                let dp = ln_p0(b).exp() - ln_p0(a).exp();
                if dp > 0.0 {
                    dq / dp
                } else {
                    0.0
                }
            }
            None => 0.0,
        }
    }
}

/// `q0_threshold` on the shared boundary.
pub fn q0_threshold(p0: f64) -> f64 {
    GaussianBoundary::standard().q0_threshold(p0)
}

/// A pair `(p0, q0)` of vacuum-like probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WitnessPoint {
    p0: f64,
    q0: f64,
}

impl WitnessPoint {
    pub fn new(p0: f64, q0: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p0) {
            return Err(Error::domain("p0", p0, "[0, 1]"));
        }
        if !(0.0..=1.0).contains(&q0) {
            return Err(Error::domain("q0", q0, "[0, 1]"));
        }
        Ok(Self { p0, q0 })
    }

    pub fn p0(&self) -> f64 {
        self.p0
    }

    pub fn q0(&self) -> f64 {
        self.q0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QngVerdict {
    pub certified: bool,
    /// `q0 - q0_threshold(p0)`.
    pub margin: f64,
}

/// Certified iff `q0` lies strictly above the Gaussian boundary.
pub fn is_quantum_non_gaussian(w: WitnessPoint) -> QngVerdict {
    let margin = w.q0 - q0_threshold(w.p0);
    QngVerdict {
        certified: margin > 0.0,
        margin,
    }
}

/// `(x p0, x q0)`. The Gaussian set is convex and contains the origin as an
/// extremal point, so if the scaled pair is non-Gaussian so is the original.
pub fn scale_pair(w: WitnessPoint, x: f64) -> Result<WitnessPoint> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::domain("x", x, "[0, 1]"));
    }
    WitnessPoint::new(x * w.p0, x * w.q0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WignerVerdict {
    /// `4 q0 - 3 p0 - 1`, also a lower bound on the single-photon weight.
    pub value: f64,
    pub certified: bool,
}

pub fn wigner_negativity_witness(w: WitnessPoint) -> WignerVerdict {
    let value = 4.0 * w.q0 - 3.0 * w.p0 - 1.0;
    WignerVerdict {
        value,
        certified: value > WIGNER_THRESHOLD,
    }
}

/// Root of `f` on `[lo, hi]` by bisection; `f(lo)` and `f(hi)` must differ
/// in sign.
pub fn bisect<F: FnMut(f64) -> f64>(mut f: F, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64> {
    let mut f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if (f_lo > 0.0) == (f_hi > 0.0) || f_lo.is_nan() || f_hi.is_nan() {
        return Err(Error::UndefinedEstimator(format!(
            "no sign change on [{lo}, {hi}]"
        )));
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if (f_mid > 0.0) == (f_lo > 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
