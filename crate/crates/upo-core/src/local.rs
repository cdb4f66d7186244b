//! Piecewise-linear three-point local model around the current input.
//!
//! The smoothed values `h` interpolate between trusting the per-point means
//! and forcing the triple onto a straight line, weighted by the per-point
//! variances and the bend tolerance `nu`. With one neighbor unmeasured the
//! model is the exact linear extrapolation through the two known points.
//!
//! Two algebraically equivalent routes exist: the case-split solution
//! ([`solve_local`], the production path, numerically well conditioned) and
//! the closed form over raw belief readouts ([`solve_local_theta`], kept as
//! an independent cross-check).

use thiserror::Error;

use crate::belief::Estimate;

#[derive(Debug, Error, PartialEq)]
pub enum LocalModelError {
    #[error("local model requires a measured center point")]
    CenterUnmeasured,
    #[error("local model requires at least one measured neighbor")]
    BothNeighborsUnmeasured,
    #[error("local model denominator is not positive (fewer than two measured points)")]
    NonPositiveDenominator,
    #[error("local model parameters must be positive: nu={nu}, rho={rho}")]
    InvalidParams { nu: f64, rho: f64 },
}

/// Bend tolerance `nu` (ratio of the collinearity slack to the noise scale)
/// and the noise scale itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalModelParams {
    pub nu: f64,
    pub rho: f64,
}

impl LocalModelParams {
    pub fn new(nu: f64, rho: f64) -> Result<Self, LocalModelError> {
        if !(nu > 0.0) || !(rho > 0.0) {
            return Err(LocalModelError::InvalidParams { nu, rho });
        }
        Ok(Self { nu, rho })
    }
}

/// Which branch produced the solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LocalCase {
    /// Right neighbor unmeasured: line through (left, center) extended right.
    RightUnmeasured,
    /// Left neighbor unmeasured: line through (center, right) extended left.
    LeftUnmeasured,
    /// All three measured: variance-weighted shrinkage toward collinearity.
    AllMeasured,
}

/// Smoothed local estimates `h` at (center-1, center, center+1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalModel {
    pub center: i64,
    pub h: [f64; 3],
    pub case: LocalCase,
}

impl LocalModel {
    /// Collinearity residual `h[0] - 2 h[1] + h[2]`.
    pub fn bend(&self) -> f64 {
        self.h[0] - 2.0 * self.h[1] + self.h[2]
    }
}

/// Case-split solution from the per-point estimates.
///
/// `estimates` holds (left, center, right); `None` marks a never-measured
/// point. The center must be measured (it was just sampled), and at least
/// one neighbor must be known.
pub fn solve_local(
    center: i64,
    estimates: &[Option<Estimate>; 3],
    params: LocalModelParams,
) -> Result<LocalModel, LocalModelError> {
    let mid = estimates[1].ok_or(LocalModelError::CenterUnmeasured)?;
    match (estimates[0], estimates[2]) {
        (None, None) => Err(LocalModelError::BothNeighborsUnmeasured),
        (Some(left), None) => Ok(LocalModel {
            center,
            h: [left.mean, mid.mean, 2.0 * mid.mean - left.mean],
            case: LocalCase::RightUnmeasured,
        }),
        (None, Some(right)) => Ok(LocalModel {
            center,
            h: [2.0 * mid.mean - right.mean, mid.mean, right.mean],
            case: LocalCase::LeftUnmeasured,
        }),
        (Some(left), Some(right)) => {
            let s = params.nu * params.rho;
            let s2 = s * s;
            let wl = left.variance / s2;
            let wm = mid.variance / s2;
            let wr = right.variance / s2;
            let residual = left.mean - 2.0 * mid.mean + right.mean;
            let scale = residual / (1.0 + wl + 4.0 * wm + wr);
            Ok(LocalModel {
                center,
                h: [
                    left.mean - scale * wl,
                    mid.mean + 2.0 * scale * wm,
                    right.mean - scale * wr,
                ],
                case: LocalCase::AllMeasured,
            })
        }
    }
}

/// Closed-form solution from the raw belief readouts.
///
/// `readouts` holds `(c'A xi, c'A phi)` for (left, center, right); an
/// unmeasured point contributes `(0, 0)` and the formula degenerates to the
/// matching extrapolation case on its own. Used as the independent oracle
/// for [`solve_local`].
pub fn solve_local_theta(
    center: i64,
    readouts: &[(f64, f64); 3],
    params: LocalModelParams,
) -> Result<LocalModel, LocalModelError> {
    if !(params.nu > 0.0) || !(params.rho > 0.0) {
        return Err(LocalModelError::InvalidParams { nu: params.nu, rho: params.rho });
    }
    let (xl, pl) = readouts[0];
    let (xm, pm) = readouts[1];
    let (xr, pr) = readouts[2];
    let nu2 = params.nu * params.nu;
    let denom = nu2 * pl * pm * pr + pm * pr + 4.0 * pl * pr + pl * pm;
    if !(denom > 0.0) {
        return Err(LocalModelError::NonPositiveDenominator);
    }
    let theta_left = xl * (nu2 * pm * pr + pm + 4.0 * pr) + 2.0 * xm * pr - xr * pm;
    let theta_mid = xm * (nu2 * pl * pr + pl + pr) + 2.0 * xl * pr + 2.0 * xr * pl;
    let theta_right = xr * (nu2 * pl * pm + 4.0 * pl + pm) - xl * pm + 2.0 * xm * pl;
    let case = if pr == 0.0 {
        LocalCase::RightUnmeasured
    } else if pl == 0.0 {
        LocalCase::LeftUnmeasured
    } else {
        LocalCase::AllMeasured
    };
    Ok(LocalModel {
        center,
        h: [theta_left / denom, theta_mid / denom, theta_right / denom],
        case,
    })
}
