//! Independent verification oracles: direct (non-recursive) evaluation of the
//! belief estimates, explicit convergence constants, and desk-scale checks of
//! the maximizer-drift bound, the tracking envelopes and the per-step descent
//! property.

use thiserror::Error;

use crate::belief::{omega, BeliefError};
use crate::objective::{AssumptionConstants, Objective, ObjectiveError};
use crate::par::map_indexed;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Belief(#[from] BeliefError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error("curvature bound must be positive, got {0}")]
    NonPositiveCurvature(f64),
    #[error("empty measurement history")]
    EmptyHistory,
}

/// Direct-sum evaluation of the belief readout for one point: the weighted
/// mean and variance from the stored (time, value) pairs, predicting time
/// `query_time`. This is the anti-recursion oracle; it never touches the
/// operator algebra.
pub fn direct_estimate(
    history: &[(u64, f64)],
    lambda: f64,
    order: u32,
    rho: f64,
    query_time: u64,
) -> Result<(f64, f64), VerifyError> {
    if history.is_empty() {
        return Err(VerifyError::EmptyHistory);
    }
    let mut weighted = 0.0;
    let mut total = 0.0;
    for &(j, y) in history {
        assert!(j < query_time, "history must predate the query time");
        let w = omega(lambda, order, j, query_time)?;
        weighted += w * y;
        total += w;
    }
    Ok((weighted / total, rho * rho / total))
}

/// Explicit constants of the tracking envelopes, all pure functions of the
/// measured assumption constants and the tuning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceConstants {
    /// Maximizer drift rate: |u*_{k+N} - u*_k| <= l_star * sqrt(N).
    pub l_star: f64,
    /// Window length over which a distant input provably gains one cell.
    pub n_window: u64,
    /// Distance scale below which no progress is guaranteed.
    pub gamma: f64,
    /// Dead zone: beyond this distance the next step provably descends.
    pub b_dead: f64,
    /// Transient envelope: sup_k |u_k - u*_k| <= |u_0 - u*_0| + c1.
    pub c1: f64,
    /// Asymptotic envelope: limsup |u_k - u*_k| <= c2.
    pub c2: f64,
    /// Forgetting-factor threshold: the always-perturb regime is guaranteed
    /// for lambda <= lambda_star.
    pub lambda_star: f64,
    /// First step from which the descent rule is required to apply.
    pub k0: u64,
}

/// The two class-K gain functions of the always-perturb analysis, evaluated
/// at forgetting factor `lambda` (valid on (0, 0.5]). `nu_star` bounds the
/// bend tolerance, the rest are the measured assumption constants.
fn alpha_gains(
    lambda: f64,
    nu_star: f64,
    rho: f64,
    l_k: f64,
    l_b: f64,
    delta_u: f64,
) -> (f64, f64) {
    let prefactor = lambda / ((1.0 - lambda) * (1.0 - lambda)) * (nu_star * nu_star + 5.0);
    let e_term = 1.0 / (std::f64::consts::E * (1.0 / lambda).ln());
    let alpha1 = prefactor
        * (12.0 * rho
            + 120.0 * l_k
            + 3.0 * l_b * delta_u
            + (44.0 * l_k + 2.0 * rho + l_b * delta_u / 2.0) * e_term
            + 16.0 * l_k * e_term * e_term);
    let alpha2 = prefactor * (6.0 + e_term) * l_b;
    (alpha1, alpha2)
}

/// Invert a strictly increasing gain on (0, 0.5]: the largest lambda whose
/// gain stays at or below `target`.
fn invert_gain(gain: impl Fn(f64) -> f64, target: f64) -> f64 {
    const LAMBDA_MAX: f64 = 0.5;
    if gain(LAMBDA_MAX) <= target {
        return LAMBDA_MAX;
    }
    // Bisection over log(lambda); the gain vanishes as lambda -> 0.
    let (mut lo, mut hi) = (-700.0f64, LAMBDA_MAX.ln());
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if gain(mid.exp()) <= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo.exp()
}

/// Compute the convergence constants from measured assumption constants and
/// the tuning (forced-perturbation band `tau`, assumed noise scale `rho`,
/// bend-tolerance cap `nu_star`, start step `k0`).
pub fn convergence_constants(
    assumptions: &AssumptionConstants,
    delta_u: f64,
    tau: f64,
    rho: f64,
    nu_star: f64,
    k0: u64,
) -> Result<ConvergenceConstants, VerifyError> {
    let (l_b, l_k) = (assumptions.l_b, assumptions.l_k);
    if !(l_b > 0.0) {
        return Err(VerifyError::NonPositiveCurvature(l_b));
    }
    let l_star = 2.0 * (l_k * delta_u / l_b).sqrt();
    let n_window = ((l_star / delta_u + 1.0).ceil() as u64).pow(2).max(1);
    let n = n_window as f64;
    let d = rho + 20.0 * l_k;
    let (alpha1_cap, _) = alpha_gains(0.5, nu_star, rho, l_k, l_b, delta_u);
    let b_dead = 4.0 / l_b * (alpha1_cap + d + tau) + delta_u;
    let gamma = l_star * n.sqrt() + (n - 1.0) * delta_u + b_dead;
    let c1 = gamma + l_star * n.sqrt() + (k0 as f64 + n) * delta_u;
    let c2 = gamma + l_star * n.sqrt() + n * delta_u;
    let a1 = |lam: f64| alpha_gains(lam, nu_star, rho, l_k, l_b, delta_u).0;
    let a2 = |lam: f64| alpha_gains(lam, nu_star, rho, l_k, l_b, delta_u).1;
    let lambda_star = invert_gain(a1, tau / 8.0)
        .min(invert_gain(a2, tau / (8.0 * b_dead)))
        .min(invert_gain(a2, l_b / 4.0))
        .min(0.5);
    Ok(ConvergenceConstants { l_star, n_window, gamma, b_dead, c1, c2, lambda_star, k0 })
}

/// Outcome of the exhaustive maximizer-drift check.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftReport {
    pub l_star: f64,
    /// Smallest slack `l_star * sqrt(N) - |u*_{k+N} - u*_k|` seen.
    pub worst_margin: f64,
    pub worst_at: (u64, u64),
    pub violations: Vec<(u64, u64)>,
}

impl DriftReport {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Exhaustively verify the maximizer-drift bound `|u*_{k+N} - u*_k| <=
/// l_star sqrt(N)` for all `k <= k_max`, `1 <= N <= n_max`, with constants
/// estimated from the objective itself over the same range.
pub fn check_drift_bound(
    objective: &Objective,
    lo: i64,
    hi: i64,
    k_max: u64,
    n_max: u64,
) -> Result<DriftReport, VerifyError> {
    let horizon = k_max + n_max;
    let constants = objective.estimate_assumption_constants(lo, hi, horizon)?;
    let l_star = 2.0 * (constants.l_k * objective.grid().spacing() / constants.l_b).sqrt();
    let maximizers = map_indexed((horizon + 1) as usize, |k| {
        objective.true_maximizer(k as u64, lo, hi)
    })
    .into_iter()
    .collect::<Result<Vec<i64>, ObjectiveError>>()?;
    let spacing = objective.grid().spacing();
    let mut worst_margin = f64::INFINITY;
    let mut worst_at = (0, 1);
    let mut violations = Vec::new();
    for k in 0..=k_max {
        for n in 1..=n_max {
            let drift =
                (maximizers[(k + n) as usize] - maximizers[k as usize]).abs() as f64 * spacing;
            let margin = l_star * (n as f64).sqrt() - drift;
            if margin < worst_margin {
                worst_margin = margin;
                worst_at = (k, n);
            }
            if margin < 0.0 {
                violations.push((k, n));
            }
        }
    }
    Ok(DriftReport { l_star, worst_margin, worst_at, violations })
}

/// Outcome of the envelope check over one trace.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeReport {
    pub sup_distance: f64,
    pub sup_bound: f64,
    pub tail_max: f64,
    pub tail_bound: f64,
    pub first_violation: Option<usize>,
}

impl EnvelopeReport {
    pub fn holds(&self) -> bool {
        self.first_violation.is_none()
    }
}

/// Check the tracking envelopes on an (input index, maximizer index) path:
/// the whole-trace bound `|u_k - u*_k| <= |u_0 - u*_0| + c1` and the
/// trailing-window surrogate of the asymptotic bound (max over the final
/// fifth of the trace <= c2).
pub fn check_envelopes(
    inputs: &[i64],
    maximizers: &[i64],
    spacing: f64,
    constants: &ConvergenceConstants,
) -> EnvelopeReport {
    assert_eq!(inputs.len(), maximizers.len());
    assert!(
        inputs.len() as u64 >= 10 * constants.n_window,
        "trailing-window surrogate needs a horizon of at least 10 progress windows"
    );
    let dist =
        |k: usize| ((inputs[k] - maximizers[k]).abs() as f64) * spacing;
    let initial = dist(0);
    let sup_bound = initial + constants.c1;
    let tail_start = inputs.len() - inputs.len() / 5;
    let mut sup_distance = 0.0f64;
    let mut tail_max = 0.0f64;
    let mut first_violation = None;
    for k in 0..inputs.len() {
        let d = dist(k);
        sup_distance = sup_distance.max(d);
        if k >= tail_start {
            tail_max = tail_max.max(d);
        }
        if first_violation.is_none()
            && (d > sup_bound || (k >= tail_start && d > constants.c2))
        {
            first_violation = Some(k);
        }
    }
    EnvelopeReport {
        sup_distance,
        sup_bound,
        tail_max,
        tail_bound: constants.c2,
        first_violation,
    }
}

/// Outcome of the per-step descent check.
#[derive(Debug, Clone, PartialEq)]
pub struct DescentReport {
    /// Steps at which the rule was in force (distance at least `b_dead`).
    pub triggered: usize,
    pub violations: Vec<usize>,
}

impl DescentReport {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check the descent rule on an input/maximizer path: whenever
/// `|u_k - u*_{k+1}| >= b_dead` (and `k >= k0`), the next input must be
/// exactly one cell closer to `u*_{k+1}`.
pub fn check_descent(
    inputs: &[i64],
    maximizers: &[i64],
    spacing: f64,
    constants: &ConvergenceConstants,
) -> DescentReport {
    assert_eq!(inputs.len(), maximizers.len());
    let mut triggered = 0;
    let mut violations = Vec::new();
    for k in (constants.k0 as usize)..inputs.len().saturating_sub(1) {
        let star_next = maximizers[k + 1];
        let before = (inputs[k] - star_next).abs() as f64 * spacing;
        if before >= constants.b_dead {
            triggered += 1;
            let after = (inputs[k + 1] - star_next).abs() as f64 * spacing;
            if (after - (before - spacing)).abs() > 1e-9 {
                violations.push(k);
            }
        }
    }
    DescentReport { triggered, violations }
}

/// True when the input path moves exactly one cell at every step.
pub fn always_perturbs(inputs: &[i64]) -> bool {
    inputs.windows(2).all(|w| (w[1] - w[0]).abs() == 1)
}
