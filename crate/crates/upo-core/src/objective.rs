//! Time-varying objectives on the input grid: the noisy measurement channel
//! `y_k = f_k(u_k) + rho * eps_k`, an exhaustive-scan maximizer oracle, and
//! sampling-based estimation of the curvature / drift constants that the
//! convergence checks consume.

use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::grid::{GridError, InputGrid};
use crate::math::{splitmix64, standard_normal};

#[derive(Debug, Error)]
pub enum ObjectiveError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("negative noise scale {0}")]
    NegativeNoiseScale(f64),
    #[error("maximizer over [{lo}, {hi}] at k={k} is not unique: indices {first} and {second} tie at value {value}")]
    TiedMaximizer { k: u64, lo: i64, hi: i64, first: i64, second: i64, value: f64 },
    #[error("empty search interval [{0}, {1}]")]
    EmptyInterval(i64, i64),
    #[error("curvature assumption violated at k={k}, pair ({i}, {next}): increment ratio {ratio} is not positive")]
    CurvatureViolation { k: u64, i: i64, next: i64, ratio: f64 },
}

/// Distribution of the unit noise variable `eps_k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    /// Standard Gaussian.
    Gaussian,
    /// Truncated Gaussian: standard draws rejected until |eps| <= 1.
    Bounded,
}

/// Curvature lower bound and per-step drift bound measured on a truth
/// function over some interval and horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssumptionConstants {
    /// Curvature lower bound: increments between neighboring inputs grow at
    /// least linearly with distance from the maximizer, with this slope.
    pub l_b: f64,
    /// Per-step drift bound: |f_{k+1}(u) - f_k(u)| <= l_k on the scan.
    pub l_k: f64,
    /// Number of time steps the constants were estimated over.
    pub horizon: u64,
}

type TruthFn = dyn Fn(u64, f64) -> f64 + Send + Sync;

/// An unknown function of (time step, input) observed through additive
/// scaled noise. The truth map must be pure; instances are immutable and can
/// be shared read-only across concurrent runs.
#[derive(Clone)]
pub struct Objective {
    truth: Arc<TruthFn>,
    grid: InputGrid,
    noise_scale: f64,
    noise_kind: NoiseKind,
    rng_seed: u64,
}

impl fmt::Debug for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Objective")
            .field("grid", &self.grid)
            .field("noise_scale", &self.noise_scale)
            .field("noise_kind", &self.noise_kind)
            .field("rng_seed", &self.rng_seed)
            .finish_non_exhaustive()
    }
}

impl Objective {
    pub fn new(
        grid: InputGrid,
        truth: Arc<TruthFn>,
        noise_scale: f64,
        noise_kind: NoiseKind,
        rng_seed: u64,
    ) -> Result<Self, ObjectiveError> {
        if noise_scale < 0.0 {
            return Err(ObjectiveError::NegativeNoiseScale(noise_scale));
        }
        Ok(Self { truth, grid, noise_scale, noise_kind, rng_seed })
    }

    /// Static concave parabola `-(curvature/2) * (u - center)^2`.
    pub fn parabola(
        grid: InputGrid,
        curvature: f64,
        center: f64,
        noise_scale: f64,
        noise_kind: NoiseKind,
        rng_seed: u64,
    ) -> Result<Self, ObjectiveError> {
        let truth = move |_k: u64, u: f64| -0.5 * curvature * (u - center) * (u - center);
        Self::new(grid, Arc::new(truth), noise_scale, noise_kind, rng_seed)
    }

    /// Parabola whose peak drifts linearly: center_k = center0 + rate * k.
    pub fn drifting_parabola(
        grid: InputGrid,
        curvature: f64,
        center0: f64,
        rate: f64,
        noise_scale: f64,
        noise_kind: NoiseKind,
        rng_seed: u64,
    ) -> Result<Self, ObjectiveError> {
        let truth = move |k: u64, u: f64| {
            let c = center0 + rate * k as f64;
            -0.5 * curvature * (u - c) * (u - c)
        };
        Self::new(grid, Arc::new(truth), noise_scale, noise_kind, rng_seed)
    }

    /// Parabola with a sinusoidal vertical drift. The maximizer stays put
    /// while the function value changes every step, so the drift bound is
    /// uniform over the whole grid.
    pub fn breathing_parabola(
        grid: InputGrid,
        curvature: f64,
        center: f64,
        amplitude: f64,
        period: f64,
        noise_scale: f64,
        noise_kind: NoiseKind,
        rng_seed: u64,
    ) -> Result<Self, ObjectiveError> {
        let truth = move |k: u64, u: f64| {
            -0.5 * curvature * (u - center) * (u - center)
                + amplitude * (std::f64::consts::TAU * k as f64 / period).sin()
        };
        Self::new(grid, Arc::new(truth), noise_scale, noise_kind, rng_seed)
    }

    pub fn grid(&self) -> &InputGrid {
        self.grid_ref()
    }

    fn grid_ref(&self) -> &InputGrid {
        &self.grid
    }

    pub fn noise_scale(&self) -> f64 {
        self.noise_scale
    }

    pub fn noise_kind(&self) -> NoiseKind {
        self.noise_kind
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    /// Same truth and noise model under a different noise seed; the truth
    /// map (and any precomputed table behind it) is shared.
    pub fn with_seed(&self, rng_seed: u64) -> Self {
        Self { rng_seed, ..self.clone() }
    }

    /// Noise-free function value at time `k`, arbitrary input.
    pub fn truth(&self, k: u64, u: f64) -> f64 {
        (self.truth)(k, u)
    }

    /// Noise-free function value at time `k`, grid index `i`.
    pub fn truth_at_index(&self, k: u64, i: i64) -> f64 {
        self.truth(k, self.grid.input(i))
    }

    /// The k-th unit noise draw. Each step has its own substream, so the
    /// sequence eps_0, eps_1, ... is a fixed function of the seed alone:
    /// every selector replaying a run sees the identical realization no
    /// matter which inputs it chooses.
    pub fn epsilon(&self, k: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(self.rng_seed ^ k.wrapping_mul(0x9e3779b97f4a7c15)));
        match self.noise_kind {
            NoiseKind::Gaussian => standard_normal(&mut rng),
            NoiseKind::Bounded => loop {
                let eps = standard_normal(&mut rng);
                if eps.abs() <= 1.0 {
                    break eps;
                }
            },
        }
    }

    /// One measurement `y_k = f_k(u^{(i)}) + rho * eps_k`.
    pub fn measure(&self, k: u64, i: i64) -> Result<f64, ObjectiveError> {
        self.grid.check_bounds(i)?;
        Ok(self.truth_at_index(k, i) + self.noise_scale * self.epsilon(k))
    }

    /// Exhaustive-scan argmax of `f_k` over grid indices in `[lo, hi]`.
    /// This is an evaluation oracle: selectors never see it. A tie is
    /// reported as an error (the problem then has no unique maximizer).
    pub fn true_maximizer(&self, k: u64, lo: i64, hi: i64) -> Result<i64, ObjectiveError> {
        if lo > hi {
            return Err(ObjectiveError::EmptyInterval(lo, hi));
        }
        let mut best_i = lo;
        let mut best_v = self.truth_at_index(k, lo);
        let mut tied: Option<i64> = None;
        for i in (lo + 1)..=hi {
            let v = self.truth_at_index(k, i);
            if v > best_v {
                best_v = v;
                best_i = i;
                tied = None;
            } else if v == best_v {
                tied = Some(i);
            }
        }
        if let Some(second) = tied {
            return Err(ObjectiveError::TiedMaximizer {
                k,
                lo,
                hi,
                first: best_i,
                second,
                value: best_v,
            });
        }
        Ok(best_i)
    }

    /// Sample the curvature lower bound and per-step drift bound on the
    /// noise-free truth over grid indices `[lo, hi]` and steps `0..=horizon`.
    ///
    /// The drift bound is the max of |f_{k+1} - f_k| over the scan. The
    /// curvature bound is the largest constant compatible with every scanned
    /// neighbor pair: the minimum over pairs of
    /// `(f(u_i) - f(u_{i+1})) * (mid - u*) / |mid - u*|^2`;
    /// a nonpositive ratio means the increment points away from the
    /// maximizer and is reported with its witness pair.
    pub fn estimate_assumption_constants(
        &self,
        lo: i64,
        hi: i64,
        horizon: u64,
    ) -> Result<AssumptionConstants, ObjectiveError> {
        if lo >= hi {
            return Err(ObjectiveError::EmptyInterval(lo, hi));
        }
        let mut l_k = 0.0f64;
        let mut l_b = f64::INFINITY;
        for k in 0..=horizon {
            let star = self.grid.input(self.true_maximizer(k, lo, hi)?);
            for i in lo..hi {
                let f_i = self.truth_at_index(k, i);
                let f_next = self.truth_at_index(k, i + 1);
                if k < horizon {
                    l_k = l_k.max((self.truth_at_index(k + 1, i) - f_i).abs());
                    if i + 1 == hi {
                        l_k = l_k.max((self.truth_at_index(k + 1, hi) - f_next).abs());
                    }
                }
                let mid = (self.grid.input(i) + self.grid.input(i + 1)) / 2.0;
                let ratio = (f_i - f_next) * (mid - star) / ((mid - star) * (mid - star));
                if ratio <= 0.0 {
                    return Err(ObjectiveError::CurvatureViolation { k, i, next: i + 1, ratio });
                }
                l_b = l_b.min(ratio);
            }
        }
        Ok(AssumptionConstants { l_b, l_k, horizon })
    }
}
