//! Model-free maximization of an unknown, noisy, time-varying function on an
//! equidistant input grid.
//!
//! The core idea is *uncertainty-based perturb and observe* (uP&O): every
//! measurement feeds a per-grid-point belief whose information weight decays
//! over time, so old data gradually loses influence instead of being trusted
//! forever. A three-point local model around the current input smooths the
//! belief means by their variances, and the next input is either the argmax of
//! that local model or a forced probe of a stale neighbor. The result is a
//! hill climber that stays put while it has evidence it is at the top and
//! perturbs only when that evidence has aged away.
//!
//! The crate also ships the classic perturb-and-observe baseline, two bandit
//! style baselines (highest expected improvement and Thompson sampling) driven
//! by the same belief, a photovoltaic array + buck converter steady-state
//! plant used as a realistic tracking scenario, an experiment harness with
//! seeded reproducible CSV traces, and independent verification oracles for
//! the belief recursion, the local model and the convergence envelopes.
//!
//! Entry points:
//! - [`harness::ExperimentConfig`] / [`harness::run_experiment`] — run
//!   selector-vs-plant experiments and export traces.
//! - [`selectors::UpoEngine`] — drive the optimizer step by step yourself.
//! - [`pv::steady_state_power`] — the plant map on its own.
//!
//! With the default `parallel` feature, seed sweeps and grid scans use rayon;
//! disabling it yields a fully sequential build with identical results.

pub mod belief;
pub mod grid;
pub mod harness;
pub mod local;
pub mod math;
pub mod objective;
pub mod par;
pub mod pv;
pub mod selectors;
pub mod verify;

pub use belief::{BeliefState, Estimate, WeightingOperator};
pub use grid::InputGrid;
pub use local::{solve_local, solve_local_theta, LocalModel, LocalModelParams};
pub use objective::{AssumptionConstants, NoiseKind, Objective};
pub use selectors::{Decision, DecisionCase, SelectorConfig, SelectorKind};
