//! Experiment harness: run selector-vs-objective experiments under one shared
//! noise realization, compute summary metrics, export reproducible CSV traces
//! and power curves, and sweep seeds in parallel.

mod config;
mod trace;

pub use config::{ConfigError, ExperimentConfig, ObjectiveSpec};
pub use trace::{compute_metrics, Metrics, RunTrace, TraceStep};

use std::io::Write;
use std::path::Path;

use thiserror::Error;

use crate::math::splitmix64;
use crate::objective::{Objective, ObjectiveError};
use crate::par::map_indexed;
use crate::pv::{day_objective, PvError};
use crate::selectors::{SelectorEngine, SelectorError};
use crate::verify::VerifyError;

/// Step-count reference data from the published comparison of these selector
/// families on a 300-step photovoltaic day (documentation targets only, never
/// asserted: they depend on an unpublished weather profile and noise
/// realization). Off-optimum step counts: uP&O 92, standard P&O 172,
/// fixed-horizon uP&O 122 (run at lambda = 0.88), highest expected
/// improvement 144, Thompson sampling 149.
pub mod reference_data {
    pub const UPO_STEPS_OFF: u64 = 92;
    pub const STANDARD_PO_STEPS_OFF: u64 = 172;
    pub const FIXED_HORIZON_UPO_STEPS_OFF: u64 = 122;
    pub const FIXED_HORIZON_UPO_LAMBDA: f64 = 0.88;
    pub const HEI_STEPS_OFF: u64 = 144;
    pub const THOMPSON_STEPS_OFF: u64 = 149;
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Selector(#[from] SelectorError),
    #[error(transparent)]
    Pv(#[from] PvError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error("trace parse error at line {line}: {message}")]
    TraceParse { line: usize, message: String },
    #[error("traces are not comparable: {0}")]
    MismatchedTraces(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// An experiment with the seed-independent parts (objective truth, oracle
/// path, reference totals) prepared once, so seed sweeps only redo the runs.
#[derive(Debug, Clone)]
pub struct PreparedExperiment {
    config: ExperimentConfig,
    objective: Objective,
    oracle: Vec<i64>,
    oracle_total: f64,
    best_constant_total: f64,
}

impl PreparedExperiment {
    pub fn new(config: &ExperimentConfig) -> Result<Self, HarnessError> {
        config.validate()?;
        let objective = build_objective(config, config.seed)?;
        let horizon = config.horizon as usize;
        let (lo, hi) = (config.oracle_lo, config.oracle_hi);
        let oracle = map_indexed(horizon, |k| objective.true_maximizer(k as u64, lo, hi))
            .into_iter()
            .collect::<Result<Vec<i64>, ObjectiveError>>()?;
        let oracle_total: f64 =
            oracle.iter().enumerate().map(|(k, &i)| objective.truth_at_index(k as u64, i)).sum();
        let width = (hi - lo + 1) as usize;
        let best_constant_total = map_indexed(width, |j| {
            let i = lo + j as i64;
            (0..horizon).map(|k| objective.truth_at_index(k as u64, i)).sum::<f64>()
        })
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
        Ok(Self {
            config: config.clone(),
            objective,
            oracle,
            oracle_total,
            best_constant_total,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn objective(&self) -> &Objective {
        &self.objective
    }

    pub fn oracle(&self) -> &[i64] {
        &self.oracle
    }

    /// Run every configured selector under the noise realization of `seed`.
    /// Selector runs are independent (each owns its state and sees the same
    /// k-indexed noise), so they execute in parallel.
    pub fn run_with_seed(&self, seed: u64) -> Result<Vec<RunTrace>, HarnessError> {
        let objective = self.objective.with_seed(seed);
        let selectors = &self.config.selectors;
        map_indexed(selectors.len(), |s| {
            let sc = selectors[s];
            let name = sc.kind.name().to_string();
            let decision_seed = splitmix64(seed ^ fnv1a(&name));
            let mut engine = SelectorEngine::new(
                &sc,
                self.config.grid,
                self.config.u0_index,
                self.config.u1_direction,
                decision_seed,
            )?;
            let mut steps = Vec::with_capacity(self.config.horizon as usize);
            for k in 0..self.config.horizon {
                let iota = engine.current_index();
                let (y, decision) = engine.step(&objective, k)?;
                steps.push(TraceStep {
                    k,
                    iota,
                    u: self.config.grid.input(iota),
                    y,
                    f_true: objective.truth_at_index(k, iota),
                    iota_star: self.oracle[k as usize],
                    case: decision.case.tag().to_string(),
                    values: decision.values,
                });
            }
            Ok(RunTrace {
                selector: name,
                seed,
                oracle_total: self.oracle_total,
                best_constant_total: self.best_constant_total,
                steps,
            })
        })
        .into_iter()
        .collect()
    }
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf29ce484222325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100000001b3))
}

/// Build the configured objective with the given noise seed.
pub fn build_objective(config: &ExperimentConfig, seed: u64) -> Result<Objective, HarnessError> {
    let obj = match &config.objective {
        ObjectiveSpec::PvDay { params, profile } => {
            let obj =
                day_objective(*params, *profile, config.grid, config.noise_scale, seed)?;
            // day_objective fixes Gaussian noise; rebuild for bounded mode.
            match config.noise_kind {
                crate::objective::NoiseKind::Gaussian => obj,
                kind => Objective::new(
                    config.grid,
                    std::sync::Arc::new({
                        let obj = obj.clone();
                        move |k, u| obj.truth(k, u)
                    }),
                    config.noise_scale,
                    kind,
                    seed,
                )?,
            }
        }
        ObjectiveSpec::Parabola { curvature, center } => Objective::parabola(
            config.grid,
            *curvature,
            *center,
            config.noise_scale,
            config.noise_kind,
            seed,
        )?,
        ObjectiveSpec::DriftingParabola { curvature, center, rate } => {
            Objective::drifting_parabola(
                config.grid,
                *curvature,
                *center,
                *rate,
                config.noise_scale,
                config.noise_kind,
                seed,
            )?
        }
        ObjectiveSpec::BreathingParabola { curvature, center, amplitude, period } => {
            Objective::breathing_parabola(
                config.grid,
                *curvature,
                *center,
                *amplitude,
                *period,
                config.noise_scale,
                config.noise_kind,
                seed,
            )?
        }
    };
    Ok(obj)
}

/// Result of one experiment: the traces and their metrics, in selector order.
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub traces: Vec<RunTrace>,
    pub metrics: Vec<Metrics>,
}

/// Run the configured experiment once.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult, HarnessError> {
    let prepared = PreparedExperiment::new(config)?;
    let traces = prepared.run_with_seed(config.seed)?;
    let metrics = compute_metrics(&traces)?;
    Ok(ExperimentResult { traces, metrics })
}

/// Run the experiment once per seed (in parallel with the default feature).
pub fn seed_sweep(
    config: &ExperimentConfig,
    seeds: &[u64],
) -> Result<Vec<ExperimentResult>, HarnessError> {
    let prepared = PreparedExperiment::new(config)?;
    map_indexed(seeds.len(), |i| {
        let traces = prepared.run_with_seed(seeds[i])?;
        let metrics = compute_metrics(&traces)?;
        Ok(ExperimentResult { traces, metrics })
    })
    .into_iter()
    .collect()
}

/// Sequential twin of [`seed_sweep`] used by the benchmark comparison.
pub fn seed_sweep_sequential(
    config: &ExperimentConfig,
    seeds: &[u64],
) -> Result<Vec<ExperimentResult>, HarnessError> {
    let prepared = PreparedExperiment::new(config)?;
    let mut results = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let traces = prepared.run_with_seed(seed)?;
        let metrics = compute_metrics(&traces)?;
        results.push(ExperimentResult { traces, metrics });
    }
    Ok(results)
}

/// Write each trace as `trace_<selector>.csv` into `dir`.
pub fn write_traces(dir: &Path, traces: &[RunTrace]) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir)?;
    for t in traces {
        let path = dir.join(format!("trace_{}.csv", t.selector));
        std::fs::write(path, t.to_csv())?;
    }
    Ok(())
}

/// Emit `(k, u, value)` rows over the oracle interval for the requested time
/// steps; with no steps requested only the header appears.
pub fn export_curves(
    objective: &Objective,
    ks: &[u64],
    lo: i64,
    hi: i64,
    out: &mut dyn Write,
) -> Result<(), HarnessError> {
    writeln!(out, "k,u,value")?;
    for &k in ks {
        for i in lo..=hi {
            let u = objective.grid().input(i);
            writeln!(out, "{},{},{}", k, u, objective.truth(k, u))?;
        }
    }
    Ok(())
}

/// Render a human-readable metrics table.
pub fn format_metrics(metrics: &[Metrics]) -> String {
    let mut out = String::new();
    out.push_str(
        "selector      steps_off  perturbations  total_value      %of_oracle  vs_const%  vs_po%\n",
    );
    for m in metrics {
        let po = m
            .gain_vs_standard_po_pct
            .map(|g| format!("{g:+.2}"))
            .unwrap_or_else(|| "-".into());
        out.push_str(&format!(
            "{:<13} {:>9} {:>14} {:>16.4} {:>11.2} {:>10.2} {:>7}\n",
            m.selector,
            m.steps_off_optimum,
            m.perturbation_count,
            m.total_value,
            m.pct_of_oracle,
            m.gain_vs_best_constant_pct,
            po
        ));
    }
    out
}
