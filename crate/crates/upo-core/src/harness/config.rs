//! Flat key/value experiment configuration with dotted sections. The format
//! is plain text (`key = value`, `#` comments), parsed with line-level
//! diagnostics; defaults reproduce the photovoltaic day scenario.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::grid::InputGrid;
use crate::objective::NoiseKind;
use crate::pv::{DayProfile, PvParams};
use crate::selectors::{SelectorConfig, SelectorKind};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("config validation failed: {0}")]
    Validation(String),
    #[error("failed to read config: {0}")]
    Io(#[from] std::io::Error),
}

/// Which truth function an experiment runs against.
#[derive(Debug, Clone, PartialEq)]
pub enum ObjectiveSpec {
    PvDay { params: PvParams, profile: DayProfile },
    Parabola { curvature: f64, center: f64 },
    DriftingParabola { curvature: f64, center: f64, rate: f64 },
    BreathingParabola { curvature: f64, center: f64, amplitude: f64, period: f64 },
}

/// A full experiment description: objective, grid, horizon, initialization,
/// seed and the selectors to run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub objective: ObjectiveSpec,
    pub noise_scale: f64,
    pub noise_kind: NoiseKind,
    pub grid: InputGrid,
    pub horizon: u64,
    pub seed: u64,
    pub u0_index: i64,
    pub u1_direction: i8,
    pub selectors: Vec<SelectorConfig>,
    /// Where trace CSVs go (CLI `--out` overrides).
    pub out_dir: Option<PathBuf>,
    /// Index interval the evaluation oracle scans.
    pub oracle_lo: i64,
    pub oracle_hi: i64,
    /// Tuning of the `constants` report.
    pub constants_tau: f64,
    pub constants_nu_star: f64,
    pub constants_k0: u64,
    pub constants_horizon: u64,
}

impl Default for ExperimentConfig {
    /// The default scenario: photovoltaic day, 19-point duty-cycle grid,
    /// noise scale 5, horizon 300, all four selectors with their standard
    /// tunings, start at the grid midpoint probing upward.
    fn default() -> Self {
        Self {
            objective: ObjectiveSpec::PvDay {
                params: PvParams::default(),
                profile: DayProfile::default(),
            },
            noise_scale: 5.0,
            noise_kind: NoiseKind::Gaussian,
            grid: InputGrid::bounded(0.05, 1, 19).expect("static grid"),
            horizon: 300,
            seed: 1,
            u0_index: 5,
            u1_direction: 1,
            selectors: vec![
                SelectorConfig::defaults_for(SelectorKind::Upo),
                SelectorConfig::defaults_for(SelectorKind::StandardPo),
                SelectorConfig::defaults_for(SelectorKind::Hei),
                SelectorConfig::defaults_for(SelectorKind::Thompson),
            ],
            out_dir: None,
            oracle_lo: 1,
            oracle_hi: 19,
            constants_tau: 1.0,
            constants_nu_star: 3.0,
            constants_k0: 1,
            constants_horizon: 300,
        }
    }
}

/// Parsed key/value file: all entries with their 1-based line numbers.
struct KvFile {
    entries: BTreeMap<String, (String, usize)>,
}

impl KvFile {
    fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Parse {
                line: line_no,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if let Some((_, first)) = entries.get(&key) {
                return Err(ConfigError::Parse {
                    line: line_no,
                    message: format!("duplicate key `{key}` (first set on line {first})"),
                });
            }
            entries.insert(key, (value, line_no));
        }
        Ok(Self { entries })
    }

    fn take(&mut self, key: &str) -> Option<(String, usize)> {
        self.entries.remove(key)
    }

    fn take_parsed<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        match self.take(key) {
            None => Ok(None),
            Some((value, line)) => value.parse::<T>().map(Some).map_err(|e| ConfigError::Parse {
                line,
                message: format!("key `{key}`: {e}"),
            }),
        }
    }

    fn finish(self) -> Result<(), ConfigError> {
        if let Some((key, (_, line))) = self.entries.into_iter().next() {
            return Err(ConfigError::Parse { line, message: format!("unknown key `{key}`") });
        }
        Ok(())
    }
}

macro_rules! set_if {
    ($kv:expr, $key:expr, $slot:expr) => {
        if let Some(v) = $kv.take_parsed($key)? {
            $slot = v;
        }
    };
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        Self::from_str_cfg(&std::fs::read_to_string(path)?)
    }

    /// Parse a config text; unspecified keys keep their defaults.
    pub fn from_str_cfg(text: &str) -> Result<Self, ConfigError> {
        let mut kv = KvFile::parse(text)?;
        let mut cfg = ExperimentConfig::default();

        // Grid first: other sections depend on it. The default is the bounded
        // 19-point duty-cycle grid; `grid.bounded = false` opts out (an
        // explicit oracle interval is then required).
        let mut spacing = 0.05;
        let mut bounded = true;
        let mut min_index = 1i64;
        let mut max_index = 19i64;
        set_if!(kv, "grid.spacing", spacing);
        set_if!(kv, "grid.bounded", bounded);
        set_if!(kv, "grid.min_index", min_index);
        set_if!(kv, "grid.max_index", max_index);
        cfg.grid = if bounded {
            InputGrid::bounded(spacing, min_index, max_index)
                .map_err(|e| ConfigError::Validation(e.to_string()))?
        } else {
            InputGrid::new(spacing).map_err(|e| ConfigError::Validation(e.to_string()))?
        };

        // Objective family.
        let kind = kv.take("objective.kind").map(|(v, _)| v).unwrap_or_else(|| "pv-day".into());
        set_if!(kv, "objective.rho", cfg.noise_scale);
        if let Some((noise, line)) = kv.take("objective.noise") {
            cfg.noise_kind = match noise.as_str() {
                "gaussian" => NoiseKind::Gaussian,
                "bounded" => NoiseKind::Bounded,
                other => {
                    return Err(ConfigError::Parse {
                        line,
                        message: format!("objective.noise must be gaussian|bounded, got `{other}`"),
                    })
                }
            };
        }
        let mut curvature = 2.0;
        let mut center = 0.0;
        let mut rate = 0.01;
        let mut amplitude = 0.5;
        let mut period = 100.0;
        set_if!(kv, "objective.curvature", curvature);
        set_if!(kv, "objective.center", center);
        set_if!(kv, "objective.drift_rate", rate);
        set_if!(kv, "objective.amplitude", amplitude);
        set_if!(kv, "objective.period", period);
        let mut pv_params = PvParams::default();
        set_if!(kv, "pv.t_ref", pv_params.t_ref);
        set_if!(kv, "pv.i_sc_ref", pv_params.i_sc_ref);
        set_if!(kv, "pv.i_sat_ref", pv_params.i_sat_ref);
        set_if!(kv, "pv.k_i", pv_params.k_i);
        set_if!(kv, "pv.ideality", pv_params.ideality);
        set_if!(kv, "pv.e_gap_ev", pv_params.e_gap_ev);
        set_if!(kv, "pv.k_boltzmann", pv_params.k_boltzmann);
        set_if!(kv, "pv.q_electron", pv_params.q_electron);
        set_if!(kv, "pv.n_series", pv_params.n_series);
        set_if!(kv, "pv.r_series", pv_params.r_series);
        set_if!(kv, "pv.r_parallel", pv_params.r_parallel);
        set_if!(kv, "pv.c_conv", pv_params.c_conv);
        set_if!(kv, "pv.l_conv", pv_params.l_conv);
        set_if!(kv, "pv.r_load", pv_params.r_load);
        let mut profile = DayProfile::default();
        set_if!(kv, "pv.horizon", profile.horizon);
        set_if!(kv, "pv.s_peak", profile.s_peak);
        set_if!(kv, "pv.s_min", profile.s_min);
        set_if!(kv, "pv.t_base", profile.t_base);
        set_if!(kv, "pv.t_delta", profile.t_delta);
        set_if!(kv, "pv.p_s", profile.p_s);
        set_if!(kv, "pv.p_t", profile.p_t);
        cfg.objective = match kind.as_str() {
            "pv-day" => ObjectiveSpec::PvDay { params: pv_params, profile },
            "parabola" => ObjectiveSpec::Parabola { curvature, center },
            "drifting-parabola" => ObjectiveSpec::DriftingParabola { curvature, center, rate },
            "breathing-parabola" => {
                ObjectiveSpec::BreathingParabola { curvature, center, amplitude, period }
            }
            other => {
                return Err(ConfigError::Validation(format!(
                    "unknown objective.kind `{other}` (expected pv-day, parabola, \
                     drifting-parabola or breathing-parabola)"
                )))
            }
        };

        // Run block. The pv-day scenario starts dawn-side at low duty, the
        // way a controller would ramp up in the morning; synthetic
        // objectives start at the grid midpoint.
        set_if!(kv, "run.horizon", cfg.horizon);
        set_if!(kv, "run.seed", cfg.seed);
        cfg.u0_index = match cfg.objective {
            ObjectiveSpec::PvDay { .. } => 5,
            _ => cfg.grid.midpoint_index(),
        };
        set_if!(kv, "run.u0_index", cfg.u0_index);
        set_if!(kv, "run.u1_direction", cfg.u1_direction);
        if let Some((dir, _)) = kv.take("run.out_dir") {
            cfg.out_dir = Some(PathBuf::from(dir));
        }

        // Selector list and per-selector tunings.
        let list = kv
            .take("run.selectors")
            .map(|(v, _)| v)
            .unwrap_or_else(|| "upo,standard-po,hei,thompson".into());
        let mut selectors = Vec::new();
        for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let kind = SelectorKind::from_name(name).ok_or_else(|| {
                ConfigError::Validation(format!("unknown selector `{name}`"))
            })?;
            let mut sc = SelectorConfig::defaults_for(kind);
            sc.rho = cfg.noise_scale.max(1e-9);
            let prefix = match kind {
                SelectorKind::Upo => "upo",
                SelectorKind::StandardPo => "po",
                SelectorKind::Hei => "hei",
                SelectorKind::Thompson => "thompson",
            };
            set_if!(kv, &format!("{prefix}.lambda")[..], sc.lambda);
            set_if!(kv, &format!("{prefix}.m")[..], sc.order);
            set_if!(kv, &format!("{prefix}.rho")[..], sc.rho);
            set_if!(kv, &format!("{prefix}.tau")[..], sc.tau);
            set_if!(kv, &format!("{prefix}.nu")[..], sc.nu);
            set_if!(kv, &format!("{prefix}.alpha")[..], sc.alpha);
            set_if!(kv, &format!("{prefix}.variance_floor_phi")[..], sc.variance_floor_phi);
            selectors.push(sc);
        }
        cfg.selectors = selectors;

        // Oracle interval defaults to the grid bounds.
        match cfg.grid.bounds() {
            Some((lo, hi)) => {
                cfg.oracle_lo = lo;
                cfg.oracle_hi = hi;
            }
            None => {
                cfg.oracle_lo = 0;
                cfg.oracle_hi = 0;
            }
        }
        set_if!(kv, "oracle.min_index", cfg.oracle_lo);
        set_if!(kv, "oracle.max_index", cfg.oracle_hi);

        // Constants-report block.
        cfg.constants_tau = cfg
            .selectors
            .iter()
            .find(|s| s.kind == SelectorKind::Upo)
            .map(|s| s.tau)
            .unwrap_or(cfg.constants_tau);
        cfg.constants_nu_star = cfg
            .selectors
            .iter()
            .find(|s| s.kind == SelectorKind::Upo)
            .map(|s| s.nu)
            .unwrap_or(cfg.constants_nu_star);
        cfg.constants_horizon = cfg.horizon;
        set_if!(kv, "constants.tau", cfg.constants_tau);
        set_if!(kv, "constants.nu_star", cfg.constants_nu_star);
        set_if!(kv, "constants.k0", cfg.constants_k0);
        set_if!(kv, "constants.horizon", cfg.constants_horizon);

        kv.finish()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.horizon < 2 {
            return Err(ConfigError::Validation(format!(
                "run.horizon must be at least 2, got {}",
                self.horizon
            )));
        }
        if self.u1_direction != 1 && self.u1_direction != -1 {
            return Err(ConfigError::Validation(format!(
                "run.u1_direction must be +1 or -1, got {}",
                self.u1_direction
            )));
        }
        if self.selectors.is_empty() {
            return Err(ConfigError::Validation("run.selectors is empty".into()));
        }
        for (i, s) in self.selectors.iter().enumerate() {
            s.validate().map_err(|e| ConfigError::Validation(e.to_string()))?;
            if self.selectors[..i].iter().any(|prev| prev.kind == s.kind) {
                return Err(ConfigError::Validation(format!(
                    "selector `{}` listed more than once",
                    s.kind.name()
                )));
            }
        }
        if self.oracle_lo >= self.oracle_hi {
            return Err(ConfigError::Validation(format!(
                "oracle interval [{}, {}] is empty (set oracle.min_index/max_index for \
                 unbounded grids)",
                self.oracle_lo, self.oracle_hi
            )));
        }
        if !self.grid.contains(self.u0_index) {
            return Err(ConfigError::Validation(format!(
                "run.u0_index {} lies outside the grid bounds",
                self.u0_index
            )));
        }
        if let ObjectiveSpec::PvDay { params, .. } = &self.objective {
            params.validate().map_err(|e| ConfigError::Validation(e.to_string()))?;
        }
        if !(self.noise_scale >= 0.0) {
            return Err(ConfigError::Validation(format!(
                "objective.rho must be nonnegative, got {}",
                self.noise_scale
            )));
        }
        Ok(())
    }
}
