//! Input selection: the uncertainty-based perturb-and-observe rule, the
//! classic perturb-and-observe baseline, and two bandit-style baselines
//! (highest expected improvement, Thompson sampling) driven by the same
//! belief model. All selectors move at most one grid step per time step.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::belief::{BeliefError, BeliefState, WeightingOperator};
use crate::grid::InputGrid;
use crate::local::{solve_local, LocalModel, LocalModelError, LocalModelParams};
use crate::math::{normal_cdf, normal_pdf, standard_normal};
use crate::objective::{Objective, ObjectiveError};

#[derive(Debug, Error)]
pub enum SelectorError {
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    LocalModel(#[from] LocalModelError),
    #[error(transparent)]
    Belief(#[from] BeliefError),
    #[error("invalid selector configuration: {0}")]
    InvalidConfig(String),
    #[error("engine stepped out of order: expected k={expected}, got k={got}")]
    OutOfOrderStep { expected: u64, got: u64 },
}

/// Which selection rule to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SelectorKind {
    Upo,
    StandardPo,
    Hei,
    Thompson,
}

impl SelectorKind {
    pub fn name(&self) -> &'static str {
        match self {
            SelectorKind::Upo => "upo",
            SelectorKind::StandardPo => "standard-po",
            SelectorKind::Hei => "hei",
            SelectorKind::Thompson => "thompson",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "upo" => Some(SelectorKind::Upo),
            "standard-po" | "po" => Some(SelectorKind::StandardPo),
            "hei" => Some(SelectorKind::Hei),
            "thompson" => Some(SelectorKind::Thompson),
            _ => None,
        }
    }
}

/// Hyperparameters of a selector run. The belief parameters (lambda, order,
/// rho) also apply to the bandit baselines; standard P&O ignores everything.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectorConfig {
    pub kind: SelectorKind,
    /// Forced-perturbation band of the uP&O rule.
    pub tau: f64,
    /// Bend tolerance of the local model.
    pub nu: f64,
    /// Exploration offset of highest expected improvement.
    pub alpha: f64,
    /// Forgetting factor of the belief.
    pub lambda: f64,
    /// Polynomial order M of the weight family.
    pub order: usize,
    /// Assumed measurement noise scale.
    pub rho: f64,
    /// Weight substituted for never-measured points in the bandit baselines
    /// (their variance becomes rho^2 / variance_floor_phi).
    pub variance_floor_phi: f64,
}

impl SelectorConfig {
    /// Defaults per selector kind (uP&O: lambda = e^-0.5, nu = 3, M = 1,
    /// rho = 5; bandits: lambda = 0.95, M = 0).
    pub fn defaults_for(kind: SelectorKind) -> Self {
        let base = Self {
            kind,
            tau: 1.0,
            nu: 3.0,
            alpha: 1e-4,
            lambda: (-0.5f64).exp(),
            order: 1,
            rho: 5.0,
            variance_floor_phi: 0.05,
        };
        match kind {
            SelectorKind::Upo | SelectorKind::StandardPo => base,
            SelectorKind::Hei | SelectorKind::Thompson => {
                Self { lambda: 0.95, order: 0, ..base }
            }
        }
    }

    pub fn validate(&self) -> Result<(), SelectorError> {
        let bad = |msg: String| Err(SelectorError::InvalidConfig(msg));
        if !(self.tau > 0.0) {
            return bad(format!("tau must be positive, got {}", self.tau));
        }
        if !(self.nu > 0.0) {
            return bad(format!("nu must be positive, got {}", self.nu));
        }
        if !(self.alpha >= 0.0) {
            return bad(format!("alpha must be nonnegative, got {}", self.alpha));
        }
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return bad(format!("lambda must lie in (0,1), got {}", self.lambda));
        }
        if !(self.rho > 0.0) {
            return bad(format!("rho must be positive, got {}", self.rho));
        }
        if !(self.variance_floor_phi > 0.0) {
            return bad(format!(
                "variance_floor_phi must be positive, got {}",
                self.variance_floor_phi
            ));
        }
        Ok(())
    }
}

/// What a selector decided at one time step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DecisionCase {
    /// The prescribed second input of the initialization.
    Init,
    /// Forced probe of the stale left neighbor.
    ForcedLeft,
    /// Forced probe of the stale right neighbor.
    ForcedRight,
    ArgmaxStay,
    ArgmaxLeft,
    ArgmaxRight,
    /// P&O kept its direction (value did not decrease).
    PoKeep,
    /// P&O reversed (value decreased).
    PoReverse,
    HeiLeft,
    HeiStay,
    HeiRight,
    TsLeft,
    TsStay,
    TsRight,
}

impl DecisionCase {
    pub fn tag(&self) -> &'static str {
        match self {
            DecisionCase::Init => "init",
            DecisionCase::ForcedLeft => "forced_left",
            DecisionCase::ForcedRight => "forced_right",
            DecisionCase::ArgmaxStay => "argmax_stay",
            DecisionCase::ArgmaxLeft => "argmax_left",
            DecisionCase::ArgmaxRight => "argmax_right",
            DecisionCase::PoKeep => "po_keep",
            DecisionCase::PoReverse => "po_reverse",
            DecisionCase::HeiLeft => "hei_left",
            DecisionCase::HeiStay => "hei_stay",
            DecisionCase::HeiRight => "hei_right",
            DecisionCase::TsLeft => "ts_left",
            DecisionCase::TsStay => "ts_stay",
            DecisionCase::TsRight => "ts_right",
        }
    }
}

/// One selection outcome: the next grid index, the rule branch taken, and the
/// three per-candidate values the rule compared (local-model h, expected
/// improvements, or Thompson samples; NaN where a selector has no triple).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub next_index: i64,
    pub case: DecisionCase,
    pub values: [f64; 3],
}

/// Argmax over (left, stay, right) candidate values preferring, on exact
/// ties, the center, then the less recently measured neighbor, then left.
fn argmax_candidates(values: &[f64; 3], p: &[i64; 3]) -> usize {
    let neighbor_order: [usize; 2] = if p[2] < p[0] { [2, 0] } else { [0, 2] };
    let mut best = 1usize;
    for c in neighbor_order {
        if values[c] > values[best] {
            best = c;
        }
    }
    best
}

/// The uncertainty-based perturb-and-observe rule.
///
/// `p` holds the last-measured times of (left, center, right); `-1` marks a
/// never-measured point. Forced probes fire when the center only barely beats
/// the fresher neighbor (gap within `tau`) and target the staler side;
/// otherwise the argmax of the local model wins.
pub fn upo_select(current: i64, local: &LocalModel, p: &[i64; 3], tau: f64) -> Decision {
    let gap_right = local.h[1] - local.h[2];
    let gap_left = local.h[1] - local.h[0];
    let (next, case) = if p[0] < p[2] && (0.0..=tau).contains(&gap_right) {
        (current - 1, DecisionCase::ForcedLeft)
    } else if p[0] > p[2] && (0.0..=tau).contains(&gap_left) {
        (current + 1, DecisionCase::ForcedRight)
    } else {
        match argmax_candidates(&local.h, p) {
            0 => (current - 1, DecisionCase::ArgmaxLeft),
            2 => (current + 1, DecisionCase::ArgmaxRight),
            _ => (current, DecisionCase::ArgmaxStay),
        }
    };
    Decision { next_index: next, case, values: local.h }
}

/// One classic perturb-and-observe update: keep the direction while the
/// measured value does not decrease, reverse otherwise, always move one cell.
/// Returns the new direction and the next grid index.
pub fn standard_po_step(y_prev: f64, direction: i8, current: i64, y: f64) -> (i8, i64) {
    let next_dir = if y >= y_prev { direction } else { -direction };
    (next_dir, current + next_dir as i64)
}

/// Per-candidate statistics fed to the bandit baselines: `None` marks a
/// candidate that is out of bounds and excluded from the choice.
pub type CandidateStats = [Option<(f64, f64)>; 3];

/// Highest expected improvement over the three candidates, with exploration
/// offset `alpha`. The improvement is measured against the center's mean.
pub fn hei_select(current: i64, stats: &CandidateStats, alpha: f64, p: &[i64; 3]) -> Decision {
    let center_mean = stats[1].expect("center candidate always exists").0;
    let mut scores = [f64::NEG_INFINITY; 3];
    for (j, s) in stats.iter().enumerate() {
        if let Some((mean, variance)) = s {
            let sd = variance.sqrt();
            let gain = mean - center_mean - alpha;
            let z = gain / sd;
            scores[j] = gain * normal_cdf(z) + sd * normal_pdf(z);
        }
    }
    let best = argmax_candidates(&scores, p);
    let (next, case) = match best {
        0 => (current - 1, DecisionCase::HeiLeft),
        2 => (current + 1, DecisionCase::HeiRight),
        _ => (current, DecisionCase::HeiStay),
    };
    Decision { next_index: next, case, values: scores }
}

/// Thompson sampling: one Gaussian draw per candidate, argmax of the draws.
/// Draws happen in left-center-right order, so the outcome is a pure
/// function of the RNG state.
pub fn thompson_select<R: Rng + ?Sized>(
    current: i64,
    stats: &CandidateStats,
    rng: &mut R,
    p: &[i64; 3],
) -> Decision {
    let mut samples = [f64::NEG_INFINITY; 3];
    for (j, s) in stats.iter().enumerate() {
        if let Some((mean, variance)) = s {
            samples[j] = mean + variance.sqrt() * standard_normal(rng);
        }
    }
    let best = argmax_candidates(&samples, p);
    let (next, case) = match best {
        0 => (current - 1, DecisionCase::TsLeft),
        2 => (current + 1, DecisionCase::TsRight),
        _ => (current, DecisionCase::TsStay),
    };
    Decision { next_index: next, case, values: samples }
}

/// The uP&O optimizer: belief + local model + selection rule, driven one
/// measurement per time step.
#[derive(Debug, Clone)]
pub struct UpoEngine {
    belief: BeliefState,
    grid: InputGrid,
    params: LocalModelParams,
    tau: f64,
    current: i64,
    init_direction: i8,
    steps_taken: u64,
}

impl UpoEngine {
    pub fn new(
        config: &SelectorConfig,
        grid: InputGrid,
        u0_index: i64,
        u1_direction: i8,
    ) -> Result<Self, SelectorError> {
        config.validate()?;
        let op = WeightingOperator::new(config.lambda, config.order)?;
        let params = LocalModelParams::new(config.nu, config.rho)
            .map_err(|e| SelectorError::InvalidConfig(e.to_string()))?;
        Ok(Self {
            belief: BeliefState::new(op, config.rho),
            grid,
            params,
            tau: config.tau,
            current: grid.clamp(u0_index),
            init_direction: if u1_direction >= 0 { 1 } else { -1 },
            steps_taken: 0,
        })
    }

    pub fn current_index(&self) -> i64 {
        self.current
    }

    pub fn belief(&self) -> &BeliefState {
        &self.belief
    }

    fn neighbors(&self) -> (i64, i64) {
        (self.current - 1, self.current + 1)
    }

    /// Execute one full iteration at time `k`: measure, update the belief,
    /// solve the local model, decide the next input. Steps must be called
    /// with consecutive `k` starting at zero.
    pub fn step(&mut self, objective: &Objective, k: u64) -> Result<(f64, Decision), SelectorError> {
        if k != self.steps_taken {
            return Err(SelectorError::OutOfOrderStep { expected: self.steps_taken, got: k });
        }
        let y = objective.measure(k, self.current)?;
        self.belief.record(k, self.current, y);
        self.steps_taken += 1;

        let decision = if k == 0 {
            let next = init_move(&self.grid, self.current, self.init_direction);
            Decision { next_index: next, case: DecisionCase::Init, values: [f64::NAN; 3] }
        } else {
            let (left, right) = self.neighbors();
            let estimates = [
                self.grid.contains(left).then(|| self.belief.estimate(left)).flatten(),
                self.belief.estimate(self.current),
                self.grid.contains(right).then(|| self.belief.estimate(right)).flatten(),
            ];
            let p = [
                if self.grid.contains(left) { self.belief.last_measured(left) } else { -1 },
                self.belief.last_measured(self.current),
                if self.grid.contains(right) { self.belief.last_measured(right) } else { -1 },
            ];
            let local = solve_local(self.current, &estimates, self.params)?;
            let mut d = upo_select(self.current, &local, &p, self.tau);
            // A forced probe pointing out of bounds redirects to the only
            // available neighbor; anything else clamps to the boundary.
            match d.case {
                DecisionCase::ForcedLeft if !self.grid.contains(d.next_index) => {
                    d.next_index = self.grid.clamp(self.current + 1);
                    d.case = DecisionCase::ForcedRight;
                }
                DecisionCase::ForcedRight if !self.grid.contains(d.next_index) => {
                    d.next_index = self.grid.clamp(self.current - 1);
                    d.case = DecisionCase::ForcedLeft;
                }
                _ => d.next_index = self.grid.clamp(d.next_index),
            }
            d
        };
        self.current = decision.next_index;
        Ok((y, decision))
    }
}

fn init_move(grid: &InputGrid, u0: i64, direction: i8) -> i64 {
    let target = u0 + direction as i64;
    if grid.contains(target) {
        target
    } else {
        grid.clamp(u0 - direction as i64)
    }
}

/// Classic P&O engine.
#[derive(Debug, Clone)]
pub struct StandardPoEngine {
    grid: InputGrid,
    current: i64,
    direction: i8,
    y_prev: f64,
    steps_taken: u64,
}

impl StandardPoEngine {
    pub fn new(grid: InputGrid, u0_index: i64, u1_direction: i8) -> Self {
        Self {
            grid,
            current: grid.clamp(u0_index),
            direction: if u1_direction >= 0 { 1 } else { -1 },
            y_prev: f64::NAN,
            steps_taken: 0,
        }
    }

    pub fn current_index(&self) -> i64 {
        self.current
    }

    pub fn step(&mut self, objective: &Objective, k: u64) -> Result<(f64, Decision), SelectorError> {
        if k != self.steps_taken {
            return Err(SelectorError::OutOfOrderStep { expected: self.steps_taken, got: k });
        }
        let y = objective.measure(k, self.current)?;
        self.steps_taken += 1;
        let decision = if k == 0 {
            let next = init_move(&self.grid, self.current, self.direction);
            self.direction = if next >= self.current { 1 } else { -1 };
            Decision { next_index: next, case: DecisionCase::Init, values: [f64::NAN; 3] }
        } else {
            let (next_dir, next) = standard_po_step(self.y_prev, self.direction, self.current, y);
            let case =
                if next_dir == self.direction { DecisionCase::PoKeep } else { DecisionCase::PoReverse };
            self.direction = next_dir;
            Decision { next_index: self.grid.clamp(next), case, values: [f64::NAN; 3] }
        };
        self.y_prev = y;
        self.current = decision.next_index;
        Ok((y, decision))
    }
}

/// Shared engine for the HEI and Thompson baselines: same belief model, a
/// different pick among the three candidates.
#[derive(Debug, Clone)]
pub struct BanditEngine {
    belief: BeliefState,
    grid: InputGrid,
    kind: SelectorKind,
    alpha: f64,
    rho: f64,
    variance_floor_phi: f64,
    current: i64,
    init_direction: i8,
    steps_taken: u64,
    rng: ChaCha8Rng,
}

impl BanditEngine {
    pub fn new(
        config: &SelectorConfig,
        grid: InputGrid,
        u0_index: i64,
        u1_direction: i8,
        decision_seed: u64,
    ) -> Result<Self, SelectorError> {
        config.validate()?;
        if !matches!(config.kind, SelectorKind::Hei | SelectorKind::Thompson) {
            return Err(SelectorError::InvalidConfig(format!(
                "bandit engine cannot run selector `{}`",
                config.kind.name()
            )));
        }
        let op = WeightingOperator::new(config.lambda, config.order)?;
        Ok(Self {
            belief: BeliefState::new(op, config.rho),
            grid,
            kind: config.kind,
            alpha: config.alpha,
            rho: config.rho,
            variance_floor_phi: config.variance_floor_phi,
            current: grid.clamp(u0_index),
            init_direction: if u1_direction >= 0 { 1 } else { -1 },
            steps_taken: 0,
            rng: ChaCha8Rng::seed_from_u64(decision_seed),
        })
    }

    pub fn current_index(&self) -> i64 {
        self.current
    }

    /// Candidate means/variances with the unmeasured-point substitution:
    /// mean extrapolated through the two measured points, variance set from
    /// the floor weight. Out-of-bounds candidates come back `None`.
    fn candidate_stats(&self) -> Result<CandidateStats, SelectorError> {
        let ids = [self.current - 1, self.current, self.current + 1];
        let raw: Vec<Option<crate::belief::Estimate>> = ids
            .iter()
            .map(|&i| if self.grid.contains(i) { self.belief.estimate(i) } else { None })
            .collect();
        let center = raw[1].ok_or(LocalModelError::CenterUnmeasured)?;
        let floor_variance = self.rho * self.rho / self.variance_floor_phi;
        let mut stats: CandidateStats = [None; 3];
        stats[1] = Some((center.mean, center.variance));
        for (j, other) in [(0usize, 2usize), (2, 0)] {
            if !self.grid.contains(ids[j]) {
                continue;
            }
            stats[j] = match raw[j] {
                Some(e) => Some((e.mean, e.variance)),
                None => {
                    let partner = raw[other].ok_or(LocalModelError::BothNeighborsUnmeasured)?;
                    Some((2.0 * center.mean - partner.mean, floor_variance))
                }
            };
        }
        Ok(stats)
    }

    pub fn step(&mut self, objective: &Objective, k: u64) -> Result<(f64, Decision), SelectorError> {
        if k != self.steps_taken {
            return Err(SelectorError::OutOfOrderStep { expected: self.steps_taken, got: k });
        }
        let y = objective.measure(k, self.current)?;
        self.belief.record(k, self.current, y);
        self.steps_taken += 1;
        let decision = if k == 0 {
            let next = init_move(&self.grid, self.current, self.init_direction);
            Decision { next_index: next, case: DecisionCase::Init, values: [f64::NAN; 3] }
        } else {
            let stats = self.candidate_stats()?;
            let ids = [self.current - 1, self.current, self.current + 1];
            let p = [
                if self.grid.contains(ids[0]) { self.belief.last_measured(ids[0]) } else { -1 },
                self.belief.last_measured(ids[1]),
                if self.grid.contains(ids[2]) { self.belief.last_measured(ids[2]) } else { -1 },
            ];
            let mut d = match self.kind {
                SelectorKind::Hei => hei_select(self.current, &stats, self.alpha, &p),
                SelectorKind::Thompson => {
                    thompson_select(self.current, &stats, &mut self.rng, &p)
                }
                _ => unreachable!("constructor rejects other kinds"),
            };
            d.next_index = self.grid.clamp(d.next_index);
            d
        };
        self.current = decision.next_index;
        Ok((y, decision))
    }
}

/// Any selector behind one `step` interface.
#[derive(Debug, Clone)]
pub enum SelectorEngine {
    Upo(UpoEngine),
    StandardPo(StandardPoEngine),
    Bandit(BanditEngine),
}

impl SelectorEngine {
    pub fn new(
        config: &SelectorConfig,
        grid: InputGrid,
        u0_index: i64,
        u1_direction: i8,
        decision_seed: u64,
    ) -> Result<Self, SelectorError> {
        Ok(match config.kind {
            SelectorKind::Upo => {
                SelectorEngine::Upo(UpoEngine::new(config, grid, u0_index, u1_direction)?)
            }
            SelectorKind::StandardPo => {
                config.validate()?;
                SelectorEngine::StandardPo(StandardPoEngine::new(grid, u0_index, u1_direction))
            }
            SelectorKind::Hei | SelectorKind::Thompson => SelectorEngine::Bandit(
                BanditEngine::new(config, grid, u0_index, u1_direction, decision_seed)?,
            ),
        })
    }

    pub fn current_index(&self) -> i64 {
        match self {
            SelectorEngine::Upo(e) => e.current_index(),
            SelectorEngine::StandardPo(e) => e.current_index(),
            SelectorEngine::Bandit(e) => e.current_index(),
        }
    }

    pub fn step(&mut self, objective: &Objective, k: u64) -> Result<(f64, Decision), SelectorError> {
        match self {
            SelectorEngine::Upo(e) => e.step(objective, k),
            SelectorEngine::StandardPo(e) => e.step(objective, k),
            SelectorEngine::Bandit(e) => e.step(objective, k),
        }
    }
}
