//! Per-grid-point belief about the function value: recursively updated
//! sufficient statistics (xi, phi) whose readouts give the maximum-likelihood
//! mean and a variance that inflates while a point goes unmeasured.
//!
//! The information weight of a measurement of age `a` is
//! `omega = sum_{q<=M} (ln(1/lambda) * a)^q / q! * lambda^a`, and the whole
//! family is generated by powers of one lower-triangular Toeplitz matrix `A`
//! with constant diagonal `lambda`. That gives the recursion
//! `xi <- A xi + b y`, `phi <- A phi + b` for the measured point and a plain
//! decay `A` for everyone else. Decay is applied lazily: each point stores
//! the time it was last touched and `A^age` has the closed form
//! `(A^n)[r][s] = lambda^n (n ln(1/lambda))^{r-s} / (r-s)!`, so a step costs
//! O(1) regardless of how many points exist.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

/// Entries of xi/phi below this magnitude are flushed to zero; a point whose
/// weight vector flushed completely reverts to "never measured" (its variance
/// would be astronomically large anyway).
const FLUSH_THRESHOLD: f64 = 1e-300;

#[derive(Debug, Error, PartialEq)]
pub enum BeliefError {
    #[error("forgetting factor must lie strictly inside (0, 1), got {0}")]
    InvalidLambda(f64),
    #[error("snapshot parse error at line {line}: {message}")]
    Snapshot { line: usize, message: String },
}

/// Weight of a measurement taken at time `j` when predicting time `k`:
/// one polynomial-in-age term of order `q`.
pub fn zeta(lambda: f64, j: u64, k: u64, q: u32) -> Result<f64, BeliefError> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(BeliefError::InvalidLambda(lambda));
    }
    assert!(k >= j, "zeta requires k >= j");
    let age = (k - j) as f64;
    let x = (1.0 / lambda).ln() * age;
    // 0^0 := 1 so that the weight of a fresh measurement is exactly one.
    let mut term = 1.0;
    for m in 1..=q {
        term *= x / m as f64;
    }
    Ok(term * lambda.powf(age))
}

/// Total information weight: sum of `zeta` over orders `0..=m`.
pub fn omega(lambda: f64, m: u32, j: u64, k: u64) -> Result<f64, BeliefError> {
    let mut w = 0.0;
    for q in 0..=m {
        w += zeta(lambda, j, k, q)?;
    }
    Ok(w)
}

/// The decay operator (A, b, c): `A` is lower-triangular Toeplitz with entry
/// `lambda * ln(1/lambda)^{r-s} / (r-s)!` at offset `r-s`, `b` injects a new
/// measurement into order zero, `c` sums the orders.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightingOperator {
    lambda: f64,
    order: usize,
    log_inv_lambda: f64,
}

impl WeightingOperator {
    pub fn new(lambda: f64, order: usize) -> Result<Self, BeliefError> {
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(BeliefError::InvalidLambda(lambda));
        }
        Ok(Self { lambda, order, log_inv_lambda: (1.0 / lambda).ln() })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Polynomial order M; state vectors have length M + 1.
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn state_len(&self) -> usize {
        self.order + 1
    }

    /// Matrix entry of `A^n` at subdiagonal offset `m`:
    /// `lambda^n * (n ln(1/lambda))^m / m!`.
    pub fn power_entry(&self, n: u64, m: usize) -> f64 {
        let x = self.log_inv_lambda * n as f64;
        let mut term = (-x).exp();
        for i in 1..=m {
            term *= x / i as f64;
        }
        term
    }

    /// `A^n v`, flushing underflowed entries to zero. `n = 0` is the identity.
    pub fn apply_power(&self, v: &[f64], n: u64) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.state_len());
        if n == 0 {
            return v.to_vec();
        }
        let len = self.state_len();
        let coeff: Vec<f64> = (0..len).map(|m| self.power_entry(n, m)).collect();
        (0..len)
            .map(|r| {
                let s: f64 = (0..=r).map(|m| coeff[m] * v[r - m]).sum();
                if s.abs() < FLUSH_THRESHOLD {
                    0.0
                } else {
                    s
                }
            })
            .collect()
    }

    /// `c' A v`: the one-step-ahead readout of a state vector.
    pub fn readout(&self, v: &[f64]) -> f64 {
        debug_assert_eq!(v.len(), self.state_len());
        let len = self.state_len();
        let mut acc = 0.0;
        for (s, &vs) in v.iter().enumerate() {
            // Tail sum over ln(1/lambda)^m / m! for m = 0 ..= M - s.
            let mut tail = 1.0;
            let mut term = 1.0;
            for m in 1..=(len - 1 - s) {
                term *= self.log_inv_lambda / m as f64;
                tail += term;
            }
            acc += vs * tail;
        }
        self.lambda * acc
    }
}

/// Readout of the belief at one grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    /// Maximum-likelihood value estimate (a convex combination of past
    /// measurements).
    pub mean: f64,
    /// Variance of the estimate; grows without bound while unmeasured.
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct PointState {
    xi: Vec<f64>,
    phi: Vec<f64>,
    last_measured: i64,
    last_update: u64,
}

impl PointState {
    fn fresh(len: usize) -> Self {
        Self { xi: vec![0.0; len], phi: vec![0.0; len], last_measured: -1, last_update: 0 }
    }

    /// State advanced to `time` without a new measurement; `None` when the
    /// weights have decayed below the flush threshold.
    fn advanced(&self, op: &WeightingOperator, time: u64) -> Option<(Vec<f64>, Vec<f64>)> {
        debug_assert!(time >= self.last_update);
        let age = time - self.last_update;
        let phi = op.apply_power(&self.phi, age);
        if phi.iter().all(|&p| p == 0.0) {
            return None;
        }
        let xi = op.apply_power(&self.xi, age);
        Some((xi, phi))
    }
}

/// Sparse map of point beliefs, single writer. Only visited points exist;
/// everyone decays lazily against a shared clock.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefState {
    op: WeightingOperator,
    rho: f64,
    clock: i64,
    points: BTreeMap<i64, PointState>,
}

impl BeliefState {
    pub fn new(op: WeightingOperator, rho: f64) -> Self {
        assert!(rho > 0.0, "noise scale must be positive");
        Self { op, rho, clock: -1, points: BTreeMap::new() }
    }

    pub fn operator(&self) -> &WeightingOperator {
        &self.op
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Time of the latest recorded measurement, -1 before the first.
    pub fn clock(&self) -> i64 {
        self.clock
    }

    /// Record measurement `y` taken at grid point `index` at time `time`.
    /// All other points decay implicitly. Times must be strictly increasing.
    pub fn record(&mut self, time: u64, index: i64, y: f64) {
        assert!(
            (time as i64) > self.clock,
            "measurements must arrive in strictly increasing time order"
        );
        let len = self.op.state_len();
        let entry = self.points.entry(index).or_insert_with(|| PointState::fresh(len));
        let age = time - entry.last_update;
        let mut xi = self.op.apply_power(&entry.xi, age);
        let mut phi = self.op.apply_power(&entry.phi, age);
        if phi.iter().all(|&p| p == 0.0) {
            // Fully decayed: start over, the old history carries no weight.
            xi.iter_mut().for_each(|v| *v = 0.0);
        }
        xi[0] += y;
        phi[0] += 1.0;
        entry.xi = xi;
        entry.phi = phi;
        entry.last_measured = time as i64;
        entry.last_update = time;
        self.clock = time as i64;
    }

    /// `(c'A xi, c'A phi)` of a point at the current clock; `(0, 0)` for
    /// points never measured or fully decayed.
    pub fn readouts(&self, index: i64) -> (f64, f64) {
        let Some(point) = self.points.get(&index) else {
            return (0.0, 0.0);
        };
        let now = self.clock.max(point.last_update as i64) as u64;
        match point.advanced(&self.op, now) {
            Some((xi, phi)) => (self.op.readout(&xi), self.op.readout(&phi)),
            None => (0.0, 0.0),
        }
    }

    /// Mean/variance belief about the *next* time step at `index`, or `None`
    /// if the point has never been measured (or has been fully forgotten).
    pub fn estimate(&self, index: i64) -> Option<Estimate> {
        let (num, den) = self.readouts(index);
        if den < FLUSH_THRESHOLD {
            return None;
        }
        Some(Estimate { mean: num / den, variance: self.rho * self.rho / den })
    }

    /// Last time `index` was measured, or -1 if never (a fully decayed
    /// history counts as never: no usable information remains).
    pub fn last_measured(&self, index: i64) -> i64 {
        let Some(point) = self.points.get(&index) else {
            return -1;
        };
        let now = self.clock.max(point.last_update as i64) as u64;
        match point.advanced(&self.op, now) {
            Some(_) => point.last_measured,
            None => -1,
        }
    }

    pub fn tracked_points(&self) -> usize {
        self.points.len()
    }

    /// Plain-text snapshot of the full state (shared format with the
    /// experiment harness), restorable with [`BeliefState::restore`].
    pub fn snapshot(&self) -> String {
        let mut out = String::new();
        out.push_str("# upo-state v1\n");
        let _ = writeln!(out, "lambda = {}", self.op.lambda);
        let _ = writeln!(out, "order = {}", self.op.order);
        let _ = writeln!(out, "rho = {}", self.rho);
        let _ = writeln!(out, "clock = {}", self.clock);
        for (index, p) in &self.points {
            let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
            let _ = writeln!(out, "point.{index}.xi = {}", join(&p.xi));
            let _ = writeln!(out, "point.{index}.phi = {}", join(&p.phi));
            let _ = writeln!(out, "point.{index}.last_measured = {}", p.last_measured);
            let _ = writeln!(out, "point.{index}.last_update = {}", p.last_update);
        }
        out
    }

    pub fn restore(text: &str) -> Result<Self, BeliefError> {
        let err = |line: usize, message: &str| BeliefError::Snapshot {
            line,
            message: message.to_string(),
        };
        let mut lambda = None;
        let mut order = None;
        let mut rho = None;
        let mut clock = None;
        let mut raw: BTreeMap<i64, BTreeMap<String, String>> = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line_no = lineno + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(line_no, "expected `key = value`"))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "lambda" => lambda = Some(value.parse::<f64>().map_err(|e| err(line_no, &e.to_string()))?),
                "order" => order = Some(value.parse::<usize>().map_err(|e| err(line_no, &e.to_string()))?),
                "rho" => rho = Some(value.parse::<f64>().map_err(|e| err(line_no, &e.to_string()))?),
                "clock" => clock = Some(value.parse::<i64>().map_err(|e| err(line_no, &e.to_string()))?),
                _ => {
                    let rest = key
                        .strip_prefix("point.")
                        .ok_or_else(|| err(line_no, &format!("unknown key `{key}`")))?;
                    let (idx, field) = rest
                        .split_once('.')
                        .ok_or_else(|| err(line_no, "expected `point.<index>.<field>`"))?;
                    let idx = idx.parse::<i64>().map_err(|e| err(line_no, &e.to_string()))?;
                    raw.entry(idx).or_default().insert(field.to_string(), value.to_string());
                }
            }
        }
        let lambda = lambda.ok_or_else(|| err(0, "missing `lambda`"))?;
        let order = order.ok_or_else(|| err(0, "missing `order`"))?;
        let rho = rho.ok_or_else(|| err(0, "missing `rho`"))?;
        let clock = clock.ok_or_else(|| err(0, "missing `clock`"))?;
        let op = WeightingOperator::new(lambda, order)?;
        let mut points = BTreeMap::new();
        for (idx, fields) in raw {
            let get = |name: &str| {
                fields
                    .get(name)
                    .ok_or_else(|| err(0, &format!("point {idx} missing `{name}`")))
            };
            let parse_vec = |s: &str| -> Result<Vec<f64>, BeliefError> {
                s.split(',')
                    .map(|t| t.trim().parse::<f64>().map_err(|e| err(0, &e.to_string())))
                    .collect()
            };
            let xi = parse_vec(get("xi")?)?;
            let phi = parse_vec(get("phi")?)?;
            if xi.len() != order + 1 || phi.len() != order + 1 {
                return Err(err(0, &format!("point {idx} has wrong state length")));
            }
            let last_measured =
                get("last_measured")?.parse::<i64>().map_err(|e| err(0, &e.to_string()))?;
            let last_update =
                get("last_update")?.parse::<u64>().map_err(|e| err(0, &e.to_string()))?;
            points.insert(idx, PointState { xi, phi, last_measured, last_update });
        }
        Ok(Self { op, rho, clock, points })
    }
}
