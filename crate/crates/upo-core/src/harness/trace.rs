//! Run traces and their fixed CSV schema (`# upo-trace v1`), plus the
//! summary metrics computed from them.

use std::fmt::Write as _;

use super::HarnessError;

/// One time step of one selector run.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub k: u64,
    /// Grid index measured at this step.
    pub iota: i64,
    /// Input value measured at this step.
    pub u: f64,
    /// Noisy measurement.
    pub y: f64,
    /// Noise-free value at the measured input (evaluation only).
    pub f_true: f64,
    /// Oracle maximizer index (evaluation only, never fed to selectors).
    pub iota_star: i64,
    /// Decision-rule branch taken when leaving this step.
    pub case: String,
    /// The three candidate values the rule compared (NaN when absent).
    pub values: [f64; 3],
}

/// A complete selector run with its evaluation references.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub selector: String,
    pub seed: u64,
    /// Total truth value of the per-step oracle input over the horizon.
    pub oracle_total: f64,
    /// Best achievable total with one constant input.
    pub best_constant_total: f64,
    pub steps: Vec<TraceStep>,
}

impl RunTrace {
    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    /// Input-index path of the run.
    pub fn inputs(&self) -> Vec<i64> {
        self.steps.iter().map(|s| s.iota).collect()
    }

    /// Oracle maximizer path of the run.
    pub fn maximizers(&self) -> Vec<i64> {
        self.steps.iter().map(|s| s.iota_star).collect()
    }

    fn fmt_value(v: f64) -> String {
        if v.is_nan() {
            String::new()
        } else {
            v.to_string()
        }
    }

    /// Serialize to the versioned trace CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str("# upo-trace v1\n");
        let _ = writeln!(out, "# selector = {}", self.selector);
        let _ = writeln!(out, "# seed = {}", self.seed);
        let _ = writeln!(out, "# oracle_total = {}", self.oracle_total);
        let _ = writeln!(out, "# best_constant_total = {}", self.best_constant_total);
        out.push_str("k,selector,iota,u,y,f_true,iota_star,case,h_left,h_center,h_right\n");
        for s in &self.steps {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                s.k,
                self.selector,
                s.iota,
                s.u,
                s.y,
                s.f_true,
                s.iota_star,
                s.case,
                Self::fmt_value(s.values[0]),
                Self::fmt_value(s.values[1]),
                Self::fmt_value(s.values[2]),
            );
        }
        out
    }

    /// Parse a trace CSV produced by [`RunTrace::to_csv`].
    pub fn from_csv(text: &str) -> Result<Self, HarnessError> {
        let fail = |line: usize, message: String| HarnessError::TraceParse { line, message };
        let mut selector = None;
        let mut seed = 0u64;
        let mut oracle_total = f64::NAN;
        let mut best_constant_total = f64::NAN;
        let mut steps = Vec::new();
        let mut saw_version = false;
        let mut saw_header = false;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim_end();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                let comment = comment.trim();
                if comment == "upo-trace v1" {
                    saw_version = true;
                } else if let Some((key, value)) = comment.split_once('=') {
                    let (key, value) = (key.trim(), value.trim());
                    match key {
                        "selector" => selector = Some(value.to_string()),
                        "seed" => {
                            seed = value
                                .parse()
                                .map_err(|e| fail(line_no, format!("seed: {e}")))?
                        }
                        "oracle_total" => {
                            oracle_total = value
                                .parse()
                                .map_err(|e| fail(line_no, format!("oracle_total: {e}")))?
                        }
                        "best_constant_total" => {
                            best_constant_total = value.parse().map_err(|e| {
                                fail(line_no, format!("best_constant_total: {e}"))
                            })?
                        }
                        _ => {}
                    }
                }
                continue;
            }
            if !saw_header {
                if line != "k,selector,iota,u,y,f_true,iota_star,case,h_left,h_center,h_right" {
                    return Err(fail(line_no, format!("unexpected header `{line}`")));
                }
                saw_header = true;
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 11 {
                return Err(fail(line_no, format!("expected 11 columns, got {}", fields.len())));
            }
            let num = |idx: usize| -> Result<f64, HarnessError> {
                fields[idx]
                    .parse::<f64>()
                    .map_err(|e| fail(line_no, format!("column {}: {e}", idx + 1)))
            };
            let opt_num = |idx: usize| -> Result<f64, HarnessError> {
                if fields[idx].is_empty() {
                    Ok(f64::NAN)
                } else {
                    num(idx)
                }
            };
            steps.push(TraceStep {
                k: fields[0].parse().map_err(|e| fail(line_no, format!("k: {e}")))?,
                iota: fields[2].parse().map_err(|e| fail(line_no, format!("iota: {e}")))?,
                u: num(3)?,
                y: num(4)?,
                f_true: num(5)?,
                iota_star: fields[6]
                    .parse()
                    .map_err(|e| fail(line_no, format!("iota_star: {e}")))?,
                case: fields[7].to_string(),
                values: [opt_num(8)?, opt_num(9)?, opt_num(10)?],
            });
        }
        if !saw_version {
            return Err(fail(0, "missing `# upo-trace v1` version line".into()));
        }
        let selector = selector.ok_or_else(|| fail(0, "missing `# selector = ...`".into()))?;
        Ok(Self { selector, seed, oracle_total, best_constant_total, steps })
    }
}

/// Summary metrics of one run, with the relative references.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub selector: String,
    /// Steps spent away from the oracle maximizer.
    pub steps_off_optimum: usize,
    /// Steps whose next input differs from the current one.
    pub perturbation_count: usize,
    /// Total noise-free value collected.
    pub total_value: f64,
    pub oracle_total: f64,
    pub best_constant_total: f64,
    /// 100 * total_value / oracle_total.
    pub pct_of_oracle: f64,
    /// 100 * (total_value - best_constant_total) / |best_constant_total|.
    pub gain_vs_best_constant_pct: f64,
    /// 100 * (total_value - po_total) / |po_total| when a standard-po run is
    /// part of the same experiment.
    pub gain_vs_standard_po_pct: Option<f64>,
}

/// Compute per-trace metrics; traces must share the horizon and references.
/// The gain against standard P&O is filled in when such a trace is present.
pub fn compute_metrics(traces: &[RunTrace]) -> Result<Vec<Metrics>, HarnessError> {
    let Some(first) = traces.first() else {
        return Ok(Vec::new());
    };
    for t in traces {
        if t.horizon() != first.horizon() {
            return Err(HarnessError::MismatchedTraces(format!(
                "horizon {} of `{}` differs from {} of `{}`",
                t.horizon(),
                t.selector,
                first.horizon(),
                first.selector
            )));
        }
    }
    let po_total = traces
        .iter()
        .find(|t| t.selector == "standard-po")
        .map(|t| t.steps.iter().map(|s| s.f_true).sum::<f64>());
    let metrics = traces
        .iter()
        .map(|t| {
            let total_value: f64 = t.steps.iter().map(|s| s.f_true).sum();
            let steps_off_optimum =
                t.steps.iter().filter(|s| s.iota != s.iota_star).count();
            let perturbation_count =
                t.steps.windows(2).filter(|w| w[1].iota != w[0].iota).count();
            Metrics {
                selector: t.selector.clone(),
                steps_off_optimum,
                perturbation_count,
                total_value,
                oracle_total: t.oracle_total,
                best_constant_total: t.best_constant_total,
                pct_of_oracle: 100.0 * total_value / t.oracle_total,
                gain_vs_best_constant_pct: 100.0 * (total_value - t.best_constant_total)
                    / t.best_constant_total.abs(),
                gain_vs_standard_po_pct: po_total
                    .map(|po| 100.0 * (total_value - po) / po.abs()),
            }
        })
        .collect();
    Ok(metrics)
}
