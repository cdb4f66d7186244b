//! `upo` — run selector-vs-plant experiments, export power curves, recompute
//! metrics from traces, and print convergence-constants reports.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use upo_core::harness::{
    self, compute_metrics, export_curves, format_metrics, run_experiment, ExperimentConfig,
    RunTrace,
};
use upo_core::selectors::SelectorKind;
use upo_core::verify::convergence_constants;

#[derive(Parser)]
#[command(name = "upo", version, about = "Uncertainty-based perturb-and-observe experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured experiment and write one trace CSV per selector.
    Run {
        /// Experiment config file (flat key = value text; defaults apply).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Noise seed override.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for trace CSVs.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated selector list override (upo,standard-po,hei,thompson).
        #[arg(long, value_delimiter = ',')]
        selector: Option<Vec<String>>,
    },
    /// Export objective value curves at chosen time steps as CSV.
    Curves {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Time steps to export, e.g. --k 50,150,250
        #[arg(long, value_delimiter = ',', default_values_t = [50u64, 150, 250])]
        k: Vec<u64>,
        /// Output file (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Recompute summary metrics from previously written trace CSVs.
    Metrics {
        /// Trace CSV files (must share horizon and objective).
        #[arg(required = true)]
        traces: Vec<PathBuf>,
    },
    /// Estimate assumption constants and print the convergence-constants
    /// report for the configured objective.
    Constants {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn load_config(path: &Option<PathBuf>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::from_file(p)
            .with_context(|| format!("loading config {}", p.display())),
        None => Ok(ExperimentConfig::default()),
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, seed, out, selector } => {
            let mut cfg = load_config(&config)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            if let Some(names) = selector {
                let mut keep = Vec::new();
                for name in &names {
                    let kind = SelectorKind::from_name(name)
                        .with_context(|| format!("unknown selector `{name}`"))?;
                    keep.push(
                        cfg.selectors
                            .iter()
                            .copied()
                            .find(|s| s.kind == kind)
                            .unwrap_or_else(|| {
                                upo_core::selectors::SelectorConfig::defaults_for(kind)
                            }),
                    );
                }
                cfg.selectors = keep;
            }
            let result = run_experiment(&cfg)?;
            print!("{}", format_metrics(&result.metrics));
            if let Some(dir) = out.or(cfg.out_dir) {
                harness::write_traces(&dir, &result.traces)?;
                eprintln!("wrote {} trace files to {}", result.traces.len(), dir.display());
            }
        }
        Command::Curves { config, k, out, seed } => {
            let cfg = load_config(&config)?;
            let objective = harness::build_objective(&cfg, seed.unwrap_or(cfg.seed))?;
            let mut buf = Vec::new();
            export_curves(&objective, &k, cfg.oracle_lo, cfg.oracle_hi, &mut buf)?;
            match out {
                Some(path) => {
                    std::fs::write(&path, &buf)
                        .with_context(|| format!("writing {}", path.display()))?;
                    eprintln!("wrote {}", path.display());
                }
                None => print!("{}", String::from_utf8(buf)?),
            }
        }
        Command::Metrics { traces } => {
            let mut parsed = Vec::new();
            for path in &traces {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                parsed.push(
                    RunTrace::from_csv(&text)
                        .with_context(|| format!("parsing {}", path.display()))?,
                );
            }
            let metrics = compute_metrics(&parsed)?;
            print!("{}", format_metrics(&metrics));
        }
        Command::Constants { config, seed } => {
            let cfg = load_config(&config)?;
            let objective = harness::build_objective(&cfg, seed.unwrap_or(cfg.seed))?;
            let assumptions = objective
                .estimate_assumption_constants(cfg.oracle_lo, cfg.oracle_hi, cfg.constants_horizon)
                .context("assumption-constant estimation failed")?;
            let constants = convergence_constants(
                &assumptions,
                objective.grid().spacing(),
                cfg.constants_tau,
                cfg.noise_scale.max(1e-9),
                cfg.constants_nu_star,
                cfg.constants_k0,
            )?;
            println!("assumption constants (interval [{}, {}], horizon {}):",
                cfg.oracle_lo, cfg.oracle_hi, cfg.constants_horizon);
            println!("  curvature lower bound L_b = {}", assumptions.l_b);
            println!("  per-step drift bound  L_k = {}", assumptions.l_k);
            println!("convergence constants:");
            println!("  maximizer drift rate  L*  = {}", constants.l_star);
            println!("  progress window       N   = {}", constants.n_window);
            println!("  no-progress scale     gamma = {}", constants.gamma);
            println!("  descent dead zone     b   = {}", constants.b_dead);
            println!("  transient envelope    c1  = {}", constants.c1);
            println!("  asymptotic envelope   c2  = {}", constants.c2);
            println!("  always-perturb threshold lambda* = {:e}", constants.lambda_star);
            if !(constants.lambda_star > 0.0) {
                bail!("degenerate lambda* threshold");
            }
        }
    }
    Ok(())
}
