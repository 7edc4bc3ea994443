//! Command-line front end: simulation, filtering, smoothing,
//! interpolation, forecasting, grid fitting, interval scoring, and
//! graph-to-partition ingestion. Reads a JSON experiment config plus
//! flag overrides; writes JSON state files and plot-ready CSV summaries.

use clap::{Args, Parser, Subcommand};
use pd_hmm::ewens::EPParams;
use pd_hmm::filter::{filter, fit_grid, MixtureState};
use pd_hmm::harness::{
    self, parse_axis, simulate_experiment, ExperimentConfig, GridSpec, IngestOptions,
    SummaryRow,
};
use pd_hmm::smoother::Smoother;
use pd_hmm::{Error, Result};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "pdhmm",
    about = "Exact Bayesian inference for partition-valued observations of a Poisson–Dirichlet diffusion",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every config-driven subcommand; each overrides the
/// matching config field when present.
#[derive(Args)]
struct Common {
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Pruning override: `none`, `top:K`, or `mass:RHO`.
    #[arg(long)]
    prune: Option<String>,
    /// Seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Two-sided miss level override for summaries.
    #[arg(long)]
    kappa: Option<f64>,
    /// Posterior draw count override for summaries.
    #[arg(long)]
    draws: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::from_path(&self.config)?;
        if let Some(p) = &self.prune {
            cfg.pruning = p.parse()?;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(k) = self.kappa {
            cfg.kappa = k;
        }
        if let Some(d) = self.draws {
            cfg.draws = d;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a latent trajectory and paintbox observations.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Output observations (JSON lines).
        #[arg(long)]
        out: PathBuf,
        /// Optional ground-truth heterozygosity CSV (`time,truth`).
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Run the exact forward filter over an observation file.
    Filter {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        obs: PathBuf,
        /// Output mixture states (JSON).
        #[arg(long)]
        states: Option<PathBuf>,
        /// Output posterior heterozygosity summary (CSV).
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Run the forward-backward smoother at every observation time.
    Smooth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        obs: PathBuf,
        #[arg(long)]
        states: Option<PathBuf>,
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Posterior laws at unobserved times inside the observation window.
    Interpolate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        obs: PathBuf,
        /// Comma-separated interpolation times.
        #[arg(long, value_delimiter = ',', required = true)]
        at: Vec<f64>,
        #[arg(long)]
        states: Option<PathBuf>,
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Posterior laws at times beyond the last observation.
    Forecast {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        obs: PathBuf,
        /// Comma-separated forecast times (after the last observation).
        #[arg(long, value_delimiter = ',', required = true)]
        at: Vec<f64>,
        #[arg(long)]
        states: Option<PathBuf>,
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Grid maximum-likelihood fit of (alpha, theta).
    Fit {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        obs: PathBuf,
        /// Grid override, e.g. `--grid alpha=0:0.1:0.5 theta=0.5:0.25:2`.
        #[arg(long, num_args = 1.., value_name = "AXIS=SPEC")]
        grid: Option<Vec<String>>,
        /// Output evidence table (CSV `alpha,theta,log_evidence`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Interval-score a summary CSV against ground truth.
    Score {
        /// Summary CSV (`time,mean,q025,q975[,truth]`).
        #[arg(long)]
        summary: PathBuf,
        /// Ground-truth CSV (`time,truth`); optional if the summary
        /// carries a truth column.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Two-sided miss level of the scored interval.
        #[arg(long, default_value_t = 0.05)]
        kappa: f64,
        /// Output per-time scores (CSV).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Turn a timestamped edge list into a partition observation file.
    IngestGraph {
        /// Edge list (`timestamp,node_a,node_b`; CSV or TSV, header
        /// optional).
        #[arg(long)]
        edges: PathBuf,
        /// Window length in the edge file's time unit.
        #[arg(long, default_value_t = 1800.0)]
        window: f64,
        /// Diffusion time per window; window k maps to (k + 1/2)·unit.
        #[arg(long, default_value_t = 1.0)]
        time_unit: f64,
        /// Keep size-one components (self-loop vertices).
        #[arg(long)]
        include_singletons: bool,
        /// Keep empty windows as empty partitions.
        #[arg(long)]
        keep_empty: bool,
        /// Output observations (JSON lines).
        #[arg(long)]
        out: PathBuf,
    },
}

fn write_truth_csv(path: &Path, times: &[f64], truth: &[f64]) -> Result<()> {
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(["time", "truth"])?;
        for (t, y) in times.iter().zip(truth) {
            w.write_record(&[t.to_string(), y.to_string()])?;
        }
        w.flush()?;
    }
    harness::write_atomic(path, &buf)
}

fn read_truth_csv(path: &Path) -> Result<Vec<f64>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let y: f64 = rec[1]
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("bad truth value `{}`", &rec[1])))?;
        out.push(y);
    }
    Ok(out)
}

fn emit_states(
    path: Option<&PathBuf>,
    kind: &str,
    states: &[MixtureState],
) -> Result<()> {
    if let Some(path) = path {
        harness::write_states(path, kind, states)?;
        eprintln!("wrote {} {kind} states to {}", states.len(), path.display());
    }
    Ok(())
}

fn emit_summary(
    path: Option<&PathBuf>,
    cfg: &ExperimentConfig,
    params: &EPParams,
    states: &[MixtureState],
) -> Result<()> {
    if let Some(path) = path {
        let rows = harness::summarize_states(
            params, states, cfg.draws, cfg.eps, cfg.kappa, cfg.seed, None,
        )?;
        harness::write_summary_csv(path, &rows)?;
        eprintln!("wrote summary to {}", path.display());
    }
    Ok(())
}

fn parse_grid_override(specs: &[String]) -> Result<GridSpec> {
    let mut alpha = None;
    let mut theta = None;
    for spec in specs {
        let (axis, values) = spec.split_once('=').ok_or_else(|| {
            Error::InvalidConfig(format!("grid spec `{spec}` is not AXIS=SPEC"))
        })?;
        match axis {
            "alpha" => alpha = Some(parse_axis(values)?),
            "theta" => theta = Some(parse_axis(values)?),
            other => {
                return Err(Error::InvalidConfig(format!(
                    "unknown grid axis `{other}` (expected alpha or theta)"
                )))
            }
        }
    }
    match (alpha, theta) {
        (Some(alpha), Some(theta)) => Ok(GridSpec { alpha, theta }),
        _ => Err(Error::InvalidConfig(
            "grid override needs both alpha=... and theta=...".into(),
        )),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { common, out, truth } => {
            let cfg = common.load()?;
            let sim = simulate_experiment(&cfg)?;
            harness::write_observations(&out, &sim.seq)?;
            eprintln!("wrote {} observations to {}", sim.seq.len(), out.display());
            if let Some(truth_path) = truth {
                write_truth_csv(&truth_path, sim.seq.times(), &sim.truth_h2)?;
                eprintln!("wrote ground truth to {}", truth_path.display());
            }
        }
        Command::Filter {
            common,
            obs,
            states,
            summary,
        } => {
            let cfg = common.load()?;
            let params = cfg.params()?;
            let seq = harness::read_observations(&obs)?;
            let out = filter(&params, &seq, cfg.predict_mode(), cfg.pruning())?;
            println!("log_evidence {:.6}", out.log_evidence);
            emit_states(states.as_ref(), "filtered", &out.states)?;
            emit_summary(summary.as_ref(), &cfg, &params, &out.states)?;
        }
        Command::Smooth {
            common,
            obs,
            states,
            summary,
        } => {
            let cfg = common.load()?;
            let params = cfg.params()?;
            let seq = harness::read_observations(&obs)?;
            let smoother = Smoother::new(params, &seq, cfg.predict_mode(), cfg.pruning())?;
            let smoothed = smoother.smooth_all()?;
            println!("log_evidence {:.6}", smoother.forward().log_evidence);
            emit_states(states.as_ref(), "smoothed", &smoothed)?;
            emit_summary(summary.as_ref(), &cfg, &params, &smoothed)?;
        }
        Command::Interpolate {
            common,
            obs,
            at,
            states,
            summary,
        } => {
            let cfg = common.load()?;
            let params = cfg.params()?;
            let seq = harness::read_observations(&obs)?;
            let smoother = Smoother::new(params, &seq, cfg.predict_mode(), cfg.pruning())?;
            let interpolated: Vec<MixtureState> = at
                .iter()
                .map(|&t| smoother.interpolate(t))
                .collect::<Result<_>>()?;
            emit_states(states.as_ref(), "interpolated", &interpolated)?;
            emit_summary(summary.as_ref(), &cfg, &params, &interpolated)?;
        }
        Command::Forecast {
            common,
            obs,
            at,
            states,
            summary,
        } => {
            let cfg = common.load()?;
            let params = cfg.params()?;
            let seq = harness::read_observations(&obs)?;
            let smoother = Smoother::new(params, &seq, cfg.predict_mode(), cfg.pruning())?;
            let forecasts: Vec<MixtureState> = at
                .iter()
                .map(|&t| smoother.forecast_state(t))
                .collect::<Result<_>>()?;
            emit_states(states.as_ref(), "forecast", &forecasts)?;
            emit_summary(summary.as_ref(), &cfg, &params, &forecasts)?;
        }
        Command::Fit {
            common,
            obs,
            grid,
            out,
        } => {
            let cfg = common.load()?;
            let seq = harness::read_observations(&obs)?;
            let grid_spec = match grid {
                Some(specs) => parse_grid_override(&specs)?,
                None => cfg.grid.clone().ok_or_else(|| {
                    Error::InvalidConfig("no grid in config and no --grid override".into())
                })?,
            };
            let points = grid_spec.points()?;
            let (best, table) = fit_grid(&seq, &points, cfg.predict_mode(), cfg.pruning())?;
            println!("alpha_hat {} theta_hat {}", best.alpha(), best.theta());
            if let Some(path) = out {
                harness::write_evidence_csv(&path, &table)?;
                eprintln!("wrote evidence table to {}", path.display());
            }
        }
        Command::Score {
            summary,
            truth,
            kappa,
            out,
        } => {
            let rows: Vec<SummaryRow> = harness::read_summary_csv(&summary)?;
            let explicit = truth.map(|p| read_truth_csv(&p)).transpose()?;
            let scored = harness::score_series(&rows, explicit.as_deref(), kappa)?;
            println!("aggregate_score {:.6}", scored.aggregate);
            if let Some(path) = out {
                let mut buf = Vec::new();
                {
                    let mut w = csv::Writer::from_writer(&mut buf);
                    w.write_record(["time", "lower", "upper", "truth", "score"])?;
                    for e in &scored.entries {
                        w.write_record(&[
                            e.time.to_string(),
                            e.lower.to_string(),
                            e.upper.to_string(),
                            e.truth.to_string(),
                            e.score.to_string(),
                        ])?;
                    }
                    w.flush()?;
                }
                harness::write_atomic(&path, &buf)?;
                eprintln!("wrote scores to {}", path.display());
            }
        }
        Command::IngestGraph {
            edges,
            window,
            time_unit,
            include_singletons,
            keep_empty,
            out,
        } => {
            let opts = IngestOptions {
                window,
                time_unit,
                include_singletons,
                keep_empty,
            };
            let ingested = harness::ingest_graph(&edges, &opts)?;
            for w in &ingested.warnings {
                eprintln!("warning: {w}");
            }
            harness::write_observations(&out, &ingested.seq)?;
            eprintln!(
                "wrote {} observations to {}",
                ingested.seq.len(),
                out.display()
            );
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        // machine-readable error envelope on stderr
        eprintln!(
            "{}",
            serde_json::json!({ "error": e.to_string() })
        );
        std::process::exit(1);
    }
}

