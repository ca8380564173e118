//! `rearrange`: command-line front end to the simulator and planners.
//!
//! Exit codes: 0 on success, 1 on usage errors (bad arguments or config file),
//! 2 when a run fails.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use rearrange_core::harness::{aggregate, write_aggregate_csv, write_bench_csv, write_timing_csv};
use rearrange_core::rlplanner::write_curve_csv;
use rearrange_core::{
    compute_metrics, generate_scenario, run_benchmark, run_episode, train_planner, train_uodm, EpisodeTrace, Metrics,
    Models, PlannerKind, PriorTable, QModel, RunConfig, Scenario, UodmModel,
};

#[derive(Parser, Debug)]
#[command(name = "rearrange", version, about = "Object rearrangement planning on a grid world")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// JSON run configuration; omitted sections use defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a scenario and write it as JSON.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the object-location model on a prior table.
    TrainUodm {
        #[command(flatten)]
        common: Common,
        /// CSV prior table (object,receptacle,score); the bundled table by default.
        #[arg(long)]
        prior: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the Q-network planner.
    TrainPlanner {
        #[command(flatten)]
        common: Common,
        /// Object-location checkpoint used for search predictions during training.
        #[arg(long)]
        uodm: Option<PathBuf>,
        /// Optional training curve CSV.
        #[arg(long)]
        curve: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one episode and write its trace and metrics as JSON.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "cql")]
        planner: PlannerKind,
        /// Scenario JSON; generated from the config and --seed when absent.
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Planner checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        uodm: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the benchmark suite. Writes the per-episode CSV to --out plus
    /// `<stem>.aggregate.csv` and `<stem>.timing.csv` beside it.
    Bench {
        #[command(flatten)]
        common: Common,
        /// Planners to run; repeat or comma-separate. All four by default.
        #[arg(long, value_delimiter = ',')]
        planner: Vec<PlannerKind>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        uodm: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<rearrange_core::Error> for Failure {
    fn from(e: rearrange_core::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(anyhow::anyhow!(msg.into()))
}

fn load_config(common: &Common) -> Result<RunConfig, Failure> {
    match &common.config {
        None => Ok(RunConfig::default()),
        Some(p) => RunConfig::load(p).with_context(|| format!("reading config {}", p.display())).map_err(Failure::Usage),
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    serde_json::to_writer_pretty(BufWriter::new(f), value)?;
    Ok(())
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "bench".into());
    path.with_file_name(format!("{stem}.{suffix}.csv"))
}

fn load_models(uodm: Option<&Path>, planner: Option<&Path>) -> anyhow::Result<Models> {
    let uodm = uodm
        .map(|p| UodmModel::load(p).with_context(|| format!("loading {}", p.display())))
        .transpose()?
        .map(Arc::new);
    let planner = planner
        .map(|p| QModel::load(p).with_context(|| format!("loading {}", p.display())))
        .transpose()?
        .map(Arc::new);
    Ok(Models { uodm, planner })
}

/// Rejects planner choices whose checkpoints were not supplied.
fn check_models(planners: &[PlannerKind], checkpoint: bool, uodm: bool) -> Result<(), Failure> {
    for p in planners {
        if *p == PlannerKind::Cql && !checkpoint {
            return Err(usage("--planner cql needs --checkpoint"));
        }
        if matches!(p, PlannerKind::Cql | PlannerKind::Hp) && !uodm {
            return Err(usage(format!("--planner {p} needs --uodm")));
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct EvalOutput<'a> {
    metrics: Metrics,
    trace: &'a EpisodeTrace,
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Generate { common, out } => {
            let cfg = load_config(&common)?;
            let scenario = generate_scenario(&cfg.scenario, common.seed.unwrap_or(0))?;
            scenario.save(&out)?;
            println!("wrote {} ({} objects)", out.display(), scenario.n_objects());
        }
        Command::TrainUodm { common, prior, out } => {
            let mut cfg = load_config(&common)?;
            if let Some(s) = common.seed {
                cfg.uodm.seed = s;
            }
            let owned;
            let table = match &prior {
                Some(p) => {
                    owned = PriorTable::load(p).with_context(|| format!("loading {}", p.display()))?;
                    &owned
                }
                None => PriorTable::bundled(),
            };
            let (model, report) = train_uodm(table, &cfg.uodm)?;
            model.save(&out)?;
            println!(
                "wrote {} (holdout accuracy {:.3}, spearman {:.3})",
                out.display(),
                report.holdout_filter_accuracy,
                report.holdout_spearman
            );
        }
        Command::TrainPlanner { common, uodm, curve, out } => {
            let mut cfg = load_config(&common)?;
            if let Some(s) = common.seed {
                cfg.training.rl.seed = s;
            }
            let models = load_models(uodm.as_deref(), None)?;
            let (model, rows) = train_planner(&cfg.training, models.uodm.as_deref(), |r| {
                eprintln!("step {:>7}  td {:.4}  cql {:.4}  return {:.2}", r.step, r.td, r.cql, r.mean_episode_reward);
            })?;
            model.save(&out)?;
            if let Some(c) = &curve {
                write_curve_csv(&rows, create(c)?)?;
            }
            println!("wrote {}", out.display());
        }
        Command::Eval { common, planner, scenario, checkpoint, uodm, out } => {
            let cfg = load_config(&common)?;
            if scenario.is_some() && common.seed.is_some() {
                return Err(usage("--scenario and --seed are mutually exclusive"));
            }
            let scenario = match &scenario {
                Some(p) => Scenario::load(p).with_context(|| format!("loading {}", p.display()))?,
                None => generate_scenario(&cfg.scenario, common.seed.unwrap_or(0))?,
            };
            let all_visible = scenario.counts.n_partially_occluded + scenario.counts.n_fully_occluded == 0;
            check_models(&[planner], checkpoint.is_some(), uodm.is_some() || all_visible)?;
            let models = load_models(uodm.as_deref(), checkpoint.as_deref())?;
            let trace = run_episode(&scenario, planner, &models, &cfg.episode)?;
            let metrics = compute_metrics(&trace);
            write_json(&out, &EvalOutput { metrics, trace: &trace })?;
            let eod = metrics.eod.map_or_else(|| "NC".to_string(), |e| format!("{e:.3}"));
            println!(
                "{planner}: success {} srn {:.3} eod {eod} ttl {:.2} m, {} steps",
                trace.success,
                metrics.srn,
                metrics.ttl,
                trace.n_steps()
            );
        }
        Command::Bench { common, planner, checkpoint, uodm, out } => {
            let mut cfg = load_config(&common)?;
            let planners = if planner.is_empty() { PlannerKind::ALL.to_vec() } else { planner };
            check_models(&planners, checkpoint.is_some(), uodm.is_some())?;
            if let Some(offset) = common.seed {
                for s in &mut cfg.bench.seeds {
                    *s += offset;
                }
            }
            let models = load_models(uodm.as_deref(), checkpoint.as_deref())?;
            let rows = run_benchmark(&cfg.bench, &planners, &models)?;
            write_bench_csv(&rows, create(&out)?)?;
            let agg = aggregate(&rows);
            write_aggregate_csv(&agg, create(&sibling(&out, "aggregate"))?)?;
            write_timing_csv(&rows, create(&sibling(&out, "timing"))?)?;
            println!("wrote {} ({} episodes)", out.display(), rows.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
