use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use metacog_core::backend::{RemoteBackend, RemoteConfig};
use metacog_core::harness::{compute_metrics, export_csv, run_scenario, RunConfig, RunMetrics};
use metacog_core::{CognitionBackend, Scenario, ScriptedBackend};

#[derive(Parser)]
#[command(name = "metacog", version, about = "Run meta-cognitive agent scenarios in the offline sandbox")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario end to end and write its Growth-Journal.
    Run(RunArgs),
    /// Recompute metrics from an existing journal directory.
    Metrics {
        dir: PathBuf,
        /// Also write the three CSV files.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Probe the remote backend configured through the environment.
    Healthcheck,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendKind {
    Scripted,
    Remote,
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Virtual minutes; defaults to the scenario's own duration.
    #[arg(long)]
    duration: Option<u64>,
    #[arg(long, value_enum, default_value = "scripted")]
    backend: BackendKind,
    #[arg(long, default_value = "journal")]
    out: PathBuf,
    /// Reactive baseline: no self-generated goals.
    #[arg(long)]
    no_intrinsic: bool,
    #[arg(long)]
    metrics_csv: Option<PathBuf>,
    /// Continue from the journal already in `--out`.
    #[arg(long)]
    resume: bool,
    /// Force temperature 0 on remote requests.
    #[arg(long)]
    deterministic: bool,
}

fn remote(force_zero: bool) -> anyhow::Result<RemoteBackend> {
    let mut config = RemoteConfig::from_env()?;
    if force_zero {
        config.force_temperature = Some(0.0);
    }
    Ok(RemoteBackend::new(config))
}

fn summary(m: &RunMetrics) {
    println!("virtual minutes: {}", m.duration_minutes);
    println!("tasks: {}", m.total_tasks);
    for s in &m.segments {
        println!("  segment {:>5}: extrinsic {:>3}  intrinsic {:>3}", s.segment_start, s.extrinsic, s.intrinsic);
    }
    for t in &m.tiers {
        println!("  T={:<5} {:<6} {}/{} ({:.2})", t.checkpoint, t.tier.as_str(), t.successes, t.tasks, t.rate);
    }
    for s in &m.steps {
        println!("  steps {}: {:?}", s.template, s.steps);
    }
}

fn run(args: RunArgs) -> anyhow::Result<()> {
    let scenario = Arc::new(Scenario::load(&args.scenario)?);
    let backend: Arc<dyn CognitionBackend> = match args.backend {
        BackendKind::Scripted => Arc::new(ScriptedBackend::for_scenario(&scenario)),
        BackendKind::Remote => Arc::new(remote(args.deterministic)?),
    };
    let mut config = RunConfig::new(&args.out);
    config.seed = args.seed;
    config.duration_minutes = args.duration;
    config.intrinsic = !args.no_intrinsic;
    config.resume = args.resume;

    let outcome = run_scenario(scenario, backend, &config)?;
    summary(&outcome.metrics);
    println!("journal: {}", outcome.journal_dir.display());
    if let Some(path) = args.metrics_csv {
        for file in export_csv(&outcome.metrics, &path)? {
            println!("csv: {}", file.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let result = match Cli::parse().command {
        Cmd::Run(args) => run(args),
        Cmd::Metrics { dir, csv } => compute_metrics(&dir)
            .with_context(|| format!("reading journal {}", dir.display()))
            .and_then(|m| {
                summary(&m);
                if let Some(path) = csv {
                    export_csv(&m, path)?;
                }
                Ok(())
            }),
        Cmd::Healthcheck => remote(false).and_then(|b| {
            let h = b.healthcheck();
            if !h.healthy {
                bail!("backend unhealthy: {}", h.reason.unwrap_or_default());
            }
            match h.latency {
                Some(l) => println!("healthy ({} ms)", l.as_millis()),
                None => println!("healthy"),
            }
            Ok(())
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e:#}");
            eprintln!("error: {e:#}");
            let invariant = e.downcast_ref::<metacog_core::Error>().is_some_and(metacog_core::Error::is_invariant);
            ExitCode::from(if invariant { 3 } else { 1 })
        }
    }
}
