use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use mfgrid::dispatch::cross_check;
use mfgrid::grid::{format_network, ieee14};
use mfgrid::io::{emit_results, load_scenario, recompute_metrics, summarize, unix_now, Overrides, Scenario, ScenarioSource};
use mfgrid::metrics::standard_series;
use mfgrid::simulate::{run_simulation_with_threads, Mode};

/// Bus whose prices the reports focus on (1-based).
const REPORT_BUS: usize = 3;

#[derive(Parser)]
#[command(name = "mfgrid", version, about = "Mean-field prosumer market simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario and write its result tables.
    Run {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value = "out")]
        outdir: PathBuf,
        #[arg(long, env = "MFG_GRID_THREADS", default_value_t = 0)]
        threads: usize,
    },
    /// Load and check a scenario without running it.
    Validate {
        #[command(flatten)]
        scenario: ScenarioArgs,
    },
    /// Recompute summary metrics from a finished run directory.
    Metrics {
        #[arg(long, default_value = "out")]
        outdir: PathBuf,
        /// 1-based bus
        #[arg(long, default_value_t = REPORT_BUS)]
        bus: usize,
        #[arg(long, default_value_t = 10)]
        window_days: usize,
    },
    /// Cross-check the dispatch solver against enumeration on random networks.
    Oracle {
        #[arg(long, default_value_t = 200)]
        cases: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Run consecutive seeds, each into its own directory.
    Sweep {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        #[arg(long, default_value = "sweep")]
        outdir: PathBuf,
        #[arg(long, env = "MFG_GRID_THREADS", default_value_t = 0)]
        threads: usize,
    },
    /// Print the generated 14-bus network file.
    #[command(hide = true)]
    GenIeee14 {
        #[arg(long)]
        with_ptdf: bool,
    },
}

#[derive(Args, Clone)]
struct ScenarioArgs {
    /// Preset name or path to a scenario file.
    #[arg(long, default_value = "ieee14_baseline")]
    scenario: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    days: Option<usize>,
    #[arg(long)]
    agents_per_node: Option<usize>,
    /// Per-hour discount factor.
    #[arg(long)]
    beta: Option<f64>,
    /// Belief learning rate.
    #[arg(long)]
    delta: Option<f64>,
    /// mf-shock-info, mf-no-shock-info or no-learning.
    #[arg(long, value_parser = parse_mode)]
    mode: Option<Mode>,
}

fn parse_mode(s: &str) -> std::result::Result<Mode, String> {
    Mode::from_name(s).ok_or_else(|| format!("unknown mode {s:?}"))
}

impl ScenarioArgs {
    fn load(&self) -> Result<Scenario> {
        let overrides = Overrides {
            seed: self.seed,
            days: self.days,
            agents_per_node: self.agents_per_node,
            discount: self.beta,
            delta: self.delta,
            mode: self.mode,
        };
        let s = load_scenario(&ScenarioSource::parse(&self.scenario), &overrides)?;
        for w in &s.warnings {
            log::warn!("{w}");
        }
        Ok(s)
    }
}

fn run_one(s: &Scenario, outdir: &Path, threads: usize) -> Result<()> {
    let started = unix_now();
    let log = run_simulation_with_threads(&s.network, s.types.clone(), s.config.clone(), threads)?;
    let series = standard_series(&log, REPORT_BUS - 1)?;
    emit_results(&log, &series, &s.echo()?, outdir, started)?;
    let summary = summarize(&log);
    println!(
        "{} seed {}: {} days, IMV bus {REPORT_BUS} {}, cost {:.6e}, {} failed hours -> {}",
        summary.mode,
        summary.seed,
        summary.days_completed,
        summary.imv[REPORT_BUS - 1].map_or("n/a".into(), |v| format!("{v:.4}")),
        summary.window_cost,
        summary.stats.failed_hours,
        outdir.display()
    );
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            scenario,
            outdir,
            threads,
        } => run_one(&scenario.load()?, &outdir, threads),
        Command::Validate { scenario } => {
            let s = scenario.load()?;
            println!(
                "scenario {:?} is valid: {} buses, {} agent types, {} agents",
                s.config.name,
                s.network.n_buses,
                s.types.len(),
                s.types.iter().map(|t| t.agent_count).sum::<usize>()
            );
            print!("{}", s.echo()?);
            Ok(())
        }
        Command::Metrics {
            outdir,
            bus,
            window_days,
        } => {
            let m = recompute_metrics(&outdir, bus, window_days)?;
            println!("{}", serde_json::to_string_pretty(&m)?);
            Ok(())
        }
        Command::Oracle { cases, seed } => {
            let r = cross_check(cases, seed)?;
            println!("{}", serde_json::to_string_pretty(&r)?);
            anyhow::ensure!(
                r.max_dispatch_gap <= 1e-6 && r.max_price_gap <= 1e-6,
                "solver disagrees with enumeration"
            );
            Ok(())
        }
        Command::Sweep {
            scenario,
            seeds,
            outdir,
            threads,
        } => {
            let base = scenario.load()?;
            let first = base.config.seed;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .context("cannot start worker pool")?;
            pool.install(|| {
                (first..first + seeds).into_par_iter().try_for_each(|seed| {
                    let mut s = base.clone();
                    s.config.seed = seed;
                    // Bus scales depend on the seed.
                    s.types = mfgrid::simulate::build_agent_types(&s.network, &s.shape, &s.config)?;
                    run_one(&s, &outdir.join(format!("seed-{seed}")), 1)
                })
            })
        }
        Command::GenIeee14 { with_ptdf } => {
            print!("{}", format_network(&ieee14::generate(ieee14::SEED_NAME), with_ptdf));
            Ok(())
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if let Some(err) = cause.downcast_ref::<mfgrid::Error>() {
            return err.exit_code() as u8;
        }
        if cause.is::<std::io::Error>() {
            return 4;
        }
    }
    3
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // Library errors already include their cause in the message.
            let mut msg = e.to_string();
            for cause in e.chain().skip(1) {
                let c = cause.to_string();
                if !msg.contains(&c) {
                    msg = format!("{msg}: {c}");
                }
            }
            eprintln!("error: {msg}");
            ExitCode::from(exit_code(&e))
        }
    }
}
