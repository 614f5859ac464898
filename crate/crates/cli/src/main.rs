use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use airan_core::config::{parse_config, to_toml};
use airan_core::report::write_run;
use airan_core::sim::run;
use airan_core::spec::{ScenarioSpec, SchedulerKind};
use airan_core::sweep::{parse_seeds, run_sweep, SweepPlan};

const OUT_ENV: &str = "AIRAN_OUT_DIR";

#[derive(Parser, Debug)]
#[command(name = "airan", version, about = "Simulate AI-orchestrated RAN scheduling and placement")]
struct Cli {
    /// Increase diagnostic output on stderr (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one scenario and write its report, plan log and latency CDF.
    Run(RunArgs),
    /// Run schedulers × seeds (× loads) and write a comparison table.
    Sweep(SweepArgs),
    /// Check a config, dry-run 10 slots and print the effective spec.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args, Debug)]
struct OutDir {
    /// Output directory; falls back to $AIRAN_OUT_DIR.
    #[arg(long, env = OUT_ENV)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    out: OutDir,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    scheduler: Option<String>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    out: OutDir,
    /// Comma-separated scheduler names or aliases.
    #[arg(long, value_delimiter = ',', required = true)]
    schedulers: Vec<String>,
    /// Inclusive range `N..M` or a comma-separated list.
    #[arg(long)]
    seeds: String,
    /// Parallel runs; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Comma-separated UE counts; defaults to the config's n_ues.
    #[arg(long, value_delimiter = ',')]
    loads: Vec<u32>,
}

fn load(path: &Path) -> Result<ScenarioSpec> {
    let doc = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_config(&doc).with_context(|| format!("in {}", path.display()))
}

fn cmd_run(args: RunArgs, verbose: u8) -> Result<()> {
    let mut spec = load(&args.config)?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if let Some(name) = &args.scheduler {
        spec.scheduler = name.parse::<SchedulerKind>()?;
    }
    let report = run(spec)?;
    report.verify().map_err(anyhow::Error::msg).context("report self-consistency")?;
    write_run(&report, &args.out.out)?;
    let a = &report.aggregates;
    println!(
        "{} seed {}: mean SE {:.4} bit/s/Hz, mean latency {} ms, {} packets, {} rejected requests",
        report.spec.scheduler,
        report.spec.seed,
        a.mean_se.unwrap_or(0.0),
        a.mean_latency_ms.map(|x| format!("{x:.3}")).unwrap_or_else(|| "n/a".into()),
        a.completed_packets,
        a.rejected_requests
    );
    if verbose > 0 {
        eprintln!("wall clock {:.2?}; wrote {}", report.wall_clock, args.out.out.display());
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs, verbose: u8) -> Result<()> {
    let base = load(&args.config)?;
    let seeds = parse_seeds(&args.seeds).map_err(anyhow::Error::msg)?;
    let plan = SweepPlan { base, schedulers: args.schedulers, seeds, loads: args.loads, jobs: args.jobs };
    let outcome = run_sweep(&plan, &args.out.out)?;
    let mut failed = 0;
    for c in &outcome.cells {
        match &c.result {
            Ok((_, path)) if verbose > 0 => eprintln!("ok     {} seed {} n_ues {} -> {}", c.scheduler, c.seed, c.n_ues, path.display()),
            Ok(_) => {}
            Err(e) => {
                failed += 1;
                eprintln!("FAILED {} seed {} n_ues {}: {e}", c.scheduler, c.seed, c.n_ues);
            }
        }
    }
    for e in &outcome.errors {
        eprintln!("error: {e}");
    }
    for (n, t) in &outcome.comparisons {
        println!("n_ues = {n}");
        for r in &t.rows {
            println!(
                "  {:<17} SE {:.4}  mean latency {:>9} ms  variance {:>11}",
                r.scheduler.name(),
                r.mean_se.unwrap_or(0.0),
                r.mean_latency_ms.map(|x| format!("{x:.3}")).unwrap_or_else(|| "n/a".into()),
                r.latency_variance_ms2.map(|x| format!("{x:.3}")).unwrap_or_else(|| "n/a".into()),
            );
        }
    }
    if !outcome.all_succeeded() {
        bail!("{failed} of {} runs failed", outcome.cells.len());
    }
    Ok(())
}

fn cmd_validate(config: &Path) -> Result<()> {
    let spec = load(config)?;
    let dry = ScenarioSpec { n_slots: 10, warmup_slots: 0, ..spec.clone() };
    run(dry).context("10-slot dry run")?;
    print!("{}", to_toml(&spec));
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a, cli.verbose),
        Command::Sweep(a) => cmd_sweep(a, cli.verbose),
        Command::Validate { config } => cmd_validate(&config),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
