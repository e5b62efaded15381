use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use gp_mfrl::harness::{self, parse_seeds, ExperimentConfig, Mode, Overrides, RunResult, Summary};

#[derive(Parser)]
#[command(name = "mfrl", version, about = "Multi-fidelity RL experiments over simulator chains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every agent and seed at the base point of a config.
    Run(ConfigArgs),
    /// Run every agent and seed at every point of the config's sweep axes.
    Sweep(ConfigArgs),
    /// Check a config and exit.
    Validate(ConfigArgs),
    /// Recompute summary.json from an output directory and print it.
    Report { out_dir: PathBuf },
}

#[derive(Clone, Debug)]
struct Seeds(Vec<u64>);

#[derive(Args)]
struct ConfigArgs {
    config: PathBuf,
    /// Seeds as `N`, `A..B` or `A,B,C`; replaces the config's list.
    #[arg(long, env = "MFRL_SEEDS", value_parser = |s: &str| parse_seeds(s).map(Seeds))]
    seeds: Option<Seeds>,
    /// Parallel runs; defaults to the number of cores.
    #[arg(long, env = "MFRL_WORKERS")]
    workers: Option<usize>,
    /// Output directory; replaces the config's `out_dir`.
    #[arg(long, env = "MFRL_OUT")]
    out: Option<PathBuf>,
    /// Cap on highest-fidelity samples for every agent.
    #[arg(long, env = "MFRL_BUDGET_SIGMA2")]
    budget_sigma2: Option<usize>,
}

impl ConfigArgs {
    fn load(&self) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config).with_context(|| format!("{}", self.config.display()))?;
        let out_dir = self
            .out
            .as_ref()
            .map(|p| std::env::current_dir().map(|cwd| cwd.join(p)))
            .transpose()?;
        cfg.apply(&Overrides {
            seeds: self.seeds.as_ref().map(|s| s.0.clone()),
            workers: self.workers,
            out_dir,
            budget_sigma2: self.budget_sigma2,
        })
        .with_context(|| format!("{}", self.config.display()))?;
        cfg.check().with_context(|| format!("{}", self.config.display()))?;
        Ok(cfg)
    }
}

fn progress(r: &RunResult) {
    let s = &r.status;
    if s.ok() {
        eprintln!(
            "ok     {} {} seed {}: {} samples, {} at the top, {}",
            s.agent, s.point, s.seed, s.samples_total, s.samples_top, s.stop
        );
    } else {
        eprintln!("FAILED {} {} seed {}: {}", s.agent, s.point, s.seed, s.error);
    }
}

fn print_scalars(summary: &Summary) {
    println!("{:<12} {:<28} {:<24} {:>4} {:>12} {:>12} {:>12}", "agent", "point", "series", "n", "median", "min", "max");
    for s in &summary.series {
        if let [b] = s.bands.as_slice() {
            println!(
                "{:<12} {:<28} {:<24} {:>4} {:>12.4} {:>12.4} {:>12.4}",
                s.agent, s.point, s.series, b.n, b.median, b.min, b.max
            );
        }
    }
    if summary.failed > 0 {
        println!("{} of {} runs failed", summary.failed, summary.runs);
    }
}

fn execute(args: &ConfigArgs, mode: Mode) -> anyhow::Result<ExitCode> {
    let cfg = args.load()?;
    let out = cfg.out_path();
    let summary = harness::run_experiment(&cfg, mode, &progress)?;
    print_scalars(&summary);
    println!("wrote {}", out.display());
    Ok(if summary.failed > 0 { ExitCode::from(3) } else { ExitCode::SUCCESS })
}

fn report(out_dir: &Path) -> anyhow::Result<ExitCode> {
    let summary = harness::report(out_dir)?;
    print_scalars(&summary);
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => execute(args, Mode::Run),
        Command::Sweep(args) => execute(args, Mode::Sweep),
        Command::Validate(args) => args.load().map(|cfg| {
            let runs = harness::plan(&cfg, Mode::Run).map_or(0, |p| p.len());
            let sweep = harness::plan(&cfg, Mode::Sweep).map_or(0, |p| p.len());
            println!("{}: ok ({runs} runs, {sweep} sweep runs)", args.config.display());
            ExitCode::SUCCESS
        }),
        Command::Report { out_dir } => report(out_dir),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::from(2)
    })
}
