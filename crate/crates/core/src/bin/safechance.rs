use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use safechance::harness::{Pipeline, Run, RunConfig};
use safechance::Error;

#[derive(Parser)]
#[command(version, about = "Calibrated safety-chance prediction on image-observed cart-pole")]
struct Cli {
    /// JSON run configuration; defaults apply to absent fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the four splits and build the windowed datasets.
    Generate,
    /// Train the models of one pipeline at one horizon.
    Train(Target),
    /// F1/FPR on the test split, plus MEMO rows with --adapted.
    Eval {
        #[command(flatten)]
        target: Target,
        #[arg(long)]
        adapted: bool,
    },
    /// Fit and select a post-hoc calibrator.
    Calibrate(Target),
    /// Per-bin conformal bounds and their test coverage.
    Conformal(Target),
    /// Consolidate all result rows.
    Report,
    /// Every command for every pipeline and horizon.
    All,
}

#[derive(clap::Args)]
struct Target {
    #[arg(long, value_enum)]
    pipeline: Pipeline,
    #[arg(long)]
    k: usize,
}

fn config(cli: &Cli) -> safechance::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> safechance::Result<()> {
    let run = Run::new(config(cli)?)?;
    match &cli.command {
        Command::Generate => {
            let m = run.generate()?;
            for s in &m.splits {
                println!(
                    "{:<12} seeds [{}, {})  {} trajectories, {} states",
                    s.split.name(),
                    s.seed_start,
                    s.seed_end,
                    s.trajectories,
                    s.states
                );
            }
        }
        Command::Train(t) => run.train(t.pipeline, t.k)?,
        Command::Eval { target, adapted } => {
            for r in run.eval(target.pipeline, target.k, *adapted)? {
                println!("{:<8} adapted={:<5} f1={:.4}", r.set, r.adapted, r.f1.unwrap_or(f64::NAN));
            }
        }
        Command::Calibrate(t) => {
            let r = run.calibrate(t.pipeline, t.k)?;
            println!(
                "{}: ECE {:.4} -> {:.4}, Brier {:.4} -> {:.4}",
                r.calibrator.unwrap_or_default(),
                r.ece_pre.unwrap_or(f64::NAN),
                r.ece_post.unwrap_or(f64::NAN),
                r.brier_pre.unwrap_or(f64::NAN),
                r.brier_post.unwrap_or(f64::NAN)
            );
        }
        Command::Conformal(t) => {
            let (_, r) = run.conformal(t.pipeline, t.k)?;
            println!(
                "coverage {:.4} +- {:.4}, mean bound {:.4}",
                r.coverage.unwrap_or(f64::NAN),
                r.coverage_spread.unwrap_or(f64::NAN),
                r.mean_bound.unwrap_or(f64::NAN)
            );
        }
        Command::Report => {
            let rows = run.report()?;
            println!("{} rows -> {}", rows.len(), run.layout.result("report.csv").display());
        }
        Command::All => {
            let rows = run.run_all()?;
            println!("{} rows -> {}", rows.len(), run.layout.result("report.csv").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) => 2,
                Error::MissingArtifact { .. } => 3,
                _ => 1,
            })
        }
    }
}
