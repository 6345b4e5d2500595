use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use dion_harness::ablation::{self, AblationKind};
use dion_harness::{config, costs, equivalence, train, RunConfig};

#[derive(Parser)]
#[command(name = "dion", version, about = "Toy runs, equivalence checks, ablations and cost reports for Dion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run config; every key is optional
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `seed` from the config
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory [default: output.dir from the config, else ./out]
    #[arg(long, env = "DION_OUTPUT_DIR")]
    out: Option<PathBuf>,
    /// Config override, e.g. `--set dion.rank=8`; repeatable
    #[arg(long = "set", value_name = "PATH=VALUE")]
    overrides: Vec<String>,
}

impl Common {
    fn load(&self) -> Result<(RunConfig, PathBuf)> {
        let mut cfg = match &self.config {
            Some(path) => config::load(path, &self.overrides)?,
            None => config::parse("", &self.overrides)?,
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        let out = cfg.output_dir(self.out.as_deref());
        Ok((cfg, out))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a toy task and write metrics.csv, summary.json and a checkpoint
    Run(Common),
    /// Compare centralized and distributed Dion step by step
    VerifyEquivalence(Common),
    /// Run one ablation and check its expected ordering
    Ablate {
        #[arg(long, value_enum)]
        kind: AblationKind,
        #[command(flatten)]
        common: Common,
    },
    /// Check cost-model predictions against measured ledgers
    ReportCosts {
        /// TOML file with `[[shapes]]` entries {m, n, r, mesh, transposed}; a
        /// built-in sweep of twelve shapes when absent
        #[arg(long)]
        shapes: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

/// `Ok(false)` means the command ran but an invariant failed.
fn execute(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run(common) => {
            let (cfg, out) = common.load()?;
            let metrics = train::run_task(&cfg, &out).context("run failed")?;
            println!("wrote {}", metrics.display());
            Ok(true)
        }
        Command::VerifyEquivalence(common) => {
            let (cfg, out) = common.load()?;
            let report = equivalence::verify_equivalence(&cfg)?;
            equivalence::write_report(&report, &out)?;
            for run in &report.runs {
                println!(
                    "{} {} {:?}: max weight gap {:e}, max momentum gap {:e}",
                    verdict(run.pass),
                    run.mesh,
                    run.orientation,
                    run.max_weight_divergence,
                    run.max_momentum_divergence
                );
                if let Some(step) = run.first_failing_step {
                    println!("  first failing step: {step}");
                }
            }
            println!("{} equivalence at {:e}", verdict(report.pass), report.tolerance);
            Ok(report.pass)
        }
        Command::Ablate { kind, common } => {
            let (cfg, out) = common.load()?;
            let report = ablation::run_ablation(kind, &cfg)?;
            let csv = ablation::write_report(&report, &out)?;
            for arm in &report.arms {
                println!("{}: final loss {:e}", arm.label, arm.final_loss);
            }
            println!("{} {}: {} ({})", verdict(report.pass), kind.name(), report.property, csv.display());
            Ok(report.pass)
        }
        Command::ReportCosts { shapes, common } => {
            let (cfg, out) = common.load()?;
            let list = match &shapes {
                Some(path) => costs::load_shapes(path)?,
                None => costs::default_shapes(),
            };
            let report = costs::report_costs(&list, cfg.seed)?;
            costs::write_report(&report, &out)?;
            for m in &report.mismatches {
                println!("mismatch: {m}");
            }
            println!("{} {} shapes", verdict(report.pass), report.shapes.len());
            Ok(report.pass)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
