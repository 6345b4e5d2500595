//! Paired Dion runs that differ in one knob.

use std::fs::File;
use std::path::{Path, PathBuf};

use dion_core::optim::LowRankMethod;
use serde::Serialize;

use crate::config::{ConfigError, OptimizerKind, RunConfig};
use crate::metrics::fmt_float;
use crate::train::train;
use crate::{create_dir, write_json, HarnessError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum AblationKind {
    /// Power iteration against an exact truncated SVD, at `r = min(m, n)/2`.
    SvdVsPoweriter,
    /// Error feedback on and off, at `r = min(m, n)/4`.
    ErrorFeedback,
    /// Final loss over the configured rank fractions.
    RankSweep,
}

impl AblationKind {
    pub fn name(self) -> &'static str {
        match self {
            AblationKind::SvdVsPoweriter => "svd_vs_poweriter",
            AblationKind::ErrorFeedback => "error_feedback",
            AblationKind::RankSweep => "rank_sweep",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Arm {
    pub label: String,
    pub rank: usize,
    pub low_rank: LowRankMethod,
    pub error_feedback: bool,
    pub initial_loss: f64,
    pub final_loss: f64,
    /// Loss before each step, then the final loss.
    pub losses: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationReport {
    pub kind: AblationKind,
    pub steps: usize,
    pub seed: u64,
    pub arms: Vec<Arm>,
    /// The property checked, in words.
    pub property: String,
    pub pass: bool,
}

fn run_arm(base: &RunConfig, label: String, rank: usize, low_rank: LowRankMethod, ef: bool) -> Result<Arm, HarnessError> {
    let mut cfg = base.clone();
    cfg.optimizer = OptimizerKind::Dion;
    cfg.dion.rank = Some(rank);
    cfg.dion.low_rank = low_rank;
    cfg.dion.error_feedback = ef;
    let out = train(&cfg)?;
    let mut losses: Vec<f64> = out.rows.iter().map(|r| r.loss).collect();
    losses.push(out.final_loss);
    Ok(Arm {
        label,
        rank,
        low_rank,
        error_feedback: ef,
        initial_loss: out.initial_loss,
        final_loss: out.final_loss,
        losses,
    })
}

/// Runs every arm of `kind` on `cfg`'s task with centralized Dion and checks
/// the expected ordering of final losses.
pub fn run_ablation(kind: AblationKind, cfg: &RunConfig) -> Result<AblationReport, HarnessError> {
    let p = cfg.matrix_param();
    let d = p.d_out.min(p.d_in);
    let a = &cfg.ablation;
    let too_small = |need: usize| {
        HarnessError::Config(ConfigError::Field {
            path: "task".into(),
            message: format!("{} needs min(m, n) ≥ {need}, got {d}", kind.name()),
        })
    };
    let power = LowRankMethod::PowerIteration;
    let (arms, property, pass) = match kind {
        AblationKind::SvdVsPoweriter => {
            if d < 2 {
                return Err(too_small(2));
            }
            let r = d / 2;
            let pi = run_arm(cfg, "power_iteration".into(), r, power, true)?;
            let svd = run_arm(cfg, "truncated_svd".into(), r, LowRankMethod::TruncatedSvd, true)?;
            let (lo, hi) = (pi.final_loss.min(svd.final_loss), pi.final_loss.max(svd.final_loss));
            let pass = hi <= lo * (1.0 + a.svd_tolerance);
            let property = format!("final losses within {} of each other", a.svd_tolerance);
            (vec![pi, svd], property, pass)
        }
        AblationKind::ErrorFeedback => {
            if d < 4 {
                return Err(too_small(4));
            }
            let r = d / 4;
            let on = run_arm(cfg, "error_feedback_on".into(), r, power, true)?;
            let off = run_arm(cfg, "error_feedback_off".into(), r, power, false)?;
            let pass = off.final_loss > on.final_loss;
            (vec![on, off], "error feedback off ends strictly worse".into(), pass)
        }
        AblationKind::RankSweep => {
            let mut ranks: Vec<usize> = Vec::new();
            for (i, &f) in a.rank_fractions.iter().enumerate() {
                if !(f > 0.0 && f <= 1.0) {
                    return Err(HarnessError::Config(ConfigError::Field {
                        path: format!("ablation.rank_fractions[{i}]"),
                        message: format!("must be in (0, 1], got {f}"),
                    }));
                }
                let r = ((f * d as f64).round() as usize).max(1);
                if !ranks.contains(&r) {
                    ranks.push(r);
                }
            }
            ranks.sort_unstable();
            let arms = ranks
                .iter()
                .map(|&r| run_arm(cfg, format!("rank_{r}"), r, power, true))
                .collect::<Result<Vec<_>, _>>()?;
            let pass = arms
                .windows(2)
                .all(|w| w[1].final_loss <= w[0].final_loss * (1.0 + a.rank_noise));
            let property = format!("final loss nonincreasing in rank within {}", a.rank_noise);
            (arms, property, pass)
        }
    };
    Ok(AblationReport {
        kind,
        steps: cfg.steps,
        seed: cfg.seed,
        arms,
        property,
        pass,
    })
}

/// Writes `ablation_<kind>.json` and a long-form `ablation_<kind>.csv` of
/// loss curves. Returns the CSV path.
pub fn write_report(report: &AblationReport, out: &Path) -> Result<PathBuf, HarnessError> {
    create_dir(out)?;
    let stem = format!("ablation_{}", report.kind.name());
    write_json(&out.join(format!("{stem}.json")), report)?;
    let path = out.join(format!("{stem}.csv"));
    let mut w = csv::Writer::from_writer(File::create(&path).map_err(HarnessError::io(&path))?);
    w.write_record(["arm", "rank", "step", "loss"])?;
    for arm in &report.arms {
        for (step, loss) in arm.losses.iter().enumerate() {
            w.write_record([arm.label.clone(), arm.rank.to_string(), step.to_string(), fmt_float(*loss)])?;
        }
    }
    w.flush().map_err(HarnessError::io(&path))?;
    Ok(path)
}
