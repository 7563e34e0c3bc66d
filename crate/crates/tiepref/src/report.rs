//! Tabular outputs: bias tables, bias curves and training reports.

use std::io::Write;

use serde::Serialize;
use tiepref_core::experiments::{BiasGapResult, CurveRow};
use tiepref_core::train::{TrainConfig, TrainingReport};

#[derive(Serialize)]
struct BiasTableRow {
    theta: f64,
    mean_abs_bias_bt: f64,
    mean_abs_bias_btt: f64,
    gap: f64,
    n_eval_pairs: usize,
    seed: u64,
}

#[derive(Serialize)]
struct BiasCurveRow {
    delta_r_star: f64,
    theta: f64,
    bias: f64,
    bias_ratio: f64,
}

pub fn write_bias_table<W: Write>(rows: &[BiasGapResult], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(BiasTableRow {
            theta: r.theta,
            mean_abs_bias_bt: r.mean_abs_bias_bt,
            mean_abs_bias_btt: r.mean_abs_bias_btt,
            gap: r.gap,
            n_eval_pairs: r.n_eval_pairs,
            seed: r.seed,
        })?;
    }
    if rows.is_empty() {
        w.write_record(["theta", "mean_abs_bias_bt", "mean_abs_bias_btt", "gap", "n_eval_pairs", "seed"])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_bias_curve<W: Write>(rows: &[CurveRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(BiasCurveRow {
            delta_r_star: r.delta_r_star,
            theta: r.theta,
            bias: r.bias,
            bias_ratio: r.bias_ratio,
        })?;
    }
    if rows.is_empty() {
        w.write_record(["delta_r_star", "theta", "bias", "bias_ratio"])?;
    }
    w.flush()?;
    Ok(())
}

/// Machine-readable training report. Wall-clock times are left out so that
/// identical runs produce identical files.
pub fn write_training_report<W: Write>(
    report: &TrainingReport,
    config: &TrainConfig,
    mut out: W,
) -> std::io::Result<()> {
    let theta = config.theta.map_or_else(|| "none".to_owned(), |t| t.theta().to_string());
    writeln!(
        out,
        "#meta loss={} theta={theta} epochs={} stop={} final_loss={}",
        crate::cli::loss_name(config.loss),
        report.epochs.len(),
        report.stop.as_str(),
        report.final_loss().unwrap_or(f64::NAN)
    )?;
    writeln!(out, "epoch,loss,grad_norm")?;
    for e in &report.epochs {
        writeln!(out, "{},{},{}", e.epoch, e.loss, e.grad_norm)?;
    }
    out.flush()
}
