use std::collections::BTreeSet;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::Serialize;
use vispinn_core::csvio::{self, fmt_f64};
use vispinn_core::loss::{expected_loss_mc, lambda_hat};
use vispinn_core::operators::OperatorSpec;
use vispinn_core::oracle::{reference_for, Reference};
use vispinn_core::sampling::density_constants;
use vispinn_core::stats;
use vispinn_core::training::c0_error;

use super::train::train_one;
use crate::config::RunConfig;
use crate::error::CliError;

pub const SWEEP_SCHEMA: &str = "sweep";
pub const SUMMARY_SCHEMA: &str = "vispinn-sweep-v1";

pub const SWEEP_COLUMNS: [&str; 13] = [
    "m_r",
    "m_b",
    "seed",
    "lambda_hat_r",
    "lambda_hat_b",
    "loss_pinn",
    "expected_loss",
    "expected_loss_stderr",
    "c0_error",
    "holder_residual",
    "holder_boundary",
    "holder_interior",
    "status",
];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RowMetrics {
    pub loss_pinn: f64,
    pub expected_loss: f64,
    pub expected_loss_stderr: f64,
    pub c0_error: f64,
    pub holder_residual: f64,
    pub holder_boundary: Option<f64>,
    pub holder_interior: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub m_r: usize,
    pub m_b: usize,
    pub seed: u64,
    pub lambda_hat_r: f64,
    pub lambda_hat_b: f64,
    /// `Err` holds the failure message of a row that did not complete.
    pub outcome: Result<RowMetrics, String>,
}

impl SweepRow {
    fn cells(&self) -> Vec<String> {
        let mut cells = vec![
            self.m_r.to_string(),
            self.m_b.to_string(),
            self.seed.to_string(),
            fmt_f64(self.lambda_hat_r),
            fmt_f64(self.lambda_hat_b),
        ];
        match &self.outcome {
            Ok(m) => {
                cells.extend([
                    fmt_f64(m.loss_pinn),
                    fmt_f64(m.expected_loss),
                    fmt_f64(m.expected_loss_stderr),
                    fmt_f64(m.c0_error),
                    fmt_f64(m.holder_residual),
                    m.holder_boundary.map(fmt_f64).unwrap_or_default(),
                    fmt_f64(m.holder_interior),
                    "ok".into(),
                ]);
            }
            Err(msg) => {
                cells.extend(std::iter::repeat_n(String::new(), 7));
                cells.push(format!("failed: {msg}"));
            }
        }
        cells
    }
}

/// Per-`m_r` medians across successful seeds and the fitted rate.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepSummary {
    pub schema: String,
    pub version: String,
    pub operator: String,
    pub alpha: f64,
    pub dim: usize,
    pub m_r: Vec<usize>,
    pub median_expected_loss: Vec<Option<f64>>,
    pub median_c0_error: Vec<Option<f64>>,
    pub median_holder_interior: Vec<Option<f64>>,
    /// Log-log slope of the median expected loss against `m_r`, present
    /// when at least three sample sizes have a successful row.
    pub slope: Option<f64>,
    /// `-alpha / d`, reported for reference only.
    pub theoretical_rate: f64,
    /// Adjacent sample sizes where the median C0 error increases.
    pub c0_inversions: usize,
    pub failed_rows: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub summary: SweepSummary,
}

impl SweepResult {
    pub fn to_csv(&self, seed_label: &str) -> Result<String, CliError> {
        Ok(csvio::table_to_string(
            SWEEP_SCHEMA,
            seed_label,
            &SWEEP_COLUMNS,
            self.rows.iter().map(SweepRow::cells),
        )?)
    }
}

fn sweep_row(cfg: &RunConfig, spec: &OperatorSpec, reference: &Reference, m_r: usize, seed: u64) -> SweepRow {
    let m_b = spec.domain.boundary_count(m_r);
    let sched = density_constants(&spec.domain)
        .and_then(|k| lambda_hat(&cfg.weights().expect("validated"), m_r, m_b, spec.dim(), cfg.alpha, &k));
    let (lambda_hat_r, lambda_hat_b) = sched
        .as_ref()
        .map(|s| (s.lambda_hat_r * cfg.kappa, s.lambda_hat_b * cfg.kappa))
        .unwrap_or((f64::NAN, f64::NAN));
    let outcome = (|| -> Result<RowMetrics, CliError> {
        let report = train_one(cfg, spec, m_r, seed)?;
        let mc = expected_loss_mc(&report.params, spec, &cfg.weights()?, cfg.mc_samples, seed)?;
        let probe = spec.domain.probe_grid(cfg.probe_resolution(spec.dim()))?;
        let c0 = c0_error(&report.params, |x| reference.value(x), &probe)?;
        let s = &report.summary;
        Ok(RowMetrics {
            loss_pinn: s.final_pinn_loss,
            expected_loss: mc.value,
            expected_loss_stderr: mc.stderr,
            c0_error: c0,
            holder_residual: s.holder_residual,
            holder_boundary: s.holder_boundary,
            holder_interior: s.holder_interior,
        })
    })()
    .map_err(|e| e.to_string());
    SweepRow {
        m_r,
        m_b,
        seed,
        lambda_hat_r,
        lambda_hat_b,
        outcome,
    }
}

fn median_of<F: Fn(&RowMetrics) -> f64>(rows: &[SweepRow], m_r: usize, f: F) -> Option<f64> {
    let v: Vec<f64> = rows
        .iter()
        .filter(|r| r.m_r == m_r)
        .filter_map(|r| r.outcome.as_ref().ok().map(&f))
        .collect();
    (!v.is_empty()).then(|| stats::median(&v))
}

/// Trains one network per `(m_r, seed)` and evaluates it against the
/// reference solution. Rows run in parallel and are sorted before
/// summarising, so the result does not depend on scheduling.
pub fn run_sweep(cfg: &RunConfig) -> Result<SweepResult, CliError> {
    let spec = cfg.operator()?;
    cfg.architecture(&spec)?;
    cfg.weights()?;
    let sizes: Vec<usize> = cfg
        .sample_counts()?
        .into_iter()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if sizes.len() < 3 {
        return Err(CliError::Config(
            "key `m_r`: a sweep needs at least three distinct values".into(),
        ));
    }
    let seeds = cfg.seeds()?.to_vec();
    for &s in &seeds {
        cfg.train_config(s, spec.dim())?;
    }
    let reference = reference_for(&spec, cfg.oracle_n)?;
    let jobs: Vec<(usize, u64)> = sizes
        .iter()
        .flat_map(|&m| seeds.iter().map(move |&s| (m, s)))
        .collect();
    let mut rows: Vec<SweepRow> = jobs
        .par_iter()
        .map(|&(m, s)| sweep_row(cfg, &spec, &reference, m, s))
        .collect();
    rows.sort_by_key(|r| (r.m_r, r.seed));

    let median_expected_loss: Vec<Option<f64>> =
        sizes.iter().map(|&m| median_of(&rows, m, |r| r.expected_loss)).collect();
    let median_c0_error: Vec<Option<f64>> =
        sizes.iter().map(|&m| median_of(&rows, m, |r| r.c0_error)).collect();
    let median_holder_interior =
        sizes.iter().map(|&m| median_of(&rows, m, |r| r.holder_interior)).collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = sizes
        .iter()
        .zip(&median_expected_loss)
        .filter_map(|(&m, v)| v.filter(|v| *v > 0.0).map(|v| (m as f64, v)))
        .unzip();
    let slope = (xs.len() >= 3).then(|| stats::loglog_slope(&xs, &ys));
    let c0_inversions = median_c0_error
        .windows(2)
        .filter(|w| matches!((w[0], w[1]), (Some(a), Some(b)) if b > a))
        .count();
    let failed_rows = rows.iter().filter(|r| r.outcome.is_err()).count();
    Ok(SweepResult {
        summary: SweepSummary {
            schema: SUMMARY_SCHEMA.into(),
            version: csvio::VERSION.into(),
            operator: spec.name.into(),
            alpha: cfg.alpha,
            dim: spec.dim(),
            m_r: sizes,
            median_expected_loss,
            median_c0_error,
            median_holder_interior,
            slope,
            theoretical_rate: -cfg.alpha / spec.dim() as f64,
            c0_inversions,
            failed_rows,
        },
        rows,
    })
}

/// Runs the sweep and writes `sweep.csv` and `sweep-summary.json`.
pub fn cmd_sweep(cfg: &RunConfig) -> Result<(SweepResult, Vec<PathBuf>), CliError> {
    let result = run_sweep(cfg)?;
    let out = cfg.out_dir();
    std::fs::create_dir_all(&out)?;
    let seed_label = cfg
        .seeds
        .iter()
        .map(u64::to_string)
        .collect::<Vec<_>>()
        .join(";");
    let csv_path = out.join("sweep.csv");
    std::fs::write(&csv_path, result.to_csv(&seed_label)?)?;
    let json_path = out.join("sweep-summary.json");
    std::fs::write(
        &json_path,
        serde_json::to_string_pretty(&result.summary).map_err(vispinn_core::Error::from)?,
    )?;
    Ok((result, vec![csv_path, json_path]))
}
