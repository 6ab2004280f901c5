use std::path::{Path, PathBuf};

use vispinn_core::csvio::{self, fmt_f64};
use vispinn_core::training::{TrainReport, TrainSummary};

use crate::config::RunConfig;
use crate::error::CliError;

pub const RUNS_SCHEMA: &str = "run-summary";

pub const RUNS_COLUMNS: [&str; 13] = [
    "file",
    "operator",
    "seed",
    "m_r",
    "m_b",
    "steps",
    "best_step",
    "final_pinn_loss",
    "final_regularized_loss",
    "final_regularized_loss_hard",
    "holder_residual",
    "holder_interior",
    "c0_error",
];

/// Training reports found in `dir`, sorted by file name.
pub fn collect_reports(dir: &Path) -> Result<Vec<(String, TrainSummary)>, CliError> {
    let mut names: Vec<String> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.starts_with("report") && n.ends_with(".json"))
        .collect();
    names.sort();
    names
        .into_iter()
        .map(|n| {
            let text = std::fs::read_to_string(dir.join(&n))?;
            Ok((n, TrainReport::summary_from_json(&text)?))
        })
        .collect()
}

/// Collates every training report in the output directory into `runs.csv`.
pub fn cmd_report(cfg: &RunConfig) -> Result<(PathBuf, usize), CliError> {
    let dir = cfg.out_dir();
    let reports = collect_reports(&dir)?;
    if reports.is_empty() {
        return Err(CliError::Run(vispinn_core::Error::InvalidInput(format!(
            "no training reports in {}",
            dir.display()
        ))));
    }
    let rows = reports.iter().map(|(file, s)| {
        vec![
            file.clone(),
            s.operator.clone(),
            s.seed.to_string(),
            s.m_r.to_string(),
            s.m_b.to_string(),
            s.steps_run.to_string(),
            s.best_step.to_string(),
            fmt_f64(s.final_pinn_loss),
            fmt_f64(s.final_regularized_loss),
            fmt_f64(s.final_regularized_loss_hard),
            fmt_f64(s.holder_residual),
            fmt_f64(s.holder_interior),
            s.c0_error.map(fmt_f64).unwrap_or_default(),
        ]
    });
    let seeds = reports
        .iter()
        .map(|(_, s)| s.seed.to_string())
        .collect::<Vec<_>>()
        .join(";");
    let text = csvio::table_to_string(RUNS_SCHEMA, &seeds, &RUNS_COLUMNS, rows)?;
    let path = dir.join("runs.csv");
    std::fs::write(&path, text)?;
    Ok((path, reports.len()))
}
