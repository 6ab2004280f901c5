//! Training reports and loss histories.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::csvio;
use crate::error::{Error, Result};
use crate::loss::{LossWeights, RegSchedule};
use crate::network::MlpParams;
use crate::sampling::DensityConstants;

use super::TrainConfig;

pub const REPORT_SCHEMA: &str = "vispinn-report-v1";
pub const HISTORY_SCHEMA: &str = "loss-history";

pub const HISTORY_COLUMNS: [&str; 12] = [
    "step",
    "loss_pinn",
    "loss_reg_r",
    "loss_reg_b",
    "lambda_hat_r",
    "lambda_hat_b",
    "C_m",
    "loss_total",
    "running_min",
    "holder_residual",
    "holder_boundary",
    "holder_interior",
];

/// One logged optimizer step. `holder_*` are hard-mode squared seminorm
/// estimates of `F[h]` on the interior samples, `h` on the boundary samples
/// and `h` on the interior samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub step: usize,
    pub loss_pinn: f64,
    pub loss_reg_r: f64,
    pub loss_reg_b: f64,
    pub lambda_hat_r: f64,
    pub lambda_hat_b: f64,
    #[serde(rename = "C_m")]
    pub c_m: f64,
    pub loss_total: f64,
    pub running_min: f64,
    pub holder_residual: f64,
    pub holder_boundary: f64,
    pub holder_interior: f64,
}

impl HistoryRow {
    fn cells(&self) -> Vec<String> {
        let f = csvio::fmt_f64;
        vec![
            self.step.to_string(),
            f(self.loss_pinn),
            f(self.loss_reg_r),
            f(self.loss_reg_b),
            f(self.lambda_hat_r),
            f(self.lambda_hat_b),
            f(self.c_m),
            f(self.loss_total),
            f(self.running_min),
            f(self.holder_residual),
            f(self.holder_boundary),
            f(self.holder_interior),
        ]
    }
}

/// Serializable part of a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub schema: String,
    pub version: String,
    pub operator: String,
    pub arch: Vec<usize>,
    pub seed: u64,
    pub training_set_seed: u64,
    pub m_r: usize,
    pub m_b: usize,
    pub config: TrainConfig,
    pub weights: LossWeights,
    pub schedule: RegSchedule,
    pub density_constants: DensityConstants,
    pub steps_run: usize,
    pub best_step: usize,
    pub initial_loss: f64,
    /// Smooth-mode regularized loss of the returned parameters.
    pub final_regularized_loss: f64,
    pub final_pinn_loss: f64,
    /// Regularized loss recomputed with hard maxima over every pair.
    pub final_regularized_loss_hard: f64,
    pub holder_residual: f64,
    pub holder_boundary: Option<f64>,
    pub holder_interior: f64,
    pub c0_error: Option<f64>,
    pub wall_clock_seconds: Option<f64>,
    /// Hölder estimates at every logged step.
    pub holder_trace: Vec<HolderTracePoint>,
}

/// Squared seminorm estimates at one logged step, as in [`HistoryRow`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderTracePoint {
    pub step: usize,
    pub residual: f64,
    pub boundary: f64,
    pub interior: f64,
}

impl From<&HistoryRow> for HolderTracePoint {
    fn from(r: &HistoryRow) -> Self {
        Self {
            step: r.step,
            residual: r.holder_residual,
            boundary: r.holder_boundary,
            interior: r.holder_interior,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub summary: TrainSummary,
    pub params: MlpParams,
    pub history: Vec<HistoryRow>,
}

impl TrainReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.summary)?)
    }

    pub fn summary_from_json(text: &str) -> Result<TrainSummary> {
        let s: TrainSummary = serde_json::from_str(text)?;
        if s.schema != REPORT_SCHEMA {
            return Err(Error::Schema(format!(
                "unknown report schema `{}` (expected `{REPORT_SCHEMA}`)",
                s.schema
            )));
        }
        Ok(s)
    }

    pub fn history_csv(&self) -> Result<String> {
        csvio::table_to_string(
            HISTORY_SCHEMA,
            &self.summary.seed.to_string(),
            &HISTORY_COLUMNS,
            self.history.iter().map(HistoryRow::cells),
        )
    }

    /// Writes `report.json`, `weights.json` and `history.csv` with the given
    /// file-name suffix.
    pub fn write(&self, dir: &Path, suffix: &str) -> Result<Vec<std::path::PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let report = dir.join(format!("report{suffix}.json"));
        let weights = dir.join(format!("weights{suffix}.json"));
        let history = dir.join(format!("history{suffix}.csv"));
        std::fs::write(&report, self.to_json()?)?;
        self.params.save(&weights)?;
        std::fs::write(&history, self.history_csv()?)?;
        Ok(vec![report, weights, history])
    }
}
