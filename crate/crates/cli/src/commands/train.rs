use std::path::PathBuf;

use rayon::prelude::*;
use vispinn_core::operators::OperatorSpec;
use vispinn_core::sampling::sample_training_set;
use vispinn_core::training::{train, TrainReport};

use crate::config::RunConfig;
use crate::error::CliError;

/// File-name suffix of per-seed outputs.
pub fn seed_suffix(seed: u64) -> String {
    format!("-seed{seed}")
}

/// Trains one network on a training set drawn with `seed` and `m_r`
/// interior samples.
pub fn train_one(cfg: &RunConfig, spec: &OperatorSpec, m_r: usize, seed: u64) -> Result<TrainReport, CliError> {
    let arch = cfg.architecture(spec)?;
    let set = sample_training_set(&spec.domain, m_r, seed)?;
    let tc = cfg.train_config(seed, spec.dim())?;
    Ok(train(spec, &arch, &set, &cfg.weights()?, &tc)?)
}

/// Trains once per configured seed and writes `report`, `weights` and
/// `history` files for each.
pub fn cmd_train(cfg: &RunConfig) -> Result<Vec<(u64, TrainReport, Vec<PathBuf>)>, CliError> {
    let spec = cfg.operator()?;
    cfg.architecture(&spec)?;
    cfg.weights()?;
    let m_r = cfg.single_sample_count()?;
    let seeds = cfg.seeds()?.to_vec();
    for &s in &seeds {
        cfg.train_config(s, spec.dim())?;
    }
    let out = cfg.out_dir();
    let mut runs: Vec<_> = seeds
        .par_iter()
        .map(|&seed| {
            let report = train_one(cfg, &spec, m_r, seed)?;
            let files = report.write(&out, &seed_suffix(seed))?;
            Ok((seed, report, files))
        })
        .collect::<Result<_, CliError>>()?;
    runs.sort_by_key(|r| r.0);
    Ok(runs)
}
