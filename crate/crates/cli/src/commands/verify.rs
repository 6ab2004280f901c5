use std::path::PathBuf;

use clap::ValueEnum;
use serde::Serialize;
use serde_json::{json, Value};
use vispinn_core::loss::{lambda_hat, BoundChecker};
use vispinn_core::network::MlpParams;
use vispinn_core::operators::{catalog, check_ellipticity};
use vispinn_core::oracle::comparison_suite;
use vispinn_core::sampling::{
    default_probe_resolution, density_constants, fill_distance_slope, sample_training_set,
    verify_fill_lemma,
};

use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    Sampling,
    Ellipticity,
    Bound,
    Comparison,
}

impl Check {
    pub fn name(self) -> &'static str {
        match self {
            Check::Sampling => "sampling",
            Check::Ellipticity => "ellipticity",
            Check::Bound => "bound",
            Check::Comparison => "comparison",
        }
    }

    fn default_trials(self) -> usize {
        match self {
            Check::Sampling => 200,
            Check::Ellipticity => 1000,
            Check::Bound => 50,
            Check::Comparison => 20,
        }
    }
}

/// Pass/fail lines for the terminal and a JSON record for the output
/// directory.
#[derive(Clone, Debug)]
pub struct VerifyOutcome {
    pub check: Check,
    pub passed: bool,
    pub lines: Vec<String>,
    pub record: Value,
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn verify_sampling(cfg: &RunConfig, trials: usize, seed: u64) -> Result<VerifyOutcome, CliError> {
    let mut lines = Vec::new();
    let mut reports = Vec::new();
    for (domain, n) in cfg.sampling_cases()? {
        let r = verify_fill_lemma(&domain, n, trials, seed, default_probe_resolution(domain.dim))?;
        lines.push(format!(
            "{} fill lemma n={} d={}: success {:.3} vs theoretical {:.3} - 2se ({:.3})",
            verdict(r.passed),
            r.n,
            r.dim,
            r.success_fraction,
            r.theoretical_probability,
            r.standard_error
        ));
        reports.push(r);
    }
    // the fitted fill-distance slope is reported, not gated
    let mut dims: Vec<usize> = cfg.sampling_dim.clone();
    dims.sort_unstable();
    dims.dedup();
    let mut slopes = Vec::new();
    for d in dims {
        let domain = vispinn_core::sampling::Domain::new(cfg.sampling_domain, d)
            .map_err(|e| CliError::Config(format!("key `sampling_dim`: {e}")))?;
        let slope = fill_distance_slope(&domain, &cfg.slope_n, trials, seed, default_probe_resolution(d))?;
        let target = -1.0 / (2.0 * d as f64);
        lines.push(format!(
            "INFO fill-distance slope d={d}: {slope:.3} (reference {target:.3})"
        ));
        slopes.push(json!({ "dim": d, "slope": slope, "reference": target, "n": cfg.slope_n }));
    }
    let passed = reports.iter().all(|r| r.passed);
    Ok(VerifyOutcome {
        check: Check::Sampling,
        passed,
        lines,
        record: json!({ "fill_lemma": reports, "fill_distance_slopes": slopes }),
    })
}

fn verify_ellipticity(cfg: &RunConfig, trials: usize, seed: u64) -> Result<VerifyOutcome, CliError> {
    let specs = match cfg.operator {
        Some(_) => vec![cfg.operator()?],
        None => catalog(),
    };
    let reports: Vec<_> = specs.iter().map(|s| check_ellipticity(s, trials, seed)).collect();
    let lines = reports
        .iter()
        .map(|r| {
            format!(
                "{} ellipticity {}: {} violations in {} trials",
                verdict(r.passed()),
                r.operator,
                r.violations,
                r.trials
            )
        })
        .collect();
    Ok(VerifyOutcome {
        check: Check::Ellipticity,
        passed: reports.iter().all(|r| r.passed()),
        lines,
        record: json!({ "operators": reports }),
    })
}

/// Required fraction of random networks satisfying the bound.
pub const BOUND_FRACTION: f64 = 0.95;

fn verify_bound(cfg: &RunConfig, trials: usize, seed: u64) -> Result<VerifyOutcome, CliError> {
    let spec = cfg.operator()?;
    let arch = cfg.architecture(&spec)?;
    let weights = cfg.weights()?;
    let m_r = cfg.single_sample_count()?;
    let set = sample_training_set(&spec.domain, m_r, seed)?;
    let sched = lambda_hat(&weights, set.m_r(), set.m_b(), spec.dim(), cfg.alpha, &density_constants(&spec.domain)?)?
        .with_kappa(cfg.kappa)
        .map_err(|e| CliError::Config(format!("key `kappa`: {e}")))?;
    let checker = BoundChecker::new(&spec, cfg.alpha, seed)?;
    let mut lines = Vec::new();
    let exact = match spec.exact_model() {
        Some(u) => {
            let r = checker.check(&u, &set, &weights, &sched, cfg.mc_samples, seed)?;
            lines.push(format!(
                "{} bound on exact solution of {}: lhs {:.3e} <= rhs {:.3e}",
                verdict(r.holds),
                spec.name,
                r.lhs,
                r.rhs
            ));
            Some(r)
        }
        None => None,
    };
    let mut networks = Vec::with_capacity(trials);
    for k in 0..trials as u64 {
        let h = MlpParams::init(&arch, seed.wrapping_add(k));
        networks.push(checker.check(&h, &set, &weights, &sched, cfg.mc_samples, seed)?);
    }
    let holding = networks.iter().filter(|r| r.holds).count();
    let fraction = if trials > 0 { holding as f64 / trials as f64 } else { 1.0 };
    let nets_ok = fraction >= BOUND_FRACTION;
    lines.push(format!(
        "{} bound on {trials} random networks: {holding} hold ({fraction:.3}, need >= {BOUND_FRACTION})",
        verdict(nets_ok)
    ));
    let passed = nets_ok && exact.as_ref().is_none_or(|r| r.holds);
    Ok(VerifyOutcome {
        check: Check::Bound,
        passed,
        lines,
        record: json!({
            "operator": spec.name,
            "m_r": set.m_r(),
            "m_b": set.m_b(),
            "schedule": sched,
            "g_holder_sq": checker.g_holder_sq(),
            "exact": exact,
            "networks_holding": holding,
            "networks": networks,
        }),
    })
}

fn verify_comparison(cfg: &RunConfig, trials: usize, seed: u64) -> Result<VerifyOutcome, CliError> {
    let reports = comparison_suite(trials, cfg.oracle_n, seed)?;
    let lines = reports
        .iter()
        .map(|r| {
            format!(
                "{} comparison {}: {}/{} ordered pairs stay ordered",
                verdict(r.all_passed()),
                r.solver,
                r.passed,
                r.trials
            )
        })
        .collect();
    Ok(VerifyOutcome {
        check: Check::Comparison,
        passed: reports.iter().all(|r| r.all_passed()),
        lines,
        record: json!({ "solvers": reports }),
    })
}

pub fn run_check(cfg: &RunConfig, check: Check) -> Result<VerifyOutcome, CliError> {
    let trials = cfg.trials.unwrap_or(check.default_trials());
    let seed = *cfg
        .seeds()?
        .first()
        .expect("seeds are nonempty");
    match check {
        Check::Sampling => verify_sampling(cfg, trials, seed),
        Check::Ellipticity => verify_ellipticity(cfg, trials, seed),
        Check::Bound => verify_bound(cfg, trials, seed),
        Check::Comparison => verify_comparison(cfg, trials, seed),
    }
}

/// Runs the check and writes `verify-<check>.json`.
pub fn cmd_verify(cfg: &RunConfig, check: Check) -> Result<(VerifyOutcome, PathBuf), CliError> {
    let outcome = run_check(cfg, check)?;
    let out = cfg.out_dir();
    std::fs::create_dir_all(&out)?;
    let path = out.join(format!("verify-{}.json", check.name()));
    let doc = json!({
        "schema": "vispinn-verify-v1",
        "version": vispinn_core::csvio::VERSION,
        "check": check,
        "passed": outcome.passed,
        "result": outcome.record,
    });
    std::fs::write(
        &path,
        serde_json::to_string_pretty(&doc).map_err(vispinn_core::Error::from)?,
    )?;
    Ok((outcome, path))
}
