//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the verdict lines always reach the
//! terminal. Pass criterion numbers as arguments to run a subset, e.g.
//! `cargo test -p vispinn-cli --test acceptance -- 3 4`.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use vispinn_cli::commands::sweep::run_sweep;
use vispinn_cli::commands::train::train_one;
use vispinn_cli::commands::verify::{run_check, Check, BOUND_FRACTION};
use vispinn_cli::config::RunConfig;
use vispinn_core::fidelity::{composite_fidelity, network_fidelity};
use vispinn_core::loss::{lambda_hat, BoundChecker, LossWeights};
use vispinn_core::operators::{by_name, catalog, check_ellipticity};
use vispinn_core::oracle::{comparison_suite, poisson_order_study, solve_eikonal_1d};
use vispinn_core::sampling::{
    default_probe_resolution, density_constants, fill_distance_slope, sample_training_set,
    verify_fill_lemma, DensityConstants, Domain,
};

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

type Outcome = Result<(bool, String), String>;

const SEED: u64 = 0;

fn within(elapsed: Duration, limit_secs: u64) -> (bool, String) {
    let ok = elapsed.as_secs_f64() < limit_secs as f64;
    (ok, format!("{:.1}s (limit {limit_secs}s)", elapsed.as_secs_f64()))
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs()
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load(name: &str) -> Result<RunConfig, String> {
    RunConfig::load(&configs_dir().join(name)).map_err(|e| e.to_string())
}

fn autodiff_fidelity() -> Outcome {
    let start = Instant::now();
    let comp = composite_fidelity(100, SEED).map_err(|e| e.to_string())?;
    let nets = network_fidelity(50, SEED).map_err(|e| e.to_string())?;
    let (fast, time) = within(start.elapsed(), 60);
    Ok((
        comp.passed() && nets.passed() && fast,
        format!(
            "100 composites grad {:.1e} hess {:.1e}; 50 networks grad {:.1e} hess {:.1e} params {:.1e}; {time}",
            comp.max_grad_error,
            comp.max_hess_error,
            nets.max_grad_error,
            nets.max_hess_error,
            nets.max_param_error
        ),
    ))
}

fn fill_lemma() -> Outcome {
    let start = Instant::now();
    let mut ok = true;
    let mut parts = Vec::new();
    for (n, d) in [(16, 1), (100, 1), (100, 2), (1024, 2)] {
        let r = verify_fill_lemma(&Domain::hypercube(d), n, 200, SEED, default_probe_resolution(d))
            .map_err(|e| e.to_string())?;
        ok &= r.passed;
        parts.push(format!(
            "(n={n},d={d}) {:.3} vs {:.3}",
            r.success_fraction,
            r.theoretical_probability - 2.0 * r.standard_error
        ));
    }
    for d in [1, 2] {
        let slope = fill_distance_slope(
            &Domain::hypercube(d),
            &[16, 64, 256, 1024],
            200,
            SEED,
            default_probe_resolution(d),
        )
        .map_err(|e| e.to_string())?;
        let target = -1.0 / (2.0 * d as f64);
        ok &= (slope - target).abs() <= 0.1;
        parts.push(format!("slope d={d} {slope:.3} vs {target:.3}"));
    }
    let (fast, time) = within(start.elapsed(), 120);
    Ok((ok && fast, format!("{}; {time}", parts.join(", "))))
}

fn schedule_exactness() -> Outcome {
    let unit = DensityConstants::unit();
    let w = LossWeights::unit();
    let two = lambda_hat(&w, 100, 10, 2, 1.0, &unit).map_err(|e| e.to_string())?;
    let one = lambda_hat(&w, 100, 2, 1, 1.0, &unit).map_err(|e| e.to_string())?;
    let checks = [
        ("d=2 C_m", two.c_m, 60.0),
        ("d=2 lambda_hat_r", two.lambda_hat_r, 0.01),
        ("d=2 lambda_hat_b", two.lambda_hat_b, 0.01),
        ("d=1 lambda_hat_r", one.lambda_hat_r, 0.001),
    ];
    let ok = checks.iter().all(|(_, got, want)| rel_close(*got, *want, 1e-12)) && one.lambda_hat_b == 0.0;
    let detail = checks
        .iter()
        .map(|(name, got, want)| format!("{name} {got:e} (hand {want:e})"))
        .chain([format!("d=1 lambda_hat_b {:e}", one.lambda_hat_b)])
        .collect::<Vec<_>>()
        .join(", ");
    Ok((ok, detail))
}

fn ellipticity() -> Outcome {
    let reports: Vec<_> = catalog().iter().map(|s| check_ellipticity(s, 1000, SEED)).collect();
    let ok = reports.iter().all(|r| r.passed() && r.trials == 1000);
    let detail = reports
        .iter()
        .map(|r| format!("{} {}/{}", r.operator, r.violations, r.trials))
        .collect::<Vec<_>>()
        .join(", ");
    Ok((ok, format!("violations {detail}")))
}

fn exact_bound(name: &str, m_r: usize) -> Result<(bool, f64, f64), String> {
    let spec = by_name(name).map_err(|e| e.to_string())?;
    let set = sample_training_set(&spec.domain, m_r, SEED).map_err(|e| e.to_string())?;
    let w = LossWeights::unit();
    let k = density_constants(&spec.domain).map_err(|e| e.to_string())?;
    let sched = lambda_hat(&w, set.m_r(), set.m_b(), spec.dim(), 1.0, &k).map_err(|e| e.to_string())?;
    let u = spec.exact_model().ok_or("no exact solution")?;
    let r = BoundChecker::new(&spec, 1.0, SEED)
        .and_then(|c| c.check(&u, &set, &w, &sched, 10_000, SEED))
        .map_err(|e| e.to_string())?;
    Ok((r.holds, r.lhs, r.rhs))
}

fn generalization_bound() -> Outcome {
    let start = Instant::now();
    let (p2_holds, p2_lhs, p2_rhs) = exact_bound("poisson1d", 256)?;
    let cfg = RunConfig::parse("operator = \"poisson2d\"\nm_r = 256\ntrials = 50\n").map_err(|e| e.to_string())?;
    let outcome = run_check(&cfg, Check::Bound).map_err(|e| e.to_string())?;
    let exact = &outcome.record["exact"];
    let holding = outcome.record["networks_holding"].as_u64().unwrap_or(0);
    let (fast, time) = within(start.elapsed(), 300);
    Ok((
        outcome.passed && p2_holds && fast,
        format!(
            "P1 exact lhs {:.1e} <= rhs {:.3e}; P2 exact lhs {p2_lhs:.1e} <= rhs {p2_rhs:.3e}; \
             P1 networks {holding}/50 hold (need {BOUND_FRACTION}); {time}",
            exact["lhs"].as_f64().unwrap_or(f64::NAN),
            exact["rhs"].as_f64().unwrap_or(f64::NAN),
        ),
    ))
}

fn oracle_orders() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for name in ["poisson1d", "poisson2d"] {
        let spec = by_name(name).map_err(|e| e.to_string())?;
        let study = poisson_order_study(&spec, &[32, 64, 128]).map_err(|e| e.to_string())?;
        ok &= (1.7..=2.3).contains(&study.order);
        parts.push(format!("{name} order {:.3}", study.order));
    }
    let n = 128;
    let grid = solve_eikonal_1d(0.0, 0.0, n).map_err(|e| e.to_string())?;
    let err = (0..grid.len())
        .map(|k| {
            let x = grid.coords(k)[0];
            (grid.values[k] - x.min(1.0 - x)).abs()
        })
        .fold(0.0, f64::max);
    ok &= err <= grid.h;
    parts.push(format!("eikonal sup error {err:.1e} (h {:.1e})", grid.h));
    let reports = comparison_suite(20, 64, SEED).map_err(|e| e.to_string())?;
    for r in &reports {
        ok &= r.all_passed() && r.trials == 20;
        parts.push(format!("comparison {} {}/{}", r.solver, r.passed, r.trials));
    }
    Ok((ok, parts.join(", ")))
}

fn desk_convergence() -> Outcome {
    let start = Instant::now();
    let mut ok = true;
    let mut parts = Vec::new();

    let p2 = run_sweep(&load("p2-sweep.toml")?).map_err(|e| e.to_string())?;
    let s = &p2.summary;
    let largest = *s.m_r.last().ok_or("empty sweep")?;
    let pinn: Vec<f64> = p2
        .rows
        .iter()
        .filter(|r| r.m_r == largest)
        .filter_map(|r| r.outcome.as_ref().ok().map(|m| m.loss_pinn))
        .collect();
    let med_pinn = if pinn.is_empty() { f64::NAN } else { vispinn_core::stats::median(&pinn) };
    let med_c0 = s.median_c0_error.last().copied().flatten().unwrap_or(f64::NAN);
    let slope = s.slope.unwrap_or(f64::NAN);
    let p2_ok = s.failed_rows == 0 && med_pinn <= 1e-4 && med_c0 <= 5e-3 && slope < 0.0;
    ok &= p2_ok;
    parts.push(format!(
        "P2 m_r={largest} median pinn {med_pinn:.2e} (<= 1e-4), median C0 {med_c0:.2e} (<= 5e-3), \
         expected-loss slope {slope:.2}"
    ));

    let ma_cfg = load("monge-ampere.toml")?;
    let spec = ma_cfg.operator().map_err(|e| e.to_string())?;
    let ma = train_one(&ma_cfg, &spec, ma_cfg.single_sample_count().map_err(|e| e.to_string())?, ma_cfg.seeds[0])
        .map_err(|e| e.to_string())?;
    let ma_c0 = ma.summary.c0_error.unwrap_or(f64::NAN);
    let ma_pinn = ma.summary.final_pinn_loss;
    ok &= ma_c0 <= 5e-2 && ma_pinn <= 1e-3;
    parts.push(format!("MA C0 {ma_c0:.2e} (<= 5e-2), pinn {ma_pinn:.2e} (<= 1e-3)"));

    let e1_cfg = load("eikonal.toml")?;
    let spec = e1_cfg.operator().map_err(|e| e.to_string())?;
    let m_r = e1_cfg.single_sample_count().map_err(|e| e.to_string())?;
    let mut best = f64::INFINITY;
    let mut traced = true;
    for &seed in &e1_cfg.seeds {
        let r = train_one(&e1_cfg, &spec, m_r, seed).map_err(|e| e.to_string())?;
        best = best.min(r.summary.c0_error.unwrap_or(f64::INFINITY));
        let json: serde_json::Value =
            serde_json::from_str(&r.to_json().map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let trace = json["holder_trace"].as_array().map(Vec::len).unwrap_or(0);
        traced &= trace == r.history.len() && trace > 0;
    }
    ok &= best <= 5e-2 && traced && e1_cfg.seeds.len() == 5;
    parts.push(format!(
        "E1 best C0 over {} seeds {best:.2e} (<= 5e-2), Hölder trace in reports: {traced}",
        e1_cfg.seeds.len()
    ));
    parts.push(format!("total {:.0}s (target 1800s)", start.elapsed().as_secs_f64()));
    Ok((ok, parts.join("; ")))
}

fn files_in(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .map(|rd| rd.filter_map(|e| e.ok()).map(|e| e.path()).collect())
        .unwrap_or_default();
    v.sort();
    v
}

fn determinism() -> Outcome {
    let tmp = tempfile::TempDir::new().map_err(|e| e.to_string())?;
    let write = |name: &str, body: &str| -> Result<String, String> {
        let p = tmp.path().join(name);
        std::fs::write(&p, body).map_err(|e| e.to_string())?;
        Ok(p.to_string_lossy().into_owned())
    };
    let train = write("train.toml", "operator = \"poisson1d\"\narch = [1, 8, 8, 1]\nm_r = 32\nsteps = 200\nlog_every = 20\nseeds = [0, 1]\n")?;
    let sweep = write("sweep.toml", "operator = \"eikonal1d\"\narch = [1, 8, 1]\nm_r = [8, 16, 32]\nalpha = 0.5\nsteps = 50\nseeds = [0, 1]\nmc_samples = 500\n")?;
    let verify = write("verify.toml", "operator = \"poisson2d\"\nm_r = 64\ntrials = 5\nmc_samples = 500\nslope_n = [16, 32, 64]\nsampling_n = [16, 32]\nsampling_dim = [1, 2]\n")?;
    let oracle = write("oracle.toml", "operator = \"poisson2d\"\noracle_n = 16\n")?;
    let runs: [(&str, &[&str]); 8] = [
        (&train, &["train"]),
        (&train, &["report"]),
        (&sweep, &["sweep"]),
        (&verify, &["verify", "sampling"]),
        (&verify, &["verify", "ellipticity"]),
        (&verify, &["verify", "bound"]),
        (&verify, &["verify", "comparison"]),
        (&oracle, &["oracle"]),
    ];
    for out in ["first", "second"] {
        for (cfg, cmd) in &runs {
            let status = Command::new(env!("CARGO_BIN_EXE_vispinn"))
                .current_dir(tmp.path())
                .env_remove("VISPINN_OUT")
                .args(["--config", cfg, "--out", out, "--seed", "3", "--deterministic"])
                .args(*cmd)
                .output()
                .map_err(|e| e.to_string())?;
            // a failing verification still writes its record
            if !matches!(status.status.code(), Some(0) | Some(1)) {
                return Err(format!("{cmd:?} exited with {:?}", status.status.code()));
            }
        }
    }
    let first = files_in(&tmp.path().join("first"));
    let second = files_in(&tmp.path().join("second"));
    let names = |v: &[PathBuf]| v.iter().map(|p| p.file_name().map(|n| n.to_owned())).collect::<Vec<_>>();
    if first.is_empty() || names(&first) != names(&second) {
        return Ok((false, format!("file sets differ: {first:?} vs {second:?}")));
    }
    let differing: Vec<String> = first
        .iter()
        .zip(&second)
        .filter(|(a, b)| std::fs::read(a).ok() != std::fs::read(b).ok())
        .map(|(a, _)| a.file_name().unwrap_or_default().to_string_lossy().into_owned())
        .collect();
    Ok((
        differing.is_empty(),
        format!(
            "{} output files from train, report, sweep, verify x4 and oracle; {} differ {differing:?}",
            first.len(),
            differing.len()
        ),
    ))
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 8] = [
        (1, "autodiff fidelity", autodiff_fidelity),
        (2, "fill lemma reproduction", fill_lemma),
        (3, "schedule exactness", schedule_exactness),
        (4, "ellipticity suite", ellipticity),
        (5, "generalization bound", generalization_bound),
        (6, "oracle orders", oracle_orders),
        (7, "desk-scale convergence", desk_convergence),
        (8, "determinism", determinism),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    for (n, name, check) in criteria {
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let (passed, detail) = check().unwrap_or_else(|e| (false, format!("error: {e}")));
        println!("{} criterion {n} ({name}): {detail}", if passed { "PASS" } else { "FAIL" });
        if !passed {
            failed.push(n);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all selected criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
