//! Reference viscosity solutions: monotone finite-difference solvers on the
//! unit cube, the closed-form eikonal distance function, and a discrete
//! comparison-principle check.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::csvio;
use crate::error::{Error, Result};
use crate::model::{FnModel, Model, Points};
use crate::operators::{by_name, OperatorSpec, PrincipalPart};
use crate::sampling::{Domain, DomainKind};
use crate::stats;

pub const GRID_SCHEMA: &str = "oracle-grid";
/// Residual target of the linear solvers.
pub const SOLVE_TOL: f64 = 1e-10;
pub const COMPARISON_TOL: f64 = 1e-10;
const MIN_INTERVALS: usize = 4;

/// Nodal values on the uniform grid with `n` intervals per axis over
/// `[0, 1]^dim`. Node `k` has multi-index `(i_0, .., i_{dim-1})` with the
/// last index varying fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleGrid {
    pub dim: usize,
    pub n: usize,
    pub h: f64,
    pub values: Vec<f64>,
}

impl OracleGrid {
    fn filled(dim: usize, n: usize, value: f64) -> Self {
        Self {
            dim,
            n,
            h: 1.0 / n as f64,
            values: vec![value; (n + 1).pow(dim as u32)],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn index(&self, node: &[usize]) -> usize {
        node.iter().fold(0, |k, &i| k * (self.n + 1) + i)
    }

    pub fn multi_index(&self, mut k: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim];
        for slot in idx.iter_mut().rev() {
            *slot = k % (self.n + 1);
            k /= self.n + 1;
        }
        idx
    }

    pub fn coords(&self, k: usize) -> Vec<f64> {
        self.multi_index(k).iter().map(|&i| i as f64 * self.h).collect()
    }

    pub fn is_boundary(&self, k: usize) -> bool {
        self.multi_index(k).iter().any(|&i| i == 0 || i == self.n)
    }

    /// Node coordinates, one per row.
    pub fn nodes(&self) -> Points {
        let flat: Vec<f64> = (0..self.len()).flat_map(|k| self.coords(k)).collect();
        Points::from_shape_vec((self.len(), self.dim), flat).expect("grid shape")
    }

    /// Indices of the nodes adjacent to `k` along each axis.
    pub fn neighbours(&self, k: usize) -> Vec<usize> {
        let idx = self.multi_index(k);
        let mut out = Vec::with_capacity(2 * self.dim);
        for a in 0..self.dim {
            for step in [-1i64, 1] {
                let i = idx[a] as i64 + step;
                if i >= 0 && i <= self.n as i64 {
                    let mut nb = idx.clone();
                    nb[a] = i as usize;
                    out.push(self.index(&nb));
                }
            }
        }
        out
    }

    /// Multilinear interpolation; points outside the cube are clamped.
    pub fn interpolate(&self, x: &[f64]) -> f64 {
        let mut base = vec![0usize; self.dim];
        let mut frac = vec![0.0; self.dim];
        for a in 0..self.dim {
            let t = (x[a].clamp(0.0, 1.0) * self.n as f64).min(self.n as f64);
            let i = (t.floor() as usize).min(self.n - 1);
            base[a] = i;
            frac[a] = t - i as f64;
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << self.dim) {
            let mut w = 1.0;
            let mut node = base.clone();
            for a in 0..self.dim {
                if corner >> a & 1 == 1 {
                    node[a] += 1;
                    w *= frac[a];
                } else {
                    w *= 1.0 - frac[a];
                }
            }
            if w != 0.0 {
                acc += w * self.values[self.index(&node)];
            }
        }
        acc
    }

    /// Largest nodal deviation from `reference`.
    pub fn max_error<F: Fn(&[f64]) -> f64>(&self, reference: F) -> f64 {
        (0..self.len())
            .map(|k| (self.values[k] - reference(&self.coords(k))).abs())
            .fold(0.0, f64::max)
    }

    /// Largest difference at the nodes shared with a grid of `2n` intervals.
    pub fn refinement_gap(&self, fine: &OracleGrid) -> Result<f64> {
        if fine.dim != self.dim || fine.n != 2 * self.n {
            return Err(Error::InvalidInput(format!(
                "refinement needs a grid with {} intervals, got {}",
                2 * self.n,
                fine.n
            )));
        }
        Ok((0..self.len())
            .map(|k| {
                let idx: Vec<usize> = self.multi_index(k).iter().map(|i| 2 * i).collect();
                (self.values[k] - fine.values[fine.index(&idx)]).abs()
            })
            .fold(0.0, f64::max))
    }

    /// CSV with columns `x0[,x1],value`.
    pub fn to_csv(&self, seed: &str) -> Result<String> {
        let mut header: Vec<String> = (0..self.dim).map(|a| format!("x{a}")).collect();
        header.push("value".into());
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        csvio::table_to_string(
            GRID_SCHEMA,
            seed,
            &header,
            (0..self.len()).map(|k| {
                let mut row: Vec<String> = self.coords(k).into_iter().map(csvio::fmt_f64).collect();
                row.push(csvio::fmt_f64(self.values[k]));
                row
            }),
        )
    }

    pub fn write_csv(&self, path: &Path, seed: &str) -> Result<()> {
        std::fs::write(path, self.to_csv(seed)?)?;
        Ok(())
    }
}

fn check_intervals(n: usize) -> Result<()> {
    if n < MIN_INTERVALS {
        return Err(Error::InvalidInput(format!(
            "grid needs at least {MIN_INTERVALS} intervals, got {n}"
        )));
    }
    Ok(())
}

fn with_boundary<G: Fn(&[f64]) -> f64>(dim: usize, n: usize, g: &G) -> OracleGrid {
    let mut grid = OracleGrid::filled(dim, n, 0.0);
    for k in 0..grid.len() {
        if grid.is_boundary(k) {
            grid.values[k] = g(&grid.coords(k));
        }
    }
    grid
}

/// `-Δu = f` with `u = g` on the boundary of the unit interval or square,
/// by the 3-point or 5-point scheme.
pub fn solve_poisson_fd<F, G>(domain: &Domain, f: F, g: G, n: usize) -> Result<OracleGrid>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> f64,
{
    check_intervals(n)?;
    if domain.kind != DomainKind::Hypercube || !(1..=2).contains(&domain.dim) {
        return Err(Error::Unsupported(format!(
            "finite-difference Poisson solver covers the unit interval and square, got {:?} of dimension {}",
            domain.kind, domain.dim
        )));
    }
    let mut grid = with_boundary(domain.dim, n, &g);
    let h2 = grid.h * grid.h;
    // h^2 f plus the boundary contributions, per interior node
    let interior: Vec<usize> = (0..grid.len()).filter(|&k| !grid.is_boundary(k)).collect();
    let rhs: Vec<f64> = interior
        .iter()
        .map(|&k| {
            let known: f64 = grid
                .neighbours(k)
                .into_iter()
                .filter(|&j| grid.is_boundary(j))
                .map(|j| grid.values[j])
                .sum();
            h2 * f(&grid.coords(k)) + known
        })
        .collect();
    let solution = if domain.dim == 1 {
        thomas_constant(&rhs)
    } else {
        conjugate_gradient_5pt(n - 1, &rhs)?
    };
    for (&k, v) in interior.iter().zip(solution) {
        grid.values[k] = v;
    }
    let worst = poisson_residual(&grid, &f);
    if !(worst <= SOLVE_TOL) {
        return Err(Error::NoConvergence {
            iterations: 0,
            residual: worst,
        });
    }
    Ok(grid)
}

/// Largest `|h^2 (-Δ_h u - f)|` over the interior nodes.
pub fn poisson_residual<F: Fn(&[f64]) -> f64>(grid: &OracleGrid, f: &F) -> f64 {
    let h2 = grid.h * grid.h;
    (0..grid.len())
        .filter(|&k| !grid.is_boundary(k))
        .map(|k| {
            let nbrs: f64 = grid.neighbours(k).into_iter().map(|j| grid.values[j]).sum();
            (2.0 * grid.dim as f64 * grid.values[k] - nbrs - h2 * f(&grid.coords(k))).abs()
        })
        .fold(0.0, f64::max)
}

/// Solves the tridiagonal system `2u_i - u_{i-1} - u_{i+1} = b_i`.
fn thomas_constant(b: &[f64]) -> Vec<f64> {
    let m = b.len();
    let mut c = vec![0.0; m];
    let mut d = vec![0.0; m];
    c[0] = -0.5;
    d[0] = b[0] / 2.0;
    for i in 1..m {
        let denom = 2.0 + c[i - 1];
        c[i] = -1.0 / denom;
        d[i] = (b[i] + d[i - 1]) / denom;
    }
    let mut u = vec![0.0; m];
    u[m - 1] = d[m - 1];
    for i in (0..m - 1).rev() {
        u[i] = d[i] - c[i] * u[i + 1];
    }
    u
}

/// 5-point stencil `4u - sum of neighbours` on an `m x m` block of unknowns.
fn apply_5pt(m: usize, u: &[f64], out: &mut [f64]) {
    for i in 0..m {
        for j in 0..m {
            let k = i * m + j;
            let mut v = 4.0 * u[k];
            if i > 0 {
                v -= u[k - m];
            }
            if i + 1 < m {
                v -= u[k + m];
            }
            if j > 0 {
                v -= u[k - 1];
            }
            if j + 1 < m {
                v -= u[k + 1];
            }
            out[k] = v;
        }
    }
}

fn conjugate_gradient_5pt(m: usize, b: &[f64]) -> Result<Vec<f64>> {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let inf = |a: &[f64]| a.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let len = m * m;
    let max_iter = 10 * len;
    let mut x = vec![0.0; len];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut ap = vec![0.0; len];
    let mut rr = dot(&r, &r);
    for iter in 0..max_iter {
        if inf(&r) <= 0.1 * SOLVE_TOL {
            // recursive residuals drift; confirm with the true one
            apply_5pt(m, &x, &mut ap);
            let true_res: Vec<f64> = b.iter().zip(&ap).map(|(bi, a)| bi - a).collect();
            if inf(&true_res) <= SOLVE_TOL {
                return Ok(x);
            }
            r = true_res;
            p = r.clone();
            rr = dot(&r, &r);
            if iter + 1 == max_iter {
                break;
            }
        }
        apply_5pt(m, &p, &mut ap);
        let step = rr / dot(&p, &ap);
        for k in 0..len {
            x[k] += step * p[k];
            r[k] -= step * ap[k];
        }
        let next = dot(&r, &r);
        let beta = next / rr;
        rr = next;
        for k in 0..len {
            p[k] = r[k] + beta * p[k];
        }
    }
    apply_5pt(m, &x, &mut ap);
    let residual = b.iter().zip(&ap).map(|(bi, a)| (bi - a).abs()).fold(0.0, f64::max);
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual,
    })
}

/// `min(g0 + x, g1 + 1 - x)`, the unit-speed distance solution.
pub fn eikonal_exact(g0: f64, g1: f64, x: f64) -> f64 {
    (g0 + x).min(g1 + 1.0 - x)
}

/// `|u'| = 1` on `(0, 1)` with `u(0) = g0`, `u(1) = g1`, by Godunov upwind
/// fast sweeping. Alternating sweeps repeat until no node changes.
pub fn solve_eikonal_1d(g0: f64, g1: f64, n: usize) -> Result<OracleGrid> {
    check_intervals(n)?;
    let mut grid = OracleGrid::filled(1, n, f64::INFINITY);
    grid.values[0] = g0;
    grid.values[n] = g1;
    loop {
        let mut changed = false;
        let order: Vec<usize> = (1..n).chain((1..n).rev()).collect();
        for i in order {
            let update = eikonal_node_update(&grid.values, grid.h, i);
            if update < grid.values[i] {
                grid.values[i] = update;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    Ok(grid)
}

/// Closed-form distance solution sampled at the nodes.
pub fn eikonal_exact_grid(g0: f64, g1: f64, n: usize) -> Result<OracleGrid> {
    check_intervals(n)?;
    let mut grid = OracleGrid::filled(1, n, 0.0);
    for i in 0..=n {
        grid.values[i] = eikonal_exact(g0, g1, i as f64 * grid.h);
    }
    grid.values[0] = g0;
    grid.values[n] = g1;
    Ok(grid)
}

/// Godunov update `min(u_{i-1}, u_{i+1}) + h` at interior node `i`.
pub fn eikonal_node_update(values: &[f64], h: f64, i: usize) -> f64 {
    values[i - 1].min(values[i + 1]) + h
}

/// Jacobi update `(sum of neighbours + h^2 f) / 2d` of the Poisson scheme.
pub fn poisson_node_update(grid: &OracleGrid, forcing: f64, k: usize) -> f64 {
    let nbrs: f64 = grid.neighbours(k).into_iter().map(|j| grid.values[j]).sum();
    (nbrs + grid.h * grid.h * forcing) / (2.0 * grid.dim as f64)
}

/// Godunov residual `max(D^- u, -D^+ u, 0) - 1` at every interior node.
pub fn godunov_residual(values: &[f64], h: f64) -> Vec<f64> {
    (1..values.len() - 1)
        .map(|i| {
            let back = (values[i] - values[i - 1]) / h;
            let fwd = (values[i + 1] - values[i]) / h;
            back.max(-fwd).max(0.0) - 1.0
        })
        .collect()
}

/// Godunov residual at the midpoint node of the viscosity solution
/// `min(x, 1-x)` and of the inverted tent `-min(x, 1-x)`, which solves
/// `|u'| = 1` almost everywhere but is not a viscosity solution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KinkDemo {
    pub viscosity_residual: f64,
    pub inverted_residual: f64,
}

pub fn eikonal_kink_demo(n: usize) -> Result<KinkDemo> {
    check_intervals(n)?;
    if n % 2 != 0 {
        return Err(Error::InvalidInput(format!(
            "kink demo needs an even interval count so x = 1/2 is a node, got {n}"
        )));
    }
    let h = 1.0 / n as f64;
    let tent: Vec<f64> = (0..=n).map(|i| eikonal_exact(0.0, 0.0, i as f64 * h)).collect();
    let inverted: Vec<f64> = tent.iter().map(|v| -v).collect();
    let mid = n / 2 - 1;
    Ok(KinkDemo {
        viscosity_residual: godunov_residual(&tent, h)[mid].abs(),
        inverted_residual: godunov_residual(&inverted, h)[mid].abs(),
    })
}

/// A reference solution: closed form or a nodal grid.
#[derive(Clone)]
pub enum Reference {
    Exact(FnModel),
    Grid(OracleGrid),
}

impl std::fmt::Debug for Reference {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Reference::Exact(m) => write!(f, "Exact(dim {})", m.dim),
            Reference::Grid(g) => write!(f, "Grid({g:?})"),
        }
    }
}

impl Reference {
    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            Reference::Exact(m) => (m.value)(x),
            Reference::Grid(g) => g.interpolate(x),
        }
    }

    /// Values on a grid of `n` intervals.
    pub fn to_grid(&self, dim: usize, n: usize) -> Result<OracleGrid> {
        match self {
            Reference::Grid(g) => Ok(g.clone()),
            Reference::Exact(m) => {
                check_intervals(n)?;
                let mut grid = OracleGrid::filled(dim, n, 0.0);
                for k in 0..grid.len() {
                    grid.values[k] = m.value(&grid.coords(k))?;
                }
                Ok(grid)
            }
        }
    }
}

/// Exact manufactured solutions for the smooth benchmarks, the eikonal
/// sweeping grid for `eikonal1d`.
pub fn reference_for(spec: &OperatorSpec, n: usize) -> Result<Reference> {
    let bundled = by_name(spec.name)?;
    if spec.name == "eikonal1d" {
        let g0 = bundled.boundary_value(&[0.0]);
        let g1 = bundled.boundary_value(&[1.0]);
        return solve_eikonal_1d(g0, g1, n).map(Reference::Grid);
    }
    bundled
        .exact_model()
        .map(Reference::Exact)
        .ok_or_else(|| Error::Unsupported(format!("no reference solution for `{}`", spec.name)))
}

/// Solves with both boundary data and reports whether
/// `u_low <= u_high + 1e-10` at every node.
pub fn discrete_comparison_test<S, G, H>(solver: S, g_low: G, g_high: H, n: usize) -> Result<bool>
where
    S: Fn(&dyn Fn(&[f64]) -> f64, usize) -> Result<OracleGrid>,
    G: Fn(&[f64]) -> f64,
    H: Fn(&[f64]) -> f64,
{
    let low = solver(&g_low, n)?;
    let high = solver(&g_high, n)?;
    for k in (0..low.len()).filter(|&k| low.is_boundary(k)) {
        let x = low.coords(k);
        if g_low(&x) > g_high(&x) {
            return Err(Error::InvalidInput(format!(
                "boundary data are not ordered at x = {x:?}"
            )));
        }
    }
    Ok(low
        .values
        .iter()
        .zip(&high.values)
        .all(|(l, u)| *l <= u + COMPARISON_TOL))
}

/// Boundary data `c + <s, x> + w sin(pi (x_0 + x_last))`, optionally raised
/// by `a + b x_0^2`.
#[derive(Clone, Debug, PartialEq)]
pub struct RandomBoundary {
    pub offset: f64,
    pub slope: Vec<f64>,
    pub wave: f64,
    pub lift: (f64, f64),
}

impl RandomBoundary {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let linear: f64 = self.slope.iter().zip(x).map(|(s, v)| s * v).sum();
        let wave = self.wave * (std::f64::consts::PI * (x[0] + x[x.len() - 1])).sin();
        self.offset + linear + wave + self.lift.0 + self.lift.1 * x[0] * x[0]
    }

    /// A seeded ordered pair `(low, high)` with `low <= high` everywhere.
    pub fn ordered_pair<R: Rng>(dim: usize, rng: &mut R) -> (Self, Self) {
        let low = Self {
            offset: rng.random_range(-0.3..0.3),
            slope: (0..dim).map(|_| rng.random_range(-0.3..0.3)).collect(),
            wave: rng.random_range(-0.2..0.2),
            lift: (0.0, 0.0),
        };
        let high = Self {
            lift: (rng.random_range(0.0..0.5), rng.random_range(0.0..0.5)),
            ..low.clone()
        };
        (low, high)
    }
}

/// Outcome of the comparison check for one bundled solver.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub solver: String,
    pub trials: usize,
    pub passed: usize,
}

impl ComparisonReport {
    pub fn all_passed(&self) -> bool {
        self.passed == self.trials
    }
}

/// Names of the solvers exercised by [`comparison_suite`].
pub const COMPARISON_SOLVERS: [&str; 3] = ["poisson1d", "poisson2d", "eikonal1d"];

/// Runs [`discrete_comparison_test`] on `trials` seeded ordered boundary
/// pairs for each bundled solver.
pub fn comparison_suite(trials: usize, n: usize, seed: u64) -> Result<Vec<ComparisonReport>> {
    let mut out = Vec::new();
    for (stream, name) in COMPARISON_SOLVERS.iter().enumerate() {
        let spec = by_name(name)?;
        let dim = spec.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream as u64);
        let mut passed = 0;
        for _ in 0..trials {
            let (low, high) = RandomBoundary::ordered_pair(dim, &mut rng);
            let holds = match spec.principal {
                PrincipalPart::GradientNorm => discrete_comparison_test(
                    |g, n| solve_eikonal_1d(g(&[0.0]), g(&[1.0]), n),
                    |x: &[f64]| low.eval(x),
                    |x: &[f64]| high.eval(x),
                    n,
                )?,
                _ => discrete_comparison_test(
                    |g, n| solve_poisson_fd(&spec.domain, spec.forcing, g, n),
                    |x: &[f64]| low.eval(x),
                    |x: &[f64]| high.eval(x),
                    n,
                )?,
            };
            passed += usize::from(holds);
        }
        out.push(ComparisonReport {
            solver: name.to_string(),
            trials,
            passed,
        });
    }
    Ok(out)
}

/// Sup-norm errors of the Poisson solver against the exact solution of a
/// bundled Poisson benchmark and the fitted order `-slope(log err, log n)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderStudy {
    pub operator: String,
    pub intervals: Vec<usize>,
    pub errors: Vec<f64>,
    pub order: f64,
}

pub fn poisson_order_study(spec: &OperatorSpec, intervals: &[usize]) -> Result<OrderStudy> {
    if spec.principal != PrincipalPart::NegLaplacian || spec.zeroth_order != 0.0 {
        return Err(Error::Unsupported(format!("`{}` is not a Poisson problem", spec.name)));
    }
    let exact = spec
        .exact
        .ok_or_else(|| Error::Unsupported(format!("`{}` has no exact solution", spec.name)))?;
    if intervals.len() < 2 {
        return Err(Error::InvalidInput("order fit needs at least two grids".into()));
    }
    let errors = intervals
        .iter()
        .map(|&n| Ok(solve_poisson_fd(&spec.domain, spec.forcing, spec.boundary, n)?.max_error(exact.value)))
        .collect::<Result<Vec<f64>>>()?;
    let ns: Vec<f64> = intervals.iter().map(|&n| n as f64).collect();
    Ok(OrderStudy {
        operator: spec.name.to_string(),
        intervals: intervals.to_vec(),
        order: -stats::loglog_slope(&ns, &errors),
        errors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn harmonic_constant() {
        for dim in [1, 2] {
            let g = solve_poisson_fd(&Domain::hypercube(dim), |_: &[f64]| 0.0, |_: &[f64]| 2.5, 8).unwrap();
            assert!(g.values.iter().all(|v| (v - 2.5).abs() < 1e-10));
        }
    }

    #[test]
    fn second_order_on_both_benchmarks() {
        for name in ["poisson1d", "poisson2d"] {
            let study = poisson_order_study(&by_name(name).unwrap(), &[32, 64, 128]).unwrap();
            assert!((1.7..=2.3).contains(&study.order), "{name}: {study:?}");
        }
    }

    #[test]
    fn tridiagonal_solver_matches_dense_residual() {
        let b = vec![1.0, -2.0, 0.5, 3.0, 0.0];
        let u = thomas_constant(&b);
        for i in 0..b.len() {
            let left = if i > 0 { u[i - 1] } else { 0.0 };
            let right = if i + 1 < b.len() { u[i + 1] } else { 0.0 };
            assert!((2.0 * u[i] - left - right - b[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn eikonal_sweeping_matches_distance_formula() {
        let g = solve_eikonal_1d(0.0, 0.0, 128).unwrap();
        assert!(g.max_error(|x| x[0].min(1.0 - x[0])) <= g.h);
        let kinked = solve_eikonal_1d(0.2, 0.0, 50).unwrap();
        let exact = eikonal_exact_grid(0.2, 0.0, 50).unwrap();
        assert!(kinked.values.iter().zip(&exact.values).all(|(a, b)| (a - b).abs() < 1e-12));
        // kink at x = 0.4, node 20
        assert!((kinked.values[20] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn inverted_tent_has_larger_scheme_residual() {
        let demo = eikonal_kink_demo(64).unwrap();
        assert!(demo.viscosity_residual < 1e-12);
        assert!((demo.inverted_residual - 1.0).abs() < 1e-12);
    }

    #[test]
    fn interpolation_is_exact_for_bilinear_functions() {
        let mut grid = OracleGrid::filled(2, 4, 0.0);
        for k in 0..grid.len() {
            let x = grid.coords(k);
            grid.values[k] = 1.0 + 2.0 * x[0] - x[1] + 3.0 * x[0] * x[1];
        }
        let v = grid.interpolate(&[0.33, 0.71]);
        assert!((v - (1.0 + 0.66 - 0.71 + 3.0 * 0.33 * 0.71)).abs() < 1e-12);
    }

    #[test]
    fn reference_dispatch() {
        let ma = by_name("monge_ampere2d").unwrap();
        let r = reference_for(&ma, 16).unwrap();
        assert!((r.value(&[0.3, 0.4]) - (0.125f64).exp()).abs() < 1e-14);
        let e1 = by_name("eikonal1d").unwrap();
        assert!(matches!(reference_for(&e1, 128).unwrap(), Reference::Grid(g) if g.n == 128));
        let mut unknown = by_name("poisson1d").unwrap();
        unknown.name = "heat";
        assert!(matches!(reference_for(&unknown, 16), Err(Error::UnknownOperator(_))));
    }

    #[test]
    fn comparison_examples() {
        let dom = Domain::hypercube(1);
        let poisson = |g: &dyn Fn(&[f64]) -> f64, n| solve_poisson_fd(&dom, |_: &[f64]| 0.0, g, n);
        assert!(discrete_comparison_test(poisson, |_: &[f64]| 0.0, |_: &[f64]| 1.0, 16).unwrap());
        let eik = |g: &dyn Fn(&[f64]) -> f64, n| solve_eikonal_1d(g(&[0.0]), g(&[1.0]), n);
        assert!(discrete_comparison_test(eik, |_: &[f64]| 0.0, |_: &[f64]| 0.1, 16).unwrap());
        let same = |x: &[f64]| (PI * x[0]).cos();
        assert!(discrete_comparison_test(poisson, same, same, 16).unwrap());
        assert!(discrete_comparison_test(poisson, |_: &[f64]| 1.0, |_: &[f64]| 0.0, 16).is_err());
    }

    #[test]
    fn schemes_are_monotone_in_neighbours() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p1 = by_name("poisson2d").unwrap();
        let grid = solve_poisson_fd(&p1.domain, p1.forcing, p1.boundary, 16).unwrap();
        for _ in 0..50 {
            let k = loop {
                let k = rng.random_range(0..grid.len());
                if !grid.is_boundary(k) {
                    break k;
                }
            };
            let f = (p1.forcing)(&grid.coords(k));
            let base = poisson_node_update(&grid, f, k);
            for j in grid.neighbours(k) {
                let mut bumped = grid.clone();
                bumped.values[j] += rng.random_range(0.0..1.0);
                assert!(poisson_node_update(&bumped, f, k) >= base);
            }
        }
        let eik = solve_eikonal_1d(0.0, 0.0, 32).unwrap();
        for i in 1..32 {
            let base = eikonal_node_update(&eik.values, eik.h, i);
            for j in [i - 1, i + 1] {
                let mut v = eik.values.clone();
                v[j] += 0.3;
                assert!(eikonal_node_update(&v, eik.h, i) >= base);
            }
        }
    }

    #[test]
    fn refinement_gaps_shrink() {
        let p2 = by_name("poisson1d").unwrap();
        let solve = |n| solve_poisson_fd(&p2.domain, p2.forcing, p2.boundary, n).unwrap();
        let (a, b, c) = (solve(8), solve(16), solve(32));
        assert!(b.refinement_gap(&c).unwrap() < a.refinement_gap(&b).unwrap());
    }

    #[test]
    fn grid_csv_layout() {
        let g = solve_eikonal_1d(0.0, 0.0, 4).unwrap();
        let t = csvio::read_table(&g.to_csv("0").unwrap()).unwrap();
        assert_eq!(t.header, vec!["x0", "value"]);
        assert_eq!(t.rows.len(), 5);
        assert_eq!(t.meta("schema"), Some(GRID_SCHEMA));
    }
}
