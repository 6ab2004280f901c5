//! Domains, uniform training sets, fill distances and the closest-point
//! projection onto a training set.

use std::f64::consts::PI;
use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::csvio;
use crate::error::{Error, Result};
use crate::model::Points;
use crate::stats;

const BOUNDARY_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    /// `[0,1]^d`
    Hypercube,
    /// Unit ball centred at the origin.
    Ball,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Domain {
    pub kind: DomainKind,
    pub dim: usize,
}

impl Domain {
    pub fn new(kind: DomainKind, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("domain dimension must be >= 1".into()));
        }
        Ok(Self { kind, dim })
    }

    pub fn hypercube(dim: usize) -> Self {
        Self::new(DomainKind::Hypercube, dim).expect("dimension >= 1")
    }

    pub fn ball(dim: usize) -> Self {
        Self::new(DomainKind::Ball, dim).expect("dimension >= 1")
    }

    /// Strict interior membership.
    pub fn contains_interior(&self, x: &[f64]) -> bool {
        x.len() == self.dim
            && match self.kind {
                DomainKind::Hypercube => x.iter().all(|&v| v > 0.0 && v < 1.0),
                DomainKind::Ball => norm(x) < 1.0,
            }
    }

    /// Membership of the closure.
    pub fn contains_closure(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.dim
            && match self.kind {
                DomainKind::Hypercube => x.iter().all(|&v| v >= -tol && v <= 1.0 + tol),
                DomainKind::Ball => norm(x) <= 1.0 + tol,
            }
    }

    pub fn on_boundary(&self, x: &[f64], tol: f64) -> bool {
        if !self.contains_closure(x, tol) {
            return false;
        }
        match self.kind {
            DomainKind::Hypercube => x.iter().any(|&v| v.abs() <= tol || (v - 1.0).abs() <= tol),
            DomainKind::Ball => (norm(x) - 1.0).abs() <= tol,
        }
    }

    pub fn sample_interior<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        loop {
            let x = match self.kind {
                DomainKind::Hypercube => (0..self.dim).map(|_| rng.random::<f64>()).collect(),
                DomainKind::Ball => {
                    let dir = unit_direction(rng, self.dim);
                    let r = rng.random::<f64>().powf(1.0 / self.dim as f64);
                    dir.into_iter().map(|v| r * v).collect::<Vec<_>>()
                }
            };
            // a zero coordinate or a radius rounded up to 1 lands on the boundary
            if self.contains_interior(&x) {
                return x;
            }
        }
    }

    /// A point from the uniform surface measure. For `d = 1` the two endpoints
    /// are chosen with equal probability.
    pub fn sample_boundary<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        match self.kind {
            DomainKind::Hypercube => {
                let face = rng.random_range(0..2 * self.dim);
                let mut x: Vec<f64> = (0..self.dim).map(|_| rng.random::<f64>()).collect();
                x[face / 2] = (face % 2) as f64;
                x
            }
            DomainKind::Ball => unit_direction(rng, self.dim),
        }
    }

    /// The boundary points used for `d = 1`.
    pub fn endpoints(&self) -> Option<[f64; 2]> {
        (self.dim == 1).then_some(match self.kind {
            DomainKind::Hypercube => [0.0, 1.0],
            DomainKind::Ball => [-1.0, 1.0],
        })
    }

    /// Axis-aligned bounding box `(lo, hi)`.
    pub fn bounds(&self) -> (f64, f64) {
        match self.kind {
            DomainKind::Hypercube => (0.0, 1.0),
            DomainKind::Ball => (-1.0, 1.0),
        }
    }

    /// Tensor grid with `resolution` nodes per axis over the bounding box
    /// (endpoints included), restricted to the closure of the domain.
    pub fn probe_grid(&self, resolution: usize) -> Result<Points> {
        if resolution < 2 {
            return Err(Error::InvalidInput("probe resolution must be >= 2".into()));
        }
        let (lo, hi) = self.bounds();
        let axis: Vec<f64> = (0..resolution)
            .map(|i| lo + (hi - lo) * i as f64 / (resolution - 1) as f64)
            .collect();
        let total = resolution.pow(self.dim as u32);
        let mut flat = Vec::with_capacity(total * self.dim);
        let mut count = 0;
        let mut idx = vec![0usize; self.dim];
        for _ in 0..total {
            let x: Vec<f64> = idx.iter().map(|&i| axis[i]).collect();
            if self.contains_closure(&x, 0.0) {
                flat.extend_from_slice(&x);
                count += 1;
            }
            // last coordinate varies fastest
            for k in (0..self.dim).rev() {
                idx[k] += 1;
                if idx[k] < resolution {
                    break;
                }
                idx[k] = 0;
            }
        }
        Ok(Array2::from_shape_vec((count, self.dim), flat).expect("grid shape"))
    }

    /// Number of boundary samples paired with `m_r` interior samples.
    pub fn boundary_count(&self, m_r: usize) -> usize {
        if self.dim == 1 {
            return 2;
        }
        let v = (m_r as f64).powf((self.dim - 1) as f64 / self.dim as f64);
        let r = v.round();
        // perfect powers such as 1000^(2/3) can land a few ulps above the integer
        let m_b = if (v - r).abs() <= 1e-9 * r.max(1.0) { r } else { v.ceil() };
        (m_b as usize).max(1)
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn unit_direction<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let g: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = norm(&g);
        if n > 1e-300 {
            return g.into_iter().map(|v| v / n).collect();
        }
    }
}

/// Volume of the unit ball in `R^d` (`1` for `d = 0`).
pub fn unit_ball_volume(d: usize) -> f64 {
    match d {
        0 => 1.0,
        1 => 2.0,
        _ => unit_ball_volume(d - 2) * 2.0 * PI / d as f64,
    }
}

/// Surface area of the unit sphere in `R^d`.
pub fn unit_sphere_area(d: usize) -> f64 {
    d as f64 * unit_ball_volume(d)
}

/// Lower and upper local mass constants of the sampling measures:
/// `c eps^s <= mu(cell of side eps)` and `mu(B_eps(x)) <= C eps^s`, with
/// `s = d` in the interior and `s = d - 1` on the boundary.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityConstants {
    pub c_r: f64,
    #[serde(rename = "C_r")]
    pub upper_r: f64,
    pub c_b: f64,
    #[serde(rename = "C_b")]
    pub upper_b: f64,
}

impl DensityConstants {
    pub fn kappa_r(&self) -> f64 {
        self.upper_r / self.c_r
    }

    pub fn kappa_b(&self) -> f64 {
        self.upper_b / self.c_b
    }

    pub fn unit() -> Self {
        Self {
            c_r: 1.0,
            upper_r: 1.0,
            c_b: 1.0,
            upper_b: 1.0,
        }
    }
}

/// Constants for the uniform measures on `domain`.
///
/// Hypercube: `c_r = 1`, `C_r = omega_d`, `c_b = 1`, `C_b = omega_(d-1)`
/// (faces carry the normalised surface measure).
///
/// Ball: `mu_r = Lebesgue / omega_d` and `mu_b = area / sigma_(d-1)` with
/// `sigma_(d-1) = d omega_d`. A partition cell of side `eps` keeps at least a
/// `2^-d` fraction of its cube inside the ball for small `eps`, so
/// `c_r = 2^-d / omega_d` and `C_r = 1`. On the sphere a geodesic cell keeps
/// a `2^-(d-1)` fraction and a Euclidean `eps`-cap has area at most
/// `(pi/2)^(d-1) omega_(d-1) eps^(d-1)`, giving `c_b = 2^-(d-1) / sigma_(d-1)`
/// and `C_b = (pi/2)^(d-1) omega_(d-1) / sigma_(d-1)`.
pub fn density_constants(domain: &Domain) -> Result<DensityConstants> {
    let d = domain.dim;
    let k = match domain.kind {
        DomainKind::Hypercube => DensityConstants {
            c_r: 1.0,
            upper_r: unit_ball_volume(d),
            c_b: 1.0,
            upper_b: unit_ball_volume(d - 1),
        },
        DomainKind::Ball => {
            let sigma = unit_sphere_area(d);
            DensityConstants {
                c_r: 0.5f64.powi(d as i32) / unit_ball_volume(d),
                upper_r: 1.0,
                c_b: 0.5f64.powi(d as i32 - 1) / sigma,
                upper_b: (PI / 2.0).powi(d as i32 - 1) * unit_ball_volume(d - 1) / sigma,
            }
        }
    };
    if k.c_r > k.upper_r || k.c_b > k.upper_b {
        return Err(Error::Unsupported(format!(
            "density constants for {:?} in dimension {d} violate c <= C",
            domain.kind
        )));
    }
    Ok(k)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SampleKind {
    Interior,
    Boundary,
}

impl SampleKind {
    pub fn tag(self) -> &'static str {
        match self {
            SampleKind::Interior => "r",
            SampleKind::Boundary => "b",
        }
    }
}

/// Interior samples `T_r` and boundary samples `T_b`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSet {
    pub domain: Domain,
    pub seed: u64,
    pub interior: Points,
    pub boundary: Points,
}

/// iid uniform interior and boundary samples, `m_b` coupled to `m_r` by
/// [`Domain::boundary_count`]. For `d = 1` the boundary is both endpoints.
pub fn sample_training_set(domain: &Domain, m_r: usize, seed: u64) -> Result<TrainingSet> {
    if m_r == 0 {
        return Err(Error::InvalidInput("m_r must be >= 1".into()));
    }
    let d = domain.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let interior: Vec<f64> = (0..m_r).flat_map(|_| domain.sample_interior(&mut rng)).collect();
    let boundary = match domain.endpoints() {
        Some(ends) => ends.to_vec(),
        None => (0..domain.boundary_count(m_r))
            .flat_map(|_| domain.sample_boundary(&mut rng))
            .collect(),
    };
    let m_b = boundary.len() / d;
    Ok(TrainingSet {
        domain: *domain,
        seed,
        interior: Array2::from_shape_vec((m_r, d), interior).expect("shape"),
        boundary: Array2::from_shape_vec((m_b, d), boundary).expect("shape"),
    })
}

impl TrainingSet {
    pub fn m_r(&self) -> usize {
        self.interior.nrows()
    }

    pub fn m_b(&self) -> usize {
        self.boundary.nrows()
    }

    pub fn dim(&self) -> usize {
        self.domain.dim
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut header = vec!["kind".to_string()];
        header.extend((0..self.dim()).map(|k| format!("x{k}")));
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        let rows = [
            (SampleKind::Interior, &self.interior),
            (SampleKind::Boundary, &self.boundary),
        ]
        .into_iter()
        .flat_map(|(kind, pts)| {
            pts.outer_iter().map(move |row| {
                std::iter::once(kind.tag().to_string())
                    .chain(row.iter().map(|&v| csvio::fmt_f64(v)))
                    .collect()
            })
        });
        csvio::table_to_string("training-set", &self.seed.to_string(), &header, rows)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()?)?;
        Ok(())
    }

    pub fn from_csv(text: &str, domain: &Domain) -> Result<Self> {
        let table = csvio::read_table(text)?;
        let d = domain.dim;
        if table.header.len() != d + 1 || table.header[0] != "kind" {
            return Err(Error::Schema(format!(
                "expected header kind,x0..x{}, got {:?}",
                d - 1,
                table.header
            )));
        }
        let seed = table
            .meta("seed")
            .and_then(|s| s.parse().ok())
            .unwrap_or_default();
        let (mut r, mut b) = (Vec::new(), Vec::new());
        for row in &table.rows {
            let coords = row[1..]
                .iter()
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|e| Error::Schema(format!("bad coordinate `{v}`: {e}")))
                })
                .collect::<Result<Vec<_>>>()?;
            match row[0].as_str() {
                "r" => r.extend(coords),
                "b" => b.extend(coords),
                other => return Err(Error::Schema(format!("unknown sample kind `{other}`"))),
            }
        }
        Ok(Self {
            domain: *domain,
            seed,
            interior: Array2::from_shape_vec((r.len() / d, d), r).expect("shape"),
            boundary: Array2::from_shape_vec((b.len() / d, d), b).expect("shape"),
        })
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Largest distance from a probe grid node to its nearest point. The probe
/// grid has `probe_resolution` nodes per axis, so the result is a lower
/// bound on the true fill distance that tightens as the grid is refined.
pub fn fill_distance(points: &Points, domain: &Domain, probe_resolution: usize) -> Result<f64> {
    if points.nrows() == 0 {
        return Err(Error::InvalidInput("fill distance of an empty set".into()));
    }
    if points.ncols() != domain.dim {
        return Err(Error::DimensionMismatch {
            expected: domain.dim,
            got: points.ncols(),
        });
    }
    let probes = domain.probe_grid(probe_resolution)?;
    let pts = points.as_standard_layout();
    let pts = pts.as_slice().expect("standard layout");
    let d = domain.dim;
    let worst = probes
        .as_slice()
        .expect("standard layout")
        .par_chunks_exact(d)
        .map(|q| {
            pts.chunks_exact(d)
                .map(|p| sq_dist(p, q))
                .fold(f64::INFINITY, f64::min)
        })
        .reduce(|| 0.0, f64::max);
    Ok(worst.sqrt())
}

/// `sqrt(d) c^(-1/s) n^(-1/(2s))`.
pub fn fill_bound(n: usize, d: usize, s: usize, c: f64) -> f64 {
    (d as f64).sqrt() * c.powf(-1.0 / s as f64) * (n as f64).powf(-1.0 / (2.0 * s as f64))
}

/// `1 - sqrt(n) (1 - 1/sqrt(n))^n`.
pub fn fill_probability(n: usize) -> f64 {
    let r = (n as f64).sqrt();
    1.0 - r * (1.0 - 1.0 / r).powf(n as f64)
}

pub fn default_probe_resolution(d: usize) -> usize {
    match d {
        1 => 256,
        2 => 128,
        _ => 32,
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FillLemmaReport {
    pub dim: usize,
    pub n: usize,
    pub trials: usize,
    pub bound: f64,
    pub successes: usize,
    pub success_fraction: f64,
    pub theoretical_probability: f64,
    /// Binomial standard error at the theoretical probability.
    pub standard_error: f64,
    pub median_fill: f64,
    pub max_fill: f64,
    pub passed: bool,
}

/// Fill distances of `trials` independent interior samples of size `n`
/// against [`fill_bound`] with `s = d` and `c = c_r`.
pub fn verify_fill_lemma(
    domain: &Domain,
    n: usize,
    trials: usize,
    seed: u64,
    probe_resolution: usize,
) -> Result<FillLemmaReport> {
    if n < 4 || trials == 0 {
        return Err(Error::InvalidInput(format!(
            "need n >= 4 and at least one trial, got n={n}, trials={trials}"
        )));
    }
    let consts = density_constants(domain)?;
    let bound = fill_bound(n, domain.dim, domain.dim, consts.c_r);
    let fills = trial_fill_distances(domain, n, trials, seed, probe_resolution)?;
    let successes = fills.iter().filter(|&&f| f <= bound).count();
    let p = fill_probability(n);
    let se = (p * (1.0 - p) / trials as f64).sqrt();
    let frac = successes as f64 / trials as f64;
    Ok(FillLemmaReport {
        dim: domain.dim,
        n,
        trials,
        bound,
        successes,
        success_fraction: frac,
        theoretical_probability: p,
        standard_error: se,
        median_fill: stats::median(&fills),
        max_fill: fills.iter().copied().fold(0.0, f64::max),
        passed: frac >= p - 2.0 * se,
    })
}

/// One fill distance per trial; trial `t` draws from stream `t` of the seed.
pub fn trial_fill_distances(
    domain: &Domain,
    n: usize,
    trials: usize,
    seed: u64,
    probe_resolution: usize,
) -> Result<Vec<f64>> {
    (0..trials)
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            let flat: Vec<f64> = (0..n).flat_map(|_| domain.sample_interior(&mut rng)).collect();
            let pts = Array2::from_shape_vec((n, domain.dim), flat).expect("shape");
            fill_distance(&pts, domain, probe_resolution)
        })
        .collect()
}

/// Log-log slope of the median fill distance against `n`.
pub fn fill_distance_slope(
    domain: &Domain,
    ns: &[usize],
    trials: usize,
    seed: u64,
    probe_resolution: usize,
) -> Result<f64> {
    let medians = ns
        .iter()
        .map(|&n| {
            trial_fill_distances(domain, n, trials, seed, probe_resolution)
                .map(|f| stats::median(&f))
        })
        .collect::<Result<Vec<_>>>()?;
    let xs: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    Ok(stats::loglog_slope(&xs, &medians))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Projection {
    pub kind: SampleKind,
    pub index: usize,
    pub point: Vec<f64>,
    pub distance: f64,
}

/// Nearest sample to `x`: boundary points of the domain project onto `T_b`,
/// everything else onto `T_r`. Ties go to the lowest index.
pub fn closest_point_projection(x: &[f64], set: &TrainingSet) -> Result<Projection> {
    if x.len() != set.dim() {
        return Err(Error::DimensionMismatch {
            expected: set.dim(),
            got: x.len(),
        });
    }
    let kind = if set.domain.on_boundary(x, BOUNDARY_TOL) {
        SampleKind::Boundary
    } else {
        SampleKind::Interior
    };
    let pts = match kind {
        SampleKind::Interior => &set.interior,
        SampleKind::Boundary => &set.boundary,
    };
    let mut best: Option<(usize, f64)> = None;
    for (i, p) in pts.outer_iter().enumerate() {
        let d2 = sq_dist(p.as_slice().expect("row-major points"), x);
        if best.is_none_or(|(_, b)| d2 < b) {
            best = Some((i, d2));
        }
    }
    let (index, d2) = best.ok_or_else(|| {
        Error::InvalidInput(format!("no {} samples to project onto", kind.tag()))
    })?;
    Ok(Projection {
        kind,
        index,
        point: pts.row(index).to_vec(),
        distance: d2.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn one_dimensional_boundary_is_both_endpoints() {
        let t = sample_training_set(&Domain::hypercube(1), 100, 3).unwrap();
        assert_eq!(t.m_b(), 2);
        assert_eq!(t.boundary, array![[0.0], [1.0]]);
        assert!(t.interior.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn boundary_count_coupling() {
        let sq = Domain::hypercube(2);
        assert_eq!(sq.boundary_count(100), 10);
        assert_eq!(sq.boundary_count(101), 11);
        assert_eq!(Domain::hypercube(3).boundary_count(1000), 100);
        assert_eq!(sample_training_set(&sq, 100, 0).unwrap().m_b(), 10);
    }

    #[test]
    fn samples_respect_the_domain() {
        for dom in [Domain::hypercube(2), Domain::ball(2), Domain::ball(3)] {
            let t = sample_training_set(&dom, 500, 11).unwrap();
            for p in t.interior.outer_iter() {
                assert!(dom.contains_interior(p.as_slice().unwrap()));
            }
            for p in t.boundary.outer_iter() {
                assert!(dom.on_boundary(p.as_slice().unwrap(), 1e-12));
            }
        }
    }

    #[test]
    fn same_seed_same_set() {
        let dom = Domain::ball(2);
        let a = sample_training_set(&dom, 64, 5).unwrap();
        assert_eq!(a, sample_training_set(&dom, 64, 5).unwrap());
        assert_ne!(a, sample_training_set(&dom, 64, 6).unwrap());
    }

    #[test]
    fn cube_constants() {
        let k = density_constants(&Domain::hypercube(2)).unwrap();
        assert_eq!(k.c_r, 1.0);
        assert!((k.upper_r - PI).abs() < 1e-15);
        assert!((k.kappa_r() - PI).abs() < 1e-15);
        assert_eq!(k.upper_b, 2.0);
        assert!((unit_ball_volume(3) - 4.0 * PI / 3.0).abs() < 1e-14);
    }

    #[test]
    fn ball_constants_are_ordered() {
        for d in 1..6 {
            let k = density_constants(&Domain::ball(d)).unwrap();
            assert!(k.kappa_r() >= 1.0 && k.kappa_b() >= 1.0, "d={d}");
        }
    }

    #[test]
    fn fill_distance_examples() {
        let dom = Domain::hypercube(1);
        assert!((fill_distance(&array![[0.5]], &dom, 257).unwrap() - 0.5).abs() < 1e-15);
        assert!((fill_distance(&array![[0.0], [1.0]], &dom, 257).unwrap() - 0.5).abs() < 1e-15);
        assert!(fill_distance(&Array2::zeros((0, 1)), &dom, 16).is_err());
    }

    #[test]
    fn fill_bound_examples() {
        assert!((fill_bound(100, 1, 1, 1.0) - 0.1).abs() < 1e-15);
        assert!((fill_bound(10_000, 2, 2, 1.0) - 0.1 * 2f64.sqrt()).abs() < 1e-15);
        assert!((fill_bound(50, 1, 1, 2.0) - 0.5 * fill_bound(50, 1, 1, 1.0)).abs() < 1e-15);
        assert!((fill_probability(100) - (1.0 - 10.0 * 0.9f64.powi(100))).abs() < 1e-15);
        assert!((fill_probability(4) - 0.875).abs() < 1e-15);
    }

    #[test]
    fn projection_examples() {
        let set = TrainingSet {
            domain: Domain::hypercube(1),
            seed: 0,
            interior: array![[0.2], [0.8]],
            boundary: array![[0.0], [1.0]],
        };
        let p = closest_point_projection(&[0.45], &set).unwrap();
        assert_eq!((p.kind, p.index, p.point[0]), (SampleKind::Interior, 0, 0.2));
        let tie = closest_point_projection(&[0.5], &set).unwrap();
        assert_eq!(tie.index, 0);
        let b = closest_point_projection(&[1.0], &set).unwrap();
        assert_eq!((b.kind, b.index, b.distance), (SampleKind::Boundary, 1, 0.0));
    }

    #[test]
    fn csv_roundtrip() {
        let dom = Domain::ball(2);
        let t = sample_training_set(&dom, 20, 9).unwrap();
        let text = t.to_csv().unwrap();
        assert!(text.lines().nth(1).unwrap() == "kind,x0,x1");
        assert_eq!(TrainingSet::from_csv(&text, &dom).unwrap(), t);
    }
}
