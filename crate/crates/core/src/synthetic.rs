//! Seeded generators for the experiment families and an independent
//! quadrature oracle for ground-truth information values on known
//! densities.
//!
//! The chain family draws `x1 ~ Unif(-0.5, 0.5)` and propagates
//! `x2 = x1^2 + a n1`, `x3 = x2^2 + a n2` with independent Gaussian noise.
//! The cycle family adds a direct coupling `b x1` into `x3`. The noise
//! distribution `N(0, 0.5)` is interpreted as variance 0.5 (standard
//! deviation sqrt(0.5)); pass `noise_std` to override.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::functional::Functional;
use crate::rng::RngStream;

pub const DEFAULT_NOISE_STD: f64 = std::f64::consts::FRAC_1_SQRT_2; // sqrt(0.5)

/// Markov-chain experiment family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainSpec {
    pub n: usize,
    pub a: f64,
    pub seed: u64,
    /// Noise standard deviation; `None` means sqrt(0.5).
    pub noise_std: Option<f64>,
}

impl ChainSpec {
    pub fn new(n: usize, a: f64, seed: u64) -> Self {
        ChainSpec {
            n,
            a,
            seed,
            noise_std: None,
        }
    }
}

/// Cycle experiment family: the chain plus a direct `b x1` term in `x3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleSpec {
    pub n: usize,
    pub a: f64,
    pub b: f64,
    pub seed: u64,
    pub noise_std: Option<f64>,
}

impl CycleSpec {
    pub fn new(n: usize, a: f64, b: f64, seed: u64) -> Self {
        CycleSpec {
            n,
            a,
            b,
            seed,
            noise_std: None,
        }
    }
}

fn validate_family(n: usize, a: f64, noise_std: Option<f64>) -> Result<f64> {
    if n < 2 {
        return Err(Error::TooFewRows { found: n });
    }
    if !(a >= 0.0) || !a.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "noise scale must be non-negative, got {a}"
        )));
    }
    let std = noise_std.unwrap_or(DEFAULT_NOISE_STD);
    if !(std > 0.0) || !std.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "noise standard deviation must be positive, got {std}"
        )));
    }
    Ok(std)
}

/// Shared generator: `b = 0` reproduces the chain bitwise because both
/// families consume identical random streams.
fn generate_family(n: usize, a: f64, b: f64, seed: u64, noise_std: Option<f64>) -> Result<Dataset> {
    let std = validate_family(n, a, noise_std)?;
    if !b.is_finite() {
        return Err(Error::InvalidConfig(format!("coupling must be finite, got {b}")));
    }
    let normal = Normal::new(0.0, std).unwrap();
    let mut rng_x1 = RngStream::new(seed, 1).rng();
    let mut rng_n1 = RngStream::new(seed, 2).rng();
    let mut rng_n2 = RngStream::new(seed, 3).rng();
    let x1: Vec<f64> = (0..n).map(|_| rng_x1.random_range(-0.5..0.5)).collect();
    let n1: Vec<f64> = (0..n).map(|_| normal.sample(&mut rng_n1)).collect();
    let n2: Vec<f64> = (0..n).map(|_| normal.sample(&mut rng_n2)).collect();
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let c1 = x1[i];
        let c2 = c1 * c1 + a * n1[i];
        let c3 = c2 * c2 + b * c1 + a * n2[i];
        rows.push(vec![c1, c2, c3]);
    }
    Ok(Dataset::from_rows(rows, Dataset::default_names(3))?.with_seed(seed))
}

pub fn gen_chain(spec: &ChainSpec) -> Result<Dataset> {
    generate_family(spec.n, spec.a, 0.0, spec.seed, spec.noise_std)
}

pub fn gen_cycle(spec: &CycleSpec) -> Result<Dataset> {
    generate_family(spec.n, spec.a, spec.b, spec.seed, spec.noise_std)
}

/// `n x d` matrix of independent standard normal draws (null-calibration
/// fixture).
pub fn gen_independent_normal(n: usize, d: usize, seed: u64) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::TooFewRows { found: n });
    }
    if d == 0 {
        return Err(Error::TooFewVariables { d });
    }
    let normal = Normal::new(0.0, 1.0).unwrap();
    let cols: Vec<Vec<f64>> = (0..d)
        .map(|c| {
            let mut rng = RngStream::new(seed, 10 + c as u64).rng();
            (0..n).map(|_| normal.sample(&mut rng)).collect()
        })
        .collect();
    let rows: Vec<Vec<f64>> = (0..n).map(|r| (0..d).map(|c| cols[c][r]).collect()).collect();
    Ok(Dataset::from_rows(rows, Dataset::default_names(d))?.with_seed(seed))
}

/// Bivariate Gaussian with unit marginals and correlation `rho`.
pub fn gen_gaussian_pair(n: usize, rho: f64, seed: u64) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::TooFewRows { found: n });
    }
    if !(rho > -1.0 && rho < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "correlation must lie in (-1, 1), got {rho}"
        )));
    }
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut rng_a = RngStream::new(seed, 1).rng();
    let mut rng_b = RngStream::new(seed, 2).rng();
    let scale = (1.0 - rho * rho).sqrt();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let z1 = normal.sample(&mut rng_a);
            let z2 = normal.sample(&mut rng_b);
            vec![z1, rho * z1 + scale * z2]
        })
        .collect();
    Ok(Dataset::from_rows(rows, Dataset::default_names(2))?.with_seed(seed))
}

/// Known bivariate density for quadrature ground truth.
#[derive(Debug, Clone, PartialEq)]
pub enum OracleDensity {
    GaussianPair { rho: f64, grid: usize },
    IndependentUniformPair { grid: usize },
    /// Cell probability masses on an nx x ny grid (row-major). Pairwise
    /// information values depend only on the masses, not on the cell
    /// geometry.
    DiscretizedTable {
        probs: Vec<f64>,
        nx: usize,
        ny: usize,
    },
}

impl OracleDensity {
    pub fn gaussian_pair(rho: f64) -> Result<Self> {
        if !(rho > -1.0 && rho < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "correlation must lie in (-1, 1), got {rho}"
            )));
        }
        Ok(OracleDensity::GaussianPair { rho, grid: 512 })
    }

    pub fn independent_uniform_pair() -> Self {
        OracleDensity::IndependentUniformPair { grid: 256 }
    }

    pub fn discretized_table(probs: Vec<f64>, nx: usize, ny: usize) -> Result<Self> {
        if probs.len() != nx * ny || nx == 0 || ny == 0 {
            return Err(Error::InvalidConfig("table shape mismatch".into()));
        }
        if probs.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(Error::InvalidConfig("table entries must be non-negative".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidConfig(format!(
                "table mass {total} not normalized"
            )));
        }
        Ok(OracleDensity::DiscretizedTable { probs, nx, ny })
    }
}

/// Pairwise information value from cell masses: marginal masses come from
/// summing the joint, and the integral is the mass-weighted sum of `g`
/// over marginal-product to joint ratios. Shannon values are oriented as
/// conventional mutual information.
fn mi_from_masses(probs: &[f64], nx: usize, ny: usize, f: &Functional) -> f64 {
    let mut px = vec![0.0f64; nx];
    let mut py = vec![0.0f64; ny];
    for a in 0..nx {
        for b in 0..ny {
            let p = probs[a * ny + b];
            px[a] += p;
            py[b] += p;
        }
    }
    let shannon = matches!(f, Functional::Shannon);
    let mut total = 0.0f64;
    for a in 0..nx {
        for b in 0..ny {
            let p = probs[a * ny + b];
            if p <= 0.0 {
                continue;
            }
            let ratio = px[a] * py[b] / p;
            let term = f.eval_unchecked(ratio);
            total += if shannon { -term * p } else { term * p };
        }
    }
    total
}

fn gaussian_pair_masses(rho: f64, grid: usize) -> Vec<f64> {
    let half_extent = 6.0;
    let delta = 2.0 * half_extent / grid as f64;
    let det = 1.0 - rho * rho;
    let norm = 1.0 / (2.0 * std::f64::consts::PI * det.sqrt());
    let cell = delta * delta;
    let mut probs = Vec::with_capacity(grid * grid);
    for a in 0..grid {
        let x = -half_extent + (a as f64 + 0.5) * delta;
        for b in 0..grid {
            let y = -half_extent + (b as f64 + 0.5) * delta;
            let q = (x * x - 2.0 * rho * x * y + y * y) / (2.0 * det);
            probs.push(norm * (-q).exp() * cell);
        }
    }
    probs
}

fn uniform_pair_masses(grid: usize) -> Vec<f64> {
    let delta = 1.0 / grid as f64;
    vec![delta * delta; grid * grid]
}

/// Ground-truth pairwise information value by midpoint tensor-grid
/// quadrature.
///
/// Smooth densities are evaluated at the requested resolution and at its
/// refinement (cell size halved); if the two disagree by more than 1e-3
/// the grid is reported as too coarse, otherwise the refined value is
/// returned. Table densities are exact sums.
pub fn oracle_mi(density: &OracleDensity, f: &Functional) -> Result<f64> {
    match density {
        OracleDensity::DiscretizedTable { probs, nx, ny } => Ok(mi_from_masses(probs, *nx, *ny, f)),
        OracleDensity::GaussianPair { rho, grid } => {
            check_smooth_grid(*grid)?;
            let coarse = gaussian_pair_masses(*rho, *grid);
            check_mass(&coarse)?;
            let fine = gaussian_pair_masses(*rho, grid * 2);
            let v1 = mi_from_masses(&coarse, *grid, *grid, f);
            let v2 = mi_from_masses(&fine, grid * 2, grid * 2, f);
            let delta = (v1 - v2).abs();
            if delta > 1e-3 {
                return Err(Error::GridTooCoarse { delta });
            }
            Ok(v2)
        }
        OracleDensity::IndependentUniformPair { grid } => {
            check_smooth_grid(*grid)?;
            let coarse = uniform_pair_masses(*grid);
            check_mass(&coarse)?;
            let fine = uniform_pair_masses(grid * 2);
            let v1 = mi_from_masses(&coarse, *grid, *grid, f);
            let v2 = mi_from_masses(&fine, grid * 2, grid * 2, f);
            let delta = (v1 - v2).abs();
            if delta > 1e-3 {
                return Err(Error::GridTooCoarse { delta });
            }
            Ok(v2)
        }
    }
}

fn check_smooth_grid(grid: usize) -> Result<()> {
    if grid < 64 {
        return Err(Error::InvalidConfig(format!(
            "quadrature grid must be at least 64 per dimension, got {grid}"
        )));
    }
    Ok(())
}

fn check_mass(probs: &[f64]) -> Result<()> {
    let total: f64 = probs.iter().sum();
    let dev = (total - 1.0).abs();
    if dev > 1e-6 {
        return Err(Error::GridTooCoarse { delta: dev });
    }
    Ok(())
}
