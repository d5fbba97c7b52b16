//! I.i.d. ensembles of `z^(N+2) + c` with `N ~ Poisson(λ)` and `c` uniform on
//! the closed disk `B̄(a, r)`, acting on `U = A_{k²/2}` and `K = closure(A_{k/2})`.
//!
//! Draws are index addressable: the maps of replica `j` come from ChaCha8
//! stream `j` keyed by the seed, and map `i` reads a fixed block of that
//! stream. Sweeps therefore share random numbers across parameter values.

use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::{inclusion_contraction, HyperbolicAnnulus};
use crate::maps::MapDescriptor;
use crate::prelude::*;
use crate::solver::{dimension_bounds, illinois, DimensionResult, Diagnostics, EnsembleStats};
use crate::transfer::{Grid, GridShape, PressureEstimate, SequenceOperator, StepBounds};

/// Largest Poisson parameter accepted by the inversion sampler.
pub const MAX_LAMBDA: f64 = 30.0;

/// 32-bit words of the ChaCha stream reserved for each map.
const WORDS_PER_MAP: u128 = 16;

/// Grid used to validate sampled maps (expansion and area bound).
const VALIDATION_GRID: (usize, usize) = (9, 16);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleSpec {
    /// Center of the coefficient disk.
    pub a: Complex64,
    /// Radius of the coefficient disk.
    pub r: f64,
    /// Poisson parameter of `N`.
    pub lambda: f64,
    /// Annulus constant.
    pub k: f64,
    /// Number of maps per replica, burn-in included.
    pub seq_len: usize,
    pub seed: u64,
    pub replicas: usize,
    /// Leading cocycle terms discarded from each replica.
    pub burn_in: usize,
}

impl Default for EnsembleSpec {
    fn default() -> Self {
        Self {
            a: Complex64::new(0.0, 0.0),
            r: 0.0,
            lambda: 0.0,
            k: 0.99,
            seq_len: 220,
            seed: 0,
            replicas: 8,
            burn_in: 20,
        }
    }
}

impl EnsembleSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.k > 0.0 && self.k < 1.0) {
            return Err(Error::InvalidInput("k must lie in (0, 1)"));
        }
        if !(self.r >= 0.0) {
            return Err(Error::InvalidInput("r must be nonnegative"));
        }
        if !(self.lambda >= 0.0 && self.lambda <= MAX_LAMBDA) {
            return Err(Error::InvalidInput("lambda must lie in [0, 30]"));
        }
        if !(self.a.norm() + self.r < self.k * self.k / 4.0) {
            return Err(Error::InvalidInput("coefficient disk violates |a| + r < k^2/4"));
        }
        if self.replicas == 0 {
            return Err(Error::InvalidInput("need at least one replica"));
        }
        if self.seq_len <= self.burn_in {
            return Err(Error::InvalidInput("seq_len must exceed burn_in"));
        }
        Ok(())
    }

    pub fn domains(&self) -> Result<(HyperbolicAnnulus, HyperbolicAnnulus)> {
        HyperbolicAnnulus::example_pair(self.k)
    }

    /// `(N, c)` of map `index` in replica `replica`.
    pub fn draw(&self, replica: usize, index: usize) -> (u32, Complex64) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(replica as u64);
        rng.set_word_pos(index as u128 * WORDS_PER_MAP);
        let u_degree: f64 = rng.random();
        let u_radius: f64 = rng.random();
        let u_angle: f64 = rng.random();
        let n = poisson_inverse(self.lambda, u_degree);
        let c = self.a + Complex64::from_polar(self.r * u_radius.sqrt(), 2.0 * PI * u_angle);
        (n, c)
    }
}

/// Smallest `n` with `P(N ≤ n) ≥ u` for `N ~ Poisson(λ)`, by sequential search.
pub fn poisson_inverse(lambda: f64, u: f64) -> u32 {
    let mut p = (-lambda).exp();
    let mut cdf = p;
    let mut n = 0u32;
    while u > cdf && n < 1000 {
        n += 1;
        p *= lambda / f64::from(n);
        cdf += p;
        if p == 0.0 {
            break;
        }
    }
    n
}

/// The maps of one replica, each checked for uniform expansion (`Df ≥ β`
/// on sampled preimages) and for the area bound `deg f ≤ (sup Df)²`.
pub fn sample_sequence(spec: &EnsembleSpec, replica: usize) -> Result<Vec<MapDescriptor>> {
    spec.validate()?;
    let (u, k) = spec.domains()?;
    let beta = inclusion_contraction(&u, &k)?;
    (0..spec.seq_len)
        .map(|index| {
            let (n, c) = spec.draw(replica, index);
            let map = MapDescriptor::power_plus_c(n, c, u);
            let range = map.derivative_range(&k, VALIDATION_GRID)?;
            if range.min_derivative < beta {
                return Err(Error::Validation { index, reason: "map is not uniformly expanding on K" });
            }
            if map.degree() as f64 > range.max_derivative * range.max_derivative {
                return Err(Error::Validation { index, reason: "degree exceeds (sup Df)^2" });
            }
            Ok(map)
        })
        .collect()
}

/// One replica's discretized sequence and its single-pass pressure readout.
struct Replica {
    op: SequenceOperator,
    burn_in: usize,
}

#[derive(Debug, Clone, Copy)]
struct ReplicaPressure {
    cocycle: f64,
    lower: f64,
    upper: f64,
}

impl Replica {
    fn new(spec: &EnsembleSpec, shape: GridShape, replica: usize) -> Result<Self> {
        let maps = sample_sequence(spec, replica)?;
        let (_, k) = spec.domains()?;
        Ok(Self { op: SequenceOperator::new(&maps, Grid::new(k, shape)?)?, burn_in: spec.burn_in })
    }

    fn pressure(&self, s: f64) -> Result<ReplicaPressure> {
        let n = self.op.period();
        let trace = self.op.normalized_iterate(s, &self.op.one(), self.op.grid().anchor(), n)?;
        let StepBounds { log_min, log_max } = trace.bounds[n - 1];
        Ok(ReplicaPressure {
            cocycle: trace.cocycle_mean(self.burn_in),
            lower: log_min / n as f64,
            upper: log_max / n as f64,
        })
    }
}

fn build_replicas(spec: &EnsembleSpec, shape: GridShape) -> Result<Vec<Replica>> {
    spec.validate()?;
    map_replicas(spec.replicas, |j| Replica::new(spec, shape, j))
}

#[cfg(feature = "parallel")]
fn map_replicas<T: Send>(count: usize, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    use rayon::prelude::*;
    (0..count).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_replicas<T>(count: usize, f: impl Fn(usize) -> Result<T>) -> Result<Vec<T>> {
    (0..count).map(f).collect()
}

/// Cocycle pressure of the ensemble at `s`, pooled over replicas.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomPressure {
    /// `cocycle` is the replica mean; `lower`/`upper` are replica means of
    /// the `(1/n) log m_n`, `(1/n) log M_n` bracket of the same runs.
    pub estimate: PressureEstimate,
    pub std_error: f64,
    pub per_replica: Vec<f64>,
}

pub fn random_pressure(spec: &EnsembleSpec, s: f64, shape: GridShape) -> Result<RandomPressure> {
    let replicas = build_replicas(spec, shape)?;
    let values = map_replicas(replicas.len(), |j| replicas[j].pressure(s))?;
    let cocycles: Vec<f64> = values.iter().map(|v| v.cocycle).collect();
    let (mean, std_error) = mean_and_std_error(&cocycles);
    let m = values.len() as f64;
    Ok(RandomPressure {
        estimate: PressureEstimate {
            s,
            n: spec.seq_len,
            lower: values.iter().map(|v| v.lower).sum::<f64>() / m,
            upper: values.iter().map(|v| v.upper).sum::<f64>() / m,
            cocycle: Some(mean),
            eta_fit: None,
        },
        std_error,
        per_replica: cocycles,
    })
}

/// Dimension of the ensemble with its Monte Carlo dispersion and the
/// a-priori bounds from the sampled maps.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomDimension {
    /// `s_crit`, `s_lower` and `s_upper` are replica means.
    pub result: DimensionResult,
    pub std_error: f64,
    pub per_replica: Vec<f64>,
    pub bounds: (f64, f64),
}

/// Per-replica roots of the cocycle pressure and of both bracket sides.
pub fn random_dimension(spec: &EnsembleSpec, shape: GridShape, tol: f64) -> Result<RandomDimension> {
    const S_RANGE: (f64, f64) = (0.0, 2.2);
    const MAX_ITER: usize = 60;
    let replicas = build_replicas(spec, shape)?;
    let roots = map_replicas(replicas.len(), |j| {
        let rep = &replicas[j];
        let crit = illinois(|s| Ok(rep.pressure(s)?.cocycle), S_RANGE.0, S_RANGE.1, tol, MAX_ITER)?;
        let lower = illinois(|s| Ok(rep.pressure(s)?.lower), S_RANGE.0, S_RANGE.1, tol, MAX_ITER)?;
        let upper = illinois(|s| Ok(rep.pressure(s)?.upper), S_RANGE.0, S_RANGE.1, tol, MAX_ITER)?;
        let width = {
            let p = rep.pressure(crit)?;
            p.upper - p.lower
        };
        Ok((crit, lower, upper, width))
    })?;
    let crits: Vec<f64> = roots.iter().map(|r| r.0).collect();
    let (s_crit, std_error) = mean_and_std_error(&crits);
    let m = roots.len() as f64;

    let (_, k) = spec.domains()?;
    let mut maps = Vec::new();
    for j in 0..spec.replicas {
        maps.extend(sample_sequence(spec, j)?);
    }
    let bounds = dimension_bounds(&EnsembleStats::from_maps(&maps, &k, VALIDATION_GRID)?)?;

    Ok(RandomDimension {
        result: DimensionResult {
            s_crit,
            s_lower: roots.iter().map(|r| r.1).sum::<f64>() / m,
            s_upper: roots.iter().map(|r| r.2).sum::<f64>() / m,
            n_used: spec.seq_len,
            grid_shape: shape,
            diagnostics: Diagnostics {
                bracket_width_at_root: roots.iter().map(|r| r.3).sum::<f64>() / m,
                eta_fit: None,
                clamped_points: replicas.iter().map(|r| r.op.clamped_points()).sum(),
            },
        },
        std_error,
        per_replica: crits,
        bounds,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    /// `|a|`, keeping the direction of `a` (the positive real axis when `a = 0`).
    AModulus,
    R,
    Lambda,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSample {
    pub value: f64,
    pub d: f64,
    pub std_error: f64,
    pub bracket_width: f64,
    pub s_lower: f64,
    pub s_upper: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub axis: SweepAxis,
    /// Sorted by parameter value.
    pub samples: Vec<SweepSample>,
    /// Largest absolute residual of a least-squares cubic through the samples.
    pub fit_residual: f64,
    /// `sqrt(mean(std_error²))`.
    pub pooled_std_error: f64,
}

impl SweepAxis {
    pub fn apply(&self, base: &EnsembleSpec, value: f64) -> EnsembleSpec {
        let mut spec = *base;
        match self {
            SweepAxis::AModulus => {
                let dir = if base.a.norm() > 0.0 { base.a / base.a.norm() } else { Complex64::new(1.0, 0.0) };
                spec.a = dir * value;
            }
            SweepAxis::R => spec.r = value,
            SweepAxis::Lambda => spec.lambda = value,
        }
        spec
    }
}

/// Dimension along one parameter axis with common random numbers.
pub fn parameter_sweep(base: &EnsembleSpec, axis: SweepAxis, values: &[f64], shape: GridShape, tol: f64) -> Result<SweepResult> {
    if values.is_empty() {
        return Err(Error::InvalidInput("sweep needs at least one value"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let specs: Vec<EnsembleSpec> = sorted.iter().map(|&v| axis.apply(base, v)).collect();
    for spec in &specs {
        spec.validate()?;
    }
    let mut samples = Vec::with_capacity(specs.len());
    for (spec, &value) in specs.iter().zip(&sorted) {
        let d = random_dimension(spec, shape, tol)?;
        samples.push(SweepSample {
            value,
            d: d.result.s_crit,
            std_error: d.std_error,
            bracket_width: d.result.diagnostics.bracket_width_at_root,
            s_lower: d.result.s_lower,
            s_upper: d.result.s_upper,
        });
    }
    let xs: Vec<f64> = samples.iter().map(|s| s.value).collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.d).collect();
    let coeffs = polyfit(&xs, &ys, 3.min(xs.len() - 1));
    let fit_residual = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - polyval(&coeffs, *x)).abs())
        .fold(0.0, f64::max);
    let pooled_std_error =
        (samples.iter().map(|s| s.std_error * s.std_error).sum::<f64>() / samples.len() as f64).sqrt();
    Ok(SweepResult { axis, samples, fit_residual, pooled_std_error })
}

/// Sample mean and standard error of the mean (0 for a single value).
pub fn mean_and_std_error(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Least-squares polynomial coefficients, lowest order first.
pub fn polyfit(xs: &[f64], ys: &[f64], degree: usize) -> Vec<f64> {
    let m = degree + 1;
    // Normal equations on x centered and scaled to [-1, 1] for conditioning.
    let (lo, hi) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let center = 0.5 * (lo + hi);
    let half = if hi > lo { 0.5 * (hi - lo) } else { 1.0 };
    let mut ata = vec![vec![0.0; m + 1]; m];
    for (&x, &y) in xs.iter().zip(ys) {
        let t = (x - center) / half;
        let powers: Vec<f64> = (0..m).map(|p| t.powi(p as i32)).collect();
        for i in 0..m {
            for j in 0..m {
                ata[i][j] += powers[i] * powers[j];
            }
            ata[i][m] += powers[i] * y;
        }
    }
    let scaled = solve_augmented(ata);
    // Expand back to powers of x.
    let mut coeffs = vec![0.0; m];
    for (p, &c) in scaled.iter().enumerate() {
        // c · ((x − center)/half)^p
        for q in 0..=p {
            let binom = binomial(p, q) as f64;
            coeffs[q] += c * binom * (-center).powi((p - q) as i32) / half.powi(p as i32);
        }
    }
    coeffs
}

pub fn polyval(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

/// Gaussian elimination with partial pivoting on an `m × (m+1)` system.
fn solve_augmented(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let m = a.len();
    for col in 0..m {
        let pivot = (col..m).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, pivot);
        let p = a[col][col];
        if p.abs() < 1e-300 {
            continue;
        }
        for row in (col + 1)..m {
            let factor = a[row][col] / p;
            for c in col..=m {
                a[row][c] -= factor * a[col][c];
            }
        }
    }
    let mut x = vec![0.0; m];
    for row in (0..m).rev() {
        let tail: f64 = ((row + 1)..m).map(|c| a[row][c] * x[c]).sum();
        x[row] = if a[row][row].abs() < 1e-300 { 0.0 } else { (a[row][m] - tail) / a[row][row] };
    }
    x
}
