//! Bowen root finding: the critical exponent is the zero of the pressure.
//!
//! Three curves are solved for each problem: the lower bracket
//! `(1/n) log m_n(s)`, the upper bracket `(1/n) log M_n(s)` and the cocycle
//! estimate from the anchor-normalized iteration. The bracket roots give the
//! reported enclosure `[s_lower, s_upper]`; the cocycle root is `s_crit`.

use crate::maps::MapDescriptor;
use crate::prelude::*;
use crate::transfer::{Grid, GridShape, SequenceOperator};
use crate::geometry::HyperbolicAnnulus;

/// Parameters of a dimension computation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Iterate depth for the `m_n`/`M_n` bracket.
    pub n: usize,
    pub s_range: (f64, f64),
    /// Bisection tolerance in `s`.
    pub tol: f64,
    pub max_iter: usize,
    /// Length of the normalized iteration behind the cocycle estimate.
    pub cocycle_steps: usize,
    /// Leading `log p_k` terms discarded from the cocycle mean.
    pub burn_in: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { n: 8, s_range: (0.0, 2.2), tol: 1e-6, max_iter: 60, cocycle_steps: 40, burn_in: 20 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostics {
    pub bracket_width_at_root: f64,
    pub eta_fit: Option<f64>,
    pub clamped_points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DimensionResult {
    pub s_crit: f64,
    /// Root of the lower bracket `(1/n) log m_n`.
    pub s_lower: f64,
    /// Root of the upper bracket `(1/n) log M_n`.
    pub s_upper: f64,
    pub n_used: usize,
    pub grid_shape: GridShape,
    pub diagnostics: Diagnostics,
}

/// Zero of a decreasing function on `[lo, hi]` by bisection.
///
/// Every midpoint value must lie between the current endpoint values;
/// anything else is reported as [`Error::NotMonotone`]. When `lo = 0` and
/// `f(0) ≤ 0` the zero is taken to be 0 (the supremum of an empty set of
/// positive-pressure exponents).
pub fn bisect(mut f: impl FnMut(f64) -> Result<f64>, lo: f64, hi: f64, tol: f64, max_iter: usize) -> Result<f64> {
    if !(tol > 0.0) || !(hi > lo) {
        return Err(Error::InvalidInput("bisection needs tol > 0 and lo < hi"));
    }
    let (mut a, mut b) = (lo, hi);
    let mut fa = f(a)?;
    if lo == 0.0 && fa <= 0.0 {
        return Ok(0.0);
    }
    let mut fb = f(b)?;
    if !(fa > 0.0 && fb <= 0.0) {
        return Err(Error::NoSignChange { lo, hi, p_lo: fa, p_hi: fb });
    }
    for _ in 0..max_iter {
        if b - a <= tol {
            break;
        }
        let mid = 0.5 * (a + b);
        let fm = f(mid)?;
        let slack = 1e-9 + 1e-6 * (fa.abs() + fb.abs());
        if fm > fa + slack || fm < fb - slack {
            return Err(Error::NotMonotone { s: mid });
        }
        if fm > 0.0 {
            a = mid;
            fa = fm;
        } else {
            b = mid;
            fb = fm;
        }
    }
    Ok(0.5 * (a + b))
}

/// Zero of a decreasing function on `[lo, hi]` by the Illinois variant of
/// regula falsi.
///
/// Same contract as [`bisect`] (sign conventions, monotonicity check, the
/// `f(0) ≤ 0` rule) but converges superlinearly on smooth curves; used where
/// each evaluation is a full Monte Carlo run.
pub fn illinois(mut f: impl FnMut(f64) -> Result<f64>, lo: f64, hi: f64, tol: f64, max_iter: usize) -> Result<f64> {
    if !(tol > 0.0) || !(hi > lo) {
        return Err(Error::InvalidInput("root search needs tol > 0 and lo < hi"));
    }
    let (mut a, mut b) = (lo, hi);
    let mut fa = f(a)?;
    if lo == 0.0 && fa <= 0.0 {
        return Ok(0.0);
    }
    let mut fb = f(b)?;
    if !(fa > 0.0 && fb <= 0.0) {
        return Err(Error::NoSignChange { lo, hi, p_lo: fa, p_hi: fb });
    }
    let mut side = 0i8;
    let mut last = b;
    for _ in 0..max_iter {
        let mut x = (a * fb - b * fa) / (fb - fa);
        if !(x > a && x < b) {
            x = 0.5 * (a + b);
        }
        let fx = f(x)?;
        let slack = 1e-9 + 1e-6 * (fa.abs() + fb.abs());
        if fx > fa + slack || fx < fb - slack {
            return Err(Error::NotMonotone { s: x });
        }
        let step = (x - last).abs();
        last = x;
        if fx == 0.0 || step <= tol || b - a <= tol {
            return Ok(x);
        }
        if fx > 0.0 {
            a = x;
            fa = fx;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        } else {
            b = x;
            fb = fx;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        }
    }
    Ok(last)
}

/// Critical exponent of a stationary or periodic map sequence.
pub fn solve_dimension(maps: &[MapDescriptor], k: &HyperbolicAnnulus, shape: GridShape, config: &SolverConfig) -> Result<DimensionResult> {
    let op = SequenceOperator::new(maps, Grid::new(*k, shape)?)?;
    solve_with_operator(&op, config)
}

/// [`solve_dimension`] on an already discretized sequence.
pub fn solve_with_operator(op: &SequenceOperator, config: &SolverConfig) -> Result<DimensionResult> {
    let SolverConfig { n, s_range: (lo, hi), tol, max_iter, cocycle_steps, burn_in } = *config;
    let s_lower = bisect(|s| Ok(op.pressure_bracket(s, n)?.lower), lo, hi, tol, max_iter)?;
    let s_upper = bisect(|s| Ok(op.pressure_bracket(s, n)?.upper), lo, hi, tol, max_iter)?;
    let cocycle = |s: f64| -> Result<f64> {
        let trace = op.normalized_iterate(s, &op.one(), op.grid().anchor(), cocycle_steps)?;
        Ok(trace.cocycle_mean(burn_in))
    };
    let s_crit = bisect(cocycle, lo, hi, tol, max_iter)?;
    let at_root = op.pressure_bracket(s_crit, n)?;
    let eta_fit = op.contraction_rate(s_crit, 3, cocycle_steps.min(30), 0x5eed).ok();
    Ok(DimensionResult {
        s_crit,
        s_lower,
        s_upper,
        n_used: n,
        grid_shape: op.grid().shape(),
        diagnostics: Diagnostics {
            bracket_width_at_root: at_root.width(),
            eta_fit,
            clamped_points: op.clamped_points(),
        },
    })
}

/// Windowed proxies for the lower and upper pressures of a sequence: the
/// inf of `(1/k) log m_k` and the sup of `(1/k) log M_k` over the last half
/// of the first `n` steps.
pub fn tail_pressures(op: &SequenceOperator, s: f64, n: usize) -> Result<(f64, f64)> {
    if n < 2 {
        return Err(Error::InvalidInput("tail window needs n >= 2"));
    }
    let trace = op.iterate(s, &op.one(), n)?;
    let start = n / 2;
    let mut lower = f64::INFINITY;
    let mut upper = f64::NEG_INFINITY;
    for (idx, b) in trace.bounds.iter().enumerate().skip(start) {
        let k = (idx + 1) as f64;
        lower = lower.min(b.log_min / k);
        upper = upper.max(b.log_max / k);
    }
    Ok((lower, upper))
}

/// Lower and upper critical exponents `(s̲, s̄)` of a (possibly
/// non-stationary) sequence, from the windowed pressure proxies.
pub fn critical_exponents(maps: &[MapDescriptor], k: &HyperbolicAnnulus, shape: GridShape, n: usize, config: &SolverConfig) -> Result<(f64, f64)> {
    let op = SequenceOperator::new(maps, Grid::new(*k, shape)?)?;
    let (lo, hi) = config.s_range;
    let lower = bisect(|s| Ok(tail_pressures(&op, s, n)?.0), lo, hi, config.tol, config.max_iter)?;
    let upper = bisect(|s| Ok(tail_pressures(&op, s, n)?.1), lo, hi, config.tol, config.max_iter)?;
    Ok((lower, upper))
}

/// Averages feeding the a-priori dimension bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleStats {
    pub e_log_dmin: f64,
    pub e_log_dmax: f64,
    pub e_log_sup_df: f64,
    /// `E log ‖1/Df‖ = −E log inf Df`.
    pub e_log_sup_inv_df: f64,
}

impl EnsembleStats {
    /// Sample averages over `maps`, with `Df` extrema taken over a grid of `K`.
    pub fn from_maps(maps: &[MapDescriptor], k: &HyperbolicAnnulus, grid: (usize, usize)) -> Result<Self> {
        if maps.is_empty() {
            return Err(Error::InvalidInput("ensemble statistics need at least one map"));
        }
        let mut acc = [0.0f64; 4];
        for map in maps {
            let r = map.derivative_range(k, grid)?;
            acc[0] += (r.min_count as f64).ln();
            acc[1] += (r.max_count as f64).ln();
            acc[2] += r.max_derivative.ln();
            acc[3] -= r.min_derivative.ln();
        }
        let m = maps.len() as f64;
        Ok(Self {
            e_log_dmin: acc[0] / m,
            e_log_dmax: acc[1] / m,
            e_log_sup_df: acc[2] / m,
            e_log_sup_inv_df: acc[3] / m,
        })
    }
}

/// `E log d°_min / E log ‖Df‖ ≤ dim ≤ E log d°_max / (−E log ‖1/Df‖)`.
pub fn dimension_bounds(stats: &EnsembleStats) -> Result<(f64, f64)> {
    if !(stats.e_log_sup_df > 0.0) {
        return Err(Error::DegenerateBound("E log sup Df must be positive"));
    }
    if !(-stats.e_log_sup_inv_df > 0.0) {
        return Err(Error::DegenerateBound("E log inf Df must be positive"));
    }
    Ok((stats.e_log_dmin / stats.e_log_sup_df, stats.e_log_dmax / -stats.e_log_sup_inv_df))
}
