//! Grid-discretized transfer operators `L_{s,f}` and their iterates.
//!
//! Functions on `K` are sampled on a uniform grid in `(log|z|, arg z)` and
//! read back by bilinear interpolation, which keeps the discrete operator
//! positive. Iterates are renormalized every step and the scale is
//! accumulated in log space, so `m_n` and `M_n` are only ever handled as
//! logarithms.

use alloc::borrow::Cow;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::HyperbolicAnnulus;
use crate::maps::MapDescriptor;
use crate::prelude::*;

/// Floor applied to interpolated values before they enter a logarithm.
pub const POSITIVITY_FLOOR: f64 = 1e-300;

/// Differences below this are treated as converged when fitting contraction rates.
const CONTRACTION_FLOOR: f64 = 1e-11;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridShape {
    pub n_radial: usize,
    pub n_angular: usize,
}

impl GridShape {
    pub fn new(n_radial: usize, n_angular: usize) -> Self {
        Self { n_radial, n_angular }
    }

    pub fn len(&self) -> usize {
        self.n_radial * self.n_angular
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Node layout over `K`: `n_radial` nodes spanning the closed `log|z|` band
/// (endpoints included) and `n_angular` periodic nodes starting at `arg = −π`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    k: HyperbolicAnnulus,
    shape: GridShape,
    u_lo: f64,
    du: f64,
    dv: f64,
}

impl Grid {
    pub fn new(k: HyperbolicAnnulus, shape: GridShape) -> Result<Self> {
        if shape.n_radial < 2 || shape.n_angular < 1 {
            return Err(Error::InvalidInput("grid needs at least 2 radial and 1 angular node"));
        }
        let (u_lo, u_hi) = k.log_modulus_band();
        Ok(Self {
            k,
            shape,
            u_lo,
            du: (u_hi - u_lo) / (shape.n_radial - 1) as f64,
            dv: 2.0 * PI / shape.n_angular as f64,
        })
    }

    pub fn k(&self) -> &HyperbolicAnnulus {
        &self.k
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    /// `(log|z|, arg z)` of node `index`.
    pub fn node_log_polar(&self, index: usize) -> (f64, f64) {
        let i = index / self.shape.n_angular;
        let j = index % self.shape.n_angular;
        (self.u_lo + i as f64 * self.du, -PI + j as f64 * self.dv)
    }

    pub fn node(&self, index: usize) -> Complex64 {
        let (u, v) = self.node_log_polar(index);
        Complex64::from_polar(u.exp(), v)
    }

    /// The node nearest to `z = 1`, used as the normalization anchor.
    pub fn anchor(&self) -> usize {
        let i = ((-self.u_lo) / self.du).round() as usize;
        let j = (PI / self.dv).round() as usize % self.shape.n_angular;
        i.min(self.shape.n_radial - 1) * self.shape.n_angular + j
    }

    /// Bilinear stencil for the point `(u, v)`; the flag reports clamping in `u`.
    fn locate(&self, u: f64, v: f64) -> (CellRef, bool) {
        let last = (self.shape.n_radial - 1) as f64;
        let mut fu = (u - self.u_lo) / self.du;
        let clamped = !(-1e-9..=last + 1e-9).contains(&fu);
        fu = fu.clamp(0.0, last);
        let i0 = (fu.floor() as usize).min(self.shape.n_radial - 2);
        let wu = fu - i0 as f64;

        let n_ang = self.shape.n_angular;
        let raw = (v + PI) / self.dv;
        let period = n_ang as f64;
        let fv = raw - period * (raw / period).floor();
        let j0 = (fv.floor() as usize).min(n_ang - 1);
        let wv = fv - j0 as f64;
        (CellRef { i0: i0 as u32, j0: j0 as u32, wu, wv }, clamped)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct CellRef {
    i0: u32,
    j0: u32,
    wu: f64,
    wv: f64,
}

/// A positive function sampled on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn constant(grid: Grid, value: f64) -> Self {
        Self { grid, values: vec![value; grid.shape.len()] }
    }

    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.shape.len() {
            return Err(Error::InvalidInput("value count does not match the grid"));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Grid, mut f: impl FnMut(Complex64) -> f64) -> Self {
        let values = (0..grid.shape.len()).map(|i| f(grid.node(i))).collect();
        Self { grid, values }
    }

    /// Values drawn uniformly from `[lo, hi]`, reproducible from `seed`.
    pub fn random_positive(grid: Grid, seed: u64, lo: f64, hi: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..grid.shape.len()).map(|_| rng.random_range(lo..=hi)).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sup_distance(&self, other: &GridFunction) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn scale(&mut self, factor: f64) {
        self.values.iter_mut().for_each(|v| *v *= factor);
    }

    /// Bilinear interpolation at `z`; points outside the `log|z|` band are
    /// clamped to the boundary.
    pub fn interpolate(&self, z: Complex64) -> f64 {
        let (cell, _) = self.grid.locate(z.norm().ln(), z.arg());
        self.read(&cell)
    }

    #[inline]
    fn read(&self, cell: &CellRef) -> f64 {
        let n_ang = self.grid.shape.n_angular;
        let i0 = cell.i0 as usize;
        let j0 = cell.j0 as usize;
        let j1 = if j0 + 1 == n_ang { 0 } else { j0 + 1 };
        let row0 = i0 * n_ang;
        let row1 = row0 + n_ang;
        let v = &self.values;
        let a = v[row0 + j0] * (1.0 - cell.wv) + v[row0 + j1] * cell.wv;
        let b = v[row1 + j0] * (1.0 - cell.wv) + v[row1 + j1] * cell.wv;
        (a * (1.0 - cell.wu) + b * cell.wu).max(POSITIVITY_FLOOR)
    }
}

/// The preimage structure of one map on one grid: for every node, the cells
/// its preimages fall in and `log Df` at each preimage.
#[derive(Debug, Clone)]
pub struct Stencil {
    grid: Grid,
    offsets: Vec<u32>,
    cells: Vec<CellRef>,
    log_derivatives: Vec<f64>,
    clamped: usize,
}

impl Stencil {
    pub fn build(map: &MapDescriptor, grid: &Grid) -> Result<Self> {
        let n = grid.shape.len();
        let mut offsets = Vec::with_capacity(n + 1);
        let mut cells = Vec::with_capacity(n * map.degree());
        let mut log_derivatives = Vec::with_capacity(n * map.degree());
        let mut clamped = 0;
        offsets.push(0);
        for index in 0..n {
            let (u, v) = grid.node_log_polar(index);
            let y = Complex64::from_polar(u.exp(), v);
            map.for_each_preimage(y, u, v, &grid.k, |p| {
                let (cell, was_clamped) = grid.locate(p.log_modulus, p.arg);
                clamped += usize::from(was_clamped);
                cells.push(cell);
                log_derivatives.push(p.log_derivative);
            })?;
            offsets.push(cells.len() as u32);
        }
        Ok(Self { grid: *grid, offsets, cells, log_derivatives, clamped })
    }

    /// Preimages that fell outside the grid's band and were clamped.
    pub fn clamped_points(&self) -> usize {
        self.clamped
    }

    /// Largest `Df` over the stencil's preimages.
    pub fn max_derivative(&self) -> f64 {
        self.log_derivatives.iter().copied().fold(f64::NEG_INFINITY, f64::max).exp()
    }

    /// `out = L_s φ`.
    pub fn apply(&self, s: f64, phi: &GridFunction, out: &mut GridFunction) -> Result<()> {
        if phi.grid != self.grid || out.grid != self.grid {
            return Err(Error::InvalidInput("grid function lives on a different grid"));
        }
        let node = |index: usize| -> f64 {
            let lo = self.offsets[index] as usize;
            let hi = self.offsets[index + 1] as usize;
            (lo..hi)
                .map(|e| (-s * self.log_derivatives[e]).exp() * phi.read(&self.cells[e]))
                .sum()
        };
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            out.values.par_iter_mut().enumerate().for_each(|(i, o)| *o = node(i));
        }
        #[cfg(not(feature = "parallel"))]
        out.values.iter_mut().enumerate().for_each(|(i, o)| *o = node(i));

        if out.values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Numeric("operator output is not finite and positive"));
        }
        Ok(())
    }
}

/// `L_{s,f} φ`, together with the number of clamped preimages.
pub fn apply_operator(s: f64, map: &MapDescriptor, phi: &GridFunction) -> Result<(GridFunction, usize)> {
    let stencil = Stencil::build(map, &phi.grid)?;
    let mut out = phi.clone();
    stencil.apply(s, phi, &mut out)?;
    Ok((out, stencil.clamped))
}

/// `log m_k` and `log M_k` after step `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepBounds {
    pub log_min: f64,
    pub log_max: f64,
}

/// Result of iterating `L^{(n)}_s` on a starting function.
#[derive(Debug, Clone)]
pub struct IterationTrace {
    /// `L^{(n)}_s φ0 / M_n`.
    pub field: GridFunction,
    /// `log M_n`, so the unnormalized iterate is `exp(log_scale) · field`.
    pub log_scale: f64,
    pub bounds: Vec<StepBounds>,
    pub clamped_points: usize,
}

/// Result of the anchor-normalized iteration.
#[derive(Debug, Clone)]
pub struct NormalizedTrace {
    /// The final section, equal to 1 at the anchor.
    pub section: GridFunction,
    /// `log p_k = log (L φ_{k-1})(ζ₀)` for each step.
    pub log_p: Vec<f64>,
    /// Sup distance between consecutive sections, per step.
    pub increments: Vec<f64>,
    /// `(log min, log max)` of `L^{(k)} φ0 / φ0(ζ₀)`, per step.
    pub bounds: Vec<StepBounds>,
}

impl NormalizedTrace {
    /// Mean of `log p_k` after discarding the first `burn_in` steps.
    pub fn cocycle_mean(&self, burn_in: usize) -> f64 {
        let tail = &self.log_p[burn_in.min(self.log_p.len().saturating_sub(1))..];
        tail.iter().sum::<f64>() / tail.len() as f64
    }
}

/// Transfer operators of a map sequence on a fixed grid.
///
/// Step `k` (zero based) applies `maps[k % maps.len()]`: a one-element list is
/// a stationary system, longer lists are periodic or finite random sequences.
///
/// Short sequences keep one prebuilt [`Stencil`] per map. Sequences whose
/// stencils would exceed [`PREBUILT_ENTRY_LIMIT`] entries keep only the maps
/// and rebuild each stencil when its step comes up.
#[derive(Debug, Clone)]
pub struct SequenceOperator {
    grid: Grid,
    stencils: Stencils,
    clamped: usize,
}

/// Largest total number of stencil entries kept in memory by [`SequenceOperator`].
pub const PREBUILT_ENTRY_LIMIT: usize = 4_000_000;

#[derive(Debug, Clone)]
enum Stencils {
    Prebuilt(Vec<Stencil>),
    OnDemand(Vec<MapDescriptor>),
}

impl SequenceOperator {
    pub fn new(maps: &[MapDescriptor], grid: Grid) -> Result<Self> {
        if maps.is_empty() {
            return Err(Error::InvalidInput("map sequence is empty"));
        }
        let entries: usize = maps.iter().map(|m| m.degree() * grid.shape.len()).sum();
        if entries > PREBUILT_ENTRY_LIMIT {
            // Still visit every map once so preimage errors surface here.
            let mut clamped = 0;
            for m in maps {
                clamped += Stencil::build(m, &grid)?.clamped;
            }
            return Ok(Self { grid, stencils: Stencils::OnDemand(maps.to_vec()), clamped });
        }
        let stencils = maps.iter().map(|m| Stencil::build(m, &grid)).collect::<Result<Vec<_>>>()?;
        let clamped = stencils.iter().map(|s| s.clamped).sum();
        Ok(Self { grid, stencils: Stencils::Prebuilt(stencils), clamped })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn period(&self) -> usize {
        match &self.stencils {
            Stencils::Prebuilt(v) => v.len(),
            Stencils::OnDemand(v) => v.len(),
        }
    }

    /// The stencil applied at `step`.
    pub fn stencil(&self, step: usize) -> Cow<'_, Stencil> {
        let idx = step % self.period();
        match &self.stencils {
            Stencils::Prebuilt(v) => Cow::Borrowed(&v[idx]),
            // Every map was built once in `new`, so rebuilding cannot fail.
            Stencils::OnDemand(v) => Cow::Owned(Stencil::build(&v[idx], &self.grid).expect("stencil rebuild")),
        }
    }

    pub fn clamped_points(&self) -> usize {
        self.clamped
    }

    pub fn one(&self) -> GridFunction {
        GridFunction::constant(self.grid, 1.0)
    }

    /// `n` steps of `L^{(n)}_s` from `phi0`, recording `(log m_k, log M_k)`.
    pub fn iterate(&self, s: f64, phi0: &GridFunction, n: usize) -> Result<IterationTrace> {
        let mut field = phi0.clone();
        let mut log_scale = 0.0;
        let mut scratch = phi0.clone();
        let mut bounds = Vec::with_capacity(n);
        for step in 0..n {
            self.stencil(step).apply(s, &field, &mut scratch)?;
            core::mem::swap(&mut field, &mut scratch);
            let max = field.max();
            let min = field.min();
            field.scale(1.0 / max);
            log_scale += max.ln();
            bounds.push(StepBounds { log_min: log_scale + (min / max).ln(), log_max: log_scale });
        }
        Ok(IterationTrace { field, log_scale, bounds, clamped_points: self.clamped })
    }

    /// `(1/n) log m_n` and `(1/n) log M_n` for `φ0 = 1`.
    pub fn pressure_bracket(&self, s: f64, n: usize) -> Result<PressureEstimate> {
        if n == 0 {
            return Err(Error::InvalidInput("pressure bracket needs n >= 1"));
        }
        let trace = self.iterate(s, &self.one(), n)?;
        let last = trace.bounds[n - 1];
        Ok(PressureEstimate {
            s,
            n,
            lower: last.log_min / n as f64,
            upper: last.log_max / n as f64,
            cocycle: None,
            eta_fit: None,
        })
    }

    /// Iterate `φ ↦ Lφ / (Lφ)(ζ₀)` for `steps` steps.
    pub fn normalized_iterate(&self, s: f64, phi0: &GridFunction, anchor: usize, steps: usize) -> Result<NormalizedTrace> {
        if anchor >= self.grid.shape.len() {
            return Err(Error::InvalidInput("anchor is not a grid node"));
        }
        let mut section = phi0.clone();
        let start = section.values[anchor];
        if !(start > 0.0 && start.is_finite()) {
            return Err(Error::InvalidInput("starting function must be positive at the anchor"));
        }
        section.scale(1.0 / start);
        let mut scratch = section.clone();
        let mut log_p = Vec::with_capacity(steps);
        let mut increments = Vec::with_capacity(steps);
        let mut bounds = Vec::with_capacity(steps);
        let mut log_scale = 0.0;
        for step in 0..steps {
            self.stencil(step).apply(s, &section, &mut scratch)?;
            let p = scratch.values[anchor];
            if !(p > 0.0 && p.is_finite()) {
                return Err(Error::Numeric("anchor value underflowed"));
            }
            scratch.scale(1.0 / p);
            increments.push(scratch.sup_distance(&section));
            core::mem::swap(&mut section, &mut scratch);
            log_scale += p.ln();
            log_p.push(p.ln());
            bounds.push(StepBounds {
                log_min: log_scale + section.min().ln(),
                log_max: log_scale + section.max().ln(),
            });
        }
        Ok(NormalizedTrace { section, log_p, increments, bounds })
    }

    /// Bracket plus cocycle estimate: the normalized iteration runs for
    /// `cocycle_steps` steps from `1` and averages `log p_k` after `burn_in`.
    pub fn pressure_estimate(&self, s: f64, n: usize, cocycle_steps: usize, burn_in: usize) -> Result<PressureEstimate> {
        let mut estimate = self.pressure_bracket(s, n)?;
        let trace = self.normalized_iterate(s, &self.one(), self.grid.anchor(), cocycle_steps)?;
        estimate.cocycle = Some(trace.cocycle_mean(burn_in));
        Ok(estimate)
    }

    /// Least-squares fit of `log ‖πⁿφ − πⁿφ′‖` against `n` over random
    /// positive starting pairs; returns the fitted rate `η`.
    ///
    /// Returns 0 when all differences vanish after the first step.
    pub fn contraction_rate(&self, s: f64, trials: usize, steps: usize, seed: u64) -> Result<f64> {
        if trials < 2 {
            return Err(Error::InvalidInput("contraction fit needs at least 2 trials"));
        }
        let anchor = self.grid.anchor();
        let reference = self.normalized_iterate_sections(s, &GridFunction::random_positive(self.grid, seed, 0.5, 1.5), anchor, steps)?;
        let mut points: Vec<(f64, f64)> = Vec::new();
        for t in 1..trials {
            let start = GridFunction::random_positive(self.grid, seed.wrapping_add(t as u64), 0.5, 1.5);
            let sections = self.normalized_iterate_sections(s, &start, anchor, steps)?;
            for (step, (a, b)) in reference.iter().zip(&sections).enumerate() {
                let diff = a.sup_distance(b);
                if diff > CONTRACTION_FLOOR {
                    points.push(((step + 1) as f64, diff.ln()));
                }
            }
        }
        if points.len() < 2 {
            return Ok(0.0);
        }
        let eta = least_squares_slope(&points).exp();
        if !(eta < 1.0) {
            return Err(Error::Contraction { eta });
        }
        Ok(eta)
    }

    fn normalized_iterate_sections(&self, s: f64, phi0: &GridFunction, anchor: usize, steps: usize) -> Result<Vec<GridFunction>> {
        let mut section = phi0.clone();
        section.scale(1.0 / section.values[anchor]);
        let mut out = Vec::with_capacity(steps);
        let mut scratch = section.clone();
        for step in 0..steps {
            self.stencil(step).apply(s, &section, &mut scratch)?;
            let p = scratch.values[anchor];
            if !(p > 0.0 && p.is_finite()) {
                return Err(Error::Numeric("anchor value underflowed"));
            }
            scratch.scale(1.0 / p);
            core::mem::swap(&mut section, &mut scratch);
            out.push(section.clone());
        }
        Ok(out)
    }
}

/// Pressure bounds for one `s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PressureEstimate {
    pub s: f64,
    pub n: usize,
    /// `(1/n) log m_n(s)`.
    pub lower: f64,
    /// `(1/n) log M_n(s)`.
    pub upper: f64,
    /// Mean of the normalization cocycle `log p_k`.
    pub cocycle: Option<f64>,
    pub eta_fit: Option<f64>,
}

impl PressureEstimate {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// `L^{(n)}_s φ0` and the `(log m_k, log M_k)` trace for a map sequence.
pub fn iterate_sequence(s: f64, maps: &[MapDescriptor], phi0: &GridFunction, n: usize) -> Result<IterationTrace> {
    SequenceOperator::new(maps, *phi0.grid())?.iterate(s, phi0, n)
}

/// `(1/n) log m_n ≤ P(s) ≤ (1/n) log M_n` on the grid `grid`.
pub fn pressure_bracket(s: f64, maps: &[MapDescriptor], grid: Grid, n: usize) -> Result<PressureEstimate> {
    SequenceOperator::new(maps, grid)?.pressure_bracket(s, n)
}

/// Anchor-normalized iteration; see [`SequenceOperator::normalized_iterate`].
pub fn normalized_iterate(s: f64, maps: &[MapDescriptor], phi0: &GridFunction, anchor: usize, steps: usize) -> Result<NormalizedTrace> {
    SequenceOperator::new(maps, *phi0.grid())?.normalized_iterate(s, phi0, anchor, steps)
}

/// Fitted memory-loss rate; see [`SequenceOperator::contraction_rate`].
pub fn contraction_rate(s: f64, maps: &[MapDescriptor], grid: Grid, trials: usize, steps: usize, seed: u64) -> Result<f64> {
    SequenceOperator::new(maps, grid)?.contraction_rate(s, trials, steps, seed)
}

/// Right-hand side of `log m_{n+n₀} ≥ log M_n − log 2 − s(n₀ log‖Df‖ + log c_n)`.
pub fn mixing_lower_bound(log_max_n: f64, sup_derivative: f64, n0: usize, c_n: f64, s: f64) -> f64 {
    log_max_n - 2.0f64.ln() - s * (n0 as f64 * sup_derivative.ln() + c_n.ln())
}

pub(crate) fn least_squares_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::DomainConstants;

    fn domains() -> (HyperbolicAnnulus, HyperbolicAnnulus) {
        HyperbolicAnnulus::example_pair(0.8).unwrap()
    }

    fn grid(n_r: usize, n_a: usize) -> Grid {
        Grid::new(domains().1, GridShape::new(n_r, n_a)).unwrap()
    }

    fn cantor() -> MapDescriptor {
        let (u, k) = domains();
        MapDescriptor::uniform_cantor(2, 1.0 / 3.0, &k, u).unwrap()
    }

    fn square() -> MapDescriptor {
        MapDescriptor::circle_power(2, domains().0).unwrap()
    }

    fn quadratic(c: f64) -> MapDescriptor {
        MapDescriptor::power_plus_c(0, Complex64::new(c, 0.0), domains().0)
    }

    #[test]
    fn interpolation_reproduces_nodes() {
        let g = grid(9, 12);
        let f = GridFunction::random_positive(g, 5, 0.5, 1.5);
        for i in 0..g.shape().len() {
            assert!((f.interpolate(g.node(i)) - f.values()[i]).abs() < 1e-12);
        }
        assert!(g.anchor() < g.shape().len());
        assert!((g.node(g.anchor()) - Complex64::new(1.0, 0.0)).norm() < 0.2);
    }

    #[test]
    fn affine_operator_is_constant() {
        let g = grid(33, 2);
        let one = GridFunction::constant(g, 1.0);
        for s in [0.0, 0.4, 1.3] {
            let (out, clamped) = apply_operator(s, &cantor(), &one).unwrap();
            assert_eq!(clamped, 0);
            let expected = 2.0 * 3.0f64.powf(-s);
            assert!(out.values().iter().all(|v| (v - expected).abs() < 1e-12));
        }
    }

    #[test]
    fn square_at_zero_counts_degree() {
        let g = grid(17, 32);
        let (out, _) = apply_operator(0.0, &square(), &GridFunction::constant(g, 1.0)).unwrap();
        assert!(out.values().iter().all(|v| (v - 2.0).abs() < 1e-12));
    }

    #[test]
    fn operator_matches_pointwise_sum_off_grid() {
        let g = grid(65, 128);
        let (u, k) = domains();
        let f = MapDescriptor::power_plus_c(1, Complex64::new(0.05, -0.03), u);
        let phi = GridFunction::from_fn(g, |z| 1.0 + 0.3 * (z.arg()).cos() + 0.1 * z.norm().ln());
        let (out, _) = apply_operator(0.8, &f, &phi).unwrap();
        assert!(out.min() > 0.0);
        let exact_phi = |z: Complex64| 1.0 + 0.3 * z.arg().cos() + 0.1 * z.norm().ln();
        let y = Complex64::from_polar(1.23, 0.456);
        let pre = f.preimages(y, &k).unwrap();
        let pointwise: f64 = pre
            .points
            .iter()
            .zip(&pre.derivatives)
            .map(|(x, d)| d.powf(-0.8) * exact_phi(*x))
            .sum();
        assert!((out.interpolate(y) - pointwise).abs() < 5e-3 * pointwise);
    }

    #[test]
    fn iterate_affine_closed_forms() {
        let g = grid(17, 1);
        let op = SequenceOperator::new(&[cantor()], g).unwrap();
        let trace = op.iterate(0.0, &op.one(), 5).unwrap();
        let last = trace.bounds[4];
        assert!((last.log_min.exp() - 32.0).abs() < 1e-9);
        assert!((last.log_max.exp() - 32.0).abs() < 1e-9);
        let s_crit = 2.0f64.ln() / 3.0f64.ln();
        let trace = op.iterate(s_crit, &op.one(), 7).unwrap();
        assert!(trace.bounds.iter().all(|b| b.log_min.abs() < 1e-12 && b.log_max.abs() < 1e-12));
    }

    /// For `z²` every `n`-th preimage of `y` has `log|x| = log|y|/2ⁿ` and
    /// `Dfⁿ(x) = 2ⁿ cos θ(x) / cos θ(y)` with `θ = π log|z| / L_U`, so
    /// `Lⁿ1(y) = 2^{n(1−s)} (cos θ(y) / cos(θ(y)/2ⁿ))^s`.
    fn square_iterate_closed_form(y_log_modulus: f64, s: f64, n: usize) -> f64 {
        let theta = PI * y_log_modulus / domains().0.log_width();
        let shrink = 2.0f64.powi(n as i32);
        let ratio = theta.cos() / (theta / shrink).cos();
        n as f64 * (1.0 - s) * 2.0f64.ln() + s * ratio.ln()
    }

    #[test]
    fn square_bounds_match_closed_form() {
        let g = grid(129, 128);
        let op = SequenceOperator::new(&[square()], g).unwrap();
        let (lo, _) = domains().1.log_modulus_band();
        for (s, n) in [(1.0, 6), (0.5, 8)] {
            let est = op.pressure_bracket(s, n).unwrap();
            assert!((est.upper - (1.0 - s) * 2.0f64.ln()).abs() < 1e-6, "{est:?}");
            let lower = square_iterate_closed_form(lo, s, n) / n as f64;
            assert!((est.lower - lower).abs() < 1e-3, "{est:?} vs {lower}");
        }
    }

    #[test]
    fn square_bracket_contains_closed_form() {
        let op = SequenceOperator::new(&[square()], grid(129, 128)).unwrap();
        let est = op.pressure_bracket(0.5, 8).unwrap();
        let exact = 0.5 * 2.0f64.ln();
        assert!(est.lower - 1e-3 <= exact && exact <= est.upper + 1e-3, "{est:?}");
    }

    #[test]
    fn bracket_width_shrinks_with_n() {
        let op = SequenceOperator::new(&[quadratic(0.1)], grid(65, 64)).unwrap();
        let w4 = op.pressure_bracket(1.0, 4).unwrap().width();
        let w8 = op.pressure_bracket(1.0, 8).unwrap().width();
        assert!(w8 <= w4 + 1e-12);
    }

    #[test]
    fn normalized_cocycle_for_affine() {
        let op = SequenceOperator::new(&[cantor()], grid(17, 1)).unwrap();
        let trace = op.normalized_iterate(0.7, &op.one(), op.grid().anchor(), 10).unwrap();
        let expected = 2.0f64.ln() - 0.7 * 3.0f64.ln();
        assert!(trace.log_p.iter().all(|p| (p - expected).abs() < 1e-12));
    }

    #[test]
    fn normalized_sections_converge_for_square() {
        let op = SequenceOperator::new(&[square()], grid(65, 64)).unwrap();
        let trace = op.normalized_iterate(1.0, &op.one(), op.grid().anchor(), 40).unwrap();
        assert!(trace.increments[39] < 1e-8, "{:?}", &trace.increments[30..]);
        let random = GridFunction::random_positive(*op.grid(), 9, 0.2, 3.0);
        let other = op.normalized_iterate(1.0, &random, op.grid().anchor(), 40).unwrap();
        assert!(trace.section.sup_distance(&other.section) < 1e-7);
    }

    #[test]
    fn contraction_rates() {
        let op = SequenceOperator::new(&[cantor()], grid(17, 2)).unwrap();
        assert!(op.contraction_rate(0.5, 3, 20, 1).unwrap() < 1.0);
        let eta = contraction_rate(1.0, &[quadratic(0.1)], grid(33, 32), 3, 30, 1).unwrap();
        let eta_fine = contraction_rate(1.0, &[quadratic(0.1)], grid(65, 64), 3, 30, 1).unwrap();
        assert!(eta < 1.0 && eta_fine < 1.0);
        assert!((eta - eta_fine).abs() < 0.05, "{eta} vs {eta_fine}");
        assert!(op.contraction_rate(0.5, 1, 10, 1).is_err());
    }

    #[test]
    fn monotone_in_s() {
        let op = SequenceOperator::new(&[quadratic(0.1)], grid(33, 32)).unwrap();
        for s in [0.2, 0.9, 1.5] {
            let a = op.pressure_bracket(s, 4).unwrap();
            let b = op.pressure_bracket(s + 0.1, 4).unwrap();
            assert!(b.lower < a.lower && b.upper < a.upper);
        }
    }

    #[test]
    fn sub_and_super_multiplicative() {
        for map in [square(), quadratic(0.1)] {
            let op = SequenceOperator::new(&[map], grid(33, 64)).unwrap();
            let trace = op.iterate(0.9, &op.one(), 6).unwrap();
            let b = &trace.bounds;
            for (k, n) in [(2usize, 4usize), (3, 6)] {
                let (mk, mnk, mn) = (b[k - 1].log_min, b[n - k - 1].log_min, b[n - 1].log_min);
                let (xk, xnk, xn) = (b[k - 1].log_max, b[n - k - 1].log_max, b[n - 1].log_max);
                assert!(mk + mnk <= mn + 1e-6);
                assert!(xn <= xk + xnk + 1e-6);
                assert!(mn <= xn);
            }
        }
    }

    #[test]
    fn mixing_bound_holds_for_stationary_maps() {
        let (u, k) = domains();
        let consts = DomainConstants::new(&u, &k).unwrap();
        let n0 = consts.mixing_steps();
        for map in [square(), quadratic(0.1)] {
            let op = SequenceOperator::new(&[map], grid(33, 64)).unwrap();
            let sup_df = op.stencil(0).max_derivative();
            for s in [0.5, 1.0] {
                let n = 3;
                let trace = op.iterate(s, &op.one(), n + n0).unwrap();
                let c_n = consts.distortion_sequence(n, consts.beta).unwrap()[n - 1];
                let bound = mixing_lower_bound(trace.bounds[n - 1].log_max, sup_df, n0, c_n, s);
                assert!(trace.bounds[n + n0 - 1].log_min >= bound);
            }
        }
    }

    #[test]
    fn mismatched_grids_are_rejected() {
        let stencil = Stencil::build(&square(), &grid(9, 8)).unwrap();
        let phi = GridFunction::constant(grid(9, 16), 1.0);
        let mut out = phi.clone();
        assert!(stencil.apply(1.0, &phi, &mut out).is_err());
    }
}
