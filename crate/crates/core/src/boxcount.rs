//! Backward-orbit samples of a repeller and a box-counting dimension estimate.
//!
//! Boxes are squares in the chart `(log|z|, arg z)`, which is bi-Lipschitz to
//! the hyperbolic metric on `K`, so box dimensions agree with the metric ones.

use core::f64::consts::PI;

use crate::geometry::HyperbolicAnnulus;
use crate::maps::MapDescriptor;
use crate::prelude::*;
use crate::transfer::least_squares_slope;

/// Default bound on the number of points kept per generation.
pub const DEFAULT_CAP: usize = 2_000_000;

/// Default number of box sizes.
pub const DEFAULT_RADII: usize = 12;

/// Preimage tree of a base point, truncated at `generation_depth`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Complex64>,
    pub generation_depth: usize,
    /// Set when some generation was subsampled down to the cap.
    pub capped: bool,
}

/// `(log|z|, arg z)` with `arg ∈ (−π, π]`.
pub fn chart(z: Complex64) -> (f64, f64) {
    (z.norm().ln(), z.arg())
}

/// Chart distance with the angle taken modulo `2π`.
pub fn chart_distance(a: (f64, f64), b: (f64, f64)) -> f64 {
    let du = a.0 - b.0;
    let mut dv = (a.1 - b.1).abs() % (2.0 * PI);
    if dv > PI {
        dv = 2.0 * PI - dv;
    }
    (du * du + dv * dv).sqrt()
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn chart_points(&self) -> Vec<(f64, f64)> {
        self.points.iter().map(|&z| chart(z)).collect()
    }

    /// Pools two clouds; the depth is the smaller of the two.
    pub fn union(mut self, other: PointCloud) -> PointCloud {
        self.points.extend(other.points);
        self.generation_depth = self.generation_depth.min(other.generation_depth);
        self.capped |= other.capped;
        self
    }

    /// Median chart distance from a point to its nearest neighbour.
    pub fn spacing(&self) -> f64 {
        let pts = self.chart_points();
        let index = ChartIndex::new(&pts, None);
        let mut d: Vec<f64> = (0..pts.len()).map(|i| index.nearest_other(i).map_or(f64::INFINITY, |(_, d)| d)).collect();
        median(&mut d)
    }

    /// Chart diameter of the bounding box, the angle span capped at `2π`.
    pub fn chart_diameter(&self) -> f64 {
        let pts = self.chart_points();
        let (u_lo, u_hi, v_span) = extents(&pts);
        let du = u_hi - u_lo;
        (du * du + v_span * v_span).sqrt()
    }
}

/// `depth` generations of preimages of `base`: generation `j` applies the
/// inverse of `maps[(depth − j) % len]`, so the result samples
/// `f_1^{-1} ∘ ⋯ ∘ f_depth^{-1}(base)`.
///
/// Points without preimages in `K` are dropped, so the cloud can be smaller
/// than the product of the degrees. A generation larger than `cap` is thinned by systematic sampling within
/// each branch index, so every branch keeps its share.
pub fn backward_orbit(maps: &[MapDescriptor], k: &HyperbolicAnnulus, base: Complex64, depth: usize, cap: usize) -> Result<PointCloud> {
    if maps.is_empty() {
        return Err(Error::InvalidInput("map sequence is empty"));
    }
    if cap == 0 {
        return Err(Error::InvalidInput("cap must be positive"));
    }
    if !k.contains_closed(base, crate::maps::BAND_TOLERANCE) {
        return Err(Error::Domain("base point outside K"));
    }
    let mut level = vec![base];
    let mut capped = false;
    for j in 1..=depth {
        let map = &maps[(depth - j) % maps.len()];
        let children = expand(map, k, &level)?;
        let degree = children.iter().map(|c| c.len()).max().unwrap_or(0);
        let total: usize = children.iter().map(|c| c.len()).sum();
        level = if total > cap {
            capped = true;
            stratified(&children, degree, cap, total)
        } else {
            children.into_iter().flatten().collect()
        };
    }
    Ok(PointCloud { points: level, generation_depth: depth, capped })
}

#[cfg(feature = "parallel")]
fn expand(map: &MapDescriptor, k: &HyperbolicAnnulus, level: &[Complex64]) -> Result<Vec<Vec<Complex64>>> {
    use rayon::prelude::*;
    level.par_iter().map(|&y| children(map, k, y)).collect()
}

#[cfg(not(feature = "parallel"))]
fn expand(map: &MapDescriptor, k: &HyperbolicAnnulus, level: &[Complex64]) -> Result<Vec<Vec<Complex64>>> {
    level.iter().map(|&y| children(map, k, y)).collect()
}

/// Preimages of `y`; a point without preimages in `K` ends its branch.
fn children(map: &MapDescriptor, k: &HyperbolicAnnulus, y: Complex64) -> Result<Vec<Complex64>> {
    match map.preimages(y, k) {
        Ok(set) => Ok(set.points),
        Err(Error::EmptyPreimage) => Ok(Vec::new()),
        Err(e) => Err(e),
    }
}

/// Keeps about `cap · (branch size)/total` children of each branch index,
/// evenly spaced along the parent order.
fn stratified(children: &[Vec<Complex64>], degree: usize, cap: usize, total: usize) -> Vec<Complex64> {
    let q = cap as f64 / total as f64;
    let mut out = Vec::with_capacity(cap + degree);
    for branch in 0..degree {
        let mut seen = 0usize;
        for c in children.iter().filter_map(|c| c.get(branch)) {
            if ((seen + 1) as f64 * q).floor() > (seen as f64 * q).floor() {
                out.push(*c);
            }
            seen += 1;
        }
    }
    out
}

/// Number of generations after which inverse images of `K` have hyperbolic
/// size `2·diam_K/β^n` below `min_radius`.
pub fn required_depth(diam_k: f64, beta: f64, min_radius: f64) -> usize {
    if !(beta > 1.0) || !(min_radius > 0.0) {
        return usize::MAX;
    }
    let n = ((2.0 * diam_k / min_radius).ln() / beta.ln()).ceil();
    if n <= 0.0 {
        0
    } else {
        n as usize
    }
}

/// `count` radii, log-spaced over `decades` decades, largest `top`.
pub fn log_spaced_radii(top: f64, decades: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|i| top * 10f64.powf(-decades * i as f64 / (count.max(2) - 1) as f64))
        .collect()
}

/// Twelve radii over two decades with the largest at an eighth of the cloud's diameter.
pub fn default_radii(cloud: &PointCloud) -> Vec<f64> {
    log_spaced_radii(cloud.chart_diameter() / 8.0, 2.0, DEFAULT_RADII)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxDimension {
    /// Least-squares slope of `log N(r)` against `log(1/r)`.
    pub slope: f64,
    /// Largest and smallest slope between consecutive radii.
    pub upper: f64,
    pub lower: f64,
    /// Radii in decreasing order.
    pub radii: Vec<f64>,
    /// Occupied-box counts averaged over the grid offsets.
    pub counts: Vec<f64>,
    /// Slopes between consecutive radii; entry `i` pairs `radii[i]` and `radii[i+1]`.
    pub two_point: Vec<f64>,
    /// Least-squares slope over `radii[..=i]` (0 for `i = 0`).
    pub running_slope: Vec<f64>,
}

/// Box-counting dimension of `cloud` over `radii`.
///
/// Counts are averaged over four grids, anchored at the cloud's smallest
/// `log|z|` and shifted by a quarter or three quarters of a box in each
/// direction of the chart.
pub fn box_dimension(cloud: &PointCloud, radii: &[f64]) -> Result<BoxDimension> {
    if radii.len() < 2 {
        return Err(Error::InvalidInput("box counting needs at least two radii"));
    }
    if radii.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::InvalidInput("radii must be positive"));
    }
    if cloud.is_empty() {
        return Err(Error::InvalidInput("empty point cloud"));
    }
    let mut radii = radii.to_vec();
    radii.sort_by(|a, b| b.total_cmp(a));
    radii.dedup();
    let min_radius = *radii.last().unwrap();
    let spacing = cloud.spacing();
    if spacing > min_radius {
        return Err(Error::Resolution { spacing, min_radius });
    }
    let pts = cloud.chart_points();
    let (u_lo, _, _) = extents(&pts);
    let counts = count_all(&pts, u_lo, &radii);

    let xs: Vec<f64> = radii.iter().map(|r| -r.ln()).collect();
    let ys: Vec<f64> = counts.iter().map(|n| n.ln()).collect();
    let pairs: Vec<(f64, f64)> = xs.iter().copied().zip(ys.iter().copied()).collect();
    let slope = least_squares_slope(&pairs);
    let two_point: Vec<f64> = (1..xs.len()).map(|i| (ys[i] - ys[i - 1]) / (xs[i] - xs[i - 1])).collect();
    let running_slope = (0..xs.len())
        .map(|i| if i == 0 { 0.0 } else { least_squares_slope(&pairs[..=i]) })
        .collect();
    Ok(BoxDimension {
        slope,
        upper: two_point.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        lower: two_point.iter().copied().fold(f64::INFINITY, f64::min),
        radii,
        counts,
        two_point,
        running_slope,
    })
}

#[cfg(feature = "parallel")]
fn count_all(pts: &[(f64, f64)], u_lo: f64, radii: &[f64]) -> Vec<f64> {
    use rayon::prelude::*;
    radii.par_iter().map(|&r| averaged_count(pts, u_lo, r)).collect()
}

#[cfg(not(feature = "parallel"))]
fn count_all(pts: &[(f64, f64)], u_lo: f64, radii: &[f64]) -> Vec<f64> {
    radii.iter().map(|&r| averaged_count(pts, u_lo, r)).collect()
}

fn averaged_count(pts: &[(f64, f64)], u_lo: f64, r: f64) -> f64 {
    // Quarter shifts keep every box edge away from the cloud's extreme point,
    // which sits on a lattice of the self-similar fixtures.
    const OFFSETS: [(f64, f64); 4] = [(0.25, 0.25), (0.75, 0.25), (0.25, 0.75), (0.75, 0.75)];
    let mut keys: Vec<(i64, i64)> = Vec::with_capacity(pts.len());
    let mut total = 0.0;
    for (ou, ov) in OFFSETS {
        keys.clear();
        keys.extend(pts.iter().map(|&(u, v)| {
            (((u - u_lo) / r + ou).floor() as i64, ((v + PI) / r + ov).floor() as i64)
        }));
        keys.sort_unstable();
        keys.dedup();
        total += keys.len() as f64;
    }
    total / OFFSETS.len() as f64
}

/// `(min log|z|, max log|z|, angular span)`; the span is `2π` unless the
/// angles fit in a half-open arc shorter than that.
fn extents(pts: &[(f64, f64)]) -> (f64, f64, f64) {
    let u_lo = pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let u_hi = pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let mut v: Vec<f64> = pts.iter().map(|p| p.1).collect();
    v.sort_by(f64::total_cmp);
    let span = match (v.first(), v.last()) {
        (Some(a), Some(b)) => {
            // Largest gap between consecutive angles, the wrap-around included.
            let mut gap = 2.0 * PI - (b - a);
            for w in v.windows(2) {
                gap = gap.max(w[1] - w[0]);
            }
            2.0 * PI - gap
        }
        _ => 0.0,
    };
    (u_lo, u_hi, span)
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::INFINITY;
    }
    values.sort_by(f64::total_cmp);
    values[values.len() / 2]
}

/// Rings searched before [`ChartIndex::nearest_where`] falls back to a scan.
const MAX_RING_SEARCH: i64 = 32;

/// Uniform bucket grid over chart points, periodic in the angle.
pub struct ChartIndex<'a> {
    pts: &'a [(f64, f64)],
    u_lo: f64,
    cell_u: f64,
    cell_v: f64,
    n_u: i64,
    n_v: i64,
    /// `(cell key, point index)` sorted by key.
    entries: Vec<((i64, i64), usize)>,
}

impl<'a> ChartIndex<'a> {
    /// Without an explicit `cell`, the size is twice the median nearest-neighbour
    /// distance of a sample of the points.
    pub fn new(pts: &'a [(f64, f64)], cell: Option<f64>) -> Self {
        let cell = match cell {
            Some(c) => c,
            None => {
                let coarse = Self::with_cell(pts, Self::area_guess(pts));
                let stride = (pts.len() / 256).max(1);
                let mut d: Vec<f64> = (0..pts.len())
                    .step_by(stride)
                    .filter_map(|i| coarse.nearest_other(i).map(|(_, d)| d))
                    .filter(|d| *d > 0.0)
                    .collect();
                let m = median(&mut d);
                if m.is_finite() {
                    2.0 * m
                } else {
                    coarse.cell_u
                }
            }
        };
        Self::with_cell(pts, cell)
    }

    fn area_guess(pts: &[(f64, f64)]) -> f64 {
        let (u_lo, u_hi, v_span) = extents(pts);
        let n = pts.len().max(1) as f64;
        let area = (u_hi - u_lo).max(0.0) * v_span;
        let longest = (u_hi - u_lo).max(v_span);
        (area / n).sqrt().max(longest / n)
    }

    fn with_cell(pts: &'a [(f64, f64)], cell: f64) -> Self {
        let (u_lo, u_hi, _) = extents(pts);
        let cell = cell.max(1e-12);
        let n_v = ((2.0 * PI / cell).floor() as i64).clamp(1, 1 << 40);
        let cell_v = 2.0 * PI / n_v as f64;
        let n_u = (((u_hi - u_lo) / cell).floor() as i64 + 1).max(1);
        let mut index = Self { pts, u_lo, cell_u: cell, cell_v, n_u, n_v, entries: Vec::new() };
        index.entries = pts.iter().enumerate().map(|(i, &p)| (index.key(p), i)).collect();
        index.entries.sort_unstable();
        index
    }

    fn key(&self, p: (f64, f64)) -> (i64, i64) {
        let i = ((p.0 - self.u_lo) / self.cell_u).floor() as i64;
        let j = (((p.1 + PI) / self.cell_v).floor() as i64).rem_euclid(self.n_v);
        (i, j)
    }

    fn bucket(&self, key: (i64, i64)) -> &[((i64, i64), usize)] {
        let start = self.entries.partition_point(|e| e.0 < key);
        let end = self.entries.partition_point(|e| e.0 <= key);
        &self.entries[start..end]
    }

    /// Calls `visit(index)` for every point in the cells on the square ring
    /// of Chebyshev radius `ring` around `key`. With angular wrap-around a cell
    /// may also belong to an inner ring and is then visited again.
    fn visit_ring(&self, key: (i64, i64), ring: i64, mut visit: impl FnMut(usize)) {
        let mut cells: Vec<(i64, i64)> = Vec::new();
        for di in -ring..=ring {
            for dj in -ring..=ring {
                if di.abs() == ring || dj.abs() == ring {
                    cells.push((key.0 + di, (key.1 + dj).rem_euclid(self.n_v)));
                }
            }
        }
        cells.sort_unstable();
        cells.dedup();
        for cell in cells {
            for e in self.bucket(cell) {
                visit(e.1);
            }
        }
    }

    /// Nearest point other than `i`, with its distance.
    pub fn nearest_other(&self, i: usize) -> Option<(usize, f64)> {
        self.nearest_where(self.pts[i], |j| j != i)
    }

    /// Nearest indexed point to `p` accepted by `keep`.
    pub fn nearest_where(&self, p: (f64, f64), keep: impl Fn(usize) -> bool) -> Option<(usize, f64)> {
        let key = self.key(p);
        let step = self.cell_u.min(self.cell_v);
        let max_ring = self.n_u.max(self.n_v) + 1;
        let mut best: Option<(usize, f64)> = None;
        for ring in 0..=max_ring {
            if ring > MAX_RING_SEARCH && best.is_none() {
                // Sparse neighbourhood: a linear scan is cheaper than more rings.
                return (0..self.pts.len())
                    .filter(|&j| keep(j))
                    .map(|j| (j, chart_distance(p, self.pts[j])))
                    .min_by(|a, b| a.1.total_cmp(&b.1));
            }
            if let Some((_, d)) = best {
                if d <= ring.saturating_sub(1) as f64 * step {
                    break;
                }
            }
            self.visit_ring(key, ring, |j| {
                if keep(j) {
                    let d = chart_distance(p, self.pts[j]);
                    if best.map_or(true, |(_, b)| d < b) {
                        best = Some((j, d));
                    }
                }
            });
        }
        best
    }

    /// Indices within `radius` of `p`. `radius` should not exceed a few cells.
    pub fn within(&self, p: (f64, f64), radius: f64) -> Vec<usize> {
        let key = self.key(p);
        let rings = (radius / self.cell_u.min(self.cell_v)).ceil() as i64;
        let mut out = Vec::new();
        for ring in 0..=rings {
            self.visit_ring(key, ring, |j| {
                if chart_distance(p, self.pts[j]) <= radius {
                    out.push(j);
                }
            });
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}
