//! Conformal covering maps `f: 𝒟_f → U` and their inverse branches over `K`.
//!
//! Three families are supported:
//!
//! * `z^(N+2) + c`, the maps of the random ensembles;
//! * `z^d`, whose repeller is the unit circle;
//! * a synthetic affine family acting radially on a band of `log|z|`, with a
//!   constant derivative on each branch. It has closed-form pressure and is
//!   used as a test fixture.
//!
//! Derivatives are conformal derivatives in the hyperbolic metric of `U`:
//! `Df(x) = |f'(x)| λ_U(f(x)) / λ_U(x)`.

use core::f64::consts::PI;

use crate::geometry::{DomainConstants, HyperbolicAnnulus};
use crate::prelude::*;

/// Slack on `log|z|` when deciding whether a point lies in the closed band of `K`.
pub const BAND_TOLERANCE: f64 = 1e-12;

/// Default resolution `(radial, angular)` of the sampling grids used for
/// suprema over `f^{-1}K`.
pub const DEFAULT_SUP_GRID: (usize, usize) = (256, 256);

/// One inverse branch `t ↦ ratio·t + translation` of the affine family,
/// acting on the unit-interval chart of the band.
///
/// The branch only contributes preimages of targets `t ∈ range`. The default
/// range `[0, 1]` gives the usual full-branch iterated function system;
/// narrower ranges build systems with invariant sub-bands.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IfsBranch {
    pub ratio: f64,
    pub translation: f64,
    pub range: (f64, f64),
}

impl IfsBranch {
    pub fn new(ratio: f64, translation: f64) -> Self {
        Self { ratio, translation, range: (0.0, 1.0) }
    }

    pub fn with_range(mut self, lo: f64, hi: f64) -> Self {
        self.range = (lo, hi);
        self
    }

    fn applies_to(&self, t: f64) -> bool {
        t >= self.range.0 - BAND_TOLERANCE && t <= self.range.1 + BAND_TOLERANCE
    }

    fn image(&self) -> (f64, f64) {
        (
            self.ratio * self.range.0 + self.translation,
            self.ratio * self.range.1 + self.translation,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MapKind {
    /// `z^(N+2) + c`.
    PowerPlusC { degree_exponent: u32, coefficient: Complex64 },
    /// `z^d`.
    CirclePower { d: u32 },
    /// Radial affine system on the `log|z|` interval `band`, identified with `[0, 1]`.
    LinearIfs { branches: Vec<IfsBranch>, band: (f64, f64) },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapDescriptor {
    kind: MapKind,
    domain: HyperbolicAnnulus,
}

/// All preimages of `target` inside `K`, with their conformal derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct PreimageSet {
    pub target: Complex64,
    pub points: Vec<Complex64>,
    pub derivatives: Vec<f64>,
}

/// An inverse branch expressed in log-polar coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct LogPreimage {
    pub log_modulus: f64,
    pub arg: f64,
    pub log_derivative: f64,
}

/// Sampled extrema of `Df` and of the preimage count over `f^{-1}K`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivativeRange {
    pub min_derivative: f64,
    pub max_derivative: f64,
    pub min_count: usize,
    pub max_count: usize,
}

impl MapDescriptor {
    pub fn power_plus_c(degree_exponent: u32, coefficient: Complex64, domain: HyperbolicAnnulus) -> Self {
        Self { kind: MapKind::PowerPlusC { degree_exponent, coefficient }, domain }
    }

    pub fn circle_power(d: u32, domain: HyperbolicAnnulus) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidInput("circle power needs degree >= 2"));
        }
        Ok(Self { kind: MapKind::CirclePower { d }, domain })
    }

    /// The affine fixture, laid out on the `log|z|` band of `k`.
    pub fn linear_ifs(branches: Vec<IfsBranch>, k: &HyperbolicAnnulus, domain: HyperbolicAnnulus) -> Result<Self> {
        if branches.is_empty() {
            return Err(Error::InvalidInput("affine system needs at least one branch"));
        }
        for b in &branches {
            if !(b.ratio > 0.0 && b.ratio < 1.0) {
                return Err(Error::InvalidInput("affine branch ratio must lie in (0, 1)"));
            }
            let (lo, hi) = b.image();
            if lo < -BAND_TOLERANCE || hi > 1.0 + BAND_TOLERANCE || b.range.0 > b.range.1 {
                return Err(Error::InvalidInput("affine branch must map its range into [0, 1]"));
            }
        }
        Ok(Self {
            kind: MapKind::LinearIfs { branches, band: k.log_modulus_band() },
            domain,
        })
    }

    /// The affine fixture with `count` equal branches of ratio `ratio`, evenly spread.
    pub fn uniform_cantor(count: usize, ratio: f64, k: &HyperbolicAnnulus, domain: HyperbolicAnnulus) -> Result<Self> {
        if count == 0 {
            return Err(Error::InvalidInput("affine system needs at least one branch"));
        }
        let gap = if count > 1 { (1.0 - count as f64 * ratio) / (count - 1) as f64 } else { 0.0 };
        let branches = (0..count)
            .map(|j| IfsBranch::new(ratio, j as f64 * (ratio + gap)))
            .collect();
        Self::linear_ifs(branches, k, domain)
    }

    pub fn kind(&self) -> &MapKind {
        &self.kind
    }

    /// The annulus `U` that the map covers.
    pub fn domain(&self) -> &HyperbolicAnnulus {
        &self.domain
    }

    /// Whether this is the synthetic affine fixture rather than a holomorphic map.
    pub fn is_synthetic(&self) -> bool {
        matches!(self.kind, MapKind::LinearIfs { .. })
    }

    pub fn degree(&self) -> usize {
        match &self.kind {
            MapKind::PowerPlusC { degree_exponent, .. } => *degree_exponent as usize + 2,
            MapKind::CirclePower { d } => *d as usize,
            MapKind::LinearIfs { branches, .. } => branches.len(),
        }
    }

    fn power_parts(&self) -> Option<(u32, Complex64)> {
        match &self.kind {
            MapKind::PowerPlusC { degree_exponent, coefficient } => Some((degree_exponent + 2, *coefficient)),
            MapKind::CirclePower { d } => Some((*d, Complex64::new(0.0, 0.0))),
            MapKind::LinearIfs { .. } => None,
        }
    }

    pub fn evaluate(&self, z: Complex64) -> Result<Complex64> {
        if !self.domain.contains(z) {
            return Err(Error::Domain("point outside the map's domain"));
        }
        match &self.kind {
            MapKind::LinearIfs { branches, band } => {
                let t = to_chart(z.norm().ln(), *band);
                let branch = expanding_branch(branches, t)?;
                let image = (t - branch.translation) / branch.ratio;
                Ok(Complex64::from_polar(from_chart(image, *band).exp(), z.arg()))
            }
            _ => {
                let (d, c) = self.power_parts().unwrap();
                Ok(z.powu(d) + c)
            }
        }
    }

    pub fn conformal_derivative(&self, z: Complex64) -> Result<f64> {
        match &self.kind {
            MapKind::LinearIfs { branches, band } => {
                if !self.domain.contains(z) {
                    return Err(Error::Domain("point outside the map's domain"));
                }
                let branch = expanding_branch(branches, to_chart(z.norm().ln(), *band))?;
                Ok(1.0 / branch.ratio)
            }
            _ => {
                let (d, _) = self.power_parts().unwrap();
                let fz = self.evaluate(z)?;
                let fz_density = self.domain.density(fz)?;
                let euclid = f64::from(d) * z.norm().powi(d as i32 - 1);
                Ok(euclid * fz_density / self.domain.density(z)?)
            }
        }
    }

    /// Calls `visit` on every preimage of `y` inside `k`, in log-polar form.
    ///
    /// `y` is passed both as a point and as `(log|y|, arg y)` so grid callers
    /// do not recompute logarithms. Returns the number of preimages visited.
    pub(crate) fn for_each_preimage(
        &self,
        y: Complex64,
        log_modulus: f64,
        arg: f64,
        k: &HyperbolicAnnulus,
        mut visit: impl FnMut(LogPreimage),
    ) -> Result<usize> {
        let (k_lo, k_hi) = k.log_modulus_band();
        let mut count = 0;
        match &self.kind {
            MapKind::LinearIfs { branches, band } => {
                let t = to_chart(log_modulus, *band);
                for b in branches.iter().filter(|b| b.applies_to(t)) {
                    let u = from_chart(b.ratio * t + b.translation, *band);
                    visit(LogPreimage { log_modulus: u, arg, log_derivative: -b.ratio.ln() });
                    count += 1;
                }
            }
            _ => {
                let (d, c) = self.power_parts().unwrap();
                let w = y - c;
                let w_abs = w.norm();
                if !(w_abs > 0.0) {
                    return Err(Error::Root);
                }
                let log_w = w_abs.ln();
                let df = f64::from(d);
                let u = log_w / df;
                if u < k_lo - BAND_TOLERANCE || u > k_hi + BAND_TOLERANCE {
                    return Err(Error::EmptyPreimage);
                }
                let width = self.domain.log_width();
                let log_cos = |t: f64| (PI * t / width).cos().ln();
                let log_derivative = df.ln() + log_w - log_modulus - log_cos(log_modulus) + log_cos(u);
                let base = w.arg();
                for j in 0..d {
                    let mut v = (base + 2.0 * PI * f64::from(j)) / df;
                    if v > PI {
                        v -= 2.0 * PI;
                    }
                    visit(LogPreimage { log_modulus: u, arg: v, log_derivative });
                    count += 1;
                }
            }
        }
        if count == 0 {
            return Err(Error::EmptyPreimage);
        }
        Ok(count)
    }

    /// All preimages of `y ∈ K` that lie in `K`.
    pub fn preimages(&self, y: Complex64, k: &HyperbolicAnnulus) -> Result<PreimageSet> {
        if !k.contains_closed(y, BAND_TOLERANCE) {
            return Err(Error::Domain("target outside K"));
        }
        let mut points = Vec::with_capacity(self.degree());
        let mut derivatives = Vec::with_capacity(self.degree());
        self.for_each_preimage(y, y.norm().ln(), y.arg(), k, |p| {
            points.push(Complex64::from_polar(p.log_modulus.exp(), p.arg));
            derivatives.push(p.log_derivative.exp());
        })?;
        Ok(PreimageSet { target: y, points, derivatives })
    }

    /// Branch-separation radius `δ_f(x)` at a preimage `x`.
    pub fn branch_radius(&self, x: Complex64, constants: &DomainConstants) -> Result<f64> {
        Ok(branch_radius_for_derivative(self.conformal_derivative(x)?, constants))
    }

    /// Extrema of `Df` and of the number of preimages, sampled over a
    /// `(radial, angular)` grid of targets in `K`. The core circle
    /// `|z| = 1` is always one of the rows.
    pub fn derivative_range(&self, k: &HyperbolicAnnulus, grid: (usize, usize)) -> Result<DerivativeRange> {
        let (n_radial, n_angular) = grid;
        if n_radial < 2 || n_angular < 1 {
            return Err(Error::InvalidInput("sampling grid needs at least 2 x 1 nodes"));
        }
        let (lo, hi) = k.log_modulus_band();
        let mut range = DerivativeRange {
            min_derivative: f64::INFINITY,
            max_derivative: 0.0,
            min_count: usize::MAX,
            max_count: 0,
        };
        let rows = (0..n_radial).map(|i| lo + (hi - lo) * i as f64 / (n_radial - 1) as f64);
        for u in rows.chain(core::iter::once(0.0)) {
            for j in 0..n_angular {
                let v = -PI + 2.0 * PI * j as f64 / n_angular as f64;
                let y = Complex64::from_polar(u.exp(), v);
                let count = self.for_each_preimage(y, u, v, k, |p| {
                    let df = p.log_derivative.exp();
                    range.min_derivative = range.min_derivative.min(df);
                    range.max_derivative = range.max_derivative.max(df);
                })?;
                range.min_count = range.min_count.min(count);
                range.max_count = range.max_count.max(count);
            }
        }
        Ok(range)
    }

    /// Condition number `Γ(f) = sup Df · sup (1/Df)` over sampled `f^{-1}K`.
    pub fn condition_number(&self, k: &HyperbolicAnnulus, grid: (usize, usize)) -> Result<f64> {
        let r = self.derivative_range(k, grid)?;
        Ok(r.max_derivative / r.min_derivative)
    }

    /// Area bound `deg f ≤ (sup Df)²` over sampled `f^{-1}K`.
    pub fn degree_area_check(&self, k: &HyperbolicAnnulus, grid: (usize, usize)) -> Result<bool> {
        let r = self.derivative_range(k, grid)?;
        Ok(self.degree() as f64 <= r.max_derivative * r.max_derivative)
    }
}

/// `δ_f(x) = min{log((5 + α/Df)/(5 − α/Df)), Δ}`.
pub fn branch_radius_for_derivative(derivative: f64, constants: &DomainConstants) -> f64 {
    let q = constants.alpha / derivative;
    ((5.0 + q) / (5.0 - q)).ln().min(constants.delta_big)
}

fn to_chart(u: f64, band: (f64, f64)) -> f64 {
    (u - band.0) / (band.1 - band.0)
}

fn from_chart(t: f64, band: (f64, f64)) -> f64 {
    band.0 + t * (band.1 - band.0)
}

fn expanding_branch(branches: &[IfsBranch], t: f64) -> Result<&IfsBranch> {
    branches
        .iter()
        .find(|b| {
            let (lo, hi) = b.image();
            t >= lo - BAND_TOLERANCE && t <= hi + BAND_TOLERANCE
        })
        .ok_or(Error::Domain("point outside every branch of the affine system"))
}
