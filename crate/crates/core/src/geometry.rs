//! Hyperbolic geometry of round annuli `A_ρ = {ρ < |z| < 1/ρ}`.
//!
//! The metric is normalized so that it pulls back to `2|dz|/(1 − |z|²)` on the
//! unit disk. With `L = log(1/ρ²)` the universal cover of `A_ρ` is the strip
//! `|log|z|| < L/2`, and
//!
//! ```text
//! λ(z) = (π/L) / (|z| cos(π log|z| / L)).
//! ```

use core::f64::consts::PI;

use crate::prelude::*;

/// Deck translations tried when lifting pairs of points to the universal cover.
const DECK_RANGE: i32 = 3;

/// Margin subtracted from the sampled infimum of the density ratio.
pub const BETA_SAFETY_MARGIN: f64 = 1e-6;

/// The annulus `A_ρ = {ρ < |z| < 1/ρ}` with its complete hyperbolic metric.
///
/// The same type describes the compact set `K = closure(A_ρ)`; whether the
/// open or the closed annulus is meant is decided by the caller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperbolicAnnulus {
    rho: f64,
}

impl HyperbolicAnnulus {
    pub fn new(rho: f64) -> Result<Self> {
        if !(rho > 0.0 && rho < 1.0) {
            return Err(Error::Domain("annulus parameter rho must lie in (0, 1)"));
        }
        Ok(Self { rho })
    }

    /// The pair `(U, K) = (A_{k²/2}, closure(A_{k/2}))` used for the
    /// `z^(N+2) + c` ensembles; valid for `|c| ≤ k²/4`.
    pub fn example_pair(k: f64) -> Result<(Self, Self)> {
        if !(k > 0.0 && k < 1.0) {
            return Err(Error::Domain("annulus constant k must lie in (0, 1)"));
        }
        Ok((Self::new(k * k / 2.0)?, Self::new(k / 2.0)?))
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// `L = log(1/ρ²)`, the width of the covering strip in `log|z|`.
    pub fn log_width(&self) -> f64 {
        -2.0 * self.rho.ln()
    }

    /// The interval of `log|z|` covered by the annulus.
    pub fn log_modulus_band(&self) -> (f64, f64) {
        let h = -self.rho.ln();
        (-h, h)
    }

    pub fn inner_radius(&self) -> f64 {
        self.rho
    }

    pub fn outer_radius(&self) -> f64 {
        1.0 / self.rho
    }

    /// Membership in the open annulus.
    pub fn contains(&self, z: Complex64) -> bool {
        let r = z.norm();
        r > self.rho && r < 1.0 / self.rho
    }

    /// Membership in the closed annulus, with a relative slack `tol` on `log|z|`.
    pub fn contains_closed(&self, z: Complex64, tol: f64) -> bool {
        let (lo, hi) = self.log_modulus_band();
        let u = z.norm().ln();
        u >= lo - tol && u <= hi + tol
    }

    /// Hyperbolic density at `z`.
    pub fn density(&self, z: Complex64) -> Result<f64> {
        if !self.contains(z) {
            return Err(Error::Domain("point outside the open annulus"));
        }
        Ok(self.log_density_at_log_modulus(z.norm().ln()).exp())
    }

    /// `log λ` as a function of `u = log|z|`, without range checks.
    #[inline]
    pub fn log_density_at_log_modulus(&self, u: f64) -> f64 {
        let width = self.log_width();
        (PI / width).ln() - u - (PI * u / width).cos().ln()
    }

    /// Image of `z` in the unit disk under the inverse of the covering map,
    /// using the sheet shifted by `deck` turns.
    pub fn lift_to_disk(&self, z: Complex64, deck: i32) -> Complex64 {
        let scale = PI / self.log_width();
        let u = z.norm().ln();
        let v = z.arg() + 2.0 * PI * f64::from(deck);
        // i·(π/L)·(u + iv) lands in the band |Im t| < π/2.
        let t = Complex64::new(-scale * v, scale * u);
        (t * 0.5).tanh()
    }

    /// Hyperbolic distance, minimized over lifts to the universal cover.
    pub fn distance(&self, z1: Complex64, z2: Complex64) -> Result<f64> {
        if !self.contains(z1) || !self.contains(z2) {
            return Err(Error::Domain("point outside the open annulus"));
        }
        let a = self.lift_to_disk(z1, 0);
        // Start from the sheet whose argument is closest to z1's.
        let shift = -((z2.arg() - z1.arg()) / (2.0 * PI)).round() as i32;
        let best = (-DECK_RANGE..=DECK_RANGE)
            .map(|k| disk_distance(a, self.lift_to_disk(z2, shift + k)))
            .fold(f64::INFINITY, f64::min);
        Ok(best)
    }

    /// Length of the closed geodesic `|z| = 1`: `2π² / log(1/ρ²)`.
    pub fn core_geodesic_length(&self) -> f64 {
        2.0 * PI * PI / self.log_width()
    }
}

/// Distance in the unit disk with curvature −1.
pub fn disk_distance(a: Complex64, b: Complex64) -> f64 {
    let num = (a - b).norm();
    let den = (Complex64::new(1.0, 0.0) - a.conj() * b).norm();
    2.0 * (num / den).min(1.0).atanh()
}

/// Structural constants of a pair `K ⊂ U` of concentric annuli.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainConstants {
    /// Length of the shortest essential loop through `K`.
    pub ell: f64,
    /// `tanh(ℓ/4)`.
    pub alpha: f64,
    /// `Δ` with `tanh(Δ/2) = α/7`.
    pub delta_big: f64,
    /// `Δ′` with `tanh(Δ′/2) = α/2`.
    pub delta_prime: f64,
    /// Contraction factor of `(Int K, d_{Int K}) ↪ (Int K, d_U)`.
    pub beta: f64,
    /// Hyperbolic diameter of `K` in `U`.
    pub diam_k: f64,
}

impl DomainConstants {
    /// Constants for `U = A_{ρ_U}` and `K = closure(A_{ρ_K})`.
    pub fn new(u: &HyperbolicAnnulus, k: &HyperbolicAnnulus) -> Result<Self> {
        let beta = inclusion_contraction(u, k)?;
        // K always contains the core circle, so ℓ(K, U) is U's core length.
        let ell = u.core_geodesic_length();
        let mut constants = Self::from_ell(ell, beta);
        constants.diam_k = hyperbolic_diameter(u, k)?;
        Ok(constants)
    }

    /// Constants determined by `ℓ` and `β` alone; `diam_k` is left at zero.
    pub fn from_ell(ell: f64, beta: f64) -> Self {
        let alpha = if ell.is_infinite() { 1.0 } else { (ell / 4.0).tanh() };
        Self {
            ell,
            alpha,
            delta_big: 2.0 * (alpha / 7.0).atanh(),
            delta_prime: 2.0 * (alpha / 2.0).atanh(),
            beta,
            diam_k: 0.0,
        }
    }

    /// `ε_ℓ(r) = −6 log(1 − tanh(r/2)/α)` for `0 ≤ r < ℓ/2`.
    pub fn epsilon_ell(&self, r: f64) -> Result<f64> {
        if !(r >= 0.0 && r < self.ell / 2.0) {
            return Err(Error::Domain("epsilon_ell needs 0 <= r < ell/2"));
        }
        let ratio = (r / 2.0).tanh() / self.alpha;
        if ratio >= 1.0 {
            return Err(Error::Domain("epsilon_ell argument reaches the log singularity"));
        }
        Ok(-6.0 * (1.0 - ratio).ln())
    }

    /// Distortion constants `c_1, …, c_n` with
    /// `log c_k = Σ_{j<k} ε_ℓ(Δ β^{-j})`.
    pub fn distortion_sequence(&self, n: usize, beta: f64) -> Result<Vec<f64>> {
        if n == 0 {
            return Err(Error::InvalidInput("distortion_sequence needs n >= 1"));
        }
        if !(beta > 1.0) {
            return Err(Error::InvalidInput("distortion_sequence needs beta > 1"));
        }
        let mut out = Vec::with_capacity(n);
        let mut log_c = 0.0;
        let mut radius = self.delta_big;
        for _ in 0..n {
            log_c += self.epsilon_ell(radius)?;
            out.push(log_c.exp());
            radius /= beta;
        }
        Ok(out)
    }

    /// Smallest `n₀` with `2·diam_K / β^{n₀} ≤ Δ`.
    pub fn mixing_steps(&self) -> usize {
        let mut n = 0;
        let mut size = 2.0 * self.diam_k;
        while size > self.delta_big && n < 10_000 {
            size /= self.beta;
            n += 1;
        }
        n
    }
}

/// Contraction factor `β(K, U)`: the infimum over `Int K` of
/// `λ_{Int K}(z) / λ_U(z)`, less [`BETA_SAFETY_MARGIN`].
///
/// Both densities are rotation invariant, so only `log|z|` is sampled.
pub fn inclusion_contraction(u: &HyperbolicAnnulus, k: &HyperbolicAnnulus) -> Result<f64> {
    if k.rho() < u.rho() {
        return Err(Error::Geometry("K is not contained in U"));
    }
    const SAMPLES: usize = 2048;
    let (lo, hi) = k.log_modulus_band();
    let mut inf = f64::INFINITY;
    for i in 1..SAMPLES {
        let t = lo + (hi - lo) * i as f64 / SAMPLES as f64;
        let ratio = (k.log_density_at_log_modulus(t) - u.log_density_at_log_modulus(t)).exp();
        inf = inf.min(ratio);
    }
    let beta = inf - BETA_SAFETY_MARGIN;
    if !(beta > 1.0) {
        return Err(Error::Geometry("inclusion of K into U is not a strict contraction"));
    }
    Ok(beta)
}

/// Hyperbolic diameter of `closure(A_{ρ_K})` in `U`, sampled over a polar grid.
pub fn hyperbolic_diameter(u: &HyperbolicAnnulus, k: &HyperbolicAnnulus) -> Result<f64> {
    const RADII: usize = 9;
    const ANGLES: usize = 181;
    let (lo, hi) = k.log_modulus_band();
    let radius = |i: usize| (lo + (hi - lo) * i as f64 / (RADII - 1) as f64).exp();
    let mut diam: f64 = 0.0;
    for i in 0..RADII {
        let z1 = Complex64::new(radius(i), 0.0);
        for j in 0..RADII {
            for a in 0..ANGLES {
                let theta = PI * a as f64 / (ANGLES - 1) as f64;
                let z2 = Complex64::from_polar(radius(j), theta);
                diam = diam.max(u.distance(z1, z2)?);
            }
        }
    }
    Ok(diam)
}
