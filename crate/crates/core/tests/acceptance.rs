//! Acceptance suite: one line per criterion, non-zero exit if any fails.
//!
//! Run with `cargo test -p repeller-core --test acceptance --features parallel`
//! for the parallel timings.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use repeller_core::boxcount::{backward_orbit, box_dimension, log_spaced_radii, DEFAULT_CAP};
use repeller_core::components::{decompose, two_cantor_cloud, two_cantor_fixture};
use repeller_core::random::{parameter_sweep, random_dimension, EnsembleSpec, SweepAxis};
use repeller_core::solver::{critical_exponents, dimension_bounds, solve_dimension, EnsembleStats, SolverConfig};
use repeller_core::transfer::{Grid, GridFunction, GridShape, SequenceOperator};
use repeller_core::{Complex64, DomainConstants, HyperbolicAnnulus, MapDescriptor};

const K: f64 = 0.8;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: String) -> Self {
        Self { pass, detail }
    }
}

/// Every `s_crit` seen so far, for the planar ceiling.
#[derive(Default)]
struct Seen {
    roots: Vec<(String, f64)>,
}

impl Seen {
    fn push(&mut self, label: &str, s: f64) -> f64 {
        self.roots.push((label.to_string(), s));
        s
    }
}

fn domains() -> (HyperbolicAnnulus, HyperbolicAnnulus) {
    HyperbolicAnnulus::example_pair(K).unwrap()
}

fn cantor(count: usize, ratio: f64) -> MapDescriptor {
    let (u, k) = domains();
    MapDescriptor::uniform_cantor(count, ratio, &k, u).unwrap()
}

fn quadratic(c: Complex64) -> MapDescriptor {
    MapDescriptor::power_plus_c(0, c, domains().0)
}

fn stationary_cases() -> Vec<(&'static str, MapDescriptor)> {
    vec![
        ("cantor", cantor(2, 1.0 / 3.0)),
        ("z^2", quadratic(Complex64::new(0.0, 0.0))),
        ("z^2+0.1", quadratic(Complex64::new(0.1, 0.0))),
        ("z^3+0.05+0.05i", MapDescriptor::power_plus_c(1, Complex64::new(0.05, 0.05), domains().0)),
    ]
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn c1_cantor(seen: &mut Seen) -> Outcome {
    let (_, k) = domains();
    let start = Instant::now();
    let r = solve_dimension(&[cantor(2, 1.0 / 3.0)], &k, GridShape::new(17, 1), &SolverConfig::default()).unwrap();
    let t = start.elapsed();
    let exact = 2f64.ln() / 3f64.ln();
    let err = (seen.push("cantor", r.s_crit) - exact).abs();
    Outcome::new(
        err <= 1e-6 && t < Duration::from_secs(1),
        format!("s_crit={:.9} |err|={err:.1e} time={:.3}s", r.s_crit, secs(t)),
    )
}

fn c2_circle(seen: &mut Seen) -> Outcome {
    let (_, k) = domains();
    let start = Instant::now();
    let config = SolverConfig { n: 8, tol: 1e-5, ..SolverConfig::default() };
    let r = solve_dimension(&[quadratic(Complex64::new(0.0, 0.0))], &k, GridShape::new(256, 256), &config).unwrap();
    let t = start.elapsed();
    let err = (seen.push("z^2 256x256", r.s_crit) - 1.0).abs();
    Outcome::new(
        err <= 5e-3 && t < Duration::from_secs(30),
        format!("s_crit={:.6} |err|={err:.1e} time={:.1}s", r.s_crit, secs(t)),
    )
}

fn c3_bracket_law() -> Outcome {
    let (_, k) = domains();
    let mut worst = f64::NEG_INFINITY;
    let mut where_ = String::new();
    for (name, map) in stationary_cases() {
        let op = SequenceOperator::new(&[map], Grid::new(k, GridShape::new(65, 64)).unwrap()).unwrap();
        for s in [0.5, 1.0, 1.5] {
            for n in [4, 6, 8] {
                let est = op.pressure_estimate(s, n, 40, 20).unwrap();
                let c = est.cocycle.unwrap();
                let excess = (est.lower - c).max(c - est.upper);
                if excess > worst {
                    worst = excess;
                    where_ = format!("{name} s={s} n={n}");
                }
            }
        }
    }
    Outcome::new(worst <= 2e-3, format!("largest violation {worst:.2e} at {where_}"))
}

fn c4_multiplicativity() -> Outcome {
    let (_, k) = domains();
    let op = SequenceOperator::new(&[quadratic(Complex64::new(0.1, 0.0))], Grid::new(k, GridShape::new(65, 64)).unwrap())
        .unwrap();
    let slack = (1.0 + 1e-6f64).ln();
    let mut worst = f64::NEG_INFINITY;
    for s in [0.0, 0.5, 1.0, 1.5, 2.0] {
        let b = op.iterate(s, &op.one(), 4).unwrap().bounds;
        let sub = 2.0 * b[1].log_min - b[3].log_min;
        let sup = b[3].log_max - 2.0 * b[1].log_max;
        worst = worst.max(sub).max(sup);
    }
    Outcome::new(worst <= slack, format!("max log-violation {worst:.2e} (allowed {slack:.1e})"))
}

fn c5_cross_oracle(seen: &mut Seen) -> Outcome {
    let (_, k) = domains();
    let f = quadratic(Complex64::new(0.1, 0.0));
    let start = Instant::now();
    let cloud = backward_orbit(&[f.clone()], &k, Complex64::new(1.0, 0.0), 18, DEFAULT_CAP).unwrap();
    let radii = log_spaced_radii(cloud.chart_diameter() / 64.0, 2.0, 12);
    let boxes = box_dimension(&cloud, &radii).unwrap();
    let solved = solve_dimension(&[f], &k, GridShape::new(33, 64), &SolverConfig::default()).unwrap();
    let t = start.elapsed();
    let gap = (boxes.slope - seen.push("z^2+0.1", solved.s_crit)).abs();
    Outcome::new(
        gap <= 0.02 && t < Duration::from_secs(120),
        format!(
            "box={:.4} bowen={:.4} gap={gap:.4} points={} capped={} time={:.1}s",
            boxes.slope,
            solved.s_crit,
            cloud.len(),
            cloud.capped,
            secs(t)
        ),
    )
}

fn c6_degenerate_random(seen: &mut Seen, bounds: &mut Vec<(String, f64, (f64, f64))>) -> Outcome {
    let shape = GridShape::new(33, 64);
    let (_, k) = domains();
    let det = solve_dimension(&[quadratic(Complex64::new(0.1, 0.0))], &k, shape, &SolverConfig::default()).unwrap();
    let mut worst = 0.0f64;
    for seed in 1..=4 {
        let spec = EnsembleSpec {
            a: Complex64::new(0.1, 0.0),
            r: 0.0,
            lambda: 0.0,
            k: K,
            seed,
            ..Default::default()
        };
        let d = random_dimension(&spec, shape, 1e-7).unwrap();
        seen.push("degenerate ensemble", d.result.s_crit);
        bounds.push((format!("degenerate seed {seed}"), d.result.s_crit, d.bounds));
        worst = worst.max((d.result.s_crit - det.s_crit).abs());
    }
    Outcome::new(worst <= 1e-2, format!("deterministic={:.6} max |diff|={worst:.1e} over 4 seeds", det.s_crit))
}

fn c7_bounds(seen: &mut Seen, mut cases: Vec<(String, f64, (f64, f64))>) -> Outcome {
    // Roots are only resolved to the bisection tolerance.
    const TOL: f64 = 1e-6;
    let (_, k) = domains();
    for (name, map) in stationary_cases() {
        let stats = EnsembleStats::from_maps(&[map.clone()], &k, (64, 64)).unwrap();
        let b = dimension_bounds(&stats).unwrap();
        let r = solve_dimension(&[map], &k, GridShape::new(33, 64), &SolverConfig::default()).unwrap();
        cases.push((name.to_string(), seen.push(name, r.s_crit), b));
    }
    let spec = EnsembleSpec { a: Complex64::new(0.03, 0.0), r: 0.05, lambda: 1.0, k: K, seed: 3, ..Default::default() };
    let d = random_dimension(&spec, GridShape::new(33, 64), 1e-7).unwrap();
    cases.push(("a=0.03 r=0.05 lambda=1".into(), seen.push("mixed ensemble", d.result.s_crit), d.bounds));
    let bad: Vec<String> = cases
        .iter()
        .filter(|(_, s, (lo, hi))| !(lo - TOL <= *s && *s <= hi + TOL))
        .map(|(n, s, (lo, hi))| format!("{n}: {s:.4} not in [{lo:.4}, {hi:.4}]"))
        .collect();
    let detail = if bad.is_empty() { format!("{} cases contained", cases.len()) } else { bad.join("; ") };
    Outcome::new(bad.is_empty(), detail)
}

fn c8_memory_loss() -> Outcome {
    let (_, k) = domains();
    let op = SequenceOperator::new(&[quadratic(Complex64::new(0.1, 0.0))], Grid::new(k, GridShape::new(65, 64)).unwrap())
        .unwrap();
    let grid = *op.grid();
    let a = GridFunction::random_positive(grid, 101, 0.1, 10.0);
    let b = GridFunction::random_positive(grid, 202, 0.1, 10.0);
    let ta = op.normalized_iterate(1.0, &a, grid.anchor(), 60).unwrap();
    let tb = op.normalized_iterate(1.0, &b, grid.anchor(), 60).unwrap();
    let gap = ta.section.sup_distance(&tb.section);
    let eta = op.contraction_rate(1.0, 4, 40, 7).unwrap();
    Outcome::new(gap <= 1e-7 && eta < 1.0, format!("sup gap after 60 steps={gap:.1e} eta={eta:.3}"))
}

fn c9_period_two() -> Outcome {
    let (_, k) = domains();
    let maps = [cantor(2, 1.0 / 3.0), cantor(3, 0.25)];
    let config = SolverConfig { tol: 1e-8, ..SolverConfig::default() };
    let (lo, hi) = critical_exponents(&maps, &k, GridShape::new(9, 1), 4096, &config).unwrap();
    let exact = 6f64.ln() / 12f64.ln();
    let err = (lo - exact).abs().max((hi - exact).abs());
    Outcome::new(err <= 1e-4, format!("lower={lo:.6} upper={hi:.6} exact={exact:.6} |err|={err:.1e}"))
}

fn c10_components(seen: &mut Seen) -> Outcome {
    let (u, k) = domains();
    let f = two_cantor_fixture(&k, u).unwrap();
    let cloud = two_cantor_cloud(&f, &k).unwrap();
    let d = decompose(&cloud, &f, &k, None).unwrap();
    let (lo, hi) = k.log_modulus_band();
    let at = |t: f64| Complex64::new((lo + t * (hi - lo)).exp(), 0.0);
    let thirds = d.class_of_point(at(0.0));
    let quarters = d.class_of_point(at(0.6));
    let mut err = 0.0f64;
    for s in [0.0, 0.5, 0.8, 1.3] {
        let p = d.class_pressure(s, 10).unwrap();
        err = err.max((p[thirds] - (2f64.ln() - s * 3f64.ln())).abs());
        err = err.max((p[quarters] - (3f64.ln() - s * 4f64.ln())).abs());
    }
    let c = d.critical_class(10, 1e-10).unwrap();
    let exact = 3f64.ln() / 4f64.ln();
    seen.push("two-cantor", c.s_crit);
    let pass = d.class_count() == 2 && thirds != quarters && err <= 1e-6 && (c.s_crit - exact).abs() <= 1e-6 && c.class == quarters;
    Outcome::new(
        pass,
        format!(
            "classes={} pressure |err|={err:.1e} s_crit={:.6} selected={} (quarters={quarters})",
            d.class_count(),
            c.s_crit,
            c.class
        ),
    )
}

fn c11_ceiling(seen: &Seen) -> Outcome {
    let max = seen.roots.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
    Outcome::new(max <= 2.0 + 1e-3, format!("{} roots, max s_crit={max:.6}", seen.roots.len()))
}

fn c12_sweep(seen: &mut Seen) -> Outcome {
    let base = EnsembleSpec { a: Complex64::new(0.05, 0.0), r: 0.05, lambda: 0.0, k: K, seed: 11, ..Default::default() };
    let start = Instant::now();
    let sweep = parameter_sweep(&base, SweepAxis::Lambda, &[0.0, 0.25, 0.5, 0.75, 1.0], GridShape::new(33, 64), 1e-7).unwrap();
    let t = start.elapsed();
    for s in &sweep.samples {
        seen.push("sweep", s.d);
    }
    let ds: Vec<String> = sweep.samples.iter().map(|s| format!("{:.5}", s.d)).collect();
    Outcome::new(
        sweep.fit_residual <= 2.0 * sweep.pooled_std_error && t < Duration::from_secs(600),
        format!(
            "d=[{}] cubic residual={:.2e} pooled se={:.2e} time={:.1}s",
            ds.join(", "),
            sweep.fit_residual,
            sweep.pooled_std_error,
            secs(t)
        ),
    )
}

/// Density from `2|w'|/(1-|w|²)` with `w` the lift to the disk and `w'` by
/// central differences.
fn pullback_density(a: &HyperbolicAnnulus, z: Complex64) -> f64 {
    let h = 1e-6 * z.norm();
    let w = a.lift_to_disk(z, 0);
    let deriv = (a.lift_to_disk(z + h, 0) - a.lift_to_disk(z - h, 0)).norm() / (2.0 * h);
    2.0 / (1.0 - w.norm_sqr()) * deriv
}

fn c13_geometry() -> Outcome {
    let (u, k) = HyperbolicAnnulus::example_pair(0.99).unwrap();
    let (lo, hi) = u.log_modulus_band();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        // Stay off the boundary, where both sides blow up.
        let t: f64 = rng.random_range(0.05..0.95);
        let theta: f64 = rng.random_range(-PI..PI);
        let z = Complex64::from_polar((lo + t * (hi - lo)).exp(), theta);
        let closed = u.density(z).unwrap();
        worst = worst.max((closed - pullback_density(&u, z)).abs() / closed);
    }
    let c = DomainConstants::new(&u, &k).unwrap();
    let eps_err = (c.epsilon_ell(c.delta_big).unwrap() - 6.0 * (7f64 / 6.0).ln()).abs();
    Outcome::new(
        worst <= 1e-6 && eps_err <= 1e-12,
        format!("max rel density err={worst:.1e} |eps(Delta) - 6 log(7/6)|={eps_err:.1e}"),
    )
}

fn main() {
    // `cargo test` passes harness flags such as `--nocapture`; a filter
    // argument that matches nothing here skips the suite.
    if std::env::args().skip(1).any(|a| !a.starts_with('-') && !"acceptance".contains(a.as_str())) {
        return;
    }
    let mut seen = Seen::default();
    let mut random_bounds = Vec::new();
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut record = |n: u32, name: &'static str, o: Outcome| {
        println!("criterion {n:>2} {:<4} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((n, name, o));
    };
    record(1, "closed-form Cantor", c1_cantor(&mut seen));
    record(2, "unit-circle Julia set", c2_circle(&mut seen));
    record(3, "bracket law", c3_bracket_law());
    record(4, "sub/super-multiplicativity", c4_multiplicativity());
    record(5, "box-count cross-oracle", c5_cross_oracle(&mut seen));
    record(6, "degenerate random ensemble", c6_degenerate_random(&mut seen, &mut random_bounds));
    record(7, "a-priori bounds", c7_bounds(&mut seen, random_bounds));
    record(8, "cone memory loss", c8_memory_loss());
    record(9, "period-2 cocycle", c9_period_two());
    record(10, "component decomposition", c10_components(&mut seen));
    record(12, "sweep smoothness", c12_sweep(&mut seen));
    record(13, "geometry gate", c13_geometry());
    record(11, "planar ceiling", c11_ceiling(&seen));
    let failed: Vec<u32> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!("acceptance: {} of {} criteria passed", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        println!("failed: {failed:?}");
        std::process::exit(1);
    }
}
