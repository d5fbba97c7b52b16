//! Decomposition of a sampled repeller into δ-connected components, the
//! transition graph between them and its strongly connected classes.
//!
//! Everything is computed on a [`PointCloud`] in the `(log|z|, arg z)` chart.
//! Class pressures use the transfer operator restricted to cloud points:
//! a preimage contributes when it lands within `δ/2` of a cloud point, and
//! the value there is read off that point.

use crate::boxcount::{chart, ChartIndex, PointCloud};
use crate::geometry::HyperbolicAnnulus;
use crate::maps::MapDescriptor;
use crate::prelude::*;
use crate::solver::bisect;

/// Multiple of the median nearest-neighbour distance used when no δ is given.
pub const DEFAULT_DELTA_FACTOR: f64 = 5.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentDecomposition {
    pub delta: f64,
    pub points: Vec<Complex64>,
    /// Component of each point.
    pub labels: Vec<usize>,
    /// Point indices of each component, ordered by smallest `(log|z|, arg)`.
    pub components: Vec<Vec<usize>>,
    /// `transition[j][i]` when `f(Λ_i)` meets `Λ_j`.
    pub transition: Vec<Vec<bool>>,
    /// Component indices of each class, ordered by smallest member point.
    pub classes: Vec<Vec<usize>>,
    pub class_of: Vec<usize>,
    /// Condensation edges `(a, b)`: class `a` maps into class `b`, so `a ≺ b`.
    pub order: Vec<(usize, usize)>,
    /// Cloud points whose component fails the covering property for some
    /// incoming transition.
    pub markov_violations: usize,
    /// Points whose image is not within `δ/2` of the cloud.
    pub unmatched_images: usize,
    /// Matched cloud point of each point's image.
    forward: Vec<Option<usize>>,
    /// `(matched point, log Df)` for the preimages of each point.
    backward: Vec<Vec<(usize, f64)>>,
}

/// Partition of `cloud` at scale `delta` (default: five times the median
/// nearest-neighbour distance) with the transition graph of `map`.
pub fn decompose(cloud: &PointCloud, map: &MapDescriptor, k: &HyperbolicAnnulus, delta: Option<f64>) -> Result<ComponentDecomposition> {
    if cloud.is_empty() {
        return Err(Error::InvalidInput("empty point cloud"));
    }
    let resolution = cloud.spacing();
    let delta = delta.unwrap_or(DEFAULT_DELTA_FACTOR * resolution);
    if !(delta > resolution) {
        return Err(Error::Scale { delta, resolution });
    }
    let pts = cloud.chart_points();
    let index = ChartIndex::new(&pts, Some(delta));

    let (labels, components) = cluster(&pts, &index, delta);
    let m = components.len();

    let matched = |z: Complex64| -> Option<usize> {
        if !(z.norm() > 0.0) {
            return None;
        }
        index.nearest_where(chart(z), |_| true).filter(|(_, d)| *d <= delta / 2.0).map(|(j, _)| j)
    };

    let forward: Vec<Option<usize>> = cloud.points.iter().map(|&x| map.evaluate(x).ok().and_then(matched)).collect();
    let unmatched_images = forward.iter().filter(|f| f.is_none()).count();
    let backward: Vec<Vec<(usize, f64)>> = cloud
        .points
        .iter()
        .map(|&y| match map.preimages(y, k) {
            Ok(set) => set
                .points
                .iter()
                .zip(&set.derivatives)
                .filter_map(|(&x, &d)| matched(x).map(|j| (j, d.ln())))
                .collect(),
            Err(_) => Vec::new(),
        })
        .collect();

    let mut transition = vec![vec![false; m]; m];
    for (x, image) in forward.iter().enumerate() {
        if let Some(y) = image {
            transition[labels[*y]][labels[x]] = true;
        }
    }

    // Covering check: every point of Λ_j needs a preimage matched into Λ_i.
    let mut markov_violations = 0;
    for j in 0..m {
        for &y in &components[j] {
            let ok = (0..m)
                .filter(|&i| transition[j][i])
                .all(|i| backward[y].iter().any(|&(x, _)| labels[x] == i));
            if !ok {
                markov_violations += 1;
            }
        }
    }

    let successors: Vec<Vec<usize>> = (0..m).map(|i| (0..m).filter(|&j| transition[j][i]).collect()).collect();
    let (classes, class_of) = strongly_connected(&successors);
    let mut order: Vec<(usize, usize)> = Vec::new();
    for (i, succ) in successors.iter().enumerate() {
        for &j in succ {
            if class_of[i] != class_of[j] {
                order.push((class_of[i], class_of[j]));
            }
        }
    }
    order.sort_unstable();
    order.dedup();

    Ok(ComponentDecomposition {
        delta,
        points: cloud.points.clone(),
        labels,
        components,
        transition,
        classes,
        class_of,
        order,
        markov_violations,
        unmatched_images,
        forward,
        backward,
    })
}

/// Single-linkage clusters at threshold `delta`, numbered by smallest member.
fn cluster(pts: &[(f64, f64)], index: &ChartIndex<'_>, delta: f64) -> (Vec<usize>, Vec<Vec<usize>>) {
    let mut parent: Vec<usize> = (0..pts.len()).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for i in 0..pts.len() {
        for j in index.within(pts[i], delta) {
            let (a, b) = (find(&mut parent, i), find(&mut parent, j));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let roots: Vec<usize> = (0..pts.len()).map(|i| find(&mut parent, i)).collect();
    // Smallest member of each root, in lexicographic chart order.
    let mut first: Vec<Option<usize>> = vec![None; pts.len()];
    for (i, &r) in roots.iter().enumerate() {
        let better = match first[r] {
            None => true,
            Some(f) => lex(pts[i], pts[f]).is_lt(),
        };
        if better {
            first[r] = Some(i);
        }
    }
    let mut reps: Vec<(usize, usize)> = first.iter().enumerate().filter_map(|(r, f)| f.map(|f| (r, f))).collect();
    reps.sort_by(|a, b| lex(pts[a.1], pts[b.1]));
    let mut id = vec![usize::MAX; pts.len()];
    for (n, (r, _)) in reps.iter().enumerate() {
        id[*r] = n;
    }
    let labels: Vec<usize> = roots.iter().map(|&r| id[r]).collect();
    let mut components = vec![Vec::new(); reps.len()];
    for (i, &l) in labels.iter().enumerate() {
        components[l].push(i);
    }
    (labels, components)
}

fn lex(a: (f64, f64), b: (f64, f64)) -> core::cmp::Ordering {
    a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1))
}

/// Tarjan's algorithm without recursion. Classes are renumbered by their
/// smallest component index.
fn strongly_connected(successors: &[Vec<usize>]) -> (Vec<Vec<usize>>, Vec<usize>) {
    let n = successors.len();
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut raw: Vec<Vec<usize>> = Vec::new();
    let mut counter = 0;
    for root in 0..n {
        if index[root] != usize::MAX {
            continue;
        }
        let mut call: Vec<(usize, usize)> = vec![(root, 0)];
        index[root] = counter;
        low[root] = counter;
        counter += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut next)) = call.last_mut() {
            if let Some(&w) = successors[v].get(*next) {
                *next += 1;
                if index[w] == usize::MAX {
                    index[w] = counter;
                    low[w] = counter;
                    counter += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&(parent, _)) = call.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut members = Vec::new();
                    while let Some(w) = stack.pop() {
                        on_stack[w] = false;
                        members.push(w);
                        if w == v {
                            break;
                        }
                    }
                    members.sort_unstable();
                    raw.push(members);
                }
            }
        }
    }
    raw.sort_by_key(|c| c[0]);
    let mut class_of = vec![0; n];
    for (c, members) in raw.iter().enumerate() {
        for &v in members {
            class_of[v] = c;
        }
    }
    (raw, class_of)
}

impl ComponentDecomposition {
    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    /// Class of the cloud point nearest to `z` in the chart.
    pub fn class_of_point(&self, z: Complex64) -> usize {
        let p = chart(z);
        let nearest = (0..self.points.len())
            .min_by(|&a, &b| {
                let da = crate::boxcount::chart_distance(p, chart(self.points[a]));
                let db = crate::boxcount::chart_distance(p, chart(self.points[b]));
                da.total_cmp(&db)
            })
            .unwrap_or(0);
        self.class_of[self.labels[nearest]]
    }

    /// Whether `a ≺ b`, i.e. `b` is reachable from `a` in the condensation.
    pub fn precedes(&self, a: usize, b: usize) -> bool {
        if a == b {
            return false;
        }
        let mut seen = vec![false; self.classes.len()];
        let mut todo = vec![a];
        while let Some(c) = todo.pop() {
            for &(x, y) in &self.order {
                if x == c && !seen[y] {
                    if y == b {
                        return true;
                    }
                    seen[y] = true;
                    todo.push(y);
                }
            }
        }
        false
    }

    /// Fewest transitions from component `from` to component `to`.
    pub fn steps_between(&self, from: usize, to: usize) -> Option<usize> {
        let m = self.components.len();
        let mut dist = vec![usize::MAX; m];
        let mut queue = alloc::collections::VecDeque::new();
        dist[from] = 0;
        queue.push_back(from);
        while let Some(i) = queue.pop_front() {
            for j in (0..m).filter(|&j| self.transition[j][i]) {
                if dist[j] == usize::MAX {
                    dist[j] = dist[i] + 1;
                    if j == to {
                        return Some(dist[j]);
                    }
                    queue.push_back(j);
                }
            }
        }
        if from == to {
            Some(0)
        } else {
            None
        }
    }

    /// `(1/n) log max N^n 1` for the operator masked to the points selected by `mask`.
    pub fn masked_pressure(&self, s: f64, n: usize, mask: &[bool]) -> Result<f64> {
        if n == 0 {
            return Err(Error::InvalidInput("class pressure needs n >= 1"));
        }
        let mut phi: Vec<f64> = mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
        let mut next = vec![0.0; phi.len()];
        let mut log_total = 0.0;
        for _ in 0..n {
            for (y, out) in next.iter_mut().enumerate() {
                *out = if mask[y] {
                    self.backward[y].iter().map(|&(x, log_d)| (-s * log_d).exp() * phi[x]).sum()
                } else {
                    0.0
                };
            }
            let max = next.iter().copied().fold(0.0, f64::max);
            if !(max > 0.0) {
                return Ok(f64::NEG_INFINITY);
            }
            if !max.is_finite() {
                return Err(Error::Numeric("masked iterate overflowed"));
            }
            log_total += max.ln();
            for v in next.iter_mut() {
                *v /= max;
            }
            core::mem::swap(&mut phi, &mut next);
        }
        Ok(log_total / n as f64)
    }

    fn class_mask(&self, class: usize) -> Vec<bool> {
        self.labels.iter().map(|&l| self.class_of[l] == class).collect()
    }

    /// Pressure of each class at `s`; `−∞` for classes without a cycle.
    pub fn class_pressure(&self, s: f64, n: usize) -> Result<Vec<f64>> {
        (0..self.classes.len()).map(|c| self.masked_pressure(s, n, &self.class_mask(c))).collect()
    }

    /// Pressure of the unmasked cloud operator.
    pub fn total_pressure(&self, s: f64, n: usize) -> Result<f64> {
        self.masked_pressure(s, n, &vec![true; self.points.len()])
    }

    /// Largest class root and an order-minimal class attaining it.
    pub fn critical_class(&self, n: usize, tol: f64) -> Result<CriticalClass> {
        const S_MAX: f64 = 2.2;
        let roots = (0..self.classes.len())
            .map(|c| {
                let mask = self.class_mask(c);
                bisect(|s| self.masked_pressure(s, n, &mask), 0.0, S_MAX, tol, 200)
            })
            .collect::<Result<Vec<f64>>>()?;
        let s_crit = roots.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let candidates: Vec<usize> = (0..roots.len()).filter(|&c| roots[c] >= s_crit - tol).collect();
        let class = candidates
            .iter()
            .copied()
            .find(|&c| !candidates.iter().any(|&d| self.precedes(d, c)))
            .unwrap_or(candidates[0]);
        Ok(CriticalClass { class, s_crit, roots, invariant_points: self.invariant_points(class) })
    }

    /// Points of `class` whose matched forward orbit never leaves it.
    pub fn invariant_points(&self, class: usize) -> Vec<usize> {
        let mut keep = self.class_mask(class);
        loop {
            let mut changed = false;
            for x in 0..keep.len() {
                if keep[x] && !self.forward[x].is_some_and(|y| keep[y]) {
                    keep[x] = false;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        (0..keep.len()).filter(|&x| keep[x]).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticalClass {
    pub class: usize,
    pub s_crit: f64,
    /// Root of each class pressure (0 when the class pressure is never positive).
    pub roots: Vec<f64>,
    /// Cloud points of the selected class whose forward orbit stays in it.
    pub invariant_points: Vec<usize>,
}

/// The reducible two-Cantor fixture: a ratio-1/3 pair on `t ∈ [0, 0.4]` and
/// a ratio-1/4 triple on `t ∈ [0.6, 1]` of the affine chart, with no
/// transitions between them.
pub fn two_cantor_fixture(k: &HyperbolicAnnulus, u: HyperbolicAnnulus) -> Result<MapDescriptor> {
    use crate::maps::IfsBranch;
    let third = |tr: f64| IfsBranch::new(1.0 / 3.0, tr).with_range(0.0, 0.5);
    let quarter = |j: f64| IfsBranch::new(0.25, 0.45 + 0.15 * j).with_range(0.5, 1.0);
    MapDescriptor::linear_ifs(
        vec![third(0.0), third(0.8 / 3.0), quarter(0.0), quarter(1.0), quarter(2.0)],
        k,
        u,
    )
}

/// Cloud for [`two_cantor_fixture`]: both invariant sets grown from their
/// leftmost fixed points, at depths with comparable spacing.
pub fn two_cantor_cloud(map: &MapDescriptor, k: &HyperbolicAnnulus) -> Result<PointCloud> {
    let at = |t: f64| {
        let (lo, hi) = k.log_modulus_band();
        Complex64::new((lo + t * (hi - lo)).exp(), 0.0)
    };
    let maps = [map.clone()];
    let thirds = crate::boxcount::backward_orbit(&maps, k, at(0.0), 10, crate::boxcount::DEFAULT_CAP)?;
    let quarters = crate::boxcount::backward_orbit(&maps, k, at(0.6), 8, crate::boxcount::DEFAULT_CAP)?;
    Ok(thirds.union(quarters))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boxcount::backward_orbit;
    use crate::geometry::DomainConstants;
    use crate::maps::IfsBranch;
    use crate::transfer::{pressure_bracket, Grid, GridShape};

    fn pair() -> (HyperbolicAnnulus, HyperbolicAnnulus) {
        HyperbolicAnnulus::example_pair(0.8).unwrap()
    }

    fn at(k: &HyperbolicAnnulus, t: f64) -> Complex64 {
        let (lo, hi) = k.log_modulus_band();
        Complex64::new((lo + t * (hi - lo)).exp(), 0.0)
    }

    fn two_cantor() -> ComponentDecomposition {
        let (u, k) = pair();
        let f = two_cantor_fixture(&k, u).unwrap();
        let cloud = two_cantor_cloud(&f, &k).unwrap();
        decompose(&cloud, &f, &k, None).unwrap()
    }

    fn square() -> (ComponentDecomposition, MapDescriptor) {
        let (u, k) = pair();
        let f = MapDescriptor::power_plus_c(0, Complex64::new(0.0, 0.0), u);
        let cloud = backward_orbit(&[f.clone()], &k, Complex64::new(1.0, 0.0), 10, 1 << 20).unwrap();
        (decompose(&cloud, &f, &k, None).unwrap(), f)
    }

    #[test]
    fn circle_is_one_class() {
        let (d, _) = square();
        assert_eq!(d.components.len(), 1);
        assert_eq!(d.class_count(), 1);
        assert!(d.order.is_empty());
        assert_eq!(d.markov_violations, 0);
    }

    #[test]
    fn single_class_pressure_matches_bracket() {
        let (d, f) = square();
        let (_, k) = pair();
        for s in [0.5, 1.0, 1.5] {
            let p = d.class_pressure(s, 12).unwrap()[0];
            let b = pressure_bracket(s, &[f.clone()], Grid::new(k, GridShape::new(17, 32)).unwrap(), 12).unwrap();
            assert!(p >= b.lower - 2e-3 && p <= b.upper + 2e-3, "{p} vs [{}, {}]", b.lower, b.upper);
        }
        let c = d.critical_class(12, 1e-8).unwrap();
        assert_eq!(c.class, 0);
        assert!((c.s_crit - 1.0).abs() < 1e-6);
        assert_eq!(c.invariant_points.len(), d.points.len());
    }

    #[test]
    fn two_cantor_sets_are_two_classes() {
        let d = two_cantor();
        assert_eq!(d.class_count(), 2, "{:?}", d.classes.len());
        assert!(d.order.is_empty());
        assert!(!d.precedes(0, 1) && !d.precedes(1, 0));
        assert_eq!(d.markov_violations, 0);
        assert_eq!(d.unmatched_images, 0);
        // Components are δ-separated.
        let pts: Vec<(f64, f64)> = d.points.iter().map(|&z| chart(z)).collect();
        for a in 0..pts.len() {
            for b in (a + 1)..pts.len() {
                if d.labels[a] != d.labels[b] {
                    assert!(crate::boxcount::chart_distance(pts[a], pts[b]) > d.delta);
                }
            }
        }
    }

    #[test]
    fn class_pressures_have_closed_forms() {
        let (_, k) = pair();
        let d = two_cantor();
        let thirds = d.class_of_point(at(&k, 0.0));
        let quarters = d.class_of_point(at(&k, 0.6));
        assert_ne!(thirds, quarters);
        for s in [0.0, 0.5, 0.8, 1.3] {
            let p = d.class_pressure(s, 10).unwrap();
            assert!((p[thirds] - (2f64.ln() - s * 3f64.ln())).abs() < 1e-9);
            assert!((p[quarters] - (3f64.ln() - s * 4f64.ln())).abs() < 1e-9);
        }
    }

    #[test]
    fn total_pressure_is_max_over_classes() {
        let d = two_cantor();
        for s in [0.3, 0.7, 1.1] {
            let classes = d.class_pressure(s, 10).unwrap();
            let max = classes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            assert!((d.total_pressure(s, 10).unwrap() - max).abs() < 1e-9);
        }
    }

    #[test]
    fn critical_class_picks_quarters() {
        let (_, k) = pair();
        let d = two_cantor();
        let c = d.critical_class(10, 1e-10).unwrap();
        assert!((c.s_crit - 3f64.ln() / 4f64.ln()).abs() < 1e-6);
        assert_eq!(c.class, d.class_of_point(at(&k, 0.6)));
        assert_eq!(c.invariant_points.len(), d.classes[c.class].iter().map(|&i| d.components[i].len()).sum::<usize>());
        // Same answer on repeated runs.
        assert_eq!(two_cantor().critical_class(10, 1e-10).unwrap(), c);
    }

    #[test]
    fn classes_are_transitive_within() {
        let (u, k) = pair();
        let n0 = DomainConstants::new(&u, &k).unwrap().mixing_steps();
        let d = two_cantor();
        for class in &d.classes {
            for (a, &i) in class.iter().enumerate().step_by(3) {
                let j = class[(a * 7 + 1) % class.len()];
                let steps = d.steps_between(i, j).unwrap();
                assert!(steps <= n0.max(class.len()), "{steps}");
            }
        }
    }

    #[test]
    fn condensation_is_a_partial_order() {
        let d = chain();
        let c = d.class_count();
        for a in 0..c {
            assert!(!d.precedes(a, a));
            for b in 0..c {
                if d.precedes(a, b) {
                    assert!(!d.precedes(b, a));
                    for e in 0..c {
                        if d.precedes(b, e) {
                            assert!(d.precedes(a, e));
                        }
                    }
                }
            }
        }
        let mut seen = vec![false; d.components.len()];
        for class in &d.classes {
            for &i in class {
                assert!(!seen[i]);
                seen[i] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    /// Ratio-1/3 pair on `[0, 0.4]`, ratio-1/4 triple on `[0.7, 1]`, and a
    /// branch carrying the triple onto `[0.4, 0.45]`, next to the pair.
    fn chain() -> ComponentDecomposition {
        let (u, k) = pair();
        let h = 0.1125;
        let a = |tr: f64| IfsBranch::new(1.0 / 3.0, tr).with_range(0.0, 0.4);
        let b = |j: f64| IfsBranch::new(0.25, 0.7 - 0.7 / 4.0 + h * j).with_range(0.65, 1.0);
        let c = IfsBranch::new(1.0 / 6.0, 0.4 - 0.7 / 6.0).with_range(0.7, 1.0);
        let f = MapDescriptor::linear_ifs(vec![a(0.0), a(0.8 / 3.0), b(0.0), b(1.0), b(2.0), c], &k, u).unwrap();
        let maps = [f.clone()];
        let cloud = backward_orbit(&maps, &k, at(&k, 0.0), 9, 1 << 20)
            .unwrap()
            .union(backward_orbit(&maps, &k, at(&k, 0.7), 7, 1 << 20).unwrap());
        decompose(&cloud, &f, &k, None).unwrap()
    }

    #[test]
    fn chain_orders_the_classes() {
        let (_, k) = pair();
        let d = chain();
        let a = d.class_of_point(at(&k, 0.0));
        let b = d.class_of_point(at(&k, 0.7));
        assert_ne!(a, b);
        assert!(d.precedes(a, b));
        assert!(!d.precedes(b, a));
        let p = d.class_pressure(0.5, 10).unwrap();
        assert!((p[a] - (2f64.ln() - 0.5 * 3f64.ln())).abs() < 1e-9);
        assert!((p[b] - (3f64.ln() - 0.5 * 4f64.ln())).abs() < 1e-9);
    }

    #[test]
    fn tiny_delta_is_rejected() {
        let (u, k) = pair();
        let f = MapDescriptor::power_plus_c(0, Complex64::new(0.0, 0.0), u);
        let cloud = backward_orbit(&[f.clone()], &k, Complex64::new(1.0, 0.0), 8, 1 << 20).unwrap();
        assert!(matches!(decompose(&cloud, &f, &k, Some(1e-6)), Err(Error::Scale { .. })));
    }

    #[test]
    fn tarjan_on_small_graph() {
        // 0 ⇄ 1 → 2 → 3 ⇄ 4, 2 alone.
        let succ = vec![vec![1], vec![0, 2], vec![3], vec![4], vec![3]];
        let (classes, class_of) = strongly_connected(&succ);
        assert_eq!(classes, vec![vec![0, 1], vec![2], vec![3, 4]]);
        assert_eq!(class_of, vec![0, 0, 1, 2, 2]);
    }
}
