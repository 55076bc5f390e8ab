//! Discrete measures on the space, relative entropy, exact discrete
//! Wasserstein distance for the squared sup-metric cost, and cyclical
//! monotonicity checks.

pub mod flow;

use std::io::{Read, Write};

use rand::RngExt;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::geometry::{dist_inf, Point, Space};
use crate::quadrature::gaussian_mass;
use crate::sampling;

pub use flow::{LexSolution, TransportProblem};

/// Total number of integer mass units a probability vector is rounded to.
pub const MASS_UNITS: i64 = 1 << 40;

/// Scale applied to real costs before rounding to integers.
pub const COST_SCALE: f64 = (1u64 << 48) as f64;

pub const WEIGHT_TOLERANCE: f64 = 1e-12;

/// Fiber-adapted grid: `nx` columns of equal width on `[x_lo, x_hi]`,
/// each split into `ny` bins of the normalized height `u = y / f(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub x_lo: f64,
    pub x_hi: f64,
    pub nx: usize,
    pub ny: usize,
}

impl Grid {
    pub fn new(x_lo: f64, x_hi: f64, nx: usize, ny: usize) -> Result<Self> {
        if !(x_lo < x_hi) || x_lo < -1.0 || x_hi > 1.0 {
            return Err(LabError::Parameter(format!("bad grid range [{x_lo}, {x_hi}]")));
        }
        if nx == 0 || ny == 0 {
            return Err(LabError::Parameter("grid needs at least one cell".into()));
        }
        Ok(Grid { x_lo, x_hi, nx, ny })
    }

    pub fn dx(&self) -> f64 {
        (self.x_hi - self.x_lo) / self.nx as f64
    }

    pub fn column_center(&self, c: usize) -> f64 {
        self.x_lo + (c as f64 + 0.5) * self.dx()
    }

    pub fn column_of(&self, x: f64) -> Option<usize> {
        let t = (x - self.x_lo) / self.dx();
        if !(-1e-9..=self.nx as f64 + 1e-9).contains(&t) {
            return None;
        }
        Some((t.floor().max(0.0) as usize).min(self.nx - 1))
    }

    pub fn row_of(&self, u: f64) -> usize {
        ((u * self.ny as f64).floor().max(0.0) as usize).min(self.ny - 1)
    }

    /// Sup-metric diameter bound of a cell, `max(Δx, max f / ny)`.
    pub fn cell_size(&self, space: &Space) -> f64 {
        let fmax = space.profile.f(self.x_hi);
        self.dx().max(fmax / self.ny as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub x: f64,
    pub y: f64,
    pub weight: f64,
    /// Reference mass `m(cell)` of the cell the atom represents.
    pub ref_mass: f64,
    pub col: usize,
    pub row: usize,
    /// True for atoms on the singular segment (`ε = 0`, `f = 0`).
    pub singular: bool,
}

impl Atom {
    pub fn point(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    /// The `ε` of the space the atoms live in.
    pub epsilon: f64,
    pub grid: Option<Grid>,
    pub atoms: Vec<Atom>,
}

fn grid_cells(space: &Space, grid: &Grid) -> Vec<Atom> {
    let dx = grid.dx();
    let kk = space.big_k();
    let bin_mass: Vec<f64> = (0..grid.ny)
        .map(|r| dx * gaussian_mass(kk, r as f64 / grid.ny as f64, (r + 1) as f64 / grid.ny as f64))
        .collect();
    let mut atoms = Vec::with_capacity(grid.nx * grid.ny);
    for c in 0..grid.nx {
        let x = grid.column_center(c);
        let f = space.profile.f(x);
        if f <= 0.0 {
            atoms.push(Atom { x, y: 0.0, weight: 0.0, ref_mass: space.c_k * dx, col: c, row: 0, singular: true });
            continue;
        }
        for (r, &mass) in bin_mass.iter().enumerate() {
            let u = (r as f64 + 0.5) / grid.ny as f64;
            atoms.push(Atom { x, y: u * f, weight: 0.0, ref_mass: mass, col: c, row: r, singular: false });
        }
    }
    atoms
}

/// Discretizes `ρ · m` on `grid`. Returns the measure (weights normalized
/// to one) and the raw total `Σ ρ(atom) m(cell)` before normalization.
pub fn discretize_with_total<F: Fn(Point) -> f64>(
    space: &Space,
    rho: F,
    grid: Grid,
) -> Result<(DiscreteMeasure, f64)> {
    let mut atoms = grid_cells(space, &grid);
    let mut total = 0.0;
    for a in atoms.iter_mut() {
        let r = rho(a.point());
        if !(r >= 0.0 && r.is_finite()) {
            return Err(LabError::Parameter(format!("density {r} at ({}, {}) is not admissible", a.x, a.y)));
        }
        a.weight = r * a.ref_mass;
        total += a.weight;
    }
    if !(total > 0.0 && total.is_finite()) {
        return Err(LabError::Parameter("density is not normalizable on the grid".into()));
    }
    for a in atoms.iter_mut() {
        a.weight /= total;
    }
    Ok((DiscreteMeasure { epsilon: space.params.epsilon, grid: Some(grid), atoms }, total))
}

pub fn discretize<F: Fn(Point) -> f64>(space: &Space, rho: F, grid: Grid) -> Result<DiscreteMeasure> {
    discretize_with_total(space, rho, grid).map(|(m, _)| m)
}

/// Normalized restriction of `m` to the strip `[x_lo, x_hi] × ℝ`.
pub fn strip_measure(space: &Space, x_lo: f64, x_hi: f64, nx: usize, ny: usize) -> Result<DiscreteMeasure> {
    let grid = Grid::new(x_lo, x_hi, nx, ny)?;
    discretize(space, |_| 1.0, grid)
}

/// Sums weighted points into the cells of `grid`. Cell reference masses
/// are those of the grid; empty cells keep weight zero.
pub fn bin_onto(space: &Space, grid: Grid, points: &[(Point, f64)]) -> Result<DiscreteMeasure> {
    let mut atoms = grid_cells(space, &grid);
    let mut index = vec![usize::MAX; grid.nx * grid.ny];
    for (i, a) in atoms.iter().enumerate() {
        index[a.col * grid.ny + a.row] = i;
    }
    for &(p, w) in points {
        let c = grid.column_of(p.x).ok_or(LabError::OutsideSpace { x: p.x, y: p.y })?;
        let f = space.profile.f(grid.column_center(c));
        let r = if f > 0.0 {
            let fp = space.profile.eval(p.x.clamp(-1.0, 1.0))?.f;
            if fp > 0.0 {
                grid.row_of(p.y / fp)
            } else {
                0
            }
        } else {
            0
        };
        atoms[index[c * grid.ny + r]].weight += w;
    }
    Ok(DiscreteMeasure { epsilon: space.params.epsilon, grid: Some(grid), atoms })
}

impl DiscreteMeasure {
    /// Atoms with the given points and weights and unit reference mass.
    pub fn from_points(epsilon: f64, points: &[(Point, f64)]) -> Self {
        let atoms = points
            .iter()
            .map(|&(p, w)| Atom { x: p.x, y: p.y, weight: w, ref_mass: 1.0, col: 0, row: 0, singular: false })
            .collect();
        DiscreteMeasure { epsilon, grid: None, atoms }
    }

    pub fn total(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).sum()
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn points(&self) -> Vec<Point> {
        self.atoms.iter().map(Atom::point).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.atoms.iter().map(|a| a.weight).collect()
    }

    /// Checks nonnegative weights summing to one and atoms inside the space.
    pub fn validate(&self, space: &Space) -> Result<()> {
        if self.atoms.iter().any(|a| !(a.weight >= 0.0)) {
            return Err(LabError::Parameter("negative weight".into()));
        }
        let t = self.total();
        if (t - 1.0).abs() > WEIGHT_TOLERANCE {
            return Err(LabError::Parameter(format!("weights sum to {t}")));
        }
        for a in &self.atoms {
            if !space.contains(a.point()) {
                return Err(LabError::OutsideSpace { x: a.x, y: a.y });
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// `Σ w log(w / m(cell))`, the discrete relative entropy.
pub fn entropy(mu: &DiscreteMeasure) -> Result<f64> {
    let mut s = 0.0;
    for (i, a) in mu.atoms.iter().enumerate() {
        if a.weight <= 0.0 {
            continue;
        }
        if !(a.ref_mass > 0.0) {
            return Err(LabError::ZeroReferenceMass { index: i });
        }
        s += a.weight * (a.weight / a.ref_mass).ln();
    }
    Ok(s)
}

/// Rounds a probability vector to nonnegative integers summing to `total`
/// by the largest-remainder rule (ties broken by index).
pub fn quantize(weights: &[f64], total: i64) -> Result<Vec<i64>> {
    let sum: f64 = weights.iter().sum();
    if !(sum > 0.0) || weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(LabError::Infeasible("weights must be nonnegative with positive sum".into()));
    }
    let scaled: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut units: Vec<i64> = scaled.iter().map(|s| s.floor() as i64).collect();
    let assigned: i64 = units.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = scaled[a] - units[a] as f64;
        let rb = scaled[b] - units[b] as f64;
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    let missing = total - assigned;
    if missing < 0 || missing as usize > weights.len() {
        return Err(LabError::Infeasible("rounding failed".into()));
    }
    for &i in order.iter().take(missing as usize) {
        units[i] += 1;
    }
    Ok(units)
}

pub fn scale_cost(c: f64) -> i64 {
    (c * COST_SCALE).round() as i64
}

pub fn sup_cost(p: Point, q: Point) -> f64 {
    let d = dist_inf(p, q);
    d * d
}

pub fn euclid_cost(p: Point, q: Point) -> f64 {
    let (dx, dy) = (q.x - p.x, q.y - p.y);
    dx * dx + dy * dy
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub i: usize,
    pub j: usize,
    pub mass: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportPlan {
    pub entries: Vec<PlanEntry>,
    pub sources: Vec<Point>,
    pub targets: Vec<Point>,
    /// `Σ mass · d_∞²`.
    pub cost_value: f64,
}

impl TransportPlan {
    pub fn new(entries: Vec<PlanEntry>, sources: Vec<Point>, targets: Vec<Point>) -> Self {
        let cost_value = entries.iter().map(|e| e.mass * e.cost).sum();
        TransportPlan { entries, sources, targets, cost_value }
    }

    pub fn source_marginal(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.sources.len()];
        for e in &self.entries {
            m[e.i] += e.mass;
        }
        m
    }

    pub fn target_marginal(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.targets.len()];
        for e in &self.entries {
            m[e.j] += e.mass;
        }
        m
    }

    /// CSV with columns `i, j, mass, cost`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for e in &self.entries {
            w.serialize(e)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R, sources: Vec<Point>, targets: Vec<Point>) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let entries = r.deserialize().collect::<std::result::Result<Vec<PlanEntry>, _>>()?;
        Ok(TransportPlan::new(entries, sources, targets))
    }
}

/// Integer data of a transport problem between two measures: supports with
/// positive rounded mass, and scaled cost matrices.
pub(crate) struct IntegerInstance {
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
    pub problem: TransportProblem,
}

pub(crate) fn integer_instance(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<IntegerInstance> {
    let (tm, tn) = (mu.total(), nu.total());
    if (tm - tn).abs() > 1e-9 {
        return Err(LabError::Infeasible(format!("total masses differ: {tm} vs {tn}")));
    }
    let su = quantize(&mu.weights(), MASS_UNITS)?;
    let sv = quantize(&nu.weights(), MASS_UNITS)?;
    let src: Vec<usize> = (0..su.len()).filter(|&i| su[i] > 0).collect();
    let dst: Vec<usize> = (0..sv.len()).filter(|&j| sv[j] > 0).collect();
    let mut cost = Vec::with_capacity(src.len() * dst.len());
    for &i in &src {
        let p = mu.atoms[i].point();
        for &j in &dst {
            cost.push(scale_cost(sup_cost(p, nu.atoms[j].point())));
        }
    }
    let problem = TransportProblem::new(
        src.iter().map(|&i| su[i]).collect(),
        dst.iter().map(|&j| sv[j]).collect(),
        cost,
    )?;
    Ok(IntegerInstance { src, dst, problem })
}

pub(crate) fn plan_from_entries(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    inst: &IntegerInstance,
    entries: impl Iterator<Item = (usize, usize, i64)>,
) -> TransportPlan {
    let entries = entries
        .map(|(a, b, f)| {
            let (i, j) = (inst.src[a], inst.dst[b]);
            PlanEntry {
                i,
                j,
                mass: f as f64 / MASS_UNITS as f64,
                cost: sup_cost(mu.atoms[i].point(), nu.atoms[j].point()),
            }
        })
        .collect();
    TransportPlan::new(entries, mu.points(), nu.points())
}

/// Exact `W₂²` for the cost `d_∞²` and an optimal plan.
pub fn wasserstein(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<(f64, TransportPlan)> {
    let inst = integer_instance(mu, nu)?;
    let sol = inst.problem.solve()?;
    let m = inst.dst.len();
    let entries = sol
        .flow
        .iter()
        .enumerate()
        .filter(|(_, &f)| f > 0)
        .map(|(a, &f)| (a / m, a % m, f));
    let plan = plan_from_entries(mu, nu, &inst, entries);
    Ok((plan.cost_value, plan))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub pairs_checked: usize,
    pub triples_checked: usize,
    pub violations: usize,
    /// Smallest `Σ c(zᵢ, w_σ(i)) - Σ c(zᵢ, wᵢ)` seen; negative means a
    /// cheaper rearrangement exists.
    pub worst_margin: f64,
}

pub const MONOTONICITY_TOLERANCE: f64 = 1e-9;

/// Checks 2- and 3-cycles of the plan's support. All pairs are checked
/// when there are at most `sample_count` of them; otherwise `sample_count`
/// pairs and triples are drawn with the given seed.
pub fn check_cyclical_monotonicity(plan: &TransportPlan, sample_count: usize, seed: u64) -> MonotonicityReport {
    let support: Vec<(Point, Point)> = plan
        .entries
        .iter()
        .filter(|e| e.mass > 0.0)
        .map(|e| (plan.sources[e.i], plan.targets[e.j]))
        .collect();
    let n = support.len();
    let mut rep = MonotonicityReport { pairs_checked: 0, triples_checked: 0, violations: 0, worst_margin: f64::INFINITY };
    let record = |margin: f64, rep: &mut MonotonicityReport| {
        if margin < rep.worst_margin {
            rep.worst_margin = margin;
        }
        if margin < -MONOTONICITY_TOLERANCE {
            rep.violations += 1;
        }
    };
    let pair = |a: usize, b: usize| {
        let (z1, w1) = support[a];
        let (z2, w2) = support[b];
        sup_cost(z1, w2) + sup_cost(z2, w1) - sup_cost(z1, w1) - sup_cost(z2, w2)
    };
    let triple = |a: usize, b: usize, c: usize| {
        let s = [support[a], support[b], support[c]];
        let base: f64 = s.iter().map(|&(z, w)| sup_cost(z, w)).sum();
        let shift1 = sup_cost(s[0].0, s[1].1) + sup_cost(s[1].0, s[2].1) + sup_cost(s[2].0, s[0].1);
        let shift2 = sup_cost(s[0].0, s[2].1) + sup_cost(s[1].0, s[0].1) + sup_cost(s[2].0, s[1].1);
        (shift1 - base).min(shift2 - base)
    };
    if n < 2 {
        rep.worst_margin = 0.0;
        return rep;
    }
    if n * (n - 1) / 2 <= sample_count {
        for a in 0..n {
            for b in a + 1..n {
                record(pair(a, b), &mut rep);
                rep.pairs_checked += 1;
            }
        }
    } else {
        let mut rng = sampling::rng(seed);
        for _ in 0..sample_count {
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            if a != b {
                record(pair(a, b), &mut rep);
                rep.pairs_checked += 1;
            }
        }
    }
    if n >= 3 {
        let mut rng = sampling::rng(seed ^ 0x9e37_79b9_7f4a_7c15);
        for _ in 0..sample_count {
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            let c = rng.random_range(0..n);
            if a != b && b != c && a != c {
                record(triple(a, b, c), &mut rep);
                rep.triples_checked += 1;
            }
        }
    }
    rep
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{c_k, SpaceParams};

    fn space(eps: f64) -> Space {
        Space::new(SpaceParams::new(0.01, 1.0, eps).unwrap()).unwrap()
    }

    #[test]
    fn flat_strip_fiber_weights() {
        let s = space(0.001);
        let mu = strip_measure(&s, -0.6, -0.4, 4, 5).unwrap();
        let col: Vec<f64> = mu.atoms.iter().filter(|a| a.col == 0).map(|a| a.weight).collect();
        let exact: Vec<f64> = (0..5).map(|r| gaussian_mass(1.0, r as f64 / 5.0, (r + 1) as f64 / 5.0)).collect();
        for r in 1..5 {
            assert!((col[r] / col[0] - exact[r] / exact[0]).abs() < 1e-14);
        }
        assert!((mu.total() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn counterexample_initial_measure_has_unit_mass() {
        let s = space(0.0);
        let ck = s.c_k;
        let (_, total) = discretize_with_total(&s, |_| 4.0 / ck, Grid::new(-0.5, -0.25, 50, 4).unwrap()).unwrap();
        assert!((total - 1.0).abs() < 1e-12, "{total}");
    }

    #[test]
    fn single_cell() {
        let s = space(0.001);
        let mu = strip_measure(&s, -0.5, -0.4, 1, 1).unwrap();
        assert_eq!(mu.len(), 1);
        assert_eq!(mu.atoms[0].weight, 1.0);
    }

    #[test]
    fn x_marginal_of_reference_measure() {
        let s = space(0.001);
        let g = Grid::new(-0.2, 0.3, 25, 7).unwrap();
        let cells = grid_cells(&s, &g);
        for c in 0..g.nx {
            let col: f64 = cells.iter().filter(|a| a.col == c).map(|a| a.ref_mass).sum();
            assert!((col / g.dx() - c_k(1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn entropy_of_normalized_restriction() {
        let s = space(0.001);
        let mu = strip_measure(&s, -0.5, -0.25, 40, 6).unwrap();
        let m_a = 0.25 * s.c_k;
        assert!((entropy(&mu).unwrap() + m_a.ln()).abs() < 1e-12);
    }

    #[test]
    fn entropy_of_counterexample_start() {
        let s = space(0.0);
        let mu = strip_measure(&s, -0.5, -0.25, 40, 6).unwrap();
        assert!((entropy(&mu).unwrap() - (4.0 / s.c_k).ln()).abs() < 1e-12);
        assert!(((4.0 / s.c_k).ln() - 1.6783).abs() < 1e-4);
    }

    #[test]
    fn entropy_zero_reference_mass() {
        let mut mu = DiscreteMeasure::from_points(0.001, &[(Point::new(0.0, 0.0), 1.0)]);
        mu.atoms[0].ref_mass = 0.0;
        assert_eq!(entropy(&mu), Err(LabError::ZeroReferenceMass { index: 0 }));
    }

    #[test]
    fn quantize_sums_exactly() {
        let w = [0.1, 0.2, 0.3, 0.4];
        let u = quantize(&w, 10).unwrap();
        assert_eq!(u, vec![1, 2, 3, 4]);
        let w = [1.0 / 3.0; 3];
        let u = quantize(&w, 10).unwrap();
        assert_eq!(u.iter().sum::<i64>(), 10);
        assert_eq!(u, vec![4, 3, 3]);
    }

    #[test]
    fn identity_and_dirac() {
        let s = space(0.001);
        let mu = strip_measure(&s, -0.5, -0.45, 3, 2).unwrap();
        let (v, plan) = wasserstein(&mu, &mu).unwrap();
        assert_eq!(v, 0.0);
        assert!(plan.entries.iter().all(|e| e.i == e.j));
        let p = DiscreteMeasure::from_points(0.001, &[(Point::new(0.0, 0.0), 1.0)]);
        let q = DiscreteMeasure::from_points(0.001, &[(Point::new(0.3, 0.001), 1.0)]);
        let (v, plan) = wasserstein(&p, &q).unwrap();
        assert_eq!(plan.entries.len(), 1);
        assert!((v - 0.09).abs() < 1e-15);
    }

    #[test]
    fn translated_strip() {
        let s = space(0.001);
        let mu = strip_measure(&s, -0.8, -0.6, 20, 5).unwrap();
        let nu = strip_measure(&s, -0.7, -0.5, 20, 5).unwrap();
        let (v, plan) = wasserstein(&mu, &nu).unwrap();
        assert!((v - 0.01).abs() < 1e-12, "{v}");
        let rep = check_cyclical_monotonicity(&plan, 100_000, 1);
        assert_eq!(rep.violations, 0);
        let (w, _) = wasserstein(&nu, &mu).unwrap();
        assert!((v - w).abs() < 1e-10);
    }

    #[test]
    fn swapped_entries_violate_monotonicity() {
        let a = Point::new(-0.8, 0.0);
        let b = Point::new(-0.6, 0.0);
        let plan = TransportPlan::new(
            vec![
                PlanEntry { i: 0, j: 1, mass: 0.5, cost: sup_cost(a, Point::new(-0.3, 0.0)) },
                PlanEntry { i: 1, j: 0, mass: 0.5, cost: sup_cost(b, Point::new(-0.5, 0.0)) },
            ],
            vec![a, b],
            vec![Point::new(-0.5, 0.0), Point::new(-0.3, 0.0)],
        );
        let rep = check_cyclical_monotonicity(&plan, 10, 0);
        assert!(rep.violations >= 1);
    }

    #[test]
    fn json_and_csv_round_trip() {
        let s = space(0.001);
        let mu = strip_measure(&s, -0.05, 0.07, 7, 3).unwrap();
        let back = DiscreteMeasure::from_json(&mu.to_json().unwrap()).unwrap();
        assert_eq!(back, mu);
        let nu = strip_measure(&s, 0.1, 0.2, 5, 3).unwrap();
        let (_, plan) = wasserstein(&mu, &nu).unwrap();
        let mut buf = Vec::new();
        plan.write_csv(&mut buf).unwrap();
        let again = TransportPlan::read_csv(&buf[..], plan.sources.clone(), plan.targets.clone()).unwrap();
        assert_eq!(again, plan);
    }

    #[test]
    fn singular_columns_collapse() {
        let s = space(0.0);
        let mu = strip_measure(&s, -0.5, -0.25, 10, 4).unwrap();
        assert_eq!(mu.len(), 10);
        assert!(mu.atoms.iter().all(|a| a.singular && a.y == 0.0));
    }
}
