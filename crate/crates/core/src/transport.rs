//! Structured optimal transport maps: lexicographic solve, extraction of a
//! map with finite-difference partials, property checks, and closed-form
//! test transports.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::geometry::{classify_pair, PairClass, PairTag, Point, Space};
use crate::measures::{
    euclid_cost, integer_instance, plan_from_entries, scale_cost, DiscreteMeasure, Grid, TransportPlan,
};

/// A split source atom whose targets spread over more than one cell
/// neighborhood counts towards this fraction of mass.
pub const MAX_SPLIT_FRACTION: f64 = 0.05;

pub const STENCIL_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Partials {
    pub d1x: f64,
    pub d1y: f64,
    pub d2x: f64,
    pub d2y: f64,
}

impl Partials {
    pub const IDENTITY: Partials = Partials { d1x: 1.0, d1y: 0.0, d2x: 0.0, d2y: 1.0 };

    /// Determinant of the Jacobian matrix.
    pub fn det(&self) -> f64 {
        self.d1x * self.d2y - self.d1y * self.d2x
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapEntry {
    pub source: usize,
    pub point: Point,
    pub weight: f64,
    pub target: Point,
    pub partials: Partials,
    pub class: PairClass,
    pub col: usize,
    pub row: usize,
    /// Source atom coupled to targets outside one cell neighborhood.
    pub split: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportMap {
    pub entries: Vec<MapEntry>,
    pub grid: Option<Grid>,
    pub split_fraction: f64,
    /// Largest deviation of the plan marginals from the input weights.
    pub pushforward_error: f64,
    /// Partials are closed-form rather than finite differences.
    pub exact_partials: bool,
}

impl TransportMap {
    fn lookup(&self) -> HashMap<(usize, usize), usize> {
        self.entries.iter().enumerate().map(|(k, e)| ((e.col, e.row), k)).collect()
    }

    pub fn pairs(&self) -> Vec<(Point, Point)> {
        self.entries.iter().map(|e| (e.point, e.target)).collect()
    }

    /// Pushforward of the source weights as a point cloud.
    pub fn image(&self) -> Vec<(Point, f64)> {
        self.entries.iter().map(|e| (e.target, e.weight)).collect()
    }
}

fn reject_singular(mu: &DiscreteMeasure) -> Result<()> {
    if mu.atoms.iter().any(|a| a.singular && a.weight > 0.0) {
        return Err(LabError::Inadmissible("structured maps need absolutely continuous measures".into()));
    }
    Ok(())
}

/// Two-stage solve: `Σ d_∞² π` first, then `Σ |Δ|²` (squared Euclidean)
/// over the first-stage optimal face. Returns the plan and its map form.
pub fn solve_structured(
    space: &Space,
    mu0: &DiscreteMeasure,
    mu1: &DiscreteMeasure,
) -> Result<(TransportPlan, TransportMap)> {
    reject_singular(mu0)?;
    reject_singular(mu1)?;
    let inst = integer_instance(mu0, mu1)?;
    let mut secondary = Vec::with_capacity(inst.src.len() * inst.dst.len());
    for &i in &inst.src {
        let p = mu0.atoms[i].point();
        for &j in &inst.dst {
            secondary.push(scale_cost(euclid_cost(p, mu1.atoms[j].point())));
        }
    }
    let lex = inst.problem.solve_lexicographic(&secondary)?;
    let plan = plan_from_entries(mu0, mu1, &inst, lex.entries.iter().copied());
    let map = extract_map(space, mu0, mu1, &plan)?;
    Ok((plan, map))
}

fn neighbors_share_cell(atoms: &[(usize, usize)]) -> bool {
    let cmin = atoms.iter().map(|a| a.0).min().unwrap();
    let cmax = atoms.iter().map(|a| a.0).max().unwrap();
    let rmin = atoms.iter().map(|a| a.1).min().unwrap();
    let rmax = atoms.iter().map(|a| a.1).max().unwrap();
    cmax - cmin <= 1 && rmax - rmin <= 1
}

/// Converts a plan to map form. Each source atom goes to the barycenter of
/// its targets; partials come from central differences over grid
/// neighbors (one-sided at the boundary, NaN when no neighbor exists).
pub fn extract_map(
    space: &Space,
    mu0: &DiscreteMeasure,
    mu1: &DiscreteMeasure,
    plan: &TransportPlan,
) -> Result<TransportMap> {
    let mut by_source: Vec<Vec<(usize, f64)>> = vec![Vec::new(); mu0.len()];
    for e in &plan.entries {
        by_source[e.i].push((e.j, e.mass));
    }
    let mut split_mass = 0.0;
    let mut entries = Vec::new();
    for (i, targets) in by_source.iter().enumerate() {
        if targets.is_empty() {
            continue;
        }
        let mass: f64 = targets.iter().map(|t| t.1).sum();
        let mut tx = 0.0;
        let mut ty = 0.0;
        for &(j, m) in targets {
            tx += m * mu1.atoms[j].x;
            ty += m * mu1.atoms[j].y;
        }
        let target = if targets.len() == 1 {
            mu1.atoms[targets[0].0].point()
        } else {
            Point::new(tx / mass, ty / mass)
        };
        let split = if targets.len() > 1 {
            let cells: Vec<(usize, usize)> = targets.iter().map(|&(j, _)| (mu1.atoms[j].col, mu1.atoms[j].row)).collect();
            mu1.grid.is_none() || !neighbors_share_cell(&cells)
        } else {
            false
        };
        if split {
            split_mass += mass;
        }
        let a = &mu0.atoms[i];
        entries.push(MapEntry {
            source: i,
            point: a.point(),
            weight: a.weight,
            target,
            partials: Partials { d1x: f64::NAN, d1y: f64::NAN, d2x: f64::NAN, d2y: f64::NAN },
            class: classify_pair(a.point(), target),
            col: a.col,
            row: a.row,
            split,
        });
    }
    let total = mu0.total();
    let split_fraction = split_mass / total;
    if split_fraction > MAX_SPLIT_FRACTION {
        return Err(LabError::StructuredMapUnavailable { split_fraction });
    }
    let mut pushforward_error: f64 = 0.0;
    for (m, a) in plan.source_marginal().iter().zip(&mu0.atoms) {
        pushforward_error = pushforward_error.max((m - a.weight).abs());
    }
    for (m, a) in plan.target_marginal().iter().zip(&mu1.atoms) {
        pushforward_error = pushforward_error.max((m - a.weight).abs());
    }
    let mut map = TransportMap {
        entries,
        grid: mu0.grid,
        split_fraction,
        pushforward_error,
        exact_partials: false,
    };
    if let Some(grid) = mu0.grid {
        fill_partials(space, &grid, &mut map)?;
    }
    Ok(map)
}

fn difference(lo: Option<(f64, Point)>, mid: (f64, Point), hi: Option<(f64, Point)>) -> (f64, f64) {
    let (a, b) = match (lo, hi) {
        (Some(l), Some(h)) => (l, h),
        (Some(l), None) => (l, mid),
        (None, Some(h)) => (mid, h),
        (None, None) => return (f64::NAN, f64::NAN),
    };
    let d = b.0 - a.0;
    ((b.1.x - a.1.x) / d, (b.1.y - a.1.y) / d)
}

fn fill_partials(space: &Space, grid: &Grid, map: &mut TransportMap) -> Result<()> {
    let index = map.lookup();
    let ny = grid.ny as f64;
    let u_of = |r: usize| (r as f64 + 0.5) / ny;
    let mut out = Vec::with_capacity(map.entries.len());
    for e in &map.entries {
        let at = |c: Option<usize>, r: Option<usize>| -> Option<&MapEntry> {
            index.get(&(c?, r?)).map(|&k| &map.entries[k])
        };
        let left = at(e.col.checked_sub(1), Some(e.row)).map(|n| (n.point.x, n.target));
        let right = at(Some(e.col + 1), Some(e.row)).map(|n| (n.point.x, n.target));
        let down = at(Some(e.col), e.row.checked_sub(1)).map(|n| (u_of(n.row), n.target));
        let up = at(Some(e.col), Some(e.row + 1)).map(|n| (u_of(n.row), n.target));
        let (t1_xu, t2_xu) = difference(left, (e.point.x, e.target), right);
        let (t1_u, t2_u) = difference(down, (u_of(e.row), e.target), up);
        let pv = space.profile.eval(e.point.x)?;
        let u = u_of(e.row);
        let (d1y, d2y) = (t1_u / pv.f, t2_u / pv.f);
        let slope = u * pv.df;
        let (d1x, d2x) = if slope == 0.0 {
            (t1_xu, t2_xu)
        } else {
            (t1_xu - slope * d1y, t2_xu - slope * d2y)
        };
        out.push(Partials { d1x, d1y, d2x, d2y });
    }
    for (e, p) in map.entries.iter_mut().zip(out) {
        e.partials = p;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyCheck {
    pub property: String,
    pub worst_violation: f64,
    pub tolerance: f64,
    pub location: Option<Point>,
    pub pass: bool,
}

struct Worst {
    value: f64,
    at: Option<Point>,
}

impl Worst {
    fn new() -> Self {
        Worst { value: 0.0, at: None }
    }

    fn see(&mut self, v: f64, p: Point) {
        if v > self.value {
            self.value = v;
            self.at = Some(p);
        }
    }

    fn check(self, name: &str, tol: f64) -> PropertyCheck {
        PropertyCheck { property: name.into(), worst_violation: self.value, tolerance: tol, location: self.at, pass: self.value <= tol }
    }
}

/// Worst violations of the structural properties of the map, evaluated on
/// adjacent-atom stencils. Local-constancy violations are divided by the
/// cell size.
pub fn verify_map_properties(space: &Space, map: &TransportMap) -> Vec<PropertyCheck> {
    let index = map.lookup();
    let h = map.grid.map(|g| g.cell_size(space)).unwrap_or(1.0);
    let mut push = Worst::new();
    push.value = map.pushforward_error;
    let mut d1x = Worst::new();
    let mut d2y = Worst::new();
    let mut t1_const = Worst::new();
    let mut t2_const = Worst::new();
    let mut fiber = Worst::new();
    for e in &map.entries {
        let tag = e.class.tag;
        if tag == PairTag::V || tag.is_horizontal() {
            if e.partials.d1x.is_finite() {
                d1x.see(-e.partials.d1x, e.point);
            }
            if e.partials.d2y.is_finite() {
                d2y.see(-e.partials.d2y, e.point);
            }
        }
        if tag.is_horizontal() {
            if let Some(&k) = index.get(&(e.col, e.row + 1)) {
                let n = &map.entries[k];
                if n.class.tag.is_horizontal() {
                    t1_const.see((n.target.x - e.target.x).abs() / h, e.point);
                    let slope = (n.target.y - e.target.y) / (n.point.y - e.point.y);
                    fiber.see(-slope, e.point);
                }
            }
        }
        if tag == PairTag::V {
            if let Some(&k) = index.get(&(e.col + 1, e.row)) {
                let n = &map.entries[k];
                if n.class.tag == PairTag::V {
                    t2_const.see((n.target.y - e.target.y).abs() / h, e.point);
                }
            }
        }
    }
    vec![
        push.check("pushforward", 1e-9),
        d1x.check("dT1_dx_nonnegative", STENCIL_TOLERANCE),
        d2y.check("dT2_dy_nonnegative", STENCIL_TOLERANCE),
        t1_const.check("T1_locally_constant_in_y_on_H", STENCIL_TOLERANCE),
        t2_const.check("T2_locally_constant_in_x_on_V", STENCIL_TOLERANCE),
        fiber.check("T2_fiber_monotone_on_H", STENCIL_TOLERANCE),
    ]
}

/// Closed-form transports with exact partials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum AnalyticFamily {
    /// `T = (x + δ, y f(x+δ)/f(x))`.
    HorizontalRescaled { delta: f64 },
    /// `T = (x, s y + o f(x))`, increasing in `y` for `s > 0`.
    VerticalMonotone { scale: f64, offset: f64 },
    /// `T = (x + δ, y + δ')`.
    Diagonal { dx: f64, dy: f64 },
}

impl AnalyticFamily {
    pub fn apply(&self, space: &Space, p: Point) -> Result<(Point, Partials)> {
        let prof = &space.profile;
        let (t, partials) = match *self {
            AnalyticFamily::HorizontalRescaled { delta } => {
                let a = prof.eval(p.x)?;
                let xt = p.x + delta;
                let b = prof.eval(xt).map_err(|_| LabError::OutsideSpace { x: xt, y: p.y })?;
                if a.f <= 0.0 {
                    return Err(LabError::SingularProfile { x: p.x });
                }
                let d2x = p.y * (b.df * a.f - b.f * a.df) / (a.f * a.f);
                (Point::new(xt, p.y * b.f / a.f), Partials { d1x: 1.0, d1y: 0.0, d2x, d2y: b.f / a.f })
            }
            AnalyticFamily::VerticalMonotone { scale, offset } => {
                if !(scale > 0.0) {
                    return Err(LabError::Parameter("vertical_monotone needs scale > 0".into()));
                }
                let a = prof.eval(p.x)?;
                (
                    Point::new(p.x, scale * p.y + offset * a.f),
                    Partials { d1x: 1.0, d1y: 0.0, d2x: offset * a.df, d2y: scale },
                )
            }
            AnalyticFamily::Diagonal { dx, dy } => (Point::new(p.x + dx, p.y + dy), Partials::IDENTITY),
        };
        if !space.contains(t) {
            return Err(LabError::OutsideSpace { x: t.x, y: t.y });
        }
        Ok((t, partials))
    }
}

impl std::str::FromStr for AnalyticFamily {
    type Err = LabError;

    /// Parses `name` or `name:a,b`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, args) = s.split_once(':').unwrap_or((s, ""));
        let vals: Vec<f64> = args
            .split(',')
            .filter(|a| !a.is_empty())
            .map(|a| a.trim().parse::<f64>().map_err(|e| LabError::Config(format!("{a}: {e}"))))
            .collect::<Result<_>>()?;
        let get = |i: usize, d: f64| vals.get(i).copied().unwrap_or(d);
        match name {
            "horizontal_rescaled" => Ok(AnalyticFamily::HorizontalRescaled { delta: get(0, 0.1) }),
            "vertical_monotone" => Ok(AnalyticFamily::VerticalMonotone { scale: get(0, 0.5), offset: get(1, 0.0) }),
            "diagonal" => Ok(AnalyticFamily::Diagonal { dx: get(0, 1e-4), dy: get(1, 1e-4) }),
            other => Err(LabError::Config(format!("unknown analytic family {other}"))),
        }
    }
}

/// Applies a closed-form transport to every positive-weight atom of `mu`.
pub fn analytic_family(family: AnalyticFamily, space: &Space, mu: &DiscreteMeasure) -> Result<TransportMap> {
    let mut entries = Vec::new();
    for (i, a) in mu.atoms.iter().enumerate() {
        if a.weight <= 0.0 {
            continue;
        }
        let (target, partials) = family.apply(space, a.point())?;
        entries.push(MapEntry {
            source: i,
            point: a.point(),
            weight: a.weight,
            target,
            partials,
            class: classify_pair(a.point(), target),
            col: a.col,
            row: a.row,
            split: false,
        });
    }
    Ok(TransportMap { entries, grid: mu.grid, split_fraction: 0.0, pushforward_error: 0.0, exact_partials: true })
}
