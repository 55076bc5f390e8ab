//! The pointwise Jacobi condition, entropy gaps along midpoint
//! interpolation, dyadic geodesics and K-convexity reports.
//!
//! Entropies of pushed-forward measures are computed from the Jacobian
//! chain: an atom of reference mass `m₀` carried by a map `S` with
//! Jacobian `J_S` gets reference mass `m₀ · J_S · m(S p) / m(p)`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::geometry::{dist_inf, PairTag, Point, Space};
use crate::lemmas::suite::x_coordinate;
use crate::measures::{entropy, wasserstein, Atom, DiscreteMeasure, Grid};
use crate::midpoint::{check_injectivity, jacobian_of_composition, midpoint, InjectivityReport};
use crate::sampling::{open_unit, ShiftedSobol};
use crate::transport::{Partials, TransportMap};

/// Condition margins above `-CONDITION_SLACK` count as satisfied.
pub const CONDITION_SLACK: f64 = 1e-12;

/// Fraction of colliding midpoint pairs tolerated before the midpoint map
/// is declared non-injective.
pub const MAX_COLLISION_FRACTION: f64 = 0.01;

pub const MAX_DEPTH: u32 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionSample {
    pub point: Point,
    pub target: Point,
    pub partials: Partials,
    pub branch: PairTag,
    /// `log(m(M) J_S)` with `S = M ∘ (id, T)`.
    pub lhs: f64,
    /// `½ log(m(T) J_T) + ½ log m(p)`.
    pub rhs: f64,
    pub margin: f64,
    /// `J_S`.
    pub jac_mid: f64,
    /// `J_T = ∂T₁/∂x · ∂T₂/∂y`.
    pub jac_map: f64,
}

fn singular(p: Point, value: f64) -> LabError {
    LabError::SingularConfiguration { x: p.x, y: p.y, value }
}

/// Evaluates both sides of the pointwise condition at `p` for a transport
/// sending `p` to `t` with the given partials.
pub fn jacobi_condition_margin(space: &Space, p: Point, t: Point, partials: &Partials) -> Result<ConditionSample> {
    if !(partials.d1x > 0.0) {
        return Err(singular(p, partials.d1x));
    }
    if !(partials.d2y > 0.0) {
        return Err(singular(p, partials.d2y));
    }
    let prof = &space.profile;
    let mid = midpoint(p, t, prof)?;
    let (s1, s2) = jacobian_of_composition(p, partials, t, prof)?;
    if !(s1 > 0.0) {
        return Err(singular(p, s1));
    }
    if !(s2 > 0.0) {
        return Err(singular(p, s2));
    }
    let lhs = space.log_density(mid.point)? + s1.ln() + s2.ln();
    let rhs = 0.5 * (space.log_density(t)? + partials.d1x.ln() + partials.d2y.ln()) + 0.5 * space.log_density(p)?;
    Ok(ConditionSample {
        point: p,
        target: t,
        partials: *partials,
        branch: mid.class.tag,
        lhs,
        rhs,
        margin: lhs - rhs,
        jac_mid: s1 * s2,
        jac_map: partials.d1x * partials.d2y,
    })
}

/// Branch groups of the condition sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SweepBranch {
    H0,
    H1,
    VD,
}

impl SweepBranch {
    pub const ALL: [SweepBranch; 3] = [SweepBranch::H0, SweepBranch::H1, SweepBranch::VD];

    pub fn name(self) -> &'static str {
        match self {
            SweepBranch::H0 => "H0",
            SweepBranch::H1 => "H1",
            SweepBranch::VD => "VD",
        }
    }

    pub fn contains(self, tag: PairTag) -> bool {
        match self {
            SweepBranch::H0 => tag == PairTag::H0,
            SweepBranch::H1 => tag == PairTag::H1,
            SweepBranch::VD => matches!(tag, PairTag::V | PairTag::D),
        }
    }
}

/// A first-order jet of a smooth transport: source, image and the
/// diagonal partials. Off-diagonal partials are zero, as for maps whose
/// first component does not depend on `y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransportJet {
    pub point: Point,
    pub target: Point,
    pub partials: Partials,
}

const JET_DIMS: usize = 8;

fn jet_from_unit(branch: SweepBranch, u: &[f64], space: &Space) -> Option<TransportJet> {
    let prof = &space.profile;
    let k = space.params.k;
    let x0 = x_coordinate(u[0], u[1], k);
    let f0 = prof.f(x0);
    let sx = if u[3] < 0.5 { 1.0 } else { -1.0 };
    let sy = if (2.0 * u[3]).fract() < 0.5 { 1.0 } else { -1.0 };
    let y0 = u[4] * f0;
    let (dx, dy) = match branch {
        SweepBranch::H0 => {
            let w = 2.0 * 10f64.powf(-4.0 * u[2]);
            (w, 0.5 * w * u[5])
        }
        SweepBranch::H1 => {
            let w = 2.0 * f0 * 10f64.powf(-3.0 * u[2]);
            (w, w * (0.5 + 0.5 * open_unit(u[5])))
        }
        SweepBranch::VD => {
            let a = f0 * 10f64.powf(-3.0 * u[2]);
            let ratio = if u[5] > 0.9 { 1.0 } else { u[5] / 0.9 };
            (a * ratio, a)
        }
    };
    let mut x1 = x0 + sx * dx;
    if !(-1.0..=1.0).contains(&x1) {
        x1 = x0 - sx * dx;
    }
    let y1 = y0 + sy * dy;
    let target = Point::new(x1, y1);
    let point = Point::new(x0, y0);
    if !space.contains(target) || point == target {
        return None;
    }
    let tag = crate::geometry::classify_pair(point, target).tag;
    if !branch.contains(tag) {
        return None;
    }
    let partials = Partials { d1x: (4.0 * u[6] - 2.0).exp(), d1y: 0.0, d2x: 0.0, d2y: (4.0 * u[7] - 2.0).exp() };
    Some(TransportJet { point, target, partials })
}

/// The first `count` admissible jets of one branch drawn from a shifted
/// Sobol stream. Jets depend on the profile only, not on `K`.
pub fn sample_jets(branch: SweepBranch, space: &Space, count: usize, seed: u64) -> Result<Vec<TransportJet>> {
    let mut jets = Vec::with_capacity(count);
    let limit = count.saturating_mul(200).max(1000);
    for (drawn, u) in ShiftedSobol::new(JET_DIMS, seed).enumerate() {
        if jets.len() == count {
            break;
        }
        if drawn >= limit {
            return Err(LabError::Inadmissible(format!(
                "only {} of {count} {} jets found in {limit} draws",
                jets.len(),
                branch.name()
            )));
        }
        if let Some(j) = jet_from_unit(branch, &u, space) {
            jets.push(j);
        }
    }
    Ok(jets)
}

pub fn evaluate_jets(space: &Space, jets: &[TransportJet]) -> Result<Vec<ConditionSample>> {
    jets.par_iter().map(|j| jacobi_condition_margin(space, j.point, j.target, &j.partials)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub branch: SweepBranch,
    pub evaluated: usize,
    pub failures: usize,
    pub min_margin: f64,
    pub worst_point: Option<Point>,
}

impl SweepSummary {
    pub fn pass(&self) -> bool {
        self.failures == 0 && self.evaluated > 0
    }
}

pub fn summarize(branch: SweepBranch, samples: &[ConditionSample]) -> SweepSummary {
    let mut s = SweepSummary { branch, evaluated: samples.len(), failures: 0, min_margin: f64::INFINITY, worst_point: None };
    for c in samples {
        if c.margin < -CONDITION_SLACK {
            s.failures += 1;
        }
        if c.margin < s.min_margin {
            s.min_margin = c.margin;
            s.worst_point = Some(c.point);
        }
    }
    s
}

/// Writes `(x, y, branch, lhs, rhs, margin)` rows.
pub fn write_sweep<W: Write>(samples: &[ConditionSample], out: W) -> Result<()> {
    #[derive(Serialize)]
    struct Row {
        x: f64,
        y: f64,
        branch: &'static str,
        lhs: f64,
        rhs: f64,
        margin: f64,
    }
    let mut w = csv::Writer::from_writer(out);
    for c in samples {
        w.serialize(Row { x: c.point.x, y: c.point.y, branch: c.branch.as_str(), lhs: c.lhs, rhs: c.rhs, margin: c.margin })?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KCalibration {
    pub big_k: f64,
    pub evaluations: usize,
    pub summaries: Vec<SweepSummary>,
}

/// Smallest `K ∈ [1, 10⁴]` (to relative precision `1e-3`) for which the
/// condition holds on every sampled jet of every branch, assuming the
/// pass set is an up-ray.
pub fn calibrate_big_k(space: &Space, per_branch: usize, seed: u64) -> Result<KCalibration> {
    let mut jets = Vec::new();
    for (b, branch) in SweepBranch::ALL.into_iter().enumerate() {
        jets.push((branch, sample_jets(branch, space, per_branch, seed.wrapping_add(b as u64))?));
    }
    let mut evaluations = 0;
    let mut check = |big_k: f64| -> Result<(bool, Vec<SweepSummary>)> {
        evaluations += 1;
        let s = Space::new(space.params.with_big_k(big_k)?)?;
        let mut sums = Vec::new();
        for (branch, js) in &jets {
            sums.push(summarize(*branch, &evaluate_jets(&s, js)?));
        }
        Ok((sums.iter().all(SweepSummary::pass), sums))
    };
    let (lo_ok, lo_sums) = check(1.0)?;
    if lo_ok {
        return Ok(KCalibration { big_k: 1.0, evaluations, summaries: lo_sums });
    }
    let (hi_ok, mut best) = check(1e4)?;
    if !hi_ok {
        return Err(LabError::Inadmissible("condition fails at K = 1e4".into()));
    }
    let (mut lo, mut hi) = (1.0f64, 1e4f64);
    while hi / lo > 1.0 + 1e-3 {
        let mid = (lo * hi).sqrt();
        let (ok, sums) = check(mid)?;
        if ok {
            hi = mid;
            best = sums;
        } else {
            lo = mid;
        }
    }
    Ok(KCalibration { big_k: hi, evaluations, summaries: best })
}

/// Per-atom entropy data for one source atom carried by a map.
struct Carried {
    weight: f64,
    ref0: f64,
    ref_mid: f64,
    ref_target: f64,
}

fn carry(space: &Space, mu0: &DiscreteMeasure, map: &TransportMap) -> Result<(Vec<Carried>, Vec<ConditionSample>)> {
    let samples: Vec<ConditionSample> = map
        .entries
        .par_iter()
        .map(|e| jacobi_condition_margin(space, e.point, e.target, &e.partials))
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(samples.len());
    for (e, c) in map.entries.iter().zip(&samples) {
        let ref0 = mu0.atoms[e.source].ref_mass;
        let lp = space.log_density(e.point)?;
        let mid = midpoint(e.point, e.target, &space.profile)?.point;
        out.push(Carried {
            weight: e.weight,
            ref0,
            ref_mid: ref0 * c.jac_mid * (space.log_density(mid)? - lp).exp(),
            ref_target: ref0 * c.jac_map * (space.log_density(e.target)? - lp).exp(),
        });
    }
    Ok((out, samples))
}

fn plogp(w: f64, r: f64) -> f64 {
    if w > 0.0 {
        w * (w / r).ln()
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyGap {
    pub ent0: f64,
    pub ent_mid: f64,
    /// Entropy of the pushforward through the Jacobian chain.
    pub ent1: f64,
    /// Entropy of the target measure as given, when available.
    pub ent1_direct: Option<f64>,
    /// `ent_mid - ½ ent0 - ½ ent1`.
    pub gap: f64,
    /// Weighted mean of the pointwise condition margins.
    pub mean_margin: f64,
    pub min_margin: f64,
    pub injectivity: InjectivityReport,
}

fn injectivity(space: &Space, map: &TransportMap) -> Result<InjectivityReport> {
    let (hx, ny) = map.grid.map(|g| (g.dx(), g.ny)).unwrap_or((f64::MIN_POSITIVE, 1));
    let rep = check_injectivity(&map.pairs(), &space.profile, hx, ny)?;
    if rep.collisions as f64 > MAX_COLLISION_FRACTION * rep.pairs as f64 {
        return Err(LabError::Collision { collisions: rep.collisions });
    }
    Ok(rep)
}

fn gap_with(space: &Space, mu0: &DiscreteMeasure, map: &TransportMap, f: Option<&[f64]>) -> Result<EntropyGap> {
    let injectivity = injectivity(space, map)?;
    let (carried, samples) = carry(space, mu0, map)?;
    let (mut e0, mut em, mut e1, mut mean, mut min) = (0.0, 0.0, 0.0, 0.0, f64::INFINITY);
    for ((c, s), e) in carried.iter().zip(&samples).zip(&map.entries) {
        let w = match f {
            Some(f) => c.weight * f[e.source],
            None => c.weight,
        };
        e0 += plogp(w, c.ref0);
        em += plogp(w, c.ref_mid);
        e1 += plogp(w, c.ref_target);
        mean += w * s.margin;
        if w > 0.0 {
            min = f64::min(min, s.margin);
        }
    }
    Ok(EntropyGap {
        ent0: e0,
        ent_mid: em,
        ent1: e1,
        ent1_direct: None,
        gap: em - 0.5 * e0 - 0.5 * e1,
        mean_margin: mean,
        min_margin: min,
        injectivity,
    })
}

/// `Ent(μ_½) - ½ Ent(μ₀) - ½ Ent(μ₁)` where `μ_½` is the image of `μ₀`
/// under `M ∘ (id, T)`.
pub fn midpoint_entropy_gap(space: &Space, mu0: &DiscreteMeasure, mu1: &DiscreteMeasure, map: &TransportMap) -> Result<EntropyGap> {
    let mut g = gap_with(space, mu0, map, None)?;
    g.ent1_direct = Some(entropy(mu1)?);
    Ok(g)
}

/// The gap for `(fμ₀, [M ∘ (id, T)]_#(fμ₀), T_#(fμ₀))`. `f` is indexed by
/// the atoms of `mu0` and must satisfy `Σ f w = 1`.
pub fn weighted_entropy_gap(space: &Space, mu0: &DiscreteMeasure, map: &TransportMap, f: &[f64]) -> Result<EntropyGap> {
    check_weighting(mu0, f)?;
    gap_with(space, mu0, map, Some(f))
}

fn check_weighting(mu0: &DiscreteMeasure, f: &[f64]) -> Result<()> {
    if f.len() != mu0.len() {
        return Err(LabError::Parameter(format!("weighting has {} values for {} atoms", f.len(), mu0.len())));
    }
    if f.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(LabError::Parameter("weighting must be finite and nonnegative".into()));
    }
    let total: f64 = f.iter().zip(&mu0.atoms).map(|(v, a)| v * a.weight).sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(LabError::Parameter(format!("weighted mass is {total}, not 1")));
    }
    Ok(())
}

/// Normalizes a nonnegative function on the atoms of `mu` so that
/// `Σ f w = 1`.
pub fn normalize_weighting(mu: &DiscreteMeasure, g: impl Fn(&Atom) -> f64) -> Result<Vec<f64>> {
    let raw: Vec<f64> = mu.atoms.iter().map(&g).collect();
    let total: f64 = raw.iter().zip(&mu.atoms).map(|(v, a)| v * a.weight).sum();
    if !(total > 0.0) {
        return Err(LabError::Parameter("weighting vanishes on the support".into()));
    }
    Ok(raw.into_iter().map(|v| v / total).collect())
}

/// One path of a geodesic family: the source atom and its positions at
/// the dyadic times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub source: usize,
    pub weight: f64,
    pub points: Vec<Point>,
    /// Reference mass carried along the path (Jacobian chain).
    pub ref_masses: Vec<f64>,
    /// Diagonal Jacobian factors `(∂G₁/∂x, ∂G₂/∂y)` at each time.
    pub jacobians: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeodesicFamily {
    pub depth: u32,
    pub times: Vec<f64>,
    pub snapshots: Vec<DiscreteMeasure>,
    pub paths: Vec<PathRecord>,
    /// Values of the reweighting on the paths, if any.
    pub weighting: Option<Vec<f64>>,
    /// `Σ w d_∞(p, T p)²` under the current weighting.
    pub w2_squared: f64,
    /// Largest `|d_∞(G_j, G_{j+1}) - 2⁻ⁿ d_∞(p, T p)|`.
    pub speed_deviation: f64,
    /// Largest relative excess of the induced cost over the exact discrete
    /// optimum between consecutive snapshots, when checked.
    pub optimality_gap: Option<f64>,
    /// When set, snapshots are the path points binned onto these grids
    /// instead of one atom per path carrying its chain reference mass.
    pub grids: Option<Vec<Grid>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GeodesicOptions {
    /// Re-solve the exact transport between consecutive snapshots and
    /// compare with the induced cost.
    pub lp_check: bool,
}

type RefinedPath = (Vec<Point>, Vec<(f64, f64)>);

fn dyadic_times(depth: u32) -> Vec<f64> {
    let n = 1usize << depth;
    (0..=n).map(|j| j as f64 / n as f64).collect()
}

fn refine_path(space: &Space, p: Point, t: Point, partials: &Partials, depth: u32) -> Result<RefinedPath> {
    let n = 1usize << depth;
    let mut pts = vec![Point::default(); n + 1];
    let mut jac = vec![(0.0, 0.0); n + 1];
    pts[0] = p;
    pts[n] = t;
    jac[0] = (1.0, 1.0);
    jac[n] = (partials.d1x, partials.d2y);
    for level in 0..depth {
        let step = n >> level;
        let half = step / 2;
        for a in (0..n).step_by(step) {
            let b = a + step;
            let (qa, qb) = (pts[a], pts[b]);
            let (ja, jb) = (jac[a], jac[b]);
            let local = Partials { d1x: jb.0 / ja.0, d1y: 0.0, d2x: 0.0, d2y: jb.1 / ja.1 };
            let m = midpoint(qa, qb, &space.profile)?.point;
            if !space.contains(m) {
                return Err(LabError::OutsideSpace { x: m.x, y: m.y });
            }
            let (s1, s2) = jacobian_of_composition(qa, &local, qb, &space.profile)?;
            if !(s1 > 0.0 && s2 > 0.0) {
                return Err(singular(qa, s1.min(s2)));
            }
            pts[a + half] = m;
            jac[a + half] = (s1 * ja.0, s2 * ja.1);
        }
    }
    Ok((pts, jac))
}

/// Builds `G_n` by repeated midpoint refinement of `(id, T)` and the
/// snapshots `(e_r)_# μ₀` at `r = j / 2ⁿ`.
pub fn build_dyadic_geodesic(
    space: &Space,
    mu0: &DiscreteMeasure,
    map: &TransportMap,
    depth: u32,
    options: GeodesicOptions,
) -> Result<GeodesicFamily> {
    if depth > MAX_DEPTH {
        return Err(LabError::Parameter(format!("depth {depth} exceeds {MAX_DEPTH}")));
    }
    let paths: Vec<PathRecord> = map
        .entries
        .par_iter()
        .map(|e| {
            if !(e.partials.d1x > 0.0 && e.partials.d2y > 0.0) {
                return Err(singular(e.point, e.partials.d1x.min(e.partials.d2y)));
            }
            let (points, jacobians) = refine_path(space, e.point, e.target, &e.partials, depth)?;
            let ref0 = mu0.atoms[e.source].ref_mass;
            let lp = space.log_density(e.point)?;
            let ref_masses = points
                .iter()
                .zip(&jacobians)
                .map(|(q, j)| Ok(ref0 * j.0 * j.1 * (space.log_density(*q)? - lp).exp()))
                .collect::<Result<_>>()?;
            Ok(PathRecord { source: e.source, weight: e.weight, points, ref_masses, jacobians })
        })
        .collect::<Result<_>>()?;
    let mut fam = GeodesicFamily {
        depth,
        times: dyadic_times(depth),
        snapshots: Vec::new(),
        paths,
        weighting: None,
        w2_squared: 0.0,
        speed_deviation: 0.0,
        optimality_gap: None,
        grids: None,
    };
    fam.speed_deviation = speed_deviation(&fam);
    fam.rebuild_snapshots(space)?;
    if options.lp_check {
        fam.optimality_gap = Some(optimality_gap(&fam)?);
    }
    Ok(fam)
}

pub(crate) fn speed_deviation(fam: &GeodesicFamily) -> f64 {
    let n = (1usize << fam.depth) as f64;
    let mut worst = 0.0f64;
    for p in &fam.paths {
        let total = dist_inf(p.points[0], *p.points.last().unwrap());
        for w in p.points.windows(2) {
            worst = worst.max((dist_inf(w[0], w[1]) - total / n).abs());
        }
    }
    worst
}

fn optimality_gap(fam: &GeodesicFamily) -> Result<f64> {
    let mut worst = 0.0f64;
    for j in 0..fam.snapshots.len() - 1 {
        let (a, b) = (&fam.snapshots[j], &fam.snapshots[j + 1]);
        let induced: f64 = a.atoms.iter().zip(&b.atoms).map(|(p, q)| p.weight * dist_inf(p.point(), q.point()).powi(2)).sum();
        let (w2, _) = wasserstein(a, b)?;
        if induced > 0.0 {
            worst = worst.max((induced - w2) / induced);
        }
    }
    Ok(worst)
}

impl GeodesicFamily {
    fn path_weight(&self, i: usize) -> f64 {
        let p = &self.paths[i];
        match &self.weighting {
            Some(f) => p.weight * f[i],
            None => p.weight,
        }
    }

    pub(crate) fn rebuild_snapshots(&mut self, space: &Space) -> Result<()> {
        let n = self.times.len();
        let mut snaps = Vec::with_capacity(n);
        for j in 0..n {
            if let Some(grids) = &self.grids {
                let pts: Vec<(Point, f64)> =
                    (0..self.paths.len()).map(|i| (self.paths[i].points[j], self.path_weight(i))).collect();
                snaps.push(crate::measures::bin_onto(space, grids[j], &pts)?);
                continue;
            }
            let atoms = (0..self.paths.len())
                .map(|i| {
                    let p = &self.paths[i];
                    let q = p.points[j];
                    Atom { x: q.x, y: q.y, weight: self.path_weight(i), ref_mass: p.ref_masses[j], col: p.source, row: 0, singular: false }
                })
                .collect();
            snaps.push(DiscreteMeasure { epsilon: space.params.epsilon, grid: None, atoms });
        }
        self.snapshots = snaps;
        self.w2_squared = (0..self.paths.len())
            .map(|i| {
                let p = &self.paths[i];
                self.path_weight(i) * dist_inf(p.points[0], *p.points.last().unwrap()).powi(2)
            })
            .sum();
        Ok(())
    }

    /// The same paths with `Σ f w = 1` reweighting; `f` is indexed by path.
    pub fn reweighted(&self, space: &Space, f: Vec<f64>) -> Result<GeodesicFamily> {
        if f.len() != self.paths.len() || f.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(LabError::Parameter("weighting must give one nonnegative value per path".into()));
        }
        let total: f64 = f.iter().zip(&self.paths).map(|(v, p)| v * p.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(LabError::Parameter(format!("weighted mass is {total}, not 1")));
        }
        let mut out = self.clone();
        out.weighting = Some(f);
        out.rebuild_snapshots(space)?;
        Ok(out)
    }

    /// Snapshot index of time `r`, if `r` is dyadic at this depth.
    pub fn index_of(&self, r: f64) -> Option<usize> {
        let n = (self.times.len() - 1) as f64;
        let j = r * n;
        (j.fract() == 0.0 && (0.0..=n).contains(&j)).then_some(j as usize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvexityRow {
    pub t: f64,
    pub ent: f64,
    pub bound: f64,
    pub margin: f64,
}

/// Margins `Ent(μ_t) - [(1-t) Ent(μ₀) + t Ent(μ₁) - t(1-t)(K/2) W₂²]` at
/// every snapshot time.
pub fn k_convexity_report(fam: &GeodesicFamily, k_test: f64) -> Result<Vec<ConvexityRow>> {
    let ents: Vec<f64> = fam.snapshots.iter().map(entropy).collect::<Result<_>>()?;
    let (e0, e1) = (ents[0], *ents.last().unwrap());
    Ok(fam
        .times
        .iter()
        .zip(&ents)
        .map(|(&t, &ent)| {
            let bound = (1.0 - t) * e0 + t * e1 - t * (1.0 - t) * 0.5 * k_test * fam.w2_squared;
            ConvexityRow { t, ent, bound, margin: ent - bound }
        })
        .collect())
}

pub fn write_convexity<W: Write>(rows: &[ConvexityRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Entropy of a snapshot after binning its atoms onto `grid`; the
/// cross-check for the Jacobian chain.
pub fn rebinned_entropy(space: &Space, mu: &DiscreteMeasure, grid: Grid) -> Result<f64> {
    let pts: Vec<(Point, f64)> = mu.atoms.iter().map(|a| (a.point(), a.weight)).collect();
    entropy(&crate::measures::bin_onto(space, grid, &pts)?)
}

/// Largest relative residual of `ρ₁(T p) J_T(p) = ρ₀(p)`, with densities
/// taken against area and read from the cells of the two grids.
pub fn jacobi_residual(space: &Space, mu0: &DiscreteMeasure, mu1: &DiscreteMeasure, map: &TransportMap) -> Result<f64> {
    let (g0, g1) = match (mu0.grid, mu1.grid) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(LabError::Parameter("jacobi residual needs gridded measures".into())),
    };
    let area = |g: &Grid, a: &Atom| g.dx() * space.profile.f(a.x) / g.ny as f64;
    let mut index = vec![usize::MAX; g1.nx * g1.ny];
    for (i, a) in mu1.atoms.iter().enumerate() {
        index[a.col * g1.ny + a.row] = i;
    }
    let mut worst = 0.0f64;
    for e in &map.entries {
        let a0 = &mu0.atoms[e.source];
        let rho0 = a0.weight / area(&g0, a0);
        let c = g1.column_of(e.target.x).ok_or(LabError::OutsideSpace { x: e.target.x, y: e.target.y })?;
        let r = g1.row_of(e.target.y / space.profile.f(e.target.x));
        let a1 = &mu1.atoms[index[c * g1.ny + r]];
        let rho1 = a1.weight / area(&g1, a1);
        worst = worst.max((rho1 * e.partials.d1x * e.partials.d2y - rho0).abs() / rho0);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::SpaceParams;
    use crate::measures::strip_measure;
    use crate::transport::{analytic_family, solve_structured, AnalyticFamily};

    fn space(k: f64, big_k: f64, eps: f64) -> Space {
        Space::new(SpaceParams::new(k, big_k, eps).unwrap()).unwrap()
    }

    #[test]
    fn identity_margin_is_zero() {
        let s = space(0.01, 1.0, 0.001);
        for p in [Point::new(-0.3, 0.0004), Point::new(0.2, 0.002), Point::new(0.0, 0.0)] {
            let c = jacobi_condition_margin(&s, p, p, &Partials::IDENTITY).unwrap();
            assert_eq!(c.margin, 0.0);
        }
    }

    #[test]
    fn flat_shift_margin_is_zero() {
        let s = space(0.01, 3.0, 0.001);
        let p = Point::new(-0.6, 0.0007);
        let c = jacobi_condition_margin(&s, p, Point::new(-0.4, 0.0007), &Partials::IDENTITY).unwrap();
        assert_eq!(c.branch, PairTag::H0);
        assert!(c.margin.abs() < 1e-14, "{c:?}");
    }

    #[test]
    fn nonpositive_partial_is_singular() {
        let s = space(0.01, 1.0, 0.001);
        let p = Point::new(-0.6, 0.0007);
        let bad = Partials { d1x: 0.0, ..Partials::IDENTITY };
        assert!(matches!(
            jacobi_condition_margin(&s, p, p, &bad),
            Err(LabError::SingularConfiguration { .. })
        ));
    }

    #[test]
    fn jets_land_in_their_branch() {
        let s = space(0.01, 1.0, 0.001);
        for b in SweepBranch::ALL {
            let jets = sample_jets(b, &s, 500, 1).unwrap();
            assert_eq!(jets.len(), 500);
            for j in &jets {
                assert!(b.contains(crate::geometry::classify_pair(j.point, j.target).tag));
                assert!(s.contains(j.point) && s.contains(j.target));
            }
        }
    }

    #[test]
    fn gap_is_minus_mean_margin() {
        let s = space(0.01, 1.0, 0.001);
        let mu0 = strip_measure(&s, -0.5, -0.25, 20, 6).unwrap();
        let mu1 = strip_measure(&s, 0.25, 0.5, 20, 6).unwrap();
        let (_, map) = solve_structured(&s, &mu0, &mu1).unwrap();
        let g = midpoint_entropy_gap(&s, &mu0, &mu1, &map).unwrap();
        assert!((g.gap + g.mean_margin).abs() < 1e-12, "{g:?}");
        let ones = vec![1.0; mu0.len()];
        let w = weighted_entropy_gap(&s, &mu0, &map, &ones).unwrap();
        assert_eq!(w.gap, g.gap);
    }

    #[test]
    fn equal_measures_have_zero_gap() {
        let s = space(0.01, 1.0, 0.001);
        let mu = strip_measure(&s, 0.1, 0.3, 10, 4).unwrap();
        let (_, map) = solve_structured(&s, &mu, &mu).unwrap();
        let g = midpoint_entropy_gap(&s, &mu, &mu, &map).unwrap();
        assert!(g.gap.abs() < 1e-12, "{g:?}");
    }

    #[test]
    fn flat_translation_geodesic() {
        let s = space(0.01, 1.0, 0.001);
        let mu0 = strip_measure(&s, -0.8, -0.6, 10, 4).unwrap();
        let map = analytic_family(AnalyticFamily::HorizontalRescaled { delta: 0.2 }, &s, &mu0).unwrap();
        let fam = build_dyadic_geodesic(&s, &mu0, &map, 3, GeodesicOptions::default()).unwrap();
        for (j, t) in fam.times.iter().enumerate() {
            for (a, b) in fam.snapshots[j].atoms.iter().zip(&mu0.atoms) {
                assert!((a.x - (b.x + 0.2 * t)).abs() < 1e-12);
                assert!((a.y - b.y).abs() < 1e-15);
            }
        }
        for r in k_convexity_report(&fam, 0.0).unwrap() {
            assert!(r.margin.abs() < 1e-9, "{r:?}");
        }
        assert!(fam.speed_deviation < 1e-12);
    }

    #[test]
    fn depth_one_is_midpoint_pushforward() {
        let s = space(0.01, 1.0, 0.001);
        let mu0 = strip_measure(&s, -0.5, -0.3, 8, 4).unwrap();
        let mu1 = strip_measure(&s, 0.2, 0.4, 8, 4).unwrap();
        let (_, map) = solve_structured(&s, &mu0, &mu1).unwrap();
        let fam = build_dyadic_geodesic(&s, &mu0, &map, 1, GeodesicOptions::default()).unwrap();
        let g = midpoint_entropy_gap(&s, &mu0, &mu1, &map).unwrap();
        let ents: Vec<f64> = fam.snapshots.iter().map(|m| entropy(m).unwrap()).collect();
        assert!((ents[1] - g.ent_mid).abs() < 1e-12);
        assert!((ents[2] - g.ent1).abs() < 1e-12);
        for (a, e) in fam.snapshots[1].atoms.iter().zip(&map.entries) {
            assert_eq!(a.point(), midpoint(e.point, e.target, &s.profile).unwrap().point);
        }
    }

    #[test]
    fn dyadic_levels_nest() {
        let s = space(0.01, 1.0, 0.001);
        let mu0 = strip_measure(&s, -0.5, -0.3, 8, 4).unwrap();
        let mu1 = strip_measure(&s, 0.2, 0.4, 8, 4).unwrap();
        let (_, map) = solve_structured(&s, &mu0, &mu1).unwrap();
        let f2 = build_dyadic_geodesic(&s, &mu0, &map, 2, GeodesicOptions::default()).unwrap();
        let f3 = build_dyadic_geodesic(&s, &mu0, &map, 3, GeodesicOptions { lp_check: true }).unwrap();
        for j in 0..f2.snapshots.len() {
            assert_eq!(f2.snapshots[j], f3.snapshots[2 * j]);
        }
        assert!(f3.speed_deviation < 1e-9);
        assert!(f3.optimality_gap.unwrap() < 1e-6, "{:?}", f3.optimality_gap);
    }

    #[test]
    fn k_test_shift_is_exact() {
        let s = space(0.01, 1.0, 0.001);
        let mu0 = strip_measure(&s, -0.5, -0.3, 8, 4).unwrap();
        let mu1 = strip_measure(&s, 0.2, 0.4, 8, 4).unwrap();
        let (_, map) = solve_structured(&s, &mu0, &mu1).unwrap();
        let fam = build_dyadic_geodesic(&s, &mu0, &map, 3, GeodesicOptions::default()).unwrap();
        let a = k_convexity_report(&fam, 2.0).unwrap();
        let b = k_convexity_report(&fam, 0.5).unwrap();
        for (ra, rb) in a.iter().zip(&b) {
            let expect = ra.t * (1.0 - ra.t) * 0.75 * fam.w2_squared;
            assert!((rb.margin - ra.margin + expect).abs() < 1e-12);
        }
    }

    #[test]
    fn jacobi_sanity_on_rescaled_strip() {
        let s = space(0.01, 1.0, 0.001);
        let mu0 = strip_measure(&s, -0.5, -0.25, 40, 8).unwrap();
        let mu1 = strip_measure(&s, 0.25, 0.5, 40, 8).unwrap();
        let map = analytic_family(AnalyticFamily::HorizontalRescaled { delta: 0.75 }, &s, &mu0).unwrap();
        assert!(jacobi_residual(&s, &mu0, &mu1, &map).unwrap() < 1e-4);
    }
}
