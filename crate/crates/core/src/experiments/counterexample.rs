//! The limit space `ε = 0` is not strict CD(0,∞): the canonical geodesic
//! of strips, its reweighting by the lower half `A` at time `t̄`, and the
//! second argument for a plan that mixes fibers after `t̄`.

use serde::{Deserialize, Serialize};

use crate::convexity::{k_convexity_report, ConvexityRow, GeodesicFamily, PathRecord};
use crate::error::{LabError, Result};
use crate::geometry::{c_k_prime, Point, Space, SpaceParams};
use crate::measures::{bin_onto, discretize, entropy, DiscreteMeasure, Grid};
use crate::quadrature::gaussian_mass;

/// Start of the strip carrying `μ₀`.
pub const STRIP_LO: f64 = -0.5;
pub const STRIP_WIDTH: f64 = 0.25;

/// Convexity margins above this count as violations.
pub const VIOLATION_TOLERANCE: f64 = 5e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleSetup {
    pub nx: usize,
    pub ny: usize,
    pub tbar: f64,
    pub depth: u32,
    /// Mixing strength of the second plan; zero skips it.
    pub alpha: f64,
}

impl Default for CounterexampleSetup {
    fn default() -> Self {
        CounterexampleSetup { nx: 200, ny: 20, tbar: 0.75, depth: 3, alpha: 0.25 }
    }
}

/// A path starting at column `col` with normalized height `u0` up to
/// time `switch`, then moving linearly in `u` to `u1` at time one.
#[derive(Debug, Clone, Copy, PartialEq)]
struct StripPath {
    col: usize,
    weight: f64,
    u0: f64,
    u1: f64,
}

struct StripPlan {
    nx: usize,
    ny: usize,
    switch: f64,
    paths: Vec<StripPath>,
}

fn strip_grid(t: f64, nx: usize, ny: usize) -> Result<Grid> {
    Grid::new(STRIP_LO + t, STRIP_LO + STRIP_WIDTH + t, nx, ny)
}

fn row_center(r: usize, ny: usize) -> f64 {
    (r as f64 + 0.5) / ny as f64
}

/// Probabilities of the `ny` rows under `e^{-Ku²}/C_K`.
fn row_weights(space: &Space, ny: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..ny).map(|r| gaussian_mass(space.big_k(), r as f64 / ny as f64, (r + 1) as f64 / ny as f64)).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

impl StripPlan {
    fn canonical(space: &Space, nx: usize, ny: usize) -> Self {
        let p = row_weights(space, ny);
        let mut paths = Vec::with_capacity(nx * ny);
        for col in 0..nx {
            for (r, &pr) in p.iter().enumerate() {
                let u = row_center(r, ny);
                paths.push(StripPath { col, weight: pr / nx as f64, u0: u, u1: u });
            }
        }
        StripPlan { nx, ny, switch: 1.0, paths }
    }

    fn mixing(space: &Space, nx: usize, ny: usize, switch: f64, alpha: f64) -> Self {
        let p = row_weights(space, ny);
        let mut paths = Vec::with_capacity(nx * ny * ny);
        for col in 0..nx {
            for j in 0..ny {
                for l in 0..ny {
                    let stay = if j == l { 1.0 - alpha } else { 0.0 };
                    let w = p[j] * (stay + alpha * p[l]) / nx as f64;
                    paths.push(StripPath { col, weight: w, u0: row_center(j, ny), u1: row_center(l, ny) });
                }
            }
        }
        StripPlan { nx, ny, switch, paths }
    }

    fn point(&self, space: &Space, path: &StripPath, t: f64) -> Point {
        let dx = STRIP_WIDTH / self.nx as f64;
        let x = STRIP_LO + (path.col as f64 + 0.5) * dx + t;
        let u = if t <= self.switch {
            path.u0
        } else {
            let s = (t - self.switch) / (1.0 - self.switch);
            (1.0 - s) * path.u0 + s * path.u1
        };
        Point::new(x, u * space.profile.f(x))
    }

    fn snapshot(&self, space: &Space, t: f64, f: &[f64]) -> Result<DiscreteMeasure> {
        let pts: Vec<(Point, f64)> = self.paths.iter().zip(f).map(|(p, v)| (self.point(space, p, t), p.weight * v)).collect();
        bin_onto(space, strip_grid(t, self.nx, self.ny)?, &pts)
    }

    fn family(&self, space: &Space, depth: u32, f: Option<Vec<f64>>) -> Result<GeodesicFamily> {
        let n = 1usize << depth;
        let times: Vec<f64> = (0..=n).map(|j| j as f64 / n as f64).collect();
        let paths = self
            .paths
            .iter()
            .enumerate()
            .map(|(i, p)| PathRecord {
                source: i,
                weight: p.weight,
                points: times.iter().map(|&t| self.point(space, p, t)).collect(),
                ref_masses: Vec::new(),
                jacobians: Vec::new(),
            })
            .collect();
        let grids = times.iter().map(|&t| strip_grid(t, self.nx, self.ny)).collect::<Result<_>>()?;
        let mut fam = GeodesicFamily {
            depth,
            times,
            snapshots: Vec::new(),
            paths,
            weighting: f,
            w2_squared: 0.0,
            speed_deviation: 0.0,
            optimality_gap: None,
            grids: Some(grids),
        };
        fam.speed_deviation = crate::convexity::speed_deviation(&fam);
        fam.rebuild_snapshots(space)?;
        Ok(fam)
    }

    /// `χ_A ∘ e_t`, normalized to unit mass.
    fn lower_half_weighting(&self, space: &Space, t: f64) -> Result<Vec<f64>> {
        let raw: Vec<f64> = self
            .paths
            .iter()
            .map(|p| {
                let q = self.point(space, p, t);
                let f = space.profile.f(q.x);
                if f > 0.0 && 2.0 * q.y <= f {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        let mass: f64 = raw.iter().zip(&self.paths).map(|(v, p)| v * p.weight).sum();
        if !(mass > 0.0) {
            return Err(LabError::Parameter("the set A carries no mass at tbar".into()));
        }
        Ok(raw.into_iter().map(|v| v / mass).collect())
    }
}

fn limit_space(params: SpaceParams) -> Result<Space> {
    Space::new(params.with_epsilon(0.0)?)
}

fn check_setup(space: &Space, s: &CounterexampleSetup) -> Result<()> {
    if !(s.tbar > 0.0 && s.tbar <= 1.0) {
        return Err(LabError::Parameter(format!("tbar = {} not in (0, 1]", s.tbar)));
    }
    if !(STRIP_LO + s.tbar > space.params.k) {
        return Err(LabError::Parameter(format!("strip at tbar = {} is not inside the curved region", s.tbar)));
    }
    if !(0.0..1.0).contains(&s.alpha) {
        return Err(LabError::Parameter(format!("alpha = {} not in [0, 1)", s.alpha)));
    }
    if s.nx == 0 || s.ny == 0 {
        return Err(LabError::Parameter("grid needs at least one cell".into()));
    }
    Ok(())
}

/// The canonical plan `η`: `(x, u) ↦ (x + t, u f₀(x + t))` with `x`
/// uniform on the starting strip and `u` distributed as `e^{-Ku²}/C_K`.
pub fn eta_construct(params: SpaceParams, nx: usize, ny: usize, depth: u32) -> Result<GeodesicFamily> {
    let space = limit_space(params)?;
    StripPlan::canonical(&space, nx, ny).family(&space, depth, None)
}

/// Largest weight difference between the snapshots of `η` and the
/// normalized restriction of `m` to the translated strips.
pub fn eta_snapshot_error(params: SpaceParams, fam: &GeodesicFamily) -> Result<f64> {
    let space = limit_space(params)?;
    let mut worst = 0.0f64;
    for snap in &fam.snapshots {
        let grid = snap.grid.ok_or_else(|| LabError::Parameter("snapshot without grid".into()))?;
        let direct = discretize(&space, |_| 1.0, grid)?;
        for (a, b) in snap.atoms.iter().zip(&direct.atoms) {
            worst = worst.max((a.weight - b.weight).abs());
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingReport {
    pub alpha: f64,
    /// `m(S)` for `S = {ρ̃₁ > 0}` and the first-branch threshold `C'_K/4`.
    pub support_mass: f64,
    pub first_branch_threshold: f64,
    /// `∫ log m_x(S_x) dm₁` and the bound it must exceed.
    pub integral_full: f64,
    pub integral_bound: f64,
    pub c_bar: f64,
    pub integral_at_c_bar: f64,
    /// `∫ F dη'`, one up to rounding.
    pub f_mass: f64,
    pub ent0: f64,
    pub ent_tbar: f64,
    pub ent1: f64,
    /// `log(4/C_K) - (4/C_K) ∫ log m_x(S^c̄_x) dm₁`.
    pub ent1_formula: f64,
    pub ent_tbar_lower: f64,
    pub margin_at_tbar: f64,
    pub violated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleReport {
    pub k: f64,
    #[serde(rename = "K")]
    pub big_k: f64,
    pub nx: usize,
    pub ny: usize,
    pub tbar: f64,
    pub c_k: f64,
    pub c_k_prime: f64,
    pub ent0: f64,
    pub ent0_expected: f64,
    /// `Ent((e_t̄)_#(F̃η))`.
    pub ent_tbar: f64,
    pub ent_tbar_expected: f64,
    /// `Ent((e_1)_#(F̃η))`.
    pub ent1: f64,
    /// `Ent at t̄ - Ent(μ₀)`, the endpoint comparison.
    pub violation: f64,
    pub violation_expected: f64,
    pub margin_at_tbar: f64,
    /// Margins along `F̃η` at the dyadic times.
    pub margins: Vec<ConvexityRow>,
    /// `m({ρ̃₁ > 0})` against `C'_K/4`.
    pub support_mass: f64,
    pub first_branch_threshold: f64,
    pub eta_snapshot_error: f64,
    pub eta_speed_deviation: f64,
    pub mixing: Option<MixingReport>,
    pub verdict: String,
}

impl CounterexampleReport {
    pub fn violated(&self) -> bool {
        self.verdict == "strict-CD-violated"
    }
}

pub fn counterexample_run(params: SpaceParams, setup: CounterexampleSetup) -> Result<CounterexampleReport> {
    let space = limit_space(params)?;
    check_setup(&space, &setup)?;
    let c = space.c_k;
    let cp = c_k_prime(space.big_k());
    let plan = StripPlan::canonical(&space, setup.nx, setup.ny);
    let eta = plan.family(&space, setup.depth, None)?;
    let eta_err = eta_snapshot_error(params, &eta)?;
    let ft = plan.lower_half_weighting(&space, setup.tbar)?;
    let fam = plan.family(&space, setup.depth, Some(ft.clone()))?;
    let margins = k_convexity_report(&fam, 0.0)?;
    let ent0 = margins[0].ent;
    let ent1 = margins.last().unwrap().ent;
    let ent_tbar = entropy(&plan.snapshot(&space, setup.tbar, &ft)?)?;
    let margin_at_tbar = ent_tbar - (1.0 - setup.tbar) * ent0 - setup.tbar * ent1;
    let last = fam.snapshots.last().unwrap();
    let support_mass: f64 = last.atoms.iter().filter(|a| a.weight > 0.0).map(|a| a.ref_mass).sum();
    let mixing = if setup.alpha > 0.0 { Some(mixing_branch(&space, &setup, c, cp)?) } else { None };
    let worst = margins.iter().map(|r| r.margin).fold(margin_at_tbar, f64::max);
    let violated = worst > VIOLATION_TOLERANCE;
    Ok(CounterexampleReport {
        k: params.k,
        big_k: params.big_k,
        nx: setup.nx,
        ny: setup.ny,
        tbar: setup.tbar,
        c_k: c,
        c_k_prime: cp,
        ent0,
        ent0_expected: (4.0 / c).ln(),
        ent_tbar,
        ent_tbar_expected: (4.0 / cp).ln(),
        ent1,
        violation: ent_tbar - ent0,
        violation_expected: (c / cp).ln(),
        margin_at_tbar,
        margins,
        support_mass,
        first_branch_threshold: cp / 4.0,
        eta_snapshot_error: eta_err,
        eta_speed_deviation: eta.speed_deviation,
        mixing,
        verdict: if violated { "strict-CD-violated" } else { "not-violated" }.into(),
    })
}

/// The argument for a plan whose density at time one is spread over more
/// than `C'_K/4` of reference mass.
fn mixing_branch(space: &Space, setup: &CounterexampleSetup, c: f64, cp: f64) -> Result<MixingReport> {
    let (nx, ny) = (setup.nx, setup.ny);
    let plan = StripPlan::mixing(space, nx, ny, setup.tbar, setup.alpha);
    let ft = plan.lower_half_weighting(space, setup.tbar)?;
    let snap1 = plan.snapshot(space, 1.0, &ft)?;
    let grid = snap1.grid.unwrap();
    let cells = grid.nx * grid.ny;
    let mut rho = vec![0.0; cells];
    let mut refm = vec![0.0; cells];
    let mut fiber = vec![0.0; grid.nx];
    for a in &snap1.atoms {
        let i = a.col * grid.ny + a.row;
        rho[i] = a.weight / a.ref_mass;
        refm[i] = a.ref_mass;
        fiber[a.col] += a.ref_mass;
    }
    let support_mass: f64 = (0..cells).filter(|&i| rho[i] > 0.0).map(|i| refm[i]).sum();
    let total_m1: f64 = fiber.iter().sum();
    let level_mass = |level: f64| -> Vec<f64> {
        let mut m = vec![0.0; grid.nx];
        for i in 0..cells {
            if rho[i] > level {
                m[i / grid.ny] += refm[i];
            }
        }
        m.iter().zip(&fiber).map(|(s, f)| s / f).collect()
    };
    let integral = |mx: &[f64]| -> f64 { mx.iter().zip(&fiber).map(|(m, f)| f * m.ln()).sum() };
    let bound = 0.25 * c * (cp / c).ln();
    let integral_full = integral(&level_mass(0.0));
    if !(integral_full > bound) {
        return Err(LabError::Inadmissible(format!("fiber integral {integral_full} does not exceed {bound}")));
    }
    let (mut lo, mut hi) = (0.0, rho.iter().cloned().fold(0.0, f64::max));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if integral(&level_mass(mid)) > bound {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let c_bar = lo;
    let mx = level_mass(c_bar);
    let integral_at_c_bar = integral(&mx);
    // reweighting F along the mixing plan
    let dx = STRIP_WIDTH / nx as f64;
    let f: Vec<f64> = plan
        .paths
        .iter()
        .zip(&ft)
        .map(|(p, &v)| {
            if v == 0.0 {
                return 0.0;
            }
            let q = plan.point(space, p, 1.0);
            let col = grid.column_of(q.x).unwrap_or(p.col);
            let row = grid.row_of(q.y / space.profile.f(q.x));
            let r = rho[col * grid.ny + row];
            debug_assert!((q.x - (STRIP_LO + 1.0 + (col as f64 + 0.5) * dx)).abs() < 1e-9);
            if r > c_bar {
                v / (total_m1 * mx[col] * r)
            } else {
                0.0
            }
        })
        .collect();
    let f_mass: f64 = f.iter().zip(&plan.paths).map(|(v, p)| v * p.weight).sum();
    let ent = |t: f64| -> Result<f64> { entropy(&plan.snapshot(space, t, &f)?) };
    let (ent0, ent_tbar, ent1) = (ent(0.0)?, ent(setup.tbar)?, ent(1.0)?);
    let ent1_formula = (1.0 / total_m1).ln() - integral_at_c_bar / total_m1;
    let margin_at_tbar = ent_tbar - (1.0 - setup.tbar) * ent0 - setup.tbar * ent1;
    Ok(MixingReport {
        alpha: setup.alpha,
        support_mass,
        first_branch_threshold: cp / 4.0,
        integral_full,
        integral_bound: bound,
        c_bar,
        integral_at_c_bar,
        f_mass,
        ent0,
        ent_tbar,
        ent1,
        ent1_formula,
        ent_tbar_lower: (4.0 / cp).ln(),
        margin_at_tbar,
        violated: margin_at_tbar > VIOLATION_TOLERANCE,
    })
}

/// `|violation - log(C_K/C'_K)|` for each grid in turn.
pub fn refinement_errors(params: SpaceParams, grids: &[(usize, usize)], tbar: f64) -> Result<Vec<f64>> {
    grids
        .iter()
        .map(|&(nx, ny)| {
            let setup = CounterexampleSetup { nx, ny, tbar, depth: 1, alpha: 0.0 };
            let r = counterexample_run(params, setup)?;
            Ok((r.violation - r.violation_expected).abs())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> SpaceParams {
        SpaceParams::new(0.01, 1.0, 0.0).unwrap()
    }

    #[test]
    fn eta_paths_are_unit_speed_geodesics() {
        let fam = eta_construct(params(), 20, 4, 3).unwrap();
        assert!(fam.speed_deviation < 1e-12);
        assert!(eta_snapshot_error(params(), &fam).unwrap() < 1e-9);
        for p in &fam.paths {
            let total = crate::geometry::dist_inf(p.points[0], *p.points.last().unwrap());
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn flat_part_of_eta_stays_on_axis() {
        let fam = eta_construct(params(), 10, 4, 2).unwrap();
        for p in &fam.paths {
            assert_eq!(p.points[0].y, 0.0);
        }
    }

    #[test]
    fn endpoint_entropies() {
        let r = counterexample_run(params(), CounterexampleSetup { nx: 40, ny: 8, tbar: 0.75, depth: 2, alpha: 0.25 }).unwrap();
        assert!((r.ent0 - r.ent0_expected).abs() < 1e-9, "{r:?}");
        assert!((r.ent_tbar - r.ent_tbar_expected).abs() < 1e-9, "{r:?}");
        assert!(r.violated());
        let m = r.mixing.unwrap();
        assert!(m.support_mass > m.first_branch_threshold);
        assert!((m.f_mass - 1.0).abs() < 1e-9);
        assert!((m.ent1 - m.ent1_formula).abs() < 1e-9, "{m:?}");
        assert!(m.ent1 < m.ent_tbar_lower);
        assert!(m.ent_tbar >= m.ent_tbar_lower - 1e-9);
    }

    #[test]
    fn rejects_tbar_in_flat_region() {
        let s = CounterexampleSetup { tbar: 0.5, ..CounterexampleSetup::default() };
        assert!(counterexample_run(params(), s).is_err());
    }
}
