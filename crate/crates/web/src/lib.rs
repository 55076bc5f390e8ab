//! Browser bindings: profile curve, midpoint of a pair, and the canonical
//! geodesic plan on the singular space. Every export returns JSON.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use cdlab::experiments::eta_construct;
use cdlab::measures::entropy;
use cdlab::midpoint::midpoint;
use cdlab::{Point, Space, SpaceParams};

#[derive(Serialize)]
pub struct Curve {
    pub k: f64,
    pub epsilon: f64,
    pub xs: Vec<f64>,
    pub f: Vec<f64>,
}

#[derive(Serialize)]
pub struct Midpoint {
    pub p0: Point,
    pub p1: Point,
    pub m: Point,
    pub class: &'static str,
    pub distance: f64,
    pub d0: f64,
    pub d1: f64,
}

#[derive(Serialize)]
pub struct Snapshot {
    pub t: f64,
    pub entropy: f64,
    /// `[x, y, weight]` for atoms of positive weight.
    pub atoms: Vec<[f64; 3]>,
}

fn space(k: f64, big_k: f64, epsilon: f64) -> Result<Space, String> {
    SpaceParams::new(k, big_k, epsilon).and_then(Space::new).map_err(|e| e.to_string())
}

pub fn profile_curve_json(k: f64, epsilon: f64, samples: usize) -> Result<String, String> {
    let s = space(k, 1.0, epsilon)?;
    let n = samples.clamp(2, 20_000);
    let xs: Vec<f64> = (0..n).map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64).collect();
    let f = xs.iter().map(|&x| s.profile.f(x)).collect();
    serde_json::to_string(&Curve { k, epsilon, xs, f }).map_err(|e| e.to_string())
}

/// Points are given by `x` and the fraction `u ∈ [0, 1]` of the fiber height.
pub fn midpoint_json(k: f64, epsilon: f64, x0: f64, u0: f64, x1: f64, u1: f64) -> Result<String, String> {
    let s = space(k, 1.0, epsilon)?;
    let p = &s.profile;
    if !(-1.0..=1.0).contains(&x0) || !(-1.0..=1.0).contains(&x1) {
        return Err("x must lie in [-1, 1]".into());
    }
    let p0 = Point::new(x0, u0.clamp(0.0, 1.0) * p.f(x0));
    let p1 = Point::new(x1, u1.clamp(0.0, 1.0) * p.f(x1));
    let r = midpoint(p0, p1, p).map_err(|e| e.to_string())?;
    let out = Midpoint {
        p0,
        p1,
        m: r.point,
        class: r.class.tag.as_str(),
        distance: cdlab::geometry::dist_inf(p0, p1),
        d0: cdlab::geometry::dist_inf(p0, r.point),
        d1: cdlab::geometry::dist_inf(r.point, p1),
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

/// Dyadic snapshots of the canonical plan from the flat strip into the
/// curved region at `ε = 0`.
pub fn geodesic_json(k: f64, nx: usize, ny: usize, depth: u32) -> Result<String, String> {
    let params = SpaceParams::new(k, 1.0, 0.0).map_err(|e| e.to_string())?;
    let fam = eta_construct(params, nx.clamp(1, 200), ny.clamp(1, 40), depth.min(5)).map_err(|e| e.to_string())?;
    let mut snaps = Vec::with_capacity(fam.snapshots.len());
    for (t, mu) in fam.times.iter().zip(&fam.snapshots) {
        snaps.push(Snapshot {
            t: *t,
            entropy: entropy(mu).map_err(|e| e.to_string())?,
            atoms: mu.atoms.iter().filter(|a| a.weight > 0.0).map(|a| [a.x, a.y, a.weight]).collect(),
        });
    }
    serde_json::to_string(&snaps).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn profile_curve(k: f64, epsilon: f64, samples: usize) -> Result<String, JsValue> {
    profile_curve_json(k, epsilon, samples).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn midpoint_of(k: f64, epsilon: f64, x0: f64, u0: f64, x1: f64, u1: f64) -> Result<String, JsValue> {
    midpoint_json(k, epsilon, x0, u0, x1, u1).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn geodesic(k: f64, nx: usize, ny: usize, depth: u32) -> Result<String, JsValue> {
    geodesic_json(k, nx, ny, depth).map_err(|e| JsValue::from_str(&e))
}
