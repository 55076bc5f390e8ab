//! The midpoint map `M` on pairs of points, its correction term `ỹ`, the
//! midpoint certificate, injectivity diagnostics and the Jacobian of
//! `M ∘ (id, T)`.
//!
//! Branches by pair class:
//!
//! * `V`, `D`: Euclidean midpoint.
//! * `H0`: `y = ½(y₀/f(x₀) + y₁/f(x₁)) f(x̄)`.
//! * `H1`: with the points ordered so that `x₀ < x₁` and `σ = sign(y₁ - y₀)`,
//!   `y = y₀ + ỹ + (σΔx/2 - ỹ) λ` where `λ = 2|Δy|/Δx - 1` and
//!   `ỹ = ½(y₀/f(x₀) + (y₀ + σΔx/2)/f(x₁)) f(x̄) - y₀`.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::geometry::{classify_pair, dist_inf, PairClass, PairTag, Point, Profile};
use crate::transport::Partials;

/// Which profile value divides `y₀` in the first term of `ỹ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum YTildeReading {
    /// `f(x₀)`, consistent with every later use of `ỹ`.
    #[default]
    Source,
    /// `f` at the midpoint abscissa, kept for comparison.
    Midpoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MidpointResult {
    pub point: Point,
    pub class: PairClass,
    /// `ỹ` for the `H1` branch.
    pub ytilde: Option<f64>,
}

fn positive_f(profile: &Profile, x: f64) -> Result<f64> {
    let f = profile.eval(x)?.f;
    if f <= 0.0 {
        return Err(LabError::SingularProfile { x });
    }
    Ok(f)
}

/// `ỹ(x₀, x₁, y₀)` for `x₀ < x₁`, with rise `σ (x₁ - x₀)/2` in the second
/// term (`σ = 1` is the canonical orientation).
pub fn y_tilde_signed(x0: f64, x1: f64, y0: f64, sigma: f64, profile: &Profile, reading: YTildeReading) -> Result<f64> {
    if !(x0 < x1) {
        return Err(LabError::Inadmissible(format!("need x0 < x1, got {x0}, {x1}")));
    }
    let xm = 0.5 * (x0 + x1);
    let fm = positive_f(profile, xm)?;
    let f1 = positive_f(profile, x1)?;
    let fa = match reading {
        YTildeReading::Source => positive_f(profile, x0)?,
        YTildeReading::Midpoint => fm,
    };
    Ok(0.5 * (y0 / fa + (y0 + sigma * 0.5 * (x1 - x0)) / f1) * fm - y0)
}

pub fn y_tilde(x0: f64, x1: f64, y0: f64, profile: &Profile) -> Result<f64> {
    y_tilde_signed(x0, x1, y0, 1.0, profile, YTildeReading::Source)
}

/// Bound `[2k² + 4k] (Δx/2)² / f(x₁)` on `|ỹ - Δx/4|`.
pub fn y_tilde_bound(x0: f64, x1: f64, profile: &Profile) -> f64 {
    let k = profile.k;
    let h = 0.5 * (x1 - x0);
    (2.0 * k * k + 4.0 * k) * h * h / profile.f(x1)
}

fn h0_height(p0: Point, p1: Point, profile: &Profile) -> Result<f64> {
    let xm = 0.5 * (p0.x + p1.x);
    let r0 = profile.ratio(p0)?;
    let r1 = profile.ratio(p1)?;
    Ok(0.5 * (r0 + r1) * profile.eval(xm)?.f)
}

/// H1 data in canonical orientation: `(a, b, σ, λ, ỹ, height)`.
struct H1 {
    a: Point,
    sigma: f64,
    lambda: f64,
    ytilde: f64,
    height: f64,
    swapped: bool,
}

fn h1_parts(p0: Point, p1: Point, profile: &Profile, reading: YTildeReading) -> Result<H1> {
    let swapped = p1.x < p0.x;
    let (a, b) = if swapped { (p1, p0) } else { (p0, p1) };
    let dx = b.x - a.x;
    let sigma = if b.y >= a.y { 1.0 } else { -1.0 };
    let lambda = 2.0 * (b.y - a.y).abs() / dx - 1.0;
    let ytilde = y_tilde_signed(a.x, b.x, a.y, sigma, profile, reading)?;
    let height = a.y + ytilde + (sigma * 0.5 * dx - ytilde) * lambda;
    Ok(H1 { a, sigma, lambda, ytilde, height, swapped })
}

pub fn midpoint_with(p0: Point, p1: Point, profile: &Profile, reading: YTildeReading) -> Result<MidpointResult> {
    let class = classify_pair(p0, p1);
    let xm = 0.5 * (p0.x + p1.x);
    let (y, ytilde) = match class.tag {
        PairTag::V | PairTag::D => (0.5 * (p0.y + p1.y), None),
        PairTag::H0 => (h0_height(p0, p1, profile)?, None),
        PairTag::H1 => {
            let h = h1_parts(p0, p1, profile, reading)?;
            (h.height, Some(h.ytilde))
        }
    };
    Ok(MidpointResult { point: Point::new(xm, y), class, ytilde })
}

pub fn midpoint(p0: Point, p1: Point, profile: &Profile) -> Result<MidpointResult> {
    midpoint_with(p0, p1, profile, YTildeReading::Source)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MidpointCertificate {
    /// `|d(M, p₀) - ½ d(p₀, p₁)|`.
    pub dev0: f64,
    /// `|d(M, p₁) - ½ d(p₀, p₁)|`.
    pub dev1: f64,
    pub in_space: bool,
    pub class: PairClass,
}

impl MidpointCertificate {
    pub fn worst(&self) -> f64 {
        self.dev0.max(self.dev1)
    }
}

pub fn certify_midpoint(p0: Point, p1: Point, profile: &Profile) -> Result<MidpointCertificate> {
    let m = midpoint(p0, p1, profile)?;
    let half = 0.5 * dist_inf(p0, p1);
    Ok(MidpointCertificate {
        dev0: (dist_inf(m.point, p0) - half).abs(),
        dev1: (dist_inf(m.point, p1) - half).abs(),
        in_space: profile.contains(m.point),
        class: m.class,
    })
}

/// `|M_H0 - M_H1|` evaluated on the same pair regardless of its class;
/// used to audit the branch boundary `|Δy| = ½|Δx|`.
pub fn branch_jump(p0: Point, p1: Point, profile: &Profile) -> Result<f64> {
    if p0.x == p1.x {
        return Err(LabError::Inadmissible("vertical pair has no horizontal branch".into()));
    }
    let h0 = h0_height(p0, p1, profile)?;
    let h1 = h1_parts(p0, p1, profile, YTildeReading::Source)?.height;
    Ok((h0 - h1).abs())
}

/// `½ - 3k - (2k² + 3k)/(1 - 2k)²`, the lower bound on the `y`-derivative
/// of the `H1` midpoint height.
pub fn injectivity_derivative_bound(k: f64) -> f64 {
    0.5 - 3.0 * k - (2.0 * k * k + 3.0 * k) / ((1.0 - 2.0 * k) * (1.0 - 2.0 * k))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectivityReport {
    pub pairs: usize,
    pub collisions: usize,
    /// Smallest scaled separation `max(|Δx|/hx, |Δy|/hy)` between midpoints
    /// of distinct pairs.
    pub min_separation: f64,
    pub derivative_bound: f64,
}

/// Counts distinct pairs whose midpoints fall within half a cell of each
/// other. Cells have width `hx` and height `f(x)/ny` at the midpoint.
pub fn check_injectivity(pairs: &[(Point, Point)], profile: &Profile, hx: f64, ny: usize) -> Result<InjectivityReport> {
    let mut mids: Vec<(Point, usize)> = Vec::with_capacity(pairs.len());
    for (i, &(p, q)) in pairs.iter().enumerate() {
        mids.push((midpoint(p, q, profile)?.point, i));
    }
    mids.sort_by(|a, b| a.0.x.total_cmp(&b.0.x).then(a.1.cmp(&b.1)));
    let mut collisions = 0;
    let mut min_sep = f64::INFINITY;
    for a in 0..mids.len() {
        let (pa, ia) = mids[a];
        for &(pb, ib) in &mids[a + 1..] {
            if pb.x - pa.x >= hx {
                break;
            }
            if pairs[ia] == pairs[ib] {
                continue;
            }
            let hy = profile.f(pa.x).min(profile.f(pb.x)) / ny as f64;
            let sep = ((pb.x - pa.x) / hx).max((pb.y - pa.y).abs() / hy);
            min_sep = min_sep.min(sep);
            if sep < 0.5 {
                collisions += 1;
            }
        }
    }
    Ok(InjectivityReport {
        pairs: pairs.len(),
        collisions,
        min_separation: min_sep,
        derivative_bound: injectivity_derivative_bound(profile.k),
    })
}

/// `(∂S₁/∂x, ∂S₂/∂y)` for `S = M ∘ (id, T)` at `p` with `T(p) = t`.
pub fn jacobian_of_composition(p: Point, partials: &Partials, t: Point, profile: &Profile) -> Result<(f64, f64)> {
    let class = classify_pair(p, t);
    let s1 = 0.5 * (1.0 + partials.d1x);
    let s2 = match class.tag {
        PairTag::V | PairTag::D => 0.5 * (1.0 + partials.d2y),
        PairTag::H0 => {
            let fm = positive_f(profile, 0.5 * (p.x + t.x))?;
            let fp = positive_f(profile, p.x)?;
            let ft = positive_f(profile, t.x)?;
            0.5 * fm * (1.0 / fp + partials.d2y / ft)
        }
        PairTag::H1 => {
            let h = h1_parts(p, t, profile, YTildeReading::Source)?;
            let dx = (t.x - p.x).abs();
            let b_x = if h.swapped { p.x } else { t.x };
            let fm = positive_f(profile, 0.5 * (p.x + t.x))?;
            let q = 0.5 * fm * (1.0 / positive_f(profile, h.a.x)? + 1.0 / positive_f(profile, b_x)?) - 1.0;
            let d_b = 1.0 - 2.0 * h.sigma * h.ytilde / dx;
            let d_a = 1.0 + q * (1.0 - h.lambda) - d_b;
            let (d_src, d_tgt) = if h.swapped { (d_b, d_a) } else { (d_a, d_b) };
            d_src + d_tgt * partials.d2y
        }
    };
    Ok((s1, s2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_profile, SpaceParams};

    fn profile(k: f64, eps: f64) -> Profile {
        build_profile(&SpaceParams::new(k, 1.0, eps).unwrap()).unwrap()
    }

    #[test]
    fn y_tilde_flat_region() {
        let p = profile(0.01, 0.001);
        let (x0, x1) = (-0.5, -0.4996);
        let v = y_tilde(x0, x1, 0.0002, &p).unwrap();
        assert!((v - (x1 - x0) / 4.0).abs() < 1e-18);
        assert!(y_tilde(0.1, 0.1, 0.0, &p).is_err());
    }

    #[test]
    fn y_tilde_example_bound() {
        let p = profile(0.01, 0.001);
        let v = y_tilde(0.1, 0.12, 0.0005, &p).unwrap();
        assert!((v - 0.005).abs() <= y_tilde_bound(0.1, 0.12, &p));
    }

    #[test]
    fn midpoint_examples() {
        let p = profile(0.01, 0.001);
        let m = midpoint(Point::new(0.0, 0.0), Point::new(0.001, 0.003), &p).unwrap();
        assert_eq!(m.point, Point::new(0.0005, 0.0015));
        let m = midpoint(Point::new(0.2, 0.0), Point::new(0.4, 0.0), &p).unwrap();
        assert_eq!(m.class.tag, PairTag::H0);
        assert_eq!(m.point, Point::new(0.30000000000000004, 0.0));
        let a = Point::new(-0.5, 0.0001);
        let b = Point::new(-0.4992, 0.0007);
        let m = midpoint(a, b, &p).unwrap();
        assert_eq!(m.class.tag, PairTag::H1);
        assert!((m.point.y - 0.0004).abs() < 1e-18);
    }

    #[test]
    fn off_orientation_h1_is_symmetric() {
        let p = profile(0.01, 0.001);
        let a = Point::new(0.01, 0.0003);
        let b = Point::new(0.0106, 0.00072);
        let m1 = midpoint(a, b, &p).unwrap();
        let m2 = midpoint(b, a, &p).unwrap();
        assert_eq!(m1.point, m2.point);
        let c = certify_midpoint(b, a, &p).unwrap();
        assert!(c.worst() < 1e-15 && c.in_space);
        // descending pair
        let d = Point::new(0.0106, 0.0);
        let c = certify_midpoint(Point::new(0.01, 0.0005), d, &p).unwrap();
        assert_eq!(c.class.tag, PairTag::H1);
        assert!(c.worst() < 1e-15 && c.in_space, "{c:?}");
    }

    #[test]
    fn boundary_is_continuous() {
        let p = profile(0.01, 0.001);
        let a = Point::new(0.0, 0.0002);
        let b = Point::new(0.001, 0.0007);
        assert!(branch_jump(a, b, &p).unwrap() < 1e-18);
    }

    #[test]
    fn injectivity_bound_value() {
        let v = injectivity_derivative_bound(0.01);
        assert!((v - (0.47 - 0.0302 / 0.9604)).abs() < 1e-15);
        assert!(v > 0.43);
    }

    #[test]
    fn identity_pairs_do_not_collide() {
        let p = profile(0.01, 0.001);
        let pairs: Vec<_> = (0..10)
            .flat_map(|c| (0..4).map(move |r| (c, r)))
            .map(|(c, r)| {
                let q = Point::new(-0.5 + 0.01 * c as f64, 0.001 * (r as f64 + 0.5) / 4.0);
                (q, q)
            })
            .collect();
        let rep = check_injectivity(&pairs, &p, 0.01, 4).unwrap();
        assert_eq!(rep.collisions, 0);
    }

    #[test]
    fn jacobian_examples() {
        let p = profile(0.01, 0.001);
        let q = Point::new(0.3, 0.002);
        assert_eq!(jacobian_of_composition(q, &Partials::IDENTITY, q, &p).unwrap(), (1.0, 1.0));
        let a = Point::new(-0.6, 0.0004);
        let (s1, s2) = jacobian_of_composition(a, &Partials::IDENTITY, Point::new(-0.5, 0.0004), &p).unwrap();
        assert_eq!((s1, s2), (1.0, 1.0));
        let b = Point::new(-0.5996, 0.0007);
        let part = Partials { d1x: 1.0, d1y: 0.0, d2x: 0.0, d2y: 0.6 };
        let (_, s2) = jacobian_of_composition(a, &part, b, &p).unwrap();
        assert!((s2 - 0.8).abs() < 1e-12, "{s2}");
    }
}
