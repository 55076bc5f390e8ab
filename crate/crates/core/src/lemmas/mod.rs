//! Margin evaluators for the algebraic estimates behind the convexity
//! proof. Every evaluator returns `lhs - rhs` oriented so that a
//! nonnegative value certifies the inequality at that input.

pub mod suite;

use serde::Serialize;

use crate::error::{LabError, Result};
use crate::geometry::{Point, Profile, Space};

/// Constant of the logarithmic estimate.
pub const LOG_INEQUALITY_C: f64 = 32.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Margin {
    pub value: f64,
    pub inputs: Vec<(&'static str, f64)>,
}

impl Margin {
    fn new(value: f64, inputs: Vec<(&'static str, f64)>) -> Self {
        Margin { value, inputs }
    }

    pub fn holds(&self, slack: f64) -> bool {
        self.value >= -slack
    }

    /// `name=value;name=value` rendering used in reports.
    pub fn echo(&self) -> String {
        self.inputs
            .iter()
            .map(|(n, v)| format!("{n}={v:e}"))
            .collect::<Vec<_>>()
            .join(";")
    }
}

/// `log(1 + (½+δ)(A-1)) + 32δ² - ½ log A`.
pub fn log_inequality_margin(a: f64, delta: f64) -> Result<Margin> {
    if !(a > 0.0) {
        return Err(LabError::Inadmissible(format!("A must be positive, got {a}")));
    }
    if !(delta.abs() < 1.0 / 32.0) {
        return Err(LabError::Inadmissible(format!("|delta| must be < 1/32, got {delta}")));
    }
    let arg = 1.0 + (0.5 + delta) * (a - 1.0);
    if !(arg > 0.0) {
        return Err(LabError::Inadmissible(format!("log argument {arg} is not positive")));
    }
    let value = arg.ln() + LOG_INEQUALITY_C * delta * delta - 0.5 * a.ln();
    Ok(Margin::new(value, vec![("A", a), ("delta", delta)]))
}

/// `γ(t)` and its first two `t`-derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaValue {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

/// The fiber-proportional interpolation
/// `γ(t) = ((1-t) y₀/f(x₀) + t y₁/f(x₁)) · f((1-t)x₀ + t x₁)`.
pub fn gamma_eval(p0: Point, p1: Point, t: f64, profile: &Profile) -> Result<GammaValue> {
    let f0 = profile.eval(p0.x)?.f;
    let f1 = profile.eval(p1.x)?.f;
    if f0 <= 0.0 {
        return Err(LabError::SingularProfile { x: p0.x });
    }
    if f1 <= 0.0 {
        return Err(LabError::SingularProfile { x: p1.x });
    }
    if t == 0.0 {
        return gamma_parts(p0, p1, t, p0.y / f0, p1.y / f1, profile).map(|g| GammaValue {
            value: p0.y,
            ..g
        });
    }
    if t == 1.0 {
        return gamma_parts(p0, p1, t, p0.y / f0, p1.y / f1, profile).map(|g| GammaValue {
            value: p1.y,
            ..g
        });
    }
    gamma_parts(p0, p1, t, p0.y / f0, p1.y / f1, profile)
}

fn gamma_parts(p0: Point, p1: Point, t: f64, r0: f64, r1: f64, profile: &Profile) -> Result<GammaValue> {
    let dx = p1.x - p0.x;
    let xt = (1.0 - t) * p0.x + t * p1.x;
    let pv = profile.eval(xt.clamp(-1.0, 1.0))?;
    let rt = (1.0 - t) * r0 + t * r1;
    Ok(GammaValue {
        value: rt * pv.f,
        d1: (r1 - r0) * pv.f + rt * pv.df * dx,
        d2: 2.0 * (r1 - r0) * pv.df * dx + rt * pv.d2f * dx * dx,
    })
}

/// Margins for the slope estimate `|γ'/Δx - Δy/Δx| ≤ 3k` and the curvature
/// estimate `|γ''| ≤ Δx² (2k/f(x_t)) (|Δy/Δx| + 2)` (the latter for `k < ¼`).
pub fn gamma_bound_margins(p0: Point, p1: Point, t: f64, profile: &Profile) -> Result<(Margin, Margin)> {
    let dx = p1.x - p0.x;
    if dx == 0.0 {
        return Err(LabError::Inadmissible("x0 = x1".into()));
    }
    let k = profile.k;
    if k >= 0.25 {
        return Err(LabError::Inadmissible(format!("curvature bound needs k < 1/4, got {k}")));
    }
    let g = gamma_eval(p0, p1, t, profile)?;
    let slope = (p1.y - p0.y) / dx;
    let xt = ((1.0 - t) * p0.x + t * p1.x).clamp(-1.0, 1.0);
    let ft = profile.eval(xt)?.f;
    let inputs = vec![("x0", p0.x), ("y0", p0.y), ("x1", p1.x), ("y1", p1.y), ("t", t)];
    let first = 3.0 * k - (g.d1 / dx - slope).abs();
    let second = dx * dx * (2.0 * k / ft) * (slope.abs() + 2.0) - g.d2.abs();
    Ok((Margin::new(first, inputs.clone()), Margin::new(second, inputs)))
}

/// A `C²` curve `x ↦ y(x)` on `[x0, x1]` with exact derivatives.
pub trait AdmissibleCurve {
    fn interval(&self) -> (f64, f64);
    /// `(y, y', y'')` at `x`.
    fn eval(&self, x: f64, profile: &Profile) -> Result<(f64, f64, f64)>;
}

/// Straight line `y = y0 + slope (x - x0)` on `[x0, x1]`.
#[derive(Debug, Clone, Copy)]
pub struct LineCurve {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub slope: f64,
}

impl AdmissibleCurve for LineCurve {
    fn interval(&self) -> (f64, f64) {
        (self.x0, self.x1)
    }

    fn eval(&self, x: f64, _profile: &Profile) -> Result<(f64, f64, f64)> {
        Ok((self.y0 + self.slope * (x - self.x0), self.slope, 0.0))
    }
}

/// Blend `(1-λ) γ + λ ℓ` of the fiber-proportional curve `γ` from
/// `(x0, y0)` to `(x1, y_end)` and the 45° line `ℓ` through `(x0, y0)`.
/// This is the curve carrying the `H1` midpoint.
#[derive(Debug, Clone, Copy)]
pub struct BlendCurve {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y_end: f64,
    pub lambda: f64,
}

impl AdmissibleCurve for BlendCurve {
    fn interval(&self) -> (f64, f64) {
        (self.x0, self.x1)
    }

    fn eval(&self, x: f64, profile: &Profile) -> Result<(f64, f64, f64)> {
        let dx = self.x1 - self.x0;
        let t = (x - self.x0) / dx;
        let g = gamma_eval(Point::new(self.x0, self.y0), Point::new(self.x1, self.y_end), t, profile)?;
        let l = self.lambda;
        Ok((
            (1.0 - l) * g.value + l * (self.y0 + (x - self.x0)),
            (1.0 - l) * g.d1 / dx + l,
            (1.0 - l) * g.d2 / (dx * dx),
        ))
    }
}

const ADMISSIBILITY_NODES: usize = 33;

fn check_admissible<C: AdmissibleCurve>(curve: &C, h: f64, space: &Space) -> Result<()> {
    let (x0, x1) = curve.interval();
    let k = space.params.k;
    for i in 0..ADMISSIBILITY_NODES {
        let x = x0 + (x1 - x0) * i as f64 / (ADMISSIBILITY_NODES - 1) as f64;
        let (y, d1, d2) = curve.eval(x, &space.profile)?;
        let f = space.profile.eval(x)?.f;
        if d1 < 0.25 - 1e-12 {
            return Err(LabError::Inadmissible(format!("y'({x}) = {d1} < 1/4")));
        }
        if d2.abs() > h * k / f * (1.0 + 1e-9) + 1e-12 {
            return Err(LabError::Inadmissible(format!("|y''({x})| = {} > Hk/f", d2.abs())));
        }
        if !space.contains(Point::new(x, y)) {
            return Err(LabError::OutsideSpace { x, y });
        }
    }
    Ok(())
}

/// Uniform convexity of `-log m` along an admissible curve:
/// `log m(mid) - ½ log m(x0) - ½ log m(x1) - K Δx² / (128 f(x1)²)`.
pub fn convexity_estimate_margin<C: AdmissibleCurve>(curve: &C, h: f64, space: &Space) -> Result<Margin> {
    let (x0, x1) = curve.interval();
    if x0 == x1 {
        return Ok(Margin::new(0.0, vec![("x0", x0), ("x1", x1), ("H", h)]));
    }
    check_admissible(curve, h, space)?;
    let xm = 0.5 * (x0 + x1);
    let p0 = Point::new(x0, curve.eval(x0, &space.profile)?.0);
    let p1 = Point::new(x1, curve.eval(x1, &space.profile)?.0);
    let pm = Point::new(xm, curve.eval(xm, &space.profile)?.0);
    let f1 = space.profile.f(x1);
    let dx = x1 - x0;
    let value = space.log_density(pm)?
        - 0.5 * space.log_density(p0)?
        - 0.5 * space.log_density(p1)?
        - space.big_k() * dx * dx / (128.0 * f1 * f1);
    Ok(Margin::new(
        value,
        vec![("x0", x0), ("y0", p0.y), ("x1", x1), ("y1", p1.y), ("H", h)],
    ))
}

/// The Gaussian-exponent part of the previous estimate:
/// `½K r₀² + ½K r₁² - K Δx²/(128 f(x1)²) - K r_mid²` with `r = y/f`.
pub fn kconvexity_margin<C: AdmissibleCurve>(curve: &C, h: f64, space: &Space) -> Result<Margin> {
    let (x0, x1) = curve.interval();
    if x0 == x1 {
        return Ok(Margin::new(0.0, vec![("x0", x0), ("x1", x1), ("H", h)]));
    }
    check_admissible(curve, h, space)?;
    let prof = &space.profile;
    let xm = 0.5 * (x0 + x1);
    let r = |x: f64| -> Result<f64> { Ok(curve.eval(x, prof)?.0 / prof.f(x)) };
    let (r0, r1, rm) = (r(x0)?, r(x1)?, r(xm)?);
    let f1 = prof.f(x1);
    let dx = x1 - x0;
    let kk = space.big_k();
    let value = 0.5 * kk * r0 * r0 + 0.5 * kk * r1 * r1 - kk * dx * dx / (128.0 * f1 * f1) - kk * rm * rm;
    Ok(Margin::new(value, vec![("x0", x0), ("x1", x1), ("r0", r0), ("r1", r1), ("H", h)]))
}

/// `[2k² + f(x)] δ² / (f(x-δ) f(x+δ)) - |f(x)/f(x-δ) + f(x)/f(x+δ) - 2|`.
pub fn ratio_bound_margin(x: f64, delta: f64, profile: &Profile) -> Result<Margin> {
    if !(delta > 0.0) {
        return Err(LabError::Inadmissible(format!("delta must be positive, got {delta}")));
    }
    let fm = profile.eval(x - delta)?.f;
    let fp = profile.eval(x + delta)?.f;
    let fx = profile.eval(x)?.f;
    if fm <= 0.0 || fp <= 0.0 {
        return Err(LabError::SingularProfile { x });
    }
    let k = profile.k;
    let deviation = (fx / fm + fx / fp - 2.0).abs();
    let bound = (2.0 * k * k + fx) * delta * delta / (fm * fp);
    Ok(Margin::new(bound - deviation, vec![("x", x), ("delta", delta)]))
}

/// Deviation `|f(x)/f(x-δ) + f(x)/f(x+δ) - 2|` on its own, for the
/// small-`δ` scaling study.
pub fn ratio_deviation(x: f64, delta: f64, profile: &Profile) -> Result<f64> {
    let fm = profile.eval(x - delta)?.f;
    let fp = profile.eval(x + delta)?.f;
    let fx = profile.eval(x)?.f;
    Ok((fx / fm + fx / fp - 2.0).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::SpaceParams;

    fn space(k: f64, eps: f64, big_k: f64) -> Space {
        Space::new(SpaceParams::new(k, big_k, eps).unwrap()).unwrap()
    }

    #[test]
    fn log_inequality_examples() {
        assert_eq!(log_inequality_margin(1.0, 0.0).unwrap().value, 0.0);
        let m = log_inequality_margin(2.0, 0.01).unwrap().value;
        let expected = 1.51f64.ln() + 0.0032 - 0.5 * 2f64.ln();
        assert!((m - expected).abs() < 1e-15);
        assert!((m - 0.0687).abs() < 1e-4);
        let d = 0.02;
        assert!(log_inequality_margin(1.0 - 16.0 * d, d).unwrap().value >= 0.0);
        assert!(log_inequality_margin(1.0 + 16.0 * d, -d).unwrap().value >= 0.0);
    }

    #[test]
    fn log_inequality_domain() {
        assert!(log_inequality_margin(0.0, 0.0).is_err());
        assert!(log_inequality_margin(1.0, 1.0 / 32.0).is_err());
        assert!(log_inequality_margin(1.0, -0.04).is_err());
    }

    #[test]
    fn log_inequality_am_gm_case() {
        for a in [1e-3, 0.3, 1.0, 2.5, 40.0] {
            let m = log_inequality_margin(a, 0.0).unwrap().value;
            let direct = (1.0 + 0.5 * (a - 1.0)).ln() - 0.5 * f64::ln(a);
            assert!((m - direct).abs() < 1e-12);
            assert!(m >= 0.0);
        }
    }

    #[test]
    fn gamma_endpoints_and_flat_region() {
        let s = space(0.01, 0.001, 1.0);
        let p0 = Point::new(-0.5, 0.0002);
        let p1 = Point::new(-0.3, 0.0009);
        assert_eq!(gamma_eval(p0, p1, 0.0, &s.profile).unwrap().value, p0.y);
        assert_eq!(gamma_eval(p0, p1, 1.0, &s.profile).unwrap().value, p1.y);
        for t in [0.1, 0.25, 0.5, 0.9] {
            let g = gamma_eval(p0, p1, t, &s.profile).unwrap();
            assert!((g.value - ((1.0 - t) * p0.y + t * p1.y)).abs() < 1e-18);
            assert_eq!(g.d2, 0.0);
        }
        let (m1, _) = gamma_bound_margins(p0, p1, 0.3, &s.profile).unwrap();
        assert!((m1.value - 0.03).abs() < 1e-15);
    }

    #[test]
    fn gamma_bounds_in_transition() {
        let s = space(0.01, 0.001, 1.0);
        let p0 = Point::new(-0.02, 0.0005);
        let p1 = Point::new(0.02, 0.0009);
        let (a, b) = gamma_bound_margins(p0, p1, 0.5, &s.profile).unwrap();
        assert!(a.value >= 0.0 && b.value >= 0.0, "{a:?} {b:?}");
    }

    #[test]
    fn gamma_equal_ratios_sweep() {
        let s = space(0.01, 0.001, 1.0);
        let x0 = -0.03;
        let x1 = 0.4;
        let r = 0.6;
        let p0 = Point::new(x0, r * s.profile.f(x0));
        let p1 = Point::new(x1, r * s.profile.f(x1));
        for i in 0..=200 {
            let (m, _) = gamma_bound_margins(p0, p1, i as f64 / 200.0, &s.profile).unwrap();
            assert!(m.value >= 0.0);
        }
    }

    #[test]
    fn gamma_rejects_vertical_pairs() {
        let s = space(0.01, 0.001, 1.0);
        let p = Point::new(0.1, 0.0);
        assert!(gamma_bound_margins(p, Point::new(0.1, 0.001), 0.5, &s.profile).is_err());
    }

    #[test]
    fn convexity_estimate_degenerate_and_line() {
        let s = space(0.01, 0.001, 1.0);
        let c = LineCurve { x0: -0.5, x1: -0.5, y0: 0.0, slope: 0.5 };
        assert_eq!(convexity_estimate_margin(&c, 5.0, &s).unwrap().value, 0.0);
        let c = LineCurve { x0: -0.5, x1: -0.499, y0: 0.0, slope: 0.5 };
        assert!(convexity_estimate_margin(&c, 5.0, &s).unwrap().value >= 0.0);
        assert!(kconvexity_margin(&c, 5.0, &s).unwrap().value >= 0.0);
    }

    #[test]
    fn convexity_estimate_rejects_shallow_curves() {
        let s = space(0.01, 0.001, 1.0);
        let c = LineCurve { x0: -0.5, x1: -0.499, y0: 0.0, slope: 0.1 };
        assert!(matches!(convexity_estimate_margin(&c, 5.0, &s), Err(LabError::Inadmissible(_))));
    }

    #[test]
    fn blend_curve_in_transition() {
        let s = space(0.01, 0.001, 1.0);
        let x0 = -0.0008;
        let x1 = 0.0;
        let y0 = 0.0001;
        let c = BlendCurve { x0, x1, y0, y_end: y0 + 0.0004, lambda: 0.4 };
        let m = convexity_estimate_margin(&c, 5.0, &s).unwrap();
        assert!(m.value >= 0.0, "{m:?}");
    }

    #[test]
    fn ratio_bound_examples() {
        let s = space(0.01, 0.001, 1.0);
        let m = ratio_bound_margin(-0.5, 0.1, &s.profile).unwrap();
        let bound = (2e-4 + 0.001) * 0.01 / (0.001 * 0.001);
        assert!((m.value - bound).abs() < 1e-9);
        assert!(ratio_bound_margin(0.0, 0.005, &s.profile).unwrap().value >= 0.0);
    }

    #[test]
    fn ratio_deviation_is_second_order() {
        let s = space(0.01, 0.001, 1.0);
        let x = 0.003;
        let mut prev = f64::INFINITY;
        for e in 2..=5 {
            let d = 10f64.powi(-e);
            let q = ratio_deviation(x, d, &s.profile).unwrap() / (d * d);
            let fx = s.profile.f(x);
            let bracket = (2.0 * 1e-4 + fx) / (s.profile.f(x - d) * s.profile.f(x + d));
            assert!(q <= bracket);
            assert!(q.is_finite() && q < prev * 10.0);
            prev = q;
        }
    }
}
