//! Measured Gromov–Hausdorff certificate for `ε → 0`.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::geometry::{dist_inf, Density, Point, Space, SpaceParams};
use crate::quadrature::integrate;
use crate::sampling::ShiftedSobol;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MghReport {
    pub epsilon_n: f64,
    pub pairs: usize,
    pub max_distortion: f64,
    pub distortion_bound: f64,
    /// Largest relative error between the pushed density and `m_{k,K,0}`.
    pub pushforward_error: f64,
    /// Relative error of the fiber mass sent onto the singular segment.
    pub singular_fiber_error: f64,
    pub pass: bool,
}

/// `f_n(x, y) = (x, y f₀(x) / f_ε(x))`.
pub fn mgh_map(eps_space: &Space, zero_space: &Space, p: Point) -> Point {
    let fe = eps_space.profile.f(p.x);
    let f0 = zero_space.profile.f(p.x);
    Point::new(p.x, p.y * f0 / fe)
}

/// Density of `(f_n)_# m_ε` at `q` on `{f₀ > 0}`, by change of variables.
fn pushed_density(eps_space: &Space, zero_space: &Space, q: Point) -> Result<f64> {
    let fe = eps_space.profile.f(q.x);
    let f0 = zero_space.profile.f(q.x);
    let pre = Point::new(q.x, q.y * fe / f0);
    match eps_space.density(pre)? {
        Density::Absolute(d) => Ok(d * fe / f0),
        Density::Singular { .. } => Err(LabError::SingularProfile { x: q.x }),
    }
}

/// Samples `pairs` pairs in `X_{k,ε_n}` (a tenth of them on a common
/// vertical line) and measures distortion and density mismatch.
pub fn mgh_check(params: SpaceParams, pairs: usize, seed: u64) -> Result<MghReport> {
    let eps = params.epsilon;
    if !(eps > 0.0) {
        return Err(LabError::Parameter("mGH check needs epsilon_n > 0".into()));
    }
    let es = Space::new(params)?;
    let zs = Space::new(params.with_epsilon(0.0)?)?;
    let mut max_distortion = 0.0f64;
    let mut push_err = 0.0f64;
    for u in ShiftedSobol::new(5, seed).take(pairs) {
        let xp = -1.0 + 2.0 * u[0];
        let xq = if u[4] < 0.1 { xp } else { -1.0 + 2.0 * u[2] };
        let p = Point::new(xp, u[1] * es.profile.f(xp));
        let q = Point::new(xq, u[3] * es.profile.f(xq));
        let (fp, fq) = (mgh_map(&es, &zs, p), mgh_map(&es, &zs, q));
        max_distortion = max_distortion.max((dist_inf(fp, fq) - dist_inf(p, q)).abs());
        if zs.profile.f(fp.x) > 0.0 {
            let expected = match zs.density(fp)? {
                Density::Absolute(d) => d,
                Density::Singular { .. } => unreachable!(),
            };
            push_err = push_err.max((pushed_density(&es, &zs, fp)? - expected).abs() / expected);
        }
    }
    // every fiber over {f₀ = 0} collapses to one point carrying C_K
    let fe = es.profile.f(-1.0);
    let big_k = params.big_k;
    let fiber = integrate(|y| (-big_k * (y / fe).powi(2)).exp() / fe, 0.0, fe, 1e-14);
    let singular_fiber_error = (fiber - zs.c_k).abs() / zs.c_k;
    let bound = 2.0 * eps;
    Ok(MghReport {
        epsilon_n: eps,
        pairs,
        max_distortion,
        distortion_bound: bound,
        pushforward_error: push_err,
        singular_fiber_error,
        pass: max_distortion <= bound && push_err <= 1e-9 && singular_fiber_error <= 1e-9,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_run_within_bound() {
        let p = SpaceParams::new(0.01, 1.0, 0.005).unwrap();
        let r = mgh_check(p, 20_000, 1).unwrap();
        assert!(r.pass, "{r:?}");
        assert!(r.max_distortion <= r.epsilon_n * (1.0 + 1e-12));
    }

    #[test]
    fn vertical_pairs_shrink() {
        let p = SpaceParams::new(0.01, 1.0, 0.002).unwrap();
        let es = Space::new(p).unwrap();
        let zs = Space::new(p.with_epsilon(0.0).unwrap()).unwrap();
        let a = Point::new(0.3, 0.0);
        let b = Point::new(0.3, es.profile.f(0.3));
        let d = dist_inf(mgh_map(&es, &zs, a), mgh_map(&es, &zs, b));
        assert!((d - zs.profile.f(0.3)).abs() < 1e-15);
        assert!((dist_inf(a, b) - d - 0.002).abs() < 1e-15);
    }
}
