//! Deterministic low-discrepancy and pseudo-random sample streams.

use rand::rngs::StdRng;
use rand::{RngExt, SeedableRng};
use sobol::params::JoeKuoD6;
use sobol::Sobol;

/// A Sobol sequence with a seeded Cranley–Patterson rotation, so that
/// different seeds give different (but reproducible) point sets.
pub struct ShiftedSobol {
    inner: Sobol<f64>,
    shift: Vec<f64>,
}

impl ShiftedSobol {
    pub fn new(dims: usize, seed: u64) -> Self {
        let params = JoeKuoD6::minimal();
        let mut inner = Sobol::<f64>::new(dims, &params);
        // the first Sobol point is the origin
        inner.next();
        let mut rng = StdRng::seed_from_u64(seed);
        let shift = (0..dims).map(|_| rng.random::<f64>()).collect();
        ShiftedSobol { inner, shift }
    }
}

impl Iterator for ShiftedSobol {
    type Item = Vec<f64>;

    fn next(&mut self) -> Option<Vec<f64>> {
        let mut p = self.inner.next()?;
        for (v, s) in p.iter_mut().zip(&self.shift) {
            *v += s;
            if *v >= 1.0 {
                *v -= 1.0;
            }
        }
        Some(p)
    }
}

/// Seeded pseudo-random generator used for pair sweeps and instance
/// generation.
pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

/// Maps `u ∈ [0, 1)` into the open interval `(0, 1)`.
pub fn open_unit(u: f64) -> f64 {
    const TINY: f64 = 1e-12;
    TINY + (1.0 - 2.0 * TINY) * u
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproducible_and_in_cube() {
        let a: Vec<_> = ShiftedSobol::new(3, 7).take(100).collect();
        let b: Vec<_> = ShiftedSobol::new(3, 7).take(100).collect();
        assert_eq!(a, b);
        assert!(a.iter().flatten().all(|v| (0.0..1.0).contains(v)));
        let c: Vec<_> = ShiftedSobol::new(3, 8).take(100).collect();
        assert_ne!(a, c);
    }

    #[test]
    fn covers_the_cube() {
        // a 1-d Sobol stream of 2^10 points hits every bin of width 2^-10
        let mut hits = vec![false; 1024];
        for p in ShiftedSobol::new(1, 0).take(1023) {
            hits[(p[0] * 1024.0) as usize] = true;
        }
        assert!(hits.iter().filter(|h| **h).count() >= 1020);
    }
}
