#![allow(dead_code)]

use rand::RngExt;

use cdlab::measures::{euclid_cost, scale_cost, sup_cost};
use cdlab::sampling::rng;
use cdlab::Point;

/// Points on a coarse lattice so that `d_∞²` has plenty of ties.
pub fn lattice_points(r: &mut impl RngExt, n: usize) -> Vec<Point> {
    (0..n).map(|_| Point::new(r.random_range(0..8) as f64 / 8.0, r.random_range(0..4) as f64 / 16.0)).collect()
}

pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

pub struct Instance {
    pub src: Vec<Point>,
    pub dst: Vec<Point>,
    pub primary: Vec<i64>,
    pub secondary: Vec<i64>,
}

pub fn corpus() -> Vec<Instance> {
    let mut r = rng(20_240_601);
    (0..200)
        .map(|i| {
            let n = 1 + i % 6;
            let src = lattice_points(&mut r, n);
            let dst = lattice_points(&mut r, n);
            let mut primary = Vec::new();
            let mut secondary = Vec::new();
            for &p in &src {
                for &q in &dst {
                    primary.push(scale_cost(sup_cost(p, q)));
                    secondary.push(scale_cost(euclid_cost(p, q)));
                }
            }
            Instance { src, dst, primary, secondary }
        })
        .collect()
}

/// Best `(Σ primary, Σ secondary)` over all permutations.
pub fn exhaustive_best(inst: &Instance) -> (i128, i128) {
    let n = inst.src.len();
    permutations(n)
        .into_iter()
        .map(|p| {
            let a: i128 = (0..n).map(|i| inst.primary[i * n + p[i]] as i128).sum();
            let b: i128 = (0..n).map(|i| inst.secondary[i * n + p[i]] as i128).sum();
            (a, b)
        })
        .min()
        .unwrap()
}
