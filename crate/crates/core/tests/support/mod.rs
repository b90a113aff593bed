//! Random instance generators shared by the integration tests.

#![allow(dead_code)]

use cot_lab_core::transport::PayoffTable;
use cot_lab_core::{Axis, DiscreteMeasure, SupportGrid};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `k` distinct sorted points from the half-integer lattice of `[-lim, lim]`.
pub fn points(rng: &mut ChaCha8Rng, k: usize, lim: i32) -> Vec<f64> {
    let mut lattice: Vec<i32> = (-2 * lim..=2 * lim).collect();
    lattice.shuffle(rng);
    let mut pts: Vec<f64> = lattice[..k].iter().map(|&v| v as f64 / 2.0).collect();
    pts.sort_by(f64::total_cmp);
    pts
}

/// Strictly positive weights summing to one.
pub fn weights(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|w| w / s).collect()
}

pub fn table(rng: &mut ChaCha8Rng, m: usize, n: usize) -> PayoffTable {
    PayoffTable::new(m, n, (0..m * n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

pub struct Marginals {
    pub grid: SupportGrid,
    pub mu: DiscreteMeasure,
    pub nu: DiscreteMeasure,
}

pub fn transport_instance(rng: &mut ChaCha8Rng, m: usize, n: usize) -> Marginals {
    let grid = SupportGrid::line(&points(rng, m, 5), &points(rng, n, 5)).unwrap();
    Marginals {
        mu: DiscreteMeasure::new(Axis::X, weights(rng, m)).unwrap(),
        nu: DiscreteMeasure::new(Axis::Y, weights(rng, n)).unwrap(),
        grid,
    }
}

/// `ν = μK` for a random martingale kernel `K`, so `μ ≤_c ν`. `Y` extends
/// past both ends of `X` so every point can spread.
pub fn convex_order_instance(rng: &mut ChaCha8Rng, m: usize, n: usize) -> Marginals {
    let x = points(rng, m, 3);
    let mut y = points(rng, n.saturating_sub(2), 3);
    y.push(x[0] - rng.gen_range(1..4) as f64 / 2.0 - 0.25);
    y.push(x[m - 1] + rng.gen_range(1..4) as f64 / 2.0 + 0.25);
    y.sort_by(f64::total_cmp);
    y.dedup();
    let mu = weights(rng, m);
    let mut nu = vec![0.0; y.len()];
    for (i, &xi) in x.iter().enumerate() {
        // one or two brackets per point
        let parts = rng.gen_range(1..=2);
        for _ in 0..parts {
            let below: Vec<usize> = (0..y.len()).filter(|&j| y[j] < xi).collect();
            let above: Vec<usize> = (0..y.len()).filter(|&j| y[j] > xi).collect();
            let a = *below.choose(rng).unwrap();
            let b = *above.choose(rng).unwrap();
            let p = (y[b] - xi) / (y[b] - y[a]);
            nu[a] += mu[i] * p / parts as f64;
            nu[b] += mu[i] * (1.0 - p) / parts as f64;
        }
    }
    Marginals {
        grid: SupportGrid::line(&x, &y).unwrap(),
        mu: DiscreteMeasure::new(Axis::X, mu).unwrap(),
        nu: DiscreteMeasure::new(Axis::Y, nu).unwrap(),
    }
}

/// `v − μ(v)`.
pub fn centered(rng: &mut ChaCha8Rng, m: &DiscreteMeasure, scale: f64) -> Vec<f64> {
    let v: Vec<f64> = (0..m.len()).map(|_| rng.gen_range(-scale..scale)).collect();
    let mean = m.integrate(&v);
    v.iter().map(|x| x - mean).collect()
}
