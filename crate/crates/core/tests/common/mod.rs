#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use num_bigint::BigInt;
use num_rational::BigRational;
use pcaddreach::neural::Mlp;
use pcaddreach::sets::StarSet;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Maximum of `c·x` subject to `A x ≤ b` by enumerating every vertex; `None`
/// when no vertex is feasible. The region must be bounded.
pub fn vertex_enumeration_max(c: &[f64], a: &DMatrix<f64>, b: &[f64]) -> Option<f64> {
    let n = c.len();
    let k = a.nrows();
    let mut best: Option<f64> = None;
    let mut subset: Vec<usize> = (0..n).collect();
    if n > k {
        return None;
    }
    loop {
        let sub = DMatrix::from_fn(n, n, |i, j| a[(subset[i], j)]);
        let rhs = DVector::from_fn(n, |i, _| b[subset[i]]);
        if let Some(x) = sub.lu().solve(&rhs) {
            let feasible = (0..k).all(|i| {
                let lhs: f64 = (0..n).map(|j| a[(i, j)] * x[j]).sum();
                lhs <= b[i] + 1e-9 * (1.0 + b[i].abs())
            });
            if feasible && x.iter().all(|v| v.is_finite()) {
                let v: f64 = c.iter().zip(x.iter()).map(|(p, q)| p * q).sum();
                best = Some(best.map_or(v, |m: f64| m.max(v)));
            }
        }
        // Next combination in lexicographic order.
        let mut i = n;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if subset[i] < k - n + i {
                break;
            }
        }
        subset[i] += 1;
        for j in i + 1..n {
            subset[j] = subset[j - 1] + 1;
        }
    }
}

/// `⌈(L+1)(1 + 1/L)(δ+τ)⌉` in exact rational arithmetic.
pub fn rank_oracle(count: usize, delta: f64, tau: f64) -> BigInt {
    let l = BigRational::from_integer(BigInt::from(count));
    let one = BigRational::from_integer(BigInt::from(1));
    let d = BigRational::from_float(delta).unwrap();
    let t = BigRational::from_float(tau).unwrap();
    let v = (&l + &one) * (&one + &one / &l) * (d + t);
    v.ceil().to_integer()
}

pub fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// ReLU net with standard-normal parameters scaled by `1/sqrt(fan_in)`.
pub fn random_mlp<R: Rng + ?Sized>(rng: &mut R, widths: &[usize]) -> Mlp {
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for w in widths.windows(2) {
        let s = 1.0 / (w[0] as f64).sqrt();
        weights.push(DMatrix::from_fn(w[1], w[0], |_, _| s * gaussian(rng)));
        biases.push(DVector::from_fn(w[1], |_, _| 0.5 * gaussian(rng)));
    }
    Mlp::from_layers(weights, biases).unwrap()
}

pub fn sample_box<R: Rng + ?Sized>(rng: &mut R, lower: &[f64], upper: &[f64]) -> Vec<f64> {
    lower
        .iter()
        .zip(upper)
        .map(|(l, u)| if u > l { rng.random_range(*l..*u) } else { *l })
        .collect()
}

/// Rejection sample of a generator vector inside the star's predicate, mapped
/// to a member point. `None` after `tries` misses.
pub fn sample_star<R: Rng + ?Sized>(rng: &mut R, star: &StarSet, tries: usize) -> Option<Vec<f64>> {
    let ranges = star.generator_ranges().ok()?;
    let lo: Vec<f64> = ranges.iter().map(|r| r.0).collect();
    let hi: Vec<f64> = ranges.iter().map(|r| r.1).collect();
    let (a, b) = star.predicate();
    for _ in 0..tries {
        let mu = DVector::from_vec(sample_box(rng, &lo, &hi));
        let ok = (a * &mu).iter().zip(b.iter()).all(|(l, r)| *l <= *r + 1e-12);
        if ok {
            return Some((star.center() + star.basis() * mu).as_slice().to_vec());
        }
    }
    None
}
