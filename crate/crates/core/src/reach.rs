//! Star-set propagation through ReLU networks.
//!
//! Two ReLU rules are provided. The exact rule splits a star on every neuron
//! whose sign is undetermined, so the union of the results equals the image
//! exactly. The approximate rule keeps a single star and replaces each
//! undetermined neuron by a fresh generator constrained to the triangle
//! `y ≥ 0, y ≥ x, y ≤ u(x − l)/(u − l)`.
//!
//! Neurons are visited layer by layer in ascending index, and output stars
//! keep the order of their creation path, so results are identical for any
//! thread count.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::neural::Mlp;
use crate::sets::{BoundsMethod, SetError, StarSet};

pub const DEFAULT_MAX_STARS: usize = 4096;

#[derive(Debug, Error)]
pub enum ReachError {
    #[error("exact reachability produced more than {limit} stars; use approx mode or a smaller network")]
    TooManyStars { limit: usize },
    #[error("input star has dimension {found}, network expects {expected}")]
    WidthMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Set(#[from] SetError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReachMode {
    Exact,
    Approx,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReachOptions {
    pub max_stars: usize,
    /// Bounds used for the approx-mode triangle; `Interval` is faster but
    /// looser. Exact mode always uses LP bounds.
    pub approx_bounds: BoundsMethod,
}

impl Default for ReachOptions {
    fn default() -> Self {
        Self {
            max_stars: DEFAULT_MAX_STARS,
            approx_bounds: BoundsMethod::Lp,
        }
    }
}

/// Exact ReLU image of a union of stars.
pub fn relu_exact(stars: Vec<StarSet>) -> Result<Vec<StarSet>, ReachError> {
    relu_exact_limited(stars, DEFAULT_MAX_STARS)
}

pub fn relu_exact_limited(stars: Vec<StarSet>, max_stars: usize) -> Result<Vec<StarSet>, ReachError> {
    let parts = stars
        .into_par_iter()
        .map(|s| relu_exact_single(s, max_stars))
        .collect::<Result<Vec<_>, _>>()?;
    let out: Vec<StarSet> = parts.into_iter().flatten().collect();
    if out.len() > max_stars {
        return Err(ReachError::TooManyStars { limit: max_stars });
    }
    Ok(out)
}

fn relu_exact_single(star: StarSet, max_stars: usize) -> Result<Vec<StarSet>, ReachError> {
    let d = star.dim();
    let mut current = vec![star];
    for i in 0..d {
        let mut next = Vec::with_capacity(current.len());
        for s in current {
            let (l, u) = match s.dim_range(i) {
                Ok(r) => r,
                Err(SetError::EmptySet) => continue,
                Err(e) => return Err(e.into()),
            };
            if l >= 0.0 {
                next.push(s);
            } else if u <= 0.0 {
                next.push(s.zero_dimension(i));
            } else {
                let c = s.center()[i];
                let row: Vec<f64> = s.basis().row(i).iter().copied().collect();
                let neg_row: Vec<f64> = row.iter().map(|v| -v).collect();
                // x_i ≥ 0 keeps the coordinate; x_i ≤ 0 zeroes it.
                next.push(s.with_constraint(&neg_row, c)?);
                next.push(s.with_constraint(&row, -c)?.zero_dimension(i));
            }
        }
        if next.len() > max_stars {
            return Err(ReachError::TooManyStars { limit: max_stars });
        }
        current = next;
    }
    Ok(current)
}

/// Single-star triangle over-approximation of the ReLU image.
pub fn relu_approx(star: &StarSet) -> Result<StarSet, ReachError> {
    relu_approx_with(star, BoundsMethod::Lp)
}

pub fn relu_approx_with(star: &StarSet, bounds: BoundsMethod) -> Result<StarSet, ReachError> {
    let bx = star.bounds(bounds)?;
    let mut out = star.clone();
    for i in 0..star.dim() {
        let (l, u) = (bx.lower[i], bx.upper[i]);
        if l >= 0.0 {
            continue;
        }
        if u <= 0.0 {
            out = out.zero_dimension(i);
            continue;
        }
        let c = out.center()[i];
        let row: Vec<f64> = out.basis().row(i).iter().copied().collect();
        let k = out.push_generator();
        let m = k + 1;
        let slope = u / (u - l);

        let mut y_nonneg = vec![0.0; m];
        y_nonneg[k] = -1.0;
        out.push_constraint(&y_nonneg, 0.0);

        let mut above_x = row.clone();
        above_x.push(-1.0);
        out.push_constraint(&above_x, -c);

        let mut below_chord: Vec<f64> = row.iter().map(|v| -slope * v).collect();
        below_chord.push(1.0);
        out.push_constraint(&below_chord, slope * (c - l));

        let mut e = vec![0.0; m];
        e[k] = 1.0;
        out.set_coordinate(i, 0.0, &e);
    }
    Ok(out)
}

/// Reachable set of `net` over `input`.
///
/// Approx mode returns exactly one star; exact mode returns every nonempty
/// leaf of the case split.
pub fn network_reach(
    net: &Mlp,
    input: &StarSet,
    mode: ReachMode,
    opts: &ReachOptions,
) -> Result<Vec<StarSet>, ReachError> {
    if input.dim() != net.input_dim() {
        return Err(ReachError::WidthMismatch {
            expected: net.input_dim(),
            found: input.dim(),
        });
    }
    let (wi, ui) = net.input_norm().forward_affine();
    let mut stars = vec![input.affine_map(&wi, &ui)?];
    let layers = net.weights().len();
    for (l, (w, b)) in net.weights().iter().zip(net.biases()).enumerate() {
        stars = stars
            .iter()
            .map(|s| s.affine_map(w, b))
            .collect::<Result<_, _>>()?;
        if l + 1 < layers {
            stars = match mode {
                ReachMode::Exact => relu_exact_limited(stars, opts.max_stars)?,
                ReachMode::Approx => stars
                    .iter()
                    .map(|s| relu_approx_with(s, opts.approx_bounds))
                    .collect::<Result<_, _>>()?,
            };
        }
    }
    let (wo, uo) = net.output_norm().inverse_affine();
    Ok(stars
        .iter()
        .map(|s| s.affine_map(&wo, &uo))
        .collect::<Result<_, _>>()?)
}

/// `true` if `x` lies in at least one star.
pub fn union_contains(stars: &[StarSet], x: &[f64]) -> bool {
    stars.iter().any(|s| s.contains(x))
}

/// Output-space point of a star for generator values `mu`.
pub fn star_point(star: &StarSet, mu: &[f64]) -> Vec<f64> {
    (star.center() + star.basis() * DVector::from_column_slice(mu))
        .as_slice()
        .to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sets::Hyperbox;
    use nalgebra::DMatrix;

    fn interval(lo: f64, hi: f64) -> StarSet {
        StarSet::from_box(&Hyperbox::new(vec![lo], vec![hi]).unwrap()).unwrap()
    }

    fn range(s: &StarSet) -> (f64, f64) {
        s.dim_range(0).unwrap()
    }

    #[test]
    fn exact_straddling_interval() {
        let out = relu_exact(vec![interval(-1.0, 1.0)]).unwrap();
        assert_eq!(out.len(), 2);
        let (a, b) = (range(&out[0]), range(&out[1]));
        assert!((a.0 - 0.0).abs() < 1e-12 && (a.1 - 1.0).abs() < 1e-12);
        assert!(b.0.abs() < 1e-12 && b.1.abs() < 1e-12);
        let lo = a.0.min(b.0);
        let hi = a.1.max(b.1);
        assert!(lo.abs() < 1e-12 && (hi - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exact_sign_determined() {
        let pos = interval(1.0, 2.0);
        assert_eq!(relu_exact(vec![pos.clone()]).unwrap(), vec![pos]);
        let neg = relu_exact(vec![interval(-2.0, -1.0)]).unwrap();
        assert_eq!(neg.len(), 1);
        let (l, u) = range(&neg[0]);
        assert!(l.abs() < 1e-15 && u.abs() < 1e-15);
        assert!(relu_exact(Vec::new()).unwrap().is_empty());
    }

    #[test]
    fn approx_triangle() {
        let s = relu_approx(&interval(-1.0, 1.0)).unwrap();
        let (l, u) = range(&s);
        assert!(l.abs() < 1e-12 && (u - 1.0).abs() < 1e-12);
        for e in relu_exact(vec![interval(-1.0, 1.0)]).unwrap() {
            let (a, b) = range(&e);
            assert!(s.contains(&[a]) && s.contains(&[b]));
        }
        let pos = interval(0.5, 2.0);
        assert_eq!(relu_approx(&pos).unwrap(), pos);
        let neg = relu_approx(&interval(-3.0, -0.5)).unwrap();
        let (l, u) = range(&neg);
        assert!(l.abs() < 1e-15 && u.abs() < 1e-15);
    }

    #[test]
    fn zero_weight_network_is_bias_point() {
        let net = Mlp::constant(&[2, 3, 2], &[0.25, -4.0]).unwrap();
        let input = StarSet::from_box(&Hyperbox::new(vec![-1.0; 2], vec![1.0; 2]).unwrap()).unwrap();
        for mode in [ReachMode::Exact, ReachMode::Approx] {
            let out = network_reach(&net, &input, mode, &ReachOptions::default()).unwrap();
            for s in &out {
                let b = s.bounds(BoundsMethod::Lp).unwrap();
                assert!((b.lower[0] - 0.25).abs() < 1e-12 && (b.upper[0] - 0.25).abs() < 1e-12);
                assert!((b.lower[1] + 4.0).abs() < 1e-12 && (b.upper[1] + 4.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn width_mismatch() {
        let net = Mlp::constant(&[2, 3, 1], &[0.0]).unwrap();
        let input = interval(0.0, 1.0);
        assert!(matches!(
            network_reach(&net, &input, ReachMode::Approx, &ReachOptions::default()),
            Err(ReachError::WidthMismatch { .. })
        ));
    }

    #[test]
    fn blow_up_guard() {
        // 6 neurons that each straddle zero along different directions.
        let w1 = DMatrix::from_fn(6, 2, |i, j| ((i * 2 + j) as f64 * 1.3).sin());
        let net = Mlp::from_layers(
            vec![w1, DMatrix::from_element(1, 6, 1.0)],
            vec![DVector::zeros(6), DVector::zeros(1)],
        )
        .unwrap();
        let input = StarSet::from_box(&Hyperbox::new(vec![-1.0; 2], vec![1.0; 2]).unwrap()).unwrap();
        let opts = ReachOptions {
            max_stars: 2,
            ..ReachOptions::default()
        };
        let err = network_reach(&net, &input, ReachMode::Exact, &opts).unwrap_err();
        assert!(err.to_string().contains("approx"));
    }
}
