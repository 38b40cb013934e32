//! Star sets: `{ c + V μ : A μ ≤ b }`.
//!
//! A star is stored as a center `c ∈ ℝᵈ`, a `d × m` basis `V` and an
//! inequality predicate over the `m` generator coordinates. Equalities are
//! always written as paired inequalities. All operations return new values;
//! a [`StarSet`] never changes after construction.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dense::DenseMatrix;
use crate::linprog::{self, LinearProgram, LpError, LpOutcome};

/// Slack added to every right-hand side when deciding membership.
pub const MEMBERSHIP_TOL: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum SetError {
    #[error("dimension mismatch ({what}): expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("box has lower > upper in dimension {dim} ({lower} > {upper})")]
    InvalidBox { dim: usize, lower: f64, upper: f64 },
    #[error("star set predicate is infeasible")]
    EmptySet,
    #[error("cannot concatenate an empty list of star sets")]
    EmptyList,
    #[error("malformed star set: {0}")]
    Malformed(String),
    #[error(transparent)]
    Lp(#[from] LpError),
}

/// Axis-aligned box `[lower, upper]`, degenerate dimensions allowed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperbox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Hyperbox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, SetError> {
        let b = Self { lower, upper };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), SetError> {
        if self.lower.len() != self.upper.len() {
            return Err(SetError::DimensionMismatch {
                what: "box lower vs upper",
                expected: self.lower.len(),
                found: self.upper.len(),
            });
        }
        if self.lower.is_empty() {
            return Err(SetError::Malformed("box has zero dimensions".into()));
        }
        for (dim, (&lower, &upper)) in self.lower.iter().zip(&self.upper).enumerate() {
            if lower.is_nan() || upper.is_nan() || lower > upper {
                return Err(SetError::InvalidBox { dim, lower, upper });
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *v >= l - tol && *v <= u + tol)
    }

    /// Componentwise `self ⊇ other` up to `tol`.
    pub fn encloses(&self, other: &Hyperbox, tol: f64) -> bool {
        self.dim() == other.dim()
            && (0..self.dim())
                .all(|i| self.lower[i] <= other.lower[i] + tol && self.upper[i] >= other.upper[i] - tol)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundsMethod {
    /// Exact per-dimension extrema, two LPs per dimension.
    Lp,
    /// Outer box from LP ranges of each generator plus interval arithmetic.
    Interval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StarSet {
    center: DVector<f64>,
    basis: DMatrix<f64>,
    pred_a: DMatrix<f64>,
    pred_b: DVector<f64>,
}

impl StarSet {
    pub fn new(
        center: DVector<f64>,
        basis: DMatrix<f64>,
        pred_a: DMatrix<f64>,
        pred_b: DVector<f64>,
    ) -> Result<Self, SetError> {
        if center.is_empty() {
            return Err(SetError::Malformed("star dimension must be ≥ 1".into()));
        }
        if basis.ncols() == 0 {
            return Err(SetError::Malformed("star needs ≥ 1 generator".into()));
        }
        if basis.nrows() != center.len() {
            return Err(SetError::DimensionMismatch {
                what: "basis rows vs center length",
                expected: center.len(),
                found: basis.nrows(),
            });
        }
        if pred_a.ncols() != basis.ncols() {
            return Err(SetError::DimensionMismatch {
                what: "predicate columns vs generator count",
                expected: basis.ncols(),
                found: pred_a.ncols(),
            });
        }
        if pred_a.nrows() != pred_b.len() {
            return Err(SetError::DimensionMismatch {
                what: "predicate rows vs rhs length",
                expected: pred_a.nrows(),
                found: pred_b.len(),
            });
        }
        Ok(Self {
            center,
            basis,
            pred_a,
            pred_b,
        })
    }

    pub fn from_box(bx: &Hyperbox) -> Result<Self, SetError> {
        bx.validate()?;
        let d = bx.dim();
        let center = DVector::from_fn(d, |i, _| 0.5 * (bx.lower[i] + bx.upper[i]));
        let half: Vec<f64> = (0..d).map(|i| 0.5 * (bx.upper[i] - bx.lower[i])).collect();
        let (a, b) = symmetric_bounds(&half);
        Self::new(center, DMatrix::identity(d, d), a, b)
    }

    /// Single point `p`, encoded with one generator pinned to zero.
    pub fn point(p: &[f64]) -> Self {
        let d = p.len();
        Self {
            center: DVector::from_column_slice(p),
            basis: DMatrix::zeros(d, 1),
            pred_a: DMatrix::from_column_slice(2, 1, &[1.0, -1.0]),
            pred_b: DVector::zeros(2),
        }
    }

    /// `{ c + V μ : |μ_j| ≤ half_widths_j }`.
    pub fn with_symmetric_predicate(
        center: DVector<f64>,
        basis: DMatrix<f64>,
        half_widths: &[f64],
    ) -> Result<Self, SetError> {
        if half_widths.len() != basis.ncols() {
            return Err(SetError::DimensionMismatch {
                what: "half widths vs generator count",
                expected: basis.ncols(),
                found: half_widths.len(),
            });
        }
        let (a, b) = symmetric_bounds(half_widths);
        Self::new(center, basis, a, b)
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn num_generators(&self) -> usize {
        self.basis.ncols()
    }

    pub fn num_constraints(&self) -> usize {
        self.pred_a.nrows()
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn predicate(&self) -> (&DMatrix<f64>, &DVector<f64>) {
        (&self.pred_a, &self.pred_b)
    }

    pub fn affine_map(&self, w: &DMatrix<f64>, u: &DVector<f64>) -> Result<Self, SetError> {
        if w.ncols() != self.dim() {
            return Err(SetError::DimensionMismatch {
                what: "map columns vs star dimension",
                expected: self.dim(),
                found: w.ncols(),
            });
        }
        if u.len() != w.nrows() {
            return Err(SetError::DimensionMismatch {
                what: "offset length vs map rows",
                expected: w.nrows(),
                found: u.len(),
            });
        }
        Ok(Self {
            center: w * &self.center + u,
            basis: w * &self.basis,
            pred_a: self.pred_a.clone(),
            pred_b: self.pred_b.clone(),
        })
    }

    pub fn translate(&self, offset: &[f64]) -> Result<Self, SetError> {
        if offset.len() != self.dim() {
            return Err(SetError::DimensionMismatch {
                what: "translation length",
                expected: self.dim(),
                found: offset.len(),
            });
        }
        let mut out = self.clone();
        for (c, o) in out.center.iter_mut().zip(offset) {
            *c += o;
        }
        Ok(out)
    }

    pub fn minkowski_sum(&self, other: &StarSet) -> Result<Self, SetError> {
        if other.dim() != self.dim() {
            return Err(SetError::DimensionMismatch {
                what: "Minkowski sum operand dimensions",
                expected: self.dim(),
                found: other.dim(),
            });
        }
        let d = self.dim();
        let (m1, m2) = (self.num_generators(), other.num_generators());
        let mut basis = DMatrix::zeros(d, m1 + m2);
        basis.view_mut((0, 0), (d, m1)).copy_from(&self.basis);
        basis.view_mut((0, m1), (d, m2)).copy_from(&other.basis);
        let (a, b) = block_diag_predicate(&[self, other]);
        Self::new(&self.center + &other.center, basis, a, b)
    }

    /// Cartesian product: stacked centers, block-diagonal bases, conjoined
    /// predicates.
    pub fn concatenate(parts: &[StarSet]) -> Result<Self, SetError> {
        if parts.is_empty() {
            return Err(SetError::EmptyList);
        }
        let d: usize = parts.iter().map(StarSet::dim).sum();
        let m: usize = parts.iter().map(StarSet::num_generators).sum();
        let mut center = DVector::zeros(d);
        let mut basis = DMatrix::zeros(d, m);
        let (mut r, mut c) = (0, 0);
        for p in parts {
            center.rows_mut(r, p.dim()).copy_from(&p.center);
            basis
                .view_mut((r, c), (p.dim(), p.num_generators()))
                .copy_from(&p.basis);
            r += p.dim();
            c += p.num_generators();
        }
        let refs: Vec<&StarSet> = parts.iter().collect();
        let (a, b) = block_diag_predicate(&refs);
        Self::new(center, basis, a, b)
    }

    /// Range of `coeffs · μ` over the predicate. `None` when empty.
    pub fn generator_functional_range(&self, coeffs: &[f64]) -> Result<Option<(f64, f64)>, SetError> {
        let max = LinearProgram::maximize(coeffs.to_vec(), self.pred_a.clone(), self.pred_b.as_slice().to_vec())?;
        let hi = match linprog::solve(&max)? {
            LpOutcome::Optimal(s) => s.optimal_value,
            LpOutcome::Unbounded => f64::INFINITY,
            LpOutcome::Infeasible => return Ok(None),
        };
        let min = LinearProgram::minimize(coeffs.to_vec(), self.pred_a.clone(), self.pred_b.as_slice().to_vec())?;
        let lo = match linprog::solve(&min)? {
            LpOutcome::Optimal(s) => s.optimal_value,
            LpOutcome::Unbounded => f64::NEG_INFINITY,
            LpOutcome::Infeasible => return Ok(None),
        };
        Ok(Some((lo, hi)))
    }

    /// Exact `[min, max]` of coordinate `i` over the set.
    pub fn dim_range(&self, i: usize) -> Result<(f64, f64), SetError> {
        let row: Vec<f64> = self.basis.row(i).iter().copied().collect();
        let (lo, hi) = self
            .generator_functional_range(&row)?
            .ok_or(SetError::EmptySet)?;
        Ok((self.center[i] + lo, self.center[i] + hi))
    }

    pub fn bounds(&self, method: BoundsMethod) -> Result<Hyperbox, SetError> {
        match method {
            BoundsMethod::Lp => self.bounds_lp(),
            BoundsMethod::Interval => self.bounds_interval(),
        }
    }

    fn bounds_lp(&self) -> Result<Hyperbox, SetError> {
        let mut lower = Vec::with_capacity(self.dim());
        let mut upper = Vec::with_capacity(self.dim());
        for i in 0..self.dim() {
            let (l, u) = self.dim_range(i)?;
            lower.push(l);
            upper.push(u);
        }
        Ok(Hyperbox { lower, upper })
    }

    /// LP range of every generator, then interval arithmetic through `c + Vμ`.
    pub fn generator_ranges(&self) -> Result<Vec<(f64, f64)>, SetError> {
        let m = self.num_generators();
        (0..m)
            .map(|j| {
                let mut e = vec![0.0; m];
                e[j] = 1.0;
                self.generator_functional_range(&e)?.ok_or(SetError::EmptySet)
            })
            .collect()
    }

    fn bounds_interval(&self) -> Result<Hyperbox, SetError> {
        let ranges = self.generator_ranges()?;
        let d = self.dim();
        let mut lower = self.center.as_slice().to_vec();
        let mut upper = lower.clone();
        for i in 0..d {
            for (j, &(lo, hi)) in ranges.iter().enumerate() {
                let v = self.basis[(i, j)];
                if v > 0.0 {
                    lower[i] += v * lo;
                    upper[i] += v * hi;
                } else if v < 0.0 {
                    lower[i] += v * hi;
                    upper[i] += v * lo;
                }
            }
        }
        Ok(Hyperbox { lower, upper })
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.contains_with_tol(x, MEMBERSHIP_TOL)
    }

    /// LP feasibility of `V μ = x − c ∧ A μ ≤ b`, every row relaxed by `tol`.
    pub fn contains_with_tol(&self, x: &[f64], tol: f64) -> bool {
        if x.len() != self.dim() {
            return false;
        }
        let d = self.dim();
        let m = self.num_generators();
        let k = self.num_constraints();
        let mut a = DMatrix::zeros(2 * d + k, m);
        let mut b = Vec::with_capacity(2 * d + k);
        for i in 0..d {
            let r = x[i] - self.center[i];
            for j in 0..m {
                a[(2 * i, j)] = self.basis[(i, j)];
                a[(2 * i + 1, j)] = -self.basis[(i, j)];
            }
            b.push(r + tol);
            b.push(-r + tol);
        }
        a.view_mut((2 * d, 0), (k, m)).copy_from(&self.pred_a);
        b.extend(self.pred_b.iter().map(|v| v + tol));
        linprog::is_feasible(&a, &b).unwrap_or(false)
    }

    pub fn is_empty(&self) -> bool {
        !linprog::is_feasible(&self.pred_a, self.pred_b.as_slice()).unwrap_or(false)
    }

    /// Conjoins `row · μ ≤ rhs`.
    pub fn with_constraint(&self, row: &[f64], rhs: f64) -> Result<Self, SetError> {
        if row.len() != self.num_generators() {
            return Err(SetError::DimensionMismatch {
                what: "constraint row length",
                expected: self.num_generators(),
                found: row.len(),
            });
        }
        let k = self.num_constraints();
        let m = self.num_generators();
        let mut a = self.pred_a.clone().resize_vertically(k + 1, 0.0);
        for j in 0..m {
            a[(k, j)] = row[j];
        }
        let b = self.pred_b.clone().resize_vertically(k + 1, rhs);
        Ok(Self {
            center: self.center.clone(),
            basis: self.basis.clone(),
            pred_a: a,
            pred_b: b,
        })
    }

    /// Projects coordinate `i` onto zero (center entry and basis row).
    pub fn zero_dimension(&self, i: usize) -> Self {
        let mut out = self.clone();
        out.center[i] = 0.0;
        out.basis.row_mut(i).fill(0.0);
        out
    }

    /// Appends a fresh generator with a zero column in every existing
    /// constraint. Returns the new generator's index.
    pub(crate) fn push_generator(&mut self) -> usize {
        let m = self.num_generators();
        self.basis = std::mem::replace(&mut self.basis, DMatrix::zeros(0, 0)).resize_horizontally(m + 1, 0.0);
        self.pred_a = std::mem::replace(&mut self.pred_a, DMatrix::zeros(0, 0)).resize_horizontally(m + 1, 0.0);
        m
    }

    pub(crate) fn push_constraint(&mut self, row: &[f64], rhs: f64) {
        let k = self.num_constraints();
        let m = self.num_generators();
        self.pred_a = std::mem::replace(&mut self.pred_a, DMatrix::zeros(0, 0)).resize_vertically(k + 1, 0.0);
        for j in 0..m {
            self.pred_a[(k, j)] = row[j];
        }
        self.pred_b = std::mem::replace(&mut self.pred_b, DVector::zeros(0)).resize_vertically(k + 1, rhs);
    }

    pub(crate) fn set_coordinate(&mut self, i: usize, center: f64, basis_row: &[f64]) {
        self.center[i] = center;
        for (j, v) in basis_row.iter().enumerate() {
            self.basis[(i, j)] = *v;
        }
    }

    /// Drops constraint rows implied by the generator box (each `μ_j` range
    /// taken from an LP). The represented set is unchanged.
    pub fn remove_redundant_rows(&self) -> Result<Self, SetError> {
        let ranges = self.generator_ranges()?;
        let mut keep = Vec::new();
        for r in 0..self.num_constraints() {
            let worst: f64 = self
                .pred_a
                .row(r)
                .iter()
                .zip(&ranges)
                .map(|(&a, &(lo, hi))| if a > 0.0 { a * hi } else { a * lo })
                .sum();
            // A row bounding a generator directly defines its range; keep it.
            let support = self.pred_a.row(r).iter().filter(|v| **v != 0.0).count();
            if support <= 1 || worst > self.pred_b[r] + linprog::LP_TOL {
                keep.push(r);
            }
        }
        let a = self.pred_a.select_rows(keep.iter());
        let b = self.pred_b.select_rows(keep.iter());
        Self::new(self.center.clone(), self.basis.clone(), a, b)
    }

    pub fn to_json(&self) -> StarSetJson {
        StarSetJson {
            center: self.center.as_slice().to_vec(),
            basis: DenseMatrix::from(&self.basis),
            a: DenseMatrix::from(&self.pred_a),
            b: self.pred_b.as_slice().to_vec(),
        }
    }

    pub fn from_json(j: &StarSetJson) -> Result<Self, SetError> {
        let basis = j
            .basis
            .to_dmatrix()
            .ok_or_else(|| SetError::Malformed("basis data length".into()))?;
        let mut a = j
            .a
            .to_dmatrix()
            .ok_or_else(|| SetError::Malformed("predicate data length".into()))?;
        if a.nrows() == 0 {
            a = DMatrix::zeros(0, basis.ncols());
        }
        Self::new(
            DVector::from_column_slice(&j.center),
            basis,
            a,
            DVector::from_column_slice(&j.b),
        )
    }
}

/// File schema for a single star.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StarSetJson {
    pub center: Vec<f64>,
    pub basis: DenseMatrix,
    #[serde(rename = "A")]
    pub a: DenseMatrix,
    pub b: Vec<f64>,
}

impl Serialize for StarSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_json().serialize(s)
    }
}

impl<'de> Deserialize<'de> for StarSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let j = StarSetJson::deserialize(d)?;
        StarSet::from_json(&j).map_err(serde::de::Error::custom)
    }
}

fn symmetric_bounds(half: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
    let m = half.len();
    let mut a = DMatrix::zeros(2 * m, m);
    let mut b = DVector::zeros(2 * m);
    for j in 0..m {
        a[(2 * j, j)] = 1.0;
        a[(2 * j + 1, j)] = -1.0;
        b[2 * j] = half[j];
        b[2 * j + 1] = half[j];
    }
    (a, b)
}

fn block_diag_predicate(parts: &[&StarSet]) -> (DMatrix<f64>, DVector<f64>) {
    let rows: usize = parts.iter().map(|p| p.num_constraints()).sum();
    let cols: usize = parts.iter().map(|p| p.num_generators()).sum();
    let mut a = DMatrix::zeros(rows, cols);
    let mut b = DVector::zeros(rows);
    let (mut r, mut c) = (0, 0);
    for p in parts {
        let (k, m) = (p.num_constraints(), p.num_generators());
        a.view_mut((r, c), (k, m)).copy_from(&p.pred_a);
        b.rows_mut(r, k).copy_from(&p.pred_b);
        r += k;
        c += m;
    }
    (a, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_box(d: usize) -> StarSet {
        StarSet::from_box(&Hyperbox::new(vec![-1.0; d], vec![1.0; d]).unwrap()).unwrap()
    }

    fn close(a: &Hyperbox, lower: &[f64], upper: &[f64]) -> bool {
        a.lower.iter().zip(lower).all(|(x, y)| (x - y).abs() < 1e-9)
            && a.upper.iter().zip(upper).all(|(x, y)| (x - y).abs() < 1e-9)
    }

    #[test]
    fn from_box_square() {
        let s = unit_box(2);
        assert_eq!(s.center().as_slice(), &[0.0, 0.0]);
        assert_eq!(s.basis(), &DMatrix::identity(2, 2));
        let b = s.bounds(BoundsMethod::Lp).unwrap();
        assert!(close(&b, &[-1.0, -1.0], &[1.0, 1.0]));
    }

    #[test]
    fn from_box_point_and_offset() {
        let p = StarSet::from_box(&Hyperbox::new(vec![0.0], vec![0.0]).unwrap()).unwrap();
        assert_eq!(p.predicate().1.as_slice(), &[0.0, 0.0]);
        assert!(!p.is_empty());
        let s = StarSet::from_box(&Hyperbox::new(vec![-0.1], vec![0.3]).unwrap()).unwrap();
        assert!((s.center()[0] - 0.1).abs() < 1e-15);
        assert!((s.predicate().1[0] - 0.2).abs() < 1e-15);
        assert!((s.predicate().1[1] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn from_box_rejects_inverted() {
        assert!(matches!(
            Hyperbox::new(vec![1.0], vec![0.0]),
            Err(SetError::InvalidBox { dim: 0, .. })
        ));
    }

    #[test]
    fn affine_maps() {
        let s = unit_box(3);
        let id = s
            .affine_map(&DMatrix::identity(3, 3), &DVector::zeros(3))
            .unwrap();
        assert_eq!(id, s);
        let scaled = s
            .affine_map(&(DMatrix::identity(3, 3) * 2.0), &DVector::zeros(3))
            .unwrap();
        assert!(close(&scaled.bounds(BoundsMethod::Lp).unwrap(), &[-2.0; 3], &[2.0; 3]));
        let sum = unit_box(2)
            .affine_map(&DMatrix::from_row_slice(1, 2, &[1.0, 1.0]), &DVector::zeros(1))
            .unwrap();
        assert!(close(&sum.bounds(BoundsMethod::Lp).unwrap(), &[-2.0], &[2.0]));
        assert!(s
            .affine_map(&DMatrix::identity(2, 2), &DVector::zeros(2))
            .is_err());
    }

    #[test]
    fn minkowski_intervals() {
        let a = unit_box(1);
        let b = StarSet::from_box(&Hyperbox::new(vec![-0.5], vec![0.5]).unwrap()).unwrap();
        let s = a.minkowski_sum(&b).unwrap();
        assert!(close(&s.bounds(BoundsMethod::Lp).unwrap(), &[-1.5], &[1.5]));
        let shifted = a.minkowski_sum(&StarSet::point(&[3.0])).unwrap();
        assert!(close(&shifted.bounds(BoundsMethod::Lp).unwrap(), &[2.0], &[4.0]));
        assert!(a.minkowski_sum(&unit_box(2)).is_err());
    }

    #[test]
    fn concat_bounds() {
        let a = unit_box(1);
        let b = StarSet::from_box(&Hyperbox::new(vec![0.0], vec![2.0]).unwrap()).unwrap();
        let c = StarSet::concatenate(&[a.clone(), b]).unwrap();
        assert!(close(&c.bounds(BoundsMethod::Lp).unwrap(), &[-1.0, 0.0], &[1.0, 2.0]));
        assert_eq!(StarSet::concatenate(std::slice::from_ref(&a)).unwrap(), a);
        assert!(matches!(StarSet::concatenate(&[]), Err(SetError::EmptyList)));
    }

    #[test]
    fn rotated_bounds_and_interval() {
        let s = StarSet::with_symmetric_predicate(
            DVector::zeros(2),
            DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, -1.0]),
            &[1.0, 1.0],
        )
        .unwrap();
        let lp = s.bounds(BoundsMethod::Lp).unwrap();
        assert!(close(&lp, &[-2.0, -2.0], &[2.0, 2.0]));
        let iv = s.bounds(BoundsMethod::Interval).unwrap();
        assert!(iv.encloses(&lp, 1e-12));
    }

    #[test]
    fn membership_basics() {
        let s = unit_box(3);
        assert!(s.contains(&[0.0, 0.0, 0.0]));
        assert!(!s.contains(&[2.0, 0.0, 0.0]));
        assert!(unit_box(2).contains(&[1.0, 1.0]));
        assert!(!unit_box(2).contains(&[1.0, 1.0, 0.0]));
    }

    #[test]
    fn emptiness() {
        let contradictory = StarSet::new(
            DVector::zeros(1),
            DMatrix::identity(1, 1),
            DMatrix::from_column_slice(2, 1, &[1.0, -1.0]),
            DVector::from_column_slice(&[-1.0, -1.0]),
        )
        .unwrap();
        assert!(contradictory.is_empty());
        assert!(matches!(
            contradictory.bounds(BoundsMethod::Lp),
            Err(SetError::EmptySet)
        ));
        assert!(!unit_box(2).is_empty());
        assert!(!StarSet::point(&[1.0, 2.0]).is_empty());
    }

    #[test]
    fn redundant_rows_dropped() {
        let s = unit_box(2)
            .with_constraint(&[1.0, 1.0], 5.0)
            .unwrap()
            .with_constraint(&[1.0, 1.0], 1.0)
            .unwrap();
        let r = s.remove_redundant_rows().unwrap();
        assert_eq!(r.num_constraints(), 5);
        assert!(r.contains(&[0.5, 0.5]));
        assert!(!r.contains(&[0.9, 0.9]));
    }

    #[test]
    fn json_round_trip() {
        let s = unit_box(2).with_constraint(&[1.0, -2.0], 0.25).unwrap();
        let text = serde_json::to_string(&s).unwrap();
        assert!(text.contains("\"A\""));
        let back: StarSet = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
    }
}
