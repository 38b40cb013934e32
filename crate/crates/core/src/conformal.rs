//! Prediction errors, the PCA error model, residuals, robust conformal
//! calibration and inflating hypercubes.
//!
//! Error vectors are stacked segment by segment; inside a segment the entry
//! for state `k` (1-based within the segment) and coordinate `ℓ` sits at
//! `(k − 1)·n + ℓ`.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_bigint::BigInt;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dense::DenseMatrix;
use crate::neural::{Mlp, NeuralError, SegmentPlan};
use crate::sets::{SetError, StarSet};
use crate::systems::TrajectoryRecord;

pub const ERROR_MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConformalError {
    #[error("{}", infeasible_message(*rank, *count, *delta, *tau, *min_count))]
    InfeasibleCalibration {
        rank: u128,
        count: usize,
        delta: f64,
        tau: f64,
        min_count: Option<usize>,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("need at least {needed} samples, got {found}")]
    TooFewSamples { needed: usize, found: usize },
    #[error("{what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("error model format version {found} is not supported (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },
    #[error("malformed error model: {0}")]
    Malformed(String),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Set(#[from] SetError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn infeasible_message(rank: u128, count: usize, delta: f64, tau: f64, min_count: Option<usize>) -> String {
    let hint = match min_count {
        Some(m) => format!("at least L={m} calibration trajectories are required"),
        None => "δ+τ ≥ 1, so no calibration size suffices; lower δ or τ".to_string(),
    };
    format!("infeasible calibration: ℓ*={rank} > L={count} for δ={delta}, τ={tau}; {hint}")
}

/// Per-segment prediction errors `true − predicted`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionError {
    pub segments: Vec<Vec<f64>>,
}

impl PredictionError {
    pub fn stacked(&self) -> Vec<f64> {
        self.segments.concat()
    }

    pub fn from_stacked(v: &[f64], segment_dims: &[usize]) -> Result<Self, ConformalError> {
        let total: usize = segment_dims.iter().sum();
        if v.len() != total {
            return Err(ConformalError::DimensionMismatch {
                what: "stacked error length",
                expected: total,
                found: v.len(),
            });
        }
        let mut at = 0;
        let segments = segment_dims
            .iter()
            .map(|&d| {
                let s = v[at..at + d].to_vec();
                at += d;
                s
            })
            .collect();
        Ok(Self { segments })
    }
}

/// Errors of one trajectory against the surrogates of the active segments
/// (`nets[i]` belongs to `plan.segments()[i]`).
pub fn prediction_errors(
    record: &TrajectoryRecord,
    nets: &[Mlp],
    plan: &SegmentPlan,
) -> Result<PredictionError, ConformalError> {
    let segs = plan.segments();
    if nets.len() != segs.len() {
        return Err(ConformalError::DimensionMismatch {
            what: "surrogate count vs active segments",
            expected: segs.len(),
            found: nets.len(),
        });
    }
    let mut out = Vec::with_capacity(segs.len());
    for (seg, net) in segs.iter().zip(nets) {
        let end = seg.offset + seg.len;
        if record.states.len() < end {
            return Err(NeuralError::TrajectoryTooShort {
                needed: end,
                found: record.states.len(),
            }
            .into());
        }
        let truth = record.states[seg.offset..end].concat();
        let pred = net.forward(&record.s0)?;
        if pred.len() != truth.len() {
            return Err(ConformalError::DimensionMismatch {
                what: "surrogate output width",
                expected: truth.len(),
                found: pred.len(),
            });
        }
        out.push(truth.iter().zip(&pred).map(|(t, p)| t - p).collect());
    }
    Ok(PredictionError { segments: out })
}

/// Mean and principal directions of one segment's errors.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentPca {
    pub mean: DVector<f64>,
    /// Orthonormal eigenvectors as columns, eigenvalue-descending.
    pub eigvecs: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
}

impl SegmentPca {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResidualKind {
    Pca,
    Baseline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationMeta {
    pub residual: ResidualKind,
    pub count: usize,
    pub delta: f64,
    pub tau: f64,
    pub rank: usize,
    pub quantile: f64,
}

/// Fitted PCA artifacts plus the baseline scaling, both from training errors.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorModel {
    pub plan: SegmentPlan,
    pub segments: Vec<SegmentPca>,
    /// Scaling of the mapped errors, stacked over all active segments.
    pub omega: Vec<f64>,
    /// Baseline per-dimension weights `1 / max |R^j|`.
    pub alpha: Vec<f64>,
    pub calibration: Option<CalibrationMeta>,
}

fn floor_scales(v: &mut [f64]) {
    let max = v.iter().copied().fold(0.0, f64::max);
    let floor = 1e-12 * max + 1e-300;
    for x in v.iter_mut() {
        *x = x.max(floor);
    }
}

fn segment_dims_checked(errors: &[PredictionError], plan: &SegmentPlan) -> Result<Vec<usize>, ConformalError> {
    let first = errors.first().ok_or(ConformalError::TooFewSamples { needed: 1, found: 0 })?;
    let dims: Vec<usize> = first.segments.iter().map(Vec::len).collect();
    let active = plan.segments().len();
    if dims.len() != active {
        return Err(ConformalError::DimensionMismatch {
            what: "error segments vs active segments",
            expected: active,
            found: dims.len(),
        });
    }
    for e in errors {
        if e.segments.len() != dims.len() {
            return Err(ConformalError::DimensionMismatch {
                what: "error segment count",
                expected: dims.len(),
                found: e.segments.len(),
            });
        }
        for (s, &d) in e.segments.iter().zip(&dims) {
            if s.len() != d {
                return Err(ConformalError::DimensionMismatch {
                    what: "error segment length",
                    expected: d,
                    found: s.len(),
                });
            }
            if s.iter().any(|x| !x.is_finite()) {
                return Err(ConformalError::InvalidParameter("non-finite prediction error".into()));
            }
        }
    }
    Ok(dims)
}

fn fit_segment_pca(samples: &[&[f64]]) -> SegmentPca {
    let d = samples[0].len();
    let count = samples.len() as f64;
    let mut mean = DVector::zeros(d);
    for s in samples {
        mean += DVector::from_column_slice(s);
    }
    mean /= count;
    let mut cov = DMatrix::zeros(d, d);
    for s in samples {
        let c = DVector::from_column_slice(s) - &mean;
        cov.ger(1.0, &c, &c, 1.0);
    }
    cov /= count;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut eigvecs = DMatrix::zeros(d, d);
    let mut eigenvalues = Vec::with_capacity(d);
    for (col, &k) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(k).into_owned();
        if let Some(first) = v.iter().find(|x| x.abs() > 1e-12) {
            if *first < 0.0 {
                v = -v;
            }
        }
        eigvecs.set_column(col, &v);
        eigenvalues.push(eig.eigenvalues[k]);
    }
    SegmentPca {
        mean,
        eigvecs,
        eigenvalues,
    }
}

/// Fits per-segment mean and eigenbasis (population covariance), the scaling
/// `ω_j = max_i |r_i^j|` and the baseline weights.
pub fn fit_error_model(train_errors: &[PredictionError], plan: &SegmentPlan) -> Result<ErrorModel, ConformalError> {
    if train_errors.len() < 2 {
        return Err(ConformalError::TooFewSamples {
            needed: 2,
            found: train_errors.len(),
        });
    }
    let dims = segment_dims_checked(train_errors, plan)?;
    let segments: Vec<SegmentPca> = (0..dims.len())
        .into_par_iter()
        .map(|q| {
            let samples: Vec<&[f64]> = train_errors.iter().map(|e| e.segments[q].as_slice()).collect();
            fit_segment_pca(&samples)
        })
        .collect();
    let mut model = ErrorModel {
        plan: plan.clone(),
        segments,
        omega: Vec::new(),
        alpha: fit_baseline_alpha(train_errors)?,
        calibration: None,
    };
    let total: usize = dims.iter().sum();
    let mut omega = vec![0.0f64; total];
    for e in train_errors {
        let r = map_to_principal(e, &model)?;
        for (w, x) in omega.iter_mut().zip(&r) {
            *w = w.max(x.abs());
        }
    }
    floor_scales(&mut omega);
    model.omega = omega;
    Ok(model)
}

/// `α_j = 1 / max_i |R_i^j|` over training errors, floored like `ω`.
pub fn fit_baseline_alpha(train_errors: &[PredictionError]) -> Result<Vec<f64>, ConformalError> {
    let first = train_errors
        .first()
        .ok_or(ConformalError::TooFewSamples { needed: 1, found: 0 })?;
    let mut max_abs = vec![0.0f64; first.segments.iter().map(Vec::len).sum()];
    for e in train_errors {
        let s = e.stacked();
        if s.len() != max_abs.len() {
            return Err(ConformalError::DimensionMismatch {
                what: "stacked error length",
                expected: max_abs.len(),
                found: s.len(),
            });
        }
        for (m, x) in max_abs.iter_mut().zip(&s) {
            *m = m.max(x.abs());
        }
    }
    floor_scales(&mut max_abs);
    Ok(max_abs.iter().map(|m| 1.0 / m).collect())
}

impl ErrorModel {
    pub fn segment_dims(&self) -> Vec<usize> {
        self.segments.iter().map(SegmentPca::dim).collect()
    }

    pub fn total_dim(&self) -> usize {
        self.omega.len()
    }

    /// Start of segment `pos` (position among active segments) in stacked vectors.
    pub fn segment_start(&self, pos: usize) -> usize {
        self.segments[..pos].iter().map(SegmentPca::dim).sum()
    }

    pub fn omega_segment(&self, pos: usize) -> &[f64] {
        let a = self.segment_start(pos);
        &self.omega[a..a + self.segments[pos].dim()]
    }

    pub fn alpha_segment(&self, pos: usize) -> &[f64] {
        let a = self.segment_start(pos);
        &self.alpha[a..a + self.segments[pos].dim()]
    }

    pub fn pca_residual(&self, pe: &PredictionError) -> Result<f64, ConformalError> {
        Ok(residual_pca(&map_to_principal(pe, self)?, &self.omega))
    }

    pub fn baseline_residual(&self, pe: &PredictionError) -> f64 {
        residual_baseline(&pe.stacked(), &self.alpha)
    }

    pub fn residual(&self, kind: ResidualKind, pe: &PredictionError) -> Result<f64, ConformalError> {
        match kind {
            ResidualKind::Pca => self.pca_residual(pe),
            ResidualKind::Baseline => {
                let s = pe.stacked();
                if s.len() != self.alpha.len() {
                    return Err(ConformalError::DimensionMismatch {
                        what: "stacked error length",
                        expected: self.alpha.len(),
                        found: s.len(),
                    });
                }
                Ok(residual_baseline(&s, &self.alpha))
            }
        }
    }

    pub fn to_file(&self) -> ErrorModelFile {
        ErrorModelFile {
            format_version: ERROR_MODEL_FORMAT_VERSION,
            plan: self.plan.clone(),
            segments: self
                .segments
                .iter()
                .map(|s| SegmentPcaFile {
                    mean: s.mean.as_slice().to_vec(),
                    eigvecs: DenseMatrix::from(&s.eigvecs),
                    eigenvalues: s.eigenvalues.clone(),
                })
                .collect(),
            omega: self.omega.clone(),
            alpha: self.alpha.clone(),
            calibration: self.calibration.clone(),
        }
    }

    pub fn from_file(f: ErrorModelFile) -> Result<Self, ConformalError> {
        if f.format_version != ERROR_MODEL_FORMAT_VERSION {
            return Err(ConformalError::VersionMismatch {
                expected: ERROR_MODEL_FORMAT_VERSION,
                found: f.format_version,
            });
        }
        f.plan.validate()?;
        let mut segments = Vec::with_capacity(f.segments.len());
        for s in f.segments {
            let d = s.mean.len();
            let eigvecs = s
                .eigvecs
                .to_dmatrix()
                .filter(|m| m.nrows() == d && m.ncols() == d)
                .ok_or_else(|| ConformalError::Malformed(format!("eigvecs must be {d}×{d}")))?;
            segments.push(SegmentPca {
                mean: DVector::from_vec(s.mean),
                eigvecs,
                eigenvalues: s.eigenvalues,
            });
        }
        let total: usize = segments.iter().map(SegmentPca::dim).sum();
        if f.omega.len() != total || f.alpha.len() != total {
            return Err(ConformalError::Malformed(format!(
                "omega and alpha must have length {total}"
            )));
        }
        if f.omega.iter().chain(&f.alpha).any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(ConformalError::Malformed("omega and alpha must be positive".into()));
        }
        if segments.len() != f.plan.segments().len() {
            return Err(ConformalError::Malformed("segment count does not match plan".into()));
        }
        Ok(Self {
            plan: f.plan,
            segments,
            omega: f.omega,
            alpha: f.alpha,
            calibration: f.calibration,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), ConformalError> {
        fs::write(path, serde_json::to_string_pretty(&self.to_file())?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ConformalError> {
        Self::from_file(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentPcaFile {
    pub mean: Vec<f64>,
    pub eigvecs: DenseMatrix,
    pub eigenvalues: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorModelFile {
    pub format_version: u32,
    pub plan: SegmentPlan,
    pub segments: Vec<SegmentPcaFile>,
    pub omega: Vec<f64>,
    pub alpha: Vec<f64>,
    pub calibration: Option<CalibrationMeta>,
}

/// `r^q = V^qᵀ (PE^q − mean^q)`, stacked.
pub fn map_to_principal(pe: &PredictionError, model: &ErrorModel) -> Result<Vec<f64>, ConformalError> {
    if pe.segments.len() != model.segments.len() {
        return Err(ConformalError::DimensionMismatch {
            what: "error segment count",
            expected: model.segments.len(),
            found: pe.segments.len(),
        });
    }
    let mut out = Vec::with_capacity(model.total_dim());
    for (e, seg) in pe.segments.iter().zip(&model.segments) {
        if e.len() != seg.dim() {
            return Err(ConformalError::DimensionMismatch {
                what: "error segment length",
                expected: seg.dim(),
                found: e.len(),
            });
        }
        let r = seg.eigvecs.tr_mul(&(DVector::from_column_slice(e) - &seg.mean));
        out.extend_from_slice(r.as_slice());
    }
    Ok(out)
}

/// Inverse of [`map_to_principal`]: `PE^q = mean^q + V^q r^q`.
pub fn reconstruct(r: &[f64], model: &ErrorModel) -> Result<PredictionError, ConformalError> {
    if r.len() != model.total_dim() {
        return Err(ConformalError::DimensionMismatch {
            what: "principal vector length",
            expected: model.total_dim(),
            found: r.len(),
        });
    }
    let mut at = 0;
    let segments = model
        .segments
        .iter()
        .map(|seg| {
            let d = seg.dim();
            let v = &seg.mean + &seg.eigvecs * DVector::from_column_slice(&r[at..at + d]);
            at += d;
            v.as_slice().to_vec()
        })
        .collect();
    Ok(PredictionError { segments })
}

/// `max_j |r^j| / ω_j`.
pub fn residual_pca(r: &[f64], omega: &[f64]) -> f64 {
    assert_eq!(r.len(), omega.len(), "residual_pca: length mismatch");
    r.iter().zip(omega).map(|(x, w)| x.abs() / w).fold(0.0, f64::max)
}

/// `max_j α_j |R^j|`.
pub fn residual_baseline(pe: &[f64], alpha: &[f64]) -> f64 {
    assert_eq!(pe.len(), alpha.len(), "residual_baseline: length mismatch");
    pe.iter().zip(alpha).map(|(x, a)| a * x.abs()).fold(0.0, f64::max)
}

/// `x = mantissa · 2^exponent` exactly, for finite non-negative `x`.
fn dyadic(x: f64) -> (BigInt, i64) {
    let bits = x.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i64;
    let frac = bits & ((1u64 << 52) - 1);
    if exp == 0 {
        (BigInt::from(frac), -1074)
    } else {
        (BigInt::from(frac | (1u64 << 52)), exp - 1075)
    }
}

/// `⌈(L+1)(1 + 1/L)(δ+τ)⌉` evaluated exactly on the binary values of δ, τ.
fn rank_value(count: usize, delta: f64, tau: f64) -> BigInt {
    let (md, ed) = dyadic(delta);
    let (mt, et) = dyadic(tau);
    let e = ed.min(et);
    let sum = (md << (ed - e) as usize) + (mt << (et - e) as usize);
    let l = BigInt::from(count);
    let l1 = &l + 1u32;
    let mut num = &l1 * &l1 * sum;
    let mut den = l;
    if e >= 0 {
        num <<= e as usize;
    } else {
        den <<= (-e) as usize;
    }
    (num + &den - 1u32) / den
}

fn check_params(count: usize, delta: f64, tau: f64) -> Result<(), ConformalError> {
    if count == 0 {
        return Err(ConformalError::TooFewSamples { needed: 1, found: 0 });
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(ConformalError::InvalidParameter(format!("δ must lie in (0, 1), got {delta}")));
    }
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(ConformalError::InvalidParameter(format!("τ must be finite and ≥ 0, got {tau}")));
    }
    Ok(())
}

/// Robust conformal rank `ℓ*` for `L = count` calibration residuals.
pub fn robust_rank(count: usize, delta: f64, tau: f64) -> Result<usize, ConformalError> {
    check_params(count, delta, tau)?;
    let rank = rank_value(count, delta, tau);
    if rank > BigInt::from(count) {
        return Err(ConformalError::InfeasibleCalibration {
            rank: u128::try_from(rank).unwrap_or(u128::MAX),
            count,
            delta,
            tau,
            min_count: min_calibration_size(delta, tau),
        });
    }
    Ok(usize::try_from(rank).expect("rank bounded by count"))
}

/// Smallest `L` with `ℓ* ≤ L`, or `None` when `δ + τ ≥ 1`.
pub fn min_calibration_size(delta: f64, tau: f64) -> Option<usize> {
    if check_params(1, delta, tau).is_err() {
        return None;
    }
    let feasible = |l: usize| rank_value(l, delta, tau) <= BigInt::from(l);
    let mut hi = 1usize;
    while !feasible(hi) {
        if hi >= 1usize << 62 {
            return None;
        }
        hi *= 2;
    }
    let mut lo = hi / 2;
    // feasible(hi) holds; feasible(lo) fails unless lo == 0.
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if feasible(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub sorted_residuals: Vec<f64>,
    pub rank: usize,
    pub quantile: f64,
    pub delta: f64,
    pub tau: f64,
    pub count: usize,
}

/// Sorts the residuals and selects `ρ* = ρ_{ℓ*}`.
pub fn calibrate(residuals: &[f64], delta: f64, tau: f64) -> Result<CalibrationResult, ConformalError> {
    if residuals.iter().any(|r| !r.is_finite()) {
        return Err(ConformalError::InvalidParameter("non-finite residual".into()));
    }
    let rank = robust_rank(residuals.len(), delta, tau)?;
    let mut sorted = residuals.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(CalibrationResult {
        quantile: sorted[rank - 1],
        sorted_residuals: sorted,
        rank,
        delta,
        tau,
        count: residuals.len(),
    })
}

impl CalibrationResult {
    pub fn meta(&self, residual: ResidualKind) -> CalibrationMeta {
        CalibrationMeta {
            residual,
            count: self.count,
            delta: self.delta,
            tau: self.tau,
            rank: self.rank,
            quantile: self.quantile,
        }
    }
}

fn check_radius(r: f64) -> Result<(), ConformalError> {
    if !(r >= 0.0 && r.is_finite()) {
        return Err(ConformalError::InvalidParameter(format!("quantile must be finite and ≥ 0, got {r}")));
    }
    Ok(())
}

/// `⟨mean^q, V^q, |μ_j| ≤ ω_j ρ*⟩` for the segment at position `pos`.
pub fn inflating_hypercube_pca(model: &ErrorModel, rho_star: f64, pos: usize) -> Result<StarSet, ConformalError> {
    check_radius(rho_star)?;
    let seg = model.segments.get(pos).ok_or(NeuralError::SegmentOutOfRange {
        index: pos,
        count: model.segments.len(),
    })?;
    let half: Vec<f64> = model.omega_segment(pos).iter().map(|w| w * rho_star).collect();
    Ok(StarSet::with_symmetric_predicate(seg.mean.clone(), seg.eigvecs.clone(), &half)?)
}

/// Origin-centred axis box with half-widths `R*/α_j`.
pub fn inflating_hypercube_baseline(alpha: &[f64], r_star: f64) -> Result<StarSet, ConformalError> {
    check_radius(r_star)?;
    let d = alpha.len();
    let half: Vec<f64> = alpha.iter().map(|a| r_star / a).collect();
    Ok(StarSet::with_symmetric_predicate(
        DVector::zeros(d),
        DMatrix::identity(d, d),
        &half,
    )?)
}

/// Hypercubes for every active segment.
pub fn inflating_hypercubes(
    model: &ErrorModel,
    kind: ResidualKind,
    quantile: f64,
) -> Result<Vec<StarSet>, ConformalError> {
    (0..model.segments.len())
        .map(|pos| match kind {
            ResidualKind::Pca => inflating_hypercube_pca(model, quantile, pos),
            ResidualKind::Baseline => inflating_hypercube_baseline(model.alpha_segment(pos), quantile),
        })
        .collect()
}

/// `Σ_j ln(2 ω_j ρ*)` over segment `pos`.
pub fn log_volume_pca(model: &ErrorModel, rho_star: f64, pos: usize) -> f64 {
    model.omega_segment(pos).iter().map(|w| (2.0 * w * rho_star).ln()).sum()
}

/// `Σ_j ln(2 R*/α_j)`.
pub fn log_volume_baseline(alpha: &[f64], r_star: f64) -> f64 {
    alpha.iter().map(|a| (2.0 * r_star / a).ln()).sum()
}
