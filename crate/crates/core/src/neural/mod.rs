//! Feed-forward ReLU surrogates mapping an initial state to a stacked
//! trajectory segment.
//!
//! A network computes `denorm_out(W_L · relu(… relu(W_1 · norm_in(x) + b_1) …) + b_L)`.
//! Hidden layers are ReLU, the output layer is linear, and both ends carry a
//! per-dimension affine normalizer `x ↦ (x − offset) / scale`.

mod plan;
mod train;

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dense::DenseMatrix;

pub use plan::{Segment, SegmentPlan};
pub use train::{fit, segment_targets, train_segment, TrainConfig, TrainReport};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("width mismatch ({what}): expected {expected}, found {found}")]
    WidthMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("networks differ in {0}; cannot interpolate")]
    ShapeMismatch(&'static str),
    #[error("segment index {index} out of range for {count} segments")]
    SegmentOutOfRange { index: usize, count: usize },
    #[error("invalid segment plan: {0}")]
    InvalidPlan(String),
    #[error("empty training set")]
    EmptyDataset,
    #[error("dataset role must be `train`, found `{0}`")]
    WrongRole(String),
    #[error("trajectories of length {found} are too short for segment ending at step {needed}")]
    TrajectoryTooShort { needed: usize, found: usize },
    #[error("invalid network: {0}")]
    Invalid(String),
    #[error("model format version {found} unsupported (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },
    #[error("malformed model file: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// `x ↦ (x − offset) / scale`, `scale > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub scale: Vec<f64>,
    pub offset: Vec<f64>,
}

impl Normalizer {
    pub fn identity(dim: usize) -> Self {
        Self {
            scale: vec![1.0; dim],
            offset: vec![0.0; dim],
        }
    }

    /// Z-score from sample columns; a constant dimension keeps unit scale.
    pub fn fit(samples: &[Vec<f64>]) -> Self {
        let dim = samples[0].len();
        let count = samples.len() as f64;
        let mut offset = vec![0.0; dim];
        for s in samples {
            for (o, v) in offset.iter_mut().zip(s) {
                *o += v;
            }
        }
        offset.iter_mut().for_each(|o| *o /= count);
        let mut var = vec![0.0; dim];
        for s in samples {
            for ((acc, v), m) in var.iter_mut().zip(s).zip(&offset) {
                *acc += (v - m) * (v - m);
            }
        }
        let scale = var
            .iter()
            .map(|v| {
                let sd = (v / count).sqrt();
                if sd > 1e-12 && sd.is_finite() {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { scale, offset }
    }

    pub fn dim(&self) -> usize {
        self.scale.len()
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.scale.iter().zip(&self.offset))
            .map(|(v, (s, o))| (v - o) / s)
            .collect()
    }

    pub fn denormalize(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.scale.iter().zip(&self.offset))
            .map(|(v, (s, o))| v * s + o)
            .collect()
    }

    /// The normalization as an affine map `(W, u)`.
    pub fn forward_affine(&self) -> (DMatrix<f64>, DVector<f64>) {
        let w = DMatrix::from_diagonal(&DVector::from_iterator(
            self.dim(),
            self.scale.iter().map(|s| 1.0 / s),
        ));
        let u = DVector::from_iterator(
            self.dim(),
            self.scale.iter().zip(&self.offset).map(|(s, o)| -o / s),
        );
        (w, u)
    }

    /// The denormalization as an affine map `(W, u)`.
    pub fn inverse_affine(&self) -> (DMatrix<f64>, DVector<f64>) {
        let w = DMatrix::from_diagonal(&DVector::from_column_slice(&self.scale));
        (w, DVector::from_column_slice(&self.offset))
    }

    fn validate(&self) -> Result<(), NeuralError> {
        if self.scale.len() != self.offset.len() {
            return Err(NeuralError::Invalid("normalizer scale/offset lengths differ".into()));
        }
        if self.scale.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(NeuralError::Invalid("normalizer scale must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layer_widths: Vec<usize>,
    weights: Vec<DMatrix<f64>>,
    biases: Vec<DVector<f64>>,
    input_norm: Normalizer,
    output_norm: Normalizer,
}

impl Mlp {
    pub fn new(
        weights: Vec<DMatrix<f64>>,
        biases: Vec<DVector<f64>>,
        input_norm: Normalizer,
        output_norm: Normalizer,
    ) -> Result<Self, NeuralError> {
        if weights.is_empty() {
            return Err(NeuralError::Invalid("network needs at least one layer".into()));
        }
        if weights.len() != biases.len() {
            return Err(NeuralError::Invalid("weights and biases differ in layer count".into()));
        }
        let mut widths = vec![weights[0].ncols()];
        for (l, (w, b)) in weights.iter().zip(&biases).enumerate() {
            if w.ncols() != *widths.last().unwrap() {
                return Err(NeuralError::WidthMismatch {
                    what: "layer input width",
                    expected: *widths.last().unwrap(),
                    found: w.ncols(),
                });
            }
            if b.len() != w.nrows() {
                return Err(NeuralError::Invalid(format!("bias {l} length mismatch")));
            }
            widths.push(w.nrows());
        }
        input_norm.validate()?;
        output_norm.validate()?;
        if input_norm.dim() != widths[0] || output_norm.dim() != *widths.last().unwrap() {
            return Err(NeuralError::Invalid("normalizer width mismatch".into()));
        }
        Ok(Self {
            layer_widths: widths,
            weights,
            biases,
            input_norm,
            output_norm,
        })
    }

    /// Network with identity normalizers.
    pub fn from_layers(weights: Vec<DMatrix<f64>>, biases: Vec<DVector<f64>>) -> Result<Self, NeuralError> {
        let n_in = weights.first().map_or(0, |w| w.ncols());
        let n_out = weights.last().map_or(0, |w| w.nrows());
        Self::new(weights, biases, Normalizer::identity(n_in), Normalizer::identity(n_out))
    }

    /// All-zero weights with the given output bias.
    pub fn constant(layer_widths: &[usize], output_bias: &[f64]) -> Result<Self, NeuralError> {
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in layer_widths.windows(2) {
            weights.push(DMatrix::zeros(w[1], w[0]));
            biases.push(DVector::zeros(w[1]));
        }
        if let Some(last) = biases.last_mut() {
            if last.len() != output_bias.len() {
                return Err(NeuralError::WidthMismatch {
                    what: "output bias",
                    expected: last.len(),
                    found: output_bias.len(),
                });
            }
            last.copy_from_slice(output_bias);
        }
        Self::from_layers(weights, biases)
    }

    pub fn layer_widths(&self) -> &[usize] {
        &self.layer_widths
    }

    pub fn input_dim(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_widths.last().unwrap()
    }

    pub fn weights(&self) -> &[DMatrix<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[DVector<f64>] {
        &self.biases
    }

    pub fn input_norm(&self) -> &Normalizer {
        &self.input_norm
    }

    pub fn output_norm(&self) -> &Normalizer {
        &self.output_norm
    }

    pub(crate) fn params_mut(&mut self) -> (&mut [DMatrix<f64>], &mut [DVector<f64>]) {
        (&mut self.weights, &mut self.biases)
    }

    pub fn forward(&self, s0: &[f64]) -> Result<Vec<f64>, NeuralError> {
        if s0.len() != self.input_dim() {
            return Err(NeuralError::WidthMismatch {
                what: "network input",
                expected: self.input_dim(),
                found: s0.len(),
            });
        }
        let mut z = DVector::from_vec(self.input_norm.normalize(s0));
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            z = w * z + b;
            if l < last {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
        Ok(self.output_norm.denormalize(z.as_slice()))
    }

    /// Equivalent network with identity normalizers (normalizers folded into
    /// the first and last layers).
    pub fn fold_normalizers(&self) -> Mlp {
        let mut weights = self.weights.clone();
        let mut biases = self.biases.clone();
        let (wi, ui) = self.input_norm.forward_affine();
        biases[0] = &weights[0] * ui + &biases[0];
        weights[0] = &weights[0] * wi;
        let last = weights.len() - 1;
        let (wo, uo) = self.output_norm.inverse_affine();
        biases[last] = &wo * &biases[last] + uo;
        weights[last] = &wo * &weights[last];
        Mlp::from_layers(weights, biases).expect("folding preserves shapes")
    }

    pub fn to_file(&self) -> ModelFile {
        ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            layer_widths: self.layer_widths.clone(),
            weights: self.weights.iter().map(DenseMatrix::from).collect(),
            biases: self.biases.iter().map(|b| b.as_slice().to_vec()).collect(),
            input_norm: self.input_norm.clone(),
            output_norm: self.output_norm.clone(),
        }
    }

    pub fn from_file(f: ModelFile) -> Result<Self, NeuralError> {
        if f.format_version != MODEL_FORMAT_VERSION {
            return Err(NeuralError::VersionMismatch {
                expected: MODEL_FORMAT_VERSION,
                found: f.format_version,
            });
        }
        let weights = f
            .weights
            .iter()
            .map(|w| {
                w.to_dmatrix()
                    .ok_or_else(|| NeuralError::Invalid("weight data length".into()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let biases = f.biases.into_iter().map(DVector::from_vec).collect();
        let net = Self::new(weights, biases, f.input_norm, f.output_norm)?;
        if net.layer_widths != f.layer_widths {
            return Err(NeuralError::Invalid("layer_widths disagree with weights".into()));
        }
        Ok(net)
    }

    pub fn save(&self, path: &Path) -> Result<(), NeuralError> {
        let text = serde_json::to_string_pretty(&self.to_file())?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NeuralError> {
        let text = std::fs::read_to_string(path)?;
        let f: ModelFile = serde_json::from_str(&text)?;
        Self::from_file(f)
    }
}

/// Model file schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub layer_widths: Vec<usize>,
    pub weights: Vec<DenseMatrix>,
    pub biases: Vec<Vec<f64>>,
    pub input_norm: Normalizer,
    pub output_norm: Normalizer,
}

/// Parameter-space convex combination `(1 − λ)·a + λ·b`.
pub fn interpolate(a: &Mlp, b: &Mlp, lambda: f64) -> Result<Mlp, NeuralError> {
    if a.layer_widths != b.layer_widths {
        return Err(NeuralError::ShapeMismatch("layer widths"));
    }
    if a.input_norm != b.input_norm || a.output_norm != b.output_norm {
        return Err(NeuralError::ShapeMismatch("normalizers"));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(NeuralError::Invalid(format!("interpolation weight {lambda} outside [0, 1]")));
    }
    if lambda == 0.0 {
        return Ok(a.clone());
    }
    if lambda == 1.0 {
        return Ok(b.clone());
    }
    let mix = |x: f64, y: f64| (1.0 - lambda) * x + lambda * y;
    let weights = a
        .weights
        .iter()
        .zip(&b.weights)
        .map(|(wa, wb)| wa.zip_map(wb, mix))
        .collect();
    let biases = a
        .biases
        .iter()
        .zip(&b.biases)
        .map(|(ba, bb)| ba.zip_map(bb, mix))
        .collect();
    Mlp::new(weights, biases, a.input_norm.clone(), a.output_norm.clone())
}
