//! Stochastic difference-equation benchmarks `s_{k+1} = f(s_k) + v_k`,
//! `v_k ~ N(0, Σ_v)`, and i.i.d. trajectory datasets drawn from them.
//!
//! Every record `i` of a dataset draws from its own ChaCha stream
//! (`stream = i`) keyed by the dataset seed and role, so generation order and
//! thread count never change the data.

use std::fmt;
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sets::Hyperbox;

pub const DATASET_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SystemError {
    #[error("invalid system spec: {0}")]
    InvalidSpec(String),
    #[error("dynamics produced a non-finite state at step {step}")]
    NonFinite { step: usize },
    #[error("initial state has length {found}, system dimension is {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("dataset needs at least one record")]
    EmptyDataset,
    #[error("covariance scale must be positive, got {0}")]
    InvalidScale(f64),
    #[error("malformed dataset file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Built-in step functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Dynamics {
    /// `x ↦ a · R(theta) · x` in the plane.
    Linear2d { a: f64, theta: f64 },
    /// Euler-discretized Van der Pol oscillator.
    Vanderpol2d { mu: f64, dt: f64 },
    /// Unicycle `(x, y, heading)` at constant speed and turn rate.
    Dubins3d { speed: f64, turn_rate: f64, dt: f64 },
    /// Linearized quadcopter hover under PD attitude/altitude feedback.
    Quadhover12d { dt: f64 },
}

impl Dynamics {
    pub fn state_dim(&self) -> usize {
        match self {
            Dynamics::Linear2d { .. } | Dynamics::Vanderpol2d { .. } => 2,
            Dynamics::Dubins3d { .. } => 3,
            Dynamics::Quadhover12d { .. } => 12,
        }
    }

    pub fn step(&self, s: &[f64]) -> Vec<f64> {
        match *self {
            Dynamics::Linear2d { a, theta } => {
                let (sn, cs) = theta.sin_cos();
                vec![a * (cs * s[0] - sn * s[1]), a * (sn * s[0] + cs * s[1])]
            }
            Dynamics::Vanderpol2d { mu, dt } => {
                let (x, y) = (s[0], s[1]);
                vec![x + dt * y, y + dt * (mu * (1.0 - x * x) * y - x)]
            }
            Dynamics::Dubins3d { speed, turn_rate, dt } => {
                let (sn, cs) = s[2].sin_cos();
                vec![s[0] + dt * speed * cs, s[1] + dt * speed * sn, s[2] + dt * turn_rate]
            }
            Dynamics::Quadhover12d { dt } => quad_hover_step(s, dt),
        }
    }
}

const GRAVITY: f64 = 9.81;

fn quad_hover_step(s: &[f64], dt: f64) -> Vec<f64> {
    // position 0..3, velocity 3..6, roll/pitch/yaw 6..9, body rates 9..12
    const DRAG: f64 = 0.5;
    const KZ: f64 = 4.0;
    const CZ: f64 = 4.0;
    const KP: f64 = 16.0;
    const KD: f64 = 8.0;
    let mut d = [0.0; 12];
    d[0] = s[3];
    d[1] = s[4];
    d[2] = s[5];
    d[3] = GRAVITY * s[7] - DRAG * s[3];
    d[4] = -GRAVITY * s[6] - DRAG * s[4];
    d[5] = -KZ * s[2] - CZ * s[5];
    d[6] = s[9];
    d[7] = s[10];
    d[8] = s[11];
    for i in 0..3 {
        d[9 + i] = -KP * s[6 + i] - KD * s[9 + i];
    }
    s.iter().zip(d).map(|(x, dx)| x + dt * dx).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub name: String,
    pub state_dim: usize,
    pub dynamics: Dynamics,
    /// Process-noise covariance `Σ_v`, row-major `n × n`.
    pub noise_cov: Vec<Vec<f64>>,
    /// Initial set `I`; initial states are uniform over it.
    pub initial_set: Hyperbox,
}

impl SystemSpec {
    pub fn validate(&self) -> Result<(), SystemError> {
        let n = self.dynamics.state_dim();
        if self.state_dim != n {
            return Err(SystemError::InvalidSpec(format!(
                "state_dim {} but dynamics has dimension {n}",
                self.state_dim
            )));
        }
        if self.noise_cov.len() != n || self.noise_cov.iter().any(|r| r.len() != n) {
            return Err(SystemError::InvalidSpec(format!("noise_cov must be {n}×{n}")));
        }
        let cov = self.cov_matrix();
        if cov.iter().any(|v| !v.is_finite()) {
            return Err(SystemError::InvalidSpec("noise_cov has non-finite entries".into()));
        }
        let scale = cov.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if (&cov - cov.transpose()).iter().any(|v| v.abs() > 1e-12 * scale.max(1e-300)) {
            return Err(SystemError::InvalidSpec("noise_cov is not symmetric".into()));
        }
        let eig = SymmetricEigen::new(cov);
        if eig.eigenvalues.iter().any(|&l| l < -1e-10 * scale.max(1e-300)) {
            return Err(SystemError::InvalidSpec("noise_cov is not positive semidefinite".into()));
        }
        self.initial_set
            .validate()
            .map_err(|e| SystemError::InvalidSpec(format!("initial set: {e}")))?;
        if self.initial_set.dim() != n {
            return Err(SystemError::InvalidSpec(format!(
                "initial set has dimension {}, expected {n}",
                self.initial_set.dim()
            )));
        }
        Ok(())
    }

    pub fn cov_matrix(&self) -> DMatrix<f64> {
        let n = self.noise_cov.len();
        DMatrix::from_fn(n, n, |i, j| self.noise_cov[i][j])
    }

    /// Built-in benchmark by name with its default parameters.
    pub fn builtin(name: &str) -> Option<Self> {
        let spec = match name {
            "linear2d" => linear2d(0.9, 0.0, 0.05, 0.0),
            "vanderpol2d" => Self {
                name: name.into(),
                state_dim: 2,
                dynamics: Dynamics::Vanderpol2d { mu: 1.0, dt: 0.05 },
                noise_cov: diag(&[1e-4, 1e-4]),
                initial_set: Hyperbox {
                    lower: vec![1.0, 0.0],
                    upper: vec![1.5, 0.5],
                },
            },
            "dubins3d" => Self {
                name: name.into(),
                state_dim: 3,
                dynamics: Dynamics::Dubins3d {
                    speed: 1.0,
                    turn_rate: 0.5,
                    dt: 0.1,
                },
                noise_cov: diag(&[1e-4, 1e-4, 1e-5]),
                initial_set: Hyperbox {
                    lower: vec![-0.1, -0.1, -0.2],
                    upper: vec![0.1, 0.1, 0.2],
                },
            },
            "quadhover12d" => {
                let mut d = vec![0.05_f64.powi(2); 6];
                d.extend(vec![0.01_f64.powi(2); 6]);
                Self {
                    name: name.into(),
                    state_dim: 12,
                    dynamics: Dynamics::Quadhover12d { dt: 0.05 },
                    noise_cov: diag(&d),
                    initial_set: Hyperbox {
                        lower: [vec![-0.1; 6], vec![-0.05; 6]].concat(),
                        upper: [vec![0.1; 6], vec![0.05; 6]].concat(),
                    },
                }
            }
            _ => return None,
        };
        Some(spec)
    }

    /// Deployment variant with `Σ_v` scaled by `covariance_scale`.
    pub fn shift(&self, covariance_scale: f64) -> Result<Self, SystemError> {
        if !(covariance_scale > 0.0) || !covariance_scale.is_finite() {
            return Err(SystemError::InvalidScale(covariance_scale));
        }
        let mut out = self.clone();
        for row in out.noise_cov.iter_mut() {
            for v in row.iter_mut() {
                *v *= covariance_scale;
            }
        }
        Ok(out)
    }
}

/// Planar `a·R(theta)` system with noise std `sigma` and cross-correlation `corr`.
pub fn linear2d(a: f64, theta: f64, sigma: f64, corr: f64) -> SystemSpec {
    let v = sigma * sigma;
    SystemSpec {
        name: "linear2d".into(),
        state_dim: 2,
        dynamics: Dynamics::Linear2d { a, theta },
        noise_cov: vec![vec![v, corr * v], vec![corr * v, v]],
        initial_set: Hyperbox {
            lower: vec![-1.0, -1.0],
            upper: vec![1.0, 1.0],
        },
    }
}

fn diag(d: &[f64]) -> Vec<Vec<f64>> {
    (0..d.len())
        .map(|i| (0..d.len()).map(|j| if i == j { d[i] } else { 0.0 }).collect())
        .collect()
}

/// `v = L z`, `z ~ N(0, I)`, with `L Lᵀ = Σ_v`.
#[derive(Debug, Clone)]
pub struct NoiseSampler {
    factor: Option<DMatrix<f64>>,
    dim: usize,
}

impl NoiseSampler {
    pub fn new(cov: &DMatrix<f64>) -> Self {
        let dim = cov.nrows();
        if cov.iter().all(|v| *v == 0.0) {
            return Self { factor: None, dim };
        }
        let factor = match cov.clone().cholesky() {
            Some(ch) => ch.l(),
            None => {
                // Singular PSD: clip eigenvalues at zero.
                let eig = SymmetricEigen::new(cov.clone());
                let sqrt = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
                &eig.eigenvectors * DMatrix::from_diagonal(&sqrt)
            }
        };
        Self {
            factor: Some(factor),
            dim,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<DVector<f64>> {
        let l = self.factor.as_ref()?;
        let z = DVector::from_fn(self.dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        Some(l * z)
    }
}

/// Simulates `K` steps from `s0`; returns `s_1 … s_K`.
pub fn simulate<R: Rng + ?Sized>(
    spec: &SystemSpec,
    s0: &[f64],
    horizon: usize,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>, SystemError> {
    let sampler = NoiseSampler::new(&spec.cov_matrix());
    simulate_with(spec, &sampler, s0, horizon, rng)
}

pub fn simulate_with<R: Rng + ?Sized>(
    spec: &SystemSpec,
    sampler: &NoiseSampler,
    s0: &[f64],
    horizon: usize,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>, SystemError> {
    if s0.len() != spec.state_dim {
        return Err(SystemError::DimensionMismatch {
            expected: spec.state_dim,
            found: s0.len(),
        });
    }
    let mut states = Vec::with_capacity(horizon);
    let mut s = s0.to_vec();
    for k in 1..=horizon {
        let mut next = spec.dynamics.step(&s);
        if let Some(v) = sampler.sample(rng) {
            for (x, e) in next.iter_mut().zip(v.iter()) {
                *x += e;
            }
        }
        if next.iter().any(|x| !x.is_finite()) {
            return Err(SystemError::NonFinite { step: k });
        }
        states.push(next.clone());
        s = next;
    }
    Ok(states)
}

pub fn sample_initial<R: Rng + ?Sized>(set: &Hyperbox, rng: &mut R) -> Vec<f64> {
    set.lower
        .iter()
        .zip(&set.upper)
        .map(|(l, u)| l + (u - l) * rng.random::<f64>())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Train,
    Calibration,
    Validation,
}

impl Role {
    fn salt(self) -> u64 {
        match self {
            Role::Train => 0x7472_6169_6e00_0001,
            Role::Calibration => 0x6361_6c69_6200_0002,
            Role::Validation => 0x7661_6c69_6400_0003,
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Role::Train => "train",
            Role::Calibration => "calibration",
            Role::Validation => "validation",
        };
        f.write_str(s)
    }
}

/// SplitMix64 finalizer.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent generator for record `index` of a `(seed, key)` family.
pub fn record_rng(seed: u64, key: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, key));
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub s0: Vec<f64>,
    /// `s_1 … s_K`.
    pub states: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryDataset {
    pub spec: SystemSpec,
    pub horizon: usize,
    pub role: Role,
    pub seed: u64,
    pub records: Vec<TrajectoryRecord>,
}

/// JSON sidecar accompanying a dataset CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub format_version: u32,
    pub role: Role,
    pub seed: u64,
    pub horizon: usize,
    pub count: usize,
    pub spec: SystemSpec,
}

pub fn make_dataset(
    spec: &SystemSpec,
    horizon: usize,
    count: usize,
    role: Role,
    seed: u64,
) -> Result<TrajectoryDataset, SystemError> {
    if count == 0 {
        return Err(SystemError::EmptyDataset);
    }
    spec.validate()?;
    let sampler = NoiseSampler::new(&spec.cov_matrix());
    let records = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = record_rng(seed, role.salt(), i as u64);
            let s0 = sample_initial(&spec.initial_set, &mut rng);
            let states = simulate_with(spec, &sampler, &s0, horizon, &mut rng)?;
            Ok(TrajectoryRecord { s0, states })
        })
        .collect::<Result<Vec<_>, SystemError>>()?;
    Ok(TrajectoryDataset {
        spec: spec.clone(),
        horizon,
        role,
        seed,
        records,
    })
}

impl TrajectoryDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn meta(&self) -> DatasetMeta {
        DatasetMeta {
            format_version: DATASET_FORMAT_VERSION,
            role: self.role,
            seed: self.seed,
            horizon: self.horizon,
            count: self.records.len(),
            spec: self.spec.clone(),
        }
    }

    /// Writes `traj_id,k,x1..xn` rows (`k = 0` holds `s0`) plus the sidecar.
    pub fn save(&self, csv_path: &Path, meta_path: &Path) -> Result<(), SystemError> {
        let n = self.spec.state_dim;
        let mut w = csv::Writer::from_path(csv_path)?;
        let mut header = vec!["traj_id".to_string(), "k".to_string()];
        header.extend((1..=n).map(|i| format!("x{i}")));
        w.write_record(&header)?;
        let mut row = Vec::with_capacity(n + 2);
        for (id, rec) in self.records.iter().enumerate() {
            for (k, s) in std::iter::once(&rec.s0).chain(&rec.states).enumerate() {
                row.clear();
                row.push(id.to_string());
                row.push(k.to_string());
                row.extend(s.iter().map(|v| v.to_string()));
                w.write_record(&row)?;
            }
        }
        w.flush()?;
        std::fs::write(meta_path, serde_json::to_string_pretty(&self.meta())?)?;
        Ok(())
    }

    pub fn load(csv_path: &Path, meta_path: &Path) -> Result<Self, SystemError> {
        let meta: DatasetMeta = serde_json::from_str(&std::fs::read_to_string(meta_path)?)?;
        if meta.format_version != DATASET_FORMAT_VERSION {
            return Err(SystemError::Malformed(format!(
                "dataset format version {} unsupported",
                meta.format_version
            )));
        }
        let n = meta.spec.state_dim;
        let mut r = csv::Reader::from_path(csv_path)?;
        let header = r.headers()?.clone();
        if header.len() != n + 2 || &header[0] != "traj_id" || &header[1] != "k" {
            return Err(SystemError::Malformed("unexpected CSV header".into()));
        }
        let mut records: Vec<TrajectoryRecord> = Vec::with_capacity(meta.count);
        for row in r.records() {
            let row = row?;
            let parse_idx = |i: usize| -> Result<usize, SystemError> {
                row[i]
                    .parse()
                    .map_err(|_| SystemError::Malformed(format!("bad integer `{}`", &row[i])))
            };
            let id = parse_idx(0)?;
            let k = parse_idx(1)?;
            let state = (2..n + 2)
                .map(|i| {
                    row[i]
                        .parse::<f64>()
                        .map_err(|_| SystemError::Malformed(format!("bad number `{}`", &row[i])))
                })
                .collect::<Result<Vec<_>, _>>()?;
            if k == 0 {
                if id != records.len() {
                    return Err(SystemError::Malformed(format!("trajectory {id} out of order")));
                }
                records.push(TrajectoryRecord {
                    s0: state,
                    states: Vec::with_capacity(meta.horizon),
                });
            } else {
                let rec = records
                    .get_mut(id)
                    .filter(|rec| rec.states.len() + 1 == k)
                    .ok_or_else(|| SystemError::Malformed(format!("row ({id},{k}) out of order")))?;
                rec.states.push(state);
            }
        }
        if records.len() != meta.count || records.iter().any(|r| r.states.len() != meta.horizon) {
            return Err(SystemError::Malformed("record count or length disagrees with sidecar".into()));
        }
        Ok(Self {
            spec: meta.spec,
            horizon: meta.horizon,
            role: meta.role,
            seed: meta.seed,
            records,
        })
    }
}
