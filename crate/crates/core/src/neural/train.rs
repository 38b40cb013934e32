//! Mini-batch Adam on mean squared error in normalized coordinates.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Mlp, NeuralError, Normalizer, SegmentPlan};
use crate::systems::{Role, TrajectoryDataset};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Hidden layer widths; empty means a single hidden layer of twice the
    /// input width.
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Trailing fraction of records held out for the reported validation
    /// error.
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: Vec::new(),
            learning_rate: 1e-3,
            batch_size: 128,
            epochs: 200,
            seed: 0,
            validation_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Full-pass training MSE (normalized units) after each epoch.
    pub epoch_loss: Vec<f64>,
    /// Running minimum of `epoch_loss`.
    pub best_so_far: Vec<f64>,
    pub best_epoch: usize,
    /// MSE in original units on the held-out records (training records when
    /// nothing is held out).
    pub validation_mse: f64,
    pub validation_rmse: f64,
    pub train_count: usize,
    pub validation_count: usize,
}

/// Stacked states `s_{t_q+1} … s_{t_q+T_q}` for every record.
pub fn segment_targets(
    dataset: &TrajectoryDataset,
    plan: &SegmentPlan,
    q: usize,
) -> Result<Vec<Vec<f64>>, NeuralError> {
    let seg = plan.segment(q)?;
    let end = seg.offset + seg.len;
    dataset
        .records
        .iter()
        .map(|r| {
            if r.states.len() < end {
                return Err(NeuralError::TrajectoryTooShort {
                    needed: end,
                    found: r.states.len(),
                });
            }
            Ok(r.states[seg.offset..end].concat())
        })
        .collect()
}

/// Trains the surrogate for segment `q`. The RNG seed is `cfg.seed ^ q`.
pub fn train_segment(
    dataset: &TrajectoryDataset,
    plan: &SegmentPlan,
    q: usize,
    cfg: &TrainConfig,
) -> Result<(Mlp, TrainReport), NeuralError> {
    if dataset.role != Role::Train {
        return Err(NeuralError::WrongRole(dataset.role.to_string()));
    }
    if dataset.records.is_empty() {
        return Err(NeuralError::EmptyDataset);
    }
    let targets = segment_targets(dataset, plan, q)?;
    let inputs: Vec<Vec<f64>> = dataset.records.iter().map(|r| r.s0.clone()).collect();
    let cfg = TrainConfig {
        seed: cfg.seed ^ q as u64,
        ..cfg.clone()
    };
    fit(&inputs, &targets, &cfg)
}

/// Fits an MLP `inputs[i] ↦ targets[i]`. Deterministic given `cfg.seed`.
pub fn fit(
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
    cfg: &TrainConfig,
) -> Result<(Mlp, TrainReport), NeuralError> {
    if inputs.is_empty() {
        return Err(NeuralError::EmptyDataset);
    }
    if inputs.len() != targets.len() {
        return Err(NeuralError::WidthMismatch {
            what: "inputs vs targets count",
            expected: inputs.len(),
            found: targets.len(),
        });
    }
    let n_in = inputs[0].len();
    let n_out = targets[0].len();
    let total = inputs.len();
    let held = ((total as f64) * cfg.validation_fraction.clamp(0.0, 0.9)).floor() as usize;
    let n_train = (total - held).max(1);
    let (train_x, val_x) = inputs.split_at(n_train);
    let (train_y, val_y) = targets.split_at(n_train);

    let input_norm = Normalizer::fit(train_x);
    let output_norm = Normalizer::fit(train_y);
    let x = columns(train_x.iter().map(|s| input_norm.normalize(s)), n_in);
    let y = columns(train_y.iter().map(|s| output_norm.normalize(s)), n_out);

    let hidden = if cfg.hidden.is_empty() {
        vec![2 * n_in]
    } else {
        cfg.hidden.clone()
    };
    let mut widths = vec![n_in];
    widths.extend(&hidden);
    widths.push(n_out);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (weights, biases) = he_uniform(&widths, &mut rng);
    let mut net = Mlp::new(weights, biases, input_norm, output_norm)?;
    let mut adam = Adam::new(&net, cfg.learning_rate);

    let mut order: Vec<usize> = (0..n_train).collect();
    let batch = cfg.batch_size.max(1);
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);
    let mut best_so_far = Vec::with_capacity(cfg.epochs);
    let mut best = (f64::INFINITY, 0usize, net.clone());
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            let xb = x.select_columns(chunk.iter());
            let yb = y.select_columns(chunk.iter());
            let (gw, gb) = gradients(&net, &xb, &yb);
            adam.step(&mut net, &gw, &gb);
        }
        let loss = normalized_mse(&net, &x, &y);
        epoch_loss.push(loss);
        if loss < best.0 {
            best = (loss, epoch, net.clone());
        }
        best_so_far.push(best.0);
    }
    let (_, best_epoch, best_net) = best;
    let net = if cfg.epochs == 0 { net } else { best_net };

    let (vx, vy) = if val_x.is_empty() {
        (train_x, train_y)
    } else {
        (val_x, val_y)
    };
    let mut se = 0.0;
    for (s, t) in vx.iter().zip(vy) {
        let p = net.forward(s)?;
        se += p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    let validation_mse = se / (vx.len() * n_out) as f64;
    Ok((
        net,
        TrainReport {
            epoch_loss,
            best_so_far,
            best_epoch,
            validation_mse,
            validation_rmse: validation_mse.sqrt(),
            train_count: n_train,
            validation_count: val_x.len(),
        },
    ))
}

fn columns(rows: impl Iterator<Item = Vec<f64>>, dim: usize) -> DMatrix<f64> {
    let data: Vec<f64> = rows.flatten().collect();
    DMatrix::from_vec(dim, data.len() / dim, data)
}

fn he_uniform<R: Rng>(widths: &[usize], rng: &mut R) -> (Vec<DMatrix<f64>>, Vec<DVector<f64>>) {
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for w in widths.windows(2) {
        let limit = (6.0 / w[0] as f64).sqrt();
        // Row-major draw order so the stream consumption is layout-independent.
        let mut m = DMatrix::zeros(w[1], w[0]);
        for i in 0..w[1] {
            for j in 0..w[0] {
                m[(i, j)] = rng.random_range(-limit..limit);
            }
        }
        weights.push(m);
        biases.push(DVector::zeros(w[1]));
    }
    (weights, biases)
}

/// Forward pass on a column batch; returns every layer's pre-activation and
/// activation.
fn forward_batch(net: &Mlp, x: &DMatrix<f64>) -> (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>) {
    let layers = net.weights().len();
    let mut pre = Vec::with_capacity(layers);
    let mut act = Vec::with_capacity(layers + 1);
    act.push(x.clone());
    for (l, (w, b)) in net.weights().iter().zip(net.biases()).enumerate() {
        let mut z = w * act.last().unwrap();
        for mut col in z.column_iter_mut() {
            col += b;
        }
        let a = if l + 1 < layers { z.map(|v| v.max(0.0)) } else { z.clone() };
        pre.push(z);
        act.push(a);
    }
    (pre, act)
}

fn normalized_mse(net: &Mlp, x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    let (_, act) = forward_batch(net, x);
    let diff = act.last().unwrap() - y;
    diff.norm_squared() / diff.len() as f64
}

fn gradients(net: &Mlp, x: &DMatrix<f64>, y: &DMatrix<f64>) -> (Vec<DMatrix<f64>>, Vec<DVector<f64>>) {
    let (pre, act) = forward_batch(net, x);
    let layers = net.weights().len();
    let out = act.last().unwrap();
    let mut delta = (out - y) * (2.0 / out.len() as f64);
    let mut gw = vec![DMatrix::zeros(0, 0); layers];
    let mut gb = vec![DVector::zeros(0); layers];
    for l in (0..layers).rev() {
        gw[l] = &delta * act[l].transpose();
        gb[l] = delta.column_sum();
        if l > 0 {
            let mut back = net.weights()[l].transpose() * &delta;
            back.zip_apply(&pre[l - 1], |g, z| {
                if z <= 0.0 {
                    *g = 0.0
                }
            });
            delta = back;
        }
    }
    (gw, gb)
}

struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    mw: Vec<DMatrix<f64>>,
    vw: Vec<DMatrix<f64>>,
    mb: Vec<DVector<f64>>,
    vb: Vec<DVector<f64>>,
}

impl Adam {
    fn new(net: &Mlp, lr: f64) -> Self {
        let zw: Vec<_> = net.weights().iter().map(|w| DMatrix::zeros(w.nrows(), w.ncols())).collect();
        let zb: Vec<_> = net.biases().iter().map(|b| DVector::zeros(b.len())).collect();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            mw: zw.clone(),
            vw: zw,
            mb: zb.clone(),
            vb: zb,
        }
    }

    fn step(&mut self, net: &mut Mlp, gw: &[DMatrix<f64>], gb: &[DVector<f64>]) {
        self.t += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let lr = self.lr;
        let (weights, biases) = net.params_mut();
        let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        };
        for l in 0..weights.len() {
            for (((p, m), v), g) in weights[l]
                .iter_mut()
                .zip(self.mw[l].iter_mut())
                .zip(self.vw[l].iter_mut())
                .zip(gw[l].iter())
            {
                update(p, m, v, *g);
            }
            for (((p, m), v), g) in biases[l]
                .iter_mut()
                .zip(self.mb[l].iter_mut())
                .zip(self.vb[l].iter_mut())
                .zip(gb[l].iter())
            {
                update(p, m, v, *g);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::{linear2d, make_dataset};

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (w, b) = he_uniform(&[2, 3, 2], &mut rng);
        let mut net = Mlp::from_layers(w, b).unwrap();
        // Nonzero biases keep every ReLU away from its kink.
        net.params_mut().1[0].copy_from_slice(&[0.3, -0.2, 0.5]);
        let x = DMatrix::from_fn(2, 5, |i, j| ((i * 5 + j) as f64 * 0.37).sin());
        let y = DMatrix::from_fn(2, 5, |i, j| ((i + 2 * j) as f64 * 0.11).cos());
        let (gw, gb) = gradients(&net, &x, &y);
        let h = 1e-6;
        for l in 0..2 {
            let (r, c) = net.weights()[l].shape();
            for i in 0..r {
                for j in 0..c {
                    let mut p = net.clone();
                    p.params_mut().0[l][(i, j)] += h;
                    let mut m = net.clone();
                    m.params_mut().0[l][(i, j)] -= h;
                    let fd = (normalized_mse(&p, &x, &y) - normalized_mse(&m, &x, &y)) / (2.0 * h);
                    assert!((fd - gw[l][(i, j)]).abs() < 1e-6, "w{l}[{i},{j}]");
                }
                let mut p = net.clone();
                p.params_mut().1[l][i] += h;
                let mut m = net.clone();
                m.params_mut().1[l][i] -= h;
                let fd = (normalized_mse(&p, &x, &y) - normalized_mse(&m, &x, &y)) / (2.0 * h);
                assert!((fd - gb[l][i]).abs() < 1e-6, "b{l}[{i}]");
            }
        }
    }

    #[test]
    fn learns_contracting_linear_system() {
        let spec = linear2d(0.9, 0.0, 0.0, 0.0);
        let ds = make_dataset(&spec, 3, 5000, Role::Train, 1).unwrap();
        let plan = SegmentPlan::unit(3).unwrap();
        let cfg = TrainConfig {
            hidden: vec![8],
            ..TrainConfig::default()
        };
        let (net, report) = train_segment(&ds, &plan, 2, &cfg).unwrap();
        assert!(report.validation_rmse <= 1e-2, "rmse {}", report.validation_rmse);
        // Closed-form oracle: s_3 = 0.9³ s0.
        let s0 = [0.4, -0.8];
        let p = net.forward(&s0).unwrap();
        for (pi, si) in p.iter().zip(s0) {
            assert!((pi - 0.729 * si).abs() < 3e-2);
        }
        assert!(report.best_so_far.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn learns_constant_system() {
        let spec = linear2d(1.0, 0.0, 0.0, 0.0);
        let ds = make_dataset(&spec, 2, 5000, Role::Train, 2).unwrap();
        let plan = SegmentPlan::unit(2).unwrap();
        let (_, report) = train_segment(&ds, &plan, 1, &TrainConfig::default()).unwrap();
        assert!(report.validation_rmse <= 1e-2, "rmse {}", report.validation_rmse);
    }

    #[test]
    fn same_seed_same_weights() {
        let spec = linear2d(0.9, 0.2, 0.05, 0.5);
        let ds = make_dataset(&spec, 2, 300, Role::Train, 3).unwrap();
        let plan = SegmentPlan::unit(2).unwrap();
        let cfg = TrainConfig {
            epochs: 20,
            ..TrainConfig::default()
        };
        let (a, _) = train_segment(&ds, &plan, 0, &cfg).unwrap();
        let (b, _) = train_segment(&ds, &plan, 0, &cfg).unwrap();
        assert_eq!(a.to_file(), b.to_file());
    }

    #[test]
    fn argument_errors() {
        let spec = linear2d(0.9, 0.0, 0.0, 0.0);
        let ds = make_dataset(&spec, 2, 10, Role::Train, 3).unwrap();
        let plan = SegmentPlan::unit(2).unwrap();
        assert!(matches!(
            train_segment(&ds, &plan, 5, &TrainConfig::default()),
            Err(NeuralError::SegmentOutOfRange { .. })
        ));
        let mut empty = ds.clone();
        empty.records.clear();
        assert!(matches!(
            train_segment(&empty, &plan, 0, &TrainConfig::default()),
            Err(NeuralError::EmptyDataset)
        ));
        let mut calib = ds;
        calib.role = Role::Calibration;
        assert!(matches!(
            train_segment(&calib, &plan, 0, &TrainConfig::default()),
            Err(NeuralError::WrongRole(_))
        ));
    }
}
