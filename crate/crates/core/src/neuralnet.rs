//! One-hidden-layer perceptron (ReLU hidden layer, softmax output) trained
//! with softmax cross-entropy and plain mini-batch SGD.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::io_util::{fmt_sig, write_atomic};
use crate::{Scalar, NUM_CLASSES};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("layer dimensions must be positive (input {input}, hidden {hidden})")]
    ZeroDimension { input: usize, hidden: usize },
    #[error("input has {got} features, network expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("batch holds {inputs} inputs but {labels} labels")]
    LabelCount { inputs: usize, labels: usize },
    #[error("label {0} is outside 0..{NUM_CLASSES}")]
    LabelOutOfRange(usize),
    #[error("empty batch or split")]
    Empty,
    #[error("training diverged: non-finite loss at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = NnError> = std::result::Result<T, E>;

/// Weights and biases. `w1` is hidden x input, `w2` is classes x hidden.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams<T> {
    pub w1: Array2<T>,
    pub b1: Array1<T>,
    pub w2: Array2<T>,
    pub b2: Array1<T>,
}

/// Gradients share the parameter layout.
pub type Gradients<T> = MlpParams<T>;

impl<T: Scalar> MlpParams<T> {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        Self {
            w1: Array2::zeros((hidden_dim, input_dim)),
            b1: Array1::zeros(hidden_dim),
            w2: Array2::zeros((NUM_CLASSES, hidden_dim)),
            b2: Array1::zeros(NUM_CLASSES),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.w2.nrows()
    }

    pub fn is_consistent(&self) -> bool {
        self.b1.len() == self.hidden_dim()
            && self.w2.ncols() == self.hidden_dim()
            && self.b2.len() == self.output_dim()
    }

    pub fn is_finite(&self) -> bool {
        self.w1
            .iter()
            .chain(&self.b1)
            .chain(&self.w2)
            .chain(&self.b2)
            .all(|v| v.is_finite())
    }

    /// Squared Frobenius norm of the weight matrices (biases excluded).
    pub fn weight_norm_sq(&self) -> T {
        self.w1.iter().chain(&self.w2).map(|&v| v * v).sum()
    }

    pub fn cast<U: Scalar>(&self) -> MlpParams<U> {
        let c = |v: &T| U::of(v.to_f64_lossy());
        MlpParams {
            w1: self.w1.map(c),
            b1: self.b1.map(c),
            w2: self.w2.map(c),
            b2: self.b2.map(c),
        }
    }

    /// `self -= lr * grads`.
    pub fn sgd_step(&mut self, grads: &Gradients<T>, lr: T) {
        self.w1.scaled_add(-lr, &grads.w1);
        self.b1.scaled_add(-lr, &grads.b1);
        self.w2.scaled_add(-lr, &grads.w2);
        self.b2.scaled_add(-lr, &grads.b2);
    }

    /// Folds an input standardization `(x - mean) / scale` into the first
    /// layer, giving parameters that act directly on unstandardized inputs.
    pub fn fold_input_standardization(
        &self,
        mean: ArrayView1<T>,
        scale: ArrayView1<T>,
    ) -> Result<Self> {
        let d = self.input_dim();
        if mean.len() != d || scale.len() != d {
            return Err(NnError::DimensionMismatch {
                expected: d,
                got: mean.len().min(scale.len()),
            });
        }
        let mut w1 = self.w1.clone();
        for mut row in w1.rows_mut() {
            Zip::from(&mut row)
                .and(&scale)
                .for_each(|w, &s| *w = *w / s);
        }
        let b1 = &self.b1 - &w1.dot(&mean);
        Ok(Self {
            w1,
            b1,
            w2: self.w2.clone(),
            b2: self.b2.clone(),
        })
    }
}

fn uniform_symmetric(rng: &mut ChaCha8Rng, bound: f64) -> f64 {
    loop {
        let v = (2.0 * rng.random::<f64>() - 1.0) * bound;
        if v.abs() < bound {
            return v;
        }
    }
}

/// Weights i.i.d. uniform on `(-1/sqrt(fan_in), 1/sqrt(fan_in))`, biases zero.
pub fn init_params<T: Scalar>(
    input_dim: usize,
    hidden_dim: usize,
    seed: u64,
) -> Result<MlpParams<T>> {
    if input_dim == 0 || hidden_dim == 0 {
        return Err(NnError::ZeroDimension {
            input: input_dim,
            hidden: hidden_dim,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b1 = 1.0 / (input_dim as f64).sqrt();
    let b2 = 1.0 / (hidden_dim as f64).sqrt();
    let w1 = Array2::from_shape_simple_fn((hidden_dim, input_dim), || {
        T::of(uniform_symmetric(&mut rng, b1))
    });
    let w2 = Array2::from_shape_simple_fn((NUM_CLASSES, hidden_dim), || {
        T::of(uniform_symmetric(&mut rng, b2))
    });
    Ok(MlpParams {
        w1,
        b1: Array1::zeros(hidden_dim),
        w2,
        b2: Array1::zeros(NUM_CLASSES),
    })
}

/// Activations of one forward pass over a batch (one row per sample).
#[derive(Debug, Clone)]
pub struct Forward<T> {
    pub hidden_pre: Array2<T>,
    pub hidden: Array2<T>,
    pub logits: Array2<T>,
    pub probs: Array2<T>,
}

fn check_input<T: Scalar>(p: &MlpParams<T>, x: &ArrayView2<T>) -> Result<()> {
    if x.ncols() != p.input_dim() {
        return Err(NnError::DimensionMismatch {
            expected: p.input_dim(),
            got: x.ncols(),
        });
    }
    Ok(())
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows<T: Scalar>(logits: ArrayView2<T>) -> Array2<T> {
    let mut out = logits.to_owned();
    for mut row in out.rows_mut() {
        let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

fn log_sum_exp<T: Scalar>(row: ArrayView1<T>) -> T {
    let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    max + row.iter().map(|&v| (v - max).exp()).sum::<T>().ln()
}

pub fn forward<T: Scalar>(p: &MlpParams<T>, x: ArrayView2<T>) -> Result<Forward<T>> {
    check_input(p, &x)?;
    let hidden_pre = x.dot(&p.w1.t()) + &p.b1;
    let hidden = hidden_pre.mapv(|v| v.max(T::zero()));
    let logits = hidden.dot(&p.w2.t()) + &p.b2;
    let probs = softmax_rows(logits.view());
    Ok(Forward {
        hidden_pre,
        hidden,
        logits,
        probs,
    })
}

fn check_labels(n: usize, labels: &[usize]) -> Result<()> {
    if n == 0 {
        return Err(NnError::Empty);
    }
    if labels.len() != n {
        return Err(NnError::LabelCount {
            inputs: n,
            labels: labels.len(),
        });
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= NUM_CLASSES) {
        return Err(NnError::LabelOutOfRange(bad));
    }
    Ok(())
}

/// Mean cross-entropy plus `l2/2 * |weights|^2`, and its gradient.
pub fn loss_and_grads<T: Scalar>(
    p: &MlpParams<T>,
    x: ArrayView2<T>,
    labels: &[usize],
    l2: T,
) -> Result<(T, Gradients<T>)> {
    check_labels(x.nrows(), labels)?;
    let fwd = forward(p, x)?;
    let n = T::of_usize(x.nrows());

    let nll: T = fwd
        .logits
        .rows()
        .into_iter()
        .zip(labels)
        .map(|(row, &l)| log_sum_exp(row) - row[l])
        .sum();
    let loss = nll / n + l2 * T::of(0.5) * p.weight_norm_sq();

    // d loss / d logits = (probs - onehot) / n
    let mut dlogits = fwd.probs;
    for (mut row, &l) in dlogits.rows_mut().into_iter().zip(labels) {
        row[l] = row[l] - T::one();
    }
    dlogits.mapv_inplace(|v| v / n);

    let mut gw2 = dlogits.t().dot(&fwd.hidden);
    gw2.scaled_add(l2, &p.w2);
    let gb2 = dlogits.sum_axis(Axis(0));

    let mut dhidden = dlogits.dot(&p.w2);
    Zip::from(&mut dhidden)
        .and(&fwd.hidden_pre)
        .for_each(|d, &z| {
            if z <= T::zero() {
                *d = T::zero();
            }
        });
    let mut gw1 = dhidden.t().dot(&x);
    gw1.scaled_add(l2, &p.w1);
    let gb1 = dhidden.sum_axis(Axis(0));

    Ok((
        loss,
        MlpParams {
            w1: gw1,
            b1: gb1,
            w2: gw2,
            b2: gb2,
        },
    ))
}

/// Predicted classes and probability rows for a batch.
#[derive(Debug, Clone)]
pub struct Predictions<T> {
    pub classes: Vec<usize>,
    pub probs: Array2<T>,
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax<T: Scalar>(row: ArrayView1<T>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub fn predict<T: Scalar>(p: &MlpParams<T>, x: ArrayView2<T>) -> Result<Predictions<T>> {
    let probs = forward(p, x)?.probs;
    let classes = probs.rows().into_iter().map(argmax).collect();
    Ok(Predictions { classes, probs })
}

pub fn predict_one<T: Scalar>(p: &MlpParams<T>, x: ArrayView1<T>) -> Result<(usize, Array1<T>)> {
    let n = x.len();
    let x2 = x
        .to_owned()
        .into_shape_with_order((1, n))
        .expect("row vector");
    let pred = predict(p, x2.view())?;
    Ok((pred.classes[0], pred.probs.row(0).to_owned()))
}

/// Fraction of samples classified correctly.
pub fn accuracy<T: Scalar>(p: &MlpParams<T>, data: &LabeledSet<T>) -> Result<f64> {
    let pred = predict(p, data.inputs.view())?;
    let hits = pred
        .classes
        .iter()
        .zip(&data.labels)
        .filter(|(a, b)| a == b)
        .count();
    Ok(hits as f64 / data.len() as f64)
}

/// Inputs (one row per sample) with their class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet<T> {
    pub inputs: Array2<T>,
    pub labels: Vec<usize>,
}

impl<T: Scalar> LabeledSet<T> {
    pub fn new(inputs: Array2<T>, labels: Vec<usize>) -> Result<Self> {
        check_labels(inputs.nrows(), &labels)?;
        Ok(Self { inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            inputs: self.inputs.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

/// Training hyperparameters. Defaults: lr 0.01, batch 256, 100 epochs,
/// seed 1, no L2, no early stopping.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub l2: f64,
    pub early_stop_patience: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            batch_size: 256,
            epochs: 100,
            seed: 1,
            l2: 0.0,
            early_stop_patience: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(NnError::Config(format!(
                "learning_rate {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(NnError::Config(
                "batch_size and epochs must be positive".into(),
            ));
        }
        if !(self.l2.is_finite() && self.l2 >= 0.0) {
            return Err(NnError::Config(format!("l2 {}", self.l2)));
        }
        if self.early_stop_patience == Some(0) {
            return Err(NnError::Config(
                "early_stop_patience must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Sample-weighted mean of the per-batch losses seen during the epoch.
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
}

impl TrainReport {
    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,train_acc,val_acc\n");
        for r in &self.epochs {
            writeln!(
                out,
                "{},{},{},{}",
                r.epoch,
                fmt_sig(r.train_loss),
                fmt_sig(r.train_acc),
                fmt_sig(r.val_acc)
            )
            .expect("write to string");
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv().as_bytes()).map_err(|source| NnError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Shuffle order for one epoch: stream `epoch` of a ChaCha generator keyed by `seed`.
fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

/// Mini-batch SGD. Each epoch reshuffles the training set, steps once per
/// batch (the last batch may be smaller) and records loss and accuracies.
pub fn train<T: Scalar>(
    mut params: MlpParams<T>,
    train_set: &LabeledSet<T>,
    val_set: &LabeledSet<T>,
    cfg: &TrainConfig,
) -> Result<(MlpParams<T>, TrainReport)> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(NnError::Empty);
    }
    for set in [train_set, val_set] {
        if set.dim() != params.input_dim() {
            return Err(NnError::DimensionMismatch {
                expected: params.input_dim(),
                got: set.dim(),
            });
        }
    }
    let lr = T::of(cfg.learning_rate);
    let l2 = T::of(cfg.l2);
    let mut report = TrainReport::default();
    let mut best_val = f64::NEG_INFINITY;
    let mut stale = 0usize;

    for epoch in 1..=cfg.epochs {
        let order = epoch_order(train_set.len(), cfg.seed, epoch);
        let mut loss_sum = 0.0;
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let batch = train_set.select(idx);
            let (loss, grads) = loss_and_grads(&params, batch.inputs.view(), &batch.labels, l2)?;
            if !loss.is_finite() {
                return Err(NnError::Diverged { epoch, batch: b });
            }
            loss_sum += loss.to_f64_lossy() * idx.len() as f64;
            params.sgd_step(&grads, lr);
        }
        if !params.is_finite() {
            return Err(NnError::Diverged {
                epoch,
                batch: order.len().div_ceil(cfg.batch_size),
            });
        }
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            train_acc: accuracy(&params, train_set)?,
            val_acc: accuracy(&params, val_set)?,
        };
        log::debug!(
            "epoch {epoch}: loss {:.6} train {:.4} val {:.4}",
            record.train_loss,
            record.train_acc,
            record.val_acc
        );
        report.epochs.push(record);

        if let Some(patience) = cfg.early_stop_patience {
            if record.val_acc > best_val {
                best_val = record.val_acc;
                stale = 0;
            } else {
                stale += 1;
                if stale >= patience {
                    break;
                }
            }
        }
    }
    Ok((params, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::{any, prop_assert, proptest};

    fn random_batch(n: usize, d: usize, seed: u64) -> (Array2<f64>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_simple_fn((n, d), || rng.random_range(-1.0..1.0));
        let labels = (0..n).map(|_| rng.random_range(0..NUM_CLASSES)).collect();
        (x, labels)
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = init_params::<f64>(50, 7, 3).unwrap();
        let b = init_params::<f64>(50, 7, 3).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, init_params::<f64>(50, 7, 4).unwrap());
        assert!(a.b1.iter().chain(&a.b2).all(|&v| v == 0.0));
        let bound = 1.0 / 50f64.sqrt();
        assert!(a.w1.iter().all(|w| w.abs() < bound));
        assert!(a.w2.iter().all(|w| w.abs() < 1.0 / 7f64.sqrt()));
        assert!(init_params::<f64>(0, 7, 3).is_err());
    }

    #[test]
    fn zero_params_give_uniform_probs_and_class_zero() {
        let p = MlpParams::<f64>::zeros(4, 3);
        let (x, _) = random_batch(5, 4, 1);
        let pred = predict(&p, x.view()).unwrap();
        assert!(pred.probs.iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
        assert!(pred.classes.iter().all(|&c| c == 0));
    }

    #[test]
    fn softmax_is_stable() {
        let p = softmax_rows(array![[1000.0f64, 0.0, 0.0], [0.0, 0.0, 0.0]].view());
        assert!(p.iter().all(|v| v.is_finite()));
        assert!((p[[0, 0]] - 1.0).abs() < 1e-15);
        assert!(p[[0, 1]] < 1e-300);
        assert!((p[[1, 2]] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(array![0.2, 0.5, 0.3].view()), 1);
        assert_eq!(argmax(array![0.5, 0.5, 0.0].view()), 0);
        assert_eq!(argmax(array![0.1, 0.45, 0.45].view()), 1);
    }

    /// Parameters whose output layer reproduces the given logits regardless of input.
    fn params_with_logits(logits: [f64; 3]) -> MlpParams<f64> {
        let mut p = MlpParams::zeros(2, 1);
        p.b2 = Array1::from(logits.to_vec());
        p
    }

    #[test]
    fn loss_examples() {
        // probabilities [0.25, 0.25, 0.5] come from logits [0, 0, ln 2]
        let p = params_with_logits([0.0, 0.0, 2f64.ln()]);
        let x = array![[0.3, -0.2]];
        let (loss, _) = loss_and_grads(&p, x.view(), &[2], 0.0).unwrap();
        assert!((loss - 0.5f64.ln().abs()).abs() < 1e-12);
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-6);

        let p = params_with_logits([800.0, 0.0, 0.0]);
        let (loss, _) = loss_and_grads(&p, x.view(), &[0], 0.0).unwrap();
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn loss_rejects_bad_batches() {
        let p = MlpParams::<f64>::zeros(2, 2);
        let x = array![[0.0, 1.0]];
        assert!(matches!(
            loss_and_grads(&p, x.view(), &[3], 0.0),
            Err(NnError::LabelOutOfRange(3))
        ));
        let empty = Array2::<f64>::zeros((0, 2));
        assert!(matches!(
            loss_and_grads(&p, empty.view(), &[], 0.0),
            Err(NnError::Empty)
        ));
        let wide = array![[0.0, 1.0, 2.0]];
        assert!(matches!(
            forward(&p, wide.view()),
            Err(NnError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn single_sample_step_reduces_loss() {
        let p = init_params::<f64>(8, 5, 11).unwrap();
        let (x, labels) = random_batch(1, 8, 12);
        let (before, g) = loss_and_grads(&p, x.view(), &labels, 0.0).unwrap();
        let mut q = p.clone();
        q.sgd_step(&g, 1e-4);
        let (after, _) = loss_and_grads(&q, x.view(), &labels, 0.0).unwrap();
        assert!(after < before);
    }

    #[test]
    fn zero_learning_rate_keeps_params() {
        let p = init_params::<f64>(6, 4, 2).unwrap();
        let (x, labels) = random_batch(40, 6, 5);
        let set = LabeledSet::new(x, labels).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            batch_size: 16,
            epochs: 3,
            ..TrainConfig::default()
        };
        let (q, report) = train(p.clone(), &set, &set, &cfg).unwrap();
        assert_eq!(p, q);
        assert_eq!(report.epochs.len(), 3);
    }

    #[test]
    fn training_is_deterministic_and_early_stops() {
        let (x, labels) = random_batch(60, 6, 8);
        let set = LabeledSet::new(x, labels).unwrap();
        let cfg = TrainConfig {
            batch_size: 16,
            epochs: 5,
            learning_rate: 0.1,
            ..TrainConfig::default()
        };
        let p = init_params::<f64>(6, 4, 2).unwrap();
        let a = train(p.clone(), &set, &set, &cfg).unwrap();
        let b = train(p.clone(), &set, &set, &cfg).unwrap();
        assert_eq!(a, b);

        let zero_lr = TrainConfig {
            learning_rate: 0.0,
            epochs: 50,
            early_stop_patience: Some(2),
            ..cfg
        };
        let (_, r) = train(p, &set, &set, &zero_lr).unwrap();
        assert_eq!(r.epochs.len(), 3);
    }

    #[test]
    fn divergence_is_reported() {
        let mut p = init_params::<f64>(4, 4, 1).unwrap();
        p.w1.fill(1e200);
        let (x, labels) = random_batch(20, 4, 3);
        let set = LabeledSet::new(x * 1e200, labels).unwrap();
        let cfg = TrainConfig {
            epochs: 2,
            ..TrainConfig::default()
        };
        assert!(matches!(
            train(p, &set, &set, &cfg),
            Err(NnError::Diverged { .. })
        ));
    }

    #[test]
    fn folding_standardization_matches() {
        let p = init_params::<f64>(5, 6, 4).unwrap();
        let (x, _) = random_batch(7, 5, 9);
        let mean = array![0.5, -1.0, 2.0, 0.0, 3.0];
        let scale = array![2.0, 0.5, 1.0, 4.0, 0.25];
        let standardized = (&x - &mean) / &scale;
        let folded = p
            .fold_input_standardization(mean.view(), scale.view())
            .unwrap();
        let a = forward(&p, standardized.view()).unwrap().probs;
        let b = forward(&folded, x.view()).unwrap().probs;
        assert!(a.iter().zip(&b).all(|(u, v)| (u - v).abs() < 1e-12));
    }

    #[test]
    fn report_csv_layout() {
        let r = TrainReport {
            epochs: vec![EpochRecord {
                epoch: 1,
                train_loss: 0.5,
                train_acc: 1.0,
                val_acc: 0.75,
            }],
        };
        assert_eq!(
            r.to_csv(),
            "epoch,train_loss,train_acc,val_acc\n1,0.5,1,0.75\n"
        );
    }

    proptest! {
        #[test]
        fn softmax_rows_sum_to_one(v in proptest::collection::vec(-15.0f64..15.0, 3 * 4)) {
            let logits = Array2::from_shape_vec((4, 3), v).unwrap();
            let p = softmax_rows(logits.view());
            for row in p.rows() {
                prop_assert!((row.sum() - 1.0).abs() < 1e-12);
                prop_assert!(row.iter().all(|&x| x > 0.0 && x < 1.0));
            }
        }

        #[test]
        fn l2_never_lowers_loss(seed in any::<u64>(), l2 in 0.0f64..1.0) {
            let p = init_params::<f64>(6, 4, seed).unwrap();
            let (x, labels) = random_batch(8, 6, seed ^ 0x55);
            let (plain, _) = loss_and_grads(&p, x.view(), &labels, 0.0).unwrap();
            let (reg, _) = loss_and_grads(&p, x.view(), &labels, l2).unwrap();
            prop_assert!(reg >= plain);
        }
    }
}
