//! Fully connected rectifier networks trained by mini-batch SGD with
//! momentum, with hand-written backpropagation through the decay-softmax
//! loss.
//!
//! Besides the usual per-epoch metrics, a training run records the
//! true-class probability of every traced sample after each epoch. Those
//! traces feed [`difficulty_groups`], which splits samples into quantile
//! groups from hard to easy.

use std::io::{self, Write};

use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::datasets::Dataset;
use crate::loss::{beta_ce_eval_into, softmax_into, LossError, LossParams, Stability};
use crate::schedule::WarmupSchedule;

/// Samples traced by default when no explicit limit is set.
pub const DEFAULT_TRACE_CAP: usize = 100_000;

/// Rows per forward chunk when evaluating a whole dataset.
const EVAL_CHUNK: usize = 1000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("layer dims need an input and at least one output layer, got {0:?}")]
    BadLayout(Vec<usize>),
    #[error("input has {got} features, model expects {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("label {label} outside the model's {classes} outputs")]
    Label { label: usize, classes: usize },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("training diverged at epoch {epoch}, batch {batch} (non-finite loss)")]
    Diverged { epoch: usize, batch: usize },
    #[error("need at least {needed} traced samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error(transparent)]
    Loss(#[from] LossError),
}

pub type Result<T> = std::result::Result<T, TrainError>;

/// Rectifier MLP. `weights[l]` maps layer `l` to layer `l + 1` and has shape
/// `(dims[l + 1], dims[l])`. The last layer has no activation.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    dims: Vec<usize>,
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
}

/// Gradients with the same shapes as an [`MlpModel`]'s parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Gradients {
    pub fn zeros_like(model: &MlpModel) -> Self {
        Self {
            weights: model
                .weights
                .iter()
                .map(|w| Array2::zeros(w.raw_dim()))
                .collect(),
            biases: model
                .biases
                .iter()
                .map(|b| Array1::zeros(b.raw_dim()))
                .collect(),
        }
    }

    pub fn norm(&self) -> f64 {
        let sq: f64 = self
            .weights
            .iter()
            .map(|w| w.iter().map(|v| v * v).sum::<f64>())
            .chain(
                self.biases
                    .iter()
                    .map(|b| b.iter().map(|v| v * v).sum::<f64>()),
            )
            .sum();
        sq.sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        self.weights.iter_mut().for_each(|w| *w *= factor);
        self.biases.iter_mut().for_each(|b| *b *= factor);
    }
}

fn relu_inplace(a: &mut Array2<f64>) {
    a.mapv_inplace(|v| v.max(0.0));
}

impl MlpModel {
    fn check_dims(dims: &[usize]) -> Result<()> {
        if dims.len() < 2 || dims.contains(&0) || *dims.last().unwrap() < 2 {
            return Err(TrainError::BadLayout(dims.to_vec()));
        }
        Ok(())
    }

    /// He-normal weights (`std = sqrt(2 / fan_in)`) and zero biases.
    pub fn new(dims: &[usize], seed: u64) -> Result<Self> {
        Self::check_dims(dims)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for pair in dims.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
            weights.push(Array2::from_shape_simple_fn((fan_out, fan_in), || {
                normal.sample(&mut rng)
            }));
            biases.push(Array1::zeros(fan_out));
        }
        Ok(Self {
            dims: dims.to_vec(),
            weights,
            biases,
        })
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        Self::check_dims(dims)?;
        let weights = dims
            .windows(2)
            .map(|p| Array2::zeros((p[1], p[0])))
            .collect();
        let biases = dims[1..].iter().map(|&n| Array1::zeros(n)).collect();
        Ok(Self {
            dims: dims.to_vec(),
            weights,
            biases,
        })
    }

    pub fn from_parameters(weights: Vec<Array2<f64>>, biases: Vec<Array1<f64>>) -> Result<Self> {
        let mut dims = vec![weights.first().map_or(0, |w| w.ncols())];
        for (l, (w, b)) in weights.iter().zip(&biases).enumerate() {
            if w.ncols() != dims[l] || b.len() != w.nrows() {
                return Err(TrainError::BadLayout(dims));
            }
            dims.push(w.nrows());
        }
        if weights.len() != biases.len() {
            return Err(TrainError::BadLayout(dims));
        }
        Self::check_dims(&dims)?;
        Ok(Self {
            dims,
            weights,
            biases,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn num_classes(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Array1<f64>] {
        &self.biases
    }

    /// Mutable parameter access; shapes must be left unchanged.
    pub fn parameters_mut(&mut self) -> (&mut [Array2<f64>], &mut [Array1<f64>]) {
        (&mut self.weights, &mut self.biases)
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    fn check_input(&self, cols: usize) -> Result<()> {
        if cols != self.input_dim() {
            return Err(TrainError::Dimension {
                expected: self.input_dim(),
                got: cols,
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, x.len()), x).expect("single row");
        Ok(self.forward_batch(view)?.into_raw_vec_and_offset().0)
    }

    /// Logits for each row of `x`.
    pub fn forward_batch(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_input(x.ncols())?;
        let last = self.weights.len() - 1;
        let mut a = x.to_owned();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            a = a.dot(&w.t()) + b;
            if l < last {
                relu_inplace(&mut a);
            }
        }
        Ok(a)
    }

    /// Mean loss over the rows of `x` and its gradient, written into
    /// `grads`. Returns `(mean loss, per-row clamped p_c)`.
    pub fn loss_and_grad_batch(
        &self,
        x: ArrayView2<'_, f64>,
        labels: &[usize],
        params: &LossParams,
        grads: &mut Gradients,
    ) -> Result<(f64, Vec<f64>)> {
        self.check_input(x.ncols())?;
        assert_eq!(x.nrows(), labels.len(), "one label per row");
        let m = self.num_classes();
        if let Some(&label) = labels.iter().find(|&&l| l >= m) {
            return Err(TrainError::Label { label, classes: m });
        }
        let n = x.nrows();
        let last = self.weights.len() - 1;

        // acts[l] is the input to layer l.
        let mut acts: Vec<Array2<f64>> = Vec::with_capacity(self.weights.len());
        let mut a = x.to_owned();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut next = a.dot(&w.t()) + b;
            if l < last {
                relu_inplace(&mut next);
            }
            acts.push(a);
            a = next;
        }
        let logits = a;

        let mut delta = Array2::zeros((n, m));
        let mut probs = vec![0.0; m];
        let mut p_true = Vec::with_capacity(n);
        let mut total = 0.0;
        let inv_n = 1.0 / n as f64;
        for ((z, mut d), &label) in logits.rows().into_iter().zip(delta.rows_mut()).zip(labels) {
            let z = z.as_slice().expect("logits are row-major");
            let d = d.as_slice_mut().expect("delta is row-major");
            let (loss, pc) = beta_ce_eval_into(z, label, params, d, &mut probs)?;
            d.iter_mut().for_each(|v| *v *= inv_n);
            total += loss;
            p_true.push(pc);
        }

        for l in (0..=last).rev() {
            grads.weights[l] = delta.t().dot(&acts[l]);
            grads.biases[l] = delta.sum_axis(Axis(0));
            if l > 0 {
                let mut back = delta.dot(&self.weights[l]);
                Zip::from(&mut back).and(&acts[l]).for_each(|g, &act| {
                    if act <= 0.0 {
                        *g = 0.0;
                    }
                });
                delta = back;
            }
        }
        Ok((total * inv_n, p_true))
    }

    /// Loss and parameter gradients for a single sample.
    pub fn backward(
        &self,
        x: &[f64],
        class: usize,
        params: &LossParams,
    ) -> Result<(f64, Gradients)> {
        let view = ArrayView2::from_shape((1, x.len()), x).expect("single row");
        let mut grads = Gradients::zeros_like(self);
        let (loss, _) = self.loss_and_grad_batch(view, &[class], params, &mut grads)?;
        Ok((loss, grads))
    }

    /// Logits for every sample of a dataset.
    pub fn predict_logits(&self, data: &Dataset) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((data.len(), self.num_classes()));
        for start in (0..data.len()).step_by(EVAL_CHUNK) {
            let end = (start + EVAL_CHUNK).min(data.len());
            let logits = self.forward_batch(data.features.slice(s![start..end, ..]))?;
            out.slice_mut(s![start..end, ..]).assign(&logits);
        }
        Ok(out)
    }
}

/// Scales `grads` so that its global norm is at most `max_norm`. Returns the
/// norm before clipping.
pub fn clip_gradients(grads: &mut Gradients, max_norm: f64) -> f64 {
    let norm = grads.norm();
    if norm > max_norm {
        grads.scale(max_norm / norm);
    }
    norm
}

/// Heavy-ball momentum with weight decay:
/// `v <- mu v + g`, `w <- w - lr (v + wd w)`.
#[derive(Debug, Clone)]
pub struct MomentumSgd {
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Gradients,
}

impl MomentumSgd {
    pub fn new(model: &MlpModel, momentum: f64, weight_decay: f64) -> Self {
        Self {
            momentum,
            weight_decay,
            velocity: Gradients::zeros_like(model),
        }
    }

    pub fn velocity(&self) -> &Gradients {
        &self.velocity
    }

    pub fn step(&mut self, model: &mut MlpModel, grads: &Gradients, lr: f64) {
        let (mu, wd) = (self.momentum, self.weight_decay);
        let pairs = model
            .weights
            .iter_mut()
            .zip(self.velocity.weights.iter_mut())
            .zip(&grads.weights);
        for ((w, v), g) in pairs {
            Zip::from(w).and(v).and(g).for_each(|w, v, &g| {
                *v = mu * *v + g;
                *w -= lr * (*v + wd * *w);
            });
        }
        let pairs = model
            .biases
            .iter_mut()
            .zip(self.velocity.biases.iter_mut())
            .zip(&grads.biases);
        for ((b, v), g) in pairs {
            Zip::from(b).and(v).and(g).for_each(|b, v, &g| {
                *v = mu * *v + g;
                *b -= lr * (*v + wd * *b);
            });
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub clip_norm: Option<f64>,
    pub seed: u64,
    /// `(epoch fraction, factor)`: from epoch `floor(fraction * epochs)` on,
    /// the learning rate is multiplied by `factor`.
    pub lr_drops: Vec<(f64, f64)>,
    /// Number of samples (by id, from 0) whose confidence is traced. `None`
    /// traces everything up to [`DEFAULT_TRACE_CAP`].
    pub trace_limit: Option<usize>,
}

impl Default for TrainConfig {
    /// The small fully connected MNIST setup: lr 1e-3, momentum 0.9,
    /// weight decay 1e-4, batch 100, 100 epochs, constant learning rate.
    fn default() -> Self {
        Self {
            lr: 1e-3,
            momentum: 0.9,
            weight_decay: 1e-4,
            batch_size: 100,
            epochs: 100,
            clip_norm: None,
            seed: 0,
            lr_drops: Vec::new(),
            trace_limit: None,
        }
    }
}

impl TrainConfig {
    /// Settings of the deeper-network runs: lr 1e-2, clip norm 3, and the
    /// learning rate cut to 10% at half and three quarters of training.
    pub fn deep_style() -> Self {
        Self {
            lr: 1e-2,
            clip_norm: Some(3.0),
            lr_drops: vec![(0.5, 0.1), (0.75, 0.1)],
            epochs: 200,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(TrainError::Config(msg.to_string()));
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad("lr must be non-negative");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight decay must be non-negative");
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return bad("batch size and epochs must be positive");
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0 && c.is_finite()) {
                return bad("clip norm must be positive");
            }
        }
        if self
            .lr_drops
            .iter()
            .any(|&(f, k)| !(0.0..=1.0).contains(&f) || !(k > 0.0 && k.is_finite()))
        {
            return bad("lr drops need fractions in [0, 1] and positive factors");
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr_drops
            .iter()
            .filter(|&&(frac, _)| epoch >= (frac * self.epochs as f64).floor() as usize)
            .fold(self.lr, |lr, &(_, factor)| lr * factor)
    }
}

/// Where each step's loss parameters come from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BetaSource {
    Fixed(LossParams),
    Warmup {
        schedule: WarmupSchedule,
        tau: f64,
        stability: Stability,
    },
}

impl BetaSource {
    pub fn params_at(&self, epoch: u64, iteration: u64) -> Result<LossParams> {
        match *self {
            Self::Fixed(p) => Ok(p),
            Self::Warmup {
                schedule,
                tau,
                stability,
            } => Ok(LossParams::new(
                schedule.beta_for_step(epoch, iteration),
                tau,
                stability,
            )?),
        }
    }

    pub fn tau(&self) -> f64 {
        match self {
            Self::Fixed(p) => p.tau(),
            Self::Warmup { tau, .. } => *tau,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    /// One-based.
    pub epoch: usize,
    /// Beta in effect for the last update of the epoch.
    pub beta: f64,
    /// Mean of the mini-batch losses seen during the epoch.
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_acc: Option<f64>,
    /// Mean true-class probability over the training set after the epoch.
    pub mean_conf: f64,
}

/// True-class probability of one training sample after each epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTrace {
    pub sample_id: usize,
    pub p_true: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: MlpModel,
    pub epochs: Vec<EpochMetrics>,
    pub traces: Vec<SampleTrace>,
    /// True-class probability of every training sample after the last epoch.
    pub final_train_p_true: Vec<f64>,
}

/// Accuracy and per-sample true-class probability over a dataset.
pub fn evaluate(model: &MlpModel, data: &Dataset, tau: f64) -> Result<(f64, Vec<f64>)> {
    let logits = model.predict_logits(data)?;
    let m = model.num_classes();
    let mut probs = vec![0.0; m];
    let mut correct = 0usize;
    let mut p_true = Vec::with_capacity(data.len());
    for (z, &label) in logits.rows().into_iter().zip(&data.labels) {
        let z = z.as_slice().expect("row-major logits");
        if let Some((index, &value)) = z.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(LossError::NonFinite { index, value }.into());
        }
        softmax_into(z, tau, &mut probs);
        let pred = z
            .iter()
            .enumerate()
            .fold(0, |best, (i, &v)| if v > z[best] { i } else { best });
        correct += usize::from(pred == label);
        p_true.push(probs[label]);
    }
    Ok((correct as f64 / data.len() as f64, p_true))
}

/// Trains `model` in place on `train` and reports per-epoch metrics.
///
/// Shuffling uses only `cfg.seed`, so identical inputs give identical
/// metric streams. A non-finite batch loss aborts with the epoch and batch
/// index (both one-based).
pub fn train(
    mut model: MlpModel,
    train: &Dataset,
    test: Option<&Dataset>,
    cfg: &TrainConfig,
    beta: &BetaSource,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() || cfg.batch_size > train.len() {
        return Err(TrainError::Config(format!(
            "batch size {} with {} training samples",
            cfg.batch_size,
            train.len()
        )));
    }
    model.check_input(train.dim())?;
    if train.classes > model.num_classes() {
        return Err(TrainError::Label {
            label: train.classes - 1,
            classes: model.num_classes(),
        });
    }

    let n = train.len();
    let traced = cfg.trace_limit.unwrap_or(DEFAULT_TRACE_CAP).min(n);
    let mut traces: Vec<SampleTrace> = (0..traced)
        .map(|sample_id| SampleTrace {
            sample_id,
            p_true: Vec::with_capacity(cfg.epochs),
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut opt = MomentumSgd::new(&model, cfg.momentum, cfg.weight_decay);
    let mut grads = Gradients::zeros_like(&model);
    let mut metrics = Vec::with_capacity(cfg.epochs);
    let mut iteration = 0u64;
    let mut final_p_true = Vec::new();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let lr = cfg.lr_at(epoch);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        let mut last_beta = beta.params_at(epoch as u64, iteration)?.beta();
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let params = beta.params_at(epoch as u64, iteration)?;
            last_beta = params.beta();
            let x = train.features.select(Axis(0), idx);
            let labels: Vec<usize> = idx.iter().map(|&i| train.labels[i]).collect();
            let diverged = TrainError::Diverged {
                epoch: epoch + 1,
                batch: b + 1,
            };
            let (loss, _) = match model.loss_and_grad_batch(x.view(), &labels, &params, &mut grads)
            {
                Ok(v) => v,
                Err(TrainError::Loss(_)) => return Err(diverged),
                Err(e) => return Err(e),
            };
            if !loss.is_finite() {
                return Err(diverged);
            }
            if let Some(max_norm) = cfg.clip_norm {
                clip_gradients(&mut grads, max_norm);
            }
            opt.step(&mut model, &grads, lr);
            loss_sum += loss;
            batches += 1;
            iteration += 1;
        }
        if !model.is_finite() {
            return Err(TrainError::Diverged {
                epoch: epoch + 1,
                batch: batches,
            });
        }

        let (train_acc, p_true) =
            evaluate(&model, train, beta.tau()).map_err(|_| TrainError::Diverged {
                epoch: epoch + 1,
                batch: batches,
            })?;
        let test_acc = match test {
            Some(t) => Some(evaluate(&model, t, beta.tau())?.0),
            None => None,
        };
        for tr in &mut traces {
            tr.p_true.push(p_true[tr.sample_id]);
        }
        metrics.push(EpochMetrics {
            epoch: epoch + 1,
            beta: last_beta,
            train_loss: loss_sum / batches as f64,
            train_acc,
            test_acc,
            mean_conf: p_true.iter().sum::<f64>() / n as f64,
        });
        final_p_true = p_true;
    }

    Ok(TrainOutcome {
        model,
        epochs: metrics,
        traces,
        final_train_p_true: final_p_true,
    })
}

/// Quantile groups of traced samples, hardest first.
#[derive(Debug, Clone, PartialEq)]
pub struct DifficultyGroups {
    pub k: usize,
    /// One-based group of each trace, in the order the traces were given.
    pub group_of: Vec<usize>,
    /// `mean_traces[g][e]`: mean p_true of group `g + 1` after epoch `e + 1`.
    pub mean_traces: Vec<Vec<f64>>,
    /// Number of leading epochs used for ranking.
    pub ranking_epochs: usize,
}

impl DifficultyGroups {
    /// Mean p_true of the easiest group minus that of the hardest group
    /// after the given one-based epoch.
    pub fn spread_at(&self, epoch: usize) -> f64 {
        self.mean_traces[self.k - 1][epoch - 1] - self.mean_traces[0][epoch - 1]
    }
}

/// Ranks samples by their mean p_true over the first 20% of epochs (ties by
/// sample id) and cuts the ranking into `k` equal-size groups; group 1 is
/// the least confident.
pub fn difficulty_groups(traces: &[SampleTrace], k: usize) -> Result<DifficultyGroups> {
    if k == 0 || traces.len() < k {
        return Err(TrainError::TooFewSamples {
            needed: k.max(1),
            got: traces.len(),
        });
    }
    let epochs = traces[0].p_true.len();
    if epochs == 0 || traces.iter().any(|t| t.p_true.len() != epochs) {
        return Err(TrainError::Config(
            "traces must be non-empty and of equal length".into(),
        ));
    }
    let window = ((epochs as f64 * 0.2).ceil() as usize).clamp(1, epochs);
    let early: Vec<f64> = traces
        .iter()
        .map(|t| t.p_true[..window].iter().sum::<f64>() / window as f64)
        .collect();
    let mut rank: Vec<usize> = (0..traces.len()).collect();
    rank.sort_by(|&a, &b| {
        early[a]
            .total_cmp(&early[b])
            .then(traces[a].sample_id.cmp(&traces[b].sample_id))
    });

    let n = traces.len();
    let mut group_of = vec![0; n];
    let mut sums = vec![vec![0.0; epochs]; k];
    let mut counts = vec![0usize; k];
    for (pos, &i) in rank.iter().enumerate() {
        let g = pos * k / n;
        group_of[i] = g + 1;
        counts[g] += 1;
        for (s, v) in sums[g].iter_mut().zip(&traces[i].p_true) {
            *s += v;
        }
    }
    let mean_traces = sums
        .into_iter()
        .zip(&counts)
        .map(|(s, &c)| s.into_iter().map(|v| v / c as f64).collect())
        .collect();
    Ok(DifficultyGroups {
        k,
        group_of,
        mean_traces,
        ranking_epochs: window,
    })
}

pub fn write_epoch_metrics_csv(w: &mut impl Write, metrics: &[EpochMetrics]) -> io::Result<()> {
    writeln!(w, "epoch,beta,train_loss,train_acc,test_acc,mean_conf")?;
    for m in metrics {
        let test = m.test_acc.map(|v| v.to_string()).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{},{}",
            m.epoch, m.beta, m.train_loss, m.train_acc, test, m.mean_conf
        )?;
    }
    Ok(())
}

/// `epoch,sample_id,p_true,group`; the group column is blank without a
/// grouping.
pub fn write_trace_csv(
    w: &mut impl Write,
    traces: &[SampleTrace],
    groups: Option<&DifficultyGroups>,
) -> io::Result<()> {
    writeln!(w, "epoch,sample_id,p_true,group")?;
    let epochs = traces.first().map_or(0, |t| t.p_true.len());
    for e in 0..epochs {
        for (i, t) in traces.iter().enumerate() {
            let g = groups
                .map(|g| g.group_of[i].to_string())
                .unwrap_or_default();
            writeln!(w, "{},{},{},{}", e + 1, t.sample_id, t.p_true[e], g)?;
        }
    }
    Ok(())
}

/// `epoch,group,mean_p_true`.
pub fn write_group_csv(w: &mut impl Write, groups: &DifficultyGroups) -> io::Result<()> {
    writeln!(w, "epoch,group,mean_p_true")?;
    let epochs = groups.mean_traces[0].len();
    for e in 0..epochs {
        for (g, tr) in groups.mean_traces.iter().enumerate() {
            writeln!(w, "{},{},{}", e + 1, g + 1, tr[e])?;
        }
    }
    Ok(())
}
