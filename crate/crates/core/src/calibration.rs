//! Calibration metrics: reliability bins, ECE/MCE, confidence interval
//! counts and post-hoc temperature scaling.

use ndarray::{Array2, ArrayView2};
use serde::Serialize;
use thiserror::Error;

use crate::loss::{softmax_into, softmax_probs, LossError};

pub const DEFAULT_BINS: usize = 10;
pub const DEFAULT_THRESHOLDS: [f64; 4] = [0.2, 0.4, 0.6, 0.8];

/// Search interval for the temperature, in log space.
pub const TEMPERATURE_RANGE: (f64, f64) = (0.05, 10.0);
pub const GOLDEN_ITERATIONS: usize = 200;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CalibrationError {
    #[error("prediction set is empty")]
    Empty,
    #[error("bin count must be at least 1")]
    NoBins,
    #[error("{rows} probability rows but {labels} labels")]
    LengthMismatch { rows: usize, labels: usize },
    #[error("row {row} sums to {sum}, not 1")]
    NotNormalized { row: usize, sum: f64 },
    #[error("label {label} in row {row} is outside [0, {classes})")]
    LabelOutOfRange {
        row: usize,
        label: usize,
        classes: usize,
    },
    #[error("temperature fit needs at least two samples and two distinct labels")]
    DegenerateLabels,
    #[error("confidence {value} at index {index} is outside [0, 1]")]
    BadConfidence { index: usize, value: f64 },
    #[error(transparent)]
    Loss(#[from] LossError),
}

pub type Result<T> = std::result::Result<T, CalibrationError>;

/// Per-sample class probabilities with labels, plus the derived confidence
/// (row maximum) and prediction (row argmax, lowest index on ties).
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    probs: Array2<f64>,
    labels: Vec<usize>,
    confidences: Vec<f64>,
    predicted: Vec<usize>,
}

fn argmax(row: impl IntoIterator<Item = f64>) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in row.into_iter().enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}

impl PredictionSet {
    pub fn from_probs(probs: Array2<f64>, labels: Vec<usize>) -> Result<Self> {
        if probs.nrows() != labels.len() {
            return Err(CalibrationError::LengthMismatch {
                rows: probs.nrows(),
                labels: labels.len(),
            });
        }
        let m = probs.ncols();
        let mut confidences = Vec::with_capacity(labels.len());
        let mut predicted = Vec::with_capacity(labels.len());
        for (row, (p, &label)) in probs.rows().into_iter().zip(&labels).enumerate() {
            let sum: f64 = p.sum();
            if !((sum - 1.0).abs() <= 1e-9) {
                return Err(CalibrationError::NotNormalized { row, sum });
            }
            if label >= m {
                return Err(CalibrationError::LabelOutOfRange {
                    row,
                    label,
                    classes: m,
                });
            }
            let (arg, conf) = argmax(p.iter().copied());
            predicted.push(arg);
            confidences.push(conf);
        }
        Ok(Self {
            probs,
            labels,
            confidences,
            predicted,
        })
    }

    /// Softmax of each logit row at temperature `tau`.
    pub fn from_logits(logits: ArrayView2<'_, f64>, labels: Vec<usize>, tau: f64) -> Result<Self> {
        let mut probs = Array2::zeros(logits.raw_dim());
        for (z, mut out) in logits.rows().into_iter().zip(probs.rows_mut()) {
            let z = z.to_vec();
            let p = softmax_probs(&z, tau)?;
            out.assign(&ndarray::ArrayView1::from(&p));
        }
        Self::from_probs(probs, labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn probs(&self) -> &Array2<f64> {
        &self.probs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn confidences(&self) -> &[f64] {
        &self.confidences
    }

    pub fn predicted(&self) -> &[usize] {
        &self.predicted
    }

    pub fn accuracy(&self) -> f64 {
        let hits = self
            .predicted
            .iter()
            .zip(&self.labels)
            .filter(|(p, l)| p == l)
            .count();
        hits as f64 / self.len().max(1) as f64
    }

    pub fn mean_confidence(&self) -> f64 {
        self.confidences.iter().sum::<f64>() / self.len().max(1) as f64
    }

    /// Probability assigned to the true class of each sample.
    pub fn true_class_probs(&self) -> Vec<f64> {
        self.labels
            .iter()
            .enumerate()
            .map(|(i, &l)| self.probs[[i, l]])
            .collect()
    }
}

/// One equal-width confidence bin `(lo, hi]`. Statistics are `None` for
/// empty bins.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReliabilityBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub mean_conf: Option<f64>,
    pub accuracy: Option<f64>,
}

impl ReliabilityBin {
    /// `|accuracy - mean confidence|`, if the bin is non-empty.
    pub fn gap(&self) -> Option<f64> {
        Some((self.accuracy? - self.mean_conf?).abs())
    }
}

/// Zero-based index of the bin `(k/bins, (k+1)/bins]` holding `x`; zero
/// falls in the first bin. Edges are the `f64` values of `k / bins`.
pub fn bin_index(x: f64, bins: usize) -> usize {
    let edge = |k: usize| k as f64 / bins as f64;
    let mut k = ((x * bins as f64).ceil() as isize).clamp(1, bins as isize) as usize;
    while k > 1 && x <= edge(k - 1) {
        k -= 1;
    }
    while k < bins && x > edge(k) {
        k += 1;
    }
    k - 1
}

pub fn bin_reliability(p: &PredictionSet, bins: usize) -> Result<Vec<ReliabilityBin>> {
    if bins == 0 {
        return Err(CalibrationError::NoBins);
    }
    if p.is_empty() {
        return Err(CalibrationError::Empty);
    }
    let mut count = vec![0usize; bins];
    let mut conf_sum = vec![0.0; bins];
    let mut hits = vec![0usize; bins];
    for ((&c, &pred), &label) in p.confidences.iter().zip(&p.predicted).zip(&p.labels) {
        let b = bin_index(c, bins);
        count[b] += 1;
        conf_sum[b] += c;
        hits[b] += usize::from(pred == label);
    }
    Ok((0..bins)
        .map(|b| {
            let n = count[b];
            let stat = |v: f64| (n > 0).then(|| v / n as f64);
            ReliabilityBin {
                lo: b as f64 / bins as f64,
                hi: (b + 1) as f64 / bins as f64,
                count: n,
                mean_conf: stat(conf_sum[b]),
                accuracy: stat(hits[b] as f64),
            }
        })
        .collect())
}

fn ece_of(bins: &[ReliabilityBin], n: usize) -> f64 {
    bins.iter()
        .filter_map(|b| Some(b.count as f64 / n as f64 * b.gap()?))
        .sum()
}

fn mce_of(bins: &[ReliabilityBin]) -> f64 {
    bins.iter()
        .filter_map(ReliabilityBin::gap)
        .fold(0.0, f64::max)
}

/// Expected calibration error: count-weighted mean of per-bin
/// `|accuracy - confidence|`.
pub fn ece(p: &PredictionSet, bins: usize) -> Result<f64> {
    Ok(ece_of(&bin_reliability(p, bins)?, p.len()))
}

/// Maximum calibration error over non-empty bins.
pub fn mce(p: &PredictionSet, bins: usize) -> Result<f64> {
    Ok(mce_of(&bin_reliability(p, bins)?))
}

/// Counts of values in `[0, t1], (t1, t2], ..., (tk, 1]`.
pub fn confidence_table(p_true: &[f64], thresholds: &[f64]) -> Result<Vec<usize>> {
    let mut counts = vec![0usize; thresholds.len() + 1];
    for (index, &v) in p_true.iter().enumerate() {
        if !(0.0..=1.0).contains(&v) {
            return Err(CalibrationError::BadConfidence { index, value: v });
        }
        let slot = thresholds
            .iter()
            .position(|&t| v <= t)
            .unwrap_or(thresholds.len());
        counts[slot] += 1;
    }
    Ok(counts)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationReport {
    pub bins: Vec<ReliabilityBin>,
    pub ece: f64,
    pub mce: f64,
    pub accuracy: f64,
    pub mean_conf: f64,
    /// Interval counts of the true-class probability.
    pub interval_counts: Vec<usize>,
}

impl CalibrationReport {
    pub fn compute(p: &PredictionSet, bins: usize) -> Result<Self> {
        let b = bin_reliability(p, bins)?;
        Ok(Self {
            ece: ece_of(&b, p.len()),
            mce: mce_of(&b),
            bins: b,
            accuracy: p.accuracy(),
            mean_conf: p.mean_confidence(),
            interval_counts: confidence_table(&p.true_class_probs(), &DEFAULT_THRESHOLDS)?,
        })
    }

    /// `bin_lo,bin_hi,count,mean_conf,accuracy`; empty bins leave the
    /// statistics blank.
    pub fn reliability_csv(&self) -> String {
        let mut out = String::from("bin_lo,bin_hi,count,mean_conf,accuracy\n");
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for b in &self.bins {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                b.lo,
                b.hi,
                b.count,
                opt(b.mean_conf),
                opt(b.accuracy)
            ));
        }
        out
    }
}

/// Mean negative log-likelihood of the labels under `softmax(z / tau)`.
pub fn mean_nll(logits: ArrayView2<'_, f64>, labels: &[usize], tau: f64) -> f64 {
    let mut total = 0.0;
    for (z, &label) in logits.rows().into_iter().zip(labels) {
        let shift = z.iter().map(|v| v / tau).fold(f64::NEG_INFINITY, f64::max);
        let lse = z.iter().map(|v| (v / tau - shift).exp()).sum::<f64>().ln() + shift;
        total += lse - z[label] / tau;
    }
    total / labels.len() as f64
}

/// Temperature minimizing the mean NLL, by golden-section search over
/// `log tau`. The result is never worse than `tau = 1`.
pub fn fit_temperature(logits: ArrayView2<'_, f64>, labels: &[usize]) -> Result<f64> {
    if logits.nrows() != labels.len() {
        return Err(CalibrationError::LengthMismatch {
            rows: logits.nrows(),
            labels: labels.len(),
        });
    }
    let m = logits.ncols();
    if let Some((row, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= m) {
        return Err(CalibrationError::LabelOutOfRange {
            row,
            label,
            classes: m,
        });
    }
    if labels.len() < 2 || labels.iter().all(|&l| l == labels[0]) {
        return Err(CalibrationError::DegenerateLabels);
    }
    if let Some(value) = logits.iter().copied().find(|v| !v.is_finite()) {
        return Err(LossError::NonFinite { index: 0, value }.into());
    }
    let nll = |log_tau: f64| mean_nll(logits, labels, log_tau.exp());

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (TEMPERATURE_RANGE.0.ln(), TEMPERATURE_RANGE.1.ln());
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let (mut f1, mut f2) = (nll(x1), nll(x2));
    for _ in 0..GOLDEN_ITERATIONS {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = nll(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = nll(x2);
        }
    }
    let (best_x, best_f) = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
    if best_f <= nll(0.0) {
        Ok(best_x.exp())
    } else {
        Ok(1.0)
    }
}

/// Softmax probabilities at temperature `tau` for a batch of logit rows.
pub fn scaled_probs(logits: ArrayView2<'_, f64>, tau: f64) -> Array2<f64> {
    let mut out = Array2::zeros(logits.raw_dim());
    for (z, mut row) in logits.rows().into_iter().zip(out.rows_mut()) {
        let z = z.to_vec();
        softmax_into(&z, tau, row.as_slice_mut().expect("fresh standard layout"));
    }
    out
}

/// Writes `label,z0,...,z{m-1}` rows.
pub fn write_logits_csv(
    w: &mut impl std::io::Write,
    logits: ArrayView2<'_, f64>,
    labels: &[usize],
) -> std::io::Result<()> {
    let header: Vec<String> = (0..logits.ncols()).map(|i| format!("z{i}")).collect();
    writeln!(w, "label,{}", header.join(","))?;
    for (z, label) in logits.rows().into_iter().zip(labels) {
        let row: Vec<String> = z.iter().map(f64::to_string).collect();
        writeln!(w, "{label},{}", row.join(","))?;
    }
    Ok(())
}

/// Reads the format written by [`write_logits_csv`].
pub fn parse_logits_csv(text: &str) -> std::result::Result<(Array2<f64>, Vec<usize>), String> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or("empty logits file")?;
    let m = header.split(',').count().saturating_sub(1);
    if !header.starts_with("label,") || m < 2 {
        return Err(format!("bad header `{header}`"));
    }
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (i, line) in lines.enumerate() {
        let mut fields = line.split(',');
        let label = fields
            .next()
            .and_then(|f| f.trim().parse::<usize>().ok())
            .ok_or_else(|| format!("line {}: bad label", i + 2))?;
        let row: std::result::Result<Vec<f64>, _> =
            fields.map(|f| f.trim().parse::<f64>()).collect();
        let row = row.map_err(|e| format!("line {}: {e}", i + 2))?;
        if row.len() != m {
            return Err(format!(
                "line {}: expected {m} logits, got {}",
                i + 2,
                row.len()
            ));
        }
        labels.push(label);
        values.extend(row);
    }
    let logits = Array2::from_shape_vec((labels.len(), m), values).map_err(|e| e.to_string())?;
    Ok((logits, labels))
}
