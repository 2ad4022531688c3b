//! Numerical verifiers for the loss and its analytic properties.
//!
//! Reference values are computed without the analytic derivative code in
//! [`crate::loss`]: gradients come from central differences of the
//! oracle's own loss form `ln beta + softplus(lse_{i != c}((z_i - z_c) / tau) - ln beta)`
//! with the constant `ln beta` dropped (it only adds rounding noise to the
//! differences), curvature from differences of the oracle's own true-class
//! weight `q = beta / (beta + sum_{i != c} exp(z_i - z_c))`, whose first and
//! second logit derivatives are the second and third loss derivatives.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::loss::{
    beta_ce_eval, beta_ce_loss, gradient_magnitude, inflection_point, local_lipschitz_bound,
    logit_curvature, magnitude_derivatives, softmax_probs, LabeledLogits, LossError, LossParams,
    Stability,
};

/// Betas exercised by default.
pub const DEFAULT_BETAS: [f64; 5] = [0.01, 0.1, 1.0, 5.0, 20.0];

/// Slack for the sandwich bounds, which are exact up to rounding.
pub const ROUNDING_SLACK: f64 = 1e-12;
pub const NULL_SUM_TOL: f64 = 1e-12;
pub const BETA_ONE_TOL: f64 = 1e-12;
/// Relative error of the loss value, floored at an absolute scale of 1.
pub const LOSS_VALUE_TOL: f64 = 1e-12;
pub const SHIFT_TOL: f64 = 1e-10;
pub const SHIFT_RANGE: f64 = 50.0;
pub const CURVATURE_FD_STEP: f64 = 1e-4;
pub const CURVATURE_TOL: f64 = 1e-5;
pub const PEAK_GRID_POINTS: usize = 1_000_000;
pub const PEAK_LOCATION_TOL: f64 = 1e-5;
pub const PEAK_VALUE_TOL: f64 = 1e-9;
pub const CONVEXITY_GRID_POINTS: usize = 10_000;
pub const LIMIT_TOL: f64 = 1e-7;
pub const LOGIT_RANGE: f64 = 5.0;
pub const MAX_CLASSES: usize = 20;
pub const SANDWICH_TAUS: [f64; 3] = [1.0, 0.1, 0.01];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("function is not finite at coordinate {coord} (value {value})")]
    NonFinite { coord: usize, value: f64 },
    #[error("beta must be positive and finite, got {0}")]
    InvalidBeta(f64),
    #[error("invalid finite-difference config: {0}")]
    InvalidConfig(String),
    #[error("invalid grid [{lo}, {hi}] with {points} points")]
    InvalidGrid { lo: f64, hi: f64, points: usize },
    #[error(transparent)]
    Loss(#[from] LossError),
}

pub type Result<T> = std::result::Result<T, OracleError>;

#[derive(Debug, Clone, PartialEq)]
pub struct FdConfig {
    pub step: f64,
    pub rel_tol: f64,
    pub trials: usize,
    pub seed: u64,
}

impl Default for FdConfig {
    fn default() -> Self {
        Self {
            step: 1e-5,
            rel_tol: 1e-6,
            trials: 200,
            seed: 0,
        }
    }
}

impl FdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(OracleError::InvalidConfig(format!("step {}", self.step)));
        }
        if !(self.rel_tol > 0.0 && self.rel_tol.is_finite()) {
            return Err(OracleError::InvalidConfig(format!(
                "rel_tol {}",
                self.rel_tol
            )));
        }
        if self.trials == 0 {
            return Err(OracleError::InvalidConfig("trials must be positive".into()));
        }
        Ok(())
    }
}

/// `(f(z + h e_i) - f(z - h e_i)) / 2h` for every coordinate.
pub fn central_diff_grad<F>(f: F, z: &[f64], step: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    let mut probe = z.to_vec();
    let mut out = Vec::with_capacity(z.len());
    for i in 0..z.len() {
        probe[i] = z[i] + step;
        let up = f(&probe);
        probe[i] = z[i] - step;
        let down = f(&probe);
        probe[i] = z[i];
        for value in [up, down] {
            if !value.is_finite() {
                return Err(OracleError::NonFinite { coord: i, value });
            }
        }
        out.push((up - down) / (2.0 * step));
    }
    Ok(out)
}

/// Grid point in `[lo, hi]` maximizing `g`, and the maximum.
pub fn grid_scan_extremum<G>(g: G, lo: f64, hi: f64, points: usize) -> Result<(f64, f64)>
where
    G: Fn(f64) -> f64,
{
    if !(lo < hi) || points < 3 {
        return Err(OracleError::InvalidGrid { lo, hi, points });
    }
    let span = hi - lo;
    let last = (points - 1) as f64;
    let mut best = (lo, f64::NEG_INFINITY);
    for k in 0..points {
        let x = lo + span * (k as f64 / last);
        let v = g(x);
        if v > best.1 {
            best = (x, v);
        }
    }
    Ok(best)
}

/// One checked property at one beta.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyResult {
    pub property: String,
    pub beta: f64,
    pub tolerance: f64,
    pub worst_error: f64,
    pub pass: bool,
}

impl PropertyResult {
    fn new(property: &str, beta: f64, tolerance: f64, worst_error: f64) -> Self {
        Self {
            property: property.to_string(),
            beta,
            tolerance,
            worst_error,
            pass: worst_error <= tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    pub entries: Vec<PropertyResult>,
}

impl Report {
    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    pub fn failing(&self) -> impl Iterator<Item = &PropertyResult> {
        self.entries.iter().filter(|e| !e.pass)
    }

    pub fn find(&self, property: &str, beta: f64) -> Option<&PropertyResult> {
        self.entries
            .iter()
            .find(|e| e.property == property && e.beta == beta)
    }

    pub fn write_json_lines(&self, w: &mut impl Write) -> io::Result<()> {
        for e in &self.entries {
            serde_json::to_writer(&mut *w, e)?;
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Random sample: 2 to 20 classes, logits uniform in [-5, 5].
pub fn random_logits(rng: &mut impl Rng) -> (Vec<f64>, usize) {
    let m = rng.random_range(2..=MAX_CLASSES);
    let z = (0..m)
        .map(|_| rng.random_range(-LOGIT_RANGE..=LOGIT_RANGE))
        .collect();
    (z, rng.random_range(0..m))
}

fn stream(fd: &FdConfig, property: u64, beta_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(fd.seed);
    rng.set_stream((property << 32) | beta_index as u64);
    rng
}

fn inf_norm(v: impl Iterator<Item = f64>) -> f64 {
    v.fold(0.0, |acc, x| acc.max(x.abs()))
}

/// Outcome of comparing a gradient routine against finite differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheck {
    /// Finite-difference gradient of each trial.
    pub references: Vec<Vec<f64>>,
    /// Largest `||analytic - reference||_inf / ||reference||_inf`.
    pub worst_error: f64,
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `J - ln beta`, computed independently of [`crate::loss`].
fn shifted_loss(z: &[f64], c: usize, beta: f64, tau: f64) -> f64 {
    let diffs = z
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != c)
        .map(|(_, v)| (v - z[c]) / tau);
    let top = diffs.clone().fold(f64::NEG_INFINITY, f64::max);
    let lse = top + diffs.map(|d| (d - top).exp()).sum::<f64>().ln();
    softplus(lse - beta.ln())
}

/// Draws `fd.trials` random samples and compares `analytic` with central
/// differences of the loss value.
pub fn gradient_check<A>(
    fd: &FdConfig,
    beta: f64,
    beta_index: usize,
    analytic: A,
) -> Result<GradientCheck>
where
    A: Fn(&LabeledLogits<'_>, &LossParams) -> std::result::Result<Vec<f64>, LossError>,
{
    let params = LossParams::with_beta(beta)?;
    let mut rng = stream(fd, 1, beta_index);
    let mut references = Vec::with_capacity(fd.trials);
    let mut worst = 0.0f64;
    for _ in 0..fd.trials {
        let (z, c) = random_logits(&mut rng);
        let reference = central_diff_grad(|v| shifted_loss(v, c, beta, 1.0), &z, fd.step)?;
        let got = analytic(&LabeledLogits::new(&z, c)?, &params)?;
        let diff = inf_norm(got.iter().zip(&reference).map(|(a, b)| a - b));
        let scale = inf_norm(reference.iter().copied()).max(f64::MIN_POSITIVE);
        worst = worst.max(diff / scale);
        references.push(reference);
    }
    Ok(GradientCheck {
        references,
        worst_error: worst,
    })
}

/// `q = beta / (beta + sum_{i != c} exp(z_i - z_c))` and `1 - q`, each
/// evaluated as a logistic of `lse - ln beta` so neither loses precision
/// near 0 or 1.
fn true_class_weight(z: &[f64], c: usize, beta: f64) -> (f64, f64) {
    let diffs = z
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != c)
        .map(|(_, v)| v - z[c]);
    let top = diffs.clone().fold(f64::NEG_INFINITY, f64::max);
    let x = top + diffs.map(|d| (d - top).exp()).sum::<f64>().ln() - beta.ln();
    (1.0 / (1.0 + x.exp()), 1.0 / (1.0 + (-x).exp()))
}

fn standard_ce(z: &[f64], c: usize) -> (f64, Vec<f64>) {
    let top = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - top).exp()).collect();
    let total: f64 = e.iter().sum();
    let loss = top + total.ln() - z[c];
    let grad = e
        .iter()
        .enumerate()
        .map(|(i, v)| v / total - if i == c { 1.0 } else { 0.0 })
        .collect();
    (loss, grad)
}

fn check_betas(betas: &[f64]) -> Result<()> {
    match betas.iter().find(|b| !(b.is_finite() && **b > 0.0)) {
        Some(&b) => Err(OracleError::InvalidBeta(b)),
        None => Ok(()),
    }
}

/// Runs every property for every beta and collects the results in a
/// deterministic order.
pub fn verify_all(fd: &FdConfig, betas: &[f64]) -> Result<Report> {
    fd.validate()?;
    check_betas(betas)?;
    let mut report = Report::default();
    for (bi, &beta) in betas.iter().enumerate() {
        report.entries.extend(per_beta_properties(fd, beta, bi)?);
    }
    report.entries.extend(beta_free_properties(fd)?);
    Ok(report)
}

fn per_beta_properties(fd: &FdConfig, beta: f64, bi: usize) -> Result<Vec<PropertyResult>> {
    let mut out = Vec::new();
    let params = LossParams::with_beta(beta)?;

    let grad = gradient_check(fd, beta, bi, |x, p| Ok(beta_ce_eval(x, p)?.grad))?;
    out.push(PropertyResult::new(
        "fd_gradient",
        beta,
        fd.rel_tol,
        grad.worst_error,
    ));

    // Loss value against the oracle's own form, over several temperatures.
    let mut rng = stream(fd, 6, bi);
    let mut value_err = 0.0f64;
    for _ in 0..fd.trials {
        let (z, c) = random_logits(&mut rng);
        for tau in SANDWICH_TAUS {
            let p = LossParams::new(beta, tau, Stability::MaxShift)?;
            let j = beta_ce_loss(&LabeledLogits::new(&z, c)?, &p)?;
            let want = beta.ln() + shifted_loss(&z, c, beta, tau);
            value_err = value_err.max((j - want).abs() / want.abs().max(1.0));
        }
    }
    out.push(PropertyResult::new(
        "loss_value",
        beta,
        LOSS_VALUE_TOL,
        value_err,
    ));

    // Null-sum, magnitude identity and shift invariance on shared samples.
    let mut rng = stream(fd, 2, bi);
    let (mut null_sum, mut identity, mut shift) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..fd.trials {
        let (z, c) = random_logits(&mut rng);
        let e = beta_ce_eval(&LabeledLogits::new(&z, c)?, &params)?;
        null_sum = null_sum.max(e.grad.iter().sum::<f64>().abs());
        let others: f64 = e
            .grad
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != c)
            .map(|(_, g)| g)
            .sum();
        identity = identity.max((e.grad[c].abs() - others).abs());
        let k = rng.random_range(-SHIFT_RANGE..=SHIFT_RANGE);
        let moved: Vec<f64> = z.iter().map(|v| v + k).collect();
        let e2 = beta_ce_eval(&LabeledLogits::new(&moved, c)?, &params)?;
        let d = inf_norm(
            std::iter::once(e.loss - e2.loss)
                .chain(e.grad.iter().zip(&e2.grad).map(|(a, b)| a - b))
                .chain(e.probs.iter().zip(&e2.probs).map(|(a, b)| a - b)),
        );
        shift = shift.max(d);
    }
    out.push(PropertyResult::new(
        "null_sum",
        beta,
        NULL_SUM_TOL,
        null_sum,
    ));
    out.push(PropertyResult::new(
        "magnitude_identity",
        beta,
        NULL_SUM_TOL,
        identity,
    ));
    out.push(PropertyResult::new(
        "shift_invariance",
        beta,
        SHIFT_TOL,
        shift,
    ));

    // max(log beta, max_{i != c} (z_i - z_c) / tau) <= J <= that + log m
    let mut rng = stream(fd, 3, bi);
    let mut violation = 0.0f64;
    for _ in 0..fd.trials {
        let (z, c) = random_logits(&mut rng);
        for tau in SANDWICH_TAUS {
            let p = LossParams::new(beta, tau, Stability::MaxShift)?;
            let j = beta_ce_loss(&LabeledLogits::new(&z, c)?, &p)?;
            let lower = z
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != c)
                .map(|(_, v)| (v - z[c]) / tau)
                .fold(beta.ln(), f64::max);
            let upper = lower + (z.len() as f64).ln();
            violation = violation.max(lower - j).max(j - upper);
        }
    }
    out.push(PropertyResult::new(
        "margin_sandwich",
        beta,
        ROUNDING_SLACK,
        violation.max(0.0),
    ));

    // Logit curvature against differences of the oracle's own weight q,
    // with dJ/dz_c = q - 1. Near q = 1 the complement is differenced instead
    // to avoid cancellation.
    let mut rng = stream(fd, 4, bi);
    let h = CURVATURE_FD_STEP;
    let (mut err2, mut err3) = (0.0f64, 0.0f64);
    for _ in 0..fd.trials {
        let (z, c) = random_logits(&mut rng);
        let weight_at = |dz: f64| {
            let mut moved = z.clone();
            moved[c] += dz;
            true_class_weight(&moved, c, beta)
        };
        let (up, mid, down) = (weight_at(h), weight_at(0.0), weight_at(-h));
        let (sign, f_up, f_mid, f_down) = if mid.0 <= 0.5 {
            (1.0, up.0, mid.0, down.0)
        } else {
            (-1.0, up.1, mid.1, down.1)
        };
        let d2_ref = sign * (f_up - f_down) / (2.0 * h);
        let d3_ref = sign * (f_up - 2.0 * f_mid + f_down) / (h * h);
        let pc = softmax_probs(&z, 1.0)?[c];
        let (d2, d3) = logit_curvature(pc, beta)?;
        err2 = err2.max((d2 - d2_ref).abs() / d2.abs());
        err3 = err3.max((d3 - d3_ref).abs() / d3.abs().max(d2));
    }
    out.push(PropertyResult::new(
        "curvature_d2j",
        beta,
        CURVATURE_TOL,
        err2,
    ));
    out.push(PropertyResult::new(
        "curvature_d3j",
        beta,
        CURVATURE_TOL,
        err3,
    ));

    // Peak of the curvature: location and height.
    let peak = inflection_point(beta)?;
    let (arg, val) = grid_scan_extremum(
        |p| logit_curvature(p, beta).map_or(f64::NEG_INFINITY, |v| v.0),
        1e-6,
        1.0 - 1e-6,
        PEAK_GRID_POINTS,
    )?;
    out.push(PropertyResult::new(
        "curvature_peak_location",
        beta,
        PEAK_LOCATION_TOL,
        (arg - peak).abs(),
    ));
    out.push(PropertyResult::new(
        "curvature_peak_value",
        beta,
        PEAK_VALUE_TOL,
        (val - 0.25).abs(),
    ));

    // Local bound on [0, 0.5] against its closed form.
    let bound = local_lipschitz_bound(beta, 0.0, 0.5)?;
    let closed = if beta < 1.0 {
        beta / ((beta + 1.0) * (beta + 1.0))
    } else {
        0.25
    };
    out.push(PropertyResult::new(
        "local_bound_half",
        beta,
        4.0 * f64::EPSILON,
        (bound - closed).abs() / closed,
    ));

    // Sign of d2G/dp^2 follows sign(beta - 1) everywhere; identically zero at 1.
    let mut wrong = 0usize;
    let mut decay_wrong = 0usize;
    let mut prev_g = f64::INFINITY;
    for k in 0..CONVEXITY_GRID_POINTS {
        let p = (k as f64 + 0.5) / CONVEXITY_GRID_POINTS as f64;
        let (dg, d2g) = magnitude_derivatives(p, beta)?;
        let ok = if beta < 1.0 {
            d2g < 0.0
        } else if beta > 1.0 {
            d2g > 0.0
        } else {
            d2g == 0.0
        };
        wrong += usize::from(!ok || !(dg < 0.0));
        let g = gradient_magnitude(p, beta)?;
        decay_wrong += usize::from(!(g < prev_g) || !(0.0..1.0).contains(&g));
        prev_g = g;
    }
    out.push(PropertyResult::new(
        "convexity_flip",
        beta,
        0.0,
        wrong as f64,
    ));

    // Endpoints: G -> 1 as p_c -> 0 and G -> 0 as p_c -> 1.
    let near_zero = gradient_magnitude(1e-9, beta)?;
    let near_one = gradient_magnitude(1.0 - 1e-9, beta)?;
    decay_wrong += usize::from(!(near_zero > 1.0 - 1e-6 * (1.0 / beta).max(1.0)));
    decay_wrong += usize::from(!(near_one < 1e-6 * beta.max(1.0)));
    out.push(PropertyResult::new(
        "monotone_decay",
        beta,
        0.0,
        decay_wrong as f64,
    ));

    Ok(out)
}

fn beta_free_properties(fd: &FdConfig) -> Result<Vec<PropertyResult>> {
    let mut out = Vec::new();
    let one = LossParams::with_beta(1.0)?;

    let mut rng = stream(fd, 5, 0);
    let mut worst = 0.0f64;
    for _ in 0..fd.trials {
        let (z, c) = random_logits(&mut rng);
        let e = beta_ce_eval(&LabeledLogits::new(&z, c)?, &one)?;
        let (loss, grad) = standard_ce(&z, c);
        worst = worst.max(inf_norm(
            std::iter::once(e.loss - loss).chain(e.grad.iter().zip(&grad).map(|(a, b)| a - b)),
        ));
    }
    out.push(PropertyResult::new(
        "beta_one_is_standard_ce",
        1.0,
        BETA_ONE_TOL,
        worst,
    ));

    // max_i z_i - z_c <= tau J <= max_i z_i - z_c + tau log m
    let mut rng = stream(fd, 6, 0);
    let mut violation = 0.0f64;
    for _ in 0..fd.trials {
        let (z, c) = random_logits(&mut rng);
        let top = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for tau in SANDWICH_TAUS {
            let p = LossParams::new(1.0, tau, Stability::MaxShift)?;
            let tj = tau * beta_ce_loss(&LabeledLogits::new(&z, c)?, &p)?;
            let lower = top - z[c];
            let upper = lower + tau * (z.len() as f64).ln();
            violation = violation.max(lower - tj).max(tj - upper);
        }
    }
    out.push(PropertyResult::new(
        "temperature_sandwich",
        1.0,
        ROUNDING_SLACK,
        violation.max(0.0),
    ));

    let small = gradient_magnitude(0.5, 1e-8)?;
    out.push(PropertyResult::new(
        "limit_beta_to_zero",
        1e-8,
        LIMIT_TOL,
        1.0 - small,
    ));
    let large = gradient_magnitude(0.5, 1e8)?;
    out.push(PropertyResult::new(
        "limit_beta_to_infinity",
        1e8,
        LIMIT_TOL,
        large,
    ));

    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn fd_sum_of_squares() {
        let g = central_diff_grad(|v| v.iter().map(|x| x * x).sum(), &[1.0, 2.0], 1e-5).unwrap();
        assert_relative_eq!(g[0], 2.0, epsilon = 1e-8);
        assert_relative_eq!(g[1], 4.0, epsilon = 1e-8);
    }

    #[test]
    fn fd_constant() {
        let g = central_diff_grad(|_| 3.5, &[0.1, -7.0, 2.0], 1e-5).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn fd_reports_bad_coordinate() {
        let f = |v: &[f64]| if v[1] > 0.0 { f64::NAN } else { 0.0 };
        assert!(matches!(
            central_diff_grad(f, &[0.0, 0.0, 0.0], 1e-5),
            Err(OracleError::NonFinite { coord: 1, .. })
        ));
    }

    #[test]
    fn fd_of_loss_matches_uniform_example() {
        let params = LossParams::with_beta(0.1).unwrap();
        let f = |v: &[f64]| beta_ce_loss(&LabeledLogits::new(v, 0).unwrap(), &params).unwrap();
        let g = central_diff_grad(f, &[0.0; 10], 1e-5).unwrap();
        assert_relative_eq!(g[0], -0.989011, max_relative = 1e-6);
        for v in &g[1..] {
            assert_relative_eq!(*v, 0.109890, max_relative = 1e-5);
            assert_relative_eq!(*v, 0.1 / 0.91, max_relative = 1e-6);
        }
    }

    #[test]
    fn grid_scan_examples() {
        let (arg, _) = grid_scan_extremum(|x| -(x - 0.3) * (x - 0.3), 0.0, 1.0, 100_000).unwrap();
        assert!((arg - 0.3).abs() < 1e-5);
        let d2 = |beta: f64| move |p: f64| logit_curvature(p, beta).unwrap().0;
        let (arg, val) = grid_scan_extremum(d2(1.0), 1e-6, 1.0 - 1e-6, PEAK_GRID_POINTS).unwrap();
        assert!((arg - 0.5).abs() < 1e-5);
        assert!((val - 0.25).abs() < 1e-9);
        let (arg, val) = grid_scan_extremum(d2(10.0), 1e-6, 1.0 - 1e-6, PEAK_GRID_POINTS).unwrap();
        assert!((arg - 1.0 / 11.0).abs() < 1e-5);
        assert!((val - 0.25).abs() < 1e-9);
        assert!(grid_scan_extremum(|x| x, 1.0, 0.0, 10).is_err());
        assert!(grid_scan_extremum(|x| x, 0.0, 1.0, 2).is_err());
    }

    #[test]
    fn weight_q_matches_softmax_form() {
        let z = [0.3, -1.2, 2.0, 0.7];
        for beta in [0.01, 1.0, 20.0] {
            let (q, r) = true_class_weight(&z, 1, beta);
            let p = softmax_probs(&z, 1.0).unwrap()[1];
            let want = beta * p / (1.0 + (beta - 1.0) * p);
            assert_relative_eq!(q, want, max_relative = 1e-13);
            assert_relative_eq!(r, 1.0 - want, max_relative = 1e-12);
        }
    }

    #[test]
    fn beta_one_single_trial_passes() {
        let fd = FdConfig {
            trials: 1,
            ..FdConfig::default()
        };
        assert!(verify_all(&fd, &[1.0]).unwrap().all_pass());
    }

    #[test]
    fn negative_beta_is_precondition_error() {
        assert_eq!(
            verify_all(&FdConfig::default(), &[-1.0]),
            Err(OracleError::InvalidBeta(-1.0))
        );
    }

    #[test]
    fn json_lines_schema() {
        let report = Report {
            entries: vec![PropertyResult::new("null_sum", 0.1, 1e-12, 0.0)],
        };
        let mut buf = Vec::new();
        report.write_json_lines(&mut buf).unwrap();
        let line = String::from_utf8(buf).unwrap();
        let v: serde_json::Value = serde_json::from_str(line.trim()).unwrap();
        for key in ["property", "beta", "tolerance", "worst_error", "pass"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
    }
}
