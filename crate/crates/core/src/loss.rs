//! Softmax cross-entropy with a gradient decay factor.
//!
//! The loss for one sample with logits `z` and true class `c` is
//!
//! ```text
//! J = log( sum_{i != c} exp(z_i / tau) + beta * exp(z_c / tau) ) - z_c / tau
//! ```
//!
//! `beta = 1` recovers the standard softmax cross-entropy. Smaller `beta`
//! keeps the true-class gradient close to one until the true-class
//! probability is high, larger `beta` makes it fall off quickly. Everything
//! here is a pure function of its arguments.
//!
//! Derivative formulas are written in terms of `p_c`, the ordinary softmax
//! probability of the true class, and hold at `tau = 1`. At other
//! temperatures the logit gradient carries an extra `1 / tau` factor.

use thiserror::Error;

/// Probabilities are clamped into `[P_CLAMP, 1 - P_CLAMP]` before they are
/// used as divisors.
pub const P_CLAMP: f64 = 1e-12;

/// Shift used by the fixed-shift formulation of the loss.
pub const DEFAULT_FIXED_SHIFT: f64 = 70.0;

/// Largest argument `exp` accepts without overflowing an `f64`.
const EXP_MAX_ARG: f64 = 709.78;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LossError {
    #[error("logit {index} is not finite ({value})")]
    NonFinite { index: usize, value: f64 },
    #[error("need at least two classes, got {len}")]
    TooFewClasses { len: usize },
    #[error("true class {class} out of range for {len} logits")]
    ClassOutOfRange { class: usize, len: usize },
    #[error("{name} must be positive and finite, got {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("exp range exceeded at logit {index} ({value}) under a fixed shift")]
    Range { index: usize, value: f64 },
    #[error("{name} must lie in (0, 1), got {value}")]
    Domain { name: &'static str, value: f64 },
    #[error("invalid probability interval [{lo}, {hi}]")]
    InvalidInterval { lo: f64, hi: f64 },
}

pub type Result<T> = std::result::Result<T, LossError>;

/// Subtrahend applied to the logits before exponentiation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Stability {
    /// Shift by the largest exponent. Correct for any logit scale.
    #[default]
    MaxShift,
    /// Subtract a constant `u` from every logit, `exp(z - u)`. With
    /// `u = 70` this is the formulation used for the original experiments.
    FixedShift(f64),
}

/// Loss hyperparameters: gradient decay factor `beta`, temperature `tau`
/// and the numerical stability mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParams {
    beta: f64,
    tau: f64,
    stability: Stability,
}

fn check_positive(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(LossError::InvalidParameter { name, value })
    }
}

impl LossParams {
    pub fn new(beta: f64, tau: f64, stability: Stability) -> Result<Self> {
        check_positive("beta", beta)?;
        check_positive("tau", tau)?;
        if let Stability::FixedShift(u) = stability {
            if !u.is_finite() {
                return Err(LossError::InvalidParameter {
                    name: "shift",
                    value: u,
                });
            }
        }
        Ok(Self {
            beta,
            tau,
            stability,
        })
    }

    /// `tau = 1`, max shift.
    pub fn with_beta(beta: f64) -> Result<Self> {
        Self::new(beta, 1.0, Stability::MaxShift)
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn stability(&self) -> Stability {
        self.stability
    }

    /// Same temperature and stability mode, different `beta`.
    pub fn rebeta(&self, beta: f64) -> Result<Self> {
        Self::new(beta, self.tau, self.stability)
    }
}

/// Class scores of one sample together with its true class.
#[derive(Debug, Clone, Copy)]
pub struct LabeledLogits<'a> {
    z: &'a [f64],
    class: usize,
}

fn check_logits(z: &[f64]) -> Result<()> {
    if z.len() < 2 {
        return Err(LossError::TooFewClasses { len: z.len() });
    }
    if let Some((index, &value)) = z.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(LossError::NonFinite { index, value });
    }
    Ok(())
}

impl<'a> LabeledLogits<'a> {
    pub fn new(z: &'a [f64], class: usize) -> Result<Self> {
        check_logits(z)?;
        if class >= z.len() {
            return Err(LossError::ClassOutOfRange {
                class,
                len: z.len(),
            });
        }
        Ok(Self { z, class })
    }

    pub fn logits(&self) -> &'a [f64] {
        self.z
    }

    pub fn class(&self) -> usize {
        self.class
    }

    pub fn num_classes(&self) -> usize {
        self.z.len()
    }
}

/// Loss value, logit gradient, softmax probabilities and true-class
/// probability for one sample.
///
/// `p_true` is the clamped value that entered the gradient denominator.
#[derive(Debug, Clone, PartialEq)]
pub struct LossEval {
    pub loss: f64,
    pub grad: Vec<f64>,
    pub probs: Vec<f64>,
    pub p_true: f64,
}

fn max_of(values: impl Iterator<Item = f64>) -> f64 {
    values.fold(f64::NEG_INFINITY, f64::max)
}

/// Softmax of `z / tau`, shifted by the largest scaled logit.
pub fn softmax_probs(z: &[f64], tau: f64) -> Result<Vec<f64>> {
    check_logits(z)?;
    check_positive("tau", tau)?;
    let mut out = vec![0.0; z.len()];
    softmax_into(z, tau, &mut out);
    Ok(out)
}

/// Unchecked softmax into a caller-provided buffer.
pub(crate) fn softmax_into(z: &[f64], tau: f64, out: &mut [f64]) {
    let shift = max_of(z.iter().map(|v| v / tau));
    let mut total = 0.0;
    for (o, &v) in out.iter_mut().zip(z) {
        *o = (v / tau - shift).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

/// Log-sum-exp of `ln(beta)` and `(z_i - z_c) / tau` for `i != c`, shifted
/// by the largest term. Equal to the loss in exact arithmetic; the constant
/// part of the result is not perturbed by small logit changes.
fn loss_max_shift(z: &[f64], class: usize, beta: f64, tau: f64) -> f64 {
    let zc = z[class];
    let log_beta = beta.ln();
    let scaled = |i: usize| -> f64 {
        if i == class {
            log_beta
        } else {
            (z[i] - zc) / tau
        }
    };
    let mut top = 0;
    let mut top_val = scaled(0);
    for i in 1..z.len() {
        let v = scaled(i);
        if v > top_val {
            top = i;
            top_val = v;
        }
    }
    let rest: f64 = (0..z.len())
        .filter(|&i| i != top)
        .map(|i| (scaled(i) - top_val).exp())
        .sum();
    top_val + rest.ln_1p()
}

fn loss_fixed_shift(z: &[f64], class: usize, beta: f64, tau: f64, shift: f64) -> Result<f64> {
    let mut total = 0.0;
    for (i, &v) in z.iter().enumerate() {
        let arg = (v - shift) / tau;
        if arg > EXP_MAX_ARG {
            return Err(LossError::Range { index: i, value: v });
        }
        let e = arg.exp();
        total += if i == class { beta * e } else { e };
    }
    if !(total > 0.0) || !total.is_finite() {
        let (index, &value) = z
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("at least two logits");
        return Err(LossError::Range { index, value });
    }
    Ok(total.ln() - (z[class] - shift) / tau)
}

fn loss_unchecked(z: &[f64], class: usize, params: &LossParams) -> Result<f64> {
    match params.stability {
        Stability::MaxShift => Ok(loss_max_shift(z, class, params.beta, params.tau)),
        Stability::FixedShift(u) => loss_fixed_shift(z, class, params.beta, params.tau, u),
    }
}

/// Per-sample loss value.
pub fn beta_ce_loss(x: &LabeledLogits<'_>, params: &LossParams) -> Result<f64> {
    loss_unchecked(x.z, x.class, params)
}

/// Loss, gradient and probabilities for one sample.
pub fn beta_ce_eval(x: &LabeledLogits<'_>, params: &LossParams) -> Result<LossEval> {
    let m = x.num_classes();
    let mut grad = vec![0.0; m];
    let mut probs = vec![0.0; m];
    let (loss, p_true) = beta_ce_eval_into(x.z, x.class, params, &mut grad, &mut probs)?;
    Ok(LossEval {
        loss,
        grad,
        probs,
        p_true,
    })
}

/// Allocation-free form of [`beta_ce_eval`] used on the training hot path.
/// Returns `(loss, clamped p_c)`; `grad` and `probs` must have the same
/// length as `z`.
pub fn beta_ce_eval_into(
    z: &[f64],
    class: usize,
    params: &LossParams,
    grad: &mut [f64],
    probs: &mut [f64],
) -> Result<(f64, f64)> {
    LabeledLogits::new(z, class)?;
    assert_eq!(grad.len(), z.len(), "gradient buffer length");
    assert_eq!(probs.len(), z.len(), "probability buffer length");
    let loss = loss_unchecked(z, class, params)?;

    softmax_into(z, params.tau, probs);
    // 1 - p_c summed from the other classes keeps its precision as p_c -> 1.
    let rest: f64 = probs
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != class)
        .map(|(_, p)| p)
        .sum();
    let pc = probs[class].clamp(P_CLAMP, 1.0 - P_CLAMP);
    let rest_c = rest.clamp(P_CLAMP, 1.0 - P_CLAMP);
    // tau * (1 + (beta - 1) p_c), written as tau * ((1 - p_c) + beta p_c)
    let denom = params.tau * (rest_c + params.beta * pc);
    for (i, (g, &p)) in grad.iter_mut().zip(probs.iter()).enumerate() {
        *g = if i == class { -rest / denom } else { p / denom };
    }
    Ok((loss, pc))
}

fn check_open_unit(name: &'static str, p: f64) -> Result<f64> {
    if p > 0.0 && p < 1.0 {
        Ok(p)
    } else {
        Err(LossError::Domain { name, value: p })
    }
}

/// `1 + (beta - 1) p`
fn decay_denominator(p: f64, beta: f64) -> f64 {
    1.0 + (beta - 1.0) * p
}

/// Gradient magnitude `G = -dJ/dz_c = (1 - p_c) / (1 + (beta - 1) p_c)`.
pub fn gradient_magnitude(p_c: f64, beta: f64) -> Result<f64> {
    check_open_unit("p_c", p_c)?;
    check_positive("beta", beta)?;
    Ok((1.0 - p_c) / decay_denominator(p_c, beta))
}

/// First and second derivatives of `G` with respect to `p_c`.
pub fn magnitude_derivatives(p_c: f64, beta: f64) -> Result<(f64, f64)> {
    check_open_unit("p_c", p_c)?;
    check_positive("beta", beta)?;
    let d = decay_denominator(p_c, beta);
    let dg = -beta / (d * d);
    let d2g = 2.0 * beta * (beta - 1.0) / (d * d * d);
    Ok((dg, d2g))
}

fn curvature_unchecked(p: f64, beta: f64) -> f64 {
    let d = decay_denominator(p, beta);
    beta * p * (1.0 - p) / (d * d)
}

/// Second and third derivatives of the loss with respect to the true-class
/// logit, at `tau = 1`.
pub fn logit_curvature(p_c: f64, beta: f64) -> Result<(f64, f64)> {
    check_open_unit("p_c", p_c)?;
    check_positive("beta", beta)?;
    let d = decay_denominator(p_c, beta);
    let d2j = curvature_unchecked(p_c, beta);
    let d3j = beta * p_c * (1.0 - p_c) / (d * d * d) * (1.0 - (1.0 + beta) * p_c);
    Ok((d2j, d3j))
}

/// `p_c = 1 / (1 + beta)`, where the logit curvature peaks at 1/4 and the
/// gradient switches between its convex and concave regimes.
pub fn inflection_point(beta: f64) -> Result<f64> {
    check_positive("beta", beta)?;
    Ok(1.0 / (1.0 + beta))
}

/// Largest logit curvature over `p_c` in `[p_lo, p_hi]`.
///
/// The curvature is unimodal in `p_c` with its peak of exactly 1/4 at
/// [`inflection_point`], so the bound is 1/4 when the peak lies in the
/// interval and the larger endpoint value otherwise. On `[0, 0.5]` this is
/// `beta / (beta + 1)^2` for `beta < 1` and `1/4` for `beta >= 1`.
pub fn local_lipschitz_bound(beta: f64, p_lo: f64, p_hi: f64) -> Result<f64> {
    check_positive("beta", beta)?;
    if !(p_lo >= 0.0 && p_lo < p_hi && p_hi <= 1.0) {
        return Err(LossError::InvalidInterval { lo: p_lo, hi: p_hi });
    }
    let peak = 1.0 / (1.0 + beta);
    if (p_lo..=p_hi).contains(&peak) {
        return Ok(0.25);
    }
    Ok(curvature_unchecked(p_lo, beta).max(curvature_unchecked(p_hi, beta)))
}

/// Descent-optimal step size `1 / L` for the local curvature bound `L`.
/// Any step below twice this value still decreases the loss.
pub fn suggested_learning_rate(beta: f64, p_lo: f64, p_hi: f64) -> Result<f64> {
    Ok(1.0 / local_lipschitz_bound(beta, p_lo, p_hi)?)
}
