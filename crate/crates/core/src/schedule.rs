//! Linear warm-up of the gradient decay factor.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScheduleError {
    #[error("{name} must be positive and finite, got {value}")]
    InvalidBeta { name: &'static str, value: f64 },
    #[error("warm-up length must be at least 1 step")]
    ZeroLength,
    #[error("unknown warm-up granularity `{0}` (expected `iteration` or `epoch`)")]
    UnknownGranularity(String),
}

/// What the schedule's step counter counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Granularity {
    /// One step per mini-batch update.
    #[default]
    PerIteration,
    /// One step per pass over the training set.
    PerEpoch,
}

impl FromStr for Granularity {
    type Err = ScheduleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "iteration" | "iter" => Ok(Self::PerIteration),
            "epoch" => Ok(Self::PerEpoch),
            other => Err(ScheduleError::UnknownGranularity(other.to_string())),
        }
    }
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::PerIteration => "iteration",
            Self::PerEpoch => "epoch",
        })
    }
}

/// `beta(t) = beta_initial + (beta_end - beta_initial) * t / t_warm`, held
/// at `beta_end` once `t >= t_warm`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WarmupSchedule {
    beta_initial: f64,
    beta_end: f64,
    t_warm: u64,
    granularity: Granularity,
}

impl WarmupSchedule {
    pub fn new(
        beta_initial: f64,
        beta_end: f64,
        t_warm: u64,
        granularity: Granularity,
    ) -> Result<Self, ScheduleError> {
        for (name, value) in [("beta_initial", beta_initial), ("beta_end", beta_end)] {
            if !(value.is_finite() && value > 0.0) {
                return Err(ScheduleError::InvalidBeta { name, value });
            }
        }
        if t_warm == 0 {
            return Err(ScheduleError::ZeroLength);
        }
        Ok(Self {
            beta_initial,
            beta_end,
            t_warm,
            granularity,
        })
    }

    pub fn beta_initial(&self) -> f64 {
        self.beta_initial
    }

    pub fn beta_end(&self) -> f64 {
        self.beta_end
    }

    pub fn t_warm(&self) -> u64 {
        self.t_warm
    }

    pub fn granularity(&self) -> Granularity {
        self.granularity
    }

    pub fn beta_at(&self, t: u64) -> f64 {
        if t >= self.t_warm {
            return self.beta_end;
        }
        let frac = t as f64 / self.t_warm as f64;
        self.beta_initial + (self.beta_end - self.beta_initial) * frac
    }

    /// Beta for a training step given the zero-based epoch and the global
    /// zero-based mini-batch counter.
    pub fn beta_for_step(&self, epoch: u64, iteration: u64) -> f64 {
        match self.granularity {
            Granularity::PerIteration => self.beta_at(iteration),
            Granularity::PerEpoch => self.beta_at(epoch),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn demo() -> WarmupSchedule {
        WarmupSchedule::new(0.1, 1.0, 1000, Granularity::PerIteration).unwrap()
    }

    #[test]
    fn endpoints_and_midpoint() {
        let s = demo();
        assert_eq!(s.beta_at(0), 0.1);
        assert_eq!(s.beta_at(500), 0.55);
        assert_eq!(s.beta_at(1000), 1.0);
        assert_eq!(s.beta_at(5000), 1.0);
    }

    #[test]
    fn decreasing_schedule_is_allowed() {
        let s = WarmupSchedule::new(2.0, 0.5, 10, Granularity::PerEpoch).unwrap();
        assert_eq!(s.beta_at(10), 0.5);
        assert!(s.beta_at(3) < 2.0 && s.beta_at(3) > 0.5);
    }

    #[test]
    fn rejects_invalid() {
        assert!(WarmupSchedule::new(0.0, 1.0, 10, Granularity::PerIteration).is_err());
        assert!(WarmupSchedule::new(0.1, -1.0, 10, Granularity::PerIteration).is_err());
        assert_eq!(
            WarmupSchedule::new(0.1, 1.0, 0, Granularity::PerIteration),
            Err(ScheduleError::ZeroLength)
        );
    }

    #[test]
    fn granularity_selects_counter() {
        let it = demo();
        let ep = WarmupSchedule::new(0.1, 1.0, 1000, Granularity::PerEpoch).unwrap();
        assert_eq!(it.beta_for_step(3, 500), 0.55);
        assert_eq!(ep.beta_for_step(500, 3), 0.55);
        assert_eq!(
            "epoch".parse::<Granularity>().unwrap(),
            Granularity::PerEpoch
        );
        assert!("batch".parse::<Granularity>().is_err());
    }

    proptest! {
        #[test]
        fn affine_then_constant(
            b0 in 1e-4f64..50.0,
            b1 in 1e-4f64..50.0,
            t_warm in 1u64..10_000,
            t in 0u64..20_000,
        ) {
            let s = WarmupSchedule::new(b0, b1, t_warm, Granularity::PerIteration).unwrap();
            let beta = s.beta_at(t);
            prop_assert!(beta > 0.0);
            prop_assert!(beta >= b0.min(b1) - 1e-12 && beta <= b0.max(b1) + 1e-12);
            if t >= t_warm {
                prop_assert_eq!(beta, b1);
            } else if t + 1 < t_warm {
                // Equal increments on the ramp.
                let step = s.beta_at(t + 1) - beta;
                let want = (b1 - b0) / t_warm as f64;
                prop_assert!((step - want).abs() <= 1e-12 * (1.0 + b0.abs() + b1.abs()));
            }
        }
    }
}
