//! Inverse temperature / quantum strength schedules.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Scalar;

/// `(β, Γ, M)` in force at one iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnealState<T: Scalar> {
    pub beta: T,
    /// `Γ = ħ²/μ`; zero selects the classic (tempered) branch.
    pub gamma: T,
    pub beads: usize,
    pub step: usize,
}

impl<T: Scalar> AnnealState<T> {
    pub fn new(beta: T, gamma: T, beads: usize) -> Result<Self> {
        let s = Self {
            beta,
            gamma,
            beads,
            step: 0,
        };
        s.validate()?;
        Ok(s)
    }

    /// `β = 1, Γ = 0`.
    pub fn classic() -> Self {
        Self {
            beta: T::one(),
            gamma: T::zero(),
            beads: 1,
            step: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > T::zero() && self.beta <= T::one()) {
            return Err(Error::InvalidAnneal(format!("beta = {} outside (0, 1]", self.beta)));
        }
        if !(self.gamma >= T::zero()) || !self.gamma.is_finite() {
            return Err(Error::InvalidAnneal(format!("gamma = {} must be finite and >= 0", self.gamma)));
        }
        if self.beads == 0 {
            return Err(Error::InvalidAnneal("bead count must be >= 1".into()));
        }
        Ok(())
    }

    pub fn is_classic(&self) -> bool {
        self.gamma == T::zero() && self.beta == T::one()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    /// Move linearly to the classic end value (`Γ → 0`, `β → 1`) over
    /// `total_steps` iterations.
    Linear,
    /// Hold the initial value forever.
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnealSchedule<T: Scalar> {
    pub gamma_init: T,
    pub beta_init: T,
    pub total_steps: usize,
    pub gamma_rule: Rule,
    pub beta_rule: Rule,
}

impl<T: Scalar> Default for AnnealSchedule<T> {
    /// `Γ` from 1 to 0 over 200 iterations with `β ≡ 1`.
    fn default() -> Self {
        Self {
            gamma_init: T::one(),
            beta_init: T::one(),
            total_steps: 200,
            gamma_rule: Rule::Linear,
            beta_rule: Rule::Constant,
        }
    }
}

impl<T: Scalar> AnnealSchedule<T> {
    /// Quantum anneal with `β ≡ 1`.
    pub fn linear_gamma(gamma_init: T, total_steps: usize) -> Self {
        Self {
            gamma_init,
            total_steps,
            ..Self::default()
        }
    }

    /// Thermal anneal with `Γ ≡ 0`.
    pub fn linear_beta(beta_init: T, total_steps: usize) -> Self {
        Self {
            gamma_init: T::zero(),
            beta_init,
            total_steps,
            gamma_rule: Rule::Constant,
            beta_rule: Rule::Linear,
        }
    }

    /// A schedule that never moves.
    pub fn frozen(beta: T, gamma: T) -> Self {
        Self {
            gamma_init: gamma,
            beta_init: beta,
            total_steps: 0,
            gamma_rule: Rule::Constant,
            beta_rule: Rule::Constant,
        }
    }

    pub fn classic() -> Self {
        Self::frozen(T::one(), T::zero())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta_init > T::zero() && self.beta_init <= T::one()) {
            return Err(Error::InvalidAnneal(format!(
                "beta_init = {} outside (0, 1]",
                self.beta_init
            )));
        }
        if !(self.gamma_init >= T::zero()) || !self.gamma_init.is_finite() {
            return Err(Error::InvalidAnneal(format!(
                "gamma_init = {} must be finite and >= 0",
                self.gamma_init
            )));
        }
        Ok(())
    }

    fn fraction_left(&self, t: usize) -> T {
        if t >= self.total_steps {
            T::zero()
        } else {
            T::one() - T::from_usize_lossy(t) / T::from_usize_lossy(self.total_steps)
        }
    }

    pub fn gamma_at(&self, t: usize) -> T {
        match self.gamma_rule {
            Rule::Constant => self.gamma_init,
            Rule::Linear if t >= self.total_steps => T::zero(),
            Rule::Linear => self.gamma_init * self.fraction_left(t),
        }
    }

    pub fn beta_at(&self, t: usize) -> T {
        match self.beta_rule {
            Rule::Constant => self.beta_init,
            Rule::Linear if t >= self.total_steps => T::one(),
            Rule::Linear => self.beta_init + (T::one() - self.beta_init) * (T::one() - self.fraction_left(t)),
        }
    }

    /// State at iteration `t`. The bead count collapses to 1 on the `Γ = 0`
    /// branch, where no chain is formed.
    pub fn state_at(&self, t: usize, beads: usize) -> AnnealState<T> {
        let gamma = self.gamma_at(t);
        AnnealState {
            beta: self.beta_at(t),
            gamma,
            beads: if gamma == T::zero() { 1 } else { beads },
            step: t,
        }
    }

    /// True when the state no longer changes from iteration `t` on.
    pub fn is_settled(&self, t: usize) -> bool {
        t >= self.total_steps
            || (self.gamma_rule == Rule::Constant && self.beta_rule == Rule::Constant)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_gamma_hits_zero_exactly() {
        let s = AnnealSchedule::<f64>::linear_gamma(1.0, 200);
        assert_eq!(s.gamma_at(0), 1.0);
        assert!((s.gamma_at(100) - 0.5).abs() < 1e-15);
        assert_eq!(s.gamma_at(200), 0.0);
        assert_eq!(s.gamma_at(5000), 0.0);
        assert_eq!(s.beta_at(17), 1.0);
        assert!(!s.is_settled(199));
        assert!(s.is_settled(200));
        assert_eq!(s.state_at(200, 128).beads, 1);
        assert_eq!(s.state_at(3, 128).beads, 128);
    }

    #[test]
    fn linear_beta_hits_one_exactly() {
        let s = AnnealSchedule::<f64>::linear_beta(0.2, 10);
        assert_eq!(s.beta_at(0), 0.2);
        assert_eq!(s.beta_at(10), 1.0);
        assert!(s.beta_at(5) > 0.2 && s.beta_at(5) < 1.0);
        assert_eq!(s.gamma_at(3), 0.0);
    }

    #[test]
    fn frozen_is_always_settled() {
        let s = AnnealSchedule::<f64>::frozen(0.5, 0.1);
        assert!(s.is_settled(0));
        assert_eq!(s.state_at(99, 8), AnnealState { beta: 0.5, gamma: 0.1, beads: 8, step: 99 });
    }

    #[test]
    fn invalid_settings_rejected() {
        assert!(AnnealSchedule::<f64>::frozen(0.0, 1.0).validate().is_err());
        assert!(AnnealSchedule::<f64>::frozen(1.5, 1.0).validate().is_err());
        assert!(AnnealSchedule::<f64>::frozen(1.0, -1.0).validate().is_err());
        assert!(AnnealState::<f64>::new(1.0, 1.0, 0).is_err());
        assert!(AnnealState::<f64>::new(1.0, 0.0, 1).unwrap().is_classic());
    }
}
