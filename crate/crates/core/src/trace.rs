//! Per-iteration fit records.

use crate::model::MfaParams;
use crate::Scalar;

/// How a fit ended.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Converged,
    MaxIterations,
    NumericalFailure(String),
}

impl Outcome {
    pub fn label(&self) -> &'static str {
        match self {
            Outcome::Converged => "converged",
            Outcome::MaxIterations => "max-iterations",
            Outcome::NumericalFailure(_) => "numerical-failure",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord<T: Scalar> {
    pub iteration: usize,
    /// Log likelihood (classic branch) or negative free energy at the
    /// anneal state in force, evaluated at `params`.
    pub objective: T,
    pub params: MfaParams<T>,
    pub beta: T,
    pub gamma: T,
    pub beads: usize,
    pub wall_ms: f64,
    /// Change in the objective of this iteration's anneal state produced by
    /// the M-step that follows it. Only filled when auditing.
    pub audit_delta: Option<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitTrace<T: Scalar> {
    pub records: Vec<IterationRecord<T>>,
    pub outcome: Outcome,
    /// Last parameters that passed through an E-step.
    pub final_params: MfaParams<T>,
    pub warnings: Vec<String>,
}

impl<T: Scalar> FitTrace<T> {
    pub fn objectives(&self) -> Vec<T> {
        self.records.iter().map(|r| r.objective).collect()
    }

    pub fn final_objective(&self) -> Option<T> {
        self.records.last().map(|r| r.objective)
    }

    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    /// Consecutive objective differences between records that share an
    /// anneal state. A negative entry is a decrease of a maximized objective.
    pub fn same_state_deltas(&self) -> Vec<(usize, T)> {
        self.records
            .windows(2)
            .filter(|p| p[0].beta == p[1].beta && p[0].gamma == p[1].gamma && p[0].beads == p[1].beads)
            .map(|p| (p[0].iteration, p[1].objective - p[0].objective))
            .collect()
    }

    /// Largest decrease (as a positive number) of the maximized objective
    /// over same-state steps and audited steps; zero when monotone.
    pub fn worst_decrease(&self) -> T {
        let mut worst = T::zero();
        for (_, d) in self.same_state_deltas() {
            if -d > worst {
                worst = -d;
            }
        }
        for r in &self.records {
            if let Some(d) = r.audit_delta {
                if -d > worst {
                    worst = -d;
                }
            }
        }
        worst
    }
}
