//! Iteration driver shared by EM, DAEM and DQAEM.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::classic::ClassicPosterior;
use crate::error::{Error, Result};
use crate::model::{Dataset, MfaParams};
use crate::mstep::{self, LatentMoments, MStepOptions};
use crate::quantum::{AnnealSchedule, AnnealState, ChainPosterior};
use crate::trace::{FitTrace, IterationRecord, Outcome};
use crate::Scalar;

/// Default absolute tolerance on the change of the objective.
pub const DEFAULT_TOL: f64 = 1e-7;
pub const DEFAULT_MAX_ITER: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions<T: Scalar> {
    /// Upper bound on the number of E-steps (trace records).
    pub max_iter: usize,
    pub tol: T,
    pub mstep: MStepOptions<T>,
    /// Record, for every step, the change of the objective of the anneal
    /// state that produced the update (one extra E-step when the state moves).
    pub audit: bool,
}

impl<T: Scalar> Default for FitOptions<T> {
    fn default() -> Self {
        Self {
            max_iter: DEFAULT_MAX_ITER,
            tol: T::lit(DEFAULT_TOL),
            mstep: MStepOptions::default(),
            audit: false,
        }
    }
}

impl<T: Scalar> FitOptions<T> {
    pub fn with_limits(max_iter: usize, tol: T) -> Self {
        Self {
            max_iter,
            tol,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::Precondition("max_iter must be >= 1".into()));
        }
        if !(self.tol > T::zero()) {
            return Err(Error::Precondition("tol must be > 0".into()));
        }
        Ok(())
    }
}

/// Either posterior flavour; both feed the same M-step.
#[derive(Debug, Clone)]
pub enum Posterior<T: Scalar> {
    Classic(ClassicPosterior<T>),
    Chain(ChainPosterior<T>),
}

impl<T: Scalar> Posterior<T> {
    /// The maximized objective: `L` on the classic branch, `-F` otherwise.
    pub fn objective(&self) -> T {
        match self {
            Posterior::Classic(p) => p.log_likelihood,
            Posterior::Chain(p) => -p.free_energy(),
        }
    }
}

impl<T: Scalar> LatentMoments<T> for Posterior<T> {
    fn n_points(&self) -> usize {
        match self {
            Posterior::Classic(p) => p.n_points(),
            Posterior::Chain(p) => p.n_points(),
        }
    }
    fn n_components(&self) -> usize {
        match self {
            Posterior::Classic(p) => p.n_components(),
            Posterior::Chain(p) => p.n_components(),
        }
    }
    fn responsibility(&self, i: usize, w: usize) -> T {
        match self {
            Posterior::Classic(p) => p.responsibility(i, w),
            Posterior::Chain(p) => p.responsibility(i, w),
        }
    }
    fn latent_mean(&self, i: usize, w: usize) -> &DVector<T> {
        match self {
            Posterior::Classic(p) => p.latent_mean(i, w),
            Posterior::Chain(p) => p.latent_mean(i, w),
        }
    }
    fn latent_second_moment(&self, i: usize, w: usize) -> &DMatrix<T> {
        match self {
            Posterior::Classic(p) => p.latent_second_moment(i, w),
            Posterior::Chain(p) => p.latent_second_moment(i, w),
        }
    }
}

fn same_state<T: Scalar>(a: &AnnealState<T>, b: &AnnealState<T>) -> bool {
    a.beta == b.beta && a.gamma == b.gamma && a.beads == b.beads
}

pub(crate) fn run<T, E>(
    data: &Dataset<T>,
    init: &MfaParams<T>,
    schedule: &AnnealSchedule<T>,
    beads: usize,
    opts: &FitOptions<T>,
    estep: E,
) -> Result<FitTrace<T>>
where
    T: Scalar,
    E: Fn(&Dataset<T>, &MfaParams<T>, &AnnealState<T>) -> Result<Posterior<T>>,
{
    opts.validate()?;
    schedule.validate()?;
    data.validate()?;
    init.validate()?;
    init.check_data(data)?;
    if beads == 0 {
        return Err(Error::Precondition("bead count must be >= 1".into()));
    }

    let mut params = init.clone();
    let mut records: Vec<IterationRecord<T>> = Vec::new();
    let mut warnings = Vec::new();
    let mut prev_state: Option<AnnealState<T>> = None;
    let mut t = 0usize;
    let outcome = loop {
        let state = schedule.state_at(t, beads);
        let start = Instant::now();
        let post = match estep(data, &params, &state) {
            Ok(p) => p,
            Err(e) => break Outcome::NumericalFailure(format!("E-step at iteration {t}: {e}")),
        };
        let objective = post.objective();
        if !objective.is_finite() {
            break Outcome::NumericalFailure(format!("non-finite objective at iteration {t}"));
        }
        let mut record = IterationRecord {
            iteration: t,
            objective,
            params: params.clone(),
            beta: state.beta,
            gamma: state.gamma,
            beads: state.beads,
            wall_ms: 0.0,
            audit_delta: None,
        };
        let converged = match (records.last(), &prev_state) {
            (Some(prev), Some(ps)) => {
                same_state(ps, &state)
                    && schedule.is_settled(t)
                    && (objective - prev.objective).abs() < opts.tol
            }
            _ => false,
        };
        if converged || t + 1 >= opts.max_iter {
            record.wall_ms = start.elapsed().as_secs_f64() * 1e3;
            records.push(record);
            break if converged {
                Outcome::Converged
            } else {
                Outcome::MaxIterations
            };
        }
        let next = match mstep::maximize(data, &post, &opts.mstep) {
            Ok(out) => {
                warnings.extend(out.warnings.into_iter().map(|w| format!("iteration {t}: {w}")));
                out.params
            }
            Err(e) => {
                record.wall_ms = start.elapsed().as_secs_f64() * 1e3;
                records.push(record);
                break Outcome::NumericalFailure(format!("M-step at iteration {t}: {e}"));
            }
        };
        record.wall_ms = start.elapsed().as_secs_f64() * 1e3;
        if opts.audit && !same_state(&state, &schedule.state_at(t + 1, beads)) {
            match estep(data, &next, &state) {
                Ok(p) => record.audit_delta = Some(p.objective() - objective),
                Err(e) => {
                    records.push(record);
                    break Outcome::NumericalFailure(format!("audit at iteration {t}: {e}"));
                }
            }
        }
        records.push(record);
        prev_state = Some(state);
        params = next;
        t += 1;
    };

    if opts.audit {
        for j in 1..records.len() {
            let (head, tail) = records.split_at_mut(j);
            let prev = &mut head[j - 1];
            let cur = &tail[0];
            if prev.audit_delta.is_none()
                && prev.beta == cur.beta
                && prev.gamma == cur.gamma
                && prev.beads == cur.beads
            {
                prev.audit_delta = Some(cur.objective - prev.objective);
            }
        }
    }

    let final_params = records.last().map_or_else(|| init.clone(), |r| r.params.clone());
    Ok(FitTrace {
        records,
        outcome,
        final_params,
        warnings,
    })
}
