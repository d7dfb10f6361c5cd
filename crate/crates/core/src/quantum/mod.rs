//! Deterministic quantum-annealing EM.
//!
//! The E-step replaces the classic posterior by the path-integral chain
//! posterior at `(β, Γ, M)`; the M-step minimizes the bead-averaged expected
//! negative complete-data log likelihood `U`. Thermal annealing (DAEM) is the
//! `Γ = 0` special case.

mod anneal;
mod chain;

pub use anneal::{AnnealSchedule, AnnealState, Rule};
pub use chain::{
    annealed_e_step, bead_posterior, chain_mode_eigenvalues, tempered_posterior, BeadPosterior,
    ChainPosterior,
};

use crate::classic;
use crate::error::{Error, Result};
use crate::fit::{self, FitOptions, Posterior};
use crate::model::{Dataset, MfaParams};
use crate::mstep::{self, MStepOptions};
use crate::trace::FitTrace;
use crate::Scalar;

/// `F_{β,Γ}(θ)`. At `β = 1, Γ = 0` this is `−L(Y; θ)`.
pub fn free_energy<T: Scalar>(data: &Dataset<T>, params: &MfaParams<T>, anneal: &AnnealState<T>) -> Result<T> {
    Ok(annealed_e_step(data, params, anneal)?.free_energy())
}

/// `U(θ; θ′)` up to the `θ`-independent kinetic constant, with `post`
/// computed under `θ′`.
pub fn u_function<T: Scalar>(data: &Dataset<T>, post: &ChainPosterior<T>, candidate: &MfaParams<T>) -> Result<T> {
    mstep::expected_neg_complete_log_lik(data, post, candidate)
}

/// `argmin_θ U(θ; θ′)`.
pub fn m_step_quantum<T: Scalar>(
    data: &Dataset<T>,
    post: &ChainPosterior<T>,
    opts: &MStepOptions<T>,
) -> Result<MfaParams<T>> {
    Ok(mstep::maximize(data, post, opts)?.params)
}

/// Entropy diagnostic `S = β(U − F)` at the parameters `post` was computed
/// under. Inherits the dropped kinetic constant of [`u_function`].
pub fn entropy_diagnostic<T: Scalar>(data: &Dataset<T>, post: &ChainPosterior<T>, params: &MfaParams<T>) -> Result<T> {
    let u = u_function(data, post, params)?;
    Ok(post.anneal.beta * (u - post.free_energy()))
}

fn annealed_step<T: Scalar>(data: &Dataset<T>, params: &MfaParams<T>, state: &AnnealState<T>) -> Result<Posterior<T>> {
    if state.is_classic() {
        classic::e_step(data, params).map(Posterior::Classic)
    } else {
        annealed_e_step(data, params, state).map(Posterior::Chain)
    }
}

/// DQAEM: chain E-step and `U` minimization while the schedule moves, then
/// plain EM once it settles at `β = 1, Γ = 0` until the objective change
/// drops below `opts.tol`.
pub fn run_dqaem<T: Scalar>(
    data: &Dataset<T>,
    init: &MfaParams<T>,
    schedule: &AnnealSchedule<T>,
    beads: usize,
    opts: &FitOptions<T>,
) -> Result<FitTrace<T>> {
    fit::run(data, init, schedule, beads, opts, annealed_step)
}

/// DAEM: `Γ ≡ 0` with the schedule's `β` trajectory.
pub fn run_daem<T: Scalar>(
    data: &Dataset<T>,
    init: &MfaParams<T>,
    schedule: &AnnealSchedule<T>,
    opts: &FitOptions<T>,
) -> Result<FitTrace<T>> {
    if schedule.gamma_init != T::zero() {
        return Err(Error::InvalidAnneal("DAEM requires gamma_init = 0".into()));
    }
    fit::run(data, init, schedule, 1, opts, annealed_step)
}
