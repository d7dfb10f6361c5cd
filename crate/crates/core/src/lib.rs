//! Deterministic quantum-annealing EM (DQAEM) for mixtures of factor
//! analyzers, with classic EM and thermal annealing (DAEM) baselines, a
//! brute-force quadrature oracle and an experiment harness.
//!
//! Numerical code is generic over [`Scalar`]; the `*64` aliases below fix it
//! to `f64`, which is what the file formats and the harness use.

pub mod classic;
pub mod error;
pub mod fit;
pub mod harness;
pub mod io;
mod linalg;
pub mod model;
pub mod mstep;
pub mod oracle;
pub mod quantum;
mod scalar;
pub mod trace;

pub use classic::{e_step, m_step, q_function, random_init, run_em, ClassicPosterior};
pub use error::{Error, Result};
pub use fit::{FitOptions, Posterior};
pub use linalg::log_sum_exp;
pub use model::{
    complete_log_pdf, incomplete_log_likelihood, point_log_likelihoods, sample_dataset, Dataset, LatentPoint, MfaParams, Truth,
};
pub use mstep::{LatentMoments, MStepOptions};
pub use quantum::{
    annealed_e_step, bead_posterior, chain_mode_eigenvalues, free_energy, m_step_quantum, run_daem, run_dqaem,
    tempered_posterior, u_function, AnnealSchedule, AnnealState, BeadPosterior, ChainPosterior,
};
pub use scalar::Scalar;
pub use trace::{FitTrace, IterationRecord, Outcome};

pub type MfaParams64 = MfaParams<f64>;
pub type Dataset64 = Dataset<f64>;
pub type AnnealState64 = AnnealState<f64>;
pub type AnnealSchedule64 = AnnealSchedule<f64>;
pub type FitTrace64 = FitTrace<f64>;
pub type FitOptions64 = FitOptions<f64>;
pub type ClassicPosterior64 = ClassicPosterior<f64>;
pub type ChainPosterior64 = ChainPosterior<f64>;
pub type BeadPosterior64 = BeadPosterior<f64>;

pub type MfaParams32 = MfaParams<f32>;
pub type Dataset32 = Dataset<f32>;
