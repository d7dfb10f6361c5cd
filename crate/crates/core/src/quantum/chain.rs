//! Exact Gaussian evaluation of the periodic bead chain.
//!
//! For component `w` the path weight of `M` beads is
//! `exp(Σ_j (β/M) log p(y, x_j | w) − (M / 2βΓ) Σ_j |x_j − x_{j−1}|²)`
//! with `x_0 = x_M`. The exponent is quadratic in the stacked beads with
//! precision `(β/M)(I_M ⊗ P_w) + (M/βΓ)(L ⊗ I_k)`, `L` the ring Laplacian.
//! Fourier modes diagonalize `L`, so the chain splits into `M` independent
//! `k × k` blocks `A_n = (β/M) P_w + (M λ_n / βΓ) I_k`. Only the zero mode
//! sees the data, which makes the bead mean `P_w⁻¹ b` independent of `Γ`
//! while the bead-averaged covariance becomes `(1/M) Σ_n A_n⁻¹`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::classic::FaKernel;
use crate::error::{Error, Result};
use crate::linalg::{self, cholesky};
use crate::model::{Dataset, MfaParams};
use crate::quantum::AnnealState;
use crate::Scalar;

/// Eigenvalues `2(1 − cos(2πn/M))`, `n = 0..M`, of the ring Laplacian
/// `Σ_j (x_j − x_{j−1})²`. Evaluated as `4 sin²(πn/M)`.
pub fn chain_mode_eigenvalues<T: Scalar>(beads: usize) -> Vec<T> {
    let m = T::from_usize_lossy(beads);
    (0..beads)
        .map(|n| {
            let s = (T::pi() * T::from_usize_lossy(n) / m).sin();
            T::lit(4.0) * s * s
        })
        .collect()
}

/// Chain posterior of one datum.
#[derive(Debug, Clone, PartialEq)]
pub struct BeadPosterior<T: Scalar> {
    /// `log Z_w` per component, including the `(M / 2πβΓ)^{Mk/2}` kinetic
    /// normalization and excluding the weight `π_w^β`.
    pub log_partition: Vec<T>,
    /// Common mean of every bead.
    pub bead_mean: Vec<DVector<T>>,
    /// `(1/M) Σ_j E[x_j x_jᵀ]`.
    pub bead_second_moment: Vec<DMatrix<T>>,
    /// Normalized `exp(β log π_w + log Z_w)`.
    pub responsibilities: DVector<T>,
    /// `log Σ_w exp(β log π_w + log Z_w)`.
    pub log_normalizer: T,
}

/// Datum-independent part of one component's chain.
pub(crate) struct ChainKernel<T: Scalar> {
    fa: FaKernel<T>,
    /// Everything in `log Z_w` that does not depend on the datum.
    offset: T,
    /// Bead-averaged latent covariance.
    fluctuation: DMatrix<T>,
}

impl<T: Scalar> ChainKernel<T> {
    pub(crate) fn new(params: &MfaParams<T>, w: usize, anneal: &AnnealState<T>) -> Result<Self> {
        let fa = FaKernel::new(params, w)?;
        let k = params.k();
        let kt = T::from_usize_lossy(k);
        let half = T::lit(0.5);
        let log_two_pi = T::two_pi().ln();
        let beta = anneal.beta;
        if anneal.gamma == T::zero() {
            // ∫ exp(β g(x)) dx for the tempered Gaussian.
            let offset = half * (kt * log_two_pi - kt * beta.ln() - fa.log_det_precision);
            let fluctuation = &fa.precision_inv / beta;
            return Ok(Self {
                fa,
                offset,
                fluctuation,
            });
        }
        let beads = anneal.beads;
        let mt = T::from_usize_lossy(beads);
        let gamma = anneal.gamma;
        let coupling = mt / (beta * gamma);
        let mut offset = half * mt * kt * (mt / (T::two_pi() * beta * gamma)).ln();
        let mut fluctuation = DMatrix::zeros(k, k);
        let scaled = &fa.precision * (beta / mt);
        for (n, lambda) in chain_mode_eigenvalues::<T>(beads).into_iter().enumerate() {
            let mut block = scaled.clone();
            for a in 0..k {
                block[(a, a)] += coupling * lambda;
            }
            let chol = cholesky(&block).ok_or(Error::ModeNotPositiveDefinite { component: w, mode: n })?;
            offset += half * (kt * log_two_pi - linalg::log_det(&chol));
            fluctuation += chol.inverse();
        }
        fluctuation /= mt;
        linalg::symmetrize(&mut fluctuation);
        Ok(Self {
            fa,
            offset,
            fluctuation,
        })
    }
}

/// All component kernels plus the shared noise factor.
pub(crate) struct ChainModel<'a, T: Scalar> {
    params: &'a MfaParams<T>,
    anneal: AnnealState<T>,
    kernels: Vec<ChainKernel<T>>,
    noise: Cholesky<T, Dyn>,
    /// `−½((d + k) log 2π + log|Φ|)`.
    base: T,
}

impl<'a, T: Scalar> ChainModel<'a, T> {
    pub(crate) fn new(params: &'a MfaParams<T>, anneal: &AnnealState<T>) -> Result<Self> {
        anneal.validate()?;
        let noise = cholesky(&params.noise_cov).ok_or(Error::NotPositiveDefinite {
            component: 0,
            what: "noise covariance",
        })?;
        let kernels = (0..params.m())
            .map(|w| ChainKernel::new(params, w, anneal))
            .collect::<Result<Vec<_>>>()?;
        let base = -T::lit(0.5)
            * (T::from_usize_lossy(params.d() + params.k()) * T::two_pi().ln() + linalg::log_det(&noise));
        Ok(Self {
            params,
            anneal: *anneal,
            kernels,
            noise,
            base,
        })
    }

    pub(crate) fn posterior(&self, y: &DVector<T>) -> Result<BeadPosterior<T>> {
        self.params.check_point(y)?;
        let m = self.params.m();
        let beta = self.anneal.beta;
        let half = T::lit(0.5);
        let mut log_partition = Vec::with_capacity(m);
        let mut bead_mean = Vec::with_capacity(m);
        let mut bead_second_moment = Vec::with_capacity(m);
        let mut scores = Vec::with_capacity(m);
        for (w, kernel) in self.kernels.iter().enumerate() {
            let resid = y - &self.params.means[w];
            let phi_inv_resid = self.noise.solve(&resid);
            let maha = resid.dot(&phi_inv_resid);
            let b = self.params.loadings[w].transpose() * &phi_inv_resid;
            let mean = &kernel.fa.precision_inv * &b;
            let lp = kernel.offset + beta * (self.base - half * maha + half * b.dot(&mean));
            let second = &kernel.fluctuation + &mean * mean.transpose();
            scores.push(beta * self.params.weights[w].ln() + lp);
            log_partition.push(lp);
            bead_mean.push(mean);
            bead_second_moment.push(second);
        }
        let log_normalizer = linalg::log_sum_exp(&scores);
        if !log_normalizer.is_finite() {
            return Err(Error::Numerical("non-finite chain partition function".into()));
        }
        let responsibilities = DVector::from_iterator(m, scores.iter().map(|&s| (s - log_normalizer).exp()));
        Ok(BeadPosterior {
            log_partition,
            bead_mean,
            bead_second_moment,
            responsibilities,
            log_normalizer,
        })
    }
}

/// Chain posterior of one datum at `Γ > 0`. The `Γ = 0` limit is singular in
/// the kinetic normalization and is served by [`tempered_posterior`].
pub fn bead_posterior<T: Scalar>(
    y: &DVector<T>,
    params: &MfaParams<T>,
    anneal: &AnnealState<T>,
) -> Result<BeadPosterior<T>> {
    if !(anneal.gamma > T::zero()) {
        return Err(Error::InvalidAnneal(
            "bead posterior needs gamma > 0; use the tempered posterior at gamma = 0".into(),
        ));
    }
    ChainModel::new(params, anneal)?.posterior(y)
}

/// `β`-tempered classic posterior of one datum (`Γ = 0`): responsibilities
/// `∝ π_w^β ∫ p(y, x | w)^β dx` and moments of the tempered Gaussian.
pub fn tempered_posterior<T: Scalar>(y: &DVector<T>, params: &MfaParams<T>, beta: T) -> Result<BeadPosterior<T>> {
    let anneal = AnnealState {
        beta,
        gamma: T::zero(),
        beads: 1,
        step: 0,
    };
    ChainModel::new(params, &anneal)?.posterior(y)
}

/// Chain posteriors for a whole dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainPosterior<T: Scalar> {
    pub points: Vec<BeadPosterior<T>>,
    pub anneal: AnnealState<T>,
}

impl<T: Scalar> ChainPosterior<T> {
    /// `F = −(1/β) Σ_i log Σ_w exp(β log π_w + log Z_iw)`.
    pub fn free_energy(&self) -> T {
        let mut acc = T::zero();
        for p in &self.points {
            acc += p.log_normalizer;
        }
        -acc / self.anneal.beta
    }
}

impl<T: Scalar> crate::mstep::LatentMoments<T> for ChainPosterior<T> {
    fn n_points(&self) -> usize {
        self.points.len()
    }
    fn n_components(&self) -> usize {
        self.points.first().map_or(0, |p| p.responsibilities.len())
    }
    fn responsibility(&self, i: usize, w: usize) -> T {
        self.points[i].responsibilities[w]
    }
    fn latent_mean(&self, i: usize, w: usize) -> &DVector<T> {
        &self.points[i].bead_mean[w]
    }
    fn latent_second_moment(&self, i: usize, w: usize) -> &DMatrix<T> {
        &self.points[i].bead_second_moment[w]
    }
}

/// E-step at an arbitrary anneal state; `Γ = 0` uses the tempered branch.
pub fn annealed_e_step<T: Scalar>(
    data: &Dataset<T>,
    params: &MfaParams<T>,
    anneal: &AnnealState<T>,
) -> Result<ChainPosterior<T>> {
    params.check_data(data)?;
    let model = ChainModel::new(params, anneal)?;
    let points = data
        .points
        .iter()
        .map(|y| model.posterior(y))
        .collect::<Result<Vec<_>>>()?;
    Ok(ChainPosterior {
        points,
        anneal: *anneal,
    })
}
