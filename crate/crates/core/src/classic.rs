//! Classic EM for mixtures of factor analyzers.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::fit::{self, FitOptions, Posterior};
use crate::linalg::{self, cholesky};
use crate::model::{Dataset, MfaParams};
use crate::mstep::{self, LatentMoments, MStepOptions};
use crate::quantum::AnnealSchedule;
use crate::trace::FitTrace;
use crate::Scalar;

/// Exact posterior `p(x, w | y; θ)` for every datum.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicPosterior<T: Scalar> {
    /// `N × m`, rows sum to one.
    pub responsibilities: DMatrix<T>,
    /// `E[x | y^(i), w]`, indexed `i * m + w`.
    pub latent_mean: Vec<DVector<T>>,
    /// `E[x xᵀ | y^(i), w]`, indexed `i * m + w`.
    pub latent_second_moment: Vec<DMatrix<T>>,
    /// `L(Y; θ)` at the parameters the posterior was computed under.
    pub log_likelihood: T,
}

impl<T: Scalar> LatentMoments<T> for ClassicPosterior<T> {
    fn n_points(&self) -> usize {
        self.responsibilities.nrows()
    }
    fn n_components(&self) -> usize {
        self.responsibilities.ncols()
    }
    fn responsibility(&self, i: usize, w: usize) -> T {
        self.responsibilities[(i, w)]
    }
    fn latent_mean(&self, i: usize, w: usize) -> &DVector<T> {
        &self.latent_mean[i * self.n_components() + w]
    }
    fn latent_second_moment(&self, i: usize, w: usize) -> &DMatrix<T> {
        &self.latent_second_moment[i * self.n_components() + w]
    }
}

/// Factor-analysis posterior quantities of one component that do not depend
/// on the datum.
pub(crate) struct FaKernel<T: Scalar> {
    /// `P = I + ΛᵀΦ⁻¹Λ`.
    pub precision: DMatrix<T>,
    pub precision_inv: DMatrix<T>,
    pub log_det_precision: T,
    /// `P⁻¹ΛᵀΦ⁻¹`, maps a centred observation to the latent mean.
    pub gain: DMatrix<T>,
}

impl<T: Scalar> FaKernel<T> {
    pub(crate) fn new(params: &MfaParams<T>, w: usize) -> Result<Self> {
        let phi = cholesky(&params.noise_cov).ok_or(Error::NotPositiveDefinite {
            component: w,
            what: "noise covariance",
        })?;
        let lambda = &params.loadings[w];
        let k = lambda.ncols();
        let phi_inv_lambda = phi.solve(lambda);
        let mut precision = DMatrix::identity(k, k) + lambda.transpose() * &phi_inv_lambda;
        linalg::symmetrize(&mut precision);
        let chol = cholesky(&precision).ok_or(Error::NotPositiveDefinite {
            component: w,
            what: "latent precision",
        })?;
        let mut precision_inv = chol.inverse();
        linalg::symmetrize(&mut precision_inv);
        let gain = chol.solve(&phi_inv_lambda.transpose());
        Ok(Self {
            log_det_precision: linalg::log_det(&chol),
            precision,
            precision_inv,
            gain,
        })
    }
}

/// E-step: responsibilities from the marginal Gaussians, latent moments from
/// the factor-analysis posterior `N(P⁻¹ΛᵀΦ⁻¹(y − μ), P⁻¹)`.
pub fn e_step<T: Scalar>(data: &Dataset<T>, params: &MfaParams<T>) -> Result<ClassicPosterior<T>> {
    params.check_data(data)?;
    let m = params.m();
    let n = data.len();
    let kernels = (0..m).map(|w| FaKernel::new(params, w)).collect::<Result<Vec<_>>>()?;
    let marginals = (0..m)
        .map(|w| {
            cholesky(&params.marginal_cov(w)).ok_or(Error::NotPositiveDefinite {
                component: w,
                what: "marginal covariance",
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let log_w: Vec<T> = params.weights.iter().map(|p| p.ln()).collect();

    let mut responsibilities = DMatrix::zeros(n, m);
    let mut latent_mean = Vec::with_capacity(n * m);
    let mut latent_second_moment = Vec::with_capacity(n * m);
    let mut log_likelihood = T::zero();
    let mut terms = vec![T::zero(); m];
    for (i, y) in data.points.iter().enumerate() {
        for w in 0..m {
            terms[w] = log_w[w] + linalg::gaussian_log_pdf(y, &params.means[w], &marginals[w]);
        }
        let norm = linalg::log_sum_exp(&terms);
        if !norm.is_finite() {
            return Err(Error::Numerical(format!("datum {i} has non-finite likelihood")));
        }
        log_likelihood += norm;
        for w in 0..m {
            responsibilities[(i, w)] = (terms[w] - norm).exp();
            let mean = &kernels[w].gain * (y - &params.means[w]);
            let second = &kernels[w].precision_inv + &mean * mean.transpose();
            latent_mean.push(mean);
            latent_second_moment.push(second);
        }
    }
    Ok(ClassicPosterior {
        responsibilities,
        latent_mean,
        latent_second_moment,
        log_likelihood,
    })
}

/// M-step: the joint stationary point of `Q(·; θ′)`.
pub fn m_step<T: Scalar>(
    data: &Dataset<T>,
    post: &ClassicPosterior<T>,
    opts: &MStepOptions<T>,
) -> Result<MfaParams<T>> {
    Ok(mstep::maximize(data, post, opts)?.params)
}

/// `Q(θ; θ′)` for the posterior computed under `θ′`.
pub fn q_function<T: Scalar>(
    data: &Dataset<T>,
    post: &ClassicPosterior<T>,
    candidate: &MfaParams<T>,
) -> Result<T> {
    Ok(-mstep::expected_neg_complete_log_lik(data, post, candidate)?)
}

/// Alternate E and M steps until the log likelihood changes by less than
/// `opts.tol` or `opts.max_iter` E-steps have run.
pub fn run_em<T: Scalar>(
    data: &Dataset<T>,
    init: &MfaParams<T>,
    opts: &FitOptions<T>,
) -> Result<FitTrace<T>> {
    let schedule = AnnealSchedule::classic();
    fit::run(data, init, &schedule, 1, opts, |data, params, _| {
        e_step(data, params).map(Posterior::Classic)
    })
}

/// Standard deviation of the initial loading entries.
pub const INIT_LOADING_STD: f64 = 0.316_227_766_016_837_94;

/// Seeded random starting point: means uniform in the data bounding box,
/// loading entries `N(0, 0.1)` (variance 0.1), `Φ` the diagonal sample covariance,
/// equal weights.
pub fn random_init<T: Scalar>(data: &Dataset<T>, m: usize, k: usize, seed: u64) -> Result<MfaParams<T>> {
    data.validate()?;
    if m == 0 || k == 0 {
        return Err(Error::Precondition("m and k must be >= 1".into()));
    }
    let d = data.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = data.bounding_box();
    let means = (0..m)
        .map(|_| {
            DVector::from_fn(d, |j, _| {
                let u: f64 = rng.random();
                lo[j] + (hi[j] - lo[j]) * T::lit(u)
            })
        })
        .collect();
    let loadings = (0..m)
        .map(|_| DMatrix::from_fn(d, k, |_, _| T::lit(INIT_LOADING_STD * rng.sample::<f64, _>(StandardNormal))))
        .collect();
    let (_, var) = data.moments();
    let floor = T::lit(mstep::NOISE_FLOOR);
    let noise_cov = DMatrix::from_diagonal(&var.map(|v| if v < floor { floor } else { v }));
    let weights = DVector::from_element(m, T::one() / T::from_usize_lossy(m));
    MfaParams::new(weights, means, loadings, noise_cov)
}
