//! Closed-form maximization shared by classic EM and the bead-chain engine.
//!
//! Both posteriors expose per-(datum, component) responsibilities and the
//! first two latent moments; the M-step only ever sees those, so the quantum
//! update is the classic algebra with bead-averaged moments plugged in.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, cholesky};
use crate::model::{Dataset, MfaParams};
use crate::Scalar;

/// Eigenvalue floor applied to `Φ`.
pub const NOISE_FLOOR: f64 = 1e-6;

/// Posterior summaries consumed by the M-step and by the expected
/// complete-data objective.
pub trait LatentMoments<T: Scalar> {
    fn n_points(&self) -> usize;
    fn n_components(&self) -> usize;
    fn responsibility(&self, i: usize, w: usize) -> T;
    /// `E[x | y^(i), w]`.
    fn latent_mean(&self, i: usize, w: usize) -> &DVector<T>;
    /// `E[x xᵀ | y^(i), w]` (bead-averaged for chain posteriors).
    fn latent_second_moment(&self, i: usize, w: usize) -> &DMatrix<T>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MStepOptions<T: Scalar> {
    /// Restrict `Φ` to its diagonal.
    pub diagonal_noise: bool,
    pub noise_floor: T,
}

impl<T: Scalar> Default for MStepOptions<T> {
    fn default() -> Self {
        Self {
            diagonal_noise: true,
            noise_floor: T::lit(NOISE_FLOOR),
        }
    }
}

/// Parameters plus any regularization notes raised while solving.
#[derive(Debug, Clone)]
pub struct MStepOutput<T: Scalar> {
    pub params: MfaParams<T>,
    pub warnings: Vec<String>,
}

pub(crate) fn check_moments<T: Scalar, P: LatentMoments<T> + ?Sized>(
    data: &Dataset<T>,
    post: &P,
) -> Result<()> {
    if post.n_points() != data.len() {
        return Err(Error::DimensionMismatch {
            what: "posterior rows",
            expected: data.len(),
            got: post.n_points(),
        });
    }
    if post.n_components() == 0 {
        return Err(Error::InvalidParams("posterior has no components".into()));
    }
    Ok(())
}

/// Maximize the expected complete-data log likelihood.
///
/// `[Λ_w μ_w]` solves the responsibility-weighted normal equations over the
/// augmented latent `[x; 1]`; `Φ` is the expected residual second moment at
/// that solution, optionally projected to its diagonal, then floored.
pub fn maximize<T: Scalar, P: LatentMoments<T> + ?Sized>(
    data: &Dataset<T>,
    post: &P,
    opts: &MStepOptions<T>,
) -> Result<MStepOutput<T>> {
    check_moments(data, post)?;
    let n = data.len();
    let m = post.n_components();
    let d = data.dim();
    let k = post.latent_mean(0, 0).len();
    let ka = k + 1;
    let mut warnings = Vec::new();

    let mut weights = DVector::zeros(m);
    let mut means = Vec::with_capacity(m);
    let mut loadings = Vec::with_capacity(m);
    let mut residual = DMatrix::<T>::zeros(d, d);

    for w in 0..m {
        let mut mass = T::zero();
        let mut cross = DMatrix::<T>::zeros(d, ka);
        let mut normal = DMatrix::<T>::zeros(ka, ka);
        let mut syy = DMatrix::<T>::zeros(d, d);
        for (i, y) in data.points.iter().enumerate() {
            let r = post.responsibility(i, w);
            if r == T::zero() {
                continue;
            }
            mass += r;
            let mean = post.latent_mean(i, w);
            let second = post.latent_second_moment(i, w);
            for a in 0..d {
                let ry = r * y[a];
                for b in 0..k {
                    cross[(a, b)] += ry * mean[b];
                }
                cross[(a, k)] += ry;
                for b in 0..d {
                    syy[(a, b)] += ry * y[b];
                }
            }
            for a in 0..k {
                for b in 0..k {
                    normal[(a, b)] += r * second[(a, b)];
                }
                normal[(a, k)] += r * mean[a];
                normal[(k, a)] += r * mean[a];
            }
            normal[(k, k)] += r;
        }
        if !(mass > T::zero()) {
            return Err(Error::Numerical(format!(
                "component {w} received zero total responsibility"
            )));
        }
        weights[w] = mass / T::from_usize_lossy(n);
        linalg::symmetrize(&mut normal);

        let augmented = match cholesky(&normal) {
            Some(chol) => chol.solve(&cross.transpose()).transpose(),
            None => {
                let scale = normal.trace() / T::from_usize_lossy(ka) + T::one();
                let ridge = scale * T::lit(1e-8);
                warnings.push(format!(
                    "component {w}: rank-deficient normal equations, ridge {ridge} applied"
                ));
                let reg = &normal + DMatrix::identity(ka, ka) * ridge;
                let chol = cholesky(&reg).ok_or_else(|| {
                    Error::Numerical(format!("component {w}: regularized normal equations singular"))
                })?;
                chol.solve(&cross.transpose()).transpose()
            }
        };
        // E[(y - Λ̃x̃)(y - Λ̃x̃)ᵀ] summed with responsibilities.
        let lc = &augmented * cross.transpose();
        residual += syy - &lc - lc.transpose() + &augmented * &normal * augmented.transpose();
        loadings.push(augmented.columns(0, k).into_owned());
        means.push(augmented.column(k).into_owned());
    }

    residual /= T::from_usize_lossy(n);
    linalg::symmetrize(&mut residual);
    let noise_cov = if opts.diagonal_noise {
        DMatrix::from_diagonal(&residual.diagonal().map(|v| if v < opts.noise_floor {
            opts.noise_floor
        } else {
            v
        }))
    } else {
        linalg::floor_eigenvalues(&residual, opts.noise_floor)
    };

    // Renormalize away rounding so the weight-sum invariant holds tightly.
    let total = weights.sum();
    weights /= total;

    let params = MfaParams {
        weights,
        means,
        loadings,
        noise_cov,
    };
    params
        .validate()
        .map_err(|e| Error::Numerical(format!("M-step produced invalid parameters: {e}")))?;
    Ok(MStepOutput { params, warnings })
}

/// `Σ_i Σ_w r_iw E[-log p(y^(i), x, w; θ)]` under the given posterior
/// moments, evaluated at `candidate`. With a classic posterior this is `-Q`.
pub fn expected_neg_complete_log_lik<T: Scalar, P: LatentMoments<T> + ?Sized>(
    data: &Dataset<T>,
    post: &P,
    candidate: &MfaParams<T>,
) -> Result<T> {
    check_moments(data, post)?;
    candidate.check_data(data)?;
    if post.n_components() != candidate.m() {
        return Err(Error::DimensionMismatch {
            what: "candidate component count",
            expected: post.n_components(),
            got: candidate.m(),
        });
    }
    let k = candidate.k();
    if post.latent_mean(0, 0).len() != k {
        return Err(Error::DimensionMismatch {
            what: "latent dimension",
            expected: post.latent_mean(0, 0).len(),
            got: k,
        });
    }
    let d = candidate.d();
    let chol = cholesky(&candidate.noise_cov).ok_or(Error::NotPositiveDefinite {
        component: 0,
        what: "noise covariance",
    })?;
    let half = T::lit(0.5);
    let log_two_pi = T::two_pi().ln();
    let gauss_const = (T::from_usize_lossy(d + k) * log_two_pi + linalg::log_det(&chol)) * half;

    let mut total = T::zero();
    for w in 0..candidate.m() {
        let lambda = &candidate.loadings[w];
        let phi_inv_lambda = chol.solve(lambda);
        let quad = lambda.transpose() * &phi_inv_lambda;
        let log_pi = candidate.weights[w].ln();
        for (i, y) in data.points.iter().enumerate() {
            let r = post.responsibility(i, w);
            if r == T::zero() {
                continue;
            }
            let mean = post.latent_mean(i, w);
            let second = post.latent_second_moment(i, w);
            let resid = y - &candidate.means[w];
            let maha = resid.dot(&chol.solve(&resid));
            let cross = resid.dot(&(&phi_inv_lambda * mean));
            let trace_quad = quad.component_mul(second).sum();
            let energy = -log_pi
                + gauss_const
                + half * (maha - cross - cross + trace_quad + second.trace());
            total += r * energy;
        }
    }
    Ok(total)
}
