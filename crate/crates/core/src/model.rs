//! Mixture-of-factor-analyzers model: parameters, densities and sampling.
//!
//! A datum is generated by picking a component `w` with probability `π_w`,
//! drawing a latent factor `x ~ N(0, I_k)` and emitting
//! `y ~ N(μ_w + Λ_w x, Φ)`. A Gaussian mixture is the special case `k = d`
//! with free loadings.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{self, cholesky};
use crate::Scalar;

/// Tolerance on `Σ π_w = 1`.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Parameter set `θ = {π_w, μ_w, Λ_w, Φ}`.
#[derive(Debug, Clone, PartialEq)]
pub struct MfaParams<T: Scalar> {
    pub weights: DVector<T>,
    pub means: Vec<DVector<T>>,
    /// One `d × k` loading matrix per component.
    pub loadings: Vec<DMatrix<T>>,
    /// Shared `d × d` noise covariance.
    pub noise_cov: DMatrix<T>,
}

impl<T: Scalar> MfaParams<T> {
    pub fn new(
        weights: DVector<T>,
        means: Vec<DVector<T>>,
        loadings: Vec<DMatrix<T>>,
        noise_cov: DMatrix<T>,
    ) -> Result<Self> {
        let p = Self {
            weights,
            means,
            loadings,
            noise_cov,
        };
        p.validate()?;
        Ok(p)
    }

    /// Component count.
    pub fn m(&self) -> usize {
        self.weights.len()
    }

    /// Latent dimension.
    pub fn k(&self) -> usize {
        self.loadings.first().map_or(0, |l| l.ncols())
    }

    /// Observed dimension.
    pub fn d(&self) -> usize {
        self.noise_cov.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.m();
        let d = self.d();
        let k = self.k();
        if m == 0 {
            return Err(Error::InvalidParams("component count must be >= 1".into()));
        }
        if d == 0 || k == 0 {
            return Err(Error::InvalidParams(format!(
                "dimensions must be >= 1 (d = {d}, k = {k})"
            )));
        }
        if self.means.len() != m {
            return Err(Error::DimensionMismatch {
                what: "number of means",
                expected: m,
                got: self.means.len(),
            });
        }
        if self.loadings.len() != m {
            return Err(Error::DimensionMismatch {
                what: "number of loading matrices",
                expected: m,
                got: self.loadings.len(),
            });
        }
        if self.noise_cov.ncols() != d {
            return Err(Error::DimensionMismatch {
                what: "noise covariance columns",
                expected: d,
                got: self.noise_cov.ncols(),
            });
        }
        for (w, mu) in self.means.iter().enumerate() {
            if mu.len() != d {
                return Err(Error::InvalidParams(format!(
                    "mean {w} has length {}, expected {d}",
                    mu.len()
                )));
            }
        }
        for (w, l) in self.loadings.iter().enumerate() {
            if l.nrows() != d || l.ncols() != k {
                return Err(Error::InvalidParams(format!(
                    "loading {w} is {}x{}, expected {d}x{k}",
                    l.nrows(),
                    l.ncols()
                )));
            }
        }
        let finite = linalg::all_finite(self.weights.iter().copied())
            && self.means.iter().all(|v| linalg::all_finite(v.iter().copied()))
            && self.loadings.iter().all(|l| linalg::all_finite(l.iter().copied()))
            && linalg::all_finite(self.noise_cov.iter().copied());
        if !finite {
            return Err(Error::InvalidParams("non-finite entry".into()));
        }
        if self.weights.iter().any(|&p| p <= T::zero()) {
            return Err(Error::InvalidParams("weights must be > 0".into()));
        }
        let sum = self.weights.sum();
        let tol = T::lit(WEIGHT_SUM_TOL).max(T::default_epsilon() * T::lit(16.0));
        if (sum - T::one()).abs() > tol {
            return Err(Error::InvalidParams(format!("weights sum to {sum}, not 1")));
        }
        for i in 0..d {
            for j in (i + 1)..d {
                if self.noise_cov[(i, j)] != self.noise_cov[(j, i)] {
                    return Err(Error::InvalidParams("noise covariance not symmetric".into()));
                }
            }
        }
        if cholesky(&self.noise_cov).is_none() {
            return Err(Error::InvalidParams(
                "noise covariance not positive definite".into(),
            ));
        }
        Ok(())
    }

    /// True when every off-diagonal entry of `Φ` is exactly zero.
    pub fn has_diagonal_noise(&self) -> bool {
        let d = self.d();
        (0..d).all(|i| (0..d).all(|j| i == j || self.noise_cov[(i, j)] == T::zero()))
    }

    /// Marginal covariance `Λ_w Λ_wᵀ + Φ` of component `w`.
    pub fn marginal_cov(&self, w: usize) -> DMatrix<T> {
        let l = &self.loadings[w];
        let mut c = l * l.transpose() + &self.noise_cov;
        linalg::symmetrize(&mut c);
        c
    }

    /// Returns a copy with components reordered so that new component `j`
    /// is old component `perm[j]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            weights: DVector::from_iterator(perm.len(), perm.iter().map(|&p| self.weights[p])),
            means: perm.iter().map(|&p| self.means[p].clone()).collect(),
            loadings: perm.iter().map(|&p| self.loadings[p].clone()).collect(),
            noise_cov: self.noise_cov.clone(),
        }
    }

    /// Largest absolute entrywise difference across all parameter blocks.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        let mut best = T::zero();
        let mut upd = |a: T, b: T| {
            let v = (a - b).abs();
            if v > best {
                best = v;
            }
        };
        for (a, b) in self.weights.iter().zip(other.weights.iter()) {
            upd(*a, *b);
        }
        for (ma, mb) in self.means.iter().zip(&other.means) {
            for (a, b) in ma.iter().zip(mb.iter()) {
                upd(*a, *b);
            }
        }
        for (la, lb) in self.loadings.iter().zip(&other.loadings) {
            for (a, b) in la.iter().zip(lb.iter()) {
                upd(*a, *b);
            }
        }
        for (a, b) in self.noise_cov.iter().zip(other.noise_cov.iter()) {
            upd(*a, *b);
        }
        best
    }

    pub(crate) fn check_point(&self, y: &DVector<T>) -> Result<()> {
        if y.len() != self.d() {
            return Err(Error::DimensionMismatch {
                what: "observed point",
                expected: self.d(),
                got: y.len(),
            });
        }
        Ok(())
    }

    pub(crate) fn check_data(&self, data: &Dataset<T>) -> Result<()> {
        if data.dim() != self.d() {
            return Err(Error::DimensionMismatch {
                what: "dataset dimension",
                expected: self.d(),
                got: data.dim(),
            });
        }
        Ok(())
    }
}

/// Latent state of one generated point.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentPoint<T: Scalar> {
    pub x: DVector<T>,
    /// Zero-based component index.
    pub w: usize,
}

/// Generating parameters and labels kept alongside sampled data.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth<T: Scalar> {
    pub params: MfaParams<T>,
    /// Zero-based component label per point (files store them one-based).
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T: Scalar> {
    pub points: Vec<DVector<T>>,
    pub truth: Option<Truth<T>>,
    pub seed: Option<u64>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(points: Vec<DVector<T>>) -> Result<Self> {
        let ds = Self {
            points,
            truth: None,
            seed: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, |p| p.len())
    }

    pub fn validate(&self) -> Result<()> {
        let Some(first) = self.points.first() else {
            return Err(Error::InvalidData("dataset must hold at least one point".into()));
        };
        let d = first.len();
        if d == 0 {
            return Err(Error::InvalidData("points must have dimension >= 1".into()));
        }
        for (i, p) in self.points.iter().enumerate() {
            if p.len() != d {
                return Err(Error::InvalidData(format!(
                    "point {i} has dimension {}, expected {d}",
                    p.len()
                )));
            }
            if !linalg::all_finite(p.iter().copied()) {
                return Err(Error::InvalidData(format!("point {i} is not finite")));
            }
        }
        if let Some(truth) = &self.truth {
            if truth.labels.len() != self.points.len() {
                return Err(Error::InvalidData(format!(
                    "{} labels for {} points",
                    truth.labels.len(),
                    self.points.len()
                )));
            }
            let m = truth.params.m();
            if let Some(bad) = truth.labels.iter().find(|&&l| l >= m) {
                return Err(Error::InvalidData(format!(
                    "label {} outside 1..={m}",
                    bad + 1
                )));
            }
        }
        Ok(())
    }

    /// Sample mean and per-coordinate variance.
    pub fn moments(&self) -> (DVector<T>, DVector<T>) {
        let n = T::from_usize_lossy(self.len());
        let d = self.dim();
        let mut mean = DVector::zeros(d);
        for p in &self.points {
            mean += p;
        }
        mean /= n;
        let mut var = DVector::zeros(d);
        for p in &self.points {
            let diff = p - &mean;
            var += diff.component_mul(&diff);
        }
        var /= n;
        (mean, var)
    }

    /// Coordinate-wise `(min, max)` bounding box.
    pub fn bounding_box(&self) -> (DVector<T>, DVector<T>) {
        let mut lo = self.points[0].clone();
        let mut hi = self.points[0].clone();
        for p in &self.points[1..] {
            for j in 0..p.len() {
                if p[j] < lo[j] {
                    lo[j] = p[j];
                }
                if p[j] > hi[j] {
                    hi[j] = p[j];
                }
            }
        }
        (lo, hi)
    }
}

/// Draw one `(y, latent)` pair from the generative model.
pub fn sample_joint<T: Scalar, R: Rng + ?Sized>(
    params: &MfaParams<T>,
    noise_factor: &DMatrix<T>,
    rng: &mut R,
) -> (DVector<T>, LatentPoint<T>) {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut w = params.m() - 1;
    for (j, p) in params.weights.iter().enumerate() {
        acc += p.as_f64();
        if u < acc {
            w = j;
            break;
        }
    }
    let x = DVector::from_fn(params.k(), |_, _| T::lit(rng.sample::<f64, _>(StandardNormal)));
    let z = DVector::from_fn(params.d(), |_, _| T::lit(rng.sample::<f64, _>(StandardNormal)));
    let y = &params.means[w] + &params.loadings[w] * &x + noise_factor * z;
    (y, LatentPoint { x, w })
}

/// Draw `n` points from `params` with a seeded ChaCha stream. Identical seeds
/// give bit-identical datasets.
pub fn sample_dataset<T: Scalar>(params: &MfaParams<T>, n: usize, seed: u64) -> Result<Dataset<T>> {
    params.validate()?;
    if n == 0 {
        return Err(Error::Precondition("sample size must be >= 1".into()));
    }
    let chol = cholesky(&params.noise_cov).ok_or_else(|| {
        Error::InvalidParams("noise covariance not positive definite".into())
    })?;
    let factor = chol.l();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let (y, latent) = sample_joint(params, &factor, &mut rng);
        points.push(y);
        labels.push(latent.w);
    }
    Ok(Dataset {
        points,
        truth: Some(Truth {
            params: params.clone(),
            labels,
        }),
        seed: Some(seed),
    })
}

/// `log π_w + log N(y; μ_w + Λ_w x, Φ) + log N(x; 0, I_k)`.
pub fn complete_log_pdf<T: Scalar>(
    y: &DVector<T>,
    x: &DVector<T>,
    w: usize,
    params: &MfaParams<T>,
) -> Result<T> {
    params.check_point(y)?;
    if x.len() != params.k() {
        return Err(Error::DimensionMismatch {
            what: "latent point",
            expected: params.k(),
            got: x.len(),
        });
    }
    if w >= params.m() {
        return Err(Error::Precondition(format!(
            "component index {w} out of range for m = {}",
            params.m()
        )));
    }
    let chol = cholesky(&params.noise_cov)
        .ok_or(Error::NotPositiveDefinite { component: w, what: "noise covariance" })?;
    let centre = &params.means[w] + &params.loadings[w] * x;
    let obs = linalg::gaussian_log_pdf(y, &centre, &chol);
    let k = T::from_usize_lossy(x.len());
    let prior = -(k * T::two_pi().ln() + x.dot(x)) * T::lit(0.5);
    Ok(params.weights[w].ln() + obs + prior)
}

/// Per-point `log p(y^(i); θ)` via the marginal Gaussian `N(μ_w, Λ_wΛ_wᵀ + Φ)`.
pub fn point_log_likelihoods<T: Scalar>(data: &Dataset<T>, params: &MfaParams<T>) -> Result<Vec<T>> {
    params.check_data(data)?;
    let chols = (0..params.m())
        .map(|w| {
            cholesky(&params.marginal_cov(w)).ok_or(Error::NotPositiveDefinite {
                component: w,
                what: "marginal covariance",
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let log_w: Vec<T> = params.weights.iter().map(|p| p.ln()).collect();
    let mut terms = vec![T::zero(); params.m()];
    Ok(data
        .points
        .iter()
        .map(|y| {
            for (w, chol) in chols.iter().enumerate() {
                terms[w] = log_w[w] + linalg::gaussian_log_pdf(y, &params.means[w], chol);
            }
            linalg::log_sum_exp(&terms)
        })
        .collect())
}

/// `Σ_i log Σ_w π_w N(y^(i); μ_w, Λ_wΛ_wᵀ + Φ)`.
pub fn incomplete_log_likelihood<T: Scalar>(data: &Dataset<T>, params: &MfaParams<T>) -> Result<T> {
    let mut acc = T::zero();
    for v in point_log_likelihoods(data, params)? {
        acc += v;
    }
    Ok(acc)
}
