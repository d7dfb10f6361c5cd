//! Brute-force evaluators for the bead chain.
//!
//! Everything here integrates the defining path weight directly (trapezoid
//! rule over a bead grid) or works on the dense stacked-bead Gaussian, never
//! through the Fourier-mode route used by the engine.

pub mod gates;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{self, cholesky};
use crate::model::{complete_log_pdf, Dataset, MfaParams};
use crate::quantum::AnnealState;

/// Largest number of grid nodes (`points_per_dim^(M·k)`) an integration may
/// touch.
pub const GRID_GUARD: f64 = 1e8;
pub const MIN_POINTS_PER_DIM: usize = 16;
pub const MAX_BEADS: usize = 4;

/// Uniform trapezoid grid, shared by every bead coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub points_per_dim: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            lo: -8.0,
            hi: 8.0,
            points_per_dim: 64,
        }
    }
}

impl GridSpec {
    pub fn new(lo: f64, hi: f64, points_per_dim: usize) -> Self {
        Self { lo, hi, points_per_dim }
    }

    pub fn validate(&self, dims: usize) -> Result<()> {
        if !(self.lo < self.hi) || !self.lo.is_finite() || !self.hi.is_finite() {
            return Err(Error::InvalidGrid(format!("need finite lo < hi, got [{}, {}]", self.lo, self.hi)));
        }
        if self.points_per_dim < MIN_POINTS_PER_DIM {
            return Err(Error::InvalidGrid(format!(
                "points_per_dim = {} below minimum {MIN_POINTS_PER_DIM}",
                self.points_per_dim
            )));
        }
        let total = (self.points_per_dim as f64).powi(dims as i32);
        if total > GRID_GUARD {
            return Err(Error::InvalidGrid(format!(
                "grid of {total:.3e} nodes exceeds the {GRID_GUARD:.0e} guard"
            )));
        }
        Ok(())
    }

    fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.points_per_dim - 1) as f64
    }

    fn nodes(&self) -> Vec<f64> {
        let h = self.spacing();
        (0..self.points_per_dim).map(|a| self.lo + h * a as f64).collect()
    }

    fn weights(&self) -> Vec<f64> {
        let h = self.spacing();
        let g = self.points_per_dim;
        (0..g).map(|a| if a == 0 || a + 1 == g { 0.5 * h } else { h }).collect()
    }

    /// Same interval, half the spacing.
    pub fn refined(&self) -> Self {
        Self {
            points_per_dim: 2 * self.points_per_dim - 1,
            ..*self
        }
    }
}

/// Quadrature values of one `(datum, component)` chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainQuadrature {
    pub log_partition: f64,
    pub bead_mean: f64,
    pub bead_second_moment: f64,
    /// Largest change of the three quantities against the grid with half
    /// as many intervals.
    pub error_estimate: f64,
}

fn check_chain_inputs(y: &DVector<f64>, w: usize, params: &MfaParams<f64>, anneal: &AnnealState<f64>) -> Result<()> {
    anneal.validate()?;
    params.check_point(y)?;
    if params.k() != 1 {
        return Err(Error::Precondition(format!("brute-force chain needs k = 1, got {}", params.k())));
    }
    if anneal.beads > MAX_BEADS {
        return Err(Error::Precondition(format!(
            "brute-force chain supports at most {MAX_BEADS} beads, got {}",
            anneal.beads
        )));
    }
    if !(anneal.gamma > 0.0) {
        return Err(Error::Precondition("brute-force chain needs gamma > 0".into()));
    }
    if w >= params.m() {
        return Err(Error::Precondition(format!("component {w} out of range")));
    }
    Ok(())
}

/// `log p(y, x | w)` at each node, i.e. the complete density without `π_w`.
fn node_log_density(y: &DVector<f64>, w: usize, params: &MfaParams<f64>, nodes: &[f64]) -> Result<Vec<f64>> {
    let log_pi = params.weights[w].ln();
    nodes
        .iter()
        .map(|&x| Ok(complete_log_pdf(y, &DVector::from_element(1, x), w, params)? - log_pi))
        .collect()
}

/// `(M / 2πβΓ)^{M/2}` in log form, for `k = 1`.
fn log_prefactor(anneal: &AnnealState<f64>) -> f64 {
    let m = anneal.beads as f64;
    0.5 * m * (m / (2.0 * std::f64::consts::PI * anneal.beta * anneal.gamma)).ln()
}

/// Unnormalized single-bead marginal of the closed chain at each grid node,
/// scaled by `exp(−M·shift)`: `(nodes, marginal, shift)`.
fn chain_marginal(
    y: &DVector<f64>,
    w: usize,
    params: &MfaParams<f64>,
    anneal: &AnnealState<f64>,
    grid: &GridSpec,
) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    let beads = anneal.beads;
    grid.validate(beads)?;
    let nodes = grid.nodes();
    let quad = grid.weights();
    let g = nodes.len();
    let scale = anneal.beta / beads as f64;
    let logd = node_log_density(y, w, params, &nodes)?;
    let potential: Vec<f64> = logd.iter().map(|v| scale * v).collect();
    let shift = potential.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let site: Vec<f64> = potential.iter().zip(&quad).map(|(p, q)| q * (p - shift).exp()).collect();
    let coupling = beads as f64 / (2.0 * anneal.beta * anneal.gamma);
    let kernel = |a: usize, b: usize| {
        let dx = nodes[a] - nodes[b];
        (-coupling * dx * dx).exp()
    };

    // diag[a] = Σ over closed paths through node a of the product of site
    // weights and couplings.
    let diag: Vec<f64> = match beads {
        1 => site.clone(),
        2 => (0..g)
            .map(|a| site[a] * (0..g).map(|b| kernel(a, b).powi(2) * site[b]).sum::<f64>())
            .collect(),
        _ => {
            let transfer = DMatrix::from_fn(g, g, |a, b| site[a] * kernel(a, b));
            let mut power = transfer.clone();
            for _ in 1..beads - 1 {
                power = &power * &transfer;
            }
            (0..g).map(|a| power.row(a).dot(&transfer.column(a).transpose())).collect()
        }
    };
    Ok((nodes, diag, shift))
}

/// Raw trapezoid sums `(Σ, Σx, Σx²)` of the closed chain over one grid,
/// scaled by `exp(−M·shift)`, together with the shift.
fn chain_sums(
    y: &DVector<f64>,
    w: usize,
    params: &MfaParams<f64>,
    anneal: &AnnealState<f64>,
    grid: &GridSpec,
) -> Result<(f64, f64, f64, f64)> {
    let (nodes, diag, shift) = chain_marginal(y, w, params, anneal, grid)?;
    let z: f64 = diag.iter().sum();
    let zx: f64 = diag.iter().zip(&nodes).map(|(d, x)| d * x).sum();
    let zxx: f64 = diag.iter().zip(&nodes).map(|(d, x)| d * x * x).sum();
    Ok((z, zx, zxx, shift))
}

fn chain_on_grid(
    y: &DVector<f64>,
    w: usize,
    params: &MfaParams<f64>,
    anneal: &AnnealState<f64>,
    grid: &GridSpec,
) -> Result<(f64, f64, f64)> {
    let (z, zx, zxx, shift) = chain_sums(y, w, params, anneal, grid)?;
    if !(z > 0.0) || !z.is_finite() {
        return Err(Error::Numerical("chain quadrature underflowed".into()));
    }
    let log_z = log_prefactor(anneal) + anneal.beads as f64 * shift + z.ln();
    Ok((log_z, zx / z, zxx / z))
}

/// Trapezoid integration of the closed bead chain of component `w` on an
/// `M`-dimensional grid (`k = 1`, `M ≤ 4`, `Γ > 0`). The `M`-fold sum is
/// evaluated as the trace of a transfer-matrix power, which is the same sum
/// reordered.
pub fn brute_force_chain(
    y: &DVector<f64>,
    w: usize,
    params: &MfaParams<f64>,
    anneal: &AnnealState<f64>,
    grid: &GridSpec,
) -> Result<ChainQuadrature> {
    check_chain_inputs(y, w, params, anneal)?;
    let fine = chain_on_grid(y, w, params, anneal, grid)?;
    let coarse_grid = GridSpec {
        points_per_dim: (grid.points_per_dim + 1) / 2,
        ..*grid
    };
    let error_estimate = if coarse_grid.points_per_dim >= MIN_POINTS_PER_DIM {
        let coarse = chain_on_grid(y, w, params, anneal, &coarse_grid)?;
        (fine.0 - coarse.0)
            .abs()
            .max((fine.1 - coarse.1).abs())
            .max((fine.2 - coarse.2).abs())
    } else {
        f64::NAN
    };
    Ok(ChainQuadrature {
        log_partition: fine.0,
        bead_mean: fine.1,
        bead_second_moment: fine.2,
        error_estimate,
    })
}

/// `E[f(x_1)]` under the single-bead marginal of the chain, by the same
/// quadrature as [`brute_force_chain`].
pub fn brute_force_bead_expectation(
    y: &DVector<f64>,
    w: usize,
    params: &MfaParams<f64>,
    anneal: &AnnealState<f64>,
    grid: &GridSpec,
    f: impl Fn(f64) -> f64,
) -> Result<f64> {
    check_chain_inputs(y, w, params, anneal)?;
    let (nodes, marginal, _) = chain_marginal(y, w, params, anneal, grid)?;
    let z: f64 = marginal.iter().sum();
    if !(z > 0.0) || !z.is_finite() {
        return Err(Error::Numerical("chain quadrature underflowed".into()));
    }
    Ok(marginal.iter().zip(&nodes).map(|(p, &x)| p * f(x)).sum::<f64>() / z)
}

/// Literal nested trapezoid sum over every grid tuple. Exponential in `M`;
/// meant for tiny grids that cross-check [`brute_force_chain`].
pub fn brute_force_chain_nested(
    y: &DVector<f64>,
    w: usize,
    params: &MfaParams<f64>,
    anneal: &AnnealState<f64>,
    grid: &GridSpec,
) -> Result<ChainQuadrature> {
    check_chain_inputs(y, w, params, anneal)?;
    let beads = anneal.beads;
    grid.validate(beads)?;
    let nodes = grid.nodes();
    let quad = grid.weights();
    let g = nodes.len();
    let logd = node_log_density(y, w, params, &nodes)?;
    let scale = anneal.beta / beads as f64;
    let coupling = beads as f64 / (2.0 * anneal.beta * anneal.gamma);
    let mut idx = vec![0usize; beads];
    let (mut z, mut zx, mut zxx) = (0.0, 0.0, 0.0);
    loop {
        let mut expo = 0.0;
        let mut weight = 1.0;
        let mut xs = 0.0;
        let mut xxs = 0.0;
        for j in 0..beads {
            let a = idx[j];
            let prev = idx[(j + beads - 1) % beads];
            let dx = nodes[a] - nodes[prev];
            expo += scale * logd[a] - coupling * dx * dx;
            weight *= quad[a];
            xs += nodes[a];
            xxs += nodes[a] * nodes[a];
        }
        let v = weight * expo.exp();
        z += v;
        zx += v * xs / beads as f64;
        zxx += v * xxs / beads as f64;
        let mut j = 0;
        loop {
            if j == beads {
                return Ok(ChainQuadrature {
                    log_partition: log_prefactor(anneal) + z.ln(),
                    bead_mean: zx / z,
                    bead_second_moment: zxx / z,
                    error_estimate: f64::NAN,
                });
            }
            idx[j] += 1;
            if idx[j] < g {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
    }
}

/// `F` from brute-force chain partitions.
pub fn brute_force_free_energy(
    data: &Dataset<f64>,
    params: &MfaParams<f64>,
    anneal: &AnnealState<f64>,
    grid: &GridSpec,
) -> Result<f64> {
    params.check_data(data)?;
    let mut total = 0.0;
    let mut scores = vec![0.0; params.m()];
    for y in &data.points {
        for (w, s) in scores.iter_mut().enumerate() {
            *s = anneal.beta * params.weights[w].ln() + brute_force_chain(y, w, params, anneal, grid)?.log_partition;
        }
        total += linalg::log_sum_exp(&scores);
    }
    Ok(-total / anneal.beta)
}

/// Chain quantities from the dense `M·k`-dimensional Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseChain {
    pub log_partition: f64,
    pub bead_mean: DVector<f64>,
    pub bead_second_moment: DMatrix<f64>,
    /// Means of the individual beads, to confirm they coincide.
    pub per_bead_mean: Vec<DVector<f64>>,
}

/// Dense evaluation with the explicit precision
/// `(β/M)(I_M ⊗ P) + (M/βΓ)(L ⊗ I_k)` built from the ring adjacency.
pub fn dense_chain(
    y: &DVector<f64>,
    w: usize,
    params: &MfaParams<f64>,
    anneal: &AnnealState<f64>,
) -> Result<DenseChain> {
    anneal.validate()?;
    params.check_point(y)?;
    if !(anneal.gamma > 0.0) {
        return Err(Error::Precondition("dense chain needs gamma > 0".into()));
    }
    let (m, k, d) = (anneal.beads, params.k(), params.d());
    let (beta, gamma) = (anneal.beta, anneal.gamma);
    let phi = cholesky(&params.noise_cov).ok_or(Error::NotPositiveDefinite { component: w, what: "noise covariance" })?;
    let lambda = &params.loadings[w];
    let resid = y - &params.means[w];
    let prec = DMatrix::identity(k, k) + lambda.transpose() * phi.solve(lambda);
    let b = lambda.transpose() * phi.solve(&resid);
    let c = -0.5 * ((d + k) as f64 * (2.0 * std::f64::consts::PI).ln() + linalg::log_det(&phi) + resid.dot(&phi.solve(&resid)));

    let mk = m * k;
    let mut laplacian = DMatrix::<f64>::zeros(m, m);
    for j in 0..m {
        let prev = (j + m - 1) % m;
        // (x_j − x_prev)² contributes to the quadratic form.
        laplacian[(j, j)] += 1.0;
        laplacian[(prev, prev)] += 1.0;
        laplacian[(j, prev)] -= 1.0;
        laplacian[(prev, j)] -= 1.0;
    }
    let coupling = m as f64 / (beta * gamma);
    let mut q = DMatrix::<f64>::zeros(mk, mk);
    for j in 0..m {
        for l in 0..m {
            for a in 0..k {
                q[(j * k + a, l * k + a)] += coupling * laplacian[(j, l)];
                if j == l {
                    for bb in 0..k {
                        q[(j * k + a, j * k + bb)] += beta / m as f64 * prec[(a, bb)];
                    }
                }
            }
        }
    }
    let mut h = DVector::<f64>::zeros(mk);
    for j in 0..m {
        for a in 0..k {
            h[j * k + a] = beta / m as f64 * b[a];
        }
    }
    let chol = cholesky(&q).ok_or(Error::ModeNotPositiveDefinite { component: w, mode: usize::MAX })?;
    let mean = chol.solve(&h);
    let cov = chol.inverse();
    let log_z = 0.5 * mk as f64 * (m as f64 / (2.0 * std::f64::consts::PI * beta * gamma)).ln()
        + beta * c
        + 0.5 * mk as f64 * (2.0 * std::f64::consts::PI).ln()
        - 0.5 * linalg::log_det(&chol)
        + 0.5 * h.dot(&mean);
    let per_bead_mean: Vec<DVector<f64>> = (0..m).map(|j| mean.rows(j * k, k).into_owned()).collect();
    let mut bead_mean = DVector::zeros(k);
    let mut second = DMatrix::zeros(k, k);
    for j in 0..m {
        let mj = &per_bead_mean[j];
        bead_mean += mj;
        second += cov.view((j * k, j * k), (k, k)) + mj * mj.transpose();
    }
    bead_mean /= m as f64;
    second /= m as f64;
    Ok(DenseChain {
        log_partition: log_z,
        bead_mean,
        bead_second_moment: second,
        per_bead_mean,
    })
}

/// Composite trapezoid rule on `[lo, hi]` with `n` nodes.
pub fn trapezoid(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
    let h = (hi - lo) / (n - 1) as f64;
    let mut acc = 0.5 * (f(lo) + f(hi));
    for a in 1..n - 1 {
        acc += f(lo + h * a as f64);
    }
    acc * h
}

/// `(log ∫ p(y,x|w)^β dx, E[x], E[x²])` for `k = 1` by 1-D quadrature.
pub fn tempered_quadrature(
    y: &DVector<f64>,
    w: usize,
    params: &MfaParams<f64>,
    beta: f64,
    grid: &GridSpec,
) -> Result<(f64, f64, f64)> {
    params.check_point(y)?;
    if params.k() != 1 {
        return Err(Error::Precondition("tempered quadrature needs k = 1".into()));
    }
    let nodes = grid.nodes();
    let logd = node_log_density(y, w, params, &nodes)?;
    let shift = logd.iter().copied().fold(f64::NEG_INFINITY, f64::max) * beta;
    let weights: Vec<f64> = logd.iter().map(|v| (beta * v - shift).exp()).collect();
    let q = grid.weights();
    let z: f64 = weights.iter().zip(&q).map(|(a, b)| a * b).sum();
    let zx: f64 = weights.iter().zip(&q).zip(&nodes).map(|((a, b), x)| a * b * x).sum();
    let zxx: f64 = weights.iter().zip(&q).zip(&nodes).map(|((a, b), x)| a * b * x * x).sum();
    Ok((shift + z.ln(), zx / z, zxx / z))
}

/// Random parameter set for oracle and property checks: weights from
/// normalized uniforms, means `N(0, 1)`, loadings `N(0, 0.5²)`, diagonal
/// noise in `[0.3, 1.5]`.
pub fn random_params(rng: &mut impl Rng, m: usize, d: usize, k: usize) -> MfaParams<f64> {
    let raw: Vec<f64> = (0..m).map(|_| 0.2 + rng.random::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    let weights = DVector::from_iterator(m, raw.iter().map(|v| v / total));
    let means = (0..m)
        .map(|_| DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal)))
        .collect();
    let loadings = (0..m)
        .map(|_| DMatrix::from_fn(d, k, |_, _| 0.5 * rng.sample::<f64, _>(StandardNormal)))
        .collect();
    let noise = DMatrix::from_diagonal(&DVector::from_fn(d, |_, _| 0.3 + 1.2 * rng.random::<f64>()));
    let mut p = MfaParams { weights, means, loadings, noise_cov: noise };
    let s = p.weights.sum();
    p.weights /= s;
    p
}

/// Random parameters plus `n` points sampled from them.
pub fn random_instance(seed: u64, m: usize, d: usize, k: usize, n: usize) -> Result<(MfaParams<f64>, Dataset<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = random_params(&mut rng, m, d, k);
    let data = crate::model::sample_dataset(&params, n, seed.wrapping_add(0x9e37_79b9))?;
    Ok((params, data))
}
