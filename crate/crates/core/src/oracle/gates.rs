//! Oracle-equivalence gates: the engine against brute force on random
//! small instances, each at a fixed tolerance.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{brute_force_chain, dense_chain, random_instance, random_params, GridSpec};
use crate::classic::e_step;
use crate::error::Result;
use crate::model::{incomplete_log_likelihood, sample_dataset};
use crate::quantum::{annealed_e_step, bead_posterior, free_energy, AnnealState};
use crate::linalg;

pub const REDUCTION_TOL: f64 = 1e-10;
pub const QUADRATURE_TOL: f64 = 1e-6;
pub const DENSE_TOL: f64 = 1e-8;
pub const GAMMA_LIMIT_TOL: f64 = 1e-4;

pub const ALL_GATES: [&str; 4] = ["reduction", "chain-quadrature", "dense-modes", "gamma-limit"];

#[derive(Debug, Clone, PartialEq)]
pub struct GateOptions {
    pub gates: Vec<String>,
    pub seed: u64,
    /// Added to every engine `log Z` before comparison; non-zero values
    /// exist to confirm the gates can fail.
    pub perturb_log_partition: f64,
}

impl Default for GateOptions {
    fn default() -> Self {
        Self {
            gates: ALL_GATES.iter().map(|s| s.to_string()).collect(),
            seed: 20_160_901,
            perturb_log_partition: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GateResult {
    pub name: String,
    pub checks: usize,
    pub max_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub gates: Vec<GateResult>,
    pub all_passed: bool,
    pub warnings: Vec<String>,
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

struct Tally {
    checks: usize,
    max_error: f64,
}

impl Tally {
    fn new() -> Self {
        Self { checks: 0, max_error: 0.0 }
    }
    fn add(&mut self, err: f64) {
        self.checks += 1;
        // NaN must fail the gate.
        if err.is_nan() || err > self.max_error {
            self.max_error = if err.is_nan() { f64::INFINITY } else { err };
        }
    }
    fn finish(self, name: &str, tolerance: f64) -> GateResult {
        GateResult {
            name: name.to_string(),
            checks: self.checks,
            max_error: self.max_error,
            tolerance,
            passed: self.checks > 0 && self.max_error <= tolerance,
        }
    }
}

/// `F(β=1, Γ=0) = −L` on 20 instances with `d ≤ 3`, `k ≤ 2`, `m ≤ 3`.
pub fn reduction_gate(seed: u64) -> Result<GateResult> {
    let mut tally = Tally::new();
    for t in 0..20u64 {
        let (d, k, m) = (1 + (t % 3) as usize, 1 + (t % 2) as usize, 1 + ((t / 2) % 3) as usize);
        let (params, data) = random_instance(seed.wrapping_add(t), m, d, k, 40)?;
        let f = free_energy(&data, &params, &AnnealState::classic())?;
        let l = incomplete_log_likelihood(&data, &params)?;
        tally.add((f + l).abs());
    }
    Ok(tally.finish("reduction", REDUCTION_TOL))
}

/// Grid used for a given bead count; sized so the trapezoid error sits far
/// below the gate tolerance for `Γ ≥ 0.5`.
pub fn gate_grid(beads: usize) -> GridSpec {
    match beads {
        1 => GridSpec::new(-8.0, 8.0, 1601),
        2 => GridSpec::new(-8.0, 8.0, 801),
        3 => GridSpec::new(-8.0, 8.0, 301),
        _ => GridSpec::new(-8.0, 8.0, 100),
    }
}

/// Engine vs trapezoid quadrature for `k = 1`, `M ∈ {1, 2, 4}`, `m ≤ 2`,
/// ten instances.
pub fn quadrature_gate(seed: u64, perturb: f64) -> Result<GateResult> {
    let mut tally = Tally::new();
    for t in 0..10u64 {
        let m = 1 + (t % 2) as usize;
        let d = 1 + (t % 3 == 2) as usize;
        let (params, data) = random_instance(seed.wrapping_add(100 + t), m, d, 1, 3)?;
        let beta = if t % 4 == 3 { 0.8 } else { 1.0 };
        let gamma = if t % 2 == 0 { 0.5 } else { 1.0 };
        for beads in [1usize, 2, 4] {
            let anneal = AnnealState::new(beta, gamma, beads)?;
            let grid = gate_grid(beads);
            let mut f_bf = 0.0;
            let mut f_engine = 0.0;
            for y in &data.points {
                let post = bead_posterior(y, &params, &anneal)?;
                let mut scores_bf = Vec::with_capacity(m);
                let mut scores_engine = Vec::with_capacity(m);
                for w in 0..m {
                    let bf = brute_force_chain(y, w, &params, &anneal, &grid)?;
                    let lp = post.log_partition[w] + perturb;
                    tally.add(rel(lp, bf.log_partition));
                    tally.add(rel(post.bead_mean[w][0], bf.bead_mean));
                    tally.add(rel(post.bead_second_moment[w][(0, 0)], bf.bead_second_moment));
                    let lw = beta * params.weights[w].ln();
                    scores_bf.push(lw + bf.log_partition);
                    scores_engine.push(lw + lp);
                }
                f_bf -= linalg::log_sum_exp(&scores_bf) / beta;
                f_engine -= linalg::log_sum_exp(&scores_engine) / beta;
            }
            tally.add(rel(f_engine, f_bf));
            if perturb == 0.0 {
                let f_direct = free_energy(&data, &params, &anneal)?;
                tally.add(rel(f_direct, f_bf));
            }
        }
    }
    Ok(tally.finish("chain-quadrature", QUADRATURE_TOL))
}

/// Mode route vs dense `M·k` Gaussian for `M ≤ 8`, `k ≤ 2`.
pub fn dense_gate(seed: u64, perturb: f64) -> Result<GateResult> {
    let mut tally = Tally::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(200));
    for t in 0..8usize {
        let (m, d, k) = (1 + t % 2, 1 + t % 3, 1 + (t / 2) % 2);
        let params = random_params(&mut rng, m, d, k);
        let data = sample_dataset(&params, 2, seed.wrapping_add(300 + t as u64))?;
        for beads in 1..=8usize {
            let gamma = [0.05, 0.3, 1.0, 4.0][(t + beads) % 4];
            let beta = if beads % 3 == 0 { 0.6 } else { 1.0 };
            let anneal = AnnealState::new(beta, gamma, beads)?;
            for y in &data.points {
                let post = bead_posterior(y, &params, &anneal)?;
                for w in 0..m {
                    let dense = dense_chain(y, w, &params, &anneal)?;
                    tally.add(rel(post.log_partition[w] + perturb, dense.log_partition));
                    tally.add((&post.bead_mean[w] - &dense.bead_mean).amax());
                    tally.add((&post.bead_second_moment[w] - &dense.bead_second_moment).amax());
                }
            }
        }
    }
    Ok(tally.finish("dense-modes", DENSE_TOL))
}

/// Bead moments at `Γ = 1e-8`, `M = 8` against the classic posterior.
pub fn gamma_limit_gate(seed: u64) -> Result<GateResult> {
    let mut tally = Tally::new();
    for t in 0..10u64 {
        let (m, d, k) = (1 + (t % 3) as usize, 1 + (t % 3) as usize, 1 + (t % 2) as usize);
        let (params, data) = random_instance(seed.wrapping_add(400 + t), m, d, k, 5)?;
        let anneal = AnnealState::new(1.0, 1e-8, 8)?;
        let classic = e_step(&data, &params)?;
        let chain = annealed_e_step(&data, &params, &anneal)?;
        for (i, p) in chain.points.iter().enumerate() {
            for w in 0..m {
                let idx = i * m + w;
                tally.add((&p.bead_mean[w] - &classic.latent_mean[idx]).amax());
                tally.add((&p.bead_second_moment[w] - &classic.latent_second_moment[idx]).amax());
                tally.add((p.responsibilities[w] - classic.responsibilities[(i, w)]).abs());
            }
        }
    }
    Ok(tally.finish("gamma-limit", GAMMA_LIMIT_TOL))
}

pub fn run_gates(opts: &GateOptions) -> Result<VerifyReport> {
    let mut gates = Vec::new();
    let mut warnings = Vec::new();
    if opts.gates.is_empty() {
        warnings.push("no gates run".to_string());
    }
    for name in &opts.gates {
        let result = match name.as_str() {
            "reduction" => reduction_gate(opts.seed)?,
            "chain-quadrature" => quadrature_gate(opts.seed, opts.perturb_log_partition)?,
            "dense-modes" => dense_gate(opts.seed, opts.perturb_log_partition)?,
            "gamma-limit" => gamma_limit_gate(opts.seed)?,
            other => {
                return Err(crate::Error::Precondition(format!(
                    "unknown gate '{other}' (known: {})",
                    ALL_GATES.join(", ")
                )))
            }
        };
        gates.push(result);
    }
    let all_passed = gates.iter().all(|g| g.passed);
    Ok(VerifyReport { gates, all_passed, warnings })
}
