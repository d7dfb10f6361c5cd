//! Experiment harness: EM/DQAEM success comparison and fixed-state
//! monotonicity runs.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classic::{random_init, run_em};
use crate::error::{Error, Result};
use crate::fit::FitOptions;
use crate::model::{sample_dataset, Dataset, MfaParams};
use crate::quantum::{run_dqaem, AnnealSchedule, AnnealState};
use crate::trace::FitTrace;

/// Largest component count for which every assignment is enumerated.
pub const MAX_MATCHED_COMPONENTS: usize = 6;
/// Per-step slack on the monotonicity audit.
pub const MONOTONE_SLACK: f64 = 1e-9;
/// Spread allowed between final free energies of the single-component fits.
pub const CONVEX_SPREAD_TOL: f64 = 1e-6;

/// Success when every assignment-matched squared mean error is below
/// `threshold_factor × trace(true component covariance)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SuccessCriterion {
    pub threshold_factor: f64,
}

impl Default for SuccessCriterion {
    fn default() -> Self {
        Self { threshold_factor: 0.2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuccessEval {
    pub success: bool,
    /// Squared error per true component under the best assignment.
    pub per_component_error: Vec<f64>,
    /// `assignment[true] = fitted` component index.
    pub assignment: Vec<usize>,
}

fn permutations(m: usize) -> Vec<Vec<usize>> {
    fn rec(cur: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if cur.len() == used.len() {
            out.push(cur.clone());
            return;
        }
        for j in 0..used.len() {
            if !used[j] {
                used[j] = true;
                cur.push(j);
                rec(cur, used, out);
                cur.pop();
                used[j] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(m), &mut vec![false; m], &mut out);
    out
}

pub fn evaluate_success(fit: &MfaParams<f64>, truth: &MfaParams<f64>, crit: &SuccessCriterion) -> Result<SuccessEval> {
    let m = truth.m();
    if fit.m() != m {
        return Err(Error::DimensionMismatch {
            what: "fitted component count",
            expected: m,
            got: fit.m(),
        });
    }
    if fit.d() != truth.d() {
        return Err(Error::DimensionMismatch {
            what: "fitted dimension",
            expected: truth.d(),
            got: fit.d(),
        });
    }
    if !(crit.threshold_factor > 0.0) {
        return Err(Error::Precondition("threshold_factor must be > 0".into()));
    }
    if m > MAX_MATCHED_COMPONENTS {
        return Err(Error::Precondition(format!(
            "mean matching enumerates assignments only up to m = {MAX_MATCHED_COMPONENTS}"
        )));
    }
    let sq = |a: &DVector<f64>, b: &DVector<f64>| (a - b).norm_squared();
    let mut best: Option<(f64, Vec<usize>)> = None;
    for perm in permutations(m) {
        let total: f64 = (0..m).map(|t| sq(&fit.means[perm[t]], &truth.means[t])).sum();
        if best.as_ref().is_none_or(|(b, _)| total < *b) {
            best = Some((total, perm));
        }
    }
    let (_, assignment) = best.expect("m >= 1");
    let per_component_error: Vec<f64> = (0..m).map(|t| sq(&fit.means[assignment[t]], &truth.means[t])).collect();
    let success = (0..m).all(|t| per_component_error[t] < crit.threshold_factor * truth.marginal_cov(t).trace());
    Ok(SuccessEval {
        success,
        per_component_error,
        assignment,
    })
}

/// Three equal-weight components at `(−1,0)`, `(0,0)`, `(1,0)` with
/// isotropic covariance `variance · I₂`.
pub fn paper_truth(variance: f64) -> MfaParams<f64> {
    MfaParams {
        weights: DVector::from_element(3, 1.0 / 3.0),
        means: vec![
            DVector::from_vec(vec![-1.0, 0.0]),
            DVector::from_vec(vec![0.0, 0.0]),
            DVector::from_vec(vec![1.0, 0.0]),
        ],
        loadings: vec![DMatrix::zeros(2, 1); 3],
        noise_cov: DMatrix::from_diagonal_element(2, 2, variance),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct ContingencyTable {
    pub both_success: usize,
    /// EM succeeds, DQAEM fails.
    pub em_only: usize,
    /// EM fails, DQAEM succeeds.
    pub dqaem_only: usize,
    pub both_fail: usize,
    pub trials: usize,
}

impl ContingencyTable {
    pub fn record(&mut self, em: bool, dqaem: bool) {
        match (em, dqaem) {
            (true, true) => self.both_success += 1,
            (true, false) => self.em_only += 1,
            (false, true) => self.dqaem_only += 1,
            (false, false) => self.both_fail += 1,
        }
        self.trials += 1;
    }

    pub fn em_successes(&self) -> usize {
        self.both_success + self.em_only
    }

    pub fn dqaem_successes(&self) -> usize {
        self.both_success + self.dqaem_only
    }

    pub fn pct(&self, count: usize) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            100.0 * count as f64 / self.trials as f64
        }
    }

    pub fn em_success_pct(&self) -> f64 {
        self.pct(self.em_successes())
    }

    pub fn dqaem_success_pct(&self) -> f64 {
        self.pct(self.dqaem_successes())
    }

    /// Aligned-text rendering of the 2×2 table with margins, in percent.
    pub fn render(&self) -> String {
        let p = |c: usize| format!("{:>7.1} %", self.pct(c));
        let mut s = String::new();
        s.push_str(&format!("{:<16}{:>10}{:>10}{:>10}\n", "", "DQAEM ok", "DQAEM fail", "total"));
        s.push_str(&format!(
            "{:<16}{:>10}{:>10}{:>10}\n",
            "EM ok",
            p(self.both_success),
            p(self.em_only),
            p(self.em_successes())
        ));
        s.push_str(&format!(
            "{:<16}{:>10}{:>10}{:>10}\n",
            "EM fail",
            p(self.dqaem_only),
            p(self.both_fail),
            p(self.dqaem_only + self.both_fail)
        ));
        s.push_str(&format!(
            "{:<16}{:>10}{:>10}{:>10}\n",
            "total",
            p(self.dqaem_successes()),
            p(self.em_only + self.both_fail),
            p(self.trials)
        ));
        s
    }
}

/// Where both solvers of a trial start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitMode {
    #[default]
    Random,
    /// The true parameters, loadings zero-padded or truncated to `fit_k`.
    Truth,
}

/// The true parameters reshaped to `k` latent dimensions.
pub fn truth_init(truth: &MfaParams<f64>, k: usize) -> Result<MfaParams<f64>> {
    let d = truth.d();
    let loadings = truth
        .loadings
        .iter()
        .map(|l| DMatrix::from_fn(d, k, |r, c| if c < l.ncols() { l[(r, c)] } else { 0.0 }))
        .collect();
    MfaParams::new(truth.weights.clone(), truth.means.clone(), loadings, truth.noise_cov.clone())
}

/// One comparison experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialConfig {
    pub truth: MfaParams<f64>,
    pub n: usize,
    pub data_seed: u64,
    /// Draw a new dataset per trial (seed `data_seed + trial`) instead of
    /// sharing one.
    pub fresh_dataset_per_trial: bool,
    /// Trial `t` starts both solvers from `random_init(.., init_seed + t)`.
    pub init_seed: u64,
    pub init: InitMode,
    pub trials: usize,
    pub fit_k: usize,
    pub beads: usize,
    pub schedule: AnnealSchedule<f64>,
    pub em: FitOptions<f64>,
    pub dqaem: FitOptions<f64>,
    pub criterion: SuccessCriterion,
    /// Keep full traces in the per-trial records.
    pub keep_traces: bool,
}

impl TrialConfig {
    /// Three components at `(−1,0)`, `(0,0)`, `(1,0)` with unit-trace
    /// covariance, `N = 300`, `M = 128`, `Γ` from 1 to 0 over 200 steps.
    pub fn paper_shaped(trials: usize) -> Self {
        Self {
            truth: paper_truth(0.5),
            n: 300,
            data_seed: 1,
            fresh_dataset_per_trial: false,
            init_seed: 1000,
            init: InitMode::Random,
            trials,
            fit_k: 2,
            beads: 128,
            schedule: AnnealSchedule::default(),
            em: FitOptions::default(),
            dqaem: FitOptions::default(),
            criterion: SuccessCriterion::default(),
            keep_traces: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.truth.validate()?;
        self.schedule.validate()?;
        self.em.validate()?;
        self.dqaem.validate()?;
        if self.trials == 0 || self.n == 0 || self.fit_k == 0 || self.beads == 0 {
            return Err(Error::Precondition("trials, n, fit_k and beads must all be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverResult {
    pub success: bool,
    pub per_component_error: Vec<f64>,
    pub outcome: String,
    pub failure_reason: Option<String>,
    pub iterations: usize,
    /// First iteration from which the criterion holds for the rest of the
    /// run; only set for successful fits.
    pub iterations_to_success: Option<usize>,
    pub final_objective: f64,
    pub final_means: Vec<Vec<f64>>,
    #[serde(skip)]
    pub trace: Option<FitTrace<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub data_seed: u64,
    pub init_seed: u64,
    pub em: SolverResult,
    pub dqaem: SolverResult,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationStats {
    pub trials: usize,
    pub mean_iterations: Option<f64>,
}

impl IterationStats {
    fn from_counts(counts: &[usize]) -> Self {
        Self {
            trials: counts.len(),
            mean_iterations: if counts.is_empty() {
                None
            } else {
                Some(counts.iter().sum::<usize>() as f64 / counts.len() as f64)
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonResult {
    pub table: ContingencyTable,
    /// Over trials where EM succeeded.
    pub em_iterations: IterationStats,
    /// Over trials where DQAEM succeeded.
    pub dqaem_iterations: IterationStats,
    /// Over trials where both succeeded.
    pub joint_em_iterations: IterationStats,
    pub joint_dqaem_iterations: IterationStats,
    pub records: Vec<TrialRecord>,
}

fn score_fit(
    trace: Result<FitTrace<f64>>,
    truth: &MfaParams<f64>,
    crit: &SuccessCriterion,
    keep: bool,
) -> SolverResult {
    let trace = match trace {
        Ok(t) => t,
        Err(e) => {
            return SolverResult {
                success: false,
                per_component_error: vec![],
                outcome: "error".into(),
                failure_reason: Some(e.to_string()),
                iterations: 0,
                iterations_to_success: None,
                final_objective: f64::NAN,
                final_means: vec![],
                trace: None,
            }
        }
    };
    let failure_reason = match &trace.outcome {
        crate::Outcome::NumericalFailure(msg) => Some(msg.clone()),
        _ => None,
    };
    let eval = evaluate_success(&trace.final_params, truth, crit);
    let (success, per_component_error) = match &eval {
        Ok(e) => (e.success && failure_reason.is_none(), e.per_component_error.clone()),
        Err(_) => (false, vec![]),
    };
    let iterations_to_success = if success {
        let mut first = trace.records.len();
        for r in trace.records.iter().rev() {
            match evaluate_success(&r.params, truth, crit) {
                Ok(e) if e.success => first = r.iteration,
                _ => break,
            }
        }
        Some(first)
    } else {
        None
    };
    SolverResult {
        success,
        per_component_error,
        outcome: trace.outcome.label().to_string(),
        failure_reason,
        iterations: trace.iterations(),
        iterations_to_success,
        final_objective: trace.final_objective().unwrap_or(f64::NAN),
        final_means: trace.final_params.means.iter().map(|v| v.iter().copied().collect()).collect(),
        trace: keep.then_some(trace),
    }
}

fn run_trial(cfg: &TrialConfig, shared: Option<&Dataset<f64>>, trial: usize) -> TrialRecord {
    let data_seed = if cfg.fresh_dataset_per_trial {
        cfg.data_seed.wrapping_add(trial as u64)
    } else {
        cfg.data_seed
    };
    let init_seed = cfg.init_seed.wrapping_add(trial as u64);
    let owned;
    let data = match shared {
        Some(d) => d,
        None => {
            owned = sample_dataset(&cfg.truth, cfg.n, data_seed);
            match &owned {
                Ok(d) => d,
                Err(e) => {
                    let failed = score_fit(Err(e.clone()), &cfg.truth, &cfg.criterion, false);
                    return TrialRecord {
                        trial,
                        data_seed,
                        init_seed,
                        em: failed.clone(),
                        dqaem: failed,
                    };
                }
            }
        }
    };
    let init = match cfg.init {
        InitMode::Random => random_init(data, cfg.truth.m(), cfg.fit_k, init_seed),
        InitMode::Truth => truth_init(&cfg.truth, cfg.fit_k),
    };
    let (em, dq) = match &init {
        Ok(init) => (
            run_em(data, init, &cfg.em),
            run_dqaem(data, init, &cfg.schedule, cfg.beads, &cfg.dqaem),
        ),
        Err(e) => (Err(e.clone()), Err(e.clone())),
    };
    TrialRecord {
        trial,
        data_seed,
        init_seed,
        em: score_fit(em, &cfg.truth, &cfg.criterion, cfg.keep_traces),
        dqaem: score_fit(dq, &cfg.truth, &cfg.criterion, cfg.keep_traces),
    }
}

/// Run every trial (in parallel on the current rayon pool) and aggregate.
/// Records come back in trial order, so the result does not depend on
/// scheduling.
pub fn run_comparison(cfg: &TrialConfig) -> Result<ComparisonResult> {
    cfg.validate()?;
    let shared = if cfg.fresh_dataset_per_trial {
        None
    } else {
        Some(sample_dataset(&cfg.truth, cfg.n, cfg.data_seed)?)
    };
    let records: Vec<TrialRecord> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| run_trial(cfg, shared.as_ref(), t))
        .collect();
    Ok(summarize(records))
}

pub fn summarize(records: Vec<TrialRecord>) -> ComparisonResult {
    let mut table = ContingencyTable::default();
    let (mut em_it, mut dq_it, mut joint_em, mut joint_dq) = (vec![], vec![], vec![], vec![]);
    for r in &records {
        table.record(r.em.success, r.dqaem.success);
        if let Some(i) = r.em.iterations_to_success {
            em_it.push(i);
        }
        if let Some(i) = r.dqaem.iterations_to_success {
            dq_it.push(i);
        }
        if let (Some(a), Some(b)) = (r.em.iterations_to_success, r.dqaem.iterations_to_success) {
            joint_em.push(a);
            joint_dq.push(b);
        }
    }
    ComparisonResult {
        table,
        em_iterations: IterationStats::from_counts(&em_it),
        dqaem_iterations: IterationStats::from_counts(&dq_it),
        joint_em_iterations: IterationStats::from_counts(&joint_em),
        joint_dqaem_iterations: IterationStats::from_counts(&joint_dq),
        records,
    }
}

/// Fixed-state monotonicity experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityConfig {
    pub models: Vec<usize>,
    pub anneal: AnnealState<f64>,
    pub iters: usize,
    pub restarts: usize,
    pub fit_k: usize,
    pub init_seed: u64,
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RestartRun {
    pub restart: usize,
    pub init_seed: u64,
    /// `−F` per iteration.
    pub neg_free_energy: Vec<f64>,
    /// `F(θ^(t+1)) − F(θ^(t))` per step.
    pub deltas: Vec<f64>,
    pub final_free_energy: Option<f64>,
    /// Iterations whose step raised `F` by more than the slack.
    pub violations: Vec<usize>,
    pub outcome: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelRuns {
    pub m: usize,
    pub runs: Vec<RestartRun>,
    pub max_delta: f64,
    pub final_spread: Option<f64>,
    pub monotone: bool,
    /// Only checked for `m = 1`.
    pub converged_to_unique: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotonicityReport {
    pub models: Vec<ModelRuns>,
    pub passed: bool,
}

pub fn run_monotonicity(data: &Dataset<f64>, cfg: &MonotonicityConfig) -> Result<MonotonicityReport> {
    cfg.anneal.validate()?;
    let schedule = AnnealSchedule::frozen(cfg.anneal.beta, cfg.anneal.gamma);
    let opts = FitOptions::with_limits(cfg.iters.max(1), cfg.tol);
    opts.validate()?;
    let mut models = Vec::with_capacity(cfg.models.len());
    for &m in &cfg.models {
        let runs: Vec<RestartRun> = (0..cfg.restarts)
            .into_par_iter()
            .map(|r| -> Result<RestartRun> {
                let init_seed = cfg.init_seed.wrapping_add(1000 * m as u64 + r as u64);
                if cfg.iters == 0 {
                    return Ok(RestartRun {
                        restart: r,
                        init_seed,
                        neg_free_energy: vec![],
                        deltas: vec![],
                        final_free_energy: None,
                        violations: vec![],
                        outcome: "skipped".into(),
                    });
                }
                let init = random_init(data, m, cfg.fit_k, init_seed)?;
                let trace = run_dqaem(data, &init, &schedule, cfg.anneal.beads, &opts)?;
                let neg: Vec<f64> = trace.objectives();
                let deltas: Vec<f64> = neg.windows(2).map(|p| -(p[1] - p[0])).collect();
                let violations = deltas
                    .iter()
                    .enumerate()
                    .filter(|(_, d)| !(**d <= MONOTONE_SLACK))
                    .map(|(t, _)| t)
                    .collect();
                Ok(RestartRun {
                    restart: r,
                    init_seed,
                    final_free_energy: neg.last().map(|v| -v),
                    neg_free_energy: neg,
                    deltas,
                    violations,
                    outcome: trace.outcome.label().to_string(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let max_delta = runs
            .iter()
            .flat_map(|r| r.deltas.iter().copied())
            .fold(f64::NEG_INFINITY, f64::max);
        let finals: Vec<f64> = runs.iter().filter_map(|r| r.final_free_energy).collect();
        let final_spread = if finals.is_empty() {
            None
        } else {
            let lo = finals.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = finals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            Some(hi - lo)
        };
        let monotone = runs.iter().all(|r| r.violations.is_empty() && r.outcome != "numerical-failure");
        let converged_to_unique = (m == 1).then(|| final_spread.is_none_or(|s| s <= CONVEX_SPREAD_TOL));
        models.push(ModelRuns {
            m,
            runs,
            max_delta,
            final_spread,
            monotone,
            converged_to_unique,
        });
    }
    let passed = models
        .iter()
        .all(|m| m.monotone && m.converged_to_unique.unwrap_or(true));
    Ok(MonotonicityReport { models, passed })
}
