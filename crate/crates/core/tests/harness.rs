mod common;

use common::*;
use dqaem::harness::{
    evaluate_success, paper_truth, run_comparison, run_monotonicity, truth_init, ContingencyTable, InitMode,
    MonotonicityConfig, SuccessCriterion, TrialConfig,
};
use dqaem::quantum::AnnealState;
use dqaem::{sample_dataset, AnnealSchedule, FitOptions};
use nalgebra::DMatrix;
use proptest::prelude::*;

#[test]
fn exact_means_succeed_with_zero_error() {
    let truth = paper_truth(0.5);
    let eval = evaluate_success(&truth, &truth, &SuccessCriterion::default()).unwrap();
    assert!(eval.success);
    assert!(eval.per_component_error.iter().all(|&e| e == 0.0));
}

#[test]
fn permuted_means_succeed() {
    let truth = paper_truth(0.5);
    let eval = evaluate_success(&truth.permuted(&[2, 0, 1]), &truth, &SuccessCriterion::default()).unwrap();
    assert!(eval.success);
    assert!(eval.per_component_error.iter().all(|&e| e == 0.0));
}

#[test]
fn displaced_mean_fails() {
    // Unit trace, factor 0.2: a squared error of 1 is over the threshold.
    let truth = paper_truth(0.5);
    let mut fit = truth.clone();
    fit.means[1][1] += 1.0;
    let eval = evaluate_success(&fit, &truth, &SuccessCriterion::default()).unwrap();
    assert!(!eval.success);
    assert!((eval.per_component_error[1] - 1.0).abs() < 1e-12);
}

#[test]
fn threshold_is_strict() {
    let truth = paper_truth(0.5);
    let mut fit = truth.clone();
    fit.means[0][0] += 0.2f64.sqrt() * 0.999;
    assert!(evaluate_success(&fit, &truth, &SuccessCriterion::default()).unwrap().success);
    fit.means[0][0] += 0.01;
    assert!(!evaluate_success(&fit, &truth, &SuccessCriterion::default()).unwrap().success);
}

#[test]
fn component_count_mismatch_is_an_error() {
    let truth = paper_truth(0.5);
    let other = separated_truth();
    let two = dqaem::MfaParams::new(
        v(&[0.5, 0.5]),
        other.means[..2].to_vec(),
        other.loadings[..2].to_vec(),
        other.noise_cov.clone(),
    )
    .unwrap();
    assert!(evaluate_success(&two, &truth, &SuccessCriterion::default()).is_err());
}

#[test]
fn contingency_marginals_are_consistent() {
    let outcomes = [(true, true), (true, false), (false, true), (false, false), (false, true), (true, true)];
    let mut t = ContingencyTable::default();
    for (em, dq) in outcomes {
        t.record(em, dq);
    }
    assert_eq!(t.trials, 6);
    assert_eq!(t.both_success + t.em_only + t.dqaem_only + t.both_fail, 6);
    assert_eq!(t.em_successes(), outcomes.iter().filter(|o| o.0).count());
    assert_eq!(t.dqaem_successes(), outcomes.iter().filter(|o| o.1).count());
    let total: f64 = [t.both_success, t.em_only, t.dqaem_only, t.both_fail].iter().map(|&c| t.pct(c)).sum();
    assert!((total - 100.0).abs() < 1e-9);
    assert!(t.render().contains("100.0 %"));
}

fn small_config(trials: usize) -> TrialConfig {
    let mut cfg = TrialConfig::paper_shaped(trials);
    cfg.truth = separated_truth();
    cfg.n = 150;
    cfg.fit_k = 1;
    cfg.beads = 8;
    cfg.schedule = AnnealSchedule::linear_gamma(1.0, 20);
    cfg.em = FitOptions::with_limits(300, 1e-6);
    cfg.dqaem = FitOptions::with_limits(300, 1e-6);
    cfg
}

#[test]
fn truth_initialized_trials_all_succeed() {
    let mut cfg = small_config(4);
    cfg.init = InitMode::Truth;
    let result = run_comparison(&cfg).unwrap();
    assert_eq!(result.table.both_success, 4);
    assert_eq!(result.table.trials, 4);
}

#[test]
fn comparison_is_deterministic() {
    let cfg = small_config(10);
    let a = run_comparison(&cfg).unwrap();
    let b = run_comparison(&cfg).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn comparison_table_recounts_from_records() {
    let mut cfg = small_config(6);
    cfg.fresh_dataset_per_trial = true;
    let r = run_comparison(&cfg).unwrap();
    let mut t = ContingencyTable::default();
    for rec in &r.records {
        t.record(rec.em.success, rec.dqaem.success);
        assert_eq!(rec.data_seed, cfg.data_seed + rec.trial as u64);
        assert_eq!(rec.em.success, rec.em.iterations_to_success.is_some());
    }
    assert_eq!(t, r.table);
    assert_eq!(r.em_iterations.trials, r.table.em_successes());
    assert_eq!(r.joint_em_iterations.trials, r.table.both_success);
}

#[test]
fn comparison_rejects_zero_trials() {
    assert!(run_comparison(&small_config(0)).is_err());
}

#[test]
fn truth_init_pads_loadings() {
    let truth = paper_truth(0.5);
    let init = truth_init(&truth, 2).unwrap();
    assert_eq!(init.k(), 2);
    assert_eq!(init.means, truth.means);
    assert!(init.loadings.iter().all(|l| l == &DMatrix::zeros(2, 2)));
}

fn mono_config(models: Vec<usize>, iters: usize, restarts: usize) -> MonotonicityConfig {
    MonotonicityConfig {
        models,
        anneal: AnnealState::new(1.0, 0.5, 8).unwrap(),
        iters,
        restarts,
        fit_k: 1,
        init_seed: 3,
        tol: 1e-12,
    }
}

#[test]
fn single_component_restarts_agree() {
    let data = sample_dataset(&separated_truth(), 200, 1).unwrap();
    let report = run_monotonicity(&data, &mono_config(vec![1], 2000, 20)).unwrap();
    let m1 = &report.models[0];
    assert_eq!(m1.runs.len(), 20);
    assert!(m1.final_spread.unwrap() < 1e-6, "spread {:?}", m1.final_spread);
    assert_eq!(m1.converged_to_unique, Some(true));
    assert!(report.passed);
}

#[test]
fn multi_component_traces_are_monotone() {
    let data = sample_dataset(&separated_truth(), 150, 2).unwrap();
    let report = run_monotonicity(&data, &mono_config(vec![3, 5], 60, 3)).unwrap();
    for m in &report.models {
        assert!(m.max_delta <= 1e-9, "m={}: {}", m.m, m.max_delta);
        assert!(m.monotone);
        assert!(m.runs.iter().all(|r| r.violations.is_empty()));
    }
}

#[test]
fn zero_iterations_is_a_vacuous_pass() {
    let data = sample_dataset(&separated_truth(), 50, 2).unwrap();
    let report = run_monotonicity(&data, &mono_config(vec![1, 3], 0, 2)).unwrap();
    assert!(report.passed);
    for m in &report.models {
        assert!(m.runs.iter().all(|r| r.deltas.is_empty()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn success_is_permutation_invariant(
        shift in prop::collection::vec(-0.6f64..0.6, 6),
        perm in Just(vec![0usize, 1, 2]).prop_shuffle(),
    ) {
        let truth = paper_truth(0.5);
        let mut fit = truth.clone();
        for w in 0..3 {
            fit.means[w][0] += shift[2 * w];
            fit.means[w][1] += shift[2 * w + 1];
        }
        let crit = SuccessCriterion::default();
        let a = evaluate_success(&fit, &truth, &crit).unwrap();
        let b = evaluate_success(&fit.permuted(&perm), &truth, &crit).unwrap();
        prop_assert_eq!(a.success, b.success);
        let mut ea = a.per_component_error.clone();
        let mut eb = b.per_component_error.clone();
        ea.sort_by(f64::total_cmp);
        eb.sort_by(f64::total_cmp);
        for (x, y) in ea.iter().zip(&eb) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }
}
