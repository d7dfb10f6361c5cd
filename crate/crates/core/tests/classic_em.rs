mod common;

use common::*;
use dqaem::oracle::{random_instance, trapezoid};
use dqaem::{
    complete_log_pdf, e_step, incomplete_log_likelihood, m_step, q_function, random_init, run_em, sample_dataset,
    ClassicPosterior, Error, FitOptions, MStepOptions, MfaParams, Outcome,
};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use proptest::prelude::*;

#[test]
fn single_component_takes_all_responsibility() {
    let (p, data) = random_instance(1, 1, 3, 2, 30).unwrap();
    let post = e_step(&data, &p).unwrap();
    assert!(post.responsibilities.iter().all(|&r| r == 1.0));
}

#[test]
fn mirror_symmetric_point_splits_evenly() {
    let p = scalar_model(&[0.5, 0.5], &[-1.5, 1.5], &[0.7, -0.7], 0.3);
    let post = e_step(&dataset(&[&[0.0]]), &p).unwrap();
    assert!((post.responsibilities[(0, 0)] - 0.5).abs() < 1e-12);
    assert!((post.responsibilities[(0, 1)] - 0.5).abs() < 1e-12);
}

#[test]
fn latent_moments_match_quadrature() {
    let p = scalar_model(&[0.3, 0.7], &[-0.4, 1.1], &[1.3, -0.6], 0.5);
    let data = dataset(&[&[-1.2], &[0.35], &[2.4]]);
    let post = e_step(&data, &p).unwrap();
    for (i, y) in data.points.iter().enumerate() {
        let joint = |x: f64, w: usize| complete_log_pdf(y, &v(&[x]), w, &p).unwrap().exp();
        let total: f64 = (0..2).map(|w| trapezoid(|x| joint(x, w), -15.0, 15.0, 6001)).sum();
        for w in 0..2 {
            let z = trapezoid(|x| joint(x, w), -15.0, 15.0, 6001);
            let mean = trapezoid(|x| x * joint(x, w), -15.0, 15.0, 6001) / z;
            let second = trapezoid(|x| x * x * joint(x, w), -15.0, 15.0, 6001) / z;
            assert!((post.responsibilities[(i, w)] - z / total).abs() < 1e-8);
            assert!((post.latent_mean[i * 2 + w][0] - mean).abs() < 1e-8);
            assert!((post.latent_second_moment[i * 2 + w][(0, 0)] - second).abs() < 1e-8);
        }
    }
}

#[test]
fn e_step_reports_the_log_likelihood() {
    let (p, data) = random_instance(4, 3, 2, 1, 40).unwrap();
    let post = e_step(&data, &p).unwrap();
    assert!((post.log_likelihood - incomplete_log_likelihood(&data, &p).unwrap()).abs() < 1e-10);
}

#[test]
fn e_step_rejects_mismatched_data() {
    let (p, _) = random_instance(4, 3, 2, 1, 4).unwrap();
    assert!(matches!(e_step(&dataset(&[&[1.0]]), &p), Err(Error::DimensionMismatch { .. })));
}

#[test]
fn m_step_single_component_without_loadings_gives_sample_mean() {
    let data = dataset(&[&[1.0, 2.0], &[3.0, -1.0], &[-0.5, 0.5], &[2.0, 2.5]]);
    let p = MfaParams::new(v(&[1.0]), vec![v(&[9.0, 9.0])], vec![DMatrix::zeros(2, 1)], DMatrix::identity(2, 2)).unwrap();
    let next = m_step(&data, &e_step(&data, &p).unwrap(), &MStepOptions::default()).unwrap();
    let (mean, _) = data.moments();
    assert!((&next.means[0] - mean).amax() < 1e-12);
    assert!(next.loadings[0].amax() < 1e-12);
}

#[test]
fn m_step_with_hard_assignments_gives_group_means() {
    let data = dataset(&[&[0.0], &[1.0], &[2.0], &[10.0], &[12.0]]);
    let assign = [0usize, 0, 0, 1, 1];
    let post = ClassicPosterior {
        responsibilities: DMatrix::from_fn(5, 2, |i, w| if assign[i] == w { 1.0 } else { 0.0 }),
        latent_mean: vec![DVector::zeros(1); 10],
        latent_second_moment: vec![DMatrix::identity(1, 1); 10],
        log_likelihood: 0.0,
    };
    let next = m_step(&data, &post, &MStepOptions::default()).unwrap();
    assert!((next.means[0][0] - 1.0).abs() < 1e-12);
    assert!((next.means[1][0] - 11.0).abs() < 1e-12);
    assert!((next.weights[0] - 0.6).abs() < 1e-12);
    assert!(next.loadings.iter().all(|l| l.amax() < 1e-12));
}

#[test]
fn m_step_zeroes_the_gradient_of_q() {
    for seed in 0..5 {
        let (truth, data) = random_instance(seed, 2, 2, 1, 200).unwrap();
        let mut start = truth.clone();
        start.means[0][0] += 0.3;
        start.loadings[1][(1, 0)] -= 0.2;
        let post = e_step(&data, &start).unwrap();
        let next = m_step(&data, &post, &MStepOptions::default()).unwrap();
        let grad = max_gradient(&next, |c| q_function(&data, &post, c).unwrap());
        assert!(grad < 1e-4, "seed {seed}: gradient {grad}");
    }
}

#[test]
fn m_step_does_not_decrease_q() {
    for seed in 0..10 {
        let (_, data) = random_instance(seed, 3, 2, 1, 80).unwrap();
        let start = random_init(&data, 3, 1, seed).unwrap();
        let post = e_step(&data, &start).unwrap();
        let next = m_step(&data, &post, &MStepOptions::default()).unwrap();
        assert!(q_function(&data, &post, &next).unwrap() >= q_function(&data, &post, &start).unwrap());
    }
}

#[test]
fn m_step_is_a_fixed_point_at_a_stationary_model() {
    let truth = separated_truth();
    let data = sample_dataset(&truth, 300, 2).unwrap();
    let trace = run_em(&data, &truth, &FitOptions::with_limits(20_000, 1e-13)).unwrap();
    let fitted = trace.final_params;
    let again = m_step(&data, &e_step(&data, &fitted).unwrap(), &MStepOptions::default()).unwrap();
    // EM creeps along flat loading directions, so the step is small but not zero.
    assert!(again.max_abs_diff(&fitted) < 1e-6, "moved by {}", again.max_abs_diff(&fitted));
    let twice = m_step(&data, &e_step(&data, &fitted).unwrap(), &MStepOptions::default()).unwrap();
    assert_eq!(again, twice);
}

#[test]
fn full_noise_option_keeps_off_diagonals() {
    let (_, data) = random_instance(12, 2, 3, 1, 100).unwrap();
    let start = random_init(&data, 2, 1, 1).unwrap();
    let post = e_step(&data, &start).unwrap();
    let full = m_step(&data, &post, &MStepOptions { diagonal_noise: false, ..Default::default() }).unwrap();
    let diag = m_step(&data, &post, &MStepOptions::default()).unwrap();
    assert!(diag.has_diagonal_noise());
    assert!(!full.has_diagonal_noise());
    assert!(q_function(&data, &post, &full).unwrap() >= q_function(&data, &post, &diag).unwrap());
}

#[test]
fn noise_floor_applies() {
    // Points on a line: the residual along the orthogonal axis vanishes.
    let data = dataset(&[&[0.0, 0.0], &[1.0, 0.0], &[2.0, 0.0], &[3.0, 0.0]]);
    let p = MfaParams::new(v(&[1.0]), vec![v(&[1.0, 0.0])], vec![DMatrix::zeros(2, 1)], DMatrix::identity(2, 2)).unwrap();
    let next = m_step(&data, &e_step(&data, &p).unwrap(), &MStepOptions::default()).unwrap();
    assert_eq!(next.noise_cov[(1, 1)], 1e-6);
}

#[test]
fn em_from_truth_converges_on_separated_data() {
    let truth = separated_truth();
    let data = sample_dataset(&truth, 600, 9).unwrap();
    let trace = run_em(&data, &truth, &FitOptions::with_limits(500, 1e-6)).unwrap();
    assert_eq!(trace.outcome, Outcome::Converged, "took {} iterations", trace.iterations());
}

#[test]
fn run_em_rejects_zero_iterations() {
    let (p, data) = random_instance(1, 2, 2, 1, 10).unwrap();
    let err = run_em(&data, &p, &FitOptions::with_limits(0, 1e-7)).unwrap_err();
    assert!(matches!(err, Error::Precondition(_)));
}

#[test]
fn run_em_reports_max_iterations() {
    let (_, data) = random_instance(2, 3, 2, 1, 60).unwrap();
    let init = random_init(&data, 3, 1, 4).unwrap();
    let trace = run_em(&data, &init, &FitOptions::with_limits(3, 1e-14)).unwrap();
    assert_eq!(trace.outcome, Outcome::MaxIterations);
    assert_eq!(trace.iterations(), 3);
}

#[test]
fn run_em_is_deterministic() {
    let (_, data) = random_instance(6, 3, 2, 1, 80).unwrap();
    let init = random_init(&data, 3, 1, 6).unwrap();
    let opts = FitOptions::with_limits(50, 1e-9);
    let a = run_em(&data, &init, &opts).unwrap();
    let b = run_em(&data, &init, &opts).unwrap();
    assert_eq!(a.objectives(), b.objectives());
    assert_eq!(a.final_params, b.final_params);
}

#[test]
fn random_init_is_seeded_and_valid() {
    let (_, data) = random_instance(3, 2, 3, 2, 50).unwrap();
    let a = random_init(&data, 4, 2, 17).unwrap();
    assert!(a.validate().is_ok());
    assert_eq!(a, random_init(&data, 4, 2, 17).unwrap());
    assert_ne!(a, random_init(&data, 4, 2, 18).unwrap());
    assert!(random_init(&data, 0, 1, 1).is_err());
}

#[test]
fn single_precision_em_runs() {
    let truth = separated_truth();
    let data64 = sample_dataset(&truth, 200, 3).unwrap();
    let data32 = dqaem::Dataset::new(data64.points.iter().map(|p| p.map(|x| x as f32)).collect()).unwrap();
    let init: MfaParams<f32> = random_init(&data32, 3, 1, 5).unwrap();
    let trace = run_em(&data32, &init, &FitOptions::with_limits(200, 1e-3)).unwrap();
    assert!(trace.final_objective().unwrap().is_finite());
    assert!(trace.worst_decrease() < 1e-2 * trace.final_objective().unwrap().abs());
}

fn min_eig(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.min()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn posterior_rows_sum_to_one_and_covariances_are_psd(seed in 0u64..10_000, m in 1usize..4, k in 1usize..3) {
        let (p, data) = random_instance(seed, m, 3, k, 12).unwrap();
        let post = e_step(&data, &p).unwrap();
        for i in 0..data.len() {
            let row: f64 = post.responsibilities.row(i).sum();
            prop_assert!((row - 1.0).abs() < 1e-10);
            for w in 0..m {
                let mu = &post.latent_mean[i * m + w];
                let cov = &post.latent_second_moment[i * m + w] - mu * mu.transpose();
                prop_assert!(min_eig(&cov) > -1e-12);
            }
        }
    }

    #[test]
    fn em_log_likelihood_never_decreases(seed in 0u64..10_000) {
        let (_, data) = random_instance(seed, 3, 2, 1, 40).unwrap();
        let init = random_init(&data, 3, 1, seed ^ 0xabc).unwrap();
        let trace = run_em(&data, &init, &FitOptions::with_limits(60, 1e-12)).unwrap();
        prop_assert!(trace.worst_decrease() <= 1e-9, "worst {}", trace.worst_decrease());
    }

    #[test]
    fn m_step_output_is_valid(seed in 0u64..10_000) {
        let (_, data) = random_instance(seed, 2, 3, 2, 30).unwrap();
        let init = random_init(&data, 2, 2, seed).unwrap();
        let next = m_step(&data, &e_step(&data, &init).unwrap(), &MStepOptions::default()).unwrap();
        prop_assert!(next.validate().is_ok());
        prop_assert!((next.weights.sum() - 1.0).abs() < 1e-12);
        prop_assert!(next.noise_cov.diagonal().iter().all(|&x| x >= 1e-6));
    }
}
