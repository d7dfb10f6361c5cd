#![allow(dead_code)]

use dqaem::{Dataset, MfaParams};
use nalgebra::{DMatrix, DVector};

pub fn v(xs: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(xs)
}

pub fn scalar_model(weights: &[f64], means: &[f64], loadings: &[f64], phi: f64) -> MfaParams<f64> {
    MfaParams::new(
        v(weights),
        means.iter().map(|&m| v(&[m])).collect(),
        loadings.iter().map(|&l| DMatrix::from_element(1, 1, l)).collect(),
        DMatrix::from_element(1, 1, phi),
    )
    .unwrap()
}

pub fn dataset(points: &[&[f64]]) -> Dataset<f64> {
    Dataset::new(points.iter().map(|p| v(p)).collect()).unwrap()
}

/// Three well separated 2-D clusters with one-dimensional loadings.
pub fn separated_truth() -> MfaParams<f64> {
    MfaParams::new(
        v(&[0.3, 0.3, 0.4]),
        vec![v(&[-5.0, 0.0]), v(&[0.0, 5.0]), v(&[5.0, 0.0])],
        vec![
            DMatrix::from_column_slice(2, 1, &[0.6, 0.2]),
            DMatrix::from_column_slice(2, 1, &[-0.3, 0.5]),
            DMatrix::from_column_slice(2, 1, &[0.1, -0.7]),
        ],
        DMatrix::from_diagonal(&v(&[0.2, 0.3])),
    )
    .unwrap()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

/// Central difference of `f` along every free coordinate of the model:
/// means, loadings, the diagonal of `Φ`, and weight directions that keep
/// the simplex (`e_w − e_0`). Returns the largest absolute slope.
pub fn max_gradient(params: &MfaParams<f64>, f: impl Fn(&MfaParams<f64>) -> f64) -> f64 {
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut probe = |perturb: &dyn Fn(&mut MfaParams<f64>, f64)| {
        let mut plus = params.clone();
        perturb(&mut plus, h);
        let mut minus = params.clone();
        perturb(&mut minus, -h);
        let slope = (f(&plus) - f(&minus)) / (2.0 * h);
        worst = worst.max(slope.abs());
    };
    let (m, d, k) = (params.m(), params.d(), params.k());
    for w in 0..m {
        for j in 0..d {
            probe(&|p, e| p.means[w][j] += e);
            for a in 0..k {
                probe(&|p, e| p.loadings[w][(j, a)] += e);
            }
        }
    }
    for j in 0..d {
        probe(&|p, e| p.noise_cov[(j, j)] += e);
    }
    for w in 1..m {
        probe(&|p, e| {
            p.weights[w] += e;
            p.weights[0] -= e;
        });
    }
    worst
}
