#![allow(dead_code)]

use ipd_core::data::{ColumnNames, Dataset, LabeledRow, UnlabeledRow};
use ipd_core::seed;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn normal<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// `y = 1 + x . b + e`, predictions `0.7 y + noise`, `p_x` covariates.
pub fn linear_dataset(seed_value: u64, n_l: usize, n_u: usize, p_x: usize) -> Dataset {
    let mut rng = seed::rng_from_seed(seed_value);
    let draw = |rng: &mut rand_chacha::ChaCha8Rng| {
        let x: Vec<f64> = (0..p_x).map(|_| normal(rng)).collect();
        let y = 1.0 + x.iter().enumerate().map(|(j, v)| (j as f64 + 1.0) * 0.5 * v).sum::<f64>() + normal(rng);
        let y_hat = 0.7 * y + 0.5 * normal(rng);
        (x, y, y_hat)
    };
    let lab = (0..n_l)
        .map(|_| {
            let (x, y, y_hat) = draw(&mut rng);
            LabeledRow { y, y_hat, x, z: vec![] }
        })
        .collect();
    let mut truth = Vec::new();
    let unl = (0..n_u)
        .map(|_| {
            let (x, y, y_hat) = draw(&mut rng);
            truth.push(y);
            UnlabeledRow { y_hat, x, z: vec![] }
        })
        .collect();
    Dataset::new(lab, unl, ColumnNames::default()).unwrap().with_unlabeled_truth(truth).unwrap()
}

/// Binary outcomes from a logistic model, predictions are noisy probabilities.
pub fn logistic_dataset(seed_value: u64, n_l: usize, n_u: usize) -> Dataset {
    let mut rng = seed::rng_from_seed(seed_value);
    let draw = |rng: &mut rand_chacha::ChaCha8Rng| {
        let x = vec![normal(rng)];
        let p = 1.0 / (1.0 + (-(0.3 + 0.8 * x[0])).exp());
        let y = if rng.random::<f64>() < p { 1.0 } else { 0.0 };
        let y_hat = (0.6 * p + 0.4 * y + 0.1 * normal(rng)).clamp(0.0, 1.0);
        (x, y, y_hat)
    };
    let lab = (0..n_l)
        .map(|_| {
            let (x, y, y_hat) = draw(&mut rng);
            LabeledRow { y, y_hat, x, z: vec![] }
        })
        .collect();
    let unl = (0..n_u)
        .map(|_| {
            let (x, _, y_hat) = draw(&mut rng);
            UnlabeledRow { y_hat, x, z: vec![] }
        })
        .collect();
    Dataset::new(lab, unl, ColumnNames::default()).unwrap()
}
