//! Reference values for expectile regression.

use specplan_core::predictor::{FeatureVector, Hyperparams, ValueModel};

/// Fixed point of `m = Σ w_i y_i / Σ w_i`, `w_i = τ` above m and `1 - τ` below.
pub fn expectile_oracle(ys: &[f64], tau: f64) -> f64 {
    let mut m = ys.iter().sum::<f64>() / ys.len() as f64;
    for _ in 0..10_000 {
        let (mut num, mut den) = (0.0, 0.0);
        for &y in ys {
            let w = if y >= m { tau } else { 1.0 - tau };
            num += w * y;
            den += w;
        }
        let next = num / den;
        if (next - m).abs() < 1e-15 {
            return next;
        }
        m = next;
    }
    m
}

/// Full-batch descent on one constant feature.
pub fn fit_scalar(ys: &[f64], tau: f64) -> f64 {
    let hyper = Hyperparams { dimension: 4, ..Hyperparams::default() };
    let mut model = ValueModel::new(hyper);
    let x = FeatureVector { dimension: 4, entries: vec![(1, 1.0)] };
    let batch: Vec<(&FeatureVector, f64)> = ys.iter().map(|&y| (&x, y)).collect();
    for _ in 0..40_000 {
        model.sgd_step(&batch, tau, 0.05);
    }
    model.predict(&x)
}
