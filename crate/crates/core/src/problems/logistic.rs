//! Sparse Bayesian logistic regression with a Laplace prior.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::index::sample;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng;
use crate::target::{Nonsmooth, SmoothPotential, TargetSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticData {
    /// `n×d` covariates, one row per observation.
    pub x: Array2<f64>,
    /// Labels in `{0, 1}`.
    pub y: Array1<f64>,
    pub theta_star: Array1<f64>,
    pub lambda: f64,
}

/// `λ = 3d / (2π²)`.
pub fn default_lambda(d: usize) -> f64 {
    3.0 * d as f64 / (2.0 * PI * PI)
}

/// Overflow-safe `1 / (1 + e^{-t})`.
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Overflow-safe `log(1 + e^t)`.
pub fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// Unit-norm Rademacher rows and Bernoulli labels drawn from `theta_star`.
pub fn sample_logistic_data(
    n: usize,
    theta_star: Array1<f64>,
    lambda: f64,
    seed: u64,
) -> Result<LogisticData> {
    let d = theta_star.len();
    if n == 0 || d == 0 {
        return Err(Error::Config(format!(
            "logistic data needs n, d >= 1, got n={n}, d={d}"
        )));
    }
    let scale = 1.0 / (d as f64).sqrt();
    let mut x = Array2::zeros((n, d));
    let mut y = Array1::zeros(n);
    for i in 0..n {
        let mut r = rng::stream(seed, rng::TAG_PROBLEM, 1 + i as u64);
        for l in 0..d {
            x[[i, l]] = if r.random_bool(0.5) { scale } else { -scale };
        }
        let p = sigmoid(x.row(i).dot(&theta_star));
        y[i] = if r.random::<f64>() < p { 1.0 } else { 0.0 };
    }
    Ok(LogisticData {
        x,
        y,
        theta_star,
        lambda,
    })
}

/// Data for a `θ*` with `d/4` unit entries at seeded positions.
pub fn generate_logistic_data(n: usize, d: usize, seed: u64) -> Result<LogisticData> {
    if d == 0 || !d.is_multiple_of(4) {
        return Err(Error::Config(format!(
            "logistic dimension must be a positive multiple of 4, got {d}"
        )));
    }
    let mut r = rng::stream(seed, rng::TAG_PROBLEM, 0);
    let mut theta = Array1::zeros(d);
    for idx in sample(&mut r, d, d / 4) {
        theta[idx] = 1.0;
    }
    sample_logistic_data(n, theta, default_lambda(d), seed)
}

/// `f(θ) = Σ_i log(1 + exp(θᵀx_i)) - YᵀXθ`.
#[derive(Debug, Clone)]
pub struct LogisticPotential {
    x: Array2<f64>,
    y: Array1<f64>,
}

impl SmoothPotential for LogisticPotential {
    fn value(&self, theta: ArrayView1<f64>) -> f64 {
        let logits = self.x.dot(&theta);
        logits
            .iter()
            .zip(self.y.iter())
            .map(|(&t, &y)| softplus(t) - y * t)
            .sum()
    }

    fn grad(&self, theta: ArrayView1<f64>) -> Array1<f64> {
        let logits = self.x.dot(&theta);
        let resid = Array1::from_iter(
            logits
                .iter()
                .zip(self.y.iter())
                .map(|(&t, &y)| sigmoid(t) - y),
        );
        self.x.t().dot(&resid)
    }
}

pub fn logistic_posterior(data: &LogisticData, beta: f64) -> TargetSpec {
    TargetSpec::new(
        Arc::new(LogisticPotential {
            x: data.x.clone(),
            y: data.y.clone(),
        }),
        Nonsmooth::L1 {
            lambda: data.lambda,
        },
        beta,
    )
}
