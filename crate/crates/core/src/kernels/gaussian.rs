//! Closed-form score of the L1 kernel applied to a Gaussian KDE.
//!
//! With `ρ(y) ∝ Σ_j exp(-‖y - x_j‖² / 2σ²)` and `c = 2h / (σ²β)` the kernel
//! integral factorizes over coordinates. In each coordinate the integrand is
//! a Gaussian on each of the three shrinkage regions `y ≥ λh`, `y ≤ -λh` and
//! `|y| < λh` (the `T₁, T₂, T₃` pieces); differentiating in the query gives
//! the matching `S₁, S₂, S₃` pieces, which reduce to `β/2h · E[y]` under each
//! truncated Gaussian. Everything is kept in log space: the raw pieces
//! overflow for small `h`.

use ndarray::{Array1, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::prox::{shrink_scalar, softmax_in_place, ProxParams};
use crate::special::quadratic_exp_piece;

/// KDE bandwidth `σ`; `c = 2h/(σ²β)` is always derived, never stored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianKernelParams {
    sigma: f64,
}

impl GaussianKernelParams {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::Usage(format!(
                "KDE bandwidth must be positive, got {sigma}"
            )));
        }
        Ok(GaussianKernelParams { sigma })
    }

    /// Mean per-coordinate standard deviation times `N^{-1/(d+4)}`. A
    /// collapsed ensemble falls back to unit spread.
    pub fn rule_of_thumb(particles: ArrayView2<f64>) -> Self {
        let (n, d) = particles.dim();
        let spread = if n > 1 {
            particles.std_axis(Axis(0), 1.0).mean().unwrap_or(0.0)
        } else {
            0.0
        };
        let spread = if spread > 0.0 && spread.is_finite() {
            spread
        } else {
            1.0
        };
        let sigma = spread * (n as f64).powf(-1.0 / (d as f64 + 4.0));
        GaussianKernelParams {
            sigma: sigma.max(1e-8),
        }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn c(&self, p: &ProxParams) -> f64 {
        2.0 * p.h / (self.sigma * self.sigma * p.beta)
    }
}

/// One coordinate of one KDE component: `ln ∫ exp(Q(y)) dy` over the real
/// line (sum of the three shrinkage pieces) and `E[y]` under `exp(Q)`.
/// `x` is the query coordinate, `z` the particle coordinate.
pub(crate) fn coordinate_factor(x: f64, z: f64, p: &ProxParams, c: f64) -> (f64, f64) {
    let (beta, h, lambda) = (p.beta, p.h, p.lambda);
    let tau = lambda * h;
    let k = beta / (4.0 * h);
    let outer_a = k * (1.0 + c);

    // y >= τ: S(y) = y - τ
    let upper = quadratic_exp_piece(
        outer_a,
        (x + c * z + tau) / (1.0 + c),
        tau,
        f64::INFINITY,
        |y| {
            -k * ((x - y) * (x - y) - tau * tau) + 0.5 * beta * lambda * (y - tau)
                - k * c * (y - z) * (y - z)
        },
    );
    // y <= -τ: S(y) = y + τ
    let lower = quadratic_exp_piece(
        outer_a,
        (x + c * z - tau) / (1.0 + c),
        f64::NEG_INFINITY,
        -tau,
        |y| {
            -k * ((x - y) * (x - y) - tau * tau)
                - 0.5 * beta * lambda * (y + tau)
                - k * c * (y - z) * (y - z)
        },
    );
    // |y| < τ: S(y) = 0
    let middle = quadratic_exp_piece(k * c, (x + c * z) / c, -tau, tau, |y| {
        -k * ((x - y) * (x - y) - y * y) - k * c * (y - z) * (y - z)
    });

    let pieces = [upper, lower, middle];
    let max = pieces
        .iter()
        .map(|q| q.log_mass)
        .fold(f64::NEG_INFINITY, f64::max);
    let (mut mass, mut first) = (0.0, 0.0);
    for q in &pieces {
        if q.log_mass > f64::NEG_INFINITY {
            let w = (q.log_mass - max).exp();
            mass += w;
            first += w * q.mean;
        }
    }
    (max + mass.ln(), first / mass)
}

/// `∇ log K ρ(query)` for the Gaussian-KDE density over `particles`.
///
/// Coordinate `ℓ` is the Moreau-smoothed prior term `-β/2 (x_ℓ - S(x_ℓ))/h`
/// plus `Σ_j π_j ∂_ℓ log I_ℓ(j)`, where `I_ℓ(j)` is the per-coordinate
/// integral of component `j` and `π_j ∝ Π_m I_m(j)`.
pub fn gaussian_kde_score(
    particles: ArrayView2<f64>,
    query: ArrayView1<f64>,
    p: &ProxParams,
    k: &GaussianKernelParams,
) -> Result<Array1<f64>> {
    let (n, d) = particles.dim();
    if n == 0 || d == 0 {
        return Err(Error::Usage(
            "gaussian_kde_score needs a non-empty ensemble".into(),
        ));
    }
    if query.len() != d {
        return Err(Error::shape("gaussian_kde_score query", d, query.len()));
    }
    let c = k.c(p);
    let mut log_weight = vec![0.0; n];
    let mut slope = ndarray::Array2::<f64>::zeros((n, d));
    let drift = p.beta / (2.0 * p.h);
    for (j, xj) in particles.outer_iter().enumerate() {
        for l in 0..d {
            let (log_mass, mean_y) = coordinate_factor(query[l], xj[l], p, c);
            log_weight[j] += log_mass;
            slope[[j, l]] = -drift * (query[l] - mean_y);
        }
    }
    if log_weight.iter().all(|w| !w.is_finite()) || log_weight.iter().any(|w| w.is_nan()) {
        return Err(Error::Numeric(format!(
            "gaussian kernel denominator underflowed at query {:?}",
            query.to_vec()
        )));
    }
    softmax_in_place(&mut log_weight)?;
    let tau = p.threshold();
    let weights = Array1::from(log_weight);
    let interaction = weights.dot(&slope);
    let score = Array1::from_iter(
        query
            .iter()
            .zip(interaction.iter())
            .map(|(&x, &s)| -0.5 * p.beta * (x - shrink_scalar(x, tau)) / p.h + s),
    );
    if score.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!(
            "gaussian kernel score is non-finite at query {:?}",
            query.to_vec()
        )));
    }
    Ok(score)
}
