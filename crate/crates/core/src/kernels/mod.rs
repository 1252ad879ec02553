//! Interaction weights of the regularized Wasserstein proximal kernel.
//!
//! For particles `x_1..x_N` (already moved by the explicit gradient step on
//! `f`) the kernel score reduces to a row-stochastic matrix
//!
//! ```text
//! M_ij = softmax_j U(x_i, x_j),
//! U(x, x_j) = -β/2 [ (‖x - x_j‖² - ‖prox(x_j) - x_j‖²) / 2h - g(prox(x_j)) ]
//! ```
//!
//! which every variant below evaluates through a per-row softmax, never by
//! exponentiating `U` directly.

mod gaussian;
mod oracle;

use std::fmt;
use std::str::FromStr;

use ndarray::parallel::prelude::*;
use ndarray::{Array1, Array2, Array3, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::prox::{shrink_scalar, softmax_in_place, ProxParams};
use crate::target::ProxFunction;

pub use gaussian::{gaussian_kde_score, GaussianKernelParams};
pub use oracle::{Density1D, Normalizer, Potential1D, ScoreOracle};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KernelVariant {
    /// Empirical (delta-measure) density, full `N×N` matrix.
    Delta,
    /// Gaussian KDE density, closed-form score.
    Gaussian,
    /// Tensor-product auxiliary point set, one `N×N` slice per dimension.
    Separable,
    /// Delta-measure density with a user-supplied prox for `g`.
    General,
}

impl KernelVariant {
    pub const ALL: [KernelVariant; 4] = [
        KernelVariant::Delta,
        KernelVariant::Gaussian,
        KernelVariant::Separable,
        KernelVariant::General,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            KernelVariant::Delta => "delta",
            KernelVariant::Gaussian => "gaussian",
            KernelVariant::Separable => "separable",
            KernelVariant::General => "general",
        }
    }
}

impl fmt::Display for KernelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for KernelVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        KernelVariant::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown kernel variant `{s}` (expected delta | gaussian | separable | general)")))
    }
}

/// Row-stochastic interaction weights.
#[derive(Debug, Clone, PartialEq)]
pub enum InteractionMatrix {
    /// `N×N`, shared by all coordinates.
    Full(Array2<f64>),
    /// `d×N×N`: slice `ℓ` weights coordinate `ℓ`.
    Separable(Array3<f64>),
}

impl InteractionMatrix {
    /// Largest `|Σ_j M_ij - 1|` over all rows (and slices).
    pub fn max_row_sum_deviation(&self) -> f64 {
        let rows = |m: ArrayView2<f64>| {
            m.sum_axis(Axis(1))
                .iter()
                .fold(0.0f64, |acc, s| acc.max((s - 1.0).abs()))
        };
        match self {
            InteractionMatrix::Full(m) => rows(m.view()),
            InteractionMatrix::Separable(m) => m.outer_iter().map(rows).fold(0.0, f64::max),
        }
    }

    pub fn min_entry(&self) -> f64 {
        let it: Box<dyn Iterator<Item = &f64>> = match self {
            InteractionMatrix::Full(m) => Box::new(m.iter()),
            InteractionMatrix::Separable(m) => Box::new(m.iter()),
        };
        it.copied().fold(f64::INFINITY, f64::min)
    }

    /// Weighted particle averages `Σ_j M_ij x_j` (coordinate-wise for the
    /// separable form).
    pub fn weighted_means(&self, particles: ArrayView2<f64>) -> Result<Array2<f64>> {
        let (n, d) = particles.dim();
        match self {
            InteractionMatrix::Full(m) => {
                if m.dim() != (n, n) {
                    return Err(Error::shape(
                        "weighted_means",
                        format!("{n}x{n}"),
                        format!("{:?}", m.dim()),
                    ));
                }
                Ok(m.dot(&particles))
            }
            InteractionMatrix::Separable(m) => {
                if m.dim() != (d, n, n) {
                    return Err(Error::shape(
                        "weighted_means",
                        format!("{d}x{n}x{n}"),
                        format!("{:?}", m.dim()),
                    ));
                }
                let mut out = Array2::zeros((n, d));
                for (l, slice) in m.outer_iter().enumerate() {
                    out.column_mut(l).assign(&slice.dot(&particles.column(l)));
                }
                Ok(out)
            }
        }
    }
}

fn squared_distance(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `U(x_i, x_j)` for `g = λ‖·‖₁`, with `x_j` in both particle slots.
pub fn kernel_exponent_l1(xi: ArrayView1<f64>, xj: ArrayView1<f64>, p: &ProxParams) -> f64 {
    let tau = p.threshold();
    let (mut shift_sq, mut shrunk_l1) = (0.0, 0.0);
    for &v in xj {
        let s = shrink_scalar(v, tau);
        shift_sq += (s - v) * (s - v);
        shrunk_l1 += s.abs();
    }
    -0.5 * p.beta * ((squared_distance(xi, xj) - shift_sq) / (2.0 * p.h) - p.lambda * shrunk_l1)
}

/// Softmax rows of `-β‖x_i - x_j‖²/4h + bias_j`.
fn interaction_from_bias(
    particles: ArrayView2<f64>,
    bias: &[f64],
    p: &ProxParams,
) -> Result<Array2<f64>> {
    let n = particles.nrows();
    if let Some(j) = bias.iter().position(|b| !b.is_finite()) {
        return Err(Error::Numeric(format!(
            "non-finite kernel exponent for particle {j}"
        )));
    }
    let scale = p.beta / (4.0 * p.h);
    let mut m = Array2::zeros((n, n));
    m.axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .try_for_each(|(i, mut row)| -> Result<()> {
            let xi = particles.row(i);
            let mut logits: Vec<f64> = (0..n)
                .map(|j| bias[j] - scale * squared_distance(xi, particles.row(j)))
                .collect();
            softmax_in_place(&mut logits)
                .map_err(|e| Error::Numeric(format!("interaction row {i}: {e}")))?;
            row.assign(&Array1::from(logits));
            Ok(())
        })?;
    Ok(m)
}

fn check_particles(particles: ArrayView2<f64>) -> Result<()> {
    if particles.nrows() == 0 || particles.ncols() == 0 {
        return Err(Error::Usage(
            "interaction needs at least one particle of dimension >= 1".into(),
        ));
    }
    Ok(())
}

/// Delta-measure kernel for `g = λ‖·‖₁`.
pub fn interaction_l1_delta(particles: ArrayView2<f64>, p: &ProxParams) -> Result<Array2<f64>> {
    check_particles(particles)?;
    let tau = p.threshold();
    let bias: Vec<f64> = particles
        .outer_iter()
        .map(|xj| {
            let (mut shift_sq, mut shrunk_l1) = (0.0, 0.0);
            for &v in xj {
                let s = shrink_scalar(v, tau);
                shift_sq += (s - v) * (s - v);
                shrunk_l1 += s.abs();
            }
            0.5 * p.beta * (shift_sq / (2.0 * p.h) + p.lambda * shrunk_l1)
        })
        .collect();
    interaction_from_bias(particles, &bias, p)
}

/// Delta-measure kernel for a general `g` given by value and prox
/// (`p.lambda` is ignored).
pub fn interaction_general_prox(
    particles: ArrayView2<f64>,
    p: &ProxParams,
    g: &dyn ProxFunction,
) -> Result<Array2<f64>> {
    check_particles(particles)?;
    let (proxed, g_values) = prox_and_value(particles, p.h, g)?;
    interaction_from_prox(particles, proxed.view(), &g_values, p)
}

/// `prox_g^h` of every particle together with `g` at the prox point.
pub fn prox_and_value(
    particles: ArrayView2<f64>,
    h: f64,
    g: &dyn ProxFunction,
) -> Result<(Array2<f64>, Vec<f64>)> {
    let (n, d) = particles.dim();
    let mut proxed = Array2::zeros((n, d));
    let mut values = vec![0.0; n];
    proxed
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .zip(values.par_iter_mut())
        .enumerate()
        .try_for_each(|(j, (mut row, value))| -> Result<()> {
            let xj = particles.row(j);
            let prox = g.prox(xj, h);
            if prox.len() != d {
                return Err(Error::shape("g_prox output", d, prox.len()));
            }
            let g_val = g.value(prox.view());
            if !g_val.is_finite() || prox.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!(
                    "g or prox_g is non-finite at particle {j}"
                )));
            }
            row.assign(&prox);
            *value = g_val;
            Ok(())
        })?;
    Ok((proxed, values))
}

/// Delta-measure kernel from precomputed prox points `prox_g^h(x_j)` and
/// values `g(prox_g^h(x_j))`.
pub fn interaction_from_prox(
    particles: ArrayView2<f64>,
    proxed: ArrayView2<f64>,
    g_at_prox: &[f64],
    p: &ProxParams,
) -> Result<Array2<f64>> {
    check_particles(particles)?;
    if proxed.dim() != particles.dim() || g_at_prox.len() != particles.nrows() {
        return Err(Error::shape(
            "interaction_from_prox",
            format!("{:?}", particles.dim()),
            format!("{:?} / {}", proxed.dim(), g_at_prox.len()),
        ));
    }
    let bias: Vec<f64> = particles
        .outer_iter()
        .zip(proxed.outer_iter())
        .zip(g_at_prox)
        .map(|((xj, pj), g)| 0.5 * p.beta * (squared_distance(pj, xj) / (2.0 * p.h) + g))
        .collect();
    interaction_from_bias(particles, &bias, p)
}

/// Per-coordinate kernel of the tensor-product auxiliary point set; returns
/// a `d×N×N` array.
pub fn separable_interaction_l1(particles: ArrayView2<f64>, p: &ProxParams) -> Result<Array3<f64>> {
    check_particles(particles)?;
    let (n, d) = particles.dim();
    let tau = p.threshold();
    let scale = p.beta / (4.0 * p.h);
    let mut m = Array3::zeros((d, n, n));
    m.axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .try_for_each(|(l, mut slice)| -> Result<()> {
            let col = particles.column(l);
            let bias: Vec<f64> = col
                .iter()
                .map(|&v| {
                    let s = shrink_scalar(v, tau);
                    0.5 * p.beta * ((s - v) * (s - v) / (2.0 * p.h) + p.lambda * s.abs())
                })
                .collect();
            for i in 0..n {
                let xi = col[i];
                let mut logits: Vec<f64> = (0..n)
                    .map(|j| bias[j] - scale * (xi - col[j]) * (xi - col[j]))
                    .collect();
                softmax_in_place(&mut logits)
                    .map_err(|e| Error::Numeric(format!("separable slice {l}, row {i}: {e}")))?;
                slice.row_mut(i).assign(&Array1::from(logits));
            }
            Ok(())
        })?;
    Ok(m)
}

/// Builds the interaction matrix of `variant` for an L1 target (`General`
/// uses `g = λ‖·‖₁` through the generic path). The Gaussian variant has no
/// matrix form and is rejected.
pub fn interaction_l1(
    variant: KernelVariant,
    particles: ArrayView2<f64>,
    p: &ProxParams,
) -> Result<InteractionMatrix> {
    match variant {
        KernelVariant::Delta => interaction_l1_delta(particles, p).map(InteractionMatrix::Full),
        KernelVariant::Separable => {
            separable_interaction_l1(particles, p).map(InteractionMatrix::Separable)
        }
        KernelVariant::General => {
            interaction_general_prox(particles, p, &crate::target::L1Norm { lambda: p.lambda })
                .map(InteractionMatrix::Full)
        }
        KernelVariant::Gaussian => Err(Error::Config(
            "the gaussian kernel is evaluated as a score, not a matrix".into(),
        )),
    }
}

/// Score `∇log K ρ(x)` of the delta-measure kernel at `query`:
/// `-β/2h [ (x - S(x)) + Σ_j w_j (x - x_j) ]` with `w = softmax_j U(x, x_j)`.
pub fn delta_kernel_score(
    particles: ArrayView2<f64>,
    query: ArrayView1<f64>,
    p: &ProxParams,
) -> Result<Array1<f64>> {
    check_particles(particles)?;
    if query.len() != particles.ncols() {
        return Err(Error::shape(
            "delta_kernel_score query",
            particles.ncols(),
            query.len(),
        ));
    }
    let mut w: Vec<f64> = particles
        .outer_iter()
        .map(|xj| kernel_exponent_l1(query, xj, p))
        .collect();
    softmax_in_place(&mut w)?;
    let mean = Array1::from(w).dot(&particles);
    let tau = p.threshold();
    let coef = -p.beta / (2.0 * p.h);
    Ok(Array1::from_iter(query.iter().zip(mean.iter()).map(
        |(&x, &m)| coef * ((x - shrink_scalar(x, tau)) + (x - m)),
    )))
}
