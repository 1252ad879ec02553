//! Primal-dual particle sampler for `‖φ - F u‖² + λ‖Du‖₁`: the TV term is
//! split through `p ≈ Du` and a dual variable `y` in the unit L∞ ball.

use std::sync::Arc;

use ndarray::parallel::prelude::*;
use ndarray::{Array1, Array2, ArrayView1, Axis, Zip};
use rand_distr::{Distribution, StandardNormal};

use super::check_finite;
use crate::error::{Error, Result};
use crate::kernels::{interaction_from_prox, interaction_l1_delta};
use crate::problems::DiscreteGradient;
use crate::prox::{shrink_scalar, DataFitProx, LinearDataFit, ProxParams};
use crate::rng;
use crate::target::SmoothPotential;

/// Particles of the primal pair `(u, p)` and of the dual `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct TvState {
    /// `N×d` images.
    pub u: Array2<f64>,
    /// `N×2d` gradient fields.
    pub p: Array2<f64>,
    /// `N×2d` dual variables.
    pub y: Array2<f64>,
    pub iteration: usize,
}

impl TvState {
    /// `u` from `center` plus `N(0, spread²)` noise, `p = Du`, `y = 0`.
    pub fn init(
        n: usize,
        center: ArrayView1<f64>,
        spread: f64,
        gradient: &DiscreteGradient,
        seed: u64,
    ) -> Result<Self> {
        let d = gradient.dim();
        if center.len() != d {
            return Err(Error::shape("TV initial image", d, center.len()));
        }
        if n == 0 {
            return Err(Error::Config(
                "TV sampler needs at least one particle".into(),
            ));
        }
        let mut u = Array2::zeros((n, d));
        let mut p = Array2::zeros((n, 2 * d));
        for i in 0..n {
            let mut r = rng::stream(seed, rng::TAG_INIT, i as u64);
            for l in 0..d {
                let z: f64 = StandardNormal.sample(&mut r);
                u[[i, l]] = center[l] + spread * z;
            }
            p.row_mut(i).assign(&gradient.apply(u.row(i)));
        }
        Ok(TvState {
            u,
            p,
            y: Array2::zeros((n, 2 * d)),
            iteration: 0,
        })
    }

    pub fn max_dual_norm(&self) -> f64 {
        self.y.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn mean_image(&self) -> Array1<f64> {
        self.u.mean_axis(Axis(0)).expect("state has particles")
    }
}

/// Operators and parameters of one TV sampling problem. The data term is
/// whatever `data.value` returns (`½‖φ - F u‖²`); pre-scale `F` and `φ` by
/// `√2` to sample `‖φ - F u‖²`.
pub struct TvProblem {
    pub data: LinearDataFit,
    pub gradient: DiscreteGradient,
    /// Extra smooth term handled by an explicit gradient step on `u`.
    pub extra_smooth: Option<Arc<dyn SmoothPotential>>,
    pub gamma: f64,
    pub lambda: f64,
    pub tau: f64,
    pub h: f64,
    pub beta: f64,
    prox: DataFitProx,
}

impl TvProblem {
    /// `tau = None` picks `1 / (γ² ‖L‖²)` with `L = [I, -D]`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        data: LinearDataFit,
        gradient: DiscreteGradient,
        extra_smooth: Option<Arc<dyn SmoothPotential>>,
        gamma: f64,
        lambda: f64,
        tau: Option<f64>,
        h: f64,
        beta: f64,
    ) -> Result<Self> {
        if data.dim() != gradient.dim() {
            return Err(Error::Config(format!(
                "forward operator has {} columns but the image has {} pixels",
                data.dim(),
                gradient.dim()
            )));
        }
        for (name, v) in [
            ("gamma", gamma),
            ("lambda", lambda),
            ("h", h),
            ("beta", beta),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!(
                    "{name} must be finite and nonnegative, got {v}"
                )));
            }
        }
        if h == 0.0 || beta == 0.0 {
            return Err(Error::Config("h and beta must be positive".into()));
        }
        let tau = match tau {
            Some(t) if t >= 0.0 && t.is_finite() => t,
            Some(t) => return Err(Error::Config(format!("tau must be nonnegative, got {t}"))),
            None if gamma == 0.0 => 0.0,
            None => 1.0 / (gamma * gamma * coupling_norm_sq(&gradient, 20)),
        };
        let prox = data.prox_operator(h)?;
        Ok(TvProblem {
            data,
            gradient,
            extra_smooth,
            gamma,
            lambda,
            tau,
            h,
            beta,
            prox,
        })
    }
}

/// Power-iteration estimate of `‖L‖² = λ_max(I + D Dᵀ)`.
pub fn coupling_norm_sq(gradient: &DiscreteGradient, iters: usize) -> f64 {
    let n = 2 * gradient.dim();
    // deterministic, not orthogonal to the top eigenvector in practice
    let mut v = Array1::from_shape_fn(n, |k| 1.0 + ((k * 7919) % 13) as f64 / 13.0);
    let mut est = 1.0;
    for _ in 0..iters {
        let norm = v.dot(&v).sqrt();
        v /= norm;
        let w = &v + &gradient.apply(gradient.adjoint(v.view()).view());
        est = v.dot(&w);
        v = w;
    }
    est
}

struct DataTerm<'a> {
    data: &'a LinearDataFit,
    prox: &'a DataFitProx,
}

impl crate::target::ProxFunction for DataTerm<'_> {
    fn value(&self, x: ArrayView1<f64>) -> f64 {
        self.data.value(x).unwrap_or(f64::NAN)
    }

    fn prox(&self, x: ArrayView1<f64>, h: f64) -> Array1<f64> {
        let out = if h == self.prox.step() {
            self.prox.apply(x)
        } else {
            self.data.prox_operator(h).and_then(|p| p.apply(x))
        };
        out.unwrap_or_else(|_| Array1::from_elem(x.len(), f64::NAN))
    }
}

fn averaged(half: &Array2<f64>, prox: &Array2<f64>, m: &Array2<f64>) -> Array2<f64> {
    let means = m.dot(half);
    let mut out = half.clone();
    Zip::from(&mut out)
        .and(prox)
        .and(&means)
        .for_each(|o, &p, &mean| *o += 0.5 * (p - mean));
    out
}

/// One primal-dual sweep.
pub fn tv_pd_step(s: &TvState, pb: &TvProblem) -> Result<TvState> {
    let d = pb.gradient.dim();
    let n = s.u.nrows();
    if s.u.ncols() != d || s.p.dim() != (n, 2 * d) || s.y.dim() != (n, 2 * d) {
        return Err(Error::Config(format!(
            "TV state shapes u {:?}, p {:?}, y {:?} do not fit a {d}-pixel image",
            s.u.dim(),
            s.p.dim(),
            s.y.dim()
        )));
    }
    let (h, gamma) = (pb.h, pb.gamma);
    let iteration = s.iteration + 1;

    // inner-product half steps
    let mut u_half = s.u.clone();
    u_half
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(i, mut row)| {
            row.scaled_add(h * gamma, &pb.gradient.adjoint(s.y.row(i)));
            if let Some(f) = &pb.extra_smooth {
                row.scaled_add(-h, &f.grad(s.u.row(i)));
            }
        });
    let p_half = &s.p - &(&s.y * (h * gamma));
    check_finite(&u_half, iteration)?;

    // data-fit kernel on u
    let term = DataTerm {
        data: &pb.data,
        prox: &pb.prox,
    };
    let (u_prox, g_values) = crate::kernels::prox_and_value(u_half.view(), h, &term)?;
    let pu = ProxParams::new(0.0, h, pb.beta)?;
    let mu = interaction_from_prox(u_half.view(), u_prox.view(), &g_values, &pu)?;
    let u_next = averaged(&u_half, &u_prox, &mu);

    // L1 kernel on p
    let pp = ProxParams::new(pb.lambda, h, pb.beta)?;
    let mp = interaction_l1_delta(p_half.view(), &pp)?;
    let p_prox = p_half.mapv(|v| shrink_scalar(v, pp.threshold()));
    let p_next = averaged(&p_half, &p_prox, &mp);

    // dual ascent and projection
    let mut y_next = s.y.clone();
    y_next
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(i, mut row)| {
            let u_bar = &u_next.row(i) * 2.0 - s.u.row(i);
            let p_bar = &p_next.row(i) * 2.0 - s.p.row(i);
            let lu = &p_bar - &pb.gradient.apply(u_bar.view());
            row.scaled_add(pb.tau * gamma, &lu);
            row.mapv_inplace(|v| v / v.abs().max(1.0));
        });

    check_finite(&u_next, iteration)?;
    check_finite(&p_next, iteration)?;
    check_finite(&y_next, iteration)?;
    Ok(TvState {
        u: u_next,
        p: p_next,
        y: y_next,
        iteration,
    })
}
