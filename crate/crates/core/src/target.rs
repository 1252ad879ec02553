//! Target densities `ρ*(x) ∝ exp(-β (f(x) + g(x)))`.

use std::fmt;
use std::sync::Arc;

use ndarray::{Array1, ArrayView1};

use crate::prox::shrink;

/// Smooth part `f` of the potential.
pub trait SmoothPotential: Send + Sync {
    fn value(&self, x: ArrayView1<f64>) -> f64;
    fn grad(&self, x: ArrayView1<f64>) -> Array1<f64>;
}

/// Nonsmooth part `g` given through its value and proximal map
/// `prox_g^h(x) = argmin_y g(y) + ‖x - y‖² / 2h`.
pub trait ProxFunction: Send + Sync {
    fn value(&self, x: ArrayView1<f64>) -> f64;
    fn prox(&self, x: ArrayView1<f64>, h: f64) -> Array1<f64>;
}

/// `f ≡ 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroPotential;

impl SmoothPotential for ZeroPotential {
    fn value(&self, _x: ArrayView1<f64>) -> f64 {
        0.0
    }
    fn grad(&self, x: ArrayView1<f64>) -> Array1<f64> {
        Array1::zeros(x.len())
    }
}

/// `f(x) = (a/2) ‖x‖²`.
#[derive(Debug, Clone, Copy)]
pub struct IsotropicQuadratic {
    pub curvature: f64,
}

impl SmoothPotential for IsotropicQuadratic {
    fn value(&self, x: ArrayView1<f64>) -> f64 {
        0.5 * self.curvature * x.dot(&x)
    }
    fn grad(&self, x: ArrayView1<f64>) -> Array1<f64> {
        x.mapv(|v| self.curvature * v)
    }
}

/// `g(x) = λ‖x‖₁` exposed through the generic prox interface.
#[derive(Debug, Clone, Copy)]
pub struct L1Norm {
    pub lambda: f64,
}

impl ProxFunction for L1Norm {
    fn value(&self, x: ArrayView1<f64>) -> f64 {
        self.lambda * x.mapv(f64::abs).sum()
    }
    fn prox(&self, x: ArrayView1<f64>, h: f64) -> Array1<f64> {
        shrink(x, self.lambda * h)
    }
}

/// `g ≡ 0` (prox is the identity).
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroProx;

impl ProxFunction for ZeroProx {
    fn value(&self, _x: ArrayView1<f64>) -> f64 {
        0.0
    }
    fn prox(&self, x: ArrayView1<f64>, _h: f64) -> Array1<f64> {
        x.to_owned()
    }
}

/// Closure-backed smooth potential.
pub struct FnPotential<V, G> {
    pub value: V,
    pub grad: G,
}

impl<V, G> SmoothPotential for FnPotential<V, G>
where
    V: Fn(ArrayView1<f64>) -> f64 + Send + Sync,
    G: Fn(ArrayView1<f64>) -> Array1<f64> + Send + Sync,
{
    fn value(&self, x: ArrayView1<f64>) -> f64 {
        (self.value)(x)
    }
    fn grad(&self, x: ArrayView1<f64>) -> Array1<f64> {
        (self.grad)(x)
    }
}

#[derive(Clone)]
pub enum Nonsmooth {
    /// `g = λ‖·‖₁`.
    L1 { lambda: f64 },
    /// Any `g` with a single-valued prox.
    General(Arc<dyn ProxFunction>),
}

impl fmt::Debug for Nonsmooth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Nonsmooth::L1 { lambda } => write!(f, "L1 {{ lambda: {lambda} }}"),
            Nonsmooth::General(_) => write!(f, "General(..)"),
        }
    }
}

impl Nonsmooth {
    pub fn value(&self, x: ArrayView1<f64>) -> f64 {
        match self {
            Nonsmooth::L1 { lambda } => lambda * x.mapv(f64::abs).sum(),
            Nonsmooth::General(g) => g.value(x),
        }
    }

    pub fn prox(&self, x: ArrayView1<f64>, h: f64) -> Array1<f64> {
        match self {
            Nonsmooth::L1 { lambda } => shrink(x, lambda * h),
            Nonsmooth::General(g) => g.prox(x, h),
        }
    }

    pub fn l1_weight(&self) -> Option<f64> {
        match self {
            Nonsmooth::L1 { lambda } => Some(*lambda),
            Nonsmooth::General(_) => None,
        }
    }
}

#[derive(Clone)]
pub struct TargetSpec {
    pub smooth: Arc<dyn SmoothPotential>,
    pub nonsmooth: Nonsmooth,
    pub beta: f64,
}

impl fmt::Debug for TargetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TargetSpec")
            .field("nonsmooth", &self.nonsmooth)
            .field("beta", &self.beta)
            .finish_non_exhaustive()
    }
}

impl TargetSpec {
    pub fn new(smooth: Arc<dyn SmoothPotential>, nonsmooth: Nonsmooth, beta: f64) -> Self {
        TargetSpec {
            smooth,
            nonsmooth,
            beta,
        }
    }

    /// `f + g`, the potential whose Gibbs density is sampled (up to β).
    pub fn potential(&self, x: ArrayView1<f64>) -> f64 {
        self.smooth.value(x) + self.nonsmooth.value(x)
    }
}
