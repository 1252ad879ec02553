//! Imaging operators and the denoising / compressive-sensing problem specs.
//! Images are flattened row-major: pixel `(r, c)` sits at `r * width + c`.

use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::index::sample;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::prox::LinearDataFit;
use crate::rng;
use crate::target::{Nonsmooth, SmoothPotential, TargetSpec};

/// Forward differences with replicate (Neumann) boundary, horizontal block
/// first then vertical: `D` maps `d` pixels to `2d` differences.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DiscreteGradient {
    pub height: usize,
    pub width: usize,
}

pub fn discrete_gradient(height: usize, width: usize) -> Result<DiscreteGradient> {
    if height < 2 || width < 2 {
        return Err(Error::Config(format!(
            "image must be at least 2x2, got {height}x{width}"
        )));
    }
    Ok(DiscreteGradient { height, width })
}

impl DiscreteGradient {
    pub fn dim(&self) -> usize {
        self.height * self.width
    }

    pub fn apply(&self, u: ArrayView1<f64>) -> Array1<f64> {
        let (h, w) = (self.height, self.width);
        let d = h * w;
        assert_eq!(u.len(), d, "discrete gradient input length");
        let mut out = Array1::zeros(2 * d);
        for r in 0..h {
            for c in 0..w {
                let k = r * w + c;
                if c + 1 < w {
                    out[k] = u[k + 1] - u[k];
                }
                if r + 1 < h {
                    out[d + k] = u[k + w] - u[k];
                }
            }
        }
        out
    }

    pub fn adjoint(&self, v: ArrayView1<f64>) -> Array1<f64> {
        let (h, w) = (self.height, self.width);
        let d = h * w;
        assert_eq!(v.len(), 2 * d, "discrete gradient adjoint input length");
        let mut out = Array1::zeros(d);
        for r in 0..h {
            for c in 0..w {
                let k = r * w + c;
                if c + 1 < w {
                    out[k + 1] += v[k];
                    out[k] -= v[k];
                }
                if r + 1 < h {
                    out[k + w] += v[d + k];
                    out[k] -= v[d + k];
                }
            }
        }
        out
    }
}

/// Circular convolution with centered `taps`, keeping every `d/m`-th row.
#[derive(Debug, Clone, PartialEq)]
pub struct CirculantBlur {
    pub d: usize,
    pub m: usize,
    taps: Vec<f64>,
}

pub fn circulant_blur(d: usize, taps: &[f64], m: usize) -> Result<CirculantBlur> {
    if d == 0 || m == 0 || m > d || !d.is_multiple_of(m) {
        return Err(Error::Config(format!("blur rows m={m} must divide d={d}")));
    }
    if taps.is_empty() || taps.len() > d {
        return Err(Error::Config(format!(
            "blur needs 1..=d taps, got {}",
            taps.len()
        )));
    }
    Ok(CirculantBlur {
        d,
        m,
        taps: taps.to_vec(),
    })
}

/// Normalized box filter.
pub fn box_taps(width: usize) -> Vec<f64> {
    vec![1.0 / width as f64; width]
}

impl CirculantBlur {
    fn stride(&self) -> usize {
        self.d / self.m
    }

    fn column(&self, row: usize, k: usize) -> usize {
        let center = self.taps.len() / 2;
        (row + self.d + k - center) % self.d
    }

    pub fn apply(&self, x: ArrayView1<f64>) -> Array1<f64> {
        assert_eq!(x.len(), self.d, "blur input length");
        Array1::from_shape_fn(self.m, |r| {
            let row = r * self.stride();
            self.taps
                .iter()
                .enumerate()
                .map(|(k, t)| t * x[self.column(row, k)])
                .sum()
        })
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut a = Array2::zeros((self.m, self.d));
        for r in 0..self.m {
            let row = r * self.stride();
            for (k, t) in self.taps.iter().enumerate() {
                a[[r, self.column(row, k)]] += t;
            }
        }
        a
    }
}

/// Piecewise-constant test image: a bright rectangle and a dimmer disk on a
/// zero background, values in `[0, 1]`.
pub fn piecewise_constant_image(height: usize, width: usize) -> Array1<f64> {
    let mut img = Array1::zeros(height * width);
    let (hf, wf) = (height as f64, width as f64);
    for r in 0..height {
        for c in 0..width {
            let (y, x) = ((r as f64 + 0.5) / hf, (c as f64 + 0.5) / wf);
            let v = if (0.15..0.55).contains(&y) && (0.1..0.45).contains(&x) {
                1.0
            } else if (y - 0.65).powi(2) + (x - 0.68).powi(2) < 0.2f64.powi(2) {
                0.6
            } else {
                0.0
            };
            img[r * width + c] = v;
        }
    }
    img
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegMode {
    /// `λ ‖u‖₁`, no gradient operator.
    L1,
    /// `λ ‖Du‖₁`.
    L1Tv,
    /// `λ (‖Du‖₁ - ‖Du‖₂)`.
    L12Tv,
}

/// Potential `‖F u - φ‖² + regularizer(u)` for an image of the given shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagingSpec {
    pub height: usize,
    pub width: usize,
    pub truth: Array1<f64>,
    /// `F` (m×d) with observation `φ`; its own `value` is `½‖Fu - φ‖²`.
    pub data: LinearDataFit,
    pub lambda: f64,
    pub mode: RegMode,
}

/// Guard for `‖Du‖₂` in the L1-2 gradient.
pub const L12_EPS: f64 = 1e-8;

impl ImagingSpec {
    /// Denoising with a perturbed identity: `A = I + ε`, where `ε` has `3d`
    /// entries drawn from `N(0, corruption_var)`, and `φ = A z + N(0, noise_var)`.
    #[allow(clippy::too_many_arguments)]
    pub fn sparse_corruption(
        truth: Array1<f64>,
        height: usize,
        width: usize,
        noise_var: f64,
        corruption_var: f64,
        lambda: f64,
        mode: RegMode,
        seed: u64,
    ) -> Result<Self> {
        let d = height * width;
        if truth.len() != d {
            return Err(Error::shape("imaging truth", d, truth.len()));
        }
        let mut r = rng::stream(seed, rng::TAG_PROBLEM, 0);
        let mut a = Array2::eye(d);
        let corruption = normal(corruption_var)?;
        let picks = (3 * d).min(d * d);
        for flat in sample(&mut r, d * d, picks) {
            a[[flat / d, flat % d]] += corruption.sample(&mut r);
        }
        let noise = normal(noise_var)?;
        let obs = a.dot(&truth) + Array1::from_shape_simple_fn(d, || noise.sample(&mut r));
        Ok(ImagingSpec {
            height,
            width,
            truth,
            data: LinearDataFit::new(a, obs)?,
            lambda,
            mode,
        })
    }

    /// Compressive sensing with a subsampled circulant blur and Gaussian
    /// measurement noise.
    #[allow(clippy::too_many_arguments)]
    pub fn blurred(
        truth: Array1<f64>,
        height: usize,
        width: usize,
        blur: &CirculantBlur,
        noise_var: f64,
        lambda: f64,
        mode: RegMode,
        seed: u64,
    ) -> Result<Self> {
        let d = height * width;
        if truth.len() != d || blur.d != d {
            return Err(Error::shape(
                "blurred imaging spec",
                d,
                format!("{} / {}", truth.len(), blur.d),
            ));
        }
        let mut r = rng::stream(seed, rng::TAG_PROBLEM, 0);
        let noise = normal(noise_var)?;
        let obs = blur.apply(truth.view())
            + Array1::from_shape_simple_fn(blur.m, || noise.sample(&mut r));
        Ok(ImagingSpec {
            height,
            width,
            truth,
            data: LinearDataFit::new(blur.to_dense(), obs)?,
            lambda,
            mode,
        })
    }

    pub fn dim(&self) -> usize {
        self.height * self.width
    }

    pub fn gradient(&self) -> DiscreteGradient {
        DiscreteGradient {
            height: self.height,
            width: self.width,
        }
    }

    /// Data fit `‖φ - F·‖²` in the prox-friendly form `½‖√2 φ - √2 F·‖²`.
    pub fn scaled_data_fit(&self) -> LinearDataFit {
        let s = std::f64::consts::SQRT_2;
        LinearDataFit {
            forward: &self.data.forward * s,
            observation: &self.data.observation * s,
        }
    }

    /// Full potential `‖F u - φ‖² + λ R(u)` with `R` chosen by `mode`.
    pub fn potential(&self, u: ArrayView1<f64>) -> f64 {
        let r = self.data.forward.dot(&u) - &self.data.observation;
        let reg = match self.mode {
            RegMode::L1 => u.mapv(f64::abs).sum(),
            RegMode::L1Tv | RegMode::L12Tv => {
                let du = self.gradient().apply(u);
                let l1 = du.mapv(f64::abs).sum();
                if self.mode == RegMode::L12Tv {
                    l1 - du.dot(&du).sqrt()
                } else {
                    l1
                }
            }
        };
        r.dot(&r) + self.lambda * reg
    }
}

fn normal(var: f64) -> Result<Normal<f64>> {
    Normal::new(0.0, var.sqrt())
        .map_err(|e| Error::Config(format!("invalid noise variance {var}: {e}")))
}

/// Smooth part of the L1-2 split: `[‖A u - y‖²] - λ √(‖Du‖² + ε²)`, with the
/// data term optional so Algorithm-2 style samplers can treat it by prox.
#[derive(Debug, Clone)]
pub struct L12Smooth {
    data: Option<LinearDataFit>,
    gradient: DiscreteGradient,
    lambda: f64,
}

impl L12Smooth {
    pub fn full(spec: &ImagingSpec) -> Self {
        L12Smooth {
            data: Some(spec.data.clone()),
            gradient: spec.gradient(),
            lambda: spec.lambda,
        }
    }

    pub fn negative_l2_part(spec: &ImagingSpec) -> Self {
        L12Smooth {
            data: None,
            gradient: spec.gradient(),
            lambda: spec.lambda,
        }
    }
}

impl SmoothPotential for L12Smooth {
    fn value(&self, u: ArrayView1<f64>) -> f64 {
        let du = self.gradient.apply(u);
        let mut v = -self.lambda * (du.dot(&du) + L12_EPS * L12_EPS).sqrt();
        if let Some(data) = &self.data {
            let r = data.forward.dot(&u) - &data.observation;
            v += r.dot(&r);
        }
        v
    }

    fn grad(&self, u: ArrayView1<f64>) -> Array1<f64> {
        let du = self.gradient.apply(u);
        let norm = (du.dot(&du) + L12_EPS * L12_EPS).sqrt();
        let mut g = self.gradient.adjoint(du.view()) * (-self.lambda / norm);
        if let Some(data) = &self.data {
            let r = data.forward.dot(&u) - &data.observation;
            g.scaled_add(2.0, &data.forward.t().dot(&r));
        }
        g
    }
}

/// `‖F u - φ‖²` as a smooth potential.
#[derive(Debug, Clone)]
pub struct SquaredResidual {
    data: LinearDataFit,
}

impl SquaredResidual {
    pub fn new(data: LinearDataFit) -> Self {
        SquaredResidual { data }
    }
}

impl SmoothPotential for SquaredResidual {
    fn value(&self, u: ArrayView1<f64>) -> f64 {
        let r = self.data.forward.dot(&u) - &self.data.observation;
        r.dot(&r)
    }

    fn grad(&self, u: ArrayView1<f64>) -> Array1<f64> {
        let r = self.data.forward.dot(&u) - &self.data.observation;
        self.data.forward.t().dot(&r) * 2.0
    }
}

/// `‖F u - φ‖² + λ‖u‖₁`, sampled directly by the splitting scheme.
pub fn cs_target(spec: &ImagingSpec, beta: f64) -> TargetSpec {
    TargetSpec::new(
        Arc::new(SquaredResidual::new(spec.data.clone())),
        Nonsmooth::L1 {
            lambda: spec.lambda,
        },
        beta,
    )
}

/// `f = ‖A u - y‖² - λ‖Du‖₂` of the L1-2 split.
pub fn l12tv_target(spec: &ImagingSpec) -> Arc<dyn SmoothPotential> {
    Arc::new(L12Smooth::full(spec))
}
