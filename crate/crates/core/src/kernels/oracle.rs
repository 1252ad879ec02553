//! One-dimensional reference scores of the kernel by adaptive quadrature.
//!
//! Used to check the closed-form scores and as the exact reference for the
//! kernel approximation-order experiments. Nothing here is fast.

use crate::error::{Error, Result};
use crate::prox::{logsumexp, shrink_scalar};
use crate::quadrature::{integrate, QuadOptions};

/// Density the kernel is applied to (unnormalized is fine).
#[derive(Debug, Clone, PartialEq)]
pub enum Density1D {
    /// Equal-weight Gaussian KDE with bandwidth `sigma`.
    Kde {
        centers: Vec<f64>,
        sigma: f64,
    },
    Normal {
        mean: f64,
        var: f64,
    },
}

impl Density1D {
    fn log_density(&self, y: f64) -> f64 {
        match self {
            Density1D::Kde { centers, sigma } => {
                let terms: Vec<f64> = centers
                    .iter()
                    .map(|c| -(y - c) * (y - c) / (2.0 * sigma * sigma))
                    .collect();
                logsumexp(&terms).unwrap_or(f64::NEG_INFINITY)
            }
            Density1D::Normal { mean, var } => -(y - mean) * (y - mean) / (2.0 * var),
        }
    }

    /// Interval holding all but a negligible part of the mass.
    fn support(&self) -> (f64, f64) {
        match self {
            Density1D::Kde { centers, sigma } => {
                let lo = centers.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = centers.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (lo - 12.0 * sigma, hi + 12.0 * sigma)
            }
            Density1D::Normal { mean, var } => (mean - 12.0 * var.sqrt(), mean + 12.0 * var.sqrt()),
        }
    }

    fn landmarks(&self) -> Vec<f64> {
        match self {
            Density1D::Kde { centers, .. } => centers.clone(),
            Density1D::Normal { mean, .. } => vec![*mean],
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            Density1D::Kde { centers, sigma } => {
                !centers.is_empty() && *sigma > 0.0 && centers.iter().all(|c| c.is_finite())
            }
            Density1D::Normal { mean, var } => mean.is_finite() && *var > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Usage(format!("invalid reference density {self:?}")))
        }
    }
}

/// Potential `V` inside the kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Potential1D {
    L1 { lambda: f64 },
    Quadratic { curvature: f64 },
}

impl Potential1D {
    fn value(&self, x: f64) -> f64 {
        match *self {
            Potential1D::L1 { lambda } => lambda * x.abs(),
            Potential1D::Quadratic { curvature } => 0.5 * curvature * x * x,
        }
    }

    fn derivative(&self, x: f64) -> f64 {
        match *self {
            Potential1D::L1 { .. } if x == 0.0 => 0.0,
            Potential1D::L1 { lambda } => lambda * x.signum(),
            Potential1D::Quadratic { curvature } => curvature * x,
        }
    }

    fn prox(&self, x: f64, h: f64) -> f64 {
        match *self {
            Potential1D::L1 { lambda } => shrink_scalar(x, lambda * h),
            Potential1D::Quadratic { curvature } => x / (1.0 + h * curvature),
        }
    }

    fn kinks(&self, h: f64) -> Vec<f64> {
        match *self {
            Potential1D::L1 { lambda } => vec![0.0, lambda * h, -lambda * h],
            Potential1D::Quadratic { .. } => vec![0.0],
        }
    }
}

/// How the per-`y` normalizer of the kernel is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalizer {
    /// Replace the normalizer by its value at the minimizer (the form the
    /// particle kernels use); the prefactor becomes the Moreau envelope.
    Laplace,
    /// Integrate the normalizer numerically.
    Exact,
}

#[derive(Debug, Clone)]
pub struct ScoreOracle {
    pub density: Density1D,
    pub potential: Potential1D,
    pub h: f64,
    pub beta: f64,
    pub normalizer: Normalizer,
    pub rel_tol: f64,
}

impl ScoreOracle {
    pub fn new(
        density: Density1D,
        potential: Potential1D,
        h: f64,
        beta: f64,
        normalizer: Normalizer,
    ) -> Result<Self> {
        density.validate()?;
        if !(h > 0.0 && beta > 0.0) {
            return Err(Error::Usage(format!(
                "oracle needs h > 0 and beta > 0, got h={h}, beta={beta}"
            )));
        }
        Ok(ScoreOracle {
            density,
            potential,
            h,
            beta,
            normalizer,
            rel_tol: 1e-11,
        })
    }

    fn width(&self) -> f64 {
        (2.0 * self.h / self.beta).sqrt()
    }

    /// `-ln ∫ exp(-β/2 (V(z) + (z - y)²/2h)) dz` up to a `y`-independent
    /// constant.
    fn log_inv_normalizer(&self, y: f64) -> Result<f64> {
        let (h, beta) = (self.h, self.beta);
        let z_star = self.potential.prox(y, h);
        let exponent =
            |z: f64| -0.5 * beta * (self.potential.value(z) + (z - y) * (z - y) / (2.0 * h));
        match self.normalizer {
            Normalizer::Laplace => Ok(-exponent(z_star)),
            Normalizer::Exact => {
                let peak = exponent(z_star);
                let s = self.width();
                let mut pts = vec![
                    y.min(z_star) - 14.0 * s,
                    y.max(z_star) + 14.0 * s,
                    z_star,
                    y,
                ];
                pts.push(0.0);
                let lo = pts[0];
                let hi = pts[1];
                pts.retain(|p| *p >= lo && *p <= hi);
                let opts = QuadOptions {
                    rel_tol: self.rel_tol,
                    ..QuadOptions::default()
                };
                let r = integrate(|z| (exponent(z) - peak).exp(), &pts, opts)?;
                Ok(-(peak + r.value.ln()))
            }
        }
    }

    fn prior_term(&self, x: f64) -> f64 {
        match self.normalizer {
            Normalizer::Laplace => -0.5 * self.beta * (x - self.potential.prox(x, self.h)) / self.h,
            Normalizer::Exact => -0.5 * self.beta * self.potential.derivative(x),
        }
    }

    /// `d/dx log K ρ(x)`.
    pub fn score(&self, x: f64) -> Result<f64> {
        let (h, beta) = (self.h, self.beta);
        let s = self.width();
        let (d_lo, d_hi) = self.density.support();
        let lo = d_lo.min(x) - 14.0 * s;
        let hi = d_hi.max(x) + 14.0 * s;

        let log_weight = |y: f64| -> Result<f64> {
            Ok(-beta * (x - y) * (x - y) / (4.0 * h)
                + self.density.log_density(y)
                + self.log_inv_normalizer(y)?)
        };

        let mut pts = vec![lo, hi, x];
        pts.extend(self.density.landmarks());
        pts.extend(self.potential.kinks(h));
        for k in 1..=4 {
            pts.push(x + k as f64 * s);
            pts.push(x - k as f64 * s);
        }
        let grid = 256;
        for i in 0..=grid {
            pts.push(lo + (hi - lo) * i as f64 / grid as f64);
        }
        pts.retain(|p| *p >= lo && *p <= hi);

        // shift by the largest log-weight seen on the breakpoints
        let mut peak = f64::NEG_INFINITY;
        for &p in &pts {
            peak = peak.max(log_weight(p)?);
        }
        if !peak.is_finite() {
            return Err(Error::Numeric(format!(
                "oracle weight vanishes everywhere near x = {x}"
            )));
        }

        // The closures cannot return errors; record the first one instead.
        let failure = std::cell::RefCell::new(None::<Error>);
        let weight = |y: f64| match log_weight(y) {
            Ok(v) => (v - peak).exp(),
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                0.0
            }
        };
        let opts = QuadOptions {
            rel_tol: self.rel_tol,
            ..QuadOptions::default()
        };
        let den = integrate(weight, &pts, opts)?;
        let num = integrate(
            |y| (y - x) * weight(y),
            &pts,
            QuadOptions {
                abs_tol: self.rel_tol * den.value * s,
                ..opts
            },
        )?;
        if let Some(e) = failure.into_inner() {
            return Err(e);
        }
        Ok(self.prior_term(x) + beta / (2.0 * h) * num.value / den.value)
    }
}
