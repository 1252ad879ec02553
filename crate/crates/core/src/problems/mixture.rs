//! `exp(-f(x)) = Σ_n exp(-‖x - y_n‖² / 2σ²)` with an L1 prior.

use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;

use crate::error::{Error, Result};
use crate::prox::{logsumexp, softmax_in_place};
use crate::rng;
use crate::target::{Nonsmooth, SmoothPotential, TargetSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureSpec {
    /// `M×d`, one center per row.
    pub centers: Array2<f64>,
    pub sigma: f64,
    pub lambda: f64,
}

impl MixtureSpec {
    pub fn new(centers: Array2<f64>, sigma: f64, lambda: f64) -> Result<Self> {
        if centers.nrows() == 0 || centers.ncols() == 0 {
            return Err(Error::Config(
                "mixture needs at least one center of dimension >= 1".into(),
            ));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::Config(format!(
                "mixture sigma must be positive, got {sigma}"
            )));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::Config(format!(
                "mixture lambda must be nonnegative, got {lambda}"
            )));
        }
        if centers.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("mixture centers must be finite".into()));
        }
        Ok(MixtureSpec {
            centers,
            sigma,
            lambda,
        })
    }

    /// Centers drawn uniformly from `[-half_width, half_width]^d`.
    pub fn random(
        d: usize,
        m: usize,
        half_width: f64,
        sigma: f64,
        lambda: f64,
        seed: u64,
    ) -> Result<Self> {
        let mut r = rng::stream(seed, rng::TAG_PROBLEM, 0);
        let centers =
            Array2::from_shape_simple_fn((m, d), || r.random_range(-half_width..=half_width));
        MixtureSpec::new(centers, sigma, lambda)
    }

    pub fn dim(&self) -> usize {
        self.centers.ncols()
    }
}

#[derive(Debug, Clone)]
pub struct MixturePotential {
    centers: Array2<f64>,
    sigma: f64,
}

impl MixturePotential {
    fn log_terms(&self, x: ArrayView1<f64>) -> Vec<f64> {
        let s2 = 2.0 * self.sigma * self.sigma;
        self.centers
            .outer_iter()
            .map(|c| {
                -c.iter()
                    .zip(x.iter())
                    .map(|(a, b)| (b - a) * (b - a))
                    .sum::<f64>()
                    / s2
            })
            .collect()
    }
}

impl SmoothPotential for MixturePotential {
    fn value(&self, x: ArrayView1<f64>) -> f64 {
        -logsumexp(&self.log_terms(x)).expect("mixture has at least one center")
    }

    fn grad(&self, x: ArrayView1<f64>) -> Array1<f64> {
        let mut w = self.log_terms(x);
        if softmax_in_place(&mut w).is_err() {
            return Array1::from_elem(x.len(), f64::NAN);
        }
        let mut g = x.to_owned();
        g.scaled_add(-1.0, &Array1::from(w).dot(&self.centers));
        g / (self.sigma * self.sigma)
    }
}

pub fn mixture_target(spec: &MixtureSpec, beta: f64) -> TargetSpec {
    TargetSpec::new(
        Arc::new(MixturePotential {
            centers: spec.centers.clone(),
            sigma: spec.sigma,
        }),
        Nonsmooth::L1 {
            lambda: spec.lambda,
        },
        beta,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::finite_difference_grad;
    use approx::assert_abs_diff_eq;
    use ndarray::{arr1, arr2};

    #[test]
    fn single_center_gradient() {
        let spec = MixtureSpec::new(arr2(&[[0.0, 0.0]]), 4.0, 0.1).unwrap();
        let t = mixture_target(&spec, 1.0);
        let g = t.smooth.grad(arr1(&[3.0, -1.0]).view());
        assert_abs_diff_eq!(g[0], 3.0 / 16.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g[1], -1.0 / 16.0, epsilon = 1e-15);
    }

    #[test]
    fn symmetric_centers_perpendicular_component() {
        let spec = MixtureSpec::new(arr2(&[[-2.0, 0.0], [2.0, 0.0]]), 1.5, 0.0).unwrap();
        let t = mixture_target(&spec, 1.0);
        let g = t.smooth.grad(arr1(&[0.0, 0.7]).view());
        assert_abs_diff_eq!(g[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g[1], 0.7 / 2.25, epsilon = 1e-15);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let spec = MixtureSpec::random(3, 4, 10.0, 4.0, 0.1, 5).unwrap();
        let t = mixture_target(&spec, 1.0);
        let mut r = rng::stream(1, 0, 0);
        for _ in 0..10 {
            let x = Array1::from_shape_simple_fn(3, || r.random_range(-12.0..12.0));
            let fd = finite_difference_grad(t.smooth.as_ref(), x.view(), 1e-5);
            let g = t.smooth.grad(x.view());
            for (a, b) in g.iter().zip(fd.iter()) {
                assert!((a - b).abs() <= 1e-6 * b.abs().max(1.0), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn value_is_invariant_under_center_permutation() {
        let spec = MixtureSpec::random(2, 4, 10.0, 4.0, 0.1, 8).unwrap();
        let reversed = MixtureSpec::new(
            spec.centers.slice(ndarray::s![..;-1, ..]).to_owned(),
            4.0,
            0.1,
        )
        .unwrap();
        let x = arr1(&[1.5, -3.0]);
        let a = mixture_target(&spec, 1.0).smooth.value(x.view());
        let b = mixture_target(&reversed, 1.0).smooth.value(x.view());
        assert_abs_diff_eq!(a, b, epsilon = 1e-14);
    }

    #[test]
    fn far_away_points_stay_finite() {
        let spec = MixtureSpec::random(2, 4, 10.0, 0.5, 0.1, 8).unwrap();
        let t = mixture_target(&spec, 1.0);
        let x = arr1(&[1e4, -1e4]);
        assert!(t.smooth.value(x.view()).is_finite());
        assert!(t.smooth.grad(x.view()).iter().all(|v| v.is_finite()));
    }

    #[test]
    fn invalid_specs() {
        assert!(MixtureSpec::new(Array2::zeros((0, 2)), 1.0, 0.0).is_err());
        assert!(MixtureSpec::new(Array2::zeros((1, 2)), 0.0, 0.0).is_err());
        assert!(MixtureSpec::new(Array2::zeros((1, 2)), 1.0, -1.0).is_err());
    }
}
