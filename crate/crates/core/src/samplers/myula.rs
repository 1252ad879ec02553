//! Moreau-Yosida unadjusted Langevin baseline with `N` independent chains.

use ndarray::parallel::prelude::*;
use ndarray::{Array2, ArrayView2, Axis};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{check_finite, SamplerConfig, Stepper};
use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::rng;
use crate::target::TargetSpec;

/// `x - h∇f(x) - (x - prox_g(x, 2h))/2 + √(2h/β) ξ` with the noise supplied
/// by the caller (row `i` drives chain `i`).
pub fn myula_step_with_noise(
    e: &Ensemble,
    t: &TargetSpec,
    h: f64,
    noise: ArrayView2<f64>,
) -> Result<Ensemble> {
    if noise.dim() != e.positions.dim() {
        return Err(Error::shape(
            "myula noise",
            format!("{:?}", e.positions.dim()),
            format!("{:?}", noise.dim()),
        ));
    }
    let scale = (2.0 * h / t.beta).sqrt();
    let x = &e.positions;
    let mut out = Array2::zeros(x.dim());
    out.axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(i, mut row)| {
            let xi = x.row(i);
            let grad = t.smooth.grad(xi);
            let prox = t.nonsmooth.prox(xi, 2.0 * h);
            for l in 0..xi.len() {
                row[l] = xi[l] - h * grad[l] - 0.5 * (xi[l] - prox[l]) + scale * noise[[i, l]];
            }
        });
    let iteration = e.iteration + 1;
    check_finite(&out, iteration)?;
    Ok(Ensemble {
        positions: out,
        iteration,
    })
}

/// MYULA chains with one random stream per particle.
pub struct Myula<'a> {
    pub target: &'a TargetSpec,
    pub config: &'a SamplerConfig,
    streams: Vec<ChaCha8Rng>,
}

impl<'a> Myula<'a> {
    pub fn new(target: &'a TargetSpec, config: &'a SamplerConfig) -> Self {
        let streams = (0..config.n_particles)
            .map(|i| rng::stream(config.seed, rng::TAG_MYULA, i as u64))
            .collect();
        Myula {
            target,
            config,
            streams,
        }
    }
}

impl Stepper for Myula<'_> {
    fn step(&mut self, e: &Ensemble) -> Result<Ensemble> {
        let (n, d) = e.positions.dim();
        if n != self.streams.len() {
            return Err(Error::shape("myula ensemble", self.streams.len(), n));
        }
        let mut noise = Array2::zeros((n, d));
        noise
            .axis_iter_mut(Axis(0))
            .into_par_iter()
            .zip(self.streams.par_iter_mut())
            .for_each(|(mut row, r)| row.iter_mut().for_each(|v| *v = StandardNormal.sample(r)));
        myula_step_with_noise(e, self.target, self.config.h, noise.view())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelVariant;
    use crate::samplers::{init_ensemble, run_sampler};
    use crate::target::{IsotropicQuadratic, Nonsmooth, ZeroPotential};
    use approx::assert_abs_diff_eq;
    use ndarray::{arr1, arr2};
    use std::sync::Arc;

    fn target(smooth: Arc<dyn crate::target::SmoothPotential>, lambda: f64) -> TargetSpec {
        TargetSpec::new(smooth, Nonsmooth::L1 { lambda }, 1.0)
    }

    #[test]
    fn zero_noise_identity_and_euler() {
        let e = Ensemble::new(arr2(&[[1.0], [-0.3]])).unwrap();
        let zero = Array2::zeros((2, 1));
        let id = myula_step_with_noise(&e, &target(Arc::new(ZeroPotential), 0.0), 0.1, zero.view())
            .unwrap();
        assert_eq!(id.positions, e.positions);
        let q = myula_step_with_noise(
            &e,
            &target(Arc::new(IsotropicQuadratic { curvature: 1.0 }), 0.0),
            0.1,
            zero.view(),
        )
        .unwrap();
        assert_abs_diff_eq!(q.positions[[0, 0]], 0.9, epsilon = 1e-15);
    }

    #[test]
    fn l1_part_uses_double_step_prox() {
        // x - ½(x - S_{2λh}(x)) with λ=1, h=0.1, x=1: ½(1 + 0.8)
        let e = Ensemble::new(arr2(&[[1.0]])).unwrap();
        let out = myula_step_with_noise(
            &e,
            &target(Arc::new(ZeroPotential), 1.0),
            0.1,
            Array2::zeros((1, 1)).view(),
        )
        .unwrap();
        assert_abs_diff_eq!(out.positions[[0, 0]], 0.9, epsilon = 1e-15);
    }

    #[test]
    fn without_g_it_is_ula() {
        let e = init_ensemble(3, arr1(&[0.2, -1.0]).view(), 4, 1.0).unwrap();
        let t = target(Arc::new(IsotropicQuadratic { curvature: 2.0 }), 0.0);
        let noise = arr2(&[[0.1, -0.2], [1.0, 0.0], [-0.5, 0.3]]);
        let h = 0.05;
        let out = myula_step_with_noise(&e, &t, h, noise.view()).unwrap();
        let direct = &e.positions - &(&e.positions * (2.0 * h)) + &(&noise * (2.0 * h).sqrt());
        for (a, b) in out.positions.iter().zip(direct.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn increment_variance() {
        let n = 100_000;
        let h = 0.1;
        let c = SamplerConfig::new(h, n, 1, KernelVariant::Delta, 17).unwrap();
        let t = target(Arc::new(ZeroPotential), 0.0);
        let e = Ensemble::new(Array2::zeros((n, 1))).unwrap();
        let out = Myula::new(&t, &c).step(&e).unwrap();
        let var = out.positions.column(0).var(1.0);
        assert!((var / (2.0 * h) - 1.0).abs() < 0.03, "variance {var}");
    }

    #[test]
    fn seeded_runs_agree() {
        let c = SamplerConfig::new(0.05, 8, 10, KernelVariant::Delta, 99).unwrap();
        let t = target(Arc::new(IsotropicQuadratic { curvature: 1.0 }), 0.5);
        let e = init_ensemble(8, arr1(&[1.0, 1.0]).view(), 1, 1.0).unwrap();
        let a = run_sampler(&mut Myula::new(&t, &c), e.clone(), 10, |_| Ok(())).unwrap();
        let b = run_sampler(&mut Myula::new(&t, &c), e, 10, |_| Ok(())).unwrap();
        assert_eq!(a, b);
    }
}
