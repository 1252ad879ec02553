//! BRWP-splitting: explicit gradient step on `f`, then a prox step on `g`
//! whose diffusion comes from the kernel interaction.

use ndarray::parallel::prelude::*;
use ndarray::{Array2, Axis, Zip};

use super::{check_finite, run_sampler, SamplerConfig, Stepper};
use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::kernels::{
    gaussian_kde_score, interaction_from_prox, interaction_l1_delta, prox_and_value,
    separable_interaction_l1, GaussianKernelParams, InteractionMatrix, KernelVariant,
};
use crate::prox::{shrink, shrink_scalar, ProxParams};
use crate::target::{L1Norm, Nonsmooth, ProxFunction, TargetSpec};

/// `x - h ∇f(x)` for every particle.
pub(crate) fn gradient_half_step(x: &Array2<f64>, t: &TargetSpec, h: f64) -> Result<Array2<f64>> {
    let d = x.ncols();
    let mut out = x.clone();
    out.axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .try_for_each(|(i, mut row)| -> Result<()> {
            let g = t.smooth.grad(x.row(i));
            if g.len() != d {
                return Err(Error::shape("f_grad output", d, g.len()));
            }
            row.scaled_add(-h, &g);
            Ok(())
        })?;
    Ok(out)
}

fn l1_weight(t: &TargetSpec, variant: KernelVariant) -> Result<f64> {
    t.nonsmooth.l1_weight().ok_or_else(|| {
        Error::Config(format!(
            "kernel variant `{variant}` needs an L1 nonsmooth term; use `general` for other g"
        ))
    })
}

/// `x½ + ½ (prox(x½) - Σ_j M_ij x½_j)`.
fn averaged_update(
    half: &Array2<f64>,
    prox: &Array2<f64>,
    m: &InteractionMatrix,
) -> Result<Array2<f64>> {
    let means = m.weighted_means(half.view())?;
    let mut out = half.clone();
    Zip::from(&mut out)
        .and(prox)
        .and(&means)
        .for_each(|o, &p, &mean| *o += 0.5 * (p - mean));
    Ok(out)
}

/// One BRWP-splitting iteration.
pub fn brwp_step(e: &Ensemble, t: &TargetSpec, c: &SamplerConfig) -> Result<Ensemble> {
    let h = c.h;
    let iteration = e.iteration + 1;
    let half = gradient_half_step(&e.positions, t, h)?;
    check_finite(&half, iteration)?;

    let next = match c.kernel_variant {
        KernelVariant::Delta => {
            let p = ProxParams::new(l1_weight(t, c.kernel_variant)?, h, t.beta)?;
            let m = InteractionMatrix::Full(interaction_l1_delta(half.view(), &p)?);
            averaged_update(&half, &half.mapv(|v| shrink_scalar(v, p.threshold())), &m)?
        }
        KernelVariant::Separable => {
            let p = ProxParams::new(l1_weight(t, c.kernel_variant)?, h, t.beta)?;
            let m = InteractionMatrix::Separable(separable_interaction_l1(half.view(), &p)?);
            averaged_update(&half, &half.mapv(|v| shrink_scalar(v, p.threshold())), &m)?
        }
        KernelVariant::General => {
            let p = ProxParams::new(t.nonsmooth.l1_weight().unwrap_or(0.0), h, t.beta)?;
            let l1;
            let g: &dyn ProxFunction = match &t.nonsmooth {
                Nonsmooth::L1 { lambda } => {
                    l1 = L1Norm { lambda: *lambda };
                    &l1
                }
                Nonsmooth::General(g) => g.as_ref(),
            };
            let (prox, g_values) = prox_and_value(half.view(), h, g)?;
            let m = interaction_from_prox(half.view(), prox.view(), &g_values, &p)?;
            averaged_update(&half, &prox, &InteractionMatrix::Full(m))?
        }
        KernelVariant::Gaussian => {
            let p = ProxParams::new(l1_weight(t, c.kernel_variant)?, h, t.beta)?;
            let k = match c.kde_sigma {
                Some(s) => GaussianKernelParams::new(s)?,
                None => GaussianKernelParams::rule_of_thumb(half.view()),
            };
            let step = h / t.beta;
            let mut out = half.clone();
            out.axis_iter_mut(Axis(0))
                .into_par_iter()
                .enumerate()
                .try_for_each(|(i, mut row)| -> Result<()> {
                    let xi = half.row(i);
                    let score = gaussian_kde_score(half.view(), xi, &p, &k)?;
                    let s = shrink(xi, p.threshold());
                    Zip::from(&mut row)
                        .and(&s)
                        .and(&score)
                        .for_each(|o, &si, &sc| *o = si - step * sc);
                    Ok(())
                })?;
            out
        }
    };
    check_finite(&next, iteration)?;
    Ok(Ensemble {
        positions: next,
        iteration,
    })
}

/// BRWP-splitting as a [`Stepper`].
pub struct Brwp<'a> {
    pub target: &'a TargetSpec,
    pub config: &'a SamplerConfig,
}

impl Stepper for Brwp<'_> {
    fn step(&mut self, e: &Ensemble) -> Result<Ensemble> {
        brwp_step(e, self.target, self.config)
    }
}

/// Runs `c.n_iters` BRWP steps; `hook` sees every iterate including `e0`.
pub fn brwp_run(
    e0: Ensemble,
    t: &TargetSpec,
    c: &SamplerConfig,
    hook: impl FnMut(&Ensemble) -> Result<()>,
) -> Result<Ensemble> {
    run_sampler(
        &mut Brwp {
            target: t,
            config: c,
        },
        e0,
        c.n_iters,
        hook,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samplers::init_ensemble;
    use crate::target::{FnPotential, IsotropicQuadratic, ZeroPotential};
    use approx::assert_abs_diff_eq;
    use ndarray::{arr1, arr2, Array1, ArrayView1};
    use std::sync::Arc;

    fn target(smooth: Arc<dyn crate::target::SmoothPotential>, lambda: f64) -> TargetSpec {
        TargetSpec::new(smooth, Nonsmooth::L1 { lambda }, 1.0)
    }

    fn config(h: f64, variant: KernelVariant) -> SamplerConfig {
        SamplerConfig::new(h, 1, 1, variant, 0).unwrap()
    }

    #[test]
    fn single_particle_step() {
        let e = Ensemble::new(arr2(&[[1.0]])).unwrap();
        let t = target(Arc::new(ZeroPotential), 3.0);
        for v in [
            KernelVariant::Delta,
            KernelVariant::Separable,
            KernelVariant::General,
        ] {
            let next = brwp_step(&e, &t, &config(0.1, v)).unwrap();
            assert_abs_diff_eq!(next.positions[[0, 0]], 0.85, epsilon = 1e-15);
            assert_eq!(next.iteration, 1);
        }
    }

    #[test]
    fn symmetric_pair_stays_symmetric() {
        let e = Ensemble::new(arr2(&[[-0.7], [0.7]])).unwrap();
        let t = target(Arc::new(ZeroPotential), 0.0);
        let next = brwp_step(&e, &t, &config(0.1, KernelVariant::Delta)).unwrap();
        assert_abs_diff_eq!(
            next.positions[[0, 0]],
            -next.positions[[1, 0]],
            epsilon = 1e-15
        );
        // pure diffusion pushes the pair apart
        assert!(next.positions[[1, 0]] > 0.7);
    }

    /// Straight-line evaluation of the update for `f = ‖x‖²/2 + ‖x - 1‖²/4`.
    fn naive_step(x: &[f64], h: f64, lambda: f64) -> Vec<f64> {
        let grad = |v: f64| v + 0.5 * (v - 1.0);
        let half: Vec<f64> = x.iter().map(|&v| v - h * grad(v)).collect();
        let tau = lambda * h;
        let s = |v: f64| v.signum() * (v.abs() - tau).max(0.0);
        let n = x.len();
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let u: Vec<f64> = (0..n)
                .map(|j| {
                    let sj = s(half[j]);
                    -0.5 * (((half[i] - half[j]).powi(2) - (sj - half[j]).powi(2)) / (2.0 * h)
                        - lambda * sj.abs())
                })
                .collect();
            let max = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let (mut num, mut den) = (0.0, 0.0);
            for j in 0..n {
                let a = (u[j] - max).exp();
                num += a * half[j];
                den += a;
            }
            out.push(half[i] + 0.5 * (s(half[i]) - num / den));
        }
        out
    }

    #[test]
    fn matches_straight_line_oracle() {
        let e = init_ensemble(5, arr1(&[0.0]).view(), 42, 1.5).unwrap();
        let f = FnPotential {
            value: |x: ArrayView1<f64>| {
                0.5 * x.dot(&x) + 0.25 * x.mapv(|v| (v - 1.0).powi(2)).sum()
            },
            grad: |x: ArrayView1<f64>| x.mapv(|v| v + 0.5 * (v - 1.0)),
        };
        let t = target(Arc::new(f), 0.8);
        let c = config(0.07, KernelVariant::Delta);
        let next = brwp_step(&e, &t, &c).unwrap();
        let naive = naive_step(e.positions.column(0).as_slice().unwrap(), 0.07, 0.8);
        for (a, b) in next.positions.column(0).iter().zip(naive.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn gaussian_variant_matches_score_form() {
        let e = init_ensemble(6, arr1(&[0.5, -0.5]).view(), 9, 1.0).unwrap();
        let t = target(Arc::new(IsotropicQuadratic { curvature: 1.0 }), 0.5);
        let mut c = config(0.05, KernelVariant::Gaussian);
        c.kde_sigma = Some(0.4);
        let next = brwp_step(&e, &t, &c).unwrap();
        let half = e.positions.mapv(|v| v - 0.05 * v);
        let p = ProxParams::new(0.5, 0.05, 1.0).unwrap();
        let k = GaussianKernelParams::new(0.4).unwrap();
        for i in 0..6 {
            let score = gaussian_kde_score(half.view(), half.row(i), &p, &k).unwrap();
            let expected: Array1<f64> = shrink(half.row(i), p.threshold()) - score * 0.05;
            for l in 0..2 {
                assert_abs_diff_eq!(next.positions[[i, l]], expected[l], epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn variant_mismatch_is_config_error() {
        let e = Ensemble::new(arr2(&[[1.0]])).unwrap();
        let t = TargetSpec::new(
            Arc::new(ZeroPotential),
            Nonsmooth::General(Arc::new(crate::target::ZeroProx)),
            1.0,
        );
        for v in [
            KernelVariant::Delta,
            KernelVariant::Separable,
            KernelVariant::Gaussian,
        ] {
            assert!(matches!(
                brwp_step(&e, &t, &config(0.1, v)),
                Err(Error::Config(_))
            ));
        }
        assert!(brwp_step(&e, &t, &config(0.1, KernelVariant::General)).is_ok());
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let e = Ensemble::new(arr2(&[[1.0], [2.0]])).unwrap();
        let f = FnPotential {
            value: |_x: ArrayView1<f64>| 0.0,
            grad: |x: ArrayView1<f64>| x.mapv(|v| if v > 1.5 { f64::NAN } else { 0.0 }),
        };
        let t = target(Arc::new(f), 1.0);
        let err = brwp_step(&e, &t, &config(0.1, KernelVariant::Delta)).unwrap_err();
        assert!(
            matches!(&err, Error::Numeric(msg) if msg.contains("particle 1") && msg.contains("iteration 1"))
        );
    }

    #[test]
    fn zero_iterations_return_initial() {
        let e = init_ensemble(4, arr1(&[0.0, 0.0]).view(), 1, 1.0).unwrap();
        let t = target(Arc::new(ZeroPotential), 1.0);
        let mut c = config(0.1, KernelVariant::Delta);
        c.n_iters = 0;
        let mut calls = 0;
        let out = brwp_run(e.clone(), &t, &c, |_| {
            calls += 1;
            Ok(())
        })
        .unwrap();
        assert_eq!(out, e);
        assert_eq!(calls, 1);
    }

    #[test]
    fn gaussian_target_is_stationary() {
        let e = init_ensemble(200, arr1(&[0.0, 0.0]).view(), 5, 1.0).unwrap();
        let t = target(Arc::new(IsotropicQuadratic { curvature: 1.0 }), 0.0);
        let mut c = config(0.05, KernelVariant::Delta);
        c.n_iters = 400;
        let out = brwp_run(e, &t, &c, |_| Ok(())).unwrap();
        let mean = out.mean();
        assert!(mean.dot(&mean).sqrt() <= 0.1, "mean {mean}");
        for l in 0..2 {
            let var = out.positions.column(l).var(0.0);
            assert!((0.8..=1.2).contains(&var), "variance {var}");
        }
    }

    #[test]
    fn run_is_deterministic() {
        let e = init_ensemble(10, arr1(&[1.0, -2.0]).view(), 3, 1.0).unwrap();
        let t = target(Arc::new(IsotropicQuadratic { curvature: 1.0 }), 0.5);
        let mut c = config(0.05, KernelVariant::Separable);
        c.n_iters = 20;
        let a = brwp_run(e.clone(), &t, &c, |_| Ok(())).unwrap();
        let b = brwp_run(e, &t, &c, |_| Ok(())).unwrap();
        assert_eq!(a, b);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn mean_contracts_on_quadratic(seed in 0u64..500, h in 0.01f64..0.9) {
                let e = init_ensemble(8, arr1(&[2.0, -1.0]).view(), seed, 1.0).unwrap();
                let t = target(Arc::new(IsotropicQuadratic { curvature: 1.0 }), 0.0);
                let next = brwp_step(&e, &t, &config(h, KernelVariant::Delta)).unwrap();
                let (a, b) = (e.mean(), next.mean());
                prop_assert!(b.dot(&b).sqrt() <= a.dot(&a).sqrt() + 1e-12);
            }

            #[test]
            fn permutation_commutes(seed in 0u64..500, shift in 1usize..6) {
                let e = init_ensemble(6, arr1(&[0.3, 0.0, -0.2]).view(), seed, 1.0).unwrap();
                let perm: Vec<usize> = (0..6).map(|i| (i + shift) % 6).collect();
                let ep = Ensemble::new(e.positions.select(Axis(0), &perm)).unwrap();
                let t = target(Arc::new(IsotropicQuadratic { curvature: 0.5 }), 1.0);
                let c = config(0.05, KernelVariant::Delta);
                let a = brwp_step(&e, &t, &c).unwrap().positions.select(Axis(0), &perm);
                let b = brwp_step(&ep, &t, &c).unwrap().positions;
                for (u, v) in a.iter().zip(b.iter()) {
                    prop_assert!((u - v).abs() < 1e-12);
                }
            }

            #[test]
            fn dead_zone_column_has_no_prox_term(seed in 0u64..500) {
                let (lambda, h) = (5.0, 0.1);
                let mut x = init_ensemble(5, arr1(&[0.0, 3.0]).view(), seed, 0.2).unwrap().positions;
                x.column_mut(0).mapv_inplace(|v| v.clamp(-0.49, 0.49));
                let e = Ensemble::new(x.clone()).unwrap();
                let t = target(Arc::new(ZeroPotential), lambda);
                let next = brwp_step(&e, &t, &config(h, KernelVariant::Separable)).unwrap();
                let p = ProxParams::new(lambda, h, 1.0).unwrap();
                let m = separable_interaction_l1(x.view(), &p).unwrap();
                let mean = m.index_axis(Axis(0), 0).dot(&x.column(0));
                for i in 0..5 {
                    prop_assert!((next.positions[[i, 0]] - (x[[i, 0]] - 0.5 * mean[i])).abs() < 1e-14);
                }
            }
        }
    }
}
