//! Iteration engines: BRWP-splitting, the TV primal-dual particle sampler
//! and the MYULA baseline.

mod brwp;
mod myula;
mod tv;

use ndarray::{Array2, ArrayView1};
use rand_distr::{Distribution, StandardNormal};

use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::kernels::KernelVariant;
use crate::rng;

pub use brwp::{brwp_run, brwp_step, Brwp};
pub use myula::{myula_step_with_noise, Myula};
pub use tv::{tv_pd_step, TvProblem, TvState};

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub h: f64,
    pub n_particles: usize,
    pub n_iters: usize,
    pub kernel_variant: KernelVariant,
    pub seed: u64,
    /// Gaussian-KDE bandwidth; the rule of thumb is used when absent.
    pub kde_sigma: Option<f64>,
}

impl SamplerConfig {
    pub fn new(
        h: f64,
        n_particles: usize,
        n_iters: usize,
        kernel_variant: KernelVariant,
        seed: u64,
    ) -> Result<Self> {
        let c = SamplerConfig {
            h,
            n_particles,
            n_iters,
            kernel_variant,
            seed,
            kde_sigma: None,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::Config(format!(
                "step size h must be positive, got {}",
                self.h
            )));
        }
        if self.n_particles == 0 {
            return Err(Error::Config("n_particles must be at least 1".into()));
        }
        if let Some(s) = self.kde_sigma {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Config(format!(
                    "kde_sigma must be positive, got {s}"
                )));
            }
        }
        Ok(())
    }
}

/// One step of an ensemble sampler.
pub trait Stepper {
    fn step(&mut self, e: &Ensemble) -> Result<Ensemble>;
}

/// Runs `n_iters` steps, calling `hook` on the initial ensemble and after
/// every step.
pub fn run_sampler(
    stepper: &mut dyn Stepper,
    e0: Ensemble,
    n_iters: usize,
    mut hook: impl FnMut(&Ensemble) -> Result<()>,
) -> Result<Ensemble> {
    hook(&e0)?;
    let mut e = e0;
    for _ in 0..n_iters {
        e = stepper.step(&e)?;
        hook(&e)?;
    }
    Ok(e)
}

/// I.i.d. `N(center, spread² I)` particles; particle `i` draws from its own
/// stream so the ensemble does not depend on `n` beyond truncation.
pub fn init_ensemble(
    n: usize,
    center: ArrayView1<f64>,
    seed: u64,
    spread: f64,
) -> Result<Ensemble> {
    let d = center.len();
    if !(spread >= 0.0 && spread.is_finite()) {
        return Err(Error::Config(format!(
            "initial spread must be nonnegative, got {spread}"
        )));
    }
    let mut x = Array2::zeros((n, d));
    for (i, mut row) in x.outer_iter_mut().enumerate() {
        let mut r = rng::stream(seed, rng::TAG_INIT, i as u64);
        for (v, c) in row.iter_mut().zip(center.iter()) {
            let z: f64 = StandardNormal.sample(&mut r);
            *v = c + spread * z;
        }
    }
    Ensemble::new(x)
}

/// Aborts on the first non-finite coordinate.
pub(crate) fn check_finite(x: &Array2<f64>, iteration: usize) -> Result<()> {
    if let Some(((i, l), v)) = x.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::Numeric(format!(
            "particle {i} became non-finite ({v}) in coordinate {l} at iteration {iteration}"
        )));
    }
    Ok(())
}
