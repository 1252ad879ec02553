//! Evaluation: exact mixture marginals, grid KDE and KL, 1-D W2, HPD
//! thresholds and image/parameter error norms.

use ndarray::ArrayView1;

use crate::error::{Error, Result};
use crate::problems::MixtureSpec;
use crate::prox::logsumexp;
use crate::special::log_gauss_integral;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1D {
    pub lo: f64,
    pub hi: f64,
    pub n_points: usize,
}

impl Grid1D {
    pub fn new(lo: f64, hi: f64, n_points: usize) -> Result<Self> {
        if !(lo < hi && lo.is_finite() && hi.is_finite()) || n_points < 2 {
            return Err(Error::Usage(format!(
                "invalid grid [{lo}, {hi}] with {n_points} points"
            )));
        }
        Ok(Grid1D { lo, hi, n_points })
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.n_points - 1) as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        if i + 1 == self.n_points {
            self.hi
        } else {
            self.lo + i as f64 * self.spacing()
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.point(i)).collect()
    }

    /// Trapezoid rule on the grid.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        let n = values.len();
        let inner: f64 = values[1..n - 1].iter().sum();
        self.spacing() * (inner + 0.5 * (values[0] + values[n - 1]))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityCurve {
    pub grid: Grid1D,
    pub density: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarginalCurve {
    pub curve: DensityCurve,
    /// `Z = ∫ exp(-(f + λ‖x‖₁))`.
    pub normalization: f64,
    /// Trapezoid mass of the normalized density on the grid.
    pub mass_captured: f64,
}

impl MarginalCurve {
    /// The grid misses more than 0.1% of the mass.
    pub fn grid_too_narrow(&self) -> bool {
        self.mass_captured < 0.999
    }
}

/// `ln ∫ exp(-(x - y)²/2σ² - λ|x|) dx`, split at 0 into two shifted Gaussians.
fn log_coordinate_integral(y: f64, sigma: f64, lambda: f64) -> f64 {
    let s2 = sigma * sigma;
    let r2s = std::f64::consts::SQRT_2 * sigma;
    let (up, down) = (y - lambda * s2, y + lambda * s2);
    let pos = log_gauss_integral(-up / r2s, f64::INFINITY) + (up * up - y * y) / (2.0 * s2);
    let neg =
        log_gauss_integral(f64::NEG_INFINITY, -down / r2s) + (down * down - y * y) / (2.0 * s2);
    r2s.ln() + logsumexp(&[pos, neg]).expect("two terms")
}

/// Exact marginal of `ρ* ∝ Σ_n exp(-‖x - y_n‖²/2σ²) exp(-λ‖x‖₁)` along `dim`.
pub fn mixture_marginal_exact(
    spec: &MixtureSpec,
    dim: usize,
    grid: Grid1D,
) -> Result<MarginalCurve> {
    let d = spec.dim();
    if dim >= d {
        return Err(Error::Usage(format!(
            "marginal dimension {dim} out of range for d = {d}"
        )));
    }
    let (sigma, lambda) = (spec.sigma, spec.lambda);
    let log_factors: Vec<Vec<f64>> = spec
        .centers
        .outer_iter()
        .map(|c| {
            c.iter()
                .map(|&y| log_coordinate_integral(y, sigma, lambda))
                .collect()
        })
        .collect();
    let log_z = logsumexp(
        &log_factors
            .iter()
            .map(|f| f.iter().sum())
            .collect::<Vec<f64>>(),
    )?;
    // every component's weight with the marginal coordinate integrated out
    let rest: Vec<f64> = log_factors
        .iter()
        .map(|f| f.iter().sum::<f64>() - f[dim])
        .collect();
    let density: Vec<f64> = grid
        .points()
        .into_iter()
        .map(|t| {
            let terms: Vec<f64> = spec
                .centers
                .column(dim)
                .iter()
                .zip(&rest)
                .map(|(&y, r)| r - (t - y) * (t - y) / (2.0 * sigma * sigma) - lambda * t.abs())
                .collect();
            (logsumexp(&terms).expect("at least one center") - log_z).exp()
        })
        .collect();
    let mass_captured = grid.integrate(&density);
    Ok(MarginalCurve {
        curve: DensityCurve { grid, density },
        normalization: log_z.exp(),
        mass_captured,
    })
}

/// `Σ_j exp(-(x - x_j)²/2H)` normalized on the grid; `H` is a variance.
pub fn kde_on_grid(samples: &[f64], bandwidth_var: f64, grid: Grid1D) -> Result<DensityCurve> {
    if samples.is_empty() {
        return Err(Error::Usage("kde_on_grid needs at least one sample".into()));
    }
    if bandwidth_var.is_nan() || bandwidth_var <= 0.0 {
        return Err(Error::Usage(format!(
            "KDE bandwidth must be positive, got {bandwidth_var}"
        )));
    }
    let mut density: Vec<f64> = grid
        .points()
        .into_iter()
        .map(|t| {
            samples
                .iter()
                .map(|&x| (-(t - x) * (t - x) / (2.0 * bandwidth_var)).exp())
                .sum()
        })
        .collect();
    let mass = grid.integrate(&density);
    if mass.is_nan() || mass <= 0.0 {
        return Err(Error::Numeric("KDE has no mass on the grid".into()));
    }
    density.iter_mut().for_each(|v| *v /= mass);
    Ok(DensityCurve { grid, density })
}

/// Floor below which grid densities are treated as this value before logs.
pub const KL_FLOOR: f64 = 1e-300;

/// Trapezoid `∫ p log(p/q)` after flooring and renormalizing both curves.
pub fn kl_on_grid(p: &DensityCurve, q: &DensityCurve) -> Result<f64> {
    if p.grid != q.grid || p.density.len() != q.density.len() || p.density.len() != p.grid.n_points
    {
        return Err(Error::Usage(
            "kl_on_grid needs both curves on the same grid".into(),
        ));
    }
    let prep = |v: &[f64]| -> Result<Vec<f64>> {
        let floored: Vec<f64> = v.iter().map(|&x| x.max(KL_FLOOR)).collect();
        let mass = p.grid.integrate(&floored);
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::Numeric(format!(
                "density curve has invalid mass {mass}"
            )));
        }
        Ok(floored.into_iter().map(|x| x / mass).collect())
    };
    let (pp, qq) = (prep(&p.density)?, prep(&q.density)?);
    let integrand: Vec<f64> = pp
        .iter()
        .zip(&qq)
        .map(|(&a, &b)| a * (a / b).ln())
        .collect();
    Ok(p.grid.integrate(&integrand))
}

/// `√(mean (a_(i) - b_(i))²)` over sorted samples.
pub fn w2_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Usage(format!(
            "w2_1d needs equal lengths, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::Usage("w2_1d needs at least one sample".into()));
    }
    let (mut sa, mut sb) = (a.to_vec(), b.to_vec());
    sa.sort_by(f64::total_cmp);
    sb.sort_by(f64::total_cmp);
    let ms: f64 = sa
        .iter()
        .zip(&sb)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.len() as f64;
    Ok(ms.sqrt())
}

/// Tolerance on the coverage comparison `k/N ≥ 1 - α`.
pub const HPD_COVERAGE_TOL: f64 = 1e-12;

/// Smallest sample value `η` whose empirical CDF reaches `1 - α`.
pub fn hpd_threshold(values: &[f64], alpha: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Usage("hpd_threshold needs a nonempty sample".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Usage(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let k = (1..=sorted.len())
        .find(|&k| k as f64 / n >= 1.0 - alpha - HPD_COVERAGE_TOL)
        .expect("k = N always reaches the coverage");
    Ok(sorted[k - 1])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorNorms {
    pub l1_rel: f64,
    pub rmse: f64,
    /// `f64::INFINITY` when `rmse == 0`.
    pub psnr: f64,
}

pub fn error_norms(est: ArrayView1<f64>, truth: ArrayView1<f64>) -> Result<ErrorNorms> {
    let peak = truth.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        - truth.iter().copied().fold(f64::INFINITY, f64::min);
    error_norms_with_peak(est, truth, peak)
}

pub fn error_norms_with_peak(
    est: ArrayView1<f64>,
    truth: ArrayView1<f64>,
    peak: f64,
) -> Result<ErrorNorms> {
    if est.len() != truth.len() || est.is_empty() {
        return Err(Error::Usage(format!(
            "error_norms needs equal nonzero lengths, got {} and {}",
            est.len(),
            truth.len()
        )));
    }
    let d = est.len() as f64;
    let (mut l1, mut sq) = (0.0, 0.0);
    for (a, b) in est.iter().zip(truth.iter()) {
        l1 += (a - b).abs();
        sq += (a - b) * (a - b);
    }
    let rmse = (sq / d).sqrt();
    let psnr = if rmse == 0.0 {
        f64::INFINITY
    } else {
        20.0 * (peak / rmse).log10()
    };
    Ok(ErrorNorms {
        l1_rel: l1 / d,
        rmse,
        psnr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{integrate, QuadOptions};
    use crate::rng;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use ndarray::{arr1, arr2, Array1};
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn wide() -> Grid1D {
        Grid1D::new(-30.0, 30.0, 2001).unwrap()
    }

    #[test]
    fn marginal_gaussian_case() {
        let spec = MixtureSpec::new(arr2(&[[0.0, 0.0]]), 4.0, 0.0).unwrap();
        let m = mixture_marginal_exact(&spec, 0, wide()).unwrap();
        assert_abs_diff_eq!(
            m.curve.density[1000],
            1.0 / (4.0 * (2.0 * std::f64::consts::PI).sqrt()),
            epsilon = 1e-12
        );
        assert!(!m.grid_too_narrow());
    }

    #[test]
    fn marginal_even_for_symmetric_centers() {
        let spec = MixtureSpec::new(arr2(&[[-3.0, 1.0], [3.0, 1.0]]), 2.0, 0.3).unwrap();
        let m = mixture_marginal_exact(&spec, 0, wide()).unwrap();
        let n = m.curve.density.len();
        for i in 0..n {
            assert_relative_eq!(
                m.curve.density[i],
                m.curve.density[n - 1 - i],
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn marginal_matches_quadrature() {
        let spec = MixtureSpec::new(arr2(&[[2.0]]), 4.0, 0.1).unwrap();
        let unnorm = |x: f64| (-(x - 2.0) * (x - 2.0) / 32.0 - 0.1 * x.abs()).exp();
        let z = integrate(unnorm, &[-200.0, 0.0, 2.0, 200.0], QuadOptions::default())
            .unwrap()
            .value;
        let grid = Grid1D::new(-20.0, 20.0, 81).unwrap();
        let m = mixture_marginal_exact(&spec, 0, grid).unwrap();
        assert_abs_diff_eq!(m.normalization, z, epsilon = 1e-7 * z);
        for (t, v) in grid.points().into_iter().zip(&m.curve.density) {
            assert_abs_diff_eq!(*v, unnorm(t) / z, epsilon = 1e-7);
        }
    }

    #[test]
    fn marginal_integrates_to_one_in_high_dimension() {
        let spec = MixtureSpec::random(20, 4, 10.0, 4.0, 0.1, 7).unwrap();
        for dim in [0, 19] {
            let m = mixture_marginal_exact(&spec, dim, Grid1D::new(-40.0, 40.0, 4001).unwrap())
                .unwrap();
            assert!((m.mass_captured - 1.0).abs() < 1e-3, "{}", m.mass_captured);
        }
        let narrow = mixture_marginal_exact(&spec, 0, Grid1D::new(-1.0, 1.0, 11).unwrap()).unwrap();
        assert!(narrow.grid_too_narrow());
    }

    #[test]
    fn kde_normalization_and_symmetry() {
        let single = kde_on_grid(&[0.0], 0.1, wide()).unwrap();
        assert_abs_diff_eq!(wide().integrate(&single.density), 1.0, epsilon = 1e-6);
        let pair = kde_on_grid(&[-1.0, 1.0], 0.1, wide()).unwrap();
        let n = pair.density.len();
        for i in 0..n {
            assert_relative_eq!(
                pair.density[i],
                pair.density[n - 1 - i],
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn kde_of_normal_samples() {
        let mut r = rng::stream(3, 0, 0);
        let samples: Vec<f64> = (0..10_000).map(|_| StandardNormal.sample(&mut r)).collect();
        let grid = Grid1D::new(-6.0, 6.0, 601).unwrap();
        let kde = kde_on_grid(&samples, 0.1, grid).unwrap();
        for (t, v) in grid.points().into_iter().zip(&kde.density) {
            let exact = (-t * t / 2.2).exp() / (2.2 * std::f64::consts::PI).sqrt();
            assert!((v - exact).abs() <= 0.02);
        }
    }

    fn gaussian_curve(grid: Grid1D, mean: f64) -> DensityCurve {
        let density = grid
            .points()
            .into_iter()
            .map(|t| (-(t - mean) * (t - mean) / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt())
            .collect();
        DensityCurve { grid, density }
    }

    #[test]
    fn kl_examples() {
        let p = gaussian_curve(wide(), 0.0);
        assert_eq!(kl_on_grid(&p, &p).unwrap(), 0.0);
        let q = gaussian_curve(wide(), 1.0);
        assert_abs_diff_eq!(kl_on_grid(&p, &q).unwrap(), 0.5, epsilon = 1e-3);
        let other = gaussian_curve(Grid1D::new(-1.0, 1.0, 2001).unwrap(), 0.0);
        assert!(kl_on_grid(&p, &other).is_err());
    }

    #[test]
    fn kl_is_nonnegative_on_random_pairs() {
        let grid = Grid1D::new(-5.0, 5.0, 101).unwrap();
        let mut r = rng::stream(5, 0, 0);
        for _ in 0..50 {
            let mut draw = || DensityCurve {
                grid,
                density: (0..101)
                    .map(|_| r.random_range(0.0..1.0f64).powi(3))
                    .collect(),
            };
            let (p, q) = (draw(), draw());
            assert!(kl_on_grid(&p, &q).unwrap() >= -1e-10);
        }
    }

    #[test]
    fn w2_examples() {
        assert_eq!(w2_1d(&[1.0, 2.0], &[2.0, 1.0]).unwrap(), 0.0);
        assert_eq!(w2_1d(&[0.0], &[1.0]).unwrap(), 1.0);
        let a = [0.3, -1.2, 4.0, 2.2];
        let shifted: Vec<f64> = a.iter().map(|v| v + 1.7).collect();
        assert_abs_diff_eq!(w2_1d(&a, &shifted).unwrap(), 1.7, epsilon = 1e-12);
        assert!(w2_1d(&a, &[1.0]).is_err());
    }

    /// Smallest sample value whose empirical CDF reaches `1 - α`, by scanning
    /// every candidate.
    fn brute_hpd(values: &[f64], alpha: f64) -> f64 {
        let n = values.len() as f64;
        values
            .iter()
            .copied()
            .filter(|&eta| {
                values.iter().filter(|&&v| v <= eta).count() as f64 / n
                    >= 1.0 - alpha - HPD_COVERAGE_TOL
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn hpd_examples() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(hpd_threshold(&v, 0.25).unwrap(), 3.0);
        assert_eq!(hpd_threshold(&v, 1.0 - 1e-9).unwrap(), 1.0);
        assert_eq!(hpd_threshold(&v, 1e-9).unwrap(), 4.0);
        assert!(hpd_threshold(&v, 0.0).is_err());
        assert!(hpd_threshold(&v, 1.0).is_err());
        assert!(hpd_threshold(&[], 0.5).is_err());
    }

    #[test]
    fn norms() {
        let t = arr1(&[0.0, 1.0, 2.0]);
        let same = error_norms(t.view(), t.view()).unwrap();
        assert_eq!((same.l1_rel, same.rmse), (0.0, 0.0));
        assert!(same.psnr.is_infinite());
        let off = error_norms((&t + 1.0).view(), t.view()).unwrap();
        assert_abs_diff_eq!(off.l1_rel, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(off.rmse, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(off.psnr, 20.0 * 2f64.log10(), epsilon = 1e-12);

        let mut r = rng::stream(9, 0, 0);
        let a = Array1::from_shape_simple_fn(50, || r.random_range(-1.0..1.0));
        let b = Array1::from_shape_simple_fn(50, || r.random_range(-1.0..1.0));
        let n = error_norms(a.view(), b.view()).unwrap();
        let mut l1 = 0.0;
        let mut sq = 0.0;
        for i in 0..50 {
            l1 += (a[i] - b[i]).abs();
            sq += (a[i] - b[i]).powi(2);
        }
        assert_abs_diff_eq!(n.l1_rel, l1 / 50.0, epsilon = 1e-12);
        assert_abs_diff_eq!(n.rmse, (sq / 50.0).sqrt(), epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn hpd_monotone_and_matches_brute_force(values in prop::collection::vec(-100.0f64..100.0, 1..60)) {
            let mut last = f64::INFINITY;
            for k in 1..20 {
                let alpha = 0.05 * k as f64;
                let eta = hpd_threshold(&values, alpha).unwrap();
                prop_assert_eq!(eta, brute_hpd(&values, alpha));
                prop_assert!(eta <= last);
                last = eta;
            }
            let mut rev = values.clone();
            rev.reverse();
            prop_assert_eq!(hpd_threshold(&rev, 0.3).unwrap(), hpd_threshold(&values, 0.3).unwrap());
        }

        #[test]
        fn w2_triangle(
            a in prop::collection::vec(-10.0f64..10.0, 8),
            b in prop::collection::vec(-10.0f64..10.0, 8),
            c in prop::collection::vec(-10.0f64..10.0, 8),
        ) {
            let ab = w2_1d(&a, &b).unwrap();
            let bc = w2_1d(&b, &c).unwrap();
            let ac = w2_1d(&a, &c).unwrap();
            prop_assert!(ac <= ab + bc + 1e-10);
        }
    }
}
