//! Kernel validation: each kernel is compared with an independent oracle
//! (quadrature, brute-force enumeration, or a closed-form score).

use brwp_core::kernels::{
    gaussian_kde_score, interaction_general_prox, interaction_l1_delta, kernel_exponent_l1,
    separable_interaction_l1, Density1D, GaussianKernelParams, InteractionMatrix, Normalizer,
    Potential1D, ScoreOracle,
};
use brwp_core::rng;
use brwp_core::target::L1Norm;
use brwp_core::ProxParams;
use ndarray::{arr1, Array2};
use rand::Rng;
use serde::Serialize;

use crate::error::HarnessError;

const TAG_VALIDATE: u64 = 0x7661_6c69;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    /// Pass when the measurement is at most the tolerance.
    AtMost,
    /// Pass when the measurement is at least the tolerance.
    AtLeast,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub tolerance: f64,
    pub comparison: Comparison,
    pub detail: String,
}

impl CheckResult {
    fn new(
        name: &str,
        measured: f64,
        tolerance: f64,
        comparison: Comparison,
        detail: String,
    ) -> Self {
        let passed = match comparison {
            Comparison::AtMost => measured <= tolerance,
            Comparison::AtLeast => measured >= tolerance,
        };
        CheckResult {
            name: name.to_string(),
            passed,
            measured,
            tolerance,
            comparison,
            detail,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub seed: u64,
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub const GAUSSIAN_SCORE_TOL: f64 = 1e-6;
pub const SEPARABLE_TOL: f64 = 1e-12;
pub const REDUCTION_TOL: f64 = 1e-14;
pub const ROW_SUM_TOL: f64 = 1e-12;
pub const SMOOTH_ORDER_MIN: f64 = 1.5;
pub const L1_ORDER_MIN: f64 = 0.4;

/// Step sizes `0.1 / 2^k` and evaluation points of the score-order checks.
pub const ORDER_STEPS: [f64; 5] = [0.1, 0.05, 0.025, 0.0125, 0.00625];
pub const ORDER_POINTS: [f64; 3] = [-0.7, 0.3, 1.2];

/// Gaussian-KDE score against the quadrature oracle over random draws of
/// `h ∈ [1e-3, 0.1]`, `λ ∈ {0, 0.5, 1}`, `σ ∈ [0.5, 2]`.
pub fn check_gaussian_score(seed: u64) -> Result<CheckResult, HarnessError> {
    let mut r = rng::stream(seed, TAG_VALIDATE, 1);
    let mut worst: f64 = 0.0;
    let draws = 20;
    for _ in 0..draws {
        let h = r.random_range(1e-3..0.1);
        let lambda = [0.0, 0.5, 1.0][r.random_range(0..3)];
        let sigma = r.random_range(0.5..2.0);
        let centers: Vec<f64> = (0..4).map(|_| r.random_range(-2.0..2.0)).collect();
        let query = r.random_range(-3.0..3.0);
        let p = ProxParams::new(lambda, h, 1.0)?;
        let k = GaussianKernelParams::new(sigma)?;
        let x =
            Array2::from_shape_vec((centers.len(), 1), centers.clone()).expect("column of centers");
        let closed = gaussian_kde_score(x.view(), arr1(&[query]).view(), &p, &k)?[0];
        let oracle = ScoreOracle::new(
            Density1D::Kde { centers, sigma },
            Potential1D::L1 { lambda },
            h,
            1.0,
            Normalizer::Laplace,
        )?
        .score(query)?;
        worst = worst.max((closed - oracle).abs() / oracle.abs().max(f64::MIN_POSITIVE));
    }
    Ok(CheckResult::new(
        "gaussian_score_vs_quadrature",
        worst,
        GAUSSIAN_SCORE_TOL,
        Comparison::AtMost,
        format!("max relative error over {draws} random draws"),
    ))
}

/// Weighted mean over the full tensor-product point set, by enumeration.
fn enumerated_mean(x: &Array2<f64>, i: usize, p: &ProxParams) -> Vec<f64> {
    let (n, d) = x.dim();
    let total = n.pow(d as u32);
    let mut logits = Vec::with_capacity(total);
    let mut points = Vec::with_capacity(total);
    for flat in 0..total {
        let mut rem = flat;
        let mut point = Vec::with_capacity(d);
        for l in 0..d {
            point.push(x[[rem % n, l]]);
            rem /= n;
        }
        logits.push(kernel_exponent_l1(x.row(i), arr1(&point).view(), p));
        points.push(point);
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logits.iter().map(|u| (u - max).exp()).collect();
    let z: f64 = w.iter().sum();
    (0..d)
        .map(|l| {
            w.iter()
                .zip(&points)
                .map(|(wi, pt)| wi * pt[l])
                .sum::<f64>()
                / z
        })
        .collect()
}

fn random_ensemble(n: usize, d: usize, seed: u64, index: u64) -> Array2<f64> {
    let mut r = rng::stream(seed, TAG_VALIDATE, index);
    Array2::from_shape_fn((n, d), |_| r.random_range(-2.0..2.0))
}

/// Separable kernel means against `N^d` enumeration.
pub fn check_separable(seed: u64) -> Result<CheckResult, HarnessError> {
    let p = ProxParams::new(0.9, 0.2, 1.0)?;
    let mut worst: f64 = 0.0;
    for n in 2..=4 {
        for d in 1..=3 {
            let x = random_ensemble(n, d, seed, 100 + (10 * n + d) as u64);
            let m = InteractionMatrix::Separable(separable_interaction_l1(x.view(), &p)?);
            let means = m.weighted_means(x.view())?;
            for i in 0..n {
                for (l, b) in enumerated_mean(&x, i, &p).into_iter().enumerate() {
                    worst = worst.max((means[[i, l]] - b).abs());
                }
            }
        }
    }
    Ok(CheckResult::new(
        "separable_vs_enumeration",
        worst,
        SEPARABLE_TOL,
        Comparison::AtMost,
        "max abs error over (N, d) in {2,3,4} x {1,2,3}".into(),
    ))
}

/// General-prox kernel with `g = λ‖·‖₁` against the L1 kernel, plus row sums
/// of every matrix produced along the way.
pub fn check_reduction(seed: u64) -> Result<(CheckResult, CheckResult), HarnessError> {
    let mut r = rng::stream(seed, TAG_VALIDATE, 2);
    let mut worst: f64 = 0.0;
    let mut row_dev: f64 = 0.0;
    for k in 0..10 {
        let n = r.random_range(2..9);
        let d = r.random_range(1..5);
        let lambda = r.random_range(0.0..2.0);
        let h = r.random_range(0.01..0.3);
        let x = random_ensemble(n, d, seed, 200 + k);
        let p = ProxParams::new(lambda, h, 1.0)?;
        let a = interaction_l1_delta(x.view(), &p)?;
        let b = interaction_general_prox(x.view(), &p, &L1Norm { lambda })?;
        worst = a
            .iter()
            .zip(b.iter())
            .fold(worst, |w, (u, v)| w.max((u - v).abs()));
        let s = InteractionMatrix::Separable(separable_interaction_l1(x.view(), &p)?);
        for m in [InteractionMatrix::Full(a), InteractionMatrix::Full(b), s] {
            row_dev = row_dev.max(m.max_row_sum_deviation());
        }
    }
    Ok((
        CheckResult::new(
            "general_prox_reduces_to_l1",
            worst,
            REDUCTION_TOL,
            Comparison::AtMost,
            "max abs entry difference over 10 random ensembles".into(),
        ),
        CheckResult::new(
            "row_sums",
            row_dev,
            ROW_SUM_TOL,
            Comparison::AtMost,
            "max |row sum - 1| over delta, general and separable matrices".into(),
        ),
    ))
}

/// Least-squares slope of `log err` against `log h`.
pub fn ls_slope(h: &[f64], err: &[f64]) -> f64 {
    let x: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = err.iter().map(|v| v.ln()).collect();
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Max error over [`ORDER_POINTS`] of the kernel-formula score for each step
/// in [`ORDER_STEPS`], with `ρ₀ = N(0, 1)` and `β = 1`.
pub fn score_errors(
    potential: Potential1D,
    exact: impl Fn(f64) -> f64,
) -> Result<Vec<f64>, HarnessError> {
    ORDER_STEPS
        .iter()
        .map(|&h| {
            let o = ScoreOracle::new(
                Density1D::Normal {
                    mean: 0.0,
                    var: 1.0,
                },
                potential,
                h,
                1.0,
                Normalizer::Exact,
            )?;
            ORDER_POINTS
                .iter()
                .try_fold(0.0f64, |w, &x| Ok(w.max((o.score(x)? - exact(x)).abs())))
        })
        .collect()
}

fn order_check(name: &str, errors: Vec<f64>, min: f64, what: &str) -> CheckResult {
    let slope = ls_slope(&ORDER_STEPS, &errors);
    let shown: Vec<String> = errors.iter().map(|e| format!("{e:.3e}")).collect();
    CheckResult::new(
        name,
        slope,
        min,
        Comparison::AtLeast,
        format!("{what}; errors for h = 0.1/2^k: [{}]", shown.join(", ")),
    )
}

/// Smooth case: `V = x²/2` keeps `N(0, 1)` stationary, so the exact score at
/// time `h` is `-x`.
pub fn check_smooth_order() -> Result<CheckResult, HarnessError> {
    let errors = score_errors(Potential1D::Quadratic { curvature: 1.0 }, |x| -x)?;
    Ok(order_check(
        "score_order_smooth",
        errors,
        SMOOTH_ORDER_MIN,
        "least-squares slope vs the stationary score",
    ))
}

/// `V = |x|` with `ρ₀ = N(0, 1)`: kernel score against `∇log ρ₀ = -x`.
pub fn check_l1_order() -> Result<CheckResult, HarnessError> {
    let errors = score_errors(Potential1D::L1 { lambda: 1.0 }, |x| -x)?;
    Ok(order_check(
        "score_order_l1",
        errors,
        L1_ORDER_MIN,
        "least-squares slope vs the initial score",
    ))
}

pub fn validate_kernels(seed: u64) -> Result<ValidationReport, HarnessError> {
    let (reduction, rows) = check_reduction(seed)?;
    let checks = vec![
        check_gaussian_score(seed)?,
        check_separable(seed)?,
        reduction,
        rows,
        check_smooth_order()?,
        check_l1_order()?,
    ];
    Ok(ValidationReport { seed, checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law_is_exact() {
        let h = [0.1, 0.05, 0.025];
        let e: Vec<f64> = h.iter().map(|v: &f64| 3.0 * v.powi(2)).collect();
        assert!((ls_slope(&h, &e) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn enumeration_of_one_dimension_is_the_delta_kernel() {
        let x = random_ensemble(3, 1, 5, 0);
        let p = ProxParams::new(0.5, 0.1, 1.0).unwrap();
        let m = interaction_l1_delta(x.view(), &p).unwrap();
        for i in 0..3 {
            let direct: f64 = (0..3).map(|j| m[[i, j]] * x[[j, 0]]).sum();
            assert!((enumerated_mean(&x, i, &p)[0] - direct).abs() < 1e-14);
        }
    }

    #[test]
    fn comparison_direction() {
        assert!(CheckResult::new("a", 1.0, 2.0, Comparison::AtMost, String::new()).passed);
        assert!(!CheckResult::new("a", 1.0, 2.0, Comparison::AtLeast, String::new()).passed);
    }
}
