//! Proximal maps and numerically stable reductions shared by every kernel.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use ndarray::{Array1, Array2, ArrayView1, Zip};

use crate::error::{Error, Result};
use crate::special;

/// L1 weight, step size and inverse temperature of one proximal step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProxParams {
    pub lambda: f64,
    pub h: f64,
    pub beta: f64,
}

impl ProxParams {
    pub fn new(lambda: f64, h: f64, beta: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Usage(format!(
                "step size h must be positive, got {h}"
            )));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::Usage(format!("beta must be positive, got {beta}")));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::Usage(format!(
                "lambda must be nonnegative, got {lambda}"
            )));
        }
        Ok(ProxParams { lambda, h, beta })
    }

    /// Shrinkage threshold `λh`.
    pub fn threshold(&self) -> f64 {
        self.lambda * self.h
    }
}

#[inline]
pub fn shrink_scalar(x: f64, tau: f64) -> f64 {
    let mag = x.abs() - tau;
    if mag > 0.0 {
        mag.copysign(x)
    } else {
        0.0
    }
}

/// Soft thresholding `sign(x) max(|x| - τ, 0)`, componentwise.
pub fn shrink(x: ArrayView1<f64>, tau: f64) -> Array1<f64> {
    x.mapv(|v| shrink_scalar(v, tau))
}

/// Gradient of the Moreau envelope of `λ|·|₁`: `(x - S_{λh}(x)) / h`.
pub fn moreau_grad_l1(x: ArrayView1<f64>, p: &ProxParams) -> Array1<f64> {
    let tau = p.threshold();
    x.mapv(|v| (v - shrink_scalar(v, tau)) / p.h)
}

/// Componentwise projection onto the unit L∞ ball.
pub fn project_linf_ball(y: ArrayView1<f64>) -> Array1<f64> {
    y.mapv(|v| v / v.abs().max(1.0))
}

pub fn logsumexp(vals: &[f64]) -> Result<f64> {
    let max = vals
        .iter()
        .copied()
        .fold(None, |acc: Option<f64>, v| {
            Some(acc.map_or(v, |a| a.max(v)))
        })
        .ok_or_else(|| Error::Usage("logsumexp of an empty sequence".into()))?;
    if !max.is_finite() {
        return Ok(max);
    }
    let sum: f64 = vals.iter().map(|&v| (v - max).exp()).sum();
    Ok(max + sum.ln())
}

pub fn softmax_stable(vals: &[f64]) -> Result<Vec<f64>> {
    let mut out = vals.to_vec();
    softmax_in_place(&mut out)?;
    Ok(out)
}

/// Overwrites `vals` with `softmax(vals)`.
pub fn softmax_in_place(vals: &mut [f64]) -> Result<()> {
    let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if vals.is_empty() {
        return Err(Error::Usage("softmax of an empty sequence".into()));
    }
    if !max.is_finite() {
        return Err(Error::Numeric(format!(
            "softmax input has no finite maximum ({max})"
        )));
    }
    let mut sum = 0.0;
    for v in vals.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in vals.iter_mut() {
        *v /= sum;
    }
    Ok(())
}

/// `∫_a^b exp(-y²) dy`, with infinite endpoints allowed.
pub fn erf_interval(a: f64, b: f64) -> Result<f64> {
    if a.is_nan() || b.is_nan() || a > b {
        return Err(Error::Usage(format!(
            "erf_interval needs a <= b, got ({a}, {b})"
        )));
    }
    Ok(special::log_gauss_integral(a, b).exp())
}

/// Quadratic data-fit `½‖φ - F u‖²` with forward operator `F` (m×d).
#[derive(Debug, Clone, PartialEq)]
pub struct LinearDataFit {
    pub forward: Array2<f64>,
    pub observation: Array1<f64>,
}

impl LinearDataFit {
    pub fn new(forward: Array2<f64>, observation: Array1<f64>) -> Result<Self> {
        if forward.nrows() != observation.len() {
            return Err(Error::shape(
                "LinearDataFit",
                format!("observation of length {}", forward.nrows()),
                observation.len(),
            ));
        }
        if forward
            .iter()
            .chain(observation.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::Numeric(
                "LinearDataFit entries must be finite".into(),
            ));
        }
        Ok(LinearDataFit {
            forward,
            observation,
        })
    }

    pub fn dim(&self) -> usize {
        self.forward.ncols()
    }

    fn check_input(&self, u: ArrayView1<f64>) -> Result<()> {
        if u.len() != self.dim() {
            return Err(Error::shape("LinearDataFit input", self.dim(), u.len()));
        }
        Ok(())
    }

    pub fn residual(&self, u: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.check_input(u)?;
        Ok(self.forward.dot(&u) - &self.observation)
    }

    pub fn value(&self, u: ArrayView1<f64>) -> Result<f64> {
        let r = self.residual(u)?;
        Ok(0.5 * r.dot(&r))
    }

    pub fn grad(&self, u: ArrayView1<f64>) -> Result<Array1<f64>> {
        let r = self.residual(u)?;
        Ok(self.forward.t().dot(&r))
    }

    /// Factorizes `I + h FᵀF` once for repeated prox evaluations.
    pub fn prox_operator(&self, h: f64) -> Result<DataFitProx> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Usage(format!("prox step must be positive, got {h}")));
        }
        let d = self.dim();
        let mut system = self.forward.t().dot(&self.forward);
        system.mapv_inplace(|v| h * v);
        for i in 0..d {
            system[[i, i]] += 1.0;
        }
        let matrix = DMatrix::from_row_iterator(d, d, system.iter().copied());
        let factor = Cholesky::new(matrix)
            .ok_or_else(|| Error::Numeric("I + hFᵀF is not positive definite".into()))?;
        let offset = self.forward.t().dot(&self.observation) * h;
        Ok(DataFitProx { factor, offset, h })
    }
}

/// Cached exact prox of `½‖φ - F·‖²` with step `h`:
/// `(I + h FᵀF)⁻¹ (v + h Fᵀφ)`.
#[derive(Debug, Clone)]
pub struct DataFitProx {
    factor: Cholesky<f64, Dyn>,
    offset: Array1<f64>,
    h: f64,
}

impl DataFitProx {
    pub fn step(&self) -> f64 {
        self.h
    }

    pub fn apply(&self, v: ArrayView1<f64>) -> Result<Array1<f64>> {
        if v.len() != self.offset.len() {
            return Err(Error::shape("prox_l2_datafit", self.offset.len(), v.len()));
        }
        let mut rhs = DVector::zeros(v.len());
        Zip::from(rhs.as_mut_slice())
            .and(&v)
            .and(&self.offset)
            .for_each(|r, &a, &b| *r = a + b);
        let sol = self.factor.solve(&rhs);
        Ok(Array1::from_iter(sol.iter().copied()))
    }
}

pub fn prox_l2_datafit(v: ArrayView1<f64>, data: &LinearDataFit, h: f64) -> Result<Array1<f64>> {
    data.prox_operator(h)?.apply(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::{arr1, arr2};
    use proptest::prelude::*;

    #[test]
    fn shrink_examples() {
        assert_abs_diff_eq!(shrink(arr1(&[0.5]).view(), 0.3)[0], 0.2, epsilon = 1e-15);
        assert_eq!(shrink(arr1(&[-0.1, 0.0]).view(), 0.3), arr1(&[0.0, 0.0]));
        assert_abs_diff_eq!(shrink(arr1(&[-1.0]).view(), 0.3)[0], -0.7, epsilon = 1e-15);
        // the boundary |x| = τ maps to zero
        assert_eq!(shrink_scalar(0.3, 0.3), 0.0);
        assert_eq!(shrink_scalar(-0.3, 0.3), 0.0);
    }

    #[test]
    fn moreau_grad_examples() {
        let p = ProxParams::new(1.0, 0.5, 1.0).unwrap();
        assert_abs_diff_eq!(
            moreau_grad_l1(arr1(&[2.0]).view(), &p)[0],
            1.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            moreau_grad_l1(arr1(&[0.2]).view(), &p)[0],
            0.4,
            epsilon = 1e-15
        );
        assert_eq!(moreau_grad_l1(arr1(&[0.0]).view(), &p)[0], 0.0);
    }

    #[test]
    fn prox_params_validation() {
        assert!(ProxParams::new(0.0, 0.0, 1.0).is_err());
        assert!(ProxParams::new(0.0, 0.1, -1.0).is_err());
        assert!(ProxParams::new(-0.1, 0.1, 1.0).is_err());
    }

    #[test]
    fn projection_examples() {
        assert_eq!(
            project_linf_ball(arr1(&[2.0, -0.5]).view()),
            arr1(&[1.0, -0.5])
        );
        assert_eq!(project_linf_ball(arr1(&[0.0]).view()), arr1(&[0.0]));
        assert_eq!(project_linf_ball(arr1(&[-3.0]).view()), arr1(&[-1.0]));
    }

    #[test]
    fn logsumexp_examples() {
        let ln2 = std::f64::consts::LN_2;
        assert_abs_diff_eq!(logsumexp(&[0.0, 0.0]).unwrap(), ln2, epsilon = 1e-15);
        assert_abs_diff_eq!(
            logsumexp(&[1000.0, 1000.0]).unwrap(),
            1000.0 + ln2,
            epsilon = 1e-12
        );
        assert_eq!(logsumexp(&[-3.5]).unwrap(), -3.5);
        assert!(matches!(logsumexp(&[]), Err(Error::Usage(_))));
    }

    #[test]
    fn softmax_examples() {
        let w = softmax_stable(&[0.0, 0.0, 0.0]).unwrap();
        for v in w {
            assert_abs_diff_eq!(v, 1.0 / 3.0, epsilon = 1e-15);
        }
        let a = 0.7;
        let w = softmax_stable(&[a, a + std::f64::consts::LN_2]).unwrap();
        assert_abs_diff_eq!(w[0], 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(w[1], 2.0 / 3.0, epsilon = 1e-15);
        let v = [0.1, -2.0, 3.0];
        let shifted: Vec<f64> = v.iter().map(|x| x + 1e6).collect();
        let (w0, w1) = (
            softmax_stable(&v).unwrap(),
            softmax_stable(&shifted).unwrap(),
        );
        for (a, b) in w0.iter().zip(&w1) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
        assert!(softmax_stable(&[]).is_err());
    }

    #[test]
    fn erf_interval_examples() {
        let sqrt_pi = std::f64::consts::PI.sqrt();
        assert_abs_diff_eq!(
            erf_interval(f64::NEG_INFINITY, f64::INFINITY).unwrap(),
            sqrt_pi,
            epsilon = 1e-15
        );
        assert_eq!(erf_interval(0.0, 0.0).unwrap(), 0.0);
        assert!(erf_interval(1.0, 0.0).is_err());
        // composite Simpson with 20000 panels on exp(-y²) over [0, 1]
        let n = 20_000;
        let dx = 1.0 / n as f64;
        let f = |y: f64| (-y * y).exp();
        let mut s = f(0.0) + f(1.0);
        for i in 1..n {
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * dx);
        }
        let simpson = s * dx / 3.0;
        assert_abs_diff_eq!(erf_interval(0.0, 1.0).unwrap(), simpson, epsilon = 1e-14);
        assert_abs_diff_eq!(simpson, 0.746_824_132_812_427, epsilon = 1e-14);
    }

    #[test]
    fn prox_datafit_examples() {
        let data = LinearDataFit::new(arr2(&[[1.0]]), arr1(&[0.0])).unwrap();
        let out = prox_l2_datafit(arr1(&[1.0]).view(), &data, 1.0).unwrap();
        assert_abs_diff_eq!(out[0], 0.5, epsilon = 1e-15);

        let zero = LinearDataFit::new(Array2::zeros((2, 3)), arr1(&[1.0, 2.0])).unwrap();
        let v = arr1(&[0.3, -1.0, 2.0]);
        assert_eq!(prox_l2_datafit(v.view(), &zero, 0.7).unwrap(), v);

        assert!(matches!(
            prox_l2_datafit(arr1(&[1.0, 2.0]).view(), &data, 1.0),
            Err(Error::Shape { .. })
        ));
        assert!(LinearDataFit::new(arr2(&[[1.0, 2.0]]), arr1(&[1.0, 2.0])).is_err());
    }

    /// Plain conjugate gradients on `(I + hFᵀF) u = v + hFᵀφ`.
    fn cg_solve(data: &LinearDataFit, v: &Array1<f64>, h: f64) -> Array1<f64> {
        let apply = |u: &Array1<f64>| u + &(data.forward.t().dot(&data.forward.dot(u)) * h);
        let b = v + &(data.forward.t().dot(&data.observation) * h);
        let mut u = Array1::zeros(v.len());
        let mut r = &b - &apply(&u);
        let mut p = r.clone();
        let mut rr = r.dot(&r);
        for _ in 0..200 {
            if rr.sqrt() < 1e-15 {
                break;
            }
            let ap = apply(&p);
            let alpha = rr / p.dot(&ap);
            u += &(&p * alpha);
            r -= &(&ap * alpha);
            let rr_new = r.dot(&r);
            p = &r + &(&p * (rr_new / rr));
            rr = rr_new;
        }
        u
    }

    #[test]
    fn prox_datafit_matches_conjugate_gradients() {
        let f = arr2(&[
            [0.3, -1.2, 0.5, 2.0, 0.1],
            [1.1, 0.4, -0.7, 0.0, 0.9],
            [-0.6, 0.8, 1.3, -0.4, 0.2],
        ]);
        let data = LinearDataFit::new(f, arr1(&[0.5, -1.0, 2.0])).unwrap();
        let v = arr1(&[1.0, -2.0, 0.3, 0.0, 4.0]);
        for &h in &[0.01, 0.3, 5.0] {
            let exact = prox_l2_datafit(v.view(), &data, h).unwrap();
            let cg = cg_solve(&data, &v, h);
            for (a, b) in exact.iter().zip(cg.iter()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-10);
            }
        }
    }

    fn vec_strategy(n: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-5.0..5.0f64, n)
    }

    proptest! {
        #[test]
        fn shrink_is_nonexpansive(x in vec_strategy(6), y in vec_strategy(6), tau in 0.0..3.0f64) {
            let (x, y) = (Array1::from(x), Array1::from(y));
            let lhs = (&shrink(x.view(), tau) - &shrink(y.view(), tau)).mapv(|v| v * v).sum().sqrt();
            let rhs = (&x - &y).mapv(|v| v * v).sum().sqrt();
            prop_assert!(lhs <= rhs + 1e-12);
        }

        #[test]
        fn moreau_grad_bounded_and_consistent(x in vec_strategy(5), lambda in 0.0..3.0f64, h in 0.001..2.0f64) {
            let p = ProxParams::new(lambda, h, 1.0).unwrap();
            let x = Array1::from(x);
            let g = moreau_grad_l1(x.view(), &p);
            let s = shrink(x.view(), lambda * h);
            for i in 0..x.len() {
                prop_assert!(g[i].abs() <= lambda * (1.0 + 1e-12));
                prop_assert!((h * g[i] + s[i] - x[i]).abs() <= 1e-12 * (1.0 + x[i].abs()));
            }
        }

        #[test]
        fn prox_datafit_is_stationary(
            f in vec_strategy(12), phi in vec_strategy(3), v in vec_strategy(4), h in 0.01..3.0f64
        ) {
            let data = LinearDataFit::new(
                Array2::from_shape_vec((3, 4), f).unwrap(), Array1::from(phi)).unwrap();
            let v = Array1::from(v);
            let u = prox_l2_datafit(v.view(), &data, h).unwrap();
            // ∇[½‖φ - Fu‖² + ‖u - v‖²/(2h)] = Fᵀ(Fu - φ) + (u - v)/h
            let grad = data.grad(u.view()).unwrap() + &((&u - &v) / h);
            let scale = 1.0 + v.mapv(f64::abs).sum() / h;
            prop_assert!(grad.mapv(|g| g * g).sum().sqrt() <= 1e-8 * scale);
        }

        #[test]
        fn softmax_sums_to_one_and_is_equivariant(v in vec_strategy(7), shift in 0usize..7) {
            let w = softmax_stable(&v).unwrap();
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            let mut rotated = v.clone();
            rotated.rotate_left(shift);
            let wr = softmax_stable(&rotated).unwrap();
            let mut expect = w.clone();
            expect.rotate_left(shift);
            for (a, b) in wr.iter().zip(&expect) {
                prop_assert!((a - b).abs() <= 1e-15);
            }
        }

        #[test]
        fn erf_interval_is_additive(a in -6.0..6.0f64, b in -6.0..6.0f64, c in -6.0..6.0f64) {
            let mut s = [a, b, c];
            s.sort_by(|x, y| x.partial_cmp(y).unwrap());
            let whole = erf_interval(s[0], s[2]).unwrap();
            let parts = erf_interval(s[0], s[1]).unwrap() + erf_interval(s[1], s[2]).unwrap();
            prop_assert!((whole - parts).abs() <= 1e-12);
        }
    }
}
