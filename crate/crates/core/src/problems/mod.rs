//! Target builders for the experiments: Gaussian/Laplace mixture, sparse
//! logistic regression, TV-regularized imaging and circulant-blur sensing.

pub mod imaging;
pub mod logistic;
pub mod mixture;

pub use imaging::{
    circulant_blur, cs_target, discrete_gradient, CirculantBlur, DiscreteGradient, ImagingSpec,
    L12Smooth, RegMode, SquaredResidual,
};
pub use logistic::{generate_logistic_data, logistic_posterior, LogisticData, LogisticPotential};
pub use mixture::{mixture_target, MixturePotential, MixtureSpec};

#[cfg(test)]
pub(crate) fn finite_difference_grad(
    f: &dyn crate::target::SmoothPotential,
    x: ndarray::ArrayView1<f64>,
    eps: f64,
) -> ndarray::Array1<f64> {
    let mut out = ndarray::Array1::zeros(x.len());
    let mut probe = x.to_owned();
    for l in 0..x.len() {
        let orig = probe[l];
        probe[l] = orig + eps;
        let up = f.value(probe.view());
        probe[l] = orig - eps;
        let down = f.value(probe.view());
        probe[l] = orig;
        out[l] = (up - down) / (2.0 * eps);
    }
    out
}
