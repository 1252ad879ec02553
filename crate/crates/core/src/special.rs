//! Error-function helpers for integrals of `exp(-t²)` over (possibly
//! unbounded) intervals, evaluated in log space so that intervals far out in
//! the tail neither underflow nor lose relative accuracy.

use std::f64::consts::PI;

const SQRT_PI: f64 = 1.772_453_850_905_516;
const HALF_SQRT_PI_LN: f64 = -0.120_782_237_635_245_22; // ln(√π / 2)

pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

/// Scaled complementary error function `exp(x²) erfc(x)`.
pub fn erfcx(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x < 0.0 {
        // erfc(x) = 2 - erfc(-x)
        return 2.0 * (x * x).exp() - erfcx(-x);
    }
    if x < 25.0 {
        return (x * x).exp() * libm::erfc(x);
    }
    if x.is_infinite() {
        return 0.0;
    }
    // Asymptotic series; at x >= 25 the terms shrink by at least 1/1250 each.
    let inv2x2 = 1.0 / (2.0 * x * x);
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..8 {
        term *= -((2 * k - 1) as f64) * inv2x2;
        sum += term;
    }
    sum / (x * SQRT_PI)
}

/// `∫_lo^hi exp(-t²) dt` in log form together with the mean of `t` under the
/// normalized density `exp(-t²)` restricted to `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussPiece {
    pub log_mass: f64,
    pub mean: f64,
}

// 8-point Gauss-Legendre nodes/weights on [-1, 1].
const GL8_NODES: [f64; 4] = [
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL8_WEIGHTS: [f64; 4] = [
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

/// Short interval with `lo >= 0`: integrate `exp(lo² - t²)` directly.
fn narrow_piece(lo: f64, hi: f64) -> GaussPiece {
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    let (mut mass, mut first) = (0.0, 0.0);
    for (node, weight) in GL8_NODES.iter().zip(GL8_WEIGHTS.iter()) {
        for t in [mid - half * node, mid + half * node] {
            let v = weight * (-(t - lo) * (t + lo)).exp();
            mass += v;
            first += v * t;
        }
    }
    GaussPiece {
        log_mass: -lo * lo + (half * mass).ln(),
        mean: first / mass,
    }
}

pub fn gauss_piece(lo: f64, hi: f64) -> GaussPiece {
    debug_assert!(lo <= hi, "gauss_piece: lo > hi");
    if lo == hi || lo == f64::INFINITY || hi == f64::NEG_INFINITY {
        return GaussPiece {
            log_mass: f64::NEG_INFINITY,
            mean: lo.clamp(f64::MIN, f64::MAX),
        };
    }
    if lo >= 0.0 {
        if hi - lo < 1e-2 {
            return narrow_piece(lo, hi);
        }
        let r = if hi.is_infinite() {
            0.0
        } else {
            ((lo - hi) * (lo + hi)).exp()
        };
        let scaled = erfcx(lo) - if r == 0.0 { 0.0 } else { r * erfcx(hi) };
        GaussPiece {
            log_mass: -lo * lo + HALF_SQRT_PI_LN + scaled.ln(),
            mean: (1.0 - r) / (SQRT_PI * scaled),
        }
    } else if hi <= 0.0 {
        let mirrored = gauss_piece(-hi, -lo);
        GaussPiece {
            log_mass: mirrored.log_mass,
            mean: -mirrored.mean,
        }
    } else {
        let mass = 0.5 * SQRT_PI * (erf(hi) - erf(lo));
        let tails = (-lo * lo).exp() - (-hi * hi).exp();
        GaussPiece {
            log_mass: mass.ln(),
            mean: tails / (2.0 * mass),
        }
    }
}

/// `ln ∫_lo^hi exp(-t²) dt`.
pub fn log_gauss_integral(lo: f64, hi: f64) -> f64 {
    gauss_piece(lo, hi).log_mass
}

/// Integral of `exp(q(y))` over `[lo, hi]` for a concave quadratic
/// `q(y) = -a (y - m)² + const`, returned as (log mass, mean of y).
///
/// `q` is evaluated only at the maximizer of `q` over the interval, so large
/// cancelling constants never need to be formed explicitly.
pub fn quadratic_exp_piece(a: f64, m: f64, lo: f64, hi: f64, q: impl Fn(f64) -> f64) -> GaussPiece {
    let s = a.sqrt();
    let (tlo, thi) = (s * (lo - m), s * (hi - m));
    let piece = gauss_piece(tlo, thi);
    if piece.log_mass == f64::NEG_INFINITY {
        return GaussPiece {
            log_mass: f64::NEG_INFINITY,
            mean: m,
        };
    }
    let t_star = 0.0f64.clamp(tlo, thi);
    let y_star = if t_star == tlo {
        lo
    } else if t_star == thi {
        hi
    } else {
        m
    };
    GaussPiece {
        log_mass: q(y_star) + t_star * t_star + piece.log_mass - s.ln(),
        mean: m + piece.mean / s,
    }
}

/// Normal density with the given mean and variance.
pub fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn erfcx_matches_definition_and_asymptotics() {
        for x in [0.0f64, 0.3, 1.0, 4.0, 10.0, 20.0] {
            let direct = (x * x).exp() * erfc(x);
            assert!((erfcx(x) - direct).abs() <= 1e-13 * direct, "x = {x}");
        }
        // continuity across the series switch
        let series = erfcx(25.0);
        let direct = (625.0f64).exp() * erfc(25.0);
        assert!(
            (series - direct).abs() < 1e-12 * direct,
            "{series} vs {direct}"
        );
        assert!((erfcx(1e6) * 1e6 * SQRT_PI - 1.0).abs() < 1e-12);
        assert!((erfcx(-1.0) - 1.0f64.exp() * erfc(-1.0)).abs() < 1e-13);
    }

    #[test]
    fn gauss_piece_agrees_with_erf_differences() {
        let cases = [
            (-1.0, 2.0),
            (0.5, 1.5),
            (-3.0, -0.2),
            (0.1, 0.105),
            (2.0, f64::INFINITY),
            (f64::NEG_INFINITY, -1.0),
        ];
        for &(lo, hi) in &cases {
            let p = gauss_piece(lo, hi);
            let want = 0.5 * SQRT_PI * (erf(hi) - erf(lo));
            assert!(
                (p.log_mass.exp() - want).abs() < 1e-14 * want.max(1e-3),
                "({lo}, {hi}): {} vs {want}",
                p.log_mass.exp()
            );
        }
    }

    #[test]
    fn deep_tail_is_finite_in_log_space() {
        let p = gauss_piece(40.0, f64::INFINITY);
        // ∫_x^∞ e^{-t²} ≈ e^{-x²} / (2x)
        let approx = -1600.0 - (80.0f64).ln();
        assert!((p.log_mass - approx).abs() < 1e-3);
        assert!((p.mean - 40.0).abs() < 0.05);
    }

    #[test]
    fn quadratic_piece_mean_matches_brute_force() {
        // q(y) = -2 (y - 0.3)^2 + 5 on [1, 3]
        let p = quadratic_exp_piece(2.0, 0.3, 1.0, 3.0, |y| -2.0 * (y - 0.3) * (y - 0.3) + 5.0);
        let n = 200_000;
        let dy = 2.0 / n as f64;
        let (mut m0, mut m1) = (0.0, 0.0);
        for i in 0..n {
            let y = 1.0 + (i as f64 + 0.5) * dy;
            let w = (-2.0 * (y - 0.3) * (y - 0.3) + 5.0).exp() * dy;
            m0 += w;
            m1 += w * y;
        }
        assert!((p.log_mass - m0.ln()).abs() < 1e-8);
        assert!((p.mean - m1 / m0).abs() < 1e-8);
    }
}
