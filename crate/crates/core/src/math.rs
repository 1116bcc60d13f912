//! Special functions used throughout: log-gamma with its ratios and second
//! differences, digamma and its second difference, half-integer Bessel K,
//! log-sum-exp.
//!
//! Ratios and differences have large-argument forms because the heterogeneity
//! maps evaluate them at mixing parameters in the thousands or beyond, where
//! naive differences of `ln Γ` or `ψ` lose every significant digit.

#[allow(unused_imports)]
use num_traits::Float;

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;
pub const LN_PI: f64 = 1.144_729_885_849_400_2;

/// Threshold above which the Stirling / asymptotic forms are used.
const ASYMPTOTIC_FROM: f64 = 20.0;

/// `ln Γ(x)` for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma_r(x).0
}

/// `Γ(x)` for moderate positive `x`; overflows to `inf` past ~171.
pub fn gamma(x: f64) -> f64 {
    libm::tgamma(x)
}

fn stirling_tail(z: f64) -> f64 {
    let r = 1.0 / z;
    let r2 = r * r;
    r * (1.0 / 12.0 - r2 * (1.0 / 360.0 - r2 * (1.0 / 1260.0 - r2 * (1.0 / 1680.0 - r2 / 1188.0))))
}

/// `ln Γ(x + a) − ln Γ(x)` evaluated without cancellation for large `x`.
pub fn ln_gamma_ratio(x: f64, a: f64) -> f64 {
    if a == 0.0 {
        return 0.0;
    }
    if x >= ASYMPTOTIC_FROM && x + a >= ASYMPTOTIC_FROM {
        // (x+a-1/2)ln(x+a) - (x-1/2)ln x - a, rearranged around ln1p(a/x)
        (x - 0.5) * (a / x).ln_1p() + a * (x + a).ln() - a + stirling_tail(x + a) - stirling_tail(x)
    } else {
        ln_gamma(x + a) - ln_gamma(x)
    }
}

/// Second difference `ln Γ(x) − 2 ln Γ(x + h) + ln Γ(x + 2h)`.
pub fn ln_gamma_second_difference(x: f64, h: f64) -> f64 {
    if x >= ASYMPTOTIC_FROM {
        // Stirling: the linear and ln x parts cancel exactly, leaving
        // (x − ½) ln(1 − h²/(x+h)²) + 2h ln(1 + h/(x+h)) plus the tails.
        let xh = x + h;
        (x - 0.5) * (-(h * h) / (xh * xh)).ln_1p() + 2.0 * h * (h / xh).ln_1p() + stirling_tail(x)
            - 2.0 * stirling_tail(xh)
            + stirling_tail(x + 2.0 * h)
    } else {
        ln_gamma(x) - 2.0 * ln_gamma(x + h) + ln_gamma(x + 2.0 * h)
    }
}

/// Digamma function ψ(x) for `x > 0`.
pub fn digamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 10.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    acc + x.ln() - 0.5 / x - asymptotic_digamma_tail(x)
}

// Sum of the Bernoulli terms: 1/(12x²) − 1/(120x⁴) + 1/(252x⁶) − 1/(240x⁸) + 1/(132x¹⁰)
fn asymptotic_digamma_tail(x: f64) -> f64 {
    let f = 1.0 / (x * x);
    f * (1.0 / 12.0 - f * (1.0 / 120.0 - f * (1.0 / 252.0 - f * (1.0 / 240.0 - f / 132.0))))
}

/// Second difference `ψ(x) − 2ψ(x + h) + ψ(x + 2h)`.
pub fn digamma_second_difference(x: f64, h: f64) -> f64 {
    if x >= ASYMPTOTIC_FROM {
        let log_part = (-(h * h) / ((x + h) * (x + h))).ln_1p();
        let inv_part = -h * h / (x * (x + h) * (x + 2.0 * h));
        let tail = -(asymptotic_digamma_tail(x) - 2.0 * asymptotic_digamma_tail(x + h)
            + asymptotic_digamma_tail(x + 2.0 * h));
        log_part + inv_part + tail
    } else {
        digamma(x) - 2.0 * digamma(x + h) + digamma(x + 2.0 * h)
    }
}

/// `ln K_{m+1/2}(z)` for the modified Bessel function of the second kind at
/// half-integer order. `K_{-ν} = K_ν`, so negative half orders map onto `m`.
pub fn ln_bessel_k_half(m: u32, z: f64) -> f64 {
    // K_{m+1/2}(z) = sqrt(pi / 2z) e^{-z} k_m(z), k_0 = 1, k_1 = 1 + 1/z
    let base = 0.5 * (core::f64::consts::FRAC_PI_2 / z).ln() - z;
    base + ln_bessel_k_half_reduced(m, z)
}

/// `ln k_m(z)` where `K_{m+1/2}(z) = sqrt(π/2z) e^{-z} k_m(z)`.
pub fn ln_bessel_k_half_reduced(m: u32, z: f64) -> f64 {
    if m == 0 {
        return 0.0;
    }
    let mut prev = 1.0;
    let mut cur = 1.0 + 1.0 / z;
    let mut log_scale = 0.0;
    for j in 1..m {
        let next = prev + f64::from(2 * j + 1) / z * cur;
        prev = cur;
        cur = next;
        if cur > 1e250 {
            prev /= cur;
            log_scale += cur.ln();
            cur = 1.0;
        }
    }
    log_scale + cur.ln()
}

/// Numerically stable `ln Σ exp(v)`; `-inf` for an empty or all-`-inf` input.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// `ln(n!)` for small non-negative integers.
pub fn ln_factorial(n: u32) -> f64 {
    (2..=n).map(|k| f64::from(k).ln()).sum()
}

/// `ln(exp(a) - exp(b))` for `a > b`.
pub fn log_diff_exp(a: f64, b: f64) -> f64 {
    a + (-(b - a).exp()).ln_1p()
}
