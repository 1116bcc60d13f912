//! Coefficient-of-variation maps and the matched prior on the mixing
//! parameter.
//!
//! With `T = Λ^{-1/γ} T₀`, `T₀ ~ Weibull(1, γ)` independent of `Λ`,
//!
//! ```text
//! cv² = K (1 + cv*²) − 1,    K = Γ(1+2/γ) / Γ²(1+1/γ)
//! ```
//!
//! where `cv*` is the coefficient of variation of `Λ^{-1/γ}` and
//! `cv^W = √(K − 1)` that of the Weibull baseline. A single proper prior on
//! `cv` induces `π(θ | γ)` for every family through the change of variable
//! `π(θ|γ) = π*(cv(γ, θ)) |dcv/dθ|`, so priors agree across families.
//!
//! `cv*²` per family (`h = 1/γ`):
//!
//! | family            | `cv*²`                                  | support   |
//! |-------------------|-----------------------------------------|-----------|
//! | `Gamma`           | `Γ(θ)Γ(θ−2h) / Γ²(θ−h) − 1`             | `θ > 2h`  |
//! | `InverseGaussian` | `Γ(θ)Γ(θ+2h) / Γ²(θ+h) − 1`             | `θ > 0`   |
//! | `LogNormal`       | `exp(θ h²) − 1`                         | `θ > 0`   |
//!
//! The inverse-Gaussian row is used as the prior's defining map; it is not
//! the moment ratio of an IG(θ, 1) rate (that one is bounded).

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{domain, numeric, Error, Result};
use crate::math::{digamma_second_difference, ln_gamma, ln_gamma_second_difference};
use crate::mixing::MixingFamily;

/// Smallest shape accepted by the Weibull cv map; below it `Γ(1 + 2/γ)`
/// overflows.
pub const MIN_SHAPE: f64 = 0.05;

/// `ln K = ln Γ(1+2/γ) − 2 ln Γ(1+1/γ)`.
fn ln_weibull_moment_ratio(gamma: f64) -> Result<f64> {
    if !(gamma >= MIN_SHAPE) || !gamma.is_finite() {
        return Err(domain("gamma (Weibull cv needs gamma >= 0.05)", gamma));
    }
    let h = 1.0 / gamma;
    Ok(ln_gamma_second_difference(1.0, h))
}

/// `Γ(1+2/γ) / Γ²(1+1/γ)`.
pub fn weibull_moment_ratio(gamma: f64) -> Result<f64> {
    ln_weibull_moment_ratio(gamma).map(f64::exp)
}

/// Coefficient of variation of `Weibull(·, γ)`.
pub fn cv_weibull(gamma: f64) -> Result<f64> {
    Ok(ln_weibull_moment_ratio(gamma)?.exp_m1().sqrt())
}

/// Lower end of the support of θ for which `cv` is finite.
pub fn theta_lower_bound(family: MixingFamily, gamma: f64) -> f64 {
    match family {
        MixingFamily::Gamma => 2.0 / gamma,
        _ => 0.0,
    }
}

fn check_args(family: MixingFamily, gamma: f64, theta: f64) -> Result<()> {
    if !family.has_theta() {
        return Err(Error::Contract(alloc::format!(
            "family {family} has no mixing parameter"
        )));
    }
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(domain("gamma", gamma));
    }
    if !(theta > theta_lower_bound(family, gamma)) || !theta.is_finite() {
        return Err(domain("theta (outside finite-cv support)", theta));
    }
    Ok(())
}

/// `ln(1 + cv*²)` for families carrying θ.
fn ln_one_plus_cv_star_squared(family: MixingFamily, gamma: f64, theta: f64) -> f64 {
    let h = 1.0 / gamma;
    match family {
        MixingFamily::Gamma => ln_gamma_second_difference(theta - 2.0 * h, h),
        MixingFamily::InverseGaussian => ln_gamma_second_difference(theta, h),
        MixingFamily::LogNormal => theta * h * h,
        _ => 0.0,
    }
}

/// Squared coefficient of variation of `Λ^{-1/γ}`.
pub fn cv_star_squared(family: MixingFamily, gamma: f64, theta: f64) -> Result<f64> {
    check_args(family, gamma, theta)?;
    Ok(ln_one_plus_cv_star_squared(family, gamma, theta).exp_m1())
}

/// `d[cv*²]/dθ` (signed: negative for Gamma and IG, positive for LogNormal).
pub fn cv_star_squared_derivative(family: MixingFamily, gamma: f64, theta: f64) -> Result<f64> {
    check_args(family, gamma, theta)?;
    let h = 1.0 / gamma;
    let level = ln_one_plus_cv_star_squared(family, gamma, theta).exp();
    Ok(match family {
        MixingFamily::Gamma => level * digamma_second_difference(theta - 2.0 * h, h),
        MixingFamily::InverseGaussian => level * digamma_second_difference(theta, h),
        _ => level * h * h,
    })
}

/// Coefficient of variation of the survival time.
pub fn cv_total(family: MixingFamily, gamma: f64, theta: f64) -> Result<f64> {
    let k = weibull_moment_ratio(gamma)?;
    let s = cv_star_squared(family, gamma, theta)?;
    Ok((k * s + (k - 1.0)).sqrt())
}

/// `cv − cv^W`, computed without cancellation when the mixture is nearly
/// degenerate.
pub fn cv_excess(family: MixingFamily, gamma: f64, theta: f64) -> Result<f64> {
    let k = weibull_moment_ratio(gamma)?;
    let s = cv_star_squared(family, gamma, theta)?;
    let w = (k - 1.0).sqrt();
    let cv = (k * s + (k - 1.0)).sqrt();
    Ok(k * s / (cv + w))
}

/// `dcv/dθ = K / (2 cv) · d[cv*²]/dθ`.
pub fn cv_total_derivative(family: MixingFamily, gamma: f64, theta: f64) -> Result<f64> {
    let k = weibull_moment_ratio(gamma)?;
    let cv = cv_total(family, gamma, theta)?;
    let d = cv_star_squared_derivative(family, gamma, theta)?;
    let out = k / (2.0 * cv) * d;
    if out.is_finite() {
        Ok(out)
    } else {
        Err(numeric(
            "cv derivative",
            alloc::format!("non-finite at gamma = {gamma}, theta = {theta}"),
        ))
    }
}

/// Heterogeneity ratio `cv / cv^W ≥ 1`. Families without θ give 1.
pub fn r_cv(family: MixingFamily, gamma: f64, theta: Option<f64>) -> Result<f64> {
    match (family, theta) {
        (MixingFamily::None, _) => Ok(1.0),
        (MixingFamily::ExponentialOne, _) => {
            // Λ ~ Exp(1): E Λ^{-r} = Γ(1 − r), finite cv needs γ > 2.
            let h = 1.0 / gamma;
            if !(gamma > 2.0) {
                return Err(domain("gamma (exponential mixing needs gamma > 2)", gamma));
            }
            let ln_k = ln_weibull_moment_ratio(gamma)?;
            let ln_star = ln_gamma(1.0 - 2.0 * h) - 2.0 * ln_gamma(1.0 - h);
            Ok(((ln_k + ln_star).exp_m1() / ln_k.exp_m1()).sqrt())
        }
        (_, Some(t)) => Ok(cv_total(family, gamma, t)? / cv_weibull(gamma)?),
        (_, None) => Err(domain("theta (missing)", f64::NAN)),
    }
}

/// θ such that `cv(γ, θ) = cv`, for `cv > cv^W(γ)`.
pub fn theta_for_cv(family: MixingFamily, gamma: f64, cv: f64) -> Result<f64> {
    let k = weibull_moment_ratio(gamma)?;
    let w2 = k - 1.0;
    if !(cv * cv > w2) || !cv.is_finite() {
        return Err(domain("cv (must exceed the Weibull cv)", cv));
    }
    // target ln(1 + cv*²) = ln((cv² + 1) / K)
    let target = ((cv * cv - w2) / k).ln_1p();
    let h = 1.0 / gamma;
    if family == MixingFamily::LogNormal {
        return Ok(target / (h * h));
    }
    if !matches!(family, MixingFamily::Gamma | MixingFamily::InverseGaussian) {
        return Err(Error::Contract(alloc::format!(
            "family {family} has no mixing parameter"
        )));
    }
    let lower = theta_lower_bound(family, gamma);
    // ln(1 + cv*²) decreases in θ; bisect in y = ln(θ − lower).
    let f = |y: f64| ln_one_plus_cv_star_squared(family, gamma, lower + y.exp()) - target;
    let (mut lo, mut hi) = (-1.0, 1.0);
    while f(lo) < 0.0 {
        lo -= 2.0 * (hi - lo);
        if lo < -700.0 {
            return Err(numeric("cv inversion", "no lower bracket"));
        }
    }
    while f(hi) > 0.0 {
        hi += 2.0 * (hi - lo);
        if hi > 700.0 {
            return Err(numeric("cv inversion", "no upper bracket"));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 * (1.0 + mid.abs()) {
            break;
        }
    }
    Ok(lower + (0.5 * (lo + hi)).exp())
}

/// Elicited heterogeneity: `cv − cv^W(γ)` is exponential with mean
/// `E(cv) − cv^W(γ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvSpec {
    pub expected_cv: f64,
    pub family: MixingFamily,
    pub gamma: f64,
}

impl CvSpec {
    pub fn new(expected_cv: f64, family: MixingFamily, gamma: f64) -> Result<Self> {
        let w = cv_weibull(gamma)?;
        if !(expected_cv > w) || !expected_cv.is_finite() {
            return Err(domain(
                "expected cv (must exceed the Weibull cv at gamma)",
                expected_cv,
            ));
        }
        if !family.has_theta() {
            return Err(Error::Contract(alloc::format!(
                "family {family} has no mixing parameter"
            )));
        }
        Ok(Self {
            expected_cv,
            family,
            gamma,
        })
    }

    /// `ln π*(cv)`.
    pub fn log_density_cv(&self, cv: f64) -> Result<f64> {
        let w = cv_weibull(self.gamma)?;
        Ok(log_exponential_excess(cv - w, self.expected_cv - w))
    }

    pub fn log_prior_theta(&self, theta: f64) -> Result<f64> {
        induced_log_prior_theta(self.family, self.gamma, theta, self.expected_cv)
    }

    /// Median of `π*(cv)`.
    pub fn median_cv(&self) -> Result<f64> {
        let w = cv_weibull(self.gamma)?;
        Ok(w + (self.expected_cv - w) * core::f64::consts::LN_2)
    }
}

fn log_exponential_excess(excess: f64, mean: f64) -> f64 {
    if excess > 0.0 {
        -mean.ln() - excess / mean
    } else {
        f64::NEG_INFINITY
    }
}

/// `ln π(θ | γ)` induced by the exponential prior on `cv − cv^W(γ)` with mean
/// `expected_cv − cv^W(γ)`. Returns `-inf` outside the finite-cv support.
pub fn induced_log_prior_theta(
    family: MixingFamily,
    gamma: f64,
    theta: f64,
    expected_cv: f64,
) -> Result<f64> {
    let w = cv_weibull(gamma)?;
    if !(expected_cv > w) {
        return Err(domain(
            "expected cv (must exceed the Weibull cv at gamma)",
            expected_cv,
        ));
    }
    if !family.has_theta() {
        return Err(Error::Contract(alloc::format!(
            "family {family} has no mixing parameter"
        )));
    }
    if !(theta > theta_lower_bound(family, gamma)) {
        return Ok(f64::NEG_INFINITY);
    }
    let excess = cv_excess(family, gamma, theta)?;
    let slope = cv_total_derivative(family, gamma, theta)?.abs();
    Ok(log_exponential_excess(excess, expected_cv - w) + slope.ln())
}

/// Proper prior on the Weibull shape: `Gamma(shape, rate)` restricted to
/// `γ > lower`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapePrior {
    pub shape: f64,
    pub rate: f64,
    pub lower: f64,
    log_norm: f64,
}

impl ShapePrior {
    /// `Gamma(1, 1)` with no truncation.
    pub fn untruncated() -> Self {
        Self {
            shape: 1.0,
            rate: 1.0,
            lower: 0.0,
            log_norm: 0.0,
        }
    }

    /// `Gamma(1, 1)` truncated to the shapes where `cv^W(γ) < expected_cv`.
    pub fn matched(expected_cv: f64) -> Result<Self> {
        let lower = shape_for_weibull_cv(expected_cv)?;
        // survival of Exp(1) at the cut
        Ok(Self {
            shape: 1.0,
            rate: 1.0,
            lower,
            log_norm: lower,
        })
    }

    pub fn log_density(&self, gamma: f64) -> f64 {
        if !(gamma > self.lower) || !gamma.is_finite() {
            return f64::NEG_INFINITY;
        }
        self.shape * self.rate.ln() - ln_gamma(self.shape) + (self.shape - 1.0) * gamma.ln()
            - self.rate * gamma
            + self.log_norm
    }
}

/// γ at which `cv^W(γ) = cv`; `cv^W` is strictly decreasing in γ.
pub fn shape_for_weibull_cv(cv: f64) -> Result<f64> {
    if !(cv > 0.0) || !cv.is_finite() {
        return Err(domain("cv", cv));
    }
    let f = |y: f64| cv_weibull(y.exp()).map(|w| w - cv);
    let (mut lo, mut hi) = (MIN_SHAPE.ln(), 50f64.ln());
    if f(lo)? < 0.0 || f(hi)? > 0.0 {
        return Err(domain(
            "cv (outside the Weibull range for 0.05 <= gamma <= 50)",
            cv,
        ));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}

/// Flat (improper) prior on the regression coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FlatBeta;

/// Prior on `(β, γ, θ)`: flat on β, proper on γ and `θ | γ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorBundle {
    pub family: MixingFamily,
    pub expected_cv: f64,
    pub shape_prior: ShapePrior,
    pub beta_prior: FlatBeta,
}

impl PriorBundle {
    pub fn new(family: MixingFamily, expected_cv: f64) -> Result<Self> {
        let shape_prior = if family.has_theta() {
            ShapePrior::matched(expected_cv)?
        } else {
            ShapePrior::untruncated()
        };
        Ok(Self {
            family,
            expected_cv,
            shape_prior,
            beta_prior: FlatBeta,
        })
    }

    pub fn log_prior_gamma(&self, gamma: f64) -> f64 {
        self.shape_prior.log_density(gamma)
    }

    /// `ln π(θ | γ)`; 0 for families without θ, `-inf` outside the support.
    pub fn log_prior_theta_given_gamma(&self, theta: Option<f64>, gamma: f64) -> f64 {
        match (self.family.has_theta(), theta) {
            (false, _) => 0.0,
            (true, Some(t)) => induced_log_prior_theta(self.family, gamma, t, self.expected_cv)
                .unwrap_or(f64::NEG_INFINITY),
            (true, None) => f64::NEG_INFINITY,
        }
    }
}
