//! Weibull, RME and RMW densities, survival and hazard functions, and
//! two-stage sampling.
//!
//! Conditional on `Λ = λ`, `T ~ Weibull(αλ, γ)` with survival
//! `exp(-αλ t^γ)`. Integrating `λ` out gives
//!
//! ```text
//! f(t) = γ α t^{γ-1} E[Λ exp(-α t^γ Λ)],    S(t) = E[exp(-α t^γ Λ)]
//! ```
//!
//! so every quantity reduces to the Laplace-type integral in [`crate::mixing`].
//! The RME case is `γ = 1`; the RMW case is the RME law evaluated at `t^γ`.

use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{domain, Error, Result};
use crate::mixing::{LatentIntegrator, MixingFamily};

/// Parameters of one RMW law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmwParams {
    pub family: MixingFamily,
    pub alpha: f64,
    pub gamma: f64,
    pub theta: Option<f64>,
}

impl RmwParams {
    pub fn new(family: MixingFamily, alpha: f64, gamma: f64, theta: Option<f64>) -> Result<Self> {
        let p = Self {
            family,
            alpha,
            gamma,
            theta,
        };
        p.validate()?;
        Ok(p)
    }

    /// RME law, i.e. `γ = 1`.
    pub fn rme(family: MixingFamily, alpha: f64, theta: Option<f64>) -> Result<Self> {
        Self::new(family, alpha, 1.0, theta)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(domain("alpha", self.alpha));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(domain("gamma", self.gamma));
        }
        self.family.check_theta(self.theta)
    }

    fn theta_or_zero(&self) -> f64 {
        self.theta.unwrap_or(0.0)
    }
}

fn check_time(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(domain("time", t))
    }
}

/// `ln(γ r t^{γ-1} exp(-r t^γ))`.
pub fn weibull_logpdf(t: f64, rate: f64, shape: f64) -> Result<f64> {
    check_time(t)?;
    if !(rate > 0.0) {
        return Err(domain("rate", rate));
    }
    if !(shape > 0.0) {
        return Err(domain("shape", shape));
    }
    let lt = t.ln();
    Ok(shape.ln() + rate.ln() + (shape - 1.0) * lt - rate * (shape * lt).exp())
}

/// `ln S(t) = -r t^γ`.
pub fn weibull_logsurv(t: f64, rate: f64, shape: f64) -> Result<f64> {
    check_time(t)?;
    if !(rate > 0.0) {
        return Err(domain("rate", rate));
    }
    if !(shape > 0.0) {
        return Err(domain("shape", shape));
    }
    Ok(-rate * t.powf(shape))
}

/// RME log density at `t` (γ = 1).
pub fn rme_logpdf(t: f64, alpha: f64, family: MixingFamily, theta: Option<f64>) -> Result<f64> {
    rmw_logpdf(t, &RmwParams::rme(family, alpha, theta)?)
}

pub fn rmw_logpdf(t: f64, p: &RmwParams) -> Result<f64> {
    rmw_logpdf_with(t, p, &LatentIntegrator::default())
}

pub fn rmw_logsurv(t: f64, p: &RmwParams) -> Result<f64> {
    rmw_logsurv_with(t, p, &LatentIntegrator::default())
}

pub fn rmw_loghazard(t: f64, p: &RmwParams) -> Result<f64> {
    rmw_loghazard_with(t, p, &LatentIntegrator::default())
}

/// [`rmw_logpdf`] with a caller-owned integrator, for repeated evaluation.
pub fn rmw_logpdf_with(t: f64, p: &RmwParams, integrator: &LatentIntegrator) -> Result<f64> {
    check_time(t)?;
    p.validate()?;
    let lt = t.ln();
    let ln_u = p.alpha.ln() + p.gamma * lt;
    let latent = integrator.ln_laplace_log_u(p.family, p.theta_or_zero(), 1, ln_u)?;
    Ok(p.gamma.ln() + p.alpha.ln() + (p.gamma - 1.0) * lt + latent)
}

pub fn rmw_logsurv_with(t: f64, p: &RmwParams, integrator: &LatentIntegrator) -> Result<f64> {
    check_time(t)?;
    p.validate()?;
    let ln_u = p.alpha.ln() + p.gamma * t.ln();
    integrator.ln_laplace_log_u(p.family, p.theta_or_zero(), 0, ln_u)
}

pub fn rmw_loghazard_with(t: f64, p: &RmwParams, integrator: &LatentIntegrator) -> Result<f64> {
    Ok(rmw_logpdf_with(t, p, integrator)? - rmw_logsurv_with(t, p, integrator)?)
}

/// `n` draws by composition: `λ` from the mixing law, then the conditional
/// Weibull by inversion.
pub fn sample_rmw(p: &RmwParams, n: usize, seed: u64) -> Result<Vec<f64>> {
    p.validate()?;
    if n == 0 {
        return Err(Error::Contract("sample size must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n).map(|_| sample_one(p, &mut rng)).collect())
}

pub(crate) fn sample_one<R: rand::Rng + ?Sized>(p: &RmwParams, rng: &mut R) -> f64 {
    let lambda = p.family.sample_rate(p.theta_or_zero(), rng);
    let e: f64 = Exp1.sample(rng);
    (e / (p.alpha * lambda)).powf(1.0 / p.gamma)
}

/// AFT rate `α = exp(-γ x'β)`.
pub fn aft_rate(x: &[f64], beta: &[f64], gamma: f64) -> Result<f64> {
    if x.len() != beta.len() {
        return Err(Error::DimensionMismatch {
            expected: beta.len(),
            found: x.len(),
        });
    }
    let eta: f64 = x.iter().zip(beta).map(|(a, b)| a * b).sum();
    Ok((-gamma * eta).exp())
}
