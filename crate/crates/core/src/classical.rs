//! Classical frailty AFT fits by direct maximisation of the marginal
//! likelihood, with Wald intervals from the observed information.
//!
//! Frailties have mean 1 and variance `σ²` and multiply the Weibull rate
//! `exp(−γ x'β)`. Each maps onto a rate mixture of the Bayesian models:
//!
//! | frailty                    | mixing law of Λ          | intercept shift         |
//! |----------------------------|--------------------------|-------------------------|
//! | Gamma(1/σ², 1/σ²)          | Gamma, `θ = 1/σ²`        | none                    |
//! | IG(1, 1/σ²)                | IG(θ, 1), `θ = σ²`       | `β₀ + ln σ² / γ`        |
//! | `e^W`, `W ~ N(0, σ²)`      | LogNormal, `θ = σ²`      | none (`E W = 0`)        |
//! | `e^W`, `W ~ N(−σ²/2, σ²)`  | LogNormal, `θ = σ²`      | `β₀ + σ² / (2γ)` (`E Z = 1`) |
//!
//! so the likelihood is the one in [`crate::model`], evaluated after the
//! mapping. The intercept shift needs column 0 of the design to be the
//! intercept.

use alloc::string::String;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::SurvivalDataset;
use crate::error::{Error, Result};
use crate::math::{ln_gamma, log_sum_exp};
use crate::mixing::{LatentIntegrator, MixingFamily};
use crate::model::{MarginalModel, Params};
use crate::optimize::{minimize_bfgs, numeric_hessian, BfgsOptions};

/// Location convention for log-normal frailty.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogNormalConstraint {
    /// `E W = 0`.
    Ew0,
    /// `E Z = 1`.
    Ez1,
}

/// Frailty distribution of a classical fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Frailty {
    None,
    Gamma,
    InverseGaussian,
    LogNormal(LogNormalConstraint),
}

impl Frailty {
    pub fn mixing_family(self) -> MixingFamily {
        match self {
            Frailty::None => MixingFamily::None,
            Frailty::Gamma => MixingFamily::Gamma,
            Frailty::InverseGaussian => MixingFamily::InverseGaussian,
            Frailty::LogNormal(_) => MixingFamily::LogNormal,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Frailty::None => "none",
            Frailty::Gamma => "gamma",
            Frailty::InverseGaussian => "inverse-gaussian",
            Frailty::LogNormal(LogNormalConstraint::Ew0) => "log-normal (EW=0)",
            Frailty::LogNormal(LogNormalConstraint::Ez1) => "log-normal (EZ=1)",
        }
    }

    /// Mixing parameter and intercept shift for frailty variance `sigma2`.
    fn to_mixing(self, sigma2: f64, gamma: f64) -> (Option<f64>, f64) {
        match self {
            Frailty::None => (None, 0.0),
            Frailty::Gamma => (Some(1.0 / sigma2), 0.0),
            Frailty::InverseGaussian => (Some(sigma2), sigma2.ln() / gamma),
            Frailty::LogNormal(LogNormalConstraint::Ew0) => (Some(sigma2), 0.0),
            Frailty::LogNormal(LogNormalConstraint::Ez1) => (Some(sigma2), sigma2 / (2.0 * gamma)),
        }
    }
}

/// Classical marginal log-likelihood at `(β, γ, σ²)`.
pub fn frailty_loglik(
    model: &MarginalModel<'_>,
    frailty: Frailty,
    beta: &[f64],
    gamma: f64,
    sigma2: Option<f64>,
) -> Result<f64> {
    let (theta, shift) = match (frailty, sigma2) {
        (Frailty::None, _) => (None, 0.0),
        (_, Some(s)) if s > 0.0 => frailty.to_mixing(s, gamma),
        (_, s) => {
            return Err(crate::error::domain(
                "frailty variance",
                s.unwrap_or(f64::NAN),
            ))
        }
    };
    let mut b = beta.to_vec();
    b[0] += shift;
    model.loglik(&Params {
        beta: b,
        gamma,
        theta,
    })
}

/// Log-normal frailty log-likelihood with an `nodes`-point Gauss–Hermite rule.
pub fn lognormal_frailty_loglik(
    data: &SurvivalDataset,
    beta: &[f64],
    gamma: f64,
    variance: f64,
    constraint: LogNormalConstraint,
    nodes: usize,
) -> Result<f64> {
    let model = MarginalModel::with_integrator(
        data,
        MixingFamily::LogNormal,
        LatentIntegrator::with_nodes(nodes),
    );
    frailty_loglik(
        &model,
        Frailty::LogNormal(constraint),
        beta,
        gamma,
        Some(variance),
    )
}

/// Maximum-likelihood fit.
#[derive(Debug, Clone, PartialEq)]
pub struct MleFit {
    pub frailty: Frailty,
    /// `β…`, then `gamma` if estimated, then `sigma2` if there is a frailty.
    pub names: Vec<String>,
    pub estimates: Vec<f64>,
    pub standard_errors: Vec<f64>,
    /// Wald 95% intervals; `γ` and `σ²` use the log scale.
    pub intervals: Vec<(f64, f64)>,
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Frailty variance at the edge of the search space.
    pub boundary: bool,
}

impl MleFit {
    pub fn estimate(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.estimates[i])
    }
}

const Z95: f64 = 1.959_963_984_540_054;
const STARTS: usize = 5;

/// Fits the AFT model with the given frailty by maximising the censored
/// marginal likelihood from five jittered starts; `gamma_fixed` pins the
/// Weibull shape (1 gives the exponential model).
///
/// Without frailty the intercept is profiled out in closed form, so the
/// search runs over the remaining coordinates only.
pub fn fit_aft_mle(
    data: &SurvivalDataset,
    frailty: Frailty,
    gamma_fixed: Option<f64>,
) -> Result<MleFit> {
    let has_frailty = frailty != Frailty::None;
    let has_intercept = data.covariates().column(0).iter().all(|v| *v == 1.0);
    if has_frailty && !has_intercept {
        return Err(Error::Contract(
            "frailty fits need the intercept in column 0".into(),
        ));
    }
    if let Some(g) = gamma_fixed {
        if !(g > 0.0) {
            return Err(crate::error::domain("fixed gamma", g));
        }
    }
    let profile = !has_frailty && has_intercept;
    if profile && data.events() == 0 {
        return Err(Error::InvalidData(
            "no events: the intercept has no finite MLE".into(),
        ));
    }
    let k = data.n_covariates();
    let model = MarginalModel::new(data, frailty.mixing_family());
    let ln_events = (data.events() as f64).ln();
    let lt = data.log_times();
    // Full coordinates: β, then ln γ if free, then ln σ² if there is a frailty.
    let expand = |x: &[f64]| -> Vec<f64> {
        if !profile {
            return x.to_vec();
        }
        let mut full = Vec::with_capacity(x.len() + 1);
        full.push(0.0);
        full.extend_from_slice(x);
        let gamma = gamma_fixed.unwrap_or_else(|| full.get(k).map_or(1.0, |v| v.exp()));
        let eta = data
            .linear_predictor(&full[..k])
            .expect("dimension checked");
        let z: Vec<f64> = lt.iter().zip(&eta).map(|(l, e)| gamma * (l - e)).collect();
        full[0] = (log_sum_exp(&z) - ln_events) / gamma;
        full
    };
    let unpack = |x: &[f64]| -> (Vec<f64>, f64, Option<f64>) {
        let mut i = k;
        let gamma = match gamma_fixed {
            Some(g) => g,
            None => {
                i += 1;
                x[k].exp()
            }
        };
        let sigma2 = has_frailty.then(|| x[i].exp());
        (x[..k].to_vec(), gamma, sigma2)
    };
    let full_objective = |x: &[f64]| -> f64 {
        if x.iter().any(|v| !v.is_finite() || v.abs() > 700.0) {
            return f64::INFINITY;
        }
        let (b, g, s) = unpack(x);
        match frailty_loglik(&model, frailty, &b, g, s) {
            Ok(v) if v.is_finite() => -v,
            _ => f64::INFINITY,
        }
    };
    let objective = |x: &[f64]| -> f64 {
        if x.iter().any(|v| !v.is_finite() || v.abs() > 700.0) {
            return f64::INFINITY;
        }
        full_objective(&expand(x))
    };

    let mut x0 = data.log_time_least_squares()?;
    if gamma_fixed.is_none() {
        x0.push(0.0);
    }
    if has_frailty {
        x0.push((0.5f64).ln());
    }
    if profile {
        x0.remove(0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x00c1_a551);
    let jitter = Normal::new(0.0, 0.3).expect("valid normal");
    let mut best: Option<crate::optimize::Minimum> = None;
    for s in 0..STARTS {
        let start: Vec<f64> = if s == 0 {
            x0.clone()
        } else {
            x0.iter().map(|v| v + jitter.sample(&mut rng)).collect()
        };
        let m = minimize_bfgs(objective, &start, BfgsOptions::default());
        // values within roundoff of each other tie; a converged start wins ties
        let better = |b: &crate::optimize::Minimum| {
            let tie = (m.value - b.value).abs() <= 1e-9 * (1.0 + b.value.abs());
            if tie {
                m.converged && !b.converged
            } else {
                m.value < b.value
            }
        };
        if m.value.is_finite() && best.as_ref().is_none_or(better) {
            best = Some(m);
        }
        if x0.is_empty() {
            break;
        }
    }
    let best = best.ok_or_else(|| Error::Numeric {
        context: "classical fit",
        detail: "no start produced a finite likelihood".into(),
    })?;

    let x_full = expand(&best.x);
    let mut f = full_objective;
    let hess = numeric_hessian(&mut f, &x_full);
    let cov = hess.try_inverse();
    let d = x_full.len();
    let var: Vec<f64> = match &cov {
        Some(c) => (0..d).map(|i| c[(i, i)]).collect(),
        None => alloc::vec![f64::NAN; d],
    };
    let (beta, gamma, sigma2) = unpack(&x_full);
    let mut names: Vec<String> = (0..k).map(|j| alloc::format!("beta{j}")).collect();
    let mut estimates = beta.clone();
    let mut ses = Vec::with_capacity(d);
    let mut intervals = Vec::with_capacity(d);
    for j in 0..k {
        let se = var[j].sqrt();
        ses.push(se);
        intervals.push((beta[j] - Z95 * se, beta[j] + Z95 * se));
    }
    let mut positive = |name: &str, value: f64, idx: usize| {
        let se_log = var[idx].sqrt();
        names.push(name.into());
        estimates.push(value);
        ses.push(value * se_log);
        intervals.push((value * (-Z95 * se_log).exp(), value * (Z95 * se_log).exp()));
    };
    let mut idx = k;
    if gamma_fixed.is_none() {
        positive("gamma", gamma, idx);
        idx += 1;
    }
    let mut boundary = false;
    if let Some(s2) = sigma2 {
        positive("sigma2", s2, idx);
        boundary = !(1e-6..=1e6).contains(&s2);
    }
    let converged = best.converged && cov.is_some() && var.iter().all(|v| *v > 0.0);
    Ok(MleFit {
        frailty,
        names,
        estimates,
        standard_errors: ses,
        intervals,
        loglik: -full_objective(&x_full),
        converged,
        iterations: best.iterations,
        boundary,
    })
}

/// Mean frailty among gamma-frailty survivors at baseline cumulative hazard
/// `cum_hazard`: `1 / (1 + σ² H₀)`.
pub fn survivor_frailty_mean_gamma(sigma2: f64, cum_hazard: f64) -> f64 {
    1.0 / (1.0 + sigma2 * cum_hazard)
}

/// Mean frailty among inverse-Gaussian-frailty survivors:
/// `(1 + 2σ² H₀)^{-1/2}`.
pub fn survivor_frailty_mean_ig(sigma2: f64, cum_hazard: f64) -> f64 {
    (1.0 + 2.0 * sigma2 * cum_hazard).sqrt().recip()
}

/// Density at `z` of the survivors' frailty when the frailty is
/// `Gamma(shape, rate)`: `Gamma(shape, rate + H₀)`.
pub fn survivor_frailty_density_gamma(z: f64, shape: f64, rate: f64, cum_hazard: f64) -> f64 {
    if !(z > 0.0) {
        return 0.0;
    }
    let r = rate + cum_hazard;
    (shape * r.ln() - ln_gamma(shape) + (shape - 1.0) * z.ln() - r * z).exp()
}
