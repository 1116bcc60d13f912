//! Mixing distributions for the latent rate `Λ` and the Laplace-type
//! integrals `E[Λ^d exp(-uΛ)]` that marginalise it out.
//!
//! Identifiability fixes the location of each mixing law:
//!
//! | family            | law of Λ            | E(Λ)       |
//! |-------------------|---------------------|------------|
//! | `ExponentialOne`  | Exponential(1)      | 1          |
//! | `Gamma`           | Gamma(θ, rate θ)    | 1          |
//! | `InverseGaussian` | IG(mean θ, shape 1) | θ          |
//! | `LogNormal`       | LogNormal(0, var θ) | exp(θ/2)   |
//!
//! For a cluster with `d` observed events and accumulated exposure
//! `u = Σ α_i t_i^γ`, the latent rate contributes `E[Λ^d exp(-uΛ)]`. This has
//! closed forms for every family except the log-normal one, which is
//! integrated by Gauss–Hermite quadrature in the standard normal variable
//! `z = ln λ / √θ`, with the rule centred and scaled at the integrand's mode.
//! A coarser rule cross-checks every evaluation; disagreement, or mass on
//! the outermost nodes, sends the integral to adaptive Gauss–Kronrod.

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, InverseGaussian, LogNormal};

use crate::error::{domain, numeric, Result};
use crate::math::{ln_bessel_k_half_reduced, ln_gamma, log_sum_exp, LN_2PI};
use crate::quadrature::{integrate, GaussHermite};

/// Law of the subject-level rate multiplier `Λ_i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MixingFamily {
    /// No mixing: `Λ_i ≡ 1`, the plain Weibull / exponential model.
    None,
    ExponentialOne,
    Gamma,
    InverseGaussian,
    LogNormal,
}

impl MixingFamily {
    pub const ALL: [MixingFamily; 5] = [
        MixingFamily::None,
        MixingFamily::ExponentialOne,
        MixingFamily::Gamma,
        MixingFamily::InverseGaussian,
        MixingFamily::LogNormal,
    ];

    /// Families whose law depends on a mixing parameter θ.
    pub const WITH_THETA: [MixingFamily; 3] = [
        MixingFamily::Gamma,
        MixingFamily::InverseGaussian,
        MixingFamily::LogNormal,
    ];

    pub fn has_theta(self) -> bool {
        matches!(
            self,
            MixingFamily::Gamma | MixingFamily::InverseGaussian | MixingFamily::LogNormal
        )
    }

    /// Whether the per-subject rates are latent variables at all.
    pub fn has_latent_rates(self) -> bool {
        self != MixingFamily::None
    }

    pub fn label(self) -> &'static str {
        match self {
            MixingFamily::None => "none",
            MixingFamily::ExponentialOne => "exponential-one",
            MixingFamily::Gamma => "gamma",
            MixingFamily::InverseGaussian => "inverse-gaussian",
            MixingFamily::LogNormal => "log-normal",
        }
    }

    /// Short tag used in model names (`RME-GAM`, `RMW-IG`, ...).
    pub fn tag(self) -> &'static str {
        match self {
            MixingFamily::None => "",
            MixingFamily::ExponentialOne => "EXP",
            MixingFamily::Gamma => "GAM",
            MixingFamily::InverseGaussian => "IG",
            MixingFamily::LogNormal => "LN",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        let lower = label.trim().to_ascii_lowercase();
        Some(match lower.as_str() {
            "none" | "weibull" => MixingFamily::None,
            "exponential-one" | "exp1" | "exp" => MixingFamily::ExponentialOne,
            "gamma" | "gam" => MixingFamily::Gamma,
            "inverse-gaussian" | "ig" | "invgauss" => MixingFamily::InverseGaussian,
            "log-normal" | "lognormal" | "ln" => MixingFamily::LogNormal,
            _ => return None,
        })
    }

    /// Checks that θ is present exactly when the family needs it, and positive.
    pub fn check_theta(self, theta: Option<f64>) -> Result<()> {
        match (self.has_theta(), theta) {
            (true, Some(t)) if t > 0.0 && t.is_finite() => Ok(()),
            (true, Some(t)) => Err(domain("theta", t)),
            (true, None) => Err(domain("theta (missing)", f64::NAN)),
            (false, None) => Ok(()),
            (false, Some(t)) => Err(domain("theta (family has no mixing parameter)", t)),
        }
    }

    /// `E(Λ | θ)`; θ is ignored by families without it.
    pub fn mean_rate(self, theta: f64) -> f64 {
        match self {
            MixingFamily::None | MixingFamily::ExponentialOne | MixingFamily::Gamma => 1.0,
            MixingFamily::InverseGaussian => theta,
            MixingFamily::LogNormal => (0.5 * theta).exp(),
        }
    }

    /// Log density of the mixing law at `lambda`. Not defined for `None`,
    /// which is a point mass; it returns 0 at λ = 1 and -inf elsewhere.
    pub fn ln_density(self, lambda: f64, theta: f64) -> f64 {
        if lambda <= 0.0 {
            return f64::NEG_INFINITY;
        }
        match self {
            MixingFamily::None => {
                if lambda == 1.0 {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
            MixingFamily::ExponentialOne => -lambda,
            MixingFamily::Gamma => {
                theta * theta.ln() - ln_gamma(theta) + (theta - 1.0) * lambda.ln() - theta * lambda
            }
            MixingFamily::InverseGaussian => {
                let dev = lambda - theta;
                -0.5 * LN_2PI - 1.5 * lambda.ln() - dev * dev / (2.0 * theta * theta * lambda)
            }
            MixingFamily::LogNormal => {
                let l = lambda.ln();
                -l - 0.5 * (LN_2PI + theta.ln()) - l * l / (2.0 * theta)
            }
        }
    }

    /// Draws one rate from the mixing law.
    pub fn sample_rate<R: Rng + ?Sized>(self, theta: f64, rng: &mut R) -> f64 {
        match self {
            MixingFamily::None => 1.0,
            MixingFamily::ExponentialOne => Exp1.sample(rng),
            MixingFamily::Gamma => Gamma::new(theta, 1.0 / theta)
                .expect("gamma mixing parameter validated upstream")
                .sample(rng),
            MixingFamily::InverseGaussian => InverseGaussian::new(theta, 1.0)
                .expect("inverse-Gaussian mixing parameter validated upstream")
                .sample(rng),
            MixingFamily::LogNormal => LogNormal::new(0.0, theta.sqrt())
                .expect("log-normal mixing parameter validated upstream")
                .sample(rng),
        }
    }
}

impl core::fmt::Display for MixingFamily {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.label())
    }
}

/// Default Gauss–Hermite size for the log-normal family.
pub const DEFAULT_HERMITE_NODES: usize = 64;

/// Relative share of the quadrature sum allowed on the outermost nodes
/// before switching to adaptive integration.
const TAIL_MASS_LIMIT: f64 = 1e-8;
const TAIL_NODES: usize = 3;
/// Allowed disagreement between the primary and the coarse check rule.
const REFINEMENT_TOL: f64 = 1e-11;

/// Evaluates `ln E[Λ^d exp(-uΛ)]` for every mixing family.
#[derive(Debug, Clone)]
pub struct LatentIntegrator {
    primary: CentredRule,
    check: CentredRule,
}

impl Default for LatentIntegrator {
    fn default() -> Self {
        Self::with_nodes(DEFAULT_HERMITE_NODES)
    }
}

impl LatentIntegrator {
    /// Uses an `n`-node rule, cross-checked against a coarser one.
    pub fn with_nodes(n: usize) -> Self {
        Self {
            primary: CentredRule::new(n),
            check: CentredRule::new((n * 5 / 8).max(8)),
        }
    }

    pub fn nodes(&self) -> usize {
        self.primary.nodes.len()
    }

    /// `ln E[Λ^d exp(-uΛ)]` with `u ≥ 0`.
    pub fn ln_laplace(&self, family: MixingFamily, theta: f64, d: u32, u: f64) -> Result<f64> {
        if !(u >= 0.0) || !u.is_finite() {
            return Err(domain("exposure u", u));
        }
        let df = f64::from(d);
        Ok(match family {
            MixingFamily::None => -u,
            // Exponential(1) is Gamma(1, 1)
            MixingFamily::ExponentialOne => self.ln_laplace(MixingFamily::Gamma, 1.0, d, u)?,
            MixingFamily::Gamma => {
                // Σ_{k<d} ln((θ+k)/(θ+u)) − θ ln(1 + u/θ)
                let tail: f64 = (0..d)
                    .map(|k| ((theta + f64::from(k)) / (theta + u)).ln())
                    .sum();
                tail - theta * (u / theta).ln_1p()
            }
            MixingFamily::InverseGaussian => {
                // GIG normaliser with half-integer order p = d − 1/2
                let inv = 1.0 / theta;
                let a = 2.0 * u + inv * inv;
                let z = a.sqrt();
                let lead = -2.0 * u / (inv + z); // 1/θ − √a without cancellation
                let m = if d == 0 { 0 } else { d - 1 };
                lead - (0.5 * (df - 0.5) + 0.25) * a.ln() + ln_bessel_k_half_reduced(m, z)
            }
            MixingFamily::LogNormal => self.ln_laplace_lognormal(theta, df, u.ln())?,
        })
    }

    /// [`Self::ln_laplace`] with the exposure given as `ln u`, so that an
    /// exposure below the smallest positive double keeps its size.
    pub fn ln_laplace_log_u(
        &self,
        family: MixingFamily,
        theta: f64,
        d: u32,
        ln_u: f64,
    ) -> Result<f64> {
        if ln_u.is_nan() || ln_u == f64::INFINITY {
            return Err(domain("exposure ln u", ln_u));
        }
        match family {
            MixingFamily::LogNormal => self.ln_laplace_lognormal(theta, f64::from(d), ln_u),
            _ => self.ln_laplace(family, theta, d, ln_u.exp()),
        }
    }

    fn ln_laplace_lognormal(&self, theta: f64, d: f64, ln_u: f64) -> Result<f64> {
        if ln_u == f64::NEG_INFINITY {
            // E Λ^d of LogNormal(0, θ)
            return Ok(0.5 * d * d * theta);
        }
        let s = theta.sqrt();
        let mode = lognormal_mode(s, d, ln_u);
        let tau = 1.0 / (1.0 + s * s * (ln_u + s * mode).exp()).sqrt();
        let primary = self.primary.centred(s, d, ln_u, mode, tau);
        let check = self.check.centred(s, d, ln_u, mode, tau);
        match (primary, check) {
            (Some(a), Some(b)) if (a - b).abs() <= REFINEMENT_TOL * (1.0 + a.abs()) => Ok(a),
            _ => lognormal_adaptive(theta, d, ln_u),
        }
    }
}

/// Gauss–Hermite rule stored as nodes and `ln w_k + x_k²`, ready to be
/// centred at the mode of a log-concave integrand.
#[derive(Debug, Clone)]
struct CentredRule {
    nodes: alloc::vec::Vec<f64>,
    ln_weights_shifted: alloc::vec::Vec<f64>,
}

impl CentredRule {
    fn new(n: usize) -> Self {
        let rule = GaussHermite::new(n);
        let ln_weights_shifted = rule
            .nodes()
            .iter()
            .zip(rule.weights())
            .map(|(x, w)| w.ln() + x * x)
            .collect();
        Self {
            nodes: rule.nodes().to_vec(),
            ln_weights_shifted,
        }
    }

    /// `ln ∫ φ(z) e^{d s z − u e^{s z}} dz`, or `None` when too much of the
    /// sum sits on the outermost nodes.
    fn centred(&self, s: f64, d: f64, ln_u: f64, mode: f64, tau: f64) -> Option<f64> {
        let g = |z: f64| -0.5 * z * z + d * s * z - (ln_u + s * z).exp();
        let spread = core::f64::consts::SQRT_2 * tau;
        let n = self.nodes.len();
        let mut terms = alloc::vec::Vec::with_capacity(n);
        for (x, lw) in self.nodes.iter().zip(&self.ln_weights_shifted) {
            terms.push(lw + g(mode + spread * x));
        }
        let total = log_sum_exp(&terms);
        let k = TAIL_NODES.min(n / 2);
        let mut tail: alloc::vec::Vec<f64> = terms[..k].to_vec();
        tail.extend_from_slice(&terms[n - k..]);
        let tail_share = (log_sum_exp(&tail) - total).exp();
        (total.is_finite() && tail_share <= TAIL_MASS_LIMIT)
            .then(|| total + spread.ln() - 0.5 * LN_2PI)
    }
}

// Mode of g(z) = -z²/2 + d s z - u e^{s z}, which is strictly concave. The
// stationarity condition s u e^{s z} = d s - z is solved in log form,
// h(z) = ln(s u) + s z - ln(d s - z) = 0, convex and increasing on z < d s.
fn lognormal_mode(s: f64, d: f64, ln_u: f64) -> f64 {
    let top = d * s;
    if ln_u == f64::NEG_INFINITY {
        return top;
    }
    let c = s.ln() + ln_u;
    let h = |z: f64| c + s * z - (top - z).ln();
    let mut z = top - 1.0;
    if h(z) >= 0.0 {
        // Newton from the right of the root decreases monotonically onto it
        for _ in 0..200 {
            let next = z - h(z) / (s + 1.0 / (top - z));
            if !(next < z) || z - next <= 1e-15 * (1.0 + z.abs()) {
                return next.min(z);
            }
            z = next;
        }
        return z;
    }
    // root in (top − 1, top): F(w) = c + s (top − e^w) − w with w = ln(top − z),
    // decreasing, positive at w = c + s top − s and negative at 0
    let f = |w: f64| c + s * (top - w.exp()) - w;
    let (mut lo, mut hi) = (c + s * top - s, 0.0);
    let mut w = lo;
    for _ in 0..200 {
        let v = f(w);
        if v > 0.0 {
            lo = w;
        } else {
            hi = w;
        }
        let next = w + v / (s * w.exp() + 1.0);
        let next = if next > lo && next < hi {
            next
        } else {
            0.5 * (lo + hi)
        };
        if (next - w).abs() <= 1e-15 * (1.0 + w.abs()) {
            w = next;
            break;
        }
        w = next;
    }
    top - w.exp()
}

/// Adaptive evaluation of the log-normal Laplace integral in the standard
/// normal variable, centred at the integrand's mode.
pub fn ln_laplace_lognormal_adaptive(theta: f64, d: f64, u: f64) -> Result<f64> {
    if !(u >= 0.0) || !u.is_finite() {
        return Err(domain("exposure u", u));
    }
    lognormal_adaptive(theta, d, u.ln())
}

fn lognormal_adaptive(theta: f64, d: f64, ln_u: f64) -> Result<f64> {
    if ln_u == f64::NEG_INFINITY {
        return Ok(0.5 * d * d * theta);
    }
    let s = theta.sqrt();
    let g = |z: f64| -0.5 * z * z + d * s * z - (ln_u + s * z).exp();
    let z = lognormal_mode(s, d, ln_u);
    let peak = g(z);
    if !peak.is_finite() {
        return Err(numeric("log-normal quadrature", "mode search diverged"));
    }
    let r = integrate(|v| (g(v) - peak).exp(), z - 40.0, z + 40.0, 1e-300, 1e-13).map_err(|e| {
        numeric(
            "log-normal quadrature",
            alloc::format!("{e} at θ = {theta}, d = {d}, ln u = {ln_u}"),
        )
    })?;
    Ok(peak + r.value.ln() - 0.5 * LN_2PI)
}
