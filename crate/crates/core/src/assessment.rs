//! Posterior summaries and model comparison: DIC, CPO / pseudo-Bayes
//! factors, per-cluster outlier Bayes factors, HPD intervals, the `R_cv`
//! posterior and a power-posterior estimate of the marginal likelihood.
//!
//! All likelihood-based criteria work per cluster, so with shared rates a
//! "observation" is a patient rather than a record.

use alloc::string::String;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::gibbs::PosteriorDraws;
use crate::heterogeneity::{r_cv, theta_lower_bound, PriorBundle};
use crate::math::{log_sum_exp, LN_2PI};
use crate::mixing::MixingFamily;
use crate::model::{MarginalModel, ModelSpec, Params, ShapeMode};

fn require_draws(draws: &PosteriorDraws) -> Result<()> {
    if draws.is_empty() {
        Err(Error::Contract("no posterior draws".into()))
    } else {
        Ok(())
    }
}

/// Median of a sample (average of the two middle values for even sizes).
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Coordinate-wise posterior median of `(β, γ, θ)`.
pub fn posterior_median(draws: &PosteriorDraws) -> Result<Params> {
    require_draws(draws)?;
    let k = draws.draws[0].beta.len();
    let beta = (0..k)
        .map(|j| median(&draws.draws.iter().map(|d| d.beta[j]).collect::<Vec<_>>()))
        .collect();
    let gamma = median(&draws.draws.iter().map(|d| d.gamma).collect::<Vec<_>>());
    let theta = draws.column("theta").map(|t| median(&t));
    Ok(Params { beta, gamma, theta })
}

/// `(DIC, P_D)` with the plug-in deviance at the coordinate-wise posterior
/// medians of the marginal model.
pub fn dic(draws: &PosteriorDraws, model: &MarginalModel<'_>) -> Result<(f64, f64)> {
    require_draws(draws)?;
    let mean_dev = -2.0 * mean(&draws.per_draw_loglik);
    let plug_in = -2.0 * model.loglik(&posterior_median(draws)?)?;
    let p_d = mean_dev - plug_in;
    Ok((mean_dev + p_d, p_d))
}

/// `(DIC, P_D)` from deviance values alone, given the plug-in deviance.
pub fn dic_from_deviance(per_draw_loglik: &[f64], plug_in_loglik: f64) -> Result<(f64, f64)> {
    if per_draw_loglik.is_empty() {
        return Err(Error::Contract("no posterior draws".into()));
    }
    let mean_dev = -2.0 * mean(per_draw_loglik);
    let p_d = mean_dev + 2.0 * plug_in_loglik;
    Ok((mean_dev + p_d, p_d))
}

/// Conditional predictive ordinates per cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct CpoResult {
    pub log_cpo: Vec<f64>,
    /// `Σ ln CPO_g`; differences between models are log pseudo-Bayes factors.
    pub log_pseudo_marginal: f64,
    /// Clusters whose CPO underflowed to zero.
    pub flagged: Vec<usize>,
}

/// Default share of the smallest likelihood values dropped from the
/// harmonic mean.
pub const CPO_TRIM: f64 = 0.01;

/// Harmonic-mean CPO with the smallest `trim` share of likelihood values
/// discarded per cluster.
pub fn cpo_and_psbf(draws: &PosteriorDraws, trim: f64) -> Result<CpoResult> {
    require_draws(draws)?;
    if !(0.0..0.5).contains(&trim) {
        return Err(Error::Contract(alloc::format!(
            "trim fraction {trim} outside [0, 0.5)"
        )));
    }
    let s = draws.len();
    let g = draws.per_draw_cluster_loglik[0].len();
    let drop = (trim * s as f64).floor() as usize;
    let mut log_cpo = Vec::with_capacity(g);
    let mut flagged = Vec::new();
    for c in 0..g {
        let mut ll: Vec<f64> = draws.per_draw_cluster_loglik.iter().map(|r| r[c]).collect();
        ll.sort_by(f64::total_cmp);
        let kept = &ll[drop..];
        let neg: Vec<f64> = kept.iter().map(|v| -v).collect();
        let v = -(log_sum_exp(&neg) - (kept.len() as f64).ln());
        if !v.is_finite() {
            flagged.push(c);
        }
        log_cpo.push(v);
    }
    let log_pseudo_marginal = log_cpo.iter().sum();
    Ok(CpoResult {
        log_cpo,
        log_pseudo_marginal,
        flagged,
    })
}

/// Log pseudo-Bayes factor of model `a` against model `b`.
pub fn log_psbf(a: &CpoResult, b: &CpoResult) -> f64 {
    a.log_pseudo_marginal - b.log_pseudo_marginal
}

/// Reference rate for the outlier Bayes factors: the mixing mean at the
/// posterior median θ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceRate {
    pub lambda_ref: f64,
}

impl ReferenceRate {
    pub fn from_draws(draws: &PosteriorDraws) -> Result<Self> {
        require_draws(draws)?;
        let theta = draws.column("theta").map_or(0.0, |t| median(&t));
        Ok(Self {
            lambda_ref: draws.spec.family.mean_rate(theta),
        })
    }
}

/// Per-cluster Bayes factors for `Λ_g = λ_ref` against a free rate.
#[derive(Debug, Clone, PartialEq)]
pub struct OutlierBf {
    pub values: Vec<f64>,
    /// Clusters where a few draws dominated the estimate and the trimmed
    /// mean was used.
    pub heavy_tailed: Vec<usize>,
}

/// Share of the importance sum a single draw may carry before trimming.
const DOMINANT_DRAW_SHARE: f64 = 0.1;

/// Savage–Dickey estimate
/// `BF_g = E_post[ f(t_g | λ_ref, β, γ) / f(t_g | β, γ, θ) ]`, which equals
/// the posterior density of `λ_g` at `λ_ref` over its prior density,
/// averaged over the other parameters. Small values flag outliers.
pub fn outlier_bf(
    draws: &PosteriorDraws,
    model: &MarginalModel<'_>,
    reference: ReferenceRate,
) -> Result<OutlierBf> {
    require_draws(draws)?;
    let data = model.data();
    let g = data.n_clusters();
    let s = draws.len();
    let mut terms = alloc::vec![Vec::with_capacity(s); g];
    for (d, cl) in draws.draws.iter().zip(&draws.per_draw_cluster_loglik) {
        let eta = data.linear_predictor(&d.beta)?;
        for c in 0..g {
            let pinned = model.cluster_conditional_loglik(&eta, d.gamma, c, reference.lambda_ref);
            terms[c].push(pinned - cl[c]);
        }
    }
    let mut values = Vec::with_capacity(g);
    let mut heavy_tailed = Vec::new();
    for (c, mut t) in terms.into_iter().enumerate() {
        let total = log_sum_exp(&t);
        let max = t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let v = if s >= 100 && (max - total).exp() > DOMINANT_DRAW_SHARE {
            heavy_tailed.push(c);
            t.sort_by(f64::total_cmp);
            let keep = s - (s / 100).max(1);
            log_sum_exp(&t[..keep]) - (keep as f64).ln()
        } else {
            total - (s as f64).ln()
        };
        values.push(v.exp());
    }
    Ok(OutlierBf {
        values,
        heavy_tailed,
    })
}

/// Shortest interval containing `⌈mass · n⌉` of the sorted samples.
pub fn hpd_interval(samples: &[f64], mass: f64) -> Result<(f64, f64)> {
    if samples.len() < 100 {
        return Err(Error::Contract(alloc::format!(
            "HPD needs at least 100 samples, got {}",
            samples.len()
        )));
    }
    if !(mass > 0.0 && mass <= 1.0) {
        return Err(Error::Contract(alloc::format!(
            "HPD mass {mass} outside (0, 1]"
        )));
    }
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let m = ((mass * n as f64).ceil() as usize).clamp(1, n);
    let mut best = (v[0], v[m - 1]);
    for i in 1..=n - m {
        if v[i + m - 1] - v[i] < best.1 - best.0 {
            best = (v[i], v[i + m - 1]);
        }
    }
    Ok(best)
}

/// Median, mean and 95% HPD of one parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSummary {
    pub name: String,
    pub median: f64,
    pub mean: f64,
    pub sd: f64,
    pub hpd_lower: f64,
    pub hpd_upper: f64,
}

pub fn summarize(name: &str, samples: &[f64]) -> Result<ParameterSummary> {
    let (lo, hi) = hpd_interval(samples, 0.95)?;
    let m = mean(samples);
    let var = samples.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (samples.len() - 1) as f64;
    Ok(ParameterSummary {
        name: name.into(),
        median: median(samples),
        mean: m,
        sd: var.sqrt(),
        hpd_lower: lo,
        hpd_upper: hi,
    })
}

/// Summaries of every free parameter.
pub fn posterior_summaries(draws: &PosteriorDraws) -> Result<Vec<ParameterSummary>> {
    draws
        .parameter_names()
        .iter()
        .map(|name| {
            let col = draws
                .column(name)
                .ok_or_else(|| Error::Contract(alloc::format!("no column {name}")))?;
            summarize(name, &col)
        })
        .collect()
}

/// Posterior of the heterogeneity ratio.
#[derive(Debug, Clone, PartialEq)]
pub struct RcvSummary {
    pub median: f64,
    pub hpd_lower: f64,
    pub hpd_upper: f64,
    /// Draws where `R_cv` is undefined (infinite cv) and were skipped.
    pub excluded: usize,
    pub values: Vec<f64>,
}

/// Pushes the `(γ, θ)` draws through `R_cv`.
pub fn r_cv_posterior(draws: &PosteriorDraws, family: MixingFamily) -> Result<RcvSummary> {
    require_draws(draws)?;
    let mut values = Vec::with_capacity(draws.len());
    let mut excluded = 0;
    for d in &draws.draws {
        match r_cv(family, d.gamma, d.theta) {
            Ok(v) if v.is_finite() => values.push(v),
            _ => excluded += 1,
        }
    }
    if values.is_empty() {
        return Err(Error::Contract("R_cv undefined for every draw".into()));
    }
    let (hpd_lower, hpd_upper) = if values.len() >= 100 {
        hpd_interval(&values, 0.95)?
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(RcvSummary {
        median: median(&values),
        hpd_lower,
        hpd_upper,
        excluded,
        values,
    })
}

/// Maps model parameters to an unconstrained vector and back:
/// `β`, then `ln γ` when the shape is free, then `ln(θ − θ_min(γ))`.
#[derive(Debug, Clone, Copy)]
struct Reparam {
    k: usize,
    spec: ModelSpec,
}

impl Reparam {
    fn dim(&self) -> usize {
        self.k + usize::from(self.spec.free_shape()) + usize::from(self.spec.family.has_theta())
    }

    fn gamma_of(&self, phi: &[f64]) -> f64 {
        match self.spec.shape {
            ShapeMode::Fixed(g) => g,
            ShapeMode::Free => phi[self.k].exp(),
        }
    }

    fn to_phi(&self, p: &Params) -> Vec<f64> {
        let mut phi = p.beta.clone();
        if self.spec.free_shape() {
            phi.push(p.gamma.ln());
        }
        if let Some(t) = p.theta {
            phi.push((t - theta_lower_bound(self.spec.family, p.gamma)).ln());
        }
        phi
    }

    fn from_phi(&self, phi: &[f64]) -> Params {
        let gamma = self.gamma_of(phi);
        let theta = self
            .spec
            .family
            .has_theta()
            .then(|| theta_lower_bound(self.spec.family, gamma) + phi[self.dim() - 1].exp());
        Params {
            beta: phi[..self.k].to_vec(),
            gamma,
            theta,
        }
    }

    /// Log prior density in φ coordinates (flat in β).
    fn log_prior(&self, prior: &PriorBundle, phi: &[f64]) -> f64 {
        let p = self.from_phi(phi);
        let mut out = 0.0;
        if self.spec.free_shape() {
            out += prior.log_prior_gamma(p.gamma) + phi[self.k];
        }
        if self.spec.family.has_theta() {
            out += prior.log_prior_theta_given_gamma(p.theta, p.gamma) + phi[self.dim() - 1];
        }
        out
    }
}

/// Settings of the power-posterior path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerPosteriorConfig {
    pub temperatures: usize,
    /// Temperatures are `(i / (m − 1))^exponent`.
    pub exponent: f64,
    pub burn_in: usize,
    pub samples: usize,
    /// Inflation of the reference covariance fitted to the posterior draws.
    pub reference_inflation: f64,
    pub seed: u64,
}

impl Default for PowerPosteriorConfig {
    fn default() -> Self {
        Self {
            temperatures: 20,
            exponent: 4.0,
            burn_in: 500,
            samples: 2000,
            reference_inflation: 1.5,
            seed: 0x5eed,
        }
    }
}

/// Power-posterior estimate of `ln m(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalLikelihood {
    pub log_marginal: f64,
    pub temperatures: Vec<f64>,
    /// `E_t[ln L + ln π − ln q]` at each temperature.
    pub path_means: Vec<f64>,
}

struct GaussianReference {
    mean: DVector<f64>,
    chol: DMatrix<f64>,
    log_det: f64,
    inv: DMatrix<f64>,
}

impl GaussianReference {
    fn fit(points: &[Vec<f64>], inflation: f64) -> Result<Self> {
        let n = points.len();
        let d = points[0].len();
        let mut mean = DVector::zeros(d);
        for p in points {
            mean += DVector::from_column_slice(p);
        }
        mean /= n as f64;
        let mut cov = DMatrix::zeros(d, d);
        for p in points {
            let c = DVector::from_column_slice(p) - &mean;
            cov += &c * c.transpose();
        }
        cov /= (n.max(2) - 1) as f64;
        cov *= inflation;
        for i in 0..d {
            cov[(i, i)] += 1e-10 * (1.0 + cov[(i, i)]);
        }
        let chol = cov.clone().cholesky().ok_or_else(|| Error::Numeric {
            context: "power posterior",
            detail: "reference covariance not positive definite".into(),
        })?;
        let l = chol.l();
        let log_det = 2.0 * (0..d).map(|i| l[(i, i)].ln()).sum::<f64>();
        let inv = chol.inverse();
        Ok(Self {
            mean,
            chol: l,
            log_det,
            inv,
        })
    }

    fn log_density(&self, phi: &[f64]) -> f64 {
        let c = DVector::from_column_slice(phi) - &self.mean;
        let q = (c.transpose() * &self.inv * &c)[(0, 0)];
        -0.5 * (phi.len() as f64 * LN_2PI + self.log_det + q)
    }

    fn sample<R: Rng>(&self, rng: &mut R, scale: f64, around: Option<&[f64]>) -> Vec<f64> {
        let d = self.mean.len();
        let z = DVector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let step = &self.chol * z * scale;
        match around {
            Some(c) => c.iter().zip(step.iter()).map(|(a, b)| a + b).collect(),
            None => (&self.mean + step).iter().copied().collect(),
        }
    }
}

/// Power-posterior path between a Gaussian reference `q`, fitted in
/// unconstrained coordinates to the posterior draws, and the posterior,
/// `π_t ∝ q^{1−t} (L π)^t`. With `v = ln L + ln π − ln q`, adjacent
/// temperatures are bridged by `ln E_{t_{k−1}}[exp((t_k − t_{k−1}) v)]`
/// and `ln m` is the sum of these steps.
pub fn log_marginal_likelihood(
    draws: &PosteriorDraws,
    model: &MarginalModel<'_>,
    config: PowerPosteriorConfig,
) -> Result<MarginalLikelihood> {
    require_draws(draws)?;
    if config.temperatures < 2 || config.samples == 0 {
        return Err(Error::Contract(
            "power posterior needs >= 2 temperatures and samples".into(),
        ));
    }
    let spec = draws.spec;
    let prior = spec.prior()?;
    let rp = Reparam {
        k: model.data().n_covariates(),
        spec,
    };
    let points: Vec<Vec<f64>> = draws.draws.iter().map(|d| rp.to_phi(&d.params())).collect();
    let q = GaussianReference::fit(&points, config.reference_inflation)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    // log of (L π / q) and log q at a point
    let eval = |phi: &[f64]| -> (f64, f64) {
        let lq = q.log_density(phi);
        let lp = rp.log_prior(&prior, phi);
        if lp == f64::NEG_INFINITY {
            return (f64::NEG_INFINITY, lq);
        }
        match model.loglik(&rp.from_phi(phi)) {
            Ok(ll) if ll.is_finite() => (ll + lp - lq, lq),
            _ => (f64::NEG_INFINITY, lq),
        }
    };

    let m = config.temperatures;
    let temps: Vec<f64> = (0..m)
        .map(|i| (i as f64 / (m - 1) as f64).powf(config.exponent))
        .collect();
    let mut path_means = Vec::with_capacity(m);
    // ln of the ratio m_{t_k} / m_{t_{k-1}}, estimated from draws at t_{k-1}
    let mut log_ratios = Vec::with_capacity(m - 1);
    let step_ratio = |values: &[f64], dt: f64| {
        let w: Vec<f64> = values.iter().map(|v| dt * v).collect();
        log_sum_exp(&w) - (values.len() as f64).ln()
    };

    // t = 0: independent draws from q; points outside the prior support
    // have v = −∞ and weight zero at every t > 0
    let mut values = Vec::with_capacity(config.samples);
    let mut start = None;
    for _ in 0..config.samples {
        let phi = q.sample(&mut rng, 1.0, None);
        let (v, _) = eval(&phi);
        if v.is_finite() && start.is_none() {
            start = Some(phi);
        }
        values.push(v);
    }
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return Err(Error::Numeric {
            context: "power posterior",
            detail: "reference draws never inside the prior support".into(),
        });
    }
    path_means.push(mean(&finite));

    let d = rp.dim() as f64;
    let mut log_scale = (2.38 / d.sqrt()).ln();
    let mut state = start.unwrap_or_else(|| points[points.len() / 2].clone());
    let (mut cur_v, mut cur_lq) = eval(&state);
    for k in 1..m {
        let t = temps[k];
        log_ratios.push(step_ratio(&values, t - temps[k - 1]));
        values.clear();
        let mut accepted = 0usize;
        for it in 0..config.burn_in + config.samples {
            let prop = q.sample(&mut rng, log_scale.exp(), Some(&state));
            let (v, lq) = eval(&prop);
            // π_t ∝ q · exp(t · v)
            let log_ratio = (lq + t * v) - (cur_lq + t * cur_v);
            let ok = log_ratio.is_finite() && rng.random::<f64>().ln() < log_ratio;
            if ok {
                state = prop;
                cur_v = v;
                cur_lq = lq;
                accepted += 1;
            }
            if it < config.burn_in {
                let m_it = (it + 1) as f64;
                log_scale += m_it.powf(-0.6) * (f64::from(u8::from(ok)) - 0.234);
            } else {
                values.push(cur_v);
            }
        }
        if accepted == 0 {
            return Err(Error::Numeric {
                context: "power posterior",
                detail: alloc::format!("no accepted moves at temperature {t}"),
            });
        }
        path_means.push(mean(&values));
    }

    Ok(MarginalLikelihood {
        log_marginal: log_ratios.iter().sum(),
        temperatures: temps,
        path_means,
    })
}
