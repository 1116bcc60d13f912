//! Adaptive Metropolis-within-Gibbs sampler for the RMW-AFT model.
//!
//! One sweep updates each `β_j` by a Gaussian random walk, then `γ` (random
//! walk on `ln γ`), then `θ` (random walk on `ln(θ − θ_min(γ))`), then the
//! cluster rates: exact Gibbs draws when the mixing law is conjugate
//! (Gamma, Exponential(1)), random walks on `ln λ_g` otherwise. Censored
//! rows enter through the closed Weibull survival, without augmentation.
//!
//! Step sizes follow a batch Robbins–Monro rule
//! `ln s ← ln s + m^{-0.6} (acc − target)` and are frozen after burn-in.

use alloc::string::String;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma as GammaDist, StandardNormal};

use crate::data::SurvivalDataset;
use crate::error::{Error, Result};
use crate::heterogeneity::{theta_for_cv, theta_lower_bound, CvSpec, PriorBundle};
use crate::mixing::MixingFamily;
use crate::model::{MarginalModel, ModelSpec, Params, ShapeMode};

/// Iteration budget, thinning and adaptation settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunPlan {
    pub total_iterations: usize,
    pub burn_in_fraction: f64,
    pub thin: usize,
    pub target_acceptance: f64,
    pub seed: u64,
    /// Iterations per adaptation batch.
    pub adaptation_window: usize,
    /// Keep the cluster rates of every retained draw.
    pub keep_lambdas: bool,
}

impl RunPlan {
    /// 600,000 iterations, 25% burn-in, 9,000 retained draws.
    pub fn paper(seed: u64) -> Self {
        Self::with_retained(600_000, 0.25, 9_000, seed)
    }

    /// 100,000 iterations, 25% burn-in, thin 10.
    pub fn desk(seed: u64) -> Self {
        Self {
            total_iterations: 100_000,
            burn_in_fraction: 0.25,
            thin: 10,
            target_acceptance: 0.44,
            seed,
            adaptation_window: 50,
            keep_lambdas: false,
        }
    }

    /// Chooses `thin = floor((1 − burn) · total / retained)`.
    pub fn with_retained(total: usize, burn_in_fraction: f64, retained: usize, seed: u64) -> Self {
        let kept = total - (total as f64 * burn_in_fraction).floor() as usize;
        Self {
            total_iterations: total,
            burn_in_fraction,
            thin: (kept / retained.max(1)).max(1),
            target_acceptance: 0.44,
            seed,
            adaptation_window: 50,
            keep_lambdas: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.burn_in_fraction > 0.0 && self.burn_in_fraction < 1.0) {
            return Err(Error::Contract(alloc::format!(
                "burn-in fraction {} outside (0, 1)",
                self.burn_in_fraction
            )));
        }
        if self.thin == 0 || self.adaptation_window == 0 {
            return Err(Error::Contract(
                "thin and adaptation window must be >= 1".into(),
            ));
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return Err(Error::Contract("target acceptance outside (0, 1)".into()));
        }
        if self.retained() == 0 {
            return Err(Error::Contract("plan retains no draws".into()));
        }
        Ok(())
    }

    pub fn burn_in(&self) -> usize {
        (self.total_iterations as f64 * self.burn_in_fraction).floor() as usize
    }

    pub fn retained(&self) -> usize {
        (self.total_iterations - self.burn_in()) / self.thin
    }
}

/// Current state of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub beta: Vec<f64>,
    pub gamma: f64,
    pub theta: Option<f64>,
    /// One rate per cluster; all 1 and never updated without mixing.
    pub lambdas: Vec<f64>,
    /// Log step sizes: `β_0..β_{k-1}`, `γ`, `θ`, then one per cluster.
    pub proposal_log_scales: Vec<f64>,
    pub iteration: usize,
}

impl ChainState {
    pub fn params(&self) -> Params {
        Params {
            beta: self.beta.clone(),
            gamma: self.gamma,
            theta: self.theta,
        }
    }

    /// Checks positivity and support constraints.
    pub fn check(&self, family: MixingFamily) -> Result<()> {
        if !(self.gamma > 0.0) {
            return Err(Error::Contract(alloc::format!("gamma = {}", self.gamma)));
        }
        family.check_theta(self.theta)?;
        if let Some(t) = self.theta {
            if !(t > theta_lower_bound(family, self.gamma)) {
                return Err(Error::Contract(alloc::format!(
                    "theta = {t} outside finite-cv support at gamma = {}",
                    self.gamma
                )));
            }
        }
        if let Some(l) = self.lambdas.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
            return Err(Error::Contract(alloc::format!("lambda = {l}")));
        }
        Ok(())
    }

    fn describe(&self) -> String {
        alloc::format!(
            "beta = {:?}, gamma = {}, theta = {:?}, iteration = {}",
            self.beta,
            self.gamma,
            self.theta,
            self.iteration
        )
    }
}

/// One retained draw.
#[derive(Debug, Clone, PartialEq)]
pub struct Draw {
    pub beta: Vec<f64>,
    pub gamma: f64,
    pub theta: Option<f64>,
}

impl Draw {
    pub fn params(&self) -> Params {
        Params {
            beta: self.beta.clone(),
            gamma: self.gamma,
            theta: self.theta,
        }
    }
}

/// Post burn-in, thinned output of [`run`].
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    pub spec: ModelSpec,
    pub covariate_names: Vec<String>,
    pub iterations: Vec<usize>,
    pub draws: Vec<Draw>,
    pub lambda_draws: Option<Vec<Vec<f64>>>,
    /// Marginal log-likelihood `ln f(t | β, γ, θ)` of each draw.
    pub per_draw_loglik: Vec<f64>,
    /// Marginal log-likelihood of each cluster, per draw.
    pub per_draw_cluster_loglik: Vec<Vec<f64>>,
    /// Block label and acceptance rate after burn-in.
    pub acceptance_rates: Vec<(String, f64)>,
}

impl PosteriorDraws {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    /// Samples of one named parameter: `beta0..`, `gamma` or `theta`.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        match name {
            "gamma" => Some(self.draws.iter().map(|d| d.gamma).collect()),
            "theta" => self.draws.iter().map(|d| d.theta).collect(),
            _ => {
                let j: usize = name.strip_prefix("beta")?.parse().ok()?;
                (j < self.draws.first()?.beta.len())
                    .then(|| self.draws.iter().map(|d| d.beta[j]).collect())
            }
        }
    }

    /// Names of the parameters that vary in this model.
    pub fn parameter_names(&self) -> Vec<String> {
        let k = self.draws.first().map_or(0, |d| d.beta.len());
        let mut names: Vec<String> = (0..k).map(|j| alloc::format!("beta{j}")).collect();
        if self.spec.free_shape() {
            names.push("gamma".into());
        }
        if self.spec.family.has_theta() {
            names.push("theta".into());
        }
        names
    }
}

/// The full-conditional kernels, up to additive constants.
#[derive(Debug, Clone)]
pub struct FullConditionals<'a> {
    data: &'a SurvivalDataset,
    spec: ModelSpec,
    prior: PriorBundle,
    events: Vec<u32>,
    event_log_time_sum: f64,
    n_events: f64,
}

impl<'a> FullConditionals<'a> {
    pub fn new(data: &'a SurvivalDataset, spec: ModelSpec) -> Result<Self> {
        let st = data.status();
        let lt = data.log_times();
        Ok(Self {
            data,
            spec,
            prior: spec.prior()?,
            events: data.cluster_events(),
            event_log_time_sum: (0..data.len()).filter(|&i| st[i]).map(|i| lt[i]).sum(),
            n_events: data.events() as f64,
        })
    }

    pub fn prior(&self) -> &PriorBundle {
        &self.prior
    }

    // Σ_i [−γ c_i η_i − λ_g(i) exp(γ(ln t_i − η_i))]
    fn regression_part(&self, eta: &[f64], gamma: f64, lambdas: &[f64]) -> f64 {
        let lt = self.data.log_times();
        let st = self.data.status();
        let mut out = 0.0;
        for i in 0..eta.len() {
            if st[i] {
                out -= gamma * eta[i];
            }
            out -= lambdas[self.data.cluster_of(i)] * (gamma * (lt[i] - eta[i])).exp();
        }
        out
    }

    /// Kernel of `β_j` (the same expression for every `j`).
    pub fn beta(&self, state: &ChainState) -> Result<f64> {
        let eta = self.data.linear_predictor(&state.beta)?;
        Ok(self.beta_from_eta(&eta, state))
    }

    fn beta_from_eta(&self, eta: &[f64], state: &ChainState) -> f64 {
        self.regression_part(eta, state.gamma, &state.lambdas)
    }

    /// Kernel of `γ`, including `π(θ | γ) π(γ)`.
    pub fn gamma(&self, state: &ChainState) -> Result<f64> {
        let eta = self.data.linear_predictor(&state.beta)?;
        Ok(self.gamma_from_eta(&eta, state.gamma, state))
    }

    fn gamma_from_eta(&self, eta: &[f64], gamma: f64, state: &ChainState) -> f64 {
        if !(gamma > 0.0) {
            return f64::NEG_INFINITY;
        }
        let prior = self.prior.log_prior_gamma(gamma)
            + self.prior.log_prior_theta_given_gamma(state.theta, gamma);
        if prior == f64::NEG_INFINITY {
            return prior;
        }
        self.n_events * gamma.ln()
            + (gamma - 1.0) * self.event_log_time_sum
            + self.regression_part(eta, gamma, &state.lambdas)
            + prior
    }

    /// Kernel of `θ`: `Σ_g ln dP(λ_g | θ) + ln π(θ | γ)`.
    pub fn theta(&self, state: &ChainState) -> f64 {
        self.theta_at(state.theta, state)
    }

    fn theta_at(&self, theta: Option<f64>, state: &ChainState) -> f64 {
        let prior = self.prior.log_prior_theta_given_gamma(theta, state.gamma);
        if prior == f64::NEG_INFINITY {
            return prior;
        }
        let th = theta.unwrap_or(0.0);
        prior
            + state
                .lambdas
                .iter()
                .map(|l| self.spec.family.ln_density(*l, th))
                .sum::<f64>()
    }

    /// Kernel of the rate of cluster `g`: `λ^{d_g} exp(−λ u_g) dP(λ | θ)`.
    pub fn lambda(&self, state: &ChainState, g: usize) -> Result<f64> {
        let eta = self.data.linear_predictor(&state.beta)?;
        let u = self.exposure(&eta, state.gamma, g);
        Ok(self.lambda_with_exposure(state.lambdas[g], self.events[g], u, state.theta))
    }

    fn exposure(&self, eta: &[f64], gamma: f64, g: usize) -> f64 {
        let lt = self.data.log_times();
        self.data.clusters()[g]
            .iter()
            .map(|&i| (gamma * (lt[i] - eta[i])).exp())
            .sum()
    }

    fn lambda_with_exposure(&self, lambda: f64, d: u32, u: f64, theta: Option<f64>) -> f64 {
        if !(lambda > 0.0) {
            return f64::NEG_INFINITY;
        }
        f64::from(d) * lambda.ln() - lambda * u
            + self.spec.family.ln_density(lambda, theta.unwrap_or(0.0))
    }

    /// Joint log posterior of `(β, γ, θ, λ)` up to a constant.
    pub fn joint(&self, state: &ChainState) -> Result<f64> {
        let eta = self.data.linear_predictor(&state.beta)?;
        let lt = self.data.log_times();
        let st = self.data.status();
        let mut out = 0.0;
        for i in 0..eta.len() {
            let z = lt[i] - eta[i];
            if st[i] {
                out += state.gamma.ln() + state.gamma * z - lt[i]
                    + state.lambdas[self.data.cluster_of(i)].ln();
            }
            out -= state.lambdas[self.data.cluster_of(i)] * (state.gamma * z).exp();
        }
        if self.spec.free_shape() {
            out += self.prior.log_prior_gamma(state.gamma);
        }
        if self.spec.family.has_latent_rates() {
            out += self.theta(state);
        }
        Ok(out)
    }
}

const BLOCK_GAMMA: &str = "gamma";
const BLOCK_THETA: &str = "theta";

/// Adaptive Metropolis-within-Gibbs chain.
#[derive(Debug, Clone)]
pub struct GibbsSampler<'a> {
    data: &'a SurvivalDataset,
    spec: ModelSpec,
    plan: RunPlan,
    kernels: FullConditionals<'a>,
    rng: ChaCha8Rng,
    state: ChainState,
    eta: Vec<f64>,
    accepted: Vec<u64>,
    proposed: Vec<u64>,
    batch_accepted: Vec<u64>,
    batch_proposed: Vec<u64>,
    batches: usize,
    bad_evaluations: usize,
}

/// Non-finite kernel values tolerated in a row before aborting.
const MAX_BAD_EVALUATIONS: usize = 1000;

impl<'a> GibbsSampler<'a> {
    pub fn new(data: &'a SurvivalDataset, spec: ModelSpec, plan: RunPlan) -> Result<Self> {
        plan.validate()?;
        let k = data.n_covariates();
        if data.len() < k {
            return Err(Error::RankDeficient {
                rank: data.len(),
                columns: k,
            });
        }
        let kernels = FullConditionals::new(data, spec)?;
        let state = initial_state(data, &spec)?;
        let blocks = state.proposal_log_scales.len();
        let eta = data.linear_predictor(&state.beta)?;
        Ok(Self {
            data,
            spec,
            plan,
            kernels,
            rng: ChaCha8Rng::seed_from_u64(plan.seed),
            state,
            eta,
            accepted: alloc::vec![0; blocks],
            proposed: alloc::vec![0; blocks],
            batch_accepted: alloc::vec![0; blocks],
            batch_proposed: alloc::vec![0; blocks],
            batches: 0,
            bad_evaluations: 0,
        })
    }

    /// Replaces the starting state.
    pub fn with_state(mut self, state: ChainState) -> Result<Self> {
        state.check(self.spec.family)?;
        if state.beta.len() != self.data.n_covariates()
            || state.lambdas.len() != self.data.n_clusters()
            || state.proposal_log_scales.len() != self.state.proposal_log_scales.len()
        {
            return Err(Error::Contract(
                "state dimensions do not match the data".into(),
            ));
        }
        self.eta = self.data.linear_predictor(&state.beta)?;
        self.state = state;
        Ok(self)
    }

    pub fn state(&self) -> &ChainState {
        &self.state
    }

    pub fn kernels(&self) -> &FullConditionals<'a> {
        &self.kernels
    }

    fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    fn accept(&mut self, log_ratio: f64, block: usize, label: &'static str) -> Result<bool> {
        self.proposed[block] += 1;
        self.batch_proposed[block] += 1;
        if log_ratio.is_nan() || log_ratio == f64::INFINITY {
            self.bad_evaluations += 1;
            if self.bad_evaluations > MAX_BAD_EVALUATIONS {
                return Err(Error::SamplerAbort {
                    iteration: self.state.iteration,
                    block: label,
                    state: self.state.describe(),
                });
            }
            return Ok(false);
        }
        self.bad_evaluations = 0;
        let u: f64 = self.rng.random();
        let ok = u.ln() < log_ratio;
        if ok {
            self.accepted[block] += 1;
            self.batch_accepted[block] += 1;
        }
        Ok(ok)
    }

    /// One full scan over all blocks.
    pub fn sweep(&mut self) -> Result<()> {
        let k = self.data.n_covariates();
        let x = self.data.covariates();
        for j in 0..k {
            let step = self.state.proposal_log_scales[j].exp() * self.normal();
            let current = self.kernels.beta_from_eta(&self.eta, &self.state);
            let proposal: Vec<f64> = (0..self.eta.len())
                .map(|i| self.eta[i] + step * x[(i, j)])
                .collect();
            let next = self.kernels.beta_from_eta(&proposal, &self.state);
            if self.accept(next - current, j, "beta")? {
                self.state.beta[j] += step;
                self.eta = proposal;
            }
        }

        if self.spec.free_shape() {
            let b = k;
            let step = self.state.proposal_log_scales[b].exp() * self.normal();
            let g_new = self.state.gamma * step.exp();
            let current = self
                .kernels
                .gamma_from_eta(&self.eta, self.state.gamma, &self.state);
            let next = self.kernels.gamma_from_eta(&self.eta, g_new, &self.state);
            // Jacobian of the log transform
            if self.accept(next - current + step, b, BLOCK_GAMMA)? {
                self.state.gamma = g_new;
            }
        }

        if let Some(theta) = self.state.theta {
            let b = k + 1;
            let lower = theta_lower_bound(self.spec.family, self.state.gamma);
            let y = (theta - lower).ln();
            let step = self.state.proposal_log_scales[b].exp() * self.normal();
            let t_new = lower + (y + step).exp();
            let current = self.kernels.theta_at(Some(theta), &self.state);
            let next = self.kernels.theta_at(Some(t_new), &self.state);
            if self.accept(next - current + step, b, BLOCK_THETA)? {
                self.state.theta = Some(t_new);
            }
        }

        self.update_lambdas(k + 2)?;

        self.state.iteration += 1;
        if cfg!(debug_assertions) {
            self.state.check(self.spec.family)?;
        }
        Ok(())
    }

    fn update_lambdas(&mut self, first_block: usize) -> Result<()> {
        let family = self.spec.family;
        if !family.has_latent_rates() {
            return Ok(());
        }
        let gamma = self.state.gamma;
        let theta = self.state.theta;
        for g in 0..self.data.n_clusters() {
            let u = self.kernels.exposure(&self.eta, gamma, g);
            let d = f64::from(self.kernels.events[g]);
            match family {
                MixingFamily::Gamma | MixingFamily::ExponentialOne => {
                    let a = if family == MixingFamily::Gamma {
                        theta.unwrap_or(1.0)
                    } else {
                        1.0
                    };
                    let draw = GammaDist::new(a + d, 1.0 / (a + u))
                        .map_err(|_| Error::SamplerAbort {
                            iteration: self.state.iteration,
                            block: "lambda",
                            state: self.state.describe(),
                        })?
                        .sample(&mut self.rng);
                    self.state.lambdas[g] = draw.max(f64::MIN_POSITIVE);
                }
                _ => {
                    let b = first_block + g;
                    let step = self.state.proposal_log_scales[b].exp() * self.normal();
                    let l = self.state.lambdas[g];
                    let l_new = l * step.exp();
                    let dg = self.kernels.events[g];
                    let current = self.kernels.lambda_with_exposure(l, dg, u, theta);
                    let next = self.kernels.lambda_with_exposure(l_new, dg, u, theta);
                    if self.accept(next - current + step, b, "lambda")? {
                        self.state.lambdas[g] = l_new;
                    }
                }
            }
        }
        Ok(())
    }

    fn adapt(&mut self) {
        self.batches += 1;
        let rate = (self.batches as f64).powf(-0.6);
        for b in 0..self.batch_proposed.len() {
            if self.batch_proposed[b] > 0 {
                let acc = self.batch_accepted[b] as f64 / self.batch_proposed[b] as f64;
                self.state.proposal_log_scales[b] += rate * (acc - self.plan.target_acceptance);
            }
            self.batch_accepted[b] = 0;
            self.batch_proposed[b] = 0;
        }
    }

    fn block_labels(&self) -> Vec<String> {
        let k = self.data.n_covariates();
        let mut labels: Vec<String> = (0..k).map(|j| alloc::format!("beta{j}")).collect();
        labels.push(BLOCK_GAMMA.into());
        labels.push(BLOCK_THETA.into());
        labels.extend((0..self.data.n_clusters()).map(|g| alloc::format!("lambda{g}")));
        labels
    }

    /// Runs the full plan.
    pub fn run(mut self) -> Result<PosteriorDraws> {
        let burn = self.plan.burn_in();
        let model = MarginalModel::new(self.data, self.spec.family);
        let mut out = PosteriorDraws {
            spec: self.spec,
            covariate_names: self.data.covariate_names().to_vec(),
            iterations: Vec::with_capacity(self.plan.retained()),
            draws: Vec::with_capacity(self.plan.retained()),
            lambda_draws: self.plan.keep_lambdas.then(Vec::new),
            per_draw_loglik: Vec::with_capacity(self.plan.retained()),
            per_draw_cluster_loglik: Vec::with_capacity(self.plan.retained()),
            acceptance_rates: Vec::new(),
        };
        for it in 0..self.plan.total_iterations {
            self.sweep()?;
            if it < burn {
                if (it + 1) % self.plan.adaptation_window == 0 {
                    self.adapt();
                }
                if it + 1 == burn {
                    self.accepted.iter_mut().for_each(|a| *a = 0);
                    self.proposed.iter_mut().for_each(|p| *p = 0);
                }
                continue;
            }
            if (it + 1 - burn) % self.plan.thin != 0 {
                continue;
            }
            let cl =
                model.cluster_logliks_from_eta(&self.eta, self.state.gamma, self.state.theta)?;
            let total: f64 = cl.iter().sum();
            if !total.is_finite() {
                return Err(Error::SamplerAbort {
                    iteration: it,
                    block: "marginal likelihood",
                    state: self.state.describe(),
                });
            }
            out.iterations.push(it + 1);
            out.draws.push(Draw {
                beta: self.state.beta.clone(),
                gamma: self.state.gamma,
                theta: self.state.theta,
            });
            if let Some(l) = out.lambda_draws.as_mut() {
                l.push(self.state.lambdas.clone());
            }
            out.per_draw_loglik.push(total);
            out.per_draw_cluster_loglik.push(cl);
        }
        out.acceptance_rates = self
            .block_labels()
            .into_iter()
            .zip(self.accepted.iter().zip(&self.proposed))
            .filter(|(_, (_, p))| **p > 0)
            .map(|(label, (a, p))| (label, *a as f64 / *p as f64))
            .collect();
        Ok(out)
    }
}

/// Least-squares `β`, the fixed or unit `γ`, θ at the prior-median `cv`,
/// all rates 1.
pub fn initial_state(data: &SurvivalDataset, spec: &ModelSpec) -> Result<ChainState> {
    let beta = data.log_time_least_squares()?;
    let gamma = match spec.shape {
        ShapeMode::Fixed(g) => g,
        ShapeMode::Free => 1.0,
    };
    let theta = if spec.family.has_theta() {
        let cv = CvSpec::new(spec.expected_cv, spec.family, gamma)?;
        Some(theta_for_cv(spec.family, gamma, cv.median_cv()?)?)
    } else {
        None
    };
    let k = beta.len();
    // scale β steps by the least-squares standard errors
    let x = data.covariates();
    let eta = data.linear_predictor(&beta)?;
    let resid: f64 = data
        .log_times()
        .iter()
        .zip(&eta)
        .map(|(y, e)| (y - e) * (y - e))
        .sum::<f64>()
        / (data.len().saturating_sub(k).max(1)) as f64;
    let xtx_inv = (x.transpose() * x)
        .try_inverse()
        .ok_or(Error::RankDeficient {
            rank: 0,
            columns: k,
        })?;
    let mut scales: Vec<f64> = (0..k)
        .map(|j| (resid.max(1e-4) * xtx_inv[(j, j)]).sqrt().max(1e-6).ln())
        .collect();
    scales.push(0.1f64.ln());
    scales.push(0.5f64.ln());
    scales.extend(core::iter::repeat_n(0.5f64.ln(), data.n_clusters()));
    Ok(ChainState {
        beta,
        gamma,
        theta,
        lambdas: alloc::vec![1.0; data.n_clusters()],
        proposal_log_scales: scales,
        iteration: 0,
    })
}

/// Builds the sampler and runs it.
pub fn run(data: &SurvivalDataset, spec: ModelSpec, plan: RunPlan) -> Result<PosteriorDraws> {
    GibbsSampler::new(data, spec, plan)?.run()
}
