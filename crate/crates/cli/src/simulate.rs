//! Synthetic RMW-AFT data with exponential censoring at a target fraction.

use anyhow::{ensure, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use rmwaft_core::data::SurvivalDataset;
use rmwaft_core::distribution::{aft_rate, RmwParams};
use rmwaft_core::MixingFamily;

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSpec {
    pub n: usize,
    pub family: MixingFamily,
    /// Intercept first; each further coefficient gets a standard normal covariate.
    pub beta: Vec<f64>,
    pub gamma: f64,
    pub theta: Option<f64>,
    /// Expected share of censored rows.
    pub censoring: f64,
}

impl SimulationSpec {
    /// n = 200 RME-Gamma rows, θ = 2, β = (3, −0.3), 30% censoring.
    pub fn gamma_recovery() -> Self {
        Self {
            n: 200,
            family: MixingFamily::Gamma,
            beta: vec![3.0, -0.3],
            gamma: 1.0,
            theta: Some(2.0),
            censoring: 0.3,
        }
    }
}

const PILOT: usize = 20_000;

fn event_time(spec: &SimulationSpec, x: &[f64], rng: &mut ChaCha8Rng) -> Result<f64> {
    let alpha = aft_rate(x, &spec.beta, spec.gamma)?;
    let lambda = spec.family.sample_rate(spec.theta.unwrap_or(0.0), rng);
    let e: f64 = rng.sample(Exp1);
    Ok((e / (alpha * lambda)).powf(1.0 / spec.gamma))
}

fn covariates(k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut x = vec![1.0];
    x.extend((1..k).map(|_| rng.sample::<f64, _>(StandardNormal)));
    x
}

/// Rate κ of the exponential censoring time with `P(C < T) = target`, from
/// a pilot sample of event times.
fn censoring_rate(spec: &SimulationSpec, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let t: Vec<f64> = (0..PILOT)
        .map(|_| {
            let x = covariates(spec.beta.len(), &mut rng);
            event_time(spec, &x, &mut rng)
        })
        .collect::<Result<_>>()?;
    let share = |log_k: f64| {
        let k = log_k.exp();
        t.iter().map(|ti| -(-k * ti).exp_m1()).sum::<f64>() / t.len() as f64
    };
    let (mut lo, mut hi) = (-60.0, 60.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if share(mid) < spec.censoring {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}

/// Draws a dataset; the covariates are named `x1, x2, ...`.
pub fn simulate(spec: &SimulationSpec, seed: u64) -> Result<SurvivalDataset> {
    ensure!(
        spec.n > 0 && !spec.beta.is_empty(),
        "need rows and an intercept"
    );
    ensure!(
        (0.0..1.0).contains(&spec.censoring),
        "censoring share must be in [0, 1)"
    );
    RmwParams::new(spec.family, 1.0, spec.gamma, spec.theta)?;
    let kappa = if spec.censoring > 0.0 {
        Some(censoring_rate(spec, seed)?)
    } else {
        None
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = spec.beta.len();
    let (mut times, mut status, mut rows) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..spec.n {
        let x = covariates(k, &mut rng);
        let t = event_time(spec, &x, &mut rng)?;
        let c = match kappa {
            Some(kappa) => rng.sample::<f64, _>(Exp1) / kappa,
            None => f64::INFINITY,
        };
        times.push(t.min(c));
        status.push(u8::from(t <= c));
        rows.push(x[1..].to_vec());
    }
    let names: Vec<String> = (1..k).map(|j| format!("x{j}")).collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    Ok(SurvivalDataset::with_intercept(
        times, status, &rows, &refs, None,
    )?)
}
