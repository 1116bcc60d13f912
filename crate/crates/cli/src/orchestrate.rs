//! Runs the configured Bayesian and classical cells.

use anyhow::{Context, Result};
use rayon::prelude::*;
use rmwaft_core::assessment::{
    cpo_and_psbf, dic, log_marginal_likelihood, outlier_bf, posterior_summaries, r_cv_posterior,
    CpoResult, OutlierBf, ParameterSummary, PowerPosteriorConfig, RcvSummary, ReferenceRate,
    CPO_TRIM,
};
use rmwaft_core::classical::{fit_aft_mle, Frailty, LogNormalConstraint, MleFit};
use rmwaft_core::gibbs::{run, PosteriorDraws, RunPlan};
use rmwaft_core::model::{MarginalModel, ModelSpec, ShapeMode};
use rmwaft_core::MixingFamily;

use crate::config::{RunConfig, Track};
use crate::dataset::{load_dataset, sha256_hex, LoadedDataset};

/// Command-line settings layered over a config.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub paper_scale: bool,
    /// Worker threads; `None` uses rayon's default.
    pub threads: Option<usize>,
}

/// Everything computed for one Bayesian cell.
#[derive(Debug, Clone)]
pub struct BayesOutcome {
    pub draws: PosteriorDraws,
    pub summaries: Vec<ParameterSummary>,
    pub dic: f64,
    pub p_d: f64,
    pub cpo: CpoResult,
    pub r_cv: Option<RcvSummary>,
    pub lambda_ref: f64,
    pub outlier_bf: OutlierBf,
    pub log_marginal: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct BayesCell {
    pub spec: ModelSpec,
    pub plan: RunPlan,
    pub outcome: Result<BayesOutcome, String>,
}

#[derive(Debug, Clone)]
pub struct ClassicalCell {
    /// Label of the Bayesian model with the same likelihood.
    pub model: String,
    pub frailty: Frailty,
    pub gamma_fixed: Option<f64>,
    pub outcome: Result<MleFit, String>,
}

#[derive(Debug, Clone)]
pub struct RunResults {
    pub config: RunConfig,
    pub options: RunOptions,
    pub dataset: LoadedDataset,
    pub bayes: Vec<BayesCell>,
    pub classical: Vec<ClassicalCell>,
}

impl RunResults {
    pub fn failures(&self) -> usize {
        self.bayes.iter().filter(|c| c.outcome.is_err()).count()
            + self.classical.iter().filter(|c| c.outcome.is_err()).count()
    }
}

/// Seed of one cell, from the run seed and the cell's identity, so a cell
/// draws the same chain whatever else is configured.
pub fn cell_seed(seed: u64, spec: &ModelSpec) -> u64 {
    let key = format!("{seed}|{}|{:?}", spec.label(), spec.expected_cv.to_bits());
    u64::from_str_radix(&sha256_hex(key.as_bytes())[..16], 16).expect("hex digest")
}

/// Classical analogue of a Bayesian model, if there is one.
pub fn classical_counterpart(spec: &ModelSpec) -> Option<(Frailty, Option<f64>)> {
    let frailty = match spec.family {
        MixingFamily::None => Frailty::None,
        MixingFamily::Gamma => Frailty::Gamma,
        MixingFamily::InverseGaussian => Frailty::InverseGaussian,
        MixingFamily::LogNormal => Frailty::LogNormal(LogNormalConstraint::Ew0),
        MixingFamily::ExponentialOne => return None,
    };
    let gamma_fixed = match spec.shape {
        ShapeMode::Fixed(g) => Some(g),
        ShapeMode::Free => None,
    };
    Some((frailty, gamma_fixed))
}

/// Samples one cell and computes its assessment quantities.
pub fn run_bayes_cell(
    loaded: &LoadedDataset,
    spec: ModelSpec,
    plan: RunPlan,
    marginal_likelihood: bool,
) -> Result<BayesOutcome> {
    let data = &loaded.data;
    let draws = run(data, spec, plan).with_context(|| format!("sampling {}", spec.label()))?;
    let model = MarginalModel::new(data, spec.family);
    let summaries = posterior_summaries(&draws)?;
    let (dic, p_d) = dic(&draws, &model)?;
    let cpo = cpo_and_psbf(&draws, CPO_TRIM)?;
    let r_cv = if spec.family.has_theta() {
        Some(r_cv_posterior(&draws, spec.family)?)
    } else {
        None
    };
    let reference = ReferenceRate::from_draws(&draws)?;
    let outlier_bf = outlier_bf(&draws, &model, reference)?;
    let log_marginal = if marginal_likelihood {
        let cfg = PowerPosteriorConfig {
            seed: plan.seed ^ 0x70_7770,
            ..PowerPosteriorConfig::default()
        };
        Some(log_marginal_likelihood(&draws, &model, cfg)?.log_marginal)
    } else {
        None
    };
    Ok(BayesOutcome {
        draws,
        summaries,
        dic,
        p_d,
        cpo,
        r_cv,
        lambda_ref: reference.lambda_ref,
        outlier_bf,
        log_marginal,
    })
}

/// Runs every configured cell; failures are recorded per cell.
pub fn orchestrate(config: &RunConfig, options: &RunOptions) -> Result<RunResults> {
    config.validate()?;
    let loaded = load_dataset(&config.dataset.path, &config.dataset.schema)?;
    let base_plan = config.plan(options.paper_scale)?;
    let specs = config.specs()?;

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = options.threads {
        pool = pool.num_threads(n);
    }
    let pool = pool.build()?;

    let bayes: Vec<BayesCell> = if config.track.bayes() {
        pool.install(|| {
            specs
                .par_iter()
                .map(|spec| {
                    let plan = RunPlan {
                        seed: cell_seed(config.seed, spec),
                        ..base_plan
                    };
                    let outcome = run_bayes_cell(&loaded, *spec, plan, config.marginal_likelihood)
                        .map_err(|e| format!("{e:#}"));
                    BayesCell {
                        spec: *spec,
                        plan,
                        outcome,
                    }
                })
                .collect()
        })
    } else {
        Vec::new()
    };

    let mut targets: Vec<(String, Frailty, Option<f64>)> = Vec::new();
    if config.track.classical() {
        for spec in &specs {
            if let Some((f, g)) = classical_counterpart(spec) {
                if !targets.iter().any(|(_, f2, g2)| *f2 == f && *g2 == g) {
                    targets.push((spec.label(), f, g));
                }
            }
        }
    }
    let classical = pool.install(|| {
        targets
            .par_iter()
            .map(|(model, frailty, gamma_fixed)| ClassicalCell {
                model: model.clone(),
                frailty: *frailty,
                gamma_fixed: *gamma_fixed,
                outcome: fit_aft_mle(&loaded.data, *frailty, *gamma_fixed)
                    .map_err(|e| e.to_string()),
            })
            .collect()
    });

    Ok(RunResults {
        config: config.clone(),
        options: options.clone(),
        dataset: loaded,
        bayes,
        classical,
    })
}

/// Thread count from `RMWAFT_THREADS`, if set to a positive integer.
pub fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var("RMWAFT_THREADS") {
        Ok(v) => {
            let n: usize = v
                .trim()
                .parse()
                .with_context(|| format!("RMWAFT_THREADS={v}"))?;
            anyhow::ensure!(n > 0, "RMWAFT_THREADS must be positive");
            Ok(Some(n))
        }
        Err(_) => Ok(None),
    }
}

impl RunConfig {
    /// Keeps only the cell(s) whose label matches `model`, optionally at one `E(cv)`.
    pub fn restrict(&mut self, model: &str, expected_cv: Option<f64>) -> Result<()> {
        let wanted = model.to_ascii_uppercase();
        let mut kept = Vec::new();
        for m in &self.models {
            if m.specs(&self.expected_cv)?
                .iter()
                .any(|s| s.label().to_ascii_uppercase() == wanted)
            {
                kept.push(m.clone());
            }
        }
        anyhow::ensure!(!kept.is_empty(), "model `{model}` is not in the config");
        self.models = kept;
        if let Some(e) = expected_cv {
            self.expected_cv = vec![e];
        }
        if self
            .baseline
            .as_deref()
            .is_some_and(|b| b.to_ascii_uppercase() != wanted)
        {
            self.baseline = None;
        }
        self.validate()
    }
}

/// Track override helper for the CLI.
pub fn apply_overrides(
    config: &mut RunConfig,
    seed: Option<u64>,
    track: Option<Track>,
    out: Option<std::path::PathBuf>,
) {
    if let Some(s) = seed {
        config.seed = s;
    }
    if let Some(t) = track {
        config.track = t;
    }
    if let Some(o) = out {
        config.out = o;
    }
}
