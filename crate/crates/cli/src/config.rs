//! TOML run configuration.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, ensure, Context, Result};
use rmwaft_core::gibbs::RunPlan;
use rmwaft_core::model::{ModelSpec, ShapeMode};
use rmwaft_core::MixingFamily;
use serde::{Deserialize, Serialize};

use crate::dataset::Schema;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Track {
    Bayes,
    Classical,
    Both,
}

impl Track {
    pub fn bayes(self) -> bool {
        self != Track::Classical
    }

    pub fn classical(self) -> bool {
        self != Track::Bayes
    }
}

/// Weibull shape handling of one model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    /// `γ = 1` (exponential / RME).
    Unit,
    /// `γ` estimated (Weibull / RMW).
    Free,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEntry {
    /// `none`, `gamma`, `inverse-gaussian`, `log-normal`, `exponential-one`.
    pub family: String,
    pub shape: Shape,
}

impl ModelEntry {
    pub fn family(&self) -> Result<MixingFamily> {
        MixingFamily::from_label(&self.family)
            .ok_or_else(|| anyhow!("unknown mixing family `{}`", self.family))
    }

    /// One spec per `E(cv)` value, or a single spec when the prior on θ
    /// does not enter.
    pub fn specs(&self, expected_cv: &[f64]) -> Result<Vec<ModelSpec>> {
        let family = self.family()?;
        let shape = match self.shape {
            Shape::Unit => ShapeMode::Fixed(1.0),
            Shape::Free => ShapeMode::Free,
        };
        if !family.has_theta() {
            let base = if self.shape == Shape::Unit {
                ModelSpec::exponential()
            } else {
                ModelSpec::weibull()
            };
            return Ok(vec![ModelSpec::new(family, shape, base.expected_cv)?]);
        }
        expected_cv
            .iter()
            .map(|e| ModelSpec::new(family, shape, *e).map_err(Into::into))
            .collect()
    }
}

/// Overrides of the desk run plan.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanOverrides {
    pub total_iterations: Option<usize>,
    pub burn_in_fraction: Option<f64>,
    pub thin: Option<usize>,
    pub retained: Option<usize>,
    pub target_acceptance: Option<f64>,
    pub adaptation_window: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub path: PathBuf,
    #[serde(flatten)]
    pub schema: Schema,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    pub models: Vec<ModelEntry>,
    #[serde(default = "default_expected_cv")]
    pub expected_cv: Vec<f64>,
    /// Label of the model Bayes factors are computed against.
    pub baseline: Option<String>,
    #[serde(default)]
    pub plan: PlanOverrides,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_track")]
    pub track: Track,
    /// Estimate log marginal likelihoods (power posterior) for Bayes factors.
    #[serde(default = "yes")]
    pub marginal_likelihood: bool,
}

fn default_expected_cv() -> Vec<f64> {
    vec![2.0]
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_track() -> Track {
    Track::Both
}

fn yes() -> bool {
    true
}

impl RunConfig {
    /// Reads a config; a relative dataset path is taken relative to the
    /// config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if cfg.dataset.path.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.dataset.path = dir.join(&cfg.dataset.path);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(!self.models.is_empty(), "config lists no models");
        ensure!(!self.expected_cv.is_empty(), "expected_cv grid is empty");
        for e in &self.expected_cv {
            // cv of the Weibull law is 1 at γ = 1; the elicited mean must exceed it
            ensure!(*e > 1.0 && e.is_finite(), "E(cv) = {e} must exceed 1");
        }
        for m in &self.models {
            m.specs(&self.expected_cv)?;
        }
        if let Some(b) = &self.baseline {
            ensure!(
                self.specs()?.iter().any(|s| s.label() == *b),
                "baseline `{b}` is not among the configured models"
            );
        }
        self.plan(false)?;
        Ok(())
    }

    /// Every configured (model, E(cv)) cell in config order.
    pub fn specs(&self) -> Result<Vec<ModelSpec>> {
        let mut out = Vec::new();
        for m in &self.models {
            out.extend(m.specs(&self.expected_cv)?);
        }
        Ok(out)
    }

    /// The desk plan with overrides, or the paper-scale plan.
    pub fn plan(&self, paper_scale: bool) -> Result<RunPlan> {
        let mut plan = if paper_scale {
            RunPlan::paper(self.seed)
        } else {
            RunPlan::desk(self.seed)
        };
        let o = &self.plan;
        if !paper_scale {
            if let Some(v) = o.total_iterations {
                plan.total_iterations = v;
            }
            if let Some(v) = o.burn_in_fraction {
                plan.burn_in_fraction = v;
            }
            match (o.thin, o.retained) {
                (Some(_), Some(_)) => bail!("set either plan.thin or plan.retained, not both"),
                (Some(t), None) => plan.thin = t,
                (None, Some(r)) => {
                    plan = RunPlan {
                        thin: RunPlan::with_retained(
                            plan.total_iterations,
                            plan.burn_in_fraction,
                            r,
                            0,
                        )
                        .thin,
                        ..plan
                    }
                }
                (None, None) => {}
            }
        }
        if let Some(v) = o.target_acceptance {
            plan.target_acceptance = v;
        }
        if let Some(v) = o.adaptation_window {
            plan.adaptation_window = v;
        }
        plan.validate()?;
        Ok(plan)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const KIDNEY: &str = r#"
        seed = 7
        out = "out/kidney"
        expected_cv = [2.0, 5.0]
        baseline = "Weibull"

        [dataset]
        path = "kidney.csv"
        time = "time"
        status = "status"
        group = "id"
        covariates = [
            { name = "age", column = "age" },
            { name = "female", column = "sex", indicator = "2" },
        ]

        [[models]]
        family = "none"
        shape = "free"

        [[models]]
        family = "gamma"
        shape = "unit"

        [plan]
        total_iterations = 20000
        retained = 1000
    "#;

    #[test]
    fn parses_grid_and_plan() {
        let cfg: RunConfig = toml::from_str(KIDNEY).unwrap();
        cfg.validate().unwrap();
        let labels: Vec<String> = cfg.specs().unwrap().iter().map(|s| s.label()).collect();
        assert_eq!(labels, ["Weibull", "RME-GAM", "RME-GAM"]);
        assert_eq!(cfg.dataset.schema, Schema::kidney());
        let plan = cfg.plan(false).unwrap();
        assert_eq!(
            (plan.total_iterations, plan.thin, plan.retained(), plan.seed),
            (20_000, 15, 1000, 7)
        );
        assert_eq!(cfg.plan(true).unwrap().retained(), 9000);
        assert_eq!(cfg.track, Track::Both);
    }

    #[test]
    fn rejects_bad_grids() {
        let mut cfg: RunConfig = toml::from_str(KIDNEY).unwrap();
        cfg.expected_cv = vec![0.9];
        assert!(cfg.validate().is_err());
        cfg.expected_cv = vec![2.0];
        cfg.models.clear();
        assert!(cfg.validate().is_err());
        let mut cfg: RunConfig = toml::from_str(KIDNEY).unwrap();
        cfg.baseline = Some("Exponential".into());
        assert!(cfg.validate().is_err());
        cfg.baseline = None;
        cfg.models[1].family = "cauchy".into();
        assert!(cfg.validate().is_err());
    }
}
