//! Draw files, the JSON run report and the flat comparison/DIC tables.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rmwaft_core::assessment::{log_psbf, median};
use rmwaft_core::gibbs::{PosteriorDraws, RunPlan};
use rmwaft_core::model::ModelSpec;
use serde::Serialize;

use crate::dataset::write_text;
use crate::orchestrate::{BayesCell, BayesOutcome, ClassicalCell, RunResults};

/// 17 significant digits.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// File stem of a cell: `rme-gam_ecv2`, `weibull`, ...
pub fn cell_slug(spec: &ModelSpec) -> String {
    let base = spec.label().to_ascii_lowercase();
    if spec.family.has_theta() {
        format!("{base}_ecv{}", spec.expected_cv)
    } else {
        base
    }
}

#[derive(Debug, Serialize)]
struct PlanInfo {
    total_iterations: usize,
    burn_in_fraction: f64,
    thin: usize,
    retained: usize,
    target_acceptance: f64,
    adaptation_window: usize,
    seed: u64,
}

impl From<&RunPlan> for PlanInfo {
    fn from(p: &RunPlan) -> Self {
        Self {
            total_iterations: p.total_iterations,
            burn_in_fraction: p.burn_in_fraction,
            thin: p.thin,
            retained: p.retained(),
            target_acceptance: p.target_acceptance,
            adaptation_window: p.adaptation_window,
            seed: p.seed,
        }
    }
}

#[derive(Debug, Serialize)]
struct Sidecar<'a> {
    model: String,
    family: &'a str,
    fixed_gamma: Option<f64>,
    expected_cv: Option<f64>,
    plan: PlanInfo,
    dataset_sha256: &'a str,
    columns: Vec<String>,
}

#[derive(Debug, Serialize)]
struct Interval {
    estimate: f64,
    lower: f64,
    upper: f64,
}

#[derive(Debug, Serialize)]
struct ParamBlock {
    name: String,
    median: f64,
    mean: f64,
    sd: f64,
    hpd_lower: f64,
    hpd_upper: f64,
}

#[derive(Debug, Serialize)]
struct OutlierBlock {
    lambda_ref: f64,
    /// Per cluster, in order of first appearance in the file.
    bf: Vec<f64>,
    most_outlying: usize,
    heavy_tailed: Vec<usize>,
}

#[derive(Debug, Serialize)]
struct BayesBlock {
    model: String,
    expected_cv: Option<f64>,
    plan: PlanInfo,
    draws_file: Option<String>,
    error: Option<String>,
    parameters: Vec<ParamBlock>,
    dic: Option<f64>,
    p_d: Option<f64>,
    log_pseudo_marginal: Option<f64>,
    log_cpo: Vec<f64>,
    cpo_trim: f64,
    log_psbf_vs_baseline: Option<f64>,
    log_marginal_likelihood: Option<f64>,
    log_bf_vs_baseline: Option<f64>,
    r_cv: Option<RcvBlock>,
    outlier_bf: Option<OutlierBlock>,
    acceptance_rates: BTreeMap<String, f64>,
}

#[derive(Debug, Serialize)]
struct RcvBlock {
    median: f64,
    hpd_lower: Option<f64>,
    hpd_upper: Option<f64>,
    excluded_draws: usize,
}

#[derive(Debug, Serialize)]
struct ClassicalBlock {
    model: String,
    frailty: &'static str,
    fixed_gamma: Option<f64>,
    error: Option<String>,
    parameters: BTreeMap<String, Interval>,
    standard_errors: BTreeMap<String, f64>,
    loglik: Option<f64>,
    converged: bool,
    boundary: bool,
    iterations: usize,
}

#[derive(Debug, Serialize)]
struct DatasetBlock {
    path: String,
    sha256: String,
    rows: usize,
    events: usize,
    clusters: usize,
    covariates: Vec<String>,
}

#[derive(Debug, Serialize)]
struct Report {
    dataset: DatasetBlock,
    seed: u64,
    paper_scale: bool,
    track: crate::config::Track,
    baseline: Option<String>,
    bayes: Vec<BayesBlock>,
    classical: Vec<ClassicalBlock>,
    failures: usize,
}

fn baseline<'a>(results: &'a RunResults) -> Option<&'a BayesOutcome> {
    let label = results.config.baseline.as_ref()?;
    results
        .bayes
        .iter()
        .find(|c| c.spec.label() == *label)
        .and_then(|c| c.outcome.as_ref().ok())
}

fn bayes_block(
    cell: &BayesCell,
    base: Option<&BayesOutcome>,
    draws_file: Option<String>,
) -> BayesBlock {
    let plan = PlanInfo::from(&cell.plan);
    let expected_cv = cell
        .spec
        .family
        .has_theta()
        .then_some(cell.spec.expected_cv);
    match &cell.outcome {
        Err(e) => BayesBlock {
            model: cell.spec.label(),
            expected_cv,
            plan,
            draws_file: None,
            error: Some(e.clone()),
            parameters: vec![],
            dic: None,
            p_d: None,
            log_pseudo_marginal: None,
            log_cpo: vec![],
            cpo_trim: rmwaft_core::assessment::CPO_TRIM,
            log_psbf_vs_baseline: None,
            log_marginal_likelihood: None,
            log_bf_vs_baseline: None,
            r_cv: None,
            outlier_bf: None,
            acceptance_rates: BTreeMap::new(),
        },
        Ok(o) => {
            let bf = &o.outlier_bf.values;
            let most_outlying = (0..bf.len())
                .min_by(|a, b| bf[*a].total_cmp(&bf[*b]))
                .unwrap_or(0);
            BayesBlock {
                model: cell.spec.label(),
                expected_cv,
                plan,
                draws_file,
                error: None,
                parameters: o
                    .summaries
                    .iter()
                    .map(|s| ParamBlock {
                        name: s.name.clone(),
                        median: s.median,
                        mean: s.mean,
                        sd: s.sd,
                        hpd_lower: s.hpd_lower,
                        hpd_upper: s.hpd_upper,
                    })
                    .collect(),
                dic: Some(o.dic),
                p_d: Some(o.p_d),
                log_pseudo_marginal: Some(o.cpo.log_pseudo_marginal),
                log_cpo: o.cpo.log_cpo.clone(),
                cpo_trim: rmwaft_core::assessment::CPO_TRIM,
                log_psbf_vs_baseline: base.map(|b| log_psbf(&o.cpo, &b.cpo)),
                log_marginal_likelihood: o.log_marginal,
                log_bf_vs_baseline: base.and_then(|b| Some(o.log_marginal? - b.log_marginal?)),
                r_cv: o.r_cv.as_ref().map(|r| RcvBlock {
                    median: r.median,
                    hpd_lower: r.hpd_lower.is_finite().then_some(r.hpd_lower),
                    hpd_upper: r.hpd_upper.is_finite().then_some(r.hpd_upper),
                    excluded_draws: r.excluded,
                }),
                outlier_bf: Some(OutlierBlock {
                    lambda_ref: o.lambda_ref,
                    bf: bf.clone(),
                    most_outlying,
                    heavy_tailed: o.outlier_bf.heavy_tailed.clone(),
                }),
                acceptance_rates: o.draws.acceptance_rates.iter().cloned().collect(),
            }
        }
    }
}

fn classical_block(cell: &ClassicalCell) -> ClassicalBlock {
    let mut block = ClassicalBlock {
        model: cell.model.clone(),
        frailty: cell.frailty.label(),
        fixed_gamma: cell.gamma_fixed,
        error: None,
        parameters: BTreeMap::new(),
        standard_errors: BTreeMap::new(),
        loglik: None,
        converged: false,
        boundary: false,
        iterations: 0,
    };
    match &cell.outcome {
        Err(e) => block.error = Some(e.clone()),
        Ok(fit) => {
            for (i, name) in fit.names.iter().enumerate() {
                block.parameters.insert(
                    name.clone(),
                    Interval {
                        estimate: fit.estimates[i],
                        lower: fit.intervals[i].0,
                        upper: fit.intervals[i].1,
                    },
                );
                if fit.standard_errors[i].is_finite() {
                    block
                        .standard_errors
                        .insert(name.clone(), fit.standard_errors[i]);
                }
            }
            block.loglik = Some(fit.loglik);
            block.converged = fit.converged;
            block.boundary = fit.boundary;
            block.iterations = fit.iterations;
        }
    }
    block
}

/// Draw table: iteration, β…, γ, θ (when present), marginal log-likelihood.
pub fn write_draws(path: &Path, draws: &PosteriorDraws) -> Result<Vec<String>> {
    let k = draws.draws.first().map_or(0, |d| d.beta.len());
    let mut columns = vec!["iteration".to_string()];
    columns.extend((0..k).map(|j| format!("beta{j}")));
    columns.push("gamma".into());
    let has_theta = draws.spec.family.has_theta();
    if has_theta {
        columns.push("theta".into());
    }
    columns.push("loglik".into());
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(&columns)?;
    for ((it, d), ll) in draws
        .iterations
        .iter()
        .zip(&draws.draws)
        .zip(&draws.per_draw_loglik)
    {
        let mut rec = vec![it.to_string()];
        rec.extend(d.beta.iter().map(|b| num(*b)));
        rec.push(num(d.gamma));
        if let Some(t) = d.theta.filter(|_| has_theta) {
            rec.push(num(t));
        }
        rec.push(num(*ll));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(columns)
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Writes all outputs under `results.config.out`; returns the files written.
pub fn export_report(results: &RunResults) -> Result<Vec<PathBuf>> {
    let out = &results.config.out;
    let draws_dir = out.join("draws");
    fs::create_dir_all(if results.bayes.is_empty() {
        out
    } else {
        &draws_dir
    })
    .with_context(|| format!("creating {}", draws_dir.display()))?;
    let mut written = Vec::new();
    let base = baseline(results);

    let mut bayes = Vec::new();
    for cell in &results.bayes {
        let mut file = None;
        if let Ok(o) = &cell.outcome {
            let slug = cell_slug(&cell.spec);
            let csv_path = draws_dir.join(format!("{slug}.csv"));
            let columns = write_draws(&csv_path, &o.draws)?;
            let sidecar = Sidecar {
                model: cell.spec.label(),
                family: cell.spec.family.label(),
                fixed_gamma: match cell.spec.shape {
                    rmwaft_core::model::ShapeMode::Fixed(g) => Some(g),
                    rmwaft_core::model::ShapeMode::Free => None,
                },
                expected_cv: cell
                    .spec
                    .family
                    .has_theta()
                    .then_some(cell.spec.expected_cv),
                plan: PlanInfo::from(&cell.plan),
                dataset_sha256: &results.dataset.sha256,
                columns,
            };
            let json_path = draws_dir.join(format!("{slug}.json"));
            write_text(
                &json_path,
                &(serde_json::to_string_pretty(&sidecar)? + "\n"),
            )?;
            file = Some(format!("draws/{slug}.csv"));
            written.push(csv_path);
            written.push(json_path);
        }
        bayes.push(bayes_block(cell, base, file));
    }

    let d = &results.dataset.data;
    let report = Report {
        dataset: DatasetBlock {
            path: results.config.dataset.path.display().to_string(),
            sha256: results.dataset.sha256.clone(),
            rows: d.len(),
            events: d.events(),
            clusters: d.n_clusters(),
            covariates: d.covariate_names().to_vec(),
        },
        seed: results.config.seed,
        paper_scale: results.options.paper_scale,
        track: results.config.track,
        baseline: results.config.baseline.clone(),
        bayes,
        classical: results.classical.iter().map(classical_block).collect(),
        failures: results.failures(),
    };
    let report_path = out.join("report.json");
    write_text(
        &report_path,
        &(serde_json::to_string_pretty(&report)? + "\n"),
    )?;
    written.push(report_path);

    let comparison = out.join("comparison.csv");
    write_comparison(&comparison, results)?;
    written.push(comparison);

    if results.config.track.bayes() {
        let dic_path = out.join("dic.csv");
        let mut w = csv::Writer::from_path(&dic_path)?;
        w.write_record(["model", "expected_cv", "dic", "p_d"])?;
        for cell in &results.bayes {
            if let Ok(o) = &cell.outcome {
                let ecv = cell
                    .spec
                    .family
                    .has_theta()
                    .then_some(cell.spec.expected_cv);
                w.write_record([cell.spec.label(), opt(ecv), num(o.dic), num(o.p_d)])?;
            }
        }
        w.flush()?;
        written.push(dic_path);
    }
    Ok(written)
}

/// Estimates with intervals side by side: posterior median and 95% HPD for
/// the Bayesian rows, MLE and 95% Wald interval for the classical rows.
/// The frailty columns hold θ for Bayesian rows and σ² for classical rows.
fn write_comparison(path: &Path, results: &RunResults) -> Result<()> {
    let k = results.dataset.data.n_covariates();
    let mut header = vec!["model".to_string(), "expected_cv".into(), "track".into()];
    for name in
        (0..k)
            .map(|j| format!("beta{j}"))
            .chain(["gamma".into(), "frailty".into(), "r_cv".into()])
    {
        header.push(name.clone());
        header.push(format!("{name}_lower"));
        header.push(format!("{name}_upper"));
    }
    header.push("frailty_parameter".into());
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(&header)?;
    let triple = |v: Option<(f64, f64, f64)>| match v {
        Some((e, l, u)) => [num(e), num(l), num(u)],
        None => [String::new(), String::new(), String::new()],
    };
    for cell in &results.bayes {
        let Ok(o) = &cell.outcome else { continue };
        let find = |name: &str| {
            o.summaries
                .iter()
                .find(|s| s.name == name)
                .map(|s| (s.median, s.hpd_lower, s.hpd_upper))
        };
        let ecv = cell
            .spec
            .family
            .has_theta()
            .then_some(cell.spec.expected_cv);
        let mut rec = vec![cell.spec.label(), opt(ecv), "bayes".into()];
        for j in 0..k {
            rec.extend(triple(find(&format!("beta{j}"))));
        }
        let gamma = find("gamma").or_else(|| match cell.spec.shape {
            rmwaft_core::model::ShapeMode::Fixed(g) => Some((g, g, g)),
            rmwaft_core::model::ShapeMode::Free => None,
        });
        rec.extend(triple(gamma));
        rec.extend(triple(find("theta")));
        rec.extend(triple(
            o.r_cv
                .as_ref()
                .filter(|r| r.hpd_lower.is_finite())
                .map(|r| (median(&r.values), r.hpd_lower, r.hpd_upper)),
        ));
        rec.push(if cell.spec.family.has_theta() {
            "theta".into()
        } else {
            String::new()
        });
        w.write_record(&rec)?;
    }
    for cell in &results.classical {
        let Ok(fit) = &cell.outcome else { continue };
        let find = |name: &str| {
            fit.names
                .iter()
                .position(|n| n == name)
                .map(|i| (fit.estimates[i], fit.intervals[i].0, fit.intervals[i].1))
        };
        let mut rec = vec![cell.model.clone(), String::new(), "classical".into()];
        for j in 0..k {
            rec.extend(triple(find(&format!("beta{j}"))));
        }
        rec.extend(triple(
            find("gamma").or(cell.gamma_fixed.map(|g| (g, g, g))),
        ));
        rec.extend(triple(find("sigma2")));
        rec.extend(triple(None));
        rec.push(if find("sigma2").is_some() {
            "sigma2".into()
        } else {
            String::new()
        });
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
