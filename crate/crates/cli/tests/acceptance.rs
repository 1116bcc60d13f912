//! Acceptance criteria 1 to 11, one PASS/FAIL line each.
//!
//! Runs without the libtest harness so every line is printed. Pass criterion
//! numbers as arguments to run a subset, e.g.
//! `cargo test -p rmwaft --test acceptance -- 7 9`.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use common::GridSampler;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rmwaft::config::{RunConfig, Track};
use rmwaft::orchestrate::{orchestrate, BayesOutcome, RunOptions, RunResults};
use rmwaft::simulate::{simulate, SimulationSpec};
use rmwaft_core::assessment::{log_psbf, median, outlier_bf, ReferenceRate};
use rmwaft_core::classical::{fit_aft_mle, frailty_loglik, Frailty, LogNormalConstraint};
use rmwaft_core::data::SurvivalDataset;
use rmwaft_core::distribution::{rme_logpdf, sample_rmw, weibull_logpdf, RmwParams};
use rmwaft_core::gibbs::{initial_state, run, FullConditionals, RunPlan};
use rmwaft_core::heterogeneity::{cv_total, induced_log_prior_theta, theta_lower_bound};
use rmwaft_core::model::{MarginalModel, ModelSpec};
use rmwaft_core::quadrature::integrate;
use rmwaft_core::MixingFamily;

type Outcome = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn repo() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../.."))
}

fn weibull_aft(n: usize, beta: [f64; 2], gamma: f64, seed: u64) -> SurvivalDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut times, mut status, mut rows) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..n {
        let x: f64 = rng.sample(rand_distr::StandardNormal);
        let eta = beta[0] + beta[1] * x;
        let t = (eta + rng.sample::<f64, _>(rand_distr::Exp1).ln() / gamma).exp();
        let c = rng.sample::<f64, _>(rand_distr::Exp1) * 150.0;
        times.push(t.min(c));
        status.push(u8::from(t <= c));
        rows.push(vec![x]);
    }
    SurvivalDataset::with_intercept(times, status, &rows, &["x"], None).unwrap()
}

fn intercept_only(times: Vec<f64>, status: Vec<u8>) -> SurvivalDataset {
    let n = times.len();
    SurvivalDataset::with_intercept(times, status, &vec![vec![]; n], &[], None).unwrap()
}

fn closed_form_fidelity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for family in [
        MixingFamily::ExponentialOne,
        MixingFamily::Gamma,
        MixingFamily::InverseGaussian,
        MixingFamily::LogNormal,
    ] {
        for _ in 0..20 {
            let t = rng.random_range(0.05..20.0);
            let alpha = rng.random_range(0.05..5.0);
            let theta = match family {
                MixingFamily::Gamma => rng.random_range(0.3..20.0),
                MixingFamily::InverseGaussian => rng.random_range(0.1..10.0),
                MixingFamily::LogNormal => rng.random_range(0.02..4.0),
                _ => 0.0,
            };
            let th = family.has_theta().then_some(theta);
            let closed = rme_logpdf(t, alpha, family, th).unwrap();
            // ∫ α λ e^{−αλt} dP(λ), integrated over ln λ
            let f = |s: f64| {
                let l = s.exp();
                (family.ln_density(l, theta) + s + weibull_logpdf(t, alpha * l, 1.0).unwrap()).exp()
            };
            let oracle = integrate(f, -60.0, 60.0, 1e-300, 1e-13).unwrap().value.ln();
            worst = worst.max((closed - oracle).abs());
        }
    }
    ensure(
        worst < 1e-6,
        format!("max |error| {worst:.2e} over 80 points"),
    )
}

fn power_transform_law() -> Outcome {
    let mut lowest = 1.0f64;
    for (k, family) in MixingFamily::ALL.iter().copied().enumerate() {
        let theta = family.has_theta().then_some(match family {
            MixingFamily::Gamma => 3.0,
            MixingFamily::InverseGaussian => 0.8,
            _ => 1.2,
        });
        let (alpha, gamma) = (1.6, 0.6);
        let rme = sample_rmw(
            &RmwParams::rme(family, alpha, theta).unwrap(),
            10_000,
            300 + k as u64,
        )
        .unwrap();
        let powered: Vec<f64> = rme.iter().map(|t| t.powf(1.0 / gamma)).collect();
        let rmw = sample_rmw(
            &RmwParams::new(family, alpha, gamma, theta).unwrap(),
            10_000,
            400 + k as u64,
        )
        .unwrap();
        lowest = lowest.min(common::ks_two_sample(&powered, &rmw).1);
    }
    ensure(
        lowest > 0.01,
        format!("smallest KS p = {lowest:.3} over 5 families"),
    )
}

fn prior_matching() -> Outcome {
    let (gamma, expected_cv) = (1.0, 5.0);
    let draws: Vec<Vec<f64>> = MixingFamily::WITH_THETA
        .iter()
        .enumerate()
        .map(|(i, family)| {
            let lo = theta_lower_bound(*family, gamma);
            let grid: Vec<f64> = (0..=40_000)
                .map(|j| -30.0 + 60.0 * j as f64 / 40_000.0)
                .collect();
            let sampler = GridSampler::new(grid, |phi| {
                induced_log_prior_theta(*family, gamma, lo + phi.exp(), expected_cv)
                    .unwrap_or(f64::NEG_INFINITY)
                    + phi
            });
            let mut rng = ChaCha8Rng::seed_from_u64(500 + i as u64);
            (0..10_000)
                .map(|_| {
                    cv_total(*family, gamma, lo + sampler.quantile(rng.random()).exp()).unwrap()
                })
                .collect()
        })
        .collect();
    let mut ps = Vec::new();
    for a in 0..3 {
        for b in a + 1..3 {
            ps.push(common::ks_two_sample(&draws[a], &draws[b]).1);
        }
    }
    let lowest = ps.iter().copied().fold(1.0, f64::min);
    ensure(
        lowest > 0.01,
        format!("pairwise KS p = {ps:.3?} at E(cv) = {expected_cv}"),
    )
}

fn conjugate_sampler() -> Outcome {
    let p = RmwParams::new(MixingFamily::None, 0.4, 1.0, None).unwrap();
    let times = sample_rmw(&p, 80, 71).unwrap();
    let status: Vec<u8> = (0..80).map(|i| u8::from(i % 4 != 0)).collect();
    let events = status.iter().map(|s| f64::from(*s)).sum::<f64>();
    let exposure: f64 = times.iter().sum();
    let d = intercept_only(times, status);
    let plan = RunPlan::with_retained(50_000, 0.25, 37_500, 13);
    let draws = run(&d, ModelSpec::exponential(), plan).unwrap();
    let rate: Vec<f64> = draws
        .column("beta0")
        .unwrap()
        .iter()
        .map(|b| (-b).exp())
        .collect();
    let se = common::batch_means_se(&rate, 50);
    // flat prior on β0 = −ln(rate) gives a Gamma(d, S) posterior for the rate
    let analytic = events / exposure;
    let got = common::mean(&rate);
    ensure(
        (got - analytic).abs() < 3.0 * se,
        format!(
            "mean {got:.5} vs {analytic:.5}, {:.2} MC SEs",
            (got - analytic).abs() / se
        ),
    )
}

fn grid_posterior() -> Outcome {
    let d = intercept_only(vec![0.8, 1.5, 2.6], vec![1, 1, 1]);
    let spec = ModelSpec::weibull();
    let k = FullConditionals::new(&d, spec).unwrap();
    let mut state = initial_state(&d, &spec).unwrap();
    let (nb, ng) = (1200, 600);
    let (b_lo, b_hi, lg_lo, lg_hi) = (-15.0, 25.0, -6.0, 2.5);
    let mut logs = Vec::with_capacity(nb * ng);
    for i in 0..nb {
        for j in 0..ng {
            state.beta[0] = b_lo + (i as f64 + 0.5) * (b_hi - b_lo) / nb as f64;
            state.gamma = (lg_lo + (j as f64 + 0.5) * (lg_hi - lg_lo) / ng as f64).exp();
            // density in (β0, ln γ)
            logs.push(k.joint(&state).unwrap() + state.gamma.ln());
        }
    }
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut mass: Vec<f64> = (0..nb)
        .map(|i| {
            logs[i * ng..(i + 1) * ng]
                .iter()
                .map(|l| (l - top).exp())
                .sum()
        })
        .collect();
    let total: f64 = mass.iter().sum();
    mass.iter_mut().for_each(|m| *m /= total);
    let mut cdf = Vec::with_capacity(nb);
    let mut c = 0.0;
    for m in &mass {
        c += m;
        cdf.push(c);
    }
    let bin_of = |x: f64| {
        (((x - b_lo) / (b_hi - b_lo) * nb as f64).floor() as isize).clamp(0, nb as isize - 1)
            as usize
    };
    let edges: Vec<usize> = (1..100)
        .map(|c| cdf.partition_point(|v| *v < c as f64 / 100.0))
        .collect();
    let cell_of_bin = |b: usize| edges.partition_point(|e| *e <= b);
    let mut grid_cells = vec![0.0; 100];
    for (b, m) in mass.iter().enumerate() {
        grid_cells[cell_of_bin(b)] += m;
    }
    let draws = run(
        &d,
        spec,
        RunPlan::with_retained(1_000_000, 0.1, 150_000, 29),
    )
    .unwrap();
    let mut mc_cells = vec![0.0; 100];
    for b in draws.column("beta0").unwrap() {
        mc_cells[cell_of_bin(bin_of(b))] += 1.0 / draws.len() as f64;
    }
    let tv: f64 = 0.5
        * grid_cells
            .iter()
            .zip(&mc_cells)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>();
    ensure(
        tv < 0.05,
        format!("total variation {tv:.4} on the β0 marginal"),
    )
}

const REPLICATES: u64 = 20;

fn recovery_fit(data: &SurvivalDataset, seed: u64) -> rmwaft_core::gibbs::PosteriorDraws {
    let spec = ModelSpec::rme(MixingFamily::Gamma, 2.0).unwrap();
    run(data, spec, RunPlan::desk(seed)).unwrap()
}

fn synthetic_recovery() -> Outcome {
    let truth = SimulationSpec::gamma_recovery();
    let targets = [
        ("beta0", truth.beta[0]),
        ("beta1", truth.beta[1]),
        ("theta", truth.theta.unwrap()),
    ];
    let mut hits = [0u32; 3];
    for r in 1..=REPLICATES {
        let data = simulate(&truth, r).unwrap();
        let draws = recovery_fit(&data, 1000 + r);
        for (k, (name, value)) in targets.iter().enumerate() {
            let x = draws.column(name).unwrap();
            if (median(&x) - value).abs() <= 2.0 * common::sd(&x) {
                hits[k] += 1;
            }
        }
    }
    let need = (0.95 * REPLICATES as f64).ceil() as u32;
    let detail = targets
        .iter()
        .zip(hits)
        .map(|((n, _), h)| format!("{n} {h}/{REPLICATES}"))
        .collect::<Vec<_>>()
        .join(", ");
    ensure(
        hits.iter().all(|h| *h >= need),
        format!("{detail} (need {need})"),
    )
}

fn planted_outlier() -> Outcome {
    let truth = SimulationSpec::gamma_recovery();
    let mut found = 0;
    for r in 1..=REPLICATES {
        let data = simulate(&truth, r).unwrap();
        let mut events: Vec<usize> = (0..data.len()).filter(|i| data.status()[*i]).collect();
        events.sort_by(|a, b| data.times()[*a].total_cmp(&data.times()[*b]));
        let planted = events[events.len() / 2];
        let data = data
            .with_time(planted, data.times()[planted] * 50.0)
            .unwrap();
        let draws = recovery_fit(&data, 2000 + r);
        let model = MarginalModel::new(&data, MixingFamily::Gamma);
        let bf = outlier_bf(&draws, &model, ReferenceRate::from_draws(&draws).unwrap()).unwrap();
        let argmin = (0..bf.values.len())
            .min_by(|a, b| bf.values[*a].total_cmp(&bf.values[*b]))
            .unwrap();
        found += u32::from(argmin == planted);
    }
    ensure(
        found >= 18,
        format!("planted row has the smallest BF in {found}/{REPLICATES} replicates"),
    )
}

fn ok_cells(results: &RunResults) -> Result<BTreeMap<String, &BayesOutcome>, String> {
    let mut cells = BTreeMap::new();
    for c in &results.bayes {
        let o = c
            .outcome
            .as_ref()
            .map_err(|e| format!("{}: {e}", c.spec.label()))?;
        let key = if c.spec.family.has_theta() {
            format!("{} {}", c.spec.label(), c.spec.expected_cv)
        } else {
            c.spec.label()
        };
        cells.insert(key, o);
    }
    Ok(cells)
}

fn kidney_paper_scale() -> RunResults {
    let mut cfg = RunConfig::load(&repo().join("configs/kidney.toml")).unwrap();
    cfg.track = Track::Bayes;
    cfg.marginal_likelihood = false;
    orchestrate(
        &cfg,
        &RunOptions {
            paper_scale: true,
            threads: None,
        },
    )
    .unwrap()
}

fn kidney_dic(results: &RunResults) -> Outcome {
    let cells = ok_cells(results)?;
    let dic = |k: &str| cells[k].dic;
    let order = ["RME-IG 2", "RME-LN 2", "RME-GAM 2", "Weibull"];
    let reported = [345.179, 349.028, 351.536, 395.281];
    let values: Vec<f64> = order.iter().map(|k| dic(k)).collect();
    let ordered = values.windows(2).all(|w| w[0] < w[1]);
    let band = values
        .iter()
        .zip(reported)
        .all(|(v, r)| (v / r - 1.0).abs() <= 0.05);
    let detail = format!(
        "DIC IG {:.1}, LN {:.1}, GAM {:.1}, Weibull {:.1}; ordering {}; ±5% band {}",
        values[0],
        values[1],
        values[2],
        values[3],
        if ordered { "holds" } else { "violated" },
        if band { "met" } else { "missed (advisory)" }
    );
    ensure(ordered, detail)
}

fn kidney_heterogeneity(results: &RunResults) -> Outcome {
    let cells = ok_cells(results)?;
    let r = cells["RME-IG 2"].r_cv.as_ref().ok_or("no R_cv summary")?;
    ensure(
        r.hpd_lower > 1.0 || r.hpd_upper < 1.0,
        format!(
            "IG R_cv 95% HPD ({:.3}, {:.3}), median {:.3}",
            r.hpd_lower, r.hpd_upper, r.median
        ),
    )
}

fn bone_marrow_support() -> Outcome {
    let mut cfg = RunConfig::load(&repo().join("configs/bone_marrow.toml")).unwrap();
    cfg.track = Track::Bayes;
    cfg.expected_cv = vec![2.0, 5.0, 10.0];
    let results = orchestrate(&cfg, &RunOptions::default()).unwrap();
    let cells = ok_cells(&results)?;
    let ml = |k: &str| {
        cells[k]
            .log_marginal
            .ok_or(format!("{k}: no marginal likelihood"))
    };
    let (exp, weib) = (&cells["Exponential"], &cells["Weibull"]);
    let mut lines = Vec::new();
    let (mut vs_exp, mut vs_weib) = (true, true);
    for family in ["GAM", "IG", "LN"] {
        for ecv in [2, 5, 10] {
            let key = format!("RME-{family} {ecv}");
            let c = &cells[key.as_str()];
            let (ps_e, ps_w) = (log_psbf(&c.cpo, &exp.cpo), log_psbf(&c.cpo, &weib.cpo));
            let (bf_e, bf_w) = (ml(&key)? - ml("Exponential")?, ml(&key)? - ml("Weibull")?);
            vs_exp &= ps_e > 0.0 && bf_e > 0.0;
            vs_weib &= ps_w > 0.0 && bf_w > 0.0;
            lines.push(format!(
                "{key}: PsBF {ps_e:.2}/{ps_w:.2}, BF {bf_e:.2}/{bf_w:.2}"
            ));
        }
    }
    let detail = format!(
        "log factors vs exponential/Weibull: {}; mixtures beat exponential: {vs_exp}; mixtures beat Weibull: {vs_weib}",
        lines.join("; ")
    );
    ensure(vs_exp && vs_weib, detail)
}

fn classical_track() -> Outcome {
    let mut notes = Vec::new();
    let bm = common::bone_marrow();
    let d = intercept_only(
        bm.times().to_vec(),
        bm.status().iter().map(|s| u8::from(*s)).collect(),
    );
    let fit = fit_aft_mle(&d, Frailty::None, Some(1.0)).map_err(|e| e.to_string())?;
    let rate = (-fit.estimate("beta0").unwrap()).exp();
    let exact = d.events() as f64 / d.times().iter().sum::<f64>();
    let rel = (rate / exact - 1.0).abs();
    notes.push((
        rel <= 4.0 * f64::EPSILON,
        format!("exponential MLE rel. error {rel:.1e}"),
    ));

    let (beta, gamma) = ([3.5, -0.4], 1.3);
    let z_scores = |seed: u64| -> Result<Vec<f64>, String> {
        let syn = weibull_aft(500, beta, gamma, seed);
        let fit = fit_aft_mle(&syn, Frailty::None, None).map_err(|e| e.to_string())?;
        Ok([beta[0], beta[1], gamma]
            .iter()
            .enumerate()
            .map(|(i, v)| (fit.estimates[i] - v).abs() / fit.standard_errors[i])
            .collect())
    };
    let z = z_scores(1)?;
    notes.push((
        z.iter().all(|v| *v < 2.0),
        format!("Weibull recovery |z| {z:.2?}"),
    ));
    // the single check is only meaningful if the standard errors are calibrated
    let mut covered = 0;
    for seed in 1000..1200 {
        covered += z_scores(seed)?.iter().filter(|v| **v < 2.0).count();
    }
    let coverage = covered as f64 / 600.0;
    notes.push((
        coverage >= 0.9,
        format!("2-SE coverage {:.1}% over 200 replicates", 100.0 * coverage),
    ));

    let kid = common::kidney();
    let weibull = fit_aft_mle(&kid, Frailty::None, None).map_err(|e| e.to_string())?;
    let g = weibull.estimate("gamma").unwrap();
    let b = &weibull.estimates[..3];
    let plain = frailty_loglik(
        &MarginalModel::new(&kid, MixingFamily::None),
        Frailty::None,
        b,
        g,
        None,
    )
    .unwrap();
    let mut gap = 0.0f64;
    for frailty in [
        Frailty::Gamma,
        Frailty::InverseGaussian,
        Frailty::LogNormal(LogNormalConstraint::Ew0),
    ] {
        let model = MarginalModel::new(&kid, frailty.mixing_family());
        let v = frailty_loglik(&model, frailty, b, g, Some(1e-8)).map_err(|e| e.to_string())?;
        gap = gap.max((v - plain).abs());
    }
    notes.push((gap < 1e-4, format!("σ² → 0 loglik gap {gap:.1e}")));

    // signs of the reported classical fits: β0 > 0, β_age < 0, β_female > 0
    let mut signs = true;
    for frailty in [
        Frailty::Gamma,
        Frailty::InverseGaussian,
        Frailty::LogNormal(LogNormalConstraint::Ew0),
    ] {
        let f = fit_aft_mle(&kid, frailty, None).map_err(|e| e.to_string())?;
        let e = |n: &str| f.estimate(n).unwrap();
        signs &= e("beta0") > 0.0 && e("beta1") < 0.0 && e("beta2") > 0.0;
    }
    notes.push((
        signs,
        format!("kidney signs {}", if signs { "match" } else { "differ" }),
    ));
    let ok = notes.iter().all(|(ok, _)| *ok);
    ensure(
        ok,
        notes
            .into_iter()
            .map(|(_, n)| n)
            .collect::<Vec<_>>()
            .join("; "),
    )
}

fn main() {
    let wanted: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let selected = |n: u32| wanted.is_empty() || wanted.contains(&n);
    let mut failed = 0;
    let mut report =
        |n: u32, title: &str, limit: Option<Duration>, f: &mut dyn FnMut() -> Outcome| {
            if !selected(n) {
                return;
            }
            let start = Instant::now();
            let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
                let msg = p
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                Err(format!("panicked: {msg}"))
            });
            let took = start.elapsed();
            let late = limit.is_some_and(|l| took > l);
            let (tag, detail) = match (&outcome, late) {
                (Ok(d), false) => ("PASS", d.clone()),
                (Ok(d), true) => (
                    "FAIL",
                    format!("{d}; took longer than {:?}", limit.unwrap()),
                ),
                (Err(d), _) => ("FAIL", d.clone()),
            };
            if tag == "FAIL" {
                failed += 1;
            }
            println!(
                "criterion {n:>2} {tag} [{:.1} s] {title}: {detail}",
                took.as_secs_f64()
            );
        };

    let secs = |s| Some(Duration::from_secs(s));
    report(
        1,
        "closed forms vs integration",
        secs(10),
        &mut closed_form_fidelity,
    );
    report(
        2,
        "power transformation law",
        secs(30),
        &mut power_transform_law,
    );
    report(3, "matched priors", secs(60), &mut prior_matching);
    report(
        4,
        "conjugate exponential posterior",
        secs(60),
        &mut conjugate_sampler,
    );
    report(5, "grid posterior", secs(300), &mut grid_posterior);
    report(6, "synthetic recovery", secs(1200), &mut synthetic_recovery);
    let mut kidney: Option<RunResults> = None;
    let mut kidney_run = || {
        if kidney.is_none() {
            kidney = Some(kidney_paper_scale());
        }
        kidney.clone().unwrap()
    };
    report(7, "kidney DIC ordering", None, &mut || {
        kidney_dic(&kidney_run())
    });
    report(
        8,
        "bone-marrow support for mixing",
        None,
        &mut bone_marrow_support,
    );
    report(9, "kidney heterogeneity", None, &mut || {
        kidney_heterogeneity(&kidney_run())
    });
    report(10, "planted outlier", None, &mut planted_outlier);
    report(11, "classical track", None, &mut classical_track);
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
