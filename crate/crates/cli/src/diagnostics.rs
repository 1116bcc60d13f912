//! Kaplan–Meier curves and their `ln(−ln S)` transform for plotting.

use rmwaft_core::data::SurvivalDataset;
use serde::Serialize;

/// Plot-ready series; `x` is strictly increasing and `y` finite.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticSeries {
    pub label: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// Kaplan–Meier survival at each distinct event time.
pub fn kaplan_meier(times: &[f64], status: &[bool]) -> (Vec<f64>, Vec<f64>) {
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|a, b| times[*a].total_cmp(&times[*b]));
    let mut at_risk = times.len();
    let mut s = 1.0;
    let (mut x, mut y) = (Vec::new(), Vec::new());
    let mut i = 0;
    while i < order.len() {
        let t = times[order[i]];
        let (mut deaths, mut leaving) = (0usize, 0usize);
        while i < order.len() && times[order[i]] == t {
            deaths += usize::from(status[order[i]]);
            leaving += 1;
            i += 1;
        }
        if deaths > 0 {
            s *= 1.0 - deaths as f64 / at_risk as f64;
            x.push(t);
            y.push(s);
        }
        at_risk -= leaving;
    }
    (x, y)
}

/// KM and `ln(−ln Ŝ)` against `ln t` per level of covariate `group_column`
/// (all rows together when `None`). Groups without events are skipped and
/// reported in the second return value.
pub fn km_and_cloglog(
    data: &SurvivalDataset,
    group_column: Option<usize>,
) -> (Vec<DiagnosticSeries>, Vec<String>) {
    let names = data.covariate_names();
    let mut levels: Vec<(String, Vec<usize>)> = Vec::new();
    match group_column {
        None => levels.push(("all".into(), (0..data.len()).collect())),
        Some(j) => {
            let x = data.covariates();
            for i in 0..data.len() {
                let label = format!("{}={}", names[j], x[(i, j)]);
                match levels.iter_mut().find(|(l, _)| *l == label) {
                    Some((_, rows)) => rows.push(i),
                    None => levels.push((label, vec![i])),
                }
            }
            levels.sort_by(|a, b| a.0.cmp(&b.0));
        }
    }
    let mut series = Vec::new();
    let mut warnings = Vec::new();
    for (label, rows) in levels {
        let t: Vec<f64> = rows.iter().map(|&i| data.times()[i]).collect();
        let s: Vec<bool> = rows.iter().map(|&i| data.status()[i]).collect();
        if !s.iter().any(|v| *v) {
            warnings.push(format!("group {label} has no events; series omitted"));
            continue;
        }
        let (x, y) = kaplan_meier(&t, &s);
        let (lx, ly): (Vec<f64>, Vec<f64>) = x
            .iter()
            .zip(&y)
            .filter(|(_, s)| **s > 0.0 && **s < 1.0)
            .map(|(t, s)| (t.ln(), (-s.ln()).ln()))
            .unzip();
        series.push(DiagnosticSeries {
            label: format!("km {label}"),
            x,
            y,
        });
        series.push(DiagnosticSeries {
            label: format!("cloglog {label}"),
            x: lx,
            y: ly,
        });
    }
    (series, warnings)
}
