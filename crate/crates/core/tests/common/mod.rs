#![allow(dead_code)]

use rmwaft_core::data::SurvivalDataset;

fn read(name: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let path = format!("{}/../../data/{name}", env!("CARGO_MANIFEST_DIR"));
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"));
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let split = |l: &str| {
        l.split(',')
            .map(|c| c.trim().trim_matches('"').to_string())
            .collect::<Vec<_>>()
    };
    let header = split(lines.next().expect("header"));
    (header, lines.map(split).collect())
}

fn column(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).expect(name)
}

/// Bone-marrow transplant data: covariate is 1 for autologous transplants.
pub fn bone_marrow() -> SurvivalDataset {
    let (h, rows) = read("alloauto.csv");
    let (t, ty, d) = (column(&h, "time"), column(&h, "type"), column(&h, "delta"));
    let times = rows.iter().map(|r| r[t].parse().unwrap()).collect();
    let status = rows.iter().map(|r| r[d].parse().unwrap()).collect();
    let x: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| vec![if r[ty] == "2" { 1.0 } else { 0.0 }])
        .collect();
    SurvivalDataset::with_intercept(times, status, &x, &["auto"], None).unwrap()
}

/// Kidney recurrence data, one shared rate per patient; `female` is 1 for sex 2.
pub fn kidney() -> SurvivalDataset {
    let (h, rows) = read("kidney.csv");
    let (id, t, s, age, sex) = (
        column(&h, "id"),
        column(&h, "time"),
        column(&h, "status"),
        column(&h, "age"),
        column(&h, "sex"),
    );
    let times = rows.iter().map(|r| r[t].parse().unwrap()).collect();
    let status = rows.iter().map(|r| r[s].parse().unwrap()).collect();
    let groups = rows.iter().map(|r| r[id].parse().unwrap()).collect();
    let x: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| {
            vec![
                r[age].parse().unwrap(),
                if r[sex] == "2" { 1.0 } else { 0.0 },
            ]
        })
        .collect();
    SurvivalDataset::with_intercept(times, status, &x, &["age", "female"], Some(groups)).unwrap()
}

/// Two-sample Kolmogorov–Smirnov statistic and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let ne = (n * m / (n + m)).sqrt();
    (d, kolmogorov_q((ne + 0.12 + 0.11 / ne) * d))
}

fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..200 {
        let term = 2.0 * (-2.0 * (k as f64 * lambda).powi(2)).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

/// Draws from a univariate density known up to a constant, by inverting
/// its trapezoid CDF on `grid`.
pub struct GridSampler {
    grid: Vec<f64>,
    cdf: Vec<f64>,
}

impl GridSampler {
    pub fn new(grid: Vec<f64>, log_density: impl Fn(f64) -> f64) -> Self {
        let lp: Vec<f64> = grid.iter().map(|x| log_density(*x)).collect();
        let top = lp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let p: Vec<f64> = lp.iter().map(|v| (v - top).exp()).collect();
        let mut cdf = vec![0.0; grid.len()];
        for i in 1..grid.len() {
            cdf[i] = cdf[i - 1] + 0.5 * (p[i] + p[i - 1]) * (grid[i] - grid[i - 1]);
        }
        let total = cdf[grid.len() - 1];
        cdf.iter_mut().for_each(|c| *c /= total);
        Self { grid, cdf }
    }

    pub fn quantile(&self, u: f64) -> f64 {
        let k = self
            .cdf
            .partition_point(|c| *c < u)
            .clamp(1, self.grid.len() - 1);
        let (c0, c1) = (self.cdf[k - 1], self.cdf[k]);
        let w = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.5 };
        self.grid[k - 1] + w * (self.grid[k] - self.grid[k - 1])
    }
}

/// Monte-Carlo standard error of the mean by non-overlapping batch means.
pub fn batch_means_se(x: &[f64], batches: usize) -> f64 {
    let size = x.len() / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| x[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let m = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (var / batches as f64).sqrt()
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn sd(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64).sqrt()
}
