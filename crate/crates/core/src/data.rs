//! Right-censored survival data with a design matrix and optional clusters.

use alloc::string::String;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Validated survival dataset.
///
/// Rows sharing a cluster share one latent rate. Without explicit groups
/// every row is its own cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalDataset {
    times: Vec<f64>,
    log_times: Vec<f64>,
    status: Vec<bool>,
    covariates: DMatrix<f64>,
    covariate_names: Vec<String>,
    cluster_of: Vec<usize>,
    clusters: Vec<Vec<usize>>,
}

impl SurvivalDataset {
    /// `covariates` is the full `n × k` design, intercept included.
    /// `status[i]` is 1 for an observed event and 0 for right censoring.
    /// `groups` holds arbitrary cluster labels, one per row.
    pub fn new(
        times: Vec<f64>,
        status: Vec<u8>,
        covariates: DMatrix<f64>,
        covariate_names: Vec<String>,
        groups: Option<Vec<u64>>,
    ) -> Result<Self> {
        let n = times.len();
        if n == 0 {
            return Err(Error::InvalidData("no observations".into()));
        }
        if status.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: status.len(),
            });
        }
        if covariates.nrows() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: covariates.nrows(),
            });
        }
        if covariate_names.len() != covariates.ncols() {
            return Err(Error::DimensionMismatch {
                expected: covariates.ncols(),
                found: covariate_names.len(),
            });
        }
        let bad: Vec<usize> = times
            .iter()
            .enumerate()
            .filter(|(_, t)| !(**t > 0.0 && t.is_finite()))
            .map(|(i, _)| i)
            .collect();
        if !bad.is_empty() {
            return Err(Error::NonPositiveTimes { rows: bad });
        }
        if let Some(i) = status.iter().position(|s| *s > 1) {
            return Err(Error::InvalidData(alloc::format!(
                "status at row {i} is {}, expected 0 or 1",
                status[i]
            )));
        }
        if covariates.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite covariate value".into()));
        }
        let k = covariates.ncols();
        let rank = if n >= k {
            covariates
                .clone()
                .svd(false, false)
                .rank(rank_tolerance(&covariates))
        } else {
            n
        };
        if k == 0 || rank < k {
            return Err(Error::RankDeficient { rank, columns: k });
        }

        let labels = match groups {
            Some(g) if g.len() != n => {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: g.len(),
                })
            }
            Some(g) => g,
            None => (0..n as u64).collect(),
        };
        // dense cluster ids in order of first appearance
        let mut seen: Vec<u64> = Vec::new();
        let mut cluster_of = Vec::with_capacity(n);
        let mut clusters: Vec<Vec<usize>> = Vec::new();
        for (i, label) in labels.iter().enumerate() {
            let id = match seen.iter().position(|l| l == label) {
                Some(id) => id,
                None => {
                    seen.push(*label);
                    clusters.push(Vec::new());
                    seen.len() - 1
                }
            };
            cluster_of.push(id);
            clusters[id].push(i);
        }

        let log_times = times.iter().map(|t| libm::log(*t)).collect();
        Ok(Self {
            times,
            log_times,
            status: status.into_iter().map(|s| s == 1).collect(),
            covariates,
            covariate_names,
            cluster_of,
            clusters,
        })
    }

    /// Builds the design from covariate rows, prepending an intercept column.
    pub fn with_intercept(
        times: Vec<f64>,
        status: Vec<u8>,
        rows: &[Vec<f64>],
        names: &[&str],
        groups: Option<Vec<u64>>,
    ) -> Result<Self> {
        let n = times.len();
        let p = names.len();
        if rows.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: rows.len(),
            });
        }
        if let Some(r) = rows.iter().find(|r| r.len() != p) {
            return Err(Error::DimensionMismatch {
                expected: p,
                found: r.len(),
            });
        }
        let x = DMatrix::from_fn(n, p + 1, |i, j| if j == 0 { 1.0 } else { rows[i][j - 1] });
        let mut all_names = alloc::vec![String::from("intercept")];
        all_names.extend(names.iter().map(|s| String::from(*s)));
        Self::new(times, status, x, all_names, groups)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n_covariates(&self) -> usize {
        self.covariates.ncols()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn log_times(&self) -> &[f64] {
        &self.log_times
    }

    pub fn status(&self) -> &[bool] {
        &self.status
    }

    pub fn events(&self) -> usize {
        self.status.iter().filter(|s| **s).count()
    }

    pub fn covariates(&self) -> &DMatrix<f64> {
        &self.covariates
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn n_clusters(&self) -> usize {
        self.clusters.len()
    }

    /// Rows belonging to each cluster.
    pub fn clusters(&self) -> &[Vec<usize>] {
        &self.clusters
    }

    pub fn cluster_of(&self, row: usize) -> usize {
        self.cluster_of[row]
    }

    /// Events per cluster.
    pub fn cluster_events(&self) -> Vec<u32> {
        self.clusters
            .iter()
            .map(|rows| rows.iter().filter(|&&i| self.status[i]).count() as u32)
            .collect()
    }

    /// Linear predictor `Xβ`.
    pub fn linear_predictor(&self, beta: &[f64]) -> Result<Vec<f64>> {
        let k = self.n_covariates();
        if beta.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                found: beta.len(),
            });
        }
        Ok((0..self.len())
            .map(|i| (0..k).map(|j| self.covariates[(i, j)] * beta[j]).sum())
            .collect())
    }

    /// Least-squares fit of `ln t` on `X`, treating censored times as events.
    pub fn log_time_least_squares(&self) -> Result<Vec<f64>> {
        let x = &self.covariates;
        let y = DVector::from_column_slice(&self.log_times);
        let xtx = x.transpose() * x;
        let xty = x.transpose() * y;
        let chol = xtx.cholesky().ok_or(Error::RankDeficient {
            rank: 0,
            columns: x.ncols(),
        })?;
        Ok(chol.solve(&xty).iter().copied().collect())
    }

    /// Same data with the time of one row replaced.
    pub fn with_time(&self, row: usize, time: f64) -> Result<Self> {
        let mut times = self.times.clone();
        times[row] = time;
        self.rebuilt(times, self.status.clone())
    }

    /// Keeps only the listed rows (in the given order).
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        let times = rows.iter().map(|&i| self.times[i]).collect();
        let status = rows.iter().map(|&i| u8::from(self.status[i])).collect();
        let x = self.covariates.select_rows(rows.iter());
        let groups = rows.iter().map(|&i| self.cluster_of[i] as u64).collect();
        Self::new(times, status, x, self.covariate_names.clone(), Some(groups))
    }

    fn rebuilt(&self, times: Vec<f64>, status: Vec<bool>) -> Result<Self> {
        Self::new(
            times,
            status.into_iter().map(u8::from).collect(),
            self.covariates.clone(),
            self.covariate_names.clone(),
            Some(self.cluster_of.iter().map(|c| *c as u64).collect()),
        )
    }
}

fn rank_tolerance(x: &DMatrix<f64>) -> f64 {
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    scale * (x.nrows().max(x.ncols()) as f64) * f64::EPSILON * 16.0
}
