//! Model specification and the marginal (rate-integrated) likelihood of the
//! RMW-AFT model.
//!
//! For cluster `g` with rows `i ∈ g`, linear predictor `η_i = x_i'β`,
//! events `d_g = Σ c_i` and exposure `u_g = Σ exp(γ(ln t_i − η_i))`,
//!
//! ```text
//! ln L_g = Σ c_i (ln γ − γ η_i + (γ−1) ln t_i) + ln E[Λ^{d_g} exp(−u_g Λ)]
//! ```

use alloc::string::String;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::data::SurvivalDataset;
use crate::error::{Error, Result};
use crate::heterogeneity::PriorBundle;
use crate::mixing::{LatentIntegrator, MixingFamily};

/// Whether the Weibull shape is estimated or held fixed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ShapeMode {
    Free,
    Fixed(f64),
}

/// Mixing family, shape handling and elicited `E(cv)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelSpec {
    pub family: MixingFamily,
    pub shape: ShapeMode,
    pub expected_cv: f64,
}

impl ModelSpec {
    pub fn new(family: MixingFamily, shape: ShapeMode, expected_cv: f64) -> Result<Self> {
        if let ShapeMode::Fixed(g) = shape {
            if !(g > 0.0) || !g.is_finite() {
                return Err(crate::error::domain("fixed gamma", g));
            }
        }
        let spec = Self {
            family,
            shape,
            expected_cv,
        };
        spec.prior()?;
        Ok(spec)
    }

    /// Exponential AFT: no mixing, `γ = 1`.
    pub fn exponential() -> Self {
        Self {
            family: MixingFamily::None,
            shape: ShapeMode::Fixed(1.0),
            expected_cv: 2.0,
        }
    }

    /// Weibull AFT: no mixing, free shape.
    pub fn weibull() -> Self {
        Self {
            family: MixingFamily::None,
            shape: ShapeMode::Free,
            expected_cv: 2.0,
        }
    }

    /// RME model (`γ = 1`) with the given mixing.
    pub fn rme(family: MixingFamily, expected_cv: f64) -> Result<Self> {
        Self::new(family, ShapeMode::Fixed(1.0), expected_cv)
    }

    /// RMW model (free `γ`) with the given mixing.
    pub fn rmw(family: MixingFamily, expected_cv: f64) -> Result<Self> {
        Self::new(family, ShapeMode::Free, expected_cv)
    }

    pub fn prior(&self) -> Result<PriorBundle> {
        PriorBundle::new(self.family, self.expected_cv)
    }

    /// `Exponential`, `Weibull`, `RME-GAM`, `RMW-IG`, ...
    pub fn label(&self) -> String {
        let unit_shape = self.shape == ShapeMode::Fixed(1.0);
        match self.family {
            MixingFamily::None if unit_shape => "Exponential".into(),
            MixingFamily::None => "Weibull".into(),
            f if unit_shape => alloc::format!("RME-{}", f.tag()),
            f => alloc::format!("RMW-{}", f.tag()),
        }
    }

    pub fn free_shape(&self) -> bool {
        self.shape == ShapeMode::Free
    }
}

/// Point in parameter space.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub beta: Vec<f64>,
    pub gamma: f64,
    pub theta: Option<f64>,
}

/// Marginal likelihood evaluator bound to a dataset and a mixing family.
#[derive(Debug, Clone)]
pub struct MarginalModel<'a> {
    data: &'a SurvivalDataset,
    family: MixingFamily,
    integrator: LatentIntegrator,
    events: Vec<u32>,
}

impl<'a> MarginalModel<'a> {
    pub fn new(data: &'a SurvivalDataset, family: MixingFamily) -> Self {
        Self::with_integrator(data, family, LatentIntegrator::default())
    }

    pub fn with_integrator(
        data: &'a SurvivalDataset,
        family: MixingFamily,
        integrator: LatentIntegrator,
    ) -> Self {
        Self {
            data,
            family,
            integrator,
            events: data.cluster_events(),
        }
    }

    pub fn data(&self) -> &'a SurvivalDataset {
        self.data
    }

    pub fn family(&self) -> MixingFamily {
        self.family
    }

    pub fn integrator(&self) -> &LatentIntegrator {
        &self.integrator
    }

    fn check(&self, p: &Params) -> Result<()> {
        if p.beta.len() != self.data.n_covariates() {
            return Err(Error::DimensionMismatch {
                expected: self.data.n_covariates(),
                found: p.beta.len(),
            });
        }
        if !(p.gamma > 0.0) || !p.gamma.is_finite() {
            return Err(crate::error::domain("gamma", p.gamma));
        }
        self.family.check_theta(p.theta)
    }

    /// Per-cluster event part and log exposure: `(Σ c_i(ln γ − γη_i + (γ−1)ln t_i), ln u_g)`.
    pub fn cluster_pieces(&self, eta: &[f64], gamma: f64) -> Vec<(f64, f64)> {
        let lt = self.data.log_times();
        let st = self.data.status();
        let lg = gamma.ln();
        self.data
            .clusters()
            .iter()
            .map(|rows| {
                let mut base = 0.0;
                let mut top = f64::NEG_INFINITY;
                for &i in rows {
                    let z = lt[i] - eta[i];
                    if st[i] {
                        base += lg + gamma * z - lt[i];
                    }
                    top = top.max(gamma * z);
                }
                let u: f64 = rows
                    .iter()
                    .map(|&i| (gamma * (lt[i] - eta[i]) - top).exp())
                    .sum();
                (base, top + u.ln())
            })
            .collect()
    }

    /// Log marginal likelihood of each cluster.
    pub fn cluster_logliks(&self, p: &Params) -> Result<Vec<f64>> {
        self.check(p)?;
        let eta = self.data.linear_predictor(&p.beta)?;
        self.cluster_logliks_from_eta(&eta, p.gamma, p.theta)
    }

    pub fn cluster_logliks_from_eta(
        &self,
        eta: &[f64],
        gamma: f64,
        theta: Option<f64>,
    ) -> Result<Vec<f64>> {
        let th = theta.unwrap_or(0.0);
        self.cluster_pieces(eta, gamma)
            .into_iter()
            .zip(&self.events)
            .map(|((base, ln_u), &d)| {
                Ok(base + self.integrator.ln_laplace_log_u(self.family, th, d, ln_u)?)
            })
            .collect()
    }

    pub fn loglik(&self, p: &Params) -> Result<f64> {
        Ok(self.cluster_logliks(p)?.iter().sum())
    }

    /// Log-likelihood of cluster `g` with its rate pinned at `lambda`.
    pub fn cluster_conditional_loglik(
        &self,
        eta: &[f64],
        gamma: f64,
        g: usize,
        lambda: f64,
    ) -> f64 {
        let lt = self.data.log_times();
        let st = self.data.status();
        let mut out = 0.0;
        for &i in &self.data.clusters()[g] {
            let z = lt[i] - eta[i];
            if st[i] {
                out += gamma.ln() + gamma * z - lt[i] + lambda.ln();
            }
            out -= lambda * (gamma * z).exp();
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::{rmw_logpdf, rmw_logsurv, RmwParams};
    use approx::assert_relative_eq;

    fn small() -> SurvivalDataset {
        let rows: Vec<Vec<f64>> = [0.3, -1.0, 2.0, 0.5]
            .iter()
            .map(|v| alloc::vec![*v])
            .collect();
        SurvivalDataset::with_intercept(
            alloc::vec![0.7, 2.0, 1.4, 5.0],
            alloc::vec![1, 0, 1, 1],
            &rows,
            &["x"],
            None,
        )
        .unwrap()
    }

    #[test]
    fn independent_rows_match_density_and_survival() {
        let d = small();
        for (family, theta) in [
            (MixingFamily::None, None),
            (MixingFamily::Gamma, Some(2.5)),
            (MixingFamily::InverseGaussian, Some(0.8)),
            (MixingFamily::LogNormal, Some(0.6)),
        ] {
            let p = Params {
                beta: alloc::vec![0.4, -0.2],
                gamma: 1.3,
                theta,
            };
            let m = MarginalModel::new(&d, family);
            let got = m.cluster_logliks(&p).unwrap();
            for i in 0..d.len() {
                let x = d.covariates().row(i);
                let alpha = (-p.gamma * (x[0] * p.beta[0] + x[1] * p.beta[1])).exp();
                let rp = RmwParams::new(family, alpha, p.gamma, theta).unwrap();
                let t = d.times()[i];
                let expected = if d.status()[i] {
                    rmw_logpdf(t, &rp).unwrap()
                } else {
                    rmw_logsurv(t, &rp).unwrap()
                };
                assert_relative_eq!(got[i], expected, epsilon = 1e-11);
            }
        }
    }

    #[test]
    fn labels() {
        assert_eq!(ModelSpec::exponential().label(), "Exponential");
        assert_eq!(ModelSpec::weibull().label(), "Weibull");
        assert_eq!(
            ModelSpec::rme(MixingFamily::Gamma, 2.0).unwrap().label(),
            "RME-GAM"
        );
        assert_eq!(
            ModelSpec::rmw(MixingFamily::InverseGaussian, 2.0)
                .unwrap()
                .label(),
            "RMW-IG"
        );
    }

    #[test]
    fn censoring_changes_only_the_density_factor() {
        let d = small();
        let flipped = SurvivalDataset::with_intercept(
            d.times().to_vec(),
            alloc::vec![1, 1, 1, 1],
            &[0.3, -1.0, 2.0, 0.5]
                .iter()
                .map(|v| alloc::vec![*v])
                .collect::<Vec<_>>(),
            &["x"],
            None,
        )
        .unwrap();
        let p = Params {
            beta: alloc::vec![0.1, 0.3],
            gamma: 0.9,
            theta: None,
        };
        let a = MarginalModel::new(&d, MixingFamily::None)
            .cluster_logliks(&p)
            .unwrap();
        let b = MarginalModel::new(&flipped, MixingFamily::None)
            .cluster_logliks(&p)
            .unwrap();
        // row 1 flips from survival to density: the difference is the log hazard
        let eta = 0.1 - 0.3;
        let loghaz = 0.9f64.ln() - 0.9 * eta + (0.9 - 1.0) * 2f64.ln();
        assert_relative_eq!(b[1] - a[1], loghaz, epsilon = 1e-13);
        assert_eq!(a[0], b[0]);
    }

    #[test]
    fn steep_shape_keeps_the_lognormal_likelihood_bounded() {
        // with γ = 150 every exposure underflows; each event row contributes at
        // most ln γ − ln t − 1 and each censored row at most 0
        let d = small();
        let p = Params {
            beta: alloc::vec![8.0, 0.0],
            gamma: 150.0,
            theta: Some(5e5),
        };
        let ll = MarginalModel::new(&d, MixingFamily::LogNormal)
            .cluster_logliks(&p)
            .unwrap();
        for (i, v) in ll.iter().enumerate() {
            let t = d.times()[i];
            let bound = if d.status()[i] {
                150f64.ln() - t.ln() - 1.0
            } else {
                0.0
            };
            assert!(
                v.is_finite() && *v <= bound + 1e-9,
                "row {i}: {v} > {bound}"
            );
        }
    }
}
