//! BFGS with central-difference gradients and a backtracking line search,
//! plus a numeric Hessian for Wald intervals.

use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

/// Stopping rules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BfgsOptions {
    pub max_iterations: usize,
    /// Convergence when `max |∇f| <` this ...
    pub gradient_tol: f64,
    /// ... and the relative change in `f` is below this.
    pub value_tol: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            gradient_tol: 1e-6,
            value_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient_max_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn step_size(x: f64) -> f64 {
    1e-4 * (1.0 + x.abs())
}

/// Central-difference gradient with one Richardson step, so the truncation
/// error is fourth order in the step.
pub fn numeric_gradient(f: &mut impl FnMut(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let mut p = x.to_vec();
    let mut central = |i: usize, h: f64| {
        p[i] = x[i] + h;
        let up = f(&p);
        p[i] = x[i] - h;
        let down = f(&p);
        p[i] = x[i];
        (up - down) / (2.0 * h)
    };
    (0..x.len())
        .map(|i| {
            let h = step_size(x[i]);
            let coarse = central(i, h);
            let fine = central(i, 0.5 * h);
            (4.0 * fine - coarse) / 3.0
        })
        .collect()
}

/// Central-difference Hessian.
pub fn numeric_hessian(f: &mut impl FnMut(&[f64]) -> f64, x: &[f64]) -> DMatrix<f64> {
    let n = x.len();
    let mut h = DMatrix::zeros(n, n);
    let mut p = x.to_vec();
    let f0 = f(x);
    for i in 0..n {
        let hi = 1e-4 * (1.0 + x[i].abs());
        p[i] = x[i] + hi;
        let up = f(&p);
        p[i] = x[i] - hi;
        let down = f(&p);
        p[i] = x[i];
        h[(i, i)] = (up - 2.0 * f0 + down) / (hi * hi);
        for j in 0..i {
            let hj = 1e-4 * (1.0 + x[j].abs());
            let mut corner = |si: f64, sj: f64| {
                p[i] = x[i] + si * hi;
                p[j] = x[j] + sj * hj;
                let v = f(&p);
                p[i] = x[i];
                p[j] = x[j];
                v
            };
            let v = (corner(1.0, 1.0) - corner(1.0, -1.0) - corner(-1.0, 1.0) + corner(-1.0, -1.0))
                / (4.0 * hi * hj);
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    h
}

/// Minimises `f`; non-finite values are treated as `+inf` by the line search.
pub fn minimize_bfgs(
    mut f: impl FnMut(&[f64]) -> f64,
    x0: &[f64],
    options: BfgsOptions,
) -> Minimum {
    let n = x0.len();
    let mut x = DVector::from_column_slice(x0);
    let mut fx = f(x.as_slice());
    let mut g = DVector::from_vec(numeric_gradient(&mut f, x.as_slice()));
    let mut h_inv = DMatrix::<f64>::identity(n, n);
    let max_abs = |v: &DVector<f64>| v.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    let mut converged = false;
    let mut iterations = 0;
    // previous step already left f unchanged to working precision
    let mut stalled = false;
    if !fx.is_finite() {
        return Minimum {
            x: x0.to_vec(),
            value: fx,
            gradient_max_norm: f64::INFINITY,
            iterations: 0,
            converged: false,
        };
    }
    while iterations < options.max_iterations {
        iterations += 1;
        let mut dir = -(&h_inv * &g);
        if dir.dot(&g) >= 0.0 {
            // not a descent direction: restart from steepest descent
            h_inv = DMatrix::identity(n, n);
            dir = -g.clone();
        }
        let slope = dir.dot(&g);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand = &x + &dir * t;
            let fc = f(cand.as_slice());
            if fc.is_finite() && fc <= fx + 1e-4 * t * slope {
                accepted = Some((cand, fc));
                break;
            }
            t *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            // f cannot decrease at machine precision: judge the gradient
            // relative to the size of f
            converged = max_abs(&g) < options.gradient_tol * (1.0 + fx.abs());
            break;
        };
        let g_new = DVector::from_vec(numeric_gradient(&mut f, x_new.as_slice()));
        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        let rel_change = (fx - f_new).abs() / (1.0 + f_new.abs());
        x = x_new;
        fx = f_new;
        g = g_new;
        let gmax = max_abs(&g);
        if rel_change < options.value_tol
            && (gmax < options.gradient_tol
                || gmax < options.gradient_tol * (1.0 + fx.abs()) && stalled)
        {
            converged = true;
            break;
        }
        stalled = rel_change < options.value_tol;
        if sy > 1e-12 * s.norm() * y.norm() {
            let rho = 1.0 / sy;
            let i = DMatrix::<f64>::identity(n, n);
            let left = &i - &s * y.transpose() * rho;
            let right = &i - &y * s.transpose() * rho;
            h_inv = &left * &h_inv * &right + &s * s.transpose() * rho;
        }
    }
    Minimum {
        x: x.iter().copied().collect(),
        value: fx,
        gradient_max_norm: max_abs(&g),
        iterations,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rosenbrock() {
        let m = minimize_bfgs(
            |x| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2),
            &[-1.2, 1.0],
            BfgsOptions::default(),
        );
        assert!(m.converged, "{m:?}");
        assert_relative_eq!(m.x[0], 1.0, epsilon = 1e-5);
        assert_relative_eq!(m.x[1], 1.0, epsilon = 1e-5);
    }

    #[test]
    fn hessian_of_quadratic() {
        let mut f = |x: &[f64]| 3.0 * x[0] * x[0] + x[0] * x[1] + 2.0 * x[1] * x[1];
        let h = numeric_hessian(&mut f, &[0.4, -1.0]);
        assert_relative_eq!(h[(0, 0)], 6.0, epsilon = 1e-5);
        assert_relative_eq!(h[(0, 1)], 1.0, epsilon = 1e-5);
        assert_relative_eq!(h[(1, 1)], 4.0, epsilon = 1e-5);
    }
}
