//! Weighted least squares: Levenberg-Marquardt for nonlinear models and a
//! direct solver for models linear in their parameters.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Stop when the relative chi² improvement falls below this.
    pub tolerance: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            tolerance: 1e-15,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitOutput {
    pub params: Vec<f64>,
    /// `(JᵀWJ)⁻¹` at the optimum.
    pub covariance: DMatrix<f64>,
    pub chi2: f64,
    pub dof: usize,
    pub iterations: usize,
}

impl FitOutput {
    pub fn reduced_chi2(&self) -> f64 {
        if self.dof == 0 {
            0.0
        } else {
            self.chi2 / self.dof as f64
        }
    }

    /// Parameter standard errors. The covariance is inflated by the reduced
    /// chi² when the model fits worse than the stated errors allow.
    pub fn stderr(&self) -> Vec<f64> {
        let inflate = self.reduced_chi2().max(1.0);
        (0..self.params.len())
            .map(|i| (self.covariance[(i, i)] * inflate).max(0.0).sqrt())
            .collect()
    }
}

fn chi2_of<F>(model: &F, xs: &[f64], ys: &[f64], w: &[f64], p: &[f64]) -> f64
where
    F: Fn(f64, &[f64]) -> f64,
{
    xs.iter()
        .zip(ys)
        .zip(w)
        .map(|((&x, &y), &wi)| {
            let r = (model(x, p) - y) * wi;
            r * r
        })
        .sum()
}

fn jacobian<F>(model: &F, xs: &[f64], w: &[f64], p: &[f64]) -> DMatrix<f64>
where
    F: Fn(f64, &[f64]) -> f64,
{
    let n = xs.len();
    let m = p.len();
    let mut jac = DMatrix::zeros(n, m);
    let mut probe = p.to_vec();
    for j in 0..m {
        let h = 1e-6 * p[j].abs().max(1e-6);
        probe[j] = p[j] + h;
        let up: Vec<f64> = xs.iter().map(|&x| model(x, &probe)).collect();
        probe[j] = p[j] - h;
        let down: Vec<f64> = xs.iter().map(|&x| model(x, &probe)).collect();
        probe[j] = p[j];
        for i in 0..n {
            jac[(i, j)] = w[i] * (up[i] - down[i]) / (2.0 * h);
        }
    }
    jac
}

fn weights(sigmas: &[f64]) -> Result<Vec<f64>> {
    sigmas
        .iter()
        .map(|&s| {
            if s > 0.0 && s.is_finite() {
                Ok(1.0 / s)
            } else {
                Err(Error::Fit(format!("non-positive standard error {s}")))
            }
        })
        .collect()
}

/// Minimizes `Σ ((model(x, p) − y) / σ)²` starting from `p0`.
pub fn levenberg_marquardt<F>(
    model: F,
    xs: &[f64],
    ys: &[f64],
    sigmas: &[f64],
    p0: &[f64],
    opts: &LmOptions,
) -> Result<FitOutput>
where
    F: Fn(f64, &[f64]) -> f64,
{
    let n = xs.len();
    let m = p0.len();
    if ys.len() != n || sigmas.len() != n {
        return Err(Error::Fit("mismatched data lengths".into()));
    }
    if n < m {
        return Err(Error::Fit(format!("{n} points cannot constrain {m} parameters")));
    }
    let w = weights(sigmas)?;
    let mut p = p0.to_vec();
    let mut chi2 = chi2_of(&model, xs, ys, &w, &p);
    if !chi2.is_finite() {
        return Err(Error::Fit("model is not finite at the starting point".into()));
    }
    let mut lambda = 1e-3;
    let mut iterations = 0;

    for it in 0..opts.max_iterations {
        iterations = it + 1;
        let jac = jacobian(&model, xs, &w, &p);
        let resid = DVector::from_iterator(n, (0..n).map(|i| (model(xs[i], &p) - ys[i]) * w[i]));
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * resid;

        let mut improved = false;
        while lambda < 1e12 {
            let mut a = jtj.clone();
            for d in 0..m {
                a[(d, d)] += lambda * jtj[(d, d)].max(1e-12);
            }
            let Some(step) = a.lu().solve(&(-&jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let trial_chi2 = chi2_of(&model, xs, ys, &w, &trial);
            if trial_chi2.is_finite() && trial_chi2 <= chi2 {
                let rel = (chi2 - trial_chi2) / chi2.max(1e-300);
                p = trial;
                chi2 = trial_chi2;
                lambda = (lambda / 10.0).max(1e-12);
                improved = rel > opts.tolerance;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }

    let jac = jacobian(&model, xs, &w, &p);
    let jtj = jac.transpose() * &jac;
    let covariance = jtj
        .try_inverse()
        .ok_or_else(|| Error::Fit("singular normal matrix at the optimum".into()))?;
    Ok(FitOutput {
        params: p,
        covariance,
        chi2,
        dof: n - m,
        iterations,
    })
}

/// Weighted linear least squares for `y = Σ_j coef_j · basis_j`.
pub fn linear_least_squares(design: &[Vec<f64>], ys: &[f64], sigmas: &[f64]) -> Result<FitOutput> {
    let n = design.len();
    let m = design.first().map_or(0, Vec::len);
    if ys.len() != n || sigmas.len() != n {
        return Err(Error::Fit("mismatched data lengths".into()));
    }
    if m == 0 || n < m {
        return Err(Error::Fit(format!("{n} points cannot constrain {m} parameters")));
    }
    let w = weights(sigmas)?;
    let a = DMatrix::from_fn(n, m, |i, j| design[i][j] * w[i]);
    let b = DVector::from_iterator(n, ys.iter().zip(&w).map(|(y, wi)| y * wi));
    let ata = a.transpose() * &a;
    let covariance = ata
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Fit("singular design matrix".into()))?;
    let coef = &covariance * (a.transpose() * &b);
    let resid = &a * &coef - b;
    Ok(FitOutput {
        params: coef.iter().copied().collect(),
        covariance,
        chi2: resid.norm_squared(),
        dof: n - m,
        iterations: 1,
    })
}
