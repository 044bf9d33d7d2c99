//! Elastic net by cyclic coordinate descent.
//!
//! Minimizes, over standardized regressors `z` and centered response,
//!
//! ```text
//! (1/2n) ‖y − α − Zβ‖² + λ (a ‖β‖₁ + (1 − a)/2 ‖β‖²)
//! ```
//!
//! with `a = alpha_mix`. The intercept is never penalized. Coefficients are
//! mapped back to the original column units before they are returned.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{model_from_fit, RegressionError};
use crate::types::{DesignMatrix, ElasticNetInfo, FittedModel, Solver};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ElasticNetParams {
    pub lambda: f64,
    pub alpha_mix: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ElasticNetParams {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            alpha_mix: 0.5,
            tol: 1e-9,
            max_iter: 10_000,
        }
    }
}

impl ElasticNetParams {
    fn validate(&self) -> Result<(), RegressionError> {
        let bad = |m: &str| Err(RegressionError::InvalidParameter(m.to_string()));
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return bad("lambda must be finite and >= 0");
        }
        if !(0.0..=1.0).contains(&self.alpha_mix) {
            return bad("alpha_mix must lie in [0, 1]");
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return bad("tol must be > 0");
        }
        if self.max_iter == 0 {
            return bad("max_iter must be positive");
        }
        Ok(())
    }
}

/// Result of a coordinate-descent run. A run that hits `max_iter` is still
/// returned, with `converged == false`.
#[derive(Debug, Clone, PartialEq)]
pub struct ElasticNetFit {
    pub model: FittedModel,
    pub converged: bool,
    pub iterations: usize,
    /// Standardized-problem objective at the start and after every sweep.
    pub objective_trace: Vec<f64>,
}

/// `sign(z) · max(|z| − γ, 0)`.
pub fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

/// Objective of the standardized problem for the given coefficients.
pub fn elastic_net_objective(
    z: &DMatrix<f64>,
    yc: &DVector<f64>,
    beta: &DVector<f64>,
    lambda: f64,
    alpha_mix: f64,
) -> f64 {
    let n = z.nrows() as f64;
    let rss = (yc - z * beta).norm_squared();
    let l1 = beta.iter().map(|b| b.abs()).sum::<f64>();
    rss / (2.0 * n) + lambda * (alpha_mix * l1 + 0.5 * (1.0 - alpha_mix) * beta.norm_squared())
}

struct Standardized {
    z: DMatrix<f64>,
    yc: DVector<f64>,
    means: Vec<f64>,
    sds: Vec<f64>,
    y_mean: f64,
}

fn standardize(design: &DesignMatrix) -> Standardized {
    let n = design.nrows() as f64;
    let p = design.ncols();
    let mut means = vec![0.0; p];
    let mut sds = vec![0.0; p];
    let mut z = design.x.clone();
    for j in 0..p {
        let col = design.x.column(j);
        let mean = col.sum() / n;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        means[j] = mean;
        sds[j] = sd;
        for i in 0..design.nrows() {
            z[(i, j)] = if sd > 0.0 {
                (design.x[(i, j)] - mean) / sd
            } else {
                0.0
            };
        }
    }
    let y_mean = design.y.mean();
    let yc = design.y.map(|v| v - y_mean);
    Standardized {
        z,
        yc,
        means,
        sds,
        y_mean,
    }
}

pub fn fit_elastic_net(
    design: &DesignMatrix,
    params: &ElasticNetParams,
) -> Result<ElasticNetFit, RegressionError> {
    params.validate()?;
    let n = design.nrows();
    if n < 2 {
        return Err(RegressionError::TooFewRows { n, needed: 2 });
    }
    let p = design.ncols();
    let std = standardize(design);
    let ElasticNetParams {
        lambda,
        alpha_mix,
        tol,
        max_iter,
    } = *params;
    let l1 = lambda * alpha_mix;
    let l2 = lambda * (1.0 - alpha_mix);
    let inv_n = 1.0 / n as f64;

    let mut beta = DVector::<f64>::zeros(p);
    let mut residual = std.yc.clone();
    let mut trace = vec![elastic_net_objective(
        &std.z, &std.yc, &beta, lambda, alpha_mix,
    )];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < max_iter {
        iterations += 1;
        let mut max_delta = 0.0f64;
        for j in 0..p {
            if std.sds[j] == 0.0 {
                continue;
            }
            let col = std.z.column(j);
            let old = beta[j];
            // (1/n)‖z_j‖² = 1 for standardized columns
            let rho = inv_n * col.dot(&residual) + old;
            let new = soft_threshold(rho, l1) / (1.0 + l2);
            let delta = new - old;
            if delta != 0.0 {
                residual.axpy(-delta, &col, 1.0);
                beta[j] = new;
            }
            max_delta = max_delta.max(delta.abs());
        }
        trace.push(elastic_net_objective(
            &std.z, &std.yc, &beta, lambda, alpha_mix,
        ));
        if max_delta < tol {
            converged = true;
            break;
        }
    }

    let original = DVector::from_fn(p, |j, _| {
        if std.sds[j] > 0.0 {
            beta[j] / std.sds[j]
        } else {
            0.0
        }
    });
    let intercept = std.y_mean - (0..p).map(|j| original[j] * std.means[j]).sum::<f64>();
    let mut model = model_from_fit(design, Solver::ElasticNet, intercept, original, p + 1);
    model.elastic_net = Some(ElasticNetInfo {
        lambda,
        alpha_mix,
        converged,
        iterations,
    });
    Ok(ElasticNetFit {
        model,
        converged,
        iterations,
        objective_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regression::fit_ols;

    fn toy(n: usize) -> DesignMatrix {
        let x = DMatrix::from_fn(n, 3, |i, j| {
            let t = (i * (j + 3)) as f64;
            (t * 0.37).sin() * (j as f64 + 1.0) + (i % (j + 2)) as f64
        });
        let y = DVector::from_fn(n, |i, _| {
            3.0 + 1.5 * x[(i, 0)] - 0.7 * x[(i, 1)] + 0.2 * x[(i, 2)] + ((i * 17) % 5) as f64 * 0.05
        });
        DesignMatrix::from_columns(vec!["a".into(), "b".into(), "c".into()], x, y, "y")
    }

    #[test]
    fn soft_threshold_cases() {
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold(-3.0, 1.0), -2.0);
        assert_eq!(soft_threshold(0.5, 1.0), 0.0);
        assert_eq!(soft_threshold(-1.0, 1.0), 0.0);
    }

    #[test]
    fn zero_penalty_recovers_ols() {
        let d = toy(60);
        let params = ElasticNetParams {
            lambda: 0.0,
            tol: 1e-13,
            max_iter: 100_000,
            ..Default::default()
        };
        let en = fit_elastic_net(&d, &params).unwrap();
        assert!(en.converged);
        let ols = fit_ols(&d).unwrap();
        for (a, b) in en.model.coefficients.iter().zip(&ols.coefficients) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
        assert!((en.model.intercept - ols.intercept).abs() < 1e-6);
    }

    #[test]
    fn huge_penalty_shrinks_everything() {
        let d = toy(60);
        let params = ElasticNetParams {
            lambda: 1e6,
            ..Default::default()
        };
        let en = fit_elastic_net(&d, &params).unwrap();
        assert!(en.model.coefficients.iter().all(|&b| b == 0.0));
        assert!((en.model.intercept - d.y.mean()).abs() < 1e-12);
    }

    #[test]
    fn objective_never_increases() {
        let d = toy(80);
        for (lambda, mix) in [(0.05, 0.5), (0.5, 1.0), (0.2, 0.0)] {
            let en = fit_elastic_net(
                &d,
                &ElasticNetParams {
                    lambda,
                    alpha_mix: mix,
                    ..Default::default()
                },
            )
            .unwrap();
            for w in en.objective_trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-12 * w[0].abs(), "{} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn iteration_cap_is_flagged_not_fatal() {
        let d = toy(60);
        let en = fit_elastic_net(
            &d,
            &ElasticNetParams {
                lambda: 0.0,
                tol: 1e-15,
                max_iter: 2,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(!en.converged);
        assert_eq!(en.iterations, 2);
        assert_eq!(
            en.model.elastic_net.as_ref().map(|i| i.converged),
            Some(false)
        );
    }

    #[test]
    fn constant_column_gets_zero_weight() {
        let mut d = toy(30);
        d.x.column_mut(2).fill(7.0);
        let en = fit_elastic_net(&d, &ElasticNetParams::default()).unwrap();
        assert_eq!(en.model.coefficients[2], 0.0);
    }

    #[test]
    fn bad_params_rejected() {
        let d = toy(10);
        for params in [
            ElasticNetParams {
                lambda: -1.0,
                ..Default::default()
            },
            ElasticNetParams {
                alpha_mix: 1.5,
                ..Default::default()
            },
            ElasticNetParams {
                tol: 0.0,
                ..Default::default()
            },
            ElasticNetParams {
                max_iter: 0,
                ..Default::default()
            },
        ] {
            assert!(matches!(
                fit_elastic_net(&d, &params),
                Err(RegressionError::InvalidParameter(_))
            ));
        }
    }
}
