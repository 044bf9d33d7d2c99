//! Conjugate normal–inverse-gamma Bayesian linear regression.
//!
//! Prior: `σ² ~ InvGamma(a₀, b₀)`, `w | σ² ~ N(0, σ² (τI)⁻¹)` over the
//! intercept-augmented weights `w = [α, β]`. The posterior is again
//! normal–inverse-gamma:
//!
//! ```text
//! Λₙ = XᵀX + τI
//! mₙ = Λₙ⁻¹ Xᵀy
//! aₙ = a₀ + n/2
//! bₙ = b₀ + ½ (yᵀy − mₙᵀΛₙmₙ)
//! ```
//!
//! `bₙ` is evaluated as `b₀ + ½(‖y − Xmₙ‖² + τ‖mₙ‖²)`, the same quantity
//! without the cancellation between two large terms.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{training_meta, with_intercept, RegressionError};
use crate::types::{DesignMatrix, FittedModel, PosteriorParams, Solver};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BayesianPrior {
    /// Prior precision of every weight, relative to the noise variance.
    pub tau: f64,
    pub noise_shape: f64,
    pub noise_rate: f64,
}

impl Default for BayesianPrior {
    fn default() -> Self {
        Self {
            tau: 1e-6,
            noise_shape: 1e-3,
            noise_rate: 1e-3,
        }
    }
}

impl BayesianPrior {
    fn validate(&self) -> Result<(), RegressionError> {
        for (name, v) in [
            ("tau", self.tau),
            ("noise_shape", self.noise_shape),
            ("noise_rate", self.noise_rate),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(RegressionError::InvalidParameter(format!(
                    "{name} must be finite and > 0"
                )));
            }
        }
        Ok(())
    }
}

/// Posterior for the weights of `y ≈ x w` with `x` used as given (no
/// intercept column is added).
pub fn conjugate_update(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    prior: &BayesianPrior,
) -> Result<PosteriorParams, RegressionError> {
    prior.validate()?;
    let n = x.nrows();
    if n == 0 {
        return Err(RegressionError::EmptyDesign);
    }
    let d = x.ncols();
    let mut precision = x.tr_mul(x);
    for k in 0..d {
        precision[(k, k)] += prior.tau;
    }
    let chol = Cholesky::new(precision.clone()).ok_or_else(|| {
        RegressionError::NumericalInstability("posterior precision is not positive definite".into())
    })?;
    let mean = chol.solve(&x.tr_mul(y));
    if mean.iter().any(|v| !v.is_finite()) {
        return Err(RegressionError::NumericalInstability(
            "non-finite posterior mean".into(),
        ));
    }
    let rss = (y - x * &mean).norm_squared();
    let noise_shape = prior.noise_shape + n as f64 / 2.0;
    let noise_rate = prior.noise_rate + 0.5 * (rss + prior.tau * mean.norm_squared());

    Ok(PosteriorParams {
        mean: mean.iter().copied().collect(),
        precision: precision
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect(),
        noise_shape,
        noise_rate,
    })
}

pub fn fit_bayesian(
    design: &DesignMatrix,
    prior: &BayesianPrior,
) -> Result<FittedModel, RegressionError> {
    let n = design.nrows();
    if n < 2 {
        return Err(RegressionError::TooFewRows { n, needed: 2 });
    }
    let xa = with_intercept(&design.x);
    let posterior = conjugate_update(&xa, &design.y, prior)?;
    let intercept = posterior.mean[0];
    let coefficients = posterior.mean[1..].to_vec();
    let res = &design.y - &xa * posterior.mean_vector();
    Ok(FittedModel {
        solver: Solver::Bayesian,
        feature_order: design.columns.clone(),
        coefficients,
        intercept,
        posterior: Some(posterior),
        temporal: design.temporal.clone(),
        training: training_meta(design, &res, design.ncols() + 1),
        elastic_net: None,
    })
}

impl PosteriorParams {
    /// `Λₙ⁻¹`, the weight covariance per unit noise variance.
    pub fn covariance_scale(&self) -> Result<DMatrix<f64>, RegressionError> {
        Cholesky::new(self.precision_matrix())
            .map(|c| c.inverse())
            .ok_or_else(|| {
                RegressionError::NumericalInstability(
                    "posterior precision is not positive definite".into(),
                )
            })
    }

    /// Squared Student-t scales of the marginal weight posteriors,
    /// `diag(Λₙ⁻¹) · bₙ/aₙ`.
    pub fn coefficient_scales_squared(&self) -> Result<Vec<f64>, RegressionError> {
        let cov = self.covariance_scale()?;
        let s = self.noise_rate / self.noise_shape;
        Ok(cov.diagonal().iter().map(|v| v * s).collect())
    }

    /// Marginal weight variances `diag(Λₙ⁻¹) · bₙ/(aₙ − 1)`; `None` when
    /// `aₙ ≤ 1` and the variance does not exist.
    pub fn coefficient_variances(&self) -> Result<Option<Vec<f64>>, RegressionError> {
        if self.noise_shape <= 1.0 {
            return Ok(None);
        }
        let cov = self.covariance_scale()?;
        let s = self.noise_rate / (self.noise_shape - 1.0);
        Ok(Some(cov.diagonal().iter().map(|v| v * s).collect()))
    }

    /// Posterior mean of σ², when it exists.
    pub fn noise_variance_mean(&self) -> Option<f64> {
        (self.noise_shape > 1.0).then(|| self.noise_rate / (self.noise_shape - 1.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regression::fit_ols;

    fn line_design(xs: &[f64], ys: &[f64]) -> DesignMatrix {
        DesignMatrix::from_columns(
            vec!["x".into()],
            DMatrix::from_column_slice(xs.len(), 1, xs),
            DVector::from_column_slice(ys),
            "y",
        )
    }

    #[test]
    fn two_points_give_valid_posterior() {
        let prior = BayesianPrior::default();
        let m = fit_bayesian(&line_design(&[1.0, 2.0], &[3.0, 5.0]), &prior).unwrap();
        let post = m.posterior.as_ref().unwrap();
        assert_eq!(post.noise_shape, prior.noise_shape + 1.0);
        assert!(post.noise_rate > 0.0);
        assert!(post
            .coefficient_scales_squared()
            .unwrap()
            .iter()
            .all(|v| v.is_finite() && *v > 0.0));
        m.validate().unwrap();
    }

    #[test]
    fn rejects_tiny_designs() {
        let d = line_design(&[1.0], &[2.0]);
        assert_eq!(
            fit_bayesian(&d, &BayesianPrior::default()),
            Err(RegressionError::TooFewRows { n: 1, needed: 2 })
        );
    }

    #[test]
    fn coefficients_are_posterior_mean() {
        let d = line_design(&[1.0, 2.0, 3.0, 4.0, 6.0], &[1.1, 1.9, 3.2, 3.9, 6.1]);
        let m = fit_bayesian(&d, &BayesianPrior::default()).unwrap();
        let post = m.posterior.as_ref().unwrap();
        assert_eq!(post.mean[0], m.intercept);
        assert_eq!(post.mean[1..], m.coefficients[..]);
    }

    #[test]
    fn vague_prior_matches_ols() {
        let d = line_design(
            &[1.0, 2.0, 3.0, 4.0, 6.0, 7.5],
            &[1.1, 1.9, 3.2, 3.9, 6.1, 7.0],
        );
        let b = fit_bayesian(&d, &BayesianPrior::default()).unwrap();
        let o = fit_ols(&d).unwrap();
        assert!((b.coefficients[0] - o.coefficients[0]).abs() < 1e-4 * o.coefficients[0].abs());
        assert!((b.intercept - o.intercept).abs() < 1e-4 * o.intercept.abs().max(1.0));
    }

    #[test]
    fn strong_prior_shrinks_toward_zero() {
        let d = line_design(&[1.0, 2.0, 3.0, 4.0, 6.0], &[3.1, 4.9, 7.2, 8.9, 13.1]);
        let vague = fit_bayesian(
            &d,
            &BayesianPrior {
                tau: 1e-6,
                ..Default::default()
            },
        )
        .unwrap();
        let strong = fit_bayesian(
            &d,
            &BayesianPrior {
                tau: 1e6,
                ..Default::default()
            },
        )
        .unwrap();
        let norm = |m: &FittedModel| m.posterior.as_ref().unwrap().mean_vector().norm();
        assert!(norm(&strong) < norm(&vague));
        assert!(norm(&strong) < 1e-3);
    }

    #[test]
    fn repeated_observation_pulls_fit_toward_it() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys = [0.0, 1.0, 2.0, 3.0];
        let (x0, y0) = (1.5, 6.0);
        let prior = BayesianPrior::default();
        let mut gaps = Vec::new();
        for copies in 0..3 {
            let mut x: Vec<f64> = xs.to_vec();
            let mut y: Vec<f64> = ys.to_vec();
            x.extend(std::iter::repeat_n(x0, copies));
            y.extend(std::iter::repeat_n(y0, copies));
            let m = fit_bayesian(&line_design(&x, &y), &prior).unwrap();
            gaps.push((m.linear_predictor(&[x0]) - y0).abs());
        }
        assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
    }

    #[test]
    fn precision_is_symmetric_positive_definite() {
        let d = line_design(&[1.0, 2.0, 3.0, 4.0, 6.0], &[1.1, 1.9, 3.2, 3.9, 6.1]);
        let post = fit_bayesian(&d, &BayesianPrior::default())
            .unwrap()
            .posterior
            .unwrap();
        let p = post.precision_matrix();
        assert!((&p - p.transpose()).amax() < 1e-10);
        assert!(p.symmetric_eigenvalues().iter().all(|&e| e > 0.0));
    }
}
