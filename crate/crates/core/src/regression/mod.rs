//! Linear models of the dependent link speed: ordinary least squares,
//! elastic net, conjugate Bayesian regression and a mean baseline.
//!
//! Every solver fits `y = intercept + Σ βⱼ xⱼ + ε` with an unpenalized
//! intercept and returns an immutable [`FittedModel`].

mod baseline;
mod bayesian;
mod elastic_net;
mod ols;
pub mod persist;
mod predict;

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{DesignMatrix, FittedModel, Solver, TemporalDefinition, TrainingMeta};

pub use baseline::fit_baseline;
pub use bayesian::{conjugate_update, fit_bayesian, BayesianPrior};
pub use elastic_net::{
    elastic_net_objective, fit_elastic_net, soft_threshold, ElasticNetFit, ElasticNetParams,
};
pub use ols::fit_ols;
pub use predict::{
    complete_inputs, predict_distribution, predict_point, PointPrediction, PredictiveDistribution,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RegressionError {
    #[error("need at least {needed} rows, got {n}")]
    TooFewRows { n: usize, needed: usize },
    #[error("design has no rows")]
    EmptyDesign,
    #[error("regressors are collinear (column '{0}')")]
    RankDeficient(String),
    #[error("numerical instability: {0}")]
    NumericalInstability(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("missing input for feature '{0}'")]
    MissingFeature(String),
    #[error("unknown feature '{0}'")]
    UnknownFeature(String),
    #[error("invalid value {value} for feature '{name}'")]
    InvalidInput { name: String, value: f64 },
    #[error("model has no posterior; distributional prediction needs a bayesian fit")]
    NotBayesian,
    #[error("invalid model: {0}")]
    InvalidModel(String),
}

impl RegressionError {
    pub fn code(&self) -> &'static str {
        match self {
            RegressionError::TooFewRows { .. } => "TooFewRows",
            RegressionError::EmptyDesign => "EmptyDesign",
            RegressionError::RankDeficient(_) => "RankDeficient",
            RegressionError::NumericalInstability(_) => "NumericalInstability",
            RegressionError::InvalidParameter(_) => "InvalidParameter",
            RegressionError::MissingFeature(_) => "MissingFeature",
            RegressionError::UnknownFeature(_) => "UnknownFeature",
            RegressionError::InvalidInput { .. } => "InvalidInput",
            RegressionError::NotBayesian => "NotBayesian",
            RegressionError::InvalidModel(_) => "InvalidModel",
        }
    }
}

/// A solver choice together with its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "solver", rename_all = "snake_case")]
pub enum FitSpec {
    Ols,
    ElasticNet(#[serde(default)] ElasticNetParams),
    Bayesian(#[serde(default)] BayesianPrior),
    Baseline,
}

impl FitSpec {
    pub fn solver(&self) -> Solver {
        match self {
            FitSpec::Ols => Solver::Ols,
            FitSpec::ElasticNet(_) => Solver::ElasticNet,
            FitSpec::Bayesian(_) => Solver::Bayesian,
            FitSpec::Baseline => Solver::Baseline,
        }
    }

    pub fn with_defaults(solver: Solver) -> Self {
        match solver {
            Solver::Ols => FitSpec::Ols,
            Solver::ElasticNet => FitSpec::ElasticNet(ElasticNetParams::default()),
            Solver::Bayesian => FitSpec::Bayesian(BayesianPrior::default()),
            Solver::Baseline => FitSpec::Baseline,
        }
    }
}

pub fn fit(design: &DesignMatrix, spec: &FitSpec) -> Result<FittedModel, RegressionError> {
    match spec {
        FitSpec::Ols => fit_ols(design),
        FitSpec::ElasticNet(params) => fit_elastic_net(design, params).map(|f| f.model),
        FitSpec::Bayesian(prior) => fit_bayesian(design, prior),
        FitSpec::Baseline => fit_baseline(design),
    }
}

/// `[1 | X]`.
pub(crate) fn with_intercept(x: &DMatrix<f64>) -> DMatrix<f64> {
    x.clone().insert_column(0, 1.0)
}

pub(crate) fn training_meta(
    design: &DesignMatrix,
    residuals: &DVector<f64>,
    n_params: usize,
) -> TrainingMeta {
    let n = design.nrows();
    let dof = n.saturating_sub(n_params).max(1);
    let rss = residuals.norm_squared();
    let max_observed_kmh = design
        .x
        .column_iter()
        .skip(design.n_temporal)
        .flat_map(|c| c.iter().copied().collect::<Vec<_>>())
        .chain(design.y.iter().copied())
        .fold(0.0f64, f64::max);
    TrainingMeta {
        n,
        dependent_name: design.dependent_name.clone(),
        sampling_minutes: design.sampling_minutes,
        residual_std_error: (rss / dof as f64).sqrt(),
        max_observed_kmh,
    }
}

pub(crate) fn residuals(
    design: &DesignMatrix,
    intercept: f64,
    beta: &DVector<f64>,
) -> DVector<f64> {
    let fitted = &design.x * beta;
    DVector::from_fn(design.nrows(), |i, _| design.y[i] - intercept - fitted[i])
}

pub(crate) fn model_from_fit(
    design: &DesignMatrix,
    solver: Solver,
    intercept: f64,
    beta: DVector<f64>,
    n_params: usize,
) -> FittedModel {
    let res = residuals(design, intercept, &beta);
    FittedModel {
        solver,
        feature_order: design.columns.clone(),
        coefficients: beta.iter().copied().collect(),
        intercept,
        posterior: None,
        temporal: design.temporal.clone(),
        training: training_meta(design, &res, n_params),
        elastic_net: None,
    }
}

impl FittedModel {
    /// A model from known coefficients.
    ///
    /// Names listed in `temporal` are temporal regressors; the rest are spatial.
    pub fn from_coefficients(
        solver: Solver,
        intercept: f64,
        coefficients: &[(&str, f64)],
        temporal: Vec<TemporalDefinition>,
        dependent_name: &str,
    ) -> Result<Self, RegressionError> {
        let model = FittedModel {
            solver,
            feature_order: coefficients.iter().map(|(n, _)| n.to_string()).collect(),
            coefficients: coefficients.iter().map(|(_, c)| *c).collect(),
            intercept,
            posterior: None,
            temporal,
            training: TrainingMeta {
                n: 0,
                dependent_name: dependent_name.to_string(),
                sampling_minutes: crate::types::DEFAULT_SAMPLING_MINUTES,
                residual_std_error: 0.0,
                max_observed_kmh: 0.0,
            },
            elastic_net: None,
        };
        model.validate()?;
        Ok(model)
    }

    /// Structural checks applied to every fitted or loaded model.
    pub fn validate(&self) -> Result<(), RegressionError> {
        let invalid = |m: String| Err(RegressionError::InvalidModel(m));
        if self.coefficients.len() != self.feature_order.len() {
            return invalid(format!(
                "{} coefficients for {} features",
                self.coefficients.len(),
                self.feature_order.len()
            ));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = self.feature_order.iter().find(|n| !seen.insert(n.as_str())) {
            return invalid(format!("feature '{dup}' listed twice"));
        }
        if let Some(def) = self
            .temporal
            .iter()
            .find(|d| !seen.contains(d.name.as_str()))
        {
            return invalid(format!(
                "temporal definition '{}' has no coefficient",
                def.name
            ));
        }
        if !self.intercept.is_finite() || self.coefficients.iter().any(|c| !c.is_finite()) {
            return invalid("non-finite coefficient".into());
        }
        match (&self.posterior, self.solver) {
            (Some(post), Solver::Bayesian) => {
                let p = self.coefficients.len() + 1;
                if post.mean.len() != p
                    || post.precision.len() != p
                    || post.precision.iter().any(|r| r.len() != p)
                {
                    return invalid("posterior dimensions do not match the features".into());
                }
                if post.mean[0] != self.intercept || post.mean[1..] != self.coefficients[..] {
                    return invalid("coefficients differ from the posterior mean".into());
                }
                if !(post.noise_shape > 0.0 && post.noise_rate > 0.0) {
                    return invalid("noise shape and rate must be positive".into());
                }
            }
            (None, Solver::Bayesian) => return invalid("bayesian model without posterior".into()),
            (Some(_), _) => return invalid("posterior on a non-bayesian model".into()),
            (None, _) => {}
        }
        Ok(())
    }

    /// `intercept + βᵀx` for a row in feature order, without clamping.
    pub fn linear_predictor(&self, row: &[f64]) -> f64 {
        self.intercept
            + self
                .coefficients
                .iter()
                .zip(row)
                .map(|(b, x)| b * x)
                .sum::<f64>()
    }

    /// Linear predictor clamped at 0 km/h.
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.linear_predictor(row).max(0.0)
    }

    pub fn predict_design(&self, design: &DesignMatrix) -> Vec<f64> {
        design
            .x
            .row_iter()
            .map(|r| self.predict_row(&r.iter().copied().collect::<Vec<_>>()))
            .collect()
    }
}
