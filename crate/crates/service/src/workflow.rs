//! Transport-independent steps shared by the HTTP handlers and the CLI:
//! feature requests, fitting reports and the what-if prediction pipeline.

use roadreg_core::events::{apply_events, EventError};
use roadreg_core::features::{self, FeatureError};
use roadreg_core::regression::{
    complete_inputs, predict_distribution, predict_point, PointPrediction, RegressionError,
};
use roadreg_core::{
    Dataset, EventOverride, FittedModel, Inputs, Solver, TemporalDefinition, TemporalRule,
    Timestamp,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Points in the density polyline returned with bayesian predictions.
pub const DENSITY_POINTS: usize = 200;
pub const INTERVAL_LEVEL: f64 = 0.99;

/// A temporal feature to extract from a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRequest {
    pub kind: String,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub hours: Option<Vec<u8>>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FeatureRequestError {
    #[error("unknown feature kind '{0}' (expected peakhour, am or explicit_hours)")]
    UnknownKind(String),
    #[error("explicit_hours needs a name and an hours list")]
    IncompleteExplicitHours,
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

impl FeatureRequestError {
    pub fn code(&self) -> &'static str {
        match self {
            FeatureRequestError::UnknownKind(_) => "UnknownKind",
            FeatureRequestError::IncompleteExplicitHours => "InvalidRequest",
            FeatureRequestError::Feature(FeatureError::EmptyInput) => "EmptyInput",
            FeatureRequestError::Feature(FeatureError::MissingHour(_)) => "MissingHour",
            FeatureRequestError::Feature(FeatureError::InvalidHour(_)) => "InvalidHour",
        }
    }
}

/// Turns requests into definitions; Peakhour is profiled over every link.
pub fn feature_definitions(
    dataset: &Dataset,
    requests: &[FeatureRequest],
) -> Result<Vec<TemporalDefinition>, FeatureRequestError> {
    requests
        .iter()
        .map(|req| {
            let mut def = match req.kind.as_str() {
                "peakhour" => features::hourly_profile(&dataset.spatial)?.peakhour_definition(),
                "am" => features::am_definition(),
                "explicit_hours" => {
                    let (Some(name), Some(hours)) = (&req.name, &req.hours) else {
                        return Err(FeatureRequestError::IncompleteExplicitHours);
                    };
                    features::explicit_hours_definition(name.clone(), hours.iter().copied())?
                }
                other => return Err(FeatureRequestError::UnknownKind(other.to_string())),
            };
            if let Some(name) = &req.name {
                def.name = name.clone();
            }
            Ok(def)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSummary {
    pub name: String,
    #[serde(flatten)]
    pub rule: TemporalRule,
    /// Rows of the dataset where the indicator is 1.
    pub active_rows: usize,
    pub rows: usize,
}

pub fn feature_summaries(dataset: &Dataset, names: &[String]) -> Vec<FeatureSummary> {
    dataset
        .temporal
        .iter()
        .filter(|t| names.iter().any(|n| n == t.name()))
        .map(|t| FeatureSummary {
            name: t.name().to_string(),
            rule: t.definition.rule.clone(),
            active_rows: t.values.iter().filter(|v| v.1 == 1).count(),
            rows: t.values.len(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRow {
    pub feature: String,
    pub estimate: f64,
    /// Marginal posterior standard deviation (bayesian fits only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub solver: Solver,
    pub dependent: String,
    pub n: usize,
    pub intercept: CoefficientRow,
    pub coefficients: Vec<CoefficientRow>,
    pub residual_std_error: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
    pub temporal: Vec<TemporalDefinition>,
    pub spatial: Vec<String>,
    /// Suggested upper bound for what-if speed inputs.
    pub input_max_kmh: f64,
}

pub fn model_report(model: &FittedModel) -> ModelReport {
    let sds: Option<Vec<f64>> = model
        .posterior
        .as_ref()
        .and_then(|p| p.coefficient_variances().ok().flatten())
        .map(|v| v.into_iter().map(f64::sqrt).collect());
    let sd = |k: usize| sds.as_ref().map(|s| s[k]);
    ModelReport {
        solver: model.solver,
        dependent: model.training.dependent_name.clone(),
        n: model.training.n,
        intercept: CoefficientRow {
            feature: "Intercept".into(),
            estimate: model.intercept,
            sd: sd(0),
        },
        coefficients: model
            .feature_order
            .iter()
            .zip(&model.coefficients)
            .enumerate()
            .map(|(k, (f, b))| CoefficientRow {
                feature: f.clone(),
                estimate: *b,
                sd: sd(k + 1),
            })
            .collect(),
        residual_std_error: model.training.residual_std_error,
        converged: model.elastic_net.as_ref().map(|e| e.converged),
        temporal: model.temporal.clone(),
        spatial: model.spatial_features().map(str::to_string).collect(),
        input_max_kmh: 1.5 * model.training.max_observed_kmh,
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PredictError {
    #[error("invalid time '{0}'")]
    InvalidTime(String),
    #[error("events need a prediction time")]
    MissingTime,
    #[error(transparent)]
    Regression(#[from] RegressionError),
    #[error(transparent)]
    Event(#[from] EventError),
}

impl PredictError {
    pub fn code(&self) -> &'static str {
        match self {
            PredictError::InvalidTime(_) => "InvalidTime",
            PredictError::MissingTime => "MissingTime",
            PredictError::Regression(e) => e.code(),
            PredictError::Event(e) => e.code(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PredictRequest {
    #[serde(default)]
    pub inputs: Inputs,
    /// `HH:MM` or an ISO-8601 local date-time.
    #[serde(default)]
    pub time: Option<String>,
    #[serde(default)]
    pub events: Vec<EventOverride>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionReport {
    pub mean: f64,
    pub scale: f64,
    pub dof: f64,
    pub interval_99: [f64; 2],
    pub density: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionReport {
    pub dependent: String,
    pub at: Option<Timestamp>,
    /// Inputs after temporal fill-in and event overrides.
    pub inputs: Inputs,
    pub fired_events: Vec<String>,
    pub prediction: PointPrediction,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distribution: Option<DistributionReport>,
}

/// Temporal fill-in from the clock, then event overrides, then prediction.
pub fn predict(
    model: &FittedModel,
    request: &PredictRequest,
) -> Result<PredictionReport, PredictError> {
    let at = request
        .time
        .as_deref()
        .map(|t| {
            t.parse::<Timestamp>()
                .map_err(|_| PredictError::InvalidTime(t.to_string()))
        })
        .transpose()?;
    let mut inputs = complete_inputs(model, &request.inputs, at)?;
    let mut fired_events = Vec::new();
    if !request.events.is_empty() {
        let at = at.ok_or(PredictError::MissingTime)?;
        let outcome = apply_events(&inputs, &request.events, at, model)?;
        inputs = outcome.values;
        fired_events = outcome.fired;
    }
    let prediction = predict_point(model, &inputs)?;
    let distribution = match model.solver {
        Solver::Bayesian => {
            let dist = predict_distribution(model, &inputs)?;
            let (lo, hi) = dist.interval(INTERVAL_LEVEL);
            Some(DistributionReport {
                mean: dist.mean,
                scale: dist.scale,
                dof: dist.dof,
                interval_99: [lo, hi],
                density: dist.density_polyline(DENSITY_POINTS),
            })
        }
        _ => None,
    };
    Ok(PredictionReport {
        dependent: model.training.dependent_name.clone(),
        at,
        inputs,
        fired_events,
        prediction,
        distribution,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use roadreg_core::features::{am_definition, explicit_hours_definition};
    use roadreg_core::regression::{fit_bayesian, BayesianPrior};
    use roadreg_core::synthetic::example_dataset;

    fn reference() -> FittedModel {
        FittedModel::from_coefficients(
            Solver::Ols,
            7.4163,
            &[
                ("AM", 1.7561),
                ("Peakhour", -2.7517),
                ("Road2", -0.0477),
                ("Road3", -0.0479),
                ("Road4", 0.7139),
            ],
            vec![
                am_definition(),
                explicit_hours_definition("Peakhour", 9..=22).unwrap(),
            ],
            "Road1",
        )
        .unwrap()
    }

    fn request(time: &str) -> PredictRequest {
        PredictRequest {
            inputs: [("Road2", 18.05), ("Road3", 4.4), ("Road4", 10.45)]
                .iter()
                .map(|(k, v)| (k.to_string(), *v))
                .collect(),
            time: Some(time.into()),
            events: vec![],
        }
    }

    #[test]
    fn clock_time_fills_temporal_features() {
        let report = predict(&reference(), &request("09:30")).unwrap();
        assert_eq!(report.inputs["AM"], 1.0);
        assert_eq!(report.inputs["Peakhour"], 1.0);
        assert!((report.prediction.value - 12.80921).abs() < 1e-4);
        assert!(report.distribution.is_none());
    }

    #[test]
    fn event_composes_with_prediction() {
        let model = reference();
        let mut req = request("09:30");
        req.events.push(
            EventOverride::new(
                "crash",
                "Road3",
                1.0,
                "09:00".parse().unwrap(),
                "10:00".parse().unwrap(),
            )
            .unwrap(),
        );
        let with_event = predict(&model, &req).unwrap();
        let mut direct = request("09:30");
        direct.inputs.insert("Road3".into(), 1.0);
        assert_eq!(
            with_event.prediction,
            predict(&model, &direct).unwrap().prediction
        );
        assert_eq!(with_event.fired_events, vec!["crash"]);

        req.time = None;
        req.inputs.insert("AM".into(), 1.0);
        req.inputs.insert("Peakhour".into(), 1.0);
        assert_eq!(predict(&model, &req), Err(PredictError::MissingTime));
    }

    #[test]
    fn bayesian_prediction_has_distribution() {
        let mut ds = example_dataset(5);
        ds.attach_temporal(am_definition()).unwrap();
        let design = roadreg_core::align(&ds).unwrap();
        let model = fit_bayesian(&design, &BayesianPrior::default()).unwrap();
        let report = predict(&model, &request("14:00")).unwrap();
        let dist = report.distribution.unwrap();
        assert_eq!(dist.density.len(), DENSITY_POINTS);
        assert!((dist.mean - report.prediction.raw).abs() < 1e-10);
        assert!(dist.interval_99[0] < dist.mean && dist.mean < dist.interval_99[1]);
        let rep = model_report(&model);
        assert!(rep.intercept.sd.is_some() && rep.coefficients.iter().all(|c| c.sd.unwrap() > 0.0));
    }

    #[test]
    fn feature_requests() {
        let ds = example_dataset(5);
        let req = |kind: &str| FeatureRequest {
            kind: kind.into(),
            name: None,
            hours: None,
        };
        let defs = feature_definitions(&ds, &[req("peakhour"), req("am")]).unwrap();
        assert_eq!(defs[0].name, "Peakhour");
        assert!(matches!(defs[0].rule, TemporalRule::Peakhour { .. }));
        assert_eq!(
            feature_definitions(&ds, &[req("weekend")]),
            Err(FeatureRequestError::UnknownKind("weekend".into()))
        );
        assert_eq!(
            feature_definitions(&ds, &[req("explicit_hours")]),
            Err(FeatureRequestError::IncompleteExplicitHours)
        );
        let pinned = FeatureRequest {
            kind: "explicit_hours".into(),
            name: Some("Rush".into()),
            hours: Some((9..=22).collect()),
        };
        let defs = feature_definitions(&ds, &[pinned]).unwrap();
        assert_eq!(
            defs[0].rule,
            TemporalRule::ExplicitHours {
                hours: (9..=22).collect()
            }
        );
    }
}
