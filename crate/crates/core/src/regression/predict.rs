use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal, StudentsT};

use super::RegressionError;
use crate::types::{FittedModel, Inputs, Timestamp};

/// A point prediction in km/h; `raw` is the unclamped linear predictor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointPrediction {
    pub value: f64,
    pub raw: f64,
    pub clamped: bool,
}

/// Location–scale predictive distribution of a new response.
///
/// Student-t with `dof` degrees of freedom, or normal when `dof` is infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictiveDistribution {
    pub mean: f64,
    pub scale: f64,
    pub dof: f64,
}

impl PredictiveDistribution {
    fn standard_quantile(&self, p: f64) -> f64 {
        if self.dof.is_infinite() {
            Normal::new(0.0, 1.0)
                .expect("standard normal")
                .inverse_cdf(p)
        } else {
            StudentsT::new(0.0, 1.0, self.dof)
                .expect("positive dof")
                .inverse_cdf(p)
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        let z = (x - self.mean) / self.scale;
        let standard = if self.dof.is_infinite() {
            Normal::new(0.0, 1.0).expect("standard normal").pdf(z)
        } else {
            StudentsT::new(0.0, 1.0, self.dof)
                .expect("positive dof")
                .pdf(z)
        };
        standard / self.scale
    }

    pub fn quantile(&self, p: f64) -> f64 {
        self.mean + self.scale * self.standard_quantile(p)
    }

    /// Central interval holding `level` of the probability mass.
    pub fn interval(&self, level: f64) -> (f64, f64) {
        let half = self.scale * self.standard_quantile(0.5 + level / 2.0);
        (self.mean - half, self.mean + half)
    }

    /// `points` evenly spaced `(x, density)` pairs over the central 99.9% interval.
    pub fn density_polyline(&self, points: usize) -> Vec<[f64; 2]> {
        let (lo, hi) = self.interval(0.999);
        let step = if points > 1 {
            (hi - lo) / (points - 1) as f64
        } else {
            0.0
        };
        (0..points)
            .map(|i| {
                let x = lo + step * i as f64;
                [x, self.pdf(x)]
            })
            .collect()
    }
}

/// Fills temporal regressors of `model` from `at`. Values already present in
/// `inputs` are kept as given.
pub fn complete_inputs(
    model: &FittedModel,
    inputs: &Inputs,
    at: Option<Timestamp>,
) -> Result<Inputs, RegressionError> {
    let mut out = inputs.clone();
    for def in &model.temporal {
        if out.contains_key(&def.name) {
            continue;
        }
        let at = at.ok_or_else(|| RegressionError::MissingFeature(def.name.clone()))?;
        out.insert(def.name.clone(), f64::from(def.indicator(at)));
    }
    Ok(out)
}

/// Inputs in feature order, validated.
pub(crate) fn input_row(model: &FittedModel, inputs: &Inputs) -> Result<Vec<f64>, RegressionError> {
    if let Some(unknown) = inputs.keys().find(|k| !model.feature_order.contains(k)) {
        return Err(RegressionError::UnknownFeature(unknown.clone()));
    }
    model
        .feature_order
        .iter()
        .map(|name| {
            let value = *inputs
                .get(name)
                .ok_or_else(|| RegressionError::MissingFeature(name.clone()))?;
            let ok = if model.is_temporal(name) {
                value == 0.0 || value == 1.0
            } else {
                value.is_finite() && value >= 0.0
            };
            if ok {
                Ok(value)
            } else {
                Err(RegressionError::InvalidInput {
                    name: name.clone(),
                    value,
                })
            }
        })
        .collect()
}

/// `intercept + βᵀx`, clamped at 0 km/h.
pub fn predict_point(
    model: &FittedModel,
    inputs: &Inputs,
) -> Result<PointPrediction, RegressionError> {
    let row = input_row(model, inputs)?;
    let raw = model.linear_predictor(&row);
    Ok(PointPrediction {
        value: raw.max(0.0),
        raw,
        clamped: raw < 0.0,
    })
}

/// Student-t posterior predictive of a bayesian model:
/// mean `xᵀmₙ`, `2aₙ` degrees of freedom, scale² `(bₙ/aₙ)(1 + xᵀΛₙ⁻¹x)`.
pub fn predict_distribution(
    model: &FittedModel,
    inputs: &Inputs,
) -> Result<PredictiveDistribution, RegressionError> {
    let post = model
        .posterior
        .as_ref()
        .ok_or(RegressionError::NotBayesian)?;
    let row = input_row(model, inputs)?;
    let x = DVector::from_iterator(
        row.len() + 1,
        std::iter::once(1.0).chain(row.iter().copied()),
    );
    let mean = x.dot(&post.mean_vector());
    let leverage = x.dot(&(post.covariance_scale()? * &x));
    let scale = (post.noise_rate / post.noise_shape * (1.0 + leverage)).sqrt();
    if !(scale.is_finite() && scale > 0.0) {
        return Err(RegressionError::NumericalInstability(
            "non-positive predictive scale".into(),
        ));
    }
    Ok(PredictiveDistribution {
        mean,
        scale,
        dof: 2.0 * post.noise_shape,
    })
}
