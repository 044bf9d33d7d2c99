//! Versioned JSON model files.
//!
//! A model file is a single JSON object with `version`, `solver`,
//! `feature_order`, `coefficients`, `intercept`, an optional `posterior`
//! block and the temporal definitions and training metadata needed to
//! predict from a clock time. Floats round-trip bit-exactly.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::RegressionError;
use crate::types::FittedModel;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed model file: {0}")]
    Format(#[from] serde_json::Error),
    #[error("unsupported model file version {0}")]
    UnsupportedVersion(u32),
    #[error(transparent)]
    Invalid(#[from] RegressionError),
}

#[derive(Serialize)]
struct ModelFileRef<'a> {
    version: u32,
    #[serde(flatten)]
    model: &'a FittedModel,
}

#[derive(Deserialize)]
struct ModelFile {
    version: u32,
    #[serde(flatten)]
    model: FittedModel,
}

pub fn to_json(model: &FittedModel) -> String {
    serde_json::to_string_pretty(&ModelFileRef {
        version: MODEL_FORMAT_VERSION,
        model,
    })
    .expect("models serialize")
}

pub fn from_json(text: &str) -> Result<FittedModel, PersistError> {
    let file: ModelFile = serde_json::from_str(text)?;
    if file.version != MODEL_FORMAT_VERSION {
        return Err(PersistError::UnsupportedVersion(file.version));
    }
    file.model.validate()?;
    Ok(file.model)
}

pub fn save(model: &FittedModel, path: impl AsRef<Path>) -> Result<(), PersistError> {
    fs::write(path, to_json(model))?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<FittedModel, PersistError> {
    from_json(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regression::{fit_bayesian, BayesianPrior};
    use crate::types::{DesignMatrix, Solver};
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn bayesian_model_round_trips_bit_exactly(
            xs in prop::collection::vec(-1e3f64..1e3, 6..30),
            noise in prop::collection::vec(-1.0f64..1.0, 30),
        ) {
            let n = xs.len();
            let x = DMatrix::from_fn(n, 2, |i, j| if j == 0 { xs[i] } else { (xs[i] * 0.37).sin() });
            let y = DVector::from_fn(n, |i, _| 0.3 * xs[i] + noise[i] * 1e-2 + std::f64::consts::PI);
            let d = DesignMatrix::from_columns(vec!["a".into(), "b".into()], x, y, "y");
            let model = fit_bayesian(&d, &BayesianPrior::default()).unwrap();
            let back = from_json(&to_json(&model)).unwrap();
            let post = model.posterior.as_ref().unwrap();
            let back_post = back.posterior.as_ref().unwrap();
            prop_assert!(post.mean.iter().zip(&back_post.mean).all(|(a, b)| a.to_bits() == b.to_bits()));
            prop_assert_eq!(back, model);
        }
    }

    #[test]
    fn file_layout_has_required_keys() {
        let m =
            FittedModel::from_coefficients(Solver::Ols, 1.0, &[("x", 2.0)], vec![], "y").unwrap();
        let v: serde_json::Value = serde_json::from_str(&to_json(&m)).unwrap();
        for key in [
            "version",
            "solver",
            "feature_order",
            "coefficients",
            "intercept",
        ] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert!(v.get("posterior").is_none());
        assert_eq!(v["solver"], "ols");
    }

    #[test]
    fn rejects_other_versions_and_broken_models() {
        let m =
            FittedModel::from_coefficients(Solver::Ols, 1.0, &[("x", 2.0)], vec![], "y").unwrap();
        let text = to_json(&m).replace("\"version\": 1", "\"version\": 9");
        assert!(matches!(
            from_json(&text),
            Err(PersistError::UnsupportedVersion(9))
        ));
        let text = to_json(&m).replace("\"solver\": \"ols\"", "\"solver\": \"bayesian\"");
        assert!(matches!(from_json(&text), Err(PersistError::Invalid(_))));
    }
}
