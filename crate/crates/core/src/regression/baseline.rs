use nalgebra::DVector;

use super::{model_from_fit, RegressionError};
use crate::types::{DesignMatrix, FittedModel, Solver};

/// Predicts the training mean of the dependent speed for every input.
pub fn fit_baseline(design: &DesignMatrix) -> Result<FittedModel, RegressionError> {
    if design.nrows() == 0 {
        return Err(RegressionError::EmptyDesign);
    }
    let mean = design.y.mean();
    Ok(model_from_fit(
        design,
        Solver::Baseline,
        mean,
        DVector::zeros(design.ncols()),
        1,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn mean_of_response() {
        let d = DesignMatrix::from_columns(
            vec!["x".into()],
            DMatrix::from_column_slice(3, 1, &[9.0, -4.0, 0.5]),
            DVector::from_column_slice(&[1.0, 2.0, 3.0]),
            "y",
        );
        let m = fit_baseline(&d).unwrap();
        assert_eq!(m.intercept, 2.0);
        assert_eq!(m.coefficients, vec![0.0]);
        assert_eq!(m.predict_row(&[123.0]), 2.0);
    }

    #[test]
    fn empty_design() {
        let d = DesignMatrix::from_columns(
            vec!["x".into()],
            DMatrix::zeros(0, 1),
            DVector::zeros(0),
            "y",
        );
        assert_eq!(fit_baseline(&d), Err(RegressionError::EmptyDesign));
    }
}
