use nalgebra::{Cholesky, DMatrix, DVector};

use super::{model_from_fit, with_intercept, RegressionError};
use crate::types::{DesignMatrix, FittedModel, Solver};

/// Smallest admissible squared Cholesky pivot of the unit-diagonal Gram
/// matrix. A pivot is the squared sine of the angle between a column and the
/// span of the columns before it.
const RANK_TOL: f64 = 1e-10;

/// Least squares through the normal equations.
///
/// The Gram matrix of `[1 | X]` is scaled to unit diagonal before the
/// Cholesky factorization so the rank test is independent of column units.
pub fn fit_ols(design: &DesignMatrix) -> Result<FittedModel, RegressionError> {
    let (n, p) = (design.nrows(), design.ncols());
    if n < p + 2 {
        return Err(RegressionError::TooFewRows { n, needed: p + 2 });
    }
    let xa = with_intercept(&design.x);
    let gram = xa.tr_mul(&xa);
    let rhs = xa.tr_mul(&design.y);

    let column_name = |k: usize| {
        if k == 0 {
            "intercept".to_string()
        } else {
            design.columns[k - 1].clone()
        }
    };
    let mut scale = DVector::zeros(p + 1);
    for k in 0..=p {
        if gram[(k, k)] <= 0.0 {
            return Err(RegressionError::RankDeficient(column_name(k)));
        }
        scale[k] = gram[(k, k)].sqrt().recip();
    }
    let scaled = DMatrix::from_fn(p + 1, p + 1, |i, j| gram[(i, j)] * scale[i] * scale[j]);
    let chol =
        Cholesky::new(scaled).ok_or_else(|| RegressionError::RankDeficient(column_name(p)))?;
    let l = chol.l_dirty();
    if let Some(k) = (0..=p).find(|&k| l[(k, k)] * l[(k, k)] < RANK_TOL) {
        return Err(RegressionError::RankDeficient(column_name(k)));
    }
    let z = chol.solve(&rhs.component_mul(&scale));
    let coef = z.component_mul(&scale);

    let beta = coef.rows(1, p).into_owned();
    Ok(model_from_fit(design, Solver::Ols, coef[0], beta, p + 1))
}
