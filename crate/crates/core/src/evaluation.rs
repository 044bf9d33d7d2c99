//! Hold-out splits, error metrics and the four-solver comparison.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::regression::{self, BayesianPrior, ElasticNetParams, FitSpec, RegressionError};
use crate::types::{DesignMatrix, FittedModel, Solver};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("need at least 4 rows to split, got {0}")]
    TooFewRows(usize),
    #[error("test fraction {0} leaves an empty train or test set")]
    InvalidFraction(f64),
    #[error("predictions ({predictions}) and truth ({truth}) differ in length")]
    LengthMismatch { predictions: usize, truth: usize },
    #[error("no values to score")]
    Empty,
    #[error("{solver} fit failed: {source}")]
    Fit {
        solver: Solver,
        #[source]
        source: RegressionError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SplitMode {
    /// Seeded shuffle of all rows.
    Shuffled { seed: u64 },
    /// The latest rows are held out.
    Chronological,
}

fn split_sizes(n: usize, test_fraction: f64) -> Result<(usize, usize), EvalError> {
    if n < 4 {
        return Err(EvalError::TooFewRows(n));
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(EvalError::InvalidFraction(test_fraction));
    }
    // ⌊n·f⌋, guarded against representation error such as 10 · 0.3 = 2.9999…
    let n_test = (n as f64 * test_fraction + 1e-9).floor() as usize;
    if n_test == 0 || n_test == n {
        return Err(EvalError::InvalidFraction(test_fraction));
    }
    Ok((n - n_test, n_test))
}

/// Seeded random split into `⌈n(1−f)⌉` train and `⌊nf⌋` test rows.
/// Both parts keep the original row order.
pub fn split(
    design: &DesignMatrix,
    test_fraction: f64,
    seed: u64,
) -> Result<(DesignMatrix, DesignMatrix), EvalError> {
    split_with(design, test_fraction, SplitMode::Shuffled { seed })
}

pub fn split_with(
    design: &DesignMatrix,
    test_fraction: f64,
    mode: SplitMode,
) -> Result<(DesignMatrix, DesignMatrix), EvalError> {
    let n = design.nrows();
    let (n_train, _) = split_sizes(n, test_fraction)?;
    let mut order: Vec<usize> = (0..n).collect();
    match mode {
        SplitMode::Shuffled { seed } => order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed)),
        SplitMode::Chronological => order.sort_by_key(|&i| design.timestamps[i]),
    }
    let (train, test) = order.split_at_mut(n_train);
    train.sort_unstable();
    test.sort_unstable();
    Ok((design.select_rows(train), design.select_rows(test)))
}

fn check_pair(predictions: &[f64], truth: &[f64]) -> Result<(), EvalError> {
    if predictions.len() != truth.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            truth: truth.len(),
        });
    }
    if predictions.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(())
}

pub fn mae(predictions: &[f64], truth: &[f64]) -> Result<f64, EvalError> {
    check_pair(predictions, truth)?;
    let total: f64 = predictions
        .iter()
        .zip(truth)
        .map(|(p, t)| (p - t).abs())
        .sum();
    Ok(total / predictions.len() as f64)
}

pub fn rmse(predictions: &[f64], truth: &[f64]) -> Result<f64, EvalError> {
    check_pair(predictions, truth)?;
    let total: f64 = predictions
        .iter()
        .zip(truth)
        .map(|(p, t)| (p - t).powi(2))
        .sum();
    Ok((total / predictions.len() as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompareConfig {
    pub test_fraction: f64,
    pub split: SplitMode,
    pub elastic_net: ElasticNetParams,
    pub prior: BayesianPrior,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            test_fraction: 0.2,
            split: SplitMode::Shuffled { seed: 0 },
            elastic_net: ElasticNetParams::default(),
            prior: BayesianPrior::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub solver: Solver,
    pub mae: f64,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub n_train: usize,
    pub n_test: usize,
    /// In the order ols, elastic_net, bayesian, baseline.
    pub rows: Vec<ComparisonRow>,
}

impl Comparison {
    pub fn row(&self, solver: Solver) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.solver == solver)
    }
}

/// Fits every solver on the train part and scores it on the test part.
pub fn compare_models(
    design: &DesignMatrix,
    config: &CompareConfig,
) -> Result<Comparison, EvalError> {
    let (train, test) = split_with(design, config.test_fraction, config.split)?;
    let specs = [
        FitSpec::Ols,
        FitSpec::ElasticNet(config.elastic_net),
        FitSpec::Bayesian(config.prior),
        FitSpec::Baseline,
    ];
    let fits: Vec<Result<FittedModel, EvalError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = specs
            .iter()
            .map(|spec| {
                let train = &train;
                scope.spawn(move || {
                    regression::fit(train, spec).map_err(|source| EvalError::Fit {
                        solver: spec.solver(),
                        source,
                    })
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("fit thread panicked"))
            .collect()
    });

    let truth: Vec<f64> = test.y.iter().copied().collect();
    let mut rows = Vec::with_capacity(specs.len());
    for fit in fits {
        let model = fit?;
        let predictions = model.predict_design(&test);
        rows.push(ComparisonRow {
            solver: model.solver,
            mae: mae(&predictions, &truth)?,
            rmse: rmse(&predictions, &truth)?,
        });
    }
    Ok(Comparison {
        n_train: train.nrows(),
        n_test: test.nrows(),
        rows,
    })
}
