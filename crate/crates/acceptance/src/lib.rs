//! Reference computations that share no code with the solvers they check,
//! plus generators for random regression problems.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use roadreg_core::{DesignMatrix, EventOverride, Inputs, Timestamp};

/// A random, well-conditioned regression problem.
#[derive(Debug, Clone)]
pub struct Instance {
    pub design: DesignMatrix,
    pub intercept: f64,
    pub beta: Vec<f64>,
}

pub fn random_instance<R: Rng>(rng: &mut R, n: usize, p: usize, noise_sd: f64) -> Instance {
    let unit = Normal::new(0.0, 1.0).unwrap();
    let means: Vec<f64> = (0..p).map(|_| rng.random_range(-5.0..5.0)).collect();
    let scales: Vec<f64> = (0..p).map(|_| rng.random_range(0.5..3.0)).collect();
    let x = DMatrix::from_fn(n, p, |_, j| means[j] + scales[j] * unit.sample(rng));
    let intercept = rng.random_range(-10.0..10.0);
    let beta: Vec<f64> = (0..p).map(|_| rng.random_range(-3.0..3.0)).collect();
    let y = DVector::from_fn(n, |i, _| {
        intercept + (0..p).map(|j| beta[j] * x[(i, j)]).sum::<f64>() + noise_sd * unit.sample(rng)
    });
    let columns = (0..p).map(|j| format!("x{j}")).collect();
    Instance {
        design: DesignMatrix::from_columns(columns, x, y, "y"),
        intercept,
        beta,
    }
}

/// Least squares through the SVD pseudo-inverse of `[1 | X]`.
/// Returns the intercept followed by the slopes.
pub fn pinv_ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Vec<f64> {
    let n = x.nrows();
    let mut a = DMatrix::from_element(n, x.ncols() + 1, 1.0);
    a.view_mut((0, 1), (n, x.ncols())).copy_from(x);
    let pinv = a.pseudo_inverse(1e-12).expect("svd converges");
    (pinv * y).iter().copied().collect()
}

/// Normal–inverse-gamma prior for the one-coefficient quadrature check.
#[derive(Debug, Clone, Copy)]
pub struct ScalarPrior {
    pub tau: f64,
    pub shape: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
}

/// Posterior mean and variance of `β` in `y = βx + ε` by brute-force
/// integration of the unnormalized joint density over a grid in
/// `(β, log σ²)`.
///
/// The grid is centred on the least-squares estimate and spans
/// `±half_width` standard errors in `β`.
pub fn quadrature_moments(
    x: &[f64],
    y: &[f64],
    prior: ScalarPrior,
    grid: usize,
    half_width: f64,
) -> Moments {
    let n = x.len() as f64;
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let b_hat = sxy / sxx;
    let rss_hat: f64 = x.iter().zip(y).map(|(a, b)| (b - b_hat * a).powi(2)).sum();
    let sigma2_hat = (rss_hat / n).max(1e-12);
    let se = (sigma2_hat / sxx).sqrt();

    let (b_lo, b_hi) = (b_hat - half_width * se, b_hat + half_width * se);
    let (s_lo, s_hi) = (sigma2_hat.ln() - 10.0, sigma2_hat.ln() + 20.0);
    let db = (b_hi - b_lo) / grid as f64;
    let ds = (s_hi - s_lo) / grid as f64;

    // log density in (β, s = log σ²), Jacobian e^s included.
    let log_density = |b: f64, s: f64| {
        let rss: f64 = x.iter().zip(y).map(|(a, v)| (v - b * a).powi(2)).sum();
        let inv = (-s).exp();
        -(n / 2.0 + 0.5 + prior.shape + 1.0) * s
            - 0.5 * inv * (rss + prior.tau * b * b)
            - prior.rate * inv
            + s
    };

    let bs: Vec<f64> = (0..grid).map(|i| b_lo + (i as f64 + 0.5) * db).collect();
    let ss: Vec<f64> = (0..grid).map(|k| s_lo + (k as f64 + 0.5) * ds).collect();
    let peak = log_density(b_hat, sigma2_hat.ln());
    let (mut z, mut m1, mut m2) = (0.0, 0.0, 0.0);
    for &b in &bs {
        let w: f64 = ss.iter().map(|&s| (log_density(b, s) - peak).exp()).sum();
        z += w;
        m1 += w * b;
        m2 += w * b * b;
    }
    let mean = m1 / z;
    Moments {
        mean,
        variance: m2 / z - mean * mean,
    }
}

/// Elastic net with a single predictor, in closed form.
/// Returns `(intercept, slope)` in original units.
pub fn single_coordinate_elastic_net(
    x: &[f64],
    y: &[f64],
    lambda: f64,
    alpha_mix: f64,
) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sd = (x.iter().map(|v| (v - mx).powi(2)).sum::<f64>() / n).sqrt();
    let rho = x
        .iter()
        .zip(y)
        .map(|(a, b)| (a - mx) / sd * (b - my))
        .sum::<f64>()
        / n;
    let gamma = lambda * alpha_mix;
    let shrunk = if rho.abs() > gamma {
        rho.signum() * (rho.abs() - gamma)
    } else {
        0.0
    };
    let slope = shrunk / (1.0 + lambda * (1.0 - alpha_mix)) / sd;
    (my - slope * mx, slope)
}

/// Event resolution written as a direct search: for each target keep the
/// active event with the greatest `(start, end, name, value)`.
pub fn resolve_events(
    inputs: &Inputs,
    events: &[EventOverride],
    at: Timestamp,
    gate: impl Fn(&str) -> bool,
) -> Inputs {
    let mut best: BTreeMap<&str, &EventOverride> = BTreeMap::new();
    for e in events {
        let active = e.start <= at && at < e.end && e.gate_feature.as_deref().is_none_or(&gate);
        if !active {
            continue;
        }
        let key = |e: &EventOverride| (e.start, e.end, e.name.clone());
        let replace = match best.get(e.target_feature.as_str()) {
            None => true,
            Some(cur) => match key(e).cmp(&key(cur)) {
                std::cmp::Ordering::Equal => e.value_kmh > cur.value_kmh,
                ord => ord.is_gt(),
            },
        };
        if replace {
            best.insert(e.target_feature.as_str(), e);
        }
    }
    let mut out = inputs.clone();
    for (target, e) in best {
        out.insert(target.to_string(), e.value_kmh);
    }
    out
}
