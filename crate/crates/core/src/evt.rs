//! Extreme-value tail modelling: shifted two-parameter Weibull fits to the
//! largest values of a sample (`fit_high`), CDF evaluation and an inverse-CDF
//! sampler used as a verification oracle.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Fraction of the tail range by which the shift sits below the smallest tail value.
pub const TAU_OFFSET: f64 = 1e-6;
/// Newton convergence threshold on the shape update.
pub const SHAPE_TOLERANCE: f64 = 1e-8;
pub const MAX_NEWTON_ITERATIONS: usize = 100;

/// Shifted Weibull `F(d) = 1 - exp(-((d - tau) / lambda)^kappa)` for `d > tau`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeibullModel {
    pub tau: f64,
    pub kappa: f64,
    pub lambda: f64,
}

impl WeibullModel {
    pub fn new(tau: f64, kappa: f64, lambda: f64) -> Result<Self> {
        let model = WeibullModel { tau, kappa, lambda };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.tau.is_finite() {
            return Err(Error::Data(format!(
                "weibull shift must be finite, got {}",
                self.tau
            )));
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(Error::Data(format!(
                "weibull shape must be positive, got {}",
                self.kappa
            )));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Data(format!(
                "weibull scale must be positive, got {}",
                self.lambda
            )));
        }
        Ok(())
    }

    pub fn cdf(&self, d: f64) -> f64 {
        weibull_cdf(d, self)
    }

    pub fn survival(&self, d: f64) -> f64 {
        let z = (d - self.tau).max(0.0) / self.lambda;
        (-z.powf(self.kappa)).exp()
    }

    /// Inverse CDF for `q` in `[0, 1)`.
    pub fn quantile(&self, q: f64) -> f64 {
        self.tau + self.lambda * (-(-q).ln_1p()).powf(1.0 / self.kappa)
    }
}

/// Probability that distance `d` is an outlier under `model`; exactly zero
/// at and below the shift.
pub fn weibull_cdf(d: f64, model: &WeibullModel) -> f64 {
    if !(d > model.tau) {
        return 0.0;
    }
    let z = ((d - model.tau) / model.lambda).powf(model.kappa);
    -(-z).exp_m1()
}

/// Fits a shifted Weibull to the `tail_size` largest entries of `values`.
///
/// The shift sits `TAU_OFFSET × range` below the smallest tail value, so every
/// shifted tail point is strictly positive. Shape and scale are the maximum
/// likelihood estimates on the shifted tail.
pub fn fit_high(values: &[f64], tail_size: usize) -> Result<WeibullModel> {
    if tail_size < 2 {
        return Err(Error::Arity(format!(
            "tail size must be at least 2, got {tail_size}"
        )));
    }
    if tail_size > values.len() {
        return Err(Error::Arity(format!(
            "tail size {tail_size} exceeds the {} available values",
            values.len()
        )));
    }
    if let Some(bad) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::Data(format!(
            "fit_high needs finite non-negative values, got {bad}"
        )));
    }

    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let tail = &sorted[sorted.len() - tail_size..];
    let lo = tail[0];
    let hi = tail[tail.len() - 1];
    let range = hi - lo;
    if range <= 0.0 {
        return Err(Error::DegenerateTail(tail_size));
    }
    let tau = lo - TAU_OFFSET * range;
    let shifted: Vec<f64> = tail.iter().map(|v| v - tau).collect();
    let (kappa, lambda) = weibull_mle(&shifted)?;
    WeibullModel::new(tau, kappa, lambda)
}

/// Two-parameter Weibull MLE on strictly positive data.
///
/// Solves the profile equation `1/k + mean(ln x) - Σ x^k ln x / Σ x^k = 0`
/// by Newton iteration; the scale then follows in closed form. Data are
/// divided by their maximum first so `x^k` stays in `(0, 1]`.
pub fn weibull_mle(data: &[f64]) -> Result<(f64, f64)> {
    let n = data.len();
    if n < 2 {
        return Err(Error::Arity(format!(
            "weibull MLE needs at least 2 values, got {n}"
        )));
    }
    let max = data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(data.iter().all(|&x| x > 0.0 && x.is_finite())) {
        return Err(Error::Data(
            "weibull MLE needs strictly positive finite data".into(),
        ));
    }
    let nf = n as f64;
    let ln_y: Vec<f64> = data.iter().map(|&x| (x / max).ln()).collect();
    let mean_ln = ln_y.iter().sum::<f64>() / nf;
    let var_ln = ln_y.iter().map(|l| (l - mean_ln).powi(2)).sum::<f64>() / nf;
    if var_ln <= 0.0 {
        return Err(Error::DegenerateTail(n));
    }

    // Var(ln X) = π² / (6 k²) for a Weibull variable.
    let mut kappa = std::f64::consts::PI / (6.0 * var_ln).sqrt();
    let mut step = f64::INFINITY;
    let mut converged = false;
    for _ in 0..MAX_NEWTON_ITERATIONS {
        let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
        for &l in &ln_y {
            let p = (kappa * l).exp();
            s0 += p;
            s1 += p * l;
            s2 += p * l * l;
        }
        let f = 1.0 / kappa + mean_ln - s1 / s0;
        let df = -1.0 / (kappa * kappa) - (s2 * s0 - s1 * s1) / (s0 * s0);
        let mut next = kappa - f / df;
        if !(next > 0.0) || !next.is_finite() {
            next = kappa / 2.0;
        }
        step = next - kappa;
        kappa = next;
        if step.abs() < SHAPE_TOLERANCE {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Solver {
            iterations: MAX_NEWTON_ITERATIONS,
            last_step: step,
        });
    }
    let mean_pow = ln_y.iter().map(|&l| (kappa * l).exp()).sum::<f64>() / nf;
    let lambda = max * mean_pow.powf(1.0 / kappa);
    Ok((kappa, lambda))
}

/// Maps one uniform draw `u` in `(0, 1]` to `tau + lambda (-ln u)^(1/kappa)`.
pub fn weibull_from_uniform(model: &WeibullModel, u: f64) -> f64 {
    model.tau + model.lambda * (-u.ln()).powf(1.0 / model.kappa)
}

/// Draws `n` Weibull variates by inverse-CDF sampling; deterministic per seed.
pub fn sample_weibull(model: &WeibullModel, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            // random() is in [0, 1); flip it to (0, 1] so ln stays finite.
            let u = 1.0 - rng.random::<f64>();
            weibull_from_uniform(model, u)
        })
        .collect()
}
