//! Quadratic speed-profile fit and ordinary / non-ordinary classification.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trajectory::Trajectory;

pub const MIN_FIT_SAMPLES: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("{0} samples, at least {1} needed")]
    TooFewSamples(usize, usize),
    #[error("fewer than three distinct sample times")]
    RankDeficient,
    #[error("non-finite sample")]
    NonFinite,
    #[error("empty value list")]
    Empty,
    #[error("percentile {0} outside (0, 1)")]
    InvalidPercentile(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticFit {
    /// `[β1, β2, β3]` of `v = β3 τ² + β2 τ + β1` with `τ` measured from the
    /// window start.
    pub beta: [f64; 3],
    pub residual_std: f64,
    pub n_samples: usize,
    pub window: (f64, f64),
}

impl QuadraticFit {
    pub fn predict(&self, t: f64) -> f64 {
        let tau = t - self.window.0;
        self.beta[0] + tau * (self.beta[1] + tau * self.beta[2])
    }
}

struct Basis {
    alpha1: f64,
    alpha2: f64,
    b1: f64,
    q1: Vec<f64>,
    q2: Vec<f64>,
    n1: f64,
    n2: f64,
}

impl Basis {
    fn new(tau: &[f64]) -> Result<Basis, FitError> {
        let n = tau.len() as f64;
        let alpha1 = tau.iter().sum::<f64>() / n;
        let q1: Vec<f64> = tau.iter().map(|t| t - alpha1).collect();
        let n1: f64 = q1.iter().map(|q| q * q).sum();
        let scale = tau.iter().fold(0.0f64, |m, t| m.max(t.abs())).max(1e-300);
        if n1 <= 1e-24 * n * scale * scale {
            return Err(FitError::RankDeficient);
        }
        let alpha2 = tau.iter().zip(&q1).map(|(t, q)| t * q * q).sum::<f64>() / n1;
        let b1 = n1 / n;
        let q2: Vec<f64> = tau.iter().zip(&q1).map(|(t, q)| (t - alpha2) * q - b1).collect();
        let n2: f64 = q2.iter().map(|q| q * q).sum();
        if n2 <= 1e-24 * n * scale.powi(4) {
            return Err(FitError::RankDeficient);
        }
        Ok(Basis {
            alpha1,
            alpha2,
            b1,
            q1,
            q2,
            n1,
            n2,
        })
    }

    fn project(&self, y: &[f64]) -> [f64; 3] {
        let n = y.len() as f64;
        let c0 = y.iter().sum::<f64>() / n;
        let c1 = y.iter().zip(&self.q1).map(|(v, q)| v * q).sum::<f64>() / self.n1;
        let c2 = y.iter().zip(&self.q2).map(|(v, q)| v * q).sum::<f64>() / self.n2;
        [c0, c1, c2]
    }

    fn eval(&self, c: &[f64; 3], i: usize) -> f64 {
        c[0] + c[1] * self.q1[i] + c[2] * self.q2[i]
    }

    fn monomial(&self, c: &[f64; 3]) -> [f64; 3] {
        let b3 = c[2];
        let b2 = c[1] - c[2] * (self.alpha1 + self.alpha2);
        let b1 = c[0] - c[1] * self.alpha1 + c[2] * (self.alpha1 * self.alpha2 - self.b1);
        [b1, b2, b3]
    }
}

fn count_distinct(sorted_or_not: &[f64]) -> usize {
    let mut t = sorted_or_not.to_vec();
    t.sort_by(f64::total_cmp);
    t.dedup();
    t.len()
}

/// Least-squares fit of a quadratic to `(t, v)` samples.
pub fn fit_quadratic(samples: &[(f64, f64)]) -> Result<QuadraticFit, FitError> {
    fit_quadratic_min(samples, MIN_FIT_SAMPLES)
}

pub fn fit_quadratic_min(samples: &[(f64, f64)], min_samples: usize) -> Result<QuadraticFit, FitError> {
    let min_samples = min_samples.max(3);
    if samples.len() < min_samples {
        return Err(FitError::TooFewSamples(samples.len(), min_samples));
    }
    if samples.iter().any(|(t, v)| !t.is_finite() || !v.is_finite()) {
        return Err(FitError::NonFinite);
    }
    let t0 = samples.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    let t1 = samples.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
    let tau: Vec<f64> = samples.iter().map(|s| s.0 - t0).collect();
    if count_distinct(&tau) < 3 {
        return Err(FitError::RankDeficient);
    }
    let v: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let basis = Basis::new(&tau)?;
    let mut c = basis.project(&v);
    // One refinement pass on the residual.
    let r: Vec<f64> = (0..v.len()).map(|i| v[i] - basis.eval(&c, i)).collect();
    let dc = basis.project(&r);
    for k in 0..3 {
        c[k] += dc[k];
    }
    let n = v.len() as f64;
    let e: Vec<f64> = (0..v.len()).map(|i| v[i] - basis.eval(&c, i)).collect();
    let mean = e.iter().sum::<f64>() / n;
    let var = e.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    Ok(QuadraticFit {
        beta: basis.monomial(&c),
        residual_std: var.max(0.0).sqrt(),
        n_samples: v.len(),
        window: (t0, t1),
    })
}

/// Speed samples of `ped` inside `window`.
pub fn speed_samples(ped: &Trajectory, window: (f64, f64)) -> Vec<(f64, f64)> {
    let range = ped.index_range(window.0, window.1);
    range.map(|i| (ped.times[i], ped.speed[i])).collect()
}

/// Linear-interpolation percentile with inclusive ranks.
pub fn dataset_threshold(residual_stds: &[f64], percentile: f64) -> Result<f64, FitError> {
    if residual_stds.is_empty() {
        return Err(FitError::Empty);
    }
    if !(percentile > 0.0 && percentile < 1.0) {
        return Err(FitError::InvalidPercentile(percentile));
    }
    if residual_stds.iter().any(|v| !v.is_finite()) {
        return Err(FitError::NonFinite);
    }
    let mut v = residual_stds.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = percentile * (v.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    let f = rank - lo as f64;
    Ok(v[lo] + (v[hi] - v[lo]) * f)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionLabel {
    Ordinary,
    NonOrdinary,
}

impl MotionLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            MotionLabel::Ordinary => "ordinary",
            MotionLabel::NonOrdinary => "non_ordinary",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionClass {
    pub label: MotionLabel,
    pub threshold_used: f64,
}

pub fn classify_std(residual_std: f64, threshold: f64) -> MotionClass {
    let label = if residual_std > threshold {
        MotionLabel::NonOrdinary
    } else {
        MotionLabel::Ordinary
    };
    MotionClass {
        label,
        threshold_used: threshold,
    }
}

pub fn classify(fit: &QuadraticFit, threshold: f64) -> MotionClass {
    classify_std(fit.residual_std, threshold)
}
