//! Empirical decay-rate estimation across a ladder of system sizes.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::sim::{default_warmup, estimate_violation, run, SimConfig};
use crate::stats::Z95;

/// Points with fewer violations than this are dropped before fitting.
pub const MIN_COUNT: u64 = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitModel {
    /// `-ln P = a + I n`.
    PureExponential,
    /// `-ln P = a + I n + c ln n`.
    ExponentialWithLogN,
}

impl fmt::Display for FitModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FitModel::PureExponential => "pure-exponential",
            FitModel::ExponentialWithLogN => "exponential-with-log-n",
        })
    }
}

/// One rung of the ladder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatePoint {
    pub n: usize,
    pub p_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub count: u64,
    pub samples: u64,
    /// Delta-method variance of `-ln p_hat`.
    pub var_neg_log: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayFit {
    pub model: FitModel,
    /// Estimated rate `I(b)`.
    pub slope: f64,
    pub slope_se: f64,
    /// 95% interval for the slope.
    pub slope_ci: (f64, f64),
    pub intercept: f64,
    pub log_n_coef: Option<f64>,
    /// Weighted residual sum of squares.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationResult {
    pub b: u32,
    pub points: Vec<RatePoint>,
    /// `(n, reason)` for rungs left out of the fit.
    pub dropped: Vec<(usize, String)>,
    pub fit: Option<DecayFit>,
}

/// Weighted least squares of `y = -ln p` on `n` (and `ln n`).
/// `points` holds `(n, p, variance of -ln p)`.
pub fn fit_decay(points: &[(f64, f64, f64)], model: FitModel) -> Result<DecayFit> {
    let cols = match model {
        FitModel::PureExponential => 2,
        FitModel::ExponentialWithLogN => 3,
    };
    if points.len() < 3 || points.len() < cols {
        return Err(Error::InvalidSimConfig(format!(
            "need at least 3 points to fit, got {}",
            points.len()
        )));
    }
    if points.iter().any(|&(n, p, v)| !(n > 0.0 && p > 0.0 && v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidSimConfig(
            "fit points need positive n, probability and variance".into(),
        ));
    }
    let rows = points.len();
    let x = DMatrix::from_fn(rows, cols, |i, j| match j {
        0 => 1.0,
        1 => points[i].0,
        _ => points[i].0.ln(),
    });
    let y = DVector::from_fn(rows, |i, _| -points[i].1.ln());
    let w = DVector::from_fn(rows, |i, _| 1.0 / points[i].2);
    let xtw = x.transpose() * DMatrix::from_diagonal(&w);
    let normal = &xtw * &x;
    let cov = normal
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidSimConfig("singular fit design".into()))?;
    let beta = &cov * (&xtw * &y);
    let resid = &y - &x * &beta;
    let residual = resid.iter().zip(w.iter()).map(|(r, w)| r * r * w).sum();
    let slope = beta[1];
    let slope_se = cov[(1, 1)].max(0.0).sqrt();
    Ok(DecayFit {
        model,
        slope,
        slope_se,
        slope_ci: (slope - Z95 * slope_se, slope + Z95 * slope_se),
        intercept: beta[0],
        log_n_coef: (cols == 3).then(|| beta[2]),
        residual,
    })
}

/// Simulates every `n` in the ladder with `template` (its `n` and warmup are
/// replaced) and fits the decay of `P(W > b)` in `n`.
pub fn empirical_rate(
    b: u32,
    n_ladder: &[usize],
    template: &SimConfig,
    model: FitModel,
) -> Result<EstimationResult> {
    if n_ladder.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidSimConfig("n ladder must be strictly increasing".into()));
    }
    let mut points = Vec::new();
    let mut dropped = Vec::new();
    for &n in n_ladder {
        let warmup = default_warmup(n, template.b_max);
        let cfg = SimConfig {
            n,
            warmup,
            horizon: warmup + (template.horizon - template.warmup),
            b_max: template.b_max.max(b),
            ..template.clone()
        };
        let e = estimate_violation(&run(&cfg)?, b)?;
        if e.count < MIN_COUNT {
            dropped.push((n, format!("only {} violations (< {MIN_COUNT})", e.count)));
            continue;
        }
        let var_p = e.vif * e.estimate * (1.0 - e.estimate) / e.samples as f64;
        points.push(RatePoint {
            n,
            p_hat: e.estimate,
            ci_lo: e.ci_lo,
            ci_hi: e.ci_hi,
            count: e.count,
            samples: e.samples,
            var_neg_log: var_p / (e.estimate * e.estimate),
        });
    }
    let fit = if points.len() >= 3 {
        let data: Vec<(f64, f64, f64)> = points
            .iter()
            .map(|p| (p.n as f64, p.p_hat, p.var_neg_log.max(f64::MIN_POSITIVE)))
            .collect();
        Some(fit_decay(&data, model)?)
    } else {
        None
    };
    Ok(EstimationResult {
        b,
        points,
        dropped,
        fit,
    })
}
