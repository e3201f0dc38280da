//! Monte Carlo estimates of the reported moments, with standard errors.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SsvError};
use crate::model::{ProcessState, SsvParams, TimeGrid};
use crate::simulate::{simulate_ssv_marginals, CorrelationScheme, SimConfig};

/// A sample estimate and its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

impl Estimate {
    /// Distance from `target` in standard errors.
    pub fn z_score(&self, target: f64) -> f64 {
        if self.se == 0.0 {
            if self.value == target {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (self.value - target).abs() / self.se
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McMoments {
    pub t: f64,
    pub n_paths: usize,
    pub e_s: Estimate,
    pub var_s: Estimate,
    pub e_v: Estimate,
    pub var_v: Estimate,
    pub e_sv: Estimate,
    pub e_v2: Estimate,
    pub cov_sv: Estimate,
    pub rho_sv_t: Estimate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McSettings {
    pub n_paths: usize,
    /// Bar spacing in years; every requested horizon must be a multiple.
    pub dt: f64,
    pub m_substeps: usize,
    pub seed: u64,
    pub scheme: CorrelationScheme,
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn mean_estimate(x: &[f64]) -> Estimate {
    let n = x.len() as f64;
    let m = mean(x);
    let var = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    Estimate {
        value: m,
        se: (var / n).sqrt(),
    }
}

/// Unbiased variance with the large-sample standard error
/// `sqrt((m4 − σ⁴) / n)`.
fn variance_estimate(x: &[f64]) -> Estimate {
    let n = x.len() as f64;
    let m = mean(x);
    let var = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    let m4 = x.iter().map(|v| (v - m).powi(4)).sum::<f64>() / n;
    Estimate {
        value: var,
        se: ((m4 - var * var).max(0.0) / n).sqrt(),
    }
}

pub(crate) fn summarize(t: f64, states: &[ProcessState]) -> Result<McMoments> {
    let n = states.len();
    if n < 2 {
        return Err(SsvError::DegenerateSample(format!("{n} paths cannot give a variance")));
    }
    let s: Vec<f64> = states.iter().map(|x| x.s).collect();
    let v: Vec<f64> = states.iter().map(|x| x.v).collect();
    let (ms, mv) = (mean(&s), mean(&v));
    let prod: Vec<f64> = s.iter().zip(&v).map(|(a, b)| a * b).collect();
    let v2: Vec<f64> = v.iter().map(|x| x * x).collect();
    // Centered products: their mean is the covariance, their spread its error.
    let centered: Vec<f64> = s.iter().zip(&v).map(|(a, b)| (a - ms) * (b - mv)).collect();
    let nf = n as f64;
    let mut cov = mean_estimate(&centered);
    cov.value *= nf / (nf - 1.0);
    let var_s = variance_estimate(&s);
    let var_v = variance_estimate(&v);
    let rho = if var_s.value > 0.0 && var_v.value > 0.0 {
        let r = cov.value / (var_s.value * var_v.value).sqrt();
        Estimate {
            value: r,
            se: (1.0 - r * r) / nf.sqrt(),
        }
    } else {
        Estimate { value: 0.0, se: 0.0 }
    };
    Ok(McMoments {
        t,
        n_paths: n,
        e_s: mean_estimate(&s),
        var_s,
        e_v: mean_estimate(&v),
        var_v,
        e_sv: mean_estimate(&prod),
        e_v2: mean_estimate(&v2),
        cov_sv: cov,
        rho_sv_t: rho,
    })
}

/// Simulates once and summarizes the cross-section at each horizon.
pub fn monte_carlo_moments(
    params: &SsvParams,
    s0: f64,
    v0: f64,
    horizons: &[f64],
    settings: &McSettings,
) -> Result<Vec<McMoments>> {
    if horizons.is_empty() {
        return Ok(Vec::new());
    }
    let mut bars = Vec::with_capacity(horizons.len());
    for &t in horizons {
        let k = (t / settings.dt).round();
        if !(t >= 0.0) || (k * settings.dt - t).abs() > 1e-9 * t.max(1.0) {
            return Err(SsvError::Config(format!(
                "horizon {t} is not a multiple of dt = {}",
                settings.dt
            )));
        }
        bars.push(k as usize);
    }
    let n_bars = bars.iter().copied().max().unwrap_or(0).max(1);
    let cfg = SimConfig {
        grid: TimeGrid::new(0.0, settings.dt, n_bars, settings.m_substeps)?,
        n_paths: settings.n_paths,
        seed: settings.seed,
        initial: ProcessState::new(s0, 0.0, v0, 0.0)?,
        antithetic: false,
    };
    let by_bar = simulate_ssv_marginals(params, &cfg, settings.scheme, &bars)?;
    horizons
        .iter()
        .zip(&by_bar)
        .map(|(&t, states)| summarize(t, states))
        .collect()
}
