//! Parametric bootstrap of the simulated maximum likelihood estimator.
//!
//! Replication `r` draws its data from seed `child_seed(2r)` and its
//! estimation shocks from `child_seed(2r + 1)` of the master stream, so a
//! replication's outcome does not depend on which others ran or in what
//! order.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SsvError};
use crate::model::{ProcessState, TimeGrid};
use crate::npsmle::{fit, EstimatorConfig, ObservationSeries, Theta};
use crate::shocks::ShockStream;
use crate::simulate::{simulate_ou, simulate_ssv, SimConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapConfig {
    pub n_reps: usize,
    pub master_seed: u64,
    /// Starting state of every simulated series.
    pub initial: ProcessState,
    /// Euler substeps used to generate the synthetic data.
    pub data_substeps: usize,
    pub estimator: EstimatorConfig,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            n_reps: 100,
            master_seed: 1,
            initial: ProcessState {
                s: 0.0,
                p: 0.0,
                v: 0.0,
                t: 0.0,
            },
            data_substeps: 10,
            estimator: EstimatorConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepOutcome {
    pub rep: usize,
    pub data_seed: u64,
    pub converged: bool,
    pub theta: Option<Vec<f64>>,
    pub loglik: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub point: f64,
    pub mean: f64,
    pub median: f64,
    pub std: f64,
    /// `|mean| > 2 · std`.
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub n_reps: usize,
    pub n_failed: usize,
    pub seed: u64,
    /// Over converged replications.
    pub params: Vec<ParamSummary>,
    /// Over every replication that produced an estimate, converged or not.
    pub all_estimates: Vec<ParamSummary>,
    pub reps: Vec<RepOutcome>,
}

/// Seeds for replication `rep`: `(data, estimation)`.
pub fn rep_seeds(master_seed: u64, rep: usize) -> (u64, u64) {
    let s = ShockStream::new(master_seed);
    (s.child_seed(2 * rep as u64), s.child_seed(2 * rep as u64 + 1))
}

/// Simulates one synthetic series at `theta` on `grid`.
pub fn simulate_series(
    theta: &Theta,
    grid: &TimeGrid,
    initial: &ProcessState,
    substeps: usize,
    seed: u64,
    scheme: crate::simulate::CorrelationScheme,
) -> Result<ObservationSeries> {
    let sim_grid = TimeGrid {
        m_substeps: substeps,
        ..*grid
    };
    let cfg = SimConfig {
        grid: sim_grid,
        n_paths: 1,
        seed,
        initial: *initial,
        antithetic: false,
    };
    match theta {
        Theta::Sentiment(p) => {
            let s = simulate_ou(p, &cfg)?.remove(0);
            ObservationSeries::sentiment(*grid, s)
        }
        Theta::Joint(p) => {
            let path = simulate_ssv(p, &cfg, scheme)?.remove(0);
            ObservationSeries::joint(*grid, &path.s, &path.p, &path.v)
        }
    }
}

fn run_rep(theta_hat: &Theta, grid: &TimeGrid, cfg: &BootstrapConfig, rep: usize) -> RepOutcome {
    let (data_seed, est_seed) = rep_seeds(cfg.master_seed, rep);
    let est = EstimatorConfig {
        seed: est_seed,
        ..cfg.estimator.clone()
    };
    let outcome = simulate_series(
        theta_hat,
        grid,
        &cfg.initial,
        cfg.data_substeps,
        data_seed,
        est.correlation_scheme,
    )
    .and_then(|series| fit(&series, &est, None));
    match outcome {
        Ok(res) => RepOutcome {
            rep,
            data_seed,
            converged: res.converged,
            theta: Some(res.theta_hat.to_vec()),
            loglik: Some(res.loglik),
            error: None,
        },
        Err(e) => RepOutcome {
            rep,
            data_seed,
            converged: false,
            theta: None,
            loglik: None,
            error: Some(e.to_string()),
        },
    }
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

fn summarize(names: &[&str], point: &[f64], rows: &[&Vec<f64>]) -> Vec<ParamSummary> {
    names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let mut x: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            let n = x.len() as f64;
            let mean = x.iter().sum::<f64>() / n;
            let std = if x.len() > 1 {
                (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            x.sort_by(f64::total_cmp);
            ParamSummary {
                name: name.to_string(),
                point: point[j],
                mean,
                median: median(&x),
                std,
                significant: mean.abs() > 2.0 * std,
            }
        })
        .collect()
}

/// Simulates `cfg.n_reps` series at `theta_hat`, re-estimates each and
/// summarizes the estimates. Non-converged replications are excluded from
/// [`BootstrapSummary::params`] and counted in `n_failed`.
pub fn bootstrap(theta_hat: &Theta, grid: &TimeGrid, cfg: &BootstrapConfig) -> Result<BootstrapSummary> {
    theta_hat.validate()?;
    grid.validate()?;
    cfg.estimator.validate()?;
    if cfg.n_reps < 1 {
        return Err(SsvError::Config("n_reps must be >= 1".into()));
    }
    let reps: Vec<RepOutcome> = (0..cfg.n_reps)
        .into_par_iter()
        .map(|r| run_rep(theta_hat, grid, cfg, r))
        .collect();
    for r in reps.iter().filter(|r| r.error.is_some()) {
        log::warn!(
            "replication {} failed: {}",
            r.rep,
            r.error.as_deref().unwrap_or_default()
        );
    }
    let converged: Vec<&Vec<f64>> = reps
        .iter()
        .filter(|r| r.converged)
        .filter_map(|r| r.theta.as_ref())
        .collect();
    if converged.is_empty() {
        return Err(SsvError::AllReplicationsFailed(cfg.n_reps));
    }
    let any: Vec<&Vec<f64>> = reps.iter().filter_map(|r| r.theta.as_ref()).collect();
    let names = theta_hat.names();
    let point = theta_hat.to_vec();
    Ok(BootstrapSummary {
        n_reps: cfg.n_reps,
        n_failed: cfg.n_reps - converged.len(),
        seed: cfg.master_seed,
        params: summarize(names, &point, &converged),
        all_estimates: summarize(names, &point, &any),
        reps,
    })
}

/// Writes the summary as a table with one column per parameter and rows
/// `point estimate`, `mean`, `median`, `std`.
pub fn write_summary_table<W: Write>(summary: &BootstrapSummary, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["row".to_string()];
    header.extend(summary.params.iter().map(|p| p.name.clone()));
    w.write_record(&header)?;
    let rows: [(&str, fn(&ParamSummary) -> f64); 4] = [
        ("point estimate", |p| p.point),
        ("mean", |p| p.mean),
        ("median", |p| p.median),
        ("std", |p| p.std),
    ];
    for (label, get) in rows {
        let mut rec = vec![label.to_string()];
        rec.extend(summary.params.iter().map(|p| get(p).to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
