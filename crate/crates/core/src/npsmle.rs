//! Nonparametric simulated maximum likelihood.
//!
//! Each observed transition `x_{t−1} → x_t` is scored by a kernel density
//! over `N` simulated one-bar endpoints started from the observed `x_{t−1}`.
//! The shocks for transition `t` come from stream `t` of a fixed seed, so the
//! summed log density is a deterministic and smooth function of the
//! parameters. Maximization runs a simplex search in unconstrained
//! coordinates.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SsvError};
use crate::kde::{bandwidth, kernel_log_density, BandwidthRule, Points};
use crate::model::{OuParams, SsvParams, TimeGrid};
use crate::optim::{nelder_mead, SimplexSettings};
use crate::shocks::{ShockBlock, ShockStream};
use crate::simulate::{CorrelationScheme, OuStepper, PathTriple, ShockCorrelation, SsvStepper};

/// Observed bar series: one row per bar endpoint with either one channel
/// (sentiment) or three (sentiment, log price, log variance).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSeries {
    pub grid: TimeGrid,
    pub channels: usize,
    /// Row-major, `(n_bars + 1) × channels`.
    pub values: Vec<f64>,
    /// Transitions (identified by their end row) left out of the likelihood,
    /// typically because a bar is missing in between.
    #[serde(default)]
    pub skipped: BTreeSet<usize>,
}

impl ObservationSeries {
    pub fn new(grid: TimeGrid, channels: usize, values: Vec<f64>, skipped: BTreeSet<usize>) -> Result<Self> {
        let s = ObservationSeries {
            grid,
            channels,
            values,
            skipped,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn sentiment(grid: TimeGrid, s: Vec<f64>) -> Result<Self> {
        Self::new(grid, 1, s, BTreeSet::new())
    }

    pub fn joint(grid: TimeGrid, s: &[f64], p: &[f64], v: &[f64]) -> Result<Self> {
        if s.len() != p.len() || s.len() != v.len() {
            return Err(SsvError::Data(format!(
                "channel lengths differ: s {}, p {}, v {}",
                s.len(),
                p.len(),
                v.len()
            )));
        }
        let values = (0..s.len()).flat_map(|i| [s[i], p[i], v[i]]).collect();
        Self::new(grid, 3, values, BTreeSet::new())
    }

    pub fn from_path(path: &PathTriple) -> Result<Self> {
        Self::joint(path.grid, &path.s, &path.p, &path.v)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if self.channels != 1 && self.channels != 3 {
            return Err(SsvError::Data(format!(
                "series must have 1 or 3 channels, got {}",
                self.channels
            )));
        }
        let rows = self.grid.n_bars + 1;
        if self.values.len() != rows * self.channels {
            return Err(SsvError::Data(format!(
                "expected {rows} rows of {} values, got {} values",
                self.channels,
                self.values.len()
            )));
        }
        if let Some(i) = self.values.iter().position(|x| !x.is_finite()) {
            return Err(SsvError::Data(format!("non-finite value in row {}", i / self.channels)));
        }
        if let Some(&t) = self.skipped.iter().find(|&&t| t == 0 || t > self.grid.n_bars) {
            return Err(SsvError::Data(format!(
                "skipped transition {t} outside 1..={}",
                self.grid.n_bars
            )));
        }
        if self.transitions().next().is_none() {
            return Err(SsvError::Data("series has no usable transitions".into()));
        }
        Ok(())
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.channels..(t + 1) * self.channels]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        self.values.iter().skip(c).step_by(self.channels).copied().collect()
    }

    /// End rows of the transitions that enter the likelihood.
    pub fn transitions(&self) -> impl Iterator<Item = usize> + '_ {
        (1..=self.grid.n_bars).filter(move |t| !self.skipped.contains(t))
    }
}

/// Parameter vector being estimated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", content = "params", rename_all = "snake_case")]
pub enum Theta {
    Sentiment(OuParams),
    Joint(SsvParams),
}

impl Theta {
    pub fn channels(&self) -> usize {
        match self {
            Theta::Sentiment(_) => 1,
            Theta::Joint(_) => 3,
        }
    }

    pub fn names(&self) -> &'static [&'static str] {
        match self {
            Theta::Sentiment(_) => &OuParams::NAMES,
            Theta::Joint(_) => &SsvParams::NAMES,
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        match self {
            Theta::Sentiment(p) => p.to_array().to_vec(),
            Theta::Joint(p) => p.to_array().to_vec(),
        }
    }

    /// Builds a parameter set of the same model from natural-scale values.
    pub fn with_values(&self, x: &[f64]) -> Result<Theta> {
        let theta = match self {
            Theta::Sentiment(_) => Theta::Sentiment(OuParams::from_array(
                x.try_into()
                    .map_err(|_| SsvError::Config(format!("expected 3 values, got {}", x.len())))?,
            )),
            Theta::Joint(_) => Theta::Joint(SsvParams::from_array(
                x.try_into()
                    .map_err(|_| SsvError::Config(format!("expected 10 values, got {}", x.len())))?,
            )),
        };
        theta.validate()?;
        Ok(theta)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Theta::Sentiment(p) => p.validate(),
            Theta::Joint(p) => p.validate(),
        }
    }

    pub fn sentiment_params(&self) -> OuParams {
        match self {
            Theta::Sentiment(p) => *p,
            Theta::Joint(p) => p.sentiment(),
        }
    }
}

/// How natural parameters map to optimizer coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamTransform {
    /// Logs of speeds and diffusions, `atanh` of correlations.
    #[default]
    Unconstrained,
    /// Raw values; invalid candidates score `−∞`.
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Coord {
    Log,
    Atanh,
    Id,
}

const OU_COORDS: [Coord; 3] = [Coord::Log, Coord::Id, Coord::Log];
const SSV_COORDS: [Coord; 10] = [
    Coord::Log,
    Coord::Id,
    Coord::Log,
    Coord::Id,
    Coord::Id,
    Coord::Log,
    Coord::Id,
    Coord::Log,
    Coord::Atanh,
    Coord::Atanh,
];

fn coords(theta: &Theta) -> &'static [Coord] {
    match theta {
        Theta::Sentiment(_) => &OU_COORDS,
        Theta::Joint(_) => &SSV_COORDS,
    }
}

impl ParamTransform {
    pub fn forward(&self, theta: &Theta) -> Vec<f64> {
        let x = theta.to_vec();
        match self {
            ParamTransform::Identity => x,
            ParamTransform::Unconstrained => x
                .iter()
                .zip(coords(theta))
                .map(|(&v, c)| match c {
                    Coord::Log => v.ln(),
                    Coord::Atanh => v.atanh(),
                    Coord::Id => v,
                })
                .collect(),
        }
    }

    /// Inverse of [`forward`](Self::forward) for a model of the same kind as
    /// `template`.
    pub fn inverse(&self, template: &Theta, z: &[f64]) -> Result<Theta> {
        match self {
            ParamTransform::Identity => template.with_values(z),
            ParamTransform::Unconstrained => {
                let x: Vec<f64> = z
                    .iter()
                    .zip(coords(template))
                    .map(|(&v, c)| match c {
                        Coord::Log => v.exp(),
                        Coord::Atanh => v.tanh(),
                        Coord::Id => v,
                    })
                    .collect();
                template.with_values(&x)
            }
        }
    }
}

fn default_optimizer() -> SimplexSettings {
    SimplexSettings {
        max_iterations: 3000,
        max_evaluations: 6000,
        x_tol: 1e-3,
        f_tol: 1e-3,
        initial_step: 0.1,
        restarts: 1,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    /// Simulated endpoints per transition.
    pub n_sims: usize,
    pub m_substeps: usize,
    /// `None` uses Silverman for sentiment-only series and Scott for joint
    /// series.
    pub bandwidth_rule: Option<BandwidthRule>,
    pub fixed_h: Option<Vec<f64>>,
    pub seed: u64,
    pub density_floor: f64,
    pub optimizer: SimplexSettings,
    pub bounds_transform: ParamTransform,
    /// Keep the per-transition bandwidths computed at the starting point.
    pub freeze_bandwidth: bool,
    /// Score log-price increments instead of levels.
    pub price_increments: bool,
    pub correlation_scheme: CorrelationScheme,
    /// Shock blocks are kept in memory up to this size, otherwise
    /// regenerated on every evaluation (same values either way).
    pub shock_cache_bytes: usize,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            n_sims: 1000,
            m_substeps: 10,
            bandwidth_rule: None,
            fixed_h: None,
            seed: 1,
            density_floor: 1e-300,
            optimizer: default_optimizer(),
            bounds_transform: ParamTransform::Unconstrained,
            freeze_bandwidth: false,
            price_increments: false,
            correlation_scheme: CorrelationScheme::Cholesky,
            shock_cache_bytes: 512 << 20,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_sims < 2 {
            return Err(SsvError::Config("n_sims must be >= 2".into()));
        }
        if self.m_substeps < 1 {
            return Err(SsvError::Config("m_substeps must be >= 1".into()));
        }
        if !(self.density_floor > 0.0 && self.density_floor.is_finite()) {
            return Err(SsvError::Config("density_floor must be positive and finite".into()));
        }
        if self.bandwidth_rule == Some(BandwidthRule::Fixed) && self.fixed_h.is_none() {
            return Err(SsvError::Config("bandwidth_rule = fixed needs fixed_h".into()));
        }
        Ok(())
    }

    pub fn rule_for(&self, channels: usize) -> BandwidthRule {
        self.bandwidth_rule.unwrap_or(if channels == 1 {
            BandwidthRule::Silverman
        } else {
            BandwidthRule::Scott
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoglikValue {
    pub loglik: f64,
    pub n_floor_hits: usize,
    /// Per-channel bandwidths averaged over transitions.
    pub bandwidths: Vec<f64>,
}

/// Simulated log likelihood of one series under a fixed configuration.
pub struct Likelihood<'a> {
    series: &'a ObservationSeries,
    cfg: &'a EstimatorConfig,
    rule: BandwidthRule,
    stream: ShockStream,
    transitions: Vec<usize>,
    cache: Option<Vec<ShockBlock>>,
    frozen: Option<Vec<Vec<f64>>>,
}

impl<'a> Likelihood<'a> {
    pub fn new(series: &'a ObservationSeries, cfg: &'a EstimatorConfig) -> Result<Self> {
        series.validate()?;
        cfg.validate()?;
        let transitions: Vec<usize> = series.transitions().collect();
        let stream = ShockStream::new(cfg.seed);
        let bytes = transitions.len() * cfg.n_sims * cfg.m_substeps * series.channels * std::mem::size_of::<f64>();
        let cache = (bytes <= cfg.shock_cache_bytes).then(|| {
            transitions
                .par_iter()
                .map(|&t| stream.block(t as u64, cfg.n_sims, cfg.m_substeps, series.channels))
                .collect()
        });
        if cache.is_none() {
            log::info!("shock blocks need {bytes} bytes; regenerating per evaluation");
        }
        Ok(Likelihood {
            series,
            cfg,
            rule: cfg.rule_for(series.channels),
            stream,
            transitions,
            cache,
            frozen: None,
        })
    }

    pub fn uses_cache(&self) -> bool {
        self.cache.is_some()
    }

    pub fn n_transitions(&self) -> usize {
        self.transitions.len()
    }

    /// Fixes the per-transition bandwidths at those implied by `theta`.
    pub fn freeze_bandwidths(&mut self, theta: &Theta) -> Result<()> {
        self.frozen = None;
        let stepper = self.stepper(theta)?;
        let h = self
            .transitions
            .par_iter()
            .enumerate()
            .map(|(k, &t)| {
                let (pts, _) = self.endpoints(&stepper, k, t)?;
                bandwidth(
                    Points::new(&pts, self.series.channels)?,
                    self.rule,
                    self.cfg.fixed_h.as_deref(),
                )
            })
            .collect::<Vec<Result<Vec<f64>>>>()
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        self.frozen = Some(h);
        Ok(())
    }

    fn stepper(&self, theta: &Theta) -> Result<Stepper> {
        theta.validate()?;
        if theta.channels() != self.series.channels {
            return Err(SsvError::Config(format!(
                "{}-channel series cannot be scored with a {}-channel model",
                self.series.channels,
                theta.channels()
            )));
        }
        let delta = self.series.grid.dt / self.cfg.m_substeps as f64;
        Ok(match theta {
            Theta::Sentiment(p) => Stepper::Sentiment(OuStepper::new(p, delta)),
            Theta::Joint(p) => Stepper::Joint(SsvStepper::new(
                p,
                ShockCorrelation::from_params(p, self.cfg.correlation_scheme)?,
                delta,
            )),
        })
    }

    /// Simulated endpoints for transition `t` (position `k`) and the
    /// observation they are compared with.
    fn endpoints(&self, stepper: &Stepper, k: usize, t: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let generated;
        let block = match &self.cache {
            Some(blocks) => &blocks[k],
            None => {
                generated = self
                    .stream
                    .block(t as u64, self.cfg.n_sims, self.cfg.m_substeps, self.series.channels);
                &generated
            }
        };
        let from = self.series.row(t - 1);
        let mut y = self.series.row(t).to_vec();
        let mut pts = Vec::with_capacity(block.n_draws * self.series.channels);
        for i in 0..block.n_draws {
            let w = block.draw(i);
            match stepper {
                Stepper::Sentiment(st) => {
                    let s = w.iter().fold(from[0], |s, &z| st.step(s, z));
                    if !s.is_finite() {
                        return Err(overflow(t, i, block.m_substeps, "s"));
                    }
                    pts.push(s);
                }
                Stepper::Joint(st) => {
                    let mut x = [from[0], from[1], from[2]];
                    for m in 0..block.m_substeps {
                        st.step(&mut x, w[3 * m], w[3 * m + 1], w[3 * m + 2]);
                    }
                    for (value, component) in x.iter().zip(["s", "p", "v"]) {
                        if !value.is_finite() {
                            return Err(overflow(t, i, block.m_substeps, component));
                        }
                    }
                    pts.extend_from_slice(&x);
                }
            }
        }
        if self.cfg.price_increments && self.series.channels == 3 {
            let p0 = from[1];
            for x in pts.chunks_exact_mut(3) {
                x[1] -= p0;
            }
            y[1] -= p0;
        }
        Ok((pts, y))
    }

    pub fn evaluate(&self, theta: &Theta) -> Result<LoglikValue> {
        let stepper = self.stepper(theta)?;
        let d = self.series.channels;
        let per_bar: Vec<Result<(f64, bool, Vec<f64>)>> = self
            .transitions
            .par_iter()
            .enumerate()
            .map(|(k, &t)| {
                let (pts, y) = self.endpoints(&stepper, k, t)?;
                let points = Points::new(&pts, d)?;
                let h = match &self.frozen {
                    Some(h) => h[k].clone(),
                    None => bandwidth(points, self.rule, self.cfg.fixed_h.as_deref())?,
                };
                let ld = kernel_log_density(points, &y, &h, self.cfg.density_floor);
                Ok((ld.value, ld.floored, h))
            })
            .collect();
        // Ordered reduction keeps the sum independent of scheduling.
        let mut loglik = 0.0;
        let mut hits = 0;
        let mut h_sum = vec![0.0; d];
        for r in per_bar {
            let (v, floored, h) = r?;
            loglik += v;
            hits += floored as usize;
            for (a, b) in h_sum.iter_mut().zip(&h) {
                *a += b;
            }
        }
        let n = self.transitions.len() as f64;
        Ok(LoglikValue {
            loglik,
            n_floor_hits: hits,
            bandwidths: h_sum.into_iter().map(|x| x / n).collect(),
        })
    }
}

fn overflow(bar: usize, path: usize, step: usize, component: &'static str) -> SsvError {
    SsvError::BarOverflow {
        bar,
        source: Box::new(SsvError::PathOverflow { path, step, component }),
    }
}

enum Stepper {
    Sentiment(OuStepper),
    Joint(SsvStepper),
}

/// One-shot evaluation of the simulated log likelihood.
pub fn simulated_loglik(series: &ObservationSeries, theta: &Theta, cfg: &EstimatorConfig) -> Result<LoglikValue> {
    Likelihood::new(series, cfg)?.evaluate(theta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub theta: Vec<f64>,
    pub loglik: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    pub theta_hat: Theta,
    pub loglik: f64,
    pub n_floor_hits: usize,
    pub trace: Vec<TraceEntry>,
    pub bandwidths_used: Vec<f64>,
    pub converged: bool,
    pub initial: Theta,
    pub initial_loglik: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub n_transitions: usize,
}

/// Maximizes the simulated likelihood. The model (sentiment-only or joint)
/// follows the series' channel count; `init` defaults to
/// [`moment_initializer`].
///
/// Failing to meet the optimizer tolerances is reported through
/// `converged = false`, not as an error.
pub fn fit(series: &ObservationSeries, cfg: &EstimatorConfig, init: Option<Theta>) -> Result<EstimationResult> {
    let theta0 = match init {
        Some(t) => t,
        None => moment_initializer(series)?,
    };
    theta0.validate()?;
    let mut lik = Likelihood::new(series, cfg)?;
    if cfg.freeze_bandwidth {
        lik.freeze_bandwidths(&theta0)?;
    }
    let transform = cfg.bounds_transform;
    let initial_loglik = lik.evaluate(&theta0).map(|v| v.loglik).unwrap_or(f64::NEG_INFINITY);
    let objective = |z: &[f64]| -> f64 {
        match transform.inverse(&theta0, z).and_then(|th| lik.evaluate(&th)) {
            Ok(v) => -v.loglik,
            Err(e) => {
                log::debug!("candidate rejected: {e}");
                f64::INFINITY
            }
        }
    };
    let z0 = transform.forward(&theta0);
    let min = nelder_mead(objective, &z0, &cfg.optimizer);
    let theta_hat = transform.inverse(&theta0, &min.x)?;
    let at_hat = lik.evaluate(&theta_hat)?;
    let trace = min
        .trace
        .iter()
        .map(|p| TraceEntry {
            iteration: p.iteration,
            theta: transform
                .inverse(&theta0, &p.x)
                .map(|t| t.to_vec())
                .unwrap_or_else(|_| p.x.clone()),
            loglik: -p.f,
        })
        .collect();
    Ok(EstimationResult {
        theta_hat,
        loglik: at_hat.loglik,
        n_floor_hits: at_hat.n_floor_hits,
        trace,
        bandwidths_used: at_hat.bandwidths,
        converged: min.converged,
        initial: theta0,
        initial_loglik,
        iterations: min.iterations,
        evaluations: min.evaluations,
        n_transitions: lik.n_transitions(),
    })
}

struct OuFit {
    params: OuParams,
    rho1: f64,
    mean: f64,
}

/// Mean, variance and lag-1 autocorrelation matching for an OU series.
fn ou_moments(x: &[f64], transitions: &[usize], dt: f64, name: &'static str) -> Result<OuFit> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if !(var > 0.0) {
        return Err(SsvError::DegenerateSample(format!("{name} series is constant")));
    }
    let (mut num, mut den) = (0.0, 0.0);
    for &t in transitions {
        num += (x[t - 1] - mean) * (x[t] - mean);
        den += (x[t - 1] - mean).powi(2);
    }
    let rho1 = if den > 0.0 { num / den } else { 0.0 };
    let rho1 = rho1.clamp(1e-3, 1.0 - 1e-9);
    let lambda = -rho1.ln() / dt;
    let sigma = (2.0 * lambda * var).sqrt();
    Ok(OuFit {
        params: OuParams {
            lambda_s: lambda,
            mu_s: mean,
            sigma_s: sigma,
        },
        rho1,
        mean,
    })
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa > 0.0 && sbb > 0.0 {
        sab / (saa * sbb).sqrt()
    } else {
        0.0
    }
}

/// Starting point from simple moment matching: OU fits of the sentiment
/// and log-variance series (no coupling), the average price drift, and
/// correlations of the one-step residuals.
pub fn moment_initializer(series: &ObservationSeries) -> Result<Theta> {
    series.validate()?;
    let dt = series.grid.dt;
    let transitions: Vec<usize> = series.transitions().collect();
    let s = series.column(0);
    let sent = ou_moments(&s, &transitions, dt, "sentiment")?;
    if series.channels == 1 {
        return Ok(Theta::Sentiment(sent.params));
    }
    let p = series.column(1);
    let v = series.column(2);
    let vol = ou_moments(&v, &transitions, dt, "log variance")?;
    let n = transitions.len() as f64;
    let mu_p = transitions
        .iter()
        .map(|&t| (p[t] - p[t - 1]) / dt + 0.5 * v[t - 1].exp())
        .sum::<f64>()
        / n;
    let resid = |x: &[f64], fit: &OuFit| -> Vec<f64> {
        transitions
            .iter()
            .map(|&t| x[t] - (fit.mean + fit.rho1 * (x[t - 1] - fit.mean)))
            .collect()
    };
    let es = resid(&s, &sent);
    let ev = resid(&v, &vol);
    let ep: Vec<f64> = transitions
        .iter()
        .map(|&t| p[t] - p[t - 1] - (mu_p - 0.5 * v[t - 1].exp()) * dt)
        .collect();
    let theta = SsvParams {
        lambda_s: sent.params.lambda_s,
        mu_s: sent.params.mu_s,
        sigma_s: sent.params.sigma_s,
        mu_p,
        mu_v: vol.params.lambda_s * vol.mean,
        gamma_v: vol.params.lambda_s,
        beta_v: 0.0,
        sigma_v: vol.params.sigma_s,
        rho_pv: correlation(&ep, &ev).clamp(-0.95, 0.95),
        rho_sv: correlation(&es, &ev).clamp(-0.95, 0.95),
    };
    Ok(Theta::Joint(theta))
}
