//! Euler simulation of the sentiment process and the joint system.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SsvError};
use crate::model::{drift_s, drift_v, price_coefficients, OuParams, ProcessState, SsvParams, TimeGrid};
use crate::shocks::{ShockBlock, ShockStream};

/// How the three independent normals `(W_p, W_v, W_s)` drawn per substep are
/// mixed into the correlated drivers of price, log variance and sentiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationScheme {
    /// `z_s = W_s`, `z_v = ρ_sv W_s + √(1−ρ_sv²) W_v`,
    /// `z_p = ρ_pv z_v + √(1−ρ_pv²) W_p`. Unit variances, exact correlations.
    #[default]
    Cholesky,
    /// `z_s = W_s`, `z_v = √(1−ρ_sv) W_s + ρ_sv W_v`,
    /// `z_p = √(1−ρ_pv) W_p + ρ_pv W_v`. Kept for comparison runs; the
    /// mixed drivers have variance `1 − ρ + ρ²`, not one.
    Unnormalized,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShockCorrelation {
    pub rho_pv: f64,
    pub rho_sv: f64,
    pub scheme: CorrelationScheme,
    // z_v = vs·W_s + vv·W_v ; z_p = pp·W_p + pv·W_v + ps·W_s
    vs: f64,
    vv: f64,
    pp: f64,
    pv: f64,
    ps: f64,
}

impl ShockCorrelation {
    pub fn new(rho_pv: f64, rho_sv: f64, scheme: CorrelationScheme) -> Result<Self> {
        if !(rho_pv.abs() < 1.0) {
            return Err(SsvError::param("rho_pv", "must lie in (-1, 1)"));
        }
        if !(rho_sv.abs() < 1.0) {
            return Err(SsvError::param("rho_sv", "must lie in (-1, 1)"));
        }
        let (vs, vv, pp, pv, ps) = match scheme {
            CorrelationScheme::Cholesky => {
                let c_sv = (1.0 - rho_sv * rho_sv).sqrt();
                let c_pv = (1.0 - rho_pv * rho_pv).sqrt();
                (rho_sv, c_sv, c_pv, rho_pv * c_sv, rho_pv * rho_sv)
            }
            CorrelationScheme::Unnormalized => ((1.0 - rho_sv).sqrt(), rho_sv, (1.0 - rho_pv).sqrt(), rho_pv, 0.0),
        };
        Ok(ShockCorrelation {
            rho_pv,
            rho_sv,
            scheme,
            vs,
            vv,
            pp,
            pv,
            ps,
        })
    }

    pub fn from_params(params: &SsvParams, scheme: CorrelationScheme) -> Result<Self> {
        Self::new(params.rho_pv, params.rho_sv, scheme)
    }

    /// Mixes independent `(W_p, W_v, W_s)` into `(z_s, z_p, z_v)`.
    #[inline]
    pub fn combine(&self, wp: f64, wv: f64, ws: f64) -> (f64, f64, f64) {
        let zv = self.vs * ws + self.vv * wv;
        let zp = self.pp * wp + self.pv * wv + self.ps * ws;
        (ws, zp, zv)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub grid: TimeGrid,
    pub n_paths: usize,
    pub seed: u64,
    pub initial: ProcessState,
    #[serde(default)]
    pub antithetic: bool,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.initial.validate()?;
        if self.n_paths < 1 {
            return Err(SsvError::Config("n_paths must be >= 1".into()));
        }
        Ok(())
    }

    /// Stream index and shock sign for a path.
    fn stream_for(&self, path: usize) -> (u64, f64) {
        if self.antithetic {
            let sign = if path.is_multiple_of(2) { 1.0 } else { -1.0 };
            ((path / 2) as u64, sign)
        } else {
            (path as u64, 1.0)
        }
    }
}

/// One trajectory of `(S, P, V)` at the `n_bars + 1` bar endpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathTriple {
    pub grid: TimeGrid,
    pub s: Vec<f64>,
    pub p: Vec<f64>,
    pub v: Vec<f64>,
}

impl PathTriple {
    pub fn validate(&self) -> Result<()> {
        let n = self.grid.n_bars + 1;
        if self.s.len() != n || self.p.len() != n || self.v.len() != n {
            return Err(SsvError::Data(format!(
                "path series lengths ({}, {}, {}) differ from n_bars + 1 = {n}",
                self.s.len(),
                self.p.len(),
                self.v.len()
            )));
        }
        let finite = |x: &[f64]| x.iter().all(|v| v.is_finite());
        if !(finite(&self.s) && finite(&self.p) && finite(&self.v)) {
            return Err(SsvError::Data("path contains non-finite values".into()));
        }
        Ok(())
    }

    pub fn state(&self, bar: usize) -> ProcessState {
        ProcessState {
            s: self.s[bar],
            p: self.p[bar],
            v: self.v[bar],
            t: self.grid.time_of(bar),
        }
    }
}

/// Euler step of the sentiment process.
#[derive(Debug, Clone, Copy)]
pub(crate) struct OuStepper {
    lambda_s: f64,
    mu_s: f64,
    delta: f64,
    noise: f64,
}

impl OuStepper {
    pub(crate) fn new(params: &OuParams, delta: f64) -> Self {
        OuStepper {
            lambda_s: params.lambda_s,
            mu_s: params.mu_s,
            delta,
            noise: params.sigma_s * delta.sqrt(),
        }
    }

    #[inline]
    pub(crate) fn step(&self, s: f64, z: f64) -> f64 {
        s + drift_s(self.lambda_s, self.mu_s, s) * self.delta + self.noise * z
    }
}

/// Euler step of the joint system; the state is `[s, p, v]` and the shocks
/// are the raw `(W_p, W_v, W_s)`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct SsvStepper {
    params: SsvParams,
    corr: ShockCorrelation,
    delta: f64,
    sqrt_delta: f64,
}

impl SsvStepper {
    pub(crate) fn new(params: &SsvParams, corr: ShockCorrelation, delta: f64) -> Self {
        SsvStepper {
            params: *params,
            corr,
            delta,
            sqrt_delta: delta.sqrt(),
        }
    }

    #[inline]
    pub(crate) fn step(&self, x: &mut [f64; 3], wp: f64, wv: f64, ws: f64) {
        let p = &self.params;
        let [s, lp, v] = *x;
        let (zs, zp, zv) = self.corr.combine(wp, wv, ws);
        let half_vol = (0.5 * v).exp();
        let (dp, gp) = price_coefficients(p.mu_p, half_vol);
        x[0] = s + drift_s(p.lambda_s, p.mu_s, s) * self.delta + p.sigma_s * self.sqrt_delta * zs;
        x[1] = lp + dp * self.delta + gp * self.sqrt_delta * zp;
        x[2] = v + drift_v(p, s, v) * self.delta + p.sigma_v * self.sqrt_delta * zv;
    }
}

fn first_error<T>(results: Vec<Result<T>>) -> Result<Vec<T>> {
    results.into_iter().collect()
}

/// Simulates `n_paths` sentiment series; each holds the `n_bars + 1` bar
/// endpoints starting from `cfg.initial.s`.
pub fn simulate_ou(params: &OuParams, cfg: &SimConfig) -> Result<Vec<Vec<f64>>> {
    params.validate()?;
    cfg.validate()?;
    let grid = cfg.grid;
    let stepper = OuStepper::new(params, grid.substep());
    let stream = ShockStream::new(cfg.seed);
    let results: Vec<Result<Vec<f64>>> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|path| {
            let (index, sign) = cfg.stream_for(path);
            let mut rng = stream.rng(index);
            let mut s = cfg.initial.s;
            let mut out = Vec::with_capacity(grid.n_bars + 1);
            out.push(s);
            for bar in 0..grid.n_bars {
                for _ in 0..grid.m_substeps {
                    let z: f64 = rng.sample(StandardNormal);
                    s = stepper.step(s, sign * z);
                }
                if !s.is_finite() {
                    return Err(SsvError::PathOverflow {
                        path,
                        step: (bar + 1) * grid.m_substeps,
                        component: "s",
                    });
                }
                out.push(s);
            }
            Ok(out)
        })
        .collect();
    first_error(results)
}

fn run_ssv_path(
    stepper: &SsvStepper,
    cfg: &SimConfig,
    stream: &ShockStream,
    path: usize,
    mut visit: impl FnMut(usize, &[f64; 3]),
) -> Result<()> {
    let grid = cfg.grid;
    let (index, sign) = cfg.stream_for(path);
    let mut rng = stream.rng(index);
    let mut x = [cfg.initial.s, cfg.initial.p, cfg.initial.v];
    visit(0, &x);
    for bar in 0..grid.n_bars {
        for _ in 0..grid.m_substeps {
            let wp: f64 = rng.sample(StandardNormal);
            let wv: f64 = rng.sample(StandardNormal);
            let ws: f64 = rng.sample(StandardNormal);
            stepper.step(&mut x, sign * wp, sign * wv, sign * ws);
        }
        for (value, component) in x.iter().zip(["s", "p", "v"]) {
            if !value.is_finite() {
                return Err(SsvError::PathOverflow {
                    path,
                    step: (bar + 1) * grid.m_substeps,
                    component,
                });
            }
        }
        visit(bar + 1, &x);
    }
    Ok(())
}

/// Simulates `n_paths` trajectories of the joint system.
pub fn simulate_ssv(params: &SsvParams, cfg: &SimConfig, scheme: CorrelationScheme) -> Result<Vec<PathTriple>> {
    params.validate()?;
    cfg.validate()?;
    let corr = ShockCorrelation::from_params(params, scheme)?;
    let stepper = SsvStepper::new(params, corr, cfg.grid.substep());
    let stream = ShockStream::new(cfg.seed);
    let n = cfg.grid.n_bars + 1;
    let results: Vec<Result<PathTriple>> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|path| {
            let mut triple = PathTriple {
                grid: cfg.grid,
                s: Vec::with_capacity(n),
                p: Vec::with_capacity(n),
                v: Vec::with_capacity(n),
            };
            run_ssv_path(&stepper, cfg, &stream, path, |_, x| {
                triple.s.push(x[0]);
                triple.p.push(x[1]);
                triple.v.push(x[2]);
            })?;
            Ok(triple)
        })
        .collect();
    first_error(results)
}

/// Cross-sectional states at selected bars, without retaining whole paths.
///
/// Returns one vector per entry of `bars`, each holding `n_paths` states in
/// path order. Produces exactly the values `simulate_ssv` would at those bars.
pub fn simulate_ssv_marginals(
    params: &SsvParams,
    cfg: &SimConfig,
    scheme: CorrelationScheme,
    bars: &[usize],
) -> Result<Vec<Vec<ProcessState>>> {
    params.validate()?;
    cfg.validate()?;
    if let Some(&b) = bars.iter().find(|&&b| b > cfg.grid.n_bars) {
        return Err(SsvError::Config(format!(
            "requested bar {b} beyond n_bars = {}",
            cfg.grid.n_bars
        )));
    }
    let corr = ShockCorrelation::from_params(params, scheme)?;
    let stepper = SsvStepper::new(params, corr, cfg.grid.substep());
    let stream = ShockStream::new(cfg.seed);
    let grid = cfg.grid;
    let per_path: Vec<Result<Vec<ProcessState>>> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|path| {
            let mut out = vec![
                ProcessState {
                    s: 0.0,
                    p: 0.0,
                    v: 0.0,
                    t: 0.0
                };
                bars.len()
            ];
            run_ssv_path(&stepper, cfg, &stream, path, |bar, x| {
                for (slot, &b) in out.iter_mut().zip(bars) {
                    if b == bar {
                        *slot = ProcessState {
                            s: x[0],
                            p: x[1],
                            v: x[2],
                            t: grid.time_of(bar),
                        };
                    }
                }
            })?;
            Ok(out)
        })
        .collect();
    let per_path = first_error(per_path)?;
    let mut by_bar = vec![Vec::with_capacity(cfg.n_paths); bars.len()];
    for states in per_path {
        for (k, st) in states.into_iter().enumerate() {
            by_bar[k].push(st);
        }
    }
    Ok(by_bar)
}

/// One-bar-ahead endpoints of the joint system from `from`, driven by a
/// caller-owned shock block (three channels, order `W_p, W_v, W_s`).
///
/// The block is the common-random-number source: for a fixed block the
/// endpoints are deterministic, smooth functions of `params`.
pub fn transition_endpoints(
    params: &SsvParams,
    from: &ProcessState,
    dt: f64,
    scheme: CorrelationScheme,
    shocks: &ShockBlock,
) -> Result<Vec<ProcessState>> {
    params.validate()?;
    from.validate()?;
    if shocks.channels != 3 {
        return Err(SsvError::Config(format!(
            "joint transitions need 3 shock channels, got {}",
            shocks.channels
        )));
    }
    if !(dt > 0.0) || shocks.m_substeps == 0 {
        return Err(SsvError::Config("dt and m_substeps must be positive".into()));
    }
    let corr = ShockCorrelation::from_params(params, scheme)?;
    let stepper = SsvStepper::new(params, corr, dt / shocks.m_substeps as f64);
    (0..shocks.n_draws)
        .map(|i| {
            let w = shocks.draw(i);
            let mut x = [from.s, from.p, from.v];
            for m in 0..shocks.m_substeps {
                stepper.step(&mut x, w[3 * m], w[3 * m + 1], w[3 * m + 2]);
            }
            for (value, component) in x.iter().zip(["s", "p", "v"]) {
                if !value.is_finite() {
                    return Err(SsvError::PathOverflow {
                        path: i,
                        step: shocks.m_substeps,
                        component,
                    });
                }
            }
            Ok(ProcessState {
                s: x[0],
                p: x[1],
                v: x[2],
                t: from.t + dt,
            })
        })
        .collect()
}

/// One-bar-ahead endpoints of the sentiment process (single-channel block).
pub fn ou_transition_endpoints(params: &OuParams, from_s: f64, dt: f64, shocks: &ShockBlock) -> Result<Vec<f64>> {
    params.validate()?;
    if shocks.channels != 1 {
        return Err(SsvError::Config(format!(
            "sentiment transitions need 1 shock channel, got {}",
            shocks.channels
        )));
    }
    let stepper = OuStepper::new(params, dt / shocks.m_substeps as f64);
    Ok((0..shocks.n_draws)
        .map(|i| shocks.draw(i).iter().fold(from_s, |s, &z| stepper.step(s, z)))
        .collect())
}

/// Writes one path as CSV with header `t,s,p,v`.
pub fn write_path_csv<W: Write>(path: &PathTriple, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "s", "p", "v"])?;
    for bar in 0..path.s.len() {
        let t = path.grid.time_of(bar);
        w.write_record([t, path.s[bar], path.p[bar], path.v[bar]].map(|x| x.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes many paths in long format with header `path_id,t,s,p,v`.
pub fn write_paths_long_csv<W: Write>(paths: &[PathTriple], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["path_id", "t", "s", "p", "v"])?;
    for (id, path) in paths.iter().enumerate() {
        for bar in 0..path.s.len() {
            let t = path.grid.time_of(bar);
            w.write_record([
                id.to_string(),
                t.to_string(),
                path.s[bar].to_string(),
                path.p[bar].to_string(),
                path.v[bar].to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
