//! Parameters, state and coefficient functions of the coupled
//! sentiment / log-price / log-variance system
//!
//! ```text
//! dS = λ_s (μ_s − S) dt + σ_s dW_s
//! dP = (μ_p − exp(V)/2) dt + exp(V/2) dW_p
//! dV = (μ_v + β_v (S − μ_s)² − γ_v V) dt + σ_v dW_v
//! ```
//!
//! with `corr(dW_p, dW_v) = ρ_pv` and `corr(dW_s, dW_v) = ρ_sv`. `V` is the
//! log of the instantaneous variance; all rates are annualized.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SsvError};

/// Trading bars per session (09:30–16:00 in 15-minute steps).
pub const BARS_PER_DAY: usize = 26;
/// Trading days per year used for bar-to-year conversion.
pub const TRADING_DAYS_PER_YEAR: usize = 250;

/// Bar spacing in years when one year is `250 × 26` bars.
pub fn dt_intraday_years() -> f64 {
    1.0 / (TRADING_DAYS_PER_YEAR * BARS_PER_DAY) as f64
}

/// Bar spacing used for the joint model, where one unit of time is a day.
pub fn dt_joint_days() -> f64 {
    1.0 / BARS_PER_DAY as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSsvParams {
    lambda_s: f64,
    mu_s: f64,
    sigma_s: f64,
    mu_p: f64,
    mu_v: f64,
    gamma_v: f64,
    beta_v: f64,
    sigma_v: f64,
    rho_pv: f64,
    rho_sv: f64,
}

/// The ten parameters of the joint model.
///
/// Serializes to a flat JSON object with exactly these field names; unknown
/// keys and invalid values are rejected on deserialization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSsvParams", into = "RawSsvParams")]
pub struct SsvParams {
    pub lambda_s: f64,
    pub mu_s: f64,
    pub sigma_s: f64,
    pub mu_p: f64,
    pub mu_v: f64,
    pub gamma_v: f64,
    pub beta_v: f64,
    pub sigma_v: f64,
    pub rho_pv: f64,
    pub rho_sv: f64,
}

impl TryFrom<RawSsvParams> for SsvParams {
    type Error = SsvError;

    fn try_from(r: RawSsvParams) -> Result<Self> {
        let p = SsvParams {
            lambda_s: r.lambda_s,
            mu_s: r.mu_s,
            sigma_s: r.sigma_s,
            mu_p: r.mu_p,
            mu_v: r.mu_v,
            gamma_v: r.gamma_v,
            beta_v: r.beta_v,
            sigma_v: r.sigma_v,
            rho_pv: r.rho_pv,
            rho_sv: r.rho_sv,
        };
        p.validate()?;
        Ok(p)
    }
}

impl From<SsvParams> for RawSsvParams {
    fn from(p: SsvParams) -> Self {
        RawSsvParams {
            lambda_s: p.lambda_s,
            mu_s: p.mu_s,
            sigma_s: p.sigma_s,
            mu_p: p.mu_p,
            mu_v: p.mu_v,
            gamma_v: p.gamma_v,
            beta_v: p.beta_v,
            sigma_v: p.sigma_v,
            rho_pv: p.rho_pv,
            rho_sv: p.rho_sv,
        }
    }
}

impl SsvParams {
    pub const NAMES: [&'static str; 10] = [
        "lambda_s", "mu_s", "sigma_s", "mu_p", "mu_v", "gamma_v", "beta_v", "sigma_v", "rho_pv", "rho_sv",
    ];

    /// Point estimates on 15-minute S&P 500 futures, VIX futures and news
    /// sentiment for 2015, in the joint-model time unit (`dt = 1/26`).
    pub fn sp500_2015() -> Self {
        SsvParams {
            lambda_s: 37.76,
            mu_s: 0.203,
            sigma_s: 0.916,
            mu_p: 0.0388,
            mu_v: -0.148,
            gamma_v: 0.049,
            beta_v: 1.86,
            sigma_v: 0.379,
            rho_pv: -0.89,
            rho_sv: -0.025,
        }
    }

    /// Validates the parameter invariants.
    ///
    /// Diffusion coefficients may be zero so that the deterministic limit of
    /// the system stays representable; `beta_v` may take either sign.
    pub fn validate(&self) -> Result<()> {
        for (name, value) in Self::NAMES.iter().zip(self.to_array()) {
            if !value.is_finite() {
                return Err(SsvError::param(name, format!("not finite ({value})")));
            }
        }
        if self.lambda_s <= 0.0 {
            return Err(SsvError::param("lambda_s", "must be > 0"));
        }
        if self.gamma_v <= 0.0 {
            return Err(SsvError::param("gamma_v", "must be > 0"));
        }
        if self.sigma_s < 0.0 {
            return Err(SsvError::param("sigma_s", "must be >= 0"));
        }
        if self.sigma_v < 0.0 {
            return Err(SsvError::param("sigma_v", "must be >= 0"));
        }
        if self.rho_pv.abs() >= 1.0 {
            return Err(SsvError::param("rho_pv", "must lie in (-1, 1)"));
        }
        if self.rho_sv.abs() >= 1.0 {
            return Err(SsvError::param("rho_sv", "must lie in (-1, 1)"));
        }
        Ok(())
    }

    pub fn to_array(&self) -> [f64; 10] {
        [
            self.lambda_s,
            self.mu_s,
            self.sigma_s,
            self.mu_p,
            self.mu_v,
            self.gamma_v,
            self.beta_v,
            self.sigma_v,
            self.rho_pv,
            self.rho_sv,
        ]
    }

    pub fn from_array(a: [f64; 10]) -> Self {
        SsvParams {
            lambda_s: a[0],
            mu_s: a[1],
            sigma_s: a[2],
            mu_p: a[3],
            mu_v: a[4],
            gamma_v: a[5],
            beta_v: a[6],
            sigma_v: a[7],
            rho_pv: a[8],
            rho_sv: a[9],
        }
    }

    pub fn sentiment(&self) -> OuParams {
        OuParams {
            lambda_s: self.lambda_s,
            mu_s: self.mu_s,
            sigma_s: self.sigma_s,
        }
    }

    /// True when the sentiment-to-volatility coupling is non-negative.
    pub fn coupling_nonnegative(&self) -> bool {
        self.beta_v >= 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOuParams {
    lambda_s: f64,
    mu_s: f64,
    sigma_s: f64,
}

/// The three parameters of the standalone sentiment process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawOuParams", into = "RawOuParams")]
pub struct OuParams {
    pub lambda_s: f64,
    pub mu_s: f64,
    pub sigma_s: f64,
}

impl TryFrom<RawOuParams> for OuParams {
    type Error = SsvError;

    fn try_from(r: RawOuParams) -> Result<Self> {
        let p = OuParams {
            lambda_s: r.lambda_s,
            mu_s: r.mu_s,
            sigma_s: r.sigma_s,
        };
        p.validate()?;
        Ok(p)
    }
}

impl From<OuParams> for RawOuParams {
    fn from(p: OuParams) -> Self {
        RawOuParams {
            lambda_s: p.lambda_s,
            mu_s: p.mu_s,
            sigma_s: p.sigma_s,
        }
    }
}

impl OuParams {
    pub const NAMES: [&'static str; 3] = ["lambda_s", "mu_s", "sigma_s"];

    pub fn validate(&self) -> Result<()> {
        for (name, value) in Self::NAMES.iter().zip(self.to_array()) {
            if !value.is_finite() {
                return Err(SsvError::param(name, format!("not finite ({value})")));
            }
        }
        if self.lambda_s <= 0.0 {
            return Err(SsvError::param("lambda_s", "must be > 0"));
        }
        if self.sigma_s < 0.0 {
            return Err(SsvError::param("sigma_s", "must be >= 0"));
        }
        Ok(())
    }

    pub fn to_array(&self) -> [f64; 3] {
        [self.lambda_s, self.mu_s, self.sigma_s]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        OuParams {
            lambda_s: a[0],
            mu_s: a[1],
            sigma_s: a[2],
        }
    }

    /// Stationary variance `σ_s² / (2 λ_s)`.
    pub fn stationary_variance(&self) -> f64 {
        self.sigma_s * self.sigma_s / (2.0 * self.lambda_s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProcessState {
    pub s: f64,
    pub p: f64,
    pub v: f64,
    pub t: f64,
}

impl ProcessState {
    pub fn new(s: f64, p: f64, v: f64, t: f64) -> Result<Self> {
        let st = ProcessState { s, p, v, t };
        st.validate()?;
        Ok(st)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, x) in [("s", self.s), ("p", self.p), ("v", self.v), ("t", self.t)] {
            if !x.is_finite() {
                return Err(SsvError::param(name, format!("state not finite ({x})")));
            }
        }
        Ok(())
    }
}

/// Uniform observation grid with `m_substeps` Euler steps per bar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    #[serde(default)]
    pub t0: f64,
    pub dt: f64,
    pub n_bars: usize,
    #[serde(default = "default_substeps")]
    pub m_substeps: usize,
}

fn default_substeps() -> usize {
    10
}

impl TimeGrid {
    pub fn new(t0: f64, dt: f64, n_bars: usize, m_substeps: usize) -> Result<Self> {
        let g = TimeGrid {
            t0,
            dt,
            n_bars,
            m_substeps,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(SsvError::Config(format!("dt must be > 0, got {}", self.dt)));
        }
        if !self.t0.is_finite() {
            return Err(SsvError::Config("t0 must be finite".into()));
        }
        if self.n_bars < 1 {
            return Err(SsvError::Config("n_bars must be >= 1".into()));
        }
        if self.m_substeps < 1 {
            return Err(SsvError::Config("m_substeps must be >= 1".into()));
        }
        Ok(())
    }

    /// Euler substep `δ = dt / M`.
    pub fn substep(&self) -> f64 {
        self.dt / self.m_substeps as f64
    }

    pub fn time_of(&self, bar: usize) -> f64 {
        self.t0 + bar as f64 * self.dt
    }

    pub fn horizon(&self) -> f64 {
        self.n_bars as f64 * self.dt
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Drift {
    pub ds: f64,
    pub dp: f64,
    pub dv: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diffusion {
    pub gs: f64,
    pub gp: f64,
    pub gv: f64,
}

#[inline]
pub(crate) fn drift_s(lambda_s: f64, mu_s: f64, s: f64) -> f64 {
    lambda_s * (mu_s - s)
}

#[inline]
pub(crate) fn drift_v(p: &SsvParams, s: f64, v: f64) -> f64 {
    let dev = s - p.mu_s;
    p.mu_v + p.beta_v * dev * dev - p.gamma_v * v
}

/// Drift and diffusion of the log price given `exp(v/2)`.
#[inline]
pub(crate) fn price_coefficients(mu_p: f64, half_vol: f64) -> (f64, f64) {
    (mu_p - 0.5 * half_vol * half_vol, half_vol)
}

pub fn drift(state: &ProcessState, params: &SsvParams) -> Result<Drift> {
    let ds = drift_s(params.lambda_s, params.mu_s, state.s);
    let variance = state.v.exp();
    let dp = params.mu_p - 0.5 * variance;
    let dv = drift_v(params, state.s, state.v);
    if !ds.is_finite() {
        return Err(SsvError::Overflow { component: "ds" });
    }
    if !dp.is_finite() {
        return Err(SsvError::Overflow { component: "dp" });
    }
    if !dv.is_finite() {
        return Err(SsvError::Overflow { component: "dv" });
    }
    Ok(Drift { ds, dp, dv })
}

pub fn diffusion(state: &ProcessState, params: &SsvParams) -> Result<Diffusion> {
    let gp = (0.5 * state.v).exp();
    if !gp.is_finite() {
        return Err(SsvError::Overflow { component: "gp" });
    }
    Ok(Diffusion {
        gs: params.sigma_s,
        gp,
        gv: params.sigma_v,
    })
}

/// Price drift that makes the joint process stationary:
/// `exp(μ_v/γ_v + σ_s²/(2λ_s)) / 2`.
pub fn stationary_mu_p(params: &SsvParams) -> Result<f64> {
    if params.gamma_v <= 0.0 {
        return Err(SsvError::param("gamma_v", "must be > 0"));
    }
    if params.lambda_s <= 0.0 {
        return Err(SsvError::param("lambda_s", "must be > 0"));
    }
    let exponent = params.mu_v / params.gamma_v + params.sigma_s * params.sigma_s / (2.0 * params.lambda_s);
    let value = 0.5 * exponent.exp();
    if !value.is_finite() {
        return Err(SsvError::Overflow {
            component: "stationary_mu_p",
        });
    }
    Ok(value)
}
