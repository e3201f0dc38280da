//! Moments and co-moments of sentiment and log variance at a horizon `t`.
//!
//! Three independent routes are provided: transcribed closed forms
//! ([`closed_form_report`]), exact integration of the moment recursion
//! ([`cross_moment_sv`], [`second_moment_v`]), and numerical integration of
//! the moment ODE system ([`moment_ode_report`]). The closed forms are always
//! checked against the exact recursion before being returned.

pub(crate) mod chain;
pub mod closed;
pub mod mc;
pub mod ode;

use serde::{Deserialize, Serialize};

pub use closed::VarianceTerms;
pub use mc::{monte_carlo_moments, Estimate, McMoments, McSettings};
pub use ode::OdeSettings;

use crate::error::{Result, SsvError};
use crate::model::SsvParams;

/// Relative agreement demanded between closed forms and the exact recursion.
pub const CROSS_CHECK_RTOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentRequest {
    pub params: SsvParams,
    pub s0: f64,
    pub v0: f64,
    pub t: f64,
}

impl MomentRequest {
    pub fn new(params: SsvParams, s0: f64, v0: f64, t: f64) -> Result<Self> {
        let req = MomentRequest { params, s0, v0, t };
        req.validate()?;
        Ok(req)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !self.s0.is_finite() {
            return Err(SsvError::param("s0", "must be finite"));
        }
        if !self.v0.is_finite() {
            return Err(SsvError::param("v0", "must be finite"));
        }
        if !(self.t >= 0.0 && self.t.is_finite()) {
            return Err(SsvError::param(
                "t",
                format!("horizon must be finite and >= 0, got {}", self.t),
            ));
        }
        Ok(())
    }

    pub fn at(&self, t: f64) -> Self {
        MomentRequest { t, ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub t: f64,
    pub e_s: f64,
    pub e_s2: f64,
    pub e_s3: f64,
    pub e_s4: f64,
    pub e_v: f64,
    pub e_v2: f64,
    pub e_sv: f64,
    pub e_s2v: f64,
    pub var_s: f64,
    pub var_v: f64,
    pub cov_sv: f64,
    /// `None` when either variance vanishes (for example at `t = 0`).
    pub rho_sv_t: Option<f64>,
}

impl MomentReport {
    pub const CSV_HEADER: [&'static str; 13] = [
        "t", "e_s", "e_s2", "e_s3", "e_s4", "e_v", "e_v2", "e_sv", "e_s2v", "var_s", "var_v", "cov_sv", "rho_sv_t",
    ];

    pub fn csv_record(&self) -> Vec<String> {
        let mut out: Vec<String> = [
            self.t,
            self.e_s,
            self.e_s2,
            self.e_s3,
            self.e_s4,
            self.e_v,
            self.e_v2,
            self.e_sv,
            self.e_s2v,
            self.var_s,
            self.var_v,
            self.cov_sv,
        ]
        .iter()
        .map(|x| format!("{x:e}"))
        .collect();
        out.push(self.rho_sv_t.map(|r| format!("{r:e}")).unwrap_or_default());
        out
    }
}

/// Which route produced a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentSource {
    ClosedForm,
    Ode,
}

/// `(E[S_t], E[S_t²], E[S_t³], E[S_t⁴])` from the Gaussian transition law.
pub fn sentiment_moments(req: &MomentRequest) -> (f64, f64, f64, f64) {
    let m = closed::mean_s(req);
    let v = closed::var_s(req);
    let m2 = m * m;
    (m, v + m2, m2 * m + 3.0 * m * v, m2 * m2 + 6.0 * m2 * v + 3.0 * v * v)
}

pub fn mean_v(req: &MomentRequest) -> Result<f64> {
    req.validate()?;
    closed::mean_v(req)
}

pub fn cross_moment_sv(req: &MomentRequest) -> Result<f64> {
    req.validate()?;
    let p = &req.params;
    let sent = chain::sentiment_chain(p, req.s0);
    let e_v = chain::mean_v_chain(p, &sent, req.v0)?;
    let e_sv = chain::cross_sv_chain(p, &sent, &e_v, req.s0, req.v0)?;
    Ok(e_sv.eval(req.t, chain::rates_of(p)))
}

/// `(E[V_t²], E[S_t² V_t])`.
pub fn second_moment_v(req: &MomentRequest) -> Result<(f64, f64)> {
    req.validate()?;
    let c = chain::full_chain(&req.params, req.s0, req.v0)?;
    Ok((c.e_v2.eval(req.t, c.rates), c.e_s2v.eval(req.t, c.rates)))
}

pub fn variance_terms(req: &MomentRequest) -> Result<VarianceTerms> {
    req.validate()?;
    closed::variance_terms(req)
}

fn cross_check(quantity: &'static str, closed: f64, chain: f64, scale: f64) -> Result<()> {
    let denom = closed.abs().max(chain.abs()).max(scale);
    if !closed.is_finite() || !chain.is_finite() || (closed - chain).abs() > CROSS_CHECK_RTOL * denom {
        return Err(SsvError::CrossCheck {
            quantity,
            closed,
            chain,
        });
    }
    Ok(())
}

/// Full report from the closed forms, verified against the exact recursion.
///
/// Fails with a resonance error near singular parameter surfaces; use
/// [`moment_report`] for automatic fallback.
pub fn closed_form_report(req: &MomentRequest) -> Result<MomentReport> {
    req.validate()?;
    let (e_s, e_s2, e_s3, e_s4) = sentiment_moments(req);
    let var_s = closed::var_s(req);
    let e_v = closed::mean_v(req)?;
    let var_v = closed::var_v(req)?;
    let cov_sv = closed::cov_sv(req)?;

    let c = chain::full_chain(&req.params, req.s0, req.v0)?;
    let r = c.rates;
    let t = req.t;
    let ch_e_v = c.e_v.eval(t, r);
    let ch_e_s = c.e_s.eval(t, r);
    let ch_e_v2 = c.e_v2.eval(t, r);
    let ch_e_sv = c.e_sv.eval(t, r);
    let e_s2v = c.e_s2v.eval(t, r);
    cross_check("E[V_t]", e_v, ch_e_v, 0.0)?;
    cross_check("Var(V_t)", var_v, ch_e_v2 - ch_e_v * ch_e_v, ch_e_v * ch_e_v)?;
    cross_check(
        "Cov(S_t, V_t)",
        cov_sv,
        ch_e_sv - ch_e_s * ch_e_v,
        (ch_e_s * ch_e_v).abs(),
    )?;

    let mut report = MomentReport {
        t,
        e_s,
        e_s2,
        e_s3,
        e_s4,
        e_v,
        e_v2: var_v + e_v * e_v,
        e_sv: cov_sv + e_s * e_v,
        e_s2v,
        var_s,
        var_v,
        cov_sv,
        rho_sv_t: None,
    };
    report.rho_sv_t = correlation_of(&report).ok();
    Ok(report)
}

fn correlation_of(r: &MomentReport) -> Result<f64> {
    let floor = 1e-14 * (1.0 + r.e_v * r.e_v);
    if !(r.var_s > 0.0) || !(r.var_v > floor) {
        return Err(SsvError::DegenerateVariance {
            t: r.t,
            var_s: r.var_s,
            var_v: r.var_v,
        });
    }
    let rho = r.cov_sv / (r.var_s * r.var_v).sqrt();
    if !(rho.abs() <= 1.0 + 1e-10) {
        return Err(SsvError::CrossCheck {
            quantity: "correlation bound |rho(S_t, V_t)| <= 1",
            closed: rho,
            chain: rho.signum(),
        });
    }
    Ok(rho.clamp(-1.0, 1.0))
}

/// Correlation of `S_t` and `V_t`; an error when either variance vanishes.
pub fn correlation_sv(req: &MomentRequest) -> Result<f64> {
    correlation_of(&moment_report(req)?.0)
}

/// Report from numerical integration of the moment ODE system.
pub fn moment_ode_report(req: &MomentRequest, settings: OdeSettings) -> Result<MomentReport> {
    req.validate()?;
    let y = ode::integrate_moments(&req.params, req.s0, req.v0, req.t, settings)?;
    let [e_s, e_s2, e_s3, e_s4, e_v, e_sv, e_s2v, e_v2] = y;
    let mut report = MomentReport {
        t: req.t,
        e_s,
        e_s2,
        e_s3,
        e_s4,
        e_v,
        e_v2,
        e_sv,
        e_s2v,
        var_s: (e_s2 - e_s * e_s).max(0.0),
        var_v: (e_v2 - e_v * e_v).max(0.0),
        cov_sv: e_sv - e_s * e_v,
        rho_sv_t: None,
    };
    report.rho_sv_t = correlation_of(&report).ok();
    Ok(report)
}

/// Closed forms where they apply, the ODE system near resonance.
pub fn moment_report(req: &MomentRequest) -> Result<(MomentReport, MomentSource)> {
    match closed_form_report(req) {
        Ok(r) => Ok((r, MomentSource::ClosedForm)),
        Err(SsvError::Resonance { denominator, value }) => {
            log::info!("closed forms singular ({denominator} = {value:e}); integrating the moment ODEs");
            Ok((moment_ode_report(req, OdeSettings::default())?, MomentSource::Ode))
        }
        Err(e) => Err(e),
    }
}
