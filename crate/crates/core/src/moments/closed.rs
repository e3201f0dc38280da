//! Closed-form mean, variance and covariance of sentiment and log variance.
//!
//! Every growing exponential is folded into the common decaying prefactor
//! before evaluation, so the expressions stay finite for large `λ_s t`.

use serde::{Deserialize, Serialize};

use super::chain::RESONANCE_TOL;
use super::MomentRequest;
use crate::error::{Result, SsvError};

/// The six building blocks of `Var(V_t)`, each already multiplied by the
/// common factor `exp(−2(γ_v + 2λ_s) t)`, so that
/// `Var(V_t) = (−a + b − c − d + e + f) / denominator`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceTerms {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
    pub f: f64,
    /// `2γ_v λ_s² (γ_v−2λ_s)² (γ_v−λ_s)(2γ_v−λ_s)(γ_v+λ_s)(γ_v+2λ_s)`.
    pub denominator: f64,
}

impl VarianceTerms {
    pub fn variance(&self) -> f64 {
        (-self.a + self.b - self.c - self.d + self.e + self.f) / self.denominator
    }
}

/// Rejects parameters on (or within relative `1e-6` of) any surface where a
/// closed-form denominator vanishes.
pub fn check_resonance(lambda_s: f64, gamma_v: f64) -> Result<()> {
    let (l, g) = (lambda_s, gamma_v);
    let scale = l.abs() + g.abs();
    let gaps = [
        ("gamma_v", g),
        ("lambda_s", l),
        ("gamma_v - 2*lambda_s", g - 2.0 * l),
        ("gamma_v - lambda_s", g - l),
        ("2*gamma_v - lambda_s", 2.0 * g - l),
        ("gamma_v + lambda_s", g + l),
        ("gamma_v + 2*lambda_s", g + 2.0 * l),
    ];
    for (name, value) in gaps {
        if value.abs() < RESONANCE_TOL * scale {
            return Err(SsvError::Resonance {
                denominator: name.to_string(),
                value,
            });
        }
    }
    Ok(())
}

pub fn mean_s(req: &MomentRequest) -> f64 {
    let p = &req.params;
    let decay = (-p.lambda_s * req.t).exp();
    req.s0 * decay + p.mu_s * (1.0 - decay)
}

pub fn var_s(req: &MomentRequest) -> f64 {
    let p = &req.params;
    p.sigma_s * p.sigma_s * -(-2.0 * p.lambda_s * req.t).exp_m1() / (2.0 * p.lambda_s)
}

pub fn mean_v(req: &MomentRequest) -> Result<f64> {
    let p = &req.params;
    check_resonance(p.lambda_s, p.gamma_v)?;
    let (l, g, b, mu, sig, mv) = (p.lambda_s, p.gamma_v, p.beta_v, p.mu_s, p.sigma_s, p.mu_v);
    let (s0, v0, t) = (req.s0, req.v0, req.t);
    let t1 = b * g * (2.0 * l * mu * mu + 2.0 * l * s0 * s0 - 4.0 * l * mu * s0 - sig * sig);
    let t2 = 2.0
        * l
        * (b * g * mu * mu - b * sig * sig + g * mv - 2.0 * l * mv + b * g * s0 * s0
            - 2.0 * b * g * mu * s0
            - g * v0 * (g - 2.0 * l));
    let t3 = (g - 2.0 * l) * (b * sig * sig + 2.0 * l * mv);
    let bracket = t1 * (-2.0 * l * t).exp() - t2 * (-g * t).exp() + t3;
    Ok(bracket / (2.0 * g * l * (g - 2.0 * l)))
}

pub fn variance_terms(req: &MomentRequest) -> Result<VarianceTerms> {
    let p = &req.params;
    check_resonance(p.lambda_s, p.gamma_v)?;
    let (l, g, b, mu, ss, sv, r) = (p.lambda_s, p.gamma_v, p.beta_v, p.mu_s, p.sigma_s, p.sigma_v, p.rho_sv);
    let (s0, t) = (req.s0, req.t);
    let (l2, g2) = (l * l, g * g);
    let gm2l = g - 2.0 * l;

    let a = l2
        * (g2 + 3.0 * g * l + 2.0 * l2)
        * (-2.0 * g * t).exp()
        * (2.0 * b * b * ss * ss * (2.0 * g - l) * (2.0 * g * mu * mu - ss * ss)
            + 8.0 * b * g * mu * r * ss * sv * (g2 - 3.0 * g * l + 2.0 * l2)
            + sv * sv * gm2l * gm2l * (2.0 * g2 - 3.0 * g * l + l2)
            + 4.0 * b * b * g * s0 * s0 * ss * ss * (2.0 * g - l)
            - 8.0 * b * g * s0 * ss * (b * mu * ss * (2.0 * g - l) + r * sv * (g2 - 3.0 * g * l + 2.0 * l2)));

    let b_term = 2.0
        * b
        * b
        * ss
        * ss
        * (2.0 * g2 * g + 5.0 * g2 * l + g * l2 - 2.0 * l2 * l)
        * gm2l
        * gm2l
        * (-2.0 * l * t).exp()
        * (2.0 * l * mu * mu + 2.0 * l * s0 * s0 - 4.0 * l * mu * s0 - ss * ss);

    let c = b
        * b
        * g
        * ss
        * ss
        * (2.0 * g2 * g2 + 3.0 * g2 * g * l - 4.0 * g2 * l2 - 3.0 * g * l2 * l + 2.0 * l2 * l2)
        * (-4.0 * l * t).exp()
        * (4.0 * l * mu * mu + 4.0 * l * s0 * s0 - 8.0 * l * mu * s0 - ss * ss);

    let d = 8.0
        * b
        * l2
        * ss
        * (2.0 * g2 - 3.0 * g * l + l2)
        * (-(g + 2.0 * l) * t).exp()
        * (2.0 * b * ss * (-g2 * mu * mu + g * (ss * ss - 3.0 * l * mu * mu) + l * (ss * ss - 2.0 * l * mu * mu))
            - g * mu * r * sv * (g2 - 4.0 * l2)
            - 2.0 * b * s0 * s0 * ss * (g2 + 3.0 * g * l + 2.0 * l2)
            + s0 * (g + 2.0 * l) * (4.0 * b * mu * ss * (g + l) + g * r * sv * gm2l));

    let e = 8.0 * b * g * l2 * r * ss * sv * (g2 + g * l - 2.0 * l2) * gm2l * gm2l * (s0 - mu) * (-l * t).exp();

    let f = (2.0 * g2 * g - g2 * l - 2.0 * g * l2 + l2 * l)
        * gm2l
        * gm2l
        * (b * b * ss * ss * ss * ss + l2 * sv * sv * (g + 2.0 * l));

    let denominator = 2.0 * g * l2 * gm2l * gm2l * (g - l) * (2.0 * g - l) * (g + l) * (g + 2.0 * l);

    Ok(VarianceTerms {
        a,
        b: b_term,
        c,
        d,
        e,
        f,
        denominator,
    })
}

pub fn var_v(req: &MomentRequest) -> Result<f64> {
    Ok(variance_terms(req)?.variance())
}

pub fn cov_sv(req: &MomentRequest) -> Result<f64> {
    let p = &req.params;
    check_resonance(p.lambda_s, p.gamma_v)?;
    let (l, g, b, mu, ss, sv, r) = (p.lambda_s, p.gamma_v, p.beta_v, p.mu_s, p.sigma_s, p.sigma_v, p.rho_sv);
    let (s0, t) = (req.s0, req.t);
    let c1 = b * ss * (g * g - g * l - 2.0 * l * l) * (s0 - mu) * (-l * t).exp();
    let c2 = l
        * (-(g + l) * t).exp()
        * (-2.0 * b * mu * ss * (g + l) - g * r * sv * (g - 2.0 * l) + 2.0 * b * s0 * ss * (g + l));
    let c3 = -b * g * ss * (g + l) * (s0 - mu) * (-3.0 * l * t).exp();
    let c4 = g * l * r * sv * (g - 2.0 * l);
    Ok(ss * (c1 + c2 + c3 + c4) / (g * l * (g - 2.0 * l) * (g + l)))
}
