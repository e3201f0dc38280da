//! Analytic evaluation of the moment integrals.
//!
//! Every moment of `(S_t, V_t)` used here is a finite sum of exponentials
//! `Σ c · exp(−(iλ_s + jγ_v) t)` with integer `(i, j)`. Products, linear
//! combinations and the variation-of-constants integral
//! `∫₀ᵗ e^{a(u−t)} f(u) du` all stay inside that family, so each moment is
//! built exactly from the previous ones.

use std::collections::BTreeMap;

use crate::error::{Result, SsvError};
use crate::model::SsvParams;

/// Exponential rate `iλ_s + jγ_v` keyed by its integer multiples.
pub(crate) type RateKey = (i32, i32);

#[derive(Debug, Clone, Copy)]
pub(crate) struct Rates {
    pub lambda: f64,
    pub gamma: f64,
}

impl Rates {
    fn of(&self, key: RateKey) -> f64 {
        key.0 as f64 * self.lambda + key.1 as f64 * self.gamma
    }
}

/// Relative distance below which an integration denominator counts as zero.
pub(crate) const RESONANCE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Default, PartialEq)]
pub(crate) struct ExpSum {
    terms: BTreeMap<RateKey, f64>,
}

impl ExpSum {
    pub fn constant(c: f64) -> Self {
        Self::term((0, 0), c)
    }

    pub fn term(key: RateKey, c: f64) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(key, c);
        ExpSum { terms }
    }

    pub fn add_scaled(&mut self, other: &ExpSum, k: f64) -> &mut Self {
        for (&key, &c) in &other.terms {
            *self.terms.entry(key).or_insert(0.0) += k * c;
        }
        self
    }

    pub fn plus(&self, other: &ExpSum, k: f64) -> ExpSum {
        let mut out = self.clone();
        out.add_scaled(other, k);
        out
    }

    pub fn mul(&self, other: &ExpSum) -> ExpSum {
        let mut out = ExpSum::default();
        for (&(i1, j1), &c1) in &self.terms {
            for (&(i2, j2), &c2) in &other.terms {
                *out.terms.entry((i1 + i2, j1 + j2)).or_insert(0.0) += c1 * c2;
            }
        }
        out
    }

    pub fn eval(&self, t: f64, rates: Rates) -> f64 {
        self.terms.iter().map(|(&key, &c)| c * (-rates.of(key) * t).exp()).sum()
    }

    /// `x0·e^{−a t} + ∫₀ᵗ e^{a(u−t)} f(u) du` for `f = self`.
    ///
    /// Terms whose coefficient is negligible next to the largest one are
    /// treated as exact cancellations and dropped before dividing; otherwise a
    /// vanishing denominator is a resonance error.
    pub fn solve_linear(&self, decay: RateKey, x0: f64, rates: Rates) -> Result<ExpSum> {
        let a = rates.of(decay);
        let scale = rates.lambda.abs() + rates.gamma.abs();
        let cmax = self.terms.values().fold(0.0f64, |m, c| m.max(c.abs()));
        let mut out = ExpSum::term(decay, x0);
        for (&key, &c) in &self.terms {
            if c == 0.0 || c.abs() <= 1e-13 * cmax {
                continue;
            }
            let denom = a - rates.of(key);
            if key == decay || denom.abs() < RESONANCE_TOL * scale {
                return Err(SsvError::Resonance {
                    denominator: describe_gap(decay, key),
                    value: denom,
                });
            }
            *out.terms.entry(key).or_insert(0.0) += c / denom;
            *out.terms.entry(decay).or_insert(0.0) -= c / denom;
        }
        Ok(out)
    }
}

fn describe_gap(a: RateKey, b: RateKey) -> String {
    let (i, j) = (a.0 - b.0, a.1 - b.1);
    let part = |k: i32, name: &str| match k {
        0 => String::new(),
        1 => name.to_string(),
        -1 => format!("-{name}"),
        k => format!("{k}*{name}"),
    };
    let g = part(j, "gamma_v");
    let l = part(i, "lambda_s");
    match (g.is_empty(), l.is_empty()) {
        (true, true) => "0".into(),
        (false, true) => g,
        (true, false) => l,
        (false, false) => match l.strip_prefix('-') {
            Some(rest) => format!("{g} - {rest}"),
            None => format!("{g} + {l}"),
        },
    }
}

/// The moment functions of `t` needed beyond the Gaussian sentiment law of `t` for one parameter set and start point.
#[derive(Debug, Clone)]
pub(crate) struct MomentChain {
    pub rates: Rates,
    pub e_s: ExpSum,
    pub e_v: ExpSum,
    pub e_sv: ExpSum,
    pub e_s2v: ExpSum,
    pub e_v2: ExpSum,
}

pub(crate) struct SentimentChain {
    pub e_s: ExpSum,
    pub e_s2: ExpSum,
    pub e_s3: ExpSum,
    pub e_s4: ExpSum,
}

pub(crate) fn sentiment_chain(p: &SsvParams, s0: f64) -> SentimentChain {
    let (l, mu, sig) = (p.lambda_s, p.mu_s, p.sigma_s);
    let e_s = ExpSum::constant(mu).plus(&ExpSum::term((1, 0), s0 - mu), 1.0);
    let w = sig * sig / (2.0 * l);
    let var = ExpSum::constant(w).plus(&ExpSum::term((2, 0), -w), 1.0);
    let m2 = e_s.mul(&e_s);
    let e_s2 = var.plus(&m2, 1.0);
    let e_s3 = e_s.mul(&m2.plus(&var, 3.0));
    let e_s4 = m2.mul(&m2).plus(&m2.mul(&var), 6.0).plus(&var.mul(&var), 3.0);
    SentimentChain { e_s, e_s2, e_s3, e_s4 }
}

pub(crate) fn rates_of(p: &SsvParams) -> Rates {
    Rates {
        lambda: p.lambda_s,
        gamma: p.gamma_v,
    }
}

pub(crate) fn mean_v_chain(p: &SsvParams, sent: &SentimentChain, v0: f64) -> Result<ExpSum> {
    let rates = rates_of(p);
    let mu = p.mu_s;
    // μ_v + β_v (E[S²] − 2μ_s E[S] + μ_s²)
    let mut f = ExpSum::constant(p.mu_v + p.beta_v * mu * mu);
    f.add_scaled(&sent.e_s2, p.beta_v)
        .add_scaled(&sent.e_s, -2.0 * p.beta_v * mu);
    f.solve_linear((0, 1), v0, rates)
}

pub(crate) fn cross_sv_chain(p: &SsvParams, sent: &SentimentChain, e_v: &ExpSum, s0: f64, v0: f64) -> Result<ExpSum> {
    let rates = rates_of(p);
    let (l, mu, b) = (p.lambda_s, p.mu_s, p.beta_v);
    let mut f = ExpSum::constant(p.sigma_s * p.sigma_v * p.rho_sv);
    f.add_scaled(e_v, l * mu)
        .add_scaled(&sent.e_s, p.mu_v + b * mu * mu)
        .add_scaled(&sent.e_s2, -2.0 * b * mu)
        .add_scaled(&sent.e_s3, b);
    f.solve_linear((1, 1), s0 * v0, rates)
}

pub(crate) fn cross_s2v_chain(
    p: &SsvParams,
    sent: &SentimentChain,
    e_v: &ExpSum,
    e_sv: &ExpSum,
    s0: f64,
    v0: f64,
) -> Result<ExpSum> {
    let rates = rates_of(p);
    let (l, mu, b) = (p.lambda_s, p.mu_s, p.beta_v);
    let mut f = ExpSum::default();
    f.add_scaled(&sent.e_s, 2.0 * p.sigma_v * p.sigma_s * p.rho_sv)
        .add_scaled(&sent.e_s2, p.mu_v + b * mu * mu)
        .add_scaled(&sent.e_s3, -2.0 * mu * b)
        .add_scaled(&sent.e_s4, b)
        .add_scaled(e_sv, 2.0 * l * mu)
        .add_scaled(e_v, p.sigma_s * p.sigma_s);
    f.solve_linear((2, 1), s0 * s0 * v0, rates)
}

pub(crate) fn second_v_chain(p: &SsvParams, e_v: &ExpSum, e_sv: &ExpSum, e_s2v: &ExpSum, v0: f64) -> Result<ExpSum> {
    let rates = rates_of(p);
    let (mu, b) = (p.mu_s, p.beta_v);
    let mut f = ExpSum::constant(p.sigma_v * p.sigma_v);
    f.add_scaled(e_v, 2.0 * (p.mu_v + b * mu * mu))
        .add_scaled(e_sv, -4.0 * b * mu)
        .add_scaled(e_s2v, 2.0 * b);
    f.solve_linear((0, 2), v0 * v0, rates)
}

pub(crate) fn full_chain(p: &SsvParams, s0: f64, v0: f64) -> Result<MomentChain> {
    let sent = sentiment_chain(p, s0);
    let e_v = mean_v_chain(p, &sent, v0)?;
    let e_sv = cross_sv_chain(p, &sent, &e_v, s0, v0)?;
    let e_s2v = cross_s2v_chain(p, &sent, &e_v, &e_sv, s0, v0)?;
    let e_v2 = second_v_chain(p, &e_v, &e_sv, &e_s2v, v0)?;
    Ok(MomentChain {
        rates: rates_of(p),
        e_s: sent.e_s,
        e_v,
        e_sv,
        e_s2v,
        e_v2,
    })
}
