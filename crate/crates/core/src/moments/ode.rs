//! Adaptive Dormand–Prince 5(4) integration of the linear moment system.
//!
//! The state is `(E[S], E[S²], E[S³], E[S⁴], E[V], E[SV], E[S²V], E[V²])`.
//! Nothing here divides by a rate difference, so the result stays finite on
//! parameter sets where the closed forms are singular.

use crate::error::{Result, SsvError};
use crate::model::SsvParams;

#[derive(Debug, Clone, Copy)]
pub struct OdeSettings {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for OdeSettings {
    fn default() -> Self {
        OdeSettings {
            rtol: 1e-12,
            atol: 1e-14,
            max_steps: 2_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    pub last_h: f64,
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// Fifth-order weights are the last row of A; these are fifth minus fourth.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrates `y' = f(t, y)` from `0` to `t_end`.
pub fn dopri45<const N: usize>(
    f: impl Fn(f64, &[f64; N]) -> [f64; N],
    y0: [f64; N],
    t_end: f64,
    settings: OdeSettings,
) -> Result<([f64; N], OdeStats)> {
    let mut stats = OdeStats::default();
    if t_end == 0.0 {
        return Ok((y0, stats));
    }
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(SsvError::Integrator(format!("invalid horizon {t_end}")));
    }
    let mut t = 0.0;
    let mut y = y0;
    let mut h = (t_end * 1e-3).min(1e-3);
    let mut k = [[0.0; N]; 7];
    k[0] = f(t, &y);
    while t < t_end {
        if stats.accepted + stats.rejected >= settings.max_steps {
            return Err(SsvError::Integrator(format!(
                "step limit {} reached at t = {t:e} of {t_end:e} ({} accepted, {} rejected, h = {h:e})",
                settings.max_steps, stats.accepted, stats.rejected
            )));
        }
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }
        for s in 1..7 {
            let mut ys = y;
            for (i, yi) in ys.iter_mut().enumerate() {
                let mut acc = 0.0;
                for j in 0..s {
                    acc += A[s][j] * k[j][i];
                }
                *yi += h * acc;
            }
            k[s] = f(t + C[s] * h, &ys);
        }
        let mut y_new = y;
        let mut err = 0.0f64;
        for i in 0..N {
            let mut acc = 0.0;
            let mut e = 0.0;
            for s in 0..7 {
                if s < 6 {
                    acc += A[6][s] * k[s][i];
                }
                e += E[s] * k[s][i];
            }
            y_new[i] = y[i] + h * acc;
            let sc = settings.atol + settings.rtol * y[i].abs().max(y_new[i].abs());
            err = err.max((h * e / sc).abs());
        }
        if !err.is_finite() || y_new.iter().any(|v| !v.is_finite()) {
            return Err(SsvError::Integrator(format!(
                "non-finite state at t = {t:e} with h = {h:e} after {} steps",
                stats.accepted
            )));
        }
        if err <= 1.0 {
            t = if last { t_end } else { t + h };
            y = y_new;
            // First-same-as-last: the final stage is the next derivative.
            k[0] = k[6];
            stats.accepted += 1;
            stats.last_h = h;
        } else {
            stats.rejected += 1;
        }
        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };
        h *= factor;
        if h < 1e-15 * t_end.max(1.0) {
            return Err(SsvError::Integrator(format!(
                "step size underflow at t = {t:e} ({} accepted, {} rejected)",
                stats.accepted, stats.rejected
            )));
        }
    }
    Ok((y, stats))
}

/// Right-hand side of the moment system.
pub(crate) fn moment_rhs(p: &SsvParams, y: &[f64; 8]) -> [f64; 8] {
    let (l, mu, ss) = (p.lambda_s, p.mu_s, p.sigma_s);
    let (g, b, sv, r) = (p.gamma_v, p.beta_v, p.sigma_v, p.rho_sv);
    let [s1, s2, s3, s4, v1, sv1, s2v, v2] = *y;
    let a = p.mu_v + b * mu * mu;
    [
        l * mu - l * s1,
        2.0 * l * mu * s1 - 2.0 * l * s2 + ss * ss,
        3.0 * l * mu * s2 - 3.0 * l * s3 + 3.0 * ss * ss * s1,
        4.0 * l * mu * s3 - 4.0 * l * s4 + 6.0 * ss * ss * s2,
        a + b * s2 - 2.0 * b * mu * s1 - g * v1,
        -(g + l) * sv1 + l * mu * v1 + ss * sv * r + a * s1 - 2.0 * b * mu * s2 + b * s3,
        -(g + 2.0 * l) * s2v + 2.0 * sv * ss * r * s1 + a * s2 - 2.0 * mu * b * s3
            + b * s4
            + 2.0 * l * mu * sv1
            + ss * ss * v1,
        -2.0 * g * v2 + 2.0 * a * v1 - 4.0 * b * mu * sv1 + 2.0 * b * s2v + sv * sv,
    ]
}

pub(crate) fn initial_moments(s0: f64, v0: f64) -> [f64; 8] {
    let s2 = s0 * s0;
    [s0, s2, s2 * s0, s2 * s2, v0, s0 * v0, s2 * v0, v0 * v0]
}

pub(crate) fn integrate_moments(p: &SsvParams, s0: f64, v0: f64, t: f64, settings: OdeSettings) -> Result<[f64; 8]> {
    let (y, stats) = dopri45(|_, y| moment_rhs(p, y), initial_moments(s0, v0), t, settings)?;
    log::debug!(
        "moment ODE: {} accepted, {} rejected steps, final h = {:e}",
        stats.accepted,
        stats.rejected,
        stats.last_h
    );
    Ok(y)
}
