//! Product Gaussian kernel density and rule-of-thumb bandwidths.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SsvError};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthRule {
    /// `0.9 · min(sd, IQR/1.34) · N^(−1/5)` per channel.
    #[default]
    Silverman,
    /// `sd_c · N^(−1/(d+4))` per channel.
    Scott,
    /// Caller-supplied bandwidths.
    Fixed,
}

/// Channel-major view of `n` points in `d` dimensions stored row by row.
#[derive(Debug, Clone, Copy)]
pub struct Points<'a> {
    pub data: &'a [f64],
    pub dim: usize,
}

impl<'a> Points<'a> {
    pub fn new(data: &'a [f64], dim: usize) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(SsvError::Config(format!(
                "{} values do not form points of dimension {dim}",
                data.len()
            )));
        }
        Ok(Points { data, dim })
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn point(&self, i: usize) -> &'a [f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    fn channel(&self, c: usize) -> Vec<f64> {
        self.data.iter().skip(c).step_by(self.dim).copied().collect()
    }
}

fn sample_sd(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Linearly interpolated quantile; reorders `x`.
fn quantile(x: &mut [f64], q: f64) -> f64 {
    let pos = q * (x.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let (_, &mut a, right) = x.select_nth_unstable_by(lo, f64::total_cmp);
    let frac = pos - lo as f64;
    if frac == 0.0 {
        return a;
    }
    let b = right.iter().copied().fold(f64::INFINITY, f64::min);
    a + frac * (b - a)
}

pub fn silverman(x: &[f64]) -> Result<f64> {
    if x.len() < 2 {
        return Err(SsvError::DegenerateSample(format!(
            "bandwidth needs >= 2 points, got {}",
            x.len()
        )));
    }
    let sd = sample_sd(x);
    let mut work = x.to_vec();
    let iqr = quantile(&mut work, 0.75) - quantile(&mut work, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    if !(spread > 0.0) || !spread.is_finite() {
        return Err(SsvError::DegenerateSample("endpoints have zero spread".into()));
    }
    Ok(0.9 * spread * (x.len() as f64).powf(-0.2))
}

pub fn scott(x: &[f64], dim: usize) -> Result<f64> {
    if x.len() < 2 {
        return Err(SsvError::DegenerateSample(format!(
            "bandwidth needs >= 2 points, got {}",
            x.len()
        )));
    }
    let sd = sample_sd(x);
    if !(sd > 0.0) || !sd.is_finite() {
        return Err(SsvError::DegenerateSample("endpoints have zero spread".into()));
    }
    Ok(sd * (x.len() as f64).powf(-1.0 / (dim as f64 + 4.0)))
}

/// Per-channel bandwidths for `points` under `rule`.
pub fn bandwidth(points: Points<'_>, rule: BandwidthRule, fixed: Option<&[f64]>) -> Result<Vec<f64>> {
    match rule {
        BandwidthRule::Fixed => {
            let h = fixed.ok_or_else(|| SsvError::Config("fixed bandwidth rule needs fixed_h".into()))?;
            if h.len() != points.dim || h.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
                return Err(SsvError::Config(format!(
                    "fixed_h must hold {} positive values, got {h:?}",
                    points.dim
                )));
            }
            Ok(h.to_vec())
        }
        BandwidthRule::Silverman => (0..points.dim).map(|c| silverman(&points.channel(c))).collect(),
        BandwidthRule::Scott => (0..points.dim).map(|c| scott(&points.channel(c), points.dim)).collect(),
    }
}

/// Log density with the floor applied, and whether the floor was active.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogDensity {
    pub value: f64,
    pub floored: bool,
}

/// `log max(p̂(y), floor)` for the product Gaussian kernel estimate
/// `p̂(y) = N⁻¹ Σᵢ Πc φ((y_c − x_ic)/h_c)/h_c`, computed stably in log space.
pub fn kernel_log_density(points: Points<'_>, y: &[f64], h: &[f64], floor: f64) -> LogDensity {
    debug_assert_eq!(y.len(), points.dim);
    debug_assert_eq!(h.len(), points.dim);
    let n = points.len();
    let log_floor = floor.ln();
    if n == 0 {
        return LogDensity {
            value: log_floor,
            floored: true,
        };
    }
    let inv_h: Vec<f64> = h.iter().map(|x| 1.0 / x).collect();
    let norm = h.iter().map(|x| x.ln()).sum::<f64>() + points.dim as f64 * LN_SQRT_2PI + (n as f64).ln();
    let mut max = f64::NEG_INFINITY;
    let mut sum = 0.0;
    for i in 0..n {
        let x = points.point(i);
        let mut q = 0.0;
        for c in 0..points.dim {
            let z = (y[c] - x[c]) * inv_h[c];
            q += z * z;
        }
        let e = -0.5 * q;
        // Streaming log-sum-exp.
        if e > max {
            sum = sum * (max - e).exp() + 1.0;
            max = e;
        } else {
            sum += (e - max).exp();
        }
    }
    let value = max + sum.ln() - norm;
    if value.is_finite() && value > log_floor {
        LogDensity { value, floored: false }
    } else {
        LogDensity {
            value: log_floor,
            floored: true,
        }
    }
}

/// `max(p̂(y), floor)` and the floor flag.
pub fn kernel_density(points: Points<'_>, y: &[f64], h: &[f64], floor: f64) -> (f64, bool) {
    let ld = kernel_log_density(points, y, h, floor);
    if ld.floored {
        (floor, true)
    } else {
        (ld.value.exp().max(floor), false)
    }
}
