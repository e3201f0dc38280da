//! Aggregation of document scores onto a fixed intraday bar grid.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, NaiveTime, Weekday};
use serde::{Deserialize, Serialize};

use super::score::{DocumentScore, TIMESTAMP_FORMAT};
use crate::error::{Result, SsvError};

/// Trading sessions: weekdays that are not listed holidays, between `open`
/// and `close` in exchange local time. Timestamps are taken to already be
/// in `timezone`; nothing is converted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionCalendar {
    pub open: NaiveTime,
    pub close: NaiveTime,
    pub bar_minutes: u32,
    pub timezone: String,
    pub holidays: BTreeSet<NaiveDate>,
}

impl Default for SessionCalendar {
    fn default() -> Self {
        SessionCalendar {
            open: NaiveTime::from_hms_opt(9, 30, 0).expect("valid time"),
            close: NaiveTime::from_hms_opt(16, 0, 0).expect("valid time"),
            bar_minutes: 15,
            timezone: "America/New_York".into(),
            holidays: BTreeSet::new(),
        }
    }
}

impl SessionCalendar {
    pub fn validate(&self) -> Result<()> {
        if self.open >= self.close {
            return Err(SsvError::Config("session open must precede close".into()));
        }
        if self.bar_minutes == 0 {
            return Err(SsvError::Config("bar_minutes must be positive".into()));
        }
        let len = (self.close - self.open).num_seconds();
        if len % (60 * self.bar_minutes as i64) != 0 {
            return Err(SsvError::Config(format!(
                "{}-minute bars do not tile the {}-minute session",
                self.bar_minutes,
                len / 60
            )));
        }
        Ok(())
    }

    pub fn bars_per_session(&self) -> usize {
        ((self.close - self.open).num_minutes() / self.bar_minutes as i64) as usize
    }

    fn bar(&self) -> Duration {
        Duration::minutes(self.bar_minutes as i64)
    }

    pub fn is_trading_day(&self, d: NaiveDate) -> bool {
        !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) && !self.holidays.contains(&d)
    }

    pub fn next_trading_day(&self, d: NaiveDate) -> NaiveDate {
        let mut d = d.succ_opt().expect("date in range");
        while !self.is_trading_day(d) {
            d = d.succ_opt().expect("date in range");
        }
        d
    }

    pub fn session_bars(&self, d: NaiveDate) -> Vec<NaiveDateTime> {
        let open = d.and_time(self.open);
        (0..self.bars_per_session())
            .map(|k| open + self.bar() * k as i32)
            .collect()
    }

    /// Start of the bar containing `ts`, and whether `ts` fell outside a
    /// session and was moved to the first bar of the next one.
    pub fn assign(&self, ts: NaiveDateTime) -> (NaiveDateTime, bool) {
        let d = ts.date();
        if self.is_trading_day(d) {
            let t = ts.time();
            if t >= self.open && t < self.close {
                let k = (t - self.open).num_seconds() / (60 * self.bar_minutes as i64);
                return (d.and_time(self.open) + self.bar() * k as i32, false);
            }
            if t < self.open {
                return (d.and_time(self.open), true);
            }
        }
        (self.next_trading_day(d).and_time(self.open), true)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmptyBarPolicy {
    /// Empty bars read as neutral (0).
    #[default]
    Zero,
    /// Linear interpolation between the nearest populated bars; bars before
    /// the first or after the last populated bar are 0.
    Interpolate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentimentBar {
    pub interval_start: NaiveDateTime,
    pub b_t: f64,
    pub n_docs: usize,
    /// No document fell in this bar; `b_t` comes from the empty-bar policy.
    pub imputed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarAggregation {
    pub bars: Vec<SentimentBar>,
    pub timezone: String,
    pub policy: EmptyBarPolicy,
    pub n_empty: usize,
    /// Documents published outside a session, moved to the next open.
    pub reassigned: Vec<String>,
}

/// Averages document scores per bar over every session from the first to
/// the last document's session, inclusive.
pub fn aggregate_bars(
    scores: &[DocumentScore],
    calendar: &SessionCalendar,
    policy: EmptyBarPolicy,
) -> Result<BarAggregation> {
    calendar.validate()?;
    let mut sums: BTreeMap<NaiveDateTime, (f64, usize)> = BTreeMap::new();
    let mut reassigned = Vec::new();
    for s in scores {
        if !s.b_score.is_finite() {
            return Err(SsvError::Data(format!(
                "document `{}` has a non-finite score",
                s.doc_id
            )));
        }
        let (bar, moved) = calendar.assign(s.timestamp);
        if moved {
            log::warn!(
                "document `{}` at {} is outside the session; assigned to {}",
                s.doc_id,
                s.timestamp,
                bar
            );
            reassigned.push(s.doc_id.clone());
        }
        let e = sums.entry(bar).or_insert((0.0, 0));
        e.0 += s.b_score;
        e.1 += 1;
    }
    let mut bars = Vec::new();
    if let (Some((first, _)), Some((last, _))) = (sums.first_key_value(), sums.last_key_value()) {
        let (mut d, end) = (first.date(), last.date());
        while d <= end {
            for start in calendar.session_bars(d) {
                let (b_t, n_docs) = match sums.get(&start) {
                    Some(&(sum, n)) => (sum / n as f64, n),
                    None => (0.0, 0),
                };
                bars.push(SentimentBar {
                    interval_start: start,
                    b_t,
                    n_docs,
                    imputed: n_docs == 0,
                });
            }
            d = calendar.next_trading_day(d);
        }
    }
    if policy == EmptyBarPolicy::Interpolate {
        interpolate(&mut bars);
    }
    let n_empty = bars.iter().filter(|b| b.imputed).count();
    Ok(BarAggregation {
        bars,
        timezone: calendar.timezone.clone(),
        policy,
        n_empty,
        reassigned,
    })
}

fn interpolate(bars: &mut [SentimentBar]) {
    let filled: Vec<usize> = (0..bars.len()).filter(|&k| !bars[k].imputed).collect();
    for w in filled.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (ya, yb) = (bars[a].b_t, bars[b].b_t);
        for k in a + 1..b {
            let f = (k - a) as f64 / (b - a) as f64;
            bars[k].b_t = ya + f * (yb - ya);
        }
    }
}

pub const BAR_HEADER: [&str; 3] = ["interval_start", "b_t", "n_docs"];

pub fn write_bars<W: Write>(bars: &[SentimentBar], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(BAR_HEADER)?;
    for b in bars {
        w.write_record([
            b.interval_start.format(TIMESTAMP_FORMAT).to_string(),
            b.b_t.to_string(),
            b.n_docs.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
