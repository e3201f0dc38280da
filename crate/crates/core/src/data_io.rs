//! Bar data ingestion: `timestamp,value` series for sentiment, futures
//! price and volatility index, joined on the session bar grid.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SsvError};
use crate::model::{dt_joint_days, TimeGrid};
use crate::npsmle::ObservationSeries;
use crate::sentiment::bars::SessionCalendar;
use crate::sentiment::score::{parse_timestamp, TIMESTAMP_FORMAT};

/// How volatility index quotes (annualized percent) become `V`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VixConvention {
    /// `V = 2 ln(q / 100)`: log of the annualized variance.
    #[default]
    LogvarAnnual,
    /// `V = ln(q / 100)`.
    Logvix,
}

pub fn vix_to_logvar(quote: f64, convention: VixConvention) -> Result<f64> {
    if !(quote > 0.0 && quote.is_finite()) {
        return Err(SsvError::Data(format!(
            "volatility quote must be positive and finite, got {quote}"
        )));
    }
    let l = (quote / 100.0).ln();
    Ok(match convention {
        VixConvention::LogvarAnnual => 2.0 * l,
        VixConvention::Logvix => l,
    })
}

pub fn logvar_to_vix(v: f64, convention: VixConvention) -> f64 {
    match convention {
        VixConvention::LogvarAnnual => 100.0 * (v / 2.0).exp(),
        VixConvention::Logvix => 100.0 * v.exp(),
    }
}

/// Reads a `timestamp,value` CSV. Every failure names the file row
/// (header is row 1).
pub fn read_value_series<R: Read>(input: R, name: &str) -> Result<Vec<(NaiveDateTime, f64)>> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers()?.clone();
    if headers.len() != 2 || headers[0].trim() != "timestamp" || headers[1].trim() != "value" {
        return Err(SsvError::Data(format!("{name}: expected header `timestamp,value`")));
    }
    let mut out: Vec<(NaiveDateTime, f64)> = Vec::new();
    let mut seen = BTreeMap::new();
    for (k, rec) in rdr.records().enumerate() {
        let row = k + 2;
        let rec = rec.map_err(|e| SsvError::Data(format!("{name} row {row}: {e}")))?;
        let ts = parse_timestamp(&rec[0]).map_err(|e| SsvError::Data(format!("{name} row {row}: {e}")))?;
        let value: f64 = rec[1]
            .trim()
            .parse()
            .map_err(|_| SsvError::Data(format!("{name} row {row}: unparseable value `{}`", &rec[1])))?;
        if !value.is_finite() {
            return Err(SsvError::Data(format!("{name} row {row}: non-finite value")));
        }
        if let Some(first) = seen.insert(ts, row) {
            return Err(SsvError::Data(format!(
                "{name} row {row}: duplicate timestamp {ts} (first at row {first})"
            )));
        }
        out.push((ts, value));
    }
    out.sort_by_key(|&(t, _)| t);
    Ok(out)
}

fn check_grid(series: &[(NaiveDateTime, f64)], calendar: &SessionCalendar, name: &str) -> Result<()> {
    for &(ts, _) in series {
        let (bar, moved) = calendar.assign(ts);
        if moved || bar != ts {
            return Err(SsvError::Data(format!(
                "{name}: timestamp {ts} is not a bar start of the {}-minute session grid",
                calendar.bar_minutes
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GapReport {
    /// Bars present in another series but missing from this one.
    pub sentiment: Vec<String>,
    pub price: Vec<String>,
    pub volatility: Vec<String>,
}

/// Three aligned channels on the bar grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarDataset {
    pub timestamps: Vec<NaiveDateTime>,
    pub s: Vec<f64>,
    /// Natural log of the futures price.
    pub p: Vec<f64>,
    pub v: Vec<f64>,
    pub vix_convention: VixConvention,
    pub calendar: SessionCalendar,
    pub gaps: GapReport,
    /// Rows whose predecessor is not the preceding bar of the calendar; the
    /// transition ending there is left out of estimation.
    pub skipped_transitions: BTreeSet<usize>,
}

impl BarDataset {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    /// Stable content hash (FNV-1a over timestamps and value bits).
    pub fn hash(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        for i in 0..self.len() {
            feed(&self.timestamps[i].and_utc().timestamp().to_le_bytes());
            for x in [self.s[i], self.p[i], self.v[i]] {
                feed(&x.to_bits().to_le_bytes());
            }
        }
        feed(format!("{:?}", self.vix_convention).as_bytes());
        format!("{h:016x}")
    }

    /// Joint observation series with `dt = 1/26` (one time unit per day).
    pub fn to_series(&self) -> Result<ObservationSeries> {
        if self.len() < 2 {
            return Err(SsvError::Data("dataset needs at least two bars".into()));
        }
        let grid = TimeGrid::new(0.0, dt_joint_days(), self.len() - 1, 1)?;
        let mut series = ObservationSeries::joint(grid, &self.s, &self.p, &self.v)?;
        series.skipped = self.skipped_transitions.clone();
        series.validate()?;
        Ok(series)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["timestamp", "s", "p", "v"])?;
        for i in 0..self.len() {
            w.write_record([
                self.timestamps[i].format(TIMESTAMP_FORMAT).to_string(),
                self.s[i].to_string(),
                self.p[i].to_string(),
                self.v[i].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Rows (after the first) that do not directly follow their predecessor on
/// the calendar grid.
pub fn non_consecutive_rows(timestamps: &[NaiveDateTime], calendar: &SessionCalendar) -> BTreeSet<usize> {
    let step = chrono::Duration::minutes(calendar.bar_minutes as i64);
    (1..timestamps.len())
        .filter(|&i| {
            let prev = timestamps[i - 1];
            let next = if (prev + step).time() < calendar.close && (prev + step).date() == prev.date() {
                prev + step
            } else {
                calendar.next_trading_day(prev.date()).and_time(calendar.open)
            };
            timestamps[i] != next
        })
        .collect()
}

/// Inner-joins the three series on timestamp. Bars missing from any series
/// are dropped with a warning and listed in [`BarDataset::gaps`].
pub fn ingest(
    sentiment: Vec<(NaiveDateTime, f64)>,
    price: Vec<(NaiveDateTime, f64)>,
    vix: Vec<(NaiveDateTime, f64)>,
    calendar: &SessionCalendar,
    convention: VixConvention,
) -> Result<BarDataset> {
    calendar.validate()?;
    check_grid(&sentiment, calendar, "sentiment")?;
    check_grid(&price, calendar, "price")?;
    check_grid(&vix, calendar, "volatility")?;
    let s: BTreeMap<_, _> = sentiment.into_iter().collect();
    let p: BTreeMap<_, _> = price.into_iter().collect();
    let v: BTreeMap<_, _> = vix.into_iter().collect();
    let all: BTreeSet<NaiveDateTime> = s.keys().chain(p.keys()).chain(v.keys()).copied().collect();
    let missing = |m: &BTreeMap<NaiveDateTime, f64>| -> Vec<String> {
        all.iter()
            .filter(|t| !m.contains_key(t))
            .map(|t| t.format(TIMESTAMP_FORMAT).to_string())
            .collect()
    };
    let gaps = GapReport {
        sentiment: missing(&s),
        price: missing(&p),
        volatility: missing(&v),
    };
    for (name, g) in [
        ("sentiment", &gaps.sentiment),
        ("price", &gaps.price),
        ("volatility", &gaps.volatility),
    ] {
        if !g.is_empty() {
            log::warn!(
                "{name} series is missing {} bar(s), first {}; those bars are dropped",
                g.len(),
                g[0]
            );
        }
    }
    let mut ds = BarDataset {
        timestamps: Vec::new(),
        s: Vec::new(),
        p: Vec::new(),
        v: Vec::new(),
        vix_convention: convention,
        calendar: calendar.clone(),
        gaps,
        skipped_transitions: BTreeSet::new(),
    };
    for t in &all {
        if let (Some(&a), Some(&b), Some(&c)) = (s.get(t), p.get(t), v.get(t)) {
            if !(b > 0.0) {
                return Err(SsvError::Data(format!("price at {t} must be positive, got {b}")));
            }
            let vv = vix_to_logvar(c, convention).map_err(|e| SsvError::Data(format!("volatility at {t}: {e}")))?;
            ds.timestamps.push(*t);
            ds.s.push(a);
            ds.p.push(b.ln());
            ds.v.push(vv);
        }
    }
    ds.skipped_transitions = non_consecutive_rows(&ds.timestamps, calendar);
    Ok(ds)
}

pub fn ingest_files(
    sentiment: &Path,
    price: &Path,
    vix: &Path,
    calendar: &SessionCalendar,
    convention: VixConvention,
) -> Result<BarDataset> {
    let read = |path: &Path, name: &str| -> Result<Vec<(NaiveDateTime, f64)>> {
        let f = std::fs::File::open(path).map_err(|e| SsvError::Data(format!("{name}: {}: {e}", path.display())))?;
        read_value_series(f, name)
    };
    ingest(
        read(sentiment, "sentiment")?,
        read(price, "price")?,
        read(vix, "volatility")?,
        calendar,
        convention,
    )
}

/// Reads an observation CSV whose first column is `timestamp` (calendar
/// times) or `t` (model time, rows assumed consecutive) followed by `s` and,
/// for joint series, `p` and `v`. Extra columns are ignored. A row with an
/// empty cell in a used column is dropped and the transition across it is
/// skipped.
pub fn read_observations<R: Read>(
    input: R,
    channels: usize,
    dt: f64,
    calendar: &SessionCalendar,
) -> Result<ObservationSeries> {
    let names: &[&str] = match channels {
        1 => &["s"],
        3 => &["s", "p", "v"],
        _ => {
            return Err(SsvError::Data(format!(
                "series must have 1 or 3 channels, got {channels}"
            )))
        }
    };
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers()?.clone();
    let first = headers.get(0).map(str::trim).unwrap_or_default().to_string();
    let calendar_times = match first.as_str() {
        "timestamp" => true,
        "t" => false,
        other => {
            return Err(SsvError::Data(format!(
                "first column must be `timestamp` or `t`, got `{other}`"
            )))
        }
    };
    let cols: Vec<usize> = names
        .iter()
        .map(|n| {
            headers
                .iter()
                .position(|h| h.trim() == *n)
                .ok_or_else(|| SsvError::Data(format!("missing column `{n}`")))
        })
        .collect::<Result<_>>()?;
    let mut values = Vec::new();
    let mut times: Vec<NaiveDateTime> = Vec::new();
    let mut skipped = BTreeSet::new();
    let mut rows = 0usize;
    let mut pending_gap = false;
    for (k, rec) in rdr.records().enumerate() {
        let row = k + 2;
        let rec = rec.map_err(|e| SsvError::Data(format!("row {row}: {e}")))?;
        if cols.iter().any(|&c| rec.get(c).is_none_or(|x| x.trim().is_empty())) {
            log::warn!("row {row} has a missing value; dropped");
            pending_gap = true;
            continue;
        }
        if calendar_times {
            let ts = parse_timestamp(&rec[0]).map_err(|e| SsvError::Data(format!("row {row}: {e}")))?;
            if times.last().is_some_and(|&last| ts <= last) {
                return Err(SsvError::Data(format!("row {row}: timestamp {ts} is not increasing")));
            }
            times.push(ts);
        }
        for &c in &cols {
            let x: f64 = rec[c]
                .trim()
                .parse()
                .map_err(|_| SsvError::Data(format!("row {row}: unparseable value `{}`", &rec[c])))?;
            if !x.is_finite() {
                return Err(SsvError::Data(format!("row {row}: non-finite value")));
            }
            values.push(x);
        }
        if pending_gap && rows > 0 {
            skipped.insert(rows);
        }
        pending_gap = false;
        rows += 1;
    }
    if rows < 2 {
        return Err(SsvError::Data(format!("need at least 2 complete rows, got {rows}")));
    }
    if calendar_times {
        skipped.extend(non_consecutive_rows(&times, calendar));
    }
    let grid = TimeGrid::new(0.0, dt, rows - 1, 1)?;
    ObservationSeries::new(grid, channels, values, skipped)
}
