//! Document-level sentiment from sentence classifications.

use std::io::{Read, Write};

use chrono::NaiveDateTime;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::classifier::{ClassifierModel, Label};
use super::features::split_sentences;
use crate::error::{Result, SsvError};

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%d %H:%M:%S";

/// Accepts `YYYY-MM-DD HH:MM[:SS]` with a space or `T` separator.
pub fn parse_timestamp(s: &str) -> Result<NaiveDateTime> {
    let s = s.trim();
    for fmt in [
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%d %H:%M",
        "%Y-%m-%dT%H:%M",
    ] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Ok(t);
        }
    }
    Err(SsvError::Data(format!("unparseable timestamp `{s}`")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentScore {
    pub doc_id: String,
    pub timestamp: NaiveDateTime,
    pub b_score: f64,
    pub n_sentences: usize,
    pub n_pos: usize,
    pub n_neg: usize,
}

/// `ln(1 + n_pos/n) − ln(1 + n_neg/n)`, bounded by `±ln 2`.
pub fn score_from_counts(n: usize, n_pos: usize, n_neg: usize) -> Result<f64> {
    if n == 0 {
        return Err(SsvError::Data("document has no sentences".into()));
    }
    if n_pos + n_neg > n {
        return Err(SsvError::Data(format!(
            "{n_pos} positive + {n_neg} negative exceeds {n} sentences"
        )));
    }
    let n = n as f64;
    Ok((n_pos as f64 / n).ln_1p() - (n_neg as f64 / n).ln_1p())
}

pub fn score_labels(doc_id: &str, timestamp: NaiveDateTime, labels: &[Label]) -> Result<DocumentScore> {
    let n_pos = labels.iter().filter(|l| **l == Label::Positive).count();
    let n_neg = labels.iter().filter(|l| **l == Label::Negative).count();
    let b_score = score_from_counts(labels.len(), n_pos, n_neg)
        .map_err(|e| SsvError::Data(format!("document `{doc_id}`: {e}")))?;
    Ok(DocumentScore {
        doc_id: doc_id.to_string(),
        timestamp,
        b_score,
        n_sentences: labels.len(),
        n_pos,
        n_neg,
    })
}

/// Labels of the sentences of `text`; sentences without any word token are
/// not counted.
pub fn classify_sentences(model: &ClassifierModel, text: &str) -> Vec<Label> {
    split_sentences(text)
        .into_iter()
        .map(super::features::tokenize)
        .filter(|t| !t.is_empty())
        .map(|t| model.predict_tokens(&t))
        .collect()
}

pub fn score_document(
    model: &ClassifierModel,
    doc_id: &str,
    timestamp: NaiveDateTime,
    text: &str,
) -> Result<DocumentScore> {
    score_labels(doc_id, timestamp, &classify_sentences(model, text))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewsItem {
    pub doc_id: String,
    pub timestamp: String,
    pub text: String,
}

/// Reads a `doc_id,timestamp,text` CSV with a header row.
pub fn read_news<R: Read>(input: R) -> Result<Vec<NewsItem>> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for rec in rdr.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}

/// Scores every item in parallel; output order follows input order.
pub fn score_news(model: &ClassifierModel, items: &[NewsItem]) -> Result<Vec<DocumentScore>> {
    items
        .par_iter()
        .enumerate()
        .map(|(k, it)| {
            let ts = parse_timestamp(&it.timestamp).map_err(|e| SsvError::Data(format!("row {}: {e}", k + 2)))?;
            score_document(model, &it.doc_id, ts, &it.text)
        })
        .collect()
}

pub const SCORE_HEADER: [&str; 6] = ["doc_id", "timestamp", "b_score", "n_sentences", "n_pos", "n_neg"];

pub fn write_scores<W: Write>(scores: &[DocumentScore], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SCORE_HEADER)?;
    for s in scores {
        w.write_record([
            s.doc_id.clone(),
            s.timestamp.format(TIMESTAMP_FORMAT).to_string(),
            s.b_score.to_string(),
            s.n_sentences.to_string(),
            s.n_pos.to_string(),
            s.n_neg.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_scores<R: Read>(input: R) -> Result<Vec<DocumentScore>> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers()?.clone();
    if headers.iter().ne(SCORE_HEADER) {
        return Err(SsvError::Data(format!("expected header {}", SCORE_HEADER.join(","))));
    }
    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = k + 2;
        let num = |i: usize| -> Result<usize> {
            rec[i]
                .trim()
                .parse()
                .map_err(|_| SsvError::Data(format!("row {row}: bad count `{}`", &rec[i])))
        };
        let b_score: f64 = rec[2]
            .trim()
            .parse()
            .map_err(|_| SsvError::Data(format!("row {row}: bad score `{}`", &rec[2])))?;
        if !b_score.is_finite() {
            return Err(SsvError::Data(format!("row {row}: non-finite score")));
        }
        out.push(DocumentScore {
            doc_id: rec[0].to_string(),
            timestamp: parse_timestamp(&rec[1]).map_err(|e| SsvError::Data(format!("row {row}: {e}")))?,
            b_score,
            n_sentences: num(3)?,
            n_pos: num(4)?,
            n_neg: num(5)?,
        });
    }
    Ok(out)
}
