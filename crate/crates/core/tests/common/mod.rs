//! Fixtures shared by the integration tests.
#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ssv_core::sentiment::{Label, SentenceExample};

const POSITIVE: &[&str] = &[
    "surged", "beat", "upgrade", "record", "growth", "rally", "strong", "profit", "gains", "raised",
];
const NEGATIVE: &[&str] = &[
    "plunged",
    "missed",
    "downgrade",
    "losses",
    "weak",
    "lawsuit",
    "cut",
    "default",
    "slump",
    "warning",
];
const NEUTRAL: &[&str] = &[
    "scheduled",
    "announced",
    "meeting",
    "filed",
    "annual",
    "report",
    "located",
    "appointed",
    "held",
    "listed",
];
const FILLER: &[&str] = &[
    "the", "company", "shares", "quarter", "said", "on", "its", "stock", "market", "in", "of", "today",
];

/// Sentences whose class is carried by disjoint keyword sets, padded with
/// shared filler words, cycling through the three classes.
pub fn synthetic_sentences(n: usize, seed: u64) -> Vec<(String, Label)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let label = Label::ALL[i % 3];
            let keys = match label {
                Label::Positive => POSITIVE,
                Label::Negative => NEGATIVE,
                Label::Neutral => NEUTRAL,
            };
            let mut words: Vec<&str> = (0..rng.gen_range(2..=4))
                .map(|_| *keys.choose(&mut rng).unwrap())
                .collect();
            words.extend((0..rng.gen_range(3..=6)).map(|_| *FILLER.choose(&mut rng).unwrap()));
            words.shuffle(&mut rng);
            (words.join(" "), label)
        })
        .collect()
}

pub fn synthetic_examples(n: usize, seed: u64) -> Vec<SentenceExample> {
    synthetic_sentences(n, seed)
        .into_iter()
        .map(|(t, l)| SentenceExample::from_text(&t, l).unwrap())
        .collect()
}

pub fn labeled_csv(n: usize, seed: u64) -> String {
    let mut out = String::from("sentence,label\n");
    for (text, label) in synthetic_sentences(n, seed) {
        let name = match label {
            Label::Positive => "positive",
            Label::Negative => "negative",
            Label::Neutral => "neutral",
        };
        out.push_str(&format!("{text},{name}\n"));
    }
    out
}

/// A few days of news, including items outside the trading session.
pub fn news_csv(seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::from("doc_id,timestamp,text\n");
    let days = ["2015-03-02", "2015-03-03", "2015-03-04"];
    for k in 0..60 {
        let day = days[k % days.len()];
        let (h, m) = (rng.gen_range(8..18), rng.gen_range(0..60));
        let body: Vec<String> = synthetic_sentences(rng.gen_range(1..5), rng.gen())
            .into_iter()
            .map(|(t, _)| format!("{t}."))
            .collect();
        out.push_str(&format!("d{k},{day} {h:02}:{m:02}:00,\"{}\"\n", body.join(" ")));
    }
    out
}
