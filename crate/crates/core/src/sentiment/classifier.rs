//! Regularized linear sentence classifier trained by stochastic gradient
//! descent, one binary model per class (one-vs-rest).

use std::io::{BufRead, Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::features::{FeatureHasher, SparseVector};
use crate::error::{Result, SsvError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Negative,
    Neutral,
    Positive,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Negative, Label::Neutral, Label::Positive];

    pub fn value(self) -> i8 {
        match self {
            Label::Negative => -1,
            Label::Neutral => 0,
            Label::Positive => 1,
        }
    }

    pub fn negated(self) -> Label {
        match self {
            Label::Negative => Label::Positive,
            Label::Neutral => Label::Neutral,
            Label::Positive => Label::Negative,
        }
    }
}

impl FromStr for Label {
    type Err = SsvError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "negative" | "neg" | "-1" => Ok(Label::Negative),
            "neutral" | "neu" | "0" => Ok(Label::Neutral),
            "positive" | "pos" | "1" | "+1" => Ok(Label::Positive),
            other => Err(SsvError::Classifier(format!("unknown label `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceExample {
    pub tokens: Vec<String>,
    pub label: Label,
}

impl SentenceExample {
    pub fn new(tokens: Vec<String>, label: Label) -> Result<Self> {
        if tokens.is_empty() {
            return Err(SsvError::Classifier("sentence has no tokens".into()));
        }
        Ok(SentenceExample { tokens, label })
    }

    pub fn from_text(text: &str, label: Label) -> Result<Self> {
        Self::new(super::features::tokenize(text), label)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    #[default]
    Hinge,
    /// `ln(1 + e^{-ys})`.
    Logistic,
    /// `(y - s)²`.
    Squared,
}

impl Loss {
    pub fn value(self, y: f64, s: f64) -> f64 {
        match self {
            Loss::Hinge => (1.0 - y * s).max(0.0),
            Loss::Logistic => softplus(-y * s),
            Loss::Squared => (y - s) * (y - s),
        }
    }

    /// Derivative with respect to the score; at the hinge kink the zero
    /// subgradient is used.
    pub fn derivative(self, y: f64, s: f64) -> f64 {
        match self {
            Loss::Hinge => {
                if y * s < 1.0 {
                    -y
                } else {
                    0.0
                }
            }
            Loss::Logistic => -y / (1.0 + (y * s).exp()),
            Loss::Squared => -2.0 * (y - s),
        }
    }
}

fn softplus(u: f64) -> f64 {
    if u > 0.0 {
        u + (-u).exp().ln_1p()
    } else {
        u.exp().ln_1p()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regularizer {
    /// `Σ|w|`.
    #[default]
    L1,
    /// `p⁻¹ Σ w²` with `p` the feature dimension.
    L2,
}

impl Regularizer {
    pub fn value(self, w: &[f64]) -> f64 {
        match self {
            Regularizer::L1 => w.iter().map(|x| x.abs()).sum(),
            Regularizer::L2 => w.iter().map(|x| x * x).sum::<f64>() / w.len() as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub loss: Loss,
    pub regularizer: Regularizer,
    pub lambda: f64,
    pub epochs: usize,
    /// Initial step; `None` picks it with a short pilot run.
    pub eta0: Option<f64>,
    pub seed: u64,
    pub feature_bits: u32,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            loss: Loss::Hinge,
            regularizer: Regularizer::L1,
            lambda: 1e-4,
            epochs: 10,
            eta0: None,
            seed: 1,
            feature_bits: 18,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(SsvError::Classifier(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if self.epochs < 1 {
            return Err(SsvError::Classifier("epochs must be >= 1".into()));
        }
        if !(1..=30).contains(&self.feature_bits) {
            return Err(SsvError::Classifier("feature_bits must lie in 1..=30".into()));
        }
        if let Some(e) = self.eta0 {
            if !(e > 0.0 && e.is_finite()) {
                return Err(SsvError::Classifier("eta0 must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Linear scorer `s(x) = wᵀx + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl BinaryModel {
    pub fn zeros(dim: usize) -> Self {
        BinaryModel {
            weights: vec![0.0; dim],
            bias: 0.0,
        }
    }

    pub fn score(&self, x: &SparseVector) -> f64 {
        x.dot(&self.weights) + self.bias
    }

    /// Regularized training error `n⁻¹ Σ L(y, s(x)) + λ R(w)`.
    pub fn objective(&self, data: &[(&SparseVector, f64)], loss: Loss, reg: Regularizer, lambda: f64) -> f64 {
        let n = data.len() as f64;
        data.iter().map(|(x, y)| loss.value(*y, self.score(x))).sum::<f64>() / n + lambda * reg.value(&self.weights)
    }

    pub fn nonzero(&self) -> usize {
        self.weights.iter().filter(|w| **w != 0.0).count()
    }
}

/// Gradient of the single-sample objective `L(y, s(x)) + λ R(w)` in
/// `(w, b)`. For L1 the sign subgradient is used (zero at `w_i = 0`).
pub fn sample_gradient(
    model: &BinaryModel,
    x: &SparseVector,
    y: f64,
    loss: Loss,
    reg: Regularizer,
    lambda: f64,
) -> (Vec<f64>, f64) {
    let p = model.weights.len() as f64;
    let mut g: Vec<f64> = match reg {
        Regularizer::L1 => model.weights.iter().map(|w| lambda * sign(*w)).collect(),
        Regularizer::L2 => model.weights.iter().map(|w| 2.0 * lambda * w / p).collect(),
    };
    let d = loss.derivative(y, model.score(x));
    for (&i, &v) in x.indices.iter().zip(&x.values) {
        g[i as usize] += d * v;
    }
    (g, d)
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// SGD state for one binary problem. L2 keeps `w = scale · v` so the
/// shrinkage step is O(1); L1 uses cumulative-penalty truncation so that
/// weights can land exactly on zero.
struct Sgd {
    v: Vec<f64>,
    scale: f64,
    bias: f64,
    /// L1: penalty applied so far to each weight, and the total available.
    applied: Vec<f64>,
    total_penalty: f64,
    t: u64,
}

impl Sgd {
    fn new(dim: usize, reg: Regularizer) -> Self {
        Sgd {
            v: vec![0.0; dim],
            scale: 1.0,
            bias: 0.0,
            applied: if reg == Regularizer::L1 {
                vec![0.0; dim]
            } else {
                Vec::new()
            },
            total_penalty: 0.0,
            t: 0,
        }
    }

    fn eta(&self, eta0: f64, lambda: f64) -> f64 {
        eta0 / (1.0 + eta0 * lambda * self.t as f64)
    }

    fn step(&mut self, x: &SparseVector, y: f64, cfg: &TrainConfig, eta0: f64) {
        let eta = self.eta(eta0, cfg.lambda);
        let s = self.scale * x.dot(&self.v) + self.bias;
        let d = cfg.loss.derivative(y, s);
        match cfg.regularizer {
            Regularizer::L2 => {
                let p = self.v.len() as f64;
                let shrink = 1.0 - 2.0 * eta * cfg.lambda / p;
                if shrink <= 0.0 {
                    self.v.iter_mut().for_each(|w| *w = 0.0);
                    self.scale = 1.0;
                } else {
                    self.scale *= shrink;
                }
                if d != 0.0 {
                    for (&i, &xv) in x.indices.iter().zip(&x.values) {
                        self.v[i as usize] -= eta * d * xv / self.scale;
                    }
                }
                if self.scale < 1e-9 {
                    self.v.iter_mut().for_each(|w| *w *= self.scale);
                    self.scale = 1.0;
                }
            }
            Regularizer::L1 => {
                if d != 0.0 {
                    for (&i, &xv) in x.indices.iter().zip(&x.values) {
                        self.v[i as usize] -= eta * d * xv;
                    }
                }
                self.total_penalty += eta * cfg.lambda;
                for &i in &x.indices {
                    self.truncate(i as usize);
                }
            }
        }
        self.bias -= eta * d;
        self.t += 1;
    }

    fn truncate(&mut self, i: usize) {
        let w = self.v[i];
        let u = self.total_penalty;
        let q = self.applied[i];
        let clipped = if w > 0.0 {
            (w - (u + q)).max(0.0)
        } else if w < 0.0 {
            (w + (u - q)).min(0.0)
        } else {
            0.0
        };
        self.applied[i] += clipped - w;
        self.v[i] = clipped;
    }

    fn finish(mut self) -> BinaryModel {
        if !self.applied.is_empty() {
            // Settle the penalty owed by weights not touched since it accrued.
            for i in 0..self.v.len() {
                if self.v[i] != 0.0 {
                    self.truncate(i);
                }
            }
        }
        BinaryModel {
            weights: self.v.iter().map(|w| w * self.scale).collect(),
            bias: self.bias,
        }
    }
}

fn train_binary(
    xs: &[&SparseVector],
    ys: &[f64],
    order: &[Vec<usize>],
    dim: usize,
    cfg: &TrainConfig,
    eta0: f64,
) -> BinaryModel {
    let mut sgd = Sgd::new(dim, cfg.regularizer);
    for epoch in order {
        for &j in epoch {
            sgd.step(xs[j], ys[j], cfg, eta0);
        }
    }
    sgd.finish()
}

const PILOT_STEPS: [f64; 5] = [1.0, 0.3, 0.1, 0.03, 0.01];
const PILOT_SIZE: usize = 500;

/// Picks the candidate step with the lowest objective after one pass over
/// a subsample.
fn pilot_eta(xs: &[&SparseVector], ys: &[f64], order: &[usize], dim: usize, cfg: &TrainConfig) -> f64 {
    let sub: Vec<usize> = order.iter().copied().take(PILOT_SIZE).collect();
    let data: Vec<(&SparseVector, f64)> = sub.iter().map(|&j| (xs[j], ys[j])).collect();
    let mut best = (f64::INFINITY, PILOT_STEPS[0]);
    for &eta in &PILOT_STEPS {
        let m = train_binary(xs, ys, std::slice::from_ref(&sub), dim, cfg, eta);
        let obj = m.objective(&data, cfg.loss, cfg.regularizer, cfg.lambda);
        if obj < best.0 {
            best = (obj, eta);
        }
    }
    best.1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassHeader {
    pub label: Label,
    pub bias: f64,
    pub eta0: f64,
}

/// Three one-vs-rest scorers over a hashed feature space.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    pub config: TrainConfig,
    pub hasher: FeatureHasher,
    /// Indexed by [`Label::ALL`] order.
    pub models: [BinaryModel; 3],
    pub eta0: [f64; 3],
}

impl ClassifierModel {
    pub fn scores(&self, x: &SparseVector) -> [f64; 3] {
        [
            self.models[0].score(x),
            self.models[1].score(x),
            self.models[2].score(x),
        ]
    }

    /// Argmax of the class scores; any tie goes to neutral.
    pub fn predict_features(&self, x: &SparseVector) -> Label {
        let s = self.scores(x);
        let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let winners: Vec<usize> = (0..3).filter(|&k| s[k] == max).collect();
        if winners.len() == 1 {
            Label::ALL[winners[0]]
        } else {
            Label::Neutral
        }
    }

    pub fn predict_tokens(&self, tokens: &[String]) -> Label {
        self.predict_features(&self.hasher.transform(tokens))
    }

    pub fn predict(&self, text: &str) -> Label {
        self.predict_features(&self.hasher.transform_text(text))
    }

    pub fn accuracy(&self, xs: &[SparseVector], labels: &[Label]) -> f64 {
        let hits = xs
            .iter()
            .zip(labels)
            .filter(|(x, y)| self.predict_features(x) == **y)
            .count();
        hits as f64 / xs.len() as f64
    }

    const MAGIC: &'static str = "SSV-CLASSIFIER v1";

    /// Magic line, one JSON header line, then the weights of the three
    /// class models as little-endian `f64`.
    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        #[derive(Serialize)]
        struct Header<'a> {
            config: &'a TrainConfig,
            feature_bits: u32,
            classes: Vec<ClassHeader>,
        }
        let header = Header {
            config: &self.config,
            feature_bits: self.hasher.bits,
            classes: (0..3)
                .map(|k| ClassHeader {
                    label: Label::ALL[k],
                    bias: self.models[k].bias,
                    eta0: self.eta0[k],
                })
                .collect(),
        };
        writeln!(out, "{}", Self::MAGIC)?;
        serde_json::to_writer(&mut out, &header)?;
        writeln!(out)?;
        let mut buf = Vec::with_capacity(8 * self.hasher.dim());
        for m in &self.models {
            buf.clear();
            for w in &m.weights {
                buf.extend_from_slice(&w.to_le_bytes());
            }
            out.write_all(&buf)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read<R: BufRead>(mut input: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Header {
            config: TrainConfig,
            feature_bits: u32,
            classes: Vec<ClassHeader>,
        }
        let mut line = String::new();
        input.read_line(&mut line)?;
        if line.trim_end() != Self::MAGIC {
            return Err(SsvError::Classifier("not a classifier model file".into()));
        }
        line.clear();
        input.read_line(&mut line)?;
        let header: Header = serde_json::from_str(&line)?;
        if !(1..=30).contains(&header.feature_bits) || header.classes.len() != 3 {
            return Err(SsvError::Classifier("malformed model header".into()));
        }
        let hasher = FeatureHasher::new(header.feature_bits);
        let dim = hasher.dim();
        let mut bytes = vec![0u8; 8 * dim];
        let mut models = Vec::with_capacity(3);
        for (k, c) in header.classes.iter().enumerate() {
            if c.label != Label::ALL[k] {
                return Err(SsvError::Classifier("class order in model header".into()));
            }
            input
                .read_exact(&mut bytes)
                .map_err(|e| SsvError::Classifier(format!("truncated weight block: {e}")))?;
            let weights = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            models.push(BinaryModel { weights, bias: c.bias });
        }
        let mut rest = Vec::new();
        input.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(SsvError::Classifier("trailing bytes after weight block".into()));
        }
        let models: [BinaryModel; 3] = models.try_into().expect("three class models");
        Ok(ClassifierModel {
            config: header.config,
            hasher,
            models,
            eta0: [header.classes[0].eta0, header.classes[1].eta0, header.classes[2].eta0],
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

/// Trains on pre-hashed features.
pub fn train_features(xs: &[SparseVector], labels: &[Label], cfg: &TrainConfig) -> Result<ClassifierModel> {
    cfg.validate()?;
    if xs.len() != labels.len() {
        return Err(SsvError::Classifier("features and labels differ in length".into()));
    }
    let distinct = Label::ALL.iter().filter(|l| labels.contains(l)).count();
    if distinct < 2 {
        return Err(SsvError::Classifier(format!(
            "need at least two classes, found {distinct} in {} examples",
            labels.len()
        )));
    }
    let hasher = FeatureHasher::new(cfg.feature_bits);
    let dim = hasher.dim();
    if let Some(bad) = xs.iter().flat_map(|x| &x.indices).find(|&&i| i as usize >= dim) {
        return Err(SsvError::Classifier(format!(
            "feature index {bad} outside dimension {dim}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let order: Vec<Vec<usize>> = (0..cfg.epochs)
        .map(|_| {
            let mut o: Vec<usize> = (0..xs.len()).collect();
            o.shuffle(&mut rng);
            o
        })
        .collect();
    let refs: Vec<&SparseVector> = xs.iter().collect();
    let fitted: Vec<(BinaryModel, f64)> = Label::ALL
        .par_iter()
        .map(|&class| {
            let ys: Vec<f64> = labels.iter().map(|&l| if l == class { 1.0 } else { -1.0 }).collect();
            let eta0 = cfg.eta0.unwrap_or_else(|| pilot_eta(&refs, &ys, &order[0], dim, cfg));
            (train_binary(&refs, &ys, &order, dim, cfg, eta0), eta0)
        })
        .collect();
    let mut it = fitted.into_iter();
    let mut next = || it.next().expect("three class models");
    let (a, b, c) = (next(), next(), next());
    Ok(ClassifierModel {
        config: cfg.clone(),
        hasher,
        eta0: [a.1, b.1, c.1],
        models: [a.0, b.0, c.0],
    })
}

pub fn train(examples: &[SentenceExample], cfg: &TrainConfig) -> Result<ClassifierModel> {
    cfg.validate()?;
    let hasher = FeatureHasher::new(cfg.feature_bits);
    let xs: Vec<SparseVector> = examples.iter().map(|e| hasher.transform(&e.tokens)).collect();
    let labels: Vec<Label> = examples.iter().map(|e| e.label).collect();
    train_features(&xs, &labels, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaScore {
    pub lambda: f64,
    pub fold_accuracies: Vec<f64>,
    pub mean_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub best_lambda: f64,
    pub best_accuracy: f64,
    pub folds: usize,
    pub scores: Vec<LambdaScore>,
}

/// Stratified fold assignment: each class is shuffled with `seed` and dealt
/// round-robin into `folds` subsets.
pub fn fold_assignment(labels: &[Label], folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(SsvError::Classifier("need at least 2 folds".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold = vec![0; labels.len()];
    for class in Label::ALL {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&j| labels[j] == class).collect();
        if !idx.is_empty() && idx.len() < folds {
            return Err(SsvError::Classifier(format!(
                "class {class:?} has {} examples, fewer than {folds} folds",
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        for (k, j) in idx.into_iter().enumerate() {
            fold[j] = k % folds;
        }
    }
    Ok(fold)
}

/// K-fold cross-validation over a grid of penalties. The best mean accuracy
/// wins; ties go to the larger penalty.
pub fn cross_validate(
    examples: &[SentenceExample],
    lambdas: &[f64],
    folds: usize,
    cfg: &TrainConfig,
) -> Result<CvReport> {
    cfg.validate()?;
    if lambdas.is_empty() {
        return Err(SsvError::Classifier("empty lambda grid".into()));
    }
    let hasher = FeatureHasher::new(cfg.feature_bits);
    let xs: Vec<SparseVector> = examples.iter().map(|e| hasher.transform(&e.tokens)).collect();
    let labels: Vec<Label> = examples.iter().map(|e| e.label).collect();
    let fold = fold_assignment(&labels, folds, cfg.seed)?;
    let mut scores = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let c = TrainConfig { lambda, ..cfg.clone() };
        c.validate()?;
        let fold_accuracies = (0..folds)
            .into_par_iter()
            .map(|k| {
                let (mut tx, mut ty, mut vx, mut vy) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
                for j in 0..xs.len() {
                    if fold[j] == k {
                        vx.push(xs[j].clone());
                        vy.push(labels[j]);
                    } else {
                        tx.push(xs[j].clone());
                        ty.push(labels[j]);
                    }
                }
                train_features(&tx, &ty, &c).map(|m| m.accuracy(&vx, &vy))
            })
            .collect::<Result<Vec<f64>>>()?;
        let mean_accuracy = fold_accuracies.iter().sum::<f64>() / folds as f64;
        scores.push(LambdaScore {
            lambda,
            fold_accuracies,
            mean_accuracy,
        });
    }
    let best = scores
        .iter()
        .max_by(|a, b| {
            a.mean_accuracy
                .total_cmp(&b.mean_accuracy)
                .then(a.lambda.total_cmp(&b.lambda))
        })
        .expect("non-empty grid");
    Ok(CvReport {
        best_lambda: best.lambda,
        best_accuracy: best.mean_accuracy,
        folds,
        scores,
    })
}

/// Reads `sentence<delim>label` lines. Comma and tab files are parsed as
/// CSV (quoted sentences allowed, an optional `sentence,label` header is
/// skipped); any other delimiter splits each line at its last occurrence.
/// Invalid UTF-8 is replaced rather than rejected.
pub fn read_labeled<R: Read>(mut input: R, delimiter: char) -> Result<Vec<SentenceExample>> {
    let mut raw = Vec::new();
    input.read_to_end(&mut raw)?;
    let text = String::from_utf8_lossy(&raw);
    let mut rows: Vec<(usize, String, String)> = Vec::new();
    if delimiter == ',' || delimiter == '\t' {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .delimiter(delimiter as u8)
            .from_reader(text.as_bytes());
        for (k, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != 2 {
                return Err(SsvError::Data(format!(
                    "line {}: expected 2 fields, got {}",
                    k + 1,
                    rec.len()
                )));
            }
            rows.push((k + 1, rec[0].to_string(), rec[1].to_string()));
        }
    } else {
        for (k, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (s, l) = line
                .rsplit_once(delimiter)
                .ok_or_else(|| SsvError::Data(format!("line {}: missing `{delimiter}` delimiter", k + 1)))?;
            rows.push((k + 1, s.to_string(), l.to_string()));
        }
    }
    let mut out = Vec::with_capacity(rows.len());
    for (i, (line, sentence, label)) in rows.into_iter().enumerate() {
        if i == 0 && label.trim().eq_ignore_ascii_case("label") {
            continue;
        }
        let label: Label = label.parse().map_err(|e| SsvError::Data(format!("line {line}: {e}")))?;
        let ex =
            SentenceExample::from_text(&sentence, label).map_err(|e| SsvError::Data(format!("line {line}: {e}")))?;
        out.push(ex);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    /// Sentences built from class-specific vocabularies plus shared filler.
    pub(crate) fn synthetic(n: usize, seed: u64) -> Vec<SentenceExample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vocab = [
            ["loss", "decline", "weak", "cut", "miss", "drop"],
            ["report", "meeting", "scheduled", "announce", "update", "filing"],
            ["gain", "surge", "strong", "beat", "record", "growth"],
        ];
        let filler = ["the", "company", "said", "quarter", "shares", "market", "today", "its"];
        (0..n)
            .map(|j| {
                let k = j % 3;
                let mut tokens: Vec<String> = (0..6)
                    .map(|_| filler[rng.gen_range(0..filler.len())].to_string())
                    .collect();
                for _ in 0..2 {
                    let w = vocab[k][rng.gen_range(0..vocab[k].len())];
                    tokens.insert(rng.gen_range(0..=tokens.len()), w.to_string());
                }
                SentenceExample::new(tokens, Label::ALL[k]).unwrap()
            })
            .collect()
    }

    fn small(loss: Loss, reg: Regularizer, lambda: f64) -> TrainConfig {
        TrainConfig {
            loss,
            regularizer: reg,
            lambda,
            feature_bits: 12,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn parses_labels() {
        assert_eq!("Positive".parse::<Label>().unwrap(), Label::Positive);
        assert_eq!(" negative ".parse::<Label>().unwrap(), Label::Negative);
        assert_eq!("0".parse::<Label>().unwrap(), Label::Neutral);
        assert!("bullish".parse::<Label>().is_err());
    }

    #[test]
    fn separable_two_class_fits_perfectly() {
        let data: Vec<SentenceExample> = synthetic(150, 3)
            .into_iter()
            .filter(|e| e.label != Label::Neutral)
            .collect();
        assert_eq!(data.len(), 100);
        let m = train(&data, &small(Loss::Hinge, Regularizer::L1, 1e-4)).unwrap();
        let xs: Vec<SparseVector> = data.iter().map(|e| m.hasher.transform(&e.tokens)).collect();
        let ys: Vec<Label> = data.iter().map(|e| e.label).collect();
        assert_eq!(m.accuracy(&xs, &ys), 1.0);
    }

    #[test]
    fn every_loss_learns_the_synthetic_task() {
        let data = synthetic(300, 4);
        for loss in [Loss::Hinge, Loss::Logistic, Loss::Squared] {
            for reg in [Regularizer::L1, Regularizer::L2] {
                let m = train(&data, &small(loss, reg, 1e-4)).unwrap();
                let hits = data.iter().filter(|e| m.predict_tokens(&e.tokens) == e.label).count();
                assert!(hits >= 285, "{loss:?}/{reg:?}: {hits}/300");
            }
        }
    }

    #[test]
    fn huge_l1_penalty_zeroes_weights_and_predicts_majority() {
        let mut data = synthetic(300, 5);
        // Make positive the majority class (60%).
        for e in data.iter_mut().take(120) {
            if e.label != Label::Positive {
                e.label = Label::Positive;
            }
        }
        let m = train(&data, &small(Loss::Hinge, Regularizer::L1, 10.0)).unwrap();
        assert!(m.models.iter().all(|b| b.nonzero() == 0));
        assert!(data.iter().all(|e| m.predict_tokens(&e.tokens) == Label::Positive));
    }

    #[test]
    fn single_class_is_rejected() {
        let data: Vec<SentenceExample> = synthetic(30, 1)
            .into_iter()
            .filter(|e| e.label == Label::Positive)
            .collect();
        assert!(matches!(
            train(&data, &TrainConfig::default()),
            Err(SsvError::Classifier(_))
        ));
    }

    #[test]
    fn training_is_deterministic() {
        let data = synthetic(200, 6);
        let cfg = small(Loss::Hinge, Regularizer::L1, 1e-3);
        assert_eq!(train(&data, &cfg).unwrap(), train(&data, &cfg).unwrap());
        let other = TrainConfig { seed: 2, ..cfg.clone() };
        assert_ne!(train(&data, &cfg).unwrap(), train(&data, &other).unwrap());
    }

    #[test]
    fn l1_sparsity_is_monotone_in_lambda() {
        let data = synthetic(300, 7);
        let mut last = usize::MAX;
        for lambda in [1e-5, 1e-4, 1e-3, 1e-2, 1e-1] {
            let m = train(&data, &small(Loss::Hinge, Regularizer::L1, lambda)).unwrap();
            let nz: usize = m.models.iter().map(BinaryModel::nonzero).sum();
            assert!(nz <= last, "lambda {lambda}: {nz} > {last}");
            last = nz;
        }
    }

    fn random_model(dim: usize, rng: &mut ChaCha8Rng) -> BinaryModel {
        BinaryModel {
            weights: (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            bias: rng.gen_range(-0.5..0.5),
        }
    }

    fn random_x(dim: usize, rng: &mut ChaCha8Rng) -> SparseVector {
        let mut idx: Vec<u32> = (0..dim as u32).collect();
        idx.shuffle(rng);
        let mut indices: Vec<u32> = idx.into_iter().take(5).collect();
        indices.sort_unstable();
        let values = indices.iter().map(|_| rng.gen_range(-1.0..1.0)).collect();
        SparseVector { indices, values }
    }

    #[test]
    fn gradient_matches_finite_differences_off_the_kinks() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let dim = 16;
        let mut checked = 0;
        for loss in [Loss::Hinge, Loss::Logistic, Loss::Squared] {
            for reg in [Regularizer::L1, Regularizer::L2] {
                for _ in 0..20 {
                    let m = random_model(dim, &mut rng);
                    let x = random_x(dim, &mut rng);
                    let y = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                    let lambda = 0.1;
                    if loss == Loss::Hinge && (1.0 - y * m.score(&x)).abs() < 1e-3 {
                        continue;
                    }
                    let f = |m: &BinaryModel| loss.value(y, m.score(&x)) + lambda * reg.value(&m.weights);
                    let (g, gb) = sample_gradient(&m, &x, y, loss, reg, lambda);
                    let h = 1e-7;
                    for i in 0..dim {
                        let (mut up, mut dn) = (m.clone(), m.clone());
                        up.weights[i] += h;
                        dn.weights[i] -= h;
                        let fd = (f(&up) - f(&dn)) / (2.0 * h);
                        assert!((fd - g[i]).abs() < 1e-6, "{loss:?}/{reg:?} w[{i}]: fd {fd} vs {}", g[i]);
                    }
                    let (mut up, mut dn) = (m.clone(), m.clone());
                    up.bias += h;
                    dn.bias -= h;
                    assert!(((f(&up) - f(&dn)) / (2.0 * h) - gb).abs() < 1e-6);
                    checked += 1;
                }
            }
        }
        assert!(checked > 100);
    }

    #[test]
    fn sgd_step_follows_the_sample_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let dim = 16;
        for loss in [Loss::Hinge, Loss::Logistic, Loss::Squared] {
            let cfg = TrainConfig {
                loss,
                regularizer: Regularizer::L2,
                lambda: 0.3,
                feature_bits: 4,
                ..TrainConfig::default()
            };
            let start = random_model(dim, &mut rng);
            let x = random_x(dim, &mut rng);
            let y = -1.0;
            let mut sgd = Sgd::new(dim, Regularizer::L2);
            sgd.v = start.weights.clone();
            sgd.bias = start.bias;
            let eta = 0.05;
            sgd.step(&x, y, &cfg, eta);
            let after = sgd.finish();
            let (g, gb) = sample_gradient(&start, &x, y, loss, Regularizer::L2, cfg.lambda);
            for i in 0..dim {
                assert!((after.weights[i] - (start.weights[i] - eta * g[i])).abs() < 1e-12);
            }
            assert!((after.bias - (start.bias - eta * gb)).abs() < 1e-12);
        }
    }

    #[test]
    fn ties_go_to_neutral() {
        let hasher = FeatureHasher::new(4);
        let m = ClassifierModel {
            config: TrainConfig::default(),
            hasher,
            models: [BinaryModel::zeros(16), BinaryModel::zeros(16), BinaryModel::zeros(16)],
            eta0: [0.1; 3],
        };
        assert_eq!(m.predict("anything"), Label::Neutral);
        let mut m2 = m.clone();
        m2.models[0].bias = 1.0;
        m2.models[2].bias = 1.0;
        assert_eq!(m2.predict("anything"), Label::Neutral);
        m2.models[2].bias = 1.5;
        assert_eq!(m2.predict("anything"), Label::Positive);
    }

    #[test]
    fn model_file_round_trips() {
        let data = synthetic(90, 8);
        let m = train(&data, &small(Loss::Logistic, Regularizer::L2, 1e-3)).unwrap();
        let mut buf = Vec::new();
        m.write(&mut buf).unwrap();
        assert!(buf.len() - buf.iter().position(|&b| b == b'\n').unwrap() > 3 * 8 * 4096);
        let back = ClassifierModel::read(buf.as_slice()).unwrap();
        assert_eq!(back, m);
        buf.pop();
        assert!(ClassifierModel::read(buf.as_slice()).is_err());
        assert!(ClassifierModel::read(&b"garbage\n"[..]).is_err());
    }

    #[test]
    fn folds_are_stratified_and_starvation_is_an_error() {
        let data = synthetic(300, 9);
        let labels: Vec<Label> = data.iter().map(|e| e.label).collect();
        let fold = fold_assignment(&labels, 5, 1).unwrap();
        for k in 0..5 {
            for c in Label::ALL {
                let n = (0..300).filter(|&j| fold[j] == k && labels[j] == c).count();
                assert_eq!(n, 20);
            }
        }
        let few = [
            Label::Positive,
            Label::Positive,
            Label::Negative,
            Label::Negative,
            Label::Negative,
        ];
        assert!(fold_assignment(&few, 3, 1).is_err());
    }

    #[test]
    fn duplicated_data_gives_equal_fold_accuracy() {
        let one = synthetic(3, 10);
        let data: Vec<SentenceExample> = (0..10).flat_map(|_| one.clone()).collect();
        let r = cross_validate(&data, &[1e-3], 5, &small(Loss::Hinge, Regularizer::L1, 1e-3)).unwrap();
        let f = &r.scores[0].fold_accuracies;
        assert!(f.iter().all(|a| *a == f[0]), "{f:?}");
    }

    #[test]
    fn cv_ties_prefer_larger_lambda() {
        let data = synthetic(150, 12);
        let r = cross_validate(&data, &[1e-4, 1e-2], 5, &small(Loss::Hinge, Regularizer::L1, 0.0)).unwrap();
        let (a, b) = (r.scores[0].mean_accuracy, r.scores[1].mean_accuracy);
        if a == b {
            assert_eq!(r.best_lambda, 1e-2);
        } else {
            assert_eq!(r.best_accuracy, a.max(b));
        }
    }

    #[test]
    fn reads_csv_and_at_delimited_files() {
        let csv = "sentence,label\n\"Profit rose, sharply\",positive\nSales fell,negative\n";
        let ex = read_labeled(csv.as_bytes(), ',').unwrap();
        assert_eq!(ex.len(), 2);
        assert_eq!(ex[0].tokens, ["profit", "rose", "sharply"]);
        let at = "Mail me @ home@neutral\nBad quarter@negative\n";
        let ex = read_labeled(at.as_bytes(), '@').unwrap();
        assert_eq!(ex[0].label, Label::Neutral);
        assert_eq!(ex[0].tokens, ["mail", "me", "home"]);
        assert!(read_labeled("x@maybe\n".as_bytes(), '@').is_err());
        assert!(read_labeled("  @positive\n".as_bytes(), '@').is_err());
    }

    proptest! {
        #[test]
        fn losses_are_nonnegative_and_finite(y in prop::sample::select(vec![-1.0, 1.0]), s in -1e3f64..1e3) {
            for loss in [Loss::Hinge, Loss::Logistic, Loss::Squared] {
                let v = loss.value(y, s);
                prop_assert!(v >= 0.0 && v.is_finite());
                prop_assert!(loss.derivative(y, s).is_finite());
            }
        }
    }
}
