//! The cheap first-stage filter: TF-IDF features and a linear max-margin
//! classifier flagging chunks that may be abusive.

mod tfidf;

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chunker::Chunk;
pub use tfidf::{features, fit_tfidf, SparseVector, TermStats, TfidfConfig, TfidfVocabulary};

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error("cannot fit TF-IDF on an empty corpus")]
    EmptyCorpus,
    #[error("training data contains a single class")]
    SingleClass,
    #[error("weight dimension {weights} does not match vocabulary size {vocab}")]
    DimensionMismatch { weights: usize, vocab: usize },
    #[error("invalid hyper-parameter: {0}")]
    InvalidHyper(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("model file: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Inverse regularization strength; the SGD objective uses `lambda = 1 / (C * n)`.
    pub c: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Loss weight of abusive examples relative to ok examples.
    pub abusive_weight: f64,
    pub tfidf: TfidfConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { c: 1.0, epochs: 20, seed: 0, abusive_weight: 1.0, tfidf: TfidfConfig::default() }
    }
}

/// Grid searched by [`cross_validate`].
pub const C_GRID: [f64; 5] = [0.01, 0.1, 1.0, 10.0, 100.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearDetector {
    #[serde(rename = "vocab")]
    pub vocabulary: TfidfVocabulary,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub threshold: f64,
    pub config: TrainConfig,
}

/// One scored chunk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub chunk: Chunk,
    pub score: f64,
    pub flagged: bool,
}

impl LinearDetector {
    pub fn new(
        vocabulary: TfidfVocabulary,
        weights: Vec<f64>,
        bias: f64,
        config: TrainConfig,
    ) -> Result<Self, DetectorError> {
        if weights.len() != vocabulary.len() {
            return Err(DetectorError::DimensionMismatch { weights: weights.len(), vocab: vocabulary.len() });
        }
        Ok(Self { vocabulary, weights, bias, threshold: 0.0, config })
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }

    /// Signed distance-like decision value `w·x + b`.
    pub fn score(&self, text: &str) -> f64 {
        dot(&self.weights, &self.vocabulary.transform(text)) + self.bias
    }

    pub fn is_flagged(&self, score: f64) -> bool {
        score > self.threshold
    }

    /// Scores chunks in order; a chunk is flagged iff its score exceeds the threshold.
    pub fn detect(&self, chunks: &[Chunk]) -> Vec<Detection> {
        chunks
            .iter()
            .map(|chunk| {
                let score = self.score(&chunk.text);
                Detection { chunk: chunk.clone(), score, flagged: self.is_flagged(score) }
            })
            .collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DetectorError> {
        let w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(w, self)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DetectorError> {
        let model: LinearDetector = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        if model.weights.len() != model.vocabulary.len() {
            return Err(DetectorError::DimensionMismatch {
                weights: model.weights.len(),
                vocab: model.vocabulary.len(),
            });
        }
        Ok(model)
    }
}

fn dot(weights: &[f64], x: &SparseVector) -> f64 {
    x.iter().map(|&(i, v)| weights[i] * v).sum()
}

/// Trains a detector on `(text, is_abusive)` pairs.
pub fn train_detector<S: AsRef<str>>(
    data: &[(S, bool)],
    config: TrainConfig,
) -> Result<LinearDetector, DetectorError> {
    validate(data, &config)?;
    let texts: Vec<&str> = data.iter().map(|(t, _)| t.as_ref()).collect();
    let vocabulary = fit_tfidf(&texts, config.tfidf)?;
    let xs: Vec<SparseVector> = texts.iter().map(|t| vocabulary.transform(t)).collect();
    let ys: Vec<bool> = data.iter().map(|(_, y)| *y).collect();
    let (weights, bias) = pegasos(&xs, &ys, vocabulary.len(), &config);
    LinearDetector::new(vocabulary, weights, bias, config)
}

fn validate<S>(data: &[(S, bool)], config: &TrainConfig) -> Result<(), DetectorError> {
    if data.is_empty() {
        return Err(DetectorError::EmptyCorpus);
    }
    let positives = data.iter().filter(|(_, y)| *y).count();
    if positives == 0 || positives == data.len() {
        return Err(DetectorError::SingleClass);
    }
    if !(config.c.is_finite() && config.c > 0.0) {
        return Err(DetectorError::InvalidHyper(format!("C must be positive, got {}", config.c)));
    }
    if config.epochs == 0 {
        return Err(DetectorError::InvalidHyper("epochs must be at least 1".into()));
    }
    Ok(())
}

/// Stochastic subgradient descent on the L2-regularized hinge loss.
///
/// The bias is learned as the weight of a constant feature. Weights are kept
/// as `scale * v` so the shrinkage step costs O(1) instead of O(|vocab|).
fn pegasos(xs: &[SparseVector], ys: &[bool], dim: usize, config: &TrainConfig) -> (Vec<f64>, f64) {
    let n = xs.len();
    let lambda = 1.0 / (config.c * n as f64);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut v = vec![0.0f64; dim];
    let mut v_bias = 0.0f64;
    let mut scale = 1.0f64;
    let mut order: Vec<usize> = (0..n).collect();
    let mut t: u64 = 0;

    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            let y = if ys[i] { 1.0 } else { -1.0 };
            let margin = y * scale * (dot(&v, &xs[i]) + v_bias);

            let shrink = 1.0 - eta * lambda;
            if shrink <= 0.0 {
                v.iter_mut().for_each(|w| *w = 0.0);
                v_bias = 0.0;
                scale = 1.0;
            } else {
                scale *= shrink;
            }
            if margin < 1.0 {
                let weight = if ys[i] { config.abusive_weight } else { 1.0 };
                let step = eta * weight * y / scale;
                for &(j, x) in &xs[i] {
                    v[j] += step * x;
                }
                v_bias += step;
            }
            if scale < 1e-9 {
                v.iter_mut().for_each(|w| *w *= scale);
                v_bias *= scale;
                scale = 1.0;
            }
        }
    }
    v.iter_mut().for_each(|w| *w *= scale);
    (v, v_bias * scale)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvResult {
    pub c: f64,
    pub mean_f1: f64,
    pub fold_f1: Vec<f64>,
}

/// k-fold cross-validation of C over `grid`, scored by abusive-class F1.
/// Returns per-C results and the best C (smallest C on ties).
pub fn cross_validate<S: AsRef<str>>(
    data: &[(S, bool)],
    base: TrainConfig,
    grid: &[f64],
    folds: usize,
) -> Result<(Vec<CvResult>, f64), DetectorError> {
    validate(data, &base)?;
    if folds < 2 || folds > data.len() {
        return Err(DetectorError::InvalidHyper(format!("folds must be in 2..={}", data.len())));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(base.seed));
    // Stratified fold assignment: deal positives and negatives round-robin.
    let mut fold_of = vec![0usize; data.len()];
    let (mut pos_k, mut neg_k) = (0, 0);
    for &i in &order {
        if data[i].1 {
            fold_of[i] = pos_k % folds;
            pos_k += 1;
        } else {
            fold_of[i] = neg_k % folds;
            neg_k += 1;
        }
    }

    let mut results = Vec::with_capacity(grid.len());
    for &c in grid {
        let config = TrainConfig { c, ..base };
        let mut fold_f1 = Vec::with_capacity(folds);
        for k in 0..folds {
            let train: Vec<(&str, bool)> = (0..data.len())
                .filter(|&i| fold_of[i] != k)
                .map(|i| (data[i].0.as_ref(), data[i].1))
                .collect();
            let held: Vec<(&str, bool)> = (0..data.len())
                .filter(|&i| fold_of[i] == k)
                .map(|i| (data[i].0.as_ref(), data[i].1))
                .collect();
            let f1 = match train_detector(&train, config) {
                Ok(model) => positive_f1(&model, &held),
                Err(DetectorError::SingleClass) => 0.0,
                Err(e) => return Err(e),
            };
            fold_f1.push(f1);
        }
        let mean_f1 = fold_f1.iter().sum::<f64>() / folds as f64;
        results.push(CvResult { c, mean_f1, fold_f1 });
    }
    let best = results
        .iter()
        .fold(None::<&CvResult>, |best, r| match best {
            Some(b) if b.mean_f1 >= r.mean_f1 => Some(b),
            _ => Some(r),
        })
        .map(|r| r.c)
        .unwrap_or(base.c);
    Ok((results, best))
}

/// F1 of the abusive class on labelled texts.
pub fn positive_f1<S: AsRef<str>>(model: &LinearDetector, data: &[(S, bool)]) -> f64 {
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (text, gold) in data {
        let pred = model.is_flagged(model.score(text.as_ref()));
        match (pred, *gold) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}
