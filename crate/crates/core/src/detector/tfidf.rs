use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::DetectorError;
use crate::text::terms;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TfidfConfig {
    /// Largest n-gram order (1 = unigrams, 2 = unigrams + bigrams).
    pub max_ngram: usize,
    /// Terms seen in fewer documents are dropped.
    pub min_df: usize,
}

impl Default for TfidfConfig {
    fn default() -> Self {
        Self { max_ngram: 2, min_df: 2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermStats {
    pub index: usize,
    pub df: usize,
}

/// Sparse feature vector, sorted by index.
pub type SparseVector = Vec<(usize, f64)>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfidfVocabulary {
    pub terms: BTreeMap<String, TermStats>,
    pub document_count: usize,
    pub config: TfidfConfig,
}

impl TfidfVocabulary {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Smoothed inverse document frequency: `ln((N + 1) / (df + 1)) + 1`.
    pub fn idf(&self, df: usize) -> f64 {
        ((self.document_count as f64 + 1.0) / (df as f64 + 1.0)).ln() + 1.0
    }

    pub fn term_frequencies(&self, text: &str) -> HashMap<String, usize> {
        let mut tf = HashMap::new();
        for f in features(text, self.config.max_ngram) {
            *tf.entry(f).or_insert(0) += 1;
        }
        tf
    }

    /// Raw-count tf times idf, L2-normalized. Out-of-vocabulary terms are ignored.
    pub fn transform(&self, text: &str) -> SparseVector {
        let mut v: SparseVector = self
            .term_frequencies(text)
            .into_iter()
            .filter_map(|(term, tf)| {
                self.terms.get(&term).map(|s| (s.index, tf as f64 * self.idf(s.df)))
            })
            .collect();
        v.sort_unstable_by_key(|&(i, _)| i);
        let norm = v.iter().map(|(_, x)| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            for (_, x) in &mut v {
                *x /= norm;
            }
        }
        v
    }
}

/// Unigram terms followed by space-joined n-grams up to `max_ngram`.
pub fn features(text: &str, max_ngram: usize) -> Vec<String> {
    let words = terms(text);
    let mut out = words.clone();
    for n in 2..=max_ngram.max(1) {
        out.extend(words.windows(n).map(|w| w.join(" ")));
    }
    out
}

/// Learns the vocabulary and document frequencies. Indices follow term order.
pub fn fit_tfidf<S: AsRef<str>>(texts: &[S], config: TfidfConfig) -> Result<TfidfVocabulary, DetectorError> {
    if texts.is_empty() {
        return Err(DetectorError::EmptyCorpus);
    }
    let mut df: BTreeMap<String, usize> = BTreeMap::new();
    for text in texts {
        let mut seen: Vec<String> = features(text.as_ref(), config.max_ngram);
        seen.sort_unstable();
        seen.dedup();
        for term in seen {
            *df.entry(term).or_insert(0) += 1;
        }
    }
    let terms = df
        .into_iter()
        .filter(|&(_, d)| d >= config.min_df.max(1))
        .enumerate()
        .map(|(index, (term, df))| (term, TermStats { index, df }))
        .collect();
    Ok(TfidfVocabulary { terms, document_count: texts.len(), config })
}
