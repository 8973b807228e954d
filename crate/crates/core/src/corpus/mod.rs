//! Annotated Terms of Service corpora: data model, JSONL persistence, task
//! derivation, stratified splits and label statistics.

mod cooccurrence;
mod split;
pub mod synthetic;
mod task;
pub mod taxonomy;

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::{word_count, Tokenizer, WordPunctTokenizer};

pub use cooccurrence::{cooccurrence_matrix, CooccurrenceMatrix};
pub use split::{stratified_split, Partition, SplitAssignment, SplitRatios};
pub use task::{derive_task_dataset, TaskExample, TaskKind, TaskName, TaskSpec, ABUSIVE, OK};
pub use taxonomy::{Category, LabelCode, Taxonomy};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: malformed JSON: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: unknown label code '{code}'")]
    UnknownLabel { line: usize, code: String },
    #[error("duplicate clause id '{0}'")]
    DuplicateId(String),
    #[error("unknown category '{0}'")]
    UnknownCategory(String),
    #[error("unknown task '{0}'")]
    UnknownTask(String),
    #[error("invalid taxonomy: {0}")]
    InvalidTaxonomy(String),
    #[error("split ratios must sum to 1 (got {0})")]
    InvalidRatios(f64),
    #[error("cannot split an empty dataset")]
    EmptyDataset,
    #[error("invalid split file: {0}")]
    InvalidSplit(String),
}

/// One line of the corpus JSONL file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClauseRecord {
    pub id: String,
    pub contract_id: String,
    #[serde(default)]
    pub company: String,
    pub text: String,
    #[serde(default)]
    pub labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clause {
    pub id: String,
    pub contract_id: String,
    pub text: String,
    /// Label codes in taxonomy order; empty means "ok".
    pub labels: Vec<String>,
    pub word_count: usize,
    pub token_count: usize,
}

impl Clause {
    pub fn new(
        id: impl Into<String>,
        contract_id: impl Into<String>,
        text: impl Into<String>,
        labels: Vec<String>,
    ) -> Self {
        let text = text.into();
        Self {
            id: id.into(),
            contract_id: contract_id.into(),
            word_count: word_count(&text),
            token_count: WordPunctTokenizer.count_tokens(&text),
            text,
            labels,
        }
    }

    pub fn is_abusive(&self) -> bool {
        !self.labels.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contract {
    pub id: String,
    pub company_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_url: Option<String>,
    /// Clause ids in document order.
    pub clauses: Vec<String>,
}

/// A loaded corpus. Immutable after construction.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    contracts: Vec<Contract>,
    clauses: Vec<Clause>,
    by_id: HashMap<String, usize>,
}

impl Corpus {
    /// Builds a corpus from clauses, grouping them into contracts by first appearance.
    pub fn from_clauses(
        clauses: Vec<Clause>,
        companies: &HashMap<String, String>,
    ) -> Result<Self, CorpusError> {
        let mut by_id = HashMap::with_capacity(clauses.len());
        let mut contracts: Vec<Contract> = Vec::new();
        let mut contract_pos: HashMap<String, usize> = HashMap::new();
        for (i, clause) in clauses.iter().enumerate() {
            if by_id.insert(clause.id.clone(), i).is_some() {
                return Err(CorpusError::DuplicateId(clause.id.clone()));
            }
            let pos = *contract_pos.entry(clause.contract_id.clone()).or_insert_with(|| {
                contracts.push(Contract {
                    id: clause.contract_id.clone(),
                    company_name: companies.get(&clause.contract_id).cloned().unwrap_or_default(),
                    source_url: None,
                    clauses: Vec::new(),
                });
                contracts.len() - 1
            });
            contracts[pos].clauses.push(clause.id.clone());
        }
        Ok(Self { contracts, clauses, by_id })
    }

    pub fn contracts(&self) -> &[Contract] {
        &self.contracts
    }

    pub fn clauses(&self) -> &[Clause] {
        &self.clauses
    }

    pub fn clause(&self, id: &str) -> Option<&Clause> {
        self.by_id.get(id).map(|&i| &self.clauses[i])
    }

    pub fn len(&self) -> usize {
        self.clauses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clauses.is_empty()
    }

    /// Writes the corpus back out as JSONL, one clause per line.
    pub fn write_jsonl<W: Write>(&self, writer: W) -> Result<(), CorpusError> {
        let mut w = BufWriter::new(writer);
        let companies: HashMap<&str, &str> =
            self.contracts.iter().map(|c| (c.id.as_str(), c.company_name.as_str())).collect();
        for clause in &self.clauses {
            let record = ClauseRecord {
                id: clause.id.clone(),
                contract_id: clause.contract_id.clone(),
                company: companies.get(clause.contract_id.as_str()).unwrap_or(&"").to_string(),
                text: clause.text.clone(),
                labels: clause.labels.clone(),
            };
            serde_json::to_writer(&mut w, &record).map_err(std::io::Error::from)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CorpusError> {
        self.write_jsonl(File::create(path)?)
    }
}

/// Reads a JSONL corpus from any reader. Blank lines are skipped.
pub fn read_corpus<R: BufRead>(reader: R, taxonomy: &Taxonomy) -> Result<Corpus, CorpusError> {
    let mut clauses = Vec::new();
    let mut companies = HashMap::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: ClauseRecord = serde_json::from_str(&line)
            .map_err(|source| CorpusError::Json { line: line_no, source })?;
        if !seen.insert(record.id.clone()) {
            return Err(CorpusError::DuplicateId(record.id));
        }
        let mut labels = Vec::with_capacity(record.labels.len());
        for code in record.labels {
            if !taxonomy.contains(&code) {
                return Err(CorpusError::UnknownLabel { line: line_no, code });
            }
            if !labels.contains(&code) {
                labels.push(code);
            }
        }
        taxonomy.sort_codes(&mut labels);
        if !record.company.is_empty() {
            companies.entry(record.contract_id.clone()).or_insert(record.company);
        }
        clauses.push(Clause::new(record.id, record.contract_id, record.text, labels));
    }
    Corpus::from_clauses(clauses, &companies)
}

/// Loads a JSONL corpus file.
pub fn load_corpus(path: impl AsRef<Path>, taxonomy: &Taxonomy) -> Result<Corpus, CorpusError> {
    let file = File::open(path)?;
    read_corpus(BufReader::new(file), taxonomy)
}
