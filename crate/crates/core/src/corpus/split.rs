//! Iterative stratification for multi-label data.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CorpusError, TaskExample, TaskName};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Val,
    Test,
}

impl Partition {
    pub const ALL: [Partition; 3] = [Partition::Train, Partition::Val, Partition::Test];
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl SplitRatios {
    pub fn new(train: f64, val: f64, test: f64) -> Result<Self, CorpusError> {
        let sum = train + val + test;
        if (sum - 1.0).abs() > 1e-9 || [train, val, test].iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(CorpusError::InvalidRatios(sum));
        }
        Ok(Self { train, val, test })
    }

    fn as_array(&self) -> [f64; 3] {
        [self.train, self.val, self.test]
    }
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self { train: 0.7, val: 0.1, test: 0.2 }
    }
}

impl FromStr for SplitRatios {
    type Err = CorpusError;

    /// Parses `"0.7,0.1,0.2"`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| CorpusError::InvalidRatios(f64::NAN))?;
        match parts.as_slice() {
            [a, b, c] => Self::new(*a, *b, *c),
            _ => Err(CorpusError::InvalidRatios(parts.iter().sum())),
        }
    }
}

/// Disjoint train/val/test id lists, each in dataset order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub task: TaskName,
    pub seed: u64,
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl SplitAssignment {
    pub fn ids(&self, partition: Partition) -> &[String] {
        match partition {
            Partition::Train => &self.train,
            Partition::Val => &self.val,
            Partition::Test => &self.test,
        }
    }

    pub fn partition_of(&self, id: &str) -> Option<Partition> {
        Partition::ALL.into_iter().find(|&p| self.ids(p).iter().any(|x| x == id))
    }

    /// Partition lookup table for every id in the split.
    pub fn partition_map(&self) -> BTreeMap<&str, Partition> {
        Partition::ALL
            .into_iter()
            .flat_map(|p| self.ids(p).iter().map(move |id| (id.as_str(), p)))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("split serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CorpusError> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let reader = BufReader::new(File::open(path)?);
        serde_json::from_reader(reader).map_err(|e| CorpusError::InvalidSplit(e.to_string()))
    }
}

const EPS: f64 = 1e-9;

/// Splits a task dataset with iterative stratification.
///
/// Labels are processed rarest first. Every example carrying the current label
/// goes to the partition that still wants the most of that label; ties fall
/// back to the partition with the most remaining overall capacity, then to a
/// seeded random choice. Example order within a label is a seeded shuffle.
pub fn stratified_split(
    dataset: &[TaskExample],
    ratios: SplitRatios,
    task: TaskName,
    seed: u64,
) -> Result<SplitAssignment, CorpusError> {
    if dataset.is_empty() {
        return Err(CorpusError::EmptyDataset);
    }
    let ratios = ratios.as_array();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut label_ids: BTreeMap<&str, usize> = BTreeMap::new();
    for ex in dataset {
        for l in &ex.target {
            let next = label_ids.len();
            label_ids.entry(l.as_str()).or_insert(next);
        }
    }
    // Stable label numbering by name so that dataset order does not matter.
    let names: Vec<&str> = label_ids.keys().copied().collect();
    for (i, name) in names.iter().enumerate() {
        label_ids.insert(name, i);
    }
    let example_labels: Vec<Vec<usize>> = dataset
        .iter()
        .map(|ex| {
            let mut ls: Vec<usize> = ex.target.iter().map(|l| label_ids[l.as_str()]).collect();
            ls.sort_unstable();
            ls.dedup();
            ls
        })
        .collect();

    let n_labels = names.len();
    let mut label_totals = vec![0usize; n_labels];
    for ls in &example_labels {
        for &l in ls {
            label_totals[l] += 1;
        }
    }
    let mut desired: Vec<[f64; 3]> =
        label_totals.iter().map(|&c| ratios.map(|r| r * c as f64)).collect();
    let mut capacity = ratios.map(|r| r * dataset.len() as f64);

    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut rng);
    let mut assigned: Vec<Option<usize>> = vec![None; dataset.len()];
    let mut remaining_per_label = label_totals.clone();

    loop {
        let Some(label) = (0..n_labels)
            .filter(|&l| remaining_per_label[l] > 0)
            .min_by_key(|&l| (remaining_per_label[l], l))
        else {
            break;
        };
        for &i in &order {
            if assigned[i].is_some() || !example_labels[i].contains(&label) {
                continue;
            }
            let part = choose(&desired[label], &capacity, &mut rng);
            assigned[i] = Some(part);
            for &l in &example_labels[i] {
                desired[l][part] -= 1.0;
                remaining_per_label[l] -= 1;
            }
            capacity[part] -= 1.0;
        }
    }
    // Examples without any label only compete for overall capacity.
    for &i in &order {
        if assigned[i].is_none() {
            let part = choose(&capacity, &capacity, &mut rng);
            assigned[i] = Some(part);
            capacity[part] -= 1.0;
        }
    }

    let mut out = SplitAssignment { task, seed, train: Vec::new(), val: Vec::new(), test: Vec::new() };
    for (ex, part) in dataset.iter().zip(assigned) {
        let list = match part.expect("every example assigned") {
            0 => &mut out.train,
            1 => &mut out.val,
            _ => &mut out.test,
        };
        list.push(ex.clause_id.clone());
    }
    Ok(out)
}

fn choose(desire: &[f64; 3], capacity: &[f64; 3], rng: &mut ChaCha8Rng) -> usize {
    let best_desire = desire.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tied: Vec<usize> = (0..3).filter(|&j| desire[j] >= best_desire - EPS).collect();
    if tied.len() == 1 {
        return tied[0];
    }
    let best_cap = tied.iter().map(|&j| capacity[j]).fold(f64::NEG_INFINITY, f64::max);
    let tied: Vec<usize> = tied.into_iter().filter(|&j| capacity[j] >= best_cap - EPS).collect();
    if tied.len() == 1 {
        tied[0]
    } else {
        tied[rng.gen_range(0..tied.len())]
    }
}
