use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Category, Corpus, CorpusError, Taxonomy};

pub const OK: &str = "ok";
pub const ABUSIVE: &str = "abusive";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TaskName {
    #[serde(rename = "joint-detect")]
    JointDetect,
    #[serde(rename = "illegal-detect")]
    IllegalDetect,
    #[serde(rename = "dark-detect")]
    DarkDetect,
    #[serde(rename = "gray-detect")]
    GrayDetect,
    #[serde(rename = "illegal-classify")]
    IllegalClassify,
    #[serde(rename = "dark-classify")]
    DarkClassify,
    #[serde(rename = "gray-classify")]
    GrayClassify,
}

impl TaskName {
    pub const ALL: [TaskName; 7] = [
        TaskName::JointDetect,
        TaskName::IllegalDetect,
        TaskName::DarkDetect,
        TaskName::GrayDetect,
        TaskName::IllegalClassify,
        TaskName::DarkClassify,
        TaskName::GrayClassify,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskName::JointDetect => "joint-detect",
            TaskName::IllegalDetect => "illegal-detect",
            TaskName::DarkDetect => "dark-detect",
            TaskName::GrayDetect => "gray-detect",
            TaskName::IllegalClassify => "illegal-classify",
            TaskName::DarkClassify => "dark-classify",
            TaskName::GrayClassify => "gray-classify",
        }
    }

    pub fn kind(self) -> TaskKind {
        match self {
            TaskName::JointDetect
            | TaskName::IllegalDetect
            | TaskName::DarkDetect
            | TaskName::GrayDetect => TaskKind::Detection,
            _ => TaskKind::Classification,
        }
    }

    /// The category a task is restricted to; `None` for joint detection.
    pub fn category(self) -> Option<Category> {
        match self {
            TaskName::JointDetect => None,
            TaskName::IllegalDetect | TaskName::IllegalClassify => Some(Category::Illegal),
            TaskName::DarkDetect | TaskName::DarkClassify => Some(Category::Dark),
            TaskName::GrayDetect | TaskName::GrayClassify => Some(Category::Gray),
        }
    }

    pub fn classify(category: Category) -> TaskName {
        match category {
            Category::Illegal => TaskName::IllegalClassify,
            Category::Dark => TaskName::DarkClassify,
            Category::Gray => TaskName::GrayClassify,
        }
    }
}

impl fmt::Display for TaskName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskName {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TaskName::ALL
            .into_iter()
            .find(|t| t.as_str() == s.trim())
            .ok_or_else(|| CorpusError::UnknownTask(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Detection,
    Classification,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub name: TaskName,
    pub kind: TaskKind,
    /// `[ok, abusive]` for detection; the category's codes in taxonomy order for classification.
    pub class_set: Vec<String>,
}

impl TaskSpec {
    pub fn new(name: TaskName, taxonomy: &Taxonomy) -> Self {
        let kind = name.kind();
        let class_set = match (kind, name.category()) {
            (TaskKind::Classification, Some(cat)) => taxonomy.codes_in(cat),
            _ => vec![OK.to_string(), ABUSIVE.to_string()],
        };
        Self { name, kind, class_set }
    }

    pub fn category(&self) -> Option<Category> {
        self.name.category()
    }

    pub fn is_detection(&self) -> bool {
        self.kind == TaskKind::Detection
    }
}

/// A clause paired with its target under one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskExample {
    pub clause_id: String,
    pub text: String,
    /// Exactly one of `ok`/`abusive` for detection; a nonempty code subset for classification.
    pub target: Vec<String>,
}

/// Projects a corpus onto one task.
///
/// Category detection marks a clause abusive only when it carries a label of
/// that category; clauses labelled only in other categories become `ok`.
/// Classification keeps just the clauses with at least one label in the
/// category, targeting that subset of their labels.
pub fn derive_task_dataset(corpus: &Corpus, task: &TaskSpec, taxonomy: &Taxonomy) -> Vec<TaskExample> {
    corpus
        .clauses()
        .iter()
        .filter_map(|clause| {
            let target = task.target(&clause.labels, taxonomy)?;
            Some(TaskExample { clause_id: clause.id.clone(), text: clause.text.clone(), target })
        })
        .collect()
}

impl TaskSpec {
    /// Projects a clause's full label set onto this task; `None` when the
    /// clause is outside a classification task's category.
    pub fn target<S: AsRef<str>>(&self, labels: &[S], taxonomy: &Taxonomy) -> Option<Vec<String>> {
        let mut projected: Vec<String> = labels
            .iter()
            .map(|c| c.as_ref())
            .filter(|c| match self.category() {
                Some(cat) => taxonomy.category_of(c) == Some(cat),
                None => true,
            })
            .map(str::to_string)
            .collect();
        match self.kind {
            TaskKind::Detection => {
                let cls = if projected.is_empty() { OK } else { ABUSIVE };
                Some(vec![cls.to_string()])
            }
            TaskKind::Classification if projected.is_empty() => None,
            TaskKind::Classification => {
                taxonomy.sort_codes(&mut projected);
                projected.dedup();
                Some(projected)
            }
        }
    }
}
