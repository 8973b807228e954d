use once_cell::sync::Lazy;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::{TaskSpec, ABUSIVE, OK};
use crate::text::terms;

static HOOK_RE: Lazy<Regex> = Lazy::new(|| Regex::new(r"(?i)etiqueta\s*:").expect("valid regex"));
static SPLIT_RE: Lazy<Regex> = Lazy::new(|| Regex::new(r"[,;\n]").expect("valid regex"));

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedPrediction {
    /// Recognized labels in class-set order.
    pub labels: Vec<String>,
    pub raw: String,
    /// Tokens that matched no label.
    pub warnings: Vec<String>,
}

/// Alias word sequences for each class, longest first.
fn aliases(task: &TaskSpec) -> Vec<(Vec<String>, usize)> {
    let mut out: Vec<(Vec<String>, usize)> =
        task.class_set.iter().enumerate().map(|(i, code)| (terms(code), i)).collect();
    if task.is_detection() {
        let pos = |c: &str| task.class_set.iter().position(|x| x == c);
        let extra: [(&str, &str); 5] =
            [("okay", OK), ("no abusiva", OK), ("no abusivo", OK), ("abusiva", ABUSIVE), ("abusivo", ABUSIVE)];
        for (alias, class) in extra {
            if let Some(i) = pos(class) {
                out.push((terms(alias), i));
            }
        }
    }
    out.retain(|(words, _)| !words.is_empty());
    out.sort_by(|a, b| b.0.len().cmp(&a.0.len()));
    out
}

/// Extracts a label set from a model completion.
///
/// Only text after the last `Etiqueta:` is read. It is split on commas,
/// semicolons and newlines, and each piece is scanned word by word for the
/// longest matching label alias. Pieces without any match become warnings.
pub fn parse_labels(completion: &str, task: &TaskSpec) -> ParsedPrediction {
    let tail = match HOOK_RE.find_iter(completion).last() {
        Some(m) => &completion[m.end()..],
        None => completion,
    };
    let aliases = aliases(task);
    let mut hit = vec![false; task.class_set.len()];
    let mut warnings = Vec::new();
    for piece in SPLIT_RE.split(tail) {
        let words = terms(piece);
        if words.is_empty() {
            continue;
        }
        let mut matched = false;
        let mut i = 0;
        while i < words.len() {
            let found = aliases.iter().find(|(a, _)| words[i..].starts_with(a));
            match found {
                Some((a, class)) => {
                    hit[*class] = true;
                    matched = true;
                    i += a.len();
                }
                None => i += 1,
            }
        }
        if !matched {
            warnings.push(words.join(" "));
        }
    }
    let labels = task.class_set.iter().zip(&hit).filter(|(_, h)| **h).map(|(c, _)| c.clone()).collect();
    ParsedPrediction { labels, raw: completion.to_string(), warnings }
}
