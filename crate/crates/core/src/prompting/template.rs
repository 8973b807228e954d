use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{PromptError, HOOK};
use crate::corpus::TaskKind;

const DEFAULT_PROMPT: &str = include_str!("../../templates/prompt_v1.txt");
const DEFAULT_DETECTION: &str = include_str!("../../templates/instruction_detection_v1.txt");
const DEFAULT_CLASSIFICATION: &str = include_str!("../../templates/instruction_classification_v1.txt");

pub const DEFAULT_TEMPLATE_VERSION: &str = "v1";

/// Prompt layout plus per-task-kind instruction texts.
///
/// The layout must contain `{{instruction}}`, `{{examples}}` and `{{query}}`
/// and end with the `Etiqueta:` hook. Instructions may use `{{labels}}`,
/// which expands to the task's class codes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub version: String,
    layout: String,
    detection_instruction: String,
    classification_instruction: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self::new(DEFAULT_TEMPLATE_VERSION, DEFAULT_PROMPT, DEFAULT_DETECTION, DEFAULT_CLASSIFICATION)
            .expect("built-in template is valid")
    }
}

impl PromptTemplate {
    pub fn new(
        version: impl Into<String>,
        layout: &str,
        detection_instruction: &str,
        classification_instruction: &str,
    ) -> Result<Self, PromptError> {
        let layout = layout.trim_end().to_string();
        for slot in ["{{instruction}}", "{{examples}}", "{{query}}"] {
            if !layout.contains(slot) {
                return Err(PromptError::Template(format!("layout is missing the {slot} slot")));
            }
        }
        if !layout.ends_with(HOOK) {
            return Err(PromptError::Template(format!("layout must end with '{HOOK}'")));
        }
        Ok(Self {
            version: version.into(),
            layout,
            detection_instruction: detection_instruction.trim().to_string(),
            classification_instruction: classification_instruction.trim().to_string(),
        })
    }

    /// Loads `prompt_<v>.txt`, `instruction_detection_<v>.txt` and
    /// `instruction_classification_<v>.txt` from `dir`.
    pub fn load_dir(dir: impl AsRef<Path>, version: &str) -> Result<Self, PromptError> {
        let dir = dir.as_ref();
        let read = |name: String| {
            std::fs::read_to_string(dir.join(&name)).map_err(|e| PromptError::Template(format!("{name}: {e}")))
        };
        Self::new(
            version,
            &read(format!("prompt_{version}.txt"))?,
            &read(format!("instruction_detection_{version}.txt"))?,
            &read(format!("instruction_classification_{version}.txt"))?,
        )
    }

    pub fn instruction(&self, kind: TaskKind, class_set: &[String]) -> String {
        let text = match kind {
            TaskKind::Detection => &self.detection_instruction,
            TaskKind::Classification => &self.classification_instruction,
        };
        text.replace("{{labels}}", &class_set.join(", "))
    }

    pub fn render(&self, instruction: &str, examples: &str, query: &str) -> String {
        // Query last so that text inside it is never re-expanded.
        self.layout
            .replace("{{instruction}}", instruction)
            .replace("{{examples}}", examples)
            .replace("{{query}}", query)
    }
}
