//! The label taxonomy: 24 codes grouped into illegal, dark and gray clauses.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::CorpusError;

const LPC_URL: &str = "https://www.bcn.cl/leychile/navegar?idNorma=61438";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Illegal,
    Dark,
    Gray,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::Illegal, Category::Dark, Category::Gray];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Illegal => "illegal",
            Category::Dark => "dark",
            Category::Gray => "gray",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "illegal" => Ok(Category::Illegal),
            "dark" => Ok(Category::Dark),
            "gray" | "grey" => Ok(Category::Gray),
            other => Err(CorpusError::UnknownCategory(other.to_string())),
        }
    }
}

/// One registered label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelCode {
    pub code: String,
    pub display_name: String,
    pub category: Category,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub legal_ref_url: Option<String>,
    pub explanation: String,
}

/// Ordered registry of label codes.
///
/// Registration order is meaningful: it fixes the order in which multi-label
/// sets are rendered and the row order of co-occurrence matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct Taxonomy {
    labels: Vec<LabelCode>,
    index: HashMap<String, usize>,
}

impl Taxonomy {
    pub fn new(labels: Vec<LabelCode>) -> Result<Self, CorpusError> {
        let mut index = HashMap::with_capacity(labels.len());
        for (i, label) in labels.iter().enumerate() {
            if label.code.trim().is_empty() {
                return Err(CorpusError::InvalidTaxonomy("empty label code".into()));
            }
            if index.insert(label.code.clone(), i).is_some() {
                return Err(CorpusError::InvalidTaxonomy(format!(
                    "duplicate label code '{}'",
                    label.code
                )));
            }
        }
        Ok(Self { labels, index })
    }

    /// Appends extra codes (e.g. glossary-only codes loaded from a config file).
    pub fn extend(&mut self, extra: Vec<LabelCode>) -> Result<(), CorpusError> {
        let mut labels = std::mem::take(&mut self.labels);
        labels.extend(extra);
        *self = Self::new(labels)?;
        Ok(())
    }

    pub fn labels(&self) -> &[LabelCode] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, code: &str) -> Option<&LabelCode> {
        self.index.get(code).map(|&i| &self.labels[i])
    }

    pub fn contains(&self, code: &str) -> bool {
        self.index.contains_key(code)
    }

    /// Registration position of a code; unknown codes sort last.
    pub fn position(&self, code: &str) -> usize {
        self.index.get(code).copied().unwrap_or(usize::MAX)
    }

    pub fn category_of(&self, code: &str) -> Option<Category> {
        self.get(code).map(|l| l.category)
    }

    /// Codes of one category in registration order.
    pub fn codes_in(&self, category: Category) -> Vec<String> {
        self.labels
            .iter()
            .filter(|l| l.category == category)
            .map(|l| l.code.clone())
            .collect()
    }

    /// Sorts codes by registration order, codes unknown to the taxonomy last
    /// (alphabetically among themselves).
    pub fn sort_codes<S: AsRef<str>>(&self, codes: &mut [S]) {
        codes.sort_by(|a, b| {
            let (a, b) = (a.as_ref(), b.as_ref());
            self.position(a).cmp(&self.position(b)).then_with(|| a.cmp(b))
        });
    }
}

impl Default for Taxonomy {
    fn default() -> Self {
        Self::new(default_labels()).expect("built-in taxonomy is valid")
    }
}

fn label(
    code: &str,
    category: Category,
    display_name: &str,
    lpc: bool,
    explanation: &str,
) -> LabelCode {
    LabelCode {
        code: code.to_string(),
        display_name: display_name.to_string(),
        category,
        legal_ref_url: lpc.then(|| LPC_URL.to_string()),
        explanation: explanation.to_string(),
    }
}

/// The 24 built-in codes.
///
/// Within each category codes follow the glossary order; the two illegal codes
/// that have no glossary entry (`ILG NA`, `ILG LPC JUS`) come last.
pub fn default_labels() -> Vec<LabelCode> {
    use Category::*;
    vec![
        label("ILG LPC", Illegal, "Contrary to the consumer protection law", true,
            "Violates Law 19.496 without fitting a more specific category."),
        label("ILG ng", Illegal, "Unjustified refusal to sell", true,
            "Allows the provider to refuse a sale without justification (Art. 13 LPC)."),
        label("ILG acp", Illegal, "Tacit acceptance", true,
            "Imposes acceptance by mere use or website visit (Art. 12 A LPC)."),
        label("ILG LPC PRO", Illegal, "Altered judicial competence", true,
            "Modifies the competent court or imposes a forum (Arts. 50-A and 50-H LPC)."),
        label("ILG LPC INT", Illegal, "Unlawful intermediation", true,
            "Evades responsibility for goods or services offered through intermediaries (Art. 43 LPC)."),
        label("ILG COT", Illegal, "Contrary to the Code of Courts", false,
            "Affects absolute or relative jurisdiction set by the Code of Courts."),
        label("ILG RC", Illegal, "Contrary to the civil liability regime", false,
            "Alters the contractual liability regime of the Civil Code."),
        label("ILG NA", Illegal, "Contrary to another express norm", false,
            "Directly contradicts an express legal rule not covered by another illegal code."),
        label("ILG LPC JUS", Illegal, "Restricted access to justice", true,
            "Restricts the consumer's access to the courts or legal remedies under the LPC."),
        label("cr", Dark, "Unilateral modification of the terms", true,
            "Lets the provider alter the contract without a meaningful chance to object (Art. 16(a) LPC)."),
        label("ter", Dark, "Unilateral termination", true,
            "Lets the provider terminate at its sole discretion without justified cause (Art. 16(a) LPC)."),
        label("ch", Dark, "Unilateral price modification", true,
            "Lets the provider raise the price without proper justification (Art. 16(b) LPC)."),
        label("er", Dark, "Consumer charged for provider errors", true,
            "Makes the consumer bear the provider's own deficiencies or errors (Art. 16(c) LPC)."),
        label("ltd", Dark, "Limitation of liability", true,
            "Excludes or excessively limits the provider's liability in advance (Art. 16(e) LPC)."),
        label("nod", Dark, "Limits on exercising consumer rights", true,
            "Places obstacles, delays or burdens on the exercise of consumer rights (Art. 16(h) LPC)."),
        label("bfe", Gray, "Contrary to good faith", true,
            "Generates consumer detriment contrary to good faith (Art. 16(g) LPC)."),
        label("des reser", Gray, "Right to modify the contract", false,
            "Lets the provider remove or limit elements of the service at its sole discretion."),
        label("des det", Gray, "Internal dispute process", false,
            "Channels complaints into the provider's own procedure, possibly affecting deadlines or access to justice."),
        label("des lic", Gray, "Unlimited or excessive powers", false,
            "Grants the provider broad, perpetual or irrevocable powers."),
        label("des uni", Gray, "Change of terms without notice", false,
            "Lets the provider modify terms without prior notice or justification."),
        label("des us", Gray, "Risks from other users", false,
            "Disclaims responsibility for harm arising from interactions between users."),
        label("des def", Gray, "Consumer indemnifies provider", false,
            "Obliges the consumer to defend or indemnify the provider."),
        label("des risk", Gray, "Consumer assumes risks", false,
            "Shifts risks or costs to the consumer without corresponding provider responsibility."),
        label("des inf", Gray, "Information shared with third parties", false,
            "Allows transferring user information to unrelated third parties."),
    ]
}
