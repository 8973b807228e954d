//! A self-contained offline setup: synthetic corpus, trained detector,
//! hash-embedded knowledge base and a phrase-matching chat stub. Used by the
//! `serve --demo` mode, tests and benches.

use std::sync::Arc;

use crate::classify::{Pipeline, PipelineConfig};
use crate::corpus::synthetic::{generate_corpus, label_phrases, SyntheticConfig};
use crate::corpus::{Corpus, Taxonomy};
use crate::detector::{train_detector, LinearDetector, TrainConfig};
use crate::llm::{query_clause, ChatProvider, HashEmbedder, OverlapReranker, StubChat};
use crate::prompting::PromptTemplate;
use crate::retrieval::{Bm25Params, KbEntry, KnowledgeBase};

pub const DEMO_EMBEDDING_DIM: usize = 256;

pub struct DemoSetup {
    pub taxonomy: Taxonomy,
    pub corpus: Corpus,
    pub detector: LinearDetector,
    pub kb: KnowledgeBase,
}

/// Synthetic corpus of `ok + abusive` clauses with a detector trained on all of it
/// and a knowledge base holding every clause.
pub fn demo_setup(ok: usize, abusive: usize, seed: u64) -> DemoSetup {
    let taxonomy = Taxonomy::default();
    let cfg = SyntheticConfig { ok_clauses: ok, abusive_clauses: abusive, seed, ..Default::default() };
    let corpus = generate_corpus(&cfg, &taxonomy);
    let data: Vec<(&str, bool)> = corpus.clauses().iter().map(|c| (c.text.as_str(), c.is_abusive())).collect();
    let detector = train_detector(&data, TrainConfig { seed, ..Default::default() }).expect("synthetic data has both classes");
    let entries: Vec<KbEntry> = corpus.clauses().iter().map(KbEntry::from).collect();
    let kb = KnowledgeBase::build(entries, &HashEmbedder::new(DEMO_EMBEDDING_DIM), Bm25Params::default())
        .expect("stub embedder is consistent");
    DemoSetup { taxonomy, corpus, detector, kb }
}

/// Chat stub that answers with every label whose synthetic phrase occurs in
/// the query clause, restricted to the labels the prompt offers.
pub fn phrase_chat(taxonomy: &Taxonomy) -> StubChat {
    let bank: Vec<(String, Vec<String>)> = taxonomy
        .labels()
        .iter()
        .map(|l| (l.code.clone(), label_phrases(&l.code).iter().map(|p| p.to_lowercase()).collect()))
        .collect();
    StubChat::from_fn(move |prompt| {
        let query = query_clause(prompt).to_lowercase();
        let offered: Option<Vec<&str>> = prompt
            .lines()
            .find_map(|l| l.strip_prefix("Etiquetas posibles:"))
            .map(|rest| rest.trim().trim_end_matches('.').split(", ").collect());
        let codes: Vec<&str> = bank
            .iter()
            .filter(|(code, phrases)| {
                offered.as_ref().map_or(true, |o| o.contains(&code.as_str())) && phrases.iter().any(|p| query.contains(p))
            })
            .map(|(code, _)| code.as_str())
            .collect();
        Ok(codes.join(", "))
    })
}

/// Demo pipeline around [`demo_setup`] with overlap reranking.
pub fn demo_pipeline(setup: DemoSetup, chat: Arc<dyn ChatProvider>, config: PipelineConfig) -> Pipeline {
    Pipeline::new(
        setup.taxonomy,
        setup.detector,
        setup.kb,
        Arc::new(HashEmbedder::new(DEMO_EMBEDDING_DIM)),
        Some(Arc::new(OverlapReranker)),
        chat,
        PromptTemplate::default(),
        config,
    )
    .expect("demo config is valid")
}

/// Plain-text contract with ordinary clauses and one planted clause carrying
/// the `cr` phrase.
pub fn demo_contract() -> String {
    [
        "1. El usuario puede contactar a soporte a través del formulario del sitio en horario hábil.",
        "2. La cuenta del usuario es personal e intransferible para todos los efectos.",
        "3. Podemos modificar estos términos en cualquier momento a nuestra discreción, según corresponda.",
        "4. Los pedidos se despachan dentro de los plazos indicados en la confirmación de compra.",
        "5. Los precios se expresan en pesos chilenos e incluyen impuestos en cualquier caso.",
    ]
    .join("\n\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::{ContentType, ScanOptions};

    #[test]
    fn planted_clause_is_the_only_finding() {
        let setup = demo_setup(200, 60, 3);
        let chat = Arc::new(phrase_chat(&setup.taxonomy));
        let p = demo_pipeline(setup, chat.clone(), PipelineConfig::default());
        let out = p.scan(&demo_contract(), ContentType::Text, &ScanOptions::default());
        assert_eq!(out.report.document.chunk_count, 5);
        assert_eq!(out.report.findings.len(), 1, "{}", out.report.to_json());
        let f = &out.report.findings[0];
        assert_eq!(f.labels, ["cr"]);
        assert!(!f.partial);
        assert_eq!(out.llm_calls(), 3);
        assert_eq!(chat.calls(), 3);
        let again = p.scan(&demo_contract(), ContentType::Text, &ScanOptions::default());
        assert_eq!(out.report.to_json(), again.report.to_json());
    }
}
