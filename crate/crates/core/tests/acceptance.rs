//! Acceptance checks. Each criterion runs against its own time budget and
//! prints one PASS or FAIL line; the process exits non-zero if any fails.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use clausewatch::corpus::synthetic::{generate_corpus, SyntheticConfig};
use clausewatch::corpus::{derive_task_dataset, stratified_split, Partition, SplitRatios, ABUSIVE, OK};
use clausewatch::demo::{demo_contract, demo_pipeline, demo_setup, phrase_chat, DemoSetup, DEMO_EMBEDDING_DIM};
use clausewatch::detector::{positive_f1, train_detector, TrainConfig};
use clausewatch::eval::{error_decomposition, ErrorRecord, RunObservation};
use clausewatch::llm::{hash_embedding, ChatProvider, HashEmbedder, OverlapReranker};
use clausewatch::meta_analysis::{dersimonian_laird, pooled_mean_with_tau2, random_effects};
use clausewatch::prompting::{build_fewshot_prompt, parse_labels, spaced_indices, PromptExample, HOOK};
use clausewatch::retrieval::{Bm25Params, DenseIndex, KbEntry, RetrievalMode, SparseIndex};
use clausewatch::{
    f1_scores, majority_vote, rank_configs, ContentType, LinearDetector, PipelineConfig, PromptTemplate,
    RetrievalConfig, ScanOptions, TaskName, TaskSpec, Taxonomy,
};

type Check = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn set(labels: &[&str]) -> Vec<String> {
    labels.iter().map(|s| s.to_string()).collect()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

// ------------------------------------------------------------------ metrics

fn metric_oracle() -> Check {
    // Hand counts: A tp4 fp1 fn1, B tp3 fp2 fn2, C tp2 fp1 fn3, D unused.
    let rows: [(&[&str], &[&str]); 12] = [
        (&["A"], &["A"]),
        (&["A", "B"], &["A"]),
        (&["B"], &["B", "C"]),
        (&["C"], &[]),
        (&["A"], &["B"]),
        (&[], &["A"]),
        (&["B", "C"], &["B", "C"]),
        (&["A", "C"], &["A", "B"]),
        (&["B"], &["B"]),
        (&["C"], &["C"]),
        (&["A", "B", "C"], &["A"]),
        (&[], &[]),
    ];
    let gold: Vec<Vec<String>> = rows.iter().map(|r| set(r.0)).collect();
    let pred: Vec<Vec<String>> = rows.iter().map(|r| set(r.1)).collect();
    let r = f1_scores(&gold, &pred, &set(&["A", "B", "C", "D"])).map_err(|e| e.to_string())?;
    let hand = |tp: f64, fp: f64, fn_: f64| if tp == 0.0 { 0.0 } else { 2.0 * tp / (2.0 * tp + fp + fn_) };
    let per = [hand(4.0, 1.0, 1.0), hand(3.0, 2.0, 2.0), hand(2.0, 1.0, 3.0), 0.0];
    for (l, want) in r.per_label.iter().zip(per) {
        ensure!(close(l.f1, want, 1e-12), "label {} f1 {} != {}", l.label, l.f1, want);
    }
    let macro_hand = per.iter().sum::<f64>() / 4.0;
    ensure!(close(r.macro_f1, macro_hand, 1e-12), "macro {} != {}", r.macro_f1, macro_hand);
    let mean_of_reported = r.per_label.iter().map(|l| l.f1).sum::<f64>() / r.per_label.len() as f64;
    ensure!(close(r.macro_f1, mean_of_reported, 1e-12), "macro is not the per-label mean");
    ensure!(close(r.micro_f1, hand(9.0, 4.0, 6.0), 1e-12), "micro {} != 18/28", r.micro_f1);
    ensure!(close(r.micro_precision, 9.0 / 13.0, 1e-12), "micro precision");
    ensure!(close(r.micro_recall, 9.0 / 15.0, 1e-12), "micro recall");
    Ok(())
}

fn error_identity() -> Check {
    let classes = set(&["A", "B", "C", "D", "E"]);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let random_set = |rng: &mut ChaCha8Rng| -> Vec<String> {
        classes.iter().filter(|_| rng.gen_bool(0.35)).cloned().collect()
    };
    for fixture in 0..200 {
        let n = rng.gen_range(1..40);
        let records: Vec<ErrorRecord> = (0..n)
            .map(|_| {
                let k = rng.gen_range(0..6);
                ErrorRecord {
                    gold: random_set(&mut rng),
                    predicted: random_set(&mut rng),
                    retrieved_labels: (0..k).map(|_| random_set(&mut rng)).collect(),
                }
            })
            .collect();
        let d = error_decomposition(&records, &classes).map_err(|e| e.to_string())?;
        let mut fns = 0u64;
        let mut ret = 0u64;
        for r in &records {
            for g in r.gold.iter().filter(|g| !r.predicted.contains(g)) {
                fns += 1;
                if !r.retrieved_labels.iter().any(|s| s.contains(g)) {
                    ret += 1;
                }
            }
        }
        ensure!(d.fn_total == d.retrieval_errors + d.generation_errors, "fixture {fixture}: identity broken");
        ensure!(d.fn_total == fns && d.retrieval_errors == ret, "fixture {fixture}: counts differ from oracle");
    }

    // 46 missed gold labels: 10 never retrieved, 36 retrieved but not predicted.
    let mut records = Vec::new();
    for i in 0..46 {
        let retrieved = if i < 10 { vec![set(&["B"])] } else { vec![set(&["A"]), set(&["B"])] };
        records.push(ErrorRecord { gold: set(&["A"]), predicted: vec![], retrieved_labels: retrieved });
    }
    let d = error_decomposition(&records, &set(&["A", "B"])).map_err(|e| e.to_string())?;
    ensure!((d.fn_total, d.retrieval_errors, d.generation_errors) == (46, 10, 36), "table counts {d:?}");
    let ratio = d.gen_ret_ratio.ok_or("ratio missing")?;
    ensure!(format!("{ratio:.2}") == "3.60", "ratio {ratio}");
    Ok(())
}

// ------------------------------------------------------------------ split

fn stratified_split_shares() -> Check {
    let tax = Taxonomy::default();
    let cfg = SyntheticConfig { ok_clauses: 7220, abusive_clauses: 1535, seed: 2024, ..Default::default() };
    let corpus = generate_corpus(&cfg, &tax);
    let task = TaskSpec::new(TaskName::JointDetect, &tax);
    let data = derive_task_dataset(&corpus, &task, &tax);
    ensure!(data.len() == 8755, "corpus has {} clauses", data.len());
    let split = stratified_split(&data, SplitRatios::default(), task.name, 7).map_err(|e| e.to_string())?;
    let again = stratified_split(&data, SplitRatios::default(), task.name, 7).map_err(|e| e.to_string())?;
    ensure!(split == again, "split is not deterministic");

    let label_of: HashMap<&str, &str> = data.iter().map(|e| (e.clause_id.as_str(), e.target[0].as_str())).collect();
    let totals = |label: &str| data.iter().filter(|e| e.target[0] == label).count() as f64;
    for label in [OK, ABUSIVE] {
        for (p, want) in Partition::ALL.into_iter().zip([70.0, 10.0, 20.0]) {
            let n = split.ids(p).iter().filter(|id| label_of[id.as_str()] == label).count() as f64;
            let share = 100.0 * n / totals(label);
            ensure!((share - want).abs() <= 1.5, "{label} {p:?}: {share:.2}% vs {want}%");
        }
    }
    Ok(())
}

// ------------------------------------------------------------------ retrieval

fn brute_force_cosine(query: &[f32], rows: &[Vec<f32>], ids: &[String], p: usize) -> Vec<String> {
    let norm = |v: &[f32]| v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt();
    let qn = norm(query);
    let mut scored: Vec<(f64, &String)> = rows
        .iter()
        .zip(ids)
        .map(|(v, id)| {
            let dot: f64 = query.iter().zip(v).map(|(&a, &b)| f64::from(a) * f64::from(b)).sum();
            (dot / (qn * norm(v)), id)
        })
        .collect();
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(b.1)));
    scored.into_iter().take(p).map(|(_, id)| id.clone()).collect()
}

fn bm25_reference(docs: &[Vec<&str>], query: &[&str], d: usize) -> f64 {
    let (k1, b) = (1.2, 0.75);
    let n = docs.len() as f64;
    let avgdl = docs.iter().map(|d| d.len() as f64).sum::<f64>() / n;
    query
        .iter()
        .map(|q| {
            let df = docs.iter().filter(|d| d.contains(q)).count() as f64;
            let tf = docs[d].iter().filter(|t| *t == q).count() as f64;
            let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
            idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * docs[d].len() as f64 / avgdl))
        })
        .sum()
}

fn retrieval_oracle() -> Check {
    let tax = Taxonomy::default();
    let corpus = generate_corpus(&SyntheticConfig { ok_clauses: 800, abusive_clauses: 200, seed: 31, ..Default::default() }, &tax);
    let ids: Vec<String> = corpus.clauses().iter().map(|c| c.id.clone()).collect();
    let rows: Vec<Vec<f32>> = corpus.clauses().iter().map(|c| hash_embedding(&c.text, DEMO_EMBEDDING_DIM)).collect();
    ensure!(rows.len() == 1000, "{} clauses", rows.len());
    let index = DenseIndex::new(ids.clone(), rows.clone()).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for q in 0..100 {
        let a = &corpus.clauses()[rng.gen_range(0..1000)].text;
        let b = &corpus.clauses()[rng.gen_range(0..1000)].text;
        let text = format!("{} {}", a, b.split_whitespace().take(4).collect::<Vec<_>>().join(" "));
        let qv = hash_embedding(&text, DEMO_EMBEDDING_DIM);
        let p = [1, 5, 15, 50][q % 4];
        let got: Vec<String> = index.search(&qv, p).map_err(|e| e.to_string())?.into_iter().map(|c| c.clause_id).collect();
        let want = brute_force_cosine(&qv, &rows, &ids, p);
        ensure!(got == want, "query {q}: {got:?} != {want:?}");
    }

    let vocab = ["plazo", "usuario", "datos", "cuenta", "pago", "cambio", "servicio", "terceros", "ley", "precio", "aviso"];
    let texts: Vec<String> = (0..20)
        .map(|_| (0..rng.gen_range(2..16)).map(|_| vocab[rng.gen_range(0..vocab.len())]).collect::<Vec<_>>().join(" "))
        .collect();
    let doc_ids: Vec<String> = (0..20).map(|i| format!("d{i:02}")).collect();
    let sparse = SparseIndex::build(doc_ids, &texts, Bm25Params::default()).map_err(|e| e.to_string())?;
    let docs: Vec<Vec<&str>> = texts.iter().map(|t| t.split_whitespace().collect()).collect();
    for _ in 0..50 {
        let query: Vec<&str> = (0..rng.gen_range(1..5)).map(|_| vocab[rng.gen_range(0..vocab.len())]).collect();
        let scores = sparse.scores(&query.join(" "));
        for d in 0..20 {
            let want = bm25_reference(&docs, &query, d);
            let have = scores.get(&d).copied().unwrap_or(0.0);
            ensure!(close(have, want, 1e-9), "bm25 {query:?} doc {d}: {have} vs {want}");
        }
    }
    Ok(())
}

fn hybrid_rerank_contract(setup: &DemoSetup) -> Check {
    let config = RetrievalConfig { candidates: 15, top_k: 5, ..Default::default() };
    let embedder = HashEmbedder::new(DEMO_EMBEDDING_DIM);
    let vocab: Vec<&str> = setup.corpus.clauses().iter().flat_map(|c| c.text.split_whitespace()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for q in 0..500 {
        let query = (0..rng.gen_range(3..20)).map(|_| *vocab.choose(&mut rng).unwrap()).collect::<Vec<_>>().join(" ");
        let r = setup
            .kb
            .retrieve(&query, &embedder, Some(&OverlapReranker), &config, None)
            .map_err(|e| e.to_string())?;
        ensure!(r.candidates.len() <= 30, "query {q}: {} candidates", r.candidates.len());
        let pool: HashSet<&str> = r.candidates.iter().map(|c| c.clause_id.as_str()).collect();
        ensure!(pool.len() == r.candidates.len(), "query {q}: duplicate candidates");
        ensure!(r.examples.len() == 5, "query {q}: {} examples", r.examples.len());
        let picked: HashSet<&str> = r.examples.iter().map(|e| e.clause_id.as_str()).collect();
        ensure!(picked.len() == 5 && picked.is_subset(&pool), "query {q}: examples outside candidates");
        let ranks: Vec<usize> = r.examples.iter().map(|e| e.rank).collect();
        ensure!(ranks == [1, 2, 3, 4, 5], "query {q}: ranks {ranks:?}");
    }
    Ok(())
}

// ------------------------------------------------------------------ prompting

fn prompt_round_trip() -> Check {
    let tax = Taxonomy::default();
    let words = ["el", "usuario", "acepta", "que", "la", "empresa", "podrá", "cobrar", "cargos", "sin", "aviso"];
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for list in 0..1000 {
        let task = TaskSpec::new(TaskName::ALL[list % TaskName::ALL.len()], &tax);
        let n = rng.gen_range(0..10);
        let examples: Vec<PromptExample> = (0..n)
            .map(|i| {
                let labels = if task.is_detection() {
                    vec![task.class_set.choose(&mut rng).unwrap().clone()]
                } else {
                    let m = rng.gen_range(1..4);
                    let mut picked: Vec<String> = task.class_set.choose_multiple(&mut rng, m).cloned().collect();
                    tax.sort_codes(&mut picked);
                    picked
                };
                let text = (0..rng.gen_range(1..15)).map(|_| *words.choose(&mut rng).unwrap()).collect::<Vec<_>>().join(" ");
                PromptExample { clause_id: format!("c{i}"), text, labels }
            })
            .collect();
        let bundle = build_fewshot_prompt(&task, examples.clone(), 1, list as u64, "consulta", &PromptTemplate::default());
        let lines: Vec<&str> = bundle.rendered.lines().filter(|l| l.starts_with(HOOK)).collect();
        ensure!(lines.len() == n + 1, "list {list}: {} label lines for {n} examples", lines.len());
        for (line, ex) in lines.iter().zip(&examples) {
            let parsed = parse_labels(line, &task);
            ensure!(parsed.labels == ex.labels, "list {list}: {line:?} parsed to {:?}", parsed.labels);
        }
    }
    for n in 1..=50usize {
        for k in 1..=n {
            let want: Vec<usize> = if k == 1 {
                vec![(n - 1) / 2]
            } else {
                (0..k).map(|i| ((i * (n - 1)) as f64 / (k - 1) as f64).floor() as usize).collect()
            };
            ensure!(spaced_indices(n, k) == want, "spaced indices n={n} k={k}");
        }
    }
    Ok(())
}

// ------------------------------------------------------------------ majority vote

fn vote_oracle(neighbours: &[Vec<String>], class_set: &[String]) -> Vec<String> {
    let k = neighbours.len();
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for labels in neighbours {
        for l in labels {
            if let Some(i) = class_set.iter().position(|c| c == l) {
                *counts.entry(i).or_default() += 1;
            }
        }
    }
    let strict: Vec<String> = counts.iter().filter(|(_, &c)| c * 2 > k).map(|(&i, _)| class_set[i].clone()).collect();
    if !strict.is_empty() {
        return strict;
    }
    let mut best: Option<(usize, usize)> = None;
    for (&i, &c) in &counts {
        if best.map_or(true, |(_, bc)| c > bc) {
            best = Some((i, c));
        }
    }
    best.map(|(i, _)| vec![class_set[i].clone()]).unwrap_or_default()
}

fn majority_vote_equivalence() -> Check {
    let tax = Taxonomy::default();
    let corpus = generate_corpus(&SyntheticConfig { ok_clauses: 80, abusive_clauses: 120, seed: 13, ..Default::default() }, &tax);
    let entries: Vec<KbEntry> = corpus.clauses().iter().map(KbEntry::from).collect();
    ensure!(entries.len() == 200, "{} clauses", entries.len());
    let embedder = HashEmbedder::new(DEMO_EMBEDDING_DIM);
    let kb = clausewatch::KnowledgeBase::build(entries.clone(), &embedder, Bm25Params::default()).map_err(|e| e.to_string())?;
    let rows: Vec<Vec<f32>> = entries.iter().map(|e| hash_embedding(&e.text, DEMO_EMBEDDING_DIM)).collect();
    let ids: Vec<String> = entries.iter().map(|e| e.id.clone()).collect();
    let config = RetrievalConfig { mode: RetrievalMode::Dense, rerank: false, top_k: 5, candidates: 5, ..Default::default() };
    let tasks = [TaskName::IllegalClassify, TaskName::DarkClassify, TaskName::GrayClassify, TaskName::JointDetect];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for q in 0..30 {
        let task = TaskSpec::new(tasks[q % tasks.len()], &tax);
        let base = &entries[rng.gen_range(0..200)].text;
        let query = format!("{base} {}", entries[rng.gen_range(0..200)].text.split_whitespace().take(3).collect::<Vec<_>>().join(" "));
        let got = majority_vote(&kb, &query, &embedder, None, &config, &task, &tax).map_err(|e| e.to_string())?;

        let eligible: Vec<usize> = (0..entries.len()).filter(|&i| task.target(&entries[i].labels, &tax).is_some()).collect();
        let sub_rows: Vec<Vec<f32>> = eligible.iter().map(|&i| rows[i].clone()).collect();
        let sub_ids: Vec<String> = eligible.iter().map(|&i| ids[i].clone()).collect();
        let qv = hash_embedding(&query, DEMO_EMBEDDING_DIM);
        let nearest = brute_force_cosine(&qv, &sub_rows, &sub_ids, 5);
        let neighbour_labels: Vec<Vec<String>> = nearest
            .iter()
            .map(|id| {
                let e = entries.iter().find(|e| &e.id == id).unwrap();
                task.target(&e.labels, &tax).unwrap()
            })
            .collect();
        let want = vote_oracle(&neighbour_labels, &task.class_set);
        ensure!(got == want, "query {q} ({:?}): {got:?} != {want:?}", task.name);
    }
    Ok(())
}

// ------------------------------------------------------------------ meta-analysis

/// Textbook DerSimonian-Laird from per-task seed scores.
fn scripted_dl(tasks: &[Vec<f64>]) -> (f64, f64) {
    let k = tasks.len() as f64;
    let mut y = Vec::new();
    let mut v = Vec::new();
    for seeds in tasks {
        let n = seeds.len() as f64;
        let m = seeds.iter().sum::<f64>() / n;
        let s2 = seeds.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
        y.push(m);
        v.push(s2 / n);
    }
    let w: Vec<f64> = v.iter().map(|v| 1.0 / v).collect();
    let sw: f64 = w.iter().sum();
    let ybar: f64 = w.iter().zip(&y).map(|(w, y)| w * y).sum::<f64>() / sw;
    let q: f64 = w.iter().zip(&y).map(|(w, y)| w * (y - ybar).powi(2)).sum();
    let c = sw - w.iter().map(|w| w * w).sum::<f64>() / sw;
    let tau2 = f64::max(0.0, (q - (k - 1.0)) / c);
    let ws: Vec<f64> = v.iter().map(|v| 1.0 / (v + tau2)).collect();
    let mu = ws.iter().zip(&y).map(|(w, y)| w * y).sum::<f64>() / ws.iter().sum::<f64>();
    (mu, tau2)
}

/// Four tasks of four seeds each whose pooled mean is `mu` and whose
/// between-task variance is `tau2`. Every task gets the same within-task
/// variance `sigma2`, which makes the pooled mean the plain average of task
/// means and tau² their sample variance minus `sigma2`.
fn shaped_fixture(mu: f64, tau2: f64, sigma2: f64) -> Vec<Vec<f64>> {
    // Offsets (-3, -1, 1, 3) c have sample variance 20 c² / 3.
    let c = ((tau2 + sigma2) * 3.0 / 20.0).sqrt();
    // Seeds m ± a, m ± a: variance of the mean = (4 a² / 3) / 4.
    let a = (3.0 * sigma2).sqrt();
    [-3.0, -1.0, 1.0, 3.0].iter().map(|o| mu + o * c).map(|m| vec![m - a, m + a, m - a, m + a]).collect()
}

fn meta_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20 {
        let tasks: Vec<Vec<f64>> = (0..4).map(|_| (0..4).map(|_| rng.gen_range(0.4..0.95)).collect()).collect();
        let named: Vec<(String, Vec<f64>)> = tasks.iter().enumerate().map(|(i, s)| (format!("t{i}"), s.clone())).collect();
        let re = random_effects(&named).map_err(|e| e.to_string())?;
        let (mu, tau2) = scripted_dl(&tasks);
        ensure!(close(re.pooled_mean, mu, 1e-10) && close(re.tau2, tau2, 1e-10), "DL mismatch {re:?} vs ({mu}, {tau2})");
    }

    // Homogeneous tasks: Q < k - 1, so tau² clamps to zero and the estimate is the fixed-effect mean.
    let clamped = dersimonian_laird(vec![0.70, 0.71, 0.70, 0.71], vec![0.01, 0.02, 0.01, 0.02]);
    ensure!(clamped.tau2 == 0.0, "tau2 {} not clamped", clamped.tau2);
    let fixed = (0.70 / 0.01 + 0.71 / 0.02 + 0.70 / 0.01 + 0.71 / 0.02) / (2.0 / 0.01 + 2.0 / 0.02);
    ensure!(close(clamped.pooled_mean, fixed, 1e-12), "clamped mean {}", clamped.pooled_mean);
    let y = [0.5, 0.9, 0.7, 0.6];
    let v = [1e-4, 0.05, 0.002, 0.01];
    let limit = pooled_mean_with_tau2(&y, &v, 1e12);
    ensure!(close(limit, y.iter().sum::<f64>() / 4.0, 1e-9), "large tau2 limit {limit}");

    let sigma2 = 1e-4;
    let mut obs = Vec::new();
    let configs = [("bm25+multi-e5+jina", 0.7308, 0.0355, 0.7637, 0.0232), ("bm25+text-3-large+jina", 0.7316, 0.0483, 0.7576, 0.0328)];
    for (id, macro_mu, macro_tau2, micro_mu, micro_tau2) in configs {
        let ma = shaped_fixture(macro_mu, macro_tau2, sigma2);
        let mi = shaped_fixture(micro_mu, micro_tau2, sigma2);
        for t in 0..4 {
            for s in 0..4 {
                obs.push(RunObservation {
                    config_id: id.into(),
                    task_id: format!("task{t}"),
                    seed: s as u64,
                    macro_f1: ma[t][s],
                    micro_f1: mi[t][s],
                });
            }
        }
    }
    let ranked = rank_configs(&obs).map_err(|e| e.to_string())?;
    for r in &ranked {
        let (_, macro_mu, macro_tau2, micro_mu, micro_tau2) = configs.iter().find(|c| c.0 == r.config_id).unwrap();
        ensure!(close(r.macro_f1.pooled_mean, *macro_mu, 1e-10), "{} macro {}", r.config_id, r.macro_f1.pooled_mean);
        ensure!(close(r.macro_f1.tau2, *macro_tau2, 1e-10), "{} macro tau2 {}", r.config_id, r.macro_f1.tau2);
        ensure!(close(r.micro_f1.pooled_mean, *micro_mu, 1e-10), "{} micro {}", r.config_id, r.micro_f1.pooled_mean);
        ensure!(close(r.micro_f1.tau2, *micro_tau2, 1e-10), "{} micro tau2 {}", r.config_id, r.micro_f1.tau2);
    }
    ensure!(ranked[0].config_id == configs[0].0, "ranking {:?}", ranked.iter().map(|r| &r.config_id).collect::<Vec<_>>());
    ensure!(close(ranked[0].composite, 0.7308 + 0.7637, 1e-10), "composite {}", ranked[0].composite);
    Ok(())
}

// ------------------------------------------------------------------ end to end

fn end_to_end_determinism() -> Check {
    let mut contract = demo_contract();
    let setup = demo_setup(300, 100, 42);
    for c in setup.corpus.clauses().iter().filter(|c| c.is_abusive()).take(6) {
        contract.push_str("\n\n");
        contract.push_str(&c.text);
    }
    let run = || {
        let chat = Arc::new(phrase_chat(&setup.taxonomy));
        let pipeline = demo_pipeline(demo_setup(300, 100, 42), chat.clone() as Arc<dyn ChatProvider>, PipelineConfig::default());
        let outcome = pipeline.scan(&contract, ContentType::Text, &ScanOptions::default());
        let flagged = pipeline.detector().detect(&pipeline.chunk(&contract, ContentType::Text)).iter().filter(|d| d.flagged).count();
        (outcome.report.to_json(), chat.calls(), flagged, outcome.llm_calls())
    };
    let (first, calls, flagged, audited) = run();
    let (second, ..) = run();
    ensure!(first == second, "findings JSON differs between runs");
    ensure!(flagged >= 3, "only {flagged} flagged chunks in the fixture");
    ensure!(calls == flagged * 3, "{calls} chat calls for {flagged} flagged chunks x 3 categories");
    ensure!(audited == calls, "audit log records {audited} calls, provider saw {calls}");
    Ok(())
}

fn detector_sanity() -> Check {
    let tax = Taxonomy::default();
    let corpus = generate_corpus(&SyntheticConfig { ok_clauses: 2400, abusive_clauses: 600, seed: 77, ..Default::default() }, &tax);
    let task = TaskSpec::new(TaskName::JointDetect, &tax);
    let data = derive_task_dataset(&corpus, &task, &tax);
    let split = stratified_split(&data, SplitRatios::default(), task.name, 77).map_err(|e| e.to_string())?;
    let part = |p: Partition| -> Vec<(&str, bool)> {
        let ids: HashSet<&str> = split.ids(p).iter().map(String::as_str).collect();
        data.iter().filter(|e| ids.contains(e.clause_id.as_str())).map(|e| (e.text.as_str(), e.target[0] == ABUSIVE)).collect()
    };
    let train = part(Partition::Train);
    let test = part(Partition::Test);
    let model = train_detector(&train, TrainConfig { seed: 77, ..Default::default() }).map_err(|e| e.to_string())?;
    let f1 = positive_f1(&model, &test);
    ensure!(f1 >= 0.95, "held-out abusive F1 {f1:.4}");

    for lambda in [1e-3, 0.5, 3.0, 1e4] {
        let scaled = LinearDetector::new(
            model.vocabulary.clone(),
            model.weights.iter().map(|w| w * lambda).collect(),
            model.bias * lambda,
            model.config,
        )
        .map_err(|e| e.to_string())?;
        for (text, _) in &test {
            ensure!(
                model.is_flagged(model.score(text)) == scaled.is_flagged(scaled.score(text)),
                "decision changed under scaling by {lambda}"
            );
        }
    }
    Ok(())
}

fn main() {
    let demo = demo_setup(400, 120, 5);
    let criteria: Vec<(&str, Duration, Box<dyn FnOnce() -> Check + '_>)> = vec![
        ("metric oracle", Duration::from_secs(1), Box::new(metric_oracle)),
        ("error decomposition identity", Duration::from_secs(1), Box::new(error_identity)),
        ("stratified split", Duration::from_secs(5), Box::new(stratified_split_shares)),
        ("retrieval oracle", Duration::from_secs(10), Box::new(retrieval_oracle)),
        ("hybrid + rerank contract", Duration::from_secs(10), Box::new(|| hybrid_rerank_contract(&demo))),
        ("prompt round trip", Duration::from_secs(5), Box::new(prompt_round_trip)),
        ("majority-vote equivalence", Duration::from_secs(5), Box::new(majority_vote_equivalence)),
        ("meta-analysis oracle", Duration::from_secs(1), Box::new(meta_oracle)),
        ("end-to-end determinism", Duration::from_secs(10), Box::new(end_to_end_determinism)),
        ("detector sanity", Duration::from_secs(30), Box::new(detector_sanity)),
    ];
    let mut failed = 0;
    for (name, budget, check) in criteria {
        let start = Instant::now();
        let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(check))
            .unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let verdict = match result {
            Ok(()) if elapsed <= budget => Ok(()),
            Ok(()) => Err(format!("took {elapsed:.2?}, budget {budget:?}")),
            Err(e) => Err(e),
        };
        match verdict {
            Ok(()) => println!("PASS  {name:<30} {elapsed:>10.2?} (budget {budget:?})"),
            Err(e) => {
                failed += 1;
                println!("FAIL  {name:<30} {elapsed:>10.2?} (budget {budget:?}): {e}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
