//! Criterion benchmarks for the hot paths; run with `cargo bench -p clausewatch-bench`.

/// A long plain-text contract made of repeated demo clauses.
pub fn long_contract(repeats: usize) -> String {
    let base = clausewatch::demo::demo_contract();
    (0..repeats).map(|_| base.as_str()).collect::<Vec<_>>().join("\n\n")
}
