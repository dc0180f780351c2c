//! BM25 scores on a four-document corpus, checked against values computed
//! by hand (k1 = 1.2, b = 0.75, idf = ln(1 + (N - df + 0.5) / (df + 0.5))).

use evoforge::rag::{Bm25Index, KbDoc};

fn toy_index() -> Bm25Index {
    let docs = [
        ("d1", "slice first chunk mut returns a mutable array reference to the first chunk"),
        ("d2", "vec pop if removes the last element when the predicate holds"),
        ("d3", "slice chunk by groups consecutive elements of a slice"),
        ("d4", "mem uninitialized is deprecated use maybe uninit"),
    ];
    Bm25Index::from_docs(
        docs.iter()
            .map(|(id, text)| KbDoc { doc_id: id.to_string(), change_id: id.to_string(), text: text.to_string() })
            .collect(),
    )
    .unwrap()
}

fn assert_scores(query: &str, expected: [f64; 4]) {
    let scores = toy_index().scores(query);
    for ((id, got), want) in scores.iter().zip(expected) {
        assert!((got - want).abs() < 5e-7, "{query:?} {id}: got {got:.6}, want {want:.6}");
    }
}

#[test]
fn scores_match_hand_computation() {
    assert_scores("slice chunk", [1.496297, 0.0, 1.703371, 0.0]);
    assert_scores("predicate", [0.0, 1.156655, 0.0, 0.0]);
    // repeated query terms count once per occurrence
    assert_scores("first chunk of a slice", [3.640326, 0.0, 3.681411, 0.0]);
}

#[test]
fn unique_term_ranks_its_document_first() {
    let idx = toy_index();
    assert_eq!(idx.retrieve("predicate", 1).unwrap()[0].doc.doc_id, "d2");
    assert_eq!(idx.retrieve("elements", 1).unwrap()[0].doc.doc_id, "d3");
}

#[test]
fn retrieval_is_repeatable() {
    let idx = toy_index();
    let first = idx.retrieve("slice chunk first", 4).unwrap();
    for _ in 0..100 {
        assert_eq!(idx.retrieve("slice chunk first", 4).unwrap(), first);
    }
}

#[test]
fn index_survives_a_save_load_cycle() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("kb.index.json");
    let idx = toy_index();
    idx.save(&path).unwrap();
    let loaded = Bm25Index::load(&path).unwrap();
    assert_eq!(loaded.scores("slice chunk"), idx.scores("slice chunk"));
}
