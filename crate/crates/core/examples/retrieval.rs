//! BM25 retrieval over a handful of documentation snippets.
//!
//! ```text
//! cargo run --example retrieval -- "split a slice into chunks"
//! ```

use evoforge::rag::{truncate_to_budget, Bm25Index, KbDoc};

const DOCS: [(&str, &str); 5] = [
    (
        "first_chunk",
        "slice first_chunk returns an array reference to the first N elements, or None if the slice is shorter",
    ),
    ("chunk_by", "slice chunk_by splits a slice into runs of consecutive elements for which the predicate holds"),
    ("pop_if", "Vec pop_if removes and returns the last element if the predicate returns true"),
    ("uninitialized", "mem uninitialized is deprecated; use MaybeUninit to handle uninitialized memory"),
    ("div_ceil", "u32 div_ceil divides and rounds the quotient toward positive infinity"),
];

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let query = std::env::args().nth(1).unwrap_or_else(|| "split a slice into chunks".into());
    let docs = DOCS
        .iter()
        .map(|(id, text)| KbDoc { doc_id: id.to_string(), change_id: id.to_string(), text: text.to_string() })
        .collect();
    let index = Bm25Index::from_docs(docs)?;
    println!("query: {query}");
    for hit in index.retrieve(&query, 3)? {
        println!("  {:>7.4}  {:<14} {}", hit.score, hit.doc.doc_id, truncate_to_budget(&hit.doc.text, 8));
    }
    Ok(())
}
