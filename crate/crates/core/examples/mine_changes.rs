//! Mines one release pair held in memory: release notes, two doc trees and
//! two source snapshots, fused into change records.

use std::collections::BTreeMap;
use std::path::Path;

use evoforge::doc_diff::{diff_doc_trees, DocItem, DocTree, Stability};
use evoforge::fuse::fuse;
use evoforge::model::{ApiIdentity, ApiSignature, ItemKind, VersionId};
use evoforge::release_notes::parse_release_notes;
use evoforge::source::{diff_item_bodies_in, scan_attributes_in, SourceContext};

const NOTES: &str = "\
Stabilized APIs
---------------
- Stabilize `slice::first_chunk`
- Deprecate `std::mem::uninitialized` in favor of `std::mem::MaybeUninit`
";

// std/num.rs in both snapshots, std/slice.rs in the new one
const OLD_NUM: &str = "pub fn halve(x: u32) -> u32 { x / 2 }\n";
const NEW_NUM: &str = "pub fn halve(x: u32) -> u32 { x.div_ceil(2) }\n";
const NEW_SLICE: &str = "\
#[stable(feature = \"chunks\", since = \"1.77.0\")]
pub fn first_chunk(xs: &[u8]) -> Option<&[u8; 2]> { xs.first_chunk() }
";

fn item(path: &str, sig: &str, body: &str, stability: Stability) -> DocItem {
    DocItem {
        api: ApiIdentity::parse(path, ItemKind::Function).unwrap(),
        signature: ApiSignature::parse(sig).unwrap(),
        doc_body: body.into(),
        stability,
    }
}

fn tree(version: VersionId, items: Vec<DocItem>) -> DocTree {
    DocTree { version, items: items.into_iter().map(|i| (i.api.canonical(), i)).collect::<BTreeMap<_, _>>() }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (from, to) = (VersionId::new(1, 76, 0), VersionId::new(1, 77, 0));

    let notes = parse_release_notes(NOTES, to);
    println!("release notes: {} signals, {:?}", notes.signals.len(), notes.diagnostics);

    let stable = Stability::StableSince { version: from };
    let old = tree(from, vec![item("std::num::halve", "pub fn halve(x: u32) -> u32", "Rounds down.", stable.clone())]);
    let new = tree(
        to,
        vec![
            item("std::num::halve", "pub fn halve(x: u32) -> u32", "Rounds up.", stable),
            item(
                "std::slice::first_chunk",
                "pub fn first_chunk(xs: &[u8]) -> Option<&[u8; 2]>",
                "Returns the first two elements.",
                Stability::StableSince { version: to },
            ),
        ],
    );
    let docs = diff_doc_trees(&old, &new)?;
    println!("doc diff: {} signals", docs.len());

    let ctx = |file: &str| SourceContext::from_relative_path(Path::new(file)).unwrap();
    let mut src = diff_item_bodies_in(OLD_NUM, NEW_NUM, &ctx("std/num.rs"), to)?;
    src.extend(scan_attributes_in(NEW_SLICE, &ctx("std/slice.rs"), to).0);
    println!("source: {} signals", src.len());

    let out = fuse(&notes.signals, &docs, &src, from, to);
    for r in &out.records {
        let sources: Vec<String> = r.provenance.iter().map(|p| format!("{p:?}").to_lowercase()).collect();
        println!("  {:<16} {:<32} [{}]", r.kind.to_string(), r.api.canonical(), sources.join(", "));
    }
    for s in &out.low_confidence {
        println!("  low confidence: {} ({})", s.record.api.canonical(), s.reason);
    }
    Ok(())
}
