//! Writes a synthetic staging corpus and a matching `evo.config.json`.
//!
//! ```text
//! cargo run --example synth_corpus -- /tmp/evo 6
//! evoforge --config /tmp/evo/evo.config.json mine
//! ```

use std::path::PathBuf;

use evoforge::cli::config::{Config, CONFIG_FILE};
use evoforge::synth::{write_staging, StagingLayout, SynthSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let root = PathBuf::from(args.next().unwrap_or_else(|| "evo-fixture".into()));
    let per_kind: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(3);
    let spec = SynthSpec::new(per_kind);
    let manifest = write_staging(&root, &spec)?;
    Config::for_staging(&StagingLayout::default(), spec.from, spec.to).write(&root.join(CONFIG_FILE))?;
    println!("planted {} events under {}", manifest.events.len(), root.display());
    for e in &manifest.events {
        println!("  {:<16} {}", e.kind.to_string(), e.api);
    }
    Ok(())
}
