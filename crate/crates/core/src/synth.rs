//! Synthetic staging corpora for one release pair.
//!
//! [`write_staging`] lays out release notes, two doc trees, two source
//! snapshots and a handful of client repositories, and returns a
//! [`PlantingManifest`] naming every event it planted. Each change kind gets
//! the same number of events; every third event lives in a third-party crate
//! so only the doc and source miners can see it. The corpus also carries
//! noise that must not produce records: unchanged items, an item that stays
//! unstable, a whitespace-only source edit, notes lines without a resolvable
//! path, and one source-only body edit that should surface as low confidence.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::doc_diff::{file_name_for, render_doc_html, DocItem, Stability};
use crate::model::{ApiIdentity, ApiSignature, ChangeKind, ItemKind, Provenance, SourceClass, VersionId};
use crate::release_notes::notes_file_name;
use crate::usage::RepoEntry;

/// Third-party crate used for events invisible to the release notes.
pub const THIRD_PARTY_CRATE: &str = "evocrate";

const LONG_STABLE: VersionId = VersionId::new(1, 50, 0);
const THIRD_PARTY_BASE: VersionId = VersionId::new(1, 0, 0);

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub events_per_kind: usize,
    pub from: VersionId,
    pub to: VersionId,
}

impl SynthSpec {
    pub fn new(events_per_kind: usize) -> Self {
        Self { events_per_kind, from: VersionId::new(1, 76, 0), to: VersionId::new(1, 77, 0) }
    }
}

/// Where each input of the mining pipeline was written, relative to the root.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StagingLayout {
    pub notes: PathBuf,
    pub docs: PathBuf,
    pub src: PathBuf,
    pub repo_index: PathBuf,
}

impl Default for StagingLayout {
    fn default() -> Self {
        Self {
            notes: "staging/notes".into(),
            docs: "staging/docs".into(),
            src: "staging/src".into(),
            repo_index: "staging/repos.jsonl".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedEvent {
    pub api: String,
    pub kind: ChangeKind,
    pub replacement: Option<String>,
    /// Miners expected to see the event.
    pub provenance: BTreeSet<Provenance>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantingManifest {
    pub from: VersionId,
    pub to: VersionId,
    pub events: Vec<PlantedEvent>,
    /// APIs whose only evidence is a source body edit.
    pub low_confidence: Vec<String>,
    /// Official items stable before `from` and identical in both doc trees.
    pub controls: Vec<String>,
    /// Repository URL to the planted APIs it calls with a valid manifest.
    pub usages: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Clone)]
struct State {
    signature: String,
    doc: String,
    stability: Stability,
    attrs: Vec<String>,
    body: String,
    /// Header text as written in the source file, when it differs from `signature`.
    source_header: Option<String>,
}

#[derive(Debug, Clone)]
struct Entry {
    api: ApiIdentity,
    old: Option<State>,
    new: Option<State>,
}

const STAB_NAMES: [&str; 6] =
    ["first_chunk_mut", "split_at_checked", "chunk_by", "div_ceil", "is_sorted_by_key", "get_many_mut"];
const SIG_NAMES: [&str; 6] =
    ["retain_limit", "extend_within", "from_fn_mut", "reserve_hint", "swap_with", "copy_within_len"];
const BEHAV_NAMES: [&str; 6] =
    ["midpoint", "saturating_step", "pow_mod", "trim_ascii", "leading_units", "checked_shift"];
const DEPR_NAMES: [&str; 6] = ["trim_left_old", "legacy_hash", "descend", "uninit_buf", "sub_fixed", "bytes_len"];

fn event_name(names: &[&str; 6], i: usize) -> String {
    let base = names[i % names.len()];
    if i < names.len() {
        base.to_string()
    } else {
        format!("{base}_{}", i / names.len())
    }
}

fn module_for(kind: ChangeKind) -> &'static str {
    match kind {
        ChangeKind::Stabilization => "slice",
        ChangeKind::SignatureChange => "iter",
        ChangeKind::BehavioralChange => "num",
        ChangeKind::Deprecation => "mem",
    }
}

fn function(crate_name: &str, module: &str, name: &str) -> ApiIdentity {
    ApiIdentity::new(crate_name, vec![module.to_string(), name.to_string()], ItemKind::Function)
        .expect("synthetic identities are well formed")
}

fn stable_attr(name: &str, since: VersionId) -> String {
    format!("#[stable(feature = \"evo_{name}\", since = \"{since}\")]")
}

fn unstable_attr(name: &str) -> String {
    format!("#[unstable(feature = \"evo_{name}\", issue = \"none\")]")
}

fn state(sig: String, doc: &str, stability: Stability, attrs: Vec<String>, body: &str) -> State {
    State { signature: sig, doc: doc.into(), stability, attrs, body: body.into(), source_header: None }
}

struct Builder {
    spec: SynthSpec,
    entries: Vec<Entry>,
    notes: Vec<String>,
    events: Vec<PlantedEvent>,
}

impl Builder {
    fn official(&self, crate_name: &str) -> bool {
        SourceClass::of_crate(crate_name) == SourceClass::Official
    }

    fn base(&self, crate_name: &str) -> VersionId {
        if self.official(crate_name) {
            LONG_STABLE
        } else {
            THIRD_PARTY_BASE
        }
    }

    fn stable_state(&self, crate_name: &str, name: &str, sig: String, doc: &str, body: &str) -> State {
        let since = self.base(crate_name);
        let attrs = if self.official(crate_name) { vec![stable_attr(name, since)] } else { Vec::new() };
        state(sig, doc, Stability::StableSince { version: since }, attrs, body)
    }

    fn plant(&mut self, crate_name: &str, kind: ChangeKind, i: usize) {
        let official = self.official(crate_name);
        let module = if official { module_for(kind) } else { "util" };
        let to = self.spec.to;
        let (name, replacement) = match kind {
            ChangeKind::Stabilization => (event_name(&STAB_NAMES, i), None),
            ChangeKind::SignatureChange => (event_name(&SIG_NAMES, i), None),
            ChangeKind::BehavioralChange => (event_name(&BEHAV_NAMES, i), None),
            ChangeKind::Deprecation => {
                let n = event_name(&DEPR_NAMES, i);
                let r = format!("{n}_next");
                (n, Some(r))
            }
        };
        let api = function(crate_name, module, &name);
        let sig = |ty: &str| format!("pub fn {name}(x: {ty}) -> {ty}");
        let mut provenance = BTreeSet::from([Provenance::Docdiff]);

        let (old, new) = match kind {
            ChangeKind::Stabilization => {
                let doc = format!("Returns the {name} of `x`.");
                let new_attrs = if official { vec![stable_attr(&name, to)] } else { Vec::new() };
                let new = state(sig("u32"), &doc, Stability::StableSince { version: to }, new_attrs, "x");
                // half of the official events were already present as unstable
                let old = (official && i.is_multiple_of(2))
                    .then(|| state(sig("u32"), &doc, Stability::Unstable, vec![unstable_attr(&name)], "x"));
                if official {
                    provenance.extend([Provenance::Changelog, Provenance::Srcdiff]);
                    self.notes.push(format!("- Stabilize `{module}::{name}`"));
                }
                (old, Some(new))
            }
            ChangeKind::SignatureChange => {
                let doc = format!("Applies {name} to `x`.");
                let old = self.stable_state(crate_name, &name, sig("u16"), &doc, "x");
                let new = self.stable_state(crate_name, &name, sig("u32"), &doc, "x");
                (Some(old), Some(new))
            }
            ChangeKind::BehavioralChange => {
                let old = self.stable_state(crate_name, &name, sig("u32"), "Rounds the result toward zero.", "x / 2");
                let new = self.stable_state(
                    crate_name,
                    &name,
                    sig("u32"),
                    "Rounds the result toward positive infinity.",
                    "x.div_ceil(2)",
                );
                provenance.insert(Provenance::Srcdiff);
                (Some(old), Some(new))
            }
            ChangeKind::Deprecation => {
                let r = replacement.clone().expect("deprecations carry a replacement");
                let doc = format!("Computes {name} of `x`.");
                let old = self.stable_state(crate_name, &name, sig("u32"), &doc, "x");
                let note = format!("use `{r}` instead");
                let mut new = old.clone();
                new.stability = Stability::DeprecatedSince { version: to, note: note.clone() };
                new.attrs.push(format!("#[deprecated(since = \"{to}\", note = \"{note}\")]"));
                provenance.insert(Provenance::Srcdiff);
                if official {
                    provenance.insert(Provenance::Changelog);
                    self.notes.push(format!("- Deprecate `{module}::{name}` in favor of `{module}::{r}`"));
                }
                let rdoc = format!("Computes {r} of `x`.");
                let rstate = self.stable_state(crate_name, &r, format!("pub fn {r}(x: u32) -> u32"), &rdoc, "x");
                self.entries.push(Entry {
                    api: function(crate_name, module, &r),
                    old: Some(rstate.clone()),
                    new: Some(rstate),
                });
                (Some(old), Some(new))
            }
        };
        self.events.push(PlantedEvent {
            api: api.canonical(),
            kind,
            replacement: replacement.map(|r| function(crate_name, module, &r).canonical()),
            provenance,
        });
        self.entries.push(Entry { api, old, new });
    }

    fn noise(&mut self) -> Vec<String> {
        for module in ["slice", "iter", "num", "mem"] {
            for j in 0..2 {
                let name = format!("{module}_fixed_{j}");
                let s = self.stable_state("std", &name, format!("pub fn {name}(x: u64) -> u64"), "Never changes.", "x");
                self.entries.push(Entry { api: function("std", module, &name), old: Some(s.clone()), new: Some(s) });
            }
        }
        let s = self.stable_state(
            THIRD_PARTY_CRATE,
            "steady",
            "pub fn steady(x: u64) -> u64".into(),
            "Never changes.",
            "x",
        );
        self.entries.push(Entry {
            api: function(THIRD_PARTY_CRATE, "util", "steady"),
            old: Some(s.clone()),
            new: Some(s),
        });

        let nightly = state(
            "pub fn nightly_probe(x: u8) -> u8".into(),
            "Experimental.",
            Stability::Unstable,
            vec![unstable_attr("nightly_probe")],
            "x",
        );
        self.entries.push(Entry {
            api: function("std", "slice", "nightly_probe"),
            old: Some(nightly.clone()),
            new: Some(nightly),
        });

        let old =
            self.stable_state("std", "reflow", "pub fn reflow(x: u32) -> u32".into(), "Formatting only.", "x + 1");
        let mut new = old.clone();
        new.source_header = Some("pub fn reflow(\n    x: u32,\n) -> u32".into());
        new.body = "x   +   1".into();
        self.entries.push(Entry { api: function("std", "iter", "reflow"), old: Some(old), new: Some(new) });

        let old = self.stable_state(
            "std",
            "quiet_fix",
            "pub fn quiet_fix(x: u32) -> u32".into(),
            "Undocumented edit.",
            "x + 1",
        );
        let mut new = old.clone();
        new.body = "x.saturating_add(1)".into();
        let quiet = function("std", "num", "quiet_fix");
        self.entries.push(Entry { api: quiet.clone(), old: Some(old), new: Some(new) });

        self.notes.push("- Stabilize the `#[diagnostic]` namespace".into());
        self.notes.push("- Improve compile times of `Vec::push`".into());
        vec![quiet.canonical()]
    }

    fn controls(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .entries
            .iter()
            .filter(|e| e.api.source_class() == SourceClass::Official)
            .filter_map(|e| match (&e.old, &e.new) {
                (Some(o), Some(n))
                    if o.signature == n.signature
                        && o.doc == n.doc
                        && o.stability == n.stability
                        && matches!(o.stability, Stability::StableSince { version } if version < self.spec.from) =>
                {
                    Some(e.api.canonical())
                }
                _ => None,
            })
            .collect();
        out.sort();
        out
    }
}

fn write(path: &Path, text: &str) -> Result<(), SynthError> {
    let io = |source| SynthError::Io { path: path.to_path_buf(), source };
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io)?;
    }
    fs::write(path, text).map_err(io)
}

fn doc_item(api: &ApiIdentity, s: &State) -> DocItem {
    DocItem {
        api: api.clone(),
        signature: ApiSignature::parse(&s.signature).expect("synthetic signatures parse"),
        doc_body: s.doc.clone(),
        stability: s.stability.clone(),
    }
}

fn source_files(entries: &[Entry], newer: bool) -> BTreeMap<PathBuf, String> {
    let mut files: BTreeMap<PathBuf, String> = BTreeMap::new();
    for e in entries {
        let Some(s) = (if newer { e.new.as_ref() } else { e.old.as_ref() }) else { continue };
        let module = &e.api.path[..e.api.path.len() - 1];
        let rel = PathBuf::from(&e.api.crate_name).join(format!("{}.rs", module.join("/")));
        let text = files.entry(rel).or_default();
        text.push_str(&format!("/// {}\n", s.doc));
        for a in &s.attrs {
            text.push_str(a);
            text.push('\n');
        }
        let header = s.source_header.as_deref().unwrap_or(&s.signature);
        text.push_str(&format!("{header} {{\n    {}\n}}\n\n", s.body));
    }
    files
}

struct Repo {
    name: &'static str,
    updated_on: &'static str,
    manifest: String,
    calls: Vec<(String, String)>,
}

fn repos(events: &[PlantedEvent], spec: &SynthSpec) -> Vec<Repo> {
    let pick = |kind: ChangeKind, official: bool| {
        events
            .iter()
            .filter(|e| e.kind == kind && e.api.starts_with("std::") == official)
            .map(|e| e.api.clone())
            .collect::<Vec<_>>()
    };
    let std_stab = pick(ChangeKind::Stabilization, true);
    let std_behav = pick(ChangeKind::BehavioralChange, true);
    let tp_sig = pick(ChangeKind::SignatureChange, false);
    let call = |api: &str| {
        let parts: Vec<&str> = api.split("::").collect();
        (format!("use {}::{};", parts[0], parts[1]), format!("{}::{}(3)", parts[1], parts[2]))
    };
    let std_manifest = |rv: &str| {
        format!("[package]\nname = \"client\"\nversion = \"0.1.0\"\nedition = \"2021\"\nrust-version = \"{rv}\"\n")
    };
    let to = spec.to;
    vec![
        Repo {
            name: "alpha",
            updated_on: "2024-05-01",
            manifest: std_manifest(&format!("{}.{}", to.major, to.minor)),
            calls: std_stab.iter().chain(&std_behav).map(|a| call(a)).collect(),
        },
        Repo {
            name: "stale",
            updated_on: "2024-01-15",
            manifest: std_manifest(&format!("{}.{}", to.major, to.minor)),
            calls: std_stab.iter().map(|a| call(a)).collect(),
        },
        Repo {
            name: "pinned",
            updated_on: "2024-08-01",
            manifest: std_manifest("1.80"),
            calls: std_behav.iter().map(|a| call(a)).collect(),
        },
        Repo {
            name: "beta",
            updated_on: "2024-06-02",
            manifest: format!(
                "[package]\nname = \"beta\"\nversion = \"0.2.0\"\nedition = \"2021\"\n\n[dependencies]\n{THIRD_PARTY_CRATE} = \"{}.{}\"\n",
                to.major, to.minor
            ),
            calls: tp_sig.iter().map(|a| call(a)).collect(),
        },
    ]
}

/// Writes a staging corpus under `root` and returns what was planted.
pub fn write_staging(root: &Path, spec: &SynthSpec) -> Result<PlantingManifest, SynthError> {
    let layout = StagingLayout::default();
    let mut b = Builder { spec: *spec, entries: Vec::new(), notes: Vec::new(), events: Vec::new() };
    for kind in ChangeKind::ALL {
        for i in 0..spec.events_per_kind {
            let crate_name = if i % 3 == 2 { THIRD_PARTY_CRATE } else { "std" };
            b.plant(crate_name, kind, i);
        }
    }
    let low_confidence = b.noise();
    b.entries.sort_by_key(|e| e.api.canonical());

    let notes = format!(
        "Version {} (2024-03-21)\n==========================\n\nLibraries\n---------\n{}\n",
        spec.to,
        b.notes.join("\n")
    );
    write(&root.join(&layout.notes).join(notes_file_name(spec.to)), &notes)?;

    for (version, newer) in [(spec.from, false), (spec.to, true)] {
        let doc_root = root.join(&layout.docs).join(version.to_string());
        for e in &b.entries {
            if let Some(s) = if newer { &e.new } else { &e.old } {
                let path = doc_root.join(&e.api.crate_name).join(file_name_for(&e.api));
                write(&path, &render_doc_html(&doc_item(&e.api, s)))?;
            }
        }
        let src_root = root.join(&layout.src).join(version.to_string());
        for (rel, text) in source_files(&b.entries, newer) {
            write(&src_root.join(rel), &text)?;
        }
    }

    let mut usages: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut index = String::new();
    for repo in repos(&b.events, spec) {
        let dir = root.join("staging/repos").join(repo.name);
        write(&dir.join("Cargo.toml"), &repo.manifest)?;
        let mut body = String::new();
        let imports: BTreeSet<&String> = repo.calls.iter().map(|(u, _)| u).collect();
        for u in imports {
            body.push_str(u);
            body.push('\n');
        }
        body.push_str("\nfn main() {\n");
        for (_, c) in &repo.calls {
            body.push_str(&format!("    let _ = {c};\n"));
        }
        body.push_str("}\n");
        write(&dir.join("src/main.rs"), &body)?;
        let url = format!("https://example.org/{}", repo.name);
        let entry = RepoEntry {
            repo_url: url.clone(),
            updated_on: NaiveDate::parse_from_str(repo.updated_on, "%Y-%m-%d").expect("static date"),
            local_path: PathBuf::from("repos").join(repo.name),
        };
        index.push_str(&serde_json::to_string(&entry)?);
        index.push('\n');
        if repo.name == "alpha" || repo.name == "beta" {
            for (_, c) in &repo.calls {
                let seg = c.trim_end_matches("(3)").rsplit("::").next().unwrap_or_default();
                if let Some(e) = b.events.iter().find(|e| e.api.ends_with(&format!("::{seg}"))) {
                    usages.entry(url.clone()).or_default().push(e.api.clone());
                }
            }
        }
    }
    write(&root.join(&layout.repo_index), &index)?;

    let mut events = b.events.clone();
    events.sort_by(|a, b| a.api.cmp(&b.api));
    let manifest =
        PlantingManifest { from: spec.from, to: spec.to, events, low_confidence, controls: b.controls(), usages };
    write(&root.join("manifest.json"), &serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}
