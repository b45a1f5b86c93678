//! Exchange with human editors.
//!
//! [`export_packet`] writes each selected candidate to `<id>.txt` next to a
//! `manifest.json`. Editors change the files in place; [`import_edits`] reads
//! them back as `edited` passages whose parent is the candidate, and reports
//! how much each one changed at word level.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::clock::Clock;
use crate::corpus::{CorpusError, Passage, PassageStore, Provenance};
use crate::digest::{json_digest, sha256_hex};

pub const MANIFEST_FILE: &str = "manifest.json";

pub const DEFAULT_INSTRUCTIONS: &str = "Correct grammatical errors and factual mistakes. \
Check figures, dates and statistics against a trusted source. \
Keep the length, structure and reading level of the passage. \
Save the file in place as UTF-8 plain text.";

#[derive(Debug, thiserror::Error)]
pub enum ReviewError {
    #[error("nothing to review: the id list is empty")]
    Empty,
    #[error("unknown passage `{0}`")]
    UnknownId(String),
    #[error("`{id}` cannot be reviewed: {reason}")]
    NotReviewable { id: String, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest {path}: {reason}")]
    Manifest { path: PathBuf, reason: String },
    #[error("editor label must not be empty")]
    EmptyEditor,
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReviewError + '_ {
    move |source| ReviewError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacketItem {
    pub candidate_id: String,
    /// File name relative to the packet directory.
    pub file: String,
    /// sha256 of the exported text.
    pub text_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewPacket {
    pub packet_id: String,
    pub items: Vec<PacketItem>,
    pub exported_at: DateTime<Utc>,
    pub instructions: String,
}

impl ReviewPacket {
    pub fn digest(&self) -> String {
        json_digest(self)
    }

    /// Reads `manifest.json` from `dir`.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self, ReviewError> {
        let path = dir.as_ref().join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        serde_json::from_str(&text).map_err(|e| ReviewError::Manifest { path, reason: e.to_string() })
    }
}

fn file_name(id: &str) -> String {
    let safe: String = id.chars().map(|c| if c.is_alphanumeric() || "-_.".contains(c) { c } else { '_' }).collect();
    format!("{safe}.txt")
}

/// Writes one text file per candidate and the manifest.
///
/// Every id must be a generated passage that some batch selected.
/// Exporting the same candidates again into the same directory leaves the
/// manifest unchanged, including its timestamp.
pub fn export_packet(
    ids: &[String],
    store: &PassageStore,
    dir: impl AsRef<Path>,
    clock: &dyn Clock,
) -> Result<ReviewPacket, ReviewError> {
    if ids.is_empty() {
        return Err(ReviewError::Empty);
    }
    let dir = dir.as_ref();
    let mut items = Vec::with_capacity(ids.len());
    let mut texts = Vec::with_capacity(ids.len());
    for id in ids {
        let p = store.get(id).ok_or_else(|| ReviewError::UnknownId(id.clone()))?;
        if p.provenance != Provenance::Generated {
            return Err(ReviewError::NotReviewable {
                id: id.clone(),
                reason: format!("provenance is {}", p.provenance.as_str()),
            });
        }
        if !store.is_selected(id) {
            return Err(ReviewError::NotReviewable { id: id.clone(), reason: "not selected by any batch".into() });
        }
        if items.iter().any(|i: &PacketItem| i.candidate_id == *id) {
            continue;
        }
        items.push(PacketItem { candidate_id: id.clone(), file: file_name(id), text_sha256: sha256_hex(&p.text) });
        texts.push(&p.text);
    }
    let packet_id = format!("packet-{}", &json_digest(&items)[..12]);

    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let exported_at = match ReviewPacket::load(dir) {
        Ok(prev) if prev.packet_id == packet_id && prev.items == items => prev.exported_at,
        _ => clock.now(),
    };
    for (item, text) in items.iter().zip(texts) {
        let path = dir.join(&item.file);
        fs::write(&path, text).map_err(io_err(&path))?;
    }
    let packet = ReviewPacket { packet_id, items, exported_at, instructions: DEFAULT_INSTRUCTIONS.to_owned() };
    let path = dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&packet).expect("packet serializes");
    fs::write(&path, json + "\n").map_err(io_err(&path))?;
    Ok(packet)
}

/// Word-level Levenshtein distance over whitespace-separated tokens.
pub fn token_edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<&str> = a.split_whitespace().collect();
    let b: Vec<&str> = b.split_whitespace().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `distance / max(token counts)`, 0 when both texts are empty.
pub fn fraction_changed(a: &str, b: &str) -> f64 {
    let longest = a.split_whitespace().count().max(b.split_whitespace().count());
    if longest == 0 {
        return 0.0;
    }
    token_edit_distance(a, b) as f64 / longest as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditRecord {
    pub candidate_id: String,
    pub edited_id: String,
    pub edited_text: String,
    pub editor_label: String,
    pub token_edit_distance: usize,
    pub fraction_changed: f64,
    pub imported_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemFailure {
    pub candidate_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ImportReport {
    pub records: Vec<EditRecord>,
    pub failures: Vec<ItemFailure>,
    pub warnings: Vec<String>,
}

impl ImportReport {
    pub fn is_complete(&self) -> bool {
        self.failures.is_empty()
    }
}

fn slug(label: &str) -> String {
    label.chars().map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '-' }).collect()
}

/// Imports the edited files of `packet` from `dir` as edited passages.
///
/// Problems with one item (missing file, candidate no longer in the store)
/// are reported in [`ImportReport::failures`] and do not stop the others.
/// An unchanged file is imported with distance 0 and a warning.
pub fn import_edits(
    packet: &ReviewPacket,
    dir: impl AsRef<Path>,
    store: &mut PassageStore,
    editor_label: &str,
    clock: &dyn Clock,
) -> Result<ImportReport, ReviewError> {
    let editor = editor_label.trim();
    if editor.is_empty() {
        return Err(ReviewError::EmptyEditor);
    }
    let dir = dir.as_ref();
    let mut report = ImportReport::default();
    for item in &packet.items {
        let fail = |error: String| ItemFailure { candidate_id: item.candidate_id.clone(), error };
        let Some(parent) = store.get(&item.candidate_id).cloned() else {
            report.failures.push(fail("candidate is not in the corpus".into()));
            continue;
        };
        let path = dir.join(&item.file);
        let edited = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) => {
                report.failures.push(fail(format!("{}: {e}", path.display())));
                continue;
            }
        };
        let distance = token_edit_distance(&parent.text, &edited);
        if distance == 0 {
            report.warnings.push(format!("{}: file is unchanged from the exported text", item.candidate_id));
        }
        let prefix = format!("{}-edit-{}-", parent.id, slug(editor));
        let seq = store.passages().iter().filter(|p| p.id.starts_with(&prefix)).count() + 1;
        let passage = Passage::new(
            format!("{prefix}{seq}"),
            parent.title.clone(),
            edited.clone(),
            parent.genre,
            Provenance::Edited,
            clock.now(),
        )
        .with_parent(parent.id.clone())
        .with_tags([format!("editor:{editor}"), format!("packet:{}", packet.packet_id)]);
        match store.store_passage(passage) {
            Ok(edited_id) => report.records.push(EditRecord {
                candidate_id: parent.id.clone(),
                edited_id,
                edited_text: edited.clone(),
                editor_label: editor.to_owned(),
                token_edit_distance: distance,
                fraction_changed: fraction_changed(&parent.text, &edited),
                imported_at: clock.now(),
            }),
            Err(e) => report.failures.push(fail(e.to_string())),
        }
    }
    Ok(report)
}
