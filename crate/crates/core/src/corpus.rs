//! Passage store.
//!
//! Passages are persisted one JSON record per line. The file is append-only:
//! a passage id can be written once, and derived facts (such as a candidate
//! being selected) are appended as separate records rather than rewrites.
//! Writers take an advisory lock on `<store>.lock` for the duration of an
//! append; readers never lock.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("passage id `{0}` already exists in the store")]
    DuplicateId(String),
    #[error("passage `{id}` violates an invariant: {reason}")]
    Invariant { id: String, reason: String },
    #[error("unknown passage id `{0}`")]
    UnknownId(String),
    #[error("{path}:{line}: malformed record: {source}")]
    Malformed { path: PathBuf, line: usize, source: serde_json::Error },
    #[error("{path}:{line}: unsupported schema_version {version}")]
    SchemaVersion { path: PathBuf, line: usize, version: u32 },
    #[error("store {0} is open read-only")]
    ReadOnly(PathBuf),
    #[error("store I/O failed: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Genre {
    Literary,
    Informational,
}

impl Genre {
    pub fn as_str(self) -> &'static str {
        match self {
            Genre::Literary => "literary",
            Genre::Informational => "informational",
        }
    }
}

impl fmt::Display for Genre {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Genre {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "literary" => Ok(Genre::Literary),
            "informational" => Ok(Genre::Informational),
            other => Err(format!("unknown genre `{other}` (expected literary or informational)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Reference,
    Generated,
    Edited,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Reference => "reference",
            Provenance::Generated => "generated",
            Provenance::Edited => "edited",
        }
    }
}

impl FromStr for Provenance {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "reference" => Ok(Provenance::Reference),
            "generated" => Ok(Provenance::Generated),
            "edited" => Ok(Provenance::Edited),
            other => Err(format!("unknown provenance `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Passage {
    pub id: String,
    pub text: String,
    pub title: String,
    pub genre: Genre,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_id: Option<String>,
    pub created_at: DateTime<Utc>,
    #[serde(default)]
    pub tags: Vec<String>,
}

impl Passage {
    pub fn new(
        id: impl Into<String>,
        title: impl Into<String>,
        text: impl Into<String>,
        genre: Genre,
        provenance: Provenance,
        created_at: DateTime<Utc>,
    ) -> Self {
        Passage {
            id: id.into(),
            text: text.into(),
            title: title.into(),
            genre,
            provenance,
            parent_id: None,
            created_at,
            tags: Vec::new(),
        }
    }

    pub fn with_parent(mut self, parent: impl Into<String>) -> Self {
        self.parent_id = Some(parent.into());
        self
    }

    pub fn with_tags<I, S>(mut self, tags: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.tags.extend(tags.into_iter().map(Into::into));
        self
    }

    pub fn has_tag(&self, tag: &str) -> bool {
        self.tags.iter().any(|t| t == tag)
    }

    /// Checks the invariants that do not need the rest of the store.
    pub fn validate(&self) -> Result<(), CorpusError> {
        let fail = |reason: &str| Err(CorpusError::Invariant { id: self.id.clone(), reason: reason.to_owned() });
        if self.id.trim().is_empty() {
            return fail("id is empty");
        }
        if self.text.trim().is_empty() {
            return fail("text is empty");
        }
        if self.provenance == Provenance::Edited && self.parent_id.is_none() {
            return fail("edited passage requires parent_id");
        }
        if self.parent_id.as_deref() == Some(self.id.as_str()) {
            return fail("passage cannot be its own parent");
        }
        Ok(())
    }
}

/// Named set of reference passages, ordered by id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferencePool {
    pub name: String,
    pub passages: Vec<Passage>,
}

impl ReferencePool {
    pub fn len(&self) -> usize {
        self.passages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.passages.is_empty()
    }
}

/// Marks a generated passage as selected (or explicitly rejected) by a batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionMark {
    pub passage_id: String,
    pub batch_id: String,
    pub selected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Record {
    Passage(Passage),
    Selection(SelectionMark),
}

#[derive(Serialize, Deserialize)]
struct Line {
    schema_version: u32,
    #[serde(flatten)]
    record: Record,
}

/// JSONL-backed passage store.
#[derive(Debug)]
pub struct PassageStore {
    path: PathBuf,
    passages: Vec<Passage>,
    index: HashMap<String, usize>,
    marks: Vec<SelectionMark>,
    loaded_len: u64,
    read_only: bool,
}

impl PassageStore {
    /// Opens the store at `path`, creating an empty file if none exists.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let path = path.as_ref().to_path_buf();
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        if !path.exists() {
            File::create(&path)?;
        }
        let mut store = PassageStore {
            path,
            passages: Vec::new(),
            index: HashMap::new(),
            marks: Vec::new(),
            loaded_len: 0,
            read_only: false,
        };
        store.reload()?;
        Ok(store)
    }

    /// Loads an existing store without creating or locking anything; writes fail.
    pub fn open_read_only(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let mut store = PassageStore {
            path: path.as_ref().to_path_buf(),
            passages: Vec::new(),
            index: HashMap::new(),
            marks: Vec::new(),
            loaded_len: 0,
            read_only: true,
        };
        store.reload()?;
        Ok(store)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Re-reads the file from disk.
    pub fn reload(&mut self) -> Result<(), CorpusError> {
        let file = File::open(&self.path)?;
        let len = file.metadata()?.len();
        let mut passages = Vec::new();
        let mut index = HashMap::new();
        let mut marks = Vec::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: Line = serde_json::from_str(&line).map_err(|source| CorpusError::Malformed {
                path: self.path.clone(),
                line: n + 1,
                source,
            })?;
            if parsed.schema_version != SCHEMA_VERSION {
                return Err(CorpusError::SchemaVersion {
                    path: self.path.clone(),
                    line: n + 1,
                    version: parsed.schema_version,
                });
            }
            match parsed.record {
                Record::Passage(p) => {
                    if index.insert(p.id.clone(), passages.len()).is_some() {
                        return Err(CorpusError::DuplicateId(p.id));
                    }
                    passages.push(p);
                }
                Record::Selection(m) => marks.push(m),
            }
        }
        self.passages = passages;
        self.index = index;
        self.marks = marks;
        self.loaded_len = len;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.passages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.passages.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Passage> {
        self.index.get(id).map(|&i| &self.passages[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    /// All passages in insertion order.
    pub fn passages(&self) -> &[Passage] {
        &self.passages
    }

    /// Appends a passage and returns its id.
    pub fn store_passage(&mut self, passage: Passage) -> Result<String, CorpusError> {
        passage.validate()?;
        let _lock = self.lock()?;
        self.refresh_if_changed()?;
        if self.contains(&passage.id) {
            return Err(CorpusError::DuplicateId(passage.id));
        }
        if let Some(parent_id) = &passage.parent_id {
            let parent = self.get(parent_id).ok_or_else(|| CorpusError::Invariant {
                id: passage.id.clone(),
                reason: format!("parent `{parent_id}` is not in the store"),
            })?;
            if passage.provenance == Provenance::Edited && parent.provenance != Provenance::Generated {
                return Err(CorpusError::Invariant {
                    id: passage.id.clone(),
                    reason: format!(
                        "edited passage must derive from a generated passage, `{parent_id}` is {}",
                        parent.provenance.as_str()
                    ),
                });
            }
        }
        self.append(&Record::Passage(passage.clone()))?;
        let id = passage.id.clone();
        self.index.insert(id.clone(), self.passages.len());
        self.passages.push(passage);
        Ok(id)
    }

    /// Records the selection decision of `batch_id` for a generated passage.
    pub fn mark_selection(&mut self, mark: SelectionMark) -> Result<(), CorpusError> {
        let _lock = self.lock()?;
        self.refresh_if_changed()?;
        let passage = self.get(&mark.passage_id).ok_or_else(|| CorpusError::UnknownId(mark.passage_id.clone()))?;
        if passage.provenance != Provenance::Generated {
            return Err(CorpusError::Invariant {
                id: mark.passage_id.clone(),
                reason: "only generated passages can be selected".into(),
            });
        }
        if self.marks.iter().any(|m| m.passage_id == mark.passage_id && m.batch_id == mark.batch_id) {
            return Err(CorpusError::DuplicateId(format!(
                "{} (selection in batch {})",
                mark.passage_id, mark.batch_id
            )));
        }
        self.append(&Record::Selection(mark.clone()))?;
        self.marks.push(mark);
        Ok(())
    }

    /// True if any batch selected the passage.
    pub fn is_selected(&self, id: &str) -> bool {
        self.marks.iter().any(|m| m.passage_id == id && m.selected)
    }

    pub fn selection_marks(&self) -> &[SelectionMark] {
        &self.marks
    }

    /// Reference passages matching `tag_filter`, ordered by id.
    ///
    /// The filter matches either an entry in `tags` or the genre name.
    pub fn load_pool(&self, tag_filter: Option<&str>) -> ReferencePool {
        let mut passages: Vec<Passage> = self
            .passages
            .iter()
            .filter(|p| p.provenance == Provenance::Reference)
            .filter(|p| match tag_filter {
                None => true,
                Some(tag) => p.has_tag(tag) || p.genre.as_str() == tag,
            })
            .cloned()
            .collect();
        passages.sort_by(|a, b| a.id.cmp(&b.id));
        ReferencePool { name: tag_filter.unwrap_or("all").to_owned(), passages }
    }

    /// Follows `parent_id` links from `id` back to the root, starting with `id` itself.
    pub fn lineage(&self, id: &str) -> Result<Vec<&Passage>, CorpusError> {
        let mut chain = Vec::new();
        let mut seen = BTreeSet::new();
        let mut cursor = Some(id.to_owned());
        while let Some(current) = cursor {
            if !seen.insert(current.clone()) {
                return Err(CorpusError::Invariant {
                    id: id.to_owned(),
                    reason: format!("lineage cycle through `{current}`"),
                });
            }
            let p = self.get(&current).ok_or_else(|| CorpusError::UnknownId(current.clone()))?;
            chain.push(p);
            cursor = p.parent_id.clone();
        }
        Ok(chain)
    }

    fn lock(&self) -> Result<File, CorpusError> {
        if self.read_only {
            return Err(CorpusError::ReadOnly(self.path.clone()));
        }
        let mut lock_path = self.path.clone().into_os_string();
        lock_path.push(".lock");
        let file = OpenOptions::new().create(true).truncate(false).write(true).open(PathBuf::from(lock_path))?;
        file.lock()?;
        Ok(file)
    }

    fn refresh_if_changed(&mut self) -> Result<(), CorpusError> {
        if fs::metadata(&self.path)?.len() != self.loaded_len {
            self.reload()?;
        }
        Ok(())
    }

    fn append(&mut self, record: &Record) -> Result<(), CorpusError> {
        let line = Line { schema_version: SCHEMA_VERSION, record: record.clone() };
        let mut encoded = serde_json::to_string(&line).expect("records always serialize");
        encoded.push('\n');
        let mut file = OpenOptions::new().append(true).open(&self.path)?;
        file.write_all(encoded.as_bytes())?;
        file.flush()?;
        self.loaded_len = file.metadata()?.len();
        Ok(())
    }
}
