//! Document collection and citation graph.
//!
//! A corpus is read from newline-delimited JSON, one document per line. Outgoing
//! citations are kept verbatim (including targets that are not part of the
//! collection); the reverse index and all neighbourhood queries only ever
//! report documents that are present.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DocumentId(String);

impl DocumentId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for DocumentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for DocumentId {
    fn from(value: &str) -> Self {
        Self(value.to_owned())
    }
}

impl From<String> for DocumentId {
    fn from(value: String) -> Self {
        Self(value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: DocumentId,
    pub title: String,
    pub authors: Vec<String>,
    pub year: Option<i32>,
    pub venue: Option<String>,
    /// Title and text joined by a single space; this is what gets indexed.
    pub body: String,
    /// Raw outgoing citations, dangling targets included.
    pub cites: BTreeSet<DocumentId>,
}

impl Document {
    pub fn first_author(&self) -> Option<&str> {
        self.authors.first().map(String::as_str)
    }
}

/// Which side of the citation graph to follow from a seed set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Documents that cite the seeds.
    Citing,
    /// Documents the seeds cite.
    Cited,
    Both,
}

impl std::str::FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "citing" => Ok(Direction::Citing),
            "cited" => Ok(Direction::Cited),
            "both" => Ok(Direction::Both),
            other => Err(format!("unknown direction `{other}` (expected citing, cited or both)")),
        }
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: missing required field `{field}`")]
    MissingField { line: usize, field: &'static str },
    #[error("line {line}: duplicate document id `{id}`")]
    DuplicateId { line: usize, id: DocumentId },
    #[error("unknown document `{0}`")]
    NotFound(DocumentId),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// On-disk record layout. Unknown keys are ignored.
#[derive(Debug, Deserialize, Serialize)]
pub struct CorpusRecord {
    #[serde(default)]
    pub id: Option<String>,
    #[serde(default)]
    pub title: Option<String>,
    #[serde(default)]
    pub authors: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub year: Option<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub venue: Option<String>,
    #[serde(default)]
    pub text: String,
    #[serde(default)]
    pub cites: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    documents: BTreeMap<DocumentId, Document>,
    reverse_citations: BTreeMap<DocumentId, BTreeSet<DocumentId>>,
}

fn join_body(title: &str, text: &str) -> String {
    match (title.is_empty(), text.is_empty()) {
        (_, true) => title.to_owned(),
        (true, false) => text.to_owned(),
        (false, false) => format!("{title} {text}"),
    }
}

impl Corpus {
    /// Reads newline-delimited JSON records. Blank lines are skipped.
    pub fn load<R: BufRead>(source: R) -> Result<Self, CorpusError> {
        let mut documents = BTreeMap::new();
        for (idx, line) in source.lines().enumerate() {
            let line_no = idx + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: CorpusRecord =
                serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
                    line: line_no,
                    message: e.to_string(),
                })?;
            let id = match record.id {
                Some(id) if !id.is_empty() => DocumentId(id),
                _ => {
                    return Err(CorpusError::MissingField {
                        line: line_no,
                        field: "id",
                    })
                }
            };
            let title = record.title.ok_or(CorpusError::MissingField {
                line: line_no,
                field: "title",
            })?;
            if documents.contains_key(&id) {
                return Err(CorpusError::DuplicateId { line: line_no, id });
            }
            let cites = record
                .cites
                .into_iter()
                .map(DocumentId)
                .filter(|target| *target != id)
                .collect();
            let doc = Document {
                body: join_body(&title, &record.text),
                id: id.clone(),
                title,
                authors: record.authors,
                year: record.year,
                venue: record.venue,
                cites,
            };
            documents.insert(id, doc);
        }
        Ok(Self::from_documents_map(documents))
    }

    pub fn load_path(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let file = std::fs::File::open(path)?;
        Self::load(std::io::BufReader::new(file))
    }

    /// Builds a corpus from already-constructed documents. Later duplicates win.
    pub fn from_documents(docs: impl IntoIterator<Item = Document>) -> Self {
        let documents = docs
            .into_iter()
            .map(|mut d| {
                d.cites.remove(&d.id);
                (d.id.clone(), d)
            })
            .collect();
        Self::from_documents_map(documents)
    }

    fn from_documents_map(documents: BTreeMap<DocumentId, Document>) -> Self {
        let mut reverse_citations: BTreeMap<DocumentId, BTreeSet<DocumentId>> = BTreeMap::new();
        for doc in documents.values() {
            for target in doc.cites.iter().filter(|t| documents.contains_key(*t)) {
                reverse_citations
                    .entry(target.clone())
                    .or_default()
                    .insert(doc.id.clone());
            }
        }
        Self {
            documents,
            reverse_citations,
        }
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn contains(&self, id: &DocumentId) -> bool {
        self.documents.contains_key(id)
    }

    pub fn get(&self, id: &DocumentId) -> Result<&Document, CorpusError> {
        self.documents
            .get(id)
            .ok_or_else(|| CorpusError::NotFound(id.clone()))
    }

    /// Documents in id order.
    pub fn documents(&self) -> impl Iterator<Item = &Document> {
        self.documents.values()
    }

    pub fn ids(&self) -> impl Iterator<Item = &DocumentId> {
        self.documents.keys()
    }

    pub fn reverse_citations(&self) -> &BTreeMap<DocumentId, BTreeSet<DocumentId>> {
        &self.reverse_citations
    }

    /// Every (citing, cited) pair with both endpoints in the corpus.
    pub fn edges(&self) -> impl Iterator<Item = (&DocumentId, &DocumentId)> {
        self.documents.values().flat_map(move |d| {
            d.cites
                .iter()
                .filter(move |t| self.documents.contains_key(*t))
                .map(move |t| (&d.id, t))
        })
    }

    /// Outgoing citations that resolve to documents in the corpus.
    pub fn cites(&self, id: &DocumentId) -> Result<BTreeSet<DocumentId>, CorpusError> {
        Ok(self
            .get(id)?
            .cites
            .iter()
            .filter(|t| self.documents.contains_key(*t))
            .cloned()
            .collect())
    }

    pub fn cited_by(&self, id: &DocumentId) -> Result<BTreeSet<DocumentId>, CorpusError> {
        self.get(id)?;
        Ok(self.reverse_citations.get(id).cloned().unwrap_or_default())
    }

    /// Union of the requested neighbourhoods of every seed, minus the seeds.
    pub fn expand<'a, I>(&self, seed: I, direction: Direction) -> Result<BTreeSet<DocumentId>, CorpusError>
    where
        I: IntoIterator<Item = &'a DocumentId>,
    {
        let seed: BTreeSet<&DocumentId> = seed.into_iter().collect();
        let mut out = BTreeSet::new();
        for id in &seed {
            if matches!(direction, Direction::Cited | Direction::Both) {
                out.extend(self.cites(id)?);
            }
            if matches!(direction, Direction::Citing | Direction::Both) {
                out.extend(self.cited_by(id)?);
            }
        }
        out.retain(|id| !seed.contains(id));
        Ok(out)
    }

    /// Serializes the corpus back to its line format.
    pub fn to_records(&self) -> impl Iterator<Item = CorpusRecord> + '_ {
        self.documents.values().map(|d| {
            let text = d
                .body
                .strip_prefix(d.title.as_str())
                .map(|rest| rest.strip_prefix(' ').unwrap_or(rest))
                .unwrap_or(&d.body)
                .to_owned();
            CorpusRecord {
                id: Some(d.id.0.clone()),
                title: Some(d.title.clone()),
                authors: d.authors.clone(),
                year: d.year,
                venue: d.venue.clone(),
                text,
                cites: d.cites.iter().map(|c| c.0.clone()).collect(),
            }
        })
    }

    pub fn write_jsonl<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        for record in self.to_records() {
            serde_json::to_writer(&mut out, &record)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}
