//! Pre-trained topic models: the topic-term matrix, the document-topic matrix,
//! and the display labels attached to each topic.
//!
//! Models are consumed, never estimated here. A model directory holds a
//! `model.json` manifest next to `beta.csv` (one row per topic) and
//! `theta.csv` (one row per document, in manifest order).

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, DocumentId};

/// Stochasticity tolerance applied to row sums and entry bounds.
pub const ROW_SUM_TOLERANCE: f64 = 1e-6;

/// Number of topics shown in the field unless the session says otherwise.
pub const DEFAULT_TOPIC_COUNT: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TopicId(pub usize);

impl TopicId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for TopicId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixKind {
    Beta,
    Theta,
}

impl fmt::Display for MatrixKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MatrixKind::Beta => "beta",
            MatrixKind::Theta => "theta",
        })
    }
}

/// One broken model invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    RowSum { matrix: MatrixKind, row: usize, sum: f64 },
    EntryOutOfRange { matrix: MatrixKind, row: usize, column: usize, value: f64 },
    EmptyTerm { index: usize },
    DuplicateTerm { term: String },
    DuplicateDocument { id: DocumentId },
    DocumentNotInCorpus { id: DocumentId },
    DocumentWithoutTopics { id: DocumentId },
    EmptyLabel { topic: TopicId },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::RowSum { matrix, row, sum } => {
                write!(f, "{matrix} row {row} sums to {sum} (expected 1 within {ROW_SUM_TOLERANCE:e})")
            }
            Violation::EntryOutOfRange { matrix, row, column, value } => {
                write!(f, "{matrix} entry ({row}, {column}) = {value} is outside [0, 1]")
            }
            Violation::EmptyTerm { index } => write!(f, "vocabulary term {index} is empty"),
            Violation::DuplicateTerm { term } => write!(f, "vocabulary term `{term}` appears more than once"),
            Violation::DuplicateDocument { id } => write!(f, "document `{id}` appears more than once in the model"),
            Violation::DocumentNotInCorpus { id } => write!(f, "model document `{id}` is not in the corpus"),
            Violation::DocumentWithoutTopics { id } => write!(f, "corpus document `{id}` has no topic proportions"),
            Violation::EmptyLabel { topic } => write!(f, "topic {topic} has an empty label"),
        }
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: invalid manifest: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("{file} line {line}, column {column}: `{value}` is not a number")]
    NonNumeric { file: String, line: usize, column: usize, value: String },
    #[error("invalid model: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error("topic {topic} out of range (model has {num_topics} topics)")]
    TopicOutOfRange { topic: TopicId, num_topics: usize },
    #[error("topic label must not be empty")]
    EmptyLabel,
    #[error("document set is empty")]
    EmptyDocumentSet,
    #[error("document `{0}` has no topic proportions")]
    UnknownDocument(DocumentId),
    #[error("model dimensions must be at least 1")]
    ZeroDimension,
    #[error("requested count must be at least 1")]
    ZeroCount,
}

/// The `model.json` manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub num_topics: usize,
    pub vocabulary: Vec<String>,
    pub document_ids: Vec<DocumentId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

/// Raw, unvalidated model contents.
#[derive(Debug, Clone)]
pub struct ModelParts {
    pub vocabulary: Vec<String>,
    pub document_ids: Vec<DocumentId>,
    pub beta: Array2<f64>,
    pub theta: Array2<f64>,
    pub labels: Option<Vec<String>>,
}

fn row_violations(matrix: MatrixKind, m: &Array2<f64>, out: &mut Vec<Violation>) {
    for (row, values) in m.outer_iter().enumerate() {
        let mut sum = 0.0;
        for (column, &value) in values.iter().enumerate() {
            if !(-ROW_SUM_TOLERANCE..=1.0 + ROW_SUM_TOLERANCE).contains(&value) {
                out.push(Violation::EntryOutOfRange { matrix, row, column, value });
            }
            sum += value;
        }
        // Written so that a NaN sum is reported.
        let within = (sum - 1.0).abs() <= ROW_SUM_TOLERANCE;
        if !within {
            out.push(Violation::RowSum { matrix, row, sum });
        }
    }
}

impl ModelParts {
    fn check_dimensions(&self) -> Result<(), ModelError> {
        let (t, v) = self.beta.dim();
        let (d, t2) = self.theta.dim();
        if t == 0 || v == 0 {
            return Err(ModelError::ZeroDimension);
        }
        if v != self.vocabulary.len() {
            return Err(ModelError::Dimension(format!(
                "beta has {v} columns but the vocabulary has {} terms",
                self.vocabulary.len()
            )));
        }
        if t2 != t {
            return Err(ModelError::Dimension(format!(
                "beta has {t} topics but theta has {t2} columns"
            )));
        }
        if d != self.document_ids.len() {
            return Err(ModelError::Dimension(format!(
                "theta has {d} rows but the manifest lists {} documents",
                self.document_ids.len()
            )));
        }
        if let Some(labels) = &self.labels {
            if labels.len() != t {
                return Err(ModelError::Dimension(format!(
                    "{} labels given for {t} topics",
                    labels.len()
                )));
            }
        }
        Ok(())
    }

    /// Every broken invariant, in a stable order.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        row_violations(MatrixKind::Beta, &self.beta, &mut out);
        row_violations(MatrixKind::Theta, &self.theta, &mut out);
        let mut seen = BTreeSet::new();
        for (index, term) in self.vocabulary.iter().enumerate() {
            if term.is_empty() {
                out.push(Violation::EmptyTerm { index });
            } else if !seen.insert(term.as_str()) {
                out.push(Violation::DuplicateTerm { term: term.clone() });
            }
        }
        let mut seen = BTreeSet::new();
        for id in &self.document_ids {
            if !seen.insert(id) {
                out.push(Violation::DuplicateDocument { id: id.clone() });
            }
        }
        if let Some(labels) = &self.labels {
            for (i, label) in labels.iter().enumerate() {
                if label.is_empty() {
                    out.push(Violation::EmptyLabel { topic: TopicId(i) });
                }
            }
        }
        out
    }
}

/// A validated topic model. Matrices are shared, so clones are cheap; only
/// the labels are ever mutated.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicModel {
    vocabulary: Arc<[String]>,
    document_ids: Arc<[DocumentId]>,
    doc_rows: Arc<HashMap<DocumentId, usize>>,
    beta: Arc<Array2<f64>>,
    theta: Arc<Array2<f64>>,
    labels: Vec<String>,
}

impl TopicModel {
    pub fn from_parts(parts: ModelParts) -> Result<Self, ModelError> {
        parts.check_dimensions()?;
        let violations = parts.violations();
        if !violations.is_empty() {
            return Err(ModelError::Invalid(violations));
        }
        let doc_rows = parts
            .document_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i))
            .collect();
        let mut model = TopicModel {
            vocabulary: parts.vocabulary.into(),
            document_ids: parts.document_ids.into(),
            doc_rows: Arc::new(doc_rows),
            beta: Arc::new(parts.beta),
            theta: Arc::new(parts.theta),
            labels: Vec::new(),
        };
        model.labels = match parts.labels {
            Some(labels) => labels,
            None => (0..model.num_topics()).map(|t| model.default_label(TopicId(t))).collect(),
        };
        Ok(model)
    }

    /// Loads a model directory (or its `model.json`) and checks it against the corpus.
    pub fn load(path: impl AsRef<Path>, corpus: &Corpus) -> Result<Self, ModelError> {
        let parts = read_parts(path.as_ref())?;
        parts.check_dimensions()?;
        let mut violations = parts.violations();
        violations.extend(corpus_violations(&parts.document_ids, corpus));
        if !violations.is_empty() {
            return Err(ModelError::Invalid(violations));
        }
        Self::from_parts(parts)
    }

    pub fn num_topics(&self) -> usize {
        self.beta.nrows()
    }

    pub fn topics(&self) -> impl Iterator<Item = TopicId> {
        (0..self.num_topics()).map(TopicId)
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }

    pub fn document_ids(&self) -> &[DocumentId] {
        &self.document_ids
    }

    pub fn beta(&self) -> &Array2<f64> {
        &self.beta
    }

    pub fn theta(&self) -> &Array2<f64> {
        &self.theta
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, topic: TopicId) -> Result<&str, ModelError> {
        self.check_topic(topic)?;
        Ok(&self.labels[topic.0])
    }

    pub fn contains_document(&self, id: &DocumentId) -> bool {
        self.doc_rows.contains_key(id)
    }

    /// The topic-proportion row of one document.
    pub fn theta_row(&self, id: &DocumentId) -> Result<ArrayView1<'_, f64>, ModelError> {
        let row = self
            .doc_rows
            .get(id)
            .ok_or_else(|| ModelError::UnknownDocument(id.clone()))?;
        Ok(self.theta.row(*row))
    }

    pub fn check_topic(&self, topic: TopicId) -> Result<(), ModelError> {
        if topic.0 < self.num_topics() {
            Ok(())
        } else {
            Err(ModelError::TopicOutOfRange {
                topic,
                num_topics: self.num_topics(),
            })
        }
    }

    fn default_label(&self, topic: TopicId) -> String {
        let terms = self.top_terms(topic, 3).expect("topic in range");
        let joined: Vec<&str> = terms.iter().map(|(t, _)| t.as_str()).collect();
        format!("t{}: {}", topic.0, joined.join("/"))
    }

    /// The `n` most probable terms of a topic; ties go to the lexicographically smaller term.
    pub fn top_terms(&self, topic: TopicId, n: usize) -> Result<Vec<(String, f64)>, ModelError> {
        self.check_topic(topic)?;
        if n == 0 {
            return Err(ModelError::ZeroCount);
        }
        let row = self.beta.row(topic.0);
        let mut order: Vec<usize> = (0..row.len()).collect();
        let cmp = |a: &usize, b: &usize| {
            row[*b]
                .total_cmp(&row[*a])
                .then_with(|| self.vocabulary[*a].cmp(&self.vocabulary[*b]))
        };
        let n = n.min(order.len());
        if n < order.len() {
            order.select_nth_unstable_by(n - 1, cmp);
            order.truncate(n);
        }
        order.sort_by(cmp);
        Ok(order
            .into_iter()
            .map(|i| (self.vocabulary[i].clone(), row[i]))
            .collect())
    }

    fn rows_for<'a, I>(&self, docs: I) -> Result<Vec<usize>, ModelError>
    where
        I: IntoIterator<Item = &'a DocumentId>,
    {
        let rows = docs
            .into_iter()
            .map(|id| {
                self.doc_rows
                    .get(id)
                    .copied()
                    .ok_or_else(|| ModelError::UnknownDocument(id.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if rows.is_empty() {
            return Err(ModelError::EmptyDocumentSet);
        }
        Ok(rows)
    }

    /// Mean topic proportion of `topic` over `docs`.
    pub fn topic_relevance<'a, I>(&self, docs: I, topic: TopicId) -> Result<f64, ModelError>
    where
        I: IntoIterator<Item = &'a DocumentId>,
    {
        self.check_topic(topic)?;
        let rows = self.rows_for(docs)?;
        let sum: f64 = rows.iter().map(|&r| self.theta[[r, topic.0]]).sum();
        Ok(sum / rows.len() as f64)
    }

    /// Relevance of every topic, indexed by topic.
    pub fn relevances<'a, I>(&self, docs: I) -> Result<Vec<f64>, ModelError>
    where
        I: IntoIterator<Item = &'a DocumentId>,
    {
        let rows = self.rows_for(docs)?;
        let mut acc = vec![0.0; self.num_topics()];
        for &r in &rows {
            for (a, v) in acc.iter_mut().zip(self.theta.row(r)) {
                *a += v;
            }
        }
        let n = rows.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        Ok(acc)
    }

    /// The `k` most relevant topics for `docs`, most relevant first.
    pub fn rank_topics<'a, I>(&self, docs: I, k: usize) -> Result<Vec<TopicId>, ModelError>
    where
        I: IntoIterator<Item = &'a DocumentId>,
    {
        if k == 0 {
            return Err(ModelError::ZeroCount);
        }
        let rel = self.relevances(docs)?;
        let mut order: Vec<usize> = (0..rel.len()).collect();
        order.sort_by(|a, b| rel[*b].total_cmp(&rel[*a]).then(a.cmp(b)));
        order.truncate(k);
        Ok(order.into_iter().map(TopicId).collect())
    }

    pub fn rename_topic(&mut self, topic: TopicId, label: impl Into<String>) -> Result<(), ModelError> {
        self.check_topic(topic)?;
        let label = label.into();
        if label.is_empty() {
            return Err(ModelError::EmptyLabel);
        }
        self.labels[topic.0] = label;
        Ok(())
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            num_topics: self.num_topics(),
            vocabulary: self.vocabulary.to_vec(),
            document_ids: self.document_ids.to_vec(),
            labels: Some(self.labels.clone()),
        }
    }

    /// Writes `model.json`, `beta.csv` and `theta.csv` into `dir`, creating it if needed.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<(), ModelError> {
        let dir = dir.as_ref();
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| ModelError::Io { path, source }
        };
        fs::create_dir_all(dir).map_err(io(dir))?;
        let manifest_path = dir.join("model.json");
        let json = serde_json::to_vec_pretty(&self.manifest()).expect("manifest serializes");
        fs::write(&manifest_path, json).map_err(io(&manifest_path))?;
        for (name, m) in [("beta.csv", &*self.beta), ("theta.csv", &*self.theta)] {
            let path = dir.join(name);
            write_matrix(&path, m).map_err(io(&path))?;
        }
        Ok(())
    }
}

/// Cross-checks model document ids against a corpus.
pub fn corpus_violations(document_ids: &[DocumentId], corpus: &Corpus) -> Vec<Violation> {
    let mut out: Vec<Violation> = document_ids
        .iter()
        .filter(|id| !corpus.contains(id))
        .map(|id| Violation::DocumentNotInCorpus { id: id.clone() })
        .collect();
    let in_model: BTreeSet<&DocumentId> = document_ids.iter().collect();
    out.extend(
        corpus
            .ids()
            .filter(|id| !in_model.contains(id))
            .map(|id| Violation::DocumentWithoutTopics { id: id.clone() }),
    );
    out
}

fn write_matrix(path: &Path, m: &Array2<f64>) -> std::io::Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    for row in m.outer_iter() {
        let mut first = true;
        for v in row {
            if !first {
                out.write_all(b",")?;
            }
            first = false;
            // `{}` prints the shortest representation that parses back to the same bits.
            write!(out, "{v}")?;
        }
        out.write_all(b"\n")?;
    }
    out.flush()
}

fn read_matrix(path: &Path, rows: usize, cols: usize) -> Result<Array2<f64>, ModelError> {
    let file = path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
    let text = fs::read_to_string(path).map_err(|source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    if lines.len() != rows {
        return Err(ModelError::Dimension(format!(
            "{file} has {} rows, expected {rows}",
            lines.len()
        )));
    }
    let mut data = Vec::with_capacity(rows * cols);
    for (i, line) in lines.iter().enumerate() {
        let before = data.len();
        for (j, cell) in line.split(',').enumerate() {
            let cell = cell.trim();
            let value: f64 = cell.parse().map_err(|_| ModelError::NonNumeric {
                file: file.clone(),
                line: i + 1,
                column: j + 1,
                value: cell.to_owned(),
            })?;
            data.push(value);
        }
        let got = data.len() - before;
        if got != cols {
            return Err(ModelError::Dimension(format!(
                "{file} line {} has {got} values, expected {cols}",
                i + 1
            )));
        }
    }
    Ok(Array2::from_shape_vec((rows, cols), data).expect("shape checked"))
}

/// Reads a model directory without validating stochasticity.
pub fn read_parts(path: &Path) -> Result<ModelParts, ModelError> {
    let (dir, manifest_path) = if path.is_dir() {
        (path.to_path_buf(), path.join("model.json"))
    } else {
        (
            path.parent().map(Path::to_path_buf).unwrap_or_default(),
            path.to_path_buf(),
        )
    };
    let bytes = fs::read(&manifest_path).map_err(|source| ModelError::Io {
        path: manifest_path.clone(),
        source,
    })?;
    let manifest: Manifest = serde_json::from_slice(&bytes).map_err(|e| ModelError::Manifest {
        path: manifest_path.clone(),
        message: e.to_string(),
    })?;
    if manifest.num_topics == 0 || manifest.vocabulary.is_empty() {
        return Err(ModelError::ZeroDimension);
    }
    let beta = read_matrix(&dir.join("beta.csv"), manifest.num_topics, manifest.vocabulary.len())?;
    let theta = read_matrix(&dir.join("theta.csv"), manifest.document_ids.len(), manifest.num_topics)?;
    Ok(ModelParts {
        vocabulary: manifest.vocabulary,
        document_ids: manifest.document_ids,
        beta,
        theta,
        labels: manifest.labels,
    })
}
