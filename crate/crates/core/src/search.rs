//! Inverted index with BM25 ranking and metadata sorting.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, DocumentId};

pub const BM25_K1: f64 = 1.2;
pub const BM25_B: f64 = 0.75;

/// Lowercases and splits on every non-alphanumeric character.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SortKey {
    #[default]
    Relevance,
    Title,
    Author,
    Year,
    Venue,
}

impl std::str::FromStr for SortKey {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "relevance" => Ok(SortKey::Relevance),
            "title" => Ok(SortKey::Title),
            "author" => Ok(SortKey::Author),
            "year" => Ok(SortKey::Year),
            "venue" => Ok(SortKey::Venue),
            other => Err(format!(
                "unknown sort key `{other}` (expected relevance, title, author, year or venue)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub doc: DocumentId,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct IndexedDoc {
    id: DocumentId,
    length: u32,
    title: String,
    first_author: Option<String>,
    year: Option<i32>,
    venue: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct Posting {
    doc: u32,
    tf: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Index {
    docs: Vec<IndexedDoc>,
    postings: HashMap<String, Vec<Posting>>,
    avg_doc_length: f64,
}

impl Index {
    pub fn build(corpus: &Corpus) -> Self {
        let mut docs = Vec::with_capacity(corpus.len());
        let mut postings: HashMap<String, Vec<Posting>> = HashMap::new();
        let mut total = 0u64;
        for (ordinal, doc) in corpus.documents().enumerate() {
            let mut counts: HashMap<String, u32> = HashMap::new();
            let mut length = 0u32;
            for token in tokenize(&doc.body) {
                *counts.entry(token).or_default() += 1;
                length += 1;
            }
            total += u64::from(length);
            for (term, tf) in counts {
                postings.entry(term).or_default().push(Posting {
                    doc: ordinal as u32,
                    tf,
                });
            }
            docs.push(IndexedDoc {
                id: doc.id.clone(),
                length,
                title: doc.title.clone(),
                first_author: doc.first_author().map(str::to_owned),
                year: doc.year,
                venue: doc.venue.clone(),
            });
        }
        for list in postings.values_mut() {
            list.sort_unstable_by_key(|p| p.doc);
        }
        let avg_doc_length = if docs.is_empty() {
            0.0
        } else {
            total as f64 / docs.len() as f64
        };
        Self {
            docs,
            postings,
            avg_doc_length,
        }
    }

    /// Number of indexed documents.
    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn doc_lengths(&self) -> BTreeMap<DocumentId, u32> {
        self.docs.iter().map(|d| (d.id.clone(), d.length)).collect()
    }

    pub fn num_terms(&self) -> usize {
        self.postings.len()
    }

    /// `(document, term frequency)` pairs for `term`, in document-id order.
    pub fn postings(&self, term: &str) -> Vec<(DocumentId, u32)> {
        self.postings
            .get(term)
            .map(|list| {
                list.iter()
                    .map(|p| (self.docs[p.doc as usize].id.clone(), p.tf))
                    .collect()
            })
            .unwrap_or_default()
    }

    pub fn document_frequency(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.docs.len() as f64;
        let df = self.document_frequency(term) as f64;
        ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
    }

    fn term_score(&self, idf: f64, tf: u32, length: u32) -> f64 {
        let tf = f64::from(tf);
        let norm = if self.avg_doc_length > 0.0 {
            f64::from(length) / self.avg_doc_length
        } else {
            0.0
        };
        idf * tf * (BM25_K1 + 1.0) / (tf + BM25_K1 * (1.0 - BM25_B + BM25_B * norm))
    }

    pub fn search(&self, query: &str, sort: SortKey, limit: usize) -> Vec<SearchHit> {
        if limit == 0 {
            return Vec::new();
        }
        let mut query_terms: BTreeMap<String, u32> = BTreeMap::new();
        for token in tokenize(query) {
            *query_terms.entry(token).or_default() += 1;
        }
        let mut scores: HashMap<u32, f64> = HashMap::new();
        for (term, multiplicity) in &query_terms {
            let Some(list) = self.postings.get(term) else {
                continue;
            };
            let idf = self.idf(term);
            for p in list {
                let s = self.term_score(idf, p.tf, self.docs[p.doc as usize].length);
                *scores.entry(p.doc).or_default() += f64::from(*multiplicity) * s;
            }
        }
        let mut hits: Vec<(u32, f64)> = scores.into_iter().filter(|(_, s)| *s > 0.0).collect();
        hits.sort_by(|a, b| self.compare(sort, *a, *b));
        hits.truncate(limit);
        hits.into_iter()
            .map(|(doc, score)| SearchHit {
                doc: self.docs[doc as usize].id.clone(),
                score,
            })
            .collect()
    }

    fn compare(&self, sort: SortKey, (a, sa): (u32, f64), (b, sb): (u32, f64)) -> Ordering {
        let da = &self.docs[a as usize];
        let db = &self.docs[b as usize];
        let primary = match sort {
            SortKey::Relevance => sb.total_cmp(&sa),
            SortKey::Title => da.title.cmp(&db.title),
            SortKey::Author => absent_last(da.first_author.as_ref(), db.first_author.as_ref(), |x, y| x.cmp(y)),
            SortKey::Venue => absent_last(da.venue.as_ref(), db.venue.as_ref(), |x, y| x.cmp(y)),
            SortKey::Year => absent_last(da.year, db.year, |x, y| y.cmp(&x)),
        };
        primary.then_with(|| da.id.cmp(&db.id))
    }
}

fn absent_last<T>(a: Option<T>, b: Option<T>, cmp: impl Fn(T, T) -> Ordering) -> Ordering {
    match (a, b) {
        (Some(x), Some(y)) => cmp(x, y),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => Ordering::Equal,
    }
}
