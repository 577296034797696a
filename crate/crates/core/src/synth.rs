//! Deterministic synthetic models and corpora for tests and benchmarks.

use std::collections::BTreeSet;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Corpus, Document, DocumentId};
use crate::topic_model::{ModelError, ModelParts, TopicModel};

const VENUES: [&str; 5] = ["ACL", "COLING", "EMNLP", "NAACL", "EACL"];

pub fn synth_document_id(index: usize) -> DocumentId {
    DocumentId::new(format!("d{index}"))
}

/// Fills a matrix with flat-Dirichlet rows: `-ln(u)` per cell, normalized per row.
fn dirichlet_rows(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    let mut m = Array2::zeros((rows, cols));
    for mut row in m.outer_iter_mut() {
        loop {
            for cell in row.iter_mut() {
                // u in (0, 1]
                let u = 1.0 - rng.random::<f64>();
                *cell = -u.ln();
            }
            let sum = row.sum();
            if sum > 0.0 {
                row.mapv_inplace(|v| v / sum);
                break;
            }
        }
    }
    m
}

/// A random model with `docs` documents (`d0`, `d1`, ...), `topics` topics and a
/// vocabulary of `w0`, `w1`, ...
pub fn synth_model(seed: u64, docs: usize, topics: usize, vocab: usize) -> Result<TopicModel, ModelError> {
    if docs == 0 || topics == 0 || vocab == 0 {
        return Err(ModelError::ZeroDimension);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let beta = dirichlet_rows(&mut rng, topics, vocab);
    let theta = dirichlet_rows(&mut rng, docs, topics);
    TopicModel::from_parts(ModelParts {
        vocabulary: (0..vocab).map(|i| format!("w{i}")).collect(),
        document_ids: (0..docs).map(synth_document_id).collect(),
        beta,
        theta,
        labels: None,
    })
}

fn sample_index(cumulative: &[f64], u: f64) -> usize {
    let target = u * cumulative.last().copied().unwrap_or(0.0);
    cumulative.partition_point(|&c| c <= target).min(cumulative.len() - 1)
}

/// A corpus matching `model`'s documents. Each body samples terms from the
/// document's two dominant topics; each document cites up to three earlier ones.
pub fn synth_corpus(model: &TopicModel, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_c0de);
    let cumulative: Vec<Vec<f64>> = model
        .beta()
        .outer_iter()
        .map(|row| {
            row.iter()
                .scan(0.0, |acc, &p| {
                    *acc += p;
                    Some(*acc)
                })
                .collect()
        })
        .collect();
    let vocab = model.vocabulary();
    let ids = model.document_ids();
    let docs = ids.iter().enumerate().map(|(i, id)| {
        let theta = model.theta().row(i);
        let mut order: Vec<usize> = (0..theta.len()).collect();
        order.sort_by(|a, b| theta[*b].total_cmp(&theta[*a]).then(a.cmp(b)));
        let dominant = &order[..order.len().min(2)];
        let words = |n: usize, rng: &mut ChaCha8Rng| -> Vec<&str> {
            (0..n)
                .map(|_| {
                    let topic = dominant[rng.random_range(0..dominant.len())];
                    vocab[sample_index(&cumulative[topic], rng.random())].as_str()
                })
                .collect()
        };
        let title = words(4, &mut rng).join(" ");
        let text_len = rng.random_range(20..60);
        let text = words(text_len, &mut rng).join(" ");
        let mut cites = BTreeSet::new();
        if i > 0 {
            for _ in 0..rng.random_range(0..=3usize) {
                cites.insert(ids[rng.random_range(0..i)].clone());
            }
        }
        let authors = (0..rng.random_range(1..=3))
            .map(|_| format!("Author {}", rng.random_range(0..200)))
            .collect();
        let year = rng.random_bool(0.9).then(|| rng.random_range(1980..2011));
        let venue = rng
            .random_bool(0.9)
            .then(|| VENUES[rng.random_range(0..VENUES.len())].to_owned());
        Document {
            id: id.clone(),
            body: format!("{title} {text}"),
            title,
            authors,
            year,
            venue,
            cites,
        }
    });
    Corpus::from_documents(docs.collect::<Vec<_>>())
}
