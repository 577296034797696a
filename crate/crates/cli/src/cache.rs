//! On-disk search index cache, keyed by the corpus file contents.

use std::collections::hash_map::DefaultHasher;
use std::fs;
use std::hash::Hasher;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use topicfield::{Corpus, Index};

#[derive(Serialize, Deserialize)]
struct CacheFile {
    corpus_digest: u64,
    index: Index,
}

fn digest(bytes: &[u8]) -> u64 {
    let mut h = DefaultHasher::new();
    h.write(bytes);
    h.finish()
}

/// Loads the corpus and an index for it, reusing `cache` when it was built
/// from identical corpus bytes and rewriting it otherwise.
pub fn load_with_index(corpus_path: &Path, cache: Option<&Path>) -> Result<(Corpus, Index)> {
    let bytes = fs::read(corpus_path).with_context(|| format!("cannot read {}", corpus_path.display()))?;
    let corpus = Corpus::load(bytes.as_slice()).with_context(|| format!("{}", corpus_path.display()))?;
    let Some(cache) = cache else {
        let index = Index::build(&corpus);
        return Ok((corpus, index));
    };
    let want = digest(&bytes);
    if let Ok(text) = fs::read(cache) {
        if let Ok(file) = serde_json::from_slice::<CacheFile>(&text) {
            if file.corpus_digest == want && file.index.len() == corpus.len() {
                return Ok((corpus, file.index));
            }
        }
    }
    let index = Index::build(&corpus);
    let file = CacheFile {
        corpus_digest: want,
        index,
    };
    let text = serde_json::to_vec(&file)?;
    fs::write(cache, text).with_context(|| format!("cannot write index cache {}", cache.display()))?;
    Ok((corpus, file.index))
}
