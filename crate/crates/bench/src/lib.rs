//! Shared fixtures for the benchmarks.

use topicfield::{synth_corpus, synth_model, Bounds, Corpus, DocumentId, FieldState, Index, SortKey, TopicModel};

/// A synthetic corpus and model of the given size.
pub fn world(seed: u64, docs: usize, topics: usize, vocab: usize) -> (Corpus, TopicModel) {
    let model = synth_model(seed, docs, topics, vocab).expect("valid dimensions");
    let corpus = synth_corpus(&model, seed);
    (corpus, model)
}

/// Queries made of each topic's head terms.
pub fn queries(model: &TopicModel, terms: usize) -> Vec<String> {
    model
        .topics()
        .map(|t| {
            model
                .top_terms(t, terms)
                .expect("topic in range")
                .into_iter()
                .map(|(w, _)| w)
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect()
}

/// A field holding the top `n` hits for `query`, with auto topics.
pub fn field_for(corpus: &Corpus, model: &TopicModel, index: &Index, query: &str, n: usize) -> FieldState {
    let ids: Vec<DocumentId> = index.search(query, SortKey::Relevance, n).into_iter().map(|h| h.doc).collect();
    let mut field = FieldState::new(Bounds::default());
    field.add_documents(corpus, model, &ids).expect("documents come from the corpus");
    field
}
