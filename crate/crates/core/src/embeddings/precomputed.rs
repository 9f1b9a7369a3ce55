use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use super::{EmbeddingProvider, EmbeddingVector, Granularity};
use crate::error::{Error, Result};
use crate::index_store::{load_index, EmbeddingIndex};
use crate::kb::KnowledgeBase;

/// Title and content vectors per query id, read from an index cache file.
pub fn load_precomputed(path: impl AsRef<Path>) -> Result<BTreeMap<String, (EmbeddingVector, EmbeddingVector)>> {
    let index = load_index(path)?;
    Ok(index
        .records()
        .map(|(id, _)| (id.clone(), index.vectors(id).expect("record exists")))
        .collect())
}

/// Serves vectors computed offline, keyed by the exact text they were computed
/// from. It can only embed texts that appear in the knowledge base, so it suits
/// replaying archived questions, not answering new ones.
#[derive(Debug, Clone)]
pub struct PrecomputedProvider {
    id: String,
    dim: usize,
    by_text: HashMap<String, Vec<f64>>,
}

impl PrecomputedProvider {
    pub fn new(kb: &KnowledgeBase, index: &EmbeddingIndex) -> Self {
        let mut by_text = HashMap::new();
        by_text.insert(String::new(), vec![0.0; index.dim()]);
        for e in kb.entries() {
            if let Some(r) = index.get(&e.query_id) {
                by_text.entry(e.title.clone()).or_insert_with(|| r.title.clone());
                by_text.entry(e.content.clone()).or_insert_with(|| r.content.clone());
            }
        }
        Self {
            id: index.provider_id().to_string(),
            dim: index.dim(),
            by_text,
        }
    }
}

impl EmbeddingProvider for PrecomputedProvider {
    fn provider_id(&self) -> &str {
        &self.id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn granularity(&self) -> Granularity {
        Granularity::Sentence
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        texts
            .iter()
            .map(|t| {
                self.by_text.get(*t).cloned().ok_or_else(|| {
                    Error::Consistency(format!(
                        "text {:?} has no precomputed embedding",
                        t.chars().take(40).collect::<String>()
                    ))
                })
            })
            .collect()
    }
}
