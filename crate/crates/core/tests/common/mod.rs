#![allow(dead_code)]

pub mod sidecar;

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;

use forumqa::embeddings::{EmbeddingProvider, Granularity};
use forumqa::index_store::build_index;
use forumqa::kb::{KbEntry, KnowledgeBase};
use forumqa::retrieval::Snapshot;
use forumqa::Result;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

/// Provider with hand-chosen vectors; unknown text embeds to zero.
pub struct TableProvider {
    pub dim: usize,
    pub table: HashMap<String, Vec<f64>>,
}

impl TableProvider {
    pub fn new(dim: usize, rows: &[(&str, Vec<f64>)]) -> Self {
        Self {
            dim,
            table: rows.iter().map(|(t, v)| (t.to_string(), v.clone())).collect(),
        }
    }
}

impl EmbeddingProvider for TableProvider {
    fn provider_id(&self) -> &str {
        "table"
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn granularity(&self) -> Granularity {
        Granularity::Sentence
    }
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        Ok(texts
            .iter()
            .map(|t| self.table.get(*t).cloned().unwrap_or_else(|| vec![0.0; self.dim]))
            .collect())
    }
}

pub fn snapshot_of<P: EmbeddingProvider>(kb: KnowledgeBase, provider: &P) -> Snapshot {
    let index = build_index(&kb, provider).unwrap();
    Snapshot::new(Arc::new(kb), Arc::new(index)).unwrap()
}

pub fn entries(rows: &[(&str, &str, &str)]) -> KnowledgeBase {
    KnowledgeBase::from_entries(rows.iter().map(|(i, t, c)| KbEntry::new(*i, *t, *c)))
}

/// Brute-force cosine written independently of the library.
pub fn oracle_cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = (0..a.len()).map(|i| a[i] * b[i]).sum();
    let na: f64 = (0..a.len()).map(|i| a[i] * a[i]).sum::<f64>().sqrt();
    let nb: f64 = (0..b.len()).map(|i| b[i] * b[i]).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(-1.0, 1.0)
    }
}

/// Direct evaluation of the weighted score from its three cosines.
pub fn oracle_n_sim(t: f64, h: f64, c: f64, p: f64, q: f64, r: f64) -> f64 {
    (p * t + q * h + r * c) / (p + q + r)
}
