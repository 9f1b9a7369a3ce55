//! Text embeddings behind a provider interface.
//!
//! Every provider maps a piece of text to a fixed-dimension `f64` vector and
//! must return the identical vector for identical text for as long as the
//! process lives. Empty text, or text made only of out-of-vocabulary words,
//! embeds to the zero vector; downstream similarity treats a zero vector as
//! matching nothing.
//!
//! Implementations shipped here:
//!
//! * [`HashEmbedder`]: signed feature hashing of tokens, no model needed.
//! * [`WordVectorProvider`]: mean of per-word vectors from a word-vector table.
//! * [`RemoteProvider`]: any encoder served over the `/embed` HTTP protocol.
//! * [`PrecomputedProvider`]: lookup table over embeddings computed offline.

mod hash;
mod precomputed;
mod remote;
mod word;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use hash::{hash_embed, HashEmbedder, DEFAULT_HASH_DIM};
pub use precomputed::{load_precomputed, PrecomputedProvider};
pub use remote::{remote_embed, EmbedRequest, EmbedResponse, HealthResponse, RemoteConfig, RemoteProvider};
pub use word::{pool_word_vectors, WordVectorProvider};

/// Which question field a vector was computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    Title,
    Content,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    Word,
    Sentence,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    values: Vec<f64>,
    provider_id: Arc<str>,
    field: Field,
}

impl EmbeddingVector {
    /// Fails with a schema error on an empty or non-finite vector.
    pub fn new(values: Vec<f64>, provider_id: impl Into<Arc<str>>, field: Field) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Schema("embedding vectors must have dim >= 1".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Schema(format!(
                "component {i} is not finite ({})",
                values[i]
            )));
        }
        Ok(Self {
            values,
            provider_id: provider_id.into(),
            field,
        })
    }

    pub fn zeros(dim: usize, provider_id: impl Into<Arc<str>>, field: Field) -> Self {
        Self {
            values: vec![0.0; dim.max(1)],
            provider_id: provider_id.into(),
            field,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn provider_id(&self) -> &str {
        &self.provider_id
    }

    pub fn field(&self) -> Field {
        self.field
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// A source of fixed-dimension text vectors.
///
/// Implementations must be deterministic per text within a process and safe
/// to share across threads.
pub trait EmbeddingProvider: Send + Sync {
    fn provider_id(&self) -> &str;

    fn dim(&self) -> usize;

    fn granularity(&self) -> Granularity;

    /// Raw vectors for `texts`, one per input, in input order.
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>>;
}

impl<P: EmbeddingProvider + ?Sized> EmbeddingProvider for Arc<P> {
    fn provider_id(&self) -> &str {
        (**self).provider_id()
    }

    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn granularity(&self) -> Granularity {
        (**self).granularity()
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        (**self).embed_batch(texts)
    }
}

/// Embed one text and check the result against the provider's declared shape.
pub fn embed_text<P: EmbeddingProvider + ?Sized>(
    provider: &P,
    text: &str,
    field: Field,
) -> Result<EmbeddingVector> {
    let mut out = embed_texts(provider, &[text], field)?;
    Ok(out.pop().expect("one vector per input"))
}

/// Batch form of [`embed_text`].
pub fn embed_texts<P: EmbeddingProvider + ?Sized>(
    provider: &P,
    texts: &[&str],
    field: Field,
) -> Result<Vec<EmbeddingVector>> {
    if texts.is_empty() {
        return Ok(Vec::new());
    }
    let raw = provider.embed_batch(texts)?;
    if raw.len() != texts.len() {
        return Err(Error::Protocol(format!(
            "provider {} returned {} vectors for {} texts",
            provider.provider_id(),
            raw.len(),
            texts.len()
        )));
    }
    let id: Arc<str> = Arc::from(provider.provider_id());
    raw.into_iter()
        .map(|values| {
            if values.len() != provider.dim() {
                return Err(Error::Schema(format!(
                    "provider {} declared dim {} but produced {}",
                    id,
                    provider.dim(),
                    values.len()
                )));
            }
            EmbeddingVector::new(values, id.clone(), field)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simcore::cosine_similarity;

    struct Lying;

    impl EmbeddingProvider for Lying {
        fn provider_id(&self) -> &str {
            "lying"
        }
        fn dim(&self) -> usize {
            4
        }
        fn granularity(&self) -> Granularity {
            Granularity::Sentence
        }
        fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
            Ok(texts.iter().map(|_| vec![1.0; 3]).collect())
        }
    }

    #[test]
    fn embed_text_is_deterministic() {
        let p = HashEmbedder::new(256).unwrap();
        let a = embed_text(&p, "blender problem", Field::Title).unwrap();
        let b = embed_text(&p, "blender problem", Field::Title).unwrap();
        assert_eq!(a, b);
        assert!((cosine_similarity(&a, &b).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_text_is_zero_vector() {
        let p = HashEmbedder::new(64).unwrap();
        let z = embed_text(&p, "", Field::Content).unwrap();
        assert_eq!(z.dim(), 64);
        assert!(z.is_zero());
    }

    #[test]
    fn wrong_dim_from_provider_is_fatal_schema_error() {
        let err = embed_text(&Lying, "x", Field::Title).unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
        assert!(!err.is_retryable());
    }

    #[test]
    fn vector_rejects_nan() {
        assert!(EmbeddingVector::new(vec![1.0, f64::NAN], "p", Field::Title).is_err());
        assert!(EmbeddingVector::new(vec![], "p", Field::Title).is_err());
    }
}
