use super::{EmbeddingProvider, EmbeddingVector, Field, Granularity};
use crate::error::{Error, Result};
use crate::textnorm::tokenize;

pub const DEFAULT_HASH_DIM: usize = 256;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
const INDEX_SEED: u64 = 0x5eed_0001;
const SIGN_SEED: u64 = 0x5eed_0002;

fn fnv1a(bytes: &[u8], seed: u64) -> u64 {
    let mut h = FNV_OFFSET ^ seed.wrapping_mul(FNV_PRIME);
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    // final avalanche (splitmix64) so low bits depend on every byte
    h ^= h >> 30;
    h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h ^= h >> 27;
    h = h.wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

fn hash_values(text: &str, dim: usize) -> Vec<f64> {
    let mut acc = vec![0.0; dim];
    for token in tokenize(text) {
        let idx = (fnv1a(token.as_bytes(), INDEX_SEED) % dim as u64) as usize;
        let sign = if fnv1a(token.as_bytes(), SIGN_SEED) & 1 == 0 {
            1.0
        } else {
            -1.0
        };
        acc[idx] += sign;
    }
    let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        acc.iter_mut().for_each(|v| *v /= norm);
    }
    acc
}

/// Signed feature hashing of `text`'s tokens into `dim` buckets, L2-normalized.
///
/// Token order does not matter. Text without tokens gives the zero vector.
pub fn hash_embed(text: &str, dim: usize) -> Result<EmbeddingVector> {
    let embedder = HashEmbedder::new(dim)?;
    EmbeddingVector::new(hash_values(text, dim), embedder.id, Field::Title)
}

#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
    id: String,
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Result<Self> {
        if dim < 8 {
            return Err(Error::Config(format!("hash embedder dim must be >= 8, got {dim}")));
        }
        Ok(Self {
            dim,
            id: format!("hash-fnv1a-d{dim}"),
        })
    }
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_HASH_DIM).expect("default dim is valid")
    }
}

impl EmbeddingProvider for HashEmbedder {
    fn provider_id(&self) -> &str {
        &self.id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn granularity(&self) -> Granularity {
        Granularity::Word
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        Ok(texts.iter().map(|t| hash_values(t, self.dim)).collect())
    }
}
