//! Similarity measures: Jaccard over token sets, cosine over embeddings, and
//! the weighted title/content combination used as the final ranking score.

use serde::{Deserialize, Serialize};

use crate::embeddings::EmbeddingVector;
use crate::error::{Error, Result};
use crate::textnorm::TokenSet;

/// Weights for the title–title (`p`), query-title–candidate-content (`q`)
/// and content–content (`r`) cosines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub p: f64,
    pub q: f64,
    pub r: f64,
}

impl Default for Weights {
    /// Title-heavy default `(2, 1, 1)`.
    fn default() -> Self {
        Self {
            p: 2.0,
            q: 1.0,
            r: 1.0,
        }
    }
}

impl Weights {
    pub fn new(p: f64, q: f64, r: f64) -> Result<Self> {
        let w = Self { p, q, r };
        w.validate()?;
        Ok(w)
    }

    /// Components must be finite and non-negative with `p + q + r >= 1`.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("p", self.p), ("q", self.q), ("r", self.r)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!(
                    "weight {name} must be a finite non-negative number, got {v}"
                )));
            }
        }
        if self.sum() < 1.0 {
            return Err(Error::Config(format!(
                "weights must satisfy p+q+r >= 1, got {}+{}+{} = {}",
                self.p,
                self.q,
                self.r,
                self.sum()
            )));
        }
        Ok(())
    }

    pub fn sum(&self) -> f64 {
        self.p + self.q + self.r
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            p: self.p * k,
            q: self.q * k,
            r: self.r * k,
        }
    }

    /// `(p·t + q·h + r·c) / (p + q + r)`, kept inside `[min(t,h,c), max(t,h,c)]`
    /// against rounding.
    pub fn combine(&self, t_sim: f64, h_sim: f64, c_sim: f64) -> f64 {
        let raw = (self.p * t_sim + self.q * h_sim + self.r * c_sim) / self.sum();
        let lo = t_sim.min(h_sim).min(c_sim);
        let hi = t_sim.max(h_sim).max(c_sim);
        raw.clamp(lo, hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityBreakdown {
    pub t_sim: f64,
    pub h_sim: f64,
    pub c_sim: f64,
    pub n_sim: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub jaccard: Option<f64>,
}

/// `|A ∩ B| / |A ∪ B|`. Two empty sets are identical (1.0); one empty set
/// shares nothing with a non-empty one (0.0).
pub fn jaccard_similarity(a: &TokenSet, b: &TokenSet) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let inter = a.intersection_len(b);
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}

/// Cosine over raw components. Zero vectors score 0.0; the result is clamped to `[-1, 1]`.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
}

pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Schema(format!(
            "cannot compare vectors of dim {} and {}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(cosine(a.values(), b.values()))
}

/// Title and content embeddings of one question.
#[derive(Debug, Clone, Copy)]
pub struct FieldPair<'a> {
    pub title: &'a EmbeddingVector,
    pub content: &'a EmbeddingVector,
}

impl<'a> FieldPair<'a> {
    pub fn new(title: &'a EmbeddingVector, content: &'a EmbeddingVector) -> Self {
        Self { title, content }
    }
}

/// Weighted normalized similarity of `candidate` to `query`.
///
/// Cosines are floored at zero before weighting so every score lies in `[0, 1]`.
/// Not symmetric: `h_sim` pairs the query title with the candidate content.
pub fn weighted_similarity(
    query: FieldPair<'_>,
    candidate: FieldPair<'_>,
    weights: &Weights,
) -> Result<SimilarityBreakdown> {
    weights.validate()?;
    let provider = query.title.provider_id();
    for v in [query.content, candidate.title, candidate.content] {
        if v.provider_id() != provider {
            return Err(Error::Consistency(format!(
                "mixed providers {:?} and {:?}",
                provider,
                v.provider_id()
            )));
        }
    }
    let t_sim = cosine_similarity(query.title, candidate.title)?.max(0.0);
    let h_sim = cosine_similarity(query.title, candidate.content)?.max(0.0);
    let c_sim = cosine_similarity(query.content, candidate.content)?.max(0.0);
    Ok(SimilarityBreakdown {
        t_sim,
        h_sim,
        c_sim,
        n_sim: weights.combine(t_sim, h_sim, c_sim),
        jaccard: None,
    })
}

/// Slice-level variant used on the ranking hot path; inputs are assumed
/// shape-checked and weights validated.
pub(crate) fn weighted_raw(
    q_title: &[f64],
    q_content: &[f64],
    c_title: &[f64],
    c_content: &[f64],
    weights: &Weights,
) -> SimilarityBreakdown {
    let t_sim = cosine(q_title, c_title).max(0.0);
    let h_sim = cosine(q_title, c_content).max(0.0);
    let c_sim = cosine(q_content, c_content).max(0.0);
    SimilarityBreakdown {
        t_sim,
        h_sim,
        c_sim,
        n_sim: weights.combine(t_sim, h_sim, c_sim),
        jaccard: None,
    }
}
