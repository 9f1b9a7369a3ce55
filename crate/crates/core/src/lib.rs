//! Duplicate-question retrieval for course discussion-forum archives.
//!
//! Given a new question (title, content, tags), find up to five archived
//! questions whose similarity clears a threshold and hand back their answer
//! threads. Corpus embeddings are computed once and cached on disk, so a
//! query only pays for embedding itself and an exhaustive scan.
//!
//! ```no_run
//! use std::sync::Arc;
//! use forumqa::prelude::*;
//!
//! # fn main() -> forumqa::Result<()> {
//! let kb = build_knowledge_base("questions.tsv", Some("threads.tsv".as_ref()))?;
//! let provider = HashEmbedder::default();
//! let index = build_index(&kb, &provider)?;
//! let snapshot = Snapshot::new(Arc::new(kb), Arc::new(index))?;
//!
//! let query = Query::new("blender problem", "blender stops responding");
//! for m in rank_all(&snapshot, &provider, &query, &Weights::default())? {
//!     println!("{} {:.3} {}", m.rank, m.breakdown.n_sim, m.title);
//! }
//! # Ok(())
//! # }
//! ```

pub mod bench;
pub mod cli;
pub mod embeddings;
pub mod error;
pub mod index_store;
pub mod kb;
pub mod retrieval;
pub mod service;
pub mod simcore;
pub mod synthetic;
pub mod textnorm;

pub use error::{Error, Result};

pub mod prelude {
    pub use crate::bench::{bench_tart, TartReport};
    pub use crate::embeddings::{
        embed_text, hash_embed, EmbeddingProvider, EmbeddingVector, Field, HashEmbedder, RemoteProvider,
        WordVectorProvider,
    };
    pub use crate::error::{Error, Result};
    pub use crate::index_store::{build_index, load_index, save_index, EmbeddingIndex, Freshness};
    pub use crate::kb::{build_knowledge_base, AnswerThread, KbEntry, KnowledgeBase};
    pub use crate::retrieval::{
        apply_threshold_topk, cascade_rank, get_thread, rank, rank_all, Mode, Query, RankedMatch, Snapshot,
        SnapshotCell,
    };
    pub use crate::simcore::{cosine_similarity, jaccard_similarity, weighted_similarity, SimilarityBreakdown, Weights};
    pub use crate::textnorm::{token_set, tokenize, TokenSet};
}
