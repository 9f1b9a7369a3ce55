//! Ranking archived questions against a new one.
//!
//! Every candidate is scored, candidates below the threshold are discarded,
//! the rest are sorted by score (ties by ascending query id) and cut to `k`.
//! An empty result means no known duplicate: the question is new.

use std::collections::BTreeSet;
use std::sync::Arc;

use parking_lot::RwLock;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embeddings::{embed_texts, EmbeddingProvider, EmbeddingVector, Field};
use crate::error::{Error, Result};
use crate::index_store::{EmbeddingIndex, Freshness, IndexRecord};
use crate::kb::{AnswerThread, KbEntry, KnowledgeBase};
use crate::simcore::{cosine, jaccard_similarity, weighted_raw, SimilarityBreakdown, Weights};
use crate::textnorm::{SourceField, TokenSet, Tokenizer};

pub const DEFAULT_K: usize = 5;
pub const DEFAULT_THRESHOLD: f64 = 0.70;
pub const DEFAULT_PREFILTER: usize = 50;

/// Which score orders the candidates.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Jaccard,
    CosineTitle,
    CosineContent,
    #[default]
    Weighted,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "jaccard" => Ok(Mode::Jaccard),
            "cosine_title" => Ok(Mode::CosineTitle),
            "cosine_content" => Ok(Mode::CosineContent),
            "weighted" => Ok(Mode::Weighted),
            other => Err(format!(
                "unknown mode {other:?} (expected jaccard, cosine_title, cosine_content or weighted)"
            )),
        }
    }
}

/// Lexical prefilter: keep the `prefilter_size` best candidates by Jaccard
/// overlap before semantic scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cascade {
    pub prefilter_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub title: String,
    pub content: String,
    pub tags: BTreeSet<String>,
    pub k: usize,
    pub threshold: f64,
    pub mode: Mode,
    pub cascade: Option<Cascade>,
    /// Field whose token sets feed Jaccard (prefilter and breakdown).
    pub lexical_field: SourceField,
    /// Only consider candidates sharing at least one tag with the query.
    pub tag_filter: bool,
}

impl Query {
    pub fn new(title: impl Into<String>, content: impl Into<String>) -> Self {
        Self {
            title: title.into(),
            content: content.into(),
            tags: BTreeSet::new(),
            k: DEFAULT_K,
            threshold: DEFAULT_THRESHOLD,
            mode: Mode::Weighted,
            cascade: None,
            lexical_field: SourceField::TitleContent,
            tag_filter: false,
        }
    }

    pub fn from_entry(entry: &KbEntry) -> Self {
        let mut q = Self::new(entry.title.clone(), entry.content.clone());
        q.tags = entry.tags.clone();
        q
    }

    pub fn k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    pub fn threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }

    pub fn mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn cascade(mut self, prefilter_size: usize) -> Self {
        self.cascade = Some(Cascade { prefilter_size });
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(format!(
                "threshold must lie in [0, 1], got {}",
                self.threshold
            )));
        }
        if let Some(c) = self.cascade {
            if c.prefilter_size == 0 {
                return Err(Error::Config("cascade prefilter size must be >= 1".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedMatch {
    pub query_id: String,
    pub rank: usize,
    /// The score the ranking used (`n_sim` in weighted mode).
    pub score: f64,
    pub breakdown: SimilarityBreakdown,
    pub title: String,
    pub tags: BTreeSet<String>,
    pub thread_available: bool,
}

/// Keep `(id, score)` pairs with `score >= threshold`, best first, ties by
/// ascending id, at most `k`.
pub fn apply_threshold_topk(scored: Vec<(String, f64)>, threshold: f64, k: usize) -> Vec<(String, f64)> {
    select(scored, threshold, k, |(_, s)| *s, |(a, _), (b, _)| a.cmp(b))
}

fn select<T>(
    mut items: Vec<T>,
    threshold: f64,
    k: usize,
    score: impl Fn(&T) -> f64,
    by_id: impl Fn(&T, &T) -> std::cmp::Ordering,
) -> Vec<T> {
    items.retain(|it| score(it) >= threshold);
    sort_best_first(&mut items, &score, &by_id);
    items.truncate(k);
    items
}

fn sort_best_first<T>(
    items: &mut [T],
    score: &impl Fn(&T) -> f64,
    by_id: &impl Fn(&T, &T) -> std::cmp::Ordering,
) {
    items.sort_by(|a, b| score(b).total_cmp(&score(a)).then_with(|| by_id(a, b)));
}

struct Row {
    title_set: TokenSet,
    content_set: TokenSet,
    combined_set: TokenSet,
}

impl Row {
    fn lexical(&self, field: SourceField) -> &TokenSet {
        match field {
            SourceField::Title => &self.title_set,
            SourceField::Content => &self.content_set,
            SourceField::TitleContent => &self.combined_set,
        }
    }
}

/// An immutable (knowledge base, embedding index) pair, with per-entry data
/// laid out for scanning.
pub struct Snapshot {
    kb: Arc<KnowledgeBase>,
    index: Arc<EmbeddingIndex>,
    tokenizer: Tokenizer,
    ids: Vec<String>,
    rows: Vec<Row>,
    titles: Vec<f64>,
    contents: Vec<f64>,
    freshness: Freshness,
}

impl std::fmt::Debug for Snapshot {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Snapshot")
            .field("entries", &self.ids.len())
            .field("provider", &self.index.provider_id())
            .field("dim", &self.index.dim())
            .field("freshness", &self.freshness)
            .finish()
    }
}

impl Snapshot {
    /// Fails unless `index` holds vectors for every entry of `kb`.
    pub fn new(kb: Arc<KnowledgeBase>, index: Arc<EmbeddingIndex>) -> Result<Self> {
        Self::with_tokenizer(kb, index, Tokenizer::default())
    }

    pub fn with_tokenizer(kb: Arc<KnowledgeBase>, index: Arc<EmbeddingIndex>, tokenizer: Tokenizer) -> Result<Self> {
        let missing = index.missing(&kb);
        if !missing.is_empty() {
            return Err(Error::Consistency(format!(
                "embedding index lacks {} of {} entries (first: {:?}); rebuild the index",
                missing.len(),
                kb.len(),
                missing[0]
            )));
        }
        let dim = index.dim();
        let mut ids = Vec::with_capacity(kb.len());
        let mut titles = Vec::with_capacity(kb.len() * dim);
        let mut contents = Vec::with_capacity(kb.len() * dim);
        for e in kb.entries() {
            let r = index.get(&e.query_id).expect("coverage checked");
            ids.push(e.query_id.clone());
            titles.extend_from_slice(&r.title);
            contents.extend_from_slice(&r.content);
        }
        let rows = kb
            .entries()
            .collect::<Vec<_>>()
            .par_iter()
            .map(|e| Row {
                title_set: tokenizer.token_set(&e.title, SourceField::Title),
                content_set: tokenizer.token_set(&e.content, SourceField::Content),
                combined_set: tokenizer.token_set(&e.combined_text(), SourceField::TitleContent),
            })
            .collect();
        let freshness = index.freshness(&kb);
        Ok(Self {
            kb,
            index,
            tokenizer,
            ids,
            rows,
            titles,
            contents,
            freshness,
        })
    }

    pub fn kb(&self) -> &KnowledgeBase {
        &self.kb
    }

    pub fn kb_arc(&self) -> Arc<KnowledgeBase> {
        self.kb.clone()
    }

    pub fn index(&self) -> &EmbeddingIndex {
        &self.index
    }

    pub fn index_arc(&self) -> Arc<EmbeddingIndex> {
        self.index.clone()
    }

    pub fn freshness(&self) -> &Freshness {
        &self.freshness
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    fn title_vec(&self, i: usize) -> &[f64] {
        let d = self.index.dim();
        &self.titles[i * d..(i + 1) * d]
    }

    fn content_vec(&self, i: usize) -> &[f64] {
        let d = self.index.dim();
        &self.contents[i * d..(i + 1) * d]
    }

    /// A new snapshot with `entry` added to the knowledge base and its
    /// vectors to the index. `self` stays valid for in-flight readers.
    pub fn with_appended<P: EmbeddingProvider + ?Sized>(&self, entry: KbEntry, provider: &P) -> Result<Snapshot> {
        let kb = self.kb.append(entry)?;
        let added = kb
            .entries()
            .find(|e| !self.kb.contains(&e.query_id))
            .expect("append adds one entry")
            .clone();
        let (t, c) = embed_query_fields(self, provider, &added.title, &added.content)?;
        let index = self.index.with_record(
            &added.query_id,
            IndexRecord {
                title: t.into_values(),
                content: c.into_values(),
            },
            &kb,
        )?;
        Snapshot::with_tokenizer(Arc::new(kb), Arc::new(index), self.tokenizer)
    }
}

/// Holder for the current snapshot; replacing it never disturbs readers
/// already holding the previous one.
#[derive(Default)]
pub struct SnapshotCell {
    current: RwLock<Option<Arc<Snapshot>>>,
}

impl SnapshotCell {
    pub fn new(snapshot: Option<Snapshot>) -> Self {
        Self {
            current: RwLock::new(snapshot.map(Arc::new)),
        }
    }

    pub fn load(&self) -> Option<Arc<Snapshot>> {
        self.current.read().clone()
    }

    /// Install `next`, returning the snapshot it replaced.
    pub fn store(&self, next: Snapshot) -> Option<Arc<Snapshot>> {
        self.current.write().replace(Arc::new(next))
    }
}

fn embed_query_fields<P: EmbeddingProvider + ?Sized>(
    snapshot: &Snapshot,
    provider: &P,
    title: &str,
    content: &str,
) -> Result<(EmbeddingVector, EmbeddingVector)> {
    let mut title_v = embed_texts(provider, &[title], Field::Title)?;
    let mut content_v = embed_texts(provider, &[content], Field::Content)?;
    let (t, c) = (title_v.pop().unwrap(), content_v.pop().unwrap());
    let index = snapshot.index();
    if t.provider_id() != index.provider_id() || t.dim() != index.dim() {
        return Err(Error::Consistency(format!(
            "query embedded by {}/{} but index was built by {}/{}",
            t.provider_id(),
            t.dim(),
            index.provider_id(),
            index.dim()
        )));
    }
    Ok((t, c))
}

struct Scored {
    row: usize,
    score: f64,
    breakdown: SimilarityBreakdown,
}

struct Prepared {
    title: EmbeddingVector,
    content: EmbeddingVector,
    lexical: TokenSet,
}

fn prepare<P: EmbeddingProvider + ?Sized>(
    snapshot: &Snapshot,
    provider: &P,
    query: &Query,
    weights: &Weights,
) -> Result<Prepared> {
    query.validate()?;
    weights.validate()?;
    let (title, content) = embed_query_fields(snapshot, provider, &query.title, &query.content)?;
    let text = match query.lexical_field {
        SourceField::Title => query.title.clone(),
        SourceField::Content => query.content.clone(),
        SourceField::TitleContent => format!("{} {}", query.title, query.content),
    };
    let lexical = snapshot.tokenizer.token_set(&text, query.lexical_field);
    Ok(Prepared {
        title,
        content,
        lexical,
    })
}

fn eligible(snapshot: &Snapshot, query: &Query) -> Vec<usize> {
    if !query.tag_filter || query.tags.is_empty() {
        return (0..snapshot.len()).collect();
    }
    snapshot
        .kb
        .entries()
        .enumerate()
        .filter(|(_, e)| !e.tags.is_disjoint(&query.tags))
        .map(|(i, _)| i)
        .collect()
}

fn score_rows(snapshot: &Snapshot, prepared: &Prepared, query: &Query, weights: &Weights, rows: &[usize]) -> Vec<Scored> {
    rows.par_iter()
        .map(|&i| {
            let mut breakdown = weighted_raw(
                prepared.title.values(),
                prepared.content.values(),
                snapshot.title_vec(i),
                snapshot.content_vec(i),
                weights,
            );
            let jaccard = jaccard_similarity(&prepared.lexical, snapshot.rows[i].lexical(query.lexical_field));
            breakdown.jaccard = Some(jaccard);
            let score = match query.mode {
                Mode::Jaccard => jaccard,
                Mode::CosineTitle => breakdown.t_sim,
                Mode::CosineContent => breakdown.c_sim,
                Mode::Weighted => breakdown.n_sim,
            };
            Scored { row: i, score, breakdown }
        })
        .collect()
}

fn finish(snapshot: &Snapshot, scored: Vec<Scored>, query: &Query) -> Vec<RankedMatch> {
    let ids = &snapshot.ids;
    select(
        scored,
        query.threshold,
        query.k,
        |s| s.score,
        |a, b| ids[a.row].cmp(&ids[b.row]),
    )
        .into_iter()
        .enumerate()
        .map(|(n, s)| {
            let entry = snapshot.kb.get(&ids[s.row]).expect("row ids come from kb");
            RankedMatch {
                query_id: entry.query_id.clone(),
                rank: n + 1,
                score: s.score,
                breakdown: s.breakdown,
                title: entry.title.clone(),
                tags: entry.tags.clone(),
                thread_available: snapshot.kb.has_thread(&entry.query_id),
            }
        })
        .collect()
}

/// Score every (eligible) candidate and return the thresholded top `k`.
pub fn rank_all<P: EmbeddingProvider + ?Sized>(
    snapshot: &Snapshot,
    provider: &P,
    query: &Query,
    weights: &Weights,
) -> Result<Vec<RankedMatch>> {
    let prepared = prepare(snapshot, provider, query, weights)?;
    let rows = eligible(snapshot, query);
    let scored = score_rows(snapshot, &prepared, query, weights, &rows);
    Ok(finish(snapshot, scored, query))
}

/// Ids that survive the Jaccard prefilter, best first.
pub fn prefilter<P: EmbeddingProvider + ?Sized>(
    snapshot: &Snapshot,
    provider: &P,
    query: &Query,
    prefilter_size: usize,
) -> Result<Vec<String>> {
    let prepared = prepare(snapshot, provider, query, &Weights::default())?;
    Ok(stage_one(snapshot, &prepared, query, prefilter_size)
        .into_iter()
        .map(|i| snapshot.ids[i].clone())
        .collect())
}

fn stage_one(snapshot: &Snapshot, prepared: &Prepared, query: &Query, prefilter_size: usize) -> Vec<usize> {
    let mut lexical: Vec<(usize, f64)> = eligible(snapshot, query)
        .into_par_iter()
        .map(|i| {
            let j = jaccard_similarity(&prepared.lexical, snapshot.rows[i].lexical(query.lexical_field));
            (i, j)
        })
        .collect();
    let ids = &snapshot.ids;
    sort_best_first(&mut lexical, &|(_, j): &(usize, f64)| *j, &|(a, _), (b, _)| ids[*a].cmp(&ids[*b]));
    lexical.truncate(prefilter_size);
    lexical.into_iter().map(|(i, _)| i).collect()
}

/// Two stages: Jaccard keeps the best `prefilter_size` candidates, then those
/// are scored as in [`rank_all`]. Threshold and `k` apply to stage-two scores.
pub fn cascade_rank<P: EmbeddingProvider + ?Sized>(
    snapshot: &Snapshot,
    provider: &P,
    query: &Query,
    weights: &Weights,
    prefilter_size: usize,
) -> Result<Vec<RankedMatch>> {
    if prefilter_size == 0 {
        return Err(Error::Config("cascade prefilter size must be >= 1".into()));
    }
    let prepared = prepare(snapshot, provider, query, weights)?;
    let survivors = stage_one(snapshot, &prepared, query, prefilter_size);
    let scored = score_rows(snapshot, &prepared, query, weights, &survivors);
    Ok(finish(snapshot, scored, query))
}

/// [`cascade_rank`] when the query asks for a cascade, [`rank_all`] otherwise.
pub fn rank<P: EmbeddingProvider + ?Sized>(
    snapshot: &Snapshot,
    provider: &P,
    query: &Query,
    weights: &Weights,
) -> Result<Vec<RankedMatch>> {
    match query.cascade {
        Some(c) => cascade_rank(snapshot, provider, query, weights, c.prefilter_size),
        None => rank_all(snapshot, provider, query, weights),
    }
}

pub fn get_thread<'a>(kb: &'a KnowledgeBase, query_id: &str) -> Result<Option<&'a AnswerThread>> {
    kb.thread(query_id)
}

/// Cosine between two stored entries, mostly for diagnostics.
pub fn entry_cosine(snapshot: &Snapshot, a: &str, b: &str, field: Field) -> Option<f64> {
    let ra = snapshot.index.get(a)?;
    let rb = snapshot.index.get(b)?;
    Some(match field {
        Field::Title => cosine(&ra.title, &rb.title),
        Field::Content => cosine(&ra.content, &rb.content),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::HashEmbedder;
    use crate::index_store::build_index;

    fn scored(pairs: &[(&str, f64)]) -> Vec<(String, f64)> {
        pairs.iter().map(|(i, s)| (i.to_string(), *s)).collect()
    }

    #[test]
    fn threshold_topk_rules() {
        assert!(apply_threshold_topk(scored(&[("a", 0.1), ("b", 0.69)]), 0.7, 5).is_empty());
        assert_eq!(apply_threshold_topk(scored(&[("a", 0.7)]), 0.7, 5), scored(&[("a", 0.7)]));
        assert_eq!(
            apply_threshold_topk(scored(&[("b", 0.8), ("a", 0.8), ("c", 0.9)]), 0.7, 5),
            scored(&[("c", 0.9), ("a", 0.8), ("b", 0.8)])
        );
        let many: Vec<(String, f64)> = (0..7).map(|i| (format!("q{i}"), 0.71 + i as f64 * 0.01)).collect();
        assert_eq!(apply_threshold_topk(many, 0.7, 5).len(), 5);
    }

    fn snapshot(entries: &[(&str, &str, &str)]) -> (Snapshot, HashEmbedder) {
        let kb = KnowledgeBase::from_entries(entries.iter().map(|(i, t, c)| KbEntry::new(*i, *t, *c)));
        let p = HashEmbedder::new(256).unwrap();
        let index = build_index(&kb, &p).unwrap();
        (Snapshot::new(Arc::new(kb), Arc::new(index)).unwrap(), p)
    }

    #[test]
    fn verbatim_query_ranks_itself_first() {
        let (snap, p) = snapshot(&[
            ("a", "blender problem", "blender stops responding when moving robot"),
            ("b", "Float Division Error", "float division by zero in moments"),
            ("c", "Unable to see demo video", "the demo video is gone from the portal"),
        ]);
        let q = Query::new("blender problem", "blender stops responding when moving robot").threshold(0.0);
        let out = rank_all(&snap, &p, &q, &Weights::new(1.0, 0.0, 1.0).unwrap()).unwrap();
        assert_eq!(out[0].query_id, "a");
        assert!((out[0].breakdown.n_sim - 1.0).abs() < 1e-9);
        assert_eq!(out.iter().map(|m| m.rank).collect::<Vec<_>>(), [1, 2, 3]);
    }

    #[test]
    fn mismatched_provider_is_consistency_error() {
        let (snap, _) = snapshot(&[("a", "x", "y")]);
        let other = HashEmbedder::new(64).unwrap();
        let err = rank_all(&snap, &other, &Query::new("x", "y"), &Weights::default()).unwrap_err();
        assert!(matches!(err, Error::Consistency(_)));
    }

    #[test]
    fn query_validation() {
        let (snap, p) = snapshot(&[("a", "x", "y")]);
        let w = Weights::default();
        assert!(matches!(rank_all(&snap, &p, &Query::new("x", "").k(0), &w), Err(Error::Config(_))));
        assert!(matches!(rank_all(&snap, &p, &Query::new("x", "").threshold(1.5), &w), Err(Error::Config(_))));
        assert!(matches!(cascade_rank(&snap, &p, &Query::new("x", ""), &w, 0), Err(Error::Config(_))));
    }

    #[test]
    fn empty_query_matches_nothing() {
        let (snap, p) = snapshot(&[("a", "x", "y"), ("b", "z", "")]);
        assert!(rank_all(&snap, &p, &Query::new("", ""), &Weights::default()).unwrap().is_empty());
    }

    #[test]
    fn tag_filter_is_opt_in() {
        let kb = KnowledgeBase::from_entries([
            KbEntry::new("a", "motor driver", "l298 heats").with_tags(["planter_bot"]),
            KbEntry::new("b", "motor driver", "l298 heats").with_tags(["transporter_bot"]),
        ]);
        let p = HashEmbedder::new(64).unwrap();
        let index = build_index(&kb, &p).unwrap();
        let snap = Snapshot::new(Arc::new(kb), Arc::new(index)).unwrap();
        let mut q = Query::new("motor driver", "l298 heats");
        q.tags = ["transporter_bot".to_string()].into();
        assert_eq!(rank_all(&snap, &p, &q, &Weights::default()).unwrap().len(), 2);
        q.tag_filter = true;
        let out = rank_all(&snap, &p, &q, &Weights::default()).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].query_id, "b");
    }

    #[test]
    fn append_then_self_match() {
        let (snap, p) = snapshot(&[("a", "blender problem", "stops responding")]);
        let next = snap
            .with_appended(KbEntry::new("n1", "xbee pairing fails", "xbee modules do not pair"), &p)
            .unwrap();
        assert_eq!(snap.len(), 1);
        assert_eq!(next.len(), 2);
        assert!(next.freshness().is_fresh());
        let out = rank_all(&next, &p, &Query::new("xbee pairing fails", "xbee modules do not pair"), &Weights::default()).unwrap();
        assert_eq!(out[0].query_id, "n1");
        assert!(matches!(snap.with_appended(KbEntry::new("a", "t", "c"), &p), Err(Error::Conflict(_))));
    }

    #[test]
    fn snapshot_requires_full_coverage() {
        let kb = KnowledgeBase::from_entries([KbEntry::new("a", "t", "c")]);
        let p = HashEmbedder::new(16).unwrap();
        let index = build_index(&kb, &p).unwrap();
        let grown = kb.append(KbEntry::new("b", "u", "d")).unwrap();
        assert!(matches!(Snapshot::new(Arc::new(grown), Arc::new(index)), Err(Error::Consistency(_))));
    }

    #[test]
    fn cell_swaps_without_disturbing_readers() {
        let (snap, p) = snapshot(&[("a", "t", "c")]);
        let cell = SnapshotCell::new(Some(snap));
        let held = cell.load().unwrap();
        let next = held.with_appended(KbEntry::new("b", "u", "d"), &p).unwrap();
        let old = cell.store(next).unwrap();
        assert!(Arc::ptr_eq(&old, &held));
        assert_eq!(held.len(), 1);
        assert_eq!(cell.load().unwrap().len(), 2);
    }

    #[test]
    fn thread_lookup() {
        let (snap, _) = snapshot(&[("a", "t", "c")]);
        assert!(get_thread(snap.kb(), "a").unwrap().is_none());
        assert!(matches!(get_thread(snap.kb(), "nope"), Err(Error::NotFound(_))));
    }
}
