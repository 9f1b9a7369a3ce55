//! Cached title/content embeddings for every knowledge-base entry.
//!
//! On-disk format (UTF-8 text, one item per line):
//!
//! ```text
//! EMBIDX 1
//! provider=<id> dim=<N> fingerprint=<sha256 hex>
//! T <query_id> <v1> ... <vN>
//! C <query_id> <v1> ... <vN>
//! ...
//! END <record count>
//! ```
//!
//! Components are written with `{:e}` (shortest decimal that parses back to
//! the same bits). Spaces, tabs, newlines and backslashes inside ids are
//! escaped as `\s`, `\t`, `\n`, `\\`. The `END` trailer makes a truncated file
//! fail to load instead of loading with records missing.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::embeddings::{embed_texts, EmbeddingProvider, EmbeddingVector, Field};
use crate::error::{Error, Result};
use crate::kb::KnowledgeBase;

pub const MAGIC: &str = "EMBIDX 1";

const BUILD_CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct IndexRecord {
    pub title: Vec<f64>,
    pub content: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingIndex {
    provider_id: String,
    dim: usize,
    fingerprint: String,
    records: BTreeMap<String, IndexRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Freshness {
    Fresh,
    /// The knowledge base changed since the index was built.
    Stale { index: String, kb: String },
}

impl Freshness {
    pub fn is_fresh(&self) -> bool {
        matches!(self, Freshness::Fresh)
    }
}

/// SHA-256 over the id-sorted (query_id, title, content) triples, each field
/// length-prefixed.
pub fn kb_fingerprint(kb: &KnowledgeBase) -> String {
    let mut h = Sha256::new();
    for e in kb.entries() {
        for field in [&e.query_id, &e.title, &e.content] {
            h.update((field.len() as u64).to_le_bytes());
            h.update(field.as_bytes());
        }
    }
    hex::encode(h.finalize())
}

impl EmbeddingIndex {
    pub fn new(
        provider_id: impl Into<String>,
        dim: usize,
        fingerprint: impl Into<String>,
        records: BTreeMap<String, IndexRecord>,
    ) -> Result<Self> {
        let provider_id = provider_id.into();
        if dim == 0 {
            return Err(Error::Schema("index dim must be >= 1".into()));
        }
        if provider_id.is_empty() {
            return Err(Error::Schema("index provider id must not be empty".into()));
        }
        for (id, r) in &records {
            if id.is_empty() {
                return Err(Error::Schema("empty query id in index".into()));
            }
            if r.title.len() != dim || r.content.len() != dim {
                return Err(Error::Consistency(format!(
                    "record {id:?} has dims {}/{}, index dim is {dim}",
                    r.title.len(),
                    r.content.len()
                )));
            }
            if r.title.iter().chain(&r.content).any(|v| !v.is_finite()) {
                return Err(Error::Schema(format!("record {id:?} has a non-finite component")));
            }
        }
        Ok(Self {
            provider_id,
            dim,
            fingerprint: fingerprint.into(),
            records,
        })
    }

    pub fn provider_id(&self) -> &str {
        &self.provider_id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, query_id: &str) -> Option<&IndexRecord> {
        self.records.get(query_id)
    }

    pub fn records(&self) -> impl Iterator<Item = (&String, &IndexRecord)> {
        self.records.iter()
    }

    pub fn freshness(&self, kb: &KnowledgeBase) -> Freshness {
        let current = kb_fingerprint(kb);
        if current == self.fingerprint {
            Freshness::Fresh
        } else {
            Freshness::Stale {
                index: self.fingerprint.clone(),
                kb: current,
            }
        }
    }

    /// KB ids with no record in this index.
    pub fn missing<'a>(&self, kb: &'a KnowledgeBase) -> Vec<&'a str> {
        kb.entries()
            .filter(|e| !self.records.contains_key(&e.query_id))
            .map(|e| e.query_id.as_str())
            .collect()
    }

    /// Add one entry's vectors, producing a new index. Used when a question is
    /// appended to a live knowledge base.
    pub fn with_record(&self, query_id: &str, record: IndexRecord, kb: &KnowledgeBase) -> Result<Self> {
        let mut records = self.records.clone();
        records.insert(query_id.to_string(), record);
        Self::new(self.provider_id.clone(), self.dim, kb_fingerprint(kb), records)
    }

    /// Title and content vectors as [`EmbeddingVector`]s.
    pub fn vectors(&self, query_id: &str) -> Option<(EmbeddingVector, EmbeddingVector)> {
        let r = self.records.get(query_id)?;
        let id: std::sync::Arc<str> = self.provider_id.as_str().into();
        Some((
            EmbeddingVector::new(r.title.clone(), id.clone(), Field::Title).ok()?,
            EmbeddingVector::new(r.content.clone(), id, Field::Content).ok()?,
        ))
    }
}

/// Embed every entry's title and content. Any provider failure aborts the build.
pub fn build_index<P: EmbeddingProvider + ?Sized>(kb: &KnowledgeBase, provider: &P) -> Result<EmbeddingIndex> {
    let entries: Vec<_> = kb.entries().collect();
    let chunks: Vec<Vec<(String, IndexRecord)>> = entries
        .par_chunks(BUILD_CHUNK)
        .map(|chunk| {
            let titles: Vec<&str> = chunk.iter().map(|e| e.title.as_str()).collect();
            let contents: Vec<&str> = chunk.iter().map(|e| e.content.as_str()).collect();
            let tv = embed_texts(provider, &titles, Field::Title)?;
            let cv = embed_texts(provider, &contents, Field::Content)?;
            Ok(chunk
                .iter()
                .zip(tv.into_iter().zip(cv))
                .map(|(e, (t, c))| {
                    (
                        e.query_id.clone(),
                        IndexRecord {
                            title: t.into_values(),
                            content: c.into_values(),
                        },
                    )
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let records: BTreeMap<_, _> = chunks.into_iter().flatten().collect();
    let dim = if provider.dim() > 0 {
        provider.dim()
    } else {
        records.values().next().map_or(0, |r| r.title.len())
    };
    EmbeddingIndex::new(provider.provider_id(), dim, kb_fingerprint(kb), records)
}

fn escape_token(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            ' ' => out.push_str("\\s"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

fn unescape_token(s: &str) -> std::result::Result<String, String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('s') => out.push(' '),
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            other => return Err(format!("bad escape \\{}", other.map(String::from).unwrap_or_default())),
        }
    }
    Ok(out)
}

/// Serialize `index` in the cache format.
pub fn write_index(index: &EmbeddingIndex, w: &mut dyn Write) -> std::io::Result<()> {
    let mut w = BufWriter::new(w);
    writeln!(w, "{MAGIC}")?;
    writeln!(
        w,
        "provider={} dim={} fingerprint={}",
        escape_token(&index.provider_id),
        index.dim,
        index.fingerprint
    )?;
    for (id, r) in &index.records {
        let id = escape_token(id);
        for (tag, values) in [('T', &r.title), ('C', &r.content)] {
            write!(w, "{tag} {id}")?;
            for v in values {
                write!(w, " {v:e}")?;
            }
            writeln!(w)?;
        }
    }
    writeln!(w, "END {}", index.records.len())?;
    w.flush()
}

/// Run `write` against a temporary file next to `path` and rename it into
/// place only if `write` succeeds. On failure nothing is left behind and any
/// existing file at `path` is untouched.
pub fn write_atomic<F>(path: &Path, write: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> std::io::Result<()>,
{
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::Builder::new()
        .prefix(".embidx-")
        .suffix(".tmp")
        .tempfile_in(dir)
        .map_err(|e| Error::io(dir, e))?;
    write(tmp.as_file_mut()).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn save_index(index: &EmbeddingIndex, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), |w| write_index(index, w))
}

pub fn load_index(path: impl AsRef<Path>) -> Result<EmbeddingIndex> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_index(BufReader::new(file), path)
}

/// Load and compare against the knowledge base it is meant to serve.
pub fn load_index_for(path: impl AsRef<Path>, kb: &KnowledgeBase) -> Result<(EmbeddingIndex, Freshness)> {
    let index = load_index(path)?;
    let fresh = index.freshness(kb);
    if let Freshness::Stale { index: i, kb: k } = &fresh {
        tracing::warn!(index = %i, kb = %k, "embedding index is stale");
    }
    Ok((index, fresh))
}

/// Parse the cache format from any reader; `origin` only labels errors.
pub fn read_index(reader: impl BufRead, origin: &Path) -> Result<EmbeddingIndex> {
    let fail = |line: usize, message: String| Error::Format {
        path: origin.into(),
        line,
        message,
    };
    let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut next_line = |expect: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some((n, Ok(l))) => Ok((n, l)),
            Some((_, Err(e))) => Err(Error::io(origin, e)),
            None => Err(fail(0, format!("unexpected end of file, expected {expect}"))),
        }
    };

    let (n, magic) = next_line("magic line")?;
    if magic != MAGIC {
        return Err(fail(n, format!("expected {MAGIC:?}, found {magic:?}")));
    }
    let (n, header) = next_line("header line")?;
    let mut provider = None;
    let mut dim = None;
    let mut fingerprint = None;
    for kv in header.split(' ') {
        match kv.split_once('=') {
            Some(("provider", v)) => provider = Some(unescape_token(v).map_err(|m| fail(n, m))?),
            Some(("dim", v)) => dim = Some(v.parse::<usize>().map_err(|e| fail(n, format!("bad dim: {e}")))?),
            Some(("fingerprint", v)) => fingerprint = Some(v.to_string()),
            _ => return Err(fail(n, format!("unexpected header item {kv:?}"))),
        }
    }
    let (Some(provider), Some(dim), Some(fingerprint)) = (provider, dim, fingerprint) else {
        return Err(fail(n, "header needs provider=, dim= and fingerprint=".into()));
    };
    if dim == 0 {
        return Err(fail(n, "dim must be >= 1".into()));
    }

    let parse_vec = |n: usize, tag: &str, line: &str| -> Result<(String, Vec<f64>)> {
        let mut parts = line.split(' ');
        if parts.next() != Some(tag) {
            return Err(fail(n, format!("expected a {tag} record")));
        }
        let id = parts
            .next()
            .filter(|s| !s.is_empty())
            .ok_or_else(|| fail(n, "missing query id".into()))?;
        let id = unescape_token(id).map_err(|m| fail(n, m))?;
        let values = parts
            .map(|p| match p.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(fail(n, format!("bad component {p:?}"))),
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.len() != dim {
            return Err(Error::Consistency(format!(
                "{}:{n}: record {id:?} has {} components, header says dim={dim}",
                origin.display(),
                values.len()
            )));
        }
        Ok((id, values))
    };

    let mut records = BTreeMap::new();
    loop {
        let (n, line) = next_line("a record or END trailer")?;
        if let Some(count) = line.strip_prefix("END ") {
            let count: usize = count.parse().map_err(|_| fail(n, format!("bad trailer {line:?}")))?;
            if count != records.len() {
                return Err(fail(n, format!("trailer says {count} records, read {}", records.len())));
            }
            break;
        }
        let (id, title) = parse_vec(n, "T", &line)?;
        let (n2, line2) = next_line("a C record")?;
        let (id2, content) = parse_vec(n2, "C", &line2)?;
        if id2 != id {
            return Err(fail(n2, format!("C record for {id2:?} follows T record for {id:?}")));
        }
        if records.insert(id.clone(), IndexRecord { title, content }).is_some() {
            return Err(fail(n, format!("duplicate record {id:?}")));
        }
    }
    if let Some((n, Ok(extra))) = lines.next() {
        return Err(fail(n, format!("data after END trailer: {extra:?}")));
    }
    EmbeddingIndex::new(provider, dim, fingerprint, records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::HashEmbedder;
    use crate::kb::KbEntry;

    fn kb3() -> KnowledgeBase {
        KnowledgeBase::from_entries([
            KbEntry::new("je32511i", "Unable to see demo video", "we did not watch the demo video"),
            KbEntry::new("je0td4d1", "Float Division Error", ""),
            KbEntry::new("jdbjt4ko", "blender problem", "blender stops responding"),
        ])
    }

    fn to_bytes(index: &EmbeddingIndex) -> Vec<u8> {
        let mut buf = Vec::new();
        write_index(index, &mut buf).unwrap();
        buf
    }

    fn parse(bytes: &[u8]) -> Result<EmbeddingIndex> {
        read_index(bytes, Path::new("mem"))
    }

    #[test]
    fn build_shape_and_zero_content() {
        let kb = kb3();
        let idx = build_index(&kb, &HashEmbedder::new(32).unwrap()).unwrap();
        assert_eq!(idx.len(), 3);
        assert_eq!(idx.records().map(|(_, r)| [&r.title, &r.content].len()).sum::<usize>(), 6);
        assert!(idx.get("je0td4d1").unwrap().content.iter().all(|&v| v == 0.0));
        assert!(idx.freshness(&kb).is_fresh());
        assert!(idx.missing(&kb).is_empty());
    }

    #[test]
    fn rebuild_is_byte_identical() {
        let kb = kb3();
        let p = HashEmbedder::new(64).unwrap();
        let a = build_index(&kb, &p).unwrap();
        let b = build_index(&kb, &p).unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_eq!(to_bytes(&a), to_bytes(&b));
    }

    #[test]
    fn file_starts_with_magic() {
        let idx = build_index(&kb3(), &HashEmbedder::new(8).unwrap()).unwrap();
        let text = String::from_utf8(to_bytes(&idx)).unwrap();
        assert!(text.starts_with("EMBIDX 1\nprovider=hash-fnv1a-d8 dim=8 fingerprint="));
        assert!(text.ends_with("END 3\n"));
    }

    #[test]
    fn ids_with_spaces_survive() {
        let mut records = BTreeMap::new();
        records.insert(
            "a b\\c".to_string(),
            IndexRecord {
                title: vec![1.0, -0.0],
                content: vec![1e-300, 5e-324],
            },
        );
        let idx = EmbeddingIndex::new("p q", 2, "ff", records).unwrap();
        let back = parse(&to_bytes(&idx)).unwrap();
        assert_eq!(back, idx);
        assert!(back.get("a b\\c").unwrap().title[1].is_sign_negative());
    }

    #[test]
    fn rejects_bad_files() {
        let idx = build_index(&kb3(), &HashEmbedder::new(8).unwrap()).unwrap();
        let good = String::from_utf8(to_bytes(&idx)).unwrap();

        let wrong_magic = good.replacen("EMBIDX 1", "EMBIDX 2", 1);
        assert!(matches!(parse(wrong_magic.as_bytes()), Err(Error::Format { line: 1, .. })));

        let mut lines: Vec<String> = good.lines().map(String::from).collect();
        lines[3].push_str(" nonsense");
        let corrupt = lines.join("\n") + "\n";
        assert!(matches!(parse(corrupt.as_bytes()), Err(Error::Format { line: 4, .. })));

        let mut lines: Vec<String> = good.lines().map(String::from).collect();
        lines[2].push_str(" 0.5");
        let mixed = lines.join("\n") + "\n";
        assert!(matches!(parse(mixed.as_bytes()), Err(Error::Consistency(_))));

        let no_trailer: String = good.lines().take(8).map(|l| format!("{l}\n")).collect();
        assert!(parse(no_trailer.as_bytes()).is_err());
    }

    #[test]
    fn stale_fingerprint_is_reported() {
        let kb = kb3();
        let idx = build_index(&kb, &HashEmbedder::new(8).unwrap()).unwrap();
        let grown = kb.append(KbEntry::new("new1", "new question", "text")).unwrap();
        assert!(matches!(idx.freshness(&grown), Freshness::Stale { .. }));
        assert_eq!(idx.missing(&grown), vec!["new1"]);
    }

    #[test]
    fn save_to_unwritable_dir_fails() {
        let err = save_index(
            &build_index(&kb3(), &HashEmbedder::new(8).unwrap()).unwrap(),
            "/proc/definitely/not/here.idx",
        )
        .unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}
