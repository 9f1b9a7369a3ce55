//! Knowledge base: archived forum questions and their answer threads.
//!
//! Input is a pair of tab-separated exports. Fields may not contain raw tabs
//! or newlines; those are written as `\t` and `\n` (and a literal backslash as
//! `\\`).
//!
//! ```text
//! query_id  title  content  tags  asked_at
//! query_id  post_index  author_role  body
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const QUESTION_COLUMNS: [&str; 5] = ["query_id", "title", "content", "tags", "asked_at"];
pub const THREAD_COLUMNS: [&str; 4] = ["query_id", "post_index", "author_role", "body"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KbEntry {
    pub query_id: String,
    pub title: String,
    pub content: String,
    pub tags: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub asked_at: Option<i64>,
}

impl KbEntry {
    pub fn new(query_id: impl Into<String>, title: impl Into<String>, content: impl Into<String>) -> Self {
        Self {
            query_id: query_id.into(),
            title: title.into(),
            content: content.into(),
            tags: BTreeSet::new(),
            asked_at: None,
        }
    }

    pub fn with_tags<I, S>(mut self, tags: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        self.tags = tags.into_iter().map(|t| t.as_ref().trim().to_lowercase()).filter(|t| !t.is_empty()).collect();
        self
    }

    /// Title and content joined by a space, the text used for lexical matching.
    pub fn combined_text(&self) -> String {
        format!("{} {}", self.title, self.content)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuthorRole {
    Student,
    Staff,
}

impl std::str::FromStr for AuthorRole {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "student" => Ok(AuthorRole::Student),
            "staff" => Ok(AuthorRole::Staff),
            other => Err(format!("unknown author role {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Post {
    pub author_role: AuthorRole,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerThread {
    pub query_id: String,
    pub posts: Vec<Post>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KbStats {
    pub raw_count: usize,
    pub cleaned_count: usize,
    pub dropped_count: usize,
}

/// Why an input row did not make it into the knowledge base.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    /// 1-based line in the source file; 0 for entries appended at runtime.
    pub line: usize,
    pub query_id: Option<String>,
    pub reason: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}", self.line)?;
        if let Some(id) = &self.query_id {
            write!(f, " ({id})")?;
        }
        write!(f, ": {}", self.reason)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rejection {
    EmptyId,
    EmptyText,
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rejection::EmptyId => f.write_str("empty query id"),
            Rejection::EmptyText => f.write_str("title and content both empty after cleaning"),
        }
    }
}

/// Raw rows of a questions export, before cleaning.
#[derive(Debug, Clone, Default)]
pub struct ParsedQuestions {
    /// (line number, entry)
    pub rows: Vec<(usize, KbEntry)>,
    pub malformed: Vec<Diagnostic>,
}

impl ParsedQuestions {
    pub fn raw_count(&self) -> usize {
        self.rows.len() + self.malformed.len()
    }

    pub fn entries(&self) -> impl Iterator<Item = &KbEntry> {
        self.rows.iter().map(|(_, e)| e)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeBase {
    entries: BTreeMap<String, KbEntry>,
    threads: BTreeMap<String, AnswerThread>,
    stats: KbStats,
    #[serde(default)]
    diagnostics: Vec<Diagnostic>,
}

/// Undo the export escapes: `\t`, `\n`, `\r`, `\\`. Unknown escapes stay as-is.
pub fn unescape_field(field: &str) -> String {
    let mut out = String::with_capacity(field.len());
    let mut chars = field.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some('\\') => out.push('\\'),
            Some(other) => {
                out.push('\\');
                out.push(other);
            }
            None => out.push('\\'),
        }
    }
    out
}

pub fn escape_field(field: &str) -> String {
    let mut out = String::with_capacity(field.len());
    for c in field.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

fn split_tags(raw: &str) -> BTreeSet<String> {
    raw.split([',', ';'])
        .map(|t| t.trim().to_lowercase())
        .filter(|t| !t.is_empty())
        .collect()
}

struct Header {
    columns: Vec<String>,
}

impl Header {
    fn parse(line: &str, required: &[&str], path: &Path) -> Result<Self> {
        let columns: Vec<String> = line
            .trim_start_matches('\u{feff}')
            .split('\t')
            .map(|c| c.trim().to_ascii_lowercase())
            .collect();
        for name in required {
            if !columns.iter().any(|c| c == name) {
                return Err(Error::Schema(format!(
                    "{}: missing required column {name:?}",
                    path.display()
                )));
            }
        }
        Ok(Self { columns })
    }

    fn index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }
}

/// Data lines of a TSV file as (1-based line number, fields), header split off.
fn read_tsv(path: &Path) -> Result<(String, Vec<(usize, String)>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    let header = match lines.next() {
        Some((_, h)) => h.trim_end_matches('\r').to_string(),
        None => return Err(Error::Schema(format!("{}: empty file, no header", path.display()))),
    };
    let rows = lines
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r').to_string()))
        .filter(|(_, l)| !l.is_empty())
        .collect();
    Ok((header, rows))
}

/// Parse a questions export into raw entries. Rows with the wrong number of
/// fields or an unparseable `asked_at` are skipped and reported.
pub fn parse_questions_tsv(path: impl AsRef<Path>) -> Result<ParsedQuestions> {
    let path = path.as_ref();
    let (header_line, lines) = read_tsv(path)?;
    let header = Header::parse(&header_line, &QUESTION_COLUMNS[..4], path)?;
    let idx = |name| header.index(name);
    let (id_i, title_i, content_i, tags_i) = (
        idx("query_id").unwrap(),
        idx("title").unwrap(),
        idx("content").unwrap(),
        idx("tags").unwrap(),
    );
    let asked_i = idx("asked_at");

    let mut parsed = ParsedQuestions::default();
    for (line, raw) in lines {
        let fields: Vec<&str> = raw.split('\t').collect();
        let id_hint = fields.first().map(|s| unescape_field(s));
        if fields.len() != header.columns.len() {
            let d = Diagnostic {
                line,
                query_id: id_hint,
                reason: format!(
                    "expected {} fields, found {}",
                    header.columns.len(),
                    fields.len()
                ),
            };
            tracing::warn!(path = %path.display(), "{d}");
            parsed.malformed.push(d);
            continue;
        }
        let asked_at = match asked_i.map(|i| fields[i].trim()) {
            None | Some("") => None,
            Some(s) => match s.parse::<i64>() {
                Ok(v) => Some(v),
                Err(_) => {
                    let d = Diagnostic {
                        line,
                        query_id: id_hint,
                        reason: format!("asked_at {s:?} is not an integer timestamp"),
                    };
                    tracing::warn!(path = %path.display(), "{d}");
                    parsed.malformed.push(d);
                    continue;
                }
            },
        };
        parsed.rows.push((
            line,
            KbEntry {
                query_id: unescape_field(fields[id_i]),
                title: unescape_field(fields[title_i]),
                content: unescape_field(fields[content_i]),
                tags: split_tags(&unescape_field(fields[tags_i])),
                asked_at,
            },
        ));
    }
    Ok(parsed)
}

/// One row of a threads export.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThreadRow {
    pub line: usize,
    pub query_id: String,
    pub post_index: i64,
    pub post: Post,
}

pub fn parse_threads_tsv(path: impl AsRef<Path>) -> Result<(Vec<ThreadRow>, Vec<Diagnostic>)> {
    let path = path.as_ref();
    let (header_line, lines) = read_tsv(path)?;
    let header = Header::parse(&header_line, &THREAD_COLUMNS, path)?;
    let [id_i, pi_i, role_i, body_i] = THREAD_COLUMNS.map(|c| header.index(c).unwrap());

    let mut rows = Vec::new();
    let mut bad = Vec::new();
    for (line, raw) in lines {
        let fields: Vec<&str> = raw.split('\t').collect();
        let query_id = fields.first().map(|s| unescape_field(s));
        let row = if fields.len() != header.columns.len() {
            Err(format!(
                "expected {} fields, found {}",
                header.columns.len(),
                fields.len()
            ))
        } else {
            fields[pi_i]
                .trim()
                .parse::<i64>()
                .map_err(|_| format!("post_index {:?} is not an integer", fields[pi_i]))
                .and_then(|post_index| {
                    let author_role = fields[role_i].parse::<AuthorRole>()?;
                    Ok(ThreadRow {
                        line,
                        query_id: unescape_field(fields[id_i]),
                        post_index,
                        post: Post {
                            author_role,
                            body: clean_text(&unescape_field(fields[body_i])),
                        },
                    })
                })
        };
        match row {
            Ok(r) => rows.push(r),
            Err(reason) => {
                let d = Diagnostic { line, query_id, reason };
                tracing::warn!(path = %path.display(), "{d}");
                bad.push(d);
            }
        }
    }
    Ok((rows, bad))
}

fn markup_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"<(?:[A-Za-z]|/[A-Za-z]|!)[^<>]*>").expect("valid regex"))
}

/// Remove control characters and markup tags, collapse whitespace runs to a
/// single space, trim. Idempotent.
pub fn clean_text(text: &str) -> String {
    let mut s: String = text
        .chars()
        .map(|c| if c.is_whitespace() { ' ' } else { c })
        .filter(|c| !c.is_control())
        .collect();
    loop {
        let next = markup_re().replace_all(&s, " ");
        if next == s {
            break;
        }
        s = next.into_owned();
    }
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Normalize one raw entry, or say why it cannot be kept.
pub fn clean_entry(raw: &KbEntry) -> std::result::Result<KbEntry, Rejection> {
    let query_id = clean_text(&raw.query_id);
    if query_id.is_empty() {
        return Err(Rejection::EmptyId);
    }
    let title = clean_text(&raw.title);
    let content = clean_text(&raw.content);
    if title.is_empty() && content.is_empty() {
        return Err(Rejection::EmptyText);
    }
    let tags = raw
        .tags
        .iter()
        .map(|t| clean_text(t).to_lowercase())
        .filter(|t| !t.is_empty())
        .collect();
    Ok(KbEntry {
        query_id,
        title,
        content,
        tags,
        asked_at: raw.asked_at,
    })
}

/// Parse, clean and deduplicate a questions export, then attach threads.
///
/// The first occurrence of a query id wins. Threads whose id is not in the
/// knowledge base are dropped. Every dropped row leaves a diagnostic.
pub fn build_knowledge_base(
    questions_path: impl AsRef<Path>,
    threads_path: Option<&Path>,
) -> Result<KnowledgeBase> {
    let parsed = parse_questions_tsv(questions_path)?;
    let mut kb = KnowledgeBase::from_parsed(parsed);
    if let Some(tp) = threads_path {
        let (rows, bad) = parse_threads_tsv(tp)?;
        kb.diagnostics.extend(bad);
        kb.attach_threads(rows);
    }
    Ok(kb)
}

pub fn append_entry(kb: &KnowledgeBase, entry: KbEntry) -> Result<KnowledgeBase> {
    kb.append(entry)
}

impl KnowledgeBase {
    pub fn from_parsed(parsed: ParsedQuestions) -> Self {
        let raw_count = parsed.raw_count();
        let mut kb = KnowledgeBase {
            diagnostics: parsed.malformed,
            ..Default::default()
        };
        for (line, raw) in parsed.rows {
            match clean_entry(&raw) {
                Err(why) => kb.diagnostics.push(Diagnostic {
                    line,
                    query_id: Some(raw.query_id.clone()).filter(|s| !s.is_empty()),
                    reason: why.to_string(),
                }),
                Ok(entry) if kb.entries.contains_key(&entry.query_id) => {
                    kb.diagnostics.push(Diagnostic {
                        line,
                        query_id: Some(entry.query_id.clone()),
                        reason: "duplicate query id; first occurrence kept".into(),
                    })
                }
                Ok(entry) => {
                    kb.entries.insert(entry.query_id.clone(), entry);
                }
            }
        }
        kb.diagnostics.sort_by_key(|d| d.line);
        kb.stats = KbStats {
            raw_count,
            cleaned_count: kb.entries.len(),
            dropped_count: raw_count - kb.entries.len(),
        };
        kb
    }

    /// Build directly from entries, applying the same cleaning and dedup rules.
    pub fn from_entries(entries: impl IntoIterator<Item = KbEntry>) -> Self {
        Self::from_parsed(ParsedQuestions {
            rows: entries.into_iter().enumerate().map(|(i, e)| (i + 1, e)).collect(),
            malformed: Vec::new(),
        })
    }

    /// Attach thread rows; posts are ordered by `post_index`, ties in row order.
    pub fn attach_threads(&mut self, rows: Vec<ThreadRow>) {
        let mut grouped: BTreeMap<String, Vec<ThreadRow>> = BTreeMap::new();
        for row in rows {
            let id = clean_text(&row.query_id);
            if !self.entries.contains_key(&id) {
                self.diagnostics.push(Diagnostic {
                    line: row.line,
                    query_id: Some(id),
                    reason: "thread row for unknown query id".into(),
                });
                continue;
            }
            grouped.entry(id).or_default().push(row);
        }
        for (id, mut rows) in grouped {
            rows.sort_by_key(|r| r.post_index);
            let posts = rows.into_iter().map(|r| r.post).collect();
            self.threads.insert(id.clone(), AnswerThread { query_id: id, posts });
        }
    }

    /// A new snapshot containing `entry`. The receiver is left untouched.
    pub fn append(&self, entry: KbEntry) -> Result<KnowledgeBase> {
        let entry = clean_entry(&entry)
            .map_err(|why| Error::Schema(format!("entry rejected: {why}")))?;
        if self.entries.contains_key(&entry.query_id) {
            return Err(Error::Conflict(entry.query_id));
        }
        let mut next = self.clone();
        next.entries.insert(entry.query_id.clone(), entry);
        next.stats.raw_count += 1;
        next.stats.cleaned_count += 1;
        Ok(next)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, query_id: &str) -> Option<&KbEntry> {
        self.entries.get(query_id)
    }

    pub fn contains(&self, query_id: &str) -> bool {
        self.entries.contains_key(query_id)
    }

    /// Entries in ascending query-id order.
    pub fn entries(&self) -> impl ExactSizeIterator<Item = &KbEntry> {
        self.entries.values()
    }

    pub fn threads(&self) -> impl Iterator<Item = &AnswerThread> {
        self.threads.values()
    }

    /// `Ok(None)` for a known question nobody answered; `NotFound` for an unknown id.
    pub fn thread(&self, query_id: &str) -> Result<Option<&AnswerThread>> {
        if !self.entries.contains_key(query_id) {
            return Err(Error::NotFound(query_id.to_string()));
        }
        Ok(self.threads.get(query_id))
    }

    pub fn has_thread(&self, query_id: &str) -> bool {
        self.threads.contains_key(query_id)
    }

    pub fn stats(&self) -> KbStats {
        self.stats
    }

    pub fn diagnostics(&self) -> &[Diagnostic] {
        &self.diagnostics
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("knowledge base serializes")
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        crate::index_store::write_atomic(path, |w| w.write_all(self.to_json().as_bytes()))
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let kb: KnowledgeBase = serde_json::from_str(&text).map_err(|e| Error::Format {
            path: path.into(),
            line: e.line(),
            message: e.to_string(),
        })?;
        kb.check_invariants()
            .map_err(|m| Error::Consistency(format!("{}: {m}", path.display())))?;
        Ok(kb)
    }

    /// Checks the structural invariants; returns the first violation found.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        if self.stats.cleaned_count + self.stats.dropped_count != self.stats.raw_count {
            return Err(format!("stats do not add up: {:?}", self.stats));
        }
        if self.stats.cleaned_count != self.entries.len() {
            return Err(format!(
                "cleaned_count {} but {} entries",
                self.stats.cleaned_count,
                self.entries.len()
            ));
        }
        for (id, e) in &self.entries {
            if id != &e.query_id || id.is_empty() {
                return Err(format!("entry keyed {id:?} has id {:?}", e.query_id));
            }
            if e.title.is_empty() && e.content.is_empty() {
                return Err(format!("entry {id:?} has no text"));
            }
        }
        for (id, t) in &self.threads {
            if !self.entries.contains_key(id) || t.posts.is_empty() {
                return Err(format!("thread {id:?} is orphaned or empty"));
            }
        }
        Ok(())
    }

    /// Write the cleaned entries back out as a questions export.
    pub fn write_questions_tsv(&self, mut w: impl std::io::Write) -> std::io::Result<()> {
        writeln!(w, "{}", QUESTION_COLUMNS.join("\t"))?;
        for e in self.entries.values() {
            let tags = e.tags.iter().cloned().collect::<Vec<_>>().join(",");
            let asked = e.asked_at.map(|t| t.to_string()).unwrap_or_default();
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}",
                escape_field(&e.query_id),
                escape_field(&e.title),
                escape_field(&e.content),
                escape_field(&tags),
                asked
            )?;
        }
        Ok(())
    }
}
