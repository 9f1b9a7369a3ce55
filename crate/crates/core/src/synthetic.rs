//! Seeded synthetic forum corpora for benchmarks and tests.

use std::collections::HashSet;
use std::io::Write;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::kb::{escape_field, KbEntry, KnowledgeBase, QUESTION_COLUMNS, THREAD_COLUMNS};

const DOMAIN_WORDS: &[&str] = &[
    "robot", "motor", "driver", "sensor", "xbee", "blender", "arduino", "atmega", "firmware",
    "compile", "error", "division", "zero", "video", "portal", "camera", "marker", "colour",
    "contour", "moments", "python", "opencv", "servo", "battery", "voltage", "encoder", "pwm",
    "uart", "serial", "port", "timer", "interrupt", "line", "follower", "arena", "node", "task",
    "theme", "upload", "submission", "deadline", "ros", "gazebo", "simulation", "path", "planning",
];

const SYLLABLES: &[&str] = &[
    "ka", "lo", "mi", "ne", "ru", "ta", "vo", "shi", "pe", "da", "gu", "zo", "ri", "bel", "tor",
    "an", "ex", "qui", "mor", "len",
];

const THEMES: &[&str] = &[
    "transporter_bot", "planter_bot", "hazardous_waste", "spotter_snake", "thirsty_crow",
    "cross_a_crater", "feed_the_fish",
];

/// Deterministic corpus generator.
pub struct SyntheticCorpus {
    rng: ChaCha8Rng,
    vocab: Vec<String>,
    seen: HashSet<(String, String)>,
    next_id: u64,
}

impl SyntheticCorpus {
    /// A vocabulary of the domain words plus `extra_vocab` made-up words.
    pub fn new(seed: u64, extra_vocab: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut vocab: Vec<String> = DOMAIN_WORDS.iter().map(|s| s.to_string()).collect();
        let mut have: HashSet<String> = vocab.iter().cloned().collect();
        while vocab.len() < DOMAIN_WORDS.len() + extra_vocab {
            let n = rng.random_range(2..=4);
            let w: String = (0..n).map(|_| *SYLLABLES.choose(&mut rng).unwrap()).collect();
            if have.insert(w.clone()) {
                vocab.push(w);
            }
        }
        Self {
            rng,
            vocab,
            seen: HashSet::new(),
            next_id: 0,
        }
    }

    fn words(&mut self, lo: usize, hi: usize) -> String {
        let n = self.rng.random_range(lo..=hi);
        (0..n)
            .map(|_| self.vocab.choose(&mut self.rng).unwrap().as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }

    fn id(&mut self) -> String {
        self.next_id += 1;
        // forum-style 8 char ids, unique by construction
        format!("s{:07x}", self.next_id)
    }

    /// A fresh question whose (title, content) text differs from every
    /// previously generated one. Titles have an odd number of words so the
    /// signed hash embedding of a title can never cancel to zero.
    pub fn entry(&mut self) -> KbEntry {
        loop {
            let n_title = 3 + 2 * self.rng.random_range(0..3);
            let title = self.words(n_title, n_title);
            let content = self.words(12, 40);
            if self.seen.insert((title.clone(), content.clone())) {
                let id = self.id();
                let tag = *THEMES.choose(&mut self.rng).unwrap();
                let mut e = KbEntry::new(id, title, content).with_tags([tag]);
                e.asked_at = Some(1_451_606_400 + self.rng.random_range(0..94_608_000));
                return e;
            }
        }
    }

    pub fn entries(&mut self, n: usize) -> Vec<KbEntry> {
        (0..n).map(|_| self.entry()).collect()
    }

    pub fn knowledge_base(&mut self, n: usize) -> KnowledgeBase {
        KnowledgeBase::from_entries(self.entries(n))
    }

    /// A new question unrelated to anything archived.
    pub fn fresh_question(&mut self) -> (String, String) {
        (self.words(3, 7), self.words(12, 40))
    }

    /// `entry` with roughly `noise` of its words replaced.
    pub fn paraphrase(&mut self, entry: &KbEntry, noise: f64) -> (String, String) {
        let mut perturb = |text: &str| -> String {
            text.split(' ')
                .map(|w| {
                    if self.rng.random_bool(noise.clamp(0.0, 1.0)) {
                        self.vocab.choose(&mut self.rng).unwrap().clone()
                    } else {
                        w.to_string()
                    }
                })
                .collect::<Vec<_>>()
                .join(" ")
        };
        (perturb(&entry.title), perturb(&entry.content))
    }

    /// Write a questions export of `n` data rows. A fraction `dirty` of rows
    /// is made unusable (empty text, repeated id, or a wrong field count) and
    /// some clean rows get markup and ragged whitespace. Returns the number
    /// of rows that should survive cleaning.
    pub fn write_questions_tsv(&mut self, mut w: impl Write, n: usize, dirty: f64) -> std::io::Result<usize> {
        writeln!(w, "{}", QUESTION_COLUMNS.join("\t"))?;
        let mut written_ids: Vec<String> = Vec::new();
        let mut kept = 0;
        for _ in 0..n {
            let e = self.entry();
            let tags = e.tags.iter().cloned().collect::<Vec<_>>().join(";");
            let asked = e.asked_at.unwrap_or_default();
            if self.rng.random_bool(dirty.clamp(0.0, 1.0)) {
                match self.rng.random_range(0..3) {
                    0 => writeln!(w, "{}\t  \t<p></p>\t{}\t{}", e.query_id, tags, asked)?,
                    1 if !written_ids.is_empty() => {
                        let dup = written_ids.choose(&mut self.rng).unwrap().clone();
                        writeln!(w, "{}\t{}\t{}\t{}\t{}", dup, e.title, e.content, tags, asked)?
                    }
                    _ => writeln!(w, "{}\t{}\t{}", e.query_id, e.title, e.content)?,
                }
                continue;
            }
            let content = if self.rng.random_bool(0.2) {
                format!("<p>{}</p>\\n  ", e.content.replace(' ', "   "))
            } else {
                e.content.clone()
            };
            writeln!(
                w,
                "{}\t  {}\t{}\t{}\t{}",
                e.query_id,
                escape_field(&e.title),
                content,
                tags,
                asked
            )?;
            written_ids.push(e.query_id);
            kept += 1;
        }
        Ok(kept)
    }

    /// Threads export with 1–4 posts for roughly half of `kb`'s entries.
    pub fn write_threads_tsv(&mut self, kb: &KnowledgeBase, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "{}", THREAD_COLUMNS.join("\t"))?;
        let ids: Vec<String> = kb.entries().map(|e| e.query_id.clone()).collect();
        for id in ids {
            if !self.rng.random_bool(0.5) {
                continue;
            }
            let posts = self.rng.random_range(1..=4);
            for i in 0..posts {
                let role = if i % 2 == 0 { "staff" } else { "student" };
                let body = self.words(5, 20);
                writeln!(w, "{id}\t{i}\t{role}\t{body}")?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textnorm::tokenize;

    #[test]
    fn deterministic_per_seed() {
        let a = SyntheticCorpus::new(3, 100).entries(20);
        let b = SyntheticCorpus::new(3, 100).entries(20);
        let c = SyntheticCorpus::new(4, 100).entries(20);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn entries_are_distinct_with_odd_titles() {
        let es = SyntheticCorpus::new(1, 50).entries(500);
        let distinct: HashSet<_> = es.iter().map(|e| (&e.title, &e.content)).collect();
        assert_eq!(distinct.len(), 500);
        assert!(es.iter().all(|e| tokenize(&e.title).len() % 2 == 1));
    }

    #[test]
    fn tsv_export_parses_to_expected_count() {
        let mut buf = Vec::new();
        let kept = SyntheticCorpus::new(9, 200).write_questions_tsv(&mut buf, 300, 0.1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.tsv");
        std::fs::write(&path, buf).unwrap();
        let kb = crate::kb::build_knowledge_base(&path, None).unwrap();
        assert_eq!(kb.stats().raw_count, 300);
        assert_eq!(kb.stats().cleaned_count, kept);
    }
}
