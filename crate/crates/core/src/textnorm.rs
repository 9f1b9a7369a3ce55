//! Tokenization and token sets.
//!
//! A token is a maximal run of Unicode alphanumeric characters, lowercased.
//! Everything else separates tokens. Stopword removal and suffix stripping
//! exist but are off unless a [`Tokenizer`] is configured otherwise.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

/// Which part of a question a token set was drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceField {
    Title,
    Content,
    TitleContent,
}

impl std::str::FromStr for SourceField {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "title" => Ok(SourceField::Title),
            "content" => Ok(SourceField::Content),
            "title+content" | "title_content" | "combined" => Ok(SourceField::TitleContent),
            other => Err(format!("unknown field {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSet {
    pub tokens: BTreeSet<String>,
    pub source_field: SourceField,
}

impl TokenSet {
    pub fn new(tokens: impl IntoIterator<Item = String>, source_field: SourceField) -> Self {
        Self {
            tokens: tokens.into_iter().filter(|t| !t.is_empty()).collect(),
            source_field,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.tokens.contains(token)
    }

    /// Size of the intersection, by a merge over the two sorted sets.
    pub fn intersection_len(&self, other: &TokenSet) -> usize {
        let mut a = self.tokens.iter();
        let mut b = other.tokens.iter();
        let (mut x, mut y) = (a.next(), b.next());
        let mut n = 0;
        while let (Some(l), Some(r)) = (x, y) {
            match l.cmp(r) {
                std::cmp::Ordering::Less => x = a.next(),
                std::cmp::Ordering::Greater => y = b.next(),
                std::cmp::Ordering::Equal => {
                    n += 1;
                    x = a.next();
                    y = b.next();
                }
            }
        }
        n
    }
}

const STOPWORDS: &[&str] = &[
    "a", "about", "an", "and", "are", "as", "at", "be", "been", "but", "by", "can", "do", "does",
    "for", "from", "has", "have", "i", "if", "in", "is", "it", "its", "me", "my", "not", "of",
    "on", "or", "our", "so", "that", "the", "their", "there", "this", "to", "us", "was", "we",
    "were", "what", "when", "which", "with", "you", "your",
];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tokenizer {
    pub remove_stopwords: bool,
    /// Strip plural suffixes (`sses`→`ss`, `ies`→`i`, trailing `s`).
    pub stem: bool,
}

impl Tokenizer {
    pub fn tokenize(&self, text: &str) -> Vec<String> {
        text.split(|c: char| !c.is_alphanumeric())
            .filter(|frag| !frag.is_empty())
            .map(|frag| frag.chars().flat_map(char::to_lowercase).collect::<String>())
            .filter(|t| !(self.remove_stopwords && STOPWORDS.binary_search(&t.as_str()).is_ok()))
            .map(|t| if self.stem { strip_plural(t) } else { t })
            .filter(|t| !t.is_empty())
            .collect()
    }

    pub fn token_set(&self, text: &str, source_field: SourceField) -> TokenSet {
        TokenSet::new(self.tokenize(text), source_field)
    }
}

fn strip_plural(mut token: String) -> String {
    if token.ends_with("sses") || token.ends_with("ies") {
        token.truncate(token.len() - 2);
    } else if token.len() > 3 && token.ends_with('s') && !token.ends_with("ss") {
        token.pop();
    }
    token
}

/// Lowercased alphanumeric tokens of `text`, in order, with the default tokenizer.
pub fn tokenize(text: &str) -> Vec<String> {
    Tokenizer::default().tokenize(text)
}

/// Token set of `text` with the default tokenizer, tagged as combined title+content.
pub fn token_set(text: &str) -> TokenSet {
    Tokenizer::default().token_set(text, SourceField::TitleContent)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    // Character-class oracle: walk chars, emit a token on every class change.
    fn oracle_tokens(text: &str) -> Vec<String> {
        let mut out = Vec::new();
        let mut cur = String::new();
        for c in text.chars() {
            if c.is_alphanumeric() {
                cur.extend(c.to_lowercase());
            } else if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
        }
        if !cur.is_empty() {
            out.push(cur);
        }
        out
    }

    #[test]
    fn stopword_table_is_sorted() {
        assert!(STOPWORDS.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn basic_examples() {
        assert_eq!(tokenize("Float Division Error"), ["float", "division", "error"]);
        assert_eq!(
            tokenize("FLOAT DIVISION BY ZERO!!!"),
            ["float", "division", "by", "zero"]
        );
        assert!(tokenize("").is_empty());
        assert!(tokenize("?!... --- !!!").is_empty());
    }

    #[test]
    fn matches_char_class_oracle_on_fixture_text() {
        let corpus = [
            "Sir we are trying to find center of color marker using moments, but continuously we are getting this \"FLOAT DIVISION BY ZERO\" error",
            "we did not watch the demo video and now its not there in the portal . Please help!!!",
            "When we are trying to move robot through loc send by xbee in blender blender stops responding",
            "transporter_bot; planter_bot, x=3.5e-2 (über) naïve",
        ];
        for text in corpus {
            assert_eq!(tokenize(text), oracle_tokens(text), "{text}");
        }
    }

    #[test]
    fn token_set_dedups() {
        assert_eq!(token_set("bank of the bank").tokens, set(&["bank", "of", "the"]));
        assert_eq!(token_set("blender problem").tokens, set(&["blender", "problem"]));
    }

    #[test]
    fn unicode_letters_are_tokens() {
        assert_eq!(tokenize("Привет, мир"), ["привет", "мир"]);
        assert_eq!(tokenize("日本語 テスト"), ["日本語", "テスト"]);
    }

    #[test]
    fn optional_stopwords_and_stemming() {
        let t = Tokenizer {
            remove_stopwords: true,
            stem: true,
        };
        assert_eq!(t.tokenize("The motors of the robots"), ["motor", "robot"]);
        assert_eq!(t.tokenize("classes batteries bus"), ["class", "batteri", "bus"]);
        assert_eq!(tokenize("The motors"), ["the", "motors"]);
    }

    #[test]
    fn intersection_len_matches_btreeset() {
        let a = token_set("a b c d");
        let b = token_set("c d e");
        assert_eq!(a.intersection_len(&b), 2);
        assert_eq!(a.intersection_len(&token_set("")), 0);
    }

    proptest! {
        #[test]
        fn agrees_with_oracle(text in "\\PC{0,80}") {
            prop_assert_eq!(tokenize(&text), oracle_tokens(&text));
        }

        #[test]
        fn case_insensitive(text in "[a-zA-Z0-9éÉ ,.!?_-]{0,60}") {
            prop_assert_eq!(tokenize(&text.to_uppercase()), tokenize(&text));
        }

        #[test]
        fn set_is_subset_of_tokens(text in "\\PC{0,80}") {
            let list = tokenize(&text);
            let s = token_set(&text);
            prop_assert!(s.len() <= list.len());
            prop_assert!(s.tokens.iter().all(|t| list.contains(t) && !t.is_empty()));
        }

        #[test]
        fn union_of_concatenation(a in "\\PC{0,40}", b in "\\PC{0,40}") {
            let joined = token_set(&format!("{a} {b}")).tokens;
            let union: BTreeSet<String> =
                token_set(&a).tokens.union(&token_set(&b).tokens).cloned().collect();
            prop_assert_eq!(joined, union);
        }
    }
}
