use std::collections::HashMap;
use std::io::{BufRead, BufReader};
use std::path::Path;

use super::{EmbeddingProvider, Granularity};
use crate::error::{Error, Result};
use crate::textnorm::tokenize;

/// Component-wise mean of equal-length word vectors. Empty input gives an
/// empty vector; callers size the zero vector themselves.
pub fn pool_word_vectors(word_vectors: &[&[f64]]) -> Result<Vec<f64>> {
    let Some(first) = word_vectors.first() else {
        return Ok(Vec::new());
    };
    let dim = first.len();
    let mut sum = vec![0.0; dim];
    for (i, v) in word_vectors.iter().enumerate() {
        if v.len() != dim {
            return Err(Error::Schema(format!(
                "word vector {i} has dim {}, expected {dim}",
                v.len()
            )));
        }
        sum.iter_mut().zip(v.iter()).for_each(|(s, x)| *s += x);
    }
    let n = word_vectors.len() as f64;
    sum.iter_mut().for_each(|s| *s /= n);
    Ok(sum)
}

/// Word-level embeddings: each in-vocabulary token looks up its vector and the
/// sentence vector is their mean. Out-of-vocabulary tokens are skipped.
#[derive(Debug, Clone)]
pub struct WordVectorProvider {
    id: String,
    dim: usize,
    table: HashMap<String, Vec<f64>>,
}

impl WordVectorProvider {
    pub fn from_table(id: impl Into<String>, table: HashMap<String, Vec<f64>>) -> Result<Self> {
        let dim = table
            .values()
            .next()
            .map(Vec::len)
            .ok_or_else(|| Error::Schema("word vector table is empty".into()))?;
        if dim == 0 {
            return Err(Error::Schema("word vectors must have dim >= 1".into()));
        }
        if let Some((w, v)) = table.iter().find(|(_, v)| v.len() != dim) {
            return Err(Error::Schema(format!(
                "word {w:?} has dim {}, expected {dim}",
                v.len()
            )));
        }
        let table = table
            .into_iter()
            .map(|(w, v)| (w.to_lowercase(), v))
            .collect();
        Ok(Self {
            id: id.into(),
            dim,
            table,
        })
    }

    /// Reads the plain-text word-vector format: one `word v1 v2 ... vN` per
    /// line, with an optional leading `count dim` line.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut table = HashMap::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let mut parts = line.split_whitespace();
            let Some(word) = parts.next() else { continue };
            let values: std::result::Result<Vec<f64>, _> = parts.map(str::parse).collect();
            let values = values.map_err(|e| Error::Format {
                path: path.into(),
                line: n + 1,
                message: format!("bad component: {e}"),
            })?;
            if n == 0 && values.len() == 1 && word.parse::<usize>().is_ok() {
                continue;
            }
            table.insert(word.to_string(), values);
        }
        let id = format!(
            "word:{}",
            path.file_stem().and_then(|s| s.to_str()).unwrap_or("vectors")
        );
        Self::from_table(id, table)
    }

    pub fn is_oov(&self, token: &str) -> bool {
        !self.table.contains_key(token)
    }

    fn embed_one(&self, text: &str) -> Result<Vec<f64>> {
        let tokens = tokenize(text);
        let known: Vec<&[f64]> = tokens
            .iter()
            .filter_map(|t| self.table.get(t).map(Vec::as_slice))
            .collect();
        if known.is_empty() {
            return Ok(vec![0.0; self.dim]);
        }
        pool_word_vectors(&known)
    }
}

impl EmbeddingProvider for WordVectorProvider {
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
        texts.iter().map(|t| self.embed_one(t)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    #[test]
    fn pool_examples() {
        let v = [0.25, -3.0, 8.0];
        assert_eq!(pool_word_vectors(&[&v]).unwrap(), v);
        assert_eq!(pool_word_vectors(&[&v, &v]).unwrap(), v);
        assert_eq!(
            pool_word_vectors(&[&[1.0, 0.0], &[0.0, 1.0]]).unwrap(),
            [0.5, 0.5]
        );
        assert!(pool_word_vectors(&[]).unwrap().is_empty());
    }

    #[test]
    fn pool_mixed_dims_is_schema_error() {
        let err = pool_word_vectors(&[&[1.0, 0.0], &[1.0]]).unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
    }

    #[test]
    fn oov_words_are_skipped() {
        let table = HashMap::from([
            ("bank".to_string(), vec![1.0, 0.0, 0.0]),
            ("river".to_string(), vec![0.0, 1.0, 0.0]),
        ]);
        let p = WordVectorProvider::from_table("word:test", table).unwrap();
        let out = p.embed_batch(&["river bank zzz", "qqq", ""]).unwrap();
        assert_eq!(out[0], [0.5, 0.5, 0.0]);
        assert_eq!(out[1], [0.0; 3]);
        assert_eq!(out[2], [0.0; 3]);
        assert!(p.is_oov("zzz"));
    }

    #[test]
    fn loads_text_format_with_header() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "2 3").unwrap();
        writeln!(f, "robot 1 2 3").unwrap();
        writeln!(f, "xbee 0.5 0.5 0.5").unwrap();
        let p = WordVectorProvider::load(f.path()).unwrap();
        assert_eq!(p.dim(), 3);
        assert_eq!(p.embed_batch(&["Robot"]).unwrap()[0], [1.0, 2.0, 3.0]);
    }

    proptest! {
        #[test]
        fn pool_stays_inside_envelope(
            rows in prop::collection::vec(prop::collection::vec(-1e6f64..1e6, 4), 1..10)
        ) {
            let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
            let pooled = pool_word_vectors(&refs).unwrap();
            for (j, x) in pooled.iter().enumerate() {
                let lo = rows.iter().map(|r| r[j]).fold(f64::INFINITY, f64::min);
                let hi = rows.iter().map(|r| r[j]).fold(f64::NEG_INFINITY, f64::max);
                let slack = 1e-9 * hi.abs().max(lo.abs()).max(1.0);
                prop_assert!(*x >= lo - slack && *x <= hi + slack);
            }
        }
    }
}
