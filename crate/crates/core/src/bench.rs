//! Turn-around response time (TART) measurement for the cached-index path.

use std::fmt;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::embeddings::EmbeddingProvider;
use crate::error::{Error, Result};
use crate::retrieval::{rank, Query, Snapshot};
use crate::simcore::Weights;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TartReport {
    pub query_count: usize,
    pub min_ms: f64,
    pub mean_ms: f64,
    pub max_ms: f64,
    pub per_query_ms: Vec<f64>,
}

impl TartReport {
    pub fn from_latencies(per_query_ms: Vec<f64>) -> Result<Self> {
        if per_query_ms.is_empty() {
            return Err(Error::Config("no latencies to summarize".into()));
        }
        let min_ms = per_query_ms.iter().copied().fold(f64::INFINITY, f64::min);
        let max_ms = per_query_ms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean_ms = (per_query_ms.iter().sum::<f64>() / per_query_ms.len() as f64).clamp(min_ms, max_ms);
        Ok(Self {
            query_count: per_query_ms.len(),
            min_ms,
            mean_ms,
            max_ms,
            per_query_ms,
        })
    }
}

fn human(ms: f64) -> String {
    if ms >= 1000.0 {
        format!("{:.2} (secs)", ms / 1000.0)
    } else {
        format!("{ms:.2} (ms)")
    }
}

impl fmt::Display for TartReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<16}| TART[Automation]", "Time Statistics")?;
        writeln!(f, "{:-<16}+{:-<20}", "", "")?;
        writeln!(f, "{:<16}| {}", "Minimum", human(self.min_ms))?;
        writeln!(f, "{:<16}| {}", "Average", human(self.mean_ms))?;
        writeln!(f, "{:<16}| {}", "Maximum", human(self.max_ms))?;
        write!(f, "({} timed queries)", self.query_count)
    }
}

/// Time each query `repetitions` times: embed the query, score the snapshot,
/// threshold and cut. Corpus vectors come from the snapshot's index.
pub fn bench_tart<P: EmbeddingProvider + ?Sized>(
    snapshot: &Snapshot,
    provider: &P,
    queries: &[Query],
    repetitions: usize,
    weights: &Weights,
) -> Result<TartReport> {
    if queries.is_empty() {
        return Err(Error::Config("bench needs at least one query".into()));
    }
    if repetitions == 0 {
        return Err(Error::Config("repetitions must be >= 1".into()));
    }
    let mut latencies = Vec::with_capacity(queries.len() * repetitions);
    for _ in 0..repetitions {
        for q in queries {
            let start = Instant::now();
            let matches = rank(snapshot, provider, q, weights)?;
            let elapsed = start.elapsed();
            std::hint::black_box(matches);
            latencies.push(elapsed.as_secs_f64() * 1000.0);
        }
    }
    TartReport::from_latencies(latencies)
}
