//! Query turn-around time on a generated archive, reported as
//! minimum / average / maximum seconds.
//!
//! ```text
//! cargo run --release --example bench_tart -- 10000
//! ```

use forumqa::cli::bench_queries;
use forumqa::prelude::*;
use forumqa::synthetic::SyntheticCorpus;

fn main() -> forumqa::Result<()> {
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(10_000);
    let mut gen = SyntheticCorpus::new(42, 2_000);
    let kb = gen.knowledge_base(n);
    let provider = HashEmbedder::new(256)?;
    let index = build_index(&kb, &provider)?;
    let snapshot = Snapshot::new(kb.into(), index.into())?;

    let queries: Vec<Query> = bench_queries(&mut gen, snapshot.kb(), 100, 42)
        .into_iter()
        .map(|(t, c)| Query::new(t, c))
        .collect();
    for (label, q) in [("full", queries.clone()), ("cascade M=50", queries.into_iter().map(|q| q.cascade(50)).collect())] {
        let report = bench_tart(&snapshot, &provider, &q, 1, &Weights::default())?;
        println!("{label} over {n} entries\n{report}\n");
    }
    Ok(())
}
