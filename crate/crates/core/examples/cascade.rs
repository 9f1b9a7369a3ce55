//! Compare full ranking with the two-stage cascade (Jaccard prefilter, then
//! semantic scoring) on a synthetic archive.

use std::time::Instant;

use forumqa::prelude::*;
use forumqa::retrieval::{cascade_rank, prefilter};
use forumqa::synthetic::SyntheticCorpus;

fn main() -> forumqa::Result<()> {
    let mut gen = SyntheticCorpus::new(11, 400);
    let kb = gen.knowledge_base(5_000);
    let provider = HashEmbedder::new(256)?;
    let index = build_index(&kb, &provider)?;
    let snapshot = Snapshot::new(kb.into(), index.into())?;

    let target = snapshot.kb().entries().nth(1234).unwrap().clone();
    let (title, content) = gen.paraphrase(&target, 0.3);
    println!("looking for {} ({})", target.query_id, target.title);
    let query = Query::new(title, content).threshold(0.3);
    let weights = Weights::default();

    let t = Instant::now();
    let full = rank_all(&snapshot, &provider, &query, &weights)?;
    println!("full ranking   {:>8.2?}  {:?}", t.elapsed(), ids(&full));

    for m in [10, 50, 500, snapshot.len()] {
        let t = Instant::now();
        let out = cascade_rank(&snapshot, &provider, &query, &weights, m)?;
        println!("cascade M={m:<5} {:>8.2?}  {:?}", t.elapsed(), ids(&out));
    }

    let survivors = prefilter(&snapshot, &provider, &query, 5)?;
    println!("stage-one survivors at M=5: {survivors:?}");
    Ok(())
}

fn ids(v: &[RankedMatch]) -> Vec<&str> {
    v.iter().map(|m| m.query_id.as_str()).collect()
}
