//! Add a newly answered question to a live snapshot. Readers holding the
//! old snapshot are unaffected; the cell hands out the new one afterwards.

use forumqa::prelude::*;
use forumqa::retrieval::SnapshotCell;

fn main() -> forumqa::Result<()> {
    let provider = HashEmbedder::new(128)?;
    let kb = KnowledgeBase::from_entries([
        KbEntry::new("q1", "Cannot flash the firebird", "avrdude reports a sync error"),
        KbEntry::new("q2", "Line sensor readings noisy", "white line values jump around"),
    ]);
    let index = build_index(&kb, &provider)?;
    let cell = SnapshotCell::new(Some(Snapshot::new(kb.into(), index.into())?));

    let before = cell.load().unwrap();
    let entry = KbEntry::new("q3", "Motor driver overheats", "the l298 gets very hot after a minute").with_tags(["hardware"]);
    let next = before.with_appended(entry.clone(), &provider)?;
    cell.store(next);

    let after = cell.load().unwrap();
    println!("old snapshot: {} entries, new snapshot: {}", before.len(), after.len());
    let hits = rank(&after, &provider, &Query::from_entry(&entry), &Weights::default())?;
    println!("verbatim query -> rank 1 is {} (n_sim {:.3})", hits[0].query_id, hits[0].breakdown.n_sim);

    match before.with_appended(KbEntry::new("q1", "duplicate id", "x"), &provider) {
        Err(e) => println!("re-using an id is refused: {e}"),
        Ok(_) => unreachable!(),
    }
    Ok(())
}
