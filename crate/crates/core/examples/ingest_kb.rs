//! Clean a raw forum export into a knowledge base and save it as JSON.
//!
//! ```text
//! cargo run --example ingest_kb -- [questions.tsv] [threads.tsv]
//! ```

use std::path::PathBuf;

use forumqa::kb::build_knowledge_base;

fn main() -> forumqa::Result<()> {
    let fixtures = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let mut args = std::env::args().skip(1);
    let questions = args.next().map_or_else(|| fixtures.join("dirty_questions.tsv"), PathBuf::from);
    let threads = args.next().map_or_else(|| fixtures.join("threads.tsv"), PathBuf::from);

    let kb = build_knowledge_base(&questions, Some(&threads))?;
    let stats = kb.stats();
    println!(
        "raw {} / cleaned {} / dropped {}",
        stats.raw_count, stats.cleaned_count, stats.dropped_count
    );
    for d in kb.diagnostics() {
        println!("  {d}");
    }
    for e in kb.entries() {
        println!("{:<10} {}", e.query_id, e.title);
    }

    let out = std::env::temp_dir().join("forumqa-example-kb.json");
    kb.save_json(&out)?;
    println!("wrote {}", out.display());
    Ok(())
}
