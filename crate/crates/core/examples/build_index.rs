//! Embed a knowledge base with the hashing embedder and cache the vectors.
//! A second load against the same KB is reported fresh; editing one entry
//! makes it stale.

use std::path::PathBuf;

use forumqa::embeddings::HashEmbedder;
use forumqa::index_store::{build_index, load_index_for, save_index};
use forumqa::kb::{build_knowledge_base, KbEntry};

fn main() -> forumqa::Result<()> {
    let fixtures = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let kb = build_knowledge_base(fixtures.join("questions.tsv"), None)?;
    let provider = HashEmbedder::new(256)?;

    let index = build_index(&kb, &provider)?;
    let path = std::env::temp_dir().join("forumqa-example.embidx");
    save_index(&index, &path)?;
    println!(
        "{} records, provider {}, dim {}, fingerprint {}",
        index.len(),
        index.provider_id(),
        index.dim(),
        &index.fingerprint()[..16]
    );

    let (_, freshness) = load_index_for(&path, &kb)?;
    println!("reloaded: {freshness:?}");

    let edited = kb.append(KbEntry::new("jzz00001", "Servo jitter at startup", "The servo twitches when powered"))?;
    let (_, freshness) = load_index_for(&path, &edited)?;
    println!("after adding a question: {freshness:?}");
    Ok(())
}
