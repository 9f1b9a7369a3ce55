//! Rank the sample archive against a new question and print the breakdown
//! of each match.
//!
//! ```text
//! cargo run --example query_fixture -- "blender problem" "blender stops responding with xbee"
//! ```

use std::path::PathBuf;

use forumqa::service::ServiceConfig;
use forumqa::prelude::*;

fn main() -> forumqa::Result<()> {
    let mut args = std::env::args().skip(1);
    let title = args.next().unwrap_or_else(|| "blender problem".into());
    let content = args.next().unwrap_or_else(|| "blender stops responding when we move the robot with xbee".into());

    let fixtures = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let config = ServiceConfig {
        questions: Some(fixtures.join("questions.tsv")),
        threads: Some(fixtures.join("threads.tsv")),
        ..ServiceConfig::default()
    };
    let (provider, snapshot) = config.open(false)?;

    for threshold in [0.70, 0.40] {
        let query = Query::new(title.as_str(), content.as_str()).threshold(threshold);
        let matches = rank(&snapshot, provider.as_ref(), &query, &Weights::default())?;
        println!("threshold {threshold:.2}: {} match(es)", matches.len());
        for m in &matches {
            let b = m.breakdown;
            println!(
                "  #{} {:<10} n={:.3} t={:.3} h={:.3} c={:.3} thread={}  {}",
                m.rank, m.query_id, b.n_sim, b.t_sim, b.h_sim, b.c_sim, m.thread_available, m.title
            );
        }
    }

    let top = rank(&snapshot, provider.as_ref(), &Query::new(title, content).threshold(0.0), &Weights::default())?;
    if let Some(thread) = get_thread(snapshot.kb(), &top[0].query_id)? {
        println!("answer thread for {}:", thread.query_id);
        for p in &thread.posts {
            println!("  [{:?}] {}", p.author_role, p.body);
        }
    }
    Ok(())
}
