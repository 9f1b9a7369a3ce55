//! Word-level embeddings: per-word vectors from a text file, mean-pooled,
//! with out-of-vocabulary words skipped.

use std::io::Write;

use forumqa::embeddings::{embed_text, Field, WordVectorProvider};
use forumqa::simcore::cosine_similarity;

fn main() -> forumqa::Result<()> {
    let mut file = tempfile::NamedTempFile::new().expect("temp file");
    writeln!(
        file,
        "6 3\nmotor 0.9 0.1 0.0\ndriver 0.8 0.2 0.1\nheats 0.1 0.9 0.2\nhot 0.2 0.8 0.3\nxbee 0.0 0.1 0.9\nradio 0.1 0.2 0.8"
    )
    .expect("write vectors");

    let provider = WordVectorProvider::load(file.path())?;
    for word in ["motor", "l298"] {
        println!("{word:>6}: oov={}", provider.is_oov(word));
    }

    let a = embed_text(&provider, "motor driver heats", Field::Title)?;
    let b = embed_text(&provider, "driver gets hot", Field::Title)?;
    let c = embed_text(&provider, "xbee radio pairing", Field::Title)?;
    let none = embed_text(&provider, "completely unknown words", Field::Title)?;
    println!("motor/driver vs driver/hot: {:.3}", cosine_similarity(&a, &b)?);
    println!("motor/driver vs xbee/radio: {:.3}", cosine_similarity(&a, &c)?);
    println!("all-oov text is zero: {}", none.is_zero());
    Ok(())
}
