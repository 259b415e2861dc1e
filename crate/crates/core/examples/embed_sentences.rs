//! Mean word-vector sentence embeddings and the padded history matrix.

use chatdqn::embeddings::{embed_history, embed_text, parse_embeddings};

fn main() -> chatdqn::Result<()> {
    let table = parse_embeddings("i 1 0 0\nlike 0 1 0\njazz 0 0 1\ndo 1 1 0\nyou 0 1 1\n", 3)?;
    for s in ["i like jazz .", "do you like jazz ?", "unknown words only"] {
        let v = embed_text(s, &table);
        println!("{s:<22} words={} vec={:?}", v.word_count, v.values);
    }
    let history = ["do you like jazz ?", "i like jazz ."];
    let m = embed_history(&history, &table, 4)?;
    println!("history rows filled {} of {}", m.filled(), m.max_len());
    for (i, r) in m.rows().enumerate() {
        println!("  row {i}: {r:?}");
    }
    Ok(())
}
