//! Round-trip a word embedding table and tokenize text with an exported
//! merges file when one is available.
//!
//! cargo run --example token_table -- [merges.txt[.gz]]

use peace::backend::mock::{MockBackend, MockConfig};
use peace::backend::table::EmbeddingTable;
use peace::backend::tokenizer::BpeTokenizer;
use peace::backend::InferenceBackend;
use peace::embedding::cosine_similarity;

fn main() -> peace::Result<()> {
    let backend = MockBackend::new(MockConfig::with_seed(6));
    let words: Vec<String> = ["grass", "road", "water", "sunny"]
        .iter()
        .map(|w| w.to_string())
        .collect();
    let rows = words
        .iter()
        .map(|w| backend.embed_text(w).map(|e| e.values().to_vec()))
        .collect::<peace::Result<Vec<_>>>()?;
    let table = EmbeddingTable::new(rows[0].len(), words, rows)?;
    let bytes = table.to_bytes();
    let back = EmbeddingTable::from_bytes(&bytes)?;
    println!(
        "table: {} words x {} dims, {} bytes",
        back.words.len(),
        back.dim,
        bytes.len()
    );
    let lookup = back.lookup();
    println!(
        "cos(grass, road) = {:.4}",
        cosine_similarity(&lookup["grass"], &lookup["road"])?
    );

    if let Some(path) = std::env::args().nth(1) {
        let tok = BpeTokenizer::from_file(&path)?;
        let t = tok.tokenize("A photo of grass in shade.");
        println!(
            "vocab {} entries; ids {:?}",
            tok.vocab_size(),
            &t.ids[..=t.eot_index]
        );
    }
    Ok(())
}
