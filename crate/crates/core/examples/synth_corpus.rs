//! Generate a synthetic corpus and look at its structure.
//!
//! ```text
//! cargo run --example synth_corpus -- [out_dir]
//! ```

use mrnel::corpus::{gen_synthetic, save_corpus, SynthSpec};

fn main() -> mrnel::Result<()> {
    let spec = SynthSpec { num_docs: 20, ..SynthSpec::default() };
    let data = gen_synthetic(&spec)?;
    let (train, dev, test) = data.splits();
    println!(
        "{} docs, {} mentions ({} with gold among candidates), {} words, {} entities, {} surfaces",
        data.corpus.len(),
        data.corpus.mention_count(),
        data.corpus.scored_mentions(),
        data.words.len(),
        data.entities.len(),
        data.priors.len()
    );
    println!("split: train {} / dev {} / test {} documents", train.len(), dev.len(), test.len());

    let doc = &data.corpus.documents[0];
    println!("\n{}:", doc.doc_id);
    for m in &doc.mentions {
        let lo = m.start.saturating_sub(3);
        let hi = (m.end + 2).min(doc.tokens.len());
        let cands: Vec<String> = m.candidates.iter().map(|c| format!("{}:{:.2}", c.entity, c.prior)).collect();
        println!(
            "  [{}] gold {}  ...{}...  candidates {}",
            m.surface,
            m.gold.as_deref().unwrap_or("-"),
            doc.tokens[lo..hi].join(" "),
            cands.join(" ")
        );
    }

    if let Some(dir) = std::env::args().nth(1) {
        let dir = std::path::Path::new(&dir);
        std::fs::create_dir_all(dir).map_err(|e| mrnel::Error::io(dir, e))?;
        save_corpus(&data.corpus, dir.join("corpus.jsonl"))?;
        data.words.save_text(dir.join("words.txt"))?;
        data.entities.save_text(dir.join("entities.txt"))?;
        data.priors.save(dir.join("priors.tsv"))?;
        println!("\nwrote corpus, embeddings and priors to {}", dir.display());
    }
    Ok(())
}
