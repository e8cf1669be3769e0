//! What the relations attend to after training: the strongest weights of one
//! test document and a histogram of high weights per relation.
//!
//! ```text
//! cargo run --release --example inspect_alpha -- [epochs]
//! ```

use mrnel::corpus::{gen_synthetic, Corpus, SynthSpec};
use mrnel::evaluation::{alpha_histogram, alpha_tsv, HISTOGRAM_FLOOR, HISTOGRAM_WIDTH};
use mrnel::params::{init_params, ModelConfig};
use mrnel::training::{fit, TrainConfig};

fn main() -> mrnel::Result<()> {
    let epochs = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(120);
    let spec = SynthSpec::default();
    let data = gen_synthetic(&spec)?;
    let (train, dev, test) = data.splits();
    let model = ModelConfig { dim: spec.dim, ..ModelConfig::default() };
    let params = init_params(&model, 1, data.words.clone(), data.entities.clone())?;
    let cfg = TrainConfig { lr_initial: 1e-3, lr_reduced: 1e-4, dev_f1_switch: Some(1.0), max_epochs: epochs, ..TrainConfig::default() };
    let params = fit(params, &train, &dev, &cfg)?.params;

    let doc = Corpus::new(vec![test.documents[0].clone()]);
    let d = &doc.documents[0];
    println!("{}: mentions and their left and right neighbours", d.doc_id);
    for (i, m) in d.mentions.iter().enumerate() {
        let left = d.tokens.get(m.start.wrapping_sub(1)).map_or("", String::as_str);
        let right = d.tokens.get(m.end).map_or("", String::as_str);
        println!("  {i}: {left} [{}] {right}  gold {}", m.surface, m.gold.as_deref().unwrap_or("-"));
    }
    let tsv = alpha_tsv(&params, &doc)?;
    let mut rows: Vec<Vec<&str>> = tsv.lines().skip(1).map(|l| l.split('\t').collect()).collect();
    rows.sort_by(|a, b| b[4].parse::<f64>().unwrap().total_cmp(&a[4].parse::<f64>().unwrap()));
    println!("strongest weights (i, j, relation, alpha):");
    for r in rows.iter().take(10) {
        println!("  {} -> {:<3} k={} {:.3}", r[1], r[2], r[3], r[4].parse::<f64>().unwrap());
    }

    println!("high weights per relation over the test split:");
    for (k, row) in alpha_histogram(&params, &test)?.iter().enumerate() {
        let cells: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(b, c)| format!("{:.2}:{c}", HISTOGRAM_FLOOR + b as f64 * HISTOGRAM_WIDTH))
            .collect();
        println!("  k={k}  {}", cells.join(" "));
    }
    Ok(())
}
