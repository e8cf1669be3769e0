//! Decoding modes side by side: priors, LBP, exact inference and the oracle
//! that reveals every other mention's gold entity.
//!
//! ```text
//! cargo run --release --example oracle_eval -- [epochs]
//! ```

use mrnel::corpus::{gen_synthetic, SynthSpec};
use mrnel::evaluation::{evaluate, EvalMode};
use mrnel::params::{init_params, ModelConfig};
use mrnel::training::{fit, TrainConfig};

fn main() -> mrnel::Result<()> {
    let epochs = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(30);
    let spec = SynthSpec { num_docs: 100, ..SynthSpec::default() };
    let data = gen_synthetic(&spec)?;
    let (train, dev, test) = data.splits();
    let model = ModelConfig { dim: spec.dim, ..ModelConfig::default() };
    let params = init_params(&model, 1, data.words.clone(), data.entities.clone())?;
    let cfg = TrainConfig { lr_initial: 1e-3, dev_f1_switch: Some(1.0), max_epochs: epochs, ..TrainConfig::default() };
    let params = fit(params, &train, &dev, &cfg)?.params;

    for mode in [EvalMode::PriorOnly, EvalMode::lbp(), EvalMode::Exact, EvalMode::oracle()] {
        let r = evaluate(&params, &test, mode)?;
        println!(
            "{:<10} F1 {:.4}  ({} of {} scored, {} unlinkable)",
            mode.tag(),
            r.micro_f1.unwrap_or(0.0),
            r.correct,
            r.scored,
            r.unlinkable_mentions
        );
    }
    Ok(())
}
