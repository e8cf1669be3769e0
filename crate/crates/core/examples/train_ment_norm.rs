//! Train a ment-norm model on a generated corpus and compare it with the
//! prior-only baseline.
//!
//! ```text
//! cargo run --release --example train_ment_norm -- [relations] [epochs] [seed]
//! ```

use mrnel::corpus::{gen_synthetic, SynthSpec};
use mrnel::evaluation::{evaluate, EvalMode};
use mrnel::params::{init_params, Mode, ModelConfig};
use mrnel::training::{fit_with, TrainConfig};

fn main() -> mrnel::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize, default: u64| args.get(i).and_then(|a| a.parse().ok()).unwrap_or(default);
    let (relations, epochs, seed) = (arg(0, 3) as usize, arg(1, 10) as usize, arg(2, 1));

    let spec = SynthSpec::default();
    let data = gen_synthetic(&spec)?;
    let (train, dev, test) = data.splits();

    let model = ModelConfig { dim: spec.dim, relations, mode: Mode::MentNorm, ..ModelConfig::default() };
    let cfg = TrainConfig { max_epochs: epochs, seed, ..TrainConfig::default() };
    let params = init_params(&model, seed, data.words.clone(), data.entities.clone())?;

    let fitted = fit_with(params, &train, &dev, &cfg, |e| {
        println!("epoch {:>3}  loss {:>10.4}  dev F1 {:.4}  lr {:e}  {:.1}s", e.epoch, e.loss, e.dev_f1, e.lr, e.seconds)
    })?;

    let prior = evaluate(&fitted.params, &test, EvalMode::PriorOnly)?;
    let lbp = evaluate(&fitted.params, &test, EvalMode::lbp())?;
    let f1 = |r: &mrnel::evaluation::EvalReport| r.micro_f1.unwrap_or(0.0);
    println!("test F1: prior-only {:.4}, model {:.4} (best epoch {})", f1(&prior), f1(&lbp), fitted.best_epoch);
    Ok(())
}
