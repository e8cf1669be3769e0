//! Training on the default synthetic corpus with the default settings.

use mrnel::corpus::{gen_synthetic, SynthSpec};
use mrnel::evaluation::{evaluate, EvalMode};
use mrnel::params::{init_params, Mode, ModelConfig};
use mrnel::training::{fit, TrainConfig};

#[test]
fn default_run_lowers_loss_and_beats_priors() {
    let spec = SynthSpec::default();
    let data = gen_synthetic(&spec).unwrap();
    let (train, dev, _) = data.splits();
    let model = ModelConfig { dim: spec.dim, relations: 3, mode: Mode::MentNorm, ..ModelConfig::default() };
    let params = init_params(&model, 1, data.words.clone(), data.entities.clone()).unwrap();
    let prior = evaluate(&params, &dev, EvalMode::PriorOnly).unwrap().micro_f1.unwrap();

    let result = fit(params, &train, &dev, &TrainConfig::default()).unwrap();
    let losses: Vec<f64> = result.log.iter().take(5).map(|e| e.loss).collect();
    assert_eq!(losses.len(), 5);
    assert!(losses.windows(2).all(|w| w[1] < w[0]), "{losses:?}");
    assert!(result.best_dev_f1 > prior, "{} <= {prior}", result.best_dev_f1);
    assert!(result.aborted_steps.is_empty());
}
