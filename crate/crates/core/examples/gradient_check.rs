//! Finite-difference check of the end-to-end gradient on a random instance.
//!
//! ```text
//! cargo run --release --example gradient_check -- [rel-norm|ment-norm] [seed]
//! ```

use mrnel::params::{Mode, ModelConfig};
use mrnel::training::{gradient_check, random_instance, Coordinates, TrainConfig};

fn main() -> mrnel::Result<()> {
    let mut args = std::env::args().skip(1);
    let mode: Mode = args.next().map(|m| m.parse()).transpose().map_err(mrnel::Error::Config)?.unwrap_or(Mode::MentNorm);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);

    let config = ModelConfig { dim: 8, relations: 2, mode, hidden: 10, ..ModelConfig::default() };
    let (params, doc) = random_instance(&config, 3, seed)?;
    let cfg = TrainConfig { dropout: 0.0, ..TrainConfig::default() };
    let check = gradient_check(&params, &doc, &cfg, 1e-4, Coordinates::All, None)?;
    for g in &check.groups {
        println!("{:<12} {:>5} checked  {:>3} at ties  max rel error {:.2e}", g.name, g.checked, g.kinks, g.max_rel_error);
    }

    // same check with dropout on, holding the mask fixed
    let cfg = TrainConfig { dropout: 0.3, ..cfg };
    let masked = gradient_check(&params, &doc, &cfg, 1e-4, Coordinates::All, Some(seed))?;
    println!("without dropout {:.2e}, with a fixed dropout mask {:.2e}", check.max_rel_error(), masked.max_rel_error());
    Ok(())
}
