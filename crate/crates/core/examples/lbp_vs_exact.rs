//! Loopy max-product beliefs against brute-force max-marginals.

use mrnel::inference::{exact_max_marginals, lbp_max_marginals, LBP_DAMPING, LBP_ITERATIONS};
use mrnel::score::ScoreTables;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn argmax(xs: &[f64]) -> usize {
    (0..xs.len()).fold(0, |b, i| if xs[i] > xs[b] { i } else { b })
}

fn main() -> mrnel::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for n in 2..=6 {
        let (mut agree, mut total) = (0, 0);
        for _ in 0..300 {
            let sizes: Vec<usize> = (0..n).map(|_| rng.gen_range(2..=5)).collect();
            let mut t = ScoreTables::local_only(sizes.iter().map(|&c| (0..c).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect());
            let w = 1.0 / (n - 1) as f64;
            for i in 0..n {
                for j in (0..n).filter(|&j| j != i) {
                    t.set_pair(i, j, (0..sizes[i] * sizes[j]).map(|_| w * rng.gen_range(-1.0..1.0)).collect());
                }
            }
            let exact = exact_max_marginals(&t)?;
            let lbp = lbp_max_marginals(&t, LBP_ITERATIONS, LBP_DAMPING);
            for (a, b) in lbp.log_beliefs.iter().zip(&exact.log_beliefs) {
                total += 1;
                agree += usize::from(argmax(a) == argmax(b));
            }
        }
        println!("n = {n}: LBP argmax matches exact on {agree}/{total} mentions");
    }
    Ok(())
}
