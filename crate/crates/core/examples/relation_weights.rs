//! Relation weights under both normalizations for a hand-made document.

use mrnel::score::{alpha_mentnorm_values, alpha_relnorm_values};

fn main() {
    // three mentions, d = 2, K = 2; relation 0 likes feature 0, relation 1 feature 1
    let features = vec![vec![1.0, 0.0], vec![1.0, 0.2], vec![0.0, 1.0]];
    let attn = [2.0, 0.0, 0.0, 2.0];
    let pad = [0.0, 0.0];

    let rel = alpha_relnorm_values(&features, &attn, 2);
    println!("rel-norm: softmax over relations for each pair");
    for i in 0..3 {
        for j in (0..3).filter(|&j| j != i) {
            println!("  alpha[{i}][{j}] = ({:.3}, {:.3})", rel.get(i, j, 0), rel.get(i, j, 1));
        }
    }

    let ment = alpha_mentnorm_values(&features, &pad, &attn, 2);
    println!("ment-norm: softmax over the other mentions and the pad, per relation");
    for i in 0..3 {
        for k in 0..2 {
            let row: Vec<String> = (0..4)
                .filter(|&j| j != i)
                .map(|j| format!("{}={:.3}", if j == 3 { "pad".into() } else { j.to_string() }, ment.get(i, j, k)))
                .collect();
            println!("  mention {i}, relation {k}: {}", row.join("  "));
        }
    }
}
