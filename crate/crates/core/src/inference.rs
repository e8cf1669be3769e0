//! Max-marginal inference over the fully connected mention graph, the final
//! scoring network `g`, and decoding.

use crate::autodiff::{argmax, softmax, Tape, Var};
use crate::error::{Error, Result};
use crate::score::{ScoreGraph, ScoreTables};

/// Default number of message-passing rounds.
pub const LBP_ITERATIONS: usize = 10;
/// Default weight on the previous message when damping.
pub const LBP_DAMPING: f64 = 0.5;
/// Largest joint assignment space [`exact_max_marginals`] will enumerate.
pub const EXACT_LIMIT: f64 = 1e7;

/// Per-mention max-marginal log-beliefs (defined up to a constant) and their
/// softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefTable {
    pub log_beliefs: Vec<Vec<f64>>,
    pub probs: Vec<Vec<f64>>,
}

impl BeliefTable {
    pub fn from_log_beliefs(log_beliefs: Vec<Vec<f64>>) -> Self {
        let probs = log_beliefs.iter().map(|b| softmax(b)).collect();
        Self { log_beliefs, probs }
    }

    pub fn len(&self) -> usize {
        self.log_beliefs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_beliefs.is_empty()
    }

    /// Drops trailing variables (the padding mention) so only real mentions remain.
    pub fn truncate(&mut self, n: usize) {
        self.log_beliefs.truncate(n);
        self.probs.truncate(n);
    }
}

/// Symmetrized edge potential between `i` and `j` as a `|C_i| × |C_j|` node:
/// both directed pairwise terms describe the same edge.
fn edge_potential(tape: &mut Tape, g: &ScoreGraph, i: usize, j: usize) -> Option<Var> {
    let (ci, cj) = (g.sizes[i], g.sizes[j]);
    match (g.pair(i, j), g.pair(j, i)) {
        (None, None) => None,
        (Some(a), None) => Some(a),
        (None, Some(b)) => Some(tape.transpose(b, cj, ci)),
        (Some(a), Some(b)) => {
            let bt = tape.transpose(b, cj, ci);
            Some(tape.add(a, bt))
        }
    }
}

/// Unrolled max-product loopy belief propagation.
///
/// Messages start at zero; the first round is undamped and later rounds mix
/// `damping · old + (1 - damping) · new`. Each message is shifted so its
/// maximum is zero. Returns the log-beliefs `Ψ_i + Σ_k m_{k→i}` for every
/// variable.
pub fn lbp_graph(tape: &mut Tape, g: &ScoreGraph, iterations: usize, damping: f64) -> Vec<Var> {
    let n = g.len();
    let mut theta: Vec<Option<Var>> = vec![None; n * n];
    for i in 0..n {
        for j in 0..n {
            // messages into single-candidate variables are constant and vanish
            if i != j && g.sizes[j] > 1 && g.sizes[i] > 0 {
                theta[i * n + j] = edge_potential(tape, g, i, j);
            }
        }
    }
    let mut msgs: Vec<Option<Var>> = vec![None; n * n];
    for round in 0..iterations {
        let mut next: Vec<Option<Var>> = vec![None; n * n];
        for i in 0..n {
            for j in 0..n {
                let Some(th) = theta[i * n + j] else { continue };
                let mut terms = vec![(g.local[i], 1.0)];
                terms.extend((0..n).filter(|&v| v != i && v != j).filter_map(|v| msgs[v * n + i]).map(|m| (m, 1.0)));
                let pre = if terms.len() == 1 { g.local[i] } else { tape.lincomb(terms) };
                let raw = tape.max_product(th, pre, g.sizes[i], g.sizes[j]);
                let mixed = match msgs[i * n + j] {
                    Some(old) if round > 0 && damping > 0.0 => tape.lincomb(vec![(old, damping), (raw, 1.0 - damping)]),
                    _ => raw,
                };
                next[i * n + j] = Some(tape.sub_max(mixed));
            }
        }
        msgs = next;
    }
    (0..n)
        .map(|i| {
            let mut terms = vec![(g.local[i], 1.0)];
            terms.extend((0..n).filter(|&v| v != i).filter_map(|v| msgs[v * n + i]).map(|m| (m, 1.0)));
            if terms.len() == 1 {
                g.local[i]
            } else {
                tape.lincomb(terms)
            }
        })
        .collect()
}

/// Plain-value LBP.
pub fn lbp_max_marginals(tables: &ScoreTables, iterations: usize, damping: f64) -> BeliefTable {
    let mut tape = Tape::new();
    let g = ScoreGraph::from_tables(&mut tape, tables);
    let b = lbp_graph(&mut tape, &g, iterations, damping);
    BeliefTable::from_log_beliefs(b.iter().map(|&v| tape.value(v).to_vec()).collect())
}

/// Exact max-marginals by enumerating every joint assignment.
///
/// `log_beliefs[i][e]` is the best global score over assignments with
/// `e_i = e`, so `max_e` of every row equals the global optimum. Variables
/// with no candidates are left empty and ignored.
pub fn exact_max_marginals(tables: &ScoreTables) -> Result<BeliefTable> {
    let sizes = tables.sizes();
    let space: f64 = sizes.iter().filter(|&&c| c > 0).map(|&c| c as f64).product();
    if space > EXACT_LIMIT {
        return Err(Error::TooLarge { assignments: space, limit: EXACT_LIMIT });
    }
    let n = sizes.len();
    let active: Vec<usize> = (0..n).filter(|&i| sizes[i] > 0).collect();
    let mut best: Vec<Vec<f64>> = sizes.iter().map(|&c| vec![f64::NEG_INFINITY; c]).collect();
    if active.is_empty() {
        return Ok(BeliefTable::from_log_beliefs(best));
    }

    // Depth-first with a running score: assigning variable `v` adds its local
    // term and both directions of every pair with already-assigned variables.
    let mut assign = vec![0usize; n];
    let mut partial = vec![0.0f64; active.len() + 1];
    let mut depth = 0;
    let mut choice = vec![0usize; active.len()];
    loop {
        if depth == active.len() {
            let total = partial[depth];
            for &v in &active {
                let e = assign[v];
                if total > best[v][e] {
                    best[v][e] = total;
                }
            }
            depth -= 1;
            choice[depth] += 1;
            continue;
        }
        let v = active[depth];
        if choice[depth] == sizes[v] {
            choice[depth] = 0;
            if depth == 0 {
                break;
            }
            depth -= 1;
            choice[depth] += 1;
            continue;
        }
        let e = choice[depth];
        assign[v] = e;
        let mut s = partial[depth] + tables.local[v][e];
        for &u in &active[..depth] {
            if let Some(t) = tables.pair(v, u) {
                s += t[e * sizes[u] + assign[u]];
            }
            if let Some(t) = tables.pair(u, v) {
                s += t[assign[u] * sizes[v] + e];
            }
        }
        partial[depth + 1] = s;
        depth += 1;
    }
    Ok(BeliefTable::from_log_beliefs(best))
}

/// Tape handles for the two-layer scoring network `g`.
#[derive(Debug, Clone, Copy)]
pub struct MixerVars {
    /// `h × 2`, columns for (belief, prior).
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

/// `ρ(e) = w2 · tanh(W1 [q̂(e), p̂(e)] + b1) + b2` for every candidate.
pub fn mix_scores(tape: &mut Tape, g: MixerVars, probs: Var, priors: &[f64]) -> Var {
    let c = priors.len();
    let h = tape.dim(g.b1);
    let p = tape.constant(priors);
    let one = tape.constant(&[1.0]);
    let x = tape.gather((0..c).flat_map(|e| [(probs, e), (p, e), (one, 0)]).collect());
    let w = tape.gather((0..h).flat_map(|r| [(g.w1, 2 * r), (g.w1, 2 * r + 1), (g.b1, r)]).collect());
    let ones = tape.constant(&[1.0; 3]);
    let pre = tape.bilinear_diag(x, ones, w, c, h);
    let hidden = tape.tanh(pre);
    let out = tape.matvec(hidden, c, h, g.w2);
    tape.add_scalar(out, g.b2, 0)
}

/// Plain-value final scores for one mention.
pub fn final_scores(probs: &[f64], priors: &[f64], w1: &[f64], b1: &[f64], w2: &[f64], b2: f64) -> Vec<f64> {
    assert_eq!(probs.len(), priors.len(), "one prior per candidate");
    probs
        .iter()
        .zip(priors)
        .map(|(&q, &p)| {
            b1.iter()
                .enumerate()
                .map(|(r, &b)| w2[r] * (w1[2 * r] * q + w1[2 * r + 1] * p + b).tanh())
                .sum::<f64>()
                + b2
        })
        .collect()
}

/// Highest-scoring candidate per mention; equal scores go to the smaller
/// entity id. `None` for mentions without candidates.
pub fn decode<S: AsRef<str>, C: AsRef<[S]>>(scores: &[Vec<f64>], candidates: &[C]) -> Vec<Option<usize>> {
    scores
        .iter()
        .zip(candidates)
        .map(|(row, ids)| {
            let ids = ids.as_ref();
            if row.is_empty() {
                return None;
            }
            let mut best = 0;
            for e in 1..row.len() {
                if row[e] > row[best] || (row[e] == row[best] && ids[e].as_ref() < ids[best].as_ref()) {
                    best = e;
                }
            }
            Some(best)
        })
        .collect()
}

/// Index of the best belief per mention, first index on ties.
pub fn belief_argmax(beliefs: &BeliefTable) -> Vec<Option<usize>> {
    beliefs.log_beliefs.iter().map(|b| (!b.is_empty()).then(|| argmax(b))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tables(rng: &mut impl Rng, sizes: &[usize], pair_scale: f64) -> ScoreTables {
        let mut t = ScoreTables::local_only(sizes.iter().map(|&c| (0..c).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect());
        for i in 0..sizes.len() {
            for j in 0..sizes.len() {
                if i != j {
                    let tab = (0..sizes[i] * sizes[j]).map(|_| pair_scale * rng.gen_range(-1.0..1.0)).collect();
                    t.set_pair(i, j, tab);
                }
            }
        }
        t
    }

    fn order(xs: &[f64]) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..xs.len()).collect();
        idx.sort_by(|&a, &b| xs[b].total_cmp(&xs[a]));
        idx
    }

    #[test]
    fn two_mentions_by_hand() {
        // Ψ1 = (1, 0), Ψ2 = (0, 0.5); Φ12 = [[0, 2], [0, 0]], Φ21 = 0
        // exact: assignments (a,b) score Ψ1(a)+Ψ2(b)+Φ12(a,b)
        //   (0,0)=1  (0,1)=3.5  (1,0)=0  (1,1)=0.5
        // b1 = (3.5, 0.5), b2 = (1, 3.5)
        let mut t = ScoreTables::local_only(vec![vec![1.0, 0.0], vec![0.0, 0.5]]);
        t.set_pair(0, 1, vec![0.0, 2.0, 0.0, 0.0]);
        let exact = exact_max_marginals(&t).unwrap();
        assert_eq!(exact.log_beliefs, vec![vec![3.5, 0.5], vec![1.0, 3.5]]);
        let lbp = lbp_max_marginals(&t, 10, 0.5);
        for (a, b) in lbp.log_beliefs.iter().zip(&exact.log_beliefs) {
            let shift = a[0] - b[0];
            for (x, y) in a.iter().zip(b) {
                assert_relative_eq!(x - shift, *y, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn one_iteration_message_by_hand() {
        // m_{1→2}(b) = max_a Ψ1(a) + Φ12(a, b), then shifted to max 0
        // Ψ1 = (0.2, 0.7), Φ12 = [[1, 0], [0, 0.1]]: raw = (1.2, 0.8) → (0, -0.4)
        let mut t = ScoreTables::local_only(vec![vec![0.2, 0.7], vec![0.0, 0.0]]);
        t.set_pair(0, 1, vec![1.0, 0.0, 0.0, 0.1]);
        let b = lbp_max_marginals(&t, 1, 0.5);
        assert_relative_eq!(b.log_beliefs[1][0], 0.0, epsilon = 1e-15);
        assert_relative_eq!(b.log_beliefs[1][1], -0.4, epsilon = 1e-15);
    }

    #[test]
    fn no_pairwise_gives_softmax_of_local() {
        let local = vec![vec![0.3, -1.0, 2.0], vec![1.0], vec![0.5, 0.5]];
        let t = ScoreTables::local_only(local.clone());
        for b in [lbp_max_marginals(&t, 10, 0.5), exact_max_marginals(&t).unwrap()] {
            for (p, l) in b.probs.iter().zip(&local) {
                for (x, y) in p.iter().zip(softmax(l)) {
                    assert_relative_eq!(*x, y, epsilon = 1e-15);
                }
            }
        }
    }

    #[test]
    fn zero_pairwise_leaves_local_scores() {
        let mut t = ScoreTables::local_only(vec![vec![0.3, -1.0], vec![0.1, 0.2, 0.0]]);
        t.set_pair(0, 1, vec![0.0; 6]);
        t.set_pair(1, 0, vec![0.0; 6]);
        let b = lbp_max_marginals(&t, 10, 0.5);
        assert_eq!(b.log_beliefs, t.local);
    }

    #[test]
    fn exact_refuses_huge_spaces() {
        let t = ScoreTables::local_only(vec![vec![0.0; 7]; 9]);
        assert!(matches!(exact_max_marginals(&t), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn exact_skips_empty_variables() {
        let mut t = ScoreTables::local_only(vec![vec![1.0, 0.0], vec![], vec![0.0, 2.0]]);
        t.set_pair(0, 2, vec![0.0, 0.0, 5.0, 0.0]);
        let b = exact_max_marginals(&t).unwrap();
        assert!(b.log_beliefs[1].is_empty());
        assert_eq!(b.log_beliefs[0], [3.0, 5.0]);
        assert_eq!(belief_argmax(&b), [Some(1), None, Some(0)]);
    }

    #[test]
    fn mixer_by_hand() {
        // h = 1: ρ = 2 · tanh(0.5 q - p + 0.1) + 0.3
        let r = final_scores(&[0.4, 0.6], &[0.9, 0.1], &[0.5, -1.0], &[0.1], &[2.0], 0.3);
        assert_relative_eq!(r[0], 2.0 * (0.2f64 - 0.9 + 0.1).tanh() + 0.3);
        assert_relative_eq!(r[1], 2.0 * (0.3f64 - 0.1 + 0.1).tanh() + 0.3);
        let mut tape = Tape::new();
        let g = MixerVars {
            w1: tape.leaf(vec![0.5, -1.0]),
            b1: tape.leaf(vec![0.1]),
            w2: tape.leaf(vec![2.0]),
            b2: tape.leaf(vec![0.3]),
        };
        let q = tape.leaf(vec![0.4, 0.6]);
        let rho = mix_scores(&mut tape, g, q, &[0.9, 0.1]);
        for (x, y) in tape.value(rho).iter().zip(&r) {
            assert_relative_eq!(x, y, epsilon = 1e-15);
        }
    }

    #[test]
    fn decode_ties_prefer_smaller_id() {
        let scores = vec![vec![1.0, 1.0], vec![0.5, 2.0, 2.0], vec![]];
        let ids = vec![vec!["Q9", "Q10"], vec!["a", "c", "b"], vec![]];
        assert_eq!(decode(&scores, &ids), [Some(1), Some(2), None]);
    }

    #[test]
    fn exact_equals_lbp_on_two_random_mentions() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let sizes = [rng.gen_range(1..=7), rng.gen_range(1..=7)];
            let t = random_tables(&mut rng, &sizes, 1.0);
            let exact = exact_max_marginals(&t).unwrap();
            let lbp = lbp_max_marginals(&t, 10, 0.5);
            for (a, b) in lbp.log_beliefs.iter().zip(&exact.log_beliefs) {
                assert_eq!(order(a), order(b));
            }
        }
    }

    #[test]
    fn lbp_argmax_agrees_with_exact_on_three_mentions() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (mut agree, mut total) = (0, 0);
        for _ in 0..500 {
            // pairs weighted 1/(n-1), like attention-normalized potentials
            let t = random_tables(&mut rng, &[3, 3, 3], 0.5);
            let exact = exact_max_marginals(&t).unwrap();
            let lbp = lbp_max_marginals(&t, 10, 0.5);
            for (a, b) in lbp.log_beliefs.iter().zip(&exact.log_beliefs) {
                total += 1;
                agree += usize::from(order(a)[0] == order(b)[0]);
            }
        }
        assert!(agree as f64 >= 0.95 * total as f64, "{agree}/{total}");
    }

    proptest! {
        #[test]
        fn exact_row_maxima_equal_global_optimum(seed in 0u64..10_000, n in 1usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sizes: Vec<usize> = (0..n).map(|_| rng.gen_range(1..=4)).collect();
            let t = random_tables(&mut rng, &sizes, 0.5);
            let b = exact_max_marginals(&t).unwrap();
            // brute-force optimum via the table's own scoring
            let mut best = f64::NEG_INFINITY;
            let mut a = vec![0usize; n];
            loop {
                best = best.max(t.score(&a));
                let mut k = 0;
                while k < n {
                    a[k] += 1;
                    if a[k] < sizes[k] { break; }
                    a[k] = 0;
                    k += 1;
                }
                if k == n { break; }
            }
            for row in &b.log_beliefs {
                let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!((m - best).abs() < 1e-9);
            }
        }

        #[test]
        fn beliefs_are_distributions(seed in 0u64..10_000, n in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sizes: Vec<usize> = (0..n).map(|_| rng.gen_range(1..=7)).collect();
            let t = random_tables(&mut rng, &sizes, 0.5);
            let b = lbp_max_marginals(&t, 10, 0.5);
            for p in &b.probs {
                prop_assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
                prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }
}
