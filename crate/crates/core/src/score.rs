//! Potential functions: the context mapping `f`, local scores `Ψ`, relation
//! weights `α` under both normalizations, and pairwise scores `Φ`.
//!
//! Each function records onto a [`Tape`] so the same code serves training and
//! inference; the plain-value wrappers at the bottom build a throwaway tape.

use rand::Rng;

use crate::autodiff::{Tape, Var};
use crate::params::Mode;

/// Inverted dropout: kept units are scaled by `1 / (1 - rate)`.
pub fn dropout(tape: &mut Tape, x: Var, rate: f64, rng: &mut impl Rng) -> Var {
    if rate <= 0.0 {
        return x;
    }
    let keep = 1.0 - rate;
    let mask: Vec<f64> = (0..tape.dim(x)).map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 }).collect();
    let m = tape.leaf(mask);
    tape.mul(x, m)
}

/// `tanh(W [avg left; avg right] + b)`, `W: d × 2d`.
pub fn map_context(tape: &mut Tape, ctx_w: Var, ctx_b: Var, input: &[f64]) -> Var {
    let d = tape.dim(ctx_b);
    let x = tape.constant(input);
    let wx = tape.matvec(ctx_w, d, 2 * d, x);
    let pre = tape.add(wx, ctx_b);
    tape.tanh(pre)
}

/// Indices of the `keep` largest values, ties to the lower index, returned
/// in ascending index order.
pub fn top_k_indices(values: &[f64], keep: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    idx.truncate(keep);
    idx.sort_unstable();
    idx
}

/// Hard-attention local scores for one mention.
///
/// Each context word gets `u(w) = max_e eᵀ diag(A) w` over the candidates;
/// the `keep` best words are softmax-weighted into `f(c)`, and
/// `Ψ(e) = eᵀ diag(B) f(c)`. Returns a vector over candidates (zeros when
/// there is no context).
pub fn local_scores(
    tape: &mut Tape,
    local_attn: Var,
    local_out: Var,
    candidates: Var,
    n_cand: usize,
    context: &[f64],
    keep: usize,
) -> Var {
    let d = tape.dim(local_attn);
    let n_words = context.len() / d.max(1);
    if n_words == 0 || n_cand == 0 {
        return tape.leaf(vec![0.0; n_cand]);
    }
    let ctx = tape.constant(context);
    let u_all = tape.bilinear_diag(ctx, local_attn, candidates, n_words, n_cand);
    let u = tape.row_max(u_all, n_words, n_cand);
    let kept = top_k_indices(tape.value(u), keep);
    let u_kept = tape.gather(kept.iter().map(|&i| (u, i)).collect());
    let beta = tape.softmax(u_kept);
    let rows: Vec<f64> = kept.iter().flat_map(|&i| context[i * d..(i + 1) * d].iter().copied()).collect();
    let kept_ctx = tape.leaf(rows);
    let feature = tape.vecmat(kept_ctx, kept.len(), d, beta);
    let scaled = tape.mul(local_out, feature);
    tape.matvec(candidates, n_cand, d, scaled)
}

/// Relation weights recorded on a tape.
///
/// Rows are real mentions. Columns are the mentions the row attends over:
/// the same mentions for rel-norm, plus one padding column for ment-norm.
#[derive(Debug, Clone)]
pub struct AlphaGraph {
    pub mode: Mode,
    pub rows: usize,
    pub cols: usize,
    pub relations: usize,
    nodes: Vec<Var>,
}

impl AlphaGraph {
    /// Location of `α_ijk` as (node, index); `None` on the diagonal.
    pub fn at(&self, i: usize, j: usize, k: usize) -> Option<(Var, usize)> {
        if i == j {
            return None;
        }
        match self.mode {
            Mode::MentNorm => Some((self.nodes[i * self.relations + k], if j < i { j } else { j - 1 })),
            Mode::RelNorm => Some((self.nodes[i * self.cols + j], k)),
        }
    }

    pub fn to_tensor(&self, tape: &Tape) -> AlphaTensor {
        let mut values = vec![0.0; self.rows * self.cols * self.relations];
        for i in 0..self.rows {
            for j in 0..self.cols {
                for k in 0..self.relations {
                    if let Some((v, idx)) = self.at(i, j, k) {
                        values[(i * self.cols + j) * self.relations + k] = tape.value(v)[idx];
                    }
                }
            }
        }
        AlphaTensor { mode: self.mode, rows: self.rows, cols: self.cols, relations: self.relations, values }
    }
}

/// Bilinear relation logits `f_iᵀ diag(D_k) f_j / √d` for all rows `i` and
/// every column feature, one node per `(i, k)`.
fn relation_logits(tape: &mut Tape, rows: &[Var], all: &[Var], rel_attn_rows: &[Var]) -> Vec<Var> {
    let d = tape.dim(rows[0]);
    let inv_sqrt_d = 1.0 / (d as f64).sqrt();
    let feats = tape.concat(all.to_vec());
    let mut out = Vec::with_capacity(rows.len() * rel_attn_rows.len());
    for &fi in rows {
        for &dk in rel_attn_rows {
            let h = tape.mul(dk, fi);
            let l = tape.matvec(feats, all.len(), d, h);
            out.push(tape.scale(l, inv_sqrt_d));
        }
    }
    out
}

/// Softmax over relations for every ordered pair of distinct mentions.
pub fn alpha_relnorm(tape: &mut Tape, features: &[Var], rel_attn_rows: &[Var]) -> AlphaGraph {
    let n = features.len();
    let k = rel_attn_rows.len();
    let mut nodes = Vec::with_capacity(n * n);
    if n > 0 {
        let logits = relation_logits(tape, features, features, rel_attn_rows);
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    // placeholder keeps the (i, j) indexing dense; never read
                    nodes.push(logits[i * k]);
                    continue;
                }
                let picks = (0..k).map(|r| (logits[i * k + r], j)).collect();
                let g = tape.gather(picks);
                nodes.push(tape.softmax(g));
            }
        }
    }
    AlphaGraph { mode: Mode::RelNorm, rows: n, cols: n, relations: k, nodes }
}

/// Softmax over the other mentions and the padding mention, for every
/// mention and relation.
pub fn alpha_mentnorm(tape: &mut Tape, features: &[Var], pad_feature: Var, rel_attn_rows: &[Var]) -> AlphaGraph {
    let n = features.len();
    let k = rel_attn_rows.len();
    let mut all = features.to_vec();
    all.push(pad_feature);
    let mut nodes = Vec::with_capacity(n * k);
    if n > 0 {
        let logits = relation_logits(tape, features, &all, rel_attn_rows);
        for i in 0..n {
            for r in 0..k {
                let l = logits[i * k + r];
                let picks = (0..=n).filter(|&j| j != i).map(|j| (l, j)).collect();
                let g = tape.gather(picks);
                nodes.push(tape.softmax(g));
            }
        }
    }
    AlphaGraph { mode: Mode::MentNorm, rows: n, cols: n + 1, relations: k, nodes }
}

/// Pairwise score tables `Φ(e_i, e_j) = Σ_k α_ijk e_iᵀ diag(R_k) e_j` for
/// every row mention `i` and column `j ≠ i`.
///
/// `candidates[j]` is the `|C_j| × d` matrix of candidate embeddings; for
/// ment-norm the last entry is the padding entity (`1 × d`). Returns a dense
/// `rows × cols` grid with `None` on the diagonal.
pub fn pairwise_scores(
    tape: &mut Tape,
    alpha: &AlphaGraph,
    candidates: &[(Var, usize)],
    rel_rows: &[Var],
) -> Vec<Option<Var>> {
    assert_eq!(candidates.len(), alpha.cols, "one candidate matrix per alpha column");
    let mut out = vec![None; alpha.rows * alpha.cols];
    for i in 0..alpha.rows {
        let (ei, ci) = candidates[i];
        for j in 0..alpha.cols {
            if i == j {
                continue;
            }
            let (ej, cj) = candidates[j];
            let terms: Vec<Var> = rel_rows
                .iter()
                .enumerate()
                .map(|(k, &rk)| {
                    let (a, idx) = alpha.at(i, j, k).expect("off-diagonal");
                    tape.scale_by(rk, a, idx)
                })
                .collect();
            let mixed = tape.sum_all(&terms);
            out[i * alpha.cols + j] = Some(tape.bilinear_diag(ei, mixed, ej, ci, cj));
        }
    }
    out
}

/// Relation weights as plain values, `rows × cols × K`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaTensor {
    pub mode: Mode,
    pub rows: usize,
    pub cols: usize,
    pub relations: usize,
    pub values: Vec<f64>,
}

impl AlphaTensor {
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[(i * self.cols + j) * self.relations + k]
    }
}

/// Scores for one document as plain values.
///
/// Variables are the real mentions followed, under ment-norm, by the padding
/// mention with its single candidate. `pairwise[i * n + j]` is the
/// `|C_i| × |C_j|` table `Φ(e_i, e_j)`; absent tables count as zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTables {
    pub local: Vec<Vec<f64>>,
    pub pairwise: Vec<Option<Vec<f64>>>,
}

impl ScoreTables {
    /// Tables with the given local scores and no pairwise terms.
    pub fn local_only(local: Vec<Vec<f64>>) -> Self {
        let n = local.len();
        Self { local, pairwise: vec![None; n * n] }
    }

    pub fn len(&self) -> usize {
        self.local.len()
    }

    pub fn is_empty(&self) -> bool {
        self.local.is_empty()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.local.iter().map(Vec::len).collect()
    }

    pub fn pair(&self, i: usize, j: usize) -> Option<&[f64]> {
        self.pairwise[i * self.len() + j].as_deref()
    }

    pub fn set_pair(&mut self, i: usize, j: usize, table: Vec<f64>) {
        let n = self.len();
        assert_eq!(table.len(), self.local[i].len() * self.local[j].len(), "pair table shape");
        self.pairwise[i * n + j] = Some(table);
    }

    /// Global score of a full assignment: local terms plus every ordered pair.
    pub fn score(&self, assignment: &[usize]) -> f64 {
        let n = self.len();
        let mut s: f64 = assignment.iter().enumerate().map(|(i, &a)| self.local[i][a]).sum();
        for i in 0..n {
            for j in 0..n {
                if let Some(t) = self.pair(i, j) {
                    s += t[assignment[i] * self.local[j].len() + assignment[j]];
                }
            }
        }
        s
    }

    /// Restricts variable `var` to its candidate `keep`.
    pub fn clamp(&self, var: usize, keep: usize) -> ScoreTables {
        let n = self.len();
        let mut out = self.clone();
        out.local[var] = vec![self.local[var][keep]];
        for other in 0..n {
            let cj = self.local[other].len();
            if let Some(t) = self.pair(var, other) {
                out.pairwise[var * n + other] = Some(t[keep * cj..(keep + 1) * cj].to_vec());
            }
            if let Some(t) = self.pair(other, var) {
                let cv = self.local[var].len();
                out.pairwise[other * n + var] = Some(t.chunks_exact(cv).map(|row| row[keep]).collect());
            }
        }
        out
    }
}

/// Tape-side counterpart of [`ScoreTables`].
#[derive(Debug, Clone)]
pub struct ScoreGraph {
    pub local: Vec<Var>,
    pub pairwise: Vec<Option<Var>>,
    pub sizes: Vec<usize>,
}

impl ScoreGraph {
    pub fn len(&self) -> usize {
        self.local.len()
    }

    pub fn is_empty(&self) -> bool {
        self.local.is_empty()
    }

    pub fn pair(&self, i: usize, j: usize) -> Option<Var> {
        self.pairwise[i * self.len() + j]
    }

    /// Records constant nodes for plain tables.
    pub fn from_tables(tape: &mut Tape, tables: &ScoreTables) -> Self {
        let local = tables.local.iter().map(|l| tape.constant(l)).collect();
        let pairwise = tables.pairwise.iter().map(|p| p.as_ref().map(|t| tape.constant(t))).collect();
        Self { local, pairwise, sizes: tables.sizes() }
    }

    pub fn to_tables(&self, tape: &Tape) -> ScoreTables {
        ScoreTables {
            local: self.local.iter().map(|&v| tape.value(v).to_vec()).collect(),
            pairwise: self.pairwise.iter().map(|p| p.map(|v| tape.value(v).to_vec())).collect(),
        }
    }
}

fn row_vars(tape: &mut Tape, rows: &[f64], n: usize) -> Vec<Var> {
    let d = rows.len() / n.max(1);
    (0..n).map(|k| tape.constant(&rows[k * d..(k + 1) * d])).collect()
}

/// Plain-value rel-norm weights from feature rows and `diag(D_k)` rows
/// (`K × d`, row-major).
pub fn alpha_relnorm_values(features: &[Vec<f64>], rel_attn: &[f64], relations: usize) -> AlphaTensor {
    let mut tape = Tape::new();
    let f: Vec<Var> = features.iter().map(|r| tape.constant(r)).collect();
    let dk = row_vars(&mut tape, rel_attn, relations);
    alpha_relnorm(&mut tape, &f, &dk).to_tensor(&tape)
}

/// Plain-value ment-norm weights; `features` excludes the padding row.
pub fn alpha_mentnorm_values(features: &[Vec<f64>], pad_feature: &[f64], rel_attn: &[f64], relations: usize) -> AlphaTensor {
    let mut tape = Tape::new();
    let f: Vec<Var> = features.iter().map(|r| tape.constant(r)).collect();
    let pad = tape.constant(pad_feature);
    let dk = row_vars(&mut tape, rel_attn, relations);
    alpha_mentnorm(&mut tape, &f, pad, &dk).to_tensor(&tape)
}

/// Plain-value pairwise tables. `candidates[j]` is row-major `|C_j| × d`;
/// `rel` holds `diag(R_k)` rows. The result has one variable per alpha
/// column, with zero local scores.
pub fn pairwise_values(alpha: &AlphaTensor, candidates: &[Vec<f64>], rel: &[f64]) -> ScoreTables {
    let mut tape = Tape::new();
    let d = rel.len() / alpha.relations;
    let mut nodes = Vec::with_capacity(alpha.rows * alpha.relations);
    for i in 0..alpha.rows {
        match alpha.mode {
            Mode::MentNorm => {
                for k in 0..alpha.relations {
                    let col: Vec<f64> = (0..alpha.cols).filter(|&j| j != i).map(|j| alpha.get(i, j, k)).collect();
                    nodes.push(tape.leaf(col));
                }
            }
            Mode::RelNorm => {
                for j in 0..alpha.cols {
                    nodes.push(tape.leaf((0..alpha.relations).map(|k| alpha.get(i, j, k)).collect()));
                }
            }
        }
    }
    let graph = AlphaGraph { mode: alpha.mode, rows: alpha.rows, cols: alpha.cols, relations: alpha.relations, nodes };
    let cands: Vec<(Var, usize)> = candidates.iter().map(|c| (tape.constant(c), c.len() / d)).collect();
    let rk = row_vars(&mut tape, rel, alpha.relations);
    let pw = pairwise_scores(&mut tape, &graph, &cands, &rk);
    let n = alpha.cols;
    let mut tables = ScoreTables::local_only(cands.iter().map(|&(_, c)| vec![0.0; c]).collect());
    for i in 0..alpha.rows {
        for j in 0..n {
            if let Some(v) = pw[i * n + j] {
                tables.set_pair(i, j, tape.value(v).to_vec());
            }
        }
    }
    tables
}
