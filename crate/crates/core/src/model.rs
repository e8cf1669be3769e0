//! The full network for one document: features, potentials, inference and
//! final scores, wired together on a single tape.

use crate::autodiff::{Tape, Var};
use crate::corpus::{Corpus, Document, Embeddings};
use crate::error::Result;
use crate::inference::{
    decode, exact_max_marginals, final_scores, lbp_graph, lbp_max_marginals, mix_scores, BeliefTable, MixerVars,
};
use crate::params::{Mode, ModelParams};
use crate::score::{
    alpha_mentnorm, alpha_relnorm, dropout, local_scores, map_context, pairwise_scores, AlphaGraph, AlphaTensor,
    ScoreGraph, ScoreTables,
};

/// Everything the network needs about one mention, resolved to vectors.
#[derive(Debug, Clone)]
pub struct PreparedMention {
    /// Position in `Document::mentions`.
    pub mention: usize,
    pub entity_ids: Vec<String>,
    /// `|C| × d` candidate embeddings; unknown entities are zero rows.
    pub candidates: Vec<f64>,
    pub priors: Vec<f64>,
    pub gold: Option<usize>,
    /// Known words around the mention (mention tokens excluded), `m × d`.
    pub context: Vec<f64>,
    /// `[avg left window; avg right window]`, length `2d`.
    pub pair_input: Vec<f64>,
}

impl PreparedMention {
    pub fn len(&self) -> usize {
        self.priors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.priors.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct PreparedDoc {
    pub doc_id: String,
    pub mentions: Vec<PreparedMention>,
    /// Mentions left out of the graph because they have no candidates.
    pub skipped: Vec<usize>,
}

fn average(words: &Embeddings, tokens: &[String]) -> Vec<f64> {
    let mut out = vec![0.0; words.dim()];
    let mut n = 0;
    for v in tokens.iter().filter_map(|t| words.get(t)) {
        out.iter_mut().zip(v).for_each(|(o, x)| *o += x);
        n += 1;
    }
    if n > 0 {
        out.iter_mut().for_each(|o| *o /= n as f64);
    }
    out
}

pub fn prepare_document(doc: &Document, params: &ModelParams) -> PreparedDoc {
    let cfg = &params.config;
    let d = cfg.dim;
    let mut mentions = Vec::new();
    let mut skipped = Vec::new();
    for (idx, m) in doc.mentions.iter().enumerate() {
        if m.candidates.is_empty() {
            skipped.push(idx);
            continue;
        }
        let mut candidates = Vec::with_capacity(m.candidates.len() * d);
        for c in &m.candidates {
            match params.entities.get(&c.entity) {
                Some(v) => candidates.extend_from_slice(v),
                None => candidates.extend(std::iter::repeat(0.0).take(d)),
            }
        }
        let lo = m.start.saturating_sub(cfg.local_window);
        let hi = (m.end + cfg.local_window).min(doc.tokens.len());
        let context = doc.tokens[lo..m.start]
            .iter()
            .chain(&doc.tokens[m.end..hi])
            .filter_map(|t| params.words.get(t))
            .flatten()
            .copied()
            .collect();
        let left = &doc.tokens[m.start.saturating_sub(cfg.pair_window)..m.start];
        let right = &doc.tokens[m.end..(m.end + cfg.pair_window).min(doc.tokens.len())];
        let mut pair_input = average(&params.words, left);
        pair_input.extend(average(&params.words, right));
        mentions.push(PreparedMention {
            mention: idx,
            entity_ids: m.candidates.iter().map(|c| c.entity.clone()).collect(),
            candidates,
            priors: m.priors(),
            gold: m.gold_index(),
            context,
            pair_input,
        });
    }
    PreparedDoc { doc_id: doc.doc_id.clone(), mentions, skipped }
}

pub fn prepare_corpus(corpus: &Corpus, params: &ModelParams) -> Vec<PreparedDoc> {
    corpus.documents.iter().map(|d| prepare_document(d, params)).collect()
}

/// Every parameter group recorded as a tape leaf, plus per-relation rows.
#[derive(Debug, Clone)]
pub struct ParamVars {
    /// Leaves in [`crate::params::GROUP_NAMES`] order.
    pub groups: [Var; 12],
    pub rel_rows: Vec<Var>,
    pub rel_attn_rows: Vec<Var>,
}

impl ParamVars {
    pub fn new(tape: &mut Tape, params: &ModelParams) -> Self {
        let groups = params.groups().map(|(_, t)| tape.leaf(t.data.clone()));
        let (k, d) = (params.config.relations, params.config.dim);
        let rel_rows = (0..k).map(|r| tape.slice(groups[2], r * d, d)).collect();
        let rel_attn_rows = (0..k).map(|r| tape.slice(groups[3], r * d, d)).collect();
        Self { groups, rel_rows, rel_attn_rows }
    }

    pub fn local_attn(&self) -> Var {
        self.groups[0]
    }
    pub fn local_out(&self) -> Var {
        self.groups[1]
    }
    pub fn ctx_w(&self) -> Var {
        self.groups[4]
    }
    pub fn ctx_b(&self) -> Var {
        self.groups[5]
    }
    pub fn mixer(&self) -> MixerVars {
        MixerVars { w1: self.groups[6], b1: self.groups[7], w2: self.groups[8], b2: self.groups[9] }
    }
    pub fn pad_feature(&self) -> Var {
        self.groups[10]
    }
    pub fn pad_entity(&self) -> Var {
        self.groups[11]
    }
}

/// Nodes produced by [`forward`]. Belief and score vectors cover real
/// mentions only.
#[derive(Debug, Clone)]
pub struct Forward {
    pub features: Vec<Var>,
    pub alpha: AlphaGraph,
    pub scores: ScoreGraph,
    pub log_beliefs: Vec<Var>,
    pub probs: Vec<Var>,
    pub rho: Vec<Var>,
}

/// Records features, potentials and relation weights (no inference yet).
pub fn potentials(
    tape: &mut Tape,
    vars: &ParamVars,
    params: &ModelParams,
    doc: &PreparedDoc,
    drop: Option<(f64, &mut dyn rand::RngCore)>,
) -> (Vec<Var>, AlphaGraph, ScoreGraph) {
    let cfg = &params.config;
    let d = cfg.dim;
    let mut drop = drop;
    let features: Vec<Var> = doc
        .mentions
        .iter()
        .map(|m| {
            let f = map_context(tape, vars.ctx_w(), vars.ctx_b(), &m.pair_input);
            match drop.as_mut() {
                Some((rate, rng)) => dropout(tape, f, *rate, rng),
                None => f,
            }
        })
        .collect();
    let mut cands: Vec<(Var, usize)> = doc.mentions.iter().map(|m| (tape.constant(&m.candidates), m.len())).collect();
    let mut local: Vec<Var> = doc
        .mentions
        .iter()
        .zip(&cands)
        .map(|(m, &(e, c))| local_scores(tape, vars.local_attn(), vars.local_out(), e, c, &m.context, cfg.local_keep))
        .collect();
    let alpha = match cfg.mode {
        Mode::RelNorm => alpha_relnorm(tape, &features, &vars.rel_attn_rows),
        Mode::MentNorm => {
            cands.push((vars.pad_entity(), 1));
            local.push(tape.constant(&[0.0]));
            alpha_mentnorm(tape, &features, vars.pad_feature(), &vars.rel_attn_rows)
        }
    };
    let pair = pairwise_scores(tape, &alpha, &cands, &vars.rel_rows);
    let n = cands.len();
    let mut pairwise = vec![None; n * n];
    for i in 0..alpha.rows {
        for j in 0..alpha.cols {
            pairwise[i * n + j] = pair[i * alpha.cols + j];
        }
    }
    debug_assert_eq!(d, tape.dim(vars.ctx_b()));
    let scores = ScoreGraph { local, pairwise, sizes: cands.iter().map(|c| c.1).collect() };
    (features, alpha, scores)
}

/// Full differentiable pass with LBP inference.
pub fn forward(
    tape: &mut Tape,
    vars: &ParamVars,
    params: &ModelParams,
    doc: &PreparedDoc,
    lbp_iters: usize,
    damping: f64,
    drop: Option<(f64, &mut dyn rand::RngCore)>,
) -> Forward {
    let (features, alpha, scores) = potentials(tape, vars, params, doc, drop);
    let n = doc.mentions.len();
    let mut log_beliefs = lbp_graph(tape, &scores, lbp_iters, damping);
    log_beliefs.truncate(n);
    let probs: Vec<Var> = log_beliefs.iter().map(|&b| tape.softmax(b)).collect();
    let rho = probs.iter().zip(&doc.mentions).map(|(&q, m)| mix_scores(tape, vars.mixer(), q, &m.priors)).collect();
    Forward { features, alpha, scores, log_beliefs, probs, rho }
}

/// How max-marginals are computed at prediction time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Inference {
    Lbp { iterations: usize, damping: f64 },
    Exact,
}

/// Plain-value output for one document.
#[derive(Debug, Clone)]
pub struct DocPrediction {
    pub alpha: AlphaTensor,
    pub tables: ScoreTables,
    pub beliefs: BeliefTable,
    pub rho: Vec<Vec<f64>>,
    /// Chosen candidate index per prepared mention.
    pub predicted: Vec<Option<usize>>,
}

fn mixer_values(params: &ModelParams) -> impl Fn(&[f64], &[f64]) -> Vec<f64> + '_ {
    move |q, p| {
        final_scores(q, p, &params.mix_w1.data, &params.mix_b1.data, &params.mix_w2.data, params.mix_b2.data[0])
    }
}

pub fn predict_document(params: &ModelParams, doc: &PreparedDoc, inference: Inference) -> Result<DocPrediction> {
    let mut tape = Tape::new();
    let vars = ParamVars::new(&mut tape, params);
    let (_, alpha, scores) = potentials(&mut tape, &vars, params, doc, None);
    let tables = scores.to_tables(&tape);
    let mut beliefs = match inference {
        Inference::Lbp { iterations, damping } => lbp_max_marginals(&tables, iterations, damping),
        Inference::Exact => exact_max_marginals(&tables)?,
    };
    beliefs.truncate(doc.mentions.len());
    let g = mixer_values(params);
    let rho: Vec<Vec<f64>> = beliefs.probs.iter().zip(&doc.mentions).map(|(q, m)| g(q, &m.priors)).collect();
    let ids: Vec<&[String]> = doc.mentions.iter().map(|m| m.entity_ids.as_slice()).collect();
    let predicted = decode(&rho, &ids);
    Ok(DocPrediction { alpha: alpha.to_tensor(&tape), tables, beliefs, rho, predicted })
}

/// Prediction for each mention when every other gold-linkable mention is
/// fixed to its gold entity.
pub fn predict_document_oracle(params: &ModelParams, doc: &PreparedDoc, iterations: usize, damping: f64) -> Vec<Option<usize>> {
    let mut tape = Tape::new();
    let vars = ParamVars::new(&mut tape, params);
    let (_, _, scores) = potentials(&mut tape, &vars, params, doc, None);
    let tables = scores.to_tables(&tape);
    let g = mixer_values(params);
    doc.mentions
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let mut t = tables.clone();
            for (j, other) in doc.mentions.iter().enumerate() {
                if let (true, Some(gold)) = (j != i, other.gold) {
                    t = t.clamp(j, gold);
                }
            }
            let b = lbp_max_marginals(&t, iterations, damping);
            let rho = g(&b.probs[i], &m.priors);
            decode(&[rho], &[m.entity_ids.clone()])[0]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{gen_synthetic, SynthSpec};
    use crate::params::{init_params, ModelConfig};

    fn small() -> (ModelParams, Vec<PreparedDoc>) {
        let spec = SynthSpec { num_docs: 4, dim: 8, num_entities: 60, ..SynthSpec::default() };
        let out = gen_synthetic(&spec).unwrap();
        let cfg = ModelConfig { dim: 8, relations: 2, hidden: 5, ..ModelConfig::default() };
        let params = init_params(&cfg, 3, out.words.clone(), out.entities.clone()).unwrap();
        let docs = prepare_corpus(&out.corpus, &params);
        (params, docs)
    }

    #[test]
    fn lbp_prediction_matches_differentiable_forward() {
        let (params, docs) = small();
        for doc in &docs {
            let p = predict_document(&params, doc, Inference::Lbp { iterations: 10, damping: 0.5 }).unwrap();
            let mut tape = Tape::new();
            let vars = ParamVars::new(&mut tape, &params);
            let f = forward(&mut tape, &vars, &params, doc, 10, 0.5, None);
            for (r, v) in p.rho.iter().zip(&f.rho) {
                for (a, b) in r.iter().zip(tape.value(*v)) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn pad_mention_has_single_candidate() {
        let (params, docs) = small();
        let p = predict_document(&params, &docs[0], Inference::Exact).unwrap();
        assert_eq!(p.tables.len(), docs[0].mentions.len() + 1);
        assert_eq!(p.tables.local.last().unwrap(), &[0.0]);
        assert_eq!(p.beliefs.len(), docs[0].mentions.len());
    }

    #[test]
    fn pair_input_is_windowed_average() {
        let (params, docs) = small();
        let m = &docs[0].mentions[0];
        assert_eq!(m.pair_input.len(), 16);
        assert_eq!(m.context.len() % 8, 0);
    }
}
