//! Micro-F1 evaluation under several decoders, oracle-conditioned
//! evaluation, seed aggregation, and α / belief dumps.

use std::fmt::Write as _;

use serde::Serialize;

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::inference::{decode, LBP_DAMPING, LBP_ITERATIONS};
use crate::model::{predict_document, predict_document_oracle, prepare_corpus, Inference, PreparedDoc};
use crate::params::ModelParams;

/// Fraction of positions where prediction equals gold; `None` for an empty
/// set, where the score is undefined.
pub fn micro_f1<T: PartialEq>(predictions: &[T], golds: &[T]) -> Result<Option<f64>> {
    if predictions.len() != golds.len() {
        return Err(Error::Invalid(format!(
            "{} predictions for {} gold labels",
            predictions.len(),
            golds.len()
        )));
    }
    if golds.is_empty() {
        return Ok(None);
    }
    let correct = predictions.iter().zip(golds).filter(|(p, g)| p == g).count();
    Ok(Some(correct as f64 / golds.len() as f64))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EvalMode {
    Lbp { iterations: usize, damping: f64 },
    Exact,
    /// LBP with every other mention clamped to its gold entity.
    Oracle { iterations: usize, damping: f64 },
    /// Highest prior wins.
    PriorOnly,
}

impl EvalMode {
    pub fn lbp() -> Self {
        EvalMode::Lbp { iterations: LBP_ITERATIONS, damping: LBP_DAMPING }
    }

    pub fn oracle() -> Self {
        EvalMode::Oracle { iterations: LBP_ITERATIONS, damping: LBP_DAMPING }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            EvalMode::Lbp { .. } => "lbp",
            EvalMode::Exact => "exact",
            EvalMode::Oracle { .. } => "oracle",
            EvalMode::PriorOnly => "prior-only",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DocAccuracy {
    pub doc_id: String,
    pub correct: usize,
    pub scored: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub mode: &'static str,
    /// `None` when no mention is scored.
    pub micro_f1: Option<f64>,
    pub correct: usize,
    pub scored: usize,
    /// Mentions without candidates, left out of the graph.
    pub skipped_mentions: usize,
    /// Mentions whose gold is not among the candidates.
    pub unlinkable_mentions: usize,
    pub per_document: Vec<DocAccuracy>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Predicted candidate index per prepared mention.
pub fn predict(params: &ModelParams, doc: &PreparedDoc, mode: EvalMode) -> Result<Vec<Option<usize>>> {
    Ok(match mode {
        EvalMode::Lbp { iterations, damping } => {
            predict_document(params, doc, Inference::Lbp { iterations, damping })?.predicted
        }
        EvalMode::Exact => predict_document(params, doc, Inference::Exact)?.predicted,
        EvalMode::Oracle { iterations, damping } => predict_document_oracle(params, doc, iterations, damping),
        EvalMode::PriorOnly => {
            let priors: Vec<Vec<f64>> = doc.mentions.iter().map(|m| m.priors.clone()).collect();
            let ids: Vec<&[String]> = doc.mentions.iter().map(|m| m.entity_ids.as_slice()).collect();
            decode(&priors, &ids)
        }
    })
}

pub fn evaluate_prepared(params: &ModelParams, docs: &[PreparedDoc], mode: EvalMode) -> Result<EvalReport> {
    let mut per_document = Vec::with_capacity(docs.len());
    let (mut preds, mut golds) = (Vec::new(), Vec::new());
    let (mut skipped, mut unlinkable) = (0, 0);
    for doc in docs {
        skipped += doc.skipped.len();
        let predicted = predict(params, doc, mode)?;
        let mut acc = DocAccuracy { doc_id: doc.doc_id.clone(), correct: 0, scored: 0 };
        for (m, p) in doc.mentions.iter().zip(predicted) {
            let Some(g) = m.gold else {
                unlinkable += 1;
                continue;
            };
            acc.scored += 1;
            acc.correct += usize::from(p == Some(g));
            preds.push(p);
            golds.push(Some(g));
        }
        per_document.push(acc);
    }
    let micro = micro_f1(&preds, &golds)?;
    let correct = per_document.iter().map(|d| d.correct).sum();
    Ok(EvalReport {
        mode: mode.tag(),
        micro_f1: micro,
        correct,
        scored: golds.len(),
        skipped_mentions: skipped,
        unlinkable_mentions: unlinkable,
        per_document,
    })
}

pub fn evaluate(params: &ModelParams, corpus: &Corpus, mode: EvalMode) -> Result<EvalReport> {
    evaluate_prepared(params, &prepare_corpus(corpus, params), mode)
}

/// [`evaluate`] with every other mention clamped to gold.
pub fn oracle_eval(params: &ModelParams, corpus: &Corpus) -> Result<EvalReport> {
    evaluate(params, corpus, EvalMode::oracle())
}

/// Mean and 95% normal-approximation half-width `1.96 · s / √r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeedSummary {
    pub runs: usize,
    pub mean: f64,
    pub half_width: f64,
}

pub fn multi_seed_report(values: &[f64]) -> Result<SeedSummary> {
    let r = values.len();
    if r < 2 {
        return Err(Error::Invalid("a confidence interval needs at least two runs".into()));
    }
    let mean = values.iter().sum::<f64>() / r as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1) as f64;
    Ok(SeedSummary { runs: r, mean, half_width: 1.96 * var.sqrt() / (r as f64).sqrt() })
}

/// One row per `α_ijk`; the padding column is written as `pad`.
pub fn alpha_tsv(params: &ModelParams, corpus: &Corpus) -> Result<String> {
    let mut out = String::from("doc_id\ti\tj\tk\talpha\n");
    for doc in prepare_corpus(corpus, params) {
        let a = predict_document(params, &doc, Inference::Lbp { iterations: 1, damping: 0.0 })?.alpha;
        for i in 0..a.rows {
            for j in 0..a.cols {
                if i == j {
                    continue;
                }
                let jname = match doc.mentions.get(j) {
                    Some(m) => m.mention.to_string(),
                    None => "pad".to_string(),
                };
                for k in 0..a.relations {
                    writeln!(out, "{}\t{}\t{}\t{}\t{}", doc.doc_id, doc.mentions[i].mention, jname, k, a.get(i, j, k)).unwrap();
                }
            }
        }
    }
    Ok(out)
}

pub const HISTOGRAM_FLOOR: f64 = 0.25;
pub const HISTOGRAM_WIDTH: f64 = 0.05;

/// Counts of `α_ijk > 0.25` per relation in buckets of width 0.05.
pub fn alpha_histogram(params: &ModelParams, corpus: &Corpus) -> Result<Vec<Vec<usize>>> {
    let buckets = ((1.0 - HISTOGRAM_FLOOR) / HISTOGRAM_WIDTH).round() as usize;
    let k = params.config.relations;
    let mut counts = vec![vec![0usize; buckets]; k];
    for doc in prepare_corpus(corpus, params) {
        let a = predict_document(params, &doc, Inference::Lbp { iterations: 1, damping: 0.0 })?.alpha;
        for i in 0..a.rows {
            for j in (0..a.cols).filter(|&j| j != i) {
                for (r, row) in counts.iter_mut().enumerate() {
                    let v = a.get(i, j, r);
                    if v > HISTOGRAM_FLOOR {
                        let b = (((v - HISTOGRAM_FLOOR) / HISTOGRAM_WIDTH) as usize).min(buckets - 1);
                        row[b] += 1;
                    }
                }
            }
        }
    }
    Ok(counts)
}

pub fn histogram_tsv(counts: &[Vec<usize>]) -> String {
    let mut out = String::from("k\tbucket_low\tbucket_high\tcount\n");
    for (k, row) in counts.iter().enumerate() {
        for (b, c) in row.iter().enumerate() {
            let lo = HISTOGRAM_FLOOR + b as f64 * HISTOGRAM_WIDTH;
            writeln!(out, "{k}\t{lo:.2}\t{:.2}\t{c}", lo + HISTOGRAM_WIDTH).unwrap();
        }
    }
    out
}

/// `doc_id, mention_idx, entity, q_hat, rho` for every candidate.
pub fn beliefs_tsv(params: &ModelParams, corpus: &Corpus, inference: Inference) -> Result<String> {
    let mut out = String::from("doc_id\tmention_idx\tentity\tq_hat\trho\n");
    for doc in prepare_corpus(corpus, params) {
        let p = predict_document(params, &doc, inference)?;
        for (i, m) in doc.mentions.iter().enumerate() {
            for (e, id) in m.entity_ids.iter().enumerate() {
                writeln!(out, "{}\t{}\t{}\t{}\t{}", doc.doc_id, m.mention, id, p.beliefs.probs[i][e], p.rho[i][e]).unwrap();
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{gen_synthetic, SynthSpec};
    use crate::params::{init_params, Mode, ModelConfig};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn micro_f1_cases() {
        assert_eq!(micro_f1(&[1, 2, 3, 9], &[1, 2, 3, 4]).unwrap(), Some(0.75));
        assert_eq!(micro_f1(&["a"], &["a"]).unwrap(), Some(1.0));
        assert_eq!(micro_f1::<u8>(&[], &[]).unwrap(), None);
        assert!(micro_f1(&[1], &[1, 2]).is_err());
    }

    #[test]
    fn seed_summary_cases() {
        let s = multi_seed_report(&[0.5, 0.5, 0.5]).unwrap();
        assert_eq!((s.mean, s.half_width), (0.5, 0.0));
        let s = multi_seed_report(&[90.0, 92.0]).unwrap();
        assert_eq!(s.mean, 91.0);
        assert_relative_eq!(s.half_width, 1.96, epsilon = 1e-12);
        assert!(multi_seed_report(&[1.0]).is_err());
    }

    fn setup(noise: f64, mode: Mode) -> (ModelParams, Corpus) {
        let spec = SynthSpec { num_docs: 6, dim: 8, num_entities: 80, noise, ..SynthSpec::default() };
        let out = gen_synthetic(&spec).unwrap();
        let cfg = ModelConfig { dim: 8, relations: 2, hidden: 4, mode, ..ModelConfig::default() };
        (init_params(&cfg, 2, out.words.clone(), out.entities.clone()).unwrap(), out.corpus)
    }

    #[test]
    fn prior_only_is_perfect_without_noise() {
        let (params, corpus) = setup(0.0, Mode::MentNorm);
        let r = evaluate(&params, &corpus, EvalMode::PriorOnly).unwrap();
        assert_eq!(r.micro_f1, Some(1.0));
        assert!(r.to_json().contains("\"mode\": \"prior-only\""));
    }

    #[test]
    fn oracle_equals_lbp_without_pairwise_terms() {
        for mode in [Mode::MentNorm, Mode::RelNorm] {
            let (mut params, corpus) = setup(0.4, mode);
            params.rel.data.iter_mut().for_each(|x| *x = 0.0);
            params.pad_entity.data.iter_mut().for_each(|x| *x = 0.0);
            let docs = prepare_corpus(&corpus, &params);
            for doc in &docs {
                assert_eq!(predict(&params, doc, EvalMode::lbp()).unwrap(), predict(&params, doc, EvalMode::oracle()).unwrap());
            }
        }
    }

    #[test]
    fn histogram_covers_high_attention_only() {
        let (params, corpus) = setup(0.4, Mode::MentNorm);
        let counts = alpha_histogram(&params, &corpus).unwrap();
        assert_eq!(counts.len(), 2);
        assert_eq!(counts[0].len(), 15);
        let tsv = histogram_tsv(&counts);
        assert!(tsv.lines().nth(1).unwrap().starts_with("0\t0.25\t0.30\t"));
        let dump = alpha_tsv(&params, &corpus).unwrap();
        assert!(dump.lines().any(|l| l.split('\t').nth(2) == Some("pad")));
    }

    proptest! {
        #[test]
        fn micro_f1_is_permutation_invariant(pairs in prop::collection::vec((0u8..4, 0u8..4), 1..40), seed in 0u64..1000) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut shuffled = pairs.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let split = |v: &[(u8, u8)]| -> (Vec<u8>, Vec<u8>) { v.iter().cloned().unzip() };
            let (p1, g1) = split(&pairs);
            let (p2, g2) = split(&shuffled);
            prop_assert_eq!(micro_f1(&p1, &g1).unwrap(), micro_f1(&p2, &g2).unwrap());
        }
    }
}
