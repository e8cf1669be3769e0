//! Ranking loss, relation diversity regularizer, Adam, the epoch loop with
//! early stopping, and finite-difference gradient checking.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Var};
use crate::config::KeyValues;
use crate::corpus::{Corpus, Embeddings};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_prepared, EvalMode};
use crate::model::{forward, prepare_corpus, ParamVars, PreparedDoc, PreparedMention};
use crate::params::{init_params, ModelConfig, ModelParams, GROUP_NAMES};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Hinge margin γ.
    pub margin: f64,
    pub lr_initial: f64,
    pub lr_reduced: f64,
    /// Dev F1 at which the learning rate drops; `None` means prior-only dev
    /// F1 plus one point.
    pub dev_f1_switch: Option<f64>,
    pub patience: usize,
    pub max_epochs: usize,
    /// Weight on pairwise distances between relation diagonals `R_k`.
    pub lambda1: f64,
    /// Weight on pairwise distances between attention diagonals `D_k`.
    pub lambda2: f64,
    pub lbp_iters: usize,
    pub damping: f64,
    pub dropout: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            margin: 0.01,
            lr_initial: 1e-4,
            lr_reduced: 1e-5,
            dev_f1_switch: None,
            patience: 20,
            max_epochs: 200,
            lambda1: -1e-7,
            lambda2: -1e-7,
            lbp_iters: 10,
            damping: 0.5,
            dropout: 0.3,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin > 0.0) {
            return Err(Error::Config("margin must be positive".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be at least 1".into()));
        }
        if !(self.lr_initial > 0.0 && self.lr_reduced > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.damping) {
            return Err(Error::Config("damping must lie in [0, 1)".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config("dropout must lie in [0, 1)".into()));
        }
        Ok(())
    }

    pub(crate) fn apply(&mut self, kv: &KeyValues, key: &str, value: &str) -> Result<bool> {
        match key {
            "margin" => self.margin = kv.parse(key, value)?,
            "lr_initial" => self.lr_initial = kv.parse(key, value)?,
            "lr_reduced" => self.lr_reduced = kv.parse(key, value)?,
            "dev_f1_switch" => {
                self.dev_f1_switch = match value {
                    "auto" => None,
                    v => Some(kv.parse(key, v)?),
                }
            }
            "patience" => self.patience = kv.parse(key, value)?,
            "max_epochs" => self.max_epochs = kv.parse(key, value)?,
            "lambda1" => self.lambda1 = kv.parse(key, value)?,
            "lambda2" => self.lambda2 = kv.parse(key, value)?,
            "lbp_iters" => self.lbp_iters = kv.parse(key, value)?,
            "damping" => self.damping = kv.parse(key, value)?,
            "dropout" => self.dropout = kv.parse(key, value)?,
            "seed" => self.seed = kv.parse(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        kv.set("margin", self.margin);
        kv.set("lr_initial", self.lr_initial);
        kv.set("lr_reduced", self.lr_reduced);
        match self.dev_f1_switch {
            Some(v) => kv.set("dev_f1_switch", v),
            None => kv.set("dev_f1_switch", "auto"),
        }
        kv.set("patience", self.patience);
        kv.set("max_epochs", self.max_epochs);
        kv.set("lambda1", self.lambda1);
        kv.set("lambda2", self.lambda2);
        kv.set("lbp_iters", self.lbp_iters);
        kv.set("damping", self.damping);
        kv.set("dropout", self.dropout);
        kv.set("seed", self.seed);
        kv
    }
}

/// Hinge ranking loss for one mention:
/// `Σ_e max(0, γ - ρ(gold) + ρ(e))`, gold term included.
pub fn mention_loss(tape: &mut Tape, rho: Var, gold: usize, margin: f64) -> Var {
    let c = tape.dim(rho);
    let gold_rep = tape.gather(vec![(rho, gold); c]);
    let diff = tape.sub(rho, gold_rep);
    let shifted = tape.affine(diff, 1.0, margin);
    let hinge = tape.relu(shifted);
    tape.sum(hinge)
}

/// Plain-value [`mention_loss`].
pub fn ranking_loss(rho: &[f64], gold: usize, margin: f64) -> f64 {
    rho.iter().map(|&r| ((r - rho[gold]) + margin).max(0.0)).sum()
}

/// Distance between L2-normalized vectors, in `[0, 2]`. A zero vector is at
/// distance 2 from any nonzero vector and 0 from another zero vector.
pub fn dist(x: &[f64], y: &[f64]) -> f64 {
    let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    match (nx > 0.0, ny > 0.0) {
        (false, false) => 0.0,
        (true, false) | (false, true) => 2.0,
        _ => x.iter().zip(y).map(|(a, b)| (a / nx - b / ny).powi(2)).sum::<f64>().sqrt(),
    }
}

fn dist_var(tape: &mut Tape, x: Var, y: Var) -> Var {
    let zero = |v: &[f64]| v.iter().all(|&a| a == 0.0);
    let (zx, zy) = (zero(tape.value(x)), zero(tape.value(y)));
    if zx || zy {
        // the zero-vector convention is locally constant
        return tape.constant(&[if zx && zy { 0.0 } else { 2.0 }]);
    }
    let ux = tape.normalize(x);
    let uy = tape.normalize(y);
    let diff = tape.sub(ux, uy);
    let sq = tape.dot(diff, diff);
    tape.sqrt(sq)
}

/// `λ1 Σ_{i<j} dist(R_i, R_j) + λ2 Σ_{i<j} dist(D_i, D_j)` on the tape.
pub fn regularizer_graph(tape: &mut Tape, rel_rows: &[Var], attn_rows: &[Var], lambda1: f64, lambda2: f64) -> Option<Var> {
    let mut terms = Vec::new();
    for (rows, lambda) in [(rel_rows, lambda1), (attn_rows, lambda2)] {
        if lambda == 0.0 {
            continue;
        }
        for i in 0..rows.len() {
            for j in i + 1..rows.len() {
                terms.push((dist_var(tape, rows[i], rows[j]), lambda));
            }
        }
    }
    (!terms.is_empty()).then(|| tape.lincomb(terms))
}

/// Sum of `dist` over all pairs of rows of a `K × d` matrix.
pub fn pairwise_dist_sum(rows: &[f64], k: usize) -> f64 {
    let d = rows.len() / k.max(1);
    let mut total = 0.0;
    for i in 0..k {
        for j in i + 1..k {
            total += dist(&rows[i * d..(i + 1) * d], &rows[j * d..(j + 1) * d]);
        }
    }
    total
}

/// Mean `dist(R_i, R_j)` over relation pairs; 0 for a single relation.
pub fn mean_relation_dist(params: &ModelParams) -> f64 {
    let k = params.config.relations;
    if k < 2 {
        return 0.0;
    }
    pairwise_dist_sum(&params.rel.data, k) / (k * (k - 1) / 2) as f64
}

/// Plain-value regularizer for the current parameters.
pub fn diversity_regularizer(params: &ModelParams, lambda1: f64, lambda2: f64) -> f64 {
    let k = params.config.relations;
    lambda1 * pairwise_dist_sum(&params.rel.data, k) + lambda2 * pairwise_dist_sum(&params.rel_attn.data, k)
}

/// Records the training objective for one document: the ranking loss over
/// mentions whose gold is among the candidates, plus the regularizer.
/// Returns `(objective, ranking part)`; `None` when nothing is scored.
pub fn document_objective(
    tape: &mut Tape,
    vars: &ParamVars,
    params: &ModelParams,
    doc: &PreparedDoc,
    cfg: &TrainConfig,
    drop: Option<(f64, &mut dyn rand::RngCore)>,
) -> Option<(Var, Var)> {
    let out = forward(tape, vars, params, doc, cfg.lbp_iters, cfg.damping, drop);
    let losses: Vec<Var> = doc
        .mentions
        .iter()
        .zip(&out.rho)
        .filter_map(|(m, &rho)| m.gold.map(|g| mention_loss(tape, rho, g, cfg.margin)))
        .collect();
    if losses.is_empty() {
        return None;
    }
    let ranking = tape.sum_all(&losses);
    let total = match regularizer_graph(tape, &vars.rel_rows, &vars.rel_attn_rows, cfg.lambda1, cfg.lambda2) {
        Some(r) => tape.add(ranking, r),
        None => ranking,
    };
    Some((total, ranking))
}

/// Objective value and per-group gradients for one document. `mask_seed`
/// turns dropout on with a mask stream that is identical on every call.
pub fn loss_and_gradients(
    params: &ModelParams,
    doc: &PreparedDoc,
    cfg: &TrainConfig,
    mask_seed: Option<u64>,
) -> Result<Option<(f64, Vec<Vec<f64>>, Vec<usize>)>> {
    let mut tape = Tape::new();
    let vars = ParamVars::new(&mut tape, params);
    let mut rng = ChaCha8Rng::seed_from_u64(mask_seed.unwrap_or(0));
    let drop = mask_seed.map(|_| (cfg.dropout, &mut rng as &mut dyn rand::RngCore));
    let Some((loss, _)) = document_objective(&mut tape, &vars, params, doc, cfg, drop) else {
        return Ok(None);
    };
    let grads = tape.backward(loss)?;
    let per_group = params
        .groups()
        .iter()
        .zip(vars.groups)
        .map(|((_, t), v)| grads.get(v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; t.len()]))
        .collect();
    Ok(Some((tape.scalar(loss), per_group, tape.decisions())))
}

/// Adam with bias correction. Parameters are kept on the f32 grid after
/// every step so checkpoints reload exactly.
#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(params: &ModelParams) -> Self {
        let zeros: Vec<Vec<f64>> = params.groups().iter().map(|(_, t)| vec![0.0; t.len()]).collect();
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: zeros.clone(), v: zeros }
    }

    pub fn update(&mut self, params: &mut ModelParams, grads: &[Vec<f64>], lr: f64) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (gi, (_, tensor)) in params.groups_mut().into_iter().enumerate() {
            let (m, v) = (&mut self.m[gi], &mut self.v[gi]);
            for (k, x) in tensor.data.iter_mut().enumerate() {
                let g = grads[gi][k];
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g;
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g * g;
                let mhat = m[k] / c1;
                let vhat = v[k] / c2;
                *x -= lr * mhat / (vhat.sqrt() + self.eps);
            }
            tensor.round_to_f32();
        }
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Summed objective over the epoch's updates.
    pub loss: f64,
    pub dev_f1: f64,
    /// Learning rate used during this epoch.
    pub lr: f64,
    pub seconds: f64,
}

pub const LOG_HEADER: &str = "epoch,loss,dev_f1,lr,seconds";

impl EpochLog {
    pub fn csv_line(&self) -> String {
        format!("{},{},{},{},{:.3}", self.epoch, self.loss, self.dev_f1, self.lr, self.seconds)
    }

    /// The line without the wall-clock column.
    pub fn deterministic_part(&self) -> String {
        format!("{},{},{},{}", self.epoch, self.loss, self.dev_f1, self.lr)
    }
}

pub fn log_csv(log: &[EpochLog]) -> String {
    let mut s = String::from(LOG_HEADER);
    s.push('\n');
    for e in log {
        s.push_str(&e.csv_line());
        s.push('\n');
    }
    s
}

#[derive(Debug, Clone)]
pub struct FitResult {
    /// Parameters from the epoch with the best dev F1.
    pub params: ModelParams,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_dev_f1: f64,
    /// Dev F1 at which the learning rate was reduced.
    pub switch_threshold: f64,
    /// Training mentions left out of the loss (gold missing from candidates).
    pub skipped_mentions: usize,
    /// Updates abandoned because of a non-finite value.
    pub aborted_steps: Vec<String>,
}

/// Separate streams so dropout and shuffling never perturb each other.
fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Trains `params` on `train`, early-stopping on `dev` micro-F1.
pub fn fit(params: ModelParams, train: &Corpus, dev: &Corpus, cfg: &TrainConfig) -> Result<FitResult> {
    fit_with(params, train, dev, cfg, |_| {})
}

/// [`fit`] with a callback after every epoch.
pub fn fit_with(
    mut params: ModelParams,
    train: &Corpus,
    dev: &Corpus,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<FitResult> {
    cfg.validate()?;
    if train.scored_mentions() == 0 {
        return Err(Error::Invalid("training corpus has no scored mentions".into()));
    }
    let train_docs = prepare_corpus(train, &params);
    let dev_docs = prepare_corpus(dev, &params);
    let skipped_mentions = train.mention_count() - train.scored_mentions();
    let switch_threshold = match cfg.dev_f1_switch {
        Some(v) => v,
        None => evaluate_prepared(&params, &dev_docs, EvalMode::PriorOnly)?.micro_f1.unwrap_or(0.0) + 0.01,
    };

    let mut drop_rng = stream(cfg.seed, 1);
    let mut shuffle_rng = stream(cfg.seed, 2);
    let mut adam = Adam::new(&params);
    let mut lr = cfg.lr_initial;
    let mut order: Vec<usize> = (0..train_docs.len()).collect();
    let mut log = Vec::new();
    let mut best = (params.clone(), 0usize, f64::NEG_INFINITY);
    let mut stale = 0;
    let mut aborted_steps = Vec::new();

    for epoch in 1..=cfg.max_epochs {
        let started = Instant::now();
        order.shuffle(&mut shuffle_rng);
        let mut loss = 0.0;
        for &d in &order {
            let doc = &train_docs[d];
            let mut tape = Tape::new();
            let vars = ParamVars::new(&mut tape, &params);
            let drop = (cfg.dropout > 0.0).then_some((cfg.dropout, &mut drop_rng as &mut dyn rand::RngCore));
            let Some((objective, _)) = document_objective(&mut tape, &vars, &params, doc, cfg, drop) else {
                continue;
            };
            match tape.backward(objective) {
                Ok(grads) => {
                    loss += tape.scalar(objective);
                    let g: Vec<Vec<f64>> = params
                        .groups()
                        .iter()
                        .zip(vars.groups)
                        .map(|((_, t), v)| grads.get(v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; t.len()]))
                        .collect();
                    adam.update(&mut params, &g, lr);
                }
                Err(e) => aborted_steps.push(format!("epoch {epoch}, document {}: {e}", doc.doc_id)),
            }
        }
        let dev_f1 = evaluate_prepared(
            &params,
            &dev_docs,
            EvalMode::Lbp { iterations: cfg.lbp_iters, damping: cfg.damping },
        )?
        .micro_f1
        .unwrap_or(0.0);
        let entry = EpochLog { epoch, loss, dev_f1, lr, seconds: started.elapsed().as_secs_f64() };
        on_epoch(&entry);
        log.push(entry);

        if lr == cfg.lr_initial && dev_f1 >= switch_threshold {
            lr = cfg.lr_reduced;
        }
        if dev_f1 > best.2 {
            best = (params.clone(), epoch, dev_f1);
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    let (params, best_epoch, best_dev_f1) = best;
    Ok(FitResult { params, log, best_epoch, best_dev_f1, switch_threshold, skipped_mentions, aborted_steps })
}

/// Ranking loss (no regularizer, no dropout) summed over a corpus, with the
/// number of mentions it covers.
pub fn corpus_ranking_loss(params: &ModelParams, corpus: &Corpus, cfg: &TrainConfig) -> (f64, usize) {
    let docs = prepare_corpus(corpus, params);
    let mut total = 0.0;
    let mut scored = 0;
    for doc in &docs {
        let mut tape = Tape::new();
        let vars = ParamVars::new(&mut tape, params);
        let out = forward(&mut tape, &vars, params, doc, cfg.lbp_iters, cfg.damping, None);
        for (m, &rho) in doc.mentions.iter().zip(&out.rho) {
            if let Some(g) = m.gold {
                total += ranking_loss(tape.value(rho), g, cfg.margin);
                scored += 1;
            }
        }
    }
    (total, scored)
}

/// Finite-difference comparison for one parameter group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupCheck {
    pub name: &'static str,
    pub checked: usize,
    /// Coordinates skipped because a perturbation changed a branch choice.
    pub kinks: usize,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub groups: Vec<GroupCheck>,
}

impl GradCheck {
    pub fn max_rel_error(&self) -> f64 {
        self.groups.iter().map(|g| g.max_rel_error).fold(0.0, f64::max)
    }

    pub fn kinks(&self) -> usize {
        self.groups.iter().map(|g| g.kinks).sum()
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error() < tol
    }
}

/// Which coordinates of each group to perturb.
#[derive(Debug, Clone, Copy)]
pub enum Coordinates {
    All,
    /// Up to this many per group, chosen with the given seed.
    Sample { per_group: usize, seed: u64 },
}

/// Compares the analytic gradient with central differences,
/// `|analytic - numeric| / max(1, |numeric|)` per coordinate.
pub fn gradient_check(
    params: &ModelParams,
    doc: &PreparedDoc,
    cfg: &TrainConfig,
    eps: f64,
    coords: Coordinates,
    mask_seed: Option<u64>,
) -> Result<GradCheck> {
    let Some((_, analytic, base_sig)) = loss_and_gradients(params, doc, cfg, mask_seed)? else {
        return Err(Error::Invalid("document has no scored mentions".into()));
    };
    let eval = |p: &ModelParams| -> Result<(f64, Vec<usize>)> {
        let (l, _, sig) = loss_and_gradients(p, doc, cfg, mask_seed)?.expect("scored mentions");
        Ok((l, sig))
    };
    let mut sample_rng = match coords {
        Coordinates::Sample { seed, .. } => Some(ChaCha8Rng::seed_from_u64(seed)),
        Coordinates::All => None,
    };
    let mut work = params.clone();
    let mut groups = Vec::new();
    for (gi, name) in GROUP_NAMES.iter().enumerate() {
        let len = analytic[gi].len();
        let picks: Vec<usize> = match (&mut sample_rng, coords) {
            (Some(rng), Coordinates::Sample { per_group, .. }) if per_group < len => {
                rand::seq::index::sample(rng, len, per_group).into_vec()
            }
            _ => (0..len).collect(),
        };
        let mut check = GroupCheck { name, checked: 0, kinks: 0, max_rel_error: 0.0 };
        for k in picks {
            let orig = work.groups()[gi].1.data[k];
            work.groups_mut()[gi].1.data[k] = orig + eps;
            let (up, sig_up) = eval(&work)?;
            work.groups_mut()[gi].1.data[k] = orig - eps;
            let (down, sig_down) = eval(&work)?;
            work.groups_mut()[gi].1.data[k] = orig;
            if sig_up != base_sig || sig_down != base_sig {
                check.kinks += 1;
                continue;
            }
            let numeric = (up - down) / (2.0 * eps);
            let err = (analytic[gi][k] - numeric).abs() / numeric.abs().max(1.0);
            check.max_rel_error = check.max_rel_error.max(err);
            check.checked += 1;
        }
        groups.push(check);
    }
    Ok(GradCheck { groups })
}

/// A random small instance for gradient checking: `n` mentions with 2 to 4
/// candidates each, random context, and parameters pushed away from their
/// structured initial values.
pub fn random_instance(config: &ModelConfig, n: usize, seed: u64) -> Result<(ModelParams, PreparedDoc)> {
    let d = config.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = init_params(config, seed, Embeddings::new(d), Embeddings::new(d))?;
    for (_, t) in params.groups_mut() {
        t.data.iter_mut().for_each(|x| *x += rng.gen_range(-0.3..0.3));
    }
    let mut vec = |len: usize| -> Vec<f64> { (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect() };
    let mut mentions = Vec::new();
    for i in 0..n {
        let c = 2 + i % 3;
        let candidates = vec(c * d);
        let context = vec(5 * d);
        let pair_input = vec(2 * d);
        let mut priors = vec(c).into_iter().map(f64::abs).collect::<Vec<_>>();
        let z: f64 = priors.iter().sum();
        priors.iter_mut().for_each(|p| *p /= z);
        mentions.push(PreparedMention {
            mention: i,
            entity_ids: (0..c).map(|e| format!("E{i}_{e}")).collect(),
            candidates,
            priors,
            gold: Some(i % c),
            context,
            pair_input,
        });
    }
    Ok((params, PreparedDoc { doc_id: format!("gradcheck-{seed}"), mentions, skipped: Vec::new() }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{gen_synthetic, SynthSpec};
    use crate::params::Mode;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn hinge_arithmetic() {
        assert_relative_eq!(ranking_loss(&[0.5, 0.6], 0, 0.01), 0.12, epsilon = 1e-12);
        assert_eq!(ranking_loss(&[0.9, 0.1, 0.5], 0, 0.01), 0.01);
        // gold 1: terms (0.3-0.4+0.1)=0, 0.1 self, (0.45-0.4+0.1)=0.15
        assert_relative_eq!(ranking_loss(&[0.3, 0.4, 0.45], 1, 0.1), 0.25, epsilon = 1e-12);
        let mut t = Tape::new();
        let r = t.leaf(vec![0.3, 0.4, 0.45]);
        let l = mention_loss(&mut t, r, 1, 0.1);
        assert_relative_eq!(t.scalar(l), 0.25, epsilon = 1e-12);
    }

    #[test]
    fn hinge_kink_has_zero_gradient() {
        let mut t = Tape::new();
        let r = t.leaf(vec![0.0, -0.01]);
        let l = mention_loss(&mut t, r, 0, 0.01);
        let g = t.backward(l).unwrap();
        assert_eq!(g.get(r).unwrap(), &[0.0, 0.0]);
    }

    #[test]
    fn dist_cases() {
        assert_eq!(dist(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert_relative_eq!(dist(&[1.0, 2.0], &[-1.0, -2.0]), 2.0, epsilon = 1e-15);
        assert_relative_eq!(dist(&[1.0, 0.0], &[0.0, 1.0]), 2f64.sqrt());
        assert_eq!(dist(&[0.0, 0.0], &[0.0, 1.0]), 2.0);
        assert_eq!(dist(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
    }

    fn params_with(k: usize, rel: Vec<f64>, attn: Vec<f64>) -> ModelParams {
        let cfg = ModelConfig { dim: 2, relations: k, hidden: 2, mode: Mode::RelNorm, ..ModelConfig::default() };
        let mut p = init_params(&cfg, 0, Embeddings::new(2), Embeddings::new(2)).unwrap();
        p.rel.data = rel;
        p.rel_attn.data = attn;
        p
    }

    #[test]
    fn regularizer_cases() {
        assert_eq!(diversity_regularizer(&params_with(1, vec![1.0, 2.0], vec![3.0, 1.0]), -1e-7, -1e-7), 0.0);
        let same = params_with(2, vec![1.0, 2.0, 1.0, 2.0], vec![0.5, 0.5, 0.5, 0.5]);
        assert_eq!(diversity_regularizer(&same, -1e-7, -1e-7), 0.0);
        let spread = params_with(2, vec![1.0, 2.0, -1.0, -2.0], vec![1.0, 0.0, 0.0, 1.0]);
        assert_relative_eq!(diversity_regularizer(&spread, -1e-7, -1e-7), -1e-7 * (2.0 + 2f64.sqrt()), epsilon = 1e-20);

        let mut t = Tape::new();
        let rows: Vec<Var> = [[1.0, 2.0], [-1.0, -2.0]].iter().map(|r| t.constant(r)).collect();
        let attn: Vec<Var> = [[1.0, 0.0], [0.0, 1.0]].iter().map(|r| t.constant(r)).collect();
        let r = regularizer_graph(&mut t, &rows, &attn, -1e-7, -1e-7).unwrap();
        assert_relative_eq!(t.scalar(r), -1e-7 * (2.0 + 2f64.sqrt()), epsilon = 1e-20);
    }

    #[test]
    fn adam_zero_gradient_and_sign() {
        let mut p = params_with(2, vec![1.0, 2.0, -1.0, 0.5], vec![0.0; 4]);
        let before = p.clone();
        let mut adam = Adam::new(&p);
        let zeros: Vec<Vec<f64>> = p.groups().iter().map(|(_, t)| vec![0.0; t.len()]).collect();
        adam.update(&mut p, &zeros, 1e-3);
        assert_eq!(adam.step, 1);
        assert_eq!(p.rel, before.rel);

        let mut g = zeros.clone();
        g[2] = vec![0.5, -2.0, 1e-3, 0.0];
        adam.update(&mut p, &g, 1e-3);
        assert!(p.rel.data[0] < 1.0 && p.rel.data[1] > 2.0 && p.rel.data[2] < -1.0);
        assert_eq!(p.rel.data[3], 0.5);
    }

    #[test]
    fn adam_constant_gradient_steps_approach_lr() {
        let mut p = params_with(1, vec![0.0, 0.0], vec![0.0; 2]);
        let mut adam = Adam::new(&p);
        let mut g: Vec<Vec<f64>> = p.groups().iter().map(|(_, t)| vec![0.0; t.len()]).collect();
        g[2] = vec![3.0, -0.2];
        let lr = 1e-2;
        let mut last = p.rel.data.clone();
        for _ in 0..500 {
            adam.update(&mut p, &g, lr);
            let step: Vec<f64> = p.rel.data.iter().zip(&last).map(|(a, b)| (a - b).abs()).collect();
            last = p.rel.data.clone();
            for s in step {
                assert!((s - lr).abs() < 1e-4 * lr.max(1.0) + 1e-6);
            }
        }
    }

    #[test]
    fn config_round_trips_and_validates() {
        let cfg = TrainConfig { dev_f1_switch: Some(0.9), ..TrainConfig::default() };
        let kv = cfg.to_key_values();
        let mut back = TrainConfig::default();
        for (k, v) in kv.iter() {
            assert!(back.apply(&kv, k, v).unwrap());
        }
        assert_eq!(back, cfg);
        assert!(TrainConfig { margin: 0.0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { patience: 0, ..TrainConfig::default() }.validate().is_err());
    }

    fn gradcheck_model() -> ModelConfig {
        ModelConfig { dim: 8, relations: 2, hidden: 6, ..ModelConfig::default() }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for mode in [Mode::MentNorm, Mode::RelNorm] {
            let cfg = ModelConfig { mode, ..gradcheck_model() };
            let (params, doc) = random_instance(&cfg, 3, 11).unwrap();
            let tc = TrainConfig { lambda1: -0.05, lambda2: -0.05, ..TrainConfig::default() };
            let check = gradient_check(&params, &doc, &tc, 1e-4, Coordinates::All, None).unwrap();
            assert!(check.passes(1e-3), "{mode}: {check:?}");
            let sizes = params.groups().map(|(_, t)| t.len());
            assert!(check.groups.iter().zip(sizes).all(|(g, n)| n == 0 || g.checked > 0));
        }
    }

    #[test]
    fn gradient_matches_under_fixed_dropout_mask() {
        let (params, doc) = random_instance(&gradcheck_model(), 3, 5).unwrap();
        let check = gradient_check(&params, &doc, &TrainConfig::default(), 1e-4, Coordinates::All, Some(99)).unwrap();
        assert!(check.passes(1e-3), "{check:?}");
    }

    fn tiny_corpus(noise: f64) -> (crate::corpus::SynthOutput, ModelConfig) {
        let spec = SynthSpec { num_docs: 10, dim: 8, num_entities: 60, tokens_per_doc: 60, mentions_per_doc: 4, noise, ..SynthSpec::default() };
        let out = gen_synthetic(&spec).unwrap();
        (out, ModelConfig { dim: 8, relations: 2, hidden: 4, ..ModelConfig::default() })
    }

    #[test]
    fn patience_one_with_flat_dev_stops_after_two_epochs() {
        let (out, mc) = tiny_corpus(0.4);
        let params = init_params(&mc, 1, out.words.clone(), out.entities.clone()).unwrap();
        // an empty dev set keeps dev F1 constant
        let cfg = TrainConfig { patience: 1, ..TrainConfig::default() };
        let r = fit(params, &out.corpus, &Corpus::default(), &cfg).unwrap();
        assert_eq!(r.log.len(), 2);
    }

    #[test]
    fn zero_switch_reduces_lr_after_first_epoch() {
        let (out, mc) = tiny_corpus(0.4);
        let params = init_params(&mc, 1, out.words.clone(), out.entities.clone()).unwrap();
        let cfg = TrainConfig { dev_f1_switch: Some(0.0), patience: 1, ..TrainConfig::default() };
        let r = fit(params, &out.corpus, &Corpus::default(), &cfg).unwrap();
        assert_eq!(r.log[0].lr, 1e-4);
        assert_eq!(r.log[1].lr, 1e-5);
    }

    #[test]
    fn empty_training_corpus_is_rejected() {
        let (out, mc) = tiny_corpus(0.4);
        let params = init_params(&mc, 1, out.words.clone(), out.entities.clone()).unwrap();
        assert!(fit(params, &Corpus::default(), &out.corpus, &TrainConfig::default()).is_err());
    }

    proptest! {
        #[test]
        fn regularizer_step_does_not_shrink_distances(
            rows in prop::collection::vec(-2.0f64..2.0, 3 * 4),
            step in 1e-3f64..1e-1,
        ) {
            let k = 3;
            let norms_ok = rows.chunks(4).all(|r| r.iter().map(|x| x * x).sum::<f64>() > 1e-2);
            prop_assume!(norms_ok);
            let mut t = Tape::new();
            let vars: Vec<Var> = rows.chunks(4).map(|r| t.constant(r)).collect();
            let reg = regularizer_graph(&mut t, &vars, &[], -1.0, 0.0).unwrap();
            let g = t.backward(reg).unwrap();
            let moved: Vec<f64> = vars
                .iter()
                .flat_map(|&v| {
                    let grad = g.get(v).map(<[f64]>::to_vec).unwrap_or(vec![0.0; 4]);
                    t.value(v).iter().zip(grad).map(|(x, gx)| x - step * gx).collect::<Vec<_>>()
                })
                .collect();
            prop_assert!(pairwise_dist_sum(&moved, k) >= pairwise_dist_sum(&rows, k) - 1e-9);
        }

        #[test]
        fn ranking_loss_floor(rho in prop::collection::vec(-1.0f64..1.0, 1..7), gold_raw in 0usize..7) {
            let gold = gold_raw % rho.len();
            let l = ranking_loss(&rho, gold, 0.01);
            prop_assert!(l >= 0.01);
            let wins = rho.iter().enumerate().all(|(e, &r)| e == gold || rho[gold] - r >= 0.01);
            prop_assert_eq!(wins, (l - 0.01).abs() < 1e-15);
        }
    }
}
