use super::{sort_candidates, Candidate, Document, Embeddings, Mention, PriorTable};

/// Candidates considered before pruning.
pub const PRE_CANDIDATES: usize = 30;
/// Kept by highest prior.
pub const KEEP_BY_PRIOR: usize = 4;
/// Kept by highest context score `eᵀ Σ w`.
pub const KEEP_BY_CONTEXT: usize = 3;
/// Total context window in tokens, split evenly left and right of the mention.
pub const CONTEXT_WINDOW: usize = 50;

/// Prunes a prior table's candidate list down to at most seven entries.
#[derive(Debug, Clone, Copy)]
pub struct CandidateSelector<'a> {
    pub priors: &'a PriorTable,
    pub words: &'a Embeddings,
    pub entities: &'a Embeddings,
    pub window: usize,
}

impl<'a> CandidateSelector<'a> {
    pub fn new(priors: &'a PriorTable, words: &'a Embeddings, entities: &'a Embeddings) -> Self {
        Self { priors, words, entities, window: CONTEXT_WINDOW }
    }

    /// Sum of the embeddings of known words in the window around `[start, end)`.
    pub fn context_vector(&self, tokens: &[String], start: usize, end: usize) -> Vec<f64> {
        let half = self.window / 2;
        let left = start.saturating_sub(half)..start;
        let right = end..(end + half).min(tokens.len());
        let mut sum = vec![0.0; self.words.dim()];
        for t in left.chain(right) {
            if let Some(w) = self.words.get(&tokens[t]) {
                for (s, v) in sum.iter_mut().zip(w) {
                    *s += v;
                }
            }
        }
        sum
    }

    /// Selects candidates for a span. With `reinsert_gold`, a gold entity
    /// known to the prior table but pruned here replaces the lowest-ranked
    /// kept candidate.
    pub fn select(
        &self,
        tokens: &[String],
        start: usize,
        end: usize,
        surface: &str,
        reinsert_gold: Option<&str>,
    ) -> Vec<Candidate> {
        let Some(all) = self.priors.get(surface) else { return Vec::new() };
        let mut pool = all.to_vec();
        sort_candidates(&mut pool);
        pool.truncate(PRE_CANDIDATES);

        let mut kept: Vec<Candidate> = pool.iter().take(KEEP_BY_PRIOR).cloned().collect();

        let ctx = self.context_vector(tokens, start, end);
        let mut by_context: Vec<(f64, &Candidate)> = pool
            .iter()
            .filter_map(|c| {
                let e = self.entities.get(&c.entity)?;
                Some((e.iter().zip(&ctx).map(|(a, b)| a * b).sum(), c))
            })
            .collect();
        by_context.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.entity.cmp(&b.1.entity)));
        for (_, c) in by_context.into_iter().take(KEEP_BY_CONTEXT) {
            if !kept.iter().any(|k| k.entity == c.entity) {
                kept.push(c.clone());
            }
        }
        sort_candidates(&mut kept);

        if let Some(gold) = reinsert_gold {
            if !kept.iter().any(|c| c.entity == gold) {
                if let Some(g) = all.iter().find(|c| c.entity == gold) {
                    kept.pop();
                    kept.push(g.clone());
                    sort_candidates(&mut kept);
                }
            }
        }
        kept
    }

    /// Re-runs selection for every mention of `doc` in place.
    pub fn reselect_document(&self, doc: &mut Document, reinsert_gold: bool) {
        let tokens = &doc.tokens;
        for m in doc.mentions.iter_mut() {
            m.candidates = self.select(tokens, m.start, m.end, &m.surface, gold_if(m, reinsert_gold));
        }
    }
}

fn gold_if(m: &Mention, reinsert: bool) -> Option<&str> {
    if reinsert {
        m.gold.as_deref()
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(ws: &[&str]) -> Vec<String> {
        ws.iter().map(|s| s.to_string()).collect()
    }

    fn table(n: usize, d: usize) -> (PriorTable, Embeddings) {
        let mut priors = PriorTable::new();
        let mut ents = Embeddings::new(d);
        for i in 0..n {
            let id = format!("E{i:02}");
            priors.insert("s", &id, 0.5 / (i + 1) as f64).unwrap();
            let mut v = vec![0.0; d];
            v[i % d] = 1.0;
            ents.insert(id, &v).unwrap();
        }
        (priors, ents)
    }

    #[test]
    fn keeps_at_most_seven_from_disjoint_sets() {
        let (priors, ents) = table(30, 30);
        // context points at entities 20, 21, 22 which are far down the prior list
        let mut words = Embeddings::new(30);
        for (w, i) in [("x", 20), ("y", 21), ("z", 22)] {
            let mut v = vec![0.0; 30];
            v[i] = 1.0 + i as f64 * 0.01;
            words.insert(w.into(), &v).unwrap();
        }
        let sel = CandidateSelector::new(&priors, &words, &ents);
        let out = sel.select(&toks(&["x", "y", "z", "s"]), 3, 4, "s", None);
        let ids: Vec<_> = out.iter().map(|c| c.entity.as_str()).collect();
        assert_eq!(ids, ["E00", "E01", "E02", "E03", "E20", "E21", "E22"]);
    }

    #[test]
    fn fewer_than_limits_returns_everything() {
        let (priors, ents) = table(2, 4);
        let words = Embeddings::new(4);
        let out = CandidateSelector::new(&priors, &words, &ents).select(&toks(&["s"]), 0, 1, "s", None);
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn unknown_surface_gives_no_candidates() {
        let (priors, ents) = table(2, 4);
        let words = Embeddings::new(4);
        let sel = CandidateSelector::new(&priors, &words, &ents);
        assert!(sel.select(&toks(&["q"]), 0, 1, "q", Some("E00")).is_empty());
    }

    #[test]
    fn context_score_rescues_entity_outside_prior_top_four() {
        // d = 4. Priors rank A > B > C > D > E > F. Context words:
        //   w1 = (1, 0, 0, 0), w2 = (0, 2, 0, 0)  so Σw = (1, 2, 0, 0).
        // Entity vectors and eᵀΣw by hand:
        //   A (0,0,1,0) -> 0     B (0,0,0,1) -> 0     C (0,0,1,1) -> 0
        //   D (0,0,0,2) -> 0     E (1,0,0,0) -> 1     F (0,1,0,0) -> 2
        // Context top-3: F (2), E (1), then a zero tie broken by id: A.
        // Union with prior top-4 {A, B, C, D} = {A, B, C, D, E, F}.
        let mut priors = PriorTable::new();
        let mut ents = Embeddings::new(4);
        let rows = [
            ("A", 0.30, [0., 0., 1., 0.]),
            ("B", 0.25, [0., 0., 0., 1.]),
            ("C", 0.20, [0., 0., 1., 1.]),
            ("D", 0.15, [0., 0., 0., 2.]),
            ("E", 0.06, [1., 0., 0., 0.]),
            ("F", 0.04, [0., 1., 0., 0.]),
        ];
        for (id, p, v) in rows {
            priors.insert("m", id, p).unwrap();
            ents.insert(id.into(), &v).unwrap();
        }
        let mut words = Embeddings::new(4);
        words.insert("w1".into(), &[1., 0., 0., 0.]).unwrap();
        words.insert("w2".into(), &[0., 2., 0., 0.]).unwrap();
        let sel = CandidateSelector::new(&priors, &words, &ents);
        let ctx = sel.context_vector(&toks(&["w1", "m", "w2"]), 1, 2);
        assert_eq!(ctx, [1., 2., 0., 0.]);
        let out = sel.select(&toks(&["w1", "m", "w2"]), 1, 2, "m", None);
        let ids: Vec<_> = out.iter().map(|c| c.entity.as_str()).collect();
        assert_eq!(ids, ["A", "B", "C", "D", "E", "F"]);
    }

    #[test]
    fn pruned_gold_replaces_lowest_ranked_when_training() {
        let (priors, ents) = table(12, 12);
        let words = Embeddings::new(12);
        let sel = CandidateSelector::new(&priors, &words, &ents);
        let t = toks(&["s"]);
        let honest = sel.select(&t, 0, 1, "s", None);
        assert!(!honest.iter().any(|c| c.entity == "E11"));
        let train = sel.select(&t, 0, 1, "s", Some("E11"));
        assert_eq!(train.len(), honest.len());
        assert_eq!(train.last().unwrap().entity, "E11");
        assert_eq!(&train[..honest.len() - 1], &honest[..honest.len() - 1]);
    }

    proptest! {
        #[test]
        fn selection_ignores_insertion_order(perm in Just((0..30usize).collect::<Vec<_>>()).prop_shuffle(),
                                             ctx_seed in 0u64..1000) {
            let d = 6;
            let mut priors = PriorTable::new();
            let mut ents = Embeddings::new(d);
            let mut rev_priors = PriorTable::new();
            // coarse priors force ties that only the id order can break
            for &i in &perm {
                let id = format!("E{i:02}");
                let p = ((i % 5) as f64 + 1.0) / 10.0;
                priors.insert("s", &id, p).unwrap();
            }
            for i in (0..30usize).rev() {
                let id = format!("E{i:02}");
                rev_priors.insert("s", &id, ((i % 5) as f64 + 1.0) / 10.0).unwrap();
                let v: Vec<f64> = (0..d).map(|t| (((i * 7 + t * 3) as u64 + ctx_seed) % 5) as f64 - 2.0).collect();
                ents.insert(id, &v).unwrap();
            }
            let mut words = Embeddings::new(d);
            words.insert("w".into(), &[1.0, -1.0, 0.5, 0.0, 2.0, 1.0]).unwrap();
            let t = toks(&["w", "s"]);
            let a = CandidateSelector::new(&priors, &words, &ents).select(&t, 1, 2, "s", None);
            let b = CandidateSelector::new(&rev_priors, &words, &ents).select(&t, 1, 2, "s", None);
            prop_assert_eq!(a, b);
        }
    }
}
