//! Synthetic corpora with planted topical, coreferential and prior structure.
//!
//! Entities belong to topics. An entity embedding has a topic block (shared
//! by its topic, up to noise) and an identity block (its own). Entities are
//! also partitioned into ambiguity groups that cut across topics; every
//! surface string resolves to the members of one group:
//!
//! * the primary surface `n<id>` of an entity puts that entity on top of the
//!   prior list;
//! * the group surface `g<k>` ranks all members by a random popularity order.
//!
//! Within a topic, entities come in counterpart pairs whose identity blocks
//! are (nearly) negations of each other, so a diagonal relation that rewards
//! coreference cannot also reward counterparts.
//!
//! A document draws one topic, a few coreference clusters (entities mentioned
//! twice), one counterpart pair and singleton entities from it. Each mention
//! uses its primary surface, or with probability `noise` the ambiguous group
//! surface. Mentions of one cluster share a cue word just left of the
//! surface, the two counterparts share a link word just right of it. Other
//! context slots hold a few topic words, entity attribute words and filler.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{Candidate, CandidateSelector, Corpus, Document, Embeddings, Mention, PriorTable};
use crate::config::KeyValues;
use crate::error::{Error, Result};

const GROUP_SIZE: usize = 10;
const ATTRIBUTE_WORDS: usize = 3;
const TOPIC_WORDS: usize = 20;
const FILLER_WORDS: usize = 200;
const CUE_WORDS: usize = 60;
const P_ATTRIBUTE: f64 = 0.06;
const P_TOPIC: f64 = 0.05;
const PRIMARY_PRIOR: f64 = 0.55;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub num_docs: usize,
    pub tokens_per_doc: usize,
    pub num_entities: usize,
    pub mentions_per_doc: usize,
    pub coref_clusters: usize,
    pub topics: usize,
    pub dim: usize,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            num_docs: 200,
            tokens_per_doc: 160,
            num_entities: 500,
            mentions_per_doc: 8,
            coref_clusters: 3,
            topics: 10,
            dim: 32,
            noise: 0.4,
            seed: 1,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("synth spec: {m}")));
        let counts = [
            ("num_docs", self.num_docs),
            ("tokens_per_doc", self.tokens_per_doc),
            ("num_entities", self.num_entities),
            ("mentions_per_doc", self.mentions_per_doc),
            ("coref_clusters", self.coref_clusters),
            ("topics", self.topics),
        ];
        for (name, v) in counts {
            if v == 0 {
                return bad(&format!("{name} must be positive"));
            }
        }
        if self.dim < 2 {
            return bad("dim must be at least 2");
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return bad("noise must lie in [0, 1]");
        }
        if self.tokens_per_doc < 3 * self.mentions_per_doc {
            return bad("tokens_per_doc must allow at least 3 tokens per mention");
        }
        if self.num_entities < GROUP_SIZE {
            return bad(&format!("num_entities must be at least {GROUP_SIZE}"));
        }
        if self.num_entities / self.topics < self.distinct_entities_per_doc() {
            return bad("too few entities per topic for the requested mentions per document");
        }
        Ok(())
    }

    /// Coreference cluster sizes: two mentions per cluster while mentions
    /// last, then singletons.
    fn cluster_sizes(&self) -> Vec<usize> {
        let mut left = self.mentions_per_doc;
        let mut sizes = Vec::new();
        for _ in 0..self.coref_clusters {
            if left >= 2 {
                sizes.push(2);
                left -= 2;
            }
        }
        sizes.extend(std::iter::repeat(1).take(left));
        sizes
    }

    fn distinct_entities_per_doc(&self) -> usize {
        self.cluster_sizes().len()
    }

    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let mut s = Self::default();
        for (key, value) in kv.iter() {
            let v = value.as_str();
            match key.as_str() {
                "num_docs" => s.num_docs = kv.parse(key, v)?,
                "tokens_per_doc" => s.tokens_per_doc = kv.parse(key, v)?,
                "num_entities" => s.num_entities = kv.parse(key, v)?,
                "mentions_per_doc" => s.mentions_per_doc = kv.parse(key, v)?,
                "coref_clusters" => s.coref_clusters = kv.parse(key, v)?,
                "topics" => s.topics = kv.parse(key, v)?,
                "dim" => s.dim = kv.parse(key, v)?,
                "noise" => s.noise = kv.parse(key, v)?,
                "seed" => s.seed = kv.parse(key, v)?,
                other => return Err(Error::Config(format!("unknown synth key {other:?}"))),
            }
        }
        Ok(s)
    }

    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        kv.set("num_docs", self.num_docs);
        kv.set("tokens_per_doc", self.tokens_per_doc);
        kv.set("num_entities", self.num_entities);
        kv.set("mentions_per_doc", self.mentions_per_doc);
        kv.set("coref_clusters", self.coref_clusters);
        kv.set("topics", self.topics);
        kv.set("dim", self.dim);
        kv.set("noise", self.noise);
        kv.set("seed", self.seed);
        kv
    }
}

/// Everything a synthetic experiment needs.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    /// Candidates selected without gold re-insertion.
    pub corpus: Corpus,
    pub words: Embeddings,
    pub entities: Embeddings,
    pub priors: PriorTable,
}

impl SynthOutput {
    pub fn selector(&self) -> CandidateSelector<'_> {
        CandidateSelector::new(&self.priors, &self.words, &self.entities)
    }

    /// 60/20/20 train/dev/test split; the training part is re-selected with
    /// gold re-insertion.
    pub fn splits(&self) -> (Corpus, Corpus, Corpus) {
        let mut parts = self.corpus.split(&[0.6, 0.2, 0.2]).into_iter();
        let (mut train, dev, test) = (parts.next().unwrap(), parts.next().unwrap(), parts.next().unwrap());
        let sel = self.selector();
        for doc in &mut train.documents {
            sel.reselect_document(doc, true);
        }
        (train, dev, test)
    }
}

fn gaussian(rng: &mut impl Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

fn unit(mut v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    v
}

/// Jittered, normalized priors from unnormalized weights.
fn jitter(rng: &mut impl Rng, weights: &[f64], noise: f64) -> Vec<f64> {
    let w: Vec<f64> = weights.iter().map(|&p| p * (0.5 * noise * rng.sample::<f64, _>(StandardNormal)).exp()).collect();
    let z: f64 = w.iter().sum();
    // keep priors on the f32 grid like every other stored number
    w.iter().map(|p| (p / z) as f32 as f64).collect()
}

pub fn gen_synthetic(spec: &SynthSpec) -> Result<SynthOutput> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d = spec.dim;
    let topic_dim = d / 2;
    let ident_dim = d - topic_dim;

    let entity_id = |e: usize| format!("E{e:04}");
    let topic_of = |e: usize| e % spec.topics;
    // entities e and e + topics share a topic; even ranks pair with the next rank
    let counterpart = |e: usize| -> Option<usize> {
        let p = if (e / spec.topics) % 2 == 0 { e + spec.topics } else { e - spec.topics };
        (p < spec.num_entities).then_some(p)
    };

    let centers: Vec<Vec<f64>> = (0..spec.topics).map(|_| unit(gaussian(&mut rng, topic_dim, 1.0))).collect();

    let mut entities = Embeddings::new(d);
    let mut entity_vecs = Vec::with_capacity(spec.num_entities);
    let mut identities: Vec<Vec<f64>> = Vec::with_capacity(spec.num_entities);
    for e in 0..spec.num_entities {
        let jitter_t = gaussian(&mut rng, topic_dim, 0.25 / (topic_dim as f64).sqrt());
        let mut v: Vec<f64> = centers[topic_of(e)].iter().zip(&jitter_t).map(|(c, j)| 0.8 * c + j).collect();
        let ident = match counterpart(e) {
            Some(p) if p < e => {
                let noise = gaussian(&mut rng, ident_dim, 0.15 / (ident_dim as f64).sqrt());
                unit(identities[p].iter().zip(&noise).map(|(x, n)| n - x).collect())
            }
            _ => unit(gaussian(&mut rng, ident_dim, 1.0)),
        };
        v.extend(ident.iter().map(|x| 0.8 * x));
        identities.push(ident);
        let v = unit(v);
        entities.insert(entity_id(e), &v)?;
        entity_vecs.push(entities.row(e).to_vec());
    }

    let mut words = Embeddings::new(d);
    for t in 0..spec.topics {
        for w in 0..TOPIC_WORDS {
            let mut v: Vec<f64> = centers[t].iter().map(|c| c + 0.3 * rng.sample::<f64, _>(StandardNormal) / (topic_dim as f64).sqrt()).collect();
            v.extend(gaussian(&mut rng, ident_dim, 0.3 / (ident_dim as f64).sqrt()));
            words.insert(format!("t{t}_{w}"), &v)?;
        }
    }
    for (e, ev) in entity_vecs.iter().enumerate() {
        for a in 0..ATTRIBUTE_WORDS {
            let v: Vec<f64> = ev.iter().map(|x| x + 0.2 * rng.sample::<f64, _>(StandardNormal) / (d as f64).sqrt()).collect();
            words.insert(format!("a{e:04}_{a}"), &v)?;
        }
    }
    for f in 0..FILLER_WORDS {
        words.insert(format!("f{f}"), &gaussian(&mut rng, d, 0.7 / (d as f64).sqrt()))?;
    }
    for c in 0..CUE_WORDS {
        words.insert(format!("c{c}"), &unit(gaussian(&mut rng, d, 1.0)))?;
    }
    for c in 0..CUE_WORDS {
        words.insert(format!("r{c}"), &unit(gaussian(&mut rng, d, 1.0)))?;
    }

    // ambiguity groups across topics
    let mut order: Vec<usize> = (0..spec.num_entities).collect();
    order.shuffle(&mut rng);
    let mut groups: Vec<Vec<usize>> = order.chunks(GROUP_SIZE).map(<[usize]>::to_vec).collect();
    if groups.len() > 1 && groups.last().is_some_and(|g| g.len() < 2) {
        let tail = groups.pop().unwrap();
        groups.last_mut().unwrap().extend(tail);
    }
    let mut group_of = vec![0usize; spec.num_entities];
    for (k, g) in groups.iter().enumerate() {
        for &e in g {
            group_of[e] = k;
        }
    }

    let zipf = |n: usize| -> Vec<f64> { (1..=n).map(|r| 1.0 / r as f64).collect() };
    let mut priors = PriorTable::new();
    for (k, g) in groups.iter().enumerate() {
        let mut ranked = g.clone();
        ranked.shuffle(&mut rng);
        let w = jitter(&mut rng, &zipf(ranked.len()), spec.noise);
        for (&e, p) in ranked.iter().zip(w) {
            priors.insert(&format!("g{k}"), &entity_id(e), p)?;
        }
        for &e in g {
            let mut others: Vec<usize> = g.iter().copied().filter(|&o| o != e).collect();
            others.shuffle(&mut rng);
            let z: f64 = zipf(others.len()).iter().sum();
            let mut weights = vec![PRIMARY_PRIOR];
            weights.extend(zipf(others.len()).into_iter().map(|r| (1.0 - PRIMARY_PRIOR) * r / z));
            let w = jitter(&mut rng, &weights, spec.noise);
            let surface = format!("n{e:04}");
            for (&ent, p) in std::iter::once(&e).chain(&others).zip(w) {
                priors.insert(&surface, &entity_id(ent), p)?;
            }
        }
    }

    let per_topic: Vec<Vec<usize>> =
        (0..spec.topics).map(|t| (0..spec.num_entities).filter(|&e| topic_of(e) == t).collect()).collect();
    let seg_len = spec.tokens_per_doc / spec.mentions_per_doc;
    let sizes = spec.cluster_sizes();

    let mut docs = Vec::with_capacity(spec.num_docs);
    for di in 0..spec.num_docs {
        let topic = rng.gen_range(0..spec.topics);
        let singles = sizes.iter().filter(|&&s| s == 1).count();
        let pair = if singles >= 2 {
            let paired: Vec<usize> = per_topic[topic].iter().copied().filter(|&e| counterpart(e).is_some()).collect();
            paired.choose(&mut rng).map(|&a| (a, counterpart(a).unwrap()))
        } else {
            None
        };
        let pool: Vec<usize> =
            per_topic[topic].iter().copied().filter(|&e| pair.map_or(true, |(a, b)| e != a && e != b)).collect();
        let mut golds = pool.choose_multiple(&mut rng, sizes.len() - 2 * pair.is_some() as usize).copied();
        // (entity, left cue, right link)
        let mut slots: Vec<(usize, Option<usize>, Option<usize>)> = Vec::new();
        for &size in sizes.iter().filter(|&&s| s > 1) {
            let (e, cue) = (golds.next().unwrap(), rng.gen_range(0..CUE_WORDS));
            slots.extend(std::iter::repeat((e, Some(cue), None)).take(size));
        }
        if let Some((a, b)) = pair {
            let link = rng.gen_range(0..CUE_WORDS);
            slots.extend([(a, None, Some(link)), (b, None, Some(link))]);
        }
        slots.extend(golds.map(|e| (e, None, None)));
        slots.shuffle(&mut rng);

        let mut tokens = Vec::with_capacity(spec.tokens_per_doc);
        let mut mentions = Vec::with_capacity(slots.len());
        for &(e, cue, link) in &slots {
            let base = tokens.len();
            let at = seg_len / 2;
            for pos in 0..seg_len {
                if pos == at {
                    continue;
                }
                let r: f64 = rng.gen();
                let w = if r < P_ATTRIBUTE {
                    format!("a{e:04}_{}", rng.gen_range(0..ATTRIBUTE_WORDS))
                } else if r < P_ATTRIBUTE + P_TOPIC {
                    format!("t{topic}_{}", rng.gen_range(0..TOPIC_WORDS))
                } else {
                    format!("f{}", rng.gen_range(0..FILLER_WORDS))
                };
                tokens.push(w);
            }
            let surface = if rng.gen::<f64>() < spec.noise { format!("g{}", group_of[e]) } else { format!("n{e:04}") };
            tokens.insert(base + at, surface.clone());
            // at >= 1 and at + 1 < seg_len because seg_len >= 3
            if let Some(c) = cue {
                tokens[base + at - 1] = format!("c{c}");
            }
            if let Some(r) = link {
                tokens[base + at + 1] = format!("r{r}");
            }
            mentions.push(Mention {
                start: base + at,
                end: base + at + 1,
                surface,
                gold: Some(entity_id(e)),
                candidates: Vec::<Candidate>::new(),
            });
        }
        docs.push(Document { doc_id: format!("doc{di:04}"), tokens, mentions });
    }

    let mut corpus = Corpus::new(docs);
    let selector = CandidateSelector::new(&priors, &words, &entities);
    for doc in &mut corpus.documents {
        selector.reselect_document(doc, false);
    }
    Ok(SynthOutput { corpus, words, entities, priors })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthSpec {
        SynthSpec { num_docs: 12, num_entities: 100, dim: 8, ..SynthSpec::default() }
    }

    #[test]
    fn same_seed_gives_identical_output() {
        let a = gen_synthetic(&small()).unwrap();
        let b = gen_synthetic(&small()).unwrap();
        assert_eq!(a.corpus.to_jsonl(), b.corpus.to_jsonl());
        assert_eq!(a, b);
        let c = gen_synthetic(&SynthSpec { seed: 2, ..small() }).unwrap();
        assert_ne!(a.corpus.to_jsonl(), c.corpus.to_jsonl());
    }

    #[test]
    fn zero_noise_puts_gold_on_top_of_every_prior_list() {
        let out = gen_synthetic(&SynthSpec { noise: 0.0, ..small() }).unwrap();
        for m in out.corpus.documents.iter().flat_map(|d| &d.mentions) {
            assert_eq!(m.gold_index(), Some(0), "{m:?}");
        }
    }

    #[test]
    fn generated_mentions_respect_invariants() {
        let out = gen_synthetic(&small()).unwrap();
        for doc in &out.corpus.documents {
            assert_eq!(doc.mentions.len(), 8);
            for m in &doc.mentions {
                assert!(m.end <= doc.tokens.len());
                assert!(!m.candidates.is_empty() && m.candidates.len() <= super::super::MAX_CANDIDATES);
                assert!(m.candidates.iter().all(|c| (0.0..=1.0).contains(&c.prior)));
            }
        }
        // the jsonl form passes the loader's validation
        let text = out.corpus.to_jsonl();
        let back = Corpus::from_reader(text.as_bytes(), std::path::Path::new("synth")).unwrap();
        assert_eq!(back, out.corpus);
    }

    #[test]
    fn training_split_always_contains_gold() {
        let out = gen_synthetic(&small()).unwrap();
        let (train, dev, test) = out.splits();
        assert_eq!(train.len() + dev.len() + test.len(), 12);
        assert_eq!(train.unlinkable_mentions(), 0);
    }

    #[test]
    fn counterparts_share_a_link_and_oppose_in_identity() {
        let spec = small();
        let out = gen_synthetic(&spec).unwrap();
        let half = spec.dim / 2;
        for doc in &out.corpus.documents {
            let linked: Vec<&Mention> =
                doc.mentions.iter().filter(|m| doc.tokens[m.end].starts_with('r')).collect();
            assert_eq!(linked.len(), 2, "{}", doc.doc_id);
            assert_eq!(doc.tokens[linked[0].end], doc.tokens[linked[1].end]);
            let ident = |m: &Mention| out.entities.get(m.gold.as_deref().unwrap()).unwrap()[half..].to_vec();
            let (a, b) = (ident(linked[0]), ident(linked[1]));
            let cos = a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>()
                / (a.iter().map(|x| x * x).sum::<f64>() * b.iter().map(|x| x * x).sum::<f64>()).sqrt();
            assert!(cos < -0.8, "{cos}");
        }
    }

    #[test]
    fn rejects_invalid_specs() {
        assert!(gen_synthetic(&SynthSpec { num_docs: 0, ..small() }).is_err());
        assert!(gen_synthetic(&SynthSpec { noise: 1.5, ..small() }).is_err());
        assert!(gen_synthetic(&SynthSpec { tokens_per_doc: 10, ..small() }).is_err());
    }
}
