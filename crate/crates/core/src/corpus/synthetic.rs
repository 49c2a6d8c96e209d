//! Templated multi-entity corpora for robustness experiments.
//!
//! Each sentence chains its entities through trigger words in the dependency
//! tree, `e0 – t0 – e1 – t1 – e2 …`, so the trigger deciding the relation of
//! `(e_i, e_{i+1})` is the single interior token of their shortest path.
//! Word order is shuffled independently of the tree: sequence proximity
//! carries no information about which trigger belongs to which pair.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::pairify::{pairify, EntityMention, GoldRelation, SentenceRecord};
use super::{EntityKb, Instance, Span};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub num_instances: usize,
    pub num_relations: usize,
    pub entities_per_sentence: usize,
    pub seed: u64,
    /// Filler words per sentence are drawn from `0..=max_fillers`.
    pub max_fillers: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            num_instances: 200,
            num_relations: 4,
            entities_per_sentence: 3,
            seed: 1,
            max_fillers: 4,
        }
    }
}

const NAMES: &[&str] = &[
    "alice", "bob", "carol", "dave", "erin", "frank", "grace", "heidi", "ivan", "judy", "mallory",
    "oscar", "peggy", "rupert", "sybil", "trent", "victor", "walter", "acme", "globex", "initech",
    "umbrella", "paris", "berlin", "lagos", "lima", "oslo", "quito",
];
const FILLERS: &[(&str, &str)] = &[
    ("the", "DT"),
    ("a", "DT"),
    ("of", "IN"),
    ("in", "IN"),
    ("and", "CC"),
    ("very", "RB"),
    ("later", "RB"),
    ("new", "JJ"),
    ("old", "JJ"),
    ("report", "NN"),
    ("year", "NN"),
    ("said", "VBD"),
];
const TYPES: &[&str] = &["PER", "ORG", "LOC"];

pub fn relation_label(r: usize) -> String {
    format!("rel_{r}")
}

fn trigger_word(r: usize, variant: usize) -> String {
    format!("trig{r}{}", if variant == 0 { "a" } else { "b" })
}

struct Unit {
    forms: Vec<(String, String, String)>,
    /// Index inside `forms` of the token carrying tree edges.
    head: usize,
}

/// One sentence-level record with `entities_per_sentence` entities.
fn generate_sentence(cfg: &SyntheticConfig, rng: &mut ChaCha8Rng, id: String) -> SentenceRecord {
    let k = cfg.entities_per_sentence.max(2);
    let r_count = cfg.num_relations.max(1);

    // units: entities 0..k, triggers k..2k-1, fillers after
    let mut units: Vec<Unit> = Vec::new();
    let mut types = Vec::with_capacity(k);
    for _ in 0..k {
        let ty = TYPES[rng.gen_range(0..TYPES.len())];
        types.push(ty.to_string());
        let name = NAMES[rng.gen_range(0..NAMES.len())].to_string();
        if rng.gen_bool(0.2) {
            units.push(Unit {
                forms: vec![
                    (name, "NNP".into(), ty.into()),
                    ("jr".into(), "NNP".into(), ty.into()),
                ],
                head: 1,
            });
        } else {
            units.push(Unit {
                forms: vec![(name, "NNP".into(), ty.into())],
                head: 0,
            });
        }
    }
    let mut relations = Vec::with_capacity(k - 1);
    let mut prev: Option<usize> = None;
    for i in 0..k - 1 {
        let r = loop {
            let r = rng.gen_range(0..r_count);
            if r_count == 1 || Some(r) != prev {
                break r;
            }
        };
        prev = Some(r);
        relations.push(GoldRelation {
            subj: i,
            obj: i + 1,
            label: relation_label(r),
        });
        units.push(Unit {
            forms: vec![(trigger_word(r, rng.gen_range(0..2)), "VBD".into(), "O".into())],
            head: 0,
        });
    }
    let n_fill = rng.gen_range(0..=cfg.max_fillers);
    for _ in 0..n_fill {
        let (w, p) = FILLERS[rng.gen_range(0..FILLERS.len())];
        units.push(Unit {
            forms: vec![(w.into(), p.into(), "O".into())],
            head: 0,
        });
    }

    // unit-level tree: chain e0-t0-e1-..., rooted at a random trigger
    let n_units = units.len();
    let mut unit_parent: Vec<Option<usize>> = vec![None; n_units];
    let chain: Vec<usize> = (0..k)
        .flat_map(|i| if i + 1 < k { vec![i, k + i] } else { vec![i] })
        .collect();
    let root_pos = 2 * rng.gen_range(0..k - 1) + 1;
    for p in 0..chain.len() {
        if p < root_pos {
            unit_parent[chain[p]] = Some(chain[p + 1]);
        } else if p > root_pos {
            unit_parent[chain[p]] = Some(chain[p - 1]);
        }
    }
    for u in (2 * k - 1)..n_units {
        unit_parent[u] = Some(rng.gen_range(0..u));
    }

    let mut order: Vec<usize> = (0..n_units).collect();
    order.shuffle(rng);
    let mut start = vec![0; n_units];
    let mut tokens = Vec::new();
    let mut pos = Vec::new();
    let mut ner = Vec::new();
    for &u in &order {
        start[u] = tokens.len();
        for (f, p, e) in &units[u].forms {
            tokens.push(f.clone());
            pos.push(p.clone());
            ner.push(e.clone());
        }
    }
    let head_tok = |u: usize| start[u] + units[u].head;
    let mut dep_head = vec![-1i64; tokens.len()];
    for u in 0..n_units {
        for j in 0..units[u].forms.len() {
            let t = start[u] + j;
            dep_head[t] = if j != units[u].head {
                head_tok(u) as i64
            } else {
                unit_parent[u].map_or(-1, |p| head_tok(p) as i64)
            };
        }
    }

    let entities = (0..k)
        .map(|i| EntityMention {
            span: Span::new(start[i], start[i] + units[i].forms.len()),
            entity_type: types[i].clone(),
            kb_id: None,
        })
        .collect();
    SentenceRecord {
        id,
        tokens,
        pos,
        ner,
        dep_head,
        entities,
        relations,
    }
}

/// Sentence records until their pairs cover `num_instances`.
pub fn generate_sentences(cfg: &SyntheticConfig) -> Vec<SentenceRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let k = cfg.entities_per_sentence.max(2);
    let per = k * (k - 1) / 2;
    let n_sent = cfg.num_instances.div_ceil(per);
    (0..n_sent)
        .map(|s| generate_sentence(cfg, &mut rng, format!("syn{}-{s}", cfg.seed)))
        .collect()
}

/// Pairified synthetic instances, deterministic in `cfg.seed`.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<Vec<Instance>> {
    let mut out = Vec::with_capacity(cfg.num_instances);
    for rec in generate_sentences(cfg) {
        out.extend(pairify(&rec)?);
    }
    out.truncate(cfg.num_instances);
    Ok(out)
}

/// Seeded random entity vectors for every generated name and type page.
pub fn synthetic_entity_kb(dim: usize, seed: u64) -> EntityKb {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut kb = EntityKb::with_default_types(dim);
    let pages: Vec<String> = TYPES
        .iter()
        .filter_map(|t| kb.type_page(t).map(String::from))
        .collect();
    for key in NAMES.iter().map(|n| n.to_string()).chain(pages) {
        let v = (0..dim).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        kb.insert(&key, v);
    }
    kb
}
