//! The relation classifier: embeddings, stacked LSTM, enriched attention, softmax output.

mod check;
mod checkpoint;
mod hyper;
mod layers;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use check::{gradient_check, random_tiny_setup};
pub use hyper::{FeatureSet, HyperParams, Variant};
pub use layers::{
    additive_attention, attention_weights, build_global_feature, dot_attention, encode_sdp,
    lstm_forward, lstm_layer, AdditiveParams, AttentionNodes, DotParams, EncodingNodes,
    LstmWeights,
};

use crate::corpus::{link_entities, EmbeddingTable, EntityKb, Instance, Vocabulary, NIL_LABEL};
use crate::depfeat::{
    assemble_local_features, distance_bucket, position_bucket, shortest_dependency_path,
};
use crate::error::{Error, Result};
use crate::numcore::{softmax, NodeId, ParamId, ParamSet, Tape, Tensor};

/// Symbol tables. Tag, type and label inventories are closed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabs {
    pub words: Vocabulary,
    pub pos: Vocabulary,
    pub ner: Vocabulary,
    pub types: Vocabulary,
    /// Output classes, nil first.
    pub labels: Vec<String>,
}

impl Vocabs {
    /// Word vocabulary by frequency, tags and labels from every instance of `train`.
    pub fn build(train: &[Instance], min_freq: usize) -> Self {
        let words = crate::corpus::build_vocab(train, min_freq);
        let pos = Vocabulary::from_items(train.iter().flat_map(|i| i.tokens.iter().map(|t| t.pos.as_str())));
        let ner = Vocabulary::from_items(train.iter().flat_map(|i| i.tokens.iter().map(|t| t.ner.as_str())));
        let types = Vocabulary::from_items(
            train
                .iter()
                .flat_map(|i| [i.subj_type.as_str(), i.obj_type.as_str()]),
        );
        let mut rest: Vec<String> = train
            .iter()
            .map(|i| i.label().to_string())
            .filter(|l| l != NIL_LABEL)
            .collect();
        rest.sort();
        rest.dedup();
        let mut labels = vec![NIL_LABEL.to_string()];
        labels.extend(rest);
        Vocabs {
            words,
            pos,
            ner,
            types,
            labels,
        }
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

fn closed_lookup(v: &Vocabulary, kind: &'static str, s: &str) -> Result<usize> {
    match v.get(s) {
        Some(i) if i != Vocabulary::PAD && i != Vocabulary::UNK => Ok(i),
        _ => Err(Error::Unknown {
            kind,
            value: s.to_string(),
        }),
    }
}

/// Parameter handles for every weight group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamIds {
    pub word: ParamId,
    pub extra_word: Option<ParamId>,
    pub pos: ParamId,
    pub ner: ParamId,
    pub position: ParamId,
    pub distance: ParamId,
    pub types: ParamId,
    pub sentence: Vec<LstmWeights>,
    pub sdp: LstmWeights,
    pub additive: AdditiveParams,
    pub dot: DotParams,
    pub out_w: ParamId,
    pub out_b: ParamId,
}

/// Everything except the parameter values: dimensions, symbol tables and handles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub hp: HyperParams,
    pub variant: Variant,
    /// Features the parameter shapes were built for.
    pub features: FeatureSet,
    pub vocabs: Vocabs,
    pub ids: ParamIds,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Model {
    pub arch: Architecture,
    pub params: ParamSet,
}

/// Optional pretrained tables supplied at construction.
#[derive(Debug, Clone, Default)]
pub struct InitOptions {
    pub seed: u64,
    /// `|words| × word_dim` table, e.g. from `load_pretrained_vectors`.
    pub word_vectors: Option<EmbeddingTable>,
    /// `|words| × extra_word_dim` frozen second channel.
    pub extra_vectors: Option<EmbeddingTable>,
}

struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    fn uniform(&mut self, rows: usize, cols: usize, bound: f64) -> Tensor {
        Tensor::from_fn(rows, cols, |_, _| self.rng.gen_range(-bound..=bound))
    }

    fn weight(&mut self, rows: usize, cols: usize) -> Tensor {
        self.uniform(rows, cols, 1.0 / (rows as f64).sqrt())
    }

    /// Unit-variance uniform rows.
    fn table(&mut self, rows: usize, cols: usize, pad: bool) -> Tensor {
        let mut t = self.uniform(rows, cols, 3f64.sqrt());
        if pad && rows > 0 {
            t.row_mut(0).fill(0.0);
        }
        t
    }

    fn lstm(&mut self, ps: &mut ParamSet, name: &str, input: usize, hidden: usize) -> LstmWeights {
        let mut bias = Tensor::zeros(1, 4 * hidden);
        bias.row_mut(0)[hidden..2 * hidden].fill(1.0);
        LstmWeights {
            input: ps.add(format!("{name}.w_x"), self.weight(input, 4 * hidden)),
            recurrent: ps.add(format!("{name}.w_h"), self.weight(hidden, 4 * hidden)),
            bias: ps.add(format!("{name}.b"), bias),
            hidden,
        }
    }
}

fn check_table(t: &EmbeddingTable, rows: usize, cols: usize, what: &str) -> Result<()> {
    if t.rows() != rows || t.dim() != cols {
        return Err(Error::Config(format!(
            "{what} table is {}x{}, expected {rows}x{cols}",
            t.rows(),
            t.dim()
        )));
    }
    Ok(())
}

impl Model {
    /// Fresh parameters for `features`. Weights are uniform in ±1/√fan-in,
    /// forget-gate biases start at 1 and random embeddings are uniform in ±√3
    /// (unit variance).
    pub fn new(
        hp: HyperParams,
        variant: Variant,
        features: FeatureSet,
        vocabs: Vocabs,
        init: InitOptions,
    ) -> Result<Self> {
        hp.validate()?;
        if vocabs.labels.len() < 2 {
            return Err(Error::Config("need at least two output classes".into()));
        }
        let mut rng = Init {
            rng: ChaCha8Rng::seed_from_u64(init.seed),
        };
        let mut ps = ParamSet::new();
        let nw = vocabs.words.len();

        let word_table = match init.word_vectors {
            Some(t) => {
                check_table(&t, nw, hp.word_dim, "word")?;
                t.matrix
            }
            None => rng.table(nw, hp.word_dim, true),
        };
        let word = ps.add_with("emb.word", word_table, true, true);
        let extra_word = match (hp.extra_word_dim, init.extra_vectors) {
            (0, None) => None,
            (0, Some(_)) => {
                return Err(Error::Config("extra vectors given but extra_word_dim = 0".into()))
            }
            (d, Some(t)) => {
                check_table(&t, nw, d, "extra word")?;
                Some(ps.add_with("emb.extra_word", t.matrix, false, true))
            }
            (d, None) => {
                return Err(Error::Config(format!(
                    "extra_word_dim = {d} but no extra vectors supplied"
                )))
            }
        };
        let pos = ps.add_with("emb.pos", rng.table(vocabs.pos.len(), hp.pos_dim, true), true, true);
        let ner = ps.add_with("emb.ner", rng.table(vocabs.ner.len(), hp.ner_dim, true), true, true);
        let position = ps.add("emb.position", rng.table(hp.position_rows(), hp.position_dim, false));
        let distance = ps.add("emb.distance", rng.table(hp.distance_rows(), hp.distance_dim, false));
        let types = ps.add_with("emb.type", rng.table(vocabs.types.len(), hp.type_dim, true), true, true);

        let mut sentence = Vec::with_capacity(hp.layers);
        for l in 0..hp.layers {
            let input = if l == 0 { hp.input_dim() } else { hp.hidden };
            sentence.push(rng.lstm(&mut ps, &format!("lstm{l}"), input, hp.hidden));
        }
        let sdp = rng.lstm(&mut ps, "sdp_lstm", hp.word_dim, hp.sdp_hidden);

        let a = hp.attention_hidden;
        let (ld, gd) = (hp.local_dim(features), hp.global_dim(features));
        let additive = AdditiveParams {
            v: ps.add("att.v", rng.weight(a, 1)),
            w_h: ps.add("att.w_h", rng.weight(hp.hidden, a)),
            w_q: ps.add("att.w_q", rng.weight(hp.hidden, a)),
            w_s: ps.add("att.w_s", rng.weight(hp.position_dim, a)),
            w_o: ps.add("att.w_o", rng.weight(hp.position_dim, a)),
            w_l: (ld > 0).then(|| ps.add("att.w_l", rng.weight(ld, a))),
            w_g: (gd > 0).then(|| ps.add("att.w_g", rng.weight(gd, a))),
        };
        let dot = DotParams {
            w_q: ps.add("att.wq_dot", rng.weight(hp.hidden, hp.key_dim())),
            w_k: ps.add("att.wk_dot", rng.weight(hp.hidden, hp.key_dim())),
            w_v: ps.add("att.wv_dot", rng.weight(hp.hidden, hp.hidden)),
        };
        let classes = vocabs.labels.len();
        let out_w = ps.add("out.w", rng.weight(hp.hidden, classes));
        let out_b = ps.add("out.b", Tensor::zeros(1, classes));

        Ok(Model {
            arch: Architecture {
                hp,
                variant,
                features,
                vocabs,
                ids: ParamIds {
                    word,
                    extra_word,
                    pos,
                    ner,
                    position,
                    distance,
                    types,
                    sentence,
                    sdp,
                    additive,
                    dot,
                    out_w,
                    out_b,
                },
            },
            params: ps,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.arch.vocabs.labels.len()
    }

    pub fn prepare(&self, inst: &Instance, kb: Option<&EntityKb>) -> Result<PreparedInstance> {
        self.arch.prepare(inst, kb)
    }

    /// Class probabilities and attention weights with dropout off.
    pub fn predict(&self, prep: &PreparedInstance) -> Result<Prediction> {
        self.predict_with(prep, self.arch.variant, self.arch.features)
    }

    pub fn predict_with(
        &self,
        prep: &PreparedInstance,
        variant: Variant,
        features: FeatureSet,
    ) -> Result<Prediction> {
        let mut tape = Tape::new(&self.params, 0);
        let opts = GraphOptions {
            variant,
            features,
            dropout: 0.0,
            words: None,
        };
        let out = self.arch.build_graph(&mut tape, prep, &opts)?;
        Ok(Prediction {
            probs: softmax(tape.value(out.logits).data()),
            alpha: tape.value(out.attention.weights).data().to_vec(),
        })
    }
}

/// Model inputs for one instance, as table indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparedInstance {
    pub id: String,
    pub words: Vec<usize>,
    pub pos: Vec<usize>,
    pub ner: Vec<usize>,
    pub pos_subj: Vec<usize>,
    pub pos_obj: Vec<usize>,
    pub dist_subj: Vec<usize>,
    pub dist_obj: Vec<usize>,
    pub on_path: Vec<u8>,
    /// Path tokens, in order from subject head to object head.
    pub path: Vec<usize>,
    pub subj_type: usize,
    pub obj_type: usize,
    pub entity_vectors: Option<(Vec<f64>, Vec<f64>)>,
    /// Gold class; `None` when the label is outside the model's label set.
    pub gold: Option<usize>,
}

impl PreparedInstance {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub probs: Vec<f64>,
    pub alpha: Vec<f64>,
}

impl Prediction {
    /// Index of the largest probability, lowest index on ties.
    pub fn argmax(&self) -> usize {
        argmax(&self.probs)
    }
}

pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Per-call switches for graph construction.
#[derive(Debug, Clone, Copy)]
pub struct GraphOptions<'a> {
    pub variant: Variant,
    /// Features active for this pass; must be a subset of the built ones.
    pub features: FeatureSet,
    pub dropout: f64,
    /// Replacement word indices (after word dropout).
    pub words: Option<&'a [usize]>,
}

#[derive(Debug, Clone, Copy)]
pub struct ForwardNodes {
    pub inputs: NodeId,
    pub encoding: EncodingNodes,
    pub local: Option<NodeId>,
    pub global: Option<NodeId>,
    pub attention: AttentionNodes,
    /// `1 × classes` unnormalized scores.
    pub logits: NodeId,
}

impl Architecture {
    pub fn prepare(&self, inst: &Instance, kb: Option<&EntityKb>) -> Result<PreparedInstance> {
        inst.validate()?;
        let v = &self.vocabs;
        let hp = &self.hp;
        let wrap = |e: Error| Error::invalid(&inst.id, e.to_string());
        let words = inst
            .tokens
            .iter()
            .map(|t| v.words.index_or_unk(&t.form))
            .collect();
        let pos = inst
            .tokens
            .iter()
            .map(|t| closed_lookup(&v.pos, "POS tag", &t.pos))
            .collect::<Result<Vec<_>>>()
            .map_err(wrap)?;
        let ner = inst
            .tokens
            .iter()
            .map(|t| closed_lookup(&v.ner, "NER tag", &t.ner))
            .collect::<Result<Vec<_>>>()
            .map_err(wrap)?;
        let subj_type = closed_lookup(&v.types, "entity type", &inst.subj_type).map_err(wrap)?;
        let obj_type = closed_lookup(&v.types, "entity type", &inst.obj_type).map_err(wrap)?;
        let gold = v.label_index(inst.label());

        let tree = inst.tree()?;
        let local = assemble_local_features(&tree, inst.subj, inst.obj, hp.dist_mode).map_err(wrap)?;
        let path = shortest_dependency_path(&tree, inst.subj, inst.obj).map_err(wrap)?;
        let entity_vectors = if self.features.wiki {
            let kb = kb.ok_or_else(|| {
                Error::Config("the wiki feature needs an entity knowledge base".into())
            })?;
            if kb.dim() != hp.wiki_dim {
                return Err(Error::Config(format!(
                    "entity vectors have dim {}, model expects {}",
                    kb.dim(),
                    hp.wiki_dim
                )));
            }
            Some(link_entities(inst, kb).map_err(wrap)?)
        } else {
            None
        };

        Ok(PreparedInstance {
            id: inst.id.clone(),
            words,
            pos,
            ner,
            pos_subj: local.pos_subj.iter().map(|&p| position_bucket(p, hp.max_pos)).collect(),
            pos_obj: local.pos_obj.iter().map(|&p| position_bucket(p, hp.max_pos)).collect(),
            dist_subj: local.dist_subj.iter().map(|&d| distance_bucket(d, hp.max_dist)).collect(),
            dist_obj: local.dist_obj.iter().map(|&d| distance_bucket(d, hp.max_dist)).collect(),
            on_path: local.on_path,
            path: path.tokens().to_vec(),
            subj_type,
            obj_type,
            entity_vectors,
            gold,
        })
    }

    /// `[word; extra; pos; ner]` per token (`n × input_dim`).
    pub fn embed_tokens(&self, tape: &mut Tape<'_>, prep: &PreparedInstance, words: &[usize]) -> Result<NodeId> {
        let ids = &self.ids;
        let mut parts = Vec::with_capacity(4);
        let wt = tape.param(ids.word);
        parts.push(tape.lookup(wt, words)?);
        if let Some(extra) = ids.extra_word {
            let et = tape.param(extra);
            parts.push(tape.lookup(et, &prep.words)?);
        }
        let pt = tape.param(ids.pos);
        parts.push(tape.lookup(pt, &prep.pos)?);
        let nt = tape.param(ids.ner);
        parts.push(tape.lookup(nt, &prep.ner)?);
        tape.concat_cols(&parts)
    }

    /// `l_i = [d^subj_i; d^obj_i; f_i]`, with disabled blocks zeroed.
    fn local_features(
        &self,
        tape: &mut Tape<'_>,
        prep: &PreparedInstance,
        on: FeatureSet,
    ) -> Result<Option<NodeId>> {
        let built = self.features;
        if !built.has_local() {
            return Ok(None);
        }
        let n = prep.len();
        let d = self.hp.distance_dim;
        let mut parts = Vec::new();
        if built.dist {
            if on.dist {
                let table = tape.param(self.ids.distance);
                parts.push(tape.lookup(table, &prep.dist_subj)?);
                parts.push(tape.lookup(table, &prep.dist_obj)?);
            } else {
                parts.push(tape.input(Tensor::zeros(n, 2 * d)));
            }
        }
        if built.flag {
            let flags = if on.flag {
                Tensor::from_vec(n, 1, prep.on_path.iter().map(|&f| f64::from(f)).collect())
            } else {
                Tensor::zeros(n, 1)
            };
            parts.push(tape.input(flags));
        }
        tape.concat_cols(&parts).map(Some)
    }

    /// `g = [s; t¹; t²; e¹; e²]` over the built parts, with disabled blocks zeroed.
    fn global_feature(
        &self,
        tape: &mut Tape<'_>,
        prep: &PreparedInstance,
        words: &[usize],
        on: FeatureSet,
    ) -> Result<Option<NodeId>> {
        let built = self.features;
        let hp = &self.hp;
        let mut s = None;
        let mut types = None;
        let mut wiki = None;
        if built.sdp {
            s = Some(if on.sdp {
                let table = tape.param(self.ids.word);
                let path_words: Vec<usize> = prep.path.iter().map(|&t| words[t]).collect();
                encode_sdp(tape, table, &path_words, &self.ids.sdp)?
            } else {
                tape.input(Tensor::zeros(1, hp.sdp_hidden))
            });
        }
        if built.types {
            types = Some(if on.types {
                let table = tape.param(self.ids.types);
                let both = tape.lookup(table, &[prep.subj_type, prep.obj_type])?;
                let t1 = tape.row(both, 0)?;
                let t2 = tape.row(both, 1)?;
                tape.concat_cols(&[t1, t2])?
            } else {
                tape.input(Tensor::zeros(1, 2 * hp.type_dim))
            });
        }
        if built.wiki {
            let mut data = vec![0.0; 2 * hp.wiki_dim];
            if on.wiki {
                let (e1, e2) = prep.entity_vectors.as_ref().ok_or_else(|| {
                    Error::invalid(&prep.id, "wiki feature enabled but no entity vectors prepared")
                })?;
                data[..hp.wiki_dim].copy_from_slice(e1);
                data[hp.wiki_dim..].copy_from_slice(e2);
            }
            wiki = Some(tape.input(Tensor::row_vector(data)));
        }
        build_global_feature(tape, &[s, types, wiki])
    }

    /// Records the full forward pass and returns the relevant nodes.
    pub fn build_graph(
        &self,
        tape: &mut Tape<'_>,
        prep: &PreparedInstance,
        opts: &GraphOptions<'_>,
    ) -> Result<ForwardNodes> {
        if !opts.features.is_subset_of(&self.features) {
            return Err(Error::Config(format!(
                "features {} not built into this model ({})",
                opts.features, self.features
            )));
        }
        let words = opts.words.unwrap_or(&prep.words);
        if words.len() != prep.len() {
            return Err(Error::invalid(&prep.id, "word index count differs from token count"));
        }
        let inputs = self.embed_tokens(tape, prep, words)?;
        let x = tape.dropout(inputs, opts.dropout);
        let enc = lstm_forward(tape, x, &self.ids.sentence)?;
        let states = tape.dropout(enc.states, opts.dropout);
        let n = prep.len();
        let last = tape.row(states, n - 1)?;
        let encoding = EncodingNodes { states, last };

        let local = self.local_features(tape, prep, opts.features)?;
        let global = self.global_feature(tape, prep, words, opts.features)?;
        let attention = match opts.variant {
            Variant::Additive => {
                let table = tape.param(self.ids.position);
                let ps = tape.lookup(table, &prep.pos_subj)?;
                let po = tape.lookup(table, &prep.pos_obj)?;
                additive_attention(tape, &self.ids.additive, states, last, ps, po, local, global)?
            }
            Variant::Dot => dot_attention(tape, &self.ids.dot, states, local, global)?,
        };
        let z = tape.dropout(attention.pooled, opts.dropout);
        let w = tape.param(self.ids.out_w);
        let b = tape.param(self.ids.out_b);
        let logits = tape.matmul(z, w)?;
        let logits = tape.add(logits, b)?;
        Ok(ForwardNodes {
            inputs,
            encoding,
            local,
            global,
            attention,
            logits,
        })
    }

    /// Cross-entropy loss node for a gold-labelled instance.
    pub fn loss(&self, tape: &mut Tape<'_>, prep: &PreparedInstance, opts: &GraphOptions<'_>) -> Result<NodeId> {
        let gold = prep
            .gold
            .ok_or_else(|| Error::invalid(&prep.id, "gold label is not a model class"))?;
        let out = self.build_graph(tape, prep, opts)?;
        tape.cross_entropy(out.logits, gold)
    }
}

#[cfg(test)]
mod tests;
