use super::*;
use crate::corpus::{generate_synthetic, SyntheticConfig};
use crate::numcore::{sigmoid, Tape};

fn corpus(n: usize) -> Vec<Instance> {
    generate_synthetic(&SyntheticConfig {
        num_instances: n,
        ..Default::default()
    })
    .unwrap()
}

fn small_hp() -> HyperParams {
    HyperParams {
        word_dim: 4,
        pos_dim: 2,
        ner_dim: 2,
        position_dim: 3,
        hidden: 5,
        attention_hidden: 4,
        distance_dim: 2,
        sdp_hidden: 3,
        type_dim: 2,
        wiki_dim: 3,
        max_pos: 6,
        max_dist: 4,
        ..Default::default()
    }
}

fn kb_for(dim: usize) -> EntityKb {
    let mut kb = EntityKb::with_default_types(dim);
    for (i, ty) in ["PER", "ORG", "LOC"].iter().enumerate() {
        let page = kb.type_page(ty).unwrap().to_string();
        kb.insert(&page, (0..dim).map(|k| (i * dim + k) as f64 * 0.1).collect());
    }
    kb
}

fn model(features: FeatureSet, variant: Variant) -> (Model, Vec<Instance>) {
    let insts = corpus(12);
    let vocabs = Vocabs::build(&insts, 1);
    let m = Model::new(
        small_hp(),
        variant,
        features,
        vocabs,
        InitOptions {
            seed: 3,
            ..Default::default()
        },
    )
    .unwrap();
    (m, insts)
}

#[test]
fn labels_put_nil_first() {
    let insts = corpus(30);
    let v = Vocabs::build(&insts, 1);
    assert_eq!(v.labels[0], NIL_LABEL);
    let mut rest = v.labels[1..].to_vec();
    rest.sort();
    assert_eq!(rest, v.labels[1..]);
}

#[test]
fn default_input_width_is_360() {
    let insts = corpus(6);
    let m = Model::new(
        HyperParams::default(),
        Variant::Additive,
        FeatureSet::none(),
        Vocabs::build(&insts, 1),
        InitOptions::default(),
    )
    .unwrap();
    let prep = m.prepare(&insts[0], None).unwrap();
    let mut tape = Tape::new(&m.params, 0);
    let x = m.arch.embed_tokens(&mut tape, &prep, &prep.words).unwrap();
    assert_eq!(tape.value(x).shape(), (insts[0].len(), 360));
}

#[test]
fn embedding_is_exact_row_concatenation() {
    let (m, insts) = model(FeatureSet::none(), Variant::Additive);
    let prep = m.prepare(&insts[1], None).unwrap();
    let mut tape = Tape::new(&m.params, 0);
    let x = m.arch.embed_tokens(&mut tape, &prep, &prep.words).unwrap();
    let x = tape.value(x);
    let ids = &m.arch.ids;
    for t in 0..prep.len() {
        let mut expect = Vec::new();
        expect.extend_from_slice(m.params.get(ids.word).row(prep.words[t]));
        expect.extend_from_slice(m.params.get(ids.pos).row(prep.pos[t]));
        expect.extend_from_slice(m.params.get(ids.ner).row(prep.ner[t]));
        assert_eq!(x.row(t), expect.as_slice());
    }
}

#[test]
fn unknown_tag_is_an_error() {
    let (m, insts) = model(FeatureSet::none(), Variant::Additive);
    let mut bad = insts[0].clone();
    bad.tokens[0].pos = "XYZ".into();
    let err = m.prepare(&bad, None).unwrap_err().to_string();
    assert!(err.contains("XYZ"), "{err}");
}

#[test]
fn probabilities_sum_to_one_for_every_configuration() {
    for variant in [Variant::Additive, Variant::Dot] {
        let (m, insts) = model(FeatureSet::all(), variant);
        let kb = kb_for(3);
        for inst in &insts {
            let prep = m.prepare(inst, Some(&kb)).unwrap();
            for on in [FeatureSet::all(), FeatureSet::none()] {
                let p = m.predict_with(&prep, variant, on).unwrap();
                assert!((p.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                assert_eq!(p.alpha.len(), prep.len());
                assert!((p.alpha.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn zero_output_weights_give_uniform_distribution() {
    let (mut m, insts) = model(FeatureSet::none(), Variant::Additive);
    let id = m.arch.ids.out_w;
    m.params.get_mut(id).data_mut().fill(0.0);
    let prep = m.prepare(&insts[0], None).unwrap();
    let p = m.predict(&prep).unwrap();
    let k = m.num_classes() as f64;
    for x in &p.probs {
        assert!((x - 1.0 / k).abs() < 1e-15);
    }
    assert_eq!(p.argmax(), 0);
}

#[test]
fn dot_attention_ignores_the_global_feature() {
    let (m, insts) = model("wiki,types,dist".parse().unwrap(), Variant::Dot);
    let kb = kb_for(3);
    let prep = m.prepare(&insts[0], Some(&kb)).unwrap();
    let mut other = prep.clone();
    other.entity_vectors = Some((vec![9.0, -4.0, 2.5], vec![0.3, 7.0, -1.0]));
    other.obj_type = if prep.obj_type == 2 { 3 } else { 2 };
    let a = m.predict(&prep).unwrap();
    let b = m.predict(&other).unwrap();
    for (x, y) in a.alpha.iter().zip(&b.alpha) {
        assert!((x - y).abs() < 1e-12);
    }
    for (x, y) in a.probs.iter().zip(&b.probs) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn additive_scores_react_to_permuted_local_features() {
    let (m, insts) = model("dist,flag".parse().unwrap(), Variant::Additive);
    let prep = m.prepare(&insts[0], None).unwrap();
    let mut perm = prep.clone();
    perm.dist_subj.reverse();
    perm.dist_obj.reverse();
    perm.on_path.reverse();
    assert_ne!(perm.dist_subj, prep.dist_subj);
    let a = m.predict(&prep).unwrap();
    let b = m.predict(&perm).unwrap();
    assert!(a.alpha.iter().zip(&b.alpha).any(|(x, y)| (x - y).abs() > 1e-9));
}

#[test]
fn disabled_groups_get_zero_gradient() {
    let (m, insts) = model(FeatureSet::all(), Variant::Additive);
    let kb = kb_for(3);
    let prep = m.prepare(&insts[0], Some(&kb)).unwrap();
    let opts = GraphOptions {
        variant: Variant::Additive,
        features: FeatureSet::none(),
        dropout: 0.0,
        words: None,
    };
    let mut tape = Tape::new(&m.params, 0);
    let loss = m.arch.loss(&mut tape, &prep, &opts).unwrap();
    let grads = tape.backward(loss).unwrap().into_params();
    let ids = &m.arch.ids;
    let zero = |id: ParamId| grads.dense(id, &m.params).data().iter().all(|&x| x == 0.0);
    for id in [ids.distance, ids.types, ids.sdp.input, ids.sdp.recurrent, ids.sdp.bias] {
        assert!(zero(id), "{}", m.params.name(id));
    }
    for id in [ids.additive.w_l.unwrap(), ids.additive.w_g.unwrap()] {
        assert!(zero(id), "{}", m.params.name(id));
    }
    for id in [ids.dot.w_q, ids.dot.w_k, ids.dot.w_v] {
        assert!(zero(id));
    }
    assert!(!zero(ids.additive.w_h));
}

#[test]
fn path_encoder_does_not_touch_sentence_lstm() {
    let (m, insts) = model("sdp".parse().unwrap(), Variant::Additive);
    let prep = m.prepare(&insts[0], None).unwrap();
    let mut tape = Tape::new(&m.params, 0);
    let table = tape.param(m.arch.ids.word);
    let s = encode_sdp(&mut tape, table, &prep.path.iter().map(|&t| prep.words[t]).collect::<Vec<_>>(), &m.arch.ids.sdp).unwrap();
    let st = tape.transpose(s);
    let loss = tape.matmul(s, st).unwrap();
    let grads = tape.backward(loss).unwrap().into_params();
    for w in &m.arch.ids.sentence {
        assert!(grads.get(w.input).is_none());
        assert!(grads.get(w.recurrent).is_none());
    }
    assert!(grads.get(m.arch.ids.sdp.input).is_some());
}

#[test]
fn zero_path_weights_give_zero_encoding() {
    let (mut m, insts) = model("sdp".parse().unwrap(), Variant::Additive);
    let w = m.arch.ids.sdp;
    for id in [w.input, w.recurrent, w.bias] {
        m.params.get_mut(id).data_mut().fill(0.0);
    }
    let prep = m.prepare(&insts[0], None).unwrap();
    let mut tape = Tape::new(&m.params, 0);
    let out = m
        .arch
        .build_graph(
            &mut tape,
            &prep,
            &GraphOptions {
                variant: Variant::Additive,
                features: "sdp".parse().unwrap(),
                dropout: 0.0,
                words: None,
            },
        )
        .unwrap();
    let g = tape.value(out.global.unwrap());
    assert_eq!(g.shape(), (1, 3));
    assert!(g.data().iter().all(|&x| x == 0.0));
}

#[test]
fn global_width_matches_enabled_parts() {
    let (m, insts) = model(FeatureSet::all(), Variant::Additive);
    let kb = kb_for(3);
    let prep = m.prepare(&insts[0], Some(&kb)).unwrap();
    let mut tape = Tape::new(&m.params, 0);
    let opts = GraphOptions {
        variant: Variant::Additive,
        features: FeatureSet::all(),
        dropout: 0.0,
        words: None,
    };
    let out = m.arch.build_graph(&mut tape, &prep, &opts).unwrap();
    // s (3) + t1, t2 (2 each) + e1, e2 (3 each)
    assert_eq!(tape.value(out.global.unwrap()).cols(), 13);
    assert_eq!(tape.value(out.local.unwrap()).cols(), 5);
    let g = tape.value(out.global.unwrap()).data();
    let (e1, e2) = prep.entity_vectors.as_ref().unwrap();
    assert_eq!(&g[7..10], e1.as_slice());
    assert_eq!(&g[10..13], e2.as_slice());
}

#[test]
fn features_beyond_the_built_set_are_rejected() {
    let (m, insts) = model(FeatureSet::none(), Variant::Additive);
    let prep = m.prepare(&insts[0], None).unwrap();
    assert!(m.predict_with(&prep, Variant::Additive, FeatureSet::all()).is_err());
}

#[test]
fn wiki_needs_a_kb() {
    let (m, insts) = model("wiki".parse().unwrap(), Variant::Additive);
    assert!(m.prepare(&insts[0], None).is_err());
}

#[test]
fn forward_is_deterministic_and_checkpoint_round_trips() {
    let (m, insts) = model(FeatureSet::all(), Variant::Additive);
    let kb = kb_for(3);
    let prep = m.prepare(&insts[2], Some(&kb)).unwrap();
    let a = m.predict(&prep).unwrap();
    assert_eq!(a, m.predict(&prep).unwrap());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    m.save(&path).unwrap();
    let back = Model::load(&path).unwrap();
    assert_eq!(back.arch, m.arch);
    assert_eq!(back.predict(&prep).unwrap(), a);
}

#[test]
fn checkpoint_with_foreign_tag_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.json");
    std::fs::write(&path, "{\"format\":\"other\"}").unwrap();
    assert!(Model::load(&path).is_err());
}

/// Every dimension 1, one LSTM layer, no features: the whole pass by hand.
#[test]
fn scalar_model_matches_straight_line_oracle() {
    let insts = corpus(3);
    let inst = &insts[0];
    let hp = HyperParams {
        word_dim: 1,
        pos_dim: 1,
        ner_dim: 1,
        position_dim: 1,
        hidden: 1,
        layers: 1,
        attention_hidden: 1,
        distance_dim: 1,
        sdp_hidden: 1,
        type_dim: 1,
        wiki_dim: 1,
        max_pos: 4,
        max_dist: 3,
        ..Default::default()
    };
    let m = Model::new(
        hp,
        Variant::Additive,
        FeatureSet::none(),
        Vocabs::build(&insts, 1),
        InitOptions {
            seed: 11,
            ..Default::default()
        },
    )
    .unwrap();
    let prep = m.prepare(inst, None).unwrap();
    let p = |id: ParamId| m.params.get(id);
    let ids = &m.arch.ids;
    let lw = ids.sentence[0];
    let n = prep.len();

    let (mut h, mut c) = (0.0, 0.0);
    let mut hs = Vec::new();
    for t in 0..n {
        let x = [
            p(ids.word).get(prep.words[t], 0),
            p(ids.pos).get(prep.pos[t], 0),
            p(ids.ner).get(prep.ner[t], 0),
        ];
        let a: Vec<f64> = (0..4)
            .map(|k| {
                (0..3).map(|j| x[j] * p(lw.input).get(j, k)).sum::<f64>()
                    + h * p(lw.recurrent).get(0, k)
                    + p(lw.bias).get(0, k)
            })
            .collect();
        let (i, f, g, o) = (sigmoid(a[0]), sigmoid(a[1]), a[2].tanh(), sigmoid(a[3]));
        c = f * c + i * g;
        h = o * c.tanh();
        hs.push(h);
    }
    let q = hs[n - 1];
    let at = &ids.additive;
    let sc = |id: ParamId| p(id).item();
    let e: Vec<f64> = (0..n)
        .map(|i| {
            let ps = p(ids.position).get(prep.pos_subj[i], 0);
            let po = p(ids.position).get(prep.pos_obj[i], 0);
            sc(at.v)
                * (sc(at.w_h) * hs[i] + sc(at.w_q) * q + sc(at.w_s) * ps + sc(at.w_o) * po).tanh()
        })
        .collect();
    let emax = e.iter().cloned().fold(f64::MIN, f64::max);
    let zs: f64 = e.iter().map(|x| (x - emax).exp()).sum();
    let alpha: Vec<f64> = e.iter().map(|x| (x - emax).exp() / zs).collect();
    let z: f64 = alpha.iter().zip(&hs).map(|(a, h)| a * h).sum();
    let logits: Vec<f64> = (0..m.num_classes())
        .map(|k| z * p(ids.out_w).get(0, k) + p(ids.out_b).get(0, k))
        .collect();
    let lmax = logits.iter().cloned().fold(f64::MIN, f64::max);
    let ls: f64 = logits.iter().map(|x| (x - lmax).exp()).sum();
    let probs: Vec<f64> = logits.iter().map(|x| (x - lmax).exp() / ls).collect();

    let got = m.predict(&prep).unwrap();
    for (g, w) in got.alpha.iter().zip(&alpha) {
        assert!((g - w).abs() < 1e-12);
    }
    for (g, w) in got.probs.iter().zip(&probs) {
        assert!((g - w).abs() < 1e-12);
    }
}
