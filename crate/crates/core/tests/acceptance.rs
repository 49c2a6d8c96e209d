//! Acceptance suite. Runs every criterion in sequence, prints one
//! `criterion N: PASS|FAIL` line each and exits non-zero if any fails.
//!
//! Set `RELATTN_TACRED_DIR` to a directory holding `train.jsonl`, `dev.jsonl`
//! and `test.jsonl` (pairified format) to run criterion 10.

use std::collections::{HashMap, VecDeque};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use relattn::corpus::{
    corpus_stats, generate_synthetic, load_corpus, synthetic_entity_kb, CorpusFormat, Instance, Span,
    SyntheticConfig, Token, NIL_LABEL,
};
use relattn::depfeat::{on_path_flags, shortest_dependency_path, tree_distance, DependencyTree};
use relattn::eval::{ensemble_vote, micro_prf, predict_corpus, robustness_bins, Axis, InstancePrediction, PredictionReport};
use relattn::model::{
    attention_weights, gradient_check, random_tiny_setup, FeatureSet, HyperParams, InitOptions, Model,
    Variant, Vocabs,
};
use relattn::numcore::REL_ERROR_FLOOR;
use relattn::train::{accuracy, evaluate_f1, train_loop, TrainConfig};

// pinned tolerances
const GRAD_TOL: f64 = 1e-4;
const GRAD_EPS: f64 = 1e-4;
const GRAD_BUDGET: Duration = Duration::from_secs(120);
const SUM_TOL: f64 = 1e-9;
const SHIFT_TOL: f64 = 1e-12;
const G_INVARIANCE_TOL: f64 = 1e-12;
const TREE_BUDGET: Duration = Duration::from_secs(30);
const OVERFIT_ACCURACY: f64 = 0.99;
const OVERFIT_BUDGET: Duration = Duration::from_secs(600);
const ROBUSTNESS_GAP: f64 = 0.10;
const TACRED_COUNT: usize = 106_264;
const TACRED_NIL_PERCENT: f64 = 79.5;
const TACRED_AVG_LEN: f64 = 36.4;
const TACRED_LEN_TOL: f64 = 0.05;

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn main() -> ExitCode {
    let criteria: [(usize, &str, fn() -> Outcome); 10] = [
        (1, "gradient fidelity", gradient_fidelity),
        (2, "attention normalization", attention_normalization),
        (3, "dot-product g-invariance", dot_g_invariance),
        (4, "graph-feature oracles", graph_feature_oracles),
        (5, "synthetic overfit", synthetic_overfit),
        (6, "multi-entity robustness", multi_entity_robustness),
        (7, "metric fixtures", metric_fixtures),
        (8, "binning", binning),
        (9, "determinism", determinism),
        (10, "TACRED statistics", tacred_statistics),
    ];
    let filter: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = 0;
    for (n, name, run) in criteria {
        if !filter.is_empty() && !filter.contains(&n) {
            continue;
        }
        let t = Instant::now();
        let (tag, detail) = match run() {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Outcome::Skip(d) => ("SKIP", d),
        };
        println!("criterion {n}: {tag} ({name}; {detail}; {:.1}s)", t.elapsed().as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

fn gradient_fidelity() -> Outcome {
    let t = Instant::now();
    let mut worst = 0.0f64;
    let mut worst_at = String::new();
    let mut checked = 0;
    for variant in [Variant::Additive, Variant::Dot] {
        for seed in 0..50 {
            let (mut model, prep) = match random_tiny_setup(seed, variant) {
                Ok(s) => s,
                Err(e) => return Outcome::Fail(format!("setup {variant} seed {seed}: {e}")),
            };
            if prep.len() > 6 || model.arch.hp.hidden > 8 {
                return Outcome::Fail(format!("{variant} seed {seed}: model exceeds tiny bounds"));
            }
            match gradient_check(&mut model, &prep, variant, FeatureSet::all(), 0.5, GRAD_EPS, seed) {
                Ok(r) => {
                    checked += r.checked;
                    if r.max_rel_error > worst {
                        worst = r.max_rel_error;
                        worst_at = format!("{variant} seed {seed} {:?}", r.worst);
                    }
                }
                Err(e) => return Outcome::Fail(format!("{variant} seed {seed}: {e}")),
            }
        }
    }
    let elapsed = t.elapsed();
    check(
        worst < GRAD_TOL && elapsed < GRAD_BUDGET,
        format!(
            "100 models, {checked} scalars, max rel error {worst:.2e} at {worst_at} (floor {REL_ERROR_FLOOR:e}), {:.1}s of {}s",
            elapsed.as_secs_f64(),
            GRAD_BUDGET.as_secs()
        ),
    )
}

fn attention_normalization() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut sum_err, mut shift_err) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let n = rng.gen_range(1..=60);
        let scale = [1.0, 10.0, 300.0][rng.gen_range(0..3)];
        let e: Vec<f64> = (0..n).map(|_| rng.gen_range(-scale..scale)).collect();
        let c = rng.gen_range(-100.0..100.0);
        let a = attention_weights(&e);
        let shifted: Vec<f64> = e.iter().map(|x| x + c).collect();
        let b = attention_weights(&shifted);
        sum_err = sum_err.max((a.iter().sum::<f64>() - 1.0).abs());
        for (x, y) in a.iter().zip(&b) {
            shift_err = shift_err.max((x - y).abs());
        }
    }
    check(
        sum_err <= SUM_TOL && shift_err <= SHIFT_TOL,
        format!("1000 vectors, max |sum-1| {sum_err:.1e}, max shift diff {shift_err:.1e}"),
    )
}

fn small_hp() -> HyperParams {
    HyperParams {
        word_dim: 8,
        pos_dim: 4,
        ner_dim: 4,
        position_dim: 3,
        hidden: 6,
        attention_hidden: 5,
        distance_dim: 3,
        sdp_hidden: 5,
        type_dim: 4,
        wiki_dim: 6,
        ..Default::default()
    }
}

fn dot_g_invariance() -> Outcome {
    let corpus = match generate_synthetic(&SyntheticConfig {
        num_instances: 30,
        ..Default::default()
    }) {
        Ok(c) => c,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    let hp = small_hp();
    let kb = synthetic_entity_kb(hp.wiki_dim, 3);
    let model = match Model::new(
        hp,
        Variant::Dot,
        FeatureSet::all(),
        Vocabs::build(&corpus, 1),
        InitOptions {
            seed: 3,
            ..Default::default()
        },
    ) {
        Ok(m) => m,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    let mut worst = 0.0f64;
    let mut moved_g = 0;
    for inst in &corpus {
        let a = model.prepare(inst, Some(&kb)).unwrap();
        let mut b = a.clone();
        // different types and entity vectors give a different g; tokens stay fixed
        b.subj_type = (a.subj_type + 1) % model.arch.vocabs.types.len().max(1);
        b.obj_type = (a.obj_type + 2) % model.arch.vocabs.types.len().max(1);
        if let Some((s, o)) = b.entity_vectors.as_mut() {
            for x in s.iter_mut().chain(o.iter_mut()) {
                *x = 3.0 * *x + 0.5;
            }
        }
        if b.subj_type != a.subj_type || b.entity_vectors != a.entity_vectors {
            moved_g += 1;
        }
        let (pa, pb) = (model.predict(&a).unwrap(), model.predict(&b).unwrap());
        for (x, y) in pa.alpha.iter().zip(&pb.alpha) {
            worst = worst.max((x - y).abs());
        }
    }
    check(
        worst <= G_INVARIANCE_TOL && moved_g == corpus.len(),
        format!("{} instance pairs with distinct g, max |alpha diff| {worst:.1e}", moved_g),
    )
}

fn random_heads(rng: &mut ChaCha8Rng, n: usize) -> Vec<i64> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut heads = vec![-1i64; n];
    for k in 1..n {
        heads[order[k]] = order[rng.gen_range(0..k)] as i64;
    }
    heads
}

fn adjacency(heads: &[i64]) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); heads.len()];
    for (i, &h) in heads.iter().enumerate() {
        if h >= 0 {
            adj[i].push(h as usize);
            adj[h as usize].push(i);
        }
    }
    adj
}

/// Single-source BFS distances and predecessors.
fn bfs(adj: &[Vec<usize>], src: usize) -> (Vec<usize>, Vec<usize>) {
    let mut dist = vec![usize::MAX; adj.len()];
    let mut prev = vec![usize::MAX; adj.len()];
    dist[src] = 0;
    let mut q = VecDeque::from([src]);
    while let Some(u) = q.pop_front() {
        for &v in &adj[u] {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                prev[v] = u;
                q.push_back(v);
            }
        }
    }
    (dist, prev)
}

fn oracle_head(heads: &[i64], span: Span) -> usize {
    let outside: Vec<usize> = span
        .indices()
        .filter(|&i| heads[i] < 0 || !span.contains(heads[i] as usize))
        .collect();
    if outside.len() == 1 {
        outside[0]
    } else {
        span.end - 1
    }
}

fn random_span(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> Span {
    let start = rng.gen_range(lo..hi);
    let end = rng.gen_range(start + 1..=hi.min(start + 3));
    Span::new(start, end)
}

fn graph_feature_oracles() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut mismatches = Vec::new();
    for trial in 0..1000 {
        let n = rng.gen_range(2..=40);
        let heads = random_heads(&mut rng, n);
        let tree = DependencyTree::new(&heads).unwrap();
        let cut = rng.gen_range(1..n);
        let (mut subj, mut obj) = (random_span(&mut rng, 0, cut), random_span(&mut rng, cut, n));
        if rng.gen_bool(0.5) {
            std::mem::swap(&mut subj, &mut obj);
        }
        let adj = adjacency(&heads);
        let from: Vec<Vec<usize>> = (0..n).map(|s| bfs(&adj, s).0).collect();
        for span in [subj, obj] {
            for tok in 0..n {
                let want = span.indices().map(|s| from[s][tok]).min().unwrap();
                if tree_distance(&tree, tok, span).unwrap() != want {
                    mismatches.push(format!("trial {trial}: distance of token {tok}"));
                }
            }
        }
        let (hs, ho) = (oracle_head(&heads, subj), oracle_head(&heads, obj));
        let (_, prev) = bfs(&adj, hs);
        let mut want = vec![ho];
        while *want.last().unwrap() != hs {
            want.push(prev[*want.last().unwrap()]);
        }
        want.reverse();
        let path = shortest_dependency_path(&tree, subj, obj).unwrap();
        if path.tokens() != want.as_slice() {
            mismatches.push(format!("trial {trial}: path {:?} vs {want:?}", path.tokens()));
        }
        let flags: Vec<u8> = (0..n).map(|i| want.contains(&i) as u8).collect();
        if on_path_flags(&path, n) != flags {
            mismatches.push(format!("trial {trial}: flags"));
        }
    }
    let elapsed = t.elapsed();
    check(
        mismatches.is_empty() && elapsed < TREE_BUDGET,
        format!(
            "1000 trees, {} mismatches{}, {:.2}s of {}s",
            mismatches.len(),
            mismatches.first().map(|m| format!(" (first: {m})")).unwrap_or_default(),
            elapsed.as_secs_f64(),
            TREE_BUDGET.as_secs()
        ),
    )
}

fn synthetic_overfit() -> Outcome {
    let t = Instant::now();
    let run = || -> relattn::Result<f64> {
        let train = generate_synthetic(&SyntheticConfig {
            num_instances: 200,
            seed: 1,
            ..Default::default()
        })?;
        let hp = HyperParams {
            hidden: 50,
            ..Default::default()
        };
        let kb = synthetic_entity_kb(hp.wiki_dim, 7);
        let model = Model::new(
            hp,
            Variant::Additive,
            FeatureSet::all(),
            Vocabs::build(&train, 1),
            InitOptions {
                seed: 1,
                ..Default::default()
            },
        )?;
        let prep = train
            .iter()
            .map(|i| model.prepare(i, Some(&kb)))
            .collect::<relattn::Result<Vec<_>>>()?;
        let cfg = TrainConfig {
            max_epochs: 50,
            ..Default::default()
        };
        let (best, _) = train_loop(model, &prep, &prep, &cfg)?;
        accuracy(&best, &prep, cfg.variant, cfg.features)
    };
    match run() {
        Ok(acc) => {
            let elapsed = t.elapsed();
            check(
                acc >= OVERFIT_ACCURACY && elapsed < OVERFIT_BUDGET,
                format!(
                    "200 instances, H=50, 50 epochs, train accuracy {acc:.4} (need {OVERFIT_ACCURACY}), {:.0}s of {}s",
                    elapsed.as_secs_f64(),
                    OVERFIT_BUDGET.as_secs()
                ),
            )
        }
        Err(e) => Outcome::Fail(e.to_string()),
    }
}

/// Every dev sentence holds at least two pairs with different gold relations.
fn multi_relation_sentences(dev: &[Instance]) -> bool {
    let mut by_sentence: HashMap<&str, Vec<&str>> = HashMap::new();
    for inst in dev {
        let sent = inst.id.rsplit_once(':').map_or(inst.id.as_str(), |(s, _)| s);
        by_sentence.entry(sent).or_default().push(inst.label());
    }
    by_sentence.values().all(|labels| {
        let mut rel: Vec<&str> = labels.iter().copied().filter(|&l| l != NIL_LABEL).collect();
        rel.sort_unstable();
        rel.dedup();
        rel.len() >= 2
    })
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    xs[(xs.len() - 1) / 2]
}

fn multi_entity_robustness() -> Outcome {
    let run = || -> relattn::Result<(f64, f64, Vec<f64>, Vec<f64>, bool)> {
        let train = generate_synthetic(&SyntheticConfig {
            num_instances: 200,
            seed: 1,
            ..Default::default()
        })?;
        let dev = generate_synthetic(&SyntheticConfig {
            num_instances: 300,
            seed: 2,
            ..Default::default()
        })?;
        let shape_ok = multi_relation_sentences(&dev);
        let hp = HyperParams {
            hidden: 50,
            attention_hidden: 25,
            sdp_hidden: 50,
            ..Default::default()
        };
        let kb = synthetic_entity_kb(hp.wiki_dim, 7);
        let vocabs = Vocabs::build(&train, 1);
        let mut arms = Vec::new();
        for features in [FeatureSet::all(), FeatureSet::none()] {
            let mut scores = Vec::new();
            for seed in 1..=5 {
                let model = Model::new(
                    hp.clone(),
                    Variant::Additive,
                    features,
                    vocabs.clone(),
                    InitOptions {
                        seed,
                        ..Default::default()
                    },
                )?;
                let tp = train
                    .iter()
                    .map(|i| model.prepare(i, Some(&kb)))
                    .collect::<relattn::Result<Vec<_>>>()?;
                let dp = dev
                    .iter()
                    .map(|i| model.prepare(i, Some(&kb)))
                    .collect::<relattn::Result<Vec<_>>>()?;
                let cfg = TrainConfig {
                    seed,
                    features,
                    ..Default::default()
                };
                let (best, _) = train_loop(model, &tp, &dp, &cfg)?;
                scores.push(evaluate_f1(&best, &dp, cfg.variant, features)?);
            }
            arms.push(scores);
        }
        let (full, ablated) = (arms[0].clone(), arms[1].clone());
        Ok((median(full.clone()), median(ablated.clone()), full, ablated, shape_ok))
    };
    match run() {
        Ok((full, ablated, fs, as_, shape_ok)) => check(
            shape_ok && full - ablated >= ROBUSTNESS_GAP,
            format!(
                "median dev F1 full {full:.3} vs ablated {ablated:.3}, gap {:.1} points (need {:.0}); full {fs:.3?}, ablated {as_:.3?}",
                100.0 * (full - ablated),
                100.0 * ROBUSTNESS_GAP
            ),
        ),
        Err(e) => Outcome::Fail(e.to_string()),
    }
}

/// Counts votes, then sums probabilities, then prefers the lower index.
fn tally_oracle(votes: &[usize], probs: &[Vec<f64>], c: usize) -> usize {
    let mut count = vec![0usize; c];
    let mut mass = vec![0.0; c];
    for (v, p) in votes.iter().zip(probs) {
        count[*v] += 1;
        for k in 0..c {
            mass[k] += p[k];
        }
    }
    let mut cands: Vec<usize> = (0..c).collect();
    cands.sort_by(|&a, &b| {
        count[b]
            .cmp(&count[a])
            .then(mass[b].total_cmp(&mass[a]))
            .then(a.cmp(&b))
    });
    cands[0]
}

fn metric_fixtures() -> Outcome {
    let labels: Vec<String> = [NIL_LABEL, "r1", "r2", "r3"].iter().map(|s| s.to_string()).collect();
    let fixture = micro_prf(&["r1", NIL_LABEL, "r2", "r1"], &["r1", "r2", NIL_LABEL, "r1"], NIL_LABEL);
    let fixture_ok = matches!(fixture, Ok(m) if m.precision == 2.0 / 3.0 && m.recall == 2.0 / 3.0)
        && matches!(micro_prf(&["r1", NIL_LABEL], &["r1", "r2"], NIL_LABEL), Ok(m) if m.precision == 1.0);
    let half = micro_prf(&["r1", NIL_LABEL, "r2"], &["r1", "r2", NIL_LABEL], NIL_LABEL);
    let half_ok = matches!(half, Ok(m) if m.precision == 0.5 && m.recall == 0.5 && m.f1 == 0.5 && (m.tp, m.fp, m.fn_) == (1, 1, 1));

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let c = labels.len();
    let mut vote_mismatch = 0;
    let mut identity_ok = true;
    for set in 0..1000 {
        let members = rng.gen_range(1..=7);
        let n = rng.gen_range(1..=5);
        let mut reports = Vec::new();
        for _ in 0..members {
            let predictions = (0..n)
                .map(|i| {
                    let raw: Vec<f64> = (0..c).map(|_| rng.gen_range(0.0..1.0)).collect();
                    let z: f64 = raw.iter().sum();
                    // coarse probabilities make exact mass ties occur
                    let probs: Vec<f64> = raw.iter().map(|x| (4.0 * x / z).round() / 4.0).collect();
                    InstancePrediction {
                        id: format!("s{set}-{i}"),
                        gold: labels[rng.gen_range(0..c)].clone(),
                        predicted: labels[rng.gen_range(0..c)].clone(),
                        probs,
                        alpha: vec![0.5, 0.5],
                    }
                })
                .collect();
            reports.push(PredictionReport {
                labels: labels.clone(),
                predictions,
                members: Vec::new(),
            });
        }
        let out = match ensemble_vote(&reports) {
            Ok(o) => o,
            Err(e) => return Outcome::Fail(format!("vote set {set}: {e}")),
        };
        for i in 0..n {
            let votes: Vec<usize> = reports
                .iter()
                .map(|r| labels.iter().position(|l| *l == r.predictions[i].predicted).unwrap())
                .collect();
            let probs: Vec<Vec<f64>> = reports.iter().map(|r| r.predictions[i].probs.clone()).collect();
            if out.predictions[i].predicted != labels[tally_oracle(&votes, &probs, c)] {
                vote_mismatch += 1;
            }
        }
        let copies = ensemble_vote(&vec![reports[0].clone(); members]).unwrap();
        for (a, b) in copies.predictions.iter().zip(&reports[0].predictions) {
            identity_ok &= a.id == b.id && a.gold == b.gold && a.predicted == b.predicted;
            identity_ok &= a.probs.iter().zip(&b.probs).all(|(x, y)| (x - y).abs() < 1e-12);
        }
    }
    check(
        fixture_ok && half_ok && vote_mismatch == 0 && identity_ok,
        format!(
            "fixtures {}, 1000 vote sets with {vote_mismatch} oracle mismatches, identity {}",
            if fixture_ok && half_ok { "exact" } else { "wrong" },
            if identity_ok { "holds" } else { "broken" }
        ),
    )
}

fn instance_of_len(id: usize, n: usize, gap: usize) -> Instance {
    let tokens = (0..n)
        .map(|i| Token {
            form: format!("w{i}"),
            pos: "NN".into(),
            ner: "O".into(),
        })
        .collect();
    let dep_head = (0..n).map(|i| i as i64 - 1).collect();
    Instance {
        id: format!("b{id}"),
        tokens,
        dep_head,
        subj: Span::new(0, 1),
        obj: Span::new(1 + gap, 2 + gap),
        subj_type: "PER".into(),
        obj_type: "ORG".into(),
        relation: None,
        subj_kb_id: None,
        obj_kb_id: None,
        entities: None,
    }
}

fn binning() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let labels = [NIL_LABEL, "r1", "r2"];
    let mut ok = true;
    let mut detail = Vec::new();
    for (axis, size) in [(Axis::SentLen, 10), (Axis::PairDist, 3)] {
        let m = 500;
        let mut instances = Vec::new();
        for i in 0..m {
            let n = rng.gen_range(2..=80);
            let gap = rng.gen_range(0..=n - 2);
            instances.push(instance_of_len(i, n, gap));
        }
        let preds: Vec<&str> = (0..m).map(|_| labels[rng.gen_range(0..3)]).collect();
        let golds: Vec<&str> = (0..m).map(|_| labels[rng.gen_range(0..3)]).collect();
        let bins = robustness_bins(&instances, &preds, &golds, axis, size, NIL_LABEL).unwrap();
        // floor-division oracle
        let mut want: HashMap<usize, usize> = HashMap::new();
        for inst in &instances {
            let v = match axis {
                Axis::SentLen => inst.len(),
                _ => inst.obj.start - inst.subj.end,
            };
            *want.entry(v / size * size).or_default() += 1;
        }
        let edges_ok = bins.len() == want.len()
            && bins
                .iter()
                .all(|b| b.hi == b.lo + size - 1 && want.get(&b.lo) == Some(&b.count));
        let global = micro_prf(&preds, &golds, NIL_LABEL).unwrap();
        let tp: usize = bins.iter().map(|b| b.metrics.tp).sum();
        let counts: usize = bins.iter().map(|b| b.count).sum();
        ok &= edges_ok && tp == global.tp && counts == m;
        detail.push(format!(
            "{axis}/{size}: {} bins, edges {}, bin TP {tp} vs global {}",
            bins.len(),
            if edges_ok { "match" } else { "differ" },
            global.tp
        ));
    }
    check(ok, detail.join("; "))
}

fn determinism() -> Outcome {
    let run = || -> relattn::Result<String> {
        let train = generate_synthetic(&SyntheticConfig {
            num_instances: 60,
            seed: 5,
            ..Default::default()
        })?;
        let dev = generate_synthetic(&SyntheticConfig {
            num_instances: 30,
            seed: 6,
            ..Default::default()
        })?;
        let hp = small_hp();
        let kb = synthetic_entity_kb(hp.wiki_dim, 5);
        let model = Model::new(
            hp,
            Variant::Additive,
            FeatureSet::all(),
            Vocabs::build(&train, 1),
            InitOptions {
                seed: 5,
                ..Default::default()
            },
        )?;
        let tp = train
            .iter()
            .map(|i| model.prepare(i, Some(&kb)))
            .collect::<relattn::Result<Vec<_>>>()?;
        let dp = dev
            .iter()
            .map(|i| model.prepare(i, Some(&kb)))
            .collect::<relattn::Result<Vec<_>>>()?;
        let cfg = TrainConfig {
            max_epochs: 3,
            batch_size: 10,
            seed: 5,
            ..Default::default()
        };
        let (best, log) = train_loop(model, &tp, &dp, &cfg)?;
        let report = predict_corpus(&best, &dev, Some(&kb))?;
        let metrics = report.metrics(NIL_LABEL)?;
        Ok(serde_json::to_string_pretty(&(metrics, &log.epochs)).expect("serializable"))
    };
    match (run(), run()) {
        (Ok(a), Ok(b)) => check(a == b, format!("two runs, metrics JSON {} bytes, identical {}", a.len(), a == b)),
        (Err(e), _) | (_, Err(e)) => Outcome::Fail(e.to_string()),
    }
}

fn tacred_statistics() -> Outcome {
    let Some(dir) = std::env::var_os("RELATTN_TACRED_DIR").map(PathBuf::from) else {
        return Outcome::Skip("RELATTN_TACRED_DIR not set, corpus not available locally".into());
    };
    let mut all = Vec::new();
    for split in ["train", "dev", "test"] {
        match load_corpus(dir.join(format!("{split}.jsonl")), CorpusFormat::Pairified) {
            Ok(mut v) => all.append(&mut v),
            Err(e) => return Outcome::Fail(format!("{split}: {e}")),
        }
    }
    let invalid = all.iter().filter(|i| i.validate().is_err()).count();
    let s = corpus_stats(&all);
    check(
        s.count == TACRED_COUNT
            && (s.nil_percent - TACRED_NIL_PERCENT).abs() < 0.05
            && (s.avg_length - TACRED_AVG_LEN).abs() <= TACRED_LEN_TOL
            && invalid == 0,
        format!(
            "{} instances, {:.2}% nil, avg length {:.3}, {invalid} invalid",
            s.count, s.nil_percent, s.avg_length
        ),
    )
}
