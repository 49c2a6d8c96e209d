//! Mini-batch SGD with global-norm clipping, dev-keyed learning-rate decay,
//! dropout, word dropout and multi-seed runs.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Vocabulary, NIL_LABEL};
use crate::error::{Error, Result};
use crate::eval::micro_prf;
use crate::model::{FeatureSet, GraphOptions, Model, PreparedInstance, Variant};
use crate::numcore::{Grad, ParamGrads, ParamSet, Tape};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr0: f64,
    pub decay: f64,
    pub clip: f64,
    pub dropout: f64,
    pub word_dropout: f64,
    pub max_epochs: usize,
    pub seed: u64,
    pub variant: Variant,
    pub features: FeatureSet,
    /// Epochs without dev improvement before each decay.
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 50,
            lr0: 1.0,
            decay: 0.9,
            clip: 5.0,
            dropout: 0.5,
            word_dropout: 0.04,
            max_epochs: 30,
            seed: 1,
            variant: Variant::Additive,
            features: FeatureSet::all(),
            patience: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        for (name, v) in [("dropout", self.dropout), ("word_dropout", self.word_dropout)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return bad(format!("decay must lie in (0, 1], got {}", self.decay));
        }
        if !(self.clip > 0.0) {
            return bad(format!("clip must be positive, got {}", self.clip));
        }
        if !(self.lr0 > 0.0) {
            return bad(format!("lr0 must be positive, got {}", self.lr0));
        }
        if self.patience == 0 {
            return bad("patience must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_f1: f64,
    /// Mean dev cross-entropy with dropout off.
    pub dev_loss: f64,
    /// Learning rate used during this epoch.
    pub lr: f64,
    /// Best epoch so far; its parameters are the kept checkpoint.
    pub best_epoch: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn best(&self) -> Option<&EpochRecord> {
        let b = self.epochs.last()?.best_epoch;
        self.epochs.iter().find(|r| r.epoch == b)
    }

    pub fn best_dev_f1(&self) -> f64 {
        self.best().map_or(0.0, |r| r.dev_f1)
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for r in &self.epochs {
            serde_json::to_writer(&mut w, r)?;
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_jsonl(std::io::BufWriter::new(f))
            .map_err(|e| Error::io(path, e))
    }
}

/// Replaces each index by UNK with probability `p`.
pub fn word_dropout<R: Rng + ?Sized>(indices: &[usize], p: f64, rng: &mut R) -> Vec<usize> {
    if p <= 0.0 {
        return indices.to_vec();
    }
    indices
        .iter()
        .map(|&i| if rng.gen::<f64>() < p { Vocabulary::UNK } else { i })
        .collect()
}

/// Scales `grads` to global norm `clip` when above it; returns the original norm.
pub fn clip_gradients(grads: &mut ParamGrads, clip: f64) -> f64 {
    let norm = grads.norm();
    if norm > clip {
        grads.scale(clip / norm);
    }
    norm
}

/// `p ← p − lr·g` after global-norm clipping. Frozen tables and padding rows
/// are left untouched. Returns the pre-clip norm.
pub fn sgd_step(params: &mut ParamSet, grads: &mut ParamGrads, lr: f64, clip: f64) -> f64 {
    grads.mask_untrainable(params);
    let norm = clip_gradients(grads, clip);
    let ids: Vec<_> = params.ids().collect();
    for id in ids {
        let Some(g) = grads.get(id) else { continue };
        let pad = params.meta(id).pad_row;
        let t = params.get_mut(id);
        match g {
            Grad::Dense(d) => {
                let cols = t.cols();
                let skip = if pad { cols } else { 0 };
                for (p, x) in t.data_mut().iter_mut().zip(d.data()).skip(skip) {
                    *p -= lr * x;
                }
            }
            Grad::Rows { rows, .. } => {
                for (&r, row) in rows {
                    if pad && r == 0 {
                        continue;
                    }
                    for (p, x) in t.row_mut(r).iter_mut().zip(row) {
                        *p -= lr * x;
                    }
                }
            }
        }
    }
    norm
}

/// Dev performance of one epoch: micro-F1, then mean loss as tie-breaker.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DevScore {
    pub f1: f64,
    pub loss: f64,
}

impl DevScore {
    /// Strictly higher F1, or equal F1 with strictly lower loss.
    pub fn improves_on(&self, best: &DevScore) -> bool {
        self.f1 > best.f1 || (self.f1 == best.f1 && self.loss < best.loss)
    }
}

impl From<f64> for DevScore {
    fn from(f1: f64) -> Self {
        DevScore { f1, loss: 0.0 }
    }
}

/// Trailing run of epochs that failed to improve on their predecessor.
fn stale_epochs(history: &[DevScore]) -> usize {
    history
        .windows(2)
        .rev()
        .take_while(|w| !w[1].improves_on(&w[0]))
        .count()
}

/// Next learning rate: decays once per `patience` consecutive epochs that did
/// not improve on the previous epoch's dev score, restarting the count after
/// each decay.
pub fn lr_schedule(lr: f64, dev_history: &[DevScore], decay: f64, patience: usize) -> f64 {
    let stale = stale_epochs(dev_history);
    if stale > 0 && stale.is_multiple_of(patience.max(1)) {
        lr * decay
    } else {
        lr
    }
}

fn label_of(model: &Model, p: &PreparedInstance) -> String {
    match p.gold {
        Some(g) => model.arch.vocabs.labels[g].clone(),
        None => "<unknown>".to_string(),
    }
}

/// Micro-F1 (nil excluded) and mean loss of `model` on `data`, dropout off.
/// Instances whose gold label is not a model class count only toward F1.
pub fn dev_score(model: &Model, data: &[PreparedInstance], variant: Variant, features: FeatureSet) -> Result<DevScore> {
    let mut preds = Vec::with_capacity(data.len());
    let mut golds = Vec::with_capacity(data.len());
    let (mut loss, mut counted) = (0.0, 0usize);
    for p in data {
        let pred = model.predict_with(p, variant, features)?;
        if let Some(g) = p.gold {
            loss -= pred.probs[g].max(f64::MIN_POSITIVE).ln();
            counted += 1;
        }
        preds.push(model.arch.vocabs.labels[pred.argmax()].clone());
        golds.push(label_of(model, p));
    }
    Ok(DevScore {
        f1: micro_prf(&preds, &golds, NIL_LABEL)?.f1,
        loss: if counted == 0 { 0.0 } else { loss / counted as f64 },
    })
}

pub fn evaluate_f1(model: &Model, data: &[PreparedInstance], variant: Variant, features: FeatureSet) -> Result<f64> {
    Ok(dev_score(model, data, variant, features)?.f1)
}

/// Share of instances whose argmax equals the gold class.
pub fn accuracy(model: &Model, data: &[PreparedInstance], variant: Variant, features: FeatureSet) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let mut hit = 0;
    for p in data {
        if Some(model.predict_with(p, variant, features)?.argmax()) == p.gold {
            hit += 1;
        }
    }
    Ok(hit as f64 / data.len() as f64)
}

/// Mean-loss gradients of one batch.
fn batch_gradients(
    model: &Model,
    batch: &[&PreparedInstance],
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
    coords: (usize, usize),
) -> Result<(ParamGrads, f64)> {
    let mut total = ParamGrads::empty(model.params.len());
    let mut loss_sum = 0.0;
    for p in batch {
        let words = word_dropout(&p.words, cfg.word_dropout, rng);
        let mut tape = Tape::new(&model.params, rng.next_u64());
        let opts = GraphOptions {
            variant: cfg.variant,
            features: cfg.features,
            dropout: cfg.dropout,
            words: Some(&words),
        };
        let loss = model.arch.loss(&mut tape, p, &opts)?;
        let l = tape.value(loss).item();
        if !l.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch: coords.0,
                batch: coords.1,
            });
        }
        loss_sum += l;
        let g = tape.backward(loss)?.into_params();
        total.add_assign(&g, &model.params);
    }
    total.scale(1.0 / batch.len() as f64);
    Ok((total, loss_sum))
}

/// Trains `model` in place of a copy and returns the best-dev parameters.
pub fn train_loop(
    model: Model,
    train: &[PreparedInstance],
    dev: &[PreparedInstance],
    cfg: &TrainConfig,
) -> Result<(Model, TrainLog)> {
    cfg.validate()?;
    if train.is_empty() || dev.is_empty() {
        return Err(Error::Config("training and dev sets must be non-empty".into()));
    }
    if let Some(p) = train.iter().find(|p| p.gold.is_none()) {
        return Err(Error::invalid(&p.id, "gold label is not a model class"));
    }
    let mut log = TrainLog::default();
    if cfg.max_epochs == 0 {
        return Ok((model, log));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut current = model;
    let mut best = current.params.clone();
    let mut best_epoch = 0;
    let mut history = Vec::new();
    let mut lr = cfg.lr0;
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&PreparedInstance> = chunk.iter().map(|&i| &train[i]).collect();
            let (mut grads, l) = batch_gradients(&current, &batch, cfg, &mut rng, (epoch, b + 1))?;
            loss_sum += l;
            sgd_step(&mut current.params, &mut grads, lr, cfg.clip);
        }
        let score = dev_score(&current, dev, cfg.variant, cfg.features)?;
        if history.iter().all(|h| score.improves_on(h)) {
            best = current.params.clone();
            best_epoch = epoch;
        }
        history.push(score);
        log.epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            dev_f1: score.f1,
            dev_loss: score.loss,
            lr,
            best_epoch,
        });
        lr = lr_schedule(lr, &history, cfg.decay, cfg.patience);
    }
    current.params = best;
    Ok((current, log))
}

/// Outcome of the seeded multi-run protocol.
#[derive(Debug, Clone)]
pub struct MultiRun {
    pub seeds: Vec<u64>,
    pub runs: Vec<(Model, TrainLog)>,
    /// Run with the median best-dev F1.
    pub median: usize,
}

impl MultiRun {
    pub fn median_run(&self) -> &(Model, TrainLog) {
        &self.runs[self.median]
    }
}

/// Index of the median of `scores` (lower median; ties keep the earlier run).
pub fn median_index(scores: &[f64]) -> Option<usize> {
    if scores.is_empty() {
        return None;
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    Some(idx[(scores.len() - 1) / 2])
}

/// Runs seeds `cfg.seed .. cfg.seed + runs`; `build(seed)` supplies each
/// run's freshly initialized model.
pub fn train_runs<F>(
    mut build: F,
    train: &[PreparedInstance],
    dev: &[PreparedInstance],
    cfg: &TrainConfig,
    runs: usize,
) -> Result<MultiRun>
where
    F: FnMut(u64) -> Result<Model>,
{
    if runs == 0 {
        return Err(Error::Config("runs must be at least 1".into()));
    }
    let seeds: Vec<u64> = (0..runs as u64).map(|k| cfg.seed + k).collect();
    let mut out = Vec::with_capacity(runs);
    for &seed in &seeds {
        let model = build(seed)?;
        let run_cfg = TrainConfig {
            seed,
            ..cfg.clone()
        };
        out.push(train_loop(model, train, dev, &run_cfg)?);
    }
    let scores: Vec<f64> = out.iter().map(|(_, l)| l.best_dev_f1()).collect();
    let median = median_index(&scores).expect("runs > 0");
    Ok(MultiRun {
        seeds,
        runs: out,
        median,
    })
}
