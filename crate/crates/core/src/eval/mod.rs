//! Prediction, nil-excluded micro scoring, ensembles, binning and heatmaps.

mod bins;
mod heatmap;

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use bins::{axis_value, robustness_bins, write_bins_tsv, Axis, BinReport};
pub use heatmap::{
    attention_heatmap, heatmap_rows, intensity, read_heatmap_csv, write_heatmap_csv,
    write_heatmap_html, HeatmapFormat, HeatmapRow,
};

use crate::corpus::{EntityKb, Instance};
use crate::error::{Error, Result};
use crate::model::Model;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstancePrediction {
    pub id: String,
    pub gold: String,
    pub predicted: String,
    pub probs: Vec<f64>,
    pub alpha: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PredictionReport {
    /// Class names, aligned with every `probs` vector.
    pub labels: Vec<String>,
    pub predictions: Vec<InstancePrediction>,
    /// Names of the member runs when the report is an ensemble.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub members: Vec<String>,
}

impl PredictionReport {
    pub fn predicted(&self) -> Vec<&str> {
        self.predictions.iter().map(|p| p.predicted.as_str()).collect()
    }

    pub fn golds(&self) -> Vec<&str> {
        self.predictions.iter().map(|p| p.gold.as_str()).collect()
    }

    pub fn metrics(&self, nil: &str) -> Result<MetricsReport> {
        micro_prf(&self.predicted(), &self.golds(), nil)
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path, self)
    }
}

pub(crate) fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Argmax predictions for `instances` with dropout off.
pub fn predict_corpus(model: &Model, instances: &[Instance], kb: Option<&EntityKb>) -> Result<PredictionReport> {
    let labels = model.arch.vocabs.labels.clone();
    let mut predictions = Vec::with_capacity(instances.len());
    for inst in instances {
        let prep = model.prepare(inst, kb)?;
        let p = model.predict(&prep)?;
        predictions.push(InstancePrediction {
            id: inst.id.clone(),
            gold: inst.label().to_string(),
            predicted: labels[p.argmax()].clone(),
            probs: p.probs,
            alpha: p.alpha,
        });
    }
    Ok(PredictionReport {
        labels,
        predictions,
        members: Vec::new(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl MetricsReport {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        MetricsReport {
            precision,
            recall,
            f1,
            tp,
            fp,
            fn_,
        }
    }
}

/// Micro precision, recall and F1 with `nil` excluded from the positive class.
pub fn micro_prf<S: AsRef<str>, T: AsRef<str>>(preds: &[S], golds: &[T], nil: &str) -> Result<MetricsReport> {
    if preds.len() != golds.len() {
        return Err(Error::Config(format!(
            "{} predictions for {} gold labels",
            preds.len(),
            golds.len()
        )));
    }
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (p, g) in preds.iter().zip(golds) {
        let (p, g) = (p.as_ref(), g.as_ref());
        if p == g {
            if g != nil {
                tp += 1;
            }
            continue;
        }
        if p != nil {
            fp += 1;
        }
        if g != nil {
            fn_ += 1;
        }
    }
    Ok(MetricsReport::from_counts(tp, fp, fn_))
}

/// Plurality vote per instance; ties go to the larger summed probability,
/// then to the lower class index. Probabilities and attention are averaged.
pub fn ensemble_vote(reports: &[PredictionReport]) -> Result<PredictionReport> {
    let first = reports
        .first()
        .ok_or_else(|| Error::Config("ensemble needs at least one report".into()))?;
    let labels = &first.labels;
    let index: HashMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    for (k, r) in reports.iter().enumerate() {
        if &r.labels != labels {
            return Err(Error::Config(format!("report {k} has a different label set")));
        }
        if r.predictions.len() != first.predictions.len() {
            return Err(Error::Config(format!(
                "report {k} has {} predictions, expected {}",
                r.predictions.len(),
                first.predictions.len()
            )));
        }
    }
    let k = reports.len() as f64;
    let mut predictions = Vec::with_capacity(first.predictions.len());
    for (i, head) in first.predictions.iter().enumerate() {
        let mut votes = vec![0usize; labels.len()];
        let mut probs = vec![0.0; labels.len()];
        let mut alpha = vec![0.0; head.alpha.len()];
        for r in reports {
            let p = &r.predictions[i];
            if p.id != head.id {
                return Err(Error::Config(format!(
                    "instance {i}: id {} does not match {}",
                    p.id, head.id
                )));
            }
            let c = *index.get(p.predicted.as_str()).ok_or_else(|| Error::Unknown {
                kind: "predicted label",
                value: p.predicted.clone(),
            })?;
            votes[c] += 1;
            for (s, x) in probs.iter_mut().zip(&p.probs) {
                *s += x;
            }
            if p.alpha.len() == alpha.len() {
                for (s, x) in alpha.iter_mut().zip(&p.alpha) {
                    *s += x;
                }
            }
        }
        let mut best = 0;
        for c in 1..labels.len() {
            if votes[c] > votes[best] || (votes[c] == votes[best] && probs[c] > probs[best]) {
                best = c;
            }
        }
        predictions.push(InstancePrediction {
            id: head.id.clone(),
            gold: head.gold.clone(),
            predicted: labels[best].clone(),
            probs: probs.iter().map(|s| s / k).collect(),
            alpha: alpha.iter().map(|s| s / k).collect(),
        });
    }
    let members = reports
        .iter()
        .enumerate()
        .map(|(i, r)| {
            if r.members.is_empty() {
                format!("run{i}")
            } else {
                r.members.join("+")
            }
        })
        .collect();
    Ok(PredictionReport {
        labels: labels.clone(),
        predictions,
        members,
    })
}
