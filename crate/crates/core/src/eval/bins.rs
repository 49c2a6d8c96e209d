use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{micro_prf, MetricsReport};
use crate::corpus::Instance;
use crate::error::{Error, Result};

/// Instance property used to bin results.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    /// Sentence length in tokens.
    SentLen,
    /// Tokens strictly between the two query spans.
    PairDist,
    /// Entity mentions in the sentence.
    NEntities,
    /// Other entity mentions lying between the query spans.
    NBetween,
}

impl Axis {
    pub fn default_bin_size(self) -> usize {
        match self {
            Axis::SentLen => 10,
            Axis::PairDist => 3,
            Axis::NEntities | Axis::NBetween => 1,
        }
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sent_len" => Ok(Axis::SentLen),
            "pair_dist" => Ok(Axis::PairDist),
            "n_entities" => Ok(Axis::NEntities),
            "n_between" => Ok(Axis::NBetween),
            other => Err(Error::Unknown {
                kind: "binning axis",
                value: other.into(),
            }),
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::SentLen => "sent_len",
            Axis::PairDist => "pair_dist",
            Axis::NEntities => "n_entities",
            Axis::NBetween => "n_between",
        })
    }
}

pub fn axis_value(inst: &Instance, axis: Axis) -> Result<usize> {
    let entities = || {
        inst.entities.as_ref().ok_or_else(|| {
            Error::invalid(
                &inst.id,
                format!("axis {axis} needs the entity inventory of the all-pairs format"),
            )
        })
    };
    Ok(match axis {
        Axis::SentLen => inst.len(),
        Axis::PairDist => inst.pair_distance(),
        Axis::NEntities => entities()?.len(),
        Axis::NBetween => {
            let (lo, hi) = if inst.subj.start <= inst.obj.start {
                (inst.subj.end, inst.obj.start)
            } else {
                (inst.obj.end, inst.subj.start)
            };
            entities()?
                .iter()
                .filter(|s| s.start >= lo && s.end <= hi && s.start < s.end)
                .count()
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinReport {
    /// Inclusive lower edge.
    pub lo: usize,
    /// Inclusive upper edge.
    pub hi: usize,
    pub count: usize,
    pub metrics: MetricsReport,
}

/// Bins `[b·size, (b+1)·size)` with per-bin micro scores; empty bins omitted.
pub fn robustness_bins<S: AsRef<str>, T: AsRef<str>>(
    instances: &[Instance],
    preds: &[S],
    golds: &[T],
    axis: Axis,
    bin_size: usize,
    nil: &str,
) -> Result<Vec<BinReport>> {
    if bin_size == 0 {
        return Err(Error::Config("bin size must be positive".into()));
    }
    if instances.len() != preds.len() || preds.len() != golds.len() {
        return Err(Error::Config(format!(
            "{} instances, {} predictions, {} gold labels",
            instances.len(),
            preds.len(),
            golds.len()
        )));
    }
    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, inst) in instances.iter().enumerate() {
        members.entry(axis_value(inst, axis)? / bin_size).or_default().push(i);
    }
    members
        .into_iter()
        .map(|(b, idx)| {
            let p: Vec<&str> = idx.iter().map(|&i| preds[i].as_ref()).collect();
            let g: Vec<&str> = idx.iter().map(|&i| golds[i].as_ref()).collect();
            Ok(BinReport {
                lo: b * bin_size,
                hi: (b + 1) * bin_size - 1,
                count: idx.len(),
                metrics: micro_prf(&p, &g, nil)?,
            })
        })
        .collect()
}

/// `bin_lo, bin_hi, count, P, R, F1` as tab-separated rows.
pub fn write_bins_tsv<W: Write>(bins: &[BinReport], mut w: W) -> std::io::Result<()> {
    writeln!(w, "bin_lo\tbin_hi\tcount\tP\tR\tF1")?;
    for b in bins {
        writeln!(
            w,
            "{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}",
            b.lo, b.hi, b.count, b.metrics.precision, b.metrics.recall, b.metrics.f1
        )?;
    }
    Ok(())
}
