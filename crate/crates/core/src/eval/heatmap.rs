use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::PredictionReport;
use crate::corpus::Instance;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeatmapFormat {
    Csv,
    Html,
}

impl FromStr for HeatmapFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(HeatmapFormat::Csv),
            "html" => Ok(HeatmapFormat::Html),
            other => Err(Error::Unknown {
                kind: "heatmap format",
                value: other.into(),
            }),
        }
    }
}

/// One token of one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapRow {
    pub id: String,
    pub token_index: usize,
    pub token: String,
    /// `subj`, `obj` or empty.
    pub marker: String,
    pub alpha: f64,
    pub intensity: u32,
}

/// Shade on the 0–100 scale.
pub fn intensity(alpha: f64) -> u32 {
    (100.0 * alpha).round().clamp(0.0, 100.0) as u32
}

/// Token rows for the requested instance ids, in request order.
pub fn heatmap_rows(report: &PredictionReport, instances: &[Instance], ids: &[String]) -> Result<Vec<HeatmapRow>> {
    let preds: HashMap<&str, usize> = report
        .predictions
        .iter()
        .enumerate()
        .map(|(i, p)| (p.id.as_str(), i))
        .collect();
    let insts: HashMap<&str, &Instance> = instances.iter().map(|i| (i.id.as_str(), i)).collect();
    let mut rows = Vec::new();
    for id in ids {
        let unknown = || Error::Unknown {
            kind: "instance id",
            value: id.clone(),
        };
        let p = &report.predictions[*preds.get(id.as_str()).ok_or_else(unknown)?];
        let inst = insts.get(id.as_str()).ok_or_else(unknown)?;
        if p.alpha.len() != inst.len() {
            return Err(Error::invalid(
                id,
                format!("{} attention weights for {} tokens", p.alpha.len(), inst.len()),
            ));
        }
        for (t, (tok, &a)) in inst.tokens.iter().zip(&p.alpha).enumerate() {
            let marker = if inst.subj.contains(t) {
                "subj"
            } else if inst.obj.contains(t) {
                "obj"
            } else {
                ""
            };
            rows.push(HeatmapRow {
                id: id.clone(),
                token_index: t,
                token: tok.form.clone(),
                marker: marker.into(),
                alpha: a,
                intensity: intensity(a),
            });
        }
    }
    Ok(rows)
}

pub fn write_heatmap_csv<W: Write>(rows: &[HeatmapRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush().map_err(|e| Error::Config(format!("writing heatmap CSV: {e}")))?;
    Ok(())
}

pub fn read_heatmap_csv<R: Read>(r: R) -> Result<Vec<HeatmapRow>> {
    csv::Reader::from_reader(r)
        .deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Self-contained page: one table row per instance, tokens shaded by weight.
pub fn write_heatmap_html<W: Write>(rows: &[HeatmapRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "<!DOCTYPE html>")?;
    writeln!(w, "<html><head><meta charset=\"utf-8\"><title>Attention weights</title></head>")?;
    writeln!(w, "<body style=\"font-family:sans-serif\">")?;
    writeln!(w, "<table style=\"border-collapse:collapse\">")?;
    let mut i = 0;
    while i < rows.len() {
        let id = &rows[i].id;
        write!(w, "<tr><th style=\"text-align:left;padding:4px\">{}</th><td>", escape(id))?;
        while i < rows.len() && &rows[i].id == id {
            let r = &rows[i];
            let border = match r.marker.as_str() {
                "subj" => "border-bottom:2px solid #1f4e99;",
                "obj" => "border-bottom:2px solid #a61c1c;",
                _ => "",
            };
            write!(
                w,
                "<span title=\"{:.4}\" style=\"background:rgba(220,40,40,{:.2});{}padding:2px;margin:1px;display:inline-block\">{}</span>",
                r.alpha,
                f64::from(r.intensity) / 100.0,
                border,
                escape(&r.token)
            )?;
            i += 1;
        }
        writeln!(w, "</td></tr>")?;
    }
    writeln!(w, "</table></body></html>")
}

/// Writes the heatmap for `ids` to `path`.
pub fn attention_heatmap(
    report: &PredictionReport,
    instances: &[Instance],
    ids: &[String],
    path: impl AsRef<Path>,
    format: HeatmapFormat,
) -> Result<()> {
    let path = path.as_ref();
    let rows = heatmap_rows(report, instances, ids)?;
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let w = std::io::BufWriter::new(file);
    match format {
        HeatmapFormat::Csv => write_heatmap_csv(&rows, w),
        HeatmapFormat::Html => write_heatmap_html(&rows, w).map_err(|e| Error::io(path, e)),
    }
}
