use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{pairify, Instance, SentenceRecord, Span, Token};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorpusFormat {
    /// One query pair per line.
    Pairified,
    /// One sentence per line with its entity inventory and gold relations.
    AllPairsSentence,
}

impl std::str::FromStr for CorpusFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pairified" => Ok(CorpusFormat::Pairified),
            "all-pairs-sentence" | "all-pairs" => Ok(CorpusFormat::AllPairsSentence),
            other => Err(Error::Unknown {
                kind: "corpus format",
                value: other.into(),
            }),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    id: String,
    tokens: Vec<String>,
    pos: Vec<String>,
    ner: Vec<String>,
    dep_head: Vec<i64>,
    subj: Span,
    obj: Span,
    subj_type: String,
    obj_type: String,
    #[serde(default)]
    relation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    subj_kb_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    obj_kb_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    entities: Option<Vec<Span>>,
}

impl Record {
    fn into_instance(self) -> Result<Instance> {
        let n = self.tokens.len();
        if self.pos.len() != n || self.ner.len() != n {
            return Err(Error::invalid(
                &self.id,
                format!(
                    "{} tokens but {} pos and {} ner tags",
                    n,
                    self.pos.len(),
                    self.ner.len()
                ),
            ));
        }
        let tokens = self
            .tokens
            .into_iter()
            .zip(self.pos)
            .zip(self.ner)
            .map(|((form, pos), ner)| Token { form, pos, ner })
            .collect();
        Ok(Instance {
            id: self.id,
            tokens,
            dep_head: self.dep_head,
            subj: self.subj,
            obj: self.obj,
            subj_type: self.subj_type,
            obj_type: self.obj_type,
            relation: self.relation,
            subj_kb_id: self.subj_kb_id,
            obj_kb_id: self.obj_kb_id,
            entities: self.entities,
        })
    }

    fn from_instance(inst: &Instance) -> Self {
        Record {
            id: inst.id.clone(),
            tokens: inst.tokens.iter().map(|t| t.form.clone()).collect(),
            pos: inst.tokens.iter().map(|t| t.pos.clone()).collect(),
            ner: inst.tokens.iter().map(|t| t.ner.clone()).collect(),
            dep_head: inst.dep_head.clone(),
            subj: inst.subj,
            obj: inst.obj,
            subj_type: inst.subj_type.clone(),
            obj_type: inst.obj_type.clone(),
            relation: inst.relation.clone(),
            subj_kb_id: inst.subj_kb_id.clone(),
            obj_kb_id: inst.obj_kb_id.clone(),
            entities: inst.entities.clone(),
        }
    }
}

/// Parses JSONL text; `origin` names the source in error messages.
pub fn parse_instances<R: BufRead>(
    reader: R,
    format: CorpusFormat,
    origin: &Path,
) -> Result<Vec<Instance>> {
    let mut out = Vec::new();
    let mut records = 0;
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(origin, e))?;
        if line.trim().is_empty() {
            continue;
        }
        records += 1;
        let parse_err = |msg: String| Error::Parse {
            path: origin.to_path_buf(),
            line: lineno,
            msg,
        };
        match format {
            CorpusFormat::Pairified => {
                let rec: Record = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
                let inst = rec
                    .into_instance()
                    .and_then(|inst| inst.validate().map(|_| inst))
                    .map_err(|e| parse_err(e.to_string()))?;
                out.push(inst);
            }
            CorpusFormat::AllPairsSentence => {
                let rec: SentenceRecord =
                    serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
                let insts = pairify(&rec).map_err(|e| parse_err(e.to_string()))?;
                out.extend(insts);
            }
        }
    }
    if records == 0 {
        return Err(Error::Parse {
            path: origin.to_path_buf(),
            line: 0,
            msg: "empty corpus file".into(),
        });
    }
    Ok(out)
}

pub fn load_corpus(path: impl AsRef<Path>, format: CorpusFormat) -> Result<Vec<Instance>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_instances(BufReader::new(file), format, path)
}

/// Writes instances as pairified JSONL.
pub fn save_corpus(path: impl AsRef<Path>, instances: &[Instance]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for inst in instances {
        serde_json::to_writer(&mut w, &Record::from_instance(inst))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
