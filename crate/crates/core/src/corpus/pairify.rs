use serde::{Deserialize, Serialize};

use super::{Instance, Span, Token, NIL_LABEL};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityMention {
    pub span: Span,
    #[serde(rename = "type")]
    pub entity_type: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kb_id: Option<String>,
}

/// Directed gold relation between two entities, by inventory index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldRelation {
    pub subj: usize,
    pub obj: usize,
    pub label: String,
}

/// Sentence-level record listing every entity and every gold relation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SentenceRecord {
    pub id: String,
    pub tokens: Vec<String>,
    pub pos: Vec<String>,
    pub ner: Vec<String>,
    pub dep_head: Vec<i64>,
    pub entities: Vec<EntityMention>,
    #[serde(default)]
    pub relations: Vec<GoldRelation>,
}

/// Suffix of the label used when the gold relation runs from the second entity to the first.
pub const INVERSE_SUFFIX: &str = "_inv";

/// One instance per unordered entity pair `{a, b}` with `a < b`; direction
/// is folded into the label (`R`, `R_inv` or nil).
pub fn pairify(rec: &SentenceRecord) -> Result<Vec<Instance>> {
    let k = rec.entities.len();
    if k < 2 {
        return Err(Error::invalid(&rec.id, format!("{k} entities, need at least 2")));
    }
    for i in 0..k {
        for j in i + 1..k {
            if rec.entities[i].span.overlaps(&rec.entities[j].span) {
                return Err(Error::invalid(
                    &rec.id,
                    format!("entity {i} overlaps entity {j}"),
                ));
            }
        }
    }
    if let Some(r) = rec.relations.iter().find(|r| r.subj >= k || r.obj >= k) {
        return Err(Error::invalid(
            &rec.id,
            format!("relation {} refers to entity outside 0..{k}", r.label),
        ));
    }
    let n = rec.tokens.len();
    if rec.pos.len() != n || rec.ner.len() != n {
        return Err(Error::invalid(&rec.id, "token/tag length mismatch"));
    }
    let tokens: Vec<Token> = (0..n)
        .map(|i| Token {
            form: rec.tokens[i].clone(),
            pos: rec.pos[i].clone(),
            ner: rec.ner[i].clone(),
        })
        .collect();
    let spans: Vec<Span> = rec.entities.iter().map(|e| e.span).collect();

    let mut out = Vec::with_capacity(k * (k - 1) / 2);
    for a in 0..k {
        for b in a + 1..k {
            let label = rec.relations.iter().find_map(|r| {
                if r.subj == a && r.obj == b {
                    Some(r.label.clone())
                } else if r.subj == b && r.obj == a {
                    Some(format!("{}{INVERSE_SUFFIX}", r.label))
                } else {
                    None
                }
            });
            let (ea, eb) = (&rec.entities[a], &rec.entities[b]);
            let inst = Instance {
                id: format!("{}:{a}-{b}", rec.id),
                tokens: tokens.clone(),
                dep_head: rec.dep_head.clone(),
                subj: ea.span,
                obj: eb.span,
                subj_type: ea.entity_type.clone(),
                obj_type: eb.entity_type.clone(),
                relation: Some(label.unwrap_or_else(|| NIL_LABEL.to_string())),
                subj_kb_id: ea.kb_id.clone(),
                obj_kb_id: eb.kb_id.clone(),
                entities: Some(spans.clone()),
            };
            inst.validate()?;
            out.push(inst);
        }
    }
    Ok(out)
}
