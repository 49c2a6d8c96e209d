use std::collections::HashMap;
use std::path::Path;

use super::{read_vectors, Instance, Span};
use crate::error::{Error, Result};

/// Entity type → encyclopedia page used for unlinkable mentions.
pub const DEFAULT_TYPE_MAP: &str = include_str!("../../data/type_map.tsv");

/// Types whose mentions are never dictionary-linked.
const UNLINKED_TYPES: &[&str] = &[
    "DATE", "TIME", "DURATION", "NUMBER", "MONEY", "PERCENT", "ORDINAL", "CARDINAL", "SET",
];

/// Pretrained entity vectors keyed by normalized page title or mention, plus
/// the type fallback map.
#[derive(Debug, Clone, PartialEq)]
pub struct EntityKb {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
    type_pages: HashMap<String, String>,
}

/// Case-folded title with spaces as underscores: `Calendar date` → `calendar_date`.
pub(crate) fn normalize_key(s: &str) -> String {
    s.trim().replace(' ', "_").to_lowercase()
}

fn parse_type_map(text: &str, origin: &Path) -> Result<HashMap<String, String>> {
    let mut map = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (ty, page) = line.split_once('\t').ok_or_else(|| Error::Parse {
            path: origin.to_path_buf(),
            line: i + 1,
            msg: "expected <TYPE>\\t<PageTitle>".into(),
        })?;
        map.insert(ty.trim().to_string(), page.trim().to_string());
    }
    Ok(map)
}

impl EntityKb {
    pub fn new(dim: usize, type_map: HashMap<String, String>) -> Self {
        EntityKb {
            dim,
            vectors: HashMap::new(),
            type_pages: type_map,
        }
    }

    /// Loads the vector file and a type map (the built-in table when `None`).
    pub fn load(vectors: impl AsRef<Path>, type_map: Option<&Path>, dim: usize) -> Result<Self> {
        let map = match type_map {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                parse_type_map(&text, p)?
            }
            None => parse_type_map(DEFAULT_TYPE_MAP, Path::new("<builtin type map>"))?,
        };
        let (_, entries) = read_vectors(vectors, Some(dim))?;
        let mut kb = EntityKb::new(dim, map);
        for (k, v) in entries {
            kb.insert(&k, v);
        }
        Ok(kb)
    }

    pub fn with_default_types(dim: usize) -> Self {
        let map = parse_type_map(DEFAULT_TYPE_MAP, Path::new("<builtin type map>"))
            .expect("built-in type map parses");
        EntityKb::new(dim, map)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn insert(&mut self, key: &str, vector: Vec<f64>) {
        assert_eq!(vector.len(), self.dim, "entity vector dim");
        self.vectors.insert(normalize_key(key), vector);
    }

    pub fn get(&self, key: &str) -> Option<&[f64]> {
        self.vectors.get(&normalize_key(key)).map(Vec::as_slice)
    }

    pub fn type_page(&self, entity_type: &str) -> Option<&str> {
        self.type_pages.get(entity_type).map(String::as_str)
    }

    pub fn types(&self) -> impl Iterator<Item = &str> {
        self.type_pages.keys().map(String::as_str)
    }

    pub fn fallback(&self, entity_type: &str) -> Result<&[f64]> {
        let page = self.type_page(entity_type).ok_or_else(|| Error::Unknown {
            kind: "entity type in type map",
            value: entity_type.to_string(),
        })?;
        self.get(page).ok_or_else(|| Error::Unknown {
            kind: "type page in entity vectors",
            value: format!("{page} (type {entity_type})"),
        })
    }

    /// Vector for one mention: explicit KB id, then the surface string, then
    /// the type fallback. Numeric and temporal mentions skip the dictionary.
    pub fn link(
        &self,
        forms: &[&str],
        span: Span,
        entity_type: &str,
        kb_id: Option<&str>,
    ) -> Result<&[f64]> {
        if !UNLINKED_TYPES.contains(&entity_type) {
            if let Some(v) = kb_id.and_then(|id| self.get(id)) {
                return Ok(v);
            }
            let surface = forms[span.start..span.end].join("_");
            if let Some(v) = self.get(&surface) {
                return Ok(v);
            }
        }
        self.fallback(entity_type)
    }
}

/// Entity vectors `(e¹, e²)` for the query pair of `inst`.
pub fn link_entities(inst: &Instance, kb: &EntityKb) -> Result<(Vec<f64>, Vec<f64>)> {
    let forms = inst.forms();
    let e1 = kb.link(&forms, inst.subj, &inst.subj_type, inst.subj_kb_id.as_deref())?;
    let e2 = kb.link(&forms, inst.obj, &inst.obj_type, inst.obj_kb_id.as_deref())?;
    Ok((e1.to_vec(), e2.to_vec()))
}
