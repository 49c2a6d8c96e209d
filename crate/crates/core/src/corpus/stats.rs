use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{Instance, NIL_LABEL};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub count: usize,
    /// Distinct non-nil labels.
    pub num_relations: usize,
    /// Share of nil instances, in percent.
    pub nil_percent: f64,
    pub avg_length: f64,
}

pub fn corpus_stats(instances: &[Instance]) -> CorpusStats {
    let count = instances.len();
    let labels: BTreeSet<&str> = instances
        .iter()
        .map(Instance::label)
        .filter(|&l| l != NIL_LABEL)
        .collect();
    let nil = instances.iter().filter(|i| i.label() == NIL_LABEL).count();
    let total_len: usize = instances.iter().map(Instance::len).sum();
    let (nil_percent, avg_length) = if count == 0 {
        (0.0, 0.0)
    } else {
        (
            100.0 * nil as f64 / count as f64,
            total_len as f64 / count as f64,
        )
    };
    CorpusStats {
        count,
        num_relations: labels.len(),
        nil_percent,
        avg_length,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Span, Token};

    fn inst(n: usize, rel: Option<&str>) -> Instance {
        Instance {
            id: "i".into(),
            tokens: vec![
                Token {
                    form: "w".into(),
                    pos: "NN".into(),
                    ner: "O".into()
                };
                n
            ],
            dep_head: (0..n as i64).map(|i| i - 1).collect(),
            subj: Span::new(0, 1),
            obj: Span::new(1, 2),
            subj_type: "PER".into(),
            obj_type: "PER".into(),
            relation: rel.map(String::from),
            subj_kb_id: None,
            obj_kb_id: None,
            entities: None,
        }
    }

    #[test]
    fn average_length() {
        let s = corpus_stats(&[inst(36, Some("a")), inst(37, Some("b"))]);
        assert_eq!(s.count, 2);
        assert_eq!(s.avg_length, 36.5);
        assert_eq!(s.num_relations, 2);
        assert_eq!(s.nil_percent, 0.0);
    }

    #[test]
    fn all_nil() {
        let s = corpus_stats(&[inst(3, None), inst(4, Some(NIL_LABEL))]);
        assert_eq!(s.nil_percent, 100.0);
        assert_eq!(s.num_relations, 0);
    }

    #[test]
    fn empty() {
        let s = corpus_stats(&[]);
        assert_eq!(s.count, 0);
        assert_eq!(s.avg_length, 0.0);
    }
}
