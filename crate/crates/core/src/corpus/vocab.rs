use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Instance;
use crate::error::{Error, Result};
use crate::numcore::Tensor;

/// String ↔ index map with `PAD = 0` and `UNK = 1` reserved.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    itos: Vec<String>,
    stoi: HashMap<String, usize>,
}

impl Vocabulary {
    pub const PAD: usize = 0;
    pub const UNK: usize = 1;
    pub const PAD_TOKEN: &'static str = "<pad>";
    pub const UNK_TOKEN: &'static str = "<unk>";

    pub fn new() -> Self {
        Vocabulary::from(vec![
            Self::PAD_TOKEN.to_string(),
            Self::UNK_TOKEN.to_string(),
        ])
    }

    /// Reserved symbols followed by the distinct `items` in sorted order.
    pub fn from_items<'a>(items: impl IntoIterator<Item = &'a str>) -> Self {
        let mut v: Vec<&str> = items.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        let mut vocab = Vocabulary::new();
        for s in v {
            vocab.insert(s);
        }
        vocab
    }

    pub fn insert(&mut self, s: &str) -> usize {
        if let Some(&i) = self.stoi.get(s) {
            return i;
        }
        let i = self.itos.len();
        self.itos.push(s.to_string());
        self.stoi.insert(s.to_string(), i);
        i
    }

    pub fn len(&self) -> usize {
        self.itos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.itos.is_empty()
    }

    pub fn get(&self, s: &str) -> Option<usize> {
        self.stoi.get(s).copied()
    }

    pub fn index_or_unk(&self, s: &str) -> usize {
        self.get(s).unwrap_or(Self::UNK)
    }

    pub fn token(&self, i: usize) -> &str {
        &self.itos[i]
    }

    pub fn tokens(&self) -> &[String] {
        &self.itos
    }
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::new()
    }
}

impl From<Vec<String>> for Vocabulary {
    fn from(itos: Vec<String>) -> Self {
        let stoi = itos.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        Vocabulary { itos, stoi }
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.itos
    }
}

/// Word vocabulary of every form seen at least `min_freq` times, most
/// frequent first, ties broken lexicographically.
pub fn build_vocab(instances: &[Instance], min_freq: usize) -> Vocabulary {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for inst in instances {
        for t in &inst.tokens {
            *counts.entry(t.form.as_str()).or_default() += 1;
        }
    }
    let mut kept: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|&(_, c)| c >= min_freq.max(1))
        .collect();
    kept.sort_unstable_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let mut vocab = Vocabulary::new();
    for (w, _) in kept {
        vocab.insert(w);
    }
    vocab
}

/// Row-per-symbol embedding matrix; row 0 is the zero padding row.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub matrix: Tensor,
    pub trainable: bool,
}

impl EmbeddingTable {
    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }

    pub fn rows(&self) -> usize {
        self.matrix.rows()
    }

    /// Seeded uniform(−scale, scale) rows with a zero padding row.
    pub fn random(rows: usize, dim: usize, scale: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = Tensor::from_fn(rows, dim, |_, _| rng.gen_range(-scale..=scale));
        if rows > 0 {
            m.row_mut(0).fill(0.0);
        }
        EmbeddingTable {
            matrix: m,
            trainable: true,
        }
    }
}

/// Streams a text vector file, calling `f(line, token, values)` per entry.
/// Returns the dimension (from the header, `dim`, or the first entry).
fn for_each_vector<F>(path: &Path, dim: Option<usize>, mut f: F) -> Result<usize>
where
    F: FnMut(usize, &str, Vec<f64>),
{
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut dim = dim;
    let err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if lineno == 1 && fields.len() == 2 {
            if let (Ok(_), Ok(d)) = (fields[0].parse::<usize>(), fields[1].parse::<usize>()) {
                match dim {
                    Some(want) if want != d => {
                        return Err(err(1, format!("header declares dim {d}, expected {want}")))
                    }
                    _ => dim = Some(d),
                }
                continue;
            }
        }
        let got = fields.len() - 1;
        let want = *dim.get_or_insert(got);
        if got != want {
            return Err(err(lineno, format!("expected {want} values, found {got}")));
        }
        let values = fields[1..]
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| err(lineno, e.to_string()))?;
        f(lineno, fields[0], values);
    }
    dim.ok_or_else(|| err(0, "no vectors found".into()))
}

/// Reads every entry of a vector file.
pub fn read_vectors(path: impl AsRef<Path>, dim: Option<usize>) -> Result<(usize, Vec<(String, Vec<f64>)>)> {
    let mut out = Vec::new();
    let d = for_each_vector(path.as_ref(), dim, |_, tok, v| out.push((tok.to_string(), v)))?;
    Ok((d, out))
}

/// Builds a `|vocab| × dim` table: in-vocabulary rows from the file, the rest
/// (UNK included) seeded uniform(−0.01, 0.01), PAD zero.
pub fn load_pretrained_vectors(
    path: impl AsRef<Path>,
    vocab: &Vocabulary,
    dim: usize,
    seed: u64,
) -> Result<EmbeddingTable> {
    let mut table = EmbeddingTable::random(vocab.len(), dim, 0.01, seed);
    for_each_vector(path.as_ref(), Some(dim), |_, tok, v| {
        if let Some(i) = vocab.get(tok) {
            if i != Vocabulary::PAD {
                table.matrix.row_mut(i).copy_from_slice(&v);
            }
        }
    })?;
    Ok(table)
}
