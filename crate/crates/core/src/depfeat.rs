//! Dependency-tree distances, shortest dependency paths and relative
//! position features for a pair of query spans.

use std::collections::VecDeque;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::corpus::Span;
use crate::error::{Error, Result};

/// Validated dependency tree: one root, acyclic, every token reachable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DependencyTree {
    head: Vec<Option<usize>>,
    adj: Vec<Vec<usize>>,
    depth: Vec<usize>,
    root: usize,
}

impl DependencyTree {
    /// Builds a tree from per-token heads, `-1` marking the root.
    pub fn new(heads: &[i64]) -> Result<Self> {
        let n = heads.len();
        if n == 0 {
            return Err(Error::Tree("empty sentence".into()));
        }
        let mut head = Vec::with_capacity(n);
        let mut root = None;
        for (i, &h) in heads.iter().enumerate() {
            if h == -1 {
                if let Some(r) = root {
                    return Err(Error::Tree(format!("multiple roots: {r} and {i}")));
                }
                root = Some(i);
                head.push(None);
            } else if h < 0 || h as usize >= n {
                return Err(Error::Tree(format!("head {h} of token {i} out of range 0..{n}")));
            } else if h as usize == i {
                return Err(Error::Tree(format!("token {i} is its own head")));
            } else {
                head.push(Some(h as usize));
            }
        }
        let root = root.ok_or_else(|| Error::Tree("no root (head -1)".into()))?;

        // 0 = unvisited, 1 = on current walk, 2 = reaches root
        let mut state = vec![0u8; n];
        state[root] = 2;
        for start in 0..n {
            let mut walk = Vec::new();
            let mut cur = start;
            while state[cur] == 0 {
                state[cur] = 1;
                walk.push(cur);
                cur = head[cur].expect("only the root lacks a head");
            }
            if state[cur] == 1 {
                let pos = walk.iter().position(|&t| t == cur).unwrap();
                let cycle: Vec<String> = walk[pos..]
                    .iter()
                    .chain(std::iter::once(&cur))
                    .map(|t| t.to_string())
                    .collect();
                return Err(Error::Tree(format!("cycle {}", cycle.join(" -> "))));
            }
            for t in walk {
                state[t] = 2;
            }
        }

        let mut adj = vec![Vec::new(); n];
        for (i, h) in head.iter().enumerate() {
            if let Some(h) = *h {
                adj[i].push(h);
                adj[h].push(i);
            }
        }
        let mut depth = vec![0; n];
        let mut queue = VecDeque::from([root]);
        let mut seen = vec![false; n];
        seen[root] = true;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    depth[v] = depth[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        Ok(DependencyTree {
            head,
            adj,
            depth,
            root,
        })
    }

    pub fn len(&self) -> usize {
        self.head.len()
    }

    pub fn is_empty(&self) -> bool {
        self.head.is_empty()
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn parent(&self, i: usize) -> Option<usize> {
        self.head[i]
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adj[i]
    }

    /// Undirected edge distance from every token to the nearest of `sources`.
    pub fn distances_from(&self, sources: impl IntoIterator<Item = usize>) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.len()];
        let mut queue = VecDeque::new();
        for s in sources {
            if dist[s] != 0 {
                dist[s] = 0;
                queue.push_back(s);
            }
        }
        while let Some(u) = queue.pop_front() {
            for &v in &self.adj[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    fn check_span(&self, span: Span) -> Result<()> {
        if span.start >= span.end || span.end > self.len() {
            return Err(Error::Tree(format!(
                "span [{}, {}) invalid for {} tokens",
                span.start,
                span.end,
                self.len()
            )));
        }
        Ok(())
    }
}

/// Which token(s) of an entity span distances are measured from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMode {
    /// Minimum over all span tokens.
    #[default]
    Span,
    /// Distance to the span's head token only.
    Head,
}

/// Minimum undirected tree distance from `token` to any token of `span`.
pub fn tree_distance(tree: &DependencyTree, token: usize, span: Span) -> Result<usize> {
    tree.check_span(span)?;
    if token >= tree.len() {
        return Err(Error::Tree(format!("token {token} out of range")));
    }
    if span.contains(token) {
        return Ok(0);
    }
    Ok(tree.distances_from(span.indices())[token])
}

/// The span token whose parent lies outside the span; the last span token
/// when there is no unique such token.
pub fn span_head(tree: &DependencyTree, span: Span) -> usize {
    let mut candidates = span
        .indices()
        .filter(|&i| tree.parent(i).is_none_or(|p| !span.contains(p)));
    match (candidates.next(), candidates.next()) {
        (Some(h), None) => h,
        _ => span.end - 1,
    }
}

/// Token indices from the subject head to the object head, inclusive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SdpPath(pub Vec<usize>);

impl SdpPath {
    pub fn tokens(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.0.len().saturating_sub(1)
    }
}

pub fn shortest_dependency_path(tree: &DependencyTree, subj: Span, obj: Span) -> Result<SdpPath> {
    tree.check_span(subj)?;
    tree.check_span(obj)?;
    let (mut a, mut b) = (span_head(tree, subj), span_head(tree, obj));
    let mut up = Vec::new();
    let mut down = Vec::new();
    while tree.depth[a] > tree.depth[b] {
        up.push(a);
        a = tree.head[a].unwrap();
    }
    while tree.depth[b] > tree.depth[a] {
        down.push(b);
        b = tree.head[b].unwrap();
    }
    while a != b {
        up.push(a);
        down.push(b);
        a = tree.head[a].unwrap();
        b = tree.head[b].unwrap();
    }
    up.push(a);
    up.extend(down.into_iter().rev());
    Ok(SdpPath(up))
}

pub fn on_path_flags(path: &SdpPath, n: usize) -> Vec<u8> {
    let mut flags = vec![0; n];
    for &t in path.tokens() {
        flags[t] = 1;
    }
    flags
}

/// Signed offset of every token from `span`: 0 inside, negative before,
/// positive after.
pub fn sequence_positions(n: usize, span: Span) -> Vec<i64> {
    (0..n)
        .map(|i| {
            if i < span.start {
                -((span.start - i) as i64)
            } else if i >= span.end {
                (i - span.end + 1) as i64
            } else {
                0
            }
        })
        .collect()
}

pub fn clip_position(p: i64, max_pos: usize) -> i64 {
    p.clamp(-(max_pos as i64), max_pos as i64)
}

/// Embedding row of a clipped position: `0..=2·max_pos`.
pub fn position_bucket(p: i64, max_pos: usize) -> usize {
    (clip_position(p, max_pos) + max_pos as i64) as usize
}

/// One bucket per distance up to `max_dist`, then a shared overflow bucket.
pub fn distance_bucket(d: usize, max_dist: usize) -> usize {
    d.min(max_dist + 1)
}

/// Per-token local feature channels for one query pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalFeatures {
    pub dist_subj: Vec<usize>,
    pub dist_obj: Vec<usize>,
    pub on_path: Vec<u8>,
    pub pos_subj: Vec<i64>,
    pub pos_obj: Vec<i64>,
}

impl LocalFeatures {
    pub fn len(&self) -> usize {
        self.on_path.len()
    }

    pub fn is_empty(&self) -> bool {
        self.on_path.is_empty()
    }

    /// One row per token: index, form, then the five channels.
    pub fn write_tsv<W: Write>(&self, forms: &[&str], mut out: W) -> std::io::Result<()> {
        writeln!(out, "index\ttoken\tdist_subj\tdist_obj\ton_path\tpos_subj\tpos_obj")?;
        for i in 0..self.len() {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                i,
                forms.get(i).copied().unwrap_or(""),
                self.dist_subj[i],
                self.dist_obj[i],
                self.on_path[i],
                self.pos_subj[i],
                self.pos_obj[i]
            )?;
        }
        Ok(())
    }
}

fn span_distances(tree: &DependencyTree, span: Span, mode: DistanceMode) -> Vec<usize> {
    let mut d = match mode {
        DistanceMode::Span => tree.distances_from(span.indices()),
        DistanceMode::Head => tree.distances_from([span_head(tree, span)]),
    };
    for i in span.indices() {
        d[i] = 0;
    }
    d
}

pub fn assemble_local_features(
    tree: &DependencyTree,
    subj: Span,
    obj: Span,
    mode: DistanceMode,
) -> Result<LocalFeatures> {
    let path = shortest_dependency_path(tree, subj, obj)?;
    let n = tree.len();
    Ok(LocalFeatures {
        dist_subj: span_distances(tree, subj, mode),
        dist_obj: span_distances(tree, obj, mode),
        on_path: on_path_flags(&path, n),
        pos_subj: sequence_positions(n, subj),
        pos_obj: sequence_positions(n, obj),
    })
}
