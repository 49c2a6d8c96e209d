use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamMeta {
    pub name: String,
    pub trainable: bool,
    /// Row 0 is the padding row of an embedding table: kept at zero and never updated.
    pub pad_row: bool,
}

/// Named collection of trainable tensors shared read-only by any number of tapes.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ParamSet {
    meta: Vec<ParamMeta>,
    tensors: Vec<Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.add_with(name, value, true, false)
    }

    pub fn add_with(
        &mut self,
        name: impl Into<String>,
        value: Tensor,
        trainable: bool,
        pad_row: bool,
    ) -> ParamId {
        let id = ParamId(self.tensors.len());
        self.meta.push(ParamMeta {
            name: name.into(),
            trainable,
            pad_row,
        });
        self.tensors.push(value);
        id
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn meta(&self, id: ParamId) -> &ParamMeta {
        &self.meta[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.meta[id.0].name
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.meta.iter().position(|m| m.name == name).map(ParamId)
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }
}

/// Gradient of one parameter: dense, or a sparse set of rows for lookup tables.
#[derive(Debug, Clone, PartialEq)]
pub enum Grad {
    Dense(Tensor),
    Rows {
        cols: usize,
        rows: BTreeMap<usize, Vec<f64>>,
    },
}

impl Grad {
    /// Value at flat index `i` of a parameter with `cols` columns.
    pub fn at(&self, i: usize, cols: usize) -> f64 {
        match self {
            Grad::Dense(t) => t.data()[i],
            Grad::Rows { rows, .. } => rows.get(&(i / cols)).map_or(0.0, |r| r[i % cols]),
        }
    }

    pub fn to_dense(&self, shape: (usize, usize)) -> Tensor {
        match self {
            Grad::Dense(t) => t.clone(),
            Grad::Rows { rows, .. } => {
                let mut t = Tensor::zeros(shape.0, shape.1);
                for (&r, v) in rows {
                    t.row_mut(r).copy_from_slice(v);
                }
                t
            }
        }
    }

    fn for_each_mut(&mut self, mut f: impl FnMut(Option<usize>, &mut f64)) {
        match self {
            Grad::Dense(t) => {
                let cols = t.cols().max(1);
                for (i, x) in t.data_mut().iter_mut().enumerate() {
                    f(Some(i / cols), x);
                }
            }
            Grad::Rows { rows, .. } => {
                for (&r, v) in rows.iter_mut() {
                    for x in v.iter_mut() {
                        f(Some(r), x);
                    }
                }
            }
        }
    }

    fn add(&mut self, other: &Grad, shape: (usize, usize)) {
        match (&mut *self, other) {
            (Grad::Dense(a), Grad::Dense(b)) => a.add_assign(b),
            (Grad::Dense(a), Grad::Rows { rows, .. }) => {
                for (&r, v) in rows {
                    for (x, y) in a.row_mut(r).iter_mut().zip(v) {
                        *x += y;
                    }
                }
            }
            (Grad::Rows { rows: a, .. }, Grad::Rows { rows: b, .. }) => {
                for (&r, v) in b {
                    let dst = a.entry(r).or_insert_with(|| vec![0.0; v.len()]);
                    for (x, y) in dst.iter_mut().zip(v) {
                        *x += y;
                    }
                }
            }
            (Grad::Rows { .. }, Grad::Dense(b)) => {
                let mut dense = self.to_dense(shape);
                dense.add_assign(b);
                *self = Grad::Dense(dense);
            }
        }
    }
}

/// Per-parameter gradients, indexed like the owning [`ParamSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    grads: Vec<Option<Grad>>,
}

impl ParamGrads {
    pub fn empty(n_params: usize) -> Self {
        ParamGrads {
            grads: vec![None; n_params],
        }
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn get(&self, id: ParamId) -> Option<&Grad> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    /// Dense gradient; parameters that never entered the graph report zeros.
    pub fn dense(&self, id: ParamId, params: &ParamSet) -> Tensor {
        let shape = params.get(id).shape();
        match self.get(id) {
            Some(g) => g.to_dense(shape),
            None => Tensor::zeros(shape.0, shape.1),
        }
    }

    pub fn set(&mut self, id: ParamId, grad: Grad) {
        self.grads[id.0] = Some(grad);
    }

    pub fn accumulate(&mut self, id: ParamId, grad: Grad, shape: (usize, usize)) {
        match &mut self.grads[id.0] {
            Some(existing) => existing.add(&grad, shape),
            slot @ None => *slot = Some(grad),
        }
    }

    pub fn add_assign(&mut self, other: &ParamGrads, params: &ParamSet) {
        assert_eq!(self.grads.len(), other.grads.len());
        for (i, g) in other.grads.iter().enumerate() {
            if let Some(g) = g {
                let shape = params.get(ParamId(i)).shape();
                self.accumulate(ParamId(i), g.clone(), shape);
            }
        }
    }

    pub fn scale(&mut self, k: f64) {
        for g in self.grads.iter_mut().flatten() {
            g.for_each_mut(|_, x| *x *= k);
        }
    }

    /// Drop gradients of frozen parameters and zero padding rows.
    pub fn mask_untrainable(&mut self, params: &ParamSet) {
        for (i, slot) in self.grads.iter_mut().enumerate() {
            let meta = params.meta(ParamId(i));
            if !meta.trainable {
                *slot = None;
            } else if meta.pad_row {
                if let Some(g) = slot {
                    g.for_each_mut(|r, x| {
                        if r == Some(0) {
                            *x = 0.0
                        }
                    });
                }
            }
        }
    }

    pub fn norm(&self) -> f64 {
        let mut s = 0.0;
        for g in self.grads.iter().flatten() {
            match g {
                Grad::Dense(t) => s += t.sum_squares(),
                Grad::Rows { rows, .. } => {
                    s += rows.values().flatten().map(|x| x * x).sum::<f64>();
                }
            }
        }
        s.sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.grads.iter().flatten().all(|g| match g {
            Grad::Dense(t) => t.data().iter().all(|x| x.is_finite()),
            Grad::Rows { rows, .. } => rows.values().flatten().all(|x| x.is_finite()),
        })
    }
}
