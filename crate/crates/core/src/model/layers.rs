//! Graph-building blocks: LSTM encoders and the two enriched attention functions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{softmax, NodeId, ParamId, Tape};

/// One LSTM layer. Gates are packed `[input, forget, cell, output]` along
/// columns of `input` (`in × 4H`), `recurrent` (`H × 4H`) and `bias` (`1 × 4H`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LstmWeights {
    pub input: ParamId,
    pub recurrent: ParamId,
    pub bias: ParamId,
    pub hidden: usize,
}

/// Runs one layer over the rows of `x` and returns all hidden states (`n × H`).
pub fn lstm_layer(tape: &mut Tape<'_>, x: NodeId, w: &LstmWeights) -> Result<NodeId> {
    let hsz = w.hidden;
    let wx = tape.param(w.input);
    let wh = tape.param(w.recurrent);
    let b = tape.param(w.bias);
    let xw = tape.matmul(x, wx)?;
    let xw = tape.add_row(xw, b)?;
    let n = tape.value(x).rows();

    let mut states = Vec::with_capacity(n);
    let mut prev: Option<(NodeId, NodeId)> = None;
    for t in 0..n {
        let mut gates = tape.row(xw, t)?;
        if let Some((h, _)) = prev {
            let rec = tape.matmul(h, wh)?;
            gates = tape.add(gates, rec)?;
        }
        let i = tape.slice(gates, 0, 1, 0, hsz)?;
        let i = tape.sigmoid(i);
        let g = tape.slice(gates, 0, 1, 2 * hsz, hsz)?;
        let g = tape.tanh(g);
        let o = tape.slice(gates, 0, 1, 3 * hsz, hsz)?;
        let o = tape.sigmoid(o);
        let mut c = tape.mul(i, g)?;
        if let Some((_, c_prev)) = prev {
            let f = tape.slice(gates, 0, 1, hsz, hsz)?;
            let f = tape.sigmoid(f);
            let keep = tape.mul(f, c_prev)?;
            c = tape.add(c, keep)?;
        }
        let tc = tape.tanh(c);
        let h = tape.mul(o, tc)?;
        states.push(h);
        prev = Some((h, c));
    }
    tape.concat_rows(&states)
}

/// Hidden states of the top layer and the final state `q = h_n`.
#[derive(Debug, Clone, Copy)]
pub struct EncodingNodes {
    pub states: NodeId,
    pub last: NodeId,
}

pub fn lstm_forward(tape: &mut Tape<'_>, x: NodeId, layers: &[LstmWeights]) -> Result<EncodingNodes> {
    let mut h = x;
    for w in layers {
        h = lstm_layer(tape, h, w)?;
    }
    let n = tape.value(h).rows();
    let last = tape.row(h, n - 1)?;
    Ok(EncodingNodes { states: h, last })
}

/// Final hidden state of the path LSTM over the path tokens' word vectors.
pub fn encode_sdp(
    tape: &mut Tape<'_>,
    word_table: NodeId,
    path_words: &[usize],
    w: &LstmWeights,
) -> Result<NodeId> {
    if path_words.is_empty() {
        return Err(Error::Config("empty shortest dependency path".into()));
    }
    let x = tape.lookup(word_table, path_words)?;
    let h = lstm_layer(tape, x, w)?;
    tape.row(h, path_words.len() - 1)
}

/// `g` as the concatenation of the present parts, in the order given.
pub fn build_global_feature(tape: &mut Tape<'_>, parts: &[Option<NodeId>]) -> Result<Option<NodeId>> {
    let present: Vec<NodeId> = parts.iter().flatten().copied().collect();
    if present.is_empty() {
        return Ok(None);
    }
    tape.concat_cols(&present).map(Some)
}

/// Normalized attention weights: a max-shifted softmax.
pub fn attention_weights(scores: &[f64]) -> Vec<f64> {
    softmax(scores)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdditiveParams {
    pub v: ParamId,
    pub w_h: ParamId,
    pub w_q: ParamId,
    pub w_s: ParamId,
    pub w_o: ParamId,
    pub w_l: Option<ParamId>,
    pub w_g: Option<ParamId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DotParams {
    pub w_q: ParamId,
    pub w_k: ParamId,
    pub w_v: ParamId,
}

#[derive(Debug, Clone, Copy)]
pub struct AttentionNodes {
    /// `n × 1` scores `e`.
    pub scores: NodeId,
    /// `n × 1` weights `α`.
    pub weights: NodeId,
    /// `1 × H` pooled representation `z`.
    pub pooled: NodeId,
    /// Per-token projections (dot-product attention only).
    pub projections: Option<[NodeId; 3]>,
}

fn pool(tape: &mut Tape<'_>, scores: NodeId, values: NodeId) -> Result<(NodeId, NodeId)> {
    let weights = tape.softmax(scores);
    let wt = tape.transpose(weights);
    let pooled = tape.matmul(wt, values)?;
    Ok((weights, pooled))
}

/// `e_i = vᵀ tanh(W_h h_i + W_q q + W_s p_i^s + W_o p_i^o + W_l l_i + W_g g)`,
/// `z = Σ α_i h_i`. Projection matrices are stored input-major (`in × A`).
#[allow(clippy::too_many_arguments)]
pub fn additive_attention(
    tape: &mut Tape<'_>,
    p: &AdditiveParams,
    states: NodeId,
    last: NodeId,
    pos_subj: NodeId,
    pos_obj: NodeId,
    local: Option<NodeId>,
    global: Option<NodeId>,
) -> Result<AttentionNodes> {
    let w_h = tape.param(p.w_h);
    let mut pre = tape.matmul(states, w_h)?;
    let w_s = tape.param(p.w_s);
    let s = tape.matmul(pos_subj, w_s)?;
    pre = tape.add(pre, s)?;
    let w_o = tape.param(p.w_o);
    let o = tape.matmul(pos_obj, w_o)?;
    pre = tape.add(pre, o)?;
    if let Some(l) = local {
        let w_l = p
            .w_l
            .ok_or_else(|| Error::Config("local features given but model has no W_l".into()))?;
        let w_l = tape.param(w_l);
        let lt = tape.matmul(l, w_l)?;
        pre = tape.add(pre, lt)?;
    }
    let w_q = tape.param(p.w_q);
    let mut row = tape.matmul(last, w_q)?;
    if let Some(g) = global {
        let w_g = p
            .w_g
            .ok_or_else(|| Error::Config("global feature given but model has no W_g".into()))?;
        let w_g = tape.param(w_g);
        let gt = tape.matmul(g, w_g)?;
        row = tape.add(row, gt)?;
    }
    pre = tape.add_row(pre, row)?;
    let act = tape.tanh(pre);
    let v = tape.param(p.v);
    let scores = tape.matmul(act, v)?;
    let (weights, pooled) = pool(tape, scores, states)?;
    Ok(AttentionNodes {
        scores,
        weights,
        pooled,
        projections: None,
    })
}

/// `e_i = (q_i·k_i + l_i·l_i + g·g) / √d` with `q_i = W^Q h_i`, `k_i = W^K h_i`;
/// `z = Σ α_i W^V h_i`.
pub fn dot_attention(
    tape: &mut Tape<'_>,
    p: &DotParams,
    states: NodeId,
    local: Option<NodeId>,
    global: Option<NodeId>,
) -> Result<AttentionNodes> {
    let wq = tape.param(p.w_q);
    let wk = tape.param(p.w_k);
    let wv = tape.param(p.w_v);
    let q = tape.matmul(states, wq)?;
    let k = tape.matmul(states, wk)?;
    let v = tape.matmul(states, wv)?;
    let d = tape.value(q).cols();
    let mut e = tape.dot(q, k)?;
    if let Some(l) = local {
        let ll = tape.dot(l, l)?;
        e = tape.add(e, ll)?;
    }
    if let Some(g) = global {
        let gg = tape.dot(g, g)?;
        e = tape.add_row(e, gg)?;
    }
    let scores = tape.scale(e, 1.0 / (d as f64).sqrt());
    let (weights, pooled) = pool(tape, scores, v)?;
    Ok(AttentionNodes {
        scores,
        weights,
        pooled,
        projections: Some([q, k, v]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{sigmoid, ParamSet, Tensor};

    fn lstm_params(ps: &mut ParamSet, input: usize, hidden: usize, f: impl Fn(usize, usize) -> f64) -> LstmWeights {
        LstmWeights {
            input: ps.add("wx", Tensor::from_fn(input, 4 * hidden, &f)),
            recurrent: ps.add("wh", Tensor::from_fn(hidden, 4 * hidden, |r, c| f(r + 7, c))),
            bias: ps.add("b", Tensor::from_fn(1, 4 * hidden, |r, c| f(r + 13, c))),
            hidden,
        }
    }

    #[test]
    fn zero_weights_give_zero_states() {
        let mut ps = ParamSet::new();
        let w1 = lstm_params(&mut ps, 3, 4, |_, _| 0.0);
        let w2 = lstm_params(&mut ps, 4, 4, |_, _| 0.0);
        let mut tape = Tape::new(&ps, 0);
        let x = tape.input(Tensor::from_fn(5, 3, |r, c| (r + c) as f64));
        let enc = lstm_forward(&mut tape, x, &[w1, w2]).unwrap();
        assert_eq!(tape.value(enc.states), &Tensor::zeros(5, 4));
        assert_eq!(tape.value(enc.states).rows(), 5);
    }

    #[test]
    fn scalar_lstm_two_steps_by_hand() {
        // gates i, f, g, o with scalar weights
        let wx = [0.5, -0.3, 0.8, 0.2];
        let wh = [0.1, 0.4, -0.6, 0.9];
        let b = [0.0, 1.0, 0.1, -0.2];
        let mut ps = ParamSet::new();
        let w = LstmWeights {
            input: ps.add("wx", Tensor::row_vector(wx.to_vec())),
            recurrent: ps.add("wh", Tensor::row_vector(wh.to_vec())),
            bias: ps.add("b", Tensor::row_vector(b.to_vec())),
            hidden: 1,
        };
        let xs = [1.5, -0.7];
        let mut tape = Tape::new(&ps, 0);
        let x = tape.input(Tensor::from_vec(2, 1, xs.to_vec()));
        let enc = lstm_forward(&mut tape, x, &[w]).unwrap();

        let (mut h, mut c) = (0.0f64, 0.0f64);
        let mut expect = Vec::new();
        for &xt in &xs {
            let a: Vec<f64> = (0..4).map(|k| wx[k] * xt + wh[k] * h + b[k]).collect();
            let (i, f, g, o) = (sigmoid(a[0]), sigmoid(a[1]), a[2].tanh(), sigmoid(a[3]));
            c = f * c + i * g;
            h = o * c.tanh();
            expect.push(h);
        }
        let got = tape.value(enc.states).data().to_vec();
        for (g, e) in got.iter().zip(&expect) {
            assert!((g - e).abs() < 1e-14, "{got:?} vs {expect:?}");
        }
        assert_eq!(tape.value(enc.last).item(), got[1]);
    }

    #[test]
    fn empty_path_is_rejected() {
        let mut ps = ParamSet::new();
        let table = ps.add("emb", Tensor::zeros(3, 1));
        let w = lstm_params(&mut ps, 1, 1, |_, _| 0.0);
        let mut tape = Tape::new(&ps, 0);
        let t = tape.param(table);
        assert!(encode_sdp(&mut tape, t, &[], &w).is_err());
    }

    #[test]
    fn softmax_cases() {
        assert_eq!(attention_weights(&[0.0; 4]), vec![0.25; 4]);
        for c in [-3.0, 0.0, 11.5, 700.0] {
            let a = attention_weights(&[c, c + 2f64.ln()]);
            assert!((a[0] - 1.0 / 3.0).abs() < 1e-12);
            assert!((a[1] - 2.0 / 3.0).abs() < 1e-12);
        }
    }

    /// n = 2, every dimension 1: scores, weights and pooled vector by hand.
    #[test]
    fn additive_scalar_oracle() {
        let (v, wh, wq, ws, wo, wl, wg) = (1.3, 0.7, -0.4, 0.25, -0.6, 0.9, 0.35);
        let h = [0.2, -0.5];
        let ps_ = [0.8, -0.1];
        let po = [-0.3, 0.6];
        let l = [1.0, 0.0];
        let g = 0.45;
        let mut ps = ParamSet::new();
        let p = AdditiveParams {
            v: ps.add("v", Tensor::scalar(v)),
            w_h: ps.add("wh", Tensor::scalar(wh)),
            w_q: ps.add("wq", Tensor::scalar(wq)),
            w_s: ps.add("ws", Tensor::scalar(ws)),
            w_o: ps.add("wo", Tensor::scalar(wo)),
            w_l: Some(ps.add("wl", Tensor::scalar(wl))),
            w_g: Some(ps.add("wg", Tensor::scalar(wg))),
        };
        let mut tape = Tape::new(&ps, 0);
        let hn = tape.input(Tensor::from_vec(2, 1, h.to_vec()));
        let qn = tape.input(Tensor::scalar(h[1]));
        let psn = tape.input(Tensor::from_vec(2, 1, ps_.to_vec()));
        let pon = tape.input(Tensor::from_vec(2, 1, po.to_vec()));
        let ln = tape.input(Tensor::from_vec(2, 1, l.to_vec()));
        let gn = tape.input(Tensor::scalar(g));
        let out = additive_attention(&mut tape, &p, hn, qn, psn, pon, Some(ln), Some(gn)).unwrap();

        let e: Vec<f64> = (0..2)
            .map(|i| v * (wh * h[i] + wq * h[1] + ws * ps_[i] + wo * po[i] + wl * l[i] + wg * g).tanh())
            .collect();
        let z0 = e[0].exp() / (e[0].exp() + e[1].exp());
        let alpha = [z0, 1.0 - z0];
        let pooled = alpha[0] * h[0] + alpha[1] * h[1];
        for i in 0..2 {
            assert!((tape.value(out.scores).data()[i] - e[i]).abs() < 1e-14);
            assert!((tape.value(out.weights).data()[i] - alpha[i]).abs() < 1e-14);
        }
        assert!((tape.value(out.pooled).item() - pooled).abs() < 1e-14);
    }

    #[test]
    fn additive_zero_v_is_uniform() {
        let mut ps = ParamSet::new();
        let p = AdditiveParams {
            v: ps.add("v", Tensor::zeros(2, 1)),
            w_h: ps.add("wh", Tensor::from_fn(3, 2, |r, c| (r + c) as f64)),
            w_q: ps.add("wq", Tensor::from_fn(3, 2, |r, c| r as f64 - c as f64)),
            w_s: ps.add("ws", Tensor::from_fn(1, 2, |_, c| c as f64)),
            w_o: ps.add("wo", Tensor::from_fn(1, 2, |_, c| c as f64)),
            w_l: None,
            w_g: None,
        };
        let mut tape = Tape::new(&ps, 0);
        let h = tape.input(Tensor::from_fn(5, 3, |r, c| (r * c) as f64 * 0.1));
        let q = tape.row(h, 4).unwrap();
        let s = tape.input(Tensor::from_fn(5, 1, |r, _| r as f64));
        let o = tape.input(Tensor::from_fn(5, 1, |r, _| -(r as f64)));
        let out = additive_attention(&mut tape, &p, h, q, s, o, None, None).unwrap();
        for &a in tape.value(out.weights).data() {
            assert!((a - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn additive_one_hot_pools_single_state() {
        let mut ps = ParamSet::new();
        // huge score on token 2 via the position channel
        let p = AdditiveParams {
            v: ps.add("v", Tensor::scalar(1000.0)),
            w_h: ps.add("wh", Tensor::zeros(2, 1)),
            w_q: ps.add("wq", Tensor::zeros(2, 1)),
            w_s: ps.add("ws", Tensor::scalar(1.0)),
            w_o: ps.add("wo", Tensor::scalar(0.0)),
            w_l: None,
            w_g: None,
        };
        let mut tape = Tape::new(&ps, 0);
        let h = tape.input(Tensor::from_fn(4, 2, |r, c| (r * 2 + c) as f64));
        let q = tape.row(h, 3).unwrap();
        let s = tape.input(Tensor::from_vec(4, 1, vec![-1.0, -1.0, 1.0, -1.0]));
        let o = tape.input(Tensor::zeros(4, 1));
        let out = additive_attention(&mut tape, &p, h, q, s, o, None, None).unwrap();
        assert_eq!(tape.value(out.pooled).data(), &[4.0, 5.0]);
    }

    #[test]
    fn dot_scalar_oracle() {
        let (wq, wk, wv) = (0.8, -1.1, 0.5);
        let h = [0.3, -0.9, 0.6];
        let l = [[0.2, 1.0], [0.0, 0.0], [-0.5, 1.0]];
        let g = [0.4, -0.7];
        let mut ps = ParamSet::new();
        let p = DotParams {
            w_q: ps.add("wq", Tensor::scalar(wq)),
            w_k: ps.add("wk", Tensor::scalar(wk)),
            w_v: ps.add("wv", Tensor::scalar(wv)),
        };
        let mut tape = Tape::new(&ps, 0);
        let hn = tape.input(Tensor::from_vec(3, 1, h.to_vec()));
        let ln = tape.input(Tensor::from_vec(3, 2, l.concat()));
        let gn = tape.input(Tensor::row_vector(g.to_vec()));
        let out = dot_attention(&mut tape, &p, hn, Some(ln), Some(gn)).unwrap();
        let gg = g[0] * g[0] + g[1] * g[1];
        let e: Vec<f64> = (0..3)
            .map(|i| (wq * h[i] * wk * h[i] + l[i][0] * l[i][0] + l[i][1] * l[i][1] + gg) / 1.0)
            .collect();
        let zsum: f64 = e.iter().map(|x| x.exp()).sum();
        let alpha: Vec<f64> = e.iter().map(|x| x.exp() / zsum).collect();
        let pooled: f64 = (0..3).map(|i| alpha[i] * wv * h[i]).sum();
        for i in 0..3 {
            assert!((tape.value(out.scores).data()[i] - e[i]).abs() < 1e-14);
            assert!((tape.value(out.weights).data()[i] - alpha[i]).abs() < 1e-14);
        }
        assert!((tape.value(out.pooled).item() - pooled).abs() < 1e-14);
    }

    #[test]
    fn dot_degenerate_cases_are_uniform() {
        let mut ps = ParamSet::new();
        let p = DotParams {
            w_q: ps.add("wq", Tensor::zeros(2, 2)),
            w_k: ps.add("wk", Tensor::from_fn(2, 2, |r, c| (r + c) as f64)),
            w_v: ps.add("wv", Tensor::identity(2)),
        };
        let mut tape = Tape::new(&ps, 0);
        let h = tape.input(Tensor::from_fn(3, 2, |r, c| r as f64 - c as f64));
        let out = dot_attention(&mut tape, &p, h, None, None).unwrap();
        for &a in tape.value(out.weights).data() {
            assert!((a - 1.0 / 3.0).abs() < 1e-15);
        }

        // d = 1, q_i = k_i = 1 for every token
        let mut ps = ParamSet::new();
        let p = DotParams {
            w_q: ps.add("wq", Tensor::scalar(1.0)),
            w_k: ps.add("wk", Tensor::scalar(1.0)),
            w_v: ps.add("wv", Tensor::scalar(1.0)),
        };
        let mut tape = Tape::new(&ps, 0);
        let h = tape.input(Tensor::from_vec(4, 1, vec![1.0; 4]));
        let out = dot_attention(&mut tape, &p, h, None, None).unwrap();
        assert!(tape.value(out.scores).data().iter().all(|&e| e == 1.0));
        assert!(tape.value(out.weights).data().iter().all(|&a| (a - 0.25).abs() < 1e-15));
    }
}
