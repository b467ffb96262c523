//! Scaled dot-product and multi-head attention with configurable score
//! activations and boolean masks.

use super::dense::DenseP;
use crate::engine::{ElemKind, ParamStore, Rng, Scalar, Tape, Tensor, Var};
use crate::error::{LabError, Result};

/// Large finite penalty for masked scores; exp(-1e9) underflows to zero and
/// stays finite through the stabilized softmax.
const MASK_PENALTY: f64 = -1e9;

/// Activation applied to attention/relation scores.
#[derive(Copy, Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreActivation {
    Softmax,
    Sigmoid,
    Tanh,
    Linear,
}

impl ScoreActivation {
    fn elem_kind(self) -> ElemKind {
        match self {
            ScoreActivation::Sigmoid => ElemKind::Sigmoid,
            ScoreActivation::Tanh => ElemKind::Tanh,
            ScoreActivation::Linear => ElemKind::Linear,
            ScoreActivation::Softmax => unreachable!("softmax is not elementwise"),
        }
    }
}

/// Attendability matrix; true means "may attend".
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BoolMat {
    pub rows: usize,
    pub cols: usize,
    data: Vec<bool>,
}

impl BoolMat {
    pub fn filled(rows: usize, cols: usize, v: bool) -> Self {
        BoolMat {
            rows,
            cols,
            data: vec![v; rows * cols],
        }
    }

    pub fn at(&self, i: usize, j: usize) -> bool {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: bool) {
        self.data[i * self.cols + j] = v;
    }

    pub fn count_true(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// Additive (0 / -1e9) and multiplicative (1 / 0) mask tensors.
    pub fn tensors<T: Scalar>(&self) -> (Tensor<T>, Tensor<T>) {
        let add = Tensor::from_fn(&[self.rows, self.cols], |i| {
            if self.data[i] {
                T::ZERO
            } else {
                T::from_f64(MASK_PENALTY)
            }
        })
        .expect("finite mask");
        let mul = Tensor::from_fn(&[self.rows, self.cols], |i| {
            if self.data[i] {
                T::ONE
            } else {
                T::ZERO
            }
        })
        .expect("finite mask");
        (add, mul)
    }
}

/// Lower-triangular attendability: position t sees positions <= t.
pub fn causal_mask(m: usize) -> BoolMat {
    assert!(m >= 1, "causal mask needs m >= 1");
    let mut b = BoolMat::filled(m, m, false);
    for i in 0..m {
        for j in 0..=i {
            b.set(i, j, true);
        }
    }
    b
}

/// All-true mask with the diagonal removed.
pub fn no_diagonal_mask(m: usize) -> BoolMat {
    let mut b = BoolMat::filled(m, m, true);
    for i in 0..m {
        b.set(i, i, false);
    }
    b
}

/// Turns raw scores [.., m_q, m_k] into attention weights.
///
/// Softmax masking is two-stage: -1e9 added before the softmax, then a hard
/// multiplicative zero after it, so fully masked rows produce exact zero rows
/// instead of NaN. Elementwise activations use the multiplicative stage only.
pub fn score_weights<T: Scalar>(
    tape: &mut Tape<T>,
    scores: Var,
    mask: Option<&BoolMat>,
    activation: ScoreActivation,
) -> Result<Var> {
    if let Some(m) = mask {
        let sh = tape.shape(scores);
        if sh.len() < 2 || sh[sh.len() - 2] != m.rows || sh[sh.len() - 1] != m.cols {
            return Err(LabError::dim("score mask", sh, &[m.rows, m.cols]));
        }
    }
    match activation {
        ScoreActivation::Softmax => {
            let masked = match mask {
                Some(m) => {
                    let (add, _) = m.tensors::<T>();
                    let addv = tape.constant(&add);
                    tape.add_broadcast(scores, addv)?
                }
                None => scores,
            };
            let soft = tape.row_softmax(masked)?;
            match mask {
                Some(m) => {
                    let (_, mul) = m.tensors::<T>();
                    let mulv = tape.constant(&mul);
                    tape.mul_broadcast(soft, mulv)
                }
                None => Ok(soft),
            }
        }
        other => {
            let w = tape.activation(scores, other.elem_kind())?;
            match mask {
                Some(m) => {
                    let (_, mul) = m.tensors::<T>();
                    let mulv = tape.constant(&mul);
                    tape.mul_broadcast(w, mulv)
                }
                None => Ok(w),
            }
        }
    }
}

/// Attention on already-projected tensors: q [.., m_q, d_p], k [.., m_k, d_p],
/// v [.., m_k, d_v]. Scores are q·kᵀ, scaled by 1/sqrt(d_p) when `scale`.
pub fn scaled_dot_attention<T: Scalar>(
    tape: &mut Tape<T>,
    q: Var,
    k: Var,
    v: Var,
    mask: Option<&BoolMat>,
    activation: ScoreActivation,
    scale: bool,
) -> Result<Var> {
    let d_p = *tape
        .shape(q)
        .last()
        .ok_or_else(|| LabError::contract("rank-0 query"))?;
    let mut scores = tape.matmul(q, k, false, true)?;
    if scale {
        scores = tape.scale(scores, 1.0 / (d_p as f64).sqrt())?;
    }
    let w = score_weights(tape, scores, mask, activation)?;
    tape.matmul(w, v, false, false)
}

/// Multi-head attention parameters. Projections follow the fused layout
/// [d_in, n_heads * d_p] with per-head key width d_p independent of d_model,
/// and the output map is [n_heads * d_p, d_out]. All projections carry biases.
#[derive(Clone, Debug)]
pub struct AttentionParams {
    pub wq: DenseP,
    pub wk: DenseP,
    pub wv: DenseP,
    pub wo: DenseP,
    pub n_heads: usize,
    pub d_p: usize,
    pub scale_scores: bool,
}

impl AttentionParams {
    #[allow(clippy::too_many_arguments)]
    pub fn init<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        d_q_in: usize,
        d_kv_in: usize,
        d_out: usize,
        n_heads: usize,
        d_p: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        if n_heads == 0 || d_p == 0 {
            return Err(LabError::config(format!(
                "attention {name}: heads and projection width must be positive"
            )));
        }
        Ok(AttentionParams {
            wq: DenseP::init(store, &format!("{name}.wq"), d_q_in, n_heads * d_p, rng)?,
            wk: DenseP::init(store, &format!("{name}.wk"), d_kv_in, n_heads * d_p, rng)?,
            wv: DenseP::init(store, &format!("{name}.wv"), d_kv_in, n_heads * d_p, rng)?,
            wo: DenseP::init(store, &format!("{name}.wo"), n_heads * d_p, d_out, rng)?,
            n_heads,
            d_p,
            scale_scores: true,
        })
    }

    pub fn param_count<T: Scalar>(&self, store: &ParamStore<T>) -> usize {
        self.wq.param_count(store)
            + self.wk.param_count(store)
            + self.wv.param_count(store)
            + self.wo.param_count(store)
    }
}

/// Adds a leading batch axis to a rank-2 value; passes rank-3 through.
pub(crate) fn ensure_batched<T: Scalar>(tape: &mut Tape<T>, x: Var) -> Result<(Var, bool)> {
    match tape.shape(x).len() {
        2 => {
            let mut s = vec![1];
            s.extend_from_slice(tape.shape(x));
            Ok((tape.reshape(x, s)?, false))
        }
        3 => Ok((x, true)),
        _ => Err(LabError::contract(format!(
            "expected rank 2 or 3, got {:?}",
            tape.shape(x)
        ))),
    }
}

/// Drops the batch axis added by [`ensure_batched`] when it was synthetic.
pub(crate) fn restore_rank<T: Scalar>(tape: &mut Tape<T>, x: Var, was_batched: bool) -> Result<Var> {
    if was_batched {
        Ok(x)
    } else {
        let s = tape.shape(x)[1..].to_vec();
        tape.reshape(x, s)
    }
}

/// Splits fused head projections [B, m, h*d] into [B, h, m, d].
pub(crate) fn split_heads<T: Scalar>(
    tape: &mut Tape<T>,
    x: Var,
    n_heads: usize,
    d_head: usize,
) -> Result<Var> {
    let sh = tape.shape(x).to_vec();
    let (b, m) = (sh[0], sh[1]);
    let r = tape.reshape(x, vec![b, m, n_heads, d_head])?;
    tape.permute(r, &[0, 2, 1, 3])
}

/// Merges [B, h, m, d] back into [B, m, h*d].
pub(crate) fn merge_heads<T: Scalar>(tape: &mut Tape<T>, x: Var) -> Result<Var> {
    let sh = tape.shape(x).to_vec();
    let (b, h, m, d) = (sh[0], sh[1], sh[2], sh[3]);
    let p = tape.permute(x, &[0, 2, 1, 3])?;
    tape.reshape(p, vec![b, m, h * d])
}

/// Full multi-head attention over independent query/key/value sources.
/// Sources are [B, m, d] or [m, d]; rank is preserved on output.
pub fn multi_head_attention<T: Scalar>(
    tape: &mut Tape<T>,
    store: &ParamStore<T>,
    params: &AttentionParams,
    query_src: Var,
    key_src: Var,
    value_src: Var,
    mask: Option<&BoolMat>,
    activation: ScoreActivation,
) -> Result<Var> {
    let (q_src, was_batched) = ensure_batched(tape, query_src)?;
    let (k_src, _) = ensure_batched(tape, key_src)?;
    let (v_src, _) = ensure_batched(tape, value_src)?;
    let q = params.wq.apply(tape, store, q_src)?;
    let k = params.wk.apply(tape, store, k_src)?;
    let v = params.wv.apply(tape, store, v_src)?;
    let q = split_heads(tape, q, params.n_heads, params.d_p)?;
    let k = split_heads(tape, k, params.n_heads, params.d_p)?;
    let v = split_heads(tape, v, params.n_heads, params.d_p)?;
    let out = scaled_dot_attention(tape, q, k, v, mask, activation, params.scale_scores)?;
    let merged = merge_heads(tape, out)?;
    let proj = params.wo.apply(tape, store, merged)?;
    restore_rank(tape, proj, was_batched)
}
