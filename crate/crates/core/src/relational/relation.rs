//! Inner-product relation tensors between sequence elements.

use crate::engine::{ParamStore, Rng, Scalar, Tape, Tensor, Var};
use crate::error::{LabError, Result};
use crate::nn::attention::{ensure_batched, split_heads};
use crate::nn::{DenseP, ScoreActivation};

/// Per-head left/right linear maps producing relation scores
/// r[i,j,k] = <W1_k x_i, W2_k x_j>. The d_r per-head maps of each side are
/// fused into one [d_in, d_r*d_p] projection. With `symmetric`, left and
/// right are one parameter object and gradients accumulate once.
#[derive(Clone, Debug)]
pub struct RelationEncoders {
    pub left: DenseP,
    pub right: DenseP,
    pub d_r: usize,
    pub d_p: usize,
    pub symmetric: bool,
}

impl RelationEncoders {
    pub fn init<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        d_in: usize,
        d_r: usize,
        d_p: usize,
        symmetric: bool,
        rng: &mut Rng,
    ) -> Result<Self> {
        if d_r == 0 || d_p == 0 {
            return Err(LabError::config(format!(
                "relation encoders {name}: d_r and d_p must be positive"
            )));
        }
        let left = DenseP::init(store, &format!("{name}.left"), d_in, d_r * d_p, rng)?;
        let right = if symmetric {
            left.clone()
        } else {
            DenseP::init(store, &format!("{name}.right"), d_in, d_r * d_p, rng)?
        };
        Ok(RelationEncoders {
            left,
            right,
            d_r,
            d_p,
            symmetric,
        })
    }

    pub fn param_count<T: Scalar>(&self, store: &ParamStore<T>) -> usize {
        let l = self.left.param_count(store);
        if self.symmetric {
            l
        } else {
            l + self.right.param_count(store)
        }
    }

    /// Raw (unactivated) relation scores [B, d_r, m, m] for x of shape
    /// [B, m, d] or [m, d] (promoted). `scale` divides by sqrt(d_p).
    pub fn scores<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        x: Var,
        scale: bool,
    ) -> Result<Var> {
        let (xb, _) = ensure_batched(tape, x)?;
        if tape.shape(xb)[2] != self.left.d_in {
            return Err(LabError::dim(
                "relation encoder input",
                tape.shape(xb),
                &[self.left.d_in],
            ));
        }
        let q = self.left.apply(tape, store, xb)?;
        let k = self.right.apply(tape, store, xb)?;
        let q = split_heads(tape, q, self.d_r, self.d_p)?;
        let k = split_heads(tape, k, self.d_r, self.d_p)?;
        let mut scores = tape.matmul(q, k, false, true)?;
        if scale {
            scores = tape.scale(scores, 1.0 / (self.d_p as f64).sqrt())?;
        }
        Ok(scores)
    }
}

/// Which activation has been applied to stored relation values.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum AppliedActivation {
    None,
    Softmax,
    Sigmoid,
    Tanh,
    Linear,
}

/// Evaluated relation tensor in [m, m, d_r] layout (head axis last).
pub struct RelationTensor<T> {
    pub values: Tensor<T>,
    pub activation_applied: AppliedActivation,
}

impl<T: Scalar> RelationTensor<T> {
    pub fn m(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn d_r(&self) -> usize {
        self.values.shape()[2]
    }

    pub fn at(&self, i: usize, j: usize, k: usize) -> T {
        self.values.at(&[i, j, k])
    }
}

/// Evaluates the raw relation tensor of a single sequence x [m, d]:
/// values[i,j,k] = <W1_k x_i, W2_k x_j>, activation none.
pub fn relation_tensor<T: Scalar>(
    store: &ParamStore<T>,
    enc: &RelationEncoders,
    x: &Tensor<T>,
    scale: bool,
) -> Result<RelationTensor<T>> {
    if x.rank() != 2 {
        return Err(LabError::contract(format!(
            "relation_tensor expects [m, d], got {:?}",
            x.shape()
        )));
    }
    let m = x.shape()[0];
    let mut tape = Tape::new();
    let vx = tape.input(x);
    let scores = enc.scores(&mut tape, store, vx, scale)?; // [1, d_r, m, m]
    let flat = tape.reshape(scores, vec![enc.d_r, m, m])?;
    let layered = tape.permute(flat, &[1, 2, 0])?; // [m, m, d_r]
    Ok(RelationTensor {
        values: tape.tensor(layered),
        activation_applied: AppliedActivation::None,
    })
}

/// Applies sigma_rel to a raw relation tensor. Softmax normalizes each row
/// over j separately per head.
pub fn activate_relation_tensor<T: Scalar>(
    r: RelationTensor<T>,
    activation: ScoreActivation,
) -> Result<RelationTensor<T>> {
    if r.activation_applied != AppliedActivation::None {
        return Err(LabError::contract("relation tensor already activated"));
    }
    let m = r.m();
    let mut tape = Tape::new();
    let v = tape.input(&r.values);
    // softmax must act over the j axis: move heads first, rows last
    let headed = tape.permute(v, &[2, 0, 1])?; // [d_r, m, m]
    let act = crate::nn::score_weights(&mut tape, headed, None, activation)?;
    let back = tape.permute(act, &[1, 2, 0])?;
    let applied = match activation {
        ScoreActivation::Softmax => AppliedActivation::Softmax,
        ScoreActivation::Sigmoid => AppliedActivation::Sigmoid,
        ScoreActivation::Tanh => AppliedActivation::Tanh,
        ScoreActivation::Linear => AppliedActivation::Linear,
    };
    let _ = m;
    Ok(RelationTensor {
        values: tape.tensor(back),
        activation_applied: applied,
    })
}
