//! Affine projections and position-wise feedforward blocks.

use crate::engine::{ElemKind, ParamStore, Pid, Rng, Scalar, Tape, Tensor, Var};
use crate::error::{LabError, Result};

/// An affine map y = xW + b with W: [d_in, d_out]. Bias is optional; init
/// follows uniform Glorot for W and zeros for b.
#[derive(Clone, Debug)]
pub struct DenseP {
    pub w: Pid,
    pub b: Option<Pid>,
    pub d_in: usize,
    pub d_out: usize,
}

impl DenseP {
    pub fn init<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        d_in: usize,
        d_out: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        Self::init_inner(store, name, d_in, d_out, rng, true, 1.0)
    }

    pub fn init_no_bias<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        d_in: usize,
        d_out: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        Self::init_inner(store, name, d_in, d_out, rng, false, 1.0)
    }

    /// Init with the uniform limit scaled by `gain`; gains below 1 keep the
    /// layer's outputs close to zero at initialization.
    pub fn init_with_gain<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        d_in: usize,
        d_out: usize,
        rng: &mut Rng,
        gain: f64,
    ) -> Result<Self> {
        Self::init_inner(store, name, d_in, d_out, rng, true, gain)
    }

    fn init_inner<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        d_in: usize,
        d_out: usize,
        rng: &mut Rng,
        bias: bool,
        gain: f64,
    ) -> Result<Self> {
        if d_in == 0 || d_out == 0 {
            return Err(LabError::config(format!(
                "dense {name} has zero width ({d_in}x{d_out})"
            )));
        }
        let limit = gain * (6.0 / (d_in + d_out) as f64).sqrt();
        let w = store.add(
            format!("{name}.w"),
            Tensor::rand_uniform(rng, &[d_in, d_out], -limit, limit),
        )?;
        let b = if bias {
            Some(store.add(format!("{name}.b"), Tensor::zeros(&[d_out]))?)
        } else {
            None
        };
        Ok(DenseP { w, b, d_in, d_out })
    }

    /// Applies the map to x of shape [.., d_in].
    pub fn apply<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        x: Var,
    ) -> Result<Var> {
        let w = tape.param(store, self.w);
        let h = tape.matmul(x, w, false, false)?;
        match self.b {
            Some(b) => {
                let bv = tape.param(store, b);
                tape.add_broadcast(h, bv)
            }
            None => Ok(h),
        }
    }

    pub fn param_count<T: Scalar>(&self, store: &ParamStore<T>) -> usize {
        store.get(self.w).len() + self.b.map_or(0, |b| store.get(b).len())
    }
}

/// Two-layer position-wise network: activation(x W1 + b1) W2 + b2.
#[derive(Clone, Debug)]
pub struct FeedForwardParams {
    pub w1: DenseP,
    pub w2: DenseP,
    pub act: ElemKind,
}

impl FeedForwardParams {
    pub fn init<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        d_model: usize,
        d_ff: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        if d_ff == 0 {
            return Err(LabError::config(format!("feedforward {name} has d_ff = 0")));
        }
        Ok(FeedForwardParams {
            w1: DenseP::init(store, &format!("{name}.in"), d_model, d_ff, rng)?,
            w2: DenseP::init(store, &format!("{name}.out"), d_ff, d_model, rng)?,
            act: ElemKind::Relu,
        })
    }

    pub fn apply<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        x: Var,
    ) -> Result<Var> {
        let h = self.w1.apply(tape, store, x)?;
        let h = tape.activation(h, self.act)?;
        self.w2.apply(tape, store, h)
    }

    /// Overwrites the weights so the block computes the identity exactly:
    /// W1 = [I, -I], W2 = [I; -I], zero biases, so relu(xW1)W2 returns
    /// max(x,0) - max(-x,0) = x bit-for-bit. Requires d_ff = 2 * d_model.
    /// Used by reduction tests that need a pass-through feedforward.
    pub fn set_identity<T: Scalar>(&self, store: &mut ParamStore<T>) -> Result<()> {
        let d = self.w1.d_in;
        if self.w1.d_out != 2 * d || self.act != ElemKind::Relu {
            return Err(LabError::contract(format!(
                "identity feedforward needs relu and d_ff = 2*d_model, got d_ff {} for d {}",
                self.w1.d_out, d
            )));
        }
        let w1 = store.get_mut(self.w1.w).data_mut();
        w1.fill(T::ZERO);
        for i in 0..d {
            w1[i * 2 * d + i] = T::ONE;
            w1[i * 2 * d + d + i] = -T::ONE;
        }
        let w2 = store.get_mut(self.w2.w).data_mut();
        w2.fill(T::ZERO);
        for i in 0..d {
            w2[i * d + i] = T::ONE;
            w2[(d + i) * d + i] = -T::ONE;
        }
        if let Some(b) = self.w1.b {
            store.get_mut(b).data_mut().fill(T::ZERO);
        }
        if let Some(b) = self.w2.b {
            store.get_mut(b).data_mut().fill(T::ZERO);
        }
        Ok(())
    }

    pub fn param_count<T: Scalar>(&self, store: &ParamStore<T>) -> usize {
        self.w1.param_count(store) + self.w2.param_count(store)
    }
}

/// Gain/bias pair for layer normalization over a trailing width of d.
#[derive(Clone, Debug)]
pub struct LayerNormParams {
    pub gain: Pid,
    pub bias: Pid,
    pub eps: f64,
}

impl LayerNormParams {
    pub fn init<T: Scalar>(store: &mut ParamStore<T>, name: &str, d: usize) -> Result<Self> {
        Ok(LayerNormParams {
            gain: store.add(format!("{name}.gain"), Tensor::filled(&[d], T::ONE))?,
            bias: store.add(format!("{name}.bias"), Tensor::zeros(&[d]))?,
            eps: 1e-5,
        })
    }

    pub fn apply<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        x: Var,
    ) -> Result<Var> {
        let g = tape.param(store, self.gain);
        let b = tape.param(store, self.bias);
        tape.layer_norm(x, g, b, self.eps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feed_forward_is_position_wise() {
        let mut rng = Rng::new(11);
        let mut store = ParamStore::<f64>::new();
        let ffn = FeedForwardParams::init(&mut store, "ffn", 4, 8, &mut rng).unwrap();
        let x = Tensor::<f64>::rand_normal(&mut rng, &[3, 4], 1.0);
        let mut tape = Tape::new();
        let vx = tape.input(&x);
        let full = tape.apply_ffn(&ffn, &store, vx);
        // row by row
        for r in 0..3 {
            let row = Tensor::new(vec![1, 4], x.data()[r * 4..(r + 1) * 4].to_vec()).unwrap();
            let vr = tape.input(&row);
            let out = tape.apply_ffn(&ffn, &store, vr);
            for j in 0..4 {
                assert!((tape.value(full)[r * 4 + j] - tape.value(out)[j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn feed_forward_matches_unfused_oracle() {
        let mut rng = Rng::new(13);
        let mut store = ParamStore::<f64>::new();
        let ffn = FeedForwardParams::init(&mut store, "ffn", 3, 5, &mut rng).unwrap();
        let x = Tensor::<f64>::rand_normal(&mut rng, &[2, 3], 1.0);
        let mut tape = Tape::new();
        let vx = tape.input(&x);
        let y = tape.apply_ffn(&ffn, &store, vx);
        let w1 = store.get(ffn.w1.w);
        let b1 = store.get(ffn.w1.b.unwrap());
        let w2 = store.get(ffn.w2.w);
        let b2 = store.get(ffn.w2.b.unwrap());
        for r in 0..2 {
            let mut hidden = vec![0.0f64; 5];
            for j in 0..5 {
                let mut acc = b1.data()[j];
                for k in 0..3 {
                    acc += x.at(&[r, k]) * w1.at(&[k, j]);
                }
                hidden[j] = acc.max(0.0);
            }
            for j in 0..3 {
                let mut acc = b2.data()[j];
                for k in 0..5 {
                    acc += hidden[k] * w2.at(&[k, j]);
                }
                assert!((tape.value(y)[r * 3 + j] - acc).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn zeroed_feed_forward_outputs_zero() {
        let mut rng = Rng::new(14);
        let mut store = ParamStore::<f64>::new();
        let ffn = FeedForwardParams::init(&mut store, "ffn", 3, 4, &mut rng).unwrap();
        for pid in store.pids().collect::<Vec<_>>() {
            store.get_mut(pid).data_mut().fill(0.0);
        }
        let x = Tensor::<f64>::rand_normal(&mut rng, &[2, 3], 1.0);
        let mut tape = Tape::new();
        let vx = tape.input(&x);
        let y = tape.apply_ffn(&ffn, &store, vx);
        assert!(tape.value(y).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_feed_forward_is_exact() {
        let mut rng = Rng::new(15);
        let mut store = ParamStore::<f64>::new();
        let ffn = FeedForwardParams::init(&mut store, "ffn", 4, 8, &mut rng).unwrap();
        ffn.set_identity(&mut store).unwrap();
        let x = Tensor::<f64>::rand_normal(&mut rng, &[5, 4], 2.0);
        let mut tape = Tape::new();
        let vx = tape.input(&x);
        let y = tape.apply_ffn(&ffn, &store, vx);
        assert_eq!(tape.value(y), x.data(), "identity must be bit-exact");
        // wrong width is a contract error
        let narrow = FeedForwardParams::init(&mut store, "ffn2", 4, 6, &mut rng).unwrap();
        assert!(narrow.set_identity(&mut store).is_err());
    }

    impl<T: Scalar> Tape<T> {
        fn apply_ffn(&mut self, ffn: &FeedForwardParams, store: &ParamStore<T>, x: Var) -> Var {
            ffn.apply(self, store, x).unwrap()
        }
    }
}
