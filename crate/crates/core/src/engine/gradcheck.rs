//! Finite-difference verification of tape gradients.

use super::scalar::Scalar;
use super::tape::{ParamStore, Pid, Tape, Var};
use super::tensor::Tensor;
use crate::error::{LabError, Result};

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / 1.0f64.max(a.abs()).max(n.abs())
}

/// Compares the tape gradient of `f` at `x` against central differences with
/// step `h`, coordinate by coordinate. Returns the worst relative error,
/// guarded as |a-n| / max(1, |a|, |n|). `f` must produce a scalar.
pub fn grad_check<T: Scalar>(
    f: &mut dyn FnMut(&mut Tape<T>, Var) -> Result<Var>,
    x: &Tensor<T>,
    h: f64,
) -> Result<f64> {
    let analytic = {
        let mut tape = Tape::new();
        let vx = tape.input(x);
        let loss = f(&mut tape, vx)?;
        if tape.value(loss).len() != 1 {
            return Err(LabError::contract(format!(
                "grad_check target must be scalar, got shape {:?}",
                tape.shape(loss)
            )));
        }
        tape.backward(loss)?;
        tape.grad(vx).map(<[T]>::to_vec).unwrap_or_else(|| vec![T::ZERO; x.len()])
    };
    let eval = |f: &mut dyn FnMut(&mut Tape<T>, Var) -> Result<Var>,
                pt: &Tensor<T>|
     -> Result<f64> {
        let mut tape = Tape::new();
        let vx = tape.input(pt);
        let loss = f(&mut tape, vx)?;
        Ok(tape.scalar_value(loss).to_f64())
    };
    let hs = T::from_f64(h);
    let mut worst = 0.0f64;
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + hs;
        let lp = eval(f, &probe)?;
        probe.data_mut()[i] = orig - hs;
        let lm = eval(f, &probe)?;
        probe.data_mut()[i] = orig;
        let numeric = (lp - lm) / (2.0 * h);
        worst = worst.max(rel_err(analytic[i].to_f64(), numeric));
    }
    Ok(worst)
}

/// Finite-difference check for parameters bound from a store. The analytic
/// gradient is computed once; each listed (parameter, coordinate) pair is then
/// perturbed in place and compared. Returns the worst relative error.
pub fn grad_check_params<T: Scalar>(
    store: &mut ParamStore<T>,
    f: &mut dyn FnMut(&mut Tape<T>, &ParamStore<T>) -> Result<Var>,
    h: f64,
    coords: &[(Pid, usize)],
) -> Result<f64> {
    store.zero_grads();
    {
        let mut tape = Tape::new();
        let loss = f(&mut tape, store)?;
        if tape.value(loss).len() != 1 {
            return Err(LabError::contract(format!(
                "grad_check_params target must be scalar, got shape {:?}",
                tape.shape(loss)
            )));
        }
        tape.backward(loss)?;
        tape.accumulate_param_grads(store);
    }
    let eval = |f: &mut dyn FnMut(&mut Tape<T>, &ParamStore<T>) -> Result<Var>,
                store: &ParamStore<T>|
     -> Result<f64> {
        let mut tape = Tape::new();
        let loss = f(&mut tape, store)?;
        Ok(tape.scalar_value(loss).to_f64())
    };
    let hs = T::from_f64(h);
    let mut worst = 0.0f64;
    for &(pid, idx) in coords {
        if idx >= store.get(pid).len() {
            return Err(LabError::contract(format!(
                "coordinate {idx} out of range for parameter {:?}",
                store.name(pid)
            )));
        }
        let analytic = store.get(pid).grad().map(|g| g[idx]).unwrap_or(T::ZERO).to_f64();
        let orig = store.get(pid).data()[idx];
        store.get_mut(pid).data_mut()[idx] = orig + hs;
        let lp = eval(f, store)?;
        store.get_mut(pid).data_mut()[idx] = orig - hs;
        let lm = eval(f, store)?;
        store.get_mut(pid).data_mut()[idx] = orig;
        let numeric = (lp - lm) / (2.0 * h);
        worst = worst.max(rel_err(analytic, numeric));
    }
    Ok(worst)
}
