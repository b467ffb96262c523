//! CoRelNet-style similarity baselines: the whole representation is one
//! m-by-m similarity matrix, optionally row-softmaxed.

use crate::engine::{ParamStore, Rng, Scalar, Tape, Var};
use crate::error::{LabError, Result};
use crate::nn::attention::{ensure_batched, restore_rank};
use crate::nn::DenseP;

#[derive(Copy, Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorelVariant {
    Symmetric,
    Asymmetric,
}

/// Square d-to-d maps feeding the similarity product. The maps are pure
/// matrices (no bias): A[i,j] = <W1 x_i, W2 x_j>, with W2 = W1 in the
/// symmetric variant. Scores are not scaled.
#[derive(Clone, Debug)]
pub struct CorelnetParams {
    pub variant: CorelVariant,
    pub w1: DenseP,
    pub w2: Option<DenseP>,
    pub use_softmax: bool,
}

impl CorelnetParams {
    pub fn init<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        d: usize,
        variant: CorelVariant,
        use_softmax: bool,
        rng: &mut Rng,
    ) -> Result<Self> {
        let w1 = DenseP::init_no_bias(store, &format!("{name}.w1"), d, d, rng)?;
        let w2 = match variant {
            CorelVariant::Symmetric => None,
            CorelVariant::Asymmetric => Some(DenseP::init_no_bias(
                store,
                &format!("{name}.w2"),
                d,
                d,
                rng,
            )?),
        };
        Ok(CorelnetParams {
            variant,
            w1,
            w2,
            use_softmax,
        })
    }

    pub fn param_count<T: Scalar>(&self, store: &ParamStore<T>) -> usize {
        self.w1.param_count(store) + self.w2.as_ref().map_or(0, |w| w.param_count(store))
    }
}

/// Similarity matrix [.., m, m] for x of shape [B, m, d] or [m, d].
pub fn corelnet<T: Scalar>(
    tape: &mut Tape<T>,
    store: &ParamStore<T>,
    p: &CorelnetParams,
    x: Var,
) -> Result<Var> {
    let (xb, was_batched) = ensure_batched(tape, x)?;
    if tape.shape(xb)[2] != p.w1.d_in {
        return Err(LabError::dim("corelnet input", tape.shape(xb), &[p.w1.d_in]));
    }
    let z1 = p.w1.apply(tape, store, xb)?;
    let z2 = match (&p.variant, &p.w2) {
        (CorelVariant::Symmetric, _) => z1,
        (CorelVariant::Asymmetric, Some(w2)) => w2.apply(tape, store, xb)?,
        (CorelVariant::Asymmetric, None) => {
            return Err(LabError::config("asymmetric corelnet without second map"))
        }
    };
    let scores = tape.matmul(z1, z2, false, true)?;
    let out = if p.use_softmax {
        tape.row_softmax(scores)?
    } else {
        scores
    };
    restore_rank(tape, out, was_batched)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::Tensor;

    #[test]
    fn identical_objects_under_identity_map_softmax_to_half_half() {
        let mut rng = Rng::new(61);
        let mut store = ParamStore::<f64>::new();
        let p = CorelnetParams::init(
            &mut store,
            "corel",
            3,
            CorelVariant::Symmetric,
            true,
            &mut rng,
        )
        .unwrap();
        let w = store.get_mut(p.w1.w).data_mut();
        w.fill(0.0);
        for i in 0..3 {
            w[i * 3 + i] = 1.0;
        }
        let x = Tensor::new(vec![2, 3], vec![1.0, 2.0, 0.5, 1.0, 2.0, 0.5]).unwrap();
        let mut tape = Tape::new();
        let vx = tape.input(&x);
        let out = corelnet(&mut tape, &store, &p, vx).unwrap();
        for &v in tape.value(out) {
            assert!((v - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_second_map_gives_uniform_softmax_rows() {
        let mut rng = Rng::new(62);
        let mut store = ParamStore::<f64>::new();
        let p = CorelnetParams::init(
            &mut store,
            "corel",
            4,
            CorelVariant::Asymmetric,
            true,
            &mut rng,
        )
        .unwrap();
        store
            .get_mut(p.w2.as_ref().unwrap().w)
            .data_mut()
            .fill(0.0);
        let x = Tensor::<f64>::rand_normal(&mut rng, &[5, 4], 1.0);
        let mut tape = Tape::new();
        let vx = tape.input(&x);
        let out = corelnet(&mut tape, &store, &p, vx).unwrap();
        for &v in tape.value(out) {
            assert!((v - 0.2).abs() < 1e-12, "expected uniform 1/5, got {v}");
        }
    }

    #[test]
    fn symmetric_similarity_is_bit_exactly_symmetric() {
        let mut rng = Rng::new(63);
        let mut store = ParamStore::<f64>::new();
        let p = CorelnetParams::init(
            &mut store,
            "corel",
            6,
            CorelVariant::Symmetric,
            false,
            &mut rng,
        )
        .unwrap();
        let x = Tensor::<f64>::rand_normal(&mut rng, &[7, 6], 1.0);
        let mut tape = Tape::new();
        let vx = tape.input(&x);
        let out = corelnet(&mut tape, &store, &p, vx).unwrap();
        for i in 0..7 {
            for j in 0..7 {
                assert_eq!(
                    tape.value(out)[i * 7 + j],
                    tape.value(out)[j * 7 + i],
                    "asymmetry at ({i},{j})"
                );
            }
        }
    }

    #[test]
    fn asymmetric_variant_distinguishes_ordered_pairs() {
        let mut rng = Rng::new(64);
        let mut store = ParamStore::<f64>::new();
        let p = CorelnetParams::init(
            &mut store,
            "corel",
            4,
            CorelVariant::Asymmetric,
            false,
            &mut rng,
        )
        .unwrap();
        let x = Tensor::<f64>::rand_normal(&mut rng, &[3, 4], 1.0);
        let mut tape = Tape::new();
        let vx = tape.input(&x);
        let out = corelnet(&mut tape, &store, &p, vx).unwrap();
        let mut found_asym = false;
        for i in 0..3 {
            for j in 0..3 {
                if (tape.value(out)[i * 3 + j] - tape.value(out)[j * 3 + i]).abs() > 1e-6 {
                    found_asym = true;
                }
            }
        }
        assert!(found_asym, "random asymmetric maps should break symmetry");
    }
}
