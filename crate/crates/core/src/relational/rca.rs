//! Relational cross-attention: attention whose values are input-independent
//! symbols, so the output carries only relation structure.

use super::relation::RelationEncoders;
use crate::engine::{ParamStore, Rng, Scalar, Tape, Var};
use crate::error::{LabError, Result};
use crate::nn::attention::{ensure_batched, merge_heads, restore_rank, split_heads};
use crate::nn::{no_diagonal_mask, score_weights, DenseP, ScoreActivation, SymbolBank, SymbolMode};

/// Parameters of one relational cross-attention block.
///
/// `head_value` fuses the per-head value maps ([d_s, d_r*d_hv]) and `output`
/// combines the concatenated heads ([d_r*d_hv, d_out]); with softmax scores
/// the block is computationally identical to multi-head attention with
/// queries/keys from X and values from the symbols.
#[derive(Clone, Debug)]
pub struct RcaParams {
    pub encoders: RelationEncoders,
    pub head_value: DenseP,
    pub output: DenseP,
    pub sigma_rel: ScoreActivation,
    pub scale_scores: bool,
    pub mask_diagonal: bool,
    pub d_hv: usize,
}

impl RcaParams {
    #[allow(clippy::too_many_arguments)]
    pub fn init<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        d_in: usize,
        d_s: usize,
        d_out: usize,
        d_r: usize,
        d_p: usize,
        d_hv: usize,
        sigma_rel: ScoreActivation,
        symmetric: bool,
        rng: &mut Rng,
    ) -> Result<Self> {
        Ok(RcaParams {
            encoders: RelationEncoders::init(store, &format!("{name}.rel"), d_in, d_r, d_p, symmetric, rng)?,
            head_value: DenseP::init(store, &format!("{name}.wv"), d_s, d_r * d_hv, rng)?,
            output: DenseP::init(store, &format!("{name}.wo"), d_r * d_hv, d_out, rng)?,
            sigma_rel,
            scale_scores: true,
            mask_diagonal: false,
            d_hv,
        })
    }

    pub fn param_count<T: Scalar>(&self, store: &ParamStore<T>) -> usize {
        self.encoders.param_count(store)
            + self.head_value.param_count(store)
            + self.output.param_count(store)
    }
}

/// Core block: queries and keys from `x` ([B, m, d] or [m, d]), values from
/// `values` ([m, d_s] shared across the batch, or [B, m, d_s]).
pub fn relational_cross_attention<T: Scalar>(
    tape: &mut Tape<T>,
    store: &ParamStore<T>,
    p: &RcaParams,
    x: Var,
    values: Var,
) -> Result<Var> {
    let (xb, was_batched) = ensure_batched(tape, x)?;
    let (b, m) = (tape.shape(xb)[0], tape.shape(xb)[1]);
    let values_b = match tape.shape(values).len() {
        2 => {
            if tape.shape(values)[0] != m {
                return Err(LabError::capacity(format!(
                    "value rows {} do not cover sequence length {m}",
                    tape.shape(values)[0]
                )));
            }
            tape.tile_batch(values, b)?
        }
        3 => {
            if tape.shape(values)[0] != b || tape.shape(values)[1] != m {
                return Err(LabError::dim("rca values", tape.shape(values), &[b, m]));
            }
            values
        }
        _ => {
            return Err(LabError::contract(format!(
                "rca values must be rank 2 or 3, got {:?}",
                tape.shape(values)
            )))
        }
    };
    let scores = p.encoders.scores(tape, store, xb, p.scale_scores)?;
    let mask = p.mask_diagonal.then(|| no_diagonal_mask(m));
    let w = score_weights(tape, scores, mask.as_ref(), p.sigma_rel)?;
    let v = p.head_value.apply(tape, store, values_b)?;
    let v = split_heads(tape, v, p.encoders.d_r, p.d_hv)?;
    let heads = tape.matmul(w, v, false, false)?;
    let merged = merge_heads(tape, heads)?;
    let out = p.output.apply(tape, store, merged)?;
    restore_rank(tape, out, was_batched)
}

/// Position-relative variant: abstract state i sums relation-weighted symbols
/// indexed by offset, A_i = sum_j R_ij s_{j-i}, per head, heads combined as
/// in the core block.
pub fn position_relative_rca<T: Scalar>(
    tape: &mut Tape<T>,
    store: &ParamStore<T>,
    p: &RcaParams,
    x: Var,
    bank: &SymbolBank<T>,
) -> Result<Var> {
    if bank.mode != SymbolMode::PositionRelative {
        return Err(LabError::contract(
            "position_relative_rca requires a position-relative symbol bank",
        ));
    }
    let (xb, was_batched) = ensure_batched(tape, x)?;
    let m = tape.shape(xb)[1];
    let scores = p.encoders.scores(tape, store, xb, p.scale_scores)?;
    let mask = p.mask_diagonal.then(|| no_diagonal_mask(m));
    let w = score_weights(tape, scores, mask.as_ref(), p.sigma_rel)?;
    let offsets = bank.bind_offsets(tape, store, m)?; // [2m-1, d_s]
    let v = p.head_value.apply(tape, store, offsets)?; // [2m-1, d_r*d_hv]
    let v = tape.reshape(v, vec![2 * m - 1, p.encoders.d_r, p.d_hv])?;
    let v = tape.permute(v, &[1, 0, 2])?; // [d_r, 2m-1, d_hv]
    let heads = tape.offset_weighted_sum(w, v)?;
    let merged = merge_heads(tape, heads)?;
    let out = p.output.apply(tape, store, merged)?;
    restore_rank(tape, out, was_batched)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::Tensor;
    use crate::nn::{multi_head_attention, AttentionParams};

    /// Builds RCA params with all-identity value/output maps and zero biases.
    fn identity_maps(store: &mut ParamStore<f64>, p: &RcaParams) {
        for dense in [&p.head_value, &p.output] {
            let (d_in, d_out) = (dense.d_in, dense.d_out);
            assert_eq!(d_in, d_out);
            let w = store.get_mut(dense.w).data_mut();
            w.fill(0.0);
            for i in 0..d_in {
                w[i * d_out + i] = 1.0;
            }
            if let Some(b) = dense.b {
                store.get_mut(b).data_mut().fill(0.0);
            }
        }
    }

    #[test]
    fn single_position_softmax_returns_first_symbol() {
        let mut rng = Rng::new(51);
        let mut store = ParamStore::<f64>::new();
        let p = RcaParams::init(
            &mut store, "rca", 3, 4, 4, 1, 2, 4,
            ScoreActivation::Softmax, false, &mut rng,
        )
        .unwrap();
        identity_maps(&mut store, &p);
        let x = Tensor::<f64>::rand_normal(&mut rng, &[1, 3], 1.0);
        let s = Tensor::<f64>::rand_normal(&mut rng, &[1, 4], 1.0);
        let mut tape = Tape::new();
        let (vx, vs) = (tape.input(&x), tape.input(&s));
        let out = relational_cross_attention(&mut tape, &store, &p, vx, vs).unwrap();
        assert_eq!(tape.shape(out), &[1, 4]);
        for c in 0..4 {
            assert!((tape.value(out)[c] - s.at(&[0, c])).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_rca_equals_multi_head_attention_with_symbol_values() {
        for seed in 0..20 {
            let mut rng = Rng::new(seed);
            let (d_in, d_s, d_out, d_r, d_p) = (5, 6, 7, 3, 4);
            let mut store = ParamStore::<f64>::new();
            let p = RcaParams::init(
                &mut store, "rca", d_in, d_s, d_out, d_r, d_p, d_p,
                ScoreActivation::Softmax, false, &mut rng,
            )
            .unwrap();
            let mha = AttentionParams {
                wq: p.encoders.left.clone(),
                wk: p.encoders.right.clone(),
                wv: p.head_value.clone(),
                wo: p.output.clone(),
                n_heads: d_r,
                d_p,
                scale_scores: true,
            };
            let m = 4 + (seed as usize % 3);
            let x = Tensor::<f64>::rand_normal(&mut rng, &[m, d_in], 1.0);
            let s = Tensor::<f64>::rand_normal(&mut rng, &[m, d_s], 1.0);
            let mut tape = Tape::new();
            let (vx, vs) = (tape.input(&x), tape.input(&s));
            let a = relational_cross_attention(&mut tape, &store, &p, vx, vs).unwrap();
            let b = multi_head_attention(
                &mut tape, &store, &mha, vx, vx, vs, None, ScoreActivation::Softmax,
            )
            .unwrap();
            for (u, v) in tape.value(a).iter().zip(tape.value(b)) {
                assert!((u - v).abs() < 1e-5, "seed {seed}: {u} vs {v}");
            }
        }
    }

    #[test]
    fn planted_null_direction_leaves_output_bit_identical() {
        let mut rng = Rng::new(53);
        let (d_in, d_p) = (6, 3); // d_p < d_in so a null direction exists
        let mut store = ParamStore::<f64>::new();
        let p = RcaParams::init(
            &mut store, "rca", d_in, 4, 4, 2, d_p, 3,
            ScoreActivation::Sigmoid, false, &mut rng,
        )
        .unwrap();
        // plant e_k in the common null space: zero row k of both projections
        let k = 2usize;
        for pid in [p.encoders.left.w, p.encoders.right.w] {
            let w = store.get_mut(pid).data_mut();
            for c in 0..2 * d_p {
                w[k * 2 * d_p + c] = 0.0;
            }
        }
        let x = Tensor::<f64>::rand_normal(&mut rng, &[5, d_in], 1.0);
        let mut shifted = x.clone();
        for i in 0..5 {
            let idx = i * d_in + k;
            let v = shifted.data()[idx];
            shifted.data_mut()[idx] = v + 3.5 * (i as f64 + 1.0);
        }
        let s = Tensor::<f64>::rand_normal(&mut rng, &[5, 4], 1.0);
        let mut tape = Tape::new();
        let (vx, vxs, vs) = (tape.input(&x), tape.input(&shifted), tape.input(&s));
        let a = relational_cross_attention(&mut tape, &store, &p, vx, vs).unwrap();
        let b = relational_cross_attention(&mut tape, &store, &p, vxs, vs).unwrap();
        assert_eq!(tape.value(a), tape.value(b), "bottleneck must ignore null direction");
    }

    #[test]
    fn permuting_inputs_permutes_relation_rows_and_columns() {
        let mut rng = Rng::new(54);
        let mut store = ParamStore::<f64>::new();
        let p = RcaParams::init(
            &mut store, "rca", 4, 3, 5, 2, 3, 3,
            ScoreActivation::Softmax, false, &mut rng,
        )
        .unwrap();
        let m = 5;
        let x = Tensor::<f64>::rand_normal(&mut rng, &[m, 4], 1.0);
        let mut perm: Vec<usize> = (0..m).collect();
        rng.shuffle(&mut perm);
        let xp = Tensor::from_fn(&[m, 4], |i| {
            let (r, c) = (i / 4, i % 4);
            x.at(&[perm[r], c])
        })
        .unwrap();
        let s = Tensor::<f64>::rand_normal(&mut rng, &[m, 3], 1.0);
        let mut tape = Tape::new();
        let (vx, vxp, vs) = (tape.input(&x), tape.input(&xp), tape.input(&s));
        // relation scores covary on both axes
        let r = p.encoders.scores(&mut tape, &store, vx, true).unwrap();
        let rp = p.encoders.scores(&mut tape, &store, vxp, true).unwrap();
        for h in 0..2 {
            for i in 0..m {
                for j in 0..m {
                    let a = tape.value(rp)[(h * m + i) * m + j];
                    let b = tape.value(r)[(h * m + perm[i]) * m + perm[j]];
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
        // output row i of RCA(PX, S) = sum_j w[pi(i), pi(j)] v_j, via loop oracle
        let out_p = relational_cross_attention(&mut tape, &store, &p, vxp, vs).unwrap();
        let w_act = {
            let soft = score_weights(&mut tape, r, None, ScoreActivation::Softmax).unwrap();
            tape.value(soft).to_vec()
        };
        let vproj = {
            let v = p.head_value.apply(&mut tape, &store, vs).unwrap();
            tape.value(v).to_vec() // [m, 2*3]
        };
        let wo = store.get(p.output.w);
        let bo = store.get(p.output.b.unwrap());
        for i in 0..m {
            let mut concat = vec![0.0f64; 6];
            for h in 0..2 {
                for j in 0..m {
                    // softmax row pi(i) renormalized over permuted columns equals
                    // original row pi(i); pick weight at [pi(i), pi(j)]
                    let w = w_act[(h * m + perm[i]) * m + perm[j]];
                    for c in 0..3 {
                        concat[h * 3 + c] += w * vproj[j * 6 + h * 3 + c];
                    }
                }
            }
            for c in 0..5 {
                let mut acc = bo.data()[c];
                for k in 0..6 {
                    acc += concat[k] * wo.at(&[k, c]);
                }
                assert!((tape.value(out_p)[i * 5 + c] - acc).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn batched_and_single_sequence_forward_agree() {
        let mut rng = Rng::new(55);
        let mut store = ParamStore::<f64>::new();
        let p = RcaParams::init(
            &mut store, "rca", 4, 3, 5, 2, 3, 3,
            ScoreActivation::Tanh, true, &mut rng,
        )
        .unwrap();
        let x0 = Tensor::<f64>::rand_normal(&mut rng, &[4, 4], 1.0);
        let x1 = Tensor::<f64>::rand_normal(&mut rng, &[4, 4], 1.0);
        let mut stacked = x0.data().to_vec();
        stacked.extend_from_slice(x1.data());
        let xb = Tensor::new(vec![2, 4, 4], stacked).unwrap();
        let s = Tensor::<f64>::rand_normal(&mut rng, &[4, 3], 1.0);
        let mut tape = Tape::new();
        let (v0, v1, vb, vs) = (
            tape.input(&x0),
            tape.input(&x1),
            tape.input(&xb),
            tape.input(&s),
        );
        let a0 = relational_cross_attention(&mut tape, &store, &p, v0, vs).unwrap();
        let a1 = relational_cross_attention(&mut tape, &store, &p, v1, vs).unwrap();
        let ab = relational_cross_attention(&mut tape, &store, &p, vb, vs).unwrap();
        let (flat0, flat1) = tape.value(ab).split_at(4 * 5);
        for (a, b) in flat0.iter().zip(tape.value(a0)) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in flat1.iter().zip(tape.value(a1)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn position_relative_single_position_scales_center_symbol() {
        let mut rng = Rng::new(56);
        let mut store = ParamStore::<f64>::new();
        let p = RcaParams::init(
            &mut store, "rca", 3, 4, 4, 1, 2, 4,
            ScoreActivation::Linear, false, &mut rng,
        )
        .unwrap();
        identity_maps(&mut store, &p);
        let bank = SymbolBank::init(
            &mut store, "rel", SymbolMode::PositionRelative, 6, 4, &mut rng,
        )
        .unwrap();
        let x = Tensor::<f64>::rand_normal(&mut rng, &[1, 3], 1.0);
        let mut tape = Tape::new();
        let vx = tape.input(&x);
        let out = position_relative_rca(&mut tape, &store, &p, vx, &bank).unwrap();
        // R_11 from the loop, s_0 = center row (offset 0) of the bank
        let scores = p.encoders.scores(&mut tape, &store, vx, true).unwrap();
        let r11 = tape.value(scores)[0];
        let center = store.get(store.pid_by_name("rel.symbols").unwrap());
        for c in 0..4 {
            let expect = r11 * center.at(&[5, c]); // row max_len-1 = offset 0
            assert!((tape.value(out)[c] - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn position_relative_matches_offset_loop_oracle() {
        let mut rng = Rng::new(57);
        let mut store = ParamStore::<f64>::new();
        let (d_r, d_hv, d_s, m) = (2, 3, 4, 3);
        let p = RcaParams::init(
            &mut store, "rca", 5, d_s, 6, d_r, 3, d_hv,
            ScoreActivation::Sigmoid, false, &mut rng,
        )
        .unwrap();
        let bank = SymbolBank::init(
            &mut store, "rel", SymbolMode::PositionRelative, 8, d_s, &mut rng,
        )
        .unwrap();
        let x = Tensor::<f64>::rand_normal(&mut rng, &[m, 5], 1.0);
        let mut tape = Tape::new();
        let vx = tape.input(&x);
        let out = position_relative_rca(&mut tape, &store, &p, vx, &bank).unwrap();
        // oracle: explicit A_i = sum_j sigma(R)_ij * value(s_{j-i}), heads concatenated
        let scores = p.encoders.scores(&mut tape, &store, vx, true).unwrap();
        let w = score_weights(&mut tape, scores, None, ScoreActivation::Sigmoid).unwrap();
        let symbols = store.get(store.pid_by_name("rel.symbols").unwrap());
        let wv = store.get(p.head_value.w);
        let bv = store.get(p.head_value.b.unwrap());
        let wo = store.get(p.output.w);
        let bo = store.get(p.output.b.unwrap());
        let value_of = |offset: i64| -> Vec<f64> {
            let row = (8 - 1) as i64 + offset; // bank row of this offset
            (0..d_r * d_hv)
                .map(|c| {
                    let mut acc = bv.data()[c];
                    for k in 0..d_s {
                        acc += symbols.at(&[row as usize, k]) * wv.at(&[k, c]);
                    }
                    acc
                })
                .collect()
        };
        for i in 0..m {
            let mut concat = vec![0.0f64; d_r * d_hv];
            for h in 0..d_r {
                for j in 0..m {
                    let weight = tape.value(w)[(h * m + i) * m + j];
                    let val = value_of(j as i64 - i as i64);
                    for c in 0..d_hv {
                        concat[h * d_hv + c] += weight * val[h * d_hv + c];
                    }
                }
            }
            for c in 0..6 {
                let mut acc = bo.data()[c];
                for k in 0..d_r * d_hv {
                    acc += concat[k] * wo.at(&[k, c]);
                }
                assert!(
                    (tape.value(out)[i * 6 + c] - acc).abs() < 1e-5,
                    "mismatch at position {i} channel {c}"
                );
            }
        }
    }

    #[test]
    fn translation_invariant_relations_give_equal_outputs_at_all_positions() {
        // circulant construction: identical rows make R_ij constant (trivially a
        // function of j-i), and period-2 offset symbols with even m make the
        // per-position offset windows sum identically
        let mut rng = Rng::new(58);
        let mut store = ParamStore::<f64>::new();
        let p = RcaParams::init(
            &mut store, "rca", 2, 3, 3, 1, 2, 3,
            ScoreActivation::Sigmoid, false, &mut rng,
        )
        .unwrap();
        // drop biases' effect: zero them so scores depend on x alone
        for pid in [p.encoders.left.b.unwrap(), p.encoders.right.b.unwrap()] {
            store.get_mut(pid).data_mut().fill(0.0);
        }
        let bank = SymbolBank::init(
            &mut store, "rel", SymbolMode::PositionRelative, 9, 3, &mut rng,
        )
        .unwrap();
        // make offset symbols depend only on parity of the offset so that the
        // weighted sums are position-independent for parity-periodic relations:
        // s_delta = t_{delta mod 2}
        let t0: Vec<f64> = vec![0.3, -0.7, 1.1];
        let t1: Vec<f64> = vec![-0.2, 0.5, 0.9];
        {
            let sym = store.get_mut(store.pid_by_name("rel.symbols").unwrap());
            for row in 0..17 {
                let offset = row as i64 - 8;
                let src = if offset.rem_euclid(2) == 0 { &t0 } else { &t1 };
                for c in 0..3 {
                    sym.data_mut()[row * 3 + c] = src[c];
                }
            }
        }
        // even length keeps the parity-balanced offset window at every i
        let m = 6;
        let x = Tensor::from_fn(&[m, 2], |i| if i % 2 == 0 { 0.8 } else { -0.4 }).unwrap();
        let mut tape = Tape::new();
        let vx = tape.input(&x);
        let out = position_relative_rca(&mut tape, &store, &p, vx, &bank).unwrap();
        let first = &tape.value(out)[..3].to_vec();
        for i in 1..m {
            for c in 0..3 {
                assert!(
                    (tape.value(out)[i * 3 + c] - first[c]).abs() < 1e-9,
                    "position {i} differs"
                );
            }
        }
    }
}
