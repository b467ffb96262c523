//! Pairwise order-relation dataset: N random Gaussian objects carry the
//! planted order o_0 < o_1 < ... < o_{N-1}; all N^2 ordered pairs (diagonal
//! included, labeled 0) are split disjointly into train/val/test.

use crate::engine::{tag, Rng};
use crate::error::{LabError, Result};

/// One labeled ordered pair: label 1 iff i < j under the planted order.
pub type OrderPair = (usize, usize, usize);

#[derive(Debug, Clone, PartialEq)]
pub struct OrderPairDataset {
    pub n_objects: usize,
    pub d: usize,
    pub seed: u64,
    /// n_objects x d feature matrix, row-major.
    pub objects: Vec<f64>,
    pub train: Vec<OrderPair>,
    pub val: Vec<OrderPair>,
    pub test: Vec<OrderPair>,
}

impl OrderPairDataset {
    pub fn label(i: usize, j: usize) -> usize {
        usize::from(i < j)
    }

    /// Builds the 2-object input rows for a pair list: each row is the
    /// concatenated pair (first object, then second), shape n x 2 x d.
    pub fn pair_inputs(&self, pairs: &[OrderPair]) -> Vec<f64> {
        let mut out = Vec::with_capacity(pairs.len() * 2 * self.d);
        for &(i, j, _) in pairs {
            out.extend_from_slice(&self.objects[i * self.d..(i + 1) * self.d]);
            out.extend_from_slice(&self.objects[j * self.d..(j + 1) * self.d]);
        }
        out
    }
}

/// Enumerates all n^2 ordered pairs, shuffles them, and splits by the given
/// fractions with round-to-nearest sizing; the remainder goes to test.
pub fn gen_order_pairs(
    n_objects: usize,
    d: usize,
    split_fracs: (f64, f64, f64),
    seed: u64,
) -> Result<OrderPairDataset> {
    let (f_tr, f_va, f_te) = split_fracs;
    if f_tr < 0.0 || f_va < 0.0 || f_te < 0.0 || (f_tr + f_va + f_te - 1.0).abs() > 1e-9 {
        return Err(LabError::config(
            "split fractions must be nonnegative and sum to 1",
        ));
    }
    if n_objects == 0 || d == 0 {
        return Err(LabError::config("need at least one object and one dimension"));
    }

    let mut rng = Rng::stream(seed, &[tag("order")]);
    let mut objects = vec![0.0f64; n_objects * d];
    rng.fill_normal(&mut objects, 1.0);

    let total = n_objects * n_objects;
    let mut pairs: Vec<OrderPair> = Vec::with_capacity(total);
    for i in 0..n_objects {
        for j in 0..n_objects {
            pairs.push((i, j, OrderPairDataset::label(i, j)));
        }
    }
    rng.shuffle(&mut pairs);

    let n_tr = (f_tr * total as f64).round() as usize;
    let n_va = (f_va * total as f64).round() as usize;
    if n_tr + n_va > total {
        return Err(LabError::config("split fractions leave no room for test pairs"));
    }
    let train = pairs[..n_tr].to_vec();
    let val = pairs[n_tr..n_tr + n_va].to_vec();
    let test = pairs[n_tr + n_va..].to_vec();

    Ok(OrderPairDataset { n_objects, d, seed, objects, train, val, test })
}
