//! Object-sorting datasets: sequences of distinct universe objects paired
//! with argsort targets, in disjoint train/val/test splits.

use std::collections::HashSet;

use crate::engine::{tag, Rng};
use crate::error::{LabError, Result};

use super::objects::{ObjectUniverse, D_OBJECT, N_OBJECTS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SortingSplit {
    pub n: usize,
    /// Object ids, n x seq_len row-major.
    pub indices: Vec<usize>,
    /// Feature rows, n x seq_len x d row-major.
    pub inputs: Vec<f64>,
    /// Argsort targets, n x seq_len: targets[s*len+k] is the input position
    /// holding the k-th smallest object of sample s.
    pub targets: Vec<usize>,
}

impl SortingSplit {
    /// Rebuilds the feature array from an alternative 48 x d object matrix,
    /// e.g. corrupted objects. Sample structure and targets are unchanged.
    pub fn inputs_from(&self, objects: &[f64], d: usize) -> Vec<f64> {
        let mut out = vec![0.0f64; self.indices.len() * d];
        for (k, &id) in self.indices.iter().enumerate() {
            out[k * d..(k + 1) * d].copy_from_slice(&objects[id * d..(id + 1) * d]);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SortingDataset {
    pub seq_len: usize,
    pub d: usize,
    pub seed: u64,
    pub train: SortingSplit,
    pub val: SortingSplit,
    pub test: SortingSplit,
}

impl SortingDataset {
    pub fn split(&self, s: Split) -> &SortingSplit {
        match s {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

/// Samples sequences of `seq_len` DISTINCT objects uniformly, deduplicating
/// ordered index tuples across all splits, and computes argsort targets with
/// the universe's order oracle.
pub fn gen_sorting_dataset(
    u: &ObjectUniverse,
    n_train: usize,
    n_val: usize,
    n_test: usize,
    seq_len: usize,
    seed: u64,
) -> Result<SortingDataset> {
    if seq_len == 0 || seq_len > N_OBJECTS {
        return Err(LabError::capacity(format!(
            "sequence length {seq_len} must be in 1..={N_OBJECTS}"
        )));
    }
    let total = n_train + n_val + n_test;
    // Falling factorial 48*47*...: the number of distinct ordered tuples.
    let mut distinct = 1.0f64;
    for k in 0..seq_len {
        distinct *= (N_OBJECTS - k) as f64;
        if distinct > 1e18 {
            break;
        }
    }
    if (total as f64) > distinct {
        return Err(LabError::capacity(format!(
            "{total} sequences requested but only {distinct:.0} distinct tuples exist"
        )));
    }

    let mut rng = Rng::stream(seed, &[tag("sorting")]);
    let mut seen: HashSet<Vec<usize>> = HashSet::with_capacity(total * 2);
    let mut tuples: Vec<Vec<usize>> = Vec::with_capacity(total);
    let mut attempts = 0usize;
    let max_attempts = 1000 + total.saturating_mul(100);
    while tuples.len() < total {
        attempts += 1;
        if attempts > max_attempts {
            return Err(LabError::capacity(
                "rejection sampling could not find enough distinct sequences",
            ));
        }
        let seq = rng.sample_distinct(N_OBJECTS, seq_len);
        if seen.insert(seq.clone()) {
            tuples.push(seq);
        }
    }

    let build = |chunk: &[Vec<usize>]| -> SortingSplit {
        let n = chunk.len();
        let mut indices = Vec::with_capacity(n * seq_len);
        let mut inputs = Vec::with_capacity(n * seq_len * D_OBJECT);
        let mut targets = Vec::with_capacity(n * seq_len);
        for seq in chunk {
            indices.extend_from_slice(seq);
            for &id in seq {
                inputs.extend_from_slice(u.feature_row(id));
            }
            targets.extend_from_slice(&u.argsort(seq));
        }
        SortingSplit { n, indices, inputs, targets }
    };

    Ok(SortingDataset {
        seq_len,
        d: D_OBJECT,
        seed,
        train: build(&tuples[..n_train]),
        val: build(&tuples[n_train..n_train + n_val]),
        test: build(&tuples[n_train + n_val..]),
    })
}
