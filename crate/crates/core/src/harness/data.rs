//! Dataset construction for the sorting experiments.
//!
//! One seed drives both the object universe and the sequence sampling, so a
//! saved dataset's header seed is enough to regenerate the universe that
//! produced it (needed when corrupting test inputs at evaluation time).

use crate::engine::{tag, Rng};
use crate::error::Result;
use crate::tasks::{
    gen_object_universe, gen_sorting_dataset, reshuffle_primary_order, ObjectUniverse,
    SortingDataset,
};

use super::presets::SortingDataCfg;

/// Object universe plus a sorting dataset sampled from it, both keyed by
/// `data_seed` alone.
pub fn sorting_bundle(cfg: &SortingDataCfg, data_seed: u64) -> Result<(ObjectUniverse, SortingDataset)> {
    let universe = gen_object_universe(data_seed);
    let ds = gen_sorting_dataset(
        &universe,
        cfg.n_train,
        cfg.n_val,
        cfg.n_test,
        cfg.seq_len,
        data_seed,
    )?;
    Ok((universe, ds))
}

/// Pre-training dataset: same objects, primary-attribute order reshuffled,
/// sequences drawn from a stream disjoint from the primary dataset's.
pub fn pretrain_bundle(
    universe: &ObjectUniverse,
    cfg: &SortingDataCfg,
    pretrain_n: usize,
    data_seed: u64,
) -> Result<SortingDataset> {
    let reshuffled = reshuffle_primary_order(
        universe,
        Rng::stream(data_seed, &[tag("reshuffle")]).next_u64(),
    );
    gen_sorting_dataset(
        &reshuffled,
        pretrain_n,
        cfg.n_val,
        cfg.n_test,
        cfg.seq_len,
        Rng::stream(data_seed, &[tag("pretrain-data")]).next_u64(),
    )
}
