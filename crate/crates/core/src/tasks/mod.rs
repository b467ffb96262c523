//! Synthetic relational tasks: the attribute-product object universe with
//! sorting datasets, pairwise order relations, SET triples, and the noise
//! corruptions used for robustness evaluation, plus dataset file I/O.

pub mod io;
pub mod objects;
pub mod order;
pub mod set;
pub mod sorting;

pub use io::{
    export_jsonl, load_set_dataset, read_container, save_set_dataset, write_container,
    ContainerHeader, Section, SectionData,
};
pub use objects::{
    corrupt_additive, corrupt_linear, gen_object_universe, reshuffle_primary_order,
    ObjectUniverse, D_OBJECT, N_OBJECTS,
};
pub use order::{gen_order_pairs, OrderPair, OrderPairDataset};
pub use set::{
    card_from_index, card_index, complete_card, gen_set_dataset, is_set, one_hot_embedding,
    symbolic_relations, Card, SetTriple, D_CARD, N_CARDS,
};
pub use sorting::{gen_sorting_dataset, SortingDataset, SortingSplit, Split};
