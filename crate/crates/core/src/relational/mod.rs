//! Relational representations: pairwise relation tensors, relational
//! cross-attention over symbol values, similarity-matrix baselines, and a
//! Monte-Carlo probe for inner-product preservation.

pub mod corelnet;
pub mod probe;
pub mod rca;
pub mod relation;

pub use corelnet::{corelnet, CorelVariant, CorelnetParams};
pub use probe::{inner_product_probe, probe_pair};
pub use rca::{position_relative_rca, relational_cross_attention, RcaParams};
pub use relation::{
    activate_relation_tensor, relation_tensor, AppliedActivation, RelationEncoders, RelationTensor,
};
