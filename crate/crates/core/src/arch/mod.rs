//! Model architectures: configuration specs, the encoder/decoder/abstractor
//! building blocks, full assembled models, and the checkpoint format.

pub mod checkpoint;
pub mod config;
pub mod layers;
pub mod model;

pub use checkpoint::{
    load_checkpoint, read_checkpoint_meta, save_checkpoint, CheckpointMeta, LoadMode,
};
pub use config::{
    AbstractorConfig, AbstractorReads, EncDecConfig, HeadKind, ModelKind, ModelSpec,
};
pub use layers::{AbsInterface, AbstractorParams, DecoderParams, EncoderParams};
pub use model::{assemble, shift_right, Model};
