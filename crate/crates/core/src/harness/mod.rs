//! Experiment harness: optimizer, metrics, training loop, learning curves,
//! pre-training transfer, corruption-robustness sweeps, and named presets.

pub mod adam;
pub mod curve;
pub mod data;
pub mod metrics;
pub mod presets;
pub mod robustness;
pub mod train;

pub use adam::{Adam, AdamConfig};
pub use curve::{
    learning_curve, learning_curve_with_init, pretrain_transfer, write_curve_aggregate_csv,
    write_curve_trials_csv, CurveConfig, CurvePoint, LearningCurve, TransferConfig,
    TransferResult,
};
pub use data::{pretrain_bundle, sorting_bundle};
pub use metrics::{
    argmax_rows, binary_accuracy, elementwise_accuracy, full_sequence_accuracy, mean_sem,
};
pub use presets::{
    fig2a, fig2b, math_adam, order_relation, robustness, set_classification, Fig2aPreset,
    Fig2bPreset, NamedCurve, NamedRobustness, NamedTransfer, OrderPreset, Profile,
    RobustnessPreset, SetCurve, SetPreset, SortingDataCfg,
};
pub use robustness::{
    robustness_sweep, write_robustness_csv, write_robustness_trials_csv, NoiseGrid, NoiseKind,
    RobustnessConfig, RobustnessPoint, RobustnessResult, RobustnessSweep,
};
pub use train::{
    conformance, train, train_full, train_with_init, write_run_jsonl, ClsSplit, ClsTask,
    EpochRecord, RunRecord, SeqSplit, SeqTask, TaskBinding, TrainConfig,
};
