//! Manifest schema: one TOML file fully describes an experiment.
//!
//! The schema is strict. Unknown keys anywhere in the file are a validation
//! error that lists every offender, so a typo cannot silently fall back to a
//! default. Seeds are mandatory; nothing is ever seeded from the clock.

use std::collections::BTreeSet;
use std::path::PathBuf;

use abstractor_core::arch::ModelSpec;
use abstractor_core::harness::{AdamConfig, NoiseGrid, Profile};
use serde::Deserialize;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
#[clap(rename_all = "kebab-case")]
pub enum ExperimentKind {
    GenData,
    Train,
    Curve,
    PretrainTransfer,
    Robustness,
    Probe,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::GenData => "gen-data",
            ExperimentKind::Train => "train",
            ExperimentKind::Curve => "curve",
            ExperimentKind::PretrainTransfer => "pretrain-transfer",
            ExperimentKind::Robustness => "robustness",
            ExperimentKind::Probe => "probe",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
#[clap(rename_all = "kebab-case")]
pub enum PresetName {
    Fig2a,
    Fig2b,
    OrderRelation,
    Set,
    Robustness,
}

impl PresetName {
    /// The experiment kind a preset expands into.
    pub fn experiment(self) -> ExperimentKind {
        match self {
            PresetName::Fig2a | PresetName::OrderRelation | PresetName::Set => {
                ExperimentKind::Curve
            }
            PresetName::Fig2b => ExperimentKind::PretrainTransfer,
            PresetName::Robustness => ExperimentKind::Robustness,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PresetName::Fig2a => "fig2a",
            PresetName::Fig2b => "fig2b",
            PresetName::OrderRelation => "order-relation",
            PresetName::Set => "set",
            PresetName::Robustness => "robustness",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[clap(rename_all = "snake_case")]
pub enum TaskKind {
    Sorting,
    Order,
    Set,
}

/// `desk` halves layer widths and caps epochs; `paper` runs the full-size
/// published configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[clap(rename_all = "snake_case")]
pub enum ProfileArg {
    Desk,
    Paper,
}

impl From<ProfileArg> for Profile {
    fn from(p: ProfileArg) -> Profile {
        match p {
            ProfileArg::Desk => Profile::Desk,
            ProfileArg::Paper => Profile::Paper,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub experiment: ExperimentKind,
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub profile: Option<ProfileArg>,
    /// Named preset; a preset manifest carries no explicit config sections.
    #[serde(default)]
    pub preset: Option<PresetName>,
    #[serde(default)]
    pub task: Option<TaskManifest>,
    #[serde(default)]
    pub models: Option<Vec<NamedModel>>,
    #[serde(default)]
    pub train: Option<TrainManifest>,
    #[serde(default)]
    pub curve: Option<CurveManifest>,
    #[serde(default)]
    pub pretrain: Option<PretrainManifest>,
    #[serde(default)]
    pub robustness: Option<RobustnessManifest>,
    #[serde(default)]
    pub probe: Option<ProbeManifest>,
}

/// Task shape; fields irrelevant to `kind` must stay unset. `data` points to
/// a previously generated dataset container and must exist when validated.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskManifest {
    pub kind: TaskKind,
    #[serde(default)]
    pub n_train: Option<usize>,
    #[serde(default)]
    pub n_val: Option<usize>,
    #[serde(default)]
    pub n_test: Option<usize>,
    #[serde(default)]
    pub seq_len: Option<usize>,
    #[serde(default)]
    pub n_objects: Option<usize>,
    #[serde(default)]
    pub d: Option<usize>,
    #[serde(default)]
    pub train_frac: Option<f64>,
    #[serde(default)]
    pub val_frac: Option<f64>,
    #[serde(default)]
    pub test_frac: Option<f64>,
    #[serde(default)]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedModel {
    /// Names label output files and report rows: [a-zA-Z0-9_-]+.
    pub name: String,
    /// SET only: bind the 12-bit symbolic relation encoding instead of card
    /// features.
    #[serde(default)]
    pub symbolic: Option<bool>,
    pub spec: ModelSpec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainManifest {
    #[serde(default)]
    pub adam: Option<AdamConfig>,
    pub batch_size: usize,
    pub max_epochs: usize,
    #[serde(default)]
    pub patience: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveManifest {
    pub sizes: Vec<usize>,
    pub trials: usize,
    /// Defaults to elementwise_acc for sequence tasks, binary_acc otherwise.
    #[serde(default)]
    pub metric: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PretrainManifest {
    /// Pre-training set size drawn from the reshuffled-order task.
    pub n: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobustnessManifest {
    pub trials: usize,
    pub grids: Vec<NoiseGrid>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeManifest {
    pub d: usize,
    /// Map std-dev; defaults to 1/sqrt(d), the calibrated near-isometry point.
    #[serde(default)]
    pub sigma: Option<f64>,
    pub trials: usize,
}

// ── parsing with exhaustive unknown-key reporting ──────────────

/// Allowed keys per normalized table path (array hops do not extend the
/// path). Advisory pre-pass only: the typed parse with deny_unknown_fields
/// stays authoritative, this pass just names every offender at once.
fn allowed_keys(path: &str) -> Option<&'static [&'static str]> {
    Some(match path {
        "" => &[
            "experiment", "seed", "out", "profile", "preset", "task", "models", "train", "curve",
            "pretrain", "robustness", "probe",
        ],
        "task" => &[
            "kind", "n_train", "n_val", "n_test", "seq_len", "n_objects", "d", "train_frac",
            "val_frac", "test_frac", "data",
        ],
        "models" => &["name", "symbolic", "spec"],
        "models.spec" => &[
            "kind", "d_in", "max_input_len", "max_target_len", "head", "embed_dim", "encoder",
            "decoder", "abstractor", "second_abstractor", "abstractor_reads", "mlp_hidden",
            "corelnet_softmax",
        ],
        "models.spec.head" => &["kind", "vocab", "classes"],
        "models.spec.encoder" | "models.spec.decoder" => {
            &["layers", "d_model", "n_heads", "d_p", "d_ff", "pre_norm"]
        }
        "models.spec.abstractor" | "models.spec.second_abstractor" => &[
            "layers", "d_r", "d_p", "d_s", "d_ff", "sigma_rel", "symbol_mode", "use_residual",
            "use_layer_norm", "symmetric", "use_self_attention", "scale_scores", "mask_diagonal",
            "d_hv",
        ],
        "train" => &["adam", "batch_size", "max_epochs", "patience"],
        "train.adam" => &["lr", "beta1", "beta2", "eps"],
        "curve" => &["sizes", "trials", "metric"],
        "pretrain" => &["n"],
        "robustness" => &["trials", "grids"],
        "robustness.grids" => &["kind", "sigmas"],
        "probe" => &["d", "sigma", "trials"],
        _ => return None,
    })
}

fn collect_unknown(value: &toml::Value, path: &str, out: &mut BTreeSet<String>) {
    match value {
        toml::Value::Table(table) => {
            let allowed = allowed_keys(path);
            for (key, child) in table {
                let child_path = if path.is_empty() {
                    key.clone()
                } else {
                    format!("{path}.{key}")
                };
                match allowed {
                    Some(keys) if !keys.contains(&key.as_str()) => {
                        out.insert(child_path);
                    }
                    // Unknown table: do not descend, the parent key already
                    // names the problem. Known or unchecked: descend.
                    _ => collect_unknown(child, &child_path, out),
                }
            }
        }
        toml::Value::Array(items) => {
            for item in items {
                collect_unknown(item, path, out);
            }
        }
        _ => {}
    }
}

/// Parses a manifest, reporting every unknown key in one error.
pub fn parse_manifest(text: &str) -> Result<Manifest> {
    let value: toml::Value = toml::from_str(text)
        .map_err(|e| CliError::validation(format!("manifest is not valid TOML: {}", e.message())))?;
    let mut unknown = BTreeSet::new();
    collect_unknown(&value, "", &mut unknown);
    if !unknown.is_empty() {
        return Err(CliError::validation(format!(
            "manifest contains unknown keys: {}",
            unknown.into_iter().collect::<Vec<_>>().join(", ")
        )));
    }
    value
        .try_into()
        .map_err(|e| CliError::validation(format!("manifest: {e}")))
}

pub fn load_manifest(path: &std::path::Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        CliError::validation(format!("cannot read manifest {}: {e}", path.display()))
    })?;
    parse_manifest(&text)
}
