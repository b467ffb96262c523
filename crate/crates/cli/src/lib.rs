//! `abstractor-lab`: command-line front end for the relational-abstraction
//! laboratory. Subcommands bind strict TOML manifests (or named presets) to
//! dataset generation, training, learning-curve sweeps, pre-training
//! transfer, robustness sweeps, the random-feature probe, and report
//! consolidation.
//!
//! Exit codes: 0 success, 2 validation error (nothing written), 3 training
//! aborted where the experiment cannot continue.

pub mod error;
pub mod exec;
pub mod manifest;
pub mod plan;
pub mod report;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::error::{CliError, Result};
use crate::manifest::{
    ExperimentKind, Manifest, PresetName, ProbeManifest, ProfileArg, TaskKind, TaskManifest,
};
use crate::plan::Overrides;

#[derive(Parser)]
#[command(
    name = "abstractor-lab",
    version,
    about = "Relational-abstraction laboratory: train and compare sequence and relation models on synthetic relational tasks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub cmd: Cmd,
    /// Override the manifest seed (mandatory when no manifest is given).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output root; defaults to the manifest value, then $ABSTRACTOR_LAB_OUT,
    /// then ./out. Run directories are named <experiment>-<confighash>-s<seed>.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for trial fan-out (default: all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Hyperparameter profile: desk (halved widths, capped epochs) or paper.
    #[arg(long, global = true, value_enum)]
    pub profile: Option<ProfileArg>,
}

#[derive(Subcommand)]
pub enum Cmd {
    /// Generate a dataset container under the output directory.
    GenData {
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Task with default shape; use a manifest to customize.
        #[arg(long, value_enum)]
        task: Option<TaskKind>,
    },
    /// Train one model and save its best checkpoint.
    Train {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Learning curves over training-set sizes for one or more models.
    Curve {
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Named preset: fig2a (sorting sample efficiency), order-relation, set.
        #[arg(long, value_enum)]
        preset: Option<PresetName>,
    },
    /// Pre-train on the reshuffled-order task, then fine-tune on sorting.
    PretrainTransfer {
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Named preset: fig2b.
        #[arg(long, value_enum)]
        preset: Option<PresetName>,
    },
    /// Test-time corruption sweeps for models trained on clean data.
    Robustness {
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Named preset: robustness.
        #[arg(long, value_enum)]
        preset: Option<PresetName>,
    },
    /// Random-feature inner-product preservation probe.
    Probe {
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Feature dimension (default 1024).
        #[arg(long)]
        d: Option<usize>,
        /// Map std-dev (default 1/sqrt(d)).
        #[arg(long)]
        sigma: Option<f64>,
        /// Probe pairs (default 256).
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Merge curve results under a directory into report.csv / report.json.
    Report { dir: PathBuf },
}

fn flag_seed(seed: Option<u64>) -> Result<u64> {
    seed.ok_or_else(|| {
        CliError::validation("seed is mandatory: pass --seed (runs are never clock-seeded)")
    })
}

fn preset_manifest(
    kind: ExperimentKind,
    manifest: Option<PathBuf>,
    preset: Option<PresetName>,
    seed: Option<u64>,
) -> Result<Manifest> {
    match (manifest, preset) {
        (Some(_), Some(_)) => {
            Err(CliError::validation("pass either --manifest or --preset, not both"))
        }
        (Some(path), None) => manifest::load_manifest(&path),
        (None, Some(p)) => Ok(Manifest {
            experiment: kind,
            seed: flag_seed(seed)?,
            out: None,
            profile: None,
            preset: Some(p),
            task: None,
            models: None,
            train: None,
            curve: None,
            pretrain: None,
            robustness: None,
            probe: None,
        }),
        (None, None) => Err(CliError::validation(format!(
            "{} needs --manifest or --preset",
            kind.name()
        ))),
    }
}

/// Runs the CLI; every failure maps to a documented exit code in `main`.
pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(CliError::validation("--workers must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Internal(format!("worker pool: {e}")))?;
    }

    let (manifest, expected) = match cli.cmd {
        Cmd::Report { dir } => return report::report(&dir),
        Cmd::GenData { manifest, task } => {
            let m = match (manifest, task) {
            (Some(_), Some(_)) => {
                return Err(CliError::validation("pass either --manifest or --task, not both"))
            }
            (Some(path), None) => manifest::load_manifest(&path)?,
            (None, Some(kind)) => Manifest {
                experiment: ExperimentKind::GenData,
                seed: flag_seed(cli.seed)?,
                out: None,
                profile: None,
                preset: None,
                task: Some(TaskManifest {
                    kind,
                    n_train: None,
                    n_val: None,
                    n_test: None,
                    seq_len: None,
                    n_objects: None,
                    d: None,
                    train_frac: None,
                    val_frac: None,
                    test_frac: None,
                    data: None,
                }),
                models: None,
                train: None,
                curve: None,
                pretrain: None,
                robustness: None,
                probe: None,
            },
                (None, None) => {
                    return Err(CliError::validation("gen-data needs --manifest or --task"))
                }
            };
            (m, ExperimentKind::GenData)
        }
        Cmd::Train { manifest } => (manifest::load_manifest(&manifest)?, ExperimentKind::Train),
        Cmd::Curve { manifest, preset } => (
            preset_manifest(ExperimentKind::Curve, manifest, preset, cli.seed)?,
            ExperimentKind::Curve,
        ),
        Cmd::PretrainTransfer { manifest, preset } => (
            preset_manifest(ExperimentKind::PretrainTransfer, manifest, preset, cli.seed)?,
            ExperimentKind::PretrainTransfer,
        ),
        Cmd::Robustness { manifest, preset } => (
            preset_manifest(ExperimentKind::Robustness, manifest, preset, cli.seed)?,
            ExperimentKind::Robustness,
        ),
        Cmd::Probe { manifest, d, sigma, trials } => {
            let m = match manifest {
                Some(path) => {
                    if d.is_some() || sigma.is_some() || trials.is_some() {
                        return Err(CliError::validation(
                            "pass either --manifest or probe flags, not both",
                        ));
                    }
                    manifest::load_manifest(&path)?
                }
                None => {
                    let d = d.unwrap_or(1024);
                    Manifest {
                        experiment: ExperimentKind::Probe,
                        seed: flag_seed(cli.seed)?,
                        out: None,
                        profile: None,
                        preset: None,
                        task: None,
                        models: None,
                        train: None,
                        curve: None,
                        pretrain: None,
                        robustness: None,
                        probe: Some(ProbeManifest { d, sigma, trials: trials.unwrap_or(256) }),
                    }
                }
            };
            (m, ExperimentKind::Probe)
        }
    };

    if manifest.experiment != expected {
        return Err(CliError::validation(format!(
            "manifest declares experiment `{}` but the subcommand is `{}`",
            manifest.experiment.name(),
            expected.name()
        )));
    }

    let ov = Overrides { seed: cli.seed, out: cli.out, profile: cli.profile };
    let res = plan::resolve(&manifest, &ov)?;
    exec::execute(&res)
}
