//! Resolution: manifest + flag overrides -> a fully resolved, serializable
//! plan plus materialized datasets.
//!
//! Everything that can be rejected is rejected here, before any output
//! directory exists, so a failed validation leaves no partial outputs. The
//! serialized plan becomes `effective_config.toml`, and its hash (with the
//! seed) names the run directory, so differing configs can never silently
//! overwrite each other.

use std::path::PathBuf;

use abstractor_core::arch::ModelSpec;
use abstractor_core::engine::fnv1a64;
use abstractor_core::harness::{
    self, conformance, CurveConfig, NamedRobustness, NamedTransfer, Profile, RobustnessConfig,
    SortingDataCfg, TaskBinding, TrainConfig, TransferConfig,
};
use abstractor_core::tasks::{
    gen_order_pairs, gen_set_dataset, load_set_dataset, ObjectUniverse, OrderPairDataset,
    SetTriple, SortingDataset,
};
use serde::Serialize;

use crate::error::{CliError, Result};
use crate::manifest::{
    ExperimentKind, Manifest, PresetName, ProfileArg, TaskKind, TaskManifest,
};

#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub profile: Option<ProfileArg>,
}

/// Resolved task data source; enough to regenerate the data bit-exactly.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskPlan {
    Sorting {
        n_train: usize,
        n_val: usize,
        n_test: usize,
        seq_len: usize,
        data_seed: u64,
        #[serde(skip_serializing_if = "Option::is_none")]
        file: Option<PathBuf>,
    },
    Order {
        n_objects: usize,
        d: usize,
        train_frac: f64,
        val_frac: f64,
        test_frac: f64,
        data_seed: u64,
        #[serde(skip_serializing_if = "Option::is_none")]
        file: Option<PathBuf>,
    },
    Set {
        n_train: usize,
        n_val: usize,
        n_test: usize,
        data_seed: u64,
        #[serde(skip_serializing_if = "Option::is_none")]
        file: Option<PathBuf>,
    },
}

/// One learning-curve arm: a named model with its full curve config.
#[derive(Debug, Clone, Serialize)]
pub struct CurveArm {
    pub name: String,
    pub symbolic: bool,
    pub curve: CurveConfig,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "experiment", rename_all = "kebab-case")]
pub enum Plan {
    GenData {
        seed: u64,
        task: TaskPlan,
    },
    Train {
        seed: u64,
        task: TaskPlan,
        model: String,
        symbolic: bool,
        train: TrainConfig,
    },
    Curve {
        seed: u64,
        task: TaskPlan,
        arms: Vec<CurveArm>,
    },
    PretrainTransfer {
        seed: u64,
        task: TaskPlan,
        pretrain_n: usize,
        transfers: Vec<NamedTransfer>,
    },
    Robustness {
        seed: u64,
        task: TaskPlan,
        sweeps: Vec<NamedRobustness>,
    },
    Probe {
        seed: u64,
        d: usize,
        sigma: f64,
        trials: usize,
    },
}

impl Plan {
    pub fn experiment(&self) -> ExperimentKind {
        match self {
            Plan::GenData { .. } => ExperimentKind::GenData,
            Plan::Train { .. } => ExperimentKind::Train,
            Plan::Curve { .. } => ExperimentKind::Curve,
            Plan::PretrainTransfer { .. } => ExperimentKind::PretrainTransfer,
            Plan::Robustness { .. } => ExperimentKind::Robustness,
            Plan::Probe { .. } => ExperimentKind::Probe,
        }
    }
}

/// Materialized data, generated or loaded during resolution.
pub enum LoadedTask {
    Sorting { universe: ObjectUniverse, ds: SortingDataset },
    Order { ds: OrderPairDataset },
    Set { triples: Vec<SetTriple>, n_train: usize, n_val: usize, n_test: usize },
}

impl LoadedTask {
    pub fn binding(&self, symbolic: bool) -> Result<TaskBinding> {
        match self {
            LoadedTask::Sorting { ds, .. } => Ok(TaskBinding::from_sorting(ds)),
            LoadedTask::Order { ds } => Ok(TaskBinding::from_order_pairs(ds)),
            LoadedTask::Set { triples, n_train, n_val, n_test } => {
                let b = if symbolic {
                    TaskBinding::from_set_symbolic(triples, *n_train, *n_val, *n_test)
                } else {
                    TaskBinding::from_set_triples(triples, *n_train, *n_val, *n_test)
                }?;
                Ok(b)
            }
        }
    }
}

pub struct Resolution {
    pub plan: Plan,
    pub loaded: Option<LoadedTask>,
    pub out_root: PathBuf,
    pub dir_name: String,
    pub effective_toml: String,
}

impl Resolution {
    pub fn run_dir(&self) -> PathBuf {
        self.out_root.join(&self.dir_name)
    }
}

// Loaded datasets are large; summarize instead of dumping them.
impl std::fmt::Debug for Resolution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Resolution")
            .field("dir_name", &self.dir_name)
            .field("out_root", &self.out_root)
            .field("effective_toml", &self.effective_toml)
            .finish_non_exhaustive()
    }
}

pub fn resolve(manifest: &Manifest, ov: &Overrides) -> Result<Resolution> {
    let seed = ov.seed.unwrap_or(manifest.seed);
    let profile: Profile = ov.profile.or(manifest.profile).unwrap_or(ProfileArg::Desk).into();
    let out_root = ov
        .out
        .clone()
        .or_else(|| manifest.out.clone())
        .or_else(|| std::env::var_os("ABSTRACTOR_LAB_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));

    let (plan, origin) = match manifest.preset {
        Some(p) => (expand_preset(manifest, p, profile, seed)?, format!("preset {} ({})", p.name(), profile_name(profile))),
        None => (resolve_explicit(manifest, seed)?, "explicit manifest".to_string()),
    };

    let loaded = materialize(&plan)?;
    validate_plan(&plan, loaded.as_ref())?;

    let body = toml::to_string(&plan)
        .map_err(|e| CliError::Internal(format!("cannot serialize effective config: {e}")))?;
    let effective_toml = format!("# origin: {origin}\n{body}");
    let dir_name = format!(
        "{}-{:08x}-s{}",
        plan.experiment().name(),
        fnv1a64(effective_toml.as_bytes()) as u32,
        seed
    );

    Ok(Resolution { plan, loaded, out_root, dir_name, effective_toml })
}

fn profile_name(p: Profile) -> &'static str {
    match p {
        Profile::Desk => "desk",
        Profile::Paper => "paper",
    }
}

// ── preset expansion ───────────────────────────────────────────

fn expand_preset(m: &Manifest, p: PresetName, profile: Profile, seed: u64) -> Result<Plan> {
    if m.experiment != p.experiment() {
        return Err(CliError::validation(format!(
            "preset {} runs under experiment {}, not {}",
            p.name(),
            p.experiment().name(),
            m.experiment.name()
        )));
    }
    let extras = [
        ("task", m.task.is_some()),
        ("models", m.models.is_some()),
        ("train", m.train.is_some()),
        ("curve", m.curve.is_some()),
        ("pretrain", m.pretrain.is_some()),
        ("robustness", m.robustness.is_some()),
        ("probe", m.probe.is_some()),
    ];
    let set: Vec<&str> = extras.iter().filter(|(_, s)| *s).map(|(n, _)| *n).collect();
    if !set.is_empty() {
        return Err(CliError::validation(format!(
            "preset manifests take no explicit config sections, found: {}",
            set.join(", ")
        )));
    }

    let sorting_plan = |data: &SortingDataCfg, data_seed: u64| TaskPlan::Sorting {
        n_train: data.n_train,
        n_val: data.n_val,
        n_test: data.n_test,
        seq_len: data.seq_len,
        data_seed,
        file: None,
    };

    Ok(match p {
        PresetName::Fig2a => {
            let preset = harness::fig2a(profile, seed);
            Plan::Curve {
                seed,
                task: sorting_plan(&preset.data, preset.data_seed),
                arms: preset
                    .curves
                    .into_iter()
                    .map(|c| CurveArm { name: c.name, symbolic: false, curve: c.curve })
                    .collect(),
            }
        }
        PresetName::Fig2b => {
            let preset = harness::fig2b(profile, seed);
            Plan::PretrainTransfer {
                seed,
                task: sorting_plan(&preset.data, preset.data_seed),
                pretrain_n: preset.pretrain_n,
                transfers: preset.transfers,
            }
        }
        PresetName::OrderRelation => {
            let preset = harness::order_relation(profile, seed);
            Plan::Curve {
                seed,
                task: TaskPlan::Order {
                    n_objects: preset.n_objects,
                    d: preset.d,
                    train_frac: preset.split_fracs.0,
                    val_frac: preset.split_fracs.1,
                    test_frac: preset.split_fracs.2,
                    data_seed: preset.data_seed,
                    file: None,
                },
                arms: preset
                    .curves
                    .into_iter()
                    .map(|c| CurveArm { name: c.name, symbolic: false, curve: c.curve })
                    .collect(),
            }
        }
        PresetName::Set => {
            let preset = harness::set_classification(profile, seed);
            Plan::Curve {
                seed,
                task: TaskPlan::Set {
                    n_train: preset.n_train,
                    n_val: preset.n_val,
                    n_test: preset.n_test,
                    data_seed: preset.data_seed,
                    file: None,
                },
                arms: preset
                    .curves
                    .into_iter()
                    .map(|c| CurveArm { name: c.name, symbolic: c.symbolic, curve: c.curve })
                    .collect(),
            }
        }
        PresetName::Robustness => {
            let preset = harness::robustness(profile, seed);
            Plan::Robustness {
                seed,
                task: sorting_plan(&preset.data, preset.data_seed),
                sweeps: preset.sweeps,
            }
        }
    })
}

// ── explicit-manifest resolution ───────────────────────────────

fn require<'a, T>(opt: &'a Option<T>, section: &str, kind: ExperimentKind) -> Result<&'a T> {
    opt.as_ref().ok_or_else(|| {
        CliError::validation(format!("{} needs a [{}] section", kind.name(), section))
    })
}

fn forbid(is_set: bool, section: &str, kind: ExperimentKind) -> Result<()> {
    if is_set {
        return Err(CliError::validation(format!(
            "[{}] is not used by {}",
            section,
            kind.name()
        )));
    }
    Ok(())
}

fn resolve_explicit(m: &Manifest, seed: u64) -> Result<Plan> {
    let kind = m.experiment;
    match kind {
        ExperimentKind::GenData => {
            forbid(m.models.is_some(), "models", kind)?;
            forbid(m.train.is_some(), "train", kind)?;
            forbid(m.curve.is_some(), "curve", kind)?;
            forbid(m.pretrain.is_some(), "pretrain", kind)?;
            forbid(m.robustness.is_some(), "robustness", kind)?;
            forbid(m.probe.is_some(), "probe", kind)?;
            let task = task_plan(require(&m.task, "task", kind)?, seed)?;
            Ok(Plan::GenData { seed, task })
        }
        ExperimentKind::Train => {
            forbid(m.curve.is_some(), "curve", kind)?;
            forbid(m.pretrain.is_some(), "pretrain", kind)?;
            forbid(m.robustness.is_some(), "robustness", kind)?;
            forbid(m.probe.is_some(), "probe", kind)?;
            let task = task_plan(require(&m.task, "task", kind)?, seed)?;
            let models = named_models(m, &task)?;
            if models.len() != 1 {
                return Err(CliError::validation(format!(
                    "train takes exactly one model, found {}",
                    models.len()
                )));
            }
            let (name, symbolic, spec) = models.into_iter().next().unwrap();
            let train = train_config(m, kind, spec, seed)?;
            Ok(Plan::Train { seed, task, model: name, symbolic, train })
        }
        ExperimentKind::Curve => {
            forbid(m.pretrain.is_some(), "pretrain", kind)?;
            forbid(m.robustness.is_some(), "robustness", kind)?;
            forbid(m.probe.is_some(), "probe", kind)?;
            let task = task_plan(require(&m.task, "task", kind)?, seed)?;
            let arms = curve_arms(m, kind, &task, seed)?;
            Ok(Plan::Curve { seed, task, arms })
        }
        ExperimentKind::PretrainTransfer => {
            forbid(m.robustness.is_some(), "robustness", kind)?;
            forbid(m.probe.is_some(), "probe", kind)?;
            let task = task_plan(require(&m.task, "task", kind)?, seed)?;
            if !matches!(task, TaskPlan::Sorting { .. }) {
                return Err(CliError::validation(
                    "pretrain-transfer is defined for the sorting task",
                ));
            }
            let pretrain_n = require(&m.pretrain, "pretrain", kind)?.n;
            let arms = curve_arms(m, kind, &task, seed)?;
            let transfers = arms
                .into_iter()
                .map(|arm| NamedTransfer {
                    name: arm.name,
                    transfer: TransferConfig {
                        pretrain: arm.curve.train.clone(),
                        curve: arm.curve,
                    },
                })
                .collect();
            Ok(Plan::PretrainTransfer { seed, task, pretrain_n, transfers })
        }
        ExperimentKind::Robustness => {
            forbid(m.curve.is_some(), "curve", kind)?;
            forbid(m.pretrain.is_some(), "pretrain", kind)?;
            forbid(m.probe.is_some(), "probe", kind)?;
            let task = task_plan(require(&m.task, "task", kind)?, seed)?;
            if !matches!(task, TaskPlan::Sorting { .. }) {
                return Err(CliError::validation(
                    "robustness sweeps are defined for the sorting task",
                ));
            }
            let rb = require(&m.robustness, "robustness", kind)?;
            let models = named_models(m, &task)?;
            let sweeps = models
                .into_iter()
                .map(|(name, _, spec)| {
                    Ok(NamedRobustness {
                        name,
                        config: RobustnessConfig {
                            train: train_config(m, kind, spec, seed)?,
                            grids: rb.grids.clone(),
                            trials: rb.trials,
                        },
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Plan::Robustness { seed, task, sweeps })
        }
        ExperimentKind::Probe => {
            forbid(m.task.is_some(), "task", kind)?;
            forbid(m.models.is_some(), "models", kind)?;
            forbid(m.train.is_some(), "train", kind)?;
            forbid(m.curve.is_some(), "curve", kind)?;
            forbid(m.pretrain.is_some(), "pretrain", kind)?;
            forbid(m.robustness.is_some(), "robustness", kind)?;
            let p = require(&m.probe, "probe", kind)?;
            if p.d == 0 || p.trials == 0 {
                return Err(CliError::validation("probe needs d >= 1 and trials >= 1"));
            }
            let sigma = p.sigma.unwrap_or(1.0 / (p.d as f64).sqrt());
            if !(sigma > 0.0) {
                return Err(CliError::validation("probe sigma must be positive"));
            }
            Ok(Plan::Probe { seed, d: p.d, sigma, trials: p.trials })
        }
    }
}

fn task_plan(t: &TaskManifest, seed: u64) -> Result<TaskPlan> {
    let unused = |fields: &[(&str, bool)]| -> Result<()> {
        let set: Vec<&str> = fields.iter().filter(|(_, s)| *s).map(|(n, _)| *n).collect();
        if set.is_empty() {
            Ok(())
        } else {
            Err(CliError::validation(format!(
                "task fields not used by this task kind: {}",
                set.join(", ")
            )))
        }
    };
    if let Some(path) = &t.data {
        if !path.exists() {
            return Err(CliError::validation(format!(
                "referenced dataset file does not exist: {}",
                path.display()
            )));
        }
    }
    let data_seed = harness::presets::data_seed(seed);
    match t.kind {
        TaskKind::Sorting => {
            unused(&[
                ("n_objects", t.n_objects.is_some()),
                ("d", t.d.is_some()),
                ("train_frac", t.train_frac.is_some()),
                ("val_frac", t.val_frac.is_some()),
                ("test_frac", t.test_frac.is_some()),
            ])?;
            let dflt = SortingDataCfg::default();
            Ok(TaskPlan::Sorting {
                n_train: t.n_train.unwrap_or(dflt.n_train),
                n_val: t.n_val.unwrap_or(dflt.n_val),
                n_test: t.n_test.unwrap_or(dflt.n_test),
                seq_len: t.seq_len.unwrap_or(dflt.seq_len),
                data_seed,
                file: t.data.clone(),
            })
        }
        TaskKind::Order => {
            unused(&[
                ("n_train", t.n_train.is_some()),
                ("n_val", t.n_val.is_some()),
                ("n_test", t.n_test.is_some()),
                ("seq_len", t.seq_len.is_some()),
            ])?;
            Ok(TaskPlan::Order {
                n_objects: t.n_objects.unwrap_or(32),
                d: t.d.unwrap_or(8),
                train_frac: t.train_frac.unwrap_or(0.5),
                val_frac: t.val_frac.unwrap_or(0.15),
                test_frac: t.test_frac.unwrap_or(0.35),
                data_seed,
                file: t.data.clone(),
            })
        }
        TaskKind::Set => {
            unused(&[
                ("seq_len", t.seq_len.is_some()),
                ("n_objects", t.n_objects.is_some()),
                ("d", t.d.is_some()),
                ("train_frac", t.train_frac.is_some()),
                ("val_frac", t.val_frac.is_some()),
                ("test_frac", t.test_frac.is_some()),
            ])?;
            Ok(TaskPlan::Set {
                n_train: t.n_train.unwrap_or(2500),
                n_val: t.n_val.unwrap_or(500),
                n_test: t.n_test.unwrap_or(1000),
                data_seed,
                file: t.data.clone(),
            })
        }
    }
}

/// Validated (name, symbolic, spec) triples from the models section.
fn named_models(m: &Manifest, task: &TaskPlan) -> Result<Vec<(String, bool, ModelSpec)>> {
    let models = require(&m.models, "models", m.experiment)?;
    if models.is_empty() {
        return Err(CliError::validation("models list is empty"));
    }
    let mut seen = std::collections::BTreeSet::new();
    models
        .iter()
        .map(|nm| {
            if nm.name.is_empty()
                || !nm.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
            {
                return Err(CliError::validation(format!(
                    "model name {:?} must be [a-zA-Z0-9_-]+ (it names output files)",
                    nm.name
                )));
            }
            if !seen.insert(nm.name.clone()) {
                return Err(CliError::validation(format!("duplicate model name {}", nm.name)));
            }
            let symbolic = nm.symbolic.unwrap_or(false);
            if symbolic && !matches!(task, TaskPlan::Set { .. }) {
                return Err(CliError::validation(
                    "symbolic = true only applies to the set task",
                ));
            }
            nm.spec.validate().map_err(CliError::from)?;
            Ok((nm.name.clone(), symbolic, nm.spec.clone()))
        })
        .collect()
}

fn train_config(
    m: &Manifest,
    kind: ExperimentKind,
    spec: ModelSpec,
    seed: u64,
) -> Result<TrainConfig> {
    let t = require(&m.train, "train", kind)?;
    let cfg = TrainConfig {
        model: spec,
        adam: t.adam.unwrap_or_default(),
        batch_size: t.batch_size,
        max_epochs: t.max_epochs,
        patience: t.patience,
        seed,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn curve_arms(
    m: &Manifest,
    kind: ExperimentKind,
    task: &TaskPlan,
    seed: u64,
) -> Result<Vec<CurveArm>> {
    let c = require(&m.curve, "curve", kind)?;
    let metric = c.metric.clone().unwrap_or_else(|| match task {
        TaskPlan::Sorting { .. } => "elementwise_acc".to_string(),
        _ => "binary_acc".to_string(),
    });
    named_models(m, task)?
        .into_iter()
        .map(|(name, symbolic, spec)| {
            Ok(CurveArm {
                name,
                symbolic,
                curve: CurveConfig {
                    train: train_config(m, kind, spec, seed)?,
                    sizes: c.sizes.clone(),
                    trials: c.trials,
                    metric: metric.clone(),
                },
            })
        })
        .collect()
}

// ── data materialization and cross-validation ──────────────────

fn materialize(plan: &Plan) -> Result<Option<LoadedTask>> {
    let task = match plan {
        Plan::Probe { .. } => return Ok(None),
        Plan::GenData { task, .. }
        | Plan::Train { task, .. }
        | Plan::Curve { task, .. }
        | Plan::PretrainTransfer { task, .. }
        | Plan::Robustness { task, .. } => task,
    };
    Ok(Some(load_task(task)?))
}

fn load_task(task: &TaskPlan) -> Result<LoadedTask> {
    match task {
        TaskPlan::Sorting { n_train, n_val, n_test, seq_len, data_seed, file } => {
            let (universe, ds) = match file {
                Some(path) => {
                    let ds = SortingDataset::load(path)?;
                    // The container records the bundle seed; rebuilding the
                    // universe from it must reproduce the stored inputs, or
                    // corruption sweeps would corrupt the wrong objects.
                    let universe = abstractor_core::tasks::gen_object_universe(ds.seed);
                    let rebuilt = ds.test.inputs_from(&universe.objects, ds.d);
                    if rebuilt != ds.test.inputs {
                        return Err(CliError::validation(format!(
                            "dataset {} was not generated from its recorded seed",
                            path.display()
                        )));
                    }
                    (universe, ds)
                }
                None => harness::sorting_bundle(
                    &SortingDataCfg {
                        n_train: *n_train,
                        n_val: *n_val,
                        n_test: *n_test,
                        seq_len: *seq_len,
                    },
                    *data_seed,
                )?,
            };
            Ok(LoadedTask::Sorting { universe, ds })
        }
        TaskPlan::Order { n_objects, d, train_frac, val_frac, test_frac, data_seed, file } => {
            let ds = match file {
                Some(path) => OrderPairDataset::load(path)?,
                None => gen_order_pairs(*n_objects, *d, (*train_frac, *val_frac, *test_frac), *data_seed)?,
            };
            Ok(LoadedTask::Order { ds })
        }
        TaskPlan::Set { n_train, n_val, n_test, data_seed, file } => {
            let triples = match file {
                Some(path) => load_set_dataset(path)?.0,
                None => gen_set_dataset(n_train + n_val + n_test, *data_seed)?,
            };
            Ok(LoadedTask::Set {
                triples,
                n_train: *n_train,
                n_val: *n_val,
                n_test: *n_test,
            })
        }
    }
}

/// Every config is checked against the materialized data before anything is
/// written: model-task conformance, curve sizes against the train split, and
/// sweep grids.
fn validate_plan(plan: &Plan, loaded: Option<&LoadedTask>) -> Result<()> {
    match plan {
        Plan::Probe { .. } | Plan::GenData { .. } => Ok(()),
        Plan::Train { train, symbolic, .. } => {
            let binding = loaded.unwrap().binding(*symbolic)?;
            train.validate()?;
            conformance(&train.model, &binding)?;
            Ok(())
        }
        Plan::Curve { arms, .. } => {
            for arm in arms {
                let binding = loaded.unwrap().binding(arm.symbolic)?;
                conformance(&arm.curve.train.model, &binding)?;
                arm.curve.validate(&binding)?;
            }
            Ok(())
        }
        Plan::PretrainTransfer { transfers, .. } => {
            for t in transfers {
                let binding = loaded.unwrap().binding(false)?;
                conformance(&t.transfer.curve.train.model, &binding)?;
                t.transfer.pretrain.validate()?;
                t.transfer.curve.validate(&binding)?;
            }
            Ok(())
        }
        Plan::Robustness { sweeps, .. } => {
            for s in sweeps {
                let binding = loaded.unwrap().binding(false)?;
                conformance(&s.config.train.model, &binding)?;
                s.config.validate()?;
            }
            Ok(())
        }
    }
}

// ── tests ──────────────────────────────────────────────────────
