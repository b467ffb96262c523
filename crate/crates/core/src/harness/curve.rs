//! Learning curves over training-set sizes and pre-training transfer: per
//! trial, subsets are nested prefixes of one seeded shuffle, each (size,
//! trial) cell trains a freshly initialized model, and aggregates report
//! mean and standard error over non-aborted trials.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{tag, Rng};
use crate::error::{LabError, Result};

use super::metrics::mean_sem;
use super::train::{train_with_init, RunRecord, TaskBinding, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveConfig {
    pub train: TrainConfig,
    /// Ascending training-set sizes.
    pub sizes: Vec<usize>,
    pub trials: usize,
    /// Test metric aggregated into the curve, e.g. "elementwise_acc".
    pub metric: String,
}

impl CurveConfig {
    pub fn validate(&self, task: &TaskBinding) -> Result<()> {
        self.train.validate()?;
        if self.trials == 0 {
            return Err(LabError::config("trials must be at least 1"));
        }
        if self.sizes.is_empty() {
            return Err(LabError::config("at least one training-set size is required"));
        }
        if self.sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(LabError::config("sizes must be strictly ascending"));
        }
        let max = *self.sizes.last().unwrap();
        if max > task.train_len() {
            return Err(LabError::capacity(format!(
                "size {max} exceeds the {} available training samples",
                task.train_len()
            )));
        }
        if self.sizes[0] == 0 {
            return Err(LabError::config("sizes must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub size: usize,
    pub records: Vec<RunRecord>,
    /// Metric per non-aborted trial, in trial order.
    pub accs: Vec<f64>,
    pub mean: f64,
    pub sem: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    pub metric: String,
    pub points: Vec<CurvePoint>,
}

impl LearningCurve {
    pub fn mean_at(&self, size: usize) -> Option<f64> {
        self.points.iter().find(|p| p.size == size).map(|p| p.mean)
    }
}

/// The training subset for (trial): one shuffle per trial; size-s subsets
/// are prefixes, so smaller sizes are nested inside larger ones.
fn trial_order(seed: u64, trial: usize, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    Rng::stream(seed, &[tag("subsample"), trial as u64]).shuffle(&mut order);
    order
}

fn init_seed(seed: u64, size: usize, trial: usize) -> u64 {
    Rng::stream(seed, &[tag("init"), size as u64, trial as u64]).next_u64()
}

pub fn learning_curve(cfg: &CurveConfig, task: &TaskBinding) -> Result<LearningCurve> {
    learning_curve_with_init(cfg, task, None)
}

/// Learning curve with optional per-trial warm-start snapshots; inits[t]
/// seeds every size cell of trial t. Used by pre-training transfer.
pub fn learning_curve_with_init(
    cfg: &CurveConfig,
    task: &TaskBinding,
    inits: Option<&[Vec<Vec<f32>>]>,
) -> Result<LearningCurve> {
    cfg.validate(task)?;
    if let Some(snaps) = inits {
        if snaps.len() != cfg.trials {
            return Err(LabError::config(format!(
                "{} warm-start snapshots but {} trials",
                snaps.len(),
                cfg.trials
            )));
        }
    }

    let n = task.train_len();
    let orders: Vec<Vec<usize>> =
        (0..cfg.trials).map(|t| trial_order(cfg.train.seed, t, n)).collect();

    let cells: Vec<(usize, usize)> = cfg
        .sizes
        .iter()
        .flat_map(|&s| (0..cfg.trials).map(move |t| (s, t)))
        .collect();

    let runs: Vec<((usize, usize), Result<RunRecord>)> = cells
        .par_iter()
        .map(|&(size, trial)| {
            let sub = task.with_train_subset(&orders[trial][..size]);
            let mut tc = cfg.train.clone();
            tc.seed = init_seed(cfg.train.seed, size, trial);
            let init = inits.map(|snaps| snaps[trial].as_slice());
            ((size, trial), train_with_init(&tc, &sub, init, None))
        })
        .collect();

    let mut points = Vec::with_capacity(cfg.sizes.len());
    for &size in &cfg.sizes {
        let mut records = Vec::with_capacity(cfg.trials);
        for trial in 0..cfg.trials {
            let rec = runs
                .iter()
                .find(|((s, t), _)| *s == size && *t == trial)
                .expect("every cell ran");
            records.push(rec.1.as_ref().map_err(clone_err)?.clone());
        }
        let accs: Vec<f64> = records
            .iter()
            .filter(|r| r.aborted.is_none())
            .map(|r| {
                r.test.get(&cfg.metric).copied().ok_or_else(|| {
                    LabError::config(format!("metric {} missing from test results", cfg.metric))
                })
            })
            .collect::<Result<_>>()?;
        let (mean, sem) = mean_sem(&accs);
        points.push(CurvePoint { size, records, accs, mean, sem });
    }
    Ok(LearningCurve { metric: cfg.metric.clone(), points })
}

fn clone_err(e: &LabError) -> LabError {
    LabError::Config(format!("trial failed: {e}"))
}

// ── pre-training transfer ──────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferConfig {
    /// Training run on the pre-training task, repeated once per trial with
    /// trial-specific seeds.
    pub pretrain: TrainConfig,
    pub curve: CurveConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferResult {
    /// Learning curve with fresh initialization (identical to a standalone
    /// learning_curve call with the same config).
    pub control: LearningCurve,
    /// Learning curve initialized from the per-trial pre-trained weights.
    pub pretrained: LearningCurve,
    pub pretrain_records: Vec<RunRecord>,
}

/// Pre-trains one model per trial on `pretrain_task`, then evaluates the
/// primary-task learning curve with and without those weights as init.
pub fn pretrain_transfer(
    cfg: &TransferConfig,
    pretrain_task: &TaskBinding,
    primary_task: &TaskBinding,
) -> Result<TransferResult> {
    if cfg.pretrain.model != cfg.curve.train.model {
        return Err(LabError::config(
            "pre-training and fine-tuning must share one model spec",
        ));
    }
    cfg.pretrain.validate()?;
    cfg.curve.validate(primary_task)?;

    let pretrained: Vec<(RunRecord, Vec<Vec<f32>>)> = (0..cfg.curve.trials)
        .into_par_iter()
        .map(|trial| -> Result<(RunRecord, Vec<Vec<f32>>)> {
            let mut tc = cfg.pretrain.clone();
            tc.seed = Rng::stream(cfg.pretrain.seed, &[tag("pretrain"), trial as u64]).next_u64();
            let dir = tempfile_dir()?;
            let path = dir.join(format!("pretrain-{trial}.ckpt"));
            let rec = train_with_init(&tc, pretrain_task, None, Some(&path))?;
            if rec.aborted.is_some() {
                return Err(LabError::Aborted(format!(
                    "pre-training trial {trial} diverged: {}",
                    rec.aborted.as_deref().unwrap_or("")
                )));
            }
            let (model, _) = crate::arch::load_checkpoint::<f32>(
                &path,
                &cfg.pretrain.model,
                crate::arch::LoadMode::Strict,
            )?;
            std::fs::remove_file(&path).ok();
            Ok((rec, model.store.snapshot()))
        })
        .collect::<Result<_>>()?;

    let (pretrain_records, snapshots): (Vec<_>, Vec<_>) = pretrained.into_iter().unzip();

    let control = learning_curve(&cfg.curve, primary_task)?;
    let warm = learning_curve_with_init(&cfg.curve, primary_task, Some(&snapshots))?;

    Ok(TransferResult { control, pretrained: warm, pretrain_records })
}

fn tempfile_dir() -> Result<std::path::PathBuf> {
    let dir = std::env::temp_dir().join("abstractor-lab-pretrain");
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

// ── persistence ────────────────────────────────────────────────

/// Per-trial CSV: size, trial, metric value (aborted trials write "aborted").
pub fn write_curve_trials_csv(curve: &LearningCurve, path: impl AsRef<Path>) -> Result<()> {
    let mut text = String::from("size,trial,test_acc\n");
    for p in &curve.points {
        for (t, rec) in p.records.iter().enumerate() {
            match rec.aborted {
                None => {
                    let v = rec.test.get(&curve.metric).copied().unwrap_or(f64::NAN);
                    text.push_str(&format!("{},{},{}\n", p.size, t, v));
                }
                Some(_) => text.push_str(&format!("{},{},aborted\n", p.size, t)),
            }
        }
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Aggregate CSV: size, mean, sem.
pub fn write_curve_aggregate_csv(curve: &LearningCurve, path: impl AsRef<Path>) -> Result<()> {
    let mut text = String::from("size,mean,sem\n");
    for p in &curve.points {
        text.push_str(&format!("{},{},{}\n", p.size, p.mean, p.sem));
    }
    std::fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{HeadKind, ModelKind, ModelSpec};
    use crate::harness::adam::AdamConfig;
    use crate::tasks::order::gen_order_pairs;

    fn mlp_spec() -> ModelSpec {
        ModelSpec {
            kind: ModelKind::SymbolicMlp,
            d_in: 8,
            max_input_len: 1,
            max_target_len: 0,
            head: HeadKind::Classifier { classes: 2 },
            embed_dim: None,
            encoder: None,
            decoder: None,
            abstractor: None,
            second_abstractor: None,
            abstractor_reads: None,
            mlp_hidden: Some(8),
            corelnet_softmax: None,
        }
    }

    /// Tiny binary task: classify the sign of the first coordinate.
    fn sign_task(n: usize, seed: u64) -> TaskBinding {
        let mut rng = Rng::stream(seed, &[tag("signs")]);
        let make = |rng: &mut Rng, n: usize| {
            let mut inputs = Vec::with_capacity(n * 8);
            let mut labels = Vec::with_capacity(n);
            for _ in 0..n {
                let mut row = vec![0.0f64; 8];
                rng.fill_normal(&mut row, 1.0);
                labels.push(usize::from(row[0] > 0.0));
                inputs.extend_from_slice(&row);
            }
            super::super::train::ClsSplit { n, inputs, labels }
        };
        TaskBinding::Cls(super::super::train::ClsTask {
            d: 8,
            m: 1,
            classes: 2,
            train: make(&mut rng, n),
            val: make(&mut rng, 64),
            test: make(&mut rng, 128),
        })
    }

    fn curve_cfg(sizes: Vec<usize>, trials: usize) -> CurveConfig {
        CurveConfig {
            train: TrainConfig {
                model: mlp_spec(),
                adam: AdamConfig::with_lr(5e-3),
                batch_size: 16,
                max_epochs: 5,
                patience: None,
                seed: 7,
            },
            sizes,
            trials,
            metric: "binary_acc".into(),
        }
    }

    #[test]
    fn single_size_single_trial_wraps_one_record() {
        let task = sign_task(64, 1);
        let curve = learning_curve(&curve_cfg(vec![32], 1), &task).unwrap();
        assert_eq!(curve.points.len(), 1);
        assert_eq!(curve.points[0].records.len(), 1);
        assert_eq!(curve.points[0].sem, 0.0);
        assert_eq!(curve.points[0].mean, curve.points[0].accs[0]);
    }

    #[test]
    fn subsets_are_nested_across_sizes_within_a_trial() {
        let seed = 7;
        let n = 100;
        for trial in 0..3 {
            let order = trial_order(seed, trial, n);
            let small: Vec<usize> = order[..20].to_vec();
            let large: Vec<usize> = order[..60].to_vec();
            assert_eq!(small[..], large[..20], "smaller size must be a prefix");
        }
    }

    #[test]
    fn aggregates_match_direct_mean_sem() {
        let task = sign_task(80, 2);
        let curve = learning_curve(&curve_cfg(vec![16, 48], 3), &task).unwrap();
        for p in &curve.points {
            let (m, s) = mean_sem(&p.accs);
            assert_eq!(p.mean, m);
            assert_eq!(p.sem, s);
            assert_eq!(p.accs.len(), 3);
        }
        assert!(curve.points[0].size < curve.points[1].size);
    }

    #[test]
    fn invalid_grids_are_rejected() {
        let task = sign_task(64, 3);
        assert!(learning_curve(&curve_cfg(vec![], 2), &task).is_err());
        assert!(learning_curve(&curve_cfg(vec![32, 32], 2), &task).is_err());
        assert!(learning_curve(&curve_cfg(vec![48, 32], 2), &task).is_err());
        assert!(learning_curve(&curve_cfg(vec![65], 2), &task).is_err());
        assert!(learning_curve(&curve_cfg(vec![32], 0), &task).is_err());
    }

    #[test]
    fn order_pair_curve_runs_end_to_end() {
        let ds = gen_order_pairs(8, 4, (0.5, 0.25, 0.25), 3).unwrap();
        let task = TaskBinding::from_order_pairs(&ds);
        let mut cfg = curve_cfg(vec![8, 16], 2);
        cfg.train.model = ModelSpec {
            kind: ModelKind::CorelnetAsym,
            d_in: 4,
            max_input_len: 2,
            max_target_len: 0,
            head: HeadKind::Classifier { classes: 2 },
            embed_dim: None,
            encoder: None,
            decoder: None,
            abstractor: None,
            second_abstractor: None,
            abstractor_reads: None,
            mlp_hidden: None,
            corelnet_softmax: Some(true),
        };
        let curve = learning_curve(&cfg, &task).unwrap();
        assert_eq!(curve.points.len(), 2);
        for p in &curve.points {
            assert!(p.mean.is_finite());
        }
    }

    #[test]
    fn control_arm_equals_plain_curve_bit_exactly() {
        let task = sign_task(64, 4);
        let cfg = TransferConfig {
            pretrain: curve_cfg(vec![32], 2).train,
            curve: curve_cfg(vec![16, 32], 2),
        };
        let plain = learning_curve(&cfg.curve, &task).unwrap();
        let transfer = pretrain_transfer(&cfg, &task, &task).unwrap();
        assert_eq!(transfer.control, plain);
        assert_eq!(transfer.pretrain_records.len(), 2);
        // Warm starts actually differ from cold starts.
        assert_ne!(transfer.pretrained, plain);
    }

    #[test]
    fn mismatched_specs_are_a_config_error() {
        let task = sign_task(64, 5);
        let mut cfg = TransferConfig {
            pretrain: curve_cfg(vec![32], 2).train,
            curve: curve_cfg(vec![16], 2),
        };
        cfg.pretrain.model.mlp_hidden = Some(16);
        assert!(pretrain_transfer(&cfg, &task, &task).is_err());
    }

    #[test]
    fn csv_exports_have_expected_shape() {
        let dir = tempfile::tempdir().unwrap();
        let task = sign_task(64, 6);
        let curve = learning_curve(&curve_cfg(vec![16, 32], 2), &task).unwrap();
        let trials = dir.path().join("trials.csv");
        let agg = dir.path().join("agg.csv");
        write_curve_trials_csv(&curve, &trials).unwrap();
        write_curve_aggregate_csv(&curve, &agg).unwrap();
        let t = std::fs::read_to_string(&trials).unwrap();
        assert_eq!(t.lines().count(), 1 + 4, "header + 2 sizes x 2 trials");
        let a = std::fs::read_to_string(&agg).unwrap();
        assert_eq!(a.lines().count(), 1 + 2);
        assert!(a.starts_with("size,mean,sem"));
    }
}
