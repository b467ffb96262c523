//! Corruption-robustness sweeps: models train on clean sequences, then the
//! object features are corrupted at each noise level and the test split is
//! re-materialized from the corrupted features before evaluation. One
//! trained model per trial serves every noise grid.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{tag, Rng};
use crate::error::{LabError, Result};
use crate::tasks::{corrupt_additive, corrupt_linear, ObjectUniverse, SortingDataset};

use super::metrics::{elementwise_accuracy, mean_sem};
use super::train::{eval_seq, train_full, RunRecord, SeqSplit, TaskBinding, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    /// Fresh Gaussian offset per object: o + eps, eps ~ N(0, sigma^2 I).
    Additive,
    /// One shared random linear map: Phi o, Phi entries ~ N(0, sigma^2).
    Linear,
}

impl NoiseKind {
    fn stream_tag(self) -> u64 {
        match self {
            NoiseKind::Additive => tag("additive"),
            NoiseKind::Linear => tag("linear"),
        }
    }
}

/// Noise levels (sigma, not sigma^2) for one corruption kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseGrid {
    pub kind: NoiseKind,
    pub sigmas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobustnessConfig {
    pub train: TrainConfig,
    pub grids: Vec<NoiseGrid>,
    pub trials: usize,
}

impl RobustnessConfig {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.trials == 0 {
            return Err(LabError::config("trials must be at least 1"));
        }
        if self.grids.is_empty() {
            return Err(LabError::config("at least one noise grid is required"));
        }
        for g in &self.grids {
            if g.sigmas.is_empty() {
                return Err(LabError::config("every noise grid needs at least one level"));
            }
            if g.sigmas.iter().any(|s| !s.is_finite() || *s < 0.0) {
                return Err(LabError::config("noise levels must be finite and non-negative"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessPoint {
    pub sigma: f64,
    /// Element-level test accuracy per non-aborted trial.
    pub accs: Vec<f64>,
    pub mean: f64,
    pub sem: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessSweep {
    pub kind: NoiseKind,
    pub points: Vec<RobustnessPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessResult {
    /// One sweep per configured grid, in grid order.
    pub sweeps: Vec<RobustnessSweep>,
    /// Clean-data accuracy per non-aborted trial, same metric as the points.
    pub clean_accs: Vec<f64>,
    pub train_records: Vec<RunRecord>,
}

/// Trains one model per trial on the clean dataset, then evaluates it on
/// test inputs rebuilt from corrupted object features at every grid level.
/// Noise draws are keyed by (kind, level index, trial), so a grid's numbers
/// do not depend on which other grids run alongside it.
pub fn robustness_sweep(
    cfg: &RobustnessConfig,
    universe: &ObjectUniverse,
    ds: &SortingDataset,
) -> Result<RobustnessResult> {
    cfg.validate()?;
    let task = TaskBinding::from_sorting(ds);

    struct TrialOut {
        record: RunRecord,
        clean: Option<f64>,
        /// per_grid[g][gi] mirrors cfg.grids[g].sigmas[gi].
        per_grid: Vec<Vec<Option<f64>>>,
    }

    let empty_grid: Vec<Vec<Option<f64>>> =
        cfg.grids.iter().map(|g| vec![None; g.sigmas.len()]).collect();

    let trials: Vec<TrialOut> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| -> Result<TrialOut> {
            let mut tc = cfg.train.clone();
            tc.seed = Rng::stream(cfg.train.seed, &[tag("init"), trial as u64]).next_u64();
            let (record, model) = train_full(&tc, &task, None, None)?;
            if record.aborted.is_some() {
                return Ok(TrialOut { record, clean: None, per_grid: empty_grid.clone() });
            }

            let eval_at = |inputs: Vec<f64>| -> Result<f64> {
                let split = SeqSplit { n: ds.test.n, inputs, targets: ds.test.targets.clone() };
                let (_, preds) =
                    eval_seq(&model, &split, ds.d, ds.seq_len, cfg.train.batch_size)?;
                elementwise_accuracy(&preds, &split.targets, None)
            };

            let clean = eval_at(ds.test.inputs.clone())?;
            let mut per_grid = Vec::with_capacity(cfg.grids.len());
            for grid in &cfg.grids {
                let mut row = Vec::with_capacity(grid.sigmas.len());
                for (gi, &sigma) in grid.sigmas.iter().enumerate() {
                    let mut rng = Rng::stream(
                        cfg.train.seed,
                        &[tag("noise"), grid.kind.stream_tag(), gi as u64, trial as u64],
                    );
                    let corrupted = match grid.kind {
                        NoiseKind::Additive => {
                            corrupt_additive(&universe.objects, sigma, &mut rng)?
                        }
                        NoiseKind::Linear => {
                            corrupt_linear(&universe.objects, ds.d, sigma, &mut rng)?
                        }
                    };
                    row.push(Some(eval_at(ds.test.inputs_from(&corrupted, ds.d))?));
                }
                per_grid.push(row);
            }
            Ok(TrialOut { record, clean: Some(clean), per_grid })
        })
        .collect::<Result<_>>()?;

    let mut sweeps = Vec::with_capacity(cfg.grids.len());
    for (g, grid) in cfg.grids.iter().enumerate() {
        let mut points = Vec::with_capacity(grid.sigmas.len());
        for (gi, &sigma) in grid.sigmas.iter().enumerate() {
            let accs: Vec<f64> = trials.iter().filter_map(|t| t.per_grid[g][gi]).collect();
            let (mean, sem) = mean_sem(&accs);
            points.push(RobustnessPoint { sigma, accs, mean, sem });
        }
        sweeps.push(RobustnessSweep { kind: grid.kind, points });
    }
    Ok(RobustnessResult {
        sweeps,
        clean_accs: trials.iter().filter_map(|t| t.clean).collect(),
        train_records: trials.into_iter().map(|t| t.record).collect(),
    })
}

/// Per-trial CSV: sigma, trial, accuracy (aborted trials are skipped).
pub fn write_robustness_trials_csv(sweep: &RobustnessSweep, path: impl AsRef<Path>) -> Result<()> {
    let mut text = String::from("sigma,trial,test_acc\n");
    for p in &sweep.points {
        for (t, acc) in p.accs.iter().enumerate() {
            text.push_str(&format!("{},{},{}\n", p.sigma, t, acc));
        }
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Aggregate CSV: sigma, mean, sem.
pub fn write_robustness_csv(sweep: &RobustnessSweep, path: impl AsRef<Path>) -> Result<()> {
    let mut text = String::from("sigma,mean,sem\n");
    for p in &sweep.points {
        text.push_str(&format!("{},{},{}\n", p.sigma, p.mean, p.sem));
    }
    std::fs::write(path, text)?;
    Ok(())
}
