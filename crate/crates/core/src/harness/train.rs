//! Training loop: teacher-forced seq2seq or classifier training with Adam,
//! seeded epoch shuffling, restore-best-validation checkpointing, and test
//! metrics computed from the restored parameters.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::arch::{assemble, save_checkpoint, shift_right, Model, ModelSpec};
use crate::engine::{tag, Rng, Tape, Tensor};
use crate::error::{LabError, Result};
use crate::tasks::order::OrderPairDataset;
use crate::tasks::set::{symbolic_relations, SetTriple, D_CARD};
use crate::tasks::sorting::SortingDataset;

use super::adam::{Adam, AdamConfig};
use super::metrics::{argmax_rows, binary_accuracy, elementwise_accuracy, full_sequence_accuracy};

// ── task bindings ──────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SeqSplit {
    pub n: usize,
    /// n x seq_len x d features.
    pub inputs: Vec<f64>,
    /// n x seq_len token targets.
    pub targets: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeqTask {
    pub d: usize,
    pub seq_len: usize,
    pub vocab: usize,
    pub train: SeqSplit,
    pub val: SeqSplit,
    pub test: SeqSplit,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClsSplit {
    pub n: usize,
    /// n x m x d features.
    pub inputs: Vec<f64>,
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClsTask {
    pub d: usize,
    /// Objects per input.
    pub m: usize,
    pub classes: usize,
    pub train: ClsSplit,
    pub val: ClsSplit,
    pub test: ClsSplit,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TaskBinding {
    Seq(SeqTask),
    Cls(ClsTask),
}

impl TaskBinding {
    pub fn from_sorting(ds: &SortingDataset) -> TaskBinding {
        let split = |s: &crate::tasks::sorting::SortingSplit| SeqSplit {
            n: s.n,
            inputs: s.inputs.clone(),
            targets: s.targets.clone(),
        };
        TaskBinding::Seq(SeqTask {
            d: ds.d,
            seq_len: ds.seq_len,
            vocab: ds.seq_len,
            train: split(&ds.train),
            val: split(&ds.val),
            test: split(&ds.test),
        })
    }

    pub fn from_order_pairs(ds: &OrderPairDataset) -> TaskBinding {
        let split = |pairs: &[crate::tasks::order::OrderPair]| ClsSplit {
            n: pairs.len(),
            inputs: ds.pair_inputs(pairs),
            labels: pairs.iter().map(|&(_, _, y)| y).collect(),
        };
        TaskBinding::Cls(ClsTask {
            d: ds.d,
            m: 2,
            classes: 2,
            train: split(&ds.train),
            val: split(&ds.val),
            test: split(&ds.test),
        })
    }

    /// Card-level task: inputs are the 3 x 12 one-hot card embeddings.
    pub fn from_set_triples(
        triples: &[SetTriple],
        n_train: usize,
        n_val: usize,
        n_test: usize,
    ) -> Result<TaskBinding> {
        if n_train + n_val + n_test > triples.len() {
            return Err(LabError::capacity(format!(
                "requested {} triples but only {} were generated",
                n_train + n_val + n_test,
                triples.len()
            )));
        }
        let split = |chunk: &[SetTriple]| ClsSplit {
            n: chunk.len(),
            inputs: chunk.iter().flat_map(|t| t.embedding).collect(),
            labels: chunk.iter().map(|t| usize::from(t.label)).collect(),
        };
        Ok(TaskBinding::Cls(ClsTask {
            d: D_CARD,
            m: 3,
            classes: 2,
            train: split(&triples[..n_train]),
            val: split(&triples[n_train..n_train + n_val]),
            test: split(&triples[n_train + n_val..n_train + n_val + n_test]),
        }))
    }

    /// Symbolic baseline: inputs are the 12 pairwise-sameness bits, one
    /// "object" of dimension 12 per triple.
    pub fn from_set_symbolic(
        triples: &[SetTriple],
        n_train: usize,
        n_val: usize,
        n_test: usize,
    ) -> Result<TaskBinding> {
        if n_train + n_val + n_test > triples.len() {
            return Err(LabError::capacity(format!(
                "requested {} triples but only {} were generated",
                n_train + n_val + n_test,
                triples.len()
            )));
        }
        let split = |chunk: &[SetTriple]| ClsSplit {
            n: chunk.len(),
            inputs: chunk.iter().flat_map(|t| symbolic_relations(t)).collect(),
            labels: chunk.iter().map(|t| usize::from(t.label)).collect(),
        };
        Ok(TaskBinding::Cls(ClsTask {
            d: 12,
            m: 1,
            classes: 2,
            train: split(&triples[..n_train]),
            val: split(&triples[n_train..n_train + n_val]),
            test: split(&triples[n_train + n_val..n_train + n_val + n_test]),
        }))
    }

    pub fn train_len(&self) -> usize {
        match self {
            TaskBinding::Seq(t) => t.train.n,
            TaskBinding::Cls(t) => t.train.n,
        }
    }

    /// A copy whose training split is restricted to the given sample rows.
    pub fn with_train_subset(&self, rows: &[usize]) -> TaskBinding {
        match self {
            TaskBinding::Seq(t) => {
                let w = t.seq_len;
                let mut sub = SeqSplit { n: rows.len(), ..Default::default() };
                for &r in rows {
                    sub.inputs.extend_from_slice(&t.train.inputs[r * w * t.d..(r + 1) * w * t.d]);
                    sub.targets.extend_from_slice(&t.train.targets[r * w..(r + 1) * w]);
                }
                TaskBinding::Seq(SeqTask { train: sub, ..t.clone() })
            }
            TaskBinding::Cls(t) => {
                let w = t.m * t.d;
                let mut sub = ClsSplit { n: rows.len(), ..Default::default() };
                for &r in rows {
                    sub.inputs.extend_from_slice(&t.train.inputs[r * w..(r + 1) * w]);
                    sub.labels.push(t.train.labels[r]);
                }
                TaskBinding::Cls(ClsTask { train: sub, ..t.clone() })
            }
        }
    }
}

// ── configuration and records ──────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub model: ModelSpec,
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs to continue past the best validation loss before stopping;
    /// None trains all epochs and restores the best (pure restore-best).
    #[serde(default)]
    pub patience: Option<usize>,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.batch_size == 0 {
            return Err(LabError::config("batch_size must be at least 1"));
        }
        if self.max_epochs == 0 {
            return Err(LabError::config("max_epochs must be at least 1"));
        }
        if let Some(p) = self.patience {
            if p > self.max_epochs {
                return Err(LabError::config("patience must not exceed max_epochs"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub spec_hash: String,
    pub seed: u64,
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters the test metrics come from (1-based).
    pub best_epoch: usize,
    pub test: BTreeMap<String, f64>,
    pub wall_secs: f64,
    /// Set when the run diverged; such records carry no test metrics.
    pub aborted: Option<String>,
    pub checkpoint: Option<String>,
}

/// Equality ignores `wall_secs`: reruns of the same config must produce
/// identical records, and wall time is the one field that cannot.
impl PartialEq for RunRecord {
    fn eq(&self, other: &Self) -> bool {
        self.spec_hash == other.spec_hash
            && self.seed == other.seed
            && self.epochs == other.epochs
            && self.best_epoch == other.best_epoch
            && self.test == other.test
            && self.aborted == other.aborted
            && self.checkpoint == other.checkpoint
    }
}

// ── evaluation helpers ─────────────────────────────────────────

fn to_f32_tensor(rows: &[f64], shape: Vec<usize>) -> Result<Tensor<f32>> {
    Tensor::new(shape, rows.iter().map(|&v| v as f32).collect())
}

/// Teacher-forced loss and predictions over a sequence split, batched.
pub fn eval_seq(
    model: &Model<f32>,
    split: &SeqSplit,
    d: usize,
    seq_len: usize,
    batch_size: usize,
) -> Result<(f64, Vec<usize>)> {
    let start = model.spec.start_token().expect("seq2seq");
    let vocab_total = model.spec.vocab_total().expect("seq2seq");
    let mut loss_sum = 0.0;
    let mut preds = Vec::with_capacity(split.n * seq_len);
    let mut row = 0usize;
    while row < split.n {
        let b = batch_size.min(split.n - row);
        let x = to_f32_tensor(
            &split.inputs[row * seq_len * d..(row + b) * seq_len * d],
            vec![b, seq_len, d],
        )?;
        let targets = &split.targets[row * seq_len..(row + b) * seq_len];
        let dec_ids = shift_right(targets, b, seq_len, start);
        let mut tape = Tape::new();
        let logits = model.seq2seq_logits(&mut tape, &x, &dec_ids)?;
        let loss = model.loss(&mut tape, logits, targets)?;
        loss_sum += tape.value(loss)[0] as f64 * b as f64;
        let vals: Vec<f64> = tape.value(logits).iter().map(|&v| v as f64).collect();
        preds.extend(argmax_rows(&vals, vocab_total));
        row += b;
    }
    Ok((loss_sum / split.n as f64, preds))
}

/// Loss and argmax predictions over a classification split, batched.
pub fn eval_cls(
    model: &Model<f32>,
    split: &ClsSplit,
    d: usize,
    m: usize,
    classes: usize,
    batch_size: usize,
) -> Result<(f64, Vec<usize>)> {
    let mut loss_sum = 0.0;
    let mut preds = Vec::with_capacity(split.n);
    let mut row = 0usize;
    while row < split.n {
        let b = batch_size.min(split.n - row);
        let x = to_f32_tensor(&split.inputs[row * m * d..(row + b) * m * d], vec![b, m, d])?;
        let labels = &split.labels[row..row + b];
        let mut tape = Tape::new();
        let logits = model.classify_logits(&mut tape, &x)?;
        let loss = tape.cross_entropy(logits, labels, None)?;
        loss_sum += tape.value(loss)[0] as f64 * b as f64;
        let vals: Vec<f64> = tape.value(logits).iter().map(|&v| v as f64).collect();
        preds.extend(argmax_rows(&vals, classes));
        row += b;
    }
    Ok((loss_sum / split.n as f64, preds))
}

/// Checks that a model spec fits a task's dimensions and head kind.
pub fn conformance(spec: &ModelSpec, task: &TaskBinding) -> Result<()> {
    match task {
        TaskBinding::Seq(t) => {
            let vocab = match spec.head {
                crate::arch::HeadKind::Seq2seq { vocab } => vocab,
                _ => return Err(LabError::config("sequence task needs a seq2seq head")),
            };
            if spec.d_in != t.d || spec.max_input_len != t.seq_len || vocab != t.vocab {
                return Err(LabError::config(format!(
                    "model (d_in {}, len {}, vocab {}) does not fit task (d {}, len {}, vocab {})",
                    spec.d_in, spec.max_input_len, vocab, t.d, t.seq_len, t.vocab
                )));
            }
            if spec.max_target_len < t.seq_len {
                return Err(LabError::config("max_target_len shorter than task sequences"));
            }
        }
        TaskBinding::Cls(t) => {
            let classes = match spec.head {
                crate::arch::HeadKind::Classifier { classes } => classes,
                _ => return Err(LabError::config("classification task needs a classifier head")),
            };
            if spec.d_in != t.d || spec.max_input_len != t.m || classes != t.classes {
                return Err(LabError::config(format!(
                    "model (d_in {}, m {}, classes {}) does not fit task (d {}, m {}, classes {})",
                    spec.d_in, spec.max_input_len, classes, t.d, t.m, t.classes
                )));
            }
        }
    }
    Ok(())
}

// ── the training loop ──────────────────────────────────────────

/// Trains a fresh model; see [`train_with_init`] for warm starts.
pub fn train(cfg: &TrainConfig, task: &TaskBinding) -> Result<RunRecord> {
    train_with_init(cfg, task, None, None)
}

/// Trains with an optional parameter snapshot as initialization and an
/// optional path to save the best checkpoint to. Divergence (non-finite
/// loss or gradient) ends the run with the record flagged, not an error.
pub fn train_with_init(
    cfg: &TrainConfig,
    task: &TaskBinding,
    init: Option<&[Vec<f32>]>,
    checkpoint_path: Option<&Path>,
) -> Result<RunRecord> {
    train_full(cfg, task, init, checkpoint_path).map(|(record, _)| record)
}

/// [`train_with_init`] variant that also hands back the trained model with
/// the best-validation weights restored (or last weights if aborted).
pub fn train_full(
    cfg: &TrainConfig,
    task: &TaskBinding,
    init: Option<&[Vec<f32>]>,
    checkpoint_path: Option<&Path>,
) -> Result<(RunRecord, Model<f32>)> {
    cfg.validate()?;
    conformance(&cfg.model, task)?;
    let started = Instant::now();

    let mut model: Model<f32> = assemble(&cfg.model, cfg.seed)?;
    if let Some(snapshot) = init {
        model.store.restore(snapshot);
    }
    let mut opt = Adam::new(&model.store, cfg.adam);

    let n_train = task.train_len();
    if n_train == 0 {
        return Err(LabError::config("training split is empty"));
    }

    let mut record = RunRecord {
        spec_hash: cfg.model.hash(),
        seed: cfg.seed,
        epochs: Vec::new(),
        best_epoch: 0,
        test: BTreeMap::new(),
        wall_secs: 0.0,
        aborted: None,
        checkpoint: None,
    };

    let mut best_val = f64::INFINITY;
    let mut best_snapshot: Option<Vec<Vec<f32>>> = None;
    let patience = cfg.patience.unwrap_or(cfg.max_epochs);

    'training: for epoch in 1..=cfg.max_epochs {
        let mut order: Vec<usize> = (0..n_train).collect();
        Rng::stream(cfg.seed, &[tag("shuffle"), epoch as u64]).shuffle(&mut order);

        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let (batch_loss, poisoned) = match task {
                TaskBinding::Seq(t) => {
                    let b = chunk.len();
                    let w = t.seq_len;
                    let mut inputs = Vec::with_capacity(b * w * t.d);
                    let mut targets = Vec::with_capacity(b * w);
                    for &r in chunk {
                        inputs.extend_from_slice(&t.train.inputs[r * w * t.d..(r + 1) * w * t.d]);
                        targets.extend_from_slice(&t.train.targets[r * w..(r + 1) * w]);
                    }
                    let x = to_f32_tensor(&inputs, vec![b, w, t.d])?;
                    let start = model.spec.start_token().expect("seq2seq");
                    let dec_ids = shift_right(&targets, b, w, start);
                    model.store.zero_grads();
                    let mut tape = Tape::new();
                    let logits = model.seq2seq_logits(&mut tape, &x, &dec_ids)?;
                    let loss = model.loss(&mut tape, logits, &targets)?;
                    let lv = tape.value(loss)[0] as f64;
                    tape.backward(loss)?;
                    tape.accumulate_param_grads(&mut model.store);
                    (lv, tape.poisoned())
                }
                TaskBinding::Cls(t) => {
                    let b = chunk.len();
                    let w = t.m * t.d;
                    let mut inputs = Vec::with_capacity(b * w);
                    let mut labels = Vec::with_capacity(b);
                    for &r in chunk {
                        inputs.extend_from_slice(&t.train.inputs[r * w..(r + 1) * w]);
                        labels.push(t.train.labels[r]);
                    }
                    let x = to_f32_tensor(&inputs, vec![b, t.m, t.d])?;
                    model.store.zero_grads();
                    let mut tape = Tape::new();
                    let logits = model.classify_logits(&mut tape, &x)?;
                    let loss = tape.cross_entropy(logits, &labels, None)?;
                    let lv = tape.value(loss)[0] as f64;
                    tape.backward(loss)?;
                    tape.accumulate_param_grads(&mut model.store);
                    (lv, tape.poisoned())
                }
            };
            if !batch_loss.is_finite() || poisoned.is_some() {
                record.aborted = Some(format!("non-finite training loss at epoch {epoch}"));
                break 'training;
            }
            if let Err(e) = opt.step(&mut model.store) {
                match e {
                    LabError::Aborted(msg) => {
                        record.aborted = Some(format!("{msg} at epoch {epoch}"));
                        break 'training;
                    }
                    other => return Err(other),
                }
            }
            loss_sum += batch_loss * chunk.len() as f64;
            seen += chunk.len();
        }
        let train_loss = loss_sum / seen.max(1) as f64;

        let (val_loss, val_acc) = match task {
            TaskBinding::Seq(t) => {
                let (loss, preds) = eval_seq(&model, &t.val, t.d, t.seq_len, cfg.batch_size)?;
                let acc = elementwise_accuracy(&preds, &t.val.targets, model.spec.pad_token())?;
                (loss, acc)
            }
            TaskBinding::Cls(t) => {
                let (loss, preds) = eval_cls(&model, &t.val, t.d, t.m, t.classes, cfg.batch_size)?;
                (loss, binary_accuracy(&preds, &t.val.labels)?)
            }
        };
        record.epochs.push(EpochRecord { epoch, train_loss, val_loss, val_acc });
        if !val_loss.is_finite() {
            record.aborted = Some(format!("non-finite validation loss at epoch {epoch}"));
            break;
        }

        if val_loss < best_val {
            best_val = val_loss;
            record.best_epoch = epoch;
            best_snapshot = Some(model.store.snapshot());
        } else if epoch - record.best_epoch > patience {
            break;
        }
    }

    if record.aborted.is_some() {
        record.wall_secs = started.elapsed().as_secs_f64();
        return Ok((record, model));
    }

    let snapshot = best_snapshot
        .ok_or_else(|| LabError::contract("no epoch produced a finite validation loss"))?;
    model.store.restore(&snapshot);

    match task {
        TaskBinding::Seq(t) => {
            let (loss, preds) = eval_seq(&model, &t.test, t.d, t.seq_len, cfg.batch_size)?;
            let pad = model.spec.pad_token();
            record.test.insert("loss".into(), loss);
            record
                .test
                .insert("elementwise_acc".into(), elementwise_accuracy(&preds, &t.test.targets, pad)?);
            record.test.insert(
                "full_sequence_acc".into(),
                full_sequence_accuracy(&preds, &t.test.targets, t.seq_len, pad)?,
            );
            let mut greedy = Vec::with_capacity(t.test.n * t.seq_len);
            let mut row = 0usize;
            while row < t.test.n {
                let b = cfg.batch_size.min(t.test.n - row);
                let x = to_f32_tensor(
                    &t.test.inputs[row * t.seq_len * t.d..(row + b) * t.seq_len * t.d],
                    vec![b, t.seq_len, t.d],
                )?;
                greedy.extend(model.greedy_decode(&x, t.seq_len)?);
                row += b;
            }
            record.test.insert(
                "greedy_elementwise_acc".into(),
                elementwise_accuracy(&greedy, &t.test.targets, pad)?,
            );
            record.test.insert(
                "greedy_full_sequence_acc".into(),
                full_sequence_accuracy(&greedy, &t.test.targets, t.seq_len, pad)?,
            );
        }
        TaskBinding::Cls(t) => {
            let (loss, preds) = eval_cls(&model, &t.test, t.d, t.m, t.classes, cfg.batch_size)?;
            record.test.insert("loss".into(), loss);
            record.test.insert("binary_acc".into(), binary_accuracy(&preds, &t.test.labels)?);
        }
    }

    if let Some(path) = checkpoint_path {
        save_checkpoint(&model, path, record.best_epoch, &record.test)?;
        record.checkpoint = Some(path.display().to_string());
    }
    record.wall_secs = started.elapsed().as_secs_f64();
    Ok((record, model))
}

/// Writes a run record as JSONL: one line per epoch, then a summary line.
pub fn write_run_jsonl(record: &RunRecord, path: impl AsRef<Path>) -> Result<()> {
    let mut rows: Vec<serde_json::Value> = record
        .epochs
        .iter()
        .map(|e| serde_json::json!({"kind": "epoch", "epoch": e.epoch, "train_loss": e.train_loss, "val_loss": e.val_loss, "val_acc": e.val_acc}))
        .collect();
    rows.push(serde_json::json!({
        "kind": "summary",
        "spec_hash": record.spec_hash,
        "seed": record.seed,
        "best_epoch": record.best_epoch,
        "test": record.test,
        "wall_secs": record.wall_secs,
        "aborted": record.aborted,
        "checkpoint": record.checkpoint,
    }));
    crate::tasks::io::export_jsonl(path, &rows)
}
