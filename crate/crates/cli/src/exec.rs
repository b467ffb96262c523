//! Plan execution: runs the experiment and writes every artifact under the
//! run directory, printing one summary line per run.

use std::path::Path;

use abstractor_core::engine::{tag, Rng};
use abstractor_core::harness::{
    learning_curve, pretrain_bundle, pretrain_transfer, robustness_sweep, train_full,
    write_curve_aggregate_csv, write_curve_trials_csv, write_robustness_csv,
    write_robustness_trials_csv, write_run_jsonl, LearningCurve, NoiseKind, RobustnessResult,
    SortingDataCfg, TaskBinding,
};
use abstractor_core::relational::inner_product_probe;
use abstractor_core::tasks::save_set_dataset;

use crate::error::{CliError, Result};
use crate::plan::{LoadedTask, Plan, Resolution, TaskPlan};
use crate::report::{CellRow, TrainRow};

/// Creates the run directory, surfaces the effective config into it, then
/// executes the plan. The directory name is derived from the config hash, so
/// an existing directory with a different config is refused, never clobbered.
pub fn execute(res: &Resolution) -> Result<()> {
    let dir = res.run_dir();
    let cfg_path = dir.join("effective_config.toml");
    if cfg_path.exists() {
        let old = std::fs::read_to_string(&cfg_path)?;
        if old != res.effective_toml {
            return Err(CliError::validation(format!(
                "{} holds a different effective config; refusing to overwrite",
                dir.display()
            )));
        }
    }
    std::fs::create_dir_all(&dir)?;
    std::fs::write(&cfg_path, &res.effective_toml)?;

    match &res.plan {
        Plan::GenData { task, .. } => exec_gen_data(task, res.loaded.as_ref().unwrap(), &dir)?,
        Plan::Train { model, symbolic, train, .. } => {
            exec_train(model, *symbolic, train, res.loaded.as_ref().unwrap(), &dir)?
        }
        Plan::Curve { arms, .. } => exec_curve(arms, res.loaded.as_ref().unwrap(), &dir)?,
        Plan::PretrainTransfer { task, pretrain_n, transfers, .. } => {
            exec_transfer(task, *pretrain_n, transfers, res.loaded.as_ref().unwrap(), &dir)?
        }
        Plan::Robustness { sweeps, .. } => exec_robustness(sweeps, res.loaded.as_ref().unwrap(), &dir)?,
        Plan::Probe { seed, d, sigma, trials } => exec_probe(*seed, *d, *sigma, *trials, &dir)?,
    }

    println!("wrote {}", dir.display());
    Ok(())
}

// ── gen-data ───────────────────────────────────────────────────

fn exec_gen_data(task: &TaskPlan, loaded: &LoadedTask, dir: &Path) -> Result<()> {
    match (task, loaded) {
        (TaskPlan::Sorting { .. }, LoadedTask::Sorting { ds, .. }) => {
            let path = dir.join("sorting.abld");
            ds.save(&path)?;
            println!(
                "gen-data[sorting]: train={} val={} test={} seq_len={} -> {}",
                ds.train.n,
                ds.val.n,
                ds.test.n,
                ds.seq_len,
                path.display()
            );
        }
        (TaskPlan::Order { .. }, LoadedTask::Order { ds }) => {
            let path = dir.join("order_pairs.abld");
            ds.save(&path)?;
            println!(
                "gen-data[order]: objects={} d={} train={} val={} test={} -> {}",
                ds.n_objects,
                ds.d,
                ds.train.len(),
                ds.val.len(),
                ds.test.len(),
                path.display()
            );
        }
        (TaskPlan::Set { data_seed, .. }, LoadedTask::Set { triples, .. }) => {
            let path = dir.join("set_triples.abld");
            save_set_dataset(triples, *data_seed, &path)?;
            println!("gen-data[set]: triples={} -> {}", triples.len(), path.display());
        }
        _ => unreachable!("task plan and loaded task always match"),
    }
    Ok(())
}

// ── single training run ────────────────────────────────────────

fn exec_train(
    model: &str,
    symbolic: bool,
    train: &abstractor_core::harness::TrainConfig,
    loaded: &LoadedTask,
    dir: &Path,
) -> Result<()> {
    let binding = loaded.binding(symbolic)?;
    let ckpt = dir.join("checkpoint.abck");
    let (record, _) = train_full(train, &binding, None, Some(&ckpt))?;
    write_run_jsonl(&record, dir.join("run.jsonl"))?;
    let metric = match binding {
        TaskBinding::Seq(_) => "elementwise_acc",
        TaskBinding::Cls(_) => "binary_acc",
    };
    match &record.aborted {
        Some(reason) => {
            println!("train[{model}]: aborted ({reason}) after {} epochs", record.epochs.len());
            Err(CliError::Aborted(format!("training run diverged: {reason}")))
        }
        None => {
            println!(
                "train[{model}]: epochs={} best={} loss={:.4} {metric}={:.4} wall={:.1}s",
                record.epochs.len(),
                record.best_epoch,
                record.test.get("loss").copied().unwrap_or(f64::NAN),
                record.test.get(metric).copied().unwrap_or(f64::NAN),
                record.wall_secs
            );
            Ok(())
        }
    }
}

// ── learning curves ────────────────────────────────────────────

fn write_cells_jsonl(model: &str, curve: &LearningCurve, path: &Path) -> Result<()> {
    let mut text = String::new();
    for p in &curve.points {
        for (trial, rec) in p.records.iter().enumerate() {
            let aborted = rec.aborted.is_some();
            let row = CellRow {
                model: model.to_string(),
                size: p.size,
                trial,
                metric: curve.metric.clone(),
                test_acc: if aborted { None } else { rec.test.get(&curve.metric).copied() },
                aborted,
                record: rec.clone(),
            };
            text.push_str(
                &serde_json::to_string(&row)
                    .map_err(|e| CliError::Internal(format!("record encode: {e}")))?,
            );
            text.push('\n');
        }
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn print_curve(label: &str, curve: &LearningCurve) {
    for p in &curve.points {
        println!(
            "curve[{label}] size={}: mean={:.4} sem={:.4} trials={}/{}",
            p.size,
            p.mean,
            p.sem,
            p.accs.len(),
            p.records.len()
        );
    }
}

fn write_curve_outputs(name: &str, curve: &LearningCurve, dir: &Path) -> Result<()> {
    write_cells_jsonl(name, curve, &dir.join(format!("runs_{name}.jsonl")))?;
    write_curve_trials_csv(curve, dir.join(format!("curve_{name}_trials.csv")))?;
    write_curve_aggregate_csv(curve, dir.join(format!("curve_{name}.csv")))?;
    Ok(())
}

fn write_curve_aggregate(arms: &[(String, LearningCurve)], dir: &Path) -> Result<()> {
    let mut text = String::from("model,size,mean,sem\n");
    for (name, curve) in arms {
        for p in &curve.points {
            text.push_str(&format!("{},{},{},{}\n", name, p.size, p.mean, p.sem));
        }
    }
    std::fs::write(dir.join("aggregate.csv"), text)?;
    Ok(())
}

fn exec_curve(arms: &[crate::plan::CurveArm], loaded: &LoadedTask, dir: &Path) -> Result<()> {
    let mut results = Vec::new();
    for arm in arms {
        let binding = loaded.binding(arm.symbolic)?;
        let curve = learning_curve(&arm.curve, &binding)?;
        print_curve(&arm.name, &curve);
        write_curve_outputs(&arm.name, &curve, dir)?;
        results.push((arm.name.clone(), curve));
    }
    write_curve_aggregate(&results, dir)
}

// ── pre-training transfer ──────────────────────────────────────

fn exec_transfer(
    task: &TaskPlan,
    pretrain_n: usize,
    transfers: &[abstractor_core::harness::NamedTransfer],
    loaded: &LoadedTask,
    dir: &Path,
) -> Result<()> {
    let (universe, primary_ds) = match loaded {
        LoadedTask::Sorting { universe, ds } => (universe, ds),
        _ => unreachable!("transfer plans always carry a sorting task"),
    };
    let TaskPlan::Sorting { n_val, n_test, seq_len, data_seed, .. } = task else {
        unreachable!("transfer plans always carry a sorting task")
    };
    let data_cfg = SortingDataCfg {
        n_train: primary_ds.train.n,
        n_val: *n_val,
        n_test: *n_test,
        seq_len: *seq_len,
    };
    let pretrain_ds = pretrain_bundle(universe, &data_cfg, pretrain_n, *data_seed)?;
    let pretrain_binding = TaskBinding::from_sorting(&pretrain_ds);
    let primary_binding = TaskBinding::from_sorting(primary_ds);

    let mut results = Vec::new();
    for nt in transfers {
        let out = pretrain_transfer(&nt.transfer, &pretrain_binding, &primary_binding)?;
        let mut pre_text = String::new();
        for (trial, rec) in out.pretrain_records.iter().enumerate() {
            let row = TrainRow { model: nt.name.clone(), trial, record: rec.clone() };
            pre_text.push_str(
                &serde_json::to_string(&row)
                    .map_err(|e| CliError::Internal(format!("record encode: {e}")))?,
            );
            pre_text.push('\n');
        }
        std::fs::write(dir.join(format!("pretrain_{}.jsonl", nt.name)), pre_text)?;

        for (arm_tag, curve) in [("control", &out.control), ("pretrained", &out.pretrained)] {
            let label = format!("{}_{arm_tag}", nt.name);
            print_curve(&label, curve);
            write_curve_outputs(&label, curve, dir)?;
            results.push((label, curve.clone()));
        }
    }
    write_curve_aggregate(&results, dir)
}

// ── robustness sweeps ──────────────────────────────────────────

fn kind_name(k: NoiseKind) -> &'static str {
    match k {
        NoiseKind::Additive => "additive",
        NoiseKind::Linear => "linear",
    }
}

fn exec_robustness(
    sweeps: &[abstractor_core::harness::NamedRobustness],
    loaded: &LoadedTask,
    dir: &Path,
) -> Result<()> {
    let (universe, ds) = match loaded {
        LoadedTask::Sorting { universe, ds } => (universe, ds),
        _ => unreachable!("robustness plans always carry a sorting task"),
    };
    let mut aggregate = String::from("model,kind,sigma,mean,sem\n");
    for sweep in sweeps {
        let result: RobustnessResult = robustness_sweep(&sweep.config, universe, ds)?;

        let mut train_text = String::new();
        for (trial, rec) in result.train_records.iter().enumerate() {
            let row = TrainRow { model: sweep.name.clone(), trial, record: rec.clone() };
            train_text.push_str(
                &serde_json::to_string(&row)
                    .map_err(|e| CliError::Internal(format!("record encode: {e}")))?,
            );
            train_text.push('\n');
        }
        std::fs::write(dir.join(format!("trainruns_{}.jsonl", sweep.name)), train_text)?;

        let mut clean = String::from("trial,test_acc\n");
        for (trial, acc) in result.clean_accs.iter().enumerate() {
            clean.push_str(&format!("{trial},{acc}\n"));
        }
        std::fs::write(dir.join(format!("clean_{}.csv", sweep.name)), clean)?;
        let clean_mean = abstractor_core::harness::mean_sem(&result.clean_accs);
        println!(
            "robustness[{}] clean: mean={:.4} sem={:.4} trials={}",
            sweep.name,
            clean_mean.0,
            clean_mean.1,
            result.clean_accs.len()
        );

        // Two grids of the same kind get index-suffixed file names.
        let mut kind_counts = std::collections::BTreeMap::new();
        for s in &result.sweeps {
            *kind_counts.entry(kind_name(s.kind)).or_insert(0usize) += 1;
        }
        let mut seen = std::collections::BTreeMap::new();
        for s in &result.sweeps {
            let base = kind_name(s.kind);
            let i = seen.entry(base).or_insert(0usize);
            let suffix = if kind_counts[base] > 1 { format!("{base}{i}") } else { base.to_string() };
            *i += 1;
            write_robustness_trials_csv(
                s,
                dir.join(format!("robustness_{}_{suffix}_trials.csv", sweep.name)),
            )?;
            write_robustness_csv(s, dir.join(format!("robustness_{}_{suffix}.csv", sweep.name)))?;
            for p in &s.points {
                println!(
                    "robustness[{}] {base} sigma={}: mean={:.4} sem={:.4}",
                    sweep.name, p.sigma, p.mean, p.sem
                );
                aggregate.push_str(&format!(
                    "{},{base},{},{},{}\n",
                    sweep.name, p.sigma, p.mean, p.sem
                ));
            }
        }
    }
    std::fs::write(dir.join("aggregate.csv"), aggregate)?;
    Ok(())
}

// ── probe ──────────────────────────────────────────────────────

fn exec_probe(seed: u64, d: usize, sigma: f64, trials: usize, dir: &Path) -> Result<()> {
    let mut rng = Rng::stream(seed, &[tag("probe")]);
    let err = inner_product_probe(d, sigma, trials, &mut rng)?;
    std::fs::write(
        dir.join("probe.csv"),
        format!("d,sigma,trials,error\n{d},{sigma},{trials},{err}\n"),
    )?;
    println!("probe: d={d} sigma={sigma} trials={trials} error={err:.6}");
    Ok(())
}
