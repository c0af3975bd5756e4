use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::config::{Experiment, ExperimentConfig, TaskConfig};
use super::seed_stream;
use crate::error::{Error, Result};
use crate::linear::{recovery_experiment_parallel, RecoveryTrialConfig};
use crate::net::{cycle_ablation, make_blobs, run_arm, train_dense, AblationResult, Blobs, Mlp};
use crate::pruning::TvPgdRun;
use crate::schedules::Schedule;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub experiment: String,
    pub status: RunStatus,
    #[serde(default)]
    pub error: Option<String>,
    pub duration_secs: f64,
    /// Result files, relative to the output directory.
    pub outputs: Vec<String>,
    pub summary: BTreeMap<String, Value>,
    pub config: ExperimentConfig,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

#[derive(Default)]
struct Outputs {
    files: Vec<String>,
    summary: BTreeMap<String, Value>,
}

impl Outputs {
    fn file(&mut self, name: &str) {
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
    }
}

fn csv_writer(path: &Path, append: bool) -> Result<csv::Writer<fs::File>> {
    let file = OpenOptions::new()
        .create(true)
        .write(true)
        .append(append)
        .truncate(!append)
        .open(path)?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file))
}

/// Runs `config`, writing result CSVs and a manifest into its output
/// directory. Nothing is written when validation fails; on a runtime
/// failure the files produced so far are kept and the manifest is marked
/// failed.
pub fn run(config: &ExperimentConfig) -> Result<RunManifest> {
    config.validate()?;
    fs::create_dir_all(&config.out_dir)?;
    let start = Instant::now();
    let mut out = Outputs::default();
    let result = dispatch(config, &mut out);
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        experiment: config.experiment.kind().to_string(),
        status: if result.is_ok() { RunStatus::Ok } else { RunStatus::Failed },
        error: result.as_ref().err().map(|e| e.to_string()),
        duration_secs: start.elapsed().as_secs_f64(),
        outputs: out.files,
        summary: out.summary,
        config: config.clone(),
    };
    write_manifest(&config.out_dir, &manifest)?;
    result.map(|_| manifest)
}

/// Re-runs the configuration recorded in a manifest into `out_dir`.
pub fn replay(manifest: &Path, out_dir: &Path) -> Result<RunManifest> {
    let mut config = RunManifest::load(manifest)?.config;
    config.out_dir = out_dir.to_path_buf();
    run(&config)
}

fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<()> {
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    serde_json::to_writer_pretty(&mut tmp, manifest)?;
    tmp.write_all(b"\n")?;
    tmp.as_file().sync_all()?;
    tmp.persist(dir.join(MANIFEST_FILE)).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn dispatch(config: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let dir = &config.out_dir;
    match &config.experiment {
        Experiment::ScheduleDump { sparsity, learning_rate } => {
            schedule_dump(dir, sparsity, learning_rate.as_ref(), out)
        }
        Experiment::LinearSim { cells } => linear_sim(config, cells, out),
        Experiment::PruneTrain {
            task,
            arm,
            settings,
            tvpgd,
        } => {
            let (blobs, dense) = prepare_task(task, config.seed, out)?;
            let mut cfg = match tvpgd {
                Some(c) => c.clone(),
                None => settings.config(*arm),
            };
            cfg.seed = pruning_seed(config.seed);
            let result = run_arm(&dense, &blobs, &cfg, task.batch_size)?;
            let path = dir.join("trace.csv");
            write_trace(&path, &result.run)?;
            out.file("trace.csv");
            out.summary.insert("test_accuracy".into(), json!(result.test_accuracy));
            out.summary.insert("test_loss".into(), json!(result.test_loss));
            out.summary
                .insert("final_sparsity".into(), json!(result.model.params().sparsity()));
            out.summary
                .insert("recovery_events".into(), json!(result.run.history.recovery_events().len()));
            Ok(())
        }
        Experiment::Ablate {
            task,
            arms,
            cycles,
            settings,
        } => {
            let (blobs, dense) = prepare_task(task, config.seed, out)?;
            let mut settings = settings.clone();
            settings.seed = pruning_seed(config.seed);
            let results: Vec<Result<AblationResult>> = with_pool(config.jobs, || {
                arms.par_iter()
                    .map(|arm| cycle_ablation(&dense, &blobs, *arm, *cycles, &settings, task.batch_size))
                    .collect()
            })?;
            for (arm, result) in arms.iter().zip(results) {
                let result = result?;
                let name = format!("ablation_{}.csv", arm_name(*arm));
                let mut w = csv_writer(&dir.join(&name), false)?;
                w.write_record(["cycle", "accuracy", "mask_jaccard", "regrown_fraction"])?;
                for c in &result.cycles {
                    w.write_record([
                        c.cycle.to_string(),
                        c.accuracy.to_string(),
                        c.mask_jaccard.to_string(),
                        c.regrown_fraction.to_string(),
                    ])?;
                }
                w.flush()?;
                out.file(&name);
                let last = result.cycles.last().expect("at least two cycles");
                out.summary.insert(format!("{}_final_accuracy", arm_name(*arm)), json!(last.accuracy));
                out.summary
                    .insert(format!("{}_final_mask_jaccard", arm_name(*arm)), json!(last.mask_jaccard));
            }
            Ok(())
        }
    }
}

fn arm_name(arm: crate::net::AblationArm) -> &'static str {
    use crate::net::AblationArm::*;
    match arm {
        Cubic => "cubic",
        Linear => "linear",
        Step => "step",
        FinetuneOnly => "finetune_only",
    }
}

fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::invalid("jobs", e.to_string()))?;
    Ok(pool.install(f))
}

fn schedule_dump(dir: &Path, sparsity: &Schedule, lr: Option<&Schedule>, out: &mut Outputs) -> Result<()> {
    let mut w = csv_writer(&dir.join("schedule.csv"), false)?;
    w.write_record(["t", "sparsity", "lr"])?;
    for t in 0..=sparsity.total_iters() {
        let s = sparsity.eval_sparsity(t)?;
        let l = match lr {
            Some(l) => l.eval_learning_rate(t)?.to_string(),
            None => String::new(),
        };
        w.write_record([t.to_string(), s.to_string(), l])?;
    }
    w.flush()?;
    out.file("schedule.csv");
    out.summary.insert("rows".into(), json!(sparsity.total_iters() + 1));
    Ok(())
}

/// Seed of linear-simulation cell `index` under `master`.
pub fn cell_seed(master: u64, index: usize) -> u64 {
    seed_stream(master, 0x1000 + index as u64)
}

fn linear_sim(config: &ExperimentConfig, cells: &[RecoveryTrialConfig], out: &mut Outputs) -> Result<()> {
    let path = config.out_dir.join("linear_sim.csv");
    let fresh = fs::metadata(&path).map(|m| m.len() == 0).unwrap_or(true);
    let mut w = csv_writer(&path, true)?;
    if fresh {
        w.write_record(["d", "n", "alpha_mode", "trials", "p_oneshot", "p_pgd", "ci_oneshot", "ci_pgd"])?;
    }
    out.file("linear_sim.csv");
    let mut rows = Vec::with_capacity(cells.len());
    for (i, cell) in cells.iter().enumerate() {
        let mut cell = cell.clone();
        cell.seed = cell_seed(config.seed, i);
        let r = recovery_experiment_parallel(&cell, config.jobs)?;
        w.write_record([
            cell.d.to_string(),
            cell.n.to_string(),
            cell.alpha_mode.to_string(),
            cell.trials.to_string(),
            r.p_one_shot.to_string(),
            r.p_pgd.to_string(),
            r.ci_one_shot.half_width().to_string(),
            r.ci_pgd.half_width().to_string(),
        ])?;
        w.flush()?;
        rows.push(json!({
            "d": cell.d,
            "n": cell.n,
            "alpha_mode": cell.alpha_mode,
            "p_oneshot": r.p_one_shot,
            "p_pgd": r.p_pgd,
            "p_oneshot_value": r.p_one_shot_value,
            "p_pgd_value": r.p_pgd_value,
            "pgd_diverged": r.counts.pgd_diverged,
        }));
    }
    out.summary.insert("cells".into(), Value::Array(rows));
    Ok(())
}

/// Generates the blobs data and pretrains the dense starting model.
///
/// Data, initialisation and pretraining shuffles draw from streams 0, 1 and
/// 2 of the master seed; pruning runs use stream 3.
pub fn pretrained_task(task: &TaskConfig, master: u64) -> Result<(Blobs, Mlp)> {
    task.validate()?;
    let b = &task.blobs;
    let blobs = make_blobs(b.num_classes, b.dim, b.samples_per_class, b.spread, seed_stream(master, 0))?;
    let init = Mlp::new(&task.dims, seed_stream(master, 1))?;
    let dense = train_dense(
        &init,
        &blobs.train,
        task.pretrain_iters,
        task.pretrain_lr,
        task.batch_size,
        seed_stream(master, 2),
    )?;
    Ok((blobs, dense))
}

/// Seed used by pruning runs under `master`.
pub fn pruning_seed(master: u64) -> u64 {
    seed_stream(master, 3)
}

fn prepare_task(task: &TaskConfig, master: u64, out: &mut Outputs) -> Result<(Blobs, Mlp)> {
    let (blobs, dense) = pretrained_task(task, master)?;
    let (_, acc) = dense.evaluate(&blobs.test)?;
    out.summary.insert("dense_test_accuracy".into(), json!(acc));
    Ok((blobs, dense))
}

fn write_trace(path: &Path, run: &TvPgdRun) -> Result<()> {
    let mut w = csv_writer(path, false)?;
    w.write_record(["t", "loss", "sparsity", "lr", "regrown_fraction"])?;
    for m in &run.trace {
        w.write_record([
            m.t.to_string(),
            m.loss.to_string(),
            m.sparsity.to_string(),
            m.lr.to_string(),
            m.regrown_fraction.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
