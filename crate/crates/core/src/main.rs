use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use prunekit::harness::{self, Experiment, ExperimentConfig, TaskConfig};
use prunekit::linear::{AlphaMode, RecoveryTrialConfig};
use prunekit::net::{AblationArm, ArmSettings, PruneArm};
use prunekit::{Error, Result};

#[derive(Parser)]
#[command(name = "prunekit", version, about = "Pruning experiments with time-varying projected gradient descent")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON experiment file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a schedule as `t,sparsity,lr` CSV.
    ScheduleDump {
        #[command(flatten)]
        common: Common,
    },
    /// One-shot pruning vs PGD on random sparse regression problems.
    LinearSim {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 5)]
        d: usize,
        #[arg(long, default_value_t = 4)]
        n: usize,
        #[arg(long, value_enum, default_value_t = Mode::Random)]
        alpha_mode: Mode,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        lambda: Option<f64>,
        /// Absolute PGD step; defaults to `eta_factor / σ_max(X)²`.
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long)]
        eta_factor: Option<f64>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        design_scale: Option<f64>,
        #[arg(long)]
        zero_index: Option<usize>,
    },
    /// Pretrain an MLP on blobs and prune it with one arm.
    PruneTrain {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        arm: Option<Arm>,
        #[arg(long, default_value_t = 5)]
        cycles: usize,
        #[arg(long)]
        target: Option<f64>,
        #[arg(long)]
        iters: Option<usize>,
    },
    /// Compare per-cycle schedules of cyclical pruning.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long = "arm", value_enum)]
        arms: Vec<AblateArm>,
        #[arg(long)]
        cycles: Option<usize>,
        #[arg(long)]
        target: Option<f64>,
        #[arg(long)]
        iters: Option<usize>,
    },
    /// Re-run the configuration stored in a manifest.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Random,
    Adversarial,
}

#[derive(Clone, Copy, ValueEnum)]
enum Arm {
    OneShot,
    Gradual,
    Cyclical,
}

#[derive(Clone, Copy, ValueEnum)]
enum AblateArm {
    Cubic,
    Linear,
    Step,
    FinetuneOnly,
}

impl From<AblateArm> for AblationArm {
    fn from(a: AblateArm) -> Self {
        match a {
            AblateArm::Cubic => AblationArm::Cubic,
            AblateArm::Linear => AblationArm::Linear,
            AblateArm::Step => AblationArm::Step,
            AblateArm::FinetuneOnly => AblationArm::FinetuneOnly,
        }
    }
}

fn load(common: &Common) -> Result<Option<ExperimentConfig>> {
    common
        .config
        .as_ref()
        .map(|p| ExperimentConfig::from_json(&fs::read_to_string(p)?))
        .transpose()
}

fn apply_common(mut cfg: ExperimentConfig, common: &Common) -> ExperimentConfig {
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(d) = &common.out_dir {
        cfg.out_dir = d.clone();
    }
    if let Some(j) = common.jobs {
        cfg.jobs = j;
    }
    cfg
}

fn wrong_kind(expected: &str) -> Error {
    Error::Validation {
        what: "config",
        reason: format!("file does not describe a {expected} experiment"),
    }
}

fn build(command: Command) -> Result<ExperimentConfig> {
    match command {
        Command::ScheduleDump { common } => {
            let cfg = load(&common)?.ok_or(Error::Validation {
                what: "config",
                reason: "schedule-dump needs --config".into(),
            })?;
            if !matches!(cfg.experiment, Experiment::ScheduleDump { .. }) {
                return Err(wrong_kind("schedule_dump"));
            }
            Ok(apply_common(cfg, &common))
        }
        Command::LinearSim {
            common,
            d,
            n,
            alpha_mode,
            trials,
            lambda,
            eta,
            eta_factor,
            steps,
            tol,
            design_scale,
            zero_index,
        } => {
            let mut cfg = match load(&common)? {
                Some(c) => c,
                None => {
                    let mode = match alpha_mode {
                        Mode::Random => AlphaMode::Random,
                        Mode::Adversarial => AlphaMode::Adversarial,
                    };
                    ExperimentConfig::new(Experiment::LinearSim {
                        cells: vec![RecoveryTrialConfig::new(d, n, mode)],
                    })
                }
            };
            let Experiment::LinearSim { cells } = &mut cfg.experiment else {
                return Err(wrong_kind("linear_sim"));
            };
            for cell in cells {
                if let Some(v) = trials {
                    cell.trials = v;
                }
                if let Some(v) = lambda {
                    cell.lambda = v;
                }
                if eta.is_some() {
                    cell.eta = eta;
                }
                if let Some(v) = eta_factor {
                    cell.eta_factor = v;
                }
                if let Some(v) = steps {
                    cell.pgd_steps = v;
                }
                if let Some(v) = tol {
                    cell.success_tol = v;
                }
                if let Some(v) = design_scale {
                    cell.design_scale = v;
                }
                if zero_index.is_some() {
                    cell.zero_index = zero_index;
                }
            }
            Ok(apply_common(cfg, &common))
        }
        Command::PruneTrain {
            common,
            arm,
            cycles,
            target,
            iters,
        } => {
            let mut cfg = load(&common)?.unwrap_or_else(|| {
                ExperimentConfig::new(Experiment::PruneTrain {
                    task: TaskConfig::default(),
                    arm: PruneArm::Cyclical { cycles },
                    settings: ArmSettings::new(0.95, 5000),
                    tvpgd: None,
                })
            });
            let Experiment::PruneTrain {
                arm: cfg_arm, settings, ..
            } = &mut cfg.experiment
            else {
                return Err(wrong_kind("prune_train"));
            };
            if let Some(a) = arm {
                *cfg_arm = match a {
                    Arm::OneShot => PruneArm::OneShot,
                    Arm::Gradual => PruneArm::Gradual,
                    Arm::Cyclical => PruneArm::Cyclical { cycles },
                };
            }
            if let Some(t) = target {
                settings.target = t;
            }
            if let Some(i) = iters {
                settings.total_iters = i;
            }
            Ok(apply_common(cfg, &common))
        }
        Command::Ablate {
            common,
            arms,
            cycles,
            target,
            iters,
        } => {
            let mut cfg = load(&common)?.unwrap_or_else(|| {
                ExperimentConfig::new(Experiment::Ablate {
                    task: TaskConfig::default(),
                    arms: vec![
                        AblationArm::Cubic,
                        AblationArm::Linear,
                        AblationArm::Step,
                        AblationArm::FinetuneOnly,
                    ],
                    cycles: 5,
                    settings: ArmSettings::new(0.99, 5000),
                })
            });
            let Experiment::Ablate {
                arms: cfg_arms,
                cycles: cfg_cycles,
                settings,
                ..
            } = &mut cfg.experiment
            else {
                return Err(wrong_kind("ablate"));
            };
            if !arms.is_empty() {
                *cfg_arms = arms.into_iter().map(Into::into).collect();
            }
            if let Some(c) = cycles {
                *cfg_cycles = c;
            }
            if let Some(t) = target {
                settings.target = t;
            }
            if let Some(i) = iters {
                settings.total_iters = i;
            }
            Ok(apply_common(cfg, &common))
        }
        Command::Replay { .. } => unreachable!("handled before building a config"),
    }
}

fn execute(cli: Cli) -> Result<harness::RunManifest> {
    if let Command::Replay { manifest, out_dir } = &cli.command {
        return harness::replay(manifest, out_dir);
    }
    let config = build(cli.command)?;
    harness::run(&config)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(m) => {
            let line = serde_json::json!({
                "status": "ok",
                "experiment": m.experiment,
                "out_dir": m.config.out_dir,
                "outputs": m.outputs,
            });
            println!("{line}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let line = serde_json::json!({ "status": "error", "kind": e.kind(), "message": e.to_string() });
            eprintln!("{line}");
            match e {
                Error::Validation { .. } | Error::Json(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
