//! Argument definitions and dispatch.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::artifacts::{verify, Manifest};
use crate::config::{parse_detector, resolve, Preset, RunFile, Task, TaskConfig};
use crate::error::{CliError, CliResult};
use crate::tasks;

#[derive(Debug, Parser)]
#[command(
    name = "cvqnn",
    version,
    about = "Measurement-nonlinear CV quantum neural network experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimize a network to prepare a target state from vacuum.
    #[command(allow_negative_numbers = true)]
    Stateprep(StateprepArgs),
    /// Fit a noisy sine with the q-quadrature expectation.
    #[command(allow_negative_numbers = true)]
    Curvefit(CurvefitArgs),
    /// Train and score the hybrid fraud classifier.
    #[command(allow_negative_numbers = true)]
    Fraud(FraudArgs),
    /// Train the hybrid 4-class digit classifier.
    #[command(allow_negative_numbers = true)]
    Mnist(MnistArgs),
    /// Histogram of repeat-until-success measurement rounds.
    #[command(allow_negative_numbers = true)]
    Loopstats(LoopstatsArgs),
    /// Wigner function of a target state on a grid.
    #[command(allow_negative_numbers = true)]
    Wigner(WignerArgs),
    /// Run one task over an axis of parameter values and several seeds.
    #[command(allow_negative_numbers = true)]
    Sweep(SweepArgs),
    /// Run a TOML config file or re-run a manifest.
    Run(RunArgs),
    /// Check that every artifact of a manifest exists with its recorded hash.
    Verify { manifest: PathBuf },
}

#[derive(Debug, Args, Default)]
pub struct Common {
    /// TOML config file; its `[<task>]` section overrides the preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Output directory (default `runs/<task>`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Raw override `key.path=value`, value parsed as JSON when possible.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
}

#[derive(Debug, Args)]
pub struct TargetArgs {
    /// fock, coherent, cat or gkp.
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub alpha0: Option<f64>,
    #[arg(long)]
    pub theta: Option<f64>,
    /// Real part of a coherent amplitude.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Args)]
pub struct StateprepArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub target: TargetArgs,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub cutoff: Option<usize>,
    #[arg(long)]
    pub hbar: Option<f64>,
    #[arg(long)]
    pub max_evals: Option<usize>,
    #[arg(long)]
    pub max_steps: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CurvefitArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub cutoff: Option<usize>,
    #[arg(long)]
    pub data_seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct FraudArgs {
    #[command(flatten)]
    pub common: Common,
    /// Credit-card CSV; the synthetic surrogate is used without it.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub cutoff: Option<usize>,
    #[arg(long)]
    pub loop_trials: Option<usize>,
}

#[derive(Debug, Args)]
pub struct MnistArgs {
    #[command(flatten)]
    pub common: Common,
    /// Directory with the four IDX files.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Measurement round on which each nonlinearity succeeds.
    #[arg(long)]
    pub success_loop: Option<usize>,
    #[arg(long)]
    pub classical_layers: Option<usize>,
    #[arg(long)]
    pub quantum_layers: Option<usize>,
    #[arg(long)]
    pub cutoff: Option<usize>,
    #[arg(long)]
    pub train_limit: Option<usize>,
    #[arg(long)]
    pub test_limit: Option<usize>,
}

#[derive(Debug, Args)]
pub struct LoopstatsArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub s: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// threshold, pnr or pnr:N.
    #[arg(long, value_parser = parse_detector)]
    pub detector: Option<cvqnn::nonlin::Detector>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub modes: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub cutoff: Option<usize>,
    /// Trained fraud model checkpoint to sample instead of an untrained network.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Credit-card CSV whose test split feeds the model.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct WignerArgs {
    #[command(flatten)]
    pub common: Common,
    /// vacuum, fock, coherent, cat or gkp.
    #[arg(long)]
    pub state: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub alpha0: Option<f64>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub cutoff: Option<usize>,
    #[arg(long)]
    pub hbar: Option<f64>,
    #[arg(long)]
    pub half_width: Option<f64>,
    #[arg(long)]
    pub points: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_enum)]
    pub task: Task,
    /// Dotted config key, e.g. `layers`, `eps` or `optimizer.learning_rate`.
    #[arg(long)]
    pub axis: String,
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<f64>,
    /// Seeds 0..N per point.
    #[arg(long, default_value_t = 5)]
    pub seeds: u64,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// A TOML run file with a `task` key, or a `manifest.json`.
    pub file: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

type Overrides = Vec<(String, Value)>;

fn push<T: serde::Serialize>(o: &mut Overrides, key: &str, v: Option<T>) {
    if let Some(v) = v {
        o.push((key.into(), json!(v)));
    }
}

fn target_overrides(o: &mut Overrides, key: &str, kind: Option<&str>, t: &TargetArgs) -> CliResult<()> {
    if let Some(kind) = kind {
        let spec = match kind {
            "vacuum" => json!({"kind": "fock", "n": 0}),
            "fock" => json!({"kind": "fock", "n": t.n.unwrap_or(1)}),
            "coherent" => json!({"kind": "coherent", "alpha_re": t.alpha.unwrap_or(1.0), "alpha_im": 0.0}),
            "cat" => json!({"kind": "cat", "alpha0": t.alpha0.unwrap_or(1.5), "theta": t.theta.unwrap_or(0.0)}),
            "gkp" => json!({"kind": "gkp", "epsilon": t.epsilon.unwrap_or(0.1)}),
            other => return Err(CliError::Config(format!("unknown state {other:?}"))),
        };
        o.push((key.into(), spec));
        return Ok(());
    }
    push(o, &format!("{key}.n"), t.n);
    push(o, &format!("{key}.alpha0"), t.alpha0);
    push(o, &format!("{key}.theta"), t.theta);
    push(o, &format!("{key}.alpha_re"), t.alpha);
    push(o, &format!("{key}.epsilon"), t.epsilon);
    Ok(())
}

fn parse_sets(sets: &[String], o: &mut Overrides) -> CliResult<()> {
    for s in sets {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got {s:?}")))?;
        let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
        o.push((k.trim().to_string(), value));
    }
    Ok(())
}

/// Resolves a task from its common arguments and task-specific overrides.
fn resolve_task(task: Task, common: &Common, mut overrides: Overrides) -> CliResult<(TaskConfig, Preset, PathBuf)> {
    let file = common.config.as_deref().map(RunFile::load).transpose()?;
    if let Some(t) = file.as_ref().and_then(|f| f.task) {
        if t != task {
            return Err(CliError::Config(format!(
                "config file is for {}, not {}",
                t.name(),
                task.name()
            )));
        }
    }
    let preset = common
        .preset
        .or(file.as_ref().and_then(|f| f.preset))
        .unwrap_or_default();
    let seed_key = if task == Task::Loopstats {
        "network.seed"
    } else {
        "seed"
    };
    if task != Task::Wigner {
        push(&mut overrides, seed_key, common.seed);
    }
    parse_sets(&common.sets, &mut overrides)?;
    let cfg = resolve(task, preset, file.as_ref(), &overrides)?;
    let out = common
        .out
        .clone()
        .or(file.and_then(|f| f.output))
        .unwrap_or_else(|| Path::new("runs").join(task.name()));
    Ok((cfg, preset, out))
}

fn single(task: Task, common: &Common, overrides: Overrides) -> CliResult<Value> {
    let (cfg, preset, out) = resolve_task(task, common, overrides)?;
    Ok(tasks::run(&cfg, preset, &out)?.metrics)
}

/// Executes a parsed command and returns the JSON printed on success.
pub fn dispatch(command: Command) -> CliResult<Value> {
    let mut o = Overrides::new();
    match command {
        Command::Stateprep(a) => {
            target_overrides(&mut o, "target", a.target.target.as_deref(), &a.target)?;
            push(&mut o, "layers", a.layers);
            push(&mut o, "cutoff", a.cutoff);
            push(&mut o, "hbar", a.hbar);
            push(&mut o, "optimizer.max_evaluations", a.max_evals);
            push(&mut o, "optimizer.max_steps", a.max_steps);
            single(Task::Stateprep, &a.common, o)
        }
        Command::Curvefit(a) => {
            push(&mut o, "eps", a.eps);
            push(&mut o, "layers", a.layers);
            push(&mut o, "points", a.points);
            push(&mut o, "optimizer.steps", a.steps);
            push(&mut o, "optimizer.learning_rate", a.lr);
            push(&mut o, "cutoff", a.cutoff);
            push(&mut o, "data_seed", a.data_seed);
            single(Task::Curvefit, &a.common, o)
        }
        Command::Fraud(a) => {
            if let Some(p) = a.csv {
                o.push(("source".into(), json!({"kind": "csv", "path": p})));
            }
            push(&mut o, "train.iterations", a.iterations);
            push(&mut o, "train.adam.learning_rate", a.lr);
            push(&mut o, "train.batch_size", a.batch_size);
            push(&mut o, "model.cutoff", a.cutoff);
            push(&mut o, "loop_trials", a.loop_trials);
            single(Task::Fraud, &a.common, o)
        }
        Command::Mnist(a) => {
            push(&mut o, "dir", a.data);
            push(&mut o, "train.iterations", a.epochs);
            push(&mut o, "train.adam.learning_rate", a.lr);
            push(&mut o, "train.batch_size", a.batch_size);
            push(&mut o, "success_loop", a.success_loop);
            push(&mut o, "classical_layers", a.classical_layers);
            push(&mut o, "quantum_layers", a.quantum_layers);
            push(&mut o, "cutoff", a.cutoff);
            push(&mut o, "train_limit", a.train_limit);
            push(&mut o, "test_limit", a.test_limit);
            single(Task::Mnist, &a.common, o)
        }
        Command::Loopstats(a) => {
            push(&mut o, "network.s", a.s);
            push(&mut o, "network.alpha", a.alpha);
            push(&mut o, "network.detector", a.detector);
            push(&mut o, "network.trials", a.trials);
            push(&mut o, "network.p", a.modes);
            push(&mut o, "network.layers", a.layers);
            push(&mut o, "network.cutoff", a.cutoff);
            push(&mut o, "model", a.model);
            if let Some(p) = a.csv {
                o.push(("data".into(), json!({"kind": "csv", "path": p})));
            }
            single(Task::Loopstats, &a.common, o)
        }
        Command::Wigner(a) => {
            let t = TargetArgs {
                target: None,
                n: a.n,
                alpha0: a.alpha0,
                theta: a.theta,
                alpha: a.alpha,
                epsilon: a.epsilon,
            };
            target_overrides(&mut o, "state", a.state.as_deref(), &t)?;
            push(&mut o, "cutoff", a.cutoff);
            push(&mut o, "hbar", a.hbar);
            if let Some(h) = a.half_width {
                for (k, v) in [("x_min", -h), ("x_max", h), ("p_min", -h), ("p_max", h)] {
                    o.push((format!("grid.{k}"), json!(v)));
                }
            }
            if let Some(n) = a.points {
                o.push(("grid.nx".into(), json!(n)));
                o.push(("grid.np".into(), json!(n)));
            }
            single(Task::Wigner, &a.common, o)
        }
        Command::Sweep(a) => {
            let (cfg, preset, out) = resolve_task(a.task, &a.common, o)?;
            let out = if a.common.out.is_some() {
                out
            } else {
                Path::new("runs").join(format!("sweep-{}", a.task.name()))
            };
            let seeds: Vec<u64> = (0..a.seeds).collect();
            let points = tasks::sweep(&cfg, preset, &a.axis, &a.values, &seeds, a.workers, &out)?;
            Ok(json!({
                "axis": a.axis,
                "points": points.iter().map(|p| json!({"value": p.value, "mean": p.mean})).collect::<Vec<_>>(),
            }))
        }
        Command::Run(a) => {
            let (cfg, preset, out) = load_run_file(&a.file)?;
            let out = a
                .out
                .or(out)
                .unwrap_or_else(|| Path::new("runs").join(cfg.task().name()));
            Ok(tasks::run(&cfg, preset, &out)?.metrics)
        }
        Command::Verify { manifest } => {
            let problems = verify(&manifest)?;
            if problems.is_empty() {
                Ok(json!({"verified": manifest}))
            } else {
                Err(CliError::Runtime(format!(
                    "manifest check failed: {}",
                    problems.join("; ")
                )))
            }
        }
    }
}

fn load_run_file(path: &Path) -> CliResult<(TaskConfig, Preset, Option<PathBuf>)> {
    if path.extension().is_some_and(|e| e == "json") {
        let m = Manifest::load(path)?;
        m.config.validate()?;
        return Ok((m.config, m.preset, None));
    }
    let file = RunFile::load(path)?;
    let task = file
        .task
        .ok_or_else(|| CliError::Config(format!("{}: missing `task` key", path.display())))?;
    let preset = file.preset.unwrap_or_default();
    let cfg = resolve(task, preset, Some(&file), &[])?;
    Ok((cfg, preset, file.output))
}
