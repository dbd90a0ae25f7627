//! Task execution and artifact emission.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use cvqnn::data::prepare_fraud;
use cvqnn::experiments::{
    run_curve_fit, run_fraud, run_loop_stats, run_mnist, run_state_prep, sweep as sweep_grid, write_sweep_csv,
    SweepPoint,
};
use cvqnn::hybrid::{write_epochs_csv, write_predictions_csv, write_roc_csv, HybridModel};
use cvqnn::meas::{wigner, WignerGrid};
use cvqnn::nonlin::LoopStats;
use cvqnn::targets::write_amplitudes_csv;
use serde_json::{json, Value};

use crate::artifacts::{version, Manifest, OutputDir, METRICS};
use crate::config::{get_path, set_path, LoopstatsTask, Preset, Task, TaskConfig, WignerTask};
use crate::error::{CliError, CliResult};

pub struct TaskOutput {
    pub metrics: Value,
    /// Scalar minimized by the run; sweeps aggregate it.
    pub cost: Option<f64>,
}

/// Runs `config`, writes its artifacts and manifest into `out`, and returns the metrics.
pub fn run(config: &TaskConfig, preset: Preset, out: &Path) -> CliResult<TaskOutput> {
    config.validate()?;
    let start = Instant::now();
    let mut dir = OutputDir::create(out)?;
    let output = execute(config, &mut dir)?;
    dir.write_json(METRICS, &output.metrics)?;
    Manifest {
        tool: "cvqnn".into(),
        version: version(),
        task: config.task().name().into(),
        preset,
        seed: config.seed(),
        config: config.clone(),
        artifacts: dir.artifacts,
        elapsed_s: start.elapsed().as_secs_f64(),
    }
    .write(out)?;
    Ok(output)
}

fn execute(config: &TaskConfig, dir: &mut OutputDir) -> CliResult<TaskOutput> {
    match config {
        TaskConfig::Stateprep(c) => {
            let r = run_state_prep(c)?;
            let (wt, wo) = r.wigner_grids()?;
            dir.write("trace.csv", |w| Ok(r.trace.write_csv(w)?))?;
            dir.write("wigner_target.csv", |w| Ok(wt.write_csv(w)?))?;
            dir.write("wigner_output.csv", |w| Ok(wo.write_csv(w)?))?;
            dir.write("marginal.csv", |w| {
                write_marginals(w, &[("target", &wt), ("output", &wo)])
            })?;
            dir.write("output_amplitudes.csv", |w| Ok(write_amplitudes_csv(&r.output, w)?))?;
            dir.write_json("params.json", &json!(r.params))?;
            let metrics = json!({
                "target": r.target.name,
                "target_params": r.target.params,
                "layers": c.layers,
                "cutoff": c.cutoff,
                "initial_cost": r.initial_cost,
                "cost": r.cost,
                "fidelity": r.fidelity,
                "evaluations": r.trace.evaluations,
                "steps": r.trace.rows.last().map_or(0, |row| row.step),
                "stop_reason": r.trace.reason,
                "leakage": r.leakage,
                "wigner_output_min": wo.values.iter().copied().fold(f64::INFINITY, f64::min),
            });
            Ok(TaskOutput {
                metrics,
                cost: Some(r.cost),
            })
        }
        TaskConfig::Curvefit(c) => {
            let r = run_curve_fit(c)?;
            dir.write("trace.csv", |w| Ok(r.trace.write_csv(w)?))?;
            dir.write("fit.csv", |w| Ok(r.write_fit_csv(w)?))?;
            dir.write_json("params.json", &json!(r.params))?;
            let metrics = json!({
                "eps": c.eps,
                "layers": c.layers,
                "points": c.points,
                "data_fingerprint": r.data.fingerprint(),
                "initial_cost": r.initial_cost,
                "cost": r.cost,
                "steps": r.trace.rows.last().map_or(0, |row| row.step),
                "stop_reason": r.trace.reason,
            });
            Ok(TaskOutput {
                metrics,
                cost: Some(r.cost),
            })
        }
        TaskConfig::Fraud(c) => {
            let e = run_fraud(c)?;
            let m = &e.run.metrics;
            dir.write("trace.csv", |w| Ok(e.run.trace.write_csv(w)?))?;
            dir.write("predictions.csv", |w| Ok(write_predictions_csv(&e.run.predictions, w)?))?;
            dir.write("roc.csv", |w| Ok(write_roc_csv(&m.roc, w)?))?;
            dir.write("model.json", |w| Ok(w.write_all(e.run.model.to_json()?.as_bytes())?))?;
            if let Some(l) = &e.loops {
                dir.write("loops.csv", |w| Ok(l.write_csv(w)?))?;
            }
            let metrics = json!({
                "accuracy": m.accuracy,
                "auc": m.auc,
                "threshold": m.threshold,
                "confusion": m.confusion,
                "train_auc": m.train_auc,
                "train_threshold": m.train_threshold,
                "accuracy_at_train_threshold": m.accuracy_at_train_threshold,
                "final_batch_loss": m.final_batch_loss,
                "train_rows": e.train_set.len(),
                "test_rows": e.test_set.len(),
                "train_fingerprint": e.train_set.fingerprint(),
                "test_fingerprint": e.test_set.fingerprint(),
                "loops": e.loops.as_ref().map(loop_summary),
            });
            Ok(TaskOutput {
                metrics,
                cost: Some(1.0 - m.accuracy),
            })
        }
        TaskConfig::Mnist(c) => {
            let e = run_mnist(c)?;
            dir.write("trace.csv", |w| Ok(e.run.trace.write_csv(w)?))?;
            dir.write("epochs.csv", |w| Ok(write_epochs_csv(&e.run.epochs, w)?))?;
            dir.write("model.json", |w| Ok(w.write_all(e.run.model.to_json()?.as_bytes())?))?;
            let epochs: Vec<Value> = e
                .run
                .epochs
                .iter()
                .map(|m| {
                    json!({
                        "epoch": m.epoch,
                        "train_loss": m.train_loss,
                        "test_loss": m.test_loss,
                        "train_accuracy": m.train_accuracy,
                        "test_accuracy": m.test_accuracy,
                    })
                })
                .collect();
            let last = e.run.epochs.last();
            let metrics = json!({
                "train_rows": e.train_set.len(),
                "test_rows": e.test_set.len(),
                "success_loop": c.success_loop,
                "final_test_accuracy": last.map(|m| m.test_accuracy),
                "best_test_accuracy": e.run.epochs.iter().map(|m| m.test_accuracy).reduce(f64::max),
                "epochs": epochs,
            });
            Ok(TaskOutput {
                metrics,
                cost: last.map(|m| m.test_loss),
            })
        }
        TaskConfig::Loopstats(c) => {
            let stats = loop_stats(c)?;
            dir.write("loops.csv", |w| Ok(stats.write_csv(w)?))?;
            let metrics = loop_summary(&stats);
            let cost = (stats.passes() > 0).then(|| stats.mean_loops());
            Ok(TaskOutput { metrics, cost })
        }
        TaskConfig::Wigner(c) => {
            let grid = wigner_of(c)?;
            dir.write("wigner.csv", |w| Ok(grid.write_csv(w)?))?;
            dir.write("marginal.csv", |w| write_marginals(w, &[("state", &grid)]))?;
            let metrics = json!({
                "min": grid.values.iter().copied().fold(f64::INFINITY, f64::min),
                "max": grid.values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                "total": grid.total(),
            });
            Ok(TaskOutput { metrics, cost: None })
        }
    }
}

fn wigner_of(c: &WignerTask) -> CliResult<WignerGrid> {
    let state = c.state.build(c.cutoff, c.hbar)?;
    Ok(wigner(&state.state, &c.grid, c.hbar)?)
}

fn loop_stats(c: &LoopstatsTask) -> CliResult<LoopStats> {
    match &c.model {
        None => Ok(run_loop_stats(&c.network)?),
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            let model = HybridModel::from_json(&text)?;
            let (_, test, _) = prepare_fraud(&c.data, c.network.seed)?;
            if test.width() != model.features() {
                return Err(CliError::Config(format!(
                    "model expects {} features, data has {}",
                    model.features(),
                    test.width()
                )));
            }
            Ok(model.loop_statistics(&test, c.network.trials, c.network.seed, Some(c.network.detector))?)
        }
    }
}

fn loop_summary(stats: &LoopStats) -> Value {
    let modes: Vec<Option<usize>> = (0..stats.histograms.len()).map(|l| stats.mode(l)).collect();
    json!({
        "mean_loops": stats.mean_loops(),
        "passes": stats.passes(),
        "stalled": stats.stalled,
        "success_rate_first_try": stats.success_rate_first_try,
        "modes": modes,
    })
}

/// Rows `x,<name>...` of the x marginals `integral W dp`.
fn write_marginals(w: &mut dyn Write, grids: &[(&str, &WignerGrid)]) -> CliResult<()> {
    let xs = grids[0].1.spec.xs();
    let cols: Vec<Vec<f64>> = grids.iter().map(|(_, g)| g.x_marginal()).collect();
    let header: Vec<&str> = std::iter::once("x").chain(grids.iter().map(|(n, _)| *n)).collect();
    writeln!(w, "{}", header.join(","))?;
    for (i, x) in xs.iter().enumerate() {
        let row: Vec<String> = std::iter::once(format!("{x:?}"))
            .chain(cols.iter().map(|c| format!("{:?}", c[i])))
            .collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

fn seed_key(task: Task) -> Option<&'static str> {
    match task {
        Task::Loopstats => Some("network.seed"),
        Task::Wigner => None,
        _ => Some("seed"),
    }
}

/// Typed axis value: integers stay integers where the config field is one.
fn axis_value(base: &Value, axis: &str, v: f64) -> CliResult<Value> {
    let existing = get_path(base, axis).ok_or_else(|| CliError::Config(format!("unknown sweep axis {axis:?}")))?;
    if existing.is_u64() || existing.is_i64() {
        if v.fract() != 0.0 || v < 0.0 {
            return Err(CliError::Config(format!("axis {axis} takes whole numbers, got {v}")));
        }
        Ok(json!(v as u64))
    } else if existing.is_f64() {
        Ok(json!(v))
    } else {
        Err(CliError::Config(format!("axis {axis} is not numeric")))
    }
}

/// Runs every `(value, seed)` cell into `out/<axis>=<value>/seed=<seed>` and
/// writes `sweep.csv`; failed cells are kept and marked.
pub fn sweep(
    base: &TaskConfig,
    preset: Preset,
    axis: &str,
    values: &[f64],
    seeds: &[u64],
    workers: usize,
    out: &Path,
) -> CliResult<Vec<SweepPoint>> {
    let task = base.task();
    let params = base.params()?;
    let seed_key = seed_key(task).ok_or_else(|| CliError::Config(format!("{} has no seed to sweep", task.name())))?;
    for &v in values {
        axis_value(&params, axis, v)?;
    }
    let start = Instant::now();
    let mut dir = OutputDir::create(out)?;
    let points = sweep_grid(values, seeds, workers, |value, seed| {
        let mut p = params.clone();
        set_path(&mut p, axis, axis_value(&params, axis, value).map_err(runtime)?).map_err(runtime)?;
        set_path(&mut p, seed_key, json!(seed)).map_err(runtime)?;
        let cfg = TaskConfig::from_params(task, p).map_err(runtime)?;
        let cell = out.join(format!("{axis}={value}")).join(format!("seed={seed}"));
        let r = run(&cfg, preset, &cell).map_err(runtime)?;
        r.cost
            .ok_or_else(|| cvqnn::Error::InvalidParameter(format!("{} reports no cost", task.name())))
    })?;
    dir.write("sweep.csv", |w| Ok(write_sweep_csv(&points, w)?))?;
    let summary = json!({
        "axis": axis,
        "points": points.iter().map(|p| json!({
            "value": p.value,
            "mean": p.mean,
            "costs": p.cells.iter().map(|c| c.cost).collect::<Vec<_>>(),
            "failed": p.cells.iter().filter(|c| c.error.is_some()).count(),
        })).collect::<Vec<_>>(),
    });
    dir.write_json(METRICS, &summary)?;
    Manifest {
        tool: "cvqnn".into(),
        version: version(),
        task: format!("sweep:{}", task.name()),
        preset,
        seed: seeds.first().copied().unwrap_or(0),
        config: base.clone(),
        artifacts: dir.artifacts,
        elapsed_s: start.elapsed().as_secs_f64(),
    }
    .write(out)?;
    Ok(points)
}

fn runtime(e: CliError) -> cvqnn::Error {
    cvqnn::Error::InvalidParameter(e.to_string())
}
