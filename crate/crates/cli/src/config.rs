//! Run configuration: preset defaults, then the TOML task section, then flags.
//!
//! Layers are merged as JSON trees before the typed config is decoded, so a
//! file or flag only needs the keys it changes.

use std::cmp::Ordering;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use cvqnn::data::{FraudSource, SyntheticFraud};
use cvqnn::experiments::{CurveFitConfig, FraudConfig, LoopStatsConfig, MnistConfig, StatePrepConfig};
use cvqnn::meas::GridSpec;
use cvqnn::nonlin::Detector;
use cvqnn::optim::NelderMeadConfig;
use cvqnn::targets::TargetSpec;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Stateprep,
    Curvefit,
    Fraud,
    Mnist,
    Loopstats,
    Wigner,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Stateprep => "stateprep",
            Task::Curvefit => "curvefit",
            Task::Fraud => "fraud",
            Task::Mnist => "mnist",
            Task::Loopstats => "loopstats",
            Task::Wigner => "wigner",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Budgets that finish on a laptop.
    #[default]
    Desk,
    /// Full-length layer counts, cutoffs and step budgets.
    Full,
}

/// Phase-space picture of a single target state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WignerTask {
    pub state: TargetSpec,
    pub cutoff: usize,
    pub hbar: f64,
    pub grid: GridSpec,
}

impl Default for WignerTask {
    fn default() -> Self {
        Self {
            state: TargetSpec::Cat {
                alpha0: 1.5,
                theta: 0.0,
            },
            cutoff: 12,
            hbar: cvqnn::fock::DEFAULT_HBAR,
            grid: GridSpec::default(),
        }
    }
}

/// Loop histogram of an untrained network, or of a trained fraud model
/// checkpoint sampled over the test split of `data`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoopstatsTask {
    pub network: LoopStatsConfig,
    pub model: Option<PathBuf>,
    pub data: FraudSource,
}

impl Default for LoopstatsTask {
    fn default() -> Self {
        Self {
            network: LoopStatsConfig::default(),
            model: None,
            data: FraudSource::Synthetic(SyntheticFraud::default()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", content = "params", rename_all = "snake_case")]
pub enum TaskConfig {
    Stateprep(StatePrepConfig),
    Curvefit(CurveFitConfig),
    Fraud(FraudConfig),
    Mnist(MnistConfig),
    Loopstats(LoopstatsTask),
    Wigner(WignerTask),
}

impl TaskConfig {
    pub fn task(&self) -> Task {
        match self {
            TaskConfig::Stateprep(_) => Task::Stateprep,
            TaskConfig::Curvefit(_) => Task::Curvefit,
            TaskConfig::Fraud(_) => Task::Fraud,
            TaskConfig::Mnist(_) => Task::Mnist,
            TaskConfig::Loopstats(_) => Task::Loopstats,
            TaskConfig::Wigner(_) => Task::Wigner,
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            TaskConfig::Stateprep(c) => c.seed,
            TaskConfig::Curvefit(c) => c.seed,
            TaskConfig::Fraud(c) => c.seed,
            TaskConfig::Mnist(c) => c.seed,
            TaskConfig::Loopstats(c) => c.network.seed,
            TaskConfig::Wigner(_) => 0,
        }
    }

    pub fn params(&self) -> CliResult<Value> {
        let mut v = serde_json::to_value(self)?;
        Ok(v["params"].take())
    }

    pub fn from_params(task: Task, params: Value) -> CliResult<Self> {
        serde_json::from_value(json!({ "task": task.name(), "params": params }))
            .map_err(|e| CliError::Config(format!("{} config: {e}", task.name())))
    }

    /// Cheap structural checks run before any work starts.
    pub fn validate(&self) -> CliResult<()> {
        let c = CliError::config;
        match self {
            TaskConfig::Stateprep(s) => {
                s.network().map_err(c)?;
                s.grid.validate().map_err(c)?;
                s.target.build(s.cutoff, s.hbar).map_err(c)?;
            }
            TaskConfig::Curvefit(s) => {
                s.network().map_err(c)?;
                if s.points == 0
                    || s.range.1.partial_cmp(&s.range.0) != Some(Ordering::Greater)
                    || s.eps.is_nan()
                    || s.eps < 0.0
                {
                    return Err(CliError::Config(
                        "curvefit needs points > 0, an increasing range and eps >= 0".into(),
                    ));
                }
            }
            TaskConfig::Fraud(s) => {
                if s.train.batch_size == 0 {
                    return Err(CliError::Config("batch size must be positive".into()));
                }
                if let FraudSource::Csv { path } = &s.source {
                    if !Path::new(path).is_file() {
                        return Err(CliError::Config(format!("fraud CSV {path} does not exist")));
                    }
                }
            }
            TaskConfig::Mnist(s) => {
                if !s.dir.is_dir() {
                    return Err(CliError::Config(format!(
                        "MNIST directory {} does not exist",
                        s.dir.display()
                    )));
                }
                if s.train.batch_size == 0 {
                    return Err(CliError::Config("batch size must be positive".into()));
                }
            }
            TaskConfig::Loopstats(s) => {
                if s.network.trials == 0 {
                    return Err(CliError::Config("loopstats needs at least one trial".into()));
                }
                if let Some(m) = &s.model {
                    if !m.is_file() {
                        return Err(CliError::Config(format!(
                            "model checkpoint {} does not exist",
                            m.display()
                        )));
                    }
                }
            }
            TaskConfig::Wigner(s) => {
                s.grid.validate().map_err(c)?;
                s.state.build(s.cutoff, s.hbar).map_err(c)?;
            }
        }
        Ok(())
    }
}

/// Parameters of `task` under `preset`. State preparation depends on the target kind.
pub fn preset_params(task: Task, preset: Preset, target: Option<&Value>) -> CliResult<Value> {
    let v = match task {
        Task::Stateprep => {
            let kind = target
                .and_then(|t| t.get("kind"))
                .and_then(Value::as_str)
                .unwrap_or("fock");
            let mut cfg = match kind {
                "cat" => StatePrepConfig::cat(8),
                "gkp" => StatePrepConfig::gkp_smoke(),
                _ => StatePrepConfig::single_photon(),
            };
            if preset == Preset::Full {
                let steps = match kind {
                    "cat" => 9800,
                    "gkp" => 15_000,
                    _ => 5000,
                };
                cfg.optimizer = NelderMeadConfig {
                    max_steps: steps,
                    max_evaluations: usize::MAX,
                    ..NelderMeadConfig::default()
                };
            }
            serde_json::to_value(cfg)?
        }
        Task::Curvefit => serde_json::to_value(CurveFitConfig::default())?,
        Task::Fraud => {
            let mut cfg = FraudConfig::default();
            if preset == Preset::Full {
                cfg.model.cutoff = 8;
                cfg.train.iterations = 10_000;
            }
            serde_json::to_value(cfg)?
        }
        Task::Mnist => {
            let mut cfg = MnistConfig::default();
            if preset == Preset::Full {
                cfg.train_limit = None;
                cfg.test_limit = None;
                cfg.train.iterations = 100;
            }
            serde_json::to_value(cfg)?
        }
        Task::Loopstats => serde_json::to_value(LoopstatsTask::default())?,
        Task::Wigner => serde_json::to_value(WignerTask::default())?,
    };
    Ok(v)
}

/// Recursively overlays `over` onto `base`; objects merge, everything else replaces.
pub fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

/// Sets a dotted key such as `optimizer.learning_rate`, creating objects as needed.
pub fn set_path(root: &mut Value, path: &str, value: Value) -> CliResult<()> {
    let mut cur = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| CliError::Config(format!("{path}: {} is not a table", parts[..i].join("."))))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        cur = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Map::new()));
    }
    unreachable!("split yields at least one part")
}

pub fn get_path<'a>(root: &'a Value, path: &str) -> Option<&'a Value> {
    path.split('.').try_fold(root, |v, k| v.get(k))
}

/// Top level of a TOML run file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunFile {
    pub task: Option<Task>,
    pub preset: Option<Preset>,
    pub output: Option<PathBuf>,
    pub stateprep: Option<toml::Table>,
    pub curvefit: Option<toml::Table>,
    pub fraud: Option<toml::Table>,
    pub mnist: Option<toml::Table>,
    pub loopstats: Option<toml::Table>,
    pub wigner: Option<toml::Table>,
}

impl RunFile {
    pub fn parse(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("config file: {e}")))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn section(&self, task: Task) -> CliResult<Value> {
        let t = match task {
            Task::Stateprep => &self.stateprep,
            Task::Curvefit => &self.curvefit,
            Task::Fraud => &self.fraud,
            Task::Mnist => &self.mnist,
            Task::Loopstats => &self.loopstats,
            Task::Wigner => &self.wigner,
        };
        Ok(match t {
            Some(t) => serde_json::to_value(t)?,
            None => Value::Object(Map::new()),
        })
    }
}

/// Builds the final config: preset, then file section, then flag overrides.
pub fn resolve(
    task: Task,
    preset: Preset,
    file: Option<&RunFile>,
    overrides: &[(String, Value)],
) -> CliResult<TaskConfig> {
    let section = match file {
        Some(f) => f.section(task)?,
        None => Value::Object(Map::new()),
    };
    let target = overrides
        .iter()
        .rev()
        .find(|(k, _)| k == "target")
        .map(|(_, v)| v)
        .or_else(|| section.get("target"));
    let mut params = preset_params(task, preset, target)?;
    merge(&mut params, section);
    for (k, v) in overrides {
        set_path(&mut params, k, v.clone())?;
    }
    let cfg = TaskConfig::from_params(task, params)?;
    cfg.validate()?;
    Ok(cfg)
}

/// `threshold` or `pnr:N` (`pnr` alone means one photon).
pub fn parse_detector(text: &str) -> Result<Detector, String> {
    match text {
        "threshold" => Ok(Detector::ThresholdClick),
        "pnr" => Ok(Detector::PnrFock { n: 1 }),
        other => other
            .strip_prefix("pnr:")
            .and_then(|n| n.parse().ok())
            .map(|n| Detector::PnrFock { n })
            .ok_or_else(|| format!("unknown detector {other:?}; use threshold, pnr or pnr:N")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_beat_file_beat_preset() {
        let file = RunFile::parse(
            "task = \"curvefit\"\n[curvefit]\neps = 0.3\nlayers = 4\n[curvefit.optimizer]\nlearning_rate = 0.05\n",
        )
        .unwrap();
        let cfg = resolve(
            Task::Curvefit,
            Preset::Desk,
            Some(&file),
            &[("layers".into(), json!(2))],
        )
        .unwrap();
        let TaskConfig::Curvefit(c) = cfg else { panic!() };
        assert_eq!((c.eps, c.layers), (0.3, 2));
        assert_eq!(c.optimizer.learning_rate, 0.05);
        assert_eq!(c.optimizer.steps, 1000);
        assert_eq!(c.points, 100);
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        let file = RunFile::parse("[curvefit]\nlayerz = 3\n").unwrap();
        let err = resolve(Task::Curvefit, Preset::Desk, Some(&file), &[]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("layerz"));
        assert!(RunFile::parse("bogus = 1").is_err());
    }

    #[test]
    fn stateprep_preset_follows_target() {
        let cat = json!({"kind": "cat", "alpha0": 1.5, "theta": 0.0});
        let cfg = resolve(Task::Stateprep, Preset::Full, None, &[("target".into(), cat)]).unwrap();
        let TaskConfig::Stateprep(c) = cfg else { panic!() };
        assert_eq!((c.layers, c.cutoff, c.optimizer.max_steps), (8, 10, 9800));
        assert_eq!(c.optimizer.max_evaluations, usize::MAX);
    }

    #[test]
    fn config_round_trips_through_json() {
        for task in [
            Task::Stateprep,
            Task::Curvefit,
            Task::Fraud,
            Task::Loopstats,
            Task::Wigner,
        ] {
            let cfg = resolve(task, Preset::Desk, None, &[]).unwrap();
            let back = TaskConfig::from_params(task, cfg.params().unwrap()).unwrap();
            assert_eq!(cfg, back);
        }
    }

    #[test]
    fn detector_names() {
        assert_eq!(parse_detector("threshold"), Ok(Detector::ThresholdClick));
        assert_eq!(parse_detector("pnr:2"), Ok(Detector::PnrFock { n: 2 }));
        assert!(parse_detector("pnr:x").is_err());
    }

    #[test]
    fn set_path_creates_tables() {
        let mut v = json!({});
        set_path(&mut v, "optimizer.learning_rate", json!(0.1)).unwrap();
        assert_eq!(get_path(&v, "optimizer.learning_rate"), Some(&json!(0.1)));
        let mut n = json!({"a": 1});
        assert!(set_path(&mut n, "a.b", json!(2)).is_err());
    }
}
