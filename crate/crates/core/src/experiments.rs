//! End-to-end runs of the four case studies with serializable configurations.
//!
//! Defaults are the desk-scale settings; `full` constructors restore the
//! larger budgets.

use std::io::Write;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{gen_noisy_sine, load_mnist, prepare_fraud, Dataset, FraudSource, ImageFilter, SyntheticFraud};
use crate::error::{Error, Result};
use crate::fock::{FockState, DEFAULT_HBAR};
use crate::hybrid::{train_classifier, train_fraud, ClassifierRun, FraudRun, HybridConfig, TrainConfig};
use crate::layers::{Network, ParamVector, ReadoutKind, SlotKind};
use crate::meas::{fidelity, wigner, GridSpec, WignerGrid};
use crate::nonlin::{Detector, LoopStats};
use crate::optim::{
    adam, nelder_mead, AdamConfig, CurveFitObjective, NelderMeadConfig, OptimizerTrace, StatePrepObjective, FD_STEP,
};
use crate::targets::{TargetSpec, TargetState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatePrepConfig {
    pub target: TargetSpec,
    pub layers: usize,
    pub cutoff: usize,
    pub hbar: f64,
    pub seed: u64,
    /// Initial parameters are uniform in `[-w, w]`.
    pub init_half_width: f64,
    pub optimizer: NelderMeadConfig,
    pub grid: GridSpec,
    pub leakage_budget: Option<f64>,
}

impl Default for StatePrepConfig {
    fn default() -> Self {
        Self::single_photon()
    }
}

impl StatePrepConfig {
    pub fn single_photon() -> Self {
        Self {
            target: TargetSpec::Fock { n: 1 },
            layers: 6,
            cutoff: 6,
            hbar: DEFAULT_HBAR,
            seed: 0,
            init_half_width: 0.05,
            optimizer: NelderMeadConfig {
                max_evaluations: 5000,
                ..NelderMeadConfig::default()
            },
            grid: GridSpec::default(),
            leakage_budget: None,
        }
    }

    pub fn cat(layers: usize) -> Self {
        Self {
            target: TargetSpec::Cat {
                alpha0: 1.5,
                theta: 0.0,
            },
            layers,
            cutoff: 10,
            optimizer: NelderMeadConfig {
                max_evaluations: 10_000,
                ..NelderMeadConfig::default()
            },
            ..Self::single_photon()
        }
    }

    /// 500-evaluation smoke run at the full GKP size.
    pub fn gkp_smoke() -> Self {
        Self {
            target: TargetSpec::Gkp { epsilon: 0.1 },
            layers: 15,
            cutoff: 15,
            optimizer: NelderMeadConfig {
                max_evaluations: 500,
                ..NelderMeadConfig::default()
            },
            ..Self::single_photon()
        }
    }

    pub fn gkp_full() -> Self {
        Self {
            optimizer: NelderMeadConfig {
                max_evaluations: 50_000,
                ..NelderMeadConfig::default()
            },
            ..Self::gkp_smoke()
        }
    }

    pub fn network(&self) -> Result<Network> {
        let mut net = Network::standard(1, self.layers, self.cutoff)?;
        net.hbar = self.hbar;
        net.leakage_budget = self.leakage_budget;
        net.validate()?;
        Ok(net)
    }
}

#[derive(Debug, Clone)]
pub struct StatePrepRun {
    pub config: StatePrepConfig,
    pub target: TargetState,
    pub params: Vec<f64>,
    pub initial_cost: f64,
    pub cost: f64,
    pub fidelity: f64,
    pub output: FockState,
    pub leakage: f64,
    pub trace: OptimizerTrace,
}

impl StatePrepRun {
    /// Wigner grids of the target and the optimized output.
    pub fn wigner_grids(&self) -> Result<(WignerGrid, WignerGrid)> {
        let h = self.config.hbar;
        Ok((
            wigner(&self.target.state, &self.config.grid, h)?,
            wigner(&self.output, &self.config.grid, h)?,
        ))
    }
}

pub fn run_state_prep(config: &StatePrepConfig) -> Result<StatePrepRun> {
    config.grid.validate()?;
    let net = config.network()?;
    let target = config.target.build(config.cutoff, config.hbar)?;
    let objective = StatePrepObjective {
        network: net.clone(),
        target: target.state.clone(),
    };
    let x0 = ParamVector::random(&net, config.seed, config.init_half_width);
    let initial_cost = crate::optim::cost_state_prep(&x0, &net, &target.state)?;
    let result = nelder_mead(&objective, &x0.values, &config.optimizer)?;
    let params = ParamVector::from_values(&net, result.x.clone())?;
    let out = net.forward(&params, &FockState::vacuum(1, config.cutoff)?, ReadoutKind::None)?;
    Ok(StatePrepRun {
        config: config.clone(),
        fidelity: fidelity(&target.state, &out.state)?,
        target,
        params: result.x,
        initial_cost,
        cost: result.cost,
        output: out.state,
        leakage: out.leakage,
        trace: result.trace,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurveFitConfig {
    pub eps: f64,
    pub points: usize,
    pub range: (f64, f64),
    pub layers: usize,
    pub cutoff: usize,
    pub hbar: f64,
    pub data_seed: u64,
    pub seed: u64,
    pub init_half_width: f64,
    pub optimizer: AdamConfig,
    pub fd_step: f64,
    pub leakage_budget: Option<f64>,
}

impl Default for CurveFitConfig {
    fn default() -> Self {
        Self {
            eps: 0.1,
            points: 100,
            range: (-2.0, 2.0),
            layers: 6,
            cutoff: 6,
            hbar: DEFAULT_HBAR,
            data_seed: 1,
            seed: 0,
            init_half_width: 0.05,
            optimizer: AdamConfig {
                learning_rate: 0.01,
                steps: 1000,
                ..AdamConfig::default()
            },
            fd_step: FD_STEP,
            leakage_budget: None,
        }
    }
}

impl CurveFitConfig {
    pub fn network(&self) -> Result<Network> {
        let mut net = Network::standard(1, self.layers, self.cutoff)?;
        net.hbar = self.hbar;
        net.leakage_budget = self.leakage_budget;
        net.validate()?;
        Ok(net)
    }
}

#[derive(Debug, Clone)]
pub struct CurveFitRun {
    pub config: CurveFitConfig,
    pub data: Dataset,
    pub params: Vec<f64>,
    pub initial_cost: f64,
    pub cost: f64,
    pub predictions: Vec<f64>,
    pub trace: OptimizerTrace,
}

impl CurveFitRun {
    /// Rows `x,target,prediction`, sorted by `x`.
    pub fn write_fit_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut rows: Vec<(f64, f64, f64)> = (0..self.data.len())
            .map(|i| (self.data.features[i][0], self.data.targets[i], self.predictions[i]))
            .collect();
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "target", "prediction"])?;
        for (x, f, q) in rows {
            w.write_record([format!("{x:?}"), format!("{f:?}"), format!("{q:?}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn run_curve_fit(config: &CurveFitConfig) -> Result<CurveFitRun> {
    if !(config.fd_step > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "finite-difference step {} must be positive",
            config.fd_step
        )));
    }
    let net = config.network()?;
    let data = gen_noisy_sine(config.points, config.eps, config.range, config.data_seed)?;
    let xs: Vec<f64> = data.features.iter().map(|r| r[0]).collect();
    let objective = CurveFitObjective::new(net.clone(), &xs, &data.targets)?;
    let x0 = ParamVector::random(&net, config.seed, config.init_half_width).values;
    let result = adam(
        |x| objective.cost_and_gradient(&ParamVector::from_values(&net, x.to_vec())?, config.fd_step),
        &x0,
        &config.optimizer,
    )?;
    let params = ParamVector::from_values(&net, result.x.clone())?;
    Ok(CurveFitRun {
        config: config.clone(),
        initial_cost: result.trace.rows.first().map_or(f64::NAN, |r| r.cost),
        cost: result.cost,
        predictions: objective.predictions(&params)?,
        params: result.x,
        trace: result.trace,
        data,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FraudConfig {
    pub source: FraudSource,
    pub model: HybridConfig,
    pub train: TrainConfig,
    pub seed: u64,
    /// Sampled passes for the loop histogram of the trained model; 0 skips it.
    pub loop_trials: usize,
    /// Detector used when sampling loops (the training detector when `None`).
    pub loop_detector: Option<Detector>,
}

impl Default for FraudConfig {
    fn default() -> Self {
        Self {
            source: FraudSource::Synthetic(SyntheticFraud::default()),
            model: HybridConfig::fraud_desk(),
            train: TrainConfig::fraud_desk(),
            seed: 0,
            loop_trials: 2000,
            loop_detector: Some(Detector::ThresholdClick),
        }
    }
}

pub struct FraudExperiment {
    pub config: FraudConfig,
    pub train_set: Dataset,
    pub test_set: Dataset,
    pub run: FraudRun,
    pub loops: Option<LoopStats>,
}

pub fn run_fraud(config: &FraudConfig) -> Result<FraudExperiment> {
    let (train_set, test_set, _) = prepare_fraud(&config.source, config.seed)?;
    let run = train_fraud(&config.model, &config.train, &train_set, &test_set, config.seed)?;
    let loops = match config.loop_trials {
        0 => None,
        n => Some(
            run.model
                .loop_statistics(&test_set, n, config.seed, config.loop_detector)?,
        ),
    };
    Ok(FraudExperiment {
        config: config.clone(),
        train_set,
        test_set,
        run,
        loops,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MnistConfig {
    /// Directory holding the four IDX files.
    pub dir: PathBuf,
    pub filter: ImageFilter,
    pub train_limit: Option<usize>,
    pub test_limit: Option<usize>,
    /// Dense layers before the encoding layer; the last one has the encoding width.
    pub classical_layers: usize,
    pub quantum_layers: usize,
    pub cutoff: usize,
    /// Measurement round on which every nonlinearity succeeds.
    pub success_loop: usize,
    pub train: TrainConfig,
    pub seed: u64,
}

impl Default for MnistConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("data/mnist"),
            filter: ImageFilter::default(),
            train_limit: Some(2000),
            test_limit: Some(500),
            classical_layers: 1,
            quantum_layers: 3,
            cutoff: 4,
            success_loop: 1,
            train: TrainConfig::mnist_desk(),
            seed: 0,
        }
    }
}

impl MnistConfig {
    pub fn model(&self, features: usize) -> Result<HybridConfig> {
        if self.classical_layers == 0 {
            return Err(Error::InvalidParameter(
                "at least one classical layer feeds the encoding".into(),
            ));
        }
        let mut cfg = HybridConfig::mnist_desk(features);
        let width = crate::layers::standard_layer(cfg.p)?.param_count;
        cfg.hidden = vec![width; self.classical_layers - 1];
        cfg.quantum_layers = self.quantum_layers;
        cfg.cutoff = self.cutoff;
        cfg.success_loop = self.success_loop;
        Ok(cfg)
    }
}

pub struct MnistExperiment {
    pub config: MnistConfig,
    pub train_set: Dataset,
    pub test_set: Dataset,
    pub run: ClassifierRun,
}

pub fn run_mnist(config: &MnistConfig) -> Result<MnistExperiment> {
    let (train_set, test_set) = load_mnist(
        &config.dir,
        &config.filter,
        config.train_limit,
        config.test_limit,
        config.seed,
    )?;
    let model = config.model(train_set.width())?;
    let run = train_classifier(&model, &config.train, &train_set, &test_set, config.seed)?;
    Ok(MnistExperiment {
        config: config.clone(),
        train_set,
        test_set,
        run,
    })
}

/// Loop counts of an untrained network whose couplings are all `s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoopStatsConfig {
    pub p: usize,
    pub layers: usize,
    pub cutoff: usize,
    pub alpha: f64,
    pub s: f64,
    pub detector: Detector,
    pub trials: usize,
    pub seed: u64,
}

impl Default for LoopStatsConfig {
    fn default() -> Self {
        Self {
            p: 1,
            layers: 1,
            cutoff: 6,
            alpha: 1.0,
            s: 0.0,
            detector: Detector::ThresholdClick,
            trials: 10_000,
            seed: 0,
        }
    }
}

pub fn run_loop_stats(config: &LoopStatsConfig) -> Result<LoopStats> {
    let mut net = Network::standard(config.p, config.layers, config.cutoff)?;
    net.alpha = config.alpha;
    net.detector = config.detector;
    net.leakage_budget = None;
    let mut params = ParamVector::zeros(&net);
    for (i, v) in params.values.iter_mut().enumerate() {
        let (layer, slot) = locate(&net, i);
        if net.layers[layer].slot_kinds[slot] == SlotKind::CxStrength {
            *v = config.s;
        }
    }
    let compiled = net.compile(&params)?;
    let input = FockState::vacuum(config.p, config.cutoff)?;
    crate::nonlin::loop_statistics(&compiled, &[input], config.trials, config.seed)
}

fn locate(net: &Network, mut index: usize) -> (usize, usize) {
    for (l, layer) in net.layers.iter().enumerate() {
        if index < layer.param_count {
            return (l, index);
        }
        index -= layer.param_count;
    }
    unreachable!("index within the parameter count")
}

/// Result for one `(value, seed)` cell of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub value: f64,
    pub seed: u64,
    pub cost: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    /// Mean over the seeds that finished.
    pub mean: Option<f64>,
    pub cells: Vec<SweepCell>,
}

/// Runs `cost(value, seed)` over the grid with at most `workers` cells in flight.
///
/// Failed cells are kept with their error message.
pub fn sweep<F>(values: &[f64], seeds: &[u64], workers: usize, cost: F) -> Result<Vec<SweepPoint>>
where
    F: Fn(f64, u64) -> Result<f64> + Sync,
{
    let grid: Vec<(f64, u64)> = values
        .iter()
        .flat_map(|&v| seeds.iter().map(move |&s| (v, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("worker pool: {e}")))?;
    let cells: Vec<SweepCell> = pool.install(|| {
        grid.par_iter()
            .map(|&(value, seed)| match cost(value, seed) {
                Ok(c) => SweepCell {
                    value,
                    seed,
                    cost: Some(c),
                    error: None,
                },
                Err(e) => SweepCell {
                    value,
                    seed,
                    cost: None,
                    error: Some(e.to_string()),
                },
            })
            .collect()
    });
    Ok(values
        .iter()
        .enumerate()
        .map(|(k, &value)| {
            let cells = cells[k * seeds.len()..(k + 1) * seeds.len()].to_vec();
            let ok: Vec<f64> = cells.iter().filter_map(|c| c.cost).collect();
            SweepPoint {
                value,
                mean: (!ok.is_empty()).then(|| ok.iter().sum::<f64>() / ok.len() as f64),
                cells,
            }
        })
        .collect())
}

/// Rows `value,seed,cost,error` followed by one `mean` row per value.
pub fn write_sweep_csv<W: Write>(points: &[SweepPoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["value", "seed", "cost", "error"])?;
    for p in points {
        for c in &p.cells {
            w.write_record([
                format!("{:?}", c.value),
                c.seed.to_string(),
                c.cost.map_or(String::new(), |v| format!("{v:?}")),
                c.error.clone().unwrap_or_default(),
            ])?;
        }
        w.write_record([
            format!("{:?}", p.value),
            "mean".into(),
            p.mean.map_or(String::new(), |v| format!("{v:?}")),
            String::new(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
