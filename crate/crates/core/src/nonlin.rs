//! The measurement-induced nonlinear element.
//!
//! A primary mode is entangled with an ancilla prepared in `|alpha>` through
//! `CX(s)`, after which the ancilla's photon number is measured. Conditioned
//! on outcome `n` the primary mode undergoes the multiplication operator
//! `K_n = e^{-beta(q)^2/2} beta(q)^n / sqrt(n!)` with
//! `beta(q) = alpha + s q / sqrt(2 hbar)`: the coherent amplitude the ancilla
//! acquires from the shift `q_anc -> q_anc + s q`.

use std::collections::BTreeMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{
    apply_gate, project_mode, CMatrix, FockState, ModeOperator, OperatorLabel, Operators, Projector, C64,
};
use crate::gates::{cx_direct, displacement};
use crate::layers::CompiledNetwork;
use crate::linalg::ln_factorial;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Detector {
    /// Photon-number resolving; success means exactly `n` photons.
    PnrFock { n: usize },
    /// Click/no-click; success means at least one photon.
    ThresholdClick,
}

impl Default for Detector {
    fn default() -> Self {
        Detector::PnrFock { n: 1 }
    }
}

impl Detector {
    pub fn success(self) -> Outcome {
        match self {
            Detector::PnrFock { n } => Outcome::Fock(n),
            Detector::ThresholdClick => Outcome::Click,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Fock(usize),
    Click,
    NoClick,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NonlinConfig {
    pub alpha: f64,
    pub s: f64,
    pub detector: Detector,
    pub max_loops: usize,
}

impl Default for NonlinConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            s: 0.0,
            detector: Detector::default(),
            max_loops: 20,
        }
    }
}

impl NonlinConfig {
    pub fn with_s(s: f64) -> Self {
        Self { s, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "ancilla alpha must be >= 0, got {}",
                self.alpha
            )));
        }
        if !self.s.is_finite() {
            return Err(Error::NonFinite(format!("CX strength {}", self.s)));
        }
        if self.max_loops == 0 {
            return Err(Error::InvalidParameter("max_loops must be at least 1".into()));
        }
        Ok(())
    }

    fn check_outcome(&self, outcome: Outcome) -> Result<()> {
        match (self.detector, outcome) {
            (Detector::PnrFock { .. }, Outcome::Click) => Err(Error::InvalidParameter(
                "a photon-number-resolving detector reports Fock outcomes".into(),
            )),
            (Detector::ThresholdClick, Outcome::Fock(_)) => Err(Error::InvalidParameter(
                "a threshold detector reports click or no-click".into(),
            )),
            _ => Ok(()),
        }
    }

    /// Scalar Kraus function of the ancilla amplitude `beta`.
    pub fn kraus_weight(outcome: Outcome, beta: f64) -> f64 {
        match outcome {
            Outcome::NoClick | Outcome::Fock(0) => (-beta * beta / 2.0).exp(),
            Outcome::Fock(n) => {
                if beta == 0.0 {
                    return 0.0;
                }
                let mag = (-beta * beta / 2.0 + n as f64 * beta.abs().ln() - 0.5 * ln_factorial(n)).exp();
                if beta < 0.0 && n % 2 == 1 {
                    -mag
                } else {
                    mag
                }
            }
            Outcome::Click => (-(-beta * beta).exp_m1()).sqrt(),
        }
    }

    /// `beta(q) = alpha + s q / sqrt(2 hbar)`.
    pub fn beta(&self, q: f64, hbar: f64) -> f64 {
        self.alpha + self.s * q / (2.0 * hbar).sqrt()
    }
}

/// Kraus operator of `outcome` acting on the primary mode.
pub fn kraus_operator(config: &NonlinConfig, outcome: Outcome, cutoff: usize, hbar: f64) -> Result<ModeOperator> {
    config.validate()?;
    config.check_outcome(outcome)?;
    let ops = Operators::shared(cutoff, hbar)?;
    let matrix = ops
        .q_eigen
        .function_of_q(|q| NonlinConfig::kraus_weight(outcome, config.beta(q, hbar)));
    Ok(kraus(matrix))
}

fn kraus(matrix: CMatrix) -> ModeOperator {
    ModeOperator {
        cutoff: matrix.nrows(),
        matrix,
        hermitian: true,
        label: OperatorLabel::Custom,
    }
}

/// Kraus operator for "fail `success_loop - 1` times, then succeed".
///
/// Failures are no-click (vacuum) outcomes. `success_loop = 1` is the plain
/// success operator.
pub fn conditioned_kraus(config: &NonlinConfig, success_loop: usize, cutoff: usize, hbar: f64) -> Result<ModeOperator> {
    config.validate()?;
    if success_loop == 0 {
        return Err(Error::InvalidParameter("success loop index starts at 1".into()));
    }
    let ops = Operators::shared(cutoff, hbar)?;
    let success = config.detector.success();
    let fails = (success_loop - 1) as i32;
    let matrix = ops.q_eigen.function_of_q(|q| {
        let b = config.beta(q, hbar);
        NonlinConfig::kraus_weight(success, b) * NonlinConfig::kraus_weight(Outcome::NoClick, b).powi(fails)
    });
    Ok(kraus(matrix))
}

/// Applies a Kraus operator; returns the unnormalized state and the outcome probability.
pub fn apply_kraus(state: &FockState, mode: usize, op: &ModeOperator) -> Result<(FockState, f64)> {
    project_mode(state, mode, &Projector::Kraus(op.clone()))
}

/// Full two-mode circuit: attach `D(alpha)|0>`, apply `CX(s)`, measure the ancilla.
///
/// Only pure post-measurement branches exist for single Fock outcomes; the
/// threshold click branch mixes several photon numbers and is rejected.
pub fn apply_element_exact(
    state: &FockState,
    primary_mode: usize,
    config: &NonlinConfig,
    outcome: Outcome,
    hbar: f64,
) -> Result<(FockState, f64)> {
    config.validate()?;
    config.check_outcome(outcome)?;
    let n = match outcome {
        Outcome::Fock(n) => n,
        Outcome::NoClick => 0,
        Outcome::Click => return Err(Error::MixedOutcome),
    };
    let d = state.cutoff();
    let ancilla = apply_gate(
        &FockState::vacuum(1, d)?,
        &displacement(C64::new(config.alpha, 0.0), d, hbar)?,
        &[0],
    )?;
    let joint = state.tensor(&ancilla)?;
    let anc = state.modes();
    let entangled = apply_gate(&joint, &cx_direct(config.s, d, hbar)?, &[primary_mode, anc])?;
    project_mode(&entangled, anc, &Projector::Fock(n))
}

/// Largest photon number considered when sampling PNR failure outcomes.
const PNR_SAMPLING_LIMIT: usize = 60;

/// Repeat-until-success: samples detector outcomes until success.
///
/// Each failure applies its own Kraus operator and renormalizes before a
/// fresh ancilla is attached. Returns the normalized output and the number of
/// measurement rounds used.
pub fn apply_element_rus<R: Rng + ?Sized>(
    state: &FockState,
    primary_mode: usize,
    config: &NonlinConfig,
    rng: &mut R,
    hbar: f64,
) -> Result<(FockState, usize)> {
    config.validate()?;
    let d = state.cutoff();
    let success = config.detector.success();
    let candidates: Vec<Outcome> = match config.detector {
        Detector::ThresholdClick => vec![Outcome::Click, Outcome::NoClick],
        Detector::PnrFock { .. } => (0..=PNR_SAMPLING_LIMIT).map(Outcome::Fock).collect(),
    };
    let kraus_ops = candidates
        .iter()
        .map(|&o| kraus_operator(config, o, d, hbar))
        .collect::<Result<Vec<_>>>()?;
    let mut current = state.clone();
    current.normalize()?;
    for round in 1..=config.max_loops {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut chosen = None;
        for (outcome, op) in candidates.iter().zip(&kraus_ops) {
            let mut branch = current.clone();
            branch.apply_operator_mut(op, primary_mode)?;
            let p = branch.norm_sqr();
            acc += p;
            if u < acc {
                chosen = Some((*outcome, branch, p));
                break;
            }
        }
        // u beyond the retained outcomes' total mass is treated as a failure
        let (outcome, mut branch, p) = match chosen {
            Some(c) => c,
            None => {
                let mut branch = current.clone();
                branch.apply_operator_mut(&kraus_ops[candidates.len() - 1], primary_mode)?;
                let p = branch.norm_sqr();
                (candidates[candidates.len() - 1], branch, p)
            }
        };
        if p < crate::fock::MIN_OUTCOME_PROBABILITY {
            return Err(Error::ImpossibleOutcome { probability: p });
        }
        let tracked = current.norm_tracked() * p;
        branch.normalize()?;
        branch.set_norm_tracked(tracked);
        current = branch;
        if outcome == success {
            return Ok((current, round));
        }
    }
    Err(Error::Stall {
        loops: config.max_loops,
    })
}

/// Per-layer histograms of measurement rounds needed for success.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LoopStats {
    /// `histograms[layer][loops]` counts passes that needed `loops` rounds.
    pub histograms: Vec<BTreeMap<usize, usize>>,
    pub success_rate_first_try: f64,
    pub total_attempts: usize,
    /// Passes abandoned after `max_loops` failures.
    #[serde(default)]
    pub stalled: usize,
}

impl LoopStats {
    pub fn new(layers: usize) -> Self {
        Self {
            histograms: vec![BTreeMap::new(); layers],
            ..Default::default()
        }
    }

    pub fn record(&mut self, layer: usize, loops: usize) {
        *self.histograms[layer].entry(loops).or_insert(0) += 1;
        self.total_attempts += loops;
        let passes = self.passes();
        let first: usize = self.histograms.iter().map(|h| h.get(&1).copied().unwrap_or(0)).sum();
        self.success_rate_first_try = first as f64 / passes as f64;
    }

    /// Records one forward pass; a layer counts the most rounds any of its elements needed.
    pub fn record_pass(&mut self, per_layer: &[Vec<usize>]) {
        for (layer, loops) in per_layer.iter().enumerate() {
            if let Some(&worst) = loops.iter().max() {
                self.record(layer, worst);
            }
        }
    }

    /// Runs one sampled pass of `network` on `input` and records it.
    pub fn sample<R: Rng + ?Sized>(&mut self, network: &CompiledNetwork, input: &FockState, rng: &mut R) -> Result<()> {
        match network.run_rus(input, rng) {
            Ok((_, loops)) => self.record_pass(&loops),
            Err(Error::Layer { source, .. }) if matches!(*source, Error::Stall { .. }) => self.stalled += 1,
            Err(e) => return Err(e),
        }
        Ok(())
    }

    pub fn passes(&self) -> usize {
        self.histograms.iter().flat_map(|h| h.values()).sum()
    }

    pub fn mean_loops(&self) -> f64 {
        self.total_attempts as f64 / self.passes().max(1) as f64
    }

    /// Most frequent loop count of a layer (smallest on ties).
    pub fn mode(&self, layer: usize) -> Option<usize> {
        self.histograms[layer]
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(&k, _)| k)
    }

    /// Rows `layer,loop_count,frequency` with raw counts.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["layer", "loop_count", "frequency"])?;
        for (layer, h) in self.histograms.iter().enumerate() {
            for (loops, count) in h {
                w.write_record([layer.to_string(), loops.to_string(), count.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Repeat-until-success statistics over `trials` passes, cycling through `inputs`.
pub fn loop_statistics(network: &CompiledNetwork, inputs: &[FockState], trials: usize, seed: u64) -> Result<LoopStats> {
    if inputs.is_empty() {
        return Err(Error::InvalidParameter("no input states".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = LoopStats::new(network.layers.len());
    for t in 0..trials {
        stats.sample(network, &inputs[t % inputs.len()], &mut rng)?;
    }
    Ok(stats)
}
