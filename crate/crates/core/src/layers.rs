//! Quantum layers and network evaluation.
//!
//! The standard layer on `p` primary modes applies, in order: a
//! nearest-neighbour beamsplitter chain, one rotation per mode, one squeezer
//! per mode, one displacement per mode and finally one nonlinear element per
//! mode (each with its own ancilla). That is `2(p-1) + p + p + 2p + p = 7p - 2`
//! parameters.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{CMatrix, FockState, LeakageMonitor, C64};
use crate::gates::{beamsplitter, displacement, squeezing, GateKind};
use crate::meas::q_expectation;
use crate::nonlin::{apply_element_rus, conditioned_kraus, Detector, NonlinConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotKind {
    BsTheta,
    BsPhi,
    Rotation,
    Squeeze,
    DisplacementRe,
    DisplacementIm,
    CxStrength,
}

/// One gate of a layer and the layer-local parameter slots it reads.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateSlot {
    pub kind: GateKind,
    pub modes: Vec<usize>,
    pub slots: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub p: usize,
    pub gates: Vec<GateSlot>,
    pub slot_kinds: Vec<SlotKind>,
    pub param_count: usize,
    pub has_nonlinearity: bool,
}

/// The standard `7p - 2` parameter layer.
pub fn standard_layer(p: usize) -> Result<LayerSpec> {
    if p == 0 {
        return Err(Error::InvalidParameter(
            "a layer needs at least one primary mode".into(),
        ));
    }
    let mut gates = Vec::new();
    let mut kinds = Vec::new();
    let mut take = |kinds_here: &[SlotKind]| -> Vec<usize> {
        let start = kinds.len();
        kinds.extend_from_slice(kinds_here);
        (start..kinds.len()).collect()
    };
    for i in 0..p.saturating_sub(1) {
        let slots = take(&[SlotKind::BsTheta, SlotKind::BsPhi]);
        gates.push(GateSlot {
            kind: GateKind::BS,
            modes: vec![i, i + 1],
            slots,
        });
    }
    for i in 0..p {
        let slots = take(&[SlotKind::Rotation]);
        gates.push(GateSlot {
            kind: GateKind::R,
            modes: vec![i],
            slots,
        });
    }
    for i in 0..p {
        let slots = take(&[SlotKind::Squeeze]);
        gates.push(GateSlot {
            kind: GateKind::S,
            modes: vec![i],
            slots,
        });
    }
    for i in 0..p {
        let slots = take(&[SlotKind::DisplacementRe, SlotKind::DisplacementIm]);
        gates.push(GateSlot {
            kind: GateKind::D,
            modes: vec![i],
            slots,
        });
    }
    for i in 0..p {
        let slots = take(&[SlotKind::CxStrength]);
        gates.push(GateSlot {
            kind: GateKind::CX,
            modes: vec![i],
            slots,
        });
    }
    let param_count = kinds.len();
    Ok(LayerSpec {
        p,
        gates,
        slot_kinds: kinds,
        param_count,
        has_nonlinearity: true,
    })
}

/// Bounds applied at the classical-to-quantum boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SquashSpec {
    pub beamsplitter: f64,
    pub displacement: f64,
    pub squeeze: f64,
    pub cx: f64,
}

impl Default for SquashSpec {
    fn default() -> Self {
        Self {
            beamsplitter: 1.5,
            displacement: 1.5,
            squeeze: 1.4,
            cx: 1.0,
        }
    }
}

impl SquashSpec {
    /// Bound for a slot kind; phases are left unbounded.
    pub fn bound(&self, kind: SlotKind) -> Option<f64> {
        match kind {
            SlotKind::BsTheta => Some(self.beamsplitter),
            SlotKind::DisplacementRe | SlotKind::DisplacementIm => Some(self.displacement),
            SlotKind::Squeeze => Some(self.squeeze),
            SlotKind::CxStrength => Some(self.cx),
            SlotKind::BsPhi | SlotKind::Rotation => None,
        }
    }

    /// Derivative of the squashing map at `x`.
    pub fn derivative(&self, kind: SlotKind, x: f64) -> f64 {
        match self.bound(kind) {
            Some(b) => b * (1.0 - x.tanh().powi(2)),
            None => 1.0,
        }
    }
}

/// Maps raw classical outputs onto a layer's gate parameters.
pub fn encode_classical(inputs: &[f64], layer: &LayerSpec, squash: &SquashSpec) -> Result<Vec<f64>> {
    if inputs.len() != layer.param_count {
        return Err(Error::shape(layer.param_count, inputs.len()));
    }
    if inputs.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("encoding input".into()));
    }
    Ok(inputs
        .iter()
        .zip(&layer.slot_kinds)
        .map(|(&x, &k)| squash.bound(k).map_or(x, |b| b * x.tanh()))
        .collect())
}

/// Class probability readout from the output photon statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassReadout {
    /// `P(n_c >= 1 and every other primary mode empty)`.
    #[default]
    Exclusive,
    /// `P(n_c >= 1)` regardless of the other modes.
    Marginal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReadoutKind {
    None,
    QExpectations,
    ClassProbabilities,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Readout {
    None,
    QExpectations(Vec<f64>),
    ClassProbabilities(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkOutput {
    pub state: FockState,
    pub readout: Readout,
    pub success_probability: f64,
    pub leakage: f64,
}

/// A stack of standard layers plus everything needed to evaluate it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub p: usize,
    pub layers: Vec<LayerSpec>,
    pub cutoff: usize,
    pub hbar: f64,
    pub alpha: f64,
    pub detector: Detector,
    /// Measurement round on which each element succeeds (1: first try).
    pub success_loop: usize,
    pub squash: SquashSpec,
    pub class_readout: ClassReadout,
    /// Abort when accumulated boundary population exceeds this.
    pub leakage_budget: Option<f64>,
}

/// Default per-run leakage budget.
pub const DEFAULT_LEAKAGE_BUDGET: f64 = 1e-4;

impl Network {
    pub fn standard(p: usize, layers: usize, cutoff: usize) -> Result<Self> {
        crate::fock::check_cutoff(cutoff)?;
        let layer = standard_layer(p)?;
        Ok(Self {
            p,
            layers: vec![layer; layers],
            cutoff,
            hbar: crate::fock::DEFAULT_HBAR,
            alpha: 1.0,
            detector: Detector::default(),
            success_loop: 1,
            squash: SquashSpec::default(),
            class_readout: ClassReadout::default(),
            leakage_budget: Some(DEFAULT_LEAKAGE_BUDGET),
        })
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.param_count).sum()
    }

    pub fn validate(&self) -> Result<()> {
        crate::fock::check_cutoff(self.cutoff)?;
        if self.layers.is_empty() {
            return Err(Error::InvalidParameter("network has no layers".into()));
        }
        if let Some(l) = self.layers.iter().position(|l| l.p != self.p) {
            return Err(Error::InvalidParameter(format!("layer {l} has a different mode count")));
        }
        if self.success_loop == 0 {
            return Err(Error::InvalidParameter("success loop index starts at 1".into()));
        }
        if !(self.hbar > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "hbar must be positive, got {}",
                self.hbar
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let net: Network = serde_json::from_str(text)?;
        net.validate()?;
        Ok(net)
    }

    fn nonlin_config(&self, s: f64) -> NonlinConfig {
        NonlinConfig {
            alpha: self.alpha,
            s,
            detector: self.detector,
            ..NonlinConfig::default()
        }
    }

    /// Builds every gate and Kraus matrix for the given parameters.
    pub fn compile(&self, params: &ParamVector) -> Result<CompiledNetwork> {
        self.validate()?;
        params.check(self)?;
        let layers = self
            .layers
            .iter()
            .enumerate()
            .map(|(l, spec)| self.compile_layer(spec, params.layer(l)).map_err(|e| e.in_layer(l)))
            .collect::<Result<Vec<_>>>()?;
        Ok(CompiledNetwork {
            layers,
            p: self.p,
            hbar: self.hbar,
            class_readout: self.class_readout,
            leakage_budget: self.leakage_budget,
        })
    }

    pub fn compile_layer(&self, spec: &LayerSpec, values: &[f64]) -> Result<CompiledLayer> {
        if values.len() != spec.param_count {
            return Err(Error::shape(spec.param_count, values.len()));
        }
        let d = self.cutoff;
        let mut ops = Vec::with_capacity(spec.gates.len());
        for gate in &spec.gates {
            let v = |k: usize| values[gate.slots[k]];
            let op = match gate.kind {
                GateKind::BS => Op::Unitary {
                    modes: gate.modes.clone(),
                    matrix: beamsplitter(v(0), v(1), d)?.matrix,
                },
                GateKind::R => Op::Diagonal {
                    mode: gate.modes[0],
                    phases: (0..d).map(|n| C64::from_polar(1.0, n as f64 * v(0))).collect(),
                },
                GateKind::S => Op::Unitary {
                    modes: gate.modes.clone(),
                    matrix: squeezing(v(0), 0.0, d)?.matrix,
                },
                GateKind::D => Op::Unitary {
                    modes: gate.modes.clone(),
                    matrix: displacement(C64::new(v(0), v(1)), d, self.hbar)?.matrix,
                },
                GateKind::CX => {
                    let config = self.nonlin_config(v(0));
                    Op::Nonlinear {
                        mode: gate.modes[0],
                        kraus: conditioned_kraus(&config, self.success_loop, d, self.hbar)?.matrix,
                        config,
                    }
                }
                GateKind::S2 => return Err(Error::InvalidParameter("two-mode squeezers are not layer gates".into())),
            };
            ops.push(op);
        }
        Ok(CompiledLayer { ops })
    }

    pub fn forward(&self, params: &ParamVector, input: &FockState, readout: ReadoutKind) -> Result<NetworkOutput> {
        self.compile(params)?.run(input, readout)
    }
}

#[derive(Debug, Clone)]
pub enum Op {
    Unitary {
        modes: Vec<usize>,
        matrix: CMatrix,
    },
    Diagonal {
        mode: usize,
        phases: Vec<C64>,
    },
    Nonlinear {
        mode: usize,
        kraus: CMatrix,
        config: NonlinConfig,
    },
}

#[derive(Debug, Clone)]
pub struct CompiledLayer {
    pub ops: Vec<Op>,
}

impl CompiledLayer {
    /// Applies the layer with post-selection; returns the product of outcome probabilities.
    fn apply(&self, state: &mut FockState, leakage: &mut LeakageMonitor, layer: usize) -> Result<f64> {
        let mut success = 1.0;
        for op in &self.ops {
            match op {
                Op::Unitary { modes, matrix } => {
                    state.apply_matrix_mut(matrix, modes)?;
                    leakage.record(state, modes, || format!("layer {layer}"))?;
                }
                Op::Diagonal { mode, phases } => state.apply_diagonal_mut(phases, *mode)?,
                Op::Nonlinear { mode, kraus, .. } => {
                    let before = state.norm_sqr();
                    state.apply_matrix_mut(kraus, &[*mode])?;
                    let p = state.norm_sqr() / before;
                    if !(p >= crate::fock::MIN_OUTCOME_PROBABILITY) {
                        return Err(Error::ImpossibleOutcome { probability: p });
                    }
                    success *= p;
                    let tracked = state.norm_tracked() * p;
                    state.normalize()?;
                    state.set_norm_tracked(tracked);
                }
            }
        }
        Ok(success)
    }

    /// Same gates, but nonlinear elements are sampled until success.
    fn apply_rus<R: Rng + ?Sized>(&self, state: &mut FockState, hbar: f64, rng: &mut R) -> Result<Vec<usize>> {
        let mut loops = Vec::new();
        for op in &self.ops {
            match op {
                Op::Unitary { modes, matrix } => state.apply_matrix_mut(matrix, modes)?,
                Op::Diagonal { mode, phases } => state.apply_diagonal_mut(phases, *mode)?,
                Op::Nonlinear { mode, config, .. } => {
                    let (next, used) = apply_element_rus(state, *mode, config, rng, hbar)?;
                    *state = next;
                    loops.push(used);
                }
            }
        }
        Ok(loops)
    }
}

/// A network with all gate matrices built for one parameter vector.
#[derive(Debug, Clone)]
pub struct CompiledNetwork {
    pub layers: Vec<CompiledLayer>,
    pub p: usize,
    pub hbar: f64,
    pub class_readout: ClassReadout,
    pub leakage_budget: Option<f64>,
}

impl CompiledNetwork {
    fn check_input(&self, input: &FockState) -> Result<()> {
        if input.modes() != self.p {
            return Err(Error::shape(
                format!("{}-mode input", self.p),
                format!("{}-mode input", input.modes()),
            ));
        }
        Ok(())
    }

    pub fn run(&self, input: &FockState, readout: ReadoutKind) -> Result<NetworkOutput> {
        self.run_from(0, input, readout)
    }

    /// Runs layers `start..` on `input`; earlier layers are skipped.
    pub fn run_from(&self, start: usize, input: &FockState, readout: ReadoutKind) -> Result<NetworkOutput> {
        self.check_input(input)?;
        let mut state = input.clone();
        state.normalize()?;
        let mut leakage = LeakageMonitor::with_budget(self.leakage_budget);
        let mut success = 1.0;
        for (l, layer) in self.layers.iter().enumerate().skip(start) {
            success *= layer.apply(&mut state, &mut leakage, l).map_err(|e| e.in_layer(l))?;
        }
        let readout = self.readout(&state, readout)?;
        Ok(NetworkOutput {
            state,
            readout,
            success_probability: success,
            leakage: leakage.accumulated,
        })
    }

    /// Applies layer `layer` alone; returns its post-selection probability.
    pub fn apply_layer(&self, layer: usize, state: &mut FockState) -> Result<f64> {
        let mut leakage = LeakageMonitor::with_budget(self.leakage_budget);
        self.layers[layer]
            .apply(state, &mut leakage, layer)
            .map_err(|e| e.in_layer(layer))
    }

    /// Samples every nonlinear element until success; returns per-layer round counts.
    pub fn run_rus<R: Rng + ?Sized>(&self, input: &FockState, rng: &mut R) -> Result<(FockState, Vec<Vec<usize>>)> {
        self.check_input(input)?;
        let mut state = input.clone();
        state.normalize()?;
        let mut loops = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            loops.push(layer.apply_rus(&mut state, self.hbar, rng).map_err(|e| e.in_layer(l))?);
        }
        Ok((state, loops))
    }

    pub fn readout(&self, state: &FockState, kind: ReadoutKind) -> Result<Readout> {
        Ok(match kind {
            ReadoutKind::None => Readout::None,
            ReadoutKind::QExpectations => Readout::QExpectations(
                (0..self.p)
                    .map(|m| q_expectation(state, m, self.hbar))
                    .collect::<Result<_>>()?,
            ),
            ReadoutKind::ClassProbabilities => {
                Readout::ClassProbabilities(class_probabilities(state, self.class_readout))
            }
        })
    }
}

/// Per-mode click probabilities of a normalized state.
pub fn class_probabilities(state: &FockState, readout: ClassReadout) -> Vec<f64> {
    let d = state.cutoff();
    let m = state.modes();
    let norm = state.norm_sqr();
    let mut probs = vec![0.0; m];
    for (idx, z) in state.amplitudes().iter().enumerate() {
        let w = z.norm_sqr();
        if w == 0.0 {
            continue;
        }
        let mut rem = idx;
        let mut occupied = 0usize;
        let mut which = 0;
        for mode in 0..m {
            if rem % d != 0 {
                occupied += 1;
                which = mode;
                if readout == ClassReadout::Marginal {
                    probs[mode] += w;
                }
            }
            rem /= d;
        }
        if readout == ClassReadout::Exclusive && occupied == 1 {
            probs[which] += w;
        }
    }
    probs.iter().map(|p| (p / norm).clamp(0.0, 1.0)).collect()
}

/// Flat trainable parameters for a network, laid out layer after layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub values: Vec<f64>,
    pub offsets: Vec<usize>,
}

impl ParamVector {
    pub fn zeros(network: &Network) -> Self {
        Self::from_values(network, vec![0.0; network.param_count()]).expect("zero vector fits")
    }

    pub fn from_values(network: &Network, values: Vec<f64>) -> Result<Self> {
        let mut offsets = Vec::with_capacity(network.layers.len() + 1);
        let mut acc = 0;
        offsets.push(0);
        for l in &network.layers {
            acc += l.param_count;
            offsets.push(acc);
        }
        let pv = Self { values, offsets };
        pv.check(network)?;
        Ok(pv)
    }

    /// Uniform initialization in `[-half_width, half_width]`.
    pub fn random(network: &Network, seed: u64, half_width: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..network.param_count())
            .map(|_| rng.random_range(-half_width..=half_width))
            .collect();
        Self::from_values(network, values).expect("length matches")
    }

    pub fn check(&self, network: &Network) -> Result<()> {
        let expected = network.param_count();
        if self.values.len() != expected || self.offsets.last() != Some(&expected) {
            return Err(Error::shape(expected, self.values.len()));
        }
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("parameter {i}")));
        }
        Ok(())
    }

    pub fn layer(&self, l: usize) -> &[f64] {
        &self.values[self.offsets[l]..self.offsets[l + 1]]
    }

    pub fn index(&self, layer: usize, slot: usize) -> usize {
        self.offsets[layer] + slot
    }

    pub fn layer_of(&self, index: usize) -> usize {
        self.offsets.partition_point(|&o| o <= index) - 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_count_law() {
        for p in 1..=6 {
            assert_eq!(standard_layer(p).unwrap().param_count, 7 * p - 2);
        }
        assert_eq!(standard_layer(2).unwrap().param_count, 12);
        assert_eq!(standard_layer(4).unwrap().param_count, 26);
    }

    #[test]
    fn every_slot_referenced_once() {
        let l = standard_layer(3).unwrap();
        let mut seen = vec![0; l.param_count];
        for g in &l.gates {
            for &s in &g.slots {
                seen[s] += 1;
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn zero_parameters_leave_vacuum() {
        let net = Network::standard(1, 3, 8).unwrap();
        let out = net
            .forward(
                &ParamVector::zeros(&net),
                &FockState::vacuum(1, 8).unwrap(),
                ReadoutKind::QExpectations,
            )
            .unwrap();
        assert!((out.state.amplitudes()[0].norm() - 1.0).abs() < 1e-12);
        match out.readout {
            Readout::QExpectations(q) => assert!(q[0].abs() < 1e-12),
            other => panic!("{other:?}"),
        }
        assert!((out.success_probability - (-3f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn displacement_only_layer() {
        let mut net = Network::standard(1, 1, 20).unwrap();
        net.leakage_budget = None;
        let mut pv = ParamVector::zeros(&net);
        // slots: R, S, D re, D im, CX
        pv.values[2] = 0.4;
        let out = net
            .forward(&pv, &FockState::vacuum(1, 20).unwrap(), ReadoutKind::QExpectations)
            .unwrap();
        match out.readout {
            Readout::QExpectations(q) => assert!((q[0] - 2.0 * 0.4).abs() < 1e-9),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn squashing_bounds() {
        let l = standard_layer(2).unwrap();
        let enc = encode_classical(&[50.0; 12], &l, &SquashSpec::default()).unwrap();
        for (v, k) in enc.iter().zip(&l.slot_kinds) {
            match k {
                SlotKind::Squeeze => assert!(*v <= 1.4),
                SlotKind::BsPhi | SlotKind::Rotation => assert_eq!(*v, 50.0),
                _ => assert!(*v <= 1.5),
            }
        }
        assert_eq!(
            encode_classical(&[0.0; 12], &l, &SquashSpec::default()).unwrap(),
            vec![0.0; 12]
        );
        assert!(encode_classical(&[0.0; 11], &l, &SquashSpec::default()).is_err());
    }

    #[test]
    fn class_probabilities_from_enumeration() {
        let mut net = Network::standard(2, 2, 5).unwrap();
        net.leakage_budget = None;
        let pv = ParamVector::random(&net, 4, 0.5);
        let out = net
            .forward(&pv, &FockState::vacuum(2, 5).unwrap(), ReadoutKind::ClassProbabilities)
            .unwrap();
        let probs = match out.readout {
            Readout::ClassProbabilities(p) => p,
            other => panic!("{other:?}"),
        };
        // enumerate all joint Fock outcomes
        let mut joint = vec![vec![0.0; 5]; 5];
        for n0 in 0..5 {
            for n1 in 0..5 {
                joint[n0][n1] = out.state.amplitude(&[n0, n1]).norm_sqr();
            }
        }
        let total: f64 = joint.iter().flatten().sum();
        assert!((total - 1.0).abs() < 1e-8);
        let p0: f64 = (1..5).map(|n| joint[n][0]).sum();
        let p1: f64 = (1..5).map(|n| joint[0][n]).sum();
        assert!((probs[0] - p0).abs() < 1e-12 && (probs[1] - p1).abs() < 1e-12);
        let marg = class_probabilities(&out.state, ClassReadout::Marginal);
        let m0: f64 = (1..5)
            .flat_map(|a| (0..5).map(move |b| (a, b)))
            .map(|(a, b)| joint[a][b])
            .sum();
        assert!((marg[0] - m0).abs() < 1e-12);
        assert!(probs.iter().chain(&marg).all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn success_probability_matches_tracked_norm() {
        let mut net = Network::standard(2, 3, 5).unwrap();
        net.leakage_budget = None;
        let pv = ParamVector::random(&net, 9, 0.3);
        let out = net
            .forward(&pv, &FockState::vacuum(2, 5).unwrap(), ReadoutKind::None)
            .unwrap();
        assert!((out.success_probability - out.state.norm_tracked()).abs() < 1e-10);
        assert!(out.success_probability > 0.0 && out.success_probability <= 1.0);
    }

    #[test]
    fn permutation_equivariance_at_zero() {
        let net = Network::standard(2, 2, 4).unwrap();
        let pv = ParamVector::zeros(&net);
        let input = FockState::basis(4, &[1, 0]).unwrap();
        let swapped = FockState::basis(4, &[0, 1]).unwrap();
        let a = net.forward(&pv, &input, ReadoutKind::ClassProbabilities).unwrap();
        let b = net.forward(&pv, &swapped, ReadoutKind::ClassProbabilities).unwrap();
        match (a.readout, b.readout) {
            (Readout::ClassProbabilities(a), Readout::ClassProbabilities(b)) => {
                assert!((a[0] - b[1]).abs() < 1e-12 && (a[1] - b[0]).abs() < 1e-12)
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn leakage_budget_aborts_with_layer_index() {
        let net = Network::standard(1, 2, 4).unwrap();
        let mut pv = ParamVector::zeros(&net);
        let idx = pv.index(1, 2);
        pv.values[idx] = 1.5;
        let err = net
            .forward(&pv, &FockState::vacuum(1, 4).unwrap(), ReadoutKind::None)
            .unwrap_err();
        assert!(matches!(err, Error::Layer { index: 1, ref source } if matches!(**source, Error::Leakage { .. })));
    }

    #[test]
    fn json_round_trip_and_layout() {
        let net = Network::standard(2, 3, 6).unwrap();
        let back = Network::from_json(&net.to_json().unwrap()).unwrap();
        assert_eq!(back, net);
        let pv = ParamVector::zeros(&net);
        assert_eq!(pv.layer_of(11), 0);
        assert_eq!(pv.layer_of(12), 1);
        assert_eq!(pv.layer_of(35), 2);
    }

    #[test]
    fn forward_is_deterministic() {
        let mut net = Network::standard(1, 2, 6).unwrap();
        net.leakage_budget = None;
        let pv = ParamVector::random(&net, 1, 0.4);
        let v = FockState::vacuum(1, 6).unwrap();
        assert_eq!(
            net.forward(&pv, &v, ReadoutKind::QExpectations).unwrap(),
            net.forward(&pv, &v, ReadoutKind::QExpectations).unwrap()
        );
    }
}
