//! Cost functions, finite-difference gradients, Nelder-Mead and Adam.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{apply_gate, FockState, C64};
use crate::gates::displacement;
use crate::layers::{Network, ParamVector, Readout, ReadoutKind};
use crate::meas::{fidelity, wigner, wigner_overlap, GridSpec};

/// A deterministic scalar function of a flat parameter vector.
pub trait Objective: Sync {
    fn dim(&self) -> usize;
    fn evaluate(&self, x: &[f64]) -> Result<f64>;
    fn name(&self) -> &str {
        "objective"
    }
}

/// Wraps a closure as an [`Objective`].
pub struct FnObjective<F> {
    pub dim: usize,
    pub name: String,
    pub f: F,
}

impl<F> FnObjective<F>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    pub fn new(dim: usize, name: impl Into<String>, f: F) -> Self {
        Self {
            dim,
            name: name.into(),
            f,
        }
    }
}

impl<F> Objective for FnObjective<F>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn evaluate(&self, x: &[f64]) -> Result<f64> {
        (self.f)(x)
    }

    fn name(&self) -> &str {
        &self.name
    }
}

/// `|F - 1|` between the network output from vacuum and a single-mode target.
pub fn cost_state_prep(params: &ParamVector, network: &Network, target: &FockState) -> Result<f64> {
    let out = network.forward(params, &FockState::vacuum(1, network.cutoff)?, ReadoutKind::None)?;
    Ok((fidelity(target, &out.state)? - 1.0).abs())
}

/// The same cost estimated through the Wigner-overlap formula.
pub fn cost_state_prep_wigner(
    params: &ParamVector,
    network: &Network,
    target: &FockState,
    grid: &GridSpec,
) -> Result<f64> {
    let out = network.forward(params, &FockState::vacuum(1, network.cutoff)?, ReadoutKind::None)?;
    let wt = wigner(target, grid, network.hbar)?;
    let wo = wigner(&out.state, grid, network.hbar)?;
    Ok((wigner_overlap(&wt, &wo)? - 1.0).abs())
}

pub struct StatePrepObjective {
    pub network: Network,
    pub target: FockState,
}

impl Objective for StatePrepObjective {
    fn dim(&self) -> usize {
        self.network.param_count()
    }

    fn evaluate(&self, x: &[f64]) -> Result<f64> {
        cost_state_prep(
            &ParamVector::from_values(&self.network, x.to_vec())?,
            &self.network,
            &self.target,
        )
    }

    fn name(&self) -> &str {
        "state_prep"
    }
}

/// `D(x)|0>` on a single mode.
pub fn encode_input(x: f64, cutoff: usize, hbar: f64) -> Result<FockState> {
    apply_gate(
        &FockState::vacuum(1, cutoff)?,
        &displacement(C64::new(x, 0.0), cutoff, hbar)?,
        &[0],
    )
}

/// Mean squared error between `f_i` and `<q>` of the network output for `D(x_i)|0>`.
pub struct CurveFitObjective {
    pub network: Network,
    pub inputs: Vec<FockState>,
    pub targets: Vec<f64>,
}

impl CurveFitObjective {
    pub fn new(network: Network, xs: &[f64], fs: &[f64]) -> Result<Self> {
        if xs.is_empty() || xs.len() != fs.len() {
            return Err(Error::InvalidDataset(format!(
                "{} inputs for {} targets",
                xs.len(),
                fs.len()
            )));
        }
        let inputs = xs
            .iter()
            .map(|&x| encode_input(x, network.cutoff, network.hbar))
            .collect::<Result<_>>()?;
        Ok(Self {
            network,
            inputs,
            targets: fs.to_vec(),
        })
    }

    /// `<q>` for every input.
    pub fn predictions(&self, params: &ParamVector) -> Result<Vec<f64>> {
        let compiled = self.network.compile(params)?;
        self.inputs
            .iter()
            .map(|s| match compiled.run(s, ReadoutKind::QExpectations)?.readout {
                Readout::QExpectations(q) => Ok(q[0]),
                _ => unreachable!("q readout requested"),
            })
            .collect()
    }

    pub fn cost(&self, params: &ParamVector) -> Result<f64> {
        let preds = self.predictions(params)?;
        Ok(cost_mse(&preds, &self.targets))
    }

    /// Cost and central-difference gradient, reusing states across layers.
    pub fn cost_and_gradient(&self, params: &ParamVector, h: f64) -> Result<(f64, Vec<f64>)> {
        layered_fd_gradient(
            &self.network,
            params,
            &self.inputs,
            ReadoutKind::QExpectations,
            |outs| {
                let preds: Vec<f64> = outs
                    .iter()
                    .map(|r| match r {
                        Readout::QExpectations(q) => q[0],
                        _ => unreachable!("q readout requested"),
                    })
                    .collect();
                Ok(cost_mse(&preds, &self.targets))
            },
            h,
        )
    }
}

impl Objective for CurveFitObjective {
    fn dim(&self) -> usize {
        self.network.param_count()
    }

    fn evaluate(&self, x: &[f64]) -> Result<f64> {
        self.cost(&ParamVector::from_values(&self.network, x.to_vec())?)
    }

    fn name(&self) -> &str {
        "curve_fit"
    }
}

/// Central-difference gradient of `loss` over every parameter of `network`.
///
/// `loss` maps the readouts of all `inputs` to a scalar. Perturbing a slot in
/// layer `l` only recompiles that layer and reruns from the cached states
/// entering it. Returns the unperturbed loss and the gradient.
pub fn layered_fd_gradient<L>(
    network: &Network,
    params: &ParamVector,
    inputs: &[FockState],
    readout: ReadoutKind,
    loss: L,
    h: f64,
) -> Result<(f64, Vec<f64>)>
where
    L: Fn(&[Readout]) -> Result<f64> + Sync,
{
    if !(h > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    let base = network.compile(params)?;
    let depth = base.layers.len();
    // prefix[l][i]: state of input i entering layer l
    let mut prefix: Vec<Vec<FockState>> = Vec::with_capacity(depth + 1);
    let mut current: Vec<FockState> = inputs
        .iter()
        .map(|s| {
            let mut s = s.clone();
            s.normalize()?;
            Ok(s)
        })
        .collect::<Result<_>>()?;
    for l in 0..depth {
        let next = current
            .iter()
            .map(|s| {
                let mut s = s.clone();
                base.apply_layer(l, &mut s)?;
                Ok(s)
            })
            .collect::<Result<Vec<_>>>()?;
        prefix.push(std::mem::replace(&mut current, next));
    }
    let outputs = current
        .iter()
        .map(|s| base.readout(s, readout))
        .collect::<Result<Vec<_>>>()?;
    let value = loss(&outputs)?;
    let slots: Vec<(usize, usize)> = (0..depth)
        .flat_map(|l| (0..params.layer(l).len()).map(move |k| (l, k)))
        .collect();
    let grad = slots
        .par_iter()
        .map(|&(l, k)| {
            let eval = |delta: f64| -> Result<f64> {
                let mut values = params.layer(l).to_vec();
                values[k] += delta;
                let mut net = base.clone();
                net.layers[l] = network.compile_layer(&network.layers[l], &values)?;
                let outs = prefix[l]
                    .iter()
                    .map(|s| {
                        let mut s = s.clone();
                        for j in l..depth {
                            net.apply_layer(j, &mut s)?;
                        }
                        net.readout(&s, readout)
                    })
                    .collect::<Result<Vec<_>>>()?;
                loss(&outs)
            };
            let (fp, fm) = (eval(h)?, eval(-h)?);
            if !fp.is_finite() || !fm.is_finite() {
                return Err(Error::NonFinite(format!("loss at layer {l} slot {k}")));
            }
            Ok((fp - fm) / (2.0 * h))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((value, grad))
}

/// `(1/N) sum (f_i - q_i)^2`.
pub fn cost_mse(predictions: &[f64], targets: &[f64]) -> f64 {
    predictions
        .iter()
        .zip(targets)
        .map(|(q, f)| (f - q).powi(2))
        .sum::<f64>()
        / targets.len() as f64
}

/// `sum_i (1 - p_i)^2` over the probabilities of the correct classes.
pub fn cost_classification(correct_class_probabilities: &[f64]) -> f64 {
    correct_class_probabilities.iter().map(|p| (1.0 - p).powi(2)).sum()
}

/// Default central-difference step.
pub const FD_STEP: f64 = 1e-4;

/// Central-difference gradient, coordinates evaluated in parallel.
pub fn fd_gradient(objective: &dyn Objective, x: &[f64], h: f64) -> Result<Vec<f64>> {
    if !(h > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    (0..x.len())
        .into_par_iter()
        .map(|k| {
            let mut xp = x.to_vec();
            xp[k] += h;
            let mut xm = x.to_vec();
            xm[k] -= h;
            let (fp, fm) = (objective.evaluate(&xp)?, objective.evaluate(&xm)?);
            if !fp.is_finite() || !fm.is_finite() {
                return Err(Error::NonFinite(format!("objective at coordinate {k}")));
            }
            Ok((fp - fm) / (2.0 * h))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Tolerance,
    MaxEvaluations,
    MaxSteps,
    NonFinite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub evaluations: usize,
    pub cost: f64,
    pub learning_rate: f64,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerTrace {
    pub rows: Vec<TraceRow>,
    pub reason: Option<StopReason>,
    /// Parameter snapshots every `snapshot_every` steps.
    pub snapshots: Vec<(usize, Vec<f64>)>,
    pub snapshot_every: usize,
    pub evaluations: usize,
}

impl OptimizerTrace {
    fn new(snapshot_every: usize) -> Self {
        Self {
            rows: Vec::new(),
            reason: None,
            snapshots: Vec::new(),
            snapshot_every,
            evaluations: 0,
        }
    }

    fn push(&mut self, step: usize, cost: f64, learning_rate: f64, start: Instant, x: &[f64]) {
        self.rows.push(TraceRow {
            step,
            evaluations: self.evaluations,
            cost,
            learning_rate,
            elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
        });
        if self.snapshot_every > 0 && step.is_multiple_of(self.snapshot_every) {
            self.snapshots.push((step, x.to_vec()));
        }
    }

    pub fn final_cost(&self) -> Option<f64> {
        self.rows.last().map(|r| r.cost)
    }

    /// Rows `step,cost,learning_rate,elapsed_ms,evaluations`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["step", "cost", "learning_rate", "elapsed_ms", "evaluations"])?;
        for r in &self.rows {
            w.write_record([
                r.step.to_string(),
                format!("{:?}", r.cost),
                format!("{:?}", r.learning_rate),
                format!("{:.3}", r.elapsed_ms),
                r.evaluations.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NelderMeadConfig {
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
    /// Stop when the spread of costs across the simplex falls below this
    /// and every vertex lies within `x_tolerance` of the best one.
    pub tolerance: f64,
    pub x_tolerance: f64,
    pub max_evaluations: usize,
    pub max_steps: usize,
    /// Edge length of the initial simplex.
    pub initial_step: f64,
    /// Rebuild the simplex around the best vertex this many times after convergence.
    pub restarts: usize,
    pub snapshot_every: usize,
}

impl Default for NelderMeadConfig {
    fn default() -> Self {
        Self {
            reflection: 1.0,
            expansion: 2.0,
            contraction: 0.5,
            shrink: 0.5,
            tolerance: 1e-6,
            x_tolerance: 1e-6,
            max_evaluations: 5000,
            max_steps: usize::MAX,
            initial_step: 0.1,
            restarts: 0,
            snapshot_every: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub cost: f64,
    pub trace: OptimizerTrace,
}

/// Downhill simplex minimization. Failed evaluations count as `+inf`.
///
/// Never evaluates the objective more than `max_evaluations` times.
pub fn nelder_mead(objective: &dyn Objective, x0: &[f64], config: &NelderMeadConfig) -> Result<OptimResult> {
    let n = x0.len();
    if n == 0 || n != objective.dim() {
        return Err(Error::shape(objective.dim(), n));
    }
    let start = Instant::now();
    let mut trace = OptimizerTrace::new(config.snapshot_every);
    // past the budget every point is rejected without evaluating it
    let mut eval = |x: &[f64], trace: &mut OptimizerTrace| -> f64 {
        if trace.evaluations >= config.max_evaluations {
            return f64::INFINITY;
        }
        trace.evaluations += 1;
        objective
            .evaluate(x)
            .ok()
            .filter(|v| v.is_finite())
            .unwrap_or(f64::INFINITY)
    };
    let build =
        |centre: &[f64], trace: &mut OptimizerTrace, eval: &mut dyn FnMut(&[f64], &mut OptimizerTrace) -> f64| {
            let mut simplex = vec![centre.to_vec()];
            for k in 0..n {
                let mut v = centre.to_vec();
                v[k] += config.initial_step;
                simplex.push(v);
            }
            let costs: Vec<f64> = simplex.iter().map(|v| eval(v, trace)).collect();
            (simplex, costs)
        };
    let (mut simplex, mut costs) = build(x0, &mut trace, &mut eval);
    let mut restarts_left = config.restarts;
    let mut step = 0;
    let mut best_at_restart = f64::INFINITY;
    loop {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| costs[a].total_cmp(&costs[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        costs = order.iter().map(|&i| costs[i]).collect();
        trace.push(step, costs[0], 0.0, start, &simplex[0]);
        let diameter = simplex[1..]
            .iter()
            .flat_map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if costs[n] - costs[0] < config.tolerance && diameter < config.x_tolerance {
            let improved = best_at_restart - costs[0] > config.tolerance;
            if restarts_left > 0 && improved && trace.evaluations + n < config.max_evaluations {
                restarts_left -= 1;
                best_at_restart = costs[0];
                let best = simplex[0].clone();
                (simplex, costs) = build(&best, &mut trace, &mut eval);
                continue;
            }
            trace.reason = Some(StopReason::Tolerance);
            break;
        }
        if trace.evaluations >= config.max_evaluations {
            trace.reason = Some(StopReason::MaxEvaluations);
            break;
        }
        if step >= config.max_steps {
            trace.reason = Some(StopReason::MaxSteps);
            break;
        }
        step += 1;
        let centroid: Vec<f64> = (0..n)
            .map(|k| simplex[..n].iter().map(|v| v[k]).sum::<f64>() / n as f64)
            .collect();
        let toward = |coef: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n])
                .map(|(c, w)| c + coef * (c - w))
                .collect()
        };
        let xr = toward(config.reflection);
        let fr = eval(&xr, &mut trace);
        if fr < costs[0] {
            let xe = toward(config.reflection * config.expansion);
            let fe = eval(&xe, &mut trace);
            if fe < fr {
                simplex[n] = xe;
                costs[n] = fe;
            } else {
                simplex[n] = xr;
                costs[n] = fr;
            }
            continue;
        }
        if fr < costs[n - 1] {
            simplex[n] = xr;
            costs[n] = fr;
            continue;
        }
        let xc = if fr < costs[n] {
            toward(config.reflection * config.contraction)
        } else {
            toward(-config.contraction)
        };
        let fc = eval(&xc, &mut trace);
        if fc < fr.min(costs[n]) {
            simplex[n] = xc;
            costs[n] = fc;
            continue;
        }
        let best = simplex[0].clone();
        for i in 1..=n {
            simplex[i] = best
                .iter()
                .zip(&simplex[i])
                .map(|(b, v)| b + config.shrink * (v - b))
                .collect();
            costs[i] = eval(&simplex[i], &mut trace);
        }
    }
    Ok(OptimResult {
        x: simplex[0].clone(),
        cost: costs[0],
        trace,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Multiply the learning rate by `decay_factor` every `decay_every` steps.
    pub decay_factor: f64,
    pub decay_every: Option<usize>,
    pub steps: usize,
    pub snapshot_every: usize,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            decay_factor: 0.9,
            decay_every: None,
            steps: 1000,
            snapshot_every: 0,
        }
    }
}

impl AdamConfig {
    pub fn learning_rate_at(&self, step: usize) -> f64 {
        match self.decay_every {
            Some(every) if every > 0 => self.learning_rate * self.decay_factor.powi((step / every) as i32),
            _ => self.learning_rate,
        }
    }
}

/// Adam state for callers driving their own loop (e.g. minibatches).
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: usize,
}

impl Adam {
    pub fn new(config: AdamConfig, dim: usize) -> Self {
        Self {
            config,
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
        }
    }

    pub fn steps_taken(&self) -> usize {
        self.t
    }

    /// One descent step `x -= lr m_hat / (sqrt(v_hat) + eps)`.
    pub fn step(&mut self, x: &mut [f64], grad: &[f64]) -> Result<f64> {
        if grad.len() != x.len() || x.len() != self.m.len() {
            return Err(Error::shape(self.m.len(), grad.len()));
        }
        if let Some(k) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("gradient component {k}")));
        }
        let c = &self.config;
        let lr = c.learning_rate_at(self.t);
        self.t += 1;
        let bc1 = 1.0 - c.beta1.powi(self.t as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t as i32);
        for k in 0..x.len() {
            self.m[k] = c.beta1 * self.m[k] + (1.0 - c.beta1) * grad[k];
            self.v[k] = c.beta2 * self.v[k] + (1.0 - c.beta2) * grad[k] * grad[k];
            let m_hat = self.m[k] / bc1;
            let v_hat = self.v[k] / bc2;
            x[k] -= lr * m_hat / (v_hat.sqrt() + c.epsilon);
        }
        Ok(lr)
    }
}

/// Full-batch Adam on `grad_fn`, which returns `(cost, gradient)`.
///
/// A non-finite cost or gradient stops the run; the trace records why and
/// the last finite parameters are returned.
pub fn adam<G>(mut grad_fn: G, x0: &[f64], config: &AdamConfig) -> Result<OptimResult>
where
    G: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let start = Instant::now();
    let mut trace = OptimizerTrace::new(config.snapshot_every);
    let mut opt = Adam::new(*config, x0.len());
    let mut x = x0.to_vec();
    let mut best = (f64::INFINITY, x.clone());
    for step in 0..config.steps {
        let (cost, grad) = grad_fn(&x)?;
        trace.evaluations += 1;
        let lr = config.learning_rate_at(step);
        if !cost.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            trace.reason = Some(StopReason::NonFinite);
            break;
        }
        trace.push(step, cost, lr, start, &x);
        if cost < best.0 {
            best = (cost, x.clone());
        }
        opt.step(&mut x, &grad)?;
    }
    if trace.reason.is_none() {
        let (cost, _) = grad_fn(&x)?;
        trace.evaluations += 1;
        if cost.is_finite() {
            trace.push(config.steps, cost, config.learning_rate_at(config.steps), start, &x);
            if cost <= best.0 {
                best = (cost, x.clone());
            }
        }
        trace.reason = Some(StopReason::MaxSteps);
    }
    Ok(OptimResult {
        x: best.1,
        cost: best.0,
        trace,
    })
}

/// Adam driven by central finite differences of `objective`.
pub fn adam_fd(objective: &dyn Objective, x0: &[f64], config: &AdamConfig, h: f64) -> Result<OptimResult> {
    adam(
        |x| Ok((objective.evaluate(x)?, fd_gradient(objective, x, h)?)),
        x0,
        config,
    )
}
