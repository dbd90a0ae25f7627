//! Truncated Fock-space states and single-mode operator algebra.
//!
//! A [`FockState`] over `M` modes with cutoff `D` stores `D^M` complex
//! amplitudes. Mode 0 is the fastest-varying index (little-endian), so the
//! flat index of the occupation `(n_0, n_1, ..., n_{M-1})` is
//! `n_0 + D n_1 + D^2 n_2 + ...`. Gates acting on `k` modes use the same
//! convention locally: the first listed target mode varies fastest.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gates::GateMatrix;

pub type C64 = Complex64;
pub type CMatrix = DMatrix<Complex64>;

/// Default reduced Planck constant, matching the usual photonic-simulator convention.
pub const DEFAULT_HBAR: f64 = 2.0;

/// Outcomes with a probability below this are treated as impossible.
pub const MIN_OUTCOME_PROBABILITY: f64 = 1e-14;

const ZERO: C64 = C64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorLabel {
    Annihilation,
    Creation,
    Number,
    Position,
    Momentum,
    Custom,
}

/// A dense operator on a single truncated mode.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeOperator {
    pub cutoff: usize,
    pub matrix: CMatrix,
    pub hermitian: bool,
    pub label: OperatorLabel,
}

impl ModeOperator {
    pub fn custom(matrix: CMatrix, hermitian: bool) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || matrix.nrows() < 2 {
            return Err(Error::shape(
                "square matrix with at least 2 levels",
                format!("{}x{}", matrix.nrows(), matrix.ncols()),
            ));
        }
        Ok(Self {
            cutoff: matrix.nrows(),
            matrix,
            hermitian,
            label: OperatorLabel::Custom,
        })
    }

    /// `<psi|O|psi>` for a single-mode amplitude vector.
    pub fn expectation(&self, amplitudes: &[C64]) -> C64 {
        let d = self.cutoff;
        let mut acc = ZERO;
        for i in 0..d {
            let mut row = ZERO;
            for j in 0..d {
                row += self.matrix[(i, j)] * amplitudes[j];
            }
            acc += amplitudes[i].conj() * row;
        }
        acc
    }
}

/// Spectral decomposition of the truncated position quadrature.
///
/// Its eigenvalues are the Gauss-Hermite nodes scaled by `sqrt(hbar)`, so
/// functions of `q` built from it act exactly like multiplication operators
/// on the truncated space.
#[derive(Debug, Clone)]
pub struct QuadratureEigen {
    pub values: Vec<f64>,
    /// Column `k` is the eigenvector for `values[k]`.
    pub vectors: DMatrix<f64>,
}

impl QuadratureEigen {
    fn new(cutoff: usize, hbar: f64) -> Self {
        let mut q = DMatrix::<f64>::zeros(cutoff, cutoff);
        let scale = (hbar / 2.0).sqrt();
        for n in 1..cutoff {
            let v = scale * (n as f64).sqrt();
            q[(n - 1, n)] = v;
            q[(n, n - 1)] = v;
        }
        let eig = SymmetricEigen::new(q);
        Self {
            values: eig.eigenvalues.iter().copied().collect(),
            vectors: eig.eigenvectors,
        }
    }

    /// Builds `f(q)` as a dense matrix: `V diag(f(lambda)) V^T`.
    pub fn function_of_q(&self, f: impl Fn(f64) -> f64) -> CMatrix {
        let d = self.values.len();
        let weights: Vec<f64> = self.values.iter().map(|&x| f(x)).collect();
        let mut out = CMatrix::zeros(d, d);
        for i in 0..d {
            for j in i..d {
                let mut acc = 0.0;
                for k in 0..d {
                    acc += self.vectors[(i, k)] * weights[k] * self.vectors[(j, k)];
                }
                out[(i, j)] = C64::new(acc, 0.0);
                out[(j, i)] = C64::new(acc, 0.0);
            }
        }
        out
    }
}

/// Ladder, number and quadrature operators for one cutoff and `hbar`.
#[derive(Debug)]
pub struct Operators {
    pub cutoff: usize,
    pub hbar: f64,
    pub a: ModeOperator,
    pub a_dag: ModeOperator,
    pub n: ModeOperator,
    pub q: ModeOperator,
    pub p: ModeOperator,
    pub q_eigen: QuadratureEigen,
}

/// Builds `{a, a^dagger, n, q, p}` with `q = sqrt(hbar/2)(a + a^dagger)` and
/// `p = i sqrt(hbar/2)(a^dagger - a)`.
pub fn make_operators(cutoff: usize, hbar: f64) -> Result<Operators> {
    check_cutoff(cutoff)?;
    if !(hbar > 0.0 && hbar.is_finite()) {
        return Err(Error::InvalidParameter(format!("hbar must be positive, got {hbar}")));
    }
    let mut a = CMatrix::zeros(cutoff, cutoff);
    for n in 1..cutoff {
        a[(n - 1, n)] = C64::new((n as f64).sqrt(), 0.0);
    }
    let a_dag = a.adjoint();
    let num = &a_dag * &a;
    let s = (hbar / 2.0).sqrt();
    let q = (&a + &a_dag) * C64::new(s, 0.0);
    let p = (&a_dag - &a) * C64::new(0.0, s);
    let op = |matrix, hermitian, label| ModeOperator {
        cutoff,
        matrix,
        hermitian,
        label,
    };
    Ok(Operators {
        cutoff,
        hbar,
        a: op(a, false, OperatorLabel::Annihilation),
        a_dag: op(a_dag, false, OperatorLabel::Creation),
        n: op(num, true, OperatorLabel::Number),
        q: op(q, true, OperatorLabel::Position),
        p: op(p, true, OperatorLabel::Momentum),
        q_eigen: QuadratureEigen::new(cutoff, hbar),
    })
}

type OperatorCache = HashMap<(usize, u64), Arc<Operators>>;

impl Operators {
    /// Process-wide cached operator set for `(cutoff, hbar)`.
    pub fn shared(cutoff: usize, hbar: f64) -> Result<Arc<Operators>> {
        static CACHE: OnceLock<Mutex<OperatorCache>> = OnceLock::new();
        let key = (cutoff, hbar.to_bits());
        let cache = CACHE.get_or_init(Default::default);
        if let Some(ops) = cache.lock().expect("operator cache poisoned").get(&key) {
            return Ok(Arc::clone(ops));
        }
        let ops = Arc::new(make_operators(cutoff, hbar)?);
        cache
            .lock()
            .expect("operator cache poisoned")
            .insert(key, Arc::clone(&ops));
        Ok(ops)
    }
}

pub(crate) fn check_cutoff(cutoff: usize) -> Result<()> {
    if cutoff < 2 {
        Err(Error::InvalidCutoff(cutoff))
    } else {
        Ok(())
    }
}

/// Pure state of `modes` truncated bosonic modes.
#[derive(Debug, Clone, PartialEq)]
pub struct FockState {
    modes: usize,
    cutoff: usize,
    amplitudes: Vec<C64>,
    norm_tracked: f64,
}

impl FockState {
    pub fn vacuum(modes: usize, cutoff: usize) -> Result<Self> {
        Self::basis(cutoff, &vec![0; modes])
    }

    /// The Fock basis state `|n_0, n_1, ...>`.
    pub fn basis(cutoff: usize, occupations: &[usize]) -> Result<Self> {
        check_cutoff(cutoff)?;
        if occupations.is_empty() {
            return Err(Error::InvalidTarget("a state needs at least one mode".into()));
        }
        if let Some(&n) = occupations.iter().find(|&&n| n >= cutoff) {
            return Err(Error::InvalidParameter(format!(
                "occupation {n} does not fit cutoff {cutoff}"
            )));
        }
        let len = checked_len(cutoff, occupations.len())?;
        let mut amplitudes = vec![ZERO; len];
        amplitudes[flat_index(cutoff, occupations)] = C64::new(1.0, 0.0);
        Ok(Self {
            modes: occupations.len(),
            cutoff,
            amplitudes,
            norm_tracked: 1.0,
        })
    }

    pub fn from_amplitudes(modes: usize, cutoff: usize, amplitudes: Vec<C64>) -> Result<Self> {
        check_cutoff(cutoff)?;
        if modes == 0 {
            return Err(Error::InvalidTarget("a state needs at least one mode".into()));
        }
        let len = checked_len(cutoff, modes)?;
        if amplitudes.len() != len {
            return Err(Error::shape(
                format!("{len} amplitudes ({cutoff}^{modes})"),
                amplitudes.len(),
            ));
        }
        if amplitudes.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("state amplitude".into()));
        }
        Ok(Self {
            modes,
            cutoff,
            amplitudes,
            norm_tracked: 1.0,
        })
    }

    pub fn single_mode(amplitudes: Vec<C64>) -> Result<Self> {
        let d = amplitudes.len();
        Self::from_amplitudes(1, d, amplitudes)
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amplitudes
    }

    /// Survival probability accumulated over post-selection events.
    pub fn norm_tracked(&self) -> f64 {
        self.norm_tracked
    }

    pub(crate) fn set_norm_tracked(&mut self, value: f64) {
        self.norm_tracked = value;
    }

    pub fn amplitude(&self, occupations: &[usize]) -> C64 {
        self.amplitudes[flat_index(self.cutoff, occupations)]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Rescales to unit norm and returns the previous norm.
    pub fn normalize(&mut self) -> Result<f64> {
        let norm = self.norm_sqr().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::NonFinite(format!("cannot normalize state with norm {norm}")));
        }
        let inv = 1.0 / norm;
        self.amplitudes.iter_mut().for_each(|z| *z *= inv);
        Ok(norm)
    }

    pub fn normalized(mut self) -> Result<Self> {
        self.normalize()?;
        Ok(self)
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &FockState) -> Result<C64> {
        self.check_same_shape(other)?;
        Ok(self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    pub(crate) fn check_same_shape(&self, other: &FockState) -> Result<()> {
        if self.modes != other.modes || self.cutoff != other.cutoff {
            return Err(Error::shape(
                format!("{} modes at cutoff {}", self.modes, self.cutoff),
                format!("{} modes at cutoff {}", other.modes, other.cutoff),
            ));
        }
        Ok(())
    }

    /// Appends the modes of `other` after those of `self`.
    pub fn tensor(&self, other: &FockState) -> Result<FockState> {
        if self.cutoff != other.cutoff {
            return Err(Error::shape(
                format!("cutoff {}", self.cutoff),
                format!("cutoff {}", other.cutoff),
            ));
        }
        let modes = self.modes + other.modes;
        checked_len(self.cutoff, modes)?;
        let mut amplitudes = Vec::with_capacity(self.amplitudes.len() * other.amplitudes.len());
        for b in &other.amplitudes {
            for a in &self.amplitudes {
                amplitudes.push(a * b);
            }
        }
        Ok(FockState {
            modes,
            cutoff: self.cutoff,
            amplitudes,
            norm_tracked: self.norm_tracked * other.norm_tracked,
        })
    }

    fn check_mode(&self, mode: usize) -> Result<()> {
        if mode >= self.modes {
            return Err(Error::InvalidTarget(format!(
                "mode {mode} out of range for a {}-mode state",
                self.modes
            )));
        }
        Ok(())
    }

    fn stride(&self, mode: usize) -> usize {
        self.cutoff.pow(mode as u32)
    }

    /// Unnormalized photon-number marginal of one mode.
    pub fn photon_marginal(&self, mode: usize) -> Result<Vec<f64>> {
        self.check_mode(mode)?;
        let d = self.cutoff;
        let stride = self.stride(mode);
        let mut probs = vec![0.0; d];
        for (idx, z) in self.amplitudes.iter().enumerate() {
            probs[(idx / stride) % d] += z.norm_sqr();
        }
        Ok(probs)
    }

    /// Population of the highest retained Fock level of `mode`.
    pub fn edge_population(&self, mode: usize) -> Result<f64> {
        Ok(self.photon_marginal(mode)?[self.cutoff - 1])
    }

    /// Applies a dense `D^k x D^k` matrix to the listed modes in place.
    pub fn apply_matrix_mut(&mut self, matrix: &CMatrix, modes: &[usize]) -> Result<()> {
        let k = modes.len();
        if k == 0 {
            return Err(Error::InvalidTarget("no target modes".into()));
        }
        for (i, &m) in modes.iter().enumerate() {
            self.check_mode(m)?;
            if modes[..i].contains(&m) {
                return Err(Error::InvalidTarget(format!("mode {m} repeated")));
            }
        }
        let local = self.cutoff.pow(k as u32);
        if matrix.nrows() != local || matrix.ncols() != local {
            return Err(Error::shape(
                format!("{local}x{local} gate for {k} mode(s) at cutoff {}", self.cutoff),
                format!("{}x{}", matrix.nrows(), matrix.ncols()),
            ));
        }
        apply_local(&mut self.amplitudes, self.cutoff, matrix.as_slice(), modes);
        Ok(())
    }

    /// Multiplies each amplitude by `phases[n_mode]`.
    pub fn apply_diagonal_mut(&mut self, diagonal: &[C64], mode: usize) -> Result<()> {
        self.check_mode(mode)?;
        if diagonal.len() != self.cutoff {
            return Err(Error::shape(self.cutoff, diagonal.len()));
        }
        let d = self.cutoff;
        let stride = self.stride(mode);
        for (idx, z) in self.amplitudes.iter_mut().enumerate() {
            *z *= diagonal[(idx / stride) % d];
        }
        Ok(())
    }

    pub fn apply_operator_mut(&mut self, op: &ModeOperator, mode: usize) -> Result<()> {
        if op.cutoff != self.cutoff {
            return Err(Error::shape(
                format!("cutoff {}", self.cutoff),
                format!("cutoff {}", op.cutoff),
            ));
        }
        self.apply_matrix_mut(&op.matrix, &[mode])
    }

    /// `<psi|O_mode|psi>` for a single-mode operator, unnormalized.
    pub fn expectation(&self, op: &ModeOperator, mode: usize) -> Result<C64> {
        let mut image = self.clone();
        image.apply_operator_mut(op, mode)?;
        self.inner(&image)
    }

    /// Removes `mode`, keeping the slice where it holds `n` photons.
    fn slice_mode(&self, mode: usize, n: usize) -> Vec<C64> {
        let d = self.cutoff;
        let stride = self.stride(mode);
        let block = stride * d;
        let mut out = Vec::with_capacity(self.amplitudes.len() / d);
        for outer in (0..self.amplitudes.len()).step_by(block) {
            let base = outer + n * stride;
            out.extend_from_slice(&self.amplitudes[base..base + stride]);
        }
        out
    }
}

fn checked_len(cutoff: usize, modes: usize) -> Result<usize> {
    cutoff
        .checked_pow(modes as u32)
        .filter(|&l| l <= 1 << 28)
        .ok_or_else(|| Error::InvalidParameter(format!("{cutoff}^{modes} amplitudes is too large")))
}

pub(crate) fn flat_index(cutoff: usize, occupations: &[usize]) -> usize {
    occupations.iter().rev().fold(0, |acc, &n| acc * cutoff + n)
}

/// Applies a row-major local matrix on `modes` (first mode fastest).
/// `matrix` is column-major, as stored by nalgebra.
fn apply_local(amps: &mut [C64], cutoff: usize, matrix: &[C64], modes: &[usize]) {
    let local = cutoff.pow(modes.len() as u32);
    let strides: Vec<usize> = modes.iter().map(|&m| cutoff.pow(m as u32)).collect();
    let offsets: Vec<usize> = (0..local)
        .map(|l| {
            let mut rem = l;
            strides.iter().fold(0, |acc, &s| {
                let digit = rem % cutoff;
                rem /= cutoff;
                acc + digit * s
            })
        })
        .collect();
    let mut out = vec![ZERO; local];
    for base in 0..amps.len() {
        if strides.iter().any(|&s| (base / s) % cutoff != 0) {
            continue;
        }
        out.fill(ZERO);
        for (col, &o) in matrix.chunks_exact(local).zip(&offsets) {
            let g = amps[base + o];
            if g == ZERO {
                continue;
            }
            for (acc, m) in out.iter_mut().zip(col) {
                *acc += m * g;
            }
        }
        for (&v, &o) in out.iter().zip(&offsets) {
            amps[base + o] = v;
        }
    }
}

/// Applies `gate` to `modes` and returns the transformed state.
pub fn apply_gate(state: &FockState, gate: &GateMatrix, modes: &[usize]) -> Result<FockState> {
    if modes.len() != gate.arity() {
        return Err(Error::InvalidTarget(format!(
            "{:?} gate acts on {} mode(s), {} given",
            gate.kind,
            gate.arity(),
            modes.len()
        )));
    }
    if gate.cutoff != state.cutoff {
        return Err(Error::shape(
            format!("cutoff {}", state.cutoff),
            format!("cutoff {}", gate.cutoff),
        ));
    }
    let mut out = state.clone();
    out.apply_matrix_mut(&gate.matrix, modes)?;
    Ok(out)
}

/// Measurement applied by [`project_mode`].
#[derive(Debug, Clone)]
pub enum Projector {
    /// Rank-one projection onto `<n|`; the measured mode is removed.
    Fock(usize),
    /// A general Kraus operator; the mode is kept.
    Kraus(ModeOperator),
}

/// Applies a measurement branch to `mode`.
///
/// Returns the unnormalized post-measurement state together with the
/// conditional outcome probability `||K psi||^2 / ||psi||^2`; the state's
/// `norm_tracked` is multiplied by that probability.
pub fn project_mode(state: &FockState, mode: usize, projector: &Projector) -> Result<(FockState, f64)> {
    state.check_mode(mode)?;
    let before = state.norm_sqr();
    let mut out = match projector {
        Projector::Fock(n) => {
            if *n >= state.cutoff {
                return Err(Error::InvalidParameter(format!(
                    "Fock outcome {n} does not fit cutoff {}",
                    state.cutoff
                )));
            }
            if state.modes < 2 {
                return Err(Error::InvalidTarget("cannot remove the only mode of a state".into()));
            }
            FockState {
                modes: state.modes - 1,
                cutoff: state.cutoff,
                amplitudes: state.slice_mode(mode, *n),
                norm_tracked: state.norm_tracked,
            }
        }
        Projector::Kraus(op) => {
            let mut out = state.clone();
            out.apply_operator_mut(op, mode)?;
            out
        }
    };
    let probability = if before > 0.0 { out.norm_sqr() / before } else { 0.0 };
    if !(probability >= MIN_OUTCOME_PROBABILITY) {
        return Err(Error::ImpossibleOutcome { probability });
    }
    out.norm_tracked *= probability;
    Ok((out, probability))
}

/// Accumulates the population pushed onto the cutoff boundary by gates.
///
/// Gates are unitary on the truncated space, so truncation shows up as
/// population on the top retained Fock level rather than as lost norm.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LeakageMonitor {
    pub budget: Option<f64>,
    pub accumulated: f64,
    pub worst: f64,
    pub events: usize,
}

impl LeakageMonitor {
    pub fn with_budget(budget: Option<f64>) -> Self {
        Self {
            budget,
            ..Default::default()
        }
    }

    /// Records the boundary population of `modes` after a gate.
    pub fn record(&mut self, state: &FockState, modes: &[usize], context: impl FnOnce() -> String) -> Result<()> {
        let norm = state.norm_sqr().max(f64::MIN_POSITIVE);
        let mut edge = 0.0;
        for &m in modes {
            edge += state.edge_population(m)? / norm;
        }
        self.accumulated += edge;
        self.worst = self.worst.max(edge);
        self.events += 1;
        match self.budget {
            Some(budget) if self.accumulated > budget => Err(Error::Leakage {
                accumulated: self.accumulated,
                budget,
                context: context(),
            }),
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: C64, b: C64, tol: f64) -> bool {
        (a - b).norm() < tol
    }

    #[test]
    fn ladder_and_quadrature_elements() {
        let ops = make_operators(6, 2.0).unwrap();
        assert!((ops.q.matrix[(0, 1)].re - 1.0).abs() < 1e-15);
        let comm = &ops.q.matrix * &ops.p.matrix - &ops.p.matrix * &ops.q.matrix;
        assert!(approx(comm[(0, 0)], C64::new(0.0, 2.0), 1e-14));
    }

    #[test]
    fn truncated_commutator_only_corrupts_top_level() {
        let d = 8;
        let ops = make_operators(d, 2.0).unwrap();
        let c = &ops.a.matrix * &ops.a_dag.matrix - &ops.a_dag.matrix * &ops.a.matrix;
        for i in 0..d {
            for j in 0..d {
                let expected = if i != j {
                    0.0
                } else if i == d - 1 {
                    -7.0
                } else {
                    1.0
                };
                assert!((c[(i, j)].re - expected).abs() < 1e-12 && c[(i, j)].im.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn quadratures_are_hermitian_and_canonical_below_the_edge() {
        let hbar = 1.3;
        let d = 10;
        let ops = make_operators(d, hbar).unwrap();
        assert!(crate::linalg::max_abs_diff(&ops.q.matrix, &ops.q.matrix.adjoint()) < 1e-12);
        assert!(crate::linalg::max_abs_diff(&ops.p.matrix, &ops.p.matrix.adjoint()) < 1e-12);
        let comm = &ops.q.matrix * &ops.p.matrix - &ops.p.matrix * &ops.q.matrix;
        for i in 0..d - 1 {
            for j in 0..d - 1 {
                let expected = if i == j { C64::new(0.0, hbar) } else { ZERO };
                assert!(approx(comm[(i, j)], expected, 1e-12));
            }
        }
    }

    #[test]
    fn invalid_cutoff_and_hbar() {
        assert!(matches!(make_operators(1, 2.0), Err(Error::InvalidCutoff(1))));
        assert!(make_operators(4, 0.0).is_err());
    }

    #[test]
    fn quadrature_eigen_reconstructs_q() {
        let ops = make_operators(7, 2.0).unwrap();
        let q = ops.q_eigen.function_of_q(|x| x);
        assert!(crate::linalg::max_abs_diff(&q, &ops.q.matrix) < 1e-12);
    }

    #[test]
    fn little_endian_layout() {
        let s = FockState::basis(3, &[1, 2]).unwrap();
        assert_eq!(s.amplitudes()[1 + 3 * 2], C64::new(1.0, 0.0));
        let a = FockState::basis(3, &[1]).unwrap();
        let b = FockState::basis(3, &[2]).unwrap();
        assert_eq!(a.tensor(&b).unwrap(), s);
    }

    #[test]
    fn shape_and_target_errors() {
        let mut s = FockState::vacuum(2, 3).unwrap();
        let id2 = CMatrix::identity(9, 9);
        assert!(matches!(
            s.apply_matrix_mut(&id2, &[0, 0]),
            Err(Error::InvalidTarget(_))
        ));
        assert!(matches!(s.apply_matrix_mut(&id2, &[0]), Err(Error::Shape { .. })));
        assert!(matches!(
            s.apply_matrix_mut(&id2, &[0, 2]),
            Err(Error::InvalidTarget(_))
        ));
        assert!(FockState::from_amplitudes(2, 3, vec![ZERO; 8]).is_err());
    }

    #[test]
    fn project_vacuum_ancilla() {
        let primary = FockState::basis(4, &[1]).unwrap();
        let anc = FockState::vacuum(1, 4).unwrap();
        let joint = primary.tensor(&anc).unwrap();
        let (out, p) = project_mode(&joint, 1, &Projector::Fock(0)).unwrap();
        assert!((p - 1.0).abs() < 1e-15);
        assert_eq!(out.amplitudes(), primary.amplitudes());
        assert!(matches!(
            project_mode(&joint, 1, &Projector::Fock(2)),
            Err(Error::ImpossibleOutcome { .. })
        ));
    }

    #[test]
    fn two_mode_gate_acts_on_the_right_factors() {
        // swap of modes 0 and 2 in a 3-mode state
        let d = 3;
        let mut swap = CMatrix::zeros(d * d, d * d);
        for i in 0..d {
            for j in 0..d {
                swap[(j + d * i, i + d * j)] = C64::new(1.0, 0.0);
            }
        }
        let mut s = FockState::basis(d, &[2, 1, 0]).unwrap();
        s.apply_matrix_mut(&swap, &[0, 2]).unwrap();
        assert_eq!(s, FockState::basis(d, &[0, 1, 2]).unwrap());
    }
}
