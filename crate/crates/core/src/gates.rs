//! Gaussian gate constructors and the controlled-displacement (CX) entangler.
//!
//! All gates are exponentials of their generators truncated to `D` levels, so
//! they are exactly unitary on the truncated space and agree with the
//! infinite-dimensional gate on low Fock levels.
//!
//! The `*_elements` constructors instead return exact matrix elements of the
//! untruncated gate restricted to levels below `D`. They are not unitary on
//! the truncated space and are used to validate decompositions, where
//! products of truncated generators would mix in boundary artifacts.

use std::f64::consts::FRAC_PI_4;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{check_cutoff, CMatrix, Operators, C64};
use crate::linalg::{expm, kron, ln_factorial, on_first, on_second};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GateKind {
    D,
    R,
    S,
    BS,
    S2,
    CX,
}

impl GateKind {
    pub fn arity(self) -> usize {
        match self {
            GateKind::D | GateKind::R | GateKind::S => 1,
            GateKind::BS | GateKind::S2 | GateKind::CX => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GateParams {
    Displacement { alpha: C64 },
    Rotation { phi: f64 },
    Squeezing { r: f64, phi: f64 },
    Beamsplitter { theta: f64, phi: f64 },
    TwoModeSqueezing { r: f64, phi: f64 },
    ControlledX { s: f64 },
}

/// How the matrix relates to the untruncated gate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truncation {
    /// Exponential of the truncated generator (unitary on the truncated space).
    Generator,
    /// Exact elements of the untruncated gate.
    Elements,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateMatrix {
    pub kind: GateKind,
    pub cutoff: usize,
    pub params: GateParams,
    pub truncation: Truncation,
    pub matrix: CMatrix,
}

impl GateMatrix {
    pub fn arity(&self) -> usize {
        self.kind.arity()
    }

    fn generated(kind: GateKind, cutoff: usize, params: GateParams, generator: CMatrix) -> Self {
        Self {
            kind,
            cutoff,
            params,
            truncation: Truncation::Generator,
            matrix: expm(&generator),
        }
    }

    /// `G1 G2` (apply `other` first). Both gates must act on the same modes.
    pub fn compose(&self, other: &GateMatrix) -> Result<GateMatrix> {
        if self.arity() != other.arity() || self.cutoff != other.cutoff {
            return Err(Error::shape(
                format!("{}-mode gate at cutoff {}", self.arity(), self.cutoff),
                format!("{}-mode gate at cutoff {}", other.arity(), other.cutoff),
            ));
        }
        Ok(GateMatrix {
            matrix: &self.matrix * &other.matrix,
            ..self.clone()
        })
    }
}

fn check_finite(values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("gate parameters {values:?}")))
    }
}

fn cis(phi: f64) -> C64 {
    C64::from_polar(1.0, phi)
}

/// `D(alpha) = exp(alpha a^dagger - alpha^* a)`.
pub fn displacement(alpha: C64, cutoff: usize, hbar: f64) -> Result<GateMatrix> {
    check_finite(&[alpha.re, alpha.im])?;
    let ops = Operators::shared(cutoff, hbar)?;
    let gen = &ops.a_dag.matrix * alpha - &ops.a.matrix * alpha.conj();
    Ok(GateMatrix::generated(
        GateKind::D,
        cutoff,
        GateParams::Displacement { alpha },
        gen,
    ))
}

/// `R(phi) = exp(i phi n)`, diagonal with `<n|R|n> = e^{i n phi}`.
pub fn rotation(phi: f64, cutoff: usize) -> Result<GateMatrix> {
    check_cutoff(cutoff)?;
    check_finite(&[phi])?;
    let diag = nalgebra::DVector::from_fn(cutoff, |n, _| cis(n as f64 * phi));
    Ok(GateMatrix {
        kind: GateKind::R,
        cutoff,
        params: GateParams::Rotation { phi },
        truncation: Truncation::Generator,
        matrix: CMatrix::from_diagonal(&diag),
    })
}

/// `S(r, phi) = exp(r/2 (e^{-i phi} a^2 - e^{i phi} a^dagger^2))`.
pub fn squeezing(r: f64, phi: f64, cutoff: usize) -> Result<GateMatrix> {
    check_finite(&[r, phi])?;
    let ops = Operators::shared(cutoff, crate::fock::DEFAULT_HBAR)?;
    let a2 = &ops.a.matrix * &ops.a.matrix;
    let ad2 = &ops.a_dag.matrix * &ops.a_dag.matrix;
    let gen = (a2 * cis(-phi) - ad2 * cis(phi)) * C64::new(r / 2.0, 0.0);
    Ok(GateMatrix::generated(
        GateKind::S,
        cutoff,
        GateParams::Squeezing { r, phi },
        gen,
    ))
}

/// `BS(theta, phi) = exp(theta (e^{i phi} a b^dagger - e^{-i phi} a^dagger b))`
/// with `a` the first target mode, so `BS(theta, 0)|1,0> = cos theta |1,0> + sin theta |0,1>`.
pub fn beamsplitter(theta: f64, phi: f64, cutoff: usize) -> Result<GateMatrix> {
    check_finite(&[theta, phi])?;
    let ops = Operators::shared(cutoff, crate::fock::DEFAULT_HBAR)?;
    let a = &ops.a.matrix;
    let ad = &ops.a_dag.matrix;
    let gen = (kron(ad, a) * cis(phi) - kron(a, ad) * cis(-phi)) * C64::new(theta, 0.0);
    Ok(GateMatrix::generated(
        GateKind::BS,
        cutoff,
        GateParams::Beamsplitter { theta, phi },
        gen,
    ))
}

/// `S2(r, phi) = exp(r (e^{i phi} a^dagger b^dagger - e^{-i phi} a b))`.
pub fn two_mode_squeezer(r: f64, phi: f64, cutoff: usize) -> Result<GateMatrix> {
    check_finite(&[r, phi])?;
    let ops = Operators::shared(cutoff, crate::fock::DEFAULT_HBAR)?;
    let a = &ops.a.matrix;
    let ad = &ops.a_dag.matrix;
    let gen = (kron(ad, ad) * cis(phi) - kron(a, a) * cis(-phi)) * C64::new(r, 0.0);
    Ok(GateMatrix::generated(
        GateKind::S2,
        cutoff,
        GateParams::TwoModeSqueezing { r, phi },
        gen,
    ))
}

/// `CX(s) = exp(-i s q_1 p_2 / hbar)`: shifts the second mode's `q` by `s q_1`.
pub fn cx_direct(s: f64, cutoff: usize, hbar: f64) -> Result<GateMatrix> {
    check_finite(&[s])?;
    let ops = Operators::shared(cutoff, hbar)?;
    let gen = (on_first(&ops.q.matrix) * on_second(&ops.p.matrix)) * C64::new(0.0, -s / hbar);
    Ok(GateMatrix::generated(
        GateKind::CX,
        cutoff,
        GateParams::ControlledX { s },
        gen,
    ))
}

/// Parameters `(theta, r)` solving `cot 2 theta = sinh r = -s`, with `2 theta` in `(0, pi)`.
pub fn decomposition_angles(s: f64) -> (f64, f64) {
    let r = (-s).asinh();
    let two_theta = f64::atan2(1.0, r.sinh());
    (two_theta / 2.0, r)
}

/// CX built from two beamsplitters and a two-mode squeezer.
///
/// With `(theta, r) = decomposition_angles(s / 2)` the circuit is
/// `BS(theta + pi/4) S2(r) BS(theta - 3 pi/4)` (rightmost first). In the
/// `hbar`-independent form used here the coupling `q_1 p_2` carries a factor
/// `1/2` relative to `a`-`b` mode mixing, hence the `s / 2`. The matrix holds
/// exact elements of the untruncated circuit on levels below `cutoff`.
pub fn cx_decomposed(s: f64, cutoff: usize) -> Result<GateMatrix> {
    check_cutoff(cutoff)?;
    check_finite(&[s])?;
    if s == 0.0 {
        return Ok(GateMatrix {
            kind: GateKind::CX,
            cutoff,
            params: GateParams::ControlledX { s },
            truncation: Truncation::Elements,
            matrix: CMatrix::identity(cutoff * cutoff, cutoff * cutoff),
        });
    }
    let (theta, r) = decomposition_angles(s / 2.0);
    // every intermediate state reachable between low-level inputs and outputs
    // has total photon number below 2 cutoff - 1
    let padded = 2 * cutoff - 1;
    let first = beamsplitter_elements(theta - 3.0 * FRAC_PI_4, 0.0, padded)?;
    let middle = two_mode_squeezer_elements(r, 0.0, padded)?;
    let last = beamsplitter_elements(theta + FRAC_PI_4, 0.0, padded)?;
    let low = embed_indices(cutoff, padded);
    let rows = CMatrix::from_fn(low.len(), padded * padded, |i, k| last.matrix[(low[i], k)]);
    let cols = CMatrix::from_fn(padded * padded, low.len(), |k, j| first.matrix[(k, low[j])]);
    let matrix = rows * &middle.matrix * cols;
    Ok(GateMatrix {
        kind: GateKind::CX,
        cutoff,
        params: GateParams::ControlledX { s },
        truncation: Truncation::Elements,
        matrix,
    })
}

/// Local indices of the `cutoff^2` two-mode basis inside a larger `padded^2` basis.
fn embed_indices(cutoff: usize, padded: usize) -> Vec<usize> {
    (0..cutoff * cutoff)
        .map(|l| (l % cutoff) + padded * (l / cutoff))
        .collect()
}

/// Exact `<m|D(beta)|n>` for `m < rows`, `n < cols`.
pub fn displacement_elements(beta: C64, rows: usize, cols: usize) -> CMatrix {
    let mut d = CMatrix::zeros(rows, cols);
    let ln_pref = -beta.norm_sqr() / 2.0;
    for m in 0..rows {
        d[(m, 0)] = if beta.norm() == 0.0 {
            if m == 0 {
                C64::new(1.0, 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        } else {
            C64::from_polar(
                (ln_pref + m as f64 * beta.norm().ln() - 0.5 * ln_factorial(m)).exp(),
                m as f64 * beta.arg(),
            )
        };
    }
    for n in 1..cols {
        let inv = 1.0 / (n as f64).sqrt();
        for m in 0..rows {
            let mut v = -beta.conj() * d[(m, n - 1)];
            if m > 0 {
                v += d[(m - 1, n - 1)] * (m as f64).sqrt();
            }
            d[(m, n)] = v * inv;
        }
    }
    d
}

/// Exact beamsplitter elements, computed block by block in total photon number.
pub fn beamsplitter_elements(theta: f64, phi: f64, cutoff: usize) -> Result<GateMatrix> {
    check_cutoff(cutoff)?;
    check_finite(&[theta, phi])?;
    let d = cutoff;
    let mut matrix = CMatrix::zeros(d * d, d * d);
    for total in 0..=2 * (d - 1) {
        // basis |m, total - m>, m = 0..=total, holds every state of this block
        let size = total + 1;
        let mut gen = CMatrix::zeros(size, size);
        for m in 0..size {
            let n = total - m;
            // a b^dagger |m, n> = sqrt(m (n+1)) |m-1, n+1>
            if m > 0 {
                let v = ((m * (n + 1)) as f64).sqrt();
                gen[(m - 1, m)] += cis(phi) * theta * v;
                gen[(m, m - 1)] -= cis(-phi) * theta * v;
            }
        }
        let block = expm(&gen);
        for i in 0..size {
            for j in 0..size {
                let (mi, ni) = (i, total - i);
                let (mj, nj) = (j, total - j);
                if mi < d && ni < d && mj < d && nj < d {
                    matrix[(mi + d * ni, mj + d * nj)] = block[(i, j)];
                }
            }
        }
    }
    Ok(GateMatrix {
        kind: GateKind::BS,
        cutoff,
        params: GateParams::Beamsplitter { theta, phi },
        truncation: Truncation::Elements,
        matrix,
    })
}

/// Exact two-mode squeezer elements, computed along chains of fixed `n_a - n_b`.
pub fn two_mode_squeezer_elements(r: f64, phi: f64, cutoff: usize) -> Result<GateMatrix> {
    check_cutoff(cutoff)?;
    check_finite(&[r, phi])?;
    let d = cutoff;
    // the chain generator is truncated far beyond the retained levels
    // amplitudes along a chain fall off like tanh(r)^k
    let decay = -r.abs().tanh().ln();
    let tail = if decay.is_finite() {
        (40.0 / decay).ceil() as usize
    } else {
        0
    };
    let chain_len = d + 10 + tail.min(400);
    let mut matrix = CMatrix::zeros(d * d, d * d);
    for diff in -(d as isize - 1)..=(d as isize - 1) {
        let (ma, mb) = (diff.max(0) as usize, (-diff).max(0) as usize);
        let mut gen = CMatrix::zeros(chain_len, chain_len);
        for k in 1..chain_len {
            // a^dagger b^dagger |ma+k-1, mb+k-1> = sqrt((ma+k)(mb+k)) |ma+k, mb+k>
            let v = (((ma + k) * (mb + k)) as f64).sqrt();
            gen[(k, k - 1)] += cis(phi) * r * v;
            gen[(k - 1, k)] -= cis(-phi) * r * v;
        }
        let chain = expm(&gen);
        let inside = (0..chain_len).take_while(|&k| ma + k < d && mb + k < d).count();
        for i in 0..inside {
            for j in 0..inside {
                matrix[((ma + i) + d * (mb + i), (ma + j) + d * (mb + j))] = chain[(i, j)];
            }
        }
    }
    Ok(GateMatrix {
        kind: GateKind::S2,
        cutoff,
        params: GateParams::TwoModeSqueezing { r, phi },
        truncation: Truncation::Elements,
        matrix,
    })
}

/// Exact elements of [`cx_direct`]'s untruncated exponential, computed by
/// quadrature over the first mode's position spectrum.
///
/// In the position eigenbasis of the first mode, CX acts on the second mode
/// as the displacement `D(s q / sqrt(2 hbar))`.
pub fn cx_elements(s: f64, cutoff: usize, hbar: f64) -> Result<GateMatrix> {
    check_cutoff(cutoff)?;
    check_finite(&[s])?;
    let d = cutoff;
    let nodes = 4 * d + 40;
    let ops = Operators::shared(nodes, hbar)?;
    let eig = &ops.q_eigen;
    let mut matrix = CMatrix::zeros(d * d, d * d);
    for (k, &q) in eig.values.iter().enumerate() {
        let disp = displacement_elements(C64::new(s * q / (2.0 * hbar).sqrt(), 0.0), d, d);
        for m in 0..d {
            for mp in 0..d {
                let w = eig.vectors[(m, k)] * eig.vectors[(mp, k)];
                if w == 0.0 {
                    continue;
                }
                for n in 0..d {
                    for np in 0..d {
                        matrix[(m + d * n, mp + d * np)] += disp[(n, np)] * w;
                    }
                }
            }
        }
    }
    Ok(GateMatrix {
        kind: GateKind::CX,
        cutoff,
        params: GateParams::ControlledX { s },
        truncation: Truncation::Elements,
        matrix,
    })
}
