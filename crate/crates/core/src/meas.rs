//! Photon counting, homodyne statistics and Wigner functions.

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{FockState, Operators, C64};

/// Normalized photon-number distribution of one mode.
pub fn photon_number_distribution(state: &FockState, mode: usize) -> Result<Vec<f64>> {
    let mut probs = state.photon_marginal(mode)?;
    let total: f64 = probs.iter().sum();
    if !(total > 0.0) {
        return Err(Error::NonFinite("state has zero norm".into()));
    }
    probs.iter_mut().for_each(|p| *p /= total);
    Ok(probs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionKind {
    Fock(usize),
    Click,
    NoClick,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionOutcome {
    pub mode: usize,
    pub kind: DetectionKind,
    pub probability: f64,
}

/// Probability of a detector outcome on `mode`.
pub fn detection_probability(state: &FockState, mode: usize, kind: DetectionKind) -> Result<DetectionOutcome> {
    let dist = photon_number_distribution(state, mode)?;
    let probability = match kind {
        DetectionKind::Fock(n) => *dist
            .get(n)
            .ok_or_else(|| Error::InvalidParameter(format!("Fock outcome {n} does not fit cutoff {}", dist.len())))?,
        DetectionKind::NoClick => dist[0],
        DetectionKind::Click => 1.0 - dist[0],
    };
    Ok(DetectionOutcome {
        mode,
        kind,
        probability: probability.clamp(0.0, 1.0),
    })
}

/// `<q>` of one mode, normalized by the state norm.
pub fn q_expectation(state: &FockState, mode: usize, hbar: f64) -> Result<f64> {
    let ops = Operators::shared(state.cutoff(), hbar)?;
    let norm = state.norm_sqr();
    Ok(state.expectation(&ops.q, mode)?.re / norm)
}

/// `|<psi1|psi2>|^2 / (||psi1||^2 ||psi2||^2)`.
pub fn fidelity(a: &FockState, b: &FockState) -> Result<f64> {
    let ov = a.inner(b)?;
    Ok((ov.norm_sqr() / (a.norm_sqr() * b.norm_sqr())).clamp(0.0, 1.0))
}

/// Position-space Fock wavefunctions `psi_n(x)` for `n < count`.
///
/// `psi_n(x) = (pi hbar)^{-1/4} (2^n n!)^{-1/2} H_n(x / sqrt(hbar)) e^{-x^2 / (2 hbar)}`,
/// evaluated by the normalized three-term recurrence.
pub fn hermite_functions(x: f64, count: usize, hbar: f64) -> Vec<f64> {
    let mut out = vec![0.0; count];
    if count == 0 {
        return out;
    }
    let u = x / hbar.sqrt();
    out[0] = (PI * hbar).powf(-0.25) * (-u * u / 2.0).exp();
    if count > 1 {
        out[1] = 2f64.sqrt() * u * out[0];
    }
    for n in 1..count - 1 {
        let nf = n as f64;
        out[n + 1] = (2.0 / (nf + 1.0)).sqrt() * u * out[n] - (nf / (nf + 1.0)).sqrt() * out[n - 1];
    }
    out
}

fn single_mode(state: &FockState) -> Result<&[C64]> {
    if state.modes() != 1 {
        return Err(Error::InvalidTarget(format!(
            "expected a single-mode state, got {} modes",
            state.modes()
        )));
    }
    Ok(state.amplitudes())
}

/// Probability density of the rotated quadrature `x cos phi + p sin phi` at `xs`.
pub fn homodyne_distribution(state: &FockState, phi: f64, xs: &[f64], hbar: f64) -> Result<Vec<f64>> {
    let amps = single_mode(state)?;
    if xs.is_empty() {
        return Err(Error::InvalidGrid("empty quadrature grid".into()));
    }
    let norm = state.norm_sqr();
    let rotated: Vec<C64> = amps
        .iter()
        .enumerate()
        .map(|(n, c)| c * C64::from_polar(1.0, -(n as f64) * phi))
        .collect();
    Ok(xs
        .iter()
        .map(|&x| {
            let psi: C64 = hermite_functions(x, amps.len(), hbar)
                .iter()
                .zip(&rotated)
                .map(|(h, c)| c * h)
                .sum();
            psi.norm_sqr() / norm
        })
        .collect())
}

/// Number of points of the inverse-CDF sampling grid.
pub const SAMPLING_POINTS: usize = 2001;

/// Draws `count` homodyne outcomes `(phi, x)` by inverse-CDF sampling.
pub fn homodyne_sample(state: &FockState, phi: f64, count: usize, seed: u64, hbar: f64) -> Result<Vec<(f64, f64)>> {
    let d = single_mode(state)?.len() as f64;
    let half = hbar.sqrt() * ((2.0 * d + 1.0).sqrt() + 6.0);
    let dx = 2.0 * half / (SAMPLING_POINTS - 1) as f64;
    let xs: Vec<f64> = (0..SAMPLING_POINTS).map(|i| -half + i as f64 * dx).collect();
    let density = homodyne_distribution(state, phi, &xs, hbar)?;
    let mut cdf = Vec::with_capacity(SAMPLING_POINTS);
    let mut acc = 0.0;
    cdf.push(0.0);
    for w in density.windows(2) {
        acc += 0.5 * (w[0] + w[1]) * dx;
        cdf.push(acc);
    }
    let total = acc;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|_| {
            let u: f64 = rng.random::<f64>() * total;
            let k = cdf.partition_point(|&c| c < u).clamp(1, SAMPLING_POINTS - 1);
            let (c0, c1) = (cdf[k - 1], cdf[k]);
            let frac = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.5 };
            (phi, xs[k - 1] + frac * dx)
        })
        .collect())
}

/// Rectangular phase-space sampling grid (inclusive bounds).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub nx: usize,
    pub np: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self::square(6.0, 121)
    }
}

impl GridSpec {
    pub fn square(half_width: f64, points: usize) -> Self {
        Self {
            x_min: -half_width,
            x_max: half_width,
            p_min: -half_width,
            p_max: half_width,
            nx: points,
            np: points,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.x_min, self.x_max, self.p_min, self.p_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite || !(self.x_max > self.x_min) || !(self.p_max > self.p_min) {
            return Err(Error::InvalidGrid(format!(
                "bounds must be finite and increasing: x [{}, {}], p [{}, {}]",
                self.x_min, self.x_max, self.p_min, self.p_max
            )));
        }
        if self.nx < 2 || self.np < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2x2 points, got {}x{}",
                self.nx, self.np
            )));
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.nx - 1) as f64
    }

    pub fn dp(&self) -> f64 {
        (self.p_max - self.p_min) / (self.np - 1) as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx()
    }

    pub fn p(&self, j: usize) -> f64 {
        self.p_min + j as f64 * self.dp()
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.nx).map(|i| self.x(i)).collect()
    }
}

/// Sampled Wigner function; `values[i * np + j]` is `W(x_i, p_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WignerGrid {
    pub spec: GridSpec,
    pub hbar: f64,
    pub values: Vec<f64>,
}

impl WignerGrid {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.spec.np + j]
    }

    pub fn cell_area(&self) -> f64 {
        self.spec.dx() * self.spec.dp()
    }

    /// `sum W dx dp`, close to 1 for a normalized state that fits the grid.
    pub fn total(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.cell_area()
    }

    /// `integral W(x, p) dp` on the x grid.
    pub fn x_marginal(&self) -> Vec<f64> {
        let dp = self.spec.dp();
        self.values
            .chunks(self.spec.np)
            .map(|row| row.iter().sum::<f64>() * dp)
            .collect()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let s = &self.spec;
        writeln!(
            out,
            "# x_min={:?} x_max={:?} p_min={:?} p_max={:?} nx={} np={} hbar={:?}",
            s.x_min, s.x_max, s.p_min, s.p_max, s.nx, s.np, self.hbar
        )?;
        for i in 0..s.nx {
            for j in 0..s.np {
                writeln!(out, "{:?},{:?},{:?}", s.x(i), s.p(j), self.at(i, j))?;
            }
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines().enumerate();
        let (_, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            message: "missing header".into(),
        })?;
        let header = header?;
        let field = |key: &str| -> Result<&str> {
            header
                .trim_start_matches('#')
                .split_whitespace()
                .find_map(|kv| kv.strip_prefix(key).and_then(|v| v.strip_prefix('=')))
                .ok_or_else(|| Error::Parse {
                    line: 1,
                    message: format!("header lacks {key}"),
                })
        };
        let num = |key: &str| -> Result<f64> {
            field(key)?.parse().map_err(|e| Error::Parse {
                line: 1,
                message: format!("{key}: {e}"),
            })
        };
        let int = |key: &str| -> Result<usize> {
            field(key)?.parse().map_err(|e| Error::Parse {
                line: 1,
                message: format!("{key}: {e}"),
            })
        };
        let spec = GridSpec {
            x_min: num("x_min")?,
            x_max: num("x_max")?,
            p_min: num("p_min")?,
            p_max: num("p_max")?,
            nx: int("nx")?,
            np: int("np")?,
        };
        spec.validate()?;
        let hbar = num("hbar")?;
        let mut values = Vec::with_capacity(spec.nx * spec.np);
        for (idx, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let w = line
                .rsplit(',')
                .next()
                .and_then(|v| v.trim().parse::<f64>().ok())
                .ok_or_else(|| Error::Parse {
                    line: idx + 1,
                    message: format!("expected x,p,w but got {line:?}"),
                })?;
            values.push(w);
        }
        if values.len() != spec.nx * spec.np {
            return Err(Error::shape(spec.nx * spec.np, values.len()));
        }
        Ok(Self { spec, hbar, values })
    }
}

/// Exact Wigner function of a single-mode pure state.
///
/// Sums `rho_mn W_mn(x, p)` over Fock pairs, generating the Laguerre-type
/// pair functions `W_mn` by recurrence in `m` and `n`.
pub fn wigner(state: &FockState, spec: &GridSpec, hbar: f64) -> Result<WignerGrid> {
    let amps = single_mode(state)?;
    spec.validate()?;
    let d = amps.len();
    let norm = state.norm_sqr();
    // rho_mn = c_m c_n^*
    let rho = |m: usize, n: usize| amps[m] * amps[n].conj() / norm;
    let scale = 1.0 / (2.0 * (hbar / 2.0).sqrt());
    let sqrt: Vec<f64> = (0..d).map(|k| (k as f64).sqrt()).collect();
    let mut values = vec![0.0; spec.nx * spec.np];
    let mut wlist = vec![C64::new(0.0, 0.0); d];
    for i in 0..spec.nx {
        for j in 0..spec.np {
            let a = C64::new(spec.x(i), spec.p(j)) * scale;
            let w0 = (-2.0 * a.norm_sqr()).exp() / PI;
            wlist[0] = C64::new(w0, 0.0);
            for n in 1..d {
                wlist[n] = wlist[n - 1] * a * 2.0 / sqrt[n];
            }
            let mut w = (rho(0, 0) * wlist[0]).re;
            for n in 1..d {
                w += 2.0 * (rho(0, n) * wlist[n]).re;
            }
            for m in 1..d {
                let mut prev = wlist[m];
                wlist[m] = (a.conj() * 2.0 * prev - wlist[m - 1] * sqrt[m]) / sqrt[m];
                for n in m + 1..d {
                    let next = (a * 2.0 * wlist[n - 1] - prev * sqrt[m]) / sqrt[n];
                    prev = wlist[n];
                    wlist[n] = next;
                }
                w += (rho(m, m) * wlist[m]).re;
                for n in m + 1..d {
                    w += 2.0 * (rho(m, n) * wlist[n]).re;
                }
            }
            values[i * spec.np + j] = w / hbar;
        }
    }
    Ok(WignerGrid {
        spec: *spec,
        hbar,
        values,
    })
}

/// `2 pi hbar sum W1 W2 dx dp`, the grid estimate of `|<psi1|psi2>|^2`.
pub fn wigner_overlap(w1: &WignerGrid, w2: &WignerGrid) -> Result<f64> {
    if w1.spec != w2.spec || w1.hbar != w2.hbar {
        return Err(Error::IncompatibleGrid(format!(
            "{:?} (hbar {}) vs {:?} (hbar {})",
            w1.spec, w1.hbar, w2.spec, w2.hbar
        )));
    }
    let sum: f64 = w1.values.iter().zip(&w2.values).map(|(a, b)| a * b).sum();
    Ok(2.0 * PI * w1.hbar * sum * w1.cell_area())
}
