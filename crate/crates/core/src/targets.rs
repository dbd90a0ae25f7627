//! Target states for state preparation.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{check_cutoff, FockState, C64};
use crate::linalg::ln_factorial;
use crate::meas::hermite_functions;

/// A normalized single-mode target with provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetState {
    pub name: String,
    pub params: BTreeMap<String, f64>,
    pub state: FockState,
    /// `1 - ||psi||^2` of the truncated expansion before normalization.
    pub norm_deficit: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetSpec {
    Fock { n: usize },
    Coherent { alpha_re: f64, alpha_im: f64 },
    Cat { alpha0: f64, theta: f64 },
    Gkp { epsilon: f64 },
}

impl TargetSpec {
    pub fn build(&self, cutoff: usize, hbar: f64) -> Result<TargetState> {
        match *self {
            TargetSpec::Fock { n } => fock(n, cutoff),
            TargetSpec::Coherent { alpha_re, alpha_im } => coherent(C64::new(alpha_re, alpha_im), cutoff),
            TargetSpec::Cat { alpha0, theta } => cat(alpha0, theta, cutoff),
            TargetSpec::Gkp { epsilon } => gkp_real(epsilon, cutoff, hbar),
        }
    }
}

fn finish(
    name: &str,
    params: &[(&str, f64)],
    amplitudes: Vec<C64>,
    expected_norm_sqr: Option<f64>,
) -> Result<TargetState> {
    let mut state = FockState::single_mode(amplitudes)?;
    let norm_sqr = state.norm_sqr();
    state.normalize()?;
    Ok(TargetState {
        name: name.to_string(),
        params: params.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        state,
        norm_deficit: expected_norm_sqr.map_or(0.0, |e| 1.0 - norm_sqr / e),
    })
}

pub fn fock(n: usize, cutoff: usize) -> Result<TargetState> {
    check_cutoff(cutoff)?;
    let state = FockState::basis(cutoff, &[n])?;
    Ok(TargetState {
        name: "fock".into(),
        params: [("n".to_string(), n as f64)].into(),
        state,
        norm_deficit: 0.0,
    })
}

/// `e^{-|alpha|^2/2} alpha^n / sqrt(n!)` for `n < cutoff`.
pub fn coherent_amplitudes(alpha: C64, cutoff: usize) -> Vec<C64> {
    (0..cutoff)
        .map(|n| {
            if alpha.norm() == 0.0 {
                return C64::new(if n == 0 { 1.0 } else { 0.0 }, 0.0);
            }
            let mag = (-alpha.norm_sqr() / 2.0 + n as f64 * alpha.norm().ln() - 0.5 * ln_factorial(n)).exp();
            (alpha / alpha.norm()).powu(n as u32) * mag
        })
        .collect()
}

pub fn coherent(alpha: C64, cutoff: usize) -> Result<TargetState> {
    check_cutoff(cutoff)?;
    finish(
        "coherent",
        &[("alpha_re", alpha.re), ("alpha_im", alpha.im)],
        coherent_amplitudes(alpha, cutoff),
        Some(1.0),
    )
}

/// Normalized `(D(alpha0) + e^{i theta} D(-alpha0))|0>`.
pub fn cat(alpha0: f64, theta: f64, cutoff: usize) -> Result<TargetState> {
    check_cutoff(cutoff)?;
    if !(alpha0 >= 0.0) || !theta.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "cat needs alpha0 >= 0, got {alpha0}, theta {theta}"
        )));
    }
    let plus = coherent_amplitudes(C64::new(alpha0, 0.0), cutoff);
    let minus = coherent_amplitudes(C64::new(-alpha0, 0.0), cutoff);
    let phase = C64::from_polar(1.0, theta);
    let amps: Vec<C64> = plus.iter().zip(&minus).map(|(a, b)| a + phase * b).collect();
    let expected = 2.0 * (1.0 + theta.cos() * (-2.0 * alpha0 * alpha0).exp());
    let norm_sqr: f64 = amps.iter().map(|z| z.norm_sqr()).sum();
    if norm_sqr < 1e-12 {
        return Err(Error::DegenerateTarget(format!(
            "cat with alpha0 = {alpha0}, theta = {theta} has zero norm"
        )));
    }
    finish("cat", &[("alpha0", alpha0), ("theta", theta)], amps, Some(expected))
}

/// Number of comb teeth on each side used before the convergence check.
pub const GKP_DEFAULT_TEETH: usize = 6;
const GKP_MAX_TEETH: usize = 200;

/// Realistic GKP state `e^{-epsilon n} sum_k |q = 2 k sqrt(pi hbar)>`, normalized.
pub fn gkp_real(epsilon: f64, cutoff: usize, hbar: f64) -> Result<TargetState> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "GKP damping must be positive, got {epsilon}"
        )));
    }
    if cutoff < 10 {
        return Err(Error::InsufficientCutoff {
            cutoff,
            reason: "the GKP comb needs at least 10 Fock levels".into(),
        });
    }
    let spacing = 2.0 * (PI * hbar).sqrt();
    let tooth = |k: i64| hermite_functions(k as f64 * spacing, cutoff, hbar);
    let mut comb = tooth(0);
    let add = |comb: &mut Vec<f64>, k: usize| {
        let (a, b) = (tooth(k as i64), tooth(-(k as i64)));
        let mut change = 0.0f64;
        for n in 0..cutoff {
            let d = a[n] + b[n];
            comb[n] += d;
            change = change.max(d.abs());
        }
        change
    };
    for k in 1..=GKP_DEFAULT_TEETH {
        add(&mut comb, k);
    }
    let mut k = GKP_DEFAULT_TEETH;
    loop {
        k += 1;
        let scale = comb.iter().map(|v| v * v).sum::<f64>().sqrt();
        if add(&mut comb, k) <= 1e-8 * scale {
            break;
        }
        if k >= GKP_MAX_TEETH {
            return Err(Error::InsufficientCutoff {
                cutoff,
                reason: format!("comb did not converge within {GKP_MAX_TEETH} teeth"),
            });
        }
    }
    let amps: Vec<C64> = comb
        .iter()
        .enumerate()
        .map(|(n, &v)| C64::new((-epsilon * n as f64).exp() * v, 0.0))
        .collect();
    if amps.iter().all(|z| z.norm() < 1e-300) {
        return Err(Error::DegenerateTarget("GKP comb vanished".into()));
    }
    finish("gkp", &[("epsilon", epsilon), ("hbar", hbar)], amps, None)
}

/// Writes `n,re,im` rows.
pub fn write_amplitudes_csv<W: Write>(state: &FockState, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["n", "re", "im"])?;
    for (n, z) in state.amplitudes().iter().enumerate() {
        w.write_record([n.to_string(), format!("{:?}", z.re), format!("{:?}", z.im)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_amplitudes_csv<R: Read>(input: R) -> Result<FockState> {
    let mut r = csv::Reader::from_reader(input);
    let mut amps = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let parse = |k: usize| -> Result<f64> {
            rec.get(k)
                .and_then(|v| v.trim().parse().ok())
                .ok_or_else(|| Error::Parse {
                    line: i + 2,
                    message: format!("column {k} of {:?}", rec),
                })
        };
        if parse(0)? as usize != amps.len() {
            return Err(Error::Parse {
                line: i + 2,
                message: "Fock indices must be consecutive from 0".into(),
            });
        }
        amps.push(C64::new(parse(1)?, parse(2)?));
    }
    FockState::single_mode(amps)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fock_and_coherent() {
        let f = fock(1, 6).unwrap();
        assert_eq!(f.state.amplitudes()[1], C64::new(1.0, 0.0));
        assert!(fock(6, 6).is_err());
        let c0 = coherent(C64::new(0.0, 0.0), 5).unwrap();
        assert_eq!(c0.state, FockState::vacuum(1, 5).unwrap());
        let c = coherent(C64::new(1.5, 0.0), 10).unwrap();
        // Poisson tail beyond n = 9 for mean 2.25
        let mut tail = 0.0;
        let mut term = (-2.25f64).exp();
        for n in 0..200 {
            if n >= 10 {
                tail += term;
            }
            term *= 2.25 / (n + 1) as f64;
        }
        assert!((c.norm_deficit - tail).abs() < 1e-12);
        assert!(c.norm_deficit < 1e-3);
    }

    #[test]
    fn cat_parity_and_norm() {
        let c = cat(1.5, 0.0, 10).unwrap();
        assert!(c.state.amplitudes().iter().skip(1).step_by(2).all(|z| z.norm() == 0.0));
        let big = cat(1.5, 0.0, 60).unwrap();
        assert!(big.norm_deficit.abs() < 1e-6);
        assert_eq!(cat(0.0, 0.0, 5).unwrap().state, FockState::vacuum(1, 5).unwrap());
        assert!(matches!(cat(0.0, PI, 5), Err(Error::DegenerateTarget(_))));
    }

    #[test]
    fn gkp_parity_and_damping_limit() {
        let g = gkp_real(0.1, 15, 2.0).unwrap();
        for n in (1..15).step_by(2) {
            assert!(g.state.amplitudes()[n].norm() < 1e-10);
        }
        assert!((g.state.norm_sqr() - 1.0).abs() < 1e-12);
        let v = gkp_real(60.0, 12, 2.0).unwrap();
        assert!((v.state.amplitudes()[0].norm() - 1.0).abs() < 1e-12);
        assert!(matches!(gkp_real(0.1, 8, 2.0), Err(Error::InsufficientCutoff { .. })));
    }

    /// Mehler kernel `<x| e^{-eps n} |y>` in closed form.
    fn mehler(x: f64, y: f64, eps: f64, hbar: f64) -> f64 {
        let t = (-eps).exp();
        let one = 1.0 - t * t;
        (-((1.0 + t * t) * (x * x + y * y) - 4.0 * t * x * y) / (2.0 * hbar * one)).exp() / (PI * hbar * one).sqrt()
    }

    #[test]
    fn gkp_matches_position_space_comb() {
        let (eps, d, hbar) = (0.1, 15, 2.0);
        let spacing = 2.0 * (PI * hbar).sqrt();
        let dx = 0.005;
        let mut c = vec![0.0; d];
        for i in -6000..=6000 {
            let x = i as f64 * dx;
            let psi: f64 = (-12..=12).map(|k| mehler(x, k as f64 * spacing, eps, hbar)).sum();
            for (n, h) in hermite_functions(x, d, hbar).iter().enumerate() {
                c[n] += h * psi * dx;
            }
        }
        let norm: f64 = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        let g = gkp_real(eps, d, hbar).unwrap();
        let ov: f64 = g.state.amplitudes().iter().zip(&c).map(|(a, b)| a.re * b / norm).sum();
        assert!(ov * ov >= 1.0 - 1e-6, "{}", ov * ov);
    }

    #[test]
    fn gkp_is_continuous_in_epsilon() {
        let base = gkp_real(0.1, 15, 2.0).unwrap().state;
        let mut last = 1.0;
        for delta in [0.001, 0.01, 0.05] {
            let other = gkp_real(0.1 + delta, 15, 2.0).unwrap().state;
            let f = crate::meas::fidelity(&base, &other).unwrap();
            assert!(f < last && f > 0.9);
            last = f;
        }
    }

    #[test]
    fn amplitude_csv_round_trip() {
        let c = cat(1.2, 0.4, 8).unwrap();
        let mut buf = Vec::new();
        write_amplitudes_csv(&c.state, &mut buf).unwrap();
        assert_eq!(read_amplitudes_csv(&buf[..]).unwrap(), c.state);
    }
}
