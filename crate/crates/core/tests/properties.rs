use cvqnn::fock::FockState;
use cvqnn::gates::{self, GateMatrix};
use cvqnn::layers::{Network, ParamVector, ReadoutKind};
use cvqnn::meas::{self, GridSpec, WignerGrid};
use cvqnn::nonlin::{kraus_operator, Detector, NonlinConfig, Outcome};
use cvqnn::targets::{read_amplitudes_csv, write_amplitudes_csv};
use cvqnn::{apply_gate, C64};
use proptest::prelude::*;

const HBAR: f64 = 2.0;

fn state(modes: usize, cutoff: usize) -> impl Strategy<Value = FockState> {
    let len = cutoff.pow(modes as u32);
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), len)
        .prop_filter("nonzero", |v| v.iter().any(|(a, b)| a.abs() + b.abs() > 1e-3))
        .prop_map(move |v| {
            let amps = v.into_iter().map(|(a, b)| C64::new(a, b)).collect();
            FockState::from_amplitudes(modes, cutoff, amps)
                .unwrap()
                .normalized()
                .unwrap()
        })
}

fn one_mode_gate(cutoff: usize) -> impl Strategy<Value = GateMatrix> {
    prop_oneof![
        (-1.0f64..1.0, -1.0f64..1.0).prop_map(move |(a, b)| gates::displacement(C64::new(a, b), cutoff, HBAR).unwrap()),
        (-3.2f64..3.2).prop_map(move |phi| gates::rotation(phi, cutoff).unwrap()),
        (-0.8f64..0.8, -3.2f64..3.2).prop_map(move |(r, phi)| gates::squeezing(r, phi, cutoff).unwrap()),
    ]
}

fn two_mode_gate(cutoff: usize) -> impl Strategy<Value = GateMatrix> {
    prop_oneof![
        (-3.2f64..3.2, -3.2f64..3.2).prop_map(move |(t, p)| gates::beamsplitter(t, p, cutoff).unwrap()),
        (-0.6f64..0.6, -3.2f64..3.2).prop_map(move |(r, p)| gates::two_mode_squeezer(r, p, cutoff).unwrap()),
        (-1.0f64..1.0).prop_map(move |s| gates::cx_direct(s, cutoff, HBAR).unwrap()),
    ]
}

fn max_diff(a: &FockState, b: &FockState) -> f64 {
    a.amplitudes()
        .iter()
        .zip(b.amplitudes())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gates_preserve_the_norm(psi in state(2, 5), g1 in one_mode_gate(5), g2 in two_mode_gate(5), mode in 0usize..2) {
        let out = apply_gate(&psi, &g1, &[mode]).unwrap();
        prop_assert!((out.norm_sqr() - 1.0).abs() < 1e-10);
        let out = apply_gate(&out, &g2, &[mode, 1 - mode]).unwrap();
        prop_assert!((out.norm_sqr() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn one_mode_gates_act_locally(a in state(1, 5), b in state(1, 5), g in one_mode_gate(5)) {
        let joint = a.tensor(&b).unwrap();
        let left = apply_gate(&joint, &g, &[0]).unwrap();
        let expect = apply_gate(&a, &g, &[0]).unwrap().tensor(&b).unwrap();
        prop_assert!(max_diff(&left, &expect) < 1e-12);
        let right = apply_gate(&joint, &g, &[1]).unwrap();
        let expect = a.tensor(&apply_gate(&b, &g, &[0]).unwrap()).unwrap();
        prop_assert!(max_diff(&right, &expect) < 1e-12);
    }

    #[test]
    fn rotation_keeps_photon_statistics(psi in state(1, 8), phi in -6.3f64..6.3) {
        let out = apply_gate(&psi, &gates::rotation(phi, 8).unwrap(), &[0]).unwrap();
        let before = psi.photon_marginal(0).unwrap();
        let after = out.photon_marginal(0).unwrap();
        for (x, y) in before.iter().zip(&after) {
            prop_assert!((x - y).abs() < 1e-13);
        }
    }

    #[test]
    fn threshold_kraus_pair_is_complete(alpha in 0.0f64..2.0, s in -1.0f64..1.0, cutoff in 3usize..12) {
        let cfg = NonlinConfig { alpha, s, detector: Detector::ThresholdClick, max_loops: 5 };
        let click = kraus_operator(&cfg, Outcome::Click, cutoff, HBAR).unwrap().matrix;
        let none = kraus_operator(&cfg, Outcome::NoClick, cutoff, HBAR).unwrap().matrix;
        let sum = click.adjoint() * &click + none.adjoint() * &none;
        for i in 0..cutoff {
            for j in 0..cutoff {
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((sum[(i, j)] - C64::new(want, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn photon_number_weights_sum_to_one(beta in -3.0f64..3.0) {
        let total: f64 = (0..120).map(|n| NonlinConfig::kraus_weight(Outcome::Fock(n), beta).powi(2)).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        let click = NonlinConfig::kraus_weight(Outcome::Click, beta).powi(2)
            + NonlinConfig::kraus_weight(Outcome::NoClick, beta).powi(2);
        prop_assert!((click - 1.0).abs() < 1e-14);
    }

    #[test]
    fn fidelity_is_symmetric_and_bounded(a in state(1, 6), b in state(1, 6)) {
        let f = meas::fidelity(&a, &b).unwrap();
        prop_assert!((-1e-14..=1.0 + 1e-12).contains(&f));
        prop_assert!((f - meas::fidelity(&b, &a).unwrap()).abs() < 1e-14);
        prop_assert!((meas::fidelity(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn wigner_is_normalized(psi in state(1, 4)) {
        let w = meas::wigner(&psi, &GridSpec::square(8.0, 81), HBAR).unwrap();
        prop_assert!((w.total() - 1.0).abs() < 1e-6);
        let dx = w.spec.dx();
        let marginal: f64 = w.x_marginal().iter().sum::<f64>() * dx;
        prop_assert!((marginal - 1.0).abs() < 1e-6);
    }

    #[test]
    fn homodyne_density_integrates_to_one(psi in state(1, 5), phi in -3.2f64..3.2) {
        let xs: Vec<f64> = (0..401).map(|i| -10.0 + 0.05 * i as f64).collect();
        let p = meas::homodyne_distribution(&psi, phi, &xs, HBAR).unwrap();
        prop_assert!(p.iter().all(|v| *v >= -1e-15));
        prop_assert!((p.iter().sum::<f64>() * 0.05 - 1.0).abs() < 1e-8);
    }

    #[test]
    fn amplitude_csv_round_trips(psi in state(1, 7)) {
        let mut buf = Vec::new();
        write_amplitudes_csv(&psi, &mut buf).unwrap();
        let back = read_amplitudes_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back.amplitudes(), psi.amplitudes());
    }

    #[test]
    fn wigner_csv_round_trips(psi in state(1, 4), half in 1.0f64..6.0, n in 2usize..12) {
        let w = meas::wigner(&psi, &GridSpec::square(half, n), HBAR).unwrap();
        let mut buf = Vec::new();
        w.write_csv(&mut buf).unwrap();
        let back = WignerGrid::read_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back, w);
    }

    #[test]
    fn network_json_round_trips(p in 1usize..3, layers in 1usize..3, seed in any::<u64>()) {
        let net = Network::standard(p, layers, 6).unwrap();
        let back = Network::from_json(&net.to_json().unwrap()).unwrap();
        prop_assert_eq!(back.to_json().unwrap(), net.to_json().unwrap());
        let params = ParamVector::random(&net, seed, 0.1);
        let input = FockState::vacuum(p, 6).unwrap();
        let a = net.forward(&params, &input, ReadoutKind::None).unwrap();
        let b = back.forward(&params, &input, ReadoutKind::None).unwrap();
        prop_assert_eq!(a.state.amplitudes(), b.state.amplitudes());
    }
}
