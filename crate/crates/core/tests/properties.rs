mod common;

use std::f64::consts::PI;

use common::*;
use openmaps::channels::{self, choi, mix};
use openmaps::gateset::{self, Instruction, Pulse, PulseSequence};
use openmaps::linalg::{self, c, CMatrix};
use openmaps::maps::{self, Boundary, DissipativeMapSpec, HamiltonianMapSpec};
use openmaps::observables;
use openmaps::protocols;
use openmaps::register::{self, DensityOperator, LocalOperator, RegisterLayout};
use proptest::prelude::*;

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, ..ProptestConfig::default() }
}

fn pulse_strategy(n: usize) -> impl Strategy<Value = Pulse> {
    prop_oneof![
        (0.0f64..2.0, -1.0f64..1.0).prop_map(|(t, p)| Pulse::r(t, p)),
        (0.0f64..2.0, 0..n).prop_map(|(t, i)| Pulse::sz(t, i)),
        (0.0f64..1.0, -1.0f64..1.0).prop_map(|(t, p)| Pulse::ms(t, p)),
    ]
}

proptest! {
    #![proptest_config(config(24))]

    #[test]
    fn partial_trace_recovers_factor(a in entries(4), b in entries(4)) {
        let rho = state_from(&RegisterLayout::qubits(2), &a);
        let sigma = state_from(&RegisterLayout::qubits(2), &b);
        let joint = rho.tensor(&sigma).unwrap();
        let back = register::partial_trace(&joint, &[2, 3]).unwrap();
        prop_assert!(linalg::max_abs_diff(back.matrix(), rho.matrix()) <= 1e-12);
    }

    #[test]
    fn embedding_respects_products(a in entries(2), b in entries(2), ion in 0usize..3) {
        let layout = RegisterLayout::qubits(3);
        let m = |raw: &[f64]| CMatrix::from_fn(2, 2, |i, j| c(raw[2 * (2 * i + j)], raw[2 * (2 * i + j) + 1]));
        let (ma, mb) = (m(&a), m(&b));
        let dense = |x: CMatrix| LocalOperator::new(&layout, vec![ion], x).unwrap().to_dense(&layout).unwrap();
        let lhs = dense(&ma * &mb);
        let rhs = dense(ma) * dense(mb);
        prop_assert!(linalg::max_abs_diff(&lhs, &rhs) <= 1e-12);
    }

    #[test]
    fn pulses_keep_trace_and_purity(raw in entries(3).prop_map(|v| v[..16].to_vec()), pulse in pulse_strategy(3)) {
        let layout = RegisterLayout::qubits(3);
        let rho = pure_from(&layout, &raw).to_density();
        let seq = PulseSequence::from_pulses([pulse]);
        let out = gateset::run_sequence(&seq, &rho).unwrap();
        prop_assert!((out.trace().re - 1.0).abs() <= 1e-12);
        prop_assert!((out.purity() - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn sequence_unitaries_compose(
        first in prop::collection::vec(pulse_strategy(3), 1..5),
        second in prop::collection::vec(pulse_strategy(3), 1..5),
    ) {
        let layout = RegisterLayout::qubits(3);
        let s1 = PulseSequence::from_pulses(first.clone());
        let s2 = PulseSequence::from_pulses(second.clone());
        let both = PulseSequence::from_pulses(first.into_iter().chain(second));
        let lhs = gateset::sequence_unitary(&both, &layout).unwrap();
        let rhs = gateset::sequence_unitary(&s2, &layout).unwrap() * gateset::sequence_unitary(&s1, &layout).unwrap();
        prop_assert!(linalg::max_abs_diff(&lhs, &rhs) <= 1e-10);
    }

    #[test]
    fn single_ion_ms_is_identity_on_block_diagonal_states(
        theta in 0.0f64..2.0,
        phi in -1.0f64..1.0,
        raw in entries(6),
    ) {
        // qutrit ancilla at 0 plus one qubit; the state has no coherence
        // between the parked level and the qubit levels of ion 0
        let layout = RegisterLayout::new(vec![3, 2], Some(0)).unwrap();
        let rho = state_from(&layout, &raw);
        let parked = |i: usize| layout.digit(i, 0) == 2;
        let m = rho.matrix();
        let block = CMatrix::from_fn(6, 6, |i, j| if parked(i) == parked(j) { m[(i, j)] } else { c(0.0, 0.0) });
        let rho = DensityOperator::new(layout.clone(), block).unwrap();
        let seq = PulseSequence { instructions: vec![
            Instruction::Active(gateset::ActiveMask::Ions(vec![0])),
            Instruction::Pulse(Pulse::ms(theta, phi)),
        ]};
        let out = gateset::run_sequence(&seq, &rho).unwrap();
        prop_assert!(linalg::max_abs_diff(out.matrix(), rho.matrix()) <= 1e-12);
    }

    #[test]
    fn dissipative_maps_are_cptp(theta in 0.0f64..PI, eps in 0.0f64..1.0, site in 0usize..2, raw in entries(8)) {
        let layout = RegisterLayout::qubits(3);
        let ch = maps::elementary_dissipative_map(&layout, DissipativeMapSpec { site, theta, epsilon: eps }).unwrap();
        prop_assert!(ch.is_trace_preserving());
        let j = choi(&ch).unwrap();
        prop_assert!(linalg::eigvalsh(&j.matrix)[0] >= -1e-8);
        let out = ch.apply(&state_from(&layout, &raw)).unwrap();
        prop_assert!(out.validate().is_ok());
    }

    #[test]
    fn mixing_is_linear_on_choi(p in 0.0f64..1.0, theta in 0.0f64..PI, phi in 0.0f64..PI) {
        let layout = RegisterLayout::qubits(2);
        let a = maps::elementary_dissipative_map(&layout, DissipativeMapSpec { site: 0, theta, epsilon: 0.0 }).unwrap();
        let b = maps::hamiltonian_map(&layout, HamiltonianMapSpec { phi, epsilon: 0.0 }).unwrap();
        let mixed = mix(&[(p, &a), (1.0 - p, &b)]).unwrap();
        let want = choi(&a).unwrap().matrix.scale(p) + choi(&b).unwrap().matrix.scale(1.0 - p);
        prop_assert!(linalg::max_abs_diff(&choi(&mixed).unwrap().matrix, &want) <= 1e-12);
    }

    #[test]
    fn ideal_maps_conserve_excitations(
        n in 2usize..6,
        theta in 0.0f64..PI,
        phi in -PI..PI,
        raw in entries(32),
    ) {
        let layout = RegisterLayout::qubits(n);
        let d = layout.dim();
        let rho = state_from(&layout, &raw[..2 * d * d]);
        let before = observables::subspace_populations(&rho);
        let composite = maps::composite_map_channel(&layout, theta, phi, 0.0, 0.0, Boundary::Open).unwrap();
        let after = composite.apply(&rho).unwrap();
        prop_assert!(populations_close(&observables::subspace_populations(&after), &before, 1e-10));
    }

    #[test]
    fn protocols_preserve_the_target_block_and_pump_monotonically(
        n in 2usize..5,
        m0_frac in 0.0f64..1.0,
        raw in entries(16),
    ) {
        let layout = RegisterLayout::qubits(n);
        let m0 = ((n as f64 + 1.0) * m0_frac) as usize;
        let rho = state_from(&layout, &raw[..2 * layout.dim().pow(2)]);
        let before = observables::subspace_populations(&rho);
        let removed = protocols::on_system(&rho, m0, protocols::stabilize_remove).unwrap();
        let injected = protocols::on_system(&rho, m0, protocols::stabilize_inject).unwrap();
        prop_assert!(removed.validate().is_ok());
        prop_assert!(injected.validate().is_ok());
        let after_r = observables::subspace_populations(&removed);
        let after_i = observables::subspace_populations(&injected);
        // weight above (below) any level k >= m0 (k <= m0) never grows
        for k in m0..=n {
            let above = |p: &[f64]| p[k + 1..].iter().sum::<f64>();
            prop_assert!(above(&after_r) <= above(&before) + 1e-12);
        }
        for k in 0..=m0 {
            let below = |p: &[f64]| p[..k].iter().sum::<f64>();
            prop_assert!(below(&after_i) <= below(&before) + 1e-12);
        }
        // the m0 block of the input passes through unchanged
        let block = protocols::postselect(&rho, m0).unwrap();
        if let Some(inside) = block.state {
            for f in [protocols::stabilize_remove, protocols::stabilize_inject] {
                let out = protocols::on_system(&inside, m0, f).unwrap();
                prop_assert!(linalg::max_abs_diff(out.matrix(), inside.matrix()) <= 1e-9);
            }
        }
    }

    #[test]
    fn lindblad_keeps_trace_and_hermiticity(u in -2.0f64..2.0, kappa in 0.1f64..2.0, raw in entries(8)) {
        use openmaps::lindblad::{integrate, MasterEqSpec};
        let layout = RegisterLayout::qubits(3);
        let rho = state_from(&layout, &raw);
        let spec = MasterEqSpec { n: 3, u, kappa, boundary: Boundary::Open };
        let dt = 0.04 / (u.abs() + kappa);
        let traj = integrate(&rho, &spec, 5.0 / kappa, dt).unwrap();
        for s in &traj.states {
            prop_assert!((s.trace().re - 1.0).abs() <= 1e-8);
            prop_assert!(s.hermiticity_defect() <= 1e-8);
        }
    }
}

#[test]
fn repeated_park_and_reset_are_idempotent() {
    let layout = RegisterLayout::new(vec![3, 2], Some(0)).unwrap();
    for b in 0..2 {
        let p = channels::park_channel(&layout, 0, b).unwrap();
        let pp = p.clone().then(&p).unwrap();
        assert!(linalg::max_abs_diff(&choi(&pp).unwrap().matrix, &choi(&p).unwrap().matrix) <= 1e-12);
    }
    let r = channels::reset_channel(&layout, 0, 1).unwrap();
    let rr = r.clone().then(&r).unwrap();
    assert!(linalg::max_abs_diff(&choi(&rr).unwrap().matrix, &choi(&r).unwrap().matrix) <= 1e-12);
}

#[test]
fn process_fidelity_falls_with_noise() {
    let layout = RegisterLayout::qubits(2);
    let ideal = maps::elementary_dissipative_map(&layout, DissipativeMapSpec::ideal(0)).unwrap();
    let mut last = f64::INFINITY;
    for k in 0..=10 {
        let eps = k as f64 / 10.0;
        let noisy =
            maps::elementary_dissipative_map(&layout, DissipativeMapSpec { site: 0, theta: PI / 2.0, epsilon: eps }).unwrap();
        let f = channels::process_fidelity(&noisy, &ideal).unwrap();
        assert!(f < last, "eps = {eps}: {f} !< {last}");
        last = f;
    }
}

#[test]
fn ms_negative_angle_identity() {
    // MS(1 - theta, phi) = R(1, phi) MS(-theta, phi) up to a global phase, on two ions
    let layout = RegisterLayout::qubits(2);
    for theta in [0.25, 0.5] {
        for phi in [0.0, 0.5, 0.3] {
            let lhs = gateset::sequence_unitary(&PulseSequence::from_pulses([Pulse::ms(1.0 - theta, phi)]), &layout).unwrap();
            let rhs = gateset::sequence_unitary(
                &PulseSequence::from_pulses([Pulse::ms(-theta, phi), Pulse::r(1.0, phi)]),
                &layout,
            )
            .unwrap();
            let overlap = linalg::trace_product(&rhs.adjoint(), &lhs).norm() / 4.0;
            assert!((overlap - 1.0).abs() < 1e-12, "theta {theta} phi {phi}: {overlap}");
        }
    }
}

#[test]
fn qnd_unitary_is_block_diagonal() {
    for n in 2..=5 {
        let layout = RegisterLayout::with_ancilla(2, n).unwrap();
        for m0 in 0..=n {
            let u = protocols::qnd_unitary(m0, &layout).unwrap();
            for m in 0..=n {
                let p = linalg::diag(
                    &(0..layout.dim())
                        .map(|i| if layout.excitations(i) == m { c(1.0, 0.0) } else { c(0.0, 0.0) })
                        .collect::<Vec<_>>(),
                );
                assert!(linalg::max_abs(&(&u * &p - &p * &u)) <= 1e-12);
            }
        }
    }
}

#[test]
fn dicke_pairs_are_equivalent() {
    for n in 2..=6 {
        for m in 1..n {
            let rho = observables::dicke_state(m, n).unwrap().to_density();
            let reference = observables::two_point(&rho, 0, 1).unwrap();
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        let v = observables::two_point(&rho, i, j).unwrap();
                        assert!((v - reference).norm() <= 1e-12);
                    }
                }
            }
        }
    }
}

#[test]
fn dark_state_is_stationary_without_interactions() {
    use openmaps::lindblad::{liouvillian_apply, MasterEqSpec};
    for n in 2..=5 {
        for m in 0..=n {
            let rho = observables::dicke_state(m, n).unwrap().to_density();
            let spec = MasterEqSpec { n, u: 0.0, kappa: 1.0, boundary: Boundary::Open };
            let l = liouvillian_apply(&rho, &spec).unwrap();
            assert!(linalg::frobenius(&l) <= 1e-12, "n {n} m {m}");
        }
    }
}
