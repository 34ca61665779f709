//! Checks against values derived by hand, independently of the library code.

mod common;

use std::f64::consts::PI;

use common::populations_close;
use openmaps::linalg::{self, c, CVector};
use openmaps::lindblad::{self, integrate, MasterEqSpec};
use openmaps::maps::{self, Boundary, HamiltonianMapSpec};
use openmaps::observables;
use openmaps::protocols;
use openmaps::register::{DensityOperator, PureState, RegisterLayout};

fn equal_superposition(n: usize) -> DensityOperator {
    let layout = RegisterLayout::qubits(n);
    let d = layout.dim();
    let amps = CVector::from_element(d, c(1.0 / (d as f64).sqrt(), 0.0));
    PureState::new(layout, amps).unwrap().to_density()
}

#[test]
fn removal_on_three_spins() {
    // populations 1/8, 3/8, 3/8, 1/8; each branch above m0 = 1 loses one excitation
    let rho = equal_superposition(3);
    let out = protocols::on_system(&rho, 1, protocols::stabilize_remove).unwrap();
    let pops = observables::subspace_populations(&out);
    assert!(populations_close(&pops, &[0.125, 0.75, 0.125, 0.0], 1e-9), "{pops:?}");
}

#[test]
fn injection_on_three_spins() {
    let rho = equal_superposition(3);
    let out = protocols::on_system(&rho, 1, protocols::stabilize_inject).unwrap();
    let pops = observables::subspace_populations(&out);
    assert!(populations_close(&pops, &[0.0, 0.5, 0.375, 0.125], 1e-9), "{pops:?}");
}

#[test]
fn stabilization_moves_one_excitation_per_round() {
    // removal sends 111 to m = 2 and the m = 2 branches to m = 1; injection
    // lifts the m = 0 weight. 111 needs a second round.
    let rho = equal_superposition(3);
    let once = protocols::on_system(&rho, 1, protocols::stabilize).unwrap();
    let pops = observables::subspace_populations(&once);
    assert!(populations_close(&pops, &[0.0, 0.875, 0.125, 0.0], 1e-9), "{pops:?}");
    let twice = protocols::on_system(&once, 1, protocols::stabilize).unwrap();
    let pops = observables::subspace_populations(&twice);
    assert!(populations_close(&pops, &[0.0, 1.0, 0.0, 0.0], 1e-9), "{pops:?}");
}

#[test]
fn qnd_success_probability() {
    let sel = protocols::postselect(&equal_superposition(3), 1).unwrap();
    assert!((sel.success_probability - 0.375).abs() < 1e-12);
}

#[test]
fn hamiltonian_dephases_two_of_three() {
    // |D(2,3)> picks up exp(-i phi) on 110 and 011 but not on 101, so each of
    // the two bonds carries cos(phi)/3
    let layout = RegisterLayout::qubits(3);
    let rho = observables::dicke_state(2, 3).unwrap().to_density();
    for phi in [0.0, PI / 4.0, PI / 2.0, 3.0 * PI / 4.0, PI] {
        let ch = maps::hamiltonian_map(&layout, HamiltonianMapSpec { phi, epsilon: 0.0 }).unwrap();
        let out = ch.apply(&rho).unwrap();
        let order = observables::offdiag_order(&out, 2).unwrap().unwrap();
        assert!((order - 2.0 * phi.cos() / 3.0).abs() < 1e-12, "phi {phi}: {order}");
    }
    let ch = maps::hamiltonian_map(&layout, HamiltonianMapSpec { phi: PI, epsilon: 0.0 }).unwrap();
    assert!(observables::offdiag_order(&ch.apply(&rho).unwrap(), 2).unwrap().unwrap() < 0.0);
}

#[test]
fn three_spins_reach_the_dark_state_in_six_sweeps() {
    let layout = RegisterLayout::qubits(3);
    let sweep = maps::dissipative_sweep_channel(&layout, PI / 2.0, 0.0, Boundary::Open).unwrap();
    for label in ["110", "101", "011", "100", "010", "001"] {
        let m = label.chars().filter(|&ch| ch == '1').count();
        let mut rho = DensityOperator::from_label(layout.clone(), label).unwrap();
        for _ in 0..6 {
            rho = sweep.apply(&rho).unwrap();
        }
        let f = observables::dicke_fidelity(&rho, m).unwrap();
        assert!(f >= 0.999, "{label}: {f}");
    }
}

#[test]
fn dicke_order_matches_closed_form() {
    // m (N - m) / (N (N - 1)) from counting placements
    for n in 2..=8 {
        for m in 1..n {
            let want = (m * (n - m)) as f64 / (n * (n - 1)) as f64;
            assert!((observables::analytic_dicke_order(m, n).unwrap() - want).abs() < 1e-12);
            let rho = observables::dicke_state(m, n).unwrap().to_density();
            assert!((observables::two_point(&rho, 0, n - 1).unwrap().re - want).abs() < 1e-12);
            let ssm = observables::s_plus_s_minus(&rho).unwrap();
            assert!((ssm - (m * (n + 1 - m)) as f64).abs() < 1e-9);
        }
    }
}

#[test]
fn projector_coefficients_for_three_spins() {
    let p1 = protocols::build_projector(1, 3).unwrap().alpha();
    let p2 = protocols::build_projector(2, 3).unwrap().alpha();
    for (got, want) in p1.iter().zip([9.0, -9.0, -1.0, 1.0]) {
        assert_eq!(*got, want / 16.0);
    }
    for (got, want) in p2.iter().zip([9.0, 9.0, -1.0, -1.0]) {
        assert_eq!(*got, want / 16.0);
    }
}

#[test]
fn map_expansion_is_fourth_order() {
    // sin^2 - theta^2, cos - 1 + theta^2/2 and (cos - 1)^2 are all O(theta^4)
    let thetas: Vec<f64> = (0..6).map(|k| 0.01 * 10f64.powf(k as f64 / 5.0)).collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        thetas.iter().map(|&t| (t.ln(), lindblad::map_expansion_error(t).ln())).unzip();
    let slope = fit_slope(&xs, &ys);
    assert!((slope - 4.0).abs() < 0.3, "slope {slope}");
}

fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

#[test]
fn rk4_is_fourth_order() {
    let layout = RegisterLayout::qubits(3);
    let rho = observables::dicke_state(1, 3).unwrap().to_density();
    let rho = DensityOperator::new(
        layout.clone(),
        (rho.matrix() + DensityOperator::from_label(layout, "100").unwrap().matrix()).scale(0.5),
    )
    .unwrap();
    let spec = MasterEqSpec { n: 3, u: 1.3, kappa: 0.7, boundary: Boundary::Open };
    let t = 2.0;
    let run = |dt: f64| integrate(&rho, &spec, t, dt).unwrap().last().matrix().clone();
    let reference = run(0.02 / 16.0);
    let coarse = linalg::frobenius(&(run(0.02) - &reference));
    let fine = linalg::frobenius(&(run(0.01) - &reference));
    let ratio = coarse / fine;
    assert!((ratio - 16.0).abs() < 2.0, "ratio {ratio}");
}

#[test]
fn stroboscopic_deviation_shrinks_with_theta() {
    // fixed g = phi / theta^2 and fixed kappa T = theta^2 n_steps
    let g = 2.0;
    let rho = DensityOperator::from_label(RegisterLayout::qubits(4), "1100").unwrap();
    let mut last = f64::INFINITY;
    for theta in [0.2f64, 0.1, 0.05] {
        let steps = (0.4 / (theta * theta)).round() as usize;
        let dev = lindblad::compare_stroboscopic(&rho, theta, g * theta * theta, steps).unwrap();
        assert!(dev < last, "theta {theta}: {dev} !< {last}");
        last = dev;
    }
}
