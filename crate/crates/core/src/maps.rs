//! Elementary and composite dynamical maps of the spin chain.
//!
//! Sites are the system ions of a layout in register order; `site` `i` couples
//! system ions `i` and `i + 1`. Physical angles (`theta`, `phi`) are in radians.

use thiserror::Error;

use crate::channels::{self, Channel, ChannelError};
use crate::linalg::{self, c, kron, CMatrix, I, ONE};
use crate::register::{
    DensityOperator, LocalOperator, PauliOp, RegisterError, RegisterLayout,
};

#[derive(Debug, Error, PartialEq)]
pub enum MapError {
    #[error(transparent)]
    Register(#[from] RegisterError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error("site {site} has no right neighbour in a chain of {n} spins")]
    BadSite { site: usize, n: usize },
    #[error("epsilon {0} must lie in [0, 1]")]
    BadEpsilon(f64),
    #[error("the circuit construction needs an ancilla in the layout")]
    NoAncilla,
}

pub type Result<T> = std::result::Result<T, MapError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Boundary {
    #[default]
    Open,
    Periodic,
}

/// Parameters of a single dissipative map on the pair `(site, site + 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DissipativeMapSpec {
    pub site: usize,
    /// Pumping angle in radians; `pi/2` pumps deterministically.
    pub theta: f64,
    /// Weight of the two-spin depolarizing channel mixed in.
    pub epsilon: f64,
}

impl DissipativeMapSpec {
    pub fn ideal(site: usize) -> Self {
        Self { site, theta: std::f64::consts::FRAC_PI_2, epsilon: 0.0 }
    }
}

/// Parameters of the nearest-neighbour interaction map `exp(-i phi H)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HamiltonianMapSpec {
    pub phi: f64,
    /// Two-spin depolarizing weight applied per pair.
    pub epsilon: f64,
}

/// Nearest-neighbour pairs of system ions.
pub fn chain_pairs(layout: &RegisterLayout, boundary: Boundary) -> Vec<(usize, usize)> {
    let sys = layout.system_ions();
    let mut pairs: Vec<(usize, usize)> = sys.windows(2).map(|w| (w[0], w[1])).collect();
    if boundary == Boundary::Periodic && sys.len() > 2 {
        pairs.push((sys[sys.len() - 1], sys[0]));
    }
    pairs
}

fn site_pair(layout: &RegisterLayout, site: usize) -> Result<(usize, usize)> {
    let sys = layout.system_ions();
    if site + 1 >= sys.len() {
        return Err(MapError::BadSite { site, n: sys.len() });
    }
    Ok((sys[site], sys[site + 1]))
}

fn check_epsilon(eps: f64) -> Result<()> {
    if (0.0..=1.0).contains(&eps) {
        Ok(())
    } else {
        Err(MapError::BadEpsilon(eps))
    }
}

/// Two-site jump operator
/// `c = 1/2 (sigma^+_a + sigma^+_b)(sigma^-_a - sigma^-_b)`.
///
/// The factor 1/2 makes `c† c` the singlet projector, so that `{c, 1 - c†c}`
/// is a complete Kraus set.
pub fn local_jump() -> CMatrix {
    let id = PauliOp::I.qubit_matrix();
    let plus = kron(&PauliOp::Plus.qubit_matrix(), &id) + kron(&id, &PauliOp::Plus.qubit_matrix());
    let minus =
        kron(&PauliOp::Minus.qubit_matrix(), &id) - kron(&id, &PauliOp::Minus.qubit_matrix());
    (plus * minus).scale(0.5)
}

/// `c_site` as a dense operator on `n` qubits.
pub fn jump_operator(site: usize, n: usize) -> Result<CMatrix> {
    let layout = RegisterLayout::qubits(n);
    let (a, b) = site_pair(&layout, site)?;
    Ok(LocalOperator::new(&layout, vec![a, b], local_jump())?.to_dense(&layout)?)
}

/// Kraus operators `{sin(theta) c, 1 + (cos(theta) - 1) c†c}` on a pair.
pub fn dissipative_kraus(theta: f64) -> Vec<CMatrix> {
    let jump = local_jump();
    let p = jump.adjoint() * &jump;
    let e1 = jump.scale(theta.sin());
    let e2 = linalg::identity(4) + p.scale(theta.cos() - 1.0);
    vec![e1, e2]
}

fn with_noise(layout: &RegisterLayout, ideal: Channel, a: usize, b: usize, eps: f64) -> Result<Channel> {
    check_epsilon(eps)?;
    if eps == 0.0 {
        return Ok(ideal);
    }
    let label = ideal.label().to_string();
    let pi = channels::double_depolarize(layout, a, b)?;
    Ok(channels::mix(&[(1.0 - eps, &ideal), (eps, &pi)])?.with_label(format!("{label}~{eps}")))
}

/// `(1 - eps) D_{i,i+1}(theta) + eps Pi_{i,i+1}`.
pub fn elementary_dissipative_map(layout: &RegisterLayout, spec: DissipativeMapSpec) -> Result<Channel> {
    let (a, b) = site_pair(layout, spec.site)?;
    dissipative_on_pair(layout, a, b, spec.theta, spec.epsilon)
}

fn dissipative_on_pair(layout: &RegisterLayout, a: usize, b: usize, theta: f64, eps: f64) -> Result<Channel> {
    let ideal = Channel::from_kraus(layout, &[a, b], dissipative_kraus(theta), format!("D({a},{b})"))?;
    with_noise(layout, ideal, a, b, eps)
}

/// Unitary `M^dagger(pi/2) C(phi) M(pi/2)` on (ancilla, a, b), ancilla first.
///
/// `M(pi/2) = (1 - P) (x) 1 - i P (x) sigma^x_anc` maps the singlet projector `P`
/// onto the ancilla, and `C(phi)` rotates the register by `exp(i phi sigma^z_a)`
/// when the ancilla is in `|0>`. The closing `M^dagger` is dropped at `phi = pi/2`
/// where it is not needed.
pub fn circuit_unitary(phi: f64) -> CMatrix {
    let jump = local_jump();
    let p = jump.adjoint() * &jump;
    let id4 = linalg::identity(4);
    let x = PauliOp::X.qubit_matrix();
    let m = kron(&linalg::identity(2), &(&id4 - &p)) - kron(&x, &p) * I;
    let rot = linalg::expm_hermitian(
        &kron(&PauliOp::Z.qubit_matrix(), &PauliOp::I.qubit_matrix()),
        -phi,
    );
    let ctrl = kron(&PauliOp::P1.qubit_matrix(), &id4) + kron(&PauliOp::P0.qubit_matrix(), &rot);
    if (phi - std::f64::consts::FRAC_PI_2).abs() < 1e-15 {
        ctrl * m
    } else {
        m.adjoint() * ctrl * m
    }
}

/// Reduced Kraus operators `<k|_anc U |1>_anc` of the circuit.
pub fn circuit_kraus(phi: f64) -> Vec<CMatrix> {
    let u = circuit_unitary(phi);
    (0..2)
        .map(|k| CMatrix::from_fn(4, 4, |r, col| u[(k * 4 + r, 4 + col)]))
        .collect()
}

/// The ancilla-assisted realization, reduced to the system register.
pub fn circuit_dissipative_map(layout: &RegisterLayout, spec: DissipativeMapSpec) -> Result<Channel> {
    let (a, b) = site_pair(layout, spec.site)?;
    let ideal = Channel::from_kraus(layout, &[a, b], circuit_kraus(spec.theta), format!("Dcirc({a},{b})"))?;
    with_noise(layout, ideal, a, b, spec.epsilon)
}

/// The circuit on a register that contains the ancilla: unitary on
/// (ancilla, a, b) followed by an ancilla reset to `|1>`.
pub fn circuit_dissipative_register(layout: &RegisterLayout, spec: DissipativeMapSpec) -> Result<Channel> {
    let anc = layout.ancilla().ok_or(MapError::NoAncilla)?;
    let (a, b) = site_pair(layout, spec.site)?;
    let mut u = circuit_unitary(spec.theta);
    if layout.ion_dim(anc) == 3 {
        // the parked ancilla level is left alone
        let mut big = linalg::identity(12);
        big.view_mut((0, 0), (8, 8)).copy_from(&u);
        u = big;
    }
    let unitary = Channel::unitary(layout, &[anc, a, b], u, "circuit")?;
    Ok(unitary.then(&channels::reset_channel(layout, anc, 1)?)?)
}

/// `exp(-i phi |11><11|)` on a pair.
pub fn pair_interaction(phi: f64) -> CMatrix {
    linalg::diag(&[ONE, ONE, ONE, c(0.0, -phi).exp()])
}

/// `exp(-i phi H)` with `H = sum_i (1 + sigma^z_i)(1 + sigma^z_{i+1}) / 4`,
/// one commuting pair factor per bond, each mixed with pair depolarizing noise.
pub fn hamiltonian_map(layout: &RegisterLayout, spec: HamiltonianMapSpec) -> Result<Channel> {
    hamiltonian_map_with(layout, spec, Boundary::Open)
}

pub fn hamiltonian_map_with(
    layout: &RegisterLayout,
    spec: HamiltonianMapSpec,
    boundary: Boundary,
) -> Result<Channel> {
    check_epsilon(spec.epsilon)?;
    let mut stages = vec![Channel::identity(layout)];
    for (a, b) in chain_pairs(layout, boundary) {
        let u = Channel::unitary(layout, &[a, b], pair_interaction(spec.phi), format!("U({a},{b})"))?;
        stages.push(with_noise(layout, u, a, b, spec.epsilon)?);
    }
    Ok(Channel::compose(&stages)?.with_label(format!("U(phi={})", spec.phi)))
}

/// `D_{1,2}`, then `D_{2,3}`, ..., as one channel.
pub fn dissipative_sweep_channel(
    layout: &RegisterLayout,
    theta: f64,
    epsilon: f64,
    boundary: Boundary,
) -> Result<Channel> {
    let mut stages = vec![Channel::identity(layout)];
    for (a, b) in chain_pairs(layout, boundary) {
        stages.push(dissipative_on_pair(layout, a, b, theta, epsilon)?);
    }
    Ok(Channel::compose(&stages)?.with_label("sweep"))
}

/// Dissipative sweep followed by the Hamiltonian map.
pub fn composite_map_channel(
    layout: &RegisterLayout,
    theta: f64,
    phi: f64,
    eps_diss: f64,
    eps_coh: f64,
    boundary: Boundary,
) -> Result<Channel> {
    let sweep = dissipative_sweep_channel(layout, theta, eps_diss, boundary)?;
    let ham = hamiltonian_map_with(layout, HamiltonianMapSpec { phi, epsilon: eps_coh }, boundary)?;
    Ok(sweep.then(&ham)?.with_label("composite"))
}

pub fn composite_dissipative_sweep(rho: &DensityOperator, theta: f64, epsilon: f64) -> Result<DensityOperator> {
    let ch = dissipative_sweep_channel(rho.layout(), theta, epsilon, Boundary::Open)?;
    Ok(ch.apply(rho)?)
}

pub fn composite_map(
    rho: &DensityOperator,
    theta: f64,
    phi: f64,
    eps_diss: f64,
    eps_coh: f64,
) -> Result<DensityOperator> {
    let ch = composite_map_channel(rho.layout(), theta, phi, eps_diss, eps_coh, Boundary::Open)?;
    Ok(ch.apply(rho)?)
}

/// Lindblad dissipator of the pair jump operator on a local 4x4 block:
/// `L[x] = c x c† - {c†c, x}/2`.
pub fn pair_dissipator(x: &CMatrix) -> CMatrix {
    let jump = local_jump();
    let p = jump.adjoint() * &jump;
    &jump * x * jump.adjoint() - (&p * x + x * &p).scale(0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::process_fidelity;
    use crate::linalg::{max_abs_diff, CVector, ZERO};
    use crate::register::PureState;

    fn singlet_triplet() -> (CVector, CVector) {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let s = CVector::from_column_slice(&[ZERO, c(h, 0.0), c(-h, 0.0), ZERO]);
        let t = CVector::from_column_slice(&[ZERO, c(h, 0.0), c(h, 0.0), ZERO]);
        (s, t)
    }

    #[test]
    fn jump_maps_singlet_to_triplet() {
        let (s, t) = singlet_triplet();
        let out = local_jump() * &s;
        assert!((out.norm() - 1.0).abs() < 1e-15);
        assert!((t.dotc(&out).norm() - 1.0).abs() < 1e-15);
        assert!((local_jump() * &t).norm() < 1e-15);
    }

    #[test]
    fn jump_squared_is_singlet_projector() {
        let (s, _) = singlet_triplet();
        let p = local_jump().adjoint() * local_jump();
        assert!(max_abs_diff(&p, &(&s * s.adjoint())) < 1e-15);
    }

    #[test]
    fn deterministic_pumping_kraus() {
        let ks = dissipative_kraus(std::f64::consts::FRAC_PI_2);
        assert!(max_abs_diff(&ks[0], &local_jump()) < 1e-15);
        let p = local_jump().adjoint() * local_jump();
        assert!(max_abs_diff(&ks[1], &(linalg::identity(4) - p)) < 1e-15);
    }

    #[test]
    fn circuit_matches_direct_kraus() {
        for phi in [0.1, std::f64::consts::FRAC_PI_4, std::f64::consts::FRAC_PI_2, 1.3] {
            let layout = RegisterLayout::qubits(2);
            let spec = DissipativeMapSpec { site: 0, theta: phi, epsilon: 0.0 };
            let direct = elementary_dissipative_map(&layout, spec).unwrap();
            let circ = circuit_dissipative_map(&layout, spec).unwrap();
            let f = process_fidelity(&direct, &circ).unwrap();
            assert!(f > 1.0 - 1e-12, "phi={phi} f={f}");
        }
    }

    #[test]
    fn hamiltonian_phase_on_two_spins() {
        let layout = RegisterLayout::qubits(2);
        let phi = 0.7;
        let ch = hamiltonian_map(&layout, HamiltonianMapSpec { phi, epsilon: 0.0 }).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let psi = PureState::new(layout.clone(), CVector::from_column_slice(&[c(h, 0.0), ZERO, ZERO, c(h, 0.0)]))
            .unwrap();
        let out = ch.apply(&psi.to_density()).unwrap();
        let expected = c(0.0, phi).exp() * 0.5;
        assert!((out.matrix()[(3, 0)] - expected.conj()).norm() < 1e-15);
    }

    #[test]
    fn bad_site_is_rejected() {
        let layout = RegisterLayout::qubits(3);
        assert!(matches!(
            elementary_dissipative_map(&layout, DissipativeMapSpec::ideal(2)),
            Err(MapError::BadSite { site: 2, n: 3 })
        ));
    }
}
