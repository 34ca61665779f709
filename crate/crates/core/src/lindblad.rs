//! Continuous-time master equation of the chain and its comparison with the
//! stroboscopic map sequence.
//!
//! `d rho/dt = -i [U H, rho] + kappa sum_i (c_i rho c_i† - {c_i† c_i, rho}/2)`,
//! integrated with fixed-step RK4.

use thiserror::Error;

use crate::linalg::{self, c, CMatrix};
use crate::maps::{self, Boundary, MapError};
use crate::register::{self, DensityOperator, LocalIndex, RegisterError};

/// Largest allowed `dt (U + kappa)`.
pub const STABILITY_BOUND: f64 = 0.05;
/// Largest tolerated drift of the trace before renormalization.
pub const TRACE_DRIFT_TOL: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum LindbladError {
    #[error(transparent)]
    Register(#[from] RegisterError),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error("dt (U + kappa) = {0} exceeds the stability bound {STABILITY_BOUND}")]
    StepTooLarge(f64),
    #[error("time step and duration must be positive and finite")]
    BadTime,
    #[error("trace drifted by {0:e} at t = {1}")]
    TraceDrift(f64, f64),
    #[error("the comparison with the map sequence needs theta <= 0.2, got {0}")]
    ThetaTooLarge(f64),
    #[error("state has {got} system spins but the equation is for {want}")]
    SizeMismatch { got: usize, want: usize },
}

pub type Result<T> = std::result::Result<T, LindbladError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MasterEqSpec {
    pub n: usize,
    /// Interaction energy `U`.
    pub u: f64,
    /// Pumping rate `kappa`.
    pub kappa: f64,
    pub boundary: Boundary,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DensityOperator>,
}

impl Trajectory {
    pub fn last(&self) -> &DensityOperator {
        self.states.last().expect("trajectory holds the initial state")
    }
}

struct Generator {
    /// Diagonal of `U H`.
    energies: Vec<f64>,
    pairs: Vec<LocalIndex>,
    jump: CMatrix,
    projector: CMatrix,
    kappa: f64,
}

impl Generator {
    fn new(rho: &DensityOperator, spec: &MasterEqSpec) -> Result<Self> {
        let layout = rho.layout();
        if layout.n_system() != spec.n {
            return Err(LindbladError::SizeMismatch { got: layout.n_system(), want: spec.n });
        }
        let bonds = maps::chain_pairs(layout, spec.boundary);
        let energies = (0..layout.dim())
            .map(|i| {
                let occupied = bonds
                    .iter()
                    .filter(|&&(a, b)| layout.digit(i, a) == 1 && layout.digit(i, b) == 1)
                    .count();
                spec.u * occupied as f64
            })
            .collect();
        let pairs = bonds
            .iter()
            .map(|&(a, b)| LocalIndex::new(layout, &[a, b]))
            .collect::<std::result::Result<_, _>>()?;
        let jump = maps::local_jump();
        let projector = jump.adjoint() * &jump;
        Ok(Self { energies, pairs, jump, projector, kappa: spec.kappa })
    }

    fn apply(&self, m: &CMatrix) -> CMatrix {
        let d = m.nrows();
        let mut out = CMatrix::from_fn(d, d, |i, j| {
            c(0.0, -(self.energies[i] - self.energies[j])) * m[(i, j)]
        });
        if self.kappa == 0.0 {
            return out;
        }
        for idx in &self.pairs {
            let gain = register::conjugate(m, idx, &self.jump);
            let mut left = m.clone();
            register::left_multiply(&mut left, idx, &self.projector);
            let mut right = m.clone();
            register::right_multiply(&mut right, idx, &self.projector);
            out += (gain - (left + right).scale(0.5)).scale(self.kappa);
        }
        out
    }
}

/// `L[rho]` for the full generator.
pub fn liouvillian_apply(rho: &DensityOperator, spec: &MasterEqSpec) -> Result<CMatrix> {
    Ok(Generator::new(rho, spec)?.apply(rho.matrix()))
}

fn rk4_step(g: &Generator, m: &CMatrix, dt: f64) -> CMatrix {
    let k1 = g.apply(m);
    let k2 = g.apply(&(m + k1.scale(dt / 2.0)));
    let k3 = g.apply(&(m + k2.scale(dt / 2.0)));
    let k4 = g.apply(&(m + k3.scale(dt)));
    m + (k1 + k2.scale(2.0) + k3.scale(2.0) + k4).scale(dt / 6.0)
}

/// Integrates to `t_final` with steps of `dt` (the last step is shortened to land on `t_final`).
pub fn integrate(rho0: &DensityOperator, spec: &MasterEqSpec, t_final: f64, dt: f64) -> Result<Trajectory> {
    if !(dt > 0.0 && dt.is_finite() && t_final >= 0.0 && t_final.is_finite()) {
        return Err(LindbladError::BadTime);
    }
    let bound = dt * (spec.u.abs() + spec.kappa);
    if bound > STABILITY_BOUND {
        return Err(LindbladError::StepTooLarge(bound));
    }
    let g = Generator::new(rho0, spec)?;
    let steps = (t_final / dt - 1e-9).ceil().max(0.0) as usize;
    let mut times = vec![0.0];
    let mut states = vec![rho0.clone()];
    let mut m = rho0.matrix().clone();
    let mut t = 0.0;
    for k in 0..steps {
        let h = if k + 1 == steps { t_final - t } else { dt };
        m = rk4_step(&g, &m, h);
        t = if k + 1 == steps { t_final } else { t + h };
        let tr = m.trace();
        let drift = (tr - c(1.0, 0.0)).norm();
        if drift > TRACE_DRIFT_TOL {
            return Err(LindbladError::TraceDrift(drift, t));
        }
        m.unscale_mut(tr.re);
        times.push(t);
        states.push(DensityOperator::from_matrix_unchecked(rho0.layout().clone(), m.clone())?);
    }
    Ok(Trajectory { times, states })
}

/// Largest Hilbert-Schmidt distance, over `n_steps` composite maps, between the
/// map sequence at `(theta, phi)` and the master equation with `U dt = phi`,
/// `kappa dt = theta^2` sampled at the same times (`dt = 1`).
pub fn compare_stroboscopic(rho0: &DensityOperator, theta: f64, phi: f64, n_steps: usize) -> Result<f64> {
    if theta > 0.2 {
        return Err(LindbladError::ThetaTooLarge(theta));
    }
    let layout = rho0.layout().clone();
    let spec = MasterEqSpec { n: layout.n_system(), u: phi, kappa: theta * theta, boundary: Boundary::Open };
    let map = maps::composite_map_channel(&layout, theta, phi, 0.0, 0.0, Boundary::Open)?;
    let g = Generator::new(rho0, &spec)?;
    let substeps = ((phi.abs() + spec.kappa) / (STABILITY_BOUND / 4.0)).ceil().max(8.0) as usize;
    let h = 1.0 / substeps as f64;
    let mut strobe = rho0.matrix().clone();
    let mut cont = rho0.matrix().clone();
    let mut worst: f64 = 0.0;
    for _ in 0..n_steps {
        strobe = map.apply_matrix(&strobe);
        for _ in 0..substeps {
            cont = rk4_step(&g, &cont, h);
        }
        worst = worst.max(linalg::frobenius(&(&strobe - &cont)));
    }
    Ok(worst)
}

/// Hilbert-Schmidt norm of the superoperator `D(theta) - (1 + theta^2 L)` for
/// one pair, where `L` is the pair dissipator. Scales as `theta^4`.
pub fn map_expansion_error(theta: f64) -> f64 {
    let kraus = maps::dissipative_kraus(theta);
    let mut total = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            let mut e = CMatrix::zeros(4, 4);
            e[(i, j)] = c(1.0, 0.0);
            let mapped = kraus.iter().fold(CMatrix::zeros(4, 4), |acc, k| acc + k * &e * k.adjoint());
            let linear = &e + maps::pair_dissipator(&e).scale(theta * theta);
            total += linalg::frobenius(&(mapped - linear)).powi(2);
        }
    }
    total.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::register::RegisterLayout;

    fn spec(n: usize, u: f64, kappa: f64) -> MasterEqSpec {
        MasterEqSpec { n, u, kappa, boundary: Boundary::Open }
    }

    #[test]
    fn generator_is_traceless_and_hermitian_preserving() {
        let rho = DensityOperator::from_label(RegisterLayout::qubits(3), "101").unwrap();
        let rho = DensityOperator::from_matrix_unchecked(
            rho.layout().clone(),
            rho.matrix().scale(0.5) + DensityOperator::maximally_mixed(rho.layout().clone()).matrix().scale(0.5),
        )
        .unwrap();
        let l = liouvillian_apply(&rho, &spec(3, 0.7, 1.3)).unwrap();
        assert!(l.trace().norm() < 1e-14);
        assert!(linalg::hermiticity_defect(&l) < 1e-14);
    }

    #[test]
    fn step_bound_is_enforced() {
        let rho = DensityOperator::from_label(RegisterLayout::qubits(2), "10").unwrap();
        assert!(matches!(integrate(&rho, &spec(2, 1.0, 1.0), 1.0, 0.1), Err(LindbladError::StepTooLarge(_))));
        assert!(integrate(&rho, &spec(2, 1.0, 1.0), 1.0, 0.025).is_ok());
    }

    #[test]
    fn size_mismatch() {
        let rho = DensityOperator::from_label(RegisterLayout::qubits(2), "10").unwrap();
        assert!(matches!(
            integrate(&rho, &spec(3, 0.0, 1.0), 1.0, 0.01),
            Err(LindbladError::SizeMismatch { got: 2, want: 3 })
        ));
    }
}
