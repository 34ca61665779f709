//! Excitation-number projectors, QND mapping onto an ancilla, post-selection
//! and the ancilla-assisted removal/injection of single excitations.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use thiserror::Error;

use crate::channels::{self, ChannelError};
use crate::gateset::{self, GateError};
use crate::linalg::{self, CMatrix, C64, ONE, ZERO};
use crate::register::{
    self, DensityOperator, PauliOp, PauliString, PauliSum, RegisterError, RegisterLayout,
};

pub const MAX_PROJECTOR_SPINS: usize = 12;

/// Success probabilities below this are reported as a failed post-selection.
pub const ZERO_SUCCESS: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum ProtocolError {
    #[error(transparent)]
    Register(#[from] RegisterError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Gate(#[from] GateError),
    #[error("need 0 <= m <= N <= {MAX_PROJECTOR_SPINS}, got m={m}, N={n}")]
    BadSubspace { m: usize, n: usize },
    #[error("the register has no ancilla")]
    NoAncilla,
    #[error("ancilla must be a qutrit to park it")]
    AncillaNotQutrit,
    #[error("ancilla is not prepared in |1> (population {0})")]
    AncillaNotReady(f64),
}

pub type Result<T> = std::result::Result<T, ProtocolError>;

/// Projector onto `m` excitations written as a polynomial in the collective
/// spin `S_z = sum_i sigma^z_i`, whose eigenvalue on `m` excitations is `2m - N`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceProjector {
    pub n: usize,
    pub m: usize,
    alpha: Vec<BigRational>,
}

impl SubspaceProjector {
    /// Coefficients `alpha_k` of `P = sum_k alpha_k S_z^k`, exact.
    pub fn alpha_exact(&self) -> &[BigRational] {
        &self.alpha
    }

    pub fn alpha(&self) -> Vec<f64> {
        self.alpha.iter().map(|a| a.to_f64().unwrap_or(f64::NAN)).collect()
    }

    /// Polynomial value at an `S_z` eigenvalue, exact.
    pub fn eval(&self, sz: i64) -> BigRational {
        let x = BigRational::from_integer(BigInt::from(sz));
        self.alpha
            .iter()
            .rev()
            .fold(BigRational::zero(), |acc, a| acc * &x + a)
    }

    /// Diagonal of the projector on `n` qubits, evaluated exactly per `S_z` eigenvalue.
    pub fn diagonal(&self) -> Vec<f64> {
        let layout = RegisterLayout::qubits(self.n);
        self.diagonal_on(&layout)
    }

    /// Diagonal on any register whose system ions are the `n` spins.
    pub fn diagonal_on(&self, layout: &RegisterLayout) -> Vec<f64> {
        let values: Vec<f64> = (0..=self.n)
            .map(|m| self.eval(2 * m as i64 - self.n as i64).to_f64().unwrap_or(f64::NAN))
            .collect();
        (0..layout.dim()).map(|i| values[layout.excitations(i)]).collect()
    }

    pub fn matrix(&self) -> CMatrix {
        let d = self.diagonal();
        CMatrix::from_diagonal(&linalg::CVector::from_iterator(d.len(), d.iter().map(|&x| linalg::c(x, 0.0))))
    }
}

/// Solves the Vandermonde system `sum_k alpha_k s_j^k = delta_{j m}` over the
/// `N + 1` eigenvalues `s_j = 2j - N` in exact rational arithmetic.
pub fn build_projector(m: usize, n: usize) -> Result<SubspaceProjector> {
    if m > n || n > MAX_PROJECTOR_SPINS || n == 0 {
        return Err(ProtocolError::BadSubspace { m, n });
    }
    let size = n + 1;
    let rat = |v: i64| BigRational::from_integer(BigInt::from(v));
    let mut a: Vec<Vec<BigRational>> = (0..size)
        .map(|j| {
            let s = 2 * j as i64 - n as i64;
            let mut row: Vec<BigRational> = (0..size).map(|k| rat(s).pow(k as i32)).collect();
            row.push(if j == m { BigRational::one() } else { BigRational::zero() });
            row
        })
        .collect();
    for col in 0..size {
        let pivot = (col..size).find(|&r| !a[r][col].is_zero()).expect("Vandermonde is regular");
        a.swap(col, pivot);
        let p = a[col][col].clone();
        for x in a[col].iter_mut() {
            *x = &*x / &p;
        }
        for r in 0..size {
            if r != col && !a[r][col].is_zero() {
                let f = a[r][col].clone();
                let pivot_row = a[col].clone();
                for (x, y) in a[r].iter_mut().zip(&pivot_row) {
                    *x = &*x - &f * y;
                }
            }
        }
    }
    let alpha = a.into_iter().map(|row| row[size].clone()).collect();
    Ok(SubspaceProjector { n, m, alpha })
}

/// A unitary that maps each basis state to a single basis state with a phase.
#[derive(Debug, Clone)]
struct Monomial {
    target: Vec<usize>,
    phase: Vec<C64>,
}

impl Monomial {
    fn conjugate(&self, m: &CMatrix) -> CMatrix {
        let d = m.nrows();
        let mut out = CMatrix::zeros(d, d);
        for j in 0..d {
            let (tj, pj) = (self.target[j], self.phase[j].conj());
            for i in 0..d {
                out[(self.target[i], tj)] = self.phase[i] * m[(i, j)] * pj;
            }
        }
        out
    }

    fn dense(&self) -> CMatrix {
        let d = self.target.len();
        let mut u = CMatrix::zeros(d, d);
        for i in 0..d {
            u[(self.target[i], i)] = self.phase[i];
        }
        u
    }
}

/// `exp(-i pi/2 Q (x) sigma^x_anc)` where `Q` projects onto excitation numbers
/// selected by `condition`. Parked ancilla levels are untouched.
fn conditional_flip(layout: &RegisterLayout, condition: impl Fn(usize) -> bool) -> Result<Monomial> {
    let anc = layout.ancilla().ok_or(ProtocolError::NoAncilla)?;
    let stride = layout.stride(anc);
    let d = layout.dim();
    let mut target = (0..d).collect::<Vec<_>>();
    let mut phase = vec![ONE; d];
    for i in 0..d {
        let a = layout.digit(i, anc);
        if a < 2 && condition(layout.excitations(i)) {
            target[i] = if a == 0 { i + stride } else { i - stride };
            phase[i] = -linalg::I;
        }
    }
    Ok(Monomial { target, phase })
}

fn check_m0(layout: &RegisterLayout, m0: usize) -> Result<usize> {
    let n = layout.n_system();
    if m0 > n {
        return Err(ProtocolError::BadSubspace { m: m0, n });
    }
    Ok(n)
}

/// `U = P_{m0} (x) (-i sigma^x_anc) + (1 - P_{m0}) (x) 1` as a dense matrix.
pub fn qnd_unitary(m0: usize, layout: &RegisterLayout) -> Result<CMatrix> {
    check_m0(layout, m0)?;
    Ok(conditional_flip(layout, |m| m == m0)?.dense())
}

/// Which excitation numbers a conditional ancilla flip reacts to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlipCondition {
    Equal,
    Above,
    Below,
}

/// `exp(-i pi/2 Q (x) sigma^x_anc)` with `Q` selecting `m == m0`, `m > m0` or
/// `m < m0`, as a dense matrix. The first step of QND, removal and injection.
pub fn flip_unitary(layout: &RegisterLayout, m0: usize, condition: FlipCondition) -> Result<CMatrix> {
    check_m0(layout, m0)?;
    let u = match condition {
        FlipCondition::Equal => conditional_flip(layout, |m| m == m0)?,
        FlipCondition::Above => conditional_flip(layout, |m| m > m0)?,
        FlipCondition::Below => conditional_flip(layout, |m| m < m0)?,
    };
    Ok(u.dense())
}

/// Applies the QND mapping to a state on a register with an ancilla.
pub fn apply_qnd(rho: &DensityOperator, m0: usize) -> Result<DensityOperator> {
    check_m0(rho.layout(), m0)?;
    let u = conditional_flip(rho.layout(), |m| m == m0)?;
    Ok(rho.map_matrix(|m| u.conjugate(m)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PostSelection {
    pub success_probability: f64,
    /// `None` when the success probability is below [`ZERO_SUCCESS`].
    pub state: Option<DensityOperator>,
}

/// `P_{m0} rho P_{m0} / Tr(P_{m0} rho)`; equivalent to the QND mapping followed
/// by finding the ancilla in `|0>`.
pub fn postselect(rho: &DensityOperator, m0: usize) -> Result<PostSelection> {
    let layout = rho.layout().clone();
    check_m0(&layout, m0)?;
    let keep: Vec<bool> = (0..layout.dim()).map(|i| layout.excitations(i) == m0).collect();
    let m = rho.matrix();
    let p: f64 = (0..layout.dim()).filter(|&i| keep[i]).map(|i| m[(i, i)].re).sum();
    if p < ZERO_SUCCESS {
        return Ok(PostSelection { success_probability: p.max(0.0), state: None });
    }
    let d = layout.dim();
    let projected = CMatrix::from_fn(d, d, |i, j| if keep[i] && keep[j] { m[(i, j)] / p } else { ZERO });
    Ok(PostSelection {
        success_probability: p,
        state: Some(DensityOperator::from_matrix_unchecked(layout, projected)?),
    })
}

fn ready_ancilla(rho: &DensityOperator) -> Result<usize> {
    let layout = rho.layout();
    let anc = layout.ancilla().ok_or(ProtocolError::NoAncilla)?;
    if layout.ion_dim(anc) != 3 {
        return Err(ProtocolError::AncillaNotQutrit);
    }
    let pop: f64 = (0..layout.dim())
        .filter(|&i| layout.digit(i, anc) == 1)
        .map(|i| rho.matrix()[(i, i)].re)
        .sum();
    if (pop - 1.0).abs() > 1e-9 {
        return Err(ProtocolError::AncillaNotReady(pop));
    }
    Ok(anc)
}

/// Resonant exchange `exp(-i pi/2 (sigma^+_a sigma^-_s + h.c.))` between ancilla and a site.
fn exchange(rho: &DensityOperator, anc: usize, site: usize) -> Result<DensityOperator> {
    let g = PauliSum::new(vec![
        PauliString::new(vec![(anc, PauliOp::Plus), (site, PauliOp::Minus)]),
        PauliString::new(vec![(anc, PauliOp::Minus), (site, PauliOp::Plus)]),
    ]);
    Ok(gateset::pauli_exp(rho, &g, 0.5)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Direction {
    Remove,
    Inject,
}

fn pump(rho: &DensityOperator, m0: usize, dir: Direction) -> Result<DensityOperator> {
    let anc = ready_ancilla(rho)?;
    let layout = rho.layout().clone();
    let n = check_m0(&layout, m0)?;
    let sites = layout.system_ions();
    // Enough sites that the first occupied (removal) or empty (injection) one is
    // always reached when a correction is needed.
    let (flip, reach): (Box<dyn Fn(usize) -> bool>, usize) = match dir {
        Direction::Remove => (Box::new(move |m| m > m0), n - m0),
        Direction::Inject => (Box::new(move |m| m < m0), m0),
    };
    let u = conditional_flip(&layout, flip)?;
    let mut state = rho.map_matrix(|m| u.conjugate(m));
    // After the mapping the ancilla reads |0> on branches that need a
    // correction; for injection it must carry an excitation instead.
    let done_level = match dir {
        Direction::Remove => 1,
        Direction::Inject => {
            state = gateset::apply_r(&state, 1.0, 0.0, &[anc])?;
            0
        }
    };
    state = channels::park_ancilla(&state, anc, done_level)?;
    for &site in sites.iter().take(reach) {
        state = exchange(&state, anc, site)?;
        state = channels::park_ancilla(&state, anc, done_level)?;
    }
    Ok(channels::reset_ancilla(&state, anc, 1)?)
}

/// Removes one excitation from every branch with more than `m0` excitations.
/// `rho` lives on a register with a qutrit ancilla prepared in `|1>`.
pub fn stabilize_remove(rho: &DensityOperator, m0: usize) -> Result<DensityOperator> {
    pump(rho, m0, Direction::Remove)
}

/// Adds one excitation to every branch with fewer than `m0` excitations.
pub fn stabilize_inject(rho: &DensityOperator, m0: usize) -> Result<DensityOperator> {
    pump(rho, m0, Direction::Inject)
}

/// Removal, then injection.
pub fn stabilize(rho: &DensityOperator, m0: usize) -> Result<DensityOperator> {
    stabilize_inject(&stabilize_remove(rho, m0)?, m0)
}

/// Runs a protocol on a system-only state by attaching a qutrit ancilla in `|1>`
/// at index 0 and tracing it out afterwards.
pub fn on_system(
    rho: &DensityOperator,
    m0: usize,
    protocol: fn(&DensityOperator, usize) -> Result<DensityOperator>,
) -> Result<DensityOperator> {
    if rho.layout().ancilla().is_some() {
        return protocol(rho, m0);
    }
    let anc_layout = RegisterLayout::new(vec![3], Some(0))?;
    let anc = DensityOperator::basis(anc_layout, &[1])?;
    let full = anc.tensor(rho)?;
    let out = protocol(&full, m0)?;
    Ok(register::partial_trace(&out, &[0])?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frac(num: i64, den: i64) -> BigRational {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }

    #[test]
    fn three_spin_coefficients() {
        let p1 = build_projector(1, 3).unwrap();
        let want: Vec<BigRational> = [9, -9, -1, 1].iter().map(|&v| frac(v, 16)).collect();
        assert_eq!(p1.alpha_exact(), want.as_slice());
        let p2 = build_projector(2, 3).unwrap();
        let want: Vec<BigRational> = [9, 9, -1, -1].iter().map(|&v| frac(v, 16)).collect();
        assert_eq!(p2.alpha_exact(), want.as_slice());
    }

    #[test]
    fn projector_bounds() {
        assert!(build_projector(4, 3).is_err());
        assert!(build_projector(0, 13).is_err());
        assert!(build_projector(12, 12).is_ok());
    }

    #[test]
    fn qnd_flips_only_matching_subspace() {
        let layout = RegisterLayout::with_ancilla(2, 2).unwrap();
        let rho = DensityOperator::from_label(layout.clone(), "110").unwrap();
        let out = apply_qnd(&rho, 1).unwrap();
        let expected = DensityOperator::from_label(layout.clone(), "010").unwrap();
        assert!(linalg::max_abs_diff(out.matrix(), expected.matrix()) < 1e-15);
        let other = DensityOperator::from_label(layout, "111").unwrap();
        assert_eq!(apply_qnd(&other, 1).unwrap(), other);
    }

    #[test]
    fn zero_success_is_reported() {
        let layout = RegisterLayout::qubits(3);
        let rho = DensityOperator::from_label(layout, "000").unwrap();
        let ps = postselect(&rho, 2).unwrap();
        assert_eq!(ps.state, None);
        assert_eq!(ps.success_probability, 0.0);
    }

    #[test]
    fn protocol_requires_prepared_qutrit_ancilla() {
        let rho = DensityOperator::from_label(RegisterLayout::qubits(3), "111").unwrap();
        assert_eq!(stabilize_remove(&rho, 1), Err(ProtocolError::NoAncilla));
        let qubit_anc = DensityOperator::from_label(RegisterLayout::with_ancilla(2, 3).unwrap(), "1111").unwrap();
        assert_eq!(stabilize_remove(&qubit_anc, 1), Err(ProtocolError::AncillaNotQutrit));
        let wrong = DensityOperator::from_label(RegisterLayout::with_ancilla(3, 3).unwrap(), "0111").unwrap();
        assert!(matches!(stabilize_remove(&wrong, 1), Err(ProtocolError::AncillaNotReady(_))));
    }

    #[test]
    fn single_excitation_moves() {
        let layout = RegisterLayout::with_ancilla(3, 3).unwrap();
        let full = DensityOperator::from_label(layout.clone(), "1111").unwrap();
        let out = stabilize_remove(&full, 1).unwrap();
        let expected = DensityOperator::from_label(layout.clone(), "1011").unwrap();
        assert!(linalg::max_abs_diff(out.matrix(), expected.matrix()) < 1e-14);
        let empty = DensityOperator::from_label(layout.clone(), "1000").unwrap();
        let out = stabilize_inject(&empty, 1).unwrap();
        let expected = DensityOperator::from_label(layout, "1100").unwrap();
        assert!(linalg::max_abs_diff(out.matrix(), expected.matrix()) < 1e-14);
    }
}
