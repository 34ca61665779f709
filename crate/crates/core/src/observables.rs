//! Dicke states and the figures of merit tracked during a run.
//!
//! Every function accepts states with or without an ancilla; only the system
//! ions are looked at.

use thiserror::Error;

use crate::linalg::{c, CMatrix, CVector, C64, ZERO};
use crate::register::{DensityOperator, PureState, RegisterError, RegisterLayout};

#[derive(Debug, Error, PartialEq)]
pub enum ObservableError {
    #[error(transparent)]
    Register(#[from] RegisterError),
    #[error("need 0 <= m <= N with N >= 1, got m={m}, N={n}")]
    BadSubspace { m: usize, n: usize },
    #[error("ion {ion} is not a system spin")]
    NotSystemIon { ion: usize },
}

pub type Result<T> = std::result::Result<T, ObservableError>;

/// Basis indices of `layout` holding `m` excitations on the system ions.
fn subspace_indices(layout: &RegisterLayout, m: usize) -> Vec<usize> {
    (0..layout.dim()).filter(|&i| layout.excitations(i) == m).collect()
}

/// Equal-weight superposition of all `C(N, m)` placements of `m` excitations.
pub fn dicke_state(m: usize, n: usize) -> Result<PureState> {
    if m > n || n == 0 {
        return Err(ObservableError::BadSubspace { m, n });
    }
    let layout = RegisterLayout::qubits(n);
    let idx = subspace_indices(&layout, m);
    let amp = c(1.0 / (idx.len() as f64).sqrt(), 0.0);
    let mut v = CVector::zeros(layout.dim());
    for i in idx {
        v[i] = amp;
    }
    Ok(PureState::new(layout, v)?)
}

/// `<D(m,N)| rho_sys |D(m,N)>`.
pub fn dicke_fidelity(rho: &DensityOperator, m: usize) -> Result<f64> {
    let sys = rho.system_state();
    let n = sys.layout().n_ions();
    if m > n {
        return Err(ObservableError::BadSubspace { m, n });
    }
    let idx = subspace_indices(sys.layout(), m);
    let mat = sys.matrix();
    let mut acc = ZERO;
    for &i in &idx {
        for &j in &idx {
            acc += mat[(i, j)];
        }
    }
    Ok(acc.re / idx.len() as f64)
}

pub fn purity(rho: &DensityOperator) -> f64 {
    rho.system_state().purity()
}

/// Populations `Tr(P_m rho)` for `m = 0..=N`.
pub fn subspace_populations(rho: &DensityOperator) -> Vec<f64> {
    let layout = rho.layout();
    let mut pops = vec![0.0; layout.n_system() + 1];
    for (i, p) in rho.diagonal().into_iter().enumerate() {
        pops[layout.excitations(i)] += p;
    }
    pops
}

fn check_system_ion(layout: &RegisterLayout, ion: usize) -> Result<()> {
    if ion >= layout.n_ions() || Some(ion) == layout.ancilla() {
        Err(ObservableError::NotSystemIon { ion })
    } else {
        Ok(())
    }
}

/// `<sigma^+_i sigma^-_j>` for system ions `i`, `j` given as register indices.
pub fn two_point(rho: &DensityOperator, i: usize, j: usize) -> Result<C64> {
    let layout = rho.layout();
    check_system_ion(layout, i)?;
    check_system_ion(layout, j)?;
    let m = rho.matrix();
    let (si, sj) = (layout.stride(i), layout.stride(j));
    let mut acc = ZERO;
    if i == j {
        for k in 0..layout.dim() {
            if layout.digit(k, i) == 1 {
                acc += m[(k, k)];
            }
        }
        return Ok(acc);
    }
    // Tr(sigma^+_i sigma^-_j rho) = sum over y with (i,j) = (0,1) of rho[y, x],
    // x = y with the excitation moved from j to i.
    for y in 0..layout.dim() {
        if layout.digit(y, i) == 0 && layout.digit(y, j) == 1 {
            let x = y + si - sj;
            acc += m[(y, x)];
        }
    }
    Ok(acc)
}

/// `<S^+ S^->` with `S^pm = sum_i sigma^pm_i` over the system ions.
pub fn s_plus_s_minus(rho: &DensityOperator) -> Result<f64> {
    let sys = rho.layout().system_ions();
    let mut acc = ZERO;
    for &i in &sys {
        for &j in &sys {
            acc += two_point(rho, i, j)?;
        }
    }
    Ok(acc.re)
}

/// Nearest-neighbour off-diagonal order inside the `m` subspace:
/// `Re sum_j Tr(sigma^-_j sigma^+_{j+1} P rho P) / Tr(P rho P)`.
/// `None` if the subspace is empty.
pub fn offdiag_order(rho: &DensityOperator, m: usize) -> Result<Option<f64>> {
    let layout = rho.layout();
    let n = layout.n_system();
    if m > n {
        return Err(ObservableError::BadSubspace { m, n });
    }
    let pop = subspace_populations(rho)[m];
    if pop < 1e-12 {
        return Ok(None);
    }
    let sys = layout.system_ions();
    let mat = rho.matrix();
    let mut acc = ZERO;
    for w in sys.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (sa, sb) = (layout.stride(a), layout.stride(b));
        // the real part is the same for hops in either direction
        for y in 0..layout.dim() {
            if layout.digit(y, a) == 0 && layout.digit(y, b) == 1 && layout.excitations(y) == m {
                acc += mat[(y, y + sa - sb)];
            }
        }
    }
    Ok(Some(acc.re / pop))
}

/// `2^-N sum_m C(N, m) |D(m,N)><D(m,N)|`.
pub fn dicke_mixture(n: usize) -> Result<DensityOperator> {
    let layout = RegisterLayout::qubits(n);
    let d = layout.dim();
    let mut mat = CMatrix::zeros(d, d);
    let counts: Vec<usize> = (0..d).map(|i| layout.excitations(i)).collect();
    for i in 0..d {
        for j in 0..d {
            if counts[i] == counts[j] {
                // weight C(N,m)/2^N times the 1/C(N,m) entries of |D><D|
                mat[(i, j)] = c(2f64.powi(-(n as i32)), 0.0);
            }
        }
    }
    Ok(DensityOperator::from_matrix_unchecked(layout, mat)?)
}

/// `<sigma^+_i sigma^-_j>` in `|D(m,N)>` for `i != j`: `(m/N)(1 - m/N) / (1 - 1/N)`.
pub fn analytic_dicke_order(m: usize, n: usize) -> Result<f64> {
    if m > n || n < 2 {
        return Err(ObservableError::BadSubspace { m, n });
    }
    let f = m as f64 / n as f64;
    Ok(f * (1.0 - f) / (1.0 - 1.0 / n as f64))
}

/// `<S^+ S^->` in `|D(m,N)>`: `m (N + 1 - m)`.
pub fn analytic_s_plus_s_minus(m: usize, n: usize) -> Result<f64> {
    if m > n {
        return Err(ObservableError::BadSubspace { m, n });
    }
    Ok((m * (n + 1 - m)) as f64)
}

/// Order `<sigma^+_i sigma^-_j>` of the Dicke mixture; independent of `N`.
pub fn mixture_order(n: usize) -> Result<f64> {
    let rho = dicke_mixture(n)?;
    Ok(two_point(&rho, 0, n - 1)?.re)
}
