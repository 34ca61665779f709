#![allow(dead_code)]

use openmaps::linalg::{c, CMatrix, CVector};
use openmaps::register::{DensityOperator, PureState, RegisterLayout};
use proptest::prelude::*;

/// Entries for a random `d x d` complex matrix.
pub fn entries(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, 2 * d * d)
}

/// `A A† / Tr(A A†)` from raw entries; full rank almost surely.
pub fn state_from(layout: &RegisterLayout, raw: &[f64]) -> DensityOperator {
    let d = layout.dim();
    let a = CMatrix::from_fn(d, d, |i, j| c(raw[2 * (i * d + j)], raw[2 * (i * d + j) + 1]));
    let m = &a * a.adjoint();
    let tr = m.trace().re;
    DensityOperator::new(layout.clone(), m.unscale(tr)).expect("valid state")
}

pub fn pure_from(layout: &RegisterLayout, raw: &[f64]) -> PureState {
    let d = layout.dim();
    let v = CVector::from_fn(d, |i, _| c(raw[2 * i], raw[2 * i + 1]));
    PureState::normalized(layout.clone(), v).expect("non-zero vector")
}

/// A random state restricted to the `m`-excitation subspace.
pub fn subspace_state(layout: &RegisterLayout, m: usize, raw: &[f64]) -> DensityOperator {
    let rho = state_from(layout, raw);
    let d = layout.dim();
    let keep: Vec<bool> = (0..d).map(|i| layout.excitations(i) == m).collect();
    let mat = rho.matrix();
    let p = CMatrix::from_fn(d, d, |i, j| if keep[i] && keep[j] { mat[(i, j)] } else { c(0.0, 0.0) });
    let tr = p.trace().re;
    DensityOperator::new(layout.clone(), p.unscale(tr)).expect("valid state")
}

pub fn populations_close(got: &[f64], want: &[f64], tol: f64) -> bool {
    got.len() == want.len() && got.iter().zip(want).all(|(a, b)| (a - b).abs() <= tol)
}
