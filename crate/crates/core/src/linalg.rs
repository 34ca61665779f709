//! Dense complex linear algebra helpers shared by the rest of the crate.

use nalgebra::{Complex, DMatrix, DVector};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn from_rows(rows: &[&[C64]]) -> CMatrix {
    let n = rows.len();
    let m = rows.first().map_or(0, |r| r.len());
    CMatrix::from_fn(n, m, |i, j| rows[i][j])
}

pub fn real_matrix(n: usize, m: usize, data: &[f64]) -> CMatrix {
    CMatrix::from_fn(n, m, |i, j| c(data[i * m + j], 0.0))
}

pub fn diag(entries: &[C64]) -> CMatrix {
    CMatrix::from_diagonal(&CVector::from_column_slice(entries))
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

pub fn kron_all<'a>(factors: impl IntoIterator<Item = &'a CMatrix>) -> CMatrix {
    factors
        .into_iter()
        .fold(identity(1), |acc, f| acc.kronecker(f))
}

/// Largest entrywise modulus of `a - a†`.
pub fn hermiticity_defect(a: &CMatrix) -> f64 {
    let n = a.nrows();
    let mut worst: f64 = 0.0;
    for j in 0..n {
        for i in 0..=j {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn max_abs(a: &CMatrix) -> f64 {
    a.iter().fold(0.0_f64, |m, z| m.max(z.norm()))
}

pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter()
        .zip(b.iter())
        .fold(0.0_f64, |m, (x, y)| m.max((x - y).norm()))
}

pub fn frobenius(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Symmetrize a nearly Hermitian matrix before handing it to the eigensolver.
fn hermitian_part(a: &CMatrix) -> CMatrix {
    (a + a.adjoint()).scale(0.5)
}

/// Eigenvalues (ascending) and eigenvectors of a Hermitian matrix.
pub fn eigh(a: &CMatrix) -> (Vec<f64>, CMatrix) {
    let eig = hermitian_part(a).symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = CMatrix::from_fn(a.nrows(), a.ncols(), |i, j| eig.eigenvectors[(i, order[j])]);
    (values, vectors)
}

pub fn eigvalsh(a: &CMatrix) -> Vec<f64> {
    let mut v: Vec<f64> = hermitian_part(a).symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Applies `f` to the spectrum of a Hermitian matrix.
pub fn hermitian_function(a: &CMatrix, f: impl Fn(f64) -> C64) -> CMatrix {
    let (values, vectors) = eigh(a);
    let mut scaled = vectors.clone();
    for (j, &lambda) in values.iter().enumerate() {
        let fl = f(lambda);
        for z in scaled.column_mut(j).iter_mut() {
            *z *= fl;
        }
    }
    scaled * vectors.adjoint()
}

/// `exp(-i t H)` for Hermitian `H`.
pub fn expm_hermitian(h: &CMatrix, t: f64) -> CMatrix {
    hermitian_function(h, |lambda| C64::from_polar(1.0, -t * lambda))
}

/// Principal square root of a positive semidefinite matrix; negative
/// eigenvalues from rounding are clamped to zero.
pub fn sqrt_psd(a: &CMatrix) -> CMatrix {
    hermitian_function(a, |lambda| c(lambda.max(0.0).sqrt(), 0.0))
}

pub fn is_unitary(u: &CMatrix, tol: f64) -> bool {
    u.is_square() && max_abs_diff(&(u.adjoint() * u), &identity(u.nrows())) <= tol
}

/// Trace of a product `Tr(a b)` without forming the product.
pub fn trace_product(a: &CMatrix, b: &CMatrix) -> C64 {
    let n = a.nrows();
    let mut acc = ZERO;
    for i in 0..n {
        for k in 0..n {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expm_of_pauli_x() {
        let x = real_matrix(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let u = expm_hermitian(&x, std::f64::consts::FRAC_PI_2);
        let expected = from_rows(&[&[ZERO, -I], &[-I, ZERO]]);
        assert!(max_abs_diff(&u, &expected) < 1e-14);
    }

    #[test]
    fn sqrt_squares_back() {
        let a = real_matrix(2, 2, &[0.75, 0.25, 0.25, 0.25]);
        let s = sqrt_psd(&a);
        assert!(max_abs_diff(&(&s * &s), &a) < 1e-14);
    }

    #[test]
    fn eigh_sorted() {
        let a = diag(&[c(3.0, 0.0), c(-1.0, 0.0), c(2.0, 0.0)]);
        assert_eq!(eigvalsh(&a), vec![-1.0, 2.0, 3.0]);
    }
}
