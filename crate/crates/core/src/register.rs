//! Register layouts, density operators and local operator kernels.
//!
//! Basis ordering: ion 0 is the most significant digit, so `|q0 q1 ... q_{n-1}>`
//! maps to index `sum q_k * stride_k`. On every ion `|1>` is the excitation
//! (`sigma^z |1> = +|1>`), and qutrit ions carry an extra parked level `|2>`
//! that qubit operators annihilate.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::linalg::{self, c, CMatrix, CVector, C64, ONE, ZERO};

pub const HERMITICITY_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-10;
pub const MIN_EIGENVALUE: f64 = -1e-8;

#[derive(Debug, Error, PartialEq)]
pub enum RegisterError {
    #[error("ion dimension {0} is not supported (expected 2 or 3)")]
    UnsupportedDimension(usize),
    #[error("register must contain at least one ion")]
    Empty,
    #[error("ion index {ion} out of range for a register of {len} ions")]
    IonOutOfRange { ion: usize, len: usize },
    #[error("ion {0} appears twice in an operator support")]
    DuplicateIon(usize),
    #[error("matrix is {rows}x{cols} but the register dimension is {dim}")]
    DimensionMismatch { rows: usize, cols: usize, dim: usize },
    #[error("operator is not Hermitian (defect {0:e})")]
    NotHermitian(f64),
    #[error("trace is {0} instead of 1")]
    BadTrace(f64),
    #[error("minimum eigenvalue {0:e} is below tolerance")]
    NotPositive(f64),
    #[error("state vector norm is {0} instead of 1")]
    NotNormalized(f64),
    #[error("basis label {label:?} does not fit the register: {reason}")]
    BadBasisLabel { label: String, reason: String },
    #[error("layouts differ: {0} vs {1}")]
    LayoutMismatch(String, String),
}

pub type Result<T> = std::result::Result<T, RegisterError>;

/// Local dimensions of the ions in a register and which ion (if any) is the ancilla.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RegisterLayout {
    dims: Vec<usize>,
    ancilla: Option<usize>,
}

impl RegisterLayout {
    pub fn new(dims: Vec<usize>, ancilla: Option<usize>) -> Result<Self> {
        if dims.is_empty() {
            return Err(RegisterError::Empty);
        }
        if let Some(&bad) = dims.iter().find(|&&d| d != 2 && d != 3) {
            return Err(RegisterError::UnsupportedDimension(bad));
        }
        if let Some(a) = ancilla {
            if a >= dims.len() {
                return Err(RegisterError::IonOutOfRange { ion: a, len: dims.len() });
            }
        }
        Ok(Self { dims, ancilla })
    }

    /// `n` qubit system spins, no ancilla.
    pub fn qubits(n: usize) -> Self {
        Self::new(vec![2; n], None).expect("qubit register needs at least one ion")
    }

    /// Ancilla of dimension `ancilla_dim` at index 0 followed by `n_system` qubits.
    pub fn with_ancilla(ancilla_dim: usize, n_system: usize) -> Result<Self> {
        let mut dims = vec![ancilla_dim];
        dims.extend(std::iter::repeat(2).take(n_system));
        Self::new(dims, Some(0))
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn n_ions(&self) -> usize {
        self.dims.len()
    }

    pub fn ion_dim(&self, ion: usize) -> usize {
        self.dims[ion]
    }

    pub fn ancilla(&self) -> Option<usize> {
        self.ancilla
    }

    pub fn dim(&self) -> usize {
        self.dims.iter().product()
    }

    /// Ions that are not the ancilla, in register order.
    pub fn system_ions(&self) -> Vec<usize> {
        (0..self.n_ions()).filter(|&i| Some(i) != self.ancilla).collect()
    }

    pub fn n_system(&self) -> usize {
        self.n_ions() - usize::from(self.ancilla.is_some())
    }

    pub fn stride(&self, ion: usize) -> usize {
        self.dims[ion + 1..].iter().product()
    }

    pub fn digit(&self, index: usize, ion: usize) -> usize {
        (index / self.stride(ion)) % self.dims[ion]
    }

    pub fn index_of(&self, digits: &[usize]) -> Result<usize> {
        if digits.len() != self.n_ions() {
            return Err(RegisterError::BadBasisLabel {
                label: format!("{digits:?}"),
                reason: format!("expected {} digits", self.n_ions()),
            });
        }
        let mut index = 0;
        for (ion, (&d, &dim)) in digits.iter().zip(&self.dims).enumerate() {
            if d >= dim {
                return Err(RegisterError::BadBasisLabel {
                    label: format!("{digits:?}"),
                    reason: format!("level {d} on ion {ion} of dimension {dim}"),
                });
            }
            index = index * dim + d;
        }
        Ok(index)
    }

    /// Number of system ions in level `|1>` for a basis index.
    pub fn excitations(&self, index: usize) -> usize {
        self.system_ions()
            .into_iter()
            .filter(|&ion| self.digit(index, ion) == 1)
            .count()
    }

    pub fn check_ion(&self, ion: usize) -> Result<()> {
        if ion >= self.n_ions() {
            Err(RegisterError::IonOutOfRange { ion, len: self.n_ions() })
        } else {
            Ok(())
        }
    }

    fn check_support(&self, support: &[usize]) -> Result<()> {
        for (k, &ion) in support.iter().enumerate() {
            self.check_ion(ion)?;
            if support[..k].contains(&ion) {
                return Err(RegisterError::DuplicateIon(ion));
            }
        }
        Ok(())
    }

    /// Layout obtained by dropping `removed` ions.
    pub fn without(&self, removed: &[usize]) -> Result<Self> {
        let kept: Vec<usize> = (0..self.n_ions()).filter(|i| !removed.contains(i)).collect();
        let dims = kept.iter().map(|&i| self.dims[i]).collect();
        let ancilla = self.ancilla.and_then(|a| kept.iter().position(|&i| i == a));
        Self::new(dims, ancilla)
    }

    pub fn describe(&self) -> String {
        format!("dims={:?} ancilla={:?}", self.dims, self.ancilla)
    }

    pub(crate) fn ensure_same(&self, other: &Self) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(RegisterError::LayoutMismatch(self.describe(), other.describe()))
        }
    }
}

/// Precomputed index maps splitting the register into a support and its complement.
#[derive(Debug, Clone)]
pub struct LocalIndex {
    support: Vec<usize>,
    offsets: Vec<usize>,
    bases: Vec<usize>,
}

impl LocalIndex {
    pub fn new(layout: &RegisterLayout, support: &[usize]) -> Result<Self> {
        layout.check_support(support)?;
        let mut offsets = vec![0usize];
        for &ion in support {
            let stride = layout.stride(ion);
            offsets = offsets
                .iter()
                .flat_map(|&o| (0..layout.ion_dim(ion)).map(move |d| o + d * stride))
                .collect();
        }
        let mut bases = vec![0usize];
        for ion in (0..layout.n_ions()).filter(|i| !support.contains(i)) {
            let stride = layout.stride(ion);
            bases = bases
                .iter()
                .flat_map(|&b| (0..layout.ion_dim(ion)).map(move |d| b + d * stride))
                .collect();
        }
        Ok(Self { support: support.to_vec(), offsets, bases })
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn local_dim(&self) -> usize {
        self.offsets.len()
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn bases(&self) -> &[usize] {
        &self.bases
    }
}

/// `m <- a m` with `a` acting on the support of `idx`.
pub fn left_multiply(m: &mut CMatrix, idx: &LocalIndex, a: &CMatrix) {
    let n = m.nrows();
    let ld = idx.local_dim();
    let mut v = vec![ZERO; ld];
    let data = m.as_mut_slice();
    for col in data.chunks_exact_mut(n) {
        for &b in &idx.bases {
            for (l, &o) in idx.offsets.iter().enumerate() {
                v[l] = col[b + o];
            }
            for (lo, &o) in idx.offsets.iter().enumerate() {
                let mut acc = ZERO;
                for (li, &x) in v.iter().enumerate() {
                    acc += a[(lo, li)] * x;
                }
                col[b + o] = acc;
            }
        }
    }
}

/// `m <- m a` with `a` acting on the support of `idx`.
pub fn right_multiply(m: &mut CMatrix, idx: &LocalIndex, a: &CMatrix) {
    let n = m.nrows();
    let ld = idx.local_dim();
    let mut cols = vec![ZERO; ld * n];
    let data = m.as_mut_slice();
    for &b in &idx.bases {
        for (l, &o) in idx.offsets.iter().enumerate() {
            let start = (b + o) * n;
            cols[l * n..(l + 1) * n].copy_from_slice(&data[start..start + n]);
        }
        for (lo, &o) in idx.offsets.iter().enumerate() {
            let out = &mut data[(b + o) * n..(b + o + 1) * n];
            out.fill(ZERO);
            for li in 0..ld {
                let coef = a[(li, lo)];
                if coef == ZERO {
                    continue;
                }
                let src = &cols[li * n..(li + 1) * n];
                for (dst, &s) in out.iter_mut().zip(src) {
                    *dst += coef * s;
                }
            }
        }
    }
}

/// `a m a†` with `a` local.
pub fn conjugate(m: &CMatrix, idx: &LocalIndex, a: &CMatrix) -> CMatrix {
    let mut out = m.clone();
    left_multiply(&mut out, idx, a);
    right_multiply(&mut out, idx, &a.adjoint());
    out
}

/// Superoperator of a Kraus set in column-stacking convention:
/// `vec(sum_k K X K†) = S vec(X)` with `vec` stacking columns.
pub fn superoperator(kraus: &[CMatrix]) -> CMatrix {
    let ld = kraus[0].nrows();
    let mut s = CMatrix::zeros(ld * ld, ld * ld);
    for k in kraus {
        let kc = k.map(|z| z.conj());
        s += kc.kronecker(k);
    }
    s
}

/// Applies a local superoperator built by [`superoperator`].
pub fn apply_superoperator(m: &CMatrix, idx: &LocalIndex, s: &CMatrix) -> CMatrix {
    let ld = idx.local_dim();
    let mut out = CMatrix::zeros(m.nrows(), m.ncols());
    let mut x = vec![ZERO; ld * ld];
    for &bc in &idx.bases {
        for &br in &idx.bases {
            for (lc, &oc) in idx.offsets.iter().enumerate() {
                for (lr, &or) in idx.offsets.iter().enumerate() {
                    x[lr + ld * lc] = m[(br + or, bc + oc)];
                }
            }
            for (lc, &oc) in idx.offsets.iter().enumerate() {
                for (lr, &or) in idx.offsets.iter().enumerate() {
                    let row = lr + ld * lc;
                    let mut acc = ZERO;
                    for (p, &xp) in x.iter().enumerate() {
                        acc += s[(row, p)] * xp;
                    }
                    out[(br + or, bc + oc)] = acc;
                }
            }
        }
    }
    out
}

/// Applies `sum_k K m K†` choosing between per-operator products and a local
/// superoperator, whichever is cheaper.
pub fn apply_kraus(m: &CMatrix, idx: &LocalIndex, kraus: &[CMatrix]) -> CMatrix {
    let ld = idx.local_dim();
    if kraus.len() == 1 {
        return conjugate(m, idx, &kraus[0]);
    }
    if ld < 2 * kraus.len() {
        return apply_superoperator(m, idx, &superoperator(kraus));
    }
    let mut out = CMatrix::zeros(m.nrows(), m.ncols());
    for k in kraus {
        out += conjugate(m, idx, k);
    }
    out
}

/// An operator acting on an ordered subset of ions.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalOperator {
    pub support: Vec<usize>,
    pub matrix: CMatrix,
}

impl LocalOperator {
    pub fn new(layout: &RegisterLayout, support: Vec<usize>, matrix: CMatrix) -> Result<Self> {
        layout.check_support(&support)?;
        let ld: usize = support.iter().map(|&i| layout.ion_dim(i)).product();
        if matrix.nrows() != ld || matrix.ncols() != ld {
            return Err(RegisterError::DimensionMismatch {
                rows: matrix.nrows(),
                cols: matrix.ncols(),
                dim: ld,
            });
        }
        Ok(Self { support, matrix })
    }

    /// Re-express on a larger support (identity on the added ions).
    pub fn expand(&self, layout: &RegisterLayout, target: &[usize]) -> Result<CMatrix> {
        layout.check_support(target)?;
        if let Some(&missing) = self.support.iter().find(|i| !target.contains(i)) {
            return Err(RegisterError::IonOutOfRange { ion: missing, len: target.len() });
        }
        let tdims: Vec<usize> = target.iter().map(|&i| layout.ion_dim(i)).collect();
        let td: usize = tdims.iter().product();
        let digits = |mut l: usize| {
            let mut d = vec![0; tdims.len()];
            for k in (0..tdims.len()).rev() {
                d[k] = l % tdims[k];
                l /= tdims[k];
            }
            d
        };
        let pos: Vec<usize> = self
            .support
            .iter()
            .map(|i| target.iter().position(|t| t == i).expect("checked above"))
            .collect();
        let sub = |d: &[usize]| {
            pos.iter()
                .fold(0, |acc, &p| acc * tdims[p] + d[p])
        };
        let all_digits: Vec<Vec<usize>> = (0..td).map(digits).collect();
        let mut out = CMatrix::zeros(td, td);
        for (r, dr) in all_digits.iter().enumerate() {
            for (col, dc) in all_digits.iter().enumerate() {
                let same_rest = (0..tdims.len())
                    .filter(|k| !pos.contains(k))
                    .all(|k| dr[k] == dc[k]);
                if same_rest {
                    out[(r, col)] = self.matrix[(sub(dr), sub(dc))];
                }
            }
        }
        Ok(out)
    }

    pub fn to_dense(&self, layout: &RegisterLayout) -> Result<CMatrix> {
        let all: Vec<usize> = (0..layout.n_ions()).collect();
        self.expand(layout, &all)
    }

    pub fn adjoint(&self) -> Self {
        Self { support: self.support.clone(), matrix: self.matrix.adjoint() }
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        linalg::hermiticity_defect(&self.matrix) <= tol
    }
}

/// Single-ion operators written in the qubit subspace `{|0>, |1>}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PauliOp {
    I,
    X,
    Y,
    Z,
    /// `sigma^+ = |1><0|`
    Plus,
    /// `sigma^- = |0><1|`
    Minus,
    /// `|0><0|`
    P0,
    /// `|1><1|`
    P1,
}

impl PauliOp {
    pub fn qubit_matrix(self) -> CMatrix {
        let (o, z, i) = (ONE, ZERO, linalg::I);
        let m = match self {
            PauliOp::I => [[o, z], [z, o]],
            PauliOp::X => [[z, o], [o, z]],
            PauliOp::Y => [[z, i], [-i, z]],
            PauliOp::Z => [[-o, z], [z, o]],
            PauliOp::Plus => [[z, z], [o, z]],
            PauliOp::Minus => [[z, o], [z, z]],
            PauliOp::P0 => [[o, z], [z, z]],
            PauliOp::P1 => [[z, z], [z, o]],
        };
        CMatrix::from_fn(2, 2, |r, col| m[r][col])
    }

    /// Matrix on an ion of dimension `dim`; the level `|2>` is annihilated.
    pub fn matrix(self, dim: usize) -> CMatrix {
        embed_qubit(&self.qubit_matrix(), dim)
    }
}

/// Pads a 2x2 operator with zeros up to `dim`.
pub fn embed_qubit(m: &CMatrix, dim: usize) -> CMatrix {
    let mut out = CMatrix::zeros(dim, dim);
    out.view_mut((0, 0), (2, 2)).copy_from(m);
    out
}

/// `sigma^phi = cos(phi pi) sigma^x + sin(phi pi) sigma^y`, `phi` in units of pi.
pub fn sigma_phi(phi: f64) -> CMatrix {
    let (s, co) = (phi * std::f64::consts::PI).sin_cos();
    PauliOp::X.qubit_matrix().scale(co) + PauliOp::Y.qubit_matrix().scale(s)
}

/// Product of single-ion operators with a complex coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct PauliString {
    pub coefficient: C64,
    pub factors: Vec<(usize, PauliOp)>,
}

impl PauliString {
    pub fn new(factors: Vec<(usize, PauliOp)>) -> Self {
        Self { coefficient: ONE, factors }
    }

    pub fn scaled(mut self, factor: C64) -> Self {
        self.coefficient *= factor;
        self
    }

    pub fn support(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.factors.iter().map(|f| f.0).collect();
        s.sort_unstable();
        s
    }

    pub fn to_local(&self, layout: &RegisterLayout) -> Result<LocalOperator> {
        let support = self.support();
        layout.check_support(&support)?;
        let mats: Vec<CMatrix> = support
            .iter()
            .map(|&ion| {
                let op = self.factors.iter().find(|f| f.0 == ion).expect("from support").1;
                op.matrix(layout.ion_dim(ion))
            })
            .collect();
        let matrix = linalg::kron_all(&mats) * self.coefficient;
        LocalOperator::new(layout, support, matrix)
    }
}

/// Sum of Pauli strings.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PauliSum {
    pub terms: Vec<PauliString>,
}

impl PauliSum {
    pub fn new(terms: Vec<PauliString>) -> Self {
        Self { terms }
    }

    pub fn support(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.terms.iter().flat_map(|t| t.support()).collect();
        s.sort_unstable();
        s.dedup();
        s
    }

    pub fn to_local(&self, layout: &RegisterLayout) -> Result<LocalOperator> {
        let support = self.support();
        layout.check_support(&support)?;
        let ld: usize = support.iter().map(|&i| layout.ion_dim(i)).product();
        let mut matrix = CMatrix::zeros(ld, ld);
        for term in &self.terms {
            matrix += term.to_local(layout)?.expand(layout, &support)?;
        }
        LocalOperator::new(layout, support, matrix)
    }
}

impl From<PauliString> for PauliSum {
    fn from(s: PauliString) -> Self {
        Self { terms: vec![s] }
    }
}

/// Normalized state vector on a register.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    layout: RegisterLayout,
    amplitudes: CVector,
}

impl PureState {
    pub fn new(layout: RegisterLayout, amplitudes: CVector) -> Result<Self> {
        if amplitudes.len() != layout.dim() {
            return Err(RegisterError::DimensionMismatch {
                rows: amplitudes.len(),
                cols: 1,
                dim: layout.dim(),
            });
        }
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() > TRACE_TOL {
            return Err(RegisterError::NotNormalized(norm));
        }
        Ok(Self { layout, amplitudes })
    }

    /// Normalizes the given amplitudes.
    pub fn normalized(layout: RegisterLayout, amplitudes: CVector) -> Result<Self> {
        let norm = amplitudes.norm();
        if norm == 0.0 {
            return Err(RegisterError::NotNormalized(0.0));
        }
        Self::new(layout, amplitudes.unscale(norm))
    }

    pub fn basis(layout: RegisterLayout, digits: &[usize]) -> Result<Self> {
        let index = layout.index_of(digits)?;
        let mut amps = CVector::zeros(layout.dim());
        amps[index] = ONE;
        Ok(Self { layout, amplitudes: amps })
    }

    /// Computational basis state from a label such as `"101"` (ion 0 first).
    pub fn from_label(layout: RegisterLayout, label: &str) -> Result<Self> {
        let digits: Option<Vec<usize>> =
            label.chars().map(|ch| ch.to_digit(10).map(|d| d as usize)).collect();
        let digits = digits.ok_or_else(|| RegisterError::BadBasisLabel {
            label: label.to_string(),
            reason: "labels are made of decimal digits".into(),
        })?;
        Self::basis(layout, &digits)
    }

    pub fn layout(&self) -> &RegisterLayout {
        &self.layout
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub fn to_density(&self) -> DensityOperator {
        let m = &self.amplitudes * self.amplitudes.adjoint();
        DensityOperator { layout: self.layout.clone(), matrix: m }
    }

    pub fn overlap(&self, other: &PureState) -> C64 {
        self.amplitudes.dotc(&other.amplitudes)
    }
}

/// Density matrix tied to a register layout.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperator {
    layout: RegisterLayout,
    matrix: CMatrix,
}

impl DensityOperator {
    /// Validated constructor: Hermitian, unit trace and positive semidefinite.
    pub fn new(layout: RegisterLayout, matrix: CMatrix) -> Result<Self> {
        let rho = Self::from_matrix_unchecked(layout, matrix)?;
        rho.validate()?;
        Ok(rho)
    }

    /// Only checks the shape. Used on hot paths where the maps are CPTP by construction.
    pub fn from_matrix_unchecked(layout: RegisterLayout, matrix: CMatrix) -> Result<Self> {
        let dim = layout.dim();
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(RegisterError::DimensionMismatch {
                rows: matrix.nrows(),
                cols: matrix.ncols(),
                dim,
            });
        }
        Ok(Self { layout, matrix })
    }

    pub fn basis(layout: RegisterLayout, digits: &[usize]) -> Result<Self> {
        Ok(PureState::basis(layout, digits)?.to_density())
    }

    pub fn from_label(layout: RegisterLayout, label: &str) -> Result<Self> {
        Ok(PureState::from_label(layout, label)?.to_density())
    }

    pub fn maximally_mixed(layout: RegisterLayout) -> Self {
        let d = layout.dim();
        let matrix = linalg::identity(d).unscale(d as f64);
        Self { layout, matrix }
    }

    pub fn layout(&self) -> &RegisterLayout {
        &self.layout
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    pub fn purity(&self) -> f64 {
        self.matrix.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        linalg::hermiticity_defect(&self.matrix)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        linalg::eigvalsh(&self.matrix).first().copied().unwrap_or(0.0)
    }

    /// Hermiticity and trace only; cheap enough to run after every step.
    pub fn validate_cheap(&self) -> Result<()> {
        let h = self.hermiticity_defect();
        if h > HERMITICITY_TOL {
            return Err(RegisterError::NotHermitian(h));
        }
        let tr = self.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(RegisterError::BadTrace(tr.re));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_cheap()?;
        let min = self.min_eigenvalue();
        if min < MIN_EIGENVALUE {
            return Err(RegisterError::NotPositive(min));
        }
        Ok(())
    }

    pub fn tensor(&self, other: &DensityOperator) -> Result<DensityOperator> {
        let mut dims = self.layout.dims.clone();
        dims.extend_from_slice(&other.layout.dims);
        let ancilla = self
            .layout
            .ancilla
            .or(other.layout.ancilla.map(|a| a + self.layout.n_ions()));
        let layout = RegisterLayout::new(dims, ancilla)?;
        Ok(Self { layout, matrix: linalg::kron(&self.matrix, &other.matrix) })
    }

    /// Reduced state on the system ions (identity if there is no ancilla).
    pub fn system_state(&self) -> DensityOperator {
        match self.layout.ancilla {
            Some(a) => partial_trace(self, &[a]).expect("ancilla index is valid"),
            None => self.clone(),
        }
    }

    /// Populations of the computational basis.
    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.layout.dim()).map(|i| self.matrix[(i, i)].re).collect()
    }

    pub fn map_matrix(&self, f: impl FnOnce(&CMatrix) -> CMatrix) -> DensityOperator {
        Self { layout: self.layout.clone(), matrix: f(&self.matrix) }
    }
}

/// Traces out the listed ions.
pub fn partial_trace(rho: &DensityOperator, traced: &[usize]) -> Result<DensityOperator> {
    let layout = rho.layout();
    layout.check_support(traced)?;
    let kept: Vec<usize> = (0..layout.n_ions()).filter(|i| !traced.contains(i)).collect();
    let new_layout = layout.without(traced)?;
    let idx = LocalIndex::new(layout, &kept)?;
    let ld = idx.local_dim();
    let m = rho.matrix();
    let out = DMatrix::from_fn(ld, ld, |r, col| {
        let (or, oc) = (idx.offsets[r], idx.offsets[col]);
        idx.bases.iter().map(|&b| m[(b + or, b + oc)]).sum::<C64>()
    });
    DensityOperator::from_matrix_unchecked(new_layout, out)
}

/// `Tr(op rho)` for a local operator.
pub fn expectation(rho: &DensityOperator, op: &LocalOperator) -> Result<C64> {
    let idx = LocalIndex::new(rho.layout(), &op.support)?;
    let m = rho.matrix();
    let mut acc = ZERO;
    for &b in idx.bases() {
        for (l, &ol) in idx.offsets().iter().enumerate() {
            for (k, &ok) in idx.offsets().iter().enumerate() {
                let o = op.matrix[(l, k)];
                if o != ZERO {
                    acc += o * m[(b + ok, b + ol)];
                }
            }
        }
    }
    Ok(acc)
}

/// Applies a local unitary (or any single Kraus operator) by conjugation.
pub fn conjugate_local(rho: &DensityOperator, op: &LocalOperator) -> Result<DensityOperator> {
    let idx = LocalIndex::new(rho.layout(), &op.support)?;
    Ok(rho.map_matrix(|m| conjugate(m, &idx, &op.matrix)))
}

pub fn basis_projector(dim: usize, level: usize) -> CMatrix {
    let mut m = CMatrix::zeros(dim, dim);
    m[(level, level)] = c(1.0, 0.0);
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_diff;

    fn random_like(d: usize, seed: u64) -> CMatrix {
        let mut s = seed;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        CMatrix::from_fn(d, d, |_, _| c(next(), next()))
    }

    #[test]
    fn sigma_z_on_first_of_two_qubits() {
        let layout = RegisterLayout::qubits(2);
        let op = PauliString::new(vec![(0, PauliOp::Z)]).to_local(&layout).unwrap();
        let dense = op.to_dense(&layout).unwrap();
        let expected = linalg::diag(&[c(-1.0, 0.0), c(-1.0, 0.0), ONE, ONE]);
        assert!(max_abs_diff(&dense, &expected) < 1e-15);
    }

    #[test]
    fn raising_and_commutator() {
        let x = PauliOp::X.qubit_matrix();
        let y = PauliOp::Y.qubit_matrix();
        let z = PauliOp::Z.qubit_matrix();
        let comm = &x * &y - &y * &x;
        assert!(max_abs_diff(&comm, &(z * c(0.0, 2.0))) < 1e-15);
        let plus = (&x + &y * linalg::I).scale(0.5);
        assert!(max_abs_diff(&plus, &PauliOp::Plus.qubit_matrix()) < 1e-15);
    }

    #[test]
    fn qubit_ops_annihilate_parked_level() {
        let m = PauliOp::X.matrix(3);
        assert_eq!(m[(2, 2)], ZERO);
        assert_eq!(m[(0, 1)], ONE);
    }

    #[test]
    fn local_kernels_match_dense() {
        let layout = RegisterLayout::new(vec![3, 2, 2], Some(0)).unwrap();
        let d = layout.dim();
        let m = random_like(d, 7);
        let a = random_like(6, 11);
        let op = LocalOperator::new(&layout, vec![2, 0], a.clone()).unwrap();
        let dense = op.to_dense(&layout).unwrap();
        let idx = LocalIndex::new(&layout, &[2, 0]).unwrap();
        let mut left = m.clone();
        left_multiply(&mut left, &idx, &a);
        assert!(max_abs_diff(&left, &(&dense * &m)) < 1e-12);
        let mut right = m.clone();
        right_multiply(&mut right, &idx, &a);
        assert!(max_abs_diff(&right, &(&m * &dense)) < 1e-12);
        let b = random_like(6, 5);
        let kraus = vec![a.clone(), b.clone()];
        let sup = apply_superoperator(&m, &idx, &superoperator(&kraus));
        let db = LocalOperator::new(&layout, vec![2, 0], b).unwrap().to_dense(&layout).unwrap();
        let expected = &dense * &m * dense.adjoint() + &db * &m * db.adjoint();
        assert!(max_abs_diff(&sup, &expected) < 1e-12);
    }

    #[test]
    fn partial_trace_of_product() {
        let a = DensityOperator::from_label(RegisterLayout::qubits(1), "1").unwrap();
        let b = DensityOperator::maximally_mixed(RegisterLayout::qubits(2));
        let ab = a.tensor(&b).unwrap();
        let reduced = partial_trace(&ab, &[0]).unwrap();
        assert!(max_abs_diff(reduced.matrix(), b.matrix()) < 1e-15);
        let first = partial_trace(&ab, &[1, 2]).unwrap();
        assert!(max_abs_diff(first.matrix(), a.matrix()) < 1e-15);
    }

    #[test]
    fn validation_rejects_non_states() {
        let layout = RegisterLayout::qubits(1);
        let bad = linalg::diag(&[c(1.5, 0.0), c(-0.5, 0.0)]);
        assert!(matches!(
            DensityOperator::new(layout.clone(), bad),
            Err(RegisterError::NotPositive(_))
        ));
        let bad_trace = linalg::diag(&[c(0.5, 0.0), c(0.4, 0.0)]);
        assert!(matches!(
            DensityOperator::new(layout, bad_trace),
            Err(RegisterError::BadTrace(_))
        ));
    }

    #[test]
    fn expectation_matches_dense_trace() {
        let layout = RegisterLayout::qubits(3);
        let psi = PureState::normalized(
            layout.clone(),
            CVector::from_fn(8, |i, _| c(i as f64 + 1.0, 0.5 * i as f64)),
        )
        .unwrap();
        let rho = psi.to_density();
        let op = PauliSum::new(vec![
            PauliString::new(vec![(0, PauliOp::Plus), (2, PauliOp::Minus)]),
            PauliString::new(vec![(1, PauliOp::Z)]).scaled(c(0.3, 0.0)),
        ])
        .to_local(&layout)
        .unwrap();
        let dense = op.to_dense(&layout).unwrap();
        let expected = linalg::trace_product(&dense, rho.matrix());
        assert!((expectation(&rho, &op).unwrap() - expected).norm() < 1e-13);
    }
}
