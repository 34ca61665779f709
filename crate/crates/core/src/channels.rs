//! Quantum channels as ordered stages of local Kraus sets, plus fidelity measures.

use thiserror::Error;

use crate::linalg::{self, CMatrix, C64, ONE, ZERO};
use crate::register::{
    self, apply_kraus, DensityOperator, LocalIndex, PauliOp, RegisterError, RegisterLayout,
};

/// Completeness tolerance for `sum_k K_k† K_k = 1`.
pub const COMPLETENESS_TOL: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    #[error(transparent)]
    Register(#[from] RegisterError),
    #[error("Kraus set is not trace preserving (defect {0:e})")]
    NotTracePreserving(f64),
    #[error("operator is not unitary")]
    NotUnitary,
    #[error("Kraus set is empty")]
    NoKrausOperators,
    #[error("mixture weights must be non-negative and sum to 1 (got {0:?})")]
    BadWeights(Vec<f64>),
    #[error("ion {ion} has dimension {dim}, level {level} does not exist")]
    BadLevel { ion: usize, dim: usize, level: usize },
    #[error("ancilla level {0} must be 0 or 1")]
    BadParkLevel(usize),
    #[error("ion {0} needs a parked level |2>, but it is a qubit")]
    NotQutrit(usize),
    #[error("epsilon {0} must lie in [0, 1]")]
    BadProbability(f64),
    #[error("register of dimension {0} is too large for an explicit Choi matrix")]
    TooLarge(usize),
}

pub type Result<T> = std::result::Result<T, ChannelError>;

/// Largest register dimension for which explicit Choi matrices are built.
pub const MAX_CHOI_DIM: usize = 64;

/// Kraus operators acting on an ordered subset of ions.
#[derive(Debug, Clone)]
pub struct KrausStage {
    index: LocalIndex,
    ops: Vec<CMatrix>,
}

impl KrausStage {
    pub fn support(&self) -> &[usize] {
        self.index.support()
    }

    pub fn ops(&self) -> &[CMatrix] {
        &self.ops
    }

    fn completeness_defect(&self) -> f64 {
        let ld = self.index.local_dim();
        let sum = self
            .ops
            .iter()
            .fold(CMatrix::zeros(ld, ld), |acc, k| acc + k.adjoint() * k);
        linalg::max_abs_diff(&sum, &linalg::identity(ld))
    }
}

/// A CPTP map on a register, applied stage by stage.
#[derive(Debug, Clone)]
pub struct Channel {
    layout: RegisterLayout,
    stages: Vec<KrausStage>,
    label: String,
}

impl Channel {
    pub fn identity(layout: &RegisterLayout) -> Self {
        Self { layout: layout.clone(), stages: Vec::new(), label: "identity".into() }
    }

    /// Single-stage channel; checks completeness.
    pub fn from_kraus(
        layout: &RegisterLayout,
        support: &[usize],
        ops: Vec<CMatrix>,
        label: impl Into<String>,
    ) -> Result<Self> {
        let stage = make_stage(layout, support, ops)?;
        Ok(Self { layout: layout.clone(), stages: vec![stage], label: label.into() })
    }

    pub fn unitary(
        layout: &RegisterLayout,
        support: &[usize],
        u: CMatrix,
        label: impl Into<String>,
    ) -> Result<Self> {
        if !linalg::is_unitary(&u, COMPLETENESS_TOL) {
            return Err(ChannelError::NotUnitary);
        }
        Self::from_kraus(layout, support, vec![u], label)
    }

    pub fn layout(&self) -> &RegisterLayout {
        &self.layout
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn stages(&self) -> &[KrausStage] {
        &self.stages
    }

    /// `other` after `self`.
    pub fn then(mut self, other: &Channel) -> Result<Self> {
        self.layout.ensure_same(&other.layout)?;
        self.stages.extend(other.stages.iter().cloned());
        self.label = format!("{} ; {}", self.label, other.label);
        Ok(self)
    }

    pub fn compose(parts: &[Channel]) -> Result<Self> {
        let mut iter = parts.iter();
        let first = iter.next().ok_or(ChannelError::NoKrausOperators)?.clone();
        iter.try_fold(first, |acc, ch| acc.then(ch))
    }

    /// Applies the channel to an arbitrary operator (not necessarily a state).
    pub fn apply_matrix(&self, m: &CMatrix) -> CMatrix {
        self.stages
            .iter()
            .fold(m.clone(), |acc, st| apply_kraus(&acc, &st.index, &st.ops))
    }

    pub fn apply(&self, rho: &DensityOperator) -> Result<DensityOperator> {
        self.layout.ensure_same(rho.layout())?;
        Ok(rho.map_matrix(|m| self.apply_matrix(m)))
    }

    /// Union of all stage supports, sorted.
    pub fn support(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.stages.iter().flat_map(|st| st.support().to_vec()).collect();
        s.sort_unstable();
        s.dedup();
        s
    }

    /// Single Kraus set on `support` equivalent to the whole channel.
    pub fn flatten_on(&self, support: &[usize]) -> Result<Vec<CMatrix>> {
        let ld: usize = support.iter().map(|&i| self.layout.ion_dim(i)).product();
        let mut ops = vec![linalg::identity(ld)];
        for st in &self.stages {
            let expanded: Vec<CMatrix> = st
                .ops
                .iter()
                .map(|k| {
                    register::LocalOperator { support: st.support().to_vec(), matrix: k.clone() }
                        .expand(&self.layout, support)
                })
                .collect::<std::result::Result<_, _>>()?;
            ops = expanded
                .iter()
                .flat_map(|k| ops.iter().map(move |acc| k * acc))
                .filter(|k| linalg::max_abs(k) > 0.0)
                .collect();
        }
        Ok(ops)
    }

    /// Kraus operators on the full register.
    pub fn kraus_operators(&self) -> Result<Vec<CMatrix>> {
        let all: Vec<usize> = (0..self.layout.n_ions()).collect();
        self.flatten_on(&all)
    }

    pub fn is_trace_preserving(&self) -> bool {
        self.stages.iter().all(|st| st.completeness_defect() <= COMPLETENESS_TOL)
    }
}

fn make_stage(layout: &RegisterLayout, support: &[usize], ops: Vec<CMatrix>) -> Result<KrausStage> {
    if ops.is_empty() {
        return Err(ChannelError::NoKrausOperators);
    }
    let index = LocalIndex::new(layout, support)?;
    let ld = index.local_dim();
    if let Some(bad) = ops.iter().find(|k| k.nrows() != ld || k.ncols() != ld) {
        return Err(RegisterError::DimensionMismatch { rows: bad.nrows(), cols: bad.ncols(), dim: ld }
            .into());
    }
    let stage = KrausStage { index, ops };
    let defect = stage.completeness_defect();
    if defect > COMPLETENESS_TOL {
        return Err(ChannelError::NotTracePreserving(defect));
    }
    Ok(stage)
}

/// Convex combination `sum_k w_k chi_k` of channels on the same layout.
pub fn mix(parts: &[(f64, &Channel)]) -> Result<Channel> {
    let weights: Vec<f64> = parts.iter().map(|p| p.0).collect();
    let total: f64 = weights.iter().sum();
    if parts.is_empty() || weights.iter().any(|&w| w < 0.0) || (total - 1.0).abs() > 1e-12 {
        return Err(ChannelError::BadWeights(weights));
    }
    let layout = parts[0].1.layout.clone();
    let mut support: Vec<usize> = Vec::new();
    for (_, ch) in parts {
        layout.ensure_same(&ch.layout)?;
        support.extend(ch.support());
    }
    support.sort_unstable();
    support.dedup();
    if support.is_empty() {
        return Ok(Channel::identity(&layout));
    }
    let mut ops = Vec::new();
    for (w, ch) in parts {
        if *w == 0.0 {
            continue;
        }
        let s = w.sqrt();
        ops.extend(ch.flatten_on(&support)?.into_iter().map(|k| k.scale(s)));
    }
    let label = parts
        .iter()
        .map(|(w, ch)| format!("{w}*[{}]", ch.label))
        .collect::<Vec<_>>()
        .join(" + ");
    Channel::from_kraus(&layout, &support, ops, label)
}

/// Single-ion fully depolarizing channel, Kraus `sigma_a / 2`.
pub fn depolarize(layout: &RegisterLayout, ion: usize) -> Result<Channel> {
    layout.check_ion(ion)?;
    let dim = layout.ion_dim(ion);
    if dim != 2 {
        return Err(ChannelError::BadLevel { ion, dim, level: 2 });
    }
    let ops = [PauliOp::I, PauliOp::X, PauliOp::Y, PauliOp::Z]
        .iter()
        .map(|p| p.qubit_matrix().scale(0.5))
        .collect();
    Channel::from_kraus(layout, &[ion], ops, format!("depolarize({ion})"))
}

/// Depolarizing on `i` then on `j`: 16 Kraus operators `sigma_a (x) sigma_b / 4`.
pub fn double_depolarize(layout: &RegisterLayout, i: usize, j: usize) -> Result<Channel> {
    let ch = depolarize(layout, i)?.then(&depolarize(layout, j)?)?;
    let ops = ch.flatten_on(&[i, j])?;
    Channel::from_kraus(layout, &[i, j], ops, format!("depolarize({i},{j})"))
}

/// `(1 - eps) rho + eps 1/d`, applied to the whole register.
pub fn global_depolarize(rho: &DensityOperator, eps: f64) -> Result<DensityOperator> {
    if !(0.0..=1.0).contains(&eps) {
        return Err(ChannelError::BadProbability(eps));
    }
    let d = rho.layout().dim();
    let tr = rho.trace();
    Ok(rho.map_matrix(|m| {
        let mut out = m.scale(1.0 - eps);
        for i in 0..d {
            out[(i, i)] += tr * (eps / d as f64);
        }
        out
    }))
}

/// Channel pumping every level of `ion` into `level`.
pub fn reset_channel(layout: &RegisterLayout, ion: usize, level: usize) -> Result<Channel> {
    layout.check_ion(ion)?;
    let dim = layout.ion_dim(ion);
    if level >= dim {
        return Err(ChannelError::BadLevel { ion, dim, level });
    }
    let ops = (0..dim)
        .map(|k| {
            let mut m = CMatrix::zeros(dim, dim);
            m[(level, k)] = ONE;
            m
        })
        .collect();
    Channel::from_kraus(layout, &[ion], ops, format!("reset({ion}->{level})"))
}

pub fn reset_ancilla(rho: &DensityOperator, ancilla: usize, level: usize) -> Result<DensityOperator> {
    reset_channel(rho.layout(), ancilla, level)?.apply(rho)
}

/// Optical pumping of level `b` into the parked level `|2>`:
/// Kraus `{|2><b|, |b'><b'|, |2><2|}` with `b'` the other qubit level.
pub fn park_channel(layout: &RegisterLayout, ion: usize, b: usize) -> Result<Channel> {
    layout.check_ion(ion)?;
    if layout.ion_dim(ion) != 3 {
        return Err(ChannelError::NotQutrit(ion));
    }
    if b > 1 {
        return Err(ChannelError::BadParkLevel(b));
    }
    let unit = |r: usize, col: usize| {
        let mut m = CMatrix::zeros(3, 3);
        m[(r, col)] = ONE;
        m
    };
    let ops = vec![unit(2, b), unit(1 - b, 1 - b), unit(2, 2)];
    Channel::from_kraus(layout, &[ion], ops, format!("park({ion}:{b})"))
}

pub fn park_ancilla(rho: &DensityOperator, ancilla: usize, b: usize) -> Result<DensityOperator> {
    park_channel(rho.layout(), ancilla, b)?.apply(rho)
}

/// Normalized Choi state `(1/d) sum_ij |i><j| (x) E(|i><j|)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChoiMatrix {
    pub matrix: CMatrix,
    pub dim: usize,
}

pub fn choi(channel: &Channel) -> Result<ChoiMatrix> {
    let d = channel.layout.dim();
    if d > MAX_CHOI_DIM {
        return Err(ChannelError::TooLarge(d));
    }
    let mut out = CMatrix::zeros(d * d, d * d);
    let norm = 1.0 / d as f64;
    for i in 0..d {
        for j in 0..d {
            let mut eij = CMatrix::zeros(d, d);
            eij[(i, j)] = ONE;
            let image = channel.apply_matrix(&eij);
            for r in 0..d {
                for col in 0..d {
                    out[(i * d + r, j * d + col)] = image[(r, col)] * norm;
                }
            }
        }
    }
    Ok(ChoiMatrix { matrix: out, dim: d })
}

/// Uhlmann fidelity `(Tr sqrt(sqrt(a) b sqrt(a)))^2` between positive
/// unit-trace matrices.
pub fn uhlmann_matrix_fidelity(a: &CMatrix, b: &CMatrix) -> f64 {
    let purity = |m: &CMatrix| m.iter().map(|z| z.norm_sqr()).sum::<f64>();
    // Tr(a b) is exact when either argument is pure and avoids square roots of
    // rounding-level eigenvalues.
    if purity(a) > 1.0 - 1e-12 || purity(b) > 1.0 - 1e-12 {
        return linalg::trace_product(a, b).re.clamp(0.0, 1.0);
    }
    let sa = linalg::sqrt_psd(a);
    let inner = &sa * b * &sa;
    let values = linalg::eigvalsh(&inner);
    let top = values.last().copied().unwrap_or(0.0).max(0.0);
    let cutoff = 1e-14 * top.max(1e-300);
    let root: f64 = values.iter().filter(|&&l| l > cutoff).map(|l| l.sqrt()).sum();
    (root * root).clamp(0.0, 1.0)
}

pub fn uhlmann_fidelity(rho: &DensityOperator, sigma: &DensityOperator) -> Result<f64> {
    rho.layout().ensure_same(sigma.layout())?;
    Ok(uhlmann_matrix_fidelity(rho.matrix(), sigma.matrix()))
}

/// Uhlmann fidelity of the two normalized Choi states.
pub fn process_fidelity(a: &Channel, b: &Channel) -> Result<f64> {
    a.layout.ensure_same(&b.layout)?;
    let (ca, cb) = (choi(a)?, choi(b)?);
    Ok(uhlmann_matrix_fidelity(&ca.matrix, &cb.matrix))
}

/// Average of the state fidelities `F(E(rho), R(rho))` over the given inputs.
pub fn mean_state_fidelity(
    channel: &Channel,
    reference: &Channel,
    inputs: &[DensityOperator],
) -> Result<f64> {
    if inputs.is_empty() {
        return Ok(1.0);
    }
    let mut total = 0.0;
    for rho in inputs {
        total += uhlmann_fidelity(&channel.apply(rho)?, &reference.apply(rho)?)?;
    }
    Ok(total / inputs.len() as f64)
}

/// The six single-qubit Pauli eigenstates as 2x2 density matrices.
pub fn pauli_eigenstates() -> Vec<CMatrix> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let kets: [[C64; 2]; 6] = [
        [ONE, ZERO],
        [ZERO, ONE],
        [linalg::c(h, 0.0), linalg::c(h, 0.0)],
        [linalg::c(h, 0.0), linalg::c(-h, 0.0)],
        [linalg::c(h, 0.0), linalg::c(0.0, h)],
        [linalg::c(h, 0.0), linalg::c(0.0, -h)],
    ];
    kets.iter()
        .map(|k| CMatrix::from_fn(2, 2, |r, col| k[r] * k[col].conj()))
        .collect()
}

/// Products of Pauli eigenstates on `ions` (all other qubits in `|0>`).
/// Two ions give the 36 standard tomography inputs.
pub fn pauli_product_inputs(layout: &RegisterLayout, ions: &[usize]) -> Result<Vec<DensityOperator>> {
    let singles = pauli_eigenstates();
    let mut combos: Vec<Vec<usize>> = vec![Vec::new()];
    for _ in ions {
        combos = combos
            .into_iter()
            .flat_map(|c| (0..singles.len()).map(move |k| [c.clone(), vec![k]].concat()))
            .collect();
    }
    combos
        .into_iter()
        .map(|choice| {
            let factors: Vec<CMatrix> = (0..layout.n_ions())
                .map(|ion| match ions.iter().position(|&i| i == ion) {
                    Some(p) => register::embed_qubit(&singles[choice[p]], layout.ion_dim(ion)),
                    None => register::basis_projector(layout.ion_dim(ion), 0),
                })
                .collect();
            DensityOperator::new(layout.clone(), linalg::kron_all(&factors)).map_err(Into::into)
        })
        .collect()
}
