//! Native trapped-ion operations and a line-oriented pulse-table format.
//!
//! All angles are in units of pi, matching how pulse tables are written:
//! `R(theta, phi) = exp(-i theta pi/2 sum_mask sigma^phi)`,
//! `S_z(theta, i) = exp(-i theta pi/2 sigma^z_i)`,
//! `MS(theta, phi) = exp(-i theta pi/4 (sum_mask sigma^phi)^2)`.
//!
//! Table grammar, one instruction per line:
//!
//! ```text
//! # comment
//! R(0.5, 0.0)
//! S_z(1.0, 2)      # trailing comments are kept
//! MS(0.25, 1.0)
//! ACTIVE(1, 2, 3)  # restrict R and MS to these ions; ACTIVE(ALL) restores
//! RESET(0)
//! REPUMP(0)
//! ```

use std::f64::consts::PI;
use std::fmt;

use thiserror::Error;

use crate::channels::{self, Channel, ChannelError};
use crate::linalg::{self, CMatrix};
use crate::register::{
    self, embed_qubit, sigma_phi, DensityOperator, LocalIndex, LocalOperator, PauliOp, PauliSum,
    RegisterError, RegisterLayout,
};

#[derive(Debug, Error, PartialEq)]
pub enum GateError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{0} is not unitary")]
    NonUnitary(String),
    #[error("generator is not Hermitian (defect {0:e})")]
    NotHermitian(f64),
    #[error(transparent)]
    Register(#[from] RegisterError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

pub type Result<T> = std::result::Result<T, GateError>;

/// An angle in units of pi together with the literal it was parsed from.
#[derive(Debug, Clone, PartialEq)]
pub struct Angle {
    pub value: f64,
    pub text: String,
}

impl Angle {
    pub fn new(value: f64) -> Self {
        Self { value, text: format!("{value}") }
    }

    fn parse(text: &str) -> std::result::Result<Self, String> {
        let text = text.trim();
        match text.parse::<f64>() {
            Ok(value) if value.is_finite() => Ok(Self { value, text: text.to_string() }),
            _ => Err(format!("invalid angle {text:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Pulse {
    R { theta: Angle, phi: Angle },
    Sz { theta: Angle, ion: usize },
    Ms { theta: Angle, phi: Angle },
    /// Optical pumping of `ion` into `|1>`.
    Reset { ion: usize },
    /// Repumping of shelved population of `ion` back to `|1>`; same channel as a reset.
    Repump { ion: usize },
}

impl Pulse {
    pub fn r(theta: f64, phi: f64) -> Self {
        Pulse::R { theta: Angle::new(theta), phi: Angle::new(phi) }
    }

    pub fn sz(theta: f64, ion: usize) -> Self {
        Pulse::Sz { theta: Angle::new(theta), ion }
    }

    pub fn ms(theta: f64, phi: f64) -> Self {
        Pulse::Ms { theta: Angle::new(theta), phi: Angle::new(phi) }
    }

    pub fn is_unitary(&self) -> bool {
        !matches!(self, Pulse::Reset { .. } | Pulse::Repump { .. })
    }
}

impl fmt::Display for Pulse {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Pulse::R { theta, phi } => write!(f, "R({}, {})", theta.text, phi.text),
            Pulse::Sz { theta, ion } => write!(f, "S_z({}, {})", theta.text, ion),
            Pulse::Ms { theta, phi } => write!(f, "MS({}, {})", theta.text, phi.text),
            Pulse::Reset { ion } => write!(f, "RESET({ion})"),
            Pulse::Repump { ion } => write!(f, "REPUMP({ion})"),
        }
    }
}

/// Ions addressed by the global `R` and `MS` beams.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ActiveMask {
    All,
    Ions(Vec<usize>),
}

impl ActiveMask {
    pub fn resolve(&self, layout: &RegisterLayout) -> Result<Vec<usize>> {
        match self {
            ActiveMask::All => Ok((0..layout.n_ions()).collect()),
            ActiveMask::Ions(ions) => {
                for &i in ions {
                    layout.check_ion(i)?;
                }
                Ok(ions.clone())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Instruction {
    Pulse(Pulse),
    Active(ActiveMask),
    Comment(String),
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Instruction::Pulse(p) => p.fmt(f),
            Instruction::Active(ActiveMask::All) => write!(f, "ACTIVE(ALL)"),
            Instruction::Active(ActiveMask::Ions(ions)) => {
                let list: Vec<String> = ions.iter().map(usize::to_string).collect();
                write!(f, "ACTIVE({})", list.join(", "))
            }
            Instruction::Comment(text) => write!(f, "#{text}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PulseSequence {
    pub instructions: Vec<Instruction>,
}

impl PulseSequence {
    pub fn from_pulses(pulses: impl IntoIterator<Item = Pulse>) -> Self {
        Self { instructions: pulses.into_iter().map(Instruction::Pulse).collect() }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut instructions = Vec::new();
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let (code, comment) = match raw.find('#') {
                Some(p) => (&raw[..p], Some(&raw[p + 1..])),
                None => (raw, None),
            };
            let code = code.trim();
            if !code.is_empty() {
                let ins = parse_instruction(code)
                    .map_err(|message| GateError::Parse { line, message })?;
                instructions.push(ins);
            }
            if let Some(c) = comment {
                instructions.push(Instruction::Comment(c.to_string()));
            }
        }
        Ok(Self { instructions })
    }

    pub fn pulses(&self) -> impl Iterator<Item = &Pulse> {
        self.instructions.iter().filter_map(|i| match i {
            Instruction::Pulse(p) => Some(p),
            _ => None,
        })
    }

    pub fn pulse_count(&self) -> usize {
        self.pulses().count()
    }

    /// Structured comments of the form `#! key = value`.
    pub fn metadata(&self) -> Vec<(String, String)> {
        self.instructions
            .iter()
            .filter_map(|i| match i {
                Instruction::Comment(c) => c.strip_prefix('!'),
                _ => None,
            })
            .filter_map(|c| {
                let (k, v) = c.split_once('=')?;
                Some((k.trim().to_string(), v.trim().to_string()))
            })
            .collect()
    }

    pub fn metadata_value(&self, key: &str) -> Option<String> {
        self.metadata().into_iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }
}

impl fmt::Display for PulseSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for ins in &self.instructions {
            writeln!(f, "{ins}")?;
        }
        Ok(())
    }
}

fn parse_instruction(code: &str) -> std::result::Result<Instruction, String> {
    let open = code.find('(').ok_or_else(|| format!("expected NAME(args), got {code:?}"))?;
    if !code.ends_with(')') {
        return Err(format!("missing closing parenthesis in {code:?}"));
    }
    let name = code[..open].trim();
    let args: Vec<&str> = code[open + 1..code.len() - 1].split(',').map(str::trim).collect();
    let arity = |n: usize| {
        if args.len() == n && args.iter().all(|a| !a.is_empty()) {
            Ok(())
        } else {
            Err(format!("{name} takes {n} argument(s), got {:?}", args))
        }
    };
    let ion = |s: &str| s.parse::<usize>().map_err(|_| format!("invalid ion index {s:?}"));
    let ins = match name {
        "R" => {
            arity(2)?;
            Pulse::R { theta: Angle::parse(args[0])?, phi: Angle::parse(args[1])? }
        }
        "S_z" => {
            arity(2)?;
            Pulse::Sz { theta: Angle::parse(args[0])?, ion: ion(args[1])? }
        }
        "MS" => {
            arity(2)?;
            Pulse::Ms { theta: Angle::parse(args[0])?, phi: Angle::parse(args[1])? }
        }
        "RESET" => {
            arity(1)?;
            Pulse::Reset { ion: ion(args[0])? }
        }
        "REPUMP" => {
            arity(1)?;
            Pulse::Repump { ion: ion(args[0])? }
        }
        "ACTIVE" => {
            if args.len() == 1 && args[0] == "ALL" {
                return Ok(Instruction::Active(ActiveMask::All));
            }
            let ions = args.iter().map(|a| ion(a)).collect::<std::result::Result<Vec<_>, _>>()?;
            return Ok(Instruction::Active(ActiveMask::Ions(ions)));
        }
        other => return Err(format!("unknown pulse kind {other:?}")),
    };
    Ok(Instruction::Pulse(ins))
}

/// Single-ion rotation `exp(-i theta pi/2 sigma^phi)`; identity on a parked level.
fn rotation(dim: usize, theta: f64, phi: f64) -> CMatrix {
    linalg::expm_hermitian(&embed_qubit(&sigma_phi(phi), dim), theta * PI / 2.0)
}

fn sz_rotation(dim: usize, theta: f64) -> CMatrix {
    linalg::expm_hermitian(&PauliOp::Z.matrix(dim), theta * PI / 2.0)
}

fn ms_unitary(layout: &RegisterLayout, mask: &[usize], theta: f64, phi: f64) -> Result<CMatrix> {
    let ld: usize = mask.iter().map(|&i| layout.ion_dim(i)).product();
    let mut s = CMatrix::zeros(ld, ld);
    for &ion in mask {
        let op = LocalOperator { support: vec![ion], matrix: embed_qubit(&sigma_phi(phi), layout.ion_dim(ion)) };
        s += op.expand(layout, mask)?;
    }
    Ok(linalg::expm_hermitian(&(&s * &s), theta * PI / 4.0))
}

/// Local unitaries realizing a pulse, in application order.
pub fn pulse_unitaries(
    pulse: &Pulse,
    layout: &RegisterLayout,
    mask: &[usize],
) -> Result<Vec<LocalOperator>> {
    match pulse {
        Pulse::R { theta, phi } => Ok(mask
            .iter()
            .map(|&ion| LocalOperator {
                support: vec![ion],
                matrix: rotation(layout.ion_dim(ion), theta.value, phi.value),
            })
            .collect()),
        Pulse::Sz { theta, ion } => {
            layout.check_ion(*ion)?;
            Ok(vec![LocalOperator {
                support: vec![*ion],
                matrix: sz_rotation(layout.ion_dim(*ion), theta.value),
            }])
        }
        Pulse::Ms { theta, phi } => {
            if mask.is_empty() {
                return Ok(Vec::new());
            }
            Ok(vec![LocalOperator {
                support: mask.to_vec(),
                matrix: ms_unitary(layout, mask, theta.value, phi.value)?,
            }])
        }
        Pulse::Reset { .. } | Pulse::Repump { .. } => Err(GateError::NonUnitary(pulse.to_string())),
    }
}

fn conjugate_all(rho: &DensityOperator, ops: &[LocalOperator]) -> Result<DensityOperator> {
    ops.iter()
        .try_fold(rho.clone(), |acc, op| register::conjugate_local(&acc, op))
        .map_err(Into::into)
}

pub fn apply_r(rho: &DensityOperator, theta: f64, phi: f64, mask: &[usize]) -> Result<DensityOperator> {
    let ops = pulse_unitaries(&Pulse::r(theta, phi), rho.layout(), mask)?;
    conjugate_all(rho, &ops)
}

pub fn apply_sz(rho: &DensityOperator, theta: f64, ion: usize) -> Result<DensityOperator> {
    let ops = pulse_unitaries(&Pulse::sz(theta, ion), rho.layout(), &[])?;
    conjugate_all(rho, &ops)
}

pub fn apply_ms(rho: &DensityOperator, theta: f64, phi: f64, mask: &[usize]) -> Result<DensityOperator> {
    for &i in mask {
        rho.layout().check_ion(i)?;
    }
    let ops = pulse_unitaries(&Pulse::ms(theta, phi), rho.layout(), mask)?;
    conjugate_all(rho, &ops)
}

/// `exp(-i angle pi G) rho exp(i angle pi G)` for a Hermitian Pauli sum `G`.
pub fn pauli_exp(rho: &DensityOperator, generator: &PauliSum, angle: f64) -> Result<DensityOperator> {
    let local = generator.to_local(rho.layout())?;
    let defect = linalg::hermiticity_defect(&local.matrix);
    if defect > 1e-12 {
        return Err(GateError::NotHermitian(defect));
    }
    let u = LocalOperator {
        support: local.support,
        matrix: linalg::expm_hermitian(&local.matrix, angle * PI),
    };
    Ok(register::conjugate_local(rho, &u)?)
}

/// Total unitary of a sequence; fails on resets and repumps.
pub fn sequence_unitary(seq: &PulseSequence, layout: &RegisterLayout) -> Result<CMatrix> {
    let mut u = linalg::identity(layout.dim());
    let mut mask = ActiveMask::All.resolve(layout)?;
    for ins in &seq.instructions {
        match ins {
            Instruction::Active(m) => mask = m.resolve(layout)?,
            Instruction::Comment(_) => {}
            Instruction::Pulse(p) => {
                for op in pulse_unitaries(p, layout, &mask)? {
                    let idx = LocalIndex::new(layout, &op.support)?;
                    register::left_multiply(&mut u, &idx, &op.matrix);
                }
            }
        }
    }
    Ok(u)
}

/// The sequence as a channel; resets and repumps pump the ion into `|1>`.
pub fn sequence_channel(seq: &PulseSequence, layout: &RegisterLayout) -> Result<Channel> {
    let mut stages = vec![Channel::identity(layout)];
    let mut mask = ActiveMask::All.resolve(layout)?;
    for ins in &seq.instructions {
        match ins {
            Instruction::Active(m) => mask = m.resolve(layout)?,
            Instruction::Comment(_) => {}
            Instruction::Pulse(p @ (Pulse::Reset { ion } | Pulse::Repump { ion })) => {
                stages.push(channels::reset_channel(layout, *ion, 1)?.with_label(p.to_string()));
            }
            Instruction::Pulse(p) => {
                for op in pulse_unitaries(p, layout, &mask)? {
                    stages.push(Channel::unitary(layout, &op.support, op.matrix, p.to_string())?);
                }
            }
        }
    }
    Ok(Channel::compose(&stages)?.with_label("pulse sequence"))
}

pub fn run_sequence(seq: &PulseSequence, rho: &DensityOperator) -> Result<DensityOperator> {
    Ok(sequence_channel(seq, rho.layout())?.apply(rho)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, max_abs_diff, I, ONE, ZERO};
    use crate::register::{PauliString, PureState};

    fn ket(layout: &RegisterLayout, label: &str) -> DensityOperator {
        DensityOperator::from_label(layout.clone(), label).unwrap()
    }

    fn pure(layout: &RegisterLayout, amps: &[crate::linalg::C64]) -> DensityOperator {
        PureState::new(layout.clone(), crate::linalg::CVector::from_column_slice(amps))
            .unwrap()
            .to_density()
    }

    #[test]
    fn half_pi_rotation_about_x() {
        let layout = RegisterLayout::qubits(1);
        let out = apply_r(&ket(&layout, "0"), 0.5, 0.0, &[0]).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let expected = pure(&layout, &[c(h, 0.0), c(0.0, -h)]);
        assert!(max_abs_diff(out.matrix(), expected.matrix()) < 1e-14);
    }

    #[test]
    fn ms_half_entangles_two_qubits() {
        let layout = RegisterLayout::qubits(2);
        let out = apply_ms(&ket(&layout, "00"), 0.5, 0.0, &[0, 1]).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let expected = pure(&layout, &[c(h, 0.0), ZERO, ZERO, c(0.0, -h)]);
        assert!(max_abs_diff(out.matrix(), expected.matrix()) < 1e-14);
    }

    #[test]
    fn sz_pi_phase() {
        let layout = RegisterLayout::qubits(1);
        let u = sequence_unitary(&PulseSequence::from_pulses([Pulse::sz(1.0, 0)]), &layout).unwrap();
        let expected = linalg::diag(&[I, -I]);
        assert!(max_abs_diff(&u, &expected) < 1e-14);
    }

    #[test]
    fn flip_flop_exponential() {
        let layout = RegisterLayout::qubits(2);
        let g = PauliSum::new(vec![
            PauliString::new(vec![(0, PauliOp::Plus), (1, PauliOp::Minus)]),
            PauliString::new(vec![(0, PauliOp::Minus), (1, PauliOp::Plus)]),
        ]);
        let out = pauli_exp(&ket(&layout, "01"), &g, 0.5).unwrap();
        let expected = pure(&layout, &[ZERO, ZERO, -I, ZERO]);
        assert!(max_abs_diff(out.matrix(), expected.matrix()) < 1e-14);
        let not_herm = PauliSum::from(PauliString::new(vec![(0, PauliOp::Plus)]));
        assert!(matches!(pauli_exp(&ket(&layout, "01"), &not_herm, 0.5), Err(GateError::NotHermitian(_))));
    }

    #[test]
    fn ms_on_single_parked_ion_is_block_phase() {
        let layout = RegisterLayout::new(vec![3, 2], Some(0)).unwrap();
        let u = sequence_unitary(
            &PulseSequence::parse("ACTIVE(0)\nMS(0.37, 0.2)").unwrap(),
            &layout,
        )
        .unwrap();
        // block diagonal in {0,1} vs {2} of the ancilla
        for r in 0..6 {
            for col in 0..6 {
                let parked = |k: usize| layout.digit(k, 0) == 2;
                if parked(r) != parked(col) {
                    assert_eq!(u[(r, col)], ZERO);
                }
            }
        }
        assert!((u[(4, 4)] - ONE).norm() < 1e-14);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = PulseSequence::parse("R(0.5, 0)\nFOO(1)").unwrap_err();
        assert!(matches!(err, GateError::Parse { line: 2, .. }));
        assert!(PulseSequence::parse("R(0.5)").is_err());
        assert!(PulseSequence::parse("S_z(1.0, x)").is_err());
        assert!(PulseSequence::parse("MS(nan, 0)").is_err());
    }

    #[test]
    fn reset_is_not_unitary() {
        let layout = RegisterLayout::qubits(1);
        let seq = PulseSequence::parse("R(0.5, 0)\nRESET(0)").unwrap();
        assert!(matches!(sequence_unitary(&seq, &layout), Err(GateError::NonUnitary(_))));
        let out = run_sequence(&seq, &ket(&layout, "0")).unwrap();
        assert!(max_abs_diff(out.matrix(), ket(&layout, "1").matrix()) < 1e-15);
    }

    #[test]
    fn metadata_comments() {
        let seq = PulseSequence::parse("#! target = swap\n#! ions = 3\nR(1, 0)").unwrap();
        assert_eq!(seq.metadata_value("target").as_deref(), Some("swap"));
        assert_eq!(seq.pulse_count(), 1);
    }
}
