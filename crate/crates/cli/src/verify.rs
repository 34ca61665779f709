//! Checks pulse-table files: parsing, round-trip, unitarity and the best
//! fidelity against the table's nominal target.
//!
//! Tables name their target with `#!` metadata:
//!
//! ```text
//! #! ions = 3
//! #! target = exchange      # exchange | hamiltonian | dissipative | qnd | remove | inject | none
//! #! pair = 0 1             # exchange
//! #! spins = 0 1 2          # hamiltonian
//! #! phi = 0.5             # hamiltonian, units of pi
//! #! theta = 0.5           # dissipative, units of pi
//! #! m0 = 1                # qnd, remove, inject
//! ```
//!
//! Z rotations before and after the sequence are free (they are frame
//! choices in the experiment), so every target is compared after a coordinate
//! search over per-ion Z angles.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use openmaps::channels;
use openmaps::gateset::{self, Pulse, PulseSequence};
use openmaps::linalg::{self, c, CMatrix, C64, ZERO};
use openmaps::maps;
use openmaps::protocols::{self, FlipCondition};
use openmaps::register::{LocalOperator, RegisterLayout};
use serde::Serialize;

/// Exchange tables must reach this process fidelity.
pub const EXCHANGE_THRESHOLD: f64 = 1.0 - 1e-9;
const GRID: usize = 32;
const GOLDEN_ITERS: usize = 48;
const MAX_ROUNDS: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileReport {
    pub file: String,
    pub parsed: bool,
    pub error: Option<String>,
    pub pulses: usize,
    pub round_trip: bool,
    /// `unitary` or `channel` (the table contains resets).
    pub kind: Option<String>,
    /// `max |U†U - 1|` for unitary tables.
    pub unitarity_defect: Option<f64>,
    pub trace_preserving: Option<bool>,
    pub target: Option<String>,
    pub fidelity: Option<f64>,
    /// Role assignment that gave the best fidelity.
    pub assignment: Option<String>,
    /// `pass`, `fail`, `diagnostic` or `no-target`.
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub files: Vec<FileReport>,
}

impl VerifyReport {
    /// Parse failures and failed pass/fail targets.
    pub fn failures(&self) -> Vec<&FileReport> {
        self.files.iter().filter(|f| !f.parsed || !f.round_trip || f.status == "fail").collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Verifies every `*.pulse` file in `dir`, in name order.
pub fn verify_directory(dir: &Path) -> std::io::Result<VerifyReport> {
    let mut paths: Vec<_> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "pulse"))
        .collect();
    paths.sort();
    let mut files = Vec::new();
    for p in paths {
        let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let text = fs::read_to_string(&p)?;
        files.push(verify_text(&name, &text));
    }
    Ok(VerifyReport { files })
}

fn normalized(text: &str) -> Vec<String> {
    text.lines()
        .map(|l| l.split_whitespace().collect::<String>())
        .filter(|l| !l.is_empty())
        .collect()
}

pub fn verify_text(name: &str, text: &str) -> FileReport {
    let mut report = FileReport {
        file: name.to_string(),
        parsed: false,
        error: None,
        pulses: 0,
        round_trip: false,
        kind: None,
        unitarity_defect: None,
        trace_preserving: None,
        target: None,
        fidelity: None,
        assignment: None,
        status: "fail".into(),
    };
    let seq = match PulseSequence::parse(text) {
        Ok(s) => s,
        Err(e) => {
            report.error = Some(e.to_string());
            return report;
        }
    };
    report.parsed = true;
    report.pulses = seq.pulse_count();
    let printed = seq.to_string();
    report.round_trip = normalized(text) == normalized(&printed) && PulseSequence::parse(&printed).as_ref() == Ok(&seq);
    if let Err(e) = check(&seq, &mut report) {
        report.error = Some(e);
        report.status = "fail".into();
    }
    report
}

fn meta_list(seq: &PulseSequence, key: &str) -> Result<Vec<usize>, String> {
    let v = seq.metadata_value(key).ok_or_else(|| format!("missing `#! {key}`"))?;
    v.split_whitespace()
        .map(|x| x.parse().map_err(|_| format!("bad `{key}` entry {x:?}")))
        .collect()
}

fn meta_f64(seq: &PulseSequence, key: &str) -> Result<f64, String> {
    let v = seq.metadata_value(key).ok_or_else(|| format!("missing `#! {key}`"))?;
    v.parse().map_err(|_| format!("bad `{key}` value {v:?}"))
}

fn check(seq: &PulseSequence, report: &mut FileReport) -> Result<(), String> {
    let n = match seq.metadata_value("ions") {
        Some(v) => v.parse::<usize>().map_err(|_| format!("bad ion count {v:?}"))?,
        None => 1 + seq.pulses().filter_map(pulse_ion).max().unwrap_or(0),
    };
    let layout = RegisterLayout::new(vec![2; n], None).map_err(|e| e.to_string())?;
    let unitary = seq.pulses().all(Pulse::is_unitary);
    let u = if unitary {
        report.kind = Some("unitary".into());
        let u = gateset::sequence_unitary(seq, &layout).map_err(|e| e.to_string())?;
        let defect = linalg::max_abs_diff(&(u.adjoint() * &u), &linalg::identity(layout.dim()));
        report.unitarity_defect = Some(defect);
        Some(u)
    } else {
        report.kind = Some("channel".into());
        let ch = gateset::sequence_channel(seq, &layout).map_err(|e| e.to_string())?;
        report.trace_preserving = Some(ch.is_trace_preserving());
        None
    };
    let target = seq.metadata_value("target").unwrap_or_else(|| "none".into());
    report.target = Some(target.clone());
    let best = match (target.as_str(), &u) {
        ("none", _) => {
            report.status = "no-target".into();
            return Ok(());
        }
        (_, None) => return Err(format!("target {target:?} needs a unitary table")),
        ("exchange", Some(u)) => best_exchange(u, &layout, &meta_list(seq, "pair")?)?,
        ("hamiltonian", Some(u)) => best_hamiltonian(u, &layout, &meta_list(seq, "spins")?, meta_f64(seq, "phi")?),
        ("dissipative", Some(u)) => best_dissipative(u, &layout, meta_f64(seq, "theta")?)?,
        (kind @ ("qnd" | "remove" | "inject"), Some(u)) => {
            let m0 = meta_f64(seq, "m0")? as usize;
            best_flip(u, &layout, kind, m0)?
        }
        (other, _) => return Err(format!("unknown target {other:?}")),
    };
    report.fidelity = Some(best.fidelity);
    report.assignment = Some(best.assignment);
    report.status = match target.as_str() {
        "exchange" if best.fidelity >= EXCHANGE_THRESHOLD => "pass",
        "exchange" => "fail",
        _ => "diagnostic",
    }
    .into();
    Ok(())
}

fn pulse_ion(p: &Pulse) -> Option<usize> {
    match p {
        Pulse::Sz { ion, .. } | Pulse::Reset { ion } | Pulse::Repump { ion } => Some(*ion),
        _ => None,
    }
}

#[derive(Debug, Clone)]
struct Best {
    fidelity: f64,
    assignment: String,
}

fn keep_best(best: &mut Option<Best>, fidelity: f64, assignment: impl FnOnce() -> String) {
    if best.as_ref().map_or(true, |b| fidelity > b.fidelity) {
        *best = Some(Best { fidelity, assignment: assignment() });
    }
}

/// `s_k(i) = +-1` for ion `k`'s digit in basis index `i`.
fn signs(layout: &RegisterLayout, ions: &[usize]) -> Vec<Vec<f64>> {
    (0..layout.dim())
        .map(|i| ions.iter().map(|&k| if layout.digit(i, k) == 1 { -1.0 } else { 1.0 }).collect())
        .collect()
}

fn frame_phases(signs: &[Vec<f64>], angles: &[f64]) -> Vec<C64> {
    signs
        .iter()
        .map(|s| {
            let a: f64 = s.iter().zip(angles).map(|(x, y)| x * y).sum();
            c(0.0, a).exp()
        })
        .collect()
}

/// Golden-section maximization of `f` on `[lo, hi]`.
fn golden(f: &mut impl FnMut(f64) -> f64, mut lo: f64, mut hi: f64) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..GOLDEN_ITERS {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1);
        }
    }
    if f1 > f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Coordinate search over angles of period `pi`, starting from zero: a grid
/// of [`GRID`] points per coordinate, then golden refinement, in rounds.
fn frame_search(dims: usize, mut objective: impl FnMut(&[f64]) -> f64) -> f64 {
    let mut x = vec![0.0; dims];
    let mut best = objective(&x);
    let h = PI / GRID as f64;
    for _ in 0..MAX_ROUNDS {
        let start = best;
        for k in 0..dims {
            let mut trial = x.clone();
            let mut along = |v: f64| {
                trial[k] = v;
                objective(&trial)
            };
            let (mut gx, mut gf) = (x[k], best);
            for g in 0..GRID {
                let v = g as f64 * h;
                let fv = along(v);
                if fv > gf {
                    gx = v;
                    gf = fv;
                }
            }
            let (rx, rf) = golden(&mut along, gx - h, gx + h);
            let (nx, nf) = if rf > gf { (rx, rf) } else { (gx, gf) };
            if nf > best {
                x[k] = nx;
                best = nf;
            }
        }
        if best - start < 1e-15 || best >= 1.0 - 1e-15 {
            break;
        }
    }
    best.min(1.0)
}

/// `max |Tr(V† Z_post U Z_pre)|^2 / d^2` over Z frames on every ion.
fn unitary_fidelity(u: &CMatrix, v: &CMatrix, layout: &RegisterLayout) -> f64 {
    let d = layout.dim();
    let ions: Vec<usize> = (0..layout.n_ions()).collect();
    let s = signs(layout, &ions);
    let n = ions.len();
    let w: Vec<C64> = (0..d * d).map(|k| v[(k / d, k % d)].conj() * u[(k / d, k % d)]).collect();
    let norm = (d * d) as f64;
    frame_search(2 * n, |angles| {
        let post = frame_phases(&s, &angles[..n]);
        let pre = frame_phases(&s, &angles[n..]);
        let mut tr = ZERO;
        for i in 0..d {
            let mut row = ZERO;
            for j in 0..d {
                row += w[i * d + j] * pre[j];
            }
            tr += post[i] * row;
        }
        tr.norm_sqr() / norm
    })
}

fn exchange_target(layout: &RegisterLayout, a: usize, b: usize) -> Result<CMatrix, String> {
    let mi = c(0.0, -1.0);
    let one = c(1.0, 0.0);
    let local = linalg::from_rows(&[
        &[one, ZERO, ZERO, ZERO],
        &[ZERO, ZERO, mi, ZERO],
        &[ZERO, mi, ZERO, ZERO],
        &[ZERO, ZERO, ZERO, one],
    ]);
    LocalOperator::new(layout, vec![a, b], local)
        .and_then(|op| op.to_dense(layout))
        .map_err(|e| e.to_string())
}

fn best_exchange(u: &CMatrix, layout: &RegisterLayout, pair: &[usize]) -> Result<Best, String> {
    if pair.len() != 2 {
        return Err("`pair` needs two ions".into());
    }
    let n = layout.n_ions();
    let mut best = None;
    // the nominal pair first so that ties keep it
    let mut pairs = vec![(pair[0], pair[1])];
    pairs.extend((0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).filter(|&p| p != (pair[0], pair[1])));
    for (a, b) in pairs {
        let v = exchange_target(layout, a, b)?;
        keep_best(&mut best, unitary_fidelity(u, &v, layout), || format!("pair ({a}, {b})"));
    }
    Ok(best.expect("at least the nominal pair"))
}

fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for k in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(k);
        for mut tail in permutations(&rest) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}

/// `exp(-i phi sum_bonds n_a n_b)` along `chain`, diagonal.
fn chain_phase_target(layout: &RegisterLayout, chain: &[usize], phi: f64) -> CMatrix {
    let d = layout.dim();
    let entries: Vec<C64> = (0..d)
        .map(|i| {
            let bonds = chain.windows(2).filter(|w| layout.digit(i, w[0]) == 1 && layout.digit(i, w[1]) == 1).count();
            c(0.0, -phi * bonds as f64).exp()
        })
        .collect();
    linalg::diag(&entries)
}

fn best_hamiltonian(u: &CMatrix, layout: &RegisterLayout, spins: &[usize], phi: f64) -> Best {
    let mut best = None;
    for factor in [1.0, 2.0] {
        for chain in permutations(spins) {
            // a chain and its reverse give the same target
            if chain.first() > chain.last() {
                continue;
            }
            let v = chain_phase_target(layout, &chain, factor * phi * PI);
            keep_best(&mut best, unitary_fidelity(u, &v, layout), || {
                format!("chain {chain:?}, phi = {} pi", factor * phi)
            });
        }
    }
    best.expect("spins are non-empty")
}

fn best_flip(u: &CMatrix, base: &RegisterLayout, kind: &str, m0: usize) -> Result<Best, String> {
    let n = base.n_ions();
    let cond = match kind {
        "qnd" => FlipCondition::Equal,
        "remove" => FlipCondition::Above,
        _ => FlipCondition::Below,
    };
    let flipped = match cond {
        FlipCondition::Equal => FlipCondition::Equal,
        FlipCondition::Above => FlipCondition::Below,
        FlipCondition::Below => FlipCondition::Above,
    };
    let mut best = None;
    for anc in 0..n {
        let layout = RegisterLayout::new(vec![2; n], Some(anc)).map_err(|e| e.to_string())?;
        let n_sys = n - 1;
        if m0 > n_sys {
            return Err(format!("m0 = {m0} exceeds the {n_sys} system spins"));
        }
        for (m, cnd, label) in [(m0, cond, "|1> counts"), (n_sys - m0, flipped, "|0> counts")] {
            let v = protocols::flip_unitary(&layout, m, cnd).map_err(|e| e.to_string())?;
            keep_best(&mut best, unitary_fidelity(u, &v, &layout), || format!("ancilla {anc}, {label}"));
        }
    }
    best.ok_or_else(|| "register has no ions".into())
}

/// `(1/d) sum_k |K_k>><<K_k|`, matching `channels::choi`.
fn choi_of(kraus: &[CMatrix]) -> CMatrix {
    let d = kraus[0].nrows();
    let mut out = CMatrix::zeros(d * d, d * d);
    for k in kraus {
        for i in 0..d {
            for r in 0..d {
                for j in 0..d {
                    for col in 0..d {
                        out[(i * d + r, j * d + col)] += k[(r, i)] * k[(col, j)].conj() / d as f64;
                    }
                }
            }
        }
    }
    out
}

/// Reduced channel of a three-ion table against the pair dissipative map, over
/// ancilla position, ancilla input level and the labelling of the system spins.
fn best_dissipative(u: &CMatrix, layout: &RegisterLayout, theta: f64) -> Result<Best, String> {
    if layout.n_ions() != 3 {
        return Err("dissipative target expects three ions".into());
    }
    let target = choi_of(&maps::dissipative_kraus(theta * PI));
    let x = openmaps::register::PauliOp::X.qubit_matrix();
    let xx = linalg::kron(&x, &x);
    let sys_layout = RegisterLayout::qubits(2);
    let s = signs(&sys_layout, &[0, 1]);
    let mut best = None;
    for anc in 0..3 {
        let sys: Vec<usize> = (0..3).filter(|&k| k != anc).collect();
        for input in 0..2 {
            let kraus: Vec<CMatrix> = (0..2)
                .map(|out| {
                    CMatrix::from_fn(4, 4, |r, col| {
                        let idx = |a: usize, local: usize| {
                            let mut digits = [0; 3];
                            digits[anc] = a;
                            digits[sys[0]] = local >> 1;
                            digits[sys[1]] = local & 1;
                            layout.index_of(&digits).expect("valid digits")
                        };
                        u[(idx(out, r), idx(input, col))]
                    })
                })
                .collect();
            for relabel in [false, true] {
                let ks: Vec<CMatrix> =
                    if relabel { kraus.iter().map(|k| &xx * k * &xx).collect() } else { kraus.clone() };
                let f = frame_search(4, |angles| {
                    let post = linalg::diag(&frame_phases(&s, &angles[..2]));
                    let pre = linalg::diag(&frame_phases(&s, &angles[2..]));
                    let framed: Vec<CMatrix> = ks.iter().map(|k| &post * k * &pre).collect();
                    channels::uhlmann_matrix_fidelity(&choi_of(&framed), &target)
                });
                keep_best(&mut best, f, || {
                    format!("ancilla {anc} from |{input}>, {}", if relabel { "|0> counts" } else { "|1> counts" })
                });
            }
        }
    }
    Ok(best.expect("three ancilla choices"))
}
