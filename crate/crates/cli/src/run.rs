//! Executes a schedule and records one observable row per token.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use openmaps::channels::{self, Channel};
use openmaps::linalg::{c, CVector};
use openmaps::maps::{self, DissipativeMapSpec, HamiltonianMapSpec};
use openmaps::observables;
use openmaps::protocols;
use openmaps::register::{DensityOperator, PureState, RegisterLayout};
use serde::Serialize;
use thiserror::Error;

use crate::config::{self, ConfigError, InitialState, RunConfig, Token};
use crate::dump::StateDump;

/// Full eigenvalue positivity checks are skipped above this dimension.
pub const POSITIVITY_CHECK_DIM: usize = 256;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invariant violated at step {step} ({token}): {what}")]
    Invariant { step: usize, token: String, what: String },
    #[error("step {step} ({token}) failed: {message}")]
    Step { step: usize, token: String, message: String },
    #[error("cannot write {path}: {message}")]
    Io { path: String, message: String },
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Invariant { .. } => 3,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub step: usize,
    pub token: String,
    pub fidelity: f64,
    pub purity: f64,
    pub p_m0: f64,
    pub populations: Vec<f64>,
    pub offdiag: Option<f64>,
    pub success_prob: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub rows: Vec<Row>,
    /// State after each row, when dumps were requested.
    pub states: Vec<DensityOperator>,
    pub final_state: DensityOperator,
}

pub fn initial_state(cfg: &RunConfig) -> Result<DensityOperator, RunError> {
    let layout = RegisterLayout::qubits(cfg.n);
    let bad = |m: String| RunError::Config(ConfigError::Invalid(m));
    match &cfg.initial {
        InitialState::Basis(label) => DensityOperator::from_label(layout, label).map_err(|e| bad(e.to_string())),
        InitialState::Dicke(m) => observables::dicke_state(*m, cfg.n)
            .map(|s| s.to_density())
            .map_err(|e| bad(e.to_string())),
        InitialState::EqualSuperposition => {
            let d = layout.dim();
            let amps = CVector::from_element(d, c(1.0 / (d as f64).sqrt(), 0.0));
            Ok(PureState::new(layout, amps).map_err(|e| bad(e.to_string()))?.to_density())
        }
        InitialState::File(path) => {
            let text = fs::read_to_string(path).map_err(|e| {
                RunError::Config(ConfigError::Io { path: path.display().to_string(), message: e.to_string() })
            })?;
            let rho = StateDump::from_json(&text)
                .and_then(|d| d.to_state())
                .map_err(|e| bad(format!("{}: {e}", path.display())))?;
            if rho.layout() != &layout {
                return Err(bad(format!(
                    "state in {} has layout {}, expected {} qubits",
                    path.display(),
                    rho.layout().describe(),
                    cfg.n
                )));
            }
            Ok(rho)
        }
    }
}

fn check_invariants(rho: &DensityOperator, step: usize, token: &str) -> Result<(), RunError> {
    let res = if rho.layout().dim() <= POSITIVITY_CHECK_DIM { rho.validate() } else { rho.validate_cheap() };
    res.map_err(|e| RunError::Invariant { step, token: token.to_string(), what: e.to_string() })
}

fn row(rho: &DensityOperator, cfg: &RunConfig, step: usize, token: String, success: Option<f64>) -> Result<Row, RunError> {
    let err = |m: String| RunError::Step { step, token: token.clone(), message: m };
    let populations = observables::subspace_populations(rho);
    Ok(Row {
        step,
        token: token.clone(),
        fidelity: observables::dicke_fidelity(rho, cfg.m0).map_err(|e| err(e.to_string()))?,
        purity: observables::purity(rho),
        p_m0: populations[cfg.m0],
        offdiag: observables::offdiag_order(rho, cfg.m0).map_err(|e| err(e.to_string()))?,
        populations,
        success_prob: success,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum ChannelKey {
    Dissipative(usize, u64),
    Sweep(u64),
    Hamiltonian(u64),
}

/// Runs the expanded schedule. Deterministic: no randomness, fixed order.
pub fn execute(cfg: &RunConfig) -> Result<RunOutput, RunError> {
    cfg.validate()?;
    let mut rho = initial_state(cfg)?;
    let layout = rho.layout().clone();
    check_invariants(&rho, 0, "INIT")?;
    let mut rows = vec![row(&rho, cfg, 0, "INIT".into(), None)?];
    let mut states = Vec::new();
    if cfg.dump_states {
        states.push(rho.clone());
    }
    let mut cache: HashMap<ChannelKey, Channel> = HashMap::new();
    for (k, token) in config::expand(&cfg.schedule).iter().enumerate() {
        let step = k + 1;
        let label = token.to_string();
        let err = |m: String| RunError::Step { step, token: label.clone(), message: m };
        let mut success = None;
        let channel = |key: ChannelKey, cache: &mut HashMap<ChannelKey, Channel>| -> Result<Channel, RunError> {
            if let Some(ch) = cache.get(&key) {
                return Ok(ch.clone());
            }
            let ch = match key {
                ChannelKey::Dissipative(site, bits) => maps::elementary_dissipative_map(
                    &layout,
                    DissipativeMapSpec { site, theta: f64::from_bits(bits) * PI, epsilon: cfg.epsilon_diss },
                ),
                ChannelKey::Sweep(bits) => {
                    maps::dissipative_sweep_channel(&layout, f64::from_bits(bits) * PI, cfg.epsilon_diss, cfg.boundary)
                }
                ChannelKey::Hamiltonian(bits) => maps::hamiltonian_map_with(
                    &layout,
                    HamiltonianMapSpec { phi: f64::from_bits(bits) * PI, epsilon: cfg.epsilon_coh },
                    cfg.boundary,
                ),
            }
            .map_err(|e| err(e.to_string()))?;
            cache.insert(key, ch.clone());
            Ok(ch)
        };
        rho = match token {
            Token::Dissipative { site, theta } => {
                let ch = channel(ChannelKey::Dissipative(site - 1, theta.unwrap_or(cfg.theta).to_bits()), &mut cache)?;
                ch.apply(&rho).map_err(|e| err(e.to_string()))?
            }
            Token::Sweep { theta } => {
                let ch = channel(ChannelKey::Sweep(theta.unwrap_or(cfg.theta).to_bits()), &mut cache)?;
                ch.apply(&rho).map_err(|e| err(e.to_string()))?
            }
            Token::Hamiltonian { phi } => {
                let ch = channel(ChannelKey::Hamiltonian(phi.unwrap_or(cfg.phi).to_bits()), &mut cache)?;
                ch.apply(&rho).map_err(|e| err(e.to_string()))?
            }
            Token::Qnd(m) => {
                let sel = protocols::postselect(&rho, *m).map_err(|e| err(e.to_string()))?;
                success = Some(sel.success_probability);
                let state = sel.state.ok_or_else(|| RunError::Invariant {
                    step,
                    token: label.clone(),
                    what: format!("post-selection on m = {m} has zero success probability"),
                })?;
                stab_noise(&state, cfg.epsilon_stab).map_err(err)?
            }
            Token::Remove(m) => protocol(&rho, *m, protocols::stabilize_remove, cfg).map_err(err)?,
            Token::Inject(m) => protocol(&rho, *m, protocols::stabilize_inject, cfg).map_err(err)?,
            Token::Stabilize(m) => protocol(&rho, *m, protocols::stabilize, cfg).map_err(err)?,
            Token::Repeat(..) => unreachable!("schedule is expanded"),
        };
        check_invariants(&rho, step, &label)?;
        rows.push(row(&rho, cfg, step, label, success)?);
        if cfg.dump_states {
            states.push(rho.clone());
        }
    }
    Ok(RunOutput { rows, states, final_state: rho })
}

fn stab_noise(rho: &DensityOperator, eps: f64) -> Result<DensityOperator, String> {
    if eps == 0.0 {
        return Ok(rho.clone());
    }
    channels::global_depolarize(rho, eps).map_err(|e| e.to_string())
}

fn protocol(
    rho: &DensityOperator,
    m0: usize,
    f: fn(&DensityOperator, usize) -> protocols::Result<DensityOperator>,
    cfg: &RunConfig,
) -> Result<DensityOperator, String> {
    let out = protocols::on_system(rho, m0, f).map_err(|e| e.to_string())?;
    stab_noise(&out, cfg.epsilon_stab)
}

pub fn csv_header(n: usize) -> String {
    let mut cols: Vec<String> = ["step", "token", "fidelity", "purity", "p_m0"].iter().map(|s| s.to_string()).collect();
    cols.extend((0..=n).map(|m| format!("p_{m}")));
    cols.push("offdiag".into());
    cols.push("success_prob".into());
    cols.join(",")
}

/// The CSV series. Floats use the shortest representation that round-trips.
pub fn csv_string(rows: &[Row], n: usize) -> String {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(csv_header(n).split(',')).expect("in-memory write");
    for r in rows {
        let mut rec = vec![r.step.to_string(), r.token.clone(), r.fidelity.to_string(), r.purity.to_string(), r.p_m0.to_string()];
        rec.extend(r.populations.iter().map(f64::to_string));
        rec.push(r.offdiag.map(|v| v.to_string()).unwrap_or_default());
        rec.push(r.success_prob.map(|v| v.to_string()).unwrap_or_default());
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("ascii output")
}

#[derive(Serialize)]
struct Report<'a> {
    n: usize,
    m0: usize,
    theta: f64,
    phi: f64,
    epsilon_diss: f64,
    epsilon_coh: f64,
    epsilon_stab: f64,
    rows: &'a [Row],
}

pub fn report_json(cfg: &RunConfig, rows: &[Row]) -> String {
    let report = Report {
        n: cfg.n,
        m0: cfg.m0,
        theta: cfg.theta,
        phi: cfg.phi,
        epsilon_diss: cfg.epsilon_diss,
        epsilon_coh: cfg.epsilon_coh,
        epsilon_stab: cfg.epsilon_stab,
        rows,
    };
    serde_json::to_string_pretty(&report).expect("report serializes")
}

/// Writes `series.csv`, `reports.json` and, if present, `states/step_NNNN.json`.
pub fn write_outputs(cfg: &RunConfig, out: &RunOutput, dir: &Path) -> Result<(), RunError> {
    let io = |p: &Path, e: std::io::Error| RunError::Io { path: p.display().to_string(), message: e.to_string() };
    fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let csv_path = dir.join("series.csv");
    fs::write(&csv_path, csv_string(&out.rows, cfg.n)).map_err(|e| io(&csv_path, e))?;
    let json_path = dir.join("reports.json");
    fs::write(&json_path, report_json(cfg, &out.rows)).map_err(|e| io(&json_path, e))?;
    if !out.states.is_empty() {
        let states_dir = dir.join("states");
        fs::create_dir_all(&states_dir).map_err(|e| io(&states_dir, e))?;
        for (row, rho) in out.rows.iter().zip(&out.states) {
            let mut dump = StateDump::from_state(rho);
            dump.step = Some(row.step);
            dump.token = Some(row.token.clone());
            let p = states_dir.join(format!("step_{:04}.json", row.step));
            fs::write(&p, dump.to_json()).map_err(|e| io(&p, e))?;
        }
    }
    Ok(())
}
