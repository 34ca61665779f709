//! Run configuration: `key = value` lines plus a `schedule { ... }` block.
//!
//! ```text
//! # Three spins, two excitations, ideal pumping.
//! N = 3
//! m0 = 2
//! initial = 110
//! theta = 0.5          # units of pi
//! schedule {
//!   REPEAT 6 { SWEEP }
//!   U 0.25; QND 2
//! }
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use openmaps::maps::Boundary;
use thiserror::Error;

pub const MAX_SPINS: usize = 10;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("schedule token {position} ({token:?}) at line {line}: {message}")]
    Token { token: String, position: usize, line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    /// Computational basis state, ion 0 first.
    Basis(String),
    Dicke(usize),
    /// `|+>^N`.
    EqualSuperposition,
    /// JSON state dump.
    File(PathBuf),
}

/// One schedule operation. Angles are in units of pi; `None` falls back to the
/// config value. `D` sites are 1-based.
#[derive(Debug, Clone, PartialEq)]
pub enum Token {
    Dissipative { site: usize, theta: Option<f64> },
    Sweep { theta: Option<f64> },
    Hamiltonian { phi: Option<f64> },
    Qnd(usize),
    Remove(usize),
    Inject(usize),
    Stabilize(usize),
    Repeat(usize, Vec<Token>),
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |v: &Option<f64>| v.map(|x| format!(" {x}")).unwrap_or_default();
        match self {
            Token::Dissipative { site, theta } => write!(f, "D {site}{}", opt(theta)),
            Token::Sweep { theta } => write!(f, "SWEEP{}", opt(theta)),
            Token::Hamiltonian { phi } => write!(f, "U{}", opt(phi)),
            Token::Qnd(m) => write!(f, "QND {m}"),
            Token::Remove(m) => write!(f, "REMOVE {m}"),
            Token::Inject(m) => write!(f, "INJECT {m}"),
            Token::Stabilize(m) => write!(f, "STAB {m}"),
            Token::Repeat(k, body) => {
                let inner: Vec<String> = body.iter().map(Token::to_string).collect();
                write!(f, "REPEAT {k} {{ {} }}", inner.join("; "))
            }
        }
    }
}

/// Flattens `REPEAT` blocks.
pub fn expand(tokens: &[Token]) -> Vec<Token> {
    let mut out = Vec::new();
    for t in tokens {
        match t {
            Token::Repeat(k, body) => {
                let inner = expand(body);
                for _ in 0..*k {
                    out.extend(inner.iter().cloned());
                }
            }
            other => out.push(other.clone()),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub n: usize,
    pub m0: usize,
    pub initial: InitialState,
    /// Pumping angle in units of pi.
    pub theta: f64,
    /// Hamiltonian angle in units of pi.
    pub phi: f64,
    pub epsilon_diss: f64,
    pub epsilon_coh: f64,
    /// Global depolarizing weight applied after every protocol token.
    pub epsilon_stab: f64,
    pub boundary: Boundary,
    pub schedule: Vec<Token>,
    pub out: Option<PathBuf>,
    pub dump_states: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parsed {
    pub config: RunConfig,
    pub warnings: Vec<String>,
}

pub fn load(path: &Path, strict: bool) -> Result<Parsed> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::Io { path: path.display().to_string(), message: e.to_string() })?;
    let mut parsed = parse(&text, strict)?;
    // relative paths inside the file are relative to the file
    let base = path.parent().unwrap_or(Path::new("."));
    if let InitialState::File(p) = &mut parsed.config.initial {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    }
    if let Some(out) = &mut parsed.config.out {
        if out.is_relative() {
            *out = base.join(&*out);
        }
    }
    Ok(parsed)
}

fn strip_comment(line: &str) -> &str {
    line.find('#').map_or(line, |p| &line[..p])
}

pub fn parse(text: &str, strict: bool) -> Result<Parsed> {
    let mut fields: Vec<(usize, String, String)> = Vec::new();
    let mut schedule: Option<Vec<Token>> = None;
    let mut warnings = Vec::new();
    let lines: Vec<&str> = text.lines().collect();
    let mut k = 0;
    while k < lines.len() {
        let line_no = k + 1;
        let code = strip_comment(lines[k]).trim();
        k += 1;
        if code.is_empty() {
            continue;
        }
        if let Some(rest) = code.strip_prefix("schedule") {
            let rest = rest.trim_start();
            if !rest.starts_with('{') {
                return Err(ConfigError::Syntax { line: line_no, message: "expected `schedule {`".into() });
            }
            if schedule.is_some() {
                return Err(ConfigError::Syntax { line: line_no, message: "duplicate schedule block".into() });
            }
            // collect everything up to the matching brace
            let mut body: Vec<(usize, String)> = vec![(line_no, rest[1..].to_string())];
            let mut depth = 1 + brace_balance(&rest[1..]);
            while depth > 0 {
                if k >= lines.len() {
                    return Err(ConfigError::Syntax { line: line_no, message: "unterminated schedule block".into() });
                }
                let l = strip_comment(lines[k]);
                depth += brace_balance(l);
                body.push((k + 1, l.to_string()));
                k += 1;
            }
            schedule = Some(parse_schedule(&body)?);
            continue;
        }
        let (key, value) = code
            .split_once('=')
            .ok_or_else(|| ConfigError::Syntax { line: line_no, message: format!("expected key = value, got {code:?}") })?;
        let key = key.trim().to_string();
        if fields.iter().any(|(_, k2, _)| *k2 == key) {
            return Err(ConfigError::Syntax { line: line_no, message: format!("duplicate key {key:?}") });
        }
        fields.push((line_no, key, value.trim().to_string()));
    }

    let mut b = Builder::default();
    for (line, key, value) in &fields {
        let bad = |message: String| ConfigError::Syntax { line: *line, message };
        match key.as_str() {
            "N" => b.n = Some(parse_num::<usize>(value).map_err(bad)?),
            "m0" => b.m0 = Some(parse_num::<usize>(value).map_err(bad)?),
            "initial" => b.initial = Some(parse_initial(value).map_err(bad)?),
            "theta" => b.theta = Some(parse_num::<f64>(value).map_err(bad)?),
            "phi" => b.phi = Some(parse_num::<f64>(value).map_err(bad)?),
            "epsilon_diss" => b.epsilon_diss = Some(parse_num::<f64>(value).map_err(bad)?),
            "epsilon_coh" => b.epsilon_coh = Some(parse_num::<f64>(value).map_err(bad)?),
            "epsilon_stab" => b.epsilon_stab = Some(parse_num::<f64>(value).map_err(bad)?),
            "boundary" => {
                b.boundary = Some(match value.as_str() {
                    "open" => Boundary::Open,
                    "periodic" => Boundary::Periodic,
                    other => return Err(bad(format!("boundary must be open or periodic, got {other:?}"))),
                })
            }
            "out" => b.out = Some(PathBuf::from(value)),
            "dump_states" => b.dump_states = Some(parse_bool(value).map_err(bad)?),
            other => {
                let msg = format!("line {line}: unknown key {other:?}");
                if strict {
                    return Err(ConfigError::Syntax { line: *line, message: format!("unknown key {other:?}") });
                }
                warnings.push(msg);
            }
        }
    }
    let config = b.finish(schedule)?;
    Ok(Parsed { config, warnings })
}

fn brace_balance(s: &str) -> isize {
    s.chars().map(|c| match c {
        '{' => 1,
        '}' => -1,
        _ => 0,
    })
    .sum()
}

fn parse_num<T: std::str::FromStr>(v: &str) -> std::result::Result<T, String> {
    v.parse::<T>().map_err(|_| format!("invalid number {v:?}"))
}

fn parse_bool(v: &str) -> std::result::Result<bool, String> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(format!("invalid boolean {other:?}")),
    }
}

fn parse_initial(v: &str) -> std::result::Result<InitialState, String> {
    if v == "equal-superposition" {
        return Ok(InitialState::EqualSuperposition);
    }
    if let Some(m) = v.strip_prefix("dicke") {
        return m.trim().parse().map(InitialState::Dicke).map_err(|_| format!("invalid Dicke spec {v:?}"));
    }
    if !v.is_empty() && v.chars().all(|c| c == '0' || c == '1') {
        return Ok(InitialState::Basis(v.to_string()));
    }
    if v.ends_with(".json") {
        return Ok(InitialState::File(PathBuf::from(v)));
    }
    Err(format!("initial must be a 0/1 label, `dicke m`, `equal-superposition` or a .json file, got {v:?}"))
}

#[derive(Debug, Clone)]
struct Lexeme {
    text: String,
    line: usize,
    position: usize,
}

/// Splits the schedule into words and the separators `{`, `}`, `;`. A newline
/// counts as `;`. `position` numbers the words from 1.
fn lex(body: &[(usize, String)]) -> Vec<Lexeme> {
    fn flush(word: &mut String, out: &mut Vec<Lexeme>, words: &mut usize, line: usize) {
        if !word.is_empty() {
            *words += 1;
            out.push(Lexeme { text: std::mem::take(word), line, position: *words });
        }
    }
    let mut out = Vec::new();
    let mut words = 0;
    for &(line, ref text) in body {
        let mut word = String::new();
        for ch in text.chars() {
            match ch {
                '{' | '}' | ';' => {
                    flush(&mut word, &mut out, &mut words, line);
                    out.push(Lexeme { text: ch.to_string(), line, position: words });
                }
                c if c.is_whitespace() => flush(&mut word, &mut out, &mut words, line),
                c => word.push(c),
            }
        }
        flush(&mut word, &mut out, &mut words, line);
        out.push(Lexeme { text: ";".into(), line, position: words });
    }
    out
}

fn parse_schedule(body: &[(usize, String)]) -> Result<Vec<Token>> {
    let lexemes = lex(body);
    let mut pos = 0;
    let tokens = parse_block(&lexemes, &mut pos, 0)?;
    // the final `}` closes the schedule itself
    if let Some(l) = lexemes[pos..].iter().find(|x| x.text != ";") {
        return Err(token_error(l, "unexpected text after the schedule"));
    }
    Ok(tokens)
}

fn token_error(l: &Lexeme, message: impl Into<String>) -> ConfigError {
    ConfigError::Token { token: l.text.clone(), position: l.position, line: l.line, message: message.into() }
}

fn parse_block(lx: &[Lexeme], pos: &mut usize, depth: usize) -> Result<Vec<Token>> {
    let mut tokens = Vec::new();
    while *pos < lx.len() {
        let l = &lx[*pos];
        match l.text.as_str() {
            ";" => *pos += 1,
            "}" => {
                *pos += 1;
                return Ok(tokens);
            }
            "{" => return Err(token_error(l, "unexpected `{`")),
            _ => tokens.push(parse_token(lx, pos, depth)?),
        }
    }
    if depth > 0 {
        let last = lx.last().expect("non-empty inside a block");
        return Err(token_error(last, "unterminated REPEAT block"));
    }
    Ok(tokens)
}

/// Arguments of a token: words up to the next separator or brace.
fn take_args<'a>(lx: &'a [Lexeme], pos: &mut usize) -> Vec<&'a Lexeme> {
    let mut args = Vec::new();
    while *pos < lx.len() && !matches!(lx[*pos].text.as_str(), ";" | "{" | "}") {
        args.push(&lx[*pos]);
        *pos += 1;
    }
    args
}

fn parse_token(lx: &[Lexeme], pos: &mut usize, depth: usize) -> Result<Token> {
    let head = &lx[*pos];
    *pos += 1;
    let args = take_args(lx, pos);
    let int = |a: &Lexeme| a.text.parse::<usize>().map_err(|_| token_error(head, format!("invalid integer {:?}", a.text)));
    let real = |a: &Lexeme| {
        a.text
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| token_error(head, format!("invalid angle {:?}", a.text)))
    };
    let arity = |lo: usize, hi: usize| {
        if args.len() < lo || args.len() > hi {
            Err(token_error(head, format!("expected {lo}..={hi} argument(s), got {}", args.len())))
        } else {
            Ok(())
        }
    };
    let tok = match head.text.as_str() {
        "D" => {
            arity(1, 2)?;
            let site = int(args[0])?;
            if site == 0 {
                return Err(token_error(head, "sites are numbered from 1"));
            }
            Token::Dissipative { site, theta: args.get(1).map(|a| real(a)).transpose()? }
        }
        "SWEEP" => {
            arity(0, 1)?;
            Token::Sweep { theta: args.first().map(|a| real(a)).transpose()? }
        }
        "U" => {
            arity(0, 1)?;
            Token::Hamiltonian { phi: args.first().map(|a| real(a)).transpose()? }
        }
        "QND" | "REMOVE" | "INJECT" | "STAB" => {
            arity(1, 1)?;
            let m = int(args[0])?;
            match head.text.as_str() {
                "QND" => Token::Qnd(m),
                "REMOVE" => Token::Remove(m),
                "INJECT" => Token::Inject(m),
                _ => Token::Stabilize(m),
            }
        }
        "REPEAT" => {
            arity(1, 1)?;
            let k = int(args[0])?;
            if k == 0 {
                return Err(token_error(head, "REPEAT count must be at least 1"));
            }
            if *pos >= lx.len() || lx[*pos].text != "{" {
                return Err(token_error(head, "REPEAT needs a `{ ... }` block"));
            }
            *pos += 1;
            let body = parse_block(lx, pos, depth + 1)?;
            if body.is_empty() {
                return Err(token_error(head, "empty REPEAT block"));
            }
            Token::Repeat(k, body)
        }
        other => return Err(token_error(head, format!("unknown token {other:?}"))),
    };
    Ok(tok)
}

#[derive(Default)]
struct Builder {
    n: Option<usize>,
    m0: Option<usize>,
    initial: Option<InitialState>,
    theta: Option<f64>,
    phi: Option<f64>,
    epsilon_diss: Option<f64>,
    epsilon_coh: Option<f64>,
    epsilon_stab: Option<f64>,
    boundary: Option<Boundary>,
    out: Option<PathBuf>,
    dump_states: Option<bool>,
}

impl Builder {
    fn finish(self, schedule: Option<Vec<Token>>) -> Result<RunConfig> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        let Some(n) = self.n else { return invalid("missing key N".into()) };
        if !(2..=MAX_SPINS).contains(&n) {
            return invalid(format!("N must lie in 2..={MAX_SPINS}, got {n}"));
        }
        let Some(m0) = self.m0 else { return invalid("missing key m0".into()) };
        if m0 > n {
            return invalid(format!("m0 = {m0} exceeds N = {n}"));
        }
        let Some(initial) = self.initial else { return invalid("missing key initial".into()) };
        match &initial {
            InitialState::Basis(l) if l.len() != n => {
                return invalid(format!("initial label {l:?} has {} digits, expected {n}", l.len()))
            }
            InitialState::Dicke(m) if *m > n => return invalid(format!("dicke {m} exceeds N = {n}")),
            _ => {}
        }
        let Some(schedule) = schedule else { return invalid("missing schedule block".into()) };
        let epsilon_diss = self.epsilon_diss.unwrap_or(0.0);
        let config = RunConfig {
            n,
            m0,
            initial,
            theta: self.theta.unwrap_or(0.5),
            phi: self.phi.unwrap_or(0.0),
            epsilon_diss,
            epsilon_coh: self.epsilon_coh.unwrap_or(epsilon_diss / 5.0),
            epsilon_stab: self.epsilon_stab.unwrap_or(0.0),
            boundary: self.boundary.unwrap_or_default(),
            schedule,
            out: self.out,
            dump_states: self.dump_states.unwrap_or(false),
        };
        config.validate()?;
        Ok(config)
    }
}

impl RunConfig {
    /// Semantic checks that the modules would otherwise reject mid-run.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("epsilon_diss", self.epsilon_diss),
            ("epsilon_coh", self.epsilon_coh),
            ("epsilon_stab", self.epsilon_stab),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(ConfigError::Invalid(format!("{name} = {v} must lie in [0, 1]")));
            }
        }
        for (name, v) in [("theta", self.theta), ("phi", self.phi)] {
            if !v.is_finite() {
                return Err(ConfigError::Invalid(format!("{name} must be finite")));
            }
        }
        // `D i` addresses the open-chain bonds; the closing bond of a ring is
        // only reached through SWEEP and U.
        let bonds = self.n - 1;
        for (k, t) in expand(&self.schedule).iter().enumerate() {
            let bad = |m: String| Err(ConfigError::Invalid(format!("schedule step {} ({t}): {m}", k + 1)));
            match t {
                Token::Dissipative { site, .. } if *site > bonds => {
                    return bad(format!("site {site} out of range 1..={bonds}"));
                }
                Token::Qnd(m) | Token::Remove(m) | Token::Inject(m) | Token::Stabilize(m) if *m > self.n => {
                    return bad(format!("excitation number {m} exceeds N = {}", self.n));
                }
                _ => {}
            }
        }
        Ok(())
    }
}
