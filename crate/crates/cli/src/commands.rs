//! The subcommands behind the `openmaps` binary.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::analytics::{self, Table};
use crate::config;
use crate::run::{self, RunError};
use crate::verify;

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Clone, Default)]
pub struct GlobalOptions {
    pub out: Option<PathBuf>,
    pub dump_states: bool,
    pub strict: bool,
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into())
}

/// Output directory: `--out` wins over the config's `out`; with several configs
/// each gets a subdirectory named after its file.
fn output_dir(opts: &GlobalOptions, cfg_out: Option<&Path>, path: &Path, many: bool) -> PathBuf {
    match (&opts.out, many) {
        (Some(o), false) => o.clone(),
        (Some(o), true) => o.join(stem(path)),
        (None, _) => cfg_out
            .map(Path::to_path_buf)
            .unwrap_or_else(|| path.with_file_name(format!("{}-out", stem(path)))),
    }
}

fn run_one(path: &Path, opts: &GlobalOptions, many: bool) -> Result<PathBuf, RunError> {
    let parsed = config::load(path, opts.strict)?;
    for w in &parsed.warnings {
        eprintln!("warning: {}: {w}", path.display());
    }
    let mut cfg = parsed.config;
    cfg.dump_states |= opts.dump_states;
    let dir = output_dir(opts, cfg.out.as_deref(), path, many);
    let out = run::execute(&cfg)?;
    run::write_outputs(&cfg, &out, &dir)?;
    Ok(dir)
}

/// Runs each config; `parallel` spreads independent configs over threads.
/// Returns the most severe exit code.
pub fn run_configs(paths: &[PathBuf], opts: &GlobalOptions, parallel: bool) -> i32 {
    let many = paths.len() > 1;
    let results: Vec<(PathBuf, Result<PathBuf, RunError>)> = if parallel {
        paths.par_iter().map(|p| (p.clone(), run_one(p, opts, many))).collect()
    } else {
        paths.iter().map(|p| (p.clone(), run_one(p, opts, many))).collect()
    };
    let mut code = EXIT_OK;
    for (path, res) in results {
        match res {
            Ok(dir) => println!("{}: wrote {}", path.display(), dir.display()),
            Err(e) => {
                eprintln!("error: {}: {e}", path.display());
                code = code.max(e.exit_code());
            }
        }
    }
    code
}

pub fn verify_sequences(dir: &Path, opts: &GlobalOptions) -> i32 {
    let report = match verify::verify_directory(dir) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {}: {e}", dir.display());
            return EXIT_CONFIG;
        }
    };
    for f in &report.files {
        let fid = f.fidelity.map(|v| format!("{v:.12}")).unwrap_or_else(|| "-".into());
        let note = f.error.as_deref().map(|e| format!("  ({e})")).unwrap_or_default();
        eprintln!("{:<28} {:<11} round-trip={:<5} fidelity={fid}{note}", f.file, f.status, f.round_trip);
    }
    let json = report.to_json();
    if let Some(out) = &opts.out {
        if let Err(e) = std::fs::create_dir_all(out).and_then(|_| std::fs::write(out.join("verify_report.json"), &json)) {
            eprintln!("error: cannot write report: {e}");
            return EXIT_OTHER;
        }
    } else {
        println!("{json}");
    }
    if report.failures().is_empty() {
        EXIT_OK
    } else {
        EXIT_OTHER
    }
}

pub fn analytics(table: &str, n_min: usize, n_max: usize) -> i32 {
    let table: Table = match table.parse() {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    if n_max < n_min.max(2) || n_max > config::MAX_SPINS {
        eprintln!("error: need 2 <= n-min <= n-max <= {}", config::MAX_SPINS);
        return EXIT_CONFIG;
    }
    match analytics::render(table, n_min, n_max) {
        Ok(text) => {
            print!("{text}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_OTHER
        }
    }
}
