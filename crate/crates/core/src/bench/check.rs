use std::fmt;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{cmd_gen, compile, parse_checksum, run_binary, BenchError, CompilerCmd, Manifest};
use crate::codegen::BackendRegistry;
use crate::oracle::{self, ExecConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckMode {
    /// Run with `--debug` and compare every trace line.
    Trace,
    /// Compare only the `CHECKSUM` line.
    ChecksumOnly,
}

#[derive(Debug, Clone)]
pub struct CheckConfig {
    pub compiler: CompilerCmd,
    pub flags: String,
    pub paths: Vec<u64>,
    /// Seeds other than the manifest's are regenerated in a scratch directory.
    pub seeds: Vec<u64>,
    pub mode: CheckMode,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum CheckOutcome {
    Pass,
    CompileFailure {
        message: String,
    },
    RuntimeFailure {
        message: String,
    },
    /// First differing output line, 0-based; the checksum line counts.
    TraceMismatch {
        index: usize,
        expected: String,
        actual: String,
    },
    ChecksumMismatch {
        expected: u64,
        actual: Option<u64>,
    },
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        matches!(self, CheckOutcome::Pass)
    }
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CheckOutcome::Pass => f.write_str("pass"),
            CheckOutcome::CompileFailure { message } => write!(f, "compile failure: {message}"),
            CheckOutcome::RuntimeFailure { message } => write!(f, "runtime failure: {message}"),
            CheckOutcome::TraceMismatch { index, expected, actual } => {
                write!(f, "trace mismatch at event {index}: expected `{expected}`, got `{actual}`")
            }
            CheckOutcome::ChecksumMismatch { expected, actual } => match actual {
                Some(a) => write!(f, "checksum mismatch: expected {expected}, got {a}"),
                None => write!(f, "checksum mismatch: expected {expected}, no CHECKSUM line"),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CheckCase {
    pub seed: u64,
    pub path: u64,
    pub outcome: CheckOutcome,
}

/// Compares program output with the oracle's expected output.
pub fn compare_output(expected: &str, actual: &str, mode: CheckMode) -> CheckOutcome {
    let expected_sum = parse_checksum(expected).expect("oracle output ends with a checksum");
    if mode == CheckMode::ChecksumOnly {
        let actual_sum = parse_checksum(actual);
        return if actual_sum == Some(expected_sum) {
            CheckOutcome::Pass
        } else {
            CheckOutcome::ChecksumMismatch { expected: expected_sum, actual: actual_sum }
        };
    }
    let mut exp = expected.lines();
    let mut act = actual.lines();
    let mut index = 0;
    loop {
        match (exp.next(), act.next()) {
            (None, None) => return CheckOutcome::Pass,
            (e, a) if e == a => index += 1,
            (e, a) => {
                if e.is_some_and(|l| l.starts_with("CHECKSUM ")) && a.is_some_and(|l| l.starts_with("CHECKSUM ")) {
                    return CheckOutcome::ChecksumMismatch {
                        expected: expected_sum,
                        actual: parse_checksum(a.unwrap_or_default()),
                    };
                }
                return CheckOutcome::TraceMismatch {
                    index,
                    expected: e.unwrap_or("<end of output>").to_string(),
                    actual: a.unwrap_or("<end of output>").to_string(),
                };
            }
        }
    }
}

fn check_dir(
    manifest: &Manifest,
    dir: &Path,
    seed: u64,
    cfg: &CheckConfig,
    scratch: &Path,
) -> Result<Vec<CheckCase>, BenchError> {
    let program = manifest.program(Some(seed))?;
    let bin = scratch.join(format!("check-{seed}"));
    let inputs = manifest.compile_inputs(dir);
    let case = |path, outcome| CheckCase { seed, path, outcome };
    if let Err(e) = compile(&cfg.compiler, &inputs, &bin, &cfg.flags, Some(dir)) {
        let message = e.to_string();
        return Ok(cfg
            .paths
            .iter()
            .map(|&p| case(p, CheckOutcome::CompileFailure { message: message.clone() }))
            .collect());
    }
    let mut cases = Vec::with_capacity(cfg.paths.len());
    for &path in &cfg.paths {
        let exec_cfg = match cfg.mode {
            CheckMode::Trace => ExecConfig::traced(path),
            CheckMode::ChecksumOnly => ExecConfig::new(path),
        };
        let expected = oracle::interpret(&program, &exec_cfg)?.render_output();
        let outcome = match run_binary(&bin, path, cfg.mode == CheckMode::Trace) {
            Err(e) => CheckOutcome::RuntimeFailure { message: e.to_string() },
            Ok((stdout, _)) => compare_output(&expected, &stdout, cfg.mode),
        };
        cases.push(case(path, outcome));
    }
    Ok(cases)
}

/// Compiles the program in `manifest_dir` (and regenerated variants for the
/// other seeds) and compares each run against the oracle.
pub fn cmd_check(manifest_dir: &Path, cfg: &CheckConfig) -> Result<Vec<CheckCase>, BenchError> {
    let manifest = Manifest::load(manifest_dir)?;
    let scratch = tempfile::tempdir().map_err(|source| BenchError::Io { path: PathBuf::from("<tempdir>"), source })?;
    let registry = BackendRegistry::builtin();
    let seeds = if cfg.seeds.is_empty() { vec![manifest.plan.seed] } else { cfg.seeds.clone() };
    let mut cases = Vec::new();
    for seed in seeds {
        if seed == manifest.plan.seed {
            let dir = manifest_dir
                .canonicalize()
                .map_err(|source| BenchError::Io { path: manifest_dir.to_path_buf(), source })?;
            cases.extend(check_dir(&manifest, &dir, seed, cfg, scratch.path())?);
        } else {
            let dir = scratch.path().join(format!("seed-{seed}"));
            let req = manifest.request().with_seed(seed);
            match cmd_gen(&req, &dir, &registry)? {
                Some(m) => cases.extend(check_dir(&m, &dir, seed, cfg, scratch.path())?),
                None => return Err(BenchError::Report("manifest describes an empty program".into())),
            }
        }
    }
    Ok(cases)
}
