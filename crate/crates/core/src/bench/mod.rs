//! Generation pipeline, compiler driving and reports.
//!
//! [`cmd_gen`] runs the whole pipeline and writes sources plus a
//! `manifest.json`. The manifest embeds the spec text, so [`cmd_check`],
//! [`cmd_measure`] and [`cmd_sweep_pgo`] can regenerate the program (for
//! other seeds, or to recompute oracle results) without the original file.

mod check;
mod measure;

pub use check::{cmd_check, CheckCase, CheckConfig, CheckMode, CheckOutcome};
pub use measure::{
    cmd_measure, cmd_sweep_pgo, path_of, write_csv, write_jsonl, MeasureConfig, Measurement, PgoConfig, SweepRow,
    MEASUREMENT_COLUMNS, SWEEP_COLUMNS,
};

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::astgen::{self, AstError, OperandPlan, Program};
use crate::codegen::{self, BackendId, BackendRegistry, CodegenError, EmitConfig};
use crate::grammar::{self, GrammarError, ItemSeq};
use crate::oracle::{self, ExecConfig, OpCounts, OracleError};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Grammar(#[from] GrammarError),
    #[error(transparent)]
    Ast(#[from] AstError),
    #[error(transparent)]
    Codegen(#[from] CodegenError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error("invalid command template `{template}`: {message}")]
    Command { template: String, message: String },
    #[error("{0}")]
    Report(String),
    #[error("{0}")]
    Tool(String),
}

fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> BenchError {
    let path = path.into();
    move |source| BenchError::Io { path, source }
}

/// Oracle results recorded in the manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleSummary {
    pub path: u64,
    pub checksum: u64,
    pub op_counts: OpCounts,
    pub max_live: u64,
    pub live_at_exit: u64,
}

/// Everything needed to rebuild a generated program.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub spec_name: String,
    pub spec_source: String,
    pub generations: usize,
    pub item_cap: usize,
    pub plan: OperandPlan,
    pub backend: String,
    pub split_files: bool,
    pub debug_trace: bool,
    /// Paths relative to the manifest directory, sorted.
    pub files: Vec<String>,
    pub source_extension: String,
    pub entry_function: String,
    pub function_count: usize,
    pub oracle: OracleSummary,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Manifest, BenchError> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        serde_json::from_str(&text).map_err(|e| BenchError::Manifest { path, message: e.to_string() })
    }

    pub fn request(&self) -> GenRequest {
        GenRequest {
            spec_name: self.spec_name.clone(),
            spec_source: self.spec_source.clone(),
            generations: self.generations,
            item_cap: self.item_cap,
            plan: self.plan,
            backend: BackendId::new(self.backend.clone()),
            split_files: self.split_files,
            debug_trace: self.debug_trace,
        }
    }

    /// Rebuilds the planned program, optionally under another seed.
    pub fn program(&self, seed: Option<u64>) -> Result<Program, BenchError> {
        let mut plan = self.plan;
        if let Some(seed) = seed {
            plan.seed = seed;
        }
        build_program(&self.spec_source, self.generations, self.item_cap, plan)
    }

    /// Source files handed to the compiler, as absolute paths under `dir`.
    pub fn compile_inputs(&self, dir: &Path) -> Vec<PathBuf> {
        let ext = format!(".{}", self.source_extension);
        self.files.iter().filter(|f| f.ends_with(&ext)).map(|f| dir.join(f)).collect()
    }
}

#[derive(Debug, Clone)]
pub struct GenRequest {
    pub spec_name: String,
    pub spec_source: String,
    pub generations: usize,
    pub item_cap: usize,
    pub plan: OperandPlan,
    pub backend: BackendId,
    pub split_files: bool,
    pub debug_trace: bool,
}

impl GenRequest {
    pub fn new(spec_name: impl Into<String>, spec_source: impl Into<String>, generations: usize) -> Self {
        GenRequest {
            spec_name: spec_name.into(),
            spec_source: spec_source.into(),
            generations,
            item_cap: grammar::DEFAULT_ITEM_CAP,
            plan: OperandPlan::default(),
            backend: BackendId::c(),
            split_files: false,
            debug_trace: false,
        }
    }

    pub fn from_spec_file(path: &Path, generations: usize) -> Result<Self, BenchError> {
        let source = fs::read_to_string(path).map_err(io_err(path))?;
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        Ok(GenRequest::new(name, source, generations))
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        let mut r = self.clone();
        r.plan.seed = seed;
        r
    }
}

pub fn derive_spec(spec_source: &str, generations: usize, item_cap: usize) -> Result<ItemSeq, BenchError> {
    let spec = grammar::parse_spec(spec_source)?;
    Ok(grammar::derive_capped(&spec, generations, item_cap)?)
}

pub fn build_program(
    spec_source: &str,
    generations: usize,
    item_cap: usize,
    plan: OperandPlan,
) -> Result<Program, BenchError> {
    let derived = derive_spec(spec_source, generations, item_cap)?;
    Ok(astgen::lower(&derived, plan)?)
}

/// Runs the pipeline and writes sources plus manifest into `out_dir`.
/// Returns `None`, writing nothing, when the program is empty.
pub fn cmd_gen(req: &GenRequest, out_dir: &Path, registry: &BackendRegistry) -> Result<Option<Manifest>, BenchError> {
    let program = build_program(&req.spec_source, req.generations, req.item_cap, req.plan)?;
    if program.is_empty() {
        warn!("{} at generation {} derives an empty program; nothing emitted", req.spec_name, req.generations);
        return Ok(None);
    }
    let templates = registry.get(&req.backend).ok_or_else(|| CodegenError::UnknownBackend(req.backend.to_string()))?;
    let mut cfg = EmitConfig::new(req.backend.clone(), req.plan.container, out_dir);
    cfg.split_files = req.split_files;
    cfg.debug_trace = req.debug_trace;
    let files = registry.emit(&program, &cfg)?;

    let path = 1;
    let run = oracle::interpret(&program, &ExecConfig::new(path))?;
    let manifest = Manifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        spec_name: req.spec_name.clone(),
        spec_source: req.spec_source.clone(),
        generations: req.generations,
        item_cap: req.item_cap,
        plan: req.plan,
        backend: req.backend.to_string(),
        split_files: req.split_files,
        debug_trace: req.debug_trace,
        files: files.iter().map(|f| f.relative_path.clone()).collect(),
        source_extension: templates.source_extension.clone(),
        entry_function: codegen::template::render(
            "function_name",
            &templates.function_name,
            &[("id", &program.entry.to_string())],
        )?,
        function_count: program.functions.len(),
        oracle: OracleSummary {
            path,
            checksum: run.stats.checksum,
            op_counts: run.stats.op_counts,
            max_live: run.stats.max_live,
            live_at_exit: run.stats.live_at_exit,
        },
    };

    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    codegen::write_sources(out_dir, &files)?;
    let manifest_path = out_dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(&manifest_path, text).map_err(io_err(&manifest_path))?;
    Ok(Some(manifest))
}

/// Compiler invocation template.
///
/// The template is split like a shell command line. A word that is exactly
/// `{in}` expands to one argument per source file and a word that is exactly
/// `{flags}` to the split flag string; elsewhere `{in}`, `{out}` and `{flags}`
/// are substituted textually.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompilerCmd {
    template: String,
}

impl CompilerCmd {
    pub fn new(template: impl Into<String>) -> Result<Self, BenchError> {
        let template = template.into();
        let words = shell_words::split(&template)
            .map_err(|e| BenchError::Command { template: template.clone(), message: e.to_string() })?;
        if words.is_empty() {
            return Err(BenchError::Command { template, message: "empty command".into() });
        }
        if !template.contains("{out}") {
            return Err(BenchError::Command { template, message: "missing {out} placeholder".into() });
        }
        Ok(CompilerCmd { template })
    }

    pub fn as_str(&self) -> &str {
        &self.template
    }

    pub fn argv(&self, inputs: &[PathBuf], out: &Path, flags: &str) -> Result<Vec<String>, BenchError> {
        let bad = |e: shell_words::ParseError| BenchError::Command {
            template: self.template.clone(),
            message: e.to_string(),
        };
        let flag_words = shell_words::split(flags).map_err(bad)?;
        let ins: Vec<String> = inputs.iter().map(|p| p.display().to_string()).collect();
        let out = out.display().to_string();
        let mut argv = Vec::new();
        for word in shell_words::split(&self.template).map_err(bad)? {
            match word.as_str() {
                "{in}" => argv.extend(ins.iter().cloned()),
                "{flags}" => argv.extend(flag_words.iter().cloned()),
                _ => argv.push(word.replace("{in}", &ins.join(" ")).replace("{out}", &out).replace("{flags}", flags)),
            }
        }
        if !self.template.contains("{flags}") {
            argv.extend(flag_words);
        }
        Ok(argv)
    }
}

pub(crate) fn run_timed(argv: &[String], cwd: Option<&Path>) -> Result<(Output, Duration), BenchError> {
    let mut cmd = Command::new(&argv[0]);
    cmd.args(&argv[1..]);
    if let Some(dir) = cwd {
        cmd.current_dir(dir);
    }
    let start = Instant::now();
    let out = cmd.output().map_err(|e| BenchError::Tool(format!("cannot run `{}`: {e}", argv[0])))?;
    Ok((out, start.elapsed()))
}

pub(crate) fn describe_failure(what: &str, out: &Output) -> String {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let code = out.status.code().map_or_else(|| "signal".to_string(), |c| c.to_string());
    format!("{what} exited with {code}: {}", stderr.trim())
}

/// Compiles `inputs` into `out`.
pub fn compile(
    cmd: &CompilerCmd,
    inputs: &[PathBuf],
    out: &Path,
    flags: &str,
    cwd: Option<&Path>,
) -> Result<Duration, BenchError> {
    let argv = cmd.argv(inputs, out, flags)?;
    let (output, elapsed) = run_timed(&argv, cwd)?;
    if !output.status.success() {
        return Err(BenchError::Tool(describe_failure("compiler", &output)));
    }
    Ok(elapsed)
}

/// Runs a generated binary; returns stdout.
pub fn run_binary(bin: &Path, path: u64, debug: bool) -> Result<(String, Duration), BenchError> {
    let mut argv = vec![bin.display().to_string(), path.to_string()];
    if debug {
        argv.push("--debug".into());
    }
    let (output, elapsed) = run_timed(&argv, None)?;
    if !output.status.success() {
        return Err(BenchError::Tool(describe_failure("program", &output)));
    }
    Ok((String::from_utf8_lossy(&output.stdout).into_owned(), elapsed))
}

/// Value of the final `CHECKSUM` line of a program's output.
pub fn parse_checksum(stdout: &str) -> Option<u64> {
    stdout.lines().rev().find_map(|l| l.strip_prefix("CHECKSUM ")).and_then(|v| v.trim().parse().ok())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compiler_argv_expansion() {
        let cmd = CompilerCmd::new("cc -std=c99 {flags} {in} -o {out}").unwrap();
        let argv = cmd.argv(&[PathBuf::from("a.c"), PathBuf::from("b c.c")], Path::new("bin"), "-O2 -g").unwrap();
        assert_eq!(argv, ["cc", "-std=c99", "-O2", "-g", "a.c", "b c.c", "-o", "bin"]);
    }

    #[test]
    fn flags_are_appended_without_placeholder() {
        let cmd = CompilerCmd::new("cc {in} -o{out}").unwrap();
        let argv = cmd.argv(&[PathBuf::from("m.c")], Path::new("x"), "-O1").unwrap();
        assert_eq!(argv, ["cc", "m.c", "-ox", "-O1"]);
    }

    #[test]
    fn rejects_bad_templates() {
        assert!(CompilerCmd::new("").is_err());
        assert!(CompilerCmd::new("cc {in}").is_err());
        assert!(CompilerCmd::new("cc 'unterminated {out}").is_err());
    }

    #[test]
    fn checksum_is_read_from_last_line() {
        assert_eq!(parse_checksum("OP kind=new var=1 val=0 res=1\nCHECKSUM 42\n"), Some(42));
        assert_eq!(parse_checksum("garbage"), None);
    }

    #[test]
    fn empty_program_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        let req = GenRequest::new("empty", "A = B\n", 0);
        let got = cmd_gen(&req, &out, &BackendRegistry::builtin()).unwrap();
        assert!(got.is_none());
        assert!(!out.exists());
    }
}
