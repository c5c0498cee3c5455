use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::{error, info};

use lsysbench::astgen::ContainerKind;
use lsysbench::bench::{
    self, CheckConfig, CheckMode, CompilerCmd, GenRequest, MeasureConfig, PgoConfig, MEASUREMENT_COLUMNS, SWEEP_COLUMNS,
};
use lsysbench::codegen::{BackendId, BackendRegistry};
use lsysbench::grammar::DEFAULT_ITEM_CAP;

/// Generates benchmark programs from L-system grammars and measures them.
#[derive(Parser)]
#[command(name = "lsysbench", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct Global {
    /// Operand planning seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Rewrite iterations applied to the axiom.
    #[arg(long, global = true, default_value_t = 4)]
    generations: usize,
    /// array, sortedlist or scalar.
    #[arg(long, global = true, default_value_t = ContainerKind::Array)]
    container: ContainerKind,
    #[arg(long, global = true, default_value = "c")]
    backend: BackendId,
    /// One function per source file.
    #[arg(long, global = true)]
    split_files: bool,
    /// Iterations of every emitted loop.
    #[arg(long, global = true, default_value_t = 2)]
    trip_count: u32,
    /// Operand values are drawn from 0..value-range.
    #[arg(long, global = true, default_value_t = 1000)]
    value_range: u64,
    /// Emit programs that trace without `--debug`.
    #[arg(long, global = true)]
    debug_trace: bool,
    /// Largest derivation allowed, in items.
    #[arg(long, global = true, default_value_t = DEFAULT_ITEM_CAP)]
    item_cap: usize,
    /// Output directory: generated sources for `gen`, reports otherwise.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Derive, lower and emit a program plus manifest.json.
    Gen {
        /// Grammar file.
        spec: PathBuf,
    },
    /// Compile a generated program and compare its runs with the oracle.
    Check {
        /// Directory holding manifest.json.
        manifest_dir: PathBuf,
        #[command(flatten)]
        compiler: CompilerArgs,
        /// Flags substituted for {flags}.
        #[arg(long, default_value = "")]
        flags: String,
        /// PATH values to run.
        #[arg(long, value_delimiter = ',', default_values_t = [1u64])]
        paths: Vec<u64>,
        /// Seeds to check; other than the manifest's are regenerated.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        /// Compare only CHECKSUM lines.
        #[arg(long)]
        checksum_only: bool,
    },
    /// Time compilation and execution under several flag sets.
    Measure {
        manifest_dir: PathBuf,
        #[command(flatten)]
        compiler: CompilerArgs,
        /// One flag set per occurrence.
        #[arg(long = "flags", required = true, allow_hyphen_values = true)]
        flag_sets: Vec<String>,
        #[arg(long, default_value_t = 1)]
        path: u64,
        #[arg(long, default_value_t = 10)]
        repetitions: usize,
        #[arg(long, default_value_t = 3)]
        warmups: usize,
        /// Command printing the text section size; `{bin}` is the binary.
        #[arg(long)]
        size_cmd: Option<String>,
        /// Skip the oracle checksum comparison.
        #[arg(long)]
        no_oracle: bool,
    },
    /// Compare profile-trained and baseline binaries as PATH diverges
    /// from the training input.
    SweepPgo {
        manifest_dir: PathBuf,
        #[command(flatten)]
        compiler: CompilerArgs,
        #[arg(long, default_value = "-O2", allow_hyphen_values = true)]
        base_flags: String,
        #[arg(long, allow_hyphen_values = true)]
        gen_flags: String,
        #[arg(long, allow_hyphen_values = true)]
        use_flags: String,
        /// Run after training; `{dir}` is the profile directory.
        #[arg(long)]
        merge_cmd: Option<String>,
        #[arg(long, default_value_t = 1)]
        train_path: u64,
        /// Values of i for PATH = 2^i - 1.
        #[arg(long, value_delimiter = ',', required = true)]
        bits: Vec<u32>,
        #[arg(long, default_value_t = 10)]
        repetitions: usize,
        #[arg(long, default_value_t = 3)]
        warmups: usize,
    },
}

#[derive(Args)]
struct CompilerArgs {
    /// Compiler command with {in} and {out} placeholders, e.g.
    /// "cc -std=c99 {flags} {in} -o {out}".
    #[arg(long = "compiler")]
    compiler: String,
}

impl CompilerArgs {
    fn cmd(&self) -> Result<CompilerCmd> {
        Ok(CompilerCmd::new(self.compiler.clone())?)
    }
}

fn report_dir(out: &Option<PathBuf>) -> Result<PathBuf> {
    let dir = out.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn gen(g: &Global, spec: &Path) -> Result<ExitCode> {
    let mut req = GenRequest::from_spec_file(spec, g.generations)?;
    req.item_cap = g.item_cap;
    req.plan.seed = g.seed;
    req.plan.container = g.container;
    req.plan.trip_count = g.trip_count;
    req.plan.value_range = g.value_range;
    req.plan.validate()?;
    req.backend = g.backend.clone();
    req.split_files = g.split_files;
    req.debug_trace = g.debug_trace;
    let out = g.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    match bench::cmd_gen(&req, &out, &BackendRegistry::builtin())? {
        Some(m) => {
            info!("wrote {} files for {} functions to {}", m.files.len(), m.function_count, out.display());
            println!("{}", out.join(bench::MANIFEST_FILE).display());
        }
        None => eprintln!("warning: empty program, no files written"),
    }
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Result<ExitCode> {
    let g = &cli.global;
    match &cli.command {
        Cmd::Gen { spec } => gen(g, spec),
        Cmd::Check { manifest_dir, compiler, flags, paths, seeds, checksum_only } => {
            let cfg = CheckConfig {
                compiler: compiler.cmd()?,
                flags: flags.clone(),
                paths: paths.clone(),
                seeds: seeds.clone(),
                mode: if *checksum_only { CheckMode::ChecksumOnly } else { CheckMode::Trace },
            };
            let cases = bench::cmd_check(manifest_dir, &cfg)?;
            let mut failed = 0;
            for c in &cases {
                println!("seed={} path={} {}", c.seed, c.path, c.outcome);
                failed += usize::from(!c.outcome.passed());
            }
            println!("{} of {} cases passed", cases.len() - failed, cases.len());
            Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Cmd::Measure { manifest_dir, compiler, flag_sets, path, repetitions, warmups, size_cmd, no_oracle } => {
            let mut cfg = MeasureConfig::new(compiler.cmd()?, flag_sets.clone());
            cfg.path = *path;
            cfg.repetitions = *repetitions;
            cfg.warmups = *warmups;
            cfg.size_cmd = size_cmd.clone();
            cfg.oracle_check = !no_oracle;
            if cfg.repetitions == 0 {
                bail!("--repetitions must be at least 1");
            }
            let rows = bench::cmd_measure(manifest_dir, &cfg)?;
            let dir = report_dir(&g.out)?;
            bench::write_csv(&dir.join("measurements.csv"), &rows, &MEASUREMENT_COLUMNS)?;
            bench::write_jsonl(&dir.join("measurements.jsonl"), &rows)?;
            let failed = rows.iter().filter(|r| r.status != "ok").count();
            for r in rows.iter().filter(|r| r.status != "ok") {
                error!("flags `{}`: {}", r.flags, r.error);
            }
            println!("{} rows written to {}", rows.len(), dir.join("measurements.csv").display());
            Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Cmd::SweepPgo {
            manifest_dir,
            compiler,
            base_flags,
            gen_flags,
            use_flags,
            merge_cmd,
            train_path,
            bits,
            repetitions,
            warmups,
        } => {
            let cfg = PgoConfig {
                compiler: compiler.cmd()?,
                base_flags: base_flags.clone(),
                gen_flags: gen_flags.clone(),
                use_flags: use_flags.clone(),
                merge_cmd: merge_cmd.clone(),
                train_path: *train_path,
                bit_counts: bits.clone(),
                repetitions: *repetitions,
                warmups: *warmups,
            };
            let rows = bench::cmd_sweep_pgo(manifest_dir, &cfg)?;
            let dir = report_dir(&g.out)?;
            bench::write_csv(&dir.join("pgo_sweep.csv"), &rows, &SWEEP_COLUMNS)?;
            bench::write_jsonl(&dir.join("pgo_sweep.jsonl"), &rows)?;
            println!("{} rows written to {}", rows.len(), dir.join("pgo_sweep.csv").display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
