use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Serialize;

use super::{compile, parse_checksum, run_binary, run_timed, BenchError, CompilerCmd, Manifest};
use crate::oracle::{self, ExecConfig};

/// CSV header of [`Measurement`] rows, in column order.
pub const MEASUREMENT_COLUMNS: [&str; 17] = [
    "specName",
    "generation",
    "backend",
    "compilerCmd",
    "flags",
    "path",
    "seed",
    "containerKind",
    "compileTimeMs",
    "runTimeMs",
    "binaryBytes",
    "textBytes",
    "checksum",
    "oracleChecksum",
    "checksumMatches",
    "status",
    "error",
];

pub const SWEEP_COLUMNS: [&str; 5] = ["i", "path", "t_ms", "ti_ms", "ratio"];

#[derive(Debug, Clone)]
pub struct MeasureConfig {
    pub compiler: CompilerCmd,
    pub flag_sets: Vec<String>,
    pub path: u64,
    pub repetitions: usize,
    pub warmups: usize,
    /// Command printing the text-segment size; `{bin}` is the binary.
    pub size_cmd: Option<String>,
    /// Compare each run's checksum with the oracle.
    pub oracle_check: bool,
}

impl MeasureConfig {
    pub fn new(compiler: CompilerCmd, flag_sets: Vec<String>) -> Self {
        MeasureConfig { compiler, flag_sets, path: 1, repetitions: 10, warmups: 3, size_cmd: None, oracle_check: true }
    }
}

/// One row of a measurement report. Metric fields are empty on failure.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Measurement {
    pub spec_name: String,
    pub generation: usize,
    pub backend: String,
    pub compiler_cmd: String,
    pub flags: String,
    pub path: u64,
    pub seed: u64,
    pub container_kind: String,
    pub compile_time_ms: Option<f64>,
    pub run_time_ms: Option<f64>,
    pub binary_bytes: Option<u64>,
    pub text_bytes: Option<u64>,
    pub checksum: Option<u64>,
    pub oracle_checksum: Option<u64>,
    pub checksum_matches: Option<bool>,
    /// `ok` or `failed`.
    pub status: String,
    pub error: String,
}

fn millis(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

fn median(mut xs: Vec<f64>) -> f64 {
    assert!(!xs.is_empty());
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

/// Median wall time of `reps` runs after `warmups` discarded ones, and the
/// checksum of the last run.
fn time_runs(bin: &Path, path: u64, reps: usize, warmups: usize) -> Result<(f64, Option<u64>), BenchError> {
    let mut times = Vec::with_capacity(reps);
    let mut checksum = None;
    for i in 0..warmups + reps.max(1) {
        let (stdout, elapsed) = run_binary(bin, path, false)?;
        checksum = parse_checksum(&stdout);
        if i >= warmups {
            times.push(millis(elapsed));
        }
    }
    Ok((median(times), checksum))
}

/// Extracts the text size from `size`-style output: the value under a
/// `text` header column, or else the first integer printed.
pub fn parse_text_size(output: &str) -> Option<u64> {
    let lines: Vec<&str> = output.lines().filter(|l| !l.trim().is_empty()).collect();
    if let Some(col) = lines.first().and_then(|h| h.split_whitespace().position(|w| w == "text")) {
        return lines.get(1)?.split_whitespace().nth(col)?.parse().ok();
    }
    output.split_whitespace().find_map(|w| w.parse().ok())
}

fn text_size(size_cmd: &str, bin: &Path) -> Result<u64, BenchError> {
    let words = shell_words::split(size_cmd)
        .map_err(|e| BenchError::Command { template: size_cmd.to_string(), message: e.to_string() })?;
    if words.is_empty() {
        return Err(BenchError::Command { template: size_cmd.to_string(), message: "empty command".into() });
    }
    let bin = bin.display().to_string();
    let argv: Vec<String> = words.iter().map(|w| w.replace("{bin}", &bin)).collect();
    let (out, _) = run_timed(&argv, None)?;
    if !out.status.success() {
        return Err(BenchError::Tool(super::describe_failure("size command", &out)));
    }
    parse_text_size(&String::from_utf8_lossy(&out.stdout))
        .ok_or_else(|| BenchError::Tool(format!("no size in output of `{size_cmd}`")))
}

fn scratch_dir() -> Result<tempfile::TempDir, BenchError> {
    tempfile::tempdir().map_err(|source| BenchError::Io { path: PathBuf::from("<tempdir>"), source })
}

fn absolute(dir: &Path) -> Result<PathBuf, BenchError> {
    dir.canonicalize().map_err(|source| BenchError::Io { path: dir.to_path_buf(), source })
}

/// One measurement row per flag set. Toolchain failures mark the row as
/// failed instead of aborting the batch.
pub fn cmd_measure(manifest_dir: &Path, cfg: &MeasureConfig) -> Result<Vec<Measurement>, BenchError> {
    let manifest = Manifest::load(manifest_dir)?;
    let dir = absolute(manifest_dir)?;
    let oracle_checksum = if cfg.oracle_check {
        let program = manifest.program(None)?;
        Some(oracle::interpret(&program, &ExecConfig::new(cfg.path))?.stats.checksum)
    } else {
        None
    };
    let inputs = manifest.compile_inputs(&dir);
    let scratch = scratch_dir()?;
    let mut rows = Vec::with_capacity(cfg.flag_sets.len());
    for (n, flags) in cfg.flag_sets.iter().enumerate() {
        let mut row = Measurement {
            spec_name: manifest.spec_name.clone(),
            generation: manifest.generations,
            backend: manifest.backend.clone(),
            compiler_cmd: cfg.compiler.as_str().to_string(),
            flags: flags.clone(),
            path: cfg.path,
            seed: manifest.plan.seed,
            container_kind: manifest.plan.container.to_string(),
            compile_time_ms: None,
            run_time_ms: None,
            binary_bytes: None,
            text_bytes: None,
            checksum: None,
            oracle_checksum,
            checksum_matches: None,
            status: "ok".into(),
            error: String::new(),
        };
        let bin = scratch.path().join(format!("measure-{n}"));
        let result = (|| -> Result<(), BenchError> {
            let mut compile_times = Vec::with_capacity(cfg.repetitions.max(1));
            for _ in 0..cfg.repetitions.max(1) {
                compile_times.push(millis(compile(&cfg.compiler, &inputs, &bin, flags, Some(&dir))?));
            }
            row.compile_time_ms = Some(median(compile_times));
            row.binary_bytes =
                Some(fs::metadata(&bin).map_err(|source| BenchError::Io { path: bin.clone(), source })?.len());
            if let Some(size_cmd) = &cfg.size_cmd {
                row.text_bytes = Some(text_size(size_cmd, &bin)?);
            }
            let (t, checksum) = time_runs(&bin, cfg.path, cfg.repetitions, cfg.warmups)?;
            row.run_time_ms = Some(t);
            row.checksum = checksum;
            if let Some(expected) = oracle_checksum {
                let ok = checksum == Some(expected);
                row.checksum_matches = Some(ok);
                if !ok {
                    return Err(BenchError::Report(format!(
                        "checksum {checksum:?} differs from oracle checksum {expected}"
                    )));
                }
            }
            Ok(())
        })();
        if let Err(e) = result {
            row.status = "failed".into();
            row.error = e.to_string();
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<(), BenchError> {
    let io = |source| BenchError::Io { path: path.to_path_buf(), source };
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path).map_err(|e| io(e.into()))?;
    w.write_record(header).map_err(|e| io(e.into()))?;
    for row in rows {
        w.serialize(row).map_err(|e| io(e.into()))?;
    }
    w.flush().map_err(io)
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), BenchError> {
    let io = |source| BenchError::Io { path: path.to_path_buf(), source };
    let mut f = std::io::BufWriter::new(fs::File::create(path).map_err(io)?);
    for row in rows {
        serde_json::to_writer(&mut f, row).map_err(|e| io(e.into()))?;
        f.write_all(b"\n").map_err(io)?;
    }
    f.flush().map_err(io)
}

/// PATH value whose low `i` bits are set.
pub fn path_of(i: u32) -> u64 {
    assert!((1..=64).contains(&i), "bit count {i} out of range");
    if i == 64 {
        u64::MAX
    } else {
        (1u64 << i) - 1
    }
}

#[derive(Debug, Clone)]
pub struct PgoConfig {
    pub compiler: CompilerCmd,
    /// Flags of both the baseline and the profiled builds, e.g. `-O2`.
    pub base_flags: String,
    /// Added to the instrumented build, e.g. `-fprofile-generate`.
    pub gen_flags: String,
    /// Added to the final build, e.g. `-fprofile-use`.
    pub use_flags: String,
    /// Run between training and the final build, e.g. `llvm-profdata merge`.
    /// `{dir}` is the directory the profile was written to.
    pub merge_cmd: Option<String>,
    pub train_path: u64,
    pub bit_counts: Vec<u32>,
    pub repetitions: usize,
    pub warmups: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub i: u32,
    pub path: u64,
    /// Baseline binary at `path`.
    pub t_ms: f64,
    /// Profile-trained binary at `path`.
    pub ti_ms: f64,
    pub ratio: f64,
}

/// Trains a profile at `train_path`, then times the baseline and trained
/// binaries at each `PATH = 2^i - 1`.
pub fn cmd_sweep_pgo(manifest_dir: &Path, cfg: &PgoConfig) -> Result<Vec<SweepRow>, BenchError> {
    for &i in &cfg.bit_counts {
        if !(1..=63).contains(&i) {
            return Err(BenchError::Report(format!("bit count {i} outside 1..=63")));
        }
    }
    let manifest = Manifest::load(manifest_dir)?;
    let dir = absolute(manifest_dir)?;
    let inputs = manifest.compile_inputs(&dir);
    let scratch = scratch_dir()?;
    let work = scratch.path();
    let join = |a: &str, b: &str| format!("{a} {b}").trim().to_string();

    let base = work.join("baseline");
    compile(&cfg.compiler, &inputs, &base, &cfg.base_flags, Some(work))?;

    // The instrumented and final builds share an output name so that
    // compilers keying profiles on it find the training data.
    let pgo = work.join("pgo");
    compile(&cfg.compiler, &inputs, &pgo, &join(&cfg.base_flags, &cfg.gen_flags), Some(work))
        .map_err(|e| BenchError::Tool(format!("profile generation build failed: {e}")))?;
    run_timed(&[pgo.display().to_string(), cfg.train_path.to_string()], Some(work)).and_then(|(out, _)| {
        if out.status.success() {
            Ok(())
        } else {
            Err(BenchError::Tool(super::describe_failure("training run", &out)))
        }
    })?;
    if let Some(merge) = &cfg.merge_cmd {
        let words = shell_words::split(merge)
            .map_err(|e| BenchError::Command { template: merge.clone(), message: e.to_string() })?;
        let work_str = work.display().to_string();
        let argv: Vec<String> = words.iter().map(|w| w.replace("{dir}", &work_str)).collect();
        if argv.is_empty() {
            return Err(BenchError::Command { template: merge.clone(), message: "empty command".into() });
        }
        let (out, _) = run_timed(&argv, Some(work))?;
        if !out.status.success() {
            return Err(BenchError::Tool(super::describe_failure("profile merge", &out)));
        }
    }
    compile(&cfg.compiler, &inputs, &pgo, &join(&cfg.base_flags, &cfg.use_flags), Some(work))
        .map_err(|e| BenchError::Tool(format!("profile use build failed: {e}")))?;

    let mut rows = Vec::with_capacity(cfg.bit_counts.len());
    for &i in &cfg.bit_counts {
        let path = path_of(i);
        let (t_ms, _) = time_runs(&base, path, cfg.repetitions, cfg.warmups)?;
        let (ti_ms, _) = time_runs(&pgo, path, cfg.repetitions, cfg.warmups)?;
        rows.push(SweepRow { i, path, t_ms, ti_ms, ratio: t_ms / ti_ms });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_odd_and_even() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 3.0, 2.0]), 2.5);
    }

    #[test]
    fn sweep_paths() {
        assert_eq!(path_of(1), 1);
        assert_eq!(path_of(2), 3);
        assert_eq!(path_of(32), 0xFFFF_FFFF);
        assert_eq!(path_of(63), u64::MAX >> 1);
    }

    #[test]
    fn size_output_parsing() {
        let berkeley = "   text\t   data\t    bss\t    dec\t    hex\tfilename\n   1873\t    600\t      8\t   2481\t    9b1\ta.out\n";
        assert_eq!(parse_text_size(berkeley), Some(1873));
        assert_eq!(parse_text_size("4096\n"), Some(4096));
        assert_eq!(parse_text_size("no numbers"), None);
    }

    #[test]
    fn measurement_fields_follow_column_order() {
        let row = Measurement {
            spec_name: "s".into(),
            generation: 1,
            backend: "c".into(),
            compiler_cmd: "cc".into(),
            flags: "-O2".into(),
            path: 1,
            seed: 0,
            container_kind: "array".into(),
            compile_time_ms: Some(1.0),
            run_time_ms: None,
            binary_bytes: Some(10),
            text_bytes: None,
            checksum: Some(5),
            oracle_checksum: Some(5),
            checksum_matches: Some(true),
            status: "ok".into(),
            error: String::new(),
        };
        let value = serde_json::to_value(&row).unwrap();
        let keys: Vec<&String> = value.as_object().unwrap().keys().collect();
        let mut sorted_cols = MEASUREMENT_COLUMNS.to_vec();
        sorted_cols.sort_unstable();
        assert_eq!(keys, sorted_cols);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        write_csv(&path, &[row], &MEASUREMENT_COLUMNS).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), MEASUREMENT_COLUMNS.join(","));
        assert_eq!(lines.next().unwrap(), "s,1,c,cc,-O2,1,0,array,1.0,,10,,5,5,true,ok,");
    }
}
