//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Command;

use lsysbench::astgen::{self, ContainerKind, OperandPlan, Program, Stmt};
use lsysbench::codegen::{self, BackendId, EmitConfig, SourceFile};
use lsysbench::grammar::{self, ItemSeq};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const BRANCHES_SPEC: &str = include_str!("../../../../specs/branches.lsys");
pub const STRESS_SPEC: &str = include_str!("../../../../specs/container_stress.lsys");

pub const C_STRICT: &str = "cc -std=c99 -Wall -Wextra -pedantic -Werror {flags} {in} -o {out}";

pub fn spec_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../specs").join(name)
}

pub fn have_tool(name: &str) -> bool {
    Command::new(name).arg("--version").output().map(|o| o.status.success()).unwrap_or(false)
}

pub fn have_go() -> bool {
    Command::new("go").arg("version").output().map(|o| o.status.success()).unwrap_or(false)
}

pub fn plan(seed: u64, container: ContainerKind) -> OperandPlan {
    OperandPlan { seed, container, ..OperandPlan::default() }
}

pub fn program(spec: &str, generations: usize, plan: OperandPlan) -> Program {
    let spec = grammar::parse_spec(spec).unwrap();
    let derived = grammar::derive(&spec, generations).unwrap();
    astgen::lower(&derived, plan).unwrap()
}

pub fn emit_into(dir: &Path, p: &Program, backend: &str, split: bool) -> Vec<SourceFile> {
    let container = p.plan.unwrap().container;
    let mut cfg = EmitConfig::new(BackendId::new(backend), container, dir);
    cfg.split_files = split;
    let files = codegen::emit(p, &cfg).unwrap();
    codegen::write_sources(dir, &files).unwrap();
    files
}

/// Compiles the C files in `dir`, panicking with compiler output on failure.
pub fn compile_c(dir: &Path, flags: &str) -> PathBuf {
    let bin = dir.join(format!("prog{}", flags.replace(' ', "")));
    let mut inputs: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "c"))
        .collect();
    inputs.sort();
    let out = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Wextra", "-pedantic", "-Werror"])
        .args(flags.split_whitespace())
        .args(&inputs)
        .arg("-o")
        .arg(&bin)
        .output()
        .unwrap();
    assert!(out.status.success(), "cc {flags} failed:\n{}", String::from_utf8_lossy(&out.stderr));
    bin
}

pub fn run(bin: &Path, path: u64, debug: bool) -> String {
    let mut cmd = Command::new(bin);
    cmd.arg(path.to_string());
    if debug {
        cmd.arg("--debug");
    }
    let out = cmd.output().unwrap();
    assert!(
        out.status.success(),
        "{} exited with {:?}: {}",
        bin.display(),
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Random grammar over the full alphabet with productions A, B and C.
/// Constructs nest at most `depth` deep.
pub fn random_spec(rng: &mut impl Rng, depth: u32, with_call: bool) -> String {
    fn block(rng: &mut impl Rng, depth: u32, len: std::ops::Range<usize>) -> String {
        let n = rng.gen_range(len);
        let items: Vec<String> = (0..n).map(|_| item(rng, depth)).collect();
        items.join(" ")
    }
    fn item(rng: &mut impl Rng, depth: u32) -> String {
        let leaf = ["new", "insert", "remove", "contains", "A", "B", "C"];
        if depth == 0 || rng.gen_bool(0.6) {
            return leaf[rng.gen_range(0..leaf.len())].to_string();
        }
        let d = depth - 1;
        match rng.gen_range(0..5) {
            0 => format!("IF({}, {})", block(rng, d, 0..3), block(rng, d, 0..4)),
            1 => format!("IF({}, {}, {})", block(rng, d, 0..3), block(rng, d, 0..4), block(rng, d, 0..4)),
            2 => format!("LOOP({})", block(rng, d, 0..4)),
            3 => format!("LOOP({}, {})", block(rng, d, 0..3), block(rng, d, 0..4)),
            _ => format!("CALL({})", block(rng, d, 1..4)),
        }
    }
    let mut lines = Vec::new();
    for name in ["A", "B", "C"] {
        let mut body = block(rng, depth, 1..5);
        if with_call && name == "A" && !body.contains("CALL(") {
            body = format!("{body} CALL({})", block(rng, depth, 1..3));
        }
        lines.push(format!("{name} = {body}"));
    }
    lines.join("\n")
}

/// Derivation of a random spec, kept below `cap` items by lowering the
/// generation count when needed.
pub fn random_derivation(seed: u64, with_call: bool, cap: usize) -> (String, usize, ItemSeq) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let text = random_spec(&mut rng, 3, with_call);
        let spec = grammar::parse_spec(&text).unwrap_or_else(|e| panic!("{text}\n{e}"));
        let gens = rng.gen_range(1..=4);
        for g in (0..=gens).rev() {
            if let Ok(seq) = grammar::derive_capped(&spec, g, cap) {
                if !with_call || grammar::canonical_serialize(&grammar::prune(&seq).0).unwrap().contains("CALL(") {
                    return (text, g, seq);
                }
                break;
            }
        }
    }
}

/// Planned program built from a random derivation.
pub fn random_program(seed: u64, container: ContainerKind) -> Program {
    let (_, _, seq) = random_derivation(seed, seed.is_multiple_of(2), 4_000);
    astgen::lower(&seq, plan(seed, container)).unwrap()
}

/// Every If statement with its bit and the chain of enclosing Ifs whose
/// then/else contains it.
pub fn if_bits(stmts: &[Stmt], ancestors: &mut Vec<u8>, out: &mut Vec<(u8, Vec<u8>)>) {
    for s in stmts {
        match s {
            Stmt::If { bit, cond, then, els } => {
                if_bits(cond, ancestors, out);
                out.push((*bit, ancestors.clone()));
                ancestors.push(*bit);
                if_bits(then, ancestors, out);
                if let Some(e) = els {
                    if_bits(e, ancestors, out);
                }
                ancestors.pop();
            }
            Stmt::Loop { cond, body } => {
                if_bits(cond, ancestors, out);
                if_bits(body, ancestors, out);
            }
            _ => {}
        }
    }
}

/// Bits assigned anywhere inside a statement's subtree.
pub fn subtree_bits(s: &Stmt, out: &mut Vec<u8>) {
    let walk = |list: &[Stmt], out: &mut Vec<u8>| list.iter().for_each(|x| subtree_bits(x, out));
    match s {
        Stmt::If { bit, cond, then, els } => {
            walk(cond, out);
            out.push(*bit);
            walk(then, out);
            if let Some(e) = els {
                walk(e, out);
            }
        }
        Stmt::Loop { cond, body } => {
            walk(cond, out);
            walk(body, out);
        }
        _ => {}
    }
}

/// A committed hand execution of the bit assignment.
pub struct BitFixture {
    pub name: String,
    pub program: String,
    pub expect: Vec<u8>,
    pub max: i32,
}

pub fn bit_fixtures() -> Vec<BitFixture> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let mut names: Vec<PathBuf> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap().to_string_lossy().starts_with("bitpath_"))
        .collect();
    names.sort();
    names
        .into_iter()
        .map(|path| {
            let text = std::fs::read_to_string(&path).unwrap();
            let field = |key: &str| {
                text.lines()
                    .find_map(|l| l.strip_prefix(key))
                    .unwrap_or_else(|| panic!("{} lacks `{key}`", path.display()))
                    .trim()
                    .to_string()
            };
            BitFixture {
                name: path.file_stem().unwrap().to_string_lossy().into_owned(),
                program: field("program:"),
                expect: field("expect:").split_whitespace().map(|b| b.parse().unwrap()).collect(),
                max: field("max:").parse().unwrap(),
            }
        })
        .collect()
}

/// Bits of all Ifs in source order.
pub fn source_order_bits(stmts: &[Stmt], out: &mut Vec<u8>) {
    for s in stmts {
        match s {
            Stmt::If { bit, cond, then, els } => {
                out.push(*bit);
                source_order_bits(cond, out);
                source_order_bits(then, out);
                if let Some(e) = els {
                    source_order_bits(e, out);
                }
            }
            Stmt::Loop { cond, body } => {
                source_order_bits(cond, out);
                source_order_bits(body, out);
            }
            _ => {}
        }
    }
}
