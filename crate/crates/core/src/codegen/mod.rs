//! Source emission through data-driven backends.
//!
//! A backend is a set of text templates: one per structure block (`if`,
//! `loop`, `call`), one per behavior block (`new`, `insert`, `remove`,
//! `contains`), plus layout templates for functions, files and the runtime.
//! Behavior templates may be overridden per container as `insert.scalar`
//! etc., and each supported container ships its runtime as
//! `container.<kind>`. The built-in C and Go backends are loaded from the
//! TOML files under `templates/`; [`BackendRegistry::register`] accepts more.

pub mod template;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;
use thiserror::Error;

use crate::astgen::{ContainerKind, FuncId, OpKind, Program, Stmt};

const C_TEMPLATES: &str = include_str!("../../templates/c.toml");
const GO_TEMPLATES: &str = include_str!("../../templates/go.toml");

/// Templates every backend must define.
pub const BLOCK_TEMPLATES: [&str; 7] = ["if", "loop", "call", "new", "insert", "remove", "contains"];
pub const LAYOUT_TEMPLATES: [&str; 8] =
    ["arg", "release", "function", "prototype", "function_unit", "main_unit", "runtime", "data_support"];

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BackendId(String);

impl BackendId {
    pub fn new(id: impl Into<String>) -> Self {
        BackendId(id.into())
    }

    pub fn c() -> Self {
        BackendId::new("c")
    }

    pub fn go() -> Self {
        BackendId::new("go")
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for BackendId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for BackendId {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(BackendId::new(s))
    }
}

#[derive(Debug, Error)]
pub enum CodegenError {
    #[error("unknown backend `{0}`")]
    UnknownBackend(String),
    #[error("backend `{0}` is already registered")]
    DuplicateBackend(String),
    #[error("backend `{id}` is missing templates: {}", missing.join(", "))]
    IncompleteTemplates { id: String, missing: Vec<String> },
    #[error("backend `{backend}` has no runtime for container `{container}`")]
    UnsupportedContainer { backend: String, container: ContainerKind },
    #[error("template `{template}` uses unknown placeholder `{{{{{name}}}}}`")]
    UnknownPlaceholder { template: String, name: String },
    #[error("invalid backend description: {0}")]
    InvalidTemplates(String),
    #[error("program has no operand plan")]
    Unplanned,
    #[error("emit configured for container `{requested}` but the program was planned for `{planned}`")]
    ContainerMismatch { requested: ContainerKind, planned: ContainerKind },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

/// File layout and templates of one target language.
#[derive(Debug, Clone, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct BackendTemplates {
    /// Extension of the files handed to the compiler.
    pub source_extension: String,
    pub main_file: String,
    /// File name pattern for split emission; may use `{{id}}`.
    pub function_file: String,
    /// Function name pattern; may use `{{id}}`.
    pub function_name: String,
    /// Separate runtime unit (a C header); when absent the runtime is
    /// rendered into the main unit.
    #[serde(default)]
    pub runtime_file: Option<String>,
    pub templates: BTreeMap<String, String>,
}

impl BackendTemplates {
    pub fn from_toml(text: &str) -> Result<Self, CodegenError> {
        toml::from_str(text).map_err(|e| CodegenError::InvalidTemplates(e.to_string()))
    }

    /// Required template names that are absent.
    pub fn missing(&self) -> Vec<String> {
        let mut missing: Vec<String> = BLOCK_TEMPLATES
            .iter()
            .chain(LAYOUT_TEMPLATES.iter())
            .filter(|k| !self.templates.contains_key(**k))
            .map(|k| k.to_string())
            .collect();
        if self.containers().is_empty() {
            missing.push("container.<kind>".to_string());
        }
        missing
    }

    pub fn containers(&self) -> Vec<ContainerKind> {
        ContainerKind::ALL
            .into_iter()
            .filter(|c| self.templates.contains_key(&format!("container.{}", c.name())))
            .collect()
    }

    fn get(&self, key: &str, container: ContainerKind) -> &str {
        self.templates
            .get(&format!("{key}.{}", container.name()))
            .or_else(|| self.templates.get(key))
            .map(String::as_str)
            .expect("completeness checked at registration")
    }
}

#[derive(Debug, Clone)]
pub struct EmitConfig {
    pub backend: BackendId,
    pub container: ContainerKind,
    /// One function per file instead of a single main unit.
    pub split_files: bool,
    /// Trace every operation by default, not only under `--debug`.
    pub debug_trace: bool,
    pub output_dir: PathBuf,
}

impl EmitConfig {
    pub fn new(backend: BackendId, container: ContainerKind, output_dir: impl Into<PathBuf>) -> Self {
        EmitConfig { backend, container, split_files: false, debug_trace: false, output_dir: output_dir.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceFile {
    pub relative_path: String,
    pub contents: String,
}

#[derive(Debug, Clone)]
pub struct BackendRegistry {
    backends: BTreeMap<BackendId, BackendTemplates>,
}

impl Default for BackendRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

impl BackendRegistry {
    pub fn empty() -> Self {
        BackendRegistry { backends: BTreeMap::new() }
    }

    /// Registry holding the C and Go backends.
    pub fn builtin() -> Self {
        let mut reg = Self::empty();
        for (id, text) in [("c", C_TEMPLATES), ("go", GO_TEMPLATES)] {
            let templates = BackendTemplates::from_toml(text).expect("built-in templates parse");
            reg.register(BackendId::new(id), templates).expect("built-in templates are complete");
        }
        reg
    }

    pub fn register(&mut self, id: BackendId, templates: BackendTemplates) -> Result<(), CodegenError> {
        if self.backends.contains_key(&id) {
            return Err(CodegenError::DuplicateBackend(id.0));
        }
        let missing = templates.missing();
        if !missing.is_empty() {
            return Err(CodegenError::IncompleteTemplates { id: id.0, missing });
        }
        self.backends.insert(id, templates);
        Ok(())
    }

    pub fn get(&self, id: &BackendId) -> Option<&BackendTemplates> {
        self.backends.get(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &BackendId> {
        self.backends.keys()
    }

    /// Renders the program into source files, sorted by path.
    pub fn emit(&self, p: &Program, cfg: &EmitConfig) -> Result<Vec<SourceFile>, CodegenError> {
        let backend = self.get(&cfg.backend).ok_or_else(|| CodegenError::UnknownBackend(cfg.backend.0.clone()))?;
        let plan = p.plan.ok_or(CodegenError::Unplanned)?;
        if plan.container != cfg.container {
            return Err(CodegenError::ContainerMismatch { requested: cfg.container, planned: plan.container });
        }
        if !backend.containers().contains(&cfg.container) {
            return Err(CodegenError::UnsupportedContainer {
                backend: cfg.backend.0.clone(),
                container: cfg.container,
            });
        }
        Emitter { backend, container: cfg.container, trip_count: plan.trip_count, program: p }.files(cfg)
    }
}

/// Emits with the built-in backends.
pub fn emit(p: &Program, cfg: &EmitConfig) -> Result<Vec<SourceFile>, CodegenError> {
    BackendRegistry::builtin().emit(p, cfg)
}

/// Writes files under `dir`, creating directories as needed.
pub fn write_sources(dir: &Path, files: &[SourceFile]) -> Result<(), CodegenError> {
    for f in files {
        let path = dir.join(&f.relative_path);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|source| CodegenError::Io { path: parent.into(), source })?;
        }
        fs::write(&path, &f.contents).map_err(|source| CodegenError::Io { path, source })?;
    }
    Ok(())
}

struct Emitter<'a> {
    backend: &'a BackendTemplates,
    container: ContainerKind,
    trip_count: u32,
    program: &'a Program,
}

/// Per-function counters for generated local names.
#[derive(Default)]
struct Names {
    loops: usize,
    sites: usize,
}

fn slot_name(slot: usize) -> String {
    format!("v{slot}")
}

impl Emitter<'_> {
    fn render(&self, key: &str, vars: &[(&str, &str)]) -> Result<String, CodegenError> {
        template::render(key, self.backend.get(key, self.container), vars)
    }

    fn function_name(&self, id: FuncId) -> Result<String, CodegenError> {
        template::render("function_name", &self.backend.function_name, &[("id", &id.to_string())])
    }

    fn block(&self, stmts: &[Stmt], names: &mut Names) -> Result<String, CodegenError> {
        let mut parts: Vec<String> = Vec::with_capacity(stmts.len());
        let mut defined = Vec::new();
        for s in stmts {
            let text = match s {
                Stmt::New { slot } => {
                    defined.push(*slot);
                    self.render("new", &[("slot", &slot_name(*slot)), ("ordinal", &slot.to_string())])?
                }
                Stmt::Op { kind, operand } => {
                    let op = operand.ok_or(CodegenError::Unplanned)?;
                    let key = match kind {
                        OpKind::Insert => "insert",
                        OpKind::Remove => "remove",
                        OpKind::Contains => "contains",
                    };
                    self.render(
                        key,
                        &[
                            ("slot", &slot_name(op.slot)),
                            ("ordinal", &op.slot.to_string()),
                            ("value", &op.value.to_string()),
                        ],
                    )?
                }
                Stmt::If { bit, cond, then, els } => {
                    let cond = self.block(cond, names)?;
                    let then = self.block(then, names)?;
                    let els = match els {
                        Some(e) => self.block(e, names)?,
                        None => String::new(),
                    };
                    self.render("if", &[("cond", &cond), ("bit", &bit.to_string()), ("then", &then), ("else", &els)])?
                }
                Stmt::Loop { cond, body } => {
                    let counter = format!("i{}", names.loops);
                    names.loops += 1;
                    let cond = self.block(cond, names)?;
                    let body = self.block(body, names)?;
                    self.render(
                        "loop",
                        &[
                            ("counter", &counter),
                            ("trip", &self.trip_count.to_string()),
                            ("cond", &cond),
                            ("body", &body),
                        ],
                    )?
                }
                Stmt::Call { callee, args } => {
                    let site = format!("c{}", names.sites);
                    names.sites += 1;
                    let mut rendered = String::new();
                    for slot in args {
                        rendered.push_str(&self.render("arg", &[("slot", &slot_name(*slot))])?);
                    }
                    self.render(
                        "call",
                        &[
                            ("callee", &self.function_name(*callee)?),
                            ("args", &rendered),
                            ("argc", &args.len().to_string()),
                            ("site", &site),
                        ],
                    )?
                }
            };
            parts.push(text);
        }
        for slot in defined.into_iter().rev() {
            parts.push(self.render("release", &[("slot", &slot_name(slot))])?);
        }
        Ok(parts.into_iter().filter(|p| !p.is_empty()).collect::<Vec<_>>().join("\n"))
    }

    fn function(&self, id: FuncId) -> Result<String, CodegenError> {
        let f = &self.program.functions[id];
        let body = self.block(&f.body, &mut Names::default())?;
        self.render("function", &[("name", &self.function_name(id)?), ("body", &body), ("id", &id.to_string())])
    }

    fn runtime_with(&self, debug_default: &str) -> Result<String, CodegenError> {
        let data_support = self.render("data_support", &[])?;
        let container_key = format!("container.{}", self.container.name());
        let container_runtime = template::render(
            &container_key,
            &self.backend.templates[&container_key],
            &[("data_support", &data_support)],
        )?;
        let mut prototypes = Vec::new();
        for f in &self.program.functions {
            let proto = self.render("prototype", &[("name", &self.function_name(f.id)?)])?;
            if !proto.is_empty() {
                prototypes.push(proto);
            }
        }
        self.render(
            "runtime",
            &[
                ("container_runtime", &container_runtime),
                ("prototypes", &prototypes.join("\n")),
                ("debug_default", debug_default),
            ],
        )
    }

    fn files(&self, cfg: &EmitConfig) -> Result<Vec<SourceFile>, CodegenError> {
        let debug_default = if cfg.debug_trace { "1" } else { "0" };
        let runtime = self.runtime_with(debug_default)?;
        let mut files = Vec::new();
        let main_runtime = match &self.backend.runtime_file {
            Some(name) => {
                files.push(SourceFile { relative_path: name.clone(), contents: runtime });
                String::new()
            }
            None => runtime,
        };

        let entry = self.program.entry;
        let mut main_functions = vec![self.function(entry)?];
        for f in &self.program.functions {
            if f.id == entry {
                continue;
            }
            let text = self.function(f.id)?;
            if cfg.split_files {
                let path =
                    template::render("function_file", &self.backend.function_file, &[("id", &f.id.to_string())])?;
                let contents = self.render("function_unit", &[("function", &text)])?;
                files.push(SourceFile { relative_path: path, contents });
            } else {
                main_functions.push(text);
            }
        }
        let main = self.render(
            "main_unit",
            &[
                ("runtime", &main_runtime),
                ("functions", &main_functions.join("\n\n")),
                ("entry", &self.function_name(entry)?),
                ("debug_default", debug_default),
            ],
        )?;
        files.push(SourceFile { relative_path: self.backend.main_file.clone(), contents: main });
        files.sort_by(|a, b| a.relative_path.cmp(&b.relative_path));
        Ok(files)
    }
}
