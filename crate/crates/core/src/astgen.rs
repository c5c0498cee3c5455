//! Lowering of derived L-strings into executable programs.
//!
//! The pipeline is `extract_functions` (CALL bodies become deduplicated
//! functions), `assign_path_bits` (one PATH bit per `If`, counter-stack
//! scheme), then `plan_operands` (deterministic slots and values for every
//! behavior operation, plus the argument lists of every call site).

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grammar::{self, Behavior, ConstructKind, GrammarError, ItemSeq, SymbolItem};
use crate::prng::Lcg;

pub type FuncId = usize;
pub type Slot = usize;

/// Width of the PATH variable; bit indices wrap modulo this.
pub const PATH_BITS: u64 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OpKind {
    Insert,
    Remove,
    Contains,
}

impl OpKind {
    pub fn keyword(self) -> &'static str {
        match self {
            OpKind::Insert => "insert",
            OpKind::Remove => "remove",
            OpKind::Contains => "contains",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Operand {
    pub slot: Slot,
    pub value: i64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Stmt {
    If {
        bit: u8,
        cond: Vec<Stmt>,
        then: Vec<Stmt>,
        els: Option<Vec<Stmt>>,
    },
    /// `cond` runs before every iteration of `body`.
    Loop {
        cond: Vec<Stmt>,
        body: Vec<Stmt>,
    },
    /// `args` is filled in by planning with the slots available at the site.
    Call {
        callee: FuncId,
        args: Vec<Slot>,
    },
    New {
        slot: Slot,
    },
    /// `operand` is `None` until planned.
    Op {
        kind: OpKind,
        operand: Option<Operand>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionDef {
    pub id: FuncId,
    /// Canonical string of the L-string fragment this function came from.
    pub canonical: String,
    pub body: Vec<Stmt>,
    /// Largest bit index used by an `If`, or -1 when there is none.
    pub max_bit_index: i32,
    /// Number of `New` statements, i.e. distinct local slots.
    pub slot_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContainerKind {
    Array,
    #[serde(rename = "sortedlist")]
    SortedList,
    Scalar,
}

impl ContainerKind {
    pub const ALL: [ContainerKind; 3] = [ContainerKind::Array, ContainerKind::SortedList, ContainerKind::Scalar];

    pub fn name(self) -> &'static str {
        match self {
            ContainerKind::Array => "array",
            ContainerKind::SortedList => "sortedlist",
            ContainerKind::Scalar => "scalar",
        }
    }
}

impl fmt::Display for ContainerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ContainerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "array" => Ok(ContainerKind::Array),
            "sortedlist" | "sorted-list" | "sorted_list" => Ok(ContainerKind::SortedList),
            "scalar" => Ok(ContainerKind::Scalar),
            other => Err(format!("unknown container `{other}` (expected array, sortedlist or scalar)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperandPlan {
    pub seed: u64,
    pub value_range: u64,
    pub trip_count: u32,
    pub container: ContainerKind,
}

impl Default for OperandPlan {
    fn default() -> Self {
        OperandPlan { seed: 0, value_range: 1000, trip_count: 2, container: ContainerKind::Array }
    }
}

impl OperandPlan {
    pub fn validate(&self) -> Result<(), AstError> {
        if self.value_range == 0 {
            return Err(AstError::InvalidPlan("value range must be at least 1".into()));
        }
        if self.trip_count == 0 {
            return Err(AstError::InvalidPlan("trip count must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program {
    /// Indexed by [`FuncId`].
    pub functions: Vec<FunctionDef>,
    pub entry: FuncId,
    /// Set once operands are planned.
    pub plan: Option<OperandPlan>,
}

impl Program {
    pub fn entry_function(&self) -> &FunctionDef {
        &self.functions[self.entry]
    }

    /// Pairs `(caller, callee)` for every call statement, with repetition.
    pub fn call_edges(&self) -> Vec<(FuncId, FuncId)> {
        let mut edges = Vec::new();
        for f in &self.functions {
            visit(&f.body, &mut |s| {
                if let Stmt::Call { callee, .. } = s {
                    edges.push((f.id, *callee));
                }
            });
        }
        edges
    }

    /// True when the entry function has no statements at all.
    pub fn is_empty(&self) -> bool {
        self.entry_function().body.is_empty()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AstError {
    #[error(transparent)]
    Grammar(#[from] GrammarError),
    #[error("invalid operand plan: {0}")]
    InvalidPlan(String),
    #[error("call from func{caller} to func{callee} does not shrink the canonical string")]
    NonDecreasingCall { caller: FuncId, callee: FuncId },
    #[error("call graph has a cycle through func{0}")]
    Cycle(FuncId),
    #[error("func{function}: slot {slot} is used without a dominating definition")]
    UndominatedSlot { function: FuncId, slot: Slot },
    #[error("func{function}: operation has no planned operand")]
    Unplanned { function: FuncId },
}

/// Pre-order walk over statements, descending into every block.
pub fn visit<'a>(stmts: &'a [Stmt], f: &mut impl FnMut(&'a Stmt)) {
    for s in stmts {
        f(s);
        match s {
            Stmt::If { cond, then, els, .. } => {
                visit(cond, f);
                visit(then, f);
                if let Some(e) = els {
                    visit(e, f);
                }
            }
            Stmt::Loop { cond, body } => {
                visit(cond, f);
                visit(body, f);
            }
            _ => {}
        }
    }
}

struct Extractor {
    table: HashMap<String, FuncId>,
    functions: Vec<Option<FunctionDef>>,
}

impl Extractor {
    fn function_for(&mut self, seq: &ItemSeq) -> Result<FuncId, AstError> {
        let canonical = grammar::canonical_serialize(seq)?;
        if let Some(&id) = self.table.get(&canonical) {
            return Ok(id);
        }
        let id = self.functions.len();
        self.functions.push(None);
        self.table.insert(canonical.clone(), id);
        let mut slots = 0;
        let body = self.lower(seq, &mut slots)?;
        self.functions[id] = Some(FunctionDef { id, canonical, body, max_bit_index: -1, slot_count: slots });
        Ok(id)
    }

    fn lower(&mut self, seq: &ItemSeq, slots: &mut usize) -> Result<Vec<Stmt>, AstError> {
        let mut out = Vec::with_capacity(seq.items().len());
        for item in seq.items() {
            let stmt = match item {
                SymbolItem::Terminal(Behavior::New) => {
                    *slots += 1;
                    Stmt::New { slot: *slots - 1 }
                }
                SymbolItem::Terminal(b) => Stmt::Op {
                    kind: match b {
                        Behavior::Insert => OpKind::Insert,
                        Behavior::Remove => OpKind::Remove,
                        _ => OpKind::Contains,
                    },
                    operand: None,
                },
                SymbolItem::NonTerminal(name) => return Err(GrammarError::NonTerminalInCanonical(name.clone()).into()),
                SymbolItem::Construct { kind: ConstructKind::Call, blocks } => {
                    Stmt::Call { callee: self.function_for(&blocks[0])?, args: Vec::new() }
                }
                SymbolItem::Construct { kind: ConstructKind::If, blocks } => Stmt::If {
                    bit: 0,
                    cond: self.lower(&blocks[0], slots)?,
                    then: self.lower(&blocks[1], slots)?,
                    els: match blocks.get(2) {
                        Some(b) => Some(self.lower(b, slots)?),
                        None => None,
                    },
                },
                SymbolItem::Construct { kind: ConstructKind::Loop, blocks } => match blocks.as_slice() {
                    [body] => Stmt::Loop { cond: Vec::new(), body: self.lower(body, slots)? },
                    [cond, body, ..] => Stmt::Loop { cond: self.lower(cond, slots)?, body: self.lower(body, slots)? },
                    [] => Stmt::Loop { cond: Vec::new(), body: Vec::new() },
                },
            };
            out.push(stmt);
        }
        Ok(out)
    }
}

/// Turns a pruned L-string into a program: every `CALL(e)` becomes a call to
/// the single function keyed by `e`'s canonical string; the top level becomes
/// the entry function (id 0). Ids follow discovery order.
///
/// Fails only if `s` still contains nonterminals.
pub fn extract_functions(s: &ItemSeq) -> Result<Program, AstError> {
    let mut ex = Extractor { table: HashMap::new(), functions: Vec::new() };
    let entry = ex.function_for(s)?;
    let functions: Vec<FunctionDef> =
        ex.functions.into_iter().map(|f| f.expect("every reserved id is filled")).collect();
    let program = Program { functions, entry, plan: None };
    debug_assert!(verify_call_graph(&program).is_ok());
    Ok(program)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BitReport {
    pub max_bit_index: i32,
    /// Number of `If`s whose counter exceeded the PATH width.
    pub wrapped: usize,
}

/// Assigns a PATH bit to every `If` in `f` with a counter stack: the stack
/// starts at `[1]`; an `If` takes bit `top - 1`; its branches run under a
/// pushed counter `top + 1`; at the join the child counter is popped and the
/// parent becomes `max(parent, child)`. Condition blocks sit at the `If`'s own
/// level and are numbered before it. Loops and calls do not touch the stack.
pub fn assign_path_bits(f: &mut FunctionDef) -> BitReport {
    let mut stack: Vec<u64> = vec![1];
    let mut max_raw: Option<u64> = None;
    let mut wrapped = 0;
    walk_bits(&mut f.body, &mut stack, &mut max_raw, &mut wrapped);
    let max_bit_index = match max_raw {
        None => -1,
        Some(raw) if raw >= PATH_BITS => (PATH_BITS - 1) as i32,
        Some(raw) => raw as i32,
    };
    f.max_bit_index = max_bit_index;
    if wrapped > 0 {
        warn!(
            "func{}: {} branch(es) exceed the {}-bit PATH and reuse bits modulo {}",
            f.id, wrapped, PATH_BITS, PATH_BITS
        );
    }
    BitReport { max_bit_index, wrapped }
}

fn walk_bits(stmts: &mut [Stmt], stack: &mut Vec<u64>, max_raw: &mut Option<u64>, wrapped: &mut usize) {
    for s in stmts {
        match s {
            Stmt::If { bit, cond, then, els } => {
                walk_bits(cond, stack, max_raw, wrapped);
                let top = *stack.last().expect("stack never empties");
                let raw = top - 1;
                if raw >= PATH_BITS {
                    *wrapped += 1;
                }
                *bit = (raw % PATH_BITS) as u8;
                *max_raw = Some(max_raw.map_or(raw, |m| m.max(raw)));
                stack.push(top + 1);
                walk_bits(then, stack, max_raw, wrapped);
                if let Some(e) = els {
                    walk_bits(e, stack, max_raw, wrapped);
                }
                let child = stack.pop().expect("pushed above");
                let parent = stack.last_mut().expect("stack never empties");
                *parent = (*parent).max(child);
            }
            Stmt::Loop { cond, body } => {
                walk_bits(cond, stack, max_raw, wrapped);
                walk_bits(body, stack, max_raw, wrapped);
            }
            _ => {}
        }
    }
}

pub fn assign_all_path_bits(p: &mut Program) -> Vec<BitReport> {
    p.functions.iter_mut().map(assign_path_bits).collect()
}

/// Index of a call statement among the calls of one function, in pre-order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CallSite(pub usize);

/// Tracks the slots whose definitions dominate the current position: one
/// frame per open statement list, holding the slots defined so far in it.
#[derive(Default)]
struct Scopes {
    frames: Vec<Vec<Slot>>,
}

impl Scopes {
    fn visible(&self) -> Vec<Slot> {
        self.frames.iter().flatten().copied().collect()
    }

    fn define(&mut self, slot: Slot) {
        self.frames.last_mut().expect("inside a block").push(slot);
    }

    fn is_visible(&self, slot: Slot) -> bool {
        self.frames.iter().any(|f| f.contains(&slot))
    }
}

/// Slots available at a call site: those defined by a `New` earlier in the
/// same statement list or in the prefix of an enclosing list. Definitions in
/// sibling branches or below the call are excluded. Returns `None` when `f`
/// has fewer calls than `site.0 + 1`.
pub fn available_vars(f: &FunctionDef, site: CallSite) -> Option<Vec<Slot>> {
    let mut scopes = Scopes::default();
    let mut seen = 0;
    find_call(&f.body, site.0, &mut seen, &mut scopes)
}

fn find_call(stmts: &[Stmt], target: usize, seen: &mut usize, scopes: &mut Scopes) -> Option<Vec<Slot>> {
    scopes.frames.push(Vec::new());
    let mut found = None;
    for s in stmts {
        match s {
            Stmt::New { slot } => scopes.define(*slot),
            Stmt::Call { .. } => {
                if *seen == target {
                    found = Some(scopes.visible());
                    break;
                }
                *seen += 1;
            }
            Stmt::If { cond, then, els, .. } => {
                found = find_call(cond, target, seen, scopes)
                    .or_else(|| find_call(then, target, seen, scopes))
                    .or_else(|| els.as_ref().and_then(|e| find_call(e, target, seen, scopes)));
            }
            Stmt::Loop { cond, body } => {
                found = find_call(cond, target, seen, scopes).or_else(|| find_call(body, target, seen, scopes));
            }
            Stmt::Op { .. } => {}
        }
        if found.is_some() {
            break;
        }
    }
    scopes.frames.pop();
    found
}

struct Planner {
    rng: Lcg,
    value_range: u64,
    scopes: Scopes,
    next_slot: Slot,
}

impl Planner {
    fn fresh(&mut self) -> Slot {
        self.next_slot += 1;
        self.next_slot - 1
    }

    fn block(&mut self, stmts: &[Stmt]) -> Vec<Stmt> {
        self.scopes.frames.push(Vec::new());
        let mut out = Vec::with_capacity(stmts.len());
        for s in stmts {
            match s {
                Stmt::New { .. } => {
                    let slot = self.fresh();
                    self.scopes.define(slot);
                    out.push(Stmt::New { slot });
                }
                Stmt::Op { kind, .. } => {
                    let mut visible = self.scopes.visible();
                    if visible.is_empty() {
                        let slot = self.fresh();
                        self.scopes.define(slot);
                        out.push(Stmt::New { slot });
                        visible.push(slot);
                    }
                    let slot = visible[self.rng.below(visible.len() as u64) as usize];
                    let value = self.rng.below(self.value_range) as i64;
                    out.push(Stmt::Op { kind: *kind, operand: Some(Operand { slot, value }) });
                }
                Stmt::Call { callee, .. } => {
                    out.push(Stmt::Call { callee: *callee, args: self.scopes.visible() });
                }
                Stmt::If { bit, cond, then, els } => {
                    let cond = self.block(cond);
                    let then = self.block(then);
                    let els = els.as_ref().map(|e| self.block(e));
                    out.push(Stmt::If { bit: *bit, cond, then, els });
                }
                Stmt::Loop { cond, body } => {
                    let cond = self.block(cond);
                    let body = self.block(body);
                    out.push(Stmt::Loop { cond, body });
                }
            }
        }
        self.scopes.frames.pop();
        out
    }
}

/// Fixes a slot and a value for every behavior operation and the argument
/// list of every call, drawing from one PRNG stream seeded with `plan.seed`
/// across functions in id order. Each operation draws a slot index (modulo
/// the number of dominating slots) and then a value (modulo the value range).
/// An operation with no dominating slot gets a fresh `New` right before it.
/// Slots are renumbered in pre-order.
pub fn plan_operands(p: &Program, plan: OperandPlan) -> Result<Program, AstError> {
    plan.validate()?;
    let mut planner =
        Planner { rng: Lcg::new(plan.seed), value_range: plan.value_range, scopes: Scopes::default(), next_slot: 0 };
    let mut functions = Vec::with_capacity(p.functions.len());
    for f in &p.functions {
        planner.next_slot = 0;
        let body = planner.block(&f.body);
        functions.push(FunctionDef {
            id: f.id,
            canonical: f.canonical.clone(),
            body,
            max_bit_index: f.max_bit_index,
            slot_count: planner.next_slot,
        });
    }
    Ok(Program { functions, entry: p.entry, plan: Some(plan) })
}

/// Checks that every call strictly shrinks the canonical string and that the
/// call graph is acyclic.
pub fn verify_call_graph(p: &Program) -> Result<(), AstError> {
    let edges = p.call_edges();
    for &(caller, callee) in &edges {
        if p.functions[callee].canonical.len() >= p.functions[caller].canonical.len() {
            return Err(AstError::NonDecreasingCall { caller, callee });
        }
    }
    // Kahn's algorithm as an independent acyclicity check
    let n = p.functions.len();
    let mut indegree = vec![0usize; n];
    let mut out: Vec<Vec<FuncId>> = vec![Vec::new(); n];
    for &(a, b) in &edges {
        indegree[b] += 1;
        out[a].push(b);
    }
    let mut ready: Vec<FuncId> = (0..n).filter(|&i| indegree[i] == 0).collect();
    let mut done = 0;
    while let Some(v) = ready.pop() {
        done += 1;
        for &w in &out[v] {
            indegree[w] -= 1;
            if indegree[w] == 0 {
                ready.push(w);
            }
        }
    }
    if done != n {
        let stuck = (0..n).find(|&i| indegree[i] > 0).unwrap_or(0);
        return Err(AstError::Cycle(stuck));
    }
    Ok(())
}

/// Standalone dominance check of a planned program: every operand slot and
/// call argument must be defined by a dominating `New`.
pub fn verify_slots(p: &Program) -> Result<(), AstError> {
    for f in &p.functions {
        let mut scopes = Scopes::default();
        check_block(f.id, &f.body, &mut scopes)?;
    }
    Ok(())
}

fn check_block(function: FuncId, stmts: &[Stmt], scopes: &mut Scopes) -> Result<(), AstError> {
    scopes.frames.push(Vec::new());
    for s in stmts {
        match s {
            Stmt::New { slot } => scopes.define(*slot),
            Stmt::Op { operand: None, .. } => return Err(AstError::Unplanned { function }),
            Stmt::Op { operand: Some(op), .. } => {
                if !scopes.is_visible(op.slot) {
                    return Err(AstError::UndominatedSlot { function, slot: op.slot });
                }
            }
            Stmt::Call { args, .. } => {
                if let Some(&slot) = args.iter().find(|s| !scopes.is_visible(**s)) {
                    return Err(AstError::UndominatedSlot { function, slot });
                }
            }
            Stmt::If { cond, then, els, .. } => {
                check_block(function, cond, scopes)?;
                check_block(function, then, scopes)?;
                if let Some(e) = els {
                    check_block(function, e, scopes)?;
                }
            }
            Stmt::Loop { cond, body } => {
                check_block(function, cond, scopes)?;
                check_block(function, body, scopes)?;
            }
        }
    }
    scopes.frames.pop();
    Ok(())
}

/// Full lowering of a derived L-string: prune leftover nonterminals, extract
/// functions, assign PATH bits and plan operands.
pub fn lower(derived: &ItemSeq, plan: OperandPlan) -> Result<Program, AstError> {
    let (pruned, dropped) = grammar::prune(derived);
    if dropped > 0 {
        warn!("dropped {dropped} nonterminal(s) left over after derivation");
    }
    let mut program = extract_functions(&pruned)?;
    assign_all_path_bits(&mut program);
    plan_operands(&program, plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::parse_seq;

    fn program(text: &str) -> Program {
        extract_functions(&parse_seq(text).unwrap()).unwrap()
    }

    fn bits(stmts: &[Stmt]) -> Vec<u8> {
        let mut out = Vec::new();
        visit(stmts, &mut |s| {
            if let Stmt::If { bit, .. } = s {
                out.push(*bit);
            }
        });
        out
    }

    #[test]
    fn no_call_means_one_function() {
        let p = program("new insert IF(contains, remove) LOOP(insert)");
        assert_eq!(p.functions.len(), 1);
        assert_eq!(p.entry, 0);
        assert_eq!(p.functions[0].canonical, "new insert IF(contains,remove) LOOP(insert)");
    }

    #[test]
    fn shared_call_bodies_are_deduplicated() {
        let p = program("CALL(insert) CALL(insert) CALL(remove)");
        assert_eq!(p.functions.len(), 3);
        let canon: Vec<&str> = p.functions.iter().map(|f| f.canonical.as_str()).collect();
        assert_eq!(canon, ["CALL(insert) CALL(insert) CALL(remove)", "insert", "remove"]);
        let edges = p.call_edges();
        assert_eq!(edges, [(0, 1), (0, 1), (0, 2)]);
    }

    #[test]
    fn nested_calls_are_extracted_recursively() {
        let p = program("CALL(new CALL(insert)) CALL(insert)");
        let canon: Vec<&str> = p.functions.iter().map(|f| f.canonical.as_str()).collect();
        assert_eq!(canon, ["CALL(new CALL(insert)) CALL(insert)", "new CALL(insert)", "insert"]);
        assert_eq!(p.call_edges(), [(0, 1), (0, 2), (1, 2)]);
        verify_call_graph(&p).unwrap();
    }

    #[test]
    fn nonterminals_are_rejected() {
        assert!(extract_functions(&parse_seq("new A").unwrap()).is_err());
    }

    #[test]
    fn no_if_means_no_bits() {
        let mut p = program("new LOOP(insert) CALL(remove)");
        let report = assign_path_bits(&mut p.functions[0]);
        assert_eq!(report, BitReport { max_bit_index: -1, wrapped: 0 });
        assert_eq!(p.functions[0].max_bit_index, -1);
    }

    #[test]
    fn if_then_joins_like_if_then_else() {
        let mut a = program("IF(,IF(,)) IF(,)");
        let mut b = program("IF(,IF(,),) IF(,,)");
        assign_path_bits(&mut a.functions[0]);
        assign_path_bits(&mut b.functions[0]);
        assert_eq!(bits(&a.functions[0].body), bits(&b.functions[0].body));
    }

    #[test]
    fn else_branch_continues_after_then_branch() {
        // then-branch If takes bit 1 and raises the child counter to 3
        let mut p = program("IF(,IF(,),IF(,))");
        assign_path_bits(&mut p.functions[0]);
        assert_eq!(bits(&p.functions[0].body), [0, 1, 2]);
    }

    #[test]
    fn bits_wrap_modulo_64() {
        let text = vec!["IF(,)"; 66].join(" ");
        let mut p = program(&text);
        let report = assign_path_bits(&mut p.functions[0]);
        assert_eq!(report.wrapped, 2);
        assert_eq!(report.max_bit_index, 63);
        let b = bits(&p.functions[0].body);
        assert_eq!(&b[62..], [62, 63, 0, 1]);
    }

    #[test]
    fn available_vars_nested() {
        // new0 IF(, new1 CALL(...))
        let p = program("new IF(, new CALL(insert))");
        assert_eq!(available_vars(&p.functions[0], CallSite(0)), Some(vec![0, 1]));
        assert_eq!(available_vars(&p.functions[0], CallSite(1)), None);
    }

    #[test]
    fn available_vars_first_statement() {
        let p = program("CALL(insert) new");
        assert_eq!(available_vars(&p.functions[0], CallSite(0)), Some(vec![]));
    }

    #[test]
    fn available_vars_excludes_branch_locals() {
        let p = program("IF(, new, ) CALL(insert)");
        assert_eq!(available_vars(&p.functions[0], CallSite(0)), Some(vec![]));
        let p = program("new LOOP(new, CALL(insert)) new CALL(remove)");
        assert_eq!(available_vars(&p.functions[0], CallSite(0)), Some(vec![0]));
        assert_eq!(available_vars(&p.functions[0], CallSite(1)), Some(vec![0, 2]));
    }

    #[test]
    fn single_slot_is_always_chosen() {
        let p = program("new insert");
        for seed in 0..20 {
            let plan = OperandPlan { seed, ..OperandPlan::default() };
            let planned = plan_operands(&p, plan).unwrap();
            match &planned.functions[0].body[1] {
                Stmt::Op { operand: Some(op), .. } => assert_eq!(op.slot, 0),
                other => panic!("unexpected {other:?}"),
            }
        }
    }

    #[test]
    fn planning_is_deterministic() {
        let p = program("new new IF(insert, remove contains) CALL(new insert) LOOP(new insert)");
        let plan = OperandPlan { seed: 7, ..OperandPlan::default() };
        assert_eq!(plan_operands(&p, plan).unwrap(), plan_operands(&p, plan).unwrap());
    }

    #[test]
    fn bare_insert_gets_a_materialized_new() {
        // seed 0 draws 167951807 (slot: mod 1 = 0) then 724178430 (value: mod 1000 = 430)
        let p = program("insert");
        let planned = plan_operands(&p, OperandPlan::default()).unwrap();
        assert_eq!(
            planned.functions[0].body,
            [Stmt::New { slot: 0 }, Stmt::Op { kind: OpKind::Insert, operand: Some(Operand { slot: 0, value: 430 }) }]
        );
        assert_eq!(planned.functions[0].slot_count, 1);
        verify_slots(&planned).unwrap();
    }

    #[test]
    fn planned_call_args_match_available_vars() {
        let p = program("new IF(new CALL(insert), CALL(insert)) remove CALL(remove)");
        let planned = plan_operands(&p, OperandPlan::default()).unwrap();
        let f = &planned.functions[0];
        let mut args = Vec::new();
        visit(&f.body, &mut |s| {
            if let Stmt::Call { args: a, .. } = s {
                args.push(a.clone());
            }
        });
        for (i, a) in args.iter().enumerate() {
            assert_eq!(Some(a.clone()), available_vars(f, CallSite(i)));
        }
        assert_eq!(args, [vec![0, 1], vec![0], vec![0]]);
        verify_slots(&planned).unwrap();
    }

    #[test]
    fn invalid_plans_are_rejected() {
        let p = program("new");
        let plan = OperandPlan { value_range: 0, ..OperandPlan::default() };
        assert!(matches!(plan_operands(&p, plan), Err(AstError::InvalidPlan(_))));
        let plan = OperandPlan { trip_count: 0, ..OperandPlan::default() };
        assert!(matches!(plan_operands(&p, plan), Err(AstError::InvalidPlan(_))));
    }

    #[test]
    fn slot_verifier_catches_branch_local_use() {
        let mut p = program("IF(, new, ) insert");
        p.functions[0].body[1] = Stmt::Op { kind: OpKind::Insert, operand: Some(Operand { slot: 0, value: 1 }) };
        assert_eq!(verify_slots(&p), Err(AstError::UndominatedSlot { function: 0, slot: 0 }));
    }

    #[test]
    fn call_graph_verifier_catches_cycles() {
        let mut p = program("CALL(CALL(insert))");
        // point the innermost call back at the entry
        p.functions[1].body[0] = Stmt::Call { callee: 0, args: vec![] };
        assert!(verify_call_graph(&p).is_err());
    }

    #[test]
    fn container_names_round_trip() {
        for c in ContainerKind::ALL {
            assert_eq!(c.name().parse::<ContainerKind>().unwrap(), c);
        }
        assert!("hash".parse::<ContainerKind>().is_err());
    }
}
