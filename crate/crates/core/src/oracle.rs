//! Reference interpreter for planned programs.
//!
//! Defines the observable behavior every emitted program must reproduce: the
//! debug trace, the checksum, and the reference-counted heap discipline.
//!
//! Heap model: a call retains every object it passes in its data array. In
//! the callee, each `new` first takes over the next unconsumed data entry (an
//! alias, no extra retain) and only allocates once the entries run out. A
//! statement list releases the slots it defined when it ends, and a callee
//! releases its unconsumed data entries on return.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::astgen::{ContainerKind, FuncId, OpKind, Program, Slot, Stmt};
use crate::grammar::Behavior;

pub const CHECKSUM_OFFSET: u64 = 14695981039346656037;
pub const CHECKSUM_PRIME: u64 = 1099511628211;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TraceEvent {
    pub op: Behavior,
    pub var: u64,
    pub val: i64,
    pub res: i64,
}

impl TraceEvent {
    pub fn opcode(&self) -> u64 {
        match self.op {
            Behavior::New => 1,
            Behavior::Insert => 2,
            Behavior::Remove => 3,
            Behavior::Contains => 4,
        }
    }

    /// The 64-bit word folded into the checksum.
    pub fn encode(&self) -> u64 {
        (self.opcode() << 48)
            | ((self.var & 0xFFFF) << 32)
            | (((self.val as u64) & 0xFFFF) << 16)
            | ((self.res as u64) & 0xFFFF)
    }

    /// Parses one `OP kind=... var=... val=... res=...` line.
    pub fn parse_line(line: &str) -> Option<TraceEvent> {
        let mut parts = line.trim_end().split(' ');
        if parts.next()? != "OP" {
            return None;
        }
        let mut field = |name: &str| parts.next()?.strip_prefix(name)?.strip_prefix('=').map(str::to_owned);
        let op = match field("kind")?.as_str() {
            "new" => Behavior::New,
            "insert" => Behavior::Insert,
            "remove" => Behavior::Remove,
            "contains" => Behavior::Contains,
            _ => return None,
        };
        let var = field("var")?.parse().ok()?;
        let val = field("val")?.parse().ok()?;
        let res = field("res")?.parse().ok()?;
        if parts.next().is_some() {
            return None;
        }
        Some(TraceEvent { op, var, val, res })
    }
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "OP kind={} var={} val={} res={}", self.op.keyword(), self.var, self.val, self.res)
    }
}

pub fn fold_checksum(cs: u64, ev: &TraceEvent) -> u64 {
    cs.wrapping_mul(CHECKSUM_PRIME) ^ ev.encode()
}

/// Checksum of a whole event sequence.
pub fn checksum_of<'a>(events: impl IntoIterator<Item = &'a TraceEvent>) -> u64 {
    events.into_iter().fold(CHECKSUM_OFFSET, fold_checksum)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounts {
    pub new: u64,
    pub insert: u64,
    pub remove: u64,
    pub contains: u64,
}

impl OpCounts {
    pub fn total(&self) -> u64 {
        self.new + self.insert + self.remove + self.contains
    }

    fn bump(&mut self, op: Behavior) {
        match op {
            Behavior::New => self.new += 1,
            Behavior::Insert => self.insert += 1,
            Behavior::Remove => self.remove += 1,
            Behavior::Contains => self.contains += 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunStats {
    pub op_counts: OpCounts,
    pub max_live: u64,
    pub live_at_exit: u64,
    pub checksum: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExecConfig {
    pub path: u64,
    pub debug_trace: bool,
    /// Recount live references from the frame stack after every event and
    /// compare them with the objects' counters.
    pub audit_refcounts: bool,
}

impl ExecConfig {
    pub fn new(path: u64) -> Self {
        ExecConfig { path, debug_trace: false, audit_refcounts: false }
    }

    pub fn traced(path: u64) -> Self {
        ExecConfig { path, debug_trace: true, audit_refcounts: false }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Execution {
    /// Empty unless `debug_trace` was set.
    pub trace: Vec<TraceEvent>,
    pub stats: RunStats,
}

impl Execution {
    /// Trace lines followed by the `CHECKSUM` line, as an emitted program
    /// prints them in debug mode.
    pub fn render_output(&self) -> String {
        let mut out = String::new();
        for ev in &self.trace {
            out.push_str(&ev.to_string());
            out.push('\n');
        }
        out.push_str(&format!("CHECKSUM {}\n", self.stats.checksum));
        out
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("program has no operand plan")]
    Unplanned,
    #[error("invariant violated in func{function}: {message}")]
    Invariant { function: FuncId, message: String },
}

#[derive(Debug)]
enum Payload {
    Array(Vec<i64>),
    Sorted(Vec<i64>),
    Scalar(i64),
}

#[derive(Debug)]
struct HeapObject {
    id: u64,
    ref_count: u64,
    payload: Payload,
    live: bool,
}

type ObjRef = usize;

struct Frame {
    function: FuncId,
    slots: Vec<Option<ObjRef>>,
    data: Vec<ObjRef>,
    consumed: usize,
}

struct Machine<'p> {
    program: &'p Program,
    path: u64,
    trip_count: u32,
    container: ContainerKind,
    audit: bool,
    heap: Vec<HeapObject>,
    frames: Vec<Frame>,
    live: u64,
    /// Sum of `ref_count` over live objects.
    total_refs: u64,
    max_live: u64,
    checksum: u64,
    counts: OpCounts,
    trace: Option<Vec<TraceEvent>>,
    #[cfg(test)]
    faults: Faults,
}

#[cfg(test)]
#[derive(Default)]
struct Faults {
    /// Skip releasing unconsumed data entries on return.
    keep_data_on_return: bool,
    /// `(object id, count after change)` for every retain and release.
    refc_log: Vec<(u64, u64)>,
}

type Run<T> = Result<T, OracleError>;

impl<'p> Machine<'p> {
    fn fail<T>(&self, message: impl Into<String>) -> Run<T> {
        let function = self.frames.last().map_or(self.program.entry, |f| f.function);
        Err(OracleError::Invariant { function, message: message.into() })
    }

    fn frame(&mut self) -> &mut Frame {
        self.frames.last_mut().expect("a frame is active")
    }

    fn emit(&mut self, op: Behavior, var: u64, val: i64, res: i64) -> Run<()> {
        let ev = TraceEvent { op, var, val, res };
        self.checksum = fold_checksum(self.checksum, &ev);
        self.counts.bump(op);
        if let Some(trace) = &mut self.trace {
            trace.push(ev);
        }
        if self.audit {
            self.audit_refcounts()?;
        }
        Ok(())
    }

    fn retain(&mut self, obj: ObjRef) -> Run<()> {
        if !self.heap[obj].live {
            return self.fail(format!("retain of freed object {}", self.heap[obj].id));
        }
        self.heap[obj].ref_count += 1;
        self.total_refs += 1;
        #[cfg(test)]
        self.faults.refc_log.push((self.heap[obj].id, self.heap[obj].ref_count));
        Ok(())
    }

    fn release(&mut self, obj: ObjRef) -> Run<()> {
        if !self.heap[obj].live || self.heap[obj].ref_count == 0 {
            return self.fail(format!("release of freed object {}", self.heap[obj].id));
        }
        self.total_refs -= 1;
        let o = &mut self.heap[obj];
        o.ref_count -= 1;
        if o.ref_count == 0 {
            o.live = false;
            o.payload = Payload::Scalar(0);
            self.live -= 1;
        }
        #[cfg(test)]
        self.faults.refc_log.push((self.heap[obj].id, self.heap[obj].ref_count));
        Ok(())
    }

    fn allocate(&mut self) -> ObjRef {
        let payload = match self.container {
            ContainerKind::Array => Payload::Array(Vec::new()),
            ContainerKind::SortedList => Payload::Sorted(Vec::new()),
            ContainerKind::Scalar => Payload::Scalar(0),
        };
        let id = self.heap.len() as u64 + 1;
        self.heap.push(HeapObject { id, ref_count: 1, payload, live: true });
        self.live += 1;
        self.total_refs += 1;
        self.max_live = self.max_live.max(self.live);
        self.heap.len() - 1
    }

    fn trace_var(&self, obj: ObjRef, slot: Slot) -> u64 {
        match self.container {
            ContainerKind::Scalar => slot as u64,
            _ => self.heap[obj].id,
        }
    }

    fn call(&mut self, function: FuncId, data: Vec<ObjRef>) -> Run<()> {
        let f = &self.program.functions[function];
        self.frames.push(Frame { function, slots: vec![None; f.slot_count], data, consumed: 0 });
        self.block(&f.body)?;
        let frame = self.frames.last().expect("pushed above");
        let rest: Vec<ObjRef> = frame.data[frame.consumed..].to_vec();
        #[cfg(test)]
        let rest = if self.faults.keep_data_on_return { Vec::new() } else { rest };
        for obj in rest {
            self.release(obj)?;
        }
        self.frames.pop();
        Ok(())
    }

    fn bound(&mut self, slot: Slot) -> Run<ObjRef> {
        match self.frame().slots.get(slot).copied().flatten() {
            Some(obj) if self.heap[obj].live => Ok(obj),
            Some(obj) => self.fail(format!("use of freed object {}", self.heap[obj].id)),
            None => self.fail(format!("slot {slot} used while unbound")),
        }
    }

    fn block(&mut self, stmts: &'p [Stmt]) -> Run<()> {
        let mut defined: Vec<Slot> = Vec::new();
        for s in stmts {
            match s {
                Stmt::New { slot } => {
                    let frame = self.frame();
                    let (obj, res) = if frame.consumed < frame.data.len() {
                        frame.consumed += 1;
                        (frame.data[frame.consumed - 1], 0)
                    } else {
                        (self.allocate(), 1)
                    };
                    if self.frame().slots[*slot].is_some() {
                        return self.fail(format!("slot {slot} defined twice"));
                    }
                    self.frame().slots[*slot] = Some(obj);
                    defined.push(*slot);
                    let var = self.trace_var(obj, *slot);
                    self.emit(Behavior::New, var, 0, res)?;
                }
                Stmt::Op { kind, operand } => {
                    let Some(operand) = operand else {
                        return self.fail("operation without a planned operand");
                    };
                    let obj = self.bound(operand.slot)?;
                    let res = apply(&mut self.heap[obj].payload, *kind, operand.value);
                    let var = self.trace_var(obj, operand.slot);
                    let op = match kind {
                        OpKind::Insert => Behavior::Insert,
                        OpKind::Remove => Behavior::Remove,
                        OpKind::Contains => Behavior::Contains,
                    };
                    self.emit(op, var, operand.value, res)?;
                }
                Stmt::If { bit, cond, then, els } => {
                    self.block(cond)?;
                    if (self.path >> bit) & 1 == 1 {
                        self.block(then)?;
                    } else if let Some(e) = els {
                        self.block(e)?;
                    }
                }
                Stmt::Loop { cond, body } => {
                    for _ in 0..self.trip_count {
                        self.block(cond)?;
                        self.block(body)?;
                    }
                }
                Stmt::Call { callee, args } => {
                    let mut data = Vec::with_capacity(args.len());
                    for &slot in args {
                        let obj = self.bound(slot)?;
                        self.retain(obj)?;
                        data.push(obj);
                    }
                    self.call(*callee, data)?;
                }
            }
        }
        for slot in defined.into_iter().rev() {
            let obj = self.frame().slots[slot].take().expect("defined in this block");
            self.release(obj)?;
        }
        Ok(())
    }

    /// Recounts references held by frames (bound slots plus unconsumed data
    /// entries) and compares them with every object's counter.
    fn audit_refcounts(&self) -> Run<()> {
        let mut held: BTreeMap<ObjRef, u64> = BTreeMap::new();
        for frame in &self.frames {
            for obj in frame.slots.iter().flatten() {
                *held.entry(*obj).or_default() += 1;
            }
            for obj in &frame.data[frame.consumed..] {
                *held.entry(*obj).or_default() += 1;
            }
        }
        // Every held object must match exactly; the sums then rule out
        // counts on objects nothing holds.
        let mut held_total = 0;
        for (&idx, &refs) in &held {
            let o = &self.heap[idx];
            if !o.live {
                return self.fail(format!("freed object {} is still referenced", o.id));
            }
            if o.ref_count != refs {
                return self.fail(format!("object {} has refC {} but {} references", o.id, o.ref_count, refs));
            }
            held_total += refs;
        }
        if held_total != self.total_refs {
            return self
                .fail(format!("live objects hold {} counts but only {held_total} references exist", self.total_refs));
        }
        Ok(())
    }
}

fn apply(payload: &mut Payload, kind: OpKind, value: i64) -> i64 {
    match (payload, kind) {
        (Payload::Array(items), OpKind::Insert) => {
            items.push(value);
            items.len() as i64
        }
        (Payload::Array(items), OpKind::Remove) => match items.iter().position(|&x| x == value) {
            Some(i) => {
                items.remove(i);
                1
            }
            None => 0,
        },
        (Payload::Array(items), OpKind::Contains) => items.contains(&value) as i64,
        (Payload::Sorted(items), OpKind::Insert) => {
            let at = items.partition_point(|&x| x <= value);
            items.insert(at, value);
            items.len() as i64
        }
        (Payload::Sorted(items), OpKind::Remove) => match items.binary_search(&value) {
            Ok(i) => {
                items.remove(i);
                1
            }
            Err(_) => 0,
        },
        (Payload::Sorted(items), OpKind::Contains) => items.binary_search(&value).is_ok() as i64,
        (Payload::Scalar(v), OpKind::Insert) => {
            *v = v.wrapping_add(1);
            *v
        }
        (Payload::Scalar(v), OpKind::Remove) => {
            *v = v.wrapping_sub(1);
            *v
        }
        (Payload::Scalar(v), OpKind::Contains) => (*v == 0) as i64,
    }
}

fn machine<'p>(p: &'p Program, cfg: &ExecConfig) -> Run<Machine<'p>> {
    let plan = p.plan.ok_or(OracleError::Unplanned)?;
    Ok(Machine {
        program: p,
        path: cfg.path,
        trip_count: plan.trip_count,
        container: plan.container,
        audit: cfg.audit_refcounts,
        heap: Vec::new(),
        frames: Vec::new(),
        live: 0,
        total_refs: 0,
        max_live: 0,
        checksum: CHECKSUM_OFFSET,
        counts: OpCounts::default(),
        trace: cfg.debug_trace.then(Vec::new),
        #[cfg(test)]
        faults: Faults::default(),
    })
}

fn finish(m: Machine<'_>) -> Execution {
    Execution {
        trace: m.trace.unwrap_or_default(),
        stats: RunStats { op_counts: m.counts, max_live: m.max_live, live_at_exit: m.live, checksum: m.checksum },
    }
}

/// Runs the entry function of a planned program under `cfg.path`.
pub fn interpret(p: &Program, cfg: &ExecConfig) -> Result<Execution, OracleError> {
    let mut m = machine(p, cfg)?;
    m.call(p.entry, Vec::new())?;
    Ok(finish(m))
}

pub fn verify_no_leaks(stats: &RunStats) -> bool {
    stats.live_at_exit == 0
}
