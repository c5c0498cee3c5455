//! L-system specifications over the program alphabet: parsing, rewriting
//! and the canonical text form used as the function dedup key.
//!
//! Concrete syntax, one production per line:
//!
//! ```text
//! # comment
//! A = new B B
//! B = IF(LOOP(insert A contains), LOOP(insert A contains));
//! AXIOM = A          # optional, defaults to the first production's rhs
//! ```

use std::fmt;

use indexmap::IndexMap;
use thiserror::Error;

/// Default cap on the number of items a derivation may produce.
pub const DEFAULT_ITEM_CAP: usize = 100_000_000;

const RESERVED: [&str; 7] = ["IF", "LOOP", "CALL", "new", "insert", "remove", "contains"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Behavior {
    New,
    Insert,
    Remove,
    Contains,
}

impl Behavior {
    pub fn keyword(self) -> &'static str {
        match self {
            Behavior::New => "new",
            Behavior::Insert => "insert",
            Behavior::Remove => "remove",
            Behavior::Contains => "contains",
        }
    }

    fn from_keyword(word: &str) -> Option<Self> {
        match word {
            "new" => Some(Behavior::New),
            "insert" => Some(Behavior::Insert),
            "remove" => Some(Behavior::Remove),
            "contains" => Some(Behavior::Contains),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ConstructKind {
    If,
    Loop,
    Call,
}

impl ConstructKind {
    pub fn keyword(self) -> &'static str {
        match self {
            ConstructKind::If => "IF",
            ConstructKind::Loop => "LOOP",
            ConstructKind::Call => "CALL",
        }
    }

    fn from_keyword(word: &str) -> Option<Self> {
        match word {
            "IF" => Some(ConstructKind::If),
            "LOOP" => Some(ConstructKind::Loop),
            "CALL" => Some(ConstructKind::Call),
            _ => None,
        }
    }

    /// Accepted block counts. `LOOP` takes an optional condition block.
    pub fn arity(self) -> std::ops::RangeInclusive<usize> {
        match self {
            ConstructKind::If => 2..=3,
            ConstructKind::Loop => 1..=2,
            ConstructKind::Call => 1..=1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum SymbolItem {
    Terminal(Behavior),
    NonTerminal(String),
    Construct { kind: ConstructKind, blocks: Vec<ItemSeq> },
}

/// A tree-shaped L-string.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct ItemSeq(pub Vec<SymbolItem>);

impl ItemSeq {
    pub fn new(items: Vec<SymbolItem>) -> Self {
        ItemSeq(items)
    }

    pub fn items(&self) -> &[SymbolItem] {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Number of items, counting nested construct contents.
    pub fn item_count(&self) -> usize {
        self.0
            .iter()
            .map(|item| match item {
                SymbolItem::Construct { blocks, .. } => 1 + blocks.iter().map(ItemSeq::item_count).sum::<usize>(),
                _ => 1,
            })
            .sum()
    }

    /// Number of occurrences of one behavior terminal, at any depth.
    pub fn count_terminal(&self, which: Behavior) -> usize {
        self.0
            .iter()
            .map(|item| match item {
                SymbolItem::Terminal(b) if *b == which => 1,
                SymbolItem::Construct { blocks, .. } => blocks.iter().map(|b| b.count_terminal(which)).sum(),
                _ => 0,
            })
            .sum()
    }

    pub fn has_nonterminals(&self) -> bool {
        self.0.iter().any(|item| match item {
            SymbolItem::NonTerminal(_) => true,
            SymbolItem::Construct { blocks, .. } => blocks.iter().any(ItemSeq::has_nonterminals),
            SymbolItem::Terminal(_) => false,
        })
    }
}

impl fmt::Display for ItemSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, item) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            match item {
                SymbolItem::Terminal(b) => f.write_str(b.keyword())?,
                SymbolItem::NonTerminal(name) => f.write_str(name)?,
                SymbolItem::Construct { kind, blocks } => {
                    write!(f, "{}(", kind.keyword())?;
                    for (j, block) in blocks.iter().enumerate() {
                        if j > 0 {
                            f.write_str(",")?;
                        }
                        write!(f, "{block}")?;
                    }
                    f.write_str(")")?;
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Production {
    pub lhs: String,
    pub rhs: ItemSeq,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LSystemSpec {
    pub axiom: ItemSeq,
    pub productions: IndexMap<String, ItemSeq>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GrammarError {
    #[error("{line}:{column}: syntax error: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("{line}:{column}: duplicate production for `{name}`")]
    DuplicateProduction { name: String, line: usize, column: usize },
    #[error("{line}:{column}: {kind} takes {expected} blocks, found {found}")]
    Arity { kind: &'static str, expected: &'static str, found: usize, line: usize, column: usize },
    #[error("{line}:{column}: reserved word `{word}` cannot be used as a nonterminal")]
    ReservedWord { word: String, line: usize, column: usize },
    #[error("specification contains no productions and no AXIOM line")]
    Empty,
    #[error("derivation exceeds the item cap of {cap} (generation {generation} would hold {count} items)")]
    ItemCap { cap: usize, generation: usize, count: usize },
    #[error("nonterminal `{0}` cannot be serialized; prune the sequence first")]
    NonTerminalInCanonical(String),
}

pub type Result<T> = std::result::Result<T, GrammarError>;

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    LParen,
    RParen,
    Comma,
}

/// Token with its 1-based column.
type Spanned = (Tok, usize);

/// Tokenizes `text`, reporting columns shifted by `col_offset` characters.
fn lex_line(text: &str, line: usize, col_offset: usize) -> Result<Vec<Spanned>> {
    let mut out = Vec::new();
    let mut chars = text.chars().enumerate().peekable();
    while let Some(&(idx, c)) = chars.peek() {
        let col = col_offset + idx + 1;
        match c {
            '#' => break,
            c if c.is_whitespace() => {
                chars.next();
            }
            '(' | ')' | ',' => {
                chars.next();
                out.push((
                    match c {
                        '(' => Tok::LParen,
                        ')' => Tok::RParen,
                        _ => Tok::Comma,
                    },
                    col,
                ));
            }
            c if c.is_ascii_alphabetic() => {
                let mut word = String::new();
                while let Some(&(_, c)) = chars.peek() {
                    if c.is_ascii_alphanumeric() || c == '_' {
                        word.push(c);
                        chars.next();
                    } else {
                        break;
                    }
                }
                out.push((Tok::Ident(word), col));
            }
            other => {
                return Err(GrammarError::Syntax {
                    line,
                    column: col,
                    message: format!("unexpected character `{other}`"),
                })
            }
        }
    }
    Ok(out)
}

struct BodyParser<'t> {
    toks: &'t [Spanned],
    pos: usize,
    line: usize,
    end_column: usize,
}

impl BodyParser<'_> {
    fn peek(&self) -> Option<&Spanned> {
        self.toks.get(self.pos)
    }

    fn column(&self) -> usize {
        self.peek().map(|t| t.1).unwrap_or(self.end_column)
    }

    fn syntax(&self, message: impl Into<String>) -> GrammarError {
        GrammarError::Syntax { line: self.line, column: self.column(), message: message.into() }
    }

    /// Parses items until a `,` or `)` (not consumed) or the end of line.
    fn seq(&mut self) -> Result<ItemSeq> {
        let mut items = Vec::new();
        while let Some((tok, col)) = self.peek().cloned() {
            match tok {
                Tok::Comma | Tok::RParen => break,
                Tok::LParen => return Err(self.syntax("unexpected `(`")),
                Tok::Ident(word) => {
                    self.pos += 1;
                    items.push(self.item(word, col)?);
                }
            }
        }
        Ok(ItemSeq(items))
    }

    fn item(&mut self, word: String, col: usize) -> Result<SymbolItem> {
        if let Some(b) = Behavior::from_keyword(&word) {
            return Ok(SymbolItem::Terminal(b));
        }
        if let Some(kind) = ConstructKind::from_keyword(&word) {
            match self.peek() {
                Some((Tok::LParen, _)) => self.pos += 1,
                _ => return Err(GrammarError::ReservedWord { word, line: self.line, column: col }),
            }
            let mut blocks = vec![self.seq()?];
            loop {
                match self.peek() {
                    Some((Tok::Comma, _)) => {
                        self.pos += 1;
                        blocks.push(self.seq()?);
                    }
                    Some((Tok::RParen, _)) => {
                        self.pos += 1;
                        break;
                    }
                    _ => return Err(self.syntax(format!("unclosed `{}(`", kind.keyword()))),
                }
            }
            if !kind.arity().contains(&blocks.len()) {
                let expected = match kind {
                    ConstructKind::If => "2 or 3",
                    ConstructKind::Loop => "1 or 2",
                    ConstructKind::Call => "exactly 1",
                };
                return Err(GrammarError::Arity {
                    kind: kind.keyword(),
                    expected,
                    found: blocks.len(),
                    line: self.line,
                    column: col,
                });
            }
            return Ok(SymbolItem::Construct { kind, blocks });
        }
        Ok(SymbolItem::NonTerminal(word))
    }
}

fn is_reserved(word: &str) -> bool {
    RESERVED.contains(&word)
}

/// Parses a specification file.
pub fn parse_spec(text: &str) -> Result<LSystemSpec> {
    let mut productions: IndexMap<String, ItemSeq> = IndexMap::new();
    let mut axiom = None;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let raw = raw.strip_suffix('\r').unwrap_or(raw);
        let code = raw.split('#').next().unwrap_or("");
        if code.trim().is_empty() {
            continue;
        }
        let body = split_body(code, line_no)?;
        let (lhs, lhs_col) = production_name(&code[..body.start - 1], line_no)?;
        let offset = code[..body.start].chars().count();
        let toks = lex_line(body.text, line_no, offset)?;
        let end_column = offset + body.text.chars().count() + 1;
        let mut parser = BodyParser { toks: &toks, pos: 0, line: line_no, end_column };
        let rhs = parser.seq()?;
        if parser.pos != toks.len() {
            return Err(parser.syntax("unbalanced `,` or `)`"));
        }

        if lhs == "AXIOM" {
            axiom = Some(rhs);
            continue;
        }
        if is_reserved(&lhs) {
            return Err(GrammarError::ReservedWord { word: lhs, line: line_no, column: lhs_col });
        }
        if productions.contains_key(&lhs) {
            return Err(GrammarError::DuplicateProduction { name: lhs, line: line_no, column: lhs_col });
        }
        productions.insert(lhs, rhs);
    }

    let axiom = match axiom {
        Some(a) => a,
        None => productions.values().next().cloned().ok_or(GrammarError::Empty)?,
    };
    Ok(LSystemSpec { axiom, productions })
}

struct Body<'a> {
    text: &'a str,
    /// Byte offset of the body within the line.
    start: usize,
}

/// Locates the text after `NAME =`, without the trailing `;`.
fn split_body(code: &str, line: usize) -> Result<Body<'_>> {
    let eq = code.find('=').ok_or_else(|| GrammarError::Syntax {
        line,
        column: code.trim_end().chars().count() + 1,
        message: "expected `NAME = body`".into(),
    })?;
    let mut body = &code[eq + 1..];
    if let Some(stripped) = body.trim_end().strip_suffix(';') {
        body = stripped;
    }
    if let Some(pos) = body.find(';') {
        return Err(GrammarError::Syntax {
            line,
            column: code[..eq + 1 + pos].chars().count() + 1,
            message: "`;` is only allowed at the end of a line".into(),
        });
    }
    Ok(Body { text: body, start: eq + 1 })
}

fn production_name(head: &str, line: usize) -> Result<(String, usize)> {
    let toks = lex_line(head, line, 0)?;
    match toks.as_slice() {
        [(Tok::Ident(name), col)] => Ok((name.clone(), *col)),
        [] => Err(GrammarError::Syntax { line, column: 1, message: "missing production name".into() }),
        [_, (_, col), ..] | [(_, col)] => Err(GrammarError::Syntax {
            line,
            column: *col,
            message: "expected a single production name before `=`".into(),
        }),
    }
}

/// Pretty-prints a spec in the concrete syntax accepted by [`parse_spec`].
pub fn render_spec(spec: &LSystemSpec) -> String {
    let mut out = String::new();
    for (lhs, rhs) in &spec.productions {
        out.push_str(&format!("{lhs} = {rhs}\n"));
    }
    if spec.productions.values().next() != Some(&spec.axiom) {
        out.push_str(&format!("AXIOM = {}\n", spec.axiom));
    }
    out
}

/// Replaces every nonterminal that has a production by a copy of its rhs.
pub fn rewrite_once(spec: &LSystemSpec, s: &ItemSeq) -> ItemSeq {
    let mut out = Vec::with_capacity(s.0.len());
    for item in &s.0 {
        match item {
            SymbolItem::NonTerminal(name) => match spec.productions.get(name) {
                Some(rhs) => out.extend(rhs.0.iter().cloned()),
                None => out.push(item.clone()),
            },
            SymbolItem::Construct { kind, blocks } => out.push(SymbolItem::Construct {
                kind: *kind,
                blocks: blocks.iter().map(|b| rewrite_once(spec, b)).collect(),
            }),
            SymbolItem::Terminal(_) => out.push(item.clone()),
        }
    }
    ItemSeq(out)
}

/// Item count of `rewrite_once(spec, s)` without building it.
fn rewritten_count(s: &ItemSeq, rhs_counts: &IndexMap<&str, usize>) -> usize {
    s.0.iter()
        .map(|item| match item {
            SymbolItem::NonTerminal(name) => rhs_counts.get(name.as_str()).copied().unwrap_or(1),
            SymbolItem::Construct { blocks, .. } => {
                1 + blocks.iter().map(|b| rewritten_count(b, rhs_counts)).sum::<usize>()
            }
            SymbolItem::Terminal(_) => 1,
        })
        .fold(0usize, usize::saturating_add)
}

/// Applies [`rewrite_once`] `generations` times to the axiom.
pub fn derive(spec: &LSystemSpec, generations: usize) -> Result<ItemSeq> {
    derive_capped(spec, generations, DEFAULT_ITEM_CAP)
}

pub fn derive_capped(spec: &LSystemSpec, generations: usize, cap: usize) -> Result<ItemSeq> {
    let rhs_counts: IndexMap<&str, usize> =
        spec.productions.iter().map(|(k, v)| (k.as_str(), v.item_count())).collect();
    let mut current = spec.axiom.clone();
    let count = current.item_count();
    if count > cap {
        return Err(GrammarError::ItemCap { cap, generation: 0, count });
    }
    for generation in 1..=generations {
        let count = rewritten_count(&current, &rhs_counts);
        if count > cap {
            return Err(GrammarError::ItemCap { cap, generation, count });
        }
        let next = rewrite_once(spec, &current);
        if next == current {
            // fixpoint: further generations change nothing
            break;
        }
        current = next;
    }
    Ok(current)
}

/// Removes leftover nonterminals at every depth. Returns the pruned sequence
/// and the number of items dropped.
pub fn prune(s: &ItemSeq) -> (ItemSeq, usize) {
    let mut dropped = 0;
    let pruned = prune_into(s, &mut dropped);
    (pruned, dropped)
}

fn prune_into(s: &ItemSeq, dropped: &mut usize) -> ItemSeq {
    ItemSeq(
        s.0.iter()
            .filter_map(|item| match item {
                SymbolItem::NonTerminal(_) => {
                    *dropped += 1;
                    None
                }
                SymbolItem::Construct { kind, blocks } => Some(SymbolItem::Construct {
                    kind: *kind,
                    blocks: blocks.iter().map(|b| prune_into(b, dropped)).collect(),
                }),
                SymbolItem::Terminal(_) => Some(item.clone()),
            })
            .collect(),
    )
}

/// Deterministic text form of a pruned sequence: `new insert`, `CALL(insert)`,
/// `IF(,new,)`. Injective on sequences without nonterminals.
pub fn canonical_serialize(s: &ItemSeq) -> Result<String> {
    let mut out = String::new();
    write_canonical(s, &mut out)?;
    Ok(out)
}

fn write_canonical(s: &ItemSeq, out: &mut String) -> Result<()> {
    for (i, item) in s.0.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        match item {
            SymbolItem::Terminal(b) => out.push_str(b.keyword()),
            SymbolItem::NonTerminal(name) => return Err(GrammarError::NonTerminalInCanonical(name.clone())),
            SymbolItem::Construct { kind, blocks } => {
                out.push_str(kind.keyword());
                out.push('(');
                for (j, b) in blocks.iter().enumerate() {
                    if j > 0 {
                        out.push(',');
                    }
                    write_canonical(b, out)?;
                }
                out.push(')');
            }
        }
    }
    Ok(())
}

/// Parses a single body (no `NAME =` prefix), e.g. a canonical string.
pub fn parse_seq(text: &str) -> Result<ItemSeq> {
    let toks = lex_line(text, 1, 0)?;
    let end_column = text.chars().count() + 1;
    let mut parser = BodyParser { toks: &toks, pos: 0, line: 1, end_column };
    let seq = parser.seq()?;
    if parser.pos != toks.len() {
        return Err(parser.syntax("unbalanced `,` or `)`"));
    }
    Ok(seq)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BRANCHES: &str = "A = new B B\nB = IF(LOOP(insert A contains), LOOP(insert A contains))";

    const CONTAINER_INIT: &str = "A0 = A1 A1 A1 A1 A1 A1 A1 A1;
A1 = A2 A2 A2 A2 A2 A2 A2 A2;
A2 = A3 A3 A3 A3 A3 A3 A3 A3;
A3 = insert insert;
";

    fn seq(text: &str) -> ItemSeq {
        parse_seq(text).unwrap()
    }

    #[test]
    fn parses_two_production_spec() {
        let spec = parse_spec(BRANCHES).unwrap();
        assert_eq!(spec.productions.len(), 2);
        assert_eq!(spec.axiom.to_string(), "new B B");
    }

    #[test]
    fn empty_rhs_gives_empty_axiom() {
        let spec = parse_spec("A = ").unwrap();
        assert!(spec.axiom.is_empty());
    }

    #[test]
    fn if_with_one_block_is_an_arity_error() {
        let err = parse_spec("A = IF(insert)").unwrap_err();
        assert!(matches!(err, GrammarError::Arity { kind: "IF", found: 1, line: 1, column: 5, .. }), "{err:?}");
    }

    #[test]
    fn call_and_loop_arity() {
        assert!(matches!(parse_spec("A = CALL(a, b)"), Err(GrammarError::Arity { kind: "CALL", .. })));
        assert!(matches!(parse_spec("A = LOOP(,,)"), Err(GrammarError::Arity { kind: "LOOP", .. })));
        assert!(parse_spec("A = LOOP(CALL(B) C)").is_ok());
        assert!(parse_spec("A = IF(,,)").is_ok());
    }

    #[test]
    fn semicolons_and_comments() {
        let spec = parse_spec(CONTAINER_INIT).unwrap();
        assert_eq!(spec.productions.len(), 4);
        let spec = parse_spec("# header\nA = new B; # trailing\n\nB = insert\r\n").unwrap();
        assert_eq!(spec.productions["A"].to_string(), "new B");
        assert_eq!(spec.productions["B"].to_string(), "insert");
        assert!(matches!(parse_spec("A = new; insert"), Err(GrammarError::Syntax { line: 1, column: 8, .. })));
    }

    #[test]
    fn explicit_axiom_overrides_first_rule() {
        let spec = parse_spec("A = insert\nAXIOM = A A").unwrap();
        assert_eq!(spec.axiom.to_string(), "A A");
        assert_eq!(spec.productions.len(), 1);
    }

    #[test]
    fn duplicate_lhs_is_rejected() {
        let err = parse_spec("A = new\nB = insert\nA = remove").unwrap_err();
        assert_eq!(err, GrammarError::DuplicateProduction { name: "A".into(), line: 3, column: 1 });
    }

    #[test]
    fn reserved_words() {
        assert!(matches!(parse_spec("IF = new"), Err(GrammarError::ReservedWord { .. })));
        assert!(matches!(parse_spec("new = new"), Err(GrammarError::ReservedWord { .. })));
        assert!(matches!(parse_spec("A = insert CALL"), Err(GrammarError::ReservedWord { column: 12, .. })));
    }

    #[test]
    fn syntax_errors_carry_positions() {
        assert!(matches!(parse_spec("A = IF(new, insert"), Err(GrammarError::Syntax { line: 1, .. })));
        assert!(matches!(parse_spec("A = new\nB = insert )"), Err(GrammarError::Syntax { line: 2, column: 12, .. })));
        assert!(matches!(parse_spec("A = n$w"), Err(GrammarError::Syntax { column: 6, .. })));
        assert!(matches!(parse_spec("just words"), Err(GrammarError::Syntax { .. })));
        assert_eq!(parse_spec("# nothing\n"), Err(GrammarError::Empty));
    }

    #[test]
    fn rewrite_examples() {
        let spec = parse_spec(BRANCHES).unwrap();
        assert_eq!(rewrite_once(&spec, &seq("A")).to_string(), "new B B");
        assert_eq!(
            rewrite_once(&spec, &seq("new B B")).to_string(),
            "new IF(LOOP(insert A contains),LOOP(insert A contains)) \
             IF(LOOP(insert A contains),LOOP(insert A contains))"
        );
        let terminals = seq("new insert IF(remove,contains) CALL(new)");
        assert_eq!(rewrite_once(&spec, &terminals), terminals);
    }

    #[test]
    fn unknown_nonterminals_rewrite_to_themselves() {
        let spec = parse_spec("A = B insert").unwrap();
        assert_eq!(rewrite_once(&spec, &seq("A")).to_string(), "B insert");
        assert_eq!(rewrite_once(&spec, &seq("B insert")).to_string(), "B insert");
    }

    #[test]
    fn container_init_yields_1024_inserts() {
        let spec = parse_spec(CONTAINER_INIT).unwrap();
        let derived = derive(&spec, 4).unwrap();
        assert_eq!(derived.count_terminal(Behavior::Insert), 1024);
        assert_eq!(derived.item_count(), 1024);
        // the axiom is A0's rhs, so the gadget is already fully expanded at 3
        assert_eq!(derive(&spec, 3).unwrap(), derived);
        assert_eq!(derive(&spec, 2).unwrap().count_terminal(Behavior::Insert), 0);
    }

    #[test]
    fn zero_generations_is_the_axiom() {
        let spec = parse_spec(BRANCHES).unwrap();
        assert_eq!(derive(&spec, 0).unwrap(), spec.axiom);
    }

    #[test]
    fn insert_count_grows_with_generation() {
        let spec = parse_spec(BRANCHES).unwrap();
        let inserts = |g| derive(&spec, g).unwrap().count_terminal(Behavior::Insert);
        // hand count: g1 = two IFs with two loops each; g2 only rewrites A;
        // g3 turns the 8 B's produced by g2 into IFs again (8 * 2 new inserts)
        assert_eq!(inserts(0), 0);
        assert_eq!(inserts(1), 4);
        assert_eq!(inserts(2), 4);
        assert_eq!(inserts(3), 20);
        // A and B alternate, so inserts only grow on every other generation
        for g in 4..=6 {
            assert!(inserts(g) <= inserts(g + 1));
            assert!(inserts(g) < inserts(g + 2));
        }
        let terminals = |g| {
            let d = derive(&spec, g).unwrap();
            [Behavior::New, Behavior::Insert, Behavior::Remove, Behavior::Contains]
                .iter()
                .map(|b| d.count_terminal(*b))
                .sum::<usize>()
        };
        for g in 4..8 {
            assert!(terminals(g) < terminals(g + 1));
        }
    }

    #[test]
    fn item_cap_fails_fast() {
        let spec = parse_spec(CONTAINER_INIT).unwrap();
        let err = derive_capped(&spec, 4, 1000).unwrap_err();
        assert_eq!(err, GrammarError::ItemCap { cap: 1000, generation: 3, count: 1024 });
        assert!(derive_capped(&spec, 4, 1024).is_ok());
    }

    #[test]
    fn canonical_examples() {
        let s = ItemSeq(vec![SymbolItem::Terminal(Behavior::New), SymbolItem::Terminal(Behavior::Insert)]);
        assert_eq!(canonical_serialize(&s).unwrap(), "new insert");
        let call = ItemSeq(vec![SymbolItem::Construct {
            kind: ConstructKind::Call,
            blocks: vec![ItemSeq(vec![SymbolItem::Terminal(Behavior::Insert)])],
        }]);
        assert_eq!(canonical_serialize(&call).unwrap(), "CALL(insert)");
        assert_eq!(canonical_serialize(&seq("IF( , new ,)")).unwrap(), "IF(,new,)");
        assert_eq!(canonical_serialize(&seq("new A")), Err(GrammarError::NonTerminalInCanonical("A".into())));
    }

    #[test]
    fn prune_drops_nonterminals_everywhere() {
        let (pruned, dropped) = prune(&seq("A new IF(B, insert C, D) CALL(E)"));
        assert_eq!(pruned.to_string(), "new IF(,insert,) CALL()");
        assert_eq!(dropped, 5);
    }

    #[test]
    fn render_round_trips() {
        for text in [BRANCHES, CONTAINER_INIT, "A = insert\nAXIOM = A A", "A = "] {
            let spec = parse_spec(text).unwrap();
            assert_eq!(parse_spec(&render_spec(&spec)).unwrap(), spec);
        }
    }
}
