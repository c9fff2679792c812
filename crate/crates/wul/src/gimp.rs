//! The base imperative language, regular tree grammars over it, and partial
//! programs. A partial program is a term whose leaves may reference grammar
//! nonterminals; a grammar maps each nonterminal to an ordered list of
//! right-hand-side terms of the same sort.

use std::collections::BTreeSet;
use std::fmt;

use indexmap::{IndexMap, IndexSet};
use thiserror::Error;

use crate::sexp::{self, Pos, Sexp};

/// Reserved name for the value of the last evaluated integer expression.
pub const ET: &str = "e_t";
/// Reserved name for the value of the last evaluated Boolean expression.
pub const BT: &str = "b_t";
/// Reserved base name for the guard-snapshot vector of branching rules.
pub const B_LOOP: &str = "b_loop";

pub fn is_reserved_ident(name: &str) -> bool {
    name == ET || name == BT || name == B_LOOP || name.starts_with("b_loop")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sort {
    Stmt,
    IntExpr,
    BoolExpr,
}

impl fmt::Display for Sort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sort::Stmt => write!(f, "Stmt"),
            Sort::IntExpr => write!(f, "IntExpr"),
            Sort::BoolExpr => write!(f, "BoolExpr"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CompOp {
    Lt,
    Eq,
}

/// A term over the base grammar. Leaves may be nonterminal references, in
/// which case the term denotes a set of programs. Arity is fixed per
/// constructor by the enum shape.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum GimpTerm {
    IntLit(i64),
    BoolLit(bool),
    Var(String),
    Plus(Box<GimpTerm>, Box<GimpTerm>),
    Not(Box<GimpTerm>),
    And(Box<GimpTerm>, Box<GimpTerm>),
    Comp(CompOp, Box<GimpTerm>, Box<GimpTerm>),
    Assign(String, Box<GimpTerm>),
    Seq(Box<GimpTerm>, Box<GimpTerm>),
    IfThenElse(Box<GimpTerm>, Box<GimpTerm>, Box<GimpTerm>),
    While(Box<GimpTerm>, Box<GimpTerm>),
    Skip,
    NonterminalRef(String),
}

impl GimpTerm {
    pub fn plus(a: GimpTerm, b: GimpTerm) -> GimpTerm {
        GimpTerm::Plus(Box::new(a), Box::new(b))
    }

    pub fn assign(x: &str, rhs: GimpTerm) -> GimpTerm {
        GimpTerm::Assign(x.to_string(), Box::new(rhs))
    }

    pub fn seq(a: GimpTerm, b: GimpTerm) -> GimpTerm {
        GimpTerm::Seq(Box::new(a), Box::new(b))
    }

    pub fn ite(g: GimpTerm, t: GimpTerm, e: GimpTerm) -> GimpTerm {
        GimpTerm::IfThenElse(Box::new(g), Box::new(t), Box::new(e))
    }

    pub fn while_loop(g: GimpTerm, body: GimpTerm) -> GimpTerm {
        GimpTerm::While(Box::new(g), Box::new(body))
    }

    pub fn nt(name: &str) -> GimpTerm {
        GimpTerm::NonterminalRef(name.to_string())
    }

    pub fn is_closed(&self) -> bool {
        match self {
            GimpTerm::NonterminalRef(_) => false,
            _ => self.children().iter().all(|c| c.is_closed()),
        }
    }

    pub fn children(&self) -> Vec<&GimpTerm> {
        match self {
            GimpTerm::IntLit(_)
            | GimpTerm::BoolLit(_)
            | GimpTerm::Var(_)
            | GimpTerm::Skip
            | GimpTerm::NonterminalRef(_) => vec![],
            GimpTerm::Not(a) => vec![a],
            GimpTerm::Assign(_, a) => vec![a],
            GimpTerm::Plus(a, b)
            | GimpTerm::And(a, b)
            | GimpTerm::Comp(_, a, b)
            | GimpTerm::Seq(a, b)
            | GimpTerm::While(a, b) => vec![a, b],
            GimpTerm::IfThenElse(a, b, c) => vec![a, b, c],
        }
    }

    /// Nonterminal names referenced anywhere in the term.
    pub fn nonterminal_refs(&self, out: &mut IndexSet<String>) {
        if let GimpTerm::NonterminalRef(n) = self {
            out.insert(n.clone());
        }
        for c in self.children() {
            c.nonterminal_refs(out);
        }
    }

    /// Variables assigned anywhere in the term itself (not through refs).
    fn direct_assigned_vars(&self, out: &mut IndexSet<String>) {
        if let GimpTerm::Assign(x, _) = self {
            out.insert(x.clone());
        }
        for c in self.children() {
            c.direct_assigned_vars(out);
        }
    }

    /// Variables read anywhere in the term itself (not through refs).
    pub fn direct_read_vars(&self, out: &mut IndexSet<String>) {
        if let GimpTerm::Var(x) = self {
            out.insert(x.clone());
        }
        for c in self.children() {
            c.direct_read_vars(out);
        }
    }
}

impl fmt::Display for GimpTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GimpTerm::IntLit(n) => write!(f, "{n}"),
            GimpTerm::BoolLit(b) => write!(f, "{b}"),
            GimpTerm::Var(x) => write!(f, "{x}"),
            GimpTerm::Plus(a, b) => write!(f, "(+ {a} {b})"),
            GimpTerm::Not(a) => write!(f, "(not {a})"),
            GimpTerm::And(a, b) => write!(f, "(and {a} {b})"),
            GimpTerm::Comp(CompOp::Lt, a, b) => write!(f, "(< {a} {b})"),
            GimpTerm::Comp(CompOp::Eq, a, b) => write!(f, "(= {a} {b})"),
            GimpTerm::Assign(x, e) => write!(f, "(:= {x} {e})"),
            GimpTerm::Seq(a, b) => write!(f, "(seq {a} {b})"),
            GimpTerm::IfThenElse(g, t, e) => write!(f, "(if {g} {t} {e})"),
            GimpTerm::While(g, s) => write!(f, "(while {g} {s})"),
            GimpTerm::Skip => write!(f, "skip"),
            GimpTerm::NonterminalRef(n) => write!(f, "{n}"),
        }
    }
}

#[derive(Debug, Error)]
pub enum GrammarError {
    #[error("{0}")]
    Sexp(#[from] sexp::SexpError),
    #[error("{pos}: expected {expected}, got `{got}`")]
    Malformed { pos: Pos, expected: &'static str, got: String },
    #[error("{pos}: undeclared nonterminal `{name}`")]
    UndeclaredNonterminal { pos: Pos, name: String },
    #[error("{pos}: duplicate nonterminal `{name}`")]
    DuplicateNonterminal { pos: Pos, name: String },
    #[error("{pos}: production of `{nonterminal}` has sort {found}, declared {declared}")]
    ProductionSort { pos: Pos, nonterminal: String, found: Sort, declared: Sort },
    #[error("{pos}: sort mismatch: expected {expected} in `{context}`")]
    SortMismatch { pos: Pos, expected: Sort, context: String },
    #[error("{pos}: reserved identifier `{name}` may not appear in user programs")]
    ReservedIdent { pos: Pos, name: String },
    #[error("unknown nonterminal `{0}`")]
    UnknownNonterminal(String),
    #[error("grammar has no nonterminals")]
    Empty,
}

/// A regular tree grammar over the base language.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rtg {
    /// Declaration order is preserved; HP/GrmDisj hypotheses follow it.
    nonterminals: IndexMap<String, Sort>,
    productions: IndexMap<String, Vec<GimpTerm>>,
    start: String,
}

impl Rtg {
    pub fn new(
        decls: Vec<(String, Sort, Vec<GimpTerm>)>,
        start: Option<String>,
    ) -> Result<Rtg, GrammarError> {
        let mut nonterminals = IndexMap::new();
        let mut productions = IndexMap::new();
        for (name, sort, rhss) in decls {
            if nonterminals.insert(name.clone(), sort).is_some() {
                return Err(GrammarError::DuplicateNonterminal {
                    pos: Pos { line: 0, col: 0 },
                    name,
                });
            }
            productions.insert(name, rhss);
        }
        let start = match start {
            Some(s) => s,
            None => nonterminals.keys().next().cloned().ok_or(GrammarError::Empty)?,
        };
        let g = Rtg { nonterminals, productions, start };
        g.validate()?;
        Ok(g)
    }

    fn validate(&self) -> Result<(), GrammarError> {
        if !self.nonterminals.contains_key(&self.start) {
            return Err(GrammarError::UnknownNonterminal(self.start.clone()));
        }
        for (name, rhss) in &self.productions {
            let declared = self.nonterminals[name];
            for rhs in rhss {
                let found = self.sort_of(rhs).map_err(|e| match e {
                    GrammarError::UnknownNonterminal(n) => GrammarError::UndeclaredNonterminal {
                        pos: Pos { line: 0, col: 0 },
                        name: n,
                    },
                    other => other,
                })?;
                if found != declared {
                    return Err(GrammarError::ProductionSort {
                        pos: Pos { line: 0, col: 0 },
                        nonterminal: name.clone(),
                        found,
                        declared,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn start(&self) -> &str {
        &self.start
    }

    pub fn nonterminals(&self) -> impl Iterator<Item = (&str, Sort)> {
        self.nonterminals.iter().map(|(n, s)| (n.as_str(), *s))
    }

    pub fn sort(&self, n: &str) -> Result<Sort, GrammarError> {
        self.nonterminals
            .get(n)
            .copied()
            .ok_or_else(|| GrammarError::UnknownNonterminal(n.to_string()))
    }

    pub fn productions(&self, n: &str) -> Result<&[GimpTerm], GrammarError> {
        self.productions
            .get(n)
            .map(|v| v.as_slice())
            .ok_or_else(|| GrammarError::UnknownNonterminal(n.to_string()))
    }

    /// Sort of a (possibly partial) term, checking the sort discipline.
    pub fn sort_of(&self, t: &GimpTerm) -> Result<Sort, GrammarError> {
        let pos = Pos { line: 0, col: 0 };
        let expect = |t: &GimpTerm, want: Sort, ctx: &str| -> Result<(), GrammarError> {
            let got = self.sort_of(t)?;
            if got == want {
                Ok(())
            } else {
                Err(GrammarError::SortMismatch { pos, expected: want, context: ctx.to_string() })
            }
        };
        match t {
            GimpTerm::IntLit(_) | GimpTerm::Var(_) => Ok(Sort::IntExpr),
            GimpTerm::BoolLit(_) => Ok(Sort::BoolExpr),
            GimpTerm::Plus(a, b) => {
                expect(a, Sort::IntExpr, "+")?;
                expect(b, Sort::IntExpr, "+")?;
                Ok(Sort::IntExpr)
            }
            GimpTerm::Not(a) => {
                expect(a, Sort::BoolExpr, "not")?;
                Ok(Sort::BoolExpr)
            }
            GimpTerm::And(a, b) => {
                expect(a, Sort::BoolExpr, "and")?;
                expect(b, Sort::BoolExpr, "and")?;
                Ok(Sort::BoolExpr)
            }
            GimpTerm::Comp(_, a, b) => {
                expect(a, Sort::IntExpr, "comparison")?;
                expect(b, Sort::IntExpr, "comparison")?;
                Ok(Sort::BoolExpr)
            }
            GimpTerm::Assign(_, e) => {
                expect(e, Sort::IntExpr, ":=")?;
                Ok(Sort::Stmt)
            }
            GimpTerm::Seq(a, b) => {
                expect(a, Sort::Stmt, "seq")?;
                expect(b, Sort::Stmt, "seq")?;
                Ok(Sort::Stmt)
            }
            GimpTerm::IfThenElse(g, a, b) => {
                expect(g, Sort::BoolExpr, "if guard")?;
                expect(a, Sort::Stmt, "if branch")?;
                expect(b, Sort::Stmt, "if branch")?;
                Ok(Sort::Stmt)
            }
            GimpTerm::While(g, s) => {
                expect(g, Sort::BoolExpr, "while guard")?;
                expect(s, Sort::Stmt, "while body")?;
                Ok(Sort::Stmt)
            }
            GimpTerm::Skip => Ok(Sort::Stmt),
            GimpTerm::NonterminalRef(n) => self.sort(n),
        }
    }

    /// Nonterminals reachable from `n` (through any chain of references),
    /// excluding `n` itself unless it reaches itself. Deterministic order.
    pub fn reachable(&self, n: &str) -> Result<IndexSet<String>, GrammarError> {
        self.productions(n)?;
        let mut seen: IndexSet<String> = IndexSet::new();
        let mut work: Vec<String> = vec![n.to_string()];
        while let Some(m) = work.pop() {
            let mut refs = IndexSet::new();
            for rhs in self.productions(&m)? {
                rhs.nonterminal_refs(&mut refs);
            }
            for r in refs {
                if seen.insert(r.clone()) {
                    work.push(r);
                }
            }
        }
        Ok(seen)
    }

    /// True iff `n` can reach itself in the production-reference graph.
    pub fn is_recursive(&self, n: &str) -> Result<bool, GrammarError> {
        Ok(self.reachable(n)?.contains(n))
    }

    /// Program variables assignable by any program derivable from `n`,
    /// in first-occurrence order over a production-order walk.
    pub fn assignable_vars(&self, n: &str) -> Result<IndexSet<String>, GrammarError> {
        let mut nts = IndexSet::new();
        nts.insert(n.to_string());
        for m in self.reachable(n)? {
            nts.insert(m);
        }
        let mut out = IndexSet::new();
        for m in &nts {
            for rhs in self.productions(m)? {
                rhs.direct_assigned_vars(&mut out);
            }
        }
        Ok(out)
    }

    /// Assignable variables of a partial program (its own assignments plus
    /// those of every referenced nonterminal).
    pub fn assignable_vars_of_term(&self, t: &GimpTerm) -> Result<IndexSet<String>, GrammarError> {
        let mut out = IndexSet::new();
        t.direct_assigned_vars(&mut out);
        let mut refs = IndexSet::new();
        t.nonterminal_refs(&mut refs);
        for n in refs {
            for v in self.assignable_vars(&n)? {
                out.insert(v);
            }
        }
        Ok(out)
    }

    /// All program variables appearing anywhere in the grammar or term.
    pub fn all_program_vars(&self, extra: &GimpTerm) -> IndexSet<String> {
        let mut out = IndexSet::new();
        for rhss in self.productions.values() {
            for rhs in rhss {
                rhs.direct_read_vars(&mut out);
                rhs.direct_assigned_vars(&mut out);
            }
        }
        extra.direct_read_vars(&mut out);
        extra.direct_assigned_vars(&mut out);
        out
    }

    /// Canonical fingerprint of the sub-grammar reachable from `n`:
    /// nonterminals are renamed in first-visit order before hashing, so
    /// alpha-renamed grammars with identical structure collide.
    pub fn fingerprint(&self, n: &str) -> Result<String, GrammarError> {
        use sha2::{Digest, Sha256};
        let mut order: IndexSet<String> = IndexSet::new();
        let mut work = vec![n.to_string()];
        while let Some(m) = work.pop() {
            if !order.insert(m.clone()) {
                continue;
            }
            let mut refs = IndexSet::new();
            for rhs in self.productions(&m)? {
                rhs.nonterminal_refs(&mut refs);
            }
            // Depth-first in reverse so the first reference is visited first.
            for r in refs.into_iter().rev() {
                if !order.contains(&r) {
                    work.push(r);
                }
            }
        }
        let rename = |name: &str| -> String {
            format!("%{}", order.get_index_of(name).unwrap())
        };
        fn render(t: &GimpTerm, order: &IndexSet<String>, out: &mut String) {
            match t {
                GimpTerm::NonterminalRef(n) => {
                    out.push('%');
                    out.push_str(&order.get_index_of(n).unwrap().to_string());
                }
                GimpTerm::IntLit(_)
                | GimpTerm::BoolLit(_)
                | GimpTerm::Var(_)
                | GimpTerm::Skip => out.push_str(&t.to_string()),
                _ => {
                    out.push('(');
                    out.push_str(match t {
                        GimpTerm::Plus(..) => "+",
                        GimpTerm::Not(..) => "not",
                        GimpTerm::And(..) => "and",
                        GimpTerm::Comp(CompOp::Lt, ..) => "<",
                        GimpTerm::Comp(CompOp::Eq, ..) => "=",
                        GimpTerm::Assign(x, _) => return {
                            out.push_str(":= ");
                            out.push_str(x);
                            out.push(' ');
                            render(t.children()[0], order, out);
                            out.push(')');
                        },
                        GimpTerm::Seq(..) => "seq",
                        GimpTerm::IfThenElse(..) => "if",
                        GimpTerm::While(..) => "while",
                        _ => unreachable!(),
                    });
                    for c in t.children() {
                        out.push(' ');
                        render(c, order, out);
                    }
                    out.push(')');
                }
            }
        }
        let mut text = String::new();
        for m in &order {
            text.push_str(&format!("(nonterm {} {}", rename(m), self.sort(m)?));
            for rhs in self.productions(m)? {
                text.push(' ');
                render(rhs, &order, &mut text);
            }
            text.push_str(")\n");
        }
        let mut hasher = Sha256::new();
        hasher.update(text.as_bytes());
        Ok(format!("{:x}", hasher.finalize()))
    }
}

/// Variable profile of a set of programs: assignable program variables
/// (plus e_t/b_t for expression sorts), their ghost partners, and their
/// poststate partners. e_t/b_t get poststate partners but no ghosts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarProfile {
    pub x_vars: Vec<String>,
    pub z_vars: Vec<String>,
    pub y_vars: Vec<String>,
}

impl VarProfile {
    /// Pairs of (mutable program var, ghost partner).
    pub fn xz_pairs(&self) -> Vec<(String, String)> {
        self.x_vars.iter().cloned().zip(self.z_vars.iter().cloned()).collect()
    }

    /// Pairs of (x var, poststate partner), covering e_t/b_t as well.
    pub fn xy_pairs(&self) -> Vec<(String, String)> {
        self.x_vars.iter().cloned().zip(self.y_vars.iter().cloned()).collect()
    }
}

/// Deterministic fresh-name source. Base names that collide with taken
/// identifiers get a numeric suffix from a single counter.
#[derive(Debug, Clone)]
pub struct FreshNames {
    taken: BTreeSet<String>,
    counter: u32,
}

impl FreshNames {
    pub fn new<I: IntoIterator<Item = String>>(taken: I) -> FreshNames {
        FreshNames { taken: taken.into_iter().collect(), counter: 0 }
    }

    pub fn reserve(&mut self, name: &str) {
        self.taken.insert(name.to_string());
    }

    pub fn fresh(&mut self, base: &str) -> String {
        if self.taken.insert(base.to_string()) {
            return base.to_string();
        }
        loop {
            self.counter += 1;
            let cand = format!("{base}{}", self.counter);
            if self.taken.insert(cand.clone()) {
                return cand;
            }
        }
    }
}

/// Compute the variable profile (Design Decisions fresh-name discipline:
/// ghosts are `<var>_z`, poststates `<var>_y`, counter suffix on collision).
pub fn var_profile_of(
    sort: Sort,
    assignable: &IndexSet<String>,
    fresh: &mut FreshNames,
) -> VarProfile {
    let mut x_vars: Vec<String> = assignable.iter().cloned().collect();
    match sort {
        Sort::IntExpr => x_vars.push(ET.to_string()),
        Sort::BoolExpr => x_vars.push(BT.to_string()),
        Sort::Stmt => {}
    }
    let mut z_vars = Vec::new();
    let mut y_vars = Vec::new();
    for x in &x_vars {
        if x != ET && x != BT {
            z_vars.push(fresh.fresh(&format!("{x}_z")));
        }
    }
    for x in &x_vars {
        y_vars.push(fresh.fresh(&format!("{x}_y")));
    }
    VarProfile { x_vars, z_vars, y_vars }
}

pub fn var_profile(g: &Rtg, n: &str, fresh: &mut FreshNames) -> Result<VarProfile, GrammarError> {
    Ok(var_profile_of(g.sort(n)?, &g.assignable_vars(n)?, fresh))
}

// ---------------------------------------------------------------------------
// Parsing

fn ident(s: &Sexp, what: &'static str) -> Result<String, GrammarError> {
    match s.atom() {
        Some(a) if a.parse::<i64>().is_err() && !a.is_empty() => Ok(a.to_string()),
        _ => Err(GrammarError::Malformed { pos: s.pos(), expected: what, got: s.to_string() }),
    }
}

/// Parse a term; `nts` is the set of declared nonterminal names (an atom in
/// that set becomes a reference, any other symbol a program variable).
pub fn parse_term(s: &Sexp, nts: &IndexSet<String>) -> Result<GimpTerm, GrammarError> {
    match s {
        Sexp::Atom(a, pos) => {
            if let Ok(n) = a.parse::<i64>() {
                return Ok(GimpTerm::IntLit(n));
            }
            match a.as_str() {
                "true" => Ok(GimpTerm::BoolLit(true)),
                "false" => Ok(GimpTerm::BoolLit(false)),
                "skip" => Ok(GimpTerm::Skip),
                name if nts.contains(name) => Ok(GimpTerm::nt(name)),
                name if is_reserved_ident(name) => {
                    Err(GrammarError::ReservedIdent { pos: *pos, name: name.to_string() })
                }
                name => Ok(GimpTerm::Var(name.to_string())),
            }
        }
        Sexp::List(items, pos) => {
            // Accept a singleton wrapper around an atom production, e.g. "(2)".
            if items.len() == 1 && items[0].atom().is_some() {
                return parse_term(&items[0], nts);
            }
            let head = items
                .first()
                .and_then(|h| h.atom())
                .ok_or(GrammarError::Malformed {
                    pos: *pos,
                    expected: "operator",
                    got: s.to_string(),
                })?;
            let arity = |want: usize| -> Result<(), GrammarError> {
                if items.len() == want + 1 {
                    Ok(())
                } else {
                    Err(GrammarError::Malformed {
                        pos: *pos,
                        expected: "correct operator arity",
                        got: s.to_string(),
                    })
                }
            };
            match head {
                "+" => {
                    arity(2)?;
                    Ok(GimpTerm::plus(parse_term(&items[1], nts)?, parse_term(&items[2], nts)?))
                }
                "not" => {
                    arity(1)?;
                    Ok(GimpTerm::Not(Box::new(parse_term(&items[1], nts)?)))
                }
                "and" => {
                    arity(2)?;
                    Ok(GimpTerm::And(
                        Box::new(parse_term(&items[1], nts)?),
                        Box::new(parse_term(&items[2], nts)?),
                    ))
                }
                "<" => {
                    arity(2)?;
                    Ok(GimpTerm::Comp(
                        CompOp::Lt,
                        Box::new(parse_term(&items[1], nts)?),
                        Box::new(parse_term(&items[2], nts)?),
                    ))
                }
                "=" | "==" => {
                    arity(2)?;
                    Ok(GimpTerm::Comp(
                        CompOp::Eq,
                        Box::new(parse_term(&items[1], nts)?),
                        Box::new(parse_term(&items[2], nts)?),
                    ))
                }
                ":=" => {
                    arity(2)?;
                    let x = ident(&items[1], "assignment target")?;
                    if nts.contains(&x) || is_reserved_ident(&x) {
                        return Err(GrammarError::ReservedIdent { pos: items[1].pos(), name: x });
                    }
                    Ok(GimpTerm::assign(&x, parse_term(&items[2], nts)?))
                }
                "seq" => {
                    arity(2)?;
                    Ok(GimpTerm::seq(parse_term(&items[1], nts)?, parse_term(&items[2], nts)?))
                }
                "if" => {
                    arity(3)?;
                    Ok(GimpTerm::ite(
                        parse_term(&items[1], nts)?,
                        parse_term(&items[2], nts)?,
                        parse_term(&items[3], nts)?,
                    ))
                }
                "while" => {
                    arity(2)?;
                    Ok(GimpTerm::while_loop(
                        parse_term(&items[1], nts)?,
                        parse_term(&items[2], nts)?,
                    ))
                }
                other => Err(GrammarError::Malformed {
                    pos: *pos,
                    expected: "term operator",
                    got: other.to_string(),
                }),
            }
        }
    }
}

/// Parse a grammar from `(nonterm NAME SORT rhs...)` forms.
pub fn parse_grammar(forms: &[Sexp]) -> Result<Rtg, GrammarError> {
    let mut names: IndexSet<String> = IndexSet::new();
    let mut raw: Vec<(String, Sort, &[Sexp], Pos)> = Vec::new();
    for form in forms {
        let items = form.list().ok_or(GrammarError::Malformed {
            pos: form.pos(),
            expected: "(nonterm ...)",
            got: form.to_string(),
        })?;
        if items.first().and_then(|h| h.atom()) != Some("nonterm") {
            return Err(GrammarError::Malformed {
                pos: form.pos(),
                expected: "(nonterm ...)",
                got: form.to_string(),
            });
        }
        if items.len() < 4 {
            return Err(GrammarError::Malformed {
                pos: form.pos(),
                expected: "(nonterm NAME SORT rhs...)",
                got: form.to_string(),
            });
        }
        let name = ident(&items[1], "nonterminal name")?;
        if is_reserved_ident(&name) {
            return Err(GrammarError::ReservedIdent { pos: items[1].pos(), name });
        }
        let sort = match items[2].atom() {
            Some("Stmt") => Sort::Stmt,
            Some("IntExpr") => Sort::IntExpr,
            Some("BoolExpr") => Sort::BoolExpr,
            _ => {
                return Err(GrammarError::Malformed {
                    pos: items[2].pos(),
                    expected: "sort (Stmt | IntExpr | BoolExpr)",
                    got: items[2].to_string(),
                })
            }
        };
        if !names.insert(name.clone()) {
            return Err(GrammarError::DuplicateNonterminal { pos: items[1].pos(), name });
        }
        raw.push((name, sort, &items[3..], form.pos()));
    }
    let mut decls = Vec::new();
    for (name, sort, rhss, _) in &raw {
        let mut parsed = Vec::new();
        for rhs in *rhss {
            let t = parse_term(rhs, &names)?;
            let mut refs = IndexSet::new();
            t.nonterminal_refs(&mut refs);
            for r in refs {
                if !names.contains(&r) {
                    return Err(GrammarError::UndeclaredNonterminal { pos: rhs.pos(), name: r });
                }
            }
            parsed.push(t);
        }
        decls.push((name.clone(), *sort, parsed));
    }
    Rtg::new(decls, None)
}

/// Parse a grammar from source text, for callers outside the benchmark reader.
pub fn parse_grammar_text(text: &str) -> Result<Rtg, GrammarError> {
    let forms = sexp::parse_all(text)?;
    parse_grammar(&forms)
}

/// Canonical rendering of the grammar in the benchmark format.
pub fn print_grammar(g: &Rtg) -> String {
    let mut out = String::new();
    for (n, sort) in g.nonterminals() {
        out.push_str(&format!("(nonterm {n} {sort}"));
        for rhs in g.productions(n).unwrap() {
            out.push(' ');
            out.push_str(&rhs.to_string());
        }
        out.push_str(")\n");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig_grammar() -> Rtg {
        parse_grammar_text("(nonterm N IntExpr (2) (+ 2 N))").unwrap()
    }

    fn ex21_grammar() -> Rtg {
        parse_grammar_text(
            "(nonterm S Stmt (if B A S) A)\n\
             (nonterm B BoolExpr (= y N))\n\
             (nonterm N IntExpr 0 (+ N 1))\n\
             (nonterm A Stmt (:= x N))",
        )
        .unwrap()
    }

    #[test]
    fn parse_fig_grammar() {
        let g = fig_grammar();
        assert_eq!(g.start(), "N");
        let prods = g.productions("N").unwrap();
        assert_eq!(prods.len(), 2);
        assert_eq!(prods[0], GimpTerm::IntLit(2));
        assert_eq!(prods[1], GimpTerm::plus(GimpTerm::IntLit(2), GimpTerm::nt("N")));
    }

    #[test]
    fn parse_single_production_non_recursive() {
        let g = parse_grammar_text("(nonterm E IntExpr (x))").unwrap();
        assert_eq!(g.productions("E").unwrap(), &[GimpTerm::Var("x".into())]);
        assert!(!g.is_recursive("E").unwrap());
    }

    #[test]
    fn parse_ex21_grammar() {
        let g = ex21_grammar();
        assert_eq!(g.nonterminals().count(), 4);
        assert!(g.is_recursive("S").unwrap());
        assert!(g.is_recursive("N").unwrap());
        assert!(!g.is_recursive("B").unwrap());
        assert!(!g.is_recursive("A").unwrap());
    }

    #[test]
    fn recursion_through_chain() {
        // A -> B -> A: both recursive through the chain.
        let g = parse_grammar_text(
            "(nonterm A Stmt (seq B (:= x 0)))\n(nonterm B Stmt A (:= y 1))",
        )
        .unwrap();
        assert!(g.is_recursive("A").unwrap());
        assert!(g.is_recursive("B").unwrap());
    }

    #[test]
    fn recursive_fig_n() {
        assert!(fig_grammar().is_recursive("N").unwrap());
    }

    #[test]
    fn unknown_nonterminal_errors() {
        let g = fig_grammar();
        assert!(g.is_recursive("M").is_err());
    }

    #[test]
    fn undeclared_reference_rejected() {
        // Bare unknown atoms in IntExpr position parse as program variables,
        // so use a statement position where a nonterminal is required.
        let err = parse_grammar_text("(nonterm A Stmt (seq Q skip))").unwrap_err();
        match err {
            GrammarError::SortMismatch { .. } => {}
            other => panic!("unexpected: {other}"),
        }
    }

    #[test]
    fn sort_mismatch_rejected() {
        let err = parse_grammar_text("(nonterm N IntExpr (and true false))").unwrap_err();
        match err {
            GrammarError::ProductionSort { nonterminal, .. } => assert_eq!(nonterminal, "N"),
            other => panic!("unexpected: {other}"),
        }
    }

    #[test]
    fn reserved_idents_rejected() {
        assert!(parse_grammar_text("(nonterm N IntExpr e_t)").is_err());
        assert!(parse_grammar_text("(nonterm A Stmt (:= b_t 0))").is_err());
    }

    #[test]
    fn profile_int_expr() {
        let g = fig_grammar();
        let mut fresh = FreshNames::new(g.all_program_vars(&GimpTerm::nt("N")).into_iter());
        let p = var_profile(&g, "N", &mut fresh).unwrap();
        assert_eq!(p.x_vars, vec!["e_t"]);
        assert!(p.z_vars.is_empty());
        assert_eq!(p.y_vars, vec!["e_t_y"]);
    }

    #[test]
    fn profile_ex21_start() {
        let g = ex21_grammar();
        let mut fresh = FreshNames::new(g.all_program_vars(&GimpTerm::nt("S")).into_iter());
        let p = var_profile(&g, "S", &mut fresh).unwrap();
        assert_eq!(p.x_vars, vec!["x"]);
        assert_eq!(p.z_vars, vec!["x_z"]);
        assert_eq!(p.y_vars, vec!["x_y"]);
    }

    #[test]
    fn profile_statement_without_mutation() {
        let g = parse_grammar_text("(nonterm W Stmt skip (seq skip skip))").unwrap();
        let mut fresh = FreshNames::new(std::iter::empty());
        let p = var_profile(&g, "W", &mut fresh).unwrap();
        assert!(p.x_vars.is_empty());
        assert!(p.z_vars.is_empty());
        assert!(p.y_vars.is_empty());
    }

    #[test]
    fn profile_monotone_under_production_addition() {
        let base = parse_grammar_text("(nonterm A Stmt (:= x 0))").unwrap();
        let bigger = parse_grammar_text("(nonterm A Stmt (:= x 0) (:= y 1))").unwrap();
        let mut f1 = FreshNames::new(std::iter::empty());
        let mut f2 = FreshNames::new(std::iter::empty());
        let p1 = var_profile(&base, "A", &mut f1).unwrap();
        let p2 = var_profile(&bigger, "A", &mut f2).unwrap();
        for x in &p1.x_vars {
            assert!(p2.x_vars.contains(x));
        }
    }

    #[test]
    fn fresh_names_collide_with_suffix() {
        let mut fresh = FreshNames::new(vec!["x_z".to_string()]);
        assert_eq!(fresh.fresh("x_z"), "x_z1");
        assert_eq!(fresh.fresh("x_z"), "x_z2");
    }

    #[test]
    fn parse_print_identity() {
        let g = ex21_grammar();
        let printed = print_grammar(&g);
        let reparsed = parse_grammar_text(&printed).unwrap();
        assert_eq!(g, reparsed);
        assert_eq!(print_grammar(&reparsed), printed);
    }

    #[test]
    fn fingerprint_alpha_invariant() {
        let g1 = parse_grammar_text("(nonterm N IntExpr 2 (+ 2 N))").unwrap();
        let g2 = parse_grammar_text("(nonterm M IntExpr 2 (+ 2 M))").unwrap();
        assert_eq!(g1.fingerprint("N").unwrap(), g2.fingerprint("M").unwrap());
        let g3 = parse_grammar_text("(nonterm N IntExpr 2 3 (+ 2 N))").unwrap();
        assert_ne!(g1.fingerprint("N").unwrap(), g3.fingerprint("N").unwrap());
    }

    #[test]
    fn reachability_matches_independent_dfs() {
        // Independent check: brute-force path search over the ref graph.
        let g = ex21_grammar();
        let names: Vec<&str> = g.nonterminals().map(|(n, _)| n).collect();
        for &n in &names {
            let mut edges: Vec<(String, String)> = Vec::new();
            for &m in &names {
                let mut refs = IndexSet::new();
                for rhs in g.productions(m).unwrap() {
                    rhs.nonterminal_refs(&mut refs);
                }
                for r in refs {
                    edges.push((m.to_string(), r));
                }
            }
            // BFS from n
            let mut frontier = vec![n.to_string()];
            let mut visited: IndexSet<String> = IndexSet::new();
            let mut self_reach = false;
            while let Some(cur) = frontier.pop() {
                for (a, b) in &edges {
                    if *a == cur {
                        if b == n {
                            self_reach = true;
                        }
                        if visited.insert(b.clone()) {
                            frontier.push(b.clone());
                        }
                    }
                }
            }
            assert_eq!(g.is_recursive(n).unwrap(), self_reach, "nonterminal {n}");
        }
    }
}
