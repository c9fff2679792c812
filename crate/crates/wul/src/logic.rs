//! First-order formulas over integers and booleans with finite-vector
//! variables, second-order parameters (summaries/invariants), and
//! second-order function symbols. Substitution is capture-avoiding;
//! substitution into a parameter application rewrites each argument.

use std::fmt;

use indexmap::{IndexMap, IndexSet};
use thiserror::Error;

use crate::gimp::FreshNames;
use crate::sexp::{self, Sexp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarSort {
    Int,
    Bool,
    /// Index variable, ranging over 1..=k.
    Idx,
    VecInt,
    VecBool,
}

impl fmt::Display for VarSort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VarSort::Int => write!(f, "Int"),
            VarSort::Bool => write!(f, "Bool"),
            VarSort::Idx => write!(f, "Idx"),
            VarSort::VecInt => write!(f, "(Vec Int)"),
            VarSort::VecBool => write!(f, "(Vec Bool)"),
        }
    }
}

/// Integer-sorted terms. Multipliers and divisors are constant, keeping
/// every term linear by construction.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Term {
    Int(i64),
    Var(String),
    /// Element of an integer vector variable; the index is an integer term.
    VecElem(String, Box<Term>),
    Add(Box<Term>, Box<Term>),
    Mul(i64, Box<Term>),
    Div(Box<Term>, i64),
    Mod(Box<Term>, i64),
    /// Application of a second-order function symbol (skolemized existential).
    FunApp(String, Vec<Term>),
}

impl Term {
    pub fn var(x: &str) -> Term {
        Term::Var(x.to_string())
    }

    pub fn elem(x: &str, i: Term) -> Term {
        Term::VecElem(x.to_string(), Box::new(i))
    }

    pub fn add(a: Term, b: Term) -> Term {
        Term::Add(Box::new(a), Box::new(b))
    }

    pub fn sub(a: Term, b: Term) -> Term {
        Term::add(a, Term::Mul(-1, Box::new(b)))
    }

    pub fn modulo(t: Term, d: i64) -> Term {
        Term::Mod(Box::new(t), d)
    }
}

/// Arguments of a parameter application: integer terms or boolean formulas,
/// matching the formal's sort. Vector formals are carried element-wise.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Arg {
    Int(Term),
    Bool(Formula),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Quant {
    Forall,
    Exists,
}

/// A quantified variable with its sort. Vec binders bind every element of
/// the named vector at once.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Binder {
    pub name: String,
    pub sort: VarSort,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Formula {
    True,
    False,
    BoolVar(String),
    /// Element of a boolean vector variable.
    BoolVecElem(String, Box<Term>),
    Lt(Term, Term),
    Eq(Term, Term),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Iff(Box<Formula>, Box<Formula>),
    Quantified(Quant, Binder, Box<Formula>),
    /// Second-order parameter application (summary or invariant).
    ParamApp(String, Vec<Arg>),
}

impl Formula {
    pub fn not(f: Formula) -> Formula {
        Formula::Not(Box::new(f))
    }

    pub fn and(a: Formula, b: Formula) -> Formula {
        Formula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Formula, b: Formula) -> Formula {
        Formula::Or(Box::new(a), Box::new(b))
    }

    pub fn implies(a: Formula, b: Formula) -> Formula {
        Formula::Implies(Box::new(a), Box::new(b))
    }

    pub fn iff(a: Formula, b: Formula) -> Formula {
        Formula::Iff(Box::new(a), Box::new(b))
    }

    pub fn lt(a: Term, b: Term) -> Formula {
        Formula::Lt(a, b)
    }

    pub fn eq(a: Term, b: Term) -> Formula {
        Formula::Eq(a, b)
    }

    pub fn neq(a: Term, b: Term) -> Formula {
        Formula::not(Formula::Eq(a, b))
    }

    pub fn bool_elem(x: &str, i: Term) -> Formula {
        Formula::BoolVecElem(x.to_string(), Box::new(i))
    }

    pub fn forall(name: &str, sort: VarSort, body: Formula) -> Formula {
        Formula::Quantified(
            Quant::Forall,
            Binder { name: name.to_string(), sort },
            Box::new(body),
        )
    }

    pub fn exists(name: &str, sort: VarSort, body: Formula) -> Formula {
        Formula::Quantified(
            Quant::Exists,
            Binder { name: name.to_string(), sort },
            Box::new(body),
        )
    }

    /// Left-associated conjunction; the empty conjunction is `true`.
    pub fn conj<I: IntoIterator<Item = Formula>>(fs: I) -> Formula {
        let mut it = fs.into_iter();
        match it.next() {
            None => Formula::True,
            Some(first) => it.fold(first, Formula::and),
        }
    }
}

#[derive(Debug, Error)]
pub enum LogicError {
    #[error("sort mismatch: {0}")]
    Sort(String),
    #[error("unknown vector variable `{0}`")]
    UnknownVector(String),
    #[error("formula mentions reserved variable `{0}`")]
    Reserved(String),
    #[error("{0}")]
    Parse(String),
}

/// Finite-vector environment: a fixed length k and the declared vector
/// variables with element sorts. All program variables of a vector-state
/// benchmark are vectors.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct VectorEnv {
    pub k: usize,
    vectors: IndexMap<String, VarSort>,
}

impl VectorEnv {
    pub fn new(k: usize) -> VectorEnv {
        VectorEnv { k, vectors: IndexMap::new() }
    }

    pub fn declare(&mut self, name: &str, elem: VarSort) {
        debug_assert!(matches!(elem, VarSort::Int | VarSort::Bool));
        let sort = if elem == VarSort::Int { VarSort::VecInt } else { VarSort::VecBool };
        self.vectors.insert(name.to_string(), sort);
    }

    pub fn is_vector(&self, name: &str) -> bool {
        self.vectors.contains_key(name)
    }

    pub fn sort_of(&self, name: &str) -> Option<VarSort> {
        self.vectors.get(name).copied()
    }

    pub fn vectors(&self) -> impl Iterator<Item = (&str, VarSort)> {
        self.vectors.iter().map(|(n, s)| (n.as_str(), *s))
    }
}

// ---------------------------------------------------------------------------
// Free variables

fn term_vars(t: &Term, out: &mut IndexMap<String, VarSort>, bound: &IndexSet<String>) {
    match t {
        Term::Int(_) => {}
        Term::Var(x) => {
            if !bound.contains(x) {
                out.entry(x.clone()).or_insert(VarSort::Int);
            }
        }
        Term::VecElem(x, i) => {
            if !bound.contains(x) {
                out.entry(x.clone()).or_insert(VarSort::VecInt);
            }
            term_vars(i, out, bound);
        }
        Term::Add(a, b) => {
            term_vars(a, out, bound);
            term_vars(b, out, bound);
        }
        Term::Mul(_, a) | Term::Div(a, _) | Term::Mod(a, _) => term_vars(a, out, bound),
        Term::FunApp(_, args) => {
            for a in args {
                term_vars(a, out, bound);
            }
        }
    }
}

fn formula_vars(f: &Formula, out: &mut IndexMap<String, VarSort>, bound: &mut IndexSet<String>) {
    match f {
        Formula::True | Formula::False => {}
        Formula::BoolVar(x) => {
            if !bound.contains(x) {
                out.entry(x.clone()).or_insert(VarSort::Bool);
            }
        }
        Formula::BoolVecElem(x, i) => {
            if !bound.contains(x) {
                out.entry(x.clone()).or_insert(VarSort::VecBool);
            }
            term_vars(i, out, bound);
        }
        Formula::Lt(a, b) | Formula::Eq(a, b) => {
            term_vars(a, out, bound);
            term_vars(b, out, bound);
        }
        Formula::Not(a) => formula_vars(a, out, bound),
        Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) | Formula::Iff(a, b) => {
            formula_vars(a, out, bound);
            formula_vars(b, out, bound);
        }
        Formula::Quantified(_, binder, body) => {
            let inserted = bound.insert(binder.name.clone());
            formula_vars(body, out, bound);
            if inserted {
                bound.shift_remove(&binder.name);
            }
        }
        Formula::ParamApp(_, args) => {
            for a in args {
                match a {
                    Arg::Int(t) => term_vars(t, out, bound),
                    Arg::Bool(g) => formula_vars(g, out, bound),
                }
            }
        }
    }
}

/// Free first-order variables in first-occurrence order, with sorts.
pub fn free_vars(f: &Formula) -> Vec<(String, VarSort)> {
    let mut out = IndexMap::new();
    let mut bound = IndexSet::new();
    formula_vars(f, &mut out, &mut bound);
    out.into_iter().collect()
}

pub fn free_var_names(f: &Formula) -> IndexSet<String> {
    free_vars(f).into_iter().map(|(n, _)| n).collect()
}

/// Parameter names applied anywhere in the formula.
pub fn param_names(f: &Formula) -> IndexSet<String> {
    fn walk(f: &Formula, out: &mut IndexSet<String>) {
        match f {
            Formula::ParamApp(p, args) => {
                out.insert(p.clone());
                for a in args {
                    if let Arg::Bool(g) = a {
                        walk(g, out);
                    }
                }
            }
            Formula::Not(a) => walk(a, out),
            Formula::And(a, b)
            | Formula::Or(a, b)
            | Formula::Implies(a, b)
            | Formula::Iff(a, b) => {
                walk(a, out);
                walk(b, out);
            }
            Formula::Quantified(_, _, body) => walk(body, out),
            _ => {}
        }
    }
    let mut out = IndexSet::new();
    walk(f, &mut out);
    out
}

/// Skolem function names applied anywhere (in term position).
pub fn fun_names(f: &Formula) -> IndexSet<String> {
    fn walk_t(t: &Term, out: &mut IndexSet<String>) {
        match t {
            Term::FunApp(g, args) => {
                out.insert(g.clone());
                for a in args {
                    walk_t(a, out);
                }
            }
            Term::VecElem(_, i) => walk_t(i, out),
            Term::Add(a, b) => {
                walk_t(a, out);
                walk_t(b, out);
            }
            Term::Mul(_, a) | Term::Div(a, _) | Term::Mod(a, _) => walk_t(a, out),
            Term::Int(_) | Term::Var(_) => {}
        }
    }
    fn walk(f: &Formula, out: &mut IndexSet<String>) {
        match f {
            Formula::Lt(a, b) | Formula::Eq(a, b) => {
                walk_t(a, out);
                walk_t(b, out);
            }
            Formula::BoolVecElem(_, i) => walk_t(i, out),
            Formula::Not(a) => walk(a, out),
            Formula::And(a, b)
            | Formula::Or(a, b)
            | Formula::Implies(a, b)
            | Formula::Iff(a, b) => {
                walk(a, out);
                walk(b, out);
            }
            Formula::Quantified(_, _, body) => walk(body, out),
            Formula::ParamApp(_, args) => {
                for a in args {
                    match a {
                        Arg::Int(t) => walk_t(t, out),
                        Arg::Bool(g) => walk(g, out),
                    }
                }
            }
            _ => {}
        }
    }
    let mut out = IndexSet::new();
    walk(f, &mut out);
    out
}

// ---------------------------------------------------------------------------
// Substitution

/// What a substitution replaces. Vector targets rewrite every element
/// reference through an index-parametric template.
#[derive(Debug, Clone)]
pub enum Subst {
    /// Replace a scalar integer variable by a term.
    IntVar(String, Term),
    /// Replace a scalar boolean variable by a formula.
    BoolVar(String, Formula),
    /// Replace elements of an integer vector: x[i] becomes body[idx := i].
    VecInt { vec: String, idx: String, body: Term },
    /// Replace elements of a boolean vector: b[i] becomes body[idx := i].
    VecBool { vec: String, idx: String, body: Formula },
}

impl Subst {
    /// Rename one integer vector to another.
    pub fn vec_rename_int(from: &str, to: &str) -> Subst {
        Subst::VecInt {
            vec: from.to_string(),
            idx: "%i".to_string(),
            body: Term::elem(to, Term::var("%i")),
        }
    }

    pub fn vec_rename_bool(from: &str, to: &str) -> Subst {
        Subst::VecBool {
            vec: from.to_string(),
            idx: "%i".to_string(),
            body: Formula::bool_elem(to, Term::var("%i")),
        }
    }

    fn target(&self) -> &str {
        match self {
            Subst::IntVar(x, _) | Subst::BoolVar(x, _) => x,
            Subst::VecInt { vec, .. } | Subst::VecBool { vec, .. } => vec,
        }
    }

    /// Names free in the replacement (what binders must avoid capturing).
    fn replacement_vars(&self) -> IndexSet<String> {
        match self {
            Subst::IntVar(_, t) => {
                let mut m = IndexMap::new();
                term_vars(t, &mut m, &IndexSet::new());
                m.into_keys().collect()
            }
            Subst::BoolVar(_, f) => free_var_names(f),
            Subst::VecInt { idx, body, .. } => {
                let mut m = IndexMap::new();
                term_vars(body, &mut m, &IndexSet::new());
                let mut s: IndexSet<String> = m.into_keys().collect();
                s.shift_remove(idx);
                s
            }
            Subst::VecBool { idx, body, .. } => {
                let mut s = free_var_names(body);
                s.shift_remove(idx);
                s
            }
        }
    }
}

fn subst_term(t: &Term, s: &Subst) -> Term {
    match t {
        Term::Int(_) => t.clone(),
        Term::Var(x) => match s {
            Subst::IntVar(target, rep) if x == target => rep.clone(),
            _ => t.clone(),
        },
        Term::VecElem(v, i) => {
            let i2 = subst_term(i, s);
            match s {
                Subst::VecInt { vec, idx, body } if v == vec => {
                    subst_term(body, &Subst::IntVar(idx.clone(), i2))
                }
                _ => Term::VecElem(v.clone(), Box::new(i2)),
            }
        }
        Term::Add(a, b) => Term::add(subst_term(a, s), subst_term(b, s)),
        Term::Mul(c, a) => Term::Mul(*c, Box::new(subst_term(a, s))),
        Term::Div(a, d) => Term::Div(Box::new(subst_term(a, s)), *d),
        Term::Mod(a, d) => Term::Mod(Box::new(subst_term(a, s)), *d),
        Term::FunApp(g, args) => {
            Term::FunApp(g.clone(), args.iter().map(|a| subst_term(a, s)).collect())
        }
    }
}

/// Capture-avoiding substitution. Occurrences under a parameter application
/// are rewritten inside each argument; bound variables are renamed when the
/// replacement would be captured.
pub fn substitute(f: &Formula, s: &Subst) -> Formula {
    match f {
        Formula::True | Formula::False => f.clone(),
        Formula::BoolVar(x) => match s {
            Subst::BoolVar(target, rep) if x == target => rep.clone(),
            _ => f.clone(),
        },
        Formula::BoolVecElem(v, i) => {
            let i2 = subst_term(i, s);
            match s {
                Subst::VecBool { vec, idx, body } if v == vec => {
                    substitute(body, &Subst::IntVar(idx.clone(), i2))
                }
                _ => Formula::BoolVecElem(v.clone(), Box::new(i2)),
            }
        }
        Formula::Lt(a, b) => Formula::Lt(subst_term(a, s), subst_term(b, s)),
        Formula::Eq(a, b) => Formula::Eq(subst_term(a, s), subst_term(b, s)),
        Formula::Not(a) => Formula::not(substitute(a, s)),
        Formula::And(a, b) => Formula::and(substitute(a, s), substitute(b, s)),
        Formula::Or(a, b) => Formula::or(substitute(a, s), substitute(b, s)),
        Formula::Implies(a, b) => Formula::implies(substitute(a, s), substitute(b, s)),
        Formula::Iff(a, b) => Formula::iff(substitute(a, s), substitute(b, s)),
        Formula::Quantified(q, binder, body) => {
            if binder.name == s.target() {
                // Shadowed: nothing free below refers to the target.
                return f.clone();
            }
            if s.replacement_vars().contains(&binder.name) {
                // Rename the binder away from the replacement's free names.
                let mut taken = free_var_names(body);
                for v in s.replacement_vars() {
                    taken.insert(v);
                }
                taken.insert(s.target().to_string());
                let mut fresh = FreshNames::new(taken.into_iter().map(|x| x.to_string()));
                let new_name = fresh.fresh(&binder.name);
                let renamed = match binder.sort {
                    VarSort::Int | VarSort::Idx => substitute(
                        body,
                        &Subst::IntVar(binder.name.clone(), Term::var(&new_name)),
                    ),
                    VarSort::Bool => substitute(
                        body,
                        &Subst::BoolVar(binder.name.clone(), Formula::BoolVar(new_name.clone())),
                    ),
                    VarSort::VecInt => {
                        substitute(body, &Subst::vec_rename_int(&binder.name, &new_name))
                    }
                    VarSort::VecBool => {
                        substitute(body, &Subst::vec_rename_bool(&binder.name, &new_name))
                    }
                };
                Formula::Quantified(
                    *q,
                    Binder { name: new_name, sort: binder.sort },
                    Box::new(substitute(&renamed, s)),
                )
            } else {
                Formula::Quantified(*q, binder.clone(), Box::new(substitute(body, s)))
            }
        }
        Formula::ParamApp(p, args) => Formula::ParamApp(
            p.clone(),
            args.iter()
                .map(|a| match a {
                    Arg::Int(t) => Arg::Int(subst_term(t, s)),
                    Arg::Bool(g) => Arg::Bool(substitute(g, s)),
                })
                .collect(),
        ),
    }
}

pub fn substitute_all(f: &Formula, subs: &[Subst]) -> Formula {
    subs.iter().fold(f.clone(), |acc, s| substitute(&acc, s))
}

// ---------------------------------------------------------------------------
// Alpha-equivalence

fn alpha_eq_term(
    a: &Term,
    b: &Term,
    la: &IndexMap<String, usize>,
    lb: &IndexMap<String, usize>,
) -> bool {
    let var_matches = |x: &str, y: &str| match (la.get(x), lb.get(y)) {
        (Some(i), Some(j)) => i == j,
        (None, None) => x == y,
        _ => false,
    };
    match (a, b) {
        (Term::Int(x), Term::Int(y)) => x == y,
        (Term::Var(x), Term::Var(y)) => var_matches(x, y),
        (Term::VecElem(x, i), Term::VecElem(y, j)) => {
            var_matches(x, y) && alpha_eq_term(i, j, la, lb)
        }
        (Term::Add(a1, a2), Term::Add(b1, b2)) => {
            alpha_eq_term(a1, b1, la, lb) && alpha_eq_term(a2, b2, la, lb)
        }
        (Term::Mul(c, x), Term::Mul(d, y)) => c == d && alpha_eq_term(x, y, la, lb),
        (Term::Div(x, c), Term::Div(y, d)) | (Term::Mod(x, c), Term::Mod(y, d)) => {
            c == d && alpha_eq_term(x, y, la, lb)
        }
        (Term::FunApp(f, xs), Term::FunApp(g, ys)) => {
            f == g
                && xs.len() == ys.len()
                && xs.iter().zip(ys).all(|(x, y)| alpha_eq_term(x, y, la, lb))
        }
        _ => false,
    }
}

fn alpha_eq_rec(
    a: &Formula,
    b: &Formula,
    la: &mut IndexMap<String, usize>,
    lb: &mut IndexMap<String, usize>,
    depth: usize,
) -> bool {
    let var_matches = |x: &str, y: &str, la: &IndexMap<String, usize>, lb: &IndexMap<String, usize>| {
        match (la.get(x), lb.get(y)) {
            (Some(i), Some(j)) => i == j,
            (None, None) => x == y,
            _ => false,
        }
    };
    match (a, b) {
        (Formula::True, Formula::True) | (Formula::False, Formula::False) => true,
        (Formula::BoolVar(x), Formula::BoolVar(y)) => var_matches(x, y, la, lb),
        (Formula::BoolVecElem(x, i), Formula::BoolVecElem(y, j)) => {
            var_matches(x, y, la, lb) && alpha_eq_term(i, j, la, lb)
        }
        (Formula::Lt(a1, a2), Formula::Lt(b1, b2)) | (Formula::Eq(a1, a2), Formula::Eq(b1, b2)) => {
            alpha_eq_term(a1, b1, la, lb) && alpha_eq_term(a2, b2, la, lb)
        }
        (Formula::Not(x), Formula::Not(y)) => alpha_eq_rec(x, y, la, lb, depth),
        (Formula::And(x1, x2), Formula::And(y1, y2))
        | (Formula::Or(x1, x2), Formula::Or(y1, y2))
        | (Formula::Implies(x1, x2), Formula::Implies(y1, y2))
        | (Formula::Iff(x1, x2), Formula::Iff(y1, y2)) => {
            alpha_eq_rec(x1, y1, la, lb, depth) && alpha_eq_rec(x2, y2, la, lb, depth)
        }
        (Formula::Quantified(q1, b1, f1), Formula::Quantified(q2, b2, f2)) => {
            if q1 != q2 || b1.sort != b2.sort {
                return false;
            }
            let old_a = la.insert(b1.name.clone(), depth);
            let old_b = lb.insert(b2.name.clone(), depth);
            let r = alpha_eq_rec(f1, f2, la, lb, depth + 1);
            match old_a {
                Some(v) => {
                    la.insert(b1.name.clone(), v);
                }
                None => {
                    la.shift_remove(&b1.name);
                }
            }
            match old_b {
                Some(v) => {
                    lb.insert(b2.name.clone(), v);
                }
                None => {
                    lb.shift_remove(&b2.name);
                }
            }
            r
        }
        (Formula::ParamApp(p, xs), Formula::ParamApp(r, ys)) => {
            p == r
                && xs.len() == ys.len()
                && xs.iter().zip(ys).all(|(x, y)| match (x, y) {
                    (Arg::Int(t), Arg::Int(u)) => alpha_eq_term(t, u, la, lb),
                    (Arg::Bool(f), Arg::Bool(g)) => alpha_eq_rec(f, g, la, lb, depth),
                    _ => false,
                })
        }
        _ => false,
    }
}

/// Equality up to canonical renaming of bound variables. No other
/// normalization is applied (the rules are pattern-sensitive).
pub fn alpha_eq(a: &Formula, b: &Formula) -> bool {
    let mut la = IndexMap::new();
    let mut lb = IndexMap::new();
    alpha_eq_rec(a, b, &mut la, &mut lb, 0)
}

// ---------------------------------------------------------------------------
// Constant folding of index terms

pub fn fold_term(t: &Term) -> Term {
    match t {
        Term::Int(_) | Term::Var(_) => t.clone(),
        Term::VecElem(x, i) => Term::VecElem(x.clone(), Box::new(fold_term(i))),
        Term::Add(a, b) => match (fold_term(a), fold_term(b)) {
            (Term::Int(x), Term::Int(y)) => Term::Int(x + y),
            (x, y) => Term::add(x, y),
        },
        Term::Mul(c, a) => match fold_term(a) {
            Term::Int(x) => Term::Int(c * x),
            x => Term::Mul(*c, Box::new(x)),
        },
        Term::Div(a, d) => match fold_term(a) {
            Term::Int(x) => Term::Int(x.div_euclid(*d)),
            x => Term::Div(Box::new(x), *d),
        },
        Term::Mod(a, d) => match fold_term(a) {
            Term::Int(x) => Term::Int(x.rem_euclid(*d)),
            x => Term::Mod(Box::new(x), *d),
        },
        Term::FunApp(g, args) => Term::FunApp(g.clone(), args.iter().map(fold_term).collect()),
    }
}

// ---------------------------------------------------------------------------
// The T transformation for vector-state branching

/// Vectors the transformation may deactivate, with their fresh poststate
/// partners (mutable program vectors only; scalars and other vectors pass
/// through unchanged).
pub type YMap = IndexMap<String, String>;

fn atom_index_terms(f: &Formula, out: &mut Vec<Term>) {
    fn term_indices(t: &Term, out: &mut Vec<Term>) {
        match t {
            Term::VecElem(_, i) => {
                let folded = fold_term(i);
                if !out.iter().any(|x| x == &folded) {
                    out.push(folded.clone());
                }
                term_indices(i, out);
            }
            Term::Add(a, b) => {
                term_indices(a, out);
                term_indices(b, out);
            }
            Term::Mul(_, a) | Term::Div(a, _) | Term::Mod(a, _) => term_indices(a, out),
            Term::FunApp(_, args) => {
                for a in args {
                    term_indices(a, out);
                }
            }
            Term::Int(_) | Term::Var(_) => {}
        }
    }
    match f {
        Formula::Lt(a, b) | Formula::Eq(a, b) => {
            term_indices(a, out);
            term_indices(b, out);
        }
        Formula::BoolVecElem(_, i) => {
            let folded = fold_term(i);
            if !out.iter().any(|x| x == &folded) {
                out.push(folded);
            }
        }
        Formula::ParamApp(_, args) => {
            for a in args {
                match a {
                    Arg::Int(t) => term_indices(t, out),
                    Arg::Bool(g) => atom_index_terms(g, out),
                }
            }
        }
        _ => {}
    }
}

/// Rename deactivated elements: every element of a vector in `ys` whose
/// (folded) index equals `at` becomes the y-partner's element.
fn deactivate_at(f: &Formula, ys: &YMap, at: &Term) -> Formula {
    fn go_term(t: &Term, ys: &YMap, at: &Term) -> Term {
        match t {
            Term::VecElem(x, i) => {
                let i2 = go_term(i, ys, at);
                match ys.get(x) {
                    Some(y) if &fold_term(&i2) == at => Term::VecElem(y.clone(), Box::new(i2)),
                    _ => Term::VecElem(x.clone(), Box::new(i2)),
                }
            }
            Term::Add(a, b) => Term::add(go_term(a, ys, at), go_term(b, ys, at)),
            Term::Mul(c, a) => Term::Mul(*c, Box::new(go_term(a, ys, at))),
            Term::Div(a, d) => Term::Div(Box::new(go_term(a, ys, at)), *d),
            Term::Mod(a, d) => Term::Mod(Box::new(go_term(a, ys, at)), *d),
            Term::FunApp(g, args) => {
                Term::FunApp(g.clone(), args.iter().map(|a| go_term(a, ys, at)).collect())
            }
            Term::Int(_) | Term::Var(_) => t.clone(),
        }
    }
    match f {
        Formula::Lt(a, b) => Formula::Lt(go_term(a, ys, at), go_term(b, ys, at)),
        Formula::Eq(a, b) => Formula::Eq(go_term(a, ys, at), go_term(b, ys, at)),
        Formula::BoolVecElem(x, i) => {
            let i2 = go_term(i, ys, at);
            match ys.get(x) {
                Some(y) if &fold_term(&i2) == at => Formula::BoolVecElem(y.clone(), Box::new(i2)),
                _ => Formula::BoolVecElem(x.clone(), Box::new(i2)),
            }
        }
        Formula::ParamApp(p, args) => Formula::ParamApp(
            p.clone(),
            args.iter()
                .map(|a| match a {
                    Arg::Int(t) => Arg::Int(go_term(t, ys, at)),
                    Arg::Bool(g) => Arg::Bool(deactivate_at(g, ys, at)),
                })
                .collect(),
        ),
        _ => f.clone(),
    }
}

fn t_transform_atom(f: &Formula, b_loop: &str, ys: &YMap) -> Formula {
    let mut indices = Vec::new();
    atom_index_terms(f, &mut indices);
    if indices.is_empty() {
        return f.clone();
    }
    let n = indices.len();
    let mut cases = Vec::new();
    // Sign patterns in true-first order: the first index is most significant.
    for bits in 0..(1u32 << n) {
        let mut guard_parts = Vec::new();
        let mut body = f.clone();
        for (j, idx) in indices.iter().enumerate() {
            let positive = bits & (1 << (n - 1 - j)) == 0;
            let lit = Formula::bool_elem(b_loop, idx.clone());
            if positive {
                guard_parts.push(lit);
                body = deactivate_at(&body, ys, idx);
            } else {
                guard_parts.push(Formula::not(lit));
            }
        }
        cases.push(Formula::implies(Formula::conj(guard_parts), body));
    }
    Formula::conj(cases)
}

/// The branching transformation: homomorphic on connectives and quantifiers,
/// and on each atomic comparison produces the 2^n-case split over the guard
/// snapshot `b_loop`, renaming deactivated elements to their y-partners.
pub fn t_transform(q: &Formula, b_loop: &str, ys: &YMap) -> Result<Formula, LogicError> {
    if free_var_names(q).contains(b_loop) {
        return Err(LogicError::Reserved(b_loop.to_string()));
    }
    fn go(f: &Formula, b_loop: &str, ys: &YMap) -> Formula {
        match f {
            Formula::True | Formula::False | Formula::BoolVar(_) => f.clone(),
            Formula::Not(a) => Formula::not(go(a, b_loop, ys)),
            Formula::And(a, b) => Formula::and(go(a, b_loop, ys), go(b, b_loop, ys)),
            Formula::Or(a, b) => Formula::or(go(a, b_loop, ys), go(b, b_loop, ys)),
            Formula::Implies(a, b) => Formula::implies(go(a, b_loop, ys), go(b, b_loop, ys)),
            Formula::Iff(a, b) => Formula::iff(go(a, b_loop, ys), go(b, b_loop, ys)),
            Formula::Quantified(q, binder, body) => {
                Formula::Quantified(*q, binder.clone(), Box::new(go(body, b_loop, ys)))
            }
            atom => t_transform_atom(atom, b_loop, ys),
        }
    }
    Ok(go(q, b_loop, ys))
}

// ---------------------------------------------------------------------------
// Index-quantifier expansion and vector grounding

/// Expand index quantifiers over the finite length k into conjunctions or
/// disjunctions, instantiating the bound index with literals 1..=k.
pub fn expand_idx_quantifiers(f: &Formula, k: usize) -> Formula {
    match f {
        Formula::Quantified(q, binder, body) if binder.sort == VarSort::Idx => {
            let body = expand_idx_quantifiers(body, k);
            let mut parts = Vec::new();
            for j in 1..=k {
                parts.push(fold_indices(&substitute(
                    &body,
                    &Subst::IntVar(binder.name.clone(), Term::Int(j as i64)),
                )));
            }
            match q {
                Quant::Forall => Formula::conj(parts),
                Quant::Exists => {
                    let mut it = parts.into_iter();
                    let first = it.next().unwrap_or(Formula::False);
                    it.fold(first, Formula::or)
                }
            }
        }
        Formula::Quantified(q, binder, body) => {
            Formula::Quantified(*q, binder.clone(), Box::new(expand_idx_quantifiers(body, k)))
        }
        Formula::Not(a) => Formula::not(expand_idx_quantifiers(a, k)),
        Formula::And(a, b) => {
            Formula::and(expand_idx_quantifiers(a, k), expand_idx_quantifiers(b, k))
        }
        Formula::Or(a, b) => {
            Formula::or(expand_idx_quantifiers(a, k), expand_idx_quantifiers(b, k))
        }
        Formula::Implies(a, b) => {
            Formula::implies(expand_idx_quantifiers(a, k), expand_idx_quantifiers(b, k))
        }
        Formula::Iff(a, b) => {
            Formula::iff(expand_idx_quantifiers(a, k), expand_idx_quantifiers(b, k))
        }
        _ => f.clone(),
    }
}

/// Fold constant index arithmetic everywhere.
pub fn fold_indices(f: &Formula) -> Formula {
    match f {
        Formula::Lt(a, b) => Formula::Lt(fold_term(a), fold_term(b)),
        Formula::Eq(a, b) => Formula::Eq(fold_term(a), fold_term(b)),
        Formula::BoolVecElem(x, i) => Formula::BoolVecElem(x.clone(), Box::new(fold_term(i))),
        Formula::Not(a) => Formula::not(fold_indices(a)),
        Formula::And(a, b) => Formula::and(fold_indices(a), fold_indices(b)),
        Formula::Or(a, b) => Formula::or(fold_indices(a), fold_indices(b)),
        Formula::Implies(a, b) => Formula::implies(fold_indices(a), fold_indices(b)),
        Formula::Iff(a, b) => Formula::iff(fold_indices(a), fold_indices(b)),
        Formula::Quantified(q, binder, body) => {
            Formula::Quantified(*q, binder.clone(), Box::new(fold_indices(body)))
        }
        Formula::ParamApp(p, args) => Formula::ParamApp(
            p.clone(),
            args.iter()
                .map(|a| match a {
                    Arg::Int(t) => Arg::Int(fold_term(t)),
                    Arg::Bool(g) => Arg::Bool(fold_indices(g)),
                })
                .collect(),
        ),
        _ => f.clone(),
    }
}

/// Scalar name for one element of a grounded vector. '!' cannot appear in
/// user identifiers and is a legal SMT-LIB simple-symbol character.
pub fn vec_elem_name(vec: &str, j: i64) -> String {
    format!("{vec}!{j}")
}

#[derive(Debug, Error)]
#[error("cannot ground formula for the solver: {0}")]
pub struct GroundError(pub String);

/// Replace every vector element reference with a scalar variable and expand
/// vector binders into per-element scalar binders. Requires literal indices
/// (index quantifiers must already be expanded).
pub fn ground_vectors(f: &Formula, k: usize) -> Result<Formula, GroundError> {
    fn idx_of(i: &Term, k: usize) -> Result<i64, GroundError> {
        match fold_term(i) {
            Term::Int(j) if j >= 1 && j <= k as i64 => Ok(j),
            Term::Int(j) => Err(GroundError(format!("index {j} out of range 1..={k}"))),
            other => Err(GroundError(format!(
                "symbolic index `{}` (expand index quantifiers first)",
                print_term(&other)
            ))),
        }
    }
    fn go_term(t: &Term, k: usize) -> Result<Term, GroundError> {
        Ok(match t {
            Term::VecElem(x, i) => Term::var(&vec_elem_name(x, idx_of(i, k)?)),
            Term::Add(a, b) => Term::add(go_term(a, k)?, go_term(b, k)?),
            Term::Mul(c, a) => Term::Mul(*c, Box::new(go_term(a, k)?)),
            Term::Div(a, d) => Term::Div(Box::new(go_term(a, k)?), *d),
            Term::Mod(a, d) => Term::Mod(Box::new(go_term(a, k)?), *d),
            Term::FunApp(g, args) => Term::FunApp(
                g.clone(),
                args.iter().map(|a| go_term(a, k)).collect::<Result<_, _>>()?,
            ),
            Term::Int(_) | Term::Var(_) => t.clone(),
        })
    }
    Ok(match f {
        Formula::True | Formula::False | Formula::BoolVar(_) => f.clone(),
        Formula::BoolVecElem(x, i) => Formula::BoolVar(vec_elem_name(x, idx_of(i, k)?)),
        Formula::Lt(a, b) => Formula::Lt(go_term(a, k)?, go_term(b, k)?),
        Formula::Eq(a, b) => Formula::Eq(go_term(a, k)?, go_term(b, k)?),
        Formula::Not(a) => Formula::not(ground_vectors(a, k)?),
        Formula::And(a, b) => Formula::and(ground_vectors(a, k)?, ground_vectors(b, k)?),
        Formula::Or(a, b) => Formula::or(ground_vectors(a, k)?, ground_vectors(b, k)?),
        Formula::Implies(a, b) => Formula::implies(ground_vectors(a, k)?, ground_vectors(b, k)?),
        Formula::Iff(a, b) => Formula::iff(ground_vectors(a, k)?, ground_vectors(b, k)?),
        Formula::Quantified(q, binder, body) => match binder.sort {
            VarSort::Idx => {
                return Err(GroundError(format!(
                    "index quantifier over `{}` not expanded",
                    binder.name
                )))
            }
            VarSort::VecInt | VarSort::VecBool => {
                let elem = if binder.sort == VarSort::VecInt { VarSort::Int } else { VarSort::Bool };
                let mut inner = ground_vectors(body, k)?;
                for j in (1..=k as i64).rev() {
                    inner = Formula::Quantified(
                        *q,
                        Binder { name: vec_elem_name(&binder.name, j), sort: elem },
                        Box::new(inner),
                    );
                }
                inner
            }
            _ => Formula::Quantified(*q, binder.clone(), Box::new(ground_vectors(body, k)?)),
        },
        Formula::ParamApp(p, _) => {
            return Err(GroundError(format!("unresolved parameter `{p}`")))
        }
    })
}

// ---------------------------------------------------------------------------
// Printing (benchmark text format)

pub fn print_term(t: &Term) -> String {
    match t {
        Term::Int(n) => n.to_string(),
        Term::Var(x) => x.clone(),
        Term::VecElem(x, i) => format!("(vref {x} {})", print_term(i)),
        Term::Add(a, b) => format!("(+ {} {})", print_term(a), print_term(b)),
        Term::Mul(c, a) => format!("(* {c} {})", print_term(a)),
        Term::Div(a, d) => format!("(div {} {d})", print_term(a)),
        Term::Mod(a, d) => format!("(mod {} {d})", print_term(a)),
        Term::FunApp(f, args) => {
            let mut s = format!("({f}");
            for a in args {
                s.push(' ');
                s.push_str(&print_term(a));
            }
            s.push(')');
            s
        }
    }
}

pub fn print_formula(f: &Formula) -> String {
    match f {
        Formula::True => "true".to_string(),
        Formula::False => "false".to_string(),
        Formula::BoolVar(x) => x.clone(),
        Formula::BoolVecElem(x, i) => format!("(vref {x} {})", print_term(i)),
        Formula::Lt(a, b) => format!("(< {} {})", print_term(a), print_term(b)),
        Formula::Eq(a, b) => format!("(= {} {})", print_term(a), print_term(b)),
        Formula::Not(a) => format!("(not {})", print_formula(a)),
        Formula::And(a, b) => format!("(and {} {})", print_formula(a), print_formula(b)),
        Formula::Or(a, b) => format!("(or {} {})", print_formula(a), print_formula(b)),
        Formula::Implies(a, b) => format!("(=> {} {})", print_formula(a), print_formula(b)),
        Formula::Iff(a, b) => format!("(iff {} {})", print_formula(a), print_formula(b)),
        Formula::Quantified(q, binder, body) => {
            let q = match q {
                Quant::Forall => "forall",
                Quant::Exists => "exists",
            };
            format!("({q} ({} {}) {})", binder.name, binder.sort, print_formula(body))
        }
        Formula::ParamApp(p, args) => {
            let mut s = format!("({p}");
            for a in args {
                s.push(' ');
                match a {
                    Arg::Int(t) => s.push_str(&print_term(t)),
                    Arg::Bool(g) => s.push_str(&print_formula(g)),
                }
            }
            s.push(')');
            s
        }
    }
}

// ---------------------------------------------------------------------------
// Parsing (benchmark text format)

/// Context for parsing formulas: which names are vectors, which are
/// parameters (with arities), and which are boolean scalars.
#[derive(Debug, Clone, Default)]
pub struct FormulaScope {
    pub vectors: IndexMap<String, VarSort>,
    pub bool_vars: IndexSet<String>,
    pub params: IndexMap<String, usize>,
    /// Template mode: (mod t h) with a symbolic divisor parses into the
    /// `%mod`/`%div` markers the grammar enumerator resolves later.
    pub symbolic_divisors: bool,
}

impl FormulaScope {
    pub fn from_env(env: &VectorEnv) -> FormulaScope {
        FormulaScope {
            vectors: env.vectors().map(|(n, s)| (n.to_string(), s)).collect(),
            ..Default::default()
        }
    }
}

pub fn parse_term_sexp(s: &Sexp, scope: &FormulaScope) -> Result<Term, LogicError> {
    match s {
        Sexp::Atom(a, _) => {
            if let Ok(n) = a.parse::<i64>() {
                return Ok(Term::Int(n));
            }
            Ok(Term::var(a))
        }
        Sexp::List(items, pos) => {
            let head = items
                .first()
                .and_then(|h| h.atom())
                .ok_or_else(|| LogicError::Parse(format!("{pos}: expected term operator")))?;
            let req = |n: usize| -> Result<(), LogicError> {
                if items.len() == n + 1 {
                    Ok(())
                } else {
                    Err(LogicError::Parse(format!("{pos}: `{head}` expects {n} arguments")))
                }
            };
            match head {
                "+" => {
                    req(2)?;
                    Ok(Term::add(
                        parse_term_sexp(&items[1], scope)?,
                        parse_term_sexp(&items[2], scope)?,
                    ))
                }
                "-" => {
                    if items.len() == 2 {
                        Ok(Term::Mul(-1, Box::new(parse_term_sexp(&items[1], scope)?)))
                    } else {
                        req(2)?;
                        Ok(Term::sub(
                            parse_term_sexp(&items[1], scope)?,
                            parse_term_sexp(&items[2], scope)?,
                        ))
                    }
                }
                "*" => {
                    req(2)?;
                    let a = parse_term_sexp(&items[1], scope)?;
                    let b = parse_term_sexp(&items[2], scope)?;
                    match (a, b) {
                        (Term::Int(c), t) | (t, Term::Int(c)) => Ok(Term::Mul(c, Box::new(t))),
                        _ => Err(LogicError::Parse(format!(
                            "{pos}: one side of `*` must be a constant"
                        ))),
                    }
                }
                "div" | "mod" => {
                    req(2)?;
                    let a = parse_term_sexp(&items[1], scope)?;
                    let d = match items[2].int() {
                        Some(d) if d > 0 => d,
                        Some(_) => {
                            return Err(LogicError::Parse(format!(
                                "{pos}: `{head}` divisor must be positive"
                            )))
                        }
                        None if scope.symbolic_divisors => {
                            let hole = parse_term_sexp(&items[2], scope)?;
                            let marker = if head == "div" { "%div" } else { "%mod" };
                            return Ok(Term::FunApp(marker.to_string(), vec![a, hole]));
                        }
                        None => {
                            return Err(LogicError::Parse(format!(
                                "{pos}: `{head}` divisor must be a constant"
                            )))
                        }
                    };
                    Ok(if head == "div" {
                        Term::Div(Box::new(a), d)
                    } else {
                        Term::Mod(Box::new(a), d)
                    })
                }
                "vref" => {
                    req(2)?;
                    let v = items[1]
                        .atom()
                        .ok_or_else(|| LogicError::Parse(format!("{pos}: vref needs a name")))?;
                    Ok(Term::elem(v, parse_term_sexp(&items[2], scope)?))
                }
                f => Ok(Term::FunApp(
                    f.to_string(),
                    items[1..]
                        .iter()
                        .map(|a| parse_term_sexp(a, scope))
                        .collect::<Result<_, _>>()?,
                )),
            }
        }
    }
}

pub fn parse_formula_sexp(s: &Sexp, scope: &FormulaScope) -> Result<Formula, LogicError> {
    match s {
        Sexp::Atom(a, _) => match a.as_str() {
            "true" => Ok(Formula::True),
            "false" => Ok(Formula::False),
            name if scope.bool_vars.contains(name) || name == crate::gimp::BT => {
                Ok(Formula::BoolVar(name.to_string()))
            }
            name => Err(LogicError::Parse(format!(
                "expected a boolean atom, got `{name}` (declare boolean variables or use a comparison)"
            ))),
        },
        Sexp::List(items, pos) => {
            let head = items
                .first()
                .and_then(|h| h.atom())
                .ok_or_else(|| LogicError::Parse(format!("{pos}: expected formula operator")))?;
            let req = |n: usize| -> Result<(), LogicError> {
                if items.len() == n + 1 {
                    Ok(())
                } else {
                    Err(LogicError::Parse(format!("{pos}: `{head}` expects {n} arguments")))
                }
            };
            let nary = |op: fn(Formula, Formula) -> Formula,
                        scope: &FormulaScope|
             -> Result<Formula, LogicError> {
                if items.len() < 3 {
                    return Err(LogicError::Parse(format!(
                        "{pos}: `{head}` expects at least 2 arguments"
                    )));
                }
                let mut parts = items[1..]
                    .iter()
                    .map(|a| parse_formula_sexp(a, scope))
                    .collect::<Result<Vec<_>, _>>()?
                    .into_iter();
                let first = parts.next().unwrap();
                Ok(parts.fold(first, op))
            };
            match head {
                "and" => nary(Formula::and, scope),
                "or" => nary(Formula::or, scope),
                "not" => {
                    req(1)?;
                    Ok(Formula::not(parse_formula_sexp(&items[1], scope)?))
                }
                "=>" | "implies" => {
                    req(2)?;
                    Ok(Formula::implies(
                        parse_formula_sexp(&items[1], scope)?,
                        parse_formula_sexp(&items[2], scope)?,
                    ))
                }
                "iff" => {
                    req(2)?;
                    Ok(Formula::iff(
                        parse_formula_sexp(&items[1], scope)?,
                        parse_formula_sexp(&items[2], scope)?,
                    ))
                }
                "<" | "<=" | ">" | ">=" => {
                    req(2)?;
                    let a = parse_term_sexp(&items[1], scope)?;
                    let b = parse_term_sexp(&items[2], scope)?;
                    Ok(match head {
                        "<" => Formula::lt(a, b),
                        "<=" => Formula::not(Formula::lt(b, a)),
                        ">" => Formula::lt(b, a),
                        _ => Formula::not(Formula::lt(a, b)),
                    })
                }
                "=" | "==" => {
                    req(2)?;
                    // Boolean equality when both sides parse as formulas but
                    // not as integer atoms; integers are the common case.
                    let a = parse_term_sexp(&items[1], scope);
                    let b = parse_term_sexp(&items[2], scope);
                    match (a, b) {
                        (Ok(a), Ok(b)) if !is_boolish(&items[1], scope) && !is_boolish(&items[2], scope) => {
                            Ok(Formula::eq(a, b))
                        }
                        _ => Ok(Formula::iff(
                            parse_formula_sexp(&items[1], scope)?,
                            parse_formula_sexp(&items[2], scope)?,
                        )),
                    }
                }
                "distinct" => {
                    req(2)?;
                    Ok(Formula::neq(
                        parse_term_sexp(&items[1], scope)?,
                        parse_term_sexp(&items[2], scope)?,
                    ))
                }
                "vref" => {
                    req(2)?;
                    let v = items[1]
                        .atom()
                        .ok_or_else(|| LogicError::Parse(format!("{pos}: vref needs a name")))?;
                    Ok(Formula::bool_elem(v, parse_term_sexp(&items[2], scope)?))
                }
                "forall" | "exists" => {
                    req(2)?;
                    let binding = items[1].list().ok_or_else(|| {
                        LogicError::Parse(format!("{pos}: expected (name sort) binder"))
                    })?;
                    let (name, sort) = parse_binder(binding, pos)?;
                    let mut inner = scope.clone();
                    match sort {
                        VarSort::Bool => {
                            inner.bool_vars.insert(name.clone());
                        }
                        VarSort::VecInt => {
                            inner.vectors.insert(name.clone(), VarSort::VecInt);
                        }
                        VarSort::VecBool => {
                            inner.vectors.insert(name.clone(), VarSort::VecBool);
                        }
                        _ => {}
                    }
                    let body = parse_formula_sexp(&items[2], &inner)?;
                    let q = if head == "forall" { Quant::Forall } else { Quant::Exists };
                    Ok(Formula::Quantified(q, Binder { name, sort }, Box::new(body)))
                }
                p if scope.params.contains_key(p) => {
                    let args = items[1..]
                        .iter()
                        .map(|a| {
                            if is_boolish(a, scope) {
                                parse_formula_sexp(a, scope).map(Arg::Bool)
                            } else {
                                parse_term_sexp(a, scope).map(Arg::Int)
                            }
                        })
                        .collect::<Result<Vec<_>, _>>()?;
                    Ok(Formula::ParamApp(p.to_string(), args))
                }
                other => Err(LogicError::Parse(format!(
                    "{pos}: unknown formula operator `{other}`"
                ))),
            }
        }
    }
}

fn is_boolish(s: &Sexp, scope: &FormulaScope) -> bool {
    match s {
        Sexp::Atom(a, _) => {
            a == "true" || a == "false" || a == crate::gimp::BT || scope.bool_vars.contains(a)
        }
        Sexp::List(items, _) => matches!(
            items.first().and_then(|h| h.atom()),
            Some("and" | "or" | "not" | "=>" | "implies" | "iff" | "<" | "<=" | ">" | ">=" | "distinct")
        ),
    }
}

fn parse_binder(items: &[Sexp], pos: &sexp::Pos) -> Result<(String, VarSort), LogicError> {
    if items.len() != 2 {
        // Allow (Vec Int) as a two-atom tail: (x Vec Int) is not accepted;
        // the sort must be a single atom or the list (Vec Elem).
        if items.len() == 3 && items[1].atom() == Some("Vec") {
            let name = items[0]
                .atom()
                .ok_or_else(|| LogicError::Parse(format!("{pos}: binder name")))?;
            let sort = match items[2].atom() {
                Some("Int") => VarSort::VecInt,
                Some("Bool") => VarSort::VecBool,
                _ => return Err(LogicError::Parse(format!("{pos}: bad vector element sort"))),
            };
            return Ok((name.to_string(), sort));
        }
        return Err(LogicError::Parse(format!("{pos}: expected (name sort) binder")));
    }
    let name = items[0]
        .atom()
        .ok_or_else(|| LogicError::Parse(format!("{pos}: binder name")))?;
    let sort = match &items[1] {
        Sexp::Atom(a, _) => match a.as_str() {
            "Int" => VarSort::Int,
            "Bool" => VarSort::Bool,
            "Idx" => VarSort::Idx,
            other => return Err(LogicError::Parse(format!("{pos}: unknown sort `{other}`"))),
        },
        Sexp::List(sub, _) => {
            if sub.len() == 2 && sub[0].atom() == Some("Vec") {
                match sub[1].atom() {
                    Some("Int") => VarSort::VecInt,
                    Some("Bool") => VarSort::VecBool,
                    _ => return Err(LogicError::Parse(format!("{pos}: bad vector element sort"))),
                }
            } else {
                return Err(LogicError::Parse(format!("{pos}: bad binder sort")));
            }
        }
    };
    Ok((name.to_string(), sort))
}

pub fn parse_formula_text(text: &str, scope: &FormulaScope) -> Result<Formula, LogicError> {
    let s = sexp::parse_one(text).map_err(|e| LogicError::Parse(e.to_string()))?;
    parse_formula_sexp(&s, scope)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gimp::ET;

    fn et() -> Term {
        Term::var(ET)
    }

    fn qn(arg: Term) -> Formula {
        Formula::ParamApp("Q_N".to_string(), vec![Arg::Int(arg)])
    }

    #[test]
    fn ground_substitution() {
        // (e_t != 3)[e_t -> 2] == (2 != 3)
        let f = Formula::neq(et(), Term::Int(3));
        let r = substitute(&f, &Subst::IntVar(ET.into(), Term::Int(2)));
        assert_eq!(r, Formula::neq(Term::Int(2), Term::Int(3)));
    }

    #[test]
    fn substitution_into_param_args() {
        // Q_N(e_t)[e_t -> x1 + e_t] == Q_N(x1 + e_t)
        let f = qn(et());
        let r = substitute(
            &f,
            &Subst::IntVar(ET.into(), Term::add(Term::var("x1"), et())),
        );
        assert_eq!(r, qn(Term::add(Term::var("x1"), et())));
    }

    #[test]
    fn bound_occurrence_untouched() {
        let f = Formula::forall(ET, VarSort::Int, Formula::lt(Term::Int(0), et()));
        let r = substitute(&f, &Subst::IntVar(ET.into(), Term::Int(5)));
        assert!(alpha_eq(&f, &r));
    }

    #[test]
    fn capture_avoided_by_renaming() {
        // (forall y. x < y)[x -> y] must rename the binder.
        let f = Formula::forall("y", VarSort::Int, Formula::lt(Term::var("x"), Term::var("y")));
        let r = substitute(&f, &Subst::IntVar("x".into(), Term::var("y")));
        let expected =
            Formula::forall("w", VarSort::Int, Formula::lt(Term::var("y"), Term::var("w")));
        assert!(alpha_eq(&r, &expected), "got {}", print_formula(&r));
    }

    #[test]
    fn vector_rename() {
        // (x[1]=x[2])[x -> y] == y[1]=y[2]
        let f = Formula::eq(Term::elem("x", Term::Int(1)), Term::elem("x", Term::Int(2)));
        let r = substitute(&f, &Subst::vec_rename_int("x", "y"));
        assert_eq!(
            r,
            Formula::eq(Term::elem("y", Term::Int(1)), Term::elem("y", Term::Int(2)))
        );
    }

    #[test]
    fn vector_elementwise_map() {
        // (forall i. x[i] < n)[x[i] -> x[i]+1] == forall i. x[i]+1 < n
        let f = Formula::forall(
            "i",
            VarSort::Idx,
            Formula::lt(Term::elem("x", Term::var("i")), Term::var("n")),
        );
        let s = Subst::VecInt {
            vec: "x".into(),
            idx: "j".into(),
            body: Term::add(Term::elem("x", Term::var("j")), Term::Int(1)),
        };
        let r = substitute(&f, &s);
        let expected = Formula::forall(
            "i",
            VarSort::Idx,
            Formula::lt(Term::add(Term::elem("x", Term::var("i")), Term::Int(1)), Term::var("n")),
        );
        assert!(alpha_eq(&r, &expected), "got {}", print_formula(&r));
    }

    #[test]
    fn vector_subst_under_param_arg() {
        let f = Formula::ParamApp("Q".into(), vec![Arg::Int(Term::elem("x", Term::Int(1)))]);
        let r = substitute(&f, &Subst::vec_rename_int("x", "y"));
        assert_eq!(
            r,
            Formula::ParamApp("Q".into(), vec![Arg::Int(Term::elem("y", Term::Int(1)))])
        );
    }

    #[test]
    fn free_vars_of_param_app() {
        assert_eq!(free_vars(&qn(et())), vec![(ET.to_string(), VarSort::Int)]);
    }

    #[test]
    fn free_vars_of_adapt_shape() {
        // forall y. (Q_S(y, x) -> Q[x -> y]) has frees {x} (plus Q's frees).
        let f = Formula::forall(
            "y",
            VarSort::Int,
            Formula::implies(
                Formula::ParamApp(
                    "Q_S".into(),
                    vec![Arg::Int(Term::var("y")), Arg::Int(Term::var("x"))],
                ),
                Formula::lt(Term::var("y"), Term::Int(10)),
            ),
        );
        assert_eq!(free_vars(&f), vec![("x".to_string(), VarSort::Int)]);
    }

    #[test]
    fn closed_formula_has_no_frees() {
        let f = Formula::forall("a", VarSort::Int, Formula::eq(Term::var("a"), Term::var("a")));
        assert!(free_vars(&f).is_empty());
    }

    #[test]
    fn t_transform_two_indices_matches_worked_example() {
        // Q = (x[1] = x[2]) over indices {1,2}:
        //   (b[1] ∧ b[2] -> y[1]=y[2]) ∧ (b[1] ∧ ¬b[2] -> y[1]=x[2])
        // ∧ (¬b[1] ∧ b[2] -> x[1]=y[2]) ∧ (¬b[1] ∧ ¬b[2] -> x[1]=x[2])
        let q = Formula::eq(Term::elem("x", Term::Int(1)), Term::elem("x", Term::Int(2)));
        let mut ys = YMap::new();
        ys.insert("x".into(), "y".into());
        let r = t_transform(&q, "b_loop", &ys).unwrap();
        let b = |j: i64| Formula::bool_elem("b_loop", Term::Int(j));
        let x = |j: i64| Term::elem("x", Term::Int(j));
        let y = |j: i64| Term::elem("y", Term::Int(j));
        let expected = Formula::conj(vec![
            Formula::implies(Formula::and(b(1), b(2)), Formula::eq(y(1), y(2))),
            Formula::implies(Formula::and(b(1), Formula::not(b(2))), Formula::eq(y(1), x(2))),
            Formula::implies(Formula::and(Formula::not(b(1)), b(2)), Formula::eq(x(1), y(2))),
            Formula::implies(
                Formula::and(Formula::not(b(1)), Formula::not(b(2))),
                Formula::eq(x(1), x(2)),
            ),
        ]);
        assert!(alpha_eq(&r, &expected), "got {}", print_formula(&r));
    }

    #[test]
    fn t_transform_no_vector_atoms_is_identity() {
        let mut ys = YMap::new();
        ys.insert("x".into(), "y".into());
        assert_eq!(t_transform(&Formula::True, "b_loop", &ys).unwrap(), Formula::True);
        let scalar = Formula::lt(Term::var("n"), Term::Int(3));
        assert_eq!(t_transform(&scalar, "b_loop", &ys).unwrap(), scalar);
    }

    #[test]
    fn t_transform_under_quantifiers() {
        // Q = forall i, j. x[i]=x[j] -> i=j: the comparison atom over indices
        // {i, j} gets a 4-case split under the quantifiers; the index
        // equality atom has no vector indices and stays.
        let q = Formula::forall(
            "i",
            VarSort::Idx,
            Formula::forall(
                "j",
                VarSort::Idx,
                Formula::implies(
                    Formula::eq(Term::elem("x", Term::var("i")), Term::elem("x", Term::var("j"))),
                    Formula::eq(Term::var("i"), Term::var("j")),
                ),
            ),
        );
        let mut ys = YMap::new();
        ys.insert("x".into(), "y".into());
        let r = t_transform(&q, "b_loop", &ys).unwrap();
        // Shape: forall i. forall j. (4-case conj) -> i=j
        match &r {
            Formula::Quantified(Quant::Forall, _, body) => match body.as_ref() {
                Formula::Quantified(Quant::Forall, _, inner) => match inner.as_ref() {
                    Formula::Implies(lhs, _) => {
                        let cases = count_conjuncts(lhs);
                        assert_eq!(cases, 4);
                    }
                    other => panic!("expected implication, got {}", print_formula(other)),
                },
                other => panic!("expected inner forall, got {}", print_formula(other)),
            },
            other => panic!("expected forall, got {}", print_formula(other)),
        }
    }

    fn count_conjuncts(f: &Formula) -> usize {
        match f {
            Formula::And(a, b) => count_conjuncts(a) + count_conjuncts(b),
            _ => 1,
        }
    }

    #[test]
    fn t_transform_rejects_b_loop_mention() {
        let q = Formula::bool_elem("b_loop", Term::Int(1));
        assert!(t_transform(&q, "b_loop", &YMap::new()).is_err());
    }

    #[test]
    fn expand_idx_forall() {
        let f = Formula::forall(
            "i",
            VarSort::Idx,
            Formula::eq(Term::elem("x", Term::var("i")), Term::Int(0)),
        );
        let r = expand_idx_quantifiers(&f, 2);
        let expected = Formula::and(
            Formula::eq(Term::elem("x", Term::Int(1)), Term::Int(0)),
            Formula::eq(Term::elem("x", Term::Int(2)), Term::Int(0)),
        );
        assert_eq!(r, expected);
    }

    #[test]
    fn ground_vectors_flattens() {
        let f = Formula::forall(
            "v",
            VarSort::VecInt,
            Formula::eq(Term::elem("v", Term::Int(1)), Term::elem("x", Term::Int(2))),
        );
        let r = ground_vectors(&f, 2).unwrap();
        let expected = Formula::forall(
            "v!1",
            VarSort::Int,
            Formula::forall(
                "v!2",
                VarSort::Int,
                Formula::eq(Term::var("v!1"), Term::var("x!2")),
            ),
        );
        assert_eq!(r, expected);
    }

    #[test]
    fn parse_print_formulas() {
        let scope = FormulaScope::default();
        for src in [
            "(= (mod e_t 2) 0)",
            "(forall (e_t_y Int) (=> (Q e_t_y) (not (= e_t_y 3))))",
            "(and (< x 3) (or true (= x 1)))",
        ] {
            let mut sc = scope.clone();
            sc.params.insert("Q".into(), 1);
            let f = parse_formula_text(src, &sc).unwrap();
            let printed = print_formula(&f);
            let re = parse_formula_text(&printed, &sc).unwrap();
            assert_eq!(f, re);
        }
    }

    #[test]
    fn alpha_eq_binding_structure() {
        let a = Formula::forall("u", VarSort::Int, Formula::eq(Term::var("u"), Term::var("x")));
        let b = Formula::forall("v", VarSort::Int, Formula::eq(Term::var("v"), Term::var("x")));
        let c = Formula::forall("v", VarSort::Int, Formula::eq(Term::var("v"), Term::var("y")));
        assert!(alpha_eq(&a, &b));
        assert!(!alpha_eq(&a, &c));
    }
}
