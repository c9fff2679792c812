//! Ground-truth semantics: a concrete big-step interpreter for the base
//! language (scalar and finite-vector states, with the e_t/b_t convention),
//! a bounded program enumerator for grammars, and a brute-force triple
//! checker used by property tests and negative certification.

use std::collections::BTreeMap;

use indexmap::IndexSet;
use thiserror::Error;

use crate::gimp::{CompOp, GimpTerm, GrammarError, Rtg, BT, ET};
use crate::logic::{Arg, Formula, Quant, Term, VarSort};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Value {
    Int(i64),
    Bool(bool),
    VecInt(Vec<i64>),
    VecBool(Vec<bool>),
}

impl Value {
    fn sort(&self) -> VarSort {
        match self {
            Value::Int(_) => VarSort::Int,
            Value::Bool(_) => VarSort::Bool,
            Value::VecInt(_) => VarSort::VecInt,
            Value::VecBool(_) => VarSort::VecBool,
        }
    }
}

impl std::fmt::Display for Value {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Value::Int(n) => write!(f, "{n}"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::VecInt(v) => {
                write!(f, "[")?;
                for (i, x) in v.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{x}")?;
                }
                write!(f, "]")
            }
            Value::VecBool(v) => {
                write!(f, "[")?;
                for (i, x) in v.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{x}")?;
                }
                write!(f, "]")
            }
        }
    }
}

/// A concrete state: every referenced variable must be bound.
pub type State = BTreeMap<String, Value>;

pub fn show_state(s: &State) -> String {
    let mut out = String::from("{");
    for (i, (k, v)) in s.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        out.push_str(&format!("{k}:{v}"));
    }
    out.push('}');
    out
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExecError {
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error("variable `{0}` has the wrong sort")]
    SortMismatch(String),
    #[error("program is not closed (contains nonterminal `{0}`)")]
    NotClosed(String),
}

/// Per-While iteration cap and enumeration depth cap.
#[derive(Debug, Clone, Copy)]
pub struct FuelBudget {
    pub max_loop_iters: u32,
    pub max_depth: u32,
}

impl FuelBudget {
    pub fn new(max_loop_iters: u32, max_depth: u32) -> FuelBudget {
        assert!(max_loop_iters > 0 && max_depth > 0);
        FuelBudget { max_loop_iters, max_depth }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Done(State),
    Diverged,
}

fn get_int(st: &State, x: &str) -> Result<i64, ExecError> {
    match st.get(x) {
        Some(Value::Int(n)) => Ok(*n),
        Some(_) => Err(ExecError::SortMismatch(x.to_string())),
        None => Err(ExecError::Unbound(x.to_string())),
    }
}

/// Scalar big-step evaluation. Expression evaluation writes e_t/b_t; the
/// value of the whole expression is also returned for the caller.
fn exec_scalar(p: &GimpTerm, st: &mut State, fuel: &FuelBudget) -> Result<Option<Value>, ExecError> {
    match p {
        GimpTerm::IntLit(n) => {
            st.insert(ET.to_string(), Value::Int(*n));
            Ok(Some(Value::Int(*n)))
        }
        GimpTerm::BoolLit(b) => {
            st.insert(BT.to_string(), Value::Bool(*b));
            Ok(Some(Value::Bool(*b)))
        }
        GimpTerm::Var(x) => {
            let v = get_int(st, x)?;
            st.insert(ET.to_string(), Value::Int(v));
            Ok(Some(Value::Int(v)))
        }
        GimpTerm::Plus(a, b) => {
            let va = match exec_scalar(a, st, fuel)? {
                Some(Value::Int(v)) => v,
                _ => return Err(ExecError::SortMismatch("+".to_string())),
            };
            let vb = match exec_scalar(b, st, fuel)? {
                Some(Value::Int(v)) => v,
                _ => return Err(ExecError::SortMismatch("+".to_string())),
            };
            let v = va.wrapping_add(vb);
            st.insert(ET.to_string(), Value::Int(v));
            Ok(Some(Value::Int(v)))
        }
        GimpTerm::Not(a) => {
            let va = match exec_scalar(a, st, fuel)? {
                Some(Value::Bool(v)) => v,
                _ => return Err(ExecError::SortMismatch("not".to_string())),
            };
            st.insert(BT.to_string(), Value::Bool(!va));
            Ok(Some(Value::Bool(!va)))
        }
        GimpTerm::And(a, b) => {
            // Both sides evaluate (the logic is non-short-circuit).
            let va = match exec_scalar(a, st, fuel)? {
                Some(Value::Bool(v)) => v,
                _ => return Err(ExecError::SortMismatch("and".to_string())),
            };
            let vb = match exec_scalar(b, st, fuel)? {
                Some(Value::Bool(v)) => v,
                _ => return Err(ExecError::SortMismatch("and".to_string())),
            };
            st.insert(BT.to_string(), Value::Bool(va && vb));
            Ok(Some(Value::Bool(va && vb)))
        }
        GimpTerm::Comp(op, a, b) => {
            let va = match exec_scalar(a, st, fuel)? {
                Some(Value::Int(v)) => v,
                _ => return Err(ExecError::SortMismatch("comparison".to_string())),
            };
            let vb = match exec_scalar(b, st, fuel)? {
                Some(Value::Int(v)) => v,
                _ => return Err(ExecError::SortMismatch("comparison".to_string())),
            };
            let v = match op {
                CompOp::Lt => va < vb,
                CompOp::Eq => va == vb,
            };
            st.insert(BT.to_string(), Value::Bool(v));
            Ok(Some(Value::Bool(v)))
        }
        GimpTerm::Assign(x, e) => {
            let v = match exec_scalar(e, st, fuel)? {
                Some(Value::Int(v)) => v,
                _ => return Err(ExecError::SortMismatch(":=".to_string())),
            };
            st.insert(x.clone(), Value::Int(v));
            Ok(None)
        }
        GimpTerm::Seq(a, b) => {
            exec_scalar(a, st, fuel)?;
            exec_scalar(b, st, fuel)?;
            Ok(None)
        }
        GimpTerm::IfThenElse(g, t, e) => {
            let v = match exec_scalar(g, st, fuel)? {
                Some(Value::Bool(v)) => v,
                _ => return Err(ExecError::SortMismatch("if".to_string())),
            };
            if v {
                exec_scalar(t, st, fuel)?;
            } else {
                exec_scalar(e, st, fuel)?;
            }
            Ok(None)
        }
        GimpTerm::While(g, body) => {
            let mut iters = 0;
            loop {
                let v = match exec_scalar(g, st, fuel)? {
                    Some(Value::Bool(v)) => v,
                    _ => return Err(ExecError::SortMismatch("while".to_string())),
                };
                if !v {
                    return Ok(None);
                }
                if iters >= fuel.max_loop_iters {
                    return Err(ExecError::Unbound("__diverged".to_string()));
                }
                iters += 1;
                exec_scalar(body, st, fuel)?;
            }
        }
        GimpTerm::Skip => Ok(None),
        GimpTerm::NonterminalRef(n) => Err(ExecError::NotClosed(n.clone())),
    }
}

/// Execute a closed program on a state. Vector states run each index as an
/// independent scalar state; a run that exhausts its loop fuel at any index
/// reports Diverged (treated as vacuous under partial correctness).
pub fn exec(p: &GimpTerm, s: &State, k: Option<usize>, fuel: &FuelBudget) -> Result<Outcome, ExecError> {
    match k {
        None => {
            let mut st = s.clone();
            match exec_scalar(p, &mut st, fuel) {
                Ok(_) => Ok(Outcome::Done(st)),
                Err(ExecError::Unbound(v)) if v == "__diverged" => Ok(Outcome::Diverged),
                Err(e) => Err(e),
            }
        }
        Some(k) => {
            // Split into k scalar states, run pointwise, rejoin.
            let mut slices: Vec<State> = vec![BTreeMap::new(); k];
            for (name, v) in s {
                match v {
                    Value::VecInt(xs) => {
                        if xs.len() != k {
                            return Err(ExecError::SortMismatch(name.clone()));
                        }
                        for (j, x) in xs.iter().enumerate() {
                            slices[j].insert(name.clone(), Value::Int(*x));
                        }
                    }
                    Value::VecBool(xs) => {
                        if xs.len() != k {
                            return Err(ExecError::SortMismatch(name.clone()));
                        }
                        for (j, x) in xs.iter().enumerate() {
                            slices[j].insert(name.clone(), Value::Bool(*x));
                        }
                    }
                    scalar => {
                        for slice in &mut slices {
                            slice.insert(name.clone(), scalar.clone());
                        }
                    }
                }
            }
            let mut results = Vec::with_capacity(k);
            for slice in &slices {
                match exec(p, slice, None, fuel)? {
                    Outcome::Done(st) => results.push(st),
                    Outcome::Diverged => return Ok(Outcome::Diverged),
                }
            }
            // Rejoin: every variable bound in any slice becomes a vector.
            let mut names: IndexSet<String> = IndexSet::new();
            for r in &results {
                for name in r.keys() {
                    names.insert(name.clone());
                }
            }
            let mut out = State::new();
            for name in names {
                let sort = results.iter().find_map(|r| r.get(&name)).map(|v| v.sort());
                match sort {
                    Some(VarSort::Int) => {
                        let mut xs = Vec::with_capacity(k);
                        for r in &results {
                            xs.push(match r.get(&name) {
                                Some(Value::Int(v)) => *v,
                                _ => return Err(ExecError::Unbound(name.clone())),
                            });
                        }
                        out.insert(name, Value::VecInt(xs));
                    }
                    Some(VarSort::Bool) => {
                        let mut xs = Vec::with_capacity(k);
                        for r in &results {
                            xs.push(match r.get(&name) {
                                Some(Value::Bool(v)) => *v,
                                _ => return Err(ExecError::Unbound(name.clone())),
                            });
                        }
                        out.insert(name, Value::VecBool(xs));
                    }
                    _ => return Err(ExecError::Unbound(name)),
                }
            }
            Ok(Outcome::Done(out))
        }
    }
}

// ---------------------------------------------------------------------------
// Bounded program enumeration

/// All complete derivations from `n` of derivation height <= depth,
/// deduplicated, in deterministic order (production order, then recursive).
pub fn enumerate_programs(g: &Rtg, n: &str, depth: u32) -> Result<Vec<GimpTerm>, GrammarError> {
    let mut memo: BTreeMap<(String, u32), Vec<GimpTerm>> = BTreeMap::new();
    fn expand(
        t: &GimpTerm,
        g: &Rtg,
        depth: u32,
        memo: &mut BTreeMap<(String, u32), Vec<GimpTerm>>,
    ) -> Result<Vec<GimpTerm>, GrammarError> {
        match t {
            GimpTerm::NonterminalRef(m) => programs_of(g, m, depth, memo),
            _ => {
                let children = t.children();
                if children.is_empty() {
                    return Ok(vec![t.clone()]);
                }
                let mut expanded: Vec<Vec<GimpTerm>> = Vec::new();
                for c in &children {
                    expanded.push(expand(c, g, depth, memo)?);
                }
                if expanded.iter().any(|v| v.is_empty()) {
                    return Ok(vec![]);
                }
                let mut out = Vec::new();
                let mut idx = vec![0usize; expanded.len()];
                'outer: loop {
                    let picks: Vec<GimpTerm> =
                        idx.iter().enumerate().map(|(i, &j)| expanded[i][j].clone()).collect();
                    out.push(rebuild(t, &picks));
                    // Odometer increment, last child fastest.
                    for i in (0..idx.len()).rev() {
                        idx[i] += 1;
                        if idx[i] < expanded[i].len() {
                            continue 'outer;
                        }
                        idx[i] = 0;
                        if i == 0 {
                            break 'outer;
                        }
                    }
                }
                Ok(out)
            }
        }
    }
    fn rebuild(t: &GimpTerm, picks: &[GimpTerm]) -> GimpTerm {
        match t {
            GimpTerm::Plus(..) => GimpTerm::plus(picks[0].clone(), picks[1].clone()),
            GimpTerm::Not(..) => GimpTerm::Not(Box::new(picks[0].clone())),
            GimpTerm::And(..) => {
                GimpTerm::And(Box::new(picks[0].clone()), Box::new(picks[1].clone()))
            }
            GimpTerm::Comp(op, ..) => {
                GimpTerm::Comp(*op, Box::new(picks[0].clone()), Box::new(picks[1].clone()))
            }
            GimpTerm::Assign(x, _) => GimpTerm::assign(x, picks[0].clone()),
            GimpTerm::Seq(..) => GimpTerm::seq(picks[0].clone(), picks[1].clone()),
            GimpTerm::IfThenElse(..) => {
                GimpTerm::ite(picks[0].clone(), picks[1].clone(), picks[2].clone())
            }
            GimpTerm::While(..) => GimpTerm::while_loop(picks[0].clone(), picks[1].clone()),
            _ => t.clone(),
        }
    }
    fn programs_of(
        g: &Rtg,
        n: &str,
        depth: u32,
        memo: &mut BTreeMap<(String, u32), Vec<GimpTerm>>,
    ) -> Result<Vec<GimpTerm>, GrammarError> {
        if depth == 0 {
            return Ok(vec![]);
        }
        if let Some(v) = memo.get(&(n.to_string(), depth)) {
            return Ok(v.clone());
        }
        let mut out: Vec<GimpTerm> = Vec::new();
        for rhs in g.productions(n)? {
            for t in expand(rhs, g, depth - 1, memo)? {
                if !out.contains(&t) {
                    out.push(t);
                }
            }
        }
        memo.insert((n.to_string(), depth), out.clone());
        Ok(out)
    }
    programs_of(g, n, depth, &mut memo)
}

/// Instantiate a partial program at bounded depth: nonterminal references
/// expand to their bounded languages, closed parts stay fixed.
pub fn enumerate_partial(
    g: &Rtg,
    t: &GimpTerm,
    depth: u32,
) -> Result<Vec<GimpTerm>, GrammarError> {
    if let GimpTerm::NonterminalRef(n) = t {
        return enumerate_programs(g, n, depth);
    }
    let children = t.children();
    if children.is_empty() {
        return Ok(vec![t.clone()]);
    }
    let mut expanded = Vec::new();
    for c in &children {
        expanded.push(enumerate_partial(g, c, depth)?);
    }
    let mut out = Vec::new();
    let mut idx = vec![0usize; expanded.len()];
    if expanded.iter().any(|v| v.is_empty()) {
        return Ok(vec![]);
    }
    'outer: loop {
        let picks: Vec<GimpTerm> =
            idx.iter().enumerate().map(|(i, &j)| expanded[i][j].clone()).collect();
        out.push(rebuild_term(t, &picks));
        for i in (0..idx.len()).rev() {
            idx[i] += 1;
            if idx[i] < expanded[i].len() {
                continue 'outer;
            }
            idx[i] = 0;
            if i == 0 {
                break 'outer;
            }
        }
    }
    Ok(out)
}

fn rebuild_term(t: &GimpTerm, picks: &[GimpTerm]) -> GimpTerm {
    match t {
        GimpTerm::Plus(..) => GimpTerm::plus(picks[0].clone(), picks[1].clone()),
        GimpTerm::Not(..) => GimpTerm::Not(Box::new(picks[0].clone())),
        GimpTerm::And(..) => GimpTerm::And(Box::new(picks[0].clone()), Box::new(picks[1].clone())),
        GimpTerm::Comp(op, ..) => {
            GimpTerm::Comp(*op, Box::new(picks[0].clone()), Box::new(picks[1].clone()))
        }
        GimpTerm::Assign(x, _) => GimpTerm::assign(x, picks[0].clone()),
        GimpTerm::Seq(..) => GimpTerm::seq(picks[0].clone(), picks[1].clone()),
        GimpTerm::IfThenElse(..) => {
            GimpTerm::ite(picks[0].clone(), picks[1].clone(), picks[2].clone())
        }
        GimpTerm::While(..) => GimpTerm::while_loop(picks[0].clone(), picks[1].clone()),
        _ => t.clone(),
    }
}

// ---------------------------------------------------------------------------
// Formula evaluation over concrete states

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("unbound variable `{0}` in formula")]
    Unbound(String),
    #[error("sort error at `{0}`")]
    Sort(String),
    #[error("cannot evaluate parameter `{0}` (plug in an assignment first)")]
    Param(String),
    #[error("no interpretation for function `{0}`")]
    Fun(String),
    #[error("integer quantifier over `{0}` needs a finite evaluation domain")]
    NeedDomain(String),
}

/// Evaluation context: the vector length (when vectored), the finite range
/// integer quantifiers are evaluated over, and interpretations for skolem
/// functions.
pub struct EvalCtx<'a> {
    pub k: Option<usize>,
    pub int_domain: Option<(i64, i64)>,
    pub funs: Option<&'a BTreeMap<String, (Vec<String>, Term)>>,
}

impl<'a> EvalCtx<'a> {
    pub fn scalar(domain: (i64, i64)) -> EvalCtx<'a> {
        EvalCtx { k: None, int_domain: Some(domain), funs: None }
    }

    pub fn vectored(k: usize, domain: (i64, i64)) -> EvalCtx<'a> {
        EvalCtx { k: Some(k), int_domain: Some(domain), funs: None }
    }
}

pub fn eval_term(t: &Term, st: &State, ctx: &EvalCtx) -> Result<i64, EvalError> {
    match t {
        Term::Int(n) => Ok(*n),
        Term::Var(x) => match st.get(x) {
            Some(Value::Int(v)) => Ok(*v),
            Some(_) => Err(EvalError::Sort(x.clone())),
            None => Err(EvalError::Unbound(x.clone())),
        },
        Term::VecElem(x, i) => {
            let idx = eval_term(i, st, ctx)?;
            match st.get(x) {
                Some(Value::VecInt(v)) => {
                    if idx < 1 || idx as usize > v.len() {
                        return Err(EvalError::Sort(format!("{x}[{idx}]")));
                    }
                    Ok(v[idx as usize - 1])
                }
                Some(_) => Err(EvalError::Sort(x.clone())),
                None => Err(EvalError::Unbound(x.clone())),
            }
        }
        Term::Add(a, b) => Ok(eval_term(a, st, ctx)?.wrapping_add(eval_term(b, st, ctx)?)),
        Term::Mul(c, a) => Ok(c.wrapping_mul(eval_term(a, st, ctx)?)),
        Term::Div(a, d) => Ok(eval_term(a, st, ctx)?.div_euclid(*d)),
        Term::Mod(a, d) => Ok(eval_term(a, st, ctx)?.rem_euclid(*d)),
        Term::FunApp(f, args) => {
            let defs = ctx.funs.ok_or_else(|| EvalError::Fun(f.clone()))?;
            let (formals, body) = defs.get(f).ok_or_else(|| EvalError::Fun(f.clone()))?;
            if formals.len() != args.len() {
                return Err(EvalError::Sort(f.clone()));
            }
            let mut inner = st.clone();
            for (formal, arg) in formals.iter().zip(args) {
                let v = eval_term(arg, st, ctx)?;
                inner.insert(formal.clone(), Value::Int(v));
            }
            eval_term(body, &inner, ctx)
        }
    }
}

pub fn eval_formula(f: &Formula, st: &State, ctx: &EvalCtx) -> Result<bool, EvalError> {
    match f {
        Formula::True => Ok(true),
        Formula::False => Ok(false),
        Formula::BoolVar(x) => match st.get(x) {
            Some(Value::Bool(v)) => Ok(*v),
            Some(_) => Err(EvalError::Sort(x.clone())),
            None => Err(EvalError::Unbound(x.clone())),
        },
        Formula::BoolVecElem(x, i) => {
            let idx = eval_term(i, st, ctx)?;
            match st.get(x) {
                Some(Value::VecBool(v)) => {
                    if idx < 1 || idx as usize > v.len() {
                        return Err(EvalError::Sort(format!("{x}[{idx}]")));
                    }
                    Ok(v[idx as usize - 1])
                }
                Some(_) => Err(EvalError::Sort(x.clone())),
                None => Err(EvalError::Unbound(x.clone())),
            }
        }
        Formula::Lt(a, b) => Ok(eval_term(a, st, ctx)? < eval_term(b, st, ctx)?),
        Formula::Eq(a, b) => Ok(eval_term(a, st, ctx)? == eval_term(b, st, ctx)?),
        Formula::Not(a) => Ok(!eval_formula(a, st, ctx)?),
        Formula::And(a, b) => Ok(eval_formula(a, st, ctx)? && eval_formula(b, st, ctx)?),
        Formula::Or(a, b) => Ok(eval_formula(a, st, ctx)? || eval_formula(b, st, ctx)?),
        Formula::Implies(a, b) => Ok(!eval_formula(a, st, ctx)? || eval_formula(b, st, ctx)?),
        Formula::Iff(a, b) => Ok(eval_formula(a, st, ctx)? == eval_formula(b, st, ctx)?),
        Formula::Quantified(q, binder, body) => {
            let want_all = *q == Quant::Forall;
            let assignments: Vec<Value> = match binder.sort {
                VarSort::Bool => vec![Value::Bool(false), Value::Bool(true)],
                VarSort::Idx => {
                    let k = ctx.k.ok_or_else(|| EvalError::Sort(binder.name.clone()))? as i64;
                    (1..=k).map(Value::Int).collect()
                }
                VarSort::Int => {
                    let (lo, hi) =
                        ctx.int_domain.ok_or_else(|| EvalError::NeedDomain(binder.name.clone()))?;
                    (lo..=hi).map(Value::Int).collect()
                }
                VarSort::VecInt => {
                    let k = ctx.k.ok_or_else(|| EvalError::Sort(binder.name.clone()))?;
                    let (lo, hi) =
                        ctx.int_domain.ok_or_else(|| EvalError::NeedDomain(binder.name.clone()))?;
                    all_int_vectors(k, lo, hi).into_iter().map(Value::VecInt).collect()
                }
                VarSort::VecBool => {
                    let k = ctx.k.ok_or_else(|| EvalError::Sort(binder.name.clone()))?;
                    all_bool_vectors(k).into_iter().map(Value::VecBool).collect()
                }
            };
            for v in assignments {
                let mut inner = st.clone();
                inner.insert(binder.name.clone(), v);
                let r = eval_formula(body, &inner, ctx)?;
                if want_all && !r {
                    return Ok(false);
                }
                if !want_all && r {
                    return Ok(true);
                }
            }
            Ok(want_all)
        }
        Formula::ParamApp(p, _) => Err(EvalError::Param(p.clone())),
    }
}

pub fn all_int_vectors(k: usize, lo: i64, hi: i64) -> Vec<Vec<i64>> {
    let mut out = vec![vec![]];
    for _ in 0..k {
        let mut next = Vec::new();
        for v in &out {
            for x in lo..=hi {
                let mut w = v.clone();
                w.push(x);
                next.push(w);
            }
        }
        out = next;
    }
    out
}

pub fn all_bool_vectors(k: usize) -> Vec<Vec<bool>> {
    let mut out = vec![vec![]];
    for _ in 0..k {
        let mut next = Vec::new();
        for v in &out {
            for x in [false, true] {
                let mut w = v.clone();
                w.push(x);
                next.push(w);
            }
        }
        out = next;
    }
    out
}

/// Evaluate any leftover parameter-free arguments-only formula after
/// plugging; helper for tests that work with Arg lists.
pub fn eval_arg(a: &Arg, st: &State, ctx: &EvalCtx) -> Result<Value, EvalError> {
    match a {
        Arg::Int(t) => Ok(Value::Int(eval_term(t, st, ctx)?)),
        Arg::Bool(f) => Ok(Value::Bool(eval_formula(f, st, ctx)?)),
    }
}

// ---------------------------------------------------------------------------
// Brute-force triple checking

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TripleVerdict {
    Holds,
    Counterexample { program: GimpTerm, state: State },
}

pub struct CheckParams {
    pub domain: (i64, i64),
    pub fuel: FuelBudget,
    pub depth: u32,
    pub k: Option<usize>,
}

/// Variables a triple check must enumerate: program variables read or
/// assigned anywhere, plus free scalar variables of pre/post that are not
/// reserved. Initial e_t/b_t are bound to defaults (programs cannot read
/// them before writing).
fn state_vars(
    g: &Rtg,
    program: &GimpTerm,
    pre: &Formula,
    post: &Formula,
) -> Vec<(String, VarSort)> {
    let mut vars: Vec<(String, VarSort)> = Vec::new();
    for v in g.all_program_vars(program) {
        vars.push((v, VarSort::Int));
    }
    for (v, sort) in crate::logic::free_vars(pre).into_iter().chain(crate::logic::free_vars(post)) {
        if v == ET || v == BT {
            continue;
        }
        let base = match sort {
            VarSort::VecInt => VarSort::Int,
            VarSort::VecBool => VarSort::Bool,
            s => s,
        };
        if !vars.iter().any(|(n, _)| n == &v) {
            vars.push((v, base));
        }
    }
    vars
}

fn all_states(vars: &[(String, VarSort)], params: &CheckParams) -> Vec<State> {
    let (lo, hi) = params.domain;
    let mut states = vec![State::new()];
    for (name, sort) in vars {
        let choices: Vec<Value> = match (sort, params.k) {
            (VarSort::Int, None) => (lo..=hi).map(Value::Int).collect(),
            (VarSort::Bool, None) => vec![Value::Bool(false), Value::Bool(true)],
            (VarSort::Int, Some(k)) => {
                all_int_vectors(k, lo, hi).into_iter().map(Value::VecInt).collect()
            }
            (VarSort::Bool, Some(k)) => {
                all_bool_vectors(k).into_iter().map(Value::VecBool).collect()
            }
            _ => unreachable!(),
        };
        let mut next = Vec::new();
        for st in &states {
            for c in &choices {
                let mut s2 = st.clone();
                s2.insert(name.clone(), c.clone());
                next.push(s2);
            }
        }
        states = next;
    }
    // Reserved scratch variables start at fixed defaults.
    for st in &mut states {
        match params.k {
            None => {
                st.insert(ET.to_string(), Value::Int(0));
                st.insert(BT.to_string(), Value::Bool(false));
            }
            Some(k) => {
                st.insert(ET.to_string(), Value::VecInt(vec![0; k]));
                st.insert(BT.to_string(), Value::VecBool(vec![false; k]));
            }
        }
    }
    states
}

/// Brute-force check of an unrealizability triple at desk scale: every
/// enumerated program, on every domain state satisfying the precondition,
/// must terminate in a state satisfying the postcondition (diverging runs
/// are vacuously fine).
pub fn check_triple(
    pre: &Formula,
    g: &Rtg,
    program: &GimpTerm,
    post: &Formula,
    params: &CheckParams,
) -> Result<TripleVerdict, String> {
    let programs = enumerate_partial(g, program, params.depth).map_err(|e| e.to_string())?;
    let vars = state_vars(g, program, pre, post);
    let states = all_states(&vars, params);
    let ctx = EvalCtx { k: params.k, int_domain: Some(params.domain), funs: None };
    for p in &programs {
        for st in &states {
            let pre_holds = eval_formula(pre, st, &ctx).map_err(|e| e.to_string())?;
            if !pre_holds {
                continue;
            }
            match exec(p, st, params.k, &params.fuel).map_err(|e| e.to_string())? {
                Outcome::Diverged => continue,
                Outcome::Done(end) => {
                    let ok = eval_formula(post, &end, &ctx).map_err(|e| e.to_string())?;
                    if !ok {
                        return Ok(TripleVerdict::Counterexample {
                            program: p.clone(),
                            state: st.clone(),
                        });
                    }
                }
            }
        }
    }
    Ok(TripleVerdict::Holds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gimp::parse_grammar_text;

    fn fuel() -> FuelBudget {
        FuelBudget::new(100, 8)
    }

    #[test]
    fn exec_sum_writes_et() {
        let p = GimpTerm::plus(GimpTerm::IntLit(2), GimpTerm::IntLit(2));
        let st = State::new();
        match exec(&p, &st, None, &fuel()).unwrap() {
            Outcome::Done(end) => assert_eq!(end.get(ET), Some(&Value::Int(4))),
            Outcome::Diverged => panic!("diverged"),
        }
    }

    #[test]
    fn exec_while_counts_up() {
        // x:=0; while x<2 do x:=x+1  ==> x=2
        let p = GimpTerm::seq(
            GimpTerm::assign("x", GimpTerm::IntLit(0)),
            GimpTerm::while_loop(
                GimpTerm::Comp(
                    CompOp::Lt,
                    Box::new(GimpTerm::Var("x".into())),
                    Box::new(GimpTerm::IntLit(2)),
                ),
                GimpTerm::assign("x", GimpTerm::plus(GimpTerm::Var("x".into()), GimpTerm::IntLit(1))),
            ),
        );
        let mut st = State::new();
        st.insert("x".into(), Value::Int(0));
        match exec(&p, &st, None, &fuel()).unwrap() {
            Outcome::Done(end) => assert_eq!(end.get("x"), Some(&Value::Int(2))),
            Outcome::Diverged => panic!("diverged"),
        }
    }

    #[test]
    fn exec_infinite_loop_diverges() {
        let p = GimpTerm::while_loop(GimpTerm::BoolLit(true), GimpTerm::Skip);
        let st = State::new();
        assert_eq!(exec(&p, &st, None, &fuel()).unwrap(), Outcome::Diverged);
    }

    #[test]
    fn exec_vector_branches_pointwise() {
        // if y==0 then x:=0 else x:=1 on y=[0,5] gives x=[0,1]
        let p = GimpTerm::ite(
            GimpTerm::Comp(
                CompOp::Eq,
                Box::new(GimpTerm::Var("y".into())),
                Box::new(GimpTerm::IntLit(0)),
            ),
            GimpTerm::assign("x", GimpTerm::IntLit(0)),
            GimpTerm::assign("x", GimpTerm::IntLit(1)),
        );
        let mut st = State::new();
        st.insert("y".into(), Value::VecInt(vec![0, 5]));
        st.insert("x".into(), Value::VecInt(vec![9, 9]));
        match exec(&p, &st, Some(2), &fuel()).unwrap() {
            Outcome::Done(end) => assert_eq!(end.get("x"), Some(&Value::VecInt(vec![0, 1]))),
            Outcome::Diverged => panic!("diverged"),
        }
    }

    #[test]
    fn exec_unbound_variable_errors() {
        let p = GimpTerm::Var("q".into());
        assert_eq!(
            exec(&p, &State::new(), None, &fuel()),
            Err(ExecError::Unbound("q".into()))
        );
    }

    #[test]
    fn enumerate_fig_depth3() {
        let g = parse_grammar_text("(nonterm N IntExpr 2 (+ 2 N))").unwrap();
        let ps = enumerate_programs(&g, "N", 3).unwrap();
        let two = GimpTerm::IntLit(2);
        assert_eq!(
            ps,
            vec![
                two.clone(),
                GimpTerm::plus(two.clone(), two.clone()),
                GimpTerm::plus(two.clone(), GimpTerm::plus(two.clone(), two.clone())),
            ]
        );
    }

    #[test]
    fn enumerate_non_recursive_singleton() {
        let g = parse_grammar_text("(nonterm E IntExpr (x))").unwrap();
        for d in 1..4 {
            assert_eq!(enumerate_programs(&g, "E", d).unwrap(), vec![GimpTerm::Var("x".into())]);
        }
    }

    #[test]
    fn enumerate_too_shallow_is_empty() {
        let g = parse_grammar_text("(nonterm N IntExpr (+ 2 M))\n(nonterm M IntExpr 3)").unwrap();
        assert_eq!(enumerate_programs(&g, "N", 1).unwrap(), vec![]);
        assert_eq!(enumerate_programs(&g, "N", 2).unwrap().len(), 1);
    }

    #[test]
    fn check_triple_fig_example_holds() {
        let g = parse_grammar_text("(nonterm N IntExpr 2 (+ 2 N))").unwrap();
        let post = Formula::neq(Term::var(ET), Term::Int(3));
        let params = CheckParams {
            domain: (0, 3),
            fuel: fuel(),
            depth: 5,
            k: None,
        };
        let v = check_triple(&Formula::True, &g, &GimpTerm::nt("N"), &post, &params).unwrap();
        assert_eq!(v, TripleVerdict::Holds);
    }

    #[test]
    fn check_triple_fig_negative_finds_2_plus_2() {
        let g = parse_grammar_text("(nonterm N IntExpr 2 (+ 2 N))").unwrap();
        let post = Formula::neq(Term::var(ET), Term::Int(4));
        let params = CheckParams {
            domain: (0, 3),
            fuel: fuel(),
            depth: 5,
            k: None,
        };
        match check_triple(&Formula::True, &g, &GimpTerm::nt("N"), &post, &params).unwrap() {
            TripleVerdict::Counterexample { program, .. } => {
                assert_eq!(program, GimpTerm::plus(GimpTerm::IntLit(2), GimpTerm::IntLit(2)));
            }
            TripleVerdict::Holds => panic!("expected counterexample"),
        }
    }

    #[test]
    fn eval_respects_euclidean_mod() {
        let ctx = EvalCtx::scalar((0, 3));
        let st = State::new();
        assert_eq!(eval_term(&Term::modulo(Term::Int(-7), 3), &st, &ctx).unwrap(), 2);
        assert_eq!(eval_term(&Term::Div(Box::new(Term::Int(-7)), 3), &st, &ctx).unwrap(), -3);
    }
}
