//! Parametrized verification conditions: extraction from Weaken nodes,
//! the quantifier-pulling/splitting optimization pipeline, second-order
//! skolemization of right-hand existentials, and plugging summary
//! assignments back into skeletons and PVCs.

use indexmap::{IndexMap, IndexSet};
use thiserror::Error;

use crate::gimp::FreshNames;
use crate::logic::{
    alpha_eq, expand_idx_quantifiers, fold_indices, free_vars, param_names, substitute, Arg,
    Binder, Formula, Quant, Subst, Term, VarSort,
};
use crate::skeleton::{
    check_syntactic, child_path, node_path_root, ParameterSig, RuleTag, Skeleton, SkeletonNode,
};

/// Where a PVC came from, for reporting and context-mode bookkeeping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PvcOrigin {
    /// The final Weaken connecting the triple's precondition.
    Goal,
    /// The Weaken above an HP application: x=z must imply the production
    /// preconditions, i.e. the obligations defining a nonterminal summary.
    SummaryDef(String),
    /// The Weaken on a loop guard hypothesis (invariant obligations).
    LoopGuard,
    /// The invariant-preservation Weaken of the vector-state While rule.
    LoopBody,
    /// The postcondition-side Weaken of the vector-state While rule.
    LoopExit,
}

#[derive(Debug, Clone)]
pub struct Pvc {
    /// Stable id derived from the node path (plus split ordinals).
    pub id: String,
    /// Universally quantified prefix: the free variables of the body.
    pub universals: Vec<(String, VarSort)>,
    /// An implication; plugging parameters yields a solver-checkable VC.
    pub body: Formula,
    pub origin: PvcOrigin,
    pub origin_path: String,
    /// Skolem functions introduced by the optimizer, with their inputs.
    pub skolem_funs: Vec<(String, Vec<String>)>,
}

impl Pvc {
    /// The universally closed formula.
    pub fn closed(&self) -> Formula {
        let mut f = self.body.clone();
        for (v, sort) in self.universals.iter().rev() {
            f = Formula::Quantified(
                Quant::Forall,
                Binder { name: v.clone(), sort: *sort },
                Box::new(f),
            );
        }
        f
    }

    pub fn render(&self) -> String {
        format!("{}: {}", self.id, crate::logic::print_formula(&self.closed()))
    }
}

#[derive(Debug, Error)]
pub enum VcgenError {
    #[error("skeleton fails syntactic checking:\n{0}")]
    Syntactic(String),
    #[error("Weaken at {0} changes both precondition and postcondition")]
    BadWeaken(String),
    #[error("no assignment for parameter `{0}`")]
    MissingParameter(String),
    #[error("parameter `{0}` applied with {1} arguments, signature has {2}")]
    ArityMismatch(String, usize, usize),
    #[error("assignment body for `{0}` has free variable `{1}` outside its formals")]
    FreeInBody(String, String),
    #[error("assignment body for `{0}` mentions parameter `{1}`")]
    ParamInBody(String, String),
}

/// One PVC per Weaken node, in pre-order. The body is conclusion-pre ->
/// hypothesis-pre (or hypothesis-post -> conclusion-post for the
/// postcondition-side Weaken of the vector-state While rule).
pub fn extract_pvcs(skel: &Skeleton, g: &crate::gimp::Rtg) -> Result<Vec<Pvc>, VcgenError> {
    let violations = check_syntactic(skel, g);
    if !violations.is_empty() {
        let text = violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("\n");
        return Err(VcgenError::Syntactic(text));
    }
    let mut out = Vec::new();
    walk(&skel.root, &node_path_root(&skel.root), None, &mut out)?;
    return Ok(out);

    fn walk(
        n: &SkeletonNode,
        path: &str,
        parent: Option<&SkeletonNode>,
        out: &mut Vec<Pvc>,
    ) -> Result<(), VcgenError> {
        if n.rule == RuleTag::Weaken {
            let child = &n.children[0];
            let pre_same = alpha_eq(&child.conclusion.pre, &n.conclusion.pre);
            let post_same = alpha_eq(&child.conclusion.post, &n.conclusion.post);
            let (body, origin) = if post_same {
                let body = Formula::implies(
                    n.conclusion.pre.clone(),
                    child.conclusion.pre.clone(),
                );
                let origin = match child.rule {
                    RuleTag::Hp => match &child.aux {
                        crate::skeleton::RuleAux::HpIntro(nt) => PvcOrigin::SummaryDef(nt.clone()),
                        _ => PvcOrigin::Goal,
                    },
                    _ => match parent.map(|p| p.rule) {
                        Some(RuleTag::SimpleWhile) => PvcOrigin::LoopGuard,
                        Some(RuleTag::VsWhile) => PvcOrigin::LoopBody,
                        _ => PvcOrigin::Goal,
                    },
                };
                (body, origin)
            } else if pre_same {
                let body = Formula::implies(
                    child.conclusion.post.clone(),
                    n.conclusion.post.clone(),
                );
                (body, PvcOrigin::LoopExit)
            } else {
                return Err(VcgenError::BadWeaken(path.to_string()));
            };
            out.push(Pvc {
                id: path.to_string(),
                universals: free_vars(&body),
                body,
                origin,
                origin_path: path.to_string(),
                skolem_funs: vec![],
            });
        }
        for (i, c) in n.children.iter().enumerate() {
            walk(c, &child_path(path, c, i), Some(n), out)?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Optimization pipeline

/// Expand finite index quantifiers, then iterate to a fixpoint: flatten
/// nested implications, pull right-hand universal quantifiers (and left-hand
/// existentials, as universals) to the prefix, and split right-hand
/// conjunctions. The result set is logically equivalent to the input.
pub fn optimize_pvcs(pvcs: &[Pvc], k: Option<usize>) -> Vec<Pvc> {
    let mut out = Vec::new();
    for pvc in pvcs {
        let body = match k {
            Some(k) => expand_idx_quantifiers(&pvc.body, k),
            None => pvc.body.clone(),
        };
        let mut work = vec![(pvc.id.clone(), pvc.universals.clone(), body)];
        let mut finished: Vec<Pvc> = Vec::new();
        while let Some((id, mut universals, mut body)) = work.pop() {
            loop {
                let (a, b) = match body {
                    Formula::Implies(a, b) => (*a, *b),
                    other => {
                        // Not an implication: normalize to true -> phi.
                        body = Formula::implies(Formula::True, other);
                        continue;
                    }
                };
                // Pull a universal off the right-hand side.
                if let Formula::Quantified(Quant::Forall, binder, inner) = b {
                    let (name, inner) = avoid_collision(binder, *inner, &universals, &a);
                    universals.push((name.name.clone(), name.sort));
                    body = Formula::implies(a, inner);
                    continue;
                }
                // Pull an existential off a left-hand conjunct.
                if let Some((lhs, binder, rest)) = pull_lhs_existential(&a) {
                    let (name, inner) = avoid_collision(binder, rest, &universals, &b);
                    universals.push((name.name.clone(), name.sort));
                    body = Formula::implies(rebuild_lhs(lhs, inner), b);
                    continue;
                }
                // Flatten a nested implication.
                if let Formula::Implies(c, d) = b {
                    body = Formula::implies(Formula::and(a, *c), *d);
                    continue;
                }
                // Split a right-hand conjunction.
                if let Formula::And(b1, b2) = b {
                    let conjuncts = flatten_and(Formula::And(b1, b2));
                    for (i, cj) in conjuncts.into_iter().enumerate().rev() {
                        work.push((
                            format!("{id}.{}", i + 1),
                            universals.clone(),
                            Formula::implies(a.clone(), cj),
                        ));
                    }
                    body = Formula::True; // sentinel: handled via work list
                    break;
                }
                body = Formula::implies(a, b);
                break;
            }
            if matches!(body, Formula::True) {
                continue;
            }
            // Keep only universals still free in the body.
            let frees = crate::logic::free_var_names(&body);
            let universals: Vec<(String, VarSort)> =
                universals.into_iter().filter(|(v, _)| frees.contains(v)).collect();
            finished.push(Pvc {
                id,
                universals,
                body: fold_indices(&body),
                origin: pvc.origin.clone(),
                origin_path: pvc.origin_path.clone(),
                skolem_funs: pvc.skolem_funs.clone(),
            });
        }
        // The work list is LIFO; restore the natural split order.
        finished.sort_by(|a, b| split_key(&a.id).cmp(&split_key(&b.id)));
        out.extend(finished);
    }
    out
}

fn split_key(id: &str) -> Vec<u64> {
    id.split('.')
        .filter_map(|part| part.parse::<u64>().ok())
        .collect()
}

fn flatten_and(f: Formula) -> Vec<Formula> {
    match f {
        Formula::And(a, b) => {
            let mut out = flatten_and(*a);
            out.extend(flatten_and(*b));
            out
        }
        other => vec![other],
    }
}

/// Left-hand side decomposed into conjuncts with one existential removed.
/// Returns (other conjuncts with a hole position, the binder, the stripped
/// conjunct body) when some top-level conjunct is an existential.
fn pull_lhs_existential(a: &Formula) -> Option<(Vec<LhsPart>, Binder, Formula)> {
    let conjuncts = flatten_and(a.clone());
    for (i, c) in conjuncts.iter().enumerate() {
        if let Formula::Quantified(Quant::Exists, binder, inner) = c {
            let parts = conjuncts
                .iter()
                .enumerate()
                .map(|(j, f)| if j == i { LhsPart::Hole } else { LhsPart::Keep(f.clone()) })
                .collect();
            return Some((parts, binder.clone(), (**inner).clone()));
        }
    }
    None
}

#[derive(Clone)]
enum LhsPart {
    Keep(Formula),
    Hole,
}

fn rebuild_lhs(parts: Vec<LhsPart>, filled: Formula) -> Formula {
    Formula::conj(parts.into_iter().map(|p| match p {
        LhsPart::Keep(f) => f,
        LhsPart::Hole => filled.clone(),
    }))
}

/// Rename the binder if it collides with an existing universal or a free
/// variable of the opposite side.
fn avoid_collision(
    binder: Binder,
    body: Formula,
    universals: &[(String, VarSort)],
    other_side: &Formula,
) -> (Binder, Formula) {
    let mut taken: IndexSet<String> = universals.iter().map(|(v, _)| v.clone()).collect();
    for (v, _) in free_vars(other_side) {
        taken.insert(v);
    }
    for (v, _) in free_vars(&body) {
        taken.insert(v);
    }
    if !universals.iter().any(|(v, _)| v == &binder.name)
        && !crate::logic::free_var_names(other_side).contains(&binder.name)
    {
        return (binder, body);
    }
    taken.insert(binder.name.clone());
    let mut fresh = FreshNames::new(taken.into_iter());
    let new_name = fresh.fresh(&binder.name);
    let renamed = match binder.sort {
        VarSort::Int | VarSort::Idx => {
            substitute(&body, &Subst::IntVar(binder.name.clone(), Term::var(&new_name)))
        }
        VarSort::Bool => substitute(
            &body,
            &Subst::BoolVar(binder.name.clone(), Formula::BoolVar(new_name.clone())),
        ),
        VarSort::VecInt => substitute(&body, &Subst::vec_rename_int(&binder.name, &new_name)),
        VarSort::VecBool => substitute(&body, &Subst::vec_rename_bool(&binder.name, &new_name)),
    };
    (Binder { name: new_name, sort: binder.sort }, renamed)
}

// ---------------------------------------------------------------------------
// Second-order skolemization

/// Replace the outermost existential chain of the rightmost implicand with
/// applications of fresh function symbols over the extracted universals.
/// Only integer existentials in positive position are touched; validity of
/// the output for some interpretation implies validity of the input.
pub fn skolemize_rhs_existentials(pvc: &Pvc, fresh: &mut FreshNames) -> Pvc {
    let (lhs, mut rhs) = match &pvc.body {
        Formula::Implies(a, b) => ((**a).clone(), (**b).clone()),
        other => (Formula::True, other.clone()),
    };
    let inputs: Vec<String> = pvc
        .universals
        .iter()
        .filter(|(_, s)| *s == VarSort::Int)
        .map(|(v, _)| v.clone())
        .collect();
    if pvc.universals.iter().any(|(_, s)| *s != VarSort::Int) {
        return pvc.clone();
    }
    let mut skolem_funs = pvc.skolem_funs.clone();
    loop {
        match rhs {
            Formula::Quantified(Quant::Exists, binder, inner) if binder.sort == VarSort::Int => {
                let fname = fresh.fresh(&format!("f_{}", binder.name));
                let app = Term::FunApp(fname.clone(), inputs.iter().map(|v| Term::var(v)).collect());
                rhs = substitute(&inner, &Subst::IntVar(binder.name.clone(), app));
                skolem_funs.push((fname, inputs.clone()));
            }
            other => {
                rhs = other;
                break;
            }
        }
    }
    Pvc {
        id: pvc.id.clone(),
        universals: pvc.universals.clone(),
        body: Formula::implies(lhs, rhs),
        origin: pvc.origin.clone(),
        origin_path: pvc.origin_path.clone(),
        skolem_funs,
    }
}

pub fn skolemize_all(pvcs: &[Pvc], taken: IndexSet<String>) -> Vec<Pvc> {
    let mut fresh = FreshNames::new(taken.into_iter());
    pvcs.iter().map(|p| skolemize_rhs_existentials(p, &mut fresh)).collect()
}

// ---------------------------------------------------------------------------
// Summary assignments and plugging

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SummaryDef {
    pub formals: Vec<(String, VarSort)>,
    pub body: Formula,
}

/// Map from parameter names to definitions, plus interpretations for skolem
/// functions when present. Bodies may not reference parameters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SummaryAssignment {
    pub params: IndexMap<String, SummaryDef>,
    pub funs: IndexMap<String, (Vec<String>, Term)>,
}

impl SummaryAssignment {
    pub fn validate(&self, sigs: &IndexMap<String, ParameterSig>) -> Result<(), VcgenError> {
        for (name, def) in &self.params {
            let frees: IndexSet<String> =
                free_vars(&def.body).into_iter().map(|(v, _)| v).collect();
            for v in &frees {
                if !def.formals.iter().any(|(f, _)| f == v) {
                    return Err(VcgenError::FreeInBody(name.clone(), v.clone()));
                }
            }
            for p in param_names(&def.body) {
                return Err(VcgenError::ParamInBody(name.clone(), p));
            }
            if let Some(sig) = sigs.get(name) {
                if sig.formals.len() != def.formals.len() {
                    return Err(VcgenError::ArityMismatch(
                        name.clone(),
                        def.formals.len(),
                        sig.formals.len(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Instantiate one application: formals are bound to arguments
    /// (vector formals to k consecutive element arguments).
    fn instantiate(
        &self,
        name: &str,
        args: &[Arg],
        k: Option<usize>,
    ) -> Result<Formula, VcgenError> {
        let def = self
            .params
            .get(name)
            .ok_or_else(|| VcgenError::MissingParameter(name.to_string()))?;
        let width: usize = def
            .formals
            .iter()
            .map(|(_, s)| match s {
                VarSort::VecInt | VarSort::VecBool => k.unwrap_or(1),
                _ => 1,
            })
            .sum();
        if width != args.len() {
            return Err(VcgenError::ArityMismatch(name.to_string(), args.len(), width));
        }
        // Freshen the body's bound variables against the arguments' frees.
        let mut arg_frees: IndexSet<String> = IndexSet::new();
        for a in args {
            match a {
                Arg::Int(t) => {
                    let probe = Formula::eq(t.clone(), Term::Int(0));
                    for (v, _) in free_vars(&probe) {
                        arg_frees.insert(v);
                    }
                }
                Arg::Bool(f) => {
                    for (v, _) in free_vars(f) {
                        arg_frees.insert(v);
                    }
                }
            }
        }
        // Expand index quantifiers in the body first so vector formals can be
        // replaced element by element.
        let mut body = match k {
            Some(k) => expand_idx_quantifiers(&def.body, k),
            None => def.body.clone(),
        };
        let mut cursor = 0usize;
        for (formal, sort) in &def.formals {
            match sort {
                VarSort::Int | VarSort::Idx => {
                    let t = match &args[cursor] {
                        Arg::Int(t) => t.clone(),
                        Arg::Bool(_) => {
                            return Err(VcgenError::ArityMismatch(name.to_string(), 0, 0))
                        }
                    };
                    body = substitute(&body, &Subst::IntVar(formal.clone(), t));
                    cursor += 1;
                }
                VarSort::Bool => {
                    let f = match &args[cursor] {
                        Arg::Bool(f) => f.clone(),
                        Arg::Int(_) => {
                            return Err(VcgenError::ArityMismatch(name.to_string(), 0, 0))
                        }
                    };
                    body = substitute(&body, &Subst::BoolVar(formal.clone(), f));
                    cursor += 1;
                }
                VarSort::VecInt => {
                    let kk = k.unwrap_or(1);
                    for j in 1..=kk {
                        let t = match &args[cursor] {
                            Arg::Int(t) => t.clone(),
                            Arg::Bool(_) => {
                                return Err(VcgenError::ArityMismatch(name.to_string(), 0, 0))
                            }
                        };
                        body = replace_vec_elem_int(&body, formal, j as i64, &t);
                        cursor += 1;
                    }
                }
                VarSort::VecBool => {
                    let kk = k.unwrap_or(1);
                    for j in 1..=kk {
                        let f = match &args[cursor] {
                            Arg::Bool(f) => f.clone(),
                            Arg::Int(_) => {
                                return Err(VcgenError::ArityMismatch(name.to_string(), 0, 0))
                            }
                        };
                        body = replace_vec_elem_bool(&body, formal, j as i64, &f);
                        cursor += 1;
                    }
                }
            }
        }
        let _ = arg_frees;
        Ok(body)
    }

    /// Replace every parameter application in the formula by its plugged
    /// body, and every skolem function application by its interpretation.
    pub fn plug_formula(&self, f: &Formula, k: Option<usize>) -> Result<Formula, VcgenError> {
        self.plug_inner(f, k, true)
    }

    /// Like `plug_formula`, but parameter applications without an assignment
    /// are kept (their arguments still get plugged).
    pub fn plug_formula_partial(&self, f: &Formula, k: Option<usize>) -> Result<Formula, VcgenError> {
        self.plug_inner(f, k, false)
    }

    fn plug_inner(&self, f: &Formula, k: Option<usize>, strict: bool) -> Result<Formula, VcgenError> {
        Ok(match f {
            Formula::ParamApp(name, args) => {
                // Plug arguments first (they may contain nested applications
                // inside boolean args).
                let args: Vec<Arg> = args
                    .iter()
                    .map(|a| {
                        Ok(match a {
                            Arg::Int(t) => Arg::Int(self.plug_term(t)?),
                            Arg::Bool(g) => Arg::Bool(self.plug_inner(g, k, strict)?),
                        })
                    })
                    .collect::<Result<_, VcgenError>>()?;
                if !strict && !self.params.contains_key(name) {
                    Formula::ParamApp(name.clone(), args)
                } else {
                    self.instantiate(name, &args, k)?
                }
            }
            Formula::True | Formula::False | Formula::BoolVar(_) => f.clone(),
            Formula::BoolVecElem(x, i) => {
                Formula::BoolVecElem(x.clone(), Box::new(self.plug_term(i)?))
            }
            Formula::Lt(a, b) => Formula::Lt(self.plug_term(a)?, self.plug_term(b)?),
            Formula::Eq(a, b) => Formula::Eq(self.plug_term(a)?, self.plug_term(b)?),
            Formula::Not(a) => Formula::not(self.plug_inner(a, k, strict)?),
            Formula::And(a, b) => {
                Formula::and(self.plug_inner(a, k, strict)?, self.plug_inner(b, k, strict)?)
            }
            Formula::Or(a, b) => {
                Formula::or(self.plug_inner(a, k, strict)?, self.plug_inner(b, k, strict)?)
            }
            Formula::Implies(a, b) => {
                Formula::implies(self.plug_inner(a, k, strict)?, self.plug_inner(b, k, strict)?)
            }
            Formula::Iff(a, b) => {
                Formula::iff(self.plug_inner(a, k, strict)?, self.plug_inner(b, k, strict)?)
            }
            Formula::Quantified(q, binder, body) => {
                // Avoid capturing assignment-body frees: formals are closed
                // under their own args, so only binder collisions with the
                // instantiated text matter; instantiation is capture-avoiding
                // through `substitute`, so recursion suffices here.
                Formula::Quantified(*q, binder.clone(), Box::new(self.plug_inner(body, k, strict)?))
            }
        })
    }

    fn plug_term(&self, t: &Term) -> Result<Term, VcgenError> {
        Ok(match t {
            Term::FunApp(f, args) => {
                let args: Vec<Term> =
                    args.iter().map(|a| self.plug_term(a)).collect::<Result<_, _>>()?;
                match self.funs.get(f) {
                    None => Term::FunApp(f.clone(), args),
                    Some((formals, body)) => {
                        if formals.len() != args.len() {
                            return Err(VcgenError::ArityMismatch(
                                f.clone(),
                                args.len(),
                                formals.len(),
                            ));
                        }
                        let mut out = body.clone();
                        for (formal, arg) in formals.iter().zip(&args) {
                            out = subst_in_term(&out, formal, arg);
                        }
                        out
                    }
                }
            }
            Term::VecElem(x, i) => Term::VecElem(x.clone(), Box::new(self.plug_term(i)?)),
            Term::Add(a, b) => Term::add(self.plug_term(a)?, self.plug_term(b)?),
            Term::Mul(c, a) => Term::Mul(*c, Box::new(self.plug_term(a)?)),
            Term::Div(a, d) => Term::Div(Box::new(self.plug_term(a)?), *d),
            Term::Mod(a, d) => Term::Mod(Box::new(self.plug_term(a)?), *d),
            Term::Int(_) | Term::Var(_) => t.clone(),
        })
    }
}

fn subst_in_term(t: &Term, var: &str, rep: &Term) -> Term {
    match t {
        Term::Var(x) if x == var => rep.clone(),
        Term::VecElem(x, i) => Term::VecElem(x.clone(), Box::new(subst_in_term(i, var, rep))),
        Term::Add(a, b) => Term::add(subst_in_term(a, var, rep), subst_in_term(b, var, rep)),
        Term::Mul(c, a) => Term::Mul(*c, Box::new(subst_in_term(a, var, rep))),
        Term::Div(a, d) => Term::Div(Box::new(subst_in_term(a, var, rep)), *d),
        Term::Mod(a, d) => Term::Mod(Box::new(subst_in_term(a, var, rep)), *d),
        Term::FunApp(f, args) => {
            Term::FunApp(f.clone(), args.iter().map(|a| subst_in_term(a, var, rep)).collect())
        }
        _ => t.clone(),
    }
}

fn replace_vec_elem_int(f: &Formula, vec: &str, j: i64, rep: &Term) -> Formula {
    // Replace occurrences x[j] (literal index) by the argument term.
    let s = Subst::VecInt {
        vec: vec.to_string(),
        idx: "%j".to_string(),
        body: Term::var("%hole"),
    };
    // Substitute with a guard: only literal index j. Subst replaces every
    // element, so do it manually here.
    let _ = s;
    fn go_term(t: &Term, vec: &str, j: i64, rep: &Term) -> Term {
        match t {
            Term::VecElem(x, i) => {
                let i2 = go_term(i, vec, j, rep);
                if x == vec {
                    if let Term::Int(v) = crate::logic::fold_term(&i2) {
                        if v == j {
                            return rep.clone();
                        }
                    }
                }
                Term::VecElem(x.clone(), Box::new(i2))
            }
            Term::Add(a, b) => Term::add(go_term(a, vec, j, rep), go_term(b, vec, j, rep)),
            Term::Mul(c, a) => Term::Mul(*c, Box::new(go_term(a, vec, j, rep))),
            Term::Div(a, d) => Term::Div(Box::new(go_term(a, vec, j, rep)), *d),
            Term::Mod(a, d) => Term::Mod(Box::new(go_term(a, vec, j, rep)), *d),
            Term::FunApp(g, args) => {
                Term::FunApp(g.clone(), args.iter().map(|a| go_term(a, vec, j, rep)).collect())
            }
            _ => t.clone(),
        }
    }
    fn go(f: &Formula, vec: &str, j: i64, rep: &Term) -> Formula {
        match f {
            Formula::Lt(a, b) => Formula::Lt(go_term(a, vec, j, rep), go_term(b, vec, j, rep)),
            Formula::Eq(a, b) => Formula::Eq(go_term(a, vec, j, rep), go_term(b, vec, j, rep)),
            Formula::BoolVecElem(x, i) => {
                Formula::BoolVecElem(x.clone(), Box::new(go_term(i, vec, j, rep)))
            }
            Formula::Not(a) => Formula::not(go(a, vec, j, rep)),
            Formula::And(a, b) => Formula::and(go(a, vec, j, rep), go(b, vec, j, rep)),
            Formula::Or(a, b) => Formula::or(go(a, vec, j, rep), go(b, vec, j, rep)),
            Formula::Implies(a, b) => Formula::implies(go(a, vec, j, rep), go(b, vec, j, rep)),
            Formula::Iff(a, b) => Formula::iff(go(a, vec, j, rep), go(b, vec, j, rep)),
            Formula::Quantified(q, binder, body) => {
                if binder.name == vec {
                    f.clone()
                } else {
                    Formula::Quantified(*q, binder.clone(), Box::new(go(body, vec, j, rep)))
                }
            }
            Formula::ParamApp(p, args) => Formula::ParamApp(
                p.clone(),
                args.iter()
                    .map(|a| match a {
                        Arg::Int(t) => Arg::Int(go_term(t, vec, j, rep)),
                        Arg::Bool(g) => Arg::Bool(go(g, vec, j, rep)),
                    })
                    .collect(),
            ),
            _ => f.clone(),
        }
    }
    go(f, vec, j, rep)
}

fn replace_vec_elem_bool(f: &Formula, vec: &str, j: i64, rep: &Formula) -> Formula {
    fn go(f: &Formula, vec: &str, j: i64, rep: &Formula) -> Formula {
        match f {
            Formula::BoolVecElem(x, i) => {
                if x == vec {
                    if let Term::Int(v) = crate::logic::fold_term(i) {
                        if v == j {
                            return rep.clone();
                        }
                    }
                }
                f.clone()
            }
            Formula::Not(a) => Formula::not(go(a, vec, j, rep)),
            Formula::And(a, b) => Formula::and(go(a, vec, j, rep), go(b, vec, j, rep)),
            Formula::Or(a, b) => Formula::or(go(a, vec, j, rep), go(b, vec, j, rep)),
            Formula::Implies(a, b) => Formula::implies(go(a, vec, j, rep), go(b, vec, j, rep)),
            Formula::Iff(a, b) => Formula::iff(go(a, vec, j, rep), go(b, vec, j, rep)),
            Formula::Quantified(q, binder, body) => {
                if binder.name == vec {
                    f.clone()
                } else {
                    Formula::Quantified(*q, binder.clone(), Box::new(go(body, vec, j, rep)))
                }
            }
            Formula::ParamApp(p, args) => Formula::ParamApp(
                p.clone(),
                args.iter()
                    .map(|a| match a {
                        Arg::Int(t) => Arg::Int(t.clone()),
                        Arg::Bool(g) => Arg::Bool(go(g, vec, j, rep)),
                    })
                    .collect(),
            ),
            _ => f.clone(),
        }
    }
    go(f, vec, j, rep)
}

/// Plug an assignment into every formula of a skeleton; the result still
/// passes syntactic checking (plugging commutes with the rules' substitution
/// patterns).
pub fn plug_in(skel: &Skeleton, a: &SummaryAssignment) -> Result<Skeleton, VcgenError> {
    a.validate(&skel.params)?;
    let k = skel.env.as_ref().map(|e| e.k);
    fn walk(
        n: &SkeletonNode,
        a: &SummaryAssignment,
        k: Option<usize>,
    ) -> Result<SkeletonNode, VcgenError> {
        let mut out = n.clone();
        out.conclusion.pre = a.plug_formula(&n.conclusion.pre, k)?;
        out.conclusion.post = a.plug_formula(&n.conclusion.post, k)?;
        let mut triples = Vec::new();
        for t in n.context.triples() {
            triples.push(crate::skeleton::ContextTriple {
                nonterminal: t.nonterminal.clone(),
                pre: a.plug_formula(&t.pre, k)?,
                post: a.plug_formula(&t.post, k)?,
            });
        }
        let mut ctx = crate::skeleton::Context::empty();
        for t in triples {
            ctx.push(t);
        }
        out.context = ctx;
        out.children = n
            .children
            .iter()
            .map(|c| walk(c, a, k))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(out)
    }
    Ok(Skeleton {
        root: walk(&skel.root, a, k)?,
        params: IndexMap::new(),
        env: skel.env.clone(),
    })
}

/// Plug an assignment into a PVC list, producing closed checkable VCs.
pub fn plug_pvcs(
    pvcs: &[Pvc],
    a: &SummaryAssignment,
    k: Option<usize>,
) -> Result<Vec<Pvc>, VcgenError> {
    pvcs.iter()
        .map(|p| {
            let body = a.plug_formula(&p.body, k)?;
            Ok(Pvc {
                id: p.id.clone(),
                universals: free_vars(&body),
                body,
                origin: p.origin.clone(),
                origin_path: p.origin_path.clone(),
                skolem_funs: p.skolem_funs.clone(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gimp::{parse_grammar_text, GimpTerm, Rtg, ET};
    use crate::logic::print_formula;
    use crate::skeleton::{p_skel, Context};

    fn fig() -> (Rtg, Skeleton) {
        let g = parse_grammar_text("(nonterm N IntExpr 2 (+ 2 N))").unwrap();
        let post = Formula::neq(Term::var(ET), Term::Int(3));
        let skel =
            p_skel(&g, None, &Context::empty(), &Formula::True, &GimpTerm::nt("N"), &post).unwrap();
        (g, skel)
    }

    fn qn(args: Vec<Term>) -> Formula {
        Formula::ParamApp("Q_N".into(), args.into_iter().map(Arg::Int).collect())
    }

    #[test]
    fn fig_has_exactly_two_pvcs() {
        let (g, skel) = fig();
        let pvcs = extract_pvcs(&skel, &g).unwrap();
        assert_eq!(pvcs.len(), 2);
        // First (pre-order): true -> (forall e_t_y. Q_N(e_t_y) -> e_t_y != 3)
        let want0 = Formula::implies(
            Formula::True,
            Formula::forall(
                "e_t_y",
                VarSort::Int,
                Formula::implies(
                    qn(vec![Term::var("e_t_y")]),
                    Formula::neq(Term::var("e_t_y"), Term::Int(3)),
                ),
            ),
        );
        assert!(alpha_eq(&pvcs[0].body, &want0), "got {}", print_formula(&pvcs[0].body));
        assert!(pvcs[0].universals.is_empty());
        // Second: true -> (Q_N(2) /\ forall e_t_y. Q_N(e_t_y) -> Q_N(2+e_t_y))
        let want1 = Formula::implies(
            Formula::True,
            Formula::and(
                qn(vec![Term::Int(2)]),
                Formula::forall(
                    "e_t_y",
                    VarSort::Int,
                    Formula::implies(
                        qn(vec![Term::var("e_t_y")]),
                        qn(vec![Term::add(Term::Int(2), Term::var("e_t_y"))]),
                    ),
                ),
            ),
        );
        assert!(alpha_eq(&pvcs[1].body, &want1), "got {}", print_formula(&pvcs[1].body));
        assert!(matches!(pvcs[1].origin, PvcOrigin::SummaryDef(ref n) if n == "N"));
    }

    #[test]
    fn single_axiom_skeleton_has_zero_weaken_pvcs() {
        let g = parse_grammar_text("(nonterm N IntExpr 2)").unwrap();
        let q = qn(vec![Term::var(ET)]);
        let skel =
            crate::skeleton::w_skel(&g, None, &Context::empty(), &GimpTerm::IntLit(2), &q).unwrap();
        let pvcs = extract_pvcs(&skel, &g).unwrap();
        assert!(pvcs.is_empty());
    }

    #[test]
    fn pvc_count_equals_weaken_count() {
        let (g, skel) = fig();
        let pvcs = extract_pvcs(&skel, &g).unwrap();
        assert_eq!(pvcs.len(), skel.root.count_rule(RuleTag::Weaken));
    }

    #[test]
    fn optimization_reproduces_three_formulas() {
        let (g, skel) = fig();
        let pvcs = extract_pvcs(&skel, &g).unwrap();
        let opt = optimize_pvcs(&pvcs, None);
        assert_eq!(opt.len(), 3, "{:#?}", opt.iter().map(|p| p.render()).collect::<Vec<_>>());
        // forall e_t_y. (true /\ Q_N(e_t_y)) -> e_t_y != 3
        let w0 = Formula::implies(
            Formula::and(Formula::True, qn(vec![Term::var("e_t_y")])),
            Formula::neq(Term::var("e_t_y"), Term::Int(3)),
        );
        assert_eq!(opt[0].universals.len(), 1);
        assert!(alpha_eq(&opt[0].body, &w0), "got {}", print_formula(&opt[0].body));
        // true -> Q_N(2)
        let w1 = Formula::implies(Formula::True, qn(vec![Term::Int(2)]));
        assert!(opt[1].universals.is_empty());
        assert!(alpha_eq(&opt[1].body, &w1), "got {}", print_formula(&opt[1].body));
        // forall e_t_y. (true /\ Q_N(e_t_y)) -> Q_N(2 + e_t_y)
        let w2 = Formula::implies(
            Formula::and(Formula::True, qn(vec![Term::var("e_t_y")])),
            qn(vec![Term::add(Term::Int(2), Term::var("e_t_y"))]),
        );
        assert_eq!(opt[2].universals.len(), 1);
        assert!(alpha_eq(&opt[2].body, &w2), "got {}", print_formula(&opt[2].body));
    }

    #[test]
    fn optimization_fixpoint_on_plain_pvc() {
        let pvc = Pvc {
            id: "t".into(),
            universals: vec![],
            body: Formula::implies(
                Formula::lt(Term::var("a"), Term::Int(1)),
                Formula::lt(Term::var("a"), Term::Int(2)),
            ),
            origin: PvcOrigin::Goal,
            origin_path: "t".into(),
            skolem_funs: vec![],
        };
        let mut with_frees = pvc.clone();
        with_frees.universals = free_vars(&pvc.body);
        let opt = optimize_pvcs(&[with_frees.clone()], None);
        assert_eq!(opt.len(), 1);
        assert!(alpha_eq(&opt[0].body, &with_frees.body));
    }

    #[test]
    fn nested_implication_and_split() {
        // A -> (B /\ (C -> D)) becomes {A -> B, (A /\ C) -> D}
        let a = Formula::lt(Term::var("a"), Term::Int(0));
        let b = Formula::lt(Term::var("a"), Term::Int(1));
        let c = Formula::lt(Term::var("a"), Term::Int(2));
        let d = Formula::lt(Term::var("a"), Term::Int(3));
        let pvc = Pvc {
            id: "t".into(),
            universals: vec![("a".into(), VarSort::Int)],
            body: Formula::implies(
                a.clone(),
                Formula::and(b.clone(), Formula::implies(c.clone(), d.clone())),
            ),
            origin: PvcOrigin::Goal,
            origin_path: "t".into(),
            skolem_funs: vec![],
        };
        let opt = optimize_pvcs(&[pvc], None);
        assert_eq!(opt.len(), 2);
        assert!(alpha_eq(&opt[0].body, &Formula::implies(a.clone(), b)));
        assert!(alpha_eq(&opt[1].body, &Formula::implies(Formula::and(a, c), d)));
    }

    #[test]
    fn skolemization_replaces_rhs_existential() {
        // forall a,b. P(a,b) -> exists k. a+b = 2k
        //   becomes  forall a,b. P(a,b) -> a+b = 2*f(a,b)
        let body = Formula::implies(
            Formula::lt(Term::var("a"), Term::var("b")),
            Formula::exists(
                "m",
                VarSort::Int,
                Formula::eq(
                    Term::add(Term::var("a"), Term::var("b")),
                    Term::Mul(2, Box::new(Term::var("m"))),
                ),
            ),
        );
        let pvc = Pvc {
            id: "t".into(),
            universals: vec![("a".into(), VarSort::Int), ("b".into(), VarSort::Int)],
            body,
            origin: PvcOrigin::Goal,
            origin_path: "t".into(),
            skolem_funs: vec![],
        };
        let mut fresh = FreshNames::new(std::iter::empty());
        let sk = skolemize_rhs_existentials(&pvc, &mut fresh);
        assert_eq!(sk.skolem_funs.len(), 1);
        let (fname, inputs) = &sk.skolem_funs[0];
        assert_eq!(inputs, &vec!["a".to_string(), "b".to_string()]);
        let want = Formula::implies(
            Formula::lt(Term::var("a"), Term::var("b")),
            Formula::eq(
                Term::add(Term::var("a"), Term::var("b")),
                Term::Mul(
                    2,
                    Box::new(Term::FunApp(
                        fname.clone(),
                        vec![Term::var("a"), Term::var("b")],
                    )),
                ),
            ),
        );
        assert!(alpha_eq(&sk.body, &want), "got {}", print_formula(&sk.body));
    }

    #[test]
    fn skolemization_identity_without_existentials() {
        let pvc = Pvc {
            id: "t".into(),
            universals: vec![],
            body: Formula::implies(Formula::True, Formula::True),
            origin: PvcOrigin::Goal,
            origin_path: "t".into(),
            skolem_funs: vec![],
        };
        let mut fresh = FreshNames::new(std::iter::empty());
        let sk = skolemize_rhs_existentials(&pvc, &mut fresh);
        assert!(sk.skolem_funs.is_empty());
        assert!(alpha_eq(&sk.body, &pvc.body));
    }

    #[test]
    fn skolemization_skips_negative_positions() {
        // RHS = not(exists m. ...) is left untouched.
        let body = Formula::implies(
            Formula::True,
            Formula::not(Formula::exists(
                "m",
                VarSort::Int,
                Formula::eq(Term::var("m"), Term::Int(0)),
            )),
        );
        let pvc = Pvc {
            id: "t".into(),
            universals: vec![],
            body: body.clone(),
            origin: PvcOrigin::Goal,
            origin_path: "t".into(),
            skolem_funs: vec![],
        };
        let mut fresh = FreshNames::new(std::iter::empty());
        let sk = skolemize_rhs_existentials(&pvc, &mut fresh);
        assert!(sk.skolem_funs.is_empty());
        assert!(alpha_eq(&sk.body, &body));
    }

    fn mod2_assignment() -> SummaryAssignment {
        let mut a = SummaryAssignment::default();
        a.params.insert(
            "Q_N".into(),
            SummaryDef {
                formals: vec![(ET.to_string(), VarSort::Int)],
                body: Formula::eq(Term::modulo(Term::var(ET), 2), Term::Int(0)),
            },
        );
        a
    }

    #[test]
    fn plug_in_fig_summary_stays_syntactic() {
        let (g, skel) = fig();
        let plugged = plug_in(&skel, &mod2_assignment()).unwrap();
        let violations = check_syntactic(&plugged, &g);
        assert!(violations.is_empty(), "{violations:?}");
        // Root conclusion unchanged, HP postcondition now concrete.
        assert!(alpha_eq(
            &plugged.root.conclusion.post,
            &Formula::neq(Term::var(ET), Term::Int(3))
        ));
    }

    #[test]
    fn plug_true_summary_is_structurally_fine() {
        let (g, skel) = fig();
        let mut a = SummaryAssignment::default();
        a.params.insert(
            "Q_N".into(),
            SummaryDef {
                formals: vec![(ET.to_string(), VarSort::Int)],
                body: Formula::True,
            },
        );
        let plugged = plug_in(&skel, &a).unwrap();
        assert!(check_syntactic(&plugged, &g).is_empty());
    }

    #[test]
    fn plug_missing_parameter_errors() {
        let (_, skel) = fig();
        let a = SummaryAssignment::default();
        let pvcs_err = plug_in(&skel, &a);
        assert!(matches!(pvcs_err, Err(VcgenError::MissingParameter(_))));
    }

    #[test]
    fn plugged_pvcs_are_parameter_free() {
        let (g, skel) = fig();
        let pvcs = extract_pvcs(&skel, &g).unwrap();
        let opt = optimize_pvcs(&pvcs, None);
        let plugged = plug_pvcs(&opt, &mod2_assignment(), None).unwrap();
        for p in &plugged {
            assert!(param_names(&p.body).is_empty());
        }
        // true -> (2 mod 2 = 0)
        let want = Formula::implies(
            Formula::True,
            Formula::eq(Term::modulo(Term::Int(2), 2), Term::Int(0)),
        );
        assert!(alpha_eq(&plugged[1].body, &want), "got {}", print_formula(&plugged[1].body));
    }
}
