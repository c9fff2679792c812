//! Whole-cloth proof derivation: find a summary assignment satisfying the
//! PVCs, via an external SyGuS solver or an internal enumerative search over
//! template grammars, with counterexample caching to skip solver calls.

use std::time::{Duration, Instant};

use indexmap::{IndexMap, IndexSet};
use thiserror::Error;

use crate::logic::{free_vars, param_names, print_formula, Formula, Term, VarSort};
use crate::oracle::{eval_formula, EvalCtx, State, Value};
use crate::skeleton::ParameterSig;
use crate::solver::{
    emit_smt, emit_sygus, race, Outcome, SolverConfig, SolverError, SygusFun,
};
use crate::vcgen::{plug_pvcs, Pvc, SummaryAssignment, SummaryDef, VcgenError};

/// An integer-constant hole in a template; the same hole may occur several
/// times and always takes one value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hole {
    pub name: String,
    pub choices: Vec<i64>,
}

/// A candidate-formula grammar for one parameter: a template formula over
/// the parameter's formals with named constant holes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateGrammar {
    pub holes: Vec<Hole>,
    pub template: Formula,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GrammarSpec {
    Template(TemplateGrammar),
    /// Quantifier-free formulas over the formals with a small constant pool,
    /// enumerated by size.
    Unconstrained { size_bound: usize },
}

pub const UNCONSTRAINED_CONSTANTS: [i64; 6] = [-1, 0, 1, 2, 3, 100];
pub const UNCONSTRAINED_DEFAULT_SIZE: usize = 9;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("no grammar for parameter `{0}` (provide one or pass --unconstrained)")]
    MissingGrammar(String),
    #[error(transparent)]
    Vcgen(#[from] VcgenError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("hole `{0}` has no choices")]
    EmptyHole(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum SynthResult {
    Found(SummaryAssignment),
    NoneFound,
}

#[derive(Debug, Clone, Default)]
pub struct SynthStats {
    pub solver_calls: usize,
    pub candidates_tried: usize,
    pub candidates_pruned: usize,
}

// ---------------------------------------------------------------------------
// Candidate enumeration

fn formula_size(f: &Formula) -> usize {
    match f {
        Formula::True | Formula::False | Formula::BoolVar(_) => 1,
        Formula::BoolVecElem(..) => 1,
        Formula::Lt(a, b) | Formula::Eq(a, b) => 1 + term_size(a) + term_size(b),
        Formula::Not(a) => 1 + formula_size(a),
        Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) | Formula::Iff(a, b) => {
            1 + formula_size(a) + formula_size(b)
        }
        Formula::Quantified(_, _, body) => 1 + formula_size(body),
        Formula::ParamApp(_, args) => 1 + args.len(),
    }
}

fn term_size(t: &Term) -> usize {
    match t {
        Term::Int(_) | Term::Var(_) => 1,
        Term::VecElem(_, i) => 1 + term_size(i),
        Term::Add(a, b) => 1 + term_size(a) + term_size(b),
        Term::Mul(_, a) | Term::Div(a, _) | Term::Mod(a, _) => 1 + term_size(a),
        Term::FunApp(_, args) => 1 + args.iter().map(term_size).sum::<usize>(),
    }
}

/// Canonical key under commutativity of and/or/= for deduplication.
fn canon_key(f: &Formula) -> String {
    match f {
        Formula::And(a, b) | Formula::Or(a, b) => {
            let (ka, kb) = (canon_key(a), canon_key(b));
            let (lo, hi) = if ka <= kb { (ka, kb) } else { (kb, ka) };
            let op = if matches!(f, Formula::And(..)) { "and" } else { "or" };
            format!("({op} {lo} {hi})")
        }
        Formula::Eq(a, b) => {
            let (ka, kb) = (crate::logic::print_term(a), crate::logic::print_term(b));
            let (lo, hi) = if ka <= kb { (ka, kb) } else { (kb, ka) };
            format!("(= {lo} {hi})")
        }
        Formula::Not(a) => format!("(not {})", canon_key(a)),
        Formula::Implies(a, b) => format!("(=> {} {})", canon_key(a), canon_key(b)),
        Formula::Iff(a, b) => format!("(iff {} {})", canon_key(a), canon_key(b)),
        other => print_formula(other),
    }
}

/// Stream of candidate bodies for one grammar, in nondecreasing size,
/// deduplicated up to commutativity of conjunction/disjunction/equality.
pub fn enumerate_candidates(
    g: &GrammarSpec,
    formals: &[(String, VarSort)],
    size_bound: usize,
) -> Result<Vec<Formula>, SynthError> {
    match g {
        GrammarSpec::Template(t) => {
            for h in &t.holes {
                if h.choices.is_empty() {
                    return Err(SynthError::EmptyHole(h.name.clone()));
                }
            }
            let mut out = Vec::new();
            let mut seen = IndexSet::new();
            let mut idx = vec![0usize; t.holes.len()];
            loop {
                let mut body = t.template.clone();
                for (i, h) in t.holes.iter().enumerate() {
                    body = crate::logic::substitute(
                        &body,
                        &crate::logic::Subst::IntVar(h.name.clone(), Term::Int(h.choices[idx[i]])),
                    );
                }
                // A hole may sit in divisor position via the %mod/%div
                // markers; candidates with a non-positive divisor are skipped.
                if let Some(body) = resolve_template_markers(&body) {
                    if seen.insert(canon_key(&body)) {
                        out.push(body);
                    }
                }
                let mut i = 0;
                loop {
                    if i == idx.len() {
                        return Ok(out);
                    }
                    idx[i] += 1;
                    if idx[i] < t.holes[i].choices.len() {
                        break;
                    }
                    idx[i] = 0;
                    i += 1;
                }
                if idx.is_empty() {
                    return Ok(out);
                }
            }
        }
        GrammarSpec::Unconstrained { size_bound: declared } => {
            let bound = size_bound.min(*declared).max(1);
            Ok(enumerate_unconstrained(formals, bound))
        }
    }
}

/// Rewrite `%mod`/`%div` template markers into the real operators once their
/// divisor hole is a constant. Returns None for non-positive divisors.
fn resolve_template_markers(f: &Formula) -> Option<Formula> {
    fn go_term(t: &Term) -> Option<Term> {
        Some(match t {
            Term::FunApp(name, args) if name == "%mod" || name == "%div" => {
                if args.len() != 2 {
                    return None;
                }
                let base = go_term(&args[0])?;
                match crate::logic::fold_term(&args[1]) {
                    Term::Int(d) if d > 0 => {
                        if name == "%mod" {
                            Term::Mod(Box::new(base), d)
                        } else {
                            Term::Div(Box::new(base), d)
                        }
                    }
                    _ => return None,
                }
            }
            Term::FunApp(name, args) => Term::FunApp(
                name.clone(),
                args.iter().map(go_term).collect::<Option<_>>()?,
            ),
            Term::VecElem(x, i) => Term::VecElem(x.clone(), Box::new(go_term(i)?)),
            Term::Add(a, b) => Term::add(go_term(a)?, go_term(b)?),
            Term::Mul(c, a) => Term::Mul(*c, Box::new(go_term(a)?)),
            Term::Div(a, d) => Term::Div(Box::new(go_term(a)?), *d),
            Term::Mod(a, d) => Term::Mod(Box::new(go_term(a)?), *d),
            Term::Int(_) | Term::Var(_) => t.clone(),
        })
    }
    fn go(f: &Formula) -> Option<Formula> {
        Some(match f {
            Formula::Lt(a, b) => Formula::Lt(go_term(a)?, go_term(b)?),
            Formula::Eq(a, b) => Formula::Eq(go_term(a)?, go_term(b)?),
            Formula::BoolVecElem(x, i) => Formula::BoolVecElem(x.clone(), Box::new(go_term(i)?)),
            Formula::Not(a) => Formula::not(go(a)?),
            Formula::And(a, b) => Formula::and(go(a)?, go(b)?),
            Formula::Or(a, b) => Formula::or(go(a)?, go(b)?),
            Formula::Implies(a, b) => Formula::implies(go(a)?, go(b)?),
            Formula::Iff(a, b) => Formula::iff(go(a)?, go(b)?),
            Formula::Quantified(q, binder, body) => {
                Formula::Quantified(*q, binder.clone(), Box::new(go(body)?))
            }
            Formula::ParamApp(p, args) => Formula::ParamApp(
                p.clone(),
                args.iter()
                    .map(|a| {
                        Some(match a {
                            crate::logic::Arg::Int(t) => crate::logic::Arg::Int(go_term(t)?),
                            crate::logic::Arg::Bool(g) => crate::logic::Arg::Bool(go(g)?),
                        })
                    })
                    .collect::<Option<_>>()?,
            ),
            other => other.clone(),
        })
    }
    go(f)
}

fn enumerate_unconstrained(formals: &[(String, VarSort)], bound: usize) -> Vec<Formula> {
    // Terms by size.
    let mut terms: Vec<Vec<Term>> = vec![Vec::new(); bound + 1];
    if bound >= 1 {
        for c in UNCONSTRAINED_CONSTANTS {
            terms[1].push(Term::Int(c));
        }
        for (v, sort) in formals {
            if *sort == VarSort::Int {
                terms[1].push(Term::var(v));
            }
        }
    }
    for s in 2..=bound {
        let mut level = Vec::new();
        for ls in 1..s {
            let rs = s - 1 - ls;
            if rs < 1 {
                continue;
            }
            for a in &terms[ls] {
                for b in &terms[rs] {
                    level.push(Term::add(a.clone(), b.clone()));
                }
            }
        }
        terms[s] = level;
    }
    // Formulas by size.
    let mut formulas: Vec<Vec<Formula>> = vec![Vec::new(); bound + 1];
    let mut seen: IndexSet<String> = IndexSet::new();
    for s in 1..=bound {
        let mut level = Vec::new();
        if s == 1 {
            level.push(Formula::True);
            level.push(Formula::False);
            for (v, sort) in formals {
                if *sort == VarSort::Bool {
                    level.push(Formula::BoolVar(v.clone()));
                }
            }
        }
        if s >= 3 {
            for ls in 1..(s - 1) {
                let rs = s - 1 - ls;
                if rs < 1 {
                    continue;
                }
                for a in &terms[ls] {
                    for b in &terms[rs] {
                        level.push(Formula::lt(a.clone(), b.clone()));
                        level.push(Formula::eq(a.clone(), b.clone()));
                    }
                }
            }
        }
        if s >= 2 {
            for inner in &formulas[s - 1] {
                level.push(Formula::not(inner.clone()));
            }
        }
        if s >= 3 {
            for ls in 1..(s - 1) {
                let rs = s - 1 - ls;
                if rs < 1 || rs < ls {
                    continue;
                }
                for a in &formulas[ls] {
                    for b in &formulas[rs] {
                        level.push(Formula::and(a.clone(), b.clone()));
                        level.push(Formula::or(a.clone(), b.clone()));
                    }
                }
            }
        }
        formulas[s] = level
            .into_iter()
            .filter(|f| seen.insert(canon_key(f)))
            .collect();
    }
    formulas.into_iter().flatten().collect()
}

// ---------------------------------------------------------------------------
// Counterexample cache

/// A ground valuation of one PVC's universals that some earlier candidate
/// failed on.
#[derive(Debug, Clone, PartialEq)]
pub struct CachedCex {
    pub pvc_id: String,
    pub valuation: Vec<(String, Value)>,
}

/// True when the candidate assignment survives every cached counterexample
/// (evaluation failures count as survival; pruning must never drop a correct
/// assignment).
pub fn survives_cache(
    assignment: &SummaryAssignment,
    pvcs: &[Pvc],
    cache: &[CachedCex],
    k: Option<usize>,
) -> bool {
    for cex in cache {
        let Some(pvc) = pvcs.iter().find(|p| p.id == cex.pvc_id) else {
            continue;
        };
        let Ok(body) = assignment.plug_formula_partial(&pvc.body, k) else {
            continue;
        };
        if !param_names(&body).is_empty() {
            continue;
        }
        let mut st = State::new();
        for (v, val) in &cex.valuation {
            st.insert(v.clone(), val.clone());
        }
        let ctx = EvalCtx { k, int_domain: None, funs: None };
        if let Ok(false) = eval_formula(&body, &st, &ctx) {
            return false;
        }
    }
    true
}

/// Spec-shaped filter over a candidate list.
pub fn counterexample_filter(
    candidates: Vec<SummaryAssignment>,
    pvcs: &[Pvc],
    cache: &[CachedCex],
    k: Option<usize>,
) -> Vec<SummaryAssignment> {
    candidates
        .into_iter()
        .filter(|a| survives_cache(a, pvcs, cache, k))
        .collect()
}

fn parse_internal_model(text: &str) -> Option<Vec<(String, Value)>> {
    let mut out = Vec::new();
    for part in text.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let (name, value) = part.split_once('=')?;
        let name = name.trim().to_string();
        let value = value.trim();
        let v = if value == "true" {
            Value::Bool(true)
        } else if value == "false" {
            Value::Bool(false)
        } else {
            Value::Int(value.parse().ok()?)
        };
        out.push((name, v));
    }
    if out.is_empty() {
        None
    } else {
        Some(out)
    }
}

// ---------------------------------------------------------------------------
// Synthesis driver

pub struct SynthProblem<'a> {
    /// PVCs with parameters (already optimized/skolemized as requested).
    pub pvcs: &'a [Pvc],
    /// Signatures of the parameters to synthesize.
    pub params: Vec<ParameterSig>,
    pub grammars: IndexMap<String, GrammarSpec>,
    pub k: Option<usize>,
    /// Assignments already fixed (e.g. provided in the benchmark file).
    pub fixed: SummaryAssignment,
}

/// Check one full assignment against every PVC; counterexamples from the
/// built-in engine are appended to the cache.
fn check_assignment(
    pvcs: &[Pvc],
    assignment: &SummaryAssignment,
    k: Option<usize>,
    cfg: &SolverConfig,
    cache: &mut Vec<CachedCex>,
    stats: &mut SynthStats,
) -> Result<bool, SynthError> {
    let plugged = plug_pvcs(pvcs, assignment, k)?;
    for p in &plugged {
        let grounded = ground_pvc(p, k)?;
        let smt = emit_smt(&grounded.closed(), cfg.vc_timeout())?;
        let sygus = if grounded.skolem_funs.is_empty() {
            None
        } else {
            let funs: Vec<SygusFun> = grounded
                .skolem_funs
                .iter()
                .map(|(name, inputs)| SygusFun {
                    name: name.clone(),
                    formals: inputs.iter().map(|v| (v.clone(), VarSort::Int)).collect(),
                    returns_bool: false,
                    grammar: None,
                })
                .collect();
            Some(emit_sygus(std::slice::from_ref(&grounded), &funs, cfg.vc_timeout())?)
        };
        stats.solver_calls += 1;
        let verdict = race(&smt, sygus.as_ref(), cfg);
        match verdict.outcome {
            Outcome::Valid => continue,
            Outcome::Invalid(model) => {
                if let Some(valuation) = parse_internal_model(&model) {
                    cache.push(CachedCex { pvc_id: p.id.clone(), valuation });
                }
                return Ok(false);
            }
            _ => return Ok(false),
        }
    }
    Ok(true)
}

/// Expand index quantifiers and flatten vectors so a PVC is solver-ready.
pub fn ground_pvc(p: &Pvc, k: Option<usize>) -> Result<Pvc, SynthError> {
    let Some(k) = k else {
        return Ok(p.clone());
    };
    let body = crate::logic::expand_idx_quantifiers(&p.body, k);
    let body = crate::logic::ground_vectors(&body, k)
        .map_err(|e| SynthError::Solver(SolverError::Serialize(e.to_string())))?;
    Ok(Pvc {
        id: p.id.clone(),
        universals: free_vars(&body),
        body,
        origin: p.origin.clone(),
        origin_path: p.origin_path.clone(),
        skolem_funs: p.skolem_funs.clone(),
    })
}

/// Joint enumerative synthesis: stream candidate assignments over the
/// product of the per-parameter grammars in nondecreasing total size,
/// pruning with the counterexample cache, and re-checking every returned
/// assignment through the solver backend.
pub fn synthesize(
    problem: &SynthProblem,
    cfg: &SolverConfig,
    stats: &mut SynthStats,
) -> Result<SynthResult, SynthError> {
    // Try the external SyGuS solver first when configured.
    if matches!(cfg.sygus.kind, crate::solver::EngineKind::External)
        && crate::solver::command_exists(&cfg.sygus.cmd)
        && !problem.params.is_empty()
    {
        if let Some(found) = try_external_sygus(problem, cfg, stats)? {
            return Ok(SynthResult::Found(found));
        }
    }
    enumerative_search(problem, cfg, stats, Instant::now())
}

fn grammar_for<'p>(
    problem: &'p SynthProblem,
    name: &str,
) -> Result<&'p GrammarSpec, SynthError> {
    problem
        .grammars
        .get(name)
        .ok_or_else(|| SynthError::MissingGrammar(name.to_string()))
}

fn enumerative_search(
    problem: &SynthProblem,
    cfg: &SolverConfig,
    stats: &mut SynthStats,
    start: Instant,
) -> Result<SynthResult, SynthError> {
    let deadline = start + Duration::from_secs(cfg.run_timeout_secs);
    if problem.params.is_empty() {
        // Nothing to synthesize: the empty assignment stands or falls with
        // the fixed one.
        let mut cache = Vec::new();
        let ok = check_assignment(
            problem.pvcs,
            &problem.fixed,
            problem.k,
            cfg,
            &mut cache,
            stats,
        )?;
        return Ok(if ok { SynthResult::Found(problem.fixed.clone()) } else { SynthResult::NoneFound });
    }
    let mut pools: Vec<(String, Vec<Formula>, Vec<(String, VarSort)>)> = Vec::new();
    for sig in &problem.params {
        let g = grammar_for(problem, &sig.name)?;
        let candidates = enumerate_candidates(g, &sig.formals, UNCONSTRAINED_DEFAULT_SIZE)?;
        if candidates.is_empty() {
            return Ok(SynthResult::NoneFound);
        }
        pools.push((sig.name.clone(), candidates, sig.formals.clone()));
    }
    let mut cache: Vec<CachedCex> = Vec::new();
    // Order the joint product by total candidate size.
    let mut order: Vec<Vec<usize>> = vec![vec![0; pools.len()]];
    {
        let mut all: Vec<(usize, Vec<usize>)> = Vec::new();
        let mut idx = vec![0usize; pools.len()];
        loop {
            let total: usize = idx
                .iter()
                .enumerate()
                .map(|(i, &j)| formula_size(&pools[i].1[j]))
                .sum();
            all.push((total, idx.clone()));
            let mut i = 0;
            loop {
                if i == idx.len() {
                    break;
                }
                idx[i] += 1;
                if idx[i] < pools[i].1.len() {
                    break;
                }
                idx[i] = 0;
                i += 1;
            }
            if i == idx.len() {
                break;
            }
        }
        all.sort_by_key(|(total, idx)| (*total, idx.clone()));
        order = all.into_iter().map(|(_, idx)| idx).collect();
    }
    for idx in order {
        if Instant::now() > deadline {
            return Ok(SynthResult::NoneFound);
        }
        let mut assignment = problem.fixed.clone();
        for (i, (name, pool, formals)) in pools.iter().enumerate() {
            assignment.params.insert(
                name.clone(),
                SummaryDef { formals: formals.clone(), body: pool[idx[i]].clone() },
            );
        }
        stats.candidates_tried += 1;
        if !survives_cache(&assignment, problem.pvcs, &cache, problem.k) {
            stats.candidates_pruned += 1;
            continue;
        }
        if check_assignment(problem.pvcs, &assignment, problem.k, cfg, &mut cache, stats)? {
            return Ok(SynthResult::Found(assignment));
        }
    }
    Ok(SynthResult::NoneFound)
}

/// Staged variant: parameters are solved one at a time in declaration order
/// against the PVCs they close, then the joint assignment is re-checked.
/// Heuristic; may miss assignments the joint search finds.
pub fn synthesize_staged(
    problem: &SynthProblem,
    cfg: &SolverConfig,
    stats: &mut SynthStats,
) -> Result<SynthResult, SynthError> {
    let mut fixed = problem.fixed.clone();
    for sig in &problem.params {
        let relevant: Vec<Pvc> = problem
            .pvcs
            .iter()
            .filter(|p| {
                let names = param_names(&p.body);
                names.iter().all(|n| n == &sig.name || fixed.params.contains_key(n))
            })
            .cloned()
            .collect();
        let sub = SynthProblem {
            pvcs: &relevant,
            params: vec![sig.clone()],
            grammars: problem.grammars.clone(),
            k: problem.k,
            fixed: fixed.clone(),
        };
        match enumerative_search(&sub, cfg, stats, Instant::now())? {
            SynthResult::Found(a) => fixed = a,
            SynthResult::NoneFound => return Ok(SynthResult::NoneFound),
        }
    }
    // Joint re-check of the composed assignment.
    let mut cache = Vec::new();
    let ok = check_assignment(problem.pvcs, &fixed, problem.k, cfg, &mut cache, stats)?;
    Ok(if ok { SynthResult::Found(fixed) } else { SynthResult::NoneFound })
}

// ---------------------------------------------------------------------------
// External SyGuS

fn render_sygus_grammar(g: &GrammarSpec) -> Option<String> {
    match g {
        GrammarSpec::Unconstrained { .. } => None,
        GrammarSpec::Template(t) => {
            // Hole names appear in the rendered template as symbols; each
            // becomes a grammar nonterminal listing its constant choices.
            let mut text = String::new();
            crate::solver::render_formula_smt(&t.template, &mut text).ok()?;
            let mut out = format!("((Start Bool ({text}))");
            for h in &t.holes {
                let choices =
                    h.choices.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(" ");
                out.push_str(&format!(" ({} Int ({choices}))", h.name));
            }
            out.push(')');
            Some(out)
        }
    }
}

fn try_external_sygus(
    problem: &SynthProblem,
    cfg: &SolverConfig,
    stats: &mut SynthStats,
) -> Result<Option<SummaryAssignment>, SynthError> {
    // Plug fixed assignments, ground, and pose one joint problem.
    let mut ground = Vec::new();
    for p in problem.pvcs {
        let body = problem.fixed.plug_formula_partial(&p.body, problem.k)?;
        let pvc = Pvc {
            id: p.id.clone(),
            universals: free_vars(&body),
            body,
            origin: p.origin.clone(),
            origin_path: p.origin_path.clone(),
            skolem_funs: p.skolem_funs.clone(),
        };
        ground.push(ground_pvc(&pvc, problem.k)?);
    }
    let mut funs = Vec::new();
    for sig in &problem.params {
        let grammar = render_sygus_grammar(grammar_for(problem, &sig.name)?);
        let mut formals = Vec::new();
        for (v, s) in &sig.formals {
            match s {
                VarSort::VecInt => {
                    for j in 1..=problem.k.unwrap_or(1) {
                        formals.push((crate::logic::vec_elem_name(v, j as i64), VarSort::Int));
                    }
                }
                VarSort::VecBool => {
                    for j in 1..=problem.k.unwrap_or(1) {
                        formals.push((crate::logic::vec_elem_name(v, j as i64), VarSort::Bool));
                    }
                }
                other => formals.push((v.clone(), *other)),
            }
        }
        funs.push(SygusFun {
            name: sig.name.clone(),
            formals,
            returns_bool: true,
            grammar,
        });
    }
    let query = emit_sygus(&ground, &funs, cfg.vc_timeout())?;
    stats.solver_calls += 1;
    let raw = match crate::solver::run_sygus_raw(&cfg.sygus, &query) {
        Ok(text) => text,
        Err(_) => return Ok(None),
    };
    let defs = match crate::solver::parse_sygus_solutions(&raw) {
        Ok(defs) if !defs.is_empty() => defs,
        _ => return Ok(None),
    };
    let mut assignment = problem.fixed.clone();
    for (name, formals, body) in defs {
        let Some(sig) = problem.params.iter().find(|s| s.name == name) else {
            continue;
        };
        // Solutions come back over flattened formals; rebase onto the sig's
        // vector formals by keeping the flattened names (plugging flattens
        // the same way).
        let _ = formals;
        let flat: Vec<(String, VarSort)> = funs
            .iter()
            .find(|f| f.name == name)
            .map(|f| f.formals.clone())
            .unwrap_or_default();
        let def_formals = if sig.formals.iter().any(|(_, s)| {
            matches!(s, VarSort::VecInt | VarSort::VecBool)
        }) {
            flat
        } else {
            sig.formals.clone()
        };
        assignment
            .params
            .insert(name.clone(), SummaryDef { formals: def_formals, body });
    }
    // Never trust the solver: re-check.
    let mut cache = Vec::new();
    if check_assignment(problem.pvcs, &assignment, problem.k, cfg, &mut cache, stats)? {
        Ok(Some(assignment))
    } else {
        Ok(None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gimp::{parse_grammar_text, GimpTerm, ET};
    use crate::skeleton::{p_skel, Context};
    use crate::vcgen::{extract_pvcs, optimize_pvcs};

    fn fig_problem() -> (Vec<Pvc>, Vec<ParameterSig>) {
        let g = parse_grammar_text("(nonterm N IntExpr 2 (+ 2 N))").unwrap();
        let post = Formula::neq(Term::var(ET), Term::Int(3));
        let skel =
            p_skel(&g, None, &Context::empty(), &Formula::True, &GimpTerm::nt("N"), &post).unwrap();
        let pvcs = optimize_pvcs(&extract_pvcs(&skel, &g).unwrap(), None);
        let params = skel.params.values().cloned().collect();
        (pvcs, params)
    }

    /// The template family { e_t mod n = 0 | n in 2..8 }: the hole sits in
    /// divisor position via the %mod marker.
    fn mod_template() -> GrammarSpec {
        GrammarSpec::Template(TemplateGrammar {
            holes: vec![Hole { name: "n".into(), choices: (2..=8).collect() }],
            template: Formula::eq(
                Term::FunApp("%mod".into(), vec![Term::var(ET), Term::var("n")]),
                Term::Int(0),
            ),
        })
    }

    #[test]
    fn template_enumeration_counts() {
        let g = GrammarSpec::Template(TemplateGrammar {
            holes: vec![Hole { name: "n".into(), choices: vec![2, 3] }],
            template: Formula::eq(Term::modulo(Term::var(ET), 2), Term::Int(0)),
        });
        // Template body ignores the hole here, so candidates deduplicate.
        let c = enumerate_candidates(&g, &[(ET.into(), VarSort::Int)], 9).unwrap();
        assert_eq!(c.len(), 1);
        let g2 = GrammarSpec::Template(TemplateGrammar {
            holes: vec![Hole { name: "n".into(), choices: vec![2, 3] }],
            template: Formula::eq(Term::var("n"), Term::var(ET)),
        });
        let c2 = enumerate_candidates(&g2, &[(ET.into(), VarSort::Int)], 9).unwrap();
        assert_eq!(c2.len(), 2);
    }

    #[test]
    fn unconstrained_terminals_at_bound_one() {
        let c = enumerate_unconstrained(&[("a".into(), VarSort::Int)], 1);
        // true, false (atoms of size 1 only).
        assert_eq!(c.len(), 2);
        let c3 = enumerate_unconstrained(&[("a".into(), VarSort::Int)], 3);
        assert!(c3.iter().any(|f| matches!(f, Formula::Lt(..))));
        // Sizes are nondecreasing along the stream.
        let sizes: Vec<usize> = c3.iter().map(formula_size).collect();
        assert!(sizes.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn dedup_commutative_equality() {
        let c = enumerate_unconstrained(&[("a".into(), VarSort::Int)], 3);
        let count_eq_a0 = c
            .iter()
            .filter(|f| {
                matches!(f, Formula::Eq(x, y)
                    if (x == &Term::var("a") && y == &Term::Int(0))
                    || (y == &Term::var("a") && x == &Term::Int(0)))
            })
            .count();
        assert_eq!(count_eq_a0, 1);
    }

    #[test]
    fn fig_synthesis_finds_mod_2() {
        let (pvcs, params) = fig_problem();
        let name = params[0].name.clone();
        let mut grammars = IndexMap::new();
        grammars.insert(name.clone(), mod_template());
        let problem = SynthProblem {
            pvcs: &pvcs,
            params,
            grammars,
            k: None,
            fixed: SummaryAssignment::default(),
        };
        let mut stats = SynthStats::default();
        let cfg = SolverConfig::all_internal();
        match synthesize(&problem, &cfg, &mut stats).unwrap() {
            SynthResult::Found(a) => {
                let def = &a.params[&name];
                let want = Formula::eq(Term::modulo(Term::var(ET), 2), Term::Int(0));
                assert!(crate::logic::alpha_eq(&def.body, &want), "got {}", print_formula(&def.body));
            }
            SynthResult::NoneFound => panic!("expected a summary"),
        }
    }

    #[test]
    fn negative_target_is_none_found() {
        // {true} N {e_t != 4} admits no mod-n summary.
        let g = parse_grammar_text("(nonterm N IntExpr 2 (+ 2 N))").unwrap();
        let post = Formula::neq(Term::var(ET), Term::Int(4));
        let skel =
            p_skel(&g, None, &Context::empty(), &Formula::True, &GimpTerm::nt("N"), &post).unwrap();
        let pvcs = optimize_pvcs(&extract_pvcs(&skel, &g).unwrap(), None);
        let params: Vec<ParameterSig> = skel.params.values().cloned().collect();
        let name = params[0].name.clone();
        let mut grammars = IndexMap::new();
        grammars.insert(name, mod_template());
        let problem = SynthProblem {
            pvcs: &pvcs,
            params,
            grammars,
            k: None,
            fixed: SummaryAssignment::default(),
        };
        let mut stats = SynthStats::default();
        let cfg = SolverConfig::all_internal();
        assert_eq!(synthesize(&problem, &cfg, &mut stats).unwrap(), SynthResult::NoneFound);
    }

    #[test]
    fn cache_prunes_and_preserves_correct_assignments() {
        let (pvcs, params) = fig_problem();
        let sig = &params[0];
        // Candidate e_t mod 3 = 0 is falsified by the cached instance of
        // "Q(2)": 2 mod 3 != 0.
        let bad = SummaryAssignment {
            params: {
                let mut m = IndexMap::new();
                m.insert(
                    sig.name.clone(),
                    SummaryDef {
                        formals: sig.formals.clone(),
                        body: Formula::eq(Term::modulo(Term::var(ET), 3), Term::Int(0)),
                    },
                );
                m
            },
            funs: IndexMap::new(),
        };
        let good = SummaryAssignment {
            params: {
                let mut m = IndexMap::new();
                m.insert(
                    sig.name.clone(),
                    SummaryDef {
                        formals: sig.formals.clone(),
                        body: Formula::eq(Term::modulo(Term::var(ET), 2), Term::Int(0)),
                    },
                );
                m
            },
            funs: IndexMap::new(),
        };
        // Cached valuation: the closed "true -> Q(2)" PVC has no universals;
        // evaluation is ground.
        let closed_id = pvcs
            .iter()
            .find(|p| p.universals.is_empty() && p.id.ends_with(".1"))
            .map(|p| p.id.clone())
            .expect("closed pvc");
        let cache = vec![CachedCex { pvc_id: closed_id, valuation: vec![("%dummy".into(), Value::Int(0))] }];
        let survivors = counterexample_filter(vec![bad, good.clone()], &pvcs, &cache, None);
        assert_eq!(survivors.len(), 1);
        assert_eq!(survivors[0], good);
    }

    #[test]
    fn empty_cache_is_identity() {
        let (pvcs, params) = fig_problem();
        let sig = &params[0];
        let a = SummaryAssignment {
            params: {
                let mut m = IndexMap::new();
                m.insert(
                    sig.name.clone(),
                    SummaryDef { formals: sig.formals.clone(), body: Formula::True },
                );
                m
            },
            funs: IndexMap::new(),
        };
        let out = counterexample_filter(vec![a.clone()], &pvcs, &[], None);
        assert_eq!(out, vec![a]);
    }

    #[test]
    fn true_summary_pruned_by_cached_instance() {
        // Candidate `true` gives no protection against e_t_y = 3 on
        // (Q(e_t_y)) -> e_t_y != 3.
        let (pvcs, params) = fig_problem();
        let sig = &params[0];
        let a = SummaryAssignment {
            params: {
                let mut m = IndexMap::new();
                m.insert(
                    sig.name.clone(),
                    SummaryDef { formals: sig.formals.clone(), body: Formula::True },
                );
                m
            },
            funs: IndexMap::new(),
        };
        let open_pvc = pvcs.iter().find(|p| !p.universals.is_empty()).unwrap();
        let vname = open_pvc.universals[0].0.clone();
        let cache =
            vec![CachedCex { pvc_id: open_pvc.id.clone(), valuation: vec![(vname, Value::Int(3))] }];
        let out = counterexample_filter(vec![a], &pvcs, &cache, None);
        assert!(out.is_empty());
    }

    #[test]
    fn monotone_filtering_calls() {
        // With the cache warmed, solver calls do not increase.
        let (pvcs, params) = fig_problem();
        let name = params[0].name.clone();
        let mut grammars = IndexMap::new();
        grammars.insert(name, mod_template());
        let cfg = SolverConfig::all_internal();
        let problem = SynthProblem {
            pvcs: &pvcs,
            params: params.clone(),
            grammars: grammars.clone(),
            k: None,
            fixed: SummaryAssignment::default(),
        };
        let mut stats = SynthStats::default();
        let r = synthesize(&problem, &cfg, &mut stats).unwrap();
        assert!(matches!(r, SynthResult::Found(_)));
        // The cache can only skip candidates, never add calls: with the
        // cache active, tried - pruned <= tried.
        assert!(stats.candidates_pruned <= stats.candidates_tried);
        assert!(stats.solver_calls >= 1);
    }
}
