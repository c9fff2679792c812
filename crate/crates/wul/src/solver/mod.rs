//! Solver backend: SMT-LIB v2.6 validity queries, SyGuS-IF v2 synthesis
//! problems, external solver processes, and the race between the direct SMT
//! query and the skolemized SyGuS query. A built-in Presburger engine is
//! available as a drop-in for environments without solver binaries.

pub mod presburger;

use std::io::Write as _;
use std::path::PathBuf;
use std::process::{Child, Command, Stdio};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use indexmap::{IndexMap, IndexSet};
use serde::Deserialize;
use thiserror::Error;

use crate::logic::{free_vars, Arg, Formula, Quant, Term, VarSort};
use crate::vcgen::Pvc;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueryKind {
    SmtValidity,
    SygusSynthesis,
}

/// A prepared query: the emitted script plus the typed payload the built-in
/// engine works from.
#[derive(Debug, Clone)]
pub struct SolverQuery {
    pub kind: QueryKind,
    pub text: String,
    pub logic: String,
    pub timeout: Duration,
    pub payload: QueryPayload,
}

#[derive(Debug, Clone)]
pub enum QueryPayload {
    Validity {
        universals: Vec<(String, VarSort)>,
        body: Formula,
        /// Uninterpreted function symbols (skolemized existentials) with
        /// their arities; their presence downgrades `sat` to Unknown.
        funs: Vec<(String, usize)>,
    },
    Synthesis {
        pvcs: Vec<Pvc>,
        funs: Vec<SygusFun>,
    },
}

/// One synth-fun: a parameter or skolem function with flattened scalar
/// formals and an optional pre-rendered SyGuS grammar block.
#[derive(Debug, Clone)]
pub struct SygusFun {
    pub name: String,
    pub formals: Vec<(String, VarSort)>,
    pub returns_bool: bool,
    pub grammar: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Valid,
    Invalid(String),
    Unknown,
    Timeout,
    SolverError(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Racer {
    Smt,
    Sygus,
}

#[derive(Debug, Clone)]
pub struct SolverVerdict {
    pub outcome: Outcome,
    pub wall: Duration,
    pub winner: Option<Racer>,
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("cannot serialize: {0}")]
    Serialize(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

// ---------------------------------------------------------------------------
// Configuration

#[derive(Debug, Clone, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum EngineKind {
    External,
    Internal,
}

#[derive(Debug, Clone, Deserialize)]
pub struct EngineConfig {
    pub kind: EngineKind,
    #[serde(default)]
    pub cmd: String,
    #[serde(default)]
    pub args: Vec<String>,
}

impl EngineConfig {
    pub fn external(cmd: &str, args: &[&str]) -> EngineConfig {
        EngineConfig {
            kind: EngineKind::External,
            cmd: cmd.to_string(),
            args: args.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn internal() -> EngineConfig {
        EngineConfig { kind: EngineKind::Internal, cmd: String::new(), args: vec![] }
    }

    pub fn describe(&self) -> String {
        match self.kind {
            EngineKind::Internal => "internal".to_string(),
            EngineKind::External => self.cmd.clone(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct SolverConfig {
    #[serde(default = "default_vc_timeout")]
    pub vc_timeout_secs: u64,
    #[serde(default = "default_run_timeout")]
    pub run_timeout_secs: u64,
    #[serde(default = "default_pool")]
    pub pool: usize,
    pub smt: EngineConfig,
    pub sygus: EngineConfig,
}

fn default_vc_timeout() -> u64 {
    30
}

fn default_run_timeout() -> u64 {
    300
}

fn default_pool() -> usize {
    4
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            vc_timeout_secs: default_vc_timeout(),
            run_timeout_secs: default_run_timeout(),
            pool: default_pool(),
            smt: EngineConfig::external("z3", &[]),
            sygus: EngineConfig::external("cvc5", &["--lang=sygus2"]),
        }
    }
}

impl SolverConfig {
    pub fn from_toml(text: &str) -> Result<SolverConfig, SolverError> {
        toml::from_str(text).map_err(|e| SolverError::Config(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<SolverConfig, SolverError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn all_internal() -> SolverConfig {
        SolverConfig {
            smt: EngineConfig::internal(),
            sygus: EngineConfig::internal(),
            ..SolverConfig::default()
        }
    }

    /// Default posture when no config file is given: the standard external
    /// solvers when present on PATH, the built-in engine otherwise.
    pub fn best_available() -> SolverConfig {
        let mut cfg = SolverConfig::default();
        if !command_exists("z3") {
            cfg.smt = EngineConfig::internal();
        }
        if !command_exists("cvc5") {
            cfg.sygus = EngineConfig::internal();
        }
        cfg
    }

    pub fn vc_timeout(&self) -> Duration {
        Duration::from_secs(self.vc_timeout_secs)
    }
}

pub fn command_exists(cmd: &str) -> bool {
    if cmd.contains('/') {
        return std::path::Path::new(cmd).exists();
    }
    std::env::var_os("PATH")
        .map(|paths| {
            std::env::split_paths(&paths).any(|dir| dir.join(cmd).is_file())
        })
        .unwrap_or(false)
}

// ---------------------------------------------------------------------------
// SMT-LIB rendering

fn smt_term(t: &Term, out: &mut String) -> Result<(), SolverError> {
    match t {
        Term::Int(n) => {
            if *n < 0 {
                out.push_str(&format!("(- {})", -n));
            } else {
                out.push_str(&n.to_string());
            }
        }
        Term::Var(x) => out.push_str(x),
        Term::VecElem(x, _) => {
            return Err(SolverError::Serialize(format!(
                "vector element `{x}[..]` (index quantifiers not yet expanded)"
            )))
        }
        Term::Add(a, b) => {
            out.push_str("(+ ");
            smt_term(a, out)?;
            out.push(' ');
            smt_term(b, out)?;
            out.push(')');
        }
        Term::Mul(c, a) => {
            out.push_str("(* ");
            if *c < 0 {
                out.push_str(&format!("(- {})", -c));
            } else {
                out.push_str(&c.to_string());
            }
            out.push(' ');
            smt_term(a, out)?;
            out.push(')');
        }
        Term::Div(a, d) => {
            out.push_str("(div ");
            smt_term(a, out)?;
            out.push_str(&format!(" {d})"));
        }
        Term::Mod(a, d) => {
            out.push_str("(mod ");
            smt_term(a, out)?;
            out.push_str(&format!(" {d})"));
        }
        Term::FunApp(f, args) => {
            out.push('(');
            // Template markers for a hole in divisor position render as the
            // real operator (grammar nonterminals may sit there in SyGuS).
            out.push_str(match f.as_str() {
                "%mod" => "mod",
                "%div" => "div",
                other => other,
            });
            for a in args {
                out.push(' ');
                smt_term(a, out)?;
            }
            out.push(')');
        }
    }
    Ok(())
}

/// Public SMT-LIB rendering of a formula (used for SyGuS grammar blocks).
pub fn render_formula_smt(f: &Formula, out: &mut String) -> Result<(), SolverError> {
    smt_formula(f, out)
}

fn smt_formula(f: &Formula, out: &mut String) -> Result<(), SolverError> {
    match f {
        Formula::True => out.push_str("true"),
        Formula::False => out.push_str("false"),
        Formula::BoolVar(x) => out.push_str(x),
        Formula::BoolVecElem(x, _) => {
            return Err(SolverError::Serialize(format!(
                "vector element `{x}[..]` (index quantifiers not yet expanded)"
            )))
        }
        Formula::Lt(a, b) => {
            out.push_str("(< ");
            smt_term(a, out)?;
            out.push(' ');
            smt_term(b, out)?;
            out.push(')');
        }
        Formula::Eq(a, b) => {
            out.push_str("(= ");
            smt_term(a, out)?;
            out.push(' ');
            smt_term(b, out)?;
            out.push(')');
        }
        Formula::Not(a) => {
            out.push_str("(not ");
            smt_formula(a, out)?;
            out.push(')');
        }
        Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) | Formula::Iff(a, b) => {
            out.push('(');
            out.push_str(match f {
                Formula::And(..) => "and",
                Formula::Or(..) => "or",
                Formula::Implies(..) => "=>",
                _ => "=",
            });
            out.push(' ');
            smt_formula(a, out)?;
            out.push(' ');
            smt_formula(b, out)?;
            out.push(')');
        }
        Formula::Quantified(q, binder, body) => {
            let sort = match binder.sort {
                VarSort::Int => "Int",
                VarSort::Bool => "Bool",
                other => {
                    return Err(SolverError::Serialize(format!(
                        "quantifier over {other} (ground vectors first)"
                    )))
                }
            };
            out.push_str(if *q == Quant::Forall { "(forall ((" } else { "(exists ((" });
            out.push_str(&binder.name);
            out.push_str(&format!(" {sort})) "));
            smt_formula(body, out)?;
            out.push(')');
        }
        Formula::ParamApp(p, args) => {
            out.push('(');
            out.push_str(p);
            for a in args {
                out.push(' ');
                match a {
                    Arg::Int(t) => smt_term(t, out)?,
                    Arg::Bool(g) => smt_formula(g, out)?,
                }
            }
            out.push(')');
        }
    }
    Ok(())
}

/// Emit an SMT validity query for a closed, parameter-free formula: the
/// outer universal prefix becomes free constants, the negated matrix is
/// asserted, and `unsat` means Valid. Skolem functions, if present, are
/// declared uninterpreted (then `sat` only means Unknown).
pub fn emit_smt(vc: &Formula, timeout: Duration) -> Result<SolverQuery, SolverError> {
    // Strip the universal prefix into declarations.
    let mut universals: Vec<(String, VarSort)> = Vec::new();
    let mut body = vc.clone();
    loop {
        match body {
            Formula::Quantified(Quant::Forall, binder, inner)
                if matches!(binder.sort, VarSort::Int | VarSort::Bool) =>
            {
                universals.push((binder.name.clone(), binder.sort));
                body = *inner;
            }
            other => {
                body = other;
                break;
            }
        }
    }
    for (v, sort) in free_vars(&body) {
        if !universals.iter().any(|(u, _)| u == &v) {
            match sort {
                VarSort::Int | VarSort::Bool => universals.push((v, sort)),
                other => {
                    return Err(SolverError::Serialize(format!(
                        "free {other} variable `{v}` in VC"
                    )))
                }
            }
        }
    }
    if !crate::logic::param_names(&body).is_empty() {
        return Err(SolverError::Serialize("VC still contains parameters".into()));
    }
    let funs: Vec<(String, usize)> = collect_fun_arities(&body);
    let logic = if funs.is_empty() { "LIA" } else { "UFLIA" };
    let mut text = String::new();
    text.push_str(&format!("(set-logic {logic})\n"));
    for (f, arity) in &funs {
        let params = vec!["Int"; *arity].join(" ");
        text.push_str(&format!("(declare-fun {f} ({params}) Int)\n"));
    }
    for (v, sort) in &universals {
        let s = if *sort == VarSort::Int { "Int" } else { "Bool" };
        text.push_str(&format!("(declare-const {v} {s})\n"));
    }
    let mut neg = String::new();
    smt_formula(&Formula::not(body.clone()), &mut neg)?;
    text.push_str(&format!("(assert {neg})\n(check-sat)\n(get-model)\n"));
    Ok(SolverQuery {
        kind: QueryKind::SmtValidity,
        text,
        logic: logic.to_string(),
        timeout,
        payload: QueryPayload::Validity { universals, body, funs },
    })
}

fn collect_fun_arities(f: &Formula) -> Vec<(String, usize)> {
    fn walk_t(t: &Term, out: &mut IndexMap<String, usize>) {
        match t {
            Term::FunApp(f, args) => {
                out.entry(f.clone()).or_insert(args.len());
                for a in args {
                    walk_t(a, out);
                }
            }
            Term::Add(a, b) => {
                walk_t(a, out);
                walk_t(b, out);
            }
            Term::Mul(_, a) | Term::Div(a, _) | Term::Mod(a, _) => walk_t(a, out),
            Term::VecElem(_, i) => walk_t(i, out),
            _ => {}
        }
    }
    fn walk(f: &Formula, out: &mut IndexMap<String, usize>) {
        match f {
            Formula::Lt(a, b) | Formula::Eq(a, b) => {
                walk_t(a, out);
                walk_t(b, out);
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
    let mut out = IndexMap::new();
    walk(f, &mut out);
    out.into_iter().collect()
}

/// Emit a SyGuS synthesis problem: one synth-fun per hole, declare-var for
/// every extracted universal, one constraint per PVC.
pub fn emit_sygus(
    pvcs: &[Pvc],
    funs: &[SygusFun],
    timeout: Duration,
) -> Result<SolverQuery, SolverError> {
    let mut text = String::new();
    text.push_str("(set-logic LIA)\n");
    for f in funs {
        let params = f
            .formals
            .iter()
            .map(|(v, s)| {
                format!("({v} {})", if *s == VarSort::Int { "Int" } else { "Bool" })
            })
            .collect::<Vec<_>>()
            .join(" ");
        let ret = if f.returns_bool { "Bool" } else { "Int" };
        match &f.grammar {
            Some(g) => text.push_str(&format!("(synth-fun {} ({params}) {ret}\n{g})\n", f.name)),
            None => text.push_str(&format!("(synth-fun {} ({params}) {ret})\n", f.name)),
        }
    }
    let mut declared: IndexSet<String> = IndexSet::new();
    for p in pvcs {
        for (v, sort) in &p.universals {
            if declared.insert(v.clone()) {
                let s = match sort {
                    VarSort::Int => "Int",
                    VarSort::Bool => "Bool",
                    other => {
                        return Err(SolverError::Serialize(format!(
                            "declare-var over {other}"
                        )))
                    }
                };
                text.push_str(&format!("(declare-var {v} {s})\n"));
            }
        }
    }
    for p in pvcs {
        let mut c = String::new();
        smt_formula(&p.body, &mut c)?;
        text.push_str(&format!("(constraint {c})\n"));
    }
    text.push_str("(check-synth)\n");
    Ok(SolverQuery {
        kind: QueryKind::SygusSynthesis,
        text,
        logic: "LIA".to_string(),
        timeout,
        payload: QueryPayload::Synthesis { pvcs: pvcs.to_vec(), funs: funs.to_vec() },
    })
}

// ---------------------------------------------------------------------------
// Running queries

struct ChildGuard {
    child: Arc<Mutex<Option<Child>>>,
}

impl ChildGuard {
    fn kill(&self) {
        if let Ok(mut guard) = self.child.lock() {
            if let Some(c) = guard.as_mut() {
                let _ = c.kill();
                let _ = c.wait();
            }
            *guard = None;
        }
    }
}

fn run_external(
    cfg: &EngineConfig,
    query: &SolverQuery,
    cancel: &AtomicBool,
    shared_child: Arc<Mutex<Option<Child>>>,
) -> Outcome {
    if !command_exists(&cfg.cmd) {
        return Outcome::SolverError(format!("solver executable `{}` not found", cfg.cmd));
    }
    let mut file = match tempfile::Builder::new()
        .prefix("wul-query")
        .suffix(match query.kind {
            QueryKind::SmtValidity => ".smt2",
            QueryKind::SygusSynthesis => ".sy",
        })
        .tempfile()
    {
        Ok(f) => f,
        Err(e) => return Outcome::SolverError(e.to_string()),
    };
    if let Err(e) = file.write_all(query.text.as_bytes()) {
        return Outcome::SolverError(e.to_string());
    }
    let path: PathBuf = file.path().to_path_buf();
    let spawned = Command::new(&cfg.cmd)
        .args(&cfg.args)
        .arg(&path)
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn();
    let child = match spawned {
        Ok(c) => c,
        Err(e) => return Outcome::SolverError(format!("spawn {}: {e}", cfg.cmd)),
    };
    {
        let mut guard = shared_child.lock().unwrap();
        *guard = Some(child);
    }
    let start = Instant::now();
    loop {
        {
            let mut guard = shared_child.lock().unwrap();
            let Some(c) = guard.as_mut() else {
                return Outcome::Unknown; // killed by the race arbiter
            };
            match c.try_wait() {
                Ok(Some(_status)) => {
                    let mut out = String::new();
                    if let Some(mut stdout) = c.stdout.take() {
                        use std::io::Read;
                        let _ = stdout.read_to_string(&mut out);
                    }
                    *guard = None;
                    return parse_solver_output(query.kind, &out);
                }
                Ok(None) => {}
                Err(e) => {
                    *guard = None;
                    return Outcome::SolverError(e.to_string());
                }
            }
        }
        if cancel.load(Ordering::Relaxed) {
            ChildGuard { child: shared_child.clone() }.kill();
            return Outcome::Unknown;
        }
        if start.elapsed() > query.timeout {
            ChildGuard { child: shared_child.clone() }.kill();
            return Outcome::Timeout;
        }
        std::thread::sleep(Duration::from_millis(5));
    }
}

fn parse_solver_output(kind: QueryKind, out: &str) -> Outcome {
    let mut lines = out.lines().map(str::trim).filter(|l| !l.is_empty());
    match kind {
        QueryKind::SmtValidity => match lines.next() {
            Some("unsat") => Outcome::Valid,
            Some("sat") => {
                let rest: Vec<&str> = lines.collect();
                Outcome::Invalid(rest.join("\n"))
            }
            Some("unknown") => Outcome::Unknown,
            Some(other) => Outcome::SolverError(format!("unexpected solver answer `{other}`")),
            None => Outcome::SolverError("empty solver output".to_string()),
        },
        QueryKind::SygusSynthesis => {
            let text = out.trim();
            if text.starts_with("infeasible") || text.starts_with("fail") {
                // A bounded template grammar refutes nothing about the triple.
                Outcome::Unknown
            } else if text.contains("define-fun") {
                Outcome::Valid
            } else if text.starts_with("unknown") || text.is_empty() {
                Outcome::Unknown
            } else {
                Outcome::SolverError(format!("unexpected SyGuS answer `{text}`"))
            }
        }
    }
}

/// Downgrade a sat answer to Unknown when uninterpreted functions are
/// declared: a model over free interpretations refutes nothing.
fn adjust_for_uf(outcome: Outcome, has_funs: bool) -> Outcome {
    match outcome {
        Outcome::Invalid(_) if has_funs => Outcome::Unknown,
        other => other,
    }
}

fn run_internal_smt(query: &SolverQuery, cancel: &AtomicBool) -> Outcome {
    let QueryPayload::Validity { universals, body, funs } = &query.payload else {
        return Outcome::SolverError("internal SMT engine got a synthesis payload".into());
    };
    if !funs.is_empty() {
        return Outcome::Unknown;
    }
    if cancel.load(Ordering::Relaxed) {
        return Outcome::Unknown;
    }
    let closed = {
        let mut f = body.clone();
        for (v, sort) in universals.iter().rev() {
            f = Formula::forall(v, *sort, f);
        }
        f
    };
    match presburger::decide_closed(&closed) {
        Ok(true) => Outcome::Valid,
        Ok(false) => {
            let model = presburger::find_countermodel(universals, body, 16)
                .map(|m| {
                    m.into_iter()
                        .map(|(v, val)| format!("{v} = {val}"))
                        .collect::<Vec<_>>()
                        .join(", ")
                })
                .unwrap_or_else(|| "(no small model found)".to_string());
            Outcome::Invalid(model)
        }
        Err(e) => Outcome::SolverError(e.to_string()),
    }
}

/// Built-in fallback for the skolemized SyGuS racer: enumerate linear
/// interpretations for the skolem functions and re-check validity.
fn run_internal_sygus(query: &SolverQuery, cancel: &AtomicBool) -> Outcome {
    let QueryPayload::Synthesis { pvcs, funs } = &query.payload else {
        return Outcome::SolverError("internal SyGuS engine got a validity payload".into());
    };
    // Only skolem-function holes are handled here; parameter synthesis goes
    // through the enumerative engine in the synth module.
    if funs.iter().any(|f| f.returns_bool) {
        return Outcome::Unknown;
    }
    let candidates = |formals: &[(String, VarSort)]| -> Vec<Term> {
        let vars: Vec<Term> =
            formals.iter().map(|(v, _)| Term::var(v)).collect();
        let mut out = vec![Term::Int(0), Term::Int(1)];
        out.extend(vars.clone());
        for (i, a) in vars.iter().enumerate() {
            for b in vars.iter().skip(i) {
                out.push(Term::add(a.clone(), b.clone()));
            }
            out.push(Term::add(a.clone(), Term::Int(1)));
            out.push(Term::sub(a.clone(), Term::Int(1)));
            out.push(Term::Mul(2, Box::new(a.clone())));
        }
        out
    };
    let pools: Vec<Vec<Term>> = funs.iter().map(|f| candidates(&f.formals)).collect();
    if pools.iter().any(|p| p.is_empty()) {
        return Outcome::Unknown;
    }
    let mut idx = vec![0usize; pools.len()];
    loop {
        if cancel.load(Ordering::Relaxed) {
            return Outcome::Unknown;
        }
        let mut assignment = crate::vcgen::SummaryAssignment::default();
        for (i, f) in funs.iter().enumerate() {
            assignment.funs.insert(
                f.name.clone(),
                (f.formals.iter().map(|(v, _)| v.clone()).collect(), pools[i][idx[i]].clone()),
            );
        }
        let mut all_valid = true;
        for p in pvcs {
            let plugged = match assignment.plug_formula(&p.body, None) {
                Ok(f) => f,
                Err(_) => {
                    all_valid = false;
                    break;
                }
            };
            let mut closed = plugged;
            for (v, sort) in p.universals.iter().rev() {
                closed = Formula::forall(v, *sort, closed);
            }
            match presburger::decide_closed(&closed) {
                Ok(true) => {}
                _ => {
                    all_valid = false;
                    break;
                }
            }
        }
        if all_valid {
            return Outcome::Valid;
        }
        // Odometer.
        let mut i = 0;
        loop {
            if i == idx.len() {
                return Outcome::Unknown;
            }
            idx[i] += 1;
            if idx[i] < pools[i].len() {
                break;
            }
            idx[i] = 0;
            i += 1;
        }
    }
}

/// Run an external SyGuS solver and return raw stdout (for solution parsing).
pub fn run_sygus_raw(cfg: &EngineConfig, query: &SolverQuery) -> Result<String, SolverError> {
    if !command_exists(&cfg.cmd) {
        return Err(SolverError::Config(format!("solver executable `{}` not found", cfg.cmd)));
    }
    let mut file = tempfile::Builder::new().prefix("wul-query").suffix(".sy").tempfile()?;
    file.write_all(query.text.as_bytes())?;
    let out = Command::new(&cfg.cmd)
        .args(&cfg.args)
        .arg(file.path())
        .stderr(Stdio::null())
        .output()?;
    Ok(String::from_utf8_lossy(&out.stdout).to_string())
}

/// Parse `(define-fun name ((v Sort)...) Sort body)` forms out of SyGuS
/// solver output.
pub fn parse_sygus_solutions(
    text: &str,
) -> Result<Vec<(String, Vec<(String, VarSort)>, Formula)>, SolverError> {
    let trimmed: String = text
        .lines()
        .filter(|l| {
            let l = l.trim();
            !l.is_empty() && l != "unsat" && l != "sat" && !l.starts_with("(error")
        })
        .collect::<Vec<_>>()
        .join("\n");
    let forms = crate::sexp::parse_all(&trimmed)
        .map_err(|e| SolverError::Serialize(format!("unparseable solver output: {e}")))?;
    let mut defs = Vec::new();
    let mut stack: Vec<&crate::sexp::Sexp> = forms.iter().collect();
    while let Some(form) = stack.pop() {
        let Some(items) = form.list() else { continue };
        if items.first().and_then(|h| h.atom()) == Some("define-fun") {
            if items.len() != 5 {
                continue;
            }
            let name = items[1].atom().unwrap_or_default().to_string();
            let mut formals = Vec::new();
            let mut scope = crate::logic::FormulaScope::default();
            for b in items[2].list().unwrap_or(&[]) {
                let pair = b.list().unwrap_or(&[]);
                if pair.len() != 2 {
                    continue;
                }
                let v = pair[0].atom().unwrap_or_default().to_string();
                let sort = match pair[1].atom() {
                    Some("Bool") => {
                        scope.bool_vars.insert(v.clone());
                        VarSort::Bool
                    }
                    _ => VarSort::Int,
                };
                formals.push((v, sort));
            }
            let body = crate::logic::parse_formula_sexp(&items[4], &scope)
                .map_err(|e| SolverError::Serialize(format!("solution body: {e}")))?;
            defs.push((name, formals, body));
        } else {
            for sub in items {
                stack.push(sub);
            }
        }
    }
    Ok(defs)
}

fn definitive(o: &Outcome) -> bool {
    matches!(o, Outcome::Valid | Outcome::Invalid(_))
}

/// Race the SMT query against the (optional) SyGuS query: first definitive
/// answer wins and the loser is terminated; an Unknown waits for the other
/// side. Both timing out yields Timeout.
pub fn race(
    smt: &SolverQuery,
    sygus: Option<&SolverQuery>,
    cfg: &SolverConfig,
) -> SolverVerdict {
    let start = Instant::now();
    let cancel = Arc::new(AtomicBool::new(false));
    let (tx, rx) = mpsc::channel::<(Racer, Outcome)>();

    std::thread::scope(|scope| {
        let smt_child: Arc<Mutex<Option<Child>>> = Arc::new(Mutex::new(None));
        let sygus_child: Arc<Mutex<Option<Child>>> = Arc::new(Mutex::new(None));
        {
            let tx = tx.clone();
            let cancel = cancel.clone();
            let child = smt_child.clone();
            let engine = cfg.smt.clone();
            scope.spawn(move || {
                let has_funs = matches!(
                    &smt.payload,
                    QueryPayload::Validity { funs, .. } if !funs.is_empty()
                );
                let outcome = match engine.kind {
                    EngineKind::External => {
                        adjust_for_uf(run_external(&engine, smt, &cancel, child), has_funs)
                    }
                    EngineKind::Internal => run_internal_smt(smt, &cancel),
                };
                let _ = tx.send((Racer::Smt, outcome));
            });
        }
        let racer_count = if let Some(sy) = sygus {
            let tx = tx.clone();
            let cancel = cancel.clone();
            let child = sygus_child.clone();
            let engine = cfg.sygus.clone();
            scope.spawn(move || {
                let outcome = match engine.kind {
                    EngineKind::External => run_external(&engine, sy, &cancel, child),
                    EngineKind::Internal => run_internal_sygus(sy, &cancel),
                };
                let _ = tx.send((Racer::Sygus, outcome));
            });
            2
        } else {
            1
        };
        drop(tx);

        let overall = smt.timeout + Duration::from_secs(2);
        let mut fallback: Option<(Racer, Outcome)> = None;
        let mut received = 0;
        let verdict = loop {
            match rx.recv_timeout(overall.saturating_sub(start.elapsed())) {
                Ok((who, outcome)) => {
                    received += 1;
                    if definitive(&outcome) {
                        break Some((who, outcome));
                    }
                    if fallback.is_none()
                        || matches!(fallback, Some((_, Outcome::Timeout)))
                    {
                        fallback = Some((who, outcome));
                    }
                    if received == racer_count {
                        break fallback.take();
                    }
                }
                Err(_) => break fallback.take(),
            }
        };
        cancel.store(true, Ordering::Relaxed);
        ChildGuard { child: smt_child.clone() }.kill();
        ChildGuard { child: sygus_child.clone() }.kill();
        let (winner, outcome) = match verdict {
            Some((who, outcome)) => (Some(who), outcome),
            None => (None, Outcome::Timeout),
        };
        SolverVerdict { outcome, wall: start.elapsed(), winner }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::Formula as F;

    #[test]
    fn emitted_script_is_deterministic() {
        let vc = F::forall(
            "a",
            VarSort::Int,
            F::implies(
                F::eq(Term::modulo(Term::var("a"), 2), Term::Int(0)),
                F::neq(Term::var("a"), Term::Int(3)),
            ),
        );
        let q1 = emit_smt(&vc, Duration::from_secs(5)).unwrap();
        let q2 = emit_smt(&vc, Duration::from_secs(5)).unwrap();
        assert_eq!(q1.text, q2.text);
        assert!(q1.text.starts_with("(set-logic LIA)\n(declare-const a Int)\n"));
        assert!(q1.text.contains("(assert (not "));
        assert!(q1.text.ends_with("(check-sat)\n(get-model)\n"));
    }

    #[test]
    fn trivial_true_vc_is_valid_internally() {
        let q = emit_smt(&F::True, Duration::from_secs(5)).unwrap();
        let cfg = SolverConfig::all_internal();
        let v = race(&q, None, &cfg);
        assert_eq!(v.outcome, Outcome::Valid);
        assert_eq!(v.winner, Some(Racer::Smt));
    }

    #[test]
    fn false_vc_is_invalid_with_model() {
        let vc = F::eq(Term::Int(0), Term::Int(1));
        let q = emit_smt(&vc, Duration::from_secs(5)).unwrap();
        let cfg = SolverConfig::all_internal();
        let v = race(&q, None, &cfg);
        assert!(matches!(v.outcome, Outcome::Invalid(_)));
    }

    #[test]
    fn plugged_mod_vc_checks_valid() {
        // true -> (2 mod 2 = 0)
        let vc = F::implies(
            F::True,
            F::eq(Term::modulo(Term::Int(2), 2), Term::Int(0)),
        );
        let q = emit_smt(&vc, Duration::from_secs(5)).unwrap();
        let v = race(&q, None, &SolverConfig::all_internal());
        assert_eq!(v.outcome, Outcome::Valid);
    }

    #[test]
    fn uf_sat_is_unknown_not_invalid() {
        // f(0) = 1 is satisfiable for some f and falsifiable for others:
        // with f uninterpreted the engine must answer Unknown.
        let vc = F::eq(Term::FunApp("f".into(), vec![Term::Int(0)]), Term::Int(1));
        let q = emit_smt(&vc, Duration::from_secs(5)).unwrap();
        assert_eq!(q.logic, "UFLIA");
        let v = race(&q, None, &SolverConfig::all_internal());
        assert_eq!(v.outcome, Outcome::Unknown);
    }

    #[test]
    fn skolem_race_solved_by_internal_sygus() {
        // forall a b. a < b -> exists-coefficients: a + b = f(a, b) closes
        // with f = a + b.
        let body = F::implies(
            F::lt(Term::var("a"), Term::var("b")),
            F::eq(
                Term::add(Term::var("a"), Term::var("b")),
                Term::FunApp("f".into(), vec![Term::var("a"), Term::var("b")]),
            ),
        );
        let pvc = Pvc {
            id: "t".into(),
            universals: vec![("a".into(), VarSort::Int), ("b".into(), VarSort::Int)],
            body: body.clone(),
            origin: crate::vcgen::PvcOrigin::Goal,
            origin_path: "t".into(),
            skolem_funs: vec![("f".into(), vec!["a".into(), "b".into()])],
        };
        let fun = SygusFun {
            name: "f".into(),
            formals: vec![("a".into(), VarSort::Int), ("b".into(), VarSort::Int)],
            returns_bool: false,
            grammar: None,
        };
        let sy = emit_sygus(&[pvc.clone()], &[fun], Duration::from_secs(5)).unwrap();
        assert!(sy.text.contains("(synth-fun f ((a Int) (b Int)) Int)"));
        assert!(sy.text.contains("(declare-var a Int)"));
        assert!(sy.text.contains("(constraint"));
        // Race: the direct SMT side sees uninterpreted f (Unknown); the
        // internal SyGuS side finds f(a,b) = a + b.
        let smt = emit_smt(&pvc.closed(), Duration::from_secs(5)).unwrap();
        let v = race(&smt, Some(&sy), &SolverConfig::all_internal());
        assert_eq!(v.outcome, Outcome::Valid);
        assert_eq!(v.winner, Some(Racer::Sygus));
    }

    #[test]
    fn missing_executable_reports_solver_error() {
        let vc = F::True;
        let q = emit_smt(&vc, Duration::from_secs(1)).unwrap();
        let mut cfg = SolverConfig::default();
        cfg.smt = EngineConfig::external("definitely-not-a-solver-binary", &[]);
        let v = race(&q, None, &cfg);
        assert!(matches!(v.outcome, Outcome::SolverError(_)), "{:?}", v.outcome);
    }

    #[test]
    fn config_parses_from_toml() {
        let cfg = SolverConfig::from_toml(
            "vc_timeout_secs = 7\n[smt]\nkind = \"internal\"\n[sygus]\nkind = \"external\"\ncmd = \"cvc5\"\nargs = [\"--lang=sygus2\"]\n",
        )
        .unwrap();
        assert_eq!(cfg.vc_timeout_secs, 7);
        assert_eq!(cfg.smt.kind, EngineKind::Internal);
        assert_eq!(cfg.sygus.cmd, "cvc5");
        assert_eq!(cfg.pool, 4);
    }
}
