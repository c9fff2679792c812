//! Command implementations behind the `prove`, `synth`, and `oracle`
//! subcommands. Each returns a report and a frozen exit status: 0 proven /
//! holds, 1 unproven / counterexample / nothing found, 2 error.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use indexmap::{IndexMap, IndexSet};

use crate::bench::{parse_benchmark, Benchmark};
use crate::logic::{Formula, Subst, Term, VarSort};
use crate::oracle::{check_triple, CheckParams, FuelBudget, TripleVerdict};
use crate::skeleton::{
    check_syntactic, render_skeleton, Context, ParamKind, ParameterSig, Skeleton, SkeletonBuilder,
};
use crate::solver::{emit_smt, emit_sygus, race, Outcome, Racer, SolverConfig, SygusFun};
use crate::store::{now_epoch_secs, ProofStatus, StoreEntry, SummaryStore};
use crate::synth::{
    ground_pvc, synthesize, synthesize_staged, GrammarSpec, SynthProblem, SynthResult, SynthStats,
};
use crate::vcgen::{
    extract_pvcs, optimize_pvcs, plug_pvcs, skolemize_all, Pvc, SummaryAssignment, SummaryDef,
};

pub const EXIT_PROVEN: i32 = 0;
pub const EXIT_UNPROVEN: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

#[derive(Debug, Clone, Default)]
pub struct ProveFlags {
    pub skeleton: bool,
    pub dump_vcs: bool,
    pub skolemize: bool,
    pub no_optimize: bool,
    pub ctx: Option<PathBuf>,
    pub no_ctx: bool,
    pub timeout: Option<u64>,
    pub solver_config: Option<PathBuf>,
}

#[derive(Debug, Clone, Default)]
pub struct SynthFlags {
    pub unconstrained: bool,
    pub save_ctx: Option<PathBuf>,
    pub staged: bool,
    pub skolemize: bool,
    pub no_optimize: bool,
    pub dump_vcs: bool,
    pub timeout: Option<u64>,
    pub solver_config: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct OracleFlags {
    pub depth: u32,
    pub domain: (i64, i64),
    pub fuel: u32,
}

#[derive(Debug)]
pub struct Report {
    pub exit: i32,
    pub text: String,
    pub solver_calls: usize,
}

fn error_report(msg: impl std::fmt::Display) -> Report {
    Report { exit: EXIT_ERROR, text: format!("error: {msg}\n"), solver_calls: 0 }
}

fn load_config(
    path: &Option<PathBuf>,
    timeout: &Option<u64>,
) -> Result<SolverConfig, Report> {
    let mut cfg = match path {
        Some(p) => SolverConfig::load(p).map_err(error_report)?,
        None => SolverConfig::best_available(),
    };
    if let Some(t) = timeout {
        cfg.vc_timeout_secs = *t;
    }
    Ok(cfg)
}

/// Everything the prove/synth pipelines share: the skeleton (with context
/// preloads applied), its PVCs after the requested transformations, and the
/// assignment sources.
struct Pipeline {
    bench: Benchmark,
    skeleton: Skeleton,
    pvcs: Vec<Pvc>,
    /// Store-backed summaries adopted into the context (param name -> def).
    preloaded: IndexMap<String, SummaryDef>,
    store_hits: Vec<String>,
}

fn build_pipeline(
    file: &Path,
    ctx_store: Option<&SummaryStore>,
    no_optimize: bool,
    skolemize: bool,
) -> Result<Pipeline, Report> {
    let text = std::fs::read_to_string(file).map_err(error_report)?;
    let bench = parse_benchmark(&text).map_err(error_report)?;
    let taken = crate::skeleton::taken_names(
        &bench.grammar,
        &bench.program,
        &[&bench.pre, &bench.post],
    );
    let mut builder = SkeletonBuilder::new(&bench.grammar, bench.env.as_ref(), taken);
    let mut ctx0 = Context::empty();
    let mut preloaded = IndexMap::new();
    let mut store_hits = Vec::new();
    if let Some(store) = ctx_store {
        let mut refs = IndexSet::new();
        bench.program.nonterminal_refs(&mut refs);
        let mut all = IndexSet::new();
        for n in refs {
            all.insert(n.clone());
            for m in bench.grammar.reachable(&n).map_err(error_report)? {
                all.insert(m);
            }
        }
        for n in all {
            if !bench.grammar.is_recursive(&n).map_err(error_report)? {
                continue;
            }
            let fp = bench.grammar.fingerprint(&n).map_err(error_report)?;
            let Some(entry) = store.lookup(&fp) else { continue };
            let (pname, triple) = builder.preload_summary(&n).map_err(error_report)?;
            let sig = builder.params()[&pname].clone();
            match rebase_store_entry(entry, &sig) {
                Some(def) => {
                    preloaded.insert(pname, def);
                    store_hits.push(n.clone());
                    ctx0.push(triple);
                }
                None => {
                    // Formal shapes differ; treat as a miss.
                }
            }
        }
    }
    let root = builder
        .p_skel(&ctx0, &bench.pre, &bench.program.clone(), &bench.post)
        .map_err(error_report)?;
    let skeleton = Skeleton {
        root,
        params: builder.into_params(),
        env: bench.env.clone(),
    };
    let violations = check_syntactic(&skeleton, &bench.grammar);
    if !violations.is_empty() {
        let msg =
            violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("\n");
        return Err(error_report(format!("internal skeleton violation:\n{msg}")));
    }
    let mut pvcs = extract_pvcs(&skeleton, &bench.grammar).map_err(error_report)?;
    if !no_optimize {
        pvcs = optimize_pvcs(&pvcs, bench.k());
    }
    if skolemize {
        let taken: IndexSet<String> = skeleton.params.keys().cloned().collect();
        pvcs = skolemize_all(&pvcs, taken);
    }
    Ok(Pipeline { bench, skeleton, pvcs, preloaded, store_hits })
}

/// Rebase a stored summary body onto the current parameter's formal names.
fn rebase_store_entry(entry: &StoreEntry, sig: &ParameterSig) -> Option<SummaryDef> {
    if entry.formals.len() != sig.formals.len() {
        return None;
    }
    let mut body = entry.summary.clone();
    for ((from, fs), (to, ts)) in entry.formals.iter().zip(&sig.formals) {
        if fs != ts {
            return None;
        }
        if from == to {
            continue;
        }
        let s = match fs {
            VarSort::Int | VarSort::Idx => Subst::IntVar(from.clone(), Term::var(to)),
            VarSort::Bool => Subst::BoolVar(from.clone(), Formula::BoolVar(to.clone())),
            VarSort::VecInt => Subst::vec_rename_int(from, to),
            VarSort::VecBool => Subst::vec_rename_bool(from, to),
        };
        body = crate::logic::substitute(&body, &s);
    }
    Some(SummaryDef { formals: sig.formals.clone(), body })
}

/// Collect the full assignment for prove: preloaded store summaries, then
/// file-provided summaries and invariants.
fn assignment_from_sources(
    pipeline: &Pipeline,
) -> Result<SummaryAssignment, Vec<String>> {
    let mut assignment = SummaryAssignment::default();
    let mut missing = Vec::new();
    for sig in pipeline.skeleton.params.values() {
        if let Some(def) = pipeline.preloaded.get(&sig.name) {
            assignment.params.insert(sig.name.clone(), def.clone());
            continue;
        }
        let provided = match sig.kind {
            ParamKind::Summary => pipeline.bench.summaries.get(&sig.site),
            ParamKind::Invariant => pipeline.bench.invariants.get(&sig.name),
        };
        match provided {
            Some(body) => {
                assignment.params.insert(
                    sig.name.clone(),
                    SummaryDef { formals: sig.formals.clone(), body: body.clone() },
                );
            }
            None => missing.push(format!("{} (site {})", sig.name, sig.site)),
        }
    }
    if missing.is_empty() {
        Ok(assignment)
    } else {
        Err(missing)
    }
}

fn outcome_label(o: &Outcome) -> String {
    match o {
        Outcome::Valid => "Valid".to_string(),
        Outcome::Invalid(model) if model.is_empty() => "Invalid".to_string(),
        Outcome::Invalid(model) => format!("Invalid [{model}]"),
        Outcome::Unknown => "Unknown".to_string(),
        Outcome::Timeout => "Timeout".to_string(),
        Outcome::SolverError(e) => format!("SolverError ({e})"),
    }
}

/// Discharge plugged, grounded VCs concurrently (bounded by the pool size);
/// the verdict list preserves PVC id order.
fn discharge_all(
    pvcs: &[Pvc],
    k: Option<usize>,
    cfg: &SolverConfig,
) -> Result<Vec<(String, Outcome, std::time::Duration, Option<Racer>)>, Report> {
    let grounded: Vec<Pvc> = pvcs
        .iter()
        .map(|p| ground_pvc(p, k).map_err(error_report))
        .collect::<Result<_, _>>()?;
    let results: Vec<std::sync::Mutex<Option<(String, Outcome, std::time::Duration, Option<Racer>)>>> =
        grounded.iter().map(|_| std::sync::Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = cfg.pool.max(1).min(grounded.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= grounded.len() {
                    break;
                }
                let p = &grounded[i];
                let outcome = (|| {
                    let smt = emit_smt(&p.closed(), cfg.vc_timeout())
                        .map_err(|e| Outcome::SolverError(e.to_string()))?;
                    let sygus = if p.skolem_funs.is_empty() {
                        None
                    } else {
                        let funs: Vec<SygusFun> = p
                            .skolem_funs
                            .iter()
                            .map(|(name, inputs)| SygusFun {
                                name: name.clone(),
                                formals: inputs
                                    .iter()
                                    .map(|v| (v.clone(), VarSort::Int))
                                    .collect(),
                                returns_bool: false,
                                grammar: None,
                            })
                            .collect();
                        Some(
                            emit_sygus(std::slice::from_ref(p), &funs, cfg.vc_timeout())
                                .map_err(|e| Outcome::SolverError(e.to_string()))?,
                        )
                    };
                    let v = race(&smt, sygus.as_ref(), cfg);
                    Ok::<_, Outcome>((v.outcome, v.wall, v.winner))
                })();
                let (outcome, wall, winner) = match outcome {
                    Ok(t) => t,
                    Err(e) => (e, std::time::Duration::ZERO, None),
                };
                *results[i].lock().unwrap() = Some((p.id.clone(), outcome, wall, winner));
            });
        }
    });
    Ok(results
        .into_iter()
        .map(|m| m.into_inner().unwrap().expect("worker filled every slot"))
        .collect())
}

pub fn cmd_prove(file: &Path, flags: &ProveFlags) -> Report {
    let start = Instant::now();
    let cfg = match load_config(&flags.solver_config, &flags.timeout) {
        Ok(c) => c,
        Err(r) => return r,
    };
    if flags.ctx.is_some() && flags.no_ctx {
        return error_report("--ctx and --no-ctx are mutually exclusive");
    }
    let store = match &flags.ctx {
        Some(path) => match SummaryStore::load(path) {
            Ok(s) => Some(s),
            Err(e) => return error_report(e),
        },
        None => None,
    };
    let pipeline =
        match build_pipeline(file, store.as_ref(), flags.no_optimize, flags.skolemize) {
            Ok(p) => p,
            Err(r) => return r,
        };
    let mut text = String::new();
    if !pipeline.store_hits.is_empty() {
        let _ = writeln!(
            text,
            "context: assumed pre-proven summaries for {}",
            pipeline.store_hits.join(", ")
        );
    }
    if flags.skeleton {
        text.push_str(&render_skeleton(&pipeline.skeleton));
        return Report { exit: EXIT_PROVEN, text, solver_calls: 0 };
    }
    if flags.dump_vcs {
        for p in &pipeline.pvcs {
            let _ = writeln!(text, "{}", p.render());
        }
    }
    let assignment = match assignment_from_sources(&pipeline) {
        Ok(a) => a,
        Err(missing) => {
            return error_report(format!(
                "missing summaries/invariants for: {} (provide them or run `synth`)",
                missing.join(", ")
            ))
        }
    };
    let plugged = match plug_pvcs(&pipeline.pvcs, &assignment, pipeline.bench.k()) {
        Ok(p) => p,
        Err(e) => return error_report(e),
    };
    let verdicts = match discharge_all(&plugged, pipeline.bench.k(), &cfg) {
        Ok(v) => v,
        Err(r) => return r,
    };
    let mut all_valid = true;
    for (id, outcome, wall, winner) in &verdicts {
        let who = match winner {
            Some(Racer::Smt) => cfg.smt.describe(),
            Some(Racer::Sygus) => format!("sygus:{}", cfg.sygus.describe()),
            None => "-".to_string(),
        };
        let _ = writeln!(
            text,
            "vc {id}: {} ({} ms, {who})",
            outcome_label(outcome),
            wall.as_millis()
        );
        if *outcome != Outcome::Valid {
            all_valid = false;
        }
    }
    let _ = writeln!(text, "solver calls: {}", verdicts.len());
    let _ = writeln!(
        text,
        "result: {} ({} ms total)",
        if all_valid { "proven" } else { "unproven" },
        start.elapsed().as_millis()
    );
    Report {
        exit: if all_valid { EXIT_PROVEN } else { EXIT_UNPROVEN },
        text,
        solver_calls: verdicts.len(),
    }
}

pub fn cmd_synth(file: &Path, flags: &SynthFlags) -> Report {
    let start = Instant::now();
    let cfg = match load_config(&flags.solver_config, &flags.timeout) {
        Ok(c) => c,
        Err(r) => return r,
    };
    let pipeline = match build_pipeline(file, None, flags.no_optimize, flags.skolemize) {
        Ok(p) => p,
        Err(r) => return r,
    };
    let mut text = String::new();
    if flags.dump_vcs {
        for p in &pipeline.pvcs {
            let _ = writeln!(text, "{}", p.render());
        }
    }
    // Fixed assignments from the file; the rest are synthesis targets.
    let mut fixed = SummaryAssignment::default();
    let mut targets: Vec<ParameterSig> = Vec::new();
    let mut grammars: IndexMap<String, GrammarSpec> = IndexMap::new();
    for sig in pipeline.skeleton.params.values() {
        let provided = match sig.kind {
            ParamKind::Summary => pipeline.bench.summaries.get(&sig.site),
            ParamKind::Invariant => pipeline.bench.invariants.get(&sig.name),
        };
        if let Some(body) = provided {
            fixed.params.insert(
                sig.name.clone(),
                SummaryDef { formals: sig.formals.clone(), body: body.clone() },
            );
            continue;
        }
        let grammar = pipeline
            .bench
            .template_grammars
            .get(&sig.site)
            .or_else(|| pipeline.bench.template_grammars.get(&sig.name))
            .cloned();
        match grammar {
            Some(g) => {
                grammars.insert(sig.name.clone(), g);
            }
            None if flags.unconstrained => {
                grammars.insert(
                    sig.name.clone(),
                    GrammarSpec::Unconstrained {
                        size_bound: crate::synth::UNCONSTRAINED_DEFAULT_SIZE,
                    },
                );
            }
            None => {
                return error_report(format!(
                    "no template grammar for parameter `{}` (site {}); add (summary-grammar ...) or pass --unconstrained",
                    sig.name, sig.site
                ))
            }
        }
        targets.push(sig.clone());
    }
    let problem = SynthProblem {
        pvcs: &pipeline.pvcs,
        params: targets.clone(),
        grammars,
        k: pipeline.bench.k(),
        fixed,
    };
    let mut stats = SynthStats::default();
    let result = if flags.staged {
        synthesize_staged(&problem, &cfg, &mut stats)
    } else {
        synthesize(&problem, &cfg, &mut stats)
    };
    let assignment = match result {
        Ok(SynthResult::Found(a)) => a,
        Ok(SynthResult::NoneFound) => {
            let _ = writeln!(
                text,
                "no assignment found within budget ({} candidates tried, {} solver calls)",
                stats.candidates_tried, stats.solver_calls
            );
            return Report { exit: EXIT_UNPROVEN, text, solver_calls: stats.solver_calls };
        }
        Err(e) => return error_report(e),
    };
    for sig in pipeline.skeleton.params.values() {
        if let Some(def) = assignment.params.get(&sig.name) {
            let formals = def
                .formals
                .iter()
                .map(|(v, _)| v.clone())
                .collect::<Vec<_>>()
                .join(", ");
            let _ = writeln!(
                text,
                "{}({formals}) := {}",
                sig.name,
                crate::logic::print_formula(&def.body)
            );
        }
    }
    // Re-verify the returned assignment end to end and report per-VC.
    let plugged = match plug_pvcs(&pipeline.pvcs, &assignment, pipeline.bench.k()) {
        Ok(p) => p,
        Err(e) => return error_report(e),
    };
    let verdicts = match discharge_all(&plugged, pipeline.bench.k(), &cfg) {
        Ok(v) => v,
        Err(r) => return r,
    };
    let mut all_valid = true;
    for (id, outcome, wall, _) in &verdicts {
        let _ = writeln!(text, "vc {id}: {} ({} ms)", outcome_label(outcome), wall.as_millis());
        if *outcome != Outcome::Valid {
            all_valid = false;
        }
    }
    let solver_calls = stats.solver_calls + verdicts.len();
    let _ = writeln!(text, "solver calls: {solver_calls}");
    if all_valid {
        if let Some(store_path) = &flags.save_ctx {
            let mut store = match SummaryStore::load(store_path) {
                Ok(s) => s,
                Err(e) => return error_report(e),
            };
            for sig in pipeline.skeleton.params.values() {
                if sig.kind != ParamKind::Summary {
                    continue;
                }
                let Some(def) = assignment.params.get(&sig.name) else { continue };
                let fp = match pipeline.bench.grammar.fingerprint(&sig.site) {
                    Ok(fp) => fp,
                    Err(e) => return error_report(e),
                };
                store.insert(StoreEntry {
                    fingerprint: fp,
                    nonterminal: sig.site.clone(),
                    status: ProofStatus::Proven,
                    timestamp: now_epoch_secs(),
                    formals: def.formals.clone(),
                    summary: def.body.clone(),
                });
            }
            if let Err(e) = store.save(store_path) {
                return error_report(e);
            }
            let _ = writeln!(text, "saved proven summaries to {}", store_path.display());
        }
    }
    let _ = writeln!(
        text,
        "result: {} ({} ms total)",
        if all_valid { "proven" } else { "unproven" },
        start.elapsed().as_millis()
    );
    Report {
        exit: if all_valid { EXIT_PROVEN } else { EXIT_UNPROVEN },
        text,
        solver_calls,
    }
}

pub fn cmd_oracle(file: &Path, flags: &OracleFlags) -> Report {
    let text = match std::fs::read_to_string(file) {
        Ok(t) => t,
        Err(e) => return error_report(e),
    };
    let bench = match parse_benchmark(&text) {
        Ok(b) => b,
        Err(e) => return error_report(e),
    };
    let params = CheckParams {
        domain: flags.domain,
        fuel: FuelBudget::new(flags.fuel.max(1), flags.depth.max(1)),
        depth: flags.depth,
        k: bench.k(),
    };
    match check_triple(&bench.pre, &bench.grammar, &bench.program, &bench.post, &params) {
        Ok(TripleVerdict::Holds) => Report {
            exit: EXIT_PROVEN,
            text: "Holds\n".to_string(),
            solver_calls: 0,
        },
        Ok(TripleVerdict::Counterexample { program, state }) => Report {
            exit: EXIT_UNPROVEN,
            text: format!(
                "Counterexample(program: {program}, state: {})\n",
                crate::oracle::show_state(&state)
            ),
            solver_calls: 0,
        },
        Err(e) => error_report(e),
    }
}

/// Parse "LO..HI" into an inclusive integer range.
pub fn parse_domain(s: &str) -> Result<(i64, i64), String> {
    let (lo, hi) = s
        .split_once("..")
        .ok_or_else(|| format!("bad domain `{s}` (expected LO..HI)"))?;
    let lo = lo.trim().parse::<i64>().map_err(|e| e.to_string())?;
    let hi = hi.trim().parse::<i64>().map_err(|e| e.to_string())?;
    if lo > hi {
        return Err(format!("empty domain `{s}`"));
    }
    Ok((lo, hi))
}

/// Count Weaken applications whose obligations define the summary of a given
/// nonterminal; used by reuse experiments and reporting.
pub fn summary_def_vc_count(pvcs: &[Pvc], nonterminal: &str) -> usize {
    pvcs.iter()
        .filter(|p| {
            matches!(&p.origin, crate::vcgen::PvcOrigin::SummaryDef(n) if n == nonterminal)
        })
        .count()
}

/// Shared helper for tests: full prove pipeline on in-memory text.
pub fn prove_text(text: &str, flags: &ProveFlags) -> Report {
    let dir = match tempfile::tempdir() {
        Ok(d) => d,
        Err(e) => return error_report(e),
    };
    let path = dir.path().join("bench.ul");
    if let Err(e) = std::fs::write(&path, text) {
        return error_report(e);
    }
    cmd_prove(&path, flags)
}

pub fn synth_text(text: &str, flags: &SynthFlags) -> Report {
    let dir = match tempfile::tempdir() {
        Ok(d) => d,
        Err(e) => return error_report(e),
    };
    let path = dir.path().join("bench.ul");
    if let Err(e) = std::fs::write(&path, text) {
        return error_report(e);
    }
    cmd_synth(&path, flags)
}
