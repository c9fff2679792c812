//! Acceptance suite: one test per shipped guarantee, each printing a
//! pass/fail line through the harness. Everything runs hermetically with the
//! built-in solver engines (external solvers, when installed, are exercised
//! by `solver_process.rs`).

mod common;

use std::path::Path;
use std::time::Instant;

use wul::bench::parse_benchmark;
use wul::cli::{
    cmd_oracle, cmd_prove, cmd_synth, prove_text, synth_text, OracleFlags, ProveFlags, SynthFlags,
    EXIT_PROVEN, EXIT_UNPROVEN,
};
use wul::gimp::{parse_grammar_text, GimpTerm, ET};
use wul::logic::{alpha_eq, Arg, Formula, Term, VarSort};
use wul::oracle::{
    check_triple, eval_formula, CheckParams, EvalCtx, FuelBudget, State, TripleVerdict, Value,
};
use wul::skeleton::{p_skel, Context, RuleTag};
use wul::solver::SolverConfig;
use wul::synth::{enumerate_candidates, GrammarSpec};
use wul::vcgen::{extract_pvcs, optimize_pvcs, plug_pvcs, Pvc, SummaryAssignment, SummaryDef};

const FIG_WITH_SUMMARY: &str = "\
(nonterm N IntExpr (2) (+ 2 N))
(pre true)
(program N)
(post (not (= e_t 3)))
(summary N (= (mod e_t 2) 0))
";

const FIG_WITH_TEMPLATE: &str = "\
(nonterm N IntExpr (2) (+ 2 N))
(pre true)
(program N)
(post (not (= e_t 3)))
(summary-grammar N (holes (n 2 3 4 5 6 7 8)) (template (= (mod e_t n) 0)))
";

fn qn(args: Vec<Term>) -> Formula {
    Formula::ParamApp("Q_N".into(), args.into_iter().map(Arg::Int).collect())
}

fn write_temp(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

/// Criterion 1: the running example end-to-end. `prove` succeeds with the
/// mod-2 summary; the raw PVC set is exactly the two published formulas and
/// the optimized set exactly the three, up to bound-variable renaming;
/// wall time under 5 seconds.
#[test]
fn criterion_1_running_example_end_to_end() {
    let start = Instant::now();
    let report = prove_text(FIG_WITH_SUMMARY, &ProveFlags::default());
    assert_eq!(report.exit, EXIT_PROVEN, "{}", report.text);

    let bench = parse_benchmark(FIG_WITH_SUMMARY).unwrap();
    let skel = p_skel(
        &bench.grammar,
        None,
        &Context::empty(),
        &bench.pre,
        &bench.program,
        &bench.post,
    )
    .unwrap();
    let raw = extract_pvcs(&skel, &bench.grammar).unwrap();
    assert_eq!(raw.len(), 2, "raw PVC count");
    let want_raw_0 = Formula::implies(
        Formula::True,
        Formula::forall(
            "a",
            VarSort::Int,
            Formula::implies(
                qn(vec![Term::var("a")]),
                Formula::neq(Term::var("a"), Term::Int(3)),
            ),
        ),
    );
    let want_raw_1 = Formula::implies(
        Formula::True,
        Formula::and(
            qn(vec![Term::Int(2)]),
            Formula::forall(
                "a",
                VarSort::Int,
                Formula::implies(
                    qn(vec![Term::var("a")]),
                    qn(vec![Term::add(Term::Int(2), Term::var("a"))]),
                ),
            ),
        ),
    );
    assert!(alpha_eq(&raw[0].body, &want_raw_0), "raw PVC 1: {}", raw[0].render());
    assert!(alpha_eq(&raw[1].body, &want_raw_1), "raw PVC 2: {}", raw[1].render());

    let opt = optimize_pvcs(&raw, None);
    assert_eq!(opt.len(), 3, "optimized PVC count");
    let want_opt: Vec<Formula> = vec![
        Formula::forall(
            "a",
            VarSort::Int,
            Formula::implies(
                Formula::and(Formula::True, qn(vec![Term::var("a")])),
                Formula::neq(Term::var("a"), Term::Int(3)),
            ),
        ),
        Formula::implies(Formula::True, qn(vec![Term::Int(2)])),
        Formula::forall(
            "a",
            VarSort::Int,
            Formula::implies(
                Formula::and(Formula::True, qn(vec![Term::var("a")])),
                qn(vec![Term::add(Term::Int(2), Term::var("a"))]),
            ),
        ),
    ];
    for (got, want) in opt.iter().zip(&want_opt) {
        assert!(alpha_eq(&got.closed(), want), "optimized PVC mismatch: {}", got.render());
    }

    // The CLI surface agrees: --no-optimize --dump-vcs shows two conditions,
    // the default pipeline three.
    let dir = tempfile::tempdir().unwrap();
    let file = write_temp(dir.path(), "fig.ul", FIG_WITH_SUMMARY);
    let unopt = cmd_prove(
        &file,
        &ProveFlags { dump_vcs: true, no_optimize: true, ..Default::default() },
    );
    assert_eq!(unopt.solver_calls, 2, "{}", unopt.text);
    assert_eq!(report.solver_calls, 3);

    assert!(start.elapsed().as_secs() < 5, "criterion 1 exceeded 5 s");
}

/// Criterion 2: the rendered skeleton matches the published rule sequence
/// node for node.
#[test]
fn criterion_2_skeleton_golden() {
    let bench = parse_benchmark(FIG_WITH_SUMMARY).unwrap();
    let skel = p_skel(
        &bench.grammar,
        None,
        &Context::empty(),
        &bench.pre,
        &bench.program,
        &bench.post,
    )
    .unwrap();
    use RuleTag::*;
    assert_eq!(
        skel.root.postorder_tags(),
        vec![Int, Int, ApplyHp, Adapt, Bin, Hp, Weaken, Adapt, Weaken],
        "rule sequence"
    );
    // And the renderer shows one node per line with the same tags.
    let rendered = wul::skeleton::render_skeleton(&skel);
    assert_eq!(rendered.lines().count(), 9);
    for tag in ["Int", "ApplyHP", "Adapt", "Bin-Plus", "HP", "Weaken"] {
        assert!(rendered.contains(tag), "missing {tag} in rendering");
    }
}

/// Criterion 3: whole-cloth synthesis over the mod-n template family
/// recovers n = 2 (re-checked by the verifier) in under 10 seconds.
#[test]
fn criterion_3_whole_cloth_synthesis() {
    let start = Instant::now();
    let report = synth_text(FIG_WITH_TEMPLATE, &SynthFlags::default());
    assert_eq!(report.exit, EXIT_PROVEN, "{}", report.text);
    assert!(
        report.text.contains(":= (= (mod e_t 2) 0)"),
        "expected the mod-2 summary, got:\n{}",
        report.text
    );
    assert!(report.text.contains("result: proven"));
    assert!(start.elapsed().as_secs() < 10, "criterion 3 exceeded 10 s");
}

const EX21_BOUNDED: &str = "\
(nonterm S Stmt (if B A S) A)
(nonterm B BoolExpr (= y K))
(nonterm K IntExpr 0 1)
(nonterm A Stmt (:= x K))
(set-vector-length 3)
(pre (and (= (vref x 1) 0) (= (vref y 1) 0)
          (= (vref x 2) 0) (= (vref y 2) 1)
          (= (vref x 3) 0) (= (vref y 3) 2)))
(program S)
(post (exists (i Idx) (not (= (vref x i) (vref y i)))))
(summary S (forall (i Idx) (or (= (vref x i) 0) (= (vref x i) 1))))
";

/// Criterion 4: the depth-bounded finite-vector surrogate of the
/// nested-conditional benchmark is proven with the provided
/// bounded-constants summary, and the oracle independently confirms the
/// triple at the same depth.
#[test]
fn criterion_4_finite_vector_nested_conditionals() {
    let report = prove_text(EX21_BOUNDED, &ProveFlags::default());
    assert_eq!(report.exit, EXIT_PROVEN, "{}", report.text);

    let bench = parse_benchmark(EX21_BOUNDED).unwrap();
    let params = CheckParams {
        domain: (0, 2),
        fuel: FuelBudget::new(20, 4),
        depth: 4,
        k: bench.k(),
    };
    let verdict = check_triple(
        &bench.pre,
        &bench.grammar,
        &bench.program,
        &bench.post,
        &params,
    )
    .unwrap();
    assert_eq!(verdict, TripleVerdict::Holds);

    // The bounded restriction is essential: with only two examples the same
    // sub-grammar hardcodes the outputs and the triple is false.
    let two = EX21_BOUNDED
        .replace("(set-vector-length 3)", "(set-vector-length 2)")
        .replace("\n          (= (vref x 3) 0) (= (vref y 3) 2)", "");
    let bench2 = parse_benchmark(&two).unwrap();
    let params2 = CheckParams {
        domain: (0, 2),
        fuel: FuelBudget::new(20, 4),
        depth: 4,
        k: bench2.k(),
    };
    let v2 = check_triple(&bench2.pre, &bench2.grammar, &bench2.program, &bench2.post, &params2)
        .unwrap();
    assert!(matches!(v2, TripleVerdict::Counterexample { .. }));
    let r2 = prove_text(&two, &ProveFlags::default());
    assert_eq!(r2.exit, EXIT_UNPROVEN, "unsound: proved a false triple\n{}", r2.text);
}

/// Criterion 5: soundness at desk scale. 200 seeded random loop-free
/// benchmarks; whenever the pipeline reports proven, the brute-force oracle
/// must agree. Zero violations tolerated.
#[test]
fn criterion_5_soundness_property_suite() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = common::internal_config_path(dir.path());
    let mut r = common::rng(0x5eed5);
    let mut proven = 0usize;
    let mut violations = Vec::new();
    for case in 0..200usize {
        let mut text = common::random_benchmark_text(&mut r);
        // Small search space for every summary parameter.
        for nt in ["S0", "S1", "S2"] {
            if text.contains(&format!("(nonterm {nt} ")) {
                text.push_str(&format!("(summary-grammar {nt} unconstrained 3)\n"));
            }
        }
        let flags = SynthFlags {
            unconstrained: true,
            solver_config: Some(cfg_path.clone()),
            ..Default::default()
        };
        let report = synth_text(&text, &flags);
        if report.exit != EXIT_PROVEN {
            continue;
        }
        proven += 1;
        let bench = parse_benchmark(&text).unwrap();
        let params = CheckParams {
            domain: (0, 3),
            fuel: FuelBudget::new(10, 4),
            depth: 4,
            k: None,
        };
        match check_triple(&bench.pre, &bench.grammar, &bench.program, &bench.post, &params) {
            Ok(TripleVerdict::Holds) => {}
            Ok(TripleVerdict::Counterexample { program, state }) => {
                violations.push(format!(
                    "case {case}: proved but oracle found {program} on {}\n{text}",
                    wul::oracle::show_state(&state)
                ));
            }
            Err(e) => violations.push(format!("case {case}: oracle error {e}\n{text}")),
        }
    }
    assert!(violations.is_empty(), "soundness violations:\n{}", violations.join("\n"));
    assert!(proven >= 30, "only {proven}/200 benchmarks proven; generator too hostile");
}

fn finite_domain_valid(pvc: &Pvc, a: &SummaryAssignment, domain: (i64, i64)) -> bool {
    let plugged = match plug_pvcs(std::slice::from_ref(pvc), a, None) {
        Ok(mut v) => v.pop().unwrap(),
        Err(_) => return false,
    };
    let ctx = EvalCtx { k: None, int_domain: Some(domain), funs: None };
    eval_formula(&plugged.closed(), &State::new(), &ctx).unwrap_or(false)
}

/// Criterion 6: optimization conservativity. For 50 random PVC sets, an
/// exhaustive bounded summary search over a finite domain finds a satisfying
/// assignment for the optimized set iff it finds one for the original set.
#[test]
fn criterion_6_optimization_conservativity() {
    let mut r = common::rng(0x6006);
    let domain = (0, 3);
    let mut compared = 0usize;
    let mut discrepancies = Vec::new();
    while compared < 50 {
        let text = common::random_benchmark_text(&mut r);
        let bench = match parse_benchmark(&text) {
            Ok(b) => b,
            Err(_) => continue,
        };
        let skel = match p_skel(
            &bench.grammar,
            None,
            &Context::empty(),
            &bench.pre,
            &bench.program,
            &bench.post,
        ) {
            Ok(s) => s,
            Err(_) => continue,
        };
        if skel.params.len() > 2 {
            continue;
        }
        let raw = extract_pvcs(&skel, &bench.grammar).unwrap();
        let opt = optimize_pvcs(&raw, None);
        // Exhaustive bounded search over a tiny quantifier-free grammar.
        let mut pools = Vec::new();
        for sig in skel.params.values() {
            let cands = enumerate_candidates(
                &GrammarSpec::Unconstrained { size_bound: 3 },
                &sig.formals,
                3,
            )
            .unwrap();
            pools.push((sig.name.clone(), sig.formals.clone(), cands));
        }
        if pools.iter().map(|(_, _, c)| c.len()).product::<usize>() > 1000 {
            continue;
        }
        let assignments = {
            let mut all = vec![SummaryAssignment::default()];
            for (name, formals, cands) in &pools {
                let mut next = Vec::new();
                for base in &all {
                    for c in cands {
                        let mut a = base.clone();
                        a.params.insert(
                            name.clone(),
                            SummaryDef { formals: formals.clone(), body: c.clone() },
                        );
                        next.push(a);
                    }
                }
                all = next;
            }
            all
        };
        let sat =
            |pvcs: &[Pvc]| assignments.iter().any(|a| pvcs.iter().all(|p| finite_domain_valid(p, a, domain)));
        let orig_sat = sat(&raw);
        let opt_sat = sat(&opt);
        if orig_sat != opt_sat {
            discrepancies
                .push(format!("original={orig_sat} optimized={opt_sat} for\n{text}"));
        }
        compared += 1;
    }
    assert!(discrepancies.is_empty(), "{}", discrepancies.join("\n---\n"));
}

/// Criterion 7: summary reuse. Twenty program templates over the shared
/// recursive nonterminal; with a pre-proven stored summary, context mode and
/// no-context mode agree on every verdict and context mode performs strictly
/// fewer solver calls on every template.
#[test]
fn criterion_7_summary_reuse() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("summaries.store");
    // Pre-prove the summary of N and persist it.
    let seed = write_temp(dir.path(), "seed.ul", FIG_WITH_TEMPLATE);
    let seeded = cmd_synth(
        &seed,
        &SynthFlags { save_ctx: Some(store.clone()), ..Default::default() },
    );
    assert_eq!(seeded.exit, EXIT_PROVEN, "{}", seeded.text);
    assert!(store.exists());

    for t in 0..20 {
        let mut program = String::from("N");
        for _ in 0..t {
            program = format!("(+ 2 {program})");
        }
        let body = format!(
            "(nonterm N IntExpr (2) (+ 2 N))\n(pre true)\n(program {program})\n(post (not (= e_t 3)))\n(summary N (= (mod e_t 2) 0))\n",
        );
        let file = write_temp(dir.path(), &format!("template{t}.ul"), &body);
        let no_ctx = cmd_prove(&file, &ProveFlags { no_ctx: true, ..Default::default() });
        let ctx = cmd_prove(&file, &ProveFlags { ctx: Some(store.clone()), ..Default::default() });
        assert_eq!(no_ctx.exit, ctx.exit, "verdicts disagree on template {t}");
        assert_eq!(ctx.exit, EXIT_PROVEN, "template {t} unproven:\n{}", ctx.text);
        assert!(
            ctx.solver_calls < no_ctx.solver_calls,
            "template {t}: ctx={} vs no_ctx={} solver calls",
            ctx.solver_calls,
            no_ctx.solver_calls
        );
    }
}

/// Criterion 8: the branching transformation reproduces the published
/// four-case formula verbatim up to renaming, and is oracle-equivalent to
/// the untransformed predicate under an all-false guard snapshot over the
/// domain {0..3}^2.
#[test]
fn criterion_8_t_transformation() {
    use wul::logic::{t_transform, YMap};
    let q = Formula::eq(Term::elem("x", Term::Int(1)), Term::elem("x", Term::Int(2)));
    let mut ys = YMap::new();
    ys.insert("x".into(), "x_y".into());
    let tq = t_transform(&q, "b_loop", &ys).unwrap();
    let b = |j: i64| Formula::bool_elem("b_loop", Term::Int(j));
    let x = |j: i64| Term::elem("x", Term::Int(j));
    let y = |j: i64| Term::elem("x_y", Term::Int(j));
    let want = Formula::conj(vec![
        Formula::implies(Formula::and(b(1), b(2)), Formula::eq(y(1), y(2))),
        Formula::implies(Formula::and(b(1), Formula::not(b(2))), Formula::eq(y(1), x(2))),
        Formula::implies(Formula::and(Formula::not(b(1)), b(2)), Formula::eq(x(1), y(2))),
        Formula::implies(
            Formula::and(Formula::not(b(1)), Formula::not(b(2))),
            Formula::eq(x(1), x(2)),
        ),
    ]);
    assert!(alpha_eq(&tq, &want), "got {}", wul::logic::print_formula(&tq));

    // Oracle equivalence under all-false (identity) and all-true (rename).
    let ctx = EvalCtx::vectored(2, (0, 3));
    for x1 in 0..=3i64 {
        for x2 in 0..=3i64 {
            for y1 in 0..=3i64 {
                for y2 in 0..=3i64 {
                    let mut st = State::new();
                    st.insert("x".into(), Value::VecInt(vec![x1, x2]));
                    st.insert("x_y".into(), Value::VecInt(vec![y1, y2]));
                    st.insert("b_loop".into(), Value::VecBool(vec![false, false]));
                    let lhs = eval_formula(&tq, &st, &ctx).unwrap();
                    let rhs = eval_formula(&q, &st, &ctx).unwrap();
                    assert_eq!(lhs, rhs, "all-false disagreement at {st:?}");
                    st.insert("b_loop".into(), Value::VecBool(vec![true, true]));
                    let lhs = eval_formula(&tq, &st, &ctx).unwrap();
                    let renamed = Formula::eq(
                        Term::elem("x_y", Term::Int(1)),
                        Term::elem("x_y", Term::Int(2)),
                    );
                    let rhs = eval_formula(&renamed, &st, &ctx).unwrap();
                    assert_eq!(lhs, rhs, "all-true disagreement at {st:?}");
                }
            }
        }
    }
}

/// Criterion 9: negative control. The target e_t != 4 admits no summary in
/// the mod-n template family, and the oracle certifies the counterexample
/// program 2 + 2.
#[test]
fn criterion_9_negative_control() {
    let text = FIG_WITH_TEMPLATE.replace("(= e_t 3)", "(= e_t 4)");
    let report = synth_text(&text, &SynthFlags::default());
    assert_eq!(report.exit, EXIT_UNPROVEN, "{}", report.text);
    assert!(report.text.contains("no assignment found"), "{}", report.text);

    let dir = tempfile::tempdir().unwrap();
    let file = write_temp(dir.path(), "neg.ul", &text);
    let oracle = cmd_oracle(&file, &OracleFlags { depth: 5, domain: (0, 3), fuel: 20 });
    assert_eq!(oracle.exit, EXIT_UNPROVEN);
    assert!(
        oracle.text.contains("Counterexample(program: (+ 2 2)"),
        "{}",
        oracle.text
    );
}

/// The default solver configuration names the standard external solvers;
/// this environment substitutes the built-in engine automatically.
#[test]
fn default_config_posture() {
    let cfg = SolverConfig::default();
    assert_eq!(cfg.smt.describe(), "z3");
    assert_eq!(cfg.sygus.describe(), "cvc5");
    assert_eq!(cfg.vc_timeout_secs, 30);
    assert_eq!(cfg.run_timeout_secs, 300);
    let _ = SolverConfig::best_available();
    let _ = parse_grammar_text("(nonterm N IntExpr 2)").unwrap();
    let _ = GimpTerm::nt("N");
    let _ = ET;
}
