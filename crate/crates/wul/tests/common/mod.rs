//! Shared helpers for integration tests: deterministic random benchmark
//! generation and solver-config plumbing.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use wul::gimp::{CompOp, GimpTerm, Rtg, Sort};
use wul::logic::{Formula, Term};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

const VARS: [&str; 2] = ["x", "y"];

fn leaf_int(r: &mut ChaCha8Rng) -> GimpTerm {
    if r.gen_bool(0.5) {
        GimpTerm::IntLit(r.gen_range(0..=3))
    } else {
        GimpTerm::Var(VARS[r.gen_range(0..VARS.len())].to_string())
    }
}

fn gen_term(r: &mut ChaCha8Rng, sort: Sort, depth: u32, nts: &[(String, Sort)]) -> GimpTerm {
    let pick_nt: Vec<&(String, Sort)> = nts.iter().filter(|(_, s)| *s == sort).collect();
    if depth > 0 && !pick_nt.is_empty() && r.gen_bool(0.25) {
        return GimpTerm::nt(&pick_nt[r.gen_range(0..pick_nt.len())].0);
    }
    match sort {
        Sort::IntExpr => {
            if depth == 0 || r.gen_bool(0.5) {
                leaf_int(r)
            } else {
                GimpTerm::plus(
                    gen_term(r, Sort::IntExpr, depth - 1, nts),
                    gen_term(r, Sort::IntExpr, depth - 1, nts),
                )
            }
        }
        Sort::BoolExpr => {
            if depth == 0 || r.gen_bool(0.4) {
                let op = if r.gen_bool(0.5) { CompOp::Lt } else { CompOp::Eq };
                GimpTerm::Comp(op, Box::new(leaf_int(r)), Box::new(leaf_int(r)))
            } else if r.gen_bool(0.4) {
                GimpTerm::Not(Box::new(gen_term(r, Sort::BoolExpr, depth - 1, nts)))
            } else {
                GimpTerm::And(
                    Box::new(gen_term(r, Sort::BoolExpr, depth - 1, nts)),
                    Box::new(gen_term(r, Sort::BoolExpr, depth - 1, nts)),
                )
            }
        }
        Sort::Stmt => {
            let choice = if depth == 0 { 0 } else { r.gen_range(0..4) };
            match choice {
                0 => GimpTerm::assign(
                    VARS[r.gen_range(0..VARS.len())],
                    gen_term(r, Sort::IntExpr, depth.saturating_sub(1), nts),
                ),
                1 => GimpTerm::seq(
                    gen_term(r, Sort::Stmt, depth - 1, nts),
                    gen_term(r, Sort::Stmt, depth - 1, nts),
                ),
                2 => GimpTerm::ite(
                    gen_term(r, Sort::BoolExpr, depth - 1, nts),
                    gen_term(r, Sort::Stmt, depth - 1, nts),
                    gen_term(r, Sort::Stmt, depth - 1, nts),
                ),
                _ => GimpTerm::assign(
                    VARS[r.gen_range(0..VARS.len())],
                    gen_term(r, Sort::IntExpr, depth.saturating_sub(1), nts),
                ),
            }
        }
    }
}

/// Random loop-free grammar: up to 3 nonterminals with up to 3 productions
/// each, sort-correct by construction, possibly (mutually) recursive.
pub fn random_grammar(r: &mut ChaCha8Rng, start_sort: Sort) -> Rtg {
    let names = ["S0", "S1", "S2"];
    let nt_count = r.gen_range(1..=3usize);
    let mut decls: Vec<(String, Sort)> = Vec::new();
    for (i, name) in names.iter().take(nt_count).enumerate() {
        let sort = if i == 0 {
            start_sort
        } else {
            match r.gen_range(0..3) {
                0 => Sort::Stmt,
                1 => Sort::IntExpr,
                _ => Sort::BoolExpr,
            }
        };
        decls.push((name.to_string(), sort));
    }
    loop {
        let mut full = Vec::new();
        for (name, sort) in &decls {
            let n_prods = r.gen_range(1..=3usize);
            let mut prods = Vec::new();
            for _ in 0..n_prods {
                let depth = r.gen_range(1..=2);
                prods.push(gen_term(r, *sort, depth, &decls));
            }
            // Guarantee one reference-free production so the language is
            // nonempty at small depth.
            prods.push(gen_term(r, *sort, 0, &[]));
            full.push((name.clone(), *sort, prods));
        }
        if let Ok(g) = Rtg::new(full, None) {
            return g;
        }
    }
}

fn atom(r: &mut ChaCha8Rng, vars: &[&str]) -> Formula {
    let t1 = if r.gen_bool(0.7) {
        Term::var(vars[r.gen_range(0..vars.len())])
    } else {
        Term::Int(r.gen_range(0..=4))
    };
    let t2 = if r.gen_bool(0.5) {
        Term::Int(r.gen_range(0..=4))
    } else {
        Term::var(vars[r.gen_range(0..vars.len())])
    };
    if r.gen_bool(0.5) {
        Formula::lt(t1, t2)
    } else {
        Formula::eq(t1, t2)
    }
}

pub fn random_condition(r: &mut ChaCha8Rng, vars: &[&str], depth: u32) -> Formula {
    if depth == 0 || r.gen_bool(0.5) {
        return atom(r, vars);
    }
    match r.gen_range(0..3) {
        0 => Formula::and(
            random_condition(r, vars, depth - 1),
            random_condition(r, vars, depth - 1),
        ),
        1 => Formula::or(
            random_condition(r, vars, depth - 1),
            random_condition(r, vars, depth - 1),
        ),
        _ => Formula::not(random_condition(r, vars, depth - 1)),
    }
}

/// A complete random loop-free benchmark in source form.
pub fn random_benchmark_text(r: &mut ChaCha8Rng) -> String {
    let start_sort = if r.gen_bool(0.5) { Sort::Stmt } else { Sort::IntExpr };
    let g = random_grammar(r, start_sort);
    let pre = if r.gen_bool(0.5) {
        Formula::True
    } else {
        random_condition(r, &["x", "y"], 1)
    };
    let post_vars: Vec<&str> = match start_sort {
        Sort::IntExpr => vec!["e_t", "x", "y"],
        _ => vec!["x", "y"],
    };
    // Bias toward weak postconditions so a good share of benchmarks are
    // actually provable.
    let post = if r.gen_bool(0.3) {
        let v = post_vars[r.gen_range(0..post_vars.len())];
        Formula::lt(Term::var(v), Term::Int(100))
    } else {
        random_condition(r, &post_vars, 1)
    };
    let mut text = wul::gimp::print_grammar(&g);
    text.push_str(&format!("(pre {})\n", wul::logic::print_formula(&pre)));
    text.push_str(&format!("(program {})\n", g.start()));
    text.push_str(&format!("(post {})\n", wul::logic::print_formula(&post)));
    text
}

/// Solver config pinned to the built-in engines, written next to the tests.
pub fn internal_config_path(dir: &std::path::Path) -> std::path::PathBuf {
    let path = dir.join("solvers.toml");
    std::fs::write(
        &path,
        "vc_timeout_secs = 10\nrun_timeout_secs = 5\npool = 4\n[smt]\nkind = \"internal\"\n[sygus]\nkind = \"internal\"\n",
    )
    .unwrap();
    path
}
