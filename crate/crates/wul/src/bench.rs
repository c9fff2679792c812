//! Benchmark files: an s-expression format holding the grammar, the triple,
//! optional vector length, provided summaries/invariants, and per-parameter
//! template grammars. Input-output example lists desugar into a vector-state
//! triple.

use indexmap::{IndexMap, IndexSet};
use thiserror::Error;

use crate::gimp::{self, GimpTerm, GrammarError, Rtg, BT, ET};
use crate::logic::{
    parse_formula_sexp, parse_term_sexp, Formula, FormulaScope, LogicError, Term, VarSort,
    VectorEnv,
};
use crate::sexp::{self, Sexp};
use crate::synth::{GrammarSpec, Hole, TemplateGrammar, UNCONSTRAINED_DEFAULT_SIZE};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{0}")]
    Sexp(#[from] sexp::SexpError),
    #[error(transparent)]
    Grammar(#[from] GrammarError),
    #[error(transparent)]
    Logic(#[from] LogicError),
    #[error("{pos}: {msg}")]
    Malformed { pos: sexp::Pos, msg: String },
    #[error("benchmark is missing a (post ...) form")]
    MissingPost,
    #[error("benchmark has no grammar")]
    MissingGrammar,
}

fn bad(pos: sexp::Pos, msg: impl Into<String>) -> BenchError {
    BenchError::Malformed { pos, msg: msg.into() }
}

#[derive(Debug, Clone)]
pub struct Benchmark {
    pub grammar: Rtg,
    pub env: Option<VectorEnv>,
    pub pre: Formula,
    pub program: GimpTerm,
    pub post: Formula,
    /// Provided summaries, keyed by nonterminal name; bodies are over the
    /// nonterminal's profile formals.
    pub summaries: IndexMap<String, Formula>,
    /// Provided loop invariants, keyed by invariant parameter name (I1, ...).
    pub invariants: IndexMap<String, Formula>,
    /// Template grammars, keyed by nonterminal name (summaries) or invariant
    /// parameter name.
    pub template_grammars: IndexMap<String, GrammarSpec>,
}

impl Benchmark {
    pub fn k(&self) -> Option<usize> {
        self.env.as_ref().map(|e| e.k)
    }
}

/// Parse `(summary-grammar NAME ...)` bodies: either `unconstrained [SIZE]`
/// or `(holes (h c...)...) (template F)`.
fn parse_grammar_spec(
    items: &[Sexp],
    pos: sexp::Pos,
    scope: &FormulaScope,
) -> Result<GrammarSpec, BenchError> {
    if items.len() == 1 || (items.len() == 2 && items[0].atom() == Some("unconstrained")) {
        if items[0].atom() == Some("unconstrained") {
            let size = if items.len() == 2 {
                items[1]
                    .int()
                    .ok_or_else(|| bad(pos, "unconstrained size must be an integer"))?
                    as usize
            } else {
                UNCONSTRAINED_DEFAULT_SIZE
            };
            return Ok(GrammarSpec::Unconstrained { size_bound: size });
        }
    }
    let mut holes = Vec::new();
    let mut template = None;
    for item in items {
        let sub = item
            .list()
            .ok_or_else(|| bad(item.pos(), "expected (holes ...) or (template ...)"))?;
        match sub.first().and_then(|h| h.atom()) {
            Some("holes") => {
                for h in &sub[1..] {
                    let pair = h.list().ok_or_else(|| bad(h.pos(), "expected (name c...)"))?;
                    let name = pair
                        .first()
                        .and_then(|x| x.atom())
                        .ok_or_else(|| bad(h.pos(), "hole name"))?
                        .to_string();
                    let choices = pair[1..]
                        .iter()
                        .map(|c| c.int().ok_or_else(|| bad(c.pos(), "hole choices are integers")))
                        .collect::<Result<Vec<_>, _>>()?;
                    holes.push(Hole { name, choices });
                }
            }
            Some("template") => {
                if sub.len() != 2 {
                    return Err(bad(item.pos(), "(template FORMULA)"));
                }
                let mut tscope = scope.clone();
                // Holes may sit in divisor position; the parser turns
                // symbolic divisors into %mod/%div markers.
                tscope.symbolic_divisors = true;
                template = Some(parse_formula_sexp(&sub[1], &tscope)?);
            }
            _ => return Err(bad(item.pos(), "expected (holes ...) or (template ...)")),
        }
    }
    let template = template.ok_or_else(|| bad(pos, "summary-grammar needs a (template ...)"))?;
    Ok(GrammarSpec::Template(TemplateGrammar { holes, template }))
}

pub fn parse_benchmark(text: &str) -> Result<Benchmark, BenchError> {
    let forms = sexp::parse_all(text)?;
    // Pass 1: grammar declarations (productions may reference later ones).
    let grammar_forms: Vec<Sexp> = forms
        .iter()
        .filter(|f| {
            f.list()
                .and_then(|items| items.first())
                .and_then(|h| h.atom())
                == Some("nonterm")
        })
        .cloned()
        .collect();
    if grammar_forms.is_empty() {
        return Err(BenchError::MissingGrammar);
    }
    let grammar = gimp::parse_grammar(&grammar_forms)?;
    let nts: IndexSet<String> = grammar.nonterminals().map(|(n, _)| n.to_string()).collect();

    let mut k: Option<usize> = None;
    let mut pre = Formula::True;
    let mut program: Option<GimpTerm> = None;
    let mut post: Option<Formula> = None;
    let mut summaries = IndexMap::new();
    let mut invariants = IndexMap::new();
    let mut template_grammars = IndexMap::new();
    let mut examples: Vec<(Vec<i64>, Vec<i64>)> = Vec::new();
    let mut example_in_vars: Vec<String> = vec!["x".to_string()];
    let mut example_out_vars: Vec<String> = vec!["x".to_string()];

    let scope = || {
        let mut s = FormulaScope::default();
        s.bool_vars.insert(BT.to_string());
        s
    };

    for form in &forms {
        let items = match form.list() {
            Some(items) => items,
            None => return Err(bad(form.pos(), "expected a (...) form")),
        };
        let head = items
            .first()
            .and_then(|h| h.atom())
            .ok_or_else(|| bad(form.pos(), "expected a form head"))?;
        match head {
            "nonterm" => {}
            "set-vector-length" => {
                let v = items
                    .get(1)
                    .and_then(|x| x.int())
                    .ok_or_else(|| bad(form.pos(), "(set-vector-length k)"))?;
                if v < 1 {
                    return Err(bad(form.pos(), "vector length must be >= 1"));
                }
                k = Some(v as usize);
            }
            "pre" => {
                if items.len() != 2 {
                    return Err(bad(form.pos(), "(pre FORMULA)"));
                }
                pre = parse_formula_sexp(&items[1], &scope())?;
            }
            "post" => {
                if items.len() != 2 {
                    return Err(bad(form.pos(), "(post FORMULA)"));
                }
                post = Some(parse_formula_sexp(&items[1], &scope())?);
            }
            "program" => {
                if items.len() != 2 {
                    return Err(bad(form.pos(), "(program TERM)"));
                }
                program = Some(gimp::parse_term(&items[1], &nts)?);
            }
            "summary" => {
                if items.len() != 3 {
                    return Err(bad(form.pos(), "(summary NONTERMINAL FORMULA)"));
                }
                let name = items[1]
                    .atom()
                    .ok_or_else(|| bad(items[1].pos(), "nonterminal name"))?
                    .to_string();
                if !nts.contains(&name) {
                    return Err(bad(items[1].pos(), format!("unknown nonterminal `{name}`")));
                }
                summaries.insert(name, parse_formula_sexp(&items[2], &scope())?);
            }
            "invariant" => {
                if items.len() != 3 {
                    return Err(bad(form.pos(), "(invariant SITE FORMULA)"));
                }
                let name = items[1]
                    .atom()
                    .ok_or_else(|| bad(items[1].pos(), "invariant site name"))?
                    .to_string();
                invariants.insert(name, parse_formula_sexp(&items[2], &scope())?);
            }
            "summary-grammar" => {
                if items.len() < 3 {
                    return Err(bad(form.pos(), "(summary-grammar NAME ...)"));
                }
                let name = items[1]
                    .atom()
                    .ok_or_else(|| bad(items[1].pos(), "parameter site name"))?
                    .to_string();
                let spec = parse_grammar_spec(&items[2..], form.pos(), &scope())?;
                template_grammars.insert(name, spec);
            }
            "examples" => {
                for ex in &items[1..] {
                    let sub =
                        ex.list().ok_or_else(|| bad(ex.pos(), "expected ((in ...) (out ...))"))?;
                    if sub.first().and_then(|h| h.atom()) == Some("vars") {
                        // (vars (in x y) (out x))
                        for spec in &sub[1..] {
                            let vs = spec
                                .list()
                                .ok_or_else(|| bad(spec.pos(), "(in v...) or (out v...)"))?;
                            let names: Vec<String> = vs[1..]
                                .iter()
                                .map(|v| v.atom().unwrap_or_default().to_string())
                                .collect();
                            match vs.first().and_then(|h| h.atom()) {
                                Some("in") => example_in_vars = names,
                                Some("out") => example_out_vars = names,
                                _ => return Err(bad(spec.pos(), "(in ...) or (out ...)")),
                            }
                        }
                        continue;
                    }
                    let mut ins = Vec::new();
                    let mut outs = Vec::new();
                    for part in sub {
                        let ps = part
                            .list()
                            .ok_or_else(|| bad(part.pos(), "expected (in v...) / (out v...)"))?;
                        let vals: Vec<i64> = ps[1..]
                            .iter()
                            .map(|v| v.int().ok_or_else(|| bad(v.pos(), "integer example value")))
                            .collect::<Result<_, _>>()?;
                        match ps.first().and_then(|h| h.atom()) {
                            Some("in") => ins = vals,
                            Some("out") => outs = vals,
                            _ => return Err(bad(part.pos(), "expected (in ...) or (out ...)")),
                        }
                    }
                    examples.push((ins, outs));
                }
            }
            "set-logic" | "set-option" => {}
            other => return Err(bad(form.pos(), format!("unknown form `{other}`"))),
        }
    }

    // Desugar examples into the vector-state encoding:
    //   { /\_i in-var[i] = in_i }  S  { not (/\_i out-var[i] = out_i) }.
    if !examples.is_empty() {
        let n = examples.len();
        k = Some(n);
        let mut pre_parts = Vec::new();
        for (i, (ins, _)) in examples.iter().enumerate() {
            if ins.len() != example_in_vars.len() {
                return Err(bad(
                    sexp::Pos { line: 0, col: 0 },
                    "example input arity differs from (vars (in ...))",
                ));
            }
            for (v, val) in example_in_vars.iter().zip(ins) {
                pre_parts.push(Formula::eq(
                    Term::elem(v, Term::Int(i as i64 + 1)),
                    Term::Int(*val),
                ));
            }
        }
        pre = Formula::conj(pre_parts);
        let mut post_parts = Vec::new();
        for (i, (_, outs)) in examples.iter().enumerate() {
            if outs.len() != example_out_vars.len() {
                return Err(bad(
                    sexp::Pos { line: 0, col: 0 },
                    "example output arity differs from (vars (out ...))",
                ));
            }
            for (v, val) in example_out_vars.iter().zip(outs) {
                post_parts.push(Formula::eq(
                    Term::elem(v, Term::Int(i as i64 + 1)),
                    Term::Int(*val),
                ));
            }
        }
        post = Some(Formula::not(Formula::conj(post_parts)));
    }

    let program = program.unwrap_or_else(|| GimpTerm::nt(grammar.start()));
    let post = post.ok_or(BenchError::MissingPost)?;

    // Vector environment: every program variable plus the reserved scratch
    // variables are vector-valued.
    let env = k.map(|k| {
        let mut env = VectorEnv::new(k);
        for v in grammar.all_program_vars(&program) {
            env.declare(&v, VarSort::Int);
        }
        env.declare(ET, VarSort::Int);
        env.declare(BT, VarSort::Bool);
        env
    });

    Ok(Benchmark {
        grammar,
        env,
        pre,
        program,
        post,
        summaries,
        invariants,
        template_grammars,
    })
}

/// Convenience for tests: parse a term in isolation against a grammar.
pub fn parse_program_text(text: &str, g: &Rtg) -> Result<GimpTerm, BenchError> {
    let s = sexp::parse_one(text)?;
    let nts: IndexSet<String> = g.nonterminals().map(|(n, _)| n.to_string()).collect();
    Ok(gimp::parse_term(&s, &nts)?)
}

/// Convenience: parse a formula in the default benchmark scope.
pub fn parse_formula_default(text: &str) -> Result<Formula, BenchError> {
    let mut scope = FormulaScope::default();
    scope.bool_vars.insert(BT.to_string());
    let s = sexp::parse_one(text)?;
    Ok(parse_formula_sexp(&s, &scope)?)
}

/// Convenience: parse an integer term in the default scope.
pub fn parse_term_default(text: &str) -> Result<Term, BenchError> {
    let scope = FormulaScope::default();
    let s = sexp::parse_one(text)?;
    Ok(parse_term_sexp(&s, &scope)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG: &str = "\
(nonterm N IntExpr (2) (+ 2 N))
(pre true)
(program N)
(post (not (= e_t 3)))
(summary N (= (mod e_t 2) 0))
(summary-grammar N (holes (n 2 3 4 5 6 7 8)) (template (= (mod e_t n) 0)))
";

    #[test]
    fn parse_fig_benchmark() {
        let b = parse_benchmark(FIG).unwrap();
        assert_eq!(b.grammar.start(), "N");
        assert!(b.env.is_none());
        assert_eq!(b.program, GimpTerm::nt("N"));
        assert_eq!(b.summaries.len(), 1);
        match &b.template_grammars["N"] {
            GrammarSpec::Template(t) => {
                assert_eq!(t.holes.len(), 1);
                assert_eq!(t.holes[0].choices, vec![2, 3, 4, 5, 6, 7, 8]);
            }
            other => panic!("unexpected grammar {other:?}"),
        }
    }

    #[test]
    fn examples_desugar_to_vector_triple() {
        let src = "\
(nonterm S Stmt (:= x 0))
(examples ((in 1) (out 2)) ((in 3) (out 4)))
";
        let b = parse_benchmark(src).unwrap();
        assert_eq!(b.k(), Some(2));
        let want_pre = Formula::conj(vec![
            Formula::eq(Term::elem("x", Term::Int(1)), Term::Int(1)),
            Formula::eq(Term::elem("x", Term::Int(2)), Term::Int(3)),
        ]);
        assert_eq!(b.pre, want_pre);
        let want_post = Formula::not(Formula::conj(vec![
            Formula::eq(Term::elem("x", Term::Int(1)), Term::Int(2)),
            Formula::eq(Term::elem("x", Term::Int(2)), Term::Int(4)),
        ]));
        assert_eq!(b.post, want_post);
    }

    #[test]
    fn vector_env_declares_program_vars() {
        let src = "\
(nonterm S Stmt (:= x y))
(set-vector-length 3)
(post (not (= (vref x 1) (vref y 1))))
";
        let b = parse_benchmark(src).unwrap();
        let env = b.env.unwrap();
        assert_eq!(env.k, 3);
        assert!(env.is_vector("x"));
        assert!(env.is_vector("y"));
        assert!(env.is_vector("e_t"));
    }

    #[test]
    fn missing_post_is_an_error() {
        assert!(matches!(
            parse_benchmark("(nonterm N IntExpr 2)"),
            Err(BenchError::MissingPost)
        ));
    }

    #[test]
    fn unknown_summary_nonterminal_rejected() {
        let src = "(nonterm N IntExpr 2)\n(post true)\n(summary M true)";
        assert!(parse_benchmark(src).is_err());
    }
}
