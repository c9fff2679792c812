//! Syntax-directed construction of proof skeletons: given a context, a
//! partial program, and a parametrized postcondition, derive the full rule
//! tree and the parametrized weakest precondition. Only Weaken nodes carry
//! semantic obligations; everything else is valid by construction and
//! machine-checkable (see `check_syntactic`).

use std::fmt;

use indexmap::{IndexMap, IndexSet};
use thiserror::Error;

use crate::gimp::{
    CompOp, FreshNames, GimpTerm, GrammarError, Rtg, Sort, VarProfile, BT, B_LOOP,
    ET,
};
use crate::logic::{
    alpha_eq, free_vars, t_transform, Arg, Binder, Formula, LogicError, Quant, Subst, Term,
    VarSort, VectorEnv, YMap,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleTag {
    Int,
    True,
    False,
    Var,
    Not,
    Bin,
    And,
    Comp(CompOp),
    Assign,
    Seq,
    SimpleIf,
    SimpleWhile,
    VsIf,
    VsWhile,
    GrmDisj,
    Hp,
    ApplyHp,
    Adapt,
    Weaken,
    Skip,
}

impl fmt::Display for RuleTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RuleTag::Int => write!(f, "Int"),
            RuleTag::True => write!(f, "True"),
            RuleTag::False => write!(f, "False"),
            RuleTag::Var => write!(f, "Var"),
            RuleTag::Not => write!(f, "Not"),
            RuleTag::Bin => write!(f, "Bin-Plus"),
            RuleTag::And => write!(f, "And"),
            RuleTag::Comp(CompOp::Lt) => write!(f, "Comp-Lt"),
            RuleTag::Comp(CompOp::Eq) => write!(f, "Comp-Eq"),
            RuleTag::Assign => write!(f, "Assign"),
            RuleTag::Seq => write!(f, "Seq"),
            RuleTag::SimpleIf => write!(f, "SimpleIf"),
            RuleTag::SimpleWhile => write!(f, "SimpleWhile"),
            RuleTag::VsIf => write!(f, "VS-If"),
            RuleTag::VsWhile => write!(f, "VS-While"),
            RuleTag::GrmDisj => write!(f, "GrmDisj"),
            RuleTag::Hp => write!(f, "HP"),
            RuleTag::ApplyHp => write!(f, "ApplyHP"),
            RuleTag::Adapt => write!(f, "Adapt"),
            RuleTag::Weaken => write!(f, "Weaken"),
            RuleTag::Skip => write!(f, "Skip"),
        }
    }
}

impl RuleTag {
    pub fn short(&self) -> &'static str {
        match self {
            RuleTag::Int => "int",
            RuleTag::True => "true",
            RuleTag::False => "false",
            RuleTag::Var => "var",
            RuleTag::Not => "not",
            RuleTag::Bin => "bin",
            RuleTag::And => "and",
            RuleTag::Comp(_) => "comp",
            RuleTag::Assign => "assign",
            RuleTag::Seq => "seq",
            RuleTag::SimpleIf => "if",
            RuleTag::SimpleWhile => "while",
            RuleTag::VsIf => "vsif",
            RuleTag::VsWhile => "vswhile",
            RuleTag::GrmDisj => "grmdisj",
            RuleTag::Hp => "hp",
            RuleTag::ApplyHp => "applyhp",
            RuleTag::Adapt => "adapt",
            RuleTag::Weaken => "w",
            RuleTag::Skip => "skip",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Triple {
    pub pre: Formula,
    pub program: GimpTerm,
    pub post: Formula,
}

/// A summary triple {x=z} N {Q_N(x, z)} available as an inductive fact.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextTriple {
    pub nonterminal: String,
    pub pre: Formula,
    pub post: Formula,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Context {
    triples: Vec<ContextTriple>,
}

impl Context {
    pub fn empty() -> Context {
        Context::default()
    }

    pub fn get(&self, n: &str) -> Option<&ContextTriple> {
        self.triples.iter().find(|t| t.nonterminal == n)
    }

    pub fn with(&self, t: ContextTriple) -> Context {
        debug_assert!(self.get(&t.nonterminal).is_none());
        let mut triples = self.triples.clone();
        triples.push(t);
        Context { triples }
    }

    pub fn push(&mut self, t: ContextTriple) {
        assert!(self.get(&t.nonterminal).is_none(), "one summary triple per nonterminal");
        self.triples.push(t);
    }

    pub fn triples(&self) -> &[ContextTriple] {
        &self.triples
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RuleAux {
    None,
    /// Fresh intermediate of a Bin/And/Comp application.
    BinVar(String),
    /// Adapt bookkeeping: (x, y, sort) renamings and (z, x, sort) rebindings.
    Adapt { xy: Vec<(String, String, VarSort)>, zx: Vec<(String, String, VarSort)> },
    /// Nonterminal whose inductive fact this HP introduces.
    HpIntro(String),
    VsIf { b_loop: String, y: Vec<(String, String)>, z: Vec<(String, String)> },
    VsWhile { b_fresh: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkeletonNode {
    pub rule: RuleTag,
    pub conclusion: Triple,
    pub context: Context,
    pub children: Vec<SkeletonNode>,
    pub aux: RuleAux,
}

impl SkeletonNode {
    pub fn count_rule(&self, tag: RuleTag) -> usize {
        let here = usize::from(self.rule == tag);
        here + self.children.iter().map(|c| c.count_rule(tag)).sum::<usize>()
    }

    /// Post-order rule tags (children left-to-right, then the node).
    pub fn postorder_tags(&self) -> Vec<RuleTag> {
        let mut out = Vec::new();
        fn walk(n: &SkeletonNode, out: &mut Vec<RuleTag>) {
            for c in &n.children {
                walk(c, out);
            }
            out.push(n.rule);
        }
        walk(self, &mut out);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Summary,
    Invariant,
}

/// Signature of a second-order parameter: summaries take the site's x-vars
/// then z-vars; invariants take the loop's x-vars then the free variables of
/// the incoming postcondition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParameterSig {
    pub name: String,
    pub kind: ParamKind,
    /// Site: nonterminal name for summaries, loop path label for invariants.
    pub site: String,
    pub formals: Vec<(String, VarSort)>,
}

impl ParameterSig {
    /// Flattened argument count (vector formals contribute k arguments).
    pub fn flat_arity(&self, k: Option<usize>) -> usize {
        self.formals
            .iter()
            .map(|(_, s)| match s {
                VarSort::VecInt | VarSort::VecBool => k.unwrap_or(1),
                _ => 1,
            })
            .sum()
    }
}

#[derive(Debug, Clone)]
pub struct Skeleton {
    pub root: SkeletonNode,
    pub params: IndexMap<String, ParameterSig>,
    pub env: Option<VectorEnv>,
}

#[derive(Debug, Error)]
pub enum SkelError {
    #[error(transparent)]
    Grammar(#[from] GrammarError),
    #[error(transparent)]
    Logic(#[from] LogicError),
    #[error("program mentions reserved variable `{0}`")]
    Reserved(String),
    #[error("nonterminal `{0}` has sort {1}, expected {2}")]
    NonterminalSort(String, Sort, Sort),
}

/// Which statement-level rules the skeleton uses, decided by the presence of
/// a finite-vector environment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleSet {
    Scalar,
    VectorState,
}

impl RuleSet {
    pub fn if_rule(&self) -> RuleTag {
        match self {
            RuleSet::Scalar => RuleTag::SimpleIf,
            RuleSet::VectorState => RuleTag::VsIf,
        }
    }

    pub fn while_rule(&self) -> RuleTag {
        match self {
            RuleSet::Scalar => RuleTag::SimpleWhile,
            RuleSet::VectorState => RuleTag::VsWhile,
        }
    }
}

pub fn vs_rules_selector(env: Option<&VectorEnv>) -> RuleSet {
    match env {
        None => RuleSet::Scalar,
        Some(_) => RuleSet::VectorState,
    }
}

pub struct SkeletonBuilder<'g> {
    grammar: &'g Rtg,
    env: Option<&'g VectorEnv>,
    fresh: FreshNames,
    params: IndexMap<String, ParameterSig>,
    profiles: IndexMap<String, VarProfile>,
    bin_counter: u32,
    loop_counter: u32,
}

impl<'g> SkeletonBuilder<'g> {
    pub fn new(grammar: &'g Rtg, env: Option<&'g VectorEnv>, taken: IndexSet<String>) -> Self {
        let mut fresh = FreshNames::new(taken.into_iter());
        fresh.reserve(ET);
        fresh.reserve(BT);
        SkeletonBuilder {
            grammar,
            env,
            fresh,
            params: IndexMap::new(),
            profiles: IndexMap::new(),
            bin_counter: 0,
            loop_counter: 0,
        }
    }

    pub fn into_params(self) -> IndexMap<String, ParameterSig> {
        self.params
    }

    pub fn params(&self) -> &IndexMap<String, ParameterSig> {
        &self.params
    }

    fn vectored(&self) -> bool {
        self.env.is_some()
    }

    fn k(&self) -> usize {
        self.env.map(|e| e.k).unwrap_or(1)
    }

    fn fresh_bin_var(&mut self) -> String {
        self.bin_counter += 1;
        self.fresh.fresh(&format!("x{}", self.bin_counter))
    }

    // -- substitution helpers (scalar vs vector mode) -----------------------

    /// Substitute e_t by the image of `body(e_t)`; in vector mode the image
    /// applies elementwise with `%i` as the index placeholder.
    fn subst_et(&self, f: &Formula, scalar: Term, elementwise: Term) -> Formula {
        if self.vectored() {
            crate::logic::substitute(
                f,
                &Subst::VecInt { vec: ET.into(), idx: "%i".into(), body: elementwise },
            )
        } else {
            crate::logic::substitute(f, &Subst::IntVar(ET.into(), scalar))
        }
    }

    fn subst_bt(&self, f: &Formula, scalar: Formula, elementwise: Formula) -> Formula {
        if self.vectored() {
            crate::logic::substitute(
                f,
                &Subst::VecBool { vec: BT.into(), idx: "%i".into(), body: elementwise },
            )
        } else {
            crate::logic::substitute(f, &Subst::BoolVar(BT.into(), scalar))
        }
    }

    fn subst_int_var(&self, f: &Formula, x: &str, scalar: Term, elementwise: Term) -> Formula {
        if self.vectored() {
            crate::logic::substitute(
                f,
                &Subst::VecInt { vec: x.into(), idx: "%i".into(), body: elementwise },
            )
        } else {
            crate::logic::substitute(f, &Subst::IntVar(x.into(), scalar))
        }
    }

    fn rename_var(&self, f: &Formula, from: &str, to: &str, sort: VarSort) -> Formula {
        let s = match sort {
            VarSort::Int | VarSort::Idx => Subst::IntVar(from.into(), Term::var(to)),
            VarSort::Bool => Subst::BoolVar(from.into(), Formula::BoolVar(to.into())),
            VarSort::VecInt => Subst::vec_rename_int(from, to),
            VarSort::VecBool => Subst::vec_rename_bool(from, to),
        };
        crate::logic::substitute(f, &s)
    }

    fn scalar_sort(&self, base: VarSort) -> VarSort {
        if self.vectored() {
            match base {
                VarSort::Int => VarSort::VecInt,
                VarSort::Bool => VarSort::VecBool,
                s => s,
            }
        } else {
            base
        }
    }

    fn var_sort_of_x(&self, x: &str) -> VarSort {
        if x == BT {
            self.scalar_sort(VarSort::Bool)
        } else {
            self.scalar_sort(VarSort::Int)
        }
    }

    // -- parameter machinery -------------------------------------------------

    fn profile_of_nt(&mut self, n: &str) -> Result<VarProfile, SkelError> {
        Ok(crate::gimp::var_profile_of(
            self.grammar.sort(n)?,
            &self.grammar.assignable_vars(n)?,
            &mut self.fresh,
        ))
    }

    /// Arguments for a parameter application over the given variables,
    /// flattened elementwise in vector mode.
    fn args_for(&self, vars: &[(String, VarSort)]) -> Vec<Arg> {
        let mut out = Vec::new();
        for (v, sort) in vars {
            match sort {
                VarSort::Int | VarSort::Idx => out.push(Arg::Int(Term::var(v))),
                VarSort::Bool => out.push(Arg::Bool(Formula::BoolVar(v.clone()))),
                VarSort::VecInt => {
                    for j in 1..=self.k() {
                        out.push(Arg::Int(Term::elem(v, Term::Int(j as i64))));
                    }
                }
                VarSort::VecBool => {
                    for j in 1..=self.k() {
                        out.push(Arg::Bool(Formula::bool_elem(v, Term::Int(j as i64))));
                    }
                }
            }
        }
        out
    }

    fn formals_of_profile(&self, p: &VarProfile) -> Vec<(String, VarSort)> {
        let mut out = Vec::new();
        for x in &p.x_vars {
            out.push((x.clone(), self.var_sort_of_x(x)));
        }
        for z in &p.z_vars {
            out.push((z.clone(), self.scalar_sort(VarSort::Int)));
        }
        out
    }

    /// The summary parameter application Q_N(x-vars, z-vars).
    fn summary_app(&self, name: &str, formals: &[(String, VarSort)]) -> Formula {
        Formula::ParamApp(name.to_string(), self.args_for(formals))
    }

    /// The precondition x = z over the profile's pairs (empty conjunction is
    /// `true`; vector pairs compare elementwise under an index quantifier).
    fn xz_formula(&self, profile: &VarProfile) -> Formula {
        let mut parts = Vec::new();
        for (x, z) in profile.xz_pairs() {
            if self.vectored() {
                parts.push(Formula::forall(
                    "i",
                    VarSort::Idx,
                    Formula::eq(Term::elem(&x, Term::var("i")), Term::elem(&z, Term::var("i"))),
                ));
            } else {
                parts.push(Formula::eq(Term::var(&x), Term::var(&z)));
            }
        }
        Formula::conj(parts)
    }

    /// Build the Adapt precondition forall y. (Q[x->y][z->x] -> R[x->y]).
    fn adapt_pre(
        &self,
        summary_post: &Formula,
        profile: &VarProfile,
        r: &Formula,
    ) -> (Formula, RuleAux) {
        let mut xy = Vec::new();
        for (x, y) in profile.xy_pairs() {
            xy.push((x.clone(), y.clone(), self.var_sort_of_x(&x)));
        }
        let mut zx = Vec::new();
        for (x, z) in profile.xz_pairs() {
            zx.push((z.clone(), x.clone(), self.scalar_sort(VarSort::Int)));
        }
        let pre = build_adapt_pre(summary_post, r, &xy, &zx);
        (pre, RuleAux::Adapt { xy, zx })
    }

    // -- the algorithm -------------------------------------------------------

    /// Weakest-skeleton construction: returns a skeleton concluding
    /// {P'} s {q} with P' the syntactically derived parametrized weakest
    /// precondition. Binary nodes visit right children before left.
    pub fn w_skel(
        &mut self,
        ctx: &Context,
        s: &GimpTerm,
        q: &Formula,
    ) -> Result<SkeletonNode, SkelError> {
        // Reserved variables may not appear in user programs.
        {
            let mut reads = IndexSet::new();
            s.direct_read_vars(&mut reads);
            for v in reads {
                if crate::gimp::is_reserved_ident(&v) {
                    return Err(SkelError::Reserved(v));
                }
            }
        }
        self.grammar.sort_of(s)?;
        match s {
            GimpTerm::IntLit(i) => {
                let pre = self.subst_et(q, Term::Int(*i), Term::Int(*i));
                Ok(self.leaf(RuleTag::Int, ctx, pre, s.clone(), q.clone()))
            }
            GimpTerm::BoolLit(b) => {
                let val = if *b { Formula::True } else { Formula::False };
                let pre = self.subst_bt(q, val.clone(), val);
                let tag = if *b { RuleTag::True } else { RuleTag::False };
                Ok(self.leaf(tag, ctx, pre, s.clone(), q.clone()))
            }
            GimpTerm::Var(x) => {
                let pre = self.subst_et(q, Term::var(x), Term::elem(x, Term::var("%i")));
                Ok(self.leaf(RuleTag::Var, ctx, pre, s.clone(), q.clone()))
            }
            GimpTerm::Skip => Ok(self.leaf(RuleTag::Skip, ctx, q.clone(), s.clone(), q.clone())),
            GimpTerm::Not(b) => {
                let child_post = self.subst_bt(
                    q,
                    Formula::not(Formula::BoolVar(BT.into())),
                    Formula::not(Formula::bool_elem(BT, Term::var("%i"))),
                );
                let child = self.w_skel(ctx, b, &child_post)?;
                let pre = child.conclusion.pre.clone();
                Ok(self.node(RuleTag::Not, ctx, pre, s.clone(), q.clone(), vec![child], RuleAux::None))
            }
            GimpTerm::Plus(e1, e2) => {
                let x1 = self.fresh_bin_var();
                let right_post = self.subst_et(
                    q,
                    Term::add(Term::var(&x1), Term::var(ET)),
                    Term::add(Term::elem(&x1, Term::var("%i")), Term::elem(ET, Term::var("%i"))),
                );
                let right = self.w_skel(ctx, e2, &right_post)?;
                let left_post = self.subst_int_var(
                    &right.conclusion.pre,
                    &x1,
                    Term::var(ET),
                    Term::elem(ET, Term::var("%i")),
                );
                let left = self.w_skel(ctx, e1, &left_post)?;
                let pre = left.conclusion.pre.clone();
                Ok(self.node(
                    RuleTag::Bin,
                    ctx,
                    pre,
                    s.clone(),
                    q.clone(),
                    vec![left, right],
                    RuleAux::BinVar(x1),
                ))
            }
            GimpTerm::And(b1, b2) => {
                let x1 = self.fresh_bin_var();
                let right_post = self.subst_bt(
                    q,
                    Formula::and(Formula::BoolVar(x1.clone()), Formula::BoolVar(BT.into())),
                    Formula::and(
                        Formula::bool_elem(&x1, Term::var("%i")),
                        Formula::bool_elem(BT, Term::var("%i")),
                    ),
                );
                let right = self.w_skel(ctx, b2, &right_post)?;
                let left_post = if self.vectored() {
                    crate::logic::substitute(
                        &right.conclusion.pre,
                        &Subst::VecBool {
                            vec: x1.clone(),
                            idx: "%i".into(),
                            body: Formula::bool_elem(BT, Term::var("%i")),
                        },
                    )
                } else {
                    crate::logic::substitute(
                        &right.conclusion.pre,
                        &Subst::BoolVar(x1.clone(), Formula::BoolVar(BT.into())),
                    )
                };
                let left = self.w_skel(ctx, b1, &left_post)?;
                let pre = left.conclusion.pre.clone();
                Ok(self.node(
                    RuleTag::And,
                    ctx,
                    pre,
                    s.clone(),
                    q.clone(),
                    vec![left, right],
                    RuleAux::BinVar(x1),
                ))
            }
            GimpTerm::Comp(op, e1, e2) => {
                let x1 = self.fresh_bin_var();
                let mk = |a: Term, b: Term| match op {
                    CompOp::Lt => Formula::lt(a, b),
                    CompOp::Eq => Formula::eq(a, b),
                };
                let right_post = self.subst_bt(
                    q,
                    mk(Term::var(&x1), Term::var(ET)),
                    mk(Term::elem(&x1, Term::var("%i")), Term::elem(ET, Term::var("%i"))),
                );
                let right = self.w_skel(ctx, e2, &right_post)?;
                let left_post = self.subst_int_var(
                    &right.conclusion.pre,
                    &x1,
                    Term::var(ET),
                    Term::elem(ET, Term::var("%i")),
                );
                let left = self.w_skel(ctx, e1, &left_post)?;
                let pre = left.conclusion.pre.clone();
                Ok(self.node(
                    RuleTag::Comp(*op),
                    ctx,
                    pre,
                    s.clone(),
                    q.clone(),
                    vec![left, right],
                    RuleAux::BinVar(x1),
                ))
            }
            GimpTerm::Assign(x, e) => {
                let child_post =
                    self.subst_int_var(q, x, Term::var(ET), Term::elem(ET, Term::var("%i")));
                let child = self.w_skel(ctx, e, &child_post)?;
                let pre = child.conclusion.pre.clone();
                Ok(self.node(RuleTag::Assign, ctx, pre, s.clone(), q.clone(), vec![child], RuleAux::None))
            }
            GimpTerm::Seq(s1, s2) => {
                let right = self.w_skel(ctx, s2, q)?;
                let left = self.w_skel(ctx, s1, &right.conclusion.pre.clone())?;
                let pre = left.conclusion.pre.clone();
                Ok(self.node(RuleTag::Seq, ctx, pre, s.clone(), q.clone(), vec![left, right], RuleAux::None))
            }
            GimpTerm::IfThenElse(b, s1, s2) => match vs_rules_selector(self.env) {
                RuleSet::Scalar => self.simple_if(ctx, s, b, s1, s2, q),
                RuleSet::VectorState => self.vs_if(ctx, s, b, s1, s2, q),
            },
            GimpTerm::While(b, body) => match vs_rules_selector(self.env) {
                RuleSet::Scalar => self.simple_while(ctx, s, b, body, q),
                RuleSet::VectorState => self.vs_while(ctx, s, b, body, q),
            },
            GimpTerm::NonterminalRef(n) => self.nonterminal(ctx, s, n, q),
        }
    }

    /// Weaken the derived weakest precondition to the target precondition.
    pub fn p_skel(
        &mut self,
        ctx: &Context,
        p: &Formula,
        s: &GimpTerm,
        q: &Formula,
    ) -> Result<SkeletonNode, SkelError> {
        let child = self.w_skel(ctx, s, q)?;
        Ok(self.node(
            RuleTag::Weaken,
            ctx,
            p.clone(),
            s.clone(),
            q.clone(),
            vec![child],
            RuleAux::None,
        ))
    }

    fn simple_if(
        &mut self,
        ctx: &Context,
        s: &GimpTerm,
        b: &GimpTerm,
        s1: &GimpTerm,
        s2: &GimpTerm,
        q: &Formula,
    ) -> Result<SkeletonNode, SkelError> {
        let else_sk = self.w_skel(ctx, s2, q)?;
        let then_sk = self.w_skel(ctx, s1, q)?;
        let guard_post = Formula::and(
            Formula::implies(Formula::BoolVar(BT.into()), then_sk.conclusion.pre.clone()),
            Formula::implies(
                Formula::not(Formula::BoolVar(BT.into())),
                else_sk.conclusion.pre.clone(),
            ),
        );
        let guard_sk = self.w_skel(ctx, b, &guard_post)?;
        let pre = guard_sk.conclusion.pre.clone();
        Ok(self.node(
            RuleTag::SimpleIf,
            ctx,
            pre,
            s.clone(),
            q.clone(),
            vec![guard_sk, then_sk, else_sk],
            RuleAux::None,
        ))
    }

    fn simple_while(
        &mut self,
        ctx: &Context,
        s: &GimpTerm,
        b: &GimpTerm,
        body: &GimpTerm,
        q: &Formula,
    ) -> Result<SkeletonNode, SkelError> {
        let (inv_app, _inv_name) = self.fresh_invariant(s, body, q)?;
        let body_sk = self.w_skel(ctx, body, &inv_app)?;
        let guard_post = Formula::and(
            Formula::implies(Formula::not(Formula::BoolVar(BT.into())), q.clone()),
            Formula::implies(Formula::BoolVar(BT.into()), body_sk.conclusion.pre.clone()),
        );
        let guard_sk = self.w_skel(ctx, b, &guard_post)?;
        let guard_wk = self.node(
            RuleTag::Weaken,
            ctx,
            inv_app.clone(),
            b.clone(),
            guard_post,
            vec![guard_sk],
            RuleAux::None,
        );
        Ok(self.node(
            RuleTag::SimpleWhile,
            ctx,
            inv_app,
            s.clone(),
            q.clone(),
            vec![guard_wk, body_sk],
            RuleAux::None,
        ))
    }

    fn vs_if(
        &mut self,
        ctx: &Context,
        s: &GimpTerm,
        b: &GimpTerm,
        s1: &GimpTerm,
        s2: &GimpTerm,
        q: &Formula,
    ) -> Result<SkeletonNode, SkelError> {
        // Mutable program vectors of the whole conditional get poststate and
        // ghost partners for the deactivation game.
        let mutables = self.grammar.assignable_vars_of_term(s)?;
        let b_loop = self.fresh.fresh(B_LOOP);
        let mut ys: YMap = YMap::new();
        let mut zs: Vec<(String, String)> = Vec::new();
        for x in &mutables {
            ys.insert(x.clone(), self.fresh.fresh(&format!("{x}_y")));
            zs.push((x.clone(), self.fresh.fresh(&format!("{x}_z"))));
        }
        let tq = t_transform(q, &b_loop, &ys)?;
        let else_sk = self.w_skel(ctx, s2, &tq)?;
        // Then-branch postcondition: P2 with x deactivated to z and y
        // reactivated back to x.
        let mut then_post = else_sk.conclusion.pre.clone();
        for (x, z) in &zs {
            then_post = self.rename_var(&then_post, x, z, VarSort::VecInt);
        }
        for (x, y) in &ys {
            then_post = self.rename_var(&then_post, y, x, VarSort::VecInt);
        }
        let then_sk = self.w_skel(ctx, s1, &then_post)?;
        // Guard postcondition: b_loop = b_t -> P1[z -> x].
        let mut p1_back = then_sk.conclusion.pre.clone();
        for (x, z) in &zs {
            p1_back = self.rename_var(&p1_back, z, x, VarSort::VecInt);
        }
        let snap = Formula::forall(
            "i",
            VarSort::Idx,
            Formula::iff(
                Formula::bool_elem(&b_loop, Term::var("i")),
                Formula::bool_elem(BT, Term::var("i")),
            ),
        );
        let guard_post = Formula::implies(snap, p1_back);
        let guard_sk = self.w_skel(ctx, b, &guard_post)?;
        let pre = guard_sk.conclusion.pre.clone();
        let aux = RuleAux::VsIf {
            b_loop,
            y: ys.into_iter().collect(),
            z: zs,
        };
        Ok(self.node(
            RuleTag::VsIf,
            ctx,
            pre,
            s.clone(),
            q.clone(),
            vec![guard_sk, then_sk, else_sk],
            aux,
        ))
    }

    fn vs_while(
        &mut self,
        ctx: &Context,
        s: &GimpTerm,
        b: &GimpTerm,
        body: &GimpTerm,
        q: &Formula,
    ) -> Result<SkeletonNode, SkelError> {
        let (inv_app, _inv_name) = self.fresh_invariant(s, body, q)?;
        // Body hypothesis {I} if B then S else skip {I}, built with the
        // vector-state conditional rule and weakened to start from I.
        let ite = GimpTerm::ite(b.clone(), body.clone(), GimpTerm::Skip);
        let ite_sk = self.w_skel(ctx, &ite, &inv_app)?;
        let body_wk = self.node(
            RuleTag::Weaken,
            ctx,
            inv_app.clone(),
            ite.clone(),
            inv_app.clone(),
            vec![ite_sk],
            RuleAux::None,
        );
        // Guard hypothesis {P} B {forall i. not b_t[i]}.
        let all_false = Formula::forall(
            "i",
            VarSort::Idx,
            Formula::not(Formula::bool_elem(BT, Term::var("i"))),
        );
        let guard_sk = self.w_skel(ctx, b, &all_false)?;
        let b_fresh = self.fresh.fresh("b_exit");
        let p_renamed =
            self.rename_var(&guard_sk.conclusion.pre, BT, &b_fresh, VarSort::VecBool);
        let vs_post = Formula::conj(vec![inv_app.clone(), p_renamed, all_false.clone()]);
        let vsw = self.node(
            RuleTag::VsWhile,
            ctx,
            inv_app.clone(),
            s.clone(),
            vs_post,
            vec![guard_sk, body_wk],
            RuleAux::VsWhile { b_fresh },
        );
        // The conclusion postcondition is fixed by the rule; weaken it to q.
        Ok(self.node(
            RuleTag::Weaken,
            ctx,
            inv_app,
            s.clone(),
            q.clone(),
            vec![vsw],
            RuleAux::None,
        ))
    }

    fn fresh_invariant(
        &mut self,
        site: &GimpTerm,
        body: &GimpTerm,
        q: &Formula,
    ) -> Result<(Formula, String), SkelError> {
        self.loop_counter += 1;
        let name = self.fresh.fresh(&format!("I{}", self.loop_counter));
        let x_vars: Vec<(String, VarSort)> = self
            .grammar
            .assignable_vars_of_term(site)?
            .into_iter()
            .map(|x| (x, self.scalar_sort(VarSort::Int)))
            .collect();
        let mut formals = x_vars.clone();
        for (v, sort) in free_vars(q) {
            if formals.iter().any(|(n, _)| n == &v) {
                continue;
            }
            formals.push((v, sort));
        }
        let _ = body;
        let sig = ParameterSig {
            name: name.clone(),
            kind: ParamKind::Invariant,
            site: name.clone(),
            formals: formals.clone(),
        };
        self.params.insert(name.clone(), sig);
        Ok((Formula::ParamApp(name.clone(), self.args_for(&formals)), name))
    }

    /// Register a summary parameter for `n` and return the context triple
    /// {x=z} n {Q_n(x,z)} without building its HP subtree. Used to preload
    /// pre-proven summaries (context mode): Case 4's first subcase then
    /// closes every occurrence of `n` with ApplyHP/Adapt.
    pub fn preload_summary(&mut self, n: &str) -> Result<(String, ContextTriple), SkelError> {
        let profile = self.profile_of_nt(n)?;
        self.remember_profile(n, &profile);
        let formals = self.formals_of_profile(&profile);
        let pname = self.fresh.fresh(&format!("Q_{n}"));
        let sig = ParameterSig {
            name: pname.clone(),
            kind: ParamKind::Summary,
            site: n.to_string(),
            formals: formals.clone(),
        };
        self.params.insert(pname.clone(), sig);
        let post = self.summary_app(&pname, &formals);
        let pre = self.xz_formula(&profile);
        Ok((pname, ContextTriple { nonterminal: n.to_string(), pre, post }))
    }

    fn nonterminal(
        &mut self,
        ctx: &Context,
        s: &GimpTerm,
        n: &str,
        q: &Formula,
    ) -> Result<SkeletonNode, SkelError> {
        if !self.grammar.is_recursive(n)? {
            // GrmDisj keeps the context small for non-recursive nonterminals.
            let mut children = Vec::new();
            for rhs in self.grammar.productions(n)?.to_vec() {
                children.push(self.w_skel(ctx, &rhs, q)?);
            }
            let pre = Formula::conj(children.iter().map(|c| c.conclusion.pre.clone()));
            return Ok(self.node(
                RuleTag::GrmDisj,
                ctx,
                pre,
                s.clone(),
                q.clone(),
                children,
                RuleAux::None,
            ));
        }
        if let Some(triple) = ctx.get(n).cloned() {
            // Close the branch: ApplyHP recalls the inductive fact, Adapt
            // pivots it onto the required postcondition.
            let apply = self.leaf(
                RuleTag::ApplyHp,
                ctx,
                triple.pre.clone(),
                s.clone(),
                triple.post.clone(),
            );
            let profile = self.profile_for_context_triple(n)?;
            let (pre, aux) = self.adapt_pre(&triple.post, &profile, q);
            return Ok(self.node(RuleTag::Adapt, ctx, pre, s.clone(), q.clone(), vec![apply], aux));
        }
        // Introduce the inductive fact and prove it over every production.
        let profile = self.profile_of_nt(n)?;
        self.remember_profile(n, &profile);
        let formals = self.formals_of_profile(&profile);
        let pname = self.fresh.fresh(&format!("Q_{n}"));
        let sig = ParameterSig {
            name: pname.clone(),
            kind: ParamKind::Summary,
            site: n.to_string(),
            formals: formals.clone(),
        };
        self.params.insert(pname.clone(), sig);
        let summary_post = self.summary_app(&pname, &formals);
        let xz = self.xz_formula(&profile);
        let triple =
            ContextTriple { nonterminal: n.to_string(), pre: xz.clone(), post: summary_post.clone() };
        let ctx1 = ctx.with(triple);
        let mut children = Vec::new();
        for rhs in self.grammar.productions(n)?.to_vec() {
            children.push(self.w_skel(&ctx1, &rhs, &summary_post)?);
        }
        let hp_pre = Formula::conj(children.iter().map(|c| c.conclusion.pre.clone()));
        let hp = self.node(
            RuleTag::Hp,
            ctx,
            hp_pre,
            s.clone(),
            summary_post.clone(),
            children,
            RuleAux::HpIntro(n.to_string()),
        );
        // The HP side condition x=z -> /\ P_j rides on a Weaken node.
        let wk = self.node(
            RuleTag::Weaken,
            ctx,
            xz,
            s.clone(),
            summary_post.clone(),
            vec![hp],
            RuleAux::None,
        );
        let (pre, aux) = self.adapt_pre(&summary_post, &profile, q);
        Ok(self.node(RuleTag::Adapt, ctx, pre, s.clone(), q.clone(), vec![wk], aux))
    }

    // Profiles must be reproducible when a context triple is reused by a
    // later ApplyHP; they are cached per nonterminal.
    fn remember_profile(&mut self, n: &str, p: &VarProfile) {
        self.profiles.insert(n.to_string(), p.clone());
    }

    fn profile_for_context_triple(&mut self, n: &str) -> Result<VarProfile, SkelError> {
        if let Some(p) = self.profiles.get(n) {
            return Ok(p.clone());
        }
        let p = self.profile_of_nt(n)?;
        self.remember_profile(n, &p);
        Ok(p)
    }

    fn leaf(
        &self,
        rule: RuleTag,
        ctx: &Context,
        pre: Formula,
        program: GimpTerm,
        post: Formula,
    ) -> SkeletonNode {
        SkeletonNode {
            rule,
            conclusion: Triple { pre, program, post },
            context: ctx.clone(),
            children: vec![],
            aux: RuleAux::None,
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn node(
        &self,
        rule: RuleTag,
        ctx: &Context,
        pre: Formula,
        program: GimpTerm,
        post: Formula,
        children: Vec<SkeletonNode>,
        aux: RuleAux,
    ) -> SkeletonNode {
        SkeletonNode {
            rule,
            conclusion: Triple { pre, program, post },
            context: ctx.clone(),
            children,
            aux,
        }
    }
}

/// Shared pure helper so the checker can recompute Adapt preconditions.
pub fn build_adapt_pre(
    summary_post: &Formula,
    r: &Formula,
    xy: &[(String, String, VarSort)],
    zx: &[(String, String, VarSort)],
) -> Formula {
    let rename = |f: &Formula, from: &str, to: &str, sort: VarSort| -> Formula {
        let s = match sort {
            VarSort::Int | VarSort::Idx => Subst::IntVar(from.into(), Term::var(to)),
            VarSort::Bool => Subst::BoolVar(from.into(), Formula::BoolVar(to.into())),
            VarSort::VecInt => Subst::vec_rename_int(from, to),
            VarSort::VecBool => Subst::vec_rename_bool(from, to),
        };
        crate::logic::substitute(f, &s)
    };
    let mut lhs = summary_post.clone();
    for (x, y, sort) in xy {
        lhs = rename(&lhs, x, y, *sort);
    }
    for (z, x, sort) in zx {
        lhs = rename(&lhs, z, x, *sort);
    }
    let mut rhs = r.clone();
    for (x, y, sort) in xy {
        rhs = rename(&rhs, x, y, *sort);
    }
    let mut out = Formula::implies(lhs, rhs);
    for (_, y, sort) in xy.iter().rev() {
        out = Formula::Quantified(
            Quant::Forall,
            Binder { name: y.clone(), sort: *sort },
            Box::new(out),
        );
    }
    out
}

// ---------------------------------------------------------------------------
// Public entry points

/// Everything the builder must avoid when inventing fresh names.
pub fn taken_names(g: &Rtg, s: &GimpTerm, formulas: &[&Formula]) -> IndexSet<String> {
    let mut taken: IndexSet<String> = g.all_program_vars(s);
    for (n, _) in g.nonterminals() {
        taken.insert(n.to_string());
    }
    for f in formulas {
        for (v, _) in free_vars(f) {
            taken.insert(v);
        }
        collect_all_names(f, &mut taken);
    }
    taken
}

fn collect_all_names(f: &Formula, out: &mut IndexSet<String>) {
    if let Formula::Quantified(_, b, body) = f {
        out.insert(b.name.clone());
        collect_all_names(body, out);
        return;
    }
    match f {
        Formula::Not(a) => collect_all_names(a, out),
        Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) | Formula::Iff(a, b) => {
            collect_all_names(a, out);
            collect_all_names(b, out);
        }
        _ => {}
    }
}

pub fn w_skel(
    g: &Rtg,
    env: Option<&VectorEnv>,
    ctx: &Context,
    s: &GimpTerm,
    q: &Formula,
) -> Result<Skeleton, SkelError> {
    let mut taken = taken_names(g, s, &[q]);
    for t in ctx.triples() {
        for (v, _) in free_vars(&t.post) {
            taken.insert(v);
        }
    }
    let mut b = SkeletonBuilder::new(g, env, taken);
    let root = b.w_skel(ctx, s, q)?;
    Ok(Skeleton { root, params: b.into_params(), env: env.cloned() })
}

pub fn p_skel(
    g: &Rtg,
    env: Option<&VectorEnv>,
    ctx: &Context,
    p: &Formula,
    s: &GimpTerm,
    q: &Formula,
) -> Result<Skeleton, SkelError> {
    let mut taken = taken_names(g, s, &[p, q]);
    for t in ctx.triples() {
        for (v, _) in free_vars(&t.post) {
            taken.insert(v);
        }
    }
    let mut b = SkeletonBuilder::new(g, env, taken);
    let root = b.p_skel(ctx, p, s, q)?;
    Ok(Skeleton { root, params: b.into_params(), env: env.cloned() })
}

// ---------------------------------------------------------------------------
// Syntactic checking

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

pub struct SyntacticChecker<'a> {
    g: &'a Rtg,
    env: Option<&'a VectorEnv>,
    violations: Vec<Violation>,
}

/// Check that every node matches its rule pattern: child counts, programs,
/// contexts, and the formula relations of the inference rules (as equalities
/// up to bound-variable renaming). Weaken nodes are exempt from semantic
/// checks; their pre or post may differ from the child's.
pub fn check_syntactic(skel: &Skeleton, g: &Rtg) -> Vec<Violation> {
    let mut ck = SyntacticChecker { g, env: skel.env.as_ref(), violations: Vec::new() };
    ck.check_node(&skel.root, &node_path_root(&skel.root));
    ck.violations
}

pub fn node_path_root(n: &SkeletonNode) -> String {
    format!("{}0", n.rule.short())
}

pub fn child_path(parent: &str, child: &SkeletonNode, idx: usize) -> String {
    format!("{parent}.{}{idx}", child.rule.short())
}

impl<'a> SyntacticChecker<'a> {
    fn vectored(&self) -> bool {
        self.env.is_some()
    }

    fn fail(&mut self, path: &str, msg: String) {
        self.violations.push(Violation { path: path.to_string(), message: msg });
    }

    fn expect_alpha(&mut self, path: &str, what: &str, got: &Formula, want: &Formula) {
        if !alpha_eq(got, want) {
            self.fail(
                path,
                format!(
                    "{what}: expected {}, got {}",
                    crate::logic::print_formula(want),
                    crate::logic::print_formula(got)
                ),
            );
        }
    }

    fn subst_et(&self, f: &Formula, scalar: Term, elementwise: Term) -> Formula {
        if self.vectored() {
            crate::logic::substitute(
                f,
                &Subst::VecInt { vec: ET.into(), idx: "%i".into(), body: elementwise },
            )
        } else {
            crate::logic::substitute(f, &Subst::IntVar(ET.into(), scalar))
        }
    }

    fn subst_bt(&self, f: &Formula, scalar: Formula, elementwise: Formula) -> Formula {
        if self.vectored() {
            crate::logic::substitute(
                f,
                &Subst::VecBool { vec: BT.into(), idx: "%i".into(), body: elementwise },
            )
        } else {
            crate::logic::substitute(f, &Subst::BoolVar(BT.into(), scalar))
        }
    }

    fn subst_int_var(&self, f: &Formula, x: &str, scalar: Term, elementwise: Term) -> Formula {
        if self.vectored() {
            crate::logic::substitute(
                f,
                &Subst::VecInt { vec: x.into(), idx: "%i".into(), body: elementwise },
            )
        } else {
            crate::logic::substitute(f, &Subst::IntVar(x.into(), scalar))
        }
    }

    fn check_children_context(&mut self, n: &SkeletonNode, path: &str) {
        let expect: Vec<&Context> = match n.rule {
            RuleTag::Hp => return, // checked in the HP case
            _ => n.children.iter().map(|_| &n.context).collect(),
        };
        for (i, (c, want)) in n.children.iter().zip(expect).enumerate() {
            if &c.context != want {
                self.fail(
                    &child_path(path, c, i),
                    "child context differs from parent".to_string(),
                );
            }
        }
    }

    fn check_node(&mut self, n: &SkeletonNode, path: &str) {
        self.check_shape(n, path);
        self.check_children_context(n, path);
        for (i, c) in n.children.iter().enumerate() {
            let p = child_path(path, c, i);
            self.check_node(c, &p);
        }
    }

    fn check_shape(&mut self, n: &SkeletonNode, path: &str) {
        let t = &n.conclusion;
        let arity = |ck: &mut Self, want: usize| {
            if n.children.len() != want {
                ck.fail(path, format!("expected {want} children, found {}", n.children.len()));
                return false;
            }
            true
        };
        match (&n.rule, &t.program) {
            (RuleTag::Int, GimpTerm::IntLit(i)) => {
                if arity(self, 0) {
                    let want = self.subst_et(&t.post, Term::Int(*i), Term::Int(*i));
                    self.expect_alpha(path, "Int precondition", &t.pre, &want);
                }
            }
            (RuleTag::True, GimpTerm::BoolLit(true)) | (RuleTag::False, GimpTerm::BoolLit(false)) => {
                if arity(self, 0) {
                    let val = if matches!(n.rule, RuleTag::True) {
                        Formula::True
                    } else {
                        Formula::False
                    };
                    let want = self.subst_bt(&t.post, val.clone(), val);
                    self.expect_alpha(path, "constant precondition", &t.pre, &want);
                }
            }
            (RuleTag::Var, GimpTerm::Var(x)) => {
                if arity(self, 0) {
                    let want =
                        self.subst_et(&t.post, Term::var(x), Term::elem(x, Term::var("%i")));
                    self.expect_alpha(path, "Var precondition", &t.pre, &want);
                }
            }
            (RuleTag::Skip, GimpTerm::Skip) => {
                if arity(self, 0) {
                    self.expect_alpha(path, "Skip precondition", &t.pre, &t.post);
                }
            }
            (RuleTag::Not, GimpTerm::Not(_)) => {
                if arity(self, 1) {
                    let c = &n.children[0];
                    let want = self.subst_bt(
                        &t.post,
                        Formula::not(Formula::BoolVar(BT.into())),
                        Formula::not(Formula::bool_elem(BT, Term::var("%i"))),
                    );
                    self.expect_alpha(path, "Not hypothesis postcondition", &c.conclusion.post, &want);
                    self.expect_alpha(path, "Not precondition", &t.pre, &c.conclusion.pre);
                }
            }
            (RuleTag::Bin, GimpTerm::Plus(..)) => self.check_binary(n, path, BinKind::Plus),
            (RuleTag::And, GimpTerm::And(..)) => self.check_binary(n, path, BinKind::And),
            (RuleTag::Comp(op), GimpTerm::Comp(op2, ..)) if op == op2 => {
                self.check_binary(n, path, BinKind::Comp(*op))
            }
            (RuleTag::Assign, GimpTerm::Assign(x, _)) => {
                if arity(self, 1) {
                    let c = &n.children[0];
                    let want =
                        self.subst_int_var(&t.post, x, Term::var(ET), Term::elem(ET, Term::var("%i")));
                    self.expect_alpha(path, "Assign hypothesis postcondition", &c.conclusion.post, &want);
                    self.expect_alpha(path, "Assign precondition", &t.pre, &c.conclusion.pre);
                }
            }
            (RuleTag::Seq, GimpTerm::Seq(..)) => {
                if arity(self, 2) {
                    let l = &n.children[0];
                    let r = &n.children[1];
                    self.expect_alpha(path, "Seq right postcondition", &r.conclusion.post, &t.post);
                    self.expect_alpha(path, "Seq left postcondition", &l.conclusion.post, &r.conclusion.pre);
                    self.expect_alpha(path, "Seq precondition", &t.pre, &l.conclusion.pre);
                }
            }
            (RuleTag::SimpleIf, GimpTerm::IfThenElse(..)) => {
                if arity(self, 3) {
                    let g = &n.children[0];
                    let th = &n.children[1];
                    let el = &n.children[2];
                    self.expect_alpha(path, "then postcondition", &th.conclusion.post, &t.post);
                    self.expect_alpha(path, "else postcondition", &el.conclusion.post, &t.post);
                    let want = Formula::and(
                        Formula::implies(Formula::BoolVar(BT.into()), th.conclusion.pre.clone()),
                        Formula::implies(
                            Formula::not(Formula::BoolVar(BT.into())),
                            el.conclusion.pre.clone(),
                        ),
                    );
                    self.expect_alpha(path, "guard postcondition", &g.conclusion.post, &want);
                    self.expect_alpha(path, "SimpleIf precondition", &t.pre, &g.conclusion.pre);
                }
            }
            (RuleTag::SimpleWhile, GimpTerm::While(..)) => {
                if arity(self, 2) {
                    let gw = &n.children[0];
                    let body = &n.children[1];
                    self.expect_alpha(path, "loop invariant", &body.conclusion.post, &t.pre);
                    self.expect_alpha(path, "guard Weaken precondition", &gw.conclusion.pre, &t.pre);
                    let want = Formula::and(
                        Formula::implies(Formula::not(Formula::BoolVar(BT.into())), t.post.clone()),
                        Formula::implies(Formula::BoolVar(BT.into()), body.conclusion.pre.clone()),
                    );
                    self.expect_alpha(path, "guard postcondition", &gw.conclusion.post, &want);
                    if gw.rule != RuleTag::Weaken {
                        self.fail(path, "guard hypothesis must be a Weaken".into());
                    }
                }
            }
            (RuleTag::VsIf, GimpTerm::IfThenElse(..)) => {
                if arity(self, 3) {
                    let (b_loop, ys, zs) = match &n.aux {
                        RuleAux::VsIf { b_loop, y, z } => (b_loop.clone(), y.clone(), z.clone()),
                        _ => {
                            self.fail(path, "VS-If node missing aux data".into());
                            return;
                        }
                    };
                    let g = &n.children[0];
                    let th = &n.children[1];
                    let el = &n.children[2];
                    let ymap: YMap = ys.iter().cloned().collect();
                    match t_transform(&t.post, &b_loop, &ymap) {
                        Ok(tq) => {
                            self.expect_alpha(path, "else postcondition T(Q)", &el.conclusion.post, &tq)
                        }
                        Err(e) => self.fail(path, format!("T transformation failed: {e}")),
                    }
                    let mut then_want = el.conclusion.pre.clone();
                    for (x, z) in &zs {
                        then_want = rename(&then_want, x, z, VarSort::VecInt);
                    }
                    for (x, y) in &ys {
                        then_want = rename(&then_want, y, x, VarSort::VecInt);
                    }
                    self.expect_alpha(path, "then postcondition", &th.conclusion.post, &then_want);
                    let mut p1_back = th.conclusion.pre.clone();
                    for (x, z) in &zs {
                        p1_back = rename(&p1_back, z, x, VarSort::VecInt);
                    }
                    let snap = Formula::forall(
                        "i",
                        VarSort::Idx,
                        Formula::iff(
                            Formula::bool_elem(&b_loop, Term::var("i")),
                            Formula::bool_elem(BT, Term::var("i")),
                        ),
                    );
                    let want = Formula::implies(snap, p1_back);
                    self.expect_alpha(path, "guard postcondition", &g.conclusion.post, &want);
                    self.expect_alpha(path, "VS-If precondition", &t.pre, &g.conclusion.pre);
                }
            }
            (RuleTag::VsWhile, GimpTerm::While(b, body)) => {
                if arity(self, 2) {
                    let b_fresh = match &n.aux {
                        RuleAux::VsWhile { b_fresh } => b_fresh.clone(),
                        _ => {
                            self.fail(path, "VS-While node missing aux data".into());
                            return;
                        }
                    };
                    let g = &n.children[0];
                    let bw = &n.children[1];
                    let all_false = Formula::forall(
                        "i",
                        VarSort::Idx,
                        Formula::not(Formula::bool_elem(BT, Term::var("i"))),
                    );
                    self.expect_alpha(path, "guard postcondition", &g.conclusion.post, &all_false);
                    let ite = GimpTerm::ite(*b.clone(), *body.clone(), GimpTerm::Skip);
                    if bw.conclusion.program != ite {
                        self.fail(path, "body hypothesis is not the skip-wrapped conditional".into());
                    }
                    self.expect_alpha(path, "body invariant pre", &bw.conclusion.pre, &t.pre);
                    self.expect_alpha(path, "body invariant post", &bw.conclusion.post, &t.pre);
                    let p_renamed = rename(&g.conclusion.pre, BT, &b_fresh, VarSort::VecBool);
                    let want = Formula::conj(vec![t.pre.clone(), p_renamed, all_false]);
                    self.expect_alpha(path, "VS-While postcondition", &t.post, &want);
                }
            }
            (RuleTag::GrmDisj, GimpTerm::NonterminalRef(name)) => {
                self.check_disjunction(n, path, name, &t.post, false);
            }
            (RuleTag::Hp, GimpTerm::NonterminalRef(name)) => {
                self.check_disjunction(n, path, name, &t.post, true);
            }
            (RuleTag::ApplyHp, GimpTerm::NonterminalRef(name)) => {
                if arity(self, 0) {
                    let found = n.context.get(name).map(|triple| {
                        alpha_eq(&triple.pre, &t.pre) && alpha_eq(&triple.post, &t.post)
                    });
                    if found != Some(true) {
                        self.fail(path, format!("ApplyHP cites no context triple for `{name}`"));
                    }
                }
            }
            (RuleTag::Adapt, GimpTerm::NonterminalRef(_)) => {
                if arity(self, 1) {
                    let c = &n.children[0];
                    let (xy, zx) = match &n.aux {
                        RuleAux::Adapt { xy, zx } => (xy.clone(), zx.clone()),
                        _ => {
                            self.fail(path, "Adapt node missing aux data".into());
                            return;
                        }
                    };
                    if c.conclusion.program != t.program {
                        self.fail(path, "Adapt hypothesis is over a different program".into());
                    }
                    let want = build_adapt_pre(&c.conclusion.post, &t.post, &xy, &zx);
                    self.expect_alpha(path, "Adapt precondition", &t.pre, &want);
                }
            }
            (RuleTag::Weaken, _) => {
                if arity(self, 1) {
                    let c = &n.children[0];
                    if c.conclusion.program != t.program {
                        self.fail(path, "Weaken hypothesis is over a different program".into());
                    }
                    let pre_same = alpha_eq(&c.conclusion.pre, &t.pre);
                    let post_same = alpha_eq(&c.conclusion.post, &t.post);
                    if !pre_same && !post_same {
                        self.fail(
                            path,
                            "Weaken changes both precondition and postcondition".into(),
                        );
                    }
                }
            }
            (rule, prog) => {
                self.fail(path, format!("rule {rule} does not match program `{prog}`"));
            }
        }
    }

    fn check_binary(&mut self, n: &SkeletonNode, path: &str, kind: BinKind) {
        if n.children.len() != 2 {
            self.fail(path, format!("expected 2 children, found {}", n.children.len()));
            return;
        }
        let x1 = match &n.aux {
            RuleAux::BinVar(x) => x.clone(),
            _ => {
                self.fail(path, "binary node missing intermediate variable".into());
                return;
            }
        };
        let t = &n.conclusion;
        let l = &n.children[0];
        let r = &n.children[1];
        let right_want = match kind {
            BinKind::Plus => self.subst_et(
                &t.post,
                Term::add(Term::var(&x1), Term::var(ET)),
                Term::add(Term::elem(&x1, Term::var("%i")), Term::elem(ET, Term::var("%i"))),
            ),
            BinKind::And => self.subst_bt(
                &t.post,
                Formula::and(Formula::BoolVar(x1.clone()), Formula::BoolVar(BT.into())),
                Formula::and(
                    Formula::bool_elem(&x1, Term::var("%i")),
                    Formula::bool_elem(BT, Term::var("%i")),
                ),
            ),
            BinKind::Comp(op) => {
                let mk = |a: Term, b: Term| match op {
                    CompOp::Lt => Formula::lt(a, b),
                    CompOp::Eq => Formula::eq(a, b),
                };
                self.subst_bt(
                    &t.post,
                    mk(Term::var(&x1), Term::var(ET)),
                    mk(Term::elem(&x1, Term::var("%i")), Term::elem(ET, Term::var("%i"))),
                )
            }
        };
        self.expect_alpha(path, "right hypothesis postcondition", &r.conclusion.post, &right_want);
        let left_want = match kind {
            BinKind::And => {
                if self.vectored() {
                    crate::logic::substitute(
                        &r.conclusion.pre,
                        &Subst::VecBool {
                            vec: x1.clone(),
                            idx: "%i".into(),
                            body: Formula::bool_elem(BT, Term::var("%i")),
                        },
                    )
                } else {
                    crate::logic::substitute(
                        &r.conclusion.pre,
                        &Subst::BoolVar(x1.clone(), Formula::BoolVar(BT.into())),
                    )
                }
            }
            _ => self.subst_int_var(
                &r.conclusion.pre,
                &x1,
                Term::var(ET),
                Term::elem(ET, Term::var("%i")),
            ),
        };
        self.expect_alpha(path, "left hypothesis postcondition", &l.conclusion.post, &left_want);
        self.expect_alpha(path, "binary precondition", &t.pre, &l.conclusion.pre);
    }

    fn check_disjunction(
        &mut self,
        n: &SkeletonNode,
        path: &str,
        name: &str,
        post: &Formula,
        is_hp: bool,
    ) {
        let prods = match self.g.productions(name) {
            Ok(p) => p.to_vec(),
            Err(e) => {
                self.fail(path, e.to_string());
                return;
            }
        };
        if n.children.len() != prods.len() {
            self.fail(
                path,
                format!("expected {} production children, found {}", prods.len(), n.children.len()),
            );
            return;
        }
        for (i, (c, rhs)) in n.children.iter().zip(&prods).enumerate() {
            if &c.conclusion.program != rhs {
                self.fail(
                    &child_path(path, c, i),
                    format!("child program `{}` is not production `{rhs}`", c.conclusion.program),
                );
            }
            self.expect_alpha(
                &child_path(path, c, i),
                "production postcondition",
                &c.conclusion.post,
                post,
            );
        }
        let want_pre = Formula::conj(n.children.iter().map(|c| c.conclusion.pre.clone()));
        self.expect_alpha(path, "disjunction precondition", &n.conclusion.pre, &want_pre);
        if is_hp {
            // Children assume the introduced inductive fact.
            for (i, c) in n.children.iter().enumerate() {
                let extended = match c.context.triples().last() {
                    Some(last) if last.nonterminal == name => {
                        let mut base = c.context.triples().to_vec();
                        base.pop();
                        Context { triples: base } == n.context
                            && alpha_eq(&last.post, post)
                    }
                    _ => false,
                };
                if !extended {
                    self.fail(
                        &child_path(path, c, i),
                        "HP child context does not extend the parent with the inductive fact"
                            .into(),
                    );
                }
            }
        }
    }
}

enum BinKind {
    Plus,
    And,
    Comp(CompOp),
}

fn rename(f: &Formula, from: &str, to: &str, sort: VarSort) -> Formula {
    let s = match sort {
        VarSort::Int | VarSort::Idx => Subst::IntVar(from.into(), Term::var(to)),
        VarSort::Bool => Subst::BoolVar(from.into(), Formula::BoolVar(to.into())),
        VarSort::VecInt => Subst::vec_rename_int(from, to),
        VarSort::VecBool => Subst::vec_rename_bool(from, to),
    };
    crate::logic::substitute(f, &s)
}

// ---------------------------------------------------------------------------
// Rendering

/// Deterministic, indentation-based rendering: one node per line with rule
/// tag, precondition, program, and postcondition.
pub fn render_skeleton(skel: &Skeleton) -> String {
    let mut out = String::new();
    fn walk(n: &SkeletonNode, depth: usize, out: &mut String) {
        let indent = "  ".repeat(depth);
        out.push_str(&format!(
            "{indent}{} {{|{}|}} {} {{|{}|}}\n",
            n.rule,
            crate::logic::print_formula(&n.conclusion.pre),
            n.conclusion.program,
            crate::logic::print_formula(&n.conclusion.post),
        ));
        for c in &n.children {
            walk(c, depth + 1, out);
        }
    }
    walk(&skel.root, 0, &mut out);
    out
}
