//! Built-in validity engine for linear integer arithmetic with quantifiers
//! (Presburger arithmetic), used when no external SMT solver is configured.
//! Quantifier elimination is Cooper's method; div/mod with constant divisors
//! are lowered to divisibility constraints before elimination.

use std::collections::BTreeMap;

use indexmap::IndexSet;
use thiserror::Error;

use crate::logic::{Binder, Formula, Quant, Term, VarSort};

#[derive(Debug, Error)]
pub enum PresburgerError {
    #[error("formula outside the decidable fragment: {0}")]
    OutOfFragment(String),
    #[error("formula too large after elimination ({0} nodes)")]
    Blowup(usize),
    #[error("arithmetic overflow during elimination")]
    Overflow,
}

const NODE_LIMIT: usize = 2_000_000;

/// A linear combination with i128 coefficients: sum of coeff*var + constant.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct Lin {
    coeffs: BTreeMap<String, i128>,
    konst: i128,
}

impl Lin {
    fn constant(c: i128) -> Lin {
        Lin { coeffs: BTreeMap::new(), konst: c }
    }

    fn var(x: &str) -> Lin {
        let mut coeffs = BTreeMap::new();
        coeffs.insert(x.to_string(), 1);
        Lin { coeffs, konst: 0 }
    }

    fn add(&self, other: &Lin) -> Result<Lin, PresburgerError> {
        let mut out = self.clone();
        for (v, c) in &other.coeffs {
            let e = out.coeffs.entry(v.clone()).or_insert(0);
            *e = e.checked_add(*c).ok_or(PresburgerError::Overflow)?;
            if *e == 0 {
                out.coeffs.remove(v);
            }
        }
        out.konst = out.konst.checked_add(other.konst).ok_or(PresburgerError::Overflow)?;
        Ok(out)
    }

    fn scale(&self, m: i128) -> Result<Lin, PresburgerError> {
        if m == 0 {
            return Ok(Lin::constant(0));
        }
        let mut out = Lin::constant(self.konst.checked_mul(m).ok_or(PresburgerError::Overflow)?);
        for (v, c) in &self.coeffs {
            out.coeffs
                .insert(v.clone(), c.checked_mul(m).ok_or(PresburgerError::Overflow)?);
        }
        Ok(out)
    }

    fn coeff_of(&self, x: &str) -> i128 {
        self.coeffs.get(x).copied().unwrap_or(0)
    }

    fn without(&self, x: &str) -> Lin {
        let mut out = self.clone();
        out.coeffs.remove(x);
        out
    }

    fn is_const(&self) -> Option<i128> {
        if self.coeffs.is_empty() {
            Some(self.konst)
        } else {
            None
        }
    }

    /// Substitute x by a linear term.
    fn subst(&self, x: &str, rep: &Lin) -> Result<Lin, PresburgerError> {
        let c = self.coeff_of(x);
        if c == 0 {
            return Ok(self.clone());
        }
        self.without(x).add(&rep.scale(c)?)
    }
}

/// NNF formula over linear atoms. `Lt(l)` is l < 0, `Eq(l)` is l = 0,
/// `Ne(l)` is l != 0, `Dvd(d, l)` is d | l, `Ndvd` its negation.
#[derive(Debug, Clone, PartialEq, Eq)]
enum P {
    Top,
    Bot,
    Lt(Lin),
    Eq(Lin),
    Ne(Lin),
    Dvd(i128, Lin),
    Ndvd(i128, Lin),
    And(Vec<P>),
    Or(Vec<P>),
}

impl P {
    fn size(&self) -> usize {
        match self {
            P::And(xs) | P::Or(xs) => 1 + xs.iter().map(P::size).sum::<usize>(),
            _ => 1,
        }
    }

    fn negate(&self) -> P {
        match self {
            P::Top => P::Bot,
            P::Bot => P::Top,
            // not(l < 0)  ==  -l - 1 < 0  (i.e. l >= 0)
            P::Lt(l) => match l.scale(-1).and_then(|m| m.add(&Lin::constant(-1))) {
                Ok(m) => P::Lt(m),
                Err(_) => P::Bot, // unreachable at sane sizes
            },
            P::Eq(l) => P::Ne(l.clone()),
            P::Ne(l) => P::Eq(l.clone()),
            P::Dvd(d, l) => P::Ndvd(*d, l.clone()),
            P::Ndvd(d, l) => P::Dvd(*d, l.clone()),
            P::And(xs) => P::Or(xs.iter().map(P::negate).collect()),
            P::Or(xs) => P::And(xs.iter().map(P::negate).collect()),
        }
    }

    fn and(xs: Vec<P>) -> P {
        let mut out = Vec::new();
        for x in xs {
            match x {
                P::Top => {}
                P::Bot => return P::Bot,
                P::And(ys) => out.extend(ys),
                other => out.push(other),
            }
        }
        match out.len() {
            0 => P::Top,
            1 => out.pop().unwrap(),
            _ => P::And(out),
        }
    }

    fn or(xs: Vec<P>) -> P {
        let mut out = Vec::new();
        for x in xs {
            match x {
                P::Bot => {}
                P::Top => return P::Top,
                P::Or(ys) => out.extend(ys),
                other => out.push(other),
            }
        }
        match out.len() {
            0 => P::Bot,
            1 => out.pop().unwrap(),
            _ => P::Or(out),
        }
    }

    /// Fold ground atoms.
    fn simplify(self) -> P {
        match self {
            P::Lt(l) => match l.is_const() {
                Some(c) => {
                    if c < 0 {
                        P::Top
                    } else {
                        P::Bot
                    }
                }
                None => P::Lt(l),
            },
            P::Eq(l) => match l.is_const() {
                Some(c) => {
                    if c == 0 {
                        P::Top
                    } else {
                        P::Bot
                    }
                }
                None => P::Eq(l),
            },
            P::Ne(l) => match l.is_const() {
                Some(c) => {
                    if c != 0 {
                        P::Top
                    } else {
                        P::Bot
                    }
                }
                None => P::Ne(l),
            },
            P::Dvd(d, l) => match l.is_const() {
                Some(c) => {
                    if c.rem_euclid(d) == 0 {
                        P::Top
                    } else {
                        P::Bot
                    }
                }
                None => P::Dvd(d, l),
            },
            P::Ndvd(d, l) => match l.is_const() {
                Some(c) => {
                    if c.rem_euclid(d) != 0 {
                        P::Top
                    } else {
                        P::Bot
                    }
                }
                None => P::Ndvd(d, l),
            },
            P::And(xs) => P::and(xs.into_iter().map(P::simplify).collect()),
            P::Or(xs) => P::or(xs.into_iter().map(P::simplify).collect()),
            other => other,
        }
    }

    fn subst(&self, x: &str, rep: &Lin) -> Result<P, PresburgerError> {
        Ok(match self {
            P::Lt(l) => P::Lt(l.subst(x, rep)?),
            P::Eq(l) => P::Eq(l.subst(x, rep)?),
            P::Ne(l) => P::Ne(l.subst(x, rep)?),
            P::Dvd(d, l) => P::Dvd(*d, l.subst(x, rep)?),
            P::Ndvd(d, l) => P::Ndvd(*d, l.subst(x, rep)?),
            P::And(xs) => {
                P::and(xs.iter().map(|f| f.subst(x, rep)).collect::<Result<Vec<_>, _>>()?)
            }
            P::Or(xs) => {
                P::or(xs.iter().map(|f| f.subst(x, rep)).collect::<Result<Vec<_>, _>>()?)
            }
            other => other.clone(),
        }
        .simplify())
    }

    fn mentions(&self, x: &str) -> bool {
        match self {
            P::Lt(l) | P::Eq(l) | P::Ne(l) | P::Dvd(_, l) | P::Ndvd(_, l) => l.coeff_of(x) != 0,
            P::And(xs) | P::Or(xs) => xs.iter().any(|f| f.mentions(x)),
            _ => false,
        }
    }
}

fn gcd(a: i128, b: i128) -> i128 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

fn lcm(a: i128, b: i128) -> Result<i128, PresburgerError> {
    if a == 0 || b == 0 {
        return Ok(0);
    }
    (a / gcd(a, b)).checked_mul(b).map(i128::abs).ok_or(PresburgerError::Overflow)
}

// ---------------------------------------------------------------------------
// Lowering from the logic AST

/// Fresh-variable source for div/mod lowering.
struct Gensym {
    n: u64,
}

impl Gensym {
    fn next(&mut self, base: &str) -> String {
        self.n += 1;
        format!("%{base}{}", self.n)
    }
}

/// Convert a term to a linear form; div/mod subterms become fresh variables
/// whose defining constraints are pushed onto `defs` (existentially
/// quantified around the enclosing atom; the definition is functional, so
/// the polarity of the atom does not matter).
fn lower_term(
    t: &Term,
    defs: &mut Vec<(String, P)>,
    gensym: &mut Gensym,
) -> Result<Lin, PresburgerError> {
    Ok(match t {
        Term::Int(n) => Lin::constant(*n as i128),
        Term::Var(x) => Lin::var(x),
        Term::VecElem(_, _) => {
            return Err(PresburgerError::OutOfFragment(
                "vector element (ground vectors first)".into(),
            ))
        }
        Term::Add(a, b) => lower_term(a, defs, gensym)?.add(&lower_term(b, defs, gensym)?)?,
        Term::Mul(c, a) => lower_term(a, defs, gensym)?.scale(*c as i128)?,
        Term::Div(a, d) => {
            // q = a div d  <=>  exists r. a = d*q + r  /\  0 <= r < d
            let la = lower_term(a, defs, gensym)?;
            let q = gensym.next("q");
            let r = gensym.next("r");
            let d = *d as i128;
            let def = P::and(vec![
                // a - d*q - r = 0
                P::Eq(la
                    .add(&Lin::var(&q).scale(-d)?)?
                    .add(&Lin::var(&r).scale(-1)?)?),
                // -r - 1 < 0  (r >= 0)
                P::Lt(Lin::var(&r).scale(-1)?.add(&Lin::constant(-1))?),
                // r - d < 0
                P::Lt(Lin::var(&r).add(&Lin::constant(-d))?),
            ]);
            defs.push((r, P::Top));
            defs.push((q, def));
            Lin::var(defs.last().map(|(v, _)| v.as_str()).unwrap())
        }
        Term::Mod(a, d) => {
            // r = a mod d  <=>  exists q. a = d*q + r  /\  0 <= r < d
            let la = lower_term(a, defs, gensym)?;
            let q = gensym.next("q");
            let r = gensym.next("r");
            let d = *d as i128;
            let def = P::and(vec![
                P::Eq(la
                    .add(&Lin::var(&q).scale(-d)?)?
                    .add(&Lin::var(&r).scale(-1)?)?),
                P::Lt(Lin::var(&r).scale(-1)?.add(&Lin::constant(-1))?),
                P::Lt(Lin::var(&r).add(&Lin::constant(-d))?),
            ]);
            defs.push((q, P::Top));
            defs.push((r, def));
            Lin::var(defs.last().map(|(v, _)| v.as_str()).unwrap())
        }
        Term::FunApp(f, _) => {
            return Err(PresburgerError::OutOfFragment(format!(
                "uninterpreted function `{f}`"
            )))
        }
    })
}

/// Wrap an atom's div/mod definitions in existential eliminations.
fn close_defs(atom: P, defs: Vec<(String, P)>) -> Result<P, PresburgerError> {
    let mut body = atom;
    // Conjoin the defining constraints, then eliminate each fresh variable.
    let mut all = vec![body];
    for (_, d) in &defs {
        all.push(d.clone());
    }
    body = P::and(all);
    for (v, _) in defs.iter().rev() {
        body = cooper_exists(v, body)?;
    }
    Ok(body)
}

fn lower_atom<F>(mk: F, a: &Term, b: &Term) -> Result<P, PresburgerError>
where
    F: Fn(Lin) -> P,
{
    let mut defs = Vec::new();
    let mut gensym = Gensym { n: 0 };
    let la = lower_term(a, &mut defs, &mut gensym)?;
    let lb = lower_term(b, &mut defs, &mut gensym)?;
    let diff = la.add(&lb.scale(-1)?)?;
    close_defs(mk(diff).simplify(), defs)
}

/// Recursive elimination: booleans are expanded, integer quantifiers run
/// through Cooper's procedure innermost-first.
fn eliminate(f: &Formula) -> Result<P, PresburgerError> {
    Ok(match f {
        Formula::True => P::Top,
        Formula::False => P::Bot,
        Formula::BoolVar(x) => {
            return Err(PresburgerError::OutOfFragment(format!(
                "free boolean `{x}` (expand booleans first)"
            )))
        }
        Formula::BoolVecElem(x, _) => {
            return Err(PresburgerError::OutOfFragment(format!("vector boolean `{x}`")))
        }
        Formula::Lt(a, b) => lower_atom(P::Lt, a, b)?,
        Formula::Eq(a, b) => lower_atom(P::Eq, a, b)?,
        Formula::Not(a) => eliminate(a)?.negate(),
        Formula::And(a, b) => P::and(vec![eliminate(a)?, eliminate(b)?]),
        Formula::Or(a, b) => P::or(vec![eliminate(a)?, eliminate(b)?]),
        Formula::Implies(a, b) => P::or(vec![eliminate(a)?.negate(), eliminate(b)?]),
        Formula::Iff(a, b) => {
            let pa = eliminate(a)?;
            let pb = eliminate(b)?;
            P::or(vec![
                P::and(vec![pa.clone(), pb.clone()]),
                P::and(vec![pa.negate(), pb.negate()]),
            ])
        }
        Formula::Quantified(q, Binder { name, sort }, body) => match sort {
            VarSort::Bool => {
                let t = crate::logic::substitute(
                    body,
                    &crate::logic::Subst::BoolVar(name.clone(), Formula::True),
                );
                let fl = crate::logic::substitute(
                    body,
                    &crate::logic::Subst::BoolVar(name.clone(), Formula::False),
                );
                let pt = eliminate(&t)?;
                let pf = eliminate(&fl)?;
                match q {
                    Quant::Forall => P::and(vec![pt, pf]),
                    Quant::Exists => P::or(vec![pt, pf]),
                }
            }
            VarSort::Int => {
                let inner = eliminate(body)?;
                match q {
                    Quant::Exists => cooper_exists(name, inner)?,
                    Quant::Forall => cooper_exists(name, inner.negate())?.negate(),
                }
            }
            other => {
                return Err(PresburgerError::OutOfFragment(format!(
                    "quantifier over {other} (ground vectors/indices first)"
                )))
            }
        },
        Formula::ParamApp(p, _) => {
            return Err(PresburgerError::OutOfFragment(format!("parameter `{p}`")))
        }
    }
    .simplify())
}

/// Cooper elimination of `exists x. phi` with `phi` quantifier-free.
fn cooper_exists(x: &str, phi: P) -> Result<P, PresburgerError> {
    let phi = phi.simplify();
    if !phi.mentions(x) {
        return Ok(phi);
    }
    if phi.size() > NODE_LIMIT {
        return Err(PresburgerError::Blowup(phi.size()));
    }
    // Step 1: collect the lcm of |coefficients| of x.
    let mut delta: i128 = 1;
    collect_coeff_lcm(&phi, x, &mut delta)?;
    // Step 2: scale every atom so x's coefficient is ±delta, then replace
    // delta*x by a unit variable (same name; semantics shift), adding the
    // divisibility delta | x.
    let scaled = scale_to_unit(&phi, x, delta)?;
    let with_div = if delta == 1 {
        scaled
    } else {
        P::and(vec![scaled, P::Dvd(delta, Lin::var(x))])
    };
    // Step 3: D = lcm of divisibility moduli involving x.
    let mut d_lcm: i128 = 1;
    collect_dvd_lcm(&with_div, x, &mut d_lcm)?;
    // Step 4: minus-infinity disjunct and boundary set.
    let minus_inf = minus_infinity(&with_div, x);
    let bset = b_set(&with_div, x)?;
    let mut disjuncts = Vec::new();
    for j in 1..=d_lcm {
        let inst = minus_inf.subst(x, &Lin::constant(j))?;
        disjuncts.push(inst);
    }
    for b in &bset {
        for j in 1..=d_lcm {
            let rep = b.add(&Lin::constant(j))?;
            disjuncts.push(with_div.subst(x, &rep)?);
        }
    }
    let out = P::or(disjuncts).simplify();
    if out.size() > NODE_LIMIT {
        return Err(PresburgerError::Blowup(out.size()));
    }
    Ok(out)
}

fn collect_coeff_lcm(p: &P, x: &str, acc: &mut i128) -> Result<(), PresburgerError> {
    match p {
        P::Lt(l) | P::Eq(l) | P::Ne(l) | P::Dvd(_, l) | P::Ndvd(_, l) => {
            let c = l.coeff_of(x);
            if c != 0 {
                *acc = lcm(*acc, c)?;
            }
            Ok(())
        }
        P::And(xs) | P::Or(xs) => {
            for f in xs {
                collect_coeff_lcm(f, x, acc)?;
            }
            Ok(())
        }
        _ => Ok(()),
    }
}

/// Normalize so that x occurs with coefficient exactly +1 (reading the atom
/// over the rescaled variable delta*x).
fn scale_to_unit(p: &P, x: &str, delta: i128) -> Result<P, PresburgerError> {
    Ok(match p {
        P::Lt(l) => {
            let c = l.coeff_of(x);
            if c == 0 {
                P::Lt(l.clone())
            } else {
                let m = delta / c.abs();
                let scaled = l.scale(m)?; // coefficient is ±delta
                let c2 = scaled.coeff_of(x);
                let mut rest = scaled.without(x);
                if c2 > 0 {
                    // delta*x + rest < 0  ->  u + rest < 0
                    rest.coeffs.insert(x.to_string(), 1);
                    P::Lt(rest)
                } else {
                    // -delta*x + rest < 0 -> -u + rest < 0
                    rest.coeffs.insert(x.to_string(), -1);
                    P::Lt(rest)
                }
            }
        }
        P::Eq(l) | P::Ne(l) => {
            let c = l.coeff_of(x);
            let is_eq = matches!(p, P::Eq(_));
            if c == 0 {
                return Ok(p.clone());
            }
            let m = delta / c.abs();
            let scaled = l.scale(m)?;
            // (Dis)equalities are invariant under negating both sides, so
            // normalize the unit coefficient to +1.
            let mut rest = if scaled.coeff_of(x) < 0 {
                scaled.without(x).scale(-1)?
            } else {
                scaled.without(x)
            };
            rest.coeffs.insert(x.to_string(), 1);
            if is_eq {
                P::Eq(rest)
            } else {
                P::Ne(rest)
            }
        }
        P::Dvd(d, l) | P::Ndvd(d, l) => {
            let c = l.coeff_of(x);
            if c == 0 {
                return Ok(p.clone());
            }
            let m = delta / c.abs();
            let mut scaled = l.scale(m)?;
            let d2 = d.checked_mul(m.abs()).ok_or(PresburgerError::Overflow)?;
            let c2 = scaled.coeff_of(x);
            if c2 < 0 {
                // d | -u + t  <=>  d | u - t
                scaled = scaled.scale(-1)?;
            }
            let mut rest = scaled.without(x);
            rest.coeffs.insert(x.to_string(), 1);
            if matches!(p, P::Dvd(..)) {
                P::Dvd(d2, rest)
            } else {
                P::Ndvd(d2, rest)
            }
        }
        P::And(xs) => P::and(
            xs.iter().map(|f| scale_to_unit(f, x, delta)).collect::<Result<Vec<_>, _>>()?,
        ),
        P::Or(xs) => P::or(
            xs.iter().map(|f| scale_to_unit(f, x, delta)).collect::<Result<Vec<_>, _>>()?,
        ),
        other => other.clone(),
    })
}

fn collect_dvd_lcm(p: &P, x: &str, acc: &mut i128) -> Result<(), PresburgerError> {
    match p {
        P::Dvd(d, l) | P::Ndvd(d, l) => {
            if l.coeff_of(x) != 0 {
                *acc = lcm(*acc, *d)?;
            }
            Ok(())
        }
        P::And(xs) | P::Or(xs) => {
            for f in xs {
                collect_dvd_lcm(f, x, acc)?;
            }
            Ok(())
        }
        _ => Ok(()),
    }
}

/// phi with x driven to -infinity: x + t < 0 holds, t - x < 0 fails,
/// equalities fail, inequalities hold; divisibilities remain.
fn minus_infinity(p: &P, x: &str) -> P {
    match p {
        P::Lt(l) => match l.coeff_of(x) {
            0 => p.clone(),
            c if c > 0 => P::Top,
            _ => P::Bot,
        },
        P::Eq(l) => {
            if l.coeff_of(x) != 0 {
                P::Bot
            } else {
                p.clone()
            }
        }
        P::Ne(l) => {
            if l.coeff_of(x) != 0 {
                P::Top
            } else {
                p.clone()
            }
        }
        P::And(xs) => P::and(xs.iter().map(|f| minus_infinity(f, x)).collect()),
        P::Or(xs) => P::or(xs.iter().map(|f| minus_infinity(f, x)).collect()),
        other => other.clone(),
    }
}

/// Boundary terms: whenever decreasing x crosses into truth, one of these
/// marks the edge. From t - x < 0 (t < x): t; from x = t: t - 1; from
/// x != t: t.
fn b_set(p: &P, x: &str) -> Result<Vec<Lin>, PresburgerError> {
    let mut out: Vec<Lin> = Vec::new();
    fn push(out: &mut Vec<Lin>, l: Lin) {
        if !out.contains(&l) {
            out.push(l);
        }
    }
    fn walk(p: &P, x: &str, out: &mut Vec<Lin>) -> Result<(), PresburgerError> {
        match p {
            P::Lt(l) => {
                // normalized: either x + t < 0 or -x + t < 0
                match l.coeff_of(x) {
                    0 => {}
                    c if c < 0 => {
                        // -x + t < 0  <=>  t < x: boundary at t
                        push(out, l.without(x));
                    }
                    _ => {}
                }
                Ok(())
            }
            P::Eq(l) => {
                if l.coeff_of(x) != 0 {
                    // x + t = 0  <=>  x = -t: boundary at -t - 1
                    push(out, l.without(x).scale(-1)?.add(&Lin::constant(-1))?);
                }
                Ok(())
            }
            P::Ne(l) => {
                if l.coeff_of(x) != 0 {
                    // x != -t: boundary at -t
                    push(out, l.without(x).scale(-1)?);
                }
                Ok(())
            }
            P::And(xs) | P::Or(xs) => {
                for f in xs {
                    walk(f, x, out)?;
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
    walk(p, x, &mut out)?;
    Ok(out)
}

// ---------------------------------------------------------------------------
// Public interface

/// Decide the truth of a closed formula (free variables, if any, are read as
/// universally quantified).
pub fn decide_closed(f: &Formula) -> Result<bool, PresburgerError> {
    let mut closed = f.clone();
    for (v, sort) in crate::logic::free_vars(f).into_iter().rev() {
        match sort {
            VarSort::Int | VarSort::Bool => {
                closed = Formula::Quantified(
                    Quant::Forall,
                    Binder { name: v, sort },
                    Box::new(closed),
                );
            }
            other => {
                return Err(PresburgerError::OutOfFragment(format!(
                    "free {other} variable `{v}`"
                )))
            }
        }
    }
    match eliminate(&closed)? {
        P::Top => Ok(true),
        P::Bot => Ok(false),
        other => Err(PresburgerError::OutOfFragment(format!(
            "residual formula after elimination ({} nodes)",
            other.size()
        ))),
    }
}

/// Search for a falsifying assignment of the universals of an invalid VC.
/// Radius-bounded box enumeration; the formula is already known invalid, so
/// this is diagnostics, not decision.
pub fn find_countermodel(
    universals: &[(String, VarSort)],
    body: &Formula,
    max_radius: i64,
) -> Option<Vec<(String, String)>> {
    let ints: Vec<&String> = universals
        .iter()
        .filter(|(_, s)| *s == VarSort::Int)
        .map(|(v, _)| v)
        .collect();
    let bools: Vec<&String> = universals
        .iter()
        .filter(|(_, s)| *s == VarSort::Bool)
        .map(|(v, _)| v)
        .collect();
    if ints.len() + bools.len() != universals.len() {
        return None;
    }
    for radius in 0..=max_radius {
        let mut assignment: Vec<i64> = vec![-radius; ints.len()];
        loop {
            for bool_bits in 0..(1u32 << bools.len().min(16)) {
                let mut inst = body.clone();
                for (i, v) in ints.iter().enumerate() {
                    inst = crate::logic::substitute(
                        &inst,
                        &crate::logic::Subst::IntVar((*v).clone(), Term::Int(assignment[i])),
                    );
                }
                for (i, v) in bools.iter().enumerate() {
                    let val = bool_bits & (1 << i) != 0;
                    inst = crate::logic::substitute(
                        &inst,
                        &crate::logic::Subst::BoolVar(
                            (*v).clone(),
                            if val { Formula::True } else { Formula::False },
                        ),
                    );
                }
                if matches!(decide_closed(&inst), Ok(false)) {
                    // All frees instantiated: the instance itself is false.
                    let mut model: Vec<(String, String)> = Vec::new();
                    for (i, v) in ints.iter().enumerate() {
                        model.push(((*v).clone(), assignment[i].to_string()));
                    }
                    for (i, v) in bools.iter().enumerate() {
                        model.push(((*v).clone(), (bool_bits & (1 << i) != 0).to_string()));
                    }
                    return Some(model);
                }
            }
            // Next point in the box; only surface points matter but the
            // volumes are tiny at desk scale.
            let mut i = 0;
            loop {
                if i == assignment.len() {
                    break;
                }
                assignment[i] += 1;
                if assignment[i] <= radius {
                    break;
                }
                assignment[i] = -radius;
                i += 1;
            }
            if i == assignment.len() {
                break;
            }
            if assignment.iter().all(|v| *v == -radius) {
                break;
            }
        }
        if ints.is_empty() {
            break;
        }
    }
    None
}

/// Free variables that block the engine (vectors, parameters, functions).
pub fn fragment_blockers(f: &Formula) -> IndexSet<String> {
    let mut out = IndexSet::new();
    for (v, sort) in crate::logic::free_vars(f) {
        if matches!(sort, VarSort::VecInt | VarSort::VecBool | VarSort::Idx) {
            out.insert(v);
        }
    }
    for p in crate::logic::param_names(f) {
        out.insert(p);
    }
    for g in crate::logic::fun_names(f) {
        out.insert(g);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::Formula as F;

    fn forall(v: &str, f: F) -> F {
        F::forall(v, VarSort::Int, f)
    }

    fn exists(v: &str, f: F) -> F {
        F::exists(v, VarSort::Int, f)
    }

    fn var(v: &str) -> Term {
        Term::var(v)
    }

    #[test]
    fn ground_facts() {
        assert_eq!(decide_closed(&F::eq(Term::Int(2), Term::Int(2))).unwrap(), true);
        assert_eq!(decide_closed(&F::lt(Term::Int(3), Term::Int(2))).unwrap(), false);
        assert_eq!(
            decide_closed(&F::eq(Term::modulo(Term::Int(2), 2), Term::Int(0))).unwrap(),
            true
        );
        assert_eq!(
            decide_closed(&F::eq(Term::modulo(Term::Int(-7), 3), Term::Int(2))).unwrap(),
            true
        );
        assert_eq!(
            decide_closed(&F::eq(Term::Div(Box::new(Term::Int(-7)), 3), Term::Int(-3))).unwrap(),
            true
        );
    }

    #[test]
    fn simple_quantified() {
        // forall x. x < x + 1
        let f = forall("x", F::lt(var("x"), Term::add(var("x"), Term::Int(1))));
        assert_eq!(decide_closed(&f).unwrap(), true);
        // exists x. x + x = 5 is false over the integers
        let f = exists("x", F::eq(Term::add(var("x"), var("x")), Term::Int(5)));
        assert_eq!(decide_closed(&f).unwrap(), false);
        // exists x. x + x = 6
        let f = exists("x", F::eq(Term::add(var("x"), var("x")), Term::Int(6)));
        assert_eq!(decide_closed(&f).unwrap(), true);
    }

    #[test]
    fn divisibility_and_parity() {
        // forall x. (x mod 2 = 0) -> ((x+2) mod 2 = 0)
        let f = forall(
            "x",
            F::implies(
                F::eq(Term::modulo(var("x"), 2), Term::Int(0)),
                F::eq(Term::modulo(Term::add(var("x"), Term::Int(2)), 2), Term::Int(0)),
            ),
        );
        assert_eq!(decide_closed(&f).unwrap(), true);
        // forall x. (x mod 2 = 0) -> x != 3
        let f = forall(
            "x",
            F::implies(
                F::eq(Term::modulo(var("x"), 2), Term::Int(0)),
                F::neq(var("x"), Term::Int(3)),
            ),
        );
        assert_eq!(decide_closed(&f).unwrap(), true);
        // forall x. (x mod 2 = 0) -> x != 4 is false
        let f = forall(
            "x",
            F::implies(
                F::eq(Term::modulo(var("x"), 2), Term::Int(0)),
                F::neq(var("x"), Term::Int(4)),
            ),
        );
        assert_eq!(decide_closed(&f).unwrap(), false);
    }

    #[test]
    fn alternating_quantifiers() {
        // forall x. exists y. y = x + 1
        let f = forall("x", exists("y", F::eq(var("y"), Term::add(var("x"), Term::Int(1)))));
        assert_eq!(decide_closed(&f).unwrap(), true);
        // exists y. forall x. x < y is false
        let f = exists("y", forall("x", F::lt(var("x"), var("y"))));
        assert_eq!(decide_closed(&f).unwrap(), false);
    }

    #[test]
    fn coefficient_scaling() {
        // forall x. 3x != 1  (no integer solution)
        let f = forall("x", F::neq(Term::Mul(3, Box::new(var("x"))), Term::Int(1)));
        assert_eq!(decide_closed(&f).unwrap(), true);
        // exists x. 3x = 6
        let f = exists("x", F::eq(Term::Mul(3, Box::new(var("x"))), Term::Int(6)));
        assert_eq!(decide_closed(&f).unwrap(), true);
        // exists x. 2x = 7 is false
        let f = exists("x", F::eq(Term::Mul(2, Box::new(var("x"))), Term::Int(7)));
        assert_eq!(decide_closed(&f).unwrap(), false);
    }

    #[test]
    fn booleans_expand() {
        let f = F::forall(
            "b",
            VarSort::Bool,
            F::or(Formula::BoolVar("b".into()), F::not(Formula::BoolVar("b".into()))),
        );
        assert_eq!(decide_closed(&f).unwrap(), true);
    }

    #[test]
    fn free_vars_read_universally() {
        let f = F::implies(
            F::eq(Term::modulo(var("a"), 2), Term::Int(0)),
            F::neq(var("a"), Term::Int(3)),
        );
        assert_eq!(decide_closed(&f).unwrap(), true);
    }

    #[test]
    fn countermodel_search_finds_witness() {
        // a mod 2 = 0 -> a != 4: falsified at a = 4.
        let body = F::implies(
            F::eq(Term::modulo(var("a"), 2), Term::Int(0)),
            F::neq(var("a"), Term::Int(4)),
        );
        let model =
            find_countermodel(&[("a".into(), VarSort::Int)], &body, 8).expect("model");
        assert_eq!(model, vec![("a".to_string(), "4".to_string())]);
    }

    #[test]
    fn agreement_with_brute_force_on_random_formulas() {
        // Small random quantifier-free formulas over two variables, compared
        // against exhaustive evaluation on a box that is wide enough for
        // these shapes.
        use crate::oracle::{eval_formula, EvalCtx, State, Value};
        let mut seed = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            seed ^= seed << 13;
            seed ^= seed >> 7;
            seed ^= seed << 17;
            seed
        };
        for _ in 0..60 {
            let c1 = (next() % 7) as i64 - 3;
            let c2 = (next() % 7) as i64 - 3;
            let m = 2 + (next() % 3) as i64;
            let atom1 = F::lt(Term::add(var("x"), Term::Int(c1)), var("y"));
            let atom2 = F::eq(Term::modulo(Term::add(var("x"), Term::Int(c2)), m), Term::Int(0));
            let body = match next() % 4 {
                0 => F::and(atom1, atom2),
                1 => F::or(atom1, atom2),
                2 => F::implies(atom1, atom2),
                _ => F::not(atom1),
            };
            let f = forall("x", forall("y", body.clone()));
            // Brute force over a window; quantified shapes here are periodic
            // with period dividing 6 and offsets within ±4, so ±12 decides.
            let mut brute = true;
            'outer: for x in -12..=12 {
                for y in -12..=12 {
                    let mut st = State::new();
                    st.insert("x".into(), Value::Int(x));
                    st.insert("y".into(), Value::Int(y));
                    let ctx = EvalCtx::scalar((-12, 12));
                    if !eval_formula(&body, &st, &ctx).unwrap() {
                        brute = false;
                        break 'outer;
                    }
                }
            }
            let got = decide_closed(&f).unwrap();
            // decide_closed answers over all integers; brute force over the
            // window: validity implies window-validity.
            if got {
                assert!(brute, "engine says valid, brute force found a counterexample");
            }
        }
    }
}
