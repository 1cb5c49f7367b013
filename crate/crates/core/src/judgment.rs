//! Entailment between facts and interpretations, the abstract
//! satisfiability judgment that drives the fixpoint, and a concrete
//! judgment over denotations used as a reference in tests.

use std::collections::{BTreeSet, HashSet};
use std::ops::ControlFlow;

use crate::kernel::{canonicalize, sym, Atom, Eigen, Fact, Session, Substitution, Term, Var};
use crate::syntax::Goal;
use crate::unify::{injections, match_state_to_subst, subst_lub, Coverage, Matching, Unifying};

/// A set of canonical facts. After `engine::reduce` no element entails
/// another.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Interpretation {
    facts: Vec<Fact>,
}

impl Interpretation {
    pub fn empty() -> Interpretation {
        Interpretation::default()
    }

    /// Canonicalises and removes exact duplicates, preserving first
    /// occurrence order.
    pub fn new<I: IntoIterator<Item = Fact>>(facts: I) -> Interpretation {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for f in facts {
            let c = canonicalize(&f);
            if seen.insert(c.clone()) {
                out.push(c);
            }
        }
        Interpretation { facts: out }
    }

    pub fn facts(&self) -> &[Fact] {
        &self.facts
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Fact> {
        self.facts.iter()
    }

    pub fn contains(&self, f: &Fact) -> bool {
        self.facts.contains(&canonicalize(f))
    }
}

impl FromIterator<Fact> for Interpretation {
    fn from_iter<I: IntoIterator<Item = Fact>>(iter: I) -> Interpretation {
        Interpretation::new(iter)
    }
}

/// Cheap necessary condition for `a ⊑m b`: every predicate occurs in `b` no
/// more often than in `a`.
fn predicate_counts_fit(a: &Fact, b: &Fact) -> bool {
    if b.len() > a.len() {
        return false;
    }
    let (xs, ys) = (a.atoms(), b.atoms());
    let mut i = 0;
    let mut j = 0;
    while j < ys.len() {
        let p = &ys[j].pred;
        let mut need = 0;
        while j < ys.len() && ys[j].pred == *p {
            need += 1;
            j += 1;
        }
        while i < xs.len() && xs[i].pred < *p {
            i += 1;
        }
        let mut have = 0;
        while i < xs.len() && xs[i].pred == *p {
            have += 1;
            i += 1;
        }
        if have < need {
            return false;
        }
    }
    true
}

/// `a ⊑m b`: a substitution θ and a fact C with `a = bθ + C`, treating the
/// variables of `a` as constants.
pub fn entails_fact(a: &Fact, b: &Fact) -> Option<(Substitution, Fact)> {
    if !predicate_counts_fit(a, b) {
        return None;
    }
    let mut witness = None;
    let _ = injections(b.atoms(), a.atoms(), Coverage::Total, &Matching, Vec::new(), &mut |pairs, st| {
        let used: Vec<usize> = pairs.iter().map(|&(_, j)| j).collect();
        witness = Some((match_state_to_subst(st), a.without(&used)));
        ControlFlow::Break(())
    });
    witness
}

pub fn entails(a: &Fact, b: &Fact) -> bool {
    predicate_counts_fit(a, b)
        && injections(b.atoms(), a.atoms(), Coverage::Total, &Matching, Vec::new(), &mut |_, _| ControlFlow::Break(()))
            .is_break()
}

/// Membership of `f` in the instance- and upward-closure of `interp`. Any
/// witness for `f` only mentions symbols of `f`, so the signature never
/// needs to be consulted.
pub fn denotation_member(interp: &Interpretation, f: &Fact) -> bool {
    interp.iter().any(|b| entails(f, b))
}

/// Index of the first element of `interp` that `f` entails.
pub fn covering_fact(interp: &Interpretation, f: &Fact) -> Option<usize> {
    interp.iter().position(|b| entails(f, b))
}

/// `⟦i⟧ ⊆ ⟦j⟧`.
pub fn entails_interp(i: &Interpretation, j: &Interpretation) -> bool {
    i.iter().all(|a| denotation_member(j, a))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JudgmentOutput {
    pub fact: Fact,
    pub subst: Substitution,
    /// Indices of the interpretation facts used by atom cases.
    pub support: Vec<usize>,
}

impl JudgmentOutput {
    /// The output fact with its own bindings applied.
    pub fn instantiated_fact(&self) -> Fact {
        self.fact.apply(&self.subst)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AsatOptions {
    /// Skip empty selections in the atom case when the context is not empty.
    pub prune_trivial: bool,
    /// Drop outputs that a more general output of the same call subsumes.
    pub prune_subsumed: bool,
}

impl Default for AsatOptions {
    fn default() -> AsatOptions {
        AsatOptions { prune_trivial: true, prune_subsumed: false }
    }
}

impl AsatOptions {
    pub fn unpruned() -> AsatOptions {
        AsatOptions { prune_trivial: false, prune_subsumed: false }
    }
}

/// Computes every output of the abstract judgment `⟨interp⟩ ctx ⊳ C ; θ`,
/// deduplicated up to renaming of the fresh variables.
pub fn asat(interp: &Interpretation, ctx: &[Goal], opts: AsatOptions, session: &mut Session) -> Vec<JudgmentOutput> {
    asat_restricted(interp, ctx, opts, session, None)
}

/// Like [`asat`], with atom cases limited to the facts flagged in `only`.
pub fn asat_restricted(
    interp: &Interpretation,
    ctx: &[Goal],
    opts: AsatOptions,
    session: &mut Session,
    only: Option<&[bool]>,
) -> Vec<JudgmentOutput> {
    let mut used = BTreeSet::new();
    for f in interp.iter() {
        used.extend(f.eigens());
    }
    for g in ctx {
        g.collect_eigens(&mut used);
    }
    session.reserve_eigens(&used);
    let mut judge = Judge { interp, opts, session, only };
    judge.sat(ctx.to_vec())
}

struct Judge<'a> {
    interp: &'a Interpretation,
    opts: AsatOptions,
    session: &'a mut Session,
    only: Option<&'a [bool]>,
}

fn context_vars(ctx: &[Goal]) -> BTreeSet<Var> {
    let mut out = BTreeSet::new();
    for g in ctx {
        out.extend(g.free_vars());
    }
    out
}

impl Judge<'_> {
    fn sat(&mut self, mut ctx: Vec<Goal>) -> Vec<JudgmentOutput> {
        if ctx.contains(&Goal::Top) {
            return vec![JudgmentOutput { fact: Fact::empty(), subst: Substitution::nil(), support: Vec::new() }];
        }
        let Some(i) = ctx.iter().position(|g| !g.is_atomic()) else {
            let atoms: Vec<Atom> = ctx
                .into_iter()
                .map(|g| match g {
                    Goal::Atom(a) => a,
                    _ => unreachable!(),
                })
                .collect();
            return self.atom_case(&Fact::new(atoms));
        };
        let g = ctx.remove(i);
        match g {
            Goal::Top | Goal::Atom(_) => unreachable!(),
            Goal::Bot => self.sat(ctx),
            Goal::Par(a, b) => {
                ctx.push(*a);
                ctx.push(*b);
                self.sat(ctx)
            }
            Goal::Forall(x, body) => {
                let c = self.session.fresh_eigen();
                ctx.push(body.instantiate(&x, &Term::Eigen(c)));
                let outs = self.sat(ctx);
                outs.into_iter().filter(|o| !o.fact.mentions_eigen(c) && !o.subst.mentions_eigen(c)).collect()
            }
            Goal::With(g1, g2) => {
                let mut scope = context_vars(&ctx);
                scope.extend(g1.free_vars());
                scope.extend(g2.free_vars());
                let mut left = ctx.clone();
                left.push(*g1);
                let mut right = ctx.clone();
                right.push(*g2);
                let key_vars: Vec<Var> = scope.iter().cloned().collect();
                let outs1 = self.sat(left);
                let outs2 = self.sat(right);
                let mut acc = Collector::new(key_vars, self.opts.prune_subsumed);
                for o1 in &outs1 {
                    for o2 in &outs2 {
                        let Some(start) = subst_lub(&o1.subst, &o2.subst) else {
                            continue;
                        };
                        let _ = injections(
                            o1.fact.atoms(),
                            o2.fact.atoms(),
                            Coverage::Partial { min: 0 },
                            &Unifying,
                            start,
                            &mut |pairs, theta| {
                                let d2: Vec<usize> = pairs.iter().map(|&(_, j)| j).collect();
                                let fact = o1.fact.union(&o2.fact.without(&d2));
                                let mut keep = scope.clone();
                                keep.extend(fact.vars());
                                let mut support = o1.support.clone();
                                support.extend(&o2.support);
                                acc.push(JudgmentOutput { fact, subst: theta.restrict(&keep), support });
                                ControlFlow::Continue(())
                            },
                        );
                    }
                }
                acc.finish()
            }
        }
    }

    fn atom_case(&mut self, a: &Fact) -> Vec<JudgmentOutput> {
        let key_vars: Vec<Var> = a.vars().into_iter().collect();
        let mut acc = Collector::new(key_vars, self.opts.prune_subsumed);
        let min = if self.opts.prune_trivial && !a.is_empty() { 1 } else { 0 };
        let avars = a.vars();
        for (k, b) in self.interp.iter().enumerate() {
            if let Some(only) = self.only {
                if !only[k] {
                    continue;
                }
            }
            // The empty fact makes everything provable; its only selection
            // is the empty one.
            let min = if b.is_empty() { 0 } else { min };
            if min > 0 && !shares_predicate(a, b) {
                continue;
            }
            let (b, _) = self.session.fresh_variant(b);
            let _ = injections(
                a.atoms(),
                b.atoms(),
                Coverage::Partial { min },
                &Unifying,
                Substitution::nil(),
                &mut |pairs, mu| {
                    let used: Vec<usize> = pairs.iter().map(|&(_, j)| j).collect();
                    let fact = b.without(&used);
                    let mut keep = avars.clone();
                    keep.extend(fact.vars());
                    acc.push(JudgmentOutput { fact, subst: mu.restrict(&keep), support: vec![k] });
                    ControlFlow::Continue(())
                },
            );
        }
        acc.finish()
    }
}

fn shares_predicate(a: &Fact, b: &Fact) -> bool {
    a.iter().any(|x| b.iter().any(|y| x.pred == y.pred))
}

/// The fact `{eq_i(x_i θ)} + Cθ` that identifies an output up to renaming.
pub fn output_key_fact(o: &JudgmentOutput, vars: &[Var]) -> Fact {
    let mut atoms: Vec<Atom> = vars
        .iter()
        .enumerate()
        .map(|(i, v)| Atom { pred: sym(&format!("\u{0}eq{i}")), args: vec![o.subst.image(v)] })
        .collect();
    atoms.extend(o.instantiated_fact().into_atoms());
    Fact::new(atoms)
}

struct Collector {
    vars: Vec<Var>,
    prune: bool,
    seen: HashSet<Fact>,
    outs: Vec<(Fact, JudgmentOutput)>,
}

impl Collector {
    fn new(vars: Vec<Var>, prune: bool) -> Collector {
        Collector { vars, prune, seen: HashSet::new(), outs: Vec::new() }
    }

    fn push(&mut self, o: JudgmentOutput) {
        let key = output_key_fact(&o, &self.vars);
        if self.seen.insert(canonicalize(&key)) {
            self.outs.push((key, o));
        }
    }

    fn finish(self) -> Vec<JudgmentOutput> {
        if !self.prune {
            return self.outs.into_iter().map(|(_, o)| o).collect();
        }
        let n = self.outs.len();
        let mut dropped = vec![false; n];
        for i in 0..n {
            for j in 0..n {
                if i == j || dropped[j] || dropped[i] {
                    continue;
                }
                // j more general than i; ties keep the earlier output.
                if entails(&self.outs[i].0, &self.outs[j].0) && (j < i || !entails(&self.outs[j].0, &self.outs[i].0)) {
                    dropped[i] = true;
                }
            }
        }
        self.outs.into_iter().zip(dropped).filter(|(_, d)| !d).map(|((_, o), _)| o).collect()
    }
}

/// The concrete judgment `⟨⟦interp⟧⟩ ctx ⊳ c`.
pub fn concrete_sat(interp: &Interpretation, ctx: &[Goal], c: &Fact) -> bool {
    let mut used = BTreeSet::new();
    for f in interp.iter() {
        used.extend(f.eigens());
    }
    for g in ctx {
        g.collect_eigens(&mut used);
    }
    used.extend(c.eigens());
    let next = used.iter().next_back().map_or(0, |m| m + 1);
    concrete(interp, ctx.to_vec(), c, next)
}

fn concrete(interp: &Interpretation, mut ctx: Vec<Goal>, c: &Fact, next: Eigen) -> bool {
    if ctx.contains(&Goal::Top) {
        return true;
    }
    let Some(i) = ctx.iter().position(|g| !g.is_atomic()) else {
        let atoms: Vec<Atom> = ctx
            .into_iter()
            .map(|g| match g {
                Goal::Atom(a) => a,
                _ => unreachable!(),
            })
            .collect();
        return denotation_member(interp, &Fact::new(atoms).union(c));
    };
    match ctx.remove(i) {
        Goal::Top | Goal::Atom(_) => unreachable!(),
        Goal::Bot => concrete(interp, ctx, c, next),
        Goal::Par(a, b) => {
            ctx.push(*a);
            ctx.push(*b);
            concrete(interp, ctx, c, next)
        }
        Goal::Forall(x, body) => {
            ctx.push(body.instantiate(&x, &Term::Eigen(next)));
            concrete(interp, ctx, c, next + 1)
        }
        Goal::With(a, b) => {
            let mut left = ctx.clone();
            left.push(*a);
            ctx.push(*b);
            concrete(interp, left, c, next) && concrete(interp, ctx, c, next)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::variant_key;
    use crate::syntax::{parse_fact, parse_goal};

    fn fact(s: &str) -> Fact {
        parse_fact(s).unwrap()
    }
    fn interp(fs: &[&str]) -> Interpretation {
        Interpretation::new(fs.iter().map(|s| fact(s)))
    }

    #[test]
    fn entailment_examples() {
        let (theta, c) = entails_fact(&fact("r(Y) | p(f(Y))"), &fact("p(f(Y1))")).unwrap();
        assert_eq!(theta.image(&Var::named("Y1")), Term::var("Y"));
        assert_eq!(c, fact("r(Y)"));
        let a = fact("p(X) | q(f(X)) | p(a)");
        let (_, c) = entails_fact(&a, &a).unwrap();
        assert!(c.is_empty());
        let (theta, c) = entails_fact(&fact("p(a)"), &fact("p(X)")).unwrap();
        assert_eq!(theta.image(&Var::named("X")), Term::constant("a"));
        assert!(c.is_empty());
        assert!(entails_fact(&fact("p(a)"), &fact("p(X) | q(X)")).is_none());
        // The target's variables are rigid.
        assert!(entails_fact(&fact("p(Y)"), &fact("p(a)")).is_none());
        assert!(entails_fact(&fact("p(X) | p(Y)"), &fact("p(Z) | p(Z)")).is_none());
    }

    #[test]
    fn denotation_examples() {
        let i = interp(&["p(X)"]);
        let with_eigen =
            Fact::new(vec![Atom::new("p", vec![Term::Eigen(0)]), Atom::new("p", vec![Term::constant("a")])]);
        assert!(denotation_member(&i, &with_eigen));
        let j = interp(&["p(X) | q(X)", "r(a)"]);
        assert!(denotation_member(&j, &fact("r(a)")));
        assert!(!denotation_member(&interp(&["p(X) | q(X)"]), &fact("p(a) | q(b)")));
    }

    #[test]
    fn interpretation_entailment_examples() {
        assert!(entails_interp(&interp(&["r(Y) | p(f(Y))"]), &interp(&["p(f(Y1))"])));
        let i = interp(&["p(X) | q(X)", "s(Z)"]);
        assert!(entails_interp(&i, &i));
        assert!(!entails_interp(&interp(&["p(a)"]), &interp(&["q(X)"])));
    }

    fn running_example() -> Interpretation {
        interp(&["p(X) | q(X)", "r(Y) | p(f(Y))"])
    }

    /// `(Cθ, θ restricted to vars)` up to renaming.
    fn normal(o: &JudgmentOutput, vars: &[Var]) -> Vec<Term> {
        let mut terms: Vec<Term> = vars.iter().map(|v| o.subst.image(v)).collect();
        terms.extend(o.instantiated_fact().iter().map(|a| Term::App(a.pred.clone(), a.args.clone())));
        variant_key(&terms)
    }

    #[test]
    fn atom_case_example() {
        let mut s = Session::new();
        let g = parse_goal("q(f(W1))").unwrap();
        let outs = asat(&running_example(), &[g], AsatOptions::default(), &mut s);
        let w = vec![Var::named("W1")];
        let expected = JudgmentOutput { fact: fact("p(f(W1))"), subst: Substitution::nil(), support: vec![0] };
        assert!(outs.iter().any(|o| normal(o, &w) == normal(&expected, &w)));
        let hit = outs.iter().find(|o| o.fact.len() == 1 && o.fact.atoms()[0].pred.as_ref() == "p").unwrap();
        // The output keeps the variant's variable and binds it.
        let x = hit.fact.atoms()[0].args[0].clone();
        match x {
            Term::Var(xv) => assert_eq!(hit.subst.image(&xv), Term::app("f", vec![Term::var("W1")])),
            t => panic!("unexpected {t}"),
        }
    }

    #[test]
    fn with_case_example() {
        let mut s = Session::new();
        let g = parse_goal("q(U1) & r(V1)").unwrap();
        let outs = asat(&running_example(), &[g], AsatOptions::default(), &mut s);
        let vars = vec![Var::named("U1"), Var::named("V1")];
        let y = Term::var("Y9");
        let fy = Term::app("f", vec![y.clone()]);
        let expected = JudgmentOutput {
            fact: Fact::singleton(Atom::new("p", vec![fy.clone()])),
            subst: Substitution::from_pairs([(Var::named("U1"), fy), (Var::named("V1"), y)]),
            support: vec![],
        };
        assert!(outs.iter().any(|o| normal(o, &vars) == normal(&expected, &vars)));
    }

    #[test]
    fn forall_case_example() {
        let g = parse_goal("forall X. p(f(X))").unwrap();
        let mut s = Session::new();
        let pruned = asat(&running_example(), std::slice::from_ref(&g), AsatOptions::default(), &mut s);
        assert!(pruned.is_empty());
        let all = asat(&running_example(), &[g], AsatOptions::unpruned(), &mut s);
        assert_eq!(all.len(), 2);
        assert!(all.iter().all(|o| o.subst.is_empty() && o.fact.len() == 2));
    }

    #[test]
    fn top_case() {
        let mut s = Session::new();
        let outs = asat(&running_example(), &[Goal::Atom(Atom::prop("z")), Goal::Top], AsatOptions::default(), &mut s);
        assert_eq!(outs, vec![JudgmentOutput { fact: Fact::empty(), subst: Substitution::nil(), support: vec![] }]);
    }

    #[test]
    fn outputs_do_not_leak_eigenvariables() {
        let mut s = Session::new();
        let i = interp(&["p(X) | q(X)", "p(a)"]);
        let g = parse_goal("forall Y. p(Y) | q(Z)").unwrap();
        for o in asat(&i, &[g], AsatOptions::unpruned(), &mut s) {
            assert!(o.fact.eigens().is_empty());
            assert!(o.subst.iter().all(|(_, t)| {
                let mut e = BTreeSet::new();
                t.collect_eigens(&mut e);
                e.is_empty()
            }));
        }
    }

    #[test]
    fn concrete_examples() {
        let i = interp(&["p(X) | q(X)"]);
        assert!(concrete_sat(&i, &[Goal::Top], &fact("r(a)")));
        let g = parse_goal("q(f(b))").unwrap();
        assert!(concrete_sat(&i, std::slice::from_ref(&g), &fact("p(f(b))")));
        assert!(!concrete_sat(&i, &[g], &Fact::empty()));
        let g = parse_goal("forall X. p(X) | q(X)").unwrap();
        assert!(concrete_sat(&i, &[g], &Fact::empty()));
    }

    #[test]
    fn subsumed_outputs_can_be_pruned() {
        let i = interp(&["p(X)", "p(a) | r(a)"]);
        let g = parse_goal("p(Z)").unwrap();
        let mut s = Session::new();
        let all = asat(&i, std::slice::from_ref(&g), AsatOptions::default(), &mut s);
        let opts = AsatOptions { prune_trivial: true, prune_subsumed: true };
        let fewer = asat(&i, &[g], opts, &mut s);
        assert_eq!(all.len(), 2);
        assert_eq!(fewer.len(), 1);
        assert!(fewer[0].fact.is_empty());
    }
}
