//! Syntactic unification, one-way matching, multiset unifiers and the least
//! upper bound of substitutions.

use std::collections::{BTreeSet, HashSet};
use std::ops::ControlFlow;

use thiserror::Error;

use crate::kernel::{variant_key, Atom, Fact, Substitution, Term, Var};

#[derive(Debug, Error, PartialEq, Eq)]
#[error("multisets of sizes {0} and {1} have no bijection")]
pub struct CardinalityMismatch(pub usize, pub usize);

/// Extends the idempotent `theta` so that it also unifies `s` and `t`.
/// On failure `theta` is left in an unspecified state.
pub fn unify_into(s: &Term, t: &Term, theta: &mut Substitution) -> bool {
    let mut stack = vec![(s.apply(theta), t.apply(theta))];
    while let Some((a, b)) = stack.pop() {
        let a = a.apply(theta);
        let b = b.apply(theta);
        if a == b {
            continue;
        }
        match (a, b) {
            (Term::Var(v), t) | (t, Term::Var(v)) => {
                if t.occurs(&v) {
                    return false;
                }
                bind(theta, v, t);
            }
            (Term::App(f, xs), Term::App(g, ys)) => {
                if f != g || xs.len() != ys.len() {
                    return false;
                }
                stack.extend(xs.into_iter().zip(ys));
            }
            _ => return false,
        }
    }
    true
}

/// Adds `v ↦ t` to an idempotent substitution whose range `t` is already
/// normalised against.
fn bind(theta: &mut Substitution, v: Var, t: Term) {
    let single = Substitution::from_pairs([(v.clone(), t.clone())]);
    let updated: Vec<(Var, Term)> = theta.iter().map(|(w, u)| (w.clone(), u.apply(&single))).collect();
    for (w, u) in updated {
        theta.insert(w, u);
    }
    theta.insert(v, t);
}

pub fn unify_atoms_into(a: &Atom, b: &Atom, theta: &mut Substitution) -> bool {
    if a.pred != b.pred || a.args.len() != b.args.len() {
        return false;
    }
    a.args.iter().zip(&b.args).all(|(s, t)| unify_into(s, t, theta))
}

/// Most general unifier of two terms; a variable on the left binds to the
/// right-hand side when both are variables.
pub fn mgu_terms(s: &Term, t: &Term) -> Option<Substitution> {
    let mut theta = Substitution::nil();
    unify_into(s, t, &mut theta).then_some(theta)
}

pub fn mgu_atoms(a: &Atom, b: &Atom) -> Option<Substitution> {
    let mut theta = Substitution::nil();
    unify_atoms_into(a, b, &mut theta).then_some(theta)
}

/// How pairs are solved during injection search.
pub trait PairSolver {
    type State: Clone;
    fn solve(&self, state: &Self::State, left: &Atom, right: &Atom) -> Option<Self::State>;
}

/// Two-way unification, accumulating an idempotent mgu.
pub struct Unifying;

impl PairSolver for Unifying {
    type State = Substitution;
    fn solve(&self, state: &Substitution, left: &Atom, right: &Atom) -> Option<Substitution> {
        if left.pred != right.pred || left.args.len() != right.args.len() {
            return None;
        }
        let mut next = state.clone();
        unify_atoms_into(left, right, &mut next).then_some(next)
    }
}

/// One-way matching of left (pattern) atoms into right (target) atoms.
/// The state records bindings for pattern variables only, identity bindings
/// included, so it is a plain list rather than a [`Substitution`].
pub struct Matching;

pub type MatchState = Vec<(Var, Term)>;

fn match_term_state(pattern: &Term, target: &Term, st: &mut MatchState) -> bool {
    match pattern {
        Term::Var(v) => match st.iter().find(|(w, _)| w == v) {
            Some((_, bound)) => bound == target,
            None => {
                st.push((v.clone(), target.clone()));
                true
            }
        },
        Term::App(f, xs) => match target {
            Term::App(g, ys) if f == g && xs.len() == ys.len() => {
                xs.iter().zip(ys).all(|(x, y)| match_term_state(x, y, st))
            }
            _ => false,
        },
        _ => pattern == target,
    }
}

impl PairSolver for Matching {
    type State = MatchState;
    fn solve(&self, state: &MatchState, left: &Atom, right: &Atom) -> Option<MatchState> {
        if left.pred != right.pred || left.args.len() != right.args.len() {
            return None;
        }
        let mut next = state.clone();
        left.args.iter().zip(&right.args).all(|(p, t)| match_term_state(p, t, &mut next)).then_some(next)
    }
}

pub fn match_state_to_subst(st: &MatchState) -> Substitution {
    Substitution::from_pairs(st.iter().cloned())
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Coverage {
    /// Every left atom is paired.
    Total,
    /// Any number of pairs, at least `min`.
    Partial { min: usize },
}

/// Callback receiving the chosen `(left, right)` pairs and the final state.
pub type Visit<'a, T> = dyn FnMut(&[(usize, usize)], &T) -> ControlFlow<()> + 'a;

/// Enumerates partial injections from `left` into `right` that `solver`
/// accepts, skipping injections that differ only by permuting identical
/// atoms on either side. `visit` receives the pairs and the final state.
pub fn injections<S: PairSolver>(
    left: &[Atom],
    right: &[Atom],
    coverage: Coverage,
    solver: &S,
    init: S::State,
    visit: &mut Visit<'_, S::State>,
) -> ControlFlow<()> {
    let prev_same =
        |xs: &[Atom]| -> Vec<Option<usize>> { (0..xs.len()).map(|i| (0..i).rev().find(|&j| xs[j] == xs[i])).collect() };
    let ctx = Search { left, right, coverage, solver, left_prev: prev_same(left), right_prev: prev_same(right) };
    if let Coverage::Total = coverage {
        if left.len() > right.len() {
            return ControlFlow::Continue(());
        }
    }
    let mut image = vec![None; left.len()];
    let mut used = vec![false; right.len()];
    let mut pairs = Vec::new();
    ctx.go(0, &mut image, &mut used, &mut pairs, init, visit)
}

struct Search<'a, S: PairSolver> {
    left: &'a [Atom],
    right: &'a [Atom],
    coverage: Coverage,
    solver: &'a S,
    left_prev: Vec<Option<usize>>,
    right_prev: Vec<Option<usize>>,
}

impl<S: PairSolver> Search<'_, S> {
    fn go(
        &self,
        i: usize,
        image: &mut Vec<Option<usize>>,
        used: &mut Vec<bool>,
        pairs: &mut Vec<(usize, usize)>,
        state: S::State,
        visit: &mut Visit<'_, S::State>,
    ) -> ControlFlow<()> {
        if i == self.left.len() {
            if let Coverage::Partial { min } = self.coverage {
                if pairs.len() < min {
                    return ControlFlow::Continue(());
                }
            }
            return visit(pairs, &state);
        }
        if let Coverage::Partial { min } = self.coverage {
            if pairs.len() + (self.left.len() - i) < min {
                return ControlFlow::Continue(());
            }
        }
        let twin = self.left_prev[i];
        let twin_image = twin.map(|t| image[t]);
        // An atom identical to an earlier unpaired one stays unpaired.
        let may_pair = !matches!(twin_image, Some(None));
        if may_pair {
            let lower = match twin_image {
                Some(Some(j)) => j + 1,
                _ => 0,
            };
            for j in lower..self.right.len() {
                if used[j] {
                    continue;
                }
                if let Some(k) = self.right_prev[j] {
                    if !used[k] {
                        continue;
                    }
                }
                if let Some(next) = self.solver.solve(&state, &self.left[i], &self.right[j]) {
                    used[j] = true;
                    image[i] = Some(j);
                    pairs.push((i, j));
                    let flow = self.go(i + 1, image, used, pairs, next, visit);
                    pairs.pop();
                    image[i] = None;
                    used[j] = false;
                    flow?;
                }
            }
        }
        if let Coverage::Partial { .. } = self.coverage {
            self.go(i + 1, image, used, pairs, state, visit)?;
        }
        ControlFlow::Continue(())
    }
}

/// Dedup key of a substitution relative to the variables it is about.
pub fn subst_key(theta: &Substitution, vars: &[Var]) -> Vec<Term> {
    let images: Vec<Term> = vars.iter().map(|v| theta.image(v)).collect();
    variant_key(&images)
}

/// The non-equivalent most general unifiers of two equal-size multisets, one
/// per unifiable bijection.
pub fn mgu_multisets(a: &Fact, b: &Fact) -> Result<Vec<Substitution>, CardinalityMismatch> {
    if a.len() != b.len() {
        return Err(CardinalityMismatch(a.len(), b.len()));
    }
    let mut vars: BTreeSet<Var> = a.vars();
    vars.extend(b.vars());
    let vars: Vec<Var> = vars.into_iter().collect();
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    let _ = injections(a.atoms(), b.atoms(), Coverage::Total, &Unifying, Substitution::nil(), &mut |_, theta| {
        if seen.insert(subst_key(theta, &vars)) {
            out.push(theta.clone());
        }
        ControlFlow::Continue(())
    });
    Ok(out)
}

/// Least upper bound under the instance ordering: the mgu of the union of
/// both binding sets read as equations.
pub fn subst_lub(theta1: &Substitution, theta2: &Substitution) -> Option<Substitution> {
    let mut out = theta1.clone();
    for (v, t) in theta2.iter() {
        if !unify_into(&Term::Var(v.clone()), t, &mut out) {
            return None;
        }
    }
    Some(out)
}

/// `θ ≤ τ` on `vars`: some σ has `xθσ = xτ` for every listed variable.
pub fn more_general_on(theta: &Substitution, tau: &Substitution, vars: &[Var]) -> bool {
    let mut st = MatchState::new();
    vars.iter().all(|v| match_term_state(&theta.image(v), &tau.image(v), &mut st))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::parse_fact;

    fn v(n: &str) -> Term {
        Term::var(n)
    }
    fn atom(s: &str) -> Atom {
        parse_fact(s).unwrap().atoms()[0].clone()
    }

    #[test]
    fn term_mgu_examples() {
        let theta = mgu_atoms(&atom("q(X1)"), &atom("q(f(W1))")).unwrap();
        assert_eq!(theta, Substitution::from_pairs([(Var::named("X1"), Term::app("f", vec![v("W1")]))]));
        assert!(mgu_atoms(&atom("p(X)"), &atom("p(X)")).unwrap().is_empty());
        assert!(mgu_atoms(&atom("p(a)"), &atom("p(b)")).is_none());
        assert!(mgu_atoms(&atom("p(X)"), &atom("p(f(X))")).is_none());
        let mut eig = Substitution::nil();
        assert!(!unify_into(&Term::Eigen(0), &Term::constant("a"), &mut eig));
        assert!(unify_into(&Term::Eigen(0), &v("X"), &mut eig));
    }

    #[test]
    fn mgu_is_idempotent() {
        let theta = mgu_atoms(&atom("p(X, Y, Z)"), &atom("p(Y, Z, f(a))")).unwrap();
        assert!(theta.is_idempotent());
        assert_eq!(theta.image(&Var::named("X")), Term::app("f", vec![Term::constant("a")]));
    }

    #[test]
    fn multiset_mgu_examples() {
        let r = mgu_multisets(&parse_fact("q(X1)").unwrap(), &parse_fact("q(f(W1))").unwrap()).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].image(&Var::named("X1")), Term::app("f", vec![v("W1")]));
        assert_eq!(mgu_multisets(&Fact::empty(), &Fact::empty()).unwrap(), vec![Substitution::nil()]);
        let r = mgu_multisets(&parse_fact("p(X) | p(Y)").unwrap(), &parse_fact("p(a) | p(b)").unwrap()).unwrap();
        assert_eq!(r.len(), 2);
        assert!(mgu_multisets(&parse_fact("p(X)").unwrap(), &Fact::empty()).is_err());
        let r = mgu_multisets(&parse_fact("p(X) | p(X)").unwrap(), &parse_fact("p(a) | p(b)").unwrap()).unwrap();
        assert!(r.is_empty());
    }

    #[test]
    fn lub_examples() {
        let s =
            |pairs: &[(&str, Term)]| Substitution::from_pairs(pairs.iter().map(|(x, t)| (Var::named(x), t.clone())));
        let fy = Term::app("f", vec![v("Y1")]);
        let l = subst_lub(&s(&[("U1", v("X3"))]), &s(&[("V1", v("Y1"))])).unwrap();
        let l = subst_lub(&l, &s(&[("X3", fy.clone())])).unwrap();
        assert_eq!(l, s(&[("U1", fy.clone()), ("V1", v("Y1")), ("X3", fy)]));
        let theta = s(&[("X", v("Y"))]);
        assert_eq!(subst_lub(&theta, &Substitution::nil()).unwrap(), theta);
        let a = Term::constant("a");
        let l = subst_lub(&s(&[("X", Term::app("f", vec![v("Y")]))]), &s(&[("X", Term::app("f", vec![a.clone()]))]))
            .unwrap();
        assert_eq!(l, s(&[("X", Term::app("f", vec![a.clone()])), ("Y", a.clone())]));
        assert!(subst_lub(&s(&[("X", a)]), &s(&[("X", Term::constant("b"))])).is_none());
    }

    #[test]
    fn injection_symmetry_breaking() {
        let left = parse_fact("p(X) | p(X)").unwrap();
        let right = parse_fact("p(a) | p(b)").unwrap();
        let mut n = 0;
        let _ = injections(
            left.atoms(),
            right.atoms(),
            Coverage::Partial { min: 0 },
            &Unifying,
            Substitution::nil(),
            &mut |_, _| {
                n += 1;
                ControlFlow::Continue(())
            },
        );
        // {}, {X/a}, {X/b}
        assert_eq!(n, 3);
    }

    #[test]
    fn matching_keeps_target_rigid() {
        let mut st = MatchState::new();
        assert!(Matching.solve(&st, &atom("p(X)"), &atom("p(X)")).is_some());
        st = Matching.solve(&st, &atom("p(X)"), &atom("p(Y)")).unwrap();
        assert!(Matching.solve(&st, &atom("q(X)"), &atom("q(Z)")).is_none());
        assert!(Matching.solve(&MatchState::new(), &atom("p(a)"), &atom("p(Y)")).is_none());
    }
}
