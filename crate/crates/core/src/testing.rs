//! Random generators and brute-force oracles shared by the property tests.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::judgment::{concrete_sat, Interpretation};
use crate::kernel::{sym, tuples, Atom, Fact, Signature, Term, Var};
use crate::syntax::{Clause, Goal, Program};

/// Shape of randomly generated programs.
#[derive(Clone, Debug)]
pub struct GenConfig {
    pub max_clauses: usize,
    pub predicates: Vec<(String, usize)>,
    pub constants: Vec<String>,
    pub functions: Vec<String>,
    pub variables: Vec<String>,
    pub max_term_depth: usize,
    pub max_head: usize,
    pub max_body_atoms: usize,
    /// Allow `&`, `forall`, `bot` and `top` inside bodies.
    pub connectives: bool,
}

impl GenConfig {
    /// Unary and nullary predicates over constants only.
    pub fn monadic(rng: &mut impl Rng) -> GenConfig {
        let names = ["p", "q", "r", "s"];
        let n = rng.gen_range(1..=4);
        let predicates = names[..n].iter().map(|p| (p.to_string(), rng.gen_range(0..=1))).collect();
        let k = rng.gen_range(1..=3);
        GenConfig {
            max_clauses: 6,
            predicates,
            constants: ["a", "b", "c"][..k].iter().map(|s| s.to_string()).collect(),
            functions: Vec::new(),
            variables: vec!["X".into(), "Y".into()],
            max_term_depth: 0,
            max_head: 2,
            max_body_atoms: 2,
            connectives: true,
        }
    }

    /// Two constants and one unary function.
    pub fn small_functional() -> GenConfig {
        GenConfig {
            max_clauses: 3,
            predicates: vec![("p".into(), 1), ("q".into(), 1), ("r".into(), 0)],
            constants: vec!["a".into(), "b".into()],
            functions: vec!["f".into()],
            variables: vec!["X".into(), "Y".into()],
            max_term_depth: 1,
            max_head: 2,
            max_body_atoms: 2,
            connectives: true,
        }
    }

    /// The signature of every program this configuration can produce.
    pub fn signature(&self) -> Signature {
        let mut sig = Signature::new();
        for (p, n) in &self.predicates {
            sig.predicates.insert(sym(p), *n);
        }
        for c in &self.constants {
            sig.constants.insert(sym(c));
        }
        for f in &self.functions {
            sig.functions.insert(sym(f), 1);
        }
        sig
    }
}

pub fn random_term(rng: &mut impl Rng, cfg: &GenConfig, depth: usize, vars: &[Var]) -> Term {
    if depth > 0 && !cfg.functions.is_empty() && rng.gen_bool(0.3) {
        let f = cfg.functions.choose(rng).unwrap();
        return Term::app(f, vec![random_term(rng, cfg, depth - 1, vars)]);
    }
    if !vars.is_empty() && (cfg.constants.is_empty() || rng.gen_bool(0.6)) {
        Term::Var(vars.choose(rng).unwrap().clone())
    } else {
        Term::constant(cfg.constants.choose(rng).unwrap())
    }
}

pub fn random_atom(rng: &mut impl Rng, cfg: &GenConfig, vars: &[Var]) -> Atom {
    let (p, n) = cfg.predicates.choose(rng).unwrap();
    Atom::new(p, (0..*n).map(|_| random_term(rng, cfg, cfg.max_term_depth, vars)).collect())
}

fn named_vars(cfg: &GenConfig) -> Vec<Var> {
    cfg.variables.iter().map(|v| Var::named(v)).collect()
}

pub fn random_fact(rng: &mut impl Rng, cfg: &GenConfig, max_atoms: usize, vars: &[Var]) -> Fact {
    let n = rng.gen_range(0..=max_atoms);
    Fact::new((0..n).map(|_| random_atom(rng, cfg, vars)).collect())
}

fn par_of(atoms: Vec<Atom>) -> Goal {
    let mut it = atoms.into_iter().map(Goal::Atom);
    match it.next() {
        None => Goal::Bot,
        Some(first) => it.fold(first, Goal::par),
    }
}

pub fn random_goal(rng: &mut impl Rng, cfg: &GenConfig, depth: usize, vars: &[Var]) -> Goal {
    let roll = rng.gen_range(0..10);
    if !cfg.connectives || depth == 0 || roll < 5 {
        let n = rng.gen_range(1..=cfg.max_body_atoms.max(1));
        return par_of((0..n).map(|_| random_atom(rng, cfg, vars)).collect());
    }
    match roll {
        5 | 6 => Goal::with(random_goal(rng, cfg, depth - 1, vars), random_goal(rng, cfg, depth - 1, vars)),
        7 => {
            let x = Var::named("Z");
            let mut inner: Vec<Var> = vars.to_vec();
            inner.push(x.clone());
            Goal::forall(x, random_goal(rng, cfg, depth - 1, &inner))
        }
        8 => Goal::par(random_goal(rng, cfg, depth - 1, vars), Goal::Bot),
        _ => Goal::par(random_goal(rng, cfg, depth - 1, vars), random_goal(rng, cfg, depth - 1, vars)),
    }
}

/// A program with at least one `top`-bodied clause.
pub fn random_program(rng: &mut impl Rng, cfg: &GenConfig) -> Program {
    let vars = named_vars(cfg);
    let n = rng.gen_range(1..=cfg.max_clauses);
    let mut clauses = Vec::new();
    for i in 0..n {
        let closing = i == 0 || (cfg.connectives && rng.gen_bool(0.1));
        let head = if closing {
            // A small closing head would make most facts trivially provable.
            Fact::new((0..cfg.max_head.max(1)).map(|_| random_atom(rng, cfg, &vars)).collect())
        } else if rng.gen_bool(0.1) {
            Fact::empty()
        } else {
            let n = rng.gen_range(1..=cfg.max_head.max(1));
            Fact::new((0..n).map(|_| random_atom(rng, cfg, &vars)).collect())
        };
        let body = if closing { Goal::Top } else { random_goal(rng, cfg, 2, &vars) };
        clauses.push(Clause::new(head, body, &(i + 1).to_string()));
    }
    clauses[1..].shuffle(rng);
    for (i, c) in clauses.iter_mut().enumerate() {
        c.label = (i + 1).to_string();
    }
    Program::new(clauses).expect("generated programs respect the signature")
}

pub fn random_interpretation(
    rng: &mut impl Rng,
    cfg: &GenConfig,
    max_facts: usize,
    max_atoms: usize,
) -> Interpretation {
    let vars = named_vars(cfg);
    let n = rng.gen_range(0..=max_facts);
    Interpretation::new((0..n).map(|_| {
        let mut f = random_fact(rng, cfg, max_atoms, &vars);
        if f.is_empty() && rng.gen_bool(0.8) {
            f = Fact::singleton(random_atom(rng, cfg, &vars));
        }
        f
    }))
}

/// Every ground atom over the signature with arguments of depth at most
/// `term_depth`.
pub fn ground_atoms(sig: &Signature, term_depth: usize) -> Vec<Atom> {
    let terms = sig.ground_terms(term_depth);
    let mut out = Vec::new();
    for (p, n) in &sig.predicates {
        for args in tuples(&terms, *n) {
            out.push(Atom { pred: p.clone(), args });
        }
    }
    out
}

/// Every multiset of at most `max_atoms` atoms drawn from `atoms`.
pub fn ground_facts(atoms: &[Atom], max_atoms: usize) -> Vec<Fact> {
    let mut out = vec![Fact::empty()];
    let mut frontier: Vec<(usize, Vec<Atom>)> = vec![(0, Vec::new())];
    for _ in 0..max_atoms {
        let mut next = Vec::new();
        for (start, prefix) in &frontier {
            for (i, a) in atoms.iter().enumerate().skip(*start) {
                let mut p = prefix.clone();
                p.push(a.clone());
                out.push(Fact::new(p.clone()));
                next.push((i, p));
            }
        }
        frontier = next;
    }
    out
}

fn match_term(pattern: &Term, target: &Term, binding: &mut BTreeMap<Var, Term>) -> bool {
    match (pattern, target) {
        (Term::Var(v), _) => match binding.get(v) {
            Some(t) => t == target,
            None => {
                binding.insert(v.clone(), target.clone());
                true
            }
        },
        (Term::App(f, xs), Term::App(g, ys)) => {
            f == g && xs.len() == ys.len() && xs.iter().zip(ys).all(|(x, y)| match_term(x, y, binding))
        }
        _ => pattern == target,
    }
}

/// Tries every injective placement of `b`'s atoms among `a`'s positions.
pub fn brute_entails(a: &Fact, b: &Fact) -> bool {
    fn go(i: usize, a: &[Atom], b: &[Atom], used: &mut Vec<bool>, binding: &BTreeMap<Var, Term>) -> bool {
        if i == b.len() {
            return true;
        }
        for j in 0..a.len() {
            if used[j] || a[j].pred != b[i].pred || a[j].args.len() != b[i].args.len() {
                continue;
            }
            let mut bind = binding.clone();
            if b[i].args.iter().zip(&a[j].args).all(|(p, t)| match_term(p, t, &mut bind)) {
                used[j] = true;
                if go(i + 1, a, b, used, &bind) {
                    return true;
                }
                used[j] = false;
            }
        }
        false
    }
    go(0, a.atoms(), b.atoms(), &mut vec![false; a.len()], &BTreeMap::new())
}

/// Ground consequence operator at one fact: `m` is produced from the
/// denotation of `interp` by some ground clause instance whose head lies in
/// `m`. Body-only variables range over terms of depth at most
/// `body_depth`.
pub fn tp_member(program: &Program, interp: &Interpretation, m: &Fact, sig: &Signature, body_depth: usize) -> bool {
    let terms = sig.ground_terms(body_depth);
    for c in &program.clauses {
        let body_only: Vec<Var> = c.body_only_vars().into_iter().collect();
        let choices = tuples(&terms, body_only.len());
        for (binding, rest) in head_placements(&c.head, m) {
            for choice in &choices {
                let mut tau = crate::kernel::Substitution::from_pairs(binding.clone());
                for (v, t) in body_only.iter().zip(choice) {
                    tau.insert(v.clone(), t.clone());
                }
                if concrete_sat(interp, &[c.body.apply(&tau)], &rest) {
                    return true;
                }
            }
        }
    }
    false
}

/// All ways to match `head` injectively into the ground fact `m`, with the
/// remainder.
fn head_placements(head: &Fact, m: &Fact) -> Vec<(BTreeMap<Var, Term>, Fact)> {
    fn go(
        i: usize,
        h: &[Atom],
        m: &[Atom],
        used: &mut Vec<bool>,
        binding: &BTreeMap<Var, Term>,
        out: &mut Vec<(BTreeMap<Var, Term>, Fact)>,
    ) {
        if i == h.len() {
            let rest = Fact::new(m.iter().zip(used.iter()).filter(|(_, u)| !**u).map(|(a, _)| a.clone()).collect());
            if !out.contains(&(binding.clone(), rest.clone())) {
                out.push((binding.clone(), rest));
            }
            return;
        }
        for j in 0..m.len() {
            if used[j] || m[j].pred != h[i].pred {
                continue;
            }
            let mut bind = binding.clone();
            if h[i].args.iter().zip(&m[j].args).all(|(p, t)| match_term(p, t, &mut bind)) {
                used[j] = true;
                go(i + 1, h, m, used, &bind, out);
                used[j] = false;
            }
        }
    }
    let mut out = Vec::new();
    go(0, head.atoms(), m.atoms(), &mut vec![false; m.len()], &BTreeMap::new(), &mut out);
    out
}
