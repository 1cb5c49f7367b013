//! Depth-bounded top-down proof search over ground sequents, proof trees and
//! an independent proof checker.
//!
//! Right rules are applied eagerly; backchaining only happens once the
//! context is all atomic. The depth bound counts backchaining steps in the
//! whole proof.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::ControlFlow;
use std::rc::Rc;

use rustc_hash::FxHashMap;

use thiserror::Error;

use crate::kernel::{Atom, Eigen, Fact, Signature, Substitution, Sym, Term, Var};
use crate::syntax::{Goal, Program};
use crate::unify::{injections, match_state_to_subst, Coverage, MatchState, Matching, PairSolver};

/// A proof tree; every node stores the context of its conclusion.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Proof {
    Top { context: Vec<Goal> },
    Bot { context: Vec<Goal>, child: Box<Proof> },
    Par { context: Vec<Goal>, child: Box<Proof> },
    With { context: Vec<Goal>, left: Box<Proof>, right: Box<Proof> },
    Forall { context: Vec<Goal>, eigen: Eigen, child: Box<Proof> },
    Bc { context: Vec<Goal>, clause: String, head: Fact, body: Goal, child: Box<Proof> },
}

impl Proof {
    pub fn context(&self) -> &[Goal] {
        match self {
            Proof::Top { context }
            | Proof::Bot { context, .. }
            | Proof::Par { context, .. }
            | Proof::With { context, .. }
            | Proof::Forall { context, .. }
            | Proof::Bc { context, .. } => context,
        }
    }

    fn children(&self) -> Vec<&Proof> {
        match self {
            Proof::Top { .. } => vec![],
            Proof::Bot { child, .. }
            | Proof::Par { child, .. }
            | Proof::Forall { child, .. }
            | Proof::Bc { child, .. } => {
                vec![child]
            }
            Proof::With { left, right, .. } => vec![left, right],
        }
    }

    /// Number of rule applications.
    pub fn size(&self) -> usize {
        1 + self.children().iter().map(|c| c.size()).sum::<usize>()
    }

    pub fn count_forall(&self) -> usize {
        usize::from(matches!(self, Proof::Forall { .. }))
            + self.children().iter().map(|c| c.count_forall()).sum::<usize>()
    }

    /// Largest number of backchaining steps on a branch.
    pub fn bc_depth(&self) -> usize {
        usize::from(matches!(self, Proof::Bc { .. })) + self.children().iter().map(|c| c.bc_depth()).max().unwrap_or(0)
    }

    /// Number of backchaining steps in the whole tree.
    pub fn bc_count(&self) -> usize {
        usize::from(matches!(self, Proof::Bc { .. })) + self.children().iter().map(|c| c.bc_count()).sum::<usize>()
    }

    pub fn branches(&self) -> usize {
        match self {
            Proof::Top { .. } => 1,
            _ => self.children().iter().map(|c| c.branches()).sum(),
        }
    }

    /// Clause labels used by backchaining, in pre-order.
    pub fn clause_sequence(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.walk(&mut |p| {
            if let Proof::Bc { clause, .. } = p {
                out.push(clause.clone());
            }
        });
        out
    }

    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a Proof)) {
        f(self);
        for c in self.children() {
            c.walk(f);
        }
    }

    fn rule_name(&self) -> String {
        match self {
            Proof::Top { .. } => "top".into(),
            Proof::Bot { .. } => "bot".into(),
            Proof::Par { .. } => "par".into(),
            Proof::With { .. } => "with".into(),
            Proof::Forall { eigen, .. } => format!("forall _c{eigen}"),
            Proof::Bc { clause, .. } => format!("bc({clause})"),
        }
    }
}

pub fn show_context(ctx: &[Goal]) -> String {
    if ctx.is_empty() {
        return "(empty)".into();
    }
    ctx.iter()
        .map(|g| if matches!(g, Goal::With(..) | Goal::Par(..)) { format!("({g})") } else { g.to_string() })
        .collect::<Vec<_>>()
        .join(", ")
}

impl fmt::Display for Proof {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn go(p: &Proof, indent: usize, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            writeln!(f, "{:indent$}|- {}   [{}]", "", show_context(p.context()), p.rule_name(), indent = indent)?;
            let kids = p.children();
            let step = if kids.len() > 1 { 2 } else { 0 };
            for c in kids {
                go(c, indent + step, f)?;
            }
            Ok(())
        }
        go(self, 0, f)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProofError {
    #[error("{rule}: {msg} at `{context}`")]
    Invalid { rule: String, msg: String, context: String },
}

fn sorted(mut v: Vec<Goal>) -> Vec<Goal> {
    v.sort();
    v
}

fn remove_one(ctx: &[Goal], g: &Goal) -> Option<Vec<Goal>> {
    let i = ctx.iter().position(|h| h == g)?;
    let mut out = ctx.to_vec();
    out.remove(i);
    Some(out)
}

fn same_multiset(a: &[Goal], b: &[Goal]) -> bool {
    sorted(a.to_vec()) == sorted(b.to_vec())
}

/// Checks every rule application against the program, including uniformity
/// (backchaining only on all-atomic contexts) and freshness of the
/// constants introduced by `forall`.
pub fn check_proof(program: &Program, sig: &Signature, proof: &Proof) -> Result<(), ProofError> {
    let fail = |p: &Proof, msg: &str| -> Result<(), ProofError> {
        Err(ProofError::Invalid { rule: p.rule_name(), msg: msg.to_string(), context: show_context(p.context()) })
    };
    let ctx = proof.context();
    match proof {
        Proof::Top { .. } => {
            if !ctx.contains(&Goal::Top) {
                return fail(proof, "no top in context");
            }
            Ok(())
        }
        Proof::Bot { child, .. } => {
            let Some(rest) = remove_one(ctx, &Goal::Bot) else {
                return fail(proof, "no bot in context");
            };
            if !same_multiset(&rest, child.context()) {
                return fail(proof, "premise does not match");
            }
            check_proof(program, sig, child)
        }
        Proof::Par { child, .. } => {
            let ok = ctx.iter().any(|g| match g {
                Goal::Par(a, b) => {
                    let mut rest = remove_one(ctx, g).unwrap();
                    rest.push((**a).clone());
                    rest.push((**b).clone());
                    same_multiset(&rest, child.context())
                }
                _ => false,
            });
            if !ok {
                return fail(proof, "premise does not match any par");
            }
            check_proof(program, sig, child)
        }
        Proof::With { left, right, .. } => {
            let ok = ctx.iter().any(|g| match g {
                Goal::With(a, b) => {
                    let rest = remove_one(ctx, g).unwrap();
                    let mut l = rest.clone();
                    l.push((**a).clone());
                    let mut r = rest;
                    r.push((**b).clone());
                    same_multiset(&l, left.context()) && same_multiset(&r, right.context())
                }
                _ => false,
            });
            if !ok {
                return fail(proof, "premises do not match any with");
            }
            check_proof(program, sig, left)?;
            check_proof(program, sig, right)
        }
        Proof::Forall { eigen, child, .. } => {
            if sig.eigenvariables.contains(eigen) {
                return fail(proof, "constant is not fresh");
            }
            let ok = ctx.iter().any(|g| match g {
                Goal::Forall(x, body) => {
                    let mut rest = remove_one(ctx, g).unwrap();
                    rest.push(body.instantiate(x, &Term::Eigen(*eigen)));
                    same_multiset(&rest, child.context())
                }
                _ => false,
            });
            if !ok {
                return fail(proof, "premise does not match any forall");
            }
            check_proof(program, &sig.with_eigen(*eigen), child)
        }
        Proof::Bc { clause, head, body, child, .. } => {
            if !ctx.iter().all(Goal::is_atomic) {
                return fail(proof, "backchaining on a non-atomic context");
            }
            let Some(c) = program.clause(clause) else {
                return fail(proof, "unknown clause");
            };
            let Some(tau) = match_clause_instance(&c.head, &c.body, head, body) else {
                return fail(proof, "not an instance of the clause");
            };
            if !head.is_ground() || !goal_is_ground(body) {
                return fail(proof, "instance is not ground");
            }
            for (_, t) in tau.iter() {
                if !sig.covers_term(t) {
                    return fail(proof, "instance uses symbols outside the signature");
                }
            }
            let atoms: Vec<Atom> = ctx
                .iter()
                .map(|g| match g {
                    Goal::Atom(a) => a.clone(),
                    _ => unreachable!(),
                })
                .collect();
            let ctx_fact = Fact::new(atoms);
            if !head.included_in(&ctx_fact) {
                return fail(proof, "head is not part of the context");
            }
            let mut premise: Vec<Goal> = ctx_fact.difference(head).into_atoms().into_iter().map(Goal::Atom).collect();
            premise.push(body.clone());
            if !same_multiset(&premise, child.context()) {
                return fail(proof, "premise does not match");
            }
            check_proof(program, sig, child)
        }
    }
}

pub fn goal_is_ground(g: &Goal) -> bool {
    match g {
        Goal::Top | Goal::Bot => true,
        Goal::Atom(a) => a.is_ground(),
        Goal::Par(a, b) | Goal::With(a, b) => goal_is_ground(a) && goal_is_ground(b),
        Goal::Forall(x, body) => body.free_vars().iter().all(|v| v == x),
    }
}

/// A substitution τ with `head_pattern τ = head` and `body_pattern τ = body`.
fn match_clause_instance(head_pattern: &Fact, body_pattern: &Goal, head: &Fact, body: &Goal) -> Option<Substitution> {
    let mut found = None;
    let _ = injections(head_pattern.atoms(), head.atoms(), Coverage::Total, &Matching, Vec::new(), &mut |pairs, st| {
        if pairs.len() != head.len() {
            return ControlFlow::Continue(());
        }
        let mut st = st.clone();
        if match_goal(body_pattern, body, &mut st, 0) {
            found = Some(match_state_to_subst(&st));
            return ControlFlow::Break(());
        }
        ControlFlow::Continue(())
    });
    found
}

fn match_goal(p: &Goal, g: &Goal, st: &mut MatchState, depth: usize) -> bool {
    match (p, g) {
        (Goal::Top, Goal::Top) | (Goal::Bot, Goal::Bot) => true,
        (Goal::Atom(a), Goal::Atom(b)) => match Matching.solve(st, a, b) {
            Some(next) => {
                *st = next;
                true
            }
            None => false,
        },
        (Goal::Par(a1, b1), Goal::Par(a2, b2)) | (Goal::With(a1, b1), Goal::With(a2, b2)) => {
            match_goal(a1, a2, st, depth) && match_goal(b1, b2, st, depth)
        }
        (Goal::Forall(x, p1), Goal::Forall(y, g1)) => {
            let marker = Term::Const(crate::kernel::sym(&format!("\u{0}bound{depth}")));
            let p1 = p1.instantiate(x, &marker);
            let g1 = g1.instantiate(y, &marker);
            match_goal(&p1, &g1, st, depth + 1)
        }
        _ => false,
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ProverOptions {
    /// Maximum nesting depth of terms chosen for body-only variables.
    pub term_depth: usize,
    /// Give up after this many atomic contexts; see [`Prover::exhausted`].
    pub max_visits: Option<usize>,
    /// Prune contexts whose relaxed cost exceeds the remaining bound.
    pub relaxed_bound: bool,
}

impl Default for ProverOptions {
    fn default() -> ProverOptions {
        ProverOptions { term_depth: 2, max_visits: None, relaxed_bound: true }
    }
}

const UNSET: u32 = u32::MAX;

#[derive(Clone, PartialEq, Eq, Hash)]
enum TermNode {
    Const(Sym),
    Eigen(Eigen),
    App(Sym, Vec<u32>),
}

#[derive(Clone, PartialEq, Eq, Hash)]
struct AtomNode {
    pred: Sym,
    args: Vec<u32>,
}

/// Hash-consed ground terms and atoms.
#[derive(Default)]
struct Table {
    terms: Vec<TermNode>,
    term_ids: FxHashMap<TermNode, u32>,
    term_eigens: Vec<Vec<Eigen>>,
    atoms: Vec<AtomNode>,
    atom_ids: FxHashMap<AtomNode, u32>,
    atom_eigens: Vec<Vec<Eigen>>,
    /// The atom with every fresh constant replaced by [`MASK`].
    atom_shape: Vec<u32>,
}

const MASK: Eigen = Eigen::MAX;

impl Table {
    fn term(&mut self, node: TermNode) -> u32 {
        if let Some(&id) = self.term_ids.get(&node) {
            return id;
        }
        let mut eigens = match &node {
            TermNode::Const(_) => Vec::new(),
            TermNode::Eigen(c) => vec![*c],
            TermNode::App(_, args) => args.iter().flat_map(|&a| self.term_eigens[a as usize].iter().copied()).collect(),
        };
        eigens.sort_unstable();
        eigens.dedup();
        let id = self.terms.len() as u32;
        self.terms.push(node.clone());
        self.term_eigens.push(eigens);
        self.term_ids.insert(node, id);
        id
    }

    fn atom(&mut self, node: AtomNode) -> u32 {
        if let Some(&id) = self.atom_ids.get(&node) {
            return id;
        }
        let mut eigens: Vec<Eigen> =
            node.args.iter().flat_map(|&a| self.term_eigens[a as usize].iter().copied()).collect();
        eigens.sort_unstable();
        eigens.dedup();
        let masked = !eigens.is_empty() && eigens != [MASK];
        let id = self.atoms.len() as u32;
        self.atoms.push(node.clone());
        self.atom_eigens.push(eigens);
        self.atom_shape.push(id);
        self.atom_ids.insert(node.clone(), id);
        if masked {
            let args = node.args.iter().map(|&t| self.mask_term(t)).collect();
            self.atom_shape[id as usize] = self.atom(AtomNode { pred: node.pred, args });
        }
        id
    }

    fn mask_term(&mut self, id: u32) -> u32 {
        match self.terms[id as usize].clone() {
            TermNode::Eigen(_) => self.term(TermNode::Eigen(MASK)),
            TermNode::App(f, args) if !self.term_eigens[id as usize].is_empty() => {
                let args = args.iter().map(|&a| self.mask_term(a)).collect();
                self.term(TermNode::App(f, args))
            }
            _ => id,
        }
    }

    fn ground_term(&mut self, t: &Term) -> u32 {
        match t {
            Term::Const(c) => self.term(TermNode::Const(c.clone())),
            Term::Eigen(c) => self.term(TermNode::Eigen(*c)),
            Term::App(f, args) => {
                let ids = args.iter().map(|a| self.ground_term(a)).collect();
                self.term(TermNode::App(f.clone(), ids))
            }
            Term::Var(v) => panic!("variable {v} in a ground position"),
        }
    }

    fn to_term(&self, id: u32) -> Term {
        match &self.terms[id as usize] {
            TermNode::Const(c) => Term::Const(c.clone()),
            TermNode::Eigen(c) => Term::Eigen(*c),
            TermNode::App(f, args) => Term::App(f.clone(), args.iter().map(|&a| self.to_term(a)).collect()),
        }
    }

    fn to_atom(&self, id: u32) -> Atom {
        let a = &self.atoms[id as usize];
        Atom { pred: a.pred.clone(), args: a.args.iter().map(|&t| self.to_term(t)).collect() }
    }

    fn rename_term(&mut self, id: u32, map: &mut Vec<(Eigen, Eigen)>) -> u32 {
        if self.term_eigens[id as usize].is_empty() {
            return id;
        }
        match self.terms[id as usize].clone() {
            TermNode::Eigen(c) => {
                let n = match map.iter().find(|(from, _)| *from == c) {
                    Some(&(_, to)) => to,
                    None => {
                        let to = map.len() as Eigen;
                        map.push((c, to));
                        to
                    }
                };
                self.term(TermNode::Eigen(n))
            }
            TermNode::App(f, args) => {
                let args = args.iter().map(|&a| self.rename_term(a, map)).collect();
                self.term(TermNode::App(f, args))
            }
            TermNode::Const(_) => id,
        }
    }
}

/// A term with holes for the variables of a clause.
#[derive(Clone)]
enum TTerm {
    Slot(usize, Var),
    Ground(u32),
    App(Sym, Vec<TTerm>),
}

#[derive(Clone)]
struct TAtom {
    pred: Sym,
    args: Vec<TTerm>,
}

enum TGoal {
    Top,
    Bot,
    Atom(TAtom),
    Par(Rc<TGoal>, Rc<TGoal>),
    With(Rc<TGoal>, Rc<TGoal>),
    Forall(usize, Var, Rc<TGoal>),
}

#[derive(Default)]
struct Slots {
    names: Vec<Var>,
}

impl Slots {
    fn slot(&mut self, v: &Var) -> usize {
        match self.names.iter().position(|n| n == v) {
            Some(i) => i,
            None => {
                self.names.push(v.clone());
                self.names.len() - 1
            }
        }
    }
}

fn compile_term(t: &Term, scope: &[(Var, usize)], slots: &mut Slots, table: &mut Table) -> TTerm {
    match t {
        Term::Var(v) => match scope.iter().rev().find(|(n, _)| n == v) {
            Some(&(_, s)) => TTerm::Slot(s, v.clone()),
            None => TTerm::Slot(slots.slot(v), v.clone()),
        },
        Term::App(f, args) if !t.is_ground() => {
            TTerm::App(f.clone(), args.iter().map(|a| compile_term(a, scope, slots, table)).collect())
        }
        _ => TTerm::Ground(table.ground_term(t)),
    }
}

fn compile_atom(a: &Atom, scope: &[(Var, usize)], slots: &mut Slots, table: &mut Table) -> TAtom {
    TAtom { pred: a.pred.clone(), args: a.args.iter().map(|t| compile_term(t, scope, slots, table)).collect() }
}

fn compile_goal(g: &Goal, scope: &mut Vec<(Var, usize)>, slots: &mut Slots, table: &mut Table) -> Rc<TGoal> {
    Rc::new(match g {
        Goal::Top => TGoal::Top,
        Goal::Bot => TGoal::Bot,
        Goal::Atom(a) => TGoal::Atom(compile_atom(a, scope, slots, table)),
        Goal::Par(a, b) => TGoal::Par(compile_goal(a, scope, slots, table), compile_goal(b, scope, slots, table)),
        Goal::With(a, b) => TGoal::With(compile_goal(a, scope, slots, table), compile_goal(b, scope, slots, table)),
        Goal::Forall(x, body) => {
            // Bound variables get their own slot even when they shadow.
            slots.names.push(x.clone());
            let s = slots.names.len() - 1;
            scope.push((x.clone(), s));
            let body = compile_goal(body, scope, slots, table);
            scope.pop();
            TGoal::Forall(s, x.clone(), body)
        }
    })
}

fn instantiate_term(t: &TTerm, env: &[u32], table: &mut Table) -> u32 {
    match t {
        TTerm::Slot(s, _) => env[*s],
        TTerm::Ground(id) => *id,
        TTerm::App(f, args) => {
            let ids = args.iter().map(|a| instantiate_term(a, env, table)).collect();
            table.term(TermNode::App(f.clone(), ids))
        }
    }
}

fn instantiate_atom(a: &TAtom, env: &[u32], table: &mut Table) -> u32 {
    let args = a.args.iter().map(|t| instantiate_term(t, env, table)).collect();
    table.atom(AtomNode { pred: a.pred.clone(), args })
}

fn term_of(t: &TTerm, env: &[u32], table: &Table) -> Term {
    match t {
        TTerm::Slot(s, v) => {
            if env[*s] == UNSET {
                Term::Var(v.clone())
            } else {
                table.to_term(env[*s])
            }
        }
        TTerm::Ground(id) => table.to_term(*id),
        TTerm::App(f, args) => Term::App(f.clone(), args.iter().map(|a| term_of(a, env, table)).collect()),
    }
}

fn goal_of(g: &TGoal, env: &[u32], table: &Table) -> Goal {
    match g {
        TGoal::Top => Goal::Top,
        TGoal::Bot => Goal::Bot,
        TGoal::Atom(a) => {
            Goal::Atom(Atom { pred: a.pred.clone(), args: a.args.iter().map(|t| term_of(t, env, table)).collect() })
        }
        TGoal::Par(a, b) => Goal::par(goal_of(a, env, table), goal_of(b, env, table)),
        TGoal::With(a, b) => Goal::with(goal_of(a, env, table), goal_of(b, env, table)),
        TGoal::Forall(s, x, body) => {
            let mut inner = env.to_vec();
            inner[*s] = UNSET;
            Goal::forall(x.clone(), goal_of(body, &inner, table))
        }
    }
}

fn match_term(p: &TTerm, id: u32, env: &mut [u32], trail: &mut Vec<usize>, table: &Table) -> bool {
    match p {
        TTerm::Ground(g) => *g == id,
        TTerm::Slot(s, _) => {
            if env[*s] == UNSET {
                env[*s] = id;
                trail.push(*s);
                true
            } else {
                env[*s] == id
            }
        }
        TTerm::App(f, args) => match &table.terms[id as usize] {
            TermNode::App(g, ids) if f == g && args.len() == ids.len() => {
                args.iter().zip(ids).all(|(a, &i)| match_term(a, i, env, trail, table))
            }
            _ => false,
        },
    }
}

struct ClauseInfo {
    label: String,
    head: Vec<TAtom>,
    body: Rc<TGoal>,
    slots: usize,
    body_only: Vec<usize>,
    closes: bool,
}

/// A goal still to be decomposed by the right rules, with its bindings.
#[derive(Clone)]
struct Pending {
    goal: Rc<TGoal>,
    env: Rc<[u32]>,
}

/// Proof search with a failure memo shared across calls.
pub struct Prover<'p> {
    program: &'p Program,
    clauses: Vec<ClauseInfo>,
    opts: ProverOptions,
    table: Table,
    failed: FxHashMap<(Vec<u32>, usize), usize>,
    terms: FxHashMap<Vec<Eigen>, Rc<[u32]>>,
    /// Atomic contexts visited, and how many of them were answered by the
    /// failure memo.
    pub visited: usize,
    pub memo_hits: usize,
    /// Set when the visit budget ran out; negative answers are then unknown.
    pub exhausted: bool,
    cutoff: bool,
    relaxed: Relaxed,
    constants: Vec<Sym>,
    functions: Vec<(Sym, usize)>,
    /// Constants and functions the memo tables were built for.
    base: Option<(BTreeSet<Sym>, BTreeMap<Sym, usize>)>,
}

impl<'p> Prover<'p> {
    pub fn new(program: &'p Program) -> Prover<'p> {
        Prover::with_options(program, ProverOptions::default())
    }

    pub fn with_options(program: &'p Program, opts: ProverOptions) -> Prover<'p> {
        let mut table = Table::default();
        let mut clauses: Vec<ClauseInfo> = program
            .clauses
            .iter()
            .map(|c| {
                let mut slots = Slots::default();
                let head: Vec<TAtom> = c.head.iter().map(|a| compile_atom(a, &[], &mut slots, &mut table)).collect();
                let head_slots = slots.names.len();
                let body = compile_goal(&c.body, &mut Vec::new(), &mut slots, &mut table);
                // Free body variables not bound by the head.
                let body_only: Vec<usize> = c
                    .body_only_vars()
                    .iter()
                    .map(|v| slots.names.iter().position(|n| n == v).expect("body variable has a slot"))
                    .collect();
                debug_assert!(body_only.iter().all(|&s| s >= head_slots));
                ClauseInfo {
                    label: c.label.clone(),
                    head,
                    body,
                    slots: slots.names.len(),
                    body_only,
                    closes: c.body == Goal::Top,
                }
            })
            .collect();
        // Closing clauses first: they end a branch immediately.
        clauses.sort_by_key(|c| !c.closes);
        Prover {
            program,
            clauses,
            opts,
            table,
            failed: FxHashMap::default(),
            terms: FxHashMap::default(),
            visited: 0,
            memo_hits: 0,
            exhausted: false,
            cutoff: false,
            relaxed: Relaxed::disabled(),
            constants: Vec::new(),
            functions: Vec::new(),
            base: None,
        }
    }

    pub fn program(&self) -> &Program {
        self.program
    }

    /// Searches for a proof of `ctx` with at most `depth` backchaining steps
    /// in total. `ctx` must be ground.
    pub fn prove(&mut self, ctx: &[Goal], sig: &Signature, depth: usize) -> Option<Proof> {
        let base = (sig.constants.clone(), sig.functions.clone());
        if self.base.as_ref() != Some(&base) {
            self.failed.clear();
            self.terms.clear();
            self.constants = sig.constants.iter().cloned().collect();
            self.functions = sig.functions.iter().map(|(f, n)| (f.clone(), *n)).collect();
            self.relaxed = if self.opts.relaxed_bound {
                Relaxed::new(self.program, &self.constants, &self.functions)
            } else {
                Relaxed::disabled()
            };
            self.base = Some(base);
        }
        let mut next = sig.next_eigen();
        for g in ctx {
            let mut e = BTreeSet::new();
            g.collect_eigens(&mut e);
            if let Some(m) = e.iter().next_back() {
                next = next.max(m + 1);
            }
        }
        let mut pending = Vec::new();
        for g in ctx {
            let mut slots = Slots::default();
            let goal = compile_goal(g, &mut Vec::new(), &mut slots, &mut self.table);
            assert!(
                slots.names.iter().enumerate().all(|(i, _)| bound_slot(&goal, i)),
                "prove expects a ground context"
            );
            pending.push(Pending { goal, env: vec![UNSET; slots.names.len()].into() });
        }
        let sig_eigens: Rc<Vec<Eigen>> = Rc::new(sig.eigenvariables.iter().copied().collect());
        self.cutoff = false;
        let state = State { next, sig_eigens };
        self.search(Vec::new(), pending, &state, depth).map(|(p, _)| p)
    }

    /// Iterative deepening; returns the proof and the bound that found it.
    pub fn prove_iterative(&mut self, ctx: &[Goal], sig: &Signature, max_depth: usize) -> Option<(Proof, usize)> {
        for d in 0..=max_depth {
            if let Some(p) = self.prove(ctx, sig, d) {
                return Some((p, d));
            }
            if !self.cutoff || self.exhausted {
                // The search never reached the bound, so deeper ones fail too.
                return None;
            }
        }
        None
    }

    pub fn prove_fact(&mut self, f: &Fact, sig: &Signature, max_depth: usize) -> Option<(Proof, usize)> {
        let ctx: Vec<Goal> = f.iter().cloned().map(Goal::Atom).collect();
        self.prove_iterative(&ctx, sig, max_depth)
    }

    fn context_goals(&self, atoms: &[u32], pending: &[Pending]) -> Vec<Goal> {
        let mut out: Vec<Goal> = atoms.iter().map(|&a| Goal::Atom(self.table.to_atom(a))).collect();
        out.extend(pending.iter().map(|p| goal_of(&p.goal, &p.env, &self.table)));
        out
    }

    /// Candidate terms for body-only variables: ground terms over the
    /// constants and the fresh constants occurring in the context. A fresh
    /// constant absent from the context could be replaced by any constant
    /// throughout the rest of the proof, so it is only offered when the
    /// signature has no constants.
    fn candidate_terms(&mut self, ctx_eigens: &[Eigen], state: &State, vars: usize) -> Rc<[u32]> {
        let mut eigens = ctx_eigens.to_vec();
        if self.constants.is_empty() {
            eigens.extend(state.sig_eigens.iter().filter(|c| !ctx_eigens.contains(c)).take(vars));
        }
        if let Some(ts) = self.terms.get(&eigens) {
            return ts.clone();
        }
        let sig = Signature {
            constants: self.constants.iter().cloned().collect(),
            functions: self.functions.iter().cloned().collect(),
            eigenvariables: eigens.iter().copied().collect(),
            ..Signature::default()
        };
        let ts: Rc<[u32]> = sig.ground_terms(self.opts.term_depth).iter().map(|t| self.table.ground_term(t)).collect();
        self.terms.insert(eigens, ts.clone());
        ts
    }

    /// Returns the proof and the number of backchaining steps it uses.
    fn search(
        &mut self,
        mut atoms: Vec<u32>,
        mut pending: Vec<Pending>,
        state: &State,
        budget: usize,
    ) -> Option<(Proof, usize)> {
        if pending.iter().any(|p| matches!(*p.goal, TGoal::Top)) {
            return Some((Proof::Top { context: self.context_goals(&atoms, &pending) }, 0));
        }
        // Atoms are moved out eagerly; the first other goal is decomposed.
        while let Some(i) = pending.iter().position(|p| matches!(*p.goal, TGoal::Atom(_))) {
            let p = pending.remove(i);
            let TGoal::Atom(a) = &*p.goal else { unreachable!() };
            atoms.push(instantiate_atom(a, &p.env, &mut self.table));
        }
        if !pending.is_empty() {
            let p = pending.remove(0);
            let conclusion = || {
                let mut all = pending.clone();
                all.push(p.clone());
                all
            };
            return match &*p.goal {
                TGoal::Bot => {
                    let concl = conclusion();
                    let (child, n) = self.search(atoms.clone(), pending, state, budget)?;
                    Some((Proof::Bot { context: self.context_goals(&atoms, &concl), child: Box::new(child) }, n))
                }
                TGoal::Par(a, b) => {
                    let concl = conclusion();
                    pending.push(Pending { goal: a.clone(), env: p.env.clone() });
                    pending.push(Pending { goal: b.clone(), env: p.env.clone() });
                    let (child, n) = self.search(atoms.clone(), pending, state, budget)?;
                    Some((Proof::Par { context: self.context_goals(&atoms, &concl), child: Box::new(child) }, n))
                }
                TGoal::Forall(s, _, body) => {
                    let concl = conclusion();
                    let c = state.next;
                    let mut env = p.env.to_vec();
                    env[*s] = self.table.term(TermNode::Eigen(c));
                    pending.push(Pending { goal: body.clone(), env: env.into() });
                    let mut sig_eigens = (*state.sig_eigens).clone();
                    sig_eigens.push(c);
                    let inner = State { next: c + 1, sig_eigens: Rc::new(sig_eigens) };
                    let (child, n) = self.search(atoms.clone(), pending, &inner, budget)?;
                    Some((
                        Proof::Forall { context: self.context_goals(&atoms, &concl), eigen: c, child: Box::new(child) },
                        n,
                    ))
                }
                TGoal::With(a, b) => {
                    let concl = conclusion();
                    let mut l = pending.clone();
                    l.push(Pending { goal: a.clone(), env: p.env.clone() });
                    pending.push(Pending { goal: b.clone(), env: p.env.clone() });
                    // The smallest proof of the left premise leaves the most
                    // for the right one.
                    let mut left = None;
                    for b in 0..=budget {
                        let outer = std::mem::replace(&mut self.cutoff, false);
                        let found = self.search(atoms.clone(), l.clone(), state, b);
                        let cut = self.cutoff;
                        self.cutoff = outer || cut;
                        if found.is_some() || !cut || self.exhausted {
                            left = found;
                            break;
                        }
                    }
                    let (left, nl) = left?;
                    let (right, nr) = self.search(atoms.clone(), pending, state, budget - nl)?;
                    let proof = Proof::With {
                        context: self.context_goals(&atoms, &concl),
                        left: Box::new(left),
                        right: Box::new(right),
                    };
                    Some((proof, nl + nr))
                }
                TGoal::Top | TGoal::Atom(_) => unreachable!(),
            };
        }
        if budget == 0 || self.exhausted {
            self.cutoff = true;
            return None;
        }
        atoms.sort_unstable();
        let abstraction =
            atoms.iter().fold(0, |m, &a| m | self.relaxed.atom_bit(&self.table.atoms[a as usize], &self.table));
        let bound = self.relaxed.lower_bound(abstraction);
        if bound as usize > budget {
            if bound != INFINITE {
                self.cutoff = true;
            }
            return None;
        }
        self.visited += 1;
        if self.opts.max_visits.is_some_and(|m| self.visited > m) {
            self.exhausted = true;
            self.cutoff = true;
            return None;
        }
        let key = self.memo_key(&atoms, state);
        if let Some(&d) = self.failed.get(&key) {
            if d >= budget {
                self.memo_hits += 1;
                if d != usize::MAX {
                    self.cutoff = true;
                }
                return None;
            }
        }
        let outer = std::mem::replace(&mut self.cutoff, false);
        let found = self.backchain(&atoms, state, budget);
        let inner = self.cutoff;
        self.cutoff = outer || inner;
        if found.is_none() && !self.exhausted {
            let e = self.failed.entry(key).or_insert(0);
            *e = if inner { (*e).max(budget) } else { usize::MAX };
        }
        found
    }

    /// Sorted atoms with fresh constants renumbered by first occurrence, so
    /// that contexts differing only in the names of those constants share an
    /// entry. Unused fresh constants only matter when there are no others.
    fn memo_key(&mut self, atoms: &[u32], state: &State) -> (Vec<u32>, usize) {
        let mut map = Vec::new();
        let mut key: Vec<u32> = Vec::with_capacity(atoms.len());
        let mut with_eigens: Vec<(u32, u32)> = Vec::new();
        for &a in atoms {
            if self.table.atom_eigens[a as usize].is_empty() {
                key.push(a);
            } else {
                with_eigens.push((self.table.atom_shape[a as usize], a));
            }
        }
        with_eigens.sort_unstable();
        for (_, a) in with_eigens {
            let node = self.table.atoms[a as usize].clone();
            let args = node.args.iter().map(|&t| self.table.rename_term(t, &mut map)).collect();
            key.push(self.table.atom(AtomNode { pred: node.pred, args }));
        }
        key.sort_unstable();
        let unused = if self.constants.is_empty() { state.sig_eigens.len() - map.len() } else { 0 };
        (key, unused)
    }

    fn backchain(&mut self, atoms: &[u32], state: &State, budget: usize) -> Option<(Proof, usize)> {
        let mut ctx_eigens: Vec<Eigen> =
            atoms.iter().flat_map(|&a| self.table.atom_eigens[a as usize].iter().copied()).collect();
        ctx_eigens.sort_unstable();
        ctx_eigens.dedup();
        for ci in 0..self.clauses.len() {
            let mut matches: Vec<(Vec<bool>, Vec<u32>)> = Vec::new();
            {
                let clause = &self.clauses[ci];
                let mut env = vec![UNSET; clause.slots];
                let mut used = vec![false; atoms.len()];
                head_matches(&clause.head, 0, atoms, &mut used, &mut env, &self.table, &mut matches);
            }
            if matches.is_empty() {
                continue;
            }
            let body_only = self.clauses[ci].body_only.clone();
            let body = self.clauses[ci].body.clone();
            let terms = if body_only.is_empty() {
                Rc::from(Vec::new())
            } else {
                self.candidate_terms(&ctx_eigens, state, body_only.len())
            };
            let choices = body_only.len();
            for (used, env) in &matches {
                let rest: Vec<u32> = atoms.iter().zip(used).filter(|(_, u)| !**u).map(|(&a, _)| a).collect();
                let mut counter = vec![0usize; choices];
                loop {
                    if choices > 0 && terms.is_empty() {
                        break;
                    }
                    let mut env = env.clone();
                    for (k, &s) in body_only.iter().enumerate() {
                        env[s] = terms[counter[k]];
                    }
                    let env: Rc<[u32]> = env.into();
                    let pending = vec![Pending { goal: body.clone(), env: env.clone() }];
                    if let Some((child, n)) = self.search(rest.clone(), pending, state, budget - 1) {
                        let clause = &self.clauses[ci];
                        let head = Fact::new(
                            clause
                                .head
                                .iter()
                                .map(|a| Atom {
                                    pred: a.pred.clone(),
                                    args: a.args.iter().map(|t| term_of(t, &env, &self.table)).collect(),
                                })
                                .collect(),
                        );
                        let proof = Proof::Bc {
                            context: self.context_goals(atoms, &[]),
                            clause: clause.label.clone(),
                            head,
                            body: goal_of(&clause.body, &env, &self.table),
                            child: Box::new(child),
                        };
                        return Some((proof, n + 1));
                    }
                    // Next tuple of terms.
                    let mut k = 0;
                    while k < choices {
                        counter[k] += 1;
                        if counter[k] < terms.len() {
                            break;
                        }
                        counter[k] = 0;
                        k += 1;
                    }
                    if k == choices {
                        break;
                    }
                }
            }
        }
        None
    }
}

/// Backchaining over sets of atoms where heads are not consumed. Atoms are
/// abstracted either to their predicate or, without function symbols, to
/// the atom with every fresh constant replaced by one placeholder. Every
/// proof of a context maps to a relaxed one with no more backchaining
/// steps, so the relaxed cost of the abstracted context bounds the size of
/// any proof from below.
struct Relaxed {
    /// Constant indices when atoms keep their arguments.
    values: Option<FxHashMap<Sym, usize>>,
    index: FxHashMap<(Sym, Vec<usize>), u32>,
    rules: Vec<(u128, Vec<(u128, bool)>)>,
    cost: FxHashMap<u128, u32>,
    enabled: bool,
}

const INFINITE: u32 = u32::MAX;
const RELAXED_STATES: usize = 1 << 16;
const RELAXED_RULES: usize = 1 << 14;

impl Relaxed {
    fn disabled() -> Relaxed {
        Relaxed {
            values: None,
            index: FxHashMap::default(),
            rules: Vec::new(),
            cost: FxHashMap::default(),
            enabled: false,
        }
    }

    fn new(program: &Program, constants: &[Sym], functions: &[(Sym, usize)]) -> Relaxed {
        if functions.is_empty() && program.signature.functions.is_empty() {
            if let Some(r) = Relaxed::grounded(program, constants) {
                return r;
            }
        }
        let mut r = Relaxed::disabled();
        for c in &program.clauses {
            for a in c.head.iter() {
                let n = r.index.len() as u32;
                r.index.entry((a.pred.clone(), Vec::new())).or_insert(n);
            }
        }
        if r.index.len() > 128 {
            return Relaxed::disabled();
        }
        r.enabled = true;
        r.rules = program
            .clauses
            .iter()
            .map(|c| {
                let head = c.head.iter().fold(0, |m, a| m | r.bit(&a.pred, &[]));
                (head, r.branches(&c.body, &BTreeMap::new()))
            })
            .collect();
        r
    }

    fn grounded(program: &Program, constants: &[Sym]) -> Option<Relaxed> {
        let mut values: FxHashMap<Sym, usize> = FxHashMap::default();
        for c in constants.iter().chain(&program.signature.constants) {
            let n = values.len();
            values.entry(c.clone()).or_insert(n);
        }
        let star = values.len();
        let arity: BTreeMap<Sym, usize> = program.signature.predicates.iter().map(|(p, n)| (p.clone(), *n)).collect();
        let mut index = FxHashMap::default();
        for (p, n) in &arity {
            let count = (star + 1).checked_pow(*n as u32)?;
            if index.len() + count > 128 {
                return None;
            }
            for args in crate::kernel::tuples(&(0..=star).collect::<Vec<_>>(), *n) {
                let k = index.len() as u32;
                index.insert((p.clone(), args), k);
            }
        }
        let mut r =
            Relaxed { values: Some(values), index, rules: Vec::new(), cost: FxHashMap::default(), enabled: true };
        let domain: Vec<usize> = (0..=star).collect();
        for c in &program.clauses {
            let vars: Vec<Var> = c.vars().into_iter().collect();
            let instances = (star + 1).checked_pow(vars.len() as u32)?;
            if r.rules.len() + instances > RELAXED_RULES {
                return None;
            }
            for choice in crate::kernel::tuples(&domain, vars.len()) {
                let env: BTreeMap<Var, usize> = vars.iter().cloned().zip(choice).collect();
                let head = c.head.iter().fold(0, |m, a| m | r.bit(&a.pred, &r.args(&a.args, &env)));
                let branches = r.branches(&c.body, &env);
                r.rules.push((head, branches));
            }
        }
        Some(r)
    }

    fn star(&self) -> usize {
        self.values.as_ref().map_or(0, |v| v.len())
    }

    fn args(&self, args: &[Term], env: &BTreeMap<Var, usize>) -> Vec<usize> {
        if self.values.is_none() {
            return Vec::new();
        }
        args.iter()
            .map(|t| match t {
                Term::Var(v) => env.get(v).copied().unwrap_or(self.star()),
                Term::Const(c) => self.values.as_ref().unwrap()[c],
                _ => self.star(),
            })
            .collect()
    }

    /// Atoms that cannot be matched by any head share no bit.
    fn bit(&self, pred: &Sym, args: &[usize]) -> u128 {
        self.index.get(&(pred.clone(), args.to_vec())).map_or(0, |&i| 1 << i)
    }

    /// The leaves of the `&` structure of a body: their atoms and whether
    /// they contain `top`. Variables bound by `forall` become the
    /// placeholder.
    fn branches(&self, g: &Goal, env: &BTreeMap<Var, usize>) -> Vec<(u128, bool)> {
        match g {
            Goal::Top => vec![(0, true)],
            Goal::Bot => vec![(0, false)],
            Goal::Atom(a) => vec![(self.bit(&a.pred, &self.args(&a.args, env)), false)],
            Goal::Forall(x, body) => {
                let mut inner = env.clone();
                inner.insert(x.clone(), self.star());
                self.branches(body, &inner)
            }
            Goal::With(a, b) => {
                let mut out = self.branches(a, env);
                out.extend(self.branches(b, env));
                out
            }
            Goal::Par(a, b) => {
                let right = self.branches(b, env);
                self.branches(a, env)
                    .into_iter()
                    .flat_map(|(m, t)| right.iter().map(move |&(n, u)| (m | n, t || u)))
                    .collect()
            }
        }
    }

    fn atom_bit(&self, atom: &AtomNode, table: &Table) -> u128 {
        let args: Vec<usize> = match &self.values {
            None => Vec::new(),
            Some(values) => atom
                .args
                .iter()
                .map(|&t| match &table.terms[t as usize] {
                    TermNode::Const(c) => values[c],
                    _ => self.star(),
                })
                .collect(),
        };
        self.bit(&atom.pred, &args)
    }

    fn lower_bound(&mut self, state: u128) -> u32 {
        if !self.enabled {
            return 0;
        }
        if let Some(&c) = self.cost.get(&state) {
            return c;
        }
        // Explore everything reachable, then relax costs to a fixpoint.
        let mut fresh = vec![state];
        let mut stack = vec![state];
        self.cost.insert(state, INFINITE);
        while let Some(s) = stack.pop() {
            for (head, branches) in &self.rules {
                if head & !s != 0 {
                    continue;
                }
                for &(m, top) in branches {
                    let t = s | m;
                    if !top && !self.cost.contains_key(&t) {
                        self.cost.insert(t, INFINITE);
                        fresh.push(t);
                        stack.push(t);
                    }
                }
            }
            if self.cost.len() > RELAXED_STATES {
                self.enabled = false;
                self.cost.clear();
                return 0;
            }
        }
        loop {
            let mut changed = false;
            for &s in &fresh {
                let mut best = self.cost[&s];
                for (head, branches) in &self.rules {
                    if head & !s != 0 {
                        continue;
                    }
                    let mut total: u32 = 1;
                    for &(m, top) in branches {
                        if !top {
                            total = total.saturating_add(self.cost[&(s | m)]);
                        }
                    }
                    best = best.min(total);
                }
                if best < self.cost[&s] {
                    self.cost.insert(s, best);
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        self.cost[&state]
    }
}

struct State {
    next: Eigen,
    sig_eigens: Rc<Vec<Eigen>>,
}

/// Whether slot `s` is bound by a `forall` inside `g`.
fn bound_slot(g: &TGoal, s: usize) -> bool {
    match g {
        TGoal::Forall(b, _, body) => *b == s || bound_slot(body, s),
        TGoal::Par(a, b) | TGoal::With(a, b) => bound_slot(a, s) || bound_slot(b, s),
        _ => false,
    }
}

/// Injective placements of the head atoms on context positions. Among equal
/// context atoms only the first free one is tried.
fn head_matches(
    head: &[TAtom],
    i: usize,
    atoms: &[u32],
    used: &mut Vec<bool>,
    env: &mut Vec<u32>,
    table: &Table,
    out: &mut Vec<(Vec<bool>, Vec<u32>)>,
) {
    if i == head.len() {
        out.push((used.clone(), env.clone()));
        return;
    }
    let h = &head[i];
    for j in 0..atoms.len() {
        if used[j] || (j > 0 && atoms[j] == atoms[j - 1] && !used[j - 1]) {
            continue;
        }
        let node = &table.atoms[atoms[j] as usize];
        if node.pred != h.pred || node.args.len() != h.args.len() {
            continue;
        }
        let mut trail = Vec::new();
        if h.args.iter().zip(&node.args).all(|(p, &t)| match_term(p, t, env, &mut trail, table)) {
            used[j] = true;
            head_matches(head, i + 1, atoms, used, env, table, out);
            used[j] = false;
        }
        for s in trail {
            env[s] = UNSET;
        }
    }
}

/// Weakening: if `small` is provable within `depth`, so is `large ⊒ small`.
/// Returns whether both are provable.
pub fn check_weakening(program: &Program, small: &[Goal], large: &[Goal], sig: &Signature, depth: usize) -> bool {
    let mut prover = Prover::new(program);
    prover.prove(small, sig, depth).is_some() && prover.prove(large, sig, depth).is_some()
}
