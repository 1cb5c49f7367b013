//! Bottom-up evaluation: the symbolic immediate-consequence step, subsumption
//! reduction, fixpoint iteration with provenance, goal checking, trace
//! extraction and the monadic fragment tools.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use thiserror::Error;

use crate::judgment::{asat, asat_restricted, denotation_member, entails, AsatOptions, Interpretation, JudgmentOutput};
use crate::kernel::{canonicalize_with_renaming, sym, Atom, Eigen, Fact, Session, Signature, Substitution, Term, Var};
use crate::prover::Proof;
use crate::syntax::{Clause, Goal, Program};

/// How one fact was first derived.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProvenanceRecord {
    /// Canonical form of the derived fact.
    pub fact: Fact,
    pub clause_index: usize,
    pub clause: String,
    /// The clause variant that fired and the renaming that produced it.
    pub head: Fact,
    pub body: Goal,
    pub variant: Substitution,
    pub subst: Substitution,
    pub residue: Fact,
    /// Maps the variables of `(head + residue)·subst` to those of `fact`.
    pub canonical: Substitution,
    pub used_facts: Vec<Fact>,
    pub round: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct FixpointOptions {
    pub max_rounds: usize,
    pub asat: AsatOptions,
    /// Only feed facts that are new since the previous round to the atom
    /// cases; a final full round confirms stability.
    pub delta: bool,
}

impl Default for FixpointOptions {
    fn default() -> FixpointOptions {
        FixpointOptions { max_rounds: 1000, asat: AsatOptions::default(), delta: false }
    }
}

#[derive(Clone, Debug)]
pub struct FixpointResult {
    pub interpretation: Interpretation,
    pub rounds: usize,
    pub terminated: bool,
    pub monadic_guarantee: bool,
    /// First derivation of every fact ever produced, including facts that a
    /// later reduction removed.
    pub provenance: HashMap<Fact, ProvenanceRecord>,
}

/// One application of the symbolic consequence operator.
pub fn sp_step(
    program: &Program,
    interp: &Interpretation,
    opts: AsatOptions,
    session: &mut Session,
) -> Vec<(Fact, ProvenanceRecord)> {
    step(program, interp, opts, session, 1, None)
}

fn has_with(g: &Goal) -> bool {
    match g {
        Goal::With(..) => true,
        Goal::Par(a, b) => has_with(a) || has_with(b),
        Goal::Forall(_, g) => has_with(g),
        _ => false,
    }
}

fn step(
    program: &Program,
    interp: &Interpretation,
    opts: AsatOptions,
    session: &mut Session,
    round: usize,
    delta: Option<&[bool]>,
) -> Vec<(Fact, ProvenanceRecord)> {
    let mut out = Vec::new();
    for (ci, clause) in program.clauses.iter().enumerate() {
        let variant = session.renaming(&clause.vars());
        let Clause { head, body, .. } = clause.apply(&variant);
        let outputs: Vec<JudgmentOutput> = match delta {
            None => asat(interp, std::slice::from_ref(&body), opts, session),
            Some(d) => {
                let outs = if has_with(&body) {
                    asat(interp, std::slice::from_ref(&body), opts, session)
                } else {
                    asat_restricted(interp, std::slice::from_ref(&body), opts, session, Some(d))
                };
                outs.into_iter().filter(|o| round == 1 || o.support.iter().any(|&k| d[k])).collect()
            }
        };
        for o in outputs {
            let raw = head.union(&o.fact).apply(&o.subst);
            let (fact, canonical) = canonicalize_with_renaming(&raw);
            let mut used: Vec<Fact> = o.support.iter().map(|&k| interp.facts()[k].clone()).collect();
            used.dedup();
            out.push((
                fact.clone(),
                ProvenanceRecord {
                    fact,
                    clause_index: ci,
                    clause: clause.label.clone(),
                    head: head.clone(),
                    body: body.clone(),
                    variant: variant.clone(),
                    subst: o.subst,
                    residue: o.fact,
                    canonical,
                    used_facts: used,
                    round,
                },
            ));
        }
    }
    out
}

/// Removes every fact entailed by another one, keeping one representative
/// per equivalence class.
pub fn reduce(interp: &Interpretation) -> Interpretation {
    let mut order: Vec<&Fact> = interp.iter().collect();
    order.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    let mut kept: Vec<Fact> = Vec::new();
    for f in order {
        if kept.iter().any(|k| entails(f, k)) {
            continue;
        }
        kept.retain(|k| !entails(k, f));
        kept.push(f.clone());
    }
    kept.sort();
    Interpretation::new(kept)
}

/// Iterates `I ↦ reduce(I ∪ S(I))` from the empty interpretation until the
/// denotation stops growing or the round cap is hit.
pub fn fixpoint(program: &Program, opts: &FixpointOptions) -> FixpointResult {
    let mut session = Session::new();
    let mut provenance: HashMap<Fact, ProvenanceRecord> = HashMap::new();
    let mut current = Interpretation::empty();
    let mut previous: HashSet<Fact> = HashSet::new();
    let mut rounds = 0;
    let mut terminated = false;
    let mut full_check = false;
    while rounds < opts.max_rounds {
        let delta_flags: Option<Vec<bool>> =
            (opts.delta && !full_check).then(|| current.iter().map(|f| !previous.contains(f)).collect());
        let produced = step(program, &current, opts.asat, &mut session, rounds + 1, delta_flags.as_deref());
        let mut fresh = Vec::new();
        for (f, rec) in produced {
            provenance.entry(f.clone()).or_insert(rec);
            if !denotation_member(&current, &f) {
                fresh.push(f);
            }
        }
        if fresh.is_empty() {
            if opts.delta && !full_check {
                full_check = true;
                continue;
            }
            terminated = true;
            break;
        }
        full_check = false;
        previous = current.iter().cloned().collect();
        let mut all: Vec<Fact> = current.facts().to_vec();
        all.extend(fresh);
        current = reduce(&Interpretation::new(all));
        rounds += 1;
    }
    FixpointResult { interpretation: current, rounds, terminated, monadic_guarantee: is_monadic(program).0, provenance }
}

/// An output of the goal judgment with an empty residue, if any.
pub fn check_goal(result: &FixpointResult, goal: &Goal) -> Option<JudgmentOutput> {
    check_goal_in(&result.interpretation, goal)
}

pub fn check_goal_in(interp: &Interpretation, goal: &Goal) -> Option<JudgmentOutput> {
    let mut session = Session::new();
    asat(interp, std::slice::from_ref(goal), AsatOptions::default(), &mut session)
        .into_iter()
        .find(|o| o.fact.is_empty())
}

/// One backchaining step of a trace, in proof order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceStep {
    pub clause: String,
    /// Ground instance of the clause's own variables.
    pub subst: Substitution,
    /// The configuration the clause was applied to.
    pub configuration: Fact,
}

#[derive(Clone, Debug)]
pub struct Trace {
    pub proof: Proof,
    /// Signature the proof lives in: the program's symbols, the goal's and
    /// the constants that ground leftover variables.
    pub signature: Signature,
    pub steps: Vec<TraceStep>,
}

impl fmt::Display for Trace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.steps.iter().enumerate() {
            writeln!(f, "{:>3}. {}   via {} {}", i + 1, s.configuration, s.clause, s.subst)?;
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TraceError {
    #[error("goal is not entailed by the fixpoint")]
    NotEntailed,
    #[error("no recorded derivation covers `{0}`")]
    ProvenanceGap(String),
    #[error("goal mentions unknown symbols: {0}")]
    Signature(String),
    #[error("replayed instance does not fit `{0}`")]
    Inconsistent(String),
}

/// Replays provenance records top-down into a proof of `goal`.
pub fn extract_trace(program: &Program, result: &FixpointResult, goal: &Goal) -> Result<Trace, TraceError> {
    if check_goal(result, goal).is_none() {
        return Err(TraceError::NotEntailed);
    }
    let signature = program.signature_with_goal(goal).map_err(|e| TraceError::Signature(e.to_string()))?;
    let mut records: Vec<&ProvenanceRecord> = result.provenance.values().collect();
    records.sort_by(|a, b| {
        a.round.cmp(&b.round).then_with(|| a.fact.len().cmp(&b.fact.len())).then_with(|| a.fact.cmp(&b.fact))
    });
    let mut used = BTreeSet::new();
    goal.collect_eigens(&mut used);
    let mut builder = TraceBuilder {
        program,
        records,
        next_eigen: used.iter().next_back().map_or(0, |m| m + 1).max(signature.next_eigen()),
        grounding: BTreeSet::new(),
        steps: Vec::new(),
    };
    let proof = builder.build(vec![goal.clone()], usize::MAX)?;
    let mut signature = signature;
    signature.eigenvariables.extend(builder.grounding.iter().copied());
    Ok(Trace { proof, signature, steps: builder.steps })
}

struct TraceBuilder<'a> {
    program: &'a Program,
    records: Vec<&'a ProvenanceRecord>,
    next_eigen: Eigen,
    grounding: BTreeSet<Eigen>,
    steps: Vec<TraceStep>,
}

impl TraceBuilder<'_> {
    fn fresh(&mut self) -> Eigen {
        let c = self.next_eigen;
        self.next_eigen += 1;
        c
    }

    fn build(&mut self, mut ctx: Vec<Goal>, below: usize) -> Result<Proof, TraceError> {
        if ctx.contains(&Goal::Top) {
            return Ok(Proof::Top { context: ctx });
        }
        if let Some(i) = ctx.iter().position(|g| !g.is_atomic()) {
            let conclusion = ctx.clone();
            let g = ctx.remove(i);
            return Ok(match g {
                Goal::Bot => Proof::Bot { context: conclusion, child: Box::new(self.build(ctx, below)?) },
                Goal::Par(a, b) => {
                    ctx.push(*a);
                    ctx.push(*b);
                    Proof::Par { context: conclusion, child: Box::new(self.build(ctx, below)?) }
                }
                Goal::Forall(x, body) => {
                    let c = self.fresh();
                    ctx.push(body.instantiate(&x, &Term::Eigen(c)));
                    Proof::Forall { context: conclusion, eigen: c, child: Box::new(self.build(ctx, below)?) }
                }
                Goal::With(a, b) => {
                    let mut l = ctx.clone();
                    l.push(*a);
                    ctx.push(*b);
                    let left = self.build(l, below)?;
                    let right = self.build(ctx, below)?;
                    Proof::With { context: conclusion, left: Box::new(left), right: Box::new(right) }
                }
                Goal::Top | Goal::Atom(_) => unreachable!(),
            });
        }
        let leaf = Fact::new(
            ctx.iter()
                .map(|g| match g {
                    Goal::Atom(a) => a.clone(),
                    _ => unreachable!(),
                })
                .collect(),
        );
        let (rec, sigma) = self
            .records
            .iter()
            .filter(|r| r.round < below)
            .find_map(|r| crate::judgment::entails_fact(&leaf, &r.fact).map(|(s, _)| (*r, s)))
            .ok_or_else(|| TraceError::ProvenanceGap(leaf.to_string()))?;
        // τ(v) = v·θ·ρ·σ, then leftover variables become fresh constants.
        let through = |t: &Term| t.apply(&rec.subst).apply(&rec.canonical).apply(&sigma);
        let mut tau = Substitution::nil();
        let mut vars = rec.head.vars();
        vars.extend(rec.body.free_vars());
        for v in &vars {
            tau.insert(v.clone(), through(&Term::Var(v.clone())));
        }
        let mut leftover = BTreeSet::new();
        for (_, t) in tau.iter() {
            t.collect_vars(&mut leftover);
        }
        if !leftover.is_empty() {
            let mut ground = Substitution::nil();
            for v in leftover {
                let c = self.fresh();
                self.grounding.insert(c);
                ground.insert(v, Term::Eigen(c));
            }
            tau = Substitution::from_pairs(tau.iter().map(|(v, t)| (v.clone(), t.apply(&ground))));
        }
        let head = rec.head.apply(&tau);
        let body = rec.body.apply(&tau);
        if !head.included_in(&leaf) {
            return Err(TraceError::Inconsistent(leaf.to_string()));
        }
        let original = &self.program.clauses[rec.clause_index];
        let subst = Substitution::from_pairs(
            original
                .vars()
                .into_iter()
                .map(|v| (v.clone(), Term::Var(v)).1.apply(&rec.variant).apply(&tau))
                .zip(original.vars())
                .map(|(t, v)| (v, t)),
        );
        self.steps.push(TraceStep { clause: rec.clause.clone(), subst, configuration: leaf.clone() });
        let mut premise: Vec<Goal> = leaf.difference(&head).into_atoms().into_iter().map(Goal::Atom).collect();
        premise.push(body.clone());
        let child = self.build(premise, rec.round)?;
        Ok(Proof::Bc { context: ctx, clause: rec.clause.clone(), head, body, child: Box::new(child) })
    }
}

/// Whether the program lies in the monadic fragment, with one line per
/// violation.
pub fn is_monadic(program: &Program) -> (bool, Vec<String>) {
    let mut diags = Vec::new();
    for (f, n) in &program.signature.functions {
        diags.push(format!("function symbol {f}/{n}"));
    }
    for (p, n) in &program.signature.predicates {
        if *n > 1 {
            diags.push(format!("predicate {p}/{n} has more than one argument (try monadize)"));
        }
    }
    (diags.is_empty(), diags)
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("cannot monadize at ({symbol}, {position}): {reason}")]
pub struct NotApplicable {
    pub symbol: String,
    pub position: usize,
    pub reason: String,
}

fn goal_atoms<'a>(g: &'a Goal, out: &mut Vec<&'a Atom>) {
    match g {
        Goal::Atom(a) => out.push(a),
        Goal::Par(a, b) | Goal::With(a, b) => {
            goal_atoms(a, out);
            goal_atoms(b, out);
        }
        Goal::Forall(_, g) => goal_atoms(g, out),
        Goal::Top | Goal::Bot => {}
    }
}

/// Folds argument positions that hold a constant in every occurrence into
/// the predicate name, e.g. `m(X, unlocked)` becomes `m_unlocked(X)`.
pub fn monadize(program: &Program) -> Result<Program, NotApplicable> {
    if is_monadic(program).0 {
        return Ok(program.clone());
    }
    if let Some((f, n)) = program.signature.functions.iter().next() {
        return Err(NotApplicable {
            symbol: f.to_string(),
            position: *n,
            reason: "function symbols cannot be folded".into(),
        });
    }
    let mut atoms: Vec<&Atom> = Vec::new();
    for c in &program.clauses {
        atoms.extend(c.head.iter());
        goal_atoms(&c.body, &mut atoms);
    }
    let mut foldable: BTreeMap<(String, usize), bool> = BTreeMap::new();
    for a in &atoms {
        for (i, t) in a.args.iter().enumerate() {
            let e = foldable.entry((a.pred.to_string(), i)).or_insert(true);
            *e &= matches!(t, Term::Const(_));
        }
    }
    for (p, n) in &program.signature.predicates {
        let open: Vec<usize> = (0..*n).filter(|&i| !foldable[&(p.to_string(), i)]).collect();
        if open.len() > 1 {
            return Err(NotApplicable {
                symbol: p.to_string(),
                position: open[1] + 1,
                reason: "more than one argument position carries variables".into(),
            });
        }
    }
    let fold = |a: &Atom| -> Atom {
        let mut name = a.pred.to_string();
        let mut args = Vec::new();
        for (i, t) in a.args.iter().enumerate() {
            if foldable[&(a.pred.to_string(), i)] {
                name.push('_');
                name.push_str(&t.to_string());
            } else {
                args.push(t.clone());
            }
        }
        Atom { pred: sym(&name), args }
    };
    fn fold_goal(g: &Goal, fold: &dyn Fn(&Atom) -> Atom) -> Goal {
        match g {
            Goal::Atom(a) => Goal::Atom(fold(a)),
            Goal::Par(a, b) => Goal::par(fold_goal(a, fold), fold_goal(b, fold)),
            Goal::With(a, b) => Goal::with(fold_goal(a, fold), fold_goal(b, fold)),
            Goal::Forall(x, g) => Goal::Forall(x.clone(), Box::new(fold_goal(g, fold))),
            Goal::Top | Goal::Bot => g.clone(),
        }
    }
    let clauses: Vec<Clause> = program
        .clauses
        .iter()
        .map(|c| Clause {
            head: Fact::new(c.head.iter().map(fold).collect()),
            body: fold_goal(&c.body, &fold),
            label: c.label.clone(),
        })
        .collect();
    let mut out = Program::new(clauses).map_err(|e| NotApplicable {
        symbol: String::new(),
        position: 0,
        reason: e.to_string(),
    })?;
    out.warnings = program.warnings.clone();
    Ok(out)
}

/// Folds a fact the same way [`monadize`] folded its program: every atom
/// whose predicate is unknown to `target` is tried with constant arguments
/// folded into the name.
pub fn monadize_fact(target: &Program, f: &Fact) -> Fact {
    let known = &target.signature.predicates;
    Fact::new(
        f.iter()
            .map(|a| {
                if known.get(&a.pred) == Some(&a.arity()) {
                    return a.clone();
                }
                for keep in 0..=a.arity() {
                    let mut name = a.pred.to_string();
                    let mut args = Vec::new();
                    for (i, t) in a.args.iter().enumerate() {
                        if i + 1 == keep || !matches!(t, Term::Const(_)) {
                            args.push(t.clone());
                        } else {
                            name.push('_');
                            name.push_str(&t.to_string());
                        }
                    }
                    if known.get(name.as_str()) == Some(&args.len()) {
                        return Atom { pred: sym(&name), args };
                    }
                }
                a.clone()
            })
            .collect(),
    )
}

/// A multiset of predicate names; constant and nullary atoms form their own
/// singleton cluster.
pub type Cluster = Vec<String>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("not monadic: {0}")]
pub struct NotMonadic(pub String);

/// Groups the atoms of a monadic fact by their variable.
pub fn cluster(f: &Fact) -> Result<Vec<Cluster>, NotMonadic> {
    let mut by_var: BTreeMap<Var, Cluster> = BTreeMap::new();
    let mut singles: Vec<Cluster> = Vec::new();
    for a in f.iter() {
        match a.args.as_slice() {
            [] => singles.push(vec![a.pred.to_string()]),
            [Term::Var(v)] => by_var.entry(v.clone()).or_default().push(a.pred.to_string()),
            [t @ (Term::Const(_) | Term::Eigen(_))] => singles.push(vec![format!("{}({t})", a.pred)]),
            _ => return Err(NotMonadic(a.to_string())),
        }
    }
    let mut out: Vec<Cluster> = by_var.into_values().chain(singles).collect();
    for c in &mut out {
        c.sort();
    }
    out.sort();
    Ok(out)
}

fn sub_multiset(small: &Cluster, large: &Cluster) -> bool {
    let mut i = 0;
    for x in small {
        while i < large.len() && large[i] < *x {
            i += 1;
        }
        if i == large.len() || large[i] != *x {
            return false;
        }
        i += 1;
    }
    true
}

/// `s ⊒ t`: an injective map sending each cluster of `t` into a cluster of
/// `s` that contains it.
pub fn entails_cluster(s: &[Cluster], t: &[Cluster]) -> bool {
    if t.len() > s.len() {
        return false;
    }
    let sorted = |c: &Cluster| {
        let mut c = c.clone();
        c.sort();
        c
    };
    let s: Vec<Cluster> = s.iter().map(sorted).collect();
    let t: Vec<Cluster> = t.iter().map(sorted).collect();
    let adj: Vec<Vec<usize>> = t.iter().map(|ti| (0..s.len()).filter(|&j| sub_multiset(ti, &s[j])).collect()).collect();
    let mut owner: Vec<Option<usize>> = vec![None; s.len()];
    fn augment(i: usize, adj: &[Vec<usize>], owner: &mut [Option<usize>], seen: &mut [bool]) -> bool {
        for &j in &adj[i] {
            if seen[j] {
                continue;
            }
            seen[j] = true;
            if owner[j].is_none_or(|k| augment(k, adj, owner, seen)) {
                owner[j] = Some(i);
                return true;
            }
        }
        false
    }
    (0..t.len()).all(|i| augment(i, &adj, &mut owner, &mut vec![false; s.len()]))
}

pub fn show_clusters(cs: &[Cluster]) -> String {
    let parts: Vec<String> = cs.iter().map(|c| c.concat()).collect();
    format!("{{{}}}", parts.join(", "))
}
