//! Value algebra shared by every other module: signatures, terms, atoms,
//! facts (multisets of atoms), substitutions, renaming and fresh names.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

/// Interned-ish symbol name.
pub type Sym = Arc<str>;

pub fn sym(s: &str) -> Sym {
    Arc::from(s)
}

/// Variables come in three flavours. `Named` variables are written by the
/// user, `Fresh` ones are allocated by a [`Session`] and `Canon` ones only
/// appear in canonical facts. Fresh and canonical names cannot be produced by
/// the parser.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub enum Var {
    Canon(u32),
    Named(Sym),
    Fresh(u32),
}

impl Var {
    pub fn named(s: &str) -> Var {
        Var::Named(sym(s))
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::Canon(i) => write!(f, "X{i}"),
            Var::Named(s) => write!(f, "{s}"),
            Var::Fresh(i) => write!(f, "_{i}"),
        }
    }
}

/// Identifier of an eigenvariable (a constant introduced by the ∀ rule).
pub type Eigen = u32;

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub enum Term {
    Var(Var),
    Const(Sym),
    Eigen(Eigen),
    App(Sym, Vec<Term>),
}

impl Term {
    pub fn var(name: &str) -> Term {
        Term::Var(Var::named(name))
    }

    pub fn constant(name: &str) -> Term {
        Term::Const(sym(name))
    }

    pub fn app(f: &str, args: Vec<Term>) -> Term {
        Term::App(sym(f), args)
    }

    pub fn is_ground(&self) -> bool {
        match self {
            Term::Var(_) => false,
            Term::Const(_) | Term::Eigen(_) => true,
            Term::App(_, args) => args.iter().all(Term::is_ground),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Term::App(_, args) => 1 + args.iter().map(Term::depth).max().unwrap_or(0),
            _ => 0,
        }
    }

    pub fn collect_vars(&self, out: &mut BTreeSet<Var>) {
        match self {
            Term::Var(v) => {
                out.insert(v.clone());
            }
            Term::App(_, args) => args.iter().for_each(|a| a.collect_vars(out)),
            _ => {}
        }
    }

    pub fn occurs(&self, v: &Var) -> bool {
        match self {
            Term::Var(w) => w == v,
            Term::App(_, args) => args.iter().any(|a| a.occurs(v)),
            _ => false,
        }
    }

    pub fn mentions_eigen(&self, c: Eigen) -> bool {
        match self {
            Term::Eigen(d) => *d == c,
            Term::App(_, args) => args.iter().any(|a| a.mentions_eigen(c)),
            _ => false,
        }
    }

    pub fn collect_eigens(&self, out: &mut BTreeSet<Eigen>) {
        match self {
            Term::Eigen(c) => {
                out.insert(*c);
            }
            Term::App(_, args) => args.iter().for_each(|a| a.collect_eigens(out)),
            _ => {}
        }
    }

    /// Replaces variables by their bindings; unbound variables are kept.
    pub fn apply(&self, theta: &Substitution) -> Term {
        if theta.is_empty() {
            return self.clone();
        }
        match self {
            Term::Var(v) => match theta.get(v) {
                Some(t) => t.clone(),
                None => self.clone(),
            },
            Term::App(f, args) => Term::App(f.clone(), args.iter().map(|a| a.apply(theta)).collect()),
            _ => self.clone(),
        }
    }

    pub fn replace_eigen(&self, c: Eigen, by: &Term) -> Term {
        match self {
            Term::Eigen(d) if *d == c => by.clone(),
            Term::App(f, args) => Term::App(f.clone(), args.iter().map(|a| a.replace_eigen(c, by)).collect()),
            _ => self.clone(),
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => write!(f, "{v}"),
            Term::Const(c) => write!(f, "{c}"),
            Term::Eigen(c) => write!(f, "_c{c}"),
            Term::App(g, args) => {
                write!(f, "{g}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct Atom {
    pub pred: Sym,
    pub args: Vec<Term>,
}

impl Atom {
    pub fn new(pred: &str, args: Vec<Term>) -> Atom {
        Atom { pred: sym(pred), args }
    }

    pub fn prop(pred: &str) -> Atom {
        Atom::new(pred, Vec::new())
    }

    pub fn arity(&self) -> usize {
        self.args.len()
    }

    pub fn is_ground(&self) -> bool {
        self.args.iter().all(Term::is_ground)
    }

    pub fn collect_vars(&self, out: &mut BTreeSet<Var>) {
        self.args.iter().for_each(|a| a.collect_vars(out));
    }

    pub fn vars(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    pub fn mentions_eigen(&self, c: Eigen) -> bool {
        self.args.iter().any(|a| a.mentions_eigen(c))
    }

    pub fn apply(&self, theta: &Substitution) -> Atom {
        Atom { pred: self.pred.clone(), args: self.args.iter().map(|a| a.apply(theta)).collect() }
    }

    pub fn replace_eigen(&self, c: Eigen, by: &Term) -> Atom {
        Atom { pred: self.pred.clone(), args: self.args.iter().map(|a| a.replace_eigen(c, by)).collect() }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.pred)?;
        if !self.args.is_empty() {
            write!(f, "(")?;
            for (i, a) in self.args.iter().enumerate() {
                if i > 0 {
                    write!(f, ",")?;
                }
                write!(f, "{a}")?;
            }
            write!(f, ")")?;
        }
        Ok(())
    }
}

/// A multiset of atoms, stored as a sorted vector so that structural
/// equality coincides with multiset equality.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Default)]
pub struct Fact {
    atoms: Vec<Atom>,
}

impl Fact {
    pub fn empty() -> Fact {
        Fact { atoms: Vec::new() }
    }

    pub fn new(mut atoms: Vec<Atom>) -> Fact {
        atoms.sort();
        Fact { atoms }
    }

    pub fn singleton(a: Atom) -> Fact {
        Fact { atoms: vec![a] }
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn into_atoms(self) -> Vec<Atom> {
        self.atoms
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Atom> {
        self.atoms.iter()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Cardinality |M|.
    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn count(&self, a: &Atom) -> usize {
        self.atoms.iter().filter(|b| *b == a).count()
    }

    pub fn is_ground(&self) -> bool {
        self.atoms.iter().all(Atom::is_ground)
    }

    /// Multiset union `M1 + M2`.
    pub fn union(&self, other: &Fact) -> Fact {
        let mut atoms = Vec::with_capacity(self.len() + other.len());
        let (mut i, mut j) = (0, 0);
        while i < self.atoms.len() && j < other.atoms.len() {
            if self.atoms[i] <= other.atoms[j] {
                atoms.push(self.atoms[i].clone());
                i += 1;
            } else {
                atoms.push(other.atoms[j].clone());
                j += 1;
            }
        }
        atoms.extend_from_slice(&self.atoms[i..]);
        atoms.extend_from_slice(&other.atoms[j..]);
        Fact { atoms }
    }

    fn merge_with(&self, other: &Fact, mut keep: impl FnMut(usize, usize) -> usize) -> Fact {
        let mut atoms = Vec::new();
        let mut i = 0;
        let mut j = 0;
        while i < self.atoms.len() || j < other.atoms.len() {
            let a = match (self.atoms.get(i), other.atoms.get(j)) {
                (Some(x), Some(y)) => std::cmp::min(x, y),
                (Some(x), None) => x,
                (None, Some(y)) => y,
                (None, None) => unreachable!(),
            }
            .clone();
            let mut n1 = 0;
            while self.atoms.get(i) == Some(&a) {
                n1 += 1;
                i += 1;
            }
            let mut n2 = 0;
            while other.atoms.get(j) == Some(&a) {
                n2 += 1;
                j += 1;
            }
            for _ in 0..keep(n1, n2) {
                atoms.push(a.clone());
            }
        }
        Fact { atoms }
    }

    /// Multiset difference, truncated at zero.
    pub fn difference(&self, other: &Fact) -> Fact {
        self.merge_with(other, |a, b| a.saturating_sub(b))
    }

    pub fn intersection(&self, other: &Fact) -> Fact {
        self.merge_with(other, std::cmp::min)
    }

    /// Pointwise maximum; the least upper bound for [`Fact::included_in`].
    pub fn merge(&self, other: &Fact) -> Fact {
        self.merge_with(other, std::cmp::max)
    }

    /// Multiset inclusion `self ⊑ other`.
    pub fn included_in(&self, other: &Fact) -> bool {
        let mut j = 0;
        for a in &self.atoms {
            loop {
                match other.atoms.get(j) {
                    None => return false,
                    Some(b) if b < a => j += 1,
                    Some(b) if b == a => {
                        j += 1;
                        break;
                    }
                    Some(_) => return false,
                }
            }
        }
        true
    }

    pub fn vars(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        for a in &self.atoms {
            a.collect_vars(&mut out);
        }
        out
    }

    pub fn eigens(&self) -> BTreeSet<Eigen> {
        let mut out = BTreeSet::new();
        for a in &self.atoms {
            a.args.iter().for_each(|t| t.collect_eigens(&mut out));
        }
        out
    }

    pub fn mentions_eigen(&self, c: Eigen) -> bool {
        self.atoms.iter().any(|a| a.mentions_eigen(c))
    }

    pub fn apply(&self, theta: &Substitution) -> Fact {
        if theta.is_empty() {
            return self.clone();
        }
        Fact::new(self.atoms.iter().map(|a| a.apply(theta)).collect())
    }

    /// Sub-multiset obtained by keeping the atoms whose indices are listed.
    pub fn select(&self, indices: &[usize]) -> Fact {
        Fact::new(indices.iter().map(|&i| self.atoms[i].clone()).collect())
    }

    pub fn without(&self, indices: &[usize]) -> Fact {
        Fact {
            atoms: self
                .atoms
                .iter()
                .enumerate()
                .filter(|(i, _)| !indices.contains(i))
                .map(|(_, a)| a.clone())
                .collect(),
        }
    }
}

impl FromIterator<Atom> for Fact {
    fn from_iter<I: IntoIterator<Item = Atom>>(iter: I) -> Fact {
        Fact::new(iter.into_iter().collect())
    }
}

impl fmt::Display for Fact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.atoms.is_empty() {
            return write!(f, "{{}}");
        }
        for (i, a) in self.atoms.iter().enumerate() {
            if i > 0 {
                write!(f, " | ")?;
            }
            write!(f, "{a}")?;
        }
        Ok(())
    }
}

/// A finite map from variables to terms, kept free of trivial `x ↦ x`
/// bindings.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Default)]
pub struct Substitution {
    map: BTreeMap<Var, Term>,
}

impl Substitution {
    pub fn nil() -> Substitution {
        Substitution::default()
    }

    pub fn from_pairs<I: IntoIterator<Item = (Var, Term)>>(pairs: I) -> Substitution {
        let mut s = Substitution::nil();
        for (v, t) in pairs {
            s.insert(v, t);
        }
        s
    }

    pub fn insert(&mut self, v: Var, t: Term) {
        if t == Term::Var(v.clone()) {
            self.map.remove(&v);
        } else {
            self.map.insert(v, t);
        }
    }

    pub fn get(&self, v: &Var) -> Option<&Term> {
        self.map.get(v)
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Var, &Term)> {
        self.map.iter()
    }

    pub fn domain(&self) -> BTreeSet<Var> {
        self.map.keys().cloned().collect()
    }

    pub fn range_vars(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        for t in self.map.values() {
            t.collect_vars(&mut out);
        }
        out
    }

    pub fn mentions_eigen(&self, c: Eigen) -> bool {
        self.map.values().any(|t| t.mentions_eigen(c))
    }

    /// Applying twice equals applying once.
    pub fn is_idempotent(&self) -> bool {
        let range = self.range_vars();
        self.map.keys().all(|v| !range.contains(v))
    }

    /// `compose(θ, σ)`: the substitution acting as θ followed by σ.
    pub fn compose(&self, sigma: &Substitution) -> Substitution {
        let mut out = Substitution::nil();
        for (v, t) in &self.map {
            out.insert(v.clone(), t.apply(sigma));
        }
        for (v, t) in &sigma.map {
            if !self.map.contains_key(v) {
                out.insert(v.clone(), t.clone());
            }
        }
        out
    }

    /// Keeps only the bindings whose variable lies in `vars`.
    pub fn restrict(&self, vars: &BTreeSet<Var>) -> Substitution {
        Substitution {
            map: self.map.iter().filter(|(v, _)| vars.contains(*v)).map(|(v, t)| (v.clone(), t.clone())).collect(),
        }
    }

    /// Applies `self` to a variable.
    pub fn image(&self, v: &Var) -> Term {
        self.map.get(v).cloned().unwrap_or_else(|| Term::Var(v.clone()))
    }
}

impl fmt::Display for Substitution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.map.is_empty() {
            return write!(f, "nil");
        }
        write!(f, "[")?;
        for (i, (v, t)) in self.map.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v}/{t}")?;
        }
        write!(f, "]")
    }
}

/// Σ: the symbols a program or judgment may mention.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct Signature {
    pub constants: BTreeSet<Sym>,
    pub functions: BTreeMap<Sym, usize>,
    pub predicates: BTreeMap<Sym, usize>,
    pub eigenvariables: BTreeSet<Eigen>,
}

impl Signature {
    pub fn new() -> Signature {
        Signature::default()
    }

    /// `self ⊆ other`.
    pub fn is_extended_by(&self, other: &Signature) -> bool {
        self.constants.is_subset(&other.constants)
            && self.eigenvariables.is_subset(&other.eigenvariables)
            && self.functions.iter().all(|(f, n)| other.functions.get(f) == Some(n))
            && self.predicates.iter().all(|(p, n)| other.predicates.get(p) == Some(n))
    }

    pub fn with_eigen(&self, c: Eigen) -> Signature {
        let mut s = self.clone();
        s.eigenvariables.insert(c);
        s
    }

    /// Smallest eigenvariable id not in this signature and not below any
    /// existing one.
    pub fn next_eigen(&self) -> Eigen {
        self.eigenvariables.iter().next_back().map_or(0, |c| c + 1)
    }

    pub fn covers_term(&self, t: &Term) -> bool {
        match t {
            Term::Var(_) => true,
            Term::Const(c) => self.constants.contains(c),
            Term::Eigen(c) => self.eigenvariables.contains(c),
            Term::App(f, args) => {
                self.functions.get(f) == Some(&args.len()) && args.iter().all(|a| self.covers_term(a))
            }
        }
    }

    pub fn covers_atom(&self, a: &Atom) -> bool {
        self.predicates.get(&a.pred) == Some(&a.arity()) && a.args.iter().all(|t| self.covers_term(t))
    }

    /// All ground terms over constants, eigenvariables and functions with
    /// nesting depth at most `max_depth`.
    pub fn ground_terms(&self, max_depth: usize) -> Vec<Term> {
        let mut levels: Vec<Term> = self
            .constants
            .iter()
            .map(|c| Term::Const(c.clone()))
            .chain(self.eigenvariables.iter().map(|&c| Term::Eigen(c)))
            .collect();
        let mut all = levels.clone();
        for _ in 0..max_depth {
            let mut next = Vec::new();
            for (f, &n) in &self.functions {
                for args in tuples(&all, n) {
                    let t = Term::App(f.clone(), args);
                    if !all.contains(&t) {
                        next.push(t);
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            levels = next;
            all.extend(levels.iter().cloned());
        }
        all
    }
}

/// All `n`-tuples over `items`.
pub fn tuples<T: Clone>(items: &[T], n: usize) -> Vec<Vec<T>> {
    let mut out = vec![Vec::new()];
    for _ in 0..n {
        let mut next = Vec::with_capacity(out.len() * items.len());
        for prefix in &out {
            for it in items {
                let mut p = prefix.clone();
                p.push(it.clone());
                next.push(p);
            }
        }
        out = next;
    }
    out
}

/// Source of fresh variables and eigenvariables for one analysis.
#[derive(Debug, Default)]
pub struct Session {
    next_var: u32,
    next_eigen: Eigen,
}

impl Session {
    pub fn new() -> Session {
        Session::default()
    }

    pub fn fresh_var(&mut self) -> Var {
        let v = Var::Fresh(self.next_var);
        self.next_var += 1;
        v
    }

    /// A constant that occurs nowhere yet in this session.
    pub fn fresh_eigen(&mut self) -> Eigen {
        let c = self.next_eigen;
        self.next_eigen += 1;
        c
    }

    /// Makes sure subsequently allocated eigenvariables avoid `used`.
    pub fn reserve_eigens(&mut self, used: &BTreeSet<Eigen>) {
        if let Some(&m) = used.iter().next_back() {
            self.next_eigen = self.next_eigen.max(m + 1);
        }
    }

    /// Renaming of `vars` to fresh variables.
    pub fn renaming(&mut self, vars: &BTreeSet<Var>) -> Substitution {
        Substitution::from_pairs(vars.iter().map(|v| (v.clone(), Term::Var(self.fresh_var()))))
    }

    /// A variant of `f` over fresh variables, with the renaming used.
    pub fn fresh_variant(&mut self, f: &Fact) -> (Fact, Substitution) {
        let rho = self.renaming(&f.vars());
        (f.apply(&rho), rho)
    }
}

/// Canonical representative of the α-equivalence class of `f`.
pub fn canonicalize(f: &Fact) -> Fact {
    canonicalize_with_renaming(f).0
}

const MAX_TIE_PERMUTATIONS: usize = 5040;

/// Like [`canonicalize`], also returning the renaming from `f`'s variables to
/// the canonical ones.
pub fn canonicalize_with_renaming(f: &Fact) -> (Fact, Substitution) {
    let vars: Vec<Var> = f.vars().into_iter().collect();
    if vars.is_empty() {
        return (f.clone(), Substitution::nil());
    }
    // Renaming-invariant colour of each variable: the fact seen with that
    // variable marked and every other variable blurred together.
    let mut coloured: Vec<(Vec<Atom>, Var)> = vars
        .iter()
        .map(|v| {
            let mark = Substitution::from_pairs(vars.iter().map(|w| {
                let t = if w == v { Var::Canon(0) } else { Var::Canon(1) };
                (w.clone(), Term::Var(t))
            }));
            let mut atoms: Vec<Atom> = f.atoms.iter().map(|a| a.apply(&mark)).collect();
            atoms.sort();
            (atoms, v.clone())
        })
        .collect();
    coloured.sort();
    let mut classes: Vec<Vec<Var>> = Vec::new();
    for (i, (c, v)) in coloured.iter().enumerate() {
        if i > 0 && coloured[i - 1].0 == *c {
            classes.last_mut().unwrap().push(v.clone());
        } else {
            classes.push(vec![v.clone()]);
        }
    }
    let permutations: usize = classes
        .iter()
        .map(|c| (1..=c.len()).product::<usize>())
        .try_fold(1usize, |acc, n| acc.checked_mul(n))
        .unwrap_or(usize::MAX);

    let render = |order: &[Var]| -> (Vec<Atom>, Substitution) {
        let rho = Substitution::from_pairs(
            order.iter().enumerate().map(|(i, v)| (v.clone(), Term::Var(Var::Canon(i as u32)))),
        );
        let mut atoms: Vec<Atom> = f.atoms.iter().map(|a| a.apply(&rho)).collect();
        atoms.sort();
        (atoms, rho)
    };

    let best = if permutations <= MAX_TIE_PERMUTATIONS {
        let mut best: Option<(Vec<Atom>, Substitution)> = None;
        let mut class_perms: Vec<Vec<Vec<Var>>> = classes.iter().map(|c| permutations_of(c)).collect();
        let mut idx = vec![0usize; class_perms.len()];
        loop {
            let order: Vec<Var> = class_perms.iter().zip(&idx).flat_map(|(ps, &i)| ps[i].iter().cloned()).collect();
            let cand = render(&order);
            if best.as_ref().is_none_or(|b| cand.0 < b.0) {
                best = Some(cand);
            }
            let mut k = 0;
            loop {
                if k == idx.len() {
                    break;
                }
                idx[k] += 1;
                if idx[k] < class_perms[k].len() {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == idx.len() {
                break;
            }
        }
        class_perms.clear();
        best.unwrap()
    } else {
        // Too many symmetric variables: deterministic, not canonical.
        let order: Vec<Var> = classes.into_iter().flatten().collect();
        render(&order)
    };

    // Renumber in order of first occurrence.
    let (atoms, rho) = best;
    let mut seen: Vec<Var> = Vec::new();
    for a in &atoms {
        let mut vs = Vec::new();
        first_occurrences(a, &mut vs);
        for v in vs {
            if !seen.contains(&v) {
                seen.push(v);
            }
        }
    }
    let renumber =
        Substitution::from_pairs(seen.iter().enumerate().map(|(i, v)| (v.clone(), Term::Var(Var::Canon(i as u32)))));
    let out = Fact::new(atoms.iter().map(|a| a.apply(&renumber)).collect());
    (out, rho.compose(&renumber).restrict(&vars.iter().cloned().collect()))
}

fn first_occurrences(a: &Atom, out: &mut Vec<Var>) {
    fn walk(t: &Term, out: &mut Vec<Var>) {
        match t {
            Term::Var(v) => out.push(v.clone()),
            Term::App(_, args) => args.iter().for_each(|a| walk(a, out)),
            _ => {}
        }
    }
    a.args.iter().for_each(|t| walk(t, out));
}

fn permutations_of<T: Clone>(items: &[T]) -> Vec<Vec<T>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let x = rest.remove(i);
        for mut p in permutations_of(&rest) {
            p.insert(0, x.clone());
            out.push(p);
        }
    }
    out
}

/// Renumbers the variables of a term sequence in order of first occurrence.
/// Two sequences get the same key iff they are variants of each other.
pub fn variant_key(terms: &[Term]) -> Vec<Term> {
    let mut map: HashMap<Var, u32> = HashMap::new();
    fn walk(t: &Term, map: &mut HashMap<Var, u32>) -> Term {
        match t {
            Term::Var(v) => {
                let n = map.len() as u32;
                Term::Var(Var::Canon(*map.entry(v.clone()).or_insert(n)))
            }
            Term::App(f, args) => Term::App(f.clone(), args.iter().map(|a| walk(a, map)).collect()),
            _ => t.clone(),
        }
    }
    terms.iter().map(|t| walk(t, &mut map)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(name: &str, args: &[Term]) -> Atom {
        Atom::new(name, args.to_vec())
    }
    fn v(n: &str) -> Term {
        Term::var(n)
    }
    fn c(n: &str) -> Term {
        Term::constant(n)
    }

    #[test]
    fn apply_examples() {
        let theta = Substitution::from_pairs([(Var::named("X1"), Term::app("f", vec![v("W1")]))]);
        assert_eq!(p("q", &[v("X1")]).apply(&theta), p("q", &[Term::app("f", vec![v("W1")])]));

        let theta = Substitution::from_pairs([(Var::named("X"), c("b"))]);
        assert_eq!(p("p", &[c("a")]).apply(&theta), p("p", &[c("a")]));

        let fy = Term::app("f", vec![v("Y")]);
        let theta = Substitution::from_pairs([(Var::named("X"), fy.clone())]);
        let fact = Fact::new(vec![p("p", &[v("X")]), p("q", &[v("X")])]);
        assert_eq!(fact.apply(&theta), Fact::new(vec![p("p", std::slice::from_ref(&fy)), p("q", &[fy])]));
    }

    #[test]
    fn compose_examples() {
        let x = Var::named("X");
        let y = Var::named("Y");
        let theta = Substitution::from_pairs([(x.clone(), Term::Var(y.clone()))]);
        let sigma = Substitution::from_pairs([(y.clone(), c("a"))]);
        let expected = Substitution::from_pairs([(x.clone(), c("a")), (y, c("a"))]);
        assert_eq!(theta.compose(&sigma), expected);
        assert_eq!(Substitution::nil().compose(&sigma), sigma);
        let xa = Substitution::from_pairs([(x, c("a"))]);
        assert_eq!(xa.compose(&Substitution::nil()), xa);
    }

    #[test]
    fn restrict_examples() {
        let u = Var::named("U1");
        let vv = Var::named("V1");
        let x = Var::named("X3");
        let fy = Term::app("f", vec![v("Y1")]);
        let theta = Substitution::from_pairs([(u.clone(), fy.clone()), (vv.clone(), v("Y1")), (x, fy.clone())]);
        let keep: BTreeSet<Var> = [u.clone(), vv.clone()].into_iter().collect();
        assert_eq!(theta.restrict(&keep), Substitution::from_pairs([(u, fy), (vv, v("Y1"))]));
        assert!(theta.restrict(&BTreeSet::new()).is_empty());
        assert!(Substitution::nil().restrict(&keep).is_empty());
    }

    #[test]
    fn multiset_examples() {
        let a = p("a", &[]);
        let b = p("b", &[]);
        let cc = p("c", &[]);
        let aab = Fact::new(vec![a.clone(), a.clone(), b.clone()]);
        assert_eq!(aab.union(&Fact::singleton(b.clone())), Fact::new(vec![a.clone(), a.clone(), b.clone(), b.clone()]));
        assert_eq!(aab.difference(&Fact::new(vec![a.clone(), cc.clone()])), Fact::new(vec![a.clone(), b.clone()]));
        let pq = Fact::new(vec![p("p", &[]), p("q", &[])]);
        let ppq = Fact::new(vec![p("p", &[]), p("p", &[]), p("q", &[])]);
        assert!(pq.included_in(&ppq));
        let pp = Fact::new(vec![p("p", &[]), p("p", &[])]);
        assert!(!pp.included_in(&pq));
        assert_eq!(aab.len(), 3);
        assert_eq!(aab.merge(&Fact::new(vec![a.clone(), b.clone(), b.clone()])).len(), 4);
        assert_eq!(aab.intersection(&Fact::new(vec![a.clone(), b.clone(), b])).len(), 2);
        assert_eq!(aab.union(&Fact::empty()), aab);
    }

    #[test]
    fn fresh_variants() {
        let mut s = Session::new();
        let f = Fact::new(vec![p("p", &[v("X")]), p("q", &[v("X")])]);
        let (g, rho) = s.fresh_variant(&f);
        assert_eq!(rho.len(), 1);
        assert_eq!(canonicalize(&g), canonicalize(&f));
        let (h, _) = s.fresh_variant(&f);
        assert!(g.vars().is_disjoint(&h.vars()));
        let ground = Fact::new(vec![p("p", &[c("a")])]);
        assert_eq!(s.fresh_variant(&ground).0, ground);
    }

    #[test]
    fn canonical_examples() {
        let f1 = Fact::new(vec![p("q", &[v("U")]), p("p", &[v("U")])]);
        let f2 = Fact::new(vec![p("q", &[v("W")]), p("p", &[v("W")])]);
        assert_eq!(canonicalize(&f1), canonicalize(&f2));

        let g = Fact::new(vec![p("q", &[c("a")]), p("p", &[c("b")])]);
        assert_eq!(canonicalize(&g), g);

        // {p(y),p(x),q(x)} -> {p(v0),q(v0),p(v1)}
        let f = Fact::new(vec![p("p", &[v("Y")]), p("p", &[v("X")]), p("q", &[v("X")])]);
        let x0 = Term::Var(Var::Canon(0));
        let x1 = Term::Var(Var::Canon(1));
        let expected = Fact::new(vec![p("p", std::slice::from_ref(&x0)), p("q", &[x0]), p("p", &[x1])]);
        assert_eq!(canonicalize(&f), expected);
        assert_eq!(expected.to_string(), "p(X0) | p(X1) | q(X0)");
    }

    #[test]
    fn canonical_renaming_maps_to_result() {
        let f = Fact::new(vec![p("m", &[v("A"), v("B")]), p("m", &[v("B"), v("A")]), p("u", &[v("A")])]);
        let (g, rho) = canonicalize_with_renaming(&f);
        assert_eq!(f.apply(&rho), g);
    }

    #[test]
    fn ground_term_enumeration() {
        let mut sig = Signature::new();
        sig.constants.insert(sym("a"));
        sig.functions.insert(sym("f"), 1);
        let ts = sig.ground_terms(2);
        assert_eq!(ts.len(), 3);
        assert!(ts.iter().all(|t| t.depth() <= 2));
        sig.eigenvariables.insert(0);
        assert_eq!(sig.ground_terms(1).len(), 4);
    }
}
