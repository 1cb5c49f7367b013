//! Goals, clauses and programs; the `.lo` lexer, parser and printer.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::kernel::{sym, Atom, Eigen, Fact, Signature, Substitution, Sym, Term, Var};

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub enum Goal {
    Top,
    Bot,
    Atom(Atom),
    Par(Box<Goal>, Box<Goal>),
    With(Box<Goal>, Box<Goal>),
    Forall(Var, Box<Goal>),
}

impl Goal {
    pub fn par(a: Goal, b: Goal) -> Goal {
        Goal::Par(Box::new(a), Box::new(b))
    }

    pub fn with(a: Goal, b: Goal) -> Goal {
        Goal::With(Box::new(a), Box::new(b))
    }

    pub fn forall(x: Var, g: Goal) -> Goal {
        Goal::Forall(x, Box::new(g))
    }

    /// `A1 | ... | An`, or `bot` for the empty fact.
    pub fn from_fact(f: &Fact) -> Goal {
        let mut it = f.iter().cloned().map(Goal::Atom);
        match it.next() {
            None => Goal::Bot,
            Some(first) => it.fold(first, Goal::par),
        }
    }

    pub fn free_vars(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.collect_free(&mut Vec::new(), &mut out);
        out
    }

    fn collect_free(&self, bound: &mut Vec<Var>, out: &mut BTreeSet<Var>) {
        match self {
            Goal::Top | Goal::Bot => {}
            Goal::Atom(a) => {
                for v in a.vars() {
                    if !bound.contains(&v) {
                        out.insert(v);
                    }
                }
            }
            Goal::Par(a, b) | Goal::With(a, b) => {
                a.collect_free(bound, out);
                b.collect_free(bound, out);
            }
            Goal::Forall(x, g) => {
                bound.push(x.clone());
                g.collect_free(bound, out);
                bound.pop();
            }
        }
    }

    pub fn mentions_eigen(&self, c: Eigen) -> bool {
        match self {
            Goal::Top | Goal::Bot => false,
            Goal::Atom(a) => a.mentions_eigen(c),
            Goal::Par(a, b) | Goal::With(a, b) => a.mentions_eigen(c) || b.mentions_eigen(c),
            Goal::Forall(_, g) => g.mentions_eigen(c),
        }
    }

    pub fn collect_eigens(&self, out: &mut BTreeSet<Eigen>) {
        match self {
            Goal::Top | Goal::Bot => {}
            Goal::Atom(a) => a.args.iter().for_each(|t| t.collect_eigens(out)),
            Goal::Par(a, b) | Goal::With(a, b) => {
                a.collect_eigens(out);
                b.collect_eigens(out);
            }
            Goal::Forall(_, g) => g.collect_eigens(out),
        }
    }

    /// Capture-avoiding substitution of free variables.
    pub fn apply(&self, theta: &Substitution) -> Goal {
        if theta.is_empty() {
            return self.clone();
        }
        match self {
            Goal::Top | Goal::Bot => self.clone(),
            Goal::Atom(a) => Goal::Atom(a.apply(theta)),
            Goal::Par(a, b) => Goal::par(a.apply(theta), b.apply(theta)),
            Goal::With(a, b) => Goal::with(a.apply(theta), b.apply(theta)),
            Goal::Forall(x, g) => {
                let free = g.free_vars();
                let relevant: BTreeSet<Var> = free.iter().filter(|v| *v != x).cloned().collect();
                let inner = theta.restrict(&relevant);
                if !inner.range_vars().contains(x) {
                    return Goal::forall(x.clone(), g.apply(&inner));
                }
                let mut avoid = inner.range_vars();
                avoid.extend(free);
                let y = primed(x, &avoid);
                let mut sigma = inner.clone();
                sigma.insert(x.clone(), Term::Var(y.clone()));
                Goal::forall(y, g.apply(&sigma))
            }
        }
    }

    /// `G[t/x]` for the body of a quantifier.
    pub fn instantiate(&self, x: &Var, t: &Term) -> Goal {
        self.apply(&Substitution::from_pairs([(x.clone(), t.clone())]))
    }

    pub fn is_atomic(&self) -> bool {
        matches!(self, Goal::Atom(_))
    }

    /// Atoms of a pure `|`-tree (with `bot` as unit), or `None`.
    pub fn as_par_atoms(&self) -> Option<Vec<Atom>> {
        fn walk(g: &Goal, out: &mut Vec<Atom>) -> bool {
            match g {
                Goal::Atom(a) => {
                    out.push(a.clone());
                    true
                }
                Goal::Bot => true,
                Goal::Par(a, b) => walk(a, out) && walk(b, out),
                _ => false,
            }
        }
        let mut out = Vec::new();
        walk(self, &mut out).then_some(out)
    }
}

fn primed(x: &Var, avoid: &BTreeSet<Var>) -> Var {
    let base = x.to_string();
    let mut name = format!("{base}'");
    while avoid.contains(&Var::named(&name)) {
        name.push('\'');
    }
    Var::named(&name)
}

impl fmt::Display for Goal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Levels: 0 = & operand list, 1 = | operand, 2 = unit.
        fn go(g: &Goal, level: u8, operand: bool, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            match g {
                Goal::Top => write!(f, "top"),
                Goal::Bot => write!(f, "bot"),
                Goal::Atom(a) => write!(f, "{a}"),
                Goal::With(a, b) => {
                    if level > 0 {
                        write!(f, "(")?;
                    }
                    go(a, 0, true, f)?;
                    write!(f, " & ")?;
                    go(b, 1, true, f)?;
                    if level > 0 {
                        write!(f, ")")?;
                    }
                    Ok(())
                }
                Goal::Par(a, b) => {
                    if level > 1 {
                        write!(f, "(")?;
                    }
                    go(a, 1, true, f)?;
                    write!(f, " | ")?;
                    go(b, 2, true, f)?;
                    if level > 1 {
                        write!(f, ")")?;
                    }
                    Ok(())
                }
                Goal::Forall(x, body) => {
                    let wrap = level > 0 || operand;
                    if wrap {
                        write!(f, "(")?;
                    }
                    write!(f, "forall {x}. ")?;
                    go(body, 0, false, f)?;
                    if wrap {
                        write!(f, ")")?;
                    }
                    Ok(())
                }
            }
        }
        go(self, 0, false, f)
    }
}

/// `H <- G`; an empty head stands for `bot`.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Clause {
    pub head: Fact,
    pub body: Goal,
    pub label: String,
}

impl Clause {
    pub fn new(head: Fact, body: Goal, label: &str) -> Clause {
        Clause { head, body, label: label.to_string() }
    }

    pub fn vars(&self) -> BTreeSet<Var> {
        let mut v = self.head.vars();
        v.extend(self.body.free_vars());
        v
    }

    /// Free variables of the body that do not occur in the head.
    pub fn body_only_vars(&self) -> BTreeSet<Var> {
        let head = self.head.vars();
        self.body.free_vars().into_iter().filter(|v| !head.contains(v)).collect()
    }

    pub fn apply(&self, theta: &Substitution) -> Clause {
        Clause { head: self.head.apply(theta), body: self.body.apply(theta), label: self.label.clone() }
    }
}

impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.head.is_empty() {
            write!(f, "bot")?;
        } else {
            write!(f, "{}", self.head)?;
        }
        write!(f, " <- {}.", self.body)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ClauseKind {
    RewriteRule,
    QuantifiedRewriteRule,
    General,
}

/// A body built from atoms, `bot`, `|` and `forall` only is a rewrite rule
/// up to prenexing the quantifiers; it is quantified if some `forall` occurs.
pub fn classify_clause(c: &Clause) -> ClauseKind {
    fn walk(g: &Goal, quantified: &mut bool) -> bool {
        match g {
            Goal::Atom(_) | Goal::Bot => true,
            Goal::Par(a, b) => walk(a, quantified) && walk(b, quantified),
            Goal::Forall(_, g) => {
                *quantified = true;
                walk(g, quantified)
            }
            Goal::Top | Goal::With(_, _) => false,
        }
    }
    let mut quantified = false;
    match (walk(&c.body, &mut quantified), quantified) {
        (true, false) => ClauseKind::RewriteRule,
        (true, true) => ClauseKind::QuantifiedRewriteRule,
        _ => ClauseKind::General,
    }
}

#[derive(Clone, Debug, Default)]
pub struct Program {
    pub clauses: Vec<Clause>,
    pub signature: Signature,
    pub warnings: Vec<String>,
}

impl Program {
    pub fn new(clauses: Vec<Clause>) -> Result<Program, SyntaxError> {
        let signature = derive_signature(clauses.iter())?;
        Ok(Program { clauses, signature, warnings: Vec::new() })
    }

    /// Appends the clauses of `other`, relabelled to continue the numbering.
    pub fn extend(&mut self, other: &Program) -> Result<(), SyntaxError> {
        let base = self.clauses.len();
        for (i, c) in other.clauses.iter().enumerate() {
            let mut c = c.clone();
            if c.label.parse::<usize>().is_ok() {
                c.label = (base + i + 1).to_string();
            }
            self.clauses.push(c);
        }
        self.signature = derive_signature(self.clauses.iter())?;
        self.warnings.extend(other.warnings.iter().cloned());
        Ok(())
    }

    pub fn clause(&self, label: &str) -> Option<&Clause> {
        self.clauses.iter().find(|c| c.label == label)
    }

    /// The program signature extended with the symbols of a query.
    pub fn signature_with_goal(&self, g: &Goal) -> Result<Signature, SyntaxError> {
        let query = Clause::new(Fact::empty(), g.clone(), "query");
        derive_signature(self.clauses.iter().chain(std::iter::once(&query)))
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.clauses {
            writeln!(f, "{c}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SyntaxError {
    #[error("{line}:{col}: {msg}")]
    Parse { line: usize, col: usize, msg: String },
    #[error("predicate {name} used with arities {first} and {second}")]
    PredicateArity { name: String, first: usize, second: usize },
    #[error("function {name} used with arities {first} and {second}")]
    FunctionArity { name: String, first: usize, second: usize },
    #[error("symbol {name} used both as {first} and as {second}")]
    NameClash { name: String, first: &'static str, second: &'static str },
}

fn derive_signature<'a>(clauses: impl Iterator<Item = &'a Clause>) -> Result<Signature, SyntaxError> {
    let mut b = SigBuilder::default();
    for c in clauses {
        for a in c.head.iter() {
            b.atom(a)?;
        }
        b.goal(&c.body)?;
    }
    b.finish()
}

#[derive(Default)]
struct SigBuilder {
    preds: BTreeMap<Sym, usize>,
    funcs: BTreeMap<Sym, usize>,
    eigens: BTreeSet<Eigen>,
}

impl SigBuilder {
    fn atom(&mut self, a: &Atom) -> Result<(), SyntaxError> {
        if let Some(&n) = self.preds.get(&a.pred) {
            if n != a.arity() {
                return Err(SyntaxError::PredicateArity { name: a.pred.to_string(), first: n, second: a.arity() });
            }
        }
        self.preds.insert(a.pred.clone(), a.arity());
        a.args.iter().try_for_each(|t| self.term(t))
    }

    fn term(&mut self, t: &Term) -> Result<(), SyntaxError> {
        let (name, n) = match t {
            Term::Var(_) => return Ok(()),
            Term::Eigen(c) => {
                self.eigens.insert(*c);
                return Ok(());
            }
            Term::Const(c) => (c, 0),
            Term::App(f, args) => {
                args.iter().try_for_each(|a| self.term(a))?;
                (f, args.len())
            }
        };
        if let Some(&m) = self.funcs.get(name) {
            if m != n {
                if m == 0 || n == 0 {
                    return Err(SyntaxError::NameClash {
                        name: name.to_string(),
                        first: if m == 0 { "constant" } else { "function" },
                        second: if n == 0 { "constant" } else { "function" },
                    });
                }
                return Err(SyntaxError::FunctionArity { name: name.to_string(), first: m, second: n });
            }
        }
        self.funcs.insert(name.clone(), n);
        Ok(())
    }

    fn goal(&mut self, g: &Goal) -> Result<(), SyntaxError> {
        match g {
            Goal::Top | Goal::Bot => Ok(()),
            Goal::Atom(a) => self.atom(a),
            Goal::Par(a, b) | Goal::With(a, b) => {
                self.goal(a)?;
                self.goal(b)
            }
            Goal::Forall(_, g) => self.goal(g),
        }
    }

    fn finish(self) -> Result<Signature, SyntaxError> {
        let mut sig = Signature::new();
        for (f, n) in self.funcs {
            if self.preds.contains_key(&f) {
                return Err(SyntaxError::NameClash {
                    name: f.to_string(),
                    first: "predicate",
                    second: if n == 0 { "constant" } else { "function" },
                });
            }
            if n == 0 {
                sig.constants.insert(f);
            } else {
                sig.functions.insert(f, n);
            }
        }
        sig.predicates = self.preds;
        sig.eigenvariables = self.eigens;
        Ok(sig)
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Lower(String),
    Upper(String),
    LParen,
    RParen,
    Comma,
    Dot,
    Bar,
    Amp,
    Arrow,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Lower(s) | Tok::Upper(s) => write!(f, "`{s}`"),
            Tok::LParen => write!(f, "`(`"),
            Tok::RParen => write!(f, "`)`"),
            Tok::Comma => write!(f, "`,`"),
            Tok::Dot => write!(f, "`.`"),
            Tok::Bar => write!(f, "`|`"),
            Tok::Amp => write!(f, "`&`"),
            Tok::Arrow => write!(f, "`<-`"),
            Tok::Eof => write!(f, "end of input"),
        }
    }
}

fn lex(text: &str) -> Result<Vec<(Tok, usize, usize)>, SyntaxError> {
    let mut out = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let (mut i, mut line, mut col) = (0, 1, 1);
    while i < chars.len() {
        let c = chars[i];
        let (l0, c0) = (line, col);
        let step = |n: usize, i: &mut usize, col: &mut usize| {
            *i += n;
            *col += n;
        };
        match c {
            '\n' => {
                i += 1;
                line += 1;
                col = 1;
            }
            c if c.is_whitespace() => step(1, &mut i, &mut col),
            '%' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
            }
            '(' => {
                out.push((Tok::LParen, l0, c0));
                step(1, &mut i, &mut col);
            }
            ')' => {
                out.push((Tok::RParen, l0, c0));
                step(1, &mut i, &mut col);
            }
            ',' => {
                out.push((Tok::Comma, l0, c0));
                step(1, &mut i, &mut col);
            }
            '.' => {
                out.push((Tok::Dot, l0, c0));
                step(1, &mut i, &mut col);
            }
            '|' => {
                out.push((Tok::Bar, l0, c0));
                step(1, &mut i, &mut col);
            }
            '&' => {
                out.push((Tok::Amp, l0, c0));
                step(1, &mut i, &mut col);
            }
            '<' if chars.get(i + 1) == Some(&'-') => {
                out.push((Tok::Arrow, l0, c0));
                step(2, &mut i, &mut col);
            }
            c if c.is_ascii_alphabetic() => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                    col += 1;
                }
                let word: String = chars[start..i].iter().collect();
                if c.is_ascii_uppercase() {
                    out.push((Tok::Upper(word), l0, c0));
                } else {
                    out.push((Tok::Lower(word), l0, c0));
                }
            }
            other => {
                return Err(SyntaxError::Parse { line: l0, col: c0, msg: format!("unexpected character `{other}`") })
            }
        }
    }
    out.push((Tok::Eof, line, col));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize, usize)>,
    pos: usize,
    warnings: Vec<String>,
    bound: Vec<Var>,
    outer: BTreeSet<Var>,
}

impl Parser {
    fn new(text: &str) -> Result<Parser, SyntaxError> {
        Ok(Parser { toks: lex(text)?, pos: 0, warnings: Vec::new(), bound: Vec::new(), outer: BTreeSet::new() })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn next(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, msg: String) -> Result<T, SyntaxError> {
        let (_, line, col) = self.toks[self.pos];
        Err(SyntaxError::Parse { line, col, msg })
    }

    fn expect(&mut self, t: Tok) -> Result<(), SyntaxError> {
        if *self.peek() == t {
            self.next();
            Ok(())
        } else {
            self.error(format!("expected {t}, found {}", self.peek()))
        }
    }

    fn is_keyword(s: &str) -> bool {
        matches!(s, "top" | "bot" | "forall")
    }

    fn term(&mut self) -> Result<Term, SyntaxError> {
        match self.peek().clone() {
            Tok::Upper(v) => {
                self.next();
                Ok(Term::Var(Var::named(&v)))
            }
            Tok::Lower(name) if !Self::is_keyword(&name) => {
                self.next();
                if *self.peek() == Tok::LParen {
                    Ok(Term::App(sym(&name), self.args()?))
                } else {
                    Ok(Term::Const(sym(&name)))
                }
            }
            t => self.error(format!("expected a term, found {t}")),
        }
    }

    fn args(&mut self) -> Result<Vec<Term>, SyntaxError> {
        self.expect(Tok::LParen)?;
        let mut args = vec![self.term()?];
        while *self.peek() == Tok::Comma {
            self.next();
            args.push(self.term()?);
        }
        self.expect(Tok::RParen)?;
        Ok(args)
    }

    fn atom(&mut self) -> Result<Atom, SyntaxError> {
        match self.peek().clone() {
            Tok::Lower(name) if !Self::is_keyword(&name) => {
                self.next();
                let args = if *self.peek() == Tok::LParen { self.args()? } else { Vec::new() };
                Ok(Atom { pred: sym(&name), args })
            }
            t => self.error(format!("expected an atom, found {t}")),
        }
    }

    fn goal(&mut self) -> Result<Goal, SyntaxError> {
        let mut g = self.par_goal()?;
        while *self.peek() == Tok::Amp {
            self.next();
            g = Goal::with(g, self.par_goal()?);
        }
        Ok(g)
    }

    fn par_goal(&mut self) -> Result<Goal, SyntaxError> {
        let mut g = self.unit()?;
        while *self.peek() == Tok::Bar {
            self.next();
            g = Goal::par(g, self.unit()?);
        }
        Ok(g)
    }

    fn unit(&mut self) -> Result<Goal, SyntaxError> {
        match self.peek().clone() {
            Tok::Lower(k) if k == "top" => {
                self.next();
                Ok(Goal::Top)
            }
            Tok::Lower(k) if k == "bot" => {
                self.next();
                Ok(Goal::Bot)
            }
            Tok::Lower(k) if k == "forall" => {
                self.next();
                let (_, line, col) = self.toks[self.pos];
                let x = match self.next() {
                    Tok::Upper(v) => Var::named(&v),
                    t => {
                        self.pos -= 1;
                        return self.error(format!("expected a variable after forall, found {t}"));
                    }
                };
                if self.bound.contains(&x) || self.outer.contains(&x) {
                    self.warnings.push(format!("{line}:{col}: forall {x} shadows an outer variable"));
                }
                self.expect(Tok::Dot)?;
                self.bound.push(x.clone());
                let body = self.goal();
                self.bound.pop();
                Ok(Goal::forall(x, body?))
            }
            Tok::LParen => {
                self.next();
                let g = self.goal()?;
                self.expect(Tok::RParen)?;
                Ok(g)
            }
            _ => Ok(Goal::Atom(self.atom()?)),
        }
    }

    fn head(&mut self) -> Result<Fact, SyntaxError> {
        if *self.peek() == Tok::Lower("bot".into()) {
            self.next();
            return Ok(Fact::empty());
        }
        let mut atoms = vec![self.atom()?];
        while *self.peek() == Tok::Bar {
            self.next();
            atoms.push(self.atom()?);
        }
        Ok(Fact::new(atoms))
    }

    fn clause(&mut self, label: usize) -> Result<Clause, SyntaxError> {
        let head = self.head()?;
        self.expect(Tok::Arrow)?;
        self.outer = head.vars();
        let body = self.goal()?;
        self.expect(Tok::Dot)?;
        self.outer.clear();
        Ok(Clause { head, body, label: label.to_string() })
    }
}

pub fn parse_program(text: &str) -> Result<Program, SyntaxError> {
    let mut p = Parser::new(text)?;
    let mut clauses = Vec::new();
    while *p.peek() != Tok::Eof {
        clauses.push(p.clause(clauses.len() + 1)?);
    }
    let mut prog = Program::new(clauses)?;
    prog.warnings = p.warnings;
    Ok(prog)
}

pub fn parse_goal(text: &str) -> Result<Goal, SyntaxError> {
    let mut p = Parser::new(text)?;
    let g = p.goal()?;
    if *p.peek() == Tok::Dot {
        p.next();
    }
    if *p.peek() != Tok::Eof {
        return p.error(format!("unexpected {} after goal", p.peek()));
    }
    Ok(g)
}

/// Parses `{}` or an `|`-list of atoms.
pub fn parse_fact(text: &str) -> Result<Fact, SyntaxError> {
    let trimmed = text.trim();
    if trimmed == "{}" || trimmed.is_empty() {
        return Ok(Fact::empty());
    }
    let g = parse_goal(trimmed)?;
    match g.as_par_atoms() {
        Some(atoms) => Ok(Fact::new(atoms)),
        None => Err(SyntaxError::Parse { line: 1, col: 1, msg: "a fact is a `|`-list of atoms".into() }),
    }
}
