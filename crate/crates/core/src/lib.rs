//! Bottom-up evaluation of first-order LO specifications with universal
//! quantification in goals.
//!
//! A program is a list of clauses `H <- G` whose heads are multisets of
//! atoms. The [`engine`] computes a finite symbolic representation of every
//! provable multiset of atoms, which decides coverability questions such as
//! "can a configuration containing `use(X) | use(X)` be reached from `init`".
//! The [`prover`] is an independent top-down proof search used to
//! cross-check the engine.

pub mod engine;
pub mod judgment;
pub mod kernel;
pub mod prover;
pub mod syntax;
#[cfg(feature = "testing")]
pub mod testing;
pub mod unify;

pub use kernel::{Atom, Fact, Signature, Substitution, Term, Var};
pub use syntax::{parse_fact, parse_goal, parse_program, Clause, Goal, Program};
