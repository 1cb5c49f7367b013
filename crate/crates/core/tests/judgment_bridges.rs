use lo_core::judgment::{
    asat, concrete_sat, entails, entails_interp, output_key_fact, AsatOptions, Interpretation, JudgmentOutput,
};
use lo_core::kernel::{Session, Var};
use lo_core::testing::{random_fact, random_goal, random_interpretation, GenConfig};
use lo_core::{Fact, Goal, Substitution, Term};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

fn config(rng: &mut StdRng) -> GenConfig {
    if rng.gen_bool(0.5) {
        GenConfig::small_functional()
    } else {
        GenConfig::monadic(rng)
    }
}

fn vars() -> Vec<Var> {
    vec![Var::named("X"), Var::named("Y")]
}

fn grounding<'a>(rng: &mut StdRng, vs: impl IntoIterator<Item = &'a Var>, terms: &[Term]) -> Substitution {
    Substitution::from_pairs(vs.into_iter().map(|v| (v.clone(), terms.choose(rng).unwrap().clone())))
}

fn ground_fact(rng: &mut StdRng, cfg: &GenConfig, terms: &[Term], max_atoms: usize) -> Fact {
    let f = random_fact(rng, cfg, max_atoms, &vars());
    let theta = grounding(rng, &f.vars(), terms);
    f.apply(&theta)
}

fn outputs(interp: &Interpretation, goal: &Goal) -> Vec<JudgmentOutput> {
    asat(interp, std::slice::from_ref(goal), AsatOptions::unpruned(), &mut Session::new())
}

#[test]
fn soundness_bridge() {
    let mut rng = StdRng::seed_from_u64(71);
    let mut checked = 0;
    while checked < 500 {
        let cfg = config(&mut rng);
        let terms = cfg.signature().ground_terms(1);
        let interp = random_interpretation(&mut rng, &cfg, 4, 2);
        let goal = random_goal(&mut rng, &cfg, 2, &vars());
        for o in outputs(&interp, &goal) {
            let inst = goal.apply(&o.subst);
            let residue = o.instantiated_fact();
            let mut open = inst.free_vars();
            open.extend(residue.vars());
            let theta = grounding(&mut rng, &open, &terms);
            let mut larger = residue.apply(&theta);
            if rng.gen_bool(0.5) {
                larger = larger.union(&ground_fact(&mut rng, &cfg, &terms, 1));
            }
            assert!(
                concrete_sat(&interp, &[inst.apply(&theta)], &larger),
                "interp {interp:?}\ngoal {goal}\noutput {o:?}\ngrounding {theta:?}"
            );
            checked += 1;
        }
    }
}

#[test]
fn completeness_bridge() {
    let mut rng = StdRng::seed_from_u64(72);
    let (mut checked, mut attempts) = (0, 0);
    while checked < 500 {
        attempts += 1;
        assert!(attempts < 200_000, "only {checked} satisfiable samples");
        let cfg = config(&mut rng);
        let terms = cfg.signature().ground_terms(1);
        let interp = random_interpretation(&mut rng, &cfg, 4, 2);
        let goal = random_goal(&mut rng, &cfg, 2, &vars());
        let free: Vec<Var> = goal.free_vars().into_iter().collect();
        let theta = grounding(&mut rng, &free, &terms);
        let residue = ground_fact(&mut rng, &cfg, &terms, 2);
        if !concrete_sat(&interp, &[goal.apply(&theta)], &residue) {
            continue;
        }
        let target = output_key_fact(&JudgmentOutput { fact: residue, subst: theta, support: Vec::new() }, &free);
        let outs = outputs(&interp, &goal);
        assert!(
            outs.iter().any(|o| entails(&target, &output_key_fact(o, &free))),
            "interp {interp:?}\ngoal {goal}\ninstance {target}\noutputs {outs:?}"
        );
        checked += 1;
    }
}

#[test]
fn residue_moves_into_the_context() {
    let mut rng = StdRng::seed_from_u64(73);
    let (mut checked, mut positive) = (0, 0);
    while checked < 500 || positive < 100 {
        let cfg = config(&mut rng);
        let terms = cfg.signature().ground_terms(1);
        let interp = random_interpretation(&mut rng, &cfg, 4, 2);
        let goal = random_goal(&mut rng, &cfg, 2, &vars());
        let goal = goal.apply(&grounding(&mut rng, &goal.free_vars(), &terms));
        let residue = ground_fact(&mut rng, &cfg, &terms, 2);
        let mut moved = vec![goal.clone()];
        moved.extend(residue.iter().cloned().map(Goal::Atom));
        let left = concrete_sat(&interp, std::slice::from_ref(&goal), &residue);
        assert_eq!(
            left,
            concrete_sat(&interp, &moved, &Fact::empty()),
            "interp {interp:?}\ngoal {goal}\nresidue {residue}"
        );
        checked += 1;
        positive += usize::from(left);
    }
}

/// Weakens every fact of `interp` to a ground instance, sometimes with an
/// extra atom, and drops some facts.
fn weaker(rng: &mut StdRng, cfg: &GenConfig, interp: &Interpretation, terms: &[Term]) -> Interpretation {
    let mut out = Vec::new();
    for f in interp.iter() {
        if rng.gen_bool(0.2) {
            continue;
        }
        let mut g = f.apply(&grounding(rng, &f.vars(), terms));
        if rng.gen_bool(0.3) {
            g = g.union(&ground_fact(rng, cfg, terms, 1));
        }
        out.push(g);
    }
    Interpretation::new(out)
}

#[test]
fn outputs_grow_with_the_interpretation() {
    let mut rng = StdRng::seed_from_u64(74);
    let mut checked = 0;
    while checked < 300 {
        let cfg = config(&mut rng);
        let terms = cfg.signature().ground_terms(1);
        let large = random_interpretation(&mut rng, &cfg, 4, 2);
        let small = weaker(&mut rng, &cfg, &large, &terms);
        assert!(entails_interp(&small, &large));
        let goal = random_goal(&mut rng, &cfg, 2, &vars());
        let free: Vec<Var> = goal.free_vars().into_iter().collect();
        let big_keys: Vec<Fact> = outputs(&large, &goal).iter().map(|o| output_key_fact(o, &free)).collect();
        for o in outputs(&small, &goal) {
            let key = output_key_fact(&o, &free);
            assert!(
                big_keys.iter().any(|k| entails(&key, k)),
                "small {small:?}\nlarge {large:?}\ngoal {goal}\noutput {key}"
            );
            checked += 1;
        }
    }
}
