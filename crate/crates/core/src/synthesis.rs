//! Compiles a well-formed deterministic global property over an alphabet P
//! into an edit automaton.
//!
//! Stars are expanded as a derivative-style graph: a state is either the
//! remaining local property of the current scan cycle (with the star root as
//! implicit loop continuation) or a product of such states, produced by
//! intersection. Products of two whole stars go through the automaton-level
//! cross product.

use std::collections::{BTreeSet, HashMap, VecDeque};

use thiserror::Error;

use crate::automata::{EditAutomaton, EditLabel, StateBody};
use crate::prop::{GlobalProp, LocalKind, LocalProp};
use crate::trace::Action;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SynthError {
    #[error("property is not well-formed: some branch does not terminate in `end`")]
    IllFormed,
    #[error("property is nondeterministic: a union repeats a guard event")]
    Nondeterministic,
    #[error("events outside the declared alphabet: {0:?}")]
    AlphabetMismatch(Vec<String>),
}

/// Alphabet context for synthesis.
#[derive(Clone, Debug)]
pub struct SynthContext {
    pub alphabet: BTreeSet<Action>,
}

impl SynthContext {
    pub fn new(alphabet: BTreeSet<Action>) -> Self {
        SynthContext { alphabet }
    }
}

/// Synthesis state descriptor inside one star.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
enum Desc {
    /// Remaining local property of the current cycle; loops to the star root
    /// when it runs out.
    Simple(LocalProp),
    Prod(Box<Desc>, Box<Desc>),
}

fn prod(a: Desc, b: Desc) -> Desc {
    if a == b {
        a
    } else {
        Desc::Prod(Box::new(a), Box::new(b))
    }
}

/// Normalizes a remaining property into a descriptor: epsilon loops to the
/// root, intersections become products (distributed over sequencing), and
/// sequences are re-associated so the head is always a union.
fn norm(p: &LocalProp, root: Option<&Desc>) -> Desc {
    match p.kind() {
        LocalKind::Epsilon => root.expect("epsilon at star top").clone(),
        LocalKind::Union(_) => Desc::Simple(p.clone()),
        LocalKind::Inter(a, b) => prod(norm(a, root), norm(b, root)),
        LocalKind::Seq(a, b) => match a.kind() {
            LocalKind::Epsilon => norm(b, root),
            LocalKind::Union(_) => Desc::Simple(p.clone()),
            LocalKind::Seq(x, y) => {
                norm(&LocalProp::seq(x.clone(), LocalProp::seq(y.clone(), b.clone())), root)
            }
            LocalKind::Inter(x, y) => prod(
                norm(&LocalProp::seq(x.clone(), b.clone()), root),
                norm(&LocalProp::seq(y.clone(), b.clone()), root),
            ),
        },
    }
}

/// The guarded next steps of a descriptor (its allowed actions).
fn arms_of(d: &Desc, root: &Desc) -> Vec<(Action, Desc)> {
    match d {
        Desc::Simple(rest) => branches(rest, None, root),
        Desc::Prod(a, b) => {
            let left = arms_of(a, root);
            let right = arms_of(b, root);
            let mut out = Vec::new();
            for (e1, t1) in &left {
                for (e2, t2) in &right {
                    if e1 == e2 {
                        out.push((e1.clone(), prod(t1.clone(), t2.clone())));
                    }
                }
            }
            out
        }
    }
}

fn branches(p: &LocalProp, tail: Option<&LocalProp>, root: &Desc) -> Vec<(Action, Desc)> {
    match p.kind() {
        LocalKind::Union(bs) => bs
            .iter()
            .map(|(ev, pb)| {
                let rest = match tail {
                    None => pb.clone(),
                    Some(t) => LocalProp::seq(pb.clone(), t.clone()),
                };
                (ev.clone(), norm(&rest, Some(root)))
            })
            .collect(),
        LocalKind::Seq(a, b) => {
            let t = match tail {
                None => b.clone(),
                Some(t) => LocalProp::seq(b.clone(), t.clone()),
            };
            branches(a, Some(&t), root)
        }
        LocalKind::Epsilon | LocalKind::Inter(..) => {
            unreachable!("descriptor heads are normalized to unions")
        }
    }
}

fn star_synth(p: &LocalProp, alphabet: &BTreeSet<Action>) -> EditAutomaton {
    let root = norm(p, None);
    // Discover the descriptor graph with its matched (allow) arms.
    let mut ids: HashMap<Desc, usize> = HashMap::new();
    let mut descs: Vec<Desc> = Vec::new();
    let mut allow: Vec<Vec<(Action, usize)>> = Vec::new();
    ids.insert(root.clone(), 0);
    descs.push(root.clone());
    allow.push(Vec::new());
    let mut queue = VecDeque::from([0usize]);
    while let Some(id) = queue.pop_front() {
        let d = descs[id].clone();
        let mut out = Vec::new();
        for (ev, target) in arms_of(&d, &root) {
            let tid = *ids.entry(target.clone()).or_insert_with(|| {
                descs.push(target);
                allow.push(Vec::new());
                queue.push_back(descs.len() - 1);
                descs.len() - 1
            });
            out.push((ev, tid));
        }
        allow[id] = out;
    }

    // Least fixpoint of deadness over product nodes: a product is dead iff
    // every matched successor product is dead. Simple states always keep
    // their arms.
    let n = descs.len();
    let is_prod: Vec<bool> = descs.iter().map(|d| matches!(d, Desc::Prod(..))).collect();
    let mut dead = vec![false; n];
    loop {
        let mut changed = false;
        for i in 0..n {
            if is_prod[i]
                && !dead[i]
                && allow[i].iter().all(|(_, t)| dead[*t])
            {
                dead[i] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    // Emit: live states keep their arms (allow + insert on end + suppress);
    // dead products collapse into one suppress-all sink.
    let suppressible: Vec<Action> = alphabet
        .iter()
        .filter(|a| !a.is_tick() && !a.is_end())
        .cloned()
        .collect();
    let any_dead = dead.iter().any(|&d| d);
    let mut live_ids: Vec<Option<usize>> = Vec::with_capacity(n);
    let mut next = 0;
    for &d in &dead {
        if d {
            live_ids.push(None);
        } else {
            live_ids.push(Some(next));
            next += 1;
        }
    }
    let sink = next;
    let mut states = vec![StateBody::Go; next + usize::from(any_dead)];
    if any_dead {
        states[sink] = StateBody::Sum(
            suppressible.iter().map(|a| (EditLabel::Suppress(a.clone()), sink)).collect(),
        );
    }
    for i in 0..n {
        let Some(me) = live_ids[i] else { continue };
        let mut arms: Vec<(EditLabel, usize)> = Vec::new();
        let mut inserts: Vec<(EditLabel, usize)> = Vec::new();
        let mut guards: BTreeSet<Action> = BTreeSet::new();
        for (ev, t) in &allow[i] {
            guards.insert(ev.clone());
            if is_prod[i] && dead[*t] {
                // Pruned from the product's index set; the action falls into
                // the suppression sum below.
                continue;
            }
            let target = live_ids[*t].unwrap_or(sink);
            arms.push((EditLabel::Allow(ev.clone()), target));
            if !ev.is_end() {
                inserts.push((
                    EditLabel::Insert { trigger: Action::end(), inserted: ev.clone() },
                    target,
                ));
            }
        }
        // For products, pruned actions must be suppressed again; for simple
        // states the suppression set excludes all declared guards.
        let kept: BTreeSet<Action> = arms
            .iter()
            .map(|(l, _)| match l {
                EditLabel::Allow(a) => a.clone(),
                _ => unreachable!(),
            })
            .collect();
        let excluded = if is_prod[i] { &kept } else { &guards };
        arms.extend(inserts);
        for a in &suppressible {
            if !excluded.contains(a) {
                arms.push((EditLabel::Suppress(a.clone()), me));
            }
        }
        states[me] = StateBody::Sum(arms);
    }
    let initial = live_ids[0].unwrap_or(sink);
    EditAutomaton { initial, states, alphabet: alphabet.clone() }
}

fn check(e: &GlobalProp, ctx: &SynthContext) -> Result<(), SynthError> {
    if !e.well_formed() {
        return Err(SynthError::IllFormed);
    }
    if !e.is_deterministic() {
        return Err(SynthError::Nondeterministic);
    }
    let missing: Vec<String> = e
        .events_of()
        .into_iter()
        .filter(|ev| !ctx.alphabet.contains(ev))
        .map(|ev| ev.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(SynthError::AlphabetMismatch(missing));
    }
    Ok(())
}

/// Monitor synthesis: stars expand to recursive sums, global intersections
/// to cross products of the factors.
pub fn synthesize(e: &GlobalProp, ctx: &SynthContext) -> Result<EditAutomaton, SynthError> {
    check(e, ctx)?;
    Ok(synth_unchecked(e, ctx))
}

fn synth_unchecked(e: &GlobalProp, ctx: &SynthContext) -> EditAutomaton {
    match e {
        GlobalProp::Star(p) => star_synth(p, &ctx.alphabet),
        GlobalProp::Inter(e1, e2) => {
            synth_unchecked(e1, ctx).cross_product(&synth_unchecked(e2, ctx))
        }
    }
}

/// Synthesized state count against the derivative bound m^(k+1), with
/// m = prop_size(e) and k the number of intersections.
pub fn check_derivative_bound(
    e: &GlobalProp,
    ctx: &SynthContext,
) -> Result<(usize, u128, bool), SynthError> {
    let a = synthesize(e, ctx)?;
    let states = a.reachable_state_count();
    let m = e.prop_size();
    let k = e.inter_count();
    let bound = m.saturating_pow((k + 1).try_into().unwrap_or(u32::MAX));
    Ok((states, bound, states as u128 <= bound))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn act(s: &str) -> Action {
        Action::parse(s).unwrap()
    }

    fn ctx(names: &[&str]) -> SynthContext {
        SynthContext::new(names.iter().map(|s| act(s)).collect())
    }

    fn star(text: &str) -> GlobalProp {
        crate::prop::parse_property(text).unwrap()
    }

    /// Bounded oracle: the allowed-trace language of the monitor equals the
    /// prefix closure of the property language.
    fn assert_allowed_equals_prefixes(e: &GlobalProp, ctx: &SynthContext, depth: usize) {
        let a = synthesize(e, ctx).unwrap();
        let cex = a.allowed_nfa().equal_upto(&e.to_nfa(), depth, true);
        assert!(cex.is_none(), "language mismatch for {e}: {:?}", cex);
    }

    #[test]
    fn star_end_shape() {
        let e = star("(end)*");
        let a = synthesize(&e, &ctx(&["s:x", "end", "tick"])).unwrap();
        assert_eq!(a.reachable_state_count(), 1);
        let StateBody::Sum(arms) = &a.states[a.initial] else { panic!() };
        assert_eq!(
            arms,
            &vec![
                (EditLabel::Allow(act("end")), a.initial),
                (EditLabel::Suppress(act("s:x")), a.initial),
            ]
        );
    }

    #[test]
    fn star_sensor_end_shape() {
        let e = star("(s:x . end)*");
        let a = synthesize(&e, &ctx(&["s:x", "a:y", "end", "tick"])).unwrap();
        assert_eq!(a.reachable_state_count(), 2);
        let StateBody::Sum(arms) = &a.states[a.initial] else { panic!() };
        let z1 = arms[0].1;
        assert_eq!(
            arms,
            &vec![
                (EditLabel::Allow(act("s:x")), z1),
                (
                    EditLabel::Insert { trigger: act("end"), inserted: act("s:x") },
                    z1
                ),
                (EditLabel::Suppress(act("a:y")), a.initial),
            ]
        );
        let StateBody::Sum(arms1) = &a.states[z1] else { panic!() };
        assert_eq!(
            arms1,
            &vec![
                (EditLabel::Allow(act("end")), a.initial),
                (EditLabel::Suppress(act("s:x")), z1),
                (EditLabel::Suppress(act("a:y")), z1),
            ]
        );
    }

    #[test]
    fn global_inter_goes_through_cross_product() {
        let c = ctx(&["s:x", "s:y", "end", "tick"]);
        let e = star("(s:x . end)* & (s:y . end)*");
        let a = synthesize(&e, &c).unwrap();
        assert!(a.is_suppress_all(a.initial));
    }

    #[test]
    fn rejects_bad_inputs() {
        let c = ctx(&["s:x", "end", "tick"]);
        let ill = GlobalProp::Star(LocalProp::union1(act("s:x"), LocalProp::epsilon()));
        assert_eq!(synthesize(&ill, &c), Err(SynthError::IllFormed));
        let nondet = GlobalProp::Star(LocalProp::union(vec![
            (act("s:x"), LocalProp::end_eps()),
            (act("s:x"), LocalProp::union1(act("tick"), LocalProp::end_eps())),
        ]));
        assert_eq!(synthesize(&nondet, &c), Err(SynthError::Nondeterministic));
        let foreign = star("(s:zz . end)*");
        assert!(matches!(
            synthesize(&foreign, &c),
            Err(SynthError::AlphabetMismatch(_))
        ));
    }

    #[test]
    fn union_with_end_guard_has_no_end_insert() {
        let c = ctx(&["s:x", "end", "tick"]);
        let e = star("(s:x . end + end)*");
        let a = synthesize(&e, &c).unwrap();
        for body in &a.states {
            if let StateBody::Sum(arms) = body {
                for (l, _) in arms {
                    if let EditLabel::Insert { inserted, .. } = l {
                        assert!(!inserted.is_end());
                    }
                }
            }
        }
    }

    #[test]
    fn never_suppresses_tick_or_end() {
        let c = ctx(&["s:x", "a:y", "end", "tick"]);
        for text in ["(end)*", "(s:x . end)*", "(tick . s:x . end)*", "(s:x . end)* & (end)*"] {
            let a = synthesize(&star(text), &c).unwrap();
            for body in &a.states {
                if let StateBody::Sum(arms) = body {
                    for (l, _) in arms {
                        if let EditLabel::Suppress(x) = l {
                            assert!(!x.is_tick() && !x.is_end(), "in {text}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn every_state_enables_something() {
        let c = ctx(&["s:x", "a:y", "end", "tick"]);
        for text in ["(end)*", "(s:x . end)*", "(s:x . end & a:y . end)*"] {
            let a = synthesize(&star(text), &c).unwrap();
            for s in 0..a.states.len() {
                assert!(!a.enabled(s).unwrap().is_empty(), "in {text}");
            }
        }
    }

    #[test]
    fn allowed_language_oracle_simple() {
        let c = ctx(&["s:x", "a:y", "end", "tick"]);
        for text in [
            "(end)*",
            "(s:x . end)*",
            "(tick . s:x . a:y . end)*",
            "(s:x . end + a:y . end)*",
            "(s:x . end ; a:y . end)*",
        ] {
            assert_allowed_equals_prefixes(&star(text), &c, 8);
        }
    }

    #[test]
    fn allowed_language_oracle_intersections() {
        let c = ctx(&["s:x", "a:y", "end", "tick"]);
        for text in [
            "(end)* & (end)*",
            "(s:x . end)* & (s:x . end)*",
            "(s:x . end & s:x . end)*",
            "(s:x . a:y . end & s:x . end)*",
            "(s:x . end + a:y . end)* & (s:x . end + end)*",
            "((s:x . end & s:x . a:y . end) ; end)*",
        ] {
            assert_allowed_equals_prefixes(&star(text), &c, 8);
        }
    }

    #[test]
    fn local_inter_inside_star_loops() {
        // Both factors constrain the same cycles; the product must loop back
        // to the star root after each end.
        let c = ctx(&["s:x", "a:y", "end", "tick"]);
        let e = star("(s:x . end & s:x . end)*");
        let a = synthesize(&e, &c).unwrap();
        let single = synthesize(&star("(s:x . end)*"), &c).unwrap();
        assert!(a.allowed_nfa().equal_upto(&single.allowed_nfa(), 10, false).is_none());
    }

    #[test]
    fn derivative_bound_examples() {
        let c = ctx(&["s:x", "end", "tick"]);
        let (states, bound, ok) = check_derivative_bound(&star("(end)*"), &c).unwrap();
        assert_eq!(bound, 2);
        assert!(ok, "{states} > {bound}");
        let e = star("(end)* & (end)*");
        let (_, bound, ok) = check_derivative_bound(&e, &c).unwrap();
        assert_eq!(bound, 25);
        assert!(ok);
    }

    #[test]
    fn per_state_label_determinism() {
        let c = ctx(&["s:x", "a:y", "end", "tick"]);
        for text in ["(s:x . end + a:y . end)*", "(s:x . end)* & (s:x . a:y . end)*"] {
            let a = synthesize(&star(text), &c).unwrap();
            for s in 0..a.states.len() {
                let labels = a.enabled(s).unwrap();
                let set: BTreeSet<_> = labels.iter().collect();
                assert_eq!(set.len(), labels.len(), "duplicate label in {text}");
            }
        }
    }
}
