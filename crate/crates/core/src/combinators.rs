//! Derived property combinators, macro-expanded into the core grammar.
//!
//! Each combinator expands a bounded conditional / eventuality / persistency
//! / absence scheme into nested guarded unions, parameterized by the
//! per-controller maximum number of actions per scan cycle. Hash-consing of
//! local properties keeps the expansions DAG-sized.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::prop::{Event, LocalProp};
use crate::trace::Action;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CombinatorError {
    #[error("maxa must be at least 1")]
    ZeroMaxa,
    #[error("event `{0}` is not a pure untimed event (tick/end not allowed)")]
    NotPureUntimed(Event),
    #[error("`end` may not appear in an event-power set")]
    EndInPowerSet,
    #[error("cycle parameter must be at least 1")]
    ZeroCycles,
    #[error("interval [{0}, {1}] requires 1 <= m <= n")]
    BadInterval(usize, usize),
    #[error("mutual exclusion needs at least 2 events")]
    TooFewEvents,
    #[error("tau is not an event")]
    TauEvent,
}

/// Alphabet context for expansion: the pure events of the ambient action set.
#[derive(Clone, Debug)]
pub struct CombinatorEnv {
    pub maxa: usize,
    /// Events minus `end`.
    pub pevents: BTreeSet<Event>,
}

impl CombinatorEnv {
    /// Builds the environment from the full declared event alphabet; `end`
    /// is removed, `tick` is kept in pevents if present.
    pub fn new(
        maxa: usize,
        events: impl IntoIterator<Item = Event>,
    ) -> Result<CombinatorEnv, CombinatorError> {
        if maxa == 0 {
            return Err(CombinatorError::ZeroMaxa);
        }
        let mut pevents = BTreeSet::new();
        for ev in events {
            if ev.is_tau() {
                return Err(CombinatorError::TauEvent);
            }
            if !ev.is_end() {
                pevents.insert(ev);
            }
        }
        Ok(CombinatorEnv { maxa, pevents })
    }

    /// Pure untimed events: pevents minus tick.
    pub fn puevents(&self) -> BTreeSet<Event> {
        self.pevents.iter().filter(|e| !e.is_tick()).cloned().collect()
    }

    fn check_trigger(&self, ev: &Event) -> Result<(), CombinatorError> {
        if ev.is_tick() || ev.is_end() || ev.is_tau() {
            return Err(CombinatorError::NotPureUntimed(ev.clone()));
        }
        Ok(())
    }

    /// Branches `(alpha, cont)` for every pure event outside `exclude`.
    fn fallthrough(&self, exclude: &BTreeSet<Event>, cont: &LocalProp) -> Vec<(Event, LocalProp)> {
        self.pevents
            .iter()
            .filter(|e| !exclude.contains(e))
            .map(|e| (e.clone(), cont.clone()))
            .collect()
    }
}

fn end_branch() -> (Event, LocalProp) {
    (Action::end(), LocalProp::epsilon())
}

/// Sequencing that drops epsilon units, so `p ; eps = p` stays well-formed.
fn seq(a: LocalProp, b: LocalProp) -> LocalProp {
    if a.is_epsilon() {
        b
    } else if b.is_epsilon() {
        a
    } else {
        LocalProp::seq(a, b)
    }
}

/// `A^{<=k}`: all sequences over `A` of length at most `k`, each terminated
/// by `end`.
pub fn power_upto(a: &BTreeSet<Event>, k: usize) -> Result<LocalProp, CombinatorError> {
    if a.iter().any(|e| e.is_end()) {
        return Err(CombinatorError::EndInPowerSet);
    }
    if a.iter().any(|e| e.is_tau()) {
        return Err(CombinatorError::TauEvent);
    }
    let mut q = LocalProp::end_eps();
    for _ in 0..k {
        let mut branches = vec![end_branch()];
        branches.extend(a.iter().map(|e| (e.clone(), q.clone())));
        q = LocalProp::union(branches);
    }
    Ok(q)
}

/// Case conditional: when a trigger occurs in the current scan cycle, its
/// associated property must hold; an empty trigger list degenerates to
/// `PEvents^{<=maxa}`.
pub fn case_cnd(
    env: &CombinatorEnv,
    triggers: &[(Event, LocalProp)],
) -> Result<LocalProp, CombinatorError> {
    for (ev, _) in triggers {
        env.check_trigger(ev)?;
    }
    let guard_set: BTreeSet<Event> = triggers.iter().map(|(e, _)| e.clone()).collect();
    let mut q = LocalProp::end_eps();
    for _ in 0..env.maxa {
        let mut branches = vec![end_branch()];
        branches.extend(triggers.iter().cloned());
        branches.extend(env.fallthrough(&guard_set, &q));
        q = LocalProp::union(branches);
    }
    Ok(q)
}

/// Simple conditional, the singleton case.
pub fn cnd(env: &CombinatorEnv, pi: &Event, p: &LocalProp) -> Result<LocalProp, CombinatorError> {
    case_cnd(env, &[(pi.clone(), p.clone())])
}

/// Persistent conditional: the cause-effect search persists for `m`
/// consecutive scan cycles.
///
/// The printed base case of the scheme is the empty property, which would
/// make the expansion ill-formed and contradict `CND = PCND(.,.,1)`; the
/// `end` base case of the plain conditional is used instead.
pub fn pcnd(
    env: &CombinatorEnv,
    pi: &Event,
    p: &LocalProp,
    m: usize,
) -> Result<LocalProp, CombinatorError> {
    env.check_trigger(pi)?;
    if m == 0 {
        return Err(CombinatorError::ZeroCycles);
    }
    let guard_set = BTreeSet::from([pi.clone()]);
    let mut prev: Option<LocalProp> = None;
    for _h in 1..=m {
        // end clause: last searched cycle ends the property, earlier cycles
        // continue the search in the next cycle.
        let end_cl = match &prev {
            None => end_branch(),
            Some(q_prev) => (Action::end(), q_prev.clone()),
        };
        let mut q = match &prev {
            None => LocalProp::end_eps(),
            Some(q_prev) => LocalProp::union1(Action::end(), q_prev.clone()),
        };
        for _k in 1..=env.maxa {
            let mut branches = vec![end_cl.clone(), (pi.clone(), p.clone())];
            branches.extend(env.fallthrough(&guard_set, &q));
            q = LocalProp::union(branches);
        }
        prev = Some(q);
    }
    Ok(prev.unwrap())
}

/// Bounded eventually: `pi` must occur within `m` scan cycles.
pub fn be(env: &CombinatorEnv, pi: &Event, m: usize) -> Result<LocalProp, CombinatorError> {
    env.check_trigger(pi)?;
    if m == 0 {
        return Err(CombinatorError::ZeroCycles);
    }
    let guard_set = BTreeSet::from([pi.clone()]);
    let mut prev: Option<LocalProp> = None;
    for _h in 1..=m {
        let mut q = match &prev {
            // q^1_0 = pi.end
            None => LocalProp::union1(pi.clone(), LocalProp::end_eps()),
            // q^h_0 = end.q^{h-1}_maxa
            Some(q_prev) => LocalProp::union1(Action::end(), q_prev.clone()),
        };
        for k in 1..=env.maxa {
            let mut branches = Vec::new();
            if let Some(q_prev) = &prev {
                branches.push((Action::end(), q_prev.clone()));
            }
            branches.push((pi.clone(), power_upto(&env.pevents, k - 1)?));
            branches.extend(env.fallthrough(&guard_set, &q));
            q = LocalProp::union(branches);
        }
        prev = Some(q);
    }
    Ok(prev.unwrap())
}

/// Bounded persistency: `pi` must occur in all subsequent `m` scan cycles.
pub fn bp(env: &CombinatorEnv, pi: &Event, m: usize) -> Result<LocalProp, CombinatorError> {
    env.check_trigger(pi)?;
    if m == 0 {
        return Err(CombinatorError::ZeroCycles);
    }
    let guard_set = BTreeSet::from([pi.clone()]);
    let mut prev: Option<LocalProp> = None;
    for _h in 1..=m {
        let mut q = match &prev {
            // q^1_0 = pi.end
            None => LocalProp::union1(pi.clone(), LocalProp::end_eps()),
            // q^h_0 = pi.end.q^{h-1}_maxa
            Some(q_prev) => LocalProp::union1(
                pi.clone(),
                LocalProp::union1(Action::end(), q_prev.clone()),
            ),
        };
        for k in 1..=env.maxa {
            let tail = power_upto(&env.pevents, k - 1)?;
            let head = match &prev {
                None => tail,
                Some(q_prev) => seq(tail, q_prev.clone()),
            };
            let mut branches = vec![(pi.clone(), head)];
            branches.extend(env.fallthrough(&guard_set, &q));
            q = LocalProp::union(branches);
        }
        prev = Some(q);
    }
    Ok(prev.unwrap())
}

/// Bounded absence: `pi` must not occur in the subsequent `m` scan cycles.
pub fn ba(env: &CombinatorEnv, pi: &Event, m: usize) -> Result<LocalProp, CombinatorError> {
    env.check_trigger(pi)?;
    if m == 0 {
        return Err(CombinatorError::ZeroCycles);
    }
    let others: BTreeSet<Event> =
        env.pevents.iter().filter(|e| *e != pi).cloned().collect();
    let cycle = power_upto(&others, env.maxa)?;
    let mut q = LocalProp::epsilon();
    for _ in 0..m {
        q = seq(cycle.clone(), q);
    }
    Ok(q)
}

fn check_interval(m: usize, n: usize) -> Result<(), CombinatorError> {
    if m == 0 || m > n {
        return Err(CombinatorError::BadInterval(m, n));
    }
    Ok(())
}

/// `(PEvents^{<=maxa})^n`, the free filler of `n` unconstrained scan cycles.
fn free_cycles(env: &CombinatorEnv, n: usize) -> Result<LocalProp, CombinatorError> {
    let cycle = power_upto(&env.pevents, env.maxa)?;
    let mut q = LocalProp::epsilon();
    for _ in 0..n {
        q = seq(cycle.clone(), q);
    }
    Ok(q)
}

/// Conditional bounded eventually: if `pi1` occurs then `pi2` must occur
/// between the `m`-th and `n`-th scan cycle.
pub fn cbe(
    env: &CombinatorEnv,
    pi1: &Event,
    pi2: &Event,
    m: usize,
    n: usize,
) -> Result<LocalProp, CombinatorError> {
    check_interval(m, n)?;
    let body = seq(free_cycles(env, m - 1)?, be(env, pi2, n - m + 1)?);
    cnd(env, pi1, &body)
}

/// Conditional bounded persistency over the interval `[m, n]`.
pub fn cbp(
    env: &CombinatorEnv,
    pi1: &Event,
    pi2: &Event,
    m: usize,
    n: usize,
) -> Result<LocalProp, CombinatorError> {
    check_interval(m, n)?;
    let body = seq(free_cycles(env, m - 1)?, bp(env, pi2, n - m + 1)?);
    cnd(env, pi1, &body)
}

/// Conditional bounded absence over the interval `[m, n]`.
pub fn cba(
    env: &CombinatorEnv,
    pi1: &Event,
    pi2: &Event,
    m: usize,
    n: usize,
) -> Result<LocalProp, CombinatorError> {
    check_interval(m, n)?;
    let body = seq(free_cycles(env, m - 1)?, ba(env, pi2, n - m + 1)?);
    cnd(env, pi1, &body)
}

/// Minimum duration: when `pi1`, if `pi2` occurs within `m` cycles it must
/// persist for at least `n` further cycles.
pub fn min_d(
    env: &CombinatorEnv,
    pi1: &Event,
    pi2: &Event,
    m: usize,
    n: usize,
) -> Result<LocalProp, CombinatorError> {
    let inner = pcnd(env, pi2, &bp(env, pi2, n)?, m)?;
    cnd(env, pi1, &inner)
}

/// Maximum duration: when `pi1`, if `pi2` occurs within `m` cycles it may
/// persist for at most `n` further cycles.
pub fn max_d(
    env: &CombinatorEnv,
    pi1: &Event,
    pi2: &Event,
    m: usize,
    n: usize,
) -> Result<LocalProp, CombinatorError> {
    let body = seq(free_cycles(env, n)?, ba(env, pi2, 1)?);
    let inner = pcnd(env, pi2, &body, m)?;
    cnd(env, pi1, &inner)
}

/// Bounded response: when `pi1`, if `pi2` occurs within `m` cycles then
/// `pi3` appears within `n` cycles.
pub fn br(
    env: &CombinatorEnv,
    pi1: &Event,
    pi2: &Event,
    pi3: &Event,
    m: usize,
    n: usize,
) -> Result<LocalProp, CombinatorError> {
    let inner = pcnd(env, pi2, &be(env, pi3, n)?, m)?;
    cnd(env, pi1, &inner)
}

/// Bounded invariance: when `pi1`, if `pi2` occurs within `m` cycles then
/// `pi3` persists for at least `n` cycles.
pub fn bi(
    env: &CombinatorEnv,
    pi1: &Event,
    pi2: &Event,
    pi3: &Event,
    m: usize,
    n: usize,
) -> Result<LocalProp, CombinatorError> {
    let inner = pcnd(env, pi2, &bp(env, pi3, n)?, m)?;
    cnd(env, pi1, &inner)
}

/// Bounded mutual exclusion: within `m` consecutive scan cycles the given
/// events exclude one another.
///
/// As with the persistent conditional, the `end` base case replaces the
/// printed empty-property base case to keep the expansion well-formed.
pub fn bme(
    env: &CombinatorEnv,
    events: &BTreeSet<Event>,
    m: usize,
) -> Result<LocalProp, CombinatorError> {
    if events.len() < 2 {
        return Err(CombinatorError::TooFewEvents);
    }
    for ev in events {
        env.check_trigger(ev)?;
    }
    if m == 0 {
        return Err(CombinatorError::ZeroCycles);
    }
    let mut prev: Option<LocalProp> = None;
    for h in 1..=m {
        let end_cl = match &prev {
            None => end_branch(),
            Some(q_prev) => (Action::end(), q_prev.clone()),
        };
        let mut q = match &prev {
            None => LocalProp::end_eps(),
            Some(q_prev) => LocalProp::union1(Action::end(), q_prev.clone()),
        };
        for _k in 1..=env.maxa {
            let mut branches = vec![end_cl.clone()];
            for pi in events {
                let mut excl: Option<LocalProp> = None;
                for pj in events {
                    if pj == pi {
                        continue;
                    }
                    let b = ba(env, pj, h)?;
                    excl = Some(match excl {
                        None => b,
                        Some(acc) => LocalProp::inter(acc, b),
                    });
                }
                branches.push((pi.clone(), excl.unwrap()));
            }
            branches.extend(env.fallthrough(events, &q));
            q = LocalProp::union(branches);
        }
        prev = Some(q);
    }
    Ok(prev.unwrap())
}

/// Prefixes `n` ticks, the k-sleeping generalization `tick^{k-1}.p`.
pub fn prefix_ticks(p: &LocalProp, n: usize) -> LocalProp {
    let mut q = p.clone();
    for _ in 0..n {
        q = LocalProp::union1(Action::tick(), q);
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prop::GlobalProp;
    use crate::trace::Trace;
    use std::collections::HashSet;

    fn ev(s: &str) -> Event {
        Action::parse(s).unwrap()
    }

    fn env2() -> CombinatorEnv {
        CombinatorEnv::new(2, [ev("s:x"), ev("s:y"), Action::end()]).unwrap()
    }

    fn lang(p: &LocalProp, maxlen: usize) -> HashSet<Trace> {
        GlobalProp::Star(p.clone()).to_nfa().enumerate(maxlen)
    }

    #[test]
    fn power_upto_base_cases() {
        let a = BTreeSet::from([ev("s:x")]);
        assert_eq!(power_upto(&a, 0).unwrap(), LocalProp::end_eps());
        let p1 = power_upto(&a, 1).unwrap();
        assert_eq!(
            p1,
            LocalProp::union(vec![
                (Action::end(), LocalProp::epsilon()),
                (ev("s:x"), LocalProp::end_eps()),
            ])
        );
        let empty = power_upto(&BTreeSet::new(), 2).unwrap();
        assert_eq!(empty, LocalProp::end_eps());
        assert_eq!(
            power_upto(&BTreeSet::from([Action::end()]), 1),
            Err(CombinatorError::EndInPowerSet)
        );
    }

    #[test]
    fn cnd_expansion_maxa1() {
        let env = CombinatorEnv::new(1, [ev("s:x"), ev("s:y"), Action::end()]).unwrap();
        let p = cnd(&env, &ev("s:x"), &LocalProp::end_eps()).unwrap();
        // q1 = end + s:x.(end.eps) + s:y.q0, q0 = end.eps
        let q0 = LocalProp::end_eps();
        let expect = LocalProp::union(vec![
            (Action::end(), LocalProp::epsilon()),
            (ev("s:x"), LocalProp::end_eps()),
            (ev("s:y"), q0),
        ]);
        assert_eq!(p, expect);
        assert!(p.well_formed());
        assert!(p.is_deterministic());
    }

    #[test]
    fn pcnd_one_equals_cnd() {
        let env = env2();
        let body = LocalProp::union1(ev("s:y"), LocalProp::end_eps());
        let c = cnd(&env, &ev("s:x"), &body).unwrap();
        let p = pcnd(&env, &ev("s:x"), &body, 1).unwrap();
        assert_eq!(c, p);
    }

    #[test]
    fn ba_language() {
        let env = env2();
        let p = ba(&env, &ev("s:x"), 1).unwrap();
        assert!(p.well_formed());
        // Star language of BA(s:x,1): factors are {end, s:y end, s:y s:y end}.
        let l = lang(&p, 3);
        let expect: HashSet<Trace> = [
            "", "end", "s:y end", "s:y s:y end", "end end", "end s:y end",
            "s:y end end", "end end end",
        ]
        .iter()
        .map(|s| Trace::parse(s).unwrap())
        .collect();
        assert_eq!(l, expect);
    }

    #[test]
    fn be_includes_trigger_trace() {
        let env = CombinatorEnv::new(1, [ev("s:x"), ev("s:y"), Action::end()]).unwrap();
        let p = be(&env, &ev("s:x"), 1).unwrap();
        assert!(p.well_formed());
        let l = lang(&p, 2);
        assert!(l.contains(&Trace::parse("s:x end").unwrap()));
        // BE requires the trigger before end within the window.
        assert!(!l.contains(&Trace::parse("end").unwrap()));
        assert!(!l.contains(&Trace::parse("s:y end").unwrap()));
    }

    #[test]
    fn bp_excludes_plain_end() {
        let env = env2();
        let p = bp(&env, &ev("s:x"), 1).unwrap();
        assert!(p.well_formed());
        let l = lang(&p, 2);
        assert!(!l.contains(&Trace::parse("end").unwrap()));
        assert!(l.contains(&Trace::parse("s:x end").unwrap()));
    }

    #[test]
    fn bp_spans_m_cycles() {
        let env = env2();
        let p = bp(&env, &ev("s:x"), 2).unwrap();
        assert!(p.well_formed());
        let l = lang(&p, 4);
        assert!(l.contains(&Trace::parse("s:x end s:x end").unwrap()));
        assert!(!l.contains(&Trace::parse("s:x end s:y end").unwrap()));
        assert!(!l.contains(&Trace::parse("s:x end").unwrap()));
    }

    #[test]
    fn cbe_at_one_is_cnd_of_be() {
        let env = env2();
        let a = cbe(&env, &ev("s:x"), &ev("s:y"), 1, 1).unwrap();
        let b = cnd(&env, &ev("s:x"), &be(&env, &ev("s:y"), 1).unwrap()).unwrap();
        assert_eq!(a, b);
        assert!(cbe(&env, &ev("s:x"), &ev("s:y"), 2, 1).is_err());
        assert!(cbe(&env, &ev("s:x"), &ev("s:y"), 0, 1).is_err());
    }

    #[test]
    fn br_is_cnd_pcnd_be() {
        let env = env2();
        let a = br(&env, &ev("s:x"), &ev("s:y"), &ev("s:x"), 1, 1).unwrap();
        let inner = pcnd(&env, &ev("s:y"), &be(&env, &ev("s:x"), 1).unwrap(), 1).unwrap();
        let b = cnd(&env, &ev("s:x"), &inner).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bme_rejects_joint_occurrence() {
        let env = CombinatorEnv::new(2, [ev("a:open"), ev("a:close"), Action::end()]).unwrap();
        let evs = BTreeSet::from([ev("a:open"), ev("a:close")]);
        let p = bme(&env, &evs, 1).unwrap();
        assert!(p.well_formed());
        let l = lang(&p, 3);
        assert!(!l.contains(&Trace::parse("a:open a:close end").unwrap()));
        assert!(l.contains(&Trace::parse("a:open end").unwrap()));
        assert!(l.contains(&Trace::parse("end").unwrap()));
        assert!(bme(&env, &BTreeSet::from([ev("a:open")]), 1).is_err());
    }

    #[test]
    fn outputs_well_formed_and_deterministic() {
        let env = CombinatorEnv::new(3, [ev("s:x"), ev("s:y"), ev("a:z"), Action::tick(), Action::end()])
            .unwrap();
        let x = ev("s:x");
        let y = ev("s:y");
        let z = ev("a:z");
        let props = vec![
            cnd(&env, &x, &LocalProp::end_eps()).unwrap(),
            pcnd(&env, &x, &LocalProp::end_eps(), 3).unwrap(),
            be(&env, &x, 2).unwrap(),
            bp(&env, &x, 2).unwrap(),
            ba(&env, &x, 2).unwrap(),
            cbe(&env, &x, &y, 1, 2).unwrap(),
            cbp(&env, &x, &y, 2, 3).unwrap(),
            cba(&env, &x, &y, 1, 2).unwrap(),
            min_d(&env, &x, &y, 2, 2).unwrap(),
            max_d(&env, &x, &y, 2, 2).unwrap(),
            br(&env, &x, &y, &z, 2, 2).unwrap(),
            bi(&env, &x, &y, &z, 2, 2).unwrap(),
            bme(&env, &BTreeSet::from([x.clone(), y.clone()]), 2).unwrap(),
        ];
        for p in props {
            assert!(p.well_formed());
            assert!(p.is_deterministic());
        }
    }

    #[test]
    fn tick_prefix_shifts_traces() {
        let env = env2();
        let p = cnd(&env, &ev("s:x"), &LocalProp::end_eps()).unwrap();
        let shifted = prefix_ticks(&p, 2);
        let l = lang(&shifted, 5);
        for t in &l {
            if !t.is_empty() {
                assert!(t.0[0].is_tick() && t.0[1].is_tick());
            }
        }
        assert!(l.contains(&Trace::parse("tick tick end").unwrap()));
    }

    #[test]
    fn triggers_must_be_pure_untimed() {
        let env = env2();
        assert!(cnd(&env, &Action::tick(), &LocalProp::end_eps()).is_err());
        assert!(be(&env, &Action::end(), 1).is_err());
        assert!(bp(&env, &ev("s:x"), 0).is_err());
    }
}
