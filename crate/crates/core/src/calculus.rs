//! Controller process terms and their single-step semantics.
//!
//! Controllers are sequential timed processes cycling through sleeping,
//! sensing, communication and actuation phases, closed by recursion
//! equations X = tick.W. Sensing and communication are under timeout: if no
//! guard fires in the current time slot the controller ticks into the
//! timeout continuation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::trace::{Action, ActionKind};

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub enum Proc {
    /// Process variable; steps through its defining equation.
    Var(String),
    /// tick.W
    Tick(Box<Proc>),
    /// Sensing under timeout: each branch fires on its sensor, otherwise the
    /// process ticks into the timeout continuation.
    SensTimeout { branches: Vec<(Action, Proc)>, timeout: Box<Proc> },
    /// Channel input under timeout.
    ChanInTimeout { branches: Vec<(Action, Proc)>, timeout: Box<Proc> },
    /// Channel output under timeout.
    ChanOutTimeout { channel: Action, then: Box<Proc>, timeout: Box<Proc> },
    /// Actuator command prefix.
    ActOut { actuator: Action, then: Box<Proc> },
    /// end.X: closes the scan cycle and restarts at the named equation.
    EndThen(String),
}

/// Recursion equations X = tick.W.
#[derive(Clone, PartialEq, Eq, Hash, Debug, Default)]
pub struct Defs(pub BTreeMap<String, Proc>);

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CalcError {
    #[error("unresolved process variable {0}")]
    Unresolved(String),
    #[error("equation {0} is not time-guarded")]
    NotTimeGuarded(String),
    #[error("phase violation: {0}")]
    Phase(String),
    #[error("duplicate sensor guard {0} in one sensing timeout")]
    DuplicateGuard(String),
}

/// Validation report for a controller.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Report {
    pub time_guarded: bool,
    pub maxa: usize,
    pub alphabet: BTreeSet<Action>,
}

/// The transitions licensed by the controller LTS.
pub fn ctrl_steps(j: &Proc, defs: &Defs) -> Result<Vec<(Action, Proc)>, CalcError> {
    match j {
        Proc::Var(x) => {
            let body = defs.0.get(x).ok_or_else(|| CalcError::Unresolved(x.clone()))?;
            match body {
                Proc::Tick(w) => Ok(vec![(Action::tick(), (**w).clone())]),
                Proc::Var(_) => Err(CalcError::NotTimeGuarded(x.clone())),
                other => ctrl_steps(other, defs),
            }
        }
        Proc::Tick(w) => Ok(vec![(Action::tick(), (**w).clone())]),
        Proc::SensTimeout { branches, timeout }
        | Proc::ChanInTimeout { branches, timeout } => {
            let mut out: Vec<(Action, Proc)> =
                branches.iter().map(|(g, p)| (g.clone(), p.clone())).collect();
            out.push((Action::tick(), (**timeout).clone()));
            Ok(out)
        }
        Proc::ChanOutTimeout { channel, then, timeout } => Ok(vec![
            (channel.clone(), (**then).clone()),
            (Action::tick(), (**timeout).clone()),
        ]),
        Proc::ActOut { actuator, then } => Ok(vec![(actuator.clone(), (**then).clone())]),
        Proc::EndThen(x) => Ok(vec![(Action::end(), Proc::Var(x.clone()))]),
    }
}

#[derive(Clone, Copy, PartialEq, PartialOrd, Debug)]
enum Phase {
    Sleep,
    Sens,
    Comm,
    Act,
}

fn check_phase(p: &Proc, at: Phase) -> Result<(), CalcError> {
    let too_late = |what: &str, need: Phase| {
        Err(CalcError::Phase(format!("{what} cannot follow the {at:?} phase (needs {need:?})")))
    };
    match p {
        Proc::Var(x) => Err(CalcError::Phase(format!(
            "variable {x} may only appear after end"
        ))),
        Proc::Tick(w) => {
            if at > Phase::Sleep {
                return too_late("tick", Phase::Sleep);
            }
            check_phase(w, Phase::Sleep)
        }
        Proc::SensTimeout { branches, timeout } => {
            if at > Phase::Sens {
                return too_late("sensing", Phase::Sens);
            }
            let mut seen = BTreeSet::new();
            for (g, b) in branches {
                if g.kind != ActionKind::SensorRead {
                    return Err(CalcError::Phase(format!("sensing guard {g} is not a sensor")));
                }
                if !seen.insert(g.clone()) {
                    return Err(CalcError::DuplicateGuard(g.to_string()));
                }
                check_phase(b, Phase::Sens)?;
            }
            check_phase(timeout, Phase::Sens)
        }
        Proc::ChanInTimeout { branches, timeout } => {
            if at > Phase::Comm {
                return too_late("channel input", Phase::Comm);
            }
            for (g, b) in branches {
                if g.kind != ActionKind::ChanRecv {
                    return Err(CalcError::Phase(format!("input guard {g} is not a reception")));
                }
                check_phase(b, Phase::Comm)?;
            }
            check_phase(timeout, Phase::Comm)
        }
        Proc::ChanOutTimeout { channel, then, timeout } => {
            if at > Phase::Comm {
                return too_late("channel output", Phase::Comm);
            }
            if channel.kind != ActionKind::ChanSend {
                return Err(CalcError::Phase(format!("output {channel} is not a transmission")));
            }
            check_phase(then, Phase::Comm)?;
            check_phase(timeout, Phase::Comm)
        }
        Proc::ActOut { actuator, then } => {
            if actuator.kind != ActionKind::ActuatorCmd {
                return Err(CalcError::Phase(format!("command {actuator} is not an actuator")));
            }
            check_phase(then, Phase::Act)
        }
        Proc::EndThen(_) => Ok(()),
    }
}

fn collect_alphabet(p: &Proc, out: &mut BTreeSet<Action>) {
    out.insert(Action::tick());
    out.insert(Action::end());
    match p {
        Proc::Var(_) | Proc::EndThen(_) => {}
        Proc::Tick(w) => collect_alphabet(w, out),
        Proc::SensTimeout { branches, timeout } | Proc::ChanInTimeout { branches, timeout } => {
            for (g, b) in branches {
                out.insert(g.clone());
                collect_alphabet(b, out);
            }
            collect_alphabet(timeout, out);
        }
        Proc::ChanOutTimeout { channel, then, timeout } => {
            out.insert(channel.clone());
            collect_alphabet(then, out);
            collect_alphabet(timeout, out);
        }
        Proc::ActOut { actuator, then } => {
            out.insert(actuator.clone());
            collect_alphabet(then, out);
        }
    }
}

/// Longest action count on any syntactic path to the end of the cycle,
/// counting ticks and end. Variables end a path (raw-mode bodies may jump
/// mid-cycle; a cycle boundary contributes nothing further).
fn longest_path(p: &Proc) -> usize {
    match p {
        Proc::Var(_) => 0,
        Proc::Tick(w) => 1 + longest_path(w),
        Proc::SensTimeout { branches, timeout } | Proc::ChanInTimeout { branches, timeout } => {
            let b = branches.iter().map(|(_, p)| 1 + longest_path(p)).max().unwrap_or(0);
            b.max(1 + longest_path(timeout))
        }
        Proc::ChanOutTimeout { then, timeout, .. } => {
            (1 + longest_path(then)).max(1 + longest_path(timeout))
        }
        Proc::ActOut { then, .. } => 1 + longest_path(then),
        Proc::EndThen(_) => 1,
    }
}

fn validate_common(p: &Proc, defs: &Defs, phased: bool) -> Result<Report, CalcError> {
    let mut time_guarded = true;
    let mut maxa = 0;
    let mut alphabet = BTreeSet::new();
    for (name, body) in &defs.0 {
        match body {
            Proc::Tick(w) => {
                if phased {
                    check_phase(w, Phase::Sleep)?;
                }
            }
            _ => {
                time_guarded = false;
                let _ = name;
            }
        }
        maxa = maxa.max(longest_path(body));
        collect_alphabet(body, &mut alphabet);
        check_closed(body, defs)?;
    }
    maxa = maxa.max(longest_path(p));
    collect_alphabet(p, &mut alphabet);
    check_closed(p, defs)?;
    Ok(Report { time_guarded, maxa, alphabet })
}

fn check_closed(p: &Proc, defs: &Defs) -> Result<(), CalcError> {
    match p {
        Proc::Var(x) | Proc::EndThen(x) => {
            if defs.0.contains_key(x) {
                Ok(())
            } else {
                Err(CalcError::Unresolved(x.clone()))
            }
        }
        Proc::Tick(w) => check_closed(w, defs),
        Proc::SensTimeout { branches, timeout } | Proc::ChanInTimeout { branches, timeout } => {
            for (_, b) in branches {
                check_closed(b, defs)?;
            }
            check_closed(timeout, defs)
        }
        Proc::ChanOutTimeout { then, timeout, .. } => {
            check_closed(then, defs)?;
            check_closed(timeout, defs)
        }
        Proc::ActOut { then, .. } => check_closed(then, defs),
    }
}

/// Full validation with phase discipline.
pub fn validate(p: &Proc, defs: &Defs) -> Result<Report, CalcError> {
    validate_common(p, defs, true)
}

/// Relaxed validation for compromised controllers: phase checks are lifted,
/// time-guardedness and closure still hold.
pub fn validate_raw(p: &Proc, defs: &Defs) -> Result<Report, CalcError> {
    validate_common(p, defs, false)
}

impl fmt::Display for Proc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Proc::Var(x) => write!(f, "{x}"),
            Proc::Tick(w) => write!(f, "tick . {w}"),
            Proc::SensTimeout { branches, timeout } => {
                write!(f, "sens{{ ")?;
                for (i, (g, b)) in branches.iter().enumerate() {
                    if i > 0 {
                        write!(f, "; ")?;
                    }
                    write!(f, "{} -> {b}", g.name)?;
                }
                write!(f, " }} else {timeout}")
            }
            Proc::ChanInTimeout { branches, timeout } => {
                write!(f, "in{{ ")?;
                for (i, (g, b)) in branches.iter().enumerate() {
                    if i > 0 {
                        write!(f, "; ")?;
                    }
                    write!(f, "{g} -> {b}")?;
                }
                write!(f, " }} else {timeout}")
            }
            Proc::ChanOutTimeout { channel, then, timeout } => {
                write!(f, "out {channel} . ({then}) else ({timeout})")
            }
            Proc::ActOut { actuator, then } => write!(f, "act {actuator} . {then}"),
            Proc::EndThen(x) => write!(f, "end . {x}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::parser::parse_controller;

    fn act(s: &str) -> Action {
        Action::parse(s).unwrap()
    }

    #[test]
    fn sleep_rule() {
        let defs = Defs::default();
        let w = Proc::Tick(Box::new(Proc::EndThen("X".into())));
        let steps = ctrl_steps(&w, &defs).unwrap();
        assert_eq!(steps, vec![(Action::tick(), Proc::EndThen("X".into()))]);
    }

    #[test]
    fn sensing_offers_branches_and_timeout() {
        let defs = Defs::default();
        let s = Proc::SensTimeout {
            branches: vec![
                (act("s:l3"), Proc::EndThen("X".into())),
                (act("s:h3"), Proc::EndThen("X".into())),
            ],
            timeout: Box::new(Proc::EndThen("X".into())),
        };
        let steps = ctrl_steps(&s, &defs).unwrap();
        assert_eq!(steps.len(), 3);
        assert_eq!(steps[0].0, act("s:l3"));
        assert_eq!(steps[1].0, act("s:h3"));
        assert_eq!(steps[2].0, Action::tick());
    }

    #[test]
    fn end_rule_restarts_cycle() {
        let mut defs = Defs::default();
        defs.0.insert("X".into(), Proc::Tick(Box::new(Proc::EndThen("X".into()))));
        let steps = ctrl_steps(&Proc::EndThen("X".into()), &defs).unwrap();
        assert_eq!(steps, vec![(Action::end(), Proc::Var("X".into()))]);
        let again = ctrl_steps(&Proc::Var("X".into()), &defs).unwrap();
        assert_eq!(again[0].0, Action::tick());
    }

    #[test]
    fn validate_tick_end_cycle() {
        let (p, defs) = parse_controller("X = tick . end . X").unwrap();
        let r = validate(&p, &defs).unwrap();
        assert!(r.time_guarded);
        assert_eq!(r.maxa, 2);
        assert!(r.alphabet.contains(&Action::tick()));
        assert!(r.alphabet.contains(&Action::end()));
    }

    #[test]
    fn unguarded_equation_flagged() {
        let mut defs = Defs::default();
        defs.0.insert("X".into(), Proc::EndThen("X".into()));
        let r = validate(&Proc::Var("X".into()), &defs).unwrap();
        assert!(!r.time_guarded);
    }

    #[test]
    fn parse_sensing_example() {
        let (_, defs) =
            parse_controller("X = tick . sens{ l3 -> act a:off3 . end . X } else end . X").unwrap();
        let Proc::Tick(w) = &defs.0["X"] else { panic!() };
        let Proc::SensTimeout { branches, timeout } = &**w else { panic!() };
        assert_eq!(branches.len(), 1);
        assert_eq!(branches[0].0, act("s:l3"));
        assert_eq!(**timeout, Proc::EndThen("X".into()));
    }

    #[test]
    fn actuation_before_sensing_is_a_phase_error() {
        let err =
            parse_controller("X = tick . act a:y . sens{ l3 -> end . X } else end . X").unwrap_err();
        assert!(err.to_string().contains("phase"), "{err}");
    }

    #[test]
    fn zeno_freedom_and_cycle_bound() {
        let text = "X = tick . sens{ l1 -> out c!req . in{ c?ack -> act a:on1 . end . X } else end . X else end . X } else end . X";
        let (p, defs) = parse_controller(text).unwrap();
        let r = validate(&p, &defs).unwrap();
        assert!(r.time_guarded);
        // Explore all paths of length maxa+1: each contains a tick, and every
        // complete cycle emits end within maxa actions.
        let mut frontier = vec![(p.clone(), 0usize, false, false)];
        for _ in 0..=r.maxa {
            let mut next = Vec::new();
            for (proc, since_tick, _, _) in frontier {
                let steps = ctrl_steps(&proc, &defs).unwrap();
                assert!(!steps.is_empty(), "controller deadlocked");
                for (a, q) in steps {
                    let tick = a.is_tick();
                    let ended = a.is_end();
                    assert!(
                        since_tick < r.maxa || tick || ended,
                        "ran {since_tick} actions without tick or end"
                    );
                    next.push((q, if tick { 0 } else { since_tick + 1 }, tick, ended));
                }
            }
            frontier = next;
        }
    }
}

pub mod parser;
