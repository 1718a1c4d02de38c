//! Execution of monitored controllers and field networks.
//!
//! A node couples an edit automaton with a controller: the automaton allows,
//! suppresses (emitting tau) or inserts actions around the controller's
//! steps. Nodes compose in parallel with handshake channel synchronization
//! and a global clock under maximal progress: time advances only when every
//! node is ready to tick and no internal step is possible anywhere.

use std::collections::{HashMap, HashSet};
use std::rc::Rc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::automata::{EditAutomaton, EditLabel, StateBody, StateId};
use crate::calculus::{ctrl_steps, CalcError, Defs, Proc};
use crate::trace::{Action, ActionKind, Trace};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RuntimeError {
    #[error(transparent)]
    Calc(#[from] CalcError),
    #[error("node index {0} out of range")]
    BadNode(usize),
    #[error("automaton alphabet is missing controller actions: {0:?}")]
    AlphabetTooSmall(Vec<String>),
}

/// A controller wrapped by an enforcement monitor. `monitor == None` runs
/// the controller plain.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Monitored {
    pub automaton: Option<Rc<EditAutomaton>>,
    pub state: StateId,
    pub controller: Proc,
    pub defs: Rc<Defs>,
}

impl Monitored {
    pub fn new(
        automaton: EditAutomaton,
        controller: Proc,
        defs: Defs,
    ) -> Result<Monitored, RuntimeError> {
        let report = crate::calculus::validate_raw(&controller, &defs)?;
        let missing: Vec<String> = report
            .alphabet
            .iter()
            .filter(|a| !automaton.alphabet.contains(*a))
            .map(|a| a.to_string())
            .collect();
        if !missing.is_empty() {
            return Err(RuntimeError::AlphabetTooSmall(missing));
        }
        let state = automaton.initial;
        Ok(Monitored {
            automaton: Some(Rc::new(automaton)),
            state,
            controller,
            defs: Rc::new(defs),
        })
    }

    pub fn plain(controller: Proc, defs: Defs) -> Monitored {
        Monitored { automaton: None, state: 0, controller, defs: Rc::new(defs) }
    }
}

/// Which rule produced a step.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum StepRule {
    Allow,
    Suppress,
    Insert,
    ChnSync,
    TimeSync,
    Plain,
}

impl StepRule {
    pub fn as_str(&self) -> &'static str {
        match self {
            StepRule::Allow => "allow",
            StepRule::Suppress => "suppress",
            StepRule::Insert => "insert",
            StepRule::ChnSync => "chnsync",
            StepRule::TimeSync => "timesync",
            StepRule::Plain => "plain",
        }
    }
}

/// One enforcement step of a single node.
#[derive(Clone, Debug)]
pub struct MStep {
    pub action: Action,
    pub rule: StepRule,
    pub inserted_for: Option<Action>,
    pub next: Monitored,
}

/// All enforcement steps of a monitored controller: allow where both sides
/// agree, suppress emitting tau, and insert (controller unchanged) where the
/// automaton offers an insertion on a controller action it cannot allow.
pub fn mstep(m: &Monitored) -> Result<Vec<MStep>, RuntimeError> {
    let ctrl = ctrl_steps(&m.controller, &m.defs)?;
    let Some(aut) = &m.automaton else {
        return Ok(ctrl
            .into_iter()
            .map(|(a, j)| MStep {
                action: a,
                rule: StepRule::Plain,
                inserted_for: None,
                next: Monitored { controller: j, ..m.clone() },
            })
            .collect());
    };
    let mut out = Vec::new();
    match aut.body(m.state).expect("valid state") {
        StateBody::Go => {
            for (a, j) in ctrl {
                out.push(MStep {
                    action: a,
                    rule: StepRule::Allow,
                    inserted_for: None,
                    next: Monitored { controller: j, ..m.clone() },
                });
            }
        }
        StateBody::Sum(arms) => {
            for (a, j) in &ctrl {
                for (l, t) in arms {
                    match l {
                        EditLabel::Allow(x) if x == a => out.push(MStep {
                            action: a.clone(),
                            rule: StepRule::Allow,
                            inserted_for: None,
                            next: Monitored {
                                state: *t,
                                controller: j.clone(),
                                ..m.clone()
                            },
                        }),
                        EditLabel::Suppress(x) if x == a => out.push(MStep {
                            action: Action::tau(),
                            rule: StepRule::Suppress,
                            inserted_for: Some(a.clone()),
                            next: Monitored {
                                state: *t,
                                controller: j.clone(),
                                ..m.clone()
                            },
                        }),
                        _ => {}
                    }
                }
            }
            // Insertions fire only when the automaton cannot allow the
            // controller's action; the controller stays put and re-offers it.
            for (a, _) in &ctrl {
                let allowed = arms.iter().any(|(l, _)| matches!(l, EditLabel::Allow(x) if x == a));
                if allowed {
                    continue;
                }
                for (l, t) in arms {
                    if let EditLabel::Insert { trigger, inserted } = l {
                        if trigger == a {
                            out.push(MStep {
                                action: inserted.clone(),
                                rule: StepRule::Insert,
                                inserted_for: Some(a.clone()),
                                next: Monitored { state: *t, ..m.clone() },
                            });
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// A parallel composition of monitored controllers under one clock.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Network {
    pub nodes: Vec<Monitored>,
    pub clock: usize,
}

impl Network {
    pub fn new(nodes: Vec<Monitored>) -> Network {
        Network { nodes, clock: 0 }
    }
}

/// One step of the whole network.
#[derive(Clone, Debug)]
pub struct NetStep {
    pub action: Action,
    pub rule: StepRule,
    /// Participating node indices: one for interleaved steps, two for a
    /// channel synchronization, all for a tick.
    pub nodes: Vec<usize>,
    pub inserted_for: Option<Action>,
    pub next: Network,
}

fn with_node(n: &Network, i: usize, m: Monitored) -> Network {
    let mut next = n.clone();
    next.nodes[i] = m;
    next
}

/// All network steps: interleaved node moves, channel synchronizations
/// (tau), and the global tick, which is offered only when every node can
/// tick and no tau step exists anywhere.
pub fn net_steps(n: &Network) -> Result<Vec<NetStep>, RuntimeError> {
    net_steps_where(n, &|_, _| true)
}

/// Network steps with a per-node admissibility filter applied before
/// composition. The plant scenario uses this to admit only the sensor
/// reading that is actually available in the current time slot; maximal
/// progress and the global tick are computed from the filtered moves.
pub fn net_steps_where(
    n: &Network,
    admit: &dyn Fn(usize, &MStep) -> bool,
) -> Result<Vec<NetStep>, RuntimeError> {
    let per_node: Vec<Vec<MStep>> = n
        .nodes
        .iter()
        .enumerate()
        .map(|(i, m)| Ok(mstep(m)?.into_iter().filter(|s| admit(i, s)).collect()))
        .collect::<Result<_, RuntimeError>>()?;
    let mut out = Vec::new();
    // Channel synchronizations first: they are tau and preempt time.
    for i in 0..n.nodes.len() {
        for si in &per_node[i] {
            if si.action.kind != ActionKind::ChanSend {
                continue;
            }
            for j in 0..n.nodes.len() {
                if i == j {
                    continue;
                }
                for sj in &per_node[j] {
                    if sj.action.kind == ActionKind::ChanRecv && sj.action.name == si.action.name
                    {
                        let mut next = n.clone();
                        next.nodes[i] = si.next.clone();
                        next.nodes[j] = sj.next.clone();
                        out.push(NetStep {
                            action: Action::tau(),
                            rule: StepRule::ChnSync,
                            nodes: vec![i, j],
                            inserted_for: None,
                            next,
                        });
                    }
                }
            }
        }
    }
    // Interleaved node moves (ticks are reserved for the global clock).
    for (i, steps) in per_node.iter().enumerate() {
        for s in steps {
            if s.action.is_tick() {
                continue;
            }
            out.push(NetStep {
                action: s.action.clone(),
                rule: s.rule,
                nodes: vec![i],
                inserted_for: s.inserted_for.clone(),
                next: with_node(n, i, s.next.clone()),
            });
        }
    }
    // Maximal progress: tick only when no tau is possible anywhere.
    let tau_possible = out.iter().any(|s| s.action.is_tau());
    if !tau_possible {
        let ticks: Vec<Option<&MStep>> = per_node
            .iter()
            .map(|steps| steps.iter().find(|s| s.action.is_tick()))
            .collect();
        if ticks.iter().all(|t| t.is_some()) {
            let mut next = n.clone();
            for (i, t) in ticks.iter().enumerate() {
                next.nodes[i] = t.unwrap().next.clone();
            }
            next.clock += 1;
            out.push(NetStep {
                action: Action::tick(),
                rule: StepRule::TimeSync,
                nodes: (0..n.nodes.len()).collect(),
                inserted_for: None,
                next,
            });
        }
    }
    Ok(out)
}

/// True iff some tau step (suppression or synchronization) is enabled.
pub fn tau_enabled(n: &Network) -> Result<bool, RuntimeError> {
    Ok(net_steps(n)?.iter().any(|s| s.action.is_tau()))
}

/// How a run resolves nondeterminism.
#[derive(Clone, Copy, Debug)]
pub struct SchedulerPolicy {
    pub seed: u64,
    pub tie_break: TieBreak,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum TieBreak {
    /// tau steps first, then node order, then declaration order.
    FirstDeclared,
    /// Uniform over the enabled steps, seeded.
    SeededRandom,
}

impl Default for SchedulerPolicy {
    fn default() -> Self {
        SchedulerPolicy { seed: 0, tie_break: TieBreak::FirstDeclared }
    }
}

/// One line of a run log.
#[derive(Clone, Debug)]
pub struct LogEntry {
    pub step: usize,
    pub clock: usize,
    pub nodes: Vec<usize>,
    pub rule: StepRule,
    pub action: Action,
    pub inserted_for: Option<Action>,
}

#[derive(Clone, Debug, Default)]
pub struct TraceLog {
    pub entries: Vec<LogEntry>,
    pub node_count: usize,
}

impl TraceLog {
    pub fn global_trace(&self) -> Trace {
        Trace(self.entries.iter().map(|e| e.action.clone()).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,clock_tick,node,rule,action,inserted_for\n");
        for e in &self.entries {
            let node = if e.rule == StepRule::TimeSync {
                "all".to_string()
            } else {
                e.nodes.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("+")
            };
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                e.step,
                e.clock,
                node,
                e.rule.as_str(),
                e.action,
                e.inserted_for.as_ref().map(|a| a.to_string()).unwrap_or_default()
            ));
        }
        out
    }
}

/// Per-node emitted actions in global order; synchronizations and ticks
/// belong to every participant.
pub fn project(log: &TraceLog, node: usize) -> Result<Trace, RuntimeError> {
    if node >= log.node_count {
        return Err(RuntimeError::BadNode(node));
    }
    Ok(Trace(
        log.entries
            .iter()
            .filter(|e| e.nodes.contains(&node))
            .map(|e| e.action.clone())
            .collect(),
    ))
}

/// Result of a finite run. A stuck network is reported, not thrown.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub log: TraceLog,
    pub network: Network,
    pub stuck_at: Option<usize>,
    /// Ticks taken while a tau was enabled; always 0 by construction, kept
    /// as an explicit check of the maximal-progress premise.
    pub tick_violations: usize,
}

/// Runs the network for `horizon` clock ticks under a deterministic policy.
pub fn run(
    n: &Network,
    policy: SchedulerPolicy,
    horizon: usize,
) -> Result<RunOutcome, RuntimeError> {
    let mut rng = ChaCha8Rng::seed_from_u64(policy.seed);
    let mut net = n.clone();
    let mut log = TraceLog { entries: Vec::new(), node_count: n.nodes.len() };
    let mut tick_violations = 0;
    let mut step = 0;
    loop {
        let mut steps = net_steps(&net)?;
        let tau_present = steps.iter().any(|s| s.action.is_tau());
        if net.clock >= horizon {
            steps.retain(|s| s.rule != StepRule::TimeSync);
            if steps.is_empty() {
                return Ok(RunOutcome { log, network: net, stuck_at: None, tick_violations });
            }
        }
        if steps.is_empty() {
            let stuck_at = Some(net.clock);
            return Ok(RunOutcome { log, network: net, stuck_at, tick_violations });
        }
        let chosen = match policy.tie_break {
            TieBreak::FirstDeclared => {
                // net_steps already lists tau (sync) steps first; prefer any
                // tau, then the first listed step.
                let tau = steps.iter().position(|s| s.action.is_tau());
                steps.swap_remove(tau.unwrap_or(0))
            }
            TieBreak::SeededRandom => {
                let i = rng.gen_range(0..steps.len());
                steps.swap_remove(i)
            }
        };
        if chosen.rule == StepRule::TimeSync && tau_present {
            tick_violations += 1;
        }
        log.entries.push(LogEntry {
            step,
            clock: net.clock,
            nodes: chosen.nodes.clone(),
            rule: chosen.rule,
            action: chosen.action.clone(),
            inserted_for: chosen.inserted_for.clone(),
        });
        net = chosen.next;
        step += 1;
    }
}

/// Exhaustive bounded exploration of a network.
#[derive(Clone, Debug, Default)]
pub struct Exploration {
    /// Every action sequence of exactly the exploration depth, plus every
    /// shorter sequence ending in a stuck state.
    pub traces: Vec<Trace>,
    pub stuck_states: usize,
    pub distinct_states: usize,
}

/// Explores all interleavings up to `depth` network steps.
pub fn explore(n: &Network, depth: usize) -> Result<Exploration, RuntimeError> {
    let mut seen: HashSet<Network> = HashSet::new();
    let mut out = Exploration::default();
    let mut frontier: Vec<(Network, Vec<Action>)> = vec![(n.clone(), Vec::new())];
    seen.insert(n.clone());
    // Trace sets can repeat across states; dedup sequences at the end.
    let mut traces: HashSet<Vec<Action>> = HashSet::new();
    let mut stuck: HashSet<Network> = HashSet::new();
    for _ in 0..depth {
        let mut next = Vec::new();
        for (net, prefix) in frontier {
            let steps = net_steps(&net)?;
            if steps.is_empty() {
                stuck.insert(net);
                traces.insert(prefix.clone());
                continue;
            }
            for s in steps {
                let mut p = prefix.clone();
                p.push(s.action.clone());
                if seen.insert(s.next.clone()) {
                    out.distinct_states += 1;
                }
                next.push((s.next, p));
            }
        }
        frontier = next;
    }
    for (net, prefix) in frontier {
        if net_steps(&net)?.is_empty() {
            stuck.insert(net);
        }
        traces.insert(prefix);
    }
    out.stuck_states = stuck.len();
    out.traces = traces.into_iter().map(Trace).collect();
    Ok(out)
}

/// All emitted traces (including tau) of a single monitored controller up to
/// the given length, as a deduplicated prefix-closed set.
pub fn node_traces(m: &Monitored, maxlen: usize) -> Result<Vec<Trace>, RuntimeError> {
    let mut result: HashSet<Vec<Action>> = HashSet::new();
    let mut frontier: HashMap<Monitored, HashSet<Vec<Action>>> = HashMap::new();
    frontier.insert(m.clone(), [Vec::new()].into());
    result.insert(Vec::new());
    for _ in 0..maxlen {
        let mut next: HashMap<Monitored, HashSet<Vec<Action>>> = HashMap::new();
        for (state, prefixes) in frontier {
            for s in mstep(&state)? {
                for p in &prefixes {
                    let mut q = p.clone();
                    q.push(s.action.clone());
                    result.insert(q.clone());
                    next.entry(s.next.clone()).or_default().insert(q);
                }
            }
        }
        frontier = next;
    }
    Ok(result.into_iter().map(Trace).collect())
}
