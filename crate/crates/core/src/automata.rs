//! Finite-state edit automata: representation, single-step semantics,
//! suppress-all detection, and the cross product with its liveness fixpoint.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use serde_json::{json, Value};
use thiserror::Error;

use crate::prop::PropNfa;
use crate::trace::Action;

pub type StateId = usize;

/// An edit step: pass the action through, silently drop it, or emit
/// `inserted` while the system is still offering `trigger`.
#[derive(Clone, PartialEq, Eq, Hash, Debug, PartialOrd, Ord)]
pub enum EditLabel {
    Allow(Action),
    Suppress(Action),
    Insert { trigger: Action, inserted: Action },
}

impl EditLabel {
    pub fn render(&self) -> String {
        match self {
            EditLabel::Allow(a) => a.to_string(),
            EditLabel::Suppress(a) => format!("-{a}"),
            EditLabel::Insert { trigger, inserted } => format!("{trigger}>{inserted}"),
        }
    }
}

/// A state is either the universal acceptor or a sum of edit-prefixed
/// continuations. Arm order is the declaration order used for runtime
/// tie-breaking.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub enum StateBody {
    Go,
    Sum(Vec<(EditLabel, StateId)>),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AutomatonError {
    #[error("dangling state id {0}")]
    DanglingState(StateId),
    #[error("label {0} not enabled in state {1}")]
    NotEnabled(String, StateId),
    #[error("malformed automaton JSON: {0}")]
    BadJson(String),
}

/// A finite edit automaton over a fixed alphabet of observable actions.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct EditAutomaton {
    pub initial: StateId,
    pub states: Vec<StateBody>,
    /// The ambient alphabet, used by `go` states and suppress-all checks.
    pub alphabet: BTreeSet<Action>,
}

impl EditAutomaton {
    /// The single-state universal acceptor.
    pub fn go(alphabet: BTreeSet<Action>) -> EditAutomaton {
        EditAutomaton { initial: 0, states: vec![StateBody::Go], alphabet }
    }

    pub fn body(&self, s: StateId) -> Result<&StateBody, AutomatonError> {
        self.states.get(s).ok_or(AutomatonError::DanglingState(s))
    }

    /// Labels offered in state `s`; a `go` state allows every alphabet
    /// action.
    pub fn enabled(&self, s: StateId) -> Result<Vec<EditLabel>, AutomatonError> {
        Ok(match self.body(s)? {
            StateBody::Go => {
                self.alphabet.iter().map(|a| EditLabel::Allow(a.clone())).collect()
            }
            StateBody::Sum(arms) => arms.iter().map(|(l, _)| l.clone()).collect(),
        })
    }

    /// Target of the chosen summand; `go` steps to itself.
    pub fn step(&self, s: StateId, label: &EditLabel) -> Result<StateId, AutomatonError> {
        match self.body(s)? {
            StateBody::Go => match label {
                EditLabel::Allow(a) if self.alphabet.contains(a) => Ok(s),
                _ => Err(AutomatonError::NotEnabled(label.render(), s)),
            },
            StateBody::Sum(arms) => arms
                .iter()
                .find(|(l, _)| l == label)
                .map(|(_, t)| *t)
                .ok_or_else(|| AutomatonError::NotEnabled(label.render(), s)),
        }
    }

    /// True iff the state is exactly the self-looping suppression sum over
    /// the alphabet minus tick and end.
    pub fn is_suppress_all(&self, s: StateId) -> bool {
        let StateBody::Sum(arms) = &self.states[s] else {
            return false;
        };
        let expect: BTreeSet<Action> = self
            .alphabet
            .iter()
            .filter(|a| !a.is_tick() && !a.is_end())
            .cloned()
            .collect();
        let mut seen = BTreeSet::new();
        for (l, t) in arms {
            match l {
                EditLabel::Suppress(a) if *t == s => {
                    seen.insert(a.clone());
                }
                _ => return false,
            }
        }
        seen == expect && arms.len() == expect.len()
    }

    pub fn reachable_state_count(&self) -> usize {
        self.reachable().len()
    }

    fn reachable(&self) -> BTreeSet<StateId> {
        let mut seen = BTreeSet::from([self.initial]);
        let mut queue = VecDeque::from([self.initial]);
        while let Some(s) = queue.pop_front() {
            if let StateBody::Sum(arms) = &self.states[s] {
                for (_, t) in arms {
                    if seen.insert(*t) {
                        queue.push_back(*t);
                    }
                }
            }
        }
        seen
    }

    /// Allow arms per state: `go` allows every alphabet action to itself.
    fn allow_arms(&self, s: StateId) -> Vec<(Action, StateId)> {
        match &self.states[s] {
            StateBody::Go => self.alphabet.iter().map(|a| (a.clone(), s)).collect(),
            StateBody::Sum(arms) => arms
                .iter()
                .filter_map(|(l, t)| match l {
                    EditLabel::Allow(a) => Some((a.clone(), *t)),
                    _ => None,
                })
                .collect(),
        }
    }

    /// NFA of the emitted-trace language over allowed actions. Every state
    /// accepts: the allowed language is prefix-closed.
    pub fn allowed_nfa(&self) -> PropNfa {
        let edges = (0..self.states.len())
            .map(|s| self.allow_arms(s))
            .collect::<Vec<_>>();
        PropNfa {
            initial: self.initial,
            accepting: vec![true; self.states.len()],
            edges,
        }
    }

    /// Cross product per the pairing of equal allowed actions, with a
    /// greatest-liveness fixpoint: a product state is dead iff every matched
    /// successor pair is dead, computed as the least fixpoint of deadness so
    /// matched cycles stay live. Dead states collapse to one suppress-all
    /// state.
    pub fn cross_product(&self, other: &EditAutomaton) -> EditAutomaton {
        let alphabet: BTreeSet<Action> =
            self.alphabet.union(&other.alphabet).cloned().collect();
        let suppressible: Vec<Action> = alphabet
            .iter()
            .filter(|a| !a.is_tick() && !a.is_end())
            .cloned()
            .collect();

        // Reachable matched-pair graph.
        let mut nodes: Vec<(StateId, StateId)> = Vec::new();
        let mut index: HashMap<(StateId, StateId), usize> = HashMap::new();
        let mut succs: Vec<Vec<(Action, usize)>> = Vec::new();
        let root = (self.initial, other.initial);
        index.insert(root, 0);
        nodes.push(root);
        succs.push(Vec::new());
        let mut queue = VecDeque::from([root]);
        while let Some((s1, s2)) = queue.pop_front() {
            let id = index[&(s1, s2)];
            let mut out = Vec::new();
            for (a1, t1) in self.allow_arms(s1) {
                for (a2, t2) in other.allow_arms(s2) {
                    if a1 == a2 {
                        let key = (t1, t2);
                        let tid = *index.entry(key).or_insert_with(|| {
                            nodes.push(key);
                            succs.push(Vec::new());
                            queue.push_back(key);
                            nodes.len() - 1
                        });
                        out.push((a1.clone(), tid));
                    }
                }
            }
            succs[id] = out;
        }

        // Least fixpoint of deadness.
        let n = nodes.len();
        let mut dead = vec![false; n];
        loop {
            let mut changed = false;
            for i in 0..n {
                if !dead[i] && succs[i].iter().all(|(_, t)| dead[*t]) {
                    dead[i] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }

        // Emit. All dead nodes share one suppress-all sink.
        let any_dead = dead.iter().any(|&d| d);
        let live_ids: Vec<Option<usize>> = {
            let mut next = 0;
            dead.iter()
                .map(|&d| {
                    if d {
                        None
                    } else {
                        next += 1;
                        Some(next - 1)
                    }
                })
                .collect()
        };
        let live_count = live_ids.iter().flatten().count();
        let sink = live_count;
        let mut states = vec![StateBody::Go; live_count + usize::from(any_dead)];
        if any_dead {
            states[sink] = StateBody::Sum(
                suppressible
                    .iter()
                    .map(|a| (EditLabel::Suppress(a.clone()), sink))
                    .collect(),
            );
        }
        for i in 0..n {
            let Some(me) = live_ids[i] else { continue };
            let mut arms: Vec<(EditLabel, StateId)> = Vec::new();
            let mut matched: BTreeSet<Action> = BTreeSet::new();
            for (a, t) in &succs[i] {
                if dead[*t] {
                    continue;
                }
                let target = live_ids[*t].unwrap();
                arms.push((EditLabel::Allow(a.clone()), target));
                if !a.is_end() {
                    arms.push((
                        EditLabel::Insert { trigger: Action::end(), inserted: a.clone() },
                        target,
                    ));
                }
                matched.insert(a.clone());
            }
            for a in &suppressible {
                if !matched.contains(a) {
                    arms.push((EditLabel::Suppress(a.clone()), me));
                }
            }
            states[me] = StateBody::Sum(arms);
        }
        let initial = live_ids[0].unwrap_or(sink);
        EditAutomaton { initial, states, alphabet }
    }

    /// Canonical copy: states renumbered in BFS order from the initial
    /// state, arms sorted Allow < Suppress < Insert then by action.
    pub fn sorted(&self) -> EditAutomaton {
        let mut order: Vec<StateId> = Vec::new();
        let mut pos: HashMap<StateId, usize> = HashMap::new();
        let mut queue = VecDeque::from([self.initial]);
        pos.insert(self.initial, 0);
        order.push(self.initial);
        while let Some(s) = queue.pop_front() {
            if let StateBody::Sum(arms) = &self.states[s] {
                for (_, t) in arms {
                    if !pos.contains_key(t) {
                        pos.insert(*t, order.len());
                        order.push(*t);
                        queue.push_back(*t);
                    }
                }
            }
        }
        let rank = |l: &EditLabel| match l {
            EditLabel::Allow(a) => (0, a.clone(), None),
            EditLabel::Suppress(a) => (1, a.clone(), None),
            EditLabel::Insert { trigger, inserted } => {
                (2, trigger.clone(), Some(inserted.clone()))
            }
        };
        let states = order
            .iter()
            .map(|&s| match &self.states[s] {
                StateBody::Go => StateBody::Go,
                StateBody::Sum(arms) => {
                    let mut arms: Vec<(EditLabel, StateId)> =
                        arms.iter().map(|(l, t)| (l.clone(), pos[t])).collect();
                    arms.sort_by(|(l1, t1), (l2, t2)| {
                        rank(l1).cmp(&rank(l2)).then(t1.cmp(t2))
                    });
                    StateBody::Sum(arms)
                }
            })
            .collect();
        EditAutomaton { initial: 0, states, alphabet: self.alphabet.clone() }
    }

    pub fn to_json(&self) -> Value {
        let a = self.sorted();
        let mut states = serde_json::Map::new();
        for (id, body) in a.states.iter().enumerate() {
            let v = match body {
                StateBody::Go => json!({"kind": "go"}),
                StateBody::Sum(arms) => {
                    let arms: Vec<Value> = arms
                        .iter()
                        .map(|(l, t)| {
                            let label = match l {
                                EditLabel::Allow(act) => {
                                    json!({"op": "allow", "action": act.to_string()})
                                }
                                EditLabel::Suppress(act) => {
                                    json!({"op": "suppress", "action": act.to_string()})
                                }
                                EditLabel::Insert { trigger, inserted } => json!({
                                    "op": "insert",
                                    "action": trigger.to_string(),
                                    "inserted": inserted.to_string(),
                                }),
                            };
                            json!({"label": label, "to": t})
                        })
                        .collect();
                    json!({"kind": "sum", "arms": arms})
                }
            };
            states.insert(id.to_string(), v);
        }
        json!({"initial": a.initial, "states": states})
    }

    pub fn export_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_json()).expect("json")
    }

    pub fn export_dot(&self) -> String {
        let a = self.sorted();
        let mut out = String::from("digraph edit_automaton {\n");
        out.push_str(&format!("  init [shape=point];\n  init -> s{};\n", a.initial));
        for (id, body) in a.states.iter().enumerate() {
            match body {
                StateBody::Go => {
                    out.push_str(&format!("  s{id} [label=\"go\", shape=doublecircle];\n"));
                }
                StateBody::Sum(arms) => {
                    out.push_str(&format!("  s{id} [label=\"{id}\", shape=circle];\n"));
                    for (l, t) in arms {
                        out.push_str(&format!(
                            "  s{id} -> s{t} [label=\"{}\"];\n",
                            l.render()
                        ));
                    }
                }
            }
        }
        out.push_str("}\n");
        out
    }

    /// Inverse of the JSON export. The alphabet is supplied by the caller
    /// since the schema does not carry it.
    pub fn import_json(
        text: &str,
        alphabet: BTreeSet<Action>,
    ) -> Result<EditAutomaton, AutomatonError> {
        let v: Value =
            serde_json::from_str(text).map_err(|e| AutomatonError::BadJson(e.to_string()))?;
        let bad = |m: &str| AutomatonError::BadJson(m.to_string());
        let initial = v
            .get("initial")
            .and_then(Value::as_u64)
            .ok_or_else(|| bad("missing initial"))? as usize;
        let states_obj = v
            .get("states")
            .and_then(Value::as_object)
            .ok_or_else(|| bad("missing states"))?;
        let mut by_id: BTreeMap<usize, StateBody> = BTreeMap::new();
        for (k, sv) in states_obj {
            let id: usize = k.parse().map_err(|_| bad("non-numeric state id"))?;
            let kind = sv
                .get("kind")
                .and_then(Value::as_str)
                .ok_or_else(|| bad("missing state kind"))?;
            let body = match kind {
                "go" => StateBody::Go,
                "sum" => {
                    let arms = sv
                        .get("arms")
                        .and_then(Value::as_array)
                        .ok_or_else(|| bad("missing arms"))?;
                    let mut parsed = Vec::new();
                    for arm in arms {
                        let to = arm
                            .get("to")
                            .and_then(Value::as_u64)
                            .ok_or_else(|| bad("missing arm target"))?
                            as usize;
                        let label = arm.get("label").ok_or_else(|| bad("missing label"))?;
                        let op = label
                            .get("op")
                            .and_then(Value::as_str)
                            .ok_or_else(|| bad("missing op"))?;
                        let action = label
                            .get("action")
                            .and_then(Value::as_str)
                            .ok_or_else(|| bad("missing action"))?;
                        let action = Action::parse(action).map_err(AutomatonError::BadJson)?;
                        let l = match op {
                            "allow" => EditLabel::Allow(action),
                            "suppress" => EditLabel::Suppress(action),
                            "insert" => {
                                let inserted = label
                                    .get("inserted")
                                    .and_then(Value::as_str)
                                    .ok_or_else(|| bad("insert without inserted"))?;
                                EditLabel::Insert {
                                    trigger: action,
                                    inserted: Action::parse(inserted)
                                        .map_err(AutomatonError::BadJson)?,
                                }
                            }
                            _ => return Err(bad("unknown op")),
                        };
                        parsed.push((l, to));
                    }
                    StateBody::Sum(parsed)
                }
                _ => return Err(bad("unknown state kind")),
            };
            by_id.insert(id, body);
        }
        let n = by_id.len();
        if by_id.keys().copied().ne(0..n) {
            return Err(bad("state ids must be contiguous from 0"));
        }
        let states: Vec<StateBody> = by_id.into_values().collect();
        for (s, body) in states.iter().enumerate() {
            if let StateBody::Sum(arms) = body {
                for (_, t) in arms {
                    if *t >= n {
                        return Err(AutomatonError::DanglingState(*t));
                    }
                }
            }
            let _ = s;
        }
        if initial >= n {
            return Err(AutomatonError::DanglingState(initial));
        }
        Ok(EditAutomaton { initial, states, alphabet })
    }
}
