//! Actions, traces, and the basic trace algebra shared by every module.

use std::fmt;

use serde::{Deserialize, Serialize};

/// What kind of observable step an action is.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
pub enum ActionKind {
    SensorRead,
    ActuatorCmd,
    ChanSend,
    ChanRecv,
    Tick,
    End,
    Tau,
}

/// A single step of a controller: sensor read `s:x`, actuator command `a:x`,
/// channel output `c!x`, channel input `c?x`, `tick`, `end`, or internal `tau`.
///
/// Tick, End and Tau carry no name; the other kinds carry a nonempty name.
/// Channel send and receive of the same channel name are distinct actions.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
pub struct Action {
    pub kind: ActionKind,
    pub name: String,
}

impl Action {
    pub fn sensor(name: &str) -> Self {
        Action { kind: ActionKind::SensorRead, name: name.to_string() }
    }
    pub fn actuator(name: &str) -> Self {
        Action { kind: ActionKind::ActuatorCmd, name: name.to_string() }
    }
    pub fn send(name: &str) -> Self {
        Action { kind: ActionKind::ChanSend, name: name.to_string() }
    }
    pub fn recv(name: &str) -> Self {
        Action { kind: ActionKind::ChanRecv, name: name.to_string() }
    }
    pub fn tick() -> Self {
        Action { kind: ActionKind::Tick, name: String::new() }
    }
    pub fn end() -> Self {
        Action { kind: ActionKind::End, name: String::new() }
    }
    pub fn tau() -> Self {
        Action { kind: ActionKind::Tau, name: String::new() }
    }

    pub fn is_tau(&self) -> bool {
        self.kind == ActionKind::Tau
    }
    pub fn is_tick(&self) -> bool {
        self.kind == ActionKind::Tick
    }
    pub fn is_end(&self) -> bool {
        self.kind == ActionKind::End
    }

    /// The matching handshake partner for a channel action, if any.
    pub fn dual(&self) -> Option<Action> {
        match self.kind {
            ActionKind::ChanSend => Some(Action::recv(&self.name)),
            ActionKind::ChanRecv => Some(Action::send(&self.name)),
            _ => None,
        }
    }

    /// Parses the text form `s:NAME | a:NAME | c!NAME | c?NAME | tick | end | tau`.
    pub fn parse(text: &str) -> Result<Action, String> {
        let text = text.trim();
        match text {
            "tick" => return Ok(Action::tick()),
            "end" => return Ok(Action::end()),
            "tau" => return Ok(Action::tau()),
            _ => {}
        }
        let (prefix, name) = if let Some(rest) = text.strip_prefix("s:") {
            (ActionKind::SensorRead, rest)
        } else if let Some(rest) = text.strip_prefix("a:") {
            (ActionKind::ActuatorCmd, rest)
        } else if let Some(rest) = text.strip_prefix("c!") {
            (ActionKind::ChanSend, rest)
        } else if let Some(rest) = text.strip_prefix("c?") {
            (ActionKind::ChanRecv, rest)
        } else {
            return Err(format!("unrecognized action `{text}`"));
        };
        if name.is_empty() || !name.chars().all(|c| c.is_alphanumeric() || c == '_') {
            return Err(format!("bad action name in `{text}`"));
        }
        Ok(Action { kind: prefix, name: name.to_string() })
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ActionKind::SensorRead => write!(f, "s:{}", self.name),
            ActionKind::ActuatorCmd => write!(f, "a:{}", self.name),
            ActionKind::ChanSend => write!(f, "c!{}", self.name),
            ActionKind::ChanRecv => write!(f, "c?{}", self.name),
            ActionKind::Tick => write!(f, "tick"),
            ActionKind::End => write!(f, "end"),
            ActionKind::Tau => write!(f, "tau"),
        }
    }
}

/// A finite, ordered sequence of actions.
#[derive(Clone, PartialEq, Eq, Hash, Debug, Default, Serialize, Deserialize)]
pub struct Trace(pub Vec<Action>);

impl Trace {
    pub fn new(actions: Vec<Action>) -> Self {
        Trace(actions)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Removes every tau, preserving order (the hat operator).
    pub fn erase_tau(&self) -> Trace {
        Trace(self.0.iter().filter(|a| !a.is_tau()).cloned().collect())
    }

    /// True iff `self` is a prefix of `other`.
    pub fn is_prefix(&self, other: &Trace) -> bool {
        self.len() <= other.len() && self.0.iter().zip(&other.0).all(|(a, b)| a == b)
    }

    pub fn concat(&self, other: &Trace) -> Trace {
        let mut v = self.0.clone();
        v.extend(other.0.iter().cloned());
        Trace(v)
    }

    /// Parses the whitespace-separated text form.
    pub fn parse(text: &str) -> Result<Trace, String> {
        text.split_whitespace().map(Action::parse).collect::<Result<Vec<_>, _>>().map(Trace)
    }
}

impl fmt::Display for Trace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for a in &self.0 {
            if !first {
                write!(f, " ")?;
            }
            write!(f, "{a}")?;
            first = false;
        }
        Ok(())
    }
}
