//! Compiles timed regular correctness properties into finite-state edit
//! automata and runs them as enforcement monitors around process-calculus
//! models of PLC controllers in a discrete-time network simulation.

pub mod trace;
pub mod prop;
pub mod combinators;
pub mod automata;
pub mod synthesis;
pub mod calculus;
pub mod runtime;
pub mod scenario;

pub use automata::{EditAutomaton, EditLabel, StateBody, StateId};
pub use prop::{Event, GlobalProp, LocalKind, LocalProp, PropNfa};
pub use synthesis::{check_derivative_bound, synthesize, SynthContext, SynthError};
pub use trace::{Action, ActionKind, Trace};
