//! Property ASTs, static checks, the size metric, and trace-set semantics
//! backed by an independent NFA oracle.
//!
//! Local properties are hash-consed: structurally equal terms share one node
//! and compare in O(1). Combinator expansion produces DAGs whose unfolded
//! tree size is exponential, so every analysis here memoizes on node ids.

mod nfa;
mod parser;

pub use nfa::PropNfa;
pub use parser::{parse_property, parse_property_in, ParseError};

use std::cell::RefCell;
use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::rc::{Rc, Weak};

use crate::trace::{Action, Trace};

/// Events are actions minus tau.
pub type Event = Action;

/// Shape of a local property node.
#[derive(Clone, Debug)]
pub enum LocalKind {
    Epsilon,
    Seq(LocalProp, LocalProp),
    /// Guarded union; a lone `ev.p` is a singleton union.
    Union(Vec<(Event, LocalProp)>),
    Inter(LocalProp, LocalProp),
}

#[derive(Debug)]
struct Node {
    id: u64,
    kind: LocalKind,
}

/// Local (scan cycle level) property. Cheap to clone; equality is by
/// structural identity thanks to hash-consing.
#[derive(Clone)]
pub struct LocalProp(Rc<Node>);

#[derive(PartialEq, Eq, Hash)]
enum InternKey {
    Epsilon,
    Seq(u64, u64),
    Union(Vec<(Event, u64)>),
    Inter(u64, u64),
}

thread_local! {
    static INTERNER: RefCell<(u64, HashMap<InternKey, Weak<Node>>)> =
        RefCell::new((0, HashMap::new()));
}

fn intern(kind: LocalKind) -> LocalProp {
    let key = match &kind {
        LocalKind::Epsilon => InternKey::Epsilon,
        LocalKind::Seq(a, b) => InternKey::Seq(a.id(), b.id()),
        LocalKind::Inter(a, b) => InternKey::Inter(a.id(), b.id()),
        LocalKind::Union(bs) => {
            InternKey::Union(bs.iter().map(|(e, p)| (e.clone(), p.id())).collect())
        }
    };
    INTERNER.with(|cell| {
        let (counter, map) = &mut *cell.borrow_mut();
        if let Some(w) = map.get(&key) {
            if let Some(rc) = w.upgrade() {
                return LocalProp(rc);
            }
        }
        *counter += 1;
        let rc = Rc::new(Node { id: *counter, kind });
        map.insert(key, Rc::downgrade(&rc));
        LocalProp(rc)
    })
}

impl LocalProp {
    pub fn epsilon() -> LocalProp {
        intern(LocalKind::Epsilon)
    }

    pub fn seq(a: LocalProp, b: LocalProp) -> LocalProp {
        intern(LocalKind::Seq(a, b))
    }

    /// Builds a guarded union. The branch list must be nonempty.
    pub fn union(branches: Vec<(Event, LocalProp)>) -> LocalProp {
        assert!(!branches.is_empty(), "union must have at least one branch");
        intern(LocalKind::Union(branches))
    }

    pub fn union1(ev: Event, p: LocalProp) -> LocalProp {
        LocalProp::union(vec![(ev, p)])
    }

    pub fn inter(a: LocalProp, b: LocalProp) -> LocalProp {
        intern(LocalKind::Inter(a, b))
    }

    /// `end.ε`, the base well-formed property.
    pub fn end_eps() -> LocalProp {
        LocalProp::union1(Action::end(), LocalProp::epsilon())
    }

    pub fn kind(&self) -> &LocalKind {
        &self.0.kind
    }

    /// Stable structural identity within this thread.
    pub fn id(&self) -> u64 {
        self.0.id
    }

    pub fn is_epsilon(&self) -> bool {
        matches!(self.kind(), LocalKind::Epsilon)
    }

    /// Well-formedness: every branch of the property terminates in `end`.
    pub fn well_formed(&self) -> bool {
        fn go(p: &LocalProp, memo: &mut HashMap<u64, bool>) -> bool {
            if let Some(&v) = memo.get(&p.id()) {
                return v;
            }
            let v = match p.kind() {
                LocalKind::Epsilon => false,
                LocalKind::Seq(_, p2) => go(p2, memo),
                LocalKind::Inter(p1, p2) => go(p1, memo) && go(p2, memo),
                LocalKind::Union(branches) => branches
                    .iter()
                    .all(|(ev, p)| (ev.is_end() && p.is_epsilon()) || go(p, memo)),
            };
            memo.insert(p.id(), v);
            v
        }
        go(self, &mut HashMap::new())
    }

    /// The size metric of the derivative bound, computed over the unfolded
    /// tree (saturating; shared subterms count once per occurrence).
    pub fn prop_size(&self) -> u128 {
        fn go(p: &LocalProp, memo: &mut HashMap<u64, u128>) -> u128 {
            if let Some(&v) = memo.get(&p.id()) {
                return v;
            }
            let v = match p.kind() {
                LocalKind::Epsilon => 1,
                LocalKind::Seq(p1, p2) | LocalKind::Inter(p1, p2) => {
                    go(p1, memo).saturating_add(go(p2, memo)).saturating_add(1)
                }
                LocalKind::Union(branches) => branches
                    .iter()
                    .fold(branches.len() as u128, |acc, (_, p)| {
                        acc.saturating_add(go(p, memo))
                    }),
            };
            memo.insert(p.id(), v);
            v
        }
        go(self, &mut HashMap::new())
    }

    pub fn events_of(&self, out: &mut BTreeSet<Event>) {
        fn go(p: &LocalProp, out: &mut BTreeSet<Event>, seen: &mut BTreeSet<u64>) {
            if !seen.insert(p.id()) {
                return;
            }
            match p.kind() {
                LocalKind::Epsilon => {}
                LocalKind::Seq(p1, p2) | LocalKind::Inter(p1, p2) => {
                    go(p1, out, seen);
                    go(p2, out, seen);
                }
                LocalKind::Union(branches) => {
                    for (ev, p) in branches {
                        out.insert(ev.clone());
                        go(p, out, seen);
                    }
                }
            }
        }
        go(self, out, &mut BTreeSet::new());
    }

    /// Every union sub-term has pairwise-distinct guard events.
    pub fn is_deterministic(&self) -> bool {
        fn go(p: &LocalProp, memo: &mut HashMap<u64, bool>) -> bool {
            if let Some(&v) = memo.get(&p.id()) {
                return v;
            }
            let v = match p.kind() {
                LocalKind::Epsilon => true,
                LocalKind::Seq(p1, p2) | LocalKind::Inter(p1, p2) => {
                    go(p1, memo) && go(p2, memo)
                }
                LocalKind::Union(branches) => {
                    let guards: BTreeSet<_> = branches.iter().map(|(ev, _)| ev).collect();
                    guards.len() == branches.len()
                        && branches.iter().all(|(_, p)| go(p, memo))
                }
            };
            memo.insert(p.id(), v);
            v
        }
        go(self, &mut HashMap::new())
    }

    fn inter_count(&self, memo: &mut HashMap<u64, u64>) -> u64 {
        if let Some(&v) = memo.get(&self.id()) {
            return v;
        }
        let v = match self.kind() {
            LocalKind::Epsilon => 0,
            LocalKind::Seq(p1, p2) => p1.inter_count(memo) + p2.inter_count(memo),
            LocalKind::Inter(p1, p2) => 1 + p1.inter_count(memo) + p2.inter_count(memo),
            LocalKind::Union(bs) => bs.iter().map(|(_, p)| p.inter_count(memo)).sum(),
        };
        memo.insert(self.id(), v);
        v
    }
}

impl PartialEq for LocalProp {
    fn eq(&self, other: &Self) -> bool {
        self.id() == other.id()
    }
}
impl Eq for LocalProp {}

impl std::hash::Hash for LocalProp {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.id().hash(state);
    }
}

impl fmt::Debug for LocalProp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LocalProp#{}({:?})", self.id(), shallow(self))
    }
}

fn shallow(p: &LocalProp) -> String {
    match p.kind() {
        LocalKind::Epsilon => "eps".to_string(),
        LocalKind::Seq(a, b) => format!("#{};#{}", a.id(), b.id()),
        LocalKind::Inter(a, b) => format!("#{}&#{}", a.id(), b.id()),
        LocalKind::Union(bs) => bs
            .iter()
            .map(|(e, p)| format!("{e}.#{}", p.id()))
            .collect::<Vec<_>>()
            .join("+"),
    }
}

impl fmt::Display for LocalProp {
    /// DSL concrete syntax. Recurses through sharing; only print small
    /// properties.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind() {
            LocalKind::Epsilon => write!(f, "eps"),
            LocalKind::Seq(a, b) => write!(f, "({a} ; {b})"),
            LocalKind::Inter(a, b) => write!(f, "({a} & {b})"),
            LocalKind::Union(bs) => {
                if bs.len() > 1 {
                    write!(f, "(")?;
                }
                for (i, (ev, p)) in bs.iter().enumerate() {
                    if i > 0 {
                        write!(f, " + ")?;
                    }
                    if p.is_epsilon() {
                        write!(f, "{ev}")?;
                    } else {
                        write!(f, "{ev} . {p}")?;
                    }
                }
                if bs.len() > 1 {
                    write!(f, ")")?;
                }
                Ok(())
            }
        }
    }
}

/// Global property: Kleene-starred local properties and their intersections.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub enum GlobalProp {
    Star(LocalProp),
    Inter(Box<GlobalProp>, Box<GlobalProp>),
}

impl GlobalProp {
    pub fn inter(a: GlobalProp, b: GlobalProp) -> GlobalProp {
        GlobalProp::Inter(Box::new(a), Box::new(b))
    }

    pub fn well_formed(&self) -> bool {
        match self {
            GlobalProp::Star(p) => p.well_formed(),
            GlobalProp::Inter(e1, e2) => e1.well_formed() && e2.well_formed(),
        }
    }

    pub fn prop_size(&self) -> u128 {
        match self {
            GlobalProp::Star(p) => p.prop_size(),
            GlobalProp::Inter(e1, e2) => {
                e1.prop_size().saturating_add(e2.prop_size()).saturating_add(1)
            }
        }
    }

    pub fn events_of(&self) -> BTreeSet<Event> {
        let mut out = BTreeSet::new();
        self.collect_events(&mut out);
        out
    }

    fn collect_events(&self, out: &mut BTreeSet<Event>) {
        match self {
            GlobalProp::Star(p) => p.events_of(out),
            GlobalProp::Inter(e1, e2) => {
                e1.collect_events(out);
                e2.collect_events(out);
            }
        }
    }

    pub fn is_deterministic(&self) -> bool {
        match self {
            GlobalProp::Star(p) => p.is_deterministic(),
            GlobalProp::Inter(e1, e2) => e1.is_deterministic() && e2.is_deterministic(),
        }
    }

    /// Number of intersection operators occurring anywhere in the property,
    /// the `k` of the m^(k+1) derivative bound.
    pub fn inter_count(&self) -> u64 {
        let mut memo = HashMap::new();
        fn go(e: &GlobalProp, memo: &mut HashMap<u64, u64>) -> u64 {
            match e {
                GlobalProp::Star(p) => p.inter_count(memo),
                GlobalProp::Inter(e1, e2) => 1 + go(e1, memo) + go(e2, memo),
            }
        }
        go(self, &mut memo)
    }

    /// Independent NFA oracle. Expands sharing; only call on properties of
    /// modest unfolded size.
    pub fn to_nfa(&self) -> PropNfa {
        nfa::build(self)
    }

    /// Membership in the trace-set semantics. The trace must be tau-free.
    pub fn lang_member(&self, t: &Trace) -> Result<bool, String> {
        self.to_nfa().member(t)
    }

    /// True iff `t` is a prefix of some member of the language.
    pub fn lang_prefix(&self, t: &Trace) -> Result<bool, String> {
        self.to_nfa().prefix_member(t)
    }
}

impl fmt::Display for GlobalProp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GlobalProp::Star(p) => write!(f, "({p})*"),
            GlobalProp::Inter(a, b) => write!(f, "{a} & {b}"),
        }
    }
}
