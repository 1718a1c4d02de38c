//! An epsilon-free NFA built structurally from a property, used as an
//! independent oracle for the trace-set semantics.

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};

use crate::prop::{Event, GlobalProp, LocalKind, LocalProp};
use crate::trace::Trace;

/// Finite automaton over events. No tau edges ever appear.
#[derive(Clone, Debug)]
pub struct PropNfa {
    pub initial: usize,
    pub accepting: Vec<bool>,
    /// Out-edges per state.
    pub edges: Vec<Vec<(Event, usize)>>,
}

impl PropNfa {
    pub fn state_count(&self) -> usize {
        self.edges.len()
    }

    /// States from which some accepting state is reachable.
    pub fn productive(&self) -> Vec<bool> {
        let n = self.state_count();
        let mut rev: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (s, outs) in self.edges.iter().enumerate() {
            for (_, t) in outs {
                rev[*t].push(s);
            }
        }
        let mut prod = self.accepting.clone();
        let mut queue: VecDeque<usize> =
            (0..n).filter(|&s| self.accepting[s]).collect();
        while let Some(s) = queue.pop_front() {
            for &p in &rev[s] {
                if !prod[p] {
                    prod[p] = true;
                    queue.push_back(p);
                }
            }
        }
        prod
    }

    fn step_set(&self, set: &BTreeSet<usize>, ev: &Event) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        for &s in set {
            for (e, t) in &self.edges[s] {
                if e == ev {
                    out.insert(*t);
                }
            }
        }
        out
    }

    fn run(&self, t: &Trace) -> Result<BTreeSet<usize>, String> {
        let mut set = BTreeSet::from([self.initial]);
        for a in &t.0 {
            if a.is_tau() {
                return Err("trace contains tau; erase it first".to_string());
            }
            set = self.step_set(&set, a);
            if set.is_empty() {
                break;
            }
        }
        Ok(set)
    }

    pub fn member(&self, t: &Trace) -> Result<bool, String> {
        Ok(self.run(t)?.iter().any(|&s| self.accepting[s]))
    }

    pub fn prefix_member(&self, t: &Trace) -> Result<bool, String> {
        let prod = self.productive();
        Ok(self.run(t)?.iter().any(|&s| prod[s]))
    }

    /// All accepted traces of length at most `maxlen`.
    pub fn enumerate(&self, maxlen: usize) -> HashSet<Trace> {
        let mut out = HashSet::new();
        // Depth-first enumeration over subset states; traces are deduplicated
        // by construction since subset stepping is deterministic per trace.
        let mut stack: Vec<(BTreeSet<usize>, Trace)> =
            vec![(BTreeSet::from([self.initial]), Trace::default())];
        while let Some((set, tr)) = stack.pop() {
            if set.iter().any(|&s| self.accepting[s]) {
                out.insert(tr.clone());
            }
            if tr.len() == maxlen {
                continue;
            }
            let mut evs: BTreeSet<Event> = BTreeSet::new();
            for &s in &set {
                for (e, _) in &self.edges[s] {
                    evs.insert(e.clone());
                }
            }
            for ev in evs {
                let next = self.step_set(&set, &ev);
                if !next.is_empty() {
                    let mut t2 = tr.clone();
                    t2.0.push(ev);
                    stack.push((next, t2));
                }
            }
        }
        out
    }

    /// Product automaton accepting the intersection of the two languages.
    pub fn intersect(&self, other: &PropNfa) -> PropNfa {
        let mut ids: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edges: Vec<Vec<(Event, usize)>> = Vec::new();
        let mut accepting: Vec<bool> = Vec::new();
        let mut queue = VecDeque::new();
        let root = (self.initial, other.initial);
        ids.insert(root, 0);
        edges.push(Vec::new());
        accepting.push(self.accepting[root.0] && other.accepting[root.1]);
        queue.push_back(root);
        while let Some((a, b)) = queue.pop_front() {
            let id = ids[&(a, b)];
            let mut outs = Vec::new();
            for (e1, t1) in &self.edges[a] {
                for (e2, t2) in &other.edges[b] {
                    if e1 == e2 {
                        let key = (*t1, *t2);
                        let tid = *ids.entry(key).or_insert_with(|| {
                            edges.push(Vec::new());
                            accepting.push(self.accepting[*t1] && other.accepting[*t2]);
                            queue.push_back(key);
                            edges.len() - 1
                        });
                        outs.push((e1.clone(), tid));
                    }
                }
            }
            outs.sort();
            outs.dedup();
            edges[id] = outs;
        }
        PropNfa { initial: 0, accepting, edges }
    }

    /// Compares the two automata on all traces of length at most `maxlen`.
    /// When `prefix_closed` is set, a trace counts as accepted if it can be
    /// extended to an accepted one. Returns a shortest-first counterexample.
    pub fn equal_upto(
        &self,
        other: &PropNfa,
        maxlen: usize,
        prefix_closed: bool,
    ) -> Option<Trace> {
        let flag1 = if prefix_closed { self.productive() } else { self.accepting.clone() };
        let flag2 = if prefix_closed { other.productive() } else { other.accepting.clone() };
        let accept1 = |set: &BTreeSet<usize>| set.iter().any(|&s| flag1[s]);
        let accept2 = |set: &BTreeSet<usize>| set.iter().any(|&s| flag2[s]);
        let mut seen: HashSet<(BTreeSet<usize>, BTreeSet<usize>)> = HashSet::new();
        let mut queue: VecDeque<(BTreeSet<usize>, BTreeSet<usize>, Trace)> = VecDeque::new();
        let start = (
            BTreeSet::from([self.initial]),
            BTreeSet::from([other.initial]),
            Trace::default(),
        );
        seen.insert((start.0.clone(), start.1.clone()));
        queue.push_back(start);
        while let Some((s1, s2, tr)) = queue.pop_front() {
            if accept1(&s1) != accept2(&s2) {
                return Some(tr);
            }
            if tr.len() == maxlen {
                continue;
            }
            let mut evs: BTreeSet<Event> = BTreeSet::new();
            for &s in &s1 {
                for (e, _) in &self.edges[s] {
                    evs.insert(e.clone());
                }
            }
            for &s in &s2 {
                for (e, _) in &other.edges[s] {
                    evs.insert(e.clone());
                }
            }
            for ev in evs {
                let n1 = self.step_set(&s1, &ev);
                let n2 = other.step_set(&s2, &ev);
                if n1.is_empty() && n2.is_empty() {
                    continue;
                }
                if seen.insert((n1.clone(), n2.clone())) {
                    let mut t2 = tr.clone();
                    t2.0.push(ev);
                    queue.push_back((n1, n2, t2));
                }
            }
        }
        None
    }
}

struct Builder {
    accepting: Vec<bool>,
    edges: Vec<Vec<(Event, usize)>>,
}

impl Builder {
    fn new() -> Self {
        Builder { accepting: Vec::new(), edges: Vec::new() }
    }

    fn add_state(&mut self, accepting: bool) -> usize {
        self.accepting.push(accepting);
        self.edges.push(Vec::new());
        self.accepting.len() - 1
    }

    /// Copies `other` into this builder, returning the state-id offset.
    fn embed(&mut self, other: &PropNfa) -> usize {
        let off = self.edges.len();
        for s in 0..other.state_count() {
            self.accepting.push(other.accepting[s]);
            self.edges.push(
                other.edges[s].iter().map(|(e, t)| (e.clone(), t + off)).collect(),
            );
        }
        off
    }
}

fn build_local(p: &LocalProp) -> PropNfa {
    match p.kind() {
        LocalKind::Epsilon => {
            let mut b = Builder::new();
            let s = b.add_state(true);
            PropNfa { initial: s, accepting: b.accepting, edges: b.edges }
        }
        LocalKind::Union(branches) => {
            let mut b = Builder::new();
            let start = b.add_state(false);
            for (ev, sub) in branches {
                let n = build_local(sub);
                let off = b.embed(&n);
                b.edges[start].push((ev.clone(), n.initial + off));
            }
            PropNfa { initial: start, accepting: b.accepting, edges: b.edges }
        }
        LocalKind::Seq(p1, p2) => {
            let n1 = build_local(p1);
            let n2 = build_local(p2);
            let mut b = Builder::new();
            let off1 = b.embed(&n1);
            let off2 = b.embed(&n2);
            let init2_edges: Vec<(Event, usize)> = b.edges[n2.initial + off2].clone();
            let init2_accepting = b.accepting[n2.initial + off2];
            for s in 0..n1.state_count() {
                if n1.accepting[s] {
                    let sid = s + off1;
                    b.edges[sid].extend(init2_edges.iter().cloned());
                    b.accepting[sid] = init2_accepting;
                }
            }
            PropNfa { initial: n1.initial + off1, accepting: b.accepting, edges: b.edges }
        }
        LocalKind::Inter(p1, p2) => build_local(p1).intersect(&build_local(p2)),
    }
}

fn build_star(p: &LocalProp) -> PropNfa {
    let n = build_local(p);
    let mut b = Builder::new();
    let start = b.add_state(true);
    let off = b.embed(&n);
    let init_edges: Vec<(Event, usize)> = b.edges[n.initial + off].clone();
    b.edges[start].extend(init_edges.iter().cloned());
    for s in 0..n.state_count() {
        if n.accepting[s] {
            b.edges[s + off].extend(init_edges.iter().cloned());
        }
    }
    PropNfa { initial: start, accepting: b.accepting, edges: b.edges }
}

pub(crate) fn build(e: &GlobalProp) -> PropNfa {
    match e {
        GlobalProp::Star(p) => build_star(p),
        GlobalProp::Inter(e1, e2) => build(e1).intersect(&build(e2)),
    }
}
