//! Breadth-first derivation search over terms `p(A | do(B), C)`.
//!
//! Starting from the inputs, every term is expanded with marginalisation,
//! conditioning, the three do-calculus rules in both directions and the
//! chain rule. The first derivation of the target is the shallowest one.

use std::collections::VecDeque;
use std::time::{Duration, Instant};

use rustc_hash::FxHashMap;
use serde::Serialize;

use super::functional::Functional;
use crate::distributions::{Distribution, Query, Term, VarSet};
use crate::graph::{CausalGraph, VertexSet};

/// Limits on a single search.
#[derive(Debug, Clone, Serialize)]
pub struct SearchBudget {
    /// Maximum number of distinct terms kept.
    pub max_terms: usize,
    /// Terms at this depth are not expanded.
    pub max_depth: usize,
    /// Wall-clock limit, checked periodically.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time_limit: Option<Duration>,
}

impl Default for SearchBudget {
    fn default() -> Self {
        SearchBudget {
            max_terms: 200_000,
            max_depth: 25,
            time_limit: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleMove {
    /// Rule 1: add an observation.
    InsertObservation,
    /// Rule 1: drop an observation.
    DeleteObservation,
    /// Rule 2: replace an intervention with an observation.
    ActionToObservation,
    /// Rule 2: replace an observation with an intervention.
    ObservationToAction,
    /// Rule 3: add an intervention.
    InsertAction,
    /// Rule 3: drop an intervention.
    DeleteAction,
}

impl RuleMove {
    pub fn rule_number(self) -> u8 {
        match self {
            RuleMove::InsertObservation | RuleMove::DeleteObservation => 1,
            RuleMove::ActionToObservation | RuleMove::ObservationToAction => 2,
            RuleMove::InsertAction | RuleMove::DeleteAction => 3,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum Step {
    Input(usize),
    Marginal(u32, usize),
    Condition(u32, usize),
    Rule(u32, RuleMove, VertexSet),
    Product(u32, u32),
}

#[derive(Debug, Clone, Copy)]
struct Node {
    key: Term,
    depth: u32,
    step: Step,
}

/// Why a search ended without finding the target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Exhaustion {
    /// Every reachable term was generated.
    Complete,
    /// The term cap was hit.
    Terms,
    /// Unexpanded terms remained at the depth cap.
    Depth,
    /// The wall-clock limit elapsed.
    Time,
}

/// One line of a derivation trace.
#[derive(Debug, Clone, Serialize)]
pub struct TraceLine {
    pub term: String,
    pub via: String,
}

pub(crate) struct Search<'g> {
    g: &'g CausalGraph,
    universe: VertexSet,
    nodes: Vec<Node>,
    index: FxHashMap<Term, u32>,
    /// Terms keyed by (intervened, conditioned).
    by_context: FxHashMap<(VertexSet, VertexSet), Vec<u32>>,
    queue: VecDeque<u32>,
    target: Term,
    budget: SearchBudget,
    found: Option<u32>,
    capped: bool,
}

pub(crate) struct SearchOutcome {
    pub found: Option<u32>,
    pub exhaustion: Exhaustion,
    pub terms: usize,
}

impl<'g> Search<'g> {
    pub fn new(g: &'g CausalGraph, inputs: &[Term], target: Term, budget: SearchBudget) -> Self {
        let mut universe = target.vars();
        for t in inputs {
            universe |= t.vars();
        }
        let mut s = Search {
            g,
            universe,
            nodes: Vec::new(),
            index: FxHashMap::default(),
            by_context: FxHashMap::default(),
            queue: VecDeque::new(),
            target,
            budget,
            found: None,
            capped: false,
        };
        for (i, t) in inputs.iter().enumerate() {
            s.add(*t, 0, Step::Input(i));
        }
        s
    }

    fn add(&mut self, key: Term, depth: u32, step: Step) {
        if self.found.is_some() || self.index.contains_key(&key) {
            return;
        }
        if self.nodes.len() >= self.budget.max_terms {
            self.capped = true;
            return;
        }
        let id = self.nodes.len() as u32;
        self.nodes.push(Node { key, depth, step });
        self.index.insert(key, id);
        self.by_context.entry((key.b, key.c)).or_default().push(id);
        self.queue.push_back(id);
        if key == self.target {
            self.found = Some(id);
        }
    }

    pub fn run(&mut self) -> SearchOutcome {
        let start = Instant::now();
        let mut depth_capped = false;
        let mut timed_out = false;
        let mut expanded = 0usize;
        while self.found.is_none() {
            let Some(id) = self.queue.pop_front() else { break };
            let node = self.nodes[id as usize];
            if node.depth as usize >= self.budget.max_depth {
                depth_capped = true;
                continue;
            }
            self.expand(id, node);
            expanded += 1;
            if expanded.is_multiple_of(64) {
                if let Some(limit) = self.budget.time_limit {
                    if start.elapsed() > limit {
                        timed_out = true;
                        break;
                    }
                }
            }
        }
        let exhaustion = if timed_out {
            Exhaustion::Time
        } else if self.capped {
            Exhaustion::Terms
        } else if depth_capped {
            Exhaustion::Depth
        } else {
            Exhaustion::Complete
        };
        SearchOutcome {
            found: self.found,
            exhaustion,
            terms: self.nodes.len(),
        }
    }

    fn dsep(&self, cut_in: VertexSet, cut_out: VertexSet, a: VertexSet, z: VertexSet, given: VertexSet) -> bool {
        self.g.dsep_cut(cut_in, cut_out, a, z, given)
    }

    fn expand(&mut self, id: u32, node: Node) {
        let Term { a, b, c } = node.key;
        let d = node.depth + 1;

        if a.len() >= 2 {
            for v in a {
                self.add(Term { a: a.without(v), b, c }, d, Step::Marginal(id, v));
                self.add(
                    Term {
                        a: a.without(v),
                        b,
                        c: c.with(v),
                    },
                    d,
                    Step::Condition(id, v),
                );
            }
        }

        // Rule 1 deletions and insertions; single variables suffice because
        // d-separation is compositional.
        for v in c {
            if self.dsep(b, VertexSet::EMPTY, a, VertexSet::singleton(v), b | c.without(v)) {
                let s = VertexSet::singleton(v);
                self.add(
                    Term { a, b, c: c.without(v) },
                    d,
                    Step::Rule(id, RuleMove::DeleteObservation, s),
                );
            }
        }
        let free = self.universe - a - b - c;
        for v in free {
            if self.dsep(b, VertexSet::EMPTY, a, VertexSet::singleton(v), b | c) {
                let s = VertexSet::singleton(v);
                self.add(
                    Term { a, b, c: c.with(v) },
                    d,
                    Step::Rule(id, RuleMove::InsertObservation, s),
                );
            }
        }

        // Rule 2 in both directions: joint move first, then singletons.
        let to_obs: VertexSet = b
            .iter()
            .filter(|&v| {
                let rest = b.without(v);
                self.dsep(rest, VertexSet::singleton(v), a, VertexSet::singleton(v), rest | c)
            })
            .collect();
        if to_obs.len() >= 2 && self.dsep(b - to_obs, to_obs, a, to_obs, (b - to_obs) | c) {
            self.add(
                Term {
                    a,
                    b: b - to_obs,
                    c: c | to_obs,
                },
                d,
                Step::Rule(id, RuleMove::ActionToObservation, to_obs),
            );
        }
        for v in to_obs {
            let s = VertexSet::singleton(v);
            self.add(
                Term {
                    a,
                    b: b.without(v),
                    c: c.with(v),
                },
                d,
                Step::Rule(id, RuleMove::ActionToObservation, s),
            );
        }
        let to_act: VertexSet = c
            .iter()
            .filter(|&v| self.dsep(b, VertexSet::singleton(v), a, VertexSet::singleton(v), b | c.without(v)))
            .collect();
        if to_act.len() >= 2 && self.dsep(b, to_act, a, to_act, b | (c - to_act)) {
            self.add(
                Term {
                    a,
                    b: b | to_act,
                    c: c - to_act,
                },
                d,
                Step::Rule(id, RuleMove::ObservationToAction, to_act),
            );
        }
        for v in to_act {
            let s = VertexSet::singleton(v);
            self.add(
                Term {
                    a,
                    b: b.with(v),
                    c: c.without(v),
                },
                d,
                Step::Rule(id, RuleMove::ObservationToAction, s),
            );
        }

        // Rule 3: the removed interventions keep their incoming edges when
        // they are ancestors of the observations.
        let del: VertexSet = b
            .iter()
            .filter(|&v| {
                let rest = b.without(v);
                let anc_c = self.g.ancestors_cut(rest, c);
                let cut = if anc_c.contains(v) { rest } else { b };
                self.dsep(cut, VertexSet::EMPTY, a, VertexSet::singleton(v), rest | c)
            })
            .collect();
        if del.len() >= 2 {
            let rest = b - del;
            let anc_c = self.g.ancestors_cut(rest, c);
            if self.dsep(rest | (del - anc_c), VertexSet::EMPTY, a, del, rest | c) {
                self.add(Term { a, b: rest, c }, d, Step::Rule(id, RuleMove::DeleteAction, del));
            }
        }
        for v in del {
            let s = VertexSet::singleton(v);
            self.add(
                Term { a, b: b.without(v), c },
                d,
                Step::Rule(id, RuleMove::DeleteAction, s),
            );
        }
        let anc_c = self.g.ancestors_cut(b, c);
        let ins: VertexSet = free
            .iter()
            .filter(|&v| {
                let cut = if anc_c.contains(v) { b } else { b.with(v) };
                self.dsep(cut, VertexSet::EMPTY, a, VertexSet::singleton(v), b | c)
            })
            .collect();
        if ins.len() >= 2 && self.dsep(b | (ins - anc_c), VertexSet::EMPTY, a, ins, b | c) {
            self.add(
                Term { a, b: b | ins, c },
                d,
                Step::Rule(id, RuleMove::InsertAction, ins),
            );
        }
        for v in ins {
            let s = VertexSet::singleton(v);
            self.add(
                Term { a, b: b.with(v), c },
                d,
                Step::Rule(id, RuleMove::InsertAction, s),
            );
        }

        // Chain rule with this term as the upper factor p(A | do(B), A2, C2).
        for a2 in c.subsets().skip(1) {
            let lower = Term { a: a2, b, c: c - a2 };
            if let Some(&other) = self.index.get(&lower) {
                if other != id {
                    self.add(
                        Term {
                            a: a | a2,
                            b,
                            c: c - a2,
                        },
                        d,
                        Step::Product(id, other),
                    );
                }
            }
        }
        // ... and as the lower factor p(A | do(B), C).
        if let Some(uppers) = self.by_context.get(&(b, a | c)) {
            let uppers = uppers.clone();
            for up in uppers {
                if up == id {
                    continue;
                }
                let ua = self.nodes[up as usize].key.a;
                self.add(Term { a: ua | a, b, c }, d, Step::Product(up, id));
            }
        }
    }

    pub fn node_depth(&self, id: u32) -> u32 {
        self.nodes[id as usize].depth
    }

    /// The functional for node `id`, built from its derivation.
    pub fn functional(&self, id: u32, inputs: &[Distribution]) -> Functional {
        let mut memo: FxHashMap<u32, Functional> = FxHashMap::default();
        self.build(id, inputs, &mut memo)
    }

    fn build(&self, id: u32, inputs: &[Distribution], memo: &mut FxHashMap<u32, Functional>) -> Functional {
        if let Some(f) = memo.get(&id) {
            return f.clone();
        }
        let node = self.nodes[id as usize];
        let name = |v: usize| self.g.name(v).to_string();
        let f = match node.step {
            Step::Input(i) => Functional::term(i, &inputs[i]),
            Step::Marginal(p, v) => match self.build(p, inputs, memo) {
                Functional::Term {
                    input,
                    mut measured,
                    intervened,
                    conditioned,
                } => {
                    measured.remove(&name(v));
                    Functional::Term {
                        input,
                        measured,
                        intervened,
                        conditioned,
                    }
                }
                f => Functional::sum([name(v)].into(), f),
            },
            Step::Condition(p, v) => {
                let parent_a = self.nodes[p as usize].key.a;
                match self.build(p, inputs, memo) {
                    Functional::Term {
                        input,
                        mut measured,
                        intervened,
                        mut conditioned,
                    } => {
                        measured.remove(&name(v));
                        conditioned.insert(name(v));
                        Functional::Term {
                            input,
                            measured,
                            intervened,
                            conditioned,
                        }
                    }
                    f => {
                        let others: VarSet = self.g.names_of(parent_a.without(v));
                        let den = Functional::sum(others, f.clone());
                        Functional::quotient(f, den)
                    }
                }
            }
            Step::Rule(p, _, _) => self.build(p, inputs, memo),
            Step::Product(up, low) => {
                let u = self.build(up, inputs, memo);
                let l = self.build(low, inputs, memo);
                Functional::product(vec![u, l])
            }
        };
        memo.insert(id, f.clone());
        f
    }

    /// Derivation of node `id` in dependency order.
    pub fn trace(&self, id: u32) -> Vec<TraceLine> {
        let mut order = Vec::new();
        let mut seen = rustc_hash::FxHashSet::default();
        self.collect(id, &mut seen, &mut order);
        order
            .into_iter()
            .map(|n| {
                let node = self.nodes[n as usize];
                let t = Distribution::from_term(self.g, &node.key).to_string();
                let key = |p: u32| Distribution::from_term(self.g, &self.nodes[p as usize].key).to_string();
                let via = match node.step {
                    Step::Input(i) => format!("input {i}"),
                    Step::Marginal(p, v) => format!("marginalise {} from {}", self.g.name(v), key(p)),
                    Step::Condition(p, v) => format!("condition on {} in {}", self.g.name(v), key(p)),
                    Step::Rule(p, m, s) => format!(
                        "rule {} ({:?}) on {} in {}",
                        m.rule_number(),
                        m,
                        self.g.sorted_names(s).join(","),
                        key(p)
                    ),
                    Step::Product(u, l) => format!("chain rule {} * {}", key(u), key(l)),
                };
                TraceLine { term: t, via }
            })
            .collect()
    }

    fn collect(&self, id: u32, seen: &mut rustc_hash::FxHashSet<u32>, out: &mut Vec<u32>) {
        if !seen.insert(id) {
            return;
        }
        match self.nodes[id as usize].step {
            Step::Input(_) => {}
            Step::Marginal(p, _) | Step::Condition(p, _) | Step::Rule(p, _, _) => self.collect(p, seen, out),
            Step::Product(u, l) => {
                self.collect(u, seen, out);
                self.collect(l, seen, out);
            }
        }
        out.push(id);
    }
}

/// Builds the search target for a query.
pub(crate) fn target_of(g: &CausalGraph, q: &Query) -> Result<Term, crate::graph::GraphError> {
    Ok(Term {
        a: g.set_of(&q.outcome)?,
        b: g.set_of(&q.treatment)?,
        c: VertexSet::EMPTY,
    })
}
