//! Identification-invariant removal of irrelevant vertices.
//!
//! Three reductions are provided: dropping non-ancestors of the outcome,
//! dropping vertices d-separated from the outcome in the intervened graph,
//! and dropping pieces hanging off the rest of the graph by a single vertex.
//! Each reduction reports what it removed, the conditions it checked and how
//! the surviving inputs map back to the ones it was given.

use serde::Serialize;
use thiserror::Error;

use crate::audit::failed;
pub use crate::audit::ConditionCheck;
use crate::distributions::{restrict_inputs, Distribution, DistributionError, Query, VarSet};
use crate::graph::{CausalGraph, GraphError, VertexSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PruneRule {
    /// Keep only the outcome and its ancestors.
    NonAncestors,
    /// Remove vertices d-separated from the outcome given the treatment.
    Separated,
    /// Remove components attached to the rest through one vertex.
    Isolated,
}

#[derive(Debug, Clone, Serialize)]
pub struct PruneStep {
    pub rule: PruneRule,
    pub applied: bool,
    pub removed: VarSet,
    pub removed_latents: VarSet,
    /// Cut vertex for [`PruneRule::Isolated`].
    #[serde(skip_serializing_if = "Option::is_none")]
    pub via: Option<String>,
    pub conditions: Vec<ConditionCheck>,
    /// `input_map[i]` is the index, before this step, of input `i` after it.
    pub input_map: Vec<usize>,
}

/// A pruned problem plus the audit trail that produced it.
#[derive(Debug, Clone, Serialize)]
pub struct Pruned {
    pub graph: CausalGraph,
    pub inputs: Vec<Distribution>,
    pub query: Query,
    pub steps: Vec<PruneStep>,
}

impl Pruned {
    /// The unpruned problem, with no steps recorded.
    pub fn identity(g: &CausalGraph, inputs: &[Distribution], q: &Query) -> Self {
        Pruned {
            graph: g.clone(),
            inputs: inputs.to_vec(),
            query: q.clone(),
            steps: Vec::new(),
        }
    }

    /// Index in the original input list of current input `i`.
    pub fn input_origin(&self, i: usize) -> usize {
        self.steps
            .iter()
            .rev()
            .filter(|s| s.applied)
            .fold(i, |idx, s| s.input_map[idx])
    }

    pub fn input_origins(&self) -> Vec<usize> {
        (0..self.inputs.len()).map(|i| self.input_origin(i)).collect()
    }

    pub fn removed(&self) -> VarSet {
        self.steps.iter().flat_map(|s| s.removed.iter().cloned()).collect()
    }

    fn push(mut self, step: PruneStep, graph: CausalGraph, inputs: Vec<Distribution>, query: Query) -> Self {
        self.graph = graph;
        self.inputs = inputs;
        self.query = query;
        self.steps.push(step);
        self
    }
}

#[derive(Debug, Error, Clone)]
pub enum PruneError {
    #[error("{rule:?} pruning refused: {}", failed(.conditions))]
    Refused {
        rule: PruneRule,
        conditions: Vec<ConditionCheck>,
    },
    #[error("{0}")]
    Precondition(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Distribution(#[from] DistributionError),
}

fn validate(g: &CausalGraph, inputs: &[Distribution], q: &Query) -> Result<(), PruneError> {
    q.validate(g)?;
    for d in inputs {
        d.validate(g)?;
    }
    Ok(())
}

fn split(pairs: Vec<(usize, Distribution)>) -> (Vec<usize>, Vec<Distribution>) {
    pairs.into_iter().unzip()
}

fn restrict_query(q: &Query, keep: &VarSet) -> Query {
    Query {
        outcome: q.outcome.clone(),
        treatment: q.treatment.intersection(keep).cloned().collect(),
    }
}

/// Keeps `Y` and its ancestors (with their latents). Refuses when some
/// input intervenes on or conditions on a vertex outside `An(Y)`.
pub fn prune_non_ancestors(g: &CausalGraph, inputs: &[Distribution], q: &Query) -> Result<Pruned, PruneError> {
    prune_non_ancestors_from(Pruned::identity(g, inputs, q))
}

fn prune_non_ancestors_from(p: Pruned) -> Result<Pruned, PruneError> {
    let g = &p.graph;
    validate(g, &p.inputs, &p.query)?;
    let y = g.set_of(&p.query.outcome)?;
    let anc = g.ancestors(y) & g.observed();
    let mut conditions = Vec::new();
    for d in &p.inputs {
        let bc = g.set_of(d.intervened.iter().chain(&d.conditioned))?;
        let outside = bc - anc;
        conditions.push(ConditionCheck::new(
            "b",
            outside.is_empty(),
            if outside.is_empty() {
                format!("{d}: intervened and conditioned sets lie in An(Y)")
            } else {
                format!(
                    "{d}: {} not an ancestor of the outcome",
                    g.sorted_names(outside).join(",")
                )
            },
        ));
    }
    if conditions.iter().any(|c| !c.holds) {
        return Err(PruneError::Refused {
            rule: PruneRule::NonAncestors,
            conditions,
        });
    }
    let keep = anc | y;
    let removed = g.observed() - keep;
    let graph = g.induced_subgraph(keep);
    let keep_names = g.names_of(keep);
    let (map, inputs) = split(restrict_inputs(&p.inputs, &keep_names));
    let query = restrict_query(&p.query, &keep_names);
    let step = PruneStep {
        rule: PruneRule::NonAncestors,
        applied: true,
        removed: g.names_of(removed),
        removed_latents: g.names_of(g.latents() - graph.latents()),
        via: None,
        conditions,
        input_map: map,
    };
    Ok(p.push(step, graph, inputs, query))
}

/// Removes the observed vertices `Z` outside `X` that are d-separated from
/// `Y` given `X` once incoming edges of `X` are cut.
///
/// The graph must already be ancestral for `Y`. Refuses when `Z` meets the
/// descendants of `X`, when an input intervenes on or conditions on `Z`, or
/// when an error term feeding `Z` reaches several treatment vertices through
/// `Z` that share no latent parent.
pub fn prune_separated(g: &CausalGraph, inputs: &[Distribution], q: &Query) -> Result<Pruned, PruneError> {
    prune_separated_from(Pruned::identity(g, inputs, q))
}

fn separated_candidates(g: &CausalGraph, x: VertexSet, y: VertexSet) -> VertexSet {
    (g.observed() - x - y)
        .iter()
        .filter(|&v| g.dsep_cut(x, VertexSet::EMPTY, VertexSet::singleton(v), y, x))
        .collect()
}

fn prune_separated_from(p: Pruned) -> Result<Pruned, PruneError> {
    let g = &p.graph;
    validate(g, &p.inputs, &p.query)?;
    let y = g.set_of(&p.query.outcome)?;
    let x = g.set_of(&p.query.treatment)?;
    let stray = g.observed() - g.an_plus(y);
    if !stray.is_empty() {
        return Err(PruneError::Precondition(format!(
            "graph is not ancestral for the outcome: {} must be pruned first",
            g.sorted_names(stray).join(",")
        )));
    }
    let z = separated_candidates(g, x, y);
    let mut conditions = Vec::new();

    let de_x = g.descendants(x);
    let hit = z & de_x;
    conditions.push(ConditionCheck::new(
        "a",
        hit.is_empty(),
        if hit.is_empty() {
            "no removed vertex descends from the treatment".to_string()
        } else {
            format!("{} descend from the treatment", g.sorted_names(hit).join(","))
        },
    ));

    for d in &p.inputs {
        let bc = g.set_of(d.intervened.iter().chain(&d.conditioned))?;
        let bad = bc & z;
        conditions.push(ConditionCheck::new(
            "b",
            bad.is_empty(),
            if bad.is_empty() {
                format!("{d}: intervened and conditioned sets survive")
            } else {
                format!("{d}: uses removed {}", g.sorted_names(bad).join(","))
            },
        ));
    }

    // Error terms of Z: each member's own disturbance plus latents with a
    // child in Z. Each one must not fan out to several treatment vertices
    // through Z unless those vertices share a latent parent.
    let lat_z: VertexSet = g.latents().iter().filter(|&u| g.children(u).intersects(z)).collect();
    let reach = x & g.children_of(z | lat_z);
    let mut sources: Vec<(String, VertexSet)> = z
        .iter()
        .map(|v| {
            (
                format!("error term of {}", g.name(v)),
                g.de_plus(VertexSet::singleton(v)),
            )
        })
        .collect();
    sources.extend(
        lat_z
            .iter()
            .map(|u| (g.name(u).to_string(), g.descendants(VertexSet::singleton(u)))),
    );
    for (label, de) in sources {
        let xs = de & reach;
        if xs.len() < 2 {
            continue;
        }
        let shared = g.latents().iter().find(|&u| xs.is_subset(g.children(u)));
        conditions.push(ConditionCheck::new(
            "c",
            shared.is_some(),
            match shared {
                Some(u) => format!(
                    "{label} reaches {}; common latent parent {}",
                    g.sorted_names(xs).join(","),
                    g.name(u)
                ),
                None => format!(
                    "{label} reaches {} which share no latent parent",
                    g.sorted_names(xs).join(",")
                ),
            },
        ));
    }

    if conditions.iter().any(|c| !c.holds) {
        return Err(PruneError::Refused {
            rule: PruneRule::Separated,
            conditions,
        });
    }
    Ok(remove_observed(p, z, PruneRule::Separated, None, conditions))
}

fn remove_observed(
    p: Pruned,
    z: VertexSet,
    rule: PruneRule,
    via: Option<String>,
    conditions: Vec<ConditionCheck>,
) -> Pruned {
    let g = &p.graph;
    let keep = g.observed() - z;
    let graph = g.induced_subgraph(keep);
    let keep_names = g.names_of(keep);
    let (map, inputs) = split(restrict_inputs(&p.inputs, &keep_names));
    let step = PruneStep {
        rule,
        applied: true,
        removed: g.names_of(z),
        removed_latents: g.names_of(g.latents() - graph.latents()),
        via,
        conditions,
        input_map: map,
    };
    let query = p.query.clone();
    p.push(step, graph, inputs, query)
}

/// Repeatedly removes the largest set of observed vertices that reach the
/// rest of the graph only through a single observed vertex and contain no
/// outcome, treatment, intervened or conditioned variable.
pub fn prune_isolated(g: &CausalGraph, inputs: &[Distribution], q: &Query) -> Result<Pruned, PruneError> {
    validate(g, inputs, q)?;
    Ok(prune_isolated_from(Pruned::identity(g, inputs, q))?.0)
}

/// Largest removable set and its cut vertex.
fn isolated_candidate(p: &Pruned) -> Result<Option<(usize, VertexSet)>, PruneError> {
    let g = &p.graph;
    let mut protect = g.set_of(p.query.outcome.iter().chain(&p.query.treatment))?;
    for d in &p.inputs {
        protect |= g.set_of(d.intervened.iter().chain(&d.conditioned))?;
    }
    let mut best: Option<(usize, VertexSet)> = None;
    let mut order: Vec<usize> = g.observed().iter().collect();
    order.sort_by(|a, b| g.name(*a).cmp(g.name(*b)));
    for w in order {
        let mut z = VertexSet::EMPTY;
        for comp in g.components(g.vertices().without(w)) {
            if comp.is_disjoint(protect) {
                z |= comp & g.observed();
            }
        }
        if !z.is_empty() && best.is_none_or(|(_, b)| z.len() > b.len()) {
            best = Some((w, z));
        }
    }
    Ok(best)
}

fn prune_isolated_from(mut p: Pruned) -> Result<(Pruned, bool), PruneError> {
    let mut changed = false;
    while let Some((w, z)) = isolated_candidate(&p)? {
        let g = &p.graph;
        let conditions = vec![
            ConditionCheck::new(
                "a",
                true,
                format!(
                    "{} reach the rest of the graph only through {}",
                    g.sorted_names(z).join(","),
                    g.name(w)
                ),
            ),
            ConditionCheck::new("b", true, "no outcome or treatment vertex removed"),
            ConditionCheck::new("c", true, "no intervened or conditioned variable removed"),
        ];
        let via = Some(g.name(w).to_string());
        p = remove_observed(p, z, PruneRule::Isolated, via, conditions);
        changed = true;
    }
    Ok((p, changed))
}

/// Non-ancestor pruning, then the other two reductions until neither
/// removes anything. Removals can turn more vertices into non-ancestors
/// or drop inputs that blocked an earlier refusal, so the whole sequence
/// repeats until a round removes nothing; the result is a fixpoint.
/// Refusals are recorded as unapplied steps.
pub fn prune_all(g: &CausalGraph, inputs: &[Distribution], q: &Query) -> Result<Pruned, PruneError> {
    validate(g, inputs, q)?;
    let mut p = Pruned::identity(g, inputs, q);
    let mut first = true;
    loop {
        let round_start = p.graph.observed().len();
        let ancestral = match prune_non_ancestors_from(p.clone()) {
            Ok(next) => {
                if first || next.graph.observed().len() < round_start {
                    p = next;
                }
                true
            }
            Err(PruneError::Refused { rule, conditions }) => {
                if first {
                    p.steps.push(refusal(rule, conditions));
                }
                false
            }
            Err(e) => return Err(e),
        };
        first = false;
        loop {
            let mut changed = false;
            if ancestral {
                let before = p.graph.observed().len();
                match prune_separated_from(p.clone()) {
                    Ok(next) => {
                        if next.graph.observed().len() < before {
                            p = next;
                            changed = true;
                        }
                    }
                    Err(PruneError::Refused { rule, conditions }) => {
                        let already = p
                            .steps
                            .iter()
                            .any(|s| !s.applied && s.rule == rule && s.conditions == conditions);
                        if !already {
                            p.steps.push(refusal(rule, conditions));
                        }
                    }
                    Err(e) => return Err(e),
                }
            }
            let (next, iso) = prune_isolated_from(p)?;
            p = next;
            changed |= iso;
            if !changed {
                break;
            }
        }
        if p.graph.observed().len() == round_start {
            return Ok(p);
        }
    }
}

fn refusal(rule: PruneRule, conditions: Vec<ConditionCheck>) -> PruneStep {
    PruneStep {
        rule,
        applied: false,
        removed: VarSet::new(),
        removed_latents: VarSet::new(),
        via: None,
        conditions,
        input_map: Vec::new(),
    }
}
