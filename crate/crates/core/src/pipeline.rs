//! End-to-end analysis: prune, cluster, identify, and map the answer back.

use serde::Serialize;
use thiserror::Error;

use crate::clustering::{
    apply_cluster, cluster_inputs, enumerate_transit_clusters, is_transit_cluster, ClusterError, ClusterMapping,
};
use crate::distributions::{Distribution, Query, VarSet};
use crate::graph::{CausalGraph, GraphError, VertexSet};
use crate::identify::{
    identify, lift_clustered, lift_pruned, Functional, IdStatus, IdentifyError, IdentifyResult, SearchBudget,
};
use crate::invariance::{decide_invariance, Invariance, InvarianceError, InvarianceVerdict};
use crate::pruning::{prune_all, PruneError, Pruned};

/// Largest cluster size tried by automatic enumeration.
pub const AUTO_CLUSTER_MAX: usize = 8;

/// Wording for negative search results, whose scope is the rule set.
pub const NOT_IDENTIFIED_LABEL: &str = "non-identifiable by the implemented rule set";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Prune(#[from] PruneError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Identify(#[from] IdentifyError),
    #[error(transparent)]
    Invariance(#[from] InvarianceError),
    #[error("cluster `{0}` mentions vertex `{1}`, which is not in the (pruned) graph")]
    ClusterMember(String, String),
    #[error("cluster `{0}` contains query variable `{1}`")]
    ClusterHasQueryVar(String, String),
    #[error("cluster name `{0}` is already a vertex")]
    ClusterName(String),
    #[error("no inputs given")]
    NoInputs,
}

#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub prune: bool,
    pub cluster: bool,
    /// Clusters to apply, by name and members. Empty means choose
    /// automatically (when `cluster` is set).
    pub clusters: Vec<(String, Vec<String>)>,
    pub max_cluster_size: usize,
    pub budget: SearchBudget,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            prune: true,
            cluster: true,
            clusters: Vec::new(),
            max_cluster_size: AUTO_CLUSTER_MAX,
            budget: SearchBudget::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Identified,
    NotIdentified,
    Undetermined,
}

impl Verdict {
    pub fn label(self) -> &'static str {
        match self {
            Verdict::Identified => "identified",
            Verdict::NotIdentified => NOT_IDENTIFIED_LABEL,
            Verdict::Undetermined => "undetermined",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AppliedCluster {
    pub mapping: ClusterMapping,
    /// Set once the clustered problem turned out non-identified.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub invariance: Option<InvarianceVerdict>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PipelineReport {
    pub verdict: Verdict,
    pub label: &'static str,
    /// Functional over the original inputs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub functional: Option<Functional>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expression: Option<String>,
    /// Why a negative or undetermined verdict was reached.
    pub justification: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pruning: Option<Pruned>,
    pub clusters: Vec<AppliedCluster>,
    /// Search on the fully reduced problem.
    pub reduced: IdentifyResult,
    /// Search on the pruned but unclustered problem, when it was needed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fallback: Option<IdentifyResult>,
}

struct Stage {
    graph: CausalGraph,
    inputs: Vec<Distribution>,
    t: VertexSet,
    name: String,
}

fn query_vars(q: &Query) -> VarSet {
    q.outcome.union(&q.treatment).cloned().collect()
}

fn check_cluster(g: &CausalGraph, q: &Query, name: &str, t: VertexSet) -> Result<(), PipelineError> {
    let qv = query_vars(q);
    if let Some(v) = g.names_of(t).into_iter().find(|v| qv.contains(v)) {
        return Err(PipelineError::ClusterHasQueryVar(name.to_string(), v));
    }
    Ok(())
}

/// Automatically chosen clusters: largest first, pairwise disjoint, each a
/// transit cluster of the graph at the point it is applied, compatible with
/// the inputs and free of query variables.
fn auto_clusters(
    g: &CausalGraph,
    inputs: &[Distribution],
    q: &Query,
    max_size: usize,
) -> Result<Vec<Stage>, PipelineError> {
    let found = match enumerate_transit_clusters(g, max_size, false) {
        Ok(f) => f,
        Err(ClusterError::TooManyCandidates(n)) => {
            log::info!("skipping cluster enumeration: {n} candidate subsets");
            return Ok(Vec::new());
        }
        Err(ClusterError::Disconnected) => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let qv = g.set_of(query_vars(q).iter())?;
    let mut candidates: Vec<VertexSet> = found.into_iter().filter(|t| t.is_disjoint(qv)).collect();
    candidates.sort_by_key(|t| std::cmp::Reverse(t.len()));

    let mut stages = Vec::new();
    let mut graph = g.clone();
    let mut current = inputs.to_vec();
    let mut used = VertexSet::EMPTY;
    for t in candidates {
        if t.intersects(used) || !is_transit_cluster(&graph, t)?.is_cluster {
            continue;
        }
        let name = graph.fresh_name("T");
        let Ok((clustered_inputs, _)) = cluster_inputs(&graph, &current, t, &name) else {
            continue;
        };
        let (next, _) = apply_cluster(&graph, t, Some(&name))?;
        stages.push(Stage {
            graph: std::mem::replace(&mut graph, next),
            inputs: std::mem::replace(&mut current, clustered_inputs),
            t,
            name,
        });
        used |= t;
    }
    Ok(stages)
}

fn user_clusters(
    g: &CausalGraph,
    inputs: &[Distribution],
    q: &Query,
    requested: &[(String, Vec<String>)],
) -> Result<Vec<Stage>, PipelineError> {
    let mut stages = Vec::new();
    let mut graph = g.clone();
    let mut current = inputs.to_vec();
    let mut used = VertexSet::EMPTY;
    for (name, members) in requested {
        if graph.id(name).is_some() {
            return Err(PipelineError::ClusterName(name.clone()));
        }
        let mut t = VertexSet::EMPTY;
        for m in members {
            let id = g
                .id(m)
                .ok_or_else(|| PipelineError::ClusterMember(name.clone(), m.clone()))?;
            t.insert(id);
        }
        if let Some(v) = (t & used).first() {
            return Err(ClusterError::Overlap(g.name(v).to_string()).into());
        }
        check_cluster(g, q, name, t)?;
        let check = is_transit_cluster(&graph, t)?;
        if !check.is_cluster {
            return Err(ClusterError::NotTransit {
                members: graph.sorted_names(t),
                conditions: check.conditions,
            }
            .into());
        }
        let (clustered_inputs, _) = cluster_inputs(&graph, &current, t, name)?;
        let (next, _) = apply_cluster(&graph, t, Some(name))?;
        stages.push(Stage {
            graph: std::mem::replace(&mut graph, next),
            inputs: std::mem::replace(&mut current, clustered_inputs),
            t,
            name: name.clone(),
        });
        used |= t;
    }
    Ok(stages)
}

/// Runs the whole analysis of `p(Y|do(X))` from `inputs`.
///
/// Pruning preserves identifiability in both directions, so a negative
/// answer on the pruned problem is final. A negative answer after
/// clustering is final only when every clustering step is certified;
/// otherwise the pruned, unclustered problem is searched instead.
pub fn analyze(
    g: &CausalGraph,
    inputs: &[Distribution],
    q: &Query,
    opts: &PipelineOptions,
) -> Result<PipelineReport, PipelineError> {
    if inputs.is_empty() {
        return Err(PipelineError::NoInputs);
    }
    let pruned = if opts.prune {
        prune_all(g, inputs, q)?
    } else {
        q.validate(g).map_err(IdentifyError::from)?;
        Pruned::identity(g, inputs, q)
    };
    let removed = pruned.removed();
    let pq = pruned.query.clone();

    let stages = if !opts.cluster {
        Vec::new()
    } else if opts.clusters.is_empty() {
        auto_clusters(&pruned.graph, &pruned.inputs, &pq, opts.max_cluster_size)?
    } else {
        user_clusters(&pruned.graph, &pruned.inputs, &pq, &opts.clusters)?
    };

    let (final_graph, final_inputs) = match stages.last() {
        Some(s) => {
            let (gc, _) = apply_cluster(&s.graph, s.t, Some(&s.name))?;
            let (ic, _) = cluster_inputs(&s.graph, &s.inputs, s.t, &s.name)?;
            (gc, ic)
        }
        None => (pruned.graph.clone(), pruned.inputs.clone()),
    };
    let mut mappings: Vec<ClusterMapping> = Vec::with_capacity(stages.len());
    for s in &stages {
        mappings.push(cluster_inputs(&s.graph, &s.inputs, s.t, &s.name)?.1);
    }

    let reduced = identify(&final_graph, &final_inputs, &pq, &opts.budget)?;
    let pruning_note = if removed.is_empty() {
        String::new()
    } else {
        format!(
            "pruning removed {{{}}} without changing identifiability; ",
            removed.iter().cloned().collect::<Vec<_>>().join(",")
        )
    };
    let lift_all = |f: &Functional, through: &[ClusterMapping]| -> Functional {
        let mut f = f.clone();
        for m in through.iter().rev() {
            f = lift_clustered(&f, m);
        }
        lift_pruned(&f, &pruned)
    };
    let mut clusters: Vec<AppliedCluster> = mappings
        .iter()
        .map(|m| AppliedCluster {
            mapping: m.clone(),
            invariance: None,
        })
        .collect();
    let pruning = opts.prune.then(|| pruned.clone());

    if reduced.is_identified() {
        let f = lift_all(reduced.functional.as_ref().unwrap(), &mappings);
        let justification = if stages.is_empty() {
            format!("{pruning_note}identified directly")
        } else {
            format!("{pruning_note}identified after clustering; the lifted functional applies to the original graph")
        };
        return Ok(PipelineReport {
            verdict: Verdict::Identified,
            label: Verdict::Identified.label(),
            expression: Some(f.to_string()),
            functional: Some(f),
            justification,
            pruning,
            clusters,
            reduced,
            fallback: None,
        });
    }

    if stages.is_empty() {
        let (verdict, justification) = match reduced.status {
            IdStatus::NotIdentified => (
                Verdict::NotIdentified,
                format!("{pruning_note}search exhausted every derivable term"),
            ),
            _ => (
                Verdict::Undetermined,
                format!("{pruning_note}search stopped at its budget"),
            ),
        };
        return Ok(PipelineReport {
            verdict,
            label: verdict.label(),
            functional: None,
            expression: None,
            justification,
            pruning,
            clusters,
            reduced,
            fallback: None,
        });
    }

    // Each clustering step must carry the negative answer back one level.
    let mut certified = reduced.status == IdStatus::NotIdentified;
    if certified {
        for (s, c) in stages.iter().zip(clusters.iter_mut()) {
            let v = decide_invariance(&s.graph, &s.inputs, s.t, &s.name, &pq, IdStatus::NotIdentified)?;
            let ok = v.verdict == Invariance::NonIdentifiableInOriginal;
            c.invariance = Some(v);
            if !ok {
                certified = false;
                break;
            }
        }
    }
    if certified {
        return Ok(PipelineReport {
            verdict: Verdict::NotIdentified,
            label: Verdict::NotIdentified.label(),
            functional: None,
            expression: None,
            justification: format!(
                "{pruning_note}not identified after clustering, and clustering preserves non-identifiability here"
            ),
            pruning,
            clusters,
            reduced,
            fallback: None,
        });
    }

    let fallback = identify(&pruned.graph, &pruned.inputs, &pq, &opts.budget)?;
    let (verdict, functional, justification) = match fallback.status {
        IdStatus::Identified => {
            let f = lift_pruned(fallback.functional.as_ref().unwrap(), &pruned);
            (
                Verdict::Identified,
                Some(f),
                format!("{pruning_note}identified without clustering"),
            )
        }
        IdStatus::NotIdentified => (
            Verdict::NotIdentified,
            None,
            format!("{pruning_note}clustering was inconclusive; search on the unclustered problem exhausted every derivable term"),
        ),
        IdStatus::BudgetExceeded => (
            Verdict::Undetermined,
            None,
            format!("{pruning_note}clustering was inconclusive and the unclustered search stopped at its budget"),
        ),
    };
    Ok(PipelineReport {
        verdict,
        label: verdict.label(),
        expression: functional.as_ref().map(|f| f.to_string()),
        functional,
        justification,
        pruning,
        clusters,
        reduced,
        fallback: Some(fallback),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(g: &str, inputs: &[&str], q: &str) -> (CausalGraph, Vec<Distribution>, Query) {
        (
            CausalGraph::parse(g).unwrap(),
            inputs.iter().map(|s| s.parse().unwrap()).collect(),
            q.parse().unwrap(),
        )
    }

    #[test]
    fn front_door_through_pipeline() {
        let (g, i, q) = parse("X -> M\nM -> Y\nX <-> Y\nW -> Y", &["p(X,M,Y,W)"], "p(Y|do(X))");
        let r = analyze(&g, &i, &q, &PipelineOptions::default()).unwrap();
        assert_eq!(r.verdict, Verdict::Identified);
        assert!(r.functional.is_some());
    }

    #[test]
    fn bow_arc_is_final() {
        let (g, i, q) = parse("X -> Y\nX <-> Y", &["p(X,Y)"], "p(Y|do(X))");
        let r = analyze(&g, &i, &q, &PipelineOptions::default()).unwrap();
        assert_eq!(r.verdict, Verdict::NotIdentified);
        assert_eq!(r.label, NOT_IDENTIFIED_LABEL);
    }

    #[test]
    fn user_cluster_with_query_var_rejected() {
        let (g, i, q) = parse("X -> A\nA -> B\nB -> Y", &["p(X,A,B,Y)"], "p(Y|do(X))");
        let opts = PipelineOptions {
            clusters: vec![("T".into(), vec!["B".into(), "Y".into()])],
            ..PipelineOptions::default()
        };
        assert!(matches!(
            analyze(&g, &i, &q, &opts),
            Err(PipelineError::ClusterHasQueryVar(..))
        ));
    }

    #[test]
    fn empty_inputs_rejected() {
        let (g, _, q) = parse("X -> Y", &[], "p(Y|do(X))");
        assert!(matches!(
            analyze(&g, &[], &q, &PipelineOptions::default()),
            Err(PipelineError::NoInputs)
        ));
    }
}
