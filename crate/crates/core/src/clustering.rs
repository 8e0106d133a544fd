//! Transit clusters: sets of vertices that behave like a single vertex
//! towards the rest of the graph, and the clustered problem they induce.

use serde::Serialize;
use thiserror::Error;

use crate::audit::{failed, ConditionCheck};
use crate::distributions::{Distribution, VarSet};
use crate::graph::{CausalGraph, GraphError, VertexSet};

/// Refuse enumerations with more candidate subsets than this unless forced.
pub const MAX_ENUMERATION: u64 = 1 << 22;

#[derive(Debug, Error, Clone)]
pub enum ClusterError {
    #[error("graph is not connected")]
    Disconnected,
    #[error("`{}` is not a transit cluster: {}", .members.join(","), failed(.conditions))]
    NotTransit {
        members: Vec<String>,
        conditions: Vec<ConditionCheck>,
    },
    #[error("cluster enumeration needs {0} candidate subsets; pass force to proceed")]
    TooManyCandidates(u64),
    #[error("clusters overlap on `{0}`")]
    Overlap(String),
    #[error("cluster has no emitters")]
    NoEmitters,
    #[error("latent `{0}` is an emitter")]
    LatentEmitter(String),
    #[error("input {index} ({input}) is incompatible with the cluster: {reason}")]
    Incompatible {
        index: usize,
        input: String,
        reason: String,
    },
    #[error("no input contains all emitters of the cluster")]
    NoEmitterInput,
    #[error("cluster must be non-empty")]
    Empty,
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Receivers, emitters and the outcome of every defining condition.
#[derive(Debug, Clone, Serialize)]
pub struct ClusterCheck {
    pub is_cluster: bool,
    pub receivers: VarSet,
    pub emitters: VarSet,
    pub conditions: Vec<ConditionCheck>,
}

/// Members of `t` with a parent outside `t`, latent parents included.
pub fn receivers(g: &CausalGraph, t: VertexSet) -> VertexSet {
    t.iter().filter(|&v| !(g.parents(v) - t).is_empty()).collect()
}

/// Members of `t` with a child outside `t`.
pub fn emitters(g: &CausalGraph, t: VertexSet) -> VertexSet {
    t.iter().filter(|&v| !(g.children(v) - t).is_empty()).collect()
}

/// Checks the defining conditions without requiring `g` to be connected.
pub fn transit_conditions(g: &CausalGraph, t: VertexSet) -> ClusterCheck {
    let rec = receivers(g, t);
    let em = emitters(g, t);
    let names = |s: VertexSet| g.sorted_names(s).join(",");
    let mut conditions = Vec::new();

    let mut pa_sets = rec.iter().map(|r| g.parents(r) - t);
    let first = pa_sets.next();
    let same_pa = pa_sets.all(|p| Some(p) == first);
    conditions.push(ConditionCheck::new(
        "a",
        same_pa,
        if same_pa {
            "receivers share their external parents".to_string()
        } else {
            format!("receivers {} have different external parents", names(rec))
        },
    ));

    let mut ch_sets = em.iter().map(|e| g.children(e) - t);
    let first = ch_sets.next();
    let same_ch = ch_sets.all(|c| Some(c) == first);
    conditions.push(ConditionCheck::new(
        "b",
        same_ch,
        if same_ch {
            "emitters share their external children".to_string()
        } else {
            format!("emitters {} have different external children", names(em))
        },
    ));

    // With incoming edges of receivers and outgoing edges of emitters cut,
    // nothing links the cluster to the outside, so components inside t are
    // what matters.
    let cut = g.edge_cut(rec, em);
    let anchors = rec | em;
    let mut stranded = VertexSet::EMPTY;
    for comp in cut.components(t) {
        if comp.is_disjoint(anchors) {
            stranded |= comp;
        }
    }
    conditions.push(ConditionCheck::new(
        "c",
        stranded.is_empty(),
        if stranded.is_empty() {
            "every member is linked to a receiver or emitter".to_string()
        } else {
            format!("{} linked to no receiver or emitter", names(stranded))
        },
    ));

    let bad_r: VertexSet = if em.is_empty() {
        VertexSet::EMPTY
    } else {
        rec.iter()
            .filter(|&r| g.de_plus(VertexSet::singleton(r)).is_disjoint(em))
            .collect()
    };
    conditions.push(ConditionCheck::new(
        "d",
        bad_r.is_empty(),
        if bad_r.is_empty() {
            "every receiver reaches an emitter".to_string()
        } else {
            format!("receivers {} reach no emitter", names(bad_r))
        },
    ));

    let bad_e: VertexSet = if rec.is_empty() {
        VertexSet::EMPTY
    } else {
        em.iter()
            .filter(|&e| g.an_plus(VertexSet::singleton(e)).is_disjoint(rec))
            .collect()
    };
    conditions.push(ConditionCheck::new(
        "e",
        bad_e.is_empty(),
        if bad_e.is_empty() {
            "every emitter is reached from a receiver".to_string()
        } else {
            format!("emitters {} are reached from no receiver", names(bad_e))
        },
    ));

    ClusterCheck {
        is_cluster: !t.is_empty() && conditions.iter().all(|c| c.holds),
        receivers: g.names_of(rec),
        emitters: g.names_of(em),
        conditions,
    }
}

/// Checks whether `t` is a transit cluster of the connected graph `g`.
pub fn is_transit_cluster(g: &CausalGraph, t: VertexSet) -> Result<ClusterCheck, ClusterError> {
    if t.is_empty() {
        return Err(ClusterError::Empty);
    }
    if let Some(v) = (t - g.vertices()).first() {
        return Err(GraphError::UnknownVertex(format!("#{v}")).into());
    }
    if !g.is_connected() {
        return Err(ClusterError::Disconnected);
    }
    Ok(transit_conditions(g, t))
}

fn binomial(n: u64, k: u64) -> u64 {
    (0..k).fold(1u64, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

/// All transit clusters with between two and `max_size` members.
///
/// Candidates range over observed and latent vertices. Refuses when more
/// than [`MAX_ENUMERATION`] subsets would be examined unless `force` is set.
pub fn enumerate_transit_clusters(
    g: &CausalGraph,
    max_size: usize,
    force: bool,
) -> Result<Vec<VertexSet>, ClusterError> {
    if !g.is_connected() {
        return Err(ClusterError::Disconnected);
    }
    let verts: Vec<usize> = g.vertices().iter().collect();
    let n = verts.len();
    let max_size = max_size.min(n);
    let total: u64 = (2..=max_size as u64).map(|k| binomial(n as u64, k)).sum();
    if total > MAX_ENUMERATION && !force {
        return Err(ClusterError::TooManyCandidates(total));
    }
    let mut out = Vec::new();
    for k in 2..=max_size {
        let mut idx: Vec<usize> = (0..k).collect();
        loop {
            let t: VertexSet = idx.iter().map(|&i| verts[i]).collect();
            if transit_conditions(g, t).is_cluster {
                out.push(t);
            }
            // Next k-combination in lexicographic order.
            let mut i = k;
            while i > 0 && idx[i - 1] == n - k + i - 1 {
                i -= 1;
            }
            if i == 0 {
                break;
            }
            idx[i - 1] += 1;
            for j in i..k {
                idx[j] = idx[j - 1] + 1;
            }
        }
    }
    out.sort_by_cached_key(|t| g.sorted_names(*t));
    Ok(out)
}

/// True when some member is both a receiver and an emitter.
pub fn check_single_layer(g: &CausalGraph, t: VertexSet) -> bool {
    receivers(g, t).intersects(emitters(g, t))
}

/// Replaces the transit cluster `t` by one observed vertex whose parents
/// are the external parents of `t` and whose children are the external
/// children of `t`. Latents outside `t` are kept even if they are left
/// with a single child. Returns the new graph and the new vertex.
pub fn apply_cluster(g: &CausalGraph, t: VertexSet, name: Option<&str>) -> Result<(CausalGraph, usize), ClusterError> {
    let check = is_transit_cluster(g, t)?;
    if !check.is_cluster {
        return Err(ClusterError::NotTransit {
            members: g.sorted_names(t),
            conditions: check.conditions,
        });
    }
    let name = match name {
        Some(n) => n.to_string(),
        None => g.fresh_name("T"),
    };
    let pa = g.parents_of(t) - t;
    let ch = g.children_of(t) - t;
    let mut out = g.restrict_to(g.vertices() - t);
    let v = out.push_vertex(&name, pa, ch)?;
    out.topological_order()?;
    Ok((out, v))
}

/// Where the cluster sits in one clustered input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    Measured,
    Intervened,
    Conditioned,
}

#[derive(Debug, Clone, Serialize)]
pub struct InputClusterInfo {
    /// Role of the cluster vertex, or `None` when the input avoids it.
    pub slot: Option<Slot>,
    /// Cluster members the original input mentions.
    pub present: VarSet,
}

/// Everything needed to map results on the clustered problem back.
#[derive(Debug, Clone, Serialize)]
pub struct ClusterMapping {
    pub name: String,
    pub members: VarSet,
    pub receivers: VarSet,
    pub emitters: VarSet,
    pub per_input: Vec<InputClusterInfo>,
}

/// Rewrites inputs for the clustered graph: any role that mentions a
/// cluster member mentions the cluster vertex instead.
///
/// Each input must either avoid the cluster or hold all of its emitters in
/// exactly one role and no other member elsewhere; at least one input must
/// hold the emitters. No emitter may be latent.
pub fn cluster_inputs(
    g: &CausalGraph,
    inputs: &[Distribution],
    t: VertexSet,
    t_name: &str,
) -> Result<(Vec<Distribution>, ClusterMapping), ClusterError> {
    let em = emitters(g, t);
    if let Some(u) = (em & g.latents()).first() {
        return Err(ClusterError::LatentEmitter(g.name(u).to_string()));
    }
    if em.is_empty() {
        return Err(ClusterError::NoEmitters);
    }
    let members = g.names_of(t);
    let em_names = g.names_of(em);
    let mut out = Vec::with_capacity(inputs.len());
    let mut per_input = Vec::with_capacity(inputs.len());
    let mut any_holder = false;
    for (i, d) in inputs.iter().enumerate() {
        let touch = |s: &VarSet| s.iter().any(|v| members.contains(v));
        let (ta, tb, tc) = (touch(&d.measured), touch(&d.intervened), touch(&d.conditioned));
        let holds = |s: &VarSet| em_names.is_subset(s);
        let options = [
            (holds(&d.measured) && !tb && !tc, Some(Slot::Measured)),
            (holds(&d.intervened) && !ta && !tc, Some(Slot::Intervened)),
            (holds(&d.conditioned) && !ta && !tb, Some(Slot::Conditioned)),
            (!ta && !tb && !tc, None),
        ];
        let matching: Vec<Option<Slot>> = options.iter().filter(|o| o.0).map(|o| o.1).collect();
        assert!(matching.len() <= 1, "cluster input cases overlap");
        let Some(&slot) = matching.first() else {
            let reason = if ta as u8 + tb as u8 + tc as u8 > 1 {
                "cluster members appear in more than one role".to_string()
            } else {
                "input mentions some cluster members but not all emitters".to_string()
            };
            return Err(ClusterError::Incompatible {
                index: i,
                input: d.to_string(),
                reason,
            });
        };
        any_holder |= slot.is_some();
        let rewrite = |s: &VarSet| -> VarSet {
            if s.iter().any(|v| members.contains(v)) {
                let mut r: VarSet = s.difference(&members).cloned().collect();
                r.insert(t_name.to_string());
                r
            } else {
                s.clone()
            }
        };
        out.push(Distribution {
            measured: rewrite(&d.measured),
            intervened: rewrite(&d.intervened),
            conditioned: rewrite(&d.conditioned),
        });
        per_input.push(InputClusterInfo {
            slot,
            present: d.vars().intersection(&members).cloned().collect(),
        });
    }
    if !any_holder {
        return Err(ClusterError::NoEmitterInput);
    }
    Ok((
        out,
        ClusterMapping {
            name: t_name.to_string(),
            members,
            receivers: g.names_of(receivers(g, t)),
            emitters: em_names,
            per_input,
        },
    ))
}
