//! Whether clustering preserves the answer to an identification question.
//!
//! A positive answer on the clustered problem always carries over. A
//! negative one carries over when the cluster has a member that is both a
//! receiver and an emitter, or when [`verify_inputs`] accepts the clustered
//! inputs. Otherwise the question stays open.

use serde::Serialize;
use thiserror::Error;

use crate::clustering::{apply_cluster, check_single_layer, cluster_inputs, ClusterError};
use crate::distributions::{Distribution, Query};
use crate::graph::{CausalGraph, GraphError, VertexSet};
use crate::identify::IdStatus;

#[derive(Debug, Error)]
pub enum InvarianceError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error("cluster contains query variable `{0}`")]
    QueryInCluster(String),
}

/// How one input fared in [`verify_inputs`].
#[derive(Debug, Clone, Serialize)]
pub struct InputAudit {
    pub input: usize,
    pub distribution: String,
    /// Line of the check that settled this input.
    pub line: u8,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyTrace {
    pub result: bool,
    /// Line of the return statement that produced `result`.
    pub returned_at: u8,
    pub audits: Vec<InputAudit>,
}

struct Sets {
    a: VertexSet,
    b: VertexSet,
    c: VertexSet,
}

/// Checks, on the clustered graph `g`, that the clustered inputs carry no
/// information that the original inputs could not have carried.
///
/// `t` names the cluster vertex of `g`; `inputs` are the clustered inputs.
pub fn verify_inputs(g: &CausalGraph, inputs: &[Distribution], t: &str) -> Result<VerifyTrace, GraphError> {
    let tv = g.id(t).ok_or_else(|| GraphError::UnknownVertex(t.to_string()))?;
    let ts = VertexSet::singleton(tv);
    let mut audits = Vec::new();
    if g.parents(tv).is_empty() {
        return Ok(VerifyTrace {
            result: true,
            returned_at: 2,
            audits,
        });
    }
    let sets: Vec<Sets> = inputs
        .iter()
        .map(|d| {
            Ok(Sets {
                a: g.set_of(&d.measured)?,
                b: g.set_of(&d.intervened)?,
                c: g.set_of(&d.conditioned)?,
            })
        })
        .collect::<Result<_, GraphError>>()?;
    let de_t = g.descendants(ts);
    let names = |s: VertexSet| g.sorted_names(s).join(",");

    for (i, (s, d)) in sets.iter().zip(inputs).enumerate() {
        let audit = |line: u8, passed: bool, detail: String| InputAudit {
            input: i,
            distribution: d.to_string(),
            line,
            passed,
            detail,
        };
        let (a, b, c) = (s.a, s.b, s.c);
        if (a | b | c).contains(tv) {
            if c.intersects(de_t) {
                audits.push(audit(
                    5,
                    false,
                    format!("conditions on descendants {} of {t}", names(c & de_t)),
                ));
                return Ok(VerifyTrace {
                    result: false,
                    returned_at: 5,
                    audits,
                });
            }
            if a.contains(tv) {
                let dd = de_t & a;
                let rest = a - dd - ts;
                if g.dsep_cut(b, ts, dd, ts, b | c | rest) {
                    audits.push(audit(7, true, format!("{{{}}} separated from {t}", names(dd))));
                    continue;
                }
                audits.push(audit(7, false, format!("{{{}}} not separated from {t}", names(dd))));
            } else if b.contains(tv) {
                audits.push(audit(8, true, format!("{t} is intervened on")));
                continue;
            } else {
                let rest_c = c - ts;
                if g.dsep_cut(b, ts, a, ts, b | rest_c) {
                    audits.push(audit(9, true, format!("measured set separated from {t}")));
                    continue;
                }
                audits.push(audit(9, false, format!("measured set not separated from {t}")));
            }
            let line = *audits.last().map(|x| &x.line).unwrap();
            return Ok(VerifyTrace {
                result: false,
                returned_at: line,
                audits,
            });
        }

        // The input does not mention the cluster.
        let has_joint = sets
            .iter()
            .any(|o| o.a.contains(tv) && o.b.is_empty() && o.c.is_empty());
        if has_joint
            && g.dsep_cut(b, ts, a, ts, b | c)
            && g.dsep_cut(b, VertexSet::EMPTY, ts, c, b)
            && g.dsep_cut(b, VertexSet::EMPTY, ts, b, VertexSet::EMPTY)
        {
            audits.push(audit(
                12,
                true,
                format!("{t} independent of the input given an observational joint"),
            ));
            continue;
        }
        let anc_c = g.ancestors_cut(b, c);
        let cut = if anc_c.contains(tv) { b } else { b | ts };
        if g.dsep_cut(cut, VertexSet::EMPTY, a, ts, b | c) {
            audits.push(audit(
                14,
                true,
                format!("measured set unaffected by intervening on {t}"),
            ));
            continue;
        }
        let partner = sets
            .iter()
            .position(|o| a.is_subset(o.a) && o.b == (b | ts) && o.c == c);
        if let Some(k) = partner {
            audits.push(audit(15, true, format!("input {k} adds an intervention on {t}")));
            continue;
        }
        audits.push(audit(15, false, format!("no condition covers {t}")));
        return Ok(VerifyTrace {
            result: false,
            returned_at: 16,
            audits,
        });
    }
    Ok(VerifyTrace {
        result: true,
        returned_at: 17,
        audits,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Invariance {
    IdentifiableInOriginal,
    NonIdentifiableInOriginal,
    Undetermined,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InvarianceBasis {
    /// The clustered problem was identified.
    ClusteredIdentified,
    /// A member is both a receiver and an emitter.
    SingleLayer,
    /// The clustered inputs passed [`verify_inputs`].
    InputsVerified,
    /// [`verify_inputs`] rejected the clustered inputs.
    InputsNotVerified,
    /// The clustered search ran out of budget.
    SearchIncomplete,
}

#[derive(Debug, Clone, Serialize)]
pub struct InvarianceVerdict {
    pub verdict: Invariance,
    pub basis: InvarianceBasis,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<VerifyTrace>,
}

/// Combines the clustered search outcome with the sufficient conditions
/// for invariance. `g` and `inputs` describe the unclustered problem.
pub fn decide_invariance(
    g: &CausalGraph,
    inputs: &[Distribution],
    t: VertexSet,
    t_name: &str,
    q: &Query,
    clustered: IdStatus,
) -> Result<InvarianceVerdict, InvarianceError> {
    for v in q.outcome.iter().chain(&q.treatment) {
        if g.id(v).is_some_and(|id| t.contains(id)) {
            return Err(InvarianceError::QueryInCluster(v.clone()));
        }
    }
    let (clustered_inputs, _) = cluster_inputs(g, inputs, t, t_name)?;
    let verdict = |verdict, basis, trace| Ok(InvarianceVerdict { verdict, basis, trace });
    match clustered {
        IdStatus::Identified => verdict(
            Invariance::IdentifiableInOriginal,
            InvarianceBasis::ClusteredIdentified,
            None,
        ),
        IdStatus::BudgetExceeded => verdict(Invariance::Undetermined, InvarianceBasis::SearchIncomplete, None),
        IdStatus::NotIdentified => {
            if check_single_layer(g, t) {
                return verdict(
                    Invariance::NonIdentifiableInOriginal,
                    InvarianceBasis::SingleLayer,
                    None,
                );
            }
            let (gc, _) = apply_cluster(g, t, Some(t_name))?;
            let trace = verify_inputs(&gc, &clustered_inputs, t_name)?;
            if trace.result {
                verdict(
                    Invariance::NonIdentifiableInOriginal,
                    InvarianceBasis::InputsVerified,
                    Some(trace),
                )
            } else {
                verdict(
                    Invariance::Undetermined,
                    InvarianceBasis::InputsNotVerified,
                    Some(trace),
                )
            }
        }
    }
}
