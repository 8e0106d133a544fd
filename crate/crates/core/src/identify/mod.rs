//! Identification of causal effects from a collection of input
//! distributions by exhaustive derivation search.

pub mod functional;
pub mod lift;
pub mod scm;
mod search;

use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::distributions::{Distribution, DistributionError, Query, Term};
use crate::graph::{CausalGraph, GraphError};

pub use functional::{Functional, FunctionalParseError};
pub use lift::{lift_clustered, lift_pruned};
pub use scm::{DiscreteScm, EffectTable, ScmError};
pub use search::{Exhaustion, RuleMove, SearchBudget, TraceLine};

#[derive(Debug, Error)]
pub enum IdentifyError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Distribution(#[from] DistributionError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IdStatus {
    Identified,
    /// Every derivable term was generated without reaching the target.
    NotIdentified,
    /// The search stopped early; nothing can be concluded.
    BudgetExceeded,
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentifyResult {
    pub status: IdStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub functional: Option<Functional>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expression: Option<String>,
    /// Derivation depth of the target.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub depth: Option<u32>,
    pub terms_explored: usize,
    pub exhaustion: Option<Exhaustion>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<TraceLine>,
    pub elapsed_ms: f64,
}

impl IdentifyResult {
    pub fn is_identified(&self) -> bool {
        self.status == IdStatus::Identified
    }
}

/// Searches for a derivation of `p(Y | do(X))` from `inputs` in `g`.
///
/// A negative answer is relative to the implemented rules and to the
/// variables that occur in the inputs and the query.
pub fn identify(
    g: &CausalGraph,
    inputs: &[Distribution],
    q: &Query,
    budget: &SearchBudget,
) -> Result<IdentifyResult, IdentifyError> {
    let start = Instant::now();
    q.validate(g)?;
    let mut terms: Vec<Term> = Vec::with_capacity(inputs.len());
    for d in inputs {
        d.validate(g)?;
        terms.push(d.to_term(g)?);
    }
    let target = search::target_of(g, q)?;
    let mut s = search::Search::new(g, &terms, target, budget.clone());
    let out = s.run();
    let elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(match out.found {
        Some(id) => {
            let f = s.functional(id, inputs);
            let depth = s.node_depth(id);
            IdentifyResult {
                status: IdStatus::Identified,
                expression: Some(f.to_string()),
                functional: Some(f),
                depth: Some(depth),
                terms_explored: out.terms,
                exhaustion: None,
                trace: s.trace(id),
                elapsed_ms,
            }
        }
        None => IdentifyResult {
            status: if out.exhaustion == Exhaustion::Complete {
                IdStatus::NotIdentified
            } else {
                IdStatus::BudgetExceeded
            },
            functional: None,
            expression: None,
            depth: None,
            terms_explored: out.terms,
            exhaustion: Some(out.exhaustion),
            trace: Vec::new(),
            elapsed_ms,
        },
    })
}
