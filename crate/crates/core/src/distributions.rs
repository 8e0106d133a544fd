//! Input distributions `p(A | do(B), C)` and causal queries `p(Y | do(X))`.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{CausalGraph, GraphError, VertexSet};

pub type VarSet = BTreeSet<String>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DistributionError {
    #[error("cannot parse `{text}`: {message}")]
    Syntax { text: String, message: String },
    #[error("`{0}` has an empty measured set")]
    EmptyMeasured(String),
    #[error("`{dist}`: variable `{var}` appears in more than one role")]
    Overlap { dist: String, var: String },
    #[error("`{dist}`: variable `{var}` is not an observed vertex")]
    NotObserved { dist: String, var: String },
    #[error("query may not condition on observations: `{0}`")]
    ConditionalQuery(String),
}

/// `p(A | do(B), C)`: measured `A`, intervened `B`, conditioned `C`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Distribution {
    pub measured: VarSet,
    #[serde(default)]
    pub intervened: VarSet,
    #[serde(default)]
    pub conditioned: VarSet,
}

/// Bitmask form of a distribution against a particular graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Term {
    pub a: VertexSet,
    pub b: VertexSet,
    pub c: VertexSet,
}

impl Term {
    pub fn vars(&self) -> VertexSet {
        self.a | self.b | self.c
    }
}

fn set<I: IntoIterator<Item = S>, S: Into<String>>(it: I) -> VarSet {
    it.into_iter().map(Into::into).collect()
}

impl Distribution {
    pub fn new<I, J, K, S>(measured: I, intervened: J, conditioned: K) -> Self
    where
        I: IntoIterator<Item = S>,
        J: IntoIterator<Item = S>,
        K: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Distribution {
            measured: set(measured),
            intervened: set(intervened),
            conditioned: set(conditioned),
        }
    }

    pub fn vars(&self) -> VarSet {
        self.measured
            .iter()
            .chain(&self.intervened)
            .chain(&self.conditioned)
            .cloned()
            .collect()
    }

    pub fn contains(&self, v: &str) -> bool {
        self.measured.contains(v) || self.intervened.contains(v) || self.conditioned.contains(v)
    }

    /// Checks roles are disjoint, `A` is non-empty and every variable is an
    /// observed vertex of `g`.
    pub fn validate(&self, g: &CausalGraph) -> Result<(), DistributionError> {
        let text = self.to_string();
        if self.measured.is_empty() {
            return Err(DistributionError::EmptyMeasured(text));
        }
        for (p, q) in [
            (&self.measured, &self.intervened),
            (&self.measured, &self.conditioned),
            (&self.intervened, &self.conditioned),
        ] {
            if let Some(v) = p.intersection(q).next() {
                return Err(DistributionError::Overlap {
                    dist: text,
                    var: v.clone(),
                });
            }
        }
        for v in self.vars() {
            match g.id(&v) {
                Some(id) if !g.is_latent(id) => {}
                _ => return Err(DistributionError::NotObserved { dist: text, var: v }),
            }
        }
        Ok(())
    }

    pub fn to_term(&self, g: &CausalGraph) -> Result<Term, GraphError> {
        Ok(Term {
            a: g.set_of(&self.measured)?,
            b: g.set_of(&self.intervened)?,
            c: g.set_of(&self.conditioned)?,
        })
    }

    pub fn from_term(g: &CausalGraph, t: &Term) -> Self {
        Distribution {
            measured: g.names_of(t.a),
            intervened: g.names_of(t.b),
            conditioned: g.names_of(t.c),
        }
    }
}

fn render(f: &mut fmt::Formatter<'_>, a: &VarSet, b: &VarSet, c: &VarSet) -> fmt::Result {
    let join = |s: &VarSet| s.iter().cloned().collect::<Vec<_>>().join(",");
    write!(f, "p({}", join(a))?;
    if b.is_empty() && c.is_empty() {
        return f.write_str(")");
    }
    f.write_str("|")?;
    if !b.is_empty() {
        write!(f, "do({})", join(b))?;
        if !c.is_empty() {
            f.write_str(",")?;
        }
    }
    write!(f, "{})", join(c))
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        render(f, &self.measured, &self.intervened, &self.conditioned)
    }
}

fn split_top(s: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, ch) in s.char_indices() {
        match ch {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                out.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(&s[start..]);
    out
}

fn names(list: &str, whole: &str) -> Result<Vec<String>, DistributionError> {
    list.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            if crate::graph::is_identifier(t) {
                Ok(t.to_string())
            } else {
                Err(DistributionError::Syntax {
                    text: whole.to_string(),
                    message: format!("invalid variable `{t}`"),
                })
            }
        })
        .collect()
}

impl FromStr for Distribution {
    type Err = DistributionError;

    /// Accepts `p(a,b | do(c), d)`; the `do(...)` group may sit anywhere
    /// after the bar.
    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let syntax = |m: &str| DistributionError::Syntax {
            text: text.to_string(),
            message: m.to_string(),
        };
        let t = text.trim();
        let body = t
            .strip_prefix("p(")
            .or_else(|| t.strip_prefix("P("))
            .and_then(|r| r.strip_suffix(')'))
            .ok_or_else(|| syntax("expected p(...)"))?;
        let (lhs, rhs) = match body.split_once('|') {
            Some((l, r)) => (l, r),
            None => (body, ""),
        };
        let measured = names(lhs, text)?;
        let mut intervened = Vec::new();
        let mut conditioned = Vec::new();
        for item in split_top(rhs) {
            let item = item.trim();
            if item.is_empty() {
                continue;
            }
            if let Some(inner) = item.strip_prefix("do(").and_then(|r| r.strip_suffix(')')) {
                intervened.extend(names(inner, text)?);
            } else if item.contains('(') || item.contains(')') {
                return Err(syntax("unbalanced parentheses"));
            } else {
                conditioned.extend(names(item, text)?);
            }
        }
        let d = Distribution::new(measured, intervened, conditioned);
        if d.measured.is_empty() {
            return Err(DistributionError::EmptyMeasured(text.to_string()));
        }
        Ok(d)
    }
}

/// The causal effect `p(Y | do(X))`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Query {
    pub outcome: VarSet,
    #[serde(default)]
    pub treatment: VarSet,
}

impl Query {
    pub fn new<I, J, S>(outcome: I, treatment: J) -> Self
    where
        I: IntoIterator<Item = S>,
        J: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Query {
            outcome: set(outcome),
            treatment: set(treatment),
        }
    }

    pub fn as_distribution(&self) -> Distribution {
        Distribution {
            measured: self.outcome.clone(),
            intervened: self.treatment.clone(),
            conditioned: VarSet::new(),
        }
    }

    pub fn validate(&self, g: &CausalGraph) -> Result<(), DistributionError> {
        self.as_distribution().validate(g)
    }

    pub fn vars(&self) -> VarSet {
        self.outcome.union(&self.treatment).cloned().collect()
    }
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        render(f, &self.outcome, &self.treatment, &VarSet::new())
    }
}

impl FromStr for Query {
    type Err = DistributionError;
    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let d: Distribution = text.parse()?;
        if !d.conditioned.is_empty() {
            return Err(DistributionError::ConditionalQuery(text.to_string()));
        }
        Ok(Query {
            outcome: d.measured,
            treatment: d.intervened,
        })
    }
}

/// Removes exact duplicates, keeping first occurrences, with a warning.
pub fn dedup_inputs(inputs: Vec<Distribution>) -> Vec<Distribution> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(inputs.len());
    for d in inputs {
        if seen.insert(d.clone()) {
            out.push(d);
        } else {
            log::warn!("dropping duplicate input {d}");
        }
    }
    out
}

/// `I[W]`: inputs whose measured set meets `W` and whose intervened and
/// conditioned sets lie inside `W`, with measured sets cut down to `W`.
/// Each kept entry carries the index of the input it came from.
pub fn restrict_inputs(inputs: &[Distribution], keep: &VarSet) -> Vec<(usize, Distribution)> {
    inputs
        .iter()
        .enumerate()
        .filter(|(_, d)| {
            d.measured.iter().any(|v| keep.contains(v)) && d.intervened.is_subset(keep) && d.conditioned.is_subset(keep)
        })
        .map(|(i, d)| {
            (
                i,
                Distribution {
                    measured: d.measured.intersection(keep).cloned().collect(),
                    intervened: d.intervened.clone(),
                    conditioned: d.conditioned.clone(),
                },
            )
        })
        .collect()
}
