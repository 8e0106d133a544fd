//! Problem files: a graph, the available inputs and a query in one text.
//!
//! ```text
//! # comments start with '#'
//! [graph]
//! X -> Z
//! Z -> Y
//! X <-> Y
//!
//! [inputs]
//! p(X,Z,Y)
//!
//! [query]
//! p(Y|do(X))
//! ```
//!
//! The `[graph]` section uses the edge-list syntax of [`CausalGraph::parse`].
//! `[inputs]` holds one distribution `p(A|do(B),C)` per line and `[query]`
//! exactly one `p(Y|do(X))`.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::distributions::{Distribution, DistributionError, Query};
use crate::graph::{CausalGraph, GraphError};

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("missing section [{0}]")]
    MissingSection(&'static str),
    #[error("no inputs given")]
    NoInputs,
    #[error("line {line}: {source}")]
    Graph { line: usize, source: GraphError },
    #[error("line {line}: {source}")]
    Distribution { line: usize, source: DistributionError },
    #[error(transparent)]
    Invalid(#[from] DistributionError),
}

#[derive(Debug, Clone)]
pub struct Problem {
    pub graph: CausalGraph,
    pub inputs: Vec<Distribution>,
    pub query: Query,
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    Graph,
    Inputs,
    Query,
}

impl Problem {
    pub fn parse(text: &str) -> Result<Self, ProblemError> {
        let mut section = None;
        let mut graph_lines: Vec<(usize, &str)> = Vec::new();
        let mut inputs = Vec::new();
        let mut query: Option<Query> = None;
        let mut seen = [false; 3];
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let s = match name.trim() {
                    "graph" => Section::Graph,
                    "inputs" => Section::Inputs,
                    "query" => Section::Query,
                    other => {
                        return Err(ProblemError::Syntax {
                            line: line_no,
                            message: format!("unknown section [{other}]"),
                        })
                    }
                };
                if std::mem::replace(&mut seen[s as usize], true) {
                    return Err(ProblemError::Syntax {
                        line: line_no,
                        message: format!("section [{}] repeated", name.trim()),
                    });
                }
                section = Some(s);
                continue;
            }
            match section {
                None => {
                    return Err(ProblemError::Syntax {
                        line: line_no,
                        message: "content before the first section".into(),
                    })
                }
                Some(Section::Graph) => graph_lines.push((line_no, line)),
                Some(Section::Inputs) => inputs.push(
                    line.parse::<Distribution>()
                        .map_err(|source| ProblemError::Distribution { line: line_no, source })?,
                ),
                Some(Section::Query) => {
                    if query.is_some() {
                        return Err(ProblemError::Syntax {
                            line: line_no,
                            message: "only one query allowed".into(),
                        });
                    }
                    query = Some(
                        line.parse::<Query>()
                            .map_err(|source| ProblemError::Distribution { line: line_no, source })?,
                    );
                }
            }
        }
        if !seen[Section::Graph as usize] {
            return Err(ProblemError::MissingSection("graph"));
        }
        let query = query.ok_or(ProblemError::MissingSection("query"))?;
        if inputs.is_empty() {
            return Err(ProblemError::NoInputs);
        }

        let graph_text: String = graph_lines.iter().map(|(_, l)| format!("{l}\n")).collect();
        let graph = CausalGraph::parse(&graph_text).map_err(|e| match e {
            GraphError::Parse { line, message } => ProblemError::Syntax {
                line: graph_lines.get(line.wrapping_sub(1)).map_or(line, |x| x.0),
                message,
            },
            other => ProblemError::Graph {
                line: graph_lines.first().map_or(0, |x| x.0),
                source: other,
            },
        })?;
        query.validate(&graph)?;
        for d in &inputs {
            d.validate(&graph)?;
        }
        Ok(Problem { graph, inputs, query })
    }

    pub fn to_text(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "[graph]")?;
        write!(f, "{}", self.graph.to_text())?;
        writeln!(f, "\n[inputs]")?;
        for d in &self.inputs {
            writeln!(f, "{d}")?;
        }
        writeln!(f, "\n[query]")?;
        writeln!(f, "{}", self.query)
    }
}

impl FromStr for Problem {
    type Err = ProblemError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Problem::parse(s)
    }
}
