use std::collections::BTreeSet;

use super::{CausalGraph, GraphError, VertexSet};

enum Stmt {
    Edge(String, String),
    Bidirected(String, String),
    Latent(String, Vec<String>),
    Vertex(String),
}

pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn ident(s: &str, line: usize) -> Result<String, GraphError> {
    let s = s.trim();
    if !is_identifier(s) || s == "latent" {
        return Err(GraphError::Parse {
            line,
            message: format!("invalid vertex name `{s}`"),
        });
    }
    Ok(s.to_string())
}

fn statement(raw: &str, line: usize) -> Result<Stmt, GraphError> {
    if let Some(rest) = raw.strip_prefix("latent ") {
        let (name, kids) = rest.split_once(':').ok_or_else(|| GraphError::Parse {
            line,
            message: "expected `latent NAME : CHILD CHILD ...`".into(),
        })?;
        let kids = kids
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(|t| ident(t, line))
            .collect::<Result<Vec<_>, _>>()?;
        return Ok(Stmt::Latent(ident(name, line)?, kids));
    }
    if let Some((a, b)) = raw.split_once("<->") {
        return Ok(Stmt::Bidirected(ident(a, line)?, ident(b, line)?));
    }
    if let Some((a, b)) = raw.split_once("->") {
        return Ok(Stmt::Edge(ident(a, line)?, ident(b, line)?));
    }
    Ok(Stmt::Vertex(ident(raw, line)?))
}

pub(crate) fn parse_graph(text: &str) -> Result<CausalGraph, GraphError> {
    let mut stmts = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let raw = raw.split('#').next().unwrap_or("").trim();
        if raw.is_empty() {
            continue;
        }
        stmts.push((i + 1, statement(raw, i + 1)?));
    }

    // First pass: kinds of every named vertex, in order of appearance.
    let mut observed: Vec<String> = Vec::new();
    let mut latent_names: BTreeSet<String> = BTreeSet::new();
    let mut seen_obs: BTreeSet<String> = BTreeSet::new();
    let mut note_obs = |n: &String, obs: &mut Vec<String>| {
        if seen_obs.insert(n.clone()) {
            obs.push(n.clone());
        }
    };
    for (line, st) in &stmts {
        match st {
            Stmt::Edge(a, b) | Stmt::Bidirected(a, b) => {
                if a == b {
                    return Err(GraphError::Parse {
                        line: *line,
                        message: format!("self loop on `{a}`"),
                    });
                }
                note_obs(a, &mut observed);
                note_obs(b, &mut observed);
            }
            Stmt::Vertex(a) => note_obs(a, &mut observed),
            Stmt::Latent(u, kids) => {
                if !latent_names.insert(u.clone()) {
                    return Err(GraphError::DuplicateName(u.clone()));
                }
                for k in kids {
                    note_obs(k, &mut observed);
                }
            }
        }
    }
    for u in &latent_names {
        if observed.contains(u) {
            return Err(GraphError::KindConflict(u.clone()));
        }
    }

    let mut g = CausalGraph::new();
    for n in &observed {
        g.add_observed(n)?;
    }
    let mut bidirected: BTreeSet<(usize, usize)> = BTreeSet::new();
    let mut pending_latents = Vec::new();
    for (line, st) in &stmts {
        match st {
            Stmt::Edge(a, b) => {
                let (a, b) = (g.index[a], g.index[b]);
                if !g.children[a].contains(b) {
                    g.add_edge(a, b)?;
                }
            }
            Stmt::Bidirected(a, b) => {
                let (a, b) = (g.index[a], g.index[b]);
                bidirected.insert((a.min(b), a.max(b)));
            }
            Stmt::Latent(u, kids) => {
                let set: VertexSet = kids.iter().map(|k| g.index[k]).collect();
                if set.len() < 2 {
                    return Err(GraphError::Parse {
                        line: *line,
                        message: format!("latent `{u}` needs at least two distinct children"),
                    });
                }
                pending_latents.push((u.clone(), set));
            }
            Stmt::Vertex(_) => {}
        }
    }
    for (u, set) in pending_latents {
        g.add_latent(&u, set)?;
    }
    for (a, b) in bidirected {
        let name = g.fresh_name("U");
        g.add_latent(&name, VertexSet::singleton(a).with(b))?;
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_blank_lines_and_duplicates() {
        let g = parse_graph("# header\n\nA -> B # trailing\nA -> B\nB <-> C\nC <-> B\n").unwrap();
        assert_eq!(g.observed().len(), 3);
        assert_eq!(g.latents().len(), 1);
        assert_eq!(g.edge_count(), 1 + 2);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(parse_graph("A -> A"), Err(GraphError::Parse { line: 1, .. })));
        assert!(matches!(parse_graph("A -> 1B"), Err(GraphError::Parse { .. })));
        assert!(matches!(parse_graph("latent U : A"), Err(GraphError::Parse { .. })));
        assert!(matches!(
            parse_graph("latent U : A B\nU -> C"),
            Err(GraphError::KindConflict(_))
        ));
        assert!(matches!(parse_graph("latent U A B"), Err(GraphError::Parse { .. })));
    }

    #[test]
    fn isolated_vertices() {
        let g = parse_graph("X\nY").unwrap();
        assert_eq!(g.observed().len(), 2);
        assert_eq!(g.edge_count(), 0);
    }
}
