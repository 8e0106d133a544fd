//! Causal graphs over observed and latent vertices.
//!
//! Vertices live in fixed slots so that subgraphs, edge-cut graphs and
//! clustered graphs share indices with the graph they were derived from.
//! Removing a vertex clears its slot; clustering appends a new slot.

mod dsep;
mod parse;
mod set;

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

pub use set::{SetIter, SubsetIter, VertexSet, MAX_VERTICES};

pub(crate) use dsep::connected_to;
pub use parse::is_identifier;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("graph contains a cycle: {}", .0.join(" -> "))]
    Cycle(Vec<String>),
    #[error("unknown vertex `{0}`")]
    UnknownVertex(String),
    #[error("vertex `{0}` is declared both latent and observed")]
    KindConflict(String),
    #[error("latent `{0}` cannot have parents")]
    LatentParent(String),
    #[error("latent `{0}` must have at least two observed children")]
    LatentChildren(String),
    #[error("graph exceeds {MAX_VERTICES} vertex slots")]
    TooManyVertices,
    #[error("conditioning set contains latent `{0}`")]
    LatentInConditioning(String),
    #[error("vertex sets overlap on `{0}`")]
    Overlap(String),
    #[error("duplicate vertex name `{0}`")]
    DuplicateName(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VertexKind {
    Observed,
    Latent,
}

/// Which relation [`CausalGraph::relations`] computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Parents,
    Children,
    Ancestors,
    Descendants,
}

/// A DAG over observed vertices `V` and explicit latent vertices.
#[derive(Clone)]
pub struct CausalGraph {
    names: Vec<String>,
    index: HashMap<String, usize>,
    latent: VertexSet,
    present: VertexSet,
    parents: Vec<VertexSet>,
    children: Vec<VertexSet>,
}

impl Default for CausalGraph {
    fn default() -> Self {
        Self::new()
    }
}

impl CausalGraph {
    pub fn new() -> Self {
        CausalGraph {
            names: Vec::new(),
            index: HashMap::new(),
            latent: VertexSet::EMPTY,
            present: VertexSet::EMPTY,
            parents: Vec::new(),
            children: Vec::new(),
        }
    }

    /// Parses the line-oriented graph format.
    ///
    /// ```text
    /// # comment
    /// X -> Y
    /// X <-> Y            # fresh latent with children X and Y
    /// latent U : A B C   # named latent
    /// Z                  # isolated vertex
    /// ```
    pub fn parse(text: &str) -> Result<Self, GraphError> {
        parse::parse_graph(text)
    }

    fn add_vertex(&mut self, name: &str, kind: VertexKind) -> Result<usize, GraphError> {
        if self.index.contains_key(name) {
            return Err(GraphError::DuplicateName(name.to_string()));
        }
        let v = self.names.len();
        if v >= MAX_VERTICES {
            return Err(GraphError::TooManyVertices);
        }
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), v);
        self.parents.push(VertexSet::EMPTY);
        self.children.push(VertexSet::EMPTY);
        self.present.insert(v);
        if kind == VertexKind::Latent {
            self.latent.insert(v);
        }
        Ok(v)
    }

    pub fn add_observed(&mut self, name: &str) -> Result<usize, GraphError> {
        self.add_vertex(name, VertexKind::Observed)
    }

    /// Adds a latent vertex with the given observed children.
    pub fn add_latent(&mut self, name: &str, children: VertexSet) -> Result<usize, GraphError> {
        if children.len() < 2 {
            return Err(GraphError::LatentChildren(name.to_string()));
        }
        if let Some(v) = (children & self.latent).first() {
            return Err(GraphError::LatentParent(self.names[v].clone()));
        }
        let u = self.add_vertex(name, VertexKind::Latent)?;
        for c in children {
            self.children[u].insert(c);
            self.parents[c].insert(u);
        }
        Ok(u)
    }

    /// Adds `from -> to`, rejecting edges that would close a cycle.
    pub fn add_edge(&mut self, from: usize, to: usize) -> Result<(), GraphError> {
        if self.latent.contains(to) {
            return Err(GraphError::LatentParent(self.names[to].clone()));
        }
        if from == to || self.ancestors(VertexSet::singleton(from)).contains(to) {
            let mut cycle = self.directed_path(to, from).unwrap_or_else(|| vec![to]);
            cycle.push(to);
            return Err(GraphError::Cycle(
                cycle.into_iter().map(|v| self.names[v].clone()).collect(),
            ));
        }
        self.children[from].insert(to);
        self.parents[to].insert(from);
        Ok(())
    }

    /// A directed path from `a` to `b`, if any.
    fn directed_path(&self, a: usize, b: usize) -> Option<Vec<usize>> {
        let mut prev = vec![usize::MAX; self.names.len()];
        let mut queue = VecDeque::from([a]);
        let mut seen = VertexSet::singleton(a);
        while let Some(v) = queue.pop_front() {
            if v == b {
                let mut path = vec![b];
                let mut cur = b;
                while cur != a {
                    cur = prev[cur];
                    path.push(cur);
                }
                path.reverse();
                return Some(path);
            }
            for c in self.children[v] {
                if !seen.contains(c) {
                    seen.insert(c);
                    prev[c] = v;
                    queue.push_back(c);
                }
            }
        }
        None
    }

    pub fn slot_count(&self) -> usize {
        self.names.len()
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied().filter(|&v| self.present.contains(v))
    }

    pub fn name(&self, v: usize) -> &str {
        &self.names[v]
    }

    pub fn kind(&self, v: usize) -> VertexKind {
        if self.latent.contains(v) {
            VertexKind::Latent
        } else {
            VertexKind::Observed
        }
    }

    pub fn is_latent(&self, v: usize) -> bool {
        self.latent.contains(v)
    }

    /// All present vertices.
    pub fn vertices(&self) -> VertexSet {
        self.present
    }

    pub fn observed(&self) -> VertexSet {
        self.present - self.latent
    }

    pub fn latents(&self) -> VertexSet {
        self.present & self.latent
    }

    pub fn contains_name(&self, name: &str) -> bool {
        self.id(name).is_some()
    }

    /// Resolves names to a vertex set.
    pub fn set_of<I, S>(&self, names: I) -> Result<VertexSet, GraphError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut out = VertexSet::EMPTY;
        for n in names {
            let n = n.as_ref();
            out.insert(self.id(n).ok_or_else(|| GraphError::UnknownVertex(n.to_string()))?);
        }
        Ok(out)
    }

    pub fn names_of(&self, set: VertexSet) -> BTreeSet<String> {
        set.iter().map(|v| self.names[v].clone()).collect()
    }

    /// Names in lexicographic order.
    pub fn sorted_names(&self, set: VertexSet) -> Vec<String> {
        self.names_of(set).into_iter().collect()
    }

    pub fn parents(&self, v: usize) -> VertexSet {
        self.parents[v]
    }

    pub fn children(&self, v: usize) -> VertexSet {
        self.children[v]
    }

    pub fn parents_of(&self, s: VertexSet) -> VertexSet {
        s.iter().fold(VertexSet::EMPTY, |acc, v| acc | self.parents[v])
    }

    pub fn children_of(&self, s: VertexSet) -> VertexSet {
        s.iter().fold(VertexSet::EMPTY, |acc, v| acc | self.children[v])
    }

    /// Vertices with a directed path of length at least one into `s`.
    /// Members of `s` appear only when they reach another member.
    pub fn ancestors(&self, s: VertexSet) -> VertexSet {
        closure(s, &self.parents)
    }

    /// Vertices reachable from `s` by a directed path of length at least one.
    pub fn descendants(&self, s: VertexSet) -> VertexSet {
        closure(s, &self.children)
    }

    /// Ancestors of `s` once incoming edges of `cut_in` are removed.
    pub fn ancestors_cut(&self, cut_in: VertexSet, s: VertexSet) -> VertexSet {
        let mut out = VertexSet::EMPTY;
        let mut frontier = s;
        while !frontier.is_empty() {
            let mut next = VertexSet::EMPTY;
            for v in frontier - cut_in {
                next |= self.parents[v];
            }
            frontier = next - out;
            out |= next;
        }
        out
    }

    /// `s` together with its ancestors.
    pub fn an_plus(&self, s: VertexSet) -> VertexSet {
        s | self.ancestors(s)
    }

    /// `s` together with its descendants.
    pub fn de_plus(&self, s: VertexSet) -> VertexSet {
        s | self.descendants(s)
    }

    /// Relation lookup; latents are dropped unless requested.
    pub fn relations(&self, s: VertexSet, kind: Relation, include_latents: bool) -> VertexSet {
        let r = match kind {
            Relation::Parents => self.parents_of(s),
            Relation::Children => self.children_of(s),
            Relation::Ancestors => self.ancestors(s),
            Relation::Descendants => self.descendants(s),
        };
        if include_latents {
            r
        } else {
            r - self.latent
        }
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for v in self.present {
            for c in self.children[v] {
                out.push((v, c));
            }
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.present.iter().map(|v| self.children[v].len()).sum()
    }

    /// Edges as name pairs, handy for structural comparisons.
    pub fn edge_names(&self) -> BTreeSet<(String, String)> {
        self.edges()
            .into_iter()
            .map(|(a, b)| (self.names[a].clone(), self.names[b].clone()))
            .collect()
    }

    /// Each latent as its sorted list of children, ignoring latent names.
    pub fn latent_signatures(&self) -> BTreeSet<Vec<String>> {
        self.latents()
            .iter()
            .map(|u| self.sorted_names(self.children[u]))
            .collect()
    }

    /// Observed edges plus latent child sets, independent of slot layout.
    pub fn same_structure(&self, other: &CausalGraph) -> bool {
        let obs = |g: &CausalGraph| g.names_of(g.observed());
        let obs_edges = |g: &CausalGraph| -> BTreeSet<(String, String)> {
            g.edges()
                .into_iter()
                .filter(|(a, _)| !g.is_latent(*a))
                .map(|(a, b)| (g.names[a].clone(), g.names[b].clone()))
                .collect()
        };
        obs(self) == obs(other)
            && obs_edges(self) == obs_edges(other)
            && self.latent_signatures() == other.latent_signatures()
    }

    /// Removes incoming edges of `cut_in` and outgoing edges of `cut_out`.
    ///
    /// Latents left with fewer than two children are kept, so that the
    /// result has the same slots as `self`.
    pub fn edge_cut(&self, cut_in: VertexSet, cut_out: VertexSet) -> CausalGraph {
        let mut g = self.clone();
        for v in g.present {
            if cut_in.contains(v) {
                g.parents[v] = VertexSet::EMPTY;
            } else {
                g.parents[v] -= cut_out;
            }
            if cut_out.contains(v) {
                g.children[v] = VertexSet::EMPTY;
            } else {
                g.children[v] -= cut_in;
            }
        }
        g
    }

    /// Subgraph on the observed vertices of `keep`. Latents survive only if
    /// they keep at least two children.
    pub fn induced_subgraph(&self, keep: VertexSet) -> CausalGraph {
        let obs = keep & self.observed();
        let mut lat = VertexSet::EMPTY;
        for u in self.latents() {
            if (self.children[u] & obs).len() >= 2 {
                lat.insert(u);
            }
        }
        self.restrict_to(obs | lat)
    }

    /// Keeps exactly the vertices in `keep`, dropping every other slot.
    pub(crate) fn restrict_to(&self, keep: VertexSet) -> CausalGraph {
        let keep = keep & self.present;
        let mut g = self.clone();
        g.present = keep;
        for v in 0..g.names.len() {
            if keep.contains(v) {
                g.parents[v] &= keep;
                g.children[v] &= keep;
            } else {
                g.parents[v] = VertexSet::EMPTY;
                g.children[v] = VertexSet::EMPTY;
            }
        }
        g
    }

    /// Appends an observed vertex with the given parents and children.
    /// The caller is responsible for acyclicity.
    pub(crate) fn push_vertex(
        &mut self,
        name: &str,
        parents: VertexSet,
        children: VertexSet,
    ) -> Result<usize, GraphError> {
        let v = self.add_vertex(name, VertexKind::Observed)?;
        for p in parents {
            self.children[p].insert(v);
            self.parents[v].insert(p);
        }
        for c in children {
            self.parents[c].insert(v);
            self.children[v].insert(c);
        }
        Ok(v)
    }

    /// Topological order of present vertices, or a cycle witness.
    pub fn topological_order(&self) -> Result<Vec<usize>, GraphError> {
        let mut indeg: Vec<usize> = (0..self.names.len())
            .map(|v| (self.parents[v] & self.present).len())
            .collect();
        let mut queue: VecDeque<usize> = self.present.iter().filter(|&v| indeg[v] == 0).collect();
        let mut order = Vec::with_capacity(self.present.len());
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for c in self.children[v] & self.present {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    queue.push_back(c);
                }
            }
        }
        if order.len() == self.present.len() {
            Ok(order)
        } else {
            let stuck = self.present - order.iter().copied().collect::<VertexSet>();
            Err(GraphError::Cycle(self.sorted_names(stuck)))
        }
    }

    pub fn is_acyclic(&self) -> bool {
        self.topological_order().is_ok()
    }

    /// Undirected neighbours of `v`.
    pub fn neighbours(&self, v: usize) -> VertexSet {
        self.parents[v] | self.children[v]
    }

    /// Connected components of the undirected skeleton restricted to `within`.
    pub fn components(&self, within: VertexSet) -> Vec<VertexSet> {
        let mut left = within & self.present;
        let mut out = Vec::new();
        while let Some(start) = left.first() {
            let mut comp = VertexSet::singleton(start);
            let mut frontier = comp;
            while !frontier.is_empty() {
                let mut next = VertexSet::EMPTY;
                for v in frontier {
                    next |= self.neighbours(v);
                }
                next = next & within & self.present;
                frontier = next - comp;
                comp |= next;
            }
            left -= comp;
            out.push(comp);
        }
        out
    }

    pub fn is_connected(&self) -> bool {
        self.components(self.present).len() <= 1
    }

    /// d-separation of `x` and `y` given `z`. `z` must be observed unless
    /// `allow_latent_z` is set; the three sets must be pairwise disjoint.
    pub fn d_separated(
        &self,
        x: VertexSet,
        y: VertexSet,
        z: VertexSet,
        allow_latent_z: bool,
    ) -> Result<bool, GraphError> {
        for s in [x, y, z] {
            if let Some(v) = (s - self.present).first() {
                return Err(GraphError::UnknownVertex(
                    self.names.get(v).cloned().unwrap_or_default(),
                ));
            }
        }
        if !allow_latent_z {
            if let Some(v) = (z & self.latent).first() {
                return Err(GraphError::LatentInConditioning(self.names[v].clone()));
            }
        }
        for (a, b) in [(x, y), (x, z), (y, z)] {
            if let Some(v) = (a & b).first() {
                return Err(GraphError::Overlap(self.names[v].clone()));
            }
        }
        Ok(self.dsep(x, y, z))
    }

    /// Unchecked d-separation for callers that already validated the sets.
    pub fn dsep(&self, x: VertexSet, y: VertexSet, z: VertexSet) -> bool {
        self.dsep_cut(VertexSet::EMPTY, VertexSet::EMPTY, x, y, z)
    }

    /// d-separation in `G[cut_in‾, cut_out_]` without building that graph.
    pub fn dsep_cut(&self, cut_in: VertexSet, cut_out: VertexSet, x: VertexSet, y: VertexSet, z: VertexSet) -> bool {
        if x.is_empty() || y.is_empty() {
            return true;
        }
        (connected_to(&self.parents, &self.children, cut_in, cut_out, x, z) & y).is_empty()
    }

    /// Renders the graph back into the text format.
    pub fn to_text(&self) -> String {
        let mut lines = Vec::new();
        for v in self.observed() {
            if self.neighbours(v).is_empty() {
                lines.push(self.names[v].clone());
            }
        }
        for (a, b) in self.edges() {
            if !self.is_latent(a) {
                lines.push(format!("{} -> {}", self.names[a], self.names[b]));
            }
        }
        for u in self.latents() {
            lines.push(format!(
                "latent {} : {}",
                self.names[u],
                self.sorted_names(self.children[u]).join(" ")
            ));
        }
        lines.join("\n") + "\n"
    }

    /// A name not used by any slot, of the form `{prefix}{k}` with k >= 1.
    pub fn fresh_name(&self, prefix: &str) -> String {
        (1..)
            .map(|k| format!("{prefix}{k}"))
            .find(|n| !self.index.contains_key(n))
            .expect("unbounded")
    }
}

fn closure(s: VertexSet, step: &[VertexSet]) -> VertexSet {
    let mut out = VertexSet::EMPTY;
    let mut frontier = s;
    while !frontier.is_empty() {
        let mut next = VertexSet::EMPTY;
        for v in frontier {
            next |= step[v];
        }
        frontier = next - out;
        out |= next;
    }
    out
}

impl fmt::Debug for CausalGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

#[derive(Serialize)]
struct LatentOut {
    name: String,
    children: Vec<String>,
}

#[derive(Serialize)]
struct GraphOut {
    observed: Vec<String>,
    latents: Vec<LatentOut>,
    edges: Vec<(String, String)>,
}

impl Serialize for CausalGraph {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        GraphOut {
            observed: self.sorted_names(self.observed()),
            latents: self
                .latents()
                .iter()
                .map(|u| LatentOut {
                    name: self.names[u].clone(),
                    children: self.sorted_names(self.children[u]),
                })
                .collect(),
            edges: self
                .edges()
                .into_iter()
                .filter(|(a, _)| !self.is_latent(*a))
                .map(|(a, b)| (self.names[a].clone(), self.names[b].clone()))
                .collect(),
        }
        .serialize(s)
    }
}
