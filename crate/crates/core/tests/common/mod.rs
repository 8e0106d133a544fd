//! Shared helpers for the integration tests: fixture loading, random
//! problems, and reference implementations written directly from the
//! definitions.
#![allow(dead_code)]

use std::collections::BTreeSet;

use fusion_core::identify::DiscreteScm;
use fusion_core::problem::Problem;
use fusion_core::{CausalGraph, Distribution, Functional, Query, VertexSet};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub mod suites;

pub fn fixture(name: &str) -> Problem {
    let path = format!("{}/tests/fixtures/{name}.problem", env!("CARGO_MANIFEST_DIR"));
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"));
    Problem::parse(&text).unwrap_or_else(|e| panic!("{path}: {e}"))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn names(g: &CausalGraph, s: VertexSet) -> BTreeSet<String> {
    g.names_of(s)
}

pub fn set(items: &[&str]) -> BTreeSet<String> {
    items.iter().map(|s| s.to_string()).collect()
}

/// Largest deviation between `f` and the true effect over `models` random
/// binary models of `g`.
pub fn max_deviation(g: &CausalGraph, f: &Functional, q: &Query, models: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..models {
        let m = DiscreteScm::random(g, &mut r).unwrap();
        let truth = m.interventional(q).unwrap();
        let got = m.evaluate(f, q).unwrap();
        worst = worst.max(truth.max_abs_diff(&got));
    }
    worst
}

/// Largest deviation between two functionals over random models of `g`.
pub fn max_gap(g: &CausalGraph, f1: &Functional, f2: &Functional, q: &Query, models: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..models {
        let m = DiscreteScm::random(g, &mut r).unwrap();
        worst = worst.max(m.evaluate(f1, q).unwrap().max_abs_diff(&m.evaluate(f2, q).unwrap()));
    }
    worst
}

/// Random DAG over `V0..V{n-1}` (in that causal order) plus up to
/// `max_latents` latents with two or three children each.
pub fn random_graph<R: Rng>(r: &mut R, n: usize, p_edge: f64, max_latents: usize) -> CausalGraph {
    let mut g = CausalGraph::new();
    let ids: Vec<usize> = (0..n).map(|i| g.add_observed(&format!("V{i}")).unwrap()).collect();
    for i in 0..n {
        for j in i + 1..n {
            if r.gen::<f64>() < p_edge {
                g.add_edge(ids[i], ids[j]).unwrap();
            }
        }
    }
    let k = r.gen_range(0..=max_latents);
    for l in 0..k {
        let size = r.gen_range(2..=3.min(n));
        let children: VertexSet = ids.choose_multiple(r, size).copied().collect();
        g.add_latent(&format!("U{l}"), children).unwrap();
    }
    g
}

/// Random subset of `pool` where each member is kept with probability `p`.
pub fn random_subset<R: Rng>(r: &mut R, pool: VertexSet, p: f64) -> VertexSet {
    pool.iter().filter(|_| r.gen::<f64>() < p).collect()
}

/// Random query with one outcome and one treatment, plus one to three
/// random inputs over the observed vertices.
pub fn random_problem<R: Rng>(r: &mut R, g: &CausalGraph) -> (Vec<Distribution>, Query) {
    let obs: Vec<usize> = g.observed().iter().collect();
    let pick = obs.choose_multiple(r, 2).copied().collect::<Vec<_>>();
    let (x, y) = if pick[0] < pick[1] {
        (pick[0], pick[1])
    } else {
        (pick[1], pick[0])
    };
    let q = Query::new([g.name(y)], [g.name(x)]);
    let k = r.gen_range(1..=3);
    let mut inputs = Vec::with_capacity(k);
    while inputs.len() < k {
        let mut a = Vec::new();
        let mut b = Vec::new();
        let mut c = Vec::new();
        for &v in &obs {
            let u: f64 = r.gen();
            let name = g.name(v).to_string();
            if u < 0.55 {
                a.push(name);
            } else if u < 0.65 {
                b.push(name);
            } else if u < 0.75 {
                c.push(name);
            }
        }
        if !a.is_empty() {
            inputs.push(Distribution::new(a, b, c));
        }
    }
    (inputs, q)
}

/// Every vertex reachable from `s` along directed edges, `s` excluded
/// unless reachable from another member.
pub fn descendants_oracle(edges: &[(usize, usize)], s: VertexSet) -> VertexSet {
    let mut out = VertexSet::EMPTY;
    loop {
        let before = out;
        for &(a, b) in edges {
            if s.contains(a) || out.contains(a) {
                out.insert(b);
            }
        }
        if out == before {
            return out;
        }
    }
}

pub fn ancestors_oracle(edges: &[(usize, usize)], s: VertexSet) -> VertexSet {
    let rev: Vec<(usize, usize)> = edges.iter().map(|&(a, b)| (b, a)).collect();
    descendants_oracle(&rev, s)
}

/// d-separation by enumerating every simple path of the skeleton and
/// applying the blocking rules for chains, forks and colliders.
pub fn dsep_oracle(edges: &[(usize, usize)], x: VertexSet, y: VertexSet, z: VertexSet) -> bool {
    let directed: BTreeSet<(usize, usize)> = edges.iter().copied().collect();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); 64];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let blocked = |path: &[usize]| -> bool {
        for w in path.windows(3) {
            let (a, m, b) = (w[0], w[1], w[2]);
            let collider = directed.contains(&(a, m)) && directed.contains(&(b, m));
            if collider {
                let de = descendants_oracle(edges, VertexSet::singleton(m)).with(m);
                if !de.intersects(z) {
                    return true;
                }
            } else if z.contains(m) {
                return true;
            }
        }
        false
    };
    fn walk(adj: &[Vec<usize>], path: &mut Vec<usize>, y: VertexSet, blocked: &dyn Fn(&[usize]) -> bool) -> bool {
        let last = *path.last().unwrap();
        if path.len() > 1 && y.contains(last) {
            return !blocked(path);
        }
        for &n in &adj[last] {
            if path.contains(&n) {
                continue;
            }
            path.push(n);
            let open = walk(adj, path, y, blocked);
            path.pop();
            if open {
                return true;
            }
        }
        false
    }
    for s in x.iter() {
        let mut path = vec![s];
        if walk(&adj, &mut path, y, &blocked) {
            return false;
        }
    }
    true
}

/// Edges left after removing edges into `cut_in` and out of `cut_out`.
pub fn cut_edges(edges: &[(usize, usize)], cut_in: VertexSet, cut_out: VertexSet) -> Vec<(usize, usize)> {
    edges
        .iter()
        .copied()
        .filter(|&(a, b)| !cut_in.contains(b) && !cut_out.contains(a))
        .collect()
}
