//! Randomised properties checked against reference implementations.

mod common;

use common::suites::{self, SuiteResult};
use common::*;
use fusion_core::clustering::{apply_cluster, enumerate_transit_clusters};
use fusion_core::distributions::restrict_inputs;
use fusion_core::pruning::prune_all;
use fusion_core::{identify, CausalGraph, Functional, SearchBudget, VarSet, VertexSet};
use rand::Rng;

fn check(name: &str, r: SuiteResult) {
    println!("{name}: {}", r.summary());
    assert!(r.trials >= suites::TRIALS, "{name}: only {} trials", r.trials);
    assert_eq!(r.violations, 0, "{name}: {}", r.summary());
}

#[test]
fn dsep_matches_path_enumeration() {
    check("d-separation", suites::dsep_vs_paths(11));
}

#[test]
fn edge_removal_keeps_transit_clusters() {
    check("edge removal", suites::lemma_edge_removal(12));
}

#[test]
fn clustering_preserves_dsep() {
    check("clustered d-separation", suites::lemma_dsep_equivalence(13));
}

#[test]
fn pruning_preserves_effects() {
    check("pruning", suites::pruning_preserves_effect(14));
}

#[test]
fn identified_functionals_are_correct() {
    check("soundness", suites::identify_soundness(15));
}

#[test]
fn dsep_on_fixture_graphs_matches_paths() {
    for name in [
        "pruning_example",
        "clusters_case_i",
        "athero_row1",
        "athero_row3",
        "counter_line7",
    ] {
        let g = fixture(name).graph;
        let edges = g.edges();
        let obs: Vec<usize> = g.observed().iter().collect();
        let mut checked = 0;
        for &x in &obs {
            for &y in &obs {
                if x == y {
                    continue;
                }
                let rest = g.observed().without(x).without(y);
                for z in rest.subsets().filter(|z| z.len() <= 2) {
                    let (xs, ys) = (VertexSet::singleton(x), VertexSet::singleton(y));
                    assert_eq!(
                        g.dsep(xs, ys, z),
                        dsep_oracle(&edges, xs, ys, z),
                        "{name}: {} vs {} given {:?}",
                        g.name(x),
                        g.name(y),
                        g.sorted_names(z)
                    );
                    checked += 1;
                }
            }
        }
        println!("{name}: {checked} triples");
    }
}

#[test]
fn colliders_block_until_conditioned() {
    let g = CausalGraph::parse("X -> C\nY -> C\nC -> D").unwrap();
    let id = |n: &str| VertexSet::singleton(g.id(n).unwrap());
    assert!(g.dsep(id("X"), id("Y"), VertexSet::EMPTY));
    assert!(!g.dsep(id("X"), id("Y"), id("C")));
    assert!(!g.dsep(id("X"), id("Y"), id("D")));
}

#[test]
fn enumeration_matches_subset_oracle() {
    let mut r = rng(21);
    let mut graphs = 0;
    while graphs < 300 {
        let n = r.gen_range(5..=7);
        let g = random_graph(&mut r, n, 0.35, 1);
        let Ok(found) = enumerate_transit_clusters(&g, 4, false) else {
            continue;
        };
        graphs += 1;
        let edges = g.edges();
        let mut expected: Vec<VertexSet> = g
            .vertices()
            .subsets()
            .filter(|t| (2..=4).contains(&t.len()) && suites::transit_oracle(&edges, *t))
            .collect();
        expected.sort_by_cached_key(|t| g.sorted_names(*t));
        assert_eq!(found, expected, "{}", g.to_text());
    }
}

#[test]
fn clustering_replaces_members_with_one_vertex() {
    let mut r = rng(22);
    let mut done = 0;
    while done < 300 {
        let n = r.gen_range(5..=7);
        let g = random_graph(&mut r, n, 0.35, 1);
        let Ok(found) = enumerate_transit_clusters(&g, 4, false) else {
            continue;
        };
        for t in found {
            let (gc, v) = apply_cluster(&g, t, None).unwrap();
            assert_eq!(gc.vertices().len(), g.vertices().len() - t.len() + 1);
            assert!(gc.is_acyclic());
            assert_eq!(gc.names_of(gc.parents(v)), g.names_of(g.parents_of(t) - t));
            assert_eq!(gc.names_of(gc.children(v)), g.names_of(g.children_of(t) - t));
            done += 1;
        }
    }
}

#[test]
fn pruning_is_idempotent_and_induced() {
    let mut r = rng(23);
    for _ in 0..500 {
        let n = r.gen_range(4..=7);
        let g = random_graph(&mut r, n, 0.35, 2);
        let (inputs, q) = random_problem(&mut r, &g);
        let p = prune_all(&g, &inputs, &q).unwrap();
        let again = prune_all(&p.graph, &p.inputs, &p.query).unwrap();
        assert!(
            again.removed().is_empty(),
            "{}{:?} {q}\nfirst pass {:?}, second pass {:?}",
            g.to_text(),
            inputs.iter().map(|d| d.to_string()).collect::<Vec<_>>(),
            p.removed(),
            again.removed()
        );
        assert!(p.graph.edge_names().is_subset(&g.edge_names()));
        let kept = g.set_of(p.graph.names_of(p.graph.observed())).unwrap();
        let expected: std::collections::BTreeSet<_> = g
            .edge_names()
            .into_iter()
            .filter(|(a, b)| {
                [a, b]
                    .iter()
                    .all(|n| kept.contains(g.id(n).unwrap()) || g.is_latent(g.id(n).unwrap()))
            })
            .filter(|(a, b)| p.graph.contains_name(a) && p.graph.contains_name(b))
            .collect();
        assert_eq!(p.graph.edge_names(), expected, "{}", g.to_text());
    }
}

#[test]
fn restriction_is_idempotent() {
    let mut r = rng(24);
    for _ in 0..500 {
        let n = r.gen_range(3..=7);
        let g = random_graph(&mut r, n, 0.4, 0);
        let (inputs, _) = random_problem(&mut r, &g);
        let keep: VarSet = g.names_of(random_subset(&mut r, g.observed(), 0.6));
        let once: Vec<_> = restrict_inputs(&inputs, &keep).into_iter().map(|(_, d)| d).collect();
        let twice: Vec<_> = restrict_inputs(&once, &keep).into_iter().map(|(_, d)| d).collect();
        assert_eq!(once, twice);
    }
}

#[test]
fn identification_is_deterministic_and_printable() {
    let mut r = rng(25);
    let budget = SearchBudget::default();
    for _ in 0..200 {
        let n = r.gen_range(3..=6);
        let g = random_graph(&mut r, n, 0.4, 2);
        let (inputs, q) = random_problem(&mut r, &g);
        let a = identify(&g, &inputs, &q, &budget).unwrap();
        let b = identify(&g, &inputs, &q, &budget).unwrap();
        assert_eq!(a.status, b.status);
        assert_eq!(a.expression, b.expression);
        if let Some(f) = &a.functional {
            let back = Functional::parse(&f.to_string(), &inputs).unwrap();
            assert_eq!(back.to_string(), f.to_string());
        }
    }
}
