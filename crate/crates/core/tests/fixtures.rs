mod common;

use common::*;
use fusion_core::clustering::{cluster_inputs, ClusterError};
use fusion_core::pipeline::{analyze, PipelineOptions, Verdict};
use fusion_core::problem::Problem;
use fusion_core::pruning::prune_all;

const ALL: &[&str] = &[
    "athero_row1",
    "athero_row2",
    "athero_row3",
    "clusters_case_i",
    "clusters_case_ii",
    "clusters_case_iii",
    "clusters_case_iv",
    "counter_line7",
    "counter_line9",
    "pruning_example",
    "tobacco_b_do_r",
    "tobacco_g_do_c",
    "tobacco_s_do_r",
];

fn clusters(requested: &[(&str, &[&str])]) -> PipelineOptions {
    PipelineOptions {
        clusters: requested
            .iter()
            .map(|(n, m)| (n.to_string(), m.iter().map(|s| s.to_string()).collect()))
            .collect(),
        ..PipelineOptions::default()
    }
}

#[test]
fn problem_files_round_trip() {
    for name in ALL {
        let p = fixture(name);
        let back = Problem::parse(&p.to_text()).unwrap();
        assert!(back.graph.same_structure(&p.graph), "{name}");
        assert_eq!(back.inputs, p.inputs, "{name}");
        assert_eq!(back.query, p.query, "{name}");
    }
}

#[test]
fn pipeline_answers_are_correct_on_every_fixture() {
    for name in ALL {
        let p = fixture(name);
        let report = analyze(&p.graph, &p.inputs, &p.query, &PipelineOptions::default()).unwrap();
        if let Some(f) = &report.functional {
            let dev = max_deviation(&p.graph, f, &p.query, 50, 7);
            assert!(dev <= 1e-9, "{name}: {f} off by {dev}");
        }
        assert_ne!(report.verdict, Verdict::Undetermined, "{name}");
    }
}

#[test]
fn tobacco_pruning_sets() {
    for (name, removed) in [
        ("tobacco_s_do_r", &["A", "B", "D", "G", "H", "I", "J", "N", "W"][..]),
        ("tobacco_b_do_r", &["A", "G", "H", "I", "J", "N", "W"][..]),
        ("tobacco_g_do_c", &["A", "B", "H", "I", "J", "N", "W"][..]),
    ] {
        let p = fixture(name);
        let pruned = prune_all(&p.graph, &p.inputs, &p.query).unwrap();
        assert_eq!(pruned.removed(), set(removed), "{name}");
    }
}

#[test]
fn cluster_missing_from_every_input_is_incompatible() {
    let p = fixture("clusters_case_ii");
    let t = p.graph.set_of(["T1", "T2"]).unwrap();
    assert!(matches!(
        cluster_inputs(&p.graph, &p.inputs, t, "T"),
        Err(ClusterError::NoEmitterInput)
    ));
}

#[test]
fn uncertified_cluster_falls_back_to_the_unclustered_search() {
    let p = fixture("athero_row3");
    let report = analyze(
        &p.graph,
        &p.inputs,
        &p.query,
        &clusters(&[("B", &["B1", "B2"]), ("M", &["M1", "M2"])]),
    )
    .unwrap();
    assert_eq!(report.verdict, Verdict::Identified);
    assert!(report.fallback.is_some());
    assert!(!report.reduced.is_identified());
}

#[test]
fn certified_clusters_settle_non_identifiability() {
    let p = fixture("athero_row1");
    let report = analyze(
        &p.graph,
        &p.inputs,
        &p.query,
        &clusters(&[("B", &["B1", "B2"]), ("H", &["H1", "H2"]), ("M", &["M1", "M2"])]),
    )
    .unwrap();
    assert_eq!(report.verdict, Verdict::NotIdentified);
    assert!(report.fallback.is_none());
    assert_eq!(report.clusters.len(), 3);
}
