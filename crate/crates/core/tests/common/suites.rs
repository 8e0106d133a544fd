//! Randomised property suites. Each returns how many trials ran and how
//! many violated the property, so that both the property tests and the
//! acceptance report can use them.

use fusion_core::clustering::{apply_cluster, enumerate_transit_clusters};
use fusion_core::identify::{lift_pruned, DiscreteScm};
use fusion_core::pruning::prune_all;
use fusion_core::{identify, CausalGraph, IdStatus, Query, SearchBudget, VertexSet};
use rand::seq::SliceRandom;
use rand::Rng;

use super::*;

pub const TRIALS: usize = 1000;

#[derive(Debug, Default)]
pub struct SuiteResult {
    pub trials: usize,
    pub violations: usize,
    pub first: Option<String>,
    /// Extra counts worth printing.
    pub notes: Vec<String>,
}

impl SuiteResult {
    fn violate(&mut self, msg: impl FnOnce() -> String) {
        self.violations += 1;
        if self.first.is_none() {
            self.first = Some(msg());
        }
    }

    pub fn summary(&self) -> String {
        let mut s = format!("{} trials, {} violations", self.trials, self.violations);
        for n in &self.notes {
            s.push_str("; ");
            s.push_str(n);
        }
        if let Some(f) = &self.first {
            s.push_str("; first: ");
            s.push_str(f);
        }
        s
    }
}

fn pick_nonempty<R: Rng>(r: &mut R, pool: VertexSet, p: f64) -> VertexSet {
    let s = random_subset(r, pool, p);
    if s.is_empty() {
        let v: Vec<usize> = pool.iter().collect();
        VertexSet::singleton(*v.choose(r).unwrap())
    } else {
        s
    }
}

/// Library d-separation against path enumeration, with and without edge
/// cuts, on graphs of at most eight vertices.
pub fn dsep_vs_paths(seed: u64) -> SuiteResult {
    let mut r = rng(seed);
    let mut out = SuiteResult::default();
    for trial in 0..TRIALS {
        let n = r.gen_range(3..=6);
        let g = random_graph(&mut r, n, 0.4, 2);
        let obs = g.observed();
        let (cut_in, cut_out) = if r.gen_bool(0.5) {
            (random_subset(&mut r, obs, 0.2), random_subset(&mut r, obs, 0.2))
        } else {
            (VertexSet::EMPTY, VertexSet::EMPTY)
        };
        let edges = cut_edges(&g.edges(), cut_in, cut_out);
        out.trials += 1;
        for _ in 0..5 {
            let x = pick_nonempty(&mut r, obs, 0.3);
            let rest = obs - x;
            if rest.is_empty() {
                continue;
            }
            let y = pick_nonempty(&mut r, rest, 0.3);
            let z = random_subset(&mut r, rest - y, 0.4);
            let lib = g.dsep_cut(cut_in, cut_out, x, y, z);
            let sym = g.dsep_cut(cut_in, cut_out, y, x, z);
            let oracle = dsep_oracle(&edges, x, y, z);
            if lib != oracle || sym != lib {
                out.violate(|| {
                    format!(
                        "trial {trial}: {{{}}} vs {{{}}} given {{{}}}: library {lib}, oracle {oracle}\n{}",
                        g.sorted_names(x).join(","),
                        g.sorted_names(y).join(","),
                        g.sorted_names(z).join(","),
                        g.to_text()
                    )
                });
                break;
            }
        }
    }
    out
}

/// Transit-cluster conditions evaluated straight from the definition on
/// an edge list; the graph need not be connected. A set with neither
/// receivers nor emitters is cut off from the rest of the graph and meets
/// the connectivity condition vacuously.
pub fn transit_oracle(edges: &[(usize, usize)], t: VertexSet) -> bool {
    let pa = |v: usize| -> VertexSet { edges.iter().filter(|e| e.1 == v).map(|e| e.0).collect() };
    let ch = |v: usize| -> VertexSet { edges.iter().filter(|e| e.0 == v).map(|e| e.1).collect() };
    let rec: Vec<usize> = t.iter().filter(|&v| !(pa(v) - t).is_empty()).collect();
    let em: Vec<usize> = t.iter().filter(|&v| !(ch(v) - t).is_empty()).collect();
    if rec.windows(2).any(|w| pa(w[0]) - t != pa(w[1]) - t) {
        return false;
    }
    if em.windows(2).any(|w| ch(w[0]) - t != ch(w[1]) - t) {
        return false;
    }
    let inner: Vec<(usize, usize)> = edges
        .iter()
        .copied()
        .filter(|&(a, b)| !rec.contains(&b) && !em.contains(&a))
        .collect();
    let anchors: VertexSet = rec.iter().chain(&em).copied().collect();
    for v in t.iter().filter(|_| !anchors.is_empty()) {
        let mut seen = VertexSet::singleton(v);
        loop {
            let before = seen;
            for &(a, b) in &inner {
                if seen.contains(a) {
                    seen.insert(b);
                }
                if seen.contains(b) {
                    seen.insert(a);
                }
            }
            if seen == before {
                break;
            }
        }
        if !seen.intersects(anchors) {
            return false;
        }
    }
    let ems: VertexSet = em.iter().copied().collect();
    let recs: VertexSet = rec.iter().copied().collect();
    if !em.is_empty() {
        for &rv in &rec {
            let de = descendants_oracle(edges, VertexSet::singleton(rv)).with(rv);
            if !de.intersects(ems) {
                return false;
            }
        }
    }
    if !rec.is_empty() {
        for &ev in &em {
            let an = ancestors_oracle(edges, VertexSet::singleton(ev)).with(ev);
            if !an.intersects(recs) {
                return false;
            }
        }
    }
    true
}

/// Random connected graph with at least one transit cluster; returns the
/// graph and one of its clusters.
fn graph_with_cluster<R: Rng>(r: &mut R) -> (CausalGraph, VertexSet) {
    loop {
        let n = r.gen_range(5..=7);
        let g = random_graph(r, n, 0.35, 1);
        let Ok(found) = enumerate_transit_clusters(&g, 4, false) else {
            continue;
        };
        if let Some(t) = found.choose(r) {
            return (g, *t);
        }
    }
}

/// Edge removal keeps transit clusters transit clusters. When the cluster
/// lies inside a cut set only edges crossing its boundary are removed;
/// the count for the reading that also removes internal edges is
/// reported as a note.
pub fn lemma_edge_removal(seed: u64) -> SuiteResult {
    let mut r = rng(seed);
    let mut out = SuiteResult::default();
    let mut literal_failures = 0;
    for trial in 0..TRIALS {
        let (g, t) = graph_with_cluster(&mut r);
        let obs = g.observed();
        let mode = if (t & g.latents()).is_empty() {
            r.gen_range(0..3)
        } else {
            2
        };
        let others = obs - t;
        let a = random_subset(&mut r, others, 0.3);
        let b = random_subset(&mut r, others - a, 0.3);
        let (z, w) = match mode {
            0 => (a | t, b),
            1 => (a, b | t),
            _ => (a, b),
        };
        out.trials += 1;
        let edges = g.edges();
        let boundary: Vec<(usize, usize)> = edges
            .iter()
            .copied()
            .filter(|&(x, y)| {
                let internal = t.contains(x) && t.contains(y);
                !(internal && (mode == 0 || mode == 1)) && (z.contains(y) || w.contains(x))
            })
            .collect();
        let kept: Vec<(usize, usize)> = edges.iter().copied().filter(|e| !boundary.contains(e)).collect();
        if !transit_oracle(&kept, t) {
            out.violate(|| {
                format!(
                    "trial {trial}: {{{}}} with Z={{{}}} W={{{}}}\n{}",
                    g.sorted_names(t).join(","),
                    g.sorted_names(z).join(","),
                    g.sorted_names(w).join(","),
                    g.to_text()
                )
            });
        }
        if !transit_oracle(&cut_edges(&edges, z, w), t) {
            literal_failures += 1;
        }
    }
    out.notes.push(format!(
        "{literal_failures} trials fail if edges inside the cluster are cut too"
    ));
    out
}

/// d-separation in the clustered graph matches d-separation in the
/// original with the cluster vertex expanded.
pub fn lemma_dsep_equivalence(seed: u64) -> SuiteResult {
    let mut r = rng(seed);
    let mut out = SuiteResult::default();
    for trial in 0..TRIALS {
        let (g, t) = graph_with_cluster(&mut r);
        let (gc, tv) = apply_cluster(&g, t, Some("TC")).unwrap();
        let obs = gc.observed();
        if obs.len() < 2 {
            continue;
        }
        out.trials += 1;
        let expand = |s: VertexSet| if s.contains(tv) { (s.without(tv)) | t } else { s };
        for _ in 0..5 {
            let x = pick_nonempty(&mut r, obs, 0.3);
            let rest = obs - x;
            if rest.is_empty() {
                continue;
            }
            let y = pick_nonempty(&mut r, rest, 0.3);
            let w = random_subset(&mut r, rest - y, 0.4);
            let clustered = dsep_oracle(&gc.edges(), x, y, w);
            let original = dsep_oracle(&g.edges(), expand(x), expand(y), expand(w));
            let lib_c = gc.dsep(x, y, w);
            let lib_o = g.dsep(expand(x), expand(y), expand(w));
            if clustered != original || lib_c != clustered || lib_o != original {
                out.violate(|| {
                    format!(
                        "trial {trial}: cluster {{{}}}, {{{}}} vs {{{}}} given {{{}}}: clustered {clustered}, original {original}\n{}",
                        g.sorted_names(t).join(","),
                        gc.sorted_names(x).join(","),
                        gc.sorted_names(y).join(","),
                        gc.sorted_names(w).join(","),
                        g.to_text()
                    )
                });
                break;
            }
        }
    }
    out
}

/// Pruning leaves the effect unchanged: the reduced query has the same
/// value in the original model, functionals found after pruning are
/// correct on the original model, and identifiability agrees whenever
/// both searches complete.
pub fn pruning_preserves_effect(seed: u64) -> SuiteResult {
    let mut r = rng(seed);
    let mut out = SuiteResult::default();
    let budget = SearchBudget::default();
    let mut identified = 0;
    let mut attempts = 0;
    while out.trials < TRIALS {
        attempts += 1;
        let n = r.gen_range(4..=6);
        let g = random_graph(&mut r, n, 0.35, 2);
        let (inputs, q) = random_problem(&mut r, &g);
        let Ok(p) = prune_all(&g, &inputs, &q) else {
            continue;
        };
        if p.removed().is_empty() {
            continue;
        }
        let trial = out.trials;
        out.trials += 1;
        let describe = || {
            format!(
                "{}inputs {:?} query {}",
                g.to_text(),
                inputs.iter().map(|d| d.to_string()).collect::<Vec<_>>(),
                q
            )
        };

        let reduced_q = Query {
            outcome: q.outcome.clone(),
            treatment: p.query.treatment.clone(),
        };
        let mut worst: f64 = 0.0;
        for _ in 0..3 {
            let m = DiscreteScm::random(&g, &mut r).unwrap();
            let full = m.interventional(&q).unwrap();
            let reduced = m.interventional(&reduced_q).unwrap();
            // Broadcast the reduced table over dropped treatments.
            let dropped: Vec<usize> = full
                .treatment
                .iter()
                .enumerate()
                .filter(|(_, n)| !reduced.treatment.contains(n))
                .map(|(i, _)| i)
                .collect();
            let ny = 1usize << full.outcome.len();
            for (k, v) in full.values.iter().enumerate() {
                let (xk, yk) = (k / ny, k % ny);
                let mut rx = 0usize;
                let mut j = 0;
                for i in 0..full.treatment.len() {
                    if dropped.contains(&i) {
                        continue;
                    }
                    if xk & (1 << i) != 0 {
                        rx |= 1 << j;
                    }
                    j += 1;
                }
                worst = worst.max((v - reduced.values[rx * ny + yk]).abs());
            }
        }
        if worst > 1e-9 {
            out.violate(|| format!("trial {trial}: reduced query differs by {worst}\n{}", describe()));
            continue;
        }

        let before = identify(&g, &inputs, &q, &budget).unwrap();
        let after = identify(&p.graph, &p.inputs, &p.query, &budget).unwrap();
        let complete = before.status != IdStatus::BudgetExceeded && after.status != IdStatus::BudgetExceeded;
        if complete && before.status != after.status {
            out.violate(|| {
                format!(
                    "trial {trial}: original {:?}, pruned {:?}\n{}",
                    before.status,
                    after.status,
                    describe()
                )
            });
            continue;
        }
        if let Some(f) = &after.functional {
            identified += 1;
            let lifted = lift_pruned(f, &p);
            let dev = max_deviation(&g, &lifted, &q, 3, seed ^ trial as u64);
            if dev > 1e-9 {
                out.violate(|| format!("trial {trial}: lifted {lifted} off by {dev}\n{}", describe()));
            }
        }
    }
    out.notes.push(format!("{identified} identified after pruning"));
    out.notes.push(format!("{attempts} problems drawn"));
    out
}

/// Every returned functional equals the true effect on 200 random models.
pub fn identify_soundness(seed: u64) -> SuiteResult {
    let mut r = rng(seed);
    let mut out = SuiteResult::default();
    let budget = SearchBudget::default();
    let mut identified = 0;
    let mut exhausted = 0;
    for trial in 0..TRIALS {
        let n = r.gen_range(3..=6);
        let g = random_graph(&mut r, n, 0.4, 2);
        let (inputs, q) = random_problem(&mut r, &g);
        out.trials += 1;
        let res = identify(&g, &inputs, &q, &budget).unwrap();
        match res.status {
            IdStatus::Identified => identified += 1,
            IdStatus::NotIdentified => exhausted += 1,
            IdStatus::BudgetExceeded => {}
        }
        if let Some(f) = &res.functional {
            let dev = max_deviation(&g, f, &q, 200, seed.wrapping_add(trial as u64));
            if dev > 1e-9 {
                out.violate(|| {
                    format!(
                        "trial {trial}: {f} off by {dev}\n{}inputs {:?} query {q}",
                        g.to_text(),
                        inputs.iter().map(|d| d.to_string()).collect::<Vec<_>>()
                    )
                });
            }
        }
    }
    out.notes
        .push(format!("{identified} identified, {exhausted} exhausted"));
    out
}
