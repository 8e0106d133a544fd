//! Random problem generator and timing campaign comparing identification
//! with and without a planted transit cluster.
//!
//! Each instance starts from a small DAG over `X`, `Y` and `Z1..Zn` in which
//! every vertex is an ancestor of `Y`. One `Zi` is expanded into a transit
//! cluster of receivers `R1,R2`, an optional internal vertex `S` and
//! emitters `E1,E2`, and random inputs are drawn over the small graph and
//! expanded accordingly.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{apply_cluster, cluster_inputs, enumerate_transit_clusters, is_transit_cluster, ClusterError};
use crate::distributions::{Distribution, Query, VarSet};
use crate::graph::{CausalGraph, GraphError, VertexSet};
use crate::identify::{identify, IdStatus, IdentifyError, SearchBudget};
use crate::invariance::verify_inputs;

/// Attempts at wiring the cluster interior before a new vertex is chosen.
pub const INTERIOR_RETRIES: usize = 100;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Identify(#[from] IdentifyError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("no vertex could host a cluster")]
    NoHost,
}

/// A generated problem in both its expanded and its clustered form.
#[derive(Debug, Clone)]
pub struct SimInstance {
    pub seed: u64,
    pub graph: CausalGraph,
    pub inputs: Vec<Distribution>,
    pub query: Query,
    /// Vertex of the small graph that was expanded.
    pub cluster_name: String,
    pub cluster: VarSet,
    pub clustered_graph: CausalGraph,
    pub clustered_inputs: Vec<Distribution>,
}

fn bern<R: Rng>(rng: &mut R, p: f64) -> bool {
    rng.gen::<f64>() < p
}

/// Small DAG over `X`, `Y`, `Z1..Zn` with every vertex an ancestor of `Y`.
fn base_graph<R: Rng>(rng: &mut R) -> Result<CausalGraph, GraphError> {
    let n = rng.gen_range(3..=6);
    let mut order: Vec<String> = std::iter::once("X".to_string())
        .chain((1..=n).map(|i| format!("Z{i}")))
        .collect();
    loop {
        order.shuffle(rng);
        if order[0] != "X" {
            break;
        }
    }
    order.push("Y".to_string());
    let mut g = CausalGraph::new();
    let ids: Vec<usize> = order.iter().map(|v| g.add_observed(v)).collect::<Result<_, _>>()?;
    let x_pos = order.iter().position(|v| v == "X").unwrap();
    for i in 0..ids.len() {
        let p = if i < x_pos { 0.35 } else { 0.5 };
        for j in i + 1..ids.len() {
            if bern(rng, p) {
                g.add_edge(ids[i], ids[j])?;
            }
        }
    }
    let y = VertexSet::singleton(*ids.last().unwrap());
    for i in (0..ids.len() - 1).rev() {
        let relevant = g.an_plus(y);
        if relevant.contains(ids[i]) {
            continue;
        }
        let later: Vec<usize> = ids[i + 1..].iter().copied().filter(|&w| relevant.contains(w)).collect();
        let w = *later.choose(rng).expect("Y is always available");
        g.add_edge(ids[i], w)?;
    }
    Ok(g)
}

struct Interior {
    r: Vec<String>,
    s: Option<String>,
    e: Vec<String>,
    edges: Vec<(String, String)>,
}

fn pick_group<R: Rng>(rng: &mut R, nonempty: bool, prefix: &str) -> Vec<String> {
    if !nonempty {
        Vec::new()
    } else if bern(rng, 0.5) {
        vec![format!("{prefix}1")]
    } else {
        vec![format!("{prefix}1"), format!("{prefix}2")]
    }
}

/// Draws receivers, optional internal vertex and emitters plus internal
/// edges; `None` when the wiring keeps failing.
fn interior<R: Rng>(rng: &mut R, has_pa: bool, has_ch: bool) -> Option<Interior> {
    let (r, s, e) = loop {
        let r = pick_group(rng, has_pa, "R");
        let e = pick_group(rng, has_ch, "E");
        let s = if bern(rng, 0.5) { Some("S".to_string()) } else { None };
        if r.len() + e.len() + s.is_some() as usize >= 2 {
            break (r, s, e);
        }
    };
    let order: Vec<String> = r.iter().cloned().chain(s.clone()).chain(e.iter().cloned()).collect();
    for _ in 0..INTERIOR_RETRIES {
        let mut edges = Vec::new();
        for i in 0..order.len() {
            for j in i + 1..order.len() {
                if bern(rng, 0.5) {
                    edges.push((order[i].clone(), order[j].clone()));
                }
            }
        }
        let mut g = CausalGraph::new();
        for v in &order {
            g.add_observed(v).ok()?;
        }
        for (a, b) in &edges {
            g.add_edge(g.id(a)?, g.id(b)?).ok()?;
        }
        let rs = g.set_of(&r).ok()?;
        let es = g.set_of(&e).ok()?;
        let r_ok = es.is_empty() || rs.iter().all(|v| g.descendants(VertexSet::singleton(v)).intersects(es));
        let e_ok = rs.is_empty() || es.iter().all(|v| g.ancestors(VertexSet::singleton(v)).intersects(rs));
        let s_ok = s.as_ref().is_none_or(|sv| {
            let id = g.id(sv).unwrap();
            !g.parents(id).is_empty() && !g.children(id).is_empty()
        });
        if r_ok && e_ok && s_ok {
            return Some(Interior { r, s, e, edges });
        }
    }
    None
}

const ROLE_P: [f64; 3] = [0.35, 0.125, 0.125];

fn draw_inputs<R: Rng>(rng: &mut R, names: &[String], k: usize) -> Vec<Distribution> {
    loop {
        let mut out = Vec::with_capacity(k);
        for _ in 0..k {
            let mut d = Distribution::new(Vec::<String>::new(), Vec::new(), Vec::new());
            for v in names {
                let u: f64 = rng.gen();
                if u < ROLE_P[0] {
                    d.measured.insert(v.clone());
                } else if u < ROLE_P[0] + ROLE_P[1] {
                    d.intervened.insert(v.clone());
                } else if u < ROLE_P[0] + ROLE_P[1] + ROLE_P[2] {
                    d.conditioned.insert(v.clone());
                }
            }
            out.push(d);
        }
        let ok = out.iter().all(|d| !d.measured.is_empty())
            && out
                .iter()
                .all(|d| !(d.measured.contains("Y") && d.intervened.contains("X")))
            && out.iter().any(|d| d.measured.contains("Y"))
            && out.iter().any(|d| d.contains("X"));
        if ok {
            return out;
        }
    }
}

/// Generates the instance for `seed`.
pub fn generate_instance(seed: u64) -> Result<SimInstance, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let small = base_graph(&mut rng)?;
    let zs: Vec<usize> = small
        .observed()
        .iter()
        .filter(|&v| small.name(v).starts_with('Z'))
        .collect();

    let (host, inner) = (0..1000)
        .find_map(|_| {
            let z = *zs.choose(&mut rng)?;
            let inner = interior(&mut rng, !small.parents(z).is_empty(), !small.children(z).is_empty())?;
            Some((z, inner))
        })
        .ok_or(SimError::NoHost)?;
    let host_name = small.name(host).to_string();

    // Expanded graph: the host is replaced by the interior.
    let mut g = CausalGraph::new();
    for v in small.observed() {
        if v != host {
            g.add_observed(small.name(v))?;
        }
    }
    let members: Vec<String> = inner
        .r
        .iter()
        .cloned()
        .chain(inner.s.clone())
        .chain(inner.e.iter().cloned())
        .collect();
    for m in &members {
        g.add_observed(m)?;
    }
    let id = |g: &CausalGraph, n: &str| g.id(n).expect("vertex exists");
    for (a, b) in small.edges() {
        if a != host && b != host {
            g.add_edge(id(&g, small.name(a)), id(&g, small.name(b)))?;
        }
    }
    for p in small.parents(host) {
        for r in &inner.r {
            g.add_edge(id(&g, small.name(p)), id(&g, r))?;
        }
    }
    for c in small.children(host) {
        for e in &inner.e {
            g.add_edge(id(&g, e), id(&g, small.name(c)))?;
        }
    }
    for (a, b) in &inner.edges {
        g.add_edge(id(&g, a), id(&g, b))?;
    }

    let n_inputs = rng.gen_range(2..=3);
    let names: Vec<String> = small.sorted_names(small.observed());
    let small_inputs = loop {
        let inputs = draw_inputs(&mut rng, &names, n_inputs);
        if inputs.iter().any(|d| d.contains(&host_name)) {
            break inputs;
        }
    };

    let emitters: VarSet = inner.e.iter().cloned().collect();
    let mut inputs = Vec::with_capacity(small_inputs.len());
    for d in &small_inputs {
        let mut q: VarSet = emitters.clone();
        if d.contains(&host_name) {
            for m in &members {
                if !emitters.contains(m) && bern(&mut rng, 0.5) {
                    q.insert(m.clone());
                }
            }
        }
        let swap = |s: &VarSet| -> VarSet {
            if s.contains(&host_name) {
                let mut out: VarSet = s.iter().filter(|v| **v != host_name).cloned().collect();
                out.extend(q.iter().cloned());
                out
            } else {
                s.clone()
            }
        };
        inputs.push(Distribution {
            measured: swap(&d.measured),
            intervened: swap(&d.intervened),
            conditioned: swap(&d.conditioned),
        });
    }

    let t = g.set_of(&members)?;
    let (clustered_graph, _) = apply_cluster(&g, t, Some(&host_name))?;
    let (clustered_inputs, _) = cluster_inputs(&g, &inputs, t, &host_name)?;
    debug_assert_eq!(clustered_inputs, small_inputs);
    debug_assert!(clustered_graph.same_structure(&small));
    Ok(SimInstance {
        seed,
        graph: g,
        inputs,
        query: Query::new(["Y"], ["X"]),
        cluster_name: host_name,
        cluster: members.into_iter().collect(),
        clustered_graph,
        clustered_inputs,
    })
}

/// Which clustered analysis settled the instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Setting {
    /// Identified in the clustered graph.
    A,
    /// Not identified in the clustered graph; inputs verified.
    B,
    /// Neither; the original graph had to be searched.
    C,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimRecord {
    pub seed: u64,
    pub graph_size: usize,
    pub n_inputs: usize,
    pub setting: Setting,
    pub t_unclustered_ms: f64,
    pub t_clustered_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Discard {
    /// The unclustered search hit the time limit.
    Timeout,
    /// A search hit its term or depth cap.
    Budget,
}

#[derive(Debug, Clone)]
pub enum InstanceOutcome {
    Kept(SimRecord),
    Discarded(u64, Discard),
}

/// Runs the three timed steps on one instance.
pub fn run_instance(inst: &SimInstance, budget: &SearchBudget) -> Result<InstanceOutcome, SimError> {
    let discard = |status: IdStatus, ms: f64, limit: Option<Duration>| -> Option<Discard> {
        if status != IdStatus::BudgetExceeded {
            None
        } else if limit.is_some_and(|l| ms >= l.as_secs_f64() * 1e3) {
            Some(Discard::Timeout)
        } else {
            Some(Discard::Budget)
        }
    };

    let t0 = Instant::now();
    let original = identify(&inst.graph, &inst.inputs, &inst.query, budget)?;
    let t1 = t0.elapsed().as_secs_f64() * 1e3;
    if let Some(d) = discard(original.status, t1, budget.time_limit) {
        return Ok(InstanceOutcome::Discarded(inst.seed, d));
    }

    let t0 = Instant::now();
    let found = enumerate_transit_clusters(&inst.graph, inst.graph.vertices().len(), true)?;
    let t2 = t0.elapsed().as_secs_f64() * 1e3;
    debug_assert!(found.contains(&inst.graph.set_of(&inst.cluster)?));

    let t0 = Instant::now();
    let clustered = identify(&inst.clustered_graph, &inst.clustered_inputs, &inst.query, budget)?;
    let t3 = t0.elapsed().as_secs_f64() * 1e3;
    if let Some(d) = discard(clustered.status, t3, budget.time_limit) {
        return Ok(InstanceOutcome::Discarded(inst.seed, d));
    }

    let (setting, t_clustered) = if clustered.is_identified() {
        (Setting::A, t2 + t3)
    } else {
        let t0 = Instant::now();
        let verified = verify_inputs(&inst.clustered_graph, &inst.clustered_inputs, &inst.cluster_name)?.result;
        let t4 = t0.elapsed().as_secs_f64() * 1e3;
        if verified {
            (Setting::B, t2 + t3 + t4)
        } else {
            (Setting::C, t2 + t3 + t4 + t1)
        }
    };
    Ok(InstanceOutcome::Kept(SimRecord {
        seed: inst.seed,
        graph_size: inst.graph.observed().len(),
        n_inputs: inst.inputs.len(),
        setting,
        t_unclustered_ms: t1,
        t_clustered_ms: t_clustered,
    }))
}

#[derive(Debug, Clone)]
pub struct CampaignConfig {
    pub instances: usize,
    pub base_seed: u64,
    pub workers: usize,
    pub budget: SearchBudget,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            instances: 2000,
            base_seed: 0,
            workers: 1,
            budget: SearchBudget {
                max_terms: 2_000_000,
                max_depth: 25,
                time_limit: Some(Duration::from_secs(60)),
            },
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Quantiles {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

impl Quantiles {
    /// Linear-interpolation quantiles; `None` for empty input.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(|a, b| a.total_cmp(b));
        let at = |p: f64| {
            let pos = p * (v.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
        };
        Some(Quantiles {
            median: at(0.5),
            q1: at(0.25),
            q3: at(0.75),
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CellSummary {
    pub graph_size: usize,
    pub setting: Setting,
    pub n: usize,
    /// Unclustered minus clustered time, in milliseconds.
    pub difference_ms: Quantiles,
    /// Unclustered over clustered time.
    pub ratio: Quantiles,
}

#[derive(Debug, Clone, Serialize)]
pub struct CampaignSummary {
    pub kept: usize,
    pub discarded_timeout: usize,
    pub discarded_budget: usize,
    pub setting_share: BTreeMap<Setting, f64>,
    pub cells: Vec<CellSummary>,
}

pub struct CampaignResult {
    pub records: Vec<SimRecord>,
    pub discarded: Vec<(u64, Discard)>,
    pub summary: CampaignSummary,
}

pub fn summarize(records: &[SimRecord], discarded: &[(u64, Discard)]) -> CampaignSummary {
    let mut groups: BTreeMap<(usize, Setting), Vec<&SimRecord>> = BTreeMap::new();
    let mut counts: BTreeMap<Setting, usize> = BTreeMap::new();
    for r in records {
        groups.entry((r.graph_size, r.setting)).or_default().push(r);
        *counts.entry(r.setting).or_default() += 1;
    }
    let cells = groups
        .into_iter()
        .map(|((graph_size, setting), rs)| {
            let diff: Vec<f64> = rs.iter().map(|r| r.t_unclustered_ms - r.t_clustered_ms).collect();
            let ratio: Vec<f64> = rs
                .iter()
                .map(|r| r.t_unclustered_ms / r.t_clustered_ms.max(1e-6))
                .collect();
            CellSummary {
                graph_size,
                setting,
                n: rs.len(),
                difference_ms: Quantiles::of(&diff).unwrap(),
                ratio: Quantiles::of(&ratio).unwrap(),
            }
        })
        .collect();
    let total = records.len().max(1) as f64;
    CampaignSummary {
        kept: records.len(),
        discarded_timeout: discarded.iter().filter(|d| d.1 == Discard::Timeout).count(),
        discarded_budget: discarded.iter().filter(|d| d.1 == Discard::Budget).count(),
        setting_share: [Setting::A, Setting::B, Setting::C]
            .into_iter()
            .map(|s| (s, *counts.get(&s).unwrap_or(&0) as f64 / total))
            .collect(),
        cells,
    }
}

/// Runs `config.instances` instances with seeds `base_seed + i`. Results
/// come back in seed order whatever the number of workers.
pub fn run_campaign(config: &CampaignConfig) -> Result<CampaignResult, SimError> {
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<(u64, InstanceOutcome)>> = Mutex::new(Vec::with_capacity(config.instances));
    let first_error: Mutex<Option<SimError>> = Mutex::new(None);
    std::thread::scope(|scope| {
        for _ in 0..config.workers.max(1) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= config.instances {
                    break;
                }
                let seed = config.base_seed + i as u64;
                let out = generate_instance(seed).and_then(|inst| run_instance(&inst, &config.budget));
                match out {
                    Ok(o) => results.lock().unwrap().push((seed, o)),
                    Err(e) => {
                        first_error.lock().unwrap().get_or_insert(e);
                        break;
                    }
                }
            });
        }
    });
    if let Some(e) = first_error.into_inner().unwrap() {
        return Err(e);
    }
    let mut results = results.into_inner().unwrap();
    results.sort_by_key(|r| r.0);
    let mut records = Vec::new();
    let mut discarded = Vec::new();
    for (_, o) in results {
        match o {
            InstanceOutcome::Kept(r) => records.push(r),
            InstanceOutcome::Discarded(s, d) => discarded.push((s, d)),
        }
    }
    let summary = summarize(&records, &discarded);
    Ok(CampaignResult {
        records,
        discarded,
        summary,
    })
}

pub fn write_csv<W: Write>(records: &[SimRecord], out: W) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Checks that the planted cluster really is a transit cluster.
pub fn cluster_is_valid(inst: &SimInstance) -> Result<bool, SimError> {
    let t = inst.graph.set_of(&inst.cluster)?;
    Ok(is_transit_cluster(&inst.graph, t)?.is_cluster)
}
