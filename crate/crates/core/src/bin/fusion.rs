use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use fusion_core::clustering::{apply_cluster, cluster_inputs, enumerate_transit_clusters, is_transit_cluster};
use fusion_core::invariance::{decide_invariance, Invariance};
use fusion_core::pipeline::{analyze, PipelineOptions, Verdict};
use fusion_core::problem::Problem;
use fusion_core::pruning::prune_all;
use fusion_core::sim::{run_campaign, write_csv, CampaignConfig};
use fusion_core::{identify, SearchBudget, VarSet};

/// Causal effect identification with pruning and transit clusters.
#[derive(Parser)]
#[command(name = "fusion", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Remove vertices that cannot matter for the query.
    Prune {
        problem: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// List transit clusters of the graph, largest first.
    Clusters {
        problem: PathBuf,
        /// Largest cluster size to try.
        #[arg(long, default_value_t = 8)]
        max_size: usize,
        /// Enumerate even when the candidate count is large.
        #[arg(long)]
        force: bool,
        #[arg(long)]
        json: bool,
    },
    /// Decide whether clustering preserves identifiability.
    Invariance {
        problem: PathBuf,
        /// Cluster to test, as NAME=v1,v2,...
        #[arg(long, value_parser = parse_cluster)]
        cluster: (String, Vec<String>),
        #[command(flatten)]
        budget: BudgetArgs,
        #[arg(long)]
        json: bool,
    },
    /// Identify the query, optionally after pruning and clustering.
    Identify {
        problem: PathBuf,
        /// Choose clusters automatically when none are given.
        #[arg(long)]
        auto: bool,
        #[arg(long)]
        no_prune: bool,
        #[arg(long)]
        no_cluster: bool,
        /// Cluster to apply, as NAME=v1,v2,... (repeatable).
        #[arg(long, value_parser = parse_cluster)]
        cluster: Vec<(String, Vec<String>)>,
        #[command(flatten)]
        budget: BudgetArgs,
        #[arg(long)]
        json: bool,
    },
    /// Run the clustered-versus-unclustered timing campaign.
    Simulate {
        #[arg(long, default_value_t = 2000)]
        instances: usize,
        /// Seed of the first instance; instance i uses seed + i.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Per-search time limit in seconds.
        #[arg(long, default_value_t = 60)]
        timeout: u64,
        #[arg(long, default_value = "sim.csv")]
        csv: PathBuf,
        #[arg(long, default_value = "sim_summary.json")]
        summary: PathBuf,
    },
}

#[derive(Args)]
struct BudgetArgs {
    /// Maximum number of terms generated by the search.
    #[arg(long, default_value_t = SearchBudget::default().max_terms)]
    budget_terms: usize,
    /// Maximum derivation depth.
    #[arg(long, default_value_t = SearchBudget::default().max_depth)]
    budget_depth: usize,
}

impl BudgetArgs {
    fn budget(&self) -> SearchBudget {
        SearchBudget {
            max_terms: self.budget_terms,
            max_depth: self.budget_depth,
            time_limit: None,
        }
    }
}

fn parse_cluster(s: &str) -> Result<(String, Vec<String>), String> {
    let (name, members) = s.split_once('=').ok_or("expected NAME=v1,v2,...")?;
    let members: Vec<String> = members
        .split(',')
        .map(str::trim)
        .filter(|m| !m.is_empty())
        .map(String::from)
        .collect();
    if name.trim().is_empty() || members.is_empty() {
        return Err("expected NAME=v1,v2,...".into());
    }
    Ok((name.trim().to_string(), members))
}

fn load(path: &Path) -> Result<Problem, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    Problem::parse(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn print_json<T: Serialize>(value: &T) -> Result<(), String> {
    let s = serde_json::to_string_pretty(value).map_err(|e| e.to_string())?;
    println!("{s}");
    Ok(())
}

fn join(s: &VarSet) -> String {
    s.iter().cloned().collect::<Vec<_>>().join(",")
}

enum Outcome {
    Decided,
    Undetermined,
}

fn cmd_prune(path: &Path, json: bool) -> Result<Outcome, String> {
    let p = load(path)?;
    let pruned = prune_all(&p.graph, &p.inputs, &p.query).map_err(|e| e.to_string())?;
    if json {
        print_json(&pruned)?;
        return Ok(Outcome::Decided);
    }
    for s in &pruned.steps {
        if s.applied {
            let via = s.via.as_ref().map(|v| format!(" via {v}")).unwrap_or_default();
            println!("{:?}{via}: removed {{{}}}", s.rule, join(&s.removed));
        } else {
            println!("{:?}: not applicable", s.rule);
            for c in s.conditions.iter().filter(|c| !c.holds) {
                println!("  {}: {}", c.id, c.detail);
            }
        }
    }
    println!("remaining graph:");
    print!("{}", pruned.graph.to_text());
    println!("inputs:");
    for d in &pruned.inputs {
        println!("  {d}");
    }
    println!("query: {}", pruned.query);
    Ok(Outcome::Decided)
}

#[derive(Serialize)]
struct ClusterLine {
    members: Vec<String>,
    receivers: VarSet,
    emitters: VarSet,
}

fn cmd_clusters(path: &Path, max_size: usize, force: bool, json: bool) -> Result<Outcome, String> {
    let p = load(path)?;
    let mut found = enumerate_transit_clusters(&p.graph, max_size, force).map_err(|e| e.to_string())?;
    found.sort_by_key(|t| (std::cmp::Reverse(t.len()), p.graph.sorted_names(*t)));
    let mut lines = Vec::with_capacity(found.len());
    for t in found {
        let check = is_transit_cluster(&p.graph, t).map_err(|e| e.to_string())?;
        lines.push(ClusterLine {
            members: p.graph.sorted_names(t),
            receivers: check.receivers,
            emitters: check.emitters,
        });
    }
    if json {
        print_json(&lines)?;
    } else {
        for l in &lines {
            println!(
                "{{{}}}  receivers {{{}}}  emitters {{{}}}",
                l.members.join(","),
                join(&l.receivers),
                join(&l.emitters)
            );
        }
        println!("{} clusters", lines.len());
    }
    Ok(Outcome::Decided)
}

fn cmd_invariance(
    path: &Path,
    cluster: &(String, Vec<String>),
    budget: SearchBudget,
    json: bool,
) -> Result<Outcome, String> {
    let p = load(path)?;
    let (name, members) = cluster;
    let t = p.graph.set_of(members).map_err(|e| e.to_string())?;
    let check = is_transit_cluster(&p.graph, t).map_err(|e| e.to_string())?;
    if !check.is_cluster {
        let failed: Vec<String> = check
            .conditions
            .iter()
            .filter(|c| !c.holds)
            .map(|c| format!("{}: {}", c.id, c.detail))
            .collect();
        return Err(format!("not a transit cluster: {}", failed.join("; ")));
    }
    let (gc, _) = apply_cluster(&p.graph, t, Some(name)).map_err(|e| e.to_string())?;
    let (ic, _) = cluster_inputs(&p.graph, &p.inputs, t, name).map_err(|e| e.to_string())?;
    let clustered = identify(&gc, &ic, &p.query, &budget).map_err(|e| e.to_string())?;
    let verdict =
        decide_invariance(&p.graph, &p.inputs, t, name, &p.query, clustered.status).map_err(|e| e.to_string())?;
    if json {
        #[derive(Serialize)]
        struct Report<'a> {
            clustered_inputs: Vec<String>,
            clustered: &'a fusion_core::IdentifyResult,
            invariance: &'a fusion_core::invariance::InvarianceVerdict,
        }
        print_json(&Report {
            clustered_inputs: ic.iter().map(|d| d.to_string()).collect(),
            clustered: &clustered,
            invariance: &verdict,
        })?;
    } else {
        println!(
            "clustered inputs: {}",
            ic.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(", ")
        );
        println!("clustered problem: {:?}", clustered.status);
        if let Some(e) = &clustered.expression {
            println!("clustered functional: {e}");
        }
        println!("verdict: {:?} ({:?})", verdict.verdict, verdict.basis);
        if let Some(tr) = &verdict.trace {
            for a in &tr.audits {
                println!(
                    "  input {} {}: line {} {} ({})",
                    a.input,
                    a.distribution,
                    a.line,
                    if a.passed { "pass" } else { "fail" },
                    a.detail
                );
            }
            println!("  returned {} at line {}", tr.result, tr.returned_at);
        }
    }
    Ok(match verdict.verdict {
        Invariance::Undetermined => Outcome::Undetermined,
        _ => Outcome::Decided,
    })
}

#[allow(clippy::too_many_arguments)]
fn cmd_identify(
    path: &Path,
    auto: bool,
    no_prune: bool,
    no_cluster: bool,
    clusters: Vec<(String, Vec<String>)>,
    budget: SearchBudget,
    json: bool,
) -> Result<Outcome, String> {
    let p = load(path)?;
    let opts = PipelineOptions {
        prune: !no_prune,
        cluster: !no_cluster && (auto || !clusters.is_empty()),
        clusters,
        budget,
        ..PipelineOptions::default()
    };
    let report = analyze(&p.graph, &p.inputs, &p.query, &opts).map_err(|e| e.to_string())?;
    if json {
        print_json(&report)?;
    } else {
        println!("query: {}", p.query);
        println!("verdict: {}", report.label);
        if let Some(e) = &report.expression {
            println!("functional: {e}");
        }
        if let Some(pr) = &report.pruning {
            let removed = pr.removed();
            if !removed.is_empty() {
                println!("pruned: {{{}}}", join(&removed));
            }
        }
        for c in &report.clusters {
            match &c.invariance {
                Some(v) => println!(
                    "cluster {} = {{{}}}: {} ({})",
                    c.mapping.name,
                    join(&c.mapping.members),
                    snake(&v.verdict),
                    snake(&v.basis)
                ),
                None => println!("cluster {} = {{{}}}", c.mapping.name, join(&c.mapping.members)),
            }
        }
        println!("justification: {}", report.justification);
    }
    Ok(match report.verdict {
        Verdict::Undetermined => Outcome::Undetermined,
        _ => Outcome::Decided,
    })
}

/// The serialised name of a unit enum variant.
fn snake<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|j| j.as_str().map(str::to_string))
        .unwrap_or_default()
}

fn cmd_simulate(
    instances: usize,
    seed: u64,
    workers: usize,
    timeout: u64,
    csv: &Path,
    summary: &Path,
) -> Result<Outcome, String> {
    if instances == 0 {
        return Err("--instances must be at least 1".into());
    }
    let mut config = CampaignConfig {
        instances,
        base_seed: seed,
        workers,
        ..CampaignConfig::default()
    };
    config.budget.time_limit = Some(Duration::from_secs(timeout));
    let result = run_campaign(&config).map_err(|e| e.to_string())?;
    let out = File::create(csv).map_err(|e| format!("{}: {e}", csv.display()))?;
    write_csv(&result.records, BufWriter::new(out)).map_err(|e| e.to_string())?;
    let s = serde_json::to_string_pretty(&result.summary).map_err(|e| e.to_string())?;
    std::fs::write(summary, s).map_err(|e| format!("{}: {e}", summary.display()))?;
    let share = &result.summary.setting_share;
    println!(
        "{} kept, {} timed out, {} over budget; A {:.1}% B {:.1}% C {:.1}%",
        result.summary.kept,
        result.summary.discarded_timeout,
        result.summary.discarded_budget,
        100.0 * share.values().next().copied().unwrap_or(0.0),
        100.0 * share.values().nth(1).copied().unwrap_or(0.0),
        100.0 * share.values().nth(2).copied().unwrap_or(0.0),
    );
    Ok(Outcome::Decided)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Prune { problem, json } => cmd_prune(&problem, json),
        Command::Clusters {
            problem,
            max_size,
            force,
            json,
        } => cmd_clusters(&problem, max_size, force, json),
        Command::Invariance {
            problem,
            cluster,
            budget,
            json,
        } => cmd_invariance(&problem, &cluster, budget.budget(), json),
        Command::Identify {
            problem,
            auto,
            no_prune,
            no_cluster,
            cluster,
            budget,
            json,
        } => cmd_identify(&problem, auto, no_prune, no_cluster, cluster, budget.budget(), json),
        Command::Simulate {
            instances,
            seed,
            workers,
            timeout,
            csv,
            summary,
        } => cmd_simulate(instances, seed, workers, timeout, &csv, &summary),
    };
    match result {
        Ok(Outcome::Decided) => ExitCode::SUCCESS,
        Ok(Outcome::Undetermined) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
