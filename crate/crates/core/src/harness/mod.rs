//! Seeded single runs and batch experiments, with rate and latency reports.

mod trace_io;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::planner::{receding_horizon_run, Outcome, PlannerError, Trace};
use crate::scenarios::{scenario_by_name, Overrides, ScenarioConfig, ScenarioError};

pub use trace_io::{export_trace, import_trace, read_trace, write_trace, TraceHeader, SCHEMA_VERSION};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error("no reference cost{}", seed.map(|s| format!(" for seed {s}")).unwrap_or_default())]
    MissingReference { seed: Option<u64> },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("trace format error at record {index}: {message}")]
    Format { index: usize, message: String },
    #[error("runs_per_cell must be at least 1")]
    NoRuns,
    #[error("thread pool: {0}")]
    Pool(String),
}

/// Runs one receding-horizon episode. `seed` becomes the planner seed.
pub fn run_one(config: &ScenarioConfig, seed: u64) -> Result<Trace, HarnessError> {
    let mut cfg = config.clone();
    cfg.planner.rng_seed = seed;
    let sc = cfg.build()?;
    Ok(receding_horizon_run(&sc.world, &sc.planner, &sc.problem(), sc.max_steps)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub outcome: Outcome,
    pub steps: usize,
    pub total_cost: f64,
    pub near_optimal: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub samples: usize,
    pub mean: f64,
    pub p50: f64,
    pub p90: f64,
    pub p99: f64,
    pub max: f64,
}

impl LatencyStats {
    pub fn from_samples(samples: &[f64]) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        let mut v = samples.to_vec();
        v.sort_by(f64::total_cmp);
        let q = |p: f64| v[((p * (v.len() - 1) as f64).round() as usize).min(v.len() - 1)];
        Self {
            samples: v.len(),
            mean: v.iter().sum::<f64>() / v.len() as f64,
            p50: q(0.5),
            p90: q(0.9),
            p99: q(0.99),
            max: v[v.len() - 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub scenario: String,
    pub iterations: usize,
    pub runs: usize,
    pub successes: usize,
    pub collisions: usize,
    pub timeouts: usize,
    pub success_rate: f64,
    pub collision_rate: f64,
    pub timeout_rate: f64,
    /// Present only once reference costs have been supplied.
    pub near_optimal_rate: Option<f64>,
    pub near_optimal_epsilon: Option<f64>,
    /// Planning latency in seconds over every plan call of the cell.
    pub latency: LatencyStats,
    pub per_run: Vec<RunSummary>,
}

impl BatchReport {
    pub fn from_runs(scenario: &str, iterations: usize, runs: Vec<(RunSummary, Vec<f64>)>) -> Self {
        let n = runs.len();
        let count = |o: Outcome| runs.iter().filter(|(r, _)| r.outcome == o).count();
        let (successes, collisions, timeouts) = (count(Outcome::Success), count(Outcome::Collision), count(Outcome::Timeout));
        let latencies: Vec<f64> = runs.iter().flat_map(|(_, l)| l.iter().copied()).collect();
        Self {
            scenario: scenario.to_owned(),
            iterations,
            runs: n,
            successes,
            collisions,
            timeouts,
            success_rate: successes as f64 / n as f64,
            collision_rate: collisions as f64 / n as f64,
            timeout_rate: timeouts as f64 / n as f64,
            near_optimal_rate: None,
            near_optimal_epsilon: None,
            latency: LatencyStats::from_samples(&latencies),
            per_run: runs.into_iter().map(|(r, _)| r).collect(),
        }
    }

    /// Scores every run against its seed's reference cost. Fails if any
    /// seed has no reference.
    pub fn attach_near_optimal(&mut self, references: &BTreeMap<u64, f64>, epsilon: f64) -> Result<(), HarnessError> {
        let mut hits = 0;
        for r in &mut self.per_run {
            let reference = references.get(&r.seed).copied();
            let ok = is_near_optimal(r.outcome, r.total_cost, reference, epsilon)
                .ok_or(HarnessError::MissingReference { seed: Some(r.seed) })?;
            r.near_optimal = Some(ok);
            hits += ok as usize;
        }
        self.near_optimal_rate = Some(hits as f64 / self.runs as f64);
        self.near_optimal_epsilon = Some(epsilon);
        Ok(())
    }
}

pub const DEFAULT_EPSILON: f64 = 0.1;

/// A run is near-optimal when it succeeded with a total cost within
/// `(1 + epsilon)` of the reference cost for the same instance.
pub fn classify_near_optimal(trace: &Trace, reference_cost: Option<f64>, epsilon: f64) -> Result<bool, HarnessError> {
    is_near_optimal(trace.outcome, trace.total_cost, reference_cost, epsilon)
        .ok_or(HarnessError::MissingReference { seed: None })
}

fn is_near_optimal(outcome: Outcome, total_cost: f64, reference: Option<f64>, epsilon: f64) -> Option<bool> {
    reference.map(|r| outcome == Outcome::Success && total_cost <= (1.0 + epsilon) * r)
}

/// Seed of the `i`-th run of every cell. Cells share instances so budgets
/// are compared on the same worlds.
pub fn run_seed(base_seed: u64, i: usize) -> u64 {
    base_seed.wrapping_add(i as u64)
}

fn run_job(scenario: &str, iterations: usize, seed: u64, overrides: &Overrides) -> Result<(RunSummary, Vec<f64>), HarnessError> {
    let ov = Overrides {
        iterations: Some(iterations),
        ..overrides.clone()
    };
    let cfg = scenario_by_name(scenario, seed, &ov)?;
    let trace = run_one(&cfg, seed)?;
    Ok((
        RunSummary {
            seed,
            outcome: trace.outcome,
            steps: trace.steps(),
            total_cost: trace.total_cost,
            near_optimal: None,
        },
        trace.latencies,
    ))
}

/// One report per iteration budget, each over `runs` seeded instances.
/// `parallel` caps the worker threads; `None` uses every core.
pub fn run_batch(
    scenario: &str,
    iterations_list: &[usize],
    runs: usize,
    base_seed: u64,
    overrides: &Overrides,
    parallel: Option<usize>,
) -> Result<Vec<BatchReport>, HarnessError> {
    if runs < 1 {
        return Err(HarnessError::NoRuns);
    }
    scenario_by_name(scenario, base_seed, overrides)?;
    let jobs: Vec<(usize, u64)> = iterations_list
        .iter()
        .flat_map(|&it| (0..runs).map(move |i| (it, run_seed(base_seed, i))))
        .collect();
    let execute = || -> Result<Vec<_>, HarnessError> {
        jobs.par_iter()
            .map(|&(it, seed)| run_job(scenario, it, seed, overrides))
            .collect()
    };
    let results = match parallel {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| HarnessError::Pool(e.to_string()))?
            .install(execute)?,
        None => execute()?,
    };
    let mut results = results.into_iter();
    Ok(iterations_list
        .iter()
        .map(|&it| BatchReport::from_runs(scenario, it, results.by_ref().take(runs).collect()))
        .collect())
}

/// Total cost of a high-budget run of each instance, used as the yardstick
/// for the near-optimal rate.
pub fn reference_costs(
    scenario: &str,
    seeds: &[u64],
    iterations: usize,
    overrides: &Overrides,
    parallel: Option<usize>,
) -> Result<BTreeMap<u64, f64>, HarnessError> {
    let execute = || -> Result<Vec<(u64, f64)>, HarnessError> {
        seeds
            .par_iter()
            .map(|&seed| run_job(scenario, iterations, seed, overrides).map(|(r, _)| (seed, r.total_cost)))
            .collect()
    };
    let out = match parallel {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| HarnessError::Pool(e.to_string()))?
            .install(execute)?,
        None => execute()?,
    };
    Ok(out.into_iter().collect())
}

fn pct(x: f64) -> String {
    format!("{:.2}%", 100.0 * x)
}

/// Plain-text table with one row per report.
pub fn format_table(reports: &[BatchReport]) -> String {
    let header = [
        "Scenario",
        "Iterations",
        "Runs",
        "Success",
        "Near-optimal",
        "Collision",
        "Timeout",
        "p50 plan (ms)",
    ];
    let rows: Vec<[String; 8]> = reports
        .iter()
        .map(|r| {
            [
                r.scenario.to_uppercase(),
                r.iterations.to_string(),
                r.runs.to_string(),
                pct(r.success_rate),
                r.near_optimal_rate.map_or_else(|| "n/a".to_owned(), pct),
                pct(r.collision_rate),
                pct(r.timeout_rate),
                format!("{:.1}", 1e3 * r.latency.p50),
            ]
        })
        .collect();
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let line = |cells: &[&str], out: &mut String| {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(&header, &mut out);
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    let _ = writeln!(out, "{}", rule.join("  "));
    for row in &rows {
        let cells: Vec<&str> = row.iter().map(String::as_str).collect();
        line(&cells, &mut out);
    }
    out
}
