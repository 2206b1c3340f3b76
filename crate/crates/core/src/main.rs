use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use drive_mcts::harness::{
    export_trace, format_table, reference_costs, run_batch, run_one, run_seed, HarnessError, DEFAULT_EPSILON,
};
use drive_mcts::scenarios::{scenario_by_name, Overrides, ScenarioConfig, ScenarioError, SCENARIO_NAMES};

#[derive(Parser)]
#[command(name = "drive-mcts", version, about = "Tree-search behavior planner and traffic simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct PlannerArgs {
    #[arg(long)]
    lookahead: Option<usize>,
    #[arg(long)]
    t1: Option<f64>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    ucb_const: Option<f64>,
}

impl PlannerArgs {
    fn overrides(&self, iterations: Option<usize>) -> Overrides {
        Overrides {
            iterations,
            lookahead_depth: self.lookahead,
            t1: self.t1,
            horizon: self.horizon,
            ucb_const: self.ucb_const,
            rng_seed: None,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one episode and optionally write its trace.
    Run {
        /// Built-in scenario name.
        #[arg(long, conflicts_with = "config", required_unless_present = "config")]
        scenario: Option<String>,
        /// Scenario config file (TOML).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        iterations: Option<usize>,
        #[command(flatten)]
        planner: PlannerArgs,
        /// Trace output path (NDJSON).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run seeded episodes for each iteration budget and report rates.
    Batch {
        #[arg(long)]
        scenario: String,
        #[arg(long, value_delimiter = ',', default_value = "1000,2000,2500,3000")]
        iterations: Vec<usize>,
        #[arg(long, default_value_t = 300)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        base_seed: u64,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Worker threads (defaults to all cores).
        #[arg(long)]
        parallel: Option<usize>,
        /// Reference costs from `reference`, enabling the near-optimal rate.
        #[arg(long)]
        references: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_EPSILON)]
        epsilon: f64,
        #[command(flatten)]
        planner: PlannerArgs,
    },
    /// Compute high-budget reference costs per seed.
    Reference {
        #[arg(long)]
        scenario: String,
        #[arg(long, default_value_t = 300)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        base_seed: u64,
        #[arg(long, default_value_t = 50_000)]
        iterations: usize,
        #[arg(long)]
        parallel: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        planner: PlannerArgs,
    },
    /// Check a scenario config file.
    Validate { path: PathBuf },
    /// Print the generated config of a built-in scenario as TOML.
    Config {
        #[arg(long)]
        scenario: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Scenario(e) => Failure::Usage(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn load_config(path: &Path) -> Result<ScenarioConfig, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let cfg = ScenarioConfig::from_toml_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    cfg.validate()
        .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    Ok(cfg)
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run {
            scenario,
            config,
            seed,
            iterations,
            planner,
            out,
        } => {
            let overrides = planner.overrides(iterations);
            let cfg = match (scenario, config) {
                (_, Some(path)) => {
                    let mut cfg = load_config(&path)?;
                    overrides.apply(&mut cfg);
                    cfg
                }
                (Some(name), None) => scenario_by_name(&name, seed, &overrides)?,
                (None, None) => return Err(Failure::Usage("need --scenario or --config".into())),
            };
            let sc = cfg.build()?;
            let trace = run_one(&cfg, seed)?;
            let latency = drive_mcts::harness::LatencyStats::from_samples(&trace.latencies);
            println!(
                "{}: outcome={:?} steps={} total_cost={:.3} median_plan_ms={:.2}",
                cfg.name,
                trace.outcome,
                trace.steps(),
                trace.total_cost,
                1e3 * latency.p50
            );
            if let Some(path) = out {
                export_trace(&trace, &cfg.name, sc.planner.t1, &sc.map, &path)?;
            }
            Ok(())
        }
        Command::Batch {
            scenario,
            iterations,
            runs,
            base_seed,
            out_dir,
            parallel,
            references,
            epsilon,
            planner,
        } => {
            if !SCENARIO_NAMES.contains(&scenario.as_str()) {
                return Err(Failure::Usage(format!("unknown scenario {scenario:?}")));
            }
            let refs: Option<BTreeMap<u64, f64>> = match references {
                Some(p) => {
                    let text = fs::read_to_string(&p).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?;
                    Some(serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?)
                }
                None => None,
            };
            let mut reports = run_batch(&scenario, &iterations, runs, base_seed, &planner.overrides(None), parallel)?;
            if let Some(refs) = &refs {
                for r in &mut reports {
                    r.attach_near_optimal(refs, epsilon)?;
                }
            }
            let table = format_table(&reports);
            print!("{table}");
            if let Some(dir) = out_dir {
                fs::create_dir_all(&dir).map_err(|e| Failure::Runtime(format!("{}: {e}", dir.display())))?;
                for r in &reports {
                    let json = serde_json::to_string_pretty(r).expect("reports serialize");
                    write_file(&dir.join(format!("{}_{}.json", r.scenario, r.iterations)), &json)?;
                }
                write_file(&dir.join(format!("{scenario}_table.txt")), &table)?;
            }
            Ok(())
        }
        Command::Reference {
            scenario,
            runs,
            base_seed,
            iterations,
            parallel,
            out,
            planner,
        } => {
            let seeds: Vec<u64> = (0..runs).map(|i| run_seed(base_seed, i)).collect();
            let refs = reference_costs(&scenario, &seeds, iterations, &planner.overrides(None), parallel)?;
            let json = serde_json::to_string_pretty(&refs).expect("map serializes");
            write_file(&out, &json)?;
            println!("wrote {} reference costs to {}", refs.len(), out.display());
            Ok(())
        }
        Command::Validate { path } => {
            let cfg = load_config(&path)?;
            println!("{}: ok ({})", path.display(), cfg.name);
            Ok(())
        }
        Command::Config { scenario, seed } => {
            let cfg = scenario_by_name(&scenario, seed, &Overrides::default())?;
            print!("{}", cfg.to_toml_string());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
