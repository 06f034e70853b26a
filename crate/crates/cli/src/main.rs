use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use loopsched::experiment::{cmd_report, cmd_sweep, parse_portfolio, workers_from_env, Method};
use loopsched::perturbation::{load_scenario_file, scenario_by_name};
use loopsched::sim::{simulate_time_stepping, write_outcome, TimeSteppingInput};
use loopsched::simas::{
    complete_parameters, run_with_simas, run_with_simas_time_stepping, write_simas_logs,
};
use loopsched::workload::{generate_workload, load_flop_file, standard_distributions};
use loopsched::{
    simulate, DistributionSpec, Error, Platform, Scenario, SimInput, SimOutcome, SimasConfig,
    Technique, Workload,
};

#[derive(Parser)]
#[command(
    name = "loopsched",
    version,
    about = "Self-scheduled loop simulations, sweeps and reports"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one loop execution.
    Simulate(Box<SimulateArgs>),
    /// Run every cell of a sweep manifest.
    Sweep {
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Normalized tables, heatmaps and selection frequencies of a sweep.
    Report {
        results: PathBuf,
        /// Defaults to `<results>/report`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct SimulateArgs {
    /// Built-in platform (mini128, mini416) or platform file.
    #[arg(long)]
    platform: String,
    /// FLOP file, one iteration per line.
    #[arg(long, conflicts_with = "gen", required_unless_present = "gen")]
    workload: Option<PathBuf>,
    /// Generated workload: a standard name or KIND,PARAMS[,SEED].
    #[arg(long)]
    gen: Option<String>,
    /// Iterations of a generated workload.
    #[arg(long, default_value_t = 400_000)]
    n: usize,
    /// Technique name or SIMAS.
    #[arg(long)]
    dls: String,
    #[arg(long, default_value = "np", conflicts_with = "scenario_file")]
    scenario: String,
    #[arg(long)]
    scenario_file: Option<PathBuf>,
    #[arg(long)]
    max_sim_time: Option<f64>,
    /// Scheduling overhead per chunk (FSC).
    #[arg(long)]
    h: Option<f64>,
    /// Iteration time standard deviation (FSC).
    #[arg(long)]
    sigma: Option<f64>,
    /// Comma-separated relative PE weights.
    #[arg(long)]
    weights: Option<String>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    timesteps: usize,
    /// Comma-separated SIMAS portfolio.
    #[arg(long)]
    portfolio: Option<String>,
    /// SIMAS poll interval in seconds.
    #[arg(long)]
    poll: Option<f64>,
    /// SIMAS prediction interval in seconds.
    #[arg(long)]
    resim: Option<f64>,
    /// Let SIMAS predictions see the true perturbations.
    #[arg(long)]
    oracle: bool,
}

/// Failure classes with their exit codes.
enum Failure {
    /// Bad flag values: 2.
    Usage(String),
    /// Unreadable or malformed files: 3.
    File(Error),
    /// Anything else: 1.
    Runtime(Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::File(_) => 3,
            Failure::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) => f.write_str(m),
            Failure::File(e) | Failure::Runtime(e) => e.fmt(f),
        }
    }
}

fn classify(e: Error) -> Failure {
    match e {
        Error::Io { .. } | Error::Parse { .. } => Failure::File(e),
        other => Failure::Usage(other.to_string()),
    }
}

fn runtime(e: Error) -> Failure {
    match e {
        Error::Io { .. } | Error::Parse { .. } => Failure::File(e),
        other => Failure::Runtime(other),
    }
}

fn usage(flag: &str, e: impl std::fmt::Display) -> Failure {
    Failure::Usage(format!("--{flag}: {e}"))
}

fn load_platform(name: &str) -> Result<Platform, Failure> {
    match Platform::builtin(name) {
        Some(p) => Ok(p),
        None => Platform::load(Path::new(name)).map_err(classify),
    }
}

fn gen_spec(value: &str, seed: u64) -> Result<DistributionSpec, Failure> {
    if let Some((_, d)) = standard_distributions()
        .into_iter()
        .find(|(n, _)| *n == value)
    {
        return Ok(DistributionSpec::new(d, seed));
    }
    DistributionSpec::parse(value, Some(seed)).map_err(|e| usage("gen", e))
}

fn parse_weights(csv: &str) -> Result<Vec<f64>, Failure> {
    csv.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| usage("weights", format!("malformed weight `{v}`")))
        })
        .collect()
}

/// Chains per-step outcomes into one: all chunks, last finishing times.
fn merge_steps(steps: Vec<SimOutcome>) -> SimOutcome {
    let mut it = steps.into_iter();
    let mut total = it.next().expect("at least one step");
    for s in it {
        total.finished_tasks += s.finished_tasks;
        total.completed &= s.completed;
        total.sim_time = s.sim_time;
        total.events += s.events;
        total.chunk_log.extend(s.chunk_log);
        for (a, b) in total.per_pe_finish.iter_mut().zip(&s.per_pe_finish) {
            *a = a.max(*b);
        }
        total.final_stats = s.final_stats;
    }
    total
}

fn run_simulate(a: SimulateArgs) -> Result<(), Failure> {
    let method: Method = a.dls.parse().map_err(|e| usage("dls", e))?;
    if a.timesteps == 0 {
        return Err(usage("timesteps", "must be at least 1"));
    }
    let platform = load_platform(&a.platform)?;
    let steps: Vec<Workload> = match (&a.workload, &a.gen) {
        (Some(path), _) => vec![load_flop_file(path).map_err(classify)?; a.timesteps],
        (None, Some(g)) => {
            let spec = gen_spec(g, a.seed)?;
            (0..a.timesteps as u64)
                .map(|k| {
                    let mut s = spec;
                    s.seed = s.seed.wrapping_add(k << 32);
                    generate_workload(&s, a.n).map_err(|e| usage("n", e))
                })
                .collect::<Result<_, _>>()?
        }
        (None, None) => unreachable!("clap requires one of --workload and --gen"),
    };
    let scenario: Scenario = match &a.scenario_file {
        Some(p) => load_scenario_file(p, a.seed).map_err(classify)?,
        None => scenario_by_name(&a.scenario, a.seed).map_err(|e| usage("scenario", e))?,
    };

    let mut input = SimInput::new(&platform, &steps[0], &scenario, Technique::SS);
    input.config.h = a.h;
    input.config.sigma = a.sigma;
    if let Some(w) = &a.weights {
        input.config.weights = Some(parse_weights(w)?);
    }
    if let Some(t) = a.max_sim_time {
        input.max_sim_time = t;
    }
    complete_parameters(&mut input);
    fs::create_dir_all(&a.out).map_err(|e| {
        Failure::File(Error::Io {
            path: a.out.display().to_string(),
            source: e,
        })
    })?;

    let outcome = match method {
        Method::Dls(t) => {
            input.technique = t;
            if a.timesteps > 1 {
                let ts = TimeSteppingInput {
                    steps: &steps,
                    carry_weights: true,
                };
                merge_steps(simulate_time_stepping(&input, &ts).map_err(classify)?)
            } else {
                simulate(&input).map_err(classify)?
            }
        }
        Method::Simas => {
            let mut cfg = SimasConfig::default();
            if let Some(p) = &a.portfolio {
                cfg.portfolio = parse_portfolio(p).map_err(|e| usage("portfolio", e))?;
            }
            if let Some(p) = a.poll {
                cfg.poll_interval = p;
            }
            if let Some(r) = a.resim {
                cfg.resim_interval = r;
            }
            let run = if a.timesteps > 1 {
                cfg.default_technique = Technique::WF;
                let all = run_with_simas_time_stepping(&input, &steps, true, &cfg, a.oracle)
                    .map_err(classify)?;
                let mut merged = all[0].clone();
                merged.outcome = merge_steps(all.iter().map(|o| o.outcome.clone()).collect());
                merged.selections = all.iter().flat_map(|o| o.selections.clone()).collect();
                merged.prediction_events = all.iter().map(|o| o.prediction_events).sum();
                merged.batches = all.iter().map(|o| o.batches).sum();
                merged.prediction_time = all.iter().map(|o| o.prediction_time).sum();
                merged
            } else {
                run_with_simas(&input, &cfg, a.oracle).map_err(classify)?
            };
            write_simas_logs(&run, &cfg.portfolio, &a.out).map_err(runtime)?;
            println!("prediction_overhead_percent={}", run.overhead_percent());
            run.outcome
        }
    };
    write_outcome(&outcome, &a.out).map_err(runtime)?;
    let n: usize = steps.iter().map(Workload::len).sum();
    println!(
        "sim_time={} finished_tasks={} of {n}",
        outcome.sim_time, outcome.finished_tasks
    );
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate(a) => run_simulate(*a),
        Command::Sweep { manifest, out } => {
            let results = cmd_sweep(&manifest, &out, workers_from_env()).map_err(runtime)?;
            let failed = results.iter().filter(|c| c.status() != "ok").count();
            println!(
                "{} cells, {failed} with failures, results in {}",
                results.len(),
                out.display()
            );
            Ok(())
        }
        Command::Report { results, out } => {
            let out = out.unwrap_or_else(|| results.join("report"));
            let s = cmd_report(&results, &out).map_err(runtime)?;
            println!(
                "{} groups, {} rows, {} missing cells, report in {}",
                s.groups,
                s.rows,
                s.missing,
                out.display()
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}
