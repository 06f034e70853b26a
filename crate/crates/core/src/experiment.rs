//! Factorial sweeps and their reports.
//!
//! A manifest lists one axis per line:
//!
//! ```text
//! # comment
//! axis workload constant uniform gamma,2,1e8,4.1e6,2.7e9 file:trace.flops
//! axis n 400000
//! axis platform mini128 platforms/custom.txt
//! axis scenario np pea-cs file:custom.scn
//! axis technique STATIC SS AWF-B SIMAS
//! axis repetitions 5
//! axis seed 1
//! ```
//!
//! `workload`, `platform`, `scenario` and `technique` are required; the cross
//! product of `workload`, `n`, `platform`, `scenario` and `technique` forms
//! the cells. Optional single-valued axes: `n` (iterations of generated
//! workloads), `repetitions` (1), `seed` (1), `timesteps` (1),
//! `max_sim_time` (unbounded), `portfolio` (comma separated),
//! `oracle` (`false`), `poll` (5) and `resim` (50).
//!
//! Repetition `r` uses seed `seed + r` for the scenario and shifts the
//! workload generation seed by `r`.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;

use crate::dls::Technique;
use crate::error::{read_to_string, write_string, Error, Result};
use crate::metrics::{self, imbalance, ReportRow};
use crate::perturbation::{load_scenario_file, scenario_by_name, Scenario};
use crate::platform::Platform;
use crate::sim::{
    per_pe_csv, simulate, simulate_time_stepping, summary_csv, SimInput, TimeSteppingInput,
};
use crate::simas::{
    complete_parameters, overhead_csv, run_with_simas, run_with_simas_time_stepping,
    selection_log_csv, Reason, SimasConfig,
};
use crate::workload::{
    generate_workload, load_flop_file, standard_distributions, DistributionSpec, Workload,
};

/// Environment variable bounding sweep parallelism.
pub const WORKERS_ENV: &str = "LOOPSCHED_WORKERS";

/// A fixed technique or the selection loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Dls(Technique),
    Simas,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Dls(t) => t.fmt(f),
            Method::Simas => f.write_str("SIMAS"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.trim().eq_ignore_ascii_case("SIMAS") {
            Ok(Method::Simas)
        } else {
            s.parse().map(Method::Dls)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum WorkloadSource {
    Generated(DistributionSpec),
    File(PathBuf),
}

impl WorkloadSource {
    /// Generated spec (`constant`, `uniform,1e3,7e8`, ...) or `file:PATH`.
    pub fn parse(value: &str, default_seed: u64, base: &Path) -> Result<Self> {
        if let Some(path) = value.strip_prefix("file:") {
            return Ok(WorkloadSource::File(base.join(path)));
        }
        if let Some((_, d)) = standard_distributions()
            .into_iter()
            .find(|(n, _)| *n == value)
        {
            return Ok(WorkloadSource::Generated(DistributionSpec::new(
                d,
                default_seed,
            )));
        }
        DistributionSpec::parse(value, Some(default_seed)).map(WorkloadSource::Generated)
    }

    pub fn label(&self) -> String {
        match self {
            WorkloadSource::Generated(spec) => spec.label(),
            WorkloadSource::File(p) => format!("file:{}", p.display()),
        }
    }

    fn load(&self, n: usize, rep: u64, step: u64) -> Result<Workload> {
        match self {
            WorkloadSource::Generated(spec) => {
                let mut spec = *spec;
                spec.seed = spec.seed.wrapping_add(rep).wrapping_add(step << 32);
                generate_workload(&spec, n)
            }
            WorkloadSource::File(p) => load_flop_file(p),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioSource {
    Named(String),
    File(PathBuf),
}

impl ScenarioSource {
    pub fn label(&self) -> String {
        match self {
            ScenarioSource::Named(n) => n.clone(),
            ScenarioSource::File(p) => format!("file:{}", p.display()),
        }
    }

    fn load(&self, seed: u64) -> Result<Scenario> {
        match self {
            ScenarioSource::Named(n) => scenario_by_name(n, seed),
            ScenarioSource::File(p) => load_scenario_file(p, seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepManifest {
    pub workloads: Vec<WorkloadSource>,
    pub n: Vec<usize>,
    /// Built-in platform names or paths.
    pub platforms: Vec<String>,
    pub scenarios: Vec<ScenarioSource>,
    pub techniques: Vec<Method>,
    pub repetitions: usize,
    pub seed: u64,
    pub timesteps: usize,
    pub max_sim_time: f64,
    pub simas: SimasConfig,
    pub oracle: bool,
    base: PathBuf,
}

/// One point of the cross product.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub index: usize,
    pub workload: usize,
    pub n: usize,
    pub platform: usize,
    pub scenario: usize,
    pub method: Method,
}

impl SweepManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = read_to_string(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, &path.display().to_string(), base)
    }

    /// Parses manifest text; relative paths resolve against `base`.
    pub fn parse(text: &str, origin: &str, base: &Path) -> Result<Self> {
        let mut axes: BTreeMap<String, (usize, Vec<String>)> = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = line.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            let mut words = line.split_whitespace();
            if words.next() != Some("axis") {
                return Err(Error::parse(
                    origin,
                    lineno,
                    "expected `axis <name> <values...>`",
                ));
            }
            let name = words
                .next()
                .ok_or_else(|| Error::parse(origin, lineno, "missing axis name"))?;
            let values: Vec<String> = words.map(str::to_string).collect();
            if values.is_empty() {
                return Err(Error::parse(
                    origin,
                    lineno,
                    format!("axis `{name}` has no values"),
                ));
            }
            if axes.insert(name.to_string(), (lineno, values)).is_some() {
                return Err(Error::parse(
                    origin,
                    lineno,
                    format!("axis `{name}` repeated"),
                ));
            }
        }

        let take =
            |axes: &mut BTreeMap<String, (usize, Vec<String>)>, name: &str| axes.remove(name);
        let required = |v: Option<(usize, Vec<String>)>, name: &str| {
            v.ok_or_else(|| Error::parse(origin, 0, format!("missing axis `{name}`")))
        };
        fn single<T: FromStr>(
            origin: &str,
            name: &str,
            v: Option<(usize, Vec<String>)>,
            default: T,
        ) -> Result<T> {
            match v {
                None => Ok(default),
                Some((line, vals)) => {
                    if vals.len() != 1 {
                        return Err(Error::parse(
                            origin,
                            line,
                            format!("axis `{name}` takes one value"),
                        ));
                    }
                    vals[0].parse().map_err(|_| {
                        Error::parse(origin, line, format!("malformed {name} `{}`", vals[0]))
                    })
                }
            }
        }

        let seed: u64 = single(origin, "seed", take(&mut axes, "seed"), 1)?;
        let repetitions: usize = single(origin, "repetitions", take(&mut axes, "repetitions"), 1)?;
        let timesteps: usize = single(origin, "timesteps", take(&mut axes, "timesteps"), 1)?;
        let max_sim_time: f64 = single(
            origin,
            "max_sim_time",
            take(&mut axes, "max_sim_time"),
            f64::INFINITY,
        )?;
        let oracle: bool = single(origin, "oracle", take(&mut axes, "oracle"), false)?;
        let mut simas = SimasConfig::default();
        simas.poll_interval = single(origin, "poll", take(&mut axes, "poll"), simas.poll_interval)?;
        simas.resim_interval = single(
            origin,
            "resim",
            take(&mut axes, "resim"),
            simas.resim_interval,
        )?;
        if let Some((line, vals)) = take(&mut axes, "portfolio") {
            simas.portfolio = parse_portfolio(&vals.join(","))
                .map_err(|e| Error::parse(origin, line, e.to_string()))?;
        }
        if repetitions == 0 || timesteps == 0 {
            return Err(Error::parse(
                origin,
                0,
                "repetitions and timesteps must be >= 1",
            ));
        }

        let (line, vals) = required(take(&mut axes, "workload"), "workload")?;
        let workloads = vals
            .iter()
            .map(|v| WorkloadSource::parse(v, seed, base))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::parse(origin, line, e.to_string()))?;
        let n = match take(&mut axes, "n") {
            Some((line, vals)) => vals
                .iter()
                .map(|v| match v.parse::<usize>() {
                    Ok(n) if n > 0 => Ok(n),
                    _ => Err(Error::parse(origin, line, format!("malformed n `{v}`"))),
                })
                .collect::<Result<Vec<_>>>()?,
            None => Vec::new(),
        };
        if n.is_empty()
            && workloads
                .iter()
                .any(|w| matches!(w, WorkloadSource::Generated(_)))
        {
            return Err(Error::parse(
                origin,
                line,
                "generated workloads need an `n` axis",
            ));
        }
        let (_, platforms) = required(take(&mut axes, "platform"), "platform")?;
        let platforms = platforms
            .into_iter()
            .map(|p| {
                if Platform::builtin(&p).is_some() {
                    p
                } else {
                    base.join(p).display().to_string()
                }
            })
            .collect();
        let (_, scenarios) = required(take(&mut axes, "scenario"), "scenario")?;
        let scenarios = scenarios
            .into_iter()
            .map(|s| match s.strip_prefix("file:") {
                Some(p) => ScenarioSource::File(base.join(p)),
                None => ScenarioSource::Named(s),
            })
            .collect();
        let (line, vals) = required(take(&mut axes, "technique"), "technique")?;
        let techniques = vals
            .iter()
            .map(|v| v.parse::<Method>())
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::parse(origin, line, e.to_string()))?;
        if let Some((name, (line, _))) = axes.into_iter().next() {
            return Err(Error::parse(origin, line, format!("unknown axis `{name}`")));
        }
        Ok(SweepManifest {
            workloads,
            n,
            platforms,
            scenarios,
            techniques,
            repetitions,
            seed,
            timesteps,
            max_sim_time,
            simas,
            oracle,
            base: base.to_path_buf(),
        })
    }

    /// The cross product in manifest order. File workloads ignore `n`.
    pub fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        for (w, src) in self.workloads.iter().enumerate() {
            let ns: Vec<usize> = match src {
                WorkloadSource::Generated(_) => self.n.clone(),
                WorkloadSource::File(_) => vec![0],
            };
            for &n in &ns {
                for p in 0..self.platforms.len() {
                    for s in 0..self.scenarios.len() {
                        for &method in &self.techniques {
                            cells.push(Cell {
                                index: cells.len(),
                                workload: w,
                                n,
                                platform: p,
                                scenario: s,
                                method,
                            });
                        }
                    }
                }
            }
        }
        cells
    }

    fn platform(&self, i: usize) -> Result<Platform> {
        let name = &self.platforms[i];
        match Platform::builtin(name) {
            Some(p) => Ok(p),
            None => Platform::load(Path::new(name)),
        }
    }
}

pub fn parse_portfolio(csv: &str) -> Result<Vec<Technique>> {
    let p = csv
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect::<Result<Vec<Technique>>>()?;
    if p.is_empty() {
        return Err(Error::InvalidConfig("empty portfolio".into()));
    }
    Ok(p)
}

/// Outcome of one repetition of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub t_par: f64,
    pub sim_time: f64,
    pub finished_tasks: usize,
    pub cov: f64,
    pub mean_max: f64,
    pub overhead_percent: Option<f64>,
    summary: String,
    per_pe: String,
    selections: Option<String>,
    overhead: Option<String>,
}

fn run_cell(m: &SweepManifest, cell: &Cell, platform: &Platform, rep: usize) -> Result<RunResult> {
    let seed = m.seed.wrapping_add(rep as u64);
    let source = &m.workloads[cell.workload];
    let scenario = m.scenarios[cell.scenario].load(seed)?;
    let steps = (0..m.timesteps as u64)
        .map(|k| source.load(cell.n, rep as u64, k))
        .collect::<Result<Vec<Workload>>>()?;
    let mut input = SimInput::new(platform, &steps[0], &scenario, Technique::Static);
    input.max_sim_time = m.max_sim_time;
    input.record_chunks = false;
    complete_parameters(&mut input);

    let (outcome, simas) = match cell.method {
        Method::Dls(t) => {
            input.technique = t;
            let o = if m.timesteps > 1 {
                let ts = TimeSteppingInput {
                    steps: &steps,
                    carry_weights: true,
                };
                simulate_time_stepping(&input, &ts)?
                    .pop()
                    .expect("at least one step")
            } else {
                simulate(&input)?
            };
            (o, None)
        }
        Method::Simas => {
            let mut cfg = m.simas.clone();
            let o = if m.timesteps > 1 {
                cfg.default_technique = Technique::WF;
                let all = run_with_simas_time_stepping(&input, &steps, true, &cfg, m.oracle)?;
                let mut last = all.last().expect("at least one step").clone();
                last.selections = all.iter().flat_map(|o| o.selections.clone()).collect();
                last.prediction_time = all.iter().map(|o| o.prediction_time).sum();
                last
            } else {
                run_with_simas(&input, &cfg, m.oracle)?
            };
            (o.outcome.clone(), Some((o, cfg.portfolio)))
        }
    };
    let (cov, mean_max) = imbalance(&outcome.per_pe_finish)
        .map(|r| (r.cov, r.mean_max))
        .unwrap_or((f64::NAN, f64::NAN));
    let t_par = outcome.per_pe_finish.iter().copied().fold(0.0, f64::max);
    Ok(RunResult {
        t_par,
        sim_time: outcome.sim_time,
        finished_tasks: outcome.finished_tasks,
        cov,
        mean_max,
        overhead_percent: simas.as_ref().map(|(o, _)| o.overhead_percent()),
        summary: summary_csv(&outcome),
        per_pe: per_pe_csv(&outcome),
        selections: simas
            .as_ref()
            .map(|(o, p)| selection_log_csv(p, &o.selections)),
        overhead: simas.as_ref().map(|(o, _)| overhead_csv(o)),
    })
}

/// Worker count from the environment, if set to a positive integer.
pub fn workers_from_env() -> Option<usize> {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .filter(|&n: &usize| n > 0)
}

/// Per-cell summary of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub cell: Cell,
    pub runs: Vec<std::result::Result<RunResult, String>>,
}

impl CellSummary {
    fn ok_runs(&self) -> impl Iterator<Item = &RunResult> {
        self.runs.iter().filter_map(|r| r.as_ref().ok())
    }

    pub fn median_t_par(&self) -> Option<f64> {
        metrics::median(&self.ok_runs().map(|r| r.t_par).collect::<Vec<_>>())
    }

    fn median_of(&self, f: impl Fn(&RunResult) -> Option<f64>) -> Option<f64> {
        metrics::median(&self.ok_runs().filter_map(f).collect::<Vec<_>>())
    }

    pub fn status(&self) -> String {
        match self.runs.iter().find_map(|r| r.as_ref().err()) {
            None => "ok".into(),
            Some(e) if self.ok_runs().next().is_none() => format!("failed: {e}"),
            Some(e) => format!("partial: {e}"),
        }
    }
}

/// Runs every cell and repetition, `workers` at a time (all cores when
/// `None`). Failed runs are kept as errors.
pub fn run_sweep(m: &SweepManifest, workers: Option<usize>) -> Result<Vec<CellSummary>> {
    let cells = m.cells();
    let platforms: Vec<std::result::Result<Platform, String>> = (0..m.platforms.len())
        .map(|i| m.platform(i).map_err(|e| e.to_string()))
        .collect();
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..m.repetitions).map(move |r| (c, r)))
        .collect();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        builder = builder.num_threads(w);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot start workers: {e}")))?;
    let results: Vec<std::result::Result<RunResult, String>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(c, r)| {
                let cell = &cells[c];
                let platform = platforms[cell.platform].as_ref().map_err(Clone::clone)?;
                run_cell(m, cell, platform, r).map_err(|e| {
                    log::warn!("cell {} repetition {r} failed: {e}", cell.index);
                    e.to_string()
                })
            })
            .collect()
    });
    let mut it = results.into_iter();
    Ok(cells
        .into_iter()
        .map(|cell| CellSummary {
            runs: it.by_ref().take(m.repetitions).collect(),
            cell,
        })
        .collect())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

fn cell_dir(index: usize) -> String {
    format!("{index:05}")
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::InvalidInput(format!("{}: {other:?}", path.display())),
    }
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| csv_err(path, e))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    write_string(
        path,
        &String::from_utf8(bytes).expect("CSV of UTF-8 fields"),
    )
}

const CELLS_HEADER: [&str; 12] = [
    "cell",
    "workload",
    "n",
    "platform",
    "scenario",
    "technique",
    "repetitions",
    "t_par",
    "cov",
    "mean_max",
    "overhead_percent",
    "status",
];

/// Writes `cells.csv`, `runs.csv` and one directory per cell under `out`.
pub fn write_sweep(m: &SweepManifest, results: &[CellSummary], out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut cells_rows = Vec::new();
    let mut runs_rows = Vec::new();
    for s in results {
        let c = &s.cell;
        cells_rows.push(vec![
            cell_dir(c.index),
            m.workloads[c.workload].label(),
            c.n.to_string(),
            m.platforms[c.platform].clone(),
            m.scenarios[c.scenario].label(),
            c.method.to_string(),
            m.repetitions.to_string(),
            fmt_opt(s.median_t_par()),
            fmt_opt(s.median_of(|r| Some(r.cov))),
            fmt_opt(s.median_of(|r| Some(r.mean_max))),
            fmt_opt(s.median_of(|r| r.overhead_percent)),
            s.status(),
        ]);
        let dir = out.join("cells").join(cell_dir(c.index));
        for (rep, run) in s.runs.iter().enumerate() {
            let seed = m.seed.wrapping_add(rep as u64);
            let rep_dir = dir.join(format!("rep{rep}"));
            fs::create_dir_all(&rep_dir).map_err(|e| Error::io(&rep_dir, e))?;
            match run {
                Ok(r) => {
                    runs_rows.push(vec![
                        cell_dir(c.index),
                        rep.to_string(),
                        seed.to_string(),
                        r.t_par.to_string(),
                        r.sim_time.to_string(),
                        r.finished_tasks.to_string(),
                        r.cov.to_string(),
                        r.mean_max.to_string(),
                        "ok".into(),
                    ]);
                    write_string(&rep_dir.join("summary.csv"), &r.summary)?;
                    write_string(&rep_dir.join("per_pe.csv"), &r.per_pe)?;
                    if let Some(sel) = &r.selections {
                        write_string(&rep_dir.join("selections.csv"), sel)?;
                    }
                    if let Some(o) = &r.overhead {
                        write_string(&rep_dir.join("overhead.csv"), o)?;
                    }
                }
                Err(e) => {
                    runs_rows.push(vec![
                        cell_dir(c.index),
                        rep.to_string(),
                        seed.to_string(),
                        String::new(),
                        String::new(),
                        String::new(),
                        String::new(),
                        String::new(),
                        format!("failed: {e}"),
                    ]);
                    write_string(&rep_dir.join("error.txt"), &format!("{e}\n"))?;
                }
            }
        }
    }
    write_csv(&out.join("cells.csv"), &CELLS_HEADER, &cells_rows)?;
    write_csv(
        &out.join("runs.csv"),
        &[
            "cell",
            "rep",
            "seed",
            "t_par",
            "sim_time",
            "finished_tasks",
            "cov",
            "mean_max",
            "status",
        ],
        &runs_rows,
    )
}

/// Loads the manifest, runs the sweep and writes the results directory.
pub fn cmd_sweep(manifest: &Path, out: &Path, workers: Option<usize>) -> Result<Vec<CellSummary>> {
    let m = SweepManifest::load(manifest)?;
    let results = run_sweep(&m, workers)?;
    write_sweep(&m, &results, out)?;
    Ok(results)
}

/// A row of `cells.csv`.
#[derive(Debug, Clone, PartialEq)]
struct CellRow {
    cell: String,
    workload: String,
    n: String,
    platform: String,
    scenario: String,
    technique: String,
    t_par: Option<f64>,
    cov: Option<f64>,
    mean_max: Option<f64>,
    overhead_percent: Option<f64>,
    status: String,
}

fn read_cells(path: &Path) -> Result<Vec<CellRow>> {
    let text = read_to_string(path)?;
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let num = |s: &str| -> Option<f64> { s.parse().ok() };
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        if rec.len() != CELLS_HEADER.len() {
            return Err(Error::parse(
                &path.display().to_string(),
                i + 2,
                format!("expected {} fields", CELLS_HEADER.len()),
            ));
        }
        rows.push(CellRow {
            cell: rec[0].to_string(),
            workload: rec[1].to_string(),
            n: rec[2].to_string(),
            platform: rec[3].to_string(),
            scenario: rec[4].to_string(),
            technique: rec[5].to_string(),
            t_par: num(&rec[7]),
            cov: num(&rec[8]),
            mean_max: num(&rec[9]),
            overhead_percent: num(&rec[10]),
            status: rec[11].to_string(),
        });
    }
    Ok(rows)
}

/// Reads the `chosen` column of predicted selections in a selection log.
fn selection_counts(path: &Path, counts: &mut BTreeMap<String, usize>) -> Result<()> {
    let text = read_to_string(path)?;
    let mut r = csv::Reader::from_reader(text.as_bytes());
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        if rec.get(3) != Some(Reason::Default.as_str()) {
            *counts.entry(rec[1].to_string()).or_default() += 1;
        }
    }
    Ok(())
}

/// Summary of a generated report.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportSummary {
    pub groups: usize,
    pub rows: usize,
    pub missing: usize,
}

/// Normalized tables, heatmaps and selection frequencies for a results
/// directory, written to `out`. Fails if a group lacks its baseline cell.
pub fn cmd_report(results: &Path, out: &Path) -> Result<ReportSummary> {
    let cells = read_cells(&results.join("cells.csv"))?;
    let mut groups: Vec<(String, String, String)> = Vec::new();
    for c in &cells {
        let key = (c.workload.clone(), c.n.clone(), c.platform.clone());
        if !groups.contains(&key) {
            groups.push(key);
        }
    }
    let mut summary = ReportSummary {
        groups: groups.len(),
        rows: 0,
        missing: 0,
    };
    let mut prepared = Vec::new();
    for key in &groups {
        let members: Vec<&CellRow> = cells
            .iter()
            .filter(|c| (&c.workload, &c.n, &c.platform) == (&key.0, &key.1, &key.2))
            .collect();
        let table: BTreeMap<(String, String), f64> = members
            .iter()
            .filter_map(|c| {
                c.t_par
                    .map(|t| ((c.scenario.clone(), c.technique.clone()), t))
            })
            .collect();
        let baseline = metrics::baseline_of(&table).map_err(|e| {
            Error::InvalidInput(format!(
                "{e} for workload {} n={} on {}",
                key.0, key.1, key.2
            ))
        })?;
        prepared.push((key, members, baseline));
    }

    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut group_rows = Vec::new();
    let mut missing_rows = Vec::new();
    for (g, (key, members, baseline)) in prepared.into_iter().enumerate() {
        group_rows.push(vec![
            g.to_string(),
            key.0.clone(),
            key.1.clone(),
            key.2.clone(),
        ]);
        let mut rows = Vec::new();
        let mut scenarios: Vec<String> = Vec::new();
        let mut techniques: Vec<String> = Vec::new();
        for c in &members {
            if !scenarios.contains(&c.scenario) {
                scenarios.push(c.scenario.clone());
            }
            if !techniques.contains(&c.technique) {
                techniques.push(c.technique.clone());
            }
            let Some(t_par) = c.t_par else {
                missing_rows.push(vec![c.cell.clone(), c.status.clone()]);
                continue;
            };
            rows.push(ReportRow {
                scenario: c.scenario.clone(),
                technique: c.technique.clone(),
                t_par,
                cov: c.cov.unwrap_or(f64::NAN),
                mean_max: c.mean_max.unwrap_or(f64::NAN),
                normalized_pct: metrics::normalize(t_par, baseline),
            });
        }
        summary.rows += rows.len();
        write_string(
            &out.join(format!("normalized_{g}.csv")),
            &metrics::report_csv(&rows),
        )?;
        write_string(
            &out.join(format!("heatmap_{g}.csv")),
            &metrics::heatmap_csv(&rows, &scenarios, &techniques),
        )?;

        let simas: Vec<&&CellRow> = members.iter().filter(|c| c.technique == "SIMAS").collect();
        if !simas.is_empty() {
            let mut sel_rows = Vec::new();
            for c in simas {
                let mut counts = BTreeMap::new();
                let dir = results.join("cells").join(&c.cell);
                let mut reps: Vec<PathBuf> = match fs::read_dir(&dir) {
                    Ok(rd) => rd.filter_map(|e| e.ok().map(|e| e.path())).collect(),
                    Err(_) => Vec::new(),
                };
                reps.sort();
                for rep in reps {
                    let log = rep.join("selections.csv");
                    if log.exists() {
                        selection_counts(&log, &mut counts)?;
                    }
                }
                let total: usize = counts.values().sum();
                let mut row = vec![c.scenario.clone(), fmt_opt(c.overhead_percent)];
                for t in Technique::ALL {
                    let k = counts.get(t.name()).copied().unwrap_or(0);
                    row.push(if total > 0 {
                        (100.0 * k as f64 / total as f64).to_string()
                    } else {
                        String::new()
                    });
                }
                sel_rows.push(row);
            }
            let mut header = vec!["scenario", "overhead_percent"];
            header.extend(Technique::ALL.iter().map(|t| t.name()));
            write_csv(&out.join(format!("selection_{g}.csv")), &header, &sel_rows)?;
        }
    }
    summary.missing = missing_rows.len();
    write_csv(
        &out.join("groups.csv"),
        &["group", "workload", "n", "platform"],
        &group_rows,
    )?;
    write_csv(&out.join("missing.csv"), &["cell", "status"], &missing_rows)?;
    Ok(summary)
}
