//! Discrete-event simulation of a self-scheduled loop on a master-worker
//! platform.
//!
//! Every PE, the master included, executes chunks. Workers request work over
//! their own link; a request costs `latency(t) + request_bytes / bandwidth(t)`
//! evaluated when the message is sent, and the reply likewise. The master
//! fetches its own work at no cost. Requests are served in arrival order,
//! simultaneous arrivals by ascending PE index, and each request carries the
//! timings of the chunk the PE just finished.

mod engine;
mod output;

pub(crate) use engine::{run, Fixed, Scheduler};
pub use output::{chunk_log_csv, per_pe_csv, summary_csv, write_outcome};

use crate::dls::{DlsConfig, DlsState, PeStats, Technique};
use crate::error::{Error, Result};
use crate::perturbation::Scenario;
use crate::platform::Platform;
use crate::workload::Workload;

/// Default size of work requests and replies: a few 64-bit indices.
pub const DEFAULT_MESSAGE_BYTES: f64 = 32.0;

/// Timings of a finished chunk, as reported with the next request.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Report {
    pub start: usize,
    pub size: usize,
    /// Execution time of the chunk's iterations.
    pub iter_time: f64,
    /// Time from sending the request to finishing the chunk.
    pub total_time: f64,
    pub exec_end: f64,
}

/// State of one PE at a point of the run.
#[derive(Debug, Clone, PartialEq)]
pub struct PeResume {
    /// When the master serves this PE's next request; `None` once it was
    /// told there is no work left.
    pub serve_at: Option<f64>,
    /// When that request was sent.
    pub sent: f64,
    /// Chunk finished just before sending the request.
    pub report: Option<Report>,
    /// End of the last chunk executed.
    pub last_finish: f64,
}

/// Everything a simulation needs.
#[derive(Debug, Clone)]
pub struct SimInput<'a> {
    pub platform: &'a Platform,
    pub workload: &'a Workload,
    pub scenario: &'a Scenario,
    pub technique: Technique,
    pub config: DlsConfig,
    /// First iteration to schedule.
    pub start_task: usize,
    pub start_time: f64,
    pub max_sim_time: f64,
    pub request_bytes: f64,
    pub reply_bytes: f64,
    /// Spacing of the master's checks for worker requests; 0 serves them on
    /// arrival.
    pub master_poll_interval: f64,
    pub record_chunks: bool,
    /// PE states to continue from instead of a fresh start.
    pub resume: Option<Vec<PeResume>>,
    /// Per-PE measurements to continue from.
    pub stats: Option<Vec<PeStats>>,
}

impl<'a> SimInput<'a> {
    pub fn new(
        platform: &'a Platform,
        workload: &'a Workload,
        scenario: &'a Scenario,
        technique: Technique,
    ) -> Self {
        SimInput {
            platform,
            workload,
            scenario,
            technique,
            config: DlsConfig::new(workload.len(), platform.pe_count()),
            start_task: 0,
            start_time: 0.0,
            max_sim_time: f64::INFINITY,
            request_bytes: DEFAULT_MESSAGE_BYTES,
            reply_bytes: DEFAULT_MESSAGE_BYTES,
            master_poll_interval: 0.0,
            record_chunks: true,
            resume: None,
            stats: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        let p = self.platform.pe_count();
        if self.config.n != self.workload.len() {
            return bad(format!(
                "N={} but the workload has {} iterations",
                self.config.n,
                self.workload.len()
            ));
        }
        if self.config.p != p {
            return bad(format!("P={} but the platform has {p} PEs", self.config.p));
        }
        if self.start_task >= self.config.n {
            return bad(format!(
                "start task {} must be below N={}",
                self.start_task, self.config.n
            ));
        }
        if !(self.start_time >= 0.0) || !(self.max_sim_time > self.start_time) {
            return bad(format!(
                "need 0 <= start time ({}) < max simulated time ({})",
                self.start_time, self.max_sim_time
            ));
        }
        if !(self.request_bytes >= 0.0) || !(self.reply_bytes >= 0.0) {
            return bad("message sizes must be nonnegative".into());
        }
        if !(self.master_poll_interval >= 0.0) {
            return bad("master poll interval must be nonnegative".into());
        }
        if let Some(r) = &self.resume {
            if r.len() != p {
                return bad(format!("{} resumed PE states for {p} PEs", r.len()));
            }
        }
        Ok(())
    }

    /// Fresh scheduling state for `technique` over this input's iterations.
    pub(crate) fn dls_state(&self, technique: Technique) -> Result<DlsState> {
        DlsState::resume(
            technique,
            self.config.clone(),
            self.start_task,
            self.stats.clone(),
        )
    }
}

/// One issued chunk.
#[derive(Debug, Clone, PartialEq)]
pub struct ChunkRecord {
    pub issued: f64,
    pub pe: usize,
    pub start: usize,
    pub size: usize,
    pub technique: Technique,
    pub exec_start: f64,
    pub exec_end: f64,
}

/// Result of a simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOutcome {
    /// Time the last iteration finished, or the cutoff.
    pub sim_time: f64,
    /// Iterations executed by the end (by the cutoff if one was hit).
    pub finished_tasks: usize,
    /// All scheduled iterations finished.
    pub completed: bool,
    /// End of each PE's last chunk.
    pub per_pe_finish: Vec<f64>,
    pub chunk_log: Vec<ChunkRecord>,
    pub final_stats: Vec<PeStats>,
    /// Requests served.
    pub events: u64,
}

/// Runs one simulation with a fixed technique.
pub fn simulate(input: &SimInput<'_>) -> Result<SimOutcome> {
    input.validate()?;
    let state = input.dls_state(input.technique)?;
    Ok(run(input, &mut Fixed(state)))
}

/// Successive executions of the same loop over per-step workloads.
#[derive(Debug, Clone)]
pub struct TimeSteppingInput<'a> {
    pub steps: &'a [Workload],
    /// Keep adaptive measurements from one step to the next.
    pub carry_weights: bool,
}

/// Runs every step back to back; each step starts when the previous one
/// ended. `base` supplies everything except the workload.
pub fn simulate_time_stepping(
    base: &SimInput<'_>,
    ts: &TimeSteppingInput<'_>,
) -> Result<Vec<SimOutcome>> {
    if ts.steps.is_empty() {
        return Err(Error::InvalidInput("at least one time step needed".into()));
    }
    let mut out: Vec<SimOutcome> = Vec::with_capacity(ts.steps.len());
    let mut time = base.start_time;
    let mut stats = base.stats.clone();
    for step in ts.steps {
        let mut input = base.clone();
        input.workload = step;
        input.config.n = step.len();
        input.start_task = 0;
        input.start_time = time;
        input.resume = None;
        input.stats = if ts.carry_weights { stats.take() } else { None };
        let outcome = simulate(&input)?;
        time = outcome.sim_time;
        stats = Some(outcome.final_stats.clone());
        let cut = !outcome.completed;
        out.push(outcome);
        if cut {
            break;
        }
    }
    Ok(out)
}

/// Relative deviation of a simulated time from a native one, in percent.
pub fn percent_error(t_native: f64, t_sim: f64) -> Result<f64> {
    if !(t_native > 0.0) {
        return Err(Error::InvalidInput(format!(
            "native time must be positive, got {t_native}"
        )));
    }
    Ok(100.0 * (t_native - t_sim) / t_native)
}
