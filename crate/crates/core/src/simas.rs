//! Simulation-assisted selection of the scheduling technique.
//!
//! While the loop runs, the controller periodically simulates the rest of
//! the execution once per portfolio technique, starting from the current
//! state, and switches to the technique predicted to finish the most tasks
//! in the least time. Switches only affect iterations that have not been
//! handed out yet.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::dls::{Chunk, DlsState, PeStats, Technique};
use crate::error::{write_string, Error, Result};
use crate::perturbation::Scenario;
use crate::platform::Platform;
use crate::sim::{run, ChunkRecord, Fixed, PeResume, Report, Scheduler, SimInput, SimOutcome};
use crate::workload::{workload_sigma, Workload};

/// Modeled cost of one simulated request in a prediction, in seconds.
pub const DEFAULT_EVENT_COST: f64 = 2e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct SimasConfig {
    pub portfolio: Vec<Technique>,
    pub default_technique: Technique,
    /// Spacing of the checks for finished predictions.
    pub poll_interval: f64,
    /// Minimum spacing of prediction launches.
    pub resim_interval: f64,
    /// Simulated time granted to each prediction.
    pub prediction_horizon: f64,
    /// No prediction starts with this many unscheduled iterations or fewer;
    /// `None` means P.
    pub min_remaining: Option<usize>,
    /// Time between launching a prediction batch and its results being usable.
    pub prediction_delay: f64,
    /// Modeled compute cost per simulated request, for overhead accounting.
    pub event_cost: f64,
}

impl Default for SimasConfig {
    fn default() -> Self {
        SimasConfig {
            portfolio: Technique::standard_portfolio(),
            default_technique: Technique::AwfB,
            poll_interval: 5.0,
            resim_interval: 50.0,
            prediction_horizon: f64::INFINITY,
            min_remaining: None,
            prediction_delay: 0.0,
            event_cost: DEFAULT_EVENT_COST,
        }
    }
}

impl SimasConfig {
    pub fn validate(&self, p: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.portfolio.is_empty() {
            return bad("empty portfolio".into());
        }
        if !(self.poll_interval >= 0.0) || !(self.poll_interval <= self.resim_interval) {
            return bad(format!(
                "need 0 <= poll interval ({}) <= resimulation interval ({})",
                self.poll_interval, self.resim_interval
            ));
        }
        if !(self.prediction_horizon > 0.0) {
            return bad("prediction horizon must be positive".into());
        }
        if self.min_remaining.is_some_and(|m| m < p) {
            return bad(format!("minimum remaining iterations must be >= P={p}"));
        }
        if !(self.prediction_delay >= 0.0) || !(self.event_cost >= 0.0) {
            return bad("prediction delay and event cost must be nonnegative".into());
        }
        Ok(())
    }
}

/// Predicted outcome of one portfolio technique.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub technique: Technique,
    pub sim_time: f64,
    pub finished_tasks: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reason {
    /// Technique used before any prediction finished.
    Default,
    /// A prediction picked a different technique.
    Switch,
    /// A prediction confirmed the current technique.
    Keep,
}

impl Reason {
    pub fn as_str(self) -> &'static str {
        match self {
            Reason::Default => "default",
            Reason::Switch => "switch",
            Reason::Keep => "keep",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionEvent {
    pub time: f64,
    pub chosen: Technique,
    pub previous: Option<Technique>,
    pub reason: Reason,
    pub predictions: Vec<Prediction>,
}

/// Relative difference below which two predicted times count as equal.
pub const TIME_TIE_TOLERANCE: f64 = 1e-9;

/// Best prediction: most finished tasks, then shortest time, then earliest
/// in `portfolio`. Times within [`TIME_TIE_TOLERANCE`] of each other tie.
pub fn rank_predictions(portfolio: &[Technique], predictions: &[Prediction]) -> Option<Technique> {
    let most = predictions.iter().map(|p| p.finished_tasks).max()?;
    let fastest = predictions
        .iter()
        .filter(|p| p.finished_tasks == most)
        .map(|p| p.sim_time)
        .fold(f64::INFINITY, f64::min);
    let order = |t: Technique| portfolio.iter().position(|&x| x == t).unwrap_or(usize::MAX);
    predictions
        .iter()
        .filter(|p| {
            p.finished_tasks == most && p.sim_time <= fastest + TIME_TIE_TOLERANCE * fastest.abs()
        })
        .min_by_key(|p| order(p.technique))
        .map(|p| p.technique)
}

/// Delivered speed of each PE relative to nominal, from the most recent
/// finished chunk of each PE in `window`. PEs without a chunk get 1.
pub fn estimate_system_state(
    platform: &Platform,
    workload: &Workload,
    window: &[ChunkRecord],
) -> Vec<f64> {
    let mut latest: Vec<Option<&ChunkRecord>> = vec![None; platform.pe_count()];
    for c in window {
        let slot = &mut latest[c.pe];
        if slot.is_none_or(|old| c.exec_end >= old.exec_end) {
            *slot = Some(c);
        }
    }
    latest
        .iter()
        .enumerate()
        .map(|(pe, c)| match c {
            Some(c) if c.exec_end > c.exec_start => {
                let flops = workload.chunk_flops(c.start, c.size);
                let speed = flops / (c.exec_end - c.exec_start);
                (speed / platform.host(pe).speed).clamp(f64::MIN_POSITIVE, 1.5)
            }
            _ => 1.0,
        })
        .collect()
}

struct Pending {
    ready_at: f64,
    predictions: Vec<Prediction>,
}

/// The selection loop wrapped around a live scheduling state.
pub struct SimasController<'a> {
    cfg: SimasConfig,
    base: SimInput<'a>,
    oracle_mode: bool,
    live: DlsState,
    min_remaining: usize,
    last_update: f64,
    last_launch: f64,
    started: bool,
    pending: Option<Pending>,
    recent: Vec<Option<ChunkRecord>>,
    selections: Vec<SelectionEvent>,
    prediction_events: u64,
    batches: usize,
}

impl<'a> SimasController<'a> {
    /// Controller for the run described by `base`; `base.technique` is
    /// ignored in favour of the configured default.
    pub fn new(base: &SimInput<'a>, cfg: SimasConfig, oracle_mode: bool) -> Result<Self> {
        base.validate()?;
        let p = base.platform.pe_count();
        cfg.validate(p)?;
        let live = base.dls_state(cfg.default_technique)?;
        Ok(SimasController {
            min_remaining: cfg.min_remaining.unwrap_or(p),
            cfg,
            base: base.clone(),
            oracle_mode,
            live,
            last_update: f64::NEG_INFINITY,
            last_launch: f64::NEG_INFINITY,
            started: false,
            pending: None,
            recent: vec![None; p],
            selections: Vec::new(),
            prediction_events: 0,
            batches: 0,
        })
    }

    pub fn technique(&self) -> Technique {
        self.live.technique()
    }

    pub fn selections(&self) -> &[SelectionEvent] {
        &self.selections
    }

    pub fn has_pending(&self) -> bool {
        self.pending.is_some()
    }

    /// Start of the run: keep the default technique and launch the first
    /// prediction batch.
    pub fn setup(&mut self, now: f64, pes: &[PeResume]) -> Technique {
        self.started = true;
        self.last_update = now;
        self.selections.push(SelectionEvent {
            time: now,
            chosen: self.live.technique(),
            previous: None,
            reason: Reason::Default,
            predictions: Vec::new(),
        });
        self.launch(now, pes);
        self.live.technique()
    }

    /// Consume a finished prediction batch and launch the next one when due.
    /// Returns the new technique on a switch.
    pub fn update(&mut self, now: f64, pes: &[PeResume]) -> Option<Technique> {
        self.last_update = now;
        let mut switched = None;
        if self.pending.as_ref().is_some_and(|b| now >= b.ready_at) {
            let batch = self.pending.take().expect("checked above");
            if let Some(best) = rank_predictions(&self.cfg.portfolio, &batch.predictions) {
                let previous = self.live.technique();
                let reason = if best == previous {
                    Reason::Keep
                } else {
                    match self.live.switch_to(best) {
                        Ok(state) => {
                            self.live = state;
                            switched = Some(best);
                            Reason::Switch
                        }
                        Err(e) => {
                            log::warn!("cannot switch to {best}: {e}");
                            Reason::Keep
                        }
                    }
                };
                self.selections.push(SelectionEvent {
                    time: now,
                    chosen: self.live.technique(),
                    previous: Some(previous),
                    reason,
                    predictions: batch.predictions,
                });
            }
        }
        if self.pending.is_none()
            && now - self.last_launch >= self.cfg.resim_interval
            && self.live.remaining() > self.min_remaining
        {
            self.launch(now, pes);
        }
        switched
    }

    fn launch(&mut self, now: f64, pes: &[PeResume]) {
        if self.live.remaining() == 0 {
            return;
        }
        self.last_launch = now;
        self.batches += 1;
        let estimated;
        let unperturbed;
        let (platform, scenario): (&Platform, &Scenario) = if self.oracle_mode {
            (self.base.platform, self.base.scenario)
        } else {
            let window: Vec<ChunkRecord> = self.recent.iter().flatten().cloned().collect();
            let factors = estimate_system_state(self.base.platform, self.base.workload, &window);
            estimated = self.base.platform.with_speed_factors(&factors);
            unperturbed = Scenario::none();
            (&estimated, &unperturbed)
        };
        let mut input = self.base.clone();
        input.platform = platform;
        input.scenario = scenario;
        input.start_task = self.live.next_start();
        input.start_time = now;
        input.max_sim_time = (now + self.cfg.prediction_horizon).min(self.base.max_sim_time);
        input.record_chunks = false;
        input.resume = Some(pes.to_vec());
        input.stats = None;
        let live = &self.live;
        let results: Vec<(Technique, Result<SimOutcome>)> = self
            .cfg
            .portfolio
            .par_iter()
            .map(|&t| {
                let state = if t == live.technique() {
                    Ok(live.clone())
                } else {
                    live.switch_to(t)
                };
                (t, state.map(|s| run(&input, &mut Fixed(s))))
            })
            .collect();
        let mut predictions = Vec::with_capacity(results.len());
        for (t, r) in results {
            match r {
                Ok(o) => {
                    self.prediction_events += o.events;
                    predictions.push(Prediction {
                        technique: t,
                        sim_time: o.sim_time,
                        finished_tasks: o.finished_tasks,
                    });
                }
                Err(e) => log::warn!("prediction for {t} failed: {e}"),
            }
        }
        self.pending = Some(Pending {
            ready_at: now + self.cfg.prediction_delay,
            predictions,
        });
    }

    fn remember(&mut self, pe: usize, r: &Report) {
        self.recent[pe] = Some(ChunkRecord {
            issued: r.exec_end - r.total_time,
            pe,
            start: r.start,
            size: r.size,
            technique: self.live.technique(),
            exec_start: r.exec_end - r.iter_time,
            exec_end: r.exec_end,
        });
    }
}

impl Scheduler for SimasController<'_> {
    fn serve(
        &mut self,
        pe: usize,
        now: f64,
        report: Option<Report>,
        pes: &[PeResume],
    ) -> Option<Chunk> {
        if !self.started {
            self.setup(now, pes);
        } else if now - self.last_update >= self.cfg.poll_interval {
            self.update(now, pes);
        }
        if let Some(r) = report {
            self.live
                .update_stats(pe, r.size, r.iter_time, r.total_time)
                .expect("PE index checked by the engine");
            self.remember(pe, &r);
        }
        self.live.next_chunk(pe, now)
    }

    fn technique(&self) -> Technique {
        self.live.technique()
    }

    fn stats(&self) -> Vec<PeStats> {
        self.live.stats().to_vec()
    }
}

/// Result of a run under the selection loop.
#[derive(Debug, Clone, PartialEq)]
pub struct SimasOutcome {
    pub outcome: SimOutcome,
    pub selections: Vec<SelectionEvent>,
    /// Requests simulated by all predictions.
    pub prediction_events: u64,
    /// Prediction batches launched.
    pub batches: usize,
    /// Modeled compute time of all predictions, in seconds.
    pub prediction_time: f64,
}

impl SimasOutcome {
    /// Prediction compute time as a percentage of the parallel loop time.
    pub fn overhead_percent(&self) -> f64 {
        let t_par = self
            .outcome
            .per_pe_finish
            .iter()
            .copied()
            .fold(0.0, f64::max);
        if t_par > 0.0 {
            100.0 * self.prediction_time / t_par
        } else {
            0.0
        }
    }

    /// Selection events that came from a prediction.
    pub fn predicted_selections(&self) -> impl Iterator<Item = &SelectionEvent> {
        self.selections
            .iter()
            .filter(|e| e.reason != Reason::Default)
    }
}

/// Runs `input` with the technique chosen by the selection loop.
/// `input.technique` is ignored.
pub fn run_with_simas(
    input: &SimInput<'_>,
    cfg: &SimasConfig,
    oracle_mode: bool,
) -> Result<SimasOutcome> {
    let mut ctl = SimasController::new(input, cfg.clone(), oracle_mode)?;
    let outcome = run(input, &mut ctl);
    Ok(SimasOutcome {
        outcome,
        prediction_time: ctl.prediction_events as f64 * cfg.event_cost,
        prediction_events: ctl.prediction_events,
        batches: ctl.batches,
        selections: ctl.selections,
    })
}

/// Time-stepped run with a fresh selection loop at every step.
pub fn run_with_simas_time_stepping(
    base: &SimInput<'_>,
    steps: &[Workload],
    carry_weights: bool,
    cfg: &SimasConfig,
    oracle_mode: bool,
) -> Result<Vec<SimasOutcome>> {
    if steps.is_empty() {
        return Err(Error::InvalidInput("at least one time step needed".into()));
    }
    let mut out: Vec<SimasOutcome> = Vec::with_capacity(steps.len());
    let mut time = base.start_time;
    let mut stats: Option<Vec<PeStats>> = base.stats.clone();
    for step in steps {
        let mut input = base.clone();
        input.workload = step;
        input.config.n = step.len();
        input.start_task = 0;
        input.start_time = time;
        input.resume = None;
        input.stats = if carry_weights { stats.take() } else { None };
        let o = run_with_simas(&input, cfg, oracle_mode)?;
        time = o.outcome.sim_time;
        stats = Some(o.outcome.final_stats.clone());
        let cut = !o.outcome.completed;
        out.push(o);
        if cut {
            break;
        }
    }
    Ok(out)
}

/// Fills in missing FSC and WF parameters: the mean nominal round trip of a
/// work request as h, the iteration-time deviation at mean speed as sigma
/// and the relative core speeds as weights.
pub fn complete_parameters(input: &mut SimInput<'_>) {
    let platform = input.platform;
    let cfg = &mut input.config;
    if cfg.h.is_none() {
        let bytes = input.request_bytes + input.reply_bytes;
        let links = platform.links();
        let rt: f64 = links
            .iter()
            .map(|l| 2.0 * l.latency + bytes / l.bandwidth)
            .sum::<f64>()
            / links.len() as f64;
        cfg.h = Some(rt.max(1e-9));
    }
    if cfg.sigma.is_none() {
        cfg.sigma = Some(workload_sigma(input.workload, platform.mean_speed()));
    }
    if cfg.weights.is_none() {
        cfg.weights = Some(platform.relative_core_weights());
    }
}

fn fmt_time(t: f64) -> String {
    format!("{t}")
}

/// Selection log: `time,chosen,previous,reason` and, per portfolio
/// technique, its predicted time and finished tasks.
pub fn selection_log_csv(portfolio: &[Technique], selections: &[SelectionEvent]) -> String {
    let mut s = String::from("time,chosen,previous,reason");
    for t in portfolio {
        let _ = write!(s, ",{t}_sim_time,{t}_finished");
    }
    s.push('\n');
    for e in selections {
        let prev = e.previous.map_or(String::new(), |t| t.to_string());
        let _ = write!(
            s,
            "{},{},{},{}",
            fmt_time(e.time),
            e.chosen,
            prev,
            e.reason.as_str()
        );
        for t in portfolio {
            match e.predictions.iter().find(|p| p.technique == *t) {
                Some(p) => {
                    let _ = write!(s, ",{},{}", fmt_time(p.sim_time), p.finished_tasks);
                }
                None => s.push_str(",,"),
            }
        }
        s.push('\n');
    }
    s
}

/// `prediction_time,overhead_percent` summary line.
pub fn overhead_csv(outcome: &SimasOutcome) -> String {
    format!(
        "prediction_time,overhead_percent\n{},{}\n",
        outcome.prediction_time,
        outcome.overhead_percent()
    )
}

/// Writes the selection log and the overhead summary into `dir`.
pub fn write_simas_logs(outcome: &SimasOutcome, portfolio: &[Technique], dir: &Path) -> Result<()> {
    write_string(
        &dir.join("selections.csv"),
        &selection_log_csv(portfolio, &outcome.selections),
    )?;
    write_string(&dir.join("overhead.csv"), &overhead_csv(outcome))
}
