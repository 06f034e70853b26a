use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use super::{ChunkRecord, PeResume, Report, SimInput, SimOutcome};
use crate::dls::{Chunk, DlsState, PeStats, Technique};
use crate::perturbation::{effective_bandwidth, effective_latency};

/// Decides which chunk a requesting PE receives.
pub(crate) trait Scheduler {
    /// Serve a request from `pe` at `now`. `report` describes the chunk the
    /// PE finished before asking; `pes` is the state of every PE at this
    /// instant, including the requester.
    fn serve(
        &mut self,
        pe: usize,
        now: f64,
        report: Option<Report>,
        pes: &[PeResume],
    ) -> Option<Chunk>;

    fn technique(&self) -> Technique;

    fn stats(&self) -> Vec<PeStats>;
}

/// A single technique for the whole run.
pub(crate) struct Fixed(pub DlsState);

impl Scheduler for Fixed {
    fn serve(
        &mut self,
        pe: usize,
        now: f64,
        report: Option<Report>,
        _pes: &[PeResume],
    ) -> Option<Chunk> {
        if let Some(r) = report {
            self.0
                .update_stats(pe, r.size, r.iter_time, r.total_time)
                .expect("PE index checked by the engine");
        }
        self.0.next_chunk(pe, now)
    }

    fn technique(&self) -> Technique {
        self.0.technique()
    }

    fn stats(&self) -> Vec<PeStats> {
        self.0.stats().to_vec()
    }
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    pe: usize,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.pe.cmp(&other.pe))
    }
}

#[derive(Debug, Clone, Copy)]
struct Running {
    start: usize,
    size: usize,
    exec_start: f64,
}

pub(crate) fn run<S: Scheduler>(input: &SimInput<'_>, sched: &mut S) -> SimOutcome {
    let platform = input.platform;
    let scenario = input.scenario;
    let master = platform.master();
    let p = platform.pe_count();
    let cutoff = input.max_sim_time;

    let message = |pe: usize, t: f64, bytes: f64| -> f64 {
        let link = platform.link(pe);
        let mut cost = effective_latency(link, pe, scenario, t);
        if bytes > 0.0 {
            cost += bytes / effective_bandwidth(link, pe, scenario, t);
        }
        cost
    };
    let tick = |t: f64| -> f64 {
        let poll = input.master_poll_interval;
        if poll > 0.0 {
            let k = ((t - input.start_time) / poll).ceil().max(0.0);
            input.start_time + k * poll
        } else {
            t
        }
    };

    let mut pes: Vec<PeResume> = match &input.resume {
        Some(r) => r.clone(),
        None => (0..p)
            .map(|pe| {
                let t = input.start_time;
                let serve = if pe == master {
                    t
                } else {
                    tick(t + message(pe, t, input.request_bytes))
                };
                PeResume {
                    serve_at: Some(serve),
                    sent: t,
                    report: None,
                    last_finish: t,
                }
            })
            .collect(),
    };

    let mut heap = BinaryHeap::with_capacity(p);
    for (pe, slot) in pes.iter().enumerate() {
        if let Some(t) = slot.serve_at {
            heap.push(Reverse(Event { time: t, pe }));
        }
    }

    let mut per_pe_finish: Vec<f64> = pes.iter().map(|s| s.last_finish).collect();
    let mut running: Vec<Option<Running>> = vec![None; p];
    let mut chunk_log = Vec::new();
    let mut finished = 0usize;
    let mut events = 0u64;
    let mut cut = false;

    while let Some(Reverse(Event { time: now, pe })) = heap.pop() {
        if now > cutoff {
            cut = true;
            break;
        }
        events += 1;
        let report = pes[pe].report;
        let chunk = sched.serve(pe, now, report, &pes);
        let slot = &mut pes[pe];
        slot.report = None;
        let Some(chunk) = chunk else {
            slot.serve_at = None;
            continue;
        };
        let speed = platform.host(pe).speed;
        let flops = input.workload.chunk_flops(chunk.start, chunk.size);
        let exec_start = if pe == master {
            now
        } else {
            now + message(pe, now, input.reply_bytes)
        };
        let exec_end = scenario.finish_time(pe, speed, exec_start, flops);
        if exec_end <= cutoff {
            finished += chunk.size;
            per_pe_finish[pe] = per_pe_finish[pe].max(exec_end);
            running[pe] = None;
        } else {
            running[pe] = Some(Running {
                start: chunk.start,
                size: chunk.size,
                exec_start,
            });
        }
        if input.record_chunks {
            chunk_log.push(ChunkRecord {
                issued: now,
                pe,
                start: chunk.start,
                size: chunk.size,
                technique: sched.technique(),
                exec_start,
                exec_end,
            });
        }
        slot.report = Some(Report {
            start: chunk.start,
            size: chunk.size,
            iter_time: exec_end - exec_start,
            total_time: exec_end - slot.sent,
            exec_end,
        });
        slot.last_finish = exec_end;
        slot.sent = exec_end;
        let serve = if pe == master {
            exec_end
        } else {
            tick(exec_end + message(pe, exec_end, input.request_bytes))
        };
        slot.serve_at = Some(serve);
        heap.push(Reverse(Event { time: serve, pe }));
    }

    let total = input.config.n - input.start_task;
    let completed = finished == total;
    let sim_time = if completed || !cut {
        per_pe_finish
            .iter()
            .copied()
            .fold(input.start_time, f64::max)
    } else {
        // work still running at the cutoff contributes its finished iterations
        for (pe, r) in running.iter().enumerate() {
            let Some(r) = r else { continue };
            if r.exec_start >= cutoff {
                continue;
            }
            let speed = platform.host(pe).speed;
            let mut work = scenario.delivered_work(pe, speed, r.exec_start, cutoff);
            for &f in &input.workload.flops()[r.start..r.start + r.size] {
                if f > work {
                    break;
                }
                work -= f;
                finished += 1;
            }
        }
        cutoff
    };

    SimOutcome {
        sim_time,
        finished_tasks: finished,
        completed,
        per_pe_finish,
        chunk_log,
        final_stats: sched.stats(),
        events,
    }
}
