use std::collections::VecDeque;

use super::Technique;
use crate::error::{Error, Result};

/// Inputs shared by all techniques.
#[derive(Debug, Clone, PartialEq)]
pub struct DlsConfig {
    /// Total loop iterations.
    pub n: usize,
    /// Number of PEs.
    pub p: usize,
    /// Scheduling overhead per chunk in seconds (FSC).
    pub h: Option<f64>,
    /// Standard deviation of iteration execution times in seconds (FSC).
    pub sigma: Option<f64>,
    /// Relative PE weights summing to `p` (WF; initial weights of AWF-*).
    pub weights: Option<Vec<f64>>,
}

impl DlsConfig {
    pub fn new(n: usize, p: usize) -> Self {
        DlsConfig {
            n,
            p,
            h: None,
            sigma: None,
            weights: None,
        }
    }

    fn validate(&self, technique: Technique) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.p == 0 {
            return bad("P must be >= 1".into());
        }
        if technique == Technique::FSC {
            match (self.h, self.sigma) {
                (Some(h), Some(s)) if h > 0.0 && s >= 0.0 => {}
                (None, _) | (_, None) => return bad("FSC needs both h and sigma".into()),
                (h, s) => {
                    return bad(format!(
                        "FSC needs h > 0 and sigma >= 0, got h={h:?}, sigma={s:?}"
                    ))
                }
            }
        }
        match &self.weights {
            None if technique == Technique::WF => bad("WF needs PE weights".into()),
            Some(w) if technique.is_weighted() => {
                if w.len() != self.p {
                    return bad(format!("{} weights for {} PEs", w.len(), self.p));
                }
                if w.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
                    return bad("weights must be positive".into());
                }
                let sum: f64 = w.iter().sum();
                if (sum - self.p as f64).abs() > 1e-6 * self.p as f64 {
                    return bad(format!("weights sum to {sum}, expected {}", self.p));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// Iterations `[start, start + size)` of the loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Chunk {
    pub start: usize,
    pub size: usize,
}

/// Per-PE measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct PeStats {
    /// Iterations executed.
    pub iterations: u64,
    /// Accumulated iteration execution time.
    pub iter_time: f64,
    /// Accumulated total chunk time (execution plus chunk acquisition).
    pub chunk_time: f64,
    /// Current relative weight.
    pub weight: f64,
    /// Chunks measured.
    pub chunks: u64,
    /// Running mean of per-iteration time over measured chunks.
    pub mean: f64,
    m2: f64,
}

impl PeStats {
    fn seeded(weight: f64) -> Self {
        PeStats {
            iterations: 0,
            iter_time: 0.0,
            chunk_time: 0.0,
            weight,
            chunks: 0,
            mean: 0.0,
            m2: 0.0,
        }
    }

    /// Running standard deviation of per-iteration time; 0 with fewer than two chunks.
    pub fn sigma(&self) -> f64 {
        if self.chunks < 2 {
            0.0
        } else {
            (self.m2 / self.chunks as f64).sqrt()
        }
    }

    fn record(&mut self, size: usize, iter_time: f64, total_time: f64) {
        self.iterations += size as u64;
        self.iter_time += iter_time;
        self.chunk_time += total_time;
        if size > 0 {
            let x = iter_time / size as f64;
            self.chunks += 1;
            let delta = x - self.mean;
            self.mean += delta / self.chunks as f64;
            self.m2 += delta * (x - self.mean);
        }
    }
}

#[derive(Debug, Clone)]
struct BatchTrack {
    id: u64,
    issued: usize,
    completed: usize,
    closed: bool,
}

/// Scheduling state of one technique over the iterations `[offset, n)`.
#[derive(Debug, Clone)]
pub struct DlsState {
    technique: Technique,
    config: DlsConfig,
    offset: usize,
    /// Iterations covered by this schedule, `n - offset`.
    total: usize,
    scheduled: usize,
    /// Chunk size for STATIC, FSC and mFSC.
    fixed: usize,
    /// Chunks left in the current batch and the batch's iteration count.
    batch_left: usize,
    batch_size: usize,
    batch_seq: u64,
    /// TSS first chunk, chunk count and chunks issued so far.
    tss_first: usize,
    tss_count: usize,
    tss_issued: usize,
    pes: Vec<PeStats>,
    retired: Vec<bool>,
    static_served: Vec<bool>,
    batches: Vec<BatchTrack>,
    outstanding: Vec<VecDeque<u64>>,
}

impl DlsState {
    pub fn new(technique: Technique, config: DlsConfig) -> Result<Self> {
        if config.n == 0 {
            return Err(Error::InvalidConfig("N must be >= 1".into()));
        }
        Self::resume(technique, config, 0, None)
    }

    /// State scheduling `[offset, n)`, optionally continuing from earlier
    /// per-PE measurements.
    pub fn resume(
        technique: Technique,
        config: DlsConfig,
        offset: usize,
        stats: Option<Vec<PeStats>>,
    ) -> Result<Self> {
        config.validate(technique)?;
        if offset > config.n {
            return Err(Error::InvalidConfig(format!(
                "start {offset} beyond N={}",
                config.n
            )));
        }
        let p = config.p;
        let seed_weight = |i: usize| config.weights.as_ref().map_or(1.0, |w| w[i]);
        let mut pes = match stats {
            Some(s) => {
                if s.len() != p {
                    return Err(Error::InvalidConfig(format!(
                        "{} PE statistics for {p} PEs",
                        s.len()
                    )));
                }
                s
            }
            None => (0..p).map(|i| PeStats::seeded(seed_weight(i))).collect(),
        };
        if technique == Technique::WF {
            for (i, st) in pes.iter_mut().enumerate() {
                st.weight = seed_weight(i);
            }
        }
        let total = config.n - offset;
        let mut state = DlsState {
            technique,
            offset,
            total,
            scheduled: 0,
            fixed: 0,
            batch_left: 0,
            batch_size: 0,
            batch_seq: 0,
            tss_first: 0,
            tss_count: 0,
            tss_issued: 0,
            pes,
            retired: vec![false; p],
            static_served: vec![false; p],
            batches: Vec::new(),
            outstanding: vec![VecDeque::new(); p],
            config,
        };
        state.init_technique();
        if technique.is_weighted()
            && technique != Technique::WF
            && state.pes.iter().any(|s| s.iterations > 0)
        {
            state.recompute_weights();
        }
        Ok(state)
    }

    fn init_technique(&mut self) {
        let total = self.total;
        let p = self.config.p;
        match self.technique {
            Technique::Static => self.fixed = total.div_ceil(p),
            Technique::FSC => self.fixed = fsc_chunk(total, p, self.config.h, self.config.sigma),
            Technique::MFSC => {
                if total > 0 {
                    self.fixed = total.div_ceil(fac_chunk_count(total, p));
                }
            }
            Technique::TSS => {
                let first = total.div_ceil(2 * p).max(1);
                let last = 1;
                self.tss_first = first;
                self.tss_count = (2 * total).div_ceil(first + last).max(1);
            }
            _ => {}
        }
    }

    /// Switch to `technique` for the unscheduled iterations, keeping the
    /// per-PE measurements.
    pub fn switch_to(&self, technique: Technique) -> Result<DlsState> {
        Self::resume(
            technique,
            self.config.clone(),
            self.offset + self.scheduled,
            Some(self.pes.clone()),
        )
    }

    pub fn technique(&self) -> Technique {
        self.technique
    }

    pub fn config(&self) -> &DlsConfig {
        &self.config
    }

    /// Global index of the first unscheduled iteration.
    pub fn next_start(&self) -> usize {
        self.offset + self.scheduled
    }

    /// Iterations assigned by this state so far.
    pub fn scheduled(&self) -> usize {
        self.scheduled
    }

    /// Unscheduled iterations, R.
    pub fn remaining(&self) -> usize {
        self.total - self.scheduled
    }

    pub fn stats(&self) -> &[PeStats] {
        &self.pes
    }

    pub fn weights(&self) -> Vec<f64> {
        self.pes.iter().map(|s| s.weight).collect()
    }

    /// TSS seeding: (current unrounded chunk, decrement).
    pub fn tss_params(&self) -> (f64, f64) {
        let delta = if self.tss_count > 1 {
            (self.tss_first - 1) as f64 / (self.tss_count - 1) as f64
        } else {
            0.0
        };
        let current = self.tss_first as f64 - self.tss_issued as f64 * delta;
        (current.max(1.0), delta)
    }

    /// Next chunk for `pe`, or `None` when there is nothing left for it.
    ///
    /// # Panics
    ///
    /// If `pe` is not a valid PE index.
    pub fn next_chunk(&mut self, pe: usize, _now: f64) -> Option<Chunk> {
        assert!(pe < self.config.p, "PE {pe} out of range");
        if self.retired[pe] {
            return None;
        }
        let r = self.remaining();
        if r == 0 || (self.technique == Technique::Static && self.static_served[pe]) {
            self.retired[pe] = true;
            return None;
        }
        let size = self.chunk_size(pe, r).clamp(1, r);
        let chunk = Chunk {
            start: self.offset + self.scheduled,
            size,
        };
        self.scheduled += size;
        if self.technique == Technique::Static {
            self.static_served[pe] = true;
        }
        if self.technique.uses_batches() {
            self.batch_left -= 1;
            let close = self.batch_left == 0 || self.remaining() == 0;
            if let Some(b) = self.batches.last_mut() {
                b.issued += 1;
                if close {
                    b.closed = true;
                }
                self.outstanding[pe].push_back(b.id);
            }
        }
        Some(chunk)
    }

    fn chunk_size(&mut self, pe: usize, r: usize) -> usize {
        let p = self.config.p;
        match self.technique {
            Technique::Static | Technique::FSC | Technique::MFSC => self.fixed,
            Technique::SS => 1,
            Technique::GSS => r.div_ceil(p),
            Technique::TSS => {
                // first - k * (first - 1) / (count - 1), rounded half up, in
                // integers so that exact halves are not lost to drift
                let k = self.tss_issued;
                self.tss_issued += 1;
                if self.tss_count < 2 {
                    return self.tss_first;
                }
                let d = self.tss_count - 1;
                let num = (self.tss_first * d).saturating_sub(k * (self.tss_first - 1));
                ((2 * num + d) / (2 * d)).max(1)
            }
            Technique::FAC
            | Technique::WF
            | Technique::AwfB
            | Technique::AwfC
            | Technique::AwfD
            | Technique::AwfE => {
                if self.batch_left == 0 {
                    self.start_batch(r);
                }
                if self.technique == Technique::FAC {
                    self.batch_size.div_ceil(p)
                } else {
                    let share = self.pes[pe].weight * self.batch_size as f64 / p as f64;
                    share.ceil() as usize
                }
            }
            Technique::AF => self.af_chunk(pe, r),
        }
    }

    fn start_batch(&mut self, r: usize) {
        self.batch_size = r.div_ceil(2);
        self.batch_left = self.config.p;
        self.batch_seq += 1;
        if let Some(b) = self.batches.last_mut() {
            b.closed = true;
        }
        self.batches.push(BatchTrack {
            id: self.batch_seq,
            issued: 0,
            completed: 0,
            closed: false,
        });
    }

    fn af_chunk(&self, pe: usize, r: usize) -> usize {
        let p = self.config.p;
        let me = &self.pes[pe];
        if me.chunks == 0 || !(me.mean > 0.0) {
            return self.total.div_ceil(4 * p).max(1);
        }
        // PEs without measurements are extrapolated from the measured ones in
        // proportion to their weights.
        let (mut inv, mut d, mut w_known, mut w_unknown) = (0.0, 0.0, 0.0, 0.0);
        for s in &self.pes {
            if s.chunks > 0 && s.mean > 0.0 {
                inv += 1.0 / s.mean;
                d += s.sigma() * s.sigma() / s.mean;
                w_known += s.weight;
            } else {
                w_unknown += s.weight;
            }
        }
        let scale = (w_known + w_unknown) / w_known;
        let inv_sum = inv * scale;
        let d = d * scale;
        let t = r as f64 / inv_sum;
        let x = (d + 2.0 * t - (d * d + 4.0 * d * t).sqrt()) / (2.0 * me.mean);
        if x.is_finite() {
            x.ceil().max(1.0) as usize
        } else {
            1
        }
    }

    /// Record that `pe` finished a chunk of `chunk_size` iterations taking
    /// `iter_time` to execute and `total_chunk_time` including acquisition.
    pub fn update_stats(
        &mut self,
        pe: usize,
        chunk_size: usize,
        iter_time: f64,
        total_chunk_time: f64,
    ) -> Result<()> {
        if pe >= self.config.p {
            return Err(Error::InvalidInput(format!(
                "PE {pe} out of range for {} PEs",
                self.config.p
            )));
        }
        self.pes[pe].record(chunk_size, iter_time, total_chunk_time);
        let mut batch_done = false;
        if let Some(id) = self.outstanding[pe].pop_front() {
            if let Some(pos) = self.batches.iter().position(|b| b.id == id) {
                let b = &mut self.batches[pos];
                b.completed += 1;
                if b.closed && b.completed == b.issued {
                    self.batches.remove(pos);
                    batch_done = true;
                }
            }
        }
        match self.technique {
            Technique::AwfC | Technique::AwfE => self.recompute_weights(),
            Technique::AwfB | Technique::AwfD if batch_done => self.recompute_weights(),
            _ => {}
        }
        Ok(())
    }

    /// Harmonic weighting over measured PEs; unmeasured PEs keep their
    /// weight and the total stays P.
    fn recompute_weights(&mut self) {
        let use_total = matches!(self.technique, Technique::AwfD | Technique::AwfE);
        let rate = |s: &PeStats| -> Option<f64> {
            let time = if use_total { s.chunk_time } else { s.iter_time };
            (s.iterations > 0 && time > 0.0).then(|| s.iterations as f64 / time)
        };
        let p = self.config.p as f64;
        let mut unmeasured = 0.0;
        let mut rate_sum = 0.0;
        for s in &self.pes {
            match rate(s) {
                Some(r) => rate_sum += r,
                None => unmeasured += s.weight,
            }
        }
        if rate_sum <= 0.0 {
            return;
        }
        let share = p - unmeasured;
        for i in 0..self.pes.len() {
            if let Some(r) = rate(&self.pes[i]) {
                self.pes[i].weight = r * share / rate_sum;
            }
        }
    }
}

fn fsc_chunk(total: usize, p: usize, h: Option<f64>, sigma: Option<f64>) -> usize {
    let (Some(h), Some(sigma)) = (h, sigma) else {
        return total.div_ceil(p).max(1);
    };
    if sigma <= 0.0 || p < 2 || total == 0 {
        return total.div_ceil(p).max(1);
    }
    let (n, pf) = (total as f64, p as f64);
    let x = (std::f64::consts::SQRT_2 * n * h / (sigma * pf * pf.ln().sqrt())).powf(2.0 / 3.0);
    if x.is_finite() {
        (x.ceil() as usize).max(1)
    } else {
        total.div_ceil(p).max(1)
    }
}

/// Number of chunks FAC emits for `n` iterations on `p` PEs.
pub fn fac_chunk_count(n: usize, p: usize) -> usize {
    let mut r = n;
    let mut count = 0;
    while r > 0 {
        let size = r.div_ceil(2).div_ceil(p);
        for _ in 0..p {
            if r == 0 {
                break;
            }
            r -= size.min(r);
            count += 1;
        }
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;

    fn drain(technique: Technique, config: DlsConfig) -> Vec<usize> {
        let p = config.p;
        let mut st = DlsState::new(technique, config).unwrap();
        let mut sizes = Vec::new();
        let mut pe = 0;
        while let Some(c) = st.next_chunk(pe, 0.0) {
            sizes.push(c.size);
            pe = (pe + 1) % p;
        }
        sizes
    }

    #[test]
    fn ss_init() {
        let st = DlsState::new(Technique::SS, DlsConfig::new(10, 2)).unwrap();
        assert_eq!(st.remaining(), 10);
        assert_eq!(drain(Technique::SS, DlsConfig::new(10, 2)), vec![1; 10]);
    }

    #[test]
    fn tss_seed() {
        let st = DlsState::new(Technique::TSS, DlsConfig::new(1000, 4)).unwrap();
        let (first, delta) = st.tss_params();
        assert_eq!(first, 125.0);
        assert!((delta - 124.0 / 15.0).abs() < 1e-12);
    }

    #[test]
    fn gss_first_sizes() {
        let s = drain(Technique::GSS, DlsConfig::new(1000, 4));
        assert_eq!(&s[..5], &[250, 188, 141, 106, 79]);
    }

    #[test]
    fn fac_sequence() {
        let s = drain(Technique::FAC, DlsConfig::new(1000, 4));
        let mut expect = Vec::new();
        for c in [125, 63, 31, 16, 8, 4, 2, 1] {
            expect.extend([c; 4]);
        }
        assert_eq!(s, expect);
        assert_eq!(fac_chunk_count(1000, 4), 32);
        assert_eq!(fac_chunk_count(7, 7), 7);
        assert_eq!(fac_chunk_count(1, 1), 1);
    }

    #[test]
    fn wf_weights_pass_through() {
        let mut cfg = DlsConfig::new(100, 2);
        cfg.weights = Some(vec![1.6, 0.4]);
        let st = DlsState::new(Technique::WF, cfg).unwrap();
        assert!((st.weights().iter().sum::<f64>() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn config_errors() {
        assert!(DlsState::new(Technique::FSC, DlsConfig::new(10, 2)).is_err());
        assert!(DlsState::new(Technique::WF, DlsConfig::new(10, 2)).is_err());
        let mut cfg = DlsConfig::new(10, 2);
        cfg.weights = Some(vec![1.0, 2.0]);
        assert!(DlsState::new(Technique::WF, cfg).is_err());
        assert!(DlsState::new(Technique::SS, DlsConfig::new(0, 2)).is_err());
        assert!(DlsState::new(Technique::SS, DlsConfig::new(3, 0)).is_err());
    }

    #[test]
    fn empty_is_idempotent() {
        let mut st = DlsState::new(Technique::SS, DlsConfig::new(1, 2)).unwrap();
        assert!(st.next_chunk(0, 0.0).is_some());
        assert!(st.next_chunk(1, 0.0).is_none());
        assert!(st.next_chunk(1, 0.0).is_none());
        assert!(st.next_chunk(0, 0.0).is_none());
    }

    #[test]
    fn static_one_chunk_per_pe() {
        let mut st = DlsState::new(Technique::Static, DlsConfig::new(10, 3)).unwrap();
        assert_eq!(st.next_chunk(0, 0.0).unwrap().size, 4);
        assert!(st.next_chunk(0, 0.0).is_none());
        assert_eq!(st.next_chunk(1, 0.0).unwrap().size, 4);
        assert_eq!(st.next_chunk(2, 0.0).unwrap().size, 2);
    }

    #[test]
    fn harmonic_weights() {
        let mut st = DlsState::new(Technique::AwfC, DlsConfig::new(100, 2)).unwrap();
        st.next_chunk(0, 0.0);
        st.next_chunk(1, 0.0);
        st.update_stats(0, 10, 10.0, 10.0).unwrap();
        st.update_stats(1, 10, 40.0, 40.0).unwrap();
        let w = st.weights();
        assert!(
            (w[0] - 1.6).abs() < 1e-12 && (w[1] - 0.4).abs() < 1e-12,
            "{w:?}"
        );
    }

    #[test]
    fn equal_rates_equal_weights() {
        let mut st = DlsState::new(Technique::AwfE, DlsConfig::new(100, 2)).unwrap();
        st.update_stats(0, 5, 1.0, 2.0).unwrap();
        st.update_stats(1, 10, 2.0, 4.0).unwrap();
        assert_eq!(st.weights(), vec![1.0, 1.0]);
    }

    #[test]
    fn unmeasured_pes_keep_weight() {
        let mut st = DlsState::new(Technique::AwfC, DlsConfig::new(100, 3)).unwrap();
        st.update_stats(0, 10, 10.0, 10.0).unwrap();
        st.update_stats(1, 10, 30.0, 30.0).unwrap();
        let w = st.weights();
        assert_eq!(w[2], 1.0);
        assert!((w.iter().sum::<f64>() - 3.0).abs() < 1e-12);
        assert!((w[0] / w[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn awf_b_waits_for_batch_completion() {
        let mut st = DlsState::new(Technique::AwfB, DlsConfig::new(100, 2)).unwrap();
        let a = st.next_chunk(0, 0.0).unwrap();
        let b = st.next_chunk(1, 0.0).unwrap();
        st.update_stats(0, a.size, 1.0, 1.0).unwrap();
        assert_eq!(st.weights(), vec![1.0, 1.0]);
        st.update_stats(1, b.size, 4.0, 4.0).unwrap();
        let w = st.weights();
        assert!((w[0] - 1.6).abs() < 1e-12, "{w:?}");
    }

    #[test]
    fn unknown_pe_in_update() {
        let mut st = DlsState::new(Technique::AwfB, DlsConfig::new(10, 2)).unwrap();
        assert!(st.update_stats(2, 1, 1.0, 1.0).is_err());
    }

    #[test]
    fn af_bootstrap_then_formula() {
        let mut st = DlsState::new(Technique::AF, DlsConfig::new(1000, 4)).unwrap();
        assert_eq!(st.next_chunk(0, 0.0).unwrap().size, 63);
        st.update_stats(0, 63, 63.0, 63.0).unwrap();
        // zero variance: proportional share of R among equally fast PEs
        let r = st.remaining();
        assert_eq!(st.next_chunk(0, 0.0).unwrap().size, r.div_ceil(4));
    }

    #[test]
    fn switch_carries_stats() {
        let mut st = DlsState::new(Technique::SS, DlsConfig::new(100, 2)).unwrap();
        st.next_chunk(0, 0.0);
        st.next_chunk(1, 0.0);
        st.update_stats(0, 1, 1.0, 1.0).unwrap();
        st.update_stats(1, 1, 4.0, 4.0).unwrap();
        let sw = st.switch_to(Technique::AwfB).unwrap();
        assert_eq!(sw.remaining(), 98);
        assert_eq!(sw.next_start(), 2);
        let w = sw.weights();
        assert!((w[0] - 1.6).abs() < 1e-12);
    }
}
