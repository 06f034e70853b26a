//! Test helpers: a reference chunk calculator written from the textbook
//! rules, and a request driver shared by the reference and the library.

#![allow(
    dead_code,
    clippy::manual_div_ceil,
    clippy::needless_range_loop,
    clippy::neg_cmp_op_on_partial_ord
)]

use loopsched::{DlsConfig, DlsState, Technique};

/// Chunk calculator kept deliberately naive: every rule is spelled out per
/// technique and recomputed from scratch where possible.
pub struct Reference {
    tech: Technique,
    n: usize,
    p: usize,
    h: Option<f64>,
    sigma: Option<f64>,
    next: usize,
    done: Vec<bool>,
    got_static: Vec<bool>,
    // precomputed size lists
    fac_sizes: Vec<usize>,
    issued: usize,
    // batch bookkeeping for the weighted family
    batch_iters: usize,
    batch_chunks_left: usize,
    batch_of_last: Vec<Option<usize>>,
    batch_issued: Vec<usize>,
    batch_completed: Vec<usize>,
    batch_closed: Vec<bool>,
    weights: Vec<f64>,
    // measurements
    iters: Vec<f64>,
    iter_time: Vec<f64>,
    chunk_time: Vec<f64>,
    count: Vec<f64>,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Reference {
    pub fn new(
        tech: Technique,
        n: usize,
        p: usize,
        h: Option<f64>,
        sigma: Option<f64>,
        weights: Option<Vec<f64>>,
    ) -> Self {
        Reference {
            tech,
            n,
            p,
            h,
            sigma,
            next: 0,
            done: vec![false; p],
            got_static: vec![false; p],
            fac_sizes: fac_sizes(n, p),
            issued: 0,
            batch_iters: 0,
            batch_chunks_left: 0,
            batch_of_last: vec![None; p],
            batch_issued: Vec::new(),
            batch_completed: Vec::new(),
            batch_closed: Vec::new(),
            weights: weights.unwrap_or_else(|| vec![1.0; p]),
            iters: vec![0.0; p],
            iter_time: vec![0.0; p],
            chunk_time: vec![0.0; p],
            count: vec![0.0; p],
            mean: vec![0.0; p],
            m2: vec![0.0; p],
        }
    }

    fn remaining(&self) -> usize {
        self.n - self.next
    }

    pub fn report(&mut self, pe: usize, size: usize, it: f64, total: f64) {
        self.iters[pe] += size as f64;
        self.iter_time[pe] += it;
        self.chunk_time[pe] += total;
        let x = it / size as f64;
        self.count[pe] += 1.0;
        let d = x - self.mean[pe];
        self.mean[pe] += d / self.count[pe];
        self.m2[pe] += d * (x - self.mean[pe]);

        let mut finished_batch = false;
        if let Some(b) = self.batch_of_last[pe].take() {
            self.batch_completed[b] += 1;
            finished_batch =
                self.batch_closed[b] && self.batch_completed[b] == self.batch_issued[b];
        }
        let reweigh = match self.tech {
            Technique::AwfC | Technique::AwfE => true,
            Technique::AwfB | Technique::AwfD => finished_batch,
            _ => false,
        };
        if reweigh {
            let by_total = matches!(self.tech, Technique::AwfD | Technique::AwfE);
            let pf = self.p as f64;
            let rates: Vec<Option<f64>> = (0..self.p)
                .map(|i| {
                    let t = if by_total {
                        self.chunk_time[i]
                    } else {
                        self.iter_time[i]
                    };
                    if self.iters[i] > 0.0 && t > 0.0 {
                        Some(self.iters[i] / t)
                    } else {
                        None
                    }
                })
                .collect();
            let mut fixed = 0.0;
            let mut sum = 0.0;
            for i in 0..self.p {
                match rates[i] {
                    Some(r) => sum += r,
                    None => fixed += self.weights[i],
                }
            }
            if sum > 0.0 {
                for i in 0..self.p {
                    if let Some(r) = rates[i] {
                        self.weights[i] = r * (pf - fixed) / sum;
                    }
                }
            }
        }
    }

    pub fn request(&mut self, pe: usize) -> Option<usize> {
        if self.done[pe] {
            return None;
        }
        let r = self.remaining();
        if r == 0 {
            self.done[pe] = true;
            return None;
        }
        let ceil = |a: usize, b: usize| (a + b - 1) / b;
        let want = match self.tech {
            Technique::Static => {
                if self.got_static[pe] {
                    self.done[pe] = true;
                    return None;
                }
                self.got_static[pe] = true;
                ceil(self.n, self.p)
            }
            Technique::SS => 1,
            Technique::FSC => fsc(self.n, self.p, self.h, self.sigma),
            Technique::MFSC => ceil(self.n, self.fac_sizes.len()),
            Technique::GSS => ceil(r, self.p),
            Technique::TSS => {
                let first = ceil(self.n, 2 * self.p).max(1);
                let c = ceil(2 * self.n, first + 1).max(1);
                let delta = if c > 1 {
                    (first - 1) as f64 / (c - 1) as f64
                } else {
                    0.0
                };
                let v = first as f64 - self.issued as f64 * delta;
                (v.round() as i64).max(1) as usize
            }
            Technique::FAC => self.fac_sizes[self.issued],
            Technique::WF
            | Technique::AwfB
            | Technique::AwfC
            | Technique::AwfD
            | Technique::AwfE => {
                if self.batch_chunks_left == 0 {
                    if let Some(last) = self.batch_closed.last_mut() {
                        *last = true;
                    }
                    self.batch_iters = ceil(r, 2);
                    self.batch_chunks_left = self.p;
                    self.batch_issued.push(0);
                    self.batch_completed.push(0);
                    self.batch_closed.push(false);
                }
                (self.weights[pe] * self.batch_iters as f64 / self.p as f64).ceil() as usize
            }
            Technique::AF => self.af(pe, r),
        };
        let size = want.max(1).min(r);
        self.next += size;
        self.issued += 1;
        if matches!(
            self.tech,
            Technique::FAC
                | Technique::WF
                | Technique::AwfB
                | Technique::AwfC
                | Technique::AwfD
                | Technique::AwfE
        ) && !self.batch_issued.is_empty()
        {
            let b = self.batch_issued.len() - 1;
            self.batch_issued[b] += 1;
            self.batch_chunks_left -= 1;
            if self.batch_chunks_left == 0 || self.remaining() == 0 {
                self.batch_closed[b] = true;
            }
            self.batch_of_last[pe] = Some(b);
        }
        Some(size)
    }

    fn af(&self, pe: usize, r: usize) -> usize {
        if self.count[pe] == 0.0 || !(self.mean[pe] > 0.0) {
            return ((self.n + 4 * self.p - 1) / (4 * self.p)).max(1);
        }
        let mut inv = 0.0;
        let mut d = 0.0;
        let mut known = 0.0;
        let mut unknown = 0.0;
        for i in 0..self.p {
            if self.count[i] > 0.0 && self.mean[i] > 0.0 {
                let sd = if self.count[i] < 2.0 {
                    0.0
                } else {
                    (self.m2[i] / self.count[i]).sqrt()
                };
                inv += 1.0 / self.mean[i];
                d += sd * sd / self.mean[i];
                known += self.weights[i];
            } else {
                unknown += self.weights[i];
            }
        }
        let scale = (known + unknown) / known;
        let inv = inv * scale;
        let d = d * scale;
        let t = r as f64 / inv;
        let x = (d + 2.0 * t - (d * d + 4.0 * d * t).sqrt()) / (2.0 * self.mean[pe]);
        if x.is_finite() {
            x.ceil().max(1.0) as usize
        } else {
            1
        }
    }
}

/// FAC chunk sizes: halve what is left, split into P equal chunks.
pub fn fac_sizes(n: usize, p: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut left = n;
    while left > 0 {
        let batch = (left + 1) / 2;
        let each = (batch + p - 1) / p;
        let mut k = 0;
        while k < p && left > 0 {
            let c = each.min(left);
            out.push(c);
            left -= c;
            k += 1;
        }
    }
    out
}

fn fsc(n: usize, p: usize, h: Option<f64>, sigma: Option<f64>) -> usize {
    let fallback = ((n + p - 1) / p).max(1);
    match (h, sigma) {
        (Some(h), Some(s)) if s > 0.0 && p >= 2 => {
            let v = (2f64.sqrt() * n as f64 * h / (s * p as f64 * (p as f64).ln().sqrt()))
                .powf(2.0 / 3.0);
            if v.is_finite() {
                (v.ceil() as usize).max(1)
            } else {
                fallback
            }
        }
        _ => fallback,
    }
}

/// Either side of the comparison.
pub trait Calculator {
    fn report(&mut self, pe: usize, size: usize, it: f64, total: f64);
    fn request(&mut self, pe: usize) -> Option<(usize, usize)>;
}

impl Calculator for Reference {
    fn report(&mut self, pe: usize, size: usize, it: f64, total: f64) {
        Reference::report(self, pe, size, it, total)
    }

    fn request(&mut self, pe: usize) -> Option<(usize, usize)> {
        let start = self.next;
        Reference::request(self, pe).map(|s| (start, s))
    }
}

impl Calculator for DlsState {
    fn report(&mut self, pe: usize, size: usize, it: f64, total: f64) {
        self.update_stats(pe, size, it, total).unwrap();
    }

    fn request(&mut self, pe: usize) -> Option<(usize, usize)> {
        self.next_chunk(pe, 0.0).map(|c| (c.start, c.size))
    }
}

/// Per-iteration cost of `pe` in the synthetic timing model.
pub fn pi(pe: usize) -> f64 {
    (pe % 3 + 1) as f64
}

/// Synthetic chunk timings: PE-dependent cost with alternating jitter.
pub fn timings(pe: usize, size: usize, k: usize) -> (f64, f64) {
    let it = size as f64 * pi(pe) + if k % 2 == 1 { 0.5 } else { 0.0 };
    (it, it + 0.25)
}

/// Serves PEs in `order` (cycled), each reporting its previous chunk before
/// asking again, until every PE has been refused. Returns (pe, start, size).
pub fn drive(
    calc: &mut dyn Calculator,
    p: usize,
    order: &mut dyn FnMut() -> usize,
) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    let mut last: Vec<Option<usize>> = vec![None; p];
    let mut chunks = vec![0usize; p];
    let mut refused = vec![false; p];
    let mut live = p;
    while live > 0 {
        let pe = order();
        if refused[pe] {
            continue;
        }
        if let Some(size) = last[pe].take() {
            let (it, total) = timings(pe, size, chunks[pe]);
            calc.report(pe, size, it, total);
            chunks[pe] += 1;
        }
        match calc.request(pe) {
            Some((start, size)) => {
                out.push((pe, start, size));
                last[pe] = Some(size);
            }
            None => {
                refused[pe] = true;
                live -= 1;
            }
        }
    }
    out
}

pub fn round_robin(p: usize) -> impl FnMut() -> usize {
    let mut i = p - 1;
    move || {
        i = (i + 1) % p;
        i
    }
}

/// Weights proportional to each PE's speed under [`pi`], summing to P.
pub fn speed_weights(p: usize) -> Vec<f64> {
    let inv: Vec<f64> = (0..p).map(|i| 1.0 / pi(i)).collect();
    let s: f64 = inv.iter().sum();
    inv.iter().map(|v| v * p as f64 / s).collect()
}

/// Configuration used by the oracle comparisons.
pub fn oracle_config(n: usize, p: usize, weighted: bool) -> DlsConfig {
    let mut c = DlsConfig::new(n, p);
    c.h = Some(0.01);
    c.sigma = Some(0.5);
    if weighted {
        c.weights = Some(speed_weights(p));
    }
    c
}

pub fn production(tech: Technique, config: &DlsConfig) -> DlsState {
    DlsState::new(tech, config.clone()).unwrap()
}

pub fn reference(tech: Technique, config: &DlsConfig) -> Reference {
    Reference::new(
        tech,
        config.n,
        config.p,
        config.h,
        config.sigma,
        config.weights.clone(),
    )
}

/// True when `chunks` tile `[0, n)` exactly.
pub fn partitions(chunks: &[(usize, usize, usize)], n: usize) -> bool {
    let mut spans: Vec<(usize, usize)> = chunks.iter().map(|&(_, s, z)| (s, z)).collect();
    spans.sort_unstable();
    let mut at = 0;
    for (s, z) in spans {
        if s != at || z == 0 {
            return false;
        }
        at += z;
    }
    at == n
}
