//! Periodic, piecewise-constant perturbations of delivered PE speed, link
//! bandwidth and link latency.
//!
//! A perturbation is inactive before its onset. From the onset on, time is
//! divided into periods; the first `duty` fraction of each period is active
//! and the remainder is unperturbed. During an active window the delivered
//! fraction of nominal capacity is the period's factor: the mean factor for
//! constant perturbations, or an exponential draw with that mean for
//! exponential ones. Draws depend only on `(seed, period index)`.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

use crate::error::{read_to_string, Error, Result};
use crate::platform::{Host, Link};

/// Smallest delivered fraction; keeps speeds and bandwidths positive.
pub const MIN_FACTOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Target {
    Availability,
    Bandwidth,
    Latency,
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Target::Availability => "availability",
            Target::Bandwidth => "bandwidth",
            Target::Latency => "latency",
        })
    }
}

impl FromStr for Target {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "availability" | "pea" => Ok(Target::Availability),
            "bandwidth" | "bw" => Ok(Target::Bandwidth),
            "latency" | "lat" => Ok(Target::Latency),
            _ => Err(Error::InvalidPerturbation(format!("unknown target `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactorDistribution {
    Constant,
    Exponential,
}

impl fmt::Display for FactorDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FactorDistribution::Constant => "constant",
            FactorDistribution::Exponential => "exponential",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationSpec {
    pub target: Target,
    pub distribution: FactorDistribution,
    pub mean_factor: f64,
    /// Carried as metadata; exponential draws are fully determined by the mean.
    pub sigma_factor: f64,
    pub onset: f64,
    pub period: f64,
    pub duty: f64,
    pub seed: u64,
    /// PEs affected by the perturbation; `None` means all of them.
    pub pes: Option<Vec<usize>>,
}

impl PerturbationSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidPerturbation(msg));
        if !(self.mean_factor > 0.0 && self.mean_factor <= 1.0) {
            return bad(format!("mean factor {} outside (0, 1]", self.mean_factor));
        }
        if !(self.sigma_factor >= 0.0) {
            return bad(format!("negative sigma factor {}", self.sigma_factor));
        }
        if !(self.period > 0.0) || !self.period.is_finite() {
            return bad(format!("period {} must be positive", self.period));
        }
        if !(self.duty > 0.0 && self.duty <= 1.0) {
            return bad(format!("duty {} outside (0, 1]", self.duty));
        }
        if !(self.onset >= 0.0) || !self.onset.is_finite() {
            return bad(format!("onset {} must be nonnegative", self.onset));
        }
        Ok(())
    }

    pub fn affects(&self, pe: usize) -> bool {
        self.pes.as_ref().is_none_or(|v| v.contains(&pe))
    }

    /// Index of the period containing `t` when `t` lies in an active window.
    pub fn active_period(&self, t: f64) -> Option<u64> {
        if t < self.onset {
            return None;
        }
        let rel = t - self.onset;
        let k = (rel / self.period).floor();
        let phase = rel - k * self.period;
        (phase < self.duty * self.period).then_some(k as u64)
    }

    /// Delivered fraction of nominal capacity at time `t`.
    pub fn factor_at(&self, t: f64) -> f64 {
        match self.active_period(t) {
            None => 1.0,
            Some(k) => self.period_factor(k),
        }
    }

    /// Factor of the `k`-th active window.
    pub fn period_factor(&self, k: u64) -> f64 {
        match self.distribution {
            FactorDistribution::Constant => self.mean_factor.clamp(MIN_FACTOR, 1.0),
            FactorDistribution::Exponential => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                rng.set_stream(k);
                let x: f64 = rng.sample(Exp1);
                (self.mean_factor * x).clamp(MIN_FACTOR, 1.0)
            }
        }
    }

    /// First breakpoint strictly after `t` (onset, window start or window end).
    pub fn next_breakpoint(&self, t: f64) -> f64 {
        if t < self.onset {
            return self.onset;
        }
        let rel = t - self.onset;
        let mut k = (rel / self.period).floor();
        loop {
            let start = self.onset + k * self.period;
            let end = self.onset + (k + self.duty) * self.period;
            if start > t {
                return start;
            }
            if end > t && self.duty < 1.0 {
                return end;
            }
            k += 1.0;
        }
    }
}

/// A named set of perturbations, at most one per target.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub specs: Vec<PerturbationSpec>,
}

impl Scenario {
    pub fn new(name: impl Into<String>, specs: Vec<PerturbationSpec>) -> Result<Self> {
        for (i, s) in specs.iter().enumerate() {
            s.validate()?;
            if specs[..i].iter().any(|o| o.target == s.target) {
                return Err(Error::InvalidPerturbation(format!(
                    "more than one {} perturbation",
                    s.target
                )));
            }
        }
        Ok(Scenario {
            name: name.into(),
            specs,
        })
    }

    /// The unperturbed scenario.
    pub fn none() -> Self {
        Scenario {
            name: "np".into(),
            specs: Vec::new(),
        }
    }

    pub fn spec(&self, target: Target) -> Option<&PerturbationSpec> {
        self.specs.iter().find(|s| s.target == target)
    }

    fn spec_for(&self, target: Target, pe: usize) -> Option<&PerturbationSpec> {
        self.spec(target).filter(|s| s.affects(pe))
    }

    pub fn factor(&self, target: Target, pe: usize, t: f64) -> f64 {
        self.spec_for(target, pe).map_or(1.0, |s| s.factor_at(t))
    }

    pub fn next_breakpoint(&self, target: Target, pe: usize, t: f64) -> f64 {
        self.spec_for(target, pe)
            .map_or(f64::INFINITY, |s| s.next_breakpoint(t))
    }

    /// Same scenario with every spec reseeded from `seed`.
    pub fn reseeded(&self, seed: u64) -> Scenario {
        let mut out = self.clone();
        for s in &mut out.specs {
            s.seed = target_seed(seed, s.target);
        }
        out
    }

    /// Time at which a PE of nominal speed `speed` starting at `start`
    /// completes `work` FLOP, integrating the piecewise-constant
    /// availability exactly.
    pub fn finish_time(&self, pe: usize, speed: f64, start: f64, work: f64) -> f64 {
        let Some(spec) = self.spec_for(Target::Availability, pe) else {
            return start + work / speed;
        };
        let mut t = start;
        let mut remaining = work;
        loop {
            let next = spec.next_breakpoint(t);
            // evaluate at the middle of the segment to stay clear of rounding
            // at the breakpoints themselves
            let f = spec.factor_at(0.5 * (t + next));
            let rate = speed * f;
            let capacity = (next - t) * rate;
            if !next.is_finite() || capacity >= remaining {
                return t + remaining / rate;
            }
            remaining -= capacity;
            t = next;
        }
    }

    /// FLOP delivered by a PE of nominal speed `speed` over `[start, end]`.
    pub fn delivered_work(&self, pe: usize, speed: f64, start: f64, end: f64) -> f64 {
        let Some(spec) = self.spec_for(Target::Availability, pe) else {
            return (end - start) * speed;
        };
        let mut t = start;
        let mut work = 0.0;
        while t < end {
            let next = spec.next_breakpoint(t).min(end);
            work += (next - t) * speed * spec.factor_at(0.5 * (t + next));
            t = next;
        }
        work
    }
}

fn target_seed(seed: u64, target: Target) -> u64 {
    let salt = match target {
        Target::Availability => 0x9e37_79b9_7f4a_7c15,
        Target::Bandwidth => 0xbf58_476d_1ce4_e5b9,
        Target::Latency => 0x94d0_49bb_1331_11eb,
    };
    seed ^ salt
}

pub fn effective_speed(host: &Host, pe: usize, scenario: &Scenario, t: f64) -> f64 {
    host.speed * scenario.factor(Target::Availability, pe, t)
}

pub fn effective_bandwidth(link: &Link, pe: usize, scenario: &Scenario, t: f64) -> f64 {
    link.bandwidth * scenario.factor(Target::Bandwidth, pe, t)
}

/// Latency factors divide: a smaller factor means a longer latency.
pub fn effective_latency(link: &Link, pe: usize, scenario: &Scenario, t: f64) -> f64 {
    link.latency / scenario.factor(Target::Latency, pe, t)
}

pub const STANDARD_PERIOD: f64 = 100.0;
pub const STANDARD_DUTY: f64 = 0.5;
pub const AVAILABILITY_ONSET: f64 = 50.0;
pub const NETWORK_ONSET: f64 = 0.0;
pub const DEFAULT_SCENARIO_SEED: u64 = 0x5eed;

/// (mean factor, sigma factor) of each catalog entry, as fractions.
fn catalog_entry(target: Target, code: &str) -> Option<(FactorDistribution, f64, f64)> {
    use FactorDistribution::{Constant as C, Exponential as E};
    let pct = |v: f64| v / 100.0;
    Some(match (target, code) {
        (Target::Availability, "cm") => (C, pct(75.0), 0.0),
        (Target::Availability, "cs") => (C, pct(25.0), 0.0),
        (Target::Availability, "em") => (E, pct(78.0), pct(24e-3)),
        (Target::Availability, "es") => (E, pct(31.0), pct(89e-3)),
        (Target::Bandwidth, "cm") => (C, pct(1e-5), 0.0),
        (Target::Bandwidth, "cs") => (C, pct(1e-7), 0.0),
        (Target::Bandwidth, "em") => (E, pct(1.1e-1), pct(9e-2)),
        (Target::Bandwidth, "es") => (E, pct(23e-2), pct(19e-2)),
        (Target::Latency, "cm") => (C, pct(1e-5), 0.0),
        (Target::Latency, "cs") => (C, pct(1e-7), 0.0),
        (Target::Latency, "em") => (E, pct(1.2e-5), pct(1.5e-5)),
        (Target::Latency, "es") => (E, pct(2.9e-7), pct(1.8e-7)),
        _ => return None,
    })
}

fn catalog_spec(target: Target, code: &str, seed: u64) -> Option<PerturbationSpec> {
    let (distribution, mean_factor, sigma_factor) = catalog_entry(target, code)?;
    Some(PerturbationSpec {
        target,
        distribution,
        mean_factor,
        sigma_factor,
        onset: match target {
            Target::Availability => AVAILABILITY_ONSET,
            _ => NETWORK_ONSET,
        },
        period: STANDARD_PERIOD,
        duty: STANDARD_DUTY,
        seed: target_seed(seed, target),
        pes: None,
    })
}

pub const STANDARD_SCENARIO_NAMES: [&str; 17] = [
    "np", "pea-cm", "pea-cs", "pea-em", "pea-es", "bw-cm", "bw-cs", "bw-em", "bw-es", "lat-cm",
    "lat-cs", "lat-em", "lat-es", "all-cm", "all-cs", "all-em", "all-es",
];

/// Catalog scenario by name, with draws seeded from `seed`.
pub fn scenario_by_name(name: &str, seed: u64) -> Result<Scenario> {
    let unknown = || Error::UnknownScenario(name.to_string());
    if name == "np" {
        return Ok(Scenario::none());
    }
    let (family, code) = name.split_once('-').ok_or_else(unknown)?;
    let targets: &[Target] = match family {
        "pea" => &[Target::Availability],
        "bw" => &[Target::Bandwidth],
        "lat" => &[Target::Latency],
        "all" => &[Target::Availability, Target::Bandwidth, Target::Latency],
        _ => return Err(unknown()),
    };
    let specs = targets
        .iter()
        .map(|&t| catalog_spec(t, code, seed).ok_or_else(unknown))
        .collect::<Result<Vec<_>>>()?;
    Scenario::new(name, specs)
}

/// All catalog scenarios with the default seed.
pub fn standard_scenarios() -> Vec<Scenario> {
    STANDARD_SCENARIO_NAMES
        .iter()
        .map(|n| scenario_by_name(n, DEFAULT_SCENARIO_SEED).expect("catalog names are valid"))
        .collect()
}

/// Parses a scenario file: one
/// `perturb <target> <constant|exponential> <mean> <sigma> <onset> <period> <duty> [pes=i,j,..]`
/// record per line, `#` comments allowed.
pub fn parse_scenario(text: &str, name: &str, seed: u64) -> Result<Scenario> {
    let mut specs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f[0] != "perturb" || !(f.len() == 8 || f.len() == 9) {
            return Err(Error::parse(
                name,
                lineno,
                "expected `perturb <target> <distribution> <mean> <sigma> <onset> <period> <duty>`",
            ));
        }
        let target: Target = f[1]
            .parse()
            .map_err(|e: Error| Error::parse(name, lineno, e.to_string()))?;
        let distribution = match f[2] {
            "constant" => FactorDistribution::Constant,
            "exponential" => FactorDistribution::Exponential,
            other => {
                return Err(Error::parse(
                    name,
                    lineno,
                    format!("unknown distribution `{other}`"),
                ))
            }
        };
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| Error::parse(name, lineno, format!("malformed number `{s}`")))
        };
        let pes = match f.get(8) {
            None => None,
            Some(sel) => {
                let list = sel.strip_prefix("pes=").ok_or_else(|| {
                    Error::parse(name, lineno, format!("expected `pes=...`, got `{sel}`"))
                })?;
                Some(
                    list.split(',')
                        .map(|v| {
                            v.parse::<usize>().map_err(|_| {
                                Error::parse(name, lineno, format!("malformed PE index `{v}`"))
                            })
                        })
                        .collect::<Result<Vec<_>>>()?,
                )
            }
        };
        let spec = PerturbationSpec {
            target,
            distribution,
            mean_factor: num(f[3])?,
            sigma_factor: num(f[4])?,
            onset: num(f[5])?,
            period: num(f[6])?,
            duty: num(f[7])?,
            seed: target_seed(seed, target),
            pes,
        };
        spec.validate()
            .map_err(|e| Error::parse(name, lineno, e.to_string()))?;
        specs.push(spec);
    }
    Scenario::new(name, specs)
}

pub fn load_scenario_file(path: &Path, seed: u64) -> Result<Scenario> {
    let text = read_to_string(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "custom".into());
    parse_scenario(&text, &name, seed).map_err(|e| match e {
        Error::Parse { line, msg, .. } => Error::Parse {
            origin: path.display().to_string(),
            line,
            msg,
        },
        other => other,
    })
}
