//! Per-iteration FLOP traces: synthetic generators and the FLOP file format.

use std::fmt::{self, Write as _};
use std::path::Path;

use rand::distributions::Distribution as _;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp, Gamma, Normal, Uniform};

use crate::error::{read_to_string, write_string, Error, Result};

/// Upper bound on rejection-sampling attempts for a single value.
const MAX_REJECTIONS: usize = 1_000_000;

/// FLOP count of each loop iteration; the index is the iteration id.
#[derive(Debug, Clone, PartialEq)]
pub struct Workload {
    flops: Vec<f64>,
}

impl Workload {
    pub fn new(flops: Vec<f64>) -> Result<Self> {
        if flops.is_empty() {
            return Err(Error::InvalidWorkload("no iterations".into()));
        }
        if let Some((i, v)) = flops
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v > 0.0) || !v.is_finite())
        {
            return Err(Error::InvalidWorkload(format!(
                "iteration {i} has nonpositive FLOP count {v}"
            )));
        }
        Ok(Workload { flops })
    }

    pub fn constant(n: usize, flop: f64) -> Result<Self> {
        Self::new(vec![flop; n])
    }

    pub fn len(&self) -> usize {
        self.flops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flops.is_empty()
    }

    pub fn flops(&self) -> &[f64] {
        &self.flops
    }

    /// Sum of FLOP over iterations `[start, start + size)`.
    pub fn chunk_flops(&self, start: usize, size: usize) -> f64 {
        self.flops[start..start + size].iter().sum()
    }

    pub fn total_flops(&self) -> f64 {
        self.flops.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Distribution {
    Constant {
        value: f64,
    },
    Uniform {
        lo: f64,
        hi: f64,
    },
    /// Normal with mean and standard deviation, truncated to `[lo, hi]`.
    Normal {
        mean: f64,
        sd: f64,
        lo: f64,
        hi: f64,
    },
    /// Exponential with rate λ (mean 1/λ), truncated to `[lo, hi]`.
    Exponential {
        rate: f64,
        lo: f64,
        hi: f64,
    },
    /// Gamma with shape k and scale θ, truncated to `[lo, hi]`.
    Gamma {
        shape: f64,
        scale: f64,
        lo: f64,
        hi: f64,
    },
}

impl Distribution {
    pub fn kind(&self) -> &'static str {
        match self {
            Distribution::Constant { .. } => "constant",
            Distribution::Uniform { .. } => "uniform",
            Distribution::Normal { .. } => "normal",
            Distribution::Exponential { .. } => "exponential",
            Distribution::Gamma { .. } => "gamma",
        }
    }

    fn bounds(&self) -> (f64, f64) {
        match *self {
            Distribution::Constant { value } => (value, value),
            Distribution::Uniform { lo, hi }
            | Distribution::Normal { lo, hi, .. }
            | Distribution::Exponential { lo, hi, .. }
            | Distribution::Gamma { lo, hi, .. } => (lo, hi),
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidDistribution(msg));
        let positive = |name: &str, v: f64| -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidDistribution(format!(
                    "{name} must be positive, got {v}"
                )))
            }
        };
        match *self {
            Distribution::Constant { value } => positive("value", value)?,
            Distribution::Uniform { .. } => {}
            Distribution::Normal { mean, sd, .. } => {
                positive("mean", mean)?;
                positive("sd", sd)?;
            }
            Distribution::Exponential { rate, .. } => positive("rate", rate)?,
            Distribution::Gamma { shape, scale, .. } => {
                positive("shape", shape)?;
                positive("scale", scale)?;
            }
        }
        if !matches!(self, Distribution::Constant { .. }) {
            let (lo, hi) = self.bounds();
            if !(lo >= 0.0) || !(lo < hi) {
                return bad(format!(
                    "bounds must satisfy 0 <= lo < hi, got [{lo}, {hi}]"
                ));
            }
        }
        Ok(())
    }

    fn params(&self) -> Vec<f64> {
        let trunc = |lo: f64, hi: f64| -> Vec<f64> {
            if lo == 0.0 && hi == f64::INFINITY {
                vec![]
            } else {
                vec![lo, hi]
            }
        };
        match *self {
            Distribution::Constant { value } => vec![value],
            Distribution::Uniform { lo, hi } => vec![lo, hi],
            Distribution::Normal { mean, sd, lo, hi } => [vec![mean, sd], trunc(lo, hi)].concat(),
            Distribution::Exponential { rate, lo, hi } => [vec![rate], trunc(lo, hi)].concat(),
            Distribution::Gamma {
                shape,
                scale,
                lo,
                hi,
            } => [vec![shape, scale], trunc(lo, hi)].concat(),
        }
    }
}

/// A distribution plus the seed of the generator that samples it.
///
/// Samples come from ChaCha8 seeded with `seed` via `seed_from_u64`, so a
/// given spec produces the same trace on every platform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistributionSpec {
    pub distribution: Distribution,
    pub seed: u64,
}

impl DistributionSpec {
    pub fn new(distribution: Distribution, seed: u64) -> Self {
        DistributionSpec { distribution, seed }
    }

    /// Parses `KIND,PARAMS[,SEED]`. Truncation bounds are optional for
    /// normal, exponential and gamma; when `SEED` is absent `default_seed`
    /// is used. Exponential takes the rate λ.
    ///
    /// ```text
    /// constant,2.3e8
    /// uniform,1e3,7e8
    /// normal,9.5e8,7e7,6e8,1.3e9
    /// exponential,3.3333333333e-9,948,4.5e9
    /// gamma,2,1e8,4.1e6,2.7e9,42
    /// ```
    pub fn parse(s: &str, default_seed: Option<u64>) -> Result<Self> {
        let mut fields = s.split(',').map(str::trim);
        let kind = fields.next().unwrap_or_default().to_ascii_lowercase();
        let rest: Vec<&str> = fields.collect();
        // (parameter counts without seed) for each kind
        let counts: &[usize] = match kind.as_str() {
            "constant" => &[1],
            "uniform" => &[2],
            "normal" | "gamma" => &[2, 4],
            "exponential" => &[1, 3],
            _ => return Err(Error::InvalidDistribution(format!("unknown kind `{kind}`"))),
        };
        let (params, seed) = if counts.contains(&rest.len()) {
            (&rest[..], None)
        } else if counts.contains(&(rest.len().wrapping_sub(1))) {
            (&rest[..rest.len() - 1], Some(rest[rest.len() - 1]))
        } else {
            return Err(Error::InvalidDistribution(format!(
                "`{s}`: wrong number of parameters for {kind}"
            )));
        };
        let seed = match seed {
            Some(v) => v
                .parse::<u64>()
                .map_err(|_| Error::InvalidDistribution(format!("malformed seed `{v}`")))?,
            None => default_seed
                .ok_or_else(|| Error::InvalidDistribution(format!("`{s}`: missing seed")))?,
        };
        let p = params
            .iter()
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| Error::InvalidDistribution(format!("malformed number `{v}`")))
            })
            .collect::<Result<Vec<f64>>>()?;
        let (lo, hi) = if p.len() > counts[0] {
            (p[p.len() - 2], p[p.len() - 1])
        } else {
            (0.0, f64::INFINITY)
        };
        let distribution = match kind.as_str() {
            "constant" => Distribution::Constant { value: p[0] },
            "uniform" => Distribution::Uniform { lo: p[0], hi: p[1] },
            "normal" => Distribution::Normal {
                mean: p[0],
                sd: p[1],
                lo,
                hi,
            },
            "exponential" => Distribution::Exponential { rate: p[0], lo, hi },
            _ => Distribution::Gamma {
                shape: p[0],
                scale: p[1],
                lo,
                hi,
            },
        };
        distribution.validate()?;
        Ok(DistributionSpec { distribution, seed })
    }

    /// `KIND,PARAMS` without the seed; parses back with `parse`.
    pub fn label(&self) -> String {
        let mut s = self.distribution.kind().to_string();
        for v in self.distribution.params() {
            let _ = write!(s, ",{v}");
        }
        s
    }
}

impl fmt::Display for DistributionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.label(), self.seed)
    }
}

/// The five synthetic workload distributions of the factorial design.
pub fn standard_distributions() -> Vec<(&'static str, Distribution)> {
    vec![
        ("constant", Distribution::Constant { value: 2.3e8 }),
        ("uniform", Distribution::Uniform { lo: 1e3, hi: 7e8 }),
        (
            "normal",
            Distribution::Normal {
                mean: 9.5e8,
                sd: 7e7,
                lo: 6e8,
                hi: 1.3e9,
            },
        ),
        (
            "exponential",
            Distribution::Exponential {
                rate: 1.0 / 3e8,
                lo: 9.48e2,
                hi: 4.5e9,
            },
        ),
        (
            "gamma",
            Distribution::Gamma {
                shape: 2.0,
                scale: 1e8,
                lo: 4.1e6,
                hi: 2.7e9,
            },
        ),
    ]
}

pub fn generate_workload(spec: &DistributionSpec, n: usize) -> Result<Workload> {
    if n == 0 {
        return Err(Error::InvalidWorkload(
            "iteration count must be >= 1".into(),
        ));
    }
    let dist = spec.distribution;
    dist.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (lo, hi) = dist.bounds();
    let map_err = |e: &dyn fmt::Display| Error::InvalidDistribution(e.to_string());
    let sampler: Box<dyn FnMut(&mut ChaCha8Rng) -> f64> = match dist {
        Distribution::Constant { value } => return Workload::new(vec![value; n]),
        Distribution::Uniform { lo, hi } => {
            let u = Uniform::new_inclusive(lo, hi);
            Box::new(move |r| u.sample(r))
        }
        Distribution::Normal { mean, sd, .. } => {
            let d = Normal::new(mean, sd).map_err(|e| map_err(&e))?;
            Box::new(move |r| d.sample(r))
        }
        Distribution::Exponential { rate, .. } => {
            let d = Exp::new(rate).map_err(|e| map_err(&e))?;
            Box::new(move |r| d.sample(r))
        }
        Distribution::Gamma { shape, scale, .. } => {
            let d = Gamma::new(shape, scale).map_err(|e| map_err(&e))?;
            Box::new(move |r| d.sample(r))
        }
    };
    let mut sampler = sampler;
    let mut flops = Vec::with_capacity(n);
    for _ in 0..n {
        let mut tries = 0;
        let v = loop {
            let v = sampler(&mut rng);
            if v > 0.0 && v >= lo && v <= hi {
                break v;
            }
            tries += 1;
            if tries >= MAX_REJECTIONS {
                return Err(Error::InvalidDistribution(format!(
                    "no sample inside [{lo}, {hi}] after {MAX_REJECTIONS} draws"
                )));
            }
        };
        flops.push(v);
    }
    Workload::new(flops)
}

pub fn load_flop_file(path: &Path) -> Result<Workload> {
    let text = read_to_string(path)?;
    parse_flops(&text, &path.display().to_string())
}

pub fn parse_flops(text: &str, origin: &str) -> Result<Workload> {
    let mut flops = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let v: f64 = line
            .parse()
            .map_err(|_| Error::parse(origin, i + 1, format!("malformed FLOP count `{line}`")))?;
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::parse(
                origin,
                i + 1,
                format!("nonpositive FLOP count {v}"),
            ));
        }
        flops.push(v);
    }
    if flops.is_empty() {
        return Err(Error::InvalidWorkload(format!("{origin}: empty FLOP file")));
    }
    Workload::new(flops)
}

pub fn store_flop_file(workload: &Workload, path: &Path) -> Result<()> {
    let mut out = String::with_capacity(workload.len() * 12);
    for v in workload.flops() {
        let _ = writeln!(out, "{v}");
    }
    write_string(path, &out)
}

/// Population standard deviation of the iteration execution times at `speed`.
pub fn workload_sigma(workload: &Workload, speed: f64) -> f64 {
    // shifting by the first entry keeps identical entries at exactly zero
    let f0 = workload.flops()[0];
    let n = workload.len() as f64;
    let mean = workload
        .flops()
        .iter()
        .map(|f| (f - f0) / speed)
        .sum::<f64>()
        / n;
    let var = workload
        .flops()
        .iter()
        .map(|f| {
            let d = (f - f0) / speed - mean;
            d * d
        })
        .sum::<f64>()
        / n;
    var.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_is_flat() {
        let spec = DistributionSpec::parse("constant,2.3e8", Some(1)).unwrap();
        let w = generate_workload(&spec, 5).unwrap();
        assert_eq!(w.flops(), &[2.3e8; 5]);
        assert_eq!(workload_sigma(&w, 1e9), 0.0);
    }

    #[test]
    fn sigma_by_hand() {
        let w = Workload::new(vec![1e9, 3e9]).unwrap();
        assert!((workload_sigma(&w, 1e9) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn parse_with_and_without_seed() {
        let a = DistributionSpec::parse("normal,9.5e8,7e7", Some(3)).unwrap();
        assert_eq!(a.seed, 3);
        let b = DistributionSpec::parse("normal,9.5e8,7e7,6e8,1.3e9,11", None).unwrap();
        assert_eq!(b.seed, 11);
        assert_eq!(
            b.distribution,
            Distribution::Normal {
                mean: 9.5e8,
                sd: 7e7,
                lo: 6e8,
                hi: 1.3e9
            }
        );
        let c = DistributionSpec::parse(&b.to_string(), None).unwrap();
        assert_eq!(b, c);
        assert!(DistributionSpec::parse("normal,9.5e8", Some(1)).is_err());
        assert!(DistributionSpec::parse("weibull,1,2", Some(1)).is_err());
        assert!(DistributionSpec::parse("uniform,5,1", Some(1)).is_err());
        assert!(DistributionSpec::parse("gamma,-2,1e8", Some(1)).is_err());
        assert!(DistributionSpec::parse("constant,1", None).is_err());
    }

    #[test]
    fn flop_file_errors() {
        let w = parse_flops("1000\n2000\n", "f").unwrap();
        assert_eq!(w.flops(), &[1000.0, 2000.0]);
        assert!(parse_flops("", "f")
            .unwrap_err()
            .to_string()
            .contains("empty"));
        let e = parse_flops("1\n-3\n", "f").unwrap_err();
        assert!(e.to_string().starts_with("f:2"), "{e}");
        let e = parse_flops("1\n2\nabc\n", "f").unwrap_err();
        assert!(e.to_string().starts_with("f:3"), "{e}");
    }

    #[test]
    fn zero_iterations_rejected() {
        let spec = DistributionSpec::parse("constant,1", Some(0)).unwrap();
        assert!(generate_workload(&spec, 0).is_err());
    }

    #[test]
    fn impossible_truncation_is_an_error() {
        let spec = DistributionSpec::new(
            Distribution::Normal {
                mean: 1.0,
                sd: 1e-3,
                lo: 100.0,
                hi: 101.0,
            },
            1,
        );
        assert!(generate_workload(&spec, 1).is_err());
    }
}
