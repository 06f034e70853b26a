//! Heterogeneous computing system: one host per core, each attached to an
//! ideal hub through its own link.
//!
//! The text representation is line oriented:
//!
//! ```text
//! # comment
//! host <id> <class> <speed_flops>
//! link <host_id> <bandwidth_Bps> <latency_s>
//! master <host_id>
//! ```

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{read_to_string, write_string, Error, Result};

/// Nominal speed of a Broadwell core in the miniHPC fixtures (FLOP/s).
pub const BROADWELL_SPEED: f64 = 4.085e9;
/// Nominal speed of a KNL core in the miniHPC fixtures (FLOP/s).
///
/// `BROADWELL_SPEED / (BROADWELL_SPEED + KNL_SPEED) = 0.817`.
pub const KNL_SPEED: f64 = 0.915e9;
/// Per-link bandwidth of the miniHPC fixtures (100 Gb/s fabric).
pub const FABRIC_BANDWIDTH: f64 = 1.25e10;
/// Per-link latency of the miniHPC fixtures.
pub const FABRIC_LATENCY: f64 = 2e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Host {
    pub id: String,
    pub class: String,
    /// Nominal, unperturbed speed in FLOP/s.
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub host_id: String,
    /// Bytes per second.
    pub bandwidth: f64,
    /// Seconds.
    pub latency: f64,
}

/// A validated platform. Links are stored in host order, so `links()[i]`
/// belongs to `hosts()[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Platform {
    hosts: Vec<Host>,
    links: Vec<Link>,
    master: usize,
}

impl Platform {
    pub fn new(hosts: Vec<Host>, links: Vec<Link>, master: usize) -> Result<Self> {
        if hosts.len() < 2 {
            return Err(Error::InvalidPlatform(format!(
                "at least 2 hosts required, found {}",
                hosts.len()
            )));
        }
        let mut index = HashMap::with_capacity(hosts.len());
        for (i, h) in hosts.iter().enumerate() {
            if !(h.speed > 0.0) || !h.speed.is_finite() {
                return Err(Error::InvalidPlatform(format!(
                    "host `{}` has nonpositive speed {}",
                    h.id, h.speed
                )));
            }
            if index.insert(h.id.as_str(), i).is_some() {
                return Err(Error::InvalidPlatform(format!(
                    "duplicate host id `{}`",
                    h.id
                )));
            }
        }
        if links.len() != hosts.len() {
            return Err(Error::InvalidPlatform(format!(
                "{} links for {} hosts",
                links.len(),
                hosts.len()
            )));
        }
        let mut ordered: Vec<Option<Link>> = vec![None; hosts.len()];
        for l in links {
            let Some(&i) = index.get(l.host_id.as_str()) else {
                return Err(Error::InvalidPlatform(format!(
                    "link refers to unknown host `{}`",
                    l.host_id
                )));
            };
            check_link(&l)?;
            if ordered[i].is_some() {
                return Err(Error::InvalidPlatform(format!(
                    "host `{}` has more than one link",
                    l.host_id
                )));
            }
            ordered[i] = Some(l);
        }
        let links = ordered
            .into_iter()
            .zip(&hosts)
            .map(|(l, h)| {
                l.ok_or_else(|| Error::InvalidPlatform(format!("host `{}` has no link", h.id)))
            })
            .collect::<Result<Vec<_>>>()?;
        if master >= hosts.len() {
            return Err(Error::InvalidPlatform(format!(
                "master index {master} out of range"
            )));
        }
        Ok(Platform {
            hosts,
            links,
            master,
        })
    }

    /// `p` identical hosts sharing the same link parameters; host 0 is the master.
    pub fn homogeneous(p: usize, speed: f64, bandwidth: f64, latency: f64) -> Result<Self> {
        Self::from_speeds(&vec![speed; p], bandwidth, latency)
    }

    /// One host per entry of `speeds`; host 0 is the master.
    pub fn from_speeds(speeds: &[f64], bandwidth: f64, latency: f64) -> Result<Self> {
        let hosts: Vec<Host> = speeds
            .iter()
            .enumerate()
            .map(|(i, &speed)| Host {
                id: format!("pe{i}"),
                class: "generic".to_string(),
                speed,
            })
            .collect();
        let links = hosts
            .iter()
            .map(|h| Link {
                host_id: h.id.clone(),
                bandwidth,
                latency,
            })
            .collect();
        Platform::new(hosts, links, 0)
    }

    /// miniHPC slice with `broadwell` Broadwell cores followed by `knl` KNL
    /// cores. The master runs on the first Broadwell core.
    pub fn mini_hpc(broadwell: usize, knl: usize) -> Result<Self> {
        let mut hosts = Vec::with_capacity(broadwell + knl);
        for i in 0..broadwell {
            hosts.push(Host {
                id: format!("bdw{i}"),
                class: "broadwell".to_string(),
                speed: BROADWELL_SPEED,
            });
        }
        for i in 0..knl {
            hosts.push(Host {
                id: format!("knl{i}"),
                class: "knl".to_string(),
                speed: KNL_SPEED,
            });
        }
        let links = hosts
            .iter()
            .map(|h| Link {
                host_id: h.id.clone(),
                bandwidth: FABRIC_BANDWIDTH,
                latency: FABRIC_LATENCY,
            })
            .collect();
        Platform::new(hosts, links, 0)
    }

    /// Built-in fixtures addressable by name: `mini128` and `mini416`.
    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "mini128" => Self::mini_hpc(64, 64).ok(),
            "mini416" => Self::mini_hpc(352, 64).ok(),
            _ => None,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = read_to_string(path)?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn store(&self, path: &Path) -> Result<()> {
        write_string(path, &self.to_text())
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut hosts: Vec<Host> = Vec::new();
        let mut links = Vec::new();
        let mut master: Option<(usize, String)> = None;
        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            match fields[0] {
                "host" => {
                    let [_, id, class, speed] = fields[..] else {
                        return Err(Error::parse(
                            origin,
                            lineno,
                            "expected `host <id> <class> <speed>`",
                        ));
                    };
                    let speed = parse_number(origin, lineno, speed)?;
                    if !(speed > 0.0) {
                        return Err(Error::parse(
                            origin,
                            lineno,
                            format!("host `{id}` has nonpositive speed {speed}"),
                        ));
                    }
                    hosts.push(Host {
                        id: id.to_string(),
                        class: class.to_string(),
                        speed,
                    });
                }
                "link" => {
                    let [_, id, bw, lat] = fields[..] else {
                        return Err(Error::parse(
                            origin,
                            lineno,
                            "expected `link <host_id> <bandwidth> <latency>`",
                        ));
                    };
                    if !hosts.iter().any(|h| h.id == id) {
                        return Err(Error::parse(
                            origin,
                            lineno,
                            format!("link for host `{id}` appears before the host"),
                        ));
                    }
                    let link = Link {
                        host_id: id.to_string(),
                        bandwidth: parse_number(origin, lineno, bw)?,
                        latency: parse_number(origin, lineno, lat)?,
                    };
                    check_link(&link).map_err(|e| Error::parse(origin, lineno, e.to_string()))?;
                    links.push(link);
                }
                "master" => {
                    let [_, id] = fields[..] else {
                        return Err(Error::parse(origin, lineno, "expected `master <host_id>`"));
                    };
                    if master.is_some() {
                        return Err(Error::parse(origin, lineno, "more than one `master` line"));
                    }
                    master = Some((lineno, id.to_string()));
                }
                other => {
                    return Err(Error::parse(
                        origin,
                        lineno,
                        format!("unknown record `{other}`"),
                    ))
                }
            }
        }
        let Some((lineno, master_id)) = master else {
            return Err(Error::InvalidPlatform(format!(
                "{origin}: missing `master` line"
            )));
        };
        let Some(master) = hosts.iter().position(|h| h.id == master_id) else {
            return Err(Error::parse(
                origin,
                lineno,
                format!("master `{master_id}` is not a host"),
            ));
        };
        Platform::new(hosts, links, master)
    }

    /// Canonical text form: hosts, then links in host order, then the master.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for h in &self.hosts {
            let _ = writeln!(out, "host {} {} {}", h.id, h.class, h.speed);
        }
        for l in &self.links {
            let _ = writeln!(out, "link {} {} {}", l.host_id, l.bandwidth, l.latency);
        }
        let _ = writeln!(out, "master {}", self.hosts[self.master].id);
        out
    }

    pub fn pe_count(&self) -> usize {
        self.hosts.len()
    }

    pub fn hosts(&self) -> &[Host] {
        &self.hosts
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn host(&self, pe: usize) -> &Host {
        &self.hosts[pe]
    }

    pub fn link(&self, pe: usize) -> &Link {
        &self.links[pe]
    }

    pub fn master(&self) -> usize {
        self.master
    }

    pub fn mean_speed(&self) -> f64 {
        self.hosts.iter().map(|h| h.speed).sum::<f64>() / self.hosts.len() as f64
    }

    /// Weight of each host relative to the mean speed; the weights sum to P.
    pub fn relative_core_weights(&self) -> Vec<f64> {
        let total: f64 = self.hosts.iter().map(|h| h.speed).sum();
        let p = self.hosts.len() as f64;
        self.hosts.iter().map(|h| h.speed * p / total).collect()
    }

    /// Copy of the platform with every host's speed multiplied by `factors[i]`.
    pub fn with_speed_factors(&self, factors: &[f64]) -> Platform {
        let mut out = self.clone();
        for (h, f) in out.hosts.iter_mut().zip(factors) {
            h.speed *= f;
        }
        out
    }
}

fn check_link(l: &Link) -> Result<()> {
    if !(l.bandwidth > 0.0) {
        return Err(Error::InvalidPlatform(format!(
            "link of `{}` has nonpositive bandwidth {}",
            l.host_id, l.bandwidth
        )));
    }
    if !(l.latency >= 0.0) || !l.latency.is_finite() {
        return Err(Error::InvalidPlatform(format!(
            "link of `{}` has negative latency {}",
            l.host_id, l.latency
        )));
    }
    Ok(())
}

fn parse_number(origin: &str, line: usize, s: &str) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| Error::parse(origin, line, format!("malformed number `{s}`")))
}
