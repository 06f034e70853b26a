//! Load-imbalance metrics and normalization against a baseline.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Scenario and technique of the baseline cell.
pub const BASELINE: (&str, &str) = ("np", "STATIC");

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImbalanceReport {
    /// Coefficient of variation of the PE finishing times.
    pub cov: f64,
    /// Mean over maximum PE finishing time.
    pub mean_max: f64,
    /// Parallel loop time, the latest PE finishing time.
    pub t_par: f64,
}

pub fn imbalance(per_pe_finish: &[f64]) -> Result<ImbalanceReport> {
    if per_pe_finish.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least two finishing times, got {}",
            per_pe_finish.len()
        )));
    }
    if let Some(t) = per_pe_finish
        .iter()
        .find(|&&t| !(t > 0.0) || !t.is_finite())
    {
        return Err(Error::InvalidInput(format!(
            "finishing times must be positive, got {t}"
        )));
    }
    // shifting by the first entry keeps identical times exactly balanced
    let t0 = per_pe_finish[0];
    let n = per_pe_finish.len() as f64;
    let shift = per_pe_finish.iter().map(|t| t - t0).sum::<f64>() / n;
    let mean = t0 + shift;
    let var = per_pe_finish
        .iter()
        .map(|t| (t - t0 - shift) * (t - t0 - shift))
        .sum::<f64>()
        / n;
    let t_par = per_pe_finish.iter().copied().fold(0.0, f64::max);
    Ok(ImbalanceReport {
        cov: var.sqrt() / mean,
        mean_max: mean / t_par,
        t_par,
    })
}

/// `t_par` of every cell as a percentage of `baseline`.
pub fn normalize_to_baseline<K: Ord + Clone>(
    results: &BTreeMap<K, f64>,
    baseline: f64,
) -> Result<BTreeMap<K, f64>> {
    if !(baseline > 0.0) || !baseline.is_finite() {
        return Err(Error::InvalidInput(format!(
            "baseline must be positive, got {baseline}"
        )));
    }
    Ok(results
        .iter()
        .map(|(k, &t)| (k.clone(), normalize(t, baseline)))
        .collect())
}

pub fn normalize(t_par: f64, baseline: f64) -> f64 {
    100.0 * (t_par / baseline)
}

/// The STATIC under np cell of a (scenario, technique) keyed table.
pub fn baseline_of(results: &BTreeMap<(String, String), f64>) -> Result<f64> {
    results
        .get(&(BASELINE.0.to_string(), BASELINE.1.to_string()))
        .copied()
        .ok_or_else(|| {
            Error::InvalidInput(format!(
                "missing baseline cell ({} under {})",
                BASELINE.1, BASELINE.0
            ))
        })
}

/// One line of the report table.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub scenario: String,
    pub technique: String,
    pub t_par: f64,
    pub cov: f64,
    pub mean_max: f64,
    pub normalized_pct: f64,
}

pub fn report_csv(rows: &[ReportRow]) -> String {
    let mut s = String::from("scenario,technique,t_par,cov,mean_max,normalized_pct\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.scenario, r.technique, r.t_par, r.cov, r.mean_max, r.normalized_pct
        );
    }
    s
}

/// Heatmap layout: one row per technique, one column per scenario, cells
/// in percent of the baseline. Missing cells stay empty.
pub fn heatmap_csv(rows: &[ReportRow], scenarios: &[String], techniques: &[String]) -> String {
    let mut s = String::from("technique");
    for sc in scenarios {
        s.push(',');
        s.push_str(sc);
    }
    s.push('\n');
    for t in techniques {
        s.push_str(t);
        for sc in scenarios {
            s.push(',');
            if let Some(r) = rows.iter().find(|r| &r.scenario == sc && &r.technique == t) {
                let _ = write!(s, "{}", r.normalized_pct);
            }
        }
        s.push('\n');
    }
    s
}

/// Median; the mean of the two middle values for even lengths.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    })
}
