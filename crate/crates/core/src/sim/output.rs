use std::fmt::Write as _;
use std::path::Path;

use super::SimOutcome;
use crate::error::{write_string, Result};

/// `sim_time,finished_tasks` header and value line.
pub fn summary_csv(outcome: &SimOutcome) -> String {
    format!(
        "sim_time,finished_tasks\n{},{}\n",
        outcome.sim_time, outcome.finished_tasks
    )
}

/// One `pe,finish_time` line per PE.
pub fn per_pe_csv(outcome: &SimOutcome) -> String {
    let mut s = String::from("pe,finish_time\n");
    for (pe, t) in outcome.per_pe_finish.iter().enumerate() {
        let _ = writeln!(s, "{pe},{t}");
    }
    s
}

/// One `time_issued,pe,start,size,technique` line per chunk.
pub fn chunk_log_csv(outcome: &SimOutcome) -> String {
    let mut s = String::from("time_issued,pe,start,size,technique\n");
    for c in &outcome.chunk_log {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            c.issued, c.pe, c.start, c.size, c.technique
        );
    }
    s
}

/// Writes `summary.csv`, `per_pe.csv` and `chunks.csv` into `dir`.
pub fn write_outcome(outcome: &SimOutcome, dir: &Path) -> Result<()> {
    write_string(&dir.join("summary.csv"), &summary_csv(outcome))?;
    write_string(&dir.join("per_pe.csv"), &per_pe_csv(outcome))?;
    write_string(&dir.join("chunks.csv"), &chunk_log_csv(outcome))
}
