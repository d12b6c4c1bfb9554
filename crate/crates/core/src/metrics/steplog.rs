use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::train::StepRow;

pub const STEP_COLUMNS: [&str; 9] = [
    "step",
    "task_id",
    "reward",
    "cumulative_task_reward",
    "residual_norm",
    "batch_msbe",
    "chosen_policy",
    "updated",
    "wall_clock_ns",
];

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_steps<W: Write>(w: W, rows: &[StepRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(STEP_COLUMNS)?;
    for r in rows {
        out.write_record([
            r.step.to_string(),
            r.task_id.to_string(),
            format_f64(r.reward),
            format_f64(r.cumulative_task_reward),
            format_f64(r.residual_norm),
            format_f64(r.batch_msbe),
            r.chosen_policy.map(|c| c.to_string()).unwrap_or_default(),
            r.updated.to_string(),
            r.wall_clock_ns.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, line: u64) -> Result<T> {
    let raw = rec.get(i).unwrap_or("");
    raw.parse().map_err(|_| {
        Error::Input(format!(
            "line {line}: cannot parse {} from {raw:?}",
            STEP_COLUMNS[i]
        ))
    })
}

pub fn read_steps<R: Read>(r: R) -> Result<Vec<StepRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers()?.clone();
    if headers.iter().ne(STEP_COLUMNS.iter().copied()) {
        return Err(Error::Input(format!("unexpected step log columns: {headers:?}")));
    }
    let mut rows = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = n as u64 + 2;
        let chosen = rec.get(6).unwrap_or("");
        rows.push(StepRow {
            step: field(&rec, 0, line)?,
            task_id: field(&rec, 1, line)?,
            reward: field(&rec, 2, line)?,
            cumulative_task_reward: field(&rec, 3, line)?,
            residual_norm: field(&rec, 4, line)?,
            batch_msbe: field(&rec, 5, line)?,
            chosen_policy: if chosen.is_empty() {
                None
            } else {
                Some(field(&rec, 6, line)?)
            },
            updated: field(&rec, 7, line)?,
            wall_clock_ns: field(&rec, 8, line)?,
        });
    }
    Ok(rows)
}
