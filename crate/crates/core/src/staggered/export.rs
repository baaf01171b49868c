use std::io::Write;

use super::EventStudyCurve;
use crate::error::Result;

pub const EVENT_STUDY_HEADER: [&str; 6] = [
    "event_time",
    "estimate",
    "se",
    "uniform_lo",
    "uniform_hi",
    "n_cells",
];

/// Writes the curve as CSV. Band columns are empty when no band is attached.
pub fn write_event_study<W: Write>(writer: W, curve: &EventStudyCurve) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(EVENT_STUDY_HEADER)?;
    for (i, t) in curve.event_times.iter().enumerate() {
        let band = |b: &Option<Vec<f64>>| b.as_ref().map(|v| v[i].to_string()).unwrap_or_default();
        w.write_record([
            t.to_string(),
            curve.estimates[i].to_string(),
            curve.pointwise_se[i].to_string(),
            band(&curve.uniform_lo),
            band(&curve.uniform_hi),
            curve.n_cells[i].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
