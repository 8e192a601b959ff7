use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::SimError;

/// One control tick. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryRow {
    pub t: f64,
    pub com_x: f64,
    pub com_y: f64,
    pub com_vx: f64,
    pub com_vy: f64,
    pub zmp_ref_x: f64,
    pub zmp_ref_y: f64,
    pub zmp_meas_x: f64,
    pub zmp_meas_y: f64,
    pub swing_x: f64,
    pub swing_y: f64,
    pub swing_z: f64,
    pub sdb_revision: u64,
    pub support_phase: String,
    pub czmp_x: f64,
    pub czmp_y: f64,
    pub w_left: f64,
    pub w_right: f64,
}

pub const TELEMETRY_COLUMNS: [&str; 18] = [
    "t",
    "com_x",
    "com_y",
    "com_vx",
    "com_vy",
    "zmp_ref_x",
    "zmp_ref_y",
    "zmp_meas_x",
    "zmp_meas_y",
    "swing_x",
    "swing_y",
    "swing_z",
    "sdb_revision",
    "support_phase",
    "czmp_x",
    "czmp_y",
    "w_left",
    "w_right",
];

pub fn write_telemetry<W: Write>(rows: &[TelemetryRow], out: W) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| SimError::Io(e.to_string()))?;
    }
    if rows.is_empty() {
        w.write_record(TELEMETRY_COLUMNS)
            .map_err(|e| SimError::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| SimError::Io(e.to_string()))
}

pub fn read_telemetry<R: Read>(input: R) -> Result<Vec<TelemetryRow>, SimError> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers().map_err(|e| SimError::Io(e.to_string()))?;
    if headers.iter().ne(TELEMETRY_COLUMNS) {
        return Err(SimError::Io(format!(
            "unexpected telemetry columns: {}",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    r.deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| SimError::Io(format!("telemetry row {}: {e}", i + 1))))
        .collect()
}
