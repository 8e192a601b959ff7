//! Column projections of run outputs for plotting.

use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use serde_json::Value;
use stepstone::sim::{read_telemetry, TelemetryRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    /// Reference and measured ZMP with the CoM, per axis (telemetry input).
    Zmp,
    /// Swing foot trajectory with support phase and buffer revision (telemetry input).
    Swing,
    /// Footstep sequence from a run report or a plan response.
    Footsteps,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Zmp => "zmp",
            Kind::Swing => "swing",
            Kind::Footsteps => "footsteps",
        }
    }
}

pub const ZMP_COLUMNS: [&str; 7] = [
    "t",
    "zmp_ref_x",
    "zmp_meas_x",
    "com_x",
    "zmp_ref_y",
    "zmp_meas_y",
    "com_y",
];
pub const SWING_COLUMNS: [&str; 6] = ["t", "support_phase", "sdb_revision", "swing_x", "swing_y", "swing_z"];
pub const FOOTSTEP_COLUMNS: [&str; 6] = ["seq", "side", "x", "y", "z", "yaw"];

pub fn export(input: &Path, kind: Kind) -> Result<Vec<u8>> {
    match kind {
        Kind::Zmp => {
            let rows = telemetry(input)?;
            crate::output::csv_bytes(&ZMP_COLUMNS, |w| {
                for r in &rows {
                    w.serialize((
                        r.t,
                        r.zmp_ref_x,
                        r.zmp_meas_x,
                        r.com_x,
                        r.zmp_ref_y,
                        r.zmp_meas_y,
                        r.com_y,
                    ))?;
                }
                Ok(())
            })
        }
        Kind::Swing => {
            let rows = telemetry(input)?;
            crate::output::csv_bytes(&SWING_COLUMNS, |w| {
                for r in &rows {
                    w.serialize((r.t, &r.support_phase, r.sdb_revision, r.swing_x, r.swing_y, r.swing_z))?;
                }
                Ok(())
            })
        }
        Kind::Footsteps => {
            let steps = footsteps(input)?;
            crate::output::csv_bytes(&FOOTSTEP_COLUMNS, |w| {
                for (i, s) in steps.iter().enumerate() {
                    w.serialize((i, &s.0, s.1, s.2, s.3, s.4))?;
                }
                Ok(())
            })
        }
    }
}

fn telemetry(input: &Path) -> Result<Vec<TelemetryRow>> {
    let f = std::fs::File::open(input).with_context(|| format!("opening {}", input.display()))?;
    read_telemetry(f).with_context(|| format!("reading telemetry {}", input.display()))
}

type Step = (String, f64, f64, f64, f64);

/// Touchdowns of a run report, or the steps of a plan response.
fn footsteps(input: &Path) -> Result<Vec<Step>> {
    let text = std::fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
    let doc: Value = serde_json::from_str(&text).with_context(|| {
        format!(
            "{}: footsteps are exported from a run report or a plan (JSON)",
            input.display()
        )
    })?;
    let list = match (doc.get("touchdowns"), doc.get("steps")) {
        (Some(Value::Array(a)), _) | (None, Some(Value::Array(a))) => a,
        _ => bail!("{}: neither `touchdowns` nor `steps` found", input.display()),
    };
    list.iter()
        .enumerate()
        .map(|(i, s)| {
            let num = |k: &str| {
                s.get(k)
                    .and_then(Value::as_f64)
                    .with_context(|| format!("step {i}: missing number `{k}`"))
            };
            let side = s
                .get("side")
                .and_then(Value::as_str)
                .with_context(|| format!("step {i}: missing `side`"))?;
            Ok((side.to_string(), num("x")?, num("y")?, num("z")?, num("yaw")?))
        })
        .collect()
}
