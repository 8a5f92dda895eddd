use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{RefinementReport, ThetaSample};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Json,
    Csv,
}

impl ReportFormat {
    /// `.csv` means CSV, anything else JSON.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => ReportFormat::Csv,
            _ => ReportFormat::Json,
        }
    }
}

const HEADER: [&str; 9] = [
    "level",
    "critical_time",
    "t",
    "value",
    "feasible",
    "boundary_mass",
    "theta_mass",
    "inconclusive_mass",
    "status",
];

/// One row per `(level, t)`: curve samples first, then Θ measurements.
pub fn write_csv<W: Write>(report: &RefinementReport, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(HEADER)?;
    for l in &report.levels {
        let (level, crit) = (l.level.to_string(), l.critical_time.to_string());
        for s in l.curve.iter().flat_map(|c| &c.samples) {
            wtr.write_record([
                level.as_str(),
                &crit,
                &s.t.to_string(),
                &s.value.to_string(),
                &s.feasible.to_string(),
                "",
                "",
                "",
                "curve",
            ])?;
        }
        for th in &l.theta {
            match *th {
                ThetaSample::Measured {
                    t,
                    value,
                    boundary_mass,
                    theta_mass,
                    inconclusive_mass,
                } => wtr.write_record([
                    level.as_str(),
                    &crit,
                    &t.to_string(),
                    &value.to_string(),
                    "true",
                    &boundary_mass.to_string(),
                    &theta_mass.to_string(),
                    &inconclusive_mass.to_string(),
                    "measured",
                ])?,
                ThetaSample::Skipped { t } => wtr.write_record([
                    level.as_str(),
                    &crit,
                    &t.to_string(),
                    "",
                    "",
                    "",
                    "",
                    "",
                    "skipped",
                ])?,
            }
        }
    }
    wtr.flush()?;
    Ok(())
}

pub fn emit_report(
    report: &RefinementReport,
    format: ReportFormat,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })?;
    let mut out = BufWriter::new(file);
    match format {
        ReportFormat::Json => {
            out.write_all(report.to_json()?.as_bytes())?;
            out.write_all(b"\n")?;
        }
        ReportFormat::Csv => write_csv(report, &mut out)?,
    }
    out.flush()?;
    Ok(())
}
