use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::{SurfaceScores, VolumeScores};

pub const REPORT_HEADER: &str = "case,dice,iou,jd,cd_x100,hd,components";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub case: String,
    pub volume: VolumeScores,
    /// Absent when either mesh is empty.
    pub surface: Option<SurfaceScores>,
    pub components: usize,
}

/// Writes the metric CSV and, next to it, `<stem>.json` holding the rows and
/// `echo` (configuration, seeds).
pub fn write_report(rows: &[ReportRow], echo: &serde_json::Value, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut csv = String::from(REPORT_HEADER);
    csv.push('\n');
    for r in rows {
        if r.case.contains([',', '\n', '"']) {
            return Err(Error::invalid(format!("case name {:?} is not CSV-safe", r.case)));
        }
        let v = r.volume;
        let mut scalars = vec![v.dice, v.iou, v.jd];
        if let Some(s) = r.surface {
            scalars.extend([s.chamfer_x100, s.hausdorff]);
        }
        if let Some(x) = scalars.iter().find(|x| !x.is_finite()) {
            return Err(Error::invalid(format!("non-finite score {x} in case {}", r.case)));
        }
        let _ = write!(csv, "{},{:?},{:?},{:?},", r.case, v.dice, v.iou, v.jd);
        match r.surface {
            Some(s) => {
                let _ = write!(csv, "{:?},{:?},", s.chamfer_x100, s.hausdorff);
            }
            None => csv.push_str(",,"),
        }
        let _ = writeln!(csv, "{}", r.components);
    }
    let sidecar = serde_json::json!({ "rows": rows, "config": echo });
    let mut text = serde_json::to_string_pretty(&sidecar).map_err(|e| Error::format(e.to_string()))?;
    text.push('\n');
    fs::write(path, csv)?;
    fs::write(path.with_extension("json"), text)?;
    Ok(())
}
