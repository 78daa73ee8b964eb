//! CSV export with a JSON sidecar, and the per-subject trial directory.
//!
//! CSV: UTF-8, LF line endings, one row per recorded packet, reals printed
//! with six significant digits. The sidecar shares the CSV's basename and
//! holds the session metadata and summary.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{summarize, Result, SessionError, SessionMetadata, SessionRecord, SessionState, SessionSummary};

pub const CSV_HEADER: [&str; 7] = [
    "t_s",
    "knee_angle_deg",
    "knee_vel_dps",
    "knee_acc_dps2",
    "emg1_counts",
    "emg2_counts",
    "seq",
];

/// Formats a real with six significant digits, without exponent notation.
pub fn format_sig6(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let rounded: f64 = format!("{x:.5e}").parse().expect("formatted float parses");
    if rounded == 0.0 {
        "0".to_string()
    } else {
        rounded.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub t_s: f64,
    pub knee_angle_deg: f64,
    pub knee_vel_dps: f64,
    pub knee_acc_dps2: f64,
    pub emg1_counts: u16,
    pub emg2_counts: u16,
    pub seq: u16,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSidecar {
    pub metadata: SessionMetadata,
    pub summary: SessionSummary,
    pub dt_s: f64,
    pub calibration_offset_deg: f64,
    pub calibration_samples: usize,
    pub time_origin_index: u64,
    pub packet_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExportPaths {
    pub csv: PathBuf,
    pub sidecar: PathBuf,
}

pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

fn create_new(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(OpenOptions::new().write(true).create_new(true).open(path)?))
}

/// Writes the trial CSV at `path` and its sidecar next to it. Existing
/// files are never overwritten.
pub fn export_csv(record: &SessionRecord, path: &Path) -> Result<ExportPaths> {
    if record.state() != SessionState::Stopped {
        return Err(SessionError::State {
            state: record.state(),
            action: "export",
        });
    }
    record.metadata.validate()?;
    let summary = summarize(record)?;

    let mut csv_out = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(create_new(path)?);
    csv_out.write_record(CSV_HEADER)?;
    for (k, p) in record.derived().iter().zip(record.packets()) {
        csv_out.write_record([
            format_sig6(k.t),
            format_sig6(k.angle_deg),
            format_sig6(k.velocity_dps),
            format_sig6(k.accel_dps2),
            p.packet.emg1_counts.to_string(),
            p.packet.emg2_counts.to_string(),
            p.seq.to_string(),
        ])?;
    }
    csv_out.flush()?;

    let calibration = record.calibration().unwrap_or(crate::fusion::CalibrationOffset::ZERO);
    let sidecar = SessionSidecar {
        metadata: record.metadata.clone(),
        summary,
        dt_s: record.config.dt_s,
        calibration_offset_deg: calibration.offset_deg,
        calibration_samples: record.calibration_sample_count(),
        time_origin_index: record.time_origin_index(),
        packet_count: record.packets().len(),
    };
    let sidecar_file = sidecar_path(path);
    let mut out = create_new(&sidecar_file)?;
    serde_json::to_writer_pretty(&mut out, &sidecar)?;
    out.write_all(b"\n")?;
    out.flush()?;

    Ok(ExportPaths {
        csv: path.to_path_buf(),
        sidecar: sidecar_file,
    })
}

pub fn read_csv(path: &Path) -> Result<Vec<CsvRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    let rows = reader.deserialize().collect::<std::result::Result<Vec<CsvRow>, _>>()?;
    Ok(rows)
}

pub fn read_sidecar(path: &Path) -> Result<SessionSidecar> {
    Ok(serde_json::from_reader(File::open(path)?)?)
}

/// `<root>/<subject_id>/trial_NNN.csv` plus sidecars, append-only.
#[derive(Debug, Clone)]
pub struct TrialStore {
    root: PathBuf,
}

impl TrialStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn subject_dir(&self, subject_id: &str) -> PathBuf {
        self.root.join(subject_id)
    }

    /// Existing trial CSVs for a subject, in trial order.
    pub fn trials(&self, subject_id: &str) -> Result<Vec<PathBuf>> {
        let dir = self.subject_dir(subject_id);
        if !dir.exists() {
            return Ok(Vec::new());
        }
        let mut found: Vec<(u32, PathBuf)> = fs::read_dir(&dir)?
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let path = e.path();
                trial_number(&path).map(|n| (n, path))
            })
            .collect();
        found.sort();
        Ok(found.into_iter().map(|(_, p)| p).collect())
    }

    pub fn save(&self, record: &SessionRecord) -> Result<ExportPaths> {
        record.metadata.validate()?;
        let dir = self.subject_dir(&record.metadata.subject_id);
        fs::create_dir_all(&dir)?;
        let mut next = self
            .trials(&record.metadata.subject_id)?
            .iter()
            .filter_map(|p| trial_number(p))
            .max()
            .map_or(1, |n| n + 1);
        loop {
            let path = dir.join(format!("trial_{next:03}.csv"));
            match export_csv(record, &path) {
                Err(SessionError::Io(e)) if e.kind() == std::io::ErrorKind::AlreadyExists => next += 1,
                other => return other,
            }
        }
    }
}

fn trial_number(path: &Path) -> Option<u32> {
    if path.extension()? != "csv" {
        return None;
    }
    path.file_stem()?.to_str()?.strip_prefix("trial_")?.parse().ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(format_sig6(0.0), "0");
        assert_eq!(format_sig6(-0.0), "0");
        assert_eq!(format_sig6(125.456789), "125.457");
        assert_eq!(format_sig6(-0.000123456789), "-0.000123457");
        assert_eq!(format_sig6(9.99), "9.99");
        assert_eq!(format_sig6(1234567.0), "1234570");
        assert_eq!(format_sig6(0.015 * 3.0), "0.045");
    }

    #[test]
    fn trial_names() {
        assert_eq!(trial_number(Path::new("a/trial_007.csv")), Some(7));
        assert_eq!(trial_number(Path::new("a/trial_007.json")), None);
        assert_eq!(trial_number(Path::new("a/other.csv")), None);
    }
}
