//! Percolation reports for snapshot files, including snapshots produced
//! outside this program.

use serde::Serialize;

use z2perc::percolation::Detector;
use z2perc::Basis;

use crate::error::{CliError, Result};
use crate::snapshot::{hex, SnapshotFile};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReportRow {
    pub manifest_hash: String,
    pub snapshot: usize,
    pub percolates: bool,
    /// Wrapping per dimension, e.g. `10` wraps along x only.
    pub wraps: String,
    pub strength: f64,
    pub largest_cluster: usize,
    pub total_strings: usize,
}

pub fn percolate(file: &SnapshotFile) -> Result<Vec<ReportRow>> {
    if file.basis != Basis::X {
        return Err(CliError::Validation(
            "snapshots are in the Z basis; percolation of electric strings needs tau^x (X-basis) snapshots".into(),
        ));
    }
    let hash = hex(&file.manifest_hash);
    let mut det = Detector::new();
    file.snapshots
        .iter()
        .enumerate()
        .map(|(k, cfg)| {
            let r = det.analyze(cfg)?;
            Ok(ReportRow {
                manifest_hash: hash.clone(),
                snapshot: k,
                percolates: r.percolates,
                wraps: r.wraps.iter().map(|&w| if w { '1' } else { '0' }).collect(),
                strength: r.strength,
                largest_cluster: r.largest_cluster_links,
                total_strings: r.total_strings,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Jsonl,
}

pub fn write_rows<T: Serialize>(rows: &[T], format: Format, out: &mut dyn std::io::Write) -> Result<()> {
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            for r in rows {
                w.serialize(r)?;
            }
            w.flush()?;
        }
        Format::Jsonl => {
            for r in rows {
                serde_json::to_writer(&mut *out, r)?;
                out.write_all(b"\n")?;
            }
        }
    }
    Ok(())
}
