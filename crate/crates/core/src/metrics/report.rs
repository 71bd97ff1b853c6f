use std::io::Write;

use super::{dsc, hausdorff, nsd, rvd};
use crate::error::{Error, Result};
use crate::volume::Volume;

/// Marker written for undefined metrics.
pub const NA: &str = "NA";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsOptions {
    pub nsd_tau_mm: f64,
    /// Percentile for the `hd95_mm` column.
    pub hd_percentile: f64,
}

impl Default for MetricsOptions {
    fn default() -> Self {
        MetricsOptions {
            nsd_tau_mm: 1.0,
            hd_percentile: 95.0,
        }
    }
}

/// Per-case scores; `None` marks a metric undefined for empty masks.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub case_id: String,
    pub dsc: f64,
    pub hd_mm: Option<f64>,
    pub hd95_mm: Option<f64>,
    pub nsd: Option<f64>,
    pub rvd: Option<f64>,
}

pub fn evaluate_case(case_id: &str, pred: &Volume, gt: &Volume, opts: &MetricsOptions) -> Result<MetricsReport> {
    Ok(MetricsReport {
        case_id: case_id.to_string(),
        dsc: dsc(pred, gt)?,
        hd_mm: hausdorff(pred, gt, 100.0)?,
        hd95_mm: hausdorff(pred, gt, opts.hd_percentile)?,
        nsd: nsd(pred, gt, opts.nsd_tau_mm)?,
        rvd: rvd(pred, gt)?,
    })
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| NA.to_string(), |x| x.to_string())
}

/// Mean and population standard deviation over defined values.
fn mean_std(values: impl Iterator<Item = Option<f64>>) -> Option<(f64, f64)> {
    let v: Vec<f64> = values.flatten().collect();
    if v.is_empty() {
        return None;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

/// `mean±std` per column, skipping undefined entries.
pub fn aggregate(reports: &[MetricsReport]) -> [Option<(f64, f64)>; 5] {
    [
        mean_std(reports.iter().map(|r| Some(r.dsc))),
        mean_std(reports.iter().map(|r| r.hd_mm)),
        mean_std(reports.iter().map(|r| r.hd95_mm)),
        mean_std(reports.iter().map(|r| r.nsd)),
        mean_std(reports.iter().map(|r| r.rvd)),
    ]
}

/// CSV with header `case_id,dsc,hd_mm,hd95_mm,nsd,rvd`, one row per case
/// and a final `mean±std` row.
pub fn write_csv<W: Write>(reports: &[MetricsReport], out: W) -> Result<()> {
    let to_err = |e: csv::Error| Error::Dataset(format!("writing metrics CSV: {e}"));
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["case_id", "dsc", "hd_mm", "hd95_mm", "nsd", "rvd"]).map_err(to_err)?;
    for r in reports {
        w.write_record([
            r.case_id.clone(),
            r.dsc.to_string(),
            cell(r.hd_mm),
            cell(r.hd95_mm),
            cell(r.nsd),
            cell(r.rvd),
        ])
        .map_err(to_err)?;
    }
    let mut row = vec!["mean±std".to_string()];
    row.extend(aggregate(reports).iter().map(|a| match a {
        Some((m, s)) => format!("{m:.6}±{s:.6}"),
        None => NA.to_string(),
    }));
    w.write_record(&row).map_err(to_err)?;
    w.flush().map_err(|e| Error::Dataset(format!("writing metrics CSV: {e}")))?;
    Ok(())
}
