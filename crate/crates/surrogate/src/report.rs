//! Metrics and evaluation CSV files, and checkpoint files.
//!
//! Floating-point fields use Rust's shortest round-trip formatting, so
//! parsing a field gives back the exact `f64` that was written. Infinite
//! PSNR is written as `inf`.

use std::fs;
use std::path::Path;

use surrogate_core::checkpoint::{Checkpoint, CheckpointMeta};
use surrogate_core::train::{EvalReport, MetricsRow};
use surrogate_core::Network;

use crate::error::{Error, Result};
use crate::manifest::write_atomic;

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from(MetricsRow::HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{:?},{:?},{:?},{:?},{:?}\n",
            r.iter, r.loss_total, r.loss_fid, r.loss_adv, r.loss_disc, r.psnr_val
        ));
    }
    out
}

pub fn parse_metrics_csv(text: &str) -> Result<Vec<MetricsRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(MetricsRow::HEADER) {
        return Err(Error::Data("metrics CSV has an unexpected header".into()));
    }
    lines
        .map(|line| {
            let bad = || Error::Data(format!("bad metrics row `{line}`"));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(bad());
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
            Ok(MetricsRow {
                iter: f[0].parse().map_err(|_| bad())?,
                loss_total: num(f[1])?,
                loss_fid: num(f[2])?,
                loss_adv: num(f[3])?,
                loss_disc: num(f[4])?,
                psnr_val: num(f[5])?,
            })
        })
        .collect()
}

pub const EVAL_HEADER: &str = "image,psnr";
pub const MEAN_ROW: &str = "<mean>";
pub const MEDIAN_ROW: &str = "<median>";

/// One row per image, then `<mean>` and `<median>` rows.
pub fn eval_csv(names: &[String], report: &EvalReport) -> String {
    let mut out = format!("{EVAL_HEADER}\n");
    for (n, p) in names.iter().zip(&report.psnr) {
        out.push_str(&format!("{n},{p:?}\n"));
    }
    out.push_str(&format!("{MEAN_ROW},{:?}\n", report.mean));
    out.push_str(&format!("{MEDIAN_ROW},{:?}\n", report.median));
    out
}

/// Parse an evaluation report into per-image rows and the stored aggregates.
pub fn parse_eval_csv(text: &str) -> Result<(Vec<(String, f64)>, f64, f64)> {
    let mut lines = text.lines();
    if lines.next() != Some(EVAL_HEADER) {
        return Err(Error::Data("evaluation CSV has an unexpected header".into()));
    }
    let (mut rows, mut mean, mut median) = (Vec::new(), None, None);
    for line in lines {
        let (name, v) = line
            .rsplit_once(',')
            .ok_or_else(|| Error::Data(format!("bad evaluation row `{line}`")))?;
        let v: f64 = v.parse().map_err(|_| Error::Data(format!("bad evaluation row `{line}`")))?;
        match name {
            MEAN_ROW => mean = Some(v),
            MEDIAN_ROW => median = Some(v),
            _ => rows.push((name.to_string(), v)),
        }
    }
    match (mean, median) {
        (Some(a), Some(b)) => Ok((rows, a, b)),
        _ => Err(Error::Data("evaluation CSV lacks aggregate rows".into())),
    }
}

pub fn save_checkpoint(net: &Network, meta: CheckpointMeta, path: &Path) -> Result<()> {
    write_atomic(path, &Checkpoint::from_network(net, meta).encode())
}

/// Load a checkpoint and rebuild its network from the stored architecture.
pub fn load_checkpoint(path: &Path) -> Result<(Network, CheckpointMeta)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let wrap = |source| Error::Checkpoint {
        path: path.into(),
        source,
    };
    let ck = Checkpoint::decode(&bytes).map_err(wrap)?;
    let meta = ck.meta;
    Ok((ck.into_network_from_arch().map_err(wrap)?, meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metrics_fields_round_trip_exactly() {
        let rows = vec![
            MetricsRow {
                iter: 10,
                loss_total: 0.1 + 1e-3 * 0.7,
                loss_fid: 0.1,
                loss_adv: 0.7,
                loss_disc: 1.386_294_361_119_890_6,
                psnr_val: f64::INFINITY,
            },
            MetricsRow {
                iter: 20,
                loss_total: 1.0 / 3.0,
                loss_fid: 1.0 / 3.0,
                loss_adv: 0.0,
                loss_disc: 0.0,
                psnr_val: 31.25,
            },
        ];
        let text = metrics_csv(&rows);
        assert!(text.starts_with("iter,loss_total,loss_fid,loss_adv,loss_disc,psnr_val\n10,"));
        assert_eq!(parse_metrics_csv(&text).unwrap(), rows);
    }

    #[test]
    fn eval_report_round_trip() {
        let r = EvalReport::from_values(vec![30.5, f64::INFINITY, 20.0]);
        let names = vec!["a.ppm".to_string(), "b.ppm".into(), "c,d.ppm".into()];
        let text = eval_csv(&names, &r);
        let (rows, mean, median) = parse_eval_csv(&text).unwrap();
        assert_eq!(rows[2], ("c,d.ppm".to_string(), 20.0));
        assert_eq!(rows[1].1, f64::INFINITY);
        assert_eq!(mean, f64::INFINITY);
        assert_eq!(median, 30.5);
    }
}
