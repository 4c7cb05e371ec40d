use std::path::Path;

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use super::VideoMetricsRecord;
use crate::error::{Error, Result};

pub const REPORT_HEADER: [&str; 6] = ["video_id", "frames", "iou_mean", "iou_std", "pac_mean", "pac_std"];

/// `video_id` of the trailing row averaging every column over videos
/// (`frames` is the total instead).
pub const AGGREGATE_ROW_ID: &str = "mean";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub video_id: String,
    pub frames: usize,
    pub iou_mean: f64,
    pub iou_std: f64,
    pub pac_mean: f64,
    pub pac_std: f64,
}

impl From<&VideoMetricsRecord> for ReportRow {
    fn from(r: &VideoMetricsRecord) -> Self {
        ReportRow {
            video_id: r.video_id.clone(),
            frames: r.frames(),
            iou_mean: r.iou_mean,
            iou_std: r.iou_std,
            pac_mean: r.pac_mean,
            pac_std: r.pac_std,
        }
    }
}

fn aggregate(rows: &[ReportRow]) -> ReportRow {
    let n = rows.len() as f64;
    let avg = |f: fn(&ReportRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
    ReportRow {
        video_id: AGGREGATE_ROW_ID.to_string(),
        frames: rows.iter().map(|r| r.frames).sum(),
        iou_mean: avg(|r| r.iou_mean),
        iou_std: avg(|r| r.iou_std),
        pac_mean: avg(|r| r.pac_mean),
        pac_std: avg(|r| r.pac_std),
    }
}

/// Writes one row per video, in input order, then the aggregate row.
pub fn export_report(records: &[VideoMetricsRecord], path: &Path) -> Result<()> {
    if records.is_empty() {
        return Err(Error::validation("empty_report", "no video records to report"));
    }
    let rows: Vec<ReportRow> = records.iter().map(ReportRow::from).collect();
    let io_err = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::io(path, std::io::Error::other(format!("{other:?}"))),
    };
    let mut w = csv::Writer::from_path(path).map_err(io_err)?;
    w.write_record(REPORT_HEADER).map_err(io_err)?;
    for row in rows.iter().chain(std::iter::once(&aggregate(&rows))) {
        w.write_record([
            row.video_id.clone(),
            row.frames.to_string(),
            format!("{:.6}", row.iou_mean),
            format!("{:.6}", row.iou_std),
            format!("{:.6}", row.pac_mean),
            format!("{:.6}", row.pac_std),
        ])
        .map_err(io_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Parses a report written by [`export_report`], aggregate row included.
pub fn read_report(path: &Path) -> Result<Vec<ReportRow>> {
    let origin = path.display().to_string();
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::parse(&origin, 0, e.to_string()))?;
    let header = r.headers().map_err(|e| Error::parse(&origin, 1, e.to_string()))?;
    if header.iter().ne(REPORT_HEADER) {
        return Err(Error::parse(&origin, 1, format!("unexpected header {header:?}")));
    }
    r.deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| Error::parse(&origin, i + 2, e.to_string())))
        .collect()
}

const IOU_COLOR: Rgb<u8> = Rgb([54, 110, 190]);
const PAC_COLOR: Rgb<u8> = Rgb([235, 140, 40]);

/// Bar chart, one IoU and one PAC bar per video with ±std whiskers.
pub fn export_plot(records: &[VideoMetricsRecord], path: &Path) -> Result<()> {
    if records.is_empty() {
        return Err(Error::validation("empty_report", "no video records to plot"));
    }
    const PLOT_H: u32 = 200;
    const MARGIN: u32 = 20;
    const BAR_W: u32 = 14;
    const GROUP_W: u32 = 44;
    let width = MARGIN * 2 + GROUP_W * records.len() as u32;
    let height = PLOT_H + MARGIN * 2;
    let mut img = RgbImage::from_pixel(width, height, Rgb([255, 255, 255]));
    let base = MARGIN + PLOT_H;
    let to_y = |v: f64| base - (v.clamp(0.0, 1.0) * PLOT_H as f64).round() as u32;

    for x in MARGIN..width - MARGIN {
        img.put_pixel(x, base, Rgb([0, 0, 0]));
    }
    for (i, r) in records.iter().enumerate() {
        let x0 = MARGIN + GROUP_W * i as u32 + 6;
        for (k, (mean, std, color)) in [(r.iou_mean, r.iou_std, IOU_COLOR), (r.pac_mean, r.pac_std, PAC_COLOR)]
            .into_iter()
            .enumerate()
        {
            let bx = x0 + k as u32 * (BAR_W + 2);
            for y in to_y(mean)..base {
                for x in bx..bx + BAR_W {
                    img.put_pixel(x, y, color);
                }
            }
            let mid = bx + BAR_W / 2;
            let (top, bottom) = (to_y(mean + std), to_y(mean - std));
            for y in top..=bottom.min(base) {
                img.put_pixel(mid, y, Rgb([0, 0, 0]));
            }
            for x in mid - 3..=mid + 3 {
                img.put_pixel(x, top, Rgb([0, 0, 0]));
                img.put_pixel(x, bottom.min(base), Rgb([0, 0, 0]));
            }
        }
    }
    img.save(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}
