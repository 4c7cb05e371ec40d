//! Per-frame IoU and pixel accuracy, per-video mean ± std aggregation,
//! throughput accounting and CSV reports.
//!
//! All pixel counting is done in integers; each ratio is a single division
//! at the end.

mod protocol;
mod report;
mod throughput;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::dataset::merge_to_binary;
use crate::error::{Error, Result};
use crate::mask::{BinaryMask, LabelMap};

pub use protocol::{evaluate_directories, frame_index_of, load_ground_truth, load_predictions};
pub use report::{export_plot, export_report, read_report, ReportRow, AGGREGATE_ROW_ID, REPORT_HEADER};
pub use throughput::{measure_throughput, ThroughputRecord};

/// Pixel confusion counts for one mask pair.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Confusion {
    pub true_positive: u64,
    pub false_positive: u64,
    pub false_negative: u64,
    pub true_negative: u64,
}

impl Confusion {
    pub fn count(pred: &BinaryMask, gt: &BinaryMask) -> Result<Self> {
        pred.ensure_same_dims(gt)?;
        let mut c = Confusion::default();
        for (&p, &g) in pred.bits().iter().zip(gt.bits()) {
            match (p, g) {
                (true, true) => c.true_positive += 1,
                (true, false) => c.false_positive += 1,
                (false, true) => c.false_negative += 1,
                (false, false) => c.true_negative += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> u64 {
        self.true_positive + self.false_positive + self.false_negative + self.true_negative
    }

    pub fn union(&self) -> u64 {
        self.true_positive + self.false_positive + self.false_negative
    }

    /// `None` when both masks are empty.
    pub fn iou(&self) -> Option<f64> {
        let union = self.union();
        (union > 0).then(|| self.true_positive as f64 / union as f64)
    }

    pub fn pac(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 1.0;
        }
        (self.true_positive + self.true_negative) as f64 / total as f64
    }
}

/// How to score a frame where prediction and ground truth are both empty.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmptyPolicy {
    /// IoU = 1: both agree there is nothing.
    #[default]
    ScoreOne,
    /// Leave the frame out of the video's series.
    Skip,
}

/// `|pred ∩ gt| / |pred ∪ gt|`, and 1.0 when both masks are empty.
pub fn iou(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    Ok(Confusion::count(pred, gt)?.iou().unwrap_or(1.0))
}

/// Fraction of pixels where prediction and ground truth agree.
pub fn pac(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    Ok(Confusion::count(pred, gt)?.pac())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameMetrics {
    pub frame_index: usize,
    pub iou: f64,
    pub pac: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VideoMetricsRecord {
    pub video_id: String,
    pub per_frame: Vec<FrameMetrics>,
    pub iou_mean: f64,
    pub iou_std: f64,
    pub pac_mean: f64,
    pub pac_std: f64,
}

impl VideoMetricsRecord {
    pub fn frames(&self) -> usize {
        self.per_frame.len()
    }
}

/// Arithmetic mean and population standard deviation, two-pass.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn aggregate_video(video_id: &str, series: Vec<FrameMetrics>) -> Result<VideoMetricsRecord> {
    if series.is_empty() {
        return Err(Error::validation(
            "empty_series",
            format!("video {video_id:?} has no scored frames"),
        ));
    }
    let ious: Vec<f64> = series.iter().map(|f| f.iou).collect();
    let pacs: Vec<f64> = series.iter().map(|f| f.pac).collect();
    let (iou_mean, iou_std) = mean_std(&ious);
    let (pac_mean, pac_std) = mean_std(&pacs);
    Ok(VideoMetricsRecord {
        video_id: video_id.to_string(),
        per_frame: series,
        iou_mean,
        iou_std,
        pac_mean,
        pac_std,
    })
}

/// Scores every predicted frame against its binarized ground truth.
///
/// Only frames present in `preds` are scored, and each must have ground truth.
pub fn evaluate_video(
    video_id: &str,
    preds: &BTreeMap<usize, BinaryMask>,
    gts: &BTreeMap<usize, LabelMap>,
    include: Option<&BTreeSet<u32>>,
    empty_policy: EmptyPolicy,
) -> Result<VideoMetricsRecord> {
    let orphans: Vec<usize> = preds.keys().filter(|f| !gts.contains_key(f)).copied().collect();
    if !orphans.is_empty() {
        return Err(Error::validation(
            "prediction_without_ground_truth",
            format!("video {video_id:?}: frames {orphans:?} have predictions but no ground truth"),
        ));
    }
    let mut series = Vec::with_capacity(preds.len());
    for (&frame_index, pred) in preds {
        let gt = merge_to_binary(&gts[&frame_index], include);
        let c = Confusion::count(pred, &gt)?;
        let iou = match (c.iou(), empty_policy) {
            (Some(v), _) => v,
            (None, EmptyPolicy::ScoreOne) => 1.0,
            (None, EmptyPolicy::Skip) => continue,
        };
        series.push(FrameMetrics {
            frame_index,
            iou,
            pac: c.pac(),
        });
    }
    aggregate_video(video_id, series)
}
