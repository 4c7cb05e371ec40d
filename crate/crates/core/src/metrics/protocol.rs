//! Directory-level evaluation.
//!
//! Ground truth lives in the dataset layout (`<gt>/<video_id>/labels/NNNNN.png`).
//! Predictions are binary PNGs under `<pred>/<video_id>/`, named either
//! `NNNNN.png` or like merged exports (`<video_id>_fNNNNN_merged.png`).

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use super::{evaluate_video, EmptyPolicy, VideoMetricsRecord};
use crate::error::{Error, Result};
use crate::mask::{BinaryMask, LabelMap};

/// Frame index encoded in a prediction or label file name.
pub fn frame_index_of(path: &Path) -> Option<usize> {
    if path.extension()?.to_str()? != "png" {
        return None;
    }
    let stem = path.file_stem()?.to_str()?;
    if let Ok(i) = stem.parse() {
        return Some(i);
    }
    let rest = stem.strip_suffix("_merged")?;
    let pos = rest.rfind("_f")?;
    rest[pos + 2..].parse().ok()
}

fn indexed_files(dir: &Path) -> Result<BTreeMap<usize, PathBuf>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if let Some(i) = frame_index_of(&path) {
            if let Some(prev) = out.insert(i, path.clone()) {
                return Err(Error::validation(
                    "duplicate_frame",
                    format!("{} and {} both hold frame {i}", prev.display(), path.display()),
                ));
            }
        }
    }
    Ok(out)
}

fn subdirs(root: &Path) -> Result<Vec<String>> {
    let mut ids = Vec::new();
    for entry in std::fs::read_dir(root).map_err(|e| Error::io(root, e))? {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        if entry.path().is_dir() {
            ids.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    ids.sort();
    Ok(ids)
}

pub fn load_predictions(dir: &Path) -> Result<BTreeMap<usize, BinaryMask>> {
    indexed_files(dir)?
        .into_iter()
        .map(|(i, p)| Ok((i, BinaryMask::load_png(&p)?)))
        .collect()
}

pub fn load_ground_truth(video_dir: &Path) -> Result<BTreeMap<usize, LabelMap>> {
    indexed_files(&video_dir.join("labels"))?
        .into_iter()
        .map(|(i, p)| Ok((i, LabelMap::load_png(&p)?)))
        .collect()
}

/// Scores every video under `pred_root` against `gt_root`, in id order.
pub fn evaluate_directories(
    pred_root: &Path,
    gt_root: &Path,
    include: Option<&BTreeSet<u32>>,
    empty_policy: EmptyPolicy,
) -> Result<Vec<VideoMetricsRecord>> {
    let videos = subdirs(pred_root)?;
    if videos.is_empty() {
        return Err(Error::validation(
            "no_predictions",
            format!("{} holds no video directories", pred_root.display()),
        ));
    }
    videos
        .iter()
        .map(|id| {
            let preds = load_predictions(&pred_root.join(id))?;
            let gts = load_ground_truth(&gt_root.join(id))?;
            evaluate_video(id, &preds, &gts, include, empty_policy)
        })
        .collect()
}
