//! Video datasets in the `<root>/<video_id>/{frames,labels,manifest}` layout.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{open_image, LabelMap};

/// Frame rate assumed when a video directory carries no `info.toml`.
pub const DEFAULT_FPS: f64 = 25.0;

/// Where a frame's pixels live.
#[derive(Clone, Debug)]
pub enum FrameRef {
    Memory(Arc<RgbImage>),
    File(PathBuf),
}

#[derive(Clone, Debug)]
pub struct VideoDataset {
    pub video_id: String,
    pub fps: f64,
    width: u32,
    height: u32,
    frames: Vec<FrameRef>,
    ground_truth: BTreeMap<usize, LabelMap>,
    source: Option<PathBuf>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct VideoInfo {
    fps: Option<f64>,
}

impl VideoDataset {
    pub fn from_frames(video_id: impl Into<String>, fps: f64, frames: Vec<RgbImage>) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::validation("empty_video", "a video needs at least one frame"))?;
        let (width, height) = first.dimensions();
        if let Some((i, _)) = frames.iter().enumerate().find(|(_, f)| f.dimensions() != (width, height)) {
            return Err(Error::validation(
                "dimension_mismatch",
                format!("frame {i} does not match the {width}x{height} resolution of frame 0"),
            ));
        }
        Ok(Self {
            video_id: video_id.into(),
            fps,
            width,
            height,
            frames: frames.into_iter().map(|f| FrameRef::Memory(Arc::new(f))).collect(),
            ground_truth: BTreeMap::new(),
            source: None,
        })
    }

    pub fn with_ground_truth(mut self, ground_truth: BTreeMap<usize, LabelMap>) -> Result<Self> {
        for (&i, gt) in &ground_truth {
            self.check_frame(i)?;
            if gt.dims() != self.resolution() {
                return Err(Error::validation(
                    "dimension_mismatch",
                    format!(
                        "ground truth for frame {i} is {}x{}, video is {}x{}",
                        gt.width(),
                        gt.height(),
                        self.width,
                        self.height
                    ),
                ));
            }
        }
        self.ground_truth = ground_truth;
        Ok(self)
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn resolution(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn source(&self) -> Option<&Path> {
        self.source.as_deref()
    }

    pub fn ground_truth(&self) -> &BTreeMap<usize, LabelMap> {
        &self.ground_truth
    }

    pub fn check_frame(&self, index: usize) -> Result<()> {
        if index >= self.frames.len() {
            return Err(Error::validation(
                "invalid_frame",
                format!("frame {index} is outside 0..{}", self.frames.len()),
            ));
        }
        Ok(())
    }

    pub fn frame(&self, index: usize) -> Result<Arc<RgbImage>> {
        self.check_frame(index)?;
        match &self.frames[index] {
            FrameRef::Memory(img) => Ok(img.clone()),
            FrameRef::File(path) => {
                let img = open_image(path)?.to_rgb8();
                if img.dimensions() != self.resolution() {
                    return Err(Error::validation(
                        "dimension_mismatch",
                        format!("{} does not match the video resolution", path.display()),
                    ));
                }
                Ok(Arc::new(img))
            }
        }
    }

    /// Loads `<dir>/frames/*.png` (or decodes `<dir>/video.<ext>`), plus the
    /// label maps listed in `<dir>/manifest`.
    pub fn load(dir: &Path) -> Result<Self> {
        if !dir.is_dir() {
            return Err(Error::io(
                dir,
                std::io::Error::new(std::io::ErrorKind::NotFound, "video directory not found"),
            ));
        }
        let video_id = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "video".into());

        let info_path = dir.join("info.toml");
        let info: VideoInfo = if info_path.exists() {
            let text = std::fs::read_to_string(&info_path).map_err(|e| Error::io(&info_path, e))?;
            toml::from_str(&text).map_err(|e| Error::parse(info_path.display().to_string(), 1, e.to_string()))?
        } else {
            VideoInfo::default()
        };

        let frames_dir = dir.join("frames");
        let frame_paths = if frames_dir.is_dir() {
            indexed_pngs(&frames_dir)?
        } else if let Some(container) = find_container(dir)? {
            decode_container(&container)?
        } else {
            return Err(Error::io(
                &frames_dir,
                std::io::Error::new(std::io::ErrorKind::NotFound, "no frames directory or video file"),
            ));
        };
        if frame_paths.is_empty() {
            return Err(Error::validation("empty_video", format!("{} has no frames", dir.display())));
        }
        let first = open_image(&frame_paths[0])?;
        let (width, height) = (first.width(), first.height());

        let mut ds = VideoDataset {
            video_id,
            fps: info.fps.unwrap_or(DEFAULT_FPS),
            width,
            height,
            frames: frame_paths.into_iter().map(FrameRef::File).collect(),
            ground_truth: BTreeMap::new(),
            source: Some(dir.to_path_buf()),
        };

        let manifest = dir.join("manifest");
        if manifest.exists() {
            let text = std::fs::read_to_string(&manifest).map_err(|e| Error::io(&manifest, e))?;
            let mut gt = BTreeMap::new();
            for (i, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() {
                    continue;
                }
                let idx: usize = line.parse().map_err(|_| {
                    Error::parse(manifest.display().to_string(), i + 1, format!("bad frame index {line:?}"))
                })?;
                let label_path = dir.join("labels").join(format!("{idx:05}.png"));
                gt.insert(idx, LabelMap::load_png(&label_path)?);
            }
            ds = ds.with_ground_truth(gt)?;
        }
        Ok(ds)
    }

    /// Writes frames, label maps, manifest and `info.toml` under `<root>/<video_id>/`.
    pub fn write(&self, root: &Path) -> Result<PathBuf> {
        let dir = root.join(&self.video_id);
        let frames_dir = dir.join("frames");
        let labels_dir = dir.join("labels");
        for d in [&frames_dir, &labels_dir] {
            std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
        }
        for i in 0..self.frame_count() {
            let path = frames_dir.join(format!("{i:05}.png"));
            self.frame(i)?.save(&path).map_err(|e| Error::Image {
                path: path.clone(),
                message: e.to_string(),
            })?;
        }
        let mut manifest = String::new();
        for (i, gt) in &self.ground_truth {
            gt.save_png(&labels_dir.join(format!("{i:05}.png")))?;
            manifest.push_str(&format!("{i}\n"));
        }
        let manifest_path = dir.join("manifest");
        std::fs::write(&manifest_path, manifest).map_err(|e| Error::io(&manifest_path, e))?;
        let info_path = dir.join("info.toml");
        let info = toml::to_string(&VideoInfo { fps: Some(self.fps) }).expect("serializable");
        std::fs::write(&info_path, info).map_err(|e| Error::io(&info_path, e))?;
        Ok(dir)
    }
}

/// `NNNNN.png` files, required to be contiguous from 0.
fn indexed_pngs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut found = BTreeMap::new();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("png") {
            continue;
        }
        let Some(idx) = path.file_stem().and_then(|s| s.to_str()).and_then(|s| s.parse::<usize>().ok()) else {
            continue;
        };
        found.insert(idx, path);
    }
    for (expected, &idx) in found.keys().enumerate() {
        if idx != expected {
            return Err(Error::validation(
                "non_contiguous_frames",
                format!("{}: frame {expected} is missing", dir.display()),
            ));
        }
    }
    Ok(found.into_values().collect())
}

fn find_container(dir: &Path) -> Result<Option<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && path.file_stem().and_then(|s| s.to_str()) == Some("video") {
            return Ok(Some(path));
        }
    }
    Ok(None)
}

/// Container decoding is delegated to an `ffmpeg` binary on `PATH`.
fn decode_container(path: &Path) -> Result<Vec<PathBuf>> {
    let out_dir = std::env::temp_dir().join(format!("annotkit-frames-{}", uuid::Uuid::new_v4()));
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    let status = Command::new("ffmpeg")
        .arg("-loglevel")
        .arg("error")
        .arg("-i")
        .arg(path)
        .arg("-start_number")
        .arg("0")
        .arg(out_dir.join("%05d.png"))
        .status()
        .map_err(|e| Error::io(path, std::io::Error::new(e.kind(), format!("cannot run ffmpeg: {e}"))))?;
    if !status.success() {
        return Err(Error::io(
            path,
            std::io::Error::other(format!("ffmpeg exited with {status}")),
        ));
    }
    indexed_pngs(&out_dir)
}
