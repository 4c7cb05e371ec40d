//! Deterministic moving-shape videos with exact ground truth.
//!
//! A scene is a TOML document:
//!
//! ```toml
//! video_id = "synth_01"
//! width = 64
//! height = 48
//! frames = 10
//! fps = 25.0              # optional, default 25
//! background = [0, 96, 0] # optional, default black
//!
//! [[shapes]]
//! kind = "ellipse"        # or "rectangle"
//! class_id = 2
//! color = [220, 40, 40]
//! center = [20.0, 24.0]   # (x, y) on frame 0
//! size = [8.0, 6.0]       # radii (ellipse) or half-extents (rectangle)
//! velocity = [2.0, 0.0]   # optional, pixels per frame
//! ```
//!
//! Shapes are painted in list order, so later shapes occlude earlier ones.
//! Edges are hard (no anti-aliasing): every pixel carries exactly the
//! background color or one shape's fill color.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use super::video::{VideoDataset, DEFAULT_FPS};
use crate::error::{Error, Result};
use crate::mask::{BinaryMask, LabelMap};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeKind {
    Ellipse,
    Rectangle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeSpec {
    pub kind: ShapeKind,
    pub class_id: u32,
    pub color: [u8; 3],
    pub center: [f64; 2],
    pub size: [f64; 2],
    #[serde(default)]
    pub velocity: [f64; 2],
}

impl ShapeSpec {
    pub fn ellipse(class_id: u32, color: [u8; 3], center: [f64; 2], radii: [f64; 2]) -> Self {
        Self {
            kind: ShapeKind::Ellipse,
            class_id,
            color,
            center,
            size: radii,
            velocity: [0.0, 0.0],
        }
    }

    pub fn rectangle(class_id: u32, color: [u8; 3], center: [f64; 2], half_extents: [f64; 2]) -> Self {
        Self {
            kind: ShapeKind::Rectangle,
            ..Self::ellipse(class_id, color, center, half_extents)
        }
    }

    pub fn moving(mut self, velocity: [f64; 2]) -> Self {
        self.velocity = velocity;
        self
    }

    pub fn center_at(&self, frame: usize) -> (f64, f64) {
        (
            self.center[0] + self.velocity[0] * frame as f64,
            self.center[1] + self.velocity[1] * frame as f64,
        )
    }

    fn contains(&self, frame: usize, x: u32, y: u32) -> bool {
        let (cx, cy) = self.center_at(frame);
        let dx = x as f64 - cx;
        let dy = y as f64 - cy;
        match self.kind {
            ShapeKind::Ellipse => {
                let (rx, ry) = (self.size[0], self.size[1]);
                (dx / rx).powi(2) + (dy / ry).powi(2) <= 1.0
            }
            ShapeKind::Rectangle => dx.abs() <= self.size[0] && dy.abs() <= self.size[1],
        }
    }
}

fn default_fps() -> f64 {
    DEFAULT_FPS
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub video_id: String,
    pub width: u32,
    pub height: u32,
    pub frames: usize,
    #[serde(default = "default_fps")]
    pub fps: f64,
    #[serde(default)]
    pub background: [u8; 3],
    #[serde(default)]
    pub shapes: Vec<ShapeSpec>,
}

impl SceneSpec {
    pub fn new(video_id: impl Into<String>, width: u32, height: u32, frames: usize) -> Self {
        Self {
            video_id: video_id.into(),
            width,
            height,
            frames,
            fps: DEFAULT_FPS,
            background: [0, 0, 0],
            shapes: Vec::new(),
        }
    }

    pub fn with_background(mut self, color: [u8; 3]) -> Self {
        self.background = color;
        self
    }

    pub fn with_shape(mut self, shape: ShapeSpec) -> Self {
        self.shapes.push(shape);
        self
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Scene(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scene spec is always serializable")
    }

    fn validate(&self) -> Result<()> {
        if self.frames == 0 {
            return Err(Error::Scene("frame count must be at least 1".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Scene("width and height must be positive".into()));
        }
        let mut colors = BTreeSet::new();
        for (i, s) in self.shapes.iter().enumerate() {
            if s.class_id == 0 || s.class_id > 255 {
                return Err(Error::Scene(format!("shape {i}: class_id must be in 1..=255")));
            }
            if !(s.size[0] > 0.0 && s.size[1] > 0.0) {
                return Err(Error::Scene(format!("shape {i}: size must be positive")));
            }
            if s.color == self.background {
                return Err(Error::Scene(format!("shape {i}: fill color equals the background")));
            }
            if !colors.insert(s.color) {
                return Err(Error::Scene(format!(
                    "shape {i}: fill color {:?} is already used by another shape; \
                     same-colored shapes make the ground truth ambiguous",
                    s.color
                )));
            }
        }
        Ok(())
    }
}

/// A rendered scene: the dataset (frames + class label maps on every frame)
/// and a per-frame instance raster (`0` = background, `k` = shape `k - 1`).
#[derive(Clone, Debug)]
pub struct SyntheticVideo {
    pub spec: SceneSpec,
    pub dataset: VideoDataset,
    instances: Vec<Vec<u16>>,
}

impl SyntheticVideo {
    /// Visible pixels of one shape on one frame.
    pub fn shape_mask(&self, frame: usize, shape: usize) -> BinaryMask {
        let raster = &self.instances[frame];
        let target = shape as u16 + 1;
        let bits = raster.iter().map(|&v| v == target).collect();
        BinaryMask::from_bits(self.spec.width, self.spec.height, bits).expect("raster matches scene")
    }

    pub fn label_map(&self, frame: usize) -> &LabelMap {
        &self.dataset.ground_truth()[&frame]
    }

    /// First frame on which the shape has no visible pixels, if any.
    pub fn exit_frame(&self, shape: usize) -> Option<usize> {
        (0..self.spec.frames).find(|&f| self.shape_mask(f, shape).is_empty())
    }

    /// A pixel of the shape on `frame` closest to the mean of its visible pixels.
    pub fn interior_point(&self, frame: usize, shape: usize) -> Option<(u32, u32)> {
        let mask = self.shape_mask(frame, shape);
        let (cx, cy) = mask.centroid()?;
        let w = mask.width();
        mask.bits()
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| ((i as u32 % w), (i as u32 / w)))
            .min_by(|a, b| {
                let da = (a.0 as f64 - cx).powi(2) + (a.1 as f64 - cy).powi(2);
                let db = (b.0 as f64 - cx).powi(2) + (b.1 as f64 - cy).powi(2);
                da.total_cmp(&db)
            })
    }
}

pub fn generate_synthetic_video(spec: &SceneSpec) -> Result<SyntheticVideo> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let mut frames = Vec::with_capacity(spec.frames);
    let mut labels = BTreeMap::new();
    let mut instances = Vec::with_capacity(spec.frames);
    for t in 0..spec.frames {
        let mut img = RgbImage::from_pixel(w, h, Rgb(spec.background));
        let mut label = LabelMap::new(w, h);
        let mut inst = vec![0u16; w as usize * h as usize];
        for (k, shape) in spec.shapes.iter().enumerate() {
            let (cx, cy) = shape.center_at(t);
            let (x0, x1) = span(cx, shape.size[0], w);
            let (y0, y1) = span(cy, shape.size[1], h);
            for y in y0..y1 {
                for x in x0..x1 {
                    if shape.contains(t, x, y) {
                        img.put_pixel(x, y, Rgb(shape.color));
                        label.set(x, y, shape.class_id);
                        inst[y as usize * w as usize + x as usize] = k as u16 + 1;
                    }
                }
            }
        }
        frames.push(img);
        labels.insert(t, label);
        instances.push(inst);
    }
    let mut dataset = VideoDataset::from_frames(spec.video_id.clone(), spec.fps, frames)?
        .with_ground_truth(labels)?;
    dataset.fps = spec.fps;
    Ok(SyntheticVideo {
        spec: spec.clone(),
        dataset,
        instances,
    })
}

/// Pixel range `[lo, hi)` covering `center ± extent`, clipped to `0..limit`.
fn span(center: f64, extent: f64, limit: u32) -> (u32, u32) {
    let lo = (center - extent).floor().max(0.0);
    let hi = (center + extent).ceil() + 1.0;
    let hi = hi.min(limit as f64).max(0.0);
    (lo.min(limit as f64) as u32, hi as u32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::merge_to_binary;

    const RED: [u8; 3] = [220, 30, 30];
    const GREEN: [u8; 3] = [0, 160, 0];

    #[test]
    fn static_scene_repeats_label_maps() {
        let spec = SceneSpec::new("s", 32, 24, 5)
            .with_background(GREEN)
            .with_shape(ShapeSpec::ellipse(1, RED, [16.0, 12.0], [6.0, 4.0]));
        let v = generate_synthetic_video(&spec).unwrap();
        for t in 1..5 {
            assert_eq!(v.label_map(t), v.label_map(0));
        }
        assert!(!merge_to_binary(v.label_map(0), None).is_empty());
    }

    #[test]
    fn translating_centroids_form_arithmetic_sequence() {
        let spec = SceneSpec::new("s", 64, 32, 10)
            .with_shape(ShapeSpec::ellipse(3, RED, [10.0, 16.0], [5.0, 4.0]).moving([2.0, 0.0]));
        let v = generate_synthetic_video(&spec).unwrap();
        let xs: Vec<f64> = (0..10)
            .map(|t| merge_to_binary(v.label_map(t), None).centroid().unwrap().0)
            .collect();
        for pair in xs.windows(2) {
            assert!((pair[1] - pair[0] - 2.0).abs() < 1e-9, "{xs:?}");
        }
    }

    #[test]
    fn empty_scene_is_background_only() {
        let v = generate_synthetic_video(&SceneSpec::new("e", 8, 8, 3)).unwrap();
        for t in 0..3 {
            assert!(v.label_map(t).labels().iter().all(|&l| l == 0));
        }
    }

    #[test]
    fn foreground_pixels_carry_their_shape_color() {
        let spec = SceneSpec::new("c", 40, 30, 4)
            .with_background(GREEN)
            .with_shape(ShapeSpec::rectangle(1, RED, [12.0, 12.0], [5.0, 3.0]).moving([1.0, 1.0]))
            .with_shape(ShapeSpec::ellipse(2, [20, 20, 200], [16.0, 14.0], [6.0, 6.0]));
        let v = generate_synthetic_video(&spec).unwrap();
        for t in 0..4 {
            let frame = v.dataset.frame(t).unwrap();
            for (k, shape) in spec.shapes.iter().enumerate() {
                let m = v.shape_mask(t, k);
                for y in 0..30 {
                    for x in 0..40 {
                        if m.get(x, y) {
                            assert_eq!(frame.get_pixel(x, y).0, shape.color);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn shared_fill_color_is_a_spec_error() {
        let spec = SceneSpec::new("d", 16, 16, 1)
            .with_shape(ShapeSpec::ellipse(1, RED, [4.0, 4.0], [2.0, 2.0]))
            .with_shape(ShapeSpec::ellipse(2, RED, [6.0, 4.0], [2.0, 2.0]));
        assert!(matches!(generate_synthetic_video(&spec), Err(Error::Scene(_))));
        let bg = SceneSpec::new("b", 16, 16, 1)
            .with_background(RED)
            .with_shape(ShapeSpec::ellipse(1, RED, [4.0, 4.0], [2.0, 2.0]));
        assert!(generate_synthetic_video(&bg).is_err());
        assert!(generate_synthetic_video(&SceneSpec::new("z", 4, 4, 0)).is_err());
    }

    #[test]
    fn toml_roundtrip_and_exit_frame() {
        let spec = SceneSpec::new("t", 20, 10, 8)
            .with_shape(ShapeSpec::rectangle(4, RED, [10.0, 5.0], [2.0, 2.0]).moving([4.0, 0.0]));
        let parsed = SceneSpec::from_toml(&spec.to_toml()).unwrap();
        assert_eq!(parsed, spec);
        let v = generate_synthetic_video(&parsed).unwrap();
        // x range [10+4t-2, 10+4t+2] leaves 0..20 once 8+4t >= 20, i.e. t = 3
        assert_eq!(v.exit_frame(0), Some(3));
    }
}
