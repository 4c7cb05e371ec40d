//! Segmentation backends.
//!
//! A backend turns point prompts into a mask on one frame and propagates
//! anchor masks through the rest of a video. [`ReferenceBackend`] is a
//! deterministic color/connectivity segmenter for offline use; an
//! [`ExternalBackend`] talks to a model process over the adapter wire
//! protocol in [`adapter`].

pub mod adapter;
mod reference;

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::dataset::VideoDataset;
use crate::error::{Error, Result};
use crate::mask::BinaryMask;

pub use adapter::{AdapterClient, ExternalBackend};
pub use reference::{
    flood_component, reference_propagate_step, reference_segment, ReferenceBackend, ReferenceParams,
    DEFAULT_SEARCH_RADIUS, DEFAULT_TOLERANCE,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
}

impl Polarity {
    pub fn is_positive(self) -> bool {
        self == Polarity::Positive
    }
}

/// A click at column `x`, row `y`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PromptPoint {
    pub x: u32,
    pub y: u32,
    pub polarity: Polarity,
    pub frame_index: usize,
    pub object_id: u32,
}

impl PromptPoint {
    pub fn positive(object_id: u32, frame_index: usize, x: u32, y: u32) -> Self {
        Self {
            x,
            y,
            polarity: Polarity::Positive,
            frame_index,
            object_id,
        }
    }

    pub fn negative(object_id: u32, frame_index: usize, x: u32, y: u32) -> Self {
        Self {
            polarity: Polarity::Negative,
            ..Self::positive(object_id, frame_index, x, y)
        }
    }

    pub fn check_bounds(&self, width: u32, height: u32) -> Result<()> {
        if self.x >= width || self.y >= height {
            return Err(Error::validation(
                "point_out_of_bounds",
                format!("point ({}, {}) lies outside the {width}x{height} frame", self.x, self.y),
            ));
        }
        Ok(())
    }
}

/// Checks the shared preconditions of single-frame prediction: at least one
/// positive point, one object and one frame, every point inside the frame.
pub fn validate_prompts(prompts: &[PromptPoint], width: u32, height: u32) -> Result<()> {
    if !prompts.iter().any(|p| p.polarity.is_positive()) {
        return Err(Error::validation("no_positive_points", "no positive points"));
    }
    let first = prompts[0];
    if prompts
        .iter()
        .any(|p| p.object_id != first.object_id || p.frame_index != first.frame_index)
    {
        return Err(Error::validation(
            "mixed_prompts",
            "all prompts of one prediction must share object and frame",
        ));
    }
    for p in prompts {
        p.check_bounds(width, height)?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendCapabilities {
    pub name: String,
    pub supports_video: bool,
    /// `None` means unbounded.
    pub max_objects: Option<usize>,
}

/// Starting point of one tracked object.
#[derive(Clone, Debug, PartialEq)]
pub struct Seed {
    pub anchor_frame: usize,
    pub anchor_mask: BinaryMask,
    pub prompts: Vec<PromptPoint>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PropagationResult {
    /// Keyed by `(frame_index, object_id)`; each object covers its anchor
    /// frame through the last frame.
    pub masks: BTreeMap<(usize, u32), BinaryMask>,
    pub per_frame_seconds: Vec<f64>,
    /// First frame on which an object could no longer be found.
    pub lost: BTreeMap<u32, usize>,
}

impl PropagationResult {
    pub fn mask(&self, frame: usize, object_id: u32) -> Option<&BinaryMask> {
        self.masks.get(&(frame, object_id))
    }

    pub fn frames_of(&self, object_id: u32) -> impl Iterator<Item = usize> + '_ {
        self.masks.keys().filter(move |(_, o)| *o == object_id).map(|(f, _)| *f)
    }

    pub fn object_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.masks.keys().map(|(_, o)| *o).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

/// Progress callback: `(frames done, frames total)`.
pub type Progress<'a> = &'a (dyn Fn(usize, usize) + Sync);

pub fn no_progress(_: usize, _: usize) {}

pub trait SegmentationBackend: Send + Sync {
    fn capabilities(&self) -> BackendCapabilities;

    /// Mask of one object on one frame from its prompts there.
    fn predict_frame(&self, video: &VideoDataset, prompts: &[PromptPoint]) -> Result<BinaryMask>;

    /// Tracks every seeded object from its anchor frame to the last frame.
    fn propagate(
        &self,
        video: &VideoDataset,
        seeds: &BTreeMap<u32, Seed>,
        progress: Progress<'_>,
    ) -> Result<PropagationResult>;
}

pub(crate) fn check_seeds(video: &VideoDataset, seeds: &BTreeMap<u32, Seed>) -> Result<()> {
    if seeds.is_empty() {
        return Err(Error::validation("no_objects", "nothing to propagate"));
    }
    for (id, seed) in seeds {
        video.check_frame(seed.anchor_frame)?;
        if seed.anchor_mask.dims() != video.resolution() {
            return Err(Error::validation(
                "dimension_mismatch",
                format!("object {id}: anchor mask does not match the video resolution"),
            ));
        }
        if seed.anchor_mask.is_empty() {
            return Err(Error::validation(
                "empty_seed",
                format!("object {id}: anchor mask is empty"),
            ));
        }
    }
    Ok(())
}

/// Wraps a backend and sleeps a fixed delay per predicted or propagated
/// frame. Used to exercise progress reporting and busy handling.
pub struct ThrottledBackend<B> {
    inner: B,
    delay: Duration,
}

impl<B: SegmentationBackend> ThrottledBackend<B> {
    pub fn new(inner: B, delay: Duration) -> Self {
        Self { inner, delay }
    }
}

impl<B: SegmentationBackend> SegmentationBackend for ThrottledBackend<B> {
    fn capabilities(&self) -> BackendCapabilities {
        let mut caps = self.inner.capabilities();
        caps.name = format!("throttled-{}", caps.name);
        caps
    }

    fn predict_frame(&self, video: &VideoDataset, prompts: &[PromptPoint]) -> Result<BinaryMask> {
        std::thread::sleep(self.delay);
        self.inner.predict_frame(video, prompts)
    }

    fn propagate(
        &self,
        video: &VideoDataset,
        seeds: &BTreeMap<u32, Seed>,
        progress: Progress<'_>,
    ) -> Result<PropagationResult> {
        // The sleep happens inside the per-frame timing window of the inner backend.
        let slowed = |done: usize, total: usize| {
            spin_sleep(self.delay);
            progress(done, total)
        };
        self.inner.propagate(video, seeds, &slowed)
    }
}

/// Sleeps, then spins out the remainder so short delays stay accurate.
fn spin_sleep(delay: Duration) {
    let start = Instant::now();
    if delay > Duration::from_millis(2) {
        std::thread::sleep(delay - Duration::from_millis(1));
    }
    while start.elapsed() < delay {
        std::hint::spin_loop();
    }
}

impl<T: SegmentationBackend + ?Sized> SegmentationBackend for Arc<T> {
    fn capabilities(&self) -> BackendCapabilities {
        (**self).capabilities()
    }

    fn predict_frame(&self, video: &VideoDataset, prompts: &[PromptPoint]) -> Result<BinaryMask> {
        (**self).predict_frame(video, prompts)
    }

    fn propagate(
        &self,
        video: &VideoDataset,
        seeds: &BTreeMap<u32, Seed>,
        progress: Progress<'_>,
    ) -> Result<PropagationResult> {
        (**self).propagate(video, seeds, progress)
    }
}
