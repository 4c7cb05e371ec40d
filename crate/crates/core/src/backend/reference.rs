use std::collections::{BTreeMap, VecDeque};
use std::time::Instant;

use image::RgbImage;

use super::{
    check_seeds, validate_prompts, BackendCapabilities, Progress, PromptPoint, PropagationResult, Seed,
    SegmentationBackend,
};
use crate::dataset::VideoDataset;
use crate::error::Result;
use crate::mask::BinaryMask;

pub const DEFAULT_TOLERANCE: u8 = 10;
pub const DEFAULT_SEARCH_RADIUS: u32 = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReferenceParams {
    /// Largest per-channel absolute difference still counted as the same color.
    pub tolerance: u8,
    /// Half-width of the square window searched around the previous centroid.
    pub search_radius: u32,
}

impl Default for ReferenceParams {
    fn default() -> Self {
        Self {
            tolerance: DEFAULT_TOLERANCE,
            search_radius: DEFAULT_SEARCH_RADIUS,
        }
    }
}

fn color_distance(a: [u8; 3], b: [u8; 3]) -> u8 {
    a.iter().zip(&b).map(|(x, y)| x.abs_diff(*y)).max().unwrap_or(0)
}

/// 4-connected component of pixels whose color is within `tolerance` of
/// the seed pixel's color.
pub fn flood_component(frame: &RgbImage, x: u32, y: u32, tolerance: u8) -> BinaryMask {
    let (w, h) = frame.dimensions();
    let target = frame.get_pixel(x, y).0;
    let mut mask = BinaryMask::new(w, h);
    let mut queue = VecDeque::from([(x, y)]);
    mask.set(x, y, true);
    while let Some((cx, cy)) = queue.pop_front() {
        let neighbors = [
            (cx.wrapping_sub(1), cy),
            (cx + 1, cy),
            (cx, cy.wrapping_sub(1)),
            (cx, cy + 1),
        ];
        for (nx, ny) in neighbors {
            if nx >= w || ny >= h || mask.get(nx, ny) {
                continue;
            }
            if color_distance(frame.get_pixel(nx, ny).0, target) <= tolerance {
                mask.set(nx, ny, true);
                queue.push_back((nx, ny));
            }
        }
    }
    mask
}

/// Union of the components under positive points, minus the components
/// under negative points.
pub fn reference_segment(frame: &RgbImage, prompts: &[PromptPoint], tolerance: u8) -> Result<BinaryMask> {
    let (w, h) = frame.dimensions();
    validate_prompts(prompts, w, h)?;
    let mut mask = BinaryMask::new(w, h);
    for p in prompts.iter().filter(|p| p.polarity.is_positive()) {
        if !mask.get(p.x, p.y) {
            mask.union_with(&flood_component(frame, p.x, p.y, tolerance))?;
        }
    }
    for p in prompts.iter().filter(|p| !p.polarity.is_positive()) {
        mask.subtract(&flood_component(frame, p.x, p.y, tolerance))?;
    }
    Ok(mask)
}

/// Re-segments an object on the next frame from the pixel nearest the
/// previous mask's centroid that still matches `anchor_color`. Returns an
/// empty mask when nothing matches inside the search window.
pub fn reference_propagate_step(
    prev_mask: &BinaryMask,
    next_frame: &RgbImage,
    anchor_color: [u8; 3],
    params: ReferenceParams,
) -> BinaryMask {
    let (w, h) = next_frame.dimensions();
    let Some((cx, cy)) = prev_mask.centroid() else {
        return BinaryMask::new(w, h);
    };
    let r = params.search_radius as i64;
    let (rcx, rcy) = (cx.round() as i64, cy.round() as i64);
    let mut best: Option<(f64, u32, u32)> = None;
    for y in (rcy - r).max(0)..=(rcy + r).min(h as i64 - 1) {
        for x in (rcx - r).max(0)..=(rcx + r).min(w as i64 - 1) {
            let (x, y) = (x as u32, y as u32);
            if color_distance(next_frame.get_pixel(x, y).0, anchor_color) > params.tolerance {
                continue;
            }
            let d = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
            // Row-major scan: strict `<` keeps the first pixel on ties.
            if best.is_none_or(|(bd, _, _)| d < bd) {
                best = Some((d, x, y));
            }
        }
    }
    match best {
        Some((_, x, y)) => flood_component(next_frame, x, y, params.tolerance),
        None => BinaryMask::new(w, h),
    }
}

/// Deterministic color/connectivity backend. Pure and reentrant.
#[derive(Clone, Debug, Default)]
pub struct ReferenceBackend {
    pub params: ReferenceParams,
}

impl ReferenceBackend {
    pub fn new(params: ReferenceParams) -> Self {
        Self { params }
    }

    /// Color the object is tracked by: the first positive click, or the mask
    /// pixel nearest the mask centroid when the seed has no clicks.
    pub(crate) fn anchor_color(frame: &RgbImage, seed: &Seed) -> [u8; 3] {
        if let Some(p) = seed.prompts.iter().find(|p| p.polarity.is_positive()) {
            return frame.get_pixel(p.x, p.y).0;
        }
        let (cx, cy) = seed.anchor_mask.centroid().unwrap_or((0.0, 0.0));
        let w = seed.anchor_mask.width();
        let (x, y) = seed
            .anchor_mask
            .bits()
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| (i as u32 % w, i as u32 / w))
            .min_by(|a, b| {
                let da = (a.0 as f64 - cx).powi(2) + (a.1 as f64 - cy).powi(2);
                let db = (b.0 as f64 - cx).powi(2) + (b.1 as f64 - cy).powi(2);
                da.total_cmp(&db)
            })
            .unwrap_or((0, 0));
        frame.get_pixel(x, y).0
    }
}

struct Track {
    prev: BinaryMask,
    color: [u8; 3],
    lost: bool,
}

impl SegmentationBackend for ReferenceBackend {
    fn capabilities(&self) -> BackendCapabilities {
        BackendCapabilities {
            name: "reference".into(),
            supports_video: true,
            max_objects: None,
        }
    }

    fn predict_frame(&self, video: &VideoDataset, prompts: &[PromptPoint]) -> Result<BinaryMask> {
        let (w, h) = video.resolution();
        validate_prompts(prompts, w, h)?;
        let frame = video.frame(prompts[0].frame_index)?;
        reference_segment(&frame, prompts, self.params.tolerance)
    }

    fn propagate(
        &self,
        video: &VideoDataset,
        seeds: &BTreeMap<u32, Seed>,
        progress: Progress<'_>,
    ) -> Result<PropagationResult> {
        check_seeds(video, seeds)?;
        let start = seeds.values().map(|s| s.anchor_frame).min().expect("seeds checked non-empty");
        let last = video.frame_count() - 1;
        let total = last - start + 1;
        let (w, h) = video.resolution();

        let mut result = PropagationResult::default();
        let mut tracks: BTreeMap<u32, Track> = BTreeMap::new();
        for (done, f) in (start..=last).enumerate() {
            let t0 = Instant::now();
            let frame = video.frame(f)?;
            for (&id, seed) in seeds {
                if f < seed.anchor_frame {
                    continue;
                }
                let mask = if f == seed.anchor_frame {
                    tracks.insert(
                        id,
                        Track {
                            prev: seed.anchor_mask.clone(),
                            color: Self::anchor_color(&frame, seed),
                            lost: false,
                        },
                    );
                    seed.anchor_mask.clone()
                } else {
                    let track = tracks.get_mut(&id).expect("track starts at anchor");
                    if track.lost {
                        BinaryMask::new(w, h)
                    } else {
                        let next = reference_propagate_step(&track.prev, &frame, track.color, self.params);
                        if next.is_empty() {
                            track.lost = true;
                            result.lost.insert(id, f);
                        }
                        track.prev = next.clone();
                        next
                    }
                };
                result.masks.insert((f, id), mask);
            }
            progress(done + 1, total);
            result.per_frame_seconds.push(t0.elapsed().as_secs_f64());
        }
        Ok(result)
    }
}
