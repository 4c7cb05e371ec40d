#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use annotkit::backend::{Polarity, ReferenceBackend};
use annotkit::dataset::{generate_synthetic_video, SceneSpec, ShapeSpec, SyntheticVideo};
use annotkit::session::Session;
use rand::Rng;

pub const CLASS_NAMES: [&str; 3] = ["Iris", "Pupil", "Lens"];

/// Three shapes in separate lanes, moving at most 3.5 px per frame.
pub fn three_object_scene(video_id: &str, frames: usize) -> SceneSpec {
    SceneSpec::new(video_id, 160, 120, frames)
        .with_background([20, 20, 30])
        .with_shape(ShapeSpec::ellipse(1, [220, 60, 40], [20.0, 25.0], [10.0, 8.0]).moving([3.0, 0.5]))
        .with_shape(ShapeSpec::rectangle(2, [40, 200, 90], [140.0, 70.0], [9.0, 7.0]).moving([-3.5, 0.0]))
        .with_shape(ShapeSpec::ellipse(3, [60, 90, 230], [40.0, 100.0], [8.0, 8.0]).moving([2.5, -0.5]))
}

pub fn three_object_fixture(frames: usize) -> SyntheticVideo {
    generate_synthetic_video(&three_object_scene("fixture", frames)).unwrap()
}

/// A session with one positive click per shape on frame 0.
pub fn clicked_session(fx: &SyntheticVideo) -> Session {
    let mut s = Session::new(Arc::new(fx.dataset.clone()), "reference", Arc::new(ReferenceBackend::default()));
    for (k, shape) in fx.spec.shapes.iter().enumerate() {
        let id = s.add_object(0, shape.class_id, CLASS_NAMES[k]).unwrap();
        let (x, y) = fx.interior_point(0, k).unwrap();
        s.add_point(id, 0, x, y, Polarity::Positive).unwrap();
    }
    s
}

pub fn random_mask(rng: &mut impl Rng, max_side: u32) -> annotkit::mask::BinaryMask {
    let w = rng.gen_range(1..=max_side);
    let h = rng.gen_range(1..=max_side);
    let density: f64 = rng.gen();
    annotkit::mask::BinaryMask::from_fn(w, h, |_, _| rng.gen_bool(density))
}

pub fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_annotkit"))
}

pub fn write_video(fx: &SyntheticVideo, root: &Path) -> PathBuf {
    fx.dataset.write(root).unwrap()
}

pub struct SyntheticVideoOnDisk {
    pub fx: SyntheticVideo,
    pub video: Arc<annotkit::dataset::VideoDataset>,
}
