//! Frames-per-second accounting with a backend slowed to a known per-frame
//! cost.

use std::sync::Arc;
use std::time::Duration;

use annotkit::backend::{Polarity, ReferenceBackend, ThrottledBackend};
use annotkit::dataset::{generate_synthetic_video, SceneSpec, ShapeSpec};
use annotkit::metrics::ThroughputRecord;
use annotkit::session::{propagate_session, Session};

fn main() -> anyhow::Result<()> {
    let spec = SceneSpec::new("tp", 48, 36, 50)
        .with_shape(ShapeSpec::ellipse(1, [250, 250, 250], [12.0, 18.0], [5.0, 5.0]).moving([0.4, 0.0]));
    let fx = generate_synthetic_video(&spec)?;
    for delay_ms in [0u64, 10, 25] {
        let backend = ThrottledBackend::new(ReferenceBackend::default(), Duration::from_millis(delay_ms));
        let mut s = Session::new(Arc::new(fx.dataset.clone()), "throttled", Arc::new(backend));
        let id = s.add_object(0, 1, "Iris")?;
        let (x, y) = fx.interior_point(0, 0).unwrap();
        s.add_point(id, 0, x, y, Polarity::Positive)?;
        let result = propagate_session(&mut s)?;
        let rec = ThroughputRecord::from_durations(&result.per_frame_seconds)?;
        println!("{delay_ms:>3} ms/frame: {:>9.1} FPS over {} frames", rec.fps, rec.frames_processed);
    }
    Ok(())
}
