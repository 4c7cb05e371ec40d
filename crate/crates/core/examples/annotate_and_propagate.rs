//! The annotation loop: one click per object, propagate through the video,
//! render an overlay and export per-object and merged masks.

use std::sync::Arc;

use annotkit::backend::{Polarity, ReferenceBackend};
use annotkit::dataset::{generate_synthetic_video, SceneSpec, ShapeSpec};
use annotkit::metrics::iou;
use annotkit::session::{export_masks, propagate_session, visualize, Session};

fn main() -> anyhow::Result<()> {
    let spec = SceneSpec::new("demo", 128, 96, 30)
        .with_background([20, 20, 30])
        .with_shape(ShapeSpec::ellipse(1, [220, 60, 40], [20.0, 25.0], [10.0, 8.0]).moving([3.0, 0.5]))
        .with_shape(ShapeSpec::rectangle(2, [40, 200, 90], [110.0, 70.0], [9.0, 7.0]).moving([-3.0, 0.0]));
    let fx = generate_synthetic_video(&spec)?;
    let mut session = Session::new(Arc::new(fx.dataset.clone()), "reference", Arc::new(ReferenceBackend::default()));

    for (k, name) in ["Iris", "Pupil"].into_iter().enumerate() {
        let id = session.add_object(0, k as u32 + 1, name)?;
        let (x, y) = fx.interior_point(0, k).unwrap();
        let preview = session.add_point(id, 0, x, y, Polarity::Positive)?;
        println!("object {id} ({name}): click ({x}, {y}) -> {} px", preview.count());
    }

    let result = propagate_session(&mut session)?;
    println!("propagated {} masks, {} objects lost", result.masks.len(), result.lost.len());
    for (k, id) in session.objects().keys().enumerate() {
        let worst = (0..spec.frames)
            .map(|f| iou(session.object_mask(f, *id).unwrap(), &fx.shape_mask(f, k)).unwrap())
            .fold(1.0, f64::min);
        println!("object {id}: lowest IoU over {} frames = {worst:.4}", spec.frames);
    }

    let out = tempfile::tempdir()?;
    let composite = visualize(&session, 29)?;
    composite.image.save(out.path().join("overlay_29.png"))?;
    let manifest = export_masks(&session, out.path(), true)?;
    println!(
        "exported {} per-object and {} merged masks to {}",
        manifest.per_object().count(),
        manifest.merged().count(),
        out.path().display()
    );
    Ok(())
}
