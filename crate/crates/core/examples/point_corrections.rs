//! Correcting a mask with extra clicks: a positive click adds a second
//! region, a negative one carves it back out, and reannotate starts over.

use std::sync::Arc;

use annotkit::backend::{Polarity, ReferenceBackend};
use annotkit::dataset::{generate_synthetic_video, SceneSpec, ShapeSpec};
use annotkit::session::Session;

fn main() -> anyhow::Result<()> {
    // Two touching regions of the same class: a lens with a darker rim.
    let spec = SceneSpec::new("corrections", 64, 48, 3)
        .with_background([10, 10, 10])
        .with_shape(ShapeSpec::ellipse(3, [150, 150, 170], [32.0, 24.0], [16.0, 12.0]))
        .with_shape(ShapeSpec::ellipse(3, [210, 210, 230], [32.0, 24.0], [8.0, 6.0]));
    let fx = generate_synthetic_video(&spec)?;
    let mut s = Session::new(Arc::new(fx.dataset.clone()), "reference", Arc::new(ReferenceBackend::default()));
    let lens = s.add_object(0, 3, "Lens")?;

    let centre = fx.interior_point(0, 1).unwrap();
    let rim = (centre.0 + 12, centre.1);
    let m = s.add_point(lens, 0, centre.0, centre.1, Polarity::Positive)?;
    println!("click centre         -> {:4} px (under-segmented)", m.count());
    let m = s.add_point(lens, 0, rim.0, rim.1, Polarity::Positive)?;
    println!("add positive on rim  -> {:4} px", m.count());
    let m = s.add_point(lens, 0, centre.0, centre.1 + 1, Polarity::Negative)?;
    println!("negative in centre   -> {:4} px (rim only)", m.count());

    s.reannotate(lens, 0)?;
    println!("reannotate           -> {} clicks left on frame 0", s.object(lens)?.prompts_on(0).len());
    let err = s.add_point(lens, 0, rim.0, rim.1, Polarity::Negative).unwrap_err();
    println!("negative first click -> error[{}]", err.code());
    println!("revision {}", s.revision());
    Ok(())
}
