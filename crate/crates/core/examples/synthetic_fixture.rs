//! Renders a moving-shapes video with per-frame ground truth and writes it in
//! the dataset layout (`frames/`, `labels/`, `info.toml`).

use annotkit::dataset::{generate_synthetic_video, SceneSpec, ShapeSpec, VideoDataset};

fn main() -> anyhow::Result<()> {
    let spec = SceneSpec::new("shapes_demo", 96, 64, 20)
        .with_background([15, 15, 25])
        .with_shape(ShapeSpec::ellipse(1, [230, 80, 60], [16.0, 20.0], [9.0, 7.0]).moving([2.5, 0.5]))
        .with_shape(ShapeSpec::rectangle(4, [60, 210, 120], [80.0, 44.0], [6.0, 8.0]).moving([-2.0, -0.5]));
    let video = generate_synthetic_video(&spec)?;

    for shape in 0..spec.shapes.len() {
        let first = video.shape_mask(0, shape).count();
        let last = video.shape_mask(spec.frames - 1, shape).count();
        println!("shape {shape}: {first} px on frame 0, {last} px on frame {}", spec.frames - 1);
    }

    let root = tempfile::tempdir()?;
    let dir = video.dataset.write(root.path())?;
    let back = VideoDataset::load(&dir)?;
    assert_eq!(back.frame(7)?, video.dataset.frame(7)?);
    println!("wrote {} frames to {}", back.frame_count(), dir.display());
    println!("\nscene spec:\n{}", spec.to_toml());
    Ok(())
}
