//! Scores predictions against ground truth per frame, aggregates per video
//! and writes the mean ± std report and its bar chart.

use std::collections::BTreeMap;

use annotkit::dataset::{generate_synthetic_video, merge_to_binary, SceneSpec, ShapeSpec};
use annotkit::mask::BinaryMask;
use annotkit::metrics::{evaluate_video, export_plot, export_report, read_report, EmptyPolicy};

fn main() -> anyhow::Result<()> {
    let mut records = Vec::new();
    for (k, dilate) in [0u32, 1, 2].into_iter().enumerate() {
        let spec = SceneSpec::new(format!("test_{k:02}"), 64, 48, 10)
            .with_shape(ShapeSpec::ellipse(1, [200, 60, 60], [20.0, 24.0], [8.0, 6.0]).moving([1.5, 0.0]))
            .with_shape(ShapeSpec::rectangle(2, [60, 200, 60], [48.0, 20.0], [5.0, 5.0]));
        let video = generate_synthetic_video(&spec)?;
        let gt = video.dataset.ground_truth();
        // A stand-in predictor: the true foreground grown by `dilate` pixels.
        let preds: BTreeMap<usize, BinaryMask> = gt
            .iter()
            .map(|(&i, labels)| {
                let fg = merge_to_binary(labels, None);
                let grown = BinaryMask::from_fn(fg.width(), fg.height(), |x, y| {
                    let r = dilate as i64;
                    (-r..=r).any(|dy| {
                        (-r..=r).any(|dx| {
                            let (px, py) = (x as i64 + dx, y as i64 + dy);
                            px >= 0 && py >= 0 && px < fg.width() as i64 && py < fg.height() as i64
                                && fg.get(px as u32, py as u32)
                        })
                    })
                });
                (i, grown)
            })
            .collect();
        records.push(evaluate_video(&spec.video_id, &preds, gt, None, EmptyPolicy::ScoreOne)?);
    }

    let dir = tempfile::tempdir()?;
    let csv = dir.path().join("report.csv");
    export_report(&records, &csv)?;
    export_plot(&records, &dir.path().join("report.png"))?;
    print!("{}", std::fs::read_to_string(&csv)?);
    assert_eq!(read_report(&csv)?.len(), records.len() + 1);
    Ok(())
}
