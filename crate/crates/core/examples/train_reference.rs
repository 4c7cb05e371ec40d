//! Fine-tuning the toy segmenter with the frozen-encoder recipe: AdamW,
//! 4-step gradient accumulation, step-decay learning rate and warm-up frames
//! excluded from the loss.

use annotkit::dataset::{generate_synthetic_video, SceneSpec, ShapeSpec};
use annotkit::training::{group_values, lr_at, read_checkpoint, train_reference, ToySegmenter, TrainingConfig};

fn main() -> anyhow::Result<()> {
    let spec = SceneSpec::new("train", 24, 18, 12)
        .with_background([20, 20, 30])
        .with_shape(ShapeSpec::ellipse(1, [220, 60, 40], [7.0, 8.0], [4.0, 3.5]).moving([0.4, 0.1]))
        .with_shape(ShapeSpec::rectangle(2, [40, 200, 90], [17.0, 10.0], [3.0, 4.0]).moving([-0.3, 0.0]));
    let data = [generate_synthetic_video(&spec)?.dataset];

    let cfg = TrainingConfig {
        learning_rate: 1e-2,
        decay_interval: 100,
        warmup_frames: 2,
        max_steps: 300,
        ..TrainingConfig::default()
    };
    for step in [0, 99, 100, 200, 299] {
        println!("lr at step {step:>3}: {:e}", lr_at(step, &cfg));
    }

    let mut model = ToySegmenter::new(11);
    let before = group_values(&model);
    let dir = tempfile::tempdir()?;
    let out = train_reference(&mut model, &data, &cfg, &dir.path().join("toy.ckpt"))?;
    let after = group_values(&model);
    for (group, values) in &before {
        println!("{group:>15}: {}", if *values == after[group] { "unchanged" } else { "updated" });
    }
    let first = &out.log[..4];
    let last = &out.log[out.log.len() - 4..];
    let mean = |rows: &[annotkit::training::LogRow]| rows.iter().map(|r| r.loss).sum::<f64>() / rows.len() as f64;
    println!("loss {:.4} -> {:.4}", mean(first), mean(last));
    println!(
        "{} micro steps, {} optimizer steps, training IoU {:.3}",
        out.state.micro_step,
        out.state.optimizer_step,
        out.train_iou.unwrap_or(0.0)
    );
    println!("checkpoint holds {} groups", read_checkpoint(&out.checkpoint)?.groups.len());
    Ok(())
}
