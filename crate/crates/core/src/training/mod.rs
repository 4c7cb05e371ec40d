//! Fine-tuning loop: parameter partition, AdamW with mean gradient
//! accumulation, step-decay schedule and warm-up loss masking, run against
//! the small models in [`toy`].

pub mod checkpoint;
mod model;
pub mod toy;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backend::PromptPoint;
use crate::dataset::{merge_to_binary, VideoDataset};
use crate::error::{Error, Result};
use crate::mask::{BinaryMask, LabelMap};
use crate::metrics;

pub use checkpoint::{read_checkpoint, write_checkpoint, CheckpointManifest, FinalMetrics, LogRow};
pub use model::{Gradients, ParamGroup, Params, Tensor, TrainableModel};
pub use toy::{LossWeights, QuadraticBatch, QuadraticToy, ToySample, ToySegmenter};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub accumulation_steps: u64,
    /// In optimizer steps.
    pub decay_interval: u64,
    pub decay_factor: f64,
    pub warmup_frames: usize,
    /// Optimizer steps to run.
    pub max_steps: u64,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub loss: LossWeights,
    /// Carried for trainers with reduced-precision kernels; the reference trainer ignores it.
    pub mixed_precision: bool,
    pub partition: ParamPartition,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            weight_decay: 1e-4,
            accumulation_steps: 4,
            decay_interval: 500,
            decay_factor: 0.5,
            warmup_frames: 5,
            max_steps: 1000,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            loss: LossWeights::default(),
            mixed_precision: false,
            partition: ParamPartition::frozen_encoder(),
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::validation("invalid_config", msg));
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return bad("weight_decay must be non-negative");
        }
        if self.accumulation_steps == 0 {
            return bad("accumulation_steps must be at least 1");
        }
        if self.decay_interval == 0 {
            return bad("decay_interval must be at least 1");
        }
        if !(self.decay_factor > 0.0 && self.decay_factor < 1.0) {
            return bad("decay_factor must lie in (0, 1)");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("betas must lie in [0, 1)");
        }
        if !(self.eps > 0.0) {
            return bad("eps must be positive");
        }
        if !(self.loss.bce >= 0.0 && self.loss.dice >= 0.0 && self.loss.bce + self.loss.dice > 0.0) {
            return bad("loss weights must be non-negative and not both zero");
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::parse("training config", 0, e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// `learning_rate * decay_factor ^ floor(step / decay_interval)`.
pub fn lr_at(optimizer_step: u64, cfg: &TrainingConfig) -> f64 {
    let k = optimizer_step / cfg.decay_interval;
    cfg.learning_rate * cfg.decay_factor.powi(k.min(i32::MAX as u64) as i32)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamPartition {
    pub frozen: BTreeSet<String>,
    pub trainable: BTreeSet<String>,
}

impl ParamPartition {
    /// Image encoder frozen, prompt encoder and mask decoder trained.
    pub fn frozen_encoder() -> Self {
        Self::new([toy::IMAGE_ENCODER], [toy::PROMPT_ENCODER, toy::MASK_DECODER])
    }

    pub fn new<'a>(
        frozen: impl IntoIterator<Item = &'a str>,
        trainable: impl IntoIterator<Item = &'a str>,
    ) -> Self {
        Self {
            frozen: frozen.into_iter().map(String::from).collect(),
            trainable: trainable.into_iter().map(String::from).collect(),
        }
    }

    pub fn freeze_all(model: &impl TrainableModel) -> Self {
        Self {
            frozen: model.params().names().into_iter().collect(),
            trainable: BTreeSet::new(),
        }
    }

    pub fn train_all(model: &impl TrainableModel) -> Self {
        Self {
            frozen: BTreeSet::new(),
            trainable: model.params().names().into_iter().collect(),
        }
    }
}

/// Marks groups frozen or trainable. Every group of the model must be named
/// exactly once.
pub fn partition_parameters(model: &mut impl TrainableModel, spec: &ParamPartition) -> Result<()> {
    let names: BTreeSet<String> = model.params().names().into_iter().collect();
    if let Some(n) = spec.frozen.intersection(&spec.trainable).next() {
        return Err(Error::validation(
            "overlapping_partition",
            format!("group {n:?} is both frozen and trainable"),
        ));
    }
    if let Some(n) = spec.frozen.iter().chain(&spec.trainable).find(|n| !names.contains(*n)) {
        return Err(Error::validation("unknown_param_group", format!("model has no group {n:?}")));
    }
    if let Some(n) = names.iter().find(|n| !spec.frozen.contains(*n) && !spec.trainable.contains(*n)) {
        return Err(Error::validation(
            "incomplete_partition",
            format!("group {n:?} is neither frozen nor trainable"),
        ));
    }
    for g in &mut model.params_mut().groups {
        g.frozen = spec.frozen.contains(&g.name);
    }
    Ok(())
}

/// Optimizer and accumulation state. The AdamW moments are keyed like
/// [`Gradients`].
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub micro_step: u64,
    pub optimizer_step: u64,
    pub current_lr: f64,
    pub accumulated: Gradients,
    pub loss_history: Vec<f64>,
    first_moment: Gradients,
    second_moment: Gradients,
}

impl TrainState {
    pub fn new(model: &impl TrainableModel, cfg: &TrainingConfig) -> Self {
        let zeros = model.params().zero_gradients();
        Self {
            micro_step: 0,
            optimizer_step: 0,
            current_lr: lr_at(0, cfg),
            accumulated: zeros.clone(),
            loss_history: Vec::new(),
            first_moment: zeros.clone(),
            second_moment: zeros,
        }
    }

    /// Adds `grad / accumulation_steps` to the buffers and, when the micro
    /// step count reaches a multiple of `accumulation_steps`, applies one AdamW
    /// update to the trainable groups. Returns whether an update happened.
    pub fn accumulate_and_step(
        &mut self,
        model: &mut impl TrainableModel,
        grad: &Gradients,
        cfg: &TrainingConfig,
    ) -> Result<bool> {
        grad.check_against(model.params())?;
        self.accumulated.check_against(model.params())?;
        self.accumulated.add_scaled(grad, 1.0 / cfg.accumulation_steps as f64);
        self.micro_step += 1;
        if !self.micro_step.is_multiple_of(cfg.accumulation_steps) {
            return Ok(false);
        }
        let lr = lr_at(self.optimizer_step, cfg);
        let t = (self.optimizer_step + 1) as i32;
        let bias1 = 1.0 - cfg.beta1.powi(t);
        let bias2 = 1.0 - cfg.beta2.powi(t);
        for group in model.params_mut().groups.iter_mut().filter(|g| !g.frozen) {
            let g_bufs = &self.accumulated.groups[&group.name];
            let m_bufs = self.first_moment.groups.get_mut(&group.name).expect("moment buffers");
            let v_bufs = self.second_moment.groups.get_mut(&group.name).expect("moment buffers");
            for (((tensor, g), m), v) in group.tensors.iter_mut().zip(g_bufs).zip(m_bufs).zip(v_bufs) {
                for (((p, &g), m), v) in tensor.data.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                    *p -= lr * cfg.weight_decay * *p;
                    *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                    *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                    let m_hat = *m / bias1;
                    let v_hat = *v / bias2;
                    *p -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
                }
            }
        }
        self.accumulated.fill_zero();
        self.optimizer_step += 1;
        self.current_lr = lr_at(self.optimizer_step, cfg);
        Ok(true)
    }

    pub fn check_invariants(&self, cfg: &TrainingConfig) -> Result<()> {
        if self.optimizer_step != self.micro_step / cfg.accumulation_steps {
            return Err(Error::State(format!(
                "optimizer step {} does not match micro step {}",
                self.optimizer_step, self.micro_step
            )));
        }
        if self.current_lr != lr_at(self.optimizer_step, cfg) {
            return Err(Error::State(format!("lr {} is off schedule", self.current_lr)));
        }
        Ok(())
    }
}

/// Per-frame loss weights and, when every frame is masked, a warning.
pub fn apply_warmup_policy(video: &VideoDataset, cfg: &TrainingConfig) -> (Vec<f64>, Option<String>) {
    warmup_weights(video.frame_count(), cfg.warmup_frames, &video.video_id)
}

fn warmup_weights(frames: usize, warmup: usize, video_id: &str) -> (Vec<f64>, Option<String>) {
    let weights: Vec<f64> = (0..frames).map(|i| if i < warmup { 0.0 } else { 1.0 }).collect();
    let warning = (frames > 0 && warmup >= frames).then(|| {
        format!("video {video_id}: all {frames} frames fall inside the {warmup}-frame warm-up and contribute no loss")
    });
    (weights, warning)
}

/// One positive click per class present, on the class pixel nearest its centroid.
pub fn prompts_from_labels(labels: &LabelMap, frame_index: usize) -> Vec<PromptPoint> {
    let classes: BTreeSet<u32> = labels.labels().iter().copied().filter(|&l| l != 0).collect();
    classes
        .into_iter()
        .filter_map(|c| {
            let mask = merge_to_binary(labels, Some(&BTreeSet::from([c])));
            let (cx, cy) = mask.centroid()?;
            let w = mask.width();
            let (i, _) = mask.bits().iter().enumerate().filter(|(_, &b)| b).min_by(|a, b| {
                let d = |i: usize| ((i as u32 % w) as f64 - cx).powi(2) + ((i as u32 / w) as f64 - cy).powi(2);
                d(a.0).total_cmp(&d(b.0))
            })?;
            Some(PromptPoint::positive(c, frame_index, i as u32 % w, i as u32 / w))
        })
        .collect()
}

/// Builds weighted training samples from every ground-truth frame.
pub fn build_samples(data: &[VideoDataset], cfg: &TrainingConfig) -> Result<Vec<ToySample>> {
    let mut samples = Vec::new();
    for video in data {
        let (weights, warning) = apply_warmup_policy(video, cfg);
        if let Some(w) = warning {
            log::warn!("{w}");
        }
        for (&frame, labels) in video.ground_truth() {
            let target = merge_to_binary(labels, None);
            let prompts = prompts_from_labels(labels, frame);
            samples.push(ToySample::new(&*video.frame(frame)?, &target, &prompts, weights[frame]));
        }
    }
    if samples.is_empty() {
        return Err(Error::validation("no_training_data", "no frames with ground truth"));
    }
    Ok(samples)
}

/// Mean IoU of the model's masks against targets on the samples that carry loss.
pub fn training_iou(model: &ToySegmenter, samples: &[ToySample]) -> Option<f64> {
    let scores: Vec<f64> = samples
        .iter()
        .filter(|s| s.weight > 0.0)
        .map(|s| {
            let target = BinaryMask::from_bits(
                s.width as u32,
                s.height as u32,
                s.target.iter().map(|&t| t > 0.5).collect(),
            )
            .expect("sample dims");
            metrics::iou(&model.predict(s), &target).expect("same dims")
        })
        .collect();
    (!scores.is_empty()).then(|| metrics::mean_std(&scores).0)
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub state: TrainState,
    pub log: Vec<LogRow>,
    pub train_iou: Option<f64>,
    pub checkpoint: PathBuf,
    pub manifest: PathBuf,
    pub log_path: PathBuf,
}

/// Runs the loop until `cfg.max_steps` optimizer steps, cycling through the
/// ground-truth frames of `data` in order, then writes the checkpoint, its
/// manifest (`<checkpoint>.toml`) and log (`<checkpoint>.log.csv`).
pub fn train_reference(
    model: &mut ToySegmenter,
    data: &[VideoDataset],
    cfg: &TrainingConfig,
    checkpoint: &Path,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    partition_parameters(model, &cfg.partition)?;
    let samples = build_samples(data, cfg)?;
    let mut state = TrainState::new(model, cfg);
    let mut log = Vec::new();
    let total_micro = cfg.max_steps * cfg.accumulation_steps;
    for i in 0..total_micro {
        let sample = &samples[(i % samples.len() as u64) as usize];
        let (loss, grad) = model.loss_and_grad(sample, cfg.loss);
        if !loss.is_finite() || grad.flat().iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteLoss {
                micro_step: state.micro_step + 1,
                optimizer_step: state.optimizer_step,
                lr: state.current_lr,
                loss,
            });
        }
        let lr = state.current_lr;
        state.accumulate_and_step(model, &grad, cfg)?;
        state.loss_history.push(loss);
        log.push(LogRow {
            micro_step: state.micro_step,
            optimizer_step: state.optimizer_step,
            lr,
            loss,
        });
        if state.optimizer_step.is_multiple_of(50) && state.micro_step.is_multiple_of(cfg.accumulation_steps) {
            log::debug!("step {} lr {lr:e} loss {loss:.5}", state.optimizer_step);
        }
    }
    let train_iou = training_iou(model, &samples);
    let k = cfg.accumulation_steps as usize;
    let final_loss = (state.loss_history.len() >= k)
        .then(|| state.loss_history[state.loss_history.len() - k..].iter().sum::<f64>() / k as f64);

    write_checkpoint(checkpoint, model.params())?;
    let manifest_path = sidecar(checkpoint, "toml");
    let log_path = sidecar(checkpoint, "log.csv");
    CheckpointManifest {
        format_version: checkpoint::CHECKPOINT_VERSION,
        checkpoint: checkpoint.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
        frozen: cfg.partition.frozen.iter().cloned().collect(),
        trainable: cfg.partition.trainable.iter().cloned().collect(),
        config: cfg.clone(),
        metrics: FinalMetrics {
            micro_steps: state.micro_step,
            optimizer_steps: state.optimizer_step,
            final_lr: state.current_lr,
            final_loss,
            train_iou,
        },
    }
    .write(&manifest_path)?;
    checkpoint::write_training_log(&log_path, &log)?;
    Ok(TrainOutcome {
        state,
        log,
        train_iou,
        checkpoint: checkpoint.to_path_buf(),
        manifest: manifest_path,
        log_path,
    })
}

fn sidecar(path: &Path, ext: &str) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".");
    name.push(ext);
    path.with_file_name(name)
}

/// Per-group snapshot for before/after comparisons.
pub fn group_values(model: &impl TrainableModel) -> BTreeMap<String, Vec<f64>> {
    model
        .params()
        .groups
        .iter()
        .map(|g| (g.name.clone(), g.tensors.iter().flat_map(|t| t.data.iter().copied()).collect()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic_video, SceneSpec, ShapeSpec};
    use proptest::prelude::*;

    fn two_shape_fixture(frames: usize) -> VideoDataset {
        let spec = SceneSpec::new("toy", 24, 18, frames)
            .with_background([20, 20, 30])
            .with_shape(ShapeSpec::ellipse(1, [220, 60, 40], [7.0, 8.0], [4.0, 3.5]).moving([0.4, 0.1]))
            .with_shape(ShapeSpec::rectangle(2, [40, 200, 90], [17.0, 10.0], [3.0, 4.0]).moving([-0.3, 0.0]));
        generate_synthetic_video(&spec).unwrap().dataset
    }

    fn fast_config() -> TrainingConfig {
        TrainingConfig {
            learning_rate: 1e-2,
            weight_decay: 1e-4,
            decay_interval: 1000,
            warmup_frames: 2,
            ..TrainingConfig::default()
        }
    }

    #[test]
    fn lr_schedule_examples() {
        let cfg = TrainingConfig::default();
        assert_eq!(lr_at(0, &cfg), 1e-4);
        assert_eq!(lr_at(499, &cfg), 1e-4);
        assert_eq!(lr_at(500, &cfg), 5e-5);
        assert_eq!(lr_at(1000, &cfg), 2.5e-5);
    }

    #[test]
    fn warmup_examples() {
        let (w, warn) = warmup_weights(10, 5, "v");
        assert_eq!(w, [0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
        assert!(warn.is_none());
        let (w, warn) = warmup_weights(3, 5, "v");
        assert_eq!(w, [0.0; 3]);
        assert!(warn.is_some());
        let (w, _) = warmup_weights(4, 0, "v");
        assert_eq!(w, [1.0; 4]);
    }

    #[test]
    fn partition_errors() {
        let mut m = ToySegmenter::new(0);
        let unknown = ParamPartition::new(["image_encoder", "backbone"], ["prompt_encoder", "mask_decoder"]);
        assert_eq!(partition_parameters(&mut m, &unknown).unwrap_err().code(), "unknown_param_group");
        let partial = ParamPartition::new(["image_encoder"], ["mask_decoder"]);
        assert_eq!(partition_parameters(&mut m, &partial).unwrap_err().code(), "incomplete_partition");
        let overlap = ParamPartition::new(["image_encoder", "mask_decoder"], ["prompt_encoder", "mask_decoder"]);
        assert_eq!(partition_parameters(&mut m, &overlap).unwrap_err().code(), "overlapping_partition");
        partition_parameters(&mut m, &ParamPartition::frozen_encoder()).unwrap();
        let frozen: Vec<_> = m.params().groups.iter().filter(|g| g.frozen).map(|g| g.name.as_str()).collect();
        assert_eq!(frozen, ["image_encoder"]);
    }

    #[test]
    fn eight_micro_steps_make_two_updates() {
        let cfg = TrainingConfig::default();
        let mut model = QuadraticToy::new(vec![1.0, -1.0]);
        let mut state = TrainState::new(&model, &cfg);
        let batch = QuadraticBatch { rows: vec![vec![1.0, 2.0]], targets: vec![0.5] };
        let mut updates = 0;
        for _ in 0..8 {
            let (_, g) = model.loss_and_grad(&batch);
            updates += state.accumulate_and_step(&mut model, &g, &cfg).unwrap() as u32;
        }
        assert_eq!((updates, state.optimizer_step, state.micro_step), (2, 2, 8));
    }

    #[test]
    fn accumulation_one_updates_every_step() {
        let cfg = TrainingConfig { accumulation_steps: 1, ..TrainingConfig::default() };
        let mut model = QuadraticToy::new(vec![0.5]);
        let mut state = TrainState::new(&model, &cfg);
        let batch = QuadraticBatch { rows: vec![vec![1.0]], targets: vec![2.0] };
        for i in 1..=3 {
            let (_, g) = model.loss_and_grad(&batch);
            assert!(state.accumulate_and_step(&mut model, &g, &cfg).unwrap());
            assert_eq!(state.optimizer_step, i);
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let cfg = TrainingConfig::default();
        let mut model = QuadraticToy::new(vec![0.5, 1.0]);
        let mut state = TrainState::new(&model, &cfg);
        let mut g = model.params().zero_gradients();
        g.groups.get_mut("weights").unwrap()[0].push(0.0);
        let err = state.accumulate_and_step(&mut model, &g, &cfg).unwrap_err();
        assert_eq!(err.code(), "gradient_shape_mismatch");
        assert_eq!(state.micro_step, 0);
    }

    /// AdamW as written in the reference optimizer documentation, for one scalar.
    fn adamw_oracle(p: f64, grads: &[f64], cfg: &TrainingConfig) -> f64 {
        let (mut p, mut m, mut v) = (p, 0.0, 0.0);
        for (i, &g) in grads.iter().enumerate() {
            let t = i as i32 + 1;
            let lr = cfg.learning_rate * cfg.decay_factor.powi((i as u64 / cfg.decay_interval) as i32);
            p *= 1.0 - lr * cfg.weight_decay;
            m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
            v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
            p -= lr * (m / (1.0 - cfg.beta1.powi(t))) / ((v / (1.0 - cfg.beta2.powi(t))).sqrt() + cfg.eps);
        }
        p
    }

    #[test]
    fn adamw_update_matches_oracle() {
        let cfg = TrainingConfig { accumulation_steps: 1, decay_interval: 2, learning_rate: 0.1, ..TrainingConfig::default() };
        let mut model = QuadraticToy::new(vec![0.8]);
        let mut state = TrainState::new(&model, &cfg);
        let seq = [0.3, -1.5, 0.02, 2.0, -0.7];
        for &g in &seq {
            let mut grad = model.params().zero_gradients();
            grad.groups.get_mut("weights").unwrap()[0][0] = g;
            state.accumulate_and_step(&mut model, &grad, &cfg).unwrap();
        }
        assert!((model.weights()[0] - adamw_oracle(0.8, &seq, &cfg)).abs() < 1e-14);
    }

    #[test]
    fn accumulated_mean_equals_full_batch() {
        let cfg = TrainingConfig { learning_rate: 0.05, ..TrainingConfig::default() };
        let rows: Vec<Vec<f64>> = (0..8).map(|i| vec![1.0, i as f64 * 0.5 - 1.0, (i % 3) as f64]).collect();
        let targets: Vec<f64> = (0..8).map(|i| (i as f64).sin()).collect();
        let full = QuadraticBatch { rows: rows.clone(), targets: targets.clone() };

        let mut whole = QuadraticToy::new(vec![0.1, 0.2, -0.3]);
        let full_cfg = TrainingConfig { accumulation_steps: 1, ..cfg.clone() };
        let mut whole_state = TrainState::new(&whole, &full_cfg);
        let mut split = whole.clone();
        let mut split_state = TrainState::new(&split, &cfg);
        for _ in 0..5 {
            let (_, g) = whole.loss_and_grad(&full);
            whole_state.accumulate_and_step(&mut whole, &g, &full_cfg).unwrap();
            for c in 0..4 {
                let micro = QuadraticBatch {
                    rows: rows[2 * c..2 * c + 2].to_vec(),
                    targets: targets[2 * c..2 * c + 2].to_vec(),
                };
                let (_, g) = split.loss_and_grad(&micro);
                split_state.accumulate_and_step(&mut split, &g, &cfg).unwrap();
            }
        }
        for (a, b) in whole.weights().iter().zip(split.weights()) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn default_partition_trains_only_prompt_and_decoder() {
        let data = [two_shape_fixture(6)];
        let mut model = ToySegmenter::new(4);
        let before = group_values(&model);
        let dir = tempfile::tempdir().unwrap();
        let cfg = TrainingConfig { max_steps: 20, ..fast_config() };
        train_reference(&mut model, &data, &cfg, &dir.path().join("ck.bin")).unwrap();
        let after = group_values(&model);
        assert_eq!(before["image_encoder"], after["image_encoder"]);
        assert_ne!(before["prompt_encoder"], after["prompt_encoder"]);
        assert_ne!(before["mask_decoder"], after["mask_decoder"]);
    }

    #[test]
    fn freezing_everything_leaves_parameters_bit_identical() {
        let data = [two_shape_fixture(4)];
        let mut model = ToySegmenter::new(4);
        let before = group_values(&model);
        let cfg = TrainingConfig { max_steps: 10, partition: ParamPartition::freeze_all(&model), ..fast_config() };
        let dir = tempfile::tempdir().unwrap();
        train_reference(&mut model, &data, &cfg, &dir.path().join("ck.bin")).unwrap();
        let after = group_values(&model);
        for (name, values) in &before {
            let same = values.iter().zip(&after[name]).all(|(a, b)| a.to_bits() == b.to_bits());
            assert!(same, "group {name} changed");
        }
    }

    #[test]
    fn loss_trends_down_when_training_everything() {
        let data = [two_shape_fixture(6)];
        let mut model = ToySegmenter::new(7);
        let cfg = TrainingConfig {
            max_steps: 50,
            warmup_frames: 0,
            partition: ParamPartition::train_all(&model),
            ..fast_config()
        };
        let samples = build_samples(&data, &cfg).unwrap();
        let dataset_loss = |m: &ToySegmenter| samples.iter().map(|s| m.loss(s, cfg.loss)).sum::<f64>();
        let mut curve = vec![dataset_loss(&model)];
        let dir = tempfile::tempdir().unwrap();
        for chunk in 0..5 {
            let c = TrainingConfig { max_steps: 10, seed: chunk, ..cfg.clone() };
            train_reference(&mut model, &data, &c, &dir.path().join("ck.bin")).unwrap();
            curve.push(dataset_loss(&model));
        }
        for w in curve.windows(2) {
            assert!(w[1] < w[0] * 1.02, "loss curve {curve:?}");
        }
        assert!(curve[5] < 0.7 * curve[0], "loss curve {curve:?}");
    }

    #[test]
    fn three_hundred_steps_reach_high_training_iou() {
        let data = [two_shape_fixture(12)];
        let mut model = ToySegmenter::new(11);
        let dir = tempfile::tempdir().unwrap();
        let cfg = TrainingConfig { max_steps: 300, ..fast_config() };
        let out = train_reference(&mut model, &data, &cfg, &dir.path().join("ck.bin")).unwrap();
        let iou = out.train_iou.unwrap();
        assert!(iou >= 0.8, "training IoU {iou}");
    }

    #[test]
    fn zero_steps_write_the_initial_parameters() {
        let data = [two_shape_fixture(3)];
        let mut model = ToySegmenter::new(2);
        let init = model.params().clone();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.bin");
        let cfg = TrainingConfig { max_steps: 0, ..fast_config() };
        let out = train_reference(&mut model, &data, &cfg, &path).unwrap();
        assert!(out.state.loss_history.is_empty());
        let mut expected = checkpoint::round_to_f32(&init);
        partition_parameters(&mut expected, &cfg.partition).unwrap();
        assert_eq!(read_checkpoint(&path).unwrap(), expected);
        assert!(out.manifest.exists() && out.log_path.exists());
    }

    #[test]
    fn loss_history_has_one_entry_per_micro_step() {
        let data = [two_shape_fixture(5)];
        let mut model = ToySegmenter::new(2);
        let dir = tempfile::tempdir().unwrap();
        let cfg = TrainingConfig { max_steps: 3, ..fast_config() };
        let out = train_reference(&mut model, &data, &cfg, &dir.path().join("ck.bin")).unwrap();
        assert_eq!(out.state.loss_history.len(), 12);
        assert_eq!(checkpoint::read_training_log(&out.log_path).unwrap(), out.log);
        let manifest = CheckpointManifest::read(&out.manifest).unwrap();
        assert_eq!(manifest.config, cfg);
        assert_eq!(manifest.metrics.optimizer_steps, 3);
    }

    #[test]
    fn non_finite_loss_aborts() {
        let data = [two_shape_fixture(3)];
        let mut model = ToySegmenter::new(2);
        model.params_mut().group_mut("mask_decoder").unwrap().tensors[3].data[0] = f64::NAN;
        let dir = tempfile::tempdir().unwrap();
        let cfg = TrainingConfig { max_steps: 2, warmup_frames: 0, ..fast_config() };
        let err = train_reference(&mut model, &data, &cfg, &dir.path().join("ck.bin")).unwrap_err();
        assert!(matches!(err, Error::NonFiniteLoss { micro_step: 1, optimizer_step: 0, .. }), "{err}");
    }

    #[test]
    fn config_validation() {
        assert!(TrainingConfig::default().validate().is_ok());
        for bad in [
            TrainingConfig { accumulation_steps: 0, ..Default::default() },
            TrainingConfig { decay_factor: 1.0, ..Default::default() },
            TrainingConfig { learning_rate: 0.0, ..Default::default() },
            TrainingConfig { decay_interval: 0, ..Default::default() },
        ] {
            assert_eq!(bad.validate().unwrap_err().code(), "invalid_config");
        }
        let cfg = TrainingConfig::from_toml("max_steps = 7\n[partition]\nfrozen = []\ntrainable = [\"a\"]\n").unwrap();
        assert_eq!(cfg.max_steps, 7);
        assert_eq!(cfg.learning_rate, 1e-4);
    }

    proptest! {
        #[test]
        fn state_invariants_hold_after_every_call(
            accum in 1u64..6,
            interval in 1u64..5,
            factor in 0.1f64..0.9,
            calls in 0usize..40,
        ) {
            let cfg = TrainingConfig {
                accumulation_steps: accum,
                decay_interval: interval,
                decay_factor: factor,
                ..TrainingConfig::default()
            };
            let mut model = QuadraticToy::new(vec![0.3, -0.2]);
            let mut state = TrainState::new(&model, &cfg);
            let batch = QuadraticBatch { rows: vec![vec![1.0, 0.5]], targets: vec![1.0] };
            state.check_invariants(&cfg).unwrap();
            for _ in 0..calls {
                let (_, g) = model.loss_and_grad(&batch);
                state.accumulate_and_step(&mut model, &g, &cfg).unwrap();
                state.check_invariants(&cfg).unwrap();
                prop_assert_eq!(state.optimizer_step, state.micro_step / accum);
            }
        }

        #[test]
        fn lr_is_piecewise_constant_and_non_increasing(step in 0u64..5000, interval in 1u64..700) {
            let cfg = TrainingConfig { decay_interval: interval, ..TrainingConfig::default() };
            prop_assert!(lr_at(step + 1, &cfg) <= lr_at(step, &cfg));
            let changes = lr_at(step + 1, &cfg) != lr_at(step, &cfg);
            prop_assert_eq!(changes, (step + 1) % interval == 0);
        }
    }
}
