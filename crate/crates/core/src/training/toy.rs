//! Small trainable models used to exercise the fine-tuning loop.
//!
//! [`ToySegmenter`] mirrors the three-part layout of a promptable
//! segmenter: an image encoder over RGB, a prompt encoder over a rasterized
//! click heat map, and a mask decoder producing per-pixel logits.
//! [`QuadraticToy`] is a linear least-squares model with closed-form
//! gradients, used for exact accumulation checks.

use image::RgbImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{Gradients, ParamGroup, Params, Tensor, TrainableModel};
use crate::backend::PromptPoint;
use crate::mask::BinaryMask;

pub const IMAGE_ENCODER: &str = "image_encoder";
pub const PROMPT_ENCODER: &str = "prompt_encoder";
pub const MASK_DECODER: &str = "mask_decoder";

const IMAGE_FEATURES: usize = 6;
const PROMPT_FEATURES: usize = 2;
const HIDDEN: usize = 6;
const KERNEL: usize = 3;

/// Weights of the BCE and soft-Dice terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub bce: f64,
    pub dice: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { bce: 1.0, dice: 1.0 }
    }
}

const DICE_SMOOTH: f64 = 1.0;

/// One training example: a frame, its click heat map and a binary target.
#[derive(Clone, Debug, PartialEq)]
pub struct ToySample {
    pub width: usize,
    pub height: usize,
    /// Channel-major RGB in `[0, 1]`.
    pub image: Vec<f64>,
    /// Positive clicks add a Gaussian bump, negative clicks subtract one.
    pub heat: Vec<f64>,
    pub target: Vec<f64>,
    pub weight: f64,
}

pub const HEAT_SIGMA: f64 = 3.0;

impl ToySample {
    pub fn new(frame: &RgbImage, target: &BinaryMask, prompts: &[PromptPoint], weight: f64) -> Self {
        let (w, h) = (frame.width() as usize, frame.height() as usize);
        let mut image = vec![0.0; 3 * w * h];
        for (x, y, px) in frame.enumerate_pixels() {
            for c in 0..3 {
                image[c * w * h + y as usize * w + x as usize] = px[c] as f64 / 255.0;
            }
        }
        let mut heat = vec![0.0; w * h];
        for p in prompts {
            let sign = if p.polarity.is_positive() { 1.0 } else { -1.0 };
            for y in 0..h {
                for x in 0..w {
                    let d2 = (x as f64 - p.x as f64).powi(2) + (y as f64 - p.y as f64).powi(2);
                    heat[y * w + x] += sign * (-d2 / (2.0 * HEAT_SIGMA * HEAT_SIGMA)).exp();
                }
            }
        }
        for v in &mut heat {
            *v = v.clamp(-1.0, 1.0);
        }
        let target = target.bits().iter().map(|&b| b as u8 as f64).collect();
        Self {
            width: w,
            height: h,
            image,
            heat,
            target,
            weight,
        }
    }
}

/// Same-padded 2-D convolution over channel-major data.
fn conv2d(input: &[f64], c_in: usize, h: usize, w: usize, weight: &[f64], bias: &[f64], c_out: usize, k: usize) -> Vec<f64> {
    let r = (k / 2) as isize;
    let mut out = vec![0.0; c_out * h * w];
    for o in 0..c_out {
        let plane = &mut out[o * h * w..(o + 1) * h * w];
        plane.fill(bias[o]);
        for i in 0..c_in {
            let src = &input[i * h * w..(i + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let wv = weight[((o * c_in + i) * k + ky) * k + kx];
                    let (dy, dx) = (ky as isize - r, kx as isize - r);
                    for y in 0..h {
                        let sy = y as isize + dy;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        for x in 0..w {
                            let sx = x as isize + dx;
                            if sx < 0 || sx >= w as isize {
                                continue;
                            }
                            plane[y * w + x] += wv * src[sy as usize * w + sx as usize];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Returns `(d_weight, d_bias, d_input)`; `d_input` is skipped when not needed.
#[allow(clippy::too_many_arguments)]
fn conv2d_backward(
    input: &[f64],
    c_in: usize,
    h: usize,
    w: usize,
    weight: &[f64],
    c_out: usize,
    k: usize,
    d_out: &[f64],
    want_input: bool,
) -> (Vec<f64>, Vec<f64>, Option<Vec<f64>>) {
    let r = (k / 2) as isize;
    let mut d_w = vec![0.0; weight.len()];
    let mut d_b = vec![0.0; c_out];
    let mut d_in = want_input.then(|| vec![0.0; c_in * h * w]);
    for o in 0..c_out {
        let g = &d_out[o * h * w..(o + 1) * h * w];
        d_b[o] = g.iter().sum();
        for i in 0..c_in {
            let src = &input[i * h * w..(i + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let widx = ((o * c_in + i) * k + ky) * k + kx;
                    let (dy, dx) = (ky as isize - r, kx as isize - r);
                    let mut acc = 0.0;
                    for y in 0..h {
                        let sy = y as isize + dy;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        for x in 0..w {
                            let sx = x as isize + dx;
                            if sx < 0 || sx >= w as isize {
                                continue;
                            }
                            let s = sy as usize * w + sx as usize;
                            acc += g[y * w + x] * src[s];
                            if let Some(d) = d_in.as_mut() {
                                d[i * h * w + s] += g[y * w + x] * weight[widx];
                            }
                        }
                    }
                    d_w[widx] = acc;
                }
            }
        }
    }
    (d_w, d_b, d_in)
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

struct Activations {
    image_feat: Vec<f64>,
    prompt_feat: Vec<f64>,
    joint: Vec<f64>,
    hidden: Vec<f64>,
    logits: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ToySegmenter {
    params: Params,
}

fn init_tensor(rng: &mut ChaCha8Rng, name: &str, shape: &[usize], fan_in: usize) -> Tensor {
    let a = (3.0 / fan_in as f64).sqrt();
    let mut t = Tensor::zeros(name, shape);
    for v in &mut t.data {
        *v = rng.gen_range(-a..a);
    }
    t
}

impl ToySegmenter {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k2 = KERNEL * KERNEL;
        let joint = IMAGE_FEATURES + PROMPT_FEATURES;
        let groups = vec![
            ParamGroup {
                name: IMAGE_ENCODER.into(),
                tensors: vec![
                    init_tensor(&mut rng, "conv.weight", &[IMAGE_FEATURES, 3, KERNEL, KERNEL], 3 * k2),
                    init_tensor(&mut rng, "conv.bias", &[IMAGE_FEATURES], 3 * k2),
                ],
                frozen: false,
            },
            ParamGroup {
                name: PROMPT_ENCODER.into(),
                tensors: vec![
                    init_tensor(&mut rng, "conv.weight", &[PROMPT_FEATURES, 1, KERNEL, KERNEL], k2),
                    init_tensor(&mut rng, "conv.bias", &[PROMPT_FEATURES], k2),
                ],
                frozen: false,
            },
            ParamGroup {
                name: MASK_DECODER.into(),
                tensors: vec![
                    init_tensor(&mut rng, "hidden.weight", &[HIDDEN, joint, 1, 1], joint),
                    init_tensor(&mut rng, "hidden.bias", &[HIDDEN], joint),
                    init_tensor(&mut rng, "out.weight", &[1, HIDDEN, 1, 1], HIDDEN),
                    Tensor::zeros("out.bias", &[1]),
                ],
                frozen: false,
            },
        ];
        Self { params: Params { groups } }
    }

    pub fn from_params(params: Params) -> Self {
        Self { params }
    }

    fn tensor(&self, group: &str, idx: usize) -> &[f64] {
        &self.params.group(group).expect("toy group").tensors[idx].data
    }

    fn forward(&self, s: &ToySample) -> Activations {
        let (h, w) = (s.height, s.width);
        let joint_ch = IMAGE_FEATURES + PROMPT_FEATURES;
        let mut image_feat = conv2d(&s.image, 3, h, w, self.tensor(IMAGE_ENCODER, 0), self.tensor(IMAGE_ENCODER, 1), IMAGE_FEATURES, KERNEL);
        image_feat.iter_mut().for_each(|v| *v = v.tanh());
        let mut prompt_feat = conv2d(&s.heat, 1, h, w, self.tensor(PROMPT_ENCODER, 0), self.tensor(PROMPT_ENCODER, 1), PROMPT_FEATURES, KERNEL);
        prompt_feat.iter_mut().for_each(|v| *v = v.tanh());
        let mut joint = image_feat.clone();
        joint.extend_from_slice(&prompt_feat);
        let mut hidden = conv2d(&joint, joint_ch, h, w, self.tensor(MASK_DECODER, 0), self.tensor(MASK_DECODER, 1), HIDDEN, 1);
        hidden.iter_mut().for_each(|v| *v = v.tanh());
        let logits = conv2d(&hidden, HIDDEN, h, w, self.tensor(MASK_DECODER, 2), self.tensor(MASK_DECODER, 3), 1, 1);
        Activations {
            image_feat,
            prompt_feat,
            joint,
            hidden,
            logits,
        }
    }

    pub fn logits(&self, s: &ToySample) -> Vec<f64> {
        self.forward(s).logits
    }

    pub fn predict(&self, s: &ToySample) -> BinaryMask {
        let bits = self.forward(s).logits.iter().map(|&z| z > 0.0).collect();
        BinaryMask::from_bits(s.width as u32, s.height as u32, bits).expect("sample dims")
    }

    /// Weighted `bce * BCE + dice * (1 - softDice)` from logits; the unweighted
    /// per-logit gradient is returned alongside.
    fn loss_from_logits(logits: &[f64], target: &[f64], lw: LossWeights) -> (f64, Vec<f64>) {
        let n = logits.len() as f64;
        let probs: Vec<f64> = logits.iter().map(|&z| sigmoid(z)).collect();
        let bce = logits.iter().zip(target).map(|(&z, &y)| softplus(z) - y * z).sum::<f64>() / n;
        let inter: f64 = probs.iter().zip(target).map(|(p, y)| p * y).sum();
        let denom = probs.iter().sum::<f64>() + target.iter().sum::<f64>() + DICE_SMOOTH;
        let dice = (2.0 * inter + DICE_SMOOTH) / denom;
        let loss = lw.bce * bce + lw.dice * (1.0 - dice);
        let grad = probs
            .iter()
            .zip(target)
            .map(|(&p, &y)| {
                let d_bce = (p - y) / n;
                let d_dice_dp = -(2.0 * y * denom - (2.0 * inter + DICE_SMOOTH)) / (denom * denom);
                lw.bce * d_bce + lw.dice * d_dice_dp * p * (1.0 - p)
            })
            .collect();
        (loss, grad)
    }

    /// Loss (scaled by the sample weight) and gradients for the trainable groups.
    pub fn loss_and_grad(&self, s: &ToySample, lw: LossWeights) -> (f64, Gradients) {
        let act = self.forward(s);
        let (raw_loss, d_logits) = Self::loss_from_logits(&act.logits, &s.target, lw);
        let mut grads = self.params.zero_gradients();
        if s.weight == 0.0 {
            return (0.0, grads);
        }
        let (h, w) = (s.height, s.width);
        let joint_ch = IMAGE_FEATURES + PROMPT_FEATURES;
        let d_logits: Vec<f64> = d_logits.iter().map(|g| g * s.weight).collect();
        let trains = |name: &str| grads.groups.contains_key(name);
        let (train_image, train_prompt, train_decoder) = (trains(IMAGE_ENCODER), trains(PROMPT_ENCODER), trains(MASK_DECODER));
        let need_joint = train_image || train_prompt;

        let (d_out_w, d_out_b, d_hidden) =
            conv2d_backward(&act.hidden, HIDDEN, h, w, self.tensor(MASK_DECODER, 2), 1, 1, &d_logits, need_joint);
        let mut d_hidden_pre = vec![0.0; HIDDEN * h * w];
        if let Some(dh) = &d_hidden {
            for ((d, g), a) in d_hidden_pre.iter_mut().zip(dh).zip(&act.hidden) {
                *d = g * (1.0 - a * a);
            }
        }
        let (d_hid_w, d_hid_b, d_joint) = if train_decoder || need_joint {
            conv2d_backward(&act.joint, joint_ch, h, w, self.tensor(MASK_DECODER, 0), HIDDEN, 1, &d_hidden_pre, need_joint)
        } else {
            (Vec::new(), Vec::new(), None)
        };
        if train_decoder {
            grads.groups.insert(MASK_DECODER.into(), vec![d_hid_w, d_hid_b, d_out_w, d_out_b]);
        }
        if let Some(dj) = d_joint {
            let split = IMAGE_FEATURES * h * w;
            if train_image {
                let d_pre: Vec<f64> = dj[..split].iter().zip(&act.image_feat).map(|(g, a)| g * (1.0 - a * a)).collect();
                let (dw, db, _) = conv2d_backward(&s.image, 3, h, w, self.tensor(IMAGE_ENCODER, 0), IMAGE_FEATURES, KERNEL, &d_pre, false);
                grads.groups.insert(IMAGE_ENCODER.into(), vec![dw, db]);
            }
            if train_prompt {
                let d_pre: Vec<f64> = dj[split..].iter().zip(&act.prompt_feat).map(|(g, a)| g * (1.0 - a * a)).collect();
                let (dw, db, _) = conv2d_backward(&s.heat, 1, h, w, self.tensor(PROMPT_ENCODER, 0), PROMPT_FEATURES, KERNEL, &d_pre, false);
                grads.groups.insert(PROMPT_ENCODER.into(), vec![dw, db]);
            }
        }
        (raw_loss * s.weight, grads)
    }

    /// Loss only; used by finite-difference checks.
    pub fn loss(&self, s: &ToySample, lw: LossWeights) -> f64 {
        Self::loss_from_logits(&self.forward(s).logits, &s.target, lw).0 * s.weight
    }
}

impl TrainableModel for ToySegmenter {
    fn params(&self) -> &Params {
        &self.params
    }

    fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }
}

/// `0.5 * mean_i (a_i · w - b_i)^2` over rows `a_i` of a design matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticToy {
    params: Params,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticBatch {
    pub rows: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}

impl QuadraticToy {
    pub fn new(weights: Vec<f64>) -> Self {
        let n = weights.len();
        Self {
            params: Params {
                groups: vec![ParamGroup {
                    name: "weights".into(),
                    tensors: vec![Tensor {
                        name: "w".into(),
                        shape: vec![n],
                        data: weights,
                    }],
                    frozen: false,
                }],
            },
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.params.groups[0].tensors[0].data
    }

    pub fn loss_and_grad(&self, batch: &QuadraticBatch) -> (f64, Gradients) {
        let w = self.weights();
        let m = batch.rows.len() as f64;
        let mut grad = vec![0.0; w.len()];
        let mut loss = 0.0;
        for (row, &b) in batch.rows.iter().zip(&batch.targets) {
            let r: f64 = row.iter().zip(w).map(|(a, x)| a * x).sum::<f64>() - b;
            loss += 0.5 * r * r / m;
            for (g, a) in grad.iter_mut().zip(row) {
                *g += r * a / m;
            }
        }
        let mut grads = self.params.zero_gradients();
        if let Some(bufs) = grads.groups.get_mut("weights") {
            bufs[0] = grad;
        }
        (loss, grads)
    }
}

impl TrainableModel for QuadraticToy {
    fn params(&self) -> &Params {
        &self.params
    }

    fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }
}
