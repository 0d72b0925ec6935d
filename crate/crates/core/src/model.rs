//! Per-pixel classifier: features → (optional ReLU hidden layer) → softmax,
//! with an analytic backward pass and momentum SGD.
//!
//! Parameters live in one flat vector so optimizers, checkpoints and
//! finite-difference checks all see the same layout:
//! `[W1 (h×d), b1 (h), W2 (K×h), b2 (K)]` with a hidden layer, otherwise
//! `[W (K×d), b (K)]`. Matrices are row-major with one row per output unit.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{arg, shape, Error, Result};
use crate::types::{GridImage, SoftSegmentation};

/// How pixel features are built from an image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    /// Number of random Fourier features appended to the base features.
    pub fourier_count: usize,
    /// Standard deviation of the Fourier frequencies.
    pub fourier_scale: f64,
    pub seed: u64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            fourier_count: 32,
            fourier_scale: 4.0,
            seed: 17,
        }
    }
}

/// Row-major per-pixel feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelFeatures {
    width: usize,
    height: usize,
    dim: usize,
    data: Vec<f64>,
}

impl PixelFeatures {
    pub fn new(width: usize, height: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * dim {
            return shape("feature buffer does not match width*height*dim");
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite feature".into()));
        }
        Ok(Self {
            width,
            height,
            dim,
            data,
        })
    }

    /// Base features are the intensity channels and the normalized
    /// coordinates `(x / width, y / height)`; `cos(ω·f + φ)` Fourier features
    /// of the base vector are appended, with `ω`, `φ` drawn from `config.seed`.
    pub fn from_image(image: &GridImage, config: &FeatureConfig) -> Result<Self> {
        let base_dim = image.channels() + 2;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let normal = Normal::new(0.0, config.fourier_scale)
            .map_err(|e| Error::Argument(format!("fourier_scale: {e}")))?;
        let phase = Uniform::new(0.0, std::f64::consts::TAU)
            .map_err(|e| Error::Argument(format!("phase: {e}")))?;
        let freqs: Vec<f64> = (0..config.fourier_count * base_dim)
            .map(|_| normal.sample(&mut rng))
            .collect();
        let phases: Vec<f64> = (0..config.fourier_count)
            .map(|_| phase.sample(&mut rng))
            .collect();
        let dim = base_dim + config.fourier_count;
        let (w, h) = (image.width(), image.height());
        let mut data = Vec::with_capacity(w * h * dim);
        let mut base = vec![0.0; base_dim];
        for y in 0..h {
            for x in 0..w {
                let p = y * w + x;
                base[..image.channels()].copy_from_slice(image.pixel(p));
                base[image.channels()] = x as f64 / w as f64;
                base[image.channels() + 1] = y as f64 / h as f64;
                data.extend_from_slice(&base);
                for (j, ph) in phases.iter().enumerate() {
                    let om = &freqs[j * base_dim..(j + 1) * base_dim];
                    let arg: f64 = om.iter().zip(&base).map(|(a, b)| a * b).sum::<f64>() + ph;
                    data.push(arg.cos());
                }
            }
        }
        Self::new(w, h, dim, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn num_pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, p: usize) -> &[f64] {
        &self.data[p * self.dim..(p + 1) * self.dim]
    }
}

/// Network weights in the flat layout described in the module docs.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    input_dim: usize,
    hidden: Option<usize>,
    num_labels: usize,
    theta: Vec<f64>,
}

fn param_count(input_dim: usize, hidden: Option<usize>, k: usize) -> usize {
    match hidden {
        Some(h) => h * input_dim + h + k * h + k,
        None => k * input_dim + k,
    }
}

impl ModelParams {
    pub fn zeros(input_dim: usize, hidden: Option<usize>, num_labels: usize) -> Result<Self> {
        if input_dim == 0 || num_labels == 0 || hidden == Some(0) {
            return arg("model dimensions must be positive");
        }
        Ok(Self {
            input_dim,
            hidden,
            num_labels,
            theta: vec![0.0; param_count(input_dim, hidden, num_labels)],
        })
    }

    /// Gaussian weights with standard deviation `0.1 / √fan_in`, zero biases.
    pub fn init(input_dim: usize, hidden: Option<usize>, num_labels: usize, seed: u64) -> Result<Self> {
        let mut params = Self::zeros(input_dim, hidden, num_labels)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |theta: &mut [f64], fan_in: usize| {
            let n = Normal::new(0.0, 0.1 / (fan_in as f64).sqrt()).expect("positive std");
            for v in theta {
                *v = n.sample(&mut rng);
            }
        };
        let layout = params.layout();
        match hidden {
            Some(_) => {
                let (w1, w2) = (layout.w1.clone(), layout.w2.clone());
                fill(&mut params.theta[w1], input_dim);
                fill(&mut params.theta[w2], hidden.unwrap_or(1));
            }
            None => {
                let w = layout.w2.clone();
                fill(&mut params.theta[w], input_dim);
            }
        }
        Ok(params)
    }

    pub fn from_flat(input_dim: usize, hidden: Option<usize>, num_labels: usize, theta: Vec<f64>) -> Result<Self> {
        let mut p = Self::zeros(input_dim, hidden, num_labels)?;
        if theta.len() != p.theta.len() {
            return shape(format!(
                "expected {} parameters, got {}",
                p.theta.len(),
                theta.len()
            ));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite parameter".into()));
        }
        p.theta = theta;
        Ok(p)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden(&self) -> Option<usize> {
        self.hidden
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn theta_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    fn layout(&self) -> Layout {
        let (d, k) = (self.input_dim, self.num_labels);
        match self.hidden {
            Some(h) => {
                let w1 = 0..h * d;
                let b1 = w1.end..w1.end + h;
                let w2 = b1.end..b1.end + k * h;
                let b2 = w2.end..w2.end + k;
                Layout { w1, b1, w2, b2 }
            }
            None => Layout {
                w1: 0..0,
                b1: 0..0,
                w2: 0..k * d,
                b2: k * d..k * d + k,
            },
        }
    }

    fn check_features(&self, features: &PixelFeatures) -> Result<()> {
        if features.dim() != self.input_dim {
            return shape(format!(
                "features have dim {}, model expects {}",
                features.dim(),
                self.input_dim
            ));
        }
        Ok(())
    }

    /// Pre-softmax scores (and hidden activations, if any) for pixel `p`.
    fn pixel_scores(&self, x: &[f64], hidden_out: &mut [f64], scores: &mut [f64]) {
        let l = self.layout();
        let t = &self.theta;
        let input: &[f64] = match self.hidden {
            Some(h) => {
                let w1 = &t[l.w1.clone()];
                let b1 = &t[l.b1.clone()];
                for j in 0..h {
                    let row = &w1[j * self.input_dim..(j + 1) * self.input_dim];
                    let a: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b1[j];
                    hidden_out[j] = a.max(0.0);
                }
                hidden_out
            }
            None => x,
        };
        let w2 = &t[l.w2.clone()];
        let b2 = &t[l.b2.clone()];
        let n_in = input.len();
        for (k, s) in scores.iter_mut().enumerate() {
            let row = &w2[k * n_in..(k + 1) * n_in];
            *s = row.iter().zip(input).map(|(w, v)| w * v).sum::<f64>() + b2[k];
        }
    }
}

struct Layout {
    w1: std::ops::Range<usize>,
    b1: std::ops::Range<usize>,
    w2: std::ops::Range<usize>,
    b2: std::ops::Range<usize>,
}

/// Pre-softmax scores for every pixel, laid out like `SoftSegmentation::probs`.
pub fn forward_scores(params: &ModelParams, features: &PixelFeatures) -> Result<Vec<f64>> {
    params.check_features(features)?;
    let k = params.num_labels;
    let mut scores = vec![0.0; features.num_pixels() * k];
    let mut hidden = vec![0.0; params.hidden.unwrap_or(0)];
    for p in 0..features.num_pixels() {
        params.pixel_scores(features.row(p), &mut hidden, &mut scores[p * k..(p + 1) * k]);
    }
    Ok(scores)
}

/// Softmax segmentation `φ_θ(features)`.
pub fn forward(params: &ModelParams, features: &PixelFeatures) -> Result<SoftSegmentation> {
    let scores = forward_scores(params, features)?;
    SoftSegmentation::from_scores(features.width(), features.height(), params.num_labels, &scores)
}

/// Gradient of a scalar loss w.r.t. all parameters, given its gradient
/// `upstream` w.r.t. the pre-softmax scores (same layout as the scores).
pub fn backward(params: &ModelParams, features: &PixelFeatures, upstream: &[f64]) -> Result<Vec<f64>> {
    params.check_features(features)?;
    let k = params.num_labels;
    let d = params.input_dim;
    if upstream.len() != features.num_pixels() * k {
        return shape("upstream gradient does not match the score layout");
    }
    let l = params.layout();
    let mut grad = vec![0.0; params.theta.len()];
    let mut scores = vec![0.0; k];
    match params.hidden {
        None => {
            for p in 0..features.num_pixels() {
                let g = &upstream[p * k..(p + 1) * k];
                if g.iter().all(|v| *v == 0.0) {
                    continue;
                }
                let x = features.row(p);
                for (c, gc) in g.iter().enumerate() {
                    let row = &mut grad[l.w2.start + c * d..l.w2.start + (c + 1) * d];
                    for (gw, xv) in row.iter_mut().zip(x) {
                        *gw += gc * xv;
                    }
                    grad[l.b2.start + c] += gc;
                }
            }
        }
        Some(h) => {
            let mut act = vec![0.0; h];
            let mut dact = vec![0.0; h];
            let w2 = params.theta[l.w2.clone()].to_vec();
            for p in 0..features.num_pixels() {
                let g = &upstream[p * k..(p + 1) * k];
                if g.iter().all(|v| *v == 0.0) {
                    continue;
                }
                let x = features.row(p);
                params.pixel_scores(x, &mut act, &mut scores);
                dact.iter_mut().for_each(|v| *v = 0.0);
                for (c, gc) in g.iter().enumerate() {
                    let base = l.w2.start + c * h;
                    for j in 0..h {
                        grad[base + j] += gc * act[j];
                        dact[j] += gc * w2[c * h + j];
                    }
                    grad[l.b2.start + c] += gc;
                }
                for j in 0..h {
                    // ReLU gate; the kink at 0 takes the zero subgradient.
                    if act[j] <= 0.0 {
                        continue;
                    }
                    let gj = dact[j];
                    let row = &mut grad[l.w1.start + j * d..l.w1.start + (j + 1) * d];
                    for (gw, xv) in row.iter_mut().zip(x) {
                        *gw += gj * xv;
                    }
                    grad[l.b1.start + j] += gj;
                }
            }
        }
    }
    Ok(grad)
}

/// Momentum SGD settings and iteration budgets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub phase1_iters: usize,
    pub phase2_iters: usize,
    pub seed: u64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            momentum: 0.9,
            batch_size: 1,
            phase1_iters: 300,
            phase2_iters: 300,
            seed: 1,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return arg("learning_rate must be > 0");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return arg("momentum must be in [0,1)");
        }
        if self.batch_size == 0 {
            return arg("batch_size must be positive");
        }
        Ok(())
    }
}

/// Optimizer state: one velocity per parameter.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SgdState {
    pub velocity: Vec<f64>,
}

/// `v ← μ v + g; θ ← θ − lr v`.
pub fn sgd_step(params: &mut ModelParams, grads: &[f64], config: &SgdConfig, state: &mut SgdState) -> Result<()> {
    if grads.len() != params.theta.len() {
        return shape("gradient length does not match parameters");
    }
    if state.velocity.is_empty() {
        state.velocity = vec![0.0; grads.len()];
    }
    for ((t, v), g) in params.theta.iter_mut().zip(&mut state.velocity).zip(grads) {
        *v = config.momentum * *v + g;
        *t -= config.learning_rate * *v;
    }
    Ok(())
}

const CHECKPOINT_MAGIC: &str = "pottsadm-params v1";

/// Writes a checkpoint: text header lines
/// (`pottsadm-params v1`, `input_dim D`, `hidden H|none`, `num_labels K`,
/// `count N`, `end`) followed by `N` little-endian f64 values.
pub fn save_params(path: &Path, params: &ModelParams) -> Result<()> {
    let mut f = fs::File::create(path)?;
    let hidden = params.hidden.map_or("none".to_string(), |h| h.to_string());
    write!(
        f,
        "{CHECKPOINT_MAGIC}\ninput_dim {}\nhidden {hidden}\nnum_labels {}\ncount {}\nend\n",
        params.input_dim,
        params.num_labels,
        params.theta.len()
    )?;
    let mut buf = Vec::with_capacity(params.theta.len() * 8);
    for v in &params.theta {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    f.write_all(&buf)?;
    Ok(())
}

pub fn load_params(path: &Path) -> Result<ModelParams> {
    let bytes = fs::read(path)?;
    let bad = |msg: &str| Error::Parse {
        path: path.to_path_buf(),
        msg: msg.to_string(),
    };
    let mut pos = 0;
    let mut lines = Vec::new();
    loop {
        let end = bytes[pos..]
            .iter()
            .position(|b| *b == b'\n')
            .ok_or_else(|| bad("unterminated header"))?;
        let line = std::str::from_utf8(&bytes[pos..pos + end]).map_err(|_| bad("header is not utf-8"))?;
        pos += end + 1;
        if line == "end" {
            break;
        }
        lines.push(line.to_string());
        if lines.len() > 16 {
            return Err(bad("header too long"));
        }
    }
    if lines.first().map(String::as_str) != Some(CHECKPOINT_MAGIC) {
        return Err(bad("missing checkpoint magic"));
    }
    let field = |name: &str| -> Result<&str> {
        lines
            .iter()
            .find_map(|l| l.strip_prefix(name).and_then(|r| r.strip_prefix(' ')))
            .ok_or_else(|| bad(&format!("missing {name}")))
    };
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad(&format!("bad number {s}")));
    let input_dim = num(field("input_dim")?)?;
    let hidden = match field("hidden")? {
        "none" => None,
        h => Some(num(h)?),
    };
    let num_labels = num(field("num_labels")?)?;
    let count = num(field("count")?)?;
    if bytes.len() != pos + count * 8 {
        return Err(bad("payload length does not match count"));
    }
    let theta = bytes[pos..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    ModelParams::from_flat(input_dim, hidden, num_labels, theta)
}
