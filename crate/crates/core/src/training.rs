//! Trainers for the regularized loss `pCE + λ·R`:
//!
//! - phase 1: SGD on partial cross-entropy over the scribbles only;
//! - GD: SGD on pCE plus the quadratic relaxation of the Potts term;
//! - ADM: per image, solve for a latent labeling `X` that minimizes
//!   `λ·Potts(X) + γ Σ_{Ω_U} −log S_p^{X_p}` with `X = Y` on the scribbles,
//!   then take an SGD step on `pCE + γ Σ_{Ω_U} −log S_p^{X_p}`.
//!
//! All losses are sums over pixels (pCE) or edges (Potts); gradients are
//! averaged over the images of a minibatch in image order.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::{
    adm_unary_from_prediction, build_dense_weights, build_grid_weights, estimate_sigma2, potts_energy,
    relaxed_potts_energy, relaxed_potts_gradient, Connectivity, EnergyParams, PROB_EPS,
};
use crate::error::{arg, shape, Error, Result};
use crate::model::{backward, forward, FeatureConfig, ModelParams, PixelFeatures, SgdConfig, SgdState, sgd_step};
use crate::solvers::{alpha_expansion, icm, maxflow_binary, DiscreteProblem};
use crate::types::{GridImage, Labeling, PairwiseGraph, ScribbleMask, SoftSegmentation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainMode {
    Gd,
    Adm,
}

/// Discrete solver used for the latent labeling step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverChoice {
    AlphaExpansion,
    MaxflowBinary,
    Icm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub lambda: f64,
    pub gamma: f64,
    pub sgd: SgdConfig,
    pub solver: SolverChoice,
    pub solver_sweeps: usize,
    /// Regularizer neighborhood. The discrete comparison loss always uses
    /// the grid model (grid-4 when this is dense).
    pub crf: Connectivity,
    pub dense_delta: f64,
    pub dense_radius: f64,
    /// Log a trace record every this many iterations (and at the end).
    pub eval_cadence: usize,
    pub features: FeatureConfig,
    pub hidden: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: TrainMode::Adm,
            lambda: 1.0,
            gamma: 1.0,
            sgd: SgdConfig::default(),
            solver: SolverChoice::AlphaExpansion,
            solver_sweeps: crate::solvers::DEFAULT_EXPANSION_SWEEPS,
            crf: Connectivity::Grid4,
            dense_delta: 8.0,
            dense_radius: 24.0,
            eval_cadence: 10,
            features: FeatureConfig::default(),
            hidden: Some(32),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, num_labels: usize) -> Result<()> {
        self.sgd.validate()?;
        if !(self.lambda >= 0.0) {
            return arg("lambda must be >= 0");
        }
        if self.mode == TrainMode::Adm {
            if !(self.gamma > 0.0) {
                return arg("gamma must be > 0 in ADM mode");
            }
            if self.crf == Connectivity::Dense {
                return arg("ADM targets the grid CRF; dense connectivity is GD-only");
            }
        }
        if self.solver == SolverChoice::MaxflowBinary && num_labels != 2 {
            return arg("maxflow-binary solver needs K=2");
        }
        if self.eval_cadence == 0 {
            return arg("eval_cadence must be positive");
        }
        Ok(())
    }

    fn grid_connectivity(&self) -> Connectivity {
        match self.crf {
            Connectivity::Dense => Connectivity::Grid4,
            c => c,
        }
    }
}

/// One training image with everything the trainers need precomputed.
#[derive(Debug, Clone)]
pub struct TrainingImage {
    pub features: PixelFeatures,
    pub mask: ScribbleMask,
    /// λ-weighted grid CRF: the discrete loss and the ADM pairwise term.
    pub grid: PairwiseGraph,
    /// λ-weighted regularizer for GD (the grid graph unless dense).
    pub reg: PairwiseGraph,
}

impl TrainingImage {
    /// Builds features and CRF graphs; σ² is the mean squared neighbor
    /// difference over the grid topology.
    pub fn prepare(image: &GridImage, mask: &ScribbleMask, config: &TrainConfig) -> Result<Self> {
        if image.width() != mask.width() || image.height() != mask.height() {
            return shape("image and scribble mask sizes differ");
        }
        let features = PixelFeatures::from_image(image, &config.features)?;
        let conn = config.grid_connectivity();
        let grid_params = EnergyParams::grid(config.lambda, 1.0, conn);
        let sigma2 = estimate_sigma2(image, grid_params.neighborhood())?;
        let grid = build_grid_weights(image, &EnergyParams { sigma2, ..grid_params })?;
        let reg = if config.crf == Connectivity::Dense {
            let mut dense = EnergyParams::dense(config.lambda, sigma2, config.dense_delta);
            dense.spatial_radius = config.dense_radius;
            build_dense_weights(image, &dense)?
        } else {
            grid.clone()
        };
        Ok(Self {
            features,
            mask: mask.clone(),
            grid,
            reg,
        })
    }

    pub fn num_labels(&self) -> usize {
        self.mask.num_labels()
    }
}

/// Partial cross-entropy `Σ_{p∈Ω_L} −log max(S_p^{Y_p}, ε)` and its gradient
/// w.r.t. the pre-softmax scores (`S_p − onehot(Y_p)` on Ω_L, zero elsewhere).
pub fn partial_cross_entropy(seg: &SoftSegmentation, mask: &ScribbleMask) -> Result<(f64, Vec<f64>)> {
    if seg.num_pixels() != mask.num_pixels() || seg.num_labels() != mask.num_labels() {
        return shape("segmentation and scribble mask disagree in shape");
    }
    let k = seg.num_labels();
    let mut loss = 0.0;
    let mut grad = vec![0.0; seg.probs().len()];
    for (p, y) in mask.labeled() {
        let row = seg.row(p);
        loss -= row[y].max(PROB_EPS).ln();
        let g = &mut grad[p * k..(p + 1) * k];
        g.copy_from_slice(row);
        g[y] -= 1.0;
    }
    Ok((loss, grad))
}

/// Pulls a gradient w.r.t. probabilities back through the softmax:
/// `g_s = S ⊙ (g_p − ⟨S, g_p⟩)`, row by row.
pub fn softmax_backward(seg: &SoftSegmentation, grad_probs: &[f64]) -> Vec<f64> {
    let k = seg.num_labels();
    let mut out = vec![0.0; grad_probs.len()];
    for p in 0..seg.num_pixels() {
        let s = seg.row(p);
        let g = &grad_probs[p * k..(p + 1) * k];
        let dot: f64 = s.iter().zip(g).map(|(a, b)| a * b).sum();
        for c in 0..k {
            out[p * k + c] = s[c] * (g[c] - dot);
        }
    }
    out
}

/// GD objective `pCE + R_relaxed` (λ lives in the graph weights) and its
/// gradient w.r.t. the scores.
pub fn gd_loss_and_score_grad(seg: &SoftSegmentation, mask: &ScribbleMask, reg: &PairwiseGraph) -> Result<(f64, Vec<f64>)> {
    let (pce, mut grad) = partial_cross_entropy(seg, mask)?;
    if reg.total_weight() == 0.0 {
        return Ok((pce, grad));
    }
    let relaxed = relaxed_potts_energy(seg, reg)?;
    let rg = softmax_backward(seg, &relaxed_potts_gradient(seg, reg)?);
    for (g, r) in grad.iter_mut().zip(&rg) {
        *g += r;
    }
    Ok((pce + relaxed, grad))
}

/// ADM network objective `pCE + γ Σ_{p∈Ω_U} −log max(S_p^{X_p}, ε)` and its
/// score gradient (`γ (S_p − onehot(X_p))` on Ω_U).
pub fn adm_loss_and_score_grad(
    seg: &SoftSegmentation,
    mask: &ScribbleMask,
    latent: &Labeling,
    gamma: f64,
) -> Result<(f64, Vec<f64>)> {
    if latent.num_pixels() != seg.num_pixels() {
        return shape("latent labeling size differs from the segmentation");
    }
    let (mut loss, mut grad) = partial_cross_entropy(seg, mask)?;
    if gamma == 0.0 {
        return Ok((loss, grad));
    }
    let k = seg.num_labels();
    for p in 0..seg.num_pixels() {
        if mask.get(p).is_some() {
            continue;
        }
        let x = latent.get(p);
        let row = seg.row(p);
        loss -= gamma * row[x].max(PROB_EPS).ln();
        for c in 0..k {
            grad[p * k + c] = gamma * (row[c] - if c == x { 1.0 } else { 0.0 });
        }
    }
    Ok((loss, grad))
}

/// One logged point of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub pce: f64,
    /// Grid Potts energy of the argmax labeling.
    pub grid_crf_discrete: f64,
    pub relaxed_crf: f64,
    /// Latent-step objective of the solve at this iteration (ADM only).
    pub latent_energy: Option<f64>,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub records: Vec<TraceRecord>,
    /// Latent solves performed (ADM).
    pub latent_solves: usize,
    /// Scribbled pixels whose latent label disagreed with the scribble.
    pub constraint_violations: usize,
}

pub const TRACE_HEADER: &str = "iter,pce,grid_crf_discrete,relaxed_crf,latent_energy,wall_ms";

impl TrainTrace {
    /// CSV with [`TRACE_HEADER`]; an empty field where a value does not apply.
    pub fn write_csv<W: Write>(&self, mut out: W, include_wall: bool) -> Result<()> {
        writeln!(out, "{TRACE_HEADER}")?;
        for r in &self.records {
            let latent = r.latent_energy.map(|v| v.to_string()).unwrap_or_default();
            let wall = if include_wall { format!("{:.3}", r.wall_ms) } else { String::new() };
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.iter, r.pce, r.grid_crf_discrete, r.relaxed_crf, latent, wall
            )?;
        }
        Ok(())
    }

    pub fn final_grid_crf(&self) -> Option<f64> {
        self.records.last().map(|r| r.grid_crf_discrete)
    }

    /// First logged iteration whose discrete grid loss is at or below `target`.
    pub fn first_iter_at_or_below(&self, target: f64) -> Option<usize> {
        self.records
            .iter()
            .find(|r| r.grid_crf_discrete <= target)
            .map(|r| r.iter)
    }
}

/// Fresh model with the configured architecture for these images.
pub fn init_params(data: &[TrainingImage], config: &TrainConfig) -> Result<ModelParams> {
    let first = data.first().ok_or_else(|| Error::Argument("no training images".into()))?;
    ModelParams::init(first.features.dim(), config.hidden, first.num_labels(), config.sgd.seed)
}

/// Dataset means of the logged quantities at `params`.
fn evaluate(params: &ModelParams, data: &[TrainingImage]) -> Result<(f64, f64, f64)> {
    let per: Vec<(f64, f64, f64)> = data
        .par_iter()
        .map(|img| -> Result<(f64, f64, f64)> {
            let seg = forward(params, &img.features)?;
            let (pce, _) = partial_cross_entropy(&seg, &img.mask)?;
            let disc = potts_energy(&seg.argmax(), &img.grid)?;
            let relaxed = relaxed_potts_energy(&seg, &img.reg)?;
            Ok((pce, disc, relaxed))
        })
        .collect::<Result<_>>()?;
    let n = per.len() as f64;
    let (a, b, c) = per
        .iter()
        .fold((0.0, 0.0, 0.0), |acc, v| (acc.0 + v.0, acc.1 + v.1, acc.2 + v.2));
    Ok((a / n, b / n, c / n))
}

/// Per-image output of one gradient computation.
struct ImageStep {
    grad: Vec<f64>,
    latent: Option<(Labeling, f64, usize)>,
}

#[derive(Clone, Copy)]
enum Objective {
    Pce,
    Gd,
    Adm,
}

fn check_data(data: &[TrainingImage], params: &ModelParams) -> Result<()> {
    if data.is_empty() {
        return arg("no training images");
    }
    for img in data {
        if img.num_labels() != params.num_labels() {
            return shape("image label count differs from the model");
        }
    }
    Ok(())
}

fn run(
    params: &ModelParams,
    data: &[TrainingImage],
    config: &TrainConfig,
    iters: usize,
    objective: Objective,
) -> Result<(ModelParams, TrainTrace)> {
    check_data(data, params)?;
    config.validate(params.num_labels())?;
    let start = Instant::now();
    let mut params = params.clone();
    let mut state = SgdState::default();
    let mut trace = TrainTrace::default();
    let mut latents: Vec<Option<Labeling>> = vec![None; data.len()];
    let batch = config.sgd.batch_size.min(data.len());

    for it in 0..=iters {
        let log = it % config.eval_cadence == 0 || it == iters;
        if it == iters {
            if log {
                push_record(&mut trace, &params, data, it, None, &start)?;
            }
            break;
        }
        let ids: Vec<usize> = (0..batch).map(|j| (it * batch + j) % data.len()).collect();
        let steps: Vec<ImageStep> = ids
            .par_iter()
            .map(|&i| image_step(&params, &data[i], latents[i].as_ref(), config, objective))
            .collect::<Result<_>>()
            .map_err(|e| Error::Solver {
                iteration: it,
                source: Box::new(e),
            })?;

        let mut latent_energy = None;
        let mut grad = vec![0.0; params.theta().len()];
        for (&i, step) in ids.iter().zip(steps) {
            for (g, s) in grad.iter_mut().zip(&step.grad) {
                *g += s;
            }
            if let Some((x, e, viol)) = step.latent {
                trace.latent_solves += 1;
                trace.constraint_violations += viol;
                *latent_energy.get_or_insert(0.0) += e / batch as f64;
                latents[i] = Some(x);
            }
        }
        if log {
            push_record(&mut trace, &params, data, it, latent_energy, &start)?;
        }
        let inv = 1.0 / batch as f64;
        grad.iter_mut().for_each(|g| *g *= inv);
        sgd_step(&mut params, &grad, &config.sgd, &mut state)?;
    }
    Ok((params, trace))
}

fn push_record(
    trace: &mut TrainTrace,
    params: &ModelParams,
    data: &[TrainingImage],
    iter: usize,
    latent_energy: Option<f64>,
    start: &Instant,
) -> Result<()> {
    let (pce, disc, relaxed) = evaluate(params, data)?;
    trace.records.push(TraceRecord {
        iter,
        pce,
        grid_crf_discrete: disc,
        relaxed_crf: relaxed,
        latent_energy,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    });
    Ok(())
}

fn image_step(
    params: &ModelParams,
    img: &TrainingImage,
    warm: Option<&Labeling>,
    config: &TrainConfig,
    objective: Objective,
) -> Result<ImageStep> {
    let seg = forward(params, &img.features)?;
    let (score_grad, latent) = match objective {
        Objective::Pce => (partial_cross_entropy(&seg, &img.mask)?.1, None),
        Objective::Gd if config.lambda == 0.0 => (partial_cross_entropy(&seg, &img.mask)?.1, None),
        Objective::Gd => (gd_loss_and_score_grad(&seg, &img.mask, &img.reg)?.1, None),
        Objective::Adm => {
            let (x, energy, violations) = solve_latent(&seg, img, warm, config)?;
            let g = adm_loss_and_score_grad(&seg, &img.mask, &x, config.gamma)?.1;
            (g, Some((x, energy, violations)))
        }
    };
    Ok(ImageStep {
        grad: backward(params, &img.features, &score_grad)?,
        latent,
    })
}

/// Solves the latent labeling step for one image. Returns the labeling, its
/// objective value and the number of scribble constraints it violates.
pub fn solve_latent(
    seg: &SoftSegmentation,
    img: &TrainingImage,
    warm: Option<&Labeling>,
    config: &TrainConfig,
) -> Result<(Labeling, f64, usize)> {
    let unary = adm_unary_from_prediction(seg, &img.mask, config.gamma)?;
    let problem = DiscreteProblem::new(unary, img.grid.clone(), seg.num_labels())?
        .with_dims(seg.width(), seg.height())?;
    let init = match warm {
        Some(x) => x.clone(),
        None => seg.argmax(),
    };
    let report = match config.solver {
        SolverChoice::AlphaExpansion => alpha_expansion(&problem, &init, config.solver_sweeps)?,
        SolverChoice::MaxflowBinary => maxflow_binary(&problem)?,
        SolverChoice::Icm => icm(&problem, &init, config.solver_sweeps)?,
    };
    let violations = img
        .mask
        .labeled()
        .filter(|&(p, y)| report.labeling.get(p) != y)
        .count();
    Ok((report.labeling, report.final_energy, violations))
}

/// SGD on partial cross-entropy only, for `config.sgd.phase1_iters`.
pub fn train_phase1(params: &ModelParams, data: &[TrainingImage], config: &TrainConfig) -> Result<(ModelParams, TrainTrace)> {
    run(params, data, config, config.sgd.phase1_iters, Objective::Pce)
}

/// Gradient descent on `pCE + λ·relaxed Potts` for `config.sgd.phase2_iters`.
pub fn train_gd(params: &ModelParams, data: &[TrainingImage], config: &TrainConfig) -> Result<(ModelParams, TrainTrace)> {
    run(params, data, config, config.sgd.phase2_iters, Objective::Gd)
}

/// Alternating direction training for `config.sgd.phase2_iters`.
pub fn train_adm(params: &ModelParams, data: &[TrainingImage], config: &TrainConfig) -> Result<(ModelParams, TrainTrace)> {
    run(params, data, config, config.sgd.phase2_iters, Objective::Adm)
}

/// Phase-2 trainer selected by `config.mode`.
pub fn train_phase2(params: &ModelParams, data: &[TrainingImage], config: &TrainConfig) -> Result<(ModelParams, TrainTrace)> {
    match config.mode {
        TrainMode::Gd => train_gd(params, data, config),
        TrainMode::Adm => train_adm(params, data, config),
    }
}
