//! Pairwise Potts energies: contrast-sensitive weights for grid and dense
//! neighborhoods, the discrete energy, its quadratic relaxation with the
//! analytic gradient, and the unary table used by the latent labeling step.

use serde::{Deserialize, Serialize};

use crate::error::{arg, shape, Error, Result};
use crate::types::{
    Edge, GridImage, Labeling, Neighborhood, PairwiseGraph, ScribbleMask, SoftSegmentation,
};

/// Cost assigned to forbidden labels. Finite so max-flow capacities stay finite.
pub const PROHIBITIVE: f64 = 1e9;

/// Clamp for probabilities inside `-log`.
pub const PROB_EPS: f64 = 1e-12;

/// Floor on the estimated contrast bandwidth (constant images).
pub const SIGMA2_FLOOR: f64 = 1e-8;

/// Default cap on the number of dense edges.
pub const DEFAULT_MAX_DENSE_EDGES: usize = 8_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Connectivity {
    Grid4,
    Grid8,
    Dense,
}

/// Parameters of a grid or dense Potts model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyParams {
    pub lambda: f64,
    /// Contrast bandwidth σ² in normalized-intensity units squared.
    pub sigma2: f64,
    /// Spatial bandwidth Δ in pixels (dense only).
    pub delta: f64,
    /// Truncation radius for dense neighborhoods, pixels.
    pub spatial_radius: f64,
    pub connectivity: Connectivity,
    #[serde(default = "default_max_edges")]
    pub max_edges: usize,
}

fn default_max_edges() -> usize {
    DEFAULT_MAX_DENSE_EDGES
}

impl EnergyParams {
    pub fn grid(lambda: f64, sigma2: f64, connectivity: Connectivity) -> Self {
        Self {
            lambda,
            sigma2,
            delta: 8.0,
            spatial_radius: 24.0,
            connectivity,
            max_edges: DEFAULT_MAX_DENSE_EDGES,
        }
    }

    /// Dense model truncated at `3 Δ`.
    pub fn dense(lambda: f64, sigma2: f64, delta: f64) -> Self {
        Self {
            lambda,
            sigma2,
            delta,
            spatial_radius: 3.0 * delta,
            connectivity: Connectivity::Dense,
            max_edges: DEFAULT_MAX_DENSE_EDGES,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return arg(format!("lambda must be >= 0, got {}", self.lambda));
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return arg(format!("sigma2 must be > 0, got {}", self.sigma2));
        }
        if self.connectivity == Connectivity::Dense {
            if !(self.delta > 0.0) {
                return arg("delta must be > 0 for dense models");
            }
            if !(self.spatial_radius >= 1.0) {
                return arg("spatial_radius must be >= 1 for dense models");
            }
        }
        Ok(())
    }

    pub fn neighborhood(&self) -> Neighborhood {
        match self.connectivity {
            Connectivity::Grid4 => Neighborhood::Grid4,
            Connectivity::Grid8 => Neighborhood::Grid8,
            Connectivity::Dense => Neighborhood::Dense {
                radius: self.spatial_radius,
            },
        }
    }

    /// Largest spatial factor `exp(-d²/Δ²)` among the pairs dropped by truncation.
    pub fn truncation_tail_factor(&self) -> f64 {
        (-(self.spatial_radius * self.spatial_radius) / (self.delta * self.delta)).exp()
    }
}

/// Mean squared intensity difference over all neighbor pairs, floored at
/// [`SIGMA2_FLOOR`].
pub fn estimate_sigma2(image: &GridImage, topology: Neighborhood) -> Result<f64> {
    let pairs = topology.pairs(image.width(), image.height());
    if pairs.is_empty() {
        return arg("no neighbor pairs to estimate sigma2 from");
    }
    let sum: f64 = pairs.iter().map(|&(p, q)| image.color_dist2(p, q)).sum();
    Ok((sum / pairs.len() as f64).max(SIGMA2_FLOOR))
}

/// Nearest-neighbor weights `λ exp(-‖I_p − I_q‖² / 2σ²)`.
pub fn build_grid_weights(image: &GridImage, params: &EnergyParams) -> Result<PairwiseGraph> {
    params.validate()?;
    if params.connectivity == Connectivity::Dense {
        return arg("build_grid_weights needs grid-4 or grid-8 connectivity");
    }
    let nb = params.neighborhood();
    let edges = nb
        .pairs(image.width(), image.height())
        .into_iter()
        .map(|(p, q)| Edge {
            p,
            q,
            w: params.lambda * (-image.color_dist2(p, q) / (2.0 * params.sigma2)).exp(),
        })
        .collect();
    PairwiseGraph::new(image.num_pixels(), edges, nb)
}

/// Truncated dense weights `λ exp(-‖I_p − I_q‖² / σ²) exp(-‖p − q‖² / Δ²)`.
pub fn build_dense_weights(image: &GridImage, params: &EnergyParams) -> Result<PairwiseGraph> {
    params.validate()?;
    if params.connectivity != Connectivity::Dense {
        return arg("build_dense_weights needs dense connectivity");
    }
    let nb = params.neighborhood();
    let offsets = nb.offsets();
    // Upper bound before allocating.
    if offsets.len().saturating_mul(image.num_pixels()) > params.max_edges {
        let exact = nb.pairs(image.width(), image.height()).len();
        if exact > params.max_edges {
            return Err(Error::Resource(format!(
                "dense neighborhood needs {exact} edges, cap is {}",
                params.max_edges
            )));
        }
    }
    let w = image.width();
    let inv_d2 = 1.0 / (params.delta * params.delta);
    let edges = nb
        .pairs(image.width(), image.height())
        .into_iter()
        .map(|(p, q)| {
            let dx = (p % w) as f64 - (q % w) as f64;
            let dy = (p / w) as f64 - (q / w) as f64;
            let spatial = (-(dx * dx + dy * dy) * inv_d2).exp();
            let color = (-image.color_dist2(p, q) / params.sigma2).exp();
            Edge {
                p,
                q,
                w: params.lambda * color * spatial,
            }
        })
        .collect();
    PairwiseGraph::new(image.num_pixels(), edges, nb)
}

/// Weights for whichever connectivity `params` selects.
pub fn build_weights(image: &GridImage, params: &EnergyParams) -> Result<PairwiseGraph> {
    match params.connectivity {
        Connectivity::Dense => build_dense_weights(image, params),
        _ => build_grid_weights(image, params),
    }
}

/// `Σ_{pq} w_pq [S_p ≠ S_q]`.
pub fn potts_energy(labeling: &Labeling, graph: &PairwiseGraph) -> Result<f64> {
    if labeling.num_pixels() != graph.num_pixels() {
        return shape(format!(
            "labeling has {} pixels, graph has {}",
            labeling.num_pixels(),
            graph.num_pixels()
        ));
    }
    let l = labeling.labels();
    Ok(graph
        .edges()
        .iter()
        .filter(|e| l[e.p] != l[e.q])
        .map(|e| e.w)
        .sum())
}

/// Quadratic relaxation: `Σ_{pq} w_pq (⟨1,S_p⟩ + ⟨1,S_q⟩ − 2⟨S_p,S_q⟩)`.
pub fn relaxed_potts_energy(seg: &SoftSegmentation, graph: &PairwiseGraph) -> Result<f64> {
    check_seg(seg, graph)?;
    Ok(graph
        .edges()
        .iter()
        .map(|e| {
            let sp = seg.row(e.p);
            let sq = seg.row(e.q);
            let dot: f64 = sp.iter().zip(sq).map(|(a, b)| a * b).sum();
            let bracket = sp.iter().sum::<f64>() + sq.iter().sum::<f64>() - 2.0 * dot;
            e.w * bracket
        })
        .sum())
}

/// Gradient of [`relaxed_potts_energy`] w.r.t. the probabilities:
/// `Σ_{q∼p} w_pq (1 − 2 S_q)`, laid out like `seg.probs()`.
pub fn relaxed_potts_gradient(seg: &SoftSegmentation, graph: &PairwiseGraph) -> Result<Vec<f64>> {
    check_seg(seg, graph)?;
    let k = seg.num_labels();
    let mut grad = vec![0.0; seg.probs().len()];
    for p in 0..graph.num_pixels() {
        let g = &mut grad[p * k..(p + 1) * k];
        for &(q, w) in graph.neighbors(p) {
            for (gk, sq) in g.iter_mut().zip(seg.row(q)) {
                *gk += w * (1.0 - 2.0 * sq);
            }
        }
    }
    Ok(grad)
}

fn check_seg(seg: &SoftSegmentation, graph: &PairwiseGraph) -> Result<()> {
    if seg.num_pixels() != graph.num_pixels() {
        return shape(format!(
            "segmentation has {} pixels, graph has {}",
            seg.num_pixels(),
            graph.num_pixels()
        ));
    }
    Ok(())
}

/// Per-pixel label costs.
#[derive(Debug, Clone, PartialEq)]
pub struct UnaryTable {
    num_pixels: usize,
    num_labels: usize,
    costs: Vec<f64>,
}

impl UnaryTable {
    pub fn new(num_pixels: usize, num_labels: usize, costs: Vec<f64>) -> Result<Self> {
        if num_labels == 0 {
            return arg("num_labels must be positive");
        }
        if costs.len() != num_pixels * num_labels {
            return shape(format!(
                "unary table has {} costs, expected {}",
                costs.len(),
                num_pixels * num_labels
            ));
        }
        if let Some(c) = costs.iter().find(|c| !c.is_finite() || c.abs() > PROHIBITIVE) {
            return Err(Error::Numeric(format!("unary cost {c} invalid")));
        }
        Ok(Self {
            num_pixels,
            num_labels,
            costs,
        })
    }

    pub fn zeros(num_pixels: usize, num_labels: usize) -> Self {
        Self {
            num_pixels,
            num_labels,
            costs: vec![0.0; num_pixels * num_labels],
        }
    }

    pub fn num_pixels(&self) -> usize {
        self.num_pixels
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    pub fn row(&self, p: usize) -> &[f64] {
        &self.costs[p * self.num_labels..(p + 1) * self.num_labels]
    }

    #[inline]
    pub fn cost(&self, p: usize, label: usize) -> f64 {
        self.costs[p * self.num_labels + label]
    }

    pub fn is_prohibitive(&self, p: usize, label: usize) -> bool {
        self.cost(p, label) == PROHIBITIVE
    }

    /// `Σ_p cost(p, label_p)`.
    pub fn energy(&self, labeling: &Labeling) -> f64 {
        labeling
            .labels()
            .iter()
            .enumerate()
            .map(|(p, &l)| self.cost(p, l))
            .sum()
    }

    /// Largest cost of any labeling avoiding prohibitive entries.
    pub fn max_feasible_cost(&self) -> f64 {
        self.costs
            .chunks(self.num_labels)
            .map(|row| {
                row.iter()
                    .filter(|c| **c != PROHIBITIVE)
                    .fold(0.0f64, |m, c| m.max(c.abs()))
            })
            .sum()
    }
}

/// Unary costs of the latent labeling step: `−γ log max(S_p^k, ε)` on
/// unlabeled pixels; on scribbled pixels 0 for the scribble label and
/// [`PROHIBITIVE`] for every other label.
///
/// For a one-hot `X_p` the KL divergence `D(X_p ‖ S_p)` reduces to this
/// cross-entropy since the entropy of a one-hot vector is zero.
pub fn adm_unary_from_prediction(
    seg: &SoftSegmentation,
    mask: &ScribbleMask,
    gamma: f64,
) -> Result<UnaryTable> {
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return arg(format!("gamma must be >= 0, got {gamma}"));
    }
    if seg.num_pixels() != mask.num_pixels() || seg.num_labels() != mask.num_labels() {
        return shape("segmentation and scribble mask disagree in shape");
    }
    let k = seg.num_labels();
    let mut costs = Vec::with_capacity(seg.probs().len());
    for p in 0..seg.num_pixels() {
        match mask.get(p) {
            Some(y) => costs.extend((0..k).map(|l| if l == y { 0.0 } else { PROHIBITIVE })),
            None => costs.extend(seg.row(p).iter().map(|s| -gamma * s.max(PROB_EPS).ln())),
        }
    }
    UnaryTable::new(seg.num_pixels(), k, costs)
}
