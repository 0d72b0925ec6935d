//! Minimizers of `Σ_p unary(p, x_p) + Σ_{pq} w_pq [x_p ≠ x_q]`.
//!
//! Pairwise weights are taken as stored in the graph; callers fold the
//! regularization strength λ into the weights when building them.

mod brute_force;
mod expansion;
mod icm;
pub mod maxflow;
mod mean_field;

pub use brute_force::{brute_force, BRUTE_FORCE_LIMIT};
pub use expansion::{alpha_expansion, maxflow_binary, DEFAULT_EXPANSION_SWEEPS};
pub use icm::icm;
pub use mean_field::{mean_field_dense, mean_field_free_energy, MeanFieldResult};

use crate::energy::{potts_energy, UnaryTable, PROHIBITIVE};
use crate::error::{arg, shape, Error, Result};
use crate::types::{Labeling, PairwiseGraph};

/// Unary table plus Potts graph over `num_labels` labels.
#[derive(Debug, Clone)]
pub struct DiscreteProblem {
    unary: UnaryTable,
    graph: PairwiseGraph,
    num_labels: usize,
    width: usize,
    height: usize,
}

impl DiscreteProblem {
    /// Fails if sizes disagree or if [`PROHIBITIVE`] does not dominate the
    /// cost of every labeling that avoids prohibitive unaries.
    pub fn new(unary: UnaryTable, graph: PairwiseGraph, num_labels: usize) -> Result<Self> {
        if unary.num_labels() != num_labels {
            return shape(format!(
                "unary table has {} labels, problem has {num_labels}",
                unary.num_labels()
            ));
        }
        if unary.num_pixels() != graph.num_pixels() {
            return shape(format!(
                "unary table covers {} pixels, graph {}",
                unary.num_pixels(),
                graph.num_pixels()
            ));
        }
        let bound = unary.max_feasible_cost() + graph.total_weight();
        if bound >= PROHIBITIVE {
            return Err(Error::Numeric(format!(
                "feasible energy bound {bound} reaches the prohibitive cost"
            )));
        }
        let width = graph.num_pixels();
        Ok(Self {
            unary,
            graph,
            num_labels,
            width,
            height: 1,
        })
    }

    /// Raster shape given to solver outputs (defaults to one row).
    pub fn with_dims(mut self, width: usize, height: usize) -> Result<Self> {
        if width * height != self.num_pixels() {
            return shape(format!(
                "{width}x{height} does not cover {} pixels",
                self.num_pixels()
            ));
        }
        self.width = width;
        self.height = height;
        Ok(self)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub(crate) fn labeling_from(&self, labels: Vec<usize>) -> Result<Labeling> {
        Labeling::new(self.width, self.height, self.num_labels, labels)
    }

    pub fn unary(&self) -> &UnaryTable {
        &self.unary
    }

    pub fn graph(&self) -> &PairwiseGraph {
        &self.graph
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn num_pixels(&self) -> usize {
        self.graph.num_pixels()
    }

    /// Full energy of `labeling`.
    pub fn energy(&self, labeling: &Labeling) -> Result<f64> {
        self.check_labeling(labeling)?;
        Ok(self.unary.energy(labeling) + potts_energy(labeling, &self.graph)?)
    }

    fn energy_of(&self, labels: &[usize]) -> f64 {
        let mut e = 0.0;
        for (p, &l) in labels.iter().enumerate() {
            e += self.unary.cost(p, l);
        }
        for edge in self.graph.edges() {
            if labels[edge.p] != labels[edge.q] {
                e += edge.w;
            }
        }
        e
    }

    /// Number of pixels assigned a prohibitive label.
    pub fn violations(&self, labeling: &Labeling) -> usize {
        labeling
            .labels()
            .iter()
            .enumerate()
            .filter(|(p, &l)| self.unary.is_prohibitive(*p, l))
            .count()
    }

    fn check_labeling(&self, labeling: &Labeling) -> Result<()> {
        if labeling.num_pixels() != self.num_pixels() {
            return shape(format!(
                "labeling has {} pixels, problem has {}",
                labeling.num_pixels(),
                self.num_pixels()
            ));
        }
        if labeling.width() != self.width || labeling.height() != self.height {
            return shape(format!(
                "labeling is {}x{}, problem is {}x{}",
                labeling.width(),
                labeling.height(),
                self.width,
                self.height
            ));
        }
        if labeling.num_labels() != self.num_labels {
            return arg(format!(
                "labeling has K={}, problem has K={}",
                labeling.num_labels(),
                self.num_labels
            ));
        }
        Ok(())
    }
}

/// Outcome of a discrete solve.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub labeling: Labeling,
    pub final_energy: f64,
    /// Energy after each sweep (index 0 is the initial energy for iterative solvers).
    pub energy_trace: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
}

/// Packs a report and checks the recorded energy against a fresh evaluation.
fn finish(
    problem: &DiscreteProblem,
    labeling: Labeling,
    energy_trace: Vec<f64>,
    sweeps: usize,
    converged: bool,
) -> Result<SolveReport> {
    let final_energy = problem.energy(&labeling)?;
    if let Some(&last) = energy_trace.last() {
        let tol = 1e-9 * final_energy.abs().max(1.0);
        if (last - final_energy).abs() > tol {
            return Err(Error::Numeric(format!(
                "tracked energy {last} disagrees with re-evaluation {final_energy}"
            )));
        }
    }
    Ok(SolveReport {
        labeling,
        final_energy,
        energy_trace,
        sweeps,
        converged,
    })
}

fn check_init(problem: &DiscreteProblem, init: &Labeling) -> Result<()> {
    problem.check_labeling(init)
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;
    use crate::types::{Edge, Neighborhood};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Random grid-4 Potts instance with dyadic costs (exact float sums).
    pub fn random_problem(seed: u64, w: usize, h: usize, k: usize) -> DiscreteProblem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = w * h;
        let costs = (0..n * k).map(|_| rng.random_range(0..64) as f64 / 16.0).collect();
        let edges = Neighborhood::Grid4
            .pairs(w, h)
            .into_iter()
            .map(|(p, q)| Edge { p, q, w: rng.random_range(0..48) as f64 / 16.0 })
            .collect();
        DiscreteProblem::new(
            UnaryTable::new(n, k, costs).unwrap(),
            PairwiseGraph::new(n, edges, Neighborhood::Grid4).unwrap(),
            k,
        )
        .unwrap()
        .with_dims(w, h)
        .unwrap()
    }

    pub fn problem(unary: Vec<f64>, k: usize, n: usize, edges: Vec<(usize, usize, f64)>) -> DiscreteProblem {
        let edges = edges.into_iter().map(|(p, q, w)| Edge { p, q, w }).collect();
        DiscreteProblem::new(
            UnaryTable::new(n, k, unary).unwrap(),
            PairwiseGraph::new(n, edges, Neighborhood::Grid4).unwrap(),
            k,
        )
        .unwrap()
    }
}
