//! Cost of the step segmentations `S^t = {x | x < t}` of a 1D scene under
//! grid and dense Potts weights.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::synthetic::{gen_staircase_1d, SyntheticScene};
use crate::energy::{build_weights, estimate_sigma2, potts_energy, EnergyParams};
use crate::error::{arg, Result};
use crate::types::{Labeling, Neighborhood};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Landscape {
    /// Cut positions `1..width`.
    pub t: Vec<usize>,
    pub grid: Vec<f64>,
    pub dense: Vec<f64>,
}

/// Labeling with label 0 left of `t` and 1 from `t` on.
pub fn step_labeling(width: usize, t: usize) -> Result<Labeling> {
    Labeling::new(width, 1, 2, (0..width).map(|x| usize::from(x >= t)).collect())
}

pub fn landscape_1d(scene: &SyntheticScene, grid: &EnergyParams, dense: &EnergyParams) -> Result<Landscape> {
    if scene.image.height() != 1 {
        return arg("landscape needs a 1-row image");
    }
    let w = scene.image.width();
    let gg = build_weights(&scene.image, grid)?;
    let dg = build_weights(&scene.image, dense)?;
    let mut out = Landscape {
        t: Vec::with_capacity(w.saturating_sub(1)),
        grid: Vec::new(),
        dense: Vec::new(),
    };
    for t in 1..w {
        let s = step_labeling(w, t)?;
        out.t.push(t);
        out.grid.push(potts_energy(&s, &gg)?);
        out.dense.push(potts_energy(&s, &dg)?);
    }
    Ok(out)
}

impl Landscape {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,grid,dense")?;
        for i in 0..self.t.len() {
            writeln!(out, "{},{},{}", self.t[i], self.grid[i], self.dense[i])?;
        }
        Ok(())
    }
}

/// Interior points strictly below both neighbors.
pub fn strict_local_minima(curve: &[f64]) -> usize {
    curve.windows(3).filter(|w| w[1] < w[0] && w[1] < w[2]).count()
}

/// Position of the first minimum.
pub fn argmin(curve: &[f64]) -> Option<usize> {
    (0..curve.len()).fold(None, |best: Option<usize>, i| match best {
        Some(b) if curve[b] <= curve[i] => Some(b),
        _ => Some(i),
    })
}

/// Suite of noisy staircases with one dominant step among smaller ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LandscapeConfig {
    pub scenes: usize,
    pub length: usize,
    pub steps: usize,
    pub dominant_height: f64,
    pub minor_height: f64,
    pub noise: f64,
    pub seed: u64,
    pub lambda: f64,
    pub delta: f64,
    /// Contrast bandwidth; estimated per scene when absent.
    pub sigma2: Option<f64>,
}

impl Default for LandscapeConfig {
    fn default() -> Self {
        Self {
            scenes: 20,
            length: 100,
            steps: 5,
            dominant_height: 0.4,
            minor_height: 0.1,
            noise: 0.03,
            seed: 500,
            lambda: 1.0,
            delta: 8.0,
            sigma2: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapeOutcome {
    pub seed: u64,
    pub dominant_step: usize,
    pub grid_argmin: usize,
    pub grid_minima: usize,
    pub dense_minima: usize,
    pub landscape: Landscape,
}

impl LandscapeOutcome {
    pub fn argmin_at_dominant(&self) -> bool {
        self.grid_argmin == self.dominant_step
    }

    pub fn dense_smoother(&self) -> bool {
        self.dense_minima <= self.grid_minima
    }
}

/// Staircase for scene `index` of the suite: step positions at least 8 px
/// apart and 8 px from the ends, one dominant step, minor steps of random sign.
pub fn suite_scene(config: &LandscapeConfig, index: usize) -> Result<SyntheticScene> {
    let seed = config.seed + index as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let gap = 8;
    if config.steps == 0 || config.length < gap * (config.steps + 1) {
        return arg("staircase too short for the requested steps");
    }
    let slack = config.length - gap * (config.steps + 1);
    let mut offsets: Vec<usize> = (0..config.steps).map(|_| rng.random_range(0..=slack)).collect();
    offsets.sort_unstable();
    let positions: Vec<usize> = offsets.iter().enumerate().map(|(i, o)| gap * (i + 1) + o).collect();
    let dominant = rng.random_range(0..config.steps);
    let heights: Vec<f64> = (0..config.steps)
        .map(|i| {
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            if i == dominant {
                sign * config.dominant_height
            } else {
                sign * config.minor_height * rng.random_range(0.5..1.0)
            }
        })
        .collect();
    gen_staircase_1d(config.length, &positions, &heights, config.noise, seed)
}

pub fn run_landscape_suite(config: &LandscapeConfig) -> Result<Vec<LandscapeOutcome>> {
    (0..config.scenes)
        .into_par_iter()
        .map(|i| {
            let scene = suite_scene(config, i)?;
            let sigma2 = match config.sigma2 {
                Some(s) => s,
                None => estimate_sigma2(&scene.image, Neighborhood::Grid4)?,
            };
            let grid = EnergyParams::grid(config.lambda, sigma2, crate::energy::Connectivity::Grid4);
            let dense = EnergyParams::dense(config.lambda, sigma2, config.delta);
            let landscape = landscape_1d(&scene, &grid, &dense)?;
            let am = argmin(&landscape.grid).expect("nonempty curve");
            Ok(LandscapeOutcome {
                seed: scene.seed,
                dominant_step: scene.dominant_step.expect("staircase"),
                grid_argmin: landscape.t[am],
                grid_minima: strict_local_minima(&landscape.grid),
                dense_minima: strict_local_minima(&landscape.dense),
                landscape,
            })
        })
        .collect()
}
