//! Seeded synthetic scenes: noisy 1D staircases and 2D blob images, each
//! with ground truth and interior scribble chains.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{arg, Result};
use crate::types::{Chain, GridImage, Labeling, ScribbleMask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SceneKind {
    Staircase1d,
    Blobs2d,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub kind: SceneKind,
    pub image: GridImage,
    pub gt: Labeling,
    pub mask: ScribbleMask,
    pub seed: u64,
    pub noise: f64,
    pub contrast: f64,
    /// Staircase only: position `t*` of the dominant step (first pixel of
    /// the right segment).
    pub dominant_step: Option<usize>,
}

fn noise_source(noise: f64) -> Result<Normal<f64>> {
    if !(noise >= 0.0 && noise.is_finite()) {
        return arg("noise must be finite and >= 0");
    }
    Ok(Normal::new(0.0, noise).expect("finite std"))
}

/// Middle third of `[start, start+len)`, at least one pixel.
fn middle_third(start: usize, len: usize) -> (usize, usize) {
    let k = (len / 3).max(1);
    (start + (len - k) / 2, k)
}

/// Piecewise-constant `1×length` profile. Step `i` changes the intensity by
/// `step_heights[i]` at `step_positions[i]`; the profile is centered on 0.5,
/// noise is added and the result clipped to `[0,1]`. The ground truth splits
/// at the largest-magnitude step.
pub fn gen_staircase_1d(
    length: usize,
    step_positions: &[usize],
    step_heights: &[f64],
    noise: f64,
    seed: u64,
) -> Result<SyntheticScene> {
    if step_positions.is_empty() || step_positions.len() != step_heights.len() {
        return arg("need one height per step and at least one step");
    }
    if step_positions.windows(2).any(|w| w[0] >= w[1]) {
        return arg("step positions must be strictly increasing");
    }
    if step_positions[0] == 0 || *step_positions.last().unwrap() >= length {
        return arg("step positions must lie in [1, length)");
    }
    if step_heights.iter().any(|h| !h.is_finite()) {
        return arg("step heights must be finite");
    }
    let normal = noise_source(noise)?;
    let dominant = (0..step_heights.len())
        .fold(0, |best, i| if step_heights[i].abs() > step_heights[best].abs() { i } else { best });
    let t_star = step_positions[dominant];
    if t_star < 3 || length - t_star < 3 {
        return arg("each segment needs at least 3 pixels");
    }

    let mut levels = vec![0.0];
    for h in step_heights {
        levels.push(levels.last().unwrap() + h);
    }
    let lo = levels.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = levels.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let base = 0.5 - (lo + hi) / 2.0;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(length);
    let mut step = 0;
    for x in 0..length {
        while step < step_positions.len() && step_positions[step] <= x {
            step += 1;
        }
        let clean = base + levels[step];
        let v = if noise > 0.0 { clean + normal.sample(&mut rng) } else { clean };
        data.push(v.clamp(0.0, 1.0));
    }
    let image = GridImage::gray(length, 1, data)?;
    let gt = Labeling::new(length, 1, 2, (0..length).map(|x| usize::from(x >= t_star)).collect())?;
    let chains = [(0, 0, t_star), (1, t_star, length - t_star)]
        .into_iter()
        .map(|(label, start, len)| {
            let (a, k) = middle_third(start, len);
            Chain {
                label,
                pixels: (a..a + k).map(|x| (x, 0)).collect(),
            }
        })
        .collect();
    let mask = ScribbleMask::from_chains(length, 1, 2, chains)?;
    Ok(SyntheticScene {
        kind: SceneKind::Staircase1d,
        image,
        gt,
        mask,
        seed,
        noise,
        contrast: step_heights[dominant].abs(),
        dominant_step: Some(t_star),
    })
}

/// Mean intensity of label `c` of `k`: evenly spread over a band of width
/// `contrast` centered on 0.5.
pub fn blob_level(c: usize, k: usize, contrast: f64) -> f64 {
    0.5 - contrast / 2.0 + contrast * c as f64 / (k - 1) as f64
}

/// `K−1` seeded star-convex blobs on a label-0 background. Each label has a
/// distinct mean intensity (see [`blob_level`]); Gaussian noise is added and
/// clipped to `[0,1]`. Every region gets one horizontal scribble chain well
/// inside it.
pub fn gen_blobs_2d(
    width: usize,
    height: usize,
    num_labels: usize,
    noise: f64,
    contrast: f64,
    seed: u64,
) -> Result<SyntheticScene> {
    if num_labels < 2 {
        return arg("need K >= 2");
    }
    if width < 16 || height < 16 {
        return arg("blob scenes need at least 16x16 pixels");
    }
    if !(0.0..=1.0).contains(&contrast) {
        return arg("contrast must be in [0,1]");
    }
    let normal = noise_source(noise)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (wf, hf) = (width as f64, height as f64);
    let min_side = wf.min(hf);

    let mut labels = vec![0usize; width * height];
    for c in 1..num_labels {
        // A few placement attempts to avoid overlapping earlier blobs.
        let mut best: Option<(Vec<usize>, usize)> = None;
        for _ in 0..20 {
            let r0 = rng.random_range(0.14..0.24) * min_side;
            let cx = rng.random_range(r0 + 1.0..wf - r0 - 1.0);
            let cy = rng.random_range(r0 + 1.0..hf - r0 - 1.0);
            let aspect = rng.random_range(0.75..1.33);
            let wobble = rng.random_range(0.0..0.2);
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            let pixels: Vec<usize> = (0..width * height)
                .filter(|&p| {
                    let dx = (p % width) as f64 + 0.5 - cx;
                    let dy = ((p / width) as f64 + 0.5 - cy) * aspect;
                    let r = r0 * (1.0 + wobble * (3.0 * dy.atan2(dx) + phase).sin());
                    dx * dx + dy * dy <= r * r
                })
                .collect();
            let overlap = pixels.iter().filter(|&&p| labels[p] != 0).count();
            if best.as_ref().is_none_or(|(_, o)| overlap < *o) {
                best = Some((pixels, overlap));
            }
            if overlap == 0 {
                break;
            }
        }
        for p in best.expect("at least one attempt").0 {
            labels[p] = c;
        }
    }

    let data = labels
        .iter()
        .map(|&c| {
            let v = blob_level(c, num_labels, contrast);
            let v = if noise > 0.0 { v + normal.sample(&mut rng) } else { v };
            v.clamp(0.0, 1.0)
        })
        .collect();
    let image = GridImage::gray(width, height, data)?;
    let gt = Labeling::new(width, height, num_labels, labels)?;
    let chains = (0..num_labels).filter_map(|c| interior_chain(&gt, c)).collect();
    let mask = ScribbleMask::from_chains(width, height, num_labels, chains)?;
    Ok(SyntheticScene {
        kind: SceneKind::Blobs2d,
        image,
        gt,
        mask,
        seed,
        noise,
        contrast,
        dominant_step: None,
    })
}

/// Whether every pixel within Chebyshev distance `margin` of `p` lies in the
/// image and carries the same label.
fn is_interior(gt: &Labeling, p: usize, margin: usize) -> bool {
    let (w, h) = (gt.width(), gt.height());
    let (x, y) = (p % w, p / w);
    if x < margin || y < margin || x + margin >= w || y + margin >= h {
        return false;
    }
    let c = gt.get(p);
    (y - margin..=y + margin).all(|yy| (x - margin..=x + margin).all(|xx| gt.get(yy * w + xx) == c))
}

/// Middle third of the longest horizontal run of interior pixels of label
/// `c`, shrinking the margin from 2 down to 1 if needed.
fn interior_chain(gt: &Labeling, c: usize) -> Option<Chain> {
    let w = gt.width();
    for margin in [2, 1] {
        let mut best: Option<(usize, usize, usize)> = None; // (len, y, start)
        for y in 0..gt.height() {
            let mut x = 0;
            while x < w {
                if !is_interior(gt, y * w + x, margin) || gt.get(y * w + x) != c {
                    x += 1;
                    continue;
                }
                let start = x;
                while x < w && gt.get(y * w + x) == c && is_interior(gt, y * w + x, margin) {
                    x += 1;
                }
                let len = x - start;
                if best.is_none_or(|(l, _, _)| len > l) {
                    best = Some((len, y, start));
                }
            }
        }
        if let Some((len, y, start)) = best {
            let (a, k) = middle_third(start, len);
            return Some(Chain {
                label: c,
                pixels: (a..a + k).map(|x| (x, y)).collect(),
            });
        }
    }
    None
}
