//! Raster, labeling, probability and scribble data model.
//!
//! Everything here is immutable after construction. Pixels are addressed by
//! a flat row-major index `p = y * width + x`.

use std::collections::HashSet;

use crate::error::{arg, shape, Error, Result};

/// Tolerance on the row sums of a [`SoftSegmentation`].
pub const ROW_SUM_TOL: f64 = 1e-6;

/// A row-major raster of per-pixel intensity vectors in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridImage {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl GridImage {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return arg(format!("channels must be 1 or 3, got {channels}"));
        }
        if width == 0 || height == 0 {
            return arg("image must have at least one pixel");
        }
        if data.len() != width * height * channels {
            return shape(format!(
                "image data has {} values, expected {}x{}x{}",
                data.len(),
                width,
                height,
                channels
            ));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(Error::Numeric(format!("intensity {v} outside [0,1]")));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// Single-channel image from a slice of intensities.
    pub fn gray(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(width, height, 1, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn num_pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Channel values of pixel `p`.
    pub fn pixel(&self, p: usize) -> &[f64] {
        &self.data[p * self.channels..(p + 1) * self.channels]
    }

    /// Squared Euclidean distance between the colors of two pixels.
    pub fn color_dist2(&self, p: usize, q: usize) -> f64 {
        self.pixel(p)
            .iter()
            .zip(self.pixel(q))
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }
}

/// One discrete label per pixel.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Labeling {
    width: usize,
    height: usize,
    num_labels: usize,
    labels: Vec<usize>,
}

impl Labeling {
    pub fn new(width: usize, height: usize, num_labels: usize, labels: Vec<usize>) -> Result<Self> {
        if num_labels == 0 {
            return arg("num_labels must be positive");
        }
        if labels.len() != width * height {
            return shape(format!(
                "labeling has {} entries, expected {}",
                labels.len(),
                width * height
            ));
        }
        if let Some(l) = labels.iter().find(|l| **l >= num_labels) {
            return arg(format!("label {l} out of range for K={num_labels}"));
        }
        Ok(Self {
            width,
            height,
            num_labels,
            labels,
        })
    }

    pub fn constant(width: usize, height: usize, num_labels: usize, label: usize) -> Result<Self> {
        Self::new(width, height, num_labels, vec![label; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn num_pixels(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn get(&self, p: usize) -> usize {
        self.labels[p]
    }

    pub fn into_labels(self) -> Vec<usize> {
        self.labels
    }

    /// Copy with the labels replaced; sizes must agree.
    pub fn with_labels(&self, labels: Vec<usize>) -> Result<Self> {
        Self::new(self.width, self.height, self.num_labels, labels)
    }
}

/// Per-pixel K-way probability rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftSegmentation {
    width: usize,
    height: usize,
    num_labels: usize,
    probs: Vec<f64>,
}

impl SoftSegmentation {
    /// Validates that every row lies in the simplex (to [`ROW_SUM_TOL`]).
    pub fn new(width: usize, height: usize, num_labels: usize, probs: Vec<f64>) -> Result<Self> {
        if num_labels == 0 {
            return arg("num_labels must be positive");
        }
        if probs.len() != width * height * num_labels {
            return shape(format!(
                "soft segmentation has {} values, expected {}",
                probs.len(),
                width * height * num_labels
            ));
        }
        for (p, row) in probs.chunks(num_labels).enumerate() {
            if row.iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
                return Err(Error::Numeric(format!("row {p} has entries outside [0,1]")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::Numeric(format!("row {p} sums to {s}")));
            }
        }
        Ok(Self {
            width,
            height,
            num_labels,
            probs,
        })
    }

    /// Row-wise softmax of raw scores.
    pub fn from_scores(width: usize, height: usize, num_labels: usize, scores: &[f64]) -> Result<Self> {
        if scores.len() != width * height * num_labels || num_labels == 0 {
            return shape("score buffer does not match segmentation shape");
        }
        let mut probs = vec![0.0; scores.len()];
        for (out, row) in probs.chunks_mut(num_labels).zip(scores.chunks(num_labels)) {
            softmax_into(row, out)?;
        }
        Ok(Self {
            width,
            height,
            num_labels,
            probs,
        })
    }

    /// One-hot rows for a hard labeling.
    pub fn from_labeling(labeling: &Labeling) -> Self {
        let k = labeling.num_labels();
        let mut probs = vec![0.0; labeling.num_pixels() * k];
        for (p, &l) in labeling.labels().iter().enumerate() {
            probs[p * k + l] = 1.0;
        }
        Self {
            width: labeling.width(),
            height: labeling.height(),
            num_labels: k,
            probs,
        }
    }

    /// Uniform rows.
    pub fn uniform(width: usize, height: usize, num_labels: usize) -> Self {
        Self {
            width,
            height,
            num_labels,
            probs: vec![1.0 / num_labels as f64; width * height * num_labels],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn num_pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn row(&self, p: usize) -> &[f64] {
        &self.probs[p * self.num_labels..(p + 1) * self.num_labels]
    }

    /// Hard labeling by per-pixel argmax; ties go to the lowest label.
    pub fn argmax(&self) -> Labeling {
        let labels = self
            .probs
            .chunks(self.num_labels)
            .map(|row| {
                let mut best = 0;
                for (k, v) in row.iter().enumerate() {
                    if *v > row[best] {
                        best = k;
                    }
                }
                best
            })
            .collect();
        Labeling {
            width: self.width,
            height: self.height,
            num_labels: self.num_labels,
            labels,
        }
    }
}

/// One scribble stroke: a label and the ordered pixels `(x, y)` along it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chain {
    pub label: usize,
    pub pixels: Vec<(usize, usize)>,
}

/// Partial ground truth: per pixel either unlabeled or a label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScribbleMask {
    width: usize,
    height: usize,
    num_labels: usize,
    entries: Vec<Option<usize>>,
    chains: Option<Vec<Chain>>,
}

impl ScribbleMask {
    pub fn new(
        width: usize,
        height: usize,
        num_labels: usize,
        entries: Vec<Option<usize>>,
        chains: Option<Vec<Chain>>,
    ) -> Result<Self> {
        if entries.len() != width * height {
            return shape(format!(
                "scribble mask has {} entries, expected {}",
                entries.len(),
                width * height
            ));
        }
        if let Some(l) = entries.iter().flatten().find(|l| **l >= num_labels) {
            return arg(format!("scribble label {l} out of range for K={num_labels}"));
        }
        if let Some(chains) = &chains {
            for c in chains {
                if c.label >= num_labels {
                    return arg(format!("chain label {} out of range", c.label));
                }
                if c.pixels.is_empty() {
                    return arg("empty scribble chain");
                }
                if c.pixels.iter().any(|&(x, y)| x >= width || y >= height) {
                    return arg("chain pixel outside the image");
                }
            }
        }
        Ok(Self {
            width,
            height,
            num_labels,
            entries,
            chains,
        })
    }

    /// Rasterizes the chains; later chains overwrite earlier ones where they cross.
    pub fn from_chains(width: usize, height: usize, num_labels: usize, chains: Vec<Chain>) -> Result<Self> {
        let mut entries = vec![None; width * height];
        for c in &chains {
            for &(x, y) in &c.pixels {
                if x >= width || y >= height {
                    return arg(format!("chain pixel ({x},{y}) outside {width}x{height}"));
                }
                entries[y * width + x] = Some(c.label);
            }
        }
        Self::new(width, height, num_labels, entries, Some(chains))
    }

    /// A mask with no labeled pixels.
    pub fn empty(width: usize, height: usize, num_labels: usize) -> Self {
        Self {
            width,
            height,
            num_labels,
            entries: vec![None; width * height],
            chains: None,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn num_pixels(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[Option<usize>] {
        &self.entries
    }

    pub fn get(&self, p: usize) -> Option<usize> {
        self.entries[p]
    }

    pub fn chains(&self) -> Option<&[Chain]> {
        self.chains.as_deref()
    }

    pub fn labeled_count(&self) -> usize {
        self.entries.iter().filter(|e| e.is_some()).count()
    }

    /// Labeled pixels `(p, label)` in raster order.
    pub fn labeled(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.entries
            .iter()
            .enumerate()
            .filter_map(|(p, e)| e.map(|l| (p, l)))
    }
}

/// Neighborhood system of a pairwise model.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Neighborhood {
    Grid4,
    Grid8,
    /// All pairs within `radius` pixels (Euclidean).
    Dense { radius: f64 },
}

impl Neighborhood {
    /// Forward offsets `(dx, dy)`: each unordered pair is produced once.
    pub fn offsets(&self) -> Vec<(isize, isize)> {
        match *self {
            Neighborhood::Grid4 => vec![(1, 0), (0, 1)],
            Neighborhood::Grid8 => vec![(1, 0), (-1, 1), (0, 1), (1, 1)],
            Neighborhood::Dense { radius } => {
                let r = radius.floor().max(0.0) as isize;
                let r2 = radius * radius;
                let mut out = Vec::new();
                for dy in 0..=r {
                    for dx in -r..=r {
                        if dy == 0 && dx <= 0 {
                            continue;
                        }
                        if ((dx * dx + dy * dy) as f64) <= r2 {
                            out.push((dx, dy));
                        }
                    }
                }
                out
            }
        }
    }

    /// All unordered neighbor pairs `(p, q)` with `p < q` in raster order of `p`.
    pub fn pairs(&self, width: usize, height: usize) -> Vec<(usize, usize)> {
        let offsets = self.offsets();
        let mut out = Vec::new();
        for y in 0..height {
            for x in 0..width {
                let p = y * width + x;
                for &(dx, dy) in &offsets {
                    let qx = x as isize + dx;
                    let qy = y as isize + dy;
                    if qx < 0 || qy < 0 || qx >= width as isize || qy >= height as isize {
                        continue;
                    }
                    let q = qy as usize * width + qx as usize;
                    out.push((p.min(q), p.max(q)));
                }
            }
        }
        out
    }
}

/// A weighted undirected edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub p: usize,
    pub q: usize,
    pub w: f64,
}

/// Explicit weighted neighbor structure shared by all solvers.
#[derive(Debug, Clone)]
pub struct PairwiseGraph {
    num_pixels: usize,
    edges: Vec<Edge>,
    neighborhood: Neighborhood,
    // CSR adjacency: incident (neighbor, weight) for each pixel.
    adj_start: Vec<usize>,
    adj: Vec<(usize, f64)>,
}

impl PairwiseGraph {
    pub fn new(num_pixels: usize, edges: Vec<Edge>, neighborhood: Neighborhood) -> Result<Self> {
        let mut seen = HashSet::with_capacity(edges.len());
        for e in &edges {
            if e.p >= num_pixels || e.q >= num_pixels {
                return arg(format!("edge ({},{}) out of range", e.p, e.q));
            }
            if e.p == e.q {
                return arg(format!("self edge at pixel {}", e.p));
            }
            if !e.w.is_finite() || e.w < 0.0 {
                return Err(Error::Numeric(format!("edge weight {} invalid", e.w)));
            }
            if !seen.insert((e.p.min(e.q), e.p.max(e.q))) {
                return arg(format!("duplicate edge ({},{})", e.p, e.q));
            }
        }
        let mut degree = vec![0usize; num_pixels + 1];
        for e in &edges {
            degree[e.p + 1] += 1;
            degree[e.q + 1] += 1;
        }
        for i in 0..num_pixels {
            degree[i + 1] += degree[i];
        }
        let adj_start = degree;
        let mut fill = adj_start.clone();
        let mut adj = vec![(0usize, 0.0f64); adj_start[num_pixels]];
        for e in &edges {
            adj[fill[e.p]] = (e.q, e.w);
            fill[e.p] += 1;
            adj[fill[e.q]] = (e.p, e.w);
            fill[e.q] += 1;
        }
        Ok(Self {
            num_pixels,
            edges,
            neighborhood,
            adj_start,
            adj,
        })
    }

    pub fn num_pixels(&self) -> usize {
        self.num_pixels
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn neighborhood(&self) -> Neighborhood {
        self.neighborhood
    }

    /// Incident `(neighbor, weight)` pairs of pixel `p`.
    pub fn neighbors(&self, p: usize) -> &[(usize, f64)] {
        &self.adj[self.adj_start[p]..self.adj_start[p + 1]]
    }

    pub fn total_weight(&self) -> f64 {
        self.edges.iter().map(|e| e.w).sum()
    }

    /// Same topology with every weight multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let edges = self
            .edges
            .iter()
            .map(|e| Edge {
                w: e.w * factor,
                ..*e
            })
            .collect();
        Self::new(self.num_pixels, edges, self.neighborhood)
    }
}

/// Probability vector with a single unit entry at `label`.
pub fn one_hot(label: usize, k: usize) -> Result<Vec<f64>> {
    if label >= k {
        return arg(format!("label {label} out of range for K={k}"));
    }
    let mut v = vec![0.0; k];
    v[label] = 1.0;
    Ok(v)
}

/// Numerically stable softmax.
pub fn softmax(scores: &[f64]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; scores.len()];
    softmax_into(scores, &mut out)?;
    Ok(out)
}

/// Softmax written into `out` (same length as `scores`).
pub fn softmax_into(scores: &[f64], out: &mut [f64]) -> Result<()> {
    if scores.is_empty() {
        return arg("softmax of an empty vector");
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numeric("non-finite score in softmax".into()));
    }
    let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for (o, s) in out.iter_mut().zip(scores) {
        *o = (s - m).exp();
        z += *o;
    }
    for o in out.iter_mut() {
        *o /= z;
    }
    Ok(())
}

/// Shortens every chain from both ends to `ceil(keep_ratio * n)` pixels
/// (at least one), keeping the centered sub-chain that starts at
/// `floor((n - k) / 2)`.
pub fn shorten_scribbles(mask: &ScribbleMask, keep_ratio: f64) -> Result<ScribbleMask> {
    let Some(chains) = mask.chains() else {
        return Err(Error::Unsupported("scribble mask has no chains to shorten".into()));
    };
    if !(0.0..=1.0).contains(&keep_ratio) {
        return arg(format!("keep_ratio {keep_ratio} outside [0,1]"));
    }
    let shortened: Vec<Chain> = chains
        .iter()
        .map(|c| {
            let n = c.pixels.len();
            let (start, k) = kept_range(n, keep_ratio);
            Chain {
                label: c.label,
                pixels: c.pixels[start..start + k].to_vec(),
            }
        })
        .collect();

    // Pixels not covered by any chain keep their original entry.
    let mut entries = mask.entries().to_vec();
    for c in chains {
        for &(x, y) in &c.pixels {
            entries[y * mask.width() + x] = None;
        }
    }
    for c in &shortened {
        for &(x, y) in &c.pixels {
            entries[y * mask.width() + x] = Some(c.label);
        }
    }
    ScribbleMask::new(
        mask.width(),
        mask.height(),
        mask.num_labels(),
        entries,
        Some(shortened),
    )
}

/// `(start, len)` of the centered sub-chain kept out of `n` pixels.
pub fn kept_range(n: usize, keep_ratio: f64) -> (usize, usize) {
    let k = ((keep_ratio * n as f64).ceil() as usize).clamp(1, n.max(1));
    ((n - k) / 2, k)
}
