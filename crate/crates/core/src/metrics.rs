//! Segmentation quality: mIoU, pixel accuracy and boundary-band (trimap)
//! accuracy.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{arg, shape, Result};
use crate::types::Labeling;

/// Radii reported in [`EvalReport`].
pub const TRIMAP_RADII: [usize; 2] = [8, 16];

fn check_pair(pred: &Labeling, gt: &Labeling) -> Result<()> {
    if pred.width() != gt.width() || pred.height() != gt.height() {
        return shape(format!(
            "prediction is {}x{}, ground truth is {}x{}",
            pred.width(),
            pred.height(),
            gt.width(),
            gt.height()
        ));
    }
    if pred.num_labels() != gt.num_labels() {
        return shape("prediction and ground truth have different label counts");
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IouResult {
    /// `None` for classes absent from both prediction and ground truth.
    pub per_class: Vec<Option<f64>>,
    /// Mean over classes present in the ground truth.
    pub mean: f64,
}

pub fn miou(pred: &Labeling, gt: &Labeling) -> Result<IouResult> {
    check_pair(pred, gt)?;
    let k = gt.num_labels();
    let mut inter = vec![0usize; k];
    let mut pred_n = vec![0usize; k];
    let mut gt_n = vec![0usize; k];
    for (&a, &b) in pred.labels().iter().zip(gt.labels()) {
        pred_n[a] += 1;
        gt_n[b] += 1;
        if a == b {
            inter[a] += 1;
        }
    }
    let per_class: Vec<Option<f64>> = (0..k)
        .map(|c| {
            let union = pred_n[c] + gt_n[c] - inter[c];
            (union > 0).then(|| inter[c] as f64 / union as f64)
        })
        .collect();
    let present: Vec<(u128, u128)> = (0..k)
        .filter(|&c| gt_n[c] > 0)
        .map(|c| (inter[c] as u128, (pred_n[c] + gt_n[c] - inter[c]) as u128))
        .collect();
    let mean = exact_mean(&present).unwrap_or_else(|| {
        present.iter().map(|&(a, b)| a as f64 / b as f64).sum::<f64>() / present.len() as f64
    });
    Ok(IouResult { per_class, mean })
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Mean of fractions as one correctly rounded division, when it fits.
fn exact_mean(fracs: &[(u128, u128)]) -> Option<f64> {
    let (mut num, mut den) = (0u128, 1u128);
    for &(a, b) in fracs {
        let g = gcd(den, b);
        let l = den / g;
        num = num.checked_mul(b / g)?.checked_add(a.checked_mul(l)?)?;
        den = den.checked_mul(b / g)?;
        let r = gcd(num, den).max(1);
        (num, den) = (num / r, den / r);
    }
    den = den.checked_mul(fracs.len() as u128)?;
    let r = gcd(num, den).max(1);
    (num, den) = (num / r, den / r);
    const EXACT: u128 = 1 << 53;
    (num <= EXACT && den <= EXACT).then(|| num as f64 / den as f64)
}

pub fn pixel_accuracy(pred: &Labeling, gt: &Labeling) -> Result<f64> {
    check_pair(pred, gt)?;
    let hits = pred.labels().iter().zip(gt.labels()).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / gt.num_pixels() as f64)
}

/// Ground-truth pixels with a 4-neighbor of a different label.
pub fn boundary_pixels(gt: &Labeling) -> Vec<usize> {
    let (w, h) = (gt.width(), gt.height());
    let l = gt.labels();
    (0..w * h)
        .filter(|&p| {
            let (x, y) = (p % w, p / w);
            (x + 1 < w && l[p + 1] != l[p])
                || (x > 0 && l[p - 1] != l[p])
                || (y + 1 < h && l[p + w] != l[p])
                || (y > 0 && l[p - w] != l[p])
        })
        .collect()
}

/// Mask of pixels within `radius` of the label edge. Boundary pixels touch
/// the edge and have depth 1; depth grows by one per 8-connected BFS step.
pub fn trimap_band(gt: &Labeling, radius: usize) -> Vec<bool> {
    let (w, h) = (gt.width(), gt.height());
    let mut dist = vec![usize::MAX; w * h];
    let mut queue = VecDeque::new();
    for p in boundary_pixels(gt) {
        dist[p] = 1;
        queue.push_back(p);
    }
    while let Some(p) = queue.pop_front() {
        let d = dist[p];
        if d >= radius {
            continue;
        }
        let (x, y) = ((p % w) as isize, (p / w) as isize);
        for dy in -1..=1isize {
            for dx in -1..=1isize {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let q = ny as usize * w + nx as usize;
                if dist[q] == usize::MAX {
                    dist[q] = d + 1;
                    queue.push_back(q);
                }
            }
        }
    }
    dist.into_iter().map(|d| d <= radius).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrimapResult {
    pub radius: usize,
    /// `None` when the band is empty (constant ground truth).
    pub accuracy: Option<f64>,
    pub band_pixels: usize,
}

pub fn trimap_accuracy(pred: &Labeling, gt: &Labeling, radius: usize) -> Result<TrimapResult> {
    check_pair(pred, gt)?;
    if radius < 1 {
        return arg("trimap radius must be >= 1");
    }
    let band = trimap_band(gt, radius);
    let mut n = 0usize;
    let mut hits = 0usize;
    for (p, inside) in band.into_iter().enumerate() {
        if inside {
            n += 1;
            hits += usize::from(pred.get(p) == gt.get(p));
        }
    }
    Ok(TrimapResult {
        radius,
        accuracy: (n > 0).then(|| hits as f64 / n as f64),
        band_pixels: n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_class_iou: Vec<Option<f64>>,
    pub miou: f64,
    pub pixel_accuracy: f64,
    pub trimap_8: Option<f64>,
    pub trimap_16: Option<f64>,
    pub pixels: usize,
    pub trimap_8_pixels: usize,
    pub trimap_16_pixels: usize,
}

pub fn evaluate(pred: &Labeling, gt: &Labeling) -> Result<EvalReport> {
    let iou = miou(pred, gt)?;
    let t8 = trimap_accuracy(pred, gt, TRIMAP_RADII[0])?;
    let t16 = trimap_accuracy(pred, gt, TRIMAP_RADII[1])?;
    Ok(EvalReport {
        per_class_iou: iou.per_class,
        miou: iou.mean,
        pixel_accuracy: pixel_accuracy(pred, gt)?,
        trimap_8: t8.accuracy,
        trimap_16: t16.accuracy,
        pixels: gt.num_pixels(),
        trimap_8_pixels: t8.band_pixels,
        trimap_16_pixels: t16.band_pixels,
    })
}

/// Accuracy restricted to scribbled pixels; `None` when nothing is scribbled.
pub fn labeled_accuracy(pred: &Labeling, mask: &crate::types::ScribbleMask) -> Option<f64> {
    let mut n = 0usize;
    let mut hits = 0usize;
    for (p, y) in mask.labeled() {
        n += 1;
        hits += usize::from(pred.get(p) == y);
    }
    (n > 0).then(|| hits as f64 / n as f64)
}
