//! Dice score and 95th-percentile Hausdorff distance on hard segmentations.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::labelspace::{Dims, LabelSetMap, ProbMap};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HardSeg {
    dims: Dims,
    num_labels: usize,
    labels: Vec<usize>,
}

impl HardSeg {
    pub fn new(dims: Dims, num_labels: usize, labels: Vec<usize>) -> Result<Self> {
        dims.ensure_non_empty()?;
        if labels.len() != dims.len() {
            return Err(Error::ShapeMismatch { expected: dims.len(), found: labels.len() });
        }
        if let Some(&c) = labels.iter().find(|&&c| c >= num_labels) {
            return Err(Error::IndexOutOfRange { index: c, num_labels });
        }
        Ok(Self { dims, num_labels, labels })
    }

    /// Per-voxel argmax; ties go to the lowest class index.
    pub fn from_probs(p: &ProbMap) -> Self {
        let labels = p
            .rows()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (c, &v)| if v > best.1 { (c, v) } else { best })
                    .0
            })
            .collect();
        Self { dims: p.dims(), num_labels: p.num_labels(), labels }
    }

    /// Requires a singleton-annotated map.
    pub fn from_truth(g: &LabelSetMap) -> Result<Self> {
        let labels = g
            .voxels()
            .iter()
            .enumerate()
            .map(|(i, s)| {
                s.as_singleton().ok_or_else(|| {
                    Error::InvalidLabelSpace(format!("voxel {i} is not singleton-annotated"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(g.dims(), g.num_labels(), labels)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn mask(&self, c: usize) -> Vec<bool> {
        self.labels.iter().map(|&l| l == c).collect()
    }

    /// Voxels of class `c` with at least one of their six face neighbours
    /// outside the class. Voxels on the volume border count as boundary.
    pub fn boundary(&self, c: usize) -> Vec<[usize; 3]> {
        let d = self.dims;
        let inside = |x: usize, y: usize, z: usize| self.labels[d.index(x, y, z)] == c;
        let mut out = Vec::new();
        for (i, &l) in self.labels.iter().enumerate() {
            if l != c {
                continue;
            }
            let (x, y, z) = d.coords(i);
            let edge = x == 0 || y == 0 || z == 0 || x + 1 == d.x || y + 1 == d.y || z + 1 == d.z;
            if edge
                || !inside(x - 1, y, z)
                || !inside(x + 1, y, z)
                || !inside(x, y - 1, z)
                || !inside(x, y + 1, z)
                || !inside(x, y, z - 1)
                || !inside(x, y, z + 1)
            {
                out.push([x, y, z]);
            }
        }
        out
    }
}

fn ensure_comparable(a: &HardSeg, b: &HardSeg) -> Result<()> {
    a.dims.ensure_same(&b.dims)
}

/// `2|A∩B| / (|A| + |B|)` for class `c`; 1 when both masks are empty.
pub fn dice_score(a: &HardSeg, b: &HardSeg, c: usize) -> Result<f64> {
    ensure_comparable(a, b)?;
    let (mut na, mut nb, mut both) = (0usize, 0usize, 0usize);
    for (&la, &lb) in a.labels.iter().zip(&b.labels) {
        na += (la == c) as usize;
        nb += (lb == c) as usize;
        both += (la == c && lb == c) as usize;
    }
    if na + nb == 0 {
        Ok(1.0)
    } else {
        Ok(2.0 * both as f64 / (na + nb) as f64)
    }
}

/// Distance from each point of `from` to its nearest point in `to`.
pub fn directed_distances(from: &[[usize; 3]], to: &[[usize; 3]], spacing: [f64; 3]) -> Vec<f64> {
    from.par_iter()
        .map(|p| {
            to.iter()
                .map(|q| {
                    (0..3)
                        .map(|k| ((p[k] as f64 - q[k] as f64) * spacing[k]).powi(2))
                        .sum::<f64>()
                })
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .collect()
}

/// Nearest-rank percentile: the `ceil(q/100 · n)`-th smallest value.
pub fn percentile_nearest_rank(values: &mut [f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let rank = ((q / 100.0) * values.len() as f64).ceil() as usize;
    Some(values[rank.clamp(1, values.len()) - 1])
}

fn symmetric_boundary_distances(
    a: &HardSeg,
    b: &HardSeg,
    c: usize,
    spacing: [f64; 3],
) -> Result<Option<Vec<f64>>> {
    ensure_comparable(a, b)?;
    if spacing.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(Error::ConfigInvalid(format!("spacing must be positive, got {spacing:?}")));
    }
    let (ba, bb) = (a.boundary(c), b.boundary(c));
    if ba.is_empty() || bb.is_empty() {
        return Ok(None);
    }
    let mut all = directed_distances(&ba, &bb, spacing);
    all.extend(directed_distances(&bb, &ba, spacing));
    Ok(Some(all))
}

/// 95th percentile (nearest rank) of the concatenated boundary-to-boundary
/// nearest distances in both directions; `None` if either mask is empty.
pub fn hd95(a: &HardSeg, b: &HardSeg, c: usize, spacing: [f64; 3]) -> Result<Option<f64>> {
    Ok(symmetric_boundary_distances(a, b, c, spacing)?
        .and_then(|mut d| percentile_nearest_rank(&mut d, 95.0)))
}

/// Largest boundary-to-boundary nearest distance.
pub fn hausdorff(a: &HardSeg, b: &HardSeg, c: usize, spacing: [f64; 3]) -> Result<Option<f64>> {
    Ok(symmetric_boundary_distances(a, b, c, spacing)?
        .map(|d| d.into_iter().fold(0.0, f64::max)))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CaseMetrics {
    pub dsc: Vec<f64>,
    pub hd95: Vec<Option<f64>>,
}

pub fn evaluate_case(pred: &HardSeg, truth: &HardSeg, spacing: [f64; 3]) -> Result<CaseMetrics> {
    ensure_comparable(pred, truth)?;
    let k = truth.num_labels;
    let dsc = (0..k).map(|c| dice_score(pred, truth, c)).collect::<Result<Vec<_>>>()?;
    let hd95 = (0..k).map(|c| hd95(pred, truth, c, spacing)).collect::<Result<Vec<_>>>()?;
    Ok(CaseMetrics { dsc, hd95 })
}
