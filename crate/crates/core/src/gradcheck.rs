//! Central finite-difference checks of analytic gradients.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::labelspace::{LabelSetMap, ProbMap};
use crate::losses::LossSpec;

pub const MIN_STEP: f64 = 1e-8;
/// Entries of the checked prediction must lie in `[DOMAIN_MARGIN, 1 - DOMAIN_MARGIN]`.
pub const DOMAIN_MARGIN: f64 = 1e-3;
/// Floor on the denominator of the relative error.
pub const REL_ERROR_FLOOR: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GradReport {
    pub max_abs_error: f64,
    pub max_rel_error: f64,
    /// `(row, column)` of the worst relative error; `(voxel, class)` for
    /// probability maps.
    pub worst_index: (usize, usize),
    pub num_checked: usize,
}

impl GradReport {
    /// Combines two reports, keeping the worst index of the larger relative error.
    pub fn merge(self, other: GradReport) -> GradReport {
        let worst = if other.max_rel_error > self.max_rel_error { other } else { self };
        GradReport {
            max_abs_error: self.max_abs_error.max(other.max_abs_error),
            max_rel_error: worst.max_rel_error,
            worst_index: worst.worst_index,
            num_checked: self.num_checked + other.num_checked,
        }
    }
}

/// Compares `analytic[j]` with `(f(x + h e_j) - f(x - h e_j)) / 2h` for every
/// `j` in `coords`. `row_len` only shapes the reported index.
pub fn check_coordinates<F>(
    f: F,
    x: &[f64],
    analytic: &[f64],
    h: f64,
    coords: &[usize],
    row_len: usize,
) -> Result<GradReport>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    if !(h >= MIN_STEP) {
        return Err(Error::StepTooSmall(h));
    }
    if coords.is_empty() {
        return Err(Error::OutOfDomain("no coordinates to check".into()));
    }
    if analytic.len() != x.len() {
        return Err(Error::ShapeMismatch { expected: x.len(), found: analytic.len() });
    }
    let mut probe = x.to_vec();
    let mut report = GradReport {
        max_abs_error: 0.0,
        max_rel_error: 0.0,
        worst_index: (coords[0] / row_len, coords[0] % row_len),
        num_checked: 0,
    };
    for &j in coords {
        let x0 = probe[j];
        probe[j] = x0 + h;
        let plus = f(&probe)?;
        probe[j] = x0 - h;
        let minus = f(&probe)?;
        probe[j] = x0;
        let numeric = (plus - minus) / (2.0 * h);
        let abs = (numeric - analytic[j]).abs();
        let rel = abs / analytic[j].abs().max(REL_ERROR_FLOOR);
        report.max_abs_error = report.max_abs_error.max(abs);
        if rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst_index = (j / row_len, j % row_len);
        }
        report.num_checked += 1;
    }
    Ok(report)
}

/// Draws `sample` distinct coordinates out of `len`.
pub fn sample_coordinates(len: usize, sample: usize, seed: u64) -> Result<Vec<usize>> {
    if sample == 0 || sample > len {
        return Err(Error::OutOfDomain(format!("cannot sample {sample} of {len} coordinates")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coords = rand::seq::index::sample(&mut rng, len, sample).into_vec();
    coords.sort_unstable();
    Ok(coords)
}

/// Finite-difference check of `spec` bound to the annotation `g` at `p`,
/// on `sample` seeded-random coordinates. Coordinates are perturbed without
/// renormalizing the row.
pub fn central_diff(
    spec: &LossSpec,
    g: &LabelSetMap,
    p: &ProbMap,
    h: f64,
    sample: usize,
    seed: u64,
) -> Result<GradReport> {
    if !(h >= MIN_STEP) {
        return Err(Error::StepTooSmall(h));
    }
    if let Some(v) = p.values().iter().find(|v| !(DOMAIN_MARGIN..=1.0 - DOMAIN_MARGIN).contains(*v))
    {
        return Err(Error::OutOfDomain(format!("entry {v} too close to the simplex boundary")));
    }
    let analytic = spec.evaluate(p, g)?.gradient;
    let coords = sample_coordinates(p.values().len(), sample, seed)?;
    let (dims, k) = (p.dims(), p.num_labels());
    let f = |x: &[f64]| -> Result<f64> {
        let q = ProbMap::new_unchecked(dims, k, x.to_vec())?;
        Ok(spec.evaluate(&q, g)?.value)
    };
    check_coordinates(f, p.values(), &analytic, h, &coords, k)
}
