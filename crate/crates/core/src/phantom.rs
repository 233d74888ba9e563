//! Synthetic concentric-ellipsoid phantoms and simulated partial annotations.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labelspace::{singleton_map, Dims, LabelSet, LabelSetMap};

/// Semi-axis scales of the shells along x, y and z.
pub const AXIS_SCALES: [f64; 3] = [1.0, 0.85, 0.7];
/// Intensity, normalized x, y, z and ellipsoidal radius.
pub const NUM_FEATURES: usize = 5;
pub const MAX_PHANTOM_LABELS: usize = 8;

/// Real-valued per-voxel feature channels, voxel-major.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    dims: Dims,
    channels: usize,
    values: Vec<f64>,
}

impl FeatureMap {
    pub fn new(dims: Dims, channels: usize, values: Vec<f64>) -> Result<Self> {
        dims.ensure_non_empty()?;
        if channels == 0 {
            return Err(Error::ShapeMismatch { expected: 1, found: 0 });
        }
        if values.len() != dims.len() * channels {
            return Err(Error::ShapeMismatch { expected: dims.len() * channels, found: values.len() });
        }
        if let Some(idx) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue(idx));
        }
        Ok(Self { dims, channels, values })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.channels..(i + 1) * self.channels]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomConfig {
    pub dims: Dims,
    pub num_labels: usize,
    pub noise_sigma: f64,
    /// Mean intensity per class; class 0 is the outermost (background).
    pub class_means: Vec<f64>,
    /// `num_labels - 1` strictly increasing normalized radii in (0, 1).
    pub shell_radii: Vec<f64>,
    pub seed: u64,
}

/// The innermost radius is large enough for an even-sided 8³ grid, which has
/// no voxel at the centre, to place a voxel inside it.
fn standard_radii(num_labels: usize) -> Vec<f64> {
    let shells = num_labels.saturating_sub(1);
    if shells <= 1 {
        return vec![0.6; shells];
    }
    (0..shells).map(|j| 0.35 + 0.55 * j as f64 / (shells - 1) as f64).collect()
}

impl PhantomConfig {
    /// Evenly spaced means, and radii evenly spaced over `[0.35, 0.9]`.
    pub fn standard(dims: Dims, num_labels: usize, noise_sigma: f64, seed: u64) -> Self {
        let shells = num_labels.saturating_sub(1).max(1) as f64;
        Self {
            dims,
            num_labels,
            noise_sigma,
            class_means: (0..num_labels).map(|c| c as f64 / shells).collect(),
            shell_radii: standard_radii(num_labels),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.num_labels;
        let bad = |msg: String| Err(Error::ConfigInvalid(msg));
        if self.dims.is_empty() {
            return bad(format!("empty dims {}", self.dims));
        }
        if !(2..=MAX_PHANTOM_LABELS).contains(&k) {
            return bad(format!("num_labels must be in 2..={MAX_PHANTOM_LABELS}, got {k}"));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return bad(format!("noise_sigma must be >= 0, got {}", self.noise_sigma));
        }
        if self.class_means.len() != k {
            return bad(format!("expected {k} class means, got {}", self.class_means.len()));
        }
        if self.class_means.iter().any(|m| !m.is_finite()) {
            return bad("non-finite class mean".into());
        }
        for (a, i) in self.class_means.iter().zip(0..) {
            if self.class_means[i + 1..].contains(a) {
                return bad(format!("class means must be distinct ({a} repeats)"));
            }
        }
        if self.shell_radii.len() != k - 1 {
            return bad(format!("expected {} shell radii, got {}", k - 1, self.shell_radii.len()));
        }
        if self.shell_radii.iter().any(|r| !(*r > 0.0 && *r < 1.0)) {
            return bad("shell radii must lie in (0, 1)".into());
        }
        if self.shell_radii.windows(2).any(|w| w[0] >= w[1]) {
            return bad("shell radii must be strictly increasing".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Phantom {
    pub features: FeatureMap,
    pub truth: LabelSetMap,
    pub partial: LabelSetMap,
    /// Merged label-set of the classes that were not annotated, if any.
    pub unannotated: Option<LabelSet>,
}

impl Phantom {
    pub fn dims(&self) -> Dims {
        self.truth.dims()
    }

    pub fn num_labels(&self) -> usize {
        self.truth.num_labels()
    }

    /// Replaces the partial annotation by the one obtained by merging `lprime`.
    pub fn with_unannotated(mut self, lprime: Option<LabelSet>) -> Result<Self> {
        self.partial = simulate_partial(&self.truth, lprime)?;
        self.unannotated = lprime.filter(|s| !s.is_singleton());
        Ok(self)
    }
}

/// Coordinate in [-1, 1] of index `i` along an axis of length `n`.
fn normalized(i: usize, n: usize) -> f64 {
    if n <= 1 {
        0.0
    } else {
        2.0 * i as f64 / (n - 1) as f64 - 1.0
    }
}

/// Ellipsoidal radius of a voxel and its normalized coordinates.
pub fn voxel_geometry(dims: Dims, x: usize, y: usize, z: usize) -> ([f64; 3], f64) {
    let xyz = [normalized(x, dims.x), normalized(y, dims.y), normalized(z, dims.z)];
    let r = xyz.iter().zip(AXIS_SCALES).map(|(c, s)| (c / s).powi(2)).sum::<f64>().sqrt();
    (xyz, r)
}

/// Class of the innermost shell containing radius `r`; class 0 lies outside
/// every shell.
pub fn shell_class(radii: &[f64], r: f64) -> usize {
    radii.iter().filter(|&&rad| r < rad).count()
}

pub fn generate(cfg: &PhantomConfig) -> Result<Phantom> {
    cfg.validate()?;
    let dims = cfg.dims;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, cfg.noise_sigma).map_err(|e| Error::ConfigInvalid(e.to_string()))?;
    let mut labels = Vec::with_capacity(dims.len());
    let mut values = Vec::with_capacity(dims.len() * NUM_FEATURES);
    for i in 0..dims.len() {
        let (x, y, z) = dims.coords(i);
        let (xyz, r) = voxel_geometry(dims, x, y, z);
        let class = shell_class(&cfg.shell_radii, r);
        let mut intensity = cfg.class_means[class];
        if cfg.noise_sigma > 0.0 {
            intensity += noise.sample(&mut rng);
        }
        labels.push(class);
        values.extend_from_slice(&[intensity, xyz[0], xyz[1], xyz[2], r]);
    }
    let truth = singleton_map(&labels, dims, cfg.num_labels)?;
    Ok(Phantom {
        features: FeatureMap::new(dims, NUM_FEATURES, values)?,
        partial: truth.clone(),
        truth,
        unannotated: None,
    })
}

/// Merges every voxel whose true class lies in `lprime` into the label-set
/// `lprime`; other voxels keep their singleton.
pub fn simulate_partial(truth: &LabelSetMap, lprime: Option<LabelSet>) -> Result<LabelSetMap> {
    if !truth.is_fully_annotated() {
        return Err(Error::ConfigInvalid("ground truth must be singleton-annotated".into()));
    }
    let Some(lprime) = lprime else {
        return Ok(truth.clone());
    };
    let k = truth.num_labels();
    LabelSet::new(lprime.mask(), k)?;
    if lprime == LabelSet::full(k) {
        return Err(Error::LPrimeIsFullSpace);
    }
    let voxels = truth
        .voxels()
        .iter()
        .map(|&t| if t.is_subset(lprime) { lprime } else { t })
        .collect();
    LabelSetMap::new(truth.dims(), k, voxels)
}
