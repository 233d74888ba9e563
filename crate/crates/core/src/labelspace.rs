//! Leaf-labels, label-sets and the two per-voxel maps every loss consumes.
//!
//! A [`LabelSet`] is a non-empty subset of the leaf-labels stored as a 64-bit
//! mask, so at most 64 leaf-labels are supported. Volumes are flattened
//! row-major with `x` varying fastest.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Maximum number of leaf-labels representable by a [`LabelSet`].
pub const MAX_LABELS: usize = 64;

/// Tolerance on `|Σ_c p_{i,c} - 1|` accepted by [`validate_probmap`].
pub const ROW_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub x: usize,
    pub y: usize,
    pub z: usize,
}

impl Dims {
    pub const fn new(x: usize, y: usize, z: usize) -> Self {
        Self { x, y, z }
    }

    pub const fn cube(n: usize) -> Self {
        Self::new(n, n, n)
    }

    pub const fn len(&self) -> usize {
        self.x * self.y * self.z
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat index of voxel `(x, y, z)`.
    #[inline]
    pub const fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.x * (y + self.y * z)
    }

    /// Inverse of [`Dims::index`].
    #[inline]
    pub const fn coords(&self, i: usize) -> (usize, usize, usize) {
        (i % self.x, (i / self.x) % self.y, i / (self.x * self.y))
    }

    pub(crate) fn ensure_same(&self, other: &Dims) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::DimsMismatch { left: *self, right: *other })
        }
    }

    pub(crate) fn ensure_non_empty(&self) -> Result<()> {
        if self.is_empty() {
            Err(Error::EmptyVolume)
        } else {
            Ok(())
        }
    }
}

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.x, self.y, self.z)
    }
}

/// Named leaf-labels.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct LabelSpace {
    names: Vec<String>,
}

impl LabelSpace {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.len() < 2 {
            return Err(Error::InvalidLabelSpace(format!(
                "need at least 2 labels, got {}",
                names.len()
            )));
        }
        if names.len() > MAX_LABELS {
            return Err(Error::InvalidLabelSpace(format!(
                "at most {MAX_LABELS} labels supported, got {}",
                names.len()
            )));
        }
        let mut seen = BTreeSet::new();
        for name in &names {
            if name.is_empty() {
                return Err(Error::InvalidLabelSpace("empty label name".into()));
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidLabelSpace(format!("duplicate label {name:?}")));
            }
        }
        Ok(Self { names })
    }

    /// Labels named `l0`, `l1`, ...
    pub fn numbered(num_labels: usize) -> Result<Self> {
        Self::new((0..num_labels).map(|c| format!("l{c}")))
    }

    pub fn num_labels(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, c: usize) -> &str {
        &self.names[c]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Resolves label names into a label-set. An empty list yields `None`.
    pub fn parse_set<S: AsRef<str>>(&self, names: &[S]) -> Result<Option<LabelSet>> {
        let mut mask = 0u64;
        for name in names {
            let name = name.as_ref();
            let c = self
                .index_of(name)
                .ok_or_else(|| Error::ConfigInvalid(format!("unknown label {name:?}")))?;
            mask |= 1 << c;
        }
        if mask == 0 {
            Ok(None)
        } else {
            LabelSet::new(mask, self.num_labels()).map(Some)
        }
    }

    pub fn set_names(&self, set: LabelSet) -> Vec<String> {
        set.iter().map(|c| self.names[c].clone()).collect()
    }
}

impl TryFrom<Vec<String>> for LabelSpace {
    type Error = Error;

    fn try_from(names: Vec<String>) -> Result<Self> {
        Self::new(names)
    }
}

impl From<LabelSpace> for Vec<String> {
    fn from(space: LabelSpace) -> Self {
        space.names
    }
}

/// A non-empty set of leaf-label indices.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LabelSet(u64);

impl LabelSet {
    pub fn new(mask: u64, num_labels: usize) -> Result<Self> {
        if mask == 0 || (num_labels < MAX_LABELS && mask >> num_labels != 0) {
            return Err(Error::InvalidLabelSet { mask, num_labels });
        }
        Ok(Self(mask))
    }

    /// # Panics
    /// Panics if `c >= 64`.
    pub fn singleton(c: usize) -> Self {
        assert!(c < MAX_LABELS, "label index {c} exceeds {MAX_LABELS}");
        Self(1 << c)
    }

    pub fn full(num_labels: usize) -> Self {
        assert!((1..=MAX_LABELS).contains(&num_labels));
        if num_labels == MAX_LABELS {
            Self(u64::MAX)
        } else {
            Self((1u64 << num_labels) - 1)
        }
    }

    pub fn from_indices(indices: &[usize], num_labels: usize) -> Result<Self> {
        let mut mask = 0u64;
        for &c in indices {
            if c >= num_labels {
                return Err(Error::IndexOutOfRange { index: c, num_labels });
            }
            mask |= 1 << c;
        }
        Self::new(mask, num_labels)
    }

    #[inline]
    pub fn mask(self) -> u64 {
        self.0
    }

    #[inline]
    #[allow(clippy::len_without_is_empty)]
    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    #[inline]
    pub fn contains(self, c: usize) -> bool {
        c < MAX_LABELS && self.0 >> c & 1 == 1
    }

    #[inline]
    pub fn is_singleton(self) -> bool {
        self.0.is_power_of_two()
    }

    /// The single member, if this is a singleton.
    #[inline]
    pub fn as_singleton(self) -> Option<usize> {
        self.is_singleton().then(|| self.0.trailing_zeros() as usize)
    }

    pub fn is_subset(self, other: LabelSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn is_disjoint(self, other: LabelSet) -> bool {
        self.0 & other.0 == 0
    }

    pub fn union(self, other: LabelSet) -> LabelSet {
        Self(self.0 | other.0)
    }

    /// Member indices in increasing order.
    pub fn iter(self) -> impl Iterator<Item = usize> {
        let mut rest = self.0;
        std::iter::from_fn(move || {
            if rest == 0 {
                None
            } else {
                let c = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                Some(c)
            }
        })
    }
}

impl fmt::Debug for LabelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

/// Per-voxel label-set annotation.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelSetMap {
    dims: Dims,
    num_labels: usize,
    voxels: Vec<LabelSet>,
    leaf_partition: bool,
}

impl LabelSetMap {
    pub fn new(dims: Dims, num_labels: usize, voxels: Vec<LabelSet>) -> Result<Self> {
        dims.ensure_non_empty()?;
        if voxels.len() != dims.len() {
            return Err(Error::ShapeMismatch { expected: dims.len(), found: voxels.len() });
        }
        if !(2..=MAX_LABELS).contains(&num_labels) {
            return Err(Error::InvalidLabelSpace(format!("unsupported label count {num_labels}")));
        }
        for g in &voxels {
            LabelSet::new(g.mask(), num_labels)?;
        }
        let leaf_partition = distinct_sets_disjoint(&voxels);
        Ok(Self { dims, num_labels, voxels, leaf_partition })
    }

    pub fn from_masks(dims: Dims, num_labels: usize, masks: &[u64]) -> Result<Self> {
        let voxels = masks
            .iter()
            .map(|&m| LabelSet::new(m, num_labels))
            .collect::<Result<Vec<_>>>()?;
        Self::new(dims, num_labels, voxels)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn num_voxels(&self) -> usize {
        self.voxels.len()
    }

    pub fn voxels(&self) -> &[LabelSet] {
        &self.voxels
    }

    pub fn get(&self, i: usize) -> LabelSet {
        self.voxels[i]
    }

    /// True iff the distinct label-sets occurring in the map are pairwise disjoint.
    pub fn is_leaf_partition(&self) -> bool {
        self.leaf_partition
    }

    pub fn is_fully_annotated(&self) -> bool {
        self.voxels.iter().all(|g| g.is_singleton())
    }

    /// Distinct label-sets in increasing mask order.
    pub fn distinct_sets(&self) -> Vec<LabelSet> {
        self.voxels.iter().copied().collect::<BTreeSet<_>>().into_iter().collect()
    }

    pub fn masks(&self) -> Vec<u64> {
        self.voxels.iter().map(|g| g.mask()).collect()
    }
}

fn distinct_sets_disjoint(voxels: &[LabelSet]) -> bool {
    let distinct: BTreeSet<u64> = voxels.iter().map(|g| g.mask()).collect();
    let mut union = 0u64;
    for mask in distinct {
        if union & mask != 0 {
            return false;
        }
        union |= mask;
    }
    true
}

/// Fully supervised annotation: voxel `i` gets the singleton `{labels[i]}`.
pub fn singleton_map(labels: &[usize], dims: Dims, num_labels: usize) -> Result<LabelSetMap> {
    dims.ensure_non_empty()?;
    if labels.len() != dims.len() {
        return Err(Error::ShapeMismatch { expected: dims.len(), found: labels.len() });
    }
    let voxels = labels
        .iter()
        .map(|&c| {
            if c < num_labels {
                Ok(LabelSet::singleton(c))
            } else {
                Err(Error::IndexOutOfRange { index: c, num_labels })
            }
        })
        .collect::<Result<Vec<_>>>()?;
    LabelSetMap::new(dims, num_labels, voxels)
}

/// Per-voxel probability vectors, `N × |L|` row-major over voxels.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbMap {
    dims: Dims,
    num_labels: usize,
    values: Vec<f64>,
}

impl ProbMap {
    /// Builds a map and checks that every row lies on the probability simplex.
    pub fn new(dims: Dims, num_labels: usize, values: Vec<f64>) -> Result<Self> {
        let p = Self::new_unchecked(dims, num_labels, values)?;
        validate_probmap(&p)?;
        Ok(p)
    }

    /// Builds a map checking only the shape. Used for soft targets and for
    /// finite-difference perturbations, which leave the simplex.
    pub fn new_unchecked(dims: Dims, num_labels: usize, values: Vec<f64>) -> Result<Self> {
        dims.ensure_non_empty()?;
        if num_labels == 0 {
            return Err(Error::InvalidLabelSpace("zero labels".into()));
        }
        let expected = dims.len() * num_labels;
        if values.len() != expected {
            return Err(Error::ShapeMismatch { expected, found: values.len() });
        }
        Ok(Self { dims, num_labels, values })
    }

    pub fn uniform(dims: Dims, num_labels: usize) -> Result<Self> {
        let v = 1.0 / num_labels as f64;
        Self::new(dims, num_labels, vec![v; dims.len() * num_labels])
    }

    /// One-hot rows from a fully annotated map.
    pub fn one_hot(g: &LabelSetMap) -> Result<Self> {
        let k = g.num_labels();
        let mut values = vec![0.0; g.num_voxels() * k];
        for (i, set) in g.voxels().iter().enumerate() {
            let c = set.as_singleton().ok_or_else(|| {
                Error::InvalidLabelSpace(format!("voxel {i} is not singleton-annotated"))
            })?;
            values[i * k + c] = 1.0;
        }
        Self::new(g.dims(), k, values)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn num_voxels(&self) -> usize {
        self.dims.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.num_labels..(i + 1) * self.num_labels]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.values.chunks_exact(self.num_labels)
    }

    #[inline]
    pub fn get(&self, i: usize, c: usize) -> f64 {
        self.values[i * self.num_labels + c]
    }

    /// Same shape, new values.
    pub(crate) fn with_values(&self, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        Self { dims: self.dims, num_labels: self.num_labels, values }
    }

    pub(crate) fn ensure_matches(&self, g: &LabelSetMap) -> Result<()> {
        self.dims.ensure_same(&g.dims())?;
        if self.num_labels != g.num_labels() {
            return Err(Error::ShapeMismatch { expected: g.num_labels(), found: self.num_labels });
        }
        Ok(())
    }

    pub(crate) fn ensure_same_shape(&self, other: &ProbMap) -> Result<()> {
        self.dims.ensure_same(&other.dims)?;
        if self.num_labels != other.num_labels {
            return Err(Error::ShapeMismatch { expected: other.num_labels, found: self.num_labels });
        }
        Ok(())
    }
}

/// Checks that every entry of `p` is a finite non-negative number and that
/// every row sums to one within [`ROW_SUM_TOLERANCE`].
///
/// Negative entries are reported before row-sum violations; a row-sum
/// violation reports the voxel with the largest deviation.
pub fn validate_probmap(p: &ProbMap) -> Result<()> {
    let expected = p.dims.len() * p.num_labels;
    if p.values.len() != expected {
        return Err(Error::ShapeMismatch { expected, found: p.values.len() });
    }
    for (idx, &v) in p.values.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFiniteValue(idx));
        }
        if v < 0.0 {
            return Err(Error::NegativeProbability {
                voxel: idx / p.num_labels,
                class: idx % p.num_labels,
                value: v,
            });
        }
    }
    let mut worst: Option<(usize, f64)> = None;
    for (i, row) in p.rows().enumerate() {
        let deviation = row.iter().sum::<f64>() - 1.0;
        if deviation.abs() > ROW_SUM_TOLERANCE
            && worst.is_none_or(|(_, d)| deviation.abs() > d.abs())
        {
            worst = Some((i, deviation));
        }
    }
    match worst {
        Some((voxel, deviation)) => Err(Error::RowSumViolation { voxel, deviation }),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_rows_validate() {
        let p = ProbMap::new_unchecked(Dims::new(4, 1, 1), 3, vec![1.0 / 3.0; 12]).unwrap();
        validate_probmap(&p).unwrap();
    }

    #[test]
    fn negative_entry_rejected() {
        let err = ProbMap::new(Dims::new(1, 1, 1), 3, vec![0.5, 0.6, -0.1]).unwrap_err();
        assert!(matches!(err, Error::NegativeProbability { voxel: 0, class: 2, .. }));
    }

    #[test]
    fn row_sum_violation_reports_deviation() {
        let err = ProbMap::new(
            Dims::new(2, 1, 1),
            3,
            vec![0.2, 0.3, 0.5, 0.5, 0.5, 0.1],
        )
        .unwrap_err();
        match err {
            Error::RowSumViolation { voxel, deviation } => {
                assert_eq!(voxel, 1);
                assert!((deviation - 0.1).abs() < 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn singleton_map_encodes_bits() {
        let g = singleton_map(&[0, 1, 1, 0], Dims::new(4, 1, 1), 2).unwrap();
        assert_eq!(g.masks(), vec![1, 2, 2, 1]);
        assert!(g.is_leaf_partition());
        assert!(g.voxels().iter().all(|s| s.len() == 1));
    }

    #[test]
    fn singleton_map_rejects_empty_and_out_of_range() {
        assert!(matches!(singleton_map(&[], Dims::new(0, 0, 0), 2), Err(Error::EmptyVolume)));
        assert!(matches!(
            singleton_map(&[3], Dims::new(1, 1, 1), 3),
            Err(Error::IndexOutOfRange { index: 3, num_labels: 3 })
        ));
    }

    #[test]
    fn leaf_partition_flag() {
        // {L'} ∪ singletons outside L'
        let g = LabelSetMap::from_masks(Dims::new(4, 1, 1), 4, &[0b0001, 0b1100, 0b0010, 0b1100])
            .unwrap();
        assert!(g.is_leaf_partition());
        // {0,1} overlaps {1}
        let g = LabelSetMap::from_masks(Dims::new(2, 1, 1), 3, &[0b011, 0b010]).unwrap();
        assert!(!g.is_leaf_partition());
    }

    #[test]
    fn labelset_rejects_bits_outside_space() {
        assert!(LabelSet::new(0b1000, 3).is_err());
        assert!(LabelSet::new(0, 3).is_err());
        let s = LabelSet::new(0b101, 3).unwrap();
        assert_eq!(s.iter().collect::<Vec<_>>(), vec![0, 2]);
        assert_eq!(s.len(), 2);
        assert_eq!(LabelSet::full(64).len(), 64);
    }

    #[test]
    fn label_space_validation() {
        assert!(LabelSpace::new(["a"]).is_err());
        assert!(LabelSpace::new(["a", "a"]).is_err());
        assert!(LabelSpace::new(["a", ""]).is_err());
        let space = LabelSpace::new(["wm", "csf", "cgm"]).unwrap();
        let set = space.parse_set(&["cgm", "wm"]).unwrap().unwrap();
        assert_eq!(set.mask(), 0b101);
        assert!(space.parse_set::<&str>(&[]).unwrap().is_none());
        assert!(matches!(space.parse_set(&["x"]), Err(Error::ConfigInvalid(_))));
    }

    #[test]
    fn dims_index_round_trip() {
        let d = Dims::new(3, 4, 5);
        for i in 0..d.len() {
            let (x, y, z) = d.coords(i);
            assert_eq!(d.index(x, y, z), i);
        }
    }
}
