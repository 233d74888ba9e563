//! Seeded random predictions and annotations for property suites.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::labelspace::{Dims, LabelSet, LabelSetMap, ProbMap};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AnnotationKind {
    /// Every voxel fully annotated.
    Singletons,
    /// One unannotated set `L' ⊊ L` plus singletons outside it.
    LeafPartition,
    /// Values drawn from a random partition of `L`.
    Partition,
    /// Arbitrary non-empty subsets, possibly overlapping.
    Arbitrary,
}

impl AnnotationKind {
    pub const ALL: [AnnotationKind; 4] = [
        AnnotationKind::Singletons,
        AnnotationKind::LeafPartition,
        AnnotationKind::Partition,
        AnnotationKind::Arbitrary,
    ];
}

/// Rows drawn uniformly from the simplex, then shrunk so that every entry is
/// at least `margin`.
pub fn probmap<R: Rng>(rng: &mut R, dims: Dims, k: usize, margin: f64) -> ProbMap {
    assert!(margin * k as f64 <= 1.0);
    let mut values = Vec::with_capacity(dims.len() * k);
    for _ in 0..dims.len() {
        let row: Vec<f64> = (0..k).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
        let total: f64 = row.iter().sum();
        let scale = 1.0 - margin * k as f64;
        values.extend(row.iter().map(|v| margin + scale * v / total));
    }
    ProbMap::new(dims, k, values).expect("rows are normalized")
}

fn random_subset<R: Rng>(rng: &mut R, k: usize) -> LabelSet {
    loop {
        let mask = rng.random::<u64>() & LabelSet::full(k).mask();
        if mask != 0 {
            return LabelSet::new(mask, k).unwrap();
        }
    }
}

/// A random partition of `0..k` into non-empty blocks.
pub fn partition<R: Rng>(rng: &mut R, k: usize) -> Vec<LabelSet> {
    let num_blocks = rng.random_range(1..=k);
    let mut classes: Vec<usize> = (0..k).collect();
    classes.shuffle(rng);
    let mut blocks = vec![0u64; num_blocks];
    for (j, &c) in classes.iter().enumerate() {
        // the first `num_blocks` classes seed distinct blocks
        let b = if j < num_blocks { j } else { rng.random_range(0..num_blocks) };
        blocks[b] |= 1 << c;
    }
    blocks.into_iter().map(|m| LabelSet::new(m, k).unwrap()).collect()
}

pub fn annotation<R: Rng>(rng: &mut R, dims: Dims, k: usize, kind: AnnotationKind) -> LabelSetMap {
    let n = dims.len();
    let voxels: Vec<LabelSet> = match kind {
        AnnotationKind::Singletons => {
            (0..n).map(|_| LabelSet::singleton(rng.random_range(0..k))).collect()
        }
        AnnotationKind::LeafPartition => {
            if k < 3 {
                return annotation(rng, dims, k, AnnotationKind::Singletons);
            }
            let size = rng.random_range(2..k);
            let mut classes: Vec<usize> = (0..k).collect();
            classes.shuffle(rng);
            let lprime = LabelSet::from_indices(&classes[..size], k).unwrap();
            let rest = &classes[size..];
            (0..n)
                .map(|_| {
                    if rng.random_bool(0.4) {
                        lprime
                    } else {
                        LabelSet::singleton(rest[rng.random_range(0..rest.len())])
                    }
                })
                .collect()
        }
        AnnotationKind::Partition => {
            let blocks = partition(rng, k);
            let mut v: Vec<LabelSet> =
                (0..n).map(|_| blocks[rng.random_range(0..blocks.len())]).collect();
            // every block present when the volume is large enough
            if n >= blocks.len() {
                v[..blocks.len()].copy_from_slice(&blocks);
                v.shuffle(rng);
            }
            v
        }
        AnnotationKind::Arbitrary => (0..n).map(|_| random_subset(rng, k)).collect(),
    };
    LabelSetMap::new(dims, k, voxels).expect("valid label-sets")
}

/// Small random volume shape with `1..=max_side` voxels per axis.
pub fn dims<R: Rng>(rng: &mut R, max_side: usize) -> Dims {
    Dims::new(
        rng.random_range(1..=max_side),
        rng.random_range(1..=max_side),
        rng.random_range(1..=max_side),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generators_respect_their_structure() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for k in 2..=8 {
            let d = dims(&mut rng, 4);
            let p = probmap(&mut rng, d, k, 1e-3);
            assert!(p.values().iter().all(|&v| v >= 1e-3));
            assert!(annotation(&mut rng, d, k, AnnotationKind::Singletons).is_fully_annotated());
            assert!(annotation(&mut rng, d, k, AnnotationKind::LeafPartition).is_leaf_partition());
            assert!(annotation(&mut rng, d, k, AnnotationKind::Partition).is_leaf_partition());
            let blocks = partition(&mut rng, k);
            let union = blocks.iter().fold(0u64, |acc, b| {
                assert_eq!(acc & b.mask(), 0);
                acc | b.mask()
            });
            assert_eq!(union, LabelSet::full(k).mask());
        }
    }
}
