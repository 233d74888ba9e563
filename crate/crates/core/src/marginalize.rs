//! The marginalization map Φ, the maximum-entropy embedding Ψ₀ of a label-set
//! annotation, and a generator of Φ-equivalent prediction pairs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::labelspace::{LabelSetMap, ProbMap};

/// Two predictions with the same image under Φ for `annotation`.
#[derive(Clone, Debug)]
pub struct EquivalenceSample {
    pub base: ProbMap,
    pub variant: ProbMap,
    pub annotation: LabelSetMap,
}

/// Replaces, at every voxel, the probabilities of the classes in `g_i` by
/// their mean; classes outside `g_i` are copied.
///
/// Works on any array of the right shape, not only on the simplex.
pub fn phi(p: &ProbMap, g: &LabelSetMap) -> Result<ProbMap> {
    p.ensure_matches(g)?;
    let k = p.num_labels();
    let mut out = p.values().to_vec();
    for (i, set) in g.voxels().iter().enumerate() {
        if set.is_singleton() {
            continue;
        }
        let row = &mut out[i * k..(i + 1) * k];
        let mean = set.iter().map(|c| row[c]).sum::<f64>() / set.len() as f64;
        for c in set.iter() {
            row[c] = mean;
        }
    }
    Ok(p.with_values(out))
}

/// Uniform mass `1/|g_i|` over each voxel's label-set, zero elsewhere.
pub fn psi0(g: &LabelSetMap) -> ProbMap {
    let k = g.num_labels();
    let mut values = vec![0.0; g.num_voxels() * k];
    for (i, set) in g.voxels().iter().enumerate() {
        let w = 1.0 / set.len() as f64;
        for c in set.iter() {
            values[i * k + c] = w;
        }
    }
    ProbMap::new_unchecked(g.dims(), k, values).expect("LabelSetMap dims are non-empty")
}

/// Pulls a gradient taken with respect to `Φ(p; g)` back to `p`.
///
/// Φ is linear and acts voxel-wise: inside `g_i` every output is the mean of
/// the inputs, so each input coordinate in `g_i` receives the mean of the
/// incoming gradient over `g_i`. Outside `g_i` it is the identity.
pub fn phi_vjp(grad: &mut [f64], g: &LabelSetMap) {
    let k = g.num_labels();
    debug_assert_eq!(grad.len(), g.num_voxels() * k);
    for (i, set) in g.voxels().iter().enumerate() {
        if set.is_singleton() {
            continue;
        }
        let row = &mut grad[i * k..(i + 1) * k];
        let mean = set.iter().map(|c| row[c]).sum::<f64>() / set.len() as f64;
        for c in set.iter() {
            row[c] = mean;
        }
    }
}

/// Redistributes, at every voxel, the mass `Σ_{c∈g_i} p_{i,c}` over `g_i`
/// with a random convex combination. Entries outside `g_i` are copied.
pub fn sample_equivalent(p: &ProbMap, g: &LabelSetMap, seed: u64) -> Result<EquivalenceSample> {
    p.ensure_matches(g)?;
    let k = p.num_labels();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = p.values().to_vec();
    let mut weights = Vec::with_capacity(k);
    for (i, set) in g.voxels().iter().enumerate() {
        if set.is_singleton() {
            continue;
        }
        let row = &mut out[i * k..(i + 1) * k];
        let total: f64 = set.iter().map(|c| row[c]).sum();
        // Exponential spacings normalized to one are Dirichlet(1, ..., 1).
        weights.clear();
        weights.extend(set.iter().map(|_| -(1.0 - rng.random::<f64>()).ln()));
        let norm: f64 = weights.iter().sum();
        if norm > 0.0 {
            for (c, w) in set.iter().zip(&weights) {
                row[c] = total * w / norm;
            }
        }
    }
    Ok(EquivalenceSample { base: p.clone(), variant: p.with_values(out), annotation: g.clone() })
}
