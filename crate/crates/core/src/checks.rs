//! Seeded property suites behind `labelset check`.
//!
//! Every row records the worst deviation seen over its instances and the
//! bound it is held to. Negative controls are rows that pass when a
//! violation is found.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gradcheck::{central_diff, check_coordinates};
use crate::labelspace::{Dims, LabelSet, LabelSetMap, ProbMap};
use crate::losses::{
    convert_fully_supervised, marginal_cross_entropy, CrossEntropyLoss, DiceLoss, LossKind,
    LossSpec,
};
use crate::marginalize::{phi, psi0, sample_equivalent};
use crate::phantom::{generate, PhantomConfig};
use crate::random::{self, AnnotationKind};
use crate::trainer::{objective, Model};

/// Seed used by the CLI when none is given.
pub const DEFAULT_SEED: u64 = 20_190_517;
pub const AXIOM_INSTANCES: usize = 200;
pub const ORACLE_INSTANCES: usize = 100;
pub const AXIOM_TOLERANCE: f64 = 1e-9;
pub const EXACT_TOLERANCE: f64 = 1e-12;
pub const GRAD_TOLERANCE: f64 = 1e-4;
pub const MODEL_GRAD_TOLERANCE: f64 = 1e-3;
pub const GRAD_STEP: f64 = 1e-4;
pub const NEGATIVE_CONTROL_GAP: f64 = 0.1;
/// Smallest probability in gradient-check inputs. Closer to the boundary the
/// truncation error of a step-`GRAD_STEP` difference on a log term alone
/// exceeds `GRAD_TOLERANCE`.
pub const GRAD_INTERIOR: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Axioms,
    Grad,
    Oracle,
}

impl Suite {
    pub const ALL: [Suite; 3] = [Suite::Axioms, Suite::Grad, Suite::Oracle];

    pub fn as_str(self) -> &'static str {
        match self {
            Suite::Axioms => "axioms",
            Suite::Grad => "grad",
            Suite::Oracle => "oracle",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::ConfigInvalid(format!("unknown check suite `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    /// The worst deviation must not exceed the tolerance.
    AtMost,
    /// Negative control: the observed gap must reach the tolerance.
    AtLeast,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PropertyRow {
    pub name: String,
    pub instances: usize,
    pub worst: f64,
    pub tolerance: f64,
    pub bound: Bound,
    pub passed: bool,
}

impl PropertyRow {
    fn at_most(name: impl Into<String>, instances: usize, worst: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            instances,
            worst,
            tolerance,
            bound: Bound::AtMost,
            passed: worst <= tolerance,
        }
    }

    fn at_least(name: impl Into<String>, instances: usize, gap: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            instances,
            worst: gap,
            tolerance,
            bound: Bound::AtLeast,
            passed: gap >= tolerance,
        }
    }
}

impl fmt::Display for PropertyRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (status, op) = match (self.passed, self.bound) {
            (true, Bound::AtMost) => ("PASS", "<="),
            (false, Bound::AtMost) => ("FAIL", "<="),
            (true, Bound::AtLeast) => ("PASS", ">="),
            (false, Bound::AtLeast) => ("FAIL", ">="),
        };
        write!(
            f,
            "[{status}] {:<64} n={:<4} worst={:.3e} (need {op} {:.0e})",
            self.name, self.instances, self.worst, self.tolerance
        )?;
        if self.bound == Bound::AtLeast {
            f.write_str(" negative control")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub seed: u64,
    pub rows: Vec<PropertyRow>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed)
    }
}

pub fn run(suite: Suite, seed: u64) -> Result<SuiteReport> {
    let rows = match suite {
        Suite::Axioms => axioms(seed)?,
        Suite::Grad => gradients(seed)?,
        Suite::Oracle => oracles(seed)?,
    };
    Ok(SuiteReport { suite, seed, rows })
}

fn dice(kind: LossKind, alpha: u8) -> LossSpec {
    LossSpec::new(kind).with_alpha(alpha)
}

/// The three label-set losses checked against the axiom. Leaf-Dice is only
/// defined on leaf partitions.
fn axiom_losses() -> [LossSpec; 3] {
    [
        dice(LossKind::LeafDice, 2),
        dice(LossKind::ConvertedDice, 2),
        LossSpec::new(LossKind::MarginalCrossEntropy),
    ]
}

fn axioms(seed: u64) -> Result<Vec<PropertyRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let losses = axiom_losses();
    let mut pair_worst = [0.0f64; 3];
    let mut image_worst = [0.0f64; 3];
    let mut counts = [0usize; 3];
    let (mut idempotence, mut fixed_point) = (0.0f64, 0.0f64);
    let soft = dice(LossKind::SoftTargetDice, 2);
    let mut soft_gap = 0.0f64;
    for n in 0..AXIOM_INSTANCES {
        let k = 2 + n % 7;
        let kind = AnnotationKind::ALL[(n / 7) % AnnotationKind::ALL.len()];
        let d = random::dims(&mut rng, 4);
        let p = random::probmap(&mut rng, d, k, 0.0);
        let g = random::annotation(&mut rng, d, k, kind);
        let pair = sample_equivalent(&p, &g, rng.random())?;
        let image = phi(&p, &g)?;
        for (j, spec) in losses.iter().enumerate() {
            if spec.kind == LossKind::LeafDice && !g.is_leaf_partition() {
                continue;
            }
            let base = spec.evaluate(&p, &g)?.value;
            pair_worst[j] = pair_worst[j].max((base - spec.evaluate(&pair.variant, &g)?.value).abs());
            image_worst[j] = image_worst[j].max((base - spec.evaluate(&image, &g)?.value).abs());
            counts[j] += 1;
        }
        idempotence = idempotence.max(max_abs_diff(phi(&image, &g)?.values(), image.values()));
        let target = psi0(&g);
        fixed_point = fixed_point.max(max_abs_diff(phi(&target, &g)?.values(), target.values()));
        soft_gap = soft_gap
            .max((soft.evaluate(&p, &g)?.value - soft.evaluate(&pair.variant, &g)?.value).abs());
    }
    let mut rows = Vec::new();
    for (j, spec) in losses.iter().enumerate() {
        rows.push(PropertyRow::at_most(
            format!("{}: equal on Φ-equivalent pairs", spec.kind),
            counts[j],
            pair_worst[j],
            AXIOM_TOLERANCE,
        ));
        rows.push(PropertyRow::at_most(
            format!("{}: L(p) = L(Φ(p))", spec.kind),
            counts[j],
            image_worst[j],
            AXIOM_TOLERANCE,
        ));
    }
    rows.push(PropertyRow::at_most("Φ idempotent", AXIOM_INSTANCES, idempotence, EXACT_TOLERANCE));
    rows.push(PropertyRow::at_most("Ψ₀(g) fixed by Φ", AXIOM_INSTANCES, fixed_point, EXACT_TOLERANCE));
    rows.push(PropertyRow::at_least(
        "SoftTargetDice: fixed counterexample",
        1,
        soft_target_counterexample()?,
        NEGATIVE_CONTROL_GAP,
    ));
    rows.push(PropertyRow::at_least(
        "SoftTargetDice: random Φ-equivalent pairs",
        AXIOM_INSTANCES,
        soft_gap,
        AXIOM_TOLERANCE,
    ));
    Ok(rows)
}

/// One voxel annotated `{l1, l2}`: `(1, 0, 0)` and `(0.5, 0.5, 0)` share a Φ
/// image but not a soft-target Dice value.
pub fn soft_target_counterexample() -> Result<f64> {
    let d = Dims::new(1, 1, 1);
    let g = LabelSetMap::new(d, 3, vec![LabelSet::from_indices(&[0, 1], 3)?])?;
    let spec = dice(LossKind::SoftTargetDice, 1).with_epsilon(0.0);
    let p = ProbMap::new(d, 3, vec![1.0, 0.0, 0.0])?;
    let q = ProbMap::new(d, 3, vec![0.5, 0.5, 0.0])?;
    Ok((spec.evaluate(&p, &g)?.value - spec.evaluate(&q, &g)?.value).abs())
}

fn gradients(seed: u64) -> Result<Vec<PropertyRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    const PER_LOSS: usize = 20;
    let mut rows = Vec::new();
    for kind in LossKind::ALL {
        for alpha in [1u8, 2] {
            if kind == LossKind::MarginalCrossEntropy && alpha == 2 {
                continue;
            }
            let spec = dice(kind, alpha);
            let mut worst = 0.0f64;
            for n in 0..PER_LOSS {
                let k = 2 + n % 5;
                let structure = match kind {
                    LossKind::MeanClassDice => AnnotationKind::Singletons,
                    LossKind::LeafDice => AnnotationKind::LeafPartition,
                    _ => AnnotationKind::ALL[n % AnnotationKind::ALL.len()],
                };
                let d = random::dims(&mut rng, 3);
                let p = random::probmap(&mut rng, d, k, GRAD_INTERIOR);
                let g = random::annotation(&mut rng, d, k, structure);
                let all = p.values().len();
                let report = central_diff(&spec, &g, &p, GRAD_STEP, all, rng.random())?;
                worst = worst.max(report.max_rel_error);
            }
            let name = match kind {
                LossKind::MarginalCrossEntropy => format!("{kind}: analytic vs central differences"),
                _ => format!("{kind} α={alpha}: analytic vs central differences"),
            };
            rows.push(PropertyRow::at_most(name, PER_LOSS, worst, GRAD_TOLERANCE));
        }
    }
    for kind in [LossKind::LeafDice, LossKind::ConvertedDice, LossKind::MarginalCrossEntropy] {
        let worst = model_gradient_error(&dice(kind, 2), rng.random())?;
        rows.push(PropertyRow::at_most(
            format!("{kind}: through softmax and linear model, 6³ K=3"),
            1,
            worst,
            MODEL_GRAD_TOLERANCE,
        ));
    }
    Ok(rows)
}

/// Largest relative error of the parameter gradient of `spec` for a random
/// linear model on a 6³, three-class phantom with the two inner classes merged.
pub fn model_gradient_error(spec: &LossSpec, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = PhantomConfig::standard(Dims::cube(6), 3, 0.1, rng.random());
    let phantom = generate(&cfg)?.with_unannotated(Some(LabelSet::from_indices(&[1, 2], 3)?))?;
    let mut model = Model::zeros(3, phantom.features.channels());
    let params: Vec<f64> = (0..model.num_params()).map(|_| rng.random_range(-1.0..1.0)).collect();
    model.set_params(&params);
    let (_, analytic) = objective(&model, &phantom.features, &phantom.partial, spec)?;
    let f = |x: &[f64]| -> Result<f64> {
        let mut m = model.clone();
        m.set_params(x);
        Ok(objective(&m, &phantom.features, &phantom.partial, spec)?.0)
    };
    let coords: Vec<usize> = (0..params.len()).collect();
    Ok(check_coordinates(f, &params, &analytic, GRAD_STEP, &coords, params.len())?.max_rel_error)
}

/// Closed-form marginal Dice for an annotation whose distinct label-sets
/// partition the label space:
/// `1 - 1/|L| Σ_{B} 2 Σ_{i∈I_B} S_i / (|I_B| + Σ_i S_i + |B| ε)`,
/// with `I_B` the voxels annotated `B` and `S_i = Σ_{c∈B} p_{i,c}`.
pub fn marginal_dice(p: &ProbMap, g: &LabelSetMap, epsilon: f64) -> Result<f64> {
    p.ensure_matches(g)?;
    let k = p.num_labels();
    let blocks = g.distinct_sets();
    let union = blocks.iter().fold(0u64, |acc, b| acc | b.mask());
    if !g.is_leaf_partition() || union != LabelSet::full(k).mask() {
        return Err(Error::NotLeafPartition);
    }
    let mut score = 0.0;
    for block in blocks {
        let (mut annotated, mut inside, mut total) = (0.0, 0.0, 0.0);
        for (i, set) in g.voxels().iter().enumerate() {
            let mass: f64 = block.iter().map(|c| p.get(i, c)).sum();
            total += mass;
            if *set == block {
                annotated += 1.0;
                inside += mass;
            }
        }
        score += 2.0 * inside / (annotated + total + block.len() as f64 * epsilon);
    }
    Ok(1.0 - score / k as f64)
}

/// A random prediction that, at each voxel, is constant on every block of
/// `blocks` other than the voxel's own. On such inputs the off-block mass of
/// a block is the same for all of its classes.
pub fn balanced_probmap<R: Rng>(rng: &mut R, g: &LabelSetMap, blocks: &[LabelSet]) -> ProbMap {
    let k = g.num_labels();
    let p = random::probmap(rng, g.dims(), k, 0.0);
    let mut values = p.into_values();
    for (i, own) in g.voxels().iter().enumerate() {
        let row = &mut values[i * k..(i + 1) * k];
        for block in blocks.iter().filter(|b| *b != own) {
            let mean = block.iter().map(|c| row[c]).sum::<f64>() / block.len() as f64;
            for c in block.iter() {
                row[c] = mean;
            }
        }
    }
    ProbMap::new(g.dims(), k, values).expect("averaging keeps rows normalized")
}

fn oracles(seed: u64) -> Result<Vec<PropertyRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dice1 = DiceLoss { alpha: 1, epsilon: LossSpec::new(LossKind::ConvertedDice).epsilon };
    let (mut general, mut balanced, mut excess) = (0.0f64, 0.0f64, f64::NEG_INFINITY);
    for n in 0..ORACLE_INSTANCES {
        let k = 2 + n % 7;
        // at least eight voxels, so every block of the partition is present
        let d = Dims::new(rng.random_range(2..=4), rng.random_range(2..=4), rng.random_range(2..=4));
        let g = random::annotation(&mut rng, d, k, AnnotationKind::Partition);
        let p = random::probmap(&mut rng, d, k, 0.0);
        let converted = convert_fully_supervised(&dice1, &p, &g)?.value;
        let oracle = marginal_dice(&p, &g, dice1.epsilon)?;
        general = general.max((converted - oracle).abs());
        excess = excess.max(converted - oracle);
        let q = balanced_probmap(&mut rng, &g, &g.distinct_sets());
        let converted = convert_fully_supervised(&dice1, &q, &g)?.value;
        balanced = balanced.max((converted - marginal_dice(&q, &g, dice1.epsilon)?).abs());
    }
    let (mut leaf, mut converted, mut ce_shift) = (0.0f64, 0.0f64, 0.0f64);
    for n in 0..ORACLE_INSTANCES {
        let k = 2 + n % 7;
        let d = random::dims(&mut rng, 4);
        let p = random::probmap(&mut rng, d, k, 0.0);
        let singles = random::annotation(&mut rng, d, k, AnnotationKind::Singletons);
        let spec = dice(LossKind::MeanClassDice, 2);
        let reference = spec.evaluate(&p, &singles)?.value;
        leaf = leaf.max((dice(LossKind::LeafDice, 2).evaluate(&p, &singles)?.value - reference).abs());
        converted = converted
            .max((dice(LossKind::ConvertedDice, 2).evaluate(&p, &singles)?.value - reference).abs());
        let g = random::annotation(&mut rng, d, k, AnnotationKind::Arbitrary);
        let ce = convert_fully_supervised(&CrossEntropyLoss::default(), &p, &g)?.value;
        let mce = marginal_cross_entropy(&p, &g, &LossSpec::new(LossKind::MarginalCrossEntropy))?.value;
        let shift = g.voxels().iter().map(|s| (s.len() as f64).ln()).sum::<f64>() / g.num_voxels() as f64;
        ce_shift = ce_shift.max((ce - mce - shift).abs());
    }
    Ok(vec![
        PropertyRow::at_most(
            "ConvertedDice α=1 = marginal Dice, random partition instances",
            ORACLE_INSTANCES,
            general,
            AXIOM_TOLERANCE,
        ),
        PropertyRow::at_most(
            "ConvertedDice α=1 = marginal Dice, balanced off-block mass",
            ORACLE_INSTANCES,
            balanced,
            AXIOM_TOLERANCE,
        ),
        PropertyRow::at_most(
            "ConvertedDice α=1 <= marginal Dice",
            ORACLE_INSTANCES,
            excess.max(0.0),
            EXACT_TOLERANCE,
        ),
        PropertyRow::at_most(
            "LeafDice = MeanClassDice on singleton annotations",
            ORACLE_INSTANCES,
            leaf,
            EXACT_TOLERANCE,
        ),
        PropertyRow::at_most(
            "ConvertedDice = MeanClassDice on singleton annotations",
            ORACLE_INSTANCES,
            converted,
            EXACT_TOLERANCE,
        ),
        PropertyRow::at_most(
            "converted CE - marginal CE = mean log |g_i|",
            ORACLE_INSTANCES,
            ce_shift,
            AXIOM_TOLERANCE,
        ),
    ])
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counterexample_gap() {
        assert!((soft_target_counterexample().unwrap() - (7.0 / 9.0 - 2.0 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn marginal_dice_rejects_overlapping_sets() {
        let d = Dims::new(2, 1, 1);
        let g = LabelSetMap::from_masks(d, 3, &[0b011, 0b110]).unwrap();
        let p = ProbMap::uniform(d, 3).unwrap();
        assert!(matches!(marginal_dice(&p, &g, 1e-5), Err(Error::NotLeafPartition)));
    }

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(s.as_str().parse::<Suite>().unwrap(), s);
        }
        assert!("nope".parse::<Suite>().is_err());
    }
}
