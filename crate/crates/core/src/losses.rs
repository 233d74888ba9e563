//! Segmentation losses over label-set annotations, each returning its value
//! together with the analytic gradient with respect to the prediction.
//!
//! * [`leaf_dice`]: Dice generalised to missing leaf-labels. Numerators only
//!   count singleton-annotated voxels, denominators keep the full predicted
//!   mass.
//! * [`convert_fully_supervised`]: any [`FullySupervisedLoss`] applied to
//!   `(Φ(p; g), Ψ₀(g))`. With [`DiceLoss`] this is the marginal Dice loss,
//!   with [`CrossEntropyLoss`] the marginal cross entropy up to a constant.
//! * [`marginal_cross_entropy`]: `-mean_i log Σ_{c∈g_i} p_{i,c}`.
//! * [`soft_target_dice`]: mean-class Dice against `Ψ₀(g)` without Φ. It does
//!   not depend on `p` only through `Φ(p; g)` and is kept as a baseline.
//! * [`mean_class_dice`]: the fully supervised mean-class soft Dice.
//!
//! Gradients are unconstrained partial derivatives: nothing is projected
//! onto the simplex, the caller owns the softmax.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labelspace::{LabelSetMap, ProbMap};
use crate::marginalize::{phi, phi_vjp, psi0};

pub const DEFAULT_EPSILON: f64 = 1e-5;
pub const DEFAULT_LOG_FLOOR: f64 = 1e-12;
pub const DEFAULT_ALPHA: u8 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LossKind {
    LeafDice,
    ConvertedDice,
    MarginalCrossEntropy,
    SoftTargetDice,
    MeanClassDice,
}

impl LossKind {
    pub const ALL: [LossKind; 5] = [
        LossKind::LeafDice,
        LossKind::ConvertedDice,
        LossKind::MarginalCrossEntropy,
        LossKind::SoftTargetDice,
        LossKind::MeanClassDice,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LossKind::LeafDice => "LeafDice",
            LossKind::ConvertedDice => "ConvertedDice",
            LossKind::MarginalCrossEntropy => "MarginalCrossEntropy",
            LossKind::SoftTargetDice => "SoftTargetDice",
            LossKind::MeanClassDice => "MeanClassDice",
        }
    }

    /// Whether the loss depends on `p` only through `Φ(p; g)`.
    pub fn is_label_set_loss(self) -> bool {
        matches!(
            self,
            LossKind::LeafDice | LossKind::ConvertedDice | LossKind::MarginalCrossEntropy
        )
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidLossSpec(format!("unknown loss {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub kind: LossKind,
    #[serde(default = "default_alpha")]
    pub alpha: u8,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_log_floor")]
    pub log_floor: f64,
}

fn default_alpha() -> u8 {
    DEFAULT_ALPHA
}
fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}
fn default_log_floor() -> f64 {
    DEFAULT_LOG_FLOOR
}

impl LossSpec {
    pub fn new(kind: LossKind) -> Self {
        Self { kind, alpha: DEFAULT_ALPHA, epsilon: DEFAULT_EPSILON, log_floor: DEFAULT_LOG_FLOOR }
    }

    pub fn with_alpha(mut self, alpha: u8) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    /// `epsilon = 0` is accepted; a class with an all-zero denominator then
    /// contributes a zero term.
    pub fn validate(&self) -> Result<()> {
        if !matches!(self.alpha, 1 | 2) {
            return Err(Error::InvalidLossSpec(format!("alpha must be 1 or 2, got {}", self.alpha)));
        }
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(Error::InvalidLossSpec(format!("bad epsilon {}", self.epsilon)));
        }
        if !(self.log_floor.is_finite() && self.log_floor > 0.0) {
            return Err(Error::InvalidLossSpec(format!("bad log_floor {}", self.log_floor)));
        }
        Ok(())
    }

    pub fn dice(&self) -> DiceLoss {
        DiceLoss { alpha: self.alpha, epsilon: self.epsilon }
    }

    /// Evaluates the selected loss. `MeanClassDice` needs a fully annotated `g`
    /// and compares against its one-hot encoding.
    pub fn evaluate(&self, p: &ProbMap, g: &LabelSetMap) -> Result<LossResult> {
        self.validate()?;
        match self.kind {
            LossKind::LeafDice => leaf_dice(p, g, self),
            LossKind::ConvertedDice => convert_fully_supervised(&self.dice(), p, g),
            LossKind::MarginalCrossEntropy => marginal_cross_entropy(p, g, self),
            LossKind::SoftTargetDice => soft_target_dice(p, g, self),
            LossKind::MeanClassDice => {
                p.ensure_matches(g)?;
                let truth = ProbMap::one_hot(g).map_err(|_| {
                    Error::InvalidLossSpec("MeanClassDice needs a fully annotated volume".into())
                })?;
                mean_class_dice(p, &truth, self)
            }
        }
    }
}

impl fmt::Display for LossSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            LossKind::MarginalCrossEntropy => write!(f, "{}", self.kind),
            _ => write!(f, "{}(alpha={}, eps={:e})", self.kind, self.alpha, self.epsilon),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossResult {
    pub value: f64,
    /// `∂loss/∂p_{i,c}`, row-major like the [`ProbMap`].
    pub gradient: Vec<f64>,
    /// Voxels where the cross-entropy log floor was active.
    pub floor_activations: usize,
}

/// A loss comparing a prediction with a soft ground truth of the same shape.
pub trait FullySupervisedLoss {
    fn evaluate(&self, p: &ProbMap, target: &ProbMap) -> Result<LossResult>;
}

/// Mean-class soft Dice,
/// `1 - 1/|L| Σ_c 2 Σ_i q_{i,c} p_{i,c} / (Σ_i q_{i,c}^α + Σ_i p_{i,c}^α + ε)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiceLoss {
    pub alpha: u8,
    pub epsilon: f64,
}

impl FullySupervisedLoss for DiceLoss {
    fn evaluate(&self, p: &ProbMap, target: &ProbMap) -> Result<LossResult> {
        p.ensure_same_shape(target)?;
        Ok(soft_dice(p.values(), target.values(), p.num_labels(), self.alpha, self.epsilon))
    }
}

/// Voxel-averaged cross entropy `-1/N Σ_i Σ_c q_{i,c} log max(p_{i,c}, floor)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CrossEntropyLoss {
    pub log_floor: f64,
}

impl Default for CrossEntropyLoss {
    fn default() -> Self {
        Self { log_floor: DEFAULT_LOG_FLOOR }
    }
}

impl FullySupervisedLoss for CrossEntropyLoss {
    fn evaluate(&self, p: &ProbMap, target: &ProbMap) -> Result<LossResult> {
        p.ensure_same_shape(target)?;
        let scale = 1.0 / p.num_voxels() as f64;
        let mut value = 0.0;
        let mut gradient = vec![0.0; p.values().len()];
        let mut floor_activations = 0;
        for (idx, (&pv, &qv)) in p.values().iter().zip(target.values()).enumerate() {
            if qv == 0.0 {
                continue;
            }
            if pv > self.log_floor {
                value -= qv * pv.ln();
                gradient[idx] = -scale * qv / pv;
            } else {
                value -= qv * self.log_floor.ln();
                floor_activations += 1;
            }
        }
        Ok(LossResult { value: value * scale, gradient, floor_activations })
    }
}

/// Shared soft Dice kernel. `target` may be any non-negative array; rows need
/// not sum to one (leaf-Dice passes singleton indicators).
fn soft_dice(p: &[f64], target: &[f64], k: usize, alpha: u8, epsilon: f64) -> LossResult {
    debug_assert_eq!(p.len(), target.len());
    let pow = |x: f64| if alpha == 1 { x } else { x * x };
    let mut overlap = vec![0.0; k];
    let mut denom = vec![epsilon; k];
    for (p_row, t_row) in p.chunks_exact(k).zip(target.chunks_exact(k)) {
        for c in 0..k {
            overlap[c] += t_row[c] * p_row[c];
            denom[c] += pow(t_row[c]) + pow(p_row[c]);
        }
    }
    let scale = 1.0 / k as f64;
    let mut score = 0.0;
    for c in 0..k {
        if denom[c] != 0.0 {
            score += 2.0 * overlap[c] / denom[c];
        }
    }
    let mut gradient = vec![0.0; p.len()];
    for ((g_row, p_row), t_row) in
        gradient.chunks_exact_mut(k).zip(p.chunks_exact(k)).zip(target.chunks_exact(k))
    {
        for c in 0..k {
            let d = denom[c];
            if d == 0.0 {
                continue;
            }
            let dpow = if alpha == 1 { 1.0 } else { 2.0 * p_row[c] };
            let dterm = 2.0 * t_row[c] / d - 2.0 * overlap[c] * dpow / (d * d);
            g_row[c] = -scale * dterm;
        }
    }
    LossResult { value: 1.0 - scale * score, gradient, floor_activations: 0 }
}

/// Leaf-Dice loss. Requires the distinct label-sets of `g` to be pairwise
/// disjoint (one unannotated set plus singletons outside it).
pub fn leaf_dice(p: &ProbMap, g: &LabelSetMap, spec: &LossSpec) -> Result<LossResult> {
    spec.validate()?;
    p.ensure_matches(g)?;
    if !g.is_leaf_partition() {
        return Err(Error::NotLeafPartition);
    }
    let k = p.num_labels();
    let mut indicator = vec![0.0; p.values().len()];
    for (i, set) in g.voxels().iter().enumerate() {
        if let Some(c) = set.as_singleton() {
            indicator[i * k + c] = 1.0;
        }
    }
    Ok(soft_dice(p.values(), &indicator, k, spec.alpha, spec.epsilon))
}

/// Mean-class Dice of `p` against the soft ground truth `q`.
pub fn mean_class_dice(p: &ProbMap, q: &ProbMap, spec: &LossSpec) -> Result<LossResult> {
    spec.validate()?;
    spec.dice().evaluate(p, q)
}

/// `fully(Φ(p; g), Ψ₀(g))`, with the gradient pulled back through Φ.
pub fn convert_fully_supervised<L>(fully: &L, p: &ProbMap, g: &LabelSetMap) -> Result<LossResult>
where
    L: FullySupervisedLoss + ?Sized,
{
    let marginal = phi(p, g)?;
    let mut result = fully.evaluate(&marginal, &psi0(g))?;
    phi_vjp(&mut result.gradient, g);
    Ok(result)
}

/// Mean-class Dice against `Ψ₀(g)` applied to the raw prediction.
pub fn soft_target_dice(p: &ProbMap, g: &LabelSetMap, spec: &LossSpec) -> Result<LossResult> {
    p.ensure_matches(g)?;
    mean_class_dice(p, &psi0(g), spec)
}

/// `-1/N Σ_i log max(Σ_{c∈g_i} p_{i,c}, log_floor)`.
///
/// Differs from `convert_fully_supervised(&CrossEntropyLoss, ..)` by the
/// constant `1/N Σ_i log |g_i|`; the gradients coincide.
pub fn marginal_cross_entropy(p: &ProbMap, g: &LabelSetMap, spec: &LossSpec) -> Result<LossResult> {
    spec.validate()?;
    p.ensure_matches(g)?;
    let k = p.num_labels();
    let scale = 1.0 / p.num_voxels() as f64;
    let mut value = 0.0;
    let mut gradient = vec![0.0; p.values().len()];
    let mut floor_activations = 0;
    for (i, set) in g.voxels().iter().enumerate() {
        let row = p.row(i);
        let mass: f64 = set.iter().map(|c| row[c]).sum();
        if mass > spec.log_floor {
            value -= mass.ln();
            let d = -scale / mass;
            for c in set.iter() {
                gradient[i * k + c] = d;
            }
        } else {
            value -= spec.log_floor.ln();
            floor_activations += 1;
        }
    }
    Ok(LossResult { value: value * scale, gradient, floor_activations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labelspace::{singleton_map, Dims};
    use crate::marginalize::sample_equivalent;

    fn spec(kind: LossKind, alpha: u8, epsilon: f64) -> LossSpec {
        LossSpec::new(kind).with_alpha(alpha).with_epsilon(epsilon)
    }

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn leaf_dice_perfect_prediction_is_epsilon_order() {
        let d = Dims::new(8, 1, 1);
        let labels = [0, 1, 0, 1, 0, 1, 0, 1];
        let g = singleton_map(&labels, d, 2).unwrap();
        let p = ProbMap::one_hot(&g).unwrap();
        let r = leaf_dice(&p, &g, &spec(LossKind::LeafDice, 2, 1e-5)).unwrap();
        close(r.value, 1.0 - 8.0 / (8.0 + 1e-5), 1e-15);
        assert!(r.value > 1.2e-6 && r.value < 1.3e-6);
    }

    #[test]
    fn leaf_dice_without_singletons_is_one() {
        let d = Dims::new(3, 1, 1);
        let g = LabelSetMap::from_masks(d, 3, &[0b110; 3]).unwrap();
        let p = ProbMap::new(d, 3, vec![0.2, 0.3, 0.5, 0.1, 0.1, 0.8, 0.6, 0.2, 0.2]).unwrap();
        let r = leaf_dice(&p, &g, &spec(LossKind::LeafDice, 2, 1e-5)).unwrap();
        assert_eq!(r.value, 1.0);
    }

    #[test]
    fn leaf_dice_hand_evaluated() {
        let d = Dims::new(2, 1, 1);
        let g = LabelSetMap::from_masks(d, 3, &[0b001, 0b110]).unwrap();
        let p = ProbMap::new(d, 3, vec![0.6, 0.3, 0.1, 0.2, 0.5, 0.3]).unwrap();
        let r = leaf_dice(&p, &g, &spec(LossKind::LeafDice, 1, 0.0)).unwrap();
        close(r.value, 7.0 / 9.0, 1e-15);
    }

    #[test]
    fn leaf_dice_rejects_overlapping_sets() {
        let d = Dims::new(2, 1, 1);
        let g = LabelSetMap::from_masks(d, 3, &[0b011, 0b001]).unwrap();
        let p = ProbMap::uniform(d, 3).unwrap();
        assert!(matches!(
            leaf_dice(&p, &g, &LossSpec::new(LossKind::LeafDice)),
            Err(Error::NotLeafPartition)
        ));
    }

    #[test]
    fn mean_class_dice_hand_evaluated() {
        let d = Dims::new(1, 1, 1);
        let p = ProbMap::new(d, 2, vec![0.7, 0.3]).unwrap();
        let q = ProbMap::new(d, 2, vec![1.0, 0.0]).unwrap();
        let r = mean_class_dice(&p, &q, &spec(LossKind::MeanClassDice, 1, 0.0)).unwrap();
        close(r.value, 1.0 - 0.5 * (1.4 / 1.7), 1e-15);
        close(r.value, 0.588235, 1e-6);
    }

    #[test]
    fn mean_class_dice_extremes() {
        let d = Dims::new(4, 1, 1);
        let g = singleton_map(&[0, 1, 2, 1], d, 3).unwrap();
        let p = ProbMap::one_hot(&g).unwrap();
        let r = mean_class_dice(&p, &p, &LossSpec::new(LossKind::MeanClassDice)).unwrap();
        assert!(r.value > 0.0 && r.value < 1e-5);
        let shifted = singleton_map(&[1, 2, 0, 0], d, 3).unwrap();
        let q = ProbMap::one_hot(&shifted).unwrap();
        let r = mean_class_dice(&p, &q, &LossSpec::new(LossKind::MeanClassDice)).unwrap();
        assert_eq!(r.value, 1.0);
    }

    #[test]
    fn absent_class_counts_as_wrong() {
        let d = Dims::new(2, 1, 1);
        let g = singleton_map(&[0, 1], d, 3).unwrap();
        let p = ProbMap::one_hot(&g).unwrap();
        let r = mean_class_dice(&p, &p, &LossSpec::new(LossKind::MeanClassDice)).unwrap();
        close(r.value, 1.0 / 3.0, 1e-5);
    }

    #[test]
    fn converted_dice_on_singletons_is_mean_class_dice() {
        let d = Dims::new(3, 1, 1);
        let g = singleton_map(&[0, 2, 1], d, 3).unwrap();
        let p = ProbMap::new(d, 3, vec![0.5, 0.2, 0.3, 0.1, 0.1, 0.8, 0.3, 0.4, 0.3]).unwrap();
        let s = LossSpec::new(LossKind::ConvertedDice);
        let a = s.evaluate(&p, &g).unwrap();
        let b = mean_class_dice(&p, &ProbMap::one_hot(&g).unwrap(), &s).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn converted_dice_single_voxel() {
        // Φ(p) = Ψ₀(g) = (0.5, 0.5, 0): the two members score 2·0.25/(1+ε)
        // each and the absent class scores 0, so the loss is 1 - (1/3)·1/(1+ε).
        let d = Dims::new(1, 1, 1);
        let g = LabelSetMap::from_masks(d, 3, &[0b011]).unwrap();
        let p = ProbMap::new(d, 3, vec![1.0, 0.0, 0.0]).unwrap();
        let r = convert_fully_supervised(&DiceLoss { alpha: 1, epsilon: 1e-5 }, &p, &g).unwrap();
        close(r.value, 1.0 - (1.0 / 3.0) * (1.0 / (1.0 + 1e-5)), 1e-15);
    }

    #[test]
    fn soft_target_dice_counterexample() {
        let d = Dims::new(1, 1, 1);
        let g = LabelSetMap::from_masks(d, 3, &[0b011]).unwrap();
        let p = ProbMap::new(d, 3, vec![1.0, 0.0, 0.0]).unwrap();
        let q = ProbMap::new(d, 3, vec![0.5, 0.5, 0.0]).unwrap();
        let s = spec(LossKind::SoftTargetDice, 1, 0.0);
        let lp = soft_target_dice(&p, &g, &s).unwrap().value;
        let lq = soft_target_dice(&q, &g, &s).unwrap().value;
        close(lp, 7.0 / 9.0, 1e-15);
        close(lq, 2.0 / 3.0, 1e-15);
        assert_eq!(phi(&p, &g).unwrap(), phi(&q, &g).unwrap());
    }

    #[test]
    fn soft_target_dice_minimised_at_its_target() {
        let d = Dims::new(3, 1, 1);
        let g = LabelSetMap::from_masks(d, 3, &[0b011, 0b100, 0b111]).unwrap();
        let target = psi0(&g);
        let s = spec(LossKind::SoftTargetDice, 2, 1e-5);
        let best = soft_target_dice(&target, &g, &s).unwrap().value;
        for i in 0..3 {
            for (a, b) in [(0, 1), (1, 2), (0, 2)] {
                for delta in [1e-3, -1e-3] {
                    let mut v = target.values().to_vec();
                    v[i * 3 + a] += delta;
                    v[i * 3 + b] -= delta;
                    if v.iter().any(|&x| x < 0.0) {
                        continue;
                    }
                    let moved = ProbMap::new(d, 3, v).unwrap();
                    assert!(soft_target_dice(&moved, &g, &s).unwrap().value > best);
                }
            }
        }
    }

    #[test]
    fn marginal_cross_entropy_examples() {
        let d = Dims::new(1, 1, 1);
        let g = LabelSetMap::from_masks(d, 3, &[0b011]).unwrap();
        let p = ProbMap::new(d, 3, vec![0.3, 0.2, 0.5]).unwrap();
        let s = LossSpec::new(LossKind::MarginalCrossEntropy);
        let r = marginal_cross_entropy(&p, &g, &s).unwrap();
        close(r.value, -(0.5f64).ln(), 1e-15);
        assert_eq!(r.gradient, vec![-2.0, -2.0, 0.0]);

        let d = Dims::new(2, 1, 1);
        let g = singleton_map(&[2, 0], d, 3).unwrap();
        let p = ProbMap::one_hot(&g).unwrap();
        assert_eq!(marginal_cross_entropy(&p, &g, &s).unwrap().value, 0.0);

        let g = LabelSetMap::from_masks(d, 3, &[0b111, 0b111]).unwrap();
        let p = ProbMap::new(d, 3, vec![0.25, 0.25, 0.5, 0.5, 0.25, 0.25]).unwrap();
        close(marginal_cross_entropy(&p, &g, &s).unwrap().value, 0.0, 1e-15);
    }

    #[test]
    fn marginal_cross_entropy_floor_is_counted() {
        let d = Dims::new(2, 1, 1);
        let g = singleton_map(&[0, 1], d, 2).unwrap();
        let p = ProbMap::new(d, 2, vec![0.0, 1.0, 0.5, 0.5]).unwrap();
        let r = marginal_cross_entropy(&p, &g, &LossSpec::new(LossKind::MarginalCrossEntropy))
            .unwrap();
        assert_eq!(r.floor_activations, 1);
        assert!(r.value.is_finite());
        assert_eq!(&r.gradient[0..2], &[0.0, 0.0]);
    }

    #[test]
    fn converted_cross_entropy_differs_by_log_set_size() {
        let d = Dims::new(3, 1, 1);
        let g = LabelSetMap::from_masks(d, 4, &[0b0011, 0b0100, 0b1110]).unwrap();
        let p = ProbMap::new(
            d,
            4,
            vec![0.1, 0.2, 0.3, 0.4, 0.25, 0.25, 0.25, 0.25, 0.4, 0.3, 0.2, 0.1],
        )
        .unwrap();
        let converted = convert_fully_supervised(&CrossEntropyLoss::default(), &p, &g).unwrap();
        let marginal =
            marginal_cross_entropy(&p, &g, &LossSpec::new(LossKind::MarginalCrossEntropy)).unwrap();
        let constant = (2f64.ln() + 0.0 + 3f64.ln()) / 3.0;
        close(converted.value - marginal.value, constant, 1e-15);
        for (a, b) in converted.gradient.iter().zip(&marginal.gradient) {
            close(*a, *b, 1e-15);
        }
    }

    #[test]
    fn converted_loss_ignores_equivalent_redistribution() {
        let d = Dims::new(2, 1, 1);
        let g = LabelSetMap::from_masks(d, 3, &[0b011, 0b100]).unwrap();
        let p = ProbMap::new(d, 3, vec![0.1, 0.6, 0.3, 0.2, 0.2, 0.6]).unwrap();
        let s = sample_equivalent(&p, &g, 5).unwrap();
        let dice = DiceLoss { alpha: 2, epsilon: 1e-5 };
        let a = convert_fully_supervised(&dice, &s.base, &g).unwrap();
        let b = convert_fully_supervised(&dice, &s.variant, &g).unwrap();
        close(a.value, b.value, 1e-15);
        for (x, y) in a.gradient.iter().zip(&b.gradient) {
            close(*x, *y, 1e-15);
        }
    }

    #[test]
    fn mean_class_dice_kind_needs_full_annotation() {
        let d = Dims::new(1, 1, 1);
        let g = LabelSetMap::from_masks(d, 3, &[0b011]).unwrap();
        let p = ProbMap::uniform(d, 3).unwrap();
        assert!(LossSpec::new(LossKind::MeanClassDice).evaluate(&p, &g).is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(LossSpec::new(LossKind::LeafDice).with_alpha(3).validate().is_err());
        assert!(LossSpec::new(LossKind::LeafDice).with_epsilon(-1.0).validate().is_err());
        assert_eq!("leafdice".parse::<LossKind>().unwrap(), LossKind::LeafDice);
        let s: LossSpec = serde_json::from_str(r#"{"kind":"ConvertedDice","alpha":1}"#).unwrap();
        assert_eq!(s.epsilon, DEFAULT_EPSILON);
        assert_eq!(s.alpha, 1);
    }
}
