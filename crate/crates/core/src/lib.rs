//! Label-set loss functions for partially supervised segmentation.
//!
//! A partially annotated voxel carries a *label-set*: the set of leaf-labels
//! it may belong to. The crate provides
//!
//! * the data model ([`labelspace`]),
//! * the marginalization map Φ and the embedding Ψ₀ ([`marginalize`]),
//! * leaf-Dice, marginal (converted) Dice, marginal cross entropy and two
//!   baselines with analytic gradients ([`losses`]),
//! * a finite-difference oracle for those gradients ([`gradcheck`]),
//! * synthetic phantoms, a linear-softmax trainer, DSC/HD95 metrics and an
//!   experiment driver used by the `labelset` CLI.

pub mod checks;
pub mod error;
pub mod experiment;
pub mod gradcheck;
pub mod labelspace;
pub mod losses;
pub mod marginalize;
pub mod metrics;
pub mod phantom;
pub mod random;
pub mod trainer;
pub mod volio;

pub use error::{Error, Result};
pub use labelspace::{singleton_map, validate_probmap, Dims, LabelSet, LabelSetMap, LabelSpace, ProbMap};
pub use losses::{LossKind, LossResult, LossSpec};
