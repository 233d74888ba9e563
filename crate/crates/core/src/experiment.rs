//! Experiment configuration, phantom case generation and the loss comparison.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labelspace::{Dims, LabelSpace};
use crate::losses::{LossKind, LossSpec};
use crate::metrics::{evaluate_case, HardSeg};
use crate::phantom::{generate, Phantom, PhantomConfig};
use crate::trainer::{forward, train, EpochLog, Model, TrainConfig, TrainOutcome};
use crate::volio::{read_volume, write_volume, MetricsRow, Volume};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Geometry and intensity shared by all generated cases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomTemplate {
    pub dims: Dims,
    #[serde(default)]
    pub noise_sigma: f64,
    /// Defaults to evenly spaced means in [0, 1].
    #[serde(default)]
    pub class_means: Option<Vec<f64>>,
    /// Defaults to evenly spaced radii in (0.05, 0.95).
    #[serde(default)]
    pub shell_radii: Option<Vec<f64>>,
    /// Each case scales all radii by a factor drawn from `1 ± radius_jitter`.
    #[serde(default)]
    pub radius_jitter: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseSpec {
    pub id: String,
    pub split: Split,
    /// Names of the leaf-labels that were not annotated in this case.
    #[serde(default)]
    pub unannotated: Vec<String>,
    /// Overrides the template entirely.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phantom: Option<PhantomConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub label_names: LabelSpace,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub phantom: PhantomTemplate,
    pub cases: Vec<CaseSpec>,
    pub losses: Vec<LossSpec>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "unit_spacing")]
    pub spacing: [f64; 3],
}

fn unit_spacing() -> [f64; 3] {
    [1.0; 3]
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)
            .map_err(|e| Error::ConfigInvalid(format!("cannot parse config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Sets the global seed and the training seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.train.seed = seed;
        self
    }

    pub fn num_labels(&self) -> usize {
        self.label_names.num_labels()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.num_labels();
        let mut ids = std::collections::BTreeSet::new();
        for case in &self.cases {
            if case.id.is_empty() || case.id.contains(['/', '\\']) {
                return Err(Error::ConfigInvalid(format!("bad case id {:?}", case.id)));
            }
            if !ids.insert(case.id.as_str()) {
                return Err(Error::ConfigInvalid(format!("duplicate case id {:?}", case.id)));
            }
            if let Some(set) = self.label_names.parse_set(&case.unannotated)? {
                if set.len() == k {
                    return Err(Error::LPrimeIsFullSpace);
                }
            }
            if let Some(p) = &case.phantom {
                if p.num_labels != k {
                    return Err(Error::ConfigInvalid(format!(
                        "case {} has {} labels, label space has {k}",
                        case.id, p.num_labels
                    )));
                }
                p.validate()?;
            }
        }
        if self.losses.is_empty() {
            return Err(Error::ConfigInvalid("no losses configured".into()));
        }
        for loss in &self.losses {
            loss.validate()?;
        }
        self.train.validate()?;
        if !(0.0..1.0).contains(&self.phantom.radius_jitter) {
            return Err(Error::ConfigInvalid("radius_jitter must lie in [0, 1)".into()));
        }
        Ok(())
    }

    /// Resolved phantom configuration of every case, in case order.
    pub fn case_phantoms(&self) -> Result<Vec<PhantomConfig>> {
        let k = self.num_labels();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let t = &self.phantom;
        let standard = PhantomConfig::standard(t.dims, k, t.noise_sigma, 0);
        let means = t.class_means.clone().unwrap_or(standard.class_means);
        let radii = t.shell_radii.clone().unwrap_or(standard.shell_radii);
        let mut out = Vec::with_capacity(self.cases.len());
        for case in &self.cases {
            let seed: u64 = rng.random();
            let scale = 1.0 + t.radius_jitter * rng.random_range(-1.0..=1.0);
            let cfg = match &case.phantom {
                Some(p) => p.clone(),
                None => PhantomConfig {
                    dims: t.dims,
                    num_labels: k,
                    noise_sigma: t.noise_sigma,
                    class_means: means.clone(),
                    shell_radii: radii.iter().map(|r| r * scale).collect(),
                    seed,
                },
            };
            cfg.validate()
                .map_err(|e| Error::ConfigInvalid(format!("case {}: {e}", case.id)))?;
            out.push(cfg);
        }
        Ok(out)
    }

    /// Stand-in for a missing-labels benchmark: five nested tissue classes,
    /// ten training volumes of which four are fully annotated and six leave
    /// the two innermost classes merged, four test volumes, 24³ voxels.
    pub fn four_way_scenario(seed: u64) -> Self {
        let names = ["background", "outer", "middle", "inner", "core"];
        let mut cases = Vec::new();
        for i in 0..10 {
            let unannotated = if i < 4 { vec![] } else { vec!["inner".into(), "core".into()] };
            cases.push(CaseSpec {
                id: format!("train{i:02}"),
                split: Split::Train,
                unannotated,
                phantom: None,
            });
        }
        for i in 0..4 {
            cases.push(CaseSpec {
                id: format!("test{i:02}"),
                split: Split::Test,
                unannotated: vec![],
                phantom: None,
            });
        }
        let dice = |kind| LossSpec::new(kind).with_alpha(2);
        ExperimentConfig {
            label_names: LabelSpace::new(names).expect("static names"),
            seed,
            output_dir: None,
            phantom: PhantomTemplate {
                dims: Dims::cube(24),
                noise_sigma: 0.1,
                class_means: Some(vec![0.0, 0.25, 0.5, 0.75, 1.0]),
                shell_radii: Some(vec![0.3, 0.45, 0.65, 0.85]),
                radius_jitter: 0.08,
            },
            cases,
            losses: vec![
                dice(LossKind::MeanClassDice),
                dice(LossKind::SoftTargetDice),
                dice(LossKind::ConvertedDice),
                dice(LossKind::LeafDice),
            ],
            train: TrainConfig { learning_rate: 0.05, max_epochs: 300, seed, ..TrainConfig::default() },
            spacing: [1.0; 3],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Case {
    pub id: String,
    pub split: Split,
    pub phantom: Phantom,
}

pub fn generate_cases(cfg: &ExperimentConfig) -> Result<Vec<Case>> {
    cfg.validate()?;
    let configs = cfg.case_phantoms()?;
    cfg.cases
        .iter()
        .zip(configs)
        .map(|(spec, pc)| {
            let lprime = cfg.label_names.parse_set(&spec.unannotated)?;
            let phantom = generate(&pc)?.with_unannotated(lprime)?;
            Ok(Case { id: spec.id.clone(), split: spec.split, phantom })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub label_names: LabelSpace,
    pub cases: Vec<ManifestCase>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestCase {
    pub id: String,
    pub split: Split,
    pub unannotated: Vec<String>,
    pub features: String,
    pub truth: String,
    pub partial: String,
}

/// Writes three LSV1 volumes per case and a JSON manifest into `dir`.
pub fn write_cases(dir: &Path, space: &LabelSpace, cases: &[Case]) -> Result<Manifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(cases.len());
    for case in cases {
        let entry = ManifestCase {
            id: case.id.clone(),
            split: case.split,
            unannotated: case.phantom.unannotated.map(|s| space.set_names(s)).unwrap_or_default(),
            features: format!("{}.features.lsv", case.id),
            truth: format!("{}.truth.lsv", case.id),
            partial: format!("{}.partial.lsv", case.id),
        };
        write_volume(dir.join(&entry.features), &Volume::Features(case.phantom.features.clone()))?;
        write_volume(dir.join(&entry.truth), &Volume::LabelSets(case.phantom.truth.clone()))?;
        write_volume(dir.join(&entry.partial), &Volume::LabelSets(case.phantom.partial.clone()))?;
        entries.push(entry);
    }
    let manifest = Manifest { label_names: space.clone(), cases: entries };
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest)? + "\n";
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

pub fn read_cases(dir: &Path) -> Result<(LabelSpace, Vec<Case>)> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path)
        .map_err(|e| Error::MissingData(format!("{}: {e}", path.display())))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    let space = manifest.label_names;
    let mut cases = Vec::with_capacity(manifest.cases.len());
    for entry in manifest.cases {
        let load = |name: &str| {
            let p = dir.join(name);
            if !p.exists() {
                return Err(Error::MissingData(format!("{} not found", p.display())));
            }
            read_volume(p)
        };
        let features = load(&entry.features)?.into_features()?;
        let truth = load(&entry.truth)?.into_label_sets()?;
        let partial = load(&entry.partial)?.into_label_sets()?;
        if truth.num_labels() != space.num_labels() || partial.num_labels() != space.num_labels() {
            return Err(Error::ConfigInvalid(format!("case {} has wrong label count", entry.id)));
        }
        let unannotated = space.parse_set(&entry.unannotated)?;
        cases.push(Case {
            id: entry.id,
            split: entry.split,
            phantom: Phantom { features, truth, partial, unannotated },
        });
    }
    Ok((space, cases))
}

/// Training volumes for `spec`: the fully supervised baseline only sees
/// fully annotated cases.
pub fn training_volumes(cases: &[Case], spec: &LossSpec) -> Vec<Phantom> {
    cases
        .iter()
        .filter(|c| c.split == Split::Train)
        .filter(|c| spec.kind != LossKind::MeanClassDice || c.phantom.partial.is_fully_annotated())
        .map(|c| c.phantom.clone())
        .collect()
}

pub fn evaluate_model(
    model: &Model,
    space: &LabelSpace,
    cases: &[Case],
    spacing: [f64; 3],
) -> Result<Vec<MetricsRow>> {
    let mut rows = Vec::new();
    for case in cases.iter().filter(|c| c.split == Split::Test) {
        let probs = forward(model, &case.phantom.features)?;
        let pred = HardSeg::from_probs(&probs);
        let truth = HardSeg::from_truth(&case.phantom.truth)?;
        let m = evaluate_case(&pred, &truth, spacing)?;
        for (c, name) in space.names().iter().enumerate() {
            rows.push(MetricsRow {
                case_id: case.id.clone(),
                class_name: name.clone(),
                dsc: m.dsc[c],
                hd95_vox: m.hd95[c],
            });
        }
    }
    if rows.is_empty() {
        return Err(Error::MissingData("no test cases".into()));
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassSummary {
    pub dsc_mean: f64,
    pub dsc_std: f64,
    /// Over cases where HD95 is defined; `None` if it never is.
    pub hd95_mean: Option<f64>,
    pub hd95_std: Option<f64>,
    pub hd95_defined: usize,
    pub cases: usize,
}

/// Sample mean and standard deviation (`n - 1`; 0 for a single value).
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Some((mean, var.sqrt()))
}

pub fn summarize(space: &LabelSpace, rows: &[MetricsRow]) -> BTreeMap<String, ClassSummary> {
    let mut out = BTreeMap::new();
    for name in space.names() {
        let of_class: Vec<&MetricsRow> = rows.iter().filter(|r| &r.class_name == name).collect();
        let dsc: Vec<f64> = of_class.iter().map(|r| r.dsc).collect();
        let hd: Vec<f64> = of_class.iter().filter_map(|r| r.hd95_vox).collect();
        let (dsc_mean, dsc_std) = mean_std(&dsc).unwrap_or((f64::NAN, f64::NAN));
        let hd_stats = mean_std(&hd);
        out.insert(
            name.clone(),
            ClassSummary {
                dsc_mean,
                dsc_std,
                hd95_mean: hd_stats.map(|s| s.0),
                hd95_std: hd_stats.map(|s| s.1),
                hd95_defined: hd.len(),
                cases: of_class.len(),
            },
        );
    }
    out
}

#[derive(Clone, Debug)]
pub struct LossRun {
    /// Unique key: the loss kind, suffixed with `#n` if it repeats.
    pub label: String,
    pub spec: LossSpec,
    pub num_train_volumes: usize,
    pub outcome: TrainOutcome,
    pub rows: Vec<MetricsRow>,
}

impl LossRun {
    pub fn log(&self) -> &[EpochLog] {
        &self.outcome.log
    }

    pub fn mean_dsc(&self, classes: &[&str]) -> f64 {
        let v: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| classes.contains(&r.class_name.as_str()))
            .map(|r| r.dsc)
            .collect();
        v.iter().sum::<f64>() / v.len() as f64
    }
}

pub type Summary = BTreeMap<String, BTreeMap<String, ClassSummary>>;

pub fn loss_labels(losses: &[LossSpec]) -> Vec<String> {
    losses
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let repeats = losses.iter().filter(|o| o.kind == s.kind).count() > 1;
            if repeats {
                format!("{}#{i}", s.kind)
            } else {
                s.kind.to_string()
            }
        })
        .collect()
}

/// Trains one model per configured loss and evaluates it on the test cases.
pub fn compare(cfg: &ExperimentConfig, space: &LabelSpace, cases: &[Case]) -> Result<Vec<LossRun>> {
    if !cases.iter().any(|c| c.split == Split::Test) {
        return Err(Error::MissingData("no test cases".into()));
    }
    let labels = loss_labels(&cfg.losses);
    let mut runs = Vec::with_capacity(cfg.losses.len());
    for (spec, label) in cfg.losses.iter().zip(labels) {
        let volumes = training_volumes(cases, spec);
        if volumes.len() < 2 {
            return Err(Error::MissingData(format!(
                "{label}: only {} usable training volumes",
                volumes.len()
            )));
        }
        let outcome = train(&volumes, spec, &cfg.train)?;
        let rows = evaluate_model(&outcome.model, space, cases, cfg.spacing)?;
        runs.push(LossRun { label, spec: *spec, num_train_volumes: volumes.len(), outcome, rows });
    }
    Ok(runs)
}

pub fn summary(space: &LabelSpace, runs: &[LossRun]) -> Summary {
    runs.iter().map(|r| (r.label.clone(), summarize(space, &r.rows))).collect()
}
