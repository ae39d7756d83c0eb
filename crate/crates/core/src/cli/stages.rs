//! Pipeline stages and their on-disk artifacts.
//!
//! Every artifact is written atomically, so a file that exists is
//! complete; a rerun in the same directory picks up whatever a previous
//! run finished and recomputes the rest.

use std::path::{Path, PathBuf};

use log::info;
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::cost::{pairwise_cost_blocked, Metric};
use crate::dataset::{
    augment_uniform_rotations, load_idx, normalize, split_by_class_halves, subsample_per_class,
    LabeledImageSet, NormalizationStats,
};
use crate::error::{Error, Result};
use crate::eval::{
    class_assignment, class_confusion, class_preservation_accuracy, per_class_accuracy, Normalization,
};
use crate::io;
use crate::ot::{greenkhorn, sinkhorn, uniform, Diagnostics, SolverKind, SolverParams, TransportPlan};
use crate::spectra::{embed_representation, PolarConfig, Representation};

/// Facts about the prepared halves that later stages need.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitInfo {
    pub num_classes: usize,
    pub image_rows: usize,
    pub image_cols: usize,
    pub normalization: Option<NormalizationStats>,
    pub polar: PolarConfig,
    pub rotated_half_a: bool,
}

/// The two halves as seen by the transport stage.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub info: SplitInfo,
    pub labels_a: Vec<usize>,
    pub labels_b: Vec<usize>,
    pub features: Vec<HalfFeatures>,
}

#[derive(Debug, Clone)]
pub struct HalfFeatures {
    pub representation: Representation,
    pub a: Array2<f32>,
    pub b: Array2<f32>,
}

/// JSON written next to every plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanSidecar {
    pub dataset: Option<String>,
    pub representation: Option<Representation>,
    pub metric: Metric,
    pub epsilon: f64,
    /// Factor the cost was divided by before solving (1 when unnormalized).
    pub cost_scale: f64,
    pub solver: SolverKind,
    pub tol: f64,
    pub max_iter: usize,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub dataset: Option<String>,
    pub metric: Option<Metric>,
    pub representation: Option<Representation>,
    pub epsilon: Option<f64>,
    pub accuracy: f64,
    pub per_class_accuracy: Vec<Option<f64>>,
}

pub(crate) struct Layout {
    root: PathBuf,
}

impl Layout {
    pub(crate) fn new(root: &Path) -> Self {
        Self { root: root.to_path_buf() }
    }

    pub(crate) fn config(&self) -> PathBuf {
        self.root.join("config.toml")
    }

    pub(crate) fn split_info(&self) -> PathBuf {
        self.root.join("split").join("info.json")
    }

    pub(crate) fn labels(&self, half: char) -> PathBuf {
        self.root.join("split").join(format!("labels_{half}.csv"))
    }

    fn indices(&self, half: char) -> PathBuf {
        self.root.join("split").join(format!("indices_{half}.csv"))
    }

    fn angles(&self) -> PathBuf {
        self.root.join("split").join("angles_a.csv")
    }

    pub(crate) fn features(&self, repr: Representation, half: char) -> PathBuf {
        self.root.join("features").join(format!("{repr}_{half}.bin"))
    }

    pub(crate) fn cost(&self, repr: Representation, metric: Metric) -> PathBuf {
        self.root.join("costs").join(format!("{repr}_{metric}.bin"))
    }

    pub(crate) fn tag(repr: Representation, metric: Metric, eps: f64) -> String {
        format!("{repr}_{metric}_eps{eps}")
    }

    pub(crate) fn plan(&self, tag: &str) -> PathBuf {
        self.root.join("plans").join(format!("{tag}.bin"))
    }

    pub(crate) fn eval_dir(&self, tag: &str) -> PathBuf {
        self.root.join("eval").join(tag)
    }

    pub(crate) fn summary(&self) -> PathBuf {
        self.root.join("summary.csv")
    }
}

/// Sidecar path for a plan file: same stem, `.json` extension.
pub fn sidecar_path(plan: &Path) -> PathBuf {
    plan.with_extension("json")
}

/// Record the configuration in `dir`, or check it against the one already
/// there. Reusing a directory with a different configuration would mix
/// artifacts of two experiments, so that is refused.
pub(crate) fn claim_output_dir(layout: &Layout, snapshot: &str) -> Result<()> {
    let path = layout.config();
    if path.exists() {
        let existing = std::fs::read_to_string(&path).map_err(|e| Error::file(&path, e))?;
        if existing != snapshot {
            return Err(Error::InvalidParameter(format!(
                "{} holds a different configuration; use a fresh output directory",
                path.display()
            )));
        }
        info!("resuming in {}", layout.root.display());
        return Ok(());
    }
    io::write_atomic(&path, snapshot.as_bytes())
}

/// Load, normalize, split, subsample and (unless baseline) rotate half A,
/// then embed both halves in every requested representation. Reuses
/// artifacts already on disk.
pub(crate) fn prepare(cfg: &ExperimentConfig, layout: &Layout) -> Result<Prepared> {
    let reps = &cfg.embedding.representations;
    let cached = layout.split_info().exists()
        && ['a', 'b'].iter().all(|&h| layout.labels(h).exists())
        && reps
            .iter()
            .all(|&r| layout.features(r, 'a').exists() && layout.features(r, 'b').exists());
    if cached {
        info!("reusing split and features");
        let info: SplitInfo = read_json(&layout.split_info())?;
        let features = reps
            .iter()
            .map(|&representation| {
                Ok(HalfFeatures {
                    representation,
                    a: io::read_features(&layout.features(representation, 'a'))?.1,
                    b: io::read_features(&layout.features(representation, 'b'))?.1,
                })
            })
            .collect::<Result<_>>()?;
        return Ok(Prepared {
            info,
            labels_a: io::read_labels(&layout.labels('a'))?,
            labels_b: io::read_labels(&layout.labels('b'))?,
            features,
        });
    }

    let (a, b) = build_halves(cfg).map_err(|e| e.in_stage("split"))?;
    let (rows, cols) = a
        .image_dim()
        .ok_or_else(|| Error::Degenerate("half A is empty".into()).in_stage("split"))?;
    let polar = cfg.polar_config((rows, cols));
    let info = SplitInfo {
        num_classes: a.num_classes(),
        image_rows: rows,
        image_cols: cols,
        normalization: a.meta().normalization,
        polar,
        rotated_half_a: !cfg.split.baseline,
    };
    let write_split = || -> Result<()> {
        io::write_labels(&layout.labels('a'), a.labels())?;
        io::write_labels(&layout.labels('b'), b.labels())?;
        io::write_labels(&layout.indices('a'), &a.meta().source_indices)?;
        io::write_labels(&layout.indices('b'), &b.meta().source_indices)?;
        if let Some(aug) = &a.meta().augmentation {
            let angles = Array2::from_shape_vec((aug.angles.len(), 1), aug.angles.clone()).unwrap();
            io::write_csv(&layout.angles(), angles.view(), Some(&["angle"]))?;
        }
        io::write_json(&layout.split_info(), &info)
    };
    write_split().map_err(|e| e.in_stage("split"))?;

    let mut features = Vec::new();
    for &representation in reps {
        let (fa, fb) = embed_halves(&a, &b, representation, polar).map_err(|e| e.in_stage("embed"))?;
        features.push(HalfFeatures { representation, a: fa, b: fb });
    }
    Ok(Prepared {
        info,
        labels_a: a.labels().to_vec(),
        labels_b: b.labels().to_vec(),
        features,
    })
}

fn embed_halves(
    a: &LabeledImageSet,
    b: &LabeledImageSet,
    representation: Representation,
    polar: PolarConfig,
) -> Result<(Array2<f32>, Array2<f32>)> {
    info!("embedding {} + {} images as {representation}", a.len(), b.len());
    let fa = embed_representation(a, representation, polar)?;
    let fb = embed_representation(b, representation, polar)?;
    Ok((fa, fb))
}

/// Write the feature files of a prepared run (no-op for those present).
pub(crate) fn write_features(layout: &Layout, prepared: &Prepared) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for f in &prepared.features {
        for (half, x) in [('a', &f.a), ('b', &f.b)] {
            let path = layout.features(f.representation, half);
            if !path.exists() {
                let (r, k) = match f.representation {
                    Representation::Raw => (0, 0),
                    Representation::Bispectral => {
                        (prepared.info.polar.radial_bins, prepared.info.polar.angular_bins)
                    }
                };
                io::write_features(&path, x, r, k).map_err(|e| e.in_stage("embed"))?;
            }
            files.push(path);
        }
    }
    Ok(files)
}

pub(crate) fn load_dataset(cfg: &ExperimentConfig) -> Result<LabeledImageSet> {
    let images = cfg
        .dataset
        .images
        .as_deref()
        .ok_or_else(|| Error::InvalidParameter("dataset image path not resolved".into()))?;
    let labels = cfg
        .dataset
        .labels
        .as_deref()
        .ok_or_else(|| Error::InvalidParameter("dataset label path not resolved".into()))?;
    info!("loading {}", images.display());
    let set = load_idx(images, labels)?;
    normalize(set)
}

fn build_halves(cfg: &ExperimentConfig) -> Result<(LabeledImageSet, LabeledImageSet)> {
    let set = load_dataset(cfg)?;
    let split = split_by_class_halves(&set, cfg.split.seed);
    let (mut a, mut b) = (split.half_a, split.half_b);
    if cfg.split.per_class > 0 {
        a = subsample_per_class(&a, cfg.split.per_class, cfg.split.subsample_seed)?;
        b = subsample_per_class(&b, cfg.split.per_class, cfg.split.subsample_seed.wrapping_add(1))?;
    }
    if !cfg.split.baseline {
        a = augment_uniform_rotations(&a, cfg.split.rotation_seed);
    }
    Ok((a, b))
}

/// Ground cost between two feature sets, optionally divided by its
/// maximum. Returns the matrix fed to the solver and the divisor.
pub(crate) fn cost_matrix(
    x: ArrayView2<'_, f32>,
    y: ArrayView2<'_, f32>,
    metric: Metric,
    normalize_cost: bool,
    block_budget: usize,
) -> Result<(Array2<f64>, f64)> {
    let c = pairwise_cost_blocked(x, y, metric, block_budget)?;
    scale_cost(c.values, normalize_cost)
}

pub(crate) fn scale_cost(c: Array2<f64>, normalize_cost: bool) -> Result<(Array2<f64>, f64)> {
    if !normalize_cost {
        return Ok((c, 1.0));
    }
    let max = c.iter().fold(0.0f64, |m, &v| m.max(v));
    if max > 0.0 {
        Ok((c / max, max))
    } else {
        Ok((c, 1.0))
    }
}

pub(crate) fn solve(cost: ArrayView2<'_, f64>, solver: SolverKind, params: &SolverParams) -> Result<TransportPlan> {
    let (n, m) = cost.dim();
    let (p, q) = (uniform(n), uniform(m));
    match solver {
        SolverKind::Sinkhorn => sinkhorn(cost, &p, &q, params),
        SolverKind::Greenkhorn => greenkhorn(cost, &p, &q, params),
        SolverKind::Exact => crate::ot::exact_ot_small(cost, &p, &q),
    }
}

pub(crate) fn write_plan(path: &Path, plan: &TransportPlan, sidecar: &PlanSidecar) -> Result<()> {
    io::write_matrix(path, plan.gamma.view())?;
    io::write_json(&sidecar_path(path), sidecar)
}

pub(crate) fn read_plan(path: &Path) -> Result<(Array2<f64>, PlanSidecar)> {
    let gamma = io::read_matrix(path)?;
    let sidecar: PlanSidecar = read_json(&sidecar_path(path))?;
    Ok((gamma, sidecar))
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = io::read_bytes(path)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// Accuracy, confusion matrix (CSV + PGM) and per-class accuracy of a plan.
pub(crate) fn evaluate_plan(
    gamma: ArrayView2<'_, f64>,
    source_labels: &[usize],
    target_labels: &[usize],
    num_classes: usize,
    dir: &Path,
    mut report: AccuracyReport,
) -> Result<AccuracyReport> {
    if gamma.nrows() != source_labels.len() {
        return Err(Error::Shape(format!(
            "plan has {} rows but {} source labels",
            gamma.nrows(),
            source_labels.len()
        )));
    }
    let assignment = class_assignment(gamma, target_labels, num_classes)?;
    report.accuracy = class_preservation_accuracy(&assignment.assigned, source_labels)?;
    report.per_class_accuracy = per_class_accuracy(&assignment.assigned, source_labels, num_classes)?;
    let confusion = class_confusion(gamma, source_labels, target_labels, num_classes, Normalization::Row)?;

    let names: Vec<String> = (0..num_classes).map(|k| format!("class_{k}")).collect();
    let header: Vec<&str> = names.iter().map(String::as_str).collect();
    io::write_csv(&dir.join("confusion.csv"), confusion.matrix.view(), Some(&header))?;
    io::write_pgm(&dir.join("confusion.pgm"), confusion.matrix.view())?;
    let mut per_class = String::from("class,accuracy\n");
    for (k, acc) in report.per_class_accuracy.iter().enumerate() {
        match acc {
            Some(a) => per_class.push_str(&format!("{k},{a}\n")),
            None => per_class.push_str(&format!("{k},\n")),
        }
    }
    io::write_atomic(&dir.join("per_class.csv"), per_class.as_bytes())?;
    io::write_json(&dir.join("accuracy.json"), &report)?;
    Ok(report)
}
