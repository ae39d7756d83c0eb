use std::env;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cost::{Metric, DEFAULT_BLOCK_BUDGET};
use crate::error::{Error, Result};
use crate::ot::{SolverKind, SolverParams};
use crate::polar::default_radial_bins;
use crate::spectra::{PolarConfig, Representation};

/// Environment variable naming the directory that holds one sub-directory
/// of IDX files per dataset.
pub const DATA_DIR_ENV: &str = "BISPOT_DATA_DIR";

/// Everything needed to replay an experiment. Serialized verbatim (as
/// TOML) into every output directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub split: SplitConfig,
    pub embedding: EmbeddingConfig,
    pub transport: TransportConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub name: String,
    /// IDX image file; defaults to `<data dir>/<name>/train-images-idx3-ubyte[.gz]`.
    pub images: Option<PathBuf>,
    pub labels: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    /// Seed of the class-balanced half split.
    pub seed: u64,
    /// Seed of the per-image rotation angles applied to half A.
    pub rotation_seed: u64,
    /// Seed of the per-class subsample; half A uses it as is, half B uses
    /// it plus one.
    pub subsample_seed: u64,
    /// Images kept per class in each half; 0 keeps the whole half.
    pub per_class: usize,
    /// Leave both halves unrotated.
    pub baseline: bool,
    /// Transport from half B to half A instead of A to B.
    pub swap_direction: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    /// Defaults to half the smaller image side.
    pub radial_bins: Option<usize>,
    pub angular_bins: usize,
    pub representations: Vec<Representation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransportConfig {
    pub metrics: Vec<Metric>,
    pub epsilons: Vec<f64>,
    pub solver: SolverKind,
    pub tol: f64,
    pub max_iter: usize,
    /// Divide each cost matrix by its maximum before solving.
    pub normalize_cost: bool,
    /// Bytes of feature rows held per cost tile.
    pub block_budget: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            name: "mnist".into(),
            images: None,
            labels: None,
        }
    }
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            rotation_seed: 1,
            subsample_seed: 0,
            per_class: 200,
            baseline: false,
            swap_direction: false,
        }
    }
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            radial_bins: None,
            angular_bins: 16,
            representations: vec![Representation::Raw, Representation::Bispectral],
        }
    }
}

impl Default for TransportConfig {
    fn default() -> Self {
        let params = SolverParams::default();
        Self {
            metrics: vec![Metric::L1],
            epsilons: vec![params.epsilon],
            solver: SolverKind::Sinkhorn,
            tol: params.tol,
            max_iter: params.max_iter,
            normalize_cost: false,
            block_budget: DEFAULT_BLOCK_BUDGET,
        }
    }
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("runs/experiment"),
            threads: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Format(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(format!("config: {e}")))
    }

    /// Fill in dataset paths from the data directory so the snapshot
    /// names concrete files, and check every parameter.
    pub fn resolved(mut self) -> Result<Self> {
        if self.dataset.images.is_none() || self.dataset.labels.is_none() {
            let dir = data_dir().join(&self.dataset.name);
            if self.dataset.images.is_none() {
                self.dataset.images = Some(find_idx(&dir, "train-images-idx3-ubyte")?);
            }
            if self.dataset.labels.is_none() {
                self.dataset.labels = Some(find_idx(&dir, "train-labels-idx1-ubyte")?);
            }
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.embedding;
        if e.angular_bins < 2 {
            return Err(Error::InvalidParameter(format!(
                "angular_bins must be at least 2, got {}",
                e.angular_bins
            )));
        }
        if e.radial_bins == Some(0) {
            return Err(Error::InvalidParameter("radial_bins must be positive".into()));
        }
        if e.representations.is_empty() {
            return Err(Error::InvalidParameter("no representations requested".into()));
        }
        let t = &self.transport;
        if t.metrics.is_empty() || t.epsilons.is_empty() {
            return Err(Error::InvalidParameter("need at least one metric and one epsilon".into()));
        }
        for &eps in &t.epsilons {
            if !(eps > 0.0 && eps.is_finite()) {
                return Err(Error::InvalidParameter(format!("epsilon must be positive, got {eps}")));
            }
        }
        if !(t.tol > 0.0) || t.max_iter == 0 {
            return Err(Error::InvalidParameter("tol and max_iter must be positive".into()));
        }
        if t.solver == SolverKind::Exact {
            return Err(Error::InvalidParameter(
                "the exact solver only handles tiny instances; use sinkhorn or greenkhorn".into(),
            ));
        }
        Ok(())
    }

    pub fn polar_config(&self, image_dim: (usize, usize)) -> PolarConfig {
        PolarConfig {
            radial_bins: self
                .embedding
                .radial_bins
                .unwrap_or_else(|| default_radial_bins(image_dim.0, image_dim.1)),
            angular_bins: self.embedding.angular_bins,
        }
    }

    pub fn solver_params(&self, epsilon: f64) -> SolverParams {
        SolverParams {
            epsilon,
            tol: self.transport.tol,
            max_iter: self.transport.max_iter,
        }
    }
}

/// `$BISPOT_DATA_DIR`, or `data` relative to the working directory.
pub fn data_dir() -> PathBuf {
    env::var_os(DATA_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("data"))
}

fn find_idx(dir: &Path, stem: &str) -> Result<PathBuf> {
    let plain = dir.join(stem);
    let gz = dir.join(format!("{stem}.gz"));
    [plain, gz]
        .into_iter()
        .find(|p| p.is_file())
        .ok_or_else(|| {
            Error::InvalidParameter(format!(
                "no {stem}[.gz] in {}; set {DATA_DIR_ENV} or the dataset paths",
                dir.display()
            ))
        })
}
