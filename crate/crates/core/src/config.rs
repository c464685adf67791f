//! Run configuration, loadable from a TOML file.
//!
//! Every section has defaults, so an empty file is a valid configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub subsets: SubsetConfig,
    pub learner: LearnerConfig,
    pub trace: TraceConfig,
    pub ols: OlsConfig,
    pub lasso: LassoConfig,
    pub mlp: MlpConfig,
    pub srt: SrtConfig,
    pub shapley: ShapleyConfig,
    pub curves: CurveConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SubsetConfig {
    /// Number of sampled subsets M.
    pub count: usize,
    pub p_grid: Vec<f64>,
    /// Subtract the mean utility before regressing on the design matrix.
    pub center_utility: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UtilityMetric {
    Accuracy,
    MacroF1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerConfig {
    /// Full-batch gradient steps per sub-model.
    pub steps: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub metric: UtilityMetric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NeighborFeatures {
    Raw,
    Logits,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraceConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub neighbor_features: NeighborFeatures,
    pub neighbors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OlsConfig {
    /// Gradient step; `None` picks `1 / (2 λmax(XᵀX))`.
    pub learning_rate: Option<f64>,
    pub max_iters: usize,
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LassoConfig {
    /// Absolute λ values; `None` spans four decades below `2‖XᵀR‖∞`.
    pub lambda_grid: Option<Vec<f64>>,
    pub grid_size: usize,
    pub folds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    /// SGD step; `None` scales a base rate by the corpus size.
    pub learning_rate: Option<f64>,
    pub folds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SrtConfig {
    /// Maximum clusters per characteristic (L).
    pub max_clusters: usize,
    /// Initial regions per characteristic (L′).
    pub initial_regions: usize,
    /// Leaves split per growth step (C).
    pub cuts_per_step: usize,
    pub growth_rounds: usize,
    pub gd_iters: usize,
    pub learning_rate: Option<f64>,
    pub folds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShapleyConfig {
    pub permutations: usize,
    /// Include the `1/N` factor of the standard Shapley value.
    pub normalized: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurveConfig {
    /// Evaluate every `stride` steps; `None` means `⌈K/20⌉`.
    pub stride: Option<usize>,
    /// Value source used when ranking points.
    pub method: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            subsets: SubsetConfig::default(),
            learner: LearnerConfig::default(),
            trace: TraceConfig::default(),
            ols: OlsConfig::default(),
            lasso: LassoConfig::default(),
            mlp: MlpConfig::default(),
            srt: SrtConfig::default(),
            shapley: ShapleyConfig::default(),
            curves: CurveConfig::default(),
        }
    }
}

impl Default for SubsetConfig {
    fn default() -> Self {
        Self {
            count: 200,
            p_grid: vec![0.2, 0.4, 0.6, 0.8],
            center_utility: true,
        }
    }
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            steps: 100,
            learning_rate: 0.5,
            l2: 0.0,
            metric: UtilityMetric::Accuracy,
        }
    }
}

impl Default for TraceConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            learning_rate: 0.1,
            batch_size: 16,
            neighbor_features: NeighborFeatures::Raw,
            neighbors: 10,
        }
    }
}

impl Default for OlsConfig {
    fn default() -> Self {
        Self {
            learning_rate: None,
            max_iters: 200_000,
            tol: 1e-10,
        }
    }
}

impl Default for LassoConfig {
    fn default() -> Self {
        Self {
            lambda_grid: None,
            grid_size: 20,
            folds: 5,
        }
    }
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden: 50,
            epochs: 200,
            batch_size: 8,
            learning_rate: None,
            folds: 5,
        }
    }
}

impl Default for SrtConfig {
    fn default() -> Self {
        Self {
            max_clusters: 6,
            initial_regions: 1,
            cuts_per_step: 2,
            growth_rounds: 8,
            gd_iters: 20_000,
            learning_rate: None,
            folds: 5,
        }
    }
}

impl Default for ShapleyConfig {
    fn default() -> Self {
        Self {
            permutations: 1000,
            normalized: true,
        }
    }
}

impl Default for CurveConfig {
    fn default() -> Self {
        Self {
            stride: None,
            method: "mlpbv".to_string(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.subsets.count == 0 {
            return bad("subsets.count must be at least 1".into());
        }
        if self.subsets.p_grid.is_empty() {
            return bad("subsets.p_grid must not be empty".into());
        }
        if let Some(p) = self.subsets.p_grid.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
            return bad(format!("subsets.p_grid value {p} is outside (0, 1)"));
        }
        if self.learner.learning_rate <= 0.0 || !self.learner.learning_rate.is_finite() {
            return bad("learner.learning_rate must be positive".into());
        }
        if self.learner.l2 < 0.0 {
            return bad("learner.l2 must be non-negative".into());
        }
        if self.trace.epochs < 2 {
            return bad("trace.epochs must be at least 2".into());
        }
        if self.trace.batch_size == 0 || self.trace.neighbors == 0 {
            return bad("trace.batch_size and trace.neighbors must be positive".into());
        }
        if self.mlp.hidden == 0 {
            return bad("mlp.hidden must be positive".into());
        }
        if self.mlp.batch_size == 0 || self.mlp.epochs == 0 || self.mlp.folds < 2 {
            return bad("mlp.batch_size and mlp.epochs must be positive, mlp.folds at least 2".into());
        }
        if self.srt.max_clusters < 2 {
            return bad("srt.max_clusters (L) must be at least 2".into());
        }
        if self.srt.initial_regions == 0 || self.srt.initial_regions >= self.srt.max_clusters {
            return bad(format!(
                "srt.initial_regions (L') must satisfy 1 <= L' < L = {}",
                self.srt.max_clusters
            ));
        }
        if self.srt.folds < 2 || self.lasso.folds < 2 {
            return bad("fold counts must be at least 2".into());
        }
        if self.shapley.permutations == 0 {
            return bad("shapley.permutations must be at least 1".into());
        }
        if self.curves.stride == Some(0) {
            return bad("curves.stride must be positive".into());
        }
        Ok(())
    }
}
