//! Batch orchestration over a subject manifest: feature extraction, model
//! training, prediction with per-subject aggregation and fusion, graph
//! export and synthetic corpus generation.

mod export;
mod extract;
mod manifest;
mod predict;
mod report;
mod synth;
mod tables;
mod train;

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio_features::{AudioFeatureError, SpectralConfig};
use crate::learn::{ForestConfig, FusionStrategy, LearnError};
use crate::signal::{PeakParams, SignalError};
use crate::visibility::{GraphError, VgBuilder, VgInput};

pub use export::{cmd_graph_export, GraphExportOutput};
pub use extract::{cmd_extract, ExtractSummary};
pub use manifest::{clip_id, Manifest, SubjectEntry};
pub use predict::{cmd_predict, read_text_scores, PredictSummary, SubjectPrediction};
pub use report::{cmd_report, MetricsReport};
pub use synth::{cmd_synth, SynthConfig};
pub use tables::{fmt_sig10, ErrorRecord, FeatureTable};
pub use train::{cmd_train, FamilyModel, FamilyTrainReport, TrainReport};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid manifest: {0}")]
    ManifestInvalid(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("no model found in {0}")]
    ModelMissing(PathBuf),
    #[error("family {family}: model was trained on different features than {path}")]
    FamilyMismatch { family: Family, path: PathBuf },
    #[error("subject {0:?} is scored but was used to train a model")]
    Leakage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error("internal error: {0}")]
    Internal(String),
}

impl PipelineError {
    /// Process exit code: 1 usage/config, 2 data, 3 internal.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 1,
            PipelineError::Internal(_) => 3,
            PipelineError::Learn(LearnError::BadConfig(_) | LearnError::BadC(_)) => 1,
            _ => 2,
        }
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        PipelineError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

impl From<AudioFeatureError> for PipelineError {
    fn from(e: AudioFeatureError) -> Self {
        PipelineError::Data(e.to_string())
    }
}

impl From<GraphError> for PipelineError {
    fn from(e: GraphError) -> Self {
        PipelineError::Data(e.to_string())
    }
}

impl From<SignalError> for PipelineError {
    fn from(e: SignalError) -> Self {
        PipelineError::Data(e.to_string())
    }
}

/// Feature families scored by the voice models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Vg,
    Mfcc,
    Egemaps,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Vg, Family::Mfcc, Family::Egemaps];

    pub fn name(self) -> &'static str {
        match self {
            Family::Vg => "vg",
            Family::Mfcc => "mfcc",
            Family::Egemaps => "egemaps",
        }
    }

    pub fn features_file(self) -> String {
        format!("features_{}.csv", self.name())
    }

    pub fn model_file(self) -> String {
        format!("model_{}.json", self.name())
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub const ERRORS_FILE: &str = "extract_errors.csv";
pub const FUSION_MODEL_FILE: &str = "model_fusion.json";
pub const TRAIN_REPORT_FILE: &str = "training_report.json";
pub const REPORT_FILE: &str = "report.csv";
pub const FAMILY_SCORES_FILE: &str = "family_scores.csv";
pub const METRICS_FILE: &str = "metrics.json";
pub const PREDICT_ERRORS_FILE: &str = "predict_errors.csv";

/// Every tunable of a run. Serialized into the artifacts it produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub peaks: PeakParams,
    pub vg_input: VgInput,
    pub vg_builder: VgBuilder,
    pub spectral: SpectralConfig,
    pub forest: ForestConfig,
    /// Scaling factor of the per-subject aggregation.
    pub c: f64,
    pub fusion: FusionStrategy,
    /// Z-score features with training-split statistics before fitting.
    pub normalize: bool,
    /// Worker threads; `None` uses all cores. Never affects outputs.
    #[serde(skip)]
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            peaks: PeakParams::default(),
            vg_input: VgInput::Peaks,
            vg_builder: VgBuilder::Fast,
            spectral: SpectralConfig::default(),
            forest: ForestConfig::default(),
            c: 2.0,
            fusion: FusionStrategy::AverageMerge,
            normalize: false,
            threads: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let p = &self.peaks;
        if !(p.window_ms > 0.0 && p.window_ms.is_finite()) {
            return Err(PipelineError::Config(format!(
                "envelope window must be positive, got {} ms",
                p.window_ms
            )));
        }
        if !(p.min_distance_ms >= 0.0) || !(p.min_prominence >= 0.0) {
            return Err(PipelineError::Config(
                "peak distance and prominence must be non-negative".into(),
            ));
        }
        self.spectral
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        self.forest
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(PipelineError::Config(format!(
                "c must be positive, got {}",
                self.c
            )));
        }
        if self.threads == Some(0) {
            return Err(PipelineError::Config("threads must be positive".into()));
        }
        Ok(())
    }

    /// Runs `f` on a pool sized by `threads`.
    pub(crate) fn install<T: Send>(
        &self,
        f: impl FnOnce() -> T + Send,
    ) -> Result<T, PipelineError> {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = self.threads {
            builder = builder.num_threads(n);
        }
        let pool = builder
            .build()
            .map_err(|e| PipelineError::Internal(e.to_string()))?;
        Ok(pool.install(f))
    }
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| PipelineError::io(parent, e))?;
    }
    std::fs::write(path, contents).map_err(|e| PipelineError::io(path, e))
}

pub(crate) fn read_file(path: &Path) -> Result<String, PipelineError> {
    std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))
}

pub(crate) fn to_json_pretty<T: Serialize>(value: &T) -> Result<String, PipelineError> {
    let mut s =
        serde_json::to_string_pretty(value).map_err(|e| PipelineError::Internal(e.to_string()))?;
    s.push('\n');
    Ok(s)
}
