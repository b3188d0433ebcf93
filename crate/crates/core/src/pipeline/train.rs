use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::manifest::Manifest;
use super::predict::{clip_scores, load_table, metrics_of, score_subject};
use super::tables::FeatureTable;
use super::{
    read_file, to_json_pretty, write_file, Family, PipelineError, RunConfig, FUSION_MODEL_FILE,
    TRAIN_REPORT_FILE,
};
use crate::graph_features::ZScore;
use crate::learn::{
    fuse_scores, train_forest, FusionStrategy, LabeledDataset, LabeledRow, LearnError, Metrics,
    RandomForestModel, Split, MODEL_FORMAT_VERSION,
};

/// A trained voice model for one feature family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyModel {
    pub family: Family,
    pub feature_names: Vec<String>,
    /// Training-split statistics applied before the forest, if enabled.
    pub normalizer: Option<ZScore>,
    /// Subjects whose clips trained the forest; they must never be scored.
    pub train_subjects: Vec<String>,
    pub forest: RandomForestModel,
}

impl FamilyModel {
    pub fn predict(&self, features: &[f64]) -> Result<f64, LearnError> {
        match &self.normalizer {
            Some(z) => {
                let mut row = features.to_vec();
                z.apply(&mut row);
                self.forest.predict_proba(&row)
            }
            None => self.forest.predict_proba(features),
        }
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let model: Self = serde_json::from_str(&read_file(path)?)
            .map_err(|e| PipelineError::Data(format!("{}: {e}", path.display())))?;
        model.forest.check()?;
        if model.feature_names.len() != model.forest.n_features {
            return Err(PipelineError::Data(format!(
                "{}: feature names do not match the forest",
                path.display()
            )));
        }
        Ok(model)
    }
}

/// Forest over `(voice_avg, text_p)` trained on validation subjects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionModel {
    pub train_subjects: Vec<String>,
    pub forest: RandomForestModel,
}

impl FusionModel {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let model: Self = serde_json::from_str(&read_file(path)?)
            .map_err(|e| PipelineError::Data(format!("{}: {e}", path.display())))?;
        model.forest.check()?;
        if model.forest.n_features != 2 {
            return Err(PipelineError::Data(format!(
                "{}: fusion forest must take 2 inputs",
                path.display()
            )));
        }
        Ok(model)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyTrainReport {
    pub trained: bool,
    pub skip_reason: Option<String>,
    pub n_train_clips: usize,
    pub n_train_subjects: usize,
    /// Subject-level metrics on the validation split.
    pub val_metrics: Option<Metrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: RunConfig,
    pub model_format_version: u32,
    pub families: BTreeMap<Family, FamilyTrainReport>,
    /// Whether a fusion forest was written.
    pub fusion_trained: bool,
    /// Validation metrics of the fused score (in-sample for the forest).
    pub fused_val_metrics: Option<Metrics>,
    pub warnings: Vec<String>,
}

fn skipped(reason: String) -> FamilyTrainReport {
    FamilyTrainReport {
        trained: false,
        skip_reason: Some(reason),
        n_train_clips: 0,
        n_train_subjects: 0,
        val_metrics: None,
    }
}

/// Trains one family on the training split of `table`.
fn train_family(
    manifest: &Manifest,
    family: Family,
    table: &FeatureTable,
    config: &RunConfig,
) -> Result<Result<FamilyModel, String>, PipelineError> {
    let owners = manifest.clip_owners();
    let mut rows = Vec::new();
    for (id, values) in &table.rows {
        let subject = &manifest.subjects[owners[id]];
        if let Some(label) = subject.label {
            rows.push(LabeledRow {
                features: values.clone(),
                label,
                subject_id: subject.subject_id.clone(),
                split: subject.split,
            });
        }
    }
    let train = LabeledDataset::new(table.names.clone(), rows)?.split(Split::Train);
    let mut train_rows: Vec<Vec<f64>> = train.rows().iter().map(|r| r.features.clone()).collect();
    let labels: Vec<u8> = train.rows().iter().map(|r| r.label).collect();
    let mut train_subjects: Vec<String> =
        train.rows().iter().map(|r| r.subject_id.clone()).collect();
    train_subjects.sort();
    train_subjects.dedup();
    if train_rows.is_empty() {
        return Ok(Err(format!("{family}: no labeled training clips")));
    }

    let normalizer = if config.normalize {
        let z = ZScore::fit(&train_rows).expect("non-empty rows");
        train_rows.iter_mut().for_each(|r| z.apply(r));
        Some(z)
    } else {
        None
    };
    let x: Vec<&[f64]> = train_rows.iter().map(Vec::as_slice).collect();
    match train_forest(&x, &labels, &config.forest) {
        Ok(forest) => Ok(Ok(FamilyModel {
            family,
            feature_names: table.names.clone(),
            normalizer,
            train_subjects,
            forest,
        })),
        Err(e @ (LearnError::SingleClass(_) | LearnError::EmptyData)) => {
            Ok(Err(format!("{family}: {e}")))
        }
        Err(e) => Err(e.into()),
    }
}

/// Trains a forest per extracted family on the training split, reports
/// subject-level validation metrics, and with the forest fusion strategy
/// also trains the fusion forest on validation subjects.
///
/// A family whose training split holds a single class is skipped with a
/// warning; at least one family must train.
pub fn cmd_train(
    manifest: &Manifest,
    features_dir: &Path,
    config: &RunConfig,
    models_dir: &Path,
) -> Result<TrainReport, PipelineError> {
    config.validate()?;
    let mut warnings = Vec::new();
    let mut families = BTreeMap::new();
    let mut val_probs = BTreeMap::new();
    let owners = manifest.clip_owners();

    for family in Family::ALL {
        let Some(table) = load_table(manifest, features_dir, family)? else {
            let reason = format!(
                "{family}: no {} in {}",
                family.features_file(),
                features_dir.display()
            );
            warnings.push(format!("skipping {reason}"));
            families.insert(family, skipped(reason));
            continue;
        };
        let model = match config.install(|| train_family(manifest, family, &table, config))?? {
            Ok(m) => m,
            Err(reason) => {
                warnings.push(format!("skipping {reason}"));
                families.insert(family, skipped(reason));
                continue;
            }
        };
        write_file(
            &models_dir.join(family.model_file()),
            &to_json_pretty(&model)?,
        )?;
        let n_train_clips = table
            .rows
            .iter()
            .filter(|(id, _)| {
                let s = &manifest.subjects[owners[id]];
                s.split == Split::Train && s.label.is_some()
            })
            .count();
        families.insert(
            family,
            FamilyTrainReport {
                trained: true,
                skip_reason: None,
                n_train_clips,
                n_train_subjects: model.train_subjects.len(),
                val_metrics: None,
            },
        );
        val_probs.insert(family, clip_scores(&model, &table)?);
    }
    if val_probs.is_empty() {
        return Err(PipelineError::Data(format!(
            "no family could be trained from {}{}",
            features_dir.display(),
            if warnings.is_empty() {
                String::new()
            } else {
                format!(" ({})", warnings.join("; "))
            }
        )));
    }

    // Validation subjects: per-family metrics and fusion inputs.
    let mut per_family: BTreeMap<Family, (Vec<f64>, Vec<u8>)> = BTreeMap::new();
    let mut fusion_rows = Vec::new();
    for subject in manifest.subjects.iter().filter(|s| s.split == Split::Val) {
        let Some(label) = subject.label else { continue };
        let scores = score_subject(subject, &val_probs, config.c)?;
        for (family, agg) in &scores.families {
            let e = per_family.entry(*family).or_default();
            e.0.push(agg.probability());
            e.1.push(label);
        }
        if let (Ok(voice_avg), Some(text)) = (scores.voice().average(), &scores.text) {
            fusion_rows.push((
                subject.subject_id.clone(),
                [voice_avg, text.probability()],
                label,
            ));
        }
    }
    for (family, (scores, truth)) in &per_family {
        if let Some(r) = families.get_mut(family) {
            r.val_metrics = metrics_of(scores, truth)?;
        }
    }

    let mut fusion_model = None;
    if config.fusion == FusionStrategy::Forest {
        let x: Vec<&[f64]> = fusion_rows.iter().map(|(_, r, _)| r.as_slice()).collect();
        let y: Vec<u8> = fusion_rows.iter().map(|(_, _, l)| *l).collect();
        match train_forest(&x, &y, &config.forest) {
            Ok(forest) => {
                let model = FusionModel {
                    train_subjects: fusion_rows.iter().map(|(s, _, _)| s.clone()).collect(),
                    forest,
                };
                write_file(
                    &models_dir.join(FUSION_MODEL_FILE),
                    &to_json_pretty(&model)?,
                )?;
                fusion_model = Some(model);
            }
            Err(e @ (LearnError::SingleClass(_) | LearnError::EmptyData)) => {
                warnings.push(format!("fusion forest not trained: validation split {e}"));
            }
            Err(e) => return Err(e.into()),
        }
    }

    let mut fused_scores = Vec::new();
    let mut fused_truth = Vec::new();
    for (_, [voice_avg, text_p], label) in &fusion_rows {
        let voice = crate::learn::VoiceScores {
            vg: Some(*voice_avg),
            ..Default::default()
        };
        if let Ok(f) = fuse_scores(
            &voice,
            Some(*text_p),
            config.fusion,
            fusion_model.as_ref().map(|m| &m.forest),
        ) {
            fused_scores.push(f.final_p);
            fused_truth.push(*label);
        }
    }

    let report = TrainReport {
        config: config.clone(),
        model_format_version: MODEL_FORMAT_VERSION,
        families,
        fusion_trained: fusion_model.is_some(),
        fused_val_metrics: metrics_of(&fused_scores, &fused_truth)?,
        warnings,
    };
    write_file(
        &models_dir.join(TRAIN_REPORT_FILE),
        &to_json_pretty(&report)?,
    )?;
    Ok(report)
}
