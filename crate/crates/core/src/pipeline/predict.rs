use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::manifest::{clip_id, Manifest, SubjectEntry};
use super::report::MetricsReport;
use super::tables::{errors_csv, fmt_sig10, ErrorRecord, FeatureTable};
use super::train::{FamilyModel, FusionModel};
use super::{
    read_file, to_json_pretty, write_file, Family, PipelineError, RunConfig, FAMILY_SCORES_FILE,
    FUSION_MODEL_FILE, METRICS_FILE, PREDICT_ERRORS_FILE, REPORT_FILE,
};
use crate::learn::{
    classify, evaluate, fuse_scores, Fused, FusionStrategy, LearnError, Metrics, PatientAggregate,
    Split, VoiceScores,
};

/// Per-subsequence text probabilities of one subject.
///
/// The CSV needs a `probability` column; when it also has a `subject_id`
/// column, only rows of `subject_id` are kept.
pub fn read_text_scores(path: &Path, subject_id: &str) -> Result<Vec<f64>, PipelineError> {
    let text = read_file(path)?;
    let bad = |m: String| PipelineError::Data(format!("{}: {m}", path.display()));
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    let col = |name: &str| header.iter().position(|h| h.trim() == name);
    let p_col = col("probability").ok_or_else(|| bad("no probability column".into()))?;
    let s_col = col("subject_id");
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if let Some(s) = s_col {
            if rec.get(s).map(str::trim) != Some(subject_id) {
                continue;
            }
        }
        let cell = rec.get(p_col).unwrap_or("").trim();
        let p: f64 = cell
            .parse()
            .map_err(|_| bad(format!("row {}: {cell:?} is not a number", i + 1)))?;
        if !(0.0..=1.0).contains(&p) {
            return Err(bad(format!(
                "row {}: probability {p} outside [0, 1]",
                i + 1
            )));
        }
        out.push(p);
    }
    Ok(out)
}

/// Every clip id in `table` must belong to a manifest subject, once.
pub(crate) fn audit_table(
    manifest: &Manifest,
    table: &FeatureTable,
    path: &Path,
) -> Result<(), PipelineError> {
    let owners = manifest.clip_owners();
    let mut seen = BTreeSet::new();
    for (id, _) in &table.rows {
        if !owners.contains_key(id) {
            return Err(PipelineError::Data(format!(
                "{}: clip {id:?} is not in the manifest",
                path.display()
            )));
        }
        if !seen.insert(id.as_str()) {
            return Err(PipelineError::Data(format!(
                "{}: clip {id:?} appears twice",
                path.display()
            )));
        }
    }
    Ok(())
}

/// Reads and audits the feature table of `family`, if it was extracted.
pub(crate) fn load_table(
    manifest: &Manifest,
    features_dir: &Path,
    family: Family,
) -> Result<Option<FeatureTable>, PipelineError> {
    let path = features_dir.join(family.features_file());
    if !path.is_file() {
        return Ok(None);
    }
    let table = FeatureTable::read(&path)?;
    audit_table(manifest, &table, &path)?;
    Ok(Some(table))
}

/// Clip probabilities of every row of `table` under `model`.
pub(crate) fn clip_scores(
    model: &FamilyModel,
    table: &FeatureTable,
) -> Result<BTreeMap<String, f64>, PipelineError> {
    table
        .rows
        .iter()
        .map(|(id, values)| Ok((id.clone(), model.predict(values)?)))
        .collect()
}

/// Aggregates of one subject across sources.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct SubjectScores {
    pub families: BTreeMap<Family, PatientAggregate>,
    pub text: Option<PatientAggregate>,
}

impl SubjectScores {
    pub fn voice(&self) -> VoiceScores {
        let get = |f| self.families.get(&f).map(PatientAggregate::probability);
        VoiceScores {
            mfcc: get(Family::Mfcc),
            egemaps: get(Family::Egemaps),
            vg: get(Family::Vg),
        }
    }
}

/// Aggregates clip and text scores of `subject` with scaling factor `c`.
pub(crate) fn score_subject(
    subject: &SubjectEntry,
    clip_scores: &BTreeMap<Family, BTreeMap<String, f64>>,
    c: f64,
) -> Result<SubjectScores, PipelineError> {
    let mut families = BTreeMap::new();
    for (&family, scores) in clip_scores {
        let own: Vec<f64> = subject
            .clips
            .iter()
            .filter_map(|p| scores.get(&clip_id(p)).copied())
            .collect();
        if !own.is_empty() {
            families.insert(
                family,
                PatientAggregate::from_scores(&subject.subject_id, &own, c)?,
            );
        }
    }
    let text = match &subject.text_scores_csv {
        Some(path) => {
            let scores = read_text_scores(path, &subject.subject_id)?;
            if scores.is_empty() {
                None
            } else {
                Some(PatientAggregate::from_scores(
                    &subject.subject_id,
                    &scores,
                    c,
                )?)
            }
        }
        None => None,
    };
    Ok(SubjectScores { families, text })
}

/// Metrics of `scores` thresholded at the decision threshold.
pub(crate) fn metrics_of(scores: &[f64], truth: &[u8]) -> Result<Option<Metrics>, LearnError> {
    if truth.is_empty() {
        return Ok(None);
    }
    let predicted: Vec<u8> = scores.iter().map(|&p| classify(p)).collect();
    evaluate(&predicted, scores, truth).map(Some)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectPrediction {
    pub subject_id: String,
    pub label: Option<u8>,
    #[serde(flatten)]
    pub fused: Fused,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictSummary {
    pub predictions: Vec<SubjectPrediction>,
    pub errors: Vec<ErrorRecord>,
    pub metrics: MetricsReport,
}

/// Scores the subjects of `split` (all subjects when `None`) and writes
/// the report, per-family scores, metrics and error sidecar to `out_dir`.
pub fn cmd_predict(
    manifest: &Manifest,
    features_dir: &Path,
    models_dir: &Path,
    config: &RunConfig,
    split: Option<Split>,
    out_dir: &Path,
) -> Result<PredictSummary, PipelineError> {
    config.validate()?;

    let mut models = Vec::new();
    for family in Family::ALL {
        let path = models_dir.join(family.model_file());
        if path.is_file() {
            models.push(FamilyModel::load(&path)?);
        }
    }
    if models.is_empty() {
        return Err(PipelineError::ModelMissing(models_dir.to_path_buf()));
    }
    let fusion_path = models_dir.join(FUSION_MODEL_FILE);
    let fusion_model = if fusion_path.is_file() {
        Some(FusionModel::load(&fusion_path)?)
    } else {
        None
    };
    if config.fusion == FusionStrategy::Forest && fusion_model.is_none() {
        return Err(LearnError::UntrainedFusion.into());
    }

    let mut clip_probs = BTreeMap::new();
    for model in &models {
        let path = features_dir.join(model.family.features_file());
        let table =
            load_table(manifest, features_dir, model.family)?.ok_or_else(|| PipelineError::Io {
                path: path.clone(),
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "features not extracted"),
            })?;
        if table.names != model.feature_names {
            return Err(PipelineError::FamilyMismatch {
                family: model.family,
                path,
            });
        }
        clip_probs.insert(model.family, clip_scores(model, &table)?);
    }

    let subjects: Vec<&SubjectEntry> = manifest
        .subjects
        .iter()
        .filter(|s| split.is_none_or(|sp| s.split == sp))
        .collect();
    let trained_on: BTreeSet<&str> = models
        .iter()
        .flat_map(|m| m.train_subjects.iter())
        .chain(fusion_model.iter().flat_map(|m| m.train_subjects.iter()))
        .map(String::as_str)
        .collect();
    if let Some(s) = subjects
        .iter()
        .find(|s| trained_on.contains(s.subject_id.as_str()))
    {
        return Err(PipelineError::Leakage(s.subject_id.clone()));
    }

    let mut predictions = Vec::new();
    let mut errors = Vec::new();
    let mut family_csv = String::from("subject_id,family,n,p_max,p_mean,c,aggregate\n");
    let mut per_family: BTreeMap<String, (Vec<f64>, Vec<u8>)> = BTreeMap::new();
    for subject in &subjects {
        let scores = score_subject(subject, &clip_probs, config.c)?;
        let sources = scores
            .families
            .iter()
            .map(|(f, a)| (f.name(), a))
            .chain(scores.text.as_ref().map(|a| ("text", a)));
        for (name, agg) in sources {
            let p = agg.probability();
            family_csv.push_str(&format!(
                "{},{name},{},{},{},{},{}\n",
                subject.subject_id,
                agg.n,
                fmt_sig10(agg.p_max),
                fmt_sig10(agg.p_mean),
                fmt_sig10(agg.c),
                fmt_sig10(p)
            ));
            if let Some(l) = subject.label {
                let e = per_family.entry(name.to_string()).or_default();
                e.0.push(p);
                e.1.push(l);
            }
        }
        let text_p = scores.text.as_ref().map(PatientAggregate::probability);
        match fuse_scores(
            &scores.voice(),
            text_p,
            config.fusion,
            fusion_model.as_ref().map(|m| &m.forest),
        ) {
            Ok(fused) => predictions.push(SubjectPrediction {
                subject_id: subject.subject_id.clone(),
                label: subject.label,
                fused,
            }),
            Err(e) => errors.push(ErrorRecord {
                id: subject.subject_id.clone(),
                stage: "fusion".into(),
                message: e.to_string(),
            }),
        }
    }

    let mut report = String::from("subject_id,voice_avg,text_p,final_p,label\n");
    for p in &predictions {
        report.push_str(&format!(
            "{},{},{},{},{}\n",
            p.subject_id,
            fmt_sig10(p.fused.voice_avg),
            fmt_sig10(p.fused.text_p),
            fmt_sig10(p.fused.final_p),
            p.fused.label
        ));
    }

    let mut families = BTreeMap::new();
    let mut text = None;
    for (name, (scores, truth)) in &per_family {
        let m = metrics_of(scores, truth)?;
        if name == "text" {
            text = m;
        } else if let Some(m) = m {
            families.insert(name.clone(), m);
        }
    }
    let labeled: Vec<&SubjectPrediction> =
        predictions.iter().filter(|p| p.label.is_some()).collect();
    let fused = metrics_of(
        &labeled.iter().map(|p| p.fused.final_p).collect::<Vec<_>>(),
        &labeled.iter().filter_map(|p| p.label).collect::<Vec<_>>(),
    )?;
    let metrics = MetricsReport {
        c: config.c,
        fusion: config.fusion,
        split,
        n_subjects: subjects.len(),
        n_fused: predictions.len(),
        families,
        text,
        fused,
    };

    write_file(&out_dir.join(REPORT_FILE), &report)?;
    write_file(&out_dir.join(FAMILY_SCORES_FILE), &family_csv)?;
    write_file(&out_dir.join(METRICS_FILE), &to_json_pretty(&metrics)?)?;
    write_file(
        &out_dir.join(PREDICT_ERRORS_FILE),
        &errors_csv("subject_id", &errors),
    )?;
    Ok(PredictSummary {
        predictions,
        errors,
        metrics,
    })
}
