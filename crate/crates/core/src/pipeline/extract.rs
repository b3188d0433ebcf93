use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::manifest::{clip_id, Manifest};
use super::tables::{errors_csv, ErrorRecord, FeatureTable};
use super::{to_json_pretty, write_file, Family, PipelineError, RunConfig, ERRORS_FILE};
use crate::audio_features::{ingest_egemaps_csv, low_level_features, EgemapsTable};
use crate::graph_features::{extract_graph_features, GraphFeatureVector};
use crate::signal::{load_wav, AudioClip};
use crate::visibility::graph_series;

pub const EXTRACT_CONFIG_FILE: &str = "extract_config.json";

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractSummary {
    pub n_clips: usize,
    /// Rows written per family.
    pub rows: BTreeMap<Family, usize>,
    pub errors: Vec<ErrorRecord>,
}

type Row = Result<(Vec<String>, Vec<f64>), String>;

struct ClipResult {
    id: String,
    load_error: Option<String>,
    vg: Row,
    mfcc: Row,
}

/// VG features of one clip under `config`.
pub(crate) fn vg_row(clip: &AudioClip, config: &RunConfig) -> Result<GraphFeatureVector, String> {
    let series = graph_series(clip, &config.peaks, config.vg_input).map_err(|e| e.to_string())?;
    let graph = config
        .vg_builder
        .build(&series)
        .map_err(|e| e.to_string())?;
    extract_graph_features(&graph).map_err(|e| e.to_string())
}

fn process_clip(path: &Path, config: &RunConfig) -> ClipResult {
    let id = clip_id(path);
    let clip = match load_wav(path) {
        Ok(c) => c,
        Err(e) => {
            return ClipResult {
                id,
                load_error: Some(e.to_string()),
                vg: Err(String::new()),
                mfcc: Err(String::new()),
            }
        }
    };
    let vg = vg_row(&clip, config).map(|f| {
        let names = GraphFeatureVector::NAMES
            .iter()
            .map(|s| s.to_string())
            .collect();
        (names, f.to_array().to_vec())
    });
    let mfcc = low_level_features(&clip, &config.spectral)
        .map(|parts| {
            let mut names = Vec::new();
            let mut values = Vec::new();
            for p in parts {
                names.extend(p.names);
                values.extend(p.values);
            }
            (names, values)
        })
        .map_err(|e| e.to_string());
    ClipResult {
        id,
        load_error: None,
        vg,
        mfcc,
    }
}

/// Appends `row` to `table`, or records why it cannot be.
fn push_row(
    table: &mut FeatureTable,
    errors: &mut Vec<ErrorRecord>,
    family: Family,
    id: &str,
    row: Row,
) {
    let record = |message: String| ErrorRecord {
        id: id.to_string(),
        stage: family.name().to_string(),
        message,
    };
    match row {
        Ok((names, values)) => {
            if table.rows.is_empty() && table.names.is_empty() {
                table.names = names;
            } else if table.names != names {
                errors.push(record(format!(
                    "{} features do not match the corpus layout of {} features \
                     (different sample rate?)",
                    names.len(),
                    table.names.len()
                )));
                return;
            }
            table.rows.push((id.to_string(), values));
        }
        Err(message) => errors.push(record(message)),
    }
}

/// Extracts every family for every clip of the manifest and writes
/// `features_<family>.csv` plus the error sidecar into `out_dir`.
///
/// Clips are processed in parallel; rows keep manifest order. A clip that
/// fails in one family is recorded in the sidecar and skipped there only.
pub fn cmd_extract(
    manifest: &Manifest,
    config: &RunConfig,
    out_dir: &Path,
) -> Result<ExtractSummary, PipelineError> {
    config.validate()?;

    let mut egemaps: BTreeMap<PathBuf, EgemapsTable> = BTreeMap::new();
    for path in manifest
        .subjects
        .iter()
        .filter_map(|s| s.egemaps_csv.as_ref())
    {
        if !egemaps.contains_key(path) {
            let table = ingest_egemaps_csv(path)?;
            if let Some(first) = egemaps.values().next() {
                if first.feature_names != table.feature_names {
                    return Err(PipelineError::Data(format!(
                        "{}: eGeMAPS columns differ from the other files",
                        path.display()
                    )));
                }
            }
            egemaps.insert(path.clone(), table);
        }
    }

    let jobs: Vec<(usize, &PathBuf)> = manifest
        .subjects
        .iter()
        .enumerate()
        .flat_map(|(i, s)| s.clips.iter().map(move |c| (i, c)))
        .collect();
    let results: Vec<ClipResult> = config.install(|| {
        jobs.par_iter()
            .map(|(_, path)| process_clip(path, config))
            .collect()
    })?;

    let mut errors = Vec::new();
    let mut vg = empty_table();
    let mut mfcc = empty_table();
    let mut eg = egemaps.values().next().map(|t| FeatureTable {
        names: t.feature_names.clone(),
        rows: Vec::new(),
    });
    for ((subject, _), r) in jobs.iter().zip(results) {
        if let Some(message) = r.load_error {
            errors.push(ErrorRecord {
                id: r.id,
                stage: "load".into(),
                message,
            });
            continue;
        }
        push_row(&mut vg, &mut errors, Family::Vg, &r.id, r.vg);
        push_row(&mut mfcc, &mut errors, Family::Mfcc, &r.id, r.mfcc);
        if let Some(table) = eg.as_mut() {
            let source = manifest.subjects[*subject]
                .egemaps_csv
                .as_ref()
                .and_then(|p| egemaps.get(p));
            match source.and_then(|t| t.vectors.get(&r.id)) {
                Some(v) => table.rows.push((r.id.clone(), v.0.clone())),
                None => errors.push(ErrorRecord {
                    id: r.id.clone(),
                    stage: Family::Egemaps.name().into(),
                    message: "no eGeMAPS row for this clip".into(),
                }),
            }
        }
    }

    let mut rows = BTreeMap::new();
    for (family, table) in [
        (Family::Vg, Some(&vg)),
        (Family::Mfcc, Some(&mfcc)),
        (Family::Egemaps, eg.as_ref()),
    ] {
        if let Some(t) = table {
            t.write(&out_dir.join(family.features_file()))?;
            rows.insert(family, t.rows.len());
        }
    }
    write_file(&out_dir.join(ERRORS_FILE), &errors_csv("clip_id", &errors))?;
    write_file(&out_dir.join(EXTRACT_CONFIG_FILE), &to_json_pretty(config)?)?;

    Ok(ExtractSummary {
        n_clips: jobs.len(),
        rows,
        errors,
    })
}

fn empty_table() -> FeatureTable {
    FeatureTable {
        names: Vec::new(),
        rows: Vec::new(),
    }
}
