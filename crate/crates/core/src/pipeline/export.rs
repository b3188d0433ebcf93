use std::path::Path;

use super::tables::FeatureTable;
use super::{write_file, PipelineError, RunConfig};
use crate::graph_features::{extract_graph_features, FeatureError, GraphFeatureVector};
use crate::signal::load_wav;
use crate::visibility::{graph_series, VisibilityGraph};

#[derive(Debug, Clone, PartialEq)]
pub struct GraphExportOutput {
    pub graph: VisibilityGraph,
    /// Absent when the graph is too small or disconnected for metrics.
    pub features: Result<GraphFeatureVector, FeatureError>,
}

/// Builds the visibility graph of one WAV file and writes it as JSON to
/// `graph_path`; when `features_path` is given, also writes its feature row.
pub fn cmd_graph_export(
    wav: &Path,
    config: &RunConfig,
    graph_path: &Path,
    features_path: Option<&Path>,
) -> Result<GraphExportOutput, PipelineError> {
    config.validate()?;
    let clip = load_wav(wav)?;
    let series = graph_series(&clip, &config.peaks, config.vg_input)?;
    let graph = config.vg_builder.build(&series)?;
    write_file(graph_path, &(graph.to_json() + "\n"))?;
    let features = extract_graph_features(&graph);
    if let Some(path) = features_path {
        let f = features
            .clone()
            .map_err(|e| PipelineError::Data(format!("{}: {e}", wav.display())))?;
        FeatureTable {
            names: GraphFeatureVector::NAMES
                .iter()
                .map(|s| s.to_string())
                .collect(),
            rows: vec![(clip.source_id().to_string(), f.to_array().to_vec())],
        }
        .write(path)?;
    }
    Ok(GraphExportOutput { graph, features })
}
