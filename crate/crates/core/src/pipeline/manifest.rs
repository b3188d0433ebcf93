use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{read_file, PipelineError};
use crate::learn::Split;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectEntry {
    pub subject_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<u8>,
    pub split: Split,
    pub clips: Vec<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub egemaps_csv: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_scores_csv: Option<PathBuf>,
}

/// The subjects of a corpus. Relative paths resolve against the manifest's
/// directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub subjects: Vec<SubjectEntry>,
}

/// Clip id of a WAV path: its file stem.
pub fn clip_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = read_file(path)?;
        let mut manifest: Manifest = serde_json::from_str(&text)
            .map_err(|e| PipelineError::ManifestInvalid(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for s in &mut manifest.subjects {
            for clip in &mut s.clips {
                *clip = base.join(&*clip);
            }
            for p in [&mut s.egemaps_csv, &mut s.text_scores_csv]
                .into_iter()
                .flatten()
            {
                *p = base.join(&*p);
            }
        }
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let invalid = |m: String| Err(PipelineError::ManifestInvalid(m));
        let mut ids = BTreeSet::new();
        let mut clips = BTreeSet::new();
        for s in &self.subjects {
            if s.subject_id.is_empty() {
                return invalid("empty subject_id".into());
            }
            if !ids.insert(s.subject_id.as_str()) {
                return invalid(format!("duplicate subject_id {:?}", s.subject_id));
            }
            if let Some(l) = s.label {
                if l > 1 {
                    return invalid(format!("subject {}: label {l} is not 0 or 1", s.subject_id));
                }
            }
            for clip in &s.clips {
                if !clips.insert(clip_id(clip)) {
                    return invalid(format!(
                        "clip id {:?} (from {}) is not unique",
                        clip_id(clip),
                        clip.display()
                    ));
                }
            }
            let files = s
                .clips
                .iter()
                .chain(s.egemaps_csv.iter())
                .chain(s.text_scores_csv.iter());
            for f in files {
                if !f.is_file() {
                    return invalid(format!(
                        "subject {}: {} does not exist",
                        s.subject_id,
                        f.display()
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn subject(&self, id: &str) -> Option<&SubjectEntry> {
        self.subjects.iter().find(|s| s.subject_id == id)
    }

    /// Clip id -> index of its subject.
    pub fn clip_owners(&self) -> std::collections::BTreeMap<String, usize> {
        self.subjects
            .iter()
            .enumerate()
            .flat_map(|(i, s)| s.clips.iter().map(move |c| (clip_id(c), i)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(json: &str, files: &[&str]) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        for f in files {
            std::fs::write(dir.path().join(f), b"x").unwrap();
        }
        let p = dir.path().join("manifest.json");
        std::fs::write(&p, json).unwrap();
        (dir, p)
    }

    #[test]
    fn loads_and_resolves_paths() {
        let (dir, p) = setup(
            r#"{"subjects":[{"subject_id":"s1","label":1,"split":"train","clips":["a.wav"],"text_scores_csv":"t.csv"},
                            {"subject_id":"s2","split":"test","clips":["b.wav"]}]}"#,
            &["a.wav", "b.wav", "t.csv"],
        );
        let m = Manifest::load(&p).unwrap();
        assert_eq!(m.subjects[0].clips[0], dir.path().join("a.wav"));
        assert_eq!(m.subjects[1].label, None);
        assert_eq!(m.clip_owners()["b"], 1);
    }

    #[test]
    fn rejects_bad_manifests() {
        let cases = [
            r#"{"subjects":[{"subject_id":"s","split":"train","clips":["a.wav"]},{"subject_id":"s","split":"test","clips":[]}]}"#,
            r#"{"subjects":[{"subject_id":"s","split":"train","clips":["missing.wav"]}]}"#,
            r#"{"subjects":[{"subject_id":"s","split":"holdout","clips":[]}]}"#,
            r#"{"subjects":[{"subject_id":"s","label":3,"split":"train","clips":[]}]}"#,
            r#"{"subjects":[{"subject_id":"s","split":"train","clips":["a.wav"]},{"subject_id":"t","split":"test","clips":["a.wav"]}]}"#,
        ];
        for json in cases {
            let (_d, p) = setup(json, &["a.wav"]);
            assert!(
                matches!(Manifest::load(&p), Err(PipelineError::ManifestInvalid(_))),
                "{json}"
            );
        }
    }
}
