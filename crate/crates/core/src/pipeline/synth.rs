use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::manifest::{Manifest, SubjectEntry};
use super::{to_json_pretty, write_file, PipelineError};
use crate::audio_features::EGEMAPS_DIM;
use crate::learn::Split;
use crate::signal::write_wav;

/// Shape of a synthetic labelled corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Subjects per class; must equal the sum of `split`.
    pub per_class: usize,
    /// Train / validation / test subjects per class.
    pub split: [usize; 3],
    pub clips_per_subject: usize,
    pub duration_s: f64,
    pub sample_rate: u32,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            per_class: 60,
            split: [40, 10, 10],
            clips_per_subject: 3,
            duration_s: 2.0,
            sample_rate: 16_000,
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::Config(m.into()));
        if self.split.iter().sum::<usize>() != self.per_class || self.per_class == 0 {
            return bad("split counts must be non-empty and sum to the subjects per class");
        }
        if self.clips_per_subject == 0 {
            return bad("at least one clip per subject is required");
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) || self.sample_rate == 0 {
            return bad("duration and sample rate must be positive");
        }
        Ok(())
    }
}

/// Peak-normalizes to 0.8 so 16-bit quantization never clips.
fn normalize(x: &mut [f64]) {
    let peak = x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        x.iter_mut().for_each(|v| *v *= 0.8 / peak);
    }
}

/// Class 0: a harmonic tone under slow, regular amplitude modulation.
fn modulated_tone(rng: &mut ChaCha8Rng, n: usize, sr: f64) -> Vec<f64> {
    let f0 = rng.gen_range(100.0..220.0);
    let fm = rng.gen_range(2.0..4.5);
    let depth = rng.gen_range(0.6..0.9);
    let phm = rng.gen_range(0.0..TAU);
    let phases: Vec<f64> = (0..5).map(|_| rng.gen_range(0.0..TAU)).collect();
    let noise = Normal::new(0.0, 0.01).expect("valid sigma");
    let mut x: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / sr;
            let env = 1.0 - depth * (0.5 + 0.5 * (TAU * fm * t + phm).cos());
            let tone: f64 = phases
                .iter()
                .enumerate()
                .map(|(h, ph)| {
                    let k = (h + 1) as f64;
                    (TAU * k * f0 * t + ph).sin() / k
                })
                .sum();
            env * tone + noise.sample(rng)
        })
        .collect();
    normalize(&mut x);
    x
}

/// Class 1: broadband noise under an irregular gain with a faint tone.
fn irregular_noise(rng: &mut ChaCha8Rng, n: usize, sr: f64) -> Vec<f64> {
    let parts: Vec<(f64, f64, f64)> = (0..6)
        .map(|_| {
            (
                rng.gen_range(0.2..1.0),
                rng.gen_range(3.0..14.0),
                rng.gen_range(0.0..TAU),
            )
        })
        .collect();
    let f0 = rng.gen_range(100.0..220.0);
    let white = Normal::new(0.0, 1.0).expect("valid sigma");
    let mut x: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / sr;
            let gain: f64 = 0.15
                + parts
                    .iter()
                    .map(|(a, f, ph)| a * (0.5 + 0.5 * (TAU * f * t + ph).sin()))
                    .sum::<f64>();
            gain * white.sample(rng) + 0.1 * (TAU * f0 * t).sin()
        })
        .collect();
    normalize(&mut x);
    x
}

fn egemaps_csv(rng: &mut ChaCha8Rng, clip_ids: &[String], label: u8) -> String {
    let noise = Normal::new(0.0, 1.0).expect("valid sigma");
    let mut out = String::from("name");
    for k in 0..EGEMAPS_DIM {
        let _ = write!(out, ";feat_{k:02}");
    }
    out.push('\n');
    for id in clip_ids {
        out.push_str(id);
        for k in 0..EGEMAPS_DIM {
            let shift = if k < 10 { 0.8 * label as f64 } else { 0.0 };
            let _ = write!(out, ";{:.6}", noise.sample(rng) + shift);
        }
        out.push('\n');
    }
    out
}

fn text_csv(rng: &mut ChaCha8Rng, subject_id: &str, label: u8) -> String {
    let mean = if label == 1 { 0.62 } else { 0.38 };
    let dist = Normal::new(mean, 0.2).expect("valid sigma");
    let n = rng.gen_range(8..=20);
    let mut out = String::from("subject_id,subseq_id,probability\n");
    for k in 0..n {
        let p: f64 = dist.sample(rng);
        let _ = writeln!(out, "{subject_id},{k},{:.6}", p.clamp(0.0, 1.0));
    }
    out
}

/// Writes a labelled corpus to `out_dir`: WAV clips, per-subject eGeMAPS
/// and text-score CSVs, and `manifest.json`. Returns the manifest path.
///
/// Every subject draws from its own stream of a generator seeded with
/// `config.seed`, so the corpus is identical for any thread count.
pub fn cmd_synth(config: &SynthConfig, out_dir: &Path) -> Result<PathBuf, PipelineError> {
    config.validate()?;
    let n = (config.duration_s * config.sample_rate as f64).round() as usize;
    let sr = config.sample_rate as f64;
    let [n_train, n_val, _] = config.split;

    let specs: Vec<(usize, u8, Split)> = (0..2 * config.per_class)
        .map(|i| {
            let label = (i % 2) as u8;
            let k = i / 2;
            let split = if k < n_train {
                Split::Train
            } else if k < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
            (i, label, split)
        })
        .collect();

    let subjects = specs
        .par_iter()
        .map(
            |&(i, label, split)| -> Result<SubjectEntry, PipelineError> {
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                rng.set_stream(i as u64);
                let subject_id = format!("subj{i:03}");
                let mut clips = Vec::new();
                let mut ids = Vec::new();
                for k in 0..config.clips_per_subject {
                    let id = format!("{subject_id}_c{k}");
                    let x = if label == 0 {
                        modulated_tone(&mut rng, n, sr)
                    } else {
                        irregular_noise(&mut rng, n, sr)
                    };
                    let rel = PathBuf::from("wav").join(format!("{id}.wav"));
                    let path = out_dir.join(&rel);
                    if let Some(dir) = path.parent() {
                        std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
                    }
                    write_wav(&path, &x, config.sample_rate)?;
                    clips.push(rel);
                    ids.push(id);
                }
                let eg_rel = PathBuf::from("egemaps").join(format!("{subject_id}.csv"));
                write_file(&out_dir.join(&eg_rel), &egemaps_csv(&mut rng, &ids, label))?;
                let text_rel = PathBuf::from("text").join(format!("{subject_id}.csv"));
                write_file(
                    &out_dir.join(&text_rel),
                    &text_csv(&mut rng, &subject_id, label),
                )?;
                Ok(SubjectEntry {
                    subject_id,
                    label: Some(label),
                    split,
                    clips,
                    egemaps_csv: Some(eg_rel),
                    text_scores_csv: Some(text_rel),
                })
            },
        )
        .collect::<Result<Vec<_>, _>>()?;

    let path = out_dir.join("manifest.json");
    write_file(&path, &to_json_pretty(&Manifest { subjects })?)?;
    Ok(path)
}
