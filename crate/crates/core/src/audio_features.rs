//! Low-level spectral features and the eGeMAPS CSV adapter.
//!
//! Power spectrogram -> HTK mel filterbank -> log + orthonormal DCT-II,
//! each pooled over frames into a fixed-length clip vector (per-column
//! mean followed by per-column population std).

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signal::{frame_signal, AudioClip, SignalError, WindowKind};

pub const EGEMAPS_DIM: usize = 88;
pub const LOG_FLOOR: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum AudioFeatureError {
    #[error("bad FFT size {fft_size}: must be a power of two >= frame length {frame_len}")]
    BadFftSize { fft_size: usize, frame_len: usize },
    #[error("bad mel band: {0}")]
    BadBand(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("cannot pool an empty matrix")]
    Empty,
    #[error("{path}: expected {EGEMAPS_DIM} numeric columns, found {found}")]
    WrongColumnCount { path: String, found: usize },
    #[error("{path}: row {row}, column {column}: {value:?} is not a finite number")]
    NonNumericCell {
        path: String,
        row: usize,
        column: String,
        value: String,
    },
    #[error("{path}: duplicate clip id {id:?}")]
    DuplicateId { path: String, id: String },
    #[error("{path}: {message}")]
    Csv { path: String, message: String },
    #[error(transparent)]
    Signal(#[from] SignalError),
}

/// Dense row-major matrix of per-frame features.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub n_rows: usize,
    pub n_cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n_cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == n_cols), "ragged rows");
        Self {
            n_rows: rows.len(),
            n_cols,
            data: rows.concat(),
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact panics on 0; an empty-column matrix has no rows to yield
        self.data.chunks_exact(self.n_cols.max(1))
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrogramMatrix {
    /// `n_frames x (fft_size / 2 + 1)` magnitude-squared DFT bins.
    pub power: Matrix,
    pub fft_size: usize,
    pub sample_rate: u32,
    pub frame_ms: f64,
    pub hop_ms: f64,
}

impl SpectrogramMatrix {
    pub fn bin_hz(&self) -> f64 {
        self.sample_rate as f64 / self.fft_size as f64
    }

    pub fn n_bins(&self) -> usize {
        self.power.n_cols
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MfccMatrix {
    pub values: Matrix,
    pub n_coeffs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Mfcc,
    Mel,
    Spectro,
    Egemaps,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Mfcc => "mfcc",
            Provenance::Mel => "mel",
            Provenance::Spectro => "spectro",
            Provenance::Egemaps => "egemaps",
        })
    }
}

/// A named, fixed-length feature vector for one clip.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipFeatureVector {
    pub provenance: Provenance,
    pub names: Vec<String>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EgemapsVector(pub Vec<f64>);

/// Parsed eGeMAPS file: column names and one vector per clip id.
#[derive(Debug, Clone, PartialEq)]
pub struct EgemapsTable {
    pub feature_names: Vec<String>,
    pub vectors: BTreeMap<String, EgemapsVector>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralConfig {
    pub frame_ms: f64,
    pub hop_ms: f64,
    /// Defaults to the next power of two at or above the frame length.
    pub fft_size: Option<usize>,
    pub n_mels: usize,
    pub n_mfcc: usize,
    pub f_min: f64,
    /// Defaults to the Nyquist frequency.
    pub f_max: Option<f64>,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        Self {
            frame_ms: 25.0,
            hop_ms: 10.0,
            fft_size: None,
            n_mels: 26,
            n_mfcc: 13,
            f_min: 0.0,
            f_max: None,
        }
    }
}

impl SpectralConfig {
    pub fn validate(&self) -> Result<(), AudioFeatureError> {
        if !(self.hop_ms > 0.0) || !(self.frame_ms >= self.hop_ms) {
            return Err(AudioFeatureError::InvalidParameter(format!(
                "need frame_ms >= hop_ms > 0, got {} and {}",
                self.frame_ms, self.hop_ms
            )));
        }
        if self.n_mels == 0 || self.n_mfcc == 0 || self.n_mfcc > self.n_mels {
            return Err(AudioFeatureError::InvalidParameter(format!(
                "need 1 <= n_mfcc <= n_mels, got {} and {}",
                self.n_mfcc, self.n_mels
            )));
        }
        if let Some(n) = self.fft_size {
            if !n.is_power_of_two() {
                return Err(AudioFeatureError::BadFftSize {
                    fft_size: n,
                    frame_len: 0,
                });
            }
        }
        Ok(())
    }

    pub fn fft_size_for(&self, sample_rate: u32) -> usize {
        self.fft_size.unwrap_or_else(|| {
            let frame_len = (self.frame_ms * sample_rate as f64 / 1000.0).round() as usize;
            frame_len.max(1).next_power_of_two()
        })
    }
}

/// Hamming-windowed power spectrogram of the non-negative DFT bins.
pub fn spectrogram(
    clip: &AudioClip,
    fft_size: usize,
    frame_ms: f64,
    hop_ms: f64,
) -> Result<SpectrogramMatrix, AudioFeatureError> {
    let frames = frame_signal(clip, frame_ms, hop_ms, WindowKind::Hamming)?;
    if !fft_size.is_power_of_two() || fft_size < frames.frame_len {
        return Err(AudioFeatureError::BadFftSize {
            fft_size,
            frame_len: frames.frame_len,
        });
    }
    let fft = FftPlanner::<f64>::new().plan_fft_forward(fft_size);
    let n_bins = fft_size / 2 + 1;
    let mut buf = vec![Complex::new(0.0, 0.0); fft_size];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut data = Vec::with_capacity(frames.n_frames * n_bins);
    for frame in frames.frames() {
        for (b, &s) in buf
            .iter_mut()
            .zip(frame.iter().chain(std::iter::repeat(&0.0)))
        {
            *b = Complex::new(s, 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        data.extend(buf[..n_bins].iter().map(|c| c.norm_sqr()));
    }
    Ok(SpectrogramMatrix {
        power: Matrix {
            n_rows: frames.n_frames,
            n_cols: n_bins,
            data,
        },
        fft_size,
        sample_rate: clip.sample_rate(),
        frame_ms,
        hop_ms,
    })
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular HTK-mel filters over `n_bins` DFT bins, each scaled so its
/// weights sum to 1. Returns `n_mels` rows of `n_bins` weights.
pub fn mel_filterbank(
    n_mels: usize,
    n_bins: usize,
    bin_hz: f64,
    f_min: f64,
    f_max: f64,
) -> Result<Vec<Vec<f64>>, AudioFeatureError> {
    let nyquist = bin_hz * (n_bins - 1) as f64;
    if n_mels == 0 {
        return Err(AudioFeatureError::BadBand("n_mels must be positive".into()));
    }
    if !(f_min >= 0.0) || !(f_min < f_max) || f_max > nyquist * (1.0 + 1e-12) {
        return Err(AudioFeatureError::BadBand(format!(
            "need 0 <= f_min < f_max <= {nyquist} Hz, got {f_min}..{f_max}"
        )));
    }
    let (lo, hi) = (hz_to_mel(f_min), hz_to_mel(f_max));
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64))
        .collect();
    let mut bank = Vec::with_capacity(n_mels);
    for m in 0..n_mels {
        let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
        let mut row: Vec<f64> = (0..n_bins)
            .map(|k| {
                let f = k as f64 * bin_hz;
                if f > left && f <= center {
                    (f - left) / (center - left)
                } else if f > center && f < right {
                    (right - f) / (right - center)
                } else {
                    0.0
                }
            })
            .collect();
        let total: f64 = row.iter().sum();
        if total <= 0.0 {
            return Err(AudioFeatureError::BadBand(format!(
                "mel band {m} ({left:.1}-{right:.1} Hz) contains no DFT bin; \
                 use fewer mel bands or a larger FFT"
            )));
        }
        row.iter_mut().for_each(|w| *w /= total);
        bank.push(row);
    }
    Ok(bank)
}

/// Center frequency of every band of [`mel_filterbank`].
pub fn mel_centers(n_mels: usize, f_min: f64, f_max: f64) -> Vec<f64> {
    let (lo, hi) = (hz_to_mel(f_min), hz_to_mel(f_max));
    (1..=n_mels)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64))
        .collect()
}

pub fn mel_spectrogram(
    spec: &SpectrogramMatrix,
    n_mels: usize,
    f_min: f64,
    f_max: f64,
) -> Result<Matrix, AudioFeatureError> {
    let bank = mel_filterbank(n_mels, spec.n_bins(), spec.bin_hz(), f_min, f_max)?;
    Ok(apply_filterbank(&spec.power, &bank))
}

pub fn apply_filterbank(power: &Matrix, bank: &[Vec<f64>]) -> Matrix {
    let mut data = Vec::with_capacity(power.n_rows * bank.len());
    for frame in power.rows() {
        data.extend(
            bank.iter()
                .map(|w| w.iter().zip(frame).map(|(a, b)| a * b).sum::<f64>()),
        );
    }
    Matrix {
        n_rows: power.n_rows,
        n_cols: bank.len(),
        data,
    }
}

/// Orthonormal DCT-II of `x`.
pub fn dct2(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    (0..x.len())
        .map(|k| {
            let scale = if k == 0 {
                (1.0 / n).sqrt()
            } else {
                (2.0 / n).sqrt()
            };
            scale
                * x.iter()
                    .enumerate()
                    .map(|(i, v)| {
                        v * (std::f64::consts::PI * k as f64 * (2 * i + 1) as f64 / (2.0 * n)).cos()
                    })
                    .sum::<f64>()
        })
        .collect()
}

/// Inverse of [`dct2`] (orthonormal DCT-III).
pub fn idct2(c: &[f64]) -> Vec<f64> {
    let n = c.len() as f64;
    (0..c.len())
        .map(|i| {
            c.iter()
                .enumerate()
                .map(|(k, v)| {
                    let scale = if k == 0 {
                        (1.0 / n).sqrt()
                    } else {
                        (2.0 / n).sqrt()
                    };
                    scale
                        * v
                        * (std::f64::consts::PI * k as f64 * (2 * i + 1) as f64 / (2.0 * n)).cos()
                })
                .sum()
        })
        .collect()
}

/// Log (floored at 1e-10) then DCT-II over the mel axis, first `n_coeffs` kept.
pub fn mfcc(mel: &Matrix, n_coeffs: usize) -> Result<MfccMatrix, AudioFeatureError> {
    if n_coeffs == 0 || n_coeffs > mel.n_cols {
        return Err(AudioFeatureError::InvalidParameter(format!(
            "need 1 <= n_coeffs <= n_mels ({}), got {n_coeffs}",
            mel.n_cols
        )));
    }
    let mut data = Vec::with_capacity(mel.n_rows * n_coeffs);
    for frame in mel.rows() {
        let logs: Vec<f64> = frame.iter().map(|v| v.max(LOG_FLOOR).ln()).collect();
        data.extend_from_slice(&dct2(&logs)[..n_coeffs]);
    }
    Ok(MfccMatrix {
        values: Matrix {
            n_rows: mel.n_rows,
            n_cols: n_coeffs,
            data,
        },
        n_coeffs,
    })
}

/// Per-column mean followed by per-column population standard deviation.
pub fn pool_clip(
    frames: &Matrix,
    provenance: Provenance,
) -> Result<ClipFeatureVector, AudioFeatureError> {
    if frames.n_rows == 0 || frames.n_cols == 0 {
        return Err(AudioFeatureError::Empty);
    }
    let n = frames.n_rows as f64;
    let d = frames.n_cols;
    let mut mean = vec![0.0; d];
    for r in frames.rows() {
        mean.iter_mut().zip(r).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for r in frames.rows() {
        for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let names = (0..d)
        .map(|i| format!("{provenance}_mean_{i}"))
        .chain((0..d).map(|i| format!("{provenance}_std_{i}")))
        .collect();
    let values = mean
        .into_iter()
        .chain(var.into_iter().map(|s| (s / n).sqrt()))
        .collect();
    Ok(ClipFeatureVector {
        provenance,
        names,
        values,
    })
}

/// Pooled MFCC, mel-spectrogram and spectrogram features of one clip.
pub fn low_level_features(
    clip: &AudioClip,
    cfg: &SpectralConfig,
) -> Result<Vec<ClipFeatureVector>, AudioFeatureError> {
    cfg.validate()?;
    let fft_size = cfg.fft_size_for(clip.sample_rate());
    let spec = spectrogram(clip, fft_size, cfg.frame_ms, cfg.hop_ms)?;
    let f_max = cfg.f_max.unwrap_or(clip.sample_rate() as f64 / 2.0);
    let mel = mel_spectrogram(&spec, cfg.n_mels, cfg.f_min, f_max)?;
    let cepstra = mfcc(&mel, cfg.n_mfcc)?;
    Ok(vec![
        pool_clip(&cepstra.values, Provenance::Mfcc)?,
        pool_clip(&mel, Provenance::Mel)?,
        pool_clip(&spec.power, Provenance::Spectro)?,
    ])
}

/// Reads an eGeMAPS functionals CSV: an id column followed by exactly 88
/// numeric columns. The delimiter (`,` or `;`) is taken from the header.
pub fn ingest_egemaps_csv(path: &Path) -> Result<EgemapsTable, AudioFeatureError> {
    let p = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| AudioFeatureError::Csv {
        path: p.clone(),
        message: e.to_string(),
    })?;
    parse_egemaps(&text, &p)
}

pub fn parse_egemaps(text: &str, origin: &str) -> Result<EgemapsTable, AudioFeatureError> {
    let header_line = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    let delimiter = if header_line.contains(';') {
        b';'
    } else {
        b','
    };
    let csv_err = |e: csv::Error| AudioFeatureError::Csv {
        path: origin.to_string(),
        message: e.to_string(),
    };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(csv_err)?.clone();
    let found = header.len().saturating_sub(1);
    if found != EGEMAPS_DIM {
        return Err(AudioFeatureError::WrongColumnCount {
            path: origin.to_string(),
            found,
        });
    }
    let feature_names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut vectors = BTreeMap::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        if record.len() != EGEMAPS_DIM + 1 {
            return Err(AudioFeatureError::WrongColumnCount {
                path: origin.to_string(),
                found: record.len().saturating_sub(1),
            });
        }
        let id = record[0].to_string();
        let values = record
            .iter()
            .skip(1)
            .zip(&feature_names)
            .map(|(cell, name)| {
                cell.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| AudioFeatureError::NonNumericCell {
                        path: origin.to_string(),
                        row: row + 1,
                        column: name.clone(),
                        value: cell.to_string(),
                    })
            })
            .collect::<Result<Vec<_>, _>>()?;
        if vectors.insert(id.clone(), EgemapsVector(values)).is_some() {
            return Err(AudioFeatureError::DuplicateId {
                path: origin.to_string(),
                id,
            });
        }
    }
    Ok(EgemapsTable {
        feature_names,
        vectors,
    })
}
