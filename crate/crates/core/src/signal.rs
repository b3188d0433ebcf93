//! Audio loading, amplitude envelopes, peak picking and framing.
//!
//! Everything here is a pure function of its inputs. The envelope is a
//! moving RMS with a hop of half the window; its local maxima (filtered by
//! distance and topographic prominence) are the points a visibility graph
//! is usually built on.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("malformed WAV file: {0}")]
    MalformedWav(String),
    #[error("unsupported WAV encoding: {0}")]
    UnsupportedEncoding(String),
    #[error("invalid audio clip: {0}")]
    InvalidClip(String),
    #[error("invalid time series: {0}")]
    InvalidSeries(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("envelope window of {window} samples exceeds clip length {len}")]
    WindowTooLong { window: usize, len: usize },
    #[error("series too short: need at least {needed} points, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("clip too short: {len} samples, one frame needs {frame}")]
    ClipTooShort { len: usize, frame: usize },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Mono audio with samples normalized to [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f64>,
    sample_rate: u32,
    source_id: String,
}

impl AudioClip {
    pub fn new(
        samples: Vec<f64>,
        sample_rate: u32,
        source_id: impl Into<String>,
    ) -> Result<Self, SignalError> {
        if sample_rate == 0 {
            return Err(SignalError::InvalidClip(
                "sample rate must be positive".into(),
            ));
        }
        if samples.len() < 2 {
            return Err(SignalError::InvalidClip(format!(
                "need at least 2 samples, got {}",
                samples.len()
            )));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite() || s.abs() > 1.0) {
            return Err(SignalError::InvalidClip(format!(
                "sample {i} is {} (must be finite and within [-1, 1])",
                samples[i]
            )));
        }
        Ok(Self {
            samples,
            sample_rate,
            source_id: source_id.into(),
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Number of samples spanned by `ms` milliseconds at this clip's rate.
    pub fn ms_to_samples(&self, ms: f64) -> usize {
        (ms * self.sample_rate as f64 / 1000.0).round() as usize
    }

    /// The raw samples as a time series, `t = k / sample_rate`.
    pub fn to_series(&self) -> TimeSeries {
        let sr = self.sample_rate as f64;
        TimeSeries {
            t: (0..self.samples.len()).map(|k| k as f64 / sr).collect(),
            y: self.samples.clone(),
        }
    }
}

/// Ordered `(t, y)` samples with strictly increasing, finite times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    t: Vec<f64>,
    y: Vec<f64>,
}

impl TimeSeries {
    pub fn new(t: Vec<f64>, y: Vec<f64>) -> Result<Self, SignalError> {
        if t.len() != y.len() {
            return Err(SignalError::InvalidSeries(format!(
                "{} times but {} values",
                t.len(),
                y.len()
            )));
        }
        if let Some(i) = t
            .iter()
            .zip(&y)
            .position(|(a, b)| !a.is_finite() || !b.is_finite())
        {
            return Err(SignalError::InvalidSeries(format!(
                "non-finite point at {i}"
            )));
        }
        if let Some(i) = t.windows(2).position(|w| w[1] <= w[0]) {
            return Err(SignalError::InvalidSeries(format!(
                "times not strictly increasing at index {}",
                i + 1
            )));
        }
        Ok(Self { t, y })
    }

    /// Values sampled at `t = 0, 1, 2, ...`.
    pub fn from_values(y: Vec<f64>) -> Result<Self, SignalError> {
        let t = (0..y.len()).map(|i| i as f64).collect();
        Self::new(t, y)
    }

    pub fn times(&self) -> &[f64] {
        &self.t
    }

    pub fn values(&self) -> &[f64] {
        &self.y
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn point(&self, i: usize) -> (f64, f64) {
        (self.t[i], self.y[i])
    }

    /// Keeps the points at `indices`, which must be strictly increasing.
    pub fn select(&self, indices: &[usize]) -> TimeSeries {
        debug_assert!(indices.windows(2).all(|w| w[0] < w[1]));
        TimeSeries {
            t: indices.iter().map(|&i| self.t[i]).collect(),
            y: indices.iter().map(|&i| self.y[i]).collect(),
        }
    }

    /// The same series traversed backwards in time (`t -> -t`).
    pub fn reversed(&self) -> TimeSeries {
        TimeSeries {
            t: self.t.iter().rev().map(|t| -t).collect(),
            y: self.y.iter().rev().copied().collect(),
        }
    }
}

/// Envelope and peak-picking parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakParams {
    pub window_ms: f64,
    pub min_distance_ms: f64,
    pub min_prominence: f64,
}

impl Default for PeakParams {
    fn default() -> Self {
        Self {
            window_ms: 20.0,
            min_distance_ms: 10.0,
            min_prominence: 0.01,
        }
    }
}

/// Local maxima of a series together with the parameters that selected them.
#[derive(Debug, Clone, PartialEq)]
pub struct PeakSequence {
    pub series: TimeSeries,
    /// Positions of the peaks in the series they were detected on.
    pub indices: Vec<usize>,
    pub min_distance_ms: f64,
    pub min_prominence: f64,
    /// Envelope window, when the peaks came from [`compute_envelope`].
    pub window_ms: Option<f64>,
}

impl PeakSequence {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    Hamming,
    Hann,
    Rect,
}

impl WindowKind {
    /// Symmetric window coefficients of length `len`.
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        if len == 1 {
            return vec![1.0];
        }
        let denom = (len - 1) as f64;
        (0..len)
            .map(|n| {
                let phase = 2.0 * std::f64::consts::PI * n as f64 / denom;
                match self {
                    WindowKind::Hamming => 0.54 - 0.46 * phase.cos(),
                    WindowKind::Hann => 0.5 - 0.5 * phase.cos(),
                    WindowKind::Rect => 1.0,
                }
            })
            .collect()
    }
}

/// Windowed, possibly overlapping frames cut from a clip.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMatrix {
    /// Row-major `n_frames x frame_len`.
    data: Vec<f64>,
    pub n_frames: usize,
    pub frame_len: usize,
    pub hop_len: usize,
    pub frame_ms: f64,
    pub hop_ms: f64,
    pub window_kind: WindowKind,
}

impl FrameMatrix {
    pub fn frame(&self, i: usize) -> &[f64] {
        &self.data[i * self.frame_len..(i + 1) * self.frame_len]
    }

    pub fn frames(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.frame_len)
    }
}

/// Reads a 16-bit PCM WAV file, averaging channels to mono.
pub fn load_wav(path: &Path) -> Result<AudioClip, SignalError> {
    let reader = hound::WavReader::open(path).map_err(|e| map_hound(e, path))?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(SignalError::UnsupportedEncoding(format!(
            "{}: {:?} {}-bit, only PCM 16-bit is accepted",
            path.display(),
            spec.sample_format,
            spec.bits_per_sample
        )));
    }
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(SignalError::MalformedWav(format!(
            "{}: zero channels",
            path.display()
        )));
    }
    let raw = reader
        .into_samples::<i16>()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| map_hound(e, path))?;
    if raw.len() % channels != 0 {
        return Err(SignalError::MalformedWav(format!(
            "{}: truncated frame ({} samples for {} channels)",
            path.display(),
            raw.len(),
            channels
        )));
    }
    let samples = raw
        .chunks_exact(channels)
        .map(|frame| frame.iter().map(|&s| s as f64 / 32768.0).sum::<f64>() / channels as f64)
        .collect();
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    AudioClip::new(samples, spec.sample_rate, id)
}

fn map_hound(e: hound::Error, path: &Path) -> SignalError {
    match e {
        hound::Error::Unsupported => {
            SignalError::UnsupportedEncoding(format!("{}: unsupported format", path.display()))
        }
        hound::Error::IoError(io) if io.kind() == std::io::ErrorKind::NotFound => {
            SignalError::Io(io)
        }
        other => SignalError::MalformedWav(format!("{}: {other}", path.display())),
    }
}

/// Writes a mono 16-bit PCM WAV. Samples are scaled by 32767 and clamped.
pub fn write_wav(path: &Path, samples: &[f64], sample_rate: u32) -> Result<(), SignalError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let to_err = |e: hound::Error| SignalError::MalformedWav(format!("{}: {e}", path.display()));
    let mut writer = hound::WavWriter::create(path, spec).map_err(to_err)?;
    for &s in samples {
        let q = (s * 32767.0).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(q).map_err(to_err)?;
    }
    writer.finalize().map_err(to_err)
}

/// Moving-RMS envelope with a hop of half the window (at least one sample).
///
/// Each output point is stamped with the time of its window's center.
pub fn compute_envelope(clip: &AudioClip, window_ms: f64) -> Result<TimeSeries, SignalError> {
    if !(window_ms > 0.0) || !window_ms.is_finite() {
        return Err(SignalError::InvalidParameter(format!(
            "window_ms must be positive, got {window_ms}"
        )));
    }
    let window = clip.ms_to_samples(window_ms);
    if window == 0 {
        return Err(SignalError::InvalidParameter(format!(
            "window of {window_ms} ms is shorter than one sample"
        )));
    }
    let x = clip.samples();
    if window > x.len() {
        return Err(SignalError::WindowTooLong {
            window,
            len: x.len(),
        });
    }
    let hop = (window / 2).max(1);
    let sr = clip.sample_rate() as f64;
    let n_out = (x.len() - window) / hop + 1;
    let mut t = Vec::with_capacity(n_out);
    let mut y = Vec::with_capacity(n_out);
    for k in 0..n_out {
        let start = k * hop;
        let energy: f64 = x[start..start + window].iter().map(|s| s * s).sum();
        t.push((start as f64 + (window - 1) as f64 / 2.0) / sr);
        y.push((energy / window as f64).sqrt());
    }
    Ok(TimeSeries { t, y })
}

/// Topographic prominence of the maximum at `peak`: its height above the
/// higher of the two lowest points reachable before meeting strictly
/// higher ground (or the series boundary) on each side.
pub fn prominence(y: &[f64], peak: usize) -> f64 {
    let h = y[peak];
    let mut left_min = h;
    for &v in y[..peak].iter().rev() {
        if v > h {
            break;
        }
        left_min = left_min.min(v);
    }
    let mut right_min = h;
    for &v in &y[peak + 1..] {
        if v > h {
            break;
        }
        right_min = right_min.min(v);
    }
    h - left_min.max(right_min)
}

/// Strict local maxima filtered by minimum spacing and prominence.
///
/// Spacing is resolved greedily from the highest peak down (ties favour the
/// earlier peak); a peak closer than `min_distance_ms` to an already kept
/// peak is discarded. Prominence is then measured against the full series.
pub fn detect_peaks(
    series: &TimeSeries,
    min_distance_ms: f64,
    min_prominence: f64,
) -> Result<PeakSequence, SignalError> {
    if series.len() < 3 {
        return Err(SignalError::TooShort {
            needed: 3,
            got: series.len(),
        });
    }
    if !(min_distance_ms >= 0.0) || !(min_prominence >= 0.0) {
        return Err(SignalError::InvalidParameter(format!(
            "min_distance_ms ({min_distance_ms}) and min_prominence ({min_prominence}) must be non-negative"
        )));
    }
    let y = series.values();
    let t = series.times();
    let maxima: Vec<usize> = (1..y.len() - 1)
        .filter(|&i| y[i] > y[i - 1] && y[i] > y[i + 1])
        .collect();

    let min_gap = min_distance_ms / 1000.0;
    let mut keep = vec![true; maxima.len()];
    if min_gap > 0.0 {
        let mut order: Vec<usize> = (0..maxima.len()).collect();
        // Stable sort: equal heights stay in time order, so the earlier wins.
        order.sort_by(|&a, &b| y[maxima[b]].total_cmp(&y[maxima[a]]));
        for &k in &order {
            if !keep[k] {
                continue;
            }
            let tk = t[maxima[k]];
            for j in (0..k).rev() {
                if tk - t[maxima[j]] >= min_gap {
                    break;
                }
                keep[j] = false;
            }
            for j in k + 1..maxima.len() {
                if t[maxima[j]] - tk >= min_gap {
                    break;
                }
                keep[j] = false;
            }
        }
    }

    let indices: Vec<usize> = maxima
        .iter()
        .zip(&keep)
        .filter(|(_, &k)| k)
        .map(|(&i, _)| i)
        .filter(|&i| prominence(y, i) >= min_prominence)
        .collect();
    Ok(PeakSequence {
        series: series.select(&indices),
        indices,
        min_distance_ms,
        min_prominence,
        window_ms: None,
    })
}

/// Envelope followed by peak detection.
pub fn envelope_peaks(clip: &AudioClip, params: &PeakParams) -> Result<PeakSequence, SignalError> {
    let env = compute_envelope(clip, params.window_ms)?;
    let mut peaks = detect_peaks(&env, params.min_distance_ms, params.min_prominence)?;
    peaks.window_ms = Some(params.window_ms);
    Ok(peaks)
}

/// Cuts `clip` into windowed frames. A trailing partial frame is dropped.
pub fn frame_signal(
    clip: &AudioClip,
    frame_ms: f64,
    hop_ms: f64,
    window_kind: WindowKind,
) -> Result<FrameMatrix, SignalError> {
    if !(hop_ms > 0.0) || !(frame_ms >= hop_ms) {
        return Err(SignalError::InvalidParameter(format!(
            "need frame_ms >= hop_ms > 0, got frame {frame_ms} ms, hop {hop_ms} ms"
        )));
    }
    let frame_len = clip.ms_to_samples(frame_ms);
    let hop_len = clip.ms_to_samples(hop_ms);
    if hop_len == 0 {
        return Err(SignalError::InvalidParameter(format!(
            "hop of {hop_ms} ms is shorter than one sample"
        )));
    }
    frame_samples(clip.samples(), frame_len, hop_len, window_kind).map(|mut m| {
        m.frame_ms = frame_ms;
        m.hop_ms = hop_ms;
        m
    })
}

/// Sample-count variant of [`frame_signal`].
pub fn frame_samples(
    x: &[f64],
    frame_len: usize,
    hop_len: usize,
    window_kind: WindowKind,
) -> Result<FrameMatrix, SignalError> {
    if frame_len == 0 || hop_len == 0 || hop_len > frame_len {
        return Err(SignalError::InvalidParameter(format!(
            "need frame_len >= hop_len > 0, got {frame_len} and {hop_len}"
        )));
    }
    if x.len() < frame_len {
        return Err(SignalError::ClipTooShort {
            len: x.len(),
            frame: frame_len,
        });
    }
    let n_frames = (x.len() - frame_len) / hop_len + 1;
    let window = window_kind.coefficients(frame_len);
    let mut data = Vec::with_capacity(n_frames * frame_len);
    for f in 0..n_frames {
        let start = f * hop_len;
        data.extend(
            x[start..start + frame_len]
                .iter()
                .zip(&window)
                .map(|(s, w)| s * w),
        );
    }
    Ok(FrameMatrix {
        data,
        n_frames,
        frame_len,
        hop_len,
        frame_ms: f64::NAN,
        hop_ms: f64::NAN,
        window_kind,
    })
}
