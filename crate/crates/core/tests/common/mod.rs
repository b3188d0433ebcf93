#![allow(dead_code)]

use std::path::Path;

use voicegraph::pipeline::{cmd_synth, SynthConfig};
use voicegraph::signal::write_wav;

pub const SR: u32 = 16_000;

/// Flat bursts of 320 samples (one default envelope window), aligned to the
/// envelope hop and 100 ms apart, so the envelope peaks equal `amps`.
pub fn burst_clip(amps: &[f64]) -> Vec<f64> {
    let mut x = vec![0.0; 800 + amps.len() * 1600];
    for (k, &a) in amps.iter().enumerate() {
        let start = 800 + k * 1600;
        x[start..start + 320].iter_mut().for_each(|v| *v = a);
    }
    x
}

pub fn sine(freq: f64, amp: f64, seconds: f64) -> Vec<f64> {
    let n = (seconds * SR as f64) as usize;
    (0..n)
        .map(|i| amp * (std::f64::consts::TAU * freq * i as f64 / SR as f64).sin())
        .collect()
}

pub fn write(path: &Path, x: &[f64]) {
    write_wav(path, x, SR).unwrap();
}

/// The default synthetic corpus (60 subjects per class, 40/10/10).
pub fn default_corpus(dir: &Path) -> std::path::PathBuf {
    cmd_synth(&SynthConfig::default(), dir).unwrap()
}

/// A 220 Hz tone under a 4 Hz amplitude modulation.
pub fn am_tone(seconds: f64) -> Vec<f64> {
    let n = (seconds * SR as f64) as usize;
    (0..n)
        .map(|i| {
            let t = i as f64 / SR as f64;
            let env = 0.5 + 0.4 * (std::f64::consts::TAU * 4.0 * t).sin();
            0.9 * env * (std::f64::consts::TAU * 220.0 * t).sin()
        })
        .collect()
}
