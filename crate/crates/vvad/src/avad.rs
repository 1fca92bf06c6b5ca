//! Audio voice activity detection gate.
//!
//! A deliberately simple energy detector: it exists to gate the annotation
//! pipeline, not to compete with real A-VAD systems. Windows are classified
//! against an adaptive baseline, a hangover keeps short pauses inside speech
//! regions, and adjacent windows with equal state merge into segments.
//!
//! Audio ingestion is limited to uncompressed PCM WAV. Segments travel as
//! JSON lines `{"start_s": .., "end_s": .., "speech": ..}`.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

/// One fixed-length analysis window of mono audio.
#[derive(Debug, Clone)]
pub struct AudioWindow {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

/// A maximal run of windows sharing one speech/non-speech state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioVadSegment {
    pub start_s: f64,
    pub end_s: f64,
    pub speech: bool,
}

/// Default decision threshold above the baseline, in dB.
pub const DEFAULT_THRESHOLD_DB: f64 = 12.0;
/// Default number of windows the speech state persists after the last
/// super-threshold window.
pub const DEFAULT_HANGOVER_WINDOWS: usize = 5;
/// Default analysis window length in milliseconds.
pub const DEFAULT_WINDOW_MS: f64 = 30.0;

/// Floor for RMS values so silence has a finite dB level.
const RMS_FLOOR: f64 = 1e-10;
/// The baseline is the 10th-percentile window level, capped at this value so
/// recordings without any quiet stretch still register as speech.
const BASELINE_CAP_DB: f64 = -40.0;

/// Energy-based voice activity detection over uniform windows.
///
/// A window counts as speech when its RMS level in dB exceeds the baseline
/// by `threshold_db`; the baseline is the 10th-percentile window level,
/// capped at -40 dBFS. After the last super-threshold window the speech
/// state persists for `hangover_windows` windows, which merges pauses
/// shorter than the hangover into the surrounding speech.
///
/// The returned segments tile the whole recording, are sorted, and strictly
/// alternate between speech and non-speech.
pub fn energy_vad(
    windows: &[AudioWindow],
    threshold_db: f64,
    hangover_windows: usize,
) -> Result<Vec<AudioVadSegment>> {
    if windows.is_empty() {
        return Err(Error::EmptyAudio);
    }
    let len = windows[0].samples.len();
    let rate = windows[0].sample_rate;
    if len == 0 {
        return Err(Error::EmptyAudio);
    }
    for w in windows {
        if w.samples.len() != len || w.sample_rate != rate {
            return Err(Error::ShapeMismatch(
                "audio windows must share one length and sample rate".into(),
            ));
        }
    }

    let levels: Vec<f64> = windows.iter().map(|w| rms_db(&w.samples)).collect();
    let baseline = percentile_10(&levels).min(BASELINE_CAP_DB);

    let mut speech = vec![false; levels.len()];
    let mut hang = 0usize;
    for (i, level) in levels.iter().enumerate() {
        if *level > baseline + threshold_db {
            speech[i] = true;
            hang = hangover_windows;
        } else if hang > 0 {
            speech[i] = true;
            hang -= 1;
        }
    }

    let window_s = len as f64 / rate as f64;
    let mut segments = Vec::new();
    let mut run_start = 0usize;
    for i in 1..=speech.len() {
        if i == speech.len() || speech[i] != speech[run_start] {
            segments.push(AudioVadSegment {
                start_s: run_start as f64 * window_s,
                end_s: i as f64 * window_s,
                speech: speech[run_start],
            });
            run_start = i;
        }
    }
    Ok(segments)
}

fn rms_db(samples: &[f32]) -> f64 {
    let mean_sq =
        samples.iter().map(|s| *s as f64 * *s as f64).sum::<f64>() / samples.len() as f64;
    20.0 * mean_sq.sqrt().max(RMS_FLOOR).log10()
}

/// Lower nearest-rank 10th percentile.
fn percentile_10(levels: &[f64]) -> f64 {
    let mut sorted = levels.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let idx = (sorted.len() as f64 * 0.10).floor() as usize;
    sorted[idx.min(sorted.len() - 1)]
}

/// Fraction of `[start_s, end_s)` covered by speech segments.
///
/// Segments are clamped to the query interval, so partial overlaps count
/// partially. The result is in `[0, 1]` whenever the segments do not overlap
/// each other.
pub fn coverage(segments: &[AudioVadSegment], start_s: f64, end_s: f64) -> Result<f64> {
    if !(end_s > start_s) {
        return Err(Error::InvalidConfig(format!(
            "coverage interval [{start_s}, {end_s}) is empty or reversed"
        )));
    }
    let mut covered = 0.0;
    for seg in segments.iter().filter(|s| s.speech) {
        covered += (seg.end_s.min(end_s) - seg.start_s.max(start_s)).max(0.0);
    }
    Ok(covered / (end_s - start_s))
}

/// Read a PCM WAV file into fixed-length mono windows.
///
/// Multi-channel input is averaged down to mono; integer formats are scaled
/// to `[-1, 1]`. A trailing partial window is dropped.
pub fn read_wav_windows(path: &Path, window_ms: f64) -> Result<Vec<AudioWindow>> {
    if !(window_ms > 0.0) {
        return Err(Error::InvalidConfig(format!("window_ms {window_ms} must be positive")));
    }
    let ctx = |msg: String| Error::Parse { path: path.display().to_string(), msg };
    let mut reader = hound::WavReader::open(path).map_err(|e| ctx(e.to_string()))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(ctx("zero channels".into()));
    }

    let interleaved: Vec<f32> = match spec.sample_format {
        hound::SampleFormat::Float => reader
            .samples::<f32>()
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| ctx(e.to_string()))?,
        hound::SampleFormat::Int => {
            let scale = 1.0 / (1i64 << (spec.bits_per_sample - 1)) as f32;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f32 * scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| ctx(e.to_string()))?
        }
    };

    let mono: Vec<f32> = interleaved
        .chunks_exact(channels)
        .map(|frame| frame.iter().sum::<f32>() / channels as f32)
        .collect();

    let window_len = ((spec.sample_rate as f64 * window_ms / 1000.0).round() as usize).max(1);
    Ok(mono
        .chunks_exact(window_len)
        .map(|chunk| AudioWindow { samples: chunk.to_vec(), sample_rate: spec.sample_rate })
        .collect())
}

/// Run [`energy_vad`] directly on a WAV file.
pub fn wav_to_segments(
    path: &Path,
    window_ms: f64,
    threshold_db: f64,
    hangover_windows: usize,
) -> Result<Vec<AudioVadSegment>> {
    energy_vad(&read_wav_windows(path, window_ms)?, threshold_db, hangover_windows)
}

/// Write segments as JSON lines.
pub fn write_segments(path: &Path, segments: &[AudioVadSegment]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for seg in segments {
        let line = serde_json::to_string(seg)
            .map_err(|e| Error::Internal(format!("segment serialize: {e}")))?;
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}

/// Read segments from JSON lines, validating order and positive duration.
pub fn read_segments(path: &Path) -> Result<Vec<AudioVadSegment>> {
    let ctx = |msg: String| Error::Parse { path: path.display().to_string(), msg };
    let file = std::fs::File::open(path)?;
    let mut segments: Vec<AudioVadSegment> = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let seg: AudioVadSegment =
            serde_json::from_str(&line).map_err(|e| ctx(format!("line {}: {e}", i + 1)))?;
        if !(seg.end_s > seg.start_s) {
            return Err(ctx(format!("line {}: segment duration must be positive", i + 1)));
        }
        if let Some(prev) = segments.last() {
            if seg.start_s < prev.end_s {
                return Err(ctx(format!("line {}: segments overlap or are unsorted", i + 1)));
            }
        }
        segments.push(seg);
    }
    Ok(segments)
}
