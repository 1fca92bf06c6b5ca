//! Clip manifests: the JSON-lines contract between the annotation pipeline,
//! the synthetic generator, the models, and evaluation.
//!
//! One line per clip:
//! `{"source_id", "track_id", "start", "end", "label", "boxes", "provenance", ...}`.
//! Optional `landmarks` and `flow` fields point at feature files relative to
//! the manifest location. Field order is fixed by the struct, so equal
//! records serialize to identical bytes.

use crate::error::{Error, Result};
use crate::pipeline::PaddedBox;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

/// Clip label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Speaking,
    Silent,
}

impl Label {
    pub fn flipped(self) -> Label {
        match self {
            Label::Speaking => Label::Silent,
            Label::Silent => Label::Speaking,
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Label::Speaking => "speaking",
            Label::Silent => "silent",
        })
    }
}

/// Where a clip's label came from: `Auto` for pipeline or noise-injected
/// labels, `Manual` for human-verified ones. Holdout evaluation refuses
/// auto-labeled test clips.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Auto,
    Manual,
}

/// One labeled clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipRecord {
    /// Video (or synthetic source) the clip came from.
    pub source_id: String,
    pub track_id: u64,
    /// Frame range `[start, end)` within the source.
    pub start: usize,
    pub end: usize,
    pub label: Label,
    /// Per-frame square crop boxes; empty when the source has no image
    /// stream (synthetic landmark clips).
    pub boxes: Vec<PaddedBox>,
    pub provenance: Provenance,
    /// Landmark CSV path relative to the manifest, when available.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub landmarks: Option<String>,
    /// Flow frame directory relative to the manifest, when available.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flow: Option<String>,
}

impl ClipRecord {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    /// Stable identifier for predictions and reports.
    pub fn clip_id(&self) -> String {
        format!("{}_{:03}_{:06}", self.source_id, self.track_id, self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }

    fn validate(&self, path: &Path, line: usize) -> Result<()> {
        if self.end <= self.start {
            return Err(Error::Parse {
                path: path.display().to_string(),
                msg: format!("line {line}: clip frame range [{}, {}) is empty", self.start, self.end),
            });
        }
        if !self.boxes.is_empty() && self.boxes.len() != self.len() {
            return Err(Error::Parse {
                path: path.display().to_string(),
                msg: format!(
                    "line {line}: {} boxes for {} frames",
                    self.boxes.len(),
                    self.len()
                ),
            });
        }
        Ok(())
    }
}

/// Write a manifest as JSON lines.
pub fn write_manifest(path: &Path, clips: &[ClipRecord]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for clip in clips {
        let line = serde_json::to_string(clip)
            .map_err(|e| Error::Internal(format!("manifest serialize: {e}")))?;
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}

/// Read a manifest, validating each record.
pub fn read_manifest(path: &Path) -> Result<Vec<ClipRecord>> {
    let file = std::fs::File::open(path)?;
    let mut clips = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let clip: ClipRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            msg: format!("line {}: {e}", i + 1),
        })?;
        clip.validate(path, i + 1)?;
        clips.push(clip);
    }
    Ok(clips)
}
