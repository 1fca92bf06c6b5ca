//! Loading model-ready clips from a manifest and its feature files.

use crate::flow::{flow_to_rgb, read_flow_raw, FlowImage};
use crate::geometry::{flatten, frontalize, LandmarkSequence, MeanFace};
use crate::manifest::{read_manifest, Label, Provenance};
use crate::{Error, Result};
use ndarray::Array2;
use std::path::Path;

/// Frame rate assumed for landmark CSVs; the models are rate-agnostic, the
/// value only travels along in `LandmarkSequence` metadata.
const DEFAULT_FRAME_RATE: f64 = 25.0;

/// A clip ready for the landmark classifier: frontalized, flattened
/// landmark rows of width 204.
#[derive(Debug, Clone)]
pub struct LandmarkClip {
    pub id: String,
    /// `(frames, 204)` feature matrix.
    pub frames: Array2<f64>,
    pub label: Label,
    pub provenance: Provenance,
}

/// A clip ready for the flow classifier: one color-coded flow image per
/// frame pair, already resized to the network input.
#[derive(Debug, Clone)]
pub struct FlowClip {
    pub id: String,
    pub images: Vec<FlowImage>,
    pub label: Label,
    pub provenance: Provenance,
}

fn manifest_dir(manifest: &Path) -> &Path {
    manifest.parent().unwrap_or_else(|| Path::new("."))
}

/// Load every clip of a manifest as landmark features. Each record must
/// carry a `landmarks` CSV; sequences are frontalized against the canonical
/// mean face and flattened.
pub fn load_landmark_clips(manifest: &Path) -> Result<Vec<LandmarkClip>> {
    let records = read_manifest(manifest)?;
    let dir = manifest_dir(manifest);
    let template = MeanFace::canonical();
    let mut clips = Vec::with_capacity(records.len());
    for rec in &records {
        let rel = rec.landmarks.as_ref().ok_or_else(|| {
            Error::Format(format!("clip {} has no landmarks file", rec.clip_id()))
        })?;
        let seq = LandmarkSequence::read_csv(&dir.join(rel), DEFAULT_FRAME_RATE)?;
        if seq.frames.len() != rec.len() {
            return Err(Error::ShapeMismatch(format!(
                "clip {}: {} landmark frames for {} clip frames",
                rec.clip_id(),
                seq.frames.len(),
                rec.len()
            )));
        }
        let aligned = frontalize(&seq, template)?;
        clips.push(LandmarkClip {
            id: rec.clip_id(),
            frames: flatten(&aligned),
            label: rec.label,
            provenance: rec.provenance,
        });
    }
    Ok(clips)
}

/// Load every clip of a manifest as flow images. Each record must carry a
/// `flow` directory of `.vfl` frames; files are taken in name order, color
/// coded with per-frame auto scaling, and resized to `input_size`.
pub fn load_flow_clips(manifest: &Path, input_size: usize) -> Result<Vec<FlowClip>> {
    let records = read_manifest(manifest)?;
    let dir = manifest_dir(manifest);
    let mut clips = Vec::with_capacity(records.len());
    for rec in &records {
        let rel = rec.flow.as_ref().ok_or_else(|| {
            Error::Format(format!("clip {} has no flow directory", rec.clip_id()))
        })?;
        let flow_dir = dir.join(rel);
        let mut paths: Vec<std::path::PathBuf> = std::fs::read_dir(&flow_dir)?
            .collect::<std::io::Result<Vec<_>>>()?
            .into_iter()
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|e| e == "vfl"))
            .collect();
        paths.sort();
        if paths.is_empty() {
            return Err(Error::Format(format!(
                "clip {}: no .vfl files in {}",
                rec.clip_id(),
                flow_dir.display()
            )));
        }
        let mut images = Vec::with_capacity(paths.len());
        for p in &paths {
            let frame = read_flow_raw(p)?;
            images.push(flow_to_rgb(&frame, None).resized(input_size));
        }
        clips.push(FlowClip {
            id: rec.clip_id(),
            images,
            label: rec.label,
            provenance: rec.provenance,
        });
    }
    Ok(clips)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{write_flow_raw, FlowFrame};
    use crate::geometry::{LandmarkFrame, FLAT_DIM};
    use crate::manifest::{write_manifest, ClipRecord};
    use ndarray::Array2 as A2;

    fn record(label: Label) -> ClipRecord {
        ClipRecord {
            source_id: "src".into(),
            track_id: 1,
            start: 0,
            end: 3,
            label,
            boxes: vec![],
            provenance: Provenance::Manual,
            landmarks: None,
            flow: None,
        }
    }

    #[test]
    fn landmark_clips_roundtrip_through_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let template = MeanFace::canonical();
        let frames: Vec<LandmarkFrame> = (0..3)
            .map(|i| {
                let mut pts = template.frame().points;
                pts.iter_mut().for_each(|p| p[0] += i as f64);
                LandmarkFrame { points: pts }
            })
            .collect();
        let seq = LandmarkSequence::new(frames, 25.0);
        seq.write_csv(&dir.path().join("lm.csv")).unwrap();
        let mut rec = record(Label::Speaking);
        rec.landmarks = Some("lm.csv".into());
        write_manifest(&dir.path().join("clips.jsonl"), &[rec]).unwrap();

        let clips = load_landmark_clips(&dir.path().join("clips.jsonl")).unwrap();
        assert_eq!(clips.len(), 1);
        assert_eq!(clips[0].id, "src_001_000000");
        assert_eq!(clips[0].frames.dim(), (3, FLAT_DIM));
        assert_eq!(clips[0].label, Label::Speaking);
    }

    #[test]
    fn landmark_loading_rejects_missing_path_and_frame_count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        write_manifest(&dir.path().join("clips.jsonl"), &[record(Label::Silent)]).unwrap();
        assert!(matches!(
            load_landmark_clips(&dir.path().join("clips.jsonl")),
            Err(Error::Format(_))
        ));

        let seq = LandmarkSequence::new(
            vec![LandmarkFrame { points: MeanFace::canonical().frame().points }; 2],
            25.0,
        );
        seq.write_csv(&dir.path().join("short.csv")).unwrap();
        let mut rec = record(Label::Silent);
        rec.landmarks = Some("short.csv".into());
        write_manifest(&dir.path().join("bad.jsonl"), &[rec]).unwrap();
        assert!(matches!(
            load_landmark_clips(&dir.path().join("bad.jsonl")),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn flow_clips_load_in_frame_order_and_resize() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("flow0")).unwrap();
        for (i, mag) in [(0usize, 0.0f32), (1, 2.0), (2, 4.0)] {
            let frame = FlowFrame {
                u: A2::from_elem((8, 8), mag),
                v: A2::zeros((8, 8)),
            };
            write_flow_raw(&dir.path().join(format!("flow0/{i:06}.vfl")), &frame).unwrap();
        }
        let mut rec = record(Label::Speaking);
        rec.flow = Some("flow0".into());
        write_manifest(&dir.path().join("clips.jsonl"), &[rec]).unwrap();

        let clips = load_flow_clips(&dir.path().join("clips.jsonl"), 16).unwrap();
        assert_eq!(clips.len(), 1);
        assert_eq!(clips[0].images.len(), 3);
        for img in &clips[0].images {
            assert_eq!((img.height(), img.width()), (16, 16));
        }
        // Zero flow renders white, motion does not.
        assert_eq!(clips[0].images[0].rgb[(0, 0, 0)], 255);
        assert_eq!(clips[0].images[0].rgb[(0, 0, 2)], 255);
        assert_ne!(clips[0].images[1].rgb[(8, 8, 0)], 255);
    }

    #[test]
    fn flow_loading_rejects_empty_directories() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("flow0")).unwrap();
        let mut rec = record(Label::Speaking);
        rec.flow = Some("flow0".into());
        write_manifest(&dir.path().join("clips.jsonl"), &[rec]).unwrap();
        assert!(matches!(
            load_flow_clips(&dir.path().join("clips.jsonl"), 16),
            Err(Error::Format(_))
        ));
    }
}
