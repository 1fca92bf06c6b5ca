//! Automatic clip annotation.
//!
//! Turns a face detection stream plus audio voice activity into labeled
//! clips: detections are de-duplicated with NMS, tracked by center distance,
//! smoothed with a Kalman smoother, cut into fixed-length windows that tile
//! each shot, and labeled by the joint audio/face rule. A window becomes a
//! speaking clip when speech covers it and exactly one face is present,
//! silent clips for every face when there is no speech at all, and is
//! discarded otherwise. Labels produced here are `auto` provenance: cheap,
//! plentiful, and knowably imperfect.

mod boxes;
mod kalman;
mod nms;
mod track;

pub use boxes::{iou, pad_boxes, BoundingBox, PaddedBox};
pub use kalman::{
    kalman_smooth, smooth_series, DEFAULT_MEASUREMENT_NOISE, DEFAULT_PROCESS_NOISE,
};
pub use nms::{nms, Detection};
pub use track::{associate, Association, AssociationThreshold, DetectionFrame, Track, Tracker};

use crate::avad::{coverage, AudioVadSegment};
use crate::error::{Error, Result};
use crate::manifest::{ClipRecord, Label, Provenance};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader};
use std::path::Path;

/// First frame of a new shot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShotBoundary {
    pub frame_idx: usize,
}

/// Detect shot boundaries from per-frame difference scores.
///
/// `frame_diffs[i]` is the mean absolute pixel difference between frames
/// `i` and `i + 1`, normalized to `[0, 1]`; a boundary lands at `i + 1`
/// wherever the difference exceeds `threshold`.
pub fn shot_split(frame_diffs: &[f64], threshold: f64) -> Vec<ShotBoundary> {
    frame_diffs
        .iter()
        .enumerate()
        .filter(|(_, d)| **d > threshold)
        .map(|(i, _)| ShotBoundary { frame_idx: i + 1 })
        .collect()
}

/// Pipeline tuning knobs. Defaults follow the crate-wide conventions: 50
/// frame clips, 90% speech coverage, IoU 0.45 NMS, relative association
/// threshold, Kalman q=1 r=9.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// NMS suppression threshold, IoU in (0, 1).
    pub iou_threshold: f64,
    /// Track association distance rule.
    pub association: AssociationThreshold,
    /// Kalman process noise intensity.
    pub process_noise: f64,
    /// Kalman measurement noise variance.
    pub measurement_noise: f64,
    /// Clip window length in frames.
    pub clip_len: usize,
    /// Minimum speech fraction for a speaking window; a window is silent
    /// when coverage is at most `1 - speech_cov`. Must exceed 0.5 so the two
    /// conditions cannot both hold.
    pub speech_cov: f64,
    /// Video frame rate used to align frames with audio time.
    pub fps: f64,
    /// Threshold for [`shot_split`] when boundaries are computed from
    /// frame differences.
    pub shot_threshold: f64,
    /// Require a single face for silent clips too (default: every face in a
    /// no-speech window is labeled silent).
    pub single_face_silent: bool,
    /// Image extent `(width, height)` for padding bookkeeping; `None` when
    /// unknown.
    pub image_size: Option<(u32, u32)>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            iou_threshold: 0.45,
            association: AssociationThreshold::default(),
            process_noise: DEFAULT_PROCESS_NOISE,
            measurement_noise: DEFAULT_MEASUREMENT_NOISE,
            clip_len: 50,
            speech_cov: 0.9,
            fps: 25.0,
            shot_threshold: 0.3,
            single_face_silent: false,
            image_size: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.iou_threshold > 0.0 && self.iou_threshold < 1.0) {
            return bad(format!("iou_threshold {} must be in (0, 1)", self.iou_threshold));
        }
        if !(self.speech_cov > 0.5 && self.speech_cov <= 1.0) {
            return bad(format!("speech_cov {} must be in (0.5, 1]", self.speech_cov));
        }
        if self.clip_len == 0 {
            return bad("clip_len must be at least 1".into());
        }
        if !(self.fps > 0.0) {
            return bad(format!("fps {} must be positive", self.fps));
        }
        if !(self.process_noise > 0.0 && self.measurement_noise > 0.0) {
            return bad("kalman noise parameters must be positive".into());
        }
        match self.association {
            AssociationThreshold::Absolute(v) | AssociationThreshold::Relative(v) => {
                if !(v > 0.0) {
                    return bad(format!("association threshold {v} must be positive"));
                }
            }
        }
        Ok(())
    }
}

/// Shot extents `[start, end)` tiling `[0, n_frames)`.
fn shot_ranges(shots: &[ShotBoundary], n_frames: usize) -> Vec<(usize, usize)> {
    let mut starts: Vec<usize> = shots
        .iter()
        .map(|s| s.frame_idx)
        .filter(|&f| f > 0 && f < n_frames)
        .collect();
    starts.sort_unstable();
    starts.dedup();
    starts.insert(0, 0);
    starts
        .iter()
        .enumerate()
        .map(|(i, &s)| (s, starts.get(i + 1).copied().unwrap_or(n_frames)))
        .collect()
}

/// Apply the audio/face labeling rule to every window.
///
/// Windows of `cfg.clip_len` frames tile each shot without overlap; windows
/// that do not fit entirely inside a shot are dropped, so no clip ever
/// crosses a boundary. For each window the rule sees the speech coverage of
/// the window's time span and the set of tracks alive on every frame:
/// coverage at least `speech_cov` with exactly one track present yields one
/// speaking clip; coverage at most `1 - speech_cov` yields a silent clip per
/// present track; anything else is discarded.
///
/// Tracks must be smoothed; clip boxes come from the square-crop contract.
pub fn label_clips(
    tracks: &[Track],
    vad: &[AudioVadSegment],
    shots: &[ShotBoundary],
    n_frames: usize,
    source_id: &str,
    cfg: &PipelineConfig,
) -> Result<Vec<ClipRecord>> {
    cfg.validate()?;
    let mut padded = Vec::with_capacity(tracks.len());
    for t in tracks {
        let smoothed = t.smoothed.as_ref().ok_or_else(|| {
            Error::ShapeMismatch(format!("track {} is not smoothed", t.track_id))
        })?;
        if smoothed.len() != t.boxes.len() {
            return Err(Error::ShapeMismatch(format!(
                "track {}: {} smoothed boxes for {} frames",
                t.track_id,
                smoothed.len(),
                t.boxes.len()
            )));
        }
        padded.push(pad_boxes(smoothed, cfg.image_size)?);
    }

    let mut clips = Vec::new();
    for (shot_start, shot_end) in shot_ranges(shots, n_frames) {
        let mut w_start = shot_start;
        while w_start + cfg.clip_len <= shot_end {
            let w_end = w_start + cfg.clip_len;
            let alive: Vec<usize> = (0..tracks.len())
                .filter(|&i| tracks[i].alive_throughout(w_start, w_end))
                .collect();
            let cov = coverage(vad, w_start as f64 / cfg.fps, w_end as f64 / cfg.fps)?;

            let label = if cov >= cfg.speech_cov {
                if alive.len() == 1 { Some(Label::Speaking) } else { None }
            } else if cov <= 1.0 - cfg.speech_cov {
                if !cfg.single_face_silent || alive.len() == 1 {
                    Some(Label::Silent)
                } else {
                    None
                }
            } else {
                None
            };

            if let Some(label) = label {
                for &i in &alive {
                    let t = &tracks[i];
                    let offset = w_start - t.start;
                    clips.push(ClipRecord {
                        source_id: source_id.to_string(),
                        track_id: t.track_id,
                        start: w_start,
                        end: w_end,
                        label,
                        boxes: padded[i][offset..offset + cfg.clip_len].to_vec(),
                        provenance: Provenance::Auto,
                        landmarks: None,
                        flow: None,
                    });
                }
            }
            w_start = w_end;
        }
    }
    clips.sort_by(|a, b| a.start.cmp(&b.start).then(a.track_id.cmp(&b.track_id)));
    Ok(clips)
}

/// Run the full pipeline on one video's detection stream.
///
/// Frames must arrive with strictly increasing indices; the video length is
/// taken to be `last frame index + 1`. Tracks shorter than two frames are
/// dropped (they cannot be smoothed and never fill a clip window).
pub fn run_pipeline(
    frames: &[DetectionFrame],
    vad: &[AudioVadSegment],
    shots: &[ShotBoundary],
    source_id: &str,
    cfg: &PipelineConfig,
) -> Result<Vec<ClipRecord>> {
    cfg.validate()?;
    for pair in frames.windows(2) {
        if pair[1].frame_idx <= pair[0].frame_idx {
            return Err(Error::InvalidConfig(format!(
                "detection frames out of order at frame {}",
                pair[1].frame_idx
            )));
        }
    }
    let n_frames = frames.last().map_or(0, |f| f.frame_idx + 1);

    let mut tracker = Tracker::new(cfg.association);
    for frame in frames {
        let kept = nms(&frame.boxes, cfg.iou_threshold);
        tracker.step(&DetectionFrame { frame_idx: frame.frame_idx, boxes: kept });
    }

    let mut tracks = Vec::new();
    for track in tracker.finish() {
        if track.len() < 2 {
            continue;
        }
        tracks.push(kalman_smooth(&track, cfg.process_noise, cfg.measurement_noise)?);
    }

    label_clips(&tracks, vad, shots, n_frames, source_id, cfg)
}

#[derive(Debug, Deserialize)]
struct DetectionLine {
    video_id: String,
    frame_idx: usize,
    boxes: Vec<[f64; 5]>,
}

/// Read a detection manifest: JSON lines
/// `{"video_id", "frame_idx", "boxes": [[x, y, w, h, score], ...]}`.
/// Returns per-video frame streams sorted by video id and frame index.
pub fn read_detections(path: &Path) -> Result<Vec<(String, Vec<DetectionFrame>)>> {
    let ctx = |msg: String| Error::Parse { path: path.display().to_string(), msg };
    let file = std::fs::File::open(path)?;
    let mut videos: std::collections::BTreeMap<String, Vec<DetectionFrame>> = Default::default();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: DetectionLine =
            serde_json::from_str(&line).map_err(|e| ctx(format!("line {}: {e}", i + 1)))?;
        let mut boxes = Vec::with_capacity(parsed.boxes.len());
        for b in &parsed.boxes {
            let [x, y, w, h, score] = *b;
            if !(w > 0.0 && h > 0.0) {
                return Err(ctx(format!("line {}: box with non-positive size", i + 1)));
            }
            if !(0.0..=1.0).contains(&score) {
                return Err(ctx(format!("line {}: score {score} outside [0, 1]", i + 1)));
            }
            boxes.push(Detection { x, y, w, h, score });
        }
        videos
            .entry(parsed.video_id)
            .or_default()
            .push(DetectionFrame { frame_idx: parsed.frame_idx, boxes });
    }
    let mut out = Vec::with_capacity(videos.len());
    for (video_id, mut frames) in videos {
        frames.sort_by_key(|f| f.frame_idx);
        for pair in frames.windows(2) {
            if pair[0].frame_idx == pair[1].frame_idx {
                return Err(ctx(format!(
                    "duplicate frame {} in video {video_id}",
                    pair[0].frame_idx
                )));
            }
        }
        out.push((video_id, frames));
    }
    Ok(out)
}

/// Read shot boundaries: JSON lines `{"frame_idx": n}`, strictly increasing.
pub fn read_shots(path: &Path) -> Result<Vec<ShotBoundary>> {
    let ctx = |msg: String| Error::Parse { path: path.display().to_string(), msg };
    let file = std::fs::File::open(path)?;
    let mut shots: Vec<ShotBoundary> = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let shot: ShotBoundary =
            serde_json::from_str(&line).map_err(|e| ctx(format!("line {}: {e}", i + 1)))?;
        if let Some(prev) = shots.last() {
            if shot.frame_idx <= prev.frame_idx {
                return Err(ctx(format!("line {}: boundaries must be strictly increasing", i + 1)));
            }
        }
        shots.push(shot);
    }
    Ok(shots)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_for;
    use rand::Rng;

    #[test]
    fn shot_split_examples() {
        assert!(shot_split(&[0.0; 30], 0.3).is_empty());

        let mut diffs = vec![0.01; 30];
        diffs[10] = 0.9;
        assert_eq!(shot_split(&diffs, 0.3), vec![ShotBoundary { frame_idx: 11 }]);

        let mut diffs = vec![0.0; 60];
        diffs[20] = 0.8;
        diffs[23] = 0.8;
        let shots = shot_split(&diffs, 0.3);
        assert_eq!(
            shots,
            vec![ShotBoundary { frame_idx: 21 }, ShotBoundary { frame_idx: 24 }]
        );
        // The 3-frame shot between the boundaries fits no 25-frame window.
        let ranges = shot_ranges(&shots, 60);
        assert_eq!(ranges, vec![(0, 21), (21, 24), (24, 60)]);
    }

    fn constant_track(id: u64, start: usize, len: usize, cx: f64) -> Track {
        let b = BoundingBox { x: cx - 50.0, y: 50.0, w: 100.0, h: 100.0 };
        Track { track_id: id, start, boxes: vec![b; len], smoothed: Some(vec![b; len]) }
    }

    fn speech(ranges: &[(f64, f64)]) -> Vec<AudioVadSegment> {
        ranges
            .iter()
            .map(|&(start_s, end_s)| AudioVadSegment { start_s, end_s, speech: true })
            .collect()
    }

    fn cfg() -> PipelineConfig {
        PipelineConfig { clip_len: 50, speech_cov: 0.9, fps: 25.0, ..Default::default() }
    }

    #[test]
    fn single_track_full_speech_window_is_speaking() {
        let tracks = [constant_track(0, 0, 50, 100.0)];
        let clips =
            label_clips(&tracks, &speech(&[(0.0, 2.0)]), &[], 50, "vid", &cfg()).unwrap();
        assert_eq!(clips.len(), 1);
        assert_eq!(clips[0].label, Label::Speaking);
        assert_eq!(clips[0].track_id, 0);
        assert_eq!((clips[0].start, clips[0].end), (0, 50));
        assert_eq!(clips[0].provenance, Provenance::Auto);
        assert_eq!(clips[0].boxes.len(), 50);
    }

    #[test]
    fn three_tracks_no_speech_yields_three_silent_clips() {
        let tracks = [
            constant_track(0, 0, 50, 100.0),
            constant_track(1, 0, 50, 300.0),
            constant_track(2, 0, 50, 500.0),
        ];
        let clips = label_clips(&tracks, &[], &[], 50, "vid", &cfg()).unwrap();
        assert_eq!(clips.len(), 3);
        assert!(clips.iter().all(|c| c.label == Label::Silent));
        assert_eq!(clips.iter().map(|c| c.track_id).collect::<Vec<_>>(), vec![0, 1, 2]);
    }

    #[test]
    fn two_tracks_with_speech_is_discarded() {
        let tracks = [constant_track(0, 0, 50, 100.0), constant_track(1, 0, 50, 300.0)];
        let clips =
            label_clips(&tracks, &speech(&[(0.0, 2.0)]), &[], 50, "vid", &cfg()).unwrap();
        assert!(clips.is_empty());
    }

    #[test]
    fn mixed_audio_state_is_discarded() {
        let tracks = [constant_track(0, 0, 50, 100.0)];
        // Half the window is speech: neither condition holds.
        let clips =
            label_clips(&tracks, &speech(&[(0.0, 1.0)]), &[], 50, "vid", &cfg()).unwrap();
        assert!(clips.is_empty());
    }

    #[test]
    fn single_face_silent_flag_drops_multi_face_silent_windows() {
        let tracks = [constant_track(0, 0, 50, 100.0), constant_track(1, 0, 50, 300.0)];
        let mut c = cfg();
        assert_eq!(label_clips(&tracks, &[], &[], 50, "vid", &c).unwrap().len(), 2);
        c.single_face_silent = true;
        assert!(label_clips(&tracks, &[], &[], 50, "vid", &c).unwrap().is_empty());
    }

    #[test]
    fn windows_tile_shots_and_respect_boundaries() {
        let tracks = [constant_track(0, 0, 300, 100.0)];
        let shots = [ShotBoundary { frame_idx: 130 }];
        let clips = label_clips(&tracks, &[], &shots, 300, "vid", &cfg()).unwrap();
        // Shot [0,130): windows at 0, 50; shot [130,300): windows at 130, 180, 230.
        let ranges: Vec<(usize, usize)> = clips.iter().map(|c| (c.start, c.end)).collect();
        assert_eq!(ranges, vec![(0, 50), (50, 100), (130, 180), (180, 230), (230, 280)]);
    }

    #[test]
    fn partial_track_does_not_count_as_present() {
        // Track 1 overlaps only part of the window, so the speaking rule
        // sees exactly one fully-present track.
        let tracks = [constant_track(0, 0, 50, 100.0), constant_track(1, 30, 20, 300.0)];
        let clips =
            label_clips(&tracks, &speech(&[(0.0, 2.0)]), &[], 50, "vid", &cfg()).unwrap();
        assert_eq!(clips.len(), 1);
        assert_eq!(clips[0].track_id, 0);
        assert_eq!(clips[0].label, Label::Speaking);
    }

    #[test]
    fn unsmoothed_tracks_are_rejected() {
        let mut t = constant_track(0, 0, 50, 100.0);
        t.smoothed = None;
        let err = label_clips(&[t], &[], &[], 50, "vid", &cfg()).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch(_)));
    }

    #[test]
    fn config_validation_catches_bad_values() {
        for f in [
            |c: &mut PipelineConfig| c.iou_threshold = 1.0,
            |c: &mut PipelineConfig| c.speech_cov = 0.5,
            |c: &mut PipelineConfig| c.clip_len = 0,
            |c: &mut PipelineConfig| c.fps = 0.0,
            |c: &mut PipelineConfig| c.measurement_noise = 0.0,
            |c: &mut PipelineConfig| c.association = AssociationThreshold::Relative(0.0),
        ] {
            let mut c = cfg();
            f(&mut c);
            assert!(matches!(c.validate(), Err(Error::InvalidConfig(_))));
        }
    }

    /// Brute-force reference: enumerate every window of every shot, check
    /// aliveness frame by frame, and apply the audio/face truth table
    /// directly.
    fn label_clips_oracle(
        tracks: &[Track],
        vad: &[AudioVadSegment],
        shots: &[ShotBoundary],
        n_frames: usize,
        cfg: &PipelineConfig,
    ) -> Vec<(usize, usize, u64, Label)> {
        let mut bounds: Vec<usize> = shots
            .iter()
            .map(|s| s.frame_idx)
            .filter(|&f| f > 0 && f < n_frames)
            .collect();
        bounds.sort_unstable();
        bounds.dedup();
        bounds.insert(0, 0);
        bounds.push(n_frames);

        let mut out = Vec::new();
        for shot in bounds.windows(2) {
            let (s0, s1) = (shot[0], shot[1]);
            let n_windows = (s1 - s0) / cfg.clip_len;
            for w in 0..n_windows {
                let ws = s0 + w * cfg.clip_len;
                let we = ws + cfg.clip_len;
                let alive: Vec<&Track> = tracks
                    .iter()
                    .filter(|t| (ws..we).all(|f| t.alive_at(f)))
                    .collect();
                let speech_time: f64 = vad
                    .iter()
                    .filter(|s| s.speech)
                    .map(|s| {
                        (s.end_s.min(we as f64 / cfg.fps) - s.start_s.max(ws as f64 / cfg.fps))
                            .max(0.0)
                    })
                    .sum();
                let cov = speech_time / (cfg.clip_len as f64 / cfg.fps);
                let has_speech = cov >= cfg.speech_cov;
                let no_speech = cov <= 1.0 - cfg.speech_cov;
                if has_speech && alive.len() == 1 {
                    out.push((ws, we, alive[0].track_id, Label::Speaking));
                } else if no_speech && (!cfg.single_face_silent || alive.len() == 1) {
                    for t in &alive {
                        out.push((ws, we, t.track_id, Label::Silent));
                    }
                }
            }
        }
        out.sort_by(|a, b| a.0.cmp(&b.0).then(a.2.cmp(&b.2)));
        out
    }

    #[test]
    fn randomized_scenarios_match_the_oracle() {
        for seed in 0..10 {
            let mut rng = rng_for(47, "pipeline-oracle", seed);
            let n_frames = rng.random_range(60..=300);
            let n_tracks = rng.random_range(1..=5);
            let tracks: Vec<Track> = (0..n_tracks)
                .map(|id| {
                    let start = rng.random_range(0..n_frames - 10);
                    let len = rng.random_range(10..=n_frames - start);
                    constant_track(id as u64, start, len, 100.0 * id as f64)
                })
                .collect();
            let mut vad = Vec::new();
            let mut t = 0.0;
            while t < n_frames as f64 / 25.0 {
                let d = rng.random_range(0.2..3.0);
                vad.push(AudioVadSegment {
                    start_s: t,
                    end_s: t + d,
                    speech: rng.random_bool(0.5),
                });
                t += d;
            }
            let mut shot_frames: Vec<usize> =
                (0..rng.random_range(0..4)).map(|_| rng.random_range(1..n_frames)).collect();
            shot_frames.sort_unstable();
            shot_frames.dedup();
            let shots: Vec<ShotBoundary> =
                shot_frames.iter().map(|&f| ShotBoundary { frame_idx: f }).collect();
            let mut cfg = cfg();
            cfg.clip_len = rng.random_range(10..=60);
            cfg.single_face_silent = rng.random_bool(0.3);

            let got: Vec<(usize, usize, u64, Label)> =
                label_clips(&tracks, &vad, &shots, n_frames, "vid", &cfg)
                    .unwrap()
                    .iter()
                    .map(|c| (c.start, c.end, c.track_id, c.label))
                    .collect();
            let want = label_clips_oracle(&tracks, &vad, &shots, n_frames, &cfg);
            assert_eq!(got, want, "seed {seed}");
        }
    }

    #[test]
    fn run_pipeline_end_to_end_is_deterministic() {
        let mut rng = rng_for(48, "pipeline-e2e", 0);
        let frames: Vec<DetectionFrame> = (0..120)
            .map(|i| {
                let mut boxes = vec![Detection {
                    x: 100.0 + i as f64 + rng.random_range(-2.0..2.0),
                    y: 100.0 + rng.random_range(-2.0..2.0),
                    w: 80.0,
                    h: 80.0,
                    score: 0.95,
                }];
                // Duplicate detection to exercise NMS.
                boxes.push(Detection { score: 0.5, ..boxes[0] });
                if i >= 60 {
                    boxes.push(Detection {
                        x: 400.0,
                        y: 100.0 + rng.random_range(-2.0..2.0),
                        w: 80.0,
                        h: 80.0,
                        score: 0.9,
                    });
                }
                DetectionFrame { frame_idx: i, boxes }
            })
            .collect();
        let vad = speech(&[(0.0, 2.1)]);
        let cfg = PipelineConfig { image_size: Some((640, 480)), ..cfg() };

        let a = run_pipeline(&frames, &vad, &[], "vid", &cfg).unwrap();
        let b = run_pipeline(&frames, &vad, &[], "vid", &cfg).unwrap();
        assert_eq!(a, b);
        // Window [0,50) is all speech with one face: speaking. Window
        // [50,100) has almost no speech, and only the first track spans the
        // whole window (the second face appears at frame 60), so it yields
        // one silent clip.
        assert_eq!(a.len(), 2);
        assert_eq!(a[0].label, Label::Speaking);
        assert_eq!((a[0].start, a[0].end), (0, 50));
        assert_eq!(a[1].label, Label::Silent);
        assert_eq!(a[1].track_id, 0);
        assert_eq!((a[1].start, a[1].end), (50, 100));
        // Clip boxes are equal-sized squares.
        for c in &a {
            let side = c.boxes[0].side;
            assert!(c.boxes.iter().all(|b| b.side == side));
        }
    }

    #[test]
    fn detection_and_shot_files_parse_and_validate() {
        let dir = tempfile::tempdir().unwrap();
        let det_path = dir.path().join("det.jsonl");
        std::fs::write(
            &det_path,
            concat!(
                "{\"video_id\":\"b\",\"frame_idx\":1,\"boxes\":[]}\n",
                "{\"video_id\":\"a\",\"frame_idx\":0,\"boxes\":[[10,20,30,40,0.9]]}\n",
                "{\"video_id\":\"b\",\"frame_idx\":0,\"boxes\":[[1,2,3,4,0.5]]}\n",
            ),
        )
        .unwrap();
        let videos = read_detections(&det_path).unwrap();
        assert_eq!(videos.len(), 2);
        assert_eq!(videos[0].0, "a");
        assert_eq!(videos[1].1[0].frame_idx, 0);
        assert_eq!(videos[1].1[1].frame_idx, 1);

        std::fs::write(&det_path, "{\"video_id\":\"a\",\"frame_idx\":0,\"boxes\":[[1,2,0,4,0.5]]}\n")
            .unwrap();
        assert!(matches!(read_detections(&det_path), Err(Error::Parse { .. })));

        let shots_path = dir.path().join("shots.jsonl");
        std::fs::write(&shots_path, "{\"frame_idx\":10}\n{\"frame_idx\":40}\n").unwrap();
        assert_eq!(
            read_shots(&shots_path).unwrap(),
            vec![ShotBoundary { frame_idx: 10 }, ShotBoundary { frame_idx: 40 }]
        );
        std::fs::write(&shots_path, "{\"frame_idx\":40}\n{\"frame_idx\":10}\n").unwrap();
        assert!(matches!(read_shots(&shots_path), Err(Error::Parse { .. })));
    }
}
