//! Center-distance face tracking.

use super::boxes::BoundingBox;
use super::nms::Detection;
use serde::{Deserialize, Serialize};

/// All detections of one video frame.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionFrame {
    pub frame_idx: usize,
    pub boxes: Vec<Detection>,
}

/// A face track: one box per frame over a contiguous frame range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub track_id: u64,
    /// First frame index of the track.
    pub start: usize,
    /// One box per frame starting at `start`; contiguity is by construction.
    pub boxes: Vec<BoundingBox>,
    /// Same frames after Kalman smoothing, present iff smoothing ran.
    pub smoothed: Option<Vec<BoundingBox>>,
}

impl Track {
    pub fn end(&self) -> usize {
        self.start + self.boxes.len()
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    pub fn alive_at(&self, frame_idx: usize) -> bool {
        frame_idx >= self.start && frame_idx < self.end()
    }

    /// True when the track covers every frame of `[start, end)`.
    pub fn alive_throughout(&self, start: usize, end: usize) -> bool {
        self.start <= start && self.end() >= end
    }

    pub fn last_box(&self) -> &BoundingBox {
        self.boxes.last().expect("tracks are never empty")
    }
}

/// Outcome of matching one frame of detections against live tracks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Association {
    /// `(live track index, detection index)` pairs.
    pub matched: Vec<(usize, usize)>,
    pub unmatched_tracks: Vec<usize>,
    pub unmatched_detections: Vec<usize>,
}

/// Greedy globally-nearest assignment between live tracks and detections.
///
/// All `(track, detection)` center distances are ranked and consumed in
/// ascending order; a pair matches when both sides are still free and the
/// distance is at most `dist_threshold`. Distance ties break by track index
/// then detection index, keeping the result deterministic.
pub fn associate(live: &[Track], frame: &DetectionFrame, dist_threshold: f64) -> Association {
    let mut pairs = Vec::with_capacity(live.len() * frame.boxes.len());
    for (ti, track) in live.iter().enumerate() {
        let (tx, ty) = track.last_box().center();
        for (di, det) in frame.boxes.iter().enumerate() {
            let (dx, dy) = det.bbox().center();
            let dist = ((tx - dx).powi(2) + (ty - dy).powi(2)).sqrt();
            if dist <= dist_threshold {
                pairs.push((dist, ti, di));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut track_taken = vec![false; live.len()];
    let mut det_taken = vec![false; frame.boxes.len()];
    let mut matched = Vec::new();
    for (_, ti, di) in pairs {
        if !track_taken[ti] && !det_taken[di] {
            track_taken[ti] = true;
            det_taken[di] = true;
            matched.push((ti, di));
        }
    }
    Association {
        matched,
        unmatched_tracks: (0..live.len()).filter(|&t| !track_taken[t]).collect(),
        unmatched_detections: (0..frame.boxes.len()).filter(|&d| !det_taken[d]).collect(),
    }
}

/// How the association distance threshold is resolved each frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "value")]
pub enum AssociationThreshold {
    /// Fixed pixel distance.
    Absolute(f64),
    /// Fraction of the mean box side (`max(w, h)`) of the previous frame's
    /// live boxes. Survives resolution changes; the default is 0.5.
    Relative(f64),
}

impl Default for AssociationThreshold {
    fn default() -> Self {
        AssociationThreshold::Relative(0.5)
    }
}

/// Frame-by-frame tracker over the greedy association rule.
///
/// Feed frames in ascending order; a gap in the frame numbering terminates
/// every live track so tracks stay contiguous.
#[derive(Debug)]
pub struct Tracker {
    threshold: AssociationThreshold,
    live: Vec<Track>,
    finished: Vec<Track>,
    next_id: u64,
    last_frame: Option<usize>,
}

impl Tracker {
    pub fn new(threshold: AssociationThreshold) -> Self {
        Self { threshold, live: Vec::new(), finished: Vec::new(), next_id: 0, last_frame: None }
    }

    pub fn step(&mut self, frame: &DetectionFrame) {
        if let Some(last) = self.last_frame {
            assert!(frame.frame_idx > last, "frames must arrive in ascending order");
            if frame.frame_idx != last + 1 {
                self.finished.append(&mut self.live);
            }
        }
        self.last_frame = Some(frame.frame_idx);

        let dist_threshold = match self.threshold {
            AssociationThreshold::Absolute(px) => px,
            AssociationThreshold::Relative(frac) => {
                let sides: Vec<f64> = self.live.iter().map(|t| t.last_box().side()).collect();
                if sides.is_empty() {
                    0.0
                } else {
                    frac * sides.iter().sum::<f64>() / sides.len() as f64
                }
            }
        };

        let assoc = associate(&self.live, frame, dist_threshold);
        for &(ti, di) in &assoc.matched {
            self.live[ti].boxes.push(frame.boxes[di].bbox());
        }
        // Remove unmatched tracks in reverse index order so indices stay valid.
        for &ti in assoc.unmatched_tracks.iter().rev() {
            self.finished.push(self.live.remove(ti));
        }
        for &di in &assoc.unmatched_detections {
            self.live.push(Track {
                track_id: self.next_id,
                start: frame.frame_idx,
                boxes: vec![frame.boxes[di].bbox()],
                smoothed: None,
            });
            self.next_id += 1;
        }
    }

    /// Terminate everything and return all tracks sorted by id.
    pub fn finish(mut self) -> Vec<Track> {
        self.finished.append(&mut self.live);
        self.finished.sort_by_key(|t| t.track_id);
        self.finished
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(x: f64, y: f64, w: f64, h: f64) -> Detection {
        Detection { x, y, w, h, score: 0.9 }
    }

    fn track_at(id: u64, cx: f64, cy: f64) -> Track {
        Track {
            track_id: id,
            start: 0,
            boxes: vec![BoundingBox { x: cx - 10.0, y: cy - 10.0, w: 20.0, h: 20.0 }],
            smoothed: None,
        }
    }

    fn frame(idx: usize, boxes: Vec<Detection>) -> DetectionFrame {
        DetectionFrame { frame_idx: idx, boxes }
    }

    #[test]
    fn nearby_detection_joins_the_track() {
        let live = [track_at(0, 50.0, 50.0)];
        let f = frame(1, vec![det(42.0, 40.0, 20.0, 20.0)]); // center (52, 50)
        let a = associate(&live, &f, 20.0);
        assert_eq!(a.matched, vec![(0, 0)]);
        assert!(a.unmatched_tracks.is_empty());
        assert!(a.unmatched_detections.is_empty());
    }

    #[test]
    fn distant_detection_spawns_a_new_track() {
        let live = [track_at(0, 50.0, 50.0)];
        let f = frame(1, vec![det(140.0, 40.0, 20.0, 20.0)]); // center (150, 50)
        let a = associate(&live, &f, 20.0);
        assert!(a.matched.is_empty());
        assert_eq!(a.unmatched_tracks, vec![0]);
        assert_eq!(a.unmatched_detections, vec![0]);
    }

    #[test]
    fn greedy_minimum_picks_the_diagonal_on_crossing_tracks() {
        // Distance matrix [[5, 9], [9, 5]]: greedy takes both 5s (total 10),
        // not the off-diagonal total of 18.
        // Track centers (0,0) and (14,0); detection centers (5,0) and (9,0).
        let live = [track_at(0, 0.0, 0.0), track_at(1, 14.0, 0.0)];
        let f = frame(1, vec![det(0.0, -10.0, 10.0, 20.0), det(4.0, -10.0, 10.0, 20.0)]);
        let a = associate(&live, &f, 50.0);
        assert_eq!(a.matched, vec![(0, 0), (1, 1)]);
    }

    #[test]
    fn tracker_builds_contiguous_tracks_and_fresh_ids() {
        let mut tracker = Tracker::new(AssociationThreshold::Relative(0.5));
        for i in 0..5 {
            let x = 100.0 + i as f64 * 2.0;
            tracker.step(&frame(i, vec![det(x, 100.0, 50.0, 50.0)]));
        }
        // A far-away detection appears at frame 5: new id.
        tracker.step(&frame(
            5,
            vec![det(110.0, 100.0, 50.0, 50.0), det(400.0, 100.0, 50.0, 50.0)],
        ));
        let tracks = tracker.finish();
        assert_eq!(tracks.len(), 2);
        assert_eq!(tracks[0].track_id, 0);
        assert_eq!(tracks[0].start, 0);
        assert_eq!(tracks[0].len(), 6);
        assert_eq!(tracks[1].track_id, 1);
        assert_eq!(tracks[1].start, 5);
        assert_eq!(tracks[1].len(), 1);
    }

    #[test]
    fn frame_gap_terminates_live_tracks() {
        let mut tracker = Tracker::new(AssociationThreshold::Absolute(30.0));
        tracker.step(&frame(0, vec![det(100.0, 100.0, 50.0, 50.0)]));
        tracker.step(&frame(1, vec![det(102.0, 100.0, 50.0, 50.0)]));
        tracker.step(&frame(4, vec![det(104.0, 100.0, 50.0, 50.0)])); // gap
        let tracks = tracker.finish();
        assert_eq!(tracks.len(), 2);
        assert_eq!(tracks[0].len(), 2);
        assert_eq!(tracks[1].start, 4);
    }

    #[test]
    fn relative_threshold_scales_with_box_size() {
        // Mean side 100 and fraction 0.5 admit jumps up to 50 px.
        let mut tracker = Tracker::new(AssociationThreshold::Relative(0.5));
        tracker.step(&frame(0, vec![det(100.0, 100.0, 100.0, 100.0)]));
        tracker.step(&frame(1, vec![det(140.0, 100.0, 100.0, 100.0)])); // 40 px jump
        tracker.step(&frame(2, vec![det(200.0, 100.0, 100.0, 100.0)])); // 60 px jump
        let tracks = tracker.finish();
        assert_eq!(tracks.len(), 2);
        assert_eq!(tracks[0].len(), 2);
    }

    #[test]
    fn alive_throughout_matches_frame_ranges() {
        let t = Track {
            track_id: 0,
            start: 10,
            boxes: vec![BoundingBox { x: 0.0, y: 0.0, w: 1.0, h: 1.0 }; 20],
            smoothed: None,
        };
        assert!(t.alive_throughout(10, 30));
        assert!(t.alive_throughout(15, 25));
        assert!(!t.alive_throughout(9, 30));
        assert!(!t.alive_throughout(10, 31));
        assert!(t.alive_at(29));
        assert!(!t.alive_at(30));
    }
}
