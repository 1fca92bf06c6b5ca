//! Synthetic labeled clips: sinusoidal mouth motion on the mean face,
//! optional rigid head trajectories, landmark jitter, and seeded label
//! noise. The output uses the same manifest and feature formats as the
//! annotation pipeline, so models and evaluation cannot tell the sources
//! apart.

use crate::flow::FlowFrame;
use crate::geometry::{LandmarkFrame, LandmarkSequence, MeanFace, NUM_LANDMARKS};
use crate::manifest::{ClipRecord, Label, Provenance};
use crate::seed::rng_for;
use crate::{Error, Result};
use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use std::path::{Path, PathBuf};

/// Frame rate of generated sequences.
pub const FRAME_RATE: f64 = 25.0;

/// Head rotations are clamped to stay within detector-plausible poses.
const MAX_HEAD_ANGLE: f64 = std::f64::consts::PI / 6.0;
/// Ornstein-Uhlenbeck mean reversion (1/s) and diffusion (rad/sqrt(s)) of
/// the head-angle processes; the stationary spread is about ten degrees.
const OU_KAPPA: f64 = 2.0;
const OU_SIGMA: f64 = 0.35;

/// Inter-ocular size range in pixels and the face-center placement range.
const SCALE_RANGE: std::ops::Range<f64> = 40.0..160.0;
const TRANSLATION_RANGE: std::ops::Range<f64> = 100.0..400.0;

/// Mouth contour points that carry the speech motion, with per-point
/// weights. The inner lip moves at full amplitude, the outer at half.
const INNER_UPPER: [(usize, f64); 3] = [(61, 0.8), (62, 1.0), (63, 0.8)];
const INNER_LOWER: [(usize, f64); 3] = [(65, 0.8), (66, 1.0), (67, 0.8)];
const OUTER_UPPER: [(usize, f64); 5] =
    [(49, 0.5), (50, 0.9), (51, 1.0), (52, 0.9), (53, 0.5)];
const OUTER_LOWER: [(usize, f64); 5] =
    [(55, 0.5), (56, 0.9), (57, 1.0), (58, 0.9), (59, 0.5)];

/// Head motion model for generated clips.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeadMotion {
    None,
    #[default]
    Rigid,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    /// Total clips; classes are exactly balanced, so this must be even.
    pub n_clips: usize,
    /// Frames per clip.
    pub clip_len: usize,
    /// Mouth-opening oscillation amplitude in template units (the template
    /// inter-ocular distance is 1).
    pub speak_amp: f64,
    /// Mouth oscillation frequency in Hz.
    pub speak_freq: f64,
    pub head_motion: HeadMotion,
    /// Per-coordinate Gaussian landmark jitter in template units.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_clips: 200,
            clip_len: 25,
            speak_amp: 0.03,
            speak_freq: 4.0,
            head_motion: HeadMotion::Rigid,
            noise_sigma: 0.005,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_clips == 0 || self.n_clips % 2 != 0 {
            return Err(Error::InvalidConfig(format!(
                "n_clips must be even and positive, got {}",
                self.n_clips
            )));
        }
        if self.clip_len < 2 {
            return Err(Error::InvalidConfig("clip_len must be at least 2".into()));
        }
        if !(self.speak_amp >= 0.0 && self.speak_amp.is_finite()) {
            return Err(Error::InvalidConfig("speak_amp must be non-negative".into()));
        }
        if !(self.speak_freq >= 0.0 && self.speak_freq.is_finite()) {
            return Err(Error::InvalidConfig("speak_freq must be non-negative".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidConfig("noise_sigma must be non-negative".into()));
        }
        Ok(())
    }
}

/// Label-noise rates, one per true class.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    pub flip_speaking: f64,
    pub flip_silent: f64,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec { flip_speaking: 0.12, flip_silent: 0.086, seed: 0 }
    }
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, rate) in [("flip_speaking", self.flip_speaking), ("flip_silent", self.flip_silent)]
        {
            if !(0.0..0.5).contains(&rate) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be in [0, 0.5), got {rate}"
                )));
            }
        }
        Ok(())
    }
}

/// One generated clip: its manifest record plus the landmark track.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthClip {
    pub record: ClipRecord,
    pub landmarks: LandmarkSequence,
}

fn rotation(yaw: f64, pitch: f64, roll: f64) -> [[f64; 3]; 3] {
    let (sy, cy) = yaw.sin_cos();
    let (sp, cp) = pitch.sin_cos();
    let (sr, cr) = roll.sin_cos();
    // R = Rz(roll) * Ry(yaw) * Rx(pitch)
    [
        [cr * cy, cr * sy * sp - sr * cp, cr * sy * cp + sr * sp],
        [sr * cy, sr * sy * sp + cr * cp, sr * sy * cp - cr * sp],
        [-sy, cy * sp, cy * cp],
    ]
}

fn rotate_about(p: [f64; 3], r: &[[f64; 3]; 3], c: [f64; 3]) -> [f64; 3] {
    let d = [p[0] - c[0], p[1] - c[1], p[2] - c[2]];
    [
        r[0][0] * d[0] + r[0][1] * d[1] + r[0][2] * d[2] + c[0],
        r[1][0] * d[0] + r[1][1] * d[1] + r[1][2] * d[2] + c[1],
        r[2][0] * d[0] + r[2][1] * d[1] + r[2][2] * d[2] + c[2],
    ]
}

fn make_clip(cfg: &SynthConfig, template: &LandmarkFrame, index: usize) -> SynthClip {
    let label = if index % 2 == 0 { Label::Speaking } else { Label::Silent };
    // Independent per-clip streams keep the placement, head trajectory and
    // jitter draws identical across configs that differ only in what they
    // consume (e.g. head_motion on/off).
    let mut base_rng = rng_for(cfg.seed, "clip-base", index as u64);
    let mut head_rng = rng_for(cfg.seed, "clip-head", index as u64);
    let mut jitter_rng = rng_for(cfg.seed, "clip-jitter", index as u64);

    let scale = base_rng.random_range(SCALE_RANGE);
    let tx = base_rng.random_range(TRANSLATION_RANGE);
    let ty = base_rng.random_range(TRANSLATION_RANGE);
    let phase = base_rng.random_range(0.0..std::f64::consts::TAU);

    let centroid = template.centroid();
    let dt = 1.0 / FRAME_RATE;
    let mut angles = [0.0f64; 3];
    let mut frames = Vec::with_capacity(cfg.clip_len);
    for t in 0..cfg.clip_len {
        let mut points = template.points;

        if label == Label::Speaking {
            let omega = std::f64::consts::TAU * cfg.speak_freq;
            let delta = cfg.speak_amp * (1.0 - (omega * t as f64 / FRAME_RATE + phase).cos());
            for (idx, w) in INNER_UPPER {
                points[idx][1] -= 0.5 * delta * w;
            }
            for (idx, w) in INNER_LOWER {
                points[idx][1] += 0.5 * delta * w;
            }
            for (idx, w) in OUTER_UPPER {
                points[idx][1] -= 0.25 * delta * w;
            }
            for (idx, w) in OUTER_LOWER {
                points[idx][1] += 0.25 * delta * w;
            }
        }

        if cfg.head_motion == HeadMotion::Rigid {
            let r = rotation(angles[0], angles[1], angles[2]);
            for p in &mut points {
                *p = rotate_about(*p, &r, centroid);
            }
            for a in &mut angles {
                let noise: f64 = head_rng.sample(StandardNormal);
                *a += -OU_KAPPA * *a * dt + OU_SIGMA * dt.sqrt() * noise;
                *a = a.clamp(-MAX_HEAD_ANGLE, MAX_HEAD_ANGLE);
            }
        }

        for p in &mut points {
            for coord in p.iter_mut() {
                let noise: f64 = jitter_rng.sample(StandardNormal);
                *coord += cfg.noise_sigma * noise;
            }
        }

        for p in &mut points {
            p[0] = p[0] * scale + tx;
            p[1] = p[1] * scale + ty;
            p[2] *= scale;
        }
        frames.push(LandmarkFrame::new(points));
    }

    SynthClip {
        record: ClipRecord {
            source_id: "synth".into(),
            track_id: index as u64,
            start: 0,
            end: cfg.clip_len,
            label,
            boxes: vec![],
            provenance: Provenance::Manual,
            landmarks: None,
            flow: None,
        },
        landmarks: LandmarkSequence::new(frames, FRAME_RATE),
    }
}

/// Generate a balanced, deterministic clip set: even indices speak, odd
/// ones stay silent, and every clip derives its randomness from
/// `(seed, clip_index)` streams only.
pub fn generate(cfg: &SynthConfig) -> Result<Vec<SynthClip>> {
    cfg.validate()?;
    let template = MeanFace::canonical().frame();
    Ok((0..cfg.n_clips).map(|i| make_clip(cfg, template, i)).collect())
}

/// Draw the per-clip flip decisions for `inject_label_noise` without
/// touching the clips.
pub fn draw_flip_mask(labels: &[Label], spec: &NoiseSpec) -> Result<Vec<bool>> {
    spec.validate()?;
    Ok(labels
        .iter()
        .enumerate()
        .map(|(i, label)| {
            let rate = match label {
                Label::Speaking => spec.flip_speaking,
                Label::Silent => spec.flip_silent,
            };
            rng_for(spec.seed, "label-flip", i as u64).random::<f64>() < rate
        })
        .collect())
}

/// Flip every clip label the mask marks. Applying the same mask twice is
/// the identity.
pub fn apply_flip_mask(clips: &mut [SynthClip], mask: &[bool]) -> Result<()> {
    if clips.len() != mask.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} clips but {} mask entries",
            clips.len(),
            mask.len()
        )));
    }
    for (clip, &flip) in clips.iter_mut().zip(mask) {
        if flip {
            clip.record.label = clip.record.label.flipped();
        }
    }
    Ok(())
}

/// Flip labels at the class-conditional rates of `spec` and return the
/// audit mask. Clip contents are untouched. Every clip in the set is
/// re-tagged `Provenance::Auto`: after injection the labels simulate an
/// imperfect annotator, so holdout evaluation must refuse them as test
/// data even when a particular label happens to be unflipped.
pub fn inject_label_noise(clips: &mut [SynthClip], spec: &NoiseSpec) -> Result<Vec<bool>> {
    let labels: Vec<Label> = clips.iter().map(|c| c.record.label).collect();
    let mask = draw_flip_mask(&labels, spec)?;
    apply_flip_mask(clips, &mask)?;
    for clip in clips.iter_mut() {
        clip.record.provenance = Provenance::Auto;
    }
    Ok(mask)
}

/// Rasterize a landmark track into dense flow frames: each consecutive
/// frame pair becomes one `side x side` field holding the Gaussian-splatted
/// landmark displacements, in grid pixels per frame. The grid covers the
/// track's square bounding box with a margin.
pub fn rasterize_flow(seq: &LandmarkSequence, side: usize) -> Result<Vec<FlowFrame>> {
    if seq.frames.len() < 2 {
        return Err(Error::EmptyInput("flow needs at least two frames"));
    }
    if side < 8 {
        return Err(Error::InvalidConfig(format!("flow grid side {side} too small")));
    }
    let (mut min_x, mut min_y) = (f64::INFINITY, f64::INFINITY);
    let (mut max_x, mut max_y) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for frame in &seq.frames {
        for p in &frame.points {
            min_x = min_x.min(p[0]);
            max_x = max_x.max(p[0]);
            min_y = min_y.min(p[1]);
            max_y = max_y.max(p[1]);
        }
    }
    let half = 0.575 * (max_x - min_x).max(max_y - min_y).max(1e-9);
    let (cx, cy) = (0.5 * (min_x + max_x), 0.5 * (min_y + max_y));
    let to_grid = |p: &[f64; 3]| {
        (
            (p[0] - cx + half) * side as f64 / (2.0 * half),
            (p[1] - cy + half) * side as f64 / (2.0 * half),
        )
    };

    let sigma = side as f64 / 32.0;
    let radius = (3.0 * sigma).ceil() as i64;
    let mut flows = Vec::with_capacity(seq.frames.len() - 1);
    for pair in seq.frames.windows(2) {
        let mut usum = Array2::<f64>::zeros((side, side));
        let mut vsum = Array2::<f64>::zeros((side, side));
        let mut wsum = Array2::<f64>::zeros((side, side));
        for j in 0..NUM_LANDMARKS {
            let (gx, gy) = to_grid(&pair[0].points[j]);
            let (nx, ny) = to_grid(&pair[1].points[j]);
            let (du, dv) = (nx - gx, ny - gy);
            let (cxi, cyi) = (gx.round() as i64, gy.round() as i64);
            for dy in -radius..=radius {
                let y = cyi + dy;
                if y < 0 || y >= side as i64 {
                    continue;
                }
                for dx in -radius..=radius {
                    let x = cxi + dx;
                    if x < 0 || x >= side as i64 {
                        continue;
                    }
                    let r2 = (x as f64 - gx).powi(2) + (y as f64 - gy).powi(2);
                    let w = (-r2 / (2.0 * sigma * sigma)).exp();
                    usum[(y as usize, x as usize)] += w * du;
                    vsum[(y as usize, x as usize)] += w * dv;
                    wsum[(y as usize, x as usize)] += w;
                }
            }
        }
        let mut u = Array2::<f32>::zeros((side, side));
        let mut v = Array2::<f32>::zeros((side, side));
        for y in 0..side {
            for x in 0..side {
                let w = wsum[(y, x)];
                if w > 1e-9 {
                    u[(y, x)] = (usum[(y, x)] / w) as f32;
                    v[(y, x)] = (vsum[(y, x)] / w) as f32;
                }
            }
        }
        flows.push(FlowFrame { u, v });
    }
    Ok(flows)
}

/// Frontalize and flatten generated clips for the landmark classifier.
pub fn to_landmark_clips(clips: &[SynthClip]) -> Result<Vec<crate::models::LandmarkClip>> {
    let template = MeanFace::canonical();
    clips
        .iter()
        .map(|c| {
            let aligned = crate::geometry::frontalize(&c.landmarks, template)?;
            Ok(crate::models::LandmarkClip {
                id: c.record.clip_id(),
                frames: crate::geometry::flatten(&aligned),
                label: c.record.label,
                provenance: c.record.provenance,
            })
        })
        .collect()
}

/// Rasterize and color-code generated clips for the flow classifier.
pub fn to_flow_clips(
    clips: &[SynthClip],
    side: usize,
    input_size: usize,
) -> Result<Vec<crate::models::FlowClip>> {
    clips
        .iter()
        .map(|c| {
            let images = rasterize_flow(&c.landmarks, side)?
                .iter()
                .map(|f| crate::flow::flow_to_rgb(f, None).resized(input_size))
                .collect();
            Ok(crate::models::FlowClip {
                id: c.record.clip_id(),
                images,
                label: c.record.label,
                provenance: c.record.provenance,
            })
        })
        .collect()
}

/// Write clips as a pipeline-compatible dataset: a JSON-lines manifest,
/// one landmark CSV per clip, and (when `flow_side` is set) one raw flow
/// directory per clip. Returns the manifest path.
pub fn write_dataset(
    dir: &Path,
    clips: &[SynthClip],
    flow_side: Option<usize>,
) -> Result<PathBuf> {
    std::fs::create_dir_all(dir.join("landmarks"))?;
    let mut records = Vec::with_capacity(clips.len());
    for clip in clips {
        let mut record = clip.record.clone();
        let id = record.clip_id();
        let lm_rel = format!("landmarks/{id}.csv");
        clip.landmarks.write_csv(&dir.join(&lm_rel))?;
        record.landmarks = Some(lm_rel);
        if let Some(side) = flow_side {
            let flow_rel = format!("flow/{id}");
            std::fs::create_dir_all(dir.join(&flow_rel))?;
            for (t, frame) in rasterize_flow(&clip.landmarks, side)?.iter().enumerate() {
                crate::flow::write_flow_raw(
                    &dir.join(&flow_rel).join(format!("{t:06}.vfl")),
                    frame,
                )?;
            }
            record.flow = Some(flow_rel);
        }
        records.push(record);
    }
    let manifest = dir.join("manifest.jsonl");
    crate::manifest::write_manifest(&manifest, &records)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{INNER_LIP_BOTTOM, INNER_LIP_TOP};

    fn small_cfg() -> SynthConfig {
        SynthConfig { n_clips: 20, clip_len: 12, ..SynthConfig::default() }
    }

    /// Per-clip variance of the scale-free inner mouth opening (normalized
    /// by the inter-ocular distance, like the models' features) over time.
    fn opening_variance(clip: &SynthClip) -> f64 {
        let openings: Vec<f64> = clip
            .landmarks
            .frames
            .iter()
            .map(|f| f.mouth_opening() / f.interocular_distance())
            .collect();
        let n = openings.len() as f64;
        let mean = openings.iter().sum::<f64>() / n;
        openings.iter().map(|o| (o - mean).powi(2)).sum::<f64>() / (n - 1.0)
    }

    /// Two-sided rank-sum z statistic (normal approximation).
    fn rank_sum_z(a: &[f64], b: &[f64]) -> f64 {
        let mut all: Vec<(f64, usize)> = a
            .iter()
            .map(|&v| (v, 0))
            .chain(b.iter().map(|&v| (v, 1)))
            .collect();
        all.sort_by(|x, y| x.0.total_cmp(&y.0));
        let rank_sum_a: f64 = all
            .iter()
            .enumerate()
            .filter(|(_, (_, g))| *g == 0)
            .map(|(i, _)| (i + 1) as f64)
            .sum();
        let (n1, n2) = (a.len() as f64, b.len() as f64);
        let u = rank_sum_a - n1 * (n1 + 1.0) / 2.0;
        let mean = n1 * n2 / 2.0;
        let sd = (n1 * n2 * (n1 + n2 + 1.0) / 12.0).sqrt();
        (u - mean) / sd
    }

    fn split_by_label(clips: &[SynthClip]) -> (Vec<f64>, Vec<f64>) {
        let mut speaking = Vec::new();
        let mut silent = Vec::new();
        for c in clips {
            let v = opening_variance(c);
            match c.record.label {
                Label::Speaking => speaking.push(v),
                Label::Silent => silent.push(v),
            }
        }
        (speaking, silent)
    }

    #[test]
    fn balanced_deterministic_and_validated() {
        let cfg = small_cfg();
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a, b, "same seed, same bytes");
        let speaking = a.iter().filter(|c| c.record.label == Label::Speaking).count();
        assert_eq!(speaking, cfg.n_clips / 2);
        assert!(a.iter().all(|c| c.landmarks.len() == cfg.clip_len));
        assert!(a.iter().all(|c| c.record.provenance == Provenance::Manual));
        for c in &a {
            for f in &c.landmarks.frames {
                f.validate().unwrap();
            }
        }
        let other = generate(&SynthConfig { seed: 1, ..cfg }).unwrap();
        assert_ne!(a, other, "different seed, different clips");
    }

    #[test]
    fn config_validation() {
        assert!(SynthConfig::default().validate().is_ok());
        assert!(SynthConfig { n_clips: 7, ..SynthConfig::default() }.validate().is_err());
        assert!(SynthConfig { n_clips: 0, ..SynthConfig::default() }.validate().is_err());
        assert!(SynthConfig { clip_len: 1, ..SynthConfig::default() }.validate().is_err());
        assert!(SynthConfig { speak_amp: -0.1, ..SynthConfig::default() }.validate().is_err());
        assert!(SynthConfig { noise_sigma: f64::NAN, ..SynthConfig::default() }
            .validate()
            .is_err());
    }

    #[test]
    fn zero_amplitude_makes_classes_indistinguishable() {
        let cfg = SynthConfig {
            n_clips: 100,
            clip_len: 20,
            speak_amp: 0.0,
            seed: 3,
            ..SynthConfig::default()
        };
        let clips = generate(&cfg).unwrap();
        let (speaking, silent) = split_by_label(&clips);
        let z = rank_sum_z(&speaking, &silent);
        // alpha = 0.01 two-sided.
        assert!(z.abs() < 2.576, "z = {z}");
    }

    #[test]
    fn default_amplitude_separates_every_pair() {
        let cfg = SynthConfig { n_clips: 100, clip_len: 20, seed: 4, ..SynthConfig::default() };
        let clips = generate(&cfg).unwrap();
        let (speaking, silent) = split_by_label(&clips);
        let min_speaking = speaking.iter().cloned().fold(f64::INFINITY, f64::min);
        let max_silent = silent.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(
            min_speaking > max_silent,
            "weakest speaking variance {min_speaking} vs loudest silent {max_silent}"
        );
    }

    #[test]
    fn oscillation_survives_head_motion_and_frontalization() {
        let still_cfg = SynthConfig {
            n_clips: 10,
            clip_len: 25,
            head_motion: HeadMotion::None,
            seed: 5,
            ..SynthConfig::default()
        };
        let moving_cfg = SynthConfig { head_motion: HeadMotion::Rigid, ..still_cfg.clone() };
        let still = generate(&still_cfg).unwrap();
        let moving = generate(&moving_cfg).unwrap();
        let template = MeanFace::canonical();
        for (a, b) in still.iter().zip(&moving) {
            if a.record.label != Label::Speaking {
                continue;
            }
            let signal = |clip: &SynthClip| -> Vec<f64> {
                let aligned = crate::geometry::frontalize(&clip.landmarks, template).unwrap();
                aligned
                    .frames
                    .iter()
                    .map(|f| f.points[INNER_LIP_BOTTOM][1] - f.points[INNER_LIP_TOP][1])
                    .collect()
            };
            let (sa, sb) = (signal(a), signal(b));
            let n = sa.len() as f64;
            let (ma, mb) = (
                sa.iter().sum::<f64>() / n,
                sb.iter().sum::<f64>() / n,
            );
            let cov: f64 =
                sa.iter().zip(&sb).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>();
            let (va, vb) = (
                sa.iter().map(|x| (x - ma).powi(2)).sum::<f64>(),
                sb.iter().map(|y| (y - mb).powi(2)).sum::<f64>(),
            );
            let corr = cov / (va * vb).sqrt();
            assert!(corr >= 0.99, "clip {}: correlation {corr}", a.record.clip_id());
        }
    }

    #[test]
    fn flip_mask_roundtrip_and_rates() {
        let mut clips = generate(&small_cfg()).unwrap();
        let originals: Vec<Label> = clips.iter().map(|c| c.record.label).collect();
        let contents: Vec<LandmarkSequence> =
            clips.iter().map(|c| c.landmarks.clone()).collect();

        let zero = NoiseSpec { flip_speaking: 0.0, flip_silent: 0.0, seed: 9 };
        let mask = inject_label_noise(&mut clips, &zero).unwrap();
        assert!(mask.iter().all(|&m| !m));
        assert_eq!(originals, clips.iter().map(|c| c.record.label).collect::<Vec<_>>());

        let spec = NoiseSpec { flip_speaking: 0.4, flip_silent: 0.3, seed: 9 };
        let mask = inject_label_noise(&mut clips, &spec).unwrap();
        assert!(mask.iter().any(|&m| m), "some labels flip at these rates");
        assert!(clips.iter().all(|c| c.record.provenance == Provenance::Auto));
        for ((clip, &flip), original) in clips.iter().zip(&mask).zip(&originals) {
            let expect = if flip { original.flipped() } else { *original };
            assert_eq!(clip.record.label, expect);
        }
        // Clip contents untouched; double application restores labels.
        for (clip, content) in clips.iter().zip(&contents) {
            assert_eq!(&clip.landmarks, content);
        }
        apply_flip_mask(&mut clips, &mask).unwrap();
        assert_eq!(originals, clips.iter().map(|c| c.record.label).collect::<Vec<_>>());

        assert!(NoiseSpec { flip_speaking: 0.5, ..Default::default() }.validate().is_err());
        assert!(NoiseSpec { flip_silent: -0.1, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn flip_counts_stay_within_binomial_bounds_at_the_study_rates() {
        let cfg = SynthConfig { n_clips: 10_000, clip_len: 2, seed: 6, ..SynthConfig::default() };
        let mut clips = generate(&cfg).unwrap();
        let spec = NoiseSpec { flip_speaking: 0.12, flip_silent: 0.086, seed: 7 };
        let originals: Vec<Label> = clips.iter().map(|c| c.record.label).collect();
        let mask = inject_label_noise(&mut clips, &spec).unwrap();
        let flipped = |want: Label| {
            originals
                .iter()
                .zip(&mask)
                .filter(|(l, &m)| **l == want && m)
                .count() as f64
        };
        // 5000 clips per class.
        let n = 5000.0;
        for (label, rate) in [(Label::Speaking, 0.12f64), (Label::Silent, 0.086)] {
            let got = flipped(label);
            let mean = n * rate;
            let sd = (n * rate * (1.0 - rate)).sqrt();
            assert!(
                (got - mean).abs() <= 3.0 * sd,
                "{label}: {got} flips, expected {mean} +- {:.1}",
                3.0 * sd
            );
        }
    }

    #[test]
    fn rasterized_flow_reflects_mouth_motion() {
        let cfg = SynthConfig {
            n_clips: 2,
            clip_len: 10,
            head_motion: HeadMotion::None,
            noise_sigma: 0.0,
            seed: 8,
            ..SynthConfig::default()
        };
        let clips = generate(&cfg).unwrap();
        let speaking = &clips[0];
        let silent = &clips[1];
        let energy = |clip: &SynthClip| -> f64 {
            rasterize_flow(&clip.landmarks, 32)
                .unwrap()
                .iter()
                .map(|f| {
                    f.u.iter().map(|v| v.abs() as f64).sum::<f64>()
                        + f.v.iter().map(|v| v.abs() as f64).sum::<f64>()
                })
                .sum()
        };
        let speak_energy = energy(speaking);
        let silent_energy = energy(silent);
        assert!(silent_energy < 1e-9, "a still noiseless face has no flow");
        assert!(speak_energy > 1.0, "mouth motion shows up in the flow");
        assert!(matches!(
            rasterize_flow(&LandmarkSequence::new(speaking.landmarks.frames[..1].to_vec(), 25.0), 32),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn dataset_roundtrips_through_the_model_loaders() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SynthConfig { n_clips: 4, clip_len: 6, seed: 10, ..SynthConfig::default() };
        let clips = generate(&cfg).unwrap();
        let manifest = write_dataset(dir.path(), &clips, Some(24)).unwrap();

        let lm = crate::models::load_landmark_clips(&manifest).unwrap();
        assert_eq!(lm.len(), 4);
        for (loaded, clip) in lm.iter().zip(&clips) {
            assert_eq!(loaded.id, clip.record.clip_id());
            assert_eq!(loaded.label, clip.record.label);
            assert_eq!(loaded.frames.nrows(), cfg.clip_len);
        }
        // In-memory conversion agrees with the file roundtrip.
        let direct = to_landmark_clips(&clips).unwrap();
        for (a, b) in lm.iter().zip(&direct) {
            let max_diff = (&a.frames - &b.frames)
                .iter()
                .map(|d| d.abs())
                .fold(0.0, f64::max);
            assert!(max_diff < 1e-9, "file vs direct features differ by {max_diff}");
        }

        let fl = crate::models::load_flow_clips(&manifest, 16).unwrap();
        assert_eq!(fl.len(), 4);
        for (loaded, clip) in fl.iter().zip(&clips) {
            assert_eq!(loaded.id, clip.record.clip_id());
            assert_eq!(loaded.images.len(), cfg.clip_len - 1);
        }
    }
}
