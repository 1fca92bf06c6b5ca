//! Facial landmark geometry.
//!
//! Works on 68-point 3D landmark sets in the iBUG ordering: jaw 0-16, brows
//! 17-26, nose 27-35, eyes 36-47, outer lips 48-59, inner lips 60-67. The
//! image-plane convention is x right, y down, z toward the camera.
//!
//! The module provides scale normalization by inter-ocular distance, rigid
//! alignment onto a frontal mean face (Kabsch), and flattening into the
//! 204-dimensional per-frame vectors the sequence models consume.

mod meanface;

pub use meanface::{MeanFace, CENTERLINE, SYMMETRY_PAIRS};

use crate::error::{Error, Result};
use nalgebra::{Matrix3, Vector3};
use ndarray::Array2;
use std::path::Path;

/// Number of landmarks per frame.
pub const NUM_LANDMARKS: usize = 68;
/// Flattened per-frame dimension (68 points times 3 coordinates).
pub const FLAT_DIM: usize = NUM_LANDMARKS * 3;
/// Outer corner of the observer-left eye.
pub const OUTER_EYE_LEFT: usize = 36;
/// Outer corner of the observer-right eye.
pub const OUTER_EYE_RIGHT: usize = 45;
/// Top center of the inner lip contour.
pub const INNER_LIP_TOP: usize = 62;
/// Bottom center of the inner lip contour.
pub const INNER_LIP_BOTTOM: usize = 66;

/// Inter-ocular distances below this are treated as degenerate.
const MIN_INTEROCULAR: f64 = 1e-8;

/// One video frame of 68 landmarks.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkFrame {
    pub points: [[f64; 3]; NUM_LANDMARKS],
}

impl LandmarkFrame {
    pub fn new(points: [[f64; 3]; NUM_LANDMARKS]) -> Self {
        Self { points }
    }

    /// Euclidean distance between the outer eye corners.
    pub fn interocular_distance(&self) -> f64 {
        dist(self.points[OUTER_EYE_RIGHT], self.points[OUTER_EYE_LEFT])
    }

    /// Euclidean distance between the inner-lip top and bottom centers.
    pub fn mouth_opening(&self) -> f64 {
        dist(self.points[INNER_LIP_TOP], self.points[INNER_LIP_BOTTOM])
    }

    pub fn centroid(&self) -> [f64; 3] {
        let mut c = [0.0; 3];
        for p in &self.points {
            for k in 0..3 {
                c[k] += p[k];
            }
        }
        c.map(|v| v / NUM_LANDMARKS as f64)
    }

    /// All coordinates finite and the inter-ocular distance usable.
    pub fn validate(&self) -> Result<()> {
        if self.points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::ShapeMismatch("non-finite landmark coordinate".into()));
        }
        if self.interocular_distance() < MIN_INTEROCULAR {
            return Err(Error::DegenerateFace { frame: None });
        }
        Ok(())
    }
}

/// A fixed-rate sequence of landmark frames.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkSequence {
    pub frames: Vec<LandmarkFrame>,
    pub frame_rate: f64,
}

impl LandmarkSequence {
    pub fn new(frames: Vec<LandmarkFrame>, frame_rate: f64) -> Self {
        Self { frames, frame_rate }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Read a sequence from wide-format CSV: header `x0,y0,z0,...,z67`, one
    /// row per frame. The frame rate is not stored in the file and must be
    /// supplied by the caller.
    pub fn read_csv(path: &Path, frame_rate: f64) -> Result<Self> {
        let ctx = |msg: String| Error::Parse { path: path.display().to_string(), msg };
        let mut reader = csv::Reader::from_path(path)
            .map_err(|e| ctx(e.to_string()))?;
        let mut frames = Vec::new();
        for (row, record) in reader.records().enumerate() {
            let record = record.map_err(|e| ctx(e.to_string()))?;
            if record.len() != FLAT_DIM {
                return Err(ctx(format!(
                    "row {} has {} fields, expected {FLAT_DIM}",
                    row + 1,
                    record.len()
                )));
            }
            let mut points = [[0.0; 3]; NUM_LANDMARKS];
            for (i, field) in record.iter().enumerate() {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|e| ctx(format!("row {} field {}: {e}", row + 1, i)))?;
                points[i / 3][i % 3] = v;
            }
            frames.push(LandmarkFrame::new(points));
        }
        Ok(Self::new(frames, frame_rate))
    }

    /// Write the wide-format CSV described in [`LandmarkSequence::read_csv`].
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut writer = csv::Writer::from_path(path).map_err(io_of_csv)?;
        writer.write_record(csv_header()).map_err(io_of_csv)?;
        for frame in &self.frames {
            let row: Vec<String> = frame
                .points
                .iter()
                .flatten()
                .map(|v| format_f64(*v))
                .collect();
            writer.write_record(&row).map_err(io_of_csv)?;
        }
        writer.flush()?;
        Ok(())
    }
}

fn csv_header() -> Vec<String> {
    let mut header = Vec::with_capacity(FLAT_DIM);
    for i in 0..NUM_LANDMARKS {
        header.push(format!("x{i}"));
        header.push(format!("y{i}"));
        header.push(format!("z{i}"));
    }
    header
}

/// Shortest decimal representation that round-trips the exact f64 value.
pub(crate) fn format_f64(v: f64) -> String {
    let mut buf = ryu_format(v);
    if buf.ends_with(".0") {
        buf.truncate(buf.len() - 2);
    }
    buf
}

fn ryu_format(v: f64) -> String {
    // serde_json uses ryu internally; formatting through it keeps CSV and
    // JSON output byte-consistent for the same value.
    serde_json::to_string(&v).expect("finite f64 serializes")
}

fn io_of_csv(e: csv::Error) -> Error {
    Error::Internal(format!("csv write: {e}"))
}

/// Rigid transform `p -> R p + t`.
#[derive(Debug, Clone, PartialEq)]
pub struct RigidTransform {
    /// Row-major proper rotation matrix.
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0; 3],
        }
    }

    pub fn apply_point(&self, p: [f64; 3]) -> [f64; 3] {
        let r = &self.rotation;
        [
            r[0][0] * p[0] + r[0][1] * p[1] + r[0][2] * p[2] + self.translation[0],
            r[1][0] * p[0] + r[1][1] * p[1] + r[1][2] * p[2] + self.translation[1],
            r[2][0] * p[0] + r[2][1] * p[1] + r[2][2] * p[2] + self.translation[2],
        ]
    }

    pub fn apply(&self, frame: &LandmarkFrame) -> LandmarkFrame {
        LandmarkFrame::new(frame.points.map(|p| self.apply_point(p)))
    }

    /// Deviation of the rotation part from a proper rotation: max of
    /// `|R^T R - I|` elementwise and `|det R - 1|`.
    pub fn rotation_defect(&self) -> f64 {
        let r = Matrix3::from_fn(|i, j| self.rotation[i][j]);
        let gram = r.transpose() * r;
        let mut defect: f64 = (r.determinant() - 1.0).abs();
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { 1.0 } else { 0.0 };
                defect = defect.max((gram[(i, j)] - target).abs());
            }
        }
        defect
    }
}

/// Divide every coordinate by the frame's inter-ocular distance.
pub fn scale_normalize(frame: &LandmarkFrame) -> Result<LandmarkFrame> {
    let d = frame.interocular_distance();
    if !d.is_finite() || d < MIN_INTEROCULAR {
        return Err(Error::DegenerateFace { frame: None });
    }
    Ok(LandmarkFrame::new(frame.points.map(|p| p.map(|v| v / d))))
}

/// Least-squares rigid transform taking `source` onto `target` (Kabsch).
///
/// The reflection case is resolved toward a proper rotation, so the result
/// always has determinant +1. Returns `DegenerateConfiguration` when the
/// centered source points are collinear (cross-covariance rank < 2), where
/// the rotation about the point axis is unobservable.
pub fn fit_rigid(source: &LandmarkFrame, target: &LandmarkFrame) -> Result<RigidTransform> {
    let cs = source.centroid();
    let ct = target.centroid();

    let mut h = Matrix3::zeros();
    for (s, t) in source.points.iter().zip(target.points.iter()) {
        for i in 0..3 {
            for j in 0..3 {
                h[(i, j)] += (s[i] - cs[i]) * (t[j] - ct[j]);
            }
        }
    }

    let svd = h.svd(true, true);
    let sv: Vector3<f64> = svd.singular_values;
    if !(sv[0].is_finite() && sv[1] > 1e-9 * sv[0]) {
        return Err(Error::DegenerateConfiguration { frame: None });
    }
    let u = svd.u.ok_or_else(|| Error::Internal("svd did not return u".into()))?;
    let v_t = svd.v_t.ok_or_else(|| Error::Internal("svd did not return v_t".into()))?;

    let mut r: Matrix3<f64> = v_t.transpose() * u.transpose();
    if r.determinant() < 0.0 {
        // Flip the axis of the smallest singular value to stay in SO(3).
        let mut v: Matrix3<f64> = v_t.transpose();
        for i in 0..3 {
            v[(i, 2)] = -v[(i, 2)];
        }
        r = v * u.transpose();
    }

    let t = Vector3::new(ct[0], ct[1], ct[2]) - r * Vector3::new(cs[0], cs[1], cs[2]);
    Ok(RigidTransform {
        rotation: [
            [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
            [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
            [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
        ],
        translation: [t[0], t[1], t[2]],
    })
}

/// Scale-normalize and rigidly align every frame onto the mean face.
///
/// Errors from individual frames come back with the frame index attached.
pub fn frontalize(seq: &LandmarkSequence, template: &MeanFace) -> Result<LandmarkSequence> {
    let target = template.frame();
    let mut frames = Vec::with_capacity(seq.frames.len());
    for (i, frame) in seq.frames.iter().enumerate() {
        let normalized = scale_normalize(frame).map_err(|e| e.at_frame(i))?;
        let transform = fit_rigid(&normalized, target).map_err(|e| e.at_frame(i))?;
        frames.push(transform.apply(&normalized));
    }
    Ok(LandmarkSequence::new(frames, seq.frame_rate))
}

/// Flatten a sequence into a `(frames, 204)` matrix, row-major per point:
/// `x0, y0, z0, x1, ...`.
pub fn flatten(seq: &LandmarkSequence) -> Array2<f64> {
    let mut out = Array2::zeros((seq.frames.len(), FLAT_DIM));
    for (t, frame) in seq.frames.iter().enumerate() {
        for (i, p) in frame.points.iter().enumerate() {
            for k in 0..3 {
                out[(t, 3 * i + k)] = p[k];
            }
        }
    }
    out
}

/// Inverse of [`flatten`]. The matrix must have 204 columns.
pub fn unflatten(data: &Array2<f64>, frame_rate: f64) -> Result<LandmarkSequence> {
    if data.ncols() != FLAT_DIM {
        return Err(Error::ShapeMismatch(format!(
            "expected {FLAT_DIM} columns, got {}",
            data.ncols()
        )));
    }
    let frames = data
        .rows()
        .into_iter()
        .map(|row| {
            let mut points = [[0.0; 3]; NUM_LANDMARKS];
            for i in 0..NUM_LANDMARKS {
                for k in 0..3 {
                    points[i][k] = row[3 * i + k];
                }
            }
            LandmarkFrame::new(points)
        })
        .collect();
    Ok(LandmarkSequence::new(frames, frame_rate))
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_for;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn rotation_zyx(yaw: f64, pitch: f64, roll: f64) -> [[f64; 3]; 3] {
        let (cy, sy) = (yaw.cos(), yaw.sin());
        let (cp, sp) = (pitch.cos(), pitch.sin());
        let (cr, sr) = (roll.cos(), roll.sin());
        let rz = Matrix3::new(cy, -sy, 0.0, sy, cy, 0.0, 0.0, 0.0, 1.0);
        let ry = Matrix3::new(cp, 0.0, sp, 0.0, 1.0, 0.0, -sp, 0.0, cp);
        let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, cr, -sr, 0.0, sr, cr);
        let r = rz * ry * rx;
        [
            [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
            [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
            [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
        ]
    }

    fn max_point_dist(a: &LandmarkFrame, b: &LandmarkFrame) -> f64 {
        a.points
            .iter()
            .zip(b.points.iter())
            .map(|(p, q)| dist(*p, *q))
            .fold(0.0, f64::max)
    }

    #[test]
    fn scale_normalize_gives_unit_interocular() {
        let template = MeanFace::canonical();
        let scaled = LandmarkFrame::new(template.frame().points.map(|p| p.map(|v| v * 3.7)));
        let normalized = scale_normalize(&scaled).unwrap();
        assert!((normalized.interocular_distance() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scale_normalize_rejects_coincident_eye_corners() {
        let template = MeanFace::canonical();
        let mut points = template.frame().points;
        points[OUTER_EYE_RIGHT] = points[OUTER_EYE_LEFT];
        let err = scale_normalize(&LandmarkFrame::new(points)).unwrap_err();
        assert!(matches!(err, Error::DegenerateFace { frame: None }));
    }

    #[test]
    fn fit_rigid_recovers_planted_transform() {
        let template = MeanFace::canonical().frame().clone();
        let mut rng = rng_for(11, "planted", 0);
        for case in 0..20 {
            let planted = RigidTransform {
                rotation: rotation_zyx(
                    rng.random_range(-3.0..3.0),
                    rng.random_range(-1.4..1.4),
                    rng.random_range(-3.0..3.0),
                ),
                translation: [
                    rng.random_range(-2.0..2.0),
                    rng.random_range(-2.0..2.0),
                    rng.random_range(-2.0..2.0),
                ],
            };
            let moved = planted.apply(&template);
            let recovered = fit_rigid(&moved, &template).unwrap();
            assert!(recovered.rotation_defect() < 1e-9, "case {case}");
            let back = recovered.apply(&moved);
            assert!(max_point_dist(&back, &template) < 1e-9, "case {case}");
        }
    }

    #[test]
    fn fit_rigid_never_returns_reflection() {
        // A mirrored target would be best explained by a reflection; the fit
        // must stay in SO(3) regardless.
        let template = MeanFace::canonical().frame().clone();
        let mirrored = LandmarkFrame::new(template.points.map(|p| [-p[0], p[1], p[2]]));
        let t = fit_rigid(&template, &mirrored).unwrap();
        assert!(t.rotation_defect() < 1e-9);
    }

    #[test]
    fn fit_rigid_rejects_collinear_points() {
        let mut points = [[0.0; 3]; NUM_LANDMARKS];
        for (i, p) in points.iter_mut().enumerate() {
            *p = [i as f64, 2.0 * i as f64, -0.5 * i as f64];
        }
        let source = LandmarkFrame::new(points);
        let target = MeanFace::canonical().frame().clone();
        let err = fit_rigid(&source, &target).unwrap_err();
        assert!(matches!(err, Error::DegenerateConfiguration { frame: None }));
    }

    #[test]
    fn frontalize_undoes_pose_scale_and_translation() {
        let template = MeanFace::canonical();
        let mut rng = rng_for(11, "pose", 0);
        let frames: Vec<LandmarkFrame> = (0..16)
            .map(|_| {
                let planted = RigidTransform {
                    rotation: rotation_zyx(
                        rng.random_range(-0.5..0.5),
                        rng.random_range(-0.5..0.5),
                        rng.random_range(-0.5..0.5),
                    ),
                    translation: [
                        rng.random_range(-100.0..100.0),
                        rng.random_range(-100.0..100.0),
                        rng.random_range(-100.0..100.0),
                    ],
                };
                let scale: f64 = rng.random_range(40.0..160.0);
                let posed = planted.apply(template.frame());
                LandmarkFrame::new(posed.points.map(|p| p.map(|v| v * scale)))
            })
            .collect();
        let seq = LandmarkSequence::new(frames, 25.0);
        let out = frontalize(&seq, &template).unwrap();
        assert_eq!(out.frame_rate, 25.0);
        for frame in &out.frames {
            assert!(max_point_dist(frame, template.frame()) < 1e-9);
        }
    }

    #[test]
    fn frontalize_reports_failing_frame_index() {
        let template = MeanFace::canonical();
        let good = template.frame().clone();
        let mut bad_points = good.points;
        bad_points[OUTER_EYE_RIGHT] = bad_points[OUTER_EYE_LEFT];
        let seq = LandmarkSequence::new(
            vec![good.clone(), LandmarkFrame::new(bad_points), good],
            25.0,
        );
        let err = frontalize(&seq, &template).unwrap_err();
        assert!(matches!(err, Error::DegenerateFace { frame: Some(1) }));
    }

    #[test]
    fn frontalize_noise_residual_stays_below_bound() {
        // Monte-Carlo residual check: isotropic sigma=0.01 noise on the
        // template must align back with mean per-point RMS residual <= 0.02.
        let template = MeanFace::canonical();
        let normal = Normal::new(0.0, 0.01).unwrap();
        let mut residuals = Vec::new();
        for seed in 0..100 {
            let mut rng = rng_for(77, "procrustes-noise", seed);
            let noisy = LandmarkFrame::new(
                template
                    .frame()
                    .points
                    .map(|p| p.map(|v| v + normal.sample(&mut rng))),
            );
            let t = fit_rigid(&noisy, template.frame()).unwrap();
            let aligned = t.apply(&noisy);
            let ms: f64 = aligned
                .points
                .iter()
                .zip(template.frame().points.iter())
                .map(|(a, b)| {
                    let d = dist(*a, *b);
                    d * d
                })
                .sum::<f64>()
                / NUM_LANDMARKS as f64;
            residuals.push(ms.sqrt());
        }
        let mean = residuals.iter().sum::<f64>() / residuals.len() as f64;
        assert!(mean <= 0.02, "mean residual {mean}");
        assert!(residuals.iter().all(|r| *r <= 0.025));
    }

    #[test]
    fn flatten_layout_and_roundtrip() {
        let template = MeanFace::canonical();
        let seq = LandmarkSequence::new(vec![template.frame().clone(); 3], 30.0);
        let flat = flatten(&seq);
        assert_eq!(flat.dim(), (3, FLAT_DIM));
        assert_eq!(flat[(0, 0)], template.frame().points[0][0]);
        assert_eq!(flat[(0, 1)], template.frame().points[0][1]);
        assert_eq!(flat[(0, 2)], template.frame().points[0][2]);
        assert_eq!(flat[(0, 3)], template.frame().points[1][0]);
        let back = unflatten(&flat, 30.0).unwrap();
        assert_eq!(back, seq);
    }

    #[test]
    fn unflatten_rejects_wrong_width() {
        let err = unflatten(&Array2::zeros((2, 10)), 25.0).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch(_)));
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let template = MeanFace::canonical();
        let mut rng = rng_for(5, "csv", 0);
        let frames: Vec<LandmarkFrame> = (0..4)
            .map(|_| {
                LandmarkFrame::new(
                    template
                        .frame()
                        .points
                        .map(|p| p.map(|v| v * rng.random_range(0.5..2.0) + rng.random_range(-1.0..1.0))),
                )
            })
            .collect();
        let seq = LandmarkSequence::new(frames, 25.0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("landmarks.csv");
        seq.write_csv(&path).unwrap();
        let back = LandmarkSequence::read_csv(&path, 25.0).unwrap();
        assert_eq!(back, seq);
    }

    proptest! {
        #[test]
        fn prop_fit_rigid_is_always_a_proper_rotation(seed in 0u64..500) {
            let mut rng = rng_for(313, "prop-rigid", seed);
            let template = MeanFace::canonical().frame().clone();
            let normal = Normal::new(0.0, 0.3).unwrap();
            let source = LandmarkFrame::new(
                template.points.map(|p| p.map(|v| v + normal.sample(&mut rng))),
            );
            let target = LandmarkFrame::new(
                template.points.map(|p| p.map(|v| v + normal.sample(&mut rng))),
            );
            let t = fit_rigid(&source, &target).unwrap();
            prop_assert!(t.rotation_defect() < 1e-9);
        }

        #[test]
        fn prop_scale_normalize_is_idempotent(scale in 0.01f64..100.0) {
            let template = MeanFace::canonical();
            let frame = LandmarkFrame::new(template.frame().points.map(|p| p.map(|v| v * scale)));
            let once = scale_normalize(&frame).unwrap();
            let twice = scale_normalize(&once).unwrap();
            prop_assert!(max_point_dist(&once, &twice) < 1e-12);
            prop_assert!((once.interocular_distance() - 1.0).abs() < 1e-12);
        }
    }
}
