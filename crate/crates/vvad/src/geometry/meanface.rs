//! Canonical frontal mean face.
//!
//! The template is a synthetic neutral 68-point face in iBUG ordering with
//! exact bilateral symmetry about the x = 0 plane, unit inter-ocular
//! distance, and its centroid at the origin. It is the alignment target for
//! frontalization and the base shape for synthetic clip generation.

use super::{LandmarkFrame, LandmarkSequence, NUM_LANDMARKS, OUTER_EYE_LEFT, OUTER_EYE_RIGHT};
use crate::error::{Error, Result};
use std::f64::consts::PI;
use std::path::Path;
use std::sync::OnceLock;

/// Left/right landmark index pairs that mirror onto each other.
pub const SYMMETRY_PAIRS: [(usize, usize); 29] = [
    (0, 16),
    (1, 15),
    (2, 14),
    (3, 13),
    (4, 12),
    (5, 11),
    (6, 10),
    (7, 9),
    (17, 26),
    (18, 25),
    (19, 24),
    (20, 23),
    (21, 22),
    (31, 35),
    (32, 34),
    (36, 45),
    (37, 44),
    (38, 43),
    (39, 42),
    (40, 47),
    (41, 46),
    (48, 54),
    (49, 53),
    (50, 52),
    (55, 59),
    (56, 58),
    (60, 64),
    (61, 63),
    (65, 67),
];

/// Landmarks that lie on the facial midline.
pub const CENTERLINE: [usize; 10] = [8, 27, 28, 29, 30, 33, 51, 57, 62, 66];

/// Frontal mean-face template.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanFace {
    frame: LandmarkFrame,
}

impl MeanFace {
    /// The built-in canonical template.
    pub fn canonical() -> &'static MeanFace {
        static TEMPLATE: OnceLock<MeanFace> = OnceLock::new();
        TEMPLATE.get_or_init(|| {
            let face = MeanFace { frame: LandmarkFrame::new(construct()) };
            face.validate().expect("canonical template satisfies its invariants");
            face
        })
    }

    /// Build a template from explicit points, checking the invariants.
    pub fn from_points(points: [[f64; 3]; NUM_LANDMARKS]) -> Result<Self> {
        let face = MeanFace { frame: LandmarkFrame::new(points) };
        face.validate()?;
        Ok(face)
    }

    pub fn frame(&self) -> &LandmarkFrame {
        &self.frame
    }

    /// Unit inter-ocular distance, centroid at the origin, exact bilateral
    /// symmetry, all coordinates finite.
    pub fn validate(&self) -> Result<()> {
        self.frame.validate()?;
        let invalid = |msg: String| Error::InvalidConfig(format!("mean face: {msg}"));
        let iod = self.frame.interocular_distance();
        if (iod - 1.0).abs() > 1e-12 {
            return Err(invalid(format!("inter-ocular distance {iod}, expected 1")));
        }
        let c = self.frame.centroid();
        if c.iter().any(|v| v.abs() > 1e-9) {
            return Err(invalid(format!("centroid {c:?}, expected origin")));
        }
        let p = &self.frame.points;
        for &(l, r) in &SYMMETRY_PAIRS {
            let err = (p[l][0] + p[r][0])
                .abs()
                .max((p[l][1] - p[r][1]).abs())
                .max((p[l][2] - p[r][2]).abs());
            if err > 1e-9 {
                return Err(invalid(format!("pair ({l},{r}) breaks mirror symmetry by {err}")));
            }
        }
        for &i in &CENTERLINE {
            if p[i][0].abs() > 1e-9 {
                return Err(invalid(format!("centerline landmark {i} off the midline")));
            }
        }
        Ok(())
    }

    /// Read a template from a one-row landmark CSV file.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let seq = LandmarkSequence::read_csv(path, 1.0)?;
        if seq.frames.len() != 1 {
            return Err(Error::Parse {
                path: path.display().to_string(),
                msg: format!("template file must hold exactly 1 frame, found {}", seq.frames.len()),
            });
        }
        Self::from_points(seq.frames[0].points)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        LandmarkSequence::new(vec![self.frame.clone()], 1.0).write_csv(path)
    }
}

/// Build the canonical template point set.
fn construct() -> [[f64; 3]; NUM_LANDMARKS] {
    let mut p = [[0.0f64; 3]; NUM_LANDMARKS];

    // Jaw 0..=16: arc from observer-left ear over the chin. The y range runs
    // from just above the eye line down to the chin, z puts the ears back.
    for i in 0..17 {
        let t = i as f64 / 16.0;
        let ang = PI * (1.0 - t);
        let s = ang.sin();
        p[i] = [
            0.78 * ang.cos(),
            -0.05 + 1.30 * s.powf(1.5),
            -0.35 + 0.42 * s * s,
        ];
    }

    // Eyebrows 17..=21 (left) and 22..=26 (right), arched above the eyes.
    for i in 0..5 {
        let t = i as f64 / 4.0;
        let x = -0.62 + 0.44 * t;
        let y = -0.28 - 0.10 * (PI * t).sin();
        let z = 0.08 + 0.05 * (PI * t).sin();
        p[17 + i] = [x, y, z];
        p[26 - i] = [-x, y, z];
    }

    // Nose bridge 27..=30, leaning toward the camera going down.
    for i in 0..4 {
        let t = i as f64 / 3.0;
        p[27 + i] = [0.0, -0.08 + 0.50 * t, 0.12 + 0.26 * t];
    }

    // Nose base 31..=35.
    for i in 0..5 {
        let c = (PI * (i as f64 - 2.0) / 4.0).cos();
        p[31 + i] = [-0.16 + 0.08 * i as f64, 0.55 - 0.04 * c, 0.20 + 0.10 * c];
    }

    // Eyes. Left eye 36..=41 runs outer corner, upper lid, inner corner,
    // lower lid; the outer corners land at x = -0.5 and +0.5 before the
    // final rescale. The right eye mirrors the left with the index map that
    // preserves iBUG ordering.
    let (ex, ew, eh) = (0.36, 0.14, 0.045);
    let angles = [PI, 2.0 * PI / 3.0, PI / 3.0, 0.0, -PI / 3.0, -2.0 * PI / 3.0];
    for (k, a) in angles.iter().enumerate() {
        p[36 + k] = [-ex + ew * a.cos(), -eh * a.sin(), 0.0];
    }
    for (r, l) in [(42, 39), (43, 38), (44, 37), (45, 36), (46, 41), (47, 40)] {
        p[r] = [-p[l][0], p[l][1], p[l][2]];
    }

    // Outer lips 48..=59: twelve points on an ellipse starting at the left
    // corner and going over the top, with a slightly deeper lower lip.
    let (mcx, mcy, mrx, mry_top, mry_bottom, mz) = (0.0, 0.85, 0.30, 0.10, 0.13, 0.16);
    for k in 0..12 {
        let a = PI - 2.0 * PI * k as f64 / 12.0;
        let ry = if a.sin() >= 0.0 { mry_top } else { mry_bottom };
        p[48 + k] = [
            mcx + mrx * a.cos(),
            mcy - ry * a.sin(),
            mz - 0.05 * a.cos() * a.cos(),
        ];
    }

    // Inner lips 60..=67: eight points, nearly closed at rest. 60 is the
    // left corner, 62 the top center, 64 the right corner, 66 the bottom
    // center.
    let (irx, iry) = (0.22, 0.035);
    for k in 0..8 {
        let a = PI - 2.0 * PI * k as f64 / 8.0;
        p[60 + k] = [mcx + irx * a.cos(), mcy - iry * a.sin(), mz - 0.02];
    }

    // Exact symmetrization: average each mirror pair, then pin the midline
    // landmarks to x = 0 so symmetry holds to the last bit.
    for &(a, b) in &SYMMETRY_PAIRS {
        let (pa, pb) = (p[a], p[b]);
        let mx = 0.5 * (pa[0] - pb[0]);
        let my = 0.5 * (pa[1] + pb[1]);
        let mz = 0.5 * (pa[2] + pb[2]);
        p[a] = [mx, my, mz];
        p[b] = [-mx, my, mz];
    }
    for &c in &CENTERLINE {
        p[c][0] = 0.0;
    }

    // Exact unit inter-ocular scale, then centroid to the origin.
    let d = {
        let (l, r) = (p[OUTER_EYE_LEFT], p[OUTER_EYE_RIGHT]);
        ((r[0] - l[0]).powi(2) + (r[1] - l[1]).powi(2) + (r[2] - l[2]).powi(2)).sqrt()
    };
    for q in p.iter_mut() {
        for v in q.iter_mut() {
            *v /= d;
        }
    }
    let mut c = [0.0; 3];
    for q in &p {
        for k in 0..3 {
            c[k] += q[k] / NUM_LANDMARKS as f64;
        }
    }
    for q in p.iter_mut() {
        for k in 0..3 {
            q[k] -= c[k];
        }
    }
    p
}
