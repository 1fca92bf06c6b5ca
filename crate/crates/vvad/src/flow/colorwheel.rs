//! Middlebury flow color coding.
//!
//! Direction maps to hue on the 55-bin Middlebury color wheel, magnitude to
//! saturation: zero flow is white and colors reach full saturation at
//! `max_mag`. The exact arithmetic is pinned down to the bit so encoded
//! images are portable test fixtures:
//!
//! - `angle = atan2(v, u) / pi` in `[-1, 1]`
//! - fractional bin `fk = (angle + 1) / 2 * (bins - 1)`, linear
//!   interpolation between bin `floor(fk)` and the next (modulo bins)
//! - `rad = min(magnitude / max_mag, 1)`, channel `= 1 - rad * (1 - wheel)`
//! - output `floor(255 * channel)`

use super::{FlowFrame, FlowImage};
use ndarray::Array3;
use std::sync::OnceLock;

/// Number of hue bins on the wheel.
pub const WHEEL_BINS: usize = 55;

/// Transition lengths red→yellow→green→cyan→blue→magenta→red.
const SEGMENTS: [(usize, [i32; 3], [i32; 3]); 6] = [
    (15, [255, 0, 0], [0, 255, 0]),   // RY: red, ramp green up
    (6, [255, 255, 0], [-255, 0, 0]), // YG: yellow, ramp red down
    (4, [0, 255, 0], [0, 0, 255]),    // GC: green, ramp blue up
    (11, [0, 255, 255], [0, -255, 0]),// CB: cyan, ramp green down
    (13, [0, 0, 255], [255, 0, 0]),   // BM: blue, ramp red up
    (6, [255, 0, 255], [0, 0, -255]), // MR: magenta, ramp blue down
];

fn wheel() -> &'static [[u8; 3]; WHEEL_BINS] {
    static WHEEL: OnceLock<[[u8; 3]; WHEEL_BINS]> = OnceLock::new();
    WHEEL.get_or_init(|| {
        let mut bins = [[0u8; 3]; WHEEL_BINS];
        let mut k = 0;
        for (len, base, ramp) in SEGMENTS {
            for i in 0..len {
                for c in 0..3 {
                    let v = base[c] + ramp[c] * i as i32 / len as i32;
                    bins[k][c] = v as u8;
                }
                k += 1;
            }
        }
        debug_assert_eq!(k, WHEEL_BINS);
        bins
    })
}

/// Color one flow vector. `max_mag` must be positive.
pub fn flow_color(u: f64, v: f64, max_mag: f64) -> [u8; 3] {
    let wheel = wheel();
    let rad = (u.hypot(v) / max_mag).min(1.0);
    let angle = v.atan2(u) / std::f64::consts::PI;
    let fk = (angle + 1.0) / 2.0 * (WHEEL_BINS - 1) as f64;
    let k0 = (fk.floor() as usize).min(WHEEL_BINS - 1);
    let k1 = (k0 + 1) % WHEEL_BINS;
    let f = fk - k0 as f64;

    let mut out = [0u8; 3];
    for c in 0..3 {
        let col0 = wheel[k0][c] as f64 / 255.0;
        let col1 = wheel[k1][c] as f64 / 255.0;
        let col = (1.0 - f) * col0 + f * col1;
        out[c] = (255.0 * (1.0 - rad * (1.0 - col))).floor() as u8;
    }
    out
}

/// Encode a flow field as an RGB image.
///
/// `max_mag` of `None` means auto: the per-frame maximum magnitude with a
/// floor of 1 px, so near-static frames do not amplify noise into saturated
/// colors.
pub fn flow_to_rgb(flow: &FlowFrame, max_mag: Option<f64>) -> FlowImage {
    let (h, w) = flow.u.dim();
    let max_mag = match max_mag {
        Some(m) => m,
        None => {
            let mut max = 0.0f64;
            for (u, v) in flow.u.iter().zip(flow.v.iter()) {
                max = max.max((*u as f64).hypot(*v as f64));
            }
            max.max(1.0)
        }
    };
    let mut rgb = Array3::zeros((h, w, 3));
    for y in 0..h {
        for x in 0..w {
            let c = flow_color(flow.u[(y, x)] as f64, flow.v[(y, x)] as f64, max_mag);
            for k in 0..3 {
                rgb[(y, x, k)] = c[k];
            }
        }
    }
    FlowImage { rgb }
}
