//! Dense optical flow by polynomial expansion.
//!
//! Each frame is approximated locally by a quadratic polynomial
//! `f(x) ~ x'Ax + b'x + c` fitted under a Gaussian weighting; comparing the
//! expansions of two frames yields a linear constraint `A d = db` on the
//! displacement `d`, which is solved per pixel after averaging the normal
//! equations over a window. A coarse-to-fine pyramid handles displacements
//! larger than the expansion neighborhood.

use super::FlowFrame;
use crate::{Error, Result};
use ndarray::Array2;

/// Parameters for [`dense_flow`].
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowConfig {
    /// Pyramid levels; 1 disables the pyramid.
    pub levels: usize,
    /// Side of the square averaging window (odd).
    pub window: usize,
    /// Displacement refinement iterations per level.
    pub iterations: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig { levels: 3, window: 15, iterations: 3 }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 {
            return Err(Error::InvalidConfig("flow levels must be at least 1".into()));
        }
        if self.window < 3 || self.window % 2 == 0 {
            return Err(Error::InvalidConfig(format!(
                "flow window must be odd and at least 3, got {}",
                self.window
            )));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidConfig("flow iterations must be at least 1".into()));
        }
        Ok(())
    }
}

/// Polynomial expansion neighborhood radius (7x7 window) and its Gaussian
/// applicability sigma. These match the expansion the displacement equations
/// were calibrated against and are not exposed as knobs.
const POLY_RADIUS: usize = 3;
const POLY_SIGMA: f64 = 1.5;

/// Minimum image side kept on the pyramid; coarser levels are dropped.
const MIN_LEVEL_SIDE: usize = 16;

/// Per-pixel quadratic expansion: planes b_x, b_y, a_xx, a_yy, a_xy where
/// f(x, y) ~ c + b_x x + b_y y + a_xx x^2 + a_yy y^2 + a_xy x y.
struct PolyExpansion {
    bx: Array2<f64>,
    by: Array2<f64>,
    axx: Array2<f64>,
    ayy: Array2<f64>,
    axy: Array2<f64>,
}

fn gaussian_kernel(radius: usize, sigma: f64) -> Vec<f64> {
    let mut k: Vec<f64> = (-(radius as i64)..=radius as i64)
        .map(|i| (-(i as f64).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    for v in &mut k {
        *v /= sum;
    }
    k
}

#[inline]
fn clamp_idx(i: i64, n: usize) -> usize {
    i.clamp(0, n as i64 - 1) as usize
}

/// Fit the quadratic expansion at every pixel with separable moment passes.
fn poly_expand(img: &Array2<f64>) -> PolyExpansion {
    let (h, w) = img.dim();
    let kern = gaussian_kernel(POLY_RADIUS, POLY_SIGMA);
    let r = POLY_RADIUS as i64;

    // Weighted moment sums of the kernel itself.
    let mut w0 = 0.0;
    let mut w2 = 0.0;
    let mut w4 = 0.0;
    for (idx, &kv) in kern.iter().enumerate() {
        let o = idx as i64 - r;
        let o2 = (o * o) as f64;
        w0 += kv;
        w2 += kv * o2;
        w4 += kv * o2 * o2;
    }

    // The 1, x^2, y^2 basis functions are not orthogonal; the symmetric Gram
    // matrix below couples their coefficients per pixel and is inverted once.
    //   [w0^2   w0 w2  w0 w2] [c  ]   [m_1 ]
    //   [w0 w2  w0 w4  w2^2 ] [axx] = [m_xx]
    //   [w0 w2  w2^2   w0 w4] [ayy]   [m_yy]
    let g = nalgebra::Matrix3::new(
        w0 * w0,
        w0 * w2,
        w0 * w2,
        w0 * w2,
        w0 * w4,
        w2 * w2,
        w0 * w2,
        w2 * w2,
        w0 * w4,
    );
    let g_inv = g.try_inverse().expect("expansion Gram matrix is invertible");

    // Row pass: horizontal moments of orders 0..2.
    let mut r0 = Array2::zeros((h, w));
    let mut r1 = Array2::zeros((h, w));
    let mut r2 = Array2::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            let mut m0 = 0.0;
            let mut m1 = 0.0;
            let mut m2 = 0.0;
            for (idx, &kv) in kern.iter().enumerate() {
                let o = idx as i64 - r;
                let v = img[(y, clamp_idx(x as i64 + o, w))];
                m0 += kv * v;
                m1 += kv * o as f64 * v;
                m2 += kv * (o * o) as f64 * v;
            }
            r0[(y, x)] = m0;
            r1[(y, x)] = m1;
            r2[(y, x)] = m2;
        }
    }

    // Column pass combines vertical moments with the horizontal ones.
    let mut bx = Array2::zeros((h, w));
    let mut by = Array2::zeros((h, w));
    let mut axx = Array2::zeros((h, w));
    let mut ayy = Array2::zeros((h, w));
    let mut axy = Array2::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            let mut m1 = 0.0; // weighted sum of f
            let mut my = 0.0; // f * y
            let mut myy = 0.0; // f * y^2
            let mut mx = 0.0; // f * x
            let mut mxy = 0.0; // f * x * y
            let mut mxx = 0.0; // f * x^2
            for (idx, &kv) in kern.iter().enumerate() {
                let o = idx as i64 - r;
                let yy = clamp_idx(y as i64 + o, h);
                m1 += kv * r0[(yy, x)];
                my += kv * o as f64 * r0[(yy, x)];
                myy += kv * (o * o) as f64 * r0[(yy, x)];
                mx += kv * r1[(yy, x)];
                mxy += kv * o as f64 * r1[(yy, x)];
                mxx += kv * r2[(yy, x)];
            }
            bx[(y, x)] = mx / (w0 * w2);
            by[(y, x)] = my / (w0 * w2);
            axy[(y, x)] = mxy / (w2 * w2);
            let rhs = nalgebra::Vector3::new(m1, mxx, myy);
            let sol = g_inv * rhs;
            axx[(y, x)] = sol[1];
            ayy[(y, x)] = sol[2];
        }
    }

    PolyExpansion { bx, by, axx, ayy, axy }
}

/// Separable box average with replicated borders, used to pool the
/// per-pixel normal equations over the flow window.
fn box_filter(src: &Array2<f64>, radius: usize) -> Array2<f64> {
    let (h, w) = src.dim();
    let r = radius as i64;
    let norm = (2 * radius + 1) as f64;
    let mut tmp = Array2::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for o in -r..=r {
                s += src[(y, clamp_idx(x as i64 + o, w))];
            }
            tmp[(y, x)] = s / norm;
        }
    }
    let mut out = Array2::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for o in -r..=r {
                s += tmp[(clamp_idx(y as i64 + o, h), x)];
            }
            out[(y, x)] = s / norm;
        }
    }
    out
}

/// One displacement refinement: build the pooled normal equations from the
/// two expansions under the current flow estimate and solve per pixel.
fn update_flow(
    e1: &PolyExpansion,
    e2: &PolyExpansion,
    u: &mut Array2<f64>,
    v: &mut Array2<f64>,
    window: usize,
) {
    let (h, w) = u.dim();
    let prior_u = u.clone();
    let prior_v = v.clone();
    let mut g11 = Array2::zeros((h, w));
    let mut g12 = Array2::zeros((h, w));
    let mut g22 = Array2::zeros((h, w));
    let mut h1 = Array2::zeros((h, w));
    let mut h2 = Array2::zeros((h, w));

    for y in 0..h {
        for x in 0..w {
            let du = u[(y, x)];
            let dv = v[(y, x)];
            // Sample the second frame's expansion where the current estimate
            // says this pixel went, clamped to the frame.
            let xs = clamp_idx((x as f64 + du).round() as i64, w);
            let ys = clamp_idx((y as f64 + dv).round() as i64, h);

            // A = (A1 + A2)/2 with A = [[axx, axy/2], [axy/2, ayy]].
            let a11 = 0.5 * (e1.axx[(y, x)] + e2.axx[(ys, xs)]);
            let a22 = 0.5 * (e1.ayy[(y, x)] + e2.ayy[(ys, xs)]);
            let a12 = 0.25 * (e1.axy[(y, x)] + e2.axy[(ys, xs)]);

            // db = -(b2 - b1)/2 plus A d0 so the solve returns total flow.
            let db1 = -0.5 * (e2.bx[(ys, xs)] - e1.bx[(y, x)]) + a11 * du + a12 * dv;
            let db2 = -0.5 * (e2.by[(ys, xs)] - e1.by[(y, x)]) + a12 * du + a22 * dv;

            // Accumulate A'A and A'db (A symmetric).
            g11[(y, x)] = a11 * a11 + a12 * a12;
            g12[(y, x)] = a12 * (a11 + a22);
            g22[(y, x)] = a22 * a22 + a12 * a12;
            h1[(y, x)] = a11 * db1 + a12 * db2;
            h2[(y, x)] = a12 * db1 + a22 * db2;
        }
    }

    let radius = window / 2;
    let g11 = box_filter(&g11, radius);
    let g12 = box_filter(&g12, radius);
    let g22 = box_filter(&g22, radius);
    let h1 = box_filter(&h1, radius);
    let h2 = box_filter(&h2, radius);

    for y in 0..h {
        for x in 0..w {
            let (a, b, c) = (g11[(y, x)], g12[(y, x)], g22[(y, x)]);
            let (r1, r2) = (h1[(y, x)], h2[(y, x)]);
            let trace = a + c;
            let det = a * c - b * b;
            let disc = (trace * trace - 4.0 * det).max(0.0).sqrt();
            let l_max = 0.5 * (trace + disc);
            let l_min = 0.5 * (trace - disc);
            if l_max <= 1e-12 {
                // Textureless: keep the propagated estimate.
                continue;
            }
            if l_min > 1e-6 * l_max {
                u[(y, x)] = (c * r1 - b * r2) / det;
                v[(y, x)] = (a * r2 - b * r1) / det;
            } else {
                // One-dimensional texture (aperture problem): solve along
                // the dominant eigendirection, keep the prior across it.
                let (mut ex, mut ey) = if b.abs() > 0.0 {
                    if (l_max - a).abs() > (l_max - c).abs() {
                        (b, l_max - a)
                    } else {
                        (l_max - c, b)
                    }
                } else if a >= c {
                    (1.0, 0.0)
                } else {
                    (0.0, 1.0)
                };
                let norm = ex.hypot(ey);
                ex /= norm;
                ey /= norm;
                let along = (ex * r1 + ey * r2) / l_max;
                let (pu, pv) = (prior_u[(y, x)], prior_v[(y, x)]);
                let prior_along = ex * pu + ey * pv;
                u[(y, x)] = along * ex + (pu - prior_along * ex);
                v[(y, x)] = along * ey + (pv - prior_along * ey);
            }
        }
    }
}

/// Downsample by two with a 2x2 box average.
fn downsample(img: &Array2<f64>) -> Array2<f64> {
    let (h, w) = img.dim();
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Array2::zeros((oh, ow));
    for y in 0..oh {
        for x in 0..ow {
            out[(y, x)] = 0.25
                * (img[(2 * y, 2 * x)]
                    + img[(2 * y, 2 * x + 1)]
                    + img[(2 * y + 1, 2 * x)]
                    + img[(2 * y + 1, 2 * x + 1)]);
        }
    }
    out
}

/// Bilinearly resize a flow component to `(h, w)` and scale the values by
/// the resolution ratio.
fn upsample_flow(src: &Array2<f64>, h: usize, w: usize) -> Array2<f64> {
    let (sh, sw) = src.dim();
    let mut out = Array2::zeros((h, w));
    let fy = sh as f64 / h as f64;
    let fx = sw as f64 / w as f64;
    for y in 0..h {
        for x in 0..w {
            let sy = (y as f64 + 0.5) * fy - 0.5;
            let sx = (x as f64 + 0.5) * fx - 0.5;
            let y0 = sy.floor();
            let x0 = sx.floor();
            let ty = sy - y0;
            let tx = sx - x0;
            let y0i = clamp_idx(y0 as i64, sh);
            let y1i = clamp_idx(y0 as i64 + 1, sh);
            let x0i = clamp_idx(x0 as i64, sw);
            let x1i = clamp_idx(x0 as i64 + 1, sw);
            let top = src[(y0i, x0i)] * (1.0 - tx) + src[(y0i, x1i)] * tx;
            let bot = src[(y1i, x0i)] * (1.0 - tx) + src[(y1i, x1i)] * tx;
            out[(y, x)] = (top * (1.0 - ty) + bot * ty) / fx.max(fy);
        }
    }
    out
}

/// Compute dense optical flow from `a` to `b`.
///
/// Both frames must have the same shape, at least 16x16 pixels, and finite
/// values. The returned flow is the displacement in pixels of each pixel of
/// `a` in `b` (positive `u` right, positive `v` down) and is finite
/// everywhere.
pub fn dense_flow(a: &Array2<f32>, b: &Array2<f32>, cfg: &FlowConfig) -> Result<FlowFrame> {
    cfg.validate()?;
    if a.dim() != b.dim() {
        return Err(Error::ShapeMismatch(format!(
            "flow frames differ in shape: {:?} vs {:?}",
            a.dim(),
            b.dim()
        )));
    }
    let (h, w) = a.dim();
    if h < MIN_LEVEL_SIDE || w < MIN_LEVEL_SIDE {
        return Err(Error::ShapeMismatch(format!(
            "flow frames must be at least {MIN_LEVEL_SIDE}x{MIN_LEVEL_SIDE}, got {h}x{w}"
        )));
    }
    for (name, img) in [("first", a), ("second", b)] {
        if img.iter().any(|p| !p.is_finite()) {
            return Err(Error::ShapeMismatch(format!(
                "{name} flow frame contains non-finite pixels"
            )));
        }
    }

    // Build the pyramid, dropping levels that would fall below the minimum
    // side so small inputs quietly use fewer levels.
    let mut pyr_a = vec![a.mapv(|p| p as f64)];
    let mut pyr_b = vec![b.mapv(|p| p as f64)];
    for _ in 1..cfg.levels {
        let next_a = downsample(pyr_a.last().unwrap());
        if next_a.dim().0 < MIN_LEVEL_SIDE || next_a.dim().1 < MIN_LEVEL_SIDE {
            break;
        }
        pyr_b.push(downsample(pyr_b.last().unwrap()));
        pyr_a.push(next_a);
    }

    let mut u = Array2::zeros(pyr_a.last().unwrap().dim());
    let mut v = Array2::zeros(pyr_a.last().unwrap().dim());
    for level in (0..pyr_a.len()).rev() {
        let (lh, lw) = pyr_a[level].dim();
        if u.dim() != (lh, lw) {
            u = upsample_flow(&u, lh, lw);
            v = upsample_flow(&v, lh, lw);
        }
        let e1 = poly_expand(&pyr_a[level]);
        let e2 = poly_expand(&pyr_b[level]);
        for _ in 0..cfg.iterations {
            update_flow(&e1, &e2, &mut u, &mut v, cfg.window);
        }
    }

    let flow = FlowFrame { u: u.mapv(|p| p as f32), v: v.mapv(|p| p as f32) };
    if flow.u.iter().chain(flow.v.iter()).any(|p| !p.is_finite()) {
        return Err(Error::Internal("flow solve produced non-finite values".into()));
    }
    Ok(flow)
}
