//! Convolutional layers for image classification.

use super::{xavier_uniform, Param};
use ndarray::{Array1, Array2, Array4, ArrayD, Axis};
use rand::Rng;

/// Same-padding 2-d convolution, stride 1, square kernels.
///
/// Input `(B, C_in, H, W)`, output `(B, C_out, H, W)`. Implemented as
/// im2col plus one matrix product per image.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub w: Param,
    pub b: Param,
    pub kernel: usize,
}

impl Conv2d {
    pub fn new(
        name: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        rng: &mut impl Rng,
    ) -> Self {
        assert!(kernel % 2 == 1, "same padding needs an odd kernel");
        let fan_in = in_ch * kernel * kernel;
        let fan_out = out_ch * kernel * kernel;
        let w = xavier_uniform(rng, &[out_ch, in_ch, kernel, kernel], fan_in, fan_out);
        Conv2d {
            w: Param::new(format!("{name}.w"), w, true),
            b: Param::new(format!("{name}.b"), ArrayD::zeros(vec![out_ch]), true),
            kernel,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.w.value.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.w.value.shape()[0]
    }

    fn im2col(&self, img: ndarray::ArrayView3<'_, f64>) -> Array2<f64> {
        let (c, h, w) = img.dim();
        let k = self.kernel;
        let pad = (k / 2) as i64;
        let mut cols = Array2::zeros((c * k * k, h * w));
        for ch in 0..c {
            for ky in 0..k {
                for kx in 0..k {
                    let row = (ch * k + ky) * k + kx;
                    for y in 0..h {
                        let sy = y as i64 + ky as i64 - pad;
                        if sy < 0 || sy >= h as i64 {
                            continue;
                        }
                        for x in 0..w {
                            let sx = x as i64 + kx as i64 - pad;
                            if sx < 0 || sx >= w as i64 {
                                continue;
                            }
                            cols[(row, y * w + x)] = img[(ch, sy as usize, sx as usize)];
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, dcols: &Array2<f64>, c: usize, h: usize, w: usize) -> ndarray::Array3<f64> {
        let k = self.kernel;
        let pad = (k / 2) as i64;
        let mut dimg = ndarray::Array3::zeros((c, h, w));
        for ch in 0..c {
            for ky in 0..k {
                for kx in 0..k {
                    let row = (ch * k + ky) * k + kx;
                    for y in 0..h {
                        let sy = y as i64 + ky as i64 - pad;
                        if sy < 0 || sy >= h as i64 {
                            continue;
                        }
                        for x in 0..w {
                            let sx = x as i64 + kx as i64 - pad;
                            if sx < 0 || sx >= w as i64 {
                                continue;
                            }
                            dimg[(ch, sy as usize, sx as usize)] += dcols[(row, y * w + x)];
                        }
                    }
                }
            }
        }
        dimg
    }

    pub fn forward(&self, x: &Array4<f64>) -> Array4<f64> {
        let (b, c, h, w) = x.dim();
        assert_eq!(c, self.in_channels(), "input channels");
        let out_ch = self.out_channels();
        let k = self.kernel;
        let w_mat = self
            .w
            .value
            .view()
            .into_shape_with_order((out_ch, c * k * k))
            .expect("kernel reshape");
        let bias = self.b.view1();
        let mut y = Array4::zeros((b, out_ch, h, w));
        for bi in 0..b {
            let cols = self.im2col(x.index_axis(Axis(0), bi));
            let out = w_mat.dot(&cols);
            let mut y_img = y.index_axis_mut(Axis(0), bi);
            for oc in 0..out_ch {
                for yy in 0..h {
                    for xx in 0..w {
                        y_img[(oc, yy, xx)] = out[(oc, yy * w + xx)] + bias[oc];
                    }
                }
            }
        }
        y
    }

    pub fn backward(&mut self, x: &Array4<f64>, dy: &Array4<f64>) -> Array4<f64> {
        let (b, c, h, w) = x.dim();
        let out_ch = self.out_channels();
        let k = self.kernel;
        assert_eq!(dy.dim(), (b, out_ch, h, w), "output gradient shape");
        let w_mat = self
            .w
            .value
            .view()
            .into_shape_with_order((out_ch, c * k * k))
            .expect("kernel reshape")
            .to_owned();
        let mut dw_mat = Array2::<f64>::zeros((out_ch, c * k * k));
        let mut db = Array1::<f64>::zeros(out_ch);
        let mut dx = Array4::zeros((b, c, h, w));
        for bi in 0..b {
            let cols = self.im2col(x.index_axis(Axis(0), bi));
            let dy_img = dy.index_axis(Axis(0), bi);
            let dy_mat = dy_img
                .into_shape_with_order((out_ch, h * w))
                .expect("gradient reshape")
                .to_owned();
            dw_mat += &dy_mat.dot(&cols.t());
            db += &dy_mat.sum_axis(Axis(1));
            let dcols = w_mat.t().dot(&dy_mat);
            dx.index_axis_mut(Axis(0), bi).assign(&self.col2im(&dcols, c, h, w));
        }
        let dw = dw_mat
            .into_shape_with_order((out_ch, c, k, k))
            .expect("kernel gradient reshape");
        self.w.add_grad(&dw.into_dyn());
        self.b.add_grad(&db.into_dyn());
        dx
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.w, &mut self.b]
    }
}

/// 2x2 max pooling with stride 2; odd trailing rows or columns are dropped.
#[derive(Debug, Clone, Default)]
pub struct MaxPool2d;

impl MaxPool2d {
    /// Returns the pooled map and the flat argmax indices for backward.
    pub fn forward(&self, x: &Array4<f64>) -> (Array4<f64>, Array4<usize>) {
        let (b, c, h, w) = x.dim();
        let (oh, ow) = (h / 2, w / 2);
        let mut y = Array4::zeros((b, c, oh, ow));
        let mut arg = Array4::zeros((b, c, oh, ow));
        for bi in 0..b {
            for ci in 0..c {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut best = f64::NEG_INFINITY;
                        let mut best_idx = 0;
                        for dy in 0..2 {
                            for dx in 0..2 {
                                let (sy, sx) = (2 * oy + dy, 2 * ox + dx);
                                let v = x[(bi, ci, sy, sx)];
                                if v > best {
                                    best = v;
                                    best_idx = sy * w + sx;
                                }
                            }
                        }
                        y[(bi, ci, oy, ox)] = best;
                        arg[(bi, ci, oy, ox)] = best_idx;
                    }
                }
            }
        }
        (y, arg)
    }

    pub fn backward(
        &self,
        arg: &Array4<usize>,
        dy: &Array4<f64>,
        input_hw: (usize, usize),
    ) -> Array4<f64> {
        let (b, c, oh, ow) = dy.dim();
        let (h, w) = input_hw;
        let mut dx = Array4::zeros((b, c, h, w));
        for bi in 0..b {
            for ci in 0..c {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let idx = arg[(bi, ci, oy, ox)];
                        dx[(bi, ci, idx / w, idx % w)] += dy[(bi, ci, oy, ox)];
                    }
                }
            }
        }
        dx
    }
}

/// Mean over the spatial axes: `(B, C, H, W)` to `(B, C)`.
#[derive(Debug, Clone, Default)]
pub struct GlobalAvgPool;

impl GlobalAvgPool {
    pub fn forward(&self, x: &Array4<f64>) -> Array2<f64> {
        x.sum_axis(Axis(3)).sum_axis(Axis(2)) / (x.dim().2 * x.dim().3) as f64
    }

    pub fn backward(&self, dy: &Array2<f64>, input_hw: (usize, usize)) -> Array4<f64> {
        let (b, c) = dy.dim();
        let (h, w) = input_hw;
        let scale = 1.0 / (h * w) as f64;
        let mut dx = Array4::zeros((b, c, h, w));
        for bi in 0..b {
            for ci in 0..c {
                let g = dy[(bi, ci)] * scale;
                dx.slice_mut(ndarray::s![bi, ci, .., ..]).fill(g);
            }
        }
        dx
    }
}
