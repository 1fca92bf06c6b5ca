//! Fully connected layer.

use super::{xavier_uniform, Param};
use ndarray::{Array1, Array2, ArrayD};
use rand::Rng;

/// `y = x W + b` with `W: (in, out)`, `b: (out)`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: Param,
    pub b: Param,
}

impl Linear {
    pub fn new(name: &str, in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        let w = xavier_uniform(rng, &[in_dim, out_dim], in_dim, out_dim);
        Linear {
            w: Param::new(format!("{name}.w"), w, true),
            b: Param::new(format!("{name}.b"), ArrayD::zeros(vec![out_dim]), true),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w.value.shape()[0]
    }

    pub fn out_dim(&self) -> usize {
        self.w.value.shape()[1]
    }

    /// `x: (N, in)` to `(N, out)`. The caller keeps `x` for backward.
    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut y = x.dot(&self.w.view2());
        y += &self.b.view1();
        y
    }

    /// Accumulates parameter gradients and returns `dx`.
    pub fn backward(&mut self, x: &Array2<f64>, dy: &Array2<f64>) -> Array2<f64> {
        let dw = x.t().dot(dy);
        let db: Array1<f64> = dy.sum_axis(ndarray::Axis(0));
        self.w.add_grad(&dw.into_dyn());
        self.b.add_grad(&db.into_dyn());
        dy.dot(&self.w.view2().t())
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.w, &mut self.b]
    }
}
