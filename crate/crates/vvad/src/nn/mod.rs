//! Minimal neural-network building blocks.
//!
//! Layers are explicit forward/backward pairs over `f64` ndarrays, which
//! keeps every classifier in this crate deterministic and self-contained.
//! Each layer accumulates parameter gradients into its [`Param`]s; models
//! wire layers together and hand their parameter lists to [`Adam`].
//!
//! Every backward pass here is checked against central finite differences
//! in the unit tests, so model-level gradient tests localize failures.

mod adam;
mod conv;
mod init;
mod linear;
mod loss;
mod lstm;
mod norm;

pub use adam::Adam;
pub use conv::{Conv2d, GlobalAvgPool, MaxPool2d};
pub use init::{uniform_init, xavier_uniform};
pub use linear::Linear;
pub use loss::{cross_entropy, softmax};
pub use lstm::{BiLstmLayer, LstmCache, LstmDirection};
pub use norm::{BatchNorm1d, BnCache};

use ndarray::{Array, ArrayD, ArrayView1, ArrayView2, Dimension, Ix1, Ix2, Ix4};

/// A named tensor with its gradient accumulator.
#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub value: ArrayD<f64>,
    pub grad: ArrayD<f64>,
    /// Frozen parameters keep zero gradients and are skipped by the
    /// optimizer; running statistics are stored as non-trainable params so
    /// checkpointing sees one uniform list.
    pub trainable: bool,
}

impl Param {
    pub fn new(name: impl Into<String>, value: ArrayD<f64>, trainable: bool) -> Self {
        let grad = ArrayD::zeros(value.raw_dim());
        Param { name: name.into(), value, grad, trainable }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    pub fn view1(&self) -> ArrayView1<'_, f64> {
        self.value.view().into_dimensionality::<Ix1>().expect("1-d param")
    }

    pub fn view2(&self) -> ArrayView2<'_, f64> {
        self.value.view().into_dimensionality::<Ix2>().expect("2-d param")
    }

    pub fn view4(&self) -> ndarray::ArrayView4<'_, f64> {
        self.value.view().into_dimensionality::<Ix4>().expect("4-d param")
    }

    /// Accumulate into the gradient unless frozen.
    pub fn add_grad(&mut self, g: &ArrayD<f64>) {
        if self.trainable {
            self.grad += g;
        }
    }
}

/// Elementwise ReLU; returns the activation and the 0/1 pass mask for the
/// backward pass.
pub fn relu<D: Dimension>(x: &Array<f64, D>) -> (Array<f64, D>, Array<f64, D>) {
    let mask = x.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
    (x * &mask, mask)
}

pub fn relu_backward<D: Dimension>(dy: &Array<f64, D>, mask: &Array<f64, D>) -> Array<f64, D> {
    dy * mask
}

/// Inverted dropout. Training keeps each activation with probability
/// `1 - p` and rescales so expectations match evaluation, which is the
/// identity.
#[derive(Debug, Clone)]
pub struct Dropout {
    pub p: f64,
}

impl Dropout {
    pub fn new(p: f64) -> Self {
        assert!((0.0..1.0).contains(&p), "dropout must be in [0, 1)");
        Dropout { p }
    }

    pub fn forward_train<D: Dimension>(
        &self,
        x: &Array<f64, D>,
        rng: &mut impl rand::Rng,
    ) -> (Array<f64, D>, Array<f64, D>) {
        if self.p == 0.0 {
            return (x.clone(), Array::ones(x.raw_dim()));
        }
        let keep = 1.0 - self.p;
        let mask = Array::from_shape_simple_fn(x.raw_dim(), || {
            if rng.random::<f64>() < keep {
                1.0 / keep
            } else {
                0.0
            }
        });
        (x * &mask, mask)
    }

    pub fn backward<D: Dimension>(
        &self,
        dy: &Array<f64, D>,
        mask: &Array<f64, D>,
    ) -> Array<f64, D> {
        dy * mask
    }
}

#[cfg(test)]
pub(crate) mod gradcheck {
    /// Relative-error comparison between an analytic gradient and central
    /// finite differences of `loss` over every entry of `param`.
    ///
    /// `loss` must be a pure function of the parameter values (rebuild the
    /// whole forward pass inside it).
    pub fn check_param(
        param_values: &mut ndarray::ArrayD<f64>,
        analytic: &ndarray::ArrayD<f64>,
        mut loss: impl FnMut(&ndarray::ArrayD<f64>) -> f64,
        tol: f64,
    ) {
        const STEP: f64 = 1e-4;
        let n = param_values.len();
        for idx in 0..n {
            let orig = param_values.as_slice_mut().unwrap()[idx];
            param_values.as_slice_mut().unwrap()[idx] = orig + STEP;
            let up = loss(param_values);
            param_values.as_slice_mut().unwrap()[idx] = orig - STEP;
            let down = loss(param_values);
            param_values.as_slice_mut().unwrap()[idx] = orig;
            let fd = (up - down) / (2.0 * STEP);
            let an = analytic.as_slice().unwrap()[idx];
            let rel = (an - fd).abs() / (an.abs() + fd.abs()).max(1.0);
            assert!(
                rel <= tol,
                "gradient mismatch at flat index {idx}: analytic {an}, finite-diff {fd}, rel {rel}"
            );
        }
    }

}
