//! Batch normalization over padded sequence batches.

use super::Param;
use ndarray::{Array1, Array2, Array3, ArrayD, Axis};

/// Per-feature batch norm for `(batch, time, features)` inputs with a 0/1
/// validity mask. Statistics are taken over valid frames only, across the
/// flattened batch and time axes, so padding never shifts them; padded
/// outputs are zeroed.
///
/// Running statistics live in non-trainable [`Param`]s so checkpoints carry
/// them alongside the weights.
#[derive(Debug, Clone)]
pub struct BatchNorm1d {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Param,
    pub running_var: Param,
    pub momentum: f64,
    pub eps: f64,
    pub training: bool,
}

/// Forward activations for the backward pass.
pub struct BnCache {
    xhat: Array3<f64>,
    inv_std: Array1<f64>,
    mask: Array2<f64>,
    n_valid: f64,
}

impl BatchNorm1d {
    pub fn new(name: &str, features: usize) -> Self {
        BatchNorm1d {
            gamma: Param::new(format!("{name}.gamma"), ArrayD::ones(vec![features]), true),
            beta: Param::new(format!("{name}.beta"), ArrayD::zeros(vec![features]), true),
            running_mean: Param::new(
                format!("{name}.running_mean"),
                ArrayD::zeros(vec![features]),
                false,
            ),
            running_var: Param::new(
                format!("{name}.running_var"),
                ArrayD::ones(vec![features]),
                false,
            ),
            momentum: 0.1,
            eps: 1e-5,
            training: true,
        }
    }

    fn features(&self) -> usize {
        self.gamma.value.shape()[0]
    }

    pub fn forward(&mut self, x: &Array3<f64>, mask: &Array2<f64>) -> (Array3<f64>, BnCache) {
        let (b, t, f) = x.dim();
        assert_eq!(mask.dim(), (b, t), "mask shape");
        assert_eq!(f, self.features(), "feature count");
        let m3 = mask.view().insert_axis(Axis(2)).to_owned();
        let n_valid = mask.sum();
        assert!(n_valid >= 1.0, "batch norm over an empty batch");

        let (mean, var) = if self.training {
            let masked = x * &m3;
            let mean: Array1<f64> =
                masked.sum_axis(Axis(0)).sum_axis(Axis(0)) / n_valid;
            let centered = (x - &mean) * &m3;
            let var: Array1<f64> =
                centered.mapv(|v| v * v).sum_axis(Axis(0)).sum_axis(Axis(0)) / n_valid;
            let rm = self.running_mean.value.clone()
                * (1.0 - self.momentum)
                + &(mean.clone() * self.momentum).into_dyn();
            let rv = self.running_var.value.clone()
                * (1.0 - self.momentum)
                + &(var.clone() * self.momentum).into_dyn();
            self.running_mean.value = rm;
            self.running_var.value = rv;
            (mean, var)
        } else {
            (
                self.running_mean.view1().to_owned(),
                self.running_var.view1().to_owned(),
            )
        };

        let inv_std = var.mapv(|v| 1.0 / (v + self.eps).sqrt());
        let xhat = (x - &mean) * &inv_std;
        let y = (&xhat * &self.gamma.view1() + &self.beta.view1()) * &m3;
        (y, BnCache { xhat, inv_std, mask: mask.clone(), n_valid })
    }

    /// Training-mode backward; accumulates gamma/beta gradients and returns
    /// `dx` (zero at padded frames).
    pub fn backward(&mut self, cache: &BnCache, dy: &Array3<f64>) -> Array3<f64> {
        assert!(self.training, "backward through eval-mode batch norm");
        let m3 = cache.mask.view().insert_axis(Axis(2)).to_owned();
        let dy = dy * &m3;
        let n = cache.n_valid;

        let dbeta: Array1<f64> = dy.sum_axis(Axis(0)).sum_axis(Axis(0));
        let dgamma: Array1<f64> =
            (&dy * &cache.xhat).sum_axis(Axis(0)).sum_axis(Axis(0));

        // Compact batch-norm gradient over the valid set:
        // dx = gamma * inv_std / N * (N dy - sum(dy) - xhat * sum(dy xhat))
        let sum_dy = dy.sum_axis(Axis(0)).sum_axis(Axis(0));
        let sum_dy_xhat = (&dy * &cache.xhat).sum_axis(Axis(0)).sum_axis(Axis(0));
        let coef = &self.gamma.view1().to_owned() * &cache.inv_std / n;
        let dx = (&(&dy * n) - &sum_dy - &(&cache.xhat * &sum_dy_xhat)) * &coef * &m3;

        self.gamma.add_grad(&dgamma.into_dyn());
        self.beta.add_grad(&dbeta.into_dyn());
        dx
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![
            &mut self.gamma,
            &mut self.beta,
            &mut self.running_mean,
            &mut self.running_var,
        ]
    }
}
