//! Landmark-sequence classifier.

use crate::geometry::FLAT_DIM;
use crate::nn::{
    relu, relu_backward, BatchNorm1d, BiLstmLayer, BnCache, Dropout, Linear, LstmCache, Param,
};
use crate::seed::rng_for;
use crate::{Error, Result};
use ndarray::{Array2, Array3, Axis};
use rand_chacha::ChaCha8Rng;

/// Architecture of the landmark classifier.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LandLstmConfig {
    /// Flattened landmark dimension per frame.
    pub input_dim: usize,
    pub lstm_layers: usize,
    /// Hidden units per direction.
    pub hidden_units: usize,
    /// Width of the time-shared projection before pooling.
    pub fc_units: usize,
    /// Dropout between recurrent layers during training.
    pub dropout: f64,
    pub classes: usize,
}

impl Default for LandLstmConfig {
    fn default() -> Self {
        LandLstmConfig {
            input_dim: FLAT_DIM,
            lstm_layers: 2,
            hidden_units: 128,
            fc_units: 64,
            dropout: 0.0,
            classes: 2,
        }
    }
}

impl LandLstmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_units == 0 || self.fc_units == 0 {
            return Err(Error::InvalidConfig("model dimensions must be positive".into()));
        }
        if self.lstm_layers == 0 {
            return Err(Error::InvalidConfig("need at least one recurrent layer".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidConfig(format!(
                "dropout must be in [0, 1), got {}",
                self.dropout
            )));
        }
        if self.classes != 2 {
            return Err(Error::InvalidConfig("classifier is two-class".into()));
        }
        Ok(())
    }
}

/// Stacked bidirectional LSTM with batch normalization between layers, a
/// time-shared projection, masked mean pooling over time and a linear
/// class head.
pub struct LandLstm {
    pub cfg: LandLstmConfig,
    pub layers: Vec<BiLstmLayer>,
    /// One between each pair of recurrent layers.
    pub bns: Vec<BatchNorm1d>,
    pub fc: Linear,
    pub head: Linear,
    dropout: Dropout,
}

/// Forward activations threaded to the backward pass.
pub struct LandLstmForward {
    lstm_caches: Vec<(LstmCache, LstmCache)>,
    bn_caches: Vec<BnCache>,
    drop_masks: Vec<Option<Array3<f64>>>,
    fc_input: Array2<f64>,
    relu_mask: Array2<f64>,
    mask: Array2<f64>,
    pooled: Array2<f64>,
    dims: (usize, usize),
}

impl LandLstm {
    pub fn new(cfg: &LandLstmConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut layers = Vec::new();
        let mut bns = Vec::new();
        for i in 0..cfg.lstm_layers {
            let input = if i == 0 { cfg.input_dim } else { 2 * cfg.hidden_units };
            let mut rng = rng_for(seed, "land-lstm.layer", i as u64);
            layers.push(BiLstmLayer::new(&format!("lstm{i}"), input, cfg.hidden_units, &mut rng));
            if i + 1 < cfg.lstm_layers {
                bns.push(BatchNorm1d::new(&format!("bn{i}"), 2 * cfg.hidden_units));
            }
        }
        let mut rng = rng_for(seed, "land-lstm.fc", 0);
        let fc = Linear::new("fc", 2 * cfg.hidden_units, cfg.fc_units, &mut rng);
        let mut rng = rng_for(seed, "land-lstm.head", 0);
        let head = Linear::new("head", cfg.fc_units, cfg.classes, &mut rng);
        let dropout = Dropout::new(cfg.dropout);
        Ok(LandLstm { cfg: cfg.clone(), layers, bns, fc, head, dropout })
    }

    /// Toggle batch-norm mode; training also enables dropout in
    /// [`LandLstm::forward`] when an RNG is supplied.
    pub fn set_training(&mut self, training: bool) {
        for bn in &mut self.bns {
            bn.training = training;
        }
    }

    /// `x: (B, T, input_dim)`, `mask: (B, T)` with ones at valid frames.
    /// Returns `(logits (B, classes), cache)`.
    pub fn forward(
        &mut self,
        x: &Array3<f64>,
        mask: &Array2<f64>,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(Array2<f64>, LandLstmForward)> {
        let (b, t, f) = x.dim();
        if f != self.cfg.input_dim {
            return Err(Error::ShapeMismatch(format!(
                "expected feature dim {}, got {f}",
                self.cfg.input_dim
            )));
        }
        if mask.dim() != (b, t) {
            return Err(Error::ShapeMismatch(format!(
                "mask shape {:?} does not match batch ({b}, {t})",
                mask.dim()
            )));
        }
        let lens = mask.sum_axis(Axis(1));
        if lens.iter().any(|&l| l < 1.0) {
            return Err(Error::EmptyInput("sequence with no valid frames"));
        }

        let mut rng = rng;
        let mut lstm_caches = Vec::new();
        let mut bn_caches = Vec::new();
        let mut drop_masks = Vec::new();
        let mut h = x.clone();
        for i in 0..self.layers.len() {
            let (out, cache) = self.layers[i].forward(&h, mask);
            lstm_caches.push(cache);
            h = out;
            if i < self.bns.len() {
                let (out, cache) = self.bns[i].forward(&h, mask);
                bn_caches.push(cache);
                h = out;
                let dm = match rng.as_deref_mut() {
                    Some(r) if self.dropout.p > 0.0 => {
                        let (out, m) = self.dropout.forward_train(&h, r);
                        h = out;
                        Some(m)
                    }
                    _ => None,
                };
                drop_masks.push(dm);
            }
        }

        // Time-shared projection with rectification.
        let feat = h.dim().2;
        let fc_input = h
            .as_standard_layout()
            .to_owned()
            .into_shape_with_order((b * t, feat))
            .expect("flatten time axis");
        let projected = self.fc.forward(&fc_input);
        let (activated, relu_mask) = relu(&projected);

        // Masked mean over time.
        let per_frame = activated
            .into_shape_with_order((b, t, self.cfg.fc_units))
            .expect("restore time axis");
        let m3 = mask.view().insert_axis(Axis(2)).to_owned();
        let pooled_sum = (&per_frame * &m3).sum_axis(Axis(1));
        let pooled = &pooled_sum / &lens.view().insert_axis(Axis(1));

        let logits = self.head.forward(&pooled);
        let cache = LandLstmForward {
            lstm_caches,
            bn_caches,
            drop_masks,
            fc_input,
            relu_mask,
            mask: mask.clone(),
            pooled,
            dims: (b, t),
        };
        Ok((logits, cache))
    }

    /// Accumulate gradients from `dlogits`.
    pub fn backward(&mut self, cache: &LandLstmForward, dlogits: &Array2<f64>) {
        let (b, t) = cache.dims;
        let lens = cache.mask.sum_axis(Axis(1));

        let dpooled = self.head.backward(&cache.pooled, dlogits);

        // Undo the masked mean: every valid frame receives dpooled / len.
        let scaled = &dpooled / &lens.view().insert_axis(Axis(1));
        let m3 = cache.mask.view().insert_axis(Axis(2)).to_owned();
        let dper_frame = &scaled.insert_axis(Axis(1)) * &m3;

        let dactivated = dper_frame
            .into_shape_with_order((b * t, self.cfg.fc_units))
            .expect("flatten time axis");
        let dprojected = relu_backward(&dactivated, &cache.relu_mask);
        let dfc_in = self.fc.backward(&cache.fc_input, &dprojected);
        let feat = dfc_in.dim().1;
        let mut dh = dfc_in
            .into_shape_with_order((b, t, feat))
            .expect("restore time axis");

        for i in (0..self.layers.len()).rev() {
            if i < self.bns.len() {
                if let Some(m) = &cache.drop_masks[i] {
                    dh = self.dropout.backward(&dh, m);
                }
                dh = self.bns[i].backward(&cache.bn_caches[i], &dh);
            }
            dh = self.layers[i].backward(&cache.lstm_caches[i], &dh);
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = Vec::new();
        for l in &mut self.layers {
            p.extend(l.params_mut());
        }
        for bn in &mut self.bns {
            p.extend(bn.params_mut());
        }
        p.extend(self.fc.params_mut());
        p.extend(self.head.params_mut());
        p
    }
}
