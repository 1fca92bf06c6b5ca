//! Masked (bidirectional) LSTM layers.
//!
//! Sequences arrive right-padded as `(batch, time, features)` plus a 0/1
//! validity mask. Hidden and cell states are multiplied by the mask each
//! step, so padded steps hold zero state: the forward direction is
//! unaffected (padding trails the data) and the backward direction starts
//! from zero state at the last real frame exactly as it would without
//! padding. Outputs at real frames are therefore independent of how much
//! padding follows, which the model tests assert bit-exactly.

use super::{xavier_uniform, Param};
use ndarray::{s, Array1, Array2, Array3, Axis};
use rand::Rng;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One direction of an LSTM over a padded batch.
///
/// Weights: `w_ih (input, 4H)`, `w_hh (H, 4H)`, `b (4H)` with gate order
/// input, forget, cell, output along the last axis.
#[derive(Debug, Clone)]
pub struct LstmDirection {
    pub w_ih: Param,
    pub w_hh: Param,
    pub b: Param,
    pub hidden: usize,
    pub reverse: bool,
}

/// Forward activations needed by the backward pass, indexed by iteration
/// step (not wall-clock time).
pub struct LstmCache {
    x: Array3<f64>,
    mask: Array2<f64>,
    h_prev: Array3<f64>,
    c_prev: Array3<f64>,
    gi: Array3<f64>,
    gf: Array3<f64>,
    gg: Array3<f64>,
    go: Array3<f64>,
    tanh_c: Array3<f64>,
    times: Vec<usize>,
}

impl LstmDirection {
    pub fn new(
        name: &str,
        input: usize,
        hidden: usize,
        reverse: bool,
        rng: &mut impl Rng,
    ) -> Self {
        let w_ih = xavier_uniform(rng, &[input, 4 * hidden], input, 4 * hidden);
        let w_hh = xavier_uniform(rng, &[hidden, 4 * hidden], hidden, 4 * hidden);
        // Forget-gate bias starts at one so early training does not wipe
        // the cell state.
        let mut b = Array1::zeros(4 * hidden);
        b.slice_mut(s![hidden..2 * hidden]).fill(1.0);
        LstmDirection {
            w_ih: Param::new(format!("{name}.w_ih"), w_ih, true),
            w_hh: Param::new(format!("{name}.w_hh"), w_hh, true),
            b: Param::new(format!("{name}.b"), b.into_dyn(), true),
            hidden,
            reverse,
        }
    }

    /// `x: (B, T, I)`, `mask: (B, T)` of zeros and ones. Returns the hidden
    /// states `(B, T, H)` in wall-clock order.
    pub fn forward(&self, x: &Array3<f64>, mask: &Array2<f64>) -> (Array3<f64>, LstmCache) {
        let (batch, t_len, _input) = x.dim();
        assert_eq!(mask.dim(), (batch, t_len), "mask shape");
        let h = self.hidden;
        let times: Vec<usize> =
            if self.reverse { (0..t_len).rev().collect() } else { (0..t_len).collect() };

        let mut cache = LstmCache {
            x: x.clone(),
            mask: mask.clone(),
            h_prev: Array3::zeros((t_len, batch, h)),
            c_prev: Array3::zeros((t_len, batch, h)),
            gi: Array3::zeros((t_len, batch, h)),
            gf: Array3::zeros((t_len, batch, h)),
            gg: Array3::zeros((t_len, batch, h)),
            go: Array3::zeros((t_len, batch, h)),
            tanh_c: Array3::zeros((t_len, batch, h)),
            times: times.clone(),
        };

        let w_ih = self.w_ih.view2();
        let w_hh = self.w_hh.view2();
        let bias = self.b.view1();

        let mut out = Array3::zeros((batch, t_len, h));
        let mut h_state = Array2::zeros((batch, h));
        let mut c_state = Array2::zeros((batch, h));
        for (step, &t) in times.iter().enumerate() {
            let x_t = x.index_axis(Axis(1), t);
            let mut pre = x_t.dot(&w_ih) + h_state.dot(&w_hh);
            pre += &bias;

            cache.h_prev.index_axis_mut(Axis(0), step).assign(&h_state);
            cache.c_prev.index_axis_mut(Axis(0), step).assign(&c_state);

            let gi = pre.slice(s![.., 0..h]).mapv(sigmoid);
            let gf = pre.slice(s![.., h..2 * h]).mapv(sigmoid);
            let gg = pre.slice(s![.., 2 * h..3 * h]).mapv(f64::tanh);
            let go = pre.slice(s![.., 3 * h..4 * h]).mapv(sigmoid);

            let c_cand = &gf * &c_state + &gi * &gg;
            let tanh_c = c_cand.mapv(f64::tanh);
            let h_cand = &go * &tanh_c;

            let m_col = mask.index_axis(Axis(1), t);
            let m = m_col.insert_axis(Axis(1));
            c_state = &c_cand * &m;
            h_state = &h_cand * &m;

            cache.gi.index_axis_mut(Axis(0), step).assign(&gi);
            cache.gf.index_axis_mut(Axis(0), step).assign(&gf);
            cache.gg.index_axis_mut(Axis(0), step).assign(&gg);
            cache.go.index_axis_mut(Axis(0), step).assign(&go);
            cache.tanh_c.index_axis_mut(Axis(0), step).assign(&tanh_c);
            out.index_axis_mut(Axis(1), t).assign(&h_state);
        }
        (out, cache)
    }

    /// Accumulates weight gradients and returns `dx (B, T, I)`.
    pub fn backward(&mut self, cache: &LstmCache, dh_out: &Array3<f64>) -> Array3<f64> {
        let (batch, t_len, input) = cache.x.dim();
        let h = self.hidden;
        assert_eq!(dh_out.dim(), (batch, t_len, h), "output gradient shape");

        let w_ih = self.w_ih.view2().to_owned();
        let w_hh = self.w_hh.view2().to_owned();
        let mut dw_ih = Array2::<f64>::zeros((input, 4 * h));
        let mut dw_hh = Array2::<f64>::zeros((h, 4 * h));
        let mut db = Array1::<f64>::zeros(4 * h);
        let mut dx = Array3::zeros((batch, t_len, input));

        let mut dh_next = Array2::<f64>::zeros((batch, h));
        let mut dc_next = Array2::<f64>::zeros((batch, h));
        for step in (0..t_len).rev() {
            let t = cache.times[step];
            let m = cache.mask.index_axis(Axis(1), t).insert_axis(Axis(1)).to_owned();

            let dh = &dh_out.index_axis(Axis(1), t).to_owned() + &dh_next;
            let dh_cand = &dh * &m;
            let dc_cand = &dc_next * &m;

            let gi = cache.gi.index_axis(Axis(0), step);
            let gf = cache.gf.index_axis(Axis(0), step);
            let gg = cache.gg.index_axis(Axis(0), step);
            let go = cache.go.index_axis(Axis(0), step);
            let tanh_c = cache.tanh_c.index_axis(Axis(0), step);
            let c_prev = cache.c_prev.index_axis(Axis(0), step);
            let h_prev = cache.h_prev.index_axis(Axis(0), step);

            let d_o = &dh_cand * &tanh_c;
            let dc_total = &dc_cand + &(&dh_cand * &go) * &tanh_c.mapv(|v| 1.0 - v * v);
            let d_i = &dc_total * &gg;
            let d_g = &dc_total * &gi;
            let d_f = &dc_total * &c_prev;
            dc_next = &dc_total * &gf;

            let mut dpre = Array2::<f64>::zeros((batch, 4 * h));
            dpre.slice_mut(s![.., 0..h]).assign(&(&d_i * &gi.mapv(|v| v * (1.0 - v))));
            dpre.slice_mut(s![.., h..2 * h]).assign(&(&d_f * &gf.mapv(|v| v * (1.0 - v))));
            dpre
                .slice_mut(s![.., 2 * h..3 * h])
                .assign(&(&d_g * &gg.mapv(|v| 1.0 - v * v)));
            dpre
                .slice_mut(s![.., 3 * h..4 * h])
                .assign(&(&d_o * &go.mapv(|v| v * (1.0 - v))));

            let x_t = cache.x.index_axis(Axis(1), t);
            dw_ih += &x_t.t().dot(&dpre);
            dw_hh += &h_prev.t().dot(&dpre);
            db += &dpre.sum_axis(Axis(0));
            dx.index_axis_mut(Axis(1), t).assign(&dpre.dot(&w_ih.t()));
            dh_next = dpre.dot(&w_hh.t());
        }

        self.w_ih.add_grad(&dw_ih.into_dyn());
        self.w_hh.add_grad(&dw_hh.into_dyn());
        self.b.add_grad(&db.into_dyn());
        dx
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.w_ih, &mut self.w_hh, &mut self.b]
    }
}

/// Forward and reverse directions whose outputs are concatenated per frame,
/// giving `(B, T, 2H)`.
#[derive(Debug, Clone)]
pub struct BiLstmLayer {
    pub fwd: LstmDirection,
    pub bwd: LstmDirection,
}

impl BiLstmLayer {
    pub fn new(name: &str, input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        BiLstmLayer {
            fwd: LstmDirection::new(&format!("{name}.fwd"), input, hidden, false, rng),
            bwd: LstmDirection::new(&format!("{name}.bwd"), input, hidden, true, rng),
        }
    }

    pub fn out_dim(&self) -> usize {
        2 * self.fwd.hidden
    }

    pub fn forward(
        &self,
        x: &Array3<f64>,
        mask: &Array2<f64>,
    ) -> (Array3<f64>, (LstmCache, LstmCache)) {
        let (hf, cf) = self.fwd.forward(x, mask);
        let (hb, cb) = self.bwd.forward(x, mask);
        let out = ndarray::concatenate(Axis(2), &[hf.view(), hb.view()]).expect("concat");
        (out, (cf, cb))
    }

    pub fn backward(
        &mut self,
        cache: &(LstmCache, LstmCache),
        dy: &Array3<f64>,
    ) -> Array3<f64> {
        let h = self.fwd.hidden;
        let df = dy.slice(s![.., .., 0..h]).to_owned();
        let db = dy.slice(s![.., .., h..2 * h]).to_owned();
        let mut dx = self.fwd.backward(&cache.0, &df);
        dx += &self.bwd.backward(&cache.1, &db);
        dx
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.fwd.params_mut();
        v.extend(self.bwd.params_mut());
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck;
    use crate::seed::rng_for;
    use ndarray::ArrayD;

    fn full_mask(b: usize, t: usize) -> Array2<f64> {
        Array2::ones((b, t))
    }

    /// Masked quadratic loss over the layer output.
    fn masked_loss(y: &Array3<f64>, mask: &Array2<f64>) -> f64 {
        let m = mask.view().insert_axis(Axis(2));
        (y * &m.to_owned()).iter().map(|v| v * v).sum::<f64>() / 2.0
    }

    #[test]
    fn output_shape_and_determinism() {
        let mut rng = rng_for(5, "lstm", 0);
        let layer = BiLstmLayer::new("l0", 6, 4, &mut rng);
        let x = Array3::from_shape_simple_fn((2, 7, 6), || rng.random_range(-1.0..1.0));
        let mask = full_mask(2, 7);
        let (y1, _) = layer.forward(&x, &mask);
        let (y2, _) = layer.forward(&x, &mask);
        assert_eq!(y1.dim(), (2, 7, 8));
        assert_eq!(y1, y2);
    }

    #[test]
    fn padded_steps_produce_zero_state_and_do_not_leak() {
        let mut rng = rng_for(6, "lstm", 0);
        let layer = BiLstmLayer::new("l0", 3, 5, &mut rng);
        // One sequence of true length 4 padded to 9 with garbage values.
        let mut rng2 = rng_for(6, "x", 0);
        let mut x_short = Array3::from_shape_simple_fn((1, 4, 3), || rng2.random_range(-1.0..1.0));
        let mut x_long = Array3::from_elem((1, 9, 3), 99.0);
        x_long.slice_mut(s![.., 0..4, ..]).assign(&x_short);
        let mask_short = full_mask(1, 4);
        let mut mask_long = Array2::zeros((1, 9));
        mask_long.slice_mut(s![.., 0..4]).fill(1.0);

        let (y_short, _) = layer.forward(&x_short, &mask_short);
        let (y_long, _) = layer.forward(&x_long, &mask_long);
        // Bit-identical on the real frames, exactly zero on the padding.
        assert_eq!(y_long.slice(s![.., 0..4, ..]), y_short.slice(s![.., .., ..]));
        assert!(y_long.slice(s![.., 4.., ..]).iter().all(|&v| v == 0.0));

        // Changing padding contents changes nothing.
        x_short[(0, 0, 0)] += 0.0; // keep borrowck quiet about mutability
        x_long.slice_mut(s![.., 4.., ..]).fill(-3.0);
        let (y_long2, _) = layer.forward(&x_long, &mask_long);
        assert_eq!(y_long2, y_long);
        let _ = &mut x_short;
    }

    #[test]
    fn single_direction_gradients_match_finite_differences() {
        let mut rng = rng_for(7, "lstm", 0);
        let mut layer = LstmDirection::new("d", 3, 4, false, &mut rng);
        let x = Array3::from_shape_simple_fn((2, 5, 3), || rng.random_range(-1.0..1.0));
        let mut mask = full_mask(2, 5);
        mask[(1, 4)] = 0.0;
        mask[(1, 3)] = 0.0;

        let (y, cache) = layer.forward(&x, &mask);
        let m3 = mask.view().insert_axis(Axis(2)).to_owned();
        let dy = &y * &m3;
        let dx = layer.backward(&cache, &dy);

        let probe = layer.clone();
        for name in ["w_ih", "w_hh", "b"] {
            let (grad, value) = match name {
                "w_ih" => (layer.w_ih.grad.clone(), layer.w_ih.value.clone()),
                "w_hh" => (layer.w_hh.grad.clone(), layer.w_hh.value.clone()),
                _ => (layer.b.grad.clone(), layer.b.value.clone()),
            };
            let mut values = value.clone();
            gradcheck::check_param(
                &mut values,
                &grad,
                |v| {
                    let mut p = probe.clone();
                    match name {
                        "w_ih" => p.w_ih.value = v.clone(),
                        "w_hh" => p.w_hh.value = v.clone(),
                        _ => p.b.value = v.clone(),
                    }
                    let (y, _) = p.forward(&x, &mask);
                    masked_loss(&y, &mask)
                },
                1e-3,
            );
        }

        // Input gradient.
        let mut x_dyn = x.clone().into_dyn();
        gradcheck::check_param(
            &mut x_dyn,
            &dx.into_dyn(),
            |xv| {
                let x3 = xv.view().into_dimensionality::<ndarray::Ix3>().unwrap().to_owned();
                let (y, _) = probe.forward(&x3, &mask);
                masked_loss(&y, &mask)
            },
            1e-3,
        );
    }

    #[test]
    fn bidirectional_gradients_match_finite_differences() {
        let mut rng = rng_for(8, "lstm", 0);
        let mut layer = BiLstmLayer::new("l0", 2, 3, &mut rng);
        let x = Array3::from_shape_simple_fn((2, 4, 2), || rng.random_range(-1.0..1.0));
        let mut mask = full_mask(2, 4);
        mask[(0, 3)] = 0.0;

        let (y, cache) = layer.forward(&x, &mask);
        let m3 = mask.view().insert_axis(Axis(2)).to_owned();
        let dy = &y * &m3;
        layer.backward(&cache, &dy);

        let probe = layer.clone();
        let grad: ArrayD<f64> = layer.bwd.w_hh.grad.clone();
        let mut values = layer.bwd.w_hh.value.clone();
        gradcheck::check_param(
            &mut values,
            &grad,
            |v| {
                let mut p = probe.clone();
                p.bwd.w_hh.value = v.clone();
                let (y, _) = p.forward(&x, &mask);
                masked_loss(&y, &mask)
            },
            1e-3,
        );
    }

    #[test]
    fn reverse_direction_sees_the_future() {
        // With a reverse LSTM, changing the last frame changes the output
        // at the first frame; with a forward LSTM it cannot.
        let mut rng = rng_for(9, "lstm", 0);
        let fwd = LstmDirection::new("f", 2, 3, false, &mut rng);
        let bwd = LstmDirection::new("b", 2, 3, true, &mut rng);
        let mask = full_mask(1, 4);
        let mut x = Array3::from_shape_simple_fn((1, 4, 2), || rng.random_range(-1.0..1.0));
        let (yf1, _) = fwd.forward(&x, &mask);
        let (yb1, _) = bwd.forward(&x, &mask);
        x[(0, 3, 0)] += 1.0;
        let (yf2, _) = fwd.forward(&x, &mask);
        let (yb2, _) = bwd.forward(&x, &mask);
        assert_eq!(yf1.index_axis(Axis(1), 0), yf2.index_axis(Axis(1), 0));
        assert_ne!(yb1.index_axis(Axis(1), 0), yb2.index_axis(Axis(1), 0));
    }
}
