//! Training loop with early stopping, plus batch prediction.

use super::data::{FlowClip, LandmarkClip};
use super::{vote, vote_mean_score, LandLstm, OfConvNet, Prediction, VoteScheme};
use crate::manifest::Label;
use crate::nn::{cross_entropy, softmax, Adam};
use crate::seed::rng_for;
use crate::{Error, Result};
use ndarray::{Array2, Array3, ArrayD, Axis};
use rand::seq::SliceRandom;

/// Class index convention shared by both models.
pub(crate) fn label_index(label: Label) -> usize {
    match label {
        Label::Silent => 0,
        Label::Speaking => 1,
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    /// Fraction of the training set held out for validation.
    pub val_fraction: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub max_epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            val_fraction: 0.20,
            patience: 7,
            max_epochs: 100,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
        }
        if self.patience == 0 {
            return Err(Error::InvalidConfig("patience must be at least 1".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::InvalidConfig("max_epochs must be at least 1".into()));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "val_fraction must be in (0, 1), got {}",
                self.val_fraction
            )));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
    /// 1-based epoch whose weights the model carries; 0 when untrained.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// What the early-stopping loop needs from a model-plus-dataset pair.
pub trait Trainable {
    /// Run one epoch of optimization; returns the mean training loss.
    /// `epoch` is 1-based so implementations can derive per-epoch streams.
    fn train_epoch(&mut self, epoch: usize) -> Result<f64>;
    /// Mean validation loss of the current weights.
    fn validate(&mut self) -> Result<f64>;
    fn snapshot(&mut self) -> Vec<ArrayD<f64>>;
    fn restore(&mut self, snapshot: &[ArrayD<f64>]);
}

/// Early-stopped training: runs epochs until `patience` consecutive epochs
/// fail to improve the best validation loss (strictly), then restores the
/// best-validation weights.
pub fn run_training(
    t: &mut impl Trainable,
    patience: usize,
    max_epochs: usize,
) -> Result<TrainHistory> {
    let mut history = TrainHistory::default();
    let mut best_val = f64::INFINITY;
    let mut best_snapshot = t.snapshot();
    let mut since_best = 0usize;
    for epoch in 1..=max_epochs {
        let train_loss = t.train_epoch(epoch)?;
        let val_loss = t.validate()?;
        history.epochs.push(EpochStats { epoch, train_loss, val_loss });
        if val_loss < best_val {
            best_val = val_loss;
            best_snapshot = t.snapshot();
            history.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= patience {
                history.stopped_early = true;
                break;
            }
        }
    }
    t.restore(&best_snapshot);
    Ok(history)
}

/// Stratified train/validation index split: within each class the indices
/// are shuffled by a seeded stream and a `val_fraction` share (at least
/// one) goes to validation. Both returned lists are sorted.
pub fn split_stratified(
    labels: &[Label],
    val_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut by_class: Vec<(Label, Vec<usize>)> =
        vec![(Label::Silent, Vec::new()), (Label::Speaking, Vec::new())];
    for (i, &l) in labels.iter().enumerate() {
        by_class[label_index(l)].1.push(i);
    }
    if by_class.iter().any(|(_, idx)| idx.is_empty()) {
        return Err(Error::SingleClassDataset);
    }
    let mut train = Vec::new();
    let mut val = Vec::new();
    for (class, (label, mut idx)) in by_class.into_iter().enumerate() {
        if idx.len() < 2 {
            return Err(Error::TooFewSamples(format!(
                "class {label} has {} clip(s); need at least 2 to split off validation",
                idx.len()
            )));
        }
        let mut rng = rng_for(seed, "val-split", class as u64);
        idx.shuffle(&mut rng);
        let n_val = ((idx.len() as f64 * val_fraction).floor() as usize)
            .max(1)
            .min(idx.len() - 1);
        val.extend_from_slice(&idx[..n_val]);
        train.extend_from_slice(&idx[n_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    Ok((train, val))
}

/// Pad a set of landmark clips into `(x, mask, labels)` batch tensors.
fn land_batch(
    data: &[LandmarkClip],
    idx: &[usize],
) -> (Array3<f64>, Array2<f64>, Vec<usize>) {
    let t_max = idx.iter().map(|&i| data[i].frames.nrows()).max().unwrap_or(0);
    let dim = data[idx[0]].frames.ncols();
    let mut x = Array3::zeros((idx.len(), t_max, dim));
    let mut mask = Array2::zeros((idx.len(), t_max));
    let mut labels = Vec::with_capacity(idx.len());
    for (row, &i) in idx.iter().enumerate() {
        let frames = &data[i].frames;
        let t = frames.nrows();
        x.slice_mut(ndarray::s![row, 0..t, ..]).assign(frames);
        mask.slice_mut(ndarray::s![row, 0..t]).fill(1.0);
        labels.push(label_index(data[i].label));
    }
    (x, mask, labels)
}

struct LandTrainer<'a> {
    model: &'a mut LandLstm,
    opt: Adam,
    data: &'a [LandmarkClip],
    train_idx: Vec<usize>,
    val_idx: Vec<usize>,
    batch_size: usize,
    seed: u64,
}

impl Trainable for LandTrainer<'_> {
    fn train_epoch(&mut self, epoch: usize) -> Result<f64> {
        self.model.set_training(true);
        let mut rng = rng_for(self.seed, "epoch", epoch as u64);
        let mut order = self.train_idx.clone();
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(self.batch_size) {
            let (x, mask, labels) = land_batch(self.data, chunk);
            let (logits, cache) = self.model.forward(&x, &mask, Some(&mut rng))?;
            let (loss, _, dlogits) = cross_entropy(&logits, &labels);
            self.model.backward(&cache, &dlogits);
            self.opt.step(&mut self.model.params_mut());
            total += loss * chunk.len() as f64;
        }
        Ok(total / order.len() as f64)
    }

    fn validate(&mut self) -> Result<f64> {
        self.model.set_training(false);
        let mut total = 0.0;
        for chunk in self.val_idx.chunks(self.batch_size) {
            let (x, mask, labels) = land_batch(self.data, chunk);
            let (logits, _) = self.model.forward(&x, &mask, None)?;
            let (loss, _, _) = cross_entropy(&logits, &labels);
            total += loss * chunk.len() as f64;
        }
        Ok(total / self.val_idx.len() as f64)
    }

    fn snapshot(&mut self) -> Vec<ArrayD<f64>> {
        self.model.params_mut().iter().map(|p| p.value.clone()).collect()
    }

    fn restore(&mut self, snapshot: &[ArrayD<f64>]) {
        for (p, s) in self.model.params_mut().into_iter().zip(snapshot) {
            p.value = s.clone();
        }
    }
}

fn check_two_classes<T>(clips: &[T], label_of: impl Fn(&T) -> Label) -> Result<()> {
    if clips.is_empty() {
        return Err(Error::EmptyInput("empty training set"));
    }
    let speaking = clips.iter().filter(|c| label_of(c) == Label::Speaking).count();
    if speaking == 0 || speaking == clips.len() {
        return Err(Error::SingleClassDataset);
    }
    Ok(())
}

/// Reject overlapping, out-of-range, or empty train/validation index sets.
fn check_split(n: usize, train_idx: &[usize], val_idx: &[usize]) -> Result<()> {
    if train_idx.is_empty() {
        return Err(Error::EmptyInput("empty training split"));
    }
    if val_idx.is_empty() {
        return Err(Error::EmptyInput("empty validation split"));
    }
    let mut seen = vec![false; n];
    for &i in train_idx.iter().chain(val_idx) {
        if i >= n {
            return Err(Error::InvalidConfig(format!(
                "split index {i} out of range for {n} clips"
            )));
        }
        if seen[i] {
            return Err(Error::InvalidConfig(format!("split index {i} appears twice")));
        }
        seen[i] = true;
    }
    Ok(())
}

fn check_train_side_has_two_classes(labels: &[Label], train_idx: &[usize]) -> Result<()> {
    let speaking = train_idx.iter().filter(|&&i| labels[i] == Label::Speaking).count();
    if speaking == 0 || speaking == train_idx.len() {
        return Err(Error::SingleClassDataset);
    }
    Ok(())
}

/// Train the landmark classifier on labeled clips.
pub fn train_land_lstm(
    model: &mut LandLstm,
    clips: &[LandmarkClip],
    cfg: &TrainConfig,
) -> Result<TrainHistory> {
    cfg.validate()?;
    check_two_classes(clips, |c| c.label)?;
    let labels: Vec<Label> = clips.iter().map(|c| c.label).collect();
    let (train_idx, val_idx) = split_stratified(&labels, cfg.val_fraction, cfg.seed)?;
    train_land_lstm_with_split(model, clips, &train_idx, &val_idx, cfg)
}

/// Train the landmark classifier on a caller-chosen train/validation split.
/// This keeps the split fixed across runs that differ only in labels, which
/// the label-noise study depends on.
pub fn train_land_lstm_with_split(
    model: &mut LandLstm,
    clips: &[LandmarkClip],
    train_idx: &[usize],
    val_idx: &[usize],
    cfg: &TrainConfig,
) -> Result<TrainHistory> {
    cfg.validate()?;
    check_split(clips.len(), train_idx, val_idx)?;
    let labels: Vec<Label> = clips.iter().map(|c| c.label).collect();
    check_train_side_has_two_classes(&labels, train_idx)?;
    for c in clips {
        if c.frames.ncols() != model.cfg.input_dim {
            return Err(Error::ShapeMismatch(format!(
                "clip {} has feature dim {}, model expects {}",
                c.id,
                c.frames.ncols(),
                model.cfg.input_dim
            )));
        }
        if c.frames.nrows() == 0 {
            return Err(Error::EmptyInput("clip with zero frames"));
        }
    }
    let mut trainer = LandTrainer {
        model,
        opt: Adam::new(cfg.learning_rate),
        data: clips,
        train_idx: train_idx.to_vec(),
        val_idx: val_idx.to_vec(),
        batch_size: cfg.batch_size,
        seed: cfg.seed,
    };
    run_training(&mut trainer, cfg.patience, cfg.max_epochs)
}

/// Eval-mode clip predictions from the landmark classifier.
pub fn predict_land_lstm(
    model: &mut LandLstm,
    clips: &[LandmarkClip],
) -> Result<Vec<Prediction>> {
    model.set_training(false);
    let mut out = Vec::with_capacity(clips.len());
    let idx: Vec<usize> = (0..clips.len()).collect();
    for chunk in idx.chunks(64) {
        let (x, mask, _) = land_batch(clips, chunk);
        let (logits, _) = model.forward(&x, &mask, None)?;
        let probs = softmax(&logits);
        for (row, &i) in chunk.iter().enumerate() {
            let score = probs[(row, 1)];
            let label = if score > 0.5 { Label::Speaking } else { Label::Silent };
            out.push(Prediction {
                clip_id: clips[i].id.clone(),
                label,
                score,
                per_frame: None,
            });
        }
    }
    Ok(out)
}

/// Frame-level sample index for the flow classifier.
struct FrameRef {
    clip: usize,
    frame: usize,
    label: usize,
}

struct OfTrainer<'a> {
    model: &'a mut OfConvNet,
    opt: Adam,
    data: &'a [FlowClip],
    train_frames: Vec<FrameRef>,
    val_frames: Vec<FrameRef>,
    batch_size: usize,
    seed: u64,
}

impl OfTrainer<'_> {
    fn batch(&self, frames: &[&FrameRef]) -> Result<(ndarray::Array4<f64>, Vec<usize>)> {
        let images: Vec<crate::flow::FlowImage> = frames
            .iter()
            .map(|f| self.data[f.clip].images[f.frame].clone())
            .collect();
        let x = self.model.to_input(&images)?;
        Ok((x, frames.iter().map(|f| f.label).collect()))
    }
}

impl Trainable for OfTrainer<'_> {
    fn train_epoch(&mut self, epoch: usize) -> Result<f64> {
        let mut rng = rng_for(self.seed, "epoch", epoch as u64);
        let mut order: Vec<usize> = (0..self.train_frames.len()).collect();
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(self.batch_size) {
            let refs: Vec<&FrameRef> = chunk.iter().map(|&i| &self.train_frames[i]).collect();
            let (x, labels) = self.batch(&refs)?;
            let (logits, cache) = self.model.forward(&x)?;
            let (loss, _, dlogits) = cross_entropy(&logits, &labels);
            self.model.backward(&cache, &dlogits);
            self.opt.step(&mut self.model.params_mut());
            total += loss * chunk.len() as f64;
        }
        Ok(total / order.len() as f64)
    }

    fn validate(&mut self) -> Result<f64> {
        let mut total = 0.0;
        let refs: Vec<&FrameRef> = self.val_frames.iter().collect();
        for chunk in refs.chunks(self.batch_size) {
            let (x, labels) = self.batch(chunk)?;
            let (logits, _) = self.model.forward(&x)?;
            let (loss, _, _) = cross_entropy(&logits, &labels);
            total += loss * chunk.len() as f64;
        }
        Ok(total / self.val_frames.len() as f64)
    }

    fn snapshot(&mut self) -> Vec<ArrayD<f64>> {
        self.model.params_mut().iter().map(|p| p.value.clone()).collect()
    }

    fn restore(&mut self, snapshot: &[ArrayD<f64>]) {
        for (p, s) in self.model.params_mut().into_iter().zip(snapshot) {
            p.value = s.clone();
        }
    }
}

/// Train the flow classifier. The loss is per frame: every frame of a clip
/// carries the clip label, and voting happens only at inference.
pub fn train_of_convnet(
    model: &mut OfConvNet,
    clips: &[FlowClip],
    cfg: &TrainConfig,
) -> Result<TrainHistory> {
    cfg.validate()?;
    check_two_classes(clips, |c| c.label)?;
    // The split is per clip so a clip's frames never straddle train/val.
    let labels: Vec<Label> = clips.iter().map(|c| c.label).collect();
    let (train_idx, val_idx) = split_stratified(&labels, cfg.val_fraction, cfg.seed)?;
    train_of_convnet_with_split(model, clips, &train_idx, &val_idx, cfg)
}

/// Train the flow classifier on a caller-chosen per-clip train/validation
/// split.
pub fn train_of_convnet_with_split(
    model: &mut OfConvNet,
    clips: &[FlowClip],
    train_idx: &[usize],
    val_idx: &[usize],
    cfg: &TrainConfig,
) -> Result<TrainHistory> {
    cfg.validate()?;
    check_split(clips.len(), train_idx, val_idx)?;
    let labels: Vec<Label> = clips.iter().map(|c| c.label).collect();
    check_train_side_has_two_classes(&labels, train_idx)?;
    if clips.iter().any(|c| c.images.is_empty()) {
        return Err(Error::EmptyInput("clip with zero flow frames"));
    }
    let frame_refs = |idx: &[usize]| {
        idx.iter()
            .flat_map(|&ci| {
                (0..clips[ci].images.len()).map(move |fi| FrameRef {
                    clip: ci,
                    frame: fi,
                    label: label_index(clips[ci].label),
                })
            })
            .collect::<Vec<_>>()
    };
    let mut trainer = OfTrainer {
        model,
        opt: Adam::new(cfg.learning_rate),
        data: clips,
        train_frames: frame_refs(train_idx),
        val_frames: frame_refs(val_idx),
        batch_size: cfg.batch_size,
        seed: cfg.seed,
    };
    run_training(&mut trainer, cfg.patience, cfg.max_epochs)
}

/// Per-clip predictions from the flow classifier: per-frame decisions
/// reduced by the chosen vote.
pub fn predict_of_convnet(
    model: &mut OfConvNet,
    clips: &[FlowClip],
    scheme: VoteScheme,
) -> Result<Vec<Prediction>> {
    let mut out = Vec::with_capacity(clips.len());
    for clip in clips {
        let x = model.to_input(&clip.images)?;
        let (logits, _) = model.forward(&x)?;
        let probs = softmax(&logits);
        let speak: Vec<f64> = probs.axis_iter(Axis(0)).map(|r| r[1]).collect();
        let frame_labels: Vec<Label> = speak
            .iter()
            .map(|&p| if p > 0.5 { Label::Speaking } else { Label::Silent })
            .collect();
        let label = match scheme {
            VoteScheme::Majority => vote(&frame_labels)?,
            VoteScheme::MeanScore => vote_mean_score(&speak)?,
        };
        let score = speak.iter().sum::<f64>() / speak.len() as f64;
        out.push(Prediction {
            clip_id: clip.id.clone(),
            label,
            score,
            per_frame: Some(frame_labels),
        });
    }
    Ok(out)
}
