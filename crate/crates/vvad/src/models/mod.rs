//! Voice-activity classifiers and their training loop.
//!
//! Two models are provided: a bidirectional LSTM over aligned facial
//! landmarks ([`LandLstm`]) and a per-frame convolutional classifier over
//! flow images ([`OfConvNet`]) whose frame decisions are combined by
//! [`vote`]. Both train with Adam, seeded stratified validation splits and
//! early stopping, and serialize to a single checkpoint file.

mod checkpoint;
mod data;
mod landlstm;
mod ofconvnet;
mod train;

pub use checkpoint::{
    load_checkpoint, load_land_lstm, load_of_convnet, read_tensors, save_land_lstm,
    save_of_convnet, write_tensors, Checkpoint, CheckpointConfig,
};
pub use data::{load_flow_clips, load_landmark_clips, FlowClip, LandmarkClip};
pub use landlstm::{LandLstm, LandLstmConfig};
pub use ofconvnet::{Backbone, OfConvNet, OfConvNetConfig};
pub use train::{
    predict_land_lstm, predict_of_convnet, run_training, split_stratified, train_land_lstm,
    train_land_lstm_with_split, train_of_convnet, train_of_convnet_with_split, EpochStats,
    TrainConfig, TrainHistory, Trainable,
};

use crate::manifest::Label;
use crate::{Error, Result};
use std::path::Path;

/// How per-frame decisions are reduced to one clip decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum VoteScheme {
    /// Strict majority of frame labels, ties broken toward silent.
    #[default]
    Majority,
    /// Mean speaking probability thresholded at one half, ties toward
    /// silent.
    MeanScore,
}

/// One clip-level decision.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Prediction {
    pub clip_id: String,
    pub label: Label,
    /// Speaking probability in [0, 1].
    pub score: f64,
    /// Frame-wise labels; present only for the per-frame classifier.
    #[serde(skip_serializing_if = "Option::is_none")]
    #[serde(default)]
    pub per_frame: Option<Vec<Label>>,
}

/// Majority vote over frame labels; ties break toward silent.
pub fn vote(per_frame: &[Label]) -> Result<Label> {
    if per_frame.is_empty() {
        return Err(Error::EmptyInput("vote over zero frames"));
    }
    let speaking = per_frame.iter().filter(|&&l| l == Label::Speaking).count();
    if 2 * speaking > per_frame.len() {
        Ok(Label::Speaking)
    } else {
        Ok(Label::Silent)
    }
}

/// Mean-score vote: speaking iff the average speaking probability exceeds
/// one half.
pub fn vote_mean_score(speaking_probs: &[f64]) -> Result<Label> {
    if speaking_probs.is_empty() {
        return Err(Error::EmptyInput("vote over zero frames"));
    }
    let mean = speaking_probs.iter().sum::<f64>() / speaking_probs.len() as f64;
    if mean > 0.5 {
        Ok(Label::Speaking)
    } else {
        Ok(Label::Silent)
    }
}

/// Load the checkpoint at `path` and run it over every clip of `manifest`,
/// whichever architecture the file holds. Flow models reduce frame
/// decisions per `scheme`; landmark models ignore it.
pub fn predict_manifest(
    path: &Path,
    manifest: &Path,
    scheme: VoteScheme,
) -> Result<Vec<Prediction>> {
    let (meta, _) = load_checkpoint(path)?;
    match meta.config {
        CheckpointConfig::LandLstm(_) => {
            let (mut model, _) = load_land_lstm(path)?;
            let clips = load_landmark_clips(manifest)?;
            predict_land_lstm(&mut model, &clips)
        }
        CheckpointConfig::OfConvNet(cfg) => {
            let (mut model, _) = load_of_convnet(path)?;
            let clips = load_flow_clips(manifest, cfg.input_size)?;
            predict_of_convnet(&mut model, &clips, scheme)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::{Silent, Speaking};

    #[test]
    fn majority_and_tie_cases() {
        assert_eq!(vote(&[Speaking, Speaking, Silent]).unwrap(), Speaking);
        assert_eq!(vote(&[Silent; 5]).unwrap(), Silent);
        // Even split goes to silent.
        assert_eq!(vote(&[Speaking, Silent]).unwrap(), Silent);
        assert!(matches!(vote(&[]), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn all_three_frame_vectors_match_a_counting_oracle() {
        for bits in 0..8u32 {
            let frames: Vec<Label> = (0..3)
                .map(|i| if bits >> i & 1 == 1 { Speaking } else { Silent })
                .collect();
            let count = frames.iter().filter(|&&l| l == Speaking).count();
            let want = if count > 3 - count { Speaking } else { Silent };
            assert_eq!(vote(&frames).unwrap(), want, "bits {bits:03b}");
        }
    }

    #[test]
    fn vote_is_order_independent() {
        let frames = [Speaking, Silent, Speaking, Speaking, Silent];
        let mut reversed = frames;
        reversed.reverse();
        assert_eq!(vote(&frames).unwrap(), vote(&reversed).unwrap());
    }

    #[test]
    fn mean_score_thresholds_at_half() {
        assert_eq!(vote_mean_score(&[0.9, 0.8, 0.1]).unwrap(), Speaking);
        assert_eq!(vote_mean_score(&[0.5, 0.5]).unwrap(), Silent);
        assert_eq!(vote_mean_score(&[0.2]).unwrap(), Silent);
        assert!(vote_mean_score(&[]).is_err());
    }
}
