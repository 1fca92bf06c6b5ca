//! Metrics and evaluation protocols: holdout on manually verified clips,
//! stratified k-fold cross-validation, cross-dataset transfer and the
//! paired label-noise study.

use crate::manifest::{Label, Provenance};
use crate::models::{
    predict_land_lstm, predict_of_convnet, split_stratified, train_land_lstm,
    train_land_lstm_with_split, train_of_convnet, train_of_convnet_with_split, FlowClip, LandLstm,
    LandLstmConfig, LandmarkClip, OfConvNet, OfConvNetConfig, Prediction, TrainConfig, VoteScheme,
};
use crate::seed::{derive_seed, rng_for};
use crate::synth::{draw_flip_mask, NoiseSpec};
use crate::{Error, Result};
use rand::seq::SliceRandom;
use rayon::prelude::*;

/// Clip-level confusion counts. Speaking is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub struct ConfusionCounts {
    /// Speaking clips predicted speaking.
    pub tp: usize,
    /// Speaking clips predicted silent.
    #[serde(rename = "fn")]
    pub fn_: usize,
    /// Silent clips predicted silent.
    pub tn: usize,
    /// Silent clips predicted speaking.
    pub fp: usize,
}

impl ConfusionCounts {
    /// Tally `(truth, predicted)` label pairs.
    pub fn from_pairs<I: IntoIterator<Item = (Label, Label)>>(pairs: I) -> Self {
        let mut c = ConfusionCounts::default();
        for (truth, predicted) in pairs {
            match (truth, predicted) {
                (Label::Speaking, Label::Speaking) => c.tp += 1,
                (Label::Speaking, Label::Silent) => c.fn_ += 1,
                (Label::Silent, Label::Silent) => c.tn += 1,
                (Label::Silent, Label::Speaking) => c.fp += 1,
            }
        }
        c
    }

    /// Number of speaking clips.
    pub fn speaking(&self) -> usize {
        self.tp + self.fn_
    }

    /// Number of silent clips.
    pub fn silent(&self) -> usize {
        self.tn + self.fp
    }

    pub fn total(&self) -> usize {
        self.speaking() + self.silent()
    }

    pub fn add(&mut self, other: &ConfusionCounts) {
        self.tp += other.tp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
        self.fp += other.fp;
    }
}

/// One value per headline metric; used for fold means and deviations.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MetricTriple {
    pub tpr: f64,
    pub tnr: f64,
    pub acc: f64,
}

/// Evaluation outcome. The headline `tpr`, `tnr` and `acc` always recompute
/// exactly from `counts`; for folded runs `counts` pools all folds while
/// `mean`, `sigma` and `per_fold` carry the per-fold statistics.
#[derive(Debug, Clone, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct EvalReport {
    pub counts: ConfusionCounts,
    pub tpr: f64,
    pub tnr: f64,
    pub acc: f64,
    /// Metric means over folds; sample standard deviation in `sigma`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<MetricTriple>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<MetricTriple>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_fold: Option<Vec<EvalReport>>,
    /// Training-domain name for cross-dataset runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    /// Test-domain name for cross-dataset runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
}

/// Rates from confusion counts: `tpr = tp / (tp + fn)`, `tnr = tn / (tn +
/// fp)` and `acc = (tp + tn) / total`. Both classes must be represented.
pub fn metrics(counts: &ConfusionCounts) -> Result<EvalReport> {
    if counts.speaking() == 0 {
        return Err(Error::EmptyClass("speaking"));
    }
    if counts.silent() == 0 {
        return Err(Error::EmptyClass("silent"));
    }
    Ok(EvalReport {
        counts: *counts,
        tpr: counts.tp as f64 / counts.speaking() as f64,
        tnr: counts.tn as f64 / counts.silent() as f64,
        acc: (counts.tp + counts.tn) as f64 / counts.total() as f64,
        ..EvalReport::default()
    })
}

/// Score positional predictions against reference labels.
pub fn evaluate_predictions(truth: &[Label], preds: &[Prediction]) -> Result<EvalReport> {
    if truth.len() != preds.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} reference labels but {} predictions",
            truth.len(),
            preds.len()
        )));
    }
    metrics(&ConfusionCounts::from_pairs(
        truth.iter().copied().zip(preds.iter().map(|p| p.label)),
    ))
}

/// Stratified k-fold splits as `(train, test)` index lists. Within each
/// class a seeded shuffle assigns members to folds round-robin, so fold
/// sizes differ by at most one per class and depend only on the class
/// counts, not on the seed. Both lists come back sorted.
pub fn kfold(labels: &[Label], k: usize, seed: u64) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if k < 2 {
        return Err(Error::InvalidConfig(format!("need at least 2 folds, got {k}")));
    }
    let mut fold_of = vec![0usize; labels.len()];
    for (class_idx, class) in [Label::Silent, Label::Speaking].into_iter().enumerate() {
        let mut members: Vec<usize> = labels
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == class)
            .map(|(i, _)| i)
            .collect();
        if members.len() < k {
            return Err(Error::TooFewSamples(format!(
                "class {class} has {} clip(s); need at least {k} for {k} folds",
                members.len()
            )));
        }
        let mut rng = rng_for(seed, "fold-split", class_idx as u64);
        members.shuffle(&mut rng);
        for (pos, &i) in members.iter().enumerate() {
            fold_of[i] = pos % k;
        }
    }
    Ok((0..k)
        .map(|f| {
            let mut train = Vec::new();
            let mut test = Vec::new();
            for (i, &fi) in fold_of.iter().enumerate() {
                if fi == f {
                    test.push(i);
                } else {
                    train.push(i);
                }
            }
            (train, test)
        })
        .collect())
}

/// Pool per-fold reports into one: counts sum over folds and the headline
/// metrics recompute from the pooled counts, while `mean` and `sigma` hold
/// the per-fold mean and sample standard deviation. Identical folds give a
/// sigma of exactly zero.
pub fn aggregate_folds(folds: &[EvalReport]) -> Result<EvalReport> {
    if folds.is_empty() {
        return Err(Error::EmptyInput("fold reports"));
    }
    let mut pooled = ConfusionCounts::default();
    for f in folds {
        pooled.add(&f.counts);
    }
    let spread = |vals: Vec<f64>| {
        if vals.iter().all(|&v| v == vals[0]) {
            return (vals[0], 0.0);
        }
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var =
            vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (vals.len() - 1) as f64;
        (mean, var.sqrt())
    };
    let (tpr_mean, tpr_sigma) = spread(folds.iter().map(|r| r.tpr).collect());
    let (tnr_mean, tnr_sigma) = spread(folds.iter().map(|r| r.tnr).collect());
    let (acc_mean, acc_sigma) = spread(folds.iter().map(|r| r.acc).collect());
    let mut report = metrics(&pooled)?;
    report.mean = Some(MetricTriple { tpr: tpr_mean, tnr: tnr_mean, acc: acc_mean });
    report.sigma = Some(MetricTriple { tpr: tpr_sigma, tnr: tnr_sigma, acc: acc_sigma });
    report.per_fold = Some(folds.to_vec());
    Ok(report)
}

/// Anything that turns clips into clip-level predictions.
pub trait Predictor {
    type Clip;
    fn predict(&mut self, clips: &[Self::Clip]) -> Result<Vec<Prediction>>;
}

impl Predictor for LandLstm {
    type Clip = LandmarkClip;
    fn predict(&mut self, clips: &[LandmarkClip]) -> Result<Vec<Prediction>> {
        predict_land_lstm(self, clips)
    }
}

impl Predictor for OfConvNet {
    type Clip = FlowClip;
    fn predict(&mut self, clips: &[FlowClip]) -> Result<Vec<Prediction>> {
        predict_of_convnet(self, clips, VoteScheme::default())
    }
}

/// Flow model paired with an explicit frame-vote scheme.
pub struct OfPredictor<'a> {
    pub model: &'a mut OfConvNet,
    pub scheme: VoteScheme,
}

impl Predictor for OfPredictor<'_> {
    type Clip = FlowClip;
    fn predict(&mut self, clips: &[FlowClip]) -> Result<Vec<Prediction>> {
        predict_of_convnet(self.model, clips, self.scheme)
    }
}

/// Test-set access shared by the two clip flavors.
pub trait Labeled {
    fn id(&self) -> &str;
    fn truth(&self) -> Label;
    fn provenance(&self) -> Provenance;
}

impl Labeled for LandmarkClip {
    fn id(&self) -> &str {
        &self.id
    }
    fn truth(&self) -> Label {
        self.label
    }
    fn provenance(&self) -> Provenance {
        self.provenance
    }
}

impl Labeled for FlowClip {
    fn id(&self) -> &str {
        &self.id
    }
    fn truth(&self) -> Label {
        self.label
    }
    fn provenance(&self) -> Provenance {
        self.provenance
    }
}

/// Evaluate a model on a manually verified test set. Clips whose labels
/// came from the automatic pipeline (or from noise injection) are refused:
/// a noisy test set would corrupt the measurement itself.
pub fn holdout_eval<P>(model: &mut P, test: &[P::Clip]) -> Result<EvalReport>
where
    P: Predictor,
    P::Clip: Labeled,
{
    if test.is_empty() {
        return Err(Error::TooFewSamples("holdout test set is empty".into()));
    }
    for clip in test {
        if clip.provenance() == Provenance::Auto {
            return Err(Error::ProvenanceViolation(format!(
                "test clip {} carries an automatically produced label",
                clip.id()
            )));
        }
    }
    let truth: Vec<Label> = test.iter().map(|c| c.truth()).collect();
    let preds = model.predict(test)?;
    evaluate_predictions(&truth, &preds)
}

/// Holdout evaluation across domains: identical to [`holdout_eval`] except
/// that the report records where the model came from and what it was
/// tested on.
pub fn cross_dataset<P>(
    model: &mut P,
    test: &[P::Clip],
    source: &str,
    target: &str,
) -> Result<EvalReport>
where
    P: Predictor,
    P::Clip: Labeled,
{
    let mut report = holdout_eval(model, test)?;
    report.source = Some(source.to_string());
    report.target = Some(target.to_string());
    Ok(report)
}

/// One constant-state window of frames; `end` is exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct StateWindow {
    pub start: usize,
    pub end: usize,
    pub label: Label,
}

/// All non-overlapping `length`-frame windows in which the speaking state
/// is constant, tiling each maximal constant run from its start. A run of
/// `r` frames yields `floor(r / length)` windows.
///
/// Panics if `length` is zero.
pub fn constant_state_subsequences(frames: &[Label], length: usize) -> Vec<StateWindow> {
    assert!(length > 0, "window length must be positive");
    let mut out = Vec::new();
    let mut start = 0;
    while start < frames.len() {
        let label = frames[start];
        let mut end = start + 1;
        while end < frames.len() && frames[end] == label {
            end += 1;
        }
        let mut w = start;
        while w + length <= end {
            out.push(StateWindow { start: w, end: w + length, label });
            w += length;
        }
        start = end;
    }
    out
}

/// Stratified k-fold cross-validation of the landmark model. Every fold
/// trains a fresh model (with a fold-derived init seed) on the clips
/// outside the fold and is scored on the fold itself; folds run in
/// parallel and aggregate per [`aggregate_folds`]. Unlike holdout, fold
/// scoring accepts auto-labeled clips: cross-validation is how
/// automatically annotated datasets are measured in the first place.
pub fn cross_validate_land(
    clips: &[LandmarkClip],
    k: usize,
    model_cfg: &LandLstmConfig,
    train_cfg: &TrainConfig,
) -> Result<EvalReport> {
    train_cfg.validate()?;
    let labels: Vec<Label> = clips.iter().map(|c| c.label).collect();
    let folds = kfold(&labels, k, train_cfg.seed)?;
    let reports = folds
        .par_iter()
        .enumerate()
        .map(|(fi, (train_ids, test_ids))| {
            let train_clips: Vec<LandmarkClip> =
                train_ids.iter().map(|&i| clips[i].clone()).collect();
            let test_clips: Vec<LandmarkClip> =
                test_ids.iter().map(|&i| clips[i].clone()).collect();
            let seed = derive_seed(train_cfg.seed, "fold-model", fi as u64);
            let mut model = LandLstm::new(model_cfg, seed)?;
            train_land_lstm(&mut model, &train_clips, train_cfg)?;
            let truth: Vec<Label> = test_clips.iter().map(|c| c.label).collect();
            let preds = predict_land_lstm(&mut model, &test_clips)?;
            evaluate_predictions(&truth, &preds)
        })
        .collect::<Result<Vec<EvalReport>>>()?;
    aggregate_folds(&reports)
}

/// Stratified k-fold cross-validation of the flow model; see
/// [`cross_validate_land`].
pub fn cross_validate_of(
    clips: &[FlowClip],
    k: usize,
    model_cfg: &OfConvNetConfig,
    train_cfg: &TrainConfig,
    scheme: VoteScheme,
) -> Result<EvalReport> {
    train_cfg.validate()?;
    let labels: Vec<Label> = clips.iter().map(|c| c.label).collect();
    let folds = kfold(&labels, k, train_cfg.seed)?;
    let reports = folds
        .par_iter()
        .enumerate()
        .map(|(fi, (train_ids, test_ids))| {
            let train_clips: Vec<FlowClip> =
                train_ids.iter().map(|&i| clips[i].clone()).collect();
            let test_clips: Vec<FlowClip> =
                test_ids.iter().map(|&i| clips[i].clone()).collect();
            let seed = derive_seed(train_cfg.seed, "fold-model", fi as u64);
            let mut model = OfConvNet::new(model_cfg, seed)?;
            train_of_convnet(&mut model, &train_clips, train_cfg)?;
            let truth: Vec<Label> = test_clips.iter().map(|c| c.label).collect();
            let preds = predict_of_convnet(&mut model, &test_clips, scheme)?;
            evaluate_predictions(&truth, &preds)
        })
        .collect::<Result<Vec<EvalReport>>>()?;
    aggregate_folds(&reports)
}

/// Outcome of the paired label-noise experiment.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NoiseStudyReport {
    pub clean: EvalReport,
    pub noisy: EvalReport,
    /// `clean.acc - noisy.acc`; positive when noise costs accuracy.
    pub accuracy_gap: f64,
}

/// Train the landmark model twice, once on the clean labels and once with
/// labels flipped per `noise`, and evaluate both on the same clean test
/// set. Both runs share the model init seed and the train/validation
/// split, so the reports differ only through the injected noise; at zero
/// flip rates they are identical.
pub fn noise_study_land(
    train: &[LandmarkClip],
    test: &[LandmarkClip],
    noise: &NoiseSpec,
    model_cfg: &LandLstmConfig,
    train_cfg: &TrainConfig,
) -> Result<NoiseStudyReport> {
    train_cfg.validate()?;
    let labels: Vec<Label> = train.iter().map(|c| c.label).collect();
    let (tr, va) = split_stratified(&labels, train_cfg.val_fraction, train_cfg.seed)?;

    let mut clean_model = LandLstm::new(model_cfg, train_cfg.seed)?;
    train_land_lstm_with_split(&mut clean_model, train, &tr, &va, train_cfg)?;
    let clean = holdout_eval(&mut clean_model, test)?;

    let mask = draw_flip_mask(&labels, noise)?;
    let mut noisy_train = train.to_vec();
    for (clip, &flip) in noisy_train.iter_mut().zip(&mask) {
        if flip {
            clip.label = clip.label.flipped();
        }
        clip.provenance = Provenance::Auto;
    }
    let mut noisy_model = LandLstm::new(model_cfg, train_cfg.seed)?;
    train_land_lstm_with_split(&mut noisy_model, &noisy_train, &tr, &va, train_cfg)?;
    let noisy = holdout_eval(&mut noisy_model, test)?;

    let accuracy_gap = clean.acc - noisy.acc;
    Ok(NoiseStudyReport { clean, noisy, accuracy_gap })
}

/// Label-noise study for the flow model; see [`noise_study_land`]. Frame
/// votes use the majority scheme.
pub fn noise_study_of(
    train: &[FlowClip],
    test: &[FlowClip],
    noise: &NoiseSpec,
    model_cfg: &OfConvNetConfig,
    train_cfg: &TrainConfig,
) -> Result<NoiseStudyReport> {
    train_cfg.validate()?;
    let labels: Vec<Label> = train.iter().map(|c| c.label).collect();
    let (tr, va) = split_stratified(&labels, train_cfg.val_fraction, train_cfg.seed)?;

    let mut clean_model = OfConvNet::new(model_cfg, train_cfg.seed)?;
    train_of_convnet_with_split(&mut clean_model, train, &tr, &va, train_cfg)?;
    let clean = holdout_eval(&mut clean_model, test)?;

    let mask = draw_flip_mask(&labels, noise)?;
    let mut noisy_train = train.to_vec();
    for (clip, &flip) in noisy_train.iter_mut().zip(&mask) {
        if flip {
            clip.label = clip.label.flipped();
        }
        clip.provenance = Provenance::Auto;
    }
    let mut noisy_model = OfConvNet::new(model_cfg, train_cfg.seed)?;
    train_of_convnet_with_split(&mut noisy_model, &noisy_train, &tr, &va, train_cfg)?;
    let noisy = holdout_eval(&mut noisy_model, test)?;

    let accuracy_gap = clean.acc - noisy.acc;
    Ok(NoiseStudyReport { clean, noisy, accuracy_gap })
}

/// Render named reports as a CSV table with one row per report. Folded
/// reports print their fold mean and sigma; plain reports print their
/// point metrics and leave the sigma columns empty.
pub fn report_csv(rows: &[(&str, &EvalReport)]) -> String {
    let mut out = String::from("name,tpr,tpr_sigma,tnr,tnr_sigma,acc,acc_sigma\n");
    for (name, r) in rows {
        let line = match (&r.mean, &r.sigma) {
            (Some(m), Some(s)) => format!(
                "{name},{},{},{},{},{},{}\n",
                m.tpr, s.tpr, m.tnr, s.tnr, m.acc, s.acc
            ),
            _ => format!("{name},{},,{},,{},\n", r.tpr, r.tnr, r.acc),
        };
        out.push_str(&line);
    }
    out
}
