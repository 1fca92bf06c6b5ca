//! Per-frame convolutional classifier over flow images.

use crate::flow::FlowImage;
use crate::nn::{relu, relu_backward, Conv2d, GlobalAvgPool, Linear, MaxPool2d, Param};
use crate::seed::rng_for;
use crate::{Error, Result};
use ndarray::{Array2, Array4};
use std::collections::BTreeMap;
use std::path::PathBuf;

/// Feature extractor choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backbone {
    /// VGG-16 convolutional blocks initialized from externally provided
    /// weights (see [`OfConvNet::new`]); only the last `finetune_blocks`
    /// blocks and the head receive gradients.
    Vgg16Pretrained,
    /// Small self-contained four-block network trained from scratch.
    TinyCnn,
}

impl Backbone {
    pub fn block_count(self) -> usize {
        match self {
            Backbone::Vgg16Pretrained => 5,
            Backbone::TinyCnn => 4,
        }
    }

    /// Per block: (in_channels, out_channels) of each convolution.
    fn table(self) -> Vec<Vec<(usize, usize)>> {
        match self {
            Backbone::Vgg16Pretrained => vec![
                vec![(3, 64), (64, 64)],
                vec![(64, 128), (128, 128)],
                vec![(128, 256), (256, 256), (256, 256)],
                vec![(256, 512), (512, 512), (512, 512)],
                vec![(512, 512), (512, 512), (512, 512)],
            ],
            Backbone::TinyCnn => {
                vec![vec![(3, 8)], vec![(8, 16)], vec![(16, 32)], vec![(32, 64)]]
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OfConvNetConfig {
    pub backbone: Backbone,
    /// Number of trailing convolutional blocks that stay trainable.
    pub finetune_blocks: usize,
    /// Square side the flow images are resized to.
    pub input_size: usize,
    pub classes: usize,
}

impl Default for OfConvNetConfig {
    fn default() -> Self {
        OfConvNetConfig {
            backbone: Backbone::TinyCnn,
            finetune_blocks: 4,
            input_size: 64,
            classes: 2,
        }
    }
}

impl OfConvNetConfig {
    pub fn validate(&self) -> Result<()> {
        let blocks = self.backbone.block_count();
        if self.finetune_blocks > blocks {
            return Err(Error::InvalidConfig(format!(
                "finetune_blocks {} exceeds the {blocks}-block backbone",
                self.finetune_blocks
            )));
        }
        if self.classes != 2 {
            return Err(Error::InvalidConfig("classifier is two-class".into()));
        }
        // Each block halves the resolution once.
        if self.input_size < 1 << blocks {
            return Err(Error::InvalidConfig(format!(
                "input_size {} too small for {blocks} pooling stages",
                self.input_size
            )));
        }
        Ok(())
    }
}

/// One backbone stage: convolutions with rectification, then 2x2 pooling.
struct ConvBlock {
    convs: Vec<Conv2d>,
}

/// Convolutional backbone, global average pooling and a linear class head.
pub struct OfConvNet {
    pub cfg: OfConvNetConfig,
    blocks: Vec<ConvBlock>,
    pool: MaxPool2d,
    gap: GlobalAvgPool,
    pub head: Linear,
}

/// Forward activations for the backward pass.
pub struct OfForward {
    conv_inputs: Vec<Vec<Array4<f64>>>,
    relu_masks: Vec<Vec<Array4<f64>>>,
    pool_args: Vec<Array4<usize>>,
    pool_in_hw: Vec<(usize, usize)>,
    gap_in_hw: (usize, usize),
    head_input: Array2<f64>,
}

/// File the pretrained backbone weights are read from, inside the
/// directory named by the `VVAD_CACHE` environment variable.
pub const VGG16_WEIGHTS_FILE: &str = "vgg16_backbone.tnsr";

impl OfConvNet {
    /// Build the network. `vgg16-pretrained` requires the backbone weights
    /// at `$VVAD_CACHE/vgg16_backbone.tnsr` (named-tensor format, see
    /// [`super::write_tensors`]); without them construction fails with
    /// [`Error::BackboneUnavailable`] and the caller should fall back to
    /// `tiny-cnn`.
    pub fn new(cfg: &OfConvNetConfig, seed: u64) -> Result<Self> {
        let mut model = Self::new_unloaded(cfg, seed)?;
        if cfg.backbone == Backbone::Vgg16Pretrained {
            let tensors = load_backbone_tensors()?;
            model.apply_backbone_tensors(&tensors)?;
        }
        Ok(model)
    }

    /// Build with seeded random weights, skipping the pretrained-weight
    /// requirement. Used when a checkpoint will overwrite every parameter.
    pub(crate) fn new_unloaded(cfg: &OfConvNetConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        Self::with_table(cfg, &cfg.backbone.table(), seed)
    }

    pub(crate) fn with_table(
        cfg: &OfConvNetConfig,
        table: &[Vec<(usize, usize)>],
        seed: u64,
    ) -> Result<Self> {
        if cfg.finetune_blocks > table.len() {
            return Err(Error::InvalidConfig("finetune_blocks exceeds block count".into()));
        }
        let mut blocks = Vec::new();
        for (bi, specs) in table.iter().enumerate() {
            let mut convs = Vec::new();
            for (ci, &(cin, cout)) in specs.iter().enumerate() {
                let mut rng = rng_for(seed, "of-convnet.conv", (bi * 16 + ci) as u64);
                convs.push(Conv2d::new(&format!("block{bi}.conv{ci}"), cin, cout, 3, &mut rng));
            }
            blocks.push(ConvBlock { convs });
        }
        let feat = table.last().and_then(|b| b.last()).map(|&(_, c)| c).unwrap_or(0);
        if feat == 0 {
            return Err(Error::InvalidConfig("backbone has no convolutions".into()));
        }
        let mut rng = rng_for(seed, "of-convnet.head", 0);
        let head = Linear::new("head", feat, cfg.classes, &mut rng);
        let mut model = OfConvNet {
            cfg: cfg.clone(),
            blocks,
            pool: MaxPool2d,
            gap: GlobalAvgPool,
            head,
        };
        model.apply_freezing();
        Ok(model)
    }

    /// Freeze every block before the last `finetune_blocks` ones.
    fn apply_freezing(&mut self) {
        let frozen = self.blocks.len() - self.cfg.finetune_blocks;
        for (bi, block) in self.blocks.iter_mut().enumerate() {
            let trainable = bi >= frozen;
            for conv in &mut block.convs {
                conv.w.trainable = trainable;
                conv.b.trainable = trainable;
            }
        }
    }

    /// Copy backbone convolution weights by parameter name.
    fn apply_backbone_tensors(
        &mut self,
        tensors: &BTreeMap<String, ndarray::ArrayD<f64>>,
    ) -> Result<()> {
        for block in &mut self.blocks {
            for conv in &mut block.convs {
                for p in [&mut conv.w, &mut conv.b] {
                    let t = tensors.get(&p.name).ok_or_else(|| {
                        Error::BackboneUnavailable(format!(
                            "backbone weights missing tensor {}",
                            p.name
                        ))
                    })?;
                    if t.shape() != p.value.shape() {
                        return Err(Error::BackboneUnavailable(format!(
                            "tensor {} has shape {:?}, expected {:?}",
                            p.name,
                            t.shape(),
                            p.value.shape()
                        )));
                    }
                    p.value = t.clone();
                }
            }
        }
        Ok(())
    }

    /// Stack flow images into a normalized `(B, 3, S, S)` input tensor.
    pub fn to_input(&self, images: &[FlowImage]) -> Result<Array4<f64>> {
        if images.is_empty() {
            return Err(Error::EmptyInput("no flow images"));
        }
        let s = self.cfg.input_size;
        let mut x = Array4::zeros((images.len(), 3, s, s));
        for (i, img) in images.iter().enumerate() {
            let img = img.resized(s);
            for y in 0..s {
                for xx in 0..s {
                    for c in 0..3 {
                        x[(i, c, y, xx)] = img.rgb[(y, xx, c)] as f64 / 255.0;
                    }
                }
            }
        }
        Ok(x)
    }

    /// `x: (B, 3, S, S)` to per-frame logits `(B, classes)`.
    pub fn forward(&mut self, x: &Array4<f64>) -> Result<(Array2<f64>, OfForward)> {
        let (_, c, h, w) = x.dim();
        if c != 3 || h != self.cfg.input_size || w != self.cfg.input_size {
            return Err(Error::ShapeMismatch(format!(
                "expected (B, 3, {s}, {s}) input, got {:?}",
                x.dim(),
                s = self.cfg.input_size
            )));
        }
        let mut cache = OfForward {
            conv_inputs: Vec::new(),
            relu_masks: Vec::new(),
            pool_args: Vec::new(),
            pool_in_hw: Vec::new(),
            gap_in_hw: (0, 0),
            head_input: Array2::zeros((0, 0)),
        };
        let mut h = x.clone();
        for block in &self.blocks {
            let mut inputs = Vec::new();
            let mut masks = Vec::new();
            for conv in &block.convs {
                inputs.push(h.clone());
                let pre = conv.forward(&h);
                let (post, mask) = relu(&pre);
                masks.push(mask);
                h = post;
            }
            cache.conv_inputs.push(inputs);
            cache.relu_masks.push(masks);
            cache.pool_in_hw.push((h.dim().2, h.dim().3));
            let (pooled, arg) = self.pool.forward(&h);
            cache.pool_args.push(arg);
            h = pooled;
        }
        cache.gap_in_hw = (h.dim().2, h.dim().3);
        let feat = self.gap.forward(&h);
        cache.head_input = feat.clone();
        let logits = self.head.forward(&feat);
        Ok((logits, cache))
    }

    /// Accumulate gradients from per-frame `dlogits`.
    pub fn backward(&mut self, cache: &OfForward, dlogits: &Array2<f64>) {
        let dfeat = self.head.backward(&cache.head_input, dlogits);
        let mut dh = self.gap.backward(&dfeat, cache.gap_in_hw);
        for bi in (0..self.blocks.len()).rev() {
            dh = self.pool.backward(&cache.pool_args[bi], &dh, cache.pool_in_hw[bi]);
            let block = &mut self.blocks[bi];
            for ci in (0..block.convs.len()).rev() {
                let dpre = relu_backward(&dh, &cache.relu_masks[bi][ci]);
                dh = block.convs[ci].backward(&cache.conv_inputs[bi][ci], &dpre);
            }
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = Vec::new();
        for block in &mut self.blocks {
            for conv in &mut block.convs {
                p.extend(conv.params_mut());
            }
        }
        p.extend(self.head.params_mut());
        p
    }

    /// Gradient L1 norm per block, in order. Zero for frozen blocks.
    #[cfg(test)]
    fn block_grad_norms(&self) -> Vec<f64> {
        self.blocks
            .iter()
            .map(|b| {
                b.convs
                    .iter()
                    .map(|c| {
                        c.w.grad.iter().map(|g| g.abs()).sum::<f64>()
                            + c.b.grad.iter().map(|g| g.abs()).sum::<f64>()
                    })
                    .sum()
            })
            .collect()
    }
}

fn load_backbone_tensors() -> Result<BTreeMap<String, ndarray::ArrayD<f64>>> {
    let dir = std::env::var_os("VVAD_CACHE").ok_or_else(|| {
        Error::BackboneUnavailable(
            "VVAD_CACHE is not set; place the VGG-16 backbone weights at \
             $VVAD_CACHE/vgg16_backbone.tnsr or use the tiny-cnn backbone"
                .into(),
        )
    })?;
    let path = PathBuf::from(dir).join(VGG16_WEIGHTS_FILE);
    if !path.exists() {
        return Err(Error::BackboneUnavailable(format!(
            "backbone weights not found at {}",
            path.display()
        )));
    }
    super::read_tensors(&path)
        .map_err(|e| Error::BackboneUnavailable(format!("reading backbone weights: {e}")))
}
