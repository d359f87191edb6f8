//! The hierarchical representation network: per-track embeddings feeding a
//! cascade of valid 1-D convolution blocks (kernel sizes 1/3/5 by default),
//! each block normalized, rectified and pooled by a per-level attention path;
//! the pooled representations are fused and classified by two dense layers.
//!
//! Also houses the ablation variants, the closed-form parameter count and the
//! binary parameter file.

mod forward;
mod serialize;

pub use forward::{forward, forward_infer_batch, train_step, ForwardOutput, HrnGrads};
pub use serialize::{load_params, save_params};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::nn::batchnorm::RunningStats;
use crate::nn::tensor::Tensor;
use crate::stego::Label;

/// How each block's output is pooled into its fixed-size path representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pooling {
    Attention,
    MaxPool,
}

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct HrnConfig {
    pub vocab_sizes: [usize; 3],
    /// Embedding width per track.
    pub embed_dim: usize,
    /// Filters per convolution block (desk default 32; full-scale 256).
    pub block_filters: usize,
    /// One kernel size per block; the block count is this list's length.
    pub kernel_sizes: Vec<usize>,
    pub fc_dim: usize,
    pub dropout_rate: f64,
    pub n_classes: usize,
    pub pooling: Pooling,
    /// 1-based blocks whose pooled output reaches the classifier. The deepest
    /// block is always included.
    pub enabled_paths: Vec<usize>,
}

impl HrnConfig {
    /// Desk-scale defaults sized for CPU runs.
    pub fn desk_default(vocab_sizes: [usize; 3]) -> Self {
        HrnConfig {
            vocab_sizes,
            embed_dim: 16,
            block_filters: 32,
            kernel_sizes: vec![1, 3, 5],
            fc_dim: 64,
            dropout_rate: 0.6,
            n_classes: 2,
            pooling: Pooling::Attention,
            enabled_paths: vec![1, 2, 3],
        }
    }

    /// Full-scale preset (256 filters).
    pub fn paper_scale(vocab_sizes: [usize; 3]) -> Self {
        HrnConfig {
            block_filters: 256,
            ..Self::desk_default(vocab_sizes)
        }
    }

    pub fn n_blocks(&self) -> usize {
        self.kernel_sizes.len()
    }

    /// Minimum input length so every block has positive output length.
    pub fn min_frames(&self) -> usize {
        1 + self.kernel_sizes.iter().map(|k| k - 1).sum::<usize>()
    }

    /// Classifier input width: one pooled representation per enabled path.
    pub fn fusion_dim(&self) -> usize {
        self.enabled_paths.len() * self.block_filters
    }

    pub fn validate(&self) -> Result<()> {
        let nb = self.n_blocks();
        if !(2..=4).contains(&nb) {
            return Err(Error::invalid(format!("block count must be 2..4, got {nb}")));
        }
        if self.enabled_paths.is_empty()
            || self.enabled_paths.iter().any(|&p| p == 0 || p > nb)
            || !self.enabled_paths.contains(&nb)
        {
            return Err(Error::invalid(format!(
                "enabled paths {:?} must be within 1..={nb} and include the deepest block",
                self.enabled_paths
            )));
        }
        let mut sorted = self.enabled_paths.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.enabled_paths.len() {
            return Err(Error::invalid("enabled paths must be distinct"));
        }
        if self.kernel_sizes.iter().any(|&k| k == 0) {
            return Err(Error::invalid("kernel sizes must be >= 1"));
        }
        if self.embed_dim == 0 || self.block_filters == 0 || self.fc_dim == 0 {
            return Err(Error::invalid("layer widths must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::invalid("dropout rate must be in [0, 1)"));
        }
        if self.n_classes != 2 {
            return Err(Error::invalid("only binary cover/stego classification is supported"));
        }
        Ok(())
    }

    /// Input channel count of block `i` (0-based).
    pub fn block_in_channels(&self, i: usize) -> usize {
        if i == 0 {
            3 * self.embed_dim
        } else {
            self.block_filters
        }
    }
}

/// One convolution block's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvBlock {
    /// `F x k x C_in`.
    pub kernels: Tensor,
    pub bias: Vec<f64>,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running: RunningStats,
}

/// All trainable weights (plus batch-norm running stats).
#[derive(Debug, Clone, PartialEq)]
pub struct HrnParams {
    pub embeds: Vec<Tensor>,
    pub blocks: Vec<ConvBlock>,
    /// Attention projection per enabled path, in path order.
    pub attn_w: Vec<Vec<f64>>,
    pub attn_b: Vec<f64>,
    pub fc1_w: Tensor,
    pub fc1_b: Vec<f64>,
    pub fc2_w: Tensor,
    pub fc2_b: Vec<f64>,
}

fn fan_in_uniform(rng: &mut ChaCha12Rng, n: usize, fan_in: usize) -> Vec<f64> {
    let s = (1.0 / fan_in as f64).sqrt();
    (0..n).map(|_| rng.gen_range(-s..s)).collect()
}

/// Fan-in-scaled uniform weights, zero biases, unit/zero batch-norm scale and
/// shift. Deterministic per seed.
pub fn init_params(cfg: &HrnConfig, seed: u64) -> Result<HrnParams> {
    cfg.validate()?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let e = cfg.embed_dim;
    let f = cfg.block_filters;

    let embeds = cfg
        .vocab_sizes
        .iter()
        .map(|&v| Tensor::new(vec![v, e], fan_in_uniform(&mut rng, v * e, e)).unwrap())
        .collect();

    let mut blocks = Vec::with_capacity(cfg.n_blocks());
    for (i, &k) in cfg.kernel_sizes.iter().enumerate() {
        let c_in = cfg.block_in_channels(i);
        blocks.push(ConvBlock {
            kernels: Tensor::new(
                vec![f, k, c_in],
                fan_in_uniform(&mut rng, f * k * c_in, k * c_in),
            )
            .unwrap(),
            bias: vec![0.0; f],
            gamma: vec![1.0; f],
            beta: vec![0.0; f],
            running: RunningStats::new(f),
        });
    }

    let paths = sorted_paths(cfg);
    let attn_w: Vec<Vec<f64>> = paths
        .iter()
        .map(|_| fan_in_uniform(&mut rng, f, f))
        .collect();
    let attn_b = vec![0.0; paths.len()];

    let z_dim = cfg.fusion_dim();
    let fc1_w = Tensor::new(
        vec![cfg.fc_dim, z_dim],
        fan_in_uniform(&mut rng, cfg.fc_dim * z_dim, z_dim),
    )
    .unwrap();
    let fc2_w = Tensor::new(
        vec![cfg.n_classes, cfg.fc_dim],
        fan_in_uniform(&mut rng, cfg.n_classes * cfg.fc_dim, cfg.fc_dim),
    )
    .unwrap();

    Ok(HrnParams {
        embeds,
        blocks,
        attn_w,
        attn_b,
        fc1_w,
        fc1_b: vec![0.0; cfg.fc_dim],
        fc2_w,
        fc2_b: vec![0.0; cfg.n_classes],
    })
}

/// Enabled paths in ascending order; parameter and fusion layout follow it.
pub fn sorted_paths(cfg: &HrnConfig) -> Vec<usize> {
    let mut p = cfg.enabled_paths.clone();
    p.sort_unstable();
    p
}

impl HrnParams {
    /// Trainable parameter slices in declared order (running stats excluded).
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for t in &mut self.embeds {
            out.push(&mut t.data);
        }
        for b in &mut self.blocks {
            out.push(&mut b.kernels.data);
            out.push(&mut b.bias);
            out.push(&mut b.gamma);
            out.push(&mut b.beta);
        }
        for w in &mut self.attn_w {
            out.push(w);
        }
        out.push(&mut self.attn_b);
        out.push(&mut self.fc1_w.data);
        out.push(&mut self.fc1_b);
        out.push(&mut self.fc2_w.data);
        out.push(&mut self.fc2_b);
        out
    }

    pub fn param_slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for t in &self.embeds {
            out.push(&t.data);
        }
        for b in &self.blocks {
            out.push(&b.kernels.data);
            out.push(&b.bias);
            out.push(&b.gamma);
            out.push(&b.beta);
        }
        for w in &self.attn_w {
            out.push(w);
        }
        out.push(&self.attn_b);
        out.push(&self.fc1_w.data);
        out.push(&self.fc1_b);
        out.push(&self.fc2_w.data);
        out.push(&self.fc2_b);
        out
    }
}

/// Predicted label: argmax of the class probabilities; exact ties go to cover.
pub fn predict(params: &HrnParams, cfg: &HrnConfig, qis: &crate::stego::QisMatrix) -> Result<Label> {
    let out = forward(params, cfg, qis, crate::nn::Mode::Infer, 0)?;
    Ok(if out.probs[1] > out.probs[0] { Label::Stego } else { Label::Cover })
}

/// Ablation variants mirroring the model-comparison table.
pub fn make_variant(base: &HrnConfig, variant: u8) -> Result<HrnConfig> {
    let mut cfg = base.clone();
    match variant {
        0 => {}
        1 => cfg.enabled_paths.retain(|&p| p != 1),
        2 => cfg.enabled_paths.retain(|&p| p != 2),
        3 => cfg.enabled_paths.retain(|&p| p != 1 && p != 2),
        4 => cfg.pooling = Pooling::MaxPool,
        5 => {
            cfg.kernel_sizes = vec![1, 3];
            cfg.enabled_paths = vec![1, 2];
        }
        6 => {
            cfg.kernel_sizes = vec![1, 3, 5, 7];
            cfg.enabled_paths = vec![1, 2, 3, 4];
        }
        v => return Err(Error::invalid(format!("unknown variant #{v}"))),
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Closed-form trainable parameter count (batch-norm running stats excluded).
pub fn count_params(cfg: &HrnConfig) -> usize {
    let e = cfg.embed_dim;
    let f = cfg.block_filters;
    let embeds: usize = cfg.vocab_sizes.iter().map(|&v| v * e).sum();
    let blocks: usize = cfg
        .kernel_sizes
        .iter()
        .enumerate()
        .map(|(i, &k)| k * cfg.block_in_channels(i) * f + f + 2 * f)
        .sum();
    let n_paths = cfg.enabled_paths.len();
    let attn = n_paths * (f + 1);
    let fc1 = n_paths * f * cfg.fc_dim + cfg.fc_dim;
    let fc2 = cfg.fc_dim * cfg.n_classes + cfg.n_classes;
    embeds + blocks + attn + fc1 + fc2
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_cfg() -> HrnConfig {
        HrnConfig {
            vocab_sizes: [4, 4, 4],
            embed_dim: 2,
            block_filters: 4,
            kernel_sizes: vec![1, 3, 5],
            fc_dim: 8,
            dropout_rate: 0.0,
            n_classes: 2,
            pooling: Pooling::Attention,
            enabled_paths: vec![1, 2, 3],
        }
    }

    #[test]
    fn count_params_toy_hand_arithmetic() {
        // embeds 24, block1 28+8, block2 52+... per-term: 24 + (28) + (52)
        // + (84) + BN 24 + attention 15 + fc1 104 + fc2 18 = 349
        assert_eq!(count_params(&toy_cfg()), 349);
    }

    #[test]
    fn count_params_matches_allocated_shapes() {
        for variant in 0..=6 {
            let cfg = make_variant(&toy_cfg(), variant).unwrap();
            let params = init_params(&cfg, 1).unwrap();
            let allocated: usize = params.param_slices().iter().map(|s| s.len()).sum();
            assert_eq!(allocated, count_params(&cfg), "variant #{variant}");
        }
    }

    #[test]
    fn doubling_filters_more_than_doubles_conv_params() {
        let cfg = toy_cfg();
        let mut doubled = cfg.clone();
        doubled.block_filters *= 2;
        let conv = |c: &HrnConfig| -> usize {
            c.kernel_sizes
                .iter()
                .enumerate()
                .map(|(i, &k)| k * c.block_in_channels(i) * c.block_filters)
                .sum()
        };
        assert!(conv(&doubled) > 2 * conv(&cfg));
    }

    #[test]
    fn full_scale_configuration_is_larger_than_desk() {
        let desk = count_params(&HrnConfig::desk_default([128, 32, 32]));
        let full = count_params(&HrnConfig::paper_scale([128, 32, 32]));
        assert!(full > desk);
    }

    #[test]
    fn init_is_deterministic_and_nondegenerate() {
        let cfg = toy_cfg();
        let a = init_params(&cfg, 42).unwrap();
        let b = init_params(&cfg, 42).unwrap();
        assert_eq!(a, b);
        // no zero-variance weight tensor
        for t in [&a.embeds[0], &a.blocks[0].kernels, &a.fc1_w, &a.fc2_w] {
            let mean = t.data.iter().sum::<f64>() / t.numel() as f64;
            let var = t.data.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
            assert!(var > 0.0);
        }
    }

    #[test]
    fn variants_shape_audit() {
        let cfg = toy_cfg();
        let v3 = make_variant(&cfg, 3).unwrap();
        assert_eq!(v3.fusion_dim(), cfg.block_filters);
        let v4 = make_variant(&cfg, 4).unwrap();
        assert_eq!(v4.pooling, Pooling::MaxPool);
        assert_eq!(
            HrnConfig { pooling: Pooling::Attention, ..v4 },
            cfg,
            "variant #4 differs from #0 in pooling only"
        );
        let v5 = make_variant(&cfg, 5).unwrap();
        assert_eq!(v5.n_blocks(), 2);
        let v6 = make_variant(&cfg, 6).unwrap();
        assert_eq!(v6.enabled_paths.len(), 4);
        assert_eq!(v6.kernel_sizes, vec![1, 3, 5, 7]);
    }

    #[test]
    fn config_validation_rejects_bad_paths() {
        let mut cfg = toy_cfg();
        cfg.enabled_paths = vec![1, 2]; // deepest block missing
        assert!(cfg.validate().is_err());
        cfg.enabled_paths = vec![1, 2, 3, 4];
        assert!(cfg.validate().is_err());
        cfg.kernel_sizes = vec![1];
        cfg.enabled_paths = vec![1];
        assert!(cfg.validate().is_err()); // fewer than 2 blocks
    }

    #[test]
    fn min_frames_follows_kernel_sizes() {
        assert_eq!(toy_cfg().min_frames(), 7);
        let v6 = make_variant(&toy_cfg(), 6).unwrap();
        assert_eq!(v6.min_frames(), 13);
    }
}
