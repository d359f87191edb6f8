//! Forward and backward passes of the network.
//!
//! Training runs on a batch: convolution outputs of all samples are stacked
//! so batch normalization sees every position of every sample, then split
//! back for pooling and classification. Inference on a single sample uses the
//! running statistics and is a pure function of (params, cfg, qis).

use crate::error::{Error, Result};
use crate::nn::{
    attention_pool_backward, attention_pool_forward, bn_backward, bn_forward_infer,
    bn_forward_train, conv1d_backward, conv1d_forward, dense_backward, dense_forward,
    dropout_mask, embed_backward, embed_lookup, maxpool_backward, maxpool_forward, relu_backward,
    relu_forward, softmax_cross_entropy, AttentionCache, BnCache, Mode, Tensor,
};
use crate::stego::{Label, QisMatrix};

use super::{sorted_paths, HrnConfig, HrnParams, Pooling};

/// Single-sample forward output.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
    /// Attention weights per enabled path (ascending path order); `None`
    /// under max pooling.
    pub alphas: Vec<Option<Vec<f64>>>,
}

/// Gradients shaped exactly like [`HrnParams`] (running stats excluded).
#[derive(Debug, Clone)]
pub struct HrnGrads {
    pub embeds: Vec<Tensor>,
    pub kernels: Vec<Tensor>,
    pub bias: Vec<Vec<f64>>,
    pub gamma: Vec<Vec<f64>>,
    pub beta: Vec<Vec<f64>>,
    pub attn_w: Vec<Vec<f64>>,
    pub attn_b: Vec<f64>,
    pub fc1_w: Tensor,
    pub fc1_b: Vec<f64>,
    pub fc2_w: Tensor,
    pub fc2_b: Vec<f64>,
}

impl HrnGrads {
    pub fn zeros_like(params: &HrnParams) -> Self {
        HrnGrads {
            embeds: params.embeds.iter().map(|t| Tensor::zeros(t.shape.clone())).collect(),
            kernels: params
                .blocks
                .iter()
                .map(|b| Tensor::zeros(b.kernels.shape.clone()))
                .collect(),
            bias: params.blocks.iter().map(|b| vec![0.0; b.bias.len()]).collect(),
            gamma: params.blocks.iter().map(|b| vec![0.0; b.gamma.len()]).collect(),
            beta: params.blocks.iter().map(|b| vec![0.0; b.beta.len()]).collect(),
            attn_w: params.attn_w.iter().map(|w| vec![0.0; w.len()]).collect(),
            attn_b: vec![0.0; params.attn_b.len()],
            fc1_w: Tensor::zeros(params.fc1_w.shape.clone()),
            fc1_b: vec![0.0; params.fc1_b.len()],
            fc2_w: Tensor::zeros(params.fc2_w.shape.clone()),
            fc2_b: vec![0.0; params.fc2_b.len()],
        }
    }

    /// Gradient slices in the same declared order as
    /// [`HrnParams::param_slices_mut`].
    pub fn grad_slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for t in &self.embeds {
            out.push(&t.data);
        }
        for i in 0..self.kernels.len() {
            out.push(&self.kernels[i].data);
            out.push(&self.bias[i]);
            out.push(&self.gamma[i]);
            out.push(&self.beta[i]);
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

fn check_input(cfg: &HrnConfig, qis: &QisMatrix) -> Result<()> {
    let min = cfg.min_frames();
    if qis.len() < min {
        return Err(Error::invalid(format!(
            "input of {} frames is below the model minimum of {min}",
            qis.len()
        )));
    }
    for (j, (&v, &cv)) in qis.vocab.iter().zip(&cfg.vocab_sizes).enumerate() {
        if v != cv {
            return Err(Error::invalid(format!(
                "track {j} vocab {v} does not match model vocab {cv}"
            )));
        }
    }
    Ok(())
}

/// Concatenate the three per-track embeddings channel-wise: `T x 3E`.
fn embed_sample(params: &HrnParams, cfg: &HrnConfig, qis: &QisMatrix) -> Result<Tensor> {
    let e = cfg.embed_dim;
    let t = qis.len();
    let mut rows = vec![0.0; t * 3 * e];
    for (j, table) in params.embeds.iter().enumerate() {
        let idx: Vec<usize> = qis.frames.iter().map(|f| f[j]).collect();
        let emb = embed_lookup(&idx, table)?;
        for i in 0..t {
            rows[i * 3 * e + j * e..i * 3 * e + (j + 1) * e]
                .copy_from_slice(&emb.data[i * e..(i + 1) * e]);
        }
    }
    Tensor::new(vec![t, 3 * e], rows)
}

fn stack(rows: &[Tensor]) -> Tensor {
    let d = rows[0].shape[1];
    let total: usize = rows.iter().map(|t| t.shape[0]).sum();
    let mut data = Vec::with_capacity(total * d);
    for t in rows {
        data.extend_from_slice(&t.data);
    }
    Tensor { shape: vec![total, d], data }
}

fn unstack(stacked: &Tensor, lens: &[usize]) -> Vec<Tensor> {
    let d = stacked.shape[1];
    let mut out = Vec::with_capacity(lens.len());
    let mut offset = 0;
    for &l in lens {
        out.push(Tensor {
            shape: vec![l, d],
            data: stacked.data[offset * d..(offset + l) * d].to_vec(),
        });
        offset += l;
    }
    out
}

struct BlockTrace {
    inputs: Vec<Tensor>,
    bn_cache: BnCache,
    bn_out: Tensor,
    relu_out: Vec<Tensor>,
    lens: Vec<usize>,
}

enum PoolTrace {
    Attention(Vec<AttentionCache>),
    MaxPool(Vec<Vec<usize>>),
}

/// Mean loss, correct-prediction count and summed gradients over a batch.
/// Updates the batch-norm running statistics in `params`.
pub fn train_step(
    params: &mut HrnParams,
    cfg: &HrnConfig,
    batch: &[(&QisMatrix, Label)],
    dropout_seed: u64,
) -> Result<(f64, usize, HrnGrads)> {
    if batch.is_empty() {
        return Err(Error::invalid("empty training batch"));
    }
    let b = batch.len();
    let f = cfg.block_filters;
    let paths = sorted_paths(cfg);

    // embeddings
    let mut cur: Vec<Tensor> = Vec::with_capacity(b);
    for (qis, _) in batch {
        check_input(cfg, qis)?;
        cur.push(embed_sample(params, cfg, qis)?);
    }

    // convolution blocks with batch-wide normalization
    let mut traces: Vec<BlockTrace> = Vec::with_capacity(cfg.n_blocks());
    for block in params.blocks.iter_mut() {
        let inputs = cur;
        let pre: Vec<Tensor> = inputs
            .iter()
            .map(|x| conv1d_forward(x, &block.kernels, &block.bias))
            .collect::<Result<_>>()?;
        let lens: Vec<usize> = pre.iter().map(|t| t.shape[0]).collect();
        let stacked = stack(&pre);
        let (bn_out, bn_cache) =
            bn_forward_train(&stacked, &block.gamma, &block.beta, &mut block.running)?;
        let relu_stacked = relu_forward(&bn_out);
        let relu_out = unstack(&relu_stacked, &lens);
        cur = relu_out.clone();
        traces.push(BlockTrace { inputs, bn_cache, bn_out, relu_out, lens });
    }

    // pooling paths
    let z_dim = cfg.fusion_dim();
    let mut z = Tensor::zeros(vec![b, z_dim]);
    let mut pool_traces: Vec<PoolTrace> = Vec::with_capacity(paths.len());
    for (pi, &p) in paths.iter().enumerate() {
        let block_out = &traces[p - 1].relu_out;
        match cfg.pooling {
            Pooling::Attention => {
                let mut caches = Vec::with_capacity(b);
                for (bi, h) in block_out.iter().enumerate() {
                    let (r, cache) =
                        attention_pool_forward(h, &params.attn_w[pi], params.attn_b[pi])?;
                    z.data[bi * z_dim + pi * f..bi * z_dim + (pi + 1) * f].copy_from_slice(&r);
                    caches.push(cache);
                }
                pool_traces.push(PoolTrace::Attention(caches));
            }
            Pooling::MaxPool => {
                let mut argmaxes = Vec::with_capacity(b);
                for (bi, h) in block_out.iter().enumerate() {
                    let (r, argmax) = maxpool_forward(h)?;
                    z.data[bi * z_dim + pi * f..bi * z_dim + (pi + 1) * f].copy_from_slice(&r);
                    argmaxes.push(argmax);
                }
                pool_traces.push(PoolTrace::MaxPool(argmaxes));
            }
        }
    }

    // classifier
    let fc1_pre = dense_forward(&z, &params.fc1_w, &params.fc1_b)?;
    let fc1_act = relu_forward(&fc1_pre);
    let mask = dropout_mask(b * cfg.fc_dim, cfg.dropout_rate, Mode::Train, dropout_seed)?;
    let dropped = Tensor {
        shape: fc1_act.shape.clone(),
        data: fc1_act.data.iter().zip(&mask).map(|(a, m)| a * m).collect(),
    };
    let logits = dense_forward(&dropped, &params.fc2_w, &params.fc2_b)?;

    let c = cfg.n_classes;
    let mut total_loss = 0.0;
    let mut n_correct = 0usize;
    let mut d_logits = Tensor::zeros(vec![b, c]);
    for (bi, (_, label)) in batch.iter().enumerate() {
        let target = match label {
            Label::Cover => 0,
            Label::Stego => 1,
        };
        let row = &logits.data[bi * c..(bi + 1) * c];
        let (loss, probs, grad) = softmax_cross_entropy(row, target)?;
        total_loss += loss;
        let predicted = if probs[1] > probs[0] { 1 } else { 0 };
        if predicted == target {
            n_correct += 1;
        }
        for (gi, g) in grad.iter().enumerate() {
            d_logits.data[bi * c + gi] = g / b as f64;
        }
    }
    let mean_loss = total_loss / b as f64;

    // --- backward ---
    let mut grads = HrnGrads::zeros_like(params);

    let (d_dropped, d_fc2w, d_fc2b) = dense_backward(&dropped, &params.fc2_w, &d_logits);
    grads.fc2_w = d_fc2w;
    grads.fc2_b = d_fc2b;
    let d_fc1act = Tensor {
        shape: d_dropped.shape.clone(),
        data: d_dropped.data.iter().zip(&mask).map(|(g, m)| g * m).collect(),
    };
    let d_fc1pre = relu_backward(&fc1_pre, &d_fc1act);
    let (d_z, d_fc1w, d_fc1b) = dense_backward(&z, &params.fc1_w, &d_fc1pre);
    grads.fc1_w = d_fc1w;
    grads.fc1_b = d_fc1b;

    // pooled-representation gradients, routed back to their blocks
    let mut d_relu: Vec<Vec<Tensor>> = traces
        .iter()
        .map(|tr| tr.relu_out.iter().map(|t| Tensor::zeros(t.shape.clone())).collect())
        .collect();
    for (pi, &p) in paths.iter().enumerate() {
        let block_out = &traces[p - 1].relu_out;
        for bi in 0..b {
            let d_r = &d_z.data[bi * z_dim + pi * f..bi * z_dim + (pi + 1) * f];
            match &pool_traces[pi] {
                PoolTrace::Attention(caches) => {
                    let (d_h, d_w, d_b) = attention_pool_backward(
                        &block_out[bi],
                        &params.attn_w[pi],
                        &caches[bi],
                        d_r,
                    );
                    for (acc, g) in grads.attn_w[pi].iter_mut().zip(&d_w) {
                        *acc += g;
                    }
                    grads.attn_b[pi] += d_b;
                    for (acc, g) in d_relu[p - 1][bi].data.iter_mut().zip(&d_h.data) {
                        *acc += g;
                    }
                }
                PoolTrace::MaxPool(argmaxes) => {
                    let d_h = maxpool_backward(&argmaxes[bi], d_r, block_out[bi].shape[0]);
                    for (acc, g) in d_relu[p - 1][bi].data.iter_mut().zip(&d_h.data) {
                        *acc += g;
                    }
                }
            }
        }
    }

    // blocks in reverse; the conv-input gradient feeds the previous block's
    // ReLU output (or the embeddings for block 0)
    for i in (0..cfg.n_blocks()).rev() {
        let tr = &traces[i];
        let d_stacked = stack(&d_relu[i]);
        let d_bn_out = relu_backward(&tr.bn_out, &d_stacked);
        let (d_pre_stacked, d_gamma, d_beta) =
            bn_backward(&tr.bn_cache, &params.blocks[i].gamma, &d_bn_out);
        grads.gamma[i] = d_gamma;
        grads.beta[i] = d_beta;
        let d_pre = unstack(&d_pre_stacked, &tr.lens);
        for bi in 0..b {
            let (d_in, d_kern, d_bias) =
                conv1d_backward(&tr.inputs[bi], &params.blocks[i].kernels, &d_pre[bi]);
            for (acc, g) in grads.kernels[i].data.iter_mut().zip(&d_kern.data) {
                *acc += g;
            }
            for (acc, g) in grads.bias[i].iter_mut().zip(&d_bias) {
                *acc += g;
            }
            if i > 0 {
                for (acc, g) in d_relu[i - 1][bi].data.iter_mut().zip(&d_in.data) {
                    *acc += g;
                }
            } else {
                // split channels back into the three embedding tracks
                let e = cfg.embed_dim;
                let t = d_in.shape[0];
                for j in 0..3 {
                    let idx: Vec<usize> = batch[bi].0.frames.iter().map(|fr| fr[j]).collect();
                    let mut d_emb = Tensor::zeros(vec![t, e]);
                    for ti in 0..t {
                        d_emb.data[ti * e..(ti + 1) * e].copy_from_slice(
                            &d_in.data[ti * 3 * e + j * e..ti * 3 * e + (j + 1) * e],
                        );
                    }
                    embed_backward(&idx, &d_emb, &mut grads.embeds[j]);
                }
            }
        }
    }

    Ok((mean_loss, n_correct, grads))
}

/// Single-sample forward pass.
///
/// Train mode normalizes over the sample's own positions and applies a seeded
/// dropout mask; running statistics are not modified, so the function is pure.
pub fn forward(
    params: &HrnParams,
    cfg: &HrnConfig,
    qis: &QisMatrix,
    mode: Mode,
    seed: u64,
) -> Result<ForwardOutput> {
    check_input(cfg, qis)?;
    let f = cfg.block_filters;
    let paths = sorted_paths(cfg);

    let mut cur = embed_sample(params, cfg, qis)?;
    let mut block_outs: Vec<Tensor> = Vec::with_capacity(cfg.n_blocks());
    for block in &params.blocks {
        let pre = conv1d_forward(&cur, &block.kernels, &block.bias)?;
        let normed = match mode {
            Mode::Infer => bn_forward_infer(&pre, &block.gamma, &block.beta, &block.running),
            Mode::Train => {
                let mut scratch = block.running.clone();
                bn_forward_train(&pre, &block.gamma, &block.beta, &mut scratch)?.0
            }
        };
        cur = relu_forward(&normed);
        block_outs.push(cur.clone());
    }

    let z_dim = cfg.fusion_dim();
    let mut z = vec![0.0; z_dim];
    let mut alphas: Vec<Option<Vec<f64>>> = Vec::with_capacity(paths.len());
    for (pi, &p) in paths.iter().enumerate() {
        let h = &block_outs[p - 1];
        match cfg.pooling {
            Pooling::Attention => {
                let (r, cache) = attention_pool_forward(h, &params.attn_w[pi], params.attn_b[pi])?;
                z[pi * f..(pi + 1) * f].copy_from_slice(&r);
                alphas.push(Some(cache.alpha));
            }
            Pooling::MaxPool => {
                let (r, _) = maxpool_forward(h)?;
                z[pi * f..(pi + 1) * f].copy_from_slice(&r);
                alphas.push(None);
            }
        }
    }

    let z_t = Tensor::new(vec![1, z_dim], z)?;
    let fc1_pre = dense_forward(&z_t, &params.fc1_w, &params.fc1_b)?;
    let fc1_act = relu_forward(&fc1_pre);
    let mask = dropout_mask(cfg.fc_dim, cfg.dropout_rate, mode, seed)?;
    let dropped = Tensor {
        shape: fc1_act.shape.clone(),
        data: fc1_act.data.iter().zip(&mask).map(|(a, m)| a * m).collect(),
    };
    let logits_t = dense_forward(&dropped, &params.fc2_w, &params.fc2_b)?;
    let logits = logits_t.data;
    let (_, probs, _) = softmax_cross_entropy(&logits, 0)?;
    Ok(ForwardOutput { logits, probs, alphas })
}

/// Inference over many samples; plain loop, kept for call-site clarity.
pub fn forward_infer_batch(
    params: &HrnParams,
    cfg: &HrnConfig,
    samples: &[&QisMatrix],
) -> Result<Vec<ForwardOutput>> {
    samples
        .iter()
        .map(|qis| forward(params, cfg, qis, Mode::Infer, 0))
        .collect()
}
