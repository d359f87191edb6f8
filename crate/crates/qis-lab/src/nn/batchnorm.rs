//! Batch normalization over the rows of a `B x D` matrix.
//!
//! Train mode normalizes each column by the batch mean/variance (eps 1e-5)
//! and folds the batch statistics into the running stats with momentum 0.9;
//! inference normalizes by the running stats.

use crate::error::{Error, Result};
use crate::nn::tensor::Tensor;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

/// Exponential-moving-average statistics used at inference time.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl RunningStats {
    pub fn new(d: usize) -> Self {
        RunningStats { mean: vec![0.0; d], var: vec![1.0; d] }
    }
}

/// Intermediates kept for the backward pass.
#[derive(Debug, Clone)]
pub struct BnCache {
    pub xhat: Tensor,
    pub inv_std: Vec<f64>,
}

/// Train-mode forward: normalize by batch statistics and update `running`.
pub fn bn_forward_train(
    x: &Tensor,
    gamma: &[f64],
    beta: &[f64],
    running: &mut RunningStats,
) -> Result<(Tensor, BnCache)> {
    let (b, d) = (x.shape[0], x.shape[1]);
    if b < 2 {
        return Err(Error::invalid(format!("batch norm train mode needs batch >= 2, got {b}")));
    }
    let mut mean = vec![0.0; d];
    for bi in 0..b {
        for c in 0..d {
            mean[c] += x.data[bi * d + c];
        }
    }
    for m in &mut mean {
        *m /= b as f64;
    }
    let mut var = vec![0.0; d];
    for bi in 0..b {
        for c in 0..d {
            let dev = x.data[bi * d + c] - mean[c];
            var[c] += dev * dev;
        }
    }
    for v in &mut var {
        *v /= b as f64;
    }
    let inv_std: Vec<f64> = var.iter().map(|&v| 1.0 / (v + BN_EPS).sqrt()).collect();

    let mut xhat = Tensor::zeros(vec![b, d]);
    let mut y = Tensor::zeros(vec![b, d]);
    for bi in 0..b {
        for c in 0..d {
            let xh = (x.data[bi * d + c] - mean[c]) * inv_std[c];
            xhat.data[bi * d + c] = xh;
            y.data[bi * d + c] = gamma[c] * xh + beta[c];
        }
    }
    for c in 0..d {
        running.mean[c] = BN_MOMENTUM * running.mean[c] + (1.0 - BN_MOMENTUM) * mean[c];
        running.var[c] = BN_MOMENTUM * running.var[c] + (1.0 - BN_MOMENTUM) * var[c];
    }
    y.debug_assert_finite("batch norm output");
    Ok((y, BnCache { xhat, inv_std }))
}

/// Inference forward using the running statistics.
pub fn bn_forward_infer(
    x: &Tensor,
    gamma: &[f64],
    beta: &[f64],
    running: &RunningStats,
) -> Tensor {
    let (b, d) = (x.shape[0], x.shape[1]);
    let mut y = Tensor::zeros(vec![b, d]);
    for c in 0..d {
        let inv_std = 1.0 / (running.var[c] + BN_EPS).sqrt();
        for bi in 0..b {
            y.data[bi * d + c] =
                gamma[c] * (x.data[bi * d + c] - running.mean[c]) * inv_std + beta[c];
        }
    }
    y
}

/// Train-mode gradients: returns `(d_x, d_gamma, d_beta)`.
pub fn bn_backward(
    cache: &BnCache,
    gamma: &[f64],
    d_out: &Tensor,
) -> (Tensor, Vec<f64>, Vec<f64>) {
    let (b, d) = (cache.xhat.shape[0], cache.xhat.shape[1]);
    let bf = b as f64;
    let mut d_gamma = vec![0.0; d];
    let mut d_beta = vec![0.0; d];
    let mut sum_dxhat = vec![0.0; d];
    let mut sum_dxhat_xhat = vec![0.0; d];
    for bi in 0..b {
        for c in 0..d {
            let g = d_out.data[bi * d + c];
            let xh = cache.xhat.data[bi * d + c];
            d_gamma[c] += g * xh;
            d_beta[c] += g;
            let dxh = g * gamma[c];
            sum_dxhat[c] += dxh;
            sum_dxhat_xhat[c] += dxh * xh;
        }
    }
    let mut d_x = Tensor::zeros(vec![b, d]);
    for bi in 0..b {
        for c in 0..d {
            let g = d_out.data[bi * d + c];
            let xh = cache.xhat.data[bi * d + c];
            let dxh = g * gamma[c];
            d_x.data[bi * d + c] =
                cache.inv_std[c] / bf * (bf * dxh - sum_dxhat[c] - xh * sum_dxhat_xhat[c]);
        }
    }
    (d_x, d_gamma, d_beta)
}
