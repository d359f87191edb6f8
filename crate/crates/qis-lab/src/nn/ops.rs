//! Forward/backward primitives: embedding lookup, valid 1-D convolution,
//! ReLU, dense layers, attention pooling, per-channel max pooling, dropout.
//!
//! Backward functions take the upstream gradient and return (or accumulate
//! into) gradients shaped exactly like their parameters.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::nn::tensor::Tensor;

/// Train/infer switch for stochastic and statistics-dependent layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

// --- embedding ---------------------------------------------------------------

/// Gather rows of a `V x E` table: output row i = `table[indices[i]]`.
pub fn embed_lookup(indices: &[usize], table: &Tensor) -> Result<Tensor> {
    let (v, e) = (table.shape[0], table.shape[1]);
    let mut out = Vec::with_capacity(indices.len() * e);
    for &ix in indices {
        if ix >= v {
            return Err(Error::invalid(format!("embedding index {ix} >= vocab {v}")));
        }
        out.extend_from_slice(&table.data[ix * e..(ix + 1) * e]);
    }
    Tensor::new(vec![indices.len(), e], out)
}

/// Accumulate output-row gradients into the table gradient.
pub fn embed_backward(indices: &[usize], d_out: &Tensor, d_table: &mut Tensor) {
    let e = d_table.shape[1];
    for (i, &ix) in indices.iter().enumerate() {
        let src = &d_out.data[i * e..(i + 1) * e];
        let dst = &mut d_table.data[ix * e..(ix + 1) * e];
        for (d, s) in dst.iter_mut().zip(src) {
            *d += s;
        }
    }
}

// --- valid 1-D convolution ----------------------------------------------------

/// Valid 1-D convolution. `input` is `T x C_in`, `kernels` is `F x k x C_in`,
/// `bias` has length F. Output is `(T - k + 1) x F` pre-activations.
pub fn conv1d_forward(input: &Tensor, kernels: &Tensor, bias: &[f64]) -> Result<Tensor> {
    let (t, c_in) = (input.shape[0], input.shape[1]);
    let (f, k, kc) = (kernels.shape[0], kernels.shape[1], kernels.shape[2]);
    if kc != c_in {
        return Err(Error::invalid(format!("kernel channels {kc} != input channels {c_in}")));
    }
    if t < k {
        return Err(Error::invalid(format!("input length {t} shorter than kernel {k}")));
    }
    let out_len = t - k + 1;
    let mut out = vec![0.0; out_len * f];
    for j in 0..out_len {
        for fi in 0..f {
            let mut acc = bias[fi];
            for dk in 0..k {
                let row = &input.data[(j + dk) * c_in..(j + dk + 1) * c_in];
                let kern = &kernels.data[(fi * k + dk) * c_in..(fi * k + dk + 1) * c_in];
                for c in 0..c_in {
                    acc += row[c] * kern[c];
                }
            }
            out[j * f + fi] = acc;
        }
    }
    let out = Tensor::new(vec![out_len, f], out)?;
    out.debug_assert_finite("conv1d output");
    Ok(out)
}

/// Gradients for [`conv1d_forward`]: returns `(d_input, d_kernels, d_bias)`.
pub fn conv1d_backward(
    input: &Tensor,
    kernels: &Tensor,
    d_out: &Tensor,
) -> (Tensor, Tensor, Vec<f64>) {
    let (t, c_in) = (input.shape[0], input.shape[1]);
    let (f, k, _) = (kernels.shape[0], kernels.shape[1], kernels.shape[2]);
    let out_len = t - k + 1;
    let mut d_input = Tensor::zeros(vec![t, c_in]);
    let mut d_kernels = Tensor::zeros(kernels.shape.clone());
    let mut d_bias = vec![0.0; f];
    for j in 0..out_len {
        for fi in 0..f {
            let g = d_out.data[j * f + fi];
            d_bias[fi] += g;
            for dk in 0..k {
                let row = &input.data[(j + dk) * c_in..(j + dk + 1) * c_in];
                let kern = &kernels.data[(fi * k + dk) * c_in..(fi * k + dk + 1) * c_in];
                let dk_row = &mut d_kernels.data[(fi * k + dk) * c_in..(fi * k + dk + 1) * c_in];
                for c in 0..c_in {
                    dk_row[c] += g * row[c];
                }
                let di_row = &mut d_input.data[(j + dk) * c_in..(j + dk + 1) * c_in];
                for c in 0..c_in {
                    di_row[c] += g * kern[c];
                }
            }
        }
    }
    (d_input, d_kernels, d_bias)
}

// --- ReLU ---------------------------------------------------------------------

pub fn relu_forward(x: &Tensor) -> Tensor {
    Tensor {
        shape: x.shape.clone(),
        data: x.data.iter().map(|&v| v.max(0.0)).collect(),
    }
}

/// Subgradient 0 at the kink.
pub fn relu_backward(x: &Tensor, d_out: &Tensor) -> Tensor {
    Tensor {
        shape: x.shape.clone(),
        data: x
            .data
            .iter()
            .zip(&d_out.data)
            .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
            .collect(),
    }
}

// --- dense --------------------------------------------------------------------

/// Affine map on a batch: `x` is `B x D_in`, `w` is `D_out x D_in`; output
/// `B x D_out`, optionally passed through ReLU by the caller.
pub fn dense_forward(x: &Tensor, w: &Tensor, b: &[f64]) -> Result<Tensor> {
    let (batch, d_in) = (x.shape[0], x.shape[1]);
    let (d_out, wd_in) = (w.shape[0], w.shape[1]);
    if wd_in != d_in {
        return Err(Error::invalid(format!("dense input dim {d_in} != weight dim {wd_in}")));
    }
    let mut out = vec![0.0; batch * d_out];
    for bi in 0..batch {
        let xr = &x.data[bi * d_in..(bi + 1) * d_in];
        for o in 0..d_out {
            let wr = &w.data[o * d_in..(o + 1) * d_in];
            let mut acc = b[o];
            for i in 0..d_in {
                acc += wr[i] * xr[i];
            }
            out[bi * d_out + o] = acc;
        }
    }
    let out = Tensor::new(vec![batch, d_out], out)?;
    out.debug_assert_finite("dense output");
    Ok(out)
}

/// Gradients for [`dense_forward`]: returns `(d_x, d_w, d_b)`.
pub fn dense_backward(x: &Tensor, w: &Tensor, d_out: &Tensor) -> (Tensor, Tensor, Vec<f64>) {
    let (batch, d_in) = (x.shape[0], x.shape[1]);
    let d_o = w.shape[0];
    let mut d_x = Tensor::zeros(vec![batch, d_in]);
    let mut d_w = Tensor::zeros(w.shape.clone());
    let mut d_b = vec![0.0; d_o];
    for bi in 0..batch {
        let xr = &x.data[bi * d_in..(bi + 1) * d_in];
        for o in 0..d_o {
            let g = d_out.data[bi * d_o + o];
            d_b[o] += g;
            let wr = &w.data[o * d_in..(o + 1) * d_in];
            let dwr = &mut d_w.data[o * d_in..(o + 1) * d_in];
            for i in 0..d_in {
                dwr[i] += g * xr[i];
            }
            let dxr = &mut d_x.data[bi * d_in..(bi + 1) * d_in];
            for i in 0..d_in {
                dxr[i] += g * wr[i];
            }
        }
    }
    (d_x, d_w, d_b)
}

// --- attention pooling ----------------------------------------------------------

/// Cache of intermediates needed by the attention backward pass.
#[derive(Debug, Clone)]
pub struct AttentionCache {
    /// tanh(h), `n x D`.
    pub m: Tensor,
    /// Softmax weights, length n.
    pub alpha: Vec<f64>,
}

/// Attention pooling over `n` positions of dimension `D`:
/// `score_i = w . tanh(h_i) + b`, `alpha = softmax(score)`, `r = sum alpha_i h_i`.
pub fn attention_pool_forward(
    h: &Tensor,
    w: &[f64],
    b: f64,
) -> Result<(Vec<f64>, AttentionCache)> {
    let (n, d) = (h.shape[0], h.shape[1]);
    if n == 0 {
        return Err(Error::invalid("attention pooling needs at least one position"));
    }
    let mut m = Tensor::zeros(vec![n, d]);
    let mut scores = vec![0.0; n];
    for i in 0..n {
        let hr = &h.data[i * d..(i + 1) * d];
        let mr = &mut m.data[i * d..(i + 1) * d];
        let mut s = b;
        for c in 0..d {
            mr[c] = hr[c].tanh();
            s += w[c] * mr[c];
        }
        scores[i] = s;
    }
    // stable softmax
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut alpha: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let z: f64 = alpha.iter().sum();
    for a in &mut alpha {
        *a /= z;
    }
    let mut r = vec![0.0; d];
    for i in 0..n {
        let hr = &h.data[i * d..(i + 1) * d];
        for c in 0..d {
            r[c] += alpha[i] * hr[c];
        }
    }
    debug_assert!((alpha.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    Ok((r, AttentionCache { m, alpha }))
}

/// Gradients for attention pooling: returns `(d_h, d_w, d_b)`.
pub fn attention_pool_backward(
    h: &Tensor,
    w: &[f64],
    cache: &AttentionCache,
    d_r: &[f64],
) -> (Tensor, Vec<f64>, f64) {
    let (n, d) = (h.shape[0], h.shape[1]);
    let alpha = &cache.alpha;
    // d_alpha_i = d_r . h_i ; d_score via softmax Jacobian
    let mut d_alpha = vec![0.0; n];
    for i in 0..n {
        let hr = &h.data[i * d..(i + 1) * d];
        d_alpha[i] = d_r.iter().zip(hr).map(|(g, x)| g * x).sum();
    }
    let dot: f64 = alpha.iter().zip(&d_alpha).map(|(a, g)| a * g).sum();
    let d_score: Vec<f64> = (0..n).map(|i| alpha[i] * (d_alpha[i] - dot)).collect();

    let mut d_h = Tensor::zeros(vec![n, d]);
    let mut d_w = vec![0.0; d];
    let mut d_b = 0.0;
    for i in 0..n {
        let mr = &cache.m.data[i * d..(i + 1) * d];
        let dhr = &mut d_h.data[i * d..(i + 1) * d];
        d_b += d_score[i];
        for c in 0..d {
            d_w[c] += d_score[i] * mr[c];
            // through r = sum alpha_i h_i, plus through tanh in the score
            dhr[c] = alpha[i] * d_r[c] + d_score[i] * w[c] * (1.0 - mr[c] * mr[c]);
        }
    }
    (d_h, d_w, d_b)
}

// --- per-channel max pooling ------------------------------------------------------

/// Max over positions per channel; returns the pooled vector and argmax rows.
pub fn maxpool_forward(h: &Tensor) -> Result<(Vec<f64>, Vec<usize>)> {
    let (n, d) = (h.shape[0], h.shape[1]);
    if n == 0 {
        return Err(Error::invalid("max pooling needs at least one position"));
    }
    let mut r = vec![f64::NEG_INFINITY; d];
    let mut argmax = vec![0usize; d];
    for i in 0..n {
        let hr = &h.data[i * d..(i + 1) * d];
        for c in 0..d {
            if hr[c] > r[c] {
                r[c] = hr[c];
                argmax[c] = i;
            }
        }
    }
    Ok((r, argmax))
}

/// Routes the pooled gradient back to each channel's argmax position.
pub fn maxpool_backward(argmax: &[usize], d_r: &[f64], n: usize) -> Tensor {
    let d = d_r.len();
    let mut d_h = Tensor::zeros(vec![n, d]);
    for c in 0..d {
        d_h.data[argmax[c] * d + c] += d_r[c];
    }
    d_h
}

// --- dropout ---------------------------------------------------------------------

/// Inverted-dropout mask: zeros with probability `rate`, survivors scaled by
/// `1/(1-rate)`. Inference mode (or rate 0) returns all ones.
pub fn dropout_mask(len: usize, rate: f64, mode: Mode, seed: u64) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::invalid(format!("dropout rate must be in [0, 1), got {rate}")));
    }
    if mode == Mode::Infer || rate == 0.0 {
        return Ok(vec![1.0; len]);
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let keep = 1.0 - rate;
    Ok((0..len)
        .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{central_diff_grad, compare_grads};

    fn rng(seed: u64) -> ChaCha12Rng {
        ChaCha12Rng::seed_from_u64(seed)
    }

    fn rand_tensor(shape: Vec<usize>, rng: &mut ChaCha12Rng) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn embed_identity_table_gives_one_hot() {
        let v = 4;
        let mut table = Tensor::zeros(vec![v, v]);
        for i in 0..v {
            table.data[i * v + i] = 1.0;
        }
        let out = embed_lookup(&[2, 0, 2], &table).unwrap();
        assert_eq!(out.data[..4], [0.0, 0.0, 1.0, 0.0]);
        assert_eq!(out.data[4..8], [1.0, 0.0, 0.0, 0.0]);
        // repeated index gives identical rows
        assert_eq!(out.data[..4], out.data[8..12]);
        assert!(embed_lookup(&[4], &table).is_err());
    }

    #[test]
    fn embed_gradient_matches_finite_differences() {
        let mut r = rng(1);
        let indices = [1usize, 3, 1, 0, 4, 2];
        let table = rand_tensor(vec![5, 4], &mut r);
        let d_out = rand_tensor(vec![6, 4], &mut r);
        // analytic
        let mut d_table = Tensor::zeros(vec![5, 4]);
        embed_backward(&indices, &d_out, &mut d_table);
        // numeric: loss = sum(d_out .* embed(table))
        let numeric = central_diff_grad(
            &mut table.data.clone(),
            |p| {
                let t = Tensor::new(vec![5, 4], p.to_vec()).unwrap();
                let y = embed_lookup(&indices, &t).unwrap();
                y.data.iter().zip(&d_out.data).map(|(a, b)| a * b).sum()
            },
            1e-5,
        );
        let rep = compare_grads(&d_table.data, &numeric, 1e-6);
        assert!(rep.pass, "max rel err {}", rep.max_rel_err);
    }

    #[test]
    fn conv1d_identity_filter() {
        let input = Tensor::new(vec![4, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let kernels = Tensor::new(vec![1, 1, 1], vec![1.0]).unwrap();
        let out = conv1d_forward(&input, &kernels, &[0.0]).unwrap();
        assert_eq!(out.data, input.data);
    }

    #[test]
    fn conv1d_box_filter() {
        let input = Tensor::new(vec![4, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let kernels = Tensor::new(vec![1, 3, 1], vec![1.0, 1.0, 1.0]).unwrap();
        let out = conv1d_forward(&input, &kernels, &[0.0]).unwrap();
        assert_eq!(out.data, vec![6.0, 9.0]);
        assert!(conv1d_forward(
            &Tensor::new(vec![2, 1], vec![0.0, 0.0]).unwrap(),
            &kernels,
            &[0.0]
        )
        .is_err());
    }

    /// Independent oracle: naive triple-nested loop with no slicing tricks.
    fn conv_oracle(input: &Tensor, kernels: &Tensor, bias: &[f64]) -> Vec<f64> {
        let (t, c) = (input.shape[0], input.shape[1]);
        let (f, k, _) = (kernels.shape[0], kernels.shape[1], kernels.shape[2]);
        let mut out = vec![0.0; (t - k + 1) * f];
        for j in 0..(t - k + 1) {
            for fi in 0..f {
                let mut acc = bias[fi];
                for dk in 0..k {
                    for ci in 0..c {
                        acc += input.data[(j + dk) * c + ci]
                            * kernels.data[fi * k * c + dk * c + ci];
                    }
                }
                out[j * f + fi] = acc;
            }
        }
        out
    }

    #[test]
    fn conv1d_matches_naive_oracle_on_random_shapes() {
        let mut r = rng(2);
        for _ in 0..20 {
            let t = r.gen_range(3..12);
            let c = r.gen_range(1..5);
            let k = r.gen_range(1..=t.min(5));
            let f = r.gen_range(1..6);
            let input = rand_tensor(vec![t, c], &mut r);
            let kernels = rand_tensor(vec![f, k, c], &mut r);
            let bias: Vec<f64> = (0..f).map(|_| r.gen_range(-1.0..1.0)).collect();
            let out = conv1d_forward(&input, &kernels, &bias).unwrap();
            let oracle = conv_oracle(&input, &kernels, &bias);
            for (a, b) in out.data.iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn conv1d_gradients_match_finite_differences() {
        let mut r = rng(3);
        for _ in 0..20 {
            let t = r.gen_range(3..9);
            let c = r.gen_range(1..4);
            let k = r.gen_range(1..=t.min(3));
            let f = r.gen_range(1..4);
            let input = rand_tensor(vec![t, c], &mut r);
            let kernels = rand_tensor(vec![f, k, c], &mut r);
            let bias: Vec<f64> = (0..f).map(|_| r.gen_range(-1.0..1.0)).collect();
            let d_out = rand_tensor(vec![t - k + 1, f], &mut r);
            let (d_in, d_kern, d_bias) = conv1d_backward(&input, &kernels, &d_out);

            let loss = |inp: &Tensor, kern: &Tensor, b: &[f64]| -> f64 {
                conv1d_forward(inp, kern, b)
                    .unwrap()
                    .data
                    .iter()
                    .zip(&d_out.data)
                    .map(|(a, g)| a * g)
                    .sum()
            };
            let num_in = central_diff_grad(
                &mut input.data.clone(),
                |p| loss(&Tensor::new(input.shape.clone(), p.to_vec()).unwrap(), &kernels, &bias),
                1e-5,
            );
            let num_kern = central_diff_grad(
                &mut kernels.data.clone(),
                |p| loss(&input, &Tensor::new(kernels.shape.clone(), p.to_vec()).unwrap(), &bias),
                1e-5,
            );
            let num_bias =
                central_diff_grad(&mut bias.clone(), |p| loss(&input, &kernels, p), 1e-5);
            assert!(compare_grads(&d_in.data, &num_in, 1e-6).pass);
            assert!(compare_grads(&d_kern.data, &num_kern, 1e-6).pass);
            assert!(compare_grads(&d_bias, &num_bias, 1e-6).pass);
        }
    }

    #[test]
    fn relu_values_and_gradient() {
        let x = Tensor::new(vec![1, 3], vec![-1.0, 0.0, 2.0]).unwrap();
        let y = relu_forward(&x);
        assert_eq!(y.data, vec![0.0, 0.0, 2.0]);
        // gradcheck away from kinks (|x| > 1e-3)
        let mut r = rng(4);
        let mut x: Vec<f64> = (0..30)
            .map(|_| {
                let v: f64 = r.gen_range(-1.0..1.0);
                if v.abs() < 1e-3 {
                    v + 0.1
                } else {
                    v
                }
            })
            .collect();
        let d_out = Tensor::new(vec![1, 30], (0..30).map(|_| r.gen_range(-1.0..1.0)).collect())
            .unwrap();
        let xt = Tensor::new(vec![1, 30], x.clone()).unwrap();
        let analytic = relu_backward(&xt, &d_out);
        let numeric = central_diff_grad(
            &mut x,
            |p| {
                let t = Tensor::new(vec![1, 30], p.to_vec()).unwrap();
                relu_forward(&t).data.iter().zip(&d_out.data).map(|(a, g)| a * g).sum()
            },
            1e-5,
        );
        assert!(compare_grads(&analytic.data, &numeric, 1e-6).pass);
    }

    #[test]
    fn dense_identity_and_zero_weight() {
        let x = Tensor::new(vec![1, 3], vec![1.0, -2.0, 0.5]).unwrap();
        let mut w = Tensor::zeros(vec![3, 3]);
        for i in 0..3 {
            w.data[i * 3 + i] = 1.0;
        }
        let y = dense_forward(&x, &w, &[0.0; 3]).unwrap();
        assert_eq!(y.data, x.data);
        let zero_w = Tensor::zeros(vec![2, 3]);
        let y = dense_forward(&x, &zero_w, &[0.3, -0.7]).unwrap();
        assert_eq!(y.data, vec![0.3, -0.7]);
    }

    #[test]
    fn dense_gradients_match_finite_differences() {
        let mut r = rng(5);
        for _ in 0..20 {
            let b = r.gen_range(1..4);
            let d_in = r.gen_range(1..6);
            let d_o = r.gen_range(1..6);
            let x = rand_tensor(vec![b, d_in], &mut r);
            let w = rand_tensor(vec![d_o, d_in], &mut r);
            let bias: Vec<f64> = (0..d_o).map(|_| r.gen_range(-1.0..1.0)).collect();
            let d_out = rand_tensor(vec![b, d_o], &mut r);
            let (d_x, d_w, d_b) = dense_backward(&x, &w, &d_out);
            let loss = |x: &Tensor, w: &Tensor, bias: &[f64]| -> f64 {
                dense_forward(x, w, bias)
                    .unwrap()
                    .data
                    .iter()
                    .zip(&d_out.data)
                    .map(|(a, g)| a * g)
                    .sum()
            };
            let num_x = central_diff_grad(
                &mut x.data.clone(),
                |p| loss(&Tensor::new(x.shape.clone(), p.to_vec()).unwrap(), &w, &bias),
                1e-5,
            );
            let num_w = central_diff_grad(
                &mut w.data.clone(),
                |p| loss(&x, &Tensor::new(w.shape.clone(), p.to_vec()).unwrap(), &bias),
                1e-5,
            );
            let num_b = central_diff_grad(&mut bias.clone(), |p| loss(&x, &w, p), 1e-5);
            assert!(compare_grads(&d_x.data, &num_x, 1e-6).pass);
            assert!(compare_grads(&d_w.data, &num_w, 1e-6).pass);
            assert!(compare_grads(&d_b, &num_b, 1e-6).pass);
        }
    }

    #[test]
    fn attention_symmetry_and_single_row() {
        let mut r = rng(6);
        let v: Vec<f64> = (0..4).map(|_| r.gen_range(-1.0..1.0)).collect();
        let mut rows = Vec::new();
        for _ in 0..5 {
            rows.extend_from_slice(&v);
        }
        let h = Tensor::new(vec![5, 4], rows).unwrap();
        let w: Vec<f64> = (0..4).map(|_| r.gen_range(-1.0..1.0)).collect();
        let (out, cache) = attention_pool_forward(&h, &w, 0.2).unwrap();
        for a in &cache.alpha {
            assert!((a - 0.2).abs() < 1e-12);
        }
        for (o, x) in out.iter().zip(&v) {
            assert!((o - x).abs() < 1e-12);
        }

        let single = Tensor::new(vec![1, 4], v.clone()).unwrap();
        let (out, cache) = attention_pool_forward(&single, &w, 0.0).unwrap();
        assert_eq!(cache.alpha, vec![1.0]);
        assert_eq!(out, v);

        assert!(attention_pool_forward(&Tensor::zeros(vec![0, 4]), &w, 0.0).is_err());
    }

    #[test]
    fn attention_gradients_match_finite_differences() {
        let mut r = rng(7);
        for _ in 0..20 {
            let n = r.gen_range(1..7);
            let d = r.gen_range(1..6);
            let h = rand_tensor(vec![n, d], &mut r);
            let w: Vec<f64> = (0..d).map(|_| r.gen_range(-1.0..1.0)).collect();
            let b: f64 = r.gen_range(-1.0..1.0);
            let d_r: Vec<f64> = (0..d).map(|_| r.gen_range(-1.0..1.0)).collect();

            let (_, cache) = attention_pool_forward(&h, &w, b).unwrap();
            let (d_h, d_w, d_b) = attention_pool_backward(&h, &w, &cache, &d_r);

            let loss = |h: &Tensor, w: &[f64], b: f64| -> f64 {
                let (out, _) = attention_pool_forward(h, w, b).unwrap();
                out.iter().zip(&d_r).map(|(a, g)| a * g).sum()
            };
            let num_h = central_diff_grad(
                &mut h.data.clone(),
                |p| loss(&Tensor::new(h.shape.clone(), p.to_vec()).unwrap(), &w, b),
                1e-5,
            );
            let num_w = central_diff_grad(&mut w.clone(), |p| loss(&h, p, b), 1e-5);
            let num_b = central_diff_grad(&mut [b], |p| loss(&h, &w, p[0]), 1e-5);
            assert!(compare_grads(&d_h.data, &num_h, 1e-5).pass);
            assert!(compare_grads(&d_w, &num_w, 1e-5).pass);
            assert!(compare_grads(&[d_b], &num_b, 1e-5).pass);
        }
    }

    #[test]
    fn maxpool_routes_gradient_to_argmax() {
        let h = Tensor::new(vec![3, 2], vec![1.0, 5.0, 4.0, 2.0, 3.0, 0.0]).unwrap();
        let (r, argmax) = maxpool_forward(&h).unwrap();
        assert_eq!(r, vec![4.0, 5.0]);
        assert_eq!(argmax, vec![1, 0]);
        let d_h = maxpool_backward(&argmax, &[1.0, 2.0], 3);
        assert_eq!(d_h.data, vec![0.0, 2.0, 1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn dropout_mask_properties() {
        assert_eq!(dropout_mask(5, 0.0, Mode::Train, 0).unwrap(), vec![1.0; 5]);
        assert_eq!(dropout_mask(5, 0.6, Mode::Infer, 0).unwrap(), vec![1.0; 5]);
        assert!(dropout_mask(5, 1.0, Mode::Train, 0).is_err());

        let mask = dropout_mask(100_000, 0.6, Mode::Train, 9).unwrap();
        let kept = mask.iter().filter(|&&m| m > 0.0).count() as f64 / 100_000.0;
        assert!((kept - 0.4).abs() < 0.01, "keep fraction {kept}");
        for &m in &mask {
            assert!(m == 0.0 || (m - 2.5).abs() < 1e-12);
        }
    }
}
