//! Softmax cross-entropy with a numerically stable log-sum-exp.

use crate::error::{Error, Result};

/// Returns `(loss, probs, grad_logits)` for one sample.
/// `loss = -log softmax(logits)[label]`, `grad = probs - onehot(label)`.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    if label >= logits.len() {
        return Err(Error::invalid(format!(
            "label {label} out of range for {} classes",
            logits.len()
        )));
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    let probs: Vec<f64> = exps.iter().map(|e| e / z).collect();
    // -log(p) via the stable form max + log z - logit
    let loss = (max + z.ln()) - logits[label];
    let mut grad = probs.clone();
    grad[label] -= 1.0;
    Ok((loss, probs, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{central_diff_grad, compare_grads};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn symmetric_logits_give_ln2() {
        let (loss, probs, _) = softmax_cross_entropy(&[0.0, 0.0], 0).unwrap();
        assert!((probs[0] - 0.5).abs() < 1e-12);
        assert!((probs[1] - 0.5).abs() < 1e-12);
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn saturated_logits_are_stable() {
        let (loss, probs, grad) = softmax_cross_entropy(&[30.0, -30.0], 0).unwrap();
        assert!(loss >= 0.0 && loss < 1e-20);
        assert!(probs.iter().all(|p| p.is_finite()));
        assert!(grad.iter().all(|g| g.is_finite()));
        // extreme values must not overflow either
        let (loss, _, _) = softmax_cross_entropy(&[1e4, -1e4], 1).unwrap();
        assert!(loss.is_finite());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for _ in 0..20 {
            let c = rng.gen_range(2..6);
            let logits: Vec<f64> = (0..c).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let label = rng.gen_range(0..c);
            let (_, _, grad) = softmax_cross_entropy(&logits, label).unwrap();
            let numeric = central_diff_grad(
                &mut logits.clone(),
                |p| softmax_cross_entropy(p, label).unwrap().0,
                1e-5,
            );
            assert!(compare_grads(&grad, &numeric, 1e-6).pass);
        }
    }

    #[test]
    fn rejects_out_of_range_label() {
        assert!(softmax_cross_entropy(&[0.0, 0.0], 2).is_err());
    }
}
