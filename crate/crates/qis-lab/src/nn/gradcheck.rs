//! Central-finite-difference gradient verification.

/// Outcome of comparing analytic against numeric gradients.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub n_checked: usize,
    pub tolerance: f64,
    pub pass: bool,
}

/// Numeric gradient of `f` at `params` with central differences of `step`.
/// `params` is restored to its original values before returning.
pub fn central_diff_grad(
    params: &mut [f64],
    mut f: impl FnMut(&[f64]) -> f64,
    step: f64,
) -> Vec<f64> {
    let mut grad = vec![0.0; params.len()];
    for i in 0..params.len() {
        let orig = params[i];
        params[i] = orig + step;
        let plus = f(params);
        params[i] = orig - step;
        let minus = f(params);
        params[i] = orig;
        grad[i] = (plus - minus) / (2.0 * step);
    }
    grad
}

/// Per-parameter relative error `|a - n| / max(|a|, |n|)`; pairs where both
/// magnitudes are below 1e-8 count as exact.
pub fn compare_grads(analytic: &[f64], numeric: &[f64], tolerance: f64) -> GradCheckReport {
    assert_eq!(analytic.len(), numeric.len());
    let mut max_rel = 0.0f64;
    for (&a, &n) in analytic.iter().zip(numeric) {
        let scale = a.abs().max(n.abs());
        if scale < 1e-8 {
            continue;
        }
        max_rel = max_rel.max((a - n).abs() / scale);
    }
    GradCheckReport {
        max_rel_err: max_rel,
        n_checked: analytic.len(),
        tolerance,
        pass: max_rel < tolerance,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_function_passes_tightly() {
        let coeffs = [2.0, -3.0, 0.5];
        let mut params = vec![1.0, 2.0, 3.0];
        let numeric = central_diff_grad(
            &mut params,
            |p| p.iter().zip(&coeffs).map(|(x, c)| x * c).sum(),
            1e-5,
        );
        let rep = compare_grads(&coeffs, &numeric, 1e-6);
        assert!(rep.pass, "max rel err {}", rep.max_rel_err);
        assert_eq!(params, vec![1.0, 2.0, 3.0]); // restored
    }

    #[test]
    fn corrupted_gradient_fails() {
        let mut params = vec![0.7, -0.2];
        let numeric = central_diff_grad(&mut params, |p| p[0] * p[0] + p[1], 1e-5);
        let corrupted = [2.0 * 0.7 + 0.5, 1.0];
        let rep = compare_grads(&corrupted, &numeric, 1e-4);
        assert!(!rep.pass);
    }
}
