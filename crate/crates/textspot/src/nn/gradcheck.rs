use super::NnError;

/// Central finite-difference check of an analytic gradient.
///
/// `f` evaluates a scalar-reduced forward pass at the given flat input.
/// `analytic` is the full analytic gradient at `x`. Returns the maximum over
/// coordinates of |a - fd| / max(1e-8, |a| + |fd|).
pub fn grad_check<F>(f: F, x: &[f64], analytic: &[f64], eps: f64) -> Result<f64, NnError>
where
    F: Fn(&[f64]) -> f64,
{
    assert_eq!(x.len(), analytic.len());
    assert!((1e-5..=1e-2).contains(&eps), "eps out of sensible range");
    let mut probe = x.to_vec();
    let mut max_err: f64 = 0.0;
    for i in 0..x.len() {
        probe[i] = x[i] + eps;
        let fp = f(&probe);
        probe[i] = x[i] - eps;
        let fm = f(&probe);
        probe[i] = x[i];
        if !fp.is_finite() || !fm.is_finite() {
            return Err(NnError::NonFinite("grad_check forward".into()));
        }
        let fd = (fp - fm) / (2.0 * eps);
        let a = analytic[i];
        let err = (a - fd).abs() / (a.abs() + fd.abs()).max(1e-8);
        max_err = max_err.max(err);
    }
    Ok(max_err)
}

/// Convenience wrapper for ops exposed as forward + backward closures: the
/// forward returns the scalar, the backward returns the gradient at `x`.
pub fn grad_check_op<F, B>(forward: F, backward: B, x: &[f64], eps: f64) -> Result<f64, NnError>
where
    F: Fn(&[f64]) -> f64,
    B: Fn(&[f64]) -> Vec<f64>,
{
    let analytic = backward(x);
    grad_check(forward, x, &analytic, eps)
}
