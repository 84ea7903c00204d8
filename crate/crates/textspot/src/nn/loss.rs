use super::{NnError, Tensor};

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Mean smooth-L1 (Huber) loss. Returns the scalar and d(loss)/d(pred).
pub fn smooth_l1(pred: &Tensor, target: &Tensor, beta: f64) -> Result<(f64, Tensor), NnError> {
    if pred.shape != target.shape {
        return Err(NnError::Shape("smooth_l1 shapes disagree".into()));
    }
    assert!(beta > 0.0, "beta must be positive");
    let n = pred.len().max(1) as f64;
    let mut loss = 0.0;
    let mut grad = Tensor::zeros(&pred.shape);
    for i in 0..pred.len() {
        let x = pred.data[i] - target.data[i];
        if x.abs() < beta {
            loss += 0.5 * x * x / beta;
            grad.data[i] = x / beta / n;
        } else {
            loss += x.abs() - 0.5 * beta;
            grad.data[i] = x.signum() / n;
        }
    }
    Ok((loss / n, grad))
}

/// Sigmoid focal loss over binary targets, summed over cells where
/// `valid[i] != 0` and normalized by `normalizer`. Returns d(loss)/d(logits).
pub fn focal_loss(
    logits: &Tensor,
    targets: &Tensor,
    valid: &Tensor,
    alpha: f64,
    gamma: f64,
    normalizer: f64,
) -> Result<(f64, Tensor), NnError> {
    if logits.shape != targets.shape || logits.shape != valid.shape {
        return Err(NnError::Shape("focal_loss shapes disagree".into()));
    }
    let norm = normalizer.max(1.0);
    let mut loss = 0.0;
    let mut grad = Tensor::zeros(&logits.shape);
    for i in 0..logits.len() {
        if valid.data[i] == 0.0 {
            continue;
        }
        let p = sigmoid(logits.data[i]).clamp(1e-12, 1.0 - 1e-12);
        let dp_dx = p * (1.0 - p);
        if targets.data[i] > 0.5 {
            loss += -alpha * (1.0 - p).powf(gamma) * p.ln();
            let dl_dp =
                -alpha * (-gamma * (1.0 - p).powf(gamma - 1.0) * p.ln() + (1.0 - p).powf(gamma) / p);
            grad.data[i] = dl_dp * dp_dx / norm;
        } else {
            loss += -(1.0 - alpha) * p.powf(gamma) * (1.0 - p).ln();
            let dl_dp = -(1.0 - alpha)
                * (gamma * p.powf(gamma - 1.0) * (1.0 - p).ln() - p.powf(gamma) / (1.0 - p));
            grad.data[i] = dl_dp * dp_dx / norm;
        }
    }
    Ok((loss / norm, grad))
}

/// Binary cross-entropy on logits, averaged over elements.
pub fn bce_with_logits(logits: &Tensor, targets: &Tensor) -> Result<(f64, Tensor), NnError> {
    if logits.shape != targets.shape {
        return Err(NnError::Shape("bce shapes disagree".into()));
    }
    let n = logits.len().max(1) as f64;
    let mut loss = 0.0;
    let mut grad = Tensor::zeros(&logits.shape);
    for i in 0..logits.len() {
        let x = logits.data[i];
        let t = targets.data[i];
        // Numerically stable form: max(x,0) - x t + ln(1 + e^{-|x|}).
        loss += x.max(0.0) - x * t + (1.0 + (-x.abs()).exp()).ln();
        grad.data[i] = (sigmoid(x) - t) / n;
    }
    Ok((loss / n, grad))
}

/// Softmax cross-entropy over class logits [positions, n_class]. Positions
/// whose label equals `ignore_index` (when given) contribute nothing; the
/// loss is averaged over the remaining positions.
pub fn cross_entropy(
    logits: &Tensor,
    labels: &[usize],
    ignore_index: Option<usize>,
) -> Result<(f64, Tensor), NnError> {
    if logits.shape.len() != 2 || logits.shape[0] != labels.len() {
        return Err(NnError::Shape("cross_entropy shapes disagree".into()));
    }
    let n_class = logits.shape[1];
    let mut count = 0usize;
    for &l in labels {
        if Some(l) == ignore_index {
            continue;
        }
        if l >= n_class {
            return Err(NnError::Shape(format!("label {l} out of {n_class} classes")));
        }
        count += 1;
    }
    let norm = count.max(1) as f64;
    let mut loss = 0.0;
    let mut grad = Tensor::zeros(&logits.shape);
    for (pos, &label) in labels.iter().enumerate() {
        if Some(label) == ignore_index {
            continue;
        }
        let row = &logits.data[pos * n_class..(pos + 1) * n_class];
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - m).exp()).sum();
        loss += -(row[label] - m - sum.ln());
        let g = &mut grad.data[pos * n_class..(pos + 1) * n_class];
        for j in 0..n_class {
            let p = (row[j] - m).exp() / sum;
            g[j] = (p - if j == label { 1.0 } else { 0.0 }) / norm;
        }
    }
    Ok((loss / norm, grad))
}
