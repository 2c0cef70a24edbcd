use ndarray::{Array1, ArrayView1};

fn log_softmax(logits: ArrayView1<f64>) -> Array1<f64> {
    let max = logits.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let lse = max + logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    logits.mapv(|v| v - lse)
}

/// Cross-entropy against the smoothed target `q` (`1 - s + s/K` on the true
/// class, `s/K` elsewhere). Returns the loss and `softmax(logits) - q`.
pub fn smoothed_cross_entropy(logits: ArrayView1<f64>, target: usize, smoothing: f64) -> (f64, Array1<f64>) {
    let k = logits.len();
    assert!(k >= 2 && target < k, "need K >= 2 and target < K");
    let logp = log_softmax(logits);
    let off = smoothing / k as f64;
    let q = |i: usize| if i == target { 1.0 - smoothing + off } else { off };
    let loss = -logp.iter().enumerate().map(|(i, lp)| q(i) * lp).sum::<f64>();
    let grad = Array1::from_shape_fn(k, |i| logp[i].exp() - q(i));
    (loss, grad)
}

/// Plain cross-entropy (no smoothing).
pub fn cross_entropy(logits: ArrayView1<f64>, target: usize) -> (f64, Array1<f64>) {
    smoothed_cross_entropy(logits, target, 0.0)
}
