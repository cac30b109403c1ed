//! Small dense-vector helpers shared by the models and metrics.

/// Numerically stable log-softmax of `logits` into `out`.
pub fn log_softmax_into(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|&z| (z - max).exp()).sum();
    let log_z = max + sum.ln();
    for (o, &z) in out.iter_mut().zip(logits) {
        *o = z - log_z;
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; logits.len()];
    log_softmax_into(logits, &mut out);
    out.iter_mut().for_each(|v| *v = v.exp());
    out
}

/// Softmax followed by flooring every entry at `floor` and renormalizing.
pub fn floored_softmax(logits: &[f64], floor: f64) -> Vec<f64> {
    let mut p = softmax(logits);
    apply_floor(&mut p, floor);
    p
}

pub fn apply_floor(p: &mut [f64], floor: f64) {
    if floor <= 0.0 {
        return;
    }
    let mut total = 0.0;
    for v in p.iter_mut() {
        *v = v.max(floor);
        total += *v;
    }
    p.iter_mut().for_each(|v| *v /= total);
}

/// Index of the maximum; ties go to the smallest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Shannon entropy in nats; zero entries contribute nothing.
pub fn entropy(p: impl IntoIterator<Item = f64>) -> f64 {
    p.into_iter().filter(|&v| v > 0.0).map(|v| -v * v.ln()).sum()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
