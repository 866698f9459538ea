//! Interval estimates for violation probabilities.

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Wilson score interval around `p_hat` for an effective sample size `n_eff`,
/// which may be fractional after a variance inflation correction.
pub fn wilson_interval(p_hat: f64, n_eff: f64, z: f64) -> (f64, f64) {
    if n_eff <= 0.0 {
        return (0.0, 1.0);
    }
    let z2 = z * z;
    let denom = 1.0 + z2 / n_eff;
    let centre = (p_hat + z2 / (2.0 * n_eff)) / denom;
    let half = z * (p_hat * (1.0 - p_hat) / n_eff + z2 / (4.0 * n_eff * n_eff)).sqrt() / denom;
    let lo = if p_hat <= 0.0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if p_hat >= 1.0 { 1.0 } else { (centre + half).min(1.0) };
    (lo, hi)
}

/// Variance inflation of a 0/1 sample stream, from equal-length batch
/// counts. Returns 1 when there are fewer than two batches or the stream is
/// constant; never less than 1.
pub fn batch_means_vif(batch_counts: &[u64], batch_len: u64) -> f64 {
    let k = batch_counts.len();
    if k < 2 || batch_len == 0 {
        return 1.0;
    }
    let len = batch_len as f64;
    let props: Vec<f64> = batch_counts.iter().map(|&c| c as f64 / len).collect();
    let mean = props.iter().sum::<f64>() / k as f64;
    let iid_var = mean * (1.0 - mean);
    if iid_var <= 0.0 {
        return 1.0;
    }
    let s2 = props.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
    (s2 * len / iid_var).max(1.0)
}
