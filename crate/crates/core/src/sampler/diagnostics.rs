//! Fixed-width convergence diagnostics via non-overlapping batch means.

/// Monte Carlo standard error of the mean of `trace` using non-overlapping
/// batch means with batch size ⌊√n⌋. Returns None when the trace is too
/// short for at least two batches of size two, below which batch means
/// cannot absorb any autocorrelation.
pub fn batch_means_mcse(trace: &[f64]) -> Option<f64> {
    let n = trace.len();
    let batch = (n as f64).sqrt().floor() as usize;
    if batch < 2 {
        return None;
    }
    let n_batches = n / batch;
    if n_batches < 2 {
        return None;
    }
    let used = n_batches * batch;
    let grand_mean: f64 = trace[..used].iter().sum::<f64>() / used as f64;
    let mut ss = 0.0;
    for k in 0..n_batches {
        let mean: f64 = trace[k * batch..(k + 1) * batch].iter().sum::<f64>() / batch as f64;
        ss += (mean - grand_mean) * (mean - grand_mean);
    }
    let var_bm = batch as f64 * ss / (n_batches as f64 - 1.0);
    Some((var_bm / used as f64).sqrt())
}
