//! Classification and estimation metrics for the simulation tables.
//!
//! Activation maps are scored with accuracy, precision, recall, F1, and a
//! rank-based (Mann-Whitney) ROC-AUC with the usual half-credit tie
//! correction. Coefficient recovery is summarized by the OLS slope of
//! estimates on true values, intercept included, over all voxels. Repeated
//! simulations aggregate to mean/min/max/sd per metric.

use crate::error::{Error, Result};
use crate::sampler::PosteriorSummary;

/// Classification tallies; "positive" means active.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        (self.tp + self.tn) as f64 / self.total() as f64
    }

    /// tp/(tp+fp); 0 with `degenerate` when the model declared nothing.
    pub fn precision(&self) -> (f64, bool) {
        if self.tp + self.fp == 0 {
            (0.0, true)
        } else {
            (self.tp as f64 / (self.tp + self.fp) as f64, false)
        }
    }

    /// tp/(tp+fn); 0 with `degenerate` when the truth has no positives.
    pub fn recall(&self) -> (f64, bool) {
        if self.tp + self.fn_ == 0 {
            (0.0, true)
        } else {
            (self.tp as f64 / (self.tp + self.fn_) as f64, false)
        }
    }

    /// Harmonic mean of precision and recall; 0 with `degenerate` when
    /// either is degenerate or both vanish.
    pub fn f1(&self) -> (f64, bool) {
        let (p, dp) = self.precision();
        let (r, dr) = self.recall();
        if dp || dr || p + r == 0.0 {
            (0.0, true)
        } else {
            (2.0 * p * r / (p + r), false)
        }
    }
}

pub fn confusion(truth: &[u8], predicted: &[u8]) -> Result<ConfusionCounts> {
    if truth.len() != predicted.len() {
        return Err(Error::Shape("truth and prediction lengths differ".into()));
    }
    let mut counts = ConfusionCounts {
        tp: 0,
        fp: 0,
        tn: 0,
        fn_: 0,
    };
    for (&t, &p) in truth.iter().zip(predicted) {
        match (t != 0, p != 0) {
            (true, true) => counts.tp += 1,
            (false, true) => counts.fp += 1,
            (false, false) => counts.tn += 1,
            (true, false) => counts.fn_ += 1,
        }
    }
    Ok(counts)
}

/// Mann-Whitney AUC: the average of midranks of positive scores, shifted and
/// scaled, which counts each (positive, negative) pair as 1 for a correctly
/// ordered pair and 1/2 for a tie. O(V log V).
pub fn auc(truth: &[u8], scores: &[f64]) -> Result<f64> {
    if truth.len() != scores.len() {
        return Err(Error::Shape("truth and score lengths differ".into()));
    }
    if scores.iter().any(|s| !(0.0..=1.0).contains(s)) {
        return Err(Error::InvalidArgument("scores must lie in [0, 1]".into()));
    }
    let n_pos = truth.iter().filter(|&&t| t != 0).count();
    let n_neg = truth.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::AucUndefined);
    }
    let mut order: Vec<usize> = (0..truth.len()).collect();
    order.sort_by(|&i, &j| scores[i].total_cmp(&scores[j]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // ranks are 1-based; every member of a tie group takes the midrank
        let midrank = (i + 1 + j) as f64 / 2.0;
        for &v in &order[i..j] {
            if truth[v] != 0 {
                rank_sum += midrank;
            }
        }
        i = j;
    }
    let n_pos = n_pos as f64;
    Ok((rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg as f64))
}

/// OLS slope of `estimates` on `true_values`, intercept included.
pub fn slope(true_values: &[f64], estimates: &[f64]) -> Result<f64> {
    if true_values.len() != estimates.len() {
        return Err(Error::Shape("truth and estimate lengths differ".into()));
    }
    let n = true_values.len() as f64;
    let mean_t = true_values.iter().sum::<f64>() / n;
    let mean_e = estimates.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&t, &e) in true_values.iter().zip(estimates) {
        sxx += (t - mean_t) * (t - mean_t);
        sxy += (t - mean_t) * (e - mean_e);
    }
    if sxx == 0.0 {
        return Err(Error::ZeroTruthVariance);
    }
    Ok(sxy / sxx)
}

/// One simulation's worth of Table 1 columns.
#[derive(Debug, Clone, Copy)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc: f64,
    /// Any of precision/recall/F1 hit a zero denominator.
    pub degenerate: bool,
    pub beta1_slope: Option<f64>,
    pub gamma1_slope: Option<f64>,
    pub runtime_seconds: f64,
}

/// Scores a model's activation call against the truth. `scores` are the
/// posterior probabilities backing `predicted`; slopes are optional since MO
/// has no phase estimate and degenerate truths have no slope.
pub fn report(
    truth: &[u8],
    predicted: &[u8],
    scores: &[f64],
    beta1_slope: Option<f64>,
    gamma1_slope: Option<f64>,
    runtime_seconds: f64,
) -> Result<MetricsReport> {
    let counts = confusion(truth, predicted)?;
    let (precision, dp) = counts.precision();
    let (recall, dr) = counts.recall();
    let (f1, df) = counts.f1();
    Ok(MetricsReport {
        accuracy: counts.accuracy(),
        precision,
        recall,
        f1,
        auc: auc(truth, scores)?,
        degenerate: dp || dr || df,
        beta1_slope,
        gamma1_slope,
        runtime_seconds,
    })
}

/// Combined activation call for the polar model: a voxel is scored by the
/// larger of its magnitude and phase posterior probabilities, against the
/// union of the two truth maps.
pub fn combined_scores(summary: &PosteriorSummary) -> Vec<f64> {
    match &summary.prob_omega {
        Some(prob_omega) => summary
            .prob_lambda
            .iter()
            .zip(prob_omega)
            .map(|(&l, &o)| l.max(o))
            .collect(),
        None => summary.prob_lambda.clone(),
    }
}

pub fn union_truth(mag: &[u8], phase: &[u8]) -> Vec<u8> {
    mag.iter().zip(phase).map(|(&m, &p)| (m | p != 0) as u8).collect()
}

pub fn combined_active(summary: &PosteriorSummary) -> Vec<u8> {
    match &summary.active_phase {
        Some(phase) => summary
            .active_mag
            .iter()
            .zip(phase)
            .map(|(&m, &p)| (m | p != 0) as u8)
            .collect(),
        None => summary.active_mag.clone(),
    }
}

/// mean (min, max, sd) for one metric across simulations.
#[derive(Debug, Clone, Copy)]
pub struct MetricSummary {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub sd: f64,
    pub count: usize,
}

fn summarize(values: &[f64]) -> Option<MetricSummary> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Some(MetricSummary {
        mean,
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        sd: var.sqrt(),
        count: values.len(),
    })
}

/// Table 3 layout: per-metric summaries over repeated simulations. Slope
/// entries absent from some reports are skipped, with the surviving count
/// recorded.
#[derive(Debug, Clone)]
pub struct AggregateReport {
    pub accuracy: MetricSummary,
    pub precision: MetricSummary,
    pub recall: MetricSummary,
    pub f1: MetricSummary,
    pub auc: MetricSummary,
    pub beta1_slope: Option<MetricSummary>,
    pub gamma1_slope: Option<MetricSummary>,
    pub runtime_seconds: MetricSummary,
}

pub fn aggregate(reports: &[MetricsReport]) -> Result<AggregateReport> {
    if reports.is_empty() {
        return Err(Error::InvalidArgument("no reports to aggregate".into()));
    }
    let collect = |f: &dyn Fn(&MetricsReport) -> f64| -> Vec<f64> {
        reports.iter().map(f).collect()
    };
    let optional = |f: &dyn Fn(&MetricsReport) -> Option<f64>| -> Vec<f64> {
        reports.iter().filter_map(f).collect()
    };
    Ok(AggregateReport {
        accuracy: summarize(&collect(&|r| r.accuracy)).unwrap(),
        precision: summarize(&collect(&|r| r.precision)).unwrap(),
        recall: summarize(&collect(&|r| r.recall)).unwrap(),
        f1: summarize(&collect(&|r| r.f1)).unwrap(),
        auc: summarize(&collect(&|r| r.auc)).unwrap(),
        beta1_slope: summarize(&optional(&|r| r.beta1_slope)),
        gamma1_slope: summarize(&optional(&|r| r.gamma1_slope)),
        runtime_seconds: summarize(&collect(&|r| r.runtime_seconds)).unwrap(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference::auc_bruteforce;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn confusion_enumeration() {
        let c = confusion(&[1, 1, 0, 0], &[1, 0, 1, 0]).unwrap();
        assert_eq!(
            c,
            ConfusionCounts {
                tp: 1,
                fn_: 1,
                fp: 1,
                tn: 1
            }
        );
        assert_relative_eq!(c.accuracy(), 0.5);
        assert_eq!(c.total(), 4);
    }

    #[test]
    fn perfect_prediction() {
        let c = confusion(&[1, 0, 1], &[1, 0, 1]).unwrap();
        assert_eq!(c.fp + c.fn_, 0);
        assert_relative_eq!(c.accuracy(), 1.0);
        assert_eq!(c.precision(), (1.0, false));
        assert_eq!(c.recall(), (1.0, false));
        assert_eq!(c.f1(), (1.0, false));
    }

    #[test]
    fn degenerate_counts_flagged_as_zero() {
        // all-inactive truth, all-active prediction
        let c = confusion(&[0, 0, 0], &[1, 1, 1]).unwrap();
        assert_eq!(c.precision(), (0.0, false));
        assert_eq!(c.recall(), (0.0, true));
        assert_eq!(c.f1(), (0.0, true));
        // nothing declared at all
        let c = confusion(&[1, 0], &[0, 0]).unwrap();
        assert_eq!(c.precision(), (0.0, true));
    }

    #[test]
    fn confusion_rejects_length_mismatch() {
        assert!(confusion(&[1, 0], &[1]).is_err());
    }

    #[test]
    fn auc_separable_and_tied_cases() {
        assert_relative_eq!(auc(&[0, 0, 1, 1], &[0.1, 0.2, 0.8, 0.9]).unwrap(), 1.0);
        assert_relative_eq!(auc(&[0, 0, 1, 1], &[0.5, 0.5, 0.5, 0.5]).unwrap(), 0.5);
        assert_relative_eq!(auc(&[1, 1, 0, 0], &[0.1, 0.2, 0.8, 0.9]).unwrap(), 0.0);
        assert!(matches!(
            auc(&[1, 1], &[0.1, 0.9]),
            Err(crate::error::Error::AucUndefined)
        ));
        assert!(auc(&[1, 0], &[1.5, 0.0]).is_err());
    }

    #[test]
    fn auc_matches_pairwise_bruteforce() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for v in [20usize, 50, 200] {
            for _ in 0..20 {
                let truth: Vec<u8> = (0..v).map(|_| rng.random_bool(0.4) as u8).collect();
                if truth.iter().all(|&t| t == 0) || truth.iter().all(|&t| t == 1) {
                    continue;
                }
                // coarse grid forces plenty of ties
                let scores: Vec<f64> = (0..v)
                    .map(|_| (rng.random::<f64>() * 10.0).round() / 10.0)
                    .collect();
                let fast = auc(&truth, &scores).unwrap();
                let brute = auc_bruteforce(&truth, &scores).unwrap();
                assert_eq!(fast, brute, "v={}", v);
            }
        }
    }

    #[test]
    fn slope_trivial_cases() {
        let truth = [0.0, 1.0, 2.0, 3.0];
        assert_relative_eq!(slope(&truth, &truth).unwrap(), 1.0);
        let doubled: Vec<f64> = truth.iter().map(|t| 2.0 * t).collect();
        assert_relative_eq!(slope(&truth, &doubled).unwrap(), 2.0);
        let shifted: Vec<f64> = truth.iter().map(|t| t + 5.0).collect();
        assert_relative_eq!(slope(&truth, &shifted).unwrap(), 1.0, epsilon = 1e-12);
        assert!(matches!(
            slope(&[1.0, 1.0], &[0.0, 2.0]),
            Err(crate::error::Error::ZeroTruthVariance)
        ));
    }

    #[test]
    fn slope_is_consistent_under_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let truth: Vec<f64> = (0..2500).map(|_| rng.random::<f64>()).collect();
        let noisy: Vec<f64> = truth
            .iter()
            .map(|&t| {
                let u1: f64 = rng.random();
                let u2: f64 = rng.random();
                let z = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
                t + 0.05 * z
            })
            .collect();
        let s = slope(&truth, &noisy).unwrap();
        assert!((s - 1.0).abs() < 0.02, "slope {}", s);
    }

    #[test]
    fn aggregate_matches_two_pass_oracle() {
        let base = MetricsReport {
            accuracy: 0.0,
            precision: 0.0,
            recall: 0.0,
            f1: 0.0,
            auc: 0.0,
            degenerate: false,
            beta1_slope: None,
            gamma1_slope: None,
            runtime_seconds: 0.0,
        };
        let single = aggregate(&[MetricsReport {
            accuracy: 0.9,
            ..base
        }])
        .unwrap();
        assert_relative_eq!(single.accuracy.mean, 0.9);
        assert_relative_eq!(single.accuracy.sd, 0.0);

        let pair = aggregate(&[
            MetricsReport {
                auc: 0.9,
                beta1_slope: Some(1.1),
                ..base
            },
            MetricsReport { auc: 1.0, ..base },
        ])
        .unwrap();
        assert_relative_eq!(pair.auc.mean, 0.95);
        assert_relative_eq!(pair.auc.min, 0.9);
        assert_relative_eq!(pair.auc.max, 1.0);
        let slope_summary = pair.beta1_slope.unwrap();
        assert_eq!(slope_summary.count, 1);
        assert_relative_eq!(slope_summary.mean, 1.1);
        assert!(pair.gamma1_slope.is_none());

        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let reports: Vec<MetricsReport> = (0..100)
            .map(|_| MetricsReport {
                accuracy: rng.random(),
                ..base
            })
            .collect();
        let agg = aggregate(&reports).unwrap();
        let values: Vec<f64> = reports.iter().map(|r| r.accuracy).collect();
        let mean = values.iter().sum::<f64>() / 100.0;
        let sd =
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 100.0).sqrt();
        assert_relative_eq!(agg.accuracy.mean, mean, epsilon = 1e-12);
        assert_relative_eq!(agg.accuracy.sd, sd, epsilon = 1e-12);
        assert!(aggregate(&[]).is_err());
    }

    #[test]
    fn union_and_combination_helpers() {
        assert_eq!(union_truth(&[1, 0, 0], &[0, 1, 0]), vec![1, 1, 0]);
        let summary = PosteriorSummary {
            mean_beta: vec![[0.0; 2]; 2],
            mean_gamma: Some(vec![[0.0; 2]; 2]),
            mean_beta_imag: None,
            prob_lambda: vec![0.3, 0.9],
            prob_omega: Some(vec![0.8, 0.1]),
            active_mag: vec![0, 1],
            active_phase: Some(vec![1, 0]),
            mcse_lambda: vec![0.0; 2],
            mcse_omega: Some(vec![0.0; 2]),
            converged: vec![true; 2],
            mh_acceptance: Some(0.4),
            runtime_seconds: 0.0,
        };
        assert_eq!(combined_scores(&summary), vec![0.8, 0.9]);
        assert_eq!(combined_active(&summary), vec![1, 1]);
    }

    proptest! {
        #[test]
        fn confusion_counts_partition_the_voxels(
            truth in prop::collection::vec(0u8..2, 1..60),
            flips in prop::collection::vec(any::<bool>(), 1..60),
        ) {
            let n = truth.len().min(flips.len());
            let truth = &truth[..n];
            let pred: Vec<u8> = truth
                .iter()
                .zip(&flips)
                .map(|(&t, &f)| if f { 1 - t } else { t })
                .collect();
            let c = confusion(truth, &pred).unwrap();
            prop_assert_eq!(c.total(), n);
            prop_assert!((0.0..=1.0).contains(&c.accuracy()));
            let (p, _) = c.precision();
            let (r, _) = c.recall();
            let (f1, deg) = c.f1();
            if !deg && p + r > 0.0 {
                prop_assert!((f1 - 2.0 * p * r / (p + r)).abs() < 1e-12);
            }
        }

        #[test]
        fn auc_in_unit_interval_and_flip_symmetric(
            truth in prop::collection::vec(0u8..2, 2..80),
            raw in prop::collection::vec(0u32..20, 2..80),
        ) {
            let n = truth.len().min(raw.len());
            let truth = &truth[..n];
            let scores: Vec<f64> = raw[..n].iter().map(|&r| r as f64 / 19.0).collect();
            if let Ok(a) = auc(truth, &scores) {
                prop_assert!((0.0..=1.0).contains(&a));
                let flipped: Vec<u8> = truth.iter().map(|&t| 1 - t).collect();
                let b = auc(&flipped, &scores).unwrap();
                prop_assert!((a + b - 1.0).abs() < 1e-12);
            }
        }
    }
}
