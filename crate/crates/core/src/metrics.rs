//! Classification metrics and run-level aggregation.
//!
//! AUC is the Mann–Whitney rank statistic with midranks, so tied scores count
//! one half. Binary F1 is the F1 of class 1; with more classes it is the
//! unweighted macro average. An F1 term whose precision or recall has a zero
//! denominator is taken as 0 and flagged.

use serde::{Deserialize, Serialize};

use crate::datasets::BagDataset;
use crate::error::{Error, Result};
use crate::model::{forward, Params};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum F1Kind {
    Binary,
    Macro,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub accuracy: f64,
    pub f1: f64,
    pub f1_kind: F1Kind,
    /// Classes whose F1 fell back to 0 because precision or recall was undefined.
    pub f1_undefined: Vec<usize>,
    /// `None` when fewer than two classes are present.
    pub auc: Option<f64>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub num_samples: usize,
    pub mean_loss: f64,
}

/// Scores every bag in `ds` with `params`.
pub fn evaluate<T: Scalar>(params: &Params<T>, ds: &BagDataset) -> Result<EvalResult> {
    if ds.is_empty() {
        return Err(Error::Config("cannot evaluate on an empty test set".into()));
    }
    let mut labels = Vec::with_capacity(ds.len());
    let mut probs = Vec::with_capacity(ds.len());
    let mut loss = 0.0;
    for bag in ds.bags() {
        let trace = forward(params, bag)?;
        loss += trace.loss().as_f64();
        labels.push(bag.label);
        probs.push(trace.probs().iter().map(|p| p.as_f64()).collect::<Vec<_>>());
    }
    let mut out = score_predictions(&labels, &probs, ds.num_classes())?;
    out.mean_loss = loss / ds.len() as f64;
    Ok(out)
}

/// Metrics from true labels and per-class scores.
pub fn score_predictions(labels: &[usize], probs: &[Vec<f64>], num_classes: usize) -> Result<EvalResult> {
    if labels.len() != probs.len() {
        return Err(Error::LengthMismatch(format!("{} labels but {} score rows", labels.len(), probs.len())));
    }
    if labels.is_empty() {
        return Err(Error::Config("no predictions to score".into()));
    }
    if num_classes < 2 {
        return Err(Error::Config("metrics need at least two classes".into()));
    }
    if let Some(row) = probs.iter().find(|r| r.len() != num_classes) {
        return Err(Error::DimensionMismatch { expected: num_classes, actual: row.len() });
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= num_classes) {
        return Err(Error::Config(format!("label {y} out of range for {num_classes} classes")));
    }
    let predicted: Vec<usize> = probs.iter().map(|r| argmax(r)).collect();
    let confusion = confusion_matrix(labels, &predicted, num_classes);
    let (f1, f1_kind, f1_undefined) = f1_score(&confusion);
    let auc = if num_classes == 2 {
        let scores: Vec<f64> = probs.iter().map(|r| r[1]).collect();
        let positive: Vec<bool> = labels.iter().map(|&y| y == 1).collect();
        auc_binary(&scores, &positive)
    } else {
        auc_one_vs_rest(labels, probs, num_classes)
    };
    Ok(EvalResult {
        accuracy: accuracy(&confusion),
        f1,
        f1_kind,
        f1_undefined,
        auc,
        confusion,
        num_samples: labels.len(),
        mean_loss: 0.0,
    })
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

pub fn confusion_matrix(labels: &[usize], predicted: &[usize], num_classes: usize) -> Vec<Vec<usize>> {
    let mut m = vec![vec![0; num_classes]; num_classes];
    for (&y, &p) in labels.iter().zip(predicted) {
        m[y][p] += 1;
    }
    m
}

pub fn accuracy(confusion: &[Vec<usize>]) -> f64 {
    let total: usize = confusion.iter().flatten().sum();
    let hits: usize = (0..confusion.len()).map(|c| confusion[c][c]).sum();
    if total == 0 {
        return 0.0;
    }
    hits as f64 / total as f64
}

/// F1 of class `c`; `None` if its precision or recall is undefined.
pub fn class_f1(confusion: &[Vec<usize>], c: usize) -> Option<f64> {
    let tp = confusion[c][c];
    let predicted: usize = confusion.iter().map(|row| row[c]).sum();
    let actual: usize = confusion[c].iter().sum();
    if predicted == 0 || actual == 0 {
        return None;
    }
    Some(2.0 * tp as f64 / (predicted + actual) as f64)
}

/// Binary F1 on class 1 for two classes, macro F1 otherwise.
pub fn f1_score(confusion: &[Vec<usize>]) -> (f64, F1Kind, Vec<usize>) {
    let k = confusion.len();
    if k == 2 {
        return match class_f1(confusion, 1) {
            Some(f) => (f, F1Kind::Binary, Vec::new()),
            None => (0.0, F1Kind::Binary, vec![1]),
        };
    }
    let mut undefined = Vec::new();
    let sum: f64 = (0..k)
        .map(|c| {
            class_f1(confusion, c).unwrap_or_else(|| {
                undefined.push(c);
                0.0
            })
        })
        .sum();
    (sum / k as f64, F1Kind::Macro, undefined)
}

/// Mann–Whitney AUC with midranks; `None` unless both classes occur.
pub fn auc_binary(scores: &[f64], positive: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), positive.len());
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Twice the rank sum keeps midranks integral.
    let mut rank2_pos: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1..=j+1, midrank = (i + j + 2) / 2.
        let mid2 = (i + j + 2) as u128;
        let pos_in_group = order[i..=j].iter().filter(|&&k| positive[k]).count() as u128;
        rank2_pos += mid2 * pos_in_group;
        i = j + 1;
    }
    let (np, nn) = (n_pos as u128, n_neg as u128);
    // U = R_pos − np(np+1)/2, doubled.
    let u2 = rank2_pos - np * (np + 1);
    Some(u2 as f64 / (2 * np * nn) as f64)
}

/// Unweighted mean of one-vs-rest AUCs over classes that have both positives and negatives.
pub fn auc_one_vs_rest(labels: &[usize], probs: &[Vec<f64>], num_classes: usize) -> Option<f64> {
    let aucs: Vec<f64> = (0..num_classes)
        .filter_map(|c| {
            let scores: Vec<f64> = probs.iter().map(|r| r[c]).collect();
            let positive: Vec<bool> = labels.iter().map(|&y| y == c).collect();
            auc_binary(&scores, &positive)
        })
        .collect();
    if aucs.is_empty() {
        return None;
    }
    Some(aucs.iter().sum::<f64>() / aucs.len() as f64)
}

/// Sample mean and (n−1)-denominator standard deviation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub n: usize,
    pub mean: f64,
    /// 0 with `std_defined = false` for a single run.
    pub std: f64,
    pub std_defined: bool,
}

pub fn aggregate_runs(values: &[f64]) -> Option<RunStats> {
    if values.is_empty() {
        return None;
    }
    // Welford.
    let (mut mean, mut m2) = (0.0, 0.0);
    for (i, &x) in values.iter().enumerate() {
        let delta = x - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (x - mean);
    }
    let n = values.len();
    Some(RunStats { n, mean, std: if n > 1 { (m2 / (n - 1) as f64).sqrt() } else { 0.0 }, std_defined: n > 1 })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub accuracy: RunStats,
    pub f1: RunStats,
    /// Over runs where AUC was defined.
    pub auc: Option<RunStats>,
}

pub fn summarize(results: &[EvalResult]) -> Option<MetricSummary> {
    let acc: Vec<f64> = results.iter().map(|r| r.accuracy).collect();
    let f1: Vec<f64> = results.iter().map(|r| r.f1).collect();
    let auc: Vec<f64> = results.iter().filter_map(|r| r.auc).collect();
    Some(MetricSummary { accuracy: aggregate_runs(&acc)?, f1: aggregate_runs(&f1)?, auc: aggregate_runs(&auc) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pair_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
        let mut num = 0.0;
        let mut pairs = 0.0;
        for i in 0..scores.len() {
            for j in 0..scores.len() {
                if positive[i] && !positive[j] {
                    pairs += 1.0;
                    num += if scores[i] > scores[j] {
                        1.0
                    } else if scores[i] == scores[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        (pairs > 0.0).then(|| num / pairs)
    }

    fn binary_rows(p1: &[f64]) -> Vec<Vec<f64>> {
        p1.iter().map(|&p| vec![1.0 - p, p]).collect()
    }

    #[test]
    fn perfect_scores() {
        let r = score_predictions(&[0, 1, 1, 0], &binary_rows(&[0.1, 0.9, 0.8, 0.3]), 2).unwrap();
        assert_eq!((r.accuracy, r.f1, r.auc), (1.0, 1.0, Some(1.0)));
        assert_eq!(r.confusion, vec![vec![2, 0], vec![0, 2]]);
    }

    #[test]
    fn constant_scores_give_half() {
        assert_eq!(auc_binary(&[0.4; 5], &[true, false, true, false, false]), Some(0.5));
    }

    #[test]
    fn six_scores_match_pairs() {
        let s = [0.3, 0.7, 0.7, 0.1, 0.9, 0.3];
        let y = [false, true, false, false, true, true];
        assert_eq!(auc_binary(&s, &y), pair_auc(&s, &y));
        assert_eq!(auc_binary(&s, &y), Some(7.0 / 9.0));
    }

    #[test]
    fn single_class_auc_absent() {
        let r = score_predictions(&[1, 1, 1], &binary_rows(&[0.2, 0.6, 0.9]), 2).unwrap();
        assert_eq!(r.auc, None);
    }

    #[test]
    fn f1_zero_division_flagged() {
        // Nothing predicted as class 1.
        let r = score_predictions(&[0, 1], &binary_rows(&[0.1, 0.2]), 2).unwrap();
        assert_eq!((r.f1, r.f1_undefined.clone()), (0.0, vec![1]));
        let (f, kind, und) = f1_score(&[vec![1, 0, 0], vec![0, 1, 0], vec![1, 0, 0]]);
        assert_eq!(kind, F1Kind::Macro);
        assert_eq!(und, vec![2]);
        assert!((f - (2.0 / 3.0 + 1.0 + 0.0) / 3.0).abs() < 1e-15);
    }

    #[test]
    fn multiclass_ovr() {
        let labels = [0, 1, 2, 2];
        let probs = vec![vec![0.8, 0.1, 0.1], vec![0.2, 0.7, 0.1], vec![0.1, 0.2, 0.7], vec![0.3, 0.3, 0.4]];
        let r = score_predictions(&labels, &probs, 3).unwrap();
        assert_eq!(r.auc, Some(1.0));
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.f1_kind, F1Kind::Macro);
    }

    #[test]
    fn run_aggregation() {
        let s = aggregate_runs(&[0.8, 0.9]).unwrap();
        assert!((s.mean - 0.85).abs() < 1e-15);
        assert!((s.std - 0.005f64.sqrt()).abs() < 1e-15);
        let one = aggregate_runs(&[0.7]).unwrap();
        assert_eq!((one.mean, one.std, one.std_defined), (0.7, 0.0, false));
        assert!(aggregate_runs(&[]).is_none());
    }

    #[test]
    fn twenty_runs_match_two_pass() {
        let xs: Vec<f64> = (0..20).map(|i| ((i * 37 % 11) as f64).sin() * 0.1 + 0.8).collect();
        let mean = xs.iter().sum::<f64>() / 20.0;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 19.0;
        let s = aggregate_runs(&xs).unwrap();
        assert!((s.mean - mean).abs() < 1e-12);
        assert!((s.std - var.sqrt()).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn auc_matches_pairs(data in prop::collection::vec((0u8..20, any::<bool>()), 2..40)) {
            let s: Vec<f64> = data.iter().map(|d| d.0 as f64 / 7.0).collect();
            let y: Vec<bool> = data.iter().map(|d| d.1).collect();
            prop_assert_eq!(auc_binary(&s, &y), pair_auc(&s, &y));
        }

        #[test]
        fn auc_monotone_invariant(data in prop::collection::vec((-5.0f64..5.0, any::<bool>()), 2..40)) {
            let s: Vec<f64> = data.iter().map(|d| d.0).collect();
            let t: Vec<f64> = s.iter().map(|x| x.exp() * 3.0 + 1.0).collect();
            let y: Vec<bool> = data.iter().map(|d| d.1).collect();
            prop_assert_eq!(auc_binary(&s, &y), auc_binary(&t, &y));
        }

        #[test]
        fn label_flip(data in prop::collection::btree_map(0u32..10_000, any::<bool>(), 2..40)) {
            // Distinct scores.
            let s: Vec<f64> = data.keys().map(|&k| k as f64).collect();
            let y: Vec<bool> = data.values().copied().collect();
            let flipped: Vec<bool> = y.iter().map(|b| !b).collect();
            if let (Some(a), Some(b)) = (auc_binary(&s, &y), auc_binary(&s, &flipped)) {
                prop_assert!((a + b - 1.0).abs() < 1e-15);
            }
        }

        #[test]
        fn accuracy_from_counts(data in prop::collection::vec((0usize..2, 0.0f64..1.0), 1..50)) {
            let labels: Vec<usize> = data.iter().map(|d| d.0).collect();
            let rows = binary_rows(&data.iter().map(|d| d.1).collect::<Vec<_>>());
            let r = score_predictions(&labels, &rows, 2).unwrap();
            let c = &r.confusion;
            prop_assert_eq!(c.iter().flatten().sum::<usize>(), r.num_samples);
            prop_assert_eq!(r.accuracy, (c[0][0] + c[1][1]) as f64 / r.num_samples as f64);
        }
    }
}
