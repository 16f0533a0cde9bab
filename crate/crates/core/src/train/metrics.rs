use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::MgpiNetwork;
use crate::nn::cross_entropy_index;
use crate::scene::{ConversationalAction, Demonstration};

use super::dataset::Dataset;

/// Samples per forward pass during evaluation.
const EVAL_CHUNK: usize = 256;

/// Non-interpolated average precision of one class.
///
/// Samples are ranked by decreasing score, ties in input order; the result is
/// `sum_k P(k) rel(k) / n_pos`, or `None` without positives.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let n_pos = labels.iter().filter(|&&l| l).count();
    if n_pos == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (k, &i) in order.iter().enumerate() {
        if labels[i] {
            hits += 1;
            sum += hits as f64 / (k + 1) as f64;
        }
    }
    Some(sum / n_pos as f64)
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub samples: usize,
    pub cross_entropy: f64,
    pub accuracy: f64,
    /// Per-class AP; `None` for classes absent from the targets.
    pub per_class_ap: Vec<Option<f64>>,
    pub map: f64,
    /// Counts with rows indexed by the true class and columns by the prediction.
    pub confusion: Vec<Vec<u64>>,
}

impl EvalReport {
    /// Metrics of a probability matrix (one row per sample) against targets.
    pub fn from_predictions(probs: &[Vec<f64>], targets: &[usize], classes: usize) -> EvalReport {
        let n = targets.len();
        let mut confusion = vec![vec![0u64; classes]; classes];
        let mut ce = 0.0;
        for (p, &t) in probs.iter().zip(targets) {
            ce += cross_entropy_index(p, t);
            confusion[t][argmax(p)] += 1;
        }
        let correct: u64 = (0..classes).map(|c| confusion[c][c]).sum();
        let per_class_ap: Vec<Option<f64>> = (0..classes)
            .map(|c| {
                let scores: Vec<f64> = probs.iter().map(|p| p[c]).collect();
                let labels: Vec<bool> = targets.iter().map(|&t| t == c).collect();
                average_precision(&scores, &labels)
            })
            .collect();
        let present: Vec<f64> = per_class_ap.iter().flatten().copied().collect();
        let map = if present.is_empty() {
            0.0
        } else {
            present.iter().sum::<f64>() / present.len() as f64
        };
        EvalReport {
            samples: n,
            cross_entropy: if n == 0 { 0.0 } else { ce / n as f64 },
            accuracy: if n == 0 { 0.0 } else { correct as f64 / n as f64 },
            per_class_ap,
            map,
            confusion,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Confusion matrix as CSV with a header of predicted-class names.
    pub fn confusion_csv(&self) -> String {
        confusion_csv(&self.confusion.iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect::<Vec<_>>())
    }
}

pub(crate) fn confusion_csv(rows: &[Vec<f64>]) -> String {
    let names: Vec<&str> = (0..rows.len())
        .map(|i| ConversationalAction::from_index(i).map_or("?", |a| a.short_name()))
        .collect();
    let mut s = String::from("true");
    for n in &names {
        let _ = write!(s, ",{n}");
    }
    s.push('\n');
    for (name, row) in names.iter().zip(rows) {
        s.push_str(name);
        for v in row {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}

/// Evaluates `net` on every example of `demos` with `j` nearest neighbors.
pub fn evaluate(net: &MgpiNetwork, demos: &[Demonstration], j: usize) -> Result<EvalReport> {
    let ds = Dataset::build(demos, net.config.horizon, j, net.config.position_scale)?;
    evaluate_dataset(net, &ds)
}

pub fn evaluate_dataset(net: &MgpiNetwork, ds: &Dataset<'_>) -> Result<EvalReport> {
    evaluate_dataset_parallel(net, ds, 1)
}

/// [`evaluate_dataset`] with the samples split into `jobs` contiguous ranges
/// evaluated on separate threads. Predictions are reassembled in sample order,
/// so the report does not depend on `jobs`.
pub fn evaluate_dataset_parallel(net: &MgpiNetwork, ds: &Dataset<'_>, jobs: usize) -> Result<EvalReport> {
    let n = ds.len();
    let per_job = n.div_ceil(jobs.max(1)).max(1);
    let ranges: Vec<(usize, usize)> = (0..n).step_by(per_job).map(|a| (a, (a + per_job).min(n))).collect();
    let run = |(a, b): (usize, usize)| -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
        let mut probs = Vec::with_capacity(b - a);
        let mut targets = Vec::with_capacity(b - a);
        let idx: Vec<usize> = (a..b).collect();
        for chunk in idx.chunks(EVAL_CHUNK) {
            let (batch, t) = ds.batch(&net.config, chunk)?;
            let p = net.predict(&batch);
            probs.extend(p.outer_iter().map(|r| r.to_vec()));
            targets.extend(t);
        }
        Ok((probs, targets))
    };
    let parts: Vec<Result<(Vec<Vec<f64>>, Vec<usize>)>> = if ranges.len() <= 1 {
        ranges.into_iter().map(run).collect()
    } else {
        std::thread::scope(|scope| {
            let handles: Vec<_> = ranges.iter().map(|&r| scope.spawn(move || run(r))).collect();
            handles.into_iter().map(|h| h.join().expect("evaluation thread panicked")).collect()
        })
    };
    let mut probs = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    for part in parts {
        let (p, t) = part?;
        probs.extend(p);
        targets.extend(t);
    }
    Ok(EvalReport::from_predictions(&probs, &targets, net.config.action_count))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Walks every cut point k of the ranking, recomputing the top-k set from
    /// scratch by selection.
    fn brute_force_ap(scores: &[f64], labels: &[bool]) -> Option<f64> {
        let n_pos = labels.iter().filter(|&&l| l).count();
        if n_pos == 0 {
            return None;
        }
        let n = scores.len();
        let outranks = |a: usize, b: usize| scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
        let mut sum = 0.0;
        for k in 1..=n {
            // the k-th ranked item is outranked by exactly k - 1 others
            let kth = (0..n)
                .find(|&i| (0..n).filter(|&j| j != i && outranks(j, i)).count() == k - 1)
                .unwrap();
            if labels[kth] {
                let top_k_pos = (0..n)
                    .filter(|&i| labels[i] && (0..n).filter(|&j| j != i && outranks(j, i)).count() < k)
                    .count();
                sum += top_k_pos as f64 / k as f64;
            }
        }
        Some(sum / n_pos as f64)
    }

    #[test]
    fn worked_example() {
        let ap = average_precision(&[0.9, 0.8, 0.3, 0.2], &[true, false, true, false]).unwrap();
        assert!((ap - 5.0 / 6.0).abs() < 1e-15);
        assert_eq!(ap, brute_force_ap(&[0.9, 0.8, 0.3, 0.2], &[true, false, true, false]).unwrap());
        assert_eq!(average_precision(&[0.5, 0.1], &[false, false]), None);
    }

    #[test]
    fn perfect_predictor() {
        let targets = [0, 2, 1, 2, 5];
        let probs: Vec<Vec<f64>> = targets
            .iter()
            .map(|&t| (0..6).map(|c| if c == t { 1.0 } else { 0.0 }).collect())
            .collect();
        let r = EvalReport::from_predictions(&probs, &targets, 6);
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.map, 1.0);
        assert_eq!(r.cross_entropy, 0.0);
        assert!(r.per_class_ap.iter().flatten().all(|&ap| ap == 1.0));
        assert_eq!(r.per_class_ap[3], None);
        for (i, row) in r.confusion.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                assert_eq!(v > 0, i == j && targets.contains(&i));
            }
        }
    }

    #[test]
    fn uniform_predictor_cross_entropy() {
        let probs = vec![vec![1.0 / 6.0; 6]; 4];
        let r = EvalReport::from_predictions(&probs, &[0, 3, 3, 5], 6);
        assert!((r.cross_entropy - 6f64.ln()).abs() < 1e-12);
        assert_eq!(r.confusion[3][0], 2);
        let csv = r.confusion_csv();
        assert!(csv.starts_with("true,"));
        assert_eq!(csv.lines().count(), 7);
    }

    #[test]
    fn argmax_ties_take_lowest() {
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
    }

    proptest! {
        #[test]
        fn ap_matches_brute_force(
            data in proptest::collection::vec((0u8..6, any::<bool>()), 1..10)
        ) {
            let scores: Vec<f64> = data.iter().map(|(s, _)| *s as f64 / 5.0).collect();
            let labels: Vec<bool> = data.iter().map(|(_, l)| *l).collect();
            prop_assert_eq!(average_precision(&scores, &labels), brute_force_ap(&scores, &labels));
        }

        #[test]
        fn accuracy_is_confusion_trace(
            rows in proptest::collection::vec((proptest::collection::vec(0.0..1.0f64, 6), 0usize..6), 1..30)
        ) {
            let probs: Vec<Vec<f64>> = rows.iter().map(|(p, _)| {
                let s: f64 = p.iter().sum::<f64>() + 1e-9;
                p.iter().map(|v| (v + 1e-9 / 6.0) / s).collect()
            }).collect();
            let targets: Vec<usize> = rows.iter().map(|(_, t)| *t).collect();
            let r = EvalReport::from_predictions(&probs, &targets, 6);
            let trace: u64 = (0..6).map(|i| r.confusion[i][i]).sum();
            let total: u64 = r.confusion.iter().flatten().sum();
            prop_assert_eq!(total as usize, targets.len());
            prop_assert_eq!(r.accuracy, trace as f64 / total as f64);
            for c in 0..6 {
                let row: u64 = r.confusion[c].iter().sum();
                prop_assert_eq!(row as usize, targets.iter().filter(|&&t| t == c).count());
            }
        }
    }
}
