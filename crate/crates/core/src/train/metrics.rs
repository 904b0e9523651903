//! Classification metrics and score fusion.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Top-1 accuracy, per-class accuracy, confusion matrix (rows = true class),
/// and optionally the mean loss the numbers were computed under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub per_class: Vec<f64>,
    pub confusion: Vec<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_loss: Option<f64>,
}

impl Metrics {
    pub fn from_predictions(pairs: &[(usize, usize)], num_classes: usize) -> Result<Self> {
        let mut confusion = vec![vec![0usize; num_classes]; num_classes];
        for &(label, pred) in pairs {
            if label >= num_classes || pred >= num_classes {
                return Err(Error::data(format!(
                    "metrics: class index out of range ({label}, {pred}) for {num_classes} classes"
                )));
            }
            confusion[label][pred] += 1;
        }
        let total: usize = pairs.len();
        let correct: usize = (0..num_classes).map(|c| confusion[c][c]).sum();
        let accuracy = if total == 0 { 0.0 } else { correct as f64 / total as f64 };
        let per_class = confusion
            .iter()
            .enumerate()
            .map(|(c, row)| {
                let support: usize = row.iter().sum();
                if support == 0 {
                    0.0
                } else {
                    confusion[c][c] as f64 / support as f64
                }
            })
            .collect();
        Ok(Self { accuracy, per_class, confusion, mean_loss: None })
    }

    pub fn class_support(&self, c: usize) -> usize {
        self.confusion[c].iter().sum()
    }

    /// Plain CSV: header row of predicted classes, one row per true class.
    pub fn confusion_csv(&self) -> String {
        let k = self.confusion.len();
        let mut out = String::from("true\\pred");
        for c in 0..k {
            out.push_str(&format!(",{c}"));
        }
        out.push('\n');
        for (t, row) in self.confusion.iter().enumerate() {
            out.push_str(&t.to_string());
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Per-epoch training trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
}

/// Per-sample class probability vectors, keyed by sample id.
pub type ScoreMap = BTreeMap<String, Vec<f64>>;

fn check_probability(p: &[f64]) -> Result<()> {
    if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::invalid("fuse", "scores must be nonnegative and finite"));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(Error::invalid("fuse", format!("score vector sums to {s}, not 1")));
    }
    Ok(())
}

/// Elementwise arithmetic mean of probability vectors.
pub fn fuse_scores(lists: &[&[f64]]) -> Result<Vec<f64>> {
    let first = lists.first().ok_or_else(|| Error::invalid("fuse", "no score vectors"))?;
    let k = first.len();
    for p in lists {
        if p.len() != k {
            return Err(Error::ShapeMismatch { op: "fuse", lhs: vec![k], rhs: vec![p.len()] });
        }
        check_probability(p)?;
    }
    let n = lists.len() as f64;
    Ok((0..k).map(|i| lists.iter().map(|p| p[i]).sum::<f64>() / n).collect())
}

/// Fuse score maps sample-by-sample; ids must match across maps.
pub fn fuse_score_maps(maps: &[ScoreMap]) -> Result<ScoreMap> {
    let first = maps.first().ok_or_else(|| Error::invalid("fuse", "no score files"))?;
    for m in &maps[1..] {
        if m.len() != first.len() || !m.keys().eq(first.keys()) {
            return Err(Error::invalid("fuse", "score files cover different sample ids"));
        }
    }
    let mut out = ScoreMap::new();
    for id in first.keys() {
        let rows: Vec<&[f64]> = maps.iter().map(|m| m[id].as_slice()).collect();
        out.insert(id.clone(), fuse_scores(&rows)?);
    }
    Ok(out)
}

/// Metrics of argmax predictions from a score map against ground truth.
pub fn metrics_from_scores(
    scores: &ScoreMap,
    labels: &BTreeMap<String, usize>,
    num_classes: usize,
) -> Result<Metrics> {
    let mut pairs = Vec::with_capacity(scores.len());
    for (id, p) in scores {
        let label = *labels
            .get(id)
            .ok_or_else(|| Error::data(format!("metrics: no label for sample {id:?}")))?;
        if p.len() != num_classes {
            return Err(Error::data(format!(
                "metrics: sample {id:?} has {} scores for {num_classes} classes",
                p.len()
            )));
        }
        let pred = p
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
            .unwrap();
        pairs.push((label, pred));
    }
    Metrics::from_predictions(&pairs, num_classes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let pairs = [(0, 0), (1, 1), (2, 2), (1, 1)];
        let m = Metrics::from_predictions(&pairs, 3).unwrap();
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.per_class, vec![1.0, 1.0, 1.0]);
        assert_eq!(m.confusion[1][1], 2);
    }

    #[test]
    fn always_wrong_single_class() {
        let pairs = [(0, 1), (0, 1)];
        let m = Metrics::from_predictions(&pairs, 2).unwrap();
        assert_eq!(m.accuracy, 0.0);
        assert_eq!(m.per_class[0], 0.0);
    }

    #[test]
    fn accuracy_is_support_weighted_mean_of_per_class() {
        let pairs = [(0, 0), (0, 1), (1, 1), (1, 1), (1, 0), (2, 2)];
        let m = Metrics::from_predictions(&pairs, 3).unwrap();
        let total: usize = (0..3).map(|c| m.class_support(c)).sum();
        let weighted: f64 =
            (0..3).map(|c| m.per_class[c] * m.class_support(c) as f64 / total as f64).sum();
        assert!((m.accuracy - weighted).abs() < 1e-15);
    }

    #[test]
    fn confusion_rows_sum_to_support() {
        let pairs = [(0, 0), (0, 2), (1, 1), (2, 2), (2, 2)];
        let m = Metrics::from_predictions(&pairs, 3).unwrap();
        assert_eq!(m.class_support(0), 2);
        assert_eq!(m.class_support(2), 2);
    }

    #[test]
    fn fuse_examples() {
        // fuse(p, p) = p
        let p = vec![0.25, 0.75];
        assert_eq!(fuse_scores(&[&p, &p]).unwrap(), p);
        // elementwise mean
        let fused = fuse_scores(&[&[0.2, 0.8], &[0.4, 0.6]]).unwrap();
        assert!((fused[0] - 0.3).abs() < 1e-15 && (fused[1] - 0.7).abs() < 1e-15);
        // symmetry
        let ab = fuse_scores(&[&[0.1, 0.9], &[0.5, 0.5]]).unwrap();
        let ba = fuse_scores(&[&[0.5, 0.5], &[0.1, 0.9]]).unwrap();
        assert_eq!(ab, ba);
    }

    #[test]
    fn fused_argmax_matches_sum_rule() {
        let a = vec![0.2, 0.5, 0.3];
        let b = vec![0.6, 0.2, 0.2];
        let mean = fuse_scores(&[&a, &b]).unwrap();
        let sums: Vec<f64> = (0..3).map(|i| a[i] + b[i]).collect();
        let argmax = |v: &[f64]| {
            v.iter().enumerate().max_by(|x, y| x.1.partial_cmp(y.1).unwrap()).unwrap().0
        };
        assert_eq!(argmax(&mean), argmax(&sums));
    }

    #[test]
    fn fuse_rejects_bad_inputs() {
        assert!(fuse_scores(&[&[0.5, 0.6]]).is_err()); // not a probability vector
        assert!(fuse_scores(&[&[0.5, 0.5], &[1.0]]).is_err()); // length mismatch
    }

    #[test]
    fn metrics_serialization_round_trips() {
        let m = Metrics {
            accuracy: 2.0 / 3.0,
            per_class: vec![0.5, 1.0],
            confusion: vec![vec![1, 1], vec![0, 1]],
            mean_loss: Some(0.1234567890123456789),
        };
        let json = serde_json::to_string(&m).unwrap();
        let back: Metrics = serde_json::from_str(&json).unwrap();
        assert_eq!(m.accuracy.to_bits(), back.accuracy.to_bits());
        assert_eq!(m.mean_loss.unwrap().to_bits(), back.mean_loss.unwrap().to_bits());
        assert_eq!(m.confusion, back.confusion);
    }
}
