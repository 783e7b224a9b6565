//! Confusion matrices, per-class precision/recall/F1 and macro one-vs-rest AUC.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows are truth, columns are predictions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn from_counts(classes: Vec<String>, counts: Vec<Vec<u64>>) -> Result<Self> {
        let k = classes.len();
        if counts.len() != k || counts.iter().any(|r| r.len() != k) {
            return Err(Error::invalid(format!("confusion counts must be {k}x{k}")));
        }
        Ok(Self { classes, counts })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes.len()).map(|i| self.counts[i][i]).sum()
    }

    /// Accuracy in percent.
    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            0.0
        } else {
            self.trace() as f64 / total as f64 * 100.0
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("truth\\pred");
        for c in &self.classes {
            out.push(',');
            out.push_str(&csv_field(c));
        }
        out.push('\n');
        for (c, row) in self.classes.iter().zip(&self.counts) {
            out.push_str(&csv_field(c));
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn confusion<S: AsRef<str>>(truth: &[S], pred: &[S], classes: &[String]) -> Result<ConfusionMatrix> {
    if truth.len() != pred.len() {
        return Err(Error::invalid(format!(
            "truth has {} labels but predictions have {}",
            truth.len(),
            pred.len()
        )));
    }
    let index = |label: &str| {
        classes
            .iter()
            .position(|c| c == label)
            .ok_or_else(|| Error::invalid(format!("label '{label}' not among the classes")))
    };
    let k = classes.len();
    let mut counts = vec![vec![0u64; k]; k];
    for (t, p) in truth.iter().zip(pred) {
        counts[index(t.as_ref())?][index(p.as_ref())?] += 1;
    }
    Ok(ConfusionMatrix {
        classes: classes.to_vec(),
        counts,
    })
}

/// Same as [`confusion`] for class indices.
pub fn confusion_indices(truth: &[usize], pred: &[usize], classes: &[String]) -> Result<ConfusionMatrix> {
    if truth.len() != pred.len() {
        return Err(Error::invalid("truth and prediction lengths differ"));
    }
    let k = classes.len();
    let mut counts = vec![vec![0u64; k]; k];
    for (&t, &p) in truth.iter().zip(pred) {
        if t >= k || p >= k {
            return Err(Error::invalid(format!("class index {} out of range", t.max(p))));
        }
        counts[t][p] += 1;
    }
    Ok(ConfusionMatrix {
        classes: classes.to_vec(),
        counts,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    /// Set when any of the three metrics had a zero denominator (and was reported as 0).
    pub zero_division: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub per_class: Vec<ClassMetrics>,
    /// Percent.
    pub accuracy: f64,
    pub total: u64,
}

pub fn class_report(cm: &ConfusionMatrix) -> Result<ClassReport> {
    let k = cm.classes.len();
    let total = cm.total();
    if k == 0 || total == 0 {
        return Err(Error::invalid("cannot report on an empty confusion matrix"));
    }
    let ratio = |num: u64, den: u64| if den == 0 { None } else { Some(num as f64 / den as f64) };
    let per_class = (0..k)
        .map(|i| {
            let tp = cm.counts[i][i];
            let col: u64 = (0..k).map(|r| cm.counts[r][i]).sum();
            let row: u64 = cm.counts[i].iter().sum();
            let p = ratio(tp, col);
            let r = ratio(tp, row);
            let f = match (p, r) {
                (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
                _ => None,
            };
            ClassMetrics {
                class: cm.classes[i].clone(),
                precision: p.unwrap_or(0.0),
                recall: r.unwrap_or(0.0),
                f1: f.unwrap_or(0.0),
                support: row,
                zero_division: p.is_none() || r.is_none() || f.is_none(),
            }
        })
        .collect();
    Ok(ClassReport {
        per_class,
        accuracy: cm.accuracy(),
        total,
    })
}

impl ClassReport {
    /// One row per class with two-decimal metrics, then an accuracy row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class,precision,recall,f1,support\n");
        for m in &self.per_class {
            out.push_str(&format!(
                "{},{:.2},{:.2},{:.2},{}\n",
                csv_field(&m.class),
                m.precision,
                m.recall,
                m.f1,
                m.support
            ));
        }
        out.push_str(&format!("accuracy,,,{:.2}%,{}\n", self.accuracy, self.total));
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_text(path.as_ref(), &self.to_csv())
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        write_text(path.as_ref(), &serde_json::to_string_pretty(self)?)
    }
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Rank-based AUC of one score column against binary membership; `None`
/// when either side is empty.
pub fn binary_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // midranks over tie groups
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum_pos += order[i..=j].iter().filter(|&&s| positive[s]).count() as f64 * mid;
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

/// Macro one-vs-rest AUC over the classes present in `truth`.
pub fn macro_ovr_auc(scores: &[Vec<f64>], truth: &[usize]) -> Result<f64> {
    if scores.len() != truth.len() || scores.is_empty() {
        return Err(Error::invalid("scores and truth must be non-empty and of equal length"));
    }
    let k = scores[0].len();
    if scores.iter().any(|s| s.len() != k) || truth.iter().any(|&t| t >= k) {
        return Err(Error::invalid("score vectors must all cover the same classes"));
    }
    let mut aucs = Vec::new();
    for c in 0..k {
        let positive: Vec<bool> = truth.iter().map(|&t| t == c).collect();
        let column: Vec<f64> = scores.iter().map(|s| s[c]).collect();
        if let Some(a) = binary_auc(&column, &positive) {
            aucs.push(a);
        }
    }
    if aucs.is_empty() {
        return Err(Error::UndefinedAuc("truth contains a single class".into()));
    }
    Ok(aucs.iter().sum::<f64>() / aucs.len() as f64)
}

/// Index of the largest score; ties go to the smallest index.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn diagonal_when_all_correct() {
        let cm = confusion(&["a", "b", "a", "b"], &["a", "b", "a", "b"], &names(&["a", "b"])).unwrap();
        assert_eq!(cm.counts, vec![vec![2, 0], vec![0, 2]]);
    }

    #[test]
    fn bird_aircraft_perfect() {
        let cm = ConfusionMatrix::from_counts(names(&["Bird", "Aircraft"]), vec![vec![240, 0], vec![0, 240]]).unwrap();
        let r = class_report(&cm).unwrap();
        assert_eq!(r.accuracy, 100.0);
        for m in &r.per_class {
            assert_eq!((m.precision, m.recall, m.f1), (1.0, 1.0, 1.0));
        }
    }

    #[test]
    fn size_table_counts() {
        let cm = ConfusionMatrix::from_counts(
            names(&["Small", "Medium", "Large"]),
            vec![vec![136, 4, 0], vec![5, 131, 4], vec![1, 8, 131]],
        )
        .unwrap();
        let r = class_report(&cm).unwrap();
        let two = |x: f64| (x * 100.0).round() / 100.0;
        let got: Vec<_> = r
            .per_class
            .iter()
            .map(|m| (two(m.precision), two(m.recall), two(m.f1)))
            .collect();
        assert_eq!(got, vec![(0.96, 0.97, 0.96), (0.92, 0.94, 0.93), (0.97, 0.94, 0.95)]);
        assert_eq!(format!("{:.2}", r.accuracy), "94.76");
    }

    #[test]
    fn single_class_perfect() {
        let cm = confusion(&["x"; 5], &["x"; 5], &names(&["x"])).unwrap();
        let r = class_report(&cm).unwrap();
        assert_eq!(r.per_class[0].f1, 1.0);
        assert_eq!(r.accuracy, 100.0);
    }

    #[test]
    fn zero_denominators_are_flagged() {
        let cm = confusion(&["a", "a"], &["a", "a"], &names(&["a", "b"])).unwrap();
        let r = class_report(&cm).unwrap();
        assert!(r.per_class[1].zero_division);
        assert_eq!(r.per_class[1].precision, 0.0);
        assert!(!r.per_class[0].zero_division);
    }

    #[test]
    fn errors() {
        assert!(confusion(&["a"], &["a", "b"], &names(&["a", "b"])).is_err());
        assert!(confusion(&["z"], &["a"], &names(&["a", "b"])).is_err());
        let empty = ConfusionMatrix::from_counts(names(&["a"]), vec![vec![0]]).unwrap();
        assert!(class_report(&empty).is_err());
        assert!(matches!(
            macro_ovr_auc(&[vec![0.4, 0.6], vec![0.3, 0.7]], &[1, 1]),
            Err(Error::UndefinedAuc(_))
        ));
    }

    #[test]
    fn auc_examples() {
        let truth = [0, 0, 1, 1];
        let perfect = vec![vec![0.9, 0.1], vec![0.8, 0.2], vec![0.3, 0.7], vec![0.1, 0.9]];
        assert_eq!(macro_ovr_auc(&perfect, &truth).unwrap(), 1.0);
        let flat = vec![vec![0.5, 0.5]; 4];
        assert_eq!(macro_ovr_auc(&flat, &truth).unwrap(), 0.5);
    }

    #[test]
    fn auc_matches_pair_enumeration() {
        let scores = [0.1, 0.4, 0.35, 0.8, 0.4, 0.9];
        let pos = [false, true, false, true, false, false];
        let mut good = 0.0;
        let mut pairs = 0.0;
        for i in 0..6 {
            for j in 0..6 {
                if pos[i] && !pos[j] {
                    pairs += 1.0;
                    good += if scores[i] > scores[j] {
                        1.0
                    } else if scores[i] == scores[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        assert!((binary_auc(&scores, &pos).unwrap() - good / pairs).abs() < 1e-15);
    }

    #[test]
    fn csv_outputs() {
        let cm = confusion(&["a", "b"], &["a", "a"], &names(&["a", "b"])).unwrap();
        assert_eq!(cm.to_csv(), "truth\\pred,a,b\na,1,0\nb,1,0\n");
        let csv = class_report(&cm).unwrap().to_csv();
        assert!(csv.starts_with("class,precision,recall,f1,support\na,0.50,1.00,0.67,1\n"));
        assert!(csv.ends_with("accuracy,,,50.00%,2\n"));
    }

    proptest! {
        #[test]
        fn accuracy_is_support_weighted_recall(pairs in prop::collection::vec((0usize..4, 0usize..4), 1..60)) {
            let classes = names(&["a", "b", "c", "d"]);
            let (t, p): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
            let cm = confusion_indices(&t, &p, &classes).unwrap();
            let r = class_report(&cm).unwrap();
            let weighted: f64 = r.per_class.iter().map(|m| m.recall * m.support as f64).sum::<f64>() / r.total as f64;
            prop_assert!((weighted * 100.0 - r.accuracy).abs() < 1e-9);
        }

        #[test]
        fn permuting_classes_permutes_report(pairs in prop::collection::vec((0usize..3, 0usize..3), 1..40)) {
            let classes = names(&["x", "y", "z"]);
            let perm = [2usize, 0, 1];
            let permuted: Vec<String> = perm.iter().map(|&i| classes[i].clone()).collect();
            let t: Vec<&str> = pairs.iter().map(|p| classes[p.0].as_str()).collect();
            let p: Vec<&str> = pairs.iter().map(|p| classes[p.1].as_str()).collect();
            let a = class_report(&confusion(&t, &p, &classes).unwrap()).unwrap();
            let b = class_report(&confusion(&t, &p, &permuted).unwrap()).unwrap();
            for (j, &i) in perm.iter().enumerate() {
                prop_assert_eq!(&a.per_class[i], &b.per_class[j]);
            }
            prop_assert_eq!(a.accuracy, b.accuracy);
        }

        #[test]
        fn auc_invariant_under_monotone_transform(
            rows in prop::collection::vec((0usize..3, prop::collection::vec(0.0f64..1.0, 3)), 4..30)
        ) {
            let truth: Vec<usize> = rows.iter().map(|r| r.0).collect();
            let scores: Vec<Vec<f64>> = rows.iter().map(|r| r.1.clone()).collect();
            let warped: Vec<Vec<f64>> = scores.iter().map(|s| s.iter().map(|v| (3.0 * v).exp() - 2.0).collect()).collect();
            if let (Ok(a), Ok(b)) = (macro_ovr_auc(&scores, &truth), macro_ovr_auc(&warped, &truth)) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
