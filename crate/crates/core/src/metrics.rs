//! Classification metrics, the most-frequent-label baseline and Cohen's kappa.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerClass<T> {
    pub non_commercial: T,
    pub commercial: T,
}

impl<T> PerClass<T> {
    pub fn get(&self, label: Label) -> &T {
        match label {
            Label::NonCommercial => &self.non_commercial,
            Label::Commercial => &self.commercial,
        }
    }
}

/// 2x2 counts indexed `[gold][pred]` by [`Label::index`].
pub type Confusion = [[usize; 2]; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub per_class: PerClass<ClassMetrics>,
    pub weighted: Averages,
    #[serde(rename = "macro")]
    pub macro_avg: Averages,
    pub accuracy: f64,
    pub confusion: Confusion,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

pub fn confusion(gold: &[Label], pred: &[Label]) -> Result<Confusion> {
    if gold.len() != pred.len() {
        return Err(Error::InvalidArgument(format!(
            "gold has {} labels but predictions have {}",
            gold.len(),
            pred.len()
        )));
    }
    if gold.is_empty() {
        return Err(Error::InvalidArgument("cannot evaluate zero items".into()));
    }
    let mut m = [[0usize; 2]; 2];
    for (g, p) in gold.iter().zip(pred) {
        m[g.index()][p.index()] += 1;
    }
    Ok(m)
}

/// Per-class, support-weighted and macro precision/recall/F1. Zero
/// denominators yield 0.
pub fn evaluate(gold: &[Label], pred: &[Label]) -> Result<EvalReport> {
    Ok(report_from_confusion(confusion(gold, pred)?))
}

pub fn report_from_confusion(m: Confusion) -> EvalReport {
    let n: usize = m.iter().flatten().sum();
    let class = |c: usize| {
        let tp = m[c][c];
        let support = m[c][0] + m[c][1];
        let predicted = m[0][c] + m[1][c];
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, support);
        ClassMetrics {
            precision,
            recall,
            f1: f1(precision, recall),
            support,
        }
    };
    let cls = [class(0), class(1)];
    let weighted_of = |f: fn(&ClassMetrics) -> f64| {
        if n == 0 {
            0.0
        } else {
            (cls[0].support as f64 * f(&cls[0]) + cls[1].support as f64 * f(&cls[1])) / n as f64
        }
    };
    let macro_of = |f: fn(&ClassMetrics) -> f64| (f(&cls[0]) + f(&cls[1])) / 2.0;
    let accuracy = ratio(m[0][0] + m[1][1], n);
    EvalReport {
        n,
        per_class: PerClass {
            non_commercial: cls[0],
            commercial: cls[1],
        },
        weighted: Averages {
            precision: weighted_of(|c| c.precision),
            // Σ (s_c/n)(tp_c/s_c) reduces to Σ tp_c / n.
            recall: accuracy,
            f1: weighted_of(|c| c.f1),
        },
        macro_avg: Averages {
            precision: macro_of(|c| c.precision),
            recall: macro_of(|c| c.recall),
            f1: macro_of(|c| c.f1),
        },
        accuracy,
        confusion: m,
    }
}

/// Metric value scaled to a percentage and rounded to two decimals.
pub fn percent(x: f64) -> f64 {
    (x * 10_000.0).round() / 100.0
}

impl EvalReport {
    /// Copy with every ratio expressed as a percentage rounded to 2 decimals.
    pub fn to_percent(&self) -> EvalReport {
        let pc = |c: &ClassMetrics| ClassMetrics {
            precision: percent(c.precision),
            recall: percent(c.recall),
            f1: percent(c.f1),
            support: c.support,
        };
        let av = |a: &Averages| Averages {
            precision: percent(a.precision),
            recall: percent(a.recall),
            f1: percent(a.f1),
        };
        EvalReport {
            n: self.n,
            per_class: PerClass {
                non_commercial: pc(&self.per_class.non_commercial),
                commercial: pc(&self.per_class.commercial),
            },
            weighted: av(&self.weighted),
            macro_avg: av(&self.macro_avg),
            accuracy: percent(self.accuracy),
            confusion: self.confusion,
        }
    }

    /// Flat `name -> value` view, used for multi-seed aggregation.
    pub fn flat(&self) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        for (prefix, a) in [("weighted", &self.weighted), ("macro", &self.macro_avg)] {
            out.insert(format!("{prefix}_precision"), a.precision);
            out.insert(format!("{prefix}_recall"), a.recall);
            out.insert(format!("{prefix}_f1"), a.f1);
        }
        out.insert("accuracy".into(), self.accuracy);
        out
    }
}

/// Majority label of the training set; ties go to non-commercial.
pub fn majority_label(train_labels: &[Label]) -> Result<Label> {
    if train_labels.is_empty() {
        return Err(Error::InvalidArgument("training labels are empty".into()));
    }
    let c = train_labels.iter().filter(|&&l| l == Label::Commercial).count();
    Ok(if 2 * c > train_labels.len() {
        Label::Commercial
    } else {
        Label::NonCommercial
    })
}

/// Predict the training majority label for every evaluation item.
pub fn most_frequent_baseline(train_labels: &[Label], eval_gold: &[Label]) -> Result<EvalReport> {
    let label = majority_label(train_labels)?;
    evaluate(eval_gold, &vec![label; eval_gold.len()])
}

/// Labels repeated according to `[non_commercial, commercial]` counts.
pub fn labels_from_counts(counts: [usize; 2]) -> Vec<Label> {
    let mut v = vec![Label::NonCommercial; counts[0]];
    v.extend(std::iter::repeat(Label::Commercial).take(counts[1]));
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub observed: f64,
    pub expected: f64,
    pub kappa: f64,
}

/// Annotation space used when a third "unclear" option exists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Annotation {
    NonCommercial,
    Commercial,
    Unclear,
}

impl From<Label> for Annotation {
    fn from(l: Label) -> Self {
        match l {
            Label::NonCommercial => Annotation::NonCommercial,
            Label::Commercial => Annotation::Commercial,
        }
    }
}

/// Cohen's kappa over the categories observed in either list. When chance
/// agreement is 1 (both annotators constant and equal) kappa is 1.
pub fn cohen_kappa<T: Ord>(a: &[T], b: &[T]) -> Result<AgreementReport> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "annotation lists differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::InvalidArgument("annotation lists are empty".into()));
    }
    let n = a.len();
    let mut marginals: BTreeMap<&T, [usize; 2]> = BTreeMap::new();
    let mut agree = 0usize;
    for (x, y) in a.iter().zip(b) {
        marginals.entry(x).or_default()[0] += 1;
        marginals.entry(y).or_default()[1] += 1;
        if x == y {
            agree += 1;
        }
    }
    let chance: usize = marginals.values().map(|[ca, cb]| ca * cb).sum();
    let observed = agree as f64 / n as f64;
    let expected = chance as f64 / (n * n) as f64;
    let kappa = if chance == n * n {
        1.0
    } else {
        (observed - expected) / (1.0 - expected)
    };
    Ok(AgreementReport {
        observed,
        expected,
        kappa,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use Label::{Commercial as C, NonCommercial as N};

    #[test]
    fn perfect_predictions_score_100() {
        let gold = [N, C, C, N, C];
        let r = evaluate(&gold, &gold).unwrap().to_percent();
        for a in [r.weighted, r.macro_avg] {
            assert_eq!((a.precision, a.recall, a.f1), (100.0, 100.0, 100.0));
        }
        assert_eq!(r.accuracy, 100.0);
    }

    #[test]
    fn zero_denominators_give_zero() {
        let r = evaluate(&[N, C], &[N, N]).unwrap();
        assert_eq!(r.per_class.commercial.precision, 0.0);
        assert_eq!(r.per_class.commercial.f1, 0.0);
    }

    #[test]
    fn length_mismatch_and_empty_are_errors() {
        assert!(evaluate(&[N], &[N, C]).is_err());
        assert!(evaluate(&[], &[]).is_err());
    }

    #[test]
    fn baseline_tie_goes_to_non_commercial() {
        let train = labels_from_counts([5, 5]);
        assert_eq!(majority_label(&train).unwrap(), N);
        let r = most_frequent_baseline(&train, &[N, N]).unwrap();
        assert_eq!(r.accuracy, 1.0);
    }

    #[test]
    fn kappa_from_two_by_two_table() {
        let mut a = Vec::new();
        let mut b = Vec::new();
        for (x, y, k) in [(N, N, 40), (N, C, 10), (C, N, 10), (C, C, 40)] {
            for _ in 0..k {
                a.push(x);
                b.push(y);
            }
        }
        let r = cohen_kappa(&a, &b).unwrap();
        assert!((r.observed - 0.8).abs() < 1e-12);
        assert!((r.expected - 0.5).abs() < 1e-12);
        assert!((r.kappa - 0.6).abs() < 1e-12);
    }

    #[test]
    fn kappa_edge_cases() {
        assert_eq!(cohen_kappa(&[C, C], &[C, C]).unwrap().kappa, 1.0);
        let a = [Annotation::Commercial, Annotation::Unclear, Annotation::NonCommercial];
        assert_eq!(cohen_kappa(&a, &a).unwrap().kappa, 1.0);
        let r = cohen_kappa(&[N, C, C, N, C], &[C, C, C, C, C]).unwrap();
        assert_eq!(r.kappa, 0.0);
        assert!(cohen_kappa(&[N], &[N, C]).is_err());
    }

    fn labels() -> impl Strategy<Value = Vec<(bool, bool)>> {
        proptest::collection::vec((any::<bool>(), any::<bool>()), 1..60)
    }

    fn split(v: &[(bool, bool)]) -> (Vec<Label>, Vec<Label>) {
        let l = |b: bool| if b { C } else { N };
        (v.iter().map(|p| l(p.0)).collect(), v.iter().map(|p| l(p.1)).collect())
    }

    proptest! {
        #[test]
        fn weighted_recall_is_accuracy(v in labels()) {
            let (g, p) = split(&v);
            let r = evaluate(&g, &p).unwrap();
            prop_assert_eq!(r.weighted.recall, r.accuracy);
            prop_assert_eq!(r.per_class.commercial.support + r.per_class.non_commercial.support, r.n);
        }

        #[test]
        fn macro_is_invariant_under_relabeling(v in labels()) {
            let (g, p) = split(&v);
            let flip = |x: &Vec<Label>| x.iter().map(|l| if *l == C { N } else { C }).collect::<Vec<_>>();
            let a = evaluate(&g, &p).unwrap();
            let b = evaluate(&flip(&g), &flip(&p)).unwrap();
            prop_assert_eq!(a.macro_avg, b.macro_avg);
        }

        #[test]
        fn kappa_is_symmetric_and_bounded(v in proptest::collection::vec((0u8..3, 0u8..3), 1..40)) {
            let a: Vec<u8> = v.iter().map(|p| p.0).collect();
            let b: Vec<u8> = v.iter().map(|p| p.1).collect();
            let x = cohen_kappa(&a, &b).unwrap();
            let y = cohen_kappa(&b, &a).unwrap();
            prop_assert_eq!(x, y);
            prop_assert!((-1.0..=1.0).contains(&x.kappa));
        }
    }
}
