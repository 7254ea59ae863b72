//! Error analysis comparing model predictions with gold and weak labels.

use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub n: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    /// False positives over all items.
    pub false_positive_rate: f64,
    /// False negatives over all items.
    pub false_negative_rate: f64,
    /// Items whose weak label differs from gold.
    pub weak_errors: usize,
    /// Weak-label errors on which the model predicts the gold label.
    pub weak_errors_corrected: usize,
    pub corrected_fraction: f64,
    /// Ids the model calls commercial while keyword matching did not.
    pub model_commercial_weak_non_commercial: Vec<String>,
}

pub fn analyze(
    ids: &[String],
    predictions: &[Label],
    gold: &[Label],
    weak: &[Label],
) -> Result<AnalysisReport> {
    let n = ids.len();
    if predictions.len() != n || gold.len() != n || weak.len() != n {
        return Err(Error::InvalidArgument(format!(
            "length mismatch: {} ids, {} predictions, {} gold, {} weak labels",
            n,
            predictions.len(),
            gold.len(),
            weak.len()
        )));
    }
    let mut report = AnalysisReport {
        n,
        false_positives: 0,
        false_negatives: 0,
        false_positive_rate: 0.0,
        false_negative_rate: 0.0,
        weak_errors: 0,
        weak_errors_corrected: 0,
        corrected_fraction: 0.0,
        model_commercial_weak_non_commercial: Vec::new(),
    };
    for i in 0..n {
        let (p, g, w) = (predictions[i], gold[i], weak[i]);
        match (p, g) {
            (Label::Commercial, Label::NonCommercial) => report.false_positives += 1,
            (Label::NonCommercial, Label::Commercial) => report.false_negatives += 1,
            _ => {}
        }
        if w != g {
            report.weak_errors += 1;
            if p == g {
                report.weak_errors_corrected += 1;
            }
        }
        if p == Label::Commercial && w == Label::NonCommercial {
            report.model_commercial_weak_non_commercial.push(ids[i].clone());
        }
    }
    let frac = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    report.false_positive_rate = frac(report.false_positives, n);
    report.false_negative_rate = frac(report.false_negatives, n);
    report.corrected_fraction = frac(report.weak_errors_corrected, report.weak_errors);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::{Commercial as C, NonCommercial as N};

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("p{i}")).collect()
    }

    #[test]
    fn perfect_predictions_have_no_errors() {
        let gold = [C, N, C];
        let r = analyze(&ids(3), &gold, &gold, &gold).unwrap();
        assert_eq!((r.false_positives, r.false_negatives), (0, 0));
    }

    #[test]
    fn all_commercial_fp_rate_is_negative_prevalence() {
        let gold = [C, N, C, N];
        let r = analyze(&ids(4), &[C; 4], &gold, &gold).unwrap();
        assert_eq!(r.false_positive_rate, 0.5);
        assert_eq!(r.false_negative_rate, 0.0);
    }

    #[test]
    fn corrections_and_disagreements() {
        let gold = [C, C, N, N];
        let weak = [N, N, C, N];
        let pred = [C, N, N, C];
        let r = analyze(&ids(4), &pred, &gold, &weak).unwrap();
        assert_eq!(r.weak_errors, 3);
        assert_eq!(r.weak_errors_corrected, 2);
        assert_eq!(r.model_commercial_weak_non_commercial, vec!["p0", "p3"]);
        assert!(analyze(&ids(3), &pred, &gold, &weak).is_err());
    }
}
