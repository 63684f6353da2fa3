//! Binary classification metrics (class 1 = malicious = positive), timing,
//! multi-run averaging and speedup.

use std::collections::BTreeSet;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{HsomError, Result};
use crate::hierarchy::HsomModel;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

pub fn confusion(predictions: &[u8], truth: &[u8]) -> Result<ConfusionMatrix> {
    if predictions.len() != truth.len() {
        return Err(HsomError::invalid(format!(
            "{} predictions for {} labels",
            predictions.len(),
            truth.len()
        )));
    }
    if predictions.is_empty() {
        return Err(HsomError::invalid("cannot score an empty prediction set"));
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &t) in predictions.iter().zip(truth) {
        match (p != 0, t != 0) {
            (true, true) => cm.tp += 1,
            (true, false) => cm.fp += 1,
            (false, false) => cm.tn += 1,
            (false, true) => cm.fn_ += 1,
        }
    }
    Ok(cm)
}

/// One evaluation row: per-class precision/recall/F1, then accuracy, FPR,
/// FNR, training time (s) and mean per-sample prediction time (ms).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub precision_0: f64,
    pub precision_1: f64,
    pub recall_0: f64,
    pub recall_1: f64,
    pub f1_0: f64,
    pub f1_1: f64,
    pub accuracy: f64,
    pub fpr: f64,
    pub fnr: f64,
    pub tt_s: f64,
    pub pt_ms: f64,
    /// Metrics whose denominator was zero and were reported as 0.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub degenerate: Vec<String>,
}

fn ratio(num: u64, den: u64, name: &str, flags: &mut Vec<String>) -> f64 {
    if den == 0 {
        flags.push(name.to_string());
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64, name: &str, flags: &mut Vec<String>) -> f64 {
    if p + r == 0.0 {
        flags.push(name.to_string());
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

pub fn report(cm: &ConfusionMatrix, tt_s: f64, pt_ms: f64) -> EvalReport {
    let mut d = Vec::new();
    let ConfusionMatrix { tp, fp, tn, fn_ } = *cm;
    let precision_1 = ratio(tp, tp + fp, "precision_1", &mut d);
    let precision_0 = ratio(tn, tn + fn_, "precision_0", &mut d);
    let recall_1 = ratio(tp, tp + fn_, "recall_1", &mut d);
    let recall_0 = ratio(tn, tn + fp, "recall_0", &mut d);
    let f1_0 = harmonic(precision_0, recall_0, "f1_0", &mut d);
    let f1_1 = harmonic(precision_1, recall_1, "f1_1", &mut d);
    let accuracy = ratio(tp + tn, cm.total(), "accuracy", &mut d);
    let fpr = ratio(fp, fp + tn, "fpr", &mut d);
    let fnr = ratio(fn_, fn_ + tp, "fnr", &mut d);
    EvalReport {
        precision_0,
        precision_1,
        recall_0,
        recall_1,
        f1_0,
        f1_1,
        accuracy,
        fpr,
        fnr,
        tt_s,
        pt_ms,
        degenerate: d,
    }
}

/// Wall-clock seconds around `train` only.
pub fn time_training<T, F>(train: F) -> Result<(T, f64)>
where
    F: FnOnce() -> Result<T>,
{
    let start = Instant::now();
    let out = train()?;
    Ok((out, start.elapsed().as_secs_f64()))
}

/// Predictions for every test row and the mean per-sample latency in ms.
pub fn time_prediction(model: &HsomModel, test: &LabeledDataset) -> Result<(Vec<u8>, f64)> {
    let start = Instant::now();
    let preds = model.predict_batch(test.features())?;
    let total_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok((preds, total_ms / test.len() as f64))
}

/// Scores a trained model on `test`, taking TT from the model.
pub fn evaluate(model: &HsomModel, test: &LabeledDataset) -> Result<EvalReport> {
    let (preds, pt_ms) = time_prediction(model, test)?;
    let cm = confusion(&preds, test.labels())?;
    Ok(report(&cm, model.training_time_s, pt_ms))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunAggregate {
    pub runs: usize,
    pub mean: EvalReport,
    pub reports: Vec<EvalReport>,
}

/// Field-wise arithmetic mean; degenerate flags are unioned.
pub fn aggregate(reports: &[EvalReport]) -> Result<RunAggregate> {
    if reports.is_empty() {
        return Err(HsomError::invalid("cannot aggregate zero reports"));
    }
    let k = reports.len() as f64;
    let mean_of = |f: fn(&EvalReport) -> f64| reports.iter().map(f).sum::<f64>() / k;
    let degenerate: BTreeSet<String> = reports
        .iter()
        .flat_map(|r| r.degenerate.iter().cloned())
        .collect();
    let mean = EvalReport {
        precision_0: mean_of(|r| r.precision_0),
        precision_1: mean_of(|r| r.precision_1),
        recall_0: mean_of(|r| r.recall_0),
        recall_1: mean_of(|r| r.recall_1),
        f1_0: mean_of(|r| r.f1_0),
        f1_1: mean_of(|r| r.f1_1),
        accuracy: mean_of(|r| r.accuracy),
        fpr: mean_of(|r| r.fpr),
        fnr: mean_of(|r| r.fnr),
        tt_s: mean_of(|r| r.tt_s),
        pt_ms: mean_of(|r| r.pt_ms),
        degenerate: degenerate.into_iter().collect(),
    };
    Ok(RunAggregate {
        runs: reports.len(),
        mean,
        reports: reports.to_vec(),
    })
}

pub fn speedup(tt_sequential_s: f64, tt_parallel_s: f64) -> Result<f64> {
    if !(tt_sequential_s > 0.0 && tt_parallel_s > 0.0) {
        return Err(HsomError::invalid(format!(
            "speedup needs positive times, got {tt_sequential_s} and {tt_parallel_s}"
        )));
    }
    Ok(tt_sequential_s / tt_parallel_s)
}

/// Report document grouped like a results table: per-class blocks first,
/// then the scalar columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportTable {
    pub precision: PerClass,
    pub recall: PerClass,
    pub f1: PerClass,
    pub accuracy: f64,
    pub fpr: f64,
    pub fnr: f64,
    pub tt_s: f64,
    pub pt_ms: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub degenerate: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerClass {
    #[serde(rename = "0")]
    pub benign: f64,
    #[serde(rename = "1")]
    pub malicious: f64,
}

impl From<&EvalReport> for ReportTable {
    fn from(r: &EvalReport) -> Self {
        ReportTable {
            precision: PerClass {
                benign: r.precision_0,
                malicious: r.precision_1,
            },
            recall: PerClass {
                benign: r.recall_0,
                malicious: r.recall_1,
            },
            f1: PerClass {
                benign: r.f1_0,
                malicious: r.f1_1,
            },
            accuracy: r.accuracy,
            fpr: r.fpr,
            fnr: r.fnr,
            tt_s: r.tt_s,
            pt_ms: r.pt_ms,
            degenerate: r.degenerate.clone(),
        }
    }
}

impl EvalReport {
    pub const CSV_HEADER: &'static str =
        "precision_0,precision_1,recall_0,recall_1,f1_0,f1_1,accuracy,fpr,fnr,tt_s,pt_ms";

    pub fn csv_row(&self) -> String {
        [
            self.precision_0,
            self.precision_1,
            self.recall_0,
            self.recall_1,
            self.f1_0,
            self.f1_1,
            self.accuracy,
            self.fpr,
            self.fnr,
            self.tt_s,
            self.pt_ms,
        ]
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
    }

    pub fn to_table(&self) -> ReportTable {
        self.into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tally(pred: &[u8], truth: &[u8]) -> (u64, u64, u64, u64) {
        let count = |p: u8, t: u8| {
            (0..pred.len())
                .filter(|&i| pred[i] == p && truth[i] == t)
                .count() as u64
        };
        (count(1, 1), count(1, 0), count(0, 0), count(0, 1))
    }

    #[test]
    fn confusion_examples() {
        let cm = confusion(&[1, 0, 1], &[1, 0, 1]).unwrap();
        assert_eq!((cm.tp, cm.tn, cm.fp, cm.fn_), (2, 1, 0, 0));
        let cm = confusion(&[0; 4], &[1; 4]).unwrap();
        assert_eq!(cm.fn_, 4);
        let cm = confusion(
            &[1, 1, 0, 0, 1, 0, 0, 1, 0, 0],
            &[1, 0, 0, 0, 1, 1, 0, 1, 0, 0],
        )
        .unwrap();
        assert_eq!((cm.tp, cm.fp, cm.tn, cm.fn_), (3, 1, 5, 1));
        assert!(confusion(&[1], &[1, 0]).is_err());
        assert!(confusion(&[], &[]).is_err());
    }

    #[test]
    fn report_examples() {
        let perfect = report(&confusion(&[1, 0, 1], &[1, 0, 1]).unwrap(), 1.0, 0.1);
        for v in [
            perfect.precision_0,
            perfect.precision_1,
            perfect.recall_0,
            perfect.recall_1,
            perfect.f1_0,
            perfect.f1_1,
            perfect.accuracy,
        ] {
            assert_eq!(v, 1.0);
        }
        assert_eq!((perfect.fpr, perfect.fnr), (0.0, 0.0));
        assert!(perfect.degenerate.is_empty());

        let r = report(
            &ConfusionMatrix {
                tp: 3,
                fp: 1,
                tn: 5,
                fn_: 1,
            },
            0.0,
            0.0,
        );
        assert_eq!((r.precision_1, r.recall_1, r.f1_1), (0.75, 0.75, 0.75));
        assert!((r.accuracy - 0.8).abs() < 1e-15);
        assert!((r.fpr - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(r.fnr, 0.25);
    }

    #[test]
    fn degenerate_ratios_are_flagged() {
        let r = report(&confusion(&[0, 0], &[0, 0]).unwrap(), 0.0, 0.0);
        assert_eq!(r.precision_1, 0.0);
        assert_eq!(r.recall_1, 0.0);
        assert!(r.degenerate.contains(&"precision_1".to_string()));
        assert!(r.degenerate.contains(&"recall_1".to_string()));
        assert!(r.degenerate.contains(&"fnr".to_string()));
        assert_eq!(r.accuracy, 1.0);
    }

    #[test]
    fn aggregate_examples() {
        let base = report(&confusion(&[1, 0], &[1, 0]).unwrap(), 2.0, 0.5);
        let agg = aggregate(std::slice::from_ref(&base)).unwrap();
        assert_eq!(agg.mean, base);
        assert_eq!(agg.runs, 1);

        let mut a = base.clone();
        let mut b = base.clone();
        a.accuracy = 0.9;
        b.accuracy = 1.0;
        assert!((aggregate(&[a, b]).unwrap().mean.accuracy - 0.95).abs() < 1e-15);
        assert!(aggregate(&[]).is_err());
    }

    #[test]
    fn aggregate_ten_matches_recomputation() {
        let reports: Vec<EvalReport> = (0..10u64)
            .map(|i| {
                report(
                    &ConfusionMatrix {
                        tp: 10 + i,
                        fp: i,
                        tn: 20 - i,
                        fn_: 1 + i % 3,
                    },
                    i as f64,
                    0.01 * i as f64,
                )
            })
            .collect();
        let agg = aggregate(&reports).unwrap();
        let mut acc = 0.0;
        let mut tt = 0.0;
        for r in &reports {
            acc += r.accuracy;
            tt += r.tt_s;
        }
        assert!((agg.mean.accuracy - acc / 10.0).abs() < 1e-15);
        assert!((agg.mean.tt_s - 4.5).abs() < 1e-15);
        assert!((agg.mean.tt_s - tt / 10.0).abs() < 1e-15);
    }

    #[test]
    fn speedup_examples() {
        assert!((speedup(143.369, 27.229).unwrap() - 5.265).abs() < 1e-3);
        assert_eq!(speedup(3.0, 3.0).unwrap(), 1.0);
        assert_eq!(speedup(100.0, 50.0).unwrap(), 2.0);
        assert!(speedup(0.0, 1.0).is_err());
        assert!(speedup(1.0, -1.0).is_err());
    }

    #[test]
    fn timing_wraps_only_the_thunk() {
        let ((), tt) = time_training(|| {
            std::thread::sleep(std::time::Duration::from_millis(50));
            Ok(())
        })
        .unwrap();
        assert!((0.04..=0.5).contains(&tt), "tt = {tt}");
        let err = time_training::<(), _>(|| Err(HsomError::invalid("x")));
        assert!(err.is_err());
    }

    #[test]
    fn table_layout() {
        let r = report(&confusion(&[1, 0, 1], &[1, 0, 0]).unwrap(), 1.5, 0.02);
        let v = serde_json::to_value(r.to_table()).unwrap();
        assert_eq!(v["precision"]["1"], 0.5);
        assert_eq!(v["recall"]["0"], 0.5);
        assert_eq!(v["tt_s"], 1.5);
        assert_eq!(r.csv_row().split(',').count(), EvalReport::CSV_HEADER.split(',').count());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn confusion_matches_tally(pairs in prop::collection::vec((0u8..2, 0u8..2), 1..200)) {
            let (pred, truth): (Vec<u8>, Vec<u8>) = pairs.into_iter().unzip();
            let cm = confusion(&pred, &truth).unwrap();
            prop_assert_eq!((cm.tp, cm.fp, cm.tn, cm.fn_), tally(&pred, &truth));
            prop_assert_eq!(cm.total(), pred.len() as u64);
        }

        #[test]
        fn metric_identities(tp in 0u64..500, fp in 0u64..500, tn in 0u64..500, fn_ in 0u64..500) {
            prop_assume!(tp + fp + tn + fn_ > 0);
            let cm = ConfusionMatrix { tp, fp, tn, fn_ };
            let r = report(&cm, 0.0, 0.0);
            let total = (tp + fp + tn + fn_) as f64;
            prop_assert!((r.accuracy - (tp + tn) as f64 / total).abs() < 1e-12);
            if tp + fn_ > 0 {
                prop_assert!((r.recall_1 + r.fnr - 1.0).abs() < 1e-12);
            }
            if fp + tn > 0 {
                prop_assert!((r.fpr + tn as f64 / (fp + tn) as f64 - 1.0).abs() < 1e-12);
            }
            for (p, rc, f) in [(r.precision_0, r.recall_0, r.f1_0), (r.precision_1, r.recall_1, r.f1_1)] {
                let expected = if p + rc == 0.0 { 0.0 } else { 2.0 * p * rc / (p + rc) };
                prop_assert!((f - expected).abs() < 1e-12);
            }
            for v in [r.precision_0, r.precision_1, r.recall_0, r.recall_1, r.f1_0, r.f1_1, r.accuracy, r.fpr, r.fnr] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }

        #[test]
        fn aggregate_of_copies_is_identity(tp in 0u64..50, fp in 0u64..50, tn in 0u64..50, fn_ in 1u64..50, k in 1usize..12) {
            let r = report(&ConfusionMatrix { tp, fp, tn, fn_ }, 1.25, 0.5);
            let agg = aggregate(&vec![r.clone(); k]).unwrap();
            for (a, b) in agg.mean.csv_row().split(',').zip(r.csv_row().split(',')) {
                let (a, b): (f64, f64) = (a.parse().unwrap(), b.parse().unwrap());
                prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }
    }
}
