use crate::Smell;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

/// `num / den`, or `None` when the denominator is zero.
pub fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Percentage with two decimals, or `undefined`.
pub fn percent(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{:.2}%", x * 100.0),
        None => "undefined".into(),
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SmellStats {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    /// `None` when no positive was reported.
    pub precision: Option<f64>,
    /// `None` when nothing was labeled positive.
    pub recall: Option<f64>,
    /// Reported positives, TP + FP.
    pub sample_count: u64,
}

impl SmellStats {
    pub fn from_counts(tp: u64, fp: u64, fn_: u64) -> SmellStats {
        SmellStats {
            tp,
            fp,
            fn_,
            precision: ratio(tp, tp + fp),
            recall: ratio(tp, tp + fn_),
            sample_count: tp + fp,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntryFailure {
    pub name: String,
    pub error: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalStats {
    pub per_smell: BTreeMap<Smell, SmellStats>,
    /// Sample-weighted mean of the per-smell precisions.
    pub overall_precision: Option<f64>,
    pub overall_recall: Option<f64>,
    /// Entries that analyzed successfully and carried labels.
    pub evaluated: usize,
    pub failures: Vec<EntryFailure>,
    pub unlabeled: Vec<String>,
}

impl EvalStats {
    pub fn from_counts(counts: impl IntoIterator<Item = (Smell, u64, u64, u64)>) -> EvalStats {
        let per_smell = counts
            .into_iter()
            .map(|(s, tp, fp, fn_)| (s, SmellStats::from_counts(tp, fp, fn_)))
            .collect();
        let mut e = EvalStats {
            per_smell,
            ..EvalStats::default()
        };
        e.recompute_overall();
        e
    }

    pub fn recompute_overall(&mut self) {
        let mut weighted = 0.0;
        let mut samples = 0u64;
        for s in self.per_smell.values() {
            if let Some(p) = s.precision {
                weighted += p * s.sample_count as f64;
                samples += s.sample_count;
            }
        }
        self.overall_precision = (samples > 0).then(|| weighted / samples as f64);
        let tp: u64 = self.per_smell.values().map(|s| s.tp).sum();
        let fn_: u64 = self.per_smell.values().map(|s| s.fn_).sum();
        self.overall_recall = ratio(tp, tp + fn_);
    }

    /// Joins predicted smell sets against labels for every smell in `smells`.
    pub fn from_predictions<'a>(
        smells: &BTreeSet<Smell>,
        rows: impl IntoIterator<Item = (&'a BTreeSet<Smell>, &'a BTreeSet<Smell>)>,
    ) -> EvalStats {
        let mut counts: BTreeMap<Smell, (u64, u64, u64)> = smells.iter().map(|s| (*s, (0, 0, 0))).collect();
        let mut evaluated = 0;
        for (labels, predicted) in rows {
            evaluated += 1;
            for (s, c) in counts.iter_mut() {
                match (labels.contains(s), predicted.contains(s)) {
                    (true, true) => c.0 += 1,
                    (false, true) => c.1 += 1,
                    (true, false) => c.2 += 1,
                    (false, false) => {}
                }
            }
        }
        let mut e = EvalStats::from_counts(counts.into_iter().map(|(s, (tp, fp, fn_))| (s, tp, fp, fn_)));
        e.evaluated = evaluated;
        e
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        for (s, st) in &self.per_smell {
            let _ = writeln!(
                out,
                "{s}\tTP={}\tFP={}\tFN={}\tprecision={}\trecall={}\tsamples={}",
                st.tp,
                st.fp,
                st.fn_,
                percent(st.precision),
                percent(st.recall),
                st.sample_count
            );
        }
        let _ = writeln!(
            out,
            "OVERALL\tprecision={}\trecall={}\tentries={}",
            percent(self.overall_precision),
            percent(self.overall_recall),
            self.evaluated
        );
        for f in &self.failures {
            let _ = writeln!(out, "FAILED\t{}\t{}", f.name, f.error.replace(['\n', '\t'], " "));
        }
        for u in &self.unlabeled {
            let _ = writeln!(out, "UNLABELED\t{u}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn undefined_when_denominators_vanish() {
        let s = SmellStats::from_counts(0, 0, 0);
        assert_eq!((s.precision, s.recall, s.sample_count), (None, None, 0));
        assert_eq!(percent(None), "undefined");
        let e = EvalStats::from_counts([]);
        assert_eq!((e.overall_precision, e.overall_recall), (None, None));
    }

    #[test]
    fn null_metrics_serialize_as_null() {
        let e = EvalStats::from_counts([(Smell::Gli, 0, 0, 0)]);
        let v = serde_json::to_value(&e).unwrap();
        assert!(v["per_smell"]["GLI"]["precision"].is_null());
        assert!(v["overall_precision"].is_null());
        assert_eq!(v["per_smell"]["GLI"]["fn"], 0);
        let back: EvalStats = serde_json::from_value(v).unwrap();
        assert_eq!(back, e);
    }

    #[test]
    fn smells_without_samples_carry_no_weight() {
        let e = EvalStats::from_counts([(Smell::Ccra, 3, 1, 0), (Smell::Bhm, 0, 0, 2)]);
        assert_eq!(e.overall_precision, Some(0.75));
        assert_eq!(e.overall_recall, Some(0.6));
    }
}
