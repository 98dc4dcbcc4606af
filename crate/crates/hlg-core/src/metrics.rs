//! Binary and multi-class metrics over prediction counts.
//!
//! Metrics with a zero denominator are reported as absent rather than
//! coerced to zero; macro averages skip absent values and report how many
//! classes were excluded.

use crate::config::RunConfig;
use serde::Serialize;

/// Binary confusion counts with malicious as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct BinaryCounts {
    pub true_positive: u64,
    pub false_positive: u64,
    pub true_negative: u64,
    pub false_negative: u64,
}

impl BinaryCounts {
    pub fn total(&self) -> u64 {
        self.true_positive + self.false_positive + self.true_negative + self.false_negative
    }

    pub fn record(&mut self, actual_malicious: bool, predicted_malicious: bool) {
        match (actual_malicious, predicted_malicious) {
            (true, true) => self.true_positive += 1,
            (true, false) => self.false_negative += 1,
            (false, true) => self.false_positive += 1,
            (false, false) => self.true_negative += 1,
        }
    }

    pub fn merge(&mut self, other: &BinaryCounts) {
        self.true_positive += other.true_positive;
        self.false_positive += other.false_positive;
        self.true_negative += other.true_negative;
        self.false_negative += other.false_negative;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BinaryMetrics {
    pub accuracy: Option<f64>,
    pub recall: Option<f64>,
    pub fpr: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn binary_metrics(c: &BinaryCounts) -> BinaryMetrics {
    BinaryMetrics {
        accuracy: ratio(c.true_positive + c.true_negative, c.total()),
        recall: ratio(c.true_positive, c.true_positive + c.false_negative),
        fpr: ratio(c.false_positive, c.false_positive + c.true_negative),
    }
}

/// Square count matrix indexed `(true class, predicted class)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn record(&mut self, actual: usize, predicted: usize) {
        self.counts[actual * self.classes + predicted] += 1;
    }

    pub fn at(&self, actual: usize, predicted: usize) -> u64 {
        self.counts[actual * self.classes + predicted]
    }

    pub fn set(&mut self, actual: usize, predicted: usize, count: u64) {
        self.counts[actual * self.classes + predicted] = count;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|i| self.at(i, i)).sum()
    }

    fn row_sum(&self, class: usize) -> u64 {
        (0..self.classes).map(|j| self.at(class, j)).sum()
    }

    fn col_sum(&self, class: usize) -> u64 {
        (0..self.classes).map(|i| self.at(i, class)).sum()
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        debug_assert_eq!(self.classes, other.classes);
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MulticlassMetrics {
    pub accuracy: Option<f64>,
    pub per_class: Vec<ClassMetrics>,
    /// Unweighted means over classes with defined values.
    pub macro_precision: Option<f64>,
    pub macro_recall: Option<f64>,
    pub macro_f1: Option<f64>,
    /// Classes excluded from each macro average for being undefined.
    pub undefined_precision: usize,
    pub undefined_recall: usize,
    pub undefined_f1: usize,
}

pub fn multiclass_metrics(m: &ConfusionMatrix) -> MulticlassMetrics {
    let per_class: Vec<ClassMetrics> = (0..m.classes())
        .map(|c| {
            let hits = m.at(c, c);
            let precision = ratio(hits, m.col_sum(c));
            let recall = ratio(hits, m.row_sum(c));
            let f1 = match (precision, recall) {
                (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
                (Some(_), Some(_)) => None,
                _ => None,
            };
            ClassMetrics {
                precision,
                recall,
                f1,
            }
        })
        .collect();

    let macro_of = |get: fn(&ClassMetrics) -> Option<f64>| -> (Option<f64>, usize) {
        let defined: Vec<f64> = per_class.iter().filter_map(get).collect();
        let undefined = per_class.len() - defined.len();
        let mean = (!defined.is_empty())
            .then(|| defined.iter().sum::<f64>() / defined.len() as f64);
        (mean, undefined)
    };
    let (macro_precision, undefined_precision) = macro_of(|c| c.precision);
    let (macro_recall, undefined_recall) = macro_of(|c| c.recall);
    let (macro_f1, undefined_f1) = macro_of(|c| c.f1);

    MulticlassMetrics {
        accuracy: ratio(m.trace(), m.total()),
        per_class,
        macro_precision,
        macro_recall,
        macro_f1,
        undefined_precision,
        undefined_recall,
        undefined_f1,
    }
}

/// Full evaluation report. Classes are episode-relative way indices with
/// way 0 anchored to benign traffic.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub protocol: String,
    pub way: usize,
    pub shot: usize,
    pub n_episodes: usize,
    pub config: RunConfig,
    pub metrics: ReportMetrics,
    pub per_class: Vec<ClassMetrics>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportMetrics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub binary: Option<BinaryMetrics>,
    pub accuracy: Option<f64>,
    pub macro_precision: Option<f64>,
    pub macro_recall: Option<f64>,
    pub macro_f1: Option<f64>,
}

impl Report {
    pub fn build(
        config: &RunConfig,
        n_episodes: usize,
        binary: Option<&BinaryCounts>,
        confusion: &ConfusionMatrix,
    ) -> Self {
        let multi = multiclass_metrics(confusion);
        Self {
            protocol: if config.way == 2 { "binary" } else { "multiclass" }.into(),
            way: config.way,
            shot: config.shot,
            n_episodes,
            config: config.clone(),
            metrics: ReportMetrics {
                binary: binary.map(binary_metrics),
                accuracy: multi.accuracy,
                macro_precision: multi.macro_precision,
                macro_recall: multi.macro_recall,
                macro_f1: multi.macro_f1,
            },
            per_class: multi.per_class,
        }
    }

    /// One flat CSV row for sweep aggregation.
    pub fn csv_header() -> &'static str {
        "protocol,way,shot,n_episodes,accuracy,recall,fpr,macro_precision,macro_recall,macro_f1"
    }

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        let (recall, fpr) = match &self.metrics.binary {
            Some(b) => (opt(b.recall), opt(b.fpr)),
            None => (String::new(), String::new()),
        };
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.protocol,
            self.way,
            self.shot,
            self.n_episodes,
            opt(self.metrics.accuracy),
            recall,
            fpr,
            opt(self.metrics.macro_precision),
            opt(self.metrics.macro_recall),
            opt(self.metrics.macro_f1),
        )
    }
}
