//! Confusion matrices, accuracy/precision/recall/F1 with per-class and
//! averaged views, timing capture, and report emission.
//!
//! Any metric whose denominator is zero is reported as 0 and flagged.

use std::cell::Cell;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("{actual} actual labels but {predicted} predictions")]
    LengthMismatch { actual: usize, predicted: usize },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("confusion matrix is empty")]
    Empty,
    #[error("binary metrics need a 2×2 matrix, got {0}×{0}")]
    NotBinary(usize),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("report json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = MetricsError> = std::result::Result<T, E>;

/// Counts indexed `[actual][predicted]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub class_names: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n_classes()).map(|i| self.counts[i][i]).sum()
    }

    pub fn get(&self, actual: usize, predicted: usize) -> u64 {
        self.counts[actual][predicted]
    }

    pub fn with_names(mut self, names: Vec<String>) -> Self {
        assert_eq!(names.len(), self.n_classes());
        self.class_names = names;
        self
    }

    /// Header row of predicted classes, then one row per actual class.
    pub fn to_csv(&self) -> String {
        let mut out = format!("actual\\predicted,{}\n", self.class_names.join(","));
        for (name, row) in self.class_names.iter().zip(&self.counts) {
            let cells: Vec<String> = row.iter().map(u64::to_string).collect();
            let _ = writeln!(out, "{},{}", name, cells.join(","));
        }
        out
    }

    pub fn render(&self) -> String {
        let name_w = self.class_names.iter().map(String::len).max().unwrap_or(0).max(6);
        let cell_w = self
            .counts
            .iter()
            .flatten()
            .map(|c| c.to_string().len())
            .max()
            .unwrap_or(1)
            .max(self.class_names.iter().map(|n| n.len().min(8)).max().unwrap_or(1));
        let mut out = format!("{:<name_w$}", "actual");
        for n in &self.class_names {
            let short: String = n.chars().take(8).collect();
            let _ = write!(out, " {short:>cell_w$}");
        }
        out.push('\n');
        for (name, row) in self.class_names.iter().zip(&self.counts) {
            let _ = write!(out, "{name:<name_w$}");
            for c in row {
                let _ = write!(out, " {c:>cell_w$}");
            }
            out.push('\n');
        }
        out
    }
}

pub fn confusion(actual: &[u8], predicted: &[u8], n_classes: usize) -> Result<ConfusionMatrix> {
    if actual.len() != predicted.len() {
        return Err(MetricsError::LengthMismatch {
            actual: actual.len(),
            predicted: predicted.len(),
        });
    }
    if n_classes == 0 {
        return Err(MetricsError::Empty);
    }
    let mut counts = vec![vec![0u64; n_classes]; n_classes];
    for (&a, &p) in actual.iter().zip(predicted) {
        for l in [a, p] {
            if l as usize >= n_classes {
                return Err(MetricsError::LabelOutOfRange {
                    label: l as usize,
                    classes: n_classes,
                });
            }
        }
        counts[a as usize][p as usize] += 1;
    }
    Ok(ConfusionMatrix {
        class_names: (0..n_classes).map(|c| c.to_string()).collect(),
        counts,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Degenerate {
    pub precision: bool,
    pub recall: bool,
    pub f1: bool,
}

impl Degenerate {
    pub fn any(&self) -> bool {
        self.precision || self.recall || self.f1
    }
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

fn harmonic(p: f64, r: f64) -> (f64, bool) {
    if p + r == 0.0 {
        (0.0, true)
    } else {
        (2.0 * p * r / (p + r), false)
    }
}

/// Attack-positive metrics of a 2×2 matrix (class 1 = attack).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinaryMetrics {
    pub accuracy: f64,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    pub degenerate: Degenerate,
}

pub fn binary_metrics(cm: &ConfusionMatrix) -> Result<BinaryMetrics> {
    if cm.n_classes() != 2 {
        return Err(MetricsError::NotBinary(cm.n_classes()));
    }
    let (tn, fp, fn_, tp) = (cm.get(0, 0), cm.get(0, 1), cm.get(1, 0), cm.get(1, 1));
    let (accuracy, _) = ratio(tp + tn, tp + tn + fp + fn_);
    let (recall, dr) = ratio(tp, tp + fn_);
    let (precision, dp) = ratio(tp, tp + fp);
    let (f1, df) = harmonic(precision, recall);
    Ok(BinaryMetrics {
        accuracy,
        recall,
        precision,
        f1,
        degenerate: Degenerate {
            precision: dp,
            recall: dr,
            f1: df,
        },
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    pub degenerate: Degenerate,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    Weighted,
    Macro,
    Micro,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MulticlassMetrics {
    pub per_class: Vec<ClassMetrics>,
    pub accuracy: f64,
    pub weighted: Averages,
    #[serde(rename = "macro")]
    pub macro_avg: Averages,
    pub micro: Averages,
}

impl MulticlassMetrics {
    pub fn averaged(&self, how: Averaging) -> Averages {
        match how {
            Averaging::Weighted => self.weighted,
            Averaging::Macro => self.macro_avg,
            Averaging::Micro => self.micro,
        }
    }
}

/// One-vs-rest metrics for every class plus weighted, macro and micro
/// averages.
pub fn multiclass_metrics(cm: &ConfusionMatrix) -> Result<MulticlassMetrics> {
    let c = cm.n_classes();
    let total = cm.total();
    if c == 0 || total == 0 {
        return Err(MetricsError::Empty);
    }
    let per_class: Vec<ClassMetrics> = (0..c)
        .map(|k| {
            let tp = cm.get(k, k);
            let support: u64 = cm.counts[k].iter().sum();
            let predicted: u64 = (0..c).map(|i| cm.get(i, k)).sum();
            let (precision, dp) = ratio(tp, predicted);
            let (recall, dr) = ratio(tp, support);
            let (f1, df) = harmonic(precision, recall);
            ClassMetrics {
                class: cm.class_names[k].clone(),
                precision,
                recall,
                f1,
                support,
                degenerate: Degenerate {
                    precision: dp,
                    recall: dr,
                    f1: df,
                },
            }
        })
        .collect();

    let n = total as f64;
    let weighted = Averages {
        precision: per_class.iter().map(|m| m.precision * m.support as f64 / n).sum(),
        recall: per_class.iter().map(|m| m.recall * m.support as f64 / n).sum(),
        f1: per_class.iter().map(|m| m.f1 * m.support as f64 / n).sum(),
    };
    let cf = c as f64;
    let macro_avg = Averages {
        precision: per_class.iter().map(|m| m.precision).sum::<f64>() / cf,
        recall: per_class.iter().map(|m| m.recall).sum::<f64>() / cf,
        f1: per_class.iter().map(|m| m.f1).sum::<f64>() / cf,
    };
    // Pooled counts: every off-diagonal cell is one FP and one FN.
    let tp = cm.trace();
    let (mp, _) = ratio(tp, total);
    let (mr, _) = ratio(tp, total);
    let micro = Averages {
        precision: mp,
        recall: mr,
        f1: harmonic(mp, mr).0,
    };
    Ok(MulticlassMetrics {
        per_class,
        accuracy: tp as f64 / n,
        weighted,
        macro_avg,
        micro,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Section {
    Train,
    Predict,
}

/// Runs `f` and returns its result with the elapsed monotonic-clock seconds.
pub fn timing<R>(section: Section, f: impl FnOnce() -> R) -> (R, f64) {
    let start = Instant::now();
    let r = f();
    let secs = start.elapsed().as_secs_f64();
    log::debug!("{section:?}: {secs:.3} s");
    (r, secs)
}

/// Per-section accumulated seconds. Sections may nest; each accumulates only
/// its own span.
#[derive(Debug, Default)]
pub struct Timings {
    train: Cell<f64>,
    predict: Cell<f64>,
}

impl Timings {
    pub fn time<R>(&self, section: Section, f: impl FnOnce() -> R) -> R {
        let (r, secs) = timing(section, f);
        let slot = self.slot(section);
        slot.set(slot.get() + secs);
        r
    }

    pub fn get(&self, section: Section) -> f64 {
        self.slot(section).get()
    }

    fn slot(&self, section: Section) -> &Cell<f64> {
        match section {
            Section::Train => &self.train,
            Section::Predict => &self.predict,
        }
    }
}

/// Seconds at millisecond resolution.
pub fn fmt_secs(s: f64) -> String {
    format!("{s:.3}")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// `binary` or `multi`.
    pub task: String,
    pub model: String,
    pub confusion: ConfusionMatrix,
    pub metrics: MulticlassMetrics,
    /// Attack-positive metrics; binary task only.
    pub attack: Option<BinaryMetrics>,
    pub train_time_s: Option<f64>,
    pub predict_time_s: f64,
    pub n_eval_rows: u64,
    /// Effective configuration that produced the report.
    pub config: serde_json::Value,
}

impl EvalReport {
    pub fn new(
        task: &str,
        model: &str,
        confusion: ConfusionMatrix,
        train_time_s: Option<f64>,
        predict_time_s: f64,
        config: serde_json::Value,
    ) -> Result<Self> {
        let metrics = multiclass_metrics(&confusion)?;
        let attack = if confusion.n_classes() == 2 {
            Some(binary_metrics(&confusion)?)
        } else {
            None
        };
        Ok(Self {
            task: task.to_string(),
            model: model.to_string(),
            n_eval_rows: confusion.total(),
            confusion,
            metrics,
            attack,
            train_time_s,
            predict_time_s,
            config,
        })
    }

    pub fn accuracy(&self) -> f64 {
        self.metrics.accuracy
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Headline row plus the per-class table and the confusion matrix.
    /// Binary reports follow the Accuracy/Recall/Precision/F1 column order;
    /// multiclass reports put Precision before Recall. Averages are weighted.
    pub fn render_text(&self) -> String {
        let w = self.metrics.weighted;
        let pct = |v: f64| format!("{:.2}%", 100.0 * v);
        let train = self.train_time_s.unwrap_or(0.0);
        let mut out = String::new();
        if self.task == "binary" {
            let _ = writeln!(
                out,
                "{:<20} {:>9} {:>9} {:>9} {:>9} {:>18} {:>20} {:>15}",
                "", "Accuracy", "Recall", "Precision", "F1-Score", "time to train (s)", "time to predict (s)", "total time (s)"
            );
            let _ = writeln!(
                out,
                "{:<20} {:>9} {:>9} {:>9} {:>9} {:>18} {:>20} {:>15}",
                self.model,
                pct(self.metrics.accuracy),
                pct(w.recall),
                pct(w.precision),
                pct(w.f1),
                fmt_secs(train),
                fmt_secs(self.predict_time_s),
                fmt_secs(train + self.predict_time_s)
            );
        } else {
            let _ = writeln!(
                out,
                "{:<20} {:>9} {:>9} {:>9} {:>9} {:>18} {:>20}",
                "", "Accuracy", "Precision", "Recall", "F1-Score", "Time to Train (s)", "Time to Predict (s)"
            );
            let _ = writeln!(
                out,
                "{:<20} {:>9} {:>9} {:>9} {:>9} {:>18} {:>20}",
                self.model,
                pct(self.metrics.accuracy),
                pct(w.precision),
                pct(w.recall),
                pct(w.f1),
                fmt_secs(train),
                fmt_secs(self.predict_time_s)
            );
        }
        if let Some(a) = &self.attack {
            let _ = writeln!(
                out,
                "\nattack as positive: accuracy {} recall {} precision {} f1 {}{}",
                pct(a.accuracy),
                pct(a.recall),
                pct(a.precision),
                pct(a.f1),
                if a.degenerate.any() { " (degenerate)" } else { "" }
            );
        }
        let _ = writeln!(out, "\n{:<16} {:>9} {:>9} {:>9} {:>9}", "class", "precision", "recall", "f1", "support");
        for m in &self.metrics.per_class {
            let _ = writeln!(
                out,
                "{:<16} {:>9.4} {:>9.4} {:>9.4} {:>9}{}",
                m.class,
                m.precision,
                m.recall,
                m.f1,
                m.support,
                if m.degenerate.any() { "  *" } else { "" }
            );
        }
        let _ = writeln!(out, "\nconfusion matrix (rows actual, columns predicted):");
        out.push_str(&self.confusion.render());
        out
    }

    /// One row per class, then the weighted and macro averages.
    pub fn metrics_csv(&self) -> String {
        let mut out = String::from("class,precision,recall,f1,support\n");
        for m in &self.metrics.per_class {
            let _ = writeln!(out, "{},{},{},{},{}", m.class, m.precision, m.recall, m.f1, m.support);
        }
        let total = self.confusion.total();
        for (name, a) in [("weighted", self.metrics.weighted), ("macro", self.metrics.macro_avg)] {
            let _ = writeln!(out, "{},{},{},{},{}", name, a.precision, a.recall, a.f1, total);
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    /// The confusion matrix as CSV.
    Csv,
    Text,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "text" | "txt" => Ok(ReportFormat::Text),
            other => Err(format!("unknown report format `{other}` (json|csv|text)")),
        }
    }
}

pub fn emit_report(report: &EvalReport, format: ReportFormat, path: &Path) -> Result<()> {
    let body = match format {
        ReportFormat::Json => report.to_json(),
        ReportFormat::Csv => report.confusion.to_csv(),
        ReportFormat::Text => report.render_text(),
    };
    std::fs::write(path, body).map_err(|source| MetricsError::Io {
        path: path.to_path_buf(),
        source,
    })
}
