//! Run configuration: a TOML file with sections, overridden by flags.
//!
//! ```toml
//! seed = 42
//! out = "eids-out"
//!
//! [data]
//! train = "UNSW_NB15_training-set.csv"
//! test = "UNSW_NB15_testing-set.csv"
//!
//! [select]
//! k = 20
//! label_view = "multi"
//! numeric_only = false
//!
//! [model]
//! # The literal published input shape is (1, 20); "features" treats the 20
//! # selected features as the sequence axis, "channels" keeps (1, 20).
//! axis = "features"
//! conv_filters = 32
//! conv_kernel = 3
//! lstm_hidden = 32
//! dense_units = 64
//! dropout = 0.3
//!
//! [train]
//! task = "binary"
//! lr = 0.001
//! epochs = 15
//! batch_size = 256
//! class_weights = false
//! validation_fraction = 0.0
//!
//! [baseline]
//! knn_k = 5
//! logistic_lr = 0.01
//! logistic_epochs = 50
//! logistic_batch_size = 512
//!
//! [report]
//! formats = ["json", "csv", "text"]
//! ```

use std::path::{Path, PathBuf};

use eids::baselines::LogisticConfig;
use eids::data::{LabelView, DATA_DIR_ENV, TEST_FILE, TRAIN_FILE};
use eids::idsmodel::{ArchitectureSpec, Axis, Head, TrainConfig};
use eids::metrics::ReportFormat;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_OUT: &str = "eids-out";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectSection {
    pub k: Option<usize>,
    pub label_view: Option<LabelView>,
    pub numeric_only: Option<bool>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub axis: Option<Axis>,
    pub conv_filters: Option<usize>,
    pub conv_kernel: Option<usize>,
    pub lstm_hidden: Option<usize>,
    pub dense_units: Option<usize>,
    pub dropout: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub task: Option<LabelView>,
    pub lr: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub class_weights: Option<bool>,
    pub validation_fraction: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineSection {
    pub knn_k: Option<usize>,
    pub logistic_lr: Option<f64>,
    pub logistic_epochs: Option<usize>,
    pub logistic_batch_size: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportSection {
    pub formats: Option<Vec<ReportFormat>>,
}

/// Everything optional; unset values fall back to task-dependent defaults in
/// [`RunConfig::resolve`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub select: SelectSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub baseline: BaselineSection,
    #[serde(default)]
    pub report: ReportSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }
}

/// Overwrites `slot` when the flag was given.
pub fn set<T>(slot: &mut Option<T>, flag: Option<T>) {
    if flag.is_some() {
        *slot = flag;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectSettings {
    pub k: usize,
    pub label_view: LabelView,
    pub numeric_only: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineSettings {
    pub knn_k: usize,
    pub logistic: LogisticConfig,
}

/// The fully resolved configuration; echoed into every report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Effective {
    pub seed: u64,
    pub out: PathBuf,
    pub data: DataSection,
    pub select: SelectSettings,
    pub architecture: ArchitectureSpec,
    pub train: TrainConfig,
    pub baseline: BaselineSettings,
    pub report_formats: Vec<ReportFormat>,
}

impl Effective {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

fn data_dir_file(name: &str) -> Option<PathBuf> {
    std::env::var_os(DATA_DIR_ENV).map(|d| PathBuf::from(d).join(name))
}

impl RunConfig {
    /// Fills every unset value. Training defaults follow the task; the model
    /// input width follows `input_width`, normally the mask size.
    pub fn resolve(&self, input_width: usize) -> Result<Effective> {
        let task = self.train.task.unwrap_or(LabelView::Binary);
        let base = TrainConfig::for_task(task);
        let seed = self.seed.unwrap_or(DEFAULT_SEED);
        let train = TrainConfig {
            task,
            lr: self.train.lr.unwrap_or(base.lr),
            epochs: self.train.epochs.unwrap_or(base.epochs),
            batch_size: self.train.batch_size.unwrap_or(base.batch_size),
            seed,
            use_class_weights: self.train.class_weights.unwrap_or(base.use_class_weights),
            validation_fraction: self.train.validation_fraction.unwrap_or(base.validation_fraction),
        };
        let mut architecture = ArchitectureSpec::new(Head::from(task));
        architecture.input_width = input_width;
        let m = &self.model;
        architecture.axis = m.axis.unwrap_or(architecture.axis);
        architecture.conv_filters = m.conv_filters.unwrap_or(architecture.conv_filters);
        architecture.conv_kernel = m.conv_kernel.unwrap_or(architecture.conv_kernel);
        architecture.lstm_hidden = m.lstm_hidden.unwrap_or(architecture.lstm_hidden);
        architecture.dense_units = m.dense_units.unwrap_or(architecture.dense_units);
        architecture.dropout_rate = m.dropout.unwrap_or(architecture.dropout_rate);
        architecture
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        train.validate().map_err(|e| CliError::Config(e.to_string()))?;

        let logistic = LogisticConfig {
            lr: self.baseline.logistic_lr.unwrap_or(0.01),
            epochs: self.baseline.logistic_epochs.unwrap_or(50),
            batch_size: self.baseline.logistic_batch_size.unwrap_or(512),
            seed,
            ..LogisticConfig::new(task)
        };
        let knn_k = self.baseline.knn_k.unwrap_or(5);
        if knn_k == 0 {
            return Err(CliError::Config("knn_k must be at least 1".into()));
        }
        let select = SelectSettings {
            k: self.select.k.unwrap_or(20),
            label_view: self.select.label_view.unwrap_or(LabelView::Multi),
            numeric_only: self.select.numeric_only.unwrap_or(false),
        };
        if select.k == 0 {
            return Err(CliError::Config("k must be at least 1".into()));
        }
        Ok(Effective {
            seed,
            out: self.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT)),
            data: DataSection {
                train: self.data.train.clone().or_else(|| data_dir_file(TRAIN_FILE)),
                test: self.data.test.clone().or_else(|| data_dir_file(TEST_FILE)),
            },
            select,
            architecture,
            train,
            baseline: BaselineSettings { knn_k, logistic },
            report_formats: self
                .report
                .formats
                .clone()
                .unwrap_or_else(|| vec![ReportFormat::Json, ReportFormat::Csv, ReportFormat::Text]),
        })
    }
}
