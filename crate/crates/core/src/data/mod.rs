//! UNSW-NB15 ingestion: CSV loading, ordinal encoding of the categorical
//! columns, min-max scaling fitted on the training split, and the
//! [`FeatureFrame`] consumed by every model.

mod cache;
mod frame;
mod schema;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use cache::{decode_frame, encode_frame, load_frame, save_frame, FRAME_MAGIC, FRAME_VERSION};
pub use frame::{FeatureFrame, LabelView, Split};
pub use schema::{AttackClass, CATEGORICAL_COLUMNS, FEATURE_COLUMNS, N_CLASSES};

/// Canonical row counts of the official partitioned CSVs.
pub const CANONICAL_TRAIN_ROWS: usize = 175_341;
pub const CANONICAL_TEST_ROWS: usize = 82_332;

/// File names of the official partitions inside a dataset directory.
pub const TRAIN_FILE: &str = "UNSW_NB15_training-set.csv";
pub const TEST_FILE: &str = "UNSW_NB15_testing-set.csv";
/// Environment variable naming the dataset directory.
pub const DATA_DIR_ENV: &str = "EIDS_DATA_DIR";

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: header is missing column `{column}`")]
    MissingColumn { path: PathBuf, column: String },
    #[error("line {line}: expected {expected} cells, found {got}")]
    CellCount { line: u64, expected: usize, got: usize },
    #[error("line {line}: unknown attack_cat `{value}`")]
    UnknownAttackCat { line: u64, value: String },
    #[error("line {line}: label must be 0 or 1, found `{value}`")]
    BadLabel { line: u64, value: String },
    #[error("line {line}: label {label} disagrees with attack_cat {class}")]
    LabelMismatch { line: u64, label: u8, class: String },
    #[error("line {line}: column `{column}`: cannot parse `{value}` as a number")]
    Parse { line: u64, column: String, value: String },
    #[error("no records to fit the encoder on")]
    EmptyRecords,
    #[error("frame has no rows")]
    EmptyFrame,
    #[error("invalid frame: {0}")]
    InvalidFrame(String),
    #[error("frame cache: bad magic bytes")]
    BadMagic,
    #[error("frame cache: unsupported format version {0}")]
    UnsupportedVersion(u16),
    #[error("frame cache: checksum mismatch (file truncated or corrupted)")]
    Checksum,
    #[error("frame cache: {0}")]
    Format(String),
}

pub type Result<T, E = DataError> = std::result::Result<T, E>;

/// One data row: the 42 feature cells in [`FEATURE_COLUMNS`] order followed
/// by `attack_cat` and `label`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawRecord {
    pub line: u64,
    pub values: Vec<String>,
}

impl RawRecord {
    pub const WIDTH: usize = FEATURE_COLUMNS.len() + 2;

    pub fn attack_class(&self) -> Result<AttackClass> {
        let v = &self.values[FEATURE_COLUMNS.len()];
        AttackClass::parse(v).ok_or_else(|| DataError::UnknownAttackCat {
            line: self.line,
            value: v.clone(),
        })
    }

    pub fn label(&self) -> Result<u8> {
        let v = self.values[FEATURE_COLUMNS.len() + 1].trim();
        match v {
            "0" => Ok(0),
            "1" => Ok(1),
            _ => Err(DataError::BadLabel {
                line: self.line,
                value: v.to_string(),
            }),
        }
    }
}

/// Reads an UNSW-NB15 partition. The header may list the columns in any
/// order and may include `id`, which is dropped.
pub fn load_csv(path: &Path, expected_split: Split) -> Result<Vec<RawRecord>> {
    let file = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let records = read_records(file, path)?;
    let canonical = match expected_split {
        Split::Train => CANONICAL_TRAIN_ROWS,
        Split::Test => CANONICAL_TEST_ROWS,
    };
    log::info!("{}: {} records", path.display(), records.len());
    if records.len() != canonical {
        log::warn!(
            "{}: {} records, the official {} split has {}",
            path.display(),
            records.len(),
            expected_split,
            canonical
        );
    }
    Ok(records)
}

/// Parses records from any reader; `origin` is used in error messages.
pub fn read_records(reader: impl std::io::Read, origin: &Path) -> Result<Vec<RawRecord>> {
    let csv_err = |source| DataError::Csv {
        path: origin.to_path_buf(),
        source,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(|h| h.trim().trim_start_matches('\u{feff}').to_string())
        .collect();
    let wanted = FEATURE_COLUMNS
        .iter()
        .copied()
        .chain(["attack_cat", "label"]);
    let positions = wanted
        .map(|col| {
            header
                .iter()
                .position(|h| h == col)
                .ok_or_else(|| DataError::MissingColumn {
                    path: origin.to_path_buf(),
                    column: col.to_string(),
                })
        })
        .collect::<Result<Vec<usize>>>()?;

    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(csv_err)?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != header.len() {
            return Err(DataError::CellCount {
                line,
                expected: header.len(),
                got: row.len(),
            });
        }
        let rec = RawRecord {
            line,
            values: positions.iter().map(|&i| row[i].trim().to_string()).collect(),
        };
        let class = rec.attack_class()?;
        let label = rec.label()?;
        if (label == 0) != (class == AttackClass::Normal) {
            return Err(DataError::LabelMismatch {
                line,
                label,
                class: class.name().to_string(),
            });
        }
        out.push(rec);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub column: String,
    /// Sorted, deduplicated.
    pub values: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnRange {
    pub column: String,
    pub min: f64,
    pub max: f64,
    pub constant: bool,
}

/// Fitted preprocessing: vocabularies for the categorical columns and the
/// training-split range of every feature column (categoricals ranged over
/// their vocabulary indices).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderState {
    pub vocabularies: Vec<Vocabulary>,
    pub ranges: Vec<ColumnRange>,
}

impl EncoderState {
    pub fn vocabulary(&self, column: &str) -> Option<&[String]> {
        self.vocabularies
            .iter()
            .find(|v| v.column == column)
            .map(|v| v.values.as_slice())
    }

    /// Stable JSON form, also used for the checkpoint digest.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("encoder state serializes")
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }

    fn encode_cell(&self, col: usize, rec: &RawRecord) -> Result<f64> {
        let name = FEATURE_COLUMNS[col];
        let cell = &rec.values[col];
        if let Some(vocab) = self.vocabulary(name) {
            Ok(match vocab.binary_search_by(|v| v.as_str().cmp(cell)) {
                Ok(i) => i as f64,
                Err(_) => -1.0,
            })
        } else {
            parse_number(cell, name, rec.line)
        }
    }
}

fn parse_number(cell: &str, column: &str, line: u64) -> Result<f64> {
    cell.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| DataError::Parse {
            line,
            column: column.to_string(),
            value: cell.to_string(),
        })
}

pub fn fit_encoder(train_records: &[RawRecord]) -> Result<EncoderState> {
    if train_records.is_empty() {
        return Err(DataError::EmptyRecords);
    }
    let vocabularies: Vec<Vocabulary> = CATEGORICAL_COLUMNS
        .iter()
        .map(|&col| {
            let idx = schema::column_index(col);
            let mut values: Vec<String> = train_records.iter().map(|r| r.values[idx].clone()).collect();
            values.sort_unstable();
            values.dedup();
            Vocabulary {
                column: col.to_string(),
                values,
            }
        })
        .collect();
    let mut enc = EncoderState {
        vocabularies,
        ranges: Vec::new(),
    };
    let mut mins = vec![f64::INFINITY; FEATURE_COLUMNS.len()];
    let mut maxs = vec![f64::NEG_INFINITY; FEATURE_COLUMNS.len()];
    for rec in train_records {
        for col in 0..FEATURE_COLUMNS.len() {
            let v = enc.encode_cell(col, rec)?;
            mins[col] = mins[col].min(v);
            maxs[col] = maxs[col].max(v);
        }
    }
    enc.ranges = FEATURE_COLUMNS
        .iter()
        .zip(mins.into_iter().zip(maxs))
        .map(|(&column, (min, max))| ColumnRange {
            column: column.to_string(),
            min,
            max,
            constant: min == max,
        })
        .collect();
    Ok(enc)
}

/// Encodes and scales records into a frame. Out-of-range values (test split)
/// and unseen categories clip into `[0, 1]`; constant columns map to 0.
pub fn transform(records: &[RawRecord], enc: &EncoderState, split: Split) -> Result<FeatureFrame> {
    let width = FEATURE_COLUMNS.len();
    let mut matrix = Vec::with_capacity(records.len() * width);
    let mut binary = Vec::with_capacity(records.len());
    let mut classes = Vec::with_capacity(records.len());
    for rec in records {
        for (col, range) in enc.ranges.iter().enumerate() {
            let v = enc.encode_cell(col, rec)?;
            let scaled = if range.constant {
                0.0
            } else {
                ((v - range.min) / (range.max - range.min)).clamp(0.0, 1.0)
            };
            matrix.push(scaled as f32);
        }
        binary.push(rec.label()?);
        classes.push(rec.attack_class()?.id());
    }
    FeatureFrame::new(
        FEATURE_COLUMNS.iter().map(|s| s.to_string()).collect(),
        matrix,
        binary,
        classes,
        split,
    )
}

/// Inverse-frequency weights `N / (C_present · N_c)` over the ten classes.
/// Absent classes get weight 0.
pub fn class_weights(frame: &FeatureFrame) -> Result<Vec<f64>> {
    class_weights_for(frame.class_labels(), N_CLASSES)
}

pub fn class_weights_for(labels: &[u8], n_classes: usize) -> Result<Vec<f64>> {
    if labels.is_empty() {
        return Err(DataError::EmptyFrame);
    }
    let mut counts = vec![0usize; n_classes];
    for &y in labels {
        let y = y as usize;
        if y >= n_classes {
            return Err(DataError::InvalidFrame(format!(
                "label {y} out of range for {n_classes} classes"
            )));
        }
        counts[y] += 1;
    }
    let present = counts.iter().filter(|&&c| c > 0).count() as f64;
    let n = labels.len() as f64;
    Ok(counts
        .iter()
        .enumerate()
        .map(|(c, &nc)| {
            if nc == 0 {
                log::warn!("class {c} absent from training labels; weight set to 0");
                0.0
            } else {
                n / (present * nc as f64)
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header() -> String {
        let mut cols = vec!["id"];
        cols.extend_from_slice(&FEATURE_COLUMNS);
        cols.push("attack_cat");
        cols.push("label");
        cols.join(",")
    }

    fn row(id: usize, proto: &str, dur: f64, cat: &str, label: u8) -> String {
        let mut cells = vec![id.to_string()];
        for &c in FEATURE_COLUMNS.iter() {
            cells.push(match c {
                "proto" => proto.to_string(),
                "service" => "-".to_string(),
                "state" => "FIN".to_string(),
                "dur" => dur.to_string(),
                _ => "1".to_string(),
            });
        }
        cells.push(cat.to_string());
        cells.push(label.to_string());
        cells.join(",")
    }

    fn parse(text: &str) -> Result<Vec<RawRecord>> {
        read_records(text.as_bytes(), Path::new("fixture.csv"))
    }

    #[test]
    fn header_only_gives_no_records() {
        assert!(parse(&format!("{}\n", header())).unwrap().is_empty());
    }

    #[test]
    fn short_row_reports_its_line() {
        let good = row(1, "tcp", 0.5, "Normal", 0);
        let bad = {
            let mut cells: Vec<&str> = good.split(',').collect();
            cells.pop();
            cells.join(",")
        };
        let err = parse(&format!("{}\n{}\n{}\n", header(), good, bad)).unwrap_err();
        assert!(matches!(err, DataError::CellCount { line: 3, .. }), "{err}");
    }

    #[test]
    fn unknown_category_rejected() {
        let text = format!("{}\n{}\n", header(), row(1, "tcp", 0.5, "Ransomware", 1));
        assert!(matches!(parse(&text), Err(DataError::UnknownAttackCat { line: 2, .. })));
    }

    #[test]
    fn label_category_disagreement_rejected() {
        let text = format!("{}\n{}\n", header(), row(1, "tcp", 0.5, "Normal", 1));
        assert!(matches!(parse(&text), Err(DataError::LabelMismatch { .. })));
    }

    #[test]
    fn missing_column_rejected() {
        let err = parse("dur,proto\n1,tcp\n").unwrap_err();
        assert!(matches!(err, DataError::MissingColumn { .. }));
    }

    #[test]
    fn vocabulary_sorted_and_categorical_scaling() {
        let text = format!(
            "{}\n{}\n{}\n{}\n",
            header(),
            row(1, "udp", 2.0, "Normal", 0),
            row(2, "tcp", 8.0, "Exploits", 1),
            row(3, "icmp", 5.0, "Worms", 1)
        );
        let recs = parse(&text).unwrap();
        let enc = fit_encoder(&recs).unwrap();
        assert_eq!(enc.vocabulary("proto").unwrap(), ["icmp", "tcp", "udp"]);
        let dur = &enc.ranges[schema::column_index("dur")];
        assert_eq!((dur.min, dur.max, dur.constant), (2.0, 8.0, false));
        let spkts = &enc.ranges[schema::column_index("spkts")];
        assert!(spkts.constant);

        let frame = transform(&recs, &enc, Split::Train).unwrap();
        let proto = schema::column_index("proto");
        let dur_i = schema::column_index("dur");
        // tcp → index 1 of [0, 2] → 0.5
        assert_eq!(frame.row(1)[proto], 0.5);
        assert_eq!(frame.row(1)[dur_i], 1.0);
        assert_eq!(frame.row(0)[dur_i], 0.0);
        assert_eq!(frame.row(0)[schema::column_index("spkts")], 0.0);
        assert_eq!(frame.class_labels(), &[0, AttackClass::Exploits.id(), AttackClass::Worms.id()]);
        assert_eq!(frame.binary_labels(), &[0, 1, 1]);
    }

    #[test]
    fn test_split_clips_and_handles_unseen() {
        let train = parse(&format!(
            "{}\n{}\n{}\n",
            header(),
            row(1, "tcp", 2.0, "Normal", 0),
            row(2, "udp", 8.0, "DoS", 1)
        ))
        .unwrap();
        let test = parse(&format!(
            "{}\n{}\n{}\n",
            header(),
            row(1, "sctp", 10.0, "Normal", 0),
            row(2, "aaa", -4.0, "DoS", 1)
        ))
        .unwrap();
        let enc = fit_encoder(&train).unwrap();
        let frame = transform(&test, &enc, Split::Test).unwrap();
        let (proto, dur) = (schema::column_index("proto"), schema::column_index("dur"));
        assert_eq!(frame.row(0)[dur], 1.0);
        assert_eq!(frame.row(1)[dur], 0.0);
        assert_eq!(frame.row(0)[proto], 0.0);
        assert_eq!(frame.row(1)[proto], 0.0);
    }

    #[test]
    fn numeric_parse_error_names_column() {
        let text = format!("{}\n{}\n", header(), row(1, "tcp", 1.0, "Normal", 0).replacen(",1,", ",x,", 1));
        let recs = parse(&text).unwrap();
        match fit_encoder(&recs) {
            Err(DataError::Parse { line: 2, column, value }) => {
                assert_eq!(value, "x");
                assert!(FEATURE_COLUMNS.contains(&column.as_str()));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(fit_encoder(&[]), Err(DataError::EmptyRecords)));
    }

    #[test]
    fn weights_two_class_ninety_ten() {
        let mut labels = vec![0u8; 90];
        labels.extend(vec![1u8; 10]);
        let w = class_weights_for(&labels, 2).unwrap();
        assert!((w[0] - 0.5556).abs() < 1e-4);
        assert!((w[1] - 5.0).abs() < 1e-4);
    }

    #[test]
    fn weights_balanced_and_absent() {
        let labels: Vec<u8> = (0..100).map(|i| (i % 10) as u8).collect();
        let w = class_weights_for(&labels, 10).unwrap();
        assert!(w.iter().all(|&v| (v - 1.0).abs() < 1e-12));

        let labels: Vec<u8> = (0..90).map(|i| (i % 9) as u8).collect();
        let w = class_weights_for(&labels, 10).unwrap();
        assert_eq!(w[9], 0.0);
        assert!(w[..9].iter().all(|&v| (v - 1.0).abs() < 1e-12));
        assert!(matches!(class_weights_for(&[], 10), Err(DataError::EmptyFrame)));
    }
}
