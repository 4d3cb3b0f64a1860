//! Chi-square feature scoring and top-k selection.
//!
//! Each non-negative feature is treated as a mass distributed over the
//! classes: the observed mass of class `c` is the sum of the feature over
//! rows labelled `c`, and the expected mass is the feature's total scaled by
//! the class prior `N_c / N`. The score is `Σ_c (O − E)² / E`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::{FeatureFrame, LabelView, CATEGORICAL_COLUMNS};

#[derive(Debug, thiserror::Error)]
pub enum ChiselError {
    #[error("feature `{feature}` has a negative value at row {row}")]
    NegativeFeature { feature: String, row: usize },
    #[error("k = {k} out of range for {available} scored features")]
    KOutOfRange { k: usize, available: usize },
    #[error("mask index {index} out of range for a {width}-wide frame")]
    IndexOutOfRange { index: usize, width: usize },
    #[error("mask feature `{expected}` does not match frame column `{found}`")]
    NameMismatch { expected: String, found: String },
    #[error("invalid mask: {0}")]
    InvalidMask(String),
}

pub type Result<T, E = ChiselError> = std::result::Result<T, E>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureScore {
    /// Column index in the scored frame.
    pub index: usize,
    pub feature: String,
    pub score: f64,
}

/// Retained columns, strictly increasing by index.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionMask {
    pub indices: Vec<usize>,
    pub names: Vec<String>,
}

impl SelectionMask {
    pub fn new(mut pairs: Vec<(usize, String)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(ChiselError::InvalidMask("a mask needs at least one feature".into()));
        }
        pairs.sort_by_key(|(i, _)| *i);
        if pairs.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(ChiselError::InvalidMask("duplicate column index".into()));
        }
        let (indices, names) = pairs.into_iter().unzip();
        Ok(Self { indices, names })
    }

    /// Every column of the frame, in order.
    pub fn identity(frame: &FeatureFrame) -> Self {
        Self {
            indices: (0..frame.n_features()).collect(),
            names: frame.feature_names().to_vec(),
        }
    }

    pub fn k(&self) -> usize {
        self.indices.len()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("mask serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s).map_err(|e| ChiselError::InvalidMask(e.to_string()))?;
        if m.indices.len() != m.names.len() {
            return Err(ChiselError::InvalidMask("indices and names differ in length".into()));
        }
        Self::new(m.indices.into_iter().zip(m.names).collect())
    }
}

/// Scores every column of `frame` against the chosen labels. Columns summing
/// to zero score 0; classes with no rows are skipped.
pub fn chi2_scores(frame: &FeatureFrame, view: LabelView) -> Result<Vec<FeatureScore>> {
    let n_classes = view.n_classes();
    let labels = frame.labels(view);
    let width = frame.n_features();
    let n = frame.n_rows();

    let mut class_counts = vec![0usize; n_classes];
    for &y in labels {
        class_counts[y as usize] += 1;
    }
    // observed[f * C + c]
    let mut observed = vec![0.0f64; width * n_classes];
    for (r, &y) in labels.iter().enumerate() {
        for (f, &v) in frame.row(r).iter().enumerate() {
            if v < 0.0 {
                return Err(ChiselError::NegativeFeature {
                    feature: frame.feature_names()[f].clone(),
                    row: r,
                });
            }
            observed[f * n_classes + y as usize] += v as f64;
        }
    }

    Ok((0..width)
        .map(|f| {
            let obs = &observed[f * n_classes..(f + 1) * n_classes];
            let total: f64 = obs.iter().sum();
            let score = if total > 0.0 {
                let mut terms: Vec<f64> = obs
                    .iter()
                    .zip(&class_counts)
                    .filter(|(_, &nc)| nc > 0)
                    .map(|(&o, &nc)| {
                        let e = total * nc as f64 / n as f64;
                        (o - e) * (o - e) / e
                    })
                    .collect();
                // Summing in value order makes the score independent of class ids.
                terms.sort_by(f64::total_cmp);
                terms.iter().sum()
            } else {
                0.0
            };
            FeatureScore {
                index: f,
                feature: frame.feature_names()[f].clone(),
                score,
            }
        })
        .collect())
}

/// Drops the ordinal-encoded categorical columns from a score list.
pub fn numeric_only(scores: Vec<FeatureScore>) -> Vec<FeatureScore> {
    scores
        .into_iter()
        .filter(|s| !CATEGORICAL_COLUMNS.contains(&s.feature.as_str()))
        .collect()
}

/// Scores sorted by descending score, ties by ascending column index.
pub fn ranked(scores: &[FeatureScore]) -> Vec<FeatureScore> {
    let mut v = scores.to_vec();
    v.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.index.cmp(&b.index)));
    v
}

pub fn select_top_k(scores: &[FeatureScore], k: usize) -> Result<SelectionMask> {
    if k == 0 || k > scores.len() {
        return Err(ChiselError::KOutOfRange {
            k,
            available: scores.len(),
        });
    }
    SelectionMask::new(
        ranked(scores)
            .into_iter()
            .take(k)
            .map(|s| (s.index, s.feature))
            .collect(),
    )
}

/// Restricts a frame to the mask's columns. Names are checked so a mask is
/// never applied to a frame with a different column layout.
pub fn apply_mask(frame: &FeatureFrame, mask: &SelectionMask) -> Result<FeatureFrame> {
    if mask.indices.is_empty() {
        return Err(ChiselError::InvalidMask("a mask needs at least one feature".into()));
    }
    for (&i, name) in mask.indices.iter().zip(&mask.names) {
        let found = frame
            .feature_names()
            .get(i)
            .ok_or(ChiselError::IndexOutOfRange {
                index: i,
                width: frame.n_features(),
            })?;
        if found != name {
            return Err(ChiselError::NameMismatch {
                expected: name.clone(),
                found: found.clone(),
            });
        }
    }
    frame
        .select_columns(&mask.indices)
        .map_err(|e| ChiselError::InvalidMask(e.to_string()))
}

/// `rank,feature,score` with the score in 3-significant-digit scientific
/// notation (e.g. `1.72e6`).
pub fn score_report_csv(scores: &[FeatureScore]) -> String {
    let mut out = String::from("rank,feature,score\n");
    for (i, s) in ranked(scores).iter().enumerate() {
        let _ = writeln!(out, "{},{},{:.2e}", i + 1, s.feature, s.score);
    }
    out
}

/// Two side-by-side `Feature Score` column pairs, ranks running down the left
/// pair first.
pub fn score_report_text(scores: &[FeatureScore]) -> String {
    let r = ranked(scores);
    let half = r.len().div_ceil(2);
    let name_w = r.iter().map(|s| s.feature.len()).max().unwrap_or(7).max(7);
    let cell = |s: Option<&FeatureScore>| match s {
        Some(s) => format!("{:<name_w$}  {:>8}", s.feature, format!("{:.2e}", s.score)),
        None => String::new(),
    };
    let mut out = format!(
        "{:<name_w$}  {:>8}    {:<name_w$}  {:>8}\n",
        "Feature", "Score", "Feature", "Score"
    );
    for i in 0..half {
        let line = format!("{}    {}", cell(r.get(i)), cell(r.get(half + i)));
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}
