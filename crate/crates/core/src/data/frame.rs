use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::schema::N_CLASSES;
use super::{DataError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

/// Which label vector a consumer reads.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelView {
    Binary,
    Multi,
}

impl LabelView {
    pub fn n_classes(self) -> usize {
        match self {
            LabelView::Binary => 2,
            LabelView::Multi => N_CLASSES,
        }
    }
}

impl std::str::FromStr for LabelView {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "binary" => Ok(LabelView::Binary),
            "multi" | "multiclass" => Ok(LabelView::Multi),
            other => Err(format!("unknown label view `{other}` (binary|multi)")),
        }
    }
}

impl std::fmt::Display for LabelView {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LabelView::Binary => "binary",
            LabelView::Multi => "multi",
        })
    }
}

/// Row-major `f32` feature matrix with both label views.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureFrame {
    feature_names: Vec<String>,
    matrix: Vec<f32>,
    binary_labels: Vec<u8>,
    class_labels: Vec<u8>,
    split: Split,
}

impl FeatureFrame {
    pub fn new(
        feature_names: Vec<String>,
        matrix: Vec<f32>,
        binary_labels: Vec<u8>,
        class_labels: Vec<u8>,
        split: Split,
    ) -> Result<Self> {
        let invalid = |m: String| Err(DataError::InvalidFrame(m));
        if feature_names.is_empty() {
            return invalid("no feature columns".into());
        }
        if let Some(bad) = feature_names
            .iter()
            .find(|n| matches!(n.as_str(), "id" | "label" | "attack_cat"))
        {
            return invalid(format!("`{bad}` cannot be a feature column"));
        }
        let n = binary_labels.len();
        if class_labels.len() != n {
            return invalid(format!(
                "{n} binary labels but {} class labels",
                class_labels.len()
            ));
        }
        if matrix.len() != n * feature_names.len() {
            return invalid(format!(
                "matrix has {} cells, expected {} × {}",
                matrix.len(),
                n,
                feature_names.len()
            ));
        }
        if binary_labels.iter().any(|&b| b > 1) {
            return invalid("binary label outside {0, 1}".into());
        }
        if class_labels.iter().any(|&c| c as usize >= N_CLASSES) {
            return invalid("class label outside 0..10".into());
        }
        Ok(Self {
            feature_names,
            matrix,
            binary_labels,
            class_labels,
            split,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.binary_labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn matrix(&self) -> &[f32] {
        &self.matrix
    }

    pub fn row(&self, i: usize) -> &[f32] {
        let w = self.n_features();
        &self.matrix[i * w..(i + 1) * w]
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f32> + '_ {
        self.matrix.iter().skip(j).step_by(self.n_features()).copied()
    }

    pub fn binary_labels(&self) -> &[u8] {
        &self.binary_labels
    }

    pub fn class_labels(&self) -> &[u8] {
        &self.class_labels
    }

    pub fn labels(&self, view: LabelView) -> &[u8] {
        match view {
            LabelView::Binary => &self.binary_labels,
            LabelView::Multi => &self.class_labels,
        }
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn is_unit_scaled(&self) -> bool {
        self.matrix.iter().all(|v| (0.0..=1.0).contains(v))
    }

    /// Row counts per class id.
    pub fn class_histogram(&self) -> [usize; N_CLASSES] {
        let mut h = [0; N_CLASSES];
        for &c in &self.class_labels {
            h[c as usize] += 1;
        }
        h
    }

    /// Keeps the given columns in the given order.
    pub fn select_columns(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(DataError::InvalidFrame("empty column selection".into()));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.n_features()) {
            return Err(DataError::InvalidFrame(format!(
                "column {bad} out of range for {} features",
                self.n_features()
            )));
        }
        let mut matrix = Vec::with_capacity(self.n_rows() * indices.len());
        for r in 0..self.n_rows() {
            let row = self.row(r);
            matrix.extend(indices.iter().map(|&j| row[j]));
        }
        Self::new(
            indices.iter().map(|&j| self.feature_names[j].clone()).collect(),
            matrix,
            self.binary_labels.clone(),
            self.class_labels.clone(),
            self.split,
        )
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut matrix = Vec::with_capacity(rows.len() * self.n_features());
        for &r in rows {
            matrix.extend_from_slice(self.row(r));
        }
        Self {
            feature_names: self.feature_names.clone(),
            matrix,
            binary_labels: rows.iter().map(|&r| self.binary_labels[r]).collect(),
            class_labels: rows.iter().map(|&r| self.class_labels[r]).collect(),
            split: self.split,
        }
    }

    /// A seeded random subset holding `fraction` of the rows, in original
    /// row order.
    pub fn holdout(&self, fraction: f64, seed: u64) -> Result<Self> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(DataError::InvalidFrame(format!(
                "holdout fraction {fraction} outside (0, 1]"
            )));
        }
        let n = self.n_rows();
        let k = ((n as f64) * fraction).round() as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = sample(&mut rng, n, k.min(n)).into_vec();
        rows.sort_unstable();
        Ok(self.select_rows(&rows))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame() -> FeatureFrame {
        FeatureFrame::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6],
            vec![0, 1],
            vec![0, 4],
            Split::Train,
        )
        .unwrap()
    }

    #[test]
    fn rejects_label_columns_and_bad_lengths() {
        let bad = FeatureFrame::new(vec!["label".into()], vec![0.0], vec![0], vec![0], Split::Train);
        assert!(bad.is_err());
        let bad = FeatureFrame::new(vec!["a".into()], vec![0.0, 1.0], vec![0], vec![0], Split::Train);
        assert!(bad.is_err());
        let bad = FeatureFrame::new(vec!["a".into()], vec![0.0], vec![0], vec![0, 1], Split::Train);
        assert!(bad.is_err());
        let bad = FeatureFrame::new(vec!["a".into()], vec![0.0], vec![2], vec![0], Split::Train);
        assert!(bad.is_err());
    }

    #[test]
    fn column_selection_reorders() {
        let f = frame();
        let g = f.select_columns(&[2, 0]).unwrap();
        assert_eq!(g.feature_names(), ["c", "a"]);
        assert_eq!(g.matrix(), &[0.3, 0.1, 0.6, 0.4]);
        assert_eq!(g.class_labels(), f.class_labels());
        assert!(f.select_columns(&[]).is_err());
        assert!(f.select_columns(&[3]).is_err());
        assert_eq!(f.select_columns(&[0, 1, 2]).unwrap(), f);
    }

    #[test]
    fn holdout_is_seeded() {
        let f = frame();
        assert_eq!(f.holdout(0.5, 7).unwrap(), f.holdout(0.5, 7).unwrap());
        assert_eq!(f.holdout(0.5, 7).unwrap().n_rows(), 1);
        assert_eq!(f.holdout(1.0, 1).unwrap(), f);
        assert!(f.holdout(0.0, 1).is_err());
    }
}
