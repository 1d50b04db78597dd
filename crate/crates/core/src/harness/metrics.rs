//! Three-class confusion matrix, accuracy and macro-F1.

use serde::{Deserialize, Serialize};

use crate::domain::Verdict;

/// Rows are true classes, columns predictions, both in (S, R, N) order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConfusionMatrix(pub [[usize; 3]; 3]);

impl ConfusionMatrix {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (Verdict, Verdict)>) -> Self {
        let mut m = [[0usize; 3]; 3];
        for (truth, predicted) in pairs {
            m[truth.index()][predicted.index()] += 1;
        }
        ConfusionMatrix(m)
    }

    pub fn total(&self) -> usize {
        self.0.iter().flatten().sum()
    }

    pub fn row_sum(&self, class: usize) -> usize {
        self.0[class].iter().sum()
    }

    pub fn column_sum(&self, class: usize) -> usize {
        self.0.iter().map(|row| row[class]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        (0..3).map(|k| self.0[k][k]).sum::<usize>() as f64 / total as f64
    }

    /// F1 per class; a class with no true or predicted members scores 0.
    pub fn f1_scores(&self) -> [f64; 3] {
        [0, 1, 2].map(|k| {
            let tp = self.0[k][k];
            let fp = self.column_sum(k) - tp;
            let fn_ = self.row_sum(k) - tp;
            let denom = 2 * tp + fp + fn_;
            if denom == 0 {
                0.0
            } else {
                (2 * tp) as f64 / denom as f64
            }
        })
    }

    /// Unweighted mean of the three per-class F1 scores.
    pub fn macro_f1(&self) -> f64 {
        self.f1_scores().iter().sum::<f64>() / 3.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub accuracy: f64,
    pub macro_f1: f64,
    /// F1 per class in (S, R, N) order.
    pub f1: [f64; 3],
    pub confusion: ConfusionMatrix,
}

impl ClassMetrics {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (Verdict, Verdict)>) -> Self {
        let confusion = ConfusionMatrix::from_pairs(pairs);
        ClassMetrics {
            accuracy: confusion.accuracy(),
            macro_f1: confusion.macro_f1(),
            f1: confusion.f1_scores(),
            confusion,
        }
    }
}
