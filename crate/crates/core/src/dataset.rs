use crate::error::{HnpError, Result};

/// Feature vectors paired with labels `1..=num_classes`, class 1 being the
/// highest priority. Rows are stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    dim: usize,
    num_classes: usize,
    values: Vec<f64>,
    labels: Vec<usize>,
}

impl LabeledDataset {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        let dim = features.first().map(Vec::len).unwrap_or(0);
        let mut values = Vec::with_capacity(dim * features.len());
        for (i, row) in features.iter().enumerate() {
            if row.len() != dim {
                return Err(HnpError::invalid(format!(
                    "row {i} has {} features, expected {dim}",
                    row.len()
                )));
            }
            values.extend_from_slice(row);
        }
        Self::from_flat(dim, values, labels, num_classes)
    }

    pub fn from_flat(
        dim: usize,
        values: Vec<f64>,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self> {
        if num_classes < 2 {
            return Err(HnpError::invalid("at least two classes are required"));
        }
        if dim == 0 && !labels.is_empty() {
            return Err(HnpError::invalid("feature dimension must be at least 1"));
        }
        if values.len() != dim * labels.len() {
            return Err(HnpError::invalid(format!(
                "{} feature values do not fill {} rows of dimension {dim}",
                values.len(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&y| y == 0 || y > num_classes) {
            return Err(HnpError::invalid(format!(
                "label {bad} outside 1..={num_classes}"
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(HnpError::invalid("feature values must be finite"));
        }
        Ok(Self {
            dim,
            num_classes,
            values,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        (0..self.len()).map(move |i| self.row(i))
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Row indices of each class, in dataset order. Entry `c` holds class `c + 1`.
    pub fn class_indices(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_classes];
        for (i, &y) in self.labels.iter().enumerate() {
            out[y - 1].push(i);
        }
        out
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut out = vec![0; self.num_classes];
        for &y in &self.labels {
            out[y - 1] += 1;
        }
        out
    }

    /// Errors naming the first class with no observations.
    pub fn require_all_classes(&self) -> Result<()> {
        match self.class_counts().iter().position(|&c| c == 0) {
            Some(c) => Err(HnpError::invalid(format!(
                "class {} has no observations",
                c + 1
            ))),
            None => Ok(()),
        }
    }

    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        let mut values = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            values.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        LabeledDataset {
            dim: self.dim,
            num_classes: self.num_classes,
            values,
            labels,
        }
    }
}
