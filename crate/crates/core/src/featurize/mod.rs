//! Feature vectors from per-patient gene-by-cell-type matrices.
//!
//! Four schemes:
//! - M1 keeps the matrix entries with the largest across-patient standard
//!   deviations.
//! - M2 weights genes by the first principal component of all patients'
//!   cell-type columns pooled together; one feature per cell type.
//! - M3 weights each patient's cell types by the absolute loadings of that
//!   patient's own first principal component; one feature per gene.
//! - M4 weights cell types by the first principal component of the
//!   nonzero-mean matrix; one feature per gene.

mod pca;

use serde::{Deserialize, Serialize};

pub use pca::{first_pc, PrincipalComponent, PC_MAX_ITERS, PC_TOLERANCE};

use crate::error::{HnpError, Result};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(HnpError::DimensionMismatch {
                expected: rows * cols,
                got: values.len(),
            });
        }
        Ok(Self { rows, cols, values })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(HnpError::invalid("matrix rows have different lengths"));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            values: rows.concat(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut values = Vec::with_capacity(self.values.len());
        for c in 0..self.cols {
            for r in 0..self.rows {
                values.push(self.get(r, c));
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            values,
        }
    }

    /// Keeps the listed columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Self {
        let mut values = Vec::with_capacity(self.rows * cols.len());
        for r in 0..self.rows {
            let row = self.row(r);
            values.extend(cols.iter().map(|&c| row[c]));
        }
        Self {
            rows: self.rows,
            cols: cols.len(),
            values,
        }
    }

    /// `self * w`.
    pub fn times(&self, w: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|r| self.row(r).iter().zip(w).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `w^T * self`.
    pub fn left_times(&self, w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (r, wr) in w.iter().enumerate().take(self.rows) {
            for (o, v) in out.iter_mut().zip(self.row(r)) {
                *o += wr * v;
            }
        }
        out
    }
}

/// One patient's `n_g x n_c` matrix (genes by cell types).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientMatrix {
    pub id: String,
    pub genes: Vec<String>,
    pub cell_types: Vec<String>,
    pub values: Matrix,
}

impl PatientMatrix {
    pub fn new(
        id: impl Into<String>,
        genes: Vec<String>,
        cell_types: Vec<String>,
        values: Matrix,
    ) -> Result<Self> {
        if values.rows() != genes.len() || values.cols() != cell_types.len() {
            return Err(HnpError::invalid(format!(
                "matrix is {}x{} but axes list {} genes and {} cell types",
                values.rows(),
                values.cols(),
                genes.len(),
                cell_types.len()
            )));
        }
        if values.values().iter().any(|v| !v.is_finite()) {
            return Err(HnpError::invalid("matrix entries must be finite"));
        }
        Ok(Self {
            id: id.into(),
            genes,
            cell_types,
            values,
        })
    }

    /// Axes named `g1..` and `c1..`.
    pub fn unnamed(id: impl Into<String>, values: Matrix) -> Self {
        let genes = (1..=values.rows()).map(|i| format!("g{i}")).collect();
        let cell_types = (1..=values.cols()).map(|i| format!("c{i}")).collect();
        Self {
            id: id.into(),
            genes,
            cell_types,
            values,
        }
    }

    pub fn num_genes(&self) -> usize {
        self.genes.len()
    }

    pub fn num_cell_types(&self) -> usize {
        self.cell_types.len()
    }

    fn same_axes(&self, other: &PatientMatrix) -> bool {
        self.genes == other.genes && self.cell_types == other.cell_types
    }
}

fn check_cohort(cohort: &[PatientMatrix]) -> Result<()> {
    let Some(first) = cohort.first() else {
        return Err(HnpError::invalid("cohort is empty"));
    };
    if first.num_genes() == 0 || first.num_cell_types() == 0 {
        return Err(HnpError::invalid("patient matrices must be nonempty"));
    }
    if let Some(p) = cohort.iter().find(|p| !p.same_axes(first)) {
        return Err(HnpError::invalid(format!(
            "patient {:?} has different gene or cell-type axes than {:?}",
            p.id, first.id
        )));
    }
    Ok(())
}

fn check_kept(kept: &[usize], n_c: usize) -> Result<()> {
    if kept.is_empty() {
        return Err(HnpError::invalid("no cell types kept"));
    }
    if let Some(&c) = kept.iter().find(|&&c| c >= n_c) {
        return Err(HnpError::invalid(format!(
            "cell type index {c} out of range for {n_c} cell types"
        )));
    }
    Ok(())
}

/// Default cutoff on a cell type's cohort-wide share of zero entries.
pub const DEFAULT_MAX_ZERO_FRACTION: f64 = 0.95;

/// Indices of cell types whose share of zero entries over all patients and
/// genes is at most `max_zero_fraction`.
pub fn drop_sparse_cell_types(
    cohort: &[PatientMatrix],
    max_zero_fraction: f64,
) -> Result<Vec<usize>> {
    check_cohort(cohort)?;
    let n_g = cohort[0].num_genes();
    let total = (n_g * cohort.len()) as f64;
    Ok((0..cohort[0].num_cell_types())
        .filter(|&v| {
            let zeros = cohort
                .iter()
                .map(|p| (0..n_g).filter(|&u| p.values.get(u, v) == 0.0).count())
                .sum::<usize>();
            zeros as f64 / total <= max_zero_fraction
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeaturizeMethod {
    M1,
    M2,
    M3,
    M4,
}

impl std::str::FromStr for FeaturizeMethod {
    type Err = HnpError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "M1" => Ok(Self::M1),
            "M2" => Ok(Self::M2),
            "M3" => Ok(Self::M3),
            "M4" => Ok(Self::M4),
            _ => Err(HnpError::invalid(format!(
                "unknown featurization {s:?}; expected M1..M4"
            ))),
        }
    }
}

/// What a featurization learned from its cohort; enough to featurize new
/// patients on the same axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method")]
pub enum Featurization {
    /// `(gene, cell type)` positions kept, in row-major order.
    M1 { positions: Vec<(usize, usize)> },
    /// Gene loadings over the kept cell types.
    M2 {
        cell_types: Vec<usize>,
        loadings: Vec<f64>,
    },
    /// Per-patient weights; only the kept cell types are stored.
    M3 { cell_types: Vec<usize> },
    /// Cell-type loadings of the nonzero-mean matrix.
    M4 { loadings: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedFeaturization {
    pub genes: Vec<String>,
    pub cell_types: Vec<String>,
    pub transform: Featurization,
}

impl FittedFeaturization {
    pub fn method(&self) -> FeaturizeMethod {
        match self.transform {
            Featurization::M1 { .. } => FeaturizeMethod::M1,
            Featurization::M2 { .. } => FeaturizeMethod::M2,
            Featurization::M3 { .. } => FeaturizeMethod::M3,
            Featurization::M4 { .. } => FeaturizeMethod::M4,
        }
    }

    pub fn feature_names(&self) -> Vec<String> {
        match &self.transform {
            Featurization::M1 { positions } => positions
                .iter()
                .map(|&(u, v)| format!("{}|{}", self.genes[u], self.cell_types[v]))
                .collect(),
            Featurization::M2 { cell_types, .. } => cell_types
                .iter()
                .map(|&v| self.cell_types[v].clone())
                .collect(),
            Featurization::M3 { .. } | Featurization::M4 { .. } => self.genes.clone(),
        }
    }

    /// Feature vector of one patient. The second value is a warning, if any.
    pub fn apply_one(&self, patient: &PatientMatrix) -> Result<(Vec<f64>, Option<String>)> {
        if patient.genes != self.genes || patient.cell_types != self.cell_types {
            return Err(HnpError::invalid(format!(
                "patient {:?} does not share the featurization's axes",
                patient.id
            )));
        }
        let a = &patient.values;
        Ok(match &self.transform {
            Featurization::M1 { positions } => {
                (positions.iter().map(|&(u, v)| a.get(u, v)).collect(), None)
            }
            Featurization::M2 {
                cell_types,
                loadings,
            } => (a.select_columns(cell_types).left_times(loadings), None),
            Featurization::M3 { cell_types } => m3_vector(patient, cell_types)?,
            Featurization::M4 { loadings } => (a.times(loadings), None),
        })
    }

    pub fn apply(&self, patients: &[PatientMatrix]) -> Result<FeatureVectorSet> {
        let mut vectors = Vec::with_capacity(patients.len());
        let mut warnings = Vec::new();
        for p in patients {
            let (v, w) = self.apply_one(p)?;
            vectors.push(v);
            warnings.extend(w);
        }
        Ok(FeatureVectorSet {
            patient_ids: patients.iter().map(|p| p.id.clone()).collect(),
            feature_names: self.feature_names(),
            vectors,
            featurization: self.clone(),
            warnings,
        })
    }
}

/// Feature vectors of a cohort together with the transform that made them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVectorSet {
    pub patient_ids: Vec<String>,
    pub feature_names: Vec<String>,
    pub vectors: Vec<Vec<f64>>,
    pub featurization: FittedFeaturization,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl FeatureVectorSet {
    pub fn method(&self) -> FeaturizeMethod {
        self.featurization.method()
    }

    pub fn dim(&self) -> usize {
        self.feature_names.len()
    }
}

fn fitted(cohort: &[PatientMatrix], transform: Featurization) -> FittedFeaturization {
    FittedFeaturization {
        genes: cohort[0].genes.clone(),
        cell_types: cohort[0].cell_types.clone(),
        transform,
    }
}

/// Keeps every entry whose across-patient sample standard deviation is at
/// least the `n_f`-th largest one, ties included.
pub fn featurize_m1(cohort: &[PatientMatrix], n_f: usize) -> Result<FeatureVectorSet> {
    check_cohort(cohort)?;
    if cohort.len() < 2 {
        return Err(HnpError::invalid("M1 needs at least two patients"));
    }
    let (n_g, n_c) = (cohort[0].num_genes(), cohort[0].num_cell_types());
    if n_f == 0 || n_f > n_g * n_c {
        return Err(HnpError::invalid(format!(
            "n_f must lie in 1..={}, got {n_f}",
            n_g * n_c
        )));
    }
    let m = cohort.len() as f64;
    let sds: Vec<f64> = (0..n_g * n_c)
        .map(|idx| {
            let vals = cohort.iter().map(|p| p.values.values()[idx]);
            let mean = vals.clone().sum::<f64>() / m;
            (vals.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0)).sqrt()
        })
        .collect();
    let mut sorted = sds.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let cutoff = sorted[n_f - 1];
    let positions = sds
        .iter()
        .enumerate()
        .filter(|(_, &sd)| sd >= cutoff)
        .map(|(idx, _)| (idx / n_c, idx % n_c))
        .collect();
    fitted(cohort, Featurization::M1 { positions }).apply(cohort)
}

/// Gene loadings from the first principal component of all patients' kept
/// columns stacked as rows (one row per patient and cell type, gene-centered).
/// Patient `j` maps to `w^T A_j` over the kept cell types.
pub fn featurize_m2(cohort: &[PatientMatrix], kept: &[usize]) -> Result<FeatureVectorSet> {
    check_cohort(cohort)?;
    check_kept(kept, cohort[0].num_cell_types())?;
    let n_g = cohort[0].num_genes();
    let mut stacked = Vec::with_capacity(cohort.len() * kept.len() * n_g);
    for p in cohort {
        for &v in kept {
            stacked.extend((0..n_g).map(|u| p.values.get(u, v)));
        }
    }
    let all = Matrix::new(cohort.len() * kept.len(), n_g, stacked)?;
    let pc = first_pc(&all)?;
    fitted(
        cohort,
        Featurization::M2 {
            cell_types: kept.to_vec(),
            loadings: pc.loadings,
        },
    )
    .apply(cohort)
}

fn m3_vector(patient: &PatientMatrix, kept: &[usize]) -> Result<(Vec<f64>, Option<String>)> {
    let a = patient.values.select_columns(kept);
    match first_pc(&a) {
        Ok(pc) => {
            let w: Vec<f64> = pc.loadings.iter().map(|l| l.abs()).collect();
            Ok((a.times(&w), None))
        }
        Err(HnpError::InvalidArgument(_)) => {
            let msg = format!(
                "patient {:?}: kept columns have no variance; feature vector set to zero",
                patient.id
            );
            log::warn!("{msg}");
            Ok((vec![0.0; a.rows()], Some(msg)))
        }
        Err(e) => Err(e),
    }
}

/// Per patient, cell-type weights are the absolute first-PC loadings of that
/// patient's kept columns; the features are `A_j w_j`.
pub fn featurize_m3(cohort: &[PatientMatrix], kept: &[usize]) -> Result<FeatureVectorSet> {
    check_cohort(cohort)?;
    check_kept(kept, cohort[0].num_cell_types())?;
    fitted(
        cohort,
        Featurization::M3 {
            cell_types: kept.to_vec(),
        },
    )
    .apply(cohort)
}

/// Entrywise mean over the patients where the entry is nonzero; 0 where every
/// patient is zero.
pub fn nonzero_mean(cohort: &[PatientMatrix]) -> Result<Matrix> {
    check_cohort(cohort)?;
    let (n_g, n_c) = (cohort[0].num_genes(), cohort[0].num_cell_types());
    let values = (0..n_g * n_c)
        .map(|idx| {
            let (sum, count) = cohort.iter().fold((0.0, 0usize), |(s, c), p| {
                let v = p.values.values()[idx];
                (s + v, c + usize::from(v != 0.0))
            });
            if count == 0 {
                0.0
            } else {
                sum / count as f64
            }
        })
        .collect();
    Matrix::new(n_g, n_c, values)
}

/// Cell-type loadings from the first principal component of the nonzero-mean
/// matrix; patient `j` maps to `A_j w`.
pub fn featurize_m4(cohort: &[PatientMatrix]) -> Result<FeatureVectorSet> {
    let mean = nonzero_mean(cohort)?;
    let pc = first_pc(&mean)?;
    fitted(
        cohort,
        Featurization::M4 {
            loadings: pc.loadings,
        },
    )
    .apply(cohort)
}
