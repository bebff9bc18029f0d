//! Supervised datasets, reference subsets, and min-max feature scaling.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A supervised dataset: `n` input rows of `p` features paired with `n`
/// output rows of `l` targets. Row `i` of `inputs` corresponds to row `i`
/// of `outputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: DMatrix<f64>,
    outputs: DMatrix<f64>,
}

impl Dataset {
    /// Builds a dataset after validating shapes and finiteness.
    pub fn new(inputs: DMatrix<f64>, outputs: DMatrix<f64>) -> Result<Self> {
        if inputs.nrows() == 0 || inputs.ncols() == 0 || outputs.ncols() == 0 {
            return Err(Error::InvalidArgument(
                "dataset needs at least one row, one feature, and one target".into(),
            ));
        }
        if inputs.nrows() != outputs.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "{} input rows vs {} output rows",
                inputs.nrows(),
                outputs.nrows()
            )));
        }
        if inputs.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("dataset inputs".into()));
        }
        if outputs.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("dataset outputs".into()));
        }
        Ok(Self { inputs, outputs })
    }

    /// Builds a dataset from row-major nested vectors.
    pub fn from_rows(inputs: &[Vec<f64>], outputs: &[Vec<f64>]) -> Result<Self> {
        let build = |rows: &[Vec<f64>], what: &str| -> Result<DMatrix<f64>> {
            let n = rows.len();
            if n == 0 {
                return Err(Error::InvalidArgument(format!("{what}: no rows")));
            }
            let width = rows[0].len();
            for (i, r) in rows.iter().enumerate() {
                if r.len() != width {
                    return Err(Error::DimensionMismatch(format!(
                        "{what}: row 0 has {width} columns but row {i} has {}",
                        r.len()
                    )));
                }
            }
            Ok(DMatrix::from_fn(n, width, |i, j| rows[i][j]))
        };
        Dataset::new(build(inputs, "inputs")?, build(outputs, "outputs")?)
    }

    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.inputs
    }

    pub fn outputs(&self) -> &DMatrix<f64> {
        &self.outputs
    }

    /// Number of observations.
    pub fn n(&self) -> usize {
        self.inputs.nrows()
    }

    /// Input dimension.
    pub fn p(&self) -> usize {
        self.inputs.ncols()
    }

    /// Output dimension.
    pub fn l(&self) -> usize {
        self.outputs.ncols()
    }

    /// The sub-dataset at the given row indices, in the given order.
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        for &r in rows {
            if r >= self.n() {
                return Err(Error::InvalidArgument(format!(
                    "row index {r} out of range for {} rows",
                    self.n()
                )));
            }
        }
        Ok(Self {
            inputs: self.inputs.select_rows(rows.iter()),
            outputs: self.outputs.select_rows(rows.iter()),
        })
    }
}

/// The selected reference subset of a training set: `k` distinct row
/// indices plus exact copies of the corresponding input rows (`r`) and
/// output rows (`t`).
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSet {
    indices: Vec<usize>,
    r: DMatrix<f64>,
    t: DMatrix<f64>,
}

impl ReferenceSet {
    /// Extracts the reference rows at `indices` from `data`.
    pub fn from_indices(data: &Dataset, indices: Vec<usize>) -> Result<Self> {
        if indices.is_empty() || indices.len() > data.n() {
            return Err(Error::InvalidArgument(format!(
                "reference count {} must be in [1, {}]",
                indices.len(),
                data.n()
            )));
        }
        let mut seen = vec![false; data.n()];
        for &idx in &indices {
            if idx >= data.n() {
                return Err(Error::InvalidArgument(format!(
                    "reference index {idx} out of range for {} rows",
                    data.n()
                )));
            }
            if seen[idx] {
                return Err(Error::InvalidArgument(format!(
                    "reference index {idx} appears more than once"
                )));
            }
            seen[idx] = true;
        }
        let r = data.inputs.select_rows(indices.iter());
        let t = data.outputs.select_rows(indices.iter());
        Ok(Self { indices, r, t })
    }

    /// Every training row as a reference, in row order.
    pub fn full(data: &Dataset) -> Self {
        Self::from_indices(data, (0..data.n()).collect()).expect("full index set is valid")
    }

    /// Rebuilds a reference set from stored rows, e.g. when loading a
    /// serialized model. The indices point into the original training set,
    /// which is no longer available, so only their distinctness and the
    /// row shapes are checked here.
    pub fn from_rows(indices: Vec<usize>, r: DMatrix<f64>, t: DMatrix<f64>) -> Result<Self> {
        if indices.is_empty() || indices.len() != r.nrows() || indices.len() != t.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "{} indices vs {} input rows and {} output rows",
                indices.len(),
                r.nrows(),
                t.nrows()
            )));
        }
        if r.ncols() == 0 || t.ncols() == 0 {
            return Err(Error::InvalidArgument(
                "reference rows must be non-empty".into(),
            ));
        }
        if r.iter().any(|v| !v.is_finite()) || t.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("reference rows".into()));
        }
        let mut sorted = indices.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument(
                "reference indices must be distinct".into(),
            ));
        }
        Ok(Self { indices, r, t })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// Reference input rows, `k x p`.
    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.r
    }

    /// Reference output rows, `k x l`.
    pub fn outputs(&self) -> &DMatrix<f64> {
        &self.t
    }

    pub fn k(&self) -> usize {
        self.indices.len()
    }
}

/// Per-feature affine map onto `[0, 1]`, fitted on training rows.
///
/// Constant features map to 0 rather than dividing by zero. Rows
/// transformed later with the same parameters may fall outside `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    mins: Vec<f64>,
    maxs: Vec<f64>,
}

impl Scaler {
    /// Learns per-column min and max from `rows`.
    pub fn fit(rows: &DMatrix<f64>) -> Result<Self> {
        if rows.nrows() == 0 || rows.ncols() == 0 {
            return Err(Error::InvalidArgument(
                "cannot fit a scaler on an empty matrix".into(),
            ));
        }
        if rows.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("scaler fit rows".into()));
        }
        let mut mins = vec![f64::INFINITY; rows.ncols()];
        let mut maxs = vec![f64::NEG_INFINITY; rows.ncols()];
        for j in 0..rows.ncols() {
            for i in 0..rows.nrows() {
                let v = rows[(i, j)];
                mins[j] = mins[j].min(v);
                maxs[j] = maxs[j].max(v);
            }
        }
        Ok(Self { mins, maxs })
    }

    /// The identity map over `width` features.
    pub fn identity(width: usize) -> Self {
        Self {
            mins: vec![0.0; width],
            maxs: vec![1.0; width],
        }
    }

    pub fn width(&self) -> usize {
        self.mins.len()
    }

    pub fn mins(&self) -> &[f64] {
        &self.mins
    }

    pub fn maxs(&self) -> &[f64] {
        &self.maxs
    }

    fn scale_one(&self, j: usize, v: f64) -> f64 {
        let span = self.maxs[j] - self.mins[j];
        if span == 0.0 {
            0.0
        } else {
            (v - self.mins[j]) / span
        }
    }

    fn unscale_one(&self, j: usize, v: f64) -> f64 {
        let span = self.maxs[j] - self.mins[j];
        if span == 0.0 {
            self.mins[j]
        } else {
            self.mins[j] + v * span
        }
    }

    /// Applies the map column-wise to a matrix with matching width.
    pub fn apply(&self, rows: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if rows.ncols() != self.width() {
            return Err(Error::DimensionMismatch(format!(
                "scaler expects {} columns, got {}",
                self.width(),
                rows.ncols()
            )));
        }
        Ok(DMatrix::from_fn(rows.nrows(), rows.ncols(), |i, j| {
            self.scale_one(j, rows[(i, j)])
        }))
    }

    /// Applies the map to one row.
    pub fn apply_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.width() {
            return Err(Error::DimensionMismatch(format!(
                "scaler expects {} columns, got {}",
                self.width(),
                row.len()
            )));
        }
        Ok(row
            .iter()
            .enumerate()
            .map(|(j, &v)| self.scale_one(j, v))
            .collect())
    }

    /// Inverts the map column-wise.
    pub fn invert(&self, rows: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if rows.ncols() != self.width() {
            return Err(Error::DimensionMismatch(format!(
                "scaler expects {} columns, got {}",
                self.width(),
                rows.ncols()
            )));
        }
        Ok(DMatrix::from_fn(rows.nrows(), rows.ncols(), |i, j| {
            self.unscale_one(j, rows[(i, j)])
        }))
    }

    /// Inverts the map for one row.
    pub fn invert_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.width() {
            return Err(Error::DimensionMismatch(format!(
                "scaler expects {} columns, got {}",
                self.width(),
                row.len()
            )));
        }
        Ok(row
            .iter()
            .enumerate()
            .map(|(j, &v)| self.unscale_one(j, v))
            .collect())
    }
}
