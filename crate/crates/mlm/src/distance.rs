//! Euclidean distance computations and the distance matrices that drive
//! both halves of the model: the regression step maps input-space distance
//! columns onto output-space distance columns, and the recovery step reads
//! predicted distances back off the reference outputs.

use nalgebra::DMatrix;

use crate::data::{Dataset, ReferenceSet};
use crate::error::{Error, Result};

/// Upper bound for [`self_distance_det_sign`]; determinants of larger
/// matrices overflow the useful range quickly and the sign law is a
/// small-`n` diagnostic anyway.
pub const DET_SIGN_MAX_ROWS: usize = 12;

/// Euclidean distance between two equal-length slices.
pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn row(m: &DMatrix<f64>, i: usize, buf: &mut Vec<f64>) {
    buf.clear();
    buf.extend(m.row(i).iter().copied());
}

/// The `m x k` matrix of Euclidean distances between every row of `a` and
/// every row of `c`. Exact distances are the contract: no squared-distance
/// shortcut is taken, so a zero entry means the rows are equal.
pub fn pairwise_distances(a: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.ncols() != c.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "left rows have {} columns, right rows have {}",
            a.ncols(),
            c.ncols()
        )));
    }
    if a.iter().any(|v| !v.is_finite()) || c.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput("pairwise distance operands".into()));
    }
    let mut out = DMatrix::<f64>::zeros(a.nrows(), c.nrows());
    let mut ra = Vec::with_capacity(a.ncols());
    let mut rc = Vec::with_capacity(c.ncols());
    for i in 0..a.nrows() {
        row(a, i, &mut ra);
        for j in 0..c.nrows() {
            row(c, j, &mut rc);
            out[(i, j)] = euclidean(&ra, &rc);
        }
    }
    Ok(out)
}

/// Distances from one query row to every row of `c`.
pub fn distances_to_rows(query: &[f64], c: &DMatrix<f64>) -> Result<Vec<f64>> {
    if query.len() != c.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "query has {} entries, rows have {} columns",
            query.len(),
            c.ncols()
        )));
    }
    if query.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput("query point".into()));
    }
    let mut buf = Vec::with_capacity(c.ncols());
    Ok((0..c.nrows())
        .map(|j| {
            row(c, j, &mut buf);
            euclidean(query, &buf)
        })
        .collect())
}

/// The paired `n x k` input-space and output-space distance matrices of a
/// dataset against a reference subset.
#[derive(Debug, Clone, PartialEq)]
pub struct DistancePair {
    /// Input-space distances, entry `(i, k)` = distance from input row `i`
    /// to reference input `k`.
    pub dx: DMatrix<f64>,
    /// Output-space distances against the reference outputs.
    pub dy: DMatrix<f64>,
}

impl DistancePair {
    pub fn compute(data: &Dataset, refs: &ReferenceSet) -> Result<Self> {
        Ok(Self {
            dx: pairwise_distances(data.inputs(), refs.inputs())?,
            dy: pairwise_distances(data.outputs(), refs.outputs())?,
        })
    }
}

/// Sign of the determinant of the self-distance matrix of `points`.
///
/// For `n` pairwise-distinct rows the determinant is nonzero with sign
/// `(-1)^(n-1)`: positive for odd `n`, negative for even `n`. Duplicate
/// rows violate that hypothesis and are rejected.
pub fn self_distance_det_sign(points: &DMatrix<f64>) -> Result<i8> {
    let n = points.nrows();
    if !(2..=DET_SIGN_MAX_ROWS).contains(&n) {
        return Err(Error::InvalidArgument(format!(
            "need between 2 and {DET_SIGN_MAX_ROWS} rows, got {n}"
        )));
    }
    let d = pairwise_distances(points, points)?;
    for i in 0..n {
        for j in (i + 1)..n {
            if d[(i, j)] == 0.0 {
                return Err(Error::DuplicateRows(i, j));
            }
        }
    }
    let det = d.determinant();
    if det == 0.0 {
        return Err(Error::DegenerateSystem(
            "self-distance matrix is numerically singular".into(),
        ));
    }
    Ok(if det > 0.0 { 1 } else { -1 })
}
