//! Model fitting: estimate the linear map `B` between input-space and
//! output-space distance matrices.
//!
//! Mathematically `B` minimizes `‖D_x B - D_y‖_F`, the ordinary
//! least-squares problem whose closed form is `(D_x' D_x)^-1 D_x' D_y`.
//! The closed form is the contract, not the algorithm: the Gram matrix can
//! be badly conditioned at large `K`, so the solve goes through LU (square
//! case) or Householder QR, with an SVD minimum-norm fallback that sets
//! [`MlmModel::rank_deficient`] instead of failing.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector, RowDVector};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, ReferenceSet, Scaler};
use crate::distance::{self, DistancePair};
use crate::error::{Error, Result};
use crate::linalg;
use crate::refselect::{self, SelectionConfig};

/// Optional provenance recorded alongside a fitted model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub method: Option<String>,
    pub seed: Option<u64>,
    pub n_train: usize,
    #[serde(default)]
    pub feature_names: Vec<String>,
    #[serde(default)]
    pub target_names: Vec<String>,
}

/// A fitted distance-regression model: the `k x k` coefficient matrix `B`,
/// the reference rows it was estimated against, and the feature/target
/// scalers in effect at fit time.
#[derive(Debug, Clone, PartialEq)]
pub struct MlmModel {
    b: DMatrix<f64>,
    refs: ReferenceSet,
    input_scaler: Scaler,
    output_scaler: Scaler,
    fit_residual_norm: f64,
    rank_deficient: bool,
    metadata: ModelMetadata,
}

impl MlmModel {
    /// Fits `B` on a dataset that is already in model units (identity
    /// scalers). When every training row is a reference and the inputs are
    /// pairwise distinct, the square distance matrix is invertible and the
    /// residual is zero up to rounding.
    pub fn fit(data: &Dataset, refs: ReferenceSet) -> Result<Self> {
        Self::fit_ridged(data, refs, 0.0)
    }

    /// [`MlmModel::fit`] with an optional ridge weight. The default model
    /// uses plain least squares; the knob exists for callers that want to
    /// trade fit residual for smaller coefficients.
    pub fn fit_ridged(data: &Dataset, refs: ReferenceSet, ridge: f64) -> Result<Self> {
        let p = data.p();
        let l = data.l();
        Self::fit_inner(
            data,
            refs,
            ridge,
            Scaler::identity(p),
            Scaler::identity(l),
            ModelMetadata {
                n_train: data.n(),
                ..ModelMetadata::default()
            },
        )
    }

    fn fit_inner(
        data: &Dataset,
        refs: ReferenceSet,
        ridge: f64,
        input_scaler: Scaler,
        output_scaler: Scaler,
        metadata: ModelMetadata,
    ) -> Result<Self> {
        if refs.k() > data.n() {
            return Err(Error::InvalidArgument(format!(
                "{} references exceed {} training rows",
                refs.k(),
                data.n()
            )));
        }
        if refs.inputs().ncols() != data.p() || refs.outputs().ncols() != data.l() {
            return Err(Error::DimensionMismatch(
                "reference rows do not match the dataset shape".into(),
            ));
        }
        let DistancePair { dx, dy } = DistancePair::compute(data, &refs)?;
        let solved = if ridge == 0.0 {
            linalg::solve_least_squares(&dx, &dy)?
        } else {
            linalg::solve_ridge(&dx, &dy, ridge)?
        };
        let residual = (&dx * &solved.solution - &dy).norm();
        if solved.solution.iter().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateSystem(
                "fit produced non-finite coefficients".into(),
            ));
        }
        Ok(Self {
            b: solved.solution,
            refs,
            input_scaler,
            output_scaler,
            fit_residual_norm: residual,
            rank_deficient: solved.rank_deficient,
            metadata,
        })
    }

    /// Predicted output-space distances `δ = [‖x - r_k‖] B` for a query in
    /// model units. Entries may come out negative: the linear map does not
    /// enforce nonnegativity, and downstream consumers square them anyway.
    pub fn predict_distances(&self, x: &[f64]) -> Result<DVector<f64>> {
        let d = distance::distances_to_rows(x, self.refs.inputs())?;
        let row = RowDVector::from_vec(d);
        Ok((row * &self.b).transpose())
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn refs(&self) -> &ReferenceSet {
        &self.refs
    }

    pub fn k(&self) -> usize {
        self.refs.k()
    }

    pub fn p(&self) -> usize {
        self.refs.inputs().ncols()
    }

    pub fn l(&self) -> usize {
        self.refs.outputs().ncols()
    }

    /// Frobenius norm of `D_x B - D_y` at fit time.
    pub fn fit_residual_norm(&self) -> f64 {
        self.fit_residual_norm
    }

    /// True when the fit went through the minimum-norm fallback, e.g.
    /// because duplicate training rows made the distance matrix singular.
    pub fn rank_deficient(&self) -> bool {
        self.rank_deficient
    }

    pub fn input_scaler(&self) -> &Scaler {
        &self.input_scaler
    }

    pub fn output_scaler(&self) -> &Scaler {
        &self.output_scaler
    }

    pub fn metadata(&self) -> &ModelMetadata {
        &self.metadata
    }

    pub fn set_metadata(&mut self, metadata: ModelMetadata) {
        self.metadata = metadata;
    }
}

/// Configuration for the scale-select-fit pipeline.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub method: refselect::SelectionMethod,
    pub k: usize,
    pub seed: u64,
    pub ridge: f64,
}

/// Scales a raw dataset to `[0, 1]` per feature and target, selects `k`
/// references in the scaled input space, and fits. The returned model
/// carries the scalers, so raw-unit prediction round-trips automatically.
pub fn train_scaled(data: &Dataset, cfg: &TrainConfig) -> Result<MlmModel> {
    let input_scaler = Scaler::fit(data.inputs())?;
    let output_scaler = Scaler::fit(data.outputs())?;
    let scaled = Dataset::new(
        input_scaler.apply(data.inputs())?,
        output_scaler.apply(data.outputs())?,
    )?;
    let indices = refselect::select(
        scaled.inputs(),
        &SelectionConfig {
            method: cfg.method,
            k: cfg.k,
            seed: cfg.seed,
        },
    )?;
    let refs = ReferenceSet::from_indices(&scaled, indices)?;
    let metadata = ModelMetadata {
        method: Some(cfg.method.to_string()),
        seed: Some(cfg.seed),
        n_train: data.n(),
        ..ModelMetadata::default()
    };
    MlmModel::fit_inner(
        &scaled,
        refs,
        cfg.ridge,
        input_scaler,
        output_scaler,
        metadata,
    )
}

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    format: String,
    version: u32,
    k: usize,
    p: usize,
    l: usize,
    b_row_major: Vec<f64>,
    reference_indices: Vec<usize>,
    reference_inputs_row_major: Vec<f64>,
    reference_outputs_row_major: Vec<f64>,
    input_scaler: Scaler,
    output_scaler: Scaler,
    fit_residual_norm: f64,
    rank_deficient: bool,
    metadata: ModelMetadata,
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

fn from_row_major(rows: usize, cols: usize, data: &[f64], what: &str) -> Result<DMatrix<f64>> {
    if data.len() != rows * cols {
        return Err(Error::Parse(format!(
            "{what}: expected {} entries for a {rows}x{cols} matrix, got {}",
            rows * cols,
            data.len()
        )));
    }
    Ok(DMatrix::from_row_slice(rows, cols, data))
}

impl MlmModel {
    /// Serializes the model as a self-describing JSON document. Values
    /// round-trip exactly: the JSON writer emits the shortest decimal that
    /// parses back to the same `f64`.
    pub fn to_json(&self) -> Result<String> {
        let doc = ModelDocument {
            format: "mlm-model".into(),
            version: 1,
            k: self.k(),
            p: self.p(),
            l: self.l(),
            b_row_major: row_major(&self.b),
            reference_indices: self.refs.indices().to_vec(),
            reference_inputs_row_major: row_major(self.refs.inputs()),
            reference_outputs_row_major: row_major(self.refs.outputs()),
            input_scaler: self.input_scaler.clone(),
            output_scaler: self.output_scaler.clone(),
            fit_residual_norm: self.fit_residual_norm,
            rank_deficient: self.rank_deficient,
            metadata: self.metadata.clone(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_str(text)?;
        if doc.format != "mlm-model" {
            return Err(Error::Parse(format!(
                "unexpected document format '{}'",
                doc.format
            )));
        }
        if doc.version != 1 {
            return Err(Error::Parse(format!(
                "unsupported model version {}",
                doc.version
            )));
        }
        let b = from_row_major(doc.k, doc.k, &doc.b_row_major, "b")?;
        let r = from_row_major(
            doc.k,
            doc.p,
            &doc.reference_inputs_row_major,
            "reference inputs",
        )?;
        let t = from_row_major(
            doc.k,
            doc.l,
            &doc.reference_outputs_row_major,
            "reference outputs",
        )?;
        if doc.reference_indices.len() != doc.k {
            return Err(Error::Parse(
                "reference index count does not match k".into(),
            ));
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("model coefficients".into()));
        }
        if doc.input_scaler.width() != doc.p || doc.output_scaler.width() != doc.l {
            return Err(Error::Parse(
                "scaler widths do not match model shape".into(),
            ));
        }
        let refs = ReferenceSet::from_rows(doc.reference_indices, r, t)?;
        Ok(Self {
            b,
            refs,
            input_scaler: doc.input_scaler,
            output_scaler: doc.output_scaler,
            fit_residual_norm: doc.fit_residual_norm,
            rank_deficient: doc.rank_deficient,
            metadata: doc.metadata,
        })
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy_model() -> MlmModel {
        let data = Dataset::from_rows(&[vec![0.0], vec![1.0]], &[vec![0.0], vec![2.0]]).unwrap();
        let refs = ReferenceSet::full(&data);
        MlmModel::fit(&data, refs).unwrap()
    }

    #[test]
    fn hand_worked_two_point_fit() {
        // D_x = [[0,1],[1,0]] is its own inverse, so B = D_x * D_y = 2I.
        let model = toy_model();
        let b = model.b();
        assert!((b[(0, 0)] - 2.0).abs() < 1e-14);
        assert!((b[(1, 1)] - 2.0).abs() < 1e-14);
        assert!(b[(0, 1)].abs() < 1e-14);
        assert!(b[(1, 0)].abs() < 1e-14);
        assert!(!model.rank_deficient());
    }

    #[test]
    fn predicted_distances_at_training_points() {
        let model = toy_model();
        let delta = model.predict_distances(&[0.0]).unwrap();
        assert!((delta[0] - 0.0).abs() < 1e-14);
        assert!((delta[1] - 2.0).abs() < 1e-14);
        let delta = model.predict_distances(&[1.0]).unwrap();
        assert!((delta[0] - 2.0).abs() < 1e-14);
        assert!((delta[1] - 0.0).abs() < 1e-14);
    }

    fn random_dataset(rng: &mut ChaCha8Rng, n: usize, p: usize, l: usize) -> Dataset {
        let inputs = DMatrix::from_fn(n, p, |_, _| rng.random_range(-1.0..1.0));
        let outputs = DMatrix::from_fn(n, l, |_, _| rng.random_range(-1.0..1.0));
        Dataset::new(inputs, outputs).unwrap()
    }

    #[test]
    fn full_reference_fit_interpolates() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let n = rng.random_range(5..40);
            let p = rng.random_range(1..6);
            let l = rng.random_range(1..4);
            let data = random_dataset(&mut rng, n, p, l);
            let model = MlmModel::fit(&data, ReferenceSet::full(&data)).unwrap();
            let dy_norm = DistancePair::compute(&data, model.refs())
                .unwrap()
                .dy
                .norm();
            assert!(
                model.fit_residual_norm() <= 1e-8 * dy_norm.max(1e-30),
                "residual {} vs dy norm {}",
                model.fit_residual_norm(),
                dy_norm
            );
        }
    }

    #[test]
    fn identity_task_gives_identity_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let inputs = DMatrix::from_fn(8, 2, |_, _| rng.random_range(-1.0..1.0));
        let data = Dataset::new(inputs.clone(), inputs).unwrap();
        let model = MlmModel::fit(&data, ReferenceSet::full(&data)).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((model.b()[(i, j)] - want).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn fit_is_bitwise_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let data = random_dataset(&mut rng, 20, 3, 2);
        let refs = ReferenceSet::from_indices(&data, vec![1, 4, 7, 9, 15]).unwrap();
        let a = MlmModel::fit(&data, refs.clone()).unwrap();
        let b = MlmModel::fit(&data, refs).unwrap();
        assert_eq!(a.b(), b.b());
        assert_eq!(
            a.fit_residual_norm().to_bits(),
            b.fit_residual_norm().to_bits()
        );
    }

    #[test]
    fn random_perturbations_never_beat_the_least_squares_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let data = random_dataset(&mut rng, 25, 2, 2);
        let refs = ReferenceSet::from_indices(&data, (0..10).collect()).unwrap();
        let model = MlmModel::fit(&data, refs).unwrap();
        let pair = DistancePair::compute(&data, model.refs()).unwrap();
        let base = (&pair.dx * model.b() - &pair.dy).norm();
        for _ in 0..20 {
            let db = DMatrix::from_fn(10, 10, |_, _| rng.random_range(-1e-4..1e-4));
            let perturbed = (&pair.dx * (model.b() + &db) - &pair.dy).norm();
            assert!(perturbed >= base - 1e-12);
        }
    }

    #[test]
    fn duplicate_training_rows_flag_the_fallback() {
        let data = Dataset::from_rows(
            &[vec![0.0], vec![0.0], vec![1.0]],
            &[vec![0.0], vec![0.0], vec![2.0]],
        )
        .unwrap();
        let model = MlmModel::fit(&data, ReferenceSet::full(&data)).unwrap();
        assert!(model.rank_deficient());
        assert!(model.b().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn json_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let data = random_dataset(&mut rng, 12, 3, 2);
        let refs = ReferenceSet::from_indices(&data, vec![0, 3, 5, 9]).unwrap();
        let model = MlmModel::fit(&data, refs).unwrap();
        let text = model.to_json().unwrap();
        let back = MlmModel::from_json(&text).unwrap();
        for (a, b) in model.b().iter().zip(back.b().iter()) {
            assert!((a - b).abs() <= 1e-15 * a.abs().max(1.0));
        }
        assert_eq!(model.refs().indices(), back.refs().indices());
        assert_eq!(model.refs().inputs(), back.refs().inputs());
        assert_eq!(model.input_scaler(), back.input_scaler());
        assert_eq!(model.rank_deficient(), back.rank_deficient());
    }
}
