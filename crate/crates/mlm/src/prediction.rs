//! Output recovery by multilateration: solve the localization linear
//! system (LLS) that places the unknown output point at the predicted
//! distances from the reference outputs.
//!
//! One reference output, the benchmark anchor node (BAN), is subtracted
//! out to linearize the squared-distance equations. With anchors
//! `t_1, ..., t_K`, BAN `t*`, and predicted output-space distances `δ`,
//! the system is `A θ = b` with rows `(t_i - t*)'` and
//! `b_i = (δ*² + ‖t* - t_i‖² - δ_i²) / 2`, and the output is `θ + t*`.
//!
//! The right-hand side uses the predicted *output-space* distances `δ_i`
//! throughout. Using input-space distances there instead is a tempting
//! shortcut (all three quantities are available by the time the system is
//! assembled) but is dimensionally inconsistent with the derivation and
//! destroys exact recovery, so this module does not offer it.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::distance::{self, euclidean};
use crate::error::{Error, Result};
use crate::linalg::{self, RepeatedSolver};
use crate::training::MlmModel;

/// How the benchmark anchor node is picked.
///
/// Under exact distances and affinely independent anchors the recovered
/// output does not depend on this choice, so the default favors
/// reproducibility over the literal coin flip of the original algorithm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BanPolicy {
    /// Always use the given reference position (default: 0).
    Fixed(usize),
    /// Uniformly random anchor from a seeded stream.
    Random { seed: u64 },
    /// The anchor whose difference matrix has the smallest `ψ = ‖A†‖‖A‖`;
    /// ties resolve to the lowest index.
    BestConditioned,
}

impl Default for BanPolicy {
    fn default() -> Self {
        BanPolicy::Fixed(0)
    }
}

/// The assembled localization system for one query.
#[derive(Debug, Clone)]
pub struct LlsSystem {
    /// `(K-1) x L` anchor differences `t_i - t*`, rows in ascending anchor
    /// order with the BAN skipped.
    pub a: DMatrix<f64>,
    /// Right-hand side, same row order as `a`.
    pub b: DVector<f64>,
    /// Which reference output served as the BAN.
    pub ban_index: usize,
    /// BAN output point `t*`.
    pub t_star: DVector<f64>,
    /// Predicted distance from the query's output to the BAN.
    pub delta_star: f64,
}

/// A solved localization system.
#[derive(Debug, Clone)]
pub struct LlsSolution {
    /// Recovered output point `θ + t*`.
    pub output: DVector<f64>,
    /// The translation `θ = ỹ - t*` solved for.
    pub theta: DVector<f64>,
    /// True when the system was rank-deficient and the minimum-norm
    /// solution was returned.
    pub degenerate: bool,
}

/// Conditioning diagnostics of an assembled system.
#[derive(Debug, Clone, PartialEq)]
pub struct LlsDiagnostics {
    /// `ψ = ‖A†‖ ‖A‖`, at least 1 for full column rank.
    pub psi: f64,
    /// Relative distance-noise factor, present only when an error estimate
    /// for `b` was supplied.
    pub beta: Option<f64>,
    /// Output-norm ratio bound: `ψ (1 + β)` when `β` is known, else `ψ`.
    pub bound_u: f64,
}

/// Assembles the localization system from the reference outputs, the
/// predicted output-space distances `delta`, and the chosen BAN.
///
/// `input_distances` are the query's input-space distances to the reference
/// inputs. They are accepted (and length-checked) because callers following
/// the two-step prediction have them in hand, but the system itself is
/// built from `delta` alone; see the module docs for why.
pub fn build_lls(
    refs_t: &DMatrix<f64>,
    delta: &[f64],
    input_distances: &[f64],
    ban_index: usize,
) -> Result<LlsSystem> {
    let k = refs_t.nrows();
    if k < 2 {
        return Err(Error::InvalidArgument(
            "localization needs at least 2 reference outputs".into(),
        ));
    }
    if delta.len() != k || input_distances.len() != k {
        return Err(Error::DimensionMismatch(format!(
            "{k} reference outputs vs {} predicted distances and {} input distances",
            delta.len(),
            input_distances.len()
        )));
    }
    if ban_index >= k {
        return Err(Error::InvalidArgument(format!(
            "BAN index {ban_index} out of range for {k} references"
        )));
    }
    if delta.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput("predicted distances".into()));
    }
    let l = refs_t.ncols();
    let t_star: Vec<f64> = refs_t.row(ban_index).iter().copied().collect();
    let delta_star = delta[ban_index];

    let mut a = DMatrix::<f64>::zeros(k - 1, l);
    let mut b = DVector::<f64>::zeros(k - 1);
    let mut row = 0;
    let mut anchor = Vec::with_capacity(l);
    for (i, &delta_i) in delta.iter().enumerate() {
        if i == ban_index {
            continue;
        }
        anchor.clear();
        anchor.extend(refs_t.row(i).iter().copied());
        let dist_sq = {
            let d = euclidean(&t_star, &anchor);
            d * d
        };
        for j in 0..l {
            a[(row, j)] = anchor[j] - t_star[j];
        }
        b[row] = 0.5 * (delta_star * delta_star + dist_sq - delta_i * delta_i);
        row += 1;
    }
    Ok(LlsSystem {
        a,
        b,
        ban_index,
        t_star: DVector::from_vec(t_star),
        delta_star,
    })
}

impl LlsSystem {
    /// Solves `A θ = b` by least squares and translates back by the BAN.
    pub fn solve(&self) -> Result<LlsSolution> {
        let solver = RepeatedSolver::new(&self.a)?;
        let theta = solver.solve(&self.b)?;
        let output = &theta + &self.t_star;
        Ok(LlsSolution {
            output,
            theta,
            degenerate: solver.rank_deficient,
        })
    }
}

/// `ψ`, `β`, and the resulting output-norm bound for a system, optionally
/// given an estimate of the error in `b`.
pub fn lls_diagnostics(
    sys: &LlsSystem,
    delta_b_estimate: Option<&[f64]>,
) -> Result<LlsDiagnostics> {
    let (sv_max, sv_min) = linalg::spectral_extremes(&sys.a)?;
    let psi = sv_max / sv_min;
    let beta = match delta_b_estimate {
        None => None,
        Some(db) => {
            if db.len() != sys.b.len() {
                return Err(Error::DimensionMismatch(format!(
                    "error estimate has {} entries, b has {}",
                    db.len(),
                    sys.b.len()
                )));
            }
            let db_norm = db.iter().map(|v| v * v).sum::<f64>().sqrt();
            if db_norm == 0.0 {
                Some(0.0)
            } else {
                let ratio = sys.b.norm() / db_norm;
                let beta = 1.0 / (ratio - 1.0).abs();
                if !beta.is_finite() {
                    return Err(Error::DegenerateSystem(
                        "error estimate norm equals the measurement norm; bound undefined".into(),
                    ));
                }
                Some(beta)
            }
        }
    };
    let bound_u = psi * (1.0 + beta.unwrap_or(0.0));
    if !psi.is_finite() || !bound_u.is_finite() {
        return Err(Error::DegenerateSystem(
            "non-finite conditioning values".into(),
        ));
    }
    Ok(LlsDiagnostics { psi, beta, bound_u })
}

/// Squared-residual multilateration cost of a candidate output point
/// against anchors `t` and distances `delta`:
/// the sum over anchors of `(‖y - t_k‖² - δ_k²)²`.
///
/// Negative `delta` entries are clamped to zero here. The linear system
/// keeps them as-is because only their squares enter `b`, but this cost
/// treats them as "predicted to coincide", which keeps the oracle
/// meaningful for sign-flipped predictions.
pub fn multilateration_cost(y: &[f64], t: &DMatrix<f64>, delta: &[f64]) -> Result<f64> {
    if y.len() != t.ncols() || delta.len() != t.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "candidate has {} entries, anchors are {}x{}, {} distances",
            y.len(),
            t.nrows(),
            t.ncols(),
            delta.len()
        )));
    }
    let mut anchor = Vec::with_capacity(t.ncols());
    let mut cost = 0.0;
    for (k, &delta_k) in delta.iter().enumerate() {
        anchor.clear();
        anchor.extend(t.row(k).iter().copied());
        let d = euclidean(y, &anchor);
        let target = delta_k.max(0.0);
        let gap = d * d - target * target;
        cost += gap * gap;
    }
    Ok(cost)
}

fn pick_ban(refs_t: &DMatrix<f64>, policy: BanPolicy) -> Result<usize> {
    let k = refs_t.nrows();
    match policy {
        BanPolicy::Fixed(i) => {
            if i >= k {
                return Err(Error::InvalidArgument(format!(
                    "fixed BAN index {i} out of range for {k} references"
                )));
            }
            Ok(i)
        }
        BanPolicy::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Ok(rng.random_range(0..k))
        }
        BanPolicy::BestConditioned => {
            let l = refs_t.ncols();
            let mut best = (0usize, f64::INFINITY);
            let mut anchor = Vec::with_capacity(l);
            let mut star = Vec::with_capacity(l);
            for ban in 0..k {
                star.clear();
                star.extend(refs_t.row(ban).iter().copied());
                let mut a = DMatrix::<f64>::zeros(k - 1, l);
                let mut row = 0;
                for i in 0..k {
                    if i == ban {
                        continue;
                    }
                    anchor.clear();
                    anchor.extend(refs_t.row(i).iter().copied());
                    for j in 0..l {
                        a[(row, j)] = anchor[j] - star[j];
                    }
                    row += 1;
                }
                if let Ok((hi, lo)) = linalg::spectral_extremes(&a) {
                    let psi = hi / lo;
                    if psi < best.1 {
                        best = (ban, psi);
                    }
                }
            }
            if best.1.is_infinite() {
                return Err(Error::DegenerateSystem(
                    "no BAN yields a usable difference matrix".into(),
                ));
            }
            Ok(best.0)
        }
    }
}

/// Full two-step prediction for one query in model units: input distances,
/// predicted output distances through `B`, then the localization solve.
pub fn predict(model: &MlmModel, x: &[f64], policy: BanPolicy) -> Result<LlsSolution> {
    if model.k() < 2 {
        return Err(Error::InvalidArgument(
            "prediction needs a model with at least 2 references".into(),
        ));
    }
    let input_distances = distance::distances_to_rows(x, model.refs().inputs())?;
    let delta = model.predict_distances(x)?;
    let ban = pick_ban(model.refs().outputs(), policy)?;
    let sys = build_lls(
        model.refs().outputs(),
        delta.as_slice(),
        &input_distances,
        ban,
    )?;
    sys.solve()
}

/// Batch prediction outcome.
#[derive(Debug, Clone)]
pub struct BatchPrediction {
    /// One recovered output row per query row, in model units.
    pub outputs: DMatrix<f64>,
    /// True if any row went through the minimum-norm fallback.
    pub any_degenerate: bool,
}

/// Predicts every row of `xs` (model units). For BAN policies that do not
/// vary per row the anchor difference matrix is factored once and reused,
/// which makes the per-row work linear in `K`. Under `Random` the anchors
/// are drawn per row from one seeded stream, so a batch is reproducible
/// but row `i` does not see the same anchor as a standalone call would.
pub fn predict_batch(
    model: &MlmModel,
    xs: &DMatrix<f64>,
    policy: BanPolicy,
) -> Result<BatchPrediction> {
    if model.k() < 2 {
        return Err(Error::InvalidArgument(
            "prediction needs a model with at least 2 references".into(),
        ));
    }
    let refs_t = model.refs().outputs();
    let k = model.k();
    let l = model.l();
    let dx = distance::pairwise_distances(xs, model.refs().inputs())?;
    let deltas = &dx * model.b();

    let mut outputs = DMatrix::<f64>::zeros(xs.nrows(), l);
    let mut any_degenerate = false;

    match policy {
        BanPolicy::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for row in 0..xs.nrows() {
                let ban = rng.random_range(0..k);
                let delta: Vec<f64> = deltas.row(row).iter().copied().collect();
                let d_in: Vec<f64> = dx.row(row).iter().copied().collect();
                let sol = build_lls(refs_t, &delta, &d_in, ban)?.solve()?;
                any_degenerate |= sol.degenerate;
                outputs.row_mut(row).copy_from_slice(sol.output.as_slice());
            }
        }
        _ => {
            let ban = pick_ban(refs_t, policy)?;
            // A depends only on the anchors and the BAN, so factor it once.
            let mut a = DMatrix::<f64>::zeros(k - 1, l);
            let mut dist_sq_to_star = Vec::with_capacity(k - 1);
            let star: Vec<f64> = refs_t.row(ban).iter().copied().collect();
            let mut anchor = Vec::with_capacity(l);
            let mut r = 0;
            for i in 0..k {
                if i == ban {
                    continue;
                }
                anchor.clear();
                anchor.extend(refs_t.row(i).iter().copied());
                for j in 0..l {
                    a[(r, j)] = anchor[j] - star[j];
                }
                let d = euclidean(&star, &anchor);
                dist_sq_to_star.push(d * d);
                r += 1;
            }
            let solver = RepeatedSolver::new(&a)?;
            any_degenerate |= solver.rank_deficient;
            let mut b = DVector::<f64>::zeros(k - 1);
            for row in 0..xs.nrows() {
                let delta_star = deltas[(row, ban)];
                let mut rr = 0;
                for i in 0..k {
                    if i == ban {
                        continue;
                    }
                    let di = deltas[(row, i)];
                    b[rr] = 0.5 * (delta_star * delta_star + dist_sq_to_star[rr] - di * di);
                    rr += 1;
                }
                let theta = solver.solve(&b)?;
                for j in 0..l {
                    outputs[(row, j)] = theta[j] + star[j];
                }
            }
        }
    }
    Ok(BatchPrediction {
        outputs,
        any_degenerate,
    })
}

impl MlmModel {
    /// Prediction in model (scaled) units with the default BAN policy.
    pub fn predict_scaled(&self, x: &[f64]) -> Result<DVector<f64>> {
        Ok(predict(self, x, BanPolicy::default())?.output)
    }

    /// Prediction in original units: applies the stored input scaler,
    /// recovers the output in model units, and inverts the output scaler.
    pub fn predict(&self, x_raw: &[f64]) -> Result<Vec<f64>> {
        let x = self.input_scaler().apply_row(x_raw)?;
        let y = self.predict_scaled(&x)?;
        self.output_scaler().invert_row(y.as_slice())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Dataset, ReferenceSet};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn one_by_one_system_by_hand() {
        let t = DMatrix::from_row_slice(2, 1, &[0.0, 2.0]);
        let sys = build_lls(&t, &[1.0, 1.0], &[0.5, 0.5], 0).unwrap();
        assert_eq!(sys.a, DMatrix::from_row_slice(1, 1, &[2.0]));
        assert!((sys.b[0] - 2.0).abs() < 1e-15);
        let sol = sys.solve().unwrap();
        assert!((sol.theta[0] - 1.0).abs() < 1e-12);
        assert!((sol.output[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_by_two_system_recovers_exactly() {
        let t = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
        let delta = [0.5, 0.65f64.sqrt(), 0.45f64.sqrt()];
        let d_in = [0.0; 3];
        let sol = build_lls(&t, &delta, &d_in, 0).unwrap().solve().unwrap();
        assert!((sol.output[0] - 0.3).abs() < 1e-12);
        assert!((sol.output[1] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn query_at_a_reference_point_gives_zero_theta() {
        // BAN at the true output: delta_star = 0 and consistent distances
        // leave nothing to translate.
        let t = DMatrix::from_row_slice(3, 2, &[0.2, 0.7, 1.0, 0.0, 0.0, 1.0]);
        let star = [0.2, 0.7];
        let delta: Vec<f64> = (0..3)
            .map(|i| {
                let row: Vec<f64> = t.row(i).iter().copied().collect();
                euclidean(&star, &row)
            })
            .collect();
        let sol = build_lls(&t, &delta, &[0.0; 3], 0)
            .unwrap()
            .solve()
            .unwrap();
        assert!(sol.theta.norm() < 1e-12);
        assert!((sol.output[0] - 0.2).abs() < 1e-12);
        assert!((sol.output[1] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn build_lls_rejects_too_few_anchors_and_bad_ban() {
        let t = DMatrix::from_row_slice(1, 1, &[0.0]);
        assert!(build_lls(&t, &[0.0], &[0.0], 0).is_err());
        let t = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        assert!(build_lls(&t, &[0.0, 1.0], &[0.0, 1.0], 2).is_err());
    }

    fn affinely_independent_anchors(rng: &mut ChaCha8Rng, l: usize) -> DMatrix<f64> {
        loop {
            let t = DMatrix::from_fn(l + 1, l, |_, _| rng.random_range(-2.0..2.0));
            let mut a = DMatrix::<f64>::zeros(l, l);
            for i in 0..l {
                for j in 0..l {
                    a[(i, j)] = t[(i + 1, j)] - t[(0, j)];
                }
            }
            if a.determinant().abs() > 1e-3 {
                return t;
            }
        }
    }

    #[test]
    fn exact_distances_recover_random_targets() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for l in 1..=3 {
            for _ in 0..30 {
                let t = affinely_independent_anchors(&mut rng, l);
                let target: Vec<f64> = (0..l).map(|_| rng.random_range(-2.0..2.0)).collect();
                let delta: Vec<f64> = (0..=l)
                    .map(|i| {
                        let row: Vec<f64> = t.row(i).iter().copied().collect();
                        euclidean(&target, &row)
                    })
                    .collect();
                let d_in = vec![0.0; l + 1];
                let sol = build_lls(&t, &delta, &d_in, 0).unwrap().solve().unwrap();
                for (j, &want) in target.iter().enumerate() {
                    assert!((sol.output[j] - want).abs() <= 1e-8);
                }
                assert!(!sol.degenerate);
            }
        }
    }

    #[test]
    fn recovery_is_invariant_to_ban_choice_under_exact_distances() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        for _ in 0..20 {
            let l = rng.random_range(1..4);
            let t = affinely_independent_anchors(&mut rng, l);
            let target: Vec<f64> = (0..l).map(|_| rng.random_range(-2.0..2.0)).collect();
            let delta: Vec<f64> = (0..=l)
                .map(|i| {
                    let row: Vec<f64> = t.row(i).iter().copied().collect();
                    euclidean(&target, &row)
                })
                .collect();
            let d_in = vec![0.0; l + 1];
            let base = build_lls(&t, &delta, &d_in, 0).unwrap().solve().unwrap();
            for ban in 1..=l {
                let other = build_lls(&t, &delta, &d_in, ban).unwrap().solve().unwrap();
                for j in 0..l {
                    assert!((base.output[j] - other.output[j]).abs() <= 1e-8);
                }
            }
        }
    }

    #[test]
    fn translation_shifts_output_but_not_theta() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let l = 2;
        let t = affinely_independent_anchors(&mut rng, l);
        let target = [0.4, -0.9];
        let delta: Vec<f64> = (0..=l)
            .map(|i| {
                let row: Vec<f64> = t.row(i).iter().copied().collect();
                euclidean(&target, &row)
            })
            .collect();
        let shift = [3.0, -1.5];
        let mut t_shifted = t.clone();
        for i in 0..=l {
            for j in 0..l {
                t_shifted[(i, j)] += shift[j];
            }
        }
        let a = build_lls(&t, &delta, &[0.0; 3], 0)
            .unwrap()
            .solve()
            .unwrap();
        let b = build_lls(&t_shifted, &delta, &[0.0; 3], 0)
            .unwrap()
            .solve()
            .unwrap();
        for (j, &offset) in shift.iter().enumerate() {
            assert!((a.theta[j] - b.theta[j]).abs() <= 1e-9);
            assert!((b.output[j] - a.output[j] - offset).abs() <= 1e-9);
        }
    }

    #[test]
    fn chained_prediction_through_a_fitted_model() {
        let data = Dataset::from_rows(&[vec![0.0], vec![1.0]], &[vec![0.0], vec![2.0]]).unwrap();
        let model = MlmModel::fit(&data, ReferenceSet::full(&data)).unwrap();
        let sol = predict(&model, &[0.5], BanPolicy::default()).unwrap();
        assert!((sol.output[0] - 1.0).abs() < 1e-10);
        // Training inputs come back exactly.
        let sol = predict(&model, &[0.0], BanPolicy::default()).unwrap();
        assert!(sol.output[0].abs() < 1e-10);
    }

    #[test]
    fn cost_examples_by_direct_substitution() {
        let t = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
        let delta = [0.5, 0.65f64.sqrt(), 0.45f64.sqrt()];
        assert!(multilateration_cost(&[0.3, 0.4], &t, &delta).unwrap() < 1e-28);

        let t1 = DMatrix::from_row_slice(2, 1, &[0.0, 2.0]);
        let cost = multilateration_cost(&[0.0], &t1, &[1.0, 1.0]).unwrap();
        assert!((cost - 10.0).abs() < 1e-12);

        // At an anchor with a consistent zero distance, that term is zero.
        let cost = multilateration_cost(&[0.0], &t1, &[0.0, 2.0]).unwrap();
        assert!(cost.abs() < 1e-12);
    }

    #[test]
    fn lls_solution_beats_random_perturbations() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        for _ in 0..10 {
            let l = rng.random_range(1..4);
            let t = affinely_independent_anchors(&mut rng, l);
            let target: Vec<f64> = (0..l).map(|_| rng.random_range(-1.0..1.0)).collect();
            let delta: Vec<f64> = (0..=l)
                .map(|i| {
                    let row: Vec<f64> = t.row(i).iter().copied().collect();
                    euclidean(&target, &row)
                })
                .collect();
            let sol = build_lls(&t, &delta, &vec![0.0; l + 1], 0)
                .unwrap()
                .solve()
                .unwrap();
            let base = multilateration_cost(sol.output.as_slice(), &t, &delta).unwrap();
            for _ in 0..100 {
                let perturbed: Vec<f64> = sol
                    .output
                    .iter()
                    .map(|v| v + rng.random_range(-0.01..0.01))
                    .collect();
                let cost = multilateration_cost(&perturbed, &t, &delta).unwrap();
                assert!(base <= cost + 1e-18);
            }
        }
    }

    #[test]
    fn b_vector_identity_matches_the_derivation() {
        // d_i² - d_r² - d_ir² = -2 (w - r)·(z_i - r) for any points.
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        for _ in 0..100 {
            let s = rng.random_range(1..5);
            let w: Vec<f64> = (0..s).map(|_| rng.random_range(-3.0..3.0)).collect();
            let r: Vec<f64> = (0..s).map(|_| rng.random_range(-3.0..3.0)).collect();
            let z: Vec<f64> = (0..s).map(|_| rng.random_range(-3.0..3.0)).collect();
            let d_i = euclidean(&w, &z);
            let d_r = euclidean(&w, &r);
            let d_ir = euclidean(&z, &r);
            let lhs = d_i * d_i - d_r * d_r - d_ir * d_ir;
            let rhs: f64 = -2.0 * (0..s).map(|j| (w[j] - r[j]) * (z[j] - r[j])).sum::<f64>();
            assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0));
        }
    }

    #[test]
    fn diagnostics_psi_examples() {
        // Orthonormal rows: an isometry, psi = 1.
        let t = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
        let sys = build_lls(&t, &[0.5, 0.5, 0.5], &[0.0; 3], 0).unwrap();
        let diag = lls_diagnostics(&sys, None).unwrap();
        assert!((diag.psi - 1.0).abs() < 1e-12);
        assert_eq!(diag.beta, None);
        assert!((diag.bound_u - diag.psi).abs() < 1e-12);

        // Scalar system: pseudoinverse norm cancels the operator norm.
        let t = DMatrix::from_row_slice(2, 1, &[0.0, 2.0]);
        let sys = build_lls(&t, &[1.0, 1.0], &[0.0; 2], 0).unwrap();
        let diag = lls_diagnostics(&sys, None).unwrap();
        assert!((diag.psi - 1.0).abs() < 1e-12);
    }

    #[test]
    fn diagnostics_beta_vanishes_with_the_error_estimate() {
        let t = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
        let sys = build_lls(&t, &[0.5, 0.6, 0.7], &[0.0; 3], 0).unwrap();
        let mut last_bound = f64::INFINITY;
        for scale in [1e-2, 1e-4, 1e-8] {
            let db = vec![scale, scale];
            let diag = lls_diagnostics(&sys, Some(&db)).unwrap();
            let beta = diag.beta.unwrap();
            assert!(beta < last_bound);
            last_bound = beta;
            assert!((diag.bound_u - diag.psi * (1.0 + beta)).abs() < 1e-12);
        }
        let diag = lls_diagnostics(&sys, Some(&[0.0, 0.0])).unwrap();
        assert_eq!(diag.beta, Some(0.0));
        assert!((diag.bound_u - diag.psi).abs() < 1e-15);
    }

    #[test]
    fn diagnostics_reject_zero_matrix() {
        let sys = LlsSystem {
            a: DMatrix::<f64>::zeros(2, 2),
            b: DVector::<f64>::zeros(2),
            ban_index: 0,
            t_star: DVector::<f64>::zeros(2),
            delta_star: 0.0,
        };
        assert!(lls_diagnostics(&sys, None).is_err());
    }

    #[test]
    fn batch_prediction_matches_single_queries() {
        let mut rng = ChaCha8Rng::seed_from_u64(36);
        let inputs = DMatrix::from_fn(15, 2, |_, _| rng.random_range(-1.0..1.0));
        let outputs = DMatrix::from_fn(15, 2, |_, _| rng.random_range(-1.0..1.0));
        let data = Dataset::new(inputs, outputs).unwrap();
        let refs = ReferenceSet::from_indices(&data, (0..8).collect()).unwrap();
        let model = MlmModel::fit(&data, refs).unwrap();
        let queries = DMatrix::from_fn(5, 2, |_, _| rng.random_range(-1.0..1.0));
        let batch = predict_batch(&model, &queries, BanPolicy::default()).unwrap();
        for row in 0..5 {
            let q: Vec<f64> = queries.row(row).iter().copied().collect();
            let single = predict(&model, &q, BanPolicy::default()).unwrap();
            for j in 0..2 {
                assert!((batch.outputs[(row, j)] - single.output[j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn batch_random_policy_is_reproducible() {
        let mut rng = ChaCha8Rng::seed_from_u64(38);
        let inputs = DMatrix::from_fn(10, 2, |_, _| rng.random_range(-1.0..1.0));
        let outputs = DMatrix::from_fn(10, 1, |_, _| rng.random_range(-1.0..1.0));
        let data = Dataset::new(inputs, outputs).unwrap();
        let model = MlmModel::fit(&data, ReferenceSet::full(&data)).unwrap();
        let queries = DMatrix::from_fn(4, 2, |_, _| rng.random_range(-1.0..1.0));
        let a = predict_batch(&model, &queries, BanPolicy::Random { seed: 9 }).unwrap();
        let b = predict_batch(&model, &queries, BanPolicy::Random { seed: 9 }).unwrap();
        assert_eq!(a.outputs, b.outputs);
    }

    #[test]
    fn ban_policies_agree_on_well_posed_models() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let inputs = DMatrix::from_fn(12, 2, |_, _| rng.random_range(-1.0..1.0));
        let outputs = DMatrix::from_fn(12, 2, |_, _| rng.random_range(-1.0..1.0));
        let data = Dataset::new(inputs, outputs).unwrap();
        let model = MlmModel::fit(&data, ReferenceSet::full(&data)).unwrap();
        // Interpolation makes the predicted distances exact at training
        // inputs, so every policy recovers the same point.
        let q: Vec<f64> = data.inputs().row(4).iter().copied().collect();
        let fixed = predict(&model, &q, BanPolicy::Fixed(0)).unwrap();
        let best = predict(&model, &q, BanPolicy::BestConditioned).unwrap();
        let random = predict(&model, &q, BanPolicy::Random { seed: 5 }).unwrap();
        for j in 0..2 {
            assert!((fixed.output[j] - best.output[j]).abs() < 1e-8);
            assert!((fixed.output[j] - random.output[j]).abs() < 1e-8);
        }
        // The random policy is reproducible under its seed.
        let again = predict(&model, &q, BanPolicy::Random { seed: 5 }).unwrap();
        assert_eq!(random.output, again.output);
    }

    #[test]
    fn single_reference_model_cannot_predict() {
        let data = Dataset::from_rows(&[vec![0.0], vec![1.0]], &[vec![0.0], vec![2.0]]).unwrap();
        let refs = ReferenceSet::from_indices(&data, vec![0]).unwrap();
        let model = MlmModel::fit(&data, refs).unwrap();
        assert!(predict(&model, &[0.5], BanPolicy::default()).is_err());
    }
}
