//! Reference point selection: a uniform random baseline plus four
//! clustering-based strategies that spread the references across the
//! input space.
//!
//! Selection happens in the input space only; callers take the output rows
//! at the same indices. Tie-breaking everywhere is "lowest index", which
//! makes the two deterministic methods (UPGMA, maximin) call-stable and
//! keeps the nondeterministic ones reproducible under a seed.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::distance::euclidean;
use crate::error::{Error, Result};

/// Lloyd refinement stops when the assignment is stable, the SSE improves
/// by less than this, or [`LLOYD_MAX_ITER`] rounds have run.
pub const LLOYD_TOL: f64 = 1e-10;
pub const LLOYD_MAX_ITER: usize = 300;

/// Default row cap for the dense UPGMA dissimilarity store (quadratic
/// memory). Override through [`upgma_linkage_with_cap`].
pub const UPGMA_DEFAULT_CAP: usize = 4096;

/// The five selection strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SelectionMethod {
    /// Uniform sample of `k` distinct rows.
    #[serde(rename = "random")]
    Random,
    /// K-means++ initialization; the sampled rows are the references.
    #[serde(rename = "rs_kmeanspp")]
    KMeansPP,
    /// K-means++ initialization, Lloyd refinement, then the closest row to
    /// each final prototype.
    #[serde(rename = "rs_kmedoidspp")]
    KMedoidsPP,
    /// Average-linkage agglomeration to `k` clusters, then the closest row
    /// to each cluster mean.
    #[serde(rename = "rs_upgma")]
    Upgma,
    /// Deterministic farthest-point traversal seeded at the row closest to
    /// the data mean.
    #[serde(rename = "rs_maximin")]
    Maximin,
}

impl SelectionMethod {
    pub const ALL: [SelectionMethod; 5] = [
        SelectionMethod::Random,
        SelectionMethod::KMeansPP,
        SelectionMethod::KMedoidsPP,
        SelectionMethod::Upgma,
        SelectionMethod::Maximin,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SelectionMethod::Random => "random",
            SelectionMethod::KMeansPP => "rs_kmeanspp",
            SelectionMethod::KMedoidsPP => "rs_kmedoidspp",
            SelectionMethod::Upgma => "rs_upgma",
            SelectionMethod::Maximin => "rs_maximin",
        }
    }

    /// True for the methods whose output does not depend on the seed.
    pub fn deterministic(&self) -> bool {
        matches!(self, SelectionMethod::Upgma | SelectionMethod::Maximin)
    }
}

impl fmt::Display for SelectionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SelectionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(SelectionMethod::Random),
            "rs_kmeanspp" => Ok(SelectionMethod::KMeansPP),
            "rs_kmedoidspp" => Ok(SelectionMethod::KMedoidsPP),
            "rs_upgma" => Ok(SelectionMethod::Upgma),
            "rs_maximin" => Ok(SelectionMethod::Maximin),
            other => Err(Error::InvalidArgument(format!(
                "unknown selection method '{other}' (expected random, rs_kmeanspp, \
                 rs_kmedoidspp, rs_upgma, or rs_maximin)"
            ))),
        }
    }
}

/// Which method to run, how many references to pick, and the seed consumed
/// by the nondeterministic methods.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionConfig {
    pub method: SelectionMethod,
    pub k: usize,
    pub seed: u64,
}

fn matrix_row(points: &DMatrix<f64>, i: usize, buf: &mut Vec<f64>) {
    buf.clear();
    buf.extend(points.row(i).iter().copied());
}

fn validate_points(points: &DMatrix<f64>, k: usize) -> Result<()> {
    let n = points.nrows();
    if n == 0 || points.ncols() == 0 {
        return Err(Error::InvalidArgument(
            "selection needs a non-empty point matrix".into(),
        ));
    }
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!(
            "k = {k} must be in [1, {n}]"
        )));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput("selection points".into()));
    }
    Ok(())
}

/// Selects `k` distinct training-row indices in the input space.
///
/// With `k` equal to the row count every row is a reference, whatever the
/// method.
pub fn select(points: &DMatrix<f64>, cfg: &SelectionConfig) -> Result<Vec<usize>> {
    validate_points(points, cfg.k)?;
    if cfg.k == points.nrows() {
        return Ok((0..points.nrows()).collect());
    }
    match cfg.method {
        SelectionMethod::Random => Ok(random_indices(points.nrows(), cfg.k, cfg.seed)),
        SelectionMethod::KMeansPP => kmeanspp_init(points, cfg.k, cfg.seed),
        SelectionMethod::KMedoidsPP => select_rs_kmedoidspp(points, cfg.k, cfg.seed),
        SelectionMethod::Upgma => select_rs_upgma(points, cfg.k),
        SelectionMethod::Maximin => Ok(select_rs_maximin(points, cfg.k)),
    }
}

/// `k` distinct indices drawn uniformly via a partial Fisher-Yates pass.
pub fn random_indices(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..k.min(n) {
        let j = rng.random_range(i..n);
        idx.swap(i, j);
    }
    idx.truncate(k);
    idx
}

/// K-means++ seeding: first index uniform, every later index sampled with
/// probability proportional to the squared distance to the nearest already
/// chosen row. Rows identical to a chosen row carry zero weight; if every
/// remaining row does, the lowest unchosen index is taken.
pub fn kmeanspp_init(points: &DMatrix<f64>, k: usize, seed: u64) -> Result<Vec<usize>> {
    validate_points(points, k)?;
    let n = points.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = Vec::with_capacity(k);
    let mut is_chosen = vec![false; n];

    let first = rng.random_range(0..n);
    chosen.push(first);
    is_chosen[first] = true;

    let mut ref_row = Vec::with_capacity(points.ncols());
    let mut row = Vec::with_capacity(points.ncols());
    matrix_row(points, first, &mut ref_row);
    let mut min_d2: Vec<f64> = (0..n)
        .map(|i| {
            matrix_row(points, i, &mut row);
            let d = euclidean(&row, &ref_row);
            d * d
        })
        .collect();

    while chosen.len() < k {
        let total: f64 = min_d2.iter().sum();
        let next = if total > 0.0 {
            let u = rng.random_range(0.0..total);
            let mut cum = 0.0;
            let mut picked = None;
            for (i, &w) in min_d2.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                cum += w;
                if u < cum {
                    picked = Some(i);
                    break;
                }
            }
            // Rounding can leave u just past the final cumulative sum.
            picked.unwrap_or_else(|| {
                min_d2
                    .iter()
                    .enumerate()
                    .rev()
                    .find(|(_, &w)| w > 0.0)
                    .map(|(i, _)| i)
                    .expect("total > 0 implies a positive weight")
            })
        } else {
            // Every unchosen row duplicates a chosen one.
            (0..n)
                .find(|&i| !is_chosen[i])
                .expect("k <= n leaves an unchosen row")
        };
        chosen.push(next);
        is_chosen[next] = true;
        matrix_row(points, next, &mut ref_row);
        for (i, w) in min_d2.iter_mut().enumerate() {
            matrix_row(points, i, &mut row);
            let d = euclidean(&row, &ref_row);
            *w = w.min(d * d);
        }
    }
    Ok(chosen)
}

/// One Lloyd run: final centroids, final assignment, and the SSE measured
/// after every assignment phase.
#[derive(Debug, Clone)]
pub struct LloydOutcome {
    pub centroids: DMatrix<f64>,
    pub assignment: Vec<usize>,
    pub sse_per_iteration: Vec<f64>,
}

/// Alternates nearest-centroid assignment and mean updates until the
/// assignment is stable, the SSE improvement drops below `tol`, or
/// `max_iter` rounds have run.
///
/// A centroid that ends an assignment phase empty is re-seeded to the row
/// farthest from its own assigned centroid (lowest index on ties, and only
/// rows whose cluster keeps at least one other member are eligible).
pub fn lloyd(
    points: &DMatrix<f64>,
    initial_centroids: &DMatrix<f64>,
    max_iter: usize,
    tol: f64,
) -> Result<LloydOutcome> {
    let n = points.nrows();
    let p = points.ncols();
    let k = initial_centroids.nrows();
    if k == 0 {
        return Err(Error::InvalidArgument(
            "lloyd needs at least one centroid".into(),
        ));
    }
    if initial_centroids.ncols() != p {
        return Err(Error::DimensionMismatch(format!(
            "points have {p} columns, centroids have {}",
            initial_centroids.ncols()
        )));
    }
    if points.iter().any(|v| !v.is_finite()) || initial_centroids.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput("lloyd points or centroids".into()));
    }

    let mut centroids = initial_centroids.clone_owned();
    let mut assignment: Vec<usize> = vec![usize::MAX; n];
    let mut sse_trace = Vec::new();
    let mut prev_sse = f64::INFINITY;
    let mut point = Vec::with_capacity(p);
    let mut cent = Vec::with_capacity(p);

    for _ in 0..max_iter.max(1) {
        // Assignment phase.
        let mut new_assignment = vec![0usize; n];
        let mut point_cost = vec![0.0f64; n];
        let mut sizes = vec![0usize; k];
        let mut sse = 0.0;
        for i in 0..n {
            matrix_row(points, i, &mut point);
            let mut best = (0usize, f64::INFINITY);
            for c in 0..k {
                matrix_row(&centroids, c, &mut cent);
                let d = euclidean(&point, &cent);
                let d2 = d * d;
                if d2 < best.1 {
                    best = (c, d2);
                }
            }
            new_assignment[i] = best.0;
            point_cost[i] = best.1;
            sizes[best.0] += 1;
            sse += best.1;
        }

        // Re-seed empty centroids.
        for c in 0..k {
            if sizes[c] > 0 {
                continue;
            }
            let mut farthest: Option<(usize, f64)> = None;
            for i in 0..n {
                if sizes[new_assignment[i]] < 2 {
                    continue;
                }
                let better = match farthest {
                    None => true,
                    Some((_, cost)) => point_cost[i] > cost,
                };
                if better {
                    farthest = Some((i, point_cost[i]));
                }
            }
            if let Some((i, cost)) = farthest {
                sizes[new_assignment[i]] -= 1;
                sizes[c] = 1;
                sse -= cost;
                point_cost[i] = 0.0;
                new_assignment[i] = c;
                matrix_row(points, i, &mut point);
                for j in 0..p {
                    centroids[(c, j)] = point[j];
                }
            }
        }

        sse_trace.push(sse);
        let stable = new_assignment == assignment;
        assignment = new_assignment;
        if stable || prev_sse - sse < tol {
            break;
        }
        prev_sse = sse;

        // Update phase: means of the assigned rows.
        let mut sums = DMatrix::<f64>::zeros(k, p);
        let mut counts = vec![0usize; k];
        for i in 0..n {
            let c = assignment[i];
            counts[c] += 1;
            for j in 0..p {
                sums[(c, j)] += points[(i, j)];
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for j in 0..p {
                    centroids[(c, j)] = sums[(c, j)] / counts[c] as f64;
                }
            }
        }
    }

    Ok(LloydOutcome {
        centroids,
        assignment,
        sse_per_iteration: sse_trace,
    })
}

/// For each row of `prototypes` (in order), the index of the nearest row
/// of `points` not yet claimed by an earlier prototype; lowest index wins
/// ties.
fn nearest_unclaimed(points: &DMatrix<f64>, prototypes: &DMatrix<f64>) -> Vec<usize> {
    let n = points.nrows();
    let mut claimed = vec![false; n];
    let mut out = Vec::with_capacity(prototypes.nrows());
    let mut proto = Vec::with_capacity(points.ncols());
    let mut row = Vec::with_capacity(points.ncols());
    for c in 0..prototypes.nrows() {
        matrix_row(prototypes, c, &mut proto);
        let mut best: Option<(usize, f64)> = None;
        for i in (0..n).filter(|&i| !claimed[i]) {
            matrix_row(points, i, &mut row);
            let d = euclidean(&row, &proto);
            let better = match best {
                None => true,
                Some((_, bd)) => d < bd,
            };
            if better {
                best = Some((i, d));
            }
        }
        let (i, _) = best.expect("k <= n leaves an unclaimed row per prototype");
        claimed[i] = true;
        out.push(i);
    }
    out
}

/// K-means++ seeding, Lloyd refinement to convergence, then the nearest
/// data row to each final prototype (the medoid). Collisions advance to
/// the next-nearest unclaimed row so the result stays distinct.
pub fn select_rs_kmedoidspp(points: &DMatrix<f64>, k: usize, seed: u64) -> Result<Vec<usize>> {
    validate_points(points, k)?;
    let init = kmeanspp_init(points, k, seed)?;
    let init_centroids = points.select_rows(init.iter());
    let outcome = lloyd(points, &init_centroids, LLOYD_MAX_ITER, LLOYD_TOL)?;
    Ok(nearest_unclaimed(points, &outcome.centroids))
}

/// The merge sequence of average-linkage agglomeration, reusable for cuts
/// at any cluster count.
///
/// Cluster slots are the smallest member index; each recorded merge joins
/// the slot pair with the globally smallest average inter-cluster distance
/// (lexicographically smallest pair on ties).
#[derive(Debug, Clone)]
pub struct UpgmaLinkage {
    n: usize,
    merges: Vec<(usize, usize)>,
}

/// Average-linkage merge sequence with the default size cap.
pub fn upgma_linkage(points: &DMatrix<f64>) -> Result<UpgmaLinkage> {
    upgma_linkage_with_cap(points, UPGMA_DEFAULT_CAP)
}

/// Average-linkage merge sequence over a dense pair store (quadratic
/// memory, hence the cap).
pub fn upgma_linkage_with_cap(points: &DMatrix<f64>, cap: usize) -> Result<UpgmaLinkage> {
    let n = points.nrows();
    validate_points(points, 1)?;
    if n > cap {
        return Err(Error::SizeLimitExceeded { n, cap });
    }

    // sums[i][j] = total point-pair distance between clusters at slots i, j.
    // Keeping sums (not averages) makes the merge update a pure addition.
    let mut sums = vec![0.0f64; n * n];
    let mut row_i = Vec::with_capacity(points.ncols());
    let mut row_j = Vec::with_capacity(points.ncols());
    for i in 0..n {
        matrix_row(points, i, &mut row_i);
        for j in (i + 1)..n {
            matrix_row(points, j, &mut row_j);
            let d = euclidean(&row_i, &row_j);
            sums[i * n + j] = d;
            sums[j * n + i] = d;
        }
    }
    let mut active: Vec<usize> = (0..n).collect();
    let mut size = vec![1usize; n];
    let mut merges = Vec::with_capacity(n.saturating_sub(1));

    while active.len() > 1 {
        let mut best: Option<(f64, usize, usize)> = None;
        for (ai, &i) in active.iter().enumerate() {
            for &j in &active[(ai + 1)..] {
                let avg = sums[i * n + j] / (size[i] * size[j]) as f64;
                let better = match best {
                    None => true,
                    Some((b, _, _)) => avg < b,
                };
                if better {
                    best = Some((avg, i, j));
                }
            }
        }
        let (_, i, j) = best.expect("at least one active pair");
        // Merge j into i (i < j by construction of the scan order).
        for &c in &active {
            if c == i || c == j {
                continue;
            }
            let add = sums[j * n + c];
            sums[i * n + c] += add;
            sums[c * n + i] += add;
        }
        size[i] += size[j];
        active.retain(|&c| c != j);
        merges.push((i, j));
    }
    Ok(UpgmaLinkage { n, merges })
}

impl UpgmaLinkage {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Merge steps in order; each pair is (surviving slot, absorbed slot).
    pub fn merges(&self) -> &[(usize, usize)] {
        &self.merges
    }

    /// Cluster assignment after merging down to exactly `k` clusters.
    /// Labels are `0..k` in order of each cluster's smallest member.
    pub fn cut(&self, k: usize) -> Result<Vec<usize>> {
        if k == 0 || k > self.n {
            return Err(Error::InvalidArgument(format!(
                "cluster count {k} must be in [1, {}]",
                self.n
            )));
        }
        let mut parent: Vec<usize> = (0..self.n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for &(i, j) in self.merges.iter().take(self.n - k) {
            let ri = find(&mut parent, i);
            let rj = find(&mut parent, j);
            // The surviving slot is the smaller index, so it stays the root.
            parent[rj.max(ri)] = rj.min(ri);
        }
        let mut label_of = vec![usize::MAX; self.n];
        let mut next = 0usize;
        let mut out = vec![0usize; self.n];
        for (x, slot) in out.iter_mut().enumerate() {
            let root = find(&mut parent, x);
            if label_of[root] == usize::MAX {
                label_of[root] = next;
                next += 1;
            }
            *slot = label_of[root];
        }
        debug_assert_eq!(next, k);
        Ok(out)
    }
}

/// Agglomerative average-linkage clustering into `k` clusters.
pub fn upgma(points: &DMatrix<f64>, k: usize) -> Result<Vec<usize>> {
    validate_points(points, k)?;
    upgma_linkage(points)?.cut(k)
}

/// Per-cluster mean prototypes for a given assignment.
fn cluster_means(points: &DMatrix<f64>, assignment: &[usize], k: usize) -> DMatrix<f64> {
    let p = points.ncols();
    let mut sums = DMatrix::<f64>::zeros(k, p);
    let mut counts = vec![0usize; k];
    for (i, &c) in assignment.iter().enumerate() {
        counts[c] += 1;
        for j in 0..p {
            sums[(c, j)] += points[(i, j)];
        }
    }
    for c in 0..k {
        if counts[c] > 0 {
            for j in 0..p {
                sums[(c, j)] /= counts[c] as f64;
            }
        }
    }
    sums
}

/// The row nearest the mean of each cluster, searched within that cluster;
/// lowest index wins ties.
fn nearest_in_cluster(points: &DMatrix<f64>, assignment: &[usize], k: usize) -> Vec<usize> {
    let means = cluster_means(points, assignment, k);
    let mut best: Vec<Option<(usize, f64)>> = vec![None; k];
    let mut row = Vec::with_capacity(points.ncols());
    let mut mean = Vec::with_capacity(points.ncols());
    for (i, &c) in assignment.iter().enumerate() {
        matrix_row(points, i, &mut row);
        matrix_row(&means, c, &mut mean);
        let d = euclidean(&row, &mean);
        let better = match best[c] {
            None => true,
            Some((_, bd)) => d < bd,
        };
        if better {
            best[c] = Some((i, d));
        }
    }
    best.into_iter()
        .map(|b| b.expect("every cluster has a member").0)
        .collect()
}

/// UPGMA clustering, then the row closest to each cluster mean.
pub fn select_rs_upgma(points: &DMatrix<f64>, k: usize) -> Result<Vec<usize>> {
    let assignment = upgma(points, k)?;
    Ok(nearest_in_cluster(points, &assignment, k))
}

/// [`select_rs_upgma`] against a precomputed merge sequence, for callers
/// that cut the same data at several cluster counts.
pub fn select_rs_upgma_from_linkage(
    points: &DMatrix<f64>,
    linkage: &UpgmaLinkage,
    k: usize,
) -> Result<Vec<usize>> {
    if linkage.n() != points.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "linkage covers {} rows, points have {}",
            linkage.n(),
            points.nrows()
        )));
    }
    let assignment = linkage.cut(k)?;
    Ok(nearest_in_cluster(points, &assignment, k))
}

/// Deterministic farthest-point selection: start at the row closest to the
/// data mean, then repeatedly take the row maximizing the minimum distance
/// to everything chosen so far.
pub fn select_rs_maximin(points: &DMatrix<f64>, k: usize) -> Vec<usize> {
    let n = points.nrows();
    let p = points.ncols();
    debug_assert!(k >= 1 && k <= n);

    let mut mean = vec![0.0f64; p];
    for i in 0..n {
        for j in 0..p {
            mean[j] += points[(i, j)];
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }

    let mut row = Vec::with_capacity(p);
    let mut first = (0usize, f64::INFINITY);
    for i in 0..n {
        matrix_row(points, i, &mut row);
        let d = euclidean(&row, &mean);
        if d < first.1 {
            first = (i, d);
        }
    }

    let mut chosen = Vec::with_capacity(k);
    let mut is_chosen = vec![false; n];
    chosen.push(first.0);
    is_chosen[first.0] = true;

    let mut latest = Vec::with_capacity(p);
    matrix_row(points, first.0, &mut latest);
    let mut min_dist: Vec<f64> = (0..n)
        .map(|i| {
            matrix_row(points, i, &mut row);
            euclidean(&row, &latest)
        })
        .collect();

    while chosen.len() < k {
        let mut next = (usize::MAX, f64::NEG_INFINITY);
        for i in 0..n {
            if !is_chosen[i] && min_dist[i] > next.1 {
                next = (i, min_dist[i]);
            }
        }
        chosen.push(next.0);
        is_chosen[next.0] = true;
        matrix_row(points, next.0, &mut latest);
        for i in 0..n {
            if is_chosen[i] {
                continue;
            }
            matrix_row(points, i, &mut row);
            let d = euclidean(&row, &latest);
            if d < min_dist[i] {
                min_dist[i] = d;
            }
        }
    }
    chosen
}

/// The `m` smallest pairwise Euclidean distances among the selected rows,
/// ascending. Mirrors the separation curves used to compare selection
/// strategies.
pub fn pairwise_separation_profile(
    points: &DMatrix<f64>,
    indices: &[usize],
    m: usize,
) -> Result<Vec<f64>> {
    let k = indices.len();
    for &i in indices {
        if i >= points.nrows() {
            return Err(Error::InvalidArgument(format!(
                "selected index {i} out of range for {} rows",
                points.nrows()
            )));
        }
    }
    let total = k * k.saturating_sub(1) / 2;
    if m > total {
        return Err(Error::InvalidArgument(format!(
            "requested {m} smallest distances but only {total} pairs exist"
        )));
    }
    let mut dists = Vec::with_capacity(total);
    let mut a = Vec::with_capacity(points.ncols());
    let mut b = Vec::with_capacity(points.ncols());
    for (pos, &i) in indices.iter().enumerate() {
        matrix_row(points, i, &mut a);
        for &j in &indices[(pos + 1)..] {
            matrix_row(points, j, &mut b);
            dists.push(euclidean(&a, &b));
        }
    }
    dists.sort_by(|x, y| x.partial_cmp(y).expect("finite distances"));
    dists.truncate(m);
    Ok(dists)
}
