//! Gustafson-Kessel fuzzy clustering.
//!
//! Unlike fuzzy c-means, each cluster carries its own norm-inducing matrix
//! `A_i` derived from the cluster's fuzzy covariance, so clusters adapt to
//! ellipsoidal shapes of differing orientation. The volume of each norm is
//! pinned by `det(A_i) = rho_i`, which removes the scale ambiguity of the
//! distance measure.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Condition-number threshold above which a fuzzy covariance is regularized
/// before inversion.
const CONDITION_LIMIT: f64 = 1e12;
/// Relative strength of the trace-scaled identity added when regularizing.
const CONDITION_RIDGE: f64 = 1e-8;

/// A set of `n_samples` points in `dim` dimensions, one point per row.
///
/// The last column may carry a regressand when the set feeds model
/// identification; clustering itself treats all columns alike.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSet {
    matrix: DMatrix<f64>,
}

impl DataSet {
    /// Builds a data set from row vectors. All rows must share a length and
    /// every entry must be finite.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidInput("data set must contain at least one point".into()));
        }
        let dim = rows[0].len();
        if dim == 0 {
            return Err(Error::InvalidInput("data points must have at least one dimension".into()));
        }
        for (k, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::InvalidInput(format!(
                    "row {k} has {} entries, expected {dim}",
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!("row {k} contains a non-finite entry")));
            }
        }
        let matrix = DMatrix::from_fn(rows.len(), dim, |r, c| rows[r][c]);
        Ok(Self { matrix })
    }

    pub fn n_samples(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn row(&self, k: usize) -> DVector<f64> {
        self.matrix.row(k).transpose()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.matrix.column(j).iter().copied().collect()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Applies a linear map `x -> s * x` to every point.
    pub fn scaled(&self, s: &DMatrix<f64>) -> Result<Self> {
        if s.nrows() != self.dim() || s.ncols() != self.dim() {
            return Err(Error::InvalidInput("scaling matrix dimension mismatch".into()));
        }
        Ok(Self { matrix: &self.matrix * s.transpose() })
    }
}

/// Clustering configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct GkConfig {
    /// Number of clusters.
    pub c: usize,
    /// Fuzziness exponent, must exceed 1.
    pub m: f64,
    /// Convergence threshold on the membership change.
    pub tol: f64,
    /// Iteration cap.
    pub max_iter: usize,
    /// Seed for the random membership initialization.
    pub seed: u64,
    /// Per-cluster norm volumes; `None` means 1 for every cluster.
    pub rho: Option<Vec<f64>>,
}

impl GkConfig {
    pub fn new(c: usize) -> Self {
        Self { c, m: 2.0, tol: 1e-6, max_iter: 300, seed: 0, rho: None }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Result of a clustering run.
#[derive(Debug, Clone)]
pub struct FuzzyPartition {
    /// Membership matrix, `c x n_samples`; every column sums to 1.
    pub memberships: DMatrix<f64>,
    /// Cluster centers, one per row.
    pub centers: DMatrix<f64>,
    /// Norm-inducing matrices, one per cluster, each SPD with det = rho_i.
    pub norms: Vec<DMatrix<f64>>,
    /// Final objective value.
    pub objective: f64,
    /// Objective after each iteration; non-increasing.
    pub objective_history: Vec<f64>,
    /// Iterations actually performed.
    pub iterations: usize,
    /// Whether the membership change fell below `tol` before `max_iter`.
    pub converged: bool,
}

impl FuzzyPartition {
    /// Index of the cluster with the largest membership for each sample.
    pub fn hard_assignments(&self) -> Vec<usize> {
        (0..self.memberships.ncols())
            .map(|k| {
                let col = self.memberships.column(k);
                let mut best = 0;
                for i in 1..col.len() {
                    if col[i] > col[best] {
                        best = i;
                    }
                }
                best
            })
            .collect()
    }
}

/// Squared Mahalanobis-style distance `(x - v)^T A (x - v)`.
pub fn distance(x: &DVector<f64>, v: &DVector<f64>, a: &DMatrix<f64>) -> Result<f64> {
    if x.len() != v.len() || a.nrows() != x.len() || a.ncols() != x.len() {
        return Err(Error::InvalidInput("distance dimension mismatch".into()));
    }
    if x.iter().chain(v.iter()).chain(a.iter()).any(|t| !t.is_finite()) {
        return Err(Error::InvalidInput("distance arguments must be finite".into()));
    }
    let d = x - v;
    Ok((d.transpose() * a * &d)[(0, 0)])
}

/// Runs Gustafson-Kessel clustering on `data`.
///
/// Memberships are initialized from a seeded generator, so equal seeds give
/// bit-identical partitions. Each iteration recomputes centers from
/// `m`-weighted means, fuzzy covariances, norm matrices scaled to
/// `det(A_i) = rho_i`, and memberships from the inverse-distance ratios.
/// Iteration stops when the largest membership change drops below `tol` or
/// after `max_iter` rounds.
pub fn gk_cluster(data: &DataSet, cfg: &GkConfig) -> Result<FuzzyPartition> {
    let n = data.n_samples();
    let dim = data.dim();
    let c = cfg.c;
    if c == 0 {
        return Err(Error::InvalidInput("cluster count must be at least 1".into()));
    }
    if n < c {
        return Err(Error::InvalidInput(format!(
            "need at least as many samples as clusters: {n} samples, {c} clusters"
        )));
    }
    if !(cfg.m > 1.0) || !cfg.m.is_finite() {
        return Err(Error::InvalidInput(format!("fuzziness must exceed 1, got {}", cfg.m)));
    }
    if !(cfg.tol > 0.0) || cfg.max_iter == 0 {
        return Err(Error::InvalidInput("tol must be positive and max_iter at least 1".into()));
    }
    let rho = match &cfg.rho {
        Some(r) => {
            if r.len() != c {
                return Err(Error::InvalidInput(format!(
                    "rho has {} entries, expected {c}",
                    r.len()
                )));
            }
            if r.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                return Err(Error::InvalidInput("every rho must be positive and finite".into()));
            }
            r.clone()
        }
        None => vec![1.0; c],
    };

    let mut memberships = seeded_memberships(c, n, cfg.seed);
    let mut centers = DMatrix::zeros(c, dim);
    let mut norms: Vec<DMatrix<f64>> = vec![DMatrix::identity(dim, dim); c];
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut converged = false;

    let mut dist2 = DMatrix::zeros(c, n);
    for _ in 0..cfg.max_iter {
        iterations += 1;

        // Centers and norm matrices from the current memberships.
        for i in 0..c {
            let weights: Vec<f64> = (0..n).map(|k| memberships[(i, k)].powf(cfg.m)).collect();
            let wsum: f64 = weights.iter().sum();
            if wsum <= 0.0 {
                return Err(Error::SingularCovariance { cluster: i });
            }
            let mut center = DVector::zeros(dim);
            for k in 0..n {
                center += data.row(k) * weights[k];
            }
            center /= wsum;
            let mut cov = DMatrix::zeros(dim, dim);
            for k in 0..n {
                let d = data.row(k) - &center;
                cov += &d * d.transpose() * weights[k];
            }
            cov /= wsum;
            norms[i] = norm_from_covariance(cov, rho[i], i)?;
            centers.set_row(i, &center.transpose());
        }

        // Squared distances under each cluster's norm.
        for i in 0..c {
            let v = centers.row(i).transpose();
            for k in 0..n {
                let d = data.row(k) - &v;
                dist2[(i, k)] = ((d.transpose() * &norms[i] * &d)[(0, 0)]).max(0.0);
            }
        }

        // Membership update: inverse-distance ratios with exponent
        // 1/(m - 1) on the squared distances. A sample coinciding with a
        // center gets full membership there.
        let exponent = 1.0 / (cfg.m - 1.0);
        let mut next = DMatrix::zeros(c, n);
        for k in 0..n {
            if let Some(hit) = (0..c).find(|&i| dist2[(i, k)] == 0.0) {
                next[(hit, k)] = 1.0;
                continue;
            }
            for i in 0..c {
                let mut denom = 0.0;
                for j in 0..c {
                    denom += (dist2[(i, k)] / dist2[(j, k)]).powf(exponent);
                }
                next[(i, k)] = 1.0 / denom;
            }
        }

        let mut objective = 0.0;
        for i in 0..c {
            for k in 0..n {
                objective += next[(i, k)].powf(cfg.m) * dist2[(i, k)];
            }
        }
        history.push(objective);

        let mut delta: f64 = 0.0;
        for i in 0..c {
            for k in 0..n {
                delta = delta.max((next[(i, k)] - memberships[(i, k)]).abs());
            }
        }
        memberships = next;
        if delta < cfg.tol {
            converged = true;
            break;
        }
    }

    let objective = *history.last().expect("at least one iteration runs");
    Ok(FuzzyPartition {
        memberships,
        centers,
        norms,
        objective,
        objective_history: history,
        iterations,
        converged,
    })
}

/// Turns a fuzzy covariance into the norm matrix `(rho det F)^(1/n) F^-1`,
/// regularizing ill-conditioned covariances and treating a zero covariance
/// as a point cluster with a Euclidean norm of the required volume.
fn norm_from_covariance(mut cov: DMatrix<f64>, rho: f64, cluster: usize) -> Result<DMatrix<f64>> {
    let dim = cov.nrows();
    let trace = cov.trace();
    if trace == 0.0 {
        // All mass sits exactly on the center; any direction is equivalent.
        return Ok(DMatrix::identity(dim, dim) * rho.powf(1.0 / dim as f64));
    }
    if !trace.is_finite() {
        return Err(Error::SingularCovariance { cluster });
    }
    let sv = cov.clone().svd(false, false).singular_values;
    let (smax, smin) = (sv.max(), sv.min());
    if smin <= 0.0 || smax / smin > CONDITION_LIMIT {
        let ridge = CONDITION_RIDGE * trace / dim as f64;
        for i in 0..dim {
            cov[(i, i)] += ridge;
        }
    }
    let det = cov.determinant();
    if !(det > 0.0) || !det.is_finite() {
        return Err(Error::SingularCovariance { cluster });
    }
    let inv = cov
        .clone()
        .try_inverse()
        .ok_or(Error::SingularCovariance { cluster })?;
    Ok(inv * (rho * det).powf(1.0 / dim as f64))
}

fn seeded_memberships(c: usize, n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = DMatrix::zeros(c, n);
    for k in 0..n {
        let mut sum = 0.0;
        for i in 0..c {
            let v: f64 = rng.gen::<f64>() + 1e-9;
            u[(i, k)] = v;
            sum += v;
        }
        for i in 0..c {
            u[(i, k)] /= sum;
        }
    }
    u
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn two_blob_data(seed: u64) -> DataSet {
        // Two well-separated Gaussian blobs around (0,0) and (5,5).
        use rand_distr::{Distribution, Normal};
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.3).unwrap();
        let mut rows = Vec::new();
        for _ in 0..60 {
            rows.push(vec![noise.sample(&mut rng), noise.sample(&mut rng)]);
        }
        for _ in 0..60 {
            rows.push(vec![5.0 + noise.sample(&mut rng), 5.0 + noise.sample(&mut rng)]);
        }
        DataSet::from_rows(&rows).unwrap()
    }

    /// Plain fuzzy c-means: identity norms, same seeded initialization.
    /// Serves as an independent oracle for hard assignments on blob data.
    fn fcm_oracle(data: &DataSet, c: usize, m: f64, seed: u64) -> Vec<usize> {
        let n = data.n_samples();
        let dim = data.dim();
        let mut u = seeded_memberships(c, n, seed);
        for _ in 0..300 {
            let mut centers = vec![DVector::<f64>::zeros(dim); c];
            for i in 0..c {
                let mut wsum = 0.0;
                let mut acc = DVector::zeros(dim);
                for k in 0..n {
                    let w = u[(i, k)].powf(m);
                    acc += data.row(k) * w;
                    wsum += w;
                }
                centers[i] = acc / wsum;
            }
            let mut next = DMatrix::zeros(c, n);
            for k in 0..n {
                let d2: Vec<f64> =
                    (0..c).map(|i| (data.row(k) - &centers[i]).norm_squared()).collect();
                if let Some(hit) = (0..c).find(|&i| d2[i] == 0.0) {
                    next[(hit, k)] = 1.0;
                    continue;
                }
                for i in 0..c {
                    let denom: f64 =
                        (0..c).map(|j| (d2[i] / d2[j]).powf(1.0 / (m - 1.0))).sum();
                    next[(i, k)] = 1.0 / denom;
                }
            }
            let delta = (&next - &u).abs().max();
            u = next;
            if delta < 1e-9 {
                break;
            }
        }
        (0..n)
            .map(|k| {
                let col = u.column(k);
                (0..c).max_by(|&a, &b| col[a].total_cmp(&col[b])).unwrap()
            })
            .collect()
    }

    #[test]
    fn distance_matches_hand_expansion() {
        // (1,1) vs (0,0) under diag(2,3): 2*1 + 3*1 = 5.
        let x = DVector::from_vec(vec![1.0, 1.0]);
        let v = DVector::from_vec(vec![0.0, 0.0]);
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0]));
        assert_abs_diff_eq!(distance(&x, &v, &a).unwrap(), 5.0);
    }

    #[test]
    fn identity_norm_reduces_to_squared_euclidean() {
        let x = DVector::from_vec(vec![3.0, -1.0, 2.0]);
        let v = DVector::from_vec(vec![1.0, 1.0, 0.0]);
        let a = DMatrix::identity(3, 3);
        assert_abs_diff_eq!(distance(&x, &v, &a).unwrap(), 4.0 + 4.0 + 4.0);
    }

    #[test]
    fn distance_rejects_non_finite() {
        let x = DVector::from_vec(vec![f64::NAN, 0.0]);
        let v = DVector::from_vec(vec![0.0, 0.0]);
        let a = DMatrix::identity(2, 2);
        assert!(distance(&x, &v, &a).is_err());
    }

    #[test]
    fn two_blobs_match_fuzzy_cmeans_oracle() {
        let data = two_blob_data(42);
        let cfg = GkConfig::new(2).with_seed(7);
        let part = gk_cluster(&data, &cfg).unwrap();
        let oracle = fcm_oracle(&data, 2, 2.0, 7);
        assert_eq!(part.hard_assignments(), oracle);

        // Centers sit on the blob means up to sampling noise.
        let mut found_origin = false;
        let mut found_far = false;
        for i in 0..2 {
            let c = part.centers.row(i);
            if (c[0].powi(2) + c[1].powi(2)).sqrt() < 0.2 {
                found_origin = true;
            }
            if ((c[0] - 5.0).powi(2) + (c[1] - 5.0).powi(2)).sqrt() < 0.2 {
                found_far = true;
            }
        }
        assert!(found_origin && found_far, "centers {:?}", part.centers);
    }

    #[test]
    fn partition_invariants_hold() {
        let data = two_blob_data(3);
        let cfg = GkConfig::new(3).with_seed(11);
        let part = gk_cluster(&data, &cfg).unwrap();

        // Columns are stochastic.
        for k in 0..data.n_samples() {
            let sum: f64 = part.memberships.column(k).iter().sum();
            assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-9);
            for i in 0..3 {
                let u = part.memberships[(i, k)];
                assert!((0.0..=1.0 + 1e-12).contains(&u));
            }
        }

        // Objective never increases.
        for w in part.objective_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "objective rose: {} -> {}", w[0], w[1]);
        }

        // Norms are symmetric with unit determinant (default rho).
        for a in &part.norms {
            assert_relative_eq!(a.determinant(), 1.0, max_relative = 1e-6);
            for r in 0..a.nrows() {
                for c in 0..a.ncols() {
                    assert_abs_diff_eq!(a[(r, c)], a[(c, r)], epsilon = 1e-9);
                }
            }
        }
        assert!(part.converged);
    }

    #[test]
    fn identical_points_collapse_to_single_center() {
        let rows = vec![vec![1.0, 2.0]; 8];
        let data = DataSet::from_rows(&rows).unwrap();
        let part = gk_cluster(&data, &GkConfig::new(1)).unwrap();
        assert_abs_diff_eq!(part.centers[(0, 0)], 1.0);
        assert_abs_diff_eq!(part.centers[(0, 1)], 2.0);
        for k in 0..8 {
            assert_abs_diff_eq!(part.memberships[(0, k)], 1.0);
        }
        assert_abs_diff_eq!(part.objective, 0.0);
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let data = two_blob_data(9);
        let cfg = GkConfig::new(2).with_seed(5);
        let a = gk_cluster(&data, &cfg).unwrap();
        let b = gk_cluster(&data, &cfg).unwrap();
        assert_eq!(a.memberships, b.memberships);
        assert_eq!(a.centers, b.centers);
        assert_eq!(a.objective.to_bits(), b.objective.to_bits());
    }

    #[test]
    fn norm_adaptation_survives_axis_scaling() {
        // Scaling the data by a nonsingular diagonal map rescales every
        // cluster distance by a common factor, so the membership sequence
        // and the hard assignments are unchanged.
        let data = two_blob_data(21);
        let cfg = GkConfig::new(2).with_seed(13);
        let base = gk_cluster(&data, &cfg).unwrap();
        let s = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 0.5]));
        let scaled = gk_cluster(&data.scaled(&s).unwrap(), &cfg).unwrap();
        assert_eq!(base.hard_assignments(), scaled.hard_assignments());
    }

    #[test]
    fn collinear_data_is_regularized_not_fatal() {
        // Rank-deficient scatter: all points on a line. The covariance is
        // singular until the conditioning ridge is added.
        let rows: Vec<Vec<f64>> = (0..40).map(|k| {
            let t = k as f64 * 0.1;
            vec![t, 2.0 * t]
        }).collect();
        let data = DataSet::from_rows(&rows).unwrap();
        let part = gk_cluster(&data, &GkConfig::new(2).with_seed(1)).unwrap();
        for a in &part.norms {
            assert_relative_eq!(a.determinant(), 1.0, max_relative = 1e-6);
        }
    }

    #[test]
    fn invalid_configurations_are_rejected() {
        let data = two_blob_data(1);
        assert!(gk_cluster(&data, &GkConfig::new(0)).is_err());
        let mut cfg = GkConfig::new(2);
        cfg.m = 1.0;
        assert!(gk_cluster(&data, &cfg).is_err());
        let mut cfg = GkConfig::new(2);
        cfg.rho = Some(vec![1.0]);
        assert!(gk_cluster(&data, &cfg).is_err());
        let tiny = DataSet::from_rows(&[vec![0.0, 0.0]]).unwrap();
        assert!(gk_cluster(&tiny, &GkConfig::new(2)).is_err());
        assert!(DataSet::from_rows(&[vec![0.0], vec![f64::NAN]]).is_err());
        assert!(DataSet::from_rows(&[vec![0.0], vec![1.0, 2.0]]).is_err());
    }
}
