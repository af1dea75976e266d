//! Mean-field manifold capacity.
//!
//! Each manifold is described in its own coordinates: points are centred on
//! the manifold centroid `c`, expressed in the basis of their principal
//! directions (numerical rank) and divided by `|c|`, and a constant 1 is
//! appended for the centre direction. For a Gaussian `T = (t, t0)` the
//! anchor point solves
//!
//! ```text
//! min |V - T|^2   subject to   V . (s_k, 1) >= kappa   for every point k
//! ```
//!
//! and `|V - T|^2` averaged over `T` is the inverse capacity of that manifold.

use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::nnls::{nnls, strictly_feasible};
use crate::quadrature::integrate;
use crate::rng::{substream, substream2, tag};
use crate::store::{load_matrix, Format};

pub const RANK_TOL: f64 = 1e-10;
pub const DUALITY_GAP_TOL: f64 = 1e-10;
pub const DEFAULT_N_SAMPLES: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldSet {
    /// One `N x M_i` matrix per manifold, points as columns.
    clouds: Vec<DMatrix<f64>>,
}

impl ManifoldSet {
    pub fn new(clouds: Vec<DMatrix<f64>>) -> Result<Self> {
        let Some(first) = clouds.first() else {
            return Err(Error::Validation("manifold set is empty".into()));
        };
        let n = first.nrows();
        if n == 0 {
            return Err(Error::Validation("ambient dimension is zero".into()));
        }
        for (i, c) in clouds.iter().enumerate() {
            if c.ncols() == 0 {
                return Err(Error::Validation(format!("manifold {i} has no points")));
            }
            if c.nrows() != n {
                return Err(Error::Validation(format!(
                    "manifold {i} has dimension {}, expected {n}",
                    c.nrows()
                )));
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation(format!("manifold {i} has a non-finite value")));
            }
        }
        Ok(ManifoldSet { clouds })
    }

    /// Clouds given as point lists.
    pub fn from_points(clouds: &[Vec<Vec<f64>>]) -> Result<Self> {
        let mats = clouds
            .iter()
            .enumerate()
            .map(|(i, pts)| {
                let n = pts.first().map_or(0, Vec::len);
                if pts.iter().any(|p| p.len() != n) {
                    return Err(Error::Validation(format!("manifold {i} has ragged points")));
                }
                Ok(DMatrix::from_fn(n, pts.len(), |r, c| pts[c][r]))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(mats)
    }

    /// Manifest: one matrix path per line (rows are points), relative to the
    /// manifest's directory. Blank lines and `#` comments are skipped.
    pub fn load_manifest(path: impl AsRef<Path>, format: Format) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let mut clouds = Vec::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let m = load_matrix(base.join(line), format)?;
            clouds.push(DMatrix::from_row_slice(m.rows(), m.cols(), m.values()).transpose());
        }
        Self::new(clouds)
    }

    pub fn n_manifolds(&self) -> usize {
        self.clouds.len()
    }

    pub fn ambient_dim(&self) -> usize {
        self.clouds[0].nrows()
    }

    pub fn cloud(&self, i: usize) -> &DMatrix<f64> {
        &self.clouds[i]
    }

    pub fn clouds(&self) -> &[DMatrix<f64>] {
        &self.clouds
    }

    pub fn centroids(&self) -> Vec<DVector<f64>> {
        self.clouds.iter().map(|c| c.column_mean()).collect()
    }
}

/// Project every manifold onto the orthogonal complement of the other
/// manifolds' centroids.
pub fn project_null_centers(set: &ManifoldSet) -> Result<ManifoldSet> {
    let p = set.n_manifolds();
    let n = set.ambient_dim();
    if p < 2 {
        return Err(Error::Validation("null-space projection needs at least 2 manifolds".into()));
    }
    if n <= p {
        return Err(Error::Validation(format!(
            "ambient dimension {n} must exceed the number of manifolds {p}"
        )));
    }
    let centers = set.centroids();
    let clouds = (0..p)
        .into_par_iter()
        .map(|i| {
            let others: Vec<DVector<f64>> = (0..p).filter(|&j| j != i).map(|j| centers[j].clone()).collect();
            let basis = orthonormal_basis(&DMatrix::from_columns(&others));
            let cloud = set.cloud(i);
            cloud - &basis * (basis.transpose() * cloud)
        })
        .collect();
    ManifoldSet::new(clouds)
}

/// Orthonormal basis of the column span, rank decided relative to the
/// largest singular value.
fn orthonormal_basis(m: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let top = svd.singular_values.max();
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&k| top > 0.0 && svd.singular_values[k] > RANK_TOL * top)
        .collect();
    u.select_columns(&keep)
}

/// Manifold points in their own coordinates, one column per point.
///
/// Coordinates come from the eigen-decomposition of the centred Gram
/// matrix, so they are unchanged by any orthogonal map of the ambient space.
/// Each axis is signed so that its largest-magnitude entry is positive.
pub fn manifold_coordinates(cloud: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let center = cloud.column_mean();
    let norm = center.norm();
    if norm == 0.0 {
        return Err(Error::Domain("manifold centroid is at the origin".into()));
    }
    let m = cloud.ncols();
    let mut centred = cloud.clone();
    for mut col in centred.column_iter_mut() {
        col -= &center;
    }
    let gram = centred.transpose() * &centred;
    let eig = SymmetricEigen::new(gram);
    let top = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let mut axes: Vec<usize> = (0..m)
        .filter(|&k| top > 0.0 && eig.eigenvalues[k] > RANK_TOL * RANK_TOL * top)
        .collect();
    axes.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut s = DMatrix::zeros(axes.len(), m);
    for (row, &k) in axes.iter().enumerate() {
        let u = eig.eigenvectors.column(k);
        let pivot = (0..m).max_by(|&i, &j| u[i].abs().total_cmp(&u[j].abs())).unwrap_or(0);
        let sign = if u[pivot] < 0.0 { -1.0 } else { 1.0 };
        let scale = sign * eig.eigenvalues[k].sqrt() / norm;
        for col in 0..m {
            s[(row, col)] = u[col] * scale;
        }
    }
    Ok(s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Anchor {
    /// `None` when no constraint is active (the draw is already feasible).
    pub s_tilde: Option<DVector<f64>>,
    /// KKT weights over the points, summing to 1 when anchored.
    pub weights: Vec<f64>,
    /// `|V - T|^2`
    pub objective: f64,
    pub duality_gap: f64,
}

/// Anchor point of a cloud given in manifold coordinates (`D x M`, points
/// as columns) for the draw `T = (t, t0)` and margin `kappa`.
///
/// Because every point carries a trailing 1, the margin folds into the draw:
/// with `T' = (t, t0 - kappa)` the multipliers solve
/// `min_{lambda >= 0} |X lambda + T'|^2` and `V = T + X lambda`.
pub fn anchor_point(points: &DMatrix<f64>, t: &[f64], t0: f64, kappa: f64) -> Result<Anchor> {
    let (d, m) = points.shape();
    if t.len() != d {
        return Err(Error::Validation(format!("t has {} entries, expected {d}", t.len())));
    }
    if m == 0 {
        return Err(Error::Validation("cloud has no points".into()));
    }
    let mut x = DMatrix::from_element(d + 1, m, 1.0);
    x.view_mut((0, 0), (d, m)).copy_from(points);
    let mut target = DVector::zeros(d + 1);
    for (i, &v) in t.iter().enumerate() {
        target[i] = -v;
    }
    target[d] = kappa - t0;
    let sol = nnls(&x, &target)?;
    let lambda = sol.x;
    let shift = &x * &lambda;
    let objective = shift.norm_squared();

    // V' = T' + X lambda must satisfy X^T V' >= 0 with lambda^T X^T V' = 0.
    let v_prime = -&target + &shift;
    let slack = x.tr_mul(&v_prime);
    let duality_gap = 2.0 * lambda.dot(&slack);
    let scale = 1.0 + target.norm_squared();
    let violation = slack.iter().copied().fold(0.0f64, |a, s| a.max(-s));
    if duality_gap.abs() > DUALITY_GAP_TOL * scale || violation > 1e-9 * scale.sqrt() {
        return Err(Error::NoConvergence {
            message: format!("anchor point not optimal: duality gap {duality_gap:e}, violation {violation:e}"),
            best_residual: duality_gap.abs().max(violation),
        });
    }
    let total: f64 = lambda.iter().sum();
    if total == 0.0 {
        return Ok(Anchor {
            s_tilde: None,
            weights: vec![0.0; m],
            objective: 0.0,
            duality_gap,
        });
    }
    let weights: Vec<f64> = lambda.iter().map(|l| l / total).collect();
    let s_tilde = points * DVector::from_column_slice(&weights);
    Ok(Anchor {
        s_tilde: Some(s_tilde),
        weights,
        objective,
        duality_gap,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldStats {
    pub alpha_inv: f64,
    pub radius: f64,
    pub dimension: f64,
    /// Coordinates of the manifold subspace (`D`).
    pub subspace_dim: usize,
    /// Draws with at least one active constraint.
    pub n_anchored: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MftmaResult {
    pub alpha_mftma: f64,
    /// Standard error of the mean inverse capacity across all draws.
    pub alpha_inv_std_err: f64,
    pub radius: f64,
    pub dimension: f64,
    pub center_correlation: f64,
    pub n_gaussian_samples: usize,
    pub seed: u64,
    pub per_manifold: Vec<ManifoldStats>,
}

/// Capacity, radius, dimension and centre correlation of a manifold set.
///
/// Manifold `i`, draw `k` uses its own substream. Capacity aggregates
/// harmonically, `1 / mean_i(alpha_i^-1)`; radius and dimension are
/// per-manifold averages over anchored draws, then averaged over manifolds.
pub fn mftma_capacity(set: &ManifoldSet, n_samples: usize, kappa: f64, seed: u64) -> Result<MftmaResult> {
    if n_samples == 0 {
        return Err(Error::Validation("n_samples must be positive".into()));
    }
    if !kappa.is_finite() {
        return Err(Error::Validation("kappa must be finite".into()));
    }
    let per: Vec<(ManifoldStats, Vec<f64>)> = (0..set.n_manifolds())
        .into_par_iter()
        .map(|i| manifold_stats(set.cloud(i), i, n_samples, kappa, seed))
        .collect::<Result<_>>()?;
    let p = per.len() as f64;
    let mean_inv = per.iter().map(|s| s.0.alpha_inv).sum::<f64>() / p;
    let all: Vec<f64> = per.iter().flat_map(|s| s.1.iter().copied()).collect();
    let n_all = all.len() as f64;
    let mean_all = all.iter().sum::<f64>() / n_all;
    let var = all.iter().map(|v| (v - mean_all) * (v - mean_all)).sum::<f64>() / (n_all - 1.0).max(1.0);
    Ok(MftmaResult {
        alpha_mftma: 1.0 / mean_inv,
        alpha_inv_std_err: (var / n_all).sqrt(),
        radius: per.iter().map(|s| s.0.radius).sum::<f64>() / p,
        dimension: per.iter().map(|s| s.0.dimension).sum::<f64>() / p,
        center_correlation: center_correlation(set),
        n_gaussian_samples: n_samples,
        seed,
        per_manifold: per.into_iter().map(|s| s.0).collect(),
    })
}

fn manifold_stats(
    cloud: &DMatrix<f64>,
    index: usize,
    n_samples: usize,
    kappa: f64,
    seed: u64,
) -> Result<(ManifoldStats, Vec<f64>)> {
    let s = manifold_coordinates(cloud)?;
    let d = s.nrows();
    let mut contributions = Vec::with_capacity(n_samples);
    let (mut r2, mut dim, mut anchored) = (0.0, 0.0, 0usize);
    for k in 0..n_samples {
        let mut rng = substream2(seed, tag::GAUSSIAN_T, index as u64, k as u64);
        let t: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let t0: f64 = rng.sample(StandardNormal);
        let a = anchor_point(&s, &t, t0, kappa)?;
        contributions.push(a.objective);
        if let Some(st) = a.s_tilde {
            anchored += 1;
            let n2 = st.norm_squared();
            r2 += n2;
            if n2 > 0.0 {
                let proj: f64 = t.iter().zip(st.iter()).map(|(a, b)| a * b).sum();
                dim += proj * proj / n2;
            }
        }
    }
    let alpha_inv = contributions.iter().sum::<f64>() / n_samples as f64;
    let (radius, dimension) = if anchored == 0 {
        (0.0, 0.0)
    } else {
        ((r2 / anchored as f64).sqrt(), dim / anchored as f64)
    };
    Ok((
        ManifoldStats {
            alpha_inv,
            radius,
            dimension,
            subspace_dim: d,
            n_anchored: anchored,
        },
        contributions,
    ))
}

/// Mean absolute pairwise cosine of the centroids after subtracting their
/// mean. Zero-length centred centroids count as uncorrelated.
pub fn center_correlation(set: &ManifoldSet) -> f64 {
    let centers = set.centroids();
    let p = centers.len();
    if p < 2 {
        return 0.0;
    }
    let mean = centers.iter().fold(DVector::zeros(set.ambient_dim()), |acc, c| acc + c) / p as f64;
    let centred: Vec<DVector<f64>> = centers.iter().map(|c| c - &mean).collect();
    let mut total = 0.0;
    for i in 0..p {
        for j in i + 1..p {
            let denom = centred[i].norm() * centred[j].norm();
            if denom > 0.0 {
                total += (centred[i].dot(&centred[j]) / denom).abs();
            }
        }
    }
    total / (p * (p - 1) / 2) as f64
}

const QUAD_TOL: f64 = 1e-13;

/// `int_{-inf}^{kappa} Dt (kappa - t)^2`, written as
/// `int_0^inf phi(kappa - u) u^2 du`.
pub fn point_integral(kappa: f64) -> Result<f64> {
    let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let f = |u: f64| {
        let t = kappa - u;
        norm * (-0.5 * t * t).exp() * u * u
    };
    let upper = kappa.max(0.0) + 40.0;
    Ok(integrate(f, 0.0, upper, QUAD_TOL, 1e-14)?.value)
}

pub fn alpha_point(kappa: f64) -> Result<f64> {
    Ok(1.0 / point_integral(kappa)?)
}

/// Capacity of L2 balls of radius `r` in `d` dimensions:
/// `alpha^-1 = int_{-inf}^{r sqrt d} Dt0 (r sqrt d - t0)^2 / (r^2 + 1)`.
pub fn alpha_ball(r: f64, d: f64) -> Result<f64> {
    if !(r >= 0.0 && d >= 0.0 && r.is_finite() && d.is_finite()) {
        return Err(Error::Validation(format!("need R >= 0 and D >= 0, got R = {r}, D = {d}")));
    }
    Ok((1.0 + r * r) / point_integral(r * d.sqrt())?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCapacity {
    pub capacity: f64,
    pub n_critical: usize,
    /// `(n, separable fraction)` for every dimension evaluated.
    pub evaluated: Vec<(usize, f64)>,
}

/// Capacity from the smallest projected dimension at which at least half of
/// the random dichotomies are linearly separable.
///
/// Dimension `n` keeps the first `n` rows of one seeded Gaussian `N x N`
/// projection, so separability is monotone in `n` for each dichotomy.
/// Labels are drawn per manifold, one substream per dichotomy, and the
/// separating hyperplane passes through the origin.
pub fn empirical_capacity(set: &ManifoldSet, n_dichotomies: usize, seed: u64) -> Result<EmpiricalCapacity> {
    let p = set.n_manifolds();
    let n = set.ambient_dim();
    if p < 2 {
        return Err(Error::Validation("empirical capacity needs at least 2 manifolds".into()));
    }
    if n_dichotomies == 0 {
        return Err(Error::Validation("n_dichotomies must be positive".into()));
    }
    let projection = DMatrix::from_fn(n, n, |i, j| {
        let mut rng = substream2(seed, tag::PROJECTION, i as u64, j as u64);
        rng.sample::<f64, _>(StandardNormal)
    });
    let labels: Vec<Vec<f64>> = (0..n_dichotomies)
        .map(|d| {
            let mut rng = substream(seed, tag::DICHOTOMY, d as u64);
            (0..p).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect()
        })
        .collect();
    let points: DMatrix<f64> = {
        let cols: Vec<DVector<f64>> = set.clouds().iter().flat_map(|c| c.column_iter().map(|v| v.into_owned())).collect();
        DMatrix::from_columns(&cols)
    };
    let owner: Vec<usize> = set
        .clouds()
        .iter()
        .enumerate()
        .flat_map(|(i, c)| std::iter::repeat_n(i, c.ncols()))
        .collect();
    let projected = &projection * &points;

    let mut evaluated = Vec::new();
    let mut fraction = |dim: usize| -> Result<f64> {
        let features = projected.rows(0, dim);
        let separable = labels
            .par_iter()
            .map(|y| {
                let g = DMatrix::from_fn(owner.len(), dim, |k, j| y[owner[k]] * features[(j, k)]);
                strictly_feasible(&g)
            })
            .collect::<Result<Vec<bool>>>()?;
        let frac = separable.iter().filter(|&&s| s).count() as f64 / n_dichotomies as f64;
        evaluated.push((dim, frac));
        Ok(frac)
    };
    if fraction(n)? < 0.5 {
        return Err(Error::Search(format!(
            "separable fraction stays below 0.5 up to the ambient dimension {n}"
        )));
    }
    let (mut lo, mut hi) = (0usize, n);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if fraction(mid)? >= 0.5 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    evaluated.sort_by_key(|e| e.0);
    Ok(EmpiricalCapacity {
        capacity: p as f64 / hi as f64,
        n_critical: hi,
        evaluated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_and_ball_capacity_at_zero() {
        assert!((alpha_point(0.0).unwrap() - 2.0).abs() < 1e-10);
        assert!((alpha_ball(0.0, 7.0).unwrap() - 2.0).abs() < 1e-10);
    }

    #[test]
    fn point_capacity_vanishes_for_large_margin() {
        let k = 30.0;
        let inv = point_integral(k).unwrap();
        assert!((inv / (1.0 + k * k) - 1.0).abs() < 1e-10);
        assert!(alpha_point(k).unwrap() < 2e-3);
    }

    #[test]
    fn single_point_anchor_is_the_point() {
        let pts = DMatrix::from_column_slice(2, 1, &[0.3, -0.4]);
        let a = anchor_point(&pts, &[1.0, 0.5], -2.0, 0.0).unwrap();
        let s = a.s_tilde.unwrap();
        assert!((s[0] - 0.3).abs() < 1e-15 && (s[1] + 0.4).abs() < 1e-15);
        assert_eq!(a.weights, vec![1.0]);
    }

    #[test]
    fn feasible_draw_is_interior() {
        let pts = DMatrix::from_column_slice(1, 2, &[0.1, -0.1]);
        let a = anchor_point(&pts, &[0.0], 5.0, 0.0).unwrap();
        assert!(a.s_tilde.is_none());
        assert_eq!(a.objective, 0.0);
    }

    #[test]
    fn projection_keeps_orthogonal_centroids() {
        let set = ManifoldSet::from_points(&[
            vec![vec![1.0, 0.0, 0.0, 0.1], vec![1.0, 0.0, 0.0, -0.1]],
            vec![vec![0.0, 2.0, 0.1, 0.0], vec![0.0, 2.0, -0.1, 0.0]],
        ])
        .unwrap();
        let out = project_null_centers(&set).unwrap();
        assert!((out.centroids()[0].clone() - set.centroids()[0].clone()).norm() < 1e-14);
        assert!((out.centroids()[1].clone() - set.centroids()[1].clone()).norm() < 1e-14);
        let small = ManifoldSet::from_points(&[vec![vec![1.0, 0.0]], vec![vec![0.0, 1.0]]]).unwrap();
        assert!(project_null_centers(&small).is_err());
    }

    #[test]
    fn coordinates_ignore_ambient_rotation() {
        let cloud = DMatrix::from_column_slice(3, 4, &[
            1.0, 0.2, 0.0, //
            1.1, -0.1, 0.3, //
            0.9, 0.0, -0.2, //
            1.0, 0.1, 0.1,
        ]);
        let (c, s) = (0.6f64.cos(), 0.6f64.sin());
        let rot = DMatrix::from_row_slice(3, 3, &[c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0]);
        let a = manifold_coordinates(&cloud).unwrap();
        let b = manifold_coordinates(&(&rot * &cloud)).unwrap();
        assert_eq!(a.shape(), b.shape());
        assert!((a - b).amax() < 1e-12);
    }
}
