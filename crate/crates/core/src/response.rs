//! Random-matrix linear response of a least-squares logit map.
//!
//! Inputs `X` (rows unit length) are mapped to logits through
//! `omega = (X^T X - lambda I)^-1 X^T (Z - sigma0 W)`, where `lambda` solves
//! the norm constraint
//!
//! ```text
//! c^2 N_feats N_classes = Tr(X R^2 X^T (Z Z^T + sigma0^2 I)),   R = (X^T X - lambda I)^-1
//! ```
//!
//! on the branch below the smallest eigenvalue of `X^T X`. The Jacobian of
//! one sample's logits with respect to its own input, with `lambda` frozen,
//! drives a first-order gradient attack on the logits.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ordering::softmax;
use crate::rng::{substream, tag};
use crate::stats::row_gap;
use crate::surrogate::{self, Branch, Case, GapShiftInput, MeanFieldParams, SurrogateSpec};

pub const ROW_NORM_TOL: f64 = 1e-12;
pub const LAMBDA_FLOOR: f64 = -1e6;
pub const LAMBDA_GAP: f64 = 1e-8;
pub const TRACE_REL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct ResponseProblem {
    /// N_data x N_feats, unit rows.
    pub x: DMatrix<f64>,
    /// N_data x N_classes.
    pub z_tilde: DMatrix<f64>,
    pub labels: Vec<usize>,
    pub sigma0: f64,
    pub c: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl ResponseProblem {
    pub fn new(
        x: DMatrix<f64>,
        z_tilde: DMatrix<f64>,
        labels: Vec<usize>,
        sigma0: f64,
        c: f64,
        epsilon: f64,
        seed: u64,
    ) -> Result<Self> {
        let p = ResponseProblem { x, z_tilde, labels, sigma0, c, epsilon, seed };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let (n, f) = self.x.shape();
        if n == 0 || f == 0 {
            return Err(Error::Validation("design matrix is empty".into()));
        }
        if self.z_tilde.nrows() != n || self.z_tilde.ncols() < 2 {
            return Err(Error::Validation(format!(
                "logit matrix is {}x{}, expected {n} rows and at least 2 columns",
                self.z_tilde.nrows(),
                self.z_tilde.ncols()
            )));
        }
        if self.labels.len() != n {
            return Err(Error::Validation("labels length mismatch".into()));
        }
        if let Some(i) = self.labels.iter().position(|&l| l >= self.z_tilde.ncols()) {
            return Err(Error::Validation(format!("label out of range at index {i}")));
        }
        if self.x.iter().chain(self.z_tilde.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Validation("non-finite entry in design or logits".into()));
        }
        for (i, row) in self.x.row_iter().enumerate() {
            let norm = row.norm();
            if (norm - 1.0).abs() > ROW_NORM_TOL {
                return Err(Error::Validation(format!("row {i} of X has norm {norm}, expected 1")));
            }
        }
        if !(self.sigma0 >= 0.0 && self.sigma0.is_finite()) {
            return Err(Error::Validation(format!("sigma0 must be non-negative, got {}", self.sigma0)));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::Validation(format!("c must be positive, got {}", self.c)));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Validation(format!("epsilon must be non-negative, got {}", self.epsilon)));
        }
        Ok(())
    }

    pub fn n_data(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_feats(&self) -> usize {
        self.x.ncols()
    }

    pub fn n_classes(&self) -> usize {
        self.z_tilde.ncols()
    }

    fn trace_target(&self) -> f64 {
        self.c * self.c * (self.n_feats() * self.n_classes()) as f64
    }
}

/// Standard Gaussian noise, one substream per row.
pub fn draw_noise(n_data: usize, n_classes: usize, seed: u64) -> DMatrix<f64> {
    let rows: Vec<Vec<f64>> = (0..n_data)
        .map(|i| {
            let mut rng = substream(seed, tag::NOISE, i as u64);
            (0..n_classes).map(|_| rng.sample(StandardNormal)).collect()
        })
        .collect();
    DMatrix::from_fn(n_data, n_classes, |i, j| rows[i][j])
}

/// Spectral form of the trace: `T(lambda) = sum_k b_k / (d_k - lambda)^2`.
struct TraceSpectrum {
    d: Vec<f64>,
    b: Vec<f64>,
}

impl TraceSpectrum {
    fn new(p: &ResponseProblem) -> Self {
        let gram = p.x.transpose() * &p.x;
        let eig = SymmetricEigen::new(gram);
        let xz = p.x.transpose() * &p.z_tilde;
        let s2 = p.sigma0 * p.sigma0;
        let d: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        let b = (0..d.len())
            .map(|k| {
                let v = eig.eigenvectors.column(k);
                (xz.transpose() * v).norm_squared() + s2 * d[k]
            })
            .collect();
        TraceSpectrum { d, b }
    }

    fn d_min(&self) -> f64 {
        self.d.iter().copied().fold(f64::INFINITY, f64::min)
    }

    fn eval(&self, lambda: f64) -> f64 {
        self.d
            .iter()
            .zip(&self.b)
            .map(|(d, b)| b / ((d - lambda) * (d - lambda)))
            .sum()
    }
}

/// The printed trace evaluated by Cholesky solves:
/// `||A^-1 X^T Z||_F^2 + sigma0^2 ||X A^-1||_F^2` with `A = X^T X - lambda I`.
pub fn trace_at(problem: &ResponseProblem, lambda: f64) -> Result<f64> {
    let chol = shifted_cholesky(&problem.x, lambda)?;
    let rxz = chol.solve(&(problem.x.transpose() * &problem.z_tilde));
    let rxt = chol.solve(&problem.x.transpose());
    Ok(rxz.norm_squared() + problem.sigma0 * problem.sigma0 * rxt.norm_squared())
}

fn shifted_cholesky(x: &DMatrix<f64>, lambda: f64) -> Result<Cholesky<f64, Dyn>> {
    let f = x.ncols();
    let a = x.transpose() * x - DMatrix::<f64>::identity(f, f) * lambda;
    Cholesky::new(a).ok_or_else(|| {
        Error::Singular(format!("X^T X - lambda I is not positive definite at lambda = {lambda}"))
    })
}

/// Multiplier on `(-1e6, lambda_min - 1e-8)` solving the trace equation.
///
/// `W` does not enter: the constraint carries the noise only through its
/// variance `sigma0^2`.
pub fn solve_lambda_star(problem: &ResponseProblem, _w: &DMatrix<f64>) -> Result<f64> {
    problem.validate()?;
    let spec = TraceSpectrum::new(problem);
    let target = problem.trace_target();
    let (mut lo, mut hi) = (LAMBDA_FLOOR, spec.d_min() - LAMBDA_GAP);
    let (t_lo, t_hi) = (spec.eval(lo), spec.eval(hi));
    if !(t_lo <= target && target <= t_hi) {
        return Err(Error::Search(format!(
            "trace target {target} outside the achievable range [{t_lo}, {t_hi}] for lambda in ({lo}, {hi})"
        )));
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if spec.eval(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo) <= 1e-15 * hi.abs().max(lo.abs()).max(1.0) {
            break;
        }
    }
    // Rescaling polish: exact when one eigenvalue dominates the trace.
    let d0 = spec.d_min();
    let mut lambda = 0.5 * (lo + hi);
    let mut resid = (spec.eval(lambda) - target).abs();
    for _ in 0..4 {
        let t = spec.eval(lambda);
        let cand = d0 - (d0 - lambda) * (t / target).sqrt();
        if !(cand < d0 - LAMBDA_GAP * 0.5) {
            break;
        }
        let r = (spec.eval(cand) - target).abs();
        if r > resid {
            break;
        }
        lambda = cand;
        resid = r;
    }
    let direct = trace_at(problem, lambda)?;
    let rel = (direct - target).abs() / target;
    if rel >= TRACE_REL_TOL {
        return Err(Error::NoConvergence {
            message: format!("trace equation residual {rel:e} at lambda = {lambda}"),
            best_residual: rel,
        });
    }
    Ok(lambda)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FyodorovSolution {
    /// N_feats x N_classes
    pub omega: DMatrix<f64>,
    pub lambda_star: f64,
    /// N_data x N_classes
    pub w: DMatrix<f64>,
}

pub fn fyodorov_omega(problem: &ResponseProblem) -> Result<FyodorovSolution> {
    let w = draw_noise(problem.n_data(), problem.n_classes(), problem.seed);
    let lambda_star = solve_lambda_star(problem, &w)?;
    let chol = shifted_cholesky(&problem.x, lambda_star)?;
    let rhs = problem.x.transpose() * (&problem.z_tilde - &w * problem.sigma0);
    Ok(FyodorovSolution {
        omega: chol.solve(&rhs),
        lambda_star,
        w,
    })
}

/// Factorizations shared by every per-sample response quantity.
#[derive(Debug, Clone)]
pub struct ResponseOperator {
    /// `R X^T`, N_feats x N_data.
    c: DMatrix<f64>,
    /// `R X^T Z`, N_feats x N_classes.
    b: DMatrix<f64>,
    /// `X R^2 X^T`, N_data x N_data.
    omega: DMatrix<f64>,
    /// `Omega Z`, N_data x N_classes.
    omega_z: DMatrix<f64>,
}

impl ResponseOperator {
    pub fn new(sol: &FyodorovSolution, problem: &ResponseProblem) -> Result<Self> {
        let chol = shifted_cholesky(&problem.x, sol.lambda_star)?;
        let c = chol.solve(&problem.x.transpose());
        let b = &c * &problem.z_tilde;
        let omega = c.transpose() * &c;
        let omega_z = &omega * &problem.z_tilde;
        Ok(ResponseOperator { c, b, omega, omega_z })
    }

    /// `Omega(X, lambda) = X R^2 X^T`.
    pub fn omega(&self) -> &DMatrix<f64> {
        &self.omega
    }

    fn check_mu(&self, mu: usize) -> Result<()> {
        if mu >= self.c.ncols() {
            return Err(Error::Validation(format!(
                "sample {mu} out of range for {} samples",
                self.c.ncols()
            )));
        }
        Ok(())
    }

    /// `Jac[m][j] = (R x_mu)_j z_mu[m] + (R X^T Z)[j][m]`.
    pub fn jacobian(&self, problem: &ResponseProblem, mu: usize) -> Result<DMatrix<f64>> {
        self.check_mu(mu)?;
        let a = self.c.column(mu);
        let z = problem.z_tilde.row(mu);
        Ok(DMatrix::from_fn(problem.n_classes(), problem.n_feats(), |m, j| {
            a[j] * z[m] + self.b[(j, m)]
        }))
    }

    /// `Omega_mumu z z^T + Z^T Omega Z + z (Omega Z)_mu + (Omega Z)_mu^T z^T`.
    pub fn jj_transpose(&self, problem: &ResponseProblem, mu: usize) -> Result<DMatrix<f64>> {
        self.check_mu(mu)?;
        let z = problem.z_tilde.row(mu).transpose();
        let oz = self.omega_z.row(mu).transpose();
        let zoz = problem.z_tilde.transpose() * &self.omega_z;
        Ok(&z * z.transpose() * self.omega[(mu, mu)] + zoz + &z * oz.transpose() + &oz * z.transpose())
    }
}

pub fn jacobian_block(sol: &FyodorovSolution, problem: &ResponseProblem, mu: usize) -> Result<DMatrix<f64>> {
    ResponseOperator::new(sol, problem)?.jacobian(problem, mu)
}

pub fn jj_transpose(sol: &FyodorovSolution, problem: &ResponseProblem, mu: usize) -> Result<DMatrix<f64>> {
    ResponseOperator::new(sol, problem)?.jj_transpose(problem, mu)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogitResponse {
    /// N_data x N_classes
    pub delta_z: DMatrix<f64>,
    /// `zeta_mu = 1 / ||Jac^T grad||`; 0 for flagged samples.
    pub zeta: Vec<f64>,
    /// Samples with a vanishing attack gradient; their `delta_z` row is 0.
    pub flagged: Vec<usize>,
}

/// `delta z_mu = epsilon zeta_mu JJ^T (softmax(z_mu) - y_mu)`.
pub fn fgsm_logit_response(sol: &FyodorovSolution, problem: &ResponseProblem) -> Result<LogitResponse> {
    let op = ResponseOperator::new(sol, problem)?;
    fgsm_with(&op, problem)
}

fn fgsm_with(op: &ResponseOperator, problem: &ResponseProblem) -> Result<LogitResponse> {
    let n = problem.n_data();
    let k = problem.n_classes();
    let rows: Vec<Result<(Vec<f64>, f64)>> = (0..n)
        .into_par_iter()
        .map(|mu| {
            let z: Vec<f64> = problem.z_tilde.row(mu).iter().copied().collect();
            let mut g = DVector::from_vec(softmax(&z));
            g[problem.labels[mu]] -= 1.0;
            let jjt = op.jj_transpose(problem, mu)?;
            let jg = &jjt * &g;
            let norm2 = g.dot(&jg);
            if !(norm2 > 0.0) {
                return Ok((vec![0.0; k], 0.0));
            }
            let zeta = 1.0 / norm2.sqrt();
            Ok(((jg * (problem.epsilon * zeta)).iter().copied().collect(), zeta))
        })
        .collect();
    let mut delta = DMatrix::zeros(n, k);
    let mut zeta = Vec::with_capacity(n);
    let mut flagged = Vec::new();
    for (mu, r) in rows.into_iter().enumerate() {
        let (row, z) = r?;
        if z == 0.0 {
            flagged.push(mu);
        }
        for (j, v) in row.into_iter().enumerate() {
            delta[(mu, j)] = v;
        }
        zeta.push(z);
    }
    Ok(LogitResponse { delta_z: delta, zeta, flagged })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapShiftReport {
    /// First-order prediction from the aggregated Omega coefficients.
    pub predicted: f64,
    pub measured_mean: f64,
    /// Sample standard deviation.
    pub measured_std: f64,
    /// Mean of `|delta gap| / gap` over correct samples.
    pub relative_change: f64,
    pub n_correct: usize,
    pub n_wrong: usize,
    pub omega_correct: f64,
    pub omega_wrong: f64,
    pub lambda_star: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentConfig {
    pub n_data: usize,
    pub n_feats: usize,
    pub epsilon: f64,
    pub sigma0: f64,
    pub c: f64,
    pub seed: u64,
    pub branch: Branch,
}

/// Gaussian rows scaled to unit length, one substream per row.
pub fn synthetic_design(n_data: usize, n_feats: usize, seed: u64) -> DMatrix<f64> {
    let mut x = DMatrix::zeros(n_data, n_feats);
    for i in 0..n_data {
        let mut rng = substream(seed, tag::DESIGN, i as u64);
        let row: Vec<f64> = (0..n_feats).map(|_| rng.sample(StandardNormal)).collect();
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        for (j, v) in row.into_iter().enumerate() {
            x[(i, j)] = v / norm;
        }
    }
    x
}

/// Surrogate logits for a synthetic population: each sample is
/// misclassified with probability `error_rate`, its true class is uniform
/// and a misclassified argmax is uniform over the other classes.
/// Returns `(Z, labels, misclassified)`.
pub fn synthetic_logits(
    params: &MeanFieldParams,
    n_data: usize,
    branch: Branch,
    seed: u64,
) -> Result<(DMatrix<f64>, Vec<usize>, Vec<bool>)> {
    params.validate()?;
    let n = params.n_classes;
    let correct = SurrogateSpec { n_classes: n, beta: params.beta_correct, case: Case::Correct, branch };
    let wrong = SurrogateSpec { n_classes: n, beta: params.beta_wrong, case: Case::Misclassified, branch };
    let mut z = DMatrix::zeros(n_data, n);
    let mut labels = Vec::with_capacity(n_data);
    let mut mis = Vec::with_capacity(n_data);
    for mu in 0..n_data {
        let mut rng = substream(seed, tag::LABELS, mu as u64);
        let is_wrong = rng.random::<f64>() < params.error_rate;
        let y = rng.random_range(0..n);
        let (row, spec_y, spec_a) = if is_wrong {
            let a = (y + rng.random_range(1..n)) % n;
            (surrogate::surrogate_logit(&wrong, y, a)?, y, a)
        } else {
            (surrogate::surrogate_logit(&correct, y, y)?, y, y)
        };
        debug_assert!(spec_y < n && spec_a < n);
        for (j, v) in row.into_iter().enumerate() {
            z[(mu, j)] = v;
        }
        labels.push(y);
        mis.push(is_wrong);
    }
    Ok((z, labels, mis))
}

/// End-to-end check of the gap-shrinkage prediction on synthetic data.
///
/// The per-unit-epsilon coefficients are `zeta_mu sum_{nu correct}
/// Omega_{mu nu} / (1 - e)` and `zeta_mu sum_{nu wrong} Omega_{mu nu} / e`,
/// clamped at 0 and averaged over correct `mu`, where `e` is the realized
/// error fraction.
pub fn gap_shift_experiment(params: &MeanFieldParams, cfg: &ExperimentConfig) -> Result<GapShiftReport> {
    let x = synthetic_design(cfg.n_data, cfg.n_feats, cfg.seed);
    let (z, labels, mis) = synthetic_logits(params, cfg.n_data, cfg.branch, cfg.seed)?;
    let problem = ResponseProblem::new(x, z, labels, cfg.sigma0, cfg.c, cfg.epsilon, cfg.seed)?;
    let sol = fyodorov_omega(&problem)?;
    let op = ResponseOperator::new(&sol, &problem)?;
    let resp = fgsm_with(&op, &problem)?;

    let n_wrong = mis.iter().filter(|&&m| m).count();
    let n_correct = cfg.n_data - n_wrong;
    let e = n_wrong as f64 / cfg.n_data as f64;
    let mut changes = Vec::with_capacity(n_correct);
    let mut relative = 0.0;
    let (mut oc, mut ow) = (0.0, 0.0);
    for mu in (0..cfg.n_data).filter(|&m| !mis[m]) {
        let before: Vec<f64> = problem.z_tilde.row(mu).iter().copied().collect();
        let after: Vec<f64> = before
            .iter()
            .zip(resp.delta_z.row(mu).iter())
            .map(|(a, b)| a + b)
            .collect();
        let gap = row_gap(&before);
        let change = row_gap(&after) - gap;
        changes.push(change);
        relative += change.abs() / gap;
        let (mut sc, mut sw) = (0.0, 0.0);
        for nu in 0..cfg.n_data {
            if mis[nu] {
                sw += op.omega()[(mu, nu)];
            } else {
                sc += op.omega()[(mu, nu)];
            }
        }
        let zeta = resp.zeta[mu];
        if 1.0 - e > 0.0 {
            oc += (zeta * sc / (1.0 - e)).max(0.0);
        }
        if e > 0.0 {
            ow += (zeta * sw / e).max(0.0);
        }
    }
    let (mean, std) = mean_std(&changes);
    let nc = n_correct.max(1) as f64;
    let (omega_correct, omega_wrong) = (oc / nc, ow / nc);
    let predicted = surrogate::gap_shrinkage(&GapShiftInput {
        params: *params,
        epsilon: cfg.epsilon,
        omega_correct,
        omega_wrong,
        branch: cfg.branch,
    })?;
    Ok(GapShiftReport {
        predicted,
        measured_mean: mean,
        measured_std: std,
        relative_change: relative / nc,
        n_correct,
        n_wrong,
        omega_correct,
        omega_wrong,
        lambda_star: sol.lambda_star,
    })
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
