//! Surrogate-logit model of the cross-entropy stationary points.
//!
//! A logit vector is written `z = beta * e_a + v` with `a` the argmax class
//! and `v` orthogonal to `e_a`. Closed forms give `v` for correctly
//! classified samples (`f`) and misclassified ones (`g`, `kappa`, `psi`).
//! Around `beta * e_a` the loss is expanded to third order in `v`:
//!
//! ```text
//! L(v) = logZ - beta (e_a . y) + v.(h - y) + 1/2 vQv + 1/6 (v*v).Qv - 1/3 (v.h)(vQv)
//! ```
//!
//! with `h = softmax(beta e_a)`, `Q = diag(h) - h h^T` and
//! `logZ = beta + ln(1 + e^-beta (N - 1))`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ordering::{argmax, log_sum_exp};
use crate::rng::{substream, tag};

/// Distance from a pole below which formulas are rejected.
pub const POLE_GUARD: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Branch {
    #[default]
    Plus,
    Minus,
}

impl Branch {
    fn sign(self) -> f64 {
        match self {
            Branch::Plus => 1.0,
            Branch::Minus => -1.0,
        }
    }
}

impl FromStr for Branch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plus" => Ok(Branch::Plus),
            "minus" => Ok(Branch::Minus),
            other => Err(Error::Validation(format!("unknown branch {other:?}"))),
        }
    }
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Branch::Plus => "plus",
            Branch::Minus => "minus",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Case {
    Correct,
    Misclassified,
}

impl FromStr for Case {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "correct" => Ok(Case::Correct),
            "misclassified" => Ok(Case::Misclassified),
            other => Err(Error::Validation(format!("unknown case {other:?}"))),
        }
    }
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Case::Correct => "correct",
            Case::Misclassified => "misclassified",
        })
    }
}

/// How the "components below beta" condition is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AdmissibilityRule {
    /// `beta > max(|f|)` or `beta > max(|g|, |psi|)`.
    #[default]
    Magnitude,
    /// `beta > f` or `beta > max(g, psi)`.
    Signed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurrogateSpec {
    pub n_classes: usize,
    pub beta: f64,
    pub case: Case,
    pub branch: Branch,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanFieldParams {
    pub beta_correct: f64,
    pub beta_wrong: f64,
    pub n_classes: usize,
    pub error_rate: f64,
}

impl MeanFieldParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.error_rate) {
            return Err(Error::Validation(format!(
                "error_rate must lie in [0, 1], got {}",
                self.error_rate
            )));
        }
        check_classes(self.n_classes, Case::Misclassified)
    }
}

/// `omega_*` are per unit attack strength: the aggregated coefficients are
/// `Omega(eps) = epsilon * omega_*`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapShiftInput {
    pub params: MeanFieldParams,
    pub epsilon: f64,
    pub omega_correct: f64,
    pub omega_wrong: f64,
    pub branch: Branch,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MisclassifiedCoeffs {
    pub g: f64,
    pub kappa: f64,
    pub psi: f64,
    /// N = 3: the (N - 3) terms vanish identically.
    pub degenerate: bool,
}

fn check_classes(n: usize, case: Case) -> Result<()> {
    let min = match case {
        Case::Correct => 2,
        Case::Misclassified => 3,
    };
    if n < min {
        return Err(Error::Validation(format!(
            "{case} case needs at least {min} classes, got {n}"
        )));
    }
    Ok(())
}

fn check_pole(beta: f64, count: usize) -> Result<()> {
    if count == 0 {
        return Ok(());
    }
    let pole = (count as f64).ln();
    if (beta - pole).abs() < POLE_GUARD {
        return Err(Error::Domain(format!(
            "beta = {beta} sits on the pole ln({count}) = {pole}"
        )));
    }
    Ok(())
}

fn finite(value: f64, what: &str, beta: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Domain(format!("{what} is undefined at beta = {beta}")))
    }
}

/// Correct-case coefficient:
/// `f(beta) = (1+a)/(1-a) [-1 +- sqrt(1 + 2 e^-2beta (1-a)/(1+a)^2)]`, `a = e^-beta (N-1)`.
pub fn f_pm(beta: f64, n_classes: usize, branch: Branch) -> Result<f64> {
    check_classes(n_classes, Case::Correct)?;
    check_pole(beta, n_classes - 1)?;
    let a = (-beta).exp() * (n_classes - 1) as f64;
    let root = (1.0 + 2.0 * (-2.0 * beta).exp() * (1.0 - a) / ((1.0 + a) * (1.0 + a))).sqrt();
    finite((1.0 + a) / (1.0 - a) * (-1.0 + branch.sign() * root), "f", beta)
}

/// Misclassified-case coefficients `(g, kappa, psi)`.
pub fn misclassified_coeffs(beta: f64, n_classes: usize, branch: Branch) -> Result<MisclassifiedCoeffs> {
    check_classes(n_classes, Case::Misclassified)?;
    check_pole(beta, n_classes - 1)?;
    check_pole(beta, n_classes - 3)?;
    let e = (-beta).exp();
    let a1 = e * (n_classes - 1) as f64;
    let a3 = e * (n_classes - 3) as f64;
    let kappa = (1.0 + a1) / (1.0 - a3) * (1.0 + 2.0 * (1.0 - a1) * (1.0 - a3) / (1.0 + a1)).sqrt();
    let g = -(1.0 - a3) / (1.0 - a1) * (1.0 + branch.sign() * kappa);
    let psi = 2.0 * (e / (1.0 - a1) * g - (1.0 + a1) / (1.0 - a3));
    Ok(MisclassifiedCoeffs {
        g: finite(g, "g", beta)?,
        kappa: finite(kappa, "kappa", beta)?,
        psi: finite(psi, "psi", beta)?,
        degenerate: n_classes == 3,
    })
}

pub fn admissible(spec: &SurrogateSpec) -> Result<bool> {
    admissible_under(spec, AdmissibilityRule::Magnitude)
}

pub fn admissible_under(spec: &SurrogateSpec, rule: AdmissibilityRule) -> Result<bool> {
    let bound = |x: f64| match rule {
        AdmissibilityRule::Magnitude => x.abs(),
        AdmissibilityRule::Signed => x,
    };
    let worst = match spec.case {
        Case::Correct => bound(f_pm(spec.beta, spec.n_classes, spec.branch)?),
        Case::Misclassified => {
            let c = misclassified_coeffs(spec.beta, spec.n_classes, spec.branch)?;
            bound(c.g).max(bound(c.psi))
        }
    };
    Ok(spec.beta > worst)
}

pub const THRESHOLD_SCAN_STEP: f64 = 0.1;
pub const THRESHOLD_SCAN_MAX: f64 = 100.0;
pub const THRESHOLD_TOL: f64 = 1e-10;

/// Smallest beta above which every scanned beta is admissible.
///
/// The scan runs in steps of 0.1 up to 100, from 0 for the misclassified
/// case and from just above ln(N - 1) for the correct case; the last
/// inadmissible grid point is then refined by bisection. Returns
/// `f64::NEG_INFINITY` when the whole scan is admissible.
pub fn admissibility_threshold(n_classes: usize, case: Case, branch: Branch) -> Result<f64> {
    admissibility_threshold_under(n_classes, case, branch, AdmissibilityRule::Magnitude)
}

pub fn admissibility_threshold_under(
    n_classes: usize,
    case: Case,
    branch: Branch,
    rule: AdmissibilityRule,
) -> Result<f64> {
    check_classes(n_classes, case)?;
    let ok = |beta: f64| {
        admissible_under(&SurrogateSpec { n_classes, beta, case, branch }, rule).unwrap_or(false)
    };
    let (lo, first) = match case {
        Case::Correct => (((n_classes - 1) as f64).ln(), 1),
        Case::Misclassified => (0.0, 0),
    };
    let steps = ((THRESHOLD_SCAN_MAX - lo) / THRESHOLD_SCAN_STEP).floor() as usize;
    let grid = |k: usize| lo + k as f64 * THRESHOLD_SCAN_STEP;
    if !ok(grid(steps)) {
        return Err(Error::Search(format!(
            "{case} case, {branch} branch, N = {n_classes}: not admissible at beta = {}",
            grid(steps)
        )));
    }
    let Some(last_bad) = (first..steps).rev().find(|&k| !ok(grid(k))) else {
        return Ok(f64::NEG_INFINITY);
    };
    let (mut bad, mut good) = (grid(last_bad), grid(last_bad + 1));
    while good - bad > THRESHOLD_TOL {
        let mid = 0.5 * (bad + good);
        if ok(mid) {
            good = mid;
        } else {
            bad = mid;
        }
    }
    Ok(good)
}

/// Closed-form logit vector: `beta` at `argmax_class`, `f` elsewhere
/// (correct case) or `g` at `true_class` and `psi` elsewhere (misclassified).
pub fn surrogate_logit(spec: &SurrogateSpec, true_class: usize, argmax_class: usize) -> Result<Vec<f64>> {
    let n = spec.n_classes;
    if true_class >= n || argmax_class >= n {
        return Err(Error::Validation(format!("class index out of range for {n} classes")));
    }
    match spec.case {
        Case::Correct if true_class != argmax_class => {
            return Err(Error::Validation("correct case needs true_class == argmax_class".into()))
        }
        Case::Misclassified if true_class == argmax_class => {
            return Err(Error::Validation("misclassified case needs true_class != argmax_class".into()))
        }
        _ => {}
    }
    if !admissible(spec)? {
        return Err(Error::Domain(format!(
            "beta = {} is not admissible for the {} case ({} branch, N = {n})",
            spec.beta, spec.case, spec.branch
        )));
    }
    let mut z = match spec.case {
        Case::Correct => vec![f_pm(spec.beta, n, spec.branch)?; n],
        Case::Misclassified => {
            let c = misclassified_coeffs(spec.beta, n, spec.branch)?;
            let mut z = vec![c.psi; n];
            z[true_class] = c.g;
            z
        }
    };
    z[argmax_class] = spec.beta;
    Ok(z)
}

/// Closed-form orthogonal part `v` (zero at `argmax_class`).
pub fn closed_form_perp(spec: &SurrogateSpec, true_class: usize, argmax_class: usize) -> Result<Vec<f64>> {
    let mut z = surrogate_logit(spec, true_class, argmax_class)?;
    z[argmax_class] = 0.0;
    Ok(z)
}

/// `-z_y + log sum exp z`.
pub fn exact_ce(z: &[f64], y: usize) -> Result<f64> {
    if y >= z.len() {
        return Err(Error::Validation(format!("class {y} out of range for {} logits", z.len())));
    }
    Ok(log_sum_exp(z) - z[y])
}

/// Pieces of the expansion around `beta * e_a`.
#[derive(Debug, Clone)]
struct Expansion {
    beta: f64,
    a: usize,
    y: usize,
    h: Vec<f64>,
    log_z: f64,
}

impl Expansion {
    fn new(beta: f64, a: usize, y: usize, n: usize) -> Self {
        let e = (-beta).exp();
        let denom = 1.0 + (n - 1) as f64 * e;
        let mut h = vec![e / denom; n];
        h[a] = 1.0 / denom;
        Expansion {
            beta,
            a,
            y,
            h,
            log_z: beta + denom.ln(),
        }
    }

    fn q_times(&self, v: &[f64]) -> Vec<f64> {
        let hv: f64 = self.h.iter().zip(v).map(|(h, v)| h * v).sum();
        self.h.iter().zip(v).map(|(h, v)| h * v - h * hv).collect()
    }

    fn loss(&self, v: &[f64]) -> f64 {
        let qv = self.q_times(v);
        let hv: f64 = self.h.iter().zip(v).map(|(h, v)| h * v).sum();
        let vqv: f64 = v.iter().zip(&qv).map(|(a, b)| a * b).sum();
        let v2qv: f64 = v.iter().zip(&qv).map(|(a, b)| a * a * b).sum();
        let linear = hv - v[self.y];
        let zeroth = self.log_z - if self.a == self.y { self.beta } else { 0.0 };
        zeroth + linear + 0.5 * vqv + v2qv / 6.0 - hv * vqv / 3.0
    }

    /// Gradient with the `a` component zeroed.
    fn projected_gradient(&self, v: &[f64]) -> Vec<f64> {
        let qv = self.q_times(v);
        let hv: f64 = self.h.iter().zip(v).map(|(h, v)| h * v).sum();
        let vqv: f64 = v.iter().zip(&qv).map(|(a, b)| a * b).sum();
        let hv2: f64 = self.h.iter().zip(v).map(|(h, v)| h * v * v).sum();
        let mut g: Vec<f64> = (0..v.len())
            .map(|j| {
                let h = self.h[j];
                let mut d = h + qv[j];
                d += (3.0 * h * v[j] * v[j] - h * hv2 - 2.0 * hv * h * v[j]) / 6.0;
                d -= (h * vqv + 2.0 * hv * qv[j]) / 3.0;
                d
            })
            .collect();
        g[self.y] -= 1.0;
        g[self.a] = 0.0;
        g
    }
}

pub const ORTHOGONALITY_TOL: f64 = 1e-12;

/// Third-order loss at `z`, expanded around `max(z) * e_argmax(z)`.
pub fn truncated_ce(z: &[f64], y: usize) -> Result<f64> {
    if z.len() < 2 {
        return Err(Error::Validation("need at least two logits".into()));
    }
    let a = argmax(z);
    let beta = z[a];
    let mut v = z.to_vec();
    v[a] = 0.0;
    truncated_ce_parts(beta, a, &v, y)
}

/// Third-order loss for an explicit decomposition `beta * e_a + v`.
pub fn truncated_ce_parts(beta: f64, a: usize, v: &[f64], y: usize) -> Result<f64> {
    check_parts(a, v, y)?;
    Ok(Expansion::new(beta, a, y, v.len()).loss(v))
}

/// Analytic gradient of [`truncated_ce_parts`] in `v`, projected onto the
/// complement of `e_a`.
pub fn truncated_ce_gradient(beta: f64, a: usize, v: &[f64], y: usize) -> Result<Vec<f64>> {
    check_parts(a, v, y)?;
    Ok(Expansion::new(beta, a, y, v.len()).projected_gradient(v))
}

fn check_parts(a: usize, v: &[f64], y: usize) -> Result<()> {
    let n = v.len();
    if a >= n || y >= n {
        return Err(Error::Validation(format!("class index out of range for {n} logits")));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Validation("non-finite logit".into()));
    }
    if v[a].abs() > ORTHOGONALITY_TOL {
        return Err(Error::Validation(format!(
            "perturbation not orthogonal to the argmax direction: v[{a}] = {}",
            v[a]
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossSurface {
    pub beta_correct: Vec<f64>,
    pub beta_wrong: Vec<f64>,
    /// `values[i][j]` at `(beta_correct[i], beta_wrong[j])`; `None` where a
    /// contributing closed form is inadmissible.
    pub values: Vec<Vec<Option<f64>>>,
}

/// Mixture `(1 - e) CE(correct logit) + e CE(misclassified logit)` over a grid.
pub fn mean_field_loss_surface(
    grid_correct: &[f64],
    grid_wrong: &[f64],
    n_classes: usize,
    error_rate: f64,
    branch: Branch,
) -> Result<LossSurface> {
    MeanFieldParams {
        beta_correct: 0.0,
        beta_wrong: 0.0,
        n_classes,
        error_rate,
    }
    .validate()?;
    let correct_loss = |beta: f64| -> Option<f64> {
        let spec = SurrogateSpec { n_classes, beta, case: Case::Correct, branch };
        surrogate_logit(&spec, 0, 0).ok().map(|z| exact_ce(&z, 0).unwrap())
    };
    let wrong_loss = |beta: f64| -> Option<f64> {
        let spec = SurrogateSpec { n_classes, beta, case: Case::Misclassified, branch };
        surrogate_logit(&spec, 1, 0).ok().map(|z| exact_ce(&z, 1).unwrap())
    };
    let wrong: Vec<Option<f64>> = grid_wrong
        .iter()
        .map(|&b| if error_rate == 0.0 { Some(0.0) } else { wrong_loss(b) })
        .collect();
    let values = grid_correct
        .par_iter()
        .map(|&bc| {
            let c = if error_rate == 1.0 { Some(0.0) } else { correct_loss(bc) };
            wrong
                .iter()
                .map(|w| Some((1.0 - error_rate) * c? + error_rate * (*w)?))
                .collect()
        })
        .collect();
    Ok(LossSurface {
        beta_correct: grid_correct.to_vec(),
        beta_wrong: grid_wrong.to_vec(),
        values,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationaryPoint {
    /// Full logit vector `beta * e_a + v`.
    pub logits: Vec<f64>,
    /// Infinity norm of the projected gradient at the point.
    pub residual: f64,
    /// Number of starts that converged into this cluster.
    pub hits: usize,
}

pub const STATIONARY_GRAD_TOL: f64 = 1e-9;
const MAX_ITERS: usize = 20_000;

#[derive(Debug, Clone, PartialEq)]
pub struct StationaryOptions {
    pub n_inits: usize,
    pub seed: u64,
    /// Cluster radius (infinity norm).
    pub tol: f64,
}

/// Local minima of the truncated loss over `v` orthogonal to `e_argmax`, by
/// gradient descent from random starts.
///
/// Starts whose iterates leave the box `|v_j| <= 4 (beta + 1)` are dropped
/// as divergent. Converged points are clustered and only those with every
/// component of `v` strictly below `beta` are returned, so an empty set
/// means no constraint-satisfying stationary point was found.
pub fn brute_force_stationary(
    beta: f64,
    n_classes: usize,
    case: Case,
    true_class: usize,
    argmax_class: usize,
    opts: &StationaryOptions,
) -> Result<Vec<StationaryPoint>> {
    check_classes(n_classes, case)?;
    if true_class >= n_classes || argmax_class >= n_classes {
        return Err(Error::Validation(format!("class index out of range for {n_classes} classes")));
    }
    if (case == Case::Correct) != (true_class == argmax_class) {
        return Err(Error::Validation(format!(
            "{case} case inconsistent with true class {true_class} and argmax {argmax_class}"
        )));
    }
    if opts.n_inits == 0 {
        return Err(Error::Validation("n_inits must be positive".into()));
    }
    let model = Expansion::new(beta, argmax_class, true_class, n_classes);
    let runs: Vec<Descent> = (0..opts.n_inits)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(opts.seed, tag::INIT, i as u64);
            let mut v: Vec<f64> = (0..n_classes).map(|_| rng.random_range(-beta.abs() - 1.0..beta.abs() + 1.0)).collect();
            v[argmax_class] = 0.0;
            descend(&model, v)
        })
        .collect();

    let mut best = f64::INFINITY;
    let mut clusters: Vec<StationaryPoint> = Vec::new();
    for run in runs {
        best = best.min(run.residual);
        if !run.converged {
            continue;
        }
        let mut z = run.v;
        z[argmax_class] = beta;
        match clusters.iter_mut().find(|c| max_abs_diff(&c.logits, &z) < opts.tol) {
            Some(c) => c.hits += 1,
            None => clusters.push(StationaryPoint {
                logits: z,
                residual: run.residual,
                hits: 1,
            }),
        }
    }
    if clusters.is_empty() {
        return Err(Error::NoConvergence {
            message: format!(
                "no start converged ({} starts, beta = {beta}, N = {n_classes}, {case} case)",
                opts.n_inits
            ),
            best_residual: best,
        });
    }
    clusters.retain(|c| {
        c.logits
            .iter()
            .enumerate()
            .all(|(j, &x)| j == argmax_class || x < beta)
    });
    Ok(clusters)
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

struct Descent {
    v: Vec<f64>,
    residual: f64,
    converged: bool,
}

fn inf_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v.abs()).fold(0.0, f64::max)
}

/// Barzilai-Borwein steps safeguarded by Armijo backtracking.
fn descend(model: &Expansion, mut v: Vec<f64>) -> Descent {
    let bound = 4.0 * (model.beta.abs() + 1.0);
    let mut g = model.projected_gradient(&v);
    let mut loss = model.loss(&v);
    let mut step = 1.0;
    let mut residual = inf_norm(&g);
    for _ in 0..MAX_ITERS {
        if residual < STATIONARY_GRAD_TOL {
            return Descent { v, residual, converged: true };
        }
        let g2: f64 = g.iter().map(|x| x * x).sum();
        let mut t = step;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = v.iter().zip(&g).map(|(x, d)| x - t * d).collect();
            let l = model.loss(&trial);
            if l.is_finite() && l <= loss - 1e-4 * t * g2 {
                accepted = Some((trial, l));
                break;
            }
            t *= 0.5;
        }
        let Some((next, l)) = accepted else {
            break;
        };
        if inf_norm(&next) > bound {
            return Descent { v: next, residual, converged: false };
        }
        let g_next = model.projected_gradient(&next);
        let (mut ss, mut sy) = (0.0, 0.0);
        for j in 0..v.len() {
            let s = next[j] - v[j];
            ss += s * s;
            sy += s * (g_next[j] - g[j]);
        }
        step = if sy > 0.0 { (ss / sy).clamp(1e-6, 1e6) } else { 1.0 };
        v = next;
        g = g_next;
        loss = l;
        residual = inf_norm(&g);
    }
    let converged = residual < STATIONARY_GRAD_TOL;
    Descent { v, residual, converged }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShrinkageTerms {
    /// `-(1 - e) Omega_c gap_c^2`
    pub correct: f64,
    /// `-e Omega_w gap_w^2`
    pub wrong: f64,
    /// `-2 (N - 2)/(N - 1) e Omega_w gap_w (g - psi)`
    pub cross: f64,
}

impl ShrinkageTerms {
    pub fn total(&self) -> f64 {
        self.correct + self.wrong + self.cross
    }
}

/// Shrinkage terms from explicit gaps, with `Omega = epsilon * omega`.
#[allow(clippy::too_many_arguments)]
pub fn shrinkage_terms_from_gaps(
    gap_correct: f64,
    gap_wrong: f64,
    g_minus_psi: f64,
    n_classes: usize,
    error_rate: f64,
    epsilon: f64,
    omega_correct: f64,
    omega_wrong: f64,
) -> ShrinkageTerms {
    let oc = epsilon * omega_correct;
    let ow = epsilon * omega_wrong;
    let n = n_classes as f64;
    ShrinkageTerms {
        correct: -(1.0 - error_rate) * oc * gap_correct * gap_correct,
        wrong: -error_rate * ow * gap_wrong * gap_wrong,
        cross: -2.0 * (n - 2.0) / (n - 1.0) * error_rate * ow * gap_wrong * g_minus_psi,
    }
}

pub fn gap_shrinkage_terms(input: &GapShiftInput) -> Result<ShrinkageTerms> {
    let p = &input.params;
    p.validate()?;
    if input.omega_correct < 0.0 || input.omega_wrong < 0.0 {
        return Err(Error::Validation("omega coefficients must be non-negative".into()));
    }
    if input.epsilon < 0.0 {
        return Err(Error::Validation("epsilon must be non-negative".into()));
    }
    let f = f_pm(p.beta_correct, p.n_classes, input.branch)?;
    let c = misclassified_coeffs(p.beta_wrong, p.n_classes, input.branch)?;
    Ok(shrinkage_terms_from_gaps(
        p.beta_correct - f,
        p.beta_wrong - c.g,
        c.g - c.psi,
        p.n_classes,
        p.error_rate,
        input.epsilon,
        input.omega_correct,
        input.omega_wrong,
    ))
}

/// Predicted first-order change of the correct-sample logit gap.
pub fn gap_shrinkage(input: &GapShiftInput) -> Result<f64> {
    Ok(gap_shrinkage_terms(input)?.total())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn large_beta_limits_of_f() {
        assert!(f_pm(40.0, 10, Branch::Plus).unwrap().abs() < 1e-12);
        assert!((f_pm(40.0, 10, Branch::Minus).unwrap() + 2.0).abs() < 1e-12);
    }

    #[test]
    fn poles_are_rejected() {
        let e = f_pm(9f64.ln(), 10, Branch::Plus).unwrap_err();
        assert!(matches!(e, Error::Domain(_)));
        assert!(matches!(
            misclassified_coeffs(7f64.ln(), 10, Branch::Plus),
            Err(Error::Domain(_))
        ));
        assert!(misclassified_coeffs(9f64.ln() + 1e-9, 10, Branch::Plus).is_err());
    }

    #[test]
    fn n3_is_flagged_degenerate() {
        let c = misclassified_coeffs(5.0, 3, Branch::Plus).unwrap();
        assert!(c.degenerate);
        assert!(!misclassified_coeffs(5.0, 4, Branch::Plus).unwrap().degenerate);
        assert!(misclassified_coeffs(5.0, 2, Branch::Plus).is_err());
    }

    #[test]
    fn admissibility_examples() {
        let spec = |beta, case| SurrogateSpec { n_classes: 10, beta, case, branch: Branch::Plus };
        assert!(admissible(&spec(10.0, Case::Correct)).unwrap());
        assert!(!admissible(&spec(2.0, Case::Misclassified)).unwrap_or(false));
        assert!(admissible(&spec(5.0, Case::Misclassified)).unwrap());
    }

    #[test]
    fn threshold_is_reproducible() {
        let a = admissibility_threshold(10, Case::Misclassified, Branch::Plus).unwrap();
        let b = admissibility_threshold(10, Case::Misclassified, Branch::Plus).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        assert_eq!(
            admissibility_threshold(10, Case::Correct, Branch::Plus).unwrap(),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn surrogate_vectors_follow_the_closed_forms() {
        let spec = SurrogateSpec { n_classes: 10, beta: 5.0, case: Case::Correct, branch: Branch::Plus };
        let z = surrogate_logit(&spec, 0, 0).unwrap();
        let f = f_pm(5.0, 10, Branch::Plus).unwrap();
        assert_eq!(z[0], 5.0);
        assert!(z[1..].iter().all(|&x| x == f));

        let spec = SurrogateSpec { case: Case::Misclassified, ..spec };
        let z = surrogate_logit(&spec, 1, 0).unwrap();
        let c = misclassified_coeffs(5.0, 10, Branch::Plus).unwrap();
        assert_eq!(&z[..3], &[5.0, c.g, c.psi]);
        assert!(surrogate_logit(&spec, 0, 0).is_err());
    }

    #[test]
    fn zero_perturbation_gives_zeroth_order_term() {
        let n = 10;
        let beta: f64 = 3.0;
        let z = {
            let mut z = vec![0.0; n];
            z[2] = beta;
            z
        };
        let log_z = beta + (1.0 + (n - 1) as f64 * (-beta).exp()).ln();
        assert!((truncated_ce(&z, 2).unwrap() - (log_z - beta)).abs() < 1e-14);
        assert!((truncated_ce(&z, 4).unwrap() - log_z).abs() < 1e-14);
    }

    #[test]
    fn orthogonality_is_enforced() {
        let v = vec![1e-6, 0.3, -0.2];
        assert!(truncated_ce_parts(2.0, 0, &v, 1).is_err());
    }

    #[test]
    fn analytic_gradient_matches_central_differences() {
        let v = vec![0.0, -0.7, 0.4, 1.1, -1.3];
        for y in [0, 3] {
            let g = truncated_ce_gradient(2.5, 0, &v, y).unwrap();
            for j in 1..v.len() {
                let h = 1e-5;
                let mut p = v.clone();
                let mut m = v.clone();
                p[j] += h;
                m[j] -= h;
                let fd = (truncated_ce_parts(2.5, 0, &p, y).unwrap() - truncated_ce_parts(2.5, 0, &m, y).unwrap()) / (2.0 * h);
                assert!((fd - g[j]).abs() < 1e-8, "j={j} fd={fd} g={}", g[j]);
            }
            assert_eq!(g[0], 0.0);
        }
    }

    #[test]
    fn exact_ce_examples() {
        assert!((exact_ce(&[0.0; 7], 3).unwrap() - 7f64.ln()).abs() < 1e-15);
        let z = [0.0, 6.0, 0.0, 0.0];
        assert!((exact_ce(&z, 1).unwrap() - (1.0 + 3.0 * (-6.0f64).exp()).ln()).abs() < 1e-15);
        assert!(exact_ce(&z, 4).is_err());
    }

    #[test]
    fn zero_epsilon_means_no_shrinkage() {
        let input = GapShiftInput {
            params: MeanFieldParams { beta_correct: 5.0, beta_wrong: 5.0, n_classes: 10, error_rate: 0.2 },
            epsilon: 0.0,
            omega_correct: 1.0,
            omega_wrong: 1.0,
            branch: Branch::Plus,
        };
        assert_eq!(gap_shrinkage(&input).unwrap(), 0.0);
        let input = GapShiftInput { epsilon: 0.1, ..input };
        assert!(gap_shrinkage(&input).unwrap() < 0.0);
    }
}
