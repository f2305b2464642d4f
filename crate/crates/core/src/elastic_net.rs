//! Elastic Net by cyclic coordinate descent with warm-started lambda paths and k-fold
//! cross-validation.
//!
//! The objective, on standardized columns and centered response, is
//!
//! ```text
//! (1 / 2N) sum_i (y_i - x_i' b)^2 + lambda * [ (1 - alpha) ||b||_2^2 / 2 + alpha ||b||_1 ]
//! ```
//!
//! with the intercept left unpenalized and recovered when coefficients are mapped back
//! to the original column scales.

use std::fmt;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Scalar;

/// Named regressors (column-major) and the response.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix<T> {
    names: Vec<String>,
    columns: Vec<Vec<T>>,
    y: Vec<T>,
}

impl<T: Scalar> DesignMatrix<T> {
    pub fn new(names: Vec<String>, columns: Vec<Vec<T>>, y: Vec<T>) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::InvalidDesign(format!(
                "{} names for {} columns",
                names.len(),
                columns.len()
            )));
        }
        let mut sorted = names.clone();
        sorted.sort();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidDesign(format!("duplicate column name {}", w[0])));
        }
        for (name, c) in names.iter().zip(&columns) {
            if c.len() != y.len() {
                return Err(Error::InvalidDesign(format!(
                    "column {name} has {} rows, response has {}",
                    c.len(),
                    y.len()
                )));
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidDesign(format!("column {name} has non-finite values")));
            }
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDesign("response has non-finite values".into()));
        }
        Ok(Self { names, columns, y })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn columns(&self) -> &[Vec<T>] {
        &self.columns
    }

    pub fn y(&self) -> &[T] {
        &self.y
    }

    pub fn rows(&self) -> usize {
        self.y.len()
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    fn select_rows(&self, rows: &[usize]) -> (Vec<Vec<T>>, Vec<T>) {
        let cols = self
            .columns
            .iter()
            .map(|c| rows.iter().map(|&i| c[i]).collect())
            .collect();
        (cols, rows.iter().map(|&i| self.y[i]).collect())
    }
}

/// Centered, unit-variance columns (population variance) and centered response,
/// with the transform needed to map coefficients back.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardized<T> {
    pub columns: Vec<Vec<T>>,
    pub y: Vec<T>,
    pub means: Vec<T>,
    pub sds: Vec<T>,
    pub y_mean: T,
    /// `<x_j, x_j> / N`: one for regular columns, zero for constant ones.
    pub scale: Vec<T>,
}

fn mean_sd<T: Scalar>(xs: &[T]) -> (T, T) {
    let n = T::from_count(xs.len());
    let mean = xs.iter().copied().sum::<T>() / n;
    let var = xs.iter().map(|v| (*v - mean) * (*v - mean)).sum::<T>() / n;
    (mean, var.sqrt())
}

fn standardize_columns<T: Scalar>(
    names: &[String],
    columns: &[Vec<T>],
    y: &[T],
    allow_constant: bool,
) -> Result<Standardized<T>> {
    let n = y.len();
    if n == 0 {
        return Err(Error::InvalidDesign("no rows".into()));
    }
    let mut out_cols = Vec::with_capacity(columns.len());
    let mut means = Vec::with_capacity(columns.len());
    let mut sds = Vec::with_capacity(columns.len());
    let mut scale = Vec::with_capacity(columns.len());
    for (name, c) in names.iter().zip(columns) {
        let (m, sd) = mean_sd(c);
        let constant = !(sd > T::epsilon() * (T::one() + m.abs()));
        if constant {
            if !allow_constant {
                return Err(Error::ZeroVariance(name.clone()));
            }
            out_cols.push(vec![T::zero(); n]);
            means.push(m);
            sds.push(T::one());
            scale.push(T::zero());
        } else {
            out_cols.push(c.iter().map(|v| (*v - m) / sd).collect());
            means.push(m);
            sds.push(sd);
            scale.push(T::one());
        }
    }
    let (y_mean, _) = mean_sd(y);
    Ok(Standardized {
        columns: out_cols,
        y: y.iter().map(|v| *v - y_mean).collect(),
        means,
        sds,
        y_mean,
        scale,
    })
}

/// Errors on a zero-variance column.
pub fn standardize<T: Scalar>(design: &DesignMatrix<T>) -> Result<Standardized<T>> {
    standardize_columns(&design.names, &design.columns, &design.y, false)
}

impl<T: Scalar> Standardized<T> {
    pub fn rows(&self) -> usize {
        self.y.len()
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    /// `(intercept, coefficients)` on the original scale.
    pub fn back_map(&self, beta: &[T]) -> (T, Vec<T>) {
        let coef: Vec<T> = beta.iter().zip(&self.sds).map(|(b, s)| *b / *s).collect();
        let shift = coef.iter().zip(&self.means).map(|(c, m)| *c * *m).sum::<T>();
        (self.y_mean - shift, coef)
    }

    /// Residual `y - X b` in standardized space.
    pub fn residual(&self, beta: &[T]) -> Vec<T> {
        let mut r = self.y.clone();
        for (c, b) in self.columns.iter().zip(beta) {
            if *b != T::zero() {
                for (ri, xi) in r.iter_mut().zip(c) {
                    *ri = *ri - *b * *xi;
                }
            }
        }
        r
    }
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(x, y)| *x * *y).sum()
}

fn soft_threshold<T: Scalar>(z: T, gamma: T) -> T {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        T::zero()
    }
}

/// Penalized objective at `beta` for a standardized problem.
pub fn objective<T: Scalar>(std: &Standardized<T>, beta: &[T], alpha: T, lambda: T) -> T {
    let r = std.residual(beta);
    penalized(&r, beta, alpha, lambda)
}

fn penalized<T: Scalar>(r: &[T], beta: &[T], alpha: T, lambda: T) -> T {
    let n = T::from_count(r.len());
    dot(r, r) / (n + n) + penalty(beta, alpha, lambda)
}

fn penalty<T: Scalar>(beta: &[T], alpha: T, lambda: T) -> T {
    let l2 = dot(beta, beta);
    let l1 = beta.iter().map(|b| b.abs()).sum::<T>();
    lambda * ((T::one() - alpha) * l2 / T::lit(2.0) + alpha * l1)
}

/// Largest violation of the subgradient optimality conditions.
pub fn kkt_violation<T: Scalar>(std: &Standardized<T>, beta: &[T], alpha: T, lambda: T) -> T {
    kkt_from_residual(std, &std.residual(beta), beta, alpha, lambda)
}

/// Violation for one coordinate given its gradient `<x_j, r> / N`.
fn subgradient_gap<T: Scalar>(grad: T, b: T, alpha: T, lambda: T) -> T {
    let g = grad - lambda * (T::one() - alpha) * b;
    let l1 = lambda * alpha;
    if b == T::zero() {
        (g.abs() - l1).max(T::zero())
    } else {
        (g - l1 * b.signum()).abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdOptions {
    /// Convergence when a full sweep changes no coefficient by more than this, or when
    /// every subgradient condition holds within it.
    pub tolerance: f64,
    pub max_sweeps: usize,
}

impl Default for CdOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_sweeps: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CdSolution<T> {
    pub beta: Vec<T>,
    pub sweeps: usize,
    /// Objective after each sweep, starting with the warm-start value.
    pub objective_trace: Vec<T>,
}

/// Cyclic coordinate descent from `warm`, alternating full sweeps with sweeps over the
/// current nonzero set until a full sweep moves nothing or the subgradient conditions hold.
pub fn coordinate_descent<T: Scalar>(
    std: &Standardized<T>,
    alpha: T,
    lambda: T,
    warm: &[T],
    opts: &CdOptions,
) -> Result<CdSolution<T>> {
    if !(alpha > T::zero() && alpha <= T::one()) {
        return Err(Error::UnsupportedConfig(format!("alpha {alpha} outside (0, 1]")));
    }
    if !(lambda >= T::zero()) {
        return Err(Error::UnsupportedConfig(format!("negative lambda {lambda}")));
    }
    let p = std.width();
    if warm.len() != p {
        return Err(Error::InvalidDesign("warm start length differs from width".into()));
    }
    let n = T::from_count(std.rows());
    let tol = T::lit(opts.tolerance);
    let l1 = lambda * alpha;
    let l2 = lambda * (T::one() - alpha);
    let mut beta = warm.to_vec();
    let mut r = std.residual(&beta);
    let mut trace = vec![penalized(&r, &beta, alpha, lambda)];
    let mut sweeps = 0;

    let sweep = |idx: &mut dyn Iterator<Item = usize>, beta: &mut Vec<T>, r: &mut Vec<T>| -> T {
        let mut max_change = T::zero();
        for j in idx {
            let xx = std.scale[j];
            if xx == T::zero() {
                beta[j] = T::zero();
                continue;
            }
            let col = &std.columns[j];
            let old = beta[j];
            let z = dot(col, r) / n + xx * old;
            let new = soft_threshold(z, l1) / (xx + l2);
            if new != old {
                let d = new - old;
                for (ri, xi) in r.iter_mut().zip(col) {
                    *ri = *ri - d * *xi;
                }
                beta[j] = new;
                max_change = max_change.max(d.abs());
            }
        }
        max_change
    };

    // Every trace entry is this function of `beta`, so a sweep that raises it (which only
    // happens at rounding level near the optimum) is undone and ends the solve.
    let objective = |beta: &[T]| penalized(&std.residual(beta), beta, alpha, lambda);

    loop {
        if sweeps >= opts.max_sweeps {
            return Err(Error::NonConvergence {
                sweeps,
                last_iterate: beta.iter().map(|b| b.as_f64()).collect(),
            });
        }
        let saved = beta.clone();
        let change = sweep(&mut (0..p), &mut beta, &mut r);
        let value = objective(&beta);
        if value > trace[trace.len() - 1] {
            beta = saved;
            break;
        }
        sweeps += 1;
        trace.push(value);
        if change < tol || kkt_from_residual(std, &r, &beta, alpha, lambda) < tol {
            break;
        }
        let active: Vec<usize> = (0..p).filter(|&j| beta[j] != T::zero()).collect();
        if active.is_empty() {
            continue;
        }
        // Sweeps over the nonzero set work on its Gram matrix and track the gradients
        // `<x_j, r> / N` instead of the residual.
        let gram: Vec<Vec<T>> = active
            .iter()
            .map(|&j| active.iter().map(|&k| dot(&std.columns[j], &std.columns[k]) / n).collect())
            .collect();
        let mut grad: Vec<T> = active.iter().map(|&j| dot(&std.columns[j], &r) / n).collect();
        while sweeps < opts.max_sweeps {
            let (saved_beta, saved_grad) = (beta.clone(), grad.clone());
            let mut change = T::zero();
            for i in 0..active.len() {
                let j = active[i];
                let xx = gram[i][i];
                let old = beta[j];
                let new = soft_threshold(grad[i] + xx * old, l1) / (xx + l2);
                if new != old {
                    let d = new - old;
                    for (g, row) in grad.iter_mut().zip(&gram) {
                        *g = *g - d * row[i];
                    }
                    beta[j] = new;
                    change = change.max(d.abs());
                }
            }
            let value = objective(&beta);
            if value > trace[trace.len() - 1] {
                beta = saved_beta;
                grad = saved_grad;
                break;
            }
            sweeps += 1;
            trace.push(value);
            let gap = active
                .iter()
                .zip(&grad)
                .map(|(&j, g)| subgradient_gap(*g, beta[j], alpha, lambda))
                .fold(T::zero(), T::max);
            if change < tol || gap < tol {
                break;
            }
            if sweeps % NEWTON_EVERY == 0 {
                let current: Vec<T> = active.iter().map(|&j| beta[j]).collect();
                if let Some(d) = newton_direction(&gram, &grad, &current, l1, l2) {
                    let mut trial = beta.clone();
                    for (&j, dj) in active.iter().zip(&d) {
                        trial[j] = trial[j] + *dj;
                    }
                    if objective(&trial) <= trace[trace.len() - 1] {
                        for (g, row) in grad.iter_mut().zip(&gram) {
                            *g = *g - dot(row, &d);
                        }
                        beta = trial;
                    }
                }
            }
        }
        r = std.residual(&beta);
    }
    Ok(CdSolution {
        beta,
        sweeps,
        objective_trace: trace,
    })
}

/// Active sweeps between attempts at an exact solve on the current sign pattern.
const NEWTON_EVERY: usize = 10;

/// Step `d` on the active block for the current sign pattern `s = sign(b)`.
///
/// When `G + l2 I` restricted to the nonzero coordinates is invertible, `d` solves
/// `(G + l2 I) d = grad - l2 b - l1 s`, shortened so that it stops where the first
/// coefficient reaches zero. When it is singular, `d` follows a null direction downhill
/// until that happens.
fn newton_direction<T: Scalar>(gram: &[Vec<T>], grad: &[T], b: &[T], l1: T, l2: T) -> Option<Vec<T>> {
    let idx: Vec<usize> = (0..b.len()).filter(|&i| b[i] != T::zero()).collect();
    let m = idx.len();
    let mut a: Vec<Vec<T>> = idx
        .iter()
        .map(|&i| {
            idx.iter()
                .map(|&k| gram[i][k] + if i == k { l2 } else { T::zero() })
                .collect()
        })
        .collect();
    let mut rhs: Vec<T> = idx
        .iter()
        .map(|&i| grad[i] - l2 * b[i] - l1 * b[i].signum())
        .collect();
    let floor = T::epsilon() * T::lit(1e3);
    let mut singular = None;
    for c in 0..m {
        let p = (c..m).fold(c, |best, r| if a[r][c].abs() > a[best][c].abs() { r } else { best });
        if !(a[p][c].abs() > floor) {
            singular = Some(c);
            break;
        }
        a.swap(c, p);
        rhs.swap(c, p);
        for r in c + 1..m {
            let f = a[r][c] / a[c][c];
            for k in c..m {
                a[r][k] = a[r][k] - f * a[c][k];
            }
            rhs[r] = rhs[r] - f * rhs[c];
        }
    }
    let mut x = vec![T::zero(); m];
    let mut d = vec![T::zero(); b.len()];
    match singular {
        None => {
            for r in (0..m).rev() {
                let tail = (r + 1..m).map(|k| a[r][k] * x[k]).sum::<T>();
                x[r] = (rhs[r] - tail) / a[r][r];
            }
            if x.iter().any(|v| !v.is_finite()) {
                return None;
            }
            let mut t = T::one();
            let mut hit = None;
            for (q, (&i, xi)) in idx.iter().zip(&x).enumerate() {
                if *xi != T::zero() && xi.signum() != b[i].signum() && -b[i] / *xi <= t {
                    t = -b[i] / *xi;
                    hit = Some(q);
                }
            }
            for (q, (&i, xi)) in idx.iter().zip(&x).enumerate() {
                d[i] = if Some(q) == hit { -b[i] } else { t * *xi };
            }
        }
        Some(c) => {
            x[c] = T::one();
            for r in (0..c).rev() {
                let tail = (r + 1..=c).map(|k| a[r][k] * x[k]).sum::<T>();
                x[r] = -tail / a[r][r];
            }
            let scale = x.iter().fold(T::zero(), |s, v| s.max(v.abs()));
            let leak = idx
                .iter()
                .zip(&x)
                .map(|(&i, xi)| {
                    let row = idx.iter().zip(&x).map(|(&k, xk)| gram[i][k] * *xk).sum::<T>();
                    (row + l2 * *xi).abs()
                })
                .fold(T::zero(), T::max);
            if !(scale.is_finite() && leak <= T::lit(1e-9) * scale) {
                return None;
            }
            // Directional derivative of the objective along x.
            let slope = idx
                .iter()
                .zip(&x)
                .map(|(&i, xi)| (l1 * b[i].signum() + l2 * b[i] - grad[i]) * *xi)
                .sum::<T>();
            if slope == T::zero() {
                return None;
            }
            let dir = if slope > T::zero() { -T::one() } else { T::one() };
            let mut t = T::infinity();
            let mut hit = None;
            for (q, (&i, xi)) in idx.iter().zip(&x).enumerate() {
                let v = dir * *xi;
                if v != T::zero() && v.signum() != b[i].signum() {
                    let ti = -b[i] / v;
                    if ti < t {
                        t = ti;
                        hit = Some(q);
                    }
                }
            }
            let hit = hit?;
            for (q, (&i, xi)) in idx.iter().zip(&x).enumerate() {
                d[i] = if q == hit { -b[i] } else { t * dir * *xi };
            }
        }
    }
    Some(d)
}

fn kkt_from_residual<T: Scalar>(std: &Standardized<T>, r: &[T], beta: &[T], alpha: T, lambda: T) -> T {
    let n = T::from_count(std.rows());
    (0..std.width())
        .filter(|&j| std.scale[j] > T::zero())
        .map(|j| subgradient_gap(dot(&std.columns[j], r) / n, beta[j], alpha, lambda))
        .fold(T::zero(), T::max)
}

/// `max_j |<x_j, y>| / (N alpha)`: smallest lambda with an all-zero solution.
pub fn lambda_max<T: Scalar>(std: &Standardized<T>, alpha: T) -> T {
    let n = T::from_count(std.rows());
    std.columns
        .iter()
        .map(|c| dot(c, &std.y).abs() / (n * alpha))
        .fold(T::zero(), T::max)
}

/// Log-spaced descending grid from `lambda_max` to `lambda_max * ratio`.
pub fn lambda_path<T: Scalar>(std: &Standardized<T>, alpha: T, length: usize, ratio: T) -> Result<Vec<T>> {
    if !(alpha > T::zero()) {
        return Err(Error::UnsupportedConfig(
            "alpha = 0 (pure ridge) is not supported".into(),
        ));
    }
    if length == 0 || !(ratio > T::zero() && ratio < T::one()) {
        return Err(Error::UnsupportedConfig(format!(
            "path length {length} / ratio {ratio} invalid"
        )));
    }
    let top = lambda_max(std, alpha);
    // Relative to the response scale, below rounding noise counts as zero.
    let noise = T::epsilon().sqrt() * (dot(&std.y, &std.y) / T::from_count(std.rows())).sqrt();
    if !(top > noise) || !(top > T::zero()) {
        return Err(Error::DegeneratePath);
    }
    if length == 1 {
        return Ok(vec![top]);
    }
    let step = ratio.ln() / T::from_count(length - 1);
    Ok((0..length)
        .map(|k| top * (step * T::from_count(k)).exp())
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LambdaRule {
    Min,
    OneSe,
}

impl fmt::Display for LambdaRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LambdaRule::Min => "min",
            LambdaRule::OneSe => "one-se",
        })
    }
}

/// Fitting configuration. The lambda grid is computed from the data with `path_length`
/// points spanning `[lambda_max * lambda_ratio, lambda_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnConfig {
    pub alpha: f64,
    pub path_length: usize,
    pub lambda_ratio: f64,
    pub folds: usize,
    pub seed: u64,
    pub rule: LambdaRule,
    pub cd: CdOptions,
}

impl Default for EnConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            path_length: 100,
            lambda_ratio: 1e-3,
            folds: 10,
            seed: 0,
            rule: LambdaRule::Min,
            cd: CdOptions::default(),
        }
    }
}

impl EnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alpha == 0.0 {
            return Err(Error::UnsupportedConfig(
                "alpha = 0 (pure ridge) is not supported".into(),
            ));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::UnsupportedConfig(format!("alpha {} outside (0, 1]", self.alpha)));
        }
        if self.folds < 2 {
            return Err(Error::UnsupportedConfig("at least 2 folds required".into()));
        }
        Ok(())
    }
}

/// Fold index per row; depends only on `(n, k, seed)`.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold = vec![0; n];
    for (pos, &row) in perm.iter().enumerate() {
        fold[row] = pos % k;
    }
    fold
}

/// Cross-validation error per lambda and the selected lambda.
#[derive(Debug, Clone, PartialEq)]
pub struct CvCurve<T> {
    pub lambdas: Vec<T>,
    pub mean_mse: Vec<T>,
    pub se_mse: Vec<T>,
    pub chosen_index: usize,
}

impl<T: Scalar> CvCurve<T> {
    pub fn chosen_lambda(&self) -> T {
        self.lambdas[self.chosen_index]
    }

    /// Writes `lambda,mean_mse,se_mse`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["lambda", "mean_mse", "se_mse"])?;
        for ((l, m), s) in self.lambdas.iter().zip(&self.mean_mse).zip(&self.se_mse) {
            w.write_record([l.to_string(), m.to_string(), s.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn path_fit<T: Scalar>(std: &Standardized<T>, alpha: T, lambdas: &[T], opts: &CdOptions) -> Result<Vec<Vec<T>>> {
    let mut beta = vec![T::zero(); std.width()];
    let mut out = Vec::with_capacity(lambdas.len());
    for &l in lambdas {
        beta = coordinate_descent(std, alpha, l, &beta, opts)?.beta;
        out.push(beta.clone());
    }
    Ok(out)
}

/// Like [`path_fit`], but stops at the first lambda that fails to converge and returns the
/// solved prefix with that error.
fn path_prefix<T: Scalar>(
    std: &Standardized<T>,
    alpha: T,
    lambdas: &[T],
    opts: &CdOptions,
) -> (Vec<Vec<T>>, Option<Error>) {
    let mut beta = vec![T::zero(); std.width()];
    let mut out = Vec::with_capacity(lambdas.len());
    for &l in lambdas {
        match coordinate_descent(std, alpha, l, &beta, opts) {
            Ok(sol) => beta = sol.beta,
            Err(e) => return (out, Some(e)),
        }
        out.push(beta.clone());
    }
    (out, None)
}

fn choose<T: Scalar>(mean: &[T], se: &[T], rule: LambdaRule) -> usize {
    let best = mean
        .iter()
        .enumerate()
        .fold(0, |b, (i, m)| if *m < mean[b] { i } else { b });
    match rule {
        LambdaRule::Min => best,
        LambdaRule::OneSe => {
            let bound = mean[best] + se[best];
            mean.iter().position(|m| *m <= bound).unwrap_or(best)
        }
    }
}

/// Seeded k-fold CV over `lambdas`, with per-fold standardization and warm-started paths.
///
/// A fold whose path stops converging at some lambda truncates the grid for every fold to
/// the lambdas all folds solved; the error is returned only when nothing remains.
pub fn cross_validate_grid<T: Scalar>(design: &DesignMatrix<T>, lambdas: &[T], cfg: &EnConfig) -> Result<CvCurve<T>> {
    cfg.validate()?;
    let n = design.rows();
    if n < cfg.folds {
        return Err(Error::InvalidDesign(format!(
            "{n} rows cannot fill {} folds",
            cfg.folds
        )));
    }
    let folds = fold_assignment(n, cfg.folds, cfg.seed);
    let alpha = T::lit(cfg.alpha);
    let per_fold: Vec<Vec<T>> = (0..cfg.folds)
        .into_par_iter()
        .map(|f| -> Result<Vec<T>> {
            let train: Vec<usize> = (0..n).filter(|&i| folds[i] != f).collect();
            let test: Vec<usize> = (0..n).filter(|&i| folds[i] == f).collect();
            if test.is_empty() {
                return Err(Error::InvalidDesign(format!("fold {f} has no held-out rows")));
            }
            let (cols, y) = design.select_rows(&train);
            let std = standardize_columns(design.names(), &cols, &y, true)?;
            let (path, failure) = path_prefix(&std, alpha, lambdas, &cfg.cd);
            if let Some(e) = failure {
                if path.is_empty() {
                    return Err(e);
                }
                log::warn!("fold {f}: {e}; grid truncated after {} lambdas", path.len());
            }
            Ok(path
                .iter()
                .map(|beta| {
                    let (b0, coef) = std.back_map(beta);
                    let sse = test
                        .iter()
                        .map(|&i| {
                            let pred = b0
                                + coef
                                    .iter()
                                    .zip(design.columns())
                                    .map(|(c, col)| *c * col[i])
                                    .sum::<T>();
                            let e = design.y[i] - pred;
                            e * e
                        })
                        .sum::<T>();
                    sse / T::from_count(test.len())
                })
                .collect())
        })
        .collect::<Result<_>>()?;

    let solved = per_fold.iter().map(Vec::len).min().unwrap_or(0);
    let k = T::from_count(cfg.folds);
    let mut mean_mse = Vec::with_capacity(solved);
    let mut se_mse = Vec::with_capacity(solved);
    for l in 0..solved {
        let mut sum = T::zero();
        for fold in &per_fold {
            sum = sum + fold[l];
        }
        let m = sum / k;
        let mut ss = T::zero();
        for fold in &per_fold {
            ss = ss + (fold[l] - m) * (fold[l] - m);
        }
        mean_mse.push(m);
        se_mse.push((ss / (k - T::one())).sqrt() / k.sqrt());
    }
    let chosen_index = choose(&mean_mse, &se_mse, cfg.rule);
    Ok(CvCurve {
        lambdas: lambdas[..solved].to_vec(),
        mean_mse,
        se_mse,
        chosen_index,
    })
}

/// CV over the data-derived lambda grid.
pub fn cross_validate<T: Scalar>(design: &DesignMatrix<T>, cfg: &EnConfig) -> Result<CvCurve<T>> {
    cfg.validate()?;
    let std = standardize(design)?;
    let grid = lambda_path(&std, T::lit(cfg.alpha), cfg.path_length, T::lit(cfg.lambda_ratio))?;
    cross_validate_grid(design, &grid, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "+")]
    Positive,
    #[serde(rename = "-")]
    Negative,
}

impl Sign {
    pub fn of<T: Scalar>(x: T) -> Option<Sign> {
        if x > T::zero() {
            Some(Sign::Positive)
        } else if x < T::zero() {
            Some(Sign::Negative)
        } else {
            None
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Sign::Positive => "+",
            Sign::Negative => "-",
        }
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActiveVariable {
    pub name: String,
    pub sign: Sign,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnFit<T> {
    pub names: Vec<String>,
    pub intercept: T,
    /// Original-scale coefficients, exactly zero outside the active set.
    pub coefficients: Vec<T>,
    pub lambda: T,
    pub alpha: T,
    /// Empty when the response carries no signal and the path is degenerate.
    pub cv: Option<CvCurve<T>>,
    pub active: Vec<ActiveVariable>,
}

impl<T: Scalar> EnFit<T> {
    pub fn predict(&self, row: &[T]) -> T {
        self.intercept + self.coefficients.iter().zip(row).map(|(b, x)| *b * *x).sum::<T>()
    }

    pub fn sign_of(&self, name: &str) -> Option<Sign> {
        self.active.iter().find(|a| a.name == name).map(|a| a.sign)
    }

    /// Writes `variable,level,coefficient,sign,selected`, splitting `LEVEL.name` column names.
    pub fn write_report_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["variable", "level", "coefficient", "sign", "selected"])?;
        for (name, c) in self.names.iter().zip(&self.coefficients) {
            let (level, var) = name.split_once('.').unwrap_or(("", name));
            let sign = Sign::of(*c);
            w.write_record([
                var.to_string(),
                level.to_string(),
                c.to_string(),
                sign.map(|s| s.symbol().to_string()).unwrap_or_default(),
                sign.is_some().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Standardize, cross-validate the path, refit at the chosen lambda on all rows and map back.
pub fn fit<T: Scalar>(design: &DesignMatrix<T>, cfg: &EnConfig) -> Result<EnFit<T>> {
    cfg.validate()?;
    let std = standardize(design)?;
    let alpha = T::lit(cfg.alpha);
    let grid = match lambda_path(&std, alpha, cfg.path_length, T::lit(cfg.lambda_ratio)) {
        Ok(g) => g,
        Err(Error::DegeneratePath) => {
            log::warn!("response uncorrelated with every column; returning the empty model");
            return Ok(EnFit {
                names: design.names.clone(),
                intercept: std.y_mean,
                coefficients: vec![T::zero(); design.width()],
                lambda: T::zero(),
                alpha,
                cv: None,
                active: Vec::new(),
            });
        }
        Err(e) => return Err(e),
    };
    let cv = cross_validate_grid(design, &grid, cfg)?;
    let path = path_fit(&std, alpha, &grid[..=cv.chosen_index], &cfg.cd)?;
    let beta = path.last().expect("non-empty path");
    let (intercept, coefficients) = std.back_map(beta);
    let active = design
        .names
        .iter()
        .zip(&coefficients)
        .filter_map(|(n, c)| {
            Sign::of(*c).map(|sign| ActiveVariable {
                name: n.clone(),
                sign,
            })
        })
        .collect();
    Ok(EnFit {
        names: design.names.clone(),
        intercept,
        coefficients,
        lambda: cv.chosen_lambda(),
        alpha,
        cv: Some(cv),
        active,
    })
}
