//! Basis pursuit denoising, `min ||x||_1 s.t. ||A x - y||_2 <= E`, by ADMM.
//!
//! The splitting alternates an exact Euclidean projection onto the
//! constraint set with complex soft thresholding. The projection works in the
//! singular basis of `A`, where it reduces to a scalar secular equation.

use super::{RecoveryError, Result};
use crate::linalg::{hermitian_eigen, norm, norm_sqr, CMatrix, CVector, C64};

/// Noisy instances with a constraint ball far smaller than the signal need
/// tens of thousands of iterations to reach the default tolerance.
pub const MIN_ITERATION_CAP: usize = 50_000;

const BALANCE_RATIO: f64 = 10.0;
const MAX_REBALANCES: usize = 100;
const POLISH_INTERVAL: usize = 25;
const TIGHT_MARGIN: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct BpdnProblem {
    a: CMatrix,
    y: CVector,
    e_bound: f64,
}

impl BpdnProblem {
    pub fn new(a: CMatrix, y: CVector, e_bound: f64) -> Result<Self> {
        if a.rows() != y.len() {
            return Err(RecoveryError::DimensionMismatch {
                expected: a.rows(),
                got: y.len(),
            });
        }
        if !(e_bound >= 0.0 && e_bound.is_finite()) {
            return Err(RecoveryError::InvalidParameter(format!(
                "noise bound {e_bound} must be finite and >= 0"
            )));
        }
        if a.cols() == 0 {
            return Err(RecoveryError::InvalidParameter(
                "sensing matrix has no columns".into(),
            ));
        }
        Ok(Self { a, y, e_bound })
    }

    pub fn a(&self) -> &CMatrix {
        &self.a
    }

    pub fn y(&self) -> &CVector {
        &self.y
    }

    pub fn e_bound(&self) -> f64 {
        self.e_bound
    }

    /// Same problem with `A`, `y` and `E` all multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            a: self.a.scale(s),
            y: self.y.scale(C64::new(s, 0.0)),
            e_bound: self.e_bound * s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BpdnOptions {
    /// Relative primal and dual residual tolerance.
    pub tol: f64,
    /// Iteration cap; `None` means `100 * M`, but at least
    /// [`MIN_ITERATION_CAP`].
    pub max_iterations: Option<usize>,
    /// Shrinkage threshold relative to the typical entry size of the
    /// minimum-norm least-squares solution.
    pub threshold_factor: f64,
}

impl Default for BpdnOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iterations: None,
            threshold_factor: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BpdnSolution {
    pub x: CVector,
    pub iterations: usize,
    /// `E` is below the distance from `y` to the range of `A`; `x` is then a
    /// least-squares point.
    pub infeasible: bool,
    /// `||A x - y||_2`.
    pub residual_norm: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

/// Thin SVD `A = U S V^H` restricted to numerically nonzero singular values.
struct Projector {
    /// Right singular vectors, one per retained singular value.
    v: Vec<Vec<C64>>,
    sigma: Vec<f64>,
    /// `U^H y`.
    b: Vec<C64>,
    /// `||y - U U^H y||^2`.
    y_perp_sq: f64,
    e_sq: f64,
}

enum Multiplier {
    None,
    Finite(f64),
    Infinite,
}

impl Projector {
    fn new(p: &BpdnProblem) -> Result<Self> {
        let a = &p.a;
        let (n, m) = (a.rows(), a.cols());
        let mut v = Vec::new();
        let mut u = Vec::new();
        let mut sigma = Vec::new();
        if n <= m {
            let eig = hermitian_eigen(&a.adjoint().gram())?;
            let top = eig.values.last().copied().unwrap_or(0.0).max(0.0);
            for (lambda, uvec) in eig.values.iter().zip(&eig.vectors).rev() {
                if *lambda <= top * 1e-13 || *lambda <= 0.0 {
                    continue;
                }
                let s = lambda.sqrt();
                let mut vi = a.adjoint_matvec(uvec.as_slice());
                vi.iter_mut().for_each(|c| *c /= s);
                sigma.push(s);
                u.push(uvec.as_slice().to_vec());
                v.push(vi);
            }
        } else {
            let eig = hermitian_eigen(&a.gram())?;
            let top = eig.values.last().copied().unwrap_or(0.0).max(0.0);
            for (lambda, vvec) in eig.values.iter().zip(&eig.vectors).rev() {
                if *lambda <= top * 1e-13 || *lambda <= 0.0 {
                    continue;
                }
                let s = lambda.sqrt();
                let mut ui = a.matvec(vvec.as_slice());
                ui.iter_mut().for_each(|c| *c /= s);
                sigma.push(s);
                u.push(ui);
                v.push(vvec.as_slice().to_vec());
            }
        }
        let y = p.y.as_slice();
        let b: Vec<C64> = u
            .iter()
            .map(|ui| ui.iter().zip(y).map(|(a, b)| a.conj() * b).sum())
            .collect();
        let mut perp = y.to_vec();
        for (ui, bi) in u.iter().zip(&b) {
            for (r, c) in perp.iter_mut().zip(ui) {
                *r -= c * bi;
            }
        }
        Ok(Self {
            v,
            sigma,
            b,
            y_perp_sq: norm_sqr(&perp),
            e_sq: p.e_bound * p.e_bound,
        })
    }

    fn sigma_max(&self) -> f64 {
        self.sigma.first().copied().unwrap_or(0.0)
    }

    /// Norm of the minimum-norm least-squares solution.
    fn least_squares_norm(&self) -> f64 {
        self.sigma
            .iter()
            .zip(&self.b)
            .map(|(s, b)| (b / s).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Whether no point reaches the constraint ball, allowing for rounding in
    /// the range-space split when `E = 0`.
    fn infeasible(&self, y_norm_sq: f64) -> bool {
        self.y_perp_sq.sqrt() > self.e_sq.sqrt() + 1e-10 * y_norm_sq.sqrt()
    }

    /// Euclidean projection of `point` onto `{x : ||A x - y|| <= E}`.
    fn project(&self, point: &[C64], out: &mut [C64], coeffs: &mut Vec<C64>) {
        coeffs.clear();
        coeffs.extend(
            self.v
                .iter()
                .map(|vi| vi.iter().zip(point).map(|(a, b)| a.conj() * b).sum::<C64>()),
        );
        out.copy_from_slice(point);
        let gaps: Vec<f64> = coeffs
            .iter()
            .zip(&self.sigma)
            .zip(&self.b)
            .map(|((c, s), b)| (c * s - b).norm_sqr())
            .collect();
        let multiplier = self.multiplier(&gaps);
        for (i, vi) in self.v.iter().enumerate() {
            let (s, b, c) = (self.sigma[i], self.b[i], coeffs[i]);
            let target = match multiplier {
                Multiplier::None => continue,
                Multiplier::Finite(t) => (c + b * (t * s)) / (1.0 + t * s * s),
                Multiplier::Infinite => b / s,
            };
            let delta = target - c;
            for (o, v) in out.iter_mut().zip(vi) {
                *o += v * delta;
            }
        }
    }

    /// Solves `||y_perp||^2 + sum_i g_i / (1 + t s_i^2)^2 = E^2` for `t >= 0`.
    fn multiplier(&self, gaps: &[f64]) -> Multiplier {
        let phi = |t: f64| -> (f64, f64) {
            let mut val = self.y_perp_sq;
            let mut deriv = 0.0;
            for (g, s) in gaps.iter().zip(&self.sigma) {
                let q = 1.0 + t * s * s;
                val += g / (q * q);
                deriv -= 2.0 * g * s * s / (q * q * q);
            }
            (val, deriv)
        };
        if phi(0.0).0 <= self.e_sq {
            return Multiplier::None;
        }
        if self.e_sq <= self.y_perp_sq * (1.0 + 1e-12) {
            return Multiplier::Infinite;
        }
        // Newton on h(t) = phi(t)^{-1/2} - 1/E, which is concave and
        // increasing, so iterates approach the root monotonically from below.
        let target = 1.0 / self.e_sq.sqrt();
        let mut t = 0.0;
        for _ in 0..100 {
            let (val, deriv) = phi(t);
            let h = val.powf(-0.5) - target;
            if h >= -1e-15 * target {
                break;
            }
            let dh = -0.5 * val.powf(-1.5) * deriv;
            if dh <= 0.0 {
                break;
            }
            let next = t - h / dh;
            if next <= t * (1.0 + 1e-15) {
                break;
            }
            t = next;
        }
        Multiplier::Finite(t)
    }
}

fn soft_threshold(z: C64, kappa: f64) -> C64 {
    let r = z.norm();
    if r <= kappa {
        C64::new(0.0, 0.0)
    } else {
        z * (1.0 - kappa / r)
    }
}

pub fn solve_bpdn(p: &BpdnProblem) -> Result<BpdnSolution> {
    solve_bpdn_with(p, &BpdnOptions::default())
}

pub fn solve_bpdn_with(p: &BpdnProblem, opts: &BpdnOptions) -> Result<BpdnSolution> {
    let m = p.a.cols();
    let y_norm_sq = p.y.norm_sqr();
    if y_norm_sq.sqrt() <= p.e_bound {
        return Ok(BpdnSolution {
            x: CVector::zeros(m),
            iterations: 0,
            infeasible: false,
            residual_norm: y_norm_sq.sqrt(),
            primal_residual: 0.0,
            dual_residual: 0.0,
        });
    }
    let proj = Projector::new(p)?;
    let infeasible = proj.infeasible(y_norm_sq);
    if infeasible {
        log::warn!(
            "noise bound {:.3e} below distance {:.3e} from y to range(A); returning a least-squares point",
            p.e_bound,
            proj.y_perp_sq.sqrt()
        );
    }
    let scale = proj.least_squares_norm();
    let mut kappa = opts.threshold_factor * scale / (m as f64).sqrt();
    let max_iter = opts
        .max_iterations
        .unwrap_or((100 * m).max(MIN_ITERATION_CAP));
    log::trace!(
        "bpdn: m = {m}, sigma_max = {:.3e}, kappa = {kappa:.3e}",
        proj.sigma_max()
    );

    let zero = C64::new(0.0, 0.0);
    let mut x = vec![zero; m];
    let mut w = vec![zero; m];
    let mut u = vec![zero; m];
    let mut buf = vec![zero; m];
    let mut coeffs = Vec::with_capacity(proj.sigma.len());
    let (mut primal, mut dual) = (f64::INFINITY, f64::INFINITY);
    let mut iterations = 0;
    let mut converged = false;
    let mut rebalances = 0;
    let polish_enabled = p.e_bound > 0.0 && !infeasible;
    let mut last_support: Vec<usize> = Vec::new();
    let abs_floor = 1e-15 * scale.max(f64::MIN_POSITIVE);
    while iterations < max_iter {
        iterations += 1;
        for ((b, wi), ui) in buf.iter_mut().zip(&w).zip(&u) {
            *b = wi - ui;
        }
        proj.project(&buf, &mut x, &mut coeffs);
        let mut primal_sq = 0.0;
        let mut dual_sq = 0.0;
        for i in 0..m {
            let next = soft_threshold(x[i] + u[i], kappa);
            dual_sq += (next - w[i]).norm_sqr();
            w[i] = next;
            let r = x[i] - w[i];
            primal_sq += r.norm_sqr();
            u[i] += r;
        }
        primal = primal_sq.sqrt();
        dual = dual_sq.sqrt();
        if polish_enabled && iterations % POLISH_INTERVAL == 0 {
            // Candidate supports: the nonzeros of the thresholded iterate,
            // and every index where the scaled multiplier is nearly tight.
            let support: Vec<usize> = (0..m).filter(|&i| w[i] != zero).collect();
            let tight: Vec<usize> = (0..m)
                .filter(|&i| u[i].norm() >= (1.0 - TIGHT_MARGIN) * kappa)
                .collect();
            if support == last_support {
                if let Some(sol) = polish(p, &w, &support) {
                    return Ok(BpdnSolution {
                        iterations,
                        infeasible,
                        ..sol
                    });
                }
            }
            if tight != support && tight.len() <= p.a.rows() {
                let start: Vec<C64> = (0..m)
                    .map(|i| if w[i] != zero { w[i] } else { x[i] })
                    .collect();
                if let Some(sol) = polish(p, &start, &tight) {
                    return Ok(BpdnSolution {
                        iterations,
                        infeasible,
                        ..sol
                    });
                }
            }
            last_support = support;
        }
        let primal_ref = norm(&x).max(norm(&w));
        let dual_ref = norm(&u);
        if primal <= opts.tol * primal_ref + abs_floor && dual <= opts.tol * dual_ref + abs_floor {
            converged = true;
            break;
        }
        // Residual balancing: shrink the threshold when the constraint lags,
        // grow it when the iterates stall. The scaled multiplier u = kappa *
        // lambda is rescaled with it.
        if rebalances < MAX_REBALANCES {
            let (rp, rd) = (
                primal / primal_ref.max(abs_floor),
                dual / dual_ref.max(abs_floor),
            );
            let factor = if rp > BALANCE_RATIO * rd {
                0.5
            } else if rd > BALANCE_RATIO * rp {
                2.0
            } else {
                1.0
            };
            if factor != 1.0 {
                kappa *= factor;
                u.iter_mut().for_each(|v| *v *= factor);
                rebalances += 1;
            }
        }
    }
    if !converged {
        return Err(RecoveryError::NoConvergence {
            iterations,
            primal,
            dual,
        });
    }
    proj.project(&w, &mut x, &mut coeffs);
    let residual: Vec<C64> =
        p.a.matvec(&x)
            .iter()
            .zip(p.y.as_slice())
            .map(|(a, b)| a - b)
            .collect();
    Ok(BpdnSolution {
        x: CVector::from_vec_unchecked(x),
        iterations,
        infeasible,
        residual_norm: norm(&residual),
        primal_residual: primal,
        dual_residual: dual,
    })
}

/// Newton refinement on the KKT system of the problem restricted to
/// `support`, accepted only with a certificate of global optimality.
///
/// On the support, optimality reads `x_i / |x_i| = t [A_S^H (y - A_S x)]_i`
/// with `||A_S x - y|| = E` and `t > 0`; off the support the same multiplier
/// must satisfy `t |[A^H (y - A x)]_j| <= 1`.
fn polish(p: &BpdnProblem, start: &[C64], support: &[usize]) -> Option<BpdnSolution> {
    let s = support.len();
    if s == 0 || s > p.a.rows() {
        return None;
    }
    let a_s = p.a.select_columns(support);
    let y = p.y.as_slice();
    let mut x: Vec<C64> = support.iter().map(|&i| start[i]).collect();
    let residual =
        |x: &[C64]| -> Vec<C64> { a_s.matvec(x).iter().zip(y).map(|(f, v)| f - v).collect() };
    let gram = a_s.gram();

    let g = a_s.adjoint_matvec(&residual(&x));
    let (num, den) = x.iter().zip(&g).fold((0.0, 0.0), |(n, d), (xi, gi)| {
        (n - (xi / xi.norm() * gi.conj()).re, d + gi.norm_sqr())
    });
    if den == 0.0 {
        return None;
    }
    let mut t = num / den;
    let e_sq = p.e_bound * p.e_bound;
    let dim = 2 * s + 1;
    let mut converged = false;
    for _ in 0..POLISH_NEWTON_STEPS {
        if t <= 0.0 || x.iter().any(|v| v.norm() == 0.0) {
            return None;
        }
        let r = residual(&x);
        let q = a_s.adjoint_matvec(&r);
        let mut f = vec![0.0; dim];
        let mut jac = vec![vec![0.0; dim]; dim];
        for i in 0..s {
            let mag = x[i].norm();
            let unit = x[i] / mag;
            let fi = unit + q[i] * t;
            f[2 * i] = fi.re;
            f[2 * i + 1] = fi.im;
            for j in 0..s {
                for (part, h) in [(0, C64::new(1.0, 0.0)), (1, C64::new(0.0, 1.0))] {
                    let mut d = gram[(i, j)] * h * t;
                    if i == j {
                        d += (h - unit * (unit.conj() * h).re) / mag;
                    }
                    jac[2 * i][2 * j + part] = d.re;
                    jac[2 * i + 1][2 * j + part] = d.im;
                }
            }
            jac[2 * i][2 * s] = q[i].re;
            jac[2 * i + 1][2 * s] = q[i].im;
            jac[2 * s][2 * i] = q[i].re;
            jac[2 * s][2 * i + 1] = q[i].im;
        }
        f[2 * s] = 0.5 * (norm_sqr(&r) - e_sq);
        let scale_f = 1.0 + t * q.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let f_norm = f[..2 * s].iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if f_norm <= POLISH_TOL * scale_f
            && f[2 * s].abs() <= POLISH_TOL * e_sq.max(f64::MIN_POSITIVE)
        {
            converged = true;
            break;
        }
        let step = solve_dense(jac, f.iter().map(|v| -v).collect())?;
        let mut rel_step = (step[2 * s] / t).abs();
        for i in 0..s {
            let delta = C64::new(step[2 * i], step[2 * i + 1]);
            rel_step = rel_step.max(delta.norm() / x[i].norm());
            x[i] += delta;
        }
        t += step[2 * s];
        // Rounding in y - A x limits how small the residual can get once
        // the constraint ball is tiny; a vanishing Newton step is then the
        // signal to stop.
        if rel_step <= POLISH_TOL && f_norm <= POLISH_STALL_TOL * scale_f {
            converged = true;
            break;
        }
    }
    if !converged {
        return None;
    }

    let mut full = vec![C64::new(0.0, 0.0); p.a.cols()];
    for (&col, &v) in support.iter().zip(&x) {
        full[col] = v;
    }
    let r: Vec<C64> =
        p.a.matvec(&full)
            .iter()
            .zip(y)
            .map(|(f, v)| f - v)
            .collect();
    let residual_norm = norm(&r);
    if residual_norm > p.e_bound * (1.0 + 1e-9) {
        return None;
    }
    let corr = p.a.adjoint_matvec(&r);
    let worst = (0..p.a.cols())
        .filter(|j| support.binary_search(j).is_err())
        .map(|j| t * corr[j].norm())
        .fold(0.0_f64, f64::max);
    if worst > 1.0 + POLISH_CERTIFICATE_SLACK {
        return None;
    }
    Some(BpdnSolution {
        x: CVector::from_vec_unchecked(full),
        iterations: 0,
        infeasible: false,
        residual_norm,
        primal_residual: 0.0,
        dual_residual: 0.0,
    })
}

const POLISH_NEWTON_STEPS: usize = 50;
const POLISH_TOL: f64 = 1e-12;
const POLISH_STALL_TOL: f64 = 1e-6;
const POLISH_CERTIFICATE_SLACK: f64 = 1e-9;

/// Gaussian elimination with partial pivoting; `None` when singular.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor != 0.0 {
                for k in col..n {
                    a[row][k] -= factor * a[col][k];
                }
                b[row] -= factor * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let acc: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - acc) / a[row][row];
    }
    Some(x)
}
