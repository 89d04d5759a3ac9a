//! Hermitian eigensolvers.
//!
//! The dense path reduces the matrix to real symmetric tridiagonal form with
//! complex Householder reflections, then runs implicit QL with the rotations
//! accumulated into the complex basis. The iterative path (shifted power
//! iteration with deflation) is kept as an independent route for large,
//! well-separated spectra.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{norm, norm_sqr, CMatrix, CVector, LinalgError, Result, C64, HERMITIAN_TOL};

const RESIDUAL_TOL: f64 = 1e-10;
const QL_MAX_SWEEPS: usize = 60;
const RESTART_SEED: u64 = 0x5eed_e16e;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    Smallest,
    SecondSmallest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EigenStrategy {
    /// Dense decomposition at every size.
    #[default]
    Auto,
    Dense,
    /// Power iteration on `sigma I - m` with `sigma = ||m||_F`, deflating
    /// previously found eigenvectors.
    ShiftDeflate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub value: f64,
    pub vector: CVector,
}

/// Full eigendecomposition, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors, `vectors[i]` belongs to `values[i]`.
    pub vectors: Vec<CVector>,
}

fn validate(m: &CMatrix) -> Result<()> {
    if m.rows() == 0 {
        return Err(LinalgError::Empty);
    }
    if let Some(i) = m
        .data()
        .iter()
        .position(|z| !z.re.is_finite() || !z.im.is_finite())
    {
        return Err(LinalgError::NonFinite(i));
    }
    m.check_hermitian(HERMITIAN_TOL)
}

pub fn hermitian_eigen(m: &CMatrix) -> Result<HermitianEigen> {
    validate(m)?;
    dense_eigen(m)
}

pub fn hermitian_extreme_eigenpair(m: &CMatrix, which: Which) -> Result<EigenPair> {
    hermitian_extreme_eigenpair_with(m, which, EigenStrategy::Auto)
}

pub fn hermitian_extreme_eigenpair_with(
    m: &CMatrix,
    which: Which,
    strategy: EigenStrategy,
) -> Result<EigenPair> {
    validate(m)?;
    let n = m.rows();
    if which == Which::SecondSmallest && n < 2 {
        return Err(LinalgError::InvalidArgument(
            "second smallest eigenpair needs dimension >= 2".into(),
        ));
    }
    let pair = match strategy {
        EigenStrategy::Auto | EigenStrategy::Dense => {
            let eig = dense_eigen(m)?;
            let idx = match which {
                Which::Smallest => 0,
                Which::SecondSmallest => 1,
            };
            EigenPair {
                value: eig.values[idx],
                vector: eig.vectors[idx].clone(),
            }
        }
        EigenStrategy::ShiftDeflate => {
            let first = shifted_power(m, &[])?;
            match which {
                Which::Smallest => first,
                Which::SecondSmallest => shifted_power(m, &[first.vector])?,
            }
        }
    };
    let residual = eigen_residual(m, &pair);
    let bound = RESIDUAL_TOL * (1.0 + m.frobenius_norm());
    if residual > bound {
        return Err(LinalgError::NoConvergence {
            iterations: 0,
            residual,
        });
    }
    Ok(pair)
}

/// `||m u - lambda u||_2`.
pub(crate) fn eigen_residual(m: &CMatrix, pair: &EigenPair) -> f64 {
    let mu = m.matvec(pair.vector.as_slice());
    let diff: Vec<C64> = mu
        .iter()
        .zip(pair.vector.iter())
        .map(|(a, u)| a - u * pair.value)
        .collect();
    norm(&diff)
}

fn dense_eigen(m: &CMatrix) -> Result<HermitianEigen> {
    let n = m.rows();
    if n == 1 {
        return Ok(HermitianEigen {
            values: vec![m[(0, 0)].re],
            vectors: vec![CVector::basis(1, 0)],
        });
    }
    let (diag, offdiag, mut basis) = tridiagonalize(m);
    let mut d = diag;
    let mut e = offdiag;
    tql2(&mut d, &mut e, &mut basis)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]).then(a.cmp(&b)));
    let values = order.iter().map(|&i| d[i]).collect();
    let vectors = order
        .iter()
        .map(|&i| CVector::from_vec_unchecked(basis[i * n..(i + 1) * n].to_vec()))
        .collect();
    Ok(HermitianEigen { values, vectors })
}

/// Reduces `m` to a real symmetric tridiagonal matrix.
///
/// Returns `(diag, offdiag, wt)` where `offdiag[k]` couples `k` and `k+1`
/// (`offdiag[n-1] == 0`) and row `j` of the row-major `wt` is the `j`-th
/// column of the unitary `W` with `m = W T W^H`.
fn tridiagonalize(m: &CMatrix) -> (Vec<f64>, Vec<f64>, Vec<C64>) {
    let n = m.rows();
    let zero = C64::new(0.0, 0.0);
    let mut a: Vec<C64> = m.data().to_vec();
    let mut reflectors: Vec<Option<Vec<C64>>> = Vec::with_capacity(n.saturating_sub(2));
    let mut p = vec![zero; n];

    for k in 0..n.saturating_sub(2) {
        let len = n - k - 1;
        let x: Vec<C64> = (0..len).map(|r| a[(k + 1 + r) * n + k]).collect();
        let xnorm = norm(&x);
        if xnorm == 0.0 {
            reflectors.push(None);
            continue;
        }
        let x0 = x[0];
        let phase = if x0.norm() == 0.0 {
            C64::new(1.0, 0.0)
        } else {
            x0 / x0.norm()
        };
        let alpha = -phase * xnorm;
        let mut v = x;
        v[0] -= alpha;
        let vn = norm(&v);
        for vi in v.iter_mut() {
            *vi /= vn;
        }

        // Two-sided update of the trailing block: B <- B - v q^H - q v^H.
        let off = k + 1;
        for r in 0..len {
            let row = &a[(off + r) * n + off..(off + r) * n + n];
            p[r] = row.iter().zip(&v).map(|(b, vi)| b * vi).sum();
        }
        let kappa: f64 = v
            .iter()
            .zip(&p[..len])
            .map(|(vi, pi)| (vi.conj() * pi).re)
            .sum();
        let q: Vec<C64> = (0..len).map(|r| 2.0 * p[r] - 2.0 * kappa * v[r]).collect();
        for r in 0..len {
            let vr = v[r];
            let qr = q[r];
            let row = &mut a[(off + r) * n + off..(off + r) * n + n];
            for (c, b) in row.iter_mut().enumerate() {
                *b -= vr * q[c].conj() + qr * v[c].conj();
            }
        }
        a[(k + 1) * n + k] = alpha;
        a[k * n + k + 1] = alpha.conj();
        for r in 1..len {
            a[(k + 1 + r) * n + k] = zero;
            a[k * n + k + 1 + r] = zero;
        }
        reflectors.push(Some(v));
    }

    // Q = H_0 H_1 ... H_{n-3}, built right to left.
    let mut q = vec![zero; n * n];
    for i in 0..n {
        q[i * n + i] = C64::new(1.0, 0.0);
    }
    let mut s = vec![zero; n];
    for (k, refl) in reflectors.iter().enumerate().rev() {
        let Some(v) = refl else { continue };
        let off = k + 1;
        s.iter_mut().for_each(|z| *z = zero);
        for (r, vr) in v.iter().enumerate() {
            let row = &q[(off + r) * n..(off + r + 1) * n];
            let vc = vr.conj();
            for (sc, qv) in s.iter_mut().zip(row) {
                *sc += vc * qv;
            }
        }
        for (r, vr) in v.iter().enumerate() {
            let row = &mut q[(off + r) * n..(off + r + 1) * n];
            let f = 2.0 * vr;
            for (qv, sc) in row.iter_mut().zip(&s) {
                *qv -= f * sc;
            }
        }
    }

    // Diagonal phase change making the off-diagonal real and non-negative.
    let diag: Vec<f64> = (0..n).map(|i| a[i * n + i].re).collect();
    let mut offdiag = vec![0.0; n];
    let mut phases = vec![C64::new(1.0, 0.0); n];
    for k in 0..n - 1 {
        let beta = a[(k + 1) * n + k];
        let mag = beta.norm();
        offdiag[k] = mag;
        phases[k + 1] = if mag == 0.0 {
            phases[k]
        } else {
            phases[k] * beta / mag
        };
    }
    let mut wt = vec![zero; n * n];
    for j in 0..n {
        for i in 0..n {
            wt[j * n + i] = q[i * n + j] * phases[j];
        }
    }
    (diag, offdiag, wt)
}

/// Implicit QL on a symmetric tridiagonal matrix, rotating the rows of `wt`.
fn tql2(d: &mut [f64], e: &mut [f64], wt: &mut [C64]) -> Result<()> {
    let n = d.len();
    let eps = f64::EPSILON;
    let mut f = 0.0;
    let mut tst1 = 0.0_f64;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut sweeps = 0;
            loop {
                sweeps += 1;
                if sweeps > QL_MAX_SWEEPS {
                    return Err(LinalgError::NoConvergence {
                        iterations: sweeps,
                        residual: e[l].abs(),
                    });
                }
                let g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    let (lo, hi) = wt.split_at_mut((i + 1) * n);
                    let row_i = &mut lo[i * n..];
                    let row_next = &mut hi[..n];
                    for (vi, vn) in row_i.iter_mut().zip(row_next.iter_mut()) {
                        let hv = *vn;
                        *vn = *vi * s + hv * c;
                        *vi = *vi * c - hv * s;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

fn harmonic_start(n: usize) -> Vec<C64> {
    let mut v: Vec<C64> = (0..n)
        .map(|i| C64::new(1.0 / (i as f64 + 1.0), 0.0))
        .collect();
    let nv = norm(&v);
    v.iter_mut().for_each(|z| *z /= nv);
    v
}

fn project_out(v: &mut [C64], known: &[CVector]) {
    for u in known {
        let c: C64 = u.iter().zip(v.iter()).map(|(a, b)| a.conj() * b).sum();
        for (vi, ui) in v.iter_mut().zip(u.iter()) {
            *vi -= c * ui;
        }
    }
}

fn shifted_power(m: &CMatrix, known: &[CVector]) -> Result<EigenPair> {
    let n = m.rows();
    let fro = m.frobenius_norm();
    let sigma = fro;
    let tol = RESIDUAL_TOL * (1.0 + fro);
    let cap = 50 * n;
    let mut rng = ChaCha8Rng::seed_from_u64(RESTART_SEED);

    let mut v = harmonic_start(n);
    project_out(&mut v, known);
    if norm(&v) < 1e-8 {
        v = random_unit(n, &mut rng);
        project_out(&mut v, known);
    }
    normalize(&mut v);

    let mut last_residual = f64::INFINITY;
    let mut stagnant = 0;
    let mut residual = f64::INFINITY;
    for _ in 0..cap {
        let mv = m.matvec(&v);
        let lambda: f64 = v.iter().zip(&mv).map(|(a, b)| (a.conj() * b).re).sum();
        residual = norm(
            &mv.iter()
                .zip(&v)
                .map(|(a, b)| a - b * lambda)
                .collect::<Vec<_>>(),
        );
        if residual <= tol {
            return Ok(EigenPair {
                value: lambda,
                vector: CVector::from_vec_unchecked(v),
            });
        }
        if residual > 0.999 * last_residual {
            stagnant += 1;
        } else {
            stagnant = 0;
        }
        last_residual = residual;
        let mut next: Vec<C64> = v.iter().zip(&mv).map(|(a, b)| a * sigma - b).collect();
        project_out(&mut next, known);
        if norm_sqr(&next) == 0.0 || stagnant > n {
            next = random_unit(n, &mut rng);
            project_out(&mut next, known);
            stagnant = 0;
        }
        normalize(&mut next);
        v = next;
    }
    Err(LinalgError::NoConvergence {
        iterations: cap,
        residual,
    })
}

fn random_unit(n: usize, rng: &mut ChaCha8Rng) -> Vec<C64> {
    let mut v: Vec<C64> = (0..n)
        .map(|_| C64::new(StandardNormal.sample(rng), StandardNormal.sample(rng)))
        .collect();
    normalize(&mut v);
    v
}

fn normalize(v: &mut [C64]) {
    let nv = norm(v);
    if nv > 0.0 {
        v.iter_mut().for_each(|z| *z /= nv);
    }
}
