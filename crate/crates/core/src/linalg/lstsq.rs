use super::{norm, CMatrix, CVector, LinalgError, Result, C64};

/// Relative threshold on `|R_jj| / |R_00|` below which a column is treated
/// as linearly dependent.
const RANK_TOL: f64 = 1e-12;

/// Householder reflector `I - 2 v v^H` acting on indices `offset..`.
struct Reflector {
    offset: usize,
    v: Vec<C64>,
}

impl Reflector {
    /// Builds the reflector sending `x` to `alpha e_1`; `None` when `x == 0`.
    fn annihilate(x: &[C64], offset: usize) -> Option<(Self, C64)> {
        let xnorm = norm(x);
        if xnorm == 0.0 {
            return None;
        }
        let x0 = x[0];
        let phase = if x0.norm() == 0.0 {
            C64::new(1.0, 0.0)
        } else {
            x0 / x0.norm()
        };
        let alpha = -phase * xnorm;
        let mut v = x.to_vec();
        v[0] -= alpha;
        let vn = norm(&v);
        v.iter_mut().for_each(|z| *z /= vn);
        Some((Self { offset, v }, alpha))
    }

    fn apply(&self, y: &mut [C64]) {
        let seg = &mut y[self.offset..self.offset + self.v.len()];
        let s: C64 = self
            .v
            .iter()
            .zip(seg.iter())
            .map(|(a, b)| a.conj() * b)
            .sum();
        for (yi, vi) in seg.iter_mut().zip(&self.v) {
            *yi -= 2.0 * s * vi;
        }
    }
}

/// Column-pivoted Householder QR; `r` holds the upper trapezoid in place.
struct PivotedQr {
    r: CMatrix,
    reflectors: Vec<Reflector>,
    perm: Vec<usize>,
    rank: usize,
}

fn pivoted_qr(a: &CMatrix, pivot: bool) -> PivotedQr {
    let (m, n) = (a.rows(), a.cols());
    let mut r = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut reflectors = Vec::new();
    let steps = m.min(n);
    let mut col = vec![C64::new(0.0, 0.0); m];

    for j in 0..steps {
        if pivot {
            let mut best = j;
            let mut best_norm = -1.0;
            for c in j..n {
                let cn: f64 = (j..m).map(|i| r[(i, c)].norm_sqr()).sum();
                if cn > best_norm {
                    best_norm = cn;
                    best = c;
                }
            }
            if best != j {
                for i in 0..m {
                    let tmp = r[(i, j)];
                    r[(i, j)] = r[(i, best)];
                    r[(i, best)] = tmp;
                }
                perm.swap(j, best);
            }
        }
        let x: Vec<C64> = (j..m).map(|i| r[(i, j)]).collect();
        let Some((refl, alpha)) = Reflector::annihilate(&x, j) else {
            continue;
        };
        for c in j + 1..n {
            for i in 0..m {
                col[i] = r[(i, c)];
            }
            refl.apply(&mut col);
            for i in j..m {
                r[(i, c)] = col[i];
            }
        }
        r[(j, j)] = alpha;
        for i in j + 1..m {
            r[(i, j)] = C64::new(0.0, 0.0);
        }
        reflectors.push(refl);
    }

    let lead = if steps > 0 { r[(0, 0)].norm() } else { 0.0 };
    let rank = if lead == 0.0 {
        0
    } else {
        (0..steps)
            .take_while(|&j| r[(j, j)].norm() > RANK_TOL * lead)
            .count()
    };
    PivotedQr {
        r,
        reflectors,
        perm,
        rank,
    }
}

/// Minimizer of `||a v - y||_2`, the minimum-norm one when `a` is rank deficient.
pub fn least_squares(a: &CMatrix, y: &CVector) -> Result<CVector> {
    if a.rows() != y.len() {
        return Err(LinalgError::DimensionMismatch {
            expected: a.rows(),
            got: y.len(),
        });
    }
    let n = a.cols();
    if n == 0 {
        return Err(LinalgError::Empty);
    }
    let qr = pivoted_qr(a, true);
    let mut c = y.as_slice().to_vec();
    for refl in &qr.reflectors {
        refl.apply(&mut c);
    }
    let rank = qr.rank;
    let mut w = vec![C64::new(0.0, 0.0); n];
    if rank == n {
        for i in (0..n).rev() {
            let mut acc = c[i];
            for j in i + 1..n {
                acc -= qr.r[(i, j)] * w[j];
            }
            w[i] = acc / qr.r[(i, i)];
        }
    } else if rank > 0 {
        // R1 = [R11 R12] (rank x n). With R1^H = Q2 R2 we get R1 = R2^H Q2^H,
        // and the minimum-norm solution of R1 w = c is w = Q2 (R2^{-H} c).
        let r1h = CMatrix::from_fn(n, rank, |i, j| qr.r[(j, i)].conj());
        let inner = pivoted_qr(&r1h, false);
        let mut t = vec![C64::new(0.0, 0.0); n];
        for i in 0..rank {
            let mut acc = c[i];
            for j in 0..i {
                acc -= inner.r[(j, i)].conj() * t[j];
            }
            let diag = inner.r[(i, i)].conj();
            t[i] = if diag.norm() == 0.0 {
                C64::new(0.0, 0.0)
            } else {
                acc / diag
            };
        }
        for refl in inner.reflectors.iter().rev() {
            refl.apply(&mut t);
        }
        w = t;
    }
    let mut x = vec![C64::new(0.0, 0.0); n];
    for (j, &p) in qr.perm.iter().enumerate() {
        x[p] = w[j];
    }
    Ok(CVector::from_vec_unchecked(x))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn identity_system() {
        let a = CMatrix::identity(2);
        let y = CVector::new(vec![c(3.0, 0.0), c(0.0, 4.0)]).unwrap();
        let x = least_squares(&a, &y).unwrap();
        assert!((x[0] - c(3.0, 0.0)).norm() < 1e-15);
        assert!((x[1] - c(0.0, 4.0)).norm() < 1e-15);
    }

    #[test]
    fn mean_of_two_points() {
        let a = CMatrix::from_real_rows(&[vec![1.0], vec![1.0]]).unwrap();
        let y = CVector::from_real(&[0.0, 2.0]).unwrap();
        let x = least_squares(&a, &y).unwrap();
        assert!((x[0] - c(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn rank_deficient_gives_minimum_norm() {
        // Two identical columns: every (s, t) with s + t = 2 fits exactly;
        // minimum norm is (1, 1).
        let a = CMatrix::from_real_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let y = CVector::from_real(&[2.0, 2.0]).unwrap();
        let x = least_squares(&a, &y).unwrap();
        assert!((x[0] - c(1.0, 0.0)).norm() < 1e-12, "{x:?}");
        assert!((x[1] - c(1.0, 0.0)).norm() < 1e-12, "{x:?}");
    }

    #[test]
    fn zero_matrix_gives_zero() {
        let a = CMatrix::zeros(3, 2);
        let y = CVector::from_real(&[1.0, 2.0, 3.0]).unwrap();
        let x = least_squares(&a, &y).unwrap();
        assert_eq!(x.norm(), 0.0);
    }

    #[test]
    fn dimension_mismatch() {
        let a = CMatrix::identity(3);
        let y = CVector::from_real(&[1.0, 2.0]).unwrap();
        assert_eq!(
            least_squares(&a, &y),
            Err(LinalgError::DimensionMismatch {
                expected: 3,
                got: 2
            })
        );
    }
}
