use super::Matrix;
use crate::error::Result;
use crate::scalar::{dot_fast, Scalar};

const MAX_SWEEPS: usize = 100;

/// Eigenvalues sorted descending with matching orthonormal eigenvector columns.
#[derive(Clone, Debug)]
pub struct EigenDecomposition<T> {
    pub values: Vec<T>,
    pub vectors: Matrix<T>,
}

impl<T: Scalar> EigenDecomposition<T> {
    pub fn vector(&self, i: usize) -> Vec<T> {
        self.vectors.col(i)
    }

    /// `V·Λ·Vᵀ`.
    pub fn reconstruct(&self) -> Matrix<T> {
        let n = self.vectors.rows();
        let k = self.values.len();
        Matrix::from_fn(n, n, |i, j| {
            (0..k)
                .map(|c| self.vectors[(i, c)] * self.values[c] * self.vectors[(j, c)])
                .sum()
        })
    }
}

/// Full symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Sweeps stop once the off-diagonal Frobenius norm drops to `1e-12·‖A‖_F`.
pub fn eig_sym<T: Scalar>(a: &Matrix<T>) -> Result<EigenDecomposition<T>> {
    a.check_symmetric(1e-10)?;
    let (values, vectors) = jacobi(a, true);
    let vectors = vectors.expect("vectors requested");
    Ok(sorted(values, vectors))
}

/// Eigenvalues only, descending.
///
/// Householder reduction to tridiagonal form, then implicit-shift QL; falls
/// back to Jacobi if QL stalls.
pub fn eigvals_sym<T: Scalar>(a: &Matrix<T>) -> Result<Vec<T>> {
    a.check_symmetric(1e-10)?;
    let (d, e) = tridiagonalize(a);
    let mut values = tridiagonal_ql(d, e).unwrap_or_else(|| jacobi(a, false).0);
    values.sort_by(|x, y| y.partial_cmp(x).unwrap_or(std::cmp::Ordering::Equal));
    Ok(values)
}

/// Diagonal `d` and subdiagonal `e` (`e[i]` couples `i` and `i + 1`, last
/// entry zero) of a tridiagonal matrix similar to the symmetrized input.
fn tridiagonalize<T: Scalar>(input: &Matrix<T>) -> (Vec<T>, Vec<T>) {
    let n = input.rows();
    let mut a: Vec<T> = input.as_slice().to_vec();
    for i in 0..n {
        for j in (i + 1)..n {
            let m = (a[i * n + j] + a[j * n + i]) * T::lit(0.5);
            a[i * n + j] = m;
            a[j * n + i] = m;
        }
    }
    let mut d = vec![T::zero(); n];
    let mut e = vec![T::zero(); n];
    let mut v = vec![T::zero(); n];
    let mut p = vec![T::zero(); n];
    for k in 0..n.saturating_sub(2) {
        d[k] = a[k * n + k];
        let lo = k + 1;
        let norm = (lo..n).map(|i| a[i * n + k] * a[i * n + k]).sum::<T>().sqrt();
        if norm == T::zero() {
            continue;
        }
        let x0 = a[lo * n + k];
        let alpha = if x0 > T::zero() { -norm } else { norm };
        e[k] = alpha;
        for i in lo..n {
            v[i] = a[i * n + k];
        }
        v[lo] = v[lo] - alpha;
        let vv = (lo..n).map(|i| v[i] * v[i]).sum::<T>();
        if vv == T::zero() {
            continue;
        }
        let beta = T::lit(2.0) / vv;
        // A₂₂ ← H·A₂₂·H with H = I − β·v·vᵀ, as A₂₂ − v·qᵀ − q·vᵀ
        for i in lo..n {
            p[i] = beta * dot_fast(&a[i * n + lo..i * n + n], &v[lo..n]);
        }
        let kk = beta * T::lit(0.5) * dot_fast(&v[lo..n], &p[lo..n]);
        for i in lo..n {
            p[i] = p[i] - kk * v[i];
        }
        for i in lo..n {
            let (vi, qi) = (v[i], p[i]);
            for j in lo..n {
                a[i * n + j] = a[i * n + j] - vi * p[j] - qi * v[j];
            }
        }
    }
    if n >= 2 {
        d[n - 2] = a[(n - 2) * n + n - 2];
        e[n - 2] = a[(n - 1) * n + n - 2];
    }
    if n >= 1 {
        d[n - 1] = a[n * n - 1];
    }
    (d, e)
}

/// Implicit-shift QL on a symmetric tridiagonal matrix; `None` if some
/// eigenvalue needs more than 60 sweeps.
fn tridiagonal_ql<T: Scalar>(mut d: Vec<T>, mut e: Vec<T>) -> Option<Vec<T>> {
    let n = d.len();
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= T::epsilon() * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return None;
            }
            let mut g = (d[l + 1] - d[l]) / (T::lit(2.0) * e[l]);
            let r = g.hypot(T::one());
            g = d[m] - d[l] + e[l] / (g + if g >= T::zero() { r } else { -r });
            let (mut s, mut c, mut p) = (T::one(), T::one(), T::zero());
            let mut deflated = false;
            for i in (l..m).rev() {
                let f = s * e[i];
                let b = c * e[i];
                let r = f.hypot(g);
                e[i + 1] = r;
                if r == T::zero() {
                    d[i + 1] = d[i + 1] - p;
                    e[m] = T::zero();
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                let r = (d[i] - g) * s + T::lit(2.0) * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if deflated {
                continue;
            }
            d[l] = d[l] - p;
            e[l] = g;
            e[m] = T::zero();
        }
    }
    Some(d)
}

fn jacobi<T: Scalar>(input: &Matrix<T>, want_vectors: bool) -> (Vec<T>, Option<Matrix<T>>) {
    let n = input.rows();
    let mut a = input.clone();
    // symmetrize so the rotations see an exactly symmetric matrix
    for i in 0..n {
        for j in (i + 1)..n {
            let m = (a[(i, j)] + a[(j, i)]) * T::lit(0.5);
            a[(i, j)] = m;
            a[(j, i)] = m;
        }
    }
    let mut v = want_vectors.then(|| Matrix::identity(n));
    let threshold = T::tol(1e-12) * a.frobenius();

    for _ in 0..MAX_SWEEPS {
        let off: T = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum::<T>()
            .sqrt();
        if off <= threshold {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (T::lit(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                a[(p, q)] = T::zero();
                a[(q, p)] = T::zero();
                if let Some(v) = v.as_mut() {
                    for k in 0..n {
                        let vkp = v[(k, p)];
                        let vkq = v[(k, q)];
                        v[(k, p)] = c * vkp - s * vkq;
                        v[(k, q)] = s * vkp + c * vkq;
                    }
                }
            }
        }
    }
    ((0..n).map(|i| a[(i, i)]).collect(), v)
}

fn sorted<T: Scalar>(values: Vec<T>, vectors: Matrix<T>) -> EigenDecomposition<T> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| {
        values[y]
            .partial_cmp(&values[x])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let rows = vectors.rows();
    let mut out = Matrix::zeros(rows, order.len());
    for (c, &src) in order.iter().enumerate() {
        let mut col = vectors.col(src);
        canonical_sign(&mut col);
        out.set_col(c, &col);
    }
    EigenDecomposition {
        values: order.iter().map(|&i| values[i]).collect(),
        vectors: out,
    }
}

/// Flips `v` so its largest-magnitude entry is positive.
pub(crate) fn canonical_sign<T: Scalar>(v: &mut [T]) {
    let mut best = T::zero();
    let mut sign = T::one();
    for &x in v.iter() {
        if x.abs() > best {
            best = x.abs();
            sign = x.signum();
        }
    }
    if sign < T::zero() {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Largest `k` eigenpairs (algebraic order).
///
/// Small matrices go through [`eig_sym`]. Larger ones use block orthogonal
/// iteration with Rayleigh–Ritz extraction, which resolves the top pairs when
/// they dominate the spectrum in magnitude, as for the double-centered Gram
/// matrices of classical scaling.
pub fn top_eigenpairs<T: Scalar>(a: &Matrix<T>, k: usize) -> Result<EigenDecomposition<T>> {
    a.check_symmetric(1e-10)?;
    let n = a.rows();
    let k = k.min(n);
    if n <= 200 {
        let full = eig_sym(a)?;
        let mut vectors = Matrix::zeros(n, k);
        for c in 0..k {
            vectors.set_col(c, &full.vectors.col(c));
        }
        return Ok(EigenDecomposition {
            values: full.values[..k].to_vec(),
            vectors,
        });
    }
    let p = (k + 6).min(n);
    // deterministic, well-spread starting block
    let mut q = Matrix::from_fn(n, p, |i, j| {
        let x = ((i * 7919 + j * 104_729 + 13) % 1009) as f64 / 1009.0 - 0.5;
        T::lit(x + if i % p == j { 1.0 } else { 0.0 })
    });
    orthonormalize(&mut q);
    let scale = a.frobenius().max(T::min_positive_value());
    let mut prev: Vec<T> = vec![T::zero(); k];
    let mut ritz = EigenDecomposition {
        values: vec![],
        vectors: Matrix::zeros(n, 0),
    };
    for iter in 0..2000 {
        let z = a.matmul(&q)?;
        // Rayleigh–Ritz on span(Q)
        let h = q.t_matmul(&z)?;
        let h = Matrix::from_fn(p, p, |i, j| (h[(i, j)] + h[(j, i)]) * T::lit(0.5));
        let small = eig_sym(&h)?;
        let qw = q.matmul(&small.vectors)?;
        let values = small.values.clone();
        let converged = iter > 0
            && values[..k]
                .iter()
                .zip(&prev)
                .all(|(&v, &pv)| (v - pv).abs() <= T::tol(1e-13) * scale);
        prev = values[..k].to_vec();
        ritz = EigenDecomposition {
            values,
            vectors: qw,
        };
        if converged {
            break;
        }
        q = z.matmul(&small.vectors)?;
        orthonormalize(&mut q);
    }
    let mut vectors = Matrix::zeros(n, k);
    for c in 0..k {
        let mut col = ritz.vectors.col(c);
        canonical_sign(&mut col);
        vectors.set_col(c, &col);
    }
    Ok(EigenDecomposition {
        values: ritz.values[..k].to_vec(),
        vectors,
    })
}

/// Modified Gram–Schmidt on the columns, applied twice.
fn orthonormalize<T: Scalar>(q: &mut Matrix<T>) {
    let mut cols: Vec<Vec<T>> = (0..q.cols()).map(|j| q.col(j)).collect();
    for _ in 0..2 {
        for j in 0..cols.len() {
            for i in 0..j {
                let (head, tail) = cols.split_at_mut(j);
                let r = dot_fast(&head[i], &tail[0]);
                for (x, &y) in tail[0].iter_mut().zip(&head[i]) {
                    *x -= r * y;
                }
            }
            let nrm = dot_fast(&cols[j], &cols[j]).sqrt();
            if nrm > T::zero() {
                cols[j].iter_mut().for_each(|x| *x /= nrm);
            }
        }
    }
    for (j, c) in cols.iter().enumerate() {
        q.set_col(j, c);
    }
}
