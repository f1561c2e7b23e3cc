//! Dense linear-algebra helpers shared by the superoperator, solver and
//! gradient code.
//!
//! Vectorization stacks columns: `vec(rho)[i + j * n] = rho[i][j]`, so that
//! `vec(A rho B) = (B^T kron A) vec(rho)`.
//!
//! Hermitian matrices are also represented by `n^2` real coordinates laid out
//! on the same index grid: the diagonal holds `rho_ii`, position `(a, b)` with
//! `a < b` holds `Re rho_ab` and the mirrored position `(b, a)` holds
//! `Im rho_ab`. Any Liouvillian maps Hermitian matrices to Hermitian matrices,
//! so it acts on these coordinates as a real `n^2 x n^2` matrix.

use faer::linalg::solvers::{PartialPivLu, Solve};
use faer::{c64, Mat, Side};

use crate::error::{Error, Result};

pub type CMat = Mat<c64>;

pub const I: c64 = c64 { re: 0.0, im: 1.0 };

#[inline]
pub fn vec_index(i: usize, j: usize, n: usize) -> usize {
    i + j * n
}

pub fn identity(n: usize) -> CMat {
    Mat::from_fn(n, n, |i, j| if i == j { c64::new(1.0, 0.0) } else { c64::new(0.0, 0.0) })
}

pub fn to_complex(m: &Mat<f64>) -> CMat {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| c64::new(m[(i, j)], 0.0))
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (ar, ac, br, bc) = (a.nrows(), a.ncols(), b.nrows(), b.ncols());
    Mat::from_fn(ar * br, ac * bc, |r, c| a[(r / br, c / bc)] * b[(r % br, c % bc)])
}

pub fn adjoint(a: &CMat) -> CMat {
    Mat::from_fn(a.ncols(), a.nrows(), |i, j| a[(j, i)].conj())
}

pub fn vectorize(rho: &CMat) -> Vec<c64> {
    let n = rho.nrows();
    let mut v = vec![c64::new(0.0, 0.0); n * n];
    for j in 0..n {
        for i in 0..n {
            v[vec_index(i, j, n)] = rho[(i, j)];
        }
    }
    v
}

pub fn unvectorize(v: &[c64], n: usize) -> CMat {
    Mat::from_fn(n, n, |i, j| v[vec_index(i, j, n)])
}

pub fn matvec(m: &CMat, v: &[c64]) -> Vec<c64> {
    let mut out = vec![c64::new(0.0, 0.0); m.nrows()];
    for j in 0..m.ncols() {
        let x = v[j];
        if x == c64::new(0.0, 0.0) {
            continue;
        }
        for (i, o) in out.iter_mut().enumerate() {
            *o += m[(i, j)] * x;
        }
    }
    out
}

/// Max absolute row sum.
pub fn inf_norm(m: &CMat) -> f64 {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn max_abs(v: &[c64]) -> f64 {
    v.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Largest `|a_ij - conj(a_ji)|`.
pub fn hermiticity_defect(a: &CMat) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Real Hermitian coordinates of `rho` (see module docs).
pub fn hermitian_coords(rho: &CMat) -> Vec<f64> {
    let n = rho.nrows();
    let mut x = vec![0.0; n * n];
    for b in 0..n {
        x[vec_index(b, b, n)] = rho[(b, b)].re;
        for a in 0..b {
            x[vec_index(a, b, n)] = rho[(a, b)].re;
            x[vec_index(b, a, n)] = rho[(a, b)].im;
        }
    }
    x
}

pub fn rho_from_coords(x: &[f64], n: usize) -> CMat {
    Mat::from_fn(n, n, |i, j| {
        if i == j {
            c64::new(x[vec_index(i, i, n)], 0.0)
        } else {
            let (a, b) = if i < j { (i, j) } else { (j, i) };
            let z = c64::new(x[vec_index(a, b, n)], x[vec_index(b, a, n)]);
            if i < j {
                z
            } else {
                z.conj()
            }
        }
    })
}

/// Hermitian basis element whose coordinate vector is the unit vector at `p`.
pub fn coord_basis_element(p: usize, n: usize) -> CMat {
    let (r, c) = (p % n, p / n);
    let mut rho = Mat::<c64>::zeros(n, n);
    if r == c {
        rho[(r, r)] = c64::new(1.0, 0.0);
    } else if r < c {
        rho[(r, c)] = c64::new(1.0, 0.0);
        rho[(c, r)] = c64::new(1.0, 0.0);
    } else {
        // imaginary part of rho_(c, r)
        rho[(c, r)] = I;
        rho[(r, c)] = -I;
    }
    rho
}

/// Real matrix of a superoperator (given in the column-stacked vec basis)
/// acting on Hermitian coordinates.
///
/// Rows are read off as if the image were Hermitian; for a row replaced by the
/// trace functional this picks up `Re(trace)`, which is exact on Hermitian input.
pub fn realify(m: &CMat, n: usize) -> Mat<f64> {
    let dim = n * n;
    assert_eq!(m.nrows(), dim);
    let mut out = Mat::<f64>::zeros(dim, dim);
    let mut col = vec![c64::new(0.0, 0.0); dim];
    for p in 0..dim {
        let (r, c) = (p % n, p / n);
        if r == c {
            for (k, v) in col.iter_mut().enumerate() {
                *v = m[(k, p)];
            }
        } else if r < c {
            let q = vec_index(c, r, n);
            for (k, v) in col.iter_mut().enumerate() {
                *v = m[(k, p)] + m[(k, q)];
            }
        } else {
            let q = vec_index(c, r, n);
            for (k, v) in col.iter_mut().enumerate() {
                *v = I * (m[(k, q)] - m[(k, p)]);
            }
        }
        write_coords_from_vec(&col, n, |row, value| out[(row, p)] = value);
    }
    out
}

/// [`realify`] for a superoperator with real entries, such as a dissipator
/// built from real jump operators. Such maps send the symmetric real part and
/// the antisymmetric imaginary part of `rho` to themselves separately.
pub fn realify_real(m: &Mat<f64>, n: usize) -> Mat<f64> {
    let dim = n * n;
    assert_eq!(m.nrows(), dim);
    let mut out = Mat::<f64>::zeros(dim, dim);
    for p in 0..dim {
        let (r, c) = (p % n, p / n);
        let q = vec_index(c, r, n);
        for b in 0..n {
            for a in 0..=b {
                let row = vec_index(a, b, n);
                if r == c {
                    out[(row, p)] = m[(row, p)];
                } else if r < c {
                    out[(row, p)] = m[(row, p)] + m[(row, q)];
                } else if a < b {
                    out[(vec_index(b, a, n), p)] = m[(row, q)] - m[(row, p)];
                }
            }
        }
    }
    out
}

/// Build the real coordinate matrix of a Hermiticity-preserving map given
/// only through its action on density matrices.
pub fn realify_action(n: usize, mut action: impl FnMut(&CMat) -> CMat) -> Mat<f64> {
    let dim = n * n;
    let mut out = Mat::<f64>::zeros(dim, dim);
    for p in 0..dim {
        let image = action(&coord_basis_element(p, n));
        let coords = hermitian_coords(&image);
        for (row, value) in coords.into_iter().enumerate() {
            out[(row, p)] = value;
        }
    }
    out
}

fn write_coords_from_vec(v: &[c64], n: usize, mut put: impl FnMut(usize, f64)) {
    for b in 0..n {
        let d = vec_index(b, b, n);
        put(d, v[d].re);
        for a in 0..b {
            let z = v[vec_index(a, b, n)];
            put(vec_index(a, b, n), z.re);
            put(vec_index(b, a, n), z.im);
        }
    }
}

/// LU factorization with partial pivoting of a real square matrix.
pub struct DenseLu {
    lu: PartialPivLu<f64>,
    dim: usize,
}

impl DenseLu {
    pub fn factor(a: &Mat<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::Numerical("LU of a non-square matrix".into()));
        }
        Ok(DenseLu {
            lu: a.partial_piv_lu(),
            dim: a.nrows(),
        })
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut b = Mat::from_fn(self.dim, 1, |i, _| rhs[i]);
        self.lu.solve_in_place(b.as_mut());
        (0..self.dim).map(|i| b[(i, 0)]).collect()
    }

    pub fn solve_transpose(&self, rhs: &[f64]) -> Vec<f64> {
        let mut b = Mat::from_fn(self.dim, 1, |i, _| rhs[i]);
        self.lu.solve_transpose_in_place(b.as_mut());
        (0..self.dim).map(|i| b[(i, 0)]).collect()
    }

    /// Smallest and largest pivot magnitudes of the `U` factor.
    pub fn pivot_range(&self) -> (f64, f64) {
        let u = self.lu.U();
        (0..self.dim)
            .map(|i| u[(i, i)].abs())
            .fold((f64::INFINITY, 0.0), |(lo, hi), p| (lo.min(p), hi.max(p)))
    }

    /// Hager/Higham estimate of `||A^-1||_1`.
    pub fn inverse_norm1_estimate(&self) -> f64 {
        let n = self.dim;
        if n == 0 {
            return 0.0;
        }
        let mut x = vec![1.0 / n as f64; n];
        let mut estimate = 0.0;
        for _ in 0..5 {
            let y = self.solve(&x);
            estimate = y.iter().map(|v| v.abs()).sum::<f64>();
            let xi: Vec<f64> = y.iter().map(|v| if *v >= 0.0 { 1.0 } else { -1.0 }).collect();
            let z = self.solve_transpose(&xi);
            let (jmax, zmax) = z
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |(bj, bv), (j, v)| {
                    if v.abs() > bv {
                        (j, v.abs())
                    } else {
                        (bj, bv)
                    }
                });
            let ztx: f64 = z.iter().zip(&x).map(|(a, b)| a * b).sum();
            if zmax <= ztx {
                break;
            }
            x.iter_mut().for_each(|v| *v = 0.0);
            x[jmax] = 1.0;
        }
        estimate
    }
}

pub fn norm1(a: &Mat<f64>) -> f64 {
    (0..a.ncols())
        .map(|j| (0..a.nrows()).map(|i| a[(i, j)].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Eigendecomposition of a real symmetric matrix with a reproducible gauge:
/// eigenvalues ascending, each eigenvector's largest-magnitude component positive.
#[derive(Clone, Debug)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    /// Columns are eigenvectors.
    pub vectors: Mat<f64>,
}

pub fn symmetric_eigen(a: &Mat<f64>) -> Result<SymmetricEigen> {
    let n = a.nrows();
    let evd = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Numerical(format!("eigendecomposition failed: {e:?}")))?;
    let s = evd.S();
    let u = evd.U();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| s[x].total_cmp(&s[y]));
    let values: Vec<f64> = order.iter().map(|&k| s[k]).collect();
    let mut vectors = Mat::<f64>::zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        let mut pivot = 0;
        for i in 1..n {
            // strict comparison keeps the first of equal-magnitude entries
            if u[(i, k)].abs() > u[(pivot, k)].abs() + 1e-12 {
                pivot = i;
            }
        }
        let sign = if u[(pivot, k)] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            vectors[(i, col)] = sign * u[(i, k)];
        }
    }
    Ok(SymmetricEigen { values, vectors })
}

/// Eigenvalues of a complex Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(a: &CMat) -> Result<Vec<f64>> {
    let mut values = a
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Numerical(format!("eigenvalue computation failed: {e:?}")))?;
    values.sort_by(f64::total_cmp);
    Ok(values)
}
