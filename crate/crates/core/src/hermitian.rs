//! Dense complex Hermitian matrices of small dimension.
//!
//! Everything the solver needs from linear algebra lives here: building
//! `h h^H` style rank-one matrices, the trace inner product `tr(A B)`, a
//! cyclic Jacobi eigendecomposition, and the Frobenius projection onto the
//! positive semidefinite cone.
//!
//! Storage is a full row-major `n x n` buffer, but every constructor and
//! mutator writes the lower triangle as the conjugate of the upper one, so
//! `A[k][j] == conj(A[j][k])` holds bit-for-bit and diagonals are real.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported dimension.
pub const MAX_DIM: usize = 64;

const JACOBI_MAX_SWEEPS: usize = 100;
const JACOBI_OFF_TOL: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HermitianMatrix {
    n: usize,
    data: Vec<Complex64>,
}

/// Eigendecomposition `A = V diag(values) V^H` with ascending eigenvalues.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<f64>,
    /// Column `k` of `V`, i.e. the unit eigenvector paired with `values[k]`.
    pub vectors: Vec<Vec<Complex64>>,
}

impl HermitianMatrix {
    pub fn zeros(n: usize) -> Self {
        assert!(n >= 1 && n <= MAX_DIM, "dimension {n} out of range");
        Self {
            n,
            data: vec![Complex64::new(0.0, 0.0); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::scaled_identity(n, 1.0)
    }

    pub fn scaled_identity(n: usize, scale: f64) -> Self {
        let mut m = Self::zeros(n);
        for j in 0..n {
            m.data[j * n + j] = Complex64::new(scale, 0.0);
        }
        m
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (j, &d) in diag.iter().enumerate() {
            m.data[j * m.n + j] = Complex64::new(d, 0.0);
        }
        m
    }

    /// Builds a matrix from its upper triangle; `f(j, k)` is called for `j <= k`
    /// and the imaginary part of diagonal entries is discarded.
    pub fn from_upper<F>(n: usize, mut f: F) -> Self
    where
        F: FnMut(usize, usize) -> Complex64,
    {
        let mut m = Self::zeros(n);
        for j in 0..n {
            for k in j..n {
                m.set(j, k, f(j, k));
            }
        }
        m
    }

    /// `v v^H`.
    pub fn outer(v: &[Complex64]) -> Self {
        Self::from_upper(v.len(), |j, k| v[j] * v[k].conj())
    }

    /// Accepts a full row-major matrix, rejecting non-finite or non-Hermitian
    /// input (relative asymmetry above `1e-12`).
    pub fn from_rows(rows: &[Vec<Complex64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 || n > MAX_DIM {
            return Err(Error::Dimension(format!("matrix dimension {n} out of range")));
        }
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension("matrix is not square".into()));
        }
        if rows.iter().flatten().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Validation("matrix has non-finite entries".into()));
        }
        let scale = rows
            .iter()
            .flatten()
            .map(|z| z.norm())
            .fold(0.0_f64, f64::max)
            .max(f64::MIN_POSITIVE);
        for j in 0..n {
            for k in j..n {
                if (rows[j][k] - rows[k][j].conj()).norm() > 1e-12 * scale {
                    return Err(Error::Validation(format!(
                        "matrix is not Hermitian at ({j}, {k})"
                    )));
                }
            }
        }
        Ok(Self::from_upper(n, |j, k| rows[j][k]))
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, j: usize, k: usize) -> Complex64 {
        self.data[j * self.n + k]
    }

    /// Writes `(j, k)` and its mirror.
    pub fn set(&mut self, j: usize, k: usize, z: Complex64) {
        let n = self.n;
        if j == k {
            self.data[j * n + j] = Complex64::new(z.re, 0.0);
        } else {
            self.data[j * n + k] = z;
            self.data[k * n + j] = z.conj();
        }
    }

    pub fn rows(&self) -> Vec<Vec<Complex64>> {
        self.data.chunks(self.n).map(|r| r.to_vec()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|j| self.data[j * self.n + j].re).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    /// `self += s * other`
    pub fn add_scaled(&mut self, s: f64, other: &Self) {
        assert_eq!(self.n, other.n, "dimension mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b * s;
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.add_scaled(1.0, other);
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.add_scaled(-1.0, other);
        out
    }

    pub fn mul_vec(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(v.len(), self.n);
        self.data
            .chunks(self.n)
            .map(|row| row.iter().zip(v).map(|(a, x)| a * x).sum())
            .collect()
    }

    /// `v^H A v`, real for Hermitian `A`.
    pub fn quad_form(&self, v: &[Complex64]) -> f64 {
        let av = self.mul_vec(v);
        v.iter().zip(&av).map(|(x, y)| (x.conj() * y).re).sum()
    }

    /// Packs the matrix into `n^2` reals such that the Euclidean inner product
    /// of two packings equals the trace inner product `tr(A B)`.
    pub fn to_svec(&self) -> Vec<f64> {
        let n = self.n;
        let mut out = Vec::with_capacity(n * n);
        for j in 0..n {
            out.push(self.get(j, j).re);
        }
        for j in 0..n {
            for k in j + 1..n {
                let z = self.get(j, k);
                out.push(std::f64::consts::SQRT_2 * z.re);
                out.push(std::f64::consts::SQRT_2 * z.im);
            }
        }
        out
    }

    pub fn from_svec(n: usize, v: &[f64]) -> Self {
        assert_eq!(v.len(), n * n, "svec length mismatch");
        let mut m = Self::zeros(n);
        for j in 0..n {
            m.data[j * n + j] = Complex64::new(v[j], 0.0);
        }
        let mut idx = n;
        for j in 0..n {
            for k in j + 1..n {
                let z = Complex64::new(v[idx], v[idx + 1]) / std::f64::consts::SQRT_2;
                m.set(j, k, z);
                idx += 2;
            }
        }
        m
    }
}

/// `tr(A B) = Re sum_jk A[j][k] conj(B[j][k])` for Hermitian `A`, `B`.
pub fn trace_product(a: &HermitianMatrix, b: &HermitianMatrix) -> Result<f64> {
    if a.n != b.n {
        return Err(Error::Dimension(format!(
            "trace product of {}x{} and {}x{} matrices",
            a.n, a.n, b.n, b.n
        )));
    }
    Ok(a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| x.re * y.re + x.im * y.im)
        .sum())
}

/// Cyclic complex Jacobi eigendecomposition.
///
/// Each rotation first removes the phase of the pivot `a_pq` with a diagonal
/// unitary, then applies the classical real Jacobi rotation. Sweeps stop once
/// the off-diagonal Frobenius mass drops below `1e-14 ||A||_F` or after 100
/// sweeps.
pub fn eig(a: &HermitianMatrix) -> Result<Eigen> {
    if !a.is_finite() {
        return Err(Error::Validation("matrix has non-finite entries".into()));
    }
    let n = a.n;
    let mut m = a.data.clone();
    let mut v = vec![Complex64::new(0.0, 0.0); n * n];
    for j in 0..n {
        v[j * n + j] = Complex64::new(1.0, 0.0);
    }
    let fro = a.frobenius_norm();

    for _ in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|j| (0..n).filter(move |&k| k != j).map(move |k| (j, k)))
            .map(|(j, k)| m[j * n + k].norm_sqr())
            .sum::<f64>()
            .sqrt();
        if off <= JACOBI_OFF_TOL * fro || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                let mag = apq.norm();
                if mag == 0.0 {
                    continue;
                }
                let w = (apq / mag).conj();
                let app = m[p * n + p].re;
                let aqq = m[q * n + q].re;
                let tau = (aqq - app) / (2.0 * mag);
                let t = if tau == 0.0 {
                    1.0
                } else {
                    tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // U = [[c, s], [-s w, c w]] acting on the (p, q) plane.
                let u_pp = Complex64::new(c, 0.0);
                let u_pq = Complex64::new(s, 0.0);
                let u_qp = -w * s;
                let u_qq = w * c;
                for k in 0..n {
                    let xp = m[k * n + p];
                    let xq = m[k * n + q];
                    m[k * n + p] = xp * u_pp + xq * u_qp;
                    m[k * n + q] = xp * u_pq + xq * u_qq;
                    let vp = v[k * n + p];
                    let vq = v[k * n + q];
                    v[k * n + p] = vp * u_pp + vq * u_qp;
                    v[k * n + q] = vp * u_pq + vq * u_qq;
                }
                for k in 0..n {
                    let xp = m[p * n + k];
                    let xq = m[q * n + k];
                    m[p * n + k] = u_pp.conj() * xp + u_qp.conj() * xq;
                    m[q * n + k] = u_pq.conj() * xp + u_qq.conj() * xq;
                }
                m[p * n + q] = Complex64::new(0.0, 0.0);
                m[q * n + p] = Complex64::new(0.0, 0.0);
                m[p * n + p].im = 0.0;
                m[q * n + q].im = 0.0;
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| m[x * n + x].re.total_cmp(&m[y * n + y].re));
    let values = order.iter().map(|&j| m[j * n + j].re).collect();
    let vectors = order
        .iter()
        .map(|&j| (0..n).map(|k| v[k * n + j]).collect())
        .collect();
    Ok(Eigen { values, vectors })
}

/// Rebuilds `V diag(w) V^H` from an eigendecomposition and new eigenvalues.
pub fn from_spectrum(e: &Eigen, values: &[f64]) -> HermitianMatrix {
    let n = e.values.len();
    HermitianMatrix::from_upper(n, |j, k| {
        e.vectors
            .iter()
            .zip(values)
            .filter(|(_, &w)| w != 0.0)
            .map(|(v, &w)| v[j] * v[k].conj() * w)
            .sum()
    })
}

/// Frobenius-nearest positive semidefinite matrix, `V max(L, 0) V^H`.
pub fn psd_project(a: &HermitianMatrix) -> HermitianMatrix {
    // Non-finite input has no meaningful projection; mirror NaNs through.
    let Ok(e) = eig(a) else {
        return a.clone();
    };
    if e.values.iter().all(|&w| w >= 0.0) {
        return a.clone();
    }
    let clipped: Vec<f64> = e.values.iter().map(|&w| w.max(0.0)).collect();
    from_spectrum(&e, &clipped)
}

/// Frobenius-nearest point of `{X >= 0, tr X <= budget}`: the eigenvalues
/// are clipped at zero or, if that overshoots the budget, projected onto the
/// simplex of total `budget`.
pub fn psd_trace_project(a: &HermitianMatrix, budget: f64) -> Result<HermitianMatrix> {
    if !(budget >= 0.0) {
        return Err(Error::Domain(format!("trace budget {budget} must be >= 0")));
    }
    let e = eig(a)?;
    let clipped: Vec<f64> = e.values.iter().map(|&w| w.max(0.0)).collect();
    if clipped.iter().sum::<f64>() <= budget {
        return Ok(from_spectrum(&e, &clipped));
    }
    // Shift s with sum(max(w - s, 0)) = budget; values are sorted ascending.
    let w = &e.values;
    let mut acc = 0.0;
    let mut shift = 0.0;
    for (m, &top) in w.iter().rev().enumerate() {
        acc += top;
        let s = (acc - budget) / (m + 1) as f64;
        let next = if m + 1 < w.len() { w[w.len() - m - 2] } else { f64::NEG_INFINITY };
        if s >= next {
            shift = s;
            break;
        }
    }
    let projected: Vec<f64> = w.iter().map(|&x| (x - shift).max(0.0)).collect();
    Ok(from_spectrum(&e, &projected))
}

/// Largest eigenvalue and a unit eigenvector for it.
pub fn max_eigpair(a: &HermitianMatrix) -> Result<(f64, Vec<Complex64>)> {
    let mut e = eig(a)?;
    let w = *e.values.last().expect("dimension >= 1");
    let v = e.vectors.pop().expect("dimension >= 1");
    Ok((w, v))
}
