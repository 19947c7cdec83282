//! Small dense/tridiagonal helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

/// Relative threshold separating genuinely negative eigenvalues from
/// numerical zeros: `|λ| > NEGATIVE_EIGEN_RTOL · ‖M‖∞`.
pub const NEGATIVE_EIGEN_RTOL: f64 = 1e-10;

/// Symmetric tridiagonal matrix stored as its diagonal and first
/// off-diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl Tridiagonal {
    pub fn zeros(n: usize) -> Self {
        Self {
            diag: vec![0.0; n],
            off: vec![0.0; n.saturating_sub(1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = self.diag[i];
        }
        for (i, &o) in self.off.iter().enumerate() {
            m[(i, i + 1)] = o;
            m[(i + 1, i)] = o;
        }
        m
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        (0..n)
            .map(|i| {
                let mut y = self.diag[i] * x[i];
                if i > 0 {
                    y += self.off[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    y += self.off[i] * x[i + 1];
                }
                y
            })
            .collect()
    }

    /// Solves `T x = b` through an LDLᵀ factorization. Returns `None` when a
    /// pivot is not strictly positive, i.e. the matrix is not positive
    /// definite.
    pub fn solve_spd(&self, b: &[f64]) -> Option<Vec<f64>> {
        let n = self.dim();
        if n == 0 {
            return Some(Vec::new());
        }
        let mut d = vec![0.0; n];
        let mut l = vec![0.0; n.saturating_sub(1)];
        d[0] = self.diag[0];
        if d[0] <= 0.0 || !d[0].is_finite() {
            return None;
        }
        for i in 1..n {
            l[i - 1] = self.off[i - 1] / d[i - 1];
            d[i] = self.diag[i] - l[i - 1] * self.off[i - 1];
            if d[i] <= 0.0 || !d[i].is_finite() {
                return None;
            }
        }
        let mut y = b.to_vec();
        for i in 1..n {
            y[i] -= l[i - 1] * y[i - 1];
        }
        for i in 0..n {
            y[i] /= d[i];
        }
        for i in (0..n - 1).rev() {
            y[i] -= l[i] * y[i + 1];
        }
        Some(y)
    }
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues in ascending
/// order; column `k` of `vectors` belongs to `values[k]`.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl Spectrum {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `Σ log|λ|`, the log of the absolute determinant.
    pub fn log_abs_det(&self) -> f64 {
        self.values.iter().map(|v| v.abs().ln()).sum()
    }
}

pub fn symmetric_eigen(m: &DMatrix<f64>) -> Spectrum {
    let n = m.nrows();
    if n == 0 {
        return Spectrum {
            values: DVector::zeros(0),
            vectors: DMatrix::zeros(0, 0),
        };
    }
    let eig = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Spectrum { values, vectors }
}

/// Compensated accumulator for sums of products (Ogita-Rump-Oishi `Dot2`):
/// the result is as accurate as if computed in twice the working precision.
#[derive(Debug, Clone, Copy, Default)]
struct Dot2 {
    hi: f64,
    lo: f64,
}

impl Dot2 {
    fn add_product(&mut self, a: f64, b: f64) {
        let p = a * b;
        let pe = a.mul_add(b, -p);
        let s = self.hi + p;
        let z = s - self.hi;
        let se = (self.hi - (s - z)) + (p - z);
        self.hi = s;
        self.lo += pe + se;
    }
}

/// Rayleigh quotient `vᵀMv / vᵀv` evaluated with compensated dot products.
///
/// For an eigenvector accurate to `δ` the error is `O(‖M‖δ²)` plus a few
/// ulps of the result, which resolves eigenvalue differences far below
/// `ε‖M‖`.
pub fn rayleigh_quotient(m: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    let n = v.len();
    let mut num = Dot2::default();
    let mut den = Dot2::default();
    for i in 0..n {
        let mut row = Dot2::default();
        for j in 0..n {
            let a = m[(i, j)];
            if a != 0.0 {
                row.add_product(a, v[j]);
            }
        }
        num.add_product(v[i], row.hi);
        num.add_product(v[i], row.lo);
        den.add_product(v[i], v[i]);
    }
    (num.hi + num.lo) / (den.hi + den.lo)
}

/// Maximum absolute row sum.
pub fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|row| row.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Number of eigenvalues below `-NEGATIVE_EIGEN_RTOL · scale`.
pub fn count_negative(values: &DVector<f64>, scale: f64) -> usize {
    let threshold = NEGATIVE_EIGEN_RTOL * scale;
    values.iter().filter(|&&v| v < -threshold).count()
}

/// `(M + Mᵀ) / 2`
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn max_abs(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().map(f64::abs).fold(0.0, f64::max)
}
