//! Reference computations that share no code path with the main pipeline:
//! naive energy summation, finite differences, a cyclic Jacobi eigensolver,
//! a Monte-Carlo surface integral and a 2-D trapezoid quadrature.
//!
//! They are slow and only meant for small inputs or spot checks.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::chain::ChainSystem;
use crate::error::{Error, Result};

/// Chain energy summed straight from the bond formulas, with the
/// Lennard-Jones bond in its `4ε((σ/r)¹² − (σ/r)⁶)` form. Input is
/// mass-weighted free coordinates.
pub fn naive_energy(system: &ChainSystem, x: &[f64]) -> f64 {
    let p = &system.params;
    let mut q = Vec::with_capacity(system.n_atoms);
    q.push(system.left_boundary);
    for (i, xi) in x.iter().enumerate() {
        q.push(xi / system.masses[i + 1].sqrt());
    }
    q.push(system.right_boundary);
    let mut e = 0.0;
    for b in 0..system.n_atoms - 1 {
        let r = q[b + 1] - q[b];
        if b == system.center_left {
            let sr = p.sigma / r;
            e += 4.0 * p.epsilon * (sr.powi(12) - sr.powi(6));
        } else {
            e += 0.5 * p.spring_k * (r - p.spring_rest).powi(2);
        }
    }
    e
}

/// Central-difference gradient.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut y = x.to_vec();
    (0..x.len())
        .map(|i| {
            y[i] = x[i] + h;
            let fp = f(&y);
            y[i] = x[i] - h;
            let fm = f(&y);
            y[i] = x[i];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// Second-difference Hessian, Richardson-extrapolated from steps `h` and
/// `2h` so the truncation error is `O(h⁴)`.
pub fn fd_hessian(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> DMatrix<f64> {
    let fine = second_differences(&f, x, h);
    let coarse = second_differences(&f, x, 2.0 * h);
    (fine * 4.0 - coarse) / 3.0
}

fn second_differences(f: &impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> DMatrix<f64> {
    let n = x.len();
    let mut y = x.to_vec();
    let f0 = f(x);
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        y[i] = x[i] + h;
        let fp = f(&y);
        y[i] = x[i] - h;
        let fm = f(&y);
        y[i] = x[i];
        m[(i, i)] = (fp - 2.0 * f0 + fm) / (h * h);
        for j in i + 1..n {
            let mut corner = |si: f64, sj: f64| {
                y[i] = x[i] + si * h;
                y[j] = x[j] + sj * h;
                let v = f(&y);
                y[i] = x[i];
                y[j] = x[j];
                v
            };
            let v = (corner(1.0, 1.0) - corner(1.0, -1.0) - corner(-1.0, 1.0) + corner(-1.0, -1.0))
                / (4.0 * h * h);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// Cyclic Jacobi eigensolver for symmetric matrices. Eigenvalues ascending,
/// eigenvectors in the matching columns.
pub fn jacobi_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let mut a = m.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)].powi(2))
            .sum();
        let scale: f64 = a.iter().map(|x| x * x).sum();
        if off <= 1e-30 * scale || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
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
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    (values, vectors)
}

/// Orthonormal basis (as columns) of the complement of a unit vector, by
/// twice-applied modified Gram-Schmidt over the coordinate axes.
pub fn complement_basis(normal: &DVector<f64>) -> DMatrix<f64> {
    let n = normal.len();
    let mut basis: Vec<DVector<f64>> = vec![normal.normalize()];
    for k in 0..n {
        if basis.len() == n {
            break;
        }
        let mut e = DVector::zeros(n);
        e[k] = 1.0;
        for _ in 0..2 {
            for b in &basis {
                let d = b.dot(&e);
                e -= b * d;
            }
        }
        let norm = e.norm();
        if norm > 0.25 {
            basis.push(e / norm);
        }
    }
    DMatrix::from_columns(&basis[1..])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub log_z: f64,
    /// Standard error of the estimate relative to its value.
    pub rel_std_err: f64,
}

/// Importance-sampled `log ∫ exp(−β(V_s + ½ xᵀ D x))` over the hyperplane
/// through the origin normal to `normal`.
///
/// Samples come from a Gaussian twice as wide as the integrand, built from
/// the Jacobi eigenpairs of the projected matrix; the integrand itself is
/// evaluated pointwise from `d`.
pub fn mc_log_z_hyperplane(
    d: &DMatrix<f64>,
    normal: &DVector<f64>,
    v_s: f64,
    beta: f64,
    samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    let w = complement_basis(normal);
    let q = w.transpose() * d * &w;
    let k = q.nrows();
    let (mu, vecs) = jacobi_eigen(&q);
    if let Some(&bad) = mu.iter().find(|&&m| !(m > 0.0)) {
        return Err(Error::InvalidParameter(format!(
            "restricted matrix is not positive definite (eigenvalue {bad})"
        )));
    }
    // proposal: independent normals with variance 2/(β μ_i) along eigenvectors
    let sd: Vec<f64> = mu.iter().map(|m| (2.0 / (beta * m)).sqrt()).collect();
    let log_norm: f64 = sd.iter().map(|s| (s * (2.0 * PI).sqrt()).ln()).sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = DVector::zeros(k);
    let mut log_w = Vec::with_capacity(samples);
    for _ in 0..samples {
        let mut log_g = 0.0;
        for i in 0..k {
            let e: f64 = StandardNormal.sample(&mut rng);
            z[i] = e * sd[i];
            log_g -= 0.5 * e * e;
        }
        let x = &vecs * &z;
        let y = &w * x;
        let quad = y.dot(&(d * &y));
        log_w.push(-0.5 * beta * quad - (log_g - log_norm));
    }
    let peak = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ws: Vec<f64> = log_w.iter().map(|l| (l - peak).exp()).collect();
    let n = samples as f64;
    let mean = ws.iter().sum::<f64>() / n;
    let var = ws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(McEstimate {
        log_z: -beta * v_s + peak + mean.ln(),
        rel_std_err: (var / n).sqrt() / mean,
    })
}

/// `V_s − β⁻¹ log ∫ exp(−β ½ uᵀ D u) du_c` over exactly two constrained
/// coordinates, by the trapezoid rule on a box around the conditional
/// minimum. `repatoms` and `u_r` fix the remaining coordinates.
pub fn quadrature_coarse_free_energy(
    d: &DMatrix<f64>,
    repatoms: &[usize],
    u_r: &DVector<f64>,
    v_s: f64,
    beta: f64,
) -> Result<f64> {
    let n = d.nrows();
    let cons: Vec<usize> = (0..n).filter(|i| !repatoms.contains(i)).collect();
    if cons.len() != 2 || u_r.len() != repatoms.len() {
        return Err(Error::InvalidParameter(
            "quadrature oracle needs exactly two constrained coordinates".into(),
        ));
    }
    let (i, j) = (cons[0], cons[1]);
    let (c11, c12, c22) = (d[(i, i)], d[(i, j)], d[(j, j)]);
    let det = c11 * c22 - c12 * c12;
    if !(c11 > 0.0 && det > 0.0) {
        return Err(Error::ConstrainedNotPositiveDefinite);
    }
    // b = Bᵀ u_r, center by Cramer's rule
    let b: Vec<f64> = cons
        .iter()
        .map(|&c| repatoms.iter().zip(u_r.iter()).map(|(&r, &u)| d[(r, c)] * u).sum())
        .collect();
    let center = [(-b[0] * c22 + b[1] * c12) / det, (-b[1] * c11 + b[0] * c12) / det];
    let tr = c11 + c22;
    let disc = ((c11 - c22).powi(2) + 4.0 * c12 * c12).sqrt();
    let (mu_min, mu_max) = (0.5 * (tr - disc), 0.5 * (tr + disc));
    let sd_max = 1.0 / (beta * mu_min).sqrt();
    let sd_min = 1.0 / (beta * mu_max).sqrt();
    let h = 0.25 * sd_min;
    let half = (12.0 * sd_max / h).ceil() as i64;

    let mut u = DVector::zeros(n);
    for (&r, &v) in repatoms.iter().zip(u_r.iter()) {
        u[r] = v;
    }
    let mut exps = Vec::with_capacity(((2 * half + 1) * (2 * half + 1)) as usize);
    for a in -half..=half {
        for c in -half..=half {
            u[i] = center[0] + a as f64 * h;
            u[j] = center[1] + c as f64 * h;
            exps.push(-0.5 * beta * u.dot(&(d * &u)));
        }
    }
    let peak = exps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // the Gaussian has decayed to nothing at the box edge, so the trapezoid
    // end weights are irrelevant
    let sum: f64 = exps.iter().map(|e| (e - peak).exp()).sum();
    let log_int = peak + (sum * h * h).ln();
    Ok(v_s - log_int / beta)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_matches_known_spectrum() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 2.0]);
        let (vals, vecs) = jacobi_eigen(&m);
        let s2 = 2f64.sqrt();
        for (v, e) in vals.iter().zip([2.0 - s2, 2.0, 2.0 + s2]) {
            assert!((v - e).abs() < 1e-14);
        }
        let back = &vecs * DMatrix::from_diagonal(&DVector::from_vec(vals)) * vecs.transpose();
        assert!((back - m).amax() < 1e-14);
    }

    #[test]
    fn complement_is_orthonormal() {
        let nrm = DVector::from_vec(vec![0.3, -0.1, 0.9, 0.2]).normalize();
        let w = complement_basis(&nrm);
        assert_eq!(w.ncols(), 3);
        assert!((w.transpose() * &w - DMatrix::identity(3, 3)).amax() < 1e-14);
        assert!((w.transpose() * nrm).amax() < 1e-14);
    }

    #[test]
    fn fd_of_quadratic() {
        let f = |x: &[f64]| x[0] * x[0] + 3.0 * x[0] * x[1];
        let g = fd_gradient(f, &[1.0, 2.0], 1e-5);
        assert!((g[0] - 8.0).abs() < 1e-8 && (g[1] - 3.0).abs() < 1e-8);
        let h = fd_hessian(f, &[1.0, 2.0], 1e-4);
        assert!((h[(0, 0)] - 2.0).abs() < 1e-6 && (h[(0, 1)] - 3.0).abs() < 1e-6);
    }

    #[test]
    fn mc_on_isotropic_plane() {
        // ∫ over a 2-plane of exp(−½|x|²) = 2π
        let d = DMatrix::<f64>::identity(3, 3);
        let nrm = DVector::from_vec(vec![1.0, 1.0, 0.0]).normalize();
        let est = mc_log_z_hyperplane(&d, &nrm, 0.0, 1.0, 20_000, 7).unwrap();
        assert!((est.log_z - (2.0 * PI).ln()).abs() < 0.02);
    }

    #[test]
    fn quadrature_of_separable_gaussian() {
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 0.5]));
        let v = quadrature_coarse_free_energy(&d, &[0], &DVector::from_vec(vec![0.0]), 0.0, 1.0).unwrap();
        let exact = -((2.0 * PI / 2.0).sqrt() * (2.0 * PI / 0.5).sqrt()).ln();
        assert!((v - exact).abs() < 1e-12);
    }
}
