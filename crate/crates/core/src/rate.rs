//! Harmonic TST partition functions, rates and the coarse-graining error.
//!
//! Every partition quantity is carried as a logarithm: the Gaussian prefactor
//! `(2π/β)^((N−1)/2)` alone overflows `f64` for a few hundred degrees of
//! freedom.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::coarse::PartitionedHessian;
use crate::error::{Error, Result};
use crate::linalg::{count_negative, inf_norm, rayleigh_quotient, symmetric_eigen, Spectrum, NEGATIVE_EIGEN_RTOL};

/// Smallest `|v_cg · u_at^r|` accepted before the decomposition is treated
/// as numerically degenerate.
pub const OVERLAP_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateParams {
    /// Inverse temperature `1/(k_B T)`.
    pub beta: f64,
    /// Spatial dimension; 1 for the chain.
    pub dimension_d: usize,
}

impl RateParams {
    pub fn new(beta: f64) -> Result<Self> {
        Self::with_dimension(beta, 1)
    }

    pub fn with_dimension(beta: f64, dimension_d: usize) -> Result<Self> {
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::InvalidParameter(format!("beta must be > 0, got {beta}")));
        }
        if dimension_d == 0 {
            return Err(Error::InvalidParameter("dimension must be >= 1".into()));
        }
        Ok(Self { beta, dimension_d })
    }

    fn log_gauss(&self) -> f64 {
        (2.0 * PI / self.beta).ln()
    }
}

/// The unique negative eigenpair of a symmetric matrix; the eigenvector is
/// unit length.
pub fn unstable_mode(m: &DMatrix<f64>) -> Result<(f64, DVector<f64>)> {
    unstable_mode_of(m, &symmetric_eigen(m))
}

/// Same as [`unstable_mode`] for an already computed spectrum of `m`.
///
/// The eigenvalue is refined by a compensated Rayleigh quotient so that
/// differences between nearly equal atomistic and coarse eigenvalues are
/// not swamped by eigensolver roundoff.
pub fn unstable_mode_of(m: &DMatrix<f64>, spectrum: &Spectrum) -> Result<(f64, DVector<f64>)> {
    match count_negative(&spectrum.values, inf_norm(m)) {
        0 => Err(Error::NoNegativeEigenvalue),
        1 => {
            let v = spectrum.vectors.column(0).normalize();
            Ok((rayleigh_quotient(m, &v), v))
        }
        k => Err(Error::NotFirstOrderSaddle(k)),
    }
}

/// `√(λ_cg/λ_at) − 1`
pub fn relative_rate_error(lambda_at: f64, lambda_cg: f64) -> Result<f64> {
    if !(lambda_at < 0.0) {
        return Err(Error::NonNegativeEigenvalue(lambda_at));
    }
    if !(lambda_cg < 0.0) {
        return Err(Error::NonNegativeEigenvalue(lambda_cg));
    }
    // (√(1+x) − 1) written without cancellation, x = (λ_cg − λ_at)/λ_at
    let x = (lambda_cg - lambda_at) / lambda_at;
    // `+ 0.0` turns the −0 of the identical case into +0
    Ok(x / ((1.0 + x).sqrt() + 1.0) + 0.0)
}

/// Atomistic and coarse unstable modes, with `v_cg` oriented so that
/// `u_at^r · v_cg > 0`.
#[derive(Debug, Clone)]
pub struct ModePair {
    pub lambda_at: f64,
    pub u_at: DVector<f64>,
    pub lambda_cg: f64,
    pub v_cg: DVector<f64>,
}

impl ModePair {
    pub fn new(
        part: &PartitionedHessian,
        lambda_at: f64,
        u_at: DVector<f64>,
        lambda_cg: f64,
        v_cg: DVector<f64>,
    ) -> Result<Self> {
        let v_cg = align_sign(part, &u_at, v_cg)?;
        Ok(Self {
            lambda_at,
            u_at,
            lambda_cg,
            v_cg,
        })
    }
}

fn align_sign(part: &PartitionedHessian, u_at: &DVector<f64>, v_cg: DVector<f64>) -> Result<DVector<f64>> {
    let (ur, _) = part.split(u_at);
    let overlap = ur.dot(&v_cg);
    if overlap == 0.0 {
        return Err(Error::DegenerateOverlap(overlap));
    }
    Ok(if overlap < 0.0 { -v_cg } else { v_cg })
}

/// Pieces of the exact identity
/// `λ_cg − λ_at = v_cg·B(u_min^c − u_at^c) / (v_cg·u_at^r)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorBreakdown {
    /// `v_cg · u_at^r`
    pub overlap: f64,
    /// `v_cg · B (u_min^c − u_at^c)`
    pub longrange: f64,
    /// `λ_cg − λ_at`
    pub eigen_gap: f64,
    /// `|eigen_gap − longrange / overlap|`
    pub identity_residual: f64,
    pub rel_rate_error: f64,
}

pub fn error_decomposition(
    part: &PartitionedHessian,
    u_at: &DVector<f64>,
    v_cg: &DVector<f64>,
    lambda_at: f64,
    lambda_cg: f64,
) -> Result<ErrorBreakdown> {
    if u_at.len() != part.dim() {
        return Err(Error::DimensionMismatch {
            expected: part.dim(),
            actual: u_at.len(),
        });
    }
    if v_cg.len() != part.repatoms.len() {
        return Err(Error::DimensionMismatch {
            expected: part.repatoms.len(),
            actual: v_cg.len(),
        });
    }
    let rel_rate_error = relative_rate_error(lambda_at, lambda_cg)?;
    let (ur, uc) = part.split(u_at);
    let raw_overlap = v_cg.dot(&ur);
    if raw_overlap.abs() <= OVERLAP_FLOOR {
        return Err(Error::DegenerateOverlap(raw_overlap));
    }
    let sign = raw_overlap.signum();
    let overlap = sign * raw_overlap;
    let longrange = if part.constrained.is_empty() {
        0.0
    } else {
        let factor = part.factor_constrained()?;
        let uc_min = -factor.solve_vec(&(part.b.transpose() * &ur));
        sign * v_cg.dot(&(&part.b * (uc_min - uc)))
    };
    let eigen_gap = lambda_cg - lambda_at;
    Ok(ErrorBreakdown {
        overlap,
        longrange,
        eigen_gap,
        identity_residual: (eigen_gap - longrange / overlap).abs(),
        rel_rate_error,
    })
}

fn check_saddle_spectrum(values: &DVector<f64>) -> Result<f64> {
    let scale = values.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let threshold = NEGATIVE_EIGEN_RTOL * scale;
    let negatives: Vec<f64> = values.iter().copied().filter(|&v| v < -threshold).collect();
    match negatives.len() {
        0 => Err(Error::NoNegativeEigenvalue),
        1 => {
            if values.iter().any(|&v| v.abs() <= threshold) {
                return Err(Error::InvalidParameter("spectrum has a zero mode".into()));
            }
            Ok(negatives[0])
        }
        k => Err(Error::NotFirstOrderSaddle(k)),
    }
}

/// `−βV_s + ((N−1)/2) log(2π/β) + ½(log|λ| − log det_C − Σ log|μ_i|)`
fn log_z_saddle(
    v_s: f64,
    values: &DVector<f64>,
    log_det_c: f64,
    n_total: usize,
    params: &RateParams,
) -> Result<f64> {
    let lambda = check_saddle_spectrum(values)?;
    let log_abs_det: f64 = values.iter().map(|v| v.abs().ln()).sum();
    Ok(-params.beta * v_s
        + 0.5 * (n_total as f64 - 1.0) * params.log_gauss()
        + 0.5 * (lambda.abs().ln() - log_det_c - log_abs_det))
}

/// Log of the harmonic dividing-surface partition function of the full
/// system, from the saddle energy and the spectrum of its dynamical matrix.
pub fn log_z_saddle_atomistic(v_s: f64, spectrum: &DVector<f64>, params: &RateParams) -> Result<f64> {
    log_z_saddle(v_s, spectrum, 0.0, spectrum.len(), params)
}

/// Log of the coarse dividing-surface partition function. `n_constrained`
/// counts constrained degrees of freedom (the dimension of `C`).
pub fn log_z_saddle_coarse(
    v_s: f64,
    spectrum_cg: &DVector<f64>,
    log_det_c: f64,
    n_constrained: usize,
    params: &RateParams,
) -> Result<f64> {
    log_z_saddle(v_s, spectrum_cg, log_det_c, spectrum_cg.len() + n_constrained, params)
}

/// Harmonic basin partition function around a minimum (Vineyard form):
/// `−βV_m + (N/2) log(2π/β) − ½ Σ log μ_i`. Only needed for absolute rates.
pub fn log_z_basin(v_m: f64, spectrum: &DVector<f64>, params: &RateParams) -> Result<f64> {
    if let Some(&bad) = spectrum.iter().find(|&&v| !(v > 0.0)) {
        return Err(Error::InvalidParameter(format!(
            "basin spectrum must be positive, found {bad}"
        )));
    }
    let log_det: f64 = spectrum.iter().map(|v| v.ln()).sum();
    Ok(-params.beta * v_m + 0.5 * spectrum.len() as f64 * params.log_gauss() - 0.5 * log_det)
}

/// Effective free energy of the coarse system near the saddle,
/// `V_s + (1/2β) log(det C / (2π/β)^{N_c}) + ½ u_r·D_cg u_r`.
pub fn coarse_saddle_free_energy(
    u_r: &DVector<f64>,
    part: &PartitionedHessian,
    v_s: f64,
    params: &RateParams,
) -> Result<f64> {
    let coarse = crate::coarse::schur_complement(part)?;
    if u_r.len() != coarse.dim() {
        return Err(Error::DimensionMismatch {
            expected: coarse.dim(),
            actual: u_r.len(),
        });
    }
    let n_c = part.constrained.len() as f64;
    Ok(v_s
        + (coarse.log_det_c - n_c * params.log_gauss()) / (2.0 * params.beta)
        + 0.5 * u_r.dot(&(&coarse.d_cg * u_r)))
}

/// Additive constant of the coarse kinetic energy after integrating out the
/// momenta of `n_constrained` atoms: `−(d N_c / 2β) log(2π/β)`.
pub fn coarse_kinetic_constant(params: &RateParams, n_constrained: usize) -> f64 {
    let dof = (params.dimension_d * n_constrained) as f64;
    if dof == 0.0 {
        return 0.0;
    }
    -(dof / (2.0 * params.beta)) * params.log_gauss()
}

/// TST rate `½ √(2/(πβ)) Z^≠/Z`, kept as a logarithm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HtstRate {
    pub log_rate: f64,
}

impl HtstRate {
    /// The rate itself, or `None` when it does not fit in an `f64`.
    pub fn value(&self) -> Option<f64> {
        let v = self.log_rate.exp();
        (v.is_finite() && (v > 0.0 || self.log_rate == f64::NEG_INFINITY)).then_some(v)
    }
}

pub fn htst_rate(log_z_saddle: f64, log_z_basin: f64, params: &RateParams) -> Result<HtstRate> {
    if !log_z_saddle.is_finite() || !log_z_basin.is_finite() {
        return Err(Error::InvalidParameter("log partition values must be finite".into()));
    }
    let prefactor = 0.5f64.ln() + 0.5 * (2.0 / (PI * params.beta)).ln();
    Ok(HtstRate {
        log_rate: prefactor + log_z_saddle - log_z_basin,
    })
}

/// Log partition values for one mesh at one temperature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogPartition {
    pub log_z_saddle_at: f64,
    pub log_z_saddle_cg: f64,
    pub log_z_basin_at: f64,
    pub beta_used: RateParams,
}

impl LogPartition {
    pub fn rate_at(&self) -> Result<HtstRate> {
        htst_rate(self.log_z_saddle_at, self.log_z_basin_at, &self.beta_used)
    }

    /// The coarse system shares the basin partition function of the full one.
    pub fn rate_cg(&self) -> Result<HtstRate> {
        htst_rate(self.log_z_saddle_cg, self.log_z_basin_at, &self.beta_used)
    }

    /// `R_cg / R_at`
    pub fn rate_ratio(&self) -> f64 {
        (self.log_z_saddle_cg - self.log_z_saddle_at).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coarse::{partition_hessian, schur_complement, RepatomSet};

    #[test]
    fn unstable_mode_of_diagonal() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, 2.0, 3.0]));
        let (l, v) = unstable_mode(&m).unwrap();
        assert_eq!(l, -1.0);
        assert_eq!(v[0].abs(), 1.0);
        let two = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, -2.0, 3.0]));
        assert!(matches!(unstable_mode(&two), Err(Error::NotFirstOrderSaddle(2))));
        let none = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 3.0]));
        assert!(matches!(unstable_mode(&none), Err(Error::NoNegativeEigenvalue)));
    }

    #[test]
    fn relative_error_values() {
        assert_eq!(relative_rate_error(-0.3, -0.3).unwrap(), 0.0);
        assert_eq!(relative_rate_error(-1.0, -4.0).unwrap(), 1.0);
        assert!(relative_rate_error(0.0, -1.0).is_err());
        assert!(relative_rate_error(-1.0, 0.5).is_err());
    }

    #[test]
    fn log_z_small_cases() {
        let p = RateParams::new(1.0).unwrap();
        let one = DVector::from_vec(vec![-1.0]);
        assert_eq!(log_z_saddle_atomistic(0.0, &one, &p).unwrap(), 0.0);
        let three = DVector::from_vec(vec![-1.0, 1.0, 4.0]);
        assert!((log_z_saddle_atomistic(0.0, &three, &p).unwrap() - PI.ln()).abs() < 1e-15);
        let bad = DVector::from_vec(vec![-1.0, -1.0, 4.0]);
        assert!(log_z_saddle_atomistic(0.0, &bad, &p).is_err());
        assert!(log_z_saddle_atomistic(0.0, &DVector::from_vec(vec![1.0, 4.0]), &p).is_err());
    }

    #[test]
    fn full_resolution_log_z_is_bitwise_equal() {
        let p = RateParams::new(1.7).unwrap();
        let spectrum = DVector::from_vec(vec![-0.02, 0.3, 1.1, 3.9]);
        let at = log_z_saddle_atomistic(0.25, &spectrum, &p).unwrap();
        let cg = log_z_saddle_coarse(0.25, &spectrum, 0.0, 0, &p).unwrap();
        assert_eq!(at.to_bits(), cg.to_bits());
    }

    #[test]
    fn kinetic_constant() {
        let p = RateParams::new(1.0).unwrap();
        assert_eq!(coarse_kinetic_constant(&p, 0), 0.0);
        assert!((coarse_kinetic_constant(&p, 3) + 1.5 * (2.0 * PI).ln()).abs() < 1e-15);
        let p2 = RateParams::new(2.0 * PI).unwrap();
        assert_eq!(coarse_kinetic_constant(&p2, 7), 0.0);
    }

    #[test]
    fn unit_ratio_rate() {
        let p = RateParams::new(2.0 / PI).unwrap();
        let r = htst_rate(3.0, 3.0, &p).unwrap();
        assert!((r.value().unwrap() - 0.5).abs() < 1e-15);
        let huge = htst_rate(1e4, 0.0, &p).unwrap();
        assert!(huge.value().is_none());
        assert!(huge.log_rate.is_finite());
    }

    #[test]
    fn free_energy_at_origin_and_beta_shift() {
        let m = DMatrix::from_row_slice(3, 3, &[-0.5, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 2.0]);
        let part = partition_hessian(&m, &RepatomSet::new(vec![0], 3).unwrap()).unwrap();
        let cg = schur_complement(&part).unwrap();
        let zero = DVector::zeros(1);
        let p1 = RateParams::new(1.0).unwrap();
        let p2 = RateParams::new(2.0).unwrap();
        let e1 = coarse_saddle_free_energy(&zero, &part, 0.4, &p1).unwrap();
        let expect = 0.4 + 0.5 * (cg.log_det_c - 2.0 * (2.0 * PI).ln());
        assert!((e1 - expect).abs() < 1e-15);
        let e2 = coarse_saddle_free_energy(&zero, &part, 0.4, &p2).unwrap();
        let shift = 0.5 * (cg.log_det_c - 2.0 * (2.0 * PI).ln()) - 0.25 * (cg.log_det_c - 2.0 * PI.ln());
        assert!(((e1 - e2) - shift).abs() < 1e-14);
    }

    #[test]
    fn block_diagonal_has_no_error() {
        let m = DMatrix::from_row_slice(
            4,
            4,
            &[-0.3, 0.2, 0.0, 0.0, 0.2, 1.0, 0.0, 0.0, 0.0, 0.0, 2.0, -0.5, 0.0, 0.0, -0.5, 2.0],
        );
        let (lat, uat) = unstable_mode(&m).unwrap();
        let part = partition_hessian(&m, &RepatomSet::new(vec![0, 1], 4).unwrap()).unwrap();
        let cg = schur_complement(&part).unwrap();
        let (lcg, vcg) = unstable_mode(&cg.d_cg).unwrap();
        assert_eq!(lcg, lat);
        let e = error_decomposition(&part, &uat, &vcg, lat, lcg).unwrap();
        assert_eq!(e.longrange, 0.0);
        assert_eq!(e.eigen_gap, 0.0);
        assert!(e.overlap > 0.0);
    }

    #[test]
    fn degenerate_overlap_is_an_error() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, 2.0]));
        let part = partition_hessian(&m, &RepatomSet::new(vec![0, 1], 2).unwrap()).unwrap();
        let u = DVector::from_vec(vec![1.0, 0.0]);
        let v = DVector::from_vec(vec![0.0, 1.0]);
        assert!(matches!(
            error_decomposition(&part, &u, &v, -1.0, -1.0),
            Err(Error::DegenerateOverlap(_))
        ));
    }
}
