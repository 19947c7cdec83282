//! One-dimensional fracture chain with pinned endpoints.
//!
//! Atoms `0..n` sit on a line. Atom `0` and atom `n - 1` are fixed at the
//! left and right boundary; the `n - 2` interior atoms are the degrees of
//! freedom. Every nearest-neighbour bond is a harmonic spring except the
//! bond between `center_left` and `center_left + 1`, which is a weaker
//! Lennard-Jones bond. The right boundary sits at `(n - 1) · strain`, so any
//! strain above one stretches the chain and makes breaking the central bond
//! energetically favourable.
//!
//! Public derivatives are taken with respect to mass-weighted coordinates
//! `x_i = √m_i · q_i`. With unit masses these coincide with raw positions.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::Tridiagonal;

/// Interaction parameters: a Lennard-Jones central bond and harmonic springs
/// everywhere else.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialParams {
    /// Lennard-Jones well depth.
    pub epsilon: f64,
    /// Lennard-Jones length scale.
    pub sigma: f64,
    pub spring_rest: f64,
    pub spring_k: f64,
}

impl Default for PotentialParams {
    /// `ε = 1`, `σ = 2^(-1/6)` (LJ minimum at unit length), unit springs.
    fn default() -> Self {
        Self {
            epsilon: 1.0,
            sigma: 2f64.powf(-1.0 / 6.0),
            spring_rest: 1.0,
            spring_k: 1.0,
        }
    }
}

impl PotentialParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidParameter(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::InvalidParameter(format!("sigma must be > 0, got {}", self.sigma)));
        }
        if !(self.spring_k > 0.0) {
            return Err(Error::InvalidParameter(format!("spring_k must be > 0, got {}", self.spring_k)));
        }
        Ok(())
    }
}

/// Lennard-Jones energy `4ε((σ/r)¹² − (σ/r)⁶)`.
pub fn central_bond_energy(r: f64, params: &PotentialParams) -> Result<f64> {
    central_bond_derivative(r, params, 0)
}

/// Derivative of the Lennard-Jones bond energy of order 0, 1 or 2.
pub fn central_bond_derivative(r: f64, params: &PotentialParams, order: u8) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::InvalidParameter(format!("bond length must be > 0, got {r}")));
    }
    // Written around the well position r_m = 2^(1/6) σ, which keeps the
    // default bond minimum exact at r = 1.
    let x6 = (params.sigma * 2f64.powf(1.0 / 6.0) / r).powi(6);
    let x12 = x6 * x6;
    let e = params.epsilon;
    match order {
        0 => Ok(e * (x12 - 2.0 * x6)),
        1 => Ok(12.0 * e * (x6 - x12) / r),
        2 => Ok(12.0 * e * (13.0 * x12 - 7.0 * x6) / (r * r)),
        _ => Err(Error::InvalidParameter(format!("unsupported derivative order {order}"))),
    }
}

/// `½ k (r − r₀)²`
pub fn spring_energy(r: f64, params: &PotentialParams) -> f64 {
    let d = r - params.spring_rest;
    0.5 * params.spring_k * d * d
}

pub fn spring_force_derivative(r: f64, params: &PotentialParams) -> f64 {
    params.spring_k * (r - params.spring_rest)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainSystem {
    pub n_atoms: usize,
    pub strain: f64,
    pub left_boundary: f64,
    pub right_boundary: f64,
    pub params: PotentialParams,
    pub masses: Vec<f64>,
    pub center_left: usize,
}

impl ChainSystem {
    /// Chain of `n_atoms` unit-mass atoms with endpoints at `0` and
    /// `(n_atoms − 1) · strain`, default potential parameters.
    pub fn new(n_atoms: usize, strain: f64) -> Result<Self> {
        Self::with_params(n_atoms, strain, PotentialParams::default())
    }

    pub fn with_params(n_atoms: usize, strain: f64, params: PotentialParams) -> Result<Self> {
        if n_atoms < 4 || n_atoms % 2 != 0 {
            return Err(Error::InvalidParameter(format!(
                "n_atoms must be even and >= 4, got {n_atoms}"
            )));
        }
        if !(strain > 0.0) || !strain.is_finite() {
            return Err(Error::InvalidParameter(format!("strain must be > 0, got {strain}")));
        }
        params.validate()?;
        Ok(Self {
            n_atoms,
            strain,
            left_boundary: 0.0,
            right_boundary: (n_atoms - 1) as f64 * strain,
            params,
            masses: vec![1.0; n_atoms],
            center_left: n_atoms / 2 - 1,
        })
    }

    pub fn with_masses(mut self, masses: Vec<f64>) -> Result<Self> {
        if masses.len() != self.n_atoms {
            return Err(Error::DimensionMismatch {
                expected: self.n_atoms,
                actual: masses.len(),
            });
        }
        if masses.iter().any(|&m| !(m > 0.0)) {
            return Err(Error::InvalidParameter("masses must be positive".into()));
        }
        self.masses = masses;
        Ok(self)
    }

    /// Number of free (interior) atoms.
    pub fn n_free(&self) -> usize {
        self.n_atoms - 2
    }

    /// Distance between the pinned endpoints.
    pub fn length(&self) -> f64 {
        self.right_boundary - self.left_boundary
    }

    /// Free-DOF index of atom `center_left`.
    pub fn center_free(&self) -> usize {
        self.center_left - 1
    }

    fn free_sqrt_mass(&self, i: usize) -> f64 {
        self.masses[i + 1].sqrt()
    }

    fn is_central(&self, bond: usize) -> bool {
        bond == self.center_left
    }

    /// Positions of all atoms, boundaries included.
    pub fn full_positions(&self, free: &[f64]) -> Vec<f64> {
        let mut q = Vec::with_capacity(self.n_atoms);
        q.push(self.left_boundary);
        q.extend_from_slice(free);
        q.push(self.right_boundary);
        q
    }

    /// Bond lengths `q_{b+1} − q_b` for `b = 0..n_atoms−1`, checked positive.
    pub fn bond_lengths(&self, free: &[f64]) -> Result<Vec<f64>> {
        if free.len() != self.n_free() {
            return Err(Error::DimensionMismatch {
                expected: self.n_free(),
                actual: free.len(),
            });
        }
        let q = self.full_positions(free);
        q.windows(2)
            .enumerate()
            .map(|(bond, w)| {
                let length = w[1] - w[0];
                if length > 0.0 {
                    Ok(length)
                } else {
                    Err(Error::NonPositiveBond { bond, length })
                }
            })
            .collect()
    }

    /// Energy as a function of raw free-atom positions.
    pub fn energy_raw(&self, free: &[f64]) -> Result<f64> {
        let bonds = self.bond_lengths(free)?;
        let mut e = 0.0;
        for (b, &r) in bonds.iter().enumerate() {
            e += if self.is_central(b) {
                central_bond_energy(r, &self.params)?
            } else {
                spring_energy(r, &self.params)
            };
        }
        Ok(e)
    }

    /// dV/dr for every bond.
    fn bond_tensions(&self, bonds: &[f64]) -> Result<Vec<f64>> {
        bonds
            .iter()
            .enumerate()
            .map(|(b, &r)| {
                if self.is_central(b) {
                    central_bond_derivative(r, &self.params, 1)
                } else {
                    Ok(spring_force_derivative(r, &self.params))
                }
            })
            .collect()
    }

    /// Gradient with respect to raw free-atom positions.
    pub fn gradient_raw(&self, free: &[f64]) -> Result<Vec<f64>> {
        let bonds = self.bond_lengths(free)?;
        let t = self.bond_tensions(&bonds)?;
        // Free atom i is atom i + 1: bond i on its left, bond i + 1 on its right.
        Ok((0..self.n_free()).map(|i| t[i] - t[i + 1]).collect())
    }

    /// Hessian with respect to raw free-atom positions.
    pub fn hessian_raw(&self, free: &[f64]) -> Result<Tridiagonal> {
        let bonds = self.bond_lengths(free)?;
        let n = self.n_free();
        let stiff: Vec<f64> = bonds
            .iter()
            .enumerate()
            .map(|(b, &r)| {
                if self.is_central(b) {
                    central_bond_derivative(r, &self.params, 2)
                } else {
                    Ok(self.params.spring_k)
                }
            })
            .collect::<Result<_>>()?;
        let mut h = Tridiagonal::zeros(n);
        for i in 0..n {
            h.diag[i] = stiff[i] + stiff[i + 1];
        }
        for i in 0..n.saturating_sub(1) {
            h.off[i] = -stiff[i + 1];
        }
        Ok(h)
    }

    pub fn validate(&self, config: &Configuration) -> Result<()> {
        self.bond_lengths(&config.positions(self)).map(|_| ())
    }
}

/// Mass-weighted positions of the free atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    pub free_positions: DVector<f64>,
}

impl Configuration {
    pub fn from_positions(system: &ChainSystem, raw: &[f64]) -> Result<Self> {
        if raw.len() != system.n_free() {
            return Err(Error::DimensionMismatch {
                expected: system.n_free(),
                actual: raw.len(),
            });
        }
        let x = raw
            .iter()
            .enumerate()
            .map(|(i, &q)| q * system.free_sqrt_mass(i));
        Ok(Self {
            free_positions: DVector::from_iterator(raw.len(), x),
        })
    }

    /// Every bond stretched equally between the two boundaries.
    pub fn uniform(system: &ChainSystem) -> Self {
        let a = system.length() / (system.n_atoms - 1) as f64;
        let raw: Vec<f64> = (1..system.n_atoms - 1)
            .map(|i| system.left_boundary + i as f64 * a)
            .collect();
        Self::from_positions(system, &raw).expect("length matches n_free")
    }

    /// Raw (unweighted) free-atom positions.
    pub fn positions(&self, system: &ChainSystem) -> Vec<f64> {
        self.free_positions
            .iter()
            .enumerate()
            .map(|(i, &x)| x / system.free_sqrt_mass(i))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.free_positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.free_positions.is_empty()
    }
}

fn check_len(system: &ChainSystem, config: &Configuration) -> Result<()> {
    if config.len() != system.n_free() {
        return Err(Error::DimensionMismatch {
            expected: system.n_free(),
            actual: config.len(),
        });
    }
    Ok(())
}

pub fn total_energy(system: &ChainSystem, config: &Configuration) -> Result<f64> {
    check_len(system, config)?;
    system.energy_raw(&config.positions(system))
}

/// Mass-weighted gradient `∂V/∂x_i = (∂V/∂q_i)/√m_i`.
pub fn gradient(system: &ChainSystem, config: &Configuration) -> Result<DVector<f64>> {
    check_len(system, config)?;
    let g = system.gradient_raw(&config.positions(system))?;
    Ok(DVector::from_iterator(
        g.len(),
        g.iter().enumerate().map(|(i, gi)| gi / system.free_sqrt_mass(i)),
    ))
}

/// Mass-weighted Hessian (dynamical matrix). Tridiagonal and exactly
/// symmetric.
pub fn hessian(system: &ChainSystem, config: &Configuration) -> Result<DMatrix<f64>> {
    check_len(system, config)?;
    let mut h = system.hessian_raw(&config.positions(system))?;
    for i in 0..h.dim() {
        let mi = system.free_sqrt_mass(i);
        h.diag[i] /= mi * mi;
        if i + 1 < h.dim() {
            h.off[i] /= mi * system.free_sqrt_mass(i + 1);
        }
    }
    Ok(h.to_dense())
}
