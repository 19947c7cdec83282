//! Repatom meshes and exact harmonic coarse-graining of a dynamical matrix.
//!
//! Ordering the degrees of freedom as `(repatoms, constrained)` splits the
//! saddle Hessian into
//!
//! ```text
//! D = [ R   B ]
//!     [ Bᵀ  C ]
//! ```
//!
//! Integrating out the constrained block leaves the Schur complement
//! `D_cg = R − B C⁻¹ Bᵀ` as the coarse dynamical matrix. `C` must be
//! symmetric positive definite; when it is not, the repatom region does not
//! contain the transition and the mesh is rejected.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::chain::ChainSystem;
use crate::error::{Error, Result};
use crate::linalg::symmetrize;

/// Strictly increasing, non-empty set of free-DOF indices that survive
/// coarse-graining.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RepatomSet {
    indices: Vec<usize>,
}

impl RepatomSet {
    /// Sorts and deduplicates `indices`; every index must be `< dim`.
    pub fn new(mut indices: Vec<usize>, dim: usize) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        if indices.is_empty() {
            return Err(Error::InvalidParameter("repatom set must be non-empty".into()));
        }
        if let Some(&index) = indices.iter().find(|&&i| i >= dim) {
            return Err(Error::IndexOutOfRange { index, dim });
        }
        Ok(Self { indices })
    }

    /// Every index `0..dim`.
    pub fn full(dim: usize) -> Self {
        Self {
            indices: (0..dim).collect(),
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }

    /// Complement in `0..dim`, ascending.
    pub fn constrained(&self, dim: usize) -> Vec<usize> {
        (0..dim).filter(|&i| !self.contains(i)).collect()
    }

    /// Positions of `self` inside `outer`, if `self ⊆ outer`.
    pub fn positions_within(&self, outer: &RepatomSet) -> Option<Vec<usize>> {
        self.indices
            .iter()
            .map(|i| outer.indices.binary_search(i).ok())
            .collect()
    }
}

/// Repatom placement scheme around the central bond.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MeshScheme {
    /// Contiguous core only.
    Localized,
    /// Core plus peripheral repatoms whose gaps double moving outward.
    Delocalized,
    /// Core plus one peripheral repatom per side, one constrained atom away
    /// from the core.
    DelocalizedMinimal,
}

impl MeshScheme {
    pub fn name(self) -> &'static str {
        match self {
            MeshScheme::Localized => "localized",
            MeshScheme::Delocalized => "delocalized",
            MeshScheme::DelocalizedMinimal => "delocalized-minimal",
        }
    }

    pub fn indices(self, system: &ChainSystem, core_size: usize) -> Result<RepatomSet> {
        match self {
            MeshScheme::Localized => localized_indices(system, core_size),
            MeshScheme::Delocalized => delocalized_indices(system, core_size),
            MeshScheme::DelocalizedMinimal => delocalized_minimal_indices(system, core_size),
        }
    }
}

impl fmt::Display for MeshScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MeshScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "localized" => Ok(MeshScheme::Localized),
            "delocalized" => Ok(MeshScheme::Delocalized),
            "delocalized-minimal" => Ok(MeshScheme::DelocalizedMinimal),
            other => Err(Error::InvalidParameter(format!("unknown scheme '{other}'"))),
        }
    }
}

fn check_core(system: &ChainSystem, core_size: usize) -> Result<()> {
    let max = system.n_free();
    if core_size < 2 || core_size % 2 != 0 || core_size > max {
        return Err(Error::InvalidCoreSize { core_size, max });
    }
    Ok(())
}

/// Atom labels `{c − ℓ} ∪ {c + 1 + ℓ}` for `ℓ = 0..N/2`, `c = center_left`.
fn core_atoms(system: &ChainSystem, core_size: usize) -> Vec<usize> {
    let c = system.center_left;
    (0..core_size / 2).flat_map(|l| [c - l, c + 1 + l]).collect()
}

fn to_free(system: &ChainSystem, atoms: Vec<usize>) -> Result<RepatomSet> {
    RepatomSet::new(atoms.into_iter().map(|a| a - 1).collect(), system.n_free())
}

pub fn localized_indices(system: &ChainSystem, core_size: usize) -> Result<RepatomSet> {
    check_core(system, core_size)?;
    to_free(system, core_atoms(system, core_size))
}

/// Core plus peripheral atoms at `c − (N/2 − 1) − 2^ℓ − (ℓ − 1)` on the left
/// (while `> 0`) and the mirror image on the right (while `< n_atoms − 1`).
pub fn delocalized_indices(system: &ChainSystem, core_size: usize) -> Result<RepatomSet> {
    check_core(system, core_size)?;
    let mut atoms = core_atoms(system, core_size);
    let c = system.center_left as i64;
    let half = (core_size / 2) as i64 - 1;
    let last = system.n_atoms as i64 - 1;
    for l in 1..63 {
        let offset = (1i64 << l) + (l - 1);
        let left = c - half - offset;
        if left <= 0 {
            break;
        }
        atoms.push(left as usize);
    }
    for l in 1..63 {
        let offset = (1i64 << l) + (l - 1);
        let right = c + 1 + half + offset;
        if right >= last {
            break;
        }
        atoms.push(right as usize);
    }
    to_free(system, atoms)
}

/// Only the first peripheral shell of the delocalized scheme.
pub fn delocalized_minimal_indices(system: &ChainSystem, core_size: usize) -> Result<RepatomSet> {
    check_core(system, core_size)?;
    let mut atoms = core_atoms(system, core_size);
    let c = system.center_left as i64;
    let half = (core_size / 2) as i64 - 1;
    let left = c - half - 2;
    let right = c + 1 + half + 2;
    if left > 0 {
        atoms.push(left as usize);
    }
    if right < system.n_atoms as i64 - 1 {
        atoms.push(right as usize);
    }
    to_free(system, atoms)
}

/// Blocks of a symmetric matrix under a `(repatoms, constrained)` ordering.
#[derive(Debug, Clone)]
pub struct PartitionedHessian {
    pub r: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub repatoms: RepatomSet,
    /// Constrained indices in the original ordering, ascending.
    pub constrained: Vec<usize>,
}

impl PartitionedHessian {
    pub fn dim(&self) -> usize {
        self.repatoms.len() + self.constrained.len()
    }

    /// `permutation()[k]` is the original index placed at partitioned
    /// position `k`.
    pub fn permutation(&self) -> Vec<usize> {
        self.repatoms
            .indices()
            .iter()
            .chain(&self.constrained)
            .copied()
            .collect()
    }

    /// Rebuilds the original matrix from the blocks.
    pub fn reassemble(&self) -> DMatrix<f64> {
        let n = self.dim();
        let nr = self.repatoms.len();
        let perm = self.permutation();
        let mut m = DMatrix::zeros(n, n);
        for (pi, &i) in perm.iter().enumerate() {
            for (pj, &j) in perm.iter().enumerate() {
                m[(i, j)] = match (pi < nr, pj < nr) {
                    (true, true) => self.r[(pi, pj)],
                    (true, false) => self.b[(pi, pj - nr)],
                    (false, true) => self.b[(pj, pi - nr)],
                    (false, false) => self.c[(pi - nr, pj - nr)],
                };
            }
        }
        m
    }

    /// Splits a full-length vector into its repatom and constrained parts.
    pub fn split(&self, u: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let ur = DVector::from_iterator(self.repatoms.len(), self.repatoms.indices().iter().map(|&i| u[i]));
        let uc = DVector::from_iterator(self.constrained.len(), self.constrained.iter().map(|&i| u[i]));
        (ur, uc)
    }

    /// Inverse of [`split`](Self::split).
    pub fn merge(&self, ur: &DVector<f64>, uc: &DVector<f64>) -> DVector<f64> {
        let mut u = DVector::zeros(self.dim());
        for (k, &i) in self.repatoms.indices().iter().enumerate() {
            u[i] = ur[k];
        }
        for (k, &i) in self.constrained.iter().enumerate() {
            u[i] = uc[k];
        }
        u
    }

    /// Cholesky factorization of `C`.
    pub fn factor_constrained(&self) -> Result<ConstrainedFactor> {
        ConstrainedFactor::new(&self.c)
    }
}

pub fn partition_hessian(d_at: &DMatrix<f64>, repatoms: &RepatomSet) -> Result<PartitionedHessian> {
    let n = d_at.nrows();
    if d_at.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: d_at.ncols(),
        });
    }
    if let Some(&index) = repatoms.indices().iter().find(|&&i| i >= n) {
        return Err(Error::IndexOutOfRange { index, dim: n });
    }
    let rep = repatoms.indices();
    let con = repatoms.constrained(n);
    Ok(PartitionedHessian {
        r: d_at.select_rows(rep).select_columns(rep),
        b: d_at.select_rows(rep).select_columns(&con),
        c: d_at.select_rows(&con).select_columns(&con),
        repatoms: repatoms.clone(),
        constrained: con,
    })
}

/// Cholesky factor of the constrained block. An empty block factors
/// trivially with log-determinant zero.
#[derive(Debug, Clone)]
pub struct ConstrainedFactor {
    chol: Option<Cholesky<f64, Dyn>>,
    log_det: f64,
}

impl ConstrainedFactor {
    pub fn new(c: &DMatrix<f64>) -> Result<Self> {
        if c.nrows() == 0 {
            return Ok(Self { chol: None, log_det: 0.0 });
        }
        let chol = Cholesky::new(c.clone()).ok_or(Error::ConstrainedNotPositiveDefinite)?;
        let l = chol.l_dirty();
        let log_det = 2.0 * (0..c.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>();
        if !log_det.is_finite() {
            return Err(Error::ConstrainedNotPositiveDefinite);
        }
        Ok(Self {
            chol: Some(chol),
            log_det,
        })
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// `C⁻¹ X`
    pub fn solve(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.chol {
            Some(ch) => ch.solve(x),
            None => x.clone(),
        }
    }

    pub fn solve_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.chol {
            Some(ch) => ch.solve(x),
            None => x.clone(),
        }
    }
}

/// Coarse dynamical matrix over the repatoms.
#[derive(Debug, Clone)]
pub struct CoarseHessian {
    pub d_cg: DMatrix<f64>,
    /// `log det C`, zero when nothing is constrained.
    pub log_det_c: f64,
    pub source: PartitionedHessian,
    factor: ConstrainedFactor,
}

impl CoarseHessian {
    pub fn dim(&self) -> usize {
        self.d_cg.nrows()
    }

    pub fn factor(&self) -> &ConstrainedFactor {
        &self.factor
    }

    /// `−C⁻¹ Bᵀ u_r`
    pub fn relaxed_response(&self, u_r: &DVector<f64>) -> Result<DVector<f64>> {
        relaxed_with(&self.source, &self.factor, u_r)
    }

    /// `(v, −C⁻¹ Bᵀ v)` mapped back to the original ordering.
    pub fn embed_min(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        let uc = self.relaxed_response(v)?;
        Ok(self.source.merge(v, &uc))
    }
}

/// `D_cg = R − B C⁻¹ Bᵀ` via Cholesky solves, symmetrized afterwards.
pub fn schur_complement(part: &PartitionedHessian) -> Result<CoarseHessian> {
    let factor = part.factor_constrained()?;
    let d_cg = if part.constrained.is_empty() {
        part.r.clone()
    } else {
        let x = factor.solve(&part.b.transpose());
        symmetrize(&(&part.r - &part.b * x))
    };
    Ok(CoarseHessian {
        d_cg,
        log_det_c: factor.log_det(),
        source: part.clone(),
        factor,
    })
}

fn relaxed_with(part: &PartitionedHessian, factor: &ConstrainedFactor, u_r: &DVector<f64>) -> Result<DVector<f64>> {
    if u_r.len() != part.repatoms.len() {
        return Err(Error::DimensionMismatch {
            expected: part.repatoms.len(),
            actual: u_r.len(),
        });
    }
    if part.constrained.is_empty() {
        return Ok(DVector::zeros(0));
    }
    Ok(-factor.solve_vec(&(part.b.transpose() * u_r)))
}

/// Energy-minimizing constrained displacements `u_min^c = −C⁻¹ Bᵀ u_r`.
pub fn relaxed_response(part: &PartitionedHessian, u_r: &DVector<f64>) -> Result<DVector<f64>> {
    relaxed_with(part, &part.factor_constrained()?, u_r)
}

/// Embeds a repatom vector into the full space with relaxed constrained
/// atoms; satisfies `D v_min = (D_cg v, 0)`.
pub fn embed_min(part: &PartitionedHessian, v: &DVector<f64>) -> Result<DVector<f64>> {
    let uc = relaxed_response(part, v)?;
    Ok(part.merge(v, &uc))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain_202() -> ChainSystem {
        ChainSystem::new(202, 1.02).unwrap()
    }

    fn atoms(set: &RepatomSet) -> Vec<usize> {
        set.indices().iter().map(|i| i + 1).collect()
    }

    #[test]
    fn localized_small_cores() {
        let sys = chain_202();
        assert_eq!(atoms(&localized_indices(&sys, 2).unwrap()), vec![100, 101]);
        assert_eq!(atoms(&localized_indices(&sys, 4).unwrap()), vec![99, 100, 101, 102]);
        assert_eq!(atoms(&localized_indices(&sys, 200).unwrap()), (1..=200).collect::<Vec<_>>());
    }

    #[test]
    fn core_size_validation() {
        let sys = chain_202();
        for bad in [0, 1, 3, 202, 201] {
            assert!(matches!(
                localized_indices(&sys, bad),
                Err(Error::InvalidCoreSize { .. })
            ));
            assert!(delocalized_indices(&sys, bad).is_err());
        }
    }

    #[test]
    fn delocalized_core_six() {
        let sys = chain_202();
        let expected: Vec<usize> = vec![
            29, 62, 79, 88, 93, 96, 98, 99, 100, 101, 102, 103, 105, 108, 113, 122, 139, 172,
        ];
        assert_eq!(atoms(&delocalized_indices(&sys, 6).unwrap()), expected);
    }

    #[test]
    fn delocalized_gaps_double_and_mirror() {
        let sys = chain_202();
        for core in (2..=200).step_by(2) {
            let set = atoms(&delocalized_indices(&sys, core).unwrap());
            for &a in &set {
                assert!(set.contains(&(201 - a)), "core {core}: {a} has no mirror");
            }
            let left: Vec<usize> = set.iter().copied().filter(|&a| a <= 100).collect();
            let core_start = 100 - (core / 2 - 1);
            let outer: Vec<usize> = left.iter().rev().copied().filter(|&a| a <= core_start).collect();
            for (k, w) in outer.windows(2).enumerate() {
                assert_eq!(w[0] - w[1] - 1, 1 << k, "core {core}");
            }
        }
    }

    #[test]
    fn delocalized_minimal_adds_one_per_side() {
        let sys = chain_202();
        assert_eq!(
            atoms(&delocalized_minimal_indices(&sys, 4).unwrap()),
            vec![97, 99, 100, 101, 102, 104]
        );
        assert_eq!(
            atoms(&delocalized_minimal_indices(&sys, 200).unwrap()),
            (1..=200).collect::<Vec<_>>()
        );
    }

    fn sample3() -> DMatrix<f64> {
        DMatrix::from_row_slice(3, 3, &[2.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 2.0])
    }

    #[test]
    fn partition_slices_blocks() {
        let m = sample3();
        let p = partition_hessian(&m, &RepatomSet::new(vec![0], 3).unwrap()).unwrap();
        assert_eq!(p.r, DMatrix::from_element(1, 1, 2.0));
        assert_eq!(p.b, DMatrix::from_row_slice(1, 2, &[-1.0, 0.0]));
        assert_eq!(p.c, DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0]));
        assert_eq!(p.reassemble(), m);
    }

    #[test]
    fn partition_rejects_out_of_range() {
        let m = sample3();
        assert!(RepatomSet::new(vec![3], 3).is_err());
        let wide = RepatomSet::new(vec![0, 4], 5).unwrap();
        assert!(matches!(
            partition_hessian(&m, &wide),
            Err(Error::IndexOutOfRange { index: 4, dim: 3 })
        ));
    }

    #[test]
    fn full_resolution_is_identity() {
        let m = sample3();
        let p = partition_hessian(&m, &RepatomSet::full(3)).unwrap();
        assert_eq!(p.c.nrows(), 0);
        let cg = schur_complement(&p).unwrap();
        assert_eq!(cg.d_cg, m);
        assert_eq!(cg.log_det_c, 0.0);
    }

    #[test]
    fn schur_hand_example() {
        let p = partition_hessian(&sample3(), &RepatomSet::new(vec![0], 3).unwrap()).unwrap();
        let cg = schur_complement(&p).unwrap();
        assert!((cg.d_cg[(0, 0)] - 4.0 / 3.0).abs() < 1e-15);
        assert!((cg.log_det_c - 3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn decoupled_blocks_leave_r_unchanged() {
        let m = DMatrix::from_row_slice(3, 3, &[-1.0, 0.0, 0.0, 0.0, 2.0, 0.5, 0.0, 0.5, 3.0]);
        let p = partition_hessian(&m, &RepatomSet::new(vec![0], 3).unwrap()).unwrap();
        let cg = schur_complement(&p).unwrap();
        assert_eq!(cg.d_cg[(0, 0)], -1.0);
        let u = relaxed_response(&p, &DVector::from_element(1, 3.7)).unwrap();
        assert_eq!(u, DVector::zeros(2));
    }

    #[test]
    fn indefinite_constrained_block_is_rejected() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 0.1, 0.0, 0.1, -1.0, 0.0, 0.0, 0.0, 1.0]);
        let p = partition_hessian(&m, &RepatomSet::new(vec![0], 3).unwrap()).unwrap();
        assert!(matches!(schur_complement(&p), Err(Error::ConstrainedNotPositiveDefinite)));
        assert!(relaxed_response(&p, &DVector::from_element(1, 1.0)).is_err());
    }

    #[test]
    fn embedding_zero_block() {
        let m = sample3();
        let p = partition_hessian(&m, &RepatomSet::new(vec![1], 3).unwrap()).unwrap();
        let cg = schur_complement(&p).unwrap();
        let v = DVector::from_element(1, 0.7);
        let vm = cg.embed_min(&v).unwrap();
        let image = &m * &vm;
        assert!(image[0].abs() < 1e-15 && image[2].abs() < 1e-15);
        assert!((image[1] - cg.d_cg[(0, 0)] * 0.7).abs() < 1e-15);
        assert_eq!(embed_min(&p, &DVector::zeros(1)).unwrap(), DVector::zeros(3));
    }
}
