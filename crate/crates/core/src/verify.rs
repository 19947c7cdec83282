//! Invariant checks over a sweep configuration, reported with measured
//! residuals so failures can be diagnosed rather than just counted.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::chain::{self, ChainSystem, Configuration};
use crate::coarse::{localized_indices, partition_hessian, schur_complement, MeshScheme};
use crate::error::Result;
use crate::linalg::{inf_norm, max_abs};
use crate::oracles;
use crate::rate::{coarse_saddle_free_energy, RateParams};
use crate::stationary::{analytic_unstable_mode, find_saddle_analytic};
use crate::sweep::{MeshAnalysis, SaddleMethod, StrainAnalysis, SweepConfig, SADDLE_AGREEMENT_TOL};

/// Strain at which the 8-atom companion chain has a first-order saddle.
pub const SMALL_CHAIN_STRAIN: f64 = 1.3;
pub const TEMPERATURES: [f64; 3] = [0.5, 1.0, 10.0];

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    /// Measured quantity; the check passes when it is `<= tolerance`.
    pub residual: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    pub fn at_most(name: impl Into<String>, residual: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            residual,
            tolerance,
            // NaN never passes
            passed: residual <= tolerance,
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<44} residual={:.3e} tol={:.1e}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.residual,
            self.tolerance
        )
    }
}

#[derive(Debug, Clone, Default)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{c}")?;
        }
        let failed = self.failures().count();
        write!(f, "{} checks, {} failed", self.checks.len(), failed)
    }
}

/// `max|M − Mᵀ| / ‖M‖∞`
pub fn symmetry_check(name: &str, m: &DMatrix<f64>) -> Check {
    let asym = (m - m.transpose()).amax();
    Check::at_most(name, asym / inf_norm(m).max(f64::MIN_POSITIVE), 1e-14)
}

/// Random strained configuration of `system`: uniform positions plus
/// `U(−amp, amp)` noise on every free atom.
pub fn random_configuration(system: &ChainSystem, amp: f64, rng: &mut impl Rng) -> Result<Configuration> {
    let s = system.strain;
    let raw: Vec<f64> = (1..system.n_atoms - 1)
        .map(|i| i as f64 * s + rng.random_range(-amp..amp))
        .collect();
    Configuration::from_positions(system, &raw)
}

/// Max relative gradient and Hessian errors against finite differences of
/// the naive energy, over `n_configs` random configurations with random
/// masses.
pub fn derivative_residuals(n_atoms: usize, strain: f64, n_configs: usize, seed: u64) -> Result<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut g_err, mut h_err) = (0.0f64, 0.0f64);
    for _ in 0..n_configs {
        let masses = (0..n_atoms).map(|_| rng.random_range(0.5..2.0)).collect();
        let sys = ChainSystem::new(n_atoms, strain)?.with_masses(masses)?;
        let cfg = random_configuration(&sys, 0.1, &mut rng)?;
        let x = cfg.free_positions.as_slice();
        let energy = |y: &[f64]| oracles::naive_energy(&sys, y);
        let g = chain::gradient(&sys, &cfg)?;
        let g_fd = oracles::fd_gradient(energy, x, 1e-6);
        let dg = max_abs(g.iter().zip(&g_fd).map(|(a, b)| a - b));
        g_err = g_err.max(dg / g.amax());
        let h = chain::hessian(&sys, &cfg)?;
        let h_fd = oracles::fd_hessian(energy, x, 5e-4);
        h_err = h_err.max((&h - h_fd).amax() / h.amax());
    }
    Ok((g_err, h_err))
}

/// Saddle cross-validation, symmetry and equal spring bonds.
pub fn saddle_checks(strain: &StrainAnalysis) -> Vec<Check> {
    let sys = &strain.system;
    let tag = format!("s={}", sys.strain);
    let mut out = Vec::new();
    let drag = strain.saddle.positions(sys);
    let agree = match find_saddle_analytic(sys) {
        Ok(a) => max_abs(drag.iter().zip(a.positions(sys)).map(|(x, y)| x - y)),
        Err(_) => f64::NAN,
    };
    out.push(Check::at_most(format!("saddle drag vs analytic [{tag}]"), agree, SADDLE_AGREEMENT_TOL));

    let full = sys.full_positions(&drag);
    let len = sys.right_boundary + sys.left_boundary;
    let n = full.len();
    let sym = max_abs((0..n).map(|i| full[i] + full[n - 1 - i] - len));
    out.push(Check::at_most(format!("saddle mirror symmetry [{tag}]"), sym, 1e-10));
    let springs: Vec<f64> = (0..n - 1)
        .filter(|&b| b != sys.center_left)
        .map(|b| full[b + 1] - full[b])
        .collect();
    let lo = springs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = springs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    out.push(Check::at_most(format!("saddle equal spring bonds [{tag}]"), hi - lo, 1e-10));
    out.push(Check::at_most(
        format!("saddle gradient residual [{tag}]"),
        strain.saddle.residual,
        1e-10,
    ));
    out.push(symmetry_check(&format!("saddle Hessian symmetry [{tag}]"), &strain.d_at));
    out
}

/// `1 − |cos|` between the dense unstable eigenvector and the closed-form
/// mode. Only meaningful for unit masses and unit springs.
pub fn eigenmode_residual(strain: &StrainAnalysis) -> Result<f64> {
    let c = strain.system.center_free();
    let mode = analytic_unstable_mode(strain.lambda_at, strain.u_at[c], strain.u_at.len())?;
    let cos = mode.dot(&strain.u_at).abs() / (mode.norm() * strain.u_at.norm());
    Ok(1.0 - cos)
}

/// Max violation of Cauchy interlacing between the inverse spectra:
/// with σ the sorted eigenvalues of `D_at⁻¹` (n of them) and τ those of
/// `D_cg⁻¹` (m), `σ_j ≤ τ_j ≤ σ_{n−m+j}`. Scaled by `max|σ|`.
pub fn interlacing_violation(strain: &StrainAnalysis, mesh: &MeshAnalysis) -> f64 {
    let inv = |v: &DVector<f64>| {
        let mut s: Vec<f64> = v.iter().map(|x| 1.0 / x).collect();
        s.sort_by(f64::total_cmp);
        s
    };
    let sigma = inv(&strain.spectrum.values);
    let tau = inv(&mesh.spectrum_cg.values);
    let (n, m) = (sigma.len(), tau.len());
    let scale = max_abs(sigma.iter().copied());
    let worst = (0..m)
        .map(|j| (sigma[j] - tau[j]).max(tau[j] - sigma[n - m + j]))
        .fold(f64::NEG_INFINITY, f64::max);
    worst.max(0.0) / scale
}

/// `(max ‖(D v_min)_c‖∞ / ‖D‖∞, max |v·D_cg v − v_min·D v_min|)` over random
/// unit vectors `v`.
pub fn embedding_residuals(
    strain: &StrainAnalysis,
    mesh: &MeshAnalysis,
    samples: usize,
    rng: &mut impl Rng,
) -> Result<(f64, f64)> {
    let d = &strain.d_at;
    let norm = inf_norm(d);
    let m = mesh.n_repatoms();
    let cons = &mesh.part().constrained;
    let (mut block, mut quad) = (0.0f64, 0.0f64);
    for _ in 0..samples {
        let v = DVector::from_fn(m, |_, _| StandardNormal.sample(rng)).normalize();
        let v_min = mesh.coarse.embed_min(&v)?;
        let image = d * &v_min;
        block = block.max(max_abs(cons.iter().map(|&i| image[i])) / norm);
        let lhs = v.dot(&(&mesh.coarse.d_cg * &v));
        quad = quad.max((lhs - v_min.dot(&image)).abs());
    }
    Ok((block, quad))
}

/// Max over [`TEMPERATURES`] of `|ρ(β) − ρ(1)|`, where `ρ = R_cg/R_at` is
/// formed from the two absolute log-rates.
pub fn temperature_spread(strain: &StrainAnalysis, mesh: &MeshAnalysis) -> Result<f64> {
    let ratio = |beta: f64| -> Result<f64> {
        let lp = mesh.log_partition(strain, &RateParams::new(beta)?)?;
        Ok((lp.rate_cg()?.log_rate - lp.rate_at()?.log_rate).exp())
    };
    let base = ratio(1.0)?;
    let mut worst = 0.0f64;
    for b in TEMPERATURES {
        worst = worst.max((ratio(b)? - base).abs());
    }
    Ok(worst)
}

/// Entrywise difference between coarse-graining to `outer` then to `inner`
/// and coarse-graining straight to `inner` (localized meshes).
pub fn schur_composition_residual(strain: &StrainAnalysis, inner: usize, outer: usize) -> Result<f64> {
    let sys = &strain.system;
    let small = localized_indices(sys, inner)?;
    let big = localized_indices(sys, outer)?;
    let direct = schur_complement(&partition_hessian(&strain.d_at, &small)?)?;
    let step = schur_complement(&partition_hessian(&strain.d_at, &big)?)?;
    let pos = small.positions_within(&big).expect("localized meshes nest");
    let inner_set = crate::coarse::RepatomSet::new(pos, big.len())?;
    let two_step = schur_complement(&partition_hessian(&step.d_cg, &inner_set)?)?;
    Ok((direct.d_cg - two_step.d_cg).amax())
}

/// Result of the 8-atom oracle comparison.
#[derive(Debug, Clone, Copy)]
pub struct SmallInstance {
    /// `|Z_closed/Z_mc − 1|`
    pub z_rel_diff: f64,
    pub mc_rel_std_err: f64,
    /// `|V_cg(u_r) − V_quad(u_r)|` maximized over the tested `u_r`.
    pub free_energy_diff: f64,
}

/// Compares the closed-form coarse saddle partition function and free energy
/// with Monte-Carlo and quadrature oracles on an 8-atom chain, localized core
/// of 4 (two constrained atoms).
pub fn small_instance(beta: f64, samples: usize, seed: u64) -> Result<SmallInstance> {
    let sys = ChainSystem::new(8, SMALL_CHAIN_STRAIN)?;
    let strain = StrainAnalysis::new(sys, SaddleMethod::Both)?;
    let mesh = strain.mesh(MeshScheme::Localized, 4)?;
    let params = RateParams::new(beta)?;
    let closed = mesh.log_partition(&strain, &params)?.log_z_saddle_cg;

    let part = mesh.part();
    let mut normal = DVector::zeros(strain.d_at.nrows());
    for (k, &i) in part.repatoms.indices().iter().enumerate() {
        normal[i] = mesh.modes.v_cg[k];
    }
    let mc = oracles::mc_log_z_hyperplane(&strain.d_at, &normal, strain.saddle.energy, beta, samples, seed)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let mut fe = 0.0f64;
    for k in 0..5 {
        let u_r = if k == 0 {
            DVector::zeros(part.repatoms.len())
        } else {
            DVector::from_fn(part.repatoms.len(), |_, _| rng.random_range(-0.5..0.5))
        };
        let closed_fe = coarse_saddle_free_energy(&u_r, part, strain.saddle.energy, &params)?;
        let quad = oracles::quadrature_coarse_free_energy(
            &strain.d_at,
            part.repatoms.indices(),
            &u_r,
            strain.saddle.energy,
            beta,
        )?;
        fe = fe.max((closed_fe - quad).abs());
    }
    Ok(SmallInstance {
        z_rel_diff: ((closed - mc.log_z).exp() - 1.0).abs(),
        mc_rel_std_err: mc.rel_std_err,
        free_energy_diff: fe,
    })
}

/// Runs every invariant over the meshes described by `config`.
pub fn verify_suite(config: &SweepConfig) -> Result<VerifyReport> {
    config.validate()?;
    let config = config.normalized();
    let params = config.rate_params()?;
    let mut report = VerifyReport::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);

    let (g, h) = derivative_residuals(config.n_atoms, config.strains[0], 20, 11)?;
    report.checks.push(Check::at_most("gradient vs finite differences", g, 1e-6));
    report.checks.push(Check::at_most("Hessian vs finite differences", h, 1e-5));

    for &s in &config.strains {
        let tag = format!("s={s}");
        let strain = match ChainSystem::new(config.n_atoms, s).and_then(|sys| StrainAnalysis::new(sys, SaddleMethod::Drag)) {
            Ok(a) => a,
            Err(e) => {
                eprintln!("strain {s}: {e}");
                report.checks.push(Check::at_most(format!("saddle search [{tag}]"), f64::NAN, 0.0));
                continue;
            }
        };
        report.checks.extend(saddle_checks(&strain));
        let mode = eigenmode_residual(&strain).unwrap_or(f64::NAN);
        report.checks.push(Check::at_most(format!("analytic eigenmode 1-cos [{tag}]"), mode, 1e-8));
        let lz = strain.log_z_saddle(&params).unwrap_or(f64::NAN);
        report.checks.push(Check::at_most(
            format!("log Z saddle finite [{tag}]"),
            if lz.is_finite() && lz.exp().is_finite() && lz.exp() > 0.0 { 0.0 } else { 1.0 },
            0.0,
        ));

        let mut failures = 0usize;
        let mut worst = [0.0f64; 9];
        let mut localized: Vec<(usize, f64)> = Vec::new();
        for &scheme in &config.schemes {
            for (k, &core) in config.core_sizes.iter().enumerate() {
                let mesh = match strain.mesh(scheme, core) {
                    Ok(m) => m,
                    Err(e) => {
                        eprintln!("{scheme} core {core} at s={s}: {e}");
                        failures += 1;
                        continue;
                    }
                };
                let lat = strain.lambda_at.abs();
                let m = &mesh.modes;
                let lp = mesh.log_partition(&strain, &params)?;
                let ratio_gap = (lp.rate_ratio() - (m.lambda_cg / m.lambda_at).sqrt()).abs();
                let residuals = [
                    (lat - m.lambda_cg.abs()).max(0.0) / lat,
                    mesh.breakdown.identity_residual / lat,
                    mesh.det_residual,
                    ratio_gap,
                    interlacing_violation(&strain, &mesh),
                    temperature_spread(&strain, &mesh)?,
                    (lp.log_z_saddle_at - lp.log_z_saddle_cg).max(0.0),
                ];
                for (w, r) in worst.iter_mut().zip(residuals) {
                    *w = w.max(r);
                }
                if k % 5 == 0 {
                    let (b, q) = embedding_residuals(&strain, &mesh, 100, &mut rng)?;
                    worst[7] = worst[7].max(b);
                    worst[8] = worst[8].max(q);
                }
                if scheme == MeshScheme::Localized {
                    localized.push((core, m.lambda_cg.abs()));
                }
            }
        }
        report
            .checks
            .push(Check::at_most(format!("mesh analyses failed [{tag}]"), failures as f64, 0.0));
        let names = [
            ("|lambda_cg| >= |lambda_at| (rel slack)", 1e-12),
            ("error identity residual / |lambda_at|", 1e-8),
            ("determinant identity", 1e-8),
            ("rate ratio vs sqrt(lambda_cg/lambda_at)", 1e-8),
            ("inverse-spectrum interlacing", 1e-9),
            ("rate ratio temperature spread", 1e-10),
            ("R_cg >= R_at (log slack)", 1e-10),
            ("embedding constrained block", 1e-10),
            ("embedding quadratic form", 1e-10),
        ];
        for ((name, tol), w) in names.iter().zip(worst) {
            report.checks.push(Check::at_most(format!("{name} [{tag}]"), w, *tol));
        }

        let mono = localized
            .windows(2)
            .map(|w| (w[1].1 - w[0].1).max(0.0))
            .fold(0.0, f64::max);
        report
            .checks
            .push(Check::at_most(format!("nested localized monotonicity [{tag}]"), mono, 1e-12));
        let max_core = config.n_atoms - 2;
        let mut comp = 0.0f64;
        for inner in [2, max_core / 4, max_core / 2].into_iter().filter(|n| n % 2 == 0 && *n >= 2) {
            let outer = (inner * 2).min(max_core);
            comp = comp.max(schur_composition_residual(&strain, inner, outer)?);
        }
        report
            .checks
            .push(Check::at_most(format!("Schur composition [{tag}]"), comp, 1e-9));
    }

    let small = small_instance(1.0, 200_000, 5)?;
    report
        .checks
        .push(Check::at_most("8-atom Z_cg closed form vs Monte Carlo", small.z_rel_diff, 1e-2));
    report.checks.push(Check::at_most(
        "8-atom coarse free energy vs quadrature",
        small.free_energy_diff,
        1e-6,
    ));
    Ok(report)
}
