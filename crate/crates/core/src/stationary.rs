//! Minimum and fracture-saddle searches for the chain, plus the closed-form
//! unstable eigenmode at the saddle.
//!
//! Two independent routes reach the saddle:
//!
//! * **drag-relax**: the central bond is stretched in small increments while
//!   every other coordinate is relaxed; the sign change of the central-bond
//!   force brackets the saddle, which is then polished by full Newton.
//! * **force balance**: by mirror symmetry every spring has the same length
//!   `a = q_c / c`, so the saddle is a root of the scalar balance
//!   `k (a − r₀) − V_c'(L − 2 q_c) = 0` on `(0, L/2)`. Multiplying through by
//!   `(L − 2 q_c)¹³` turns it into a degree-14 polynomial; we scan and bisect
//!   the unscaled form, which has the same roots inside the interval.

use nalgebra::{DMatrix, DVector};

use crate::chain::{self, central_bond_derivative, ChainSystem, Configuration};
use crate::error::{Error, Result};
use crate::linalg::{count_negative, inf_norm, max_abs, symmetric_eigen, Tridiagonal};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StationaryKind {
    Minimum,
    Saddle,
}

#[derive(Debug, Clone)]
pub struct StationaryPoint {
    pub config: Configuration,
    pub energy: f64,
    pub kind: StationaryKind,
    /// Max-norm of the mass-weighted gradient.
    pub residual: f64,
    pub negative_count: usize,
}

impl StationaryPoint {
    pub fn positions(&self, system: &ChainSystem) -> Vec<f64> {
        self.config.positions(system)
    }

    /// Mass-weighted Hessian at this point.
    pub fn hessian(&self, system: &ChainSystem) -> Result<DMatrix<f64>> {
        chain::hessian(system, &self.config)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SearchOptions {
    /// Gradient max-norm tolerance for minima.
    pub tol_min: f64,
    /// Gradient max-norm tolerance for saddles.
    pub tol_saddle: f64,
    pub max_iterations: usize,
    /// Central-bond increment of the drag protocol.
    pub drag_step: f64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            tol_min: 1e-10,
            tol_saddle: 1e-10,
            max_iterations: 200,
            drag_step: 1e-3,
        }
    }
}

fn mass_weighted_residual(system: &ChainSystem, config: &Configuration) -> Result<f64> {
    Ok(max_abs(chain::gradient(system, config)?.iter().copied()))
}

fn negative_count(system: &ChainSystem, config: &Configuration) -> Result<usize> {
    let h = chain::hessian(system, config)?;
    let spectrum = symmetric_eigen(&h);
    Ok(count_negative(&spectrum.values, inf_norm(&h)))
}

fn finish(
    system: &ChainSystem,
    raw: &[f64],
    kind: StationaryKind,
) -> Result<StationaryPoint> {
    let config = Configuration::from_positions(system, raw)?;
    let energy = chain::total_energy(system, &config)?;
    let residual = mass_weighted_residual(system, &config)?;
    let negative_count = negative_count(system, &config)?;
    Ok(StationaryPoint {
        config,
        energy,
        kind,
        residual,
        negative_count,
    })
}

pub fn find_minimum(system: &ChainSystem, initial: &Configuration) -> Result<StationaryPoint> {
    find_minimum_with(system, initial, &SearchOptions::default())
}

/// Damped Newton descent on the tridiagonal Hessian; falls back to a scaled
/// gradient step wherever the Hessian is not positive definite.
pub fn find_minimum_with(
    system: &ChainSystem,
    initial: &Configuration,
    opts: &SearchOptions,
) -> Result<StationaryPoint> {
    system.validate(initial)?;
    let mut q = initial.positions(system);
    let mut energy = system.energy_raw(&q)?;
    let mut residual = f64::INFINITY;
    for _ in 0..opts.max_iterations {
        let config = Configuration::from_positions(system, &q)?;
        residual = mass_weighted_residual(system, &config)?;
        if residual < opts.tol_min {
            let point = finish(system, &q, StationaryKind::Minimum)?;
            if point.negative_count != 0 {
                return Err(Error::WrongIndex {
                    negative: point.negative_count,
                    expected: 0,
                });
            }
            return Ok(point);
        }
        let g = system.gradient_raw(&q)?;
        let h = system.hessian_raw(&q)?;
        let neg_g: Vec<f64> = g.iter().map(|x| -x).collect();
        let step = h.solve_spd(&neg_g).unwrap_or_else(|| {
            let scale = h.diag.iter().map(|d| d.abs()).fold(1.0, f64::max);
            neg_g.iter().map(|x| x / scale).collect()
        });
        let slope: f64 = g.iter().zip(&step).map(|(a, b)| a * b).sum();
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> = q.iter().zip(&step).map(|(x, s)| x + t * s).collect();
            if let Ok(e) = system.energy_raw(&trial) {
                // Roundoff allowance once the energy change drops below
                // floating-point resolution near convergence.
                let slack = 64.0 * f64::EPSILON * (1.0 + energy.abs());
                if e <= energy + 1e-4 * t * slope + slack {
                    q = trial;
                    energy = e;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Err(Error::NoConvergence {
        what: "minimization",
        iterations: opts.max_iterations,
        residual,
    })
}

/// Relaxes every coordinate except the central bond length, which is held
/// at `bond`. Returns the relaxed raw positions and the central-bond force
/// `dE/dr` at fixed remaining coordinates.
fn relax_at_fixed_bond(
    system: &ChainSystem,
    guess: &[f64],
    bond: f64,
    opts: &SearchOptions,
) -> Result<(Vec<f64>, f64)> {
    let k = system.center_free();
    let n = system.n_free();
    let mut q = guess.to_vec();
    q[k + 1] = q[k] + bond;
    let tol = 1e-13;
    let mut residual = f64::INFINITY;
    for _ in 0..opts.max_iterations {
        let g = system.gradient_raw(&q)?;
        // Reduced gradient: atom k+1 rides along with atom k.
        let mut gr: Vec<f64> = Vec::with_capacity(n - 1);
        gr.extend_from_slice(&g[..k]);
        gr.push(g[k] + g[k + 1]);
        gr.extend_from_slice(&g[k + 2..]);
        residual = max_abs(gr.iter().copied());
        if residual < tol {
            return Ok((q, g[k + 1]));
        }
        let h = system.hessian_raw(&q)?;
        let mut hr = Tridiagonal::zeros(n - 1);
        for j in 0..n - 1 {
            hr.diag[j] = match j.cmp(&k) {
                std::cmp::Ordering::Less => h.diag[j],
                std::cmp::Ordering::Equal => h.diag[k] + 2.0 * h.off[k] + h.diag[k + 1],
                std::cmp::Ordering::Greater => h.diag[j + 1],
            };
        }
        for j in 0..n - 2 {
            hr.off[j] = if j < k { h.off[j] } else { h.off[j + 1] };
        }
        let neg: Vec<f64> = gr.iter().map(|x| -x).collect();
        let step = hr.solve_spd(&neg).ok_or(Error::NoConvergence {
            what: "constrained relaxation (indefinite reduced Hessian)",
            iterations: 0,
            residual,
        })?;
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..40 {
            let mut trial = q.clone();
            for j in 0..n - 1 {
                let idx = if j <= k { j } else { j + 1 };
                trial[idx] += t * step[j];
            }
            trial[k + 1] = trial[k] + bond;
            if system.bond_lengths(&trial).is_ok() {
                q = trial;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    Err(Error::NoConvergence {
        what: "constrained relaxation",
        iterations: opts.max_iterations,
        residual,
    })
}

/// Full Newton iteration on all coordinates; converges to whichever
/// stationary point is nearby regardless of its index.
fn newton_polish(system: &ChainSystem, q0: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let mut q = q0.to_vec();
    let mut best = f64::INFINITY;
    let mut best_q = q.clone();
    for _ in 0..max_iter {
        let config = Configuration::from_positions(system, &q)?;
        let residual = mass_weighted_residual(system, &config)?;
        if residual < best {
            best = residual;
            best_q = q.clone();
        }
        if residual < 1e-3 * tol {
            break;
        }
        let g = DVector::from_vec(system.gradient_raw(&q)?);
        let h = system.hessian_raw(&q)?.to_dense();
        let Some(step) = h.lu().solve(&g) else { break };
        q.iter_mut().zip(step.iter()).for_each(|(x, s)| *x -= s);
        if system.bond_lengths(&q).is_err() {
            break;
        }
    }
    if best < tol {
        Ok(best_q)
    } else {
        Err(Error::NoConvergence {
            what: "saddle Newton polish",
            iterations: max_iter,
            residual: best,
        })
    }
}

pub fn find_saddle_drag(system: &ChainSystem) -> Result<StationaryPoint> {
    find_saddle_drag_with(system, &SearchOptions::default())
}

pub fn find_saddle_drag_with(system: &ChainSystem, opts: &SearchOptions) -> Result<StationaryPoint> {
    let minimum = find_minimum_with(system, &Configuration::uniform(system), opts)?;
    let k = system.center_free();
    let mut q = minimum.positions(system);
    let r0 = q[k + 1] - q[k];
    let max_steps = ((system.length() - r0) / opts.drag_step).ceil() as usize;

    let mut prev: Option<(f64, Vec<f64>, f64)> = None;
    let mut bracket = None;
    for step in 1..=max_steps {
        let r = r0 + step as f64 * opts.drag_step;
        let relaxed = match relax_at_fixed_bond(system, &q, r, opts) {
            Ok(v) => v,
            Err(Error::NonPositiveBond { .. }) => break,
            Err(e) => return Err(e),
        };
        let (q_r, force) = relaxed;
        if let Some((r_prev, q_prev, f_prev)) = &prev {
            if *f_prev > 0.0 && force <= 0.0 {
                bracket = Some((*r_prev, q_prev.clone(), *f_prev, r, q_r.clone(), force));
                break;
            }
        }
        q = q_r.clone();
        prev = Some((r, q_r, force));
    }
    let (mut ra, mut qa, mut fa, mut rb, mut qb, mut fb) = bracket.ok_or(Error::NoSignChange)?;

    // Bisection on the relaxed central-bond force.
    for _ in 0..100 {
        if fb == 0.0 || (rb - ra) <= 4.0 * f64::EPSILON * rb.abs() {
            break;
        }
        let rm = 0.5 * (ra + rb);
        let (qm, fm) = relax_at_fixed_bond(system, &qa, rm, opts)?;
        if fm > 0.0 {
            (ra, qa, fa) = (rm, qm, fm);
        } else {
            (rb, qb, fb) = (rm, qm, fm);
        }
    }
    let start = if fa.abs() < fb.abs() { qa } else { qb };
    let q_s = newton_polish(system, &start, opts.tol_saddle, 30)?;
    let point = finish(system, &q_s, StationaryKind::Saddle)?;
    if point.negative_count != 1 {
        return Err(Error::WrongIndex {
            negative: point.negative_count,
            expected: 1,
        });
    }
    Ok(point)
}

/// Scalar force balance on atom `center_left` for a mirror-symmetric
/// configuration with equal springs, as a function of its distance
/// `q_center` from the left boundary.
pub fn force_balance(system: &ChainSystem, q_center: f64) -> f64 {
    let c = system.center_left as f64;
    let r = system.length() - 2.0 * q_center;
    let p = &system.params;
    let lj = central_bond_derivative(r, p, 1).unwrap_or(f64::NEG_INFINITY);
    p.spring_k * (q_center / c - p.spring_rest) - lj
}

/// Force balance multiplied by `(L − 2 q_center)¹³`: the degree-14
/// polynomial form, evaluated in factored form to avoid cancellation.
pub fn force_balance_polynomial(system: &ChainSystem, q_center: f64) -> f64 {
    let c = system.center_left as f64;
    let r = system.length() - 2.0 * q_center;
    let p = &system.params;
    let s6 = p.sigma.powi(6);
    let r6 = r.powi(6);
    p.spring_k * (q_center / c - p.spring_rest) * r6 * r6 * r + 4.0 * p.epsilon * (12.0 * s6 * s6 - 6.0 * s6 * r6)
}

/// One real root of the force balance inside `(0, L/2)`.
#[derive(Debug, Clone)]
pub struct ForceBalanceRoot {
    /// Distance of atom `center_left` from the left boundary.
    pub q_center: f64,
    pub central_bond: f64,
    pub spring_bond: f64,
    pub balance_residual: f64,
    pub negative_count: usize,
}

/// Mirror-symmetric raw configuration with springs of length `q_center / c`.
pub fn symmetric_configuration(system: &ChainSystem, q_center: f64) -> Vec<f64> {
    let c = system.center_left;
    let a = q_center / c as f64;
    let n = system.n_atoms;
    let mut q = vec![0.0; system.n_free()];
    for i in 1..=c {
        q[i - 1] = system.left_boundary + i as f64 * a;
        q[n - 2 - i] = system.right_boundary - i as f64 * a;
    }
    q
}

const SCAN_POINTS: usize = 1 << 18;

/// Every root of the force balance on `(0, L/2)` with the Hessian signature
/// of its assembled configuration.
pub fn force_balance_roots(system: &ChainSystem) -> Result<Vec<ForceBalanceRoot>> {
    let half = 0.5 * system.length();
    let h = half / SCAN_POINTS as f64;
    let f = |x: f64| force_balance(system, x);
    let mut roots = Vec::new();
    let mut x_prev = h;
    let mut f_prev = f(x_prev);
    for i in 2..SCAN_POINTS {
        let x = i as f64 * h;
        let fx = f(x);
        if !fx.is_finite() || !f_prev.is_finite() {
            x_prev = x;
            f_prev = fx;
            continue;
        }
        if f_prev == 0.0 {
            roots.push(x_prev);
        } else if f_prev.signum() != fx.signum() && fx != 0.0 {
            let (mut a, mut b, mut fa) = (x_prev, x, f_prev);
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                if m <= a || m >= b {
                    break;
                }
                let fm = f(m);
                if fm == 0.0 {
                    a = m;
                    b = m;
                    break;
                }
                if fm.signum() == fa.signum() {
                    a = m;
                    fa = fm;
                } else {
                    b = m;
                }
            }
            roots.push(if f(a).abs() <= f(b).abs() { a } else { b });
        }
        x_prev = x;
        f_prev = fx;
    }
    roots
        .into_iter()
        .map(|q_center| {
            let raw = symmetric_configuration(system, q_center);
            let config = Configuration::from_positions(system, &raw)?;
            Ok(ForceBalanceRoot {
                q_center,
                central_bond: system.length() - 2.0 * q_center,
                spring_bond: q_center / system.center_left as f64,
                balance_residual: force_balance(system, q_center).abs(),
                negative_count: negative_count(system, &config)?,
            })
        })
        .collect()
}

pub fn find_saddle_analytic(system: &ChainSystem) -> Result<StationaryPoint> {
    let roots = force_balance_roots(system)?;
    if roots.is_empty() {
        return Err(Error::NoRoot);
    }
    let root = roots
        .iter()
        .find(|r| r.negative_count == 1)
        .ok_or(Error::NoSaddleRoot(roots.len()))?;
    finish(
        system,
        &symmetric_configuration(system, root.q_center),
        StationaryKind::Saddle,
    )
}

/// Closed-form solution of the unstable eigenmode on the left half of the
/// chain, `u_i = α r₊^i + β r₋^i` for `0 ≤ i ≤ center`, valid for unit
/// masses and unit spring stiffness.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticEigenmode {
    pub lambda_at: f64,
    pub r_plus: f64,
    pub r_minus: f64,
    pub coeff_plus: f64,
    pub coeff_minus: f64,
    pub u_center: f64,
    /// Atom index of the left atom of the central bond.
    pub center: usize,
}

impl AnalyticEigenmode {
    pub fn new(lambda_at: f64, u_center: f64, center: usize) -> Result<Self> {
        let half = 0.5 * lambda_at;
        let disc = half * (half - 2.0);
        if !(lambda_at < 0.0) || !(disc > 0.0) {
            return Err(Error::ComplexRoots(lambda_at));
        }
        let r_plus = 1.0 - half + disc.sqrt();
        let r_minus = 1.0 - half - disc.sqrt();
        let c = center as i32;
        let denom = r_minus.powi(c) - r_plus.powi(c);
        Ok(Self {
            lambda_at,
            r_plus,
            r_minus,
            coeff_plus: -u_center / denom,
            coeff_minus: u_center / denom,
            u_center,
            center,
        })
    }

    /// Displacement of atom `i`, `0 ≤ i ≤ center`. Evaluated as
    /// `u_c sinh(iκ)/sinh(cκ)` with `κ = ln r₊`, which is the same function
    /// without the overflow of `r₊^c` on long chains.
    pub fn left_value(&self, i: usize) -> f64 {
        if i == 0 {
            return 0.0;
        }
        let kappa = self.r_plus.ln();
        let (i, c) = (i as f64, self.center as f64);
        self.u_center * ((i - c) * kappa).exp() * (-2.0 * i * kappa).exp_m1()
            / (-2.0 * c * kappa).exp_m1()
    }

    /// Full mode over the `2·center` free atoms, using `u_{n−1−i} = −u_i`.
    pub fn full_mode(&self) -> DVector<f64> {
        let c = self.center;
        let n_free = 2 * c;
        let mut u = DVector::zeros(n_free);
        for i in 1..=c {
            let v = self.left_value(i);
            u[i - 1] = v;
            u[n_free - i] = -v;
        }
        u
    }
}

/// Reconstructs the full unstable mode over `n_free` free atoms from the
/// negative eigenvalue and the displacement of atom `center_left`.
pub fn analytic_unstable_mode(lambda_at: f64, u_center: f64, n_free: usize) -> Result<DVector<f64>> {
    if n_free < 2 || n_free % 2 != 0 {
        return Err(Error::InvalidParameter(format!("n_free must be even and >= 2, got {n_free}")));
    }
    Ok(AnalyticEigenmode::new(lambda_at, u_center, n_free / 2)?.full_mode())
}
