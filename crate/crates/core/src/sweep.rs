//! Sweep orchestration: per-strain saddle analysis, per-mesh coarse-graining
//! and error decomposition, configuration handling and CSV I/O.

use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::chain::{ChainSystem, Configuration};
use crate::coarse::{partition_hessian, schur_complement, CoarseHessian, MeshScheme, PartitionedHessian};
use crate::error::{Error, Result};
use crate::linalg::{max_abs, symmetric_eigen, Spectrum};
use crate::rate::{
    error_decomposition, log_z_basin, log_z_saddle_atomistic, log_z_saddle_coarse, unstable_mode_of,
    ErrorBreakdown, LogPartition, ModePair, RateParams,
};
use crate::stationary::{find_minimum, find_saddle_analytic, find_saddle_drag, StationaryPoint};

/// Coordinatewise tolerance for the drag and analytic saddles to agree.
pub const SADDLE_AGREEMENT_TOL: f64 = 1e-8;

pub const CSV_HEADER: &str =
    "scheme,strain,core_size,n_repatoms,lambda_at,lambda_cg,rel_rate_error,overlap_term,longrange_term,identity_residual";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SaddleMethod {
    Drag,
    Analytic,
    Both,
}

impl FromStr for SaddleMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "drag" => Ok(Self::Drag),
            "analytic" => Ok(Self::Analytic),
            "both" => Ok(Self::Both),
            other => Err(Error::InvalidParameter(format!(
                "unknown saddle method '{other}' (expected drag, analytic or both)"
            ))),
        }
    }
}

impl fmt::Display for SaddleMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Drag => "drag",
            Self::Analytic => "analytic",
            Self::Both => "both",
        })
    }
}

/// Everything about one strained chain that does not depend on the mesh.
#[derive(Debug, Clone)]
pub struct StrainAnalysis {
    pub system: ChainSystem,
    pub saddle: StationaryPoint,
    pub minimum: StationaryPoint,
    /// Max coordinate difference between drag and analytic saddles, when
    /// both were computed.
    pub saddle_disagreement: Option<f64>,
    pub d_at: DMatrix<f64>,
    pub spectrum: Spectrum,
    pub lambda_at: f64,
    pub u_at: DVector<f64>,
    pub basin_spectrum: Spectrum,
}

impl StrainAnalysis {
    pub fn new(system: ChainSystem, method: SaddleMethod) -> Result<Self> {
        let (saddle, saddle_disagreement) = match method {
            SaddleMethod::Drag => (find_saddle_drag(&system)?, None),
            SaddleMethod::Analytic => (find_saddle_analytic(&system)?, None),
            SaddleMethod::Both => {
                let drag = find_saddle_drag(&system)?;
                let analytic = find_saddle_analytic(&system)?;
                let diff = max_abs(
                    drag.positions(&system)
                        .iter()
                        .zip(analytic.positions(&system))
                        .map(|(a, b)| a - b),
                );
                if !(diff <= SADDLE_AGREEMENT_TOL) {
                    return Err(Error::SaddleMismatch(diff));
                }
                (drag, Some(diff))
            }
        };
        let minimum = find_minimum(&system, &Configuration::uniform(&system))?;
        let d_at = saddle.hessian(&system)?;
        let spectrum = symmetric_eigen(&d_at);
        let (lambda_at, u_at) = unstable_mode_of(&d_at, &spectrum)?;
        let basin_spectrum = symmetric_eigen(&minimum.hessian(&system)?);
        Ok(Self {
            system,
            saddle,
            minimum,
            saddle_disagreement,
            d_at,
            spectrum,
            lambda_at,
            u_at,
            basin_spectrum,
        })
    }

    pub fn log_z_saddle(&self, params: &RateParams) -> Result<f64> {
        log_z_saddle_atomistic(self.saddle.energy, &self.spectrum.values, params)
    }

    pub fn log_z_basin(&self, params: &RateParams) -> Result<f64> {
        log_z_basin(self.minimum.energy, &self.basin_spectrum.values, params)
    }

    pub fn mesh(&self, scheme: MeshScheme, core_size: usize) -> Result<MeshAnalysis> {
        MeshAnalysis::new(self, scheme, core_size)
    }
}

/// Coarse-graining results for one repatom mesh.
#[derive(Debug, Clone)]
pub struct MeshAnalysis {
    pub scheme: MeshScheme,
    pub core_size: usize,
    pub coarse: CoarseHessian,
    pub spectrum_cg: Spectrum,
    pub modes: ModePair,
    pub breakdown: ErrorBreakdown,
    /// `|log|det D_at| − log det C − log|det D_cg||`
    pub det_residual: f64,
}

impl MeshAnalysis {
    pub fn new(strain: &StrainAnalysis, scheme: MeshScheme, core_size: usize) -> Result<Self> {
        let repatoms = scheme.indices(&strain.system, core_size)?;
        let part = partition_hessian(&strain.d_at, &repatoms)?;
        let coarse = schur_complement(&part)?;
        let spectrum_cg = symmetric_eigen(&coarse.d_cg);
        let (lambda_cg, v_cg) = unstable_mode_of(&coarse.d_cg, &spectrum_cg)?;
        let modes = ModePair::new(&part, strain.lambda_at, strain.u_at.clone(), lambda_cg, v_cg)?;
        let breakdown = error_decomposition(&part, &modes.u_at, &modes.v_cg, modes.lambda_at, modes.lambda_cg)?;
        let det_residual =
            (strain.spectrum.log_abs_det() - coarse.log_det_c - spectrum_cg.log_abs_det()).abs();
        Ok(Self {
            scheme,
            core_size,
            coarse,
            spectrum_cg,
            modes,
            breakdown,
            det_residual,
        })
    }

    pub fn part(&self) -> &PartitionedHessian {
        &self.coarse.source
    }

    pub fn n_repatoms(&self) -> usize {
        self.part().repatoms.len()
    }

    pub fn log_partition(&self, strain: &StrainAnalysis, params: &RateParams) -> Result<LogPartition> {
        Ok(LogPartition {
            log_z_saddle_at: strain.log_z_saddle(params)?,
            log_z_saddle_cg: log_z_saddle_coarse(
                strain.saddle.energy,
                &self.spectrum_cg.values,
                self.coarse.log_det_c,
                self.part().constrained.len(),
                params,
            )?,
            log_z_basin_at: strain.log_z_basin(params)?,
            beta_used: *params,
        })
    }

    pub fn row(&self, strain: f64) -> SweepRow {
        SweepRow {
            scheme: self.scheme,
            strain,
            core_size: self.core_size,
            n_repatoms: self.n_repatoms(),
            lambda_at: self.modes.lambda_at,
            lambda_cg: self.modes.lambda_cg,
            rel_rate_error: self.breakdown.rel_rate_error,
            overlap_term: self.breakdown.overlap,
            longrange_term: self.breakdown.longrange,
            identity_residual: self.breakdown.identity_residual,
            error: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub n_atoms: usize,
    pub strains: Vec<f64>,
    pub schemes: Vec<MeshScheme>,
    pub core_sizes: Vec<usize>,
    pub beta: f64,
    pub saddle_method: SaddleMethod,
    pub output_path: Option<PathBuf>,
    pub verify: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            n_atoms: 202,
            strains: vec![1.02, 1.035],
            schemes: vec![MeshScheme::Localized, MeshScheme::Delocalized],
            core_sizes: core_range(2, 200, 2).expect("default range is valid"),
            beta: 1.0,
            saddle_method: SaddleMethod::Both,
            output_path: None,
            verify: false,
        }
    }
}

/// Even core sizes `min, min+step, ..., ≤ max`.
pub fn core_range(min: usize, max: usize, step: usize) -> Result<Vec<usize>> {
    if step == 0 || step % 2 != 0 {
        return Err(Error::InvalidParameter(format!("core step must be even and positive, got {step}")));
    }
    if min % 2 != 0 || min < 2 || max < min {
        return Err(Error::InvalidParameter(format!("bad core range {min}..{max}")));
    }
    Ok((min..=max).step_by(step).collect())
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_atoms < 4 || self.n_atoms % 2 != 0 {
            return Err(Error::InvalidParameter(format!(
                "atom count must be even and >= 4, got {}",
                self.n_atoms
            )));
        }
        if self.strains.is_empty() || self.schemes.is_empty() || self.core_sizes.is_empty() {
            return Err(Error::InvalidParameter("strains, schemes and core sizes must be non-empty".into()));
        }
        if let Some(s) = self.strains.iter().find(|&&s| !(s > 1.0) || !s.is_finite()) {
            return Err(Error::InvalidParameter(format!("strain must be > 1, got {s}")));
        }
        let max = self.n_atoms - 2;
        if let Some(&n) = self.core_sizes.iter().find(|&&n| n < 2 || n % 2 != 0 || n > max) {
            return Err(Error::InvalidCoreSize { core_size: n, max });
        }
        RateParams::new(self.beta)?;
        Ok(())
    }

    pub fn rate_params(&self) -> Result<RateParams> {
        RateParams::new(self.beta)
    }

    /// Strains and core sizes sorted and deduplicated, schemes in canonical
    /// order; this fixes the row order of a sweep.
    pub fn normalized(&self) -> Self {
        let mut c = self.clone();
        c.strains.sort_by(f64::total_cmp);
        c.strains.dedup();
        c.core_sizes.sort_unstable();
        c.core_sizes.dedup();
        c.schemes.sort_by_key(|s| scheme_rank(*s));
        c.schemes.dedup();
        c
    }

    /// Applies `key = value` lines on top of `self`. Blank lines and `#`
    /// comments are ignored; list keys take comma-separated values.
    pub fn apply_kv(&mut self, text: &str) -> Result<()> {
        let mut core = (None, None, None);
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidParameter(format!("line {}: expected key = value", lineno + 1))
            })?;
            let (key, value) = (key.trim().replace('-', "_"), value.trim());
            let bad = |what: &str| Error::InvalidParameter(format!("line {}: bad {what} '{value}'", lineno + 1));
            match key.as_str() {
                "atoms" | "n_atoms" => self.n_atoms = value.parse().map_err(|_| bad("atom count"))?,
                "strain" | "strains" => {
                    self.strains = split_list(value)
                        .map(|v| v.parse().map_err(|_| bad("strain")))
                        .collect::<Result<_>>()?
                }
                "scheme" | "schemes" => self.schemes = split_list(value).map(str::parse).collect::<Result<_>>()?,
                "core_min" => core.0 = Some(value.parse().map_err(|_| bad("core_min"))?),
                "core_max" => core.1 = Some(value.parse().map_err(|_| bad("core_max"))?),
                "core_step" => core.2 = Some(value.parse().map_err(|_| bad("core_step"))?),
                "beta" => self.beta = value.parse().map_err(|_| bad("beta"))?,
                "saddle" | "saddle_method" => self.saddle_method = value.parse()?,
                "out" | "output" | "output_path" => self.output_path = Some(PathBuf::from(value)),
                "verify" => self.verify = value.parse().map_err(|_| bad("verify flag"))?,
                other => {
                    return Err(Error::InvalidParameter(format!("line {}: unknown key '{other}'", lineno + 1)))
                }
            }
        }
        if core != (None, None, None) {
            let (lo, hi, step) = self.core_bounds();
            self.core_sizes = core_range(core.0.unwrap_or(lo), core.1.unwrap_or(hi), core.2.unwrap_or(step))?;
        }
        Ok(())
    }

    /// `(min, max, step)` describing `core_sizes` when it is an arithmetic
    /// progression; falls back to the defaults otherwise.
    pub fn core_bounds(&self) -> (usize, usize, usize) {
        let c = &self.core_sizes;
        match c.as_slice() {
            [] => (2, 200, 2),
            [one] => (*one, *one, 2),
            [a, b, ..] => (*a, *c.last().unwrap(), b - a),
        }
    }
}

fn split_list(v: &str) -> impl Iterator<Item = &str> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn scheme_rank(s: MeshScheme) -> u8 {
    match s {
        MeshScheme::Localized => 0,
        MeshScheme::Delocalized => 1,
        MeshScheme::DelocalizedMinimal => 2,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub scheme: MeshScheme,
    pub strain: f64,
    pub core_size: usize,
    pub n_repatoms: usize,
    pub lambda_at: f64,
    pub lambda_cg: f64,
    pub rel_rate_error: f64,
    pub overlap_term: f64,
    pub longrange_term: f64,
    pub identity_residual: f64,
    /// Set when this mesh could not be analysed; the numeric columns are NaN
    /// (except those known before the failure).
    pub error: Option<String>,
}

impl SweepRow {
    fn failed(scheme: MeshScheme, strain: f64, core_size: usize, lambda_at: f64, n_repatoms: usize, e: &Error) -> Self {
        Self {
            scheme,
            strain,
            core_size,
            n_repatoms,
            lambda_at,
            lambda_cg: f64::NAN,
            rel_rate_error: f64::NAN,
            overlap_term: f64::NAN,
            longrange_term: f64::NAN,
            identity_residual: f64::NAN,
            error: Some(e.to_string()),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }
}

/// Result of [`run_sweep`]: rows in deterministic order plus the per-strain
/// analyses that succeeded.
#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub rows: Vec<SweepRow>,
    pub strains: Vec<(f64, Result<StrainAnalysis>)>,
}

impl SweepOutput {
    pub fn n_ok(&self) -> usize {
        self.rows.iter().filter(|r| r.is_ok()).count()
    }
}

/// Runs every (scheme, strain, core size) combination. Failures become
/// error rows; the sweep never aborts on a single mesh.
pub fn run_sweep(config: &SweepConfig) -> Result<SweepOutput> {
    config.validate()?;
    let config = config.normalized();
    let strains: Vec<(f64, Result<StrainAnalysis>)> = config
        .strains
        .par_iter()
        .map(|&s| {
            let analysis = ChainSystem::new(config.n_atoms, s).and_then(|sys| StrainAnalysis::new(sys, config.saddle_method));
            (s, analysis)
        })
        .collect();

    let mut jobs: Vec<(MeshScheme, usize, usize)> = Vec::new();
    for &scheme in &config.schemes {
        for k in 0..strains.len() {
            jobs.extend(config.core_sizes.iter().map(|&n| (scheme, k, n)));
        }
    }

    let rows = jobs
        .par_iter()
        .map(|&(scheme, k, core)| {
            let (s, analysis) = &strains[k];
            match analysis {
                Err(e) => SweepRow::failed(scheme, *s, core, f64::NAN, 0, e),
                Ok(a) => match a.mesh(scheme, core) {
                    Ok(m) => m.row(*s),
                    Err(e) => {
                        let n_rep = scheme.indices(&a.system, core).map(|r| r.len()).unwrap_or(0);
                        SweepRow::failed(scheme, *s, core, a.lambda_at, n_rep, &e)
                    }
                },
            }
        })
        .collect();
    Ok(SweepOutput { rows, strains })
}

/// For every row of `other` at `strain`, the `reference` row with the
/// nearest repatom count (ties go to the smaller count).
pub fn match_by_repatoms<'a>(
    rows: &'a [SweepRow],
    strain: f64,
    reference: MeshScheme,
    other: MeshScheme,
) -> Vec<(&'a SweepRow, &'a SweepRow)> {
    let pick = |scheme| {
        rows.iter()
            .filter(move |r| r.scheme == scheme && r.strain == strain && r.is_ok())
    };
    let refs: Vec<&SweepRow> = pick(reference).collect();
    pick(other)
        .filter_map(|o| {
            refs.iter()
                .min_by_key(|r| (r.n_repatoms.abs_diff(o.n_repatoms), r.n_repatoms))
                .map(|r| (*r, o))
        })
        .collect()
}

fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_csv(rows: &[SweepRow], out: &mut impl Write) -> io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.scheme,
            fmt_f64(r.strain),
            r.core_size,
            r.n_repatoms,
            fmt_f64(r.lambda_at),
            fmt_f64(r.lambda_cg),
            fmt_f64(r.rel_rate_error),
            fmt_f64(r.overlap_term),
            fmt_f64(r.longrange_term),
            fmt_f64(r.identity_residual),
        )?;
    }
    Ok(())
}

pub fn emit_csv(rows: &[SweepRow], path: &Path) -> io::Result<()> {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf)?;
    fs::write(path, buf)
}

/// Parses text produced by [`write_csv`]. Rows whose computed columns are
/// NaN come back with a generic error marker.
pub fn parse_csv(text: &str) -> Result<Vec<SweepRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        _ => return Err(Error::InvalidParameter("missing or unexpected CSV header".into())),
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, line)| {
            let bad = || Error::InvalidParameter(format!("malformed CSV row {}", i + 2));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 10 {
                return Err(bad());
            }
            let num = |k: usize| f[k].parse::<f64>().map_err(|_| bad());
            let rel_rate_error = num(6)?;
            Ok(SweepRow {
                scheme: f[0].parse()?,
                strain: num(1)?,
                core_size: f[2].parse().map_err(|_| bad())?,
                n_repatoms: f[3].parse().map_err(|_| bad())?,
                lambda_at: num(4)?,
                lambda_cg: num(5)?,
                rel_rate_error,
                overlap_term: num(7)?,
                longrange_term: num(8)?,
                identity_residual: num(9)?,
                error: rel_rate_error.is_nan().then(|| "error row".to_string()),
            })
        })
        .collect()
}
