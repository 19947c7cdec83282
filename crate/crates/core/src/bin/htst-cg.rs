use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use htst_cg::coarse::MeshScheme;
use htst_cg::sweep::{core_range, emit_csv, run_sweep, write_csv, SaddleMethod, SweepConfig};
use htst_cg::verify::verify_suite;

const EXIT_VERIFY: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_IO: u8 = 3;

/// Coarse-graining error sweep for HTST rates on a strained 1-D chain.
///
/// Writes one CSV row per (scheme, strain, core size). Settings come from
/// defaults, then an optional key = value file, then flags.
#[derive(Parser, Debug)]
#[command(version)]
struct Cli {
    /// Total atom count, including both pinned ends.
    #[arg(long)]
    atoms: Option<usize>,
    /// Strain factor; repeat for several.
    #[arg(long)]
    strain: Vec<f64>,
    /// localized, delocalized or delocalized-minimal; repeat for several.
    #[arg(long)]
    scheme: Vec<MeshScheme>,
    /// Smallest core size (even)
    #[arg(long)]
    core_min: Option<usize>,
    /// Largest core size (even, at most atoms - 2)
    #[arg(long)]
    core_max: Option<usize>,
    /// Core size increment (even)
    #[arg(long)]
    core_step: Option<usize>,
    /// Inverse temperature.
    #[arg(long)]
    beta: Option<f64>,
    /// Saddle search: drag, analytic or both.
    #[arg(long)]
    saddle: Option<SaddleMethod>,
    /// CSV output path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run the invariant suite instead of (before) the sweep.
    #[arg(long)]
    verify: bool,
}

enum Failure {
    Usage(String),
    Io(String),
    Verify,
}

fn build_config(cli: &Cli) -> Result<SweepConfig, Failure> {
    let mut config = SweepConfig::default();
    if let Some(path) = &cli.config {
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", path.display())))?;
        config.apply_kv(&text).map_err(|e| Failure::Usage(e.to_string()))?;
    }
    if let Some(n) = cli.atoms {
        config.n_atoms = n;
    }
    if !cli.strain.is_empty() {
        config.strains = cli.strain.clone();
    }
    if !cli.scheme.is_empty() {
        config.schemes = cli.scheme.clone();
    }
    if cli.core_min.is_some() || cli.core_max.is_some() || cli.core_step.is_some() {
        let (lo, hi, step) = config.core_bounds();
        config.core_sizes = core_range(
            cli.core_min.unwrap_or(lo),
            cli.core_max.unwrap_or(hi),
            cli.core_step.unwrap_or(step),
        )
        .map_err(|e| Failure::Usage(e.to_string()))?;
    }
    if let Some(b) = cli.beta {
        config.beta = b;
    }
    if let Some(m) = cli.saddle {
        config.saddle_method = m;
    }
    if cli.out.is_some() {
        config.output_path = cli.out.clone();
    }
    config.verify |= cli.verify;
    config.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(config)
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let config = build_config(cli)?;
    if config.verify {
        let report = verify_suite(&config).map_err(|e| Failure::Usage(e.to_string()))?;
        println!("{report}");
        return if report.all_passed() { Ok(()) } else { Err(Failure::Verify) };
    }
    let output = run_sweep(&config).map_err(|e| Failure::Usage(e.to_string()))?;
    for row in output.rows.iter().filter(|r| !r.is_ok()) {
        eprintln!(
            "error: {} s={} core={}: {}",
            row.scheme,
            row.strain,
            row.core_size,
            row.error.as_deref().unwrap_or("")
        );
    }
    eprintln!("{} of {} rows succeeded", output.n_ok(), output.rows.len());
    match &config.output_path {
        Some(path) => emit_csv(&output.rows, path)
            .map_err(|e| Failure::Io(format!("cannot write {}: {e}", path.display())))?,
        None => write_csv(&output.rows, &mut std::io::stdout().lock())
            .map_err(|e| Failure::Io(e.to_string()))?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_IO)
        }
        Err(Failure::Verify) => ExitCode::from(EXIT_VERIFY),
    }
}
