use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use solitonlab::interferometer::K_LATTICE_780NM;
use solitonlab::scenario::{self, FeshbachRequest, FitModel, MzMode, Report, Scenario};

/// Bright-soliton interferometer simulator.
#[derive(Parser, Debug)]
#[command(name = "solitonlab", version)]
struct Cli {
    /// Scenario file (TOML). Defaults apply to anything it leaves out.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for CSV files.
    #[arg(long, global = true, default_value = "solitonlab-out")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Print the resolved scenario and exit.
    #[arg(long, global = true)]
    dry_run: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Convert between field and scattering length.
    Feshbach {
        /// Field in gauss (repeatable).
        #[arg(long = "field")]
        fields: Vec<f64>,
        /// Scattering length in Bohr radii (repeatable).
        #[arg(long = "scattering", allow_negative_numbers = true)]
        scattering: Vec<f64>,
        /// Write a(B) as lo:hi:step in gauss.
        #[arg(long)]
        curve: Option<String>,
    },
    /// Tabulate the variational energy surface and its stationary point.
    Varsurface {
        /// Grid points per axis.
        #[arg(long)]
        resolution: Option<usize>,
    },
    /// Width-after-hold sweep, soliton parameter and expansion series.
    Expand,
    /// Mach-Zehnder fringes, visibility sweeps and phase law.
    Mz {
        #[arg(long, value_enum)]
        mode: Option<Mode>,
    },
    /// Fit the guide field from r.f. spectroscopy.
    Fieldmap {
        /// CSV with position_mm,frequency_mhz; synthetic data otherwise.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Fit a two-column CSV (times in ms).
    Fit {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        model: Model,
        /// Lattice wavenumber in 1/m for quadratic-phase.
        #[arg(long, default_value_t = K_LATTICE_780NM)]
        k: f64,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Mode {
    Fringe,
    ASweep,
    TSweep,
    PhaseLaw,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Model {
    Parabola,
    Fringe,
    GaussianDecay,
    QuadraticPhase,
}

fn parse_curve(s: &str) -> Result<(f64, f64, f64)> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        bail!("--curve expects lo:hi:step, got '{s}'");
    }
    let v: Vec<f64> = parts
        .iter()
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .with_context(|| format!("bad number '{p}' in --curve"))
        })
        .collect::<Result<_>>()?;
    Ok((v[0], v[1], v[2]))
}

fn resolve(cli: &Cli) -> Result<Scenario> {
    let mut sc = match &cli.config {
        Some(p) => Scenario::load(p)?,
        None => Scenario::default(),
    };
    if let Some(seed) = cli.seed {
        sc.seed = seed;
    }
    match &cli.command {
        Command::Varsurface { resolution: Some(n) } => {
            sc.surface.points_rho = *n;
            sc.surface.points_z = *n;
        }
        Command::Mz { mode: Some(m) } => {
            sc.mz.mode = match m {
                Mode::Fringe => MzMode::Fringe,
                Mode::ASweep => MzMode::ASweep,
                Mode::TSweep => MzMode::TSweep,
                Mode::PhaseLaw => MzMode::PhaseLaw,
            };
        }
        Command::Fieldmap { input: Some(p) } => sc.fieldmap.input = Some(p.clone()),
        _ => {}
    }
    Ok(sc)
}

fn execute(cli: &Cli, sc: &Scenario) -> Result<Report> {
    let out = cli.out.as_path();
    let report = match &cli.command {
        Command::Feshbach {
            fields,
            scattering,
            curve,
        } => {
            let curve = curve.as_deref().map(parse_curve).transpose()?;
            if fields.is_empty() && scattering.is_empty() && curve.is_none() {
                bail!("feshbach needs --field, --scattering or --curve");
            }
            let req = FeshbachRequest {
                fields_g: fields.clone(),
                scattering_a0: scattering.clone(),
                curve,
            };
            scenario::run_feshbach(sc, &req, out)?
        }
        Command::Varsurface { .. } => scenario::run_varsurface(sc, out)?,
        Command::Expand => scenario::run_expand(sc, out)?,
        Command::Mz { .. } => scenario::run_mz(sc, out)?,
        Command::Fieldmap { .. } => scenario::run_fieldmap(sc, out)?,
        Command::Fit { input, model, k } => {
            let model = match model {
                Model::Parabola => FitModel::Parabola,
                Model::Fringe => FitModel::Fringe,
                Model::GaussianDecay => FitModel::GaussianDecay,
                Model::QuadraticPhase => FitModel::QuadraticPhase,
            };
            scenario::run_fit(input, model, *k, out)?
        }
    };
    Ok(report)
}

fn run(cli: Cli) -> Result<()> {
    let sc = resolve(&cli)?;
    if cli.dry_run {
        print!("{}", sc.to_toml()?);
        return Ok(());
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.workers {
        if n == 0 {
            bail!("--workers must be at least 1");
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build()?;
    let report = pool.install(|| execute(&cli, &sc))?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    for l in &report.lines {
        println!("{l}");
    }
    for f in &report.files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", format!("{e:#}").replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
