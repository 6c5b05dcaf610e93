//! Scenario files and the runners behind each subcommand.
//!
//! A scenario is one TOML document with a section per concern. Every key
//! carries its unit in the name and unknown keys are rejected. Runners
//! validate the whole parameter set before computing anything, write CSVs
//! into an output directory and return a short key=value report.

use std::f64::consts::PI;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::{angular, Species, ZeemanState, BOHR_RADIUS};
use crate::error::{Error, Result};
use crate::feshbach::{self, FeshbachResonance, FieldProfile, RfSample};
use crate::fit::{self, FitResult};
use crate::gpe::{
    gaussian_state, sech_state, write_series_csv, AxialPotential, Grid1D, ScatteringSchedule, SolitonParameter,
    SolitonSearch, Solver, WaveState,
};
use crate::interferometer::{fringe_scan, uniform_phases, write_fringe_csv, MZSequence, PulseKind, PulseSpec};
use crate::variational::{self, Classification, VariationalParams};

const UM: f64 = 1e-6;
const MS: f64 = 1e-3;
const US: f64 = 1e-6;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Scenario {
    /// Seed for every random draw (synthetic noise).
    pub seed: u64,
    pub resonance: ResonanceConfig,
    pub grid: GridConfig,
    pub guide: GuideConfig,
    pub initial: InitialConfig,
    pub expand: ExpandConfig,
    pub mz: MzConfig,
    pub surface: SurfaceConfig,
    pub fieldmap: FieldmapConfig,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().replace('\n', " ")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// The fully resolved parameter set, defaults included.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResonanceConfig {
    pub a_bg_a0: f64,
    pub width_g: f64,
    pub center_g: f64,
}

impl Default for ResonanceConfig {
    fn default() -> Self {
        let r = FeshbachResonance::default();
        Self {
            a_bg_a0: r.a_bg / BOHR_RADIUS,
            width_g: r.width_gauss,
            center_g: r.center_gauss,
        }
    }
}

impl ResonanceConfig {
    pub fn build(&self) -> Result<FeshbachResonance> {
        FeshbachResonance::new(self.a_bg_a0 * BOHR_RADIUS, self.width_g, self.center_g)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub points: usize,
    pub extent_um: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            points: 4096,
            extent_um: 800.0,
        }
    }
}

impl GridConfig {
    pub fn build(&self) -> Result<Grid1D> {
        Grid1D::new(self.points, self.extent_um * UM)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GuideConfig {
    pub species: String,
    pub omega_r_hz: f64,
    /// Axial frequency in Hz; negative means expulsive (ω_z² < 0).
    pub axial_signed_hz: f64,
    pub acceleration_m_s2: f64,
    pub quartic_j_m4: f64,
}

impl Default for GuideConfig {
    fn default() -> Self {
        Self {
            species: "rb85".into(),
            omega_r_hz: 70.0,
            axial_signed_hz: -3.0,
            acceleration_m_s2: 0.0,
            quartic_j_m4: 0.0,
        }
    }
}

impl GuideConfig {
    pub fn species(&self) -> Result<Species> {
        Species::by_label(&self.species)
    }

    pub fn omega_z_sq(&self) -> f64 {
        self.axial_signed_hz.signum() * angular(self.axial_signed_hz).powi(2)
    }

    pub fn potential(&self) -> AxialPotential {
        AxialPotential {
            omega_z_sq: self.omega_z_sq(),
            acceleration: self.acceleration_m_s2,
            quartic_coeff: self.quartic_j_m4,
        }
    }

    fn validate(&self) -> Result<()> {
        self.species()?;
        positive("guide.omega_r_hz", self.omega_r_hz)?;
        finite("guide.axial_signed_hz", self.axial_signed_hz)?;
        self.potential().validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialKind {
    /// Imaginary-time ground state of a harmonic preparation trap.
    GroundState,
    /// Gaussian whose density has rms `width_um`.
    Gaussian,
    /// sech profile with length `width_um`.
    Sech,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialConfig {
    pub kind: InitialKind,
    pub atom_number: f64,
    pub prep_trap_hz: f64,
    pub prep_a_a0: f64,
    pub width_um: f64,
    pub offset_um: f64,
    pub tolerance: f64,
}

impl Default for InitialConfig {
    fn default() -> Self {
        Self {
            kind: InitialKind::GroundState,
            atom_number: 1e4,
            prep_trap_hz: 30.0,
            prep_a_a0: 5.0,
            width_um: 2.0,
            offset_um: 0.0,
            tolerance: 1e-12,
        }
    }
}

impl InitialConfig {
    fn validate(&self) -> Result<()> {
        positive("initial.atom_number", self.atom_number)?;
        finite("initial.offset_um", self.offset_um)?;
        match self.kind {
            InitialKind::GroundState => {
                positive("initial.prep_trap_hz", self.prep_trap_hz)?;
                finite("initial.prep_a_a0", self.prep_a_a0)?;
                positive("initial.tolerance", self.tolerance)
            }
            _ => positive("initial.width_um", self.width_um),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExpandConfig {
    pub hold_ms: f64,
    pub dt_us: f64,
    /// Gaussian noise added to exported widths.
    pub width_noise_um: f64,
    pub sweep: SweepConfig,
    pub series: SeriesConfig,
}

impl Default for ExpandConfig {
    fn default() -> Self {
        Self {
            hold_ms: 90.0,
            dt_us: 5.0,
            width_noise_um: 0.0,
            sweep: SweepConfig::default(),
            series: SeriesConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub enabled: bool,
    pub a_min_a0: f64,
    pub a_max_a0: f64,
    pub coarse_points: usize,
    pub refine_iterations: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            a_min_a0: -3.0,
            a_max_a0: 2.0,
            coarse_points: 21,
            refine_iterations: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeriesConfig {
    pub enabled: bool,
    pub a_values_a0: Vec<f64>,
    /// Add a series at the soliton parameter (found by the sweep unless
    /// `soliton_a0` is given).
    pub include_soliton: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub soliton_a0: Option<f64>,
    pub duration_ms: f64,
    pub sample_step_ms: f64,
    /// Wider grid for the series, where repulsive clouds grow large.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
}

impl Default for SeriesConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            a_values_a0: vec![50.0, 5.0],
            include_soliton: true,
            soliton_a0: None,
            duration_ms: 90.0,
            sample_step_ms: 5.0,
            grid: Some(GridConfig {
                points: 8192,
                extent_um: 1600.0,
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MzMode {
    /// One fringe at `t_ms`, `a_a0`.
    Fringe,
    /// Visibility against scattering length at `t_ms`.
    ASweep,
    /// Visibility against interpulse time for several scattering lengths.
    TSweep,
    /// Fringe phase against interpulse time and the quadratic fit.
    PhaseLaw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MzConfig {
    pub mode: MzMode,
    pub t_ms: f64,
    pub a_a0: f64,
    pub buffer_ms: f64,
    /// Two-photon Rabi frequency of finite pulses; 0 selects instantaneous
    /// pulses.
    pub rabi_hz: f64,
    pub cross_coupling: f64,
    pub dt_us: f64,
    pub phases: usize,
    pub lattice_wavelength_nm: f64,
    /// Propagation in the guide at the interferometer scattering length
    /// before the sequence starts.
    pub hold_ms: f64,
    pub hold_dt_us: f64,
    /// Gaussian noise added to each N_rel sample.
    pub n_rel_noise: f64,
    pub a_sweep: ASweepConfig,
    pub t_sweep: TSweepConfig,
    pub phase_law: PhaseLawConfig,
}

impl Default for MzConfig {
    fn default() -> Self {
        Self {
            mode: MzMode::Fringe,
            t_ms: 1.0,
            a_a0: 0.0,
            buffer_ms: 0.4,
            rabi_hz: 0.0,
            cross_coupling: 2.0,
            dt_us: 1.0,
            phases: 8,
            lattice_wavelength_nm: 780.0,
            hold_ms: 0.0,
            hold_dt_us: 5.0,
            n_rel_noise: 0.0,
            a_sweep: ASweepConfig::default(),
            t_sweep: TSweepConfig::default(),
            phase_law: PhaseLawConfig::default(),
        }
    }
}

impl MzConfig {
    pub fn k_lattice(&self) -> f64 {
        2.0 * PI / (self.lattice_wavelength_nm * 1e-9)
    }

    /// Sequence at interpulse time `t` and scattering length `a` (SI).
    pub fn sequence(&self, t: f64, a: f64, potential: AxialPotential) -> Result<MZSequence> {
        let mut seq = MZSequence::standard(t, a, potential);
        seq.buffer = self.buffer_ms * MS;
        seq.cross_coupling = self.cross_coupling;
        seq.dt = self.dt_us * US;
        seq.k_lattice = self.k_lattice();
        if self.rabi_hz > 0.0 {
            let r = angular(self.rabi_hz);
            seq.pulses = [
                PulseSpec::finite(PulseKind::HalfPi, 0.0, r)?,
                PulseSpec::finite(PulseKind::Pi, 0.0, r)?,
                PulseSpec::finite(PulseKind::HalfPi, 0.0, r)?,
            ];
        }
        seq.validate()?;
        Ok(seq)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ASweepConfig {
    pub a_min_a0: f64,
    pub a_max_a0: f64,
    pub a_step_a0: f64,
}

impl Default for ASweepConfig {
    fn default() -> Self {
        Self {
            a_min_a0: -3.0,
            a_max_a0: 1.0,
            a_step_a0: 0.5,
        }
    }
}

impl ASweepConfig {
    pub fn values(&self) -> Result<Vec<f64>> {
        positive("mz.a_sweep.a_step_a0", self.a_step_a0)?;
        if !(self.a_max_a0 >= self.a_min_a0) {
            return Err(Error::Config("mz.a_sweep: a_max_a0 must not be below a_min_a0".into()));
        }
        let n = ((self.a_max_a0 - self.a_min_a0) / self.a_step_a0 + 1e-9).floor() as usize + 1;
        Ok((0..n).map(|i| self.a_min_a0 + i as f64 * self.a_step_a0).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TSweepConfig {
    pub t_ms: Vec<f64>,
    pub a_values_a0: Vec<f64>,
    pub include_soliton: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub soliton_a0: Option<f64>,
}

impl Default for TSweepConfig {
    fn default() -> Self {
        Self {
            t_ms: vec![0.5, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
            a_values_a0: vec![0.0],
            include_soliton: true,
            soliton_a0: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhaseLawConfig {
    pub t_ms: Vec<f64>,
}

impl Default for PhaseLawConfig {
    fn default() -> Self {
        Self {
            t_ms: vec![0.5, 1.0, 2.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurfaceConfig {
    pub alpha: f64,
    pub lambda_sq: f64,
    pub guess_rho: f64,
    pub guess_z: f64,
    pub rho_min: f64,
    pub rho_max: f64,
    pub z_min: f64,
    pub z_max: f64,
    pub points_rho: usize,
    pub points_z: usize,
}

impl Default for SurfaceConfig {
    fn default() -> Self {
        Self {
            alpha: -18.26,
            lambda_sq: -1.0 / 4900.0,
            guess_rho: 1.0,
            guess_z: 30.0,
            rho_min: 0.5,
            rho_max: 2.0,
            z_min: 5.0,
            z_max: 80.0,
            points_rho: 200,
            points_z: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FieldmapConfig {
    pub species: String,
    pub f: u8,
    pub delta_m_f: i32,
    /// r.f. data (`position_mm,frequency_mhz`); synthetic data when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    /// Report the field deviation over `run_half_window_mm` around here.
    pub run_position_mm: f64,
    pub run_half_window_mm: f64,
    pub synthetic: SyntheticRfConfig,
}

impl Default for FieldmapConfig {
    fn default() -> Self {
        Self {
            species: "rb87".into(),
            f: 1,
            delta_m_f: 1,
            input: None,
            run_position_mm: 0.0,
            run_half_window_mm: 0.27,
            synthetic: SyntheticRfConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticRfConfig {
    pub center_g: f64,
    pub curvature_mg_mm2: f64,
    pub vertex_mm: f64,
    pub z_min_mm: f64,
    pub z_max_mm: f64,
    pub points: usize,
    pub noise_khz: f64,
}

impl Default for SyntheticRfConfig {
    fn default() -> Self {
        Self {
            center_g: 165.776,
            curvature_mg_mm2: -103.0,
            vertex_mm: 0.0,
            z_min_mm: -3.0,
            z_max_mm: 3.0,
            points: 25,
            noise_khz: 0.0,
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be positive and finite, got {v}")))
    }
}

fn non_negative(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "{name} must be non-negative and finite, got {v}"
        )))
    }
}

fn finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be finite, got {v}")))
    }
}

/// Key=value lines describing a run, plus the files it wrote.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub lines: Vec<String>,
    pub files: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

impl Report {
    fn line(&mut self, key: &str, value: impl std::fmt::Display) {
        self.lines.push(format!("{key}={value}"));
    }
}

struct Output<'a> {
    dir: &'a Path,
    report: &'a mut Report,
}

impl Output<'_> {
    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        fs::create_dir_all(self.dir)?;
        let path = self.dir.join(name);
        self.report.files.push(path.clone());
        Ok(BufWriter::new(File::create(path)?))
    }
}

fn write_fit<W: Write>(mut w: W, kind: &str, fit: &FitResult) -> Result<()> {
    crate::io::write_schema_header(&mut w, kind)?;
    writeln!(w, "parameter,value,stderr")?;
    for (i, name) in fit.names.iter().enumerate() {
        writeln!(w, "{name},{:.12e},{:.12e}", fit.parameters[i], fit.standard_errors[i])?;
    }
    Ok(())
}

fn a0_label(a_a0: f64) -> String {
    format!("{a_a0:+.3}a0")
}

// ---------------------------------------------------------------- feshbach

/// Conversions requested on the command line.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeshbachRequest {
    pub fields_g: Vec<f64>,
    pub scattering_a0: Vec<f64>,
    /// (start, stop, step) in gauss.
    pub curve: Option<(f64, f64, f64)>,
}

pub const POLE_WARNING_G: f64 = 0.1;

pub fn run_feshbach(sc: &Scenario, req: &FeshbachRequest, out: &Path) -> Result<Report> {
    let res = sc.resonance.build()?;
    if let Some((lo, hi, step)) = req.curve {
        positive("curve step", step)?;
        if !(hi > lo) {
            return Err(Error::Config("curve stop must exceed start".into()));
        }
    }
    let mut report = Report::default();
    for &b in &req.fields_g {
        if res.pole_distance(b) < POLE_WARNING_G {
            report
                .warnings
                .push(format!("field {b} G is within {POLE_WARNING_G} G of the resonance"));
        }
        let a = res.scattering_length(b)?;
        report.line(&format!("a_a0[B={b}G]"), format!("{:.6}", a / BOHR_RADIUS));
    }
    for &a in &req.scattering_a0 {
        let b = res.field_for_scattering_length(a * BOHR_RADIUS)?;
        if res.pole_distance(b) < POLE_WARNING_G {
            report
                .warnings
                .push(format!("a = {a} a0 lies within {POLE_WARNING_G} G of the resonance"));
        }
        report.line(&format!("B_G[a={a}a0]"), format!("{b:.6}"));
    }
    if let Some((lo, hi, step)) = req.curve {
        let mut o = Output {
            dir: out,
            report: &mut report,
        };
        let mut w = o.create("feshbach_curve.csv")?;
        crate::io::write_schema_header(&mut w, "feshbach-curve")?;
        writeln!(w, "b_gauss,a_a0")?;
        let n = ((hi - lo) / step + 1e-9).floor() as usize + 1;
        let mut near_pole = false;
        for i in 0..n {
            let b = lo + i as f64 * step;
            match res.scattering_length(b) {
                Ok(a) => {
                    near_pole |= res.pole_distance(b) < POLE_WARNING_G;
                    writeln!(w, "{b:.6},{:.9}", a / BOHR_RADIUS)?;
                }
                Err(Error::Pole { .. }) => near_pole = true,
                Err(e) => return Err(e),
            }
        }
        w.flush()?;
        if near_pole {
            report.warnings.push(format!(
                "curve passes within {POLE_WARNING_G} G of the resonance at {} G",
                res.center_gauss
            ));
        }
    }
    Ok(report)
}

// -------------------------------------------------------------- varsurface

pub fn run_varsurface(sc: &Scenario, out: &Path) -> Result<Report> {
    let s = &sc.surface;
    let p = VariationalParams::new(s.alpha, s.lambda_sq)?;
    positive("surface.guess_rho", s.guess_rho)?;
    positive("surface.guess_z", s.guess_z)?;
    if s.points_rho == 0 || s.points_z == 0 {
        return Err(Error::Config("surface grid needs at least one point per axis".into()));
    }
    sc.guide.validate()?;
    let species = sc.guide.species()?;
    let sigma_rho = variational::radial_length(species.mass, angular(sc.guide.omega_r_hz))?;
    let grid = variational::surface_grid(
        &p,
        (s.rho_min, s.rho_max),
        (s.z_min, s.z_max),
        (s.points_rho, s.points_z),
    )?;

    let mut report = Report::default();
    let point = variational::find_stationary_point(&p, (s.guess_rho, s.guess_z));
    let mut o = Output {
        dir: out,
        report: &mut report,
    };
    let mut w = o.create("surface.csv")?;
    grid.write_csv(&mut w)?;
    w.flush()?;
    let mut w = o.create("stationary_point.csv")?;
    crate::io::write_schema_header(&mut w, "stationary-point")?;
    writeln!(w, "gamma_rho,gamma_z,epsilon,classification,l_z_um")?;
    match point {
        Ok(pt) => {
            let lz = variational::soliton_axial_width(&pt, sigma_rho);
            writeln!(
                w,
                "{:.9},{:.9},{:.12e},{},{:.6}",
                pt.gamma_rho,
                pt.gamma_z,
                pt.energy,
                pt.classification,
                lz / UM
            )?;
            w.flush()?;
            report.line("gamma_rho", format!("{:.6}", pt.gamma_rho));
            report.line("gamma_z", format!("{:.6}", pt.gamma_z));
            report.line("classification", pt.classification);
            report.line("l_z_um", format!("{:.3}", lz / UM));
            if pt.classification == Classification::Degenerate {
                report.warnings.push("stationary point is degenerate".into());
            }
        }
        Err(e) => {
            w.flush()?;
            report.warnings.push(format!("no stationary point from the guess: {e}"));
        }
    }
    report.line("surface_rows", grid.gamma_rho.len() * grid.gamma_z.len());
    Ok(report)
}

// ------------------------------------------------------------------ expand

/// Solver, initial state and guide potential shared by the GPE scenarios.
pub struct Setup {
    pub solver: Solver,
    pub initial: WaveState,
    pub potential: AxialPotential,
}

fn validate_gpe(sc: &Scenario) -> Result<()> {
    sc.guide.validate()?;
    sc.initial.validate()?;
    sc.grid.build()?;
    Ok(())
}

/// Builds the solver on `grid` and prepares the initial state.
pub fn setup(sc: &Scenario, grid: &GridConfig) -> Result<Setup> {
    validate_gpe(sc)?;
    let species = sc.guide.species()?;
    let solver = Solver::new(grid.build()?, species.mass, angular(sc.guide.omega_r_hz))?;
    let init = &sc.initial;
    let offset = init.offset_um * UM;
    let mut initial = match init.kind {
        InitialKind::GroundState => {
            let trap = AxialPotential::harmonic(angular(init.prep_trap_hz).powi(2));
            let gs = solver.ground_state(&trap, init.prep_a_a0 * BOHR_RADIUS, init.atom_number, init.tolerance)?;
            shift(&gs.state, solver.grid(), offset)?
        }
        InitialKind::Gaussian => gaussian_state(solver.grid(), init.width_um * UM, offset, init.atom_number)?,
        InitialKind::Sech => sech_state(solver.grid(), init.width_um * UM, offset, init.atom_number)?,
    };
    initial.time = 0.0;
    Ok(Setup {
        solver,
        initial,
        potential: sc.guide.potential(),
    })
}

/// Moves a state by a whole number of grid cells.
fn shift(state: &WaveState, grid: &Grid1D, offset: f64) -> Result<WaveState> {
    let cells = (offset / grid.spacing()).round() as isize;
    if cells.unsigned_abs() >= grid.len() / 2 {
        return Err(Error::Config("initial.offset_um lies outside the window".into()));
    }
    let n = grid.len() as isize;
    let mut psi = state.psi.clone();
    for (i, c) in state.psi.iter().enumerate() {
        psi[(i as isize + cells).rem_euclid(n) as usize] = *c;
    }
    Ok(WaveState { psi, ..state.clone() })
}

fn validate_expand(sc: &Scenario) -> Result<()> {
    validate_gpe(sc)?;
    let e = &sc.expand;
    non_negative("expand.hold_ms", e.hold_ms)?;
    positive("expand.dt_us", e.dt_us)?;
    non_negative("expand.width_noise_um", e.width_noise_um)?;
    if e.sweep.enabled {
        if !(e.sweep.a_max_a0 > e.sweep.a_min_a0) {
            return Err(Error::Config("expand.sweep: a_max_a0 must exceed a_min_a0".into()));
        }
        if e.sweep.coarse_points < 3 {
            return Err(Error::Config("expand.sweep.coarse_points must be at least 3".into()));
        }
    }
    if e.series.enabled {
        non_negative("expand.series.duration_ms", e.series.duration_ms)?;
        positive("expand.series.sample_step_ms", e.series.sample_step_ms)?;
        if let Some(g) = &e.series.grid {
            g.build()?;
        }
        if e.series.include_soliton && e.series.soliton_a0.is_none() && !e.sweep.enabled {
            return Err(Error::Config(
                "expand.series.include_soliton needs soliton_a0 or an enabled sweep".into(),
            ));
        }
    }
    let species = sc.guide.species()?;
    let solver = Solver::new(sc.grid.build()?, species.mass, angular(sc.guide.omega_r_hz))?;
    solver.check_time_step(e.dt_us * US)
}

/// Coarse scan plus refinement of the width after `expand.hold_ms`.
pub fn soliton_parameter(sc: &Scenario) -> Result<SolitonParameter> {
    let e = &sc.expand;
    let s = setup(sc, &sc.grid)?;
    s.solver.find_soliton_parameter(
        &s.initial,
        &s.potential,
        &SolitonSearch {
            a_range: (e.sweep.a_min_a0 * BOHR_RADIUS, e.sweep.a_max_a0 * BOHR_RADIUS),
            coarse_points: e.sweep.coarse_points,
            refine_iterations: e.sweep.refine_iterations,
            hold_time: e.hold_ms * MS,
            dt: e.dt_us * US,
        },
    )
}

/// Width series and fitted width acceleration for one scattering length.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesResult {
    pub a_a0: f64,
    /// (t, width) in SI units, noise included.
    pub series: Vec<(f64, f64)>,
    /// d²σ/dt² (m/s²) and its standard error.
    pub acceleration: f64,
    pub acceleration_stderr: f64,
}

pub fn expansion_series(sc: &Scenario, a_values_a0: &[f64]) -> Result<Vec<SeriesResult>> {
    let e = &sc.expand;
    let grid = e.series.grid.clone().unwrap_or_else(|| sc.grid.clone());
    let s = setup(sc, &grid)?;
    let n = (e.series.duration_ms / e.series.sample_step_ms + 1e-9).floor() as usize;
    let times: Vec<f64> = (0..=n).map(|i| i as f64 * e.series.sample_step_ms * MS).collect();
    let raw: Vec<Vec<(f64, f64)>> = a_values_a0
        .par_iter()
        .map(|&a| {
            s.solver
                .expansion_series(&s.initial, &s.potential, a * BOHR_RADIUS, &times, e.dt_us * US)
        })
        .collect::<Result<_>>()?;
    let mut rng = sc.rng(1);
    let noise = Normal::new(0.0, e.width_noise_um * UM).map_err(|err| Error::Config(err.to_string()))?;
    raw.into_iter()
        .zip(a_values_a0)
        .map(|(series, &a)| {
            let series: Vec<(f64, f64)> = series
                .into_iter()
                .map(|(t, w)| {
                    (
                        t,
                        if e.width_noise_um > 0.0 {
                            w + noise.sample(&mut rng)
                        } else {
                            w
                        },
                    )
                })
                .collect();
            let (acc, se) = if series.len() >= 4 {
                let ts: Vec<f64> = series.iter().map(|p| p.0).collect();
                let ws: Vec<f64> = series.iter().map(|p| p.1).collect();
                let f = fit::fit_parabola(&ts, &ws)?;
                (f.get("second_derivative"), f.stderr("second_derivative"))
            } else {
                (f64::NAN, f64::NAN)
            };
            Ok(SeriesResult {
                a_a0: a,
                series,
                acceleration: acc,
                acceleration_stderr: se,
            })
        })
        .collect()
}

pub fn run_expand(sc: &Scenario, out: &Path) -> Result<Report> {
    validate_expand(sc)?;
    let e = &sc.expand;
    let mut report = Report::default();
    let mut soliton_a0 = e.series.soliton_a0;
    if e.sweep.enabled {
        let sp = soliton_parameter(sc)?;
        let mut o = Output {
            dir: out,
            report: &mut report,
        };
        let mut w = o.create("width_vs_a.csv")?;
        crate::io::write_schema_header(&mut w, "width-vs-a")?;
        writeln!(w, "a_a0,width_um")?;
        for (a, wd) in &sp.scan {
            writeln!(w, "{:.6},{:.9}", a / BOHR_RADIUS, wd / UM)?;
        }
        w.flush()?;
        let mut w = o.create("soliton_parameter.csv")?;
        crate::io::write_schema_header(&mut w, "soliton-parameter")?;
        writeln!(w, "a_s_a0,width_um,width_at_zero_um,boundary_warning")?;
        let w0 = sp.width_at(0.0);
        writeln!(
            w,
            "{:.6},{:.9},{},{}",
            sp.a_s / BOHR_RADIUS,
            sp.width / UM,
            w0.map(|x| format!("{:.9}", x / UM)).unwrap_or_else(|| "nan".into()),
            sp.boundary_warning
        )?;
        w.flush()?;
        report.line("a_s_a0", format!("{:.4}", sp.a_s / BOHR_RADIUS));
        report.line("width_at_a_s_um", format!("{:.4}", sp.width / UM));
        if let Some(w0) = w0 {
            report.line("width_at_zero_um", format!("{:.4}", w0 / UM));
        }
        if sp.boundary_warning {
            report
                .warnings
                .push("width minimum lies on the edge of the scanned range".into());
        }
        if soliton_a0.is_none() {
            soliton_a0 = Some(sp.a_s / BOHR_RADIUS);
        }
    }
    if e.series.enabled {
        let mut values = e.series.a_values_a0.clone();
        if e.series.include_soliton {
            values.push(soliton_a0.expect("validated"));
        }
        let results = expansion_series(sc, &values)?;
        let mut o = Output {
            dir: out,
            report: &mut report,
        };
        for r in &results {
            let w = o.create(&format!("series_{}.csv", a0_label(r.a_a0)))?;
            write_series_csv(w, &r.series)?;
        }
        let mut w = o.create("accelerations.csv")?;
        crate::io::write_schema_header(&mut w, "width-accelerations")?;
        writeln!(w, "a_a0,accel_mm_s2,stderr_mm_s2")?;
        for r in &results {
            writeln!(
                w,
                "{:.6},{:.9},{:.9}",
                r.a_a0,
                r.acceleration * 1e3,
                r.acceleration_stderr * 1e3
            )?;
        }
        w.flush()?;
        for r in &results {
            report.line(
                &format!("accel_mm_s2[{}]", a0_label(r.a_a0)),
                format!("{:.4}±{:.4}", r.acceleration * 1e3, r.acceleration_stderr * 1e3),
            );
            if r.series.len() == 1 {
                report.line(
                    &format!("width_um[{}]", a0_label(r.a_a0)),
                    format!("{:.6}", r.series[0].1 / UM),
                );
            }
        }
    }
    Ok(report)
}

// ---------------------------------------------------------------------- mz

fn validate_mz(sc: &Scenario) -> Result<()> {
    validate_gpe(sc)?;
    let m = &sc.mz;
    positive("mz.t_ms", m.t_ms)?;
    finite("mz.a_a0", m.a_a0)?;
    non_negative("mz.buffer_ms", m.buffer_ms)?;
    non_negative("mz.rabi_hz", m.rabi_hz)?;
    finite("mz.cross_coupling", m.cross_coupling)?;
    positive("mz.dt_us", m.dt_us)?;
    positive("mz.lattice_wavelength_nm", m.lattice_wavelength_nm)?;
    non_negative("mz.hold_ms", m.hold_ms)?;
    positive("mz.hold_dt_us", m.hold_dt_us)?;
    non_negative("mz.n_rel_noise", m.n_rel_noise)?;
    if m.phases < 4 {
        return Err(Error::Config("mz.phases must be at least 4".into()));
    }
    match m.mode {
        MzMode::ASweep => {
            m.a_sweep.values()?;
        }
        MzMode::TSweep => {
            if m.t_sweep.t_ms.len() < 3 || m.t_sweep.t_ms.iter().any(|t| !(*t > 0.0)) {
                return Err(Error::Config("mz.t_sweep.t_ms needs at least 3 positive times".into()));
            }
        }
        MzMode::PhaseLaw => {
            if m.phase_law.t_ms.len() < 2 || m.phase_law.t_ms.iter().any(|t| !(*t > 0.0)) {
                return Err(Error::Config(
                    "mz.phase_law.t_ms needs at least 2 positive times".into(),
                ));
            }
        }
        MzMode::Fringe => {}
    }
    m.sequence(m.t_ms * MS, m.a_a0 * BOHR_RADIUS, sc.guide.potential())?;
    Ok(())
}

/// Fringe scan and fitted (V, Φ) for one interferometer.
#[derive(Debug, Clone, PartialEq)]
pub struct FringeResult {
    pub a_a0: f64,
    pub t: f64,
    pub scan: Vec<(f64, f64)>,
    pub fit: FitResult,
}

impl FringeResult {
    pub fn visibility(&self) -> f64 {
        self.fit.get("V")
    }

    pub fn phase(&self) -> f64 {
        self.fit.get("Phi")
    }
}

/// State after `mz.hold_ms` in the guide at scattering length `a_a0`.
pub fn held_state(sc: &Scenario, s: &Setup, a_a0: f64) -> Result<WaveState> {
    let m = &sc.mz;
    let mut held = if m.hold_ms > 0.0 {
        s.solver.evolve(
            &s.initial,
            &s.potential,
            &ScatteringSchedule::constant(a_a0 * BOHR_RADIUS),
            m.hold_ms * MS,
            m.hold_dt_us * US,
        )?
    } else {
        s.initial.clone()
    };
    held.time = 0.0;
    Ok(held)
}

/// Runs every (a, T) interferometer; noise is added afterwards in input
/// order so the result does not depend on scheduling.
pub fn fringes(sc: &Scenario, runs: &[(f64, f64)]) -> Result<Vec<FringeResult>> {
    let m = &sc.mz;
    let s = setup(sc, &sc.grid)?;
    let mut distinct: Vec<f64> = runs.iter().map(|r| r.0).collect();
    distinct.sort_by(|a, b| a.total_cmp(b));
    distinct.dedup();
    let held: Vec<WaveState> = distinct
        .par_iter()
        .map(|&a| held_state(sc, &s, a))
        .collect::<Result<_>>()?;
    let phases = uniform_phases(m.phases);
    let scans: Vec<Vec<(f64, f64)>> = runs
        .par_iter()
        .map(|&(a, t)| {
            let idx = distinct.iter().position(|&x| x == a).expect("present");
            let seq = m.sequence(t, a * BOHR_RADIUS, s.potential)?;
            fringe_scan(&seq, &phases, &s.solver, &held[idx])
        })
        .collect::<Result<_>>()?;
    let mut rng = sc.rng(2);
    let noise = Normal::new(0.0, m.n_rel_noise).map_err(|e| Error::Config(e.to_string()))?;
    scans
        .into_iter()
        .zip(runs)
        .map(|(scan, &(a, t))| {
            let scan: Vec<(f64, f64)> = scan
                .into_iter()
                .map(|(p, n)| {
                    (
                        p,
                        if m.n_rel_noise > 0.0 {
                            n + noise.sample(&mut rng)
                        } else {
                            n
                        },
                    )
                })
                .collect();
            let (ph, nr): (Vec<f64>, Vec<f64>) = scan.iter().cloned().unzip();
            let fit = fit::fit_fringe(&ph, &nr)?;
            Ok(FringeResult { a_a0: a, t, scan, fit })
        })
        .collect()
}

fn resolve_soliton(sc: &Scenario, given: Option<f64>, report: &mut Report) -> Result<f64> {
    match given {
        Some(a) => Ok(a),
        None => {
            let sp = soliton_parameter(sc)?;
            if sp.boundary_warning {
                report
                    .warnings
                    .push("width minimum lies on the edge of the scanned range".into());
            }
            report.line("a_s_a0", format!("{:.4}", sp.a_s / BOHR_RADIUS));
            Ok(sp.a_s / BOHR_RADIUS)
        }
    }
}

fn write_visibility_table<W: Write>(mut w: W, kind: &str, rows: &[FringeResult]) -> Result<()> {
    crate::io::write_schema_header(&mut w, kind)?;
    writeln!(w, "a_a0,t_ms,visibility,visibility_stderr,phase_rad,phase_stderr")?;
    for r in rows {
        writeln!(
            w,
            "{:.6},{:.6},{:.9},{:.9},{:.9},{:.9}",
            r.a_a0,
            r.t / MS,
            r.visibility(),
            r.fit.stderr("V"),
            r.phase(),
            r.fit.stderr("Phi")
        )?;
    }
    Ok(())
}

/// Gaussian decay fit of visibility against T for one scattering length.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayResult {
    pub a_a0: f64,
    pub fit: FitResult,
}

pub fn decay_fits(rows: &[FringeResult]) -> Result<Vec<DecayResult>> {
    let mut values: Vec<f64> = rows.iter().map(|r| r.a_a0).collect();
    values.dedup();
    values
        .into_iter()
        .map(|a| {
            let (ts, vs): (Vec<f64>, Vec<f64>) = rows
                .iter()
                .filter(|r| r.a_a0 == a)
                .map(|r| (r.t, r.visibility()))
                .unzip();
            Ok(DecayResult {
                a_a0: a,
                fit: fit::fit_gaussian_decay(&ts, &vs)?,
            })
        })
        .collect()
}

pub fn run_mz(sc: &Scenario, out: &Path) -> Result<Report> {
    validate_mz(sc)?;
    let m = &sc.mz;
    let mut report = Report::default();
    match m.mode {
        MzMode::Fringe => {
            let r = fringes(sc, &[(m.a_a0, m.t_ms * MS)])?.remove(0);
            let mut o = Output {
                dir: out,
                report: &mut report,
            };
            write_fringe_csv(o.create("fringe.csv")?, &r.scan)?;
            write_fit(o.create("fringe_fit.csv")?, "fringe-fit", &r.fit)?;
            report.line("visibility", format!("{:.6}", r.visibility()));
            report.line("phase_rad", format!("{:.6}", r.phase()));
        }
        MzMode::ASweep => {
            let values = m.a_sweep.values()?;
            let runs: Vec<(f64, f64)> = values.iter().map(|&a| (a, m.t_ms * MS)).collect();
            let rows = fringes(sc, &runs)?;
            let mut o = Output {
                dir: out,
                report: &mut report,
            };
            for r in &rows {
                write_fringe_csv(o.create(&format!("fringe_{}.csv", a0_label(r.a_a0)))?, &r.scan)?;
            }
            write_visibility_table(o.create("visibility_vs_a.csv")?, "visibility-vs-a", &rows)?;
            let best = rows
                .iter()
                .max_by(|x, y| x.visibility().total_cmp(&y.visibility()))
                .expect("non-empty sweep");
            report.line("argmax_a0", format!("{:.4}", best.a_a0));
            report.line("max_visibility", format!("{:.6}", best.visibility()));
        }
        MzMode::TSweep => {
            let mut values = m.t_sweep.a_values_a0.clone();
            if m.t_sweep.include_soliton {
                values.push(resolve_soliton(sc, m.t_sweep.soliton_a0, &mut report)?);
            }
            let runs: Vec<(f64, f64)> = values
                .iter()
                .flat_map(|&a| m.t_sweep.t_ms.iter().map(move |&t| (a, t * MS)))
                .collect();
            let rows = fringes(sc, &runs)?;
            let decays = decay_fits(&rows)?;
            let mut o = Output {
                dir: out,
                report: &mut report,
            };
            write_visibility_table(o.create("visibility_vs_t.csv")?, "visibility-vs-t", &rows)?;
            let mut w = o.create("decay_fits.csv")?;
            crate::io::write_schema_header(&mut w, "visibility-decay")?;
            writeln!(w, "a_a0,v0,v0_stderr,tau_half_ms,tau_half_stderr_ms")?;
            for d in &decays {
                writeln!(
                    w,
                    "{:.6},{:.9},{:.9},{:.9},{:.9}",
                    d.a_a0,
                    d.fit.get("V0"),
                    d.fit.stderr("V0"),
                    d.fit.get("tau_half") / MS,
                    d.fit.stderr("tau_half") / MS
                )?;
            }
            w.flush()?;
            for d in &decays {
                report.line(
                    &format!("tau_half_ms[{}]", a0_label(d.a_a0)),
                    format!("{:.4}", d.fit.get("tau_half") / MS),
                );
            }
        }
        MzMode::PhaseLaw => {
            let runs: Vec<(f64, f64)> = m.phase_law.t_ms.iter().map(|&t| (m.a_a0, t * MS)).collect();
            let rows = fringes(sc, &runs)?;
            let ts: Vec<f64> = rows.iter().map(|r| r.t).collect();
            let phis: Vec<f64> = rows.iter().map(|r| r.phase()).collect();
            let k = m.k_lattice();
            let fit = fit::fit_quadratic_phase(&ts, &phis, k)?;
            let mut o = Output {
                dir: out,
                report: &mut report,
            };
            let mut w = o.create("phase_vs_t.csv")?;
            crate::io::write_schema_header(&mut w, "phase-vs-t")?;
            writeln!(w, "t_ms,phase_rad,phase_stderr,analytic_rad")?;
            for r in &rows {
                let analytic = crate::interferometer::analytic_phase(k, sc.guide.acceleration_m_s2, r.t);
                writeln!(
                    w,
                    "{:.6},{:.9},{:.9},{:.9}",
                    r.t / MS,
                    r.phase(),
                    r.fit.stderr("Phi"),
                    analytic
                )?;
            }
            w.flush()?;
            write_fit(o.create("acceleration_fit.csv")?, "acceleration-fit", &fit)?;
            report.line("acceleration_m_s2", format!("{:.6e}", fit.get("acceleration")));
            report.line(
                "acceleration_stderr_m_s2",
                format!("{:.3e}", fit.stderr("acceleration")),
            );
        }
    }
    Ok(report)
}

// ---------------------------------------------------------------- fieldmap

pub fn synthetic_rf(sc: &Scenario) -> Result<Vec<RfSample>> {
    let fm = &sc.fieldmap;
    let syn = &fm.synthetic;
    if syn.points < 3 {
        return Err(Error::Config("fieldmap.synthetic.points must be at least 3".into()));
    }
    if !(syn.z_max_mm > syn.z_min_mm) {
        return Err(Error::Config(
            "fieldmap.synthetic: z_max_mm must exceed z_min_mm".into(),
        ));
    }
    non_negative("fieldmap.synthetic.noise_khz", syn.noise_khz)?;
    let species = Species::by_label(&fm.species)?;
    let g_f = species.g_f(fm.f)?;
    let profile = FieldProfile {
        center_gauss: syn.center_g,
        curvature: syn.curvature_mg_mm2 * 0.1,
        z_offset: syn.vertex_mm * 1e-3,
        curvature_stderr: 0.0,
    };
    let mut rng = sc.rng(3);
    let noise = Normal::new(0.0, syn.noise_khz * 1e3).map_err(|e| Error::Config(e.to_string()))?;
    (0..syn.points)
        .map(|i| {
            let z = (syn.z_min_mm + (syn.z_max_mm - syn.z_min_mm) * i as f64 / (syn.points - 1) as f64) * 1e-3;
            let f = feshbach::rf_transition_frequency(profile.field_gauss(z), g_f, fm.delta_m_f)?;
            let f = if syn.noise_khz > 0.0 {
                f + noise.sample(&mut rng)
            } else {
                f
            };
            Ok(RfSample {
                position: z,
                frequency: f,
            })
        })
        .collect()
}

pub fn run_fieldmap(sc: &Scenario, out: &Path) -> Result<Report> {
    let fm = &sc.fieldmap;
    let species = Species::by_label(&fm.species)?;
    let g_f = species.g_f(fm.f)?;
    non_negative("fieldmap.run_half_window_mm", fm.run_half_window_mm)?;
    let mut report = Report::default();
    let samples = match &fm.input {
        Some(path) => {
            let file = File::open(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            feshbach::read_rf_csv(std::io::BufReader::new(file))?
        }
        None => {
            let s = synthetic_rf(sc)?;
            let mut o = Output {
                dir: out,
                report: &mut report,
            };
            let mut w = o.create("rf_samples.csv")?;
            feshbach::write_rf_csv(&mut w, &s)?;
            w.flush()?;
            s
        }
    };
    let profile = feshbach::field_map_from_rf(&samples, g_f, fm.delta_m_f)?;
    let mut o = Output {
        dir: out,
        report: &mut report,
    };
    let mut w = o.create("field_profile.csv")?;
    crate::io::write_schema_header(&mut w, "field-profile")?;
    writeln!(w, "center_g,curvature_mg_mm2,curvature_stderr_mg_mm2,vertex_mm")?;
    writeln!(
        w,
        "{:.9},{:.9},{:.9},{:.9}",
        profile.center_gauss,
        profile.curvature * 10.0,
        profile.curvature_stderr * 10.0,
        profile.z_offset * 1e3
    )?;
    w.flush()?;
    let mut w = o.create("rf_residuals.csv")?;
    crate::io::write_schema_header(&mut w, "rf-residuals")?;
    writeln!(w, "position_mm,residual_khz")?;
    for s in &samples {
        let model = feshbach::rf_transition_frequency(profile.field_gauss(s.position), g_f, fm.delta_m_f)?;
        writeln!(w, "{:.9},{:.9}", s.position * 1e3, (s.frequency - model) / 1e3)?;
    }
    w.flush()?;
    // the guided ⁸⁵Rb |2,-2> state sees the fitted curvature
    let w2 = feshbach::axial_frequency_squared(&profile, &Species::rb85(), ZeemanState { f: 2, m_f: -2 })?;
    report.line("curvature_mg_mm2", format!("{:.4}", profile.curvature * 10.0));
    report.line(
        "curvature_stderr_mg_mm2",
        format!("{:.4}", profile.curvature_stderr * 10.0),
    );
    report.line("center_g", format!("{:.6}", profile.center_gauss));
    report.line("vertex_mm", format!("{:.6}", profile.z_offset * 1e3));
    report.line("omega_z_sq_rad2_s2[rb85 F=2 mF=-2]", format!("{w2:.4}"));
    report.line(
        "max_deviation_mg",
        format!(
            "{:.3}",
            profile.max_deviation_gauss(fm.run_position_mm * 1e-3, fm.run_half_window_mm * 1e-3) * 1e3
        ),
    );
    Ok(report)
}

// --------------------------------------------------------------------- fit

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitModel {
    /// x, y → c0, c1, c2.
    Parabola,
    /// phase (rad), N_rel → V, Φ, c.
    Fringe,
    /// T (ms), visibility → V0, τ½, τ_g.
    GaussianDecay,
    /// T (ms), Φ (rad) → acceleration (needs the lattice wavenumber).
    QuadraticPhase,
}

impl std::str::FromStr for FitModel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "parabola" => Ok(Self::Parabola),
            "fringe" => Ok(Self::Fringe),
            "gaussian-decay" => Ok(Self::GaussianDecay),
            "quadratic-phase" => Ok(Self::QuadraticPhase),
            other => Err(Error::Config(format!(
                "unknown fit model '{other}' (parabola, fringe, gaussian-decay, quadratic-phase)"
            ))),
        }
    }
}

pub fn run_fit(input: &Path, model: FitModel, k_lattice: f64, out: &Path) -> Result<Report> {
    let file = File::open(input).map_err(|e| Error::Config(format!("cannot read {}: {e}", input.display())))?;
    let rows = crate::io::read_two_column_csv(std::io::BufReader::new(file))?;
    let (xs, ys): (Vec<f64>, Vec<f64>) = rows.into_iter().unzip();
    let ms = |v: &[f64]| v.iter().map(|t| t * MS).collect::<Vec<f64>>();
    let (fit, kind) = match model {
        FitModel::Parabola => (fit::fit_parabola(&xs, &ys)?, "parabola-fit"),
        FitModel::Fringe => (fit::fit_fringe(&xs, &ys)?, "fringe-fit"),
        FitModel::GaussianDecay => (fit::fit_gaussian_decay(&ms(&xs), &ys)?, "decay-fit"),
        FitModel::QuadraticPhase => {
            positive("lattice wavenumber", k_lattice)?;
            (fit::fit_quadratic_phase(&ms(&xs), &ys, k_lattice)?, "acceleration-fit")
        }
    };
    let mut report = Report::default();
    let mut o = Output {
        dir: out,
        report: &mut report,
    };
    let mut w = o.create("fit.csv")?;
    write_fit(&mut w, kind, &fit)?;
    w.flush()?;
    for (i, n) in fit.names.iter().enumerate() {
        report.line(n, format!("{:.9e}±{:.3e}", fit.parameters[i], fit.standard_errors[i]));
    }
    report.line("residual_norm", format!("{:.3e}", fit.residual_norm));
    Ok(report)
}
