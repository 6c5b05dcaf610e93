//! Effective 1D Gross-Pitaevskii propagation along the waveguide.
//!
//! The axial wavefunction is unit-normalised and the atom number N is
//! carried separately; the mean-field term is `g₁D N |ψ|²` with the
//! quasi-1D coupling `g₁D = 2ħω_r a`. Time stepping is Strang splitting:
//! half kinetic (spectral), full potential + nonlinear (pointwise), half
//! kinetic. Consecutive half kinetic steps are fused, so a run of n steps
//! costs n + 1 forward/inverse FFT pairs.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::constants::HBAR;
use crate::error::{Error, Result};

/// Uniform periodic grid centred on z = 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid1D {
    n_points: usize,
    extent: f64,
    spacing: f64,
    z: Vec<f64>,
    k: Vec<f64>,
}

impl Grid1D {
    pub const MIN_POINTS: usize = 256;

    pub fn new(n_points: usize, extent: f64) -> Result<Self> {
        if n_points < Self::MIN_POINTS || !n_points.is_power_of_two() {
            return Err(Error::Domain(format!(
                "grid needs a power of two ≥ {} points, got {n_points}",
                Self::MIN_POINTS
            )));
        }
        if !(extent > 0.0) || !extent.is_finite() {
            return Err(Error::Domain(format!("grid extent must be positive, got {extent}")));
        }
        let spacing = extent / n_points as f64;
        let half = (n_points / 2) as isize;
        let z = (0..n_points).map(|i| (i as isize - half) as f64 * spacing).collect();
        let dk = 2.0 * PI / extent;
        let k = (0..n_points)
            .map(|j| {
                let j = j as isize;
                let signed = if j < half { j } else { j - n_points as isize };
                signed as f64 * dk
            })
            .collect();
        Ok(Self {
            n_points,
            extent,
            spacing,
            z,
            k,
        })
    }

    /// The default desk-scale grid: 4096 points over 800 μm.
    pub fn desk_scale() -> Self {
        Self::new(4096, 800e-6).expect("valid default grid")
    }

    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        self.n_points == 0
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn positions(&self) -> &[f64] {
        &self.z
    }

    /// Angular wavenumbers in FFT order.
    pub fn wavenumbers(&self) -> &[f64] {
        &self.k
    }

    pub fn k_max(&self) -> f64 {
        PI / self.spacing
    }
}

/// Axial potential `V(z) = ½ m ω_z² z² − m a z + c₄ z⁴`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AxialPotential {
    /// Signed ω_z² (rad²/s²); negative is expulsive.
    pub omega_z_sq: f64,
    /// Uniform acceleration (m/s²) along +z.
    pub acceleration: f64,
    /// Quartic coefficient (J/m⁴).
    pub quartic_coeff: f64,
}

impl AxialPotential {
    pub fn harmonic(omega_z_sq: f64) -> Self {
        Self {
            omega_z_sq,
            ..Self::default()
        }
    }

    pub fn linear(acceleration: f64) -> Self {
        Self {
            acceleration,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega_z_sq.is_finite() && self.acceleration.is_finite() && self.quartic_coeff.is_finite()) {
            return Err(Error::Domain("potential coefficients must be finite".into()));
        }
        Ok(())
    }

    pub fn value(&self, mass: f64, z: f64) -> f64 {
        let z2 = z * z;
        0.5 * mass * self.omega_z_sq * z2 - mass * self.acceleration * z + self.quartic_coeff * z2 * z2
    }
}

/// Piecewise-constant scattering length: `(start time, a)` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatteringSchedule {
    segments: Vec<(f64, f64)>,
}

impl ScatteringSchedule {
    pub fn constant(a: f64) -> Self {
        Self {
            segments: vec![(f64::NEG_INFINITY, a)],
        }
    }

    /// Segments must have strictly increasing start times. Before the first
    /// start the first value applies.
    pub fn new(segments: Vec<(f64, f64)>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::Domain("schedule needs at least one segment".into()));
        }
        if segments.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::Domain("schedule times must be strictly increasing".into()));
        }
        if segments.iter().any(|s| !s.1.is_finite()) {
            return Err(Error::Domain("scattering lengths must be finite".into()));
        }
        Ok(Self { segments })
    }

    pub fn at(&self, t: f64) -> f64 {
        let mut a = self.segments[0].1;
        for &(start, value) in &self.segments {
            if t >= start {
                a = value;
            } else {
                break;
            }
        }
        a
    }

    pub fn max_abs(&self) -> f64 {
        self.segments.iter().map(|s| s.1.abs()).fold(0.0, f64::max)
    }

    pub fn max_value(&self) -> f64 {
        self.segments.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Unit-normalised axial wavefunction plus atom number and clock.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveState {
    pub psi: Vec<Complex64>,
    pub atom_number: f64,
    pub time: f64,
}

impl WaveState {
    pub fn norm_sq(&self, grid: &Grid1D) -> f64 {
        self.psi.iter().map(|c| c.norm_sqr()).sum::<f64>() * grid.spacing()
    }

    pub fn normalize(&mut self, grid: &Grid1D) {
        let s = self.norm_sq(grid).sqrt();
        if s > 0.0 {
            self.psi.iter_mut().for_each(|c| *c /= s);
        }
    }

    pub fn density(&self) -> Vec<f64> {
        self.psi.iter().map(|c| c.norm_sqr()).collect()
    }

    pub fn peak_density(&self) -> f64 {
        self.psi.iter().map(|c| c.norm_sqr()).fold(0.0, f64::max)
    }

    /// Snapshot CSV: z (μm), Re ψ, Im ψ, |ψ|² (SI units of m^-1/2, m^-1).
    pub fn write_csv<W: Write>(&self, grid: &Grid1D, mut w: W) -> Result<()> {
        crate::io::write_schema_header(&mut w, "state-snapshot")?;
        writeln!(w, "z_um,re_psi,im_psi,density")?;
        for (z, c) in grid.positions().iter().zip(&self.psi) {
            writeln!(w, "{:.6},{:.12e},{:.12e},{:.12e}", z * 1e6, c.re, c.im, c.norm_sqr())?;
        }
        Ok(())
    }
}

/// Quasi-1D coupling `g₁D = 2ħω_r a` (J·m).
pub fn coupling_1d(a: f64, omega_r: f64) -> Result<f64> {
    if !(omega_r > 0.0) {
        return Err(Error::Domain("radial frequency must be positive".into()));
    }
    Ok(2.0 * HBAR * omega_r * a)
}

/// sech length `l = ħ / (m ω_r N |a|)` of the stationary bright soliton of
/// the 1D equation with coupling [`coupling_1d`].
pub fn matched_soliton_length(a: f64, atom_number: f64, mass: f64, omega_r: f64) -> f64 {
    HBAR / (mass * omega_r * atom_number * a.abs())
}

/// Attractive scattering length whose 1D soliton has sech length `l`.
pub fn matched_soliton_scattering_length(l: f64, atom_number: f64, mass: f64, omega_r: f64) -> f64 {
    -HBAR / (mass * omega_r * atom_number * l)
}

/// ⟨z⟩ of |ψ|².
pub fn centroid(state: &WaveState, grid: &Grid1D) -> f64 {
    let dz = grid.spacing();
    let (m0, m1) = state
        .psi
        .iter()
        .zip(grid.positions())
        .fold((0.0, 0.0), |(a, b), (c, z)| {
            let n = c.norm_sqr();
            (a + n, b + n * z)
        });
    m1 * dz / (m0 * dz)
}

/// √(⟨z²⟩ − ⟨z⟩²) of |ψ|².
pub fn rms_width(state: &WaveState, grid: &Grid1D) -> f64 {
    density_rms(&state.density(), grid)
}

pub(crate) fn density_rms(density: &[f64], grid: &Grid1D) -> f64 {
    let mut m0 = 0.0;
    let mut m1 = 0.0;
    for (n, z) in density.iter().zip(grid.positions()) {
        m0 += n;
        m1 += n * z;
    }
    let mean = m1 / m0;
    let var = density
        .iter()
        .zip(grid.positions())
        .map(|(n, z)| n * (z - mean) * (z - mean))
        .sum::<f64>()
        / m0;
    var.max(0.0).sqrt()
}

fn check_fits(grid: &Grid1D, center: f64, reach: f64) -> Result<()> {
    if center.abs() + reach > 0.5 * grid.extent() {
        return Err(Error::Resolution(format!(
            "profile centred at {center:e} m with reach {reach:e} m does not fit the {:e} m window",
            grid.extent()
        )));
    }
    Ok(())
}

/// Normalised `sech((z − z₀)/l)` profile.
pub fn sech_state(grid: &Grid1D, l_z: f64, center: f64, atom_number: f64) -> Result<WaveState> {
    if !(l_z > 4.0 * grid.spacing()) {
        return Err(Error::Resolution(format!(
            "sech length {l_z:e} m is not resolved by spacing {:e} m",
            grid.spacing()
        )));
    }
    check_fits(grid, center, 15.0 * l_z)?;
    let psi = grid
        .positions()
        .iter()
        .map(|z| Complex64::new(1.0 / ((z - center) / l_z).cosh(), 0.0))
        .collect();
    let mut s = WaveState {
        psi,
        atom_number,
        time: 0.0,
    };
    s.normalize(grid);
    Ok(s)
}

/// Normalised Gaussian whose density has standard deviation `sigma`.
pub fn gaussian_state(grid: &Grid1D, sigma: f64, center: f64, atom_number: f64) -> Result<WaveState> {
    if !(sigma > 2.0 * grid.spacing()) {
        return Err(Error::Resolution(format!(
            "gaussian width {sigma:e} m is not resolved by spacing {:e} m",
            grid.spacing()
        )));
    }
    check_fits(grid, center, 8.0 * sigma)?;
    let psi = grid
        .positions()
        .iter()
        .map(|z| {
            let u = (z - center) / sigma;
            Complex64::new((-0.25 * u * u).exp(), 0.0)
        })
        .collect();
    let mut s = WaveState {
        psi,
        atom_number,
        time: 0.0,
    };
    s.normalize(grid);
    Ok(s)
}

/// Relative growth of the peak density that counts as collapse.
pub const COLLAPSE_FACTOR: f64 = 1e3;
/// A unit-norm sech of length ℓ peaks at 1/(2ℓ); a peak above the value for
/// ℓ = `MIN_RESOLVED_LENGTH`·dz means the structure has left the grid.
pub const MIN_RESOLVED_LENGTH: f64 = 4.0;
/// Required ratio of window extent to the largest expected rms width.
pub const WINDOW_FACTOR: f64 = 6.0;
/// Upper bound on the kinetic phase ħk²dt/2m at the grid edge.
pub const MAX_KINETIC_PHASE: f64 = 0.5;

/// Split-step propagator for one species in one waveguide.
///
/// Holds the FFT plans; cloning is cheap and clones may run on different
/// threads.
#[derive(Clone)]
pub struct Solver {
    grid: Grid1D,
    mass: f64,
    omega_r: f64,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Solver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Solver")
            .field("n_points", &self.grid.len())
            .field("extent", &self.grid.extent())
            .field("mass", &self.mass)
            .field("omega_r", &self.omega_r)
            .finish()
    }
}

/// Kinetic phase factors (with the 1/n inverse-FFT normalisation folded in).
pub(crate) struct KineticFactors {
    pub half: Vec<Complex64>,
    pub full: Vec<Complex64>,
}

impl Solver {
    pub fn new(grid: Grid1D, mass: f64, omega_r: f64) -> Result<Self> {
        if !(mass > 0.0) {
            return Err(Error::Domain("mass must be positive".into()));
        }
        if !(omega_r > 0.0) {
            return Err(Error::Domain("radial frequency must be positive".into()));
        }
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(grid.len());
        let ifft = planner.plan_fft_inverse(grid.len());
        Ok(Self {
            grid,
            mass,
            omega_r,
            fft,
            ifft,
        })
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn omega_r(&self) -> f64 {
        self.omega_r
    }

    pub(crate) fn forward(&self, buf: &mut [Complex64], scratch: &mut [Complex64]) {
        self.fft.process_with_scratch(buf, scratch);
    }

    pub(crate) fn inverse(&self, buf: &mut [Complex64], scratch: &mut [Complex64]) {
        self.ifft.process_with_scratch(buf, scratch);
    }

    pub(crate) fn scratch(&self) -> Vec<Complex64> {
        let len = self
            .fft
            .get_inplace_scratch_len()
            .max(self.ifft.get_inplace_scratch_len());
        vec![Complex64::new(0.0, 0.0); len]
    }

    /// Free-particle phase per unit time for wavenumber offset `shift`:
    /// `ħ((k+shift)² − shift²)/2m`, i.e. the recoil energy of the shifted
    /// class is removed (it is absorbed by the resonant Bragg frame).
    pub(crate) fn kinetic_factors(&self, dt: f64, shift: f64) -> KineticFactors {
        let norm = 1.0 / self.grid.len() as f64;
        let c = HBAR / (2.0 * self.mass);
        let (half, full) = self
            .grid
            .wavenumbers()
            .iter()
            .map(|&k| {
                let omega = c * ((k + shift) * (k + shift) - shift * shift);
                (
                    Complex64::from_polar(norm, -omega * 0.5 * dt),
                    Complex64::from_polar(norm, -omega * dt),
                )
            })
            .unzip();
        KineticFactors { half, full }
    }

    pub fn check_time_step(&self, dt: f64) -> Result<()> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::Domain(format!("time step must be positive, got {dt}")));
        }
        let phase = HBAR * self.grid.k_max().powi(2) * dt / (2.0 * self.mass);
        if phase >= MAX_KINETIC_PHASE {
            return Err(Error::Domain(format!(
                "time step {dt:e} s gives a kinetic phase of {phase:.3} rad at the grid edge (limit {MAX_KINETIC_PHASE})"
            )));
        }
        Ok(())
    }

    pub fn potential_values(&self, potential: &AxialPotential) -> Vec<f64> {
        self.grid
            .positions()
            .iter()
            .map(|&z| potential.value(self.mass, z))
            .collect()
    }

    /// Per-particle energy `∫ ħ²|∂ψ|²/2m + V|ψ|² + ½ g N |ψ|⁴`.
    pub fn energy(&self, state: &WaveState, potential: &AxialPotential, a: f64) -> f64 {
        let dz = self.grid.spacing();
        let n = self.grid.len() as f64;
        let mut buf = state.psi.clone();
        let mut scratch = self.scratch();
        self.forward(&mut buf, &mut scratch);
        // Parseval: Σ|ψ|² dz = Σ|ψ̂|² dz / n
        let kinetic = buf
            .iter()
            .zip(self.grid.wavenumbers())
            .map(|(c, k)| HBAR * HBAR * k * k / (2.0 * self.mass) * c.norm_sqr())
            .sum::<f64>()
            * dz
            / n;
        let g_n = 2.0 * HBAR * self.omega_r * a * state.atom_number;
        let pot = state
            .psi
            .iter()
            .zip(self.grid.positions())
            .map(|(c, &z)| {
                let d = c.norm_sqr();
                potential.value(self.mass, z) * d + 0.5 * g_n * d * d
            })
            .sum::<f64>()
            * dz;
        kinetic + pot
    }

    /// rms velocity spread ħ Δk / m of the state.
    pub fn velocity_spread(&self, state: &WaveState) -> f64 {
        let mut buf = state.psi.clone();
        let mut scratch = self.scratch();
        self.forward(&mut buf, &mut scratch);
        let mut m0 = 0.0;
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for (c, &k) in buf.iter().zip(self.grid.wavenumbers()) {
            let p = c.norm_sqr();
            m0 += p;
            m1 += p * k;
            m2 += p * k * k;
        }
        let mean = m1 / m0;
        HBAR / self.mass * (m2 / m0 - mean * mean).max(0.0).sqrt()
    }

    /// Largest rms width expected over `duration` from linear dynamics in
    /// the harmonic part of the potential, with the released interaction
    /// energy added to the velocity spread for repulsive schedules.
    pub fn expected_max_width(
        &self,
        state: &WaveState,
        potential: &AxialPotential,
        schedule: &ScatteringSchedule,
        duration: f64,
    ) -> f64 {
        let sigma0 = rms_width(state, &self.grid);
        let mut sigma_v = self.velocity_spread(state);
        let a_max = schedule.max_value();
        if a_max > 0.0 {
            let g_n = 2.0 * HBAR * self.omega_r * a_max * state.atom_number;
            let interaction =
                0.5 * g_n * state.psi.iter().map(|c| c.norm_sqr().powi(2)).sum::<f64>() * self.grid.spacing();
            sigma_v = sigma_v.hypot((2.0 * interaction / self.mass).sqrt());
        }
        let w2 = potential.omega_z_sq;
        let (growth, drift) = if w2 < 0.0 {
            let w = (-w2).sqrt();
            ((w * duration).cosh(), (w * duration).sinh() / w)
        } else if w2 > 0.0 {
            let w = w2.sqrt();
            (1.0, (1.0 / w).min(duration))
        } else {
            (1.0, duration)
        };
        (sigma0 * growth).hypot(sigma_v * drift)
    }

    fn check_window(
        &self,
        state: &WaveState,
        potential: &AxialPotential,
        schedule: &ScatteringSchedule,
        duration: f64,
    ) -> Result<()> {
        let expected = self.expected_max_width(state, potential, schedule, duration);
        if self.grid.extent() < WINDOW_FACTOR * expected {
            return Err(Error::Window(format!(
                "extent {:.1} μm is below {WINDOW_FACTOR}× the expected maximum width {:.1} μm",
                self.grid.extent() * 1e6,
                expected * 1e6
            )));
        }
        Ok(())
    }

    /// Wavenumber `√(2mμ)/ħ` that the peak mean-field energy μ can release,
    /// for the most repulsive value in the schedule (zero if none).
    pub fn interaction_wavenumber(&self, state: &WaveState, schedule: &ScatteringSchedule) -> f64 {
        let a_max = schedule.max_value();
        if !(a_max > 0.0) {
            return 0.0;
        }
        let mu = 2.0 * HBAR * self.omega_r * a_max * state.atom_number * state.peak_density();
        (2.0 * self.mass * mu).sqrt() / HBAR
    }

    fn check_interaction_resolution(&self, state: &WaveState, schedule: &ScatteringSchedule) -> Result<()> {
        let k = self.interaction_wavenumber(state, schedule);
        if k > 0.5 * self.grid.k_max() {
            return Err(Error::Resolution(format!(
                "mean-field wavenumber {k:.3e} rad/m exceeds half the grid limit {:.3e} rad/m",
                self.grid.k_max()
            )));
        }
        Ok(())
    }

    fn check_state(&self, state: &WaveState) -> Result<()> {
        if state.psi.len() != self.grid.len() {
            return Err(Error::Domain("state does not live on this grid".into()));
        }
        if !(state.atom_number > 0.0) {
            return Err(Error::Domain("atom number must be positive".into()));
        }
        Ok(())
    }

    /// Real-time evolution by `duration`. The step is shrunk so that an
    /// integer number of steps no longer than `dt` spans the duration.
    pub fn evolve(
        &self,
        state: &WaveState,
        potential: &AxialPotential,
        schedule: &ScatteringSchedule,
        duration: f64,
        dt: f64,
    ) -> Result<WaveState> {
        let mut out = state.clone();
        self.evolve_observed(&mut out, potential, schedule, &[duration], dt, |_, _| {})?;
        Ok(out)
    }

    /// Evolves through the increasing offsets `checkpoints` (relative to
    /// the state's clock), calling `observe(index, state)` at each one. The
    /// state ends at the last checkpoint.
    pub fn evolve_observed<F>(
        &self,
        state: &mut WaveState,
        potential: &AxialPotential,
        schedule: &ScatteringSchedule,
        checkpoints: &[f64],
        dt: f64,
        mut observe: F,
    ) -> Result<()>
    where
        F: FnMut(usize, &WaveState),
    {
        self.check_state(state)?;
        potential.validate()?;
        self.check_time_step(dt)?;
        if checkpoints.iter().any(|&t| !(t >= 0.0) || !t.is_finite()) {
            return Err(Error::Domain("durations must be non-negative".into()));
        }
        if checkpoints.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Domain("sample times must be increasing".into()));
        }
        let total = checkpoints.last().copied().unwrap_or(0.0);
        self.check_window(state, potential, schedule, total)?;
        self.check_interaction_resolution(state, schedule)?;

        let n_total = (total / dt).ceil().max(if total > 0.0 { 1.0 } else { 0.0 }) as usize;
        let step = if n_total > 0 { total / n_total as f64 } else { dt };
        let kin = self.kinetic_factors(step, 0.0);
        let vphase: Vec<f64> = self
            .potential_values(potential)
            .iter()
            .map(|v| v * step / HBAR)
            .collect();
        let g_phase = 2.0 * HBAR * self.omega_r * state.atom_number * step / HBAR;
        let peak0 = state.peak_density();
        let peak_limit = (COLLAPSE_FACTOR * peak0).min(1.0 / (2.0 * MIN_RESOLVED_LENGTH * self.grid.spacing()));
        let t0 = state.time;
        let mut scratch = self.scratch();

        let mut done = 0usize;
        for (idx, &target) in checkpoints.iter().enumerate() {
            let upto = if n_total > 0 {
                ((target / total) * n_total as f64).round() as usize
            } else {
                0
            };
            let steps = upto.saturating_sub(done);
            if steps > 0 {
                self.run_steps(
                    state,
                    steps,
                    done,
                    step,
                    t0,
                    &kin,
                    &vphase,
                    g_phase,
                    schedule,
                    peak0,
                    peak_limit,
                    &mut scratch,
                )?;
                done = upto;
            }
            observe(idx, state);
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn run_steps(
        &self,
        state: &mut WaveState,
        steps: usize,
        first_index: usize,
        step: f64,
        t0: f64,
        kin: &KineticFactors,
        vphase: &[f64],
        g_phase: f64,
        schedule: &ScatteringSchedule,
        peak0: f64,
        peak_limit: f64,
        scratch: &mut [Complex64],
    ) -> Result<()> {
        let psi = &mut state.psi;
        self.forward(psi, scratch);
        mul_assign(psi, &kin.half);
        self.inverse(psi, scratch);
        for j in 0..steps {
            let t_mid = t0 + (first_index + j) as f64 * step + 0.5 * step;
            let g = g_phase * schedule.at(t_mid);
            let mut peak: f64 = 0.0;
            for (c, &v) in psi.iter_mut().zip(vphase) {
                let d = c.norm_sqr();
                peak = peak.max(d);
                *c *= Complex64::cis(-(v + g * d));
            }
            if !peak.is_finite() || peak > peak_limit {
                state.time = t0 + (first_index + j) as f64 * step;
                return Err(Error::BlowUp {
                    time: state.time,
                    reason: if peak.is_finite() {
                        format!("peak density grew {:.0}× and is no longer resolved", peak / peak0)
                    } else {
                        "non-finite amplitude".into()
                    },
                });
            }
            self.forward(psi, scratch);
            if j + 1 == steps {
                mul_assign(psi, &kin.half);
            } else {
                mul_assign(psi, &kin.full);
            }
            self.inverse(psi, scratch);
        }
        state.time = t0 + (first_index + steps) as f64 * step;
        Ok(())
    }

    /// Imaginary-time relaxation to the ground state of a confining
    /// potential at scattering length `a`. Stops once the relative energy
    /// change per step drops below `tol`.
    pub fn ground_state(&self, potential: &AxialPotential, a: f64, atom_number: f64, tol: f64) -> Result<GroundState> {
        if !(potential.omega_z_sq > 0.0) {
            return Err(Error::NonConfining(format!(
                "ω_z² = {} rad²/s² does not confine",
                potential.omega_z_sq
            )));
        }
        if !(tol > 0.0) {
            return Err(Error::Domain("tolerance must be positive".into()));
        }
        potential.validate()?;
        let omega = potential.omega_z_sq.sqrt();
        let sigma_ho = (HBAR / (2.0 * self.mass * omega)).sqrt();
        // seed wide enough for Thomas-Fermi clouds
        let seed_sigma = if a > 0.0 {
            let g_n = 2.0 * HBAR * self.omega_r * a * atom_number;
            let r_tf = (3.0 * g_n / (2.0 * self.mass * potential.omega_z_sq)).cbrt();
            sigma_ho.max(r_tf / 5f64.sqrt())
        } else {
            sigma_ho
        };
        let mut state = gaussian_state(&self.grid, seed_sigma.max(3.0 * self.grid.spacing()), 0.0, atom_number)?;

        let dtau = 0.02 / omega;
        let norm = 1.0 / self.grid.len() as f64;
        let c = HBAR / (2.0 * self.mass);
        let kin: Vec<Complex64> = self
            .grid
            .wavenumbers()
            .iter()
            .map(|&k| Complex64::new(norm * (-c * k * k * 0.5 * dtau).exp(), 0.0))
            .collect();
        let v: Vec<f64> = self
            .potential_values(potential)
            .iter()
            .map(|v| v * dtau / HBAR)
            .collect();
        let g = 2.0 * HBAR * self.omega_r * a * atom_number * dtau / HBAR;
        let mut scratch = self.scratch();
        let mut energies = vec![self.energy(&state, potential, a)];
        const MAX_STEPS: usize = 200_000;
        for it in 0..MAX_STEPS {
            let psi = &mut state.psi;
            self.forward(psi, &mut scratch);
            mul_assign(psi, &kin);
            self.inverse(psi, &mut scratch);
            for (c, &vi) in psi.iter_mut().zip(&v) {
                let d = c.norm_sqr();
                *c *= (-(vi + g * d)).exp();
            }
            self.forward(psi, &mut scratch);
            mul_assign(psi, &kin);
            self.inverse(psi, &mut scratch);
            state.normalize(&self.grid);
            let e = self.energy(&state, potential, a);
            let prev = *energies.last().unwrap();
            energies.push(e);
            if !e.is_finite() {
                return Err(Error::NoConvergence {
                    iterations: it,
                    last: vec![e],
                    residual: f64::NAN,
                });
            }
            if (e - prev).abs() < tol * e.abs() {
                state.time = 0.0;
                return Ok(GroundState { state, energies });
            }
        }
        Err(Error::NoConvergence {
            iterations: MAX_STEPS,
            last: vec![*energies.last().unwrap()],
            residual: f64::NAN,
        })
    }

    /// rms widths at `sample_times` (offsets from the state's clock) during
    /// a single run at constant scattering length `a`.
    pub fn expansion_series(
        &self,
        initial: &WaveState,
        potential: &AxialPotential,
        a: f64,
        sample_times: &[f64],
        dt: f64,
    ) -> Result<Vec<(f64, f64)>> {
        let mut state = initial.clone();
        let mut out = Vec::with_capacity(sample_times.len());
        let schedule = ScatteringSchedule::constant(a);
        self.evolve_observed(&mut state, potential, &schedule, sample_times, dt, |i, s| {
            out.push((sample_times[i], rms_width(s, &self.grid)));
        })?;
        Ok(out)
    }

    /// Final rms width after holding at constant `a` for `hold_time`.
    pub fn width_after_hold(
        &self,
        initial: &WaveState,
        potential: &AxialPotential,
        a: f64,
        hold_time: f64,
        dt: f64,
    ) -> Result<f64> {
        let s = self.evolve(initial, potential, &ScatteringSchedule::constant(a), hold_time, dt)?;
        Ok(rms_width(&s, &self.grid))
    }

    /// Scans `a` over `a_range` (`coarse_points` evenly spaced values), then
    /// refines around the narrowest coarse point by golden-section search.
    pub fn find_soliton_parameter(
        &self,
        initial: &WaveState,
        potential: &AxialPotential,
        search: &SolitonSearch,
    ) -> Result<SolitonParameter> {
        let (lo, hi) = search.a_range;
        if !(hi > lo) {
            return Err(Error::Domain("scattering-length range must be increasing".into()));
        }
        if search.coarse_points < 3 {
            return Err(Error::Domain("coarse scan needs at least 3 points".into()));
        }
        if !(search.hold_time >= 0.0) {
            return Err(Error::Domain("hold time must be non-negative".into()));
        }
        let step = (hi - lo) / (search.coarse_points - 1) as f64;
        let grid_a: Vec<f64> = (0..search.coarse_points).map(|i| lo + step * i as f64).collect();
        let widths: Vec<f64> = grid_a
            .par_iter()
            .map(|&a| self.width_after_hold(initial, potential, a, search.hold_time, search.dt))
            .collect::<Result<_>>()?;
        let scan: Vec<(f64, f64)> = grid_a.iter().cloned().zip(widths.iter().cloned()).collect();

        let best = argmin(&widths);
        let at_boundary = best == 0 || best + 1 == widths.len();
        if at_boundary {
            return Ok(SolitonParameter {
                a_s: grid_a[best],
                width: widths[best],
                scan,
                scan_step: step,
                boundary_warning: true,
            });
        }

        // golden-section on [a_{i-1}, a_{i+1}]
        let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
        let (mut a, mut b) = (grid_a[best - 1], grid_a[best + 1]);
        let mut c = b - inv_phi * (b - a);
        let mut d = a + inv_phi * (b - a);
        let f = |x: f64| self.width_after_hold(initial, potential, x, search.hold_time, search.dt);
        let mut fc = f(c)?;
        let mut fd = f(d)?;
        for _ in 0..search.refine_iterations {
            if fc < fd {
                b = d;
                d = c;
                fd = fc;
                c = b - inv_phi * (b - a);
                fc = f(c)?;
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + inv_phi * (b - a);
                fd = f(d)?;
            }
        }
        // keep the best evaluated point, including the coarse winner
        let mut candidates = [(grid_a[best], widths[best]), (c, fc), (d, fd)];
        candidates.sort_by(|x, y| x.1.total_cmp(&y.1));
        Ok(SolitonParameter {
            a_s: candidates[0].0,
            width: candidates[0].1,
            scan,
            scan_step: step,
            boundary_warning: false,
        })
    }
}

fn argmin(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x < v[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn mul_assign(a: &mut [Complex64], b: &[Complex64]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x *= *y;
    }
}

/// Ground state and the energy recorded after every imaginary-time step.
#[derive(Debug, Clone)]
pub struct GroundState {
    pub state: WaveState,
    pub energies: Vec<f64>,
}

/// Settings for [`Solver::find_soliton_parameter`].
#[derive(Debug, Clone, PartialEq)]
pub struct SolitonSearch {
    pub a_range: (f64, f64),
    pub coarse_points: usize,
    pub refine_iterations: usize,
    pub hold_time: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolitonParameter {
    pub a_s: f64,
    pub width: f64,
    /// Coarse scan `(a, final width)`, ordered by a.
    pub scan: Vec<(f64, f64)>,
    pub scan_step: f64,
    /// Set when the narrowest coarse point sits at either end of the range.
    pub boundary_warning: bool,
}

impl SolitonParameter {
    pub fn width_at(&self, a: f64) -> Option<f64> {
        self.scan
            .iter()
            .find(|(x, _)| (x - a).abs() < 1e-9 * self.scan_step.abs())
            .map(|p| p.1)
    }
}

/// `t_ms,width_um` CSV for an expansion series.
pub fn write_series_csv<W: Write>(mut w: W, series: &[(f64, f64)]) -> Result<()> {
    crate::io::write_schema_header(&mut w, "expansion-series")?;
    writeln!(w, "t_ms,width_um")?;
    for (t, s) in series {
        writeln!(w, "{:.9},{:.9}", t * 1e3, s * 1e6)?;
    }
    Ok(())
}
